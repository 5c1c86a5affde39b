//! Sequential-recombination clustering and Lund-tree extraction.
//!
//! Constituents are massless `(pt, y, phi)` particles. [`cluster`] runs the
//! generalised-kt family (`p = -1` anti-kt, `p = 0` Cambridge/Aachen) with
//! E-scheme recombination and keeps the full merge history on every
//! [`PseudoJet`]. [`extract_lund_tree`] walks a C/A history from the root,
//! trims splittings below a `ln kt` threshold and records the surviving
//! splittings in a fixed-shape breadth-first [`LundTree`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// Normalisation of the angular Lund coordinate, `x1 = ln(R0 / dR)`.
pub const LUND_R0: f64 = 1.0;

/// Radius used when re-clustering a jet's constituents with C/A so that
/// every constituent ends up in one history.
pub const RECLUSTER_RADIUS: f64 = 1000.0;

/// Relative window inside which two clustering distances count as tied.
pub const DISTANCE_TIE_TOLERANCE: f64 = 1e-12;

const MAX_RAPIDITY: f64 = 1e5;

/// Maps an azimuth into `[-pi, pi)`.
pub fn wrap_phi(phi: f64) -> f64 {
    let mut x = (phi + PI).rem_euclid(TWO_PI) - PI;
    if x >= PI {
        x -= TWO_PI;
    }
    x
}

/// Azimuthal difference `a - b` wrapped into `(-pi, pi]`.
///
/// In-range differences are returned as computed, so `delta_phi(a, b)` is
/// exactly `-delta_phi(b, a)` away from the branch cut.
pub fn delta_phi(a: f64, b: f64) -> f64 {
    let raw = a - b;
    if raw > -PI && raw <= PI {
        return raw;
    }
    let mut d = raw.rem_euclid(TWO_PI);
    if d >= TWO_PI {
        d -= TWO_PI;
    }
    if d > PI {
        d - TWO_PI
    } else {
        d
    }
}

/// A massless jet constituent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub pt: f64,
    pub y: f64,
    pub phi: f64,
}

impl Particle {
    /// Builds a particle, normalising `phi` into `[-pi, pi)`.
    pub fn new(pt: f64, y: f64, phi: f64) -> Result<Self> {
        let p = Particle {
            pt,
            y,
            phi: if phi.is_finite() { wrap_phi(phi) } else { phi },
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pt.is_finite() && self.y.is_finite() && self.phi.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite particle momentum (pt={}, y={}, phi={})",
                self.pt, self.y, self.phi
            )));
        }
        if self.pt <= 0.0 {
            return Err(Error::validation(format!(
                "particle pt must be positive, got {}",
                self.pt
            )));
        }
        Ok(())
    }

    /// Four-momentum `[px, py, pz, E]` of the massless particle.
    pub fn four_momentum(&self) -> [f64; 4] {
        [
            self.pt * self.phi.cos(),
            self.pt * self.phi.sin(),
            self.pt * self.y.sinh(),
            self.pt * self.y.cosh(),
        ]
    }
}

/// A four-momentum together with the constituents it was built from and,
/// for merged objects, the two pseudojets it was merged from.
#[derive(Clone, Debug)]
pub struct PseudoJet {
    px: f64,
    py: f64,
    pz: f64,
    e: f64,
    rap: f64,
    phi: f64,
    constituents: Vec<usize>,
    children: Option<Box<(PseudoJet, PseudoJet)>>,
}

impl PseudoJet {
    /// Leaf pseudojet for constituent `id`.
    pub fn from_particle(id: usize, p: &Particle) -> Self {
        let [px, py, pz, e] = p.four_momentum();
        PseudoJet {
            px,
            py,
            pz,
            e,
            rap: p.y,
            phi: wrap_phi(p.phi),
            constituents: vec![id],
            children: None,
        }
    }

    /// E-scheme recombination; `a` and `b` become the children.
    pub fn merge(a: PseudoJet, b: PseudoJet) -> Self {
        let px = a.px + b.px;
        let py = a.py + b.py;
        let pz = a.pz + b.pz;
        let e = a.e + b.e;
        let mut constituents = Vec::with_capacity(a.constituents.len() + b.constituents.len());
        constituents.extend_from_slice(&a.constituents);
        constituents.extend_from_slice(&b.constituents);
        constituents.sort_unstable();
        PseudoJet {
            px,
            py,
            pz,
            e,
            rap: rapidity_of(px, py, pz, e),
            phi: wrap_phi(py.atan2(px)),
            constituents,
            children: Some(Box::new((a, b))),
        }
    }

    pub fn px(&self) -> f64 {
        self.px
    }

    pub fn py(&self) -> f64 {
        self.py
    }

    pub fn pz(&self) -> f64 {
        self.pz
    }

    pub fn e(&self) -> f64 {
        self.e
    }

    pub fn four_momentum(&self) -> [f64; 4] {
        [self.px, self.py, self.pz, self.e]
    }

    pub fn pt2(&self) -> f64 {
        self.px * self.px + self.py * self.py
    }

    pub fn pt(&self) -> f64 {
        self.pt2().sqrt()
    }

    pub fn rapidity(&self) -> f64 {
        self.rap
    }

    /// Azimuth in `[-pi, pi)`.
    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn pseudorapidity(&self) -> f64 {
        let p = (self.pt2() + self.pz * self.pz).sqrt();
        if p == self.pz.abs() {
            return MAX_RAPIDITY.copysign(self.pz);
        }
        0.5 * ((p + self.pz) / (p - self.pz)).ln()
    }

    /// Invariant mass; small negative `m^2` from rounding is clamped to zero.
    pub fn mass(&self) -> f64 {
        let m2 = self.e * self.e - self.pt2() - self.pz * self.pz;
        m2.max(0.0).sqrt()
    }

    /// Sorted indices into the originating particle list.
    pub fn constituents(&self) -> &[usize] {
        &self.constituents
    }

    pub fn children(&self) -> Option<(&PseudoJet, &PseudoJet)> {
        self.children.as_deref().map(|(a, b)| (a, b))
    }

    pub fn has_history(&self) -> bool {
        self.children.is_some()
    }

    pub fn delta_r2(&self, other: &PseudoJet) -> f64 {
        let dy = self.rap - other.rap;
        let dphi = delta_phi(self.phi, other.phi);
        dy * dy + dphi * dphi
    }

    pub fn delta_r(&self, other: &PseudoJet) -> f64 {
        self.delta_r2(other).sqrt()
    }

    fn remap_constituents(&mut self, ids: &[usize]) {
        for c in &mut self.constituents {
            *c = ids[*c];
        }
        self.constituents.sort_unstable();
        if let Some(children) = self.children.as_deref_mut() {
            children.0.remap_constituents(ids);
            children.1.remap_constituents(ids);
        }
    }
}

fn rapidity_of(px: f64, py: f64, pz: f64, e: f64) -> f64 {
    let pt2 = px * px + py * py;
    if e <= pz.abs() && pt2 == 0.0 {
        return MAX_RAPIDITY.copysign(pz);
    }
    let y = 0.5 * ((e + pz) / (e - pz)).ln();
    if y.is_finite() {
        y
    } else {
        MAX_RAPIDITY.copysign(pz)
    }
}

/// Per-object state used by the clustering loop.
struct Slot {
    jet: PseudoJet,
    /// `pt^(2p)`, which is also the beam distance.
    momentum_factor: f64,
    nn_dist: f64,
    nn_index: usize,
}

fn momentum_factor(jet: &PseudoJet, p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else {
        jet.pt2().powf(p)
    }
}

fn pair_distance(a: &Slot, b: &Slot, inv_r2: f64) -> f64 {
    a.momentum_factor.min(b.momentum_factor) * a.jet.delta_r2(&b.jet) * inv_r2
}

/// Inclusive generalised-kt clustering with E-scheme recombination.
///
/// `d_ij = min(pt_i^2p, pt_j^2p) dR_ij^2 / R^2` and `d_iB = pt_i^2p`. At each
/// step the smallest distance wins; candidates within
/// [`DISTANCE_TIE_TOLERANCE`] of the minimum are resolved by the
/// lexicographically smallest slot pair `(i, j)`, a beam candidate counting
/// as `(i, i)`. A merged object occupies the lower slot of its pair.
///
/// Returns every beam-merged pseudojet, sorted by descending pt.
pub fn cluster(particles: &[Particle], radius: f64, p: f64) -> Result<Vec<PseudoJet>> {
    let ids: Vec<usize> = (0..particles.len()).collect();
    cluster_with_ids(particles, &ids, radius, p)
}

fn cluster_with_ids(
    particles: &[Particle],
    ids: &[usize],
    radius: f64,
    p: f64,
) -> Result<Vec<PseudoJet>> {
    if particles.is_empty() {
        return Err(Error::domain("cannot cluster an empty particle list"));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::domain(format!("radius must be positive, got {radius}")));
    }
    if !p.is_finite() {
        return Err(Error::domain(format!("non-finite clustering exponent {p}")));
    }
    for particle in particles {
        particle.validate()?;
    }
    let inv_r2 = 1.0 / (radius * radius);

    let mut slots: Vec<Option<Slot>> = particles
        .iter()
        .zip(ids)
        .map(|(particle, &id)| {
            let jet = PseudoJet::from_particle(id, particle);
            let momentum_factor = momentum_factor(&jet, p);
            Some(Slot {
                jet,
                momentum_factor,
                nn_dist: f64::INFINITY,
                nn_index: usize::MAX,
            })
        })
        .collect();
    let n = slots.len();
    for i in 0..n {
        refresh_nn(&mut slots, i, inv_r2);
    }

    let mut jets = Vec::with_capacity(n);
    let mut alive = n;
    while alive > 0 {
        let mut best = f64::INFINITY;
        for s in slots.iter().flatten() {
            best = best.min(s.nn_dist).min(s.momentum_factor);
        }
        let threshold = best + DISTANCE_TIE_TOLERANCE * best.abs();
        let (i, j) = select_candidate(&slots, threshold, inv_r2);
        alive -= 1;

        if i == j {
            let slot = slots[i].take().expect("selected slot is alive");
            jets.push(slot.jet);
            for k in 0..n {
                if slots[k].as_ref().is_some_and(|s| s.nn_index == i) {
                    refresh_nn(&mut slots, k, inv_r2);
                }
            }
            continue;
        }

        let a = slots[i].take().expect("selected slot is alive");
        let b = slots[j].take().expect("selected slot is alive");
        let jet = PseudoJet::merge(a.jet, b.jet);
        slots[i] = Some(Slot {
            momentum_factor: momentum_factor(&jet, p),
            jet,
            nn_dist: f64::INFINITY,
            nn_index: usize::MAX,
        });
        refresh_nn(&mut slots, i, inv_r2);
        for k in 0..n {
            if k == i {
                continue;
            }
            let Some(sk) = slots[k].as_ref() else { continue };
            if sk.nn_index == i || sk.nn_index == j {
                refresh_nn(&mut slots, k, inv_r2);
            } else {
                let d = pair_distance(sk, slots[i].as_ref().expect("alive"), inv_r2);
                let sk = slots[k].as_mut().expect("alive");
                if d < sk.nn_dist {
                    sk.nn_dist = d;
                    sk.nn_index = i;
                }
            }
        }
    }

    jets.sort_by(|a, b| b.pt2().total_cmp(&a.pt2()));
    Ok(jets)
}

/// Recomputes the nearest neighbour of slot `i` (exact minimum distance).
fn refresh_nn(slots: &mut [Option<Slot>], i: usize, inv_r2: f64) {
    let Some(si) = slots[i].as_ref() else {
        return;
    };
    let mut best = f64::INFINITY;
    let mut best_index = usize::MAX;
    for (j, sj) in slots.iter().enumerate() {
        if j == i {
            continue;
        }
        if let Some(sj) = sj {
            let d = pair_distance(si, sj, inv_r2);
            if d < best {
                best = d;
                best_index = j;
            }
        }
    }
    let si = slots[i].as_mut().expect("checked above");
    si.nn_dist = best;
    si.nn_index = best_index;
}

fn select_candidate(slots: &[Option<Slot>], threshold: f64, inv_r2: f64) -> (usize, usize) {
    for (i, si) in slots.iter().enumerate() {
        let Some(si) = si else { continue };
        if si.momentum_factor <= threshold {
            return (i, i);
        }
        // nn_dist is the exact minimum over all partners, so nothing with
        // first index i can qualify when it is above the threshold.
        if si.nn_dist > threshold {
            continue;
        }
        for (j, sj) in slots.iter().enumerate().skip(i + 1) {
            if let Some(sj) = sj {
                if pair_distance(si, sj, inv_r2) <= threshold {
                    return (i, j);
                }
            }
        }
    }
    unreachable!("the minimum distance always has a candidate")
}

/// Re-clusters the constituents of `jet` with Cambridge/Aachen so that all of
/// them share one history. Constituent ids refer to `particles`.
pub fn recluster_ca(jet: &PseudoJet, particles: &[Particle]) -> Result<PseudoJet> {
    let ids = jet.constituents();
    let mut subset = Vec::with_capacity(ids.len());
    for &id in ids {
        let p = particles.get(id).ok_or_else(|| {
            Error::usage(format!(
                "constituent id {id} out of range for {} particles",
                particles.len()
            ))
        })?;
        subset.push(*p);
    }
    let local: Vec<usize> = (0..subset.len()).collect();
    let mut jets = cluster_with_ids(&subset, &local, RECLUSTER_RADIUS, 0.0)?;
    if jets.len() != 1 {
        return Err(Error::domain(format!(
            "C/A re-clustering produced {} jets instead of one",
            jets.len()
        )));
    }
    let mut jet = jets.pop().expect("one jet");
    jet.remap_constituents(ids);
    Ok(jet)
}

/// One node of a Lund tree. `(0, 0)` marks an absent splitting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LundNode {
    /// `ln(R0 / dR)`
    pub x1: f64,
    /// `ln(1 / z)`
    pub x2: f64,
}

impl LundNode {
    pub const EMPTY: LundNode = LundNode { x1: 0.0, x2: 0.0 };

    pub fn new(x1: f64, x2: f64) -> Self {
        LundNode { x1, x2 }
    }

    pub fn is_occupied(&self) -> bool {
        !(self.x1 == 0.0 && self.x2 == 0.0)
    }
}

/// Number of nodes in a complete binary tree of the given depth.
pub fn node_count(depth: usize) -> usize {
    (1usize << depth) - 1
}

/// Label of breadth-first node `index`: level then position, e.g. `11`, `21`, `34`.
pub fn node_label(index: usize) -> String {
    let level = usize::BITS - (index + 1).leading_zeros();
    let first = (1usize << (level - 1)) - 1;
    format!("{}{}", level, index - first + 1)
}

/// Largest supported tree depth.
pub const MAX_DEPTH: usize = 16;

/// Fixed-shape Lund tree in breadth-first order; node `i` has children
/// `2i + 1` (harder prong) and `2i + 2` (softer prong).
#[derive(Clone, Debug, PartialEq)]
pub struct LundTree {
    depth: usize,
    nodes: Vec<LundNode>,
}

impl LundTree {
    pub fn empty(depth: usize) -> Result<Self> {
        check_depth(depth)?;
        Ok(LundTree {
            depth,
            nodes: vec![LundNode::EMPTY; node_count(depth)],
        })
    }

    /// Builds a tree from breadth-first nodes, checking length, finiteness and
    /// that no occupied node hangs below an unoccupied one.
    pub fn from_nodes(depth: usize, nodes: Vec<LundNode>) -> Result<Self> {
        check_depth(depth)?;
        if nodes.len() != node_count(depth) {
            return Err(Error::validation(format!(
                "depth {depth} tree needs {} nodes, got {}",
                node_count(depth),
                nodes.len()
            )));
        }
        for (i, node) in nodes.iter().enumerate() {
            if !(node.x1.is_finite() && node.x2.is_finite()) {
                return Err(Error::validation(format!("node {} is not finite", node_label(i))));
            }
            if i > 0 && node.is_occupied() && !nodes[(i - 1) / 2].is_occupied() {
                return Err(Error::validation(format!(
                    "node {} is occupied below an empty parent",
                    node_label(i)
                )));
            }
        }
        Ok(LundTree { depth, nodes })
    }

    /// Inverse of [`LundTree::flatten`].
    pub fn from_flat(depth: usize, features: &[f64]) -> Result<Self> {
        if features.len() != 2 * node_count(depth.min(MAX_DEPTH)) {
            return Err(Error::validation(format!(
                "expected {} features for depth {depth}, got {}",
                2 * node_count(depth.min(MAX_DEPTH)),
                features.len()
            )));
        }
        let nodes = features
            .chunks_exact(2)
            .map(|c| LundNode::new(c[0], c[1]))
            .collect();
        Self::from_nodes(depth, nodes)
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn nodes(&self) -> &[LundNode] {
        &self.nodes
    }

    pub fn node(&self, index: usize) -> LundNode {
        self.nodes[index]
    }

    pub fn occupied_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_occupied()).count()
    }

    /// Breadth-first `[x1, x2]` pairs, `2 (2^D - 1)` values.
    pub fn flatten(&self) -> Vec<f64> {
        self.nodes.iter().flat_map(|n| [n.x1, n.x2]).collect()
    }
}

fn check_depth(depth: usize) -> Result<()> {
    if depth == 0 || depth > MAX_DEPTH {
        return Err(Error::config(format!(
            "tree depth must be in 1..={MAX_DEPTH}, got {depth}"
        )));
    }
    Ok(())
}

/// Kinematics of one declustering step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Splitting {
    pub delta_r: f64,
    /// Softer-prong pt fraction, at most 1/2.
    pub z: f64,
    /// Softer-prong pt times `delta_r`.
    pub kt: f64,
}

impl Splitting {
    pub fn x1(&self) -> f64 {
        (LUND_R0 / self.delta_r).ln()
    }

    pub fn x2(&self) -> f64 {
        (1.0 / self.z).ln()
    }

    pub fn node(&self) -> LundNode {
        LundNode::new(self.x1(), self.x2())
    }
}

/// Orders two prongs as `(harder, softer)` by pt; ties keep the given order.
pub fn order_prongs<'a>(a: &'a PseudoJet, b: &'a PseudoJet) -> (&'a PseudoJet, &'a PseudoJet) {
    if b.pt2() > a.pt2() {
        (b, a)
    } else {
        (a, b)
    }
}

pub fn splitting(harder: &PseudoJet, softer: &PseudoJet) -> Splitting {
    let pt_s = softer.pt();
    let pt_h = harder.pt();
    let delta_r = harder.delta_r(softer);
    Splitting {
        delta_r,
        z: pt_s / (pt_s + pt_h),
        kt: pt_s * delta_r,
    }
}

/// Declusters a C/A history into a depth-`depth` Lund tree.
///
/// At every slot the walk follows the harder prong through splittings with
/// `ln kt <= ln_kt_cut`; the first splitting above the cut is recorded and
/// the harder and softer prongs continue into the first and second child
/// slots. Slots that are never reached stay `(0, 0)`.
pub fn extract_lund_tree(jet: &PseudoJet, depth: usize, ln_kt_cut: f64) -> Result<LundTree> {
    if !jet.has_history() && jet.constituents().len() > 1 {
        return Err(Error::usage(format!(
            "jet with {} constituents carries no clustering history",
            jet.constituents().len()
        )));
    }
    let mut tree = LundTree::empty(depth)?;
    fill_slot(jet, 0, &mut tree.nodes, ln_kt_cut);
    Ok(tree)
}

fn fill_slot(jet: &PseudoJet, slot: usize, nodes: &mut [LundNode], ln_kt_cut: f64) {
    if slot >= nodes.len() {
        return;
    }
    let mut current = jet;
    while let Some((a, b)) = current.children() {
        let (harder, softer) = order_prongs(a, b);
        let split = splitting(harder, softer);
        if split.kt.ln() > ln_kt_cut {
            nodes[slot] = split.node();
            fill_slot(harder, 2 * slot + 1, nodes, ln_kt_cut);
            fill_slot(softer, 2 * slot + 2, nodes, ln_kt_cut);
            return;
        }
        current = harder;
    }
}

/// Settings for the event-to-tree pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LundConfig {
    /// Anti-kt jet radius.
    pub radius: f64,
    pub depth: usize,
    pub ln_kt_cut: f64,
    /// Optional `[low, high]` jet-mass window in GeV.
    pub mass_window: Option<(f64, f64)>,
}

impl Default for LundConfig {
    fn default() -> Self {
        LundConfig {
            radius: 0.8,
            depth: 3,
            ln_kt_cut: 1.0,
            mass_window: None,
        }
    }
}

impl LundConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::config(format!("radius must be positive, got {}", self.radius)));
        }
        check_depth(self.depth)?;
        if !self.ln_kt_cut.is_finite() {
            return Err(Error::config("ln kt cut must be finite"));
        }
        if let Some((lo, hi)) = self.mass_window {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::config(format!("invalid mass window {lo}:{hi}")));
            }
        }
        Ok(())
    }
}

/// Hardest anti-kt jet of the event.
pub fn leading_jet(particles: &[Particle], radius: f64) -> Result<PseudoJet> {
    let mut jets = cluster(particles, radius, -1.0)?;
    Ok(jets.swap_remove(0))
}

/// Anti-kt jet finding, optional mass window, C/A re-clustering and tree
/// extraction. `None` when the leading jet fails the mass window.
pub fn event_to_tree(particles: &[Particle], config: &LundConfig) -> Result<Option<LundTree>> {
    config.validate()?;
    let jet = leading_jet(particles, config.radius)?;
    if let Some((lo, hi)) = config.mass_window {
        let m = jet.mass();
        if !(lo..=hi).contains(&m) {
            return Ok(None);
        }
    }
    let ca = recluster_ca(&jet, particles)?;
    extract_lund_tree(&ca, config.depth, config.ln_kt_cut).map(Some)
}
