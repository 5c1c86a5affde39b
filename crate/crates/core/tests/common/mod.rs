//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls into the simulator or the clusterer under test: gates
//! are dense `2^n x 2^n` matrices and clustering rescans every pair.

#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qttn_core::jets::{LundNode, LundTree, Particle};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- dense oracle

pub type M2 = [[C; 2]; 2];

pub fn ry(t: f64) -> M2 {
    let (c, s) = ((t / 2.0).cos(), (t / 2.0).sin());
    [[C::new(c, 0.0), C::new(-s, 0.0)], [C::new(s, 0.0), C::new(c, 0.0)]]
}

pub fn rz(t: f64) -> M2 {
    [
        [C::from_polar(1.0, -t / 2.0), C::new(0.0, 0.0)],
        [C::new(0.0, 0.0), C::from_polar(1.0, t / 2.0)],
    ]
}

pub fn rx(t: f64) -> M2 {
    let (c, s) = ((t / 2.0).cos(), (t / 2.0).sin());
    [[C::new(c, 0.0), C::new(0.0, -s)], [C::new(0.0, -s), C::new(c, 0.0)]]
}

/// Dense row-major square matrix.
#[derive(Clone, Debug)]
pub struct Dense {
    pub dim: usize,
    pub a: Vec<C>,
}

impl Dense {
    pub fn identity(dim: usize) -> Self {
        let mut a = vec![C::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            a[i * dim + i] = C::new(1.0, 0.0);
        }
        Dense { dim, a }
    }

    pub fn get(&self, r: usize, c: usize) -> C {
        self.a[r * self.dim + c]
    }

    pub fn mul(&self, other: &Dense) -> Dense {
        let n = self.dim;
        let mut a = vec![C::new(0.0, 0.0); n * n];
        for r in 0..n {
            for k in 0..n {
                let x = self.a[r * n + k];
                if x == C::new(0.0, 0.0) {
                    continue;
                }
                for c in 0..n {
                    a[r * n + c] += x * other.a[k * n + c];
                }
            }
        }
        Dense { dim: n, a }
    }

    pub fn apply(&self, v: &[C]) -> Vec<C> {
        (0..self.dim)
            .map(|r| (0..self.dim).map(|c| self.a[r * self.dim + c] * v[c]).sum())
            .collect()
    }
}

/// Bit of qubit `q` in basis index `b`; qubit 0 is the most significant bit.
pub fn bit(b: usize, q: usize, n: usize) -> usize {
    (b >> (n - 1 - q)) & 1
}

/// `I (x) ... (x) U (x) ... (x) I` with `U` on qubit `q`.
pub fn single(u: M2, q: usize, n: usize) -> Dense {
    let dim = 1 << n;
    let mut m = Dense::identity(dim);
    for r in 0..dim {
        for c in 0..dim {
            let same_elsewhere = (r ^ c) & !(1 << (n - 1 - q)) == 0;
            m.a[r * dim + c] = if same_elsewhere {
                u[bit(r, q, n)][bit(c, q, n)]
            } else {
                C::new(0.0, 0.0)
            };
        }
    }
    m
}

pub fn cnot(control: usize, target: usize, n: usize) -> Dense {
    let dim = 1 << n;
    let mut m = Dense {
        dim,
        a: vec![C::new(0.0, 0.0); dim * dim],
    };
    for c in 0..dim {
        let r = if bit(c, control, n) == 1 {
            c ^ (1 << (n - 1 - target))
        } else {
            c
        };
        m.a[r * dim + c] = C::new(1.0, 0.0);
    }
    m
}

/// `CNOT . RY(-w/2) . CNOT . RY(w/2)` as an operator product.
pub fn cry(control: usize, target: usize, w: f64, n: usize) -> Dense {
    let x = cnot(control, target, n);
    x.mul(&single(ry(-w / 2.0), target, n))
        .mul(&x)
        .mul(&single(ry(w / 2.0), target, n))
}

/// Runs dense gates in circuit order from `|0...0>`.
pub fn run_dense(gates: &[Dense], n: usize) -> Vec<C> {
    let mut v = vec![C::new(0.0, 0.0); 1 << n];
    v[0] = C::new(1.0, 0.0);
    for g in gates {
        v = g.apply(&v);
    }
    v
}

pub fn z_expectation(v: &[C], q: usize, n: usize) -> f64 {
    v.iter()
        .enumerate()
        .map(|(b, a)| if bit(b, q, n) == 0 { a.norm_sqr() } else { -a.norm_sqr() })
        .sum()
}

/// `Rot(a, b, c) = RZ(a) RY(b) RZ(c)` as circuit-ordered dense gates.
pub fn rot_gates(q: usize, a: f64, b: f64, c: f64, n: usize) -> Vec<Dense> {
    vec![single(rz(c), q, n), single(ry(b), q, n), single(rz(a), q, n)]
}

pub const QTTN_EDGES: [(usize, usize); 6] = [(3, 1), (4, 1), (5, 2), (6, 2), (1, 0), (2, 0)];

/// Reference QTTN readout `E0` for a depth-3 tree and a flat parameter vector
/// laid out as `lambda[7] omega[7] cry[6L] rot[21(L-1)] readout[3] linear[2]`.
pub fn qttn_e0(tree: &[(f64, f64)], flat: &[f64], layers: usize) -> f64 {
    let n = 7;
    assert_eq!(flat.len(), 27 * layers - 2);
    let lambda = &flat[0..7];
    let omega = &flat[7..14];
    let cry_w = &flat[14..14 + 6 * layers];
    let rot = &flat[14 + 6 * layers..14 + 6 * layers + 21 * (layers - 1)];
    let readout = &flat[14 + 6 * layers + 21 * (layers - 1)..][..3];

    let mut gates = Vec::new();
    for (q, &(x1, x2)) in tree.iter().enumerate() {
        let r = (x1 * x1 + x2 * x2 + 1e-10).sqrt();
        let theta = 2.0 * (lambda[q] * r).atan();
        let polar = if x1 == 0.0 && x2 == 0.0 { 0.0 } else { x2.atan2(x1) };
        gates.push(single(ry(theta), q, n));
        gates.push(single(rz(omega[q] * polar), q, n));
    }
    for layer in 0..layers {
        for (e, &(child, parent)) in QTTN_EDGES.iter().enumerate() {
            gates.push(cry(child, parent, cry_w[layer * 6 + e], n));
        }
        if layer + 1 < layers {
            for q in 0..n {
                let p = &rot[(layer * n + q) * 3..][..3];
                gates.extend(rot_gates(q, p[0], p[1], p[2], n));
            }
        } else {
            let (a, b, c) = (readout[0], readout[1], readout[2]);
            gates.push(single(rx(c), 0, n));
            gates.push(single(ry(b), 0, n));
            gates.push(single(rz(a), 0, n));
        }
    }
    z_expectation(&run_dense(&gates, n), 0, n)
}

/// Reference 1P1Q `E0` for displacements `(a, b)` per qubit and a flat
/// parameter vector `w, rot[3N], bias`.
pub fn p1q_e0(disp: &[(f64, f64)], flat: &[f64]) -> f64 {
    let n = disp.len();
    let f = 1.0 + 2.0 * PI / (1.0 + (-flat[0]).exp());
    let mut gates = Vec::new();
    for (q, &(a, b)) in disp.iter().enumerate() {
        gates.push(single(rx(f * a), q, n));
        gates.push(single(ry(f * b), q, n));
    }
    for q in 0..n {
        gates.push(cnot(q, (q + 1) % n, n));
    }
    for q in 0..n {
        let p = &flat[1 + 3 * q..][..3];
        gates.extend(rot_gates(q, p[0], p[1], p[2], n));
    }
    z_expectation(&run_dense(&gates, n), 0, n)
}

// ---------------------------------------------------------------- random inputs

/// Depth-3 tree with tree-shaped random occupancy and occupied `x2 >= ln 2`.
pub fn random_tree(rng: &mut ChaCha8Rng) -> LundTree {
    let mut nodes = vec![LundNode::EMPTY; 7];
    for i in 0..7 {
        let parent_ok = i == 0 || nodes[(i - 1) / 2].is_occupied();
        if parent_ok && rng.random_bool(0.7) {
            nodes[i] = LundNode::new(rng.random_range(-0.5..4.0), rng.random_range(2f64.ln()..5.0));
        }
    }
    LundTree::from_nodes(3, nodes).unwrap()
}

pub fn random_particles(rng: &mut ChaCha8Rng, n: usize) -> Vec<Particle> {
    (0..n)
        .map(|_| {
            Particle::new(
                rng.random_range(0.5..200.0),
                rng.random_range(-1.5..1.5),
                rng.random_range(-PI..PI),
            )
            .unwrap()
        })
        .collect()
}

// ---------------------------------------------------------------- brute-force clustering

#[derive(Clone, Debug)]
pub struct RefJet {
    pub p: [f64; 4],
    pub ids: Vec<usize>,
}

impl RefJet {
    fn pt2(&self) -> f64 {
        self.p[0] * self.p[0] + self.p[1] * self.p[1]
    }

    fn rap(&self) -> f64 {
        0.5 * ((self.p[3] + self.p[2]) / (self.p[3] - self.p[2])).ln()
    }

    fn phi(&self) -> f64 {
        let phi = self.p[1].atan2(self.p[0]);
        if phi >= PI {
            phi - 2.0 * PI
        } else {
            phi
        }
    }
}

fn dphi(a: f64, b: f64) -> f64 {
    let mut d = a - b;
    while d > PI {
        d -= 2.0 * PI;
    }
    while d <= -PI {
        d += 2.0 * PI;
    }
    d
}

/// O(n^3) generalised-kt clustering. Ties within a relative 1e-12 go to the
/// lexicographically smallest `(i, j)` over slot indices, a beam candidate
/// counting as `(i, i)`; merges land in the lower slot.
pub fn brute_force_cluster(particles: &[Particle], radius: f64, p: f64) -> Vec<RefJet> {
    let mut slots: Vec<Option<RefJet>> = particles
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let (px, py) = (q.pt * q.phi.cos(), q.pt * q.phi.sin());
            let (pz, e) = (q.pt * q.y.sinh(), q.pt * q.y.cosh());
            Some(RefJet {
                p: [px, py, pz, e],
                ids: vec![i],
            })
        })
        .collect();
    let factor = |j: &RefJet| if p == 0.0 { 1.0 } else { j.pt2().powf(p) };
    let mut out = Vec::new();
    loop {
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        for i in 0..slots.len() {
            let Some(a) = &slots[i] else { continue };
            cands.push((factor(a), i, i));
            for j in i + 1..slots.len() {
                let Some(b) = &slots[j] else { continue };
                let dy = a.rap() - b.rap();
                let dp = dphi(a.phi(), b.phi());
                cands.push((factor(a).min(factor(b)) * (dy * dy + dp * dp) / (radius * radius), i, j));
            }
        }
        if cands.is_empty() {
            break;
        }
        let dmin = cands.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        let &(_, i, j) = cands
            .iter()
            .filter(|c| c.0 <= dmin + 1e-12 * dmin.abs())
            .min_by_key(|c| (c.1, c.2))
            .unwrap();
        if i == j {
            out.push(slots[i].take().unwrap());
        } else {
            let b = slots[j].take().unwrap();
            let a = slots[i].as_mut().unwrap();
            for k in 0..4 {
                a.p[k] += b.p[k];
            }
            a.ids.extend(b.ids);
            a.ids.sort_unstable();
        }
    }
    out
}
