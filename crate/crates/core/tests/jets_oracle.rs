mod common;

use std::f64::consts::PI;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use common::*;
use qttn_core::jets::{
    cluster, event_to_tree, extract_lund_tree, leading_jet, recluster_ca, LundConfig, LundNode, LundTree, Particle,
    PseudoJet,
};
use qttn_core::toy::{generate, ToyGenConfig};

fn partition(jets: &[PseudoJet]) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = jets
        .iter()
        .map(|j| {
            let mut ids = j.constituents().to_vec();
            ids.sort_unstable();
            ids
        })
        .collect();
    out.sort();
    out
}

fn ref_partition(jets: &[RefJet]) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = jets.iter().map(|j| j.ids.clone()).collect();
    out.sort();
    out
}

#[test]
fn clustering_matches_the_brute_force_oracle() {
    let mut r = rng(2024);
    for event in 0..500 {
        let n = r.random_range(1..=32);
        let particles = random_particles(&mut r, n);
        let radius = [0.4, 0.8, 1.0][event % 3];
        for p in [0.0, -1.0] {
            let got = cluster(&particles, radius, p).unwrap();
            let want = brute_force_cluster(&particles, radius, p);
            assert_eq!(partition(&got), ref_partition(&want), "event {event}, p = {p}");
            for jet in &got {
                let mut ids = jet.constituents().to_vec();
                ids.sort_unstable();
                let twin = want.iter().find(|w| w.ids == ids).unwrap();
                let mom = jet.four_momentum();
                let scale = twin.p[3].abs().max(1.0);
                for k in 0..4 {
                    assert!((mom[k] - twin.p[k]).abs() <= 1e-9 * scale, "event {event} component {k}");
                }
            }
        }
    }
}

#[test]
fn clustering_ignores_input_order() {
    let mut r = rng(77);
    for _ in 0..100 {
        let n = r.random_range(2..=24);
        let particles = random_particles(&mut r, n);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut r);
        let shuffled: Vec<Particle> = order.iter().map(|&i| particles[i]).collect();
        for p in [0.0, -1.0] {
            let base = partition(&cluster(&particles, 0.8, p).unwrap());
            let perm: Vec<Vec<usize>> = {
                let mut v: Vec<Vec<usize>> = cluster(&shuffled, 0.8, p)
                    .unwrap()
                    .iter()
                    .map(|j| {
                        let mut ids: Vec<usize> = j.constituents().iter().map(|&k| order[k]).collect();
                        ids.sort_unstable();
                        ids
                    })
                    .collect();
                v.sort();
                v
            };
            assert_eq!(base, perm);
        }
    }
}

fn toy_jets(n: usize, seed: u64) -> Vec<Vec<Particle>> {
    let cfg = ToyGenConfig {
        n_events: n / 2,
        seed,
        ..ToyGenConfig::default()
    };
    generate(&cfg).unwrap().into_iter().map(|e| e.particles).collect()
}

fn assert_trees_close(a: &LundTree, b: &LundTree, tol: f64, what: &str) {
    for (i, (x, y)) in a.nodes().iter().zip(b.nodes()).enumerate() {
        assert_eq!(x.is_occupied(), y.is_occupied(), "{what}: occupancy differs at node {i}");
        assert!(
            (x.x1 - y.x1).abs() <= tol && (x.x2 - y.x2).abs() <= tol,
            "{what}: node {i} moved from {x:?} to {y:?}"
        );
    }
}

#[test]
fn collinear_splits_leave_the_tree_unchanged() {
    let cfg = LundConfig::default();
    let mut r = rng(11);
    for (k, particles) in toy_jets(200, 5).into_iter().enumerate() {
        let base = event_to_tree(&particles, &cfg).unwrap().unwrap();
        let victim = r.random_range(0..particles.len());
        let mut split = particles.clone();
        let p = split[victim];
        split[victim].pt = p.pt / 2.0;
        split.push(Particle::new(p.pt / 2.0, p.y, p.phi).unwrap());
        let tree = event_to_tree(&split, &cfg).unwrap().unwrap();
        assert_trees_close(&base, &tree, 1e-6, &format!("jet {k}"));
    }
}

/// Largest coordinate shift a soft particle of pt `eps` can cause through
/// recoil. A recorded splitting has `pt_soft * dR > e^cut`, and the particle
/// moves a prong's pt by at most `eps` and its axis by at most `eps * 2R / pt`,
/// so `|dx2| <= 2R eps / e^cut` and `|dx1| <= 4R eps / e^cut`.
fn recoil_bound(eps: f64, cfg: &LundConfig) -> f64 {
    4.0 * cfg.radius * eps / cfg.ln_kt_cut.exp()
}

#[test]
fn soft_emissions_leave_the_tree_unchanged() {
    let cfg = LundConfig::default();
    let eps = 1e-3;
    let tol = recoil_bound(eps, &cfg);
    let mut r = rng(12);
    for (k, particles) in toy_jets(400, 6).into_iter().enumerate() {
        let jet = leading_jet(&particles, cfg.radius).unwrap();
        let base = event_to_tree(&particles, &cfg).unwrap().unwrap();
        let dist = cfg.radius * r.random::<f64>().sqrt() * 0.9;
        let angle = r.random_range(-PI..PI);
        let soft = Particle::new(eps, jet.rapidity() + dist * angle.cos(), jet.phi() + dist * angle.sin()).unwrap();
        let mut more = particles.clone();
        more.push(soft);
        let tree = event_to_tree(&more, &cfg).unwrap().unwrap();
        assert_trees_close(&base, &tree, tol, &format!("jet {k}"));
    }
}

#[test]
fn soft_recoil_can_exceed_a_fixed_tolerance() {
    // a recorded prong of a few GeV absorbs the soft particle's momentum:
    // dx2 = ln(pt_s + eps) - ln(pt_s) ~ eps / pt_s
    let hard = Particle::new(500.0, 0.0, 0.0).unwrap();
    let prong = Particle::new(4.5, 0.7, 0.0).unwrap();
    let cfg = LundConfig::default();
    let base = event_to_tree(&[hard, prong], &cfg).unwrap().unwrap();
    let soft = Particle::new(1e-3, 0.7, 0.01).unwrap();
    let tree = event_to_tree(&[hard, prong, soft], &cfg).unwrap().unwrap();
    let dx2 = (tree.node(0).x2 - base.node(0).x2).abs();
    assert!(dx2 > 1e-4 && dx2 < recoil_bound(1e-3, &cfg), "dx2 = {dx2}");
}

#[test]
fn occupancy_is_tree_shaped() {
    let mut r = rng(13);
    let mut events = toy_jets(400, 8);
    for _ in 0..200 {
        let n = r.random_range(1..=32);
        events.push(random_particles(&mut r, n));
    }
    for depth in 1..=5 {
        let cfg = LundConfig {
            depth,
            ..LundConfig::default()
        };
        for particles in &events {
            let tree = event_to_tree(particles, &cfg).unwrap().unwrap();
            for i in 1..tree.nodes().len() {
                if tree.node(i).is_occupied() {
                    assert!(tree.node((i - 1) / 2).is_occupied(), "orphan node {i} at depth {depth}");
                }
            }
        }
    }
}

#[test]
fn recorded_splittings_take_the_softer_fraction() {
    let cfg = LundConfig::default();
    for particles in toy_jets(300, 9) {
        let tree = event_to_tree(&particles, &cfg).unwrap().unwrap();
        for node in tree.nodes().iter().filter(|n| n.is_occupied()) {
            assert!(node.x2 >= 2f64.ln() - 1e-12, "z above 1/2: {node:?}");
        }
    }
}

#[test]
fn two_particle_jet_gives_the_expected_root() {
    // softer prong 30 of 130 GeV at dR = 0.3: kt = 9 GeV, ln kt > 1
    let particles = vec![Particle::new(100.0, 0.0, 0.0).unwrap(), Particle::new(30.0, 0.3, 0.0).unwrap()];
    let tree = event_to_tree(&particles, &LundConfig::default()).unwrap().unwrap();
    let root = tree.node(0);
    assert!((root.x1 - (1.0f64 / 0.3).ln()).abs() < 1e-12);
    assert!((root.x2 - (130.0f64 / 30.0).ln()).abs() < 1e-12);
    assert_eq!(tree.occupied_count(), 1);

    let jet = leading_jet(&particles, 0.8).unwrap();
    let ca = recluster_ca(&jet, &particles).unwrap();
    let deep = extract_lund_tree(&ca, 1, 10.0).unwrap();
    assert_eq!(deep.nodes(), &[LundNode::EMPTY]);
}

proptest! {
    #[test]
    fn flatten_round_trips(seed in any::<u64>()) {
        let tree = random_tree(&mut rng(seed));
        let flat = tree.flatten();
        prop_assert_eq!(flat.len(), 14);
        prop_assert_eq!(LundTree::from_flat(3, &flat).unwrap(), tree);
    }
}
