mod common;

use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use common::*;
use qttn_core::encodings::P1qInput;
use qttn_core::jets::LundTree;
use qttn_core::metrics::{auc, delong_variance, roc_auc, saliency, trapezoid_area, transfer_gap, ScoredSample};
use qttn_core::models::{Model, P1q, P1qConfig, Qttn, QttnConfig};

/// AUC by exhaustive pair counting, as an exact fraction `(2 wins + ties) / 2mn`.
fn pair_count_auc(samples: &[ScoredSample]) -> f64 {
    let sig: Vec<f64> = samples.iter().filter(|s| s.label == 1).map(|s| s.score).collect();
    let bkg: Vec<f64> = samples.iter().filter(|s| s.label == 0).map(|s| s.score).collect();
    let mut twice = 0u64;
    for &s in &sig {
        for &b in &bkg {
            twice += if s > b {
                2
            } else if s == b {
                1
            } else {
                0
            };
        }
    }
    twice as f64 / (2 * sig.len() * bkg.len()) as f64
}

fn random_scores(r: &mut ChaCha8Rng, n: usize, levels: u32) -> Vec<ScoredSample> {
    let mut out: Vec<ScoredSample> = (0..n)
        .map(|_| ScoredSample::new(f64::from(r.random_range(0..levels)) * 0.25, r.random_range(0..2u8)))
        .collect();
    out[0].label = 0;
    out[1].label = 1;
    out
}

#[test]
fn auc_equals_pair_counting() {
    let mut r = rng(41);
    for set in 0..50 {
        let n = r.random_range(2..300);
        let levels = [3, 10, 1000][set % 3];
        let samples = random_scores(&mut r, n, levels);
        assert_eq!(auc(&samples).unwrap(), pair_count_auc(&samples), "set {set}");
    }
}

#[test]
fn trapezoid_matches_the_rank_auc() {
    let mut r = rng(42);
    for _ in 0..50 {
        let n = r.random_range(2..500);
        let samples = random_scores(&mut r, n, 20);
        let curve = roc_auc(&samples).unwrap();
        assert!((trapezoid_area(&curve.points) - curve.auc).abs() < 1e-12);
        let last = curve.points.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
    }
}

fn gaussian_set(r: &mut ChaCha8Rng, n: usize, shift: f64) -> Vec<ScoredSample> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut out: Vec<ScoredSample> = (0..n).map(|_| ScoredSample::new(normal.sample(r) + shift, 1)).collect();
    out.extend((0..n).map(|_| ScoredSample::new(normal.sample(r), 0)));
    out
}

#[test]
fn delong_agrees_with_the_bootstrap() {
    let mut r = rng(43);
    for shift in [0.0, 0.5, 1.0] {
        let samples = gaussian_set(&mut r, 200, shift);
        let delong = delong_variance(&samples).unwrap();
        let (sig, bkg): (Vec<ScoredSample>, Vec<ScoredSample>) = samples.iter().partition(|s| s.label == 1);
        let reps: Vec<f64> = (0..2000)
            .map(|_| {
                let mut draw: Vec<ScoredSample> = (0..sig.len()).map(|_| sig[r.random_range(0..sig.len())]).collect();
                draw.extend((0..bkg.len()).map(|_| bkg[r.random_range(0..bkg.len())]));
                auc(&draw).unwrap()
            })
            .collect();
        let mean = reps.iter().sum::<f64>() / reps.len() as f64;
        let sd = (reps.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (reps.len() - 1) as f64).sqrt();
        let rel = (delong.std_error - sd).abs() / sd;
        assert!(rel < 0.15, "shift {shift}: delong {} vs bootstrap {sd}", delong.std_error);
    }
}

#[test]
fn transfer_gap_at_three_decimals() {
    let gap = transfer_gap(0.640, 0.637).unwrap();
    assert!((gap - 0.0047).abs() < 5e-5);
    // both inputs are rounded to three places; 0.4% lies inside the implied range
    let lo = transfer_gap(0.6395, 0.6375).unwrap();
    let hi = transfer_gap(0.6405, 0.6365).unwrap();
    assert!(lo <= 0.004 && 0.004 <= hi, "range [{lo}, {hi}]");
}

#[test]
fn readout_commuting_parameters_have_no_saliency() {
    let mut r = rng(44);
    let trees: Vec<LundTree> = (0..64).map(|_| random_tree(&mut r)).collect();
    let inputs: Vec<&LundTree> = trees.iter().collect();
    for layers in [1, 3] {
        let mut m = Qttn::new(QttnConfig::new(3, layers), 1).unwrap();
        for v in m.params_mut().values_mut() {
            *v += r.random_range(-1.0..1.0);
        }
        let s = saliency(&m, &inputs).unwrap();
        let alpha = m.params().block_range("readout_rot").unwrap().start;
        assert!(s.entries[alpha].value < 1e-10);
        assert!(s.entries[alpha + 1].value > 1e-6);
    }

    let n = 7;
    let p1q_inputs: Vec<P1qInput> = (0..64)
        .map(|_| P1qInput {
            displacements: (0..n).map(|_| (r.random_range(-0.5..0.5), r.random_range(-0.5..0.5))).collect(),
        })
        .collect();
    let refs: Vec<&P1qInput> = p1q_inputs.iter().collect();
    let m = P1q::new(P1qConfig { n_qubits: n }, 2).unwrap();
    let s = saliency(&m, &refs).unwrap();
    let rot = m.params().block_range("rot").unwrap();
    for k in rot.start + 3..rot.end {
        assert!(s.entries[k].value < 1e-10, "slot {k}: {}", s.entries[k].value);
    }
    assert!(s.entries[rot.start + 1].value > 1e-6);
}

#[test]
fn saliency_ignores_input_order() {
    let mut r = rng(45);
    let trees: Vec<LundTree> = (0..50).map(|_| random_tree(&mut r)).collect();
    let m = Qttn::new(QttnConfig::new(3, 2), 3).unwrap();
    let fwd: Vec<&LundTree> = trees.iter().collect();
    let rev: Vec<&LundTree> = trees.iter().rev().collect();
    let a = saliency(&m, &fwd).unwrap().values();
    let b = saliency(&m, &rev).unwrap().values();
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

proptest! {
    #[test]
    fn auc_is_invariant_under_monotone_maps(seed in any::<u64>()) {
        let mut r = rng(seed);
        let samples = random_scores(&mut r, 100, 50);
        let mapped: Vec<ScoredSample> = samples
            .iter()
            .map(|s| ScoredSample::new((3.0 * s.score).exp() - 7.0, s.label))
            .collect();
        prop_assert_eq!(auc(&samples).unwrap(), auc(&mapped).unwrap());
    }

    #[test]
    fn flipping_labels_complements_the_auc(seed in any::<u64>()) {
        let mut r = rng(seed);
        let samples = random_scores(&mut r, 80, 10);
        let flipped: Vec<ScoredSample> = samples.iter().map(|s| ScoredSample::new(s.score, 1 - s.label)).collect();
        prop_assert!((auc(&samples).unwrap() + auc(&flipped).unwrap() - 1.0).abs() < 1e-12);
    }
}
