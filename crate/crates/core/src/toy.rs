//! Synthetic two-class jet generator.
//!
//! Signal jets are two-prong with a balanced first splitting; background jets
//! have a soft-enhanced first splitting spread over a wider angular range.
//! Each prong fragments once more at a smaller angle, and every jet gets a
//! handful of soft emissions close to one of its prongs.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jets::{wrap_phi, Particle};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyGenConfig {
    /// Events per class.
    pub n_events: usize,
    pub seed: u64,
    pub jet_pt: (f64, f64),
    /// Shape `a = b` of the symmetric Beta folded onto the softer prong.
    pub signal_beta: f64,
    pub signal_dr: (f64, f64),
    /// Background `z` has density proportional to `1/z` on this range.
    pub background_z: (f64, f64),
    pub background_dr: (f64, f64),
    pub soft_emissions: (usize, usize),
    /// Upper bound of a soft emission's pt fraction.
    pub soft_fraction: f64,
}

impl Default for ToyGenConfig {
    fn default() -> Self {
        ToyGenConfig {
            n_events: 1000,
            seed: 0,
            jet_pt: (300.0, 600.0),
            signal_beta: 3.0,
            signal_dr: (0.2, 0.6),
            background_z: (0.01, 0.5),
            background_dr: (0.05, 0.8),
            soft_emissions: (2, 6),
            soft_fraction: 0.05,
        }
    }
}

impl ToyGenConfig {
    pub fn validate(&self) -> Result<()> {
        let range = |name: &str, (lo, hi): (f64, f64), floor: f64| {
            if lo.is_finite() && hi.is_finite() && floor < lo && lo < hi {
                Ok(())
            } else {
                Err(Error::config(format!("{name} range must satisfy {floor} < low < high, got ({lo}, {hi})")))
            }
        };
        if self.n_events == 0 {
            return Err(Error::config("n_events must be positive"));
        }
        range("jet_pt", self.jet_pt, 0.0)?;
        range("signal_dr", self.signal_dr, 0.0)?;
        range("background_dr", self.background_dr, 0.0)?;
        range("background_z", self.background_z, 0.0)?;
        if self.background_z.1 > 0.5 {
            return Err(Error::config("background z must not exceed 0.5"));
        }
        if !(self.signal_beta > 0.0) {
            return Err(Error::config("signal_beta must be positive"));
        }
        if self.soft_emissions.0 > self.soft_emissions.1 {
            return Err(Error::config("soft emission count range is reversed"));
        }
        if !(self.soft_fraction > 0.0 && self.soft_fraction < 0.5) {
            return Err(Error::config("soft_fraction must lie in (0, 0.5)"));
        }
        Ok(())
    }
}

/// A generated event with the parameters of its first splitting.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyEvent {
    pub label: u8,
    pub particles: Vec<Particle>,
    pub z: f64,
    pub delta_r: f64,
}

struct Prong {
    pt: f64,
    y: f64,
    phi: f64,
}

fn offset(y: f64, phi: f64, dist: f64, angle: f64) -> (f64, f64) {
    (y + dist * angle.cos(), wrap_phi(phi + dist * angle.sin()))
}

/// Splits `(pt, y, phi)` into two prongs with softer fraction `z` at
/// separation `dr`, keeping the pt-weighted centroid in place.
fn split(rng: &mut ChaCha8Rng, pt: f64, y: f64, phi: f64, z: f64, dr: f64) -> (Prong, Prong) {
    let angle = rng.random_range(-PI..PI);
    let (yh, ph) = offset(y, phi, z * dr, angle);
    let (ys, ps) = offset(y, phi, -(1.0 - z) * dr, angle);
    (
        Prong {
            pt: (1.0 - z) * pt,
            y: yh,
            phi: ph,
        },
        Prong { pt: z * pt, y: ys, phi: ps },
    )
}

fn generate_event(rng: &mut ChaCha8Rng, cfg: &ToyGenConfig, label: u8, beta: &Beta<f64>) -> Result<ToyEvent> {
    let pt = rng.random_range(cfg.jet_pt.0..cfg.jet_pt.1);
    let y = rng.random_range(-2.0..2.0);
    let phi = rng.random_range(-PI..PI);

    let (z, dr) = if label == 1 {
        let u = beta.sample(rng);
        (u.min(1.0 - u).max(1e-3), rng.random_range(cfg.signal_dr.0..cfg.signal_dr.1))
    } else {
        let (lo, hi) = cfg.background_z;
        let z = lo * (hi / lo).powf(rng.random::<f64>());
        (z, rng.random_range(cfg.background_dr.0..cfg.background_dr.1))
    };

    let n_soft = rng.random_range(cfg.soft_emissions.0..=cfg.soft_emissions.1);
    let soft: Vec<f64> = (0..n_soft)
        .map(|_| pt * cfg.soft_fraction * rng.random_range(0.05..1.0))
        .collect();
    let hard_pt = pt - soft.iter().sum::<f64>();

    let (a, b) = split(rng, hard_pt, y, phi, z, dr);
    let mut particles = Vec::new();
    let mut prongs = Vec::new();
    for prong in [a, b] {
        let sub_z = rng.random_range(0.05..0.5);
        let sub_dr = rng.random_range(0.1..0.4) * dr;
        let (h, s) = split(rng, prong.pt, prong.y, prong.phi, sub_z, sub_dr);
        for q in [h, s] {
            particles.push(Particle::new(q.pt, q.y, q.phi)?);
        }
        prongs.push(prong);
    }
    for s_pt in soft {
        let host = &prongs[rng.random_range(0..prongs.len())];
        let (sy, sp) = offset(host.y, host.phi, rng.random_range(0.01..0.1), rng.random_range(-PI..PI));
        particles.push(Particle::new(s_pt, sy, sp)?);
    }
    Ok(ToyEvent {
        label,
        particles,
        z,
        delta_r: dr,
    })
}

/// `2 * n_events` events alternating signal, background, signal, ...
pub fn generate(cfg: &ToyGenConfig) -> Result<Vec<ToyEvent>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let beta = Beta::new(cfg.signal_beta, cfg.signal_beta).map_err(|e| Error::config(e.to_string()))?;
    let mut out = Vec::with_capacity(2 * cfg.n_events);
    for _ in 0..cfg.n_events {
        out.push(generate_event(&mut rng, cfg, 1, &beta)?);
        out.push(generate_event(&mut rng, cfg, 0, &beta)?);
    }
    Ok(out)
}
