//! Feature maps from jets to single-qubit rotation angles.
//!
//! LP2B is a stereographic map of each Lund node onto the Bloch sphere:
//! `r = sqrt(x1^2 + x2^2 + eps)`, `theta = 2 atan(lambda r)`,
//! `phi = omega atan2(x2, x1)`. An empty node `(0, 0)` gives `theta ~ 0`,
//! so its qubit stays at `|0>`.
//!
//! 1P1Q maps the pt-leading constituents one per qubit:
//! `theta = f (pt / pt_jet) d_eta`, `phi = f (pt / pt_jet) d_phi` with
//! `f = 1 + 2 pi / (1 + exp(-w))`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jets::{delta_phi, leading_jet, LundConfig, LundNode, LundTree, Particle};

/// Keeps `r` (and its gradient) finite at the origin.
pub const LP2B_EPSILON: f64 = 1e-10;

/// `atan2` with `atan2(0, 0) = 0`.
fn polar_angle(x2: f64, x1: f64) -> f64 {
    if x1 == 0.0 && x2 == 0.0 {
        0.0
    } else {
        x2.atan2(x1)
    }
}

fn radius(node: &LundNode) -> f64 {
    (node.x1 * node.x1 + node.x2 * node.x2 + LP2B_EPSILON).sqrt()
}

/// Learnable per-node stretches of the LP2B map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lp2bParams {
    pub lambda: Vec<f64>,
    pub omega: Vec<f64>,
}

impl Lp2bParams {
    /// `lambda = omega = 1` for `n` nodes.
    pub fn unit(n: usize) -> Self {
        Lp2bParams {
            lambda: vec![1.0; n],
            omega: vec![1.0; n],
        }
    }

    fn check(&self, tree: &LundTree) -> Result<()> {
        let n = tree.nodes().len();
        if self.lambda.len() != n || self.omega.len() != n {
            return Err(Error::usage(format!(
                "LP2B parameters sized ({}, {}) for a tree with {n} nodes",
                self.lambda.len(),
                self.omega.len()
            )));
        }
        Ok(())
    }
}

/// Bloch-sphere angles of one qubit.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BlochAngles {
    pub theta: f64,
    pub phi: f64,
}

/// Per-node LP2B angles, in breadth-first node order.
pub fn lp2b_angles(tree: &LundTree, params: &Lp2bParams) -> Result<Vec<BlochAngles>> {
    params.check(tree)?;
    Ok(tree
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, node)| lp2b_node(node, params.lambda[i], params.omega[i]))
        .collect())
}

pub fn lp2b_node(node: &LundNode, lambda: f64, omega: f64) -> BlochAngles {
    BlochAngles {
        theta: 2.0 * (lambda * radius(node)).atan(),
        phi: omega * polar_angle(node.x2, node.x1),
    }
}

/// Non-zero entries of `d(theta_i, phi_i) / d(lambda_i, omega_i)`; the map
/// is diagonal per node, so cross terms vanish.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lp2bJacobian {
    pub dtheta_dlambda: f64,
    pub dphi_domega: f64,
}

pub fn lp2b_jacobian(tree: &LundTree, params: &Lp2bParams) -> Result<Vec<Lp2bJacobian>> {
    params.check(tree)?;
    Ok(tree
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, node)| lp2b_node_jacobian(node, params.lambda[i]))
        .collect())
}

pub fn lp2b_node_jacobian(node: &LundNode, lambda: f64) -> Lp2bJacobian {
    let r = radius(node);
    let lr = lambda * r;
    Lp2bJacobian {
        dtheta_dlambda: 2.0 * r / (1.0 + lr * lr),
        dphi_domega: polar_angle(node.x2, node.x1),
    }
}

/// The learnable deformation of the 1P1Q map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct P1qParams {
    pub w: f64,
}

impl P1qParams {
    /// `f = 1 + 2 pi sigmoid(w)`, always inside `(1, 1 + 2 pi)`.
    pub fn deformation(&self) -> f64 {
        1.0 + 2.0 * PI * sigmoid(self.w)
    }

    pub fn deformation_derivative(&self) -> f64 {
        let s = sigmoid(self.w);
        2.0 * PI * s * (1.0 - s)
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Direction and pt of the jet the constituents are measured against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JetAxis {
    pub pt: f64,
    pub eta: f64,
    pub phi: f64,
}

/// Deformation-free 1P1Q displacements: `theta = f * a`, `phi = f * b`.
///
/// Storing `(a, b)` per qubit lets the model re-evaluate angles and their
/// `w` derivative without touching the constituents again.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct P1qInput {
    pub displacements: Vec<(f64, f64)>,
}

impl P1qInput {
    /// Takes the `n_qubits` highest-pt constituents (stable on ties) and
    /// zero-pads when there are fewer.
    pub fn new(constituents: &[Particle], axis: &JetAxis, n_qubits: usize) -> Result<Self> {
        if !(axis.pt.is_finite() && axis.pt > 0.0) {
            return Err(Error::validation(format!("jet pt must be positive, got {}", axis.pt)));
        }
        let mut sorted: Vec<&Particle> = constituents.iter().collect();
        sorted.sort_by(|a, b| b.pt.total_cmp(&a.pt));
        let mut displacements: Vec<(f64, f64)> = sorted
            .iter()
            .take(n_qubits)
            .map(|p| {
                let scale = p.pt / axis.pt;
                // massless constituents: pseudorapidity equals rapidity
                (scale * (p.y - axis.eta), scale * delta_phi(p.phi, axis.phi))
            })
            .collect();
        displacements.resize(n_qubits, (0.0, 0.0));
        Ok(P1qInput { displacements })
    }

    pub fn n_qubits(&self) -> usize {
        self.displacements.len()
    }
}

/// 1P1Q input of an event's leading anti-kt jet, measured against the jet
/// axis. `None` when the jet fails the configured mass window.
pub fn p1q_input_from_event(particles: &[Particle], config: &LundConfig, n_qubits: usize) -> Result<Option<P1qInput>> {
    config.validate()?;
    let jet = leading_jet(particles, config.radius)?;
    if let Some((lo, hi)) = config.mass_window {
        if !(lo..=hi).contains(&jet.mass()) {
            return Ok(None);
        }
    }
    let constituents: Vec<Particle> = jet.constituents().iter().map(|&i| particles[i]).collect();
    let axis = JetAxis {
        pt: jet.pt(),
        eta: jet.pseudorapidity(),
        phi: jet.phi(),
    };
    P1qInput::new(&constituents, &axis, n_qubits).map(Some)
}

/// Per-qubit 1P1Q angles.
pub fn p1q_angles(
    constituents: &[Particle],
    axis: &JetAxis,
    n_qubits: usize,
    params: &P1qParams,
) -> Result<Vec<BlochAngles>> {
    let input = P1qInput::new(constituents, axis, n_qubits)?;
    Ok(p1q_angles_from_input(&input, params))
}

pub fn p1q_angles_from_input(input: &P1qInput, params: &P1qParams) -> Vec<BlochAngles> {
    let f = params.deformation();
    input
        .displacements
        .iter()
        .map(|&(a, b)| BlochAngles {
            theta: f * a,
            phi: f * b,
        })
        .collect()
}
