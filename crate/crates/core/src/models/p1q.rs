use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{seeded_rng, Model, ModelSpec, ParameterSet, GATE_INIT_STD};
use crate::encodings::{P1qInput, P1qParams};
use crate::error::{Error, Result};
use crate::qsim::{run, run_with_gradient, Angle, Circuit, GateOp};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct P1qConfig {
    pub n_qubits: usize,
}

impl P1qConfig {
    /// `w` + `3N` rotations + bias.
    pub fn parameter_count(&self) -> usize {
        3 * self.n_qubits + 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits < 2 || self.n_qubits > crate::qsim::MAX_QUBITS {
            return Err(Error::config(format!(
                "1P1Q needs between 2 and {} qubits, got {}",
                crate::qsim::MAX_QUBITS,
                self.n_qubits
            )));
        }
        Ok(())
    }
}

/// One-particle-one-qubit baseline: RX/RY angle encoding, a CNOT ring,
/// one ROT per qubit and `logit = E0 + bias` on qubit 0.
///
/// Flat parameter layout: `w`, `rot[3N]` (alpha, beta, gamma per qubit), `bias`.
/// Circuit slots: `theta[N]`, `phi[N]`, `rot[3N]`.
#[derive(Clone, Debug)]
pub struct P1q {
    config: P1qConfig,
    params: ParameterSet,
    circuit: Circuit,
}

/// Circuit template for the 1P1Q ansatz.
pub fn build_p1q(config: &P1qConfig) -> Result<Circuit> {
    config.validate()?;
    let n = config.n_qubits;
    let mut c = Circuit::new(n, 0)?;
    for q in 0..n {
        c.push(GateOp::rx(q, Angle::Slot(q)))?;
        c.push(GateOp::ry(q, Angle::Slot(n + q)))?;
    }
    for q in 0..n {
        c.push(GateOp::cnot(q, (q + 1) % n))?;
    }
    for q in 0..n {
        let s = 2 * n + 3 * q;
        c.push(GateOp::rot(q, Angle::Slot(s), Angle::Slot(s + 1), Angle::Slot(s + 2)))?;
    }
    Ok(c)
}

impl P1q {
    /// Fresh model: `w = 0`, rotations `N(0, 0.1)`, bias 0.
    pub fn new(config: P1qConfig, seed: u64) -> Result<Self> {
        let circuit = build_p1q(&config)?;
        let n = config.n_qubits;
        let mut rng = seeded_rng(seed);
        let normal = Normal::new(0.0, GATE_INIT_STD).expect("valid normal");
        let mut params = ParameterSet::new();
        params.push_block("w", vec![0.0], true);
        params.push_block("rot", (0..3 * n).map(|_| normal.sample(&mut rng)).collect(), true);
        params.push_block("bias", vec![0.0], false);
        Ok(P1q {
            config,
            params,
            circuit,
        })
    }

    pub fn config(&self) -> &P1qConfig {
        &self.config
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    fn circuit_angles(&self, input: &P1qInput) -> Result<Vec<f64>> {
        let n = self.config.n_qubits;
        if input.n_qubits() != n {
            return Err(Error::usage(format!(
                "model has {n} qubits, input encodes {}",
                input.n_qubits()
            )));
        }
        let p = self.params.values();
        let f = P1qParams { w: p[0] }.deformation();
        let mut angles = vec![0.0; 5 * n];
        for (q, &(a, b)) in input.displacements.iter().enumerate() {
            angles[q] = f * a;
            angles[n + q] = f * b;
        }
        angles[2 * n..].copy_from_slice(&p[1..1 + 3 * n]);
        Ok(angles)
    }

    pub fn e0(&self, input: &P1qInput) -> Result<f64> {
        run(&self.circuit, &self.circuit_angles(input)?)
    }
}

impl Model for P1q {
    type Input = P1qInput;

    fn spec(&self) -> ModelSpec {
        ModelSpec::P1q(self.config.clone())
    }

    fn params(&self) -> &ParameterSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    fn logit(&self, input: &P1qInput) -> Result<f64> {
        Ok(self.e0(input)? + self.params.values()[3 * self.config.n_qubits + 1])
    }

    fn logit_and_grad(&self, input: &P1qInput) -> Result<(f64, Vec<f64>)> {
        let n = self.config.n_qubits;
        let angles = self.circuit_angles(input)?;
        let (e0, dangles) = run_with_gradient(&self.circuit, &angles)?;
        let p = self.params.values();
        let df = P1qParams { w: p[0] }.deformation_derivative();

        let mut grad = vec![0.0; self.params.len()];
        grad[0] = input
            .displacements
            .iter()
            .enumerate()
            .map(|(q, &(a, b))| dangles[q] * a + dangles[n + q] * b)
            .sum::<f64>()
            * df;
        grad[1..1 + 3 * n].copy_from_slice(&dangles[2 * n..]);
        grad[3 * n + 1] = 1.0;
        Ok((e0 + p[3 * n + 1], grad))
    }
}
