//! Exact statevector simulation for small registers.
//!
//! Amplitude index `b` stores qubit 0 as its most significant bit. Gate lists
//! are in circuit order: element 0 acts first. Rotation conventions:
//!
//! * `RY(t) = [[cos t/2, -sin t/2], [sin t/2, cos t/2]]`
//! * `RZ(t) = diag(e^{-it/2}, e^{it/2})`, `RX(t) = exp(-i t X / 2)`
//! * `ROT(a, b, c)` applies `RZ(c)`, then `RY(b)`, then `RZ(a)`
//! * `CRY(w)` is `diag(I, RY(w))` on (control, target)
//!
//! Gradients use a reverse (adjoint) sweep: one forward pass, then one
//! backward pass that un-applies every gate from both the state and the
//! co-state `Z|psi>`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Supported gate families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    Rot,
    Cry,
    Cnot,
}

impl GateKind {
    pub fn angle_count(self) -> usize {
        match self {
            GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::Cry => 1,
            GateKind::Rot => 3,
            GateKind::Cnot => 0,
        }
    }

    pub fn is_controlled(self) -> bool {
        matches!(self, GateKind::Cry | GateKind::Cnot)
    }
}

/// Where a gate angle comes from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Angle {
    /// Index into the angle vector passed to [`run`] / [`gradient`].
    Slot(usize),
    /// Literal value in radians.
    Fixed(f64),
}

impl Angle {
    fn resolve(self, values: &[f64]) -> f64 {
        match self {
            Angle::Slot(i) => values[i],
            Angle::Fixed(v) => v,
        }
    }

    fn slot(self) -> Option<usize> {
        match self {
            Angle::Slot(i) => Some(i),
            Angle::Fixed(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateOp {
    pub kind: GateKind,
    pub target: usize,
    pub control: Option<usize>,
    pub angles: Vec<Angle>,
}

impl GateOp {
    pub fn rx(target: usize, angle: Angle) -> Self {
        Self::single(GateKind::Rx, target, angle)
    }

    pub fn ry(target: usize, angle: Angle) -> Self {
        Self::single(GateKind::Ry, target, angle)
    }

    pub fn rz(target: usize, angle: Angle) -> Self {
        Self::single(GateKind::Rz, target, angle)
    }

    /// `ROT(alpha, beta, gamma) = RZ(alpha) RY(beta) RZ(gamma)` as an operator product.
    pub fn rot(target: usize, alpha: Angle, beta: Angle, gamma: Angle) -> Self {
        GateOp {
            kind: GateKind::Rot,
            target,
            control: None,
            angles: vec![alpha, beta, gamma],
        }
    }

    pub fn cry(control: usize, target: usize, angle: Angle) -> Self {
        GateOp {
            kind: GateKind::Cry,
            target,
            control: Some(control),
            angles: vec![angle],
        }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        GateOp {
            kind: GateKind::Cnot,
            target,
            control: Some(control),
            angles: Vec::new(),
        }
    }

    fn single(kind: GateKind, target: usize, angle: Angle) -> Self {
        GateOp {
            kind,
            target,
            control: None,
            angles: vec![angle],
        }
    }

    fn validate(&self, n_qubits: usize) -> Result<()> {
        if self.target >= n_qubits {
            return Err(Error::usage(format!(
                "{:?} target qubit {} out of range for {n_qubits} qubits",
                self.kind, self.target
            )));
        }
        match (self.kind.is_controlled(), self.control) {
            (true, Some(c)) if c >= n_qubits => {
                return Err(Error::usage(format!(
                    "{:?} control qubit {c} out of range for {n_qubits} qubits",
                    self.kind
                )))
            }
            (true, Some(c)) if c == self.target => {
                return Err(Error::usage(format!(
                    "{:?} control and target are both qubit {c}",
                    self.kind
                )))
            }
            (true, None) => {
                return Err(Error::usage(format!("{:?} needs a control qubit", self.kind)))
            }
            (false, Some(_)) => {
                return Err(Error::usage(format!("{:?} takes no control qubit", self.kind)))
            }
            _ => {}
        }
        if self.angles.len() != self.kind.angle_count() {
            return Err(Error::usage(format!(
                "{:?} takes {} angles, got {}",
                self.kind,
                self.kind.angle_count(),
                self.angles.len()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Axis {
    X,
    Y,
    Z,
}

/// Single-axis rotation or CNOT; every gate lowers to a sequence of these.
#[derive(Clone, Copy, Debug)]
enum Prim {
    Rotation {
        axis: Axis,
        target: usize,
        control: Option<usize>,
        angle: Angle,
    },
    Cnot {
        control: usize,
        target: usize,
    },
}

fn lower(gate: &GateOp, out: &mut Vec<Prim>) {
    let rotation = |axis, angle| Prim::Rotation {
        axis,
        target: gate.target,
        control: None,
        angle,
    };
    match gate.kind {
        GateKind::Rx => out.push(rotation(Axis::X, gate.angles[0])),
        GateKind::Ry => out.push(rotation(Axis::Y, gate.angles[0])),
        GateKind::Rz => out.push(rotation(Axis::Z, gate.angles[0])),
        GateKind::Rot => {
            out.push(rotation(Axis::Z, gate.angles[2]));
            out.push(rotation(Axis::Y, gate.angles[1]));
            out.push(rotation(Axis::Z, gate.angles[0]));
        }
        GateKind::Cry => out.push(Prim::Rotation {
            axis: Axis::Y,
            target: gate.target,
            control: gate.control,
            angle: gate.angles[0],
        }),
        GateKind::Cnot => out.push(Prim::Cnot {
            control: gate.control.expect("validated"),
            target: gate.target,
        }),
    }
}

/// An ordered gate list over `n_qubits`, measured on `readout`.
#[derive(Clone, Debug)]
pub struct Circuit {
    n_qubits: usize,
    readout: usize,
    gates: Vec<GateOp>,
    prims: Vec<Prim>,
    n_slots: usize,
}

/// Largest register the simulator accepts.
pub const MAX_QUBITS: usize = 24;

impl Circuit {
    pub fn new(n_qubits: usize, readout: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::usage(format!(
                "qubit count must be in 1..={MAX_QUBITS}, got {n_qubits}"
            )));
        }
        if readout >= n_qubits {
            return Err(Error::usage(format!(
                "readout qubit {readout} out of range for {n_qubits} qubits"
            )));
        }
        Ok(Circuit {
            n_qubits,
            readout,
            gates: Vec::new(),
            prims: Vec::new(),
            n_slots: 0,
        })
    }

    /// Appends a gate; it acts after every gate already in the circuit.
    pub fn push(&mut self, gate: GateOp) -> Result<()> {
        gate.validate(self.n_qubits)?;
        for slot in gate.angles.iter().filter_map(|a| a.slot()) {
            self.n_slots = self.n_slots.max(slot + 1);
        }
        lower(&gate, &mut self.prims);
        self.gates.push(gate);
        Ok(())
    }

    /// Declares at least `n` angle slots, for layouts with unused trailing slots.
    pub fn reserve_slots(&mut self, n: usize) {
        self.n_slots = self.n_slots.max(n);
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn readout(&self) -> usize {
        self.readout
    }

    pub fn gates(&self) -> &[GateOp] {
        &self.gates
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    fn check_angles(&self, angles: &[f64]) -> Result<()> {
        if angles.len() != self.n_slots {
            return Err(Error::usage(format!(
                "circuit has {} angle slots, got {} values",
                self.n_slots,
                angles.len()
            )));
        }
        Ok(())
    }

    /// Final state for the given angle values.
    pub fn state(&self, angles: &[f64]) -> Result<StateVector> {
        self.check_angles(angles)?;
        let mut state = StateVector::new(self.n_qubits);
        for prim in &self.prims {
            state.apply_prim(prim, angles, false);
        }
        Ok(state)
    }
}

/// Complex amplitudes of an `n`-qubit register.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<C64>,
}

impl StateVector {
    /// `|0...0>`
    pub fn new(n_qubits: usize) -> Self {
        let mut amps = vec![ZERO; 1 << n_qubits];
        amps[0] = ONE;
        StateVector { n_qubits, amps }
    }

    /// Wraps raw amplitudes; the length must be a power of two.
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        let len = amps.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::usage(format!(
                "amplitude count {len} is not a power of two"
            )));
        }
        Ok(StateVector {
            n_qubits: len.trailing_zeros() as usize,
            amps,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn bit(&self, qubit: usize) -> usize {
        1 << (self.n_qubits - 1 - qubit)
    }

    /// Applies `gate`, resolving slot angles from `angles`.
    pub fn apply_gate(&mut self, gate: &GateOp, angles: &[f64]) -> Result<()> {
        gate.validate(self.n_qubits)?;
        if let Some(slot) = gate.angles.iter().filter_map(|a| a.slot()).find(|&s| s >= angles.len()) {
            return Err(Error::usage(format!(
                "angle slot {slot} out of range for {} values",
                angles.len()
            )));
        }
        let mut prims = Vec::with_capacity(3);
        lower(gate, &mut prims);
        for prim in &prims {
            self.apply_prim(prim, angles, false);
        }
        Ok(())
    }

    /// `<psi| Z_qubit |psi>`
    pub fn expectation_z(&self, qubit: usize) -> Result<f64> {
        if qubit >= self.n_qubits {
            return Err(Error::usage(format!(
                "qubit {qubit} out of range for {} qubits",
                self.n_qubits
            )));
        }
        Ok(self.expectation_z_unchecked(qubit))
    }

    fn expectation_z_unchecked(&self, qubit: usize) -> f64 {
        let bit = self.bit(qubit);
        let mut acc = 0.0;
        for (b, a) in self.amps.iter().enumerate() {
            if b & bit == 0 {
                acc += a.norm_sqr();
            } else {
                acc -= a.norm_sqr();
            }
        }
        acc
    }

    fn apply_prim(&mut self, prim: &Prim, angles: &[f64], inverse: bool) {
        match *prim {
            Prim::Rotation {
                axis,
                target,
                control,
                angle,
            } => {
                let mut theta = angle.resolve(angles);
                if inverse {
                    theta = -theta;
                }
                self.apply_rotation(axis, target, control, theta);
            }
            Prim::Cnot { control, target } => self.apply_cnot(control, target),
        }
    }

    fn apply_rotation(&mut self, axis: Axis, target: usize, control: Option<usize>, theta: f64) {
        let (s, c) = (0.5 * theta).sin_cos();
        let tbit = self.bit(target);
        let cmask = control.map_or(0, |q| self.bit(q));
        let amps = &mut self.amps;
        match axis {
            Axis::Y => {
                for i in 0..amps.len() {
                    if i & tbit != 0 || i & cmask != cmask {
                        continue;
                    }
                    let (a0, a1) = (amps[i], amps[i | tbit]);
                    amps[i] = a0 * c - a1 * s;
                    amps[i | tbit] = a0 * s + a1 * c;
                }
            }
            Axis::X => {
                let mis = C64::new(0.0, -s);
                for i in 0..amps.len() {
                    if i & tbit != 0 || i & cmask != cmask {
                        continue;
                    }
                    let (a0, a1) = (amps[i], amps[i | tbit]);
                    amps[i] = a0 * c + a1 * mis;
                    amps[i | tbit] = a0 * mis + a1 * c;
                }
            }
            Axis::Z => {
                let lo = C64::new(c, -s);
                let hi = C64::new(c, s);
                for i in 0..amps.len() {
                    if i & tbit != 0 || i & cmask != cmask {
                        continue;
                    }
                    amps[i] *= lo;
                    amps[i | tbit] *= hi;
                }
            }
        }
    }

    fn apply_cnot(&mut self, control: usize, target: usize) {
        let tbit = self.bit(target);
        let cbit = self.bit(control);
        for i in 0..self.amps.len() {
            if i & tbit == 0 && i & cbit != 0 {
                self.amps.swap(i, i | tbit);
            }
        }
    }

    /// `Im <co|G|self>` for the rotation generator `G` (a Pauli, projected on
    /// control = 1 for controlled rotations). This equals the derivative of
    /// `<psi|Z|psi>` with respect to the rotation angle when `self` is the
    /// state right after the rotation and `co` the matching co-state.
    fn generator_overlap_im(&self, co: &StateVector, axis: Axis, target: usize, control: Option<usize>) -> f64 {
        let tbit = self.bit(target);
        let cmask = control.map_or(0, |q| self.bit(q));
        let (psi, lam) = (&self.amps, &co.amps);
        let mut acc = ZERO;
        for i in 0..psi.len() {
            if i & tbit != 0 || i & cmask != cmask {
                continue;
            }
            let j = i | tbit;
            let (a0, a1) = (psi[i], psi[j]);
            let (g0, g1) = match axis {
                Axis::X => (a1, a0),
                Axis::Y => (C64::new(a1.im, -a1.re), C64::new(-a0.im, a0.re)),
                Axis::Z => (a0, -a1),
            };
            acc += lam[i].conj() * g0 + lam[j].conj() * g1;
        }
        acc.im
    }
}

/// Simulates `circuit` from `|0...0>` and returns `<Z>` on its readout qubit.
pub fn run(circuit: &Circuit, angles: &[f64]) -> Result<f64> {
    let state = circuit.state(angles)?;
    Ok(state.expectation_z_unchecked(circuit.readout))
}

/// Exact `dE0/d angle` for every slot; slots used by several gates
/// accumulate all contributions.
pub fn gradient(circuit: &Circuit, angles: &[f64]) -> Result<Vec<f64>> {
    run_with_gradient(circuit, angles).map(|(_, g)| g)
}

/// `E0` together with its gradient, from a single forward and reverse sweep.
pub fn run_with_gradient(circuit: &Circuit, angles: &[f64]) -> Result<(f64, Vec<f64>)> {
    let mut psi = circuit.state(angles)?;
    let e0 = psi.expectation_z_unchecked(circuit.readout);

    let mut co = psi.clone();
    let rbit = co.bit(circuit.readout);
    for (b, a) in co.amps.iter_mut().enumerate() {
        if b & rbit != 0 {
            *a = -*a;
        }
    }

    let mut grad = vec![0.0; circuit.n_slots];
    for prim in circuit.prims.iter().rev() {
        if let Prim::Rotation {
            axis,
            target,
            control,
            angle: Angle::Slot(slot),
        } = *prim
        {
            grad[slot] += psi.generator_overlap_im(&co, axis, target, control);
        }
        psi.apply_prim(prim, angles, true);
        co.apply_prim(prim, angles, true);
    }
    Ok((e0, grad))
}
