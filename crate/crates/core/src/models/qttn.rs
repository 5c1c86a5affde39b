use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{seeded_rng, Model, ModelSpec, ParameterSet, GATE_INIT_STD};
use crate::encodings::{lp2b_node, lp2b_node_jacobian, sigmoid};
use crate::error::{Error, Result};
use crate::jets::{node_count, node_label, LundTree};
use crate::qsim::{run_with_gradient, Angle, Circuit, GateOp};

/// Tree-topology circuit layout.
///
/// `edges` are `(child, parent)` pairs of breadth-first node indices; the
/// CRY on an edge is controlled by the child's qubit and targets the
/// parent's. `qubit_map[node]` is the qubit that carries that node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QttnConfig {
    pub depth: usize,
    pub layers: usize,
    pub edges: Vec<(usize, usize)>,
    pub qubit_map: Vec<usize>,
}

/// Parent-child edges of a complete binary tree, deepest level first and
/// left to right within a level: `(31,21) (32,21) (33,22) (34,22) (21,11)
/// (22,11)` for depth 3.
pub fn default_edges(depth: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for level in (1..depth).rev() {
        let first = (1usize << level) - 1;
        for node in first..(2 * first + 1) {
            edges.push((node, (node - 1) / 2));
        }
    }
    edges
}

impl QttnConfig {
    /// Default edges and the identity node → qubit map.
    pub fn new(depth: usize, layers: usize) -> Self {
        let n = if (1..=crate::jets::MAX_DEPTH).contains(&depth) {
            node_count(depth)
        } else {
            0
        };
        QttnConfig {
            depth,
            layers,
            edges: default_edges(depth),
            qubit_map: (0..n).collect(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        node_count(self.depth)
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn readout_qubit(&self) -> usize {
        self.qubit_map[0]
    }

    /// `2N + L E + 3 (L - 1) N + 3 + 2`
    pub fn parameter_count(&self) -> usize {
        let n = self.n_nodes();
        2 * n + self.layers * self.n_edges() + 3 * (self.layers - 1) * n + 3 + 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.depth > crate::qsim::MAX_QUBITS.ilog2() as usize {
            return Err(Error::config(format!("unsupported QTTN depth {}", self.depth)));
        }
        if self.layers == 0 {
            return Err(Error::config("QTTN needs at least one layer"));
        }
        let n = self.n_nodes();
        if self.qubit_map.len() != n {
            return Err(Error::config(format!(
                "qubit map has {} entries for {n} nodes",
                self.qubit_map.len()
            )));
        }
        let mut seen = vec![false; n];
        for &q in &self.qubit_map {
            if q >= n || std::mem::replace(&mut seen[q], true) {
                return Err(Error::config("qubit map is not a permutation of the register"));
            }
        }
        if self.edges.len() != n - 1 {
            return Err(Error::config(format!(
                "depth {} tree has {} edges, got {}",
                self.depth,
                n - 1,
                self.edges.len()
            )));
        }
        let mut has_parent = vec![false; n];
        for &(child, parent) in &self.edges {
            if child == 0 || child >= n || parent != (child - 1) / 2 {
                return Err(Error::config(format!(
                    "({child}, {parent}) is not a parent-child edge of the tree"
                )));
            }
            if std::mem::replace(&mut has_parent[child], true) {
                return Err(Error::config(format!("node {} has two parent edges", node_label(child))));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QttnOutput {
    pub e0: f64,
    pub logit: f64,
    pub probability: f64,
}

/// Quantum tree-topology network: LP2B encoding, CRY entanglement along the
/// tree edges, local rotations and a root-qubit readout followed by
/// `logit = c_w E0 + c_b`.
///
/// Flat parameter layout: `lambda[N]`, `omega[N]`, `cry[L E]`,
/// `rot[(L - 1) N 3]`, `readout_rot[3]` (alpha, beta, gamma), `linear`
/// (`c_w`, `c_b`). Circuit angle slots mirror it: `theta[N]`, `phi[N]`, then
/// the gate angles at the same indices as their parameters.
#[derive(Clone, Debug)]
pub struct Qttn {
    config: QttnConfig,
    params: ParameterSet,
    circuit: Circuit,
}

impl Qttn {
    /// Fresh model: `lambda = omega = 1`, gate angles `N(0, 0.1)`, `c_w = 1`, `c_b = 0`.
    pub fn new(config: QttnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let n = config.n_nodes();
        let mut rng = seeded_rng(seed);
        let normal = Normal::new(0.0, GATE_INIT_STD).expect("valid normal");
        let mut draw = |k: usize| -> Vec<f64> { (0..k).map(|_| normal.sample(&mut rng)).collect() };

        let mut params = ParameterSet::new();
        params.push_block("lambda", vec![1.0; n], true);
        params.push_block("omega", vec![1.0; n], true);
        params.push_block("cry", draw(config.layers * config.n_edges()), true);
        params.push_block("rot", draw((config.layers - 1) * n * 3), true);
        params.push_block("readout_rot", draw(3), true);
        params.push_block_masked("linear", vec![1.0, 0.0], vec![true, false]);
        debug_assert_eq!(params.len(), config.parameter_count());

        let circuit = build_qttn(&config)?;
        Ok(Qttn {
            config,
            params,
            circuit,
        })
    }

    pub fn with_params(config: QttnConfig, params: &ParameterSet) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        model.params.set_flat(params.values())?;
        Ok(model)
    }

    pub fn config(&self) -> &QttnConfig {
        &self.config
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    fn check_tree(&self, tree: &LundTree) -> Result<()> {
        if tree.depth() != self.config.depth {
            return Err(Error::usage(format!(
                "model expects depth-{} trees, got depth {}",
                self.config.depth,
                tree.depth()
            )));
        }
        Ok(())
    }

    /// Circuit angle vector for `tree`.
    pub fn circuit_angles(&self, tree: &LundTree) -> Result<Vec<f64>> {
        self.check_tree(tree)?;
        let n = self.config.n_nodes();
        let p = self.params.values();
        let mut angles = p[..self.circuit.n_slots()].to_vec();
        for (i, node) in tree.nodes().iter().enumerate() {
            let a = lp2b_node(node, p[i], p[n + i]);
            angles[i] = a.theta;
            angles[n + i] = a.phi;
        }
        Ok(angles)
    }

    pub fn e0(&self, tree: &LundTree) -> Result<f64> {
        let angles = self.circuit_angles(tree)?;
        crate::qsim::run(&self.circuit, &angles)
    }

    pub fn forward(&self, tree: &LundTree) -> Result<QttnOutput> {
        let e0 = self.e0(tree)?;
        let (c_w, c_b) = self.linear();
        let logit = c_w * e0 + c_b;
        Ok(QttnOutput {
            e0,
            logit,
            probability: sigmoid(logit),
        })
    }

    fn linear(&self) -> (f64, f64) {
        let l = self.params.block("linear").expect("linear block");
        (l[0], l[1])
    }
}

/// Circuit template for a configuration, with slots laid out as documented
/// on [`Qttn`].
pub fn build_qttn(config: &QttnConfig) -> Result<Circuit> {
    config.validate()?;
    let n = config.n_nodes();
    let e = config.n_edges();
    let l = config.layers;
    let q = &config.qubit_map;
    let mut c = Circuit::new(n, config.readout_qubit())?;

    for node in 0..n {
        c.push(GateOp::ry(q[node], Angle::Slot(node)))?;
        c.push(GateOp::rz(q[node], Angle::Slot(n + node)))?;
    }
    let cry_base = 2 * n;
    let rot_base = cry_base + l * e;
    let readout_base = rot_base + (l - 1) * n * 3;
    for layer in 0..l {
        for (k, &(child, parent)) in config.edges.iter().enumerate() {
            c.push(GateOp::cry(q[child], q[parent], Angle::Slot(cry_base + layer * e + k)))?;
        }
        if layer + 1 < l {
            for qubit in 0..n {
                let s = rot_base + (layer * n + qubit) * 3;
                c.push(GateOp::rot(qubit, Angle::Slot(s), Angle::Slot(s + 1), Angle::Slot(s + 2)))?;
            }
        } else {
            // RZ(alpha) RY(beta) RX(gamma) as an operator product: RX acts first.
            let r = config.readout_qubit();
            c.push(GateOp::rx(r, Angle::Slot(readout_base + 2)))?;
            c.push(GateOp::ry(r, Angle::Slot(readout_base + 1)))?;
            c.push(GateOp::rz(r, Angle::Slot(readout_base)))?;
        }
    }
    c.reserve_slots(readout_base + 3);
    Ok(c)
}

impl Model for Qttn {
    type Input = LundTree;

    fn spec(&self) -> ModelSpec {
        ModelSpec::Qttn(self.config.clone())
    }

    fn params(&self) -> &ParameterSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    fn logit(&self, tree: &LundTree) -> Result<f64> {
        self.forward(tree).map(|o| o.logit)
    }

    fn logit_and_grad(&self, tree: &LundTree) -> Result<(f64, Vec<f64>)> {
        let angles = self.circuit_angles(tree)?;
        let (e0, dangles) = run_with_gradient(&self.circuit, &angles)?;
        let (c_w, c_b) = self.linear();
        let n = self.config.n_nodes();
        let p = self.params.values();

        let mut grad = vec![0.0; self.params.len()];
        for (i, node) in tree.nodes().iter().enumerate() {
            let jac = lp2b_node_jacobian(node, p[i]);
            grad[i] = c_w * dangles[i] * jac.dtheta_dlambda;
            grad[n + i] = c_w * dangles[n + i] * jac.dphi_domega;
        }
        for k in 2 * n..dangles.len() {
            grad[k] = c_w * dangles[k];
        }
        let linear = self.params.block_range("linear").expect("linear block");
        grad[linear.start] = e0;
        grad[linear.start + 1] = 1.0;
        Ok((c_w * e0 + c_b, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::LundNode;

    #[test]
    fn default_edges_match_tree_listing() {
        assert_eq!(
            default_edges(3),
            vec![(3, 1), (4, 1), (5, 2), (6, 2), (1, 0), (2, 0)]
        );
        assert_eq!(default_edges(2), vec![(1, 0), (2, 0)]);
        let labels: Vec<(String, String)> = default_edges(3)
            .into_iter()
            .map(|(c, p)| (node_label(c), node_label(p)))
            .collect();
        assert_eq!(labels[0], ("31".to_string(), "21".to_string()));
        assert_eq!(labels[5], ("22".to_string(), "11".to_string()));
    }

    #[test]
    fn parameter_counts() {
        for (layers, expected) in [(1, 25), (3, 79), (5, 133), (10, 268)] {
            assert_eq!(QttnConfig::new(3, layers).parameter_count(), expected);
        }
        for layers in 1..=16 {
            assert_eq!(QttnConfig::new(3, layers).parameter_count(), 27 * layers - 2);
            let model = Qttn::new(QttnConfig::new(3, layers), 1).unwrap();
            assert_eq!(model.params().len(), 27 * layers - 2);
        }
        // 3 lambda + 3 omega + 2 CRY + 3 readout rotations + 2 linear
        assert_eq!(QttnConfig::new(2, 1).parameter_count(), 13);
    }

    #[test]
    fn gate_list_for_single_layer() {
        let c = build_qttn(&QttnConfig::new(3, 1)).unwrap();
        let gates = c.gates();
        assert_eq!(gates.len(), 14 + 6 + 3);
        assert_eq!(c.n_slots(), 14 + 6 + 3);
        use crate::qsim::GateKind::*;
        assert_eq!(gates[0].kind, Ry);
        assert_eq!(gates[1].kind, Rz);
        assert_eq!(gates[14].kind, Cry);
        assert_eq!((gates[14].control, gates[14].target), (Some(3), 1));
        let tail: Vec<_> = gates[20..].iter().map(|g| (g.kind, g.target)).collect();
        assert_eq!(tail, [(Rx, 0), (Ry, 0), (Rz, 0)]);
    }

    #[test]
    fn spin_q_configuration() {
        let model = Qttn::new(QttnConfig::new(2, 1), 0).unwrap();
        assert_eq!(model.circuit().n_qubits(), 3);
        assert_eq!(model.config().n_edges(), 2);
        assert_eq!(model.params().len(), 13);
    }

    #[test]
    fn invalid_configs() {
        let mut c = QttnConfig::new(3, 1);
        c.edges.pop();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = QttnConfig::new(3, 1);
        c.edges[0] = (3, 2);
        assert!(c.validate().is_err());
        let mut c = QttnConfig::new(3, 1);
        c.qubit_map[1] = 0;
        assert!(c.validate().is_err());
        assert!(QttnConfig::new(3, 0).validate().is_err());
    }

    #[test]
    fn identity_circuit_on_empty_tree() {
        let mut model = Qttn::new(QttnConfig::new(3, 2), 3).unwrap();
        let n = model.params().len();
        let mut flat = vec![0.0; n];
        flat[..14].fill(1.0);
        flat[n - 2] = 1.0;
        model.params_mut().set_flat(&flat).unwrap();
        let out = model.forward(&LundTree::empty(3).unwrap()).unwrap();
        // theta ~ 2e-5 on every qubit
        assert!((out.e0 - 1.0).abs() < 1e-8);
        assert!((out.probability - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn decoupled_readout() {
        let mut model = Qttn::new(QttnConfig::new(3, 1), 5).unwrap();
        let lin = model.params().block_range("linear").unwrap();
        model.params_mut().values_mut()[lin.start] = 0.0;
        model.params_mut().values_mut()[lin.start + 1] = -0.4;
        let mut nodes = vec![LundNode::EMPTY; 7];
        nodes[0] = LundNode::new(0.7, 1.9);
        let tree = LundTree::from_nodes(3, nodes).unwrap();
        for t in [tree, LundTree::empty(3).unwrap()] {
            let out = model.forward(&t).unwrap();
            assert_eq!(out.probability, sigmoid(-0.4));
        }
    }

    #[test]
    fn tree_depth_must_match() {
        let model = Qttn::new(QttnConfig::new(3, 1), 0).unwrap();
        assert!(matches!(model.forward(&LundTree::empty(2).unwrap()), Err(Error::Usage(_))));
    }
}
