use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{bce_with_logit, seeded_rng, sigmoid, Model, ModelSpec, ParameterSet};
use crate::error::{Error, Result};

/// Fully connected tanh network with one output logit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
}

impl MlpConfig {
    pub fn new(input_dim: usize, hidden: Vec<usize>) -> Self {
        MlpConfig { input_dim, hidden }
    }

    /// `(fan_in, fan_out)` of every affine layer including the output.
    fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden.len() + 1);
        let mut fan_in = self.input_dim;
        for &h in &self.hidden {
            shapes.push((fan_in, h));
            fan_in = h;
        }
        shapes.push((fan_in, 1));
        shapes
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_shapes().iter().map(|&(i, o)| i * o + o).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::config(format!(
                "MLP layer sizes must be positive: input {}, hidden {:?}",
                self.input_dim, self.hidden
            )));
        }
        Ok(())
    }
}

/// Multi-layer perceptron on flat feature vectors.
///
/// Blocks per layer `k`: `layer{k}.weight` (row-major `out x in`) then
/// `layer{k}.bias`; biases are exempt from weight decay.
#[derive(Clone, Debug)]
pub struct Mlp {
    config: MlpConfig,
    params: ParameterSet,
}

impl Mlp {
    /// Weights and biases uniform in `+-1/sqrt(fan_in)`.
    pub fn new(config: MlpConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded_rng(seed);
        let mut params = ParameterSet::new();
        for (k, (fan_in, fan_out)) in config.layer_shapes().into_iter().enumerate() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut draw = |n: usize| -> Vec<f64> {
                (0..n).map(|_| rng.random_range(-bound..bound)).collect()
            };
            let w = draw(fan_in * fan_out);
            let b = draw(fan_out);
            params.push_block(&format!("layer{k}.weight"), w, true);
            params.push_block(&format!("layer{k}.bias"), b, false);
        }
        Ok(Mlp { config, params })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.config.input_dim {
            return Err(Error::usage(format!(
                "MLP expects {} features, got {}",
                self.config.input_dim,
                x.len()
            )));
        }
        Ok(())
    }

    /// Activations of every layer (input first, logit last).
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let p = self.params.values();
        let shapes = self.config.layer_shapes();
        let mut acts = Vec::with_capacity(shapes.len() + 1);
        acts.push(x.to_vec());
        let mut offset = 0;
        for (k, &(fan_in, fan_out)) in shapes.iter().enumerate() {
            let w = &p[offset..offset + fan_in * fan_out];
            let b = &p[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let prev = acts.last().expect("input");
            let last = k + 1 == shapes.len();
            let out: Vec<f64> = (0..fan_out)
                .map(|o| {
                    let z = b[o]
                        + w[o * fan_in..(o + 1) * fan_in]
                            .iter()
                            .zip(prev)
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                    if last {
                        z
                    } else {
                        z.tanh()
                    }
                })
                .collect();
            acts.push(out);
        }
        acts
    }
}

impl Model for Mlp {
    type Input = Vec<f64>;

    fn spec(&self) -> ModelSpec {
        ModelSpec::Mlp(self.config.clone())
    }

    fn params(&self) -> &ParameterSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    fn logit(&self, x: &Vec<f64>) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.activations(x).last().expect("output")[0])
    }

    fn logit_and_grad(&self, x: &Vec<f64>) -> Result<(f64, Vec<f64>)> {
        self.check_input(x)?;
        let acts = self.activations(x);
        let shapes = self.config.layer_shapes();
        let p = self.params.values();
        let mut grad = vec![0.0; p.len()];

        let mut offsets = Vec::with_capacity(shapes.len());
        let mut offset = 0;
        for &(i, o) in &shapes {
            offsets.push(offset);
            offset += i * o + o;
        }

        // d logit / d pre-activation of the current layer
        let mut delta = vec![1.0];
        for k in (0..shapes.len()).rev() {
            let (fan_in, fan_out) = shapes[k];
            let base = offsets[k];
            let input = &acts[k];
            for o in 0..fan_out {
                let row = base + o * fan_in;
                for i in 0..fan_in {
                    grad[row + i] = delta[o] * input[i];
                }
                grad[base + fan_in * fan_out + o] = delta[o];
            }
            if k == 0 {
                break;
            }
            let w = &p[base..base + fan_in * fan_out];
            delta = (0..fan_in)
                .map(|i| {
                    let back: f64 = (0..fan_out).map(|o| w[o * fan_in + i] * delta[o]).sum();
                    back * (1.0 - input[i] * input[i])
                })
                .collect();
        }
        Ok((acts.last().expect("output")[0], grad))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpOutput {
    pub logit: f64,
    pub loss: f64,
    /// `d loss / d parameter` for every flat parameter.
    pub gradient: Vec<f64>,
}

/// Single-sample forward pass, BCE loss and backpropagated gradient.
pub fn mlp_forward_backward(mlp: &Mlp, features: &[f64], label: u8) -> Result<MlpOutput> {
    if label > 1 {
        return Err(Error::validation(format!("label must be 0 or 1, got {label}")));
    }
    let (logit, mut gradient) = mlp.logit_and_grad(&features.to_vec())?;
    let dloss = sigmoid(logit) - f64::from(label);
    for g in &mut gradient {
        *g *= dloss;
    }
    Ok(MlpOutput {
        logit,
        loss: bce_with_logit(logit, label),
        gradient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_counts_of_baseline_shapes() {
        let counts: Vec<usize> = [vec![2], vec![4, 3], vec![9], vec![17]]
            .into_iter()
            .map(|h| MlpConfig::new(14, h).parameter_count())
            .collect();
        assert_eq!(counts, [33, 79, 145, 273]);
        assert_eq!(14 * 4 + 4 + 4 * 3 + 3 + 3 + 1, 79);
    }

    #[test]
    fn zero_weights_give_half_probability() {
        let mut mlp = Mlp::new(MlpConfig::new(14, vec![4, 3]), 0).unwrap();
        let n = mlp.params().len();
        mlp.params_mut().set_flat(&vec![0.0; n]).unwrap();
        let out = mlp_forward_backward(&mlp, &[0.3; 14], 1).unwrap();
        assert_eq!(out.logit, 0.0);
        assert!((out.loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_a_usage_error() {
        let mlp = Mlp::new(MlpConfig::new(14, vec![2]), 0).unwrap();
        assert!(matches!(mlp_forward_backward(&mlp, &[0.0; 13], 0), Err(Error::Usage(_))));
        assert!(Mlp::new(MlpConfig::new(14, vec![0]), 0).is_err());
    }

    #[test]
    fn backprop_matches_central_differences() {
        let mlp = Mlp::new(MlpConfig::new(5, vec![4, 3]), 11).unwrap();
        let x = vec![0.3, -1.2, 0.8, 2.0, -0.1];
        let out = mlp_forward_backward(&mlp, &x, 1).unwrap();
        let h = 1e-6;
        for k in 0..mlp.params().len() {
            let mut plus = mlp.clone();
            plus.params_mut().values_mut()[k] += h;
            let mut minus = mlp.clone();
            minus.params_mut().values_mut()[k] -= h;
            let lp = mlp_forward_backward(&plus, &x, 1).unwrap().loss;
            let lm = mlp_forward_backward(&minus, &x, 1).unwrap().loss;
            let fd = (lp - lm) / (2.0 * h);
            let g = out.gradient[k];
            assert!((fd - g).abs() <= 1e-6 * g.abs().max(1e-3), "param {k}: {fd} vs {g}");
        }
    }
}
