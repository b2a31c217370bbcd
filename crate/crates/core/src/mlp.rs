//! Fully-connected regression network used as a data-driven low-fidelity
//! model: tanh hidden layers, linear output, full-batch gradient descent on
//! mean-squared error with an L2 penalty on the weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden_layers: usize,
    pub neurons_per_layer: usize,
    pub l2_lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden_layers: 3,
            neurons_per_layer: 20,
            l2_lambda: 1e-3,
            learning_rate: 0.002,
            epochs: 5000,
            seed: 0,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers == 0 {
            return Err(Error::invalid("hidden_layers", "must be >= 1"));
        }
        if self.neurons_per_layer == 0 {
            return Err(Error::invalid("neurons_per_layer", "must be >= 1"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate", "must be > 0"));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(Error::invalid("l2_lambda", "must be >= 0"));
        }
        Ok(())
    }
}

/// A dense layer; `weights` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.inputs)
                .zip(&self.biases)
                .map(|(w, b)| b + w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()),
        );
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    layers: Vec<Layer>,
    x_mean: Vec<f64>,
    x_scale: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
    /// Training loss per epoch (standardized units, penalty included).
    losses: Vec<f64>,
}

impl MlpModel {
    /// Xavier-uniform weights and zero biases, identity scaling.
    pub fn initialize(input_dim: usize, config: &MlpConfig) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::invalid("input_dim", "must be >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let widths: Vec<usize> = std::iter::once(input_dim)
            .chain(std::iter::repeat(config.neurons_per_layer).take(config.hidden_layers))
            .chain(std::iter::once(1))
            .collect();
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Layer {
                    inputs: fan_in,
                    outputs: fan_out,
                    weights: (0..fan_in * fan_out)
                        .map(|_| rng.random_range(-limit..limit))
                        .collect(),
                    biases: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(Self {
            layers,
            x_mean: vec![0.0; input_dim],
            x_scale: vec![1.0; input_dim],
            y_mean: 0.0,
            y_scale: 1.0,
            losses: Vec::new(),
        })
    }

    /// Builds a model from explicit layers and scaling constants.
    pub fn from_parts(
        layers: Vec<Layer>,
        x_mean: Vec<f64>,
        x_scale: Vec<f64>,
        y_mean: f64,
        y_scale: f64,
    ) -> Result<Self> {
        if layers.is_empty() || layers.last().map(|l| l.outputs) != Some(1) {
            return Err(Error::invalid(
                "layers",
                "need at least one layer ending in a single output",
            ));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::invalid("layers", "consecutive widths do not match"));
            }
        }
        for l in &layers {
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(Error::invalid(
                    "layers",
                    "weight/bias sizes do not match widths",
                ));
            }
        }
        if x_mean.len() != layers[0].inputs || x_scale.len() != layers[0].inputs {
            return Err(Error::invalid(
                "scaling",
                "length must equal the input width",
            ));
        }
        Ok(Self {
            layers,
            x_mean,
            x_scale,
            y_mean,
            y_scale,
            losses: Vec::new(),
        })
    }

    /// Trains a network on (x, y) from a fresh seeded initialization.
    pub fn train(x: &[Vec<f64>], y: &[f64], config: &MlpConfig) -> Result<Self> {
        config.validate()?;
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::invalid(
                "training set",
                "need matching, non-empty inputs and targets",
            ));
        }
        let dim = x[0].len();
        if x.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid(
                "training set",
                "inputs have inconsistent dimension",
            ));
        }
        let mut model = Self::initialize(dim, config)?;
        let n = x.len() as f64;
        for d in 0..dim {
            let mean = x.iter().map(|r| r[d]).sum::<f64>() / n;
            let sd = (x.iter().map(|r| (r[d] - mean).powi(2)).sum::<f64>() / n).sqrt();
            model.x_mean[d] = mean;
            model.x_scale[d] = if sd > 0.0 { sd } else { 1.0 };
        }
        model.y_mean = y.iter().sum::<f64>() / n;
        let sd = (y.iter().map(|v| (v - model.y_mean).powi(2)).sum::<f64>() / n).sqrt();
        model.y_scale = if sd > 0.0 { sd } else { 1.0 };

        let xs: Vec<Vec<f64>> = x.iter().map(|r| model.standardize(r)).collect();
        let ys: Vec<f64> = y
            .iter()
            .map(|v| (v - model.y_mean) / model.y_scale)
            .collect();
        let mut params = model.parameters();
        model.losses.reserve(config.epochs);
        for epoch in 1..=config.epochs {
            let (loss, grad) = model.loss_and_gradient(&xs, &ys, config.l2_lambda);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::TrainingDiverged { epoch });
            }
            model.losses.push(loss);
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= config.learning_rate * g;
            }
            model.set_parameters(&params);
        }
        Ok(model)
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.x_mean)
            .zip(&self.x_scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    /// Network output in standardized units for an already standardized input.
    fn forward_standardized(&self, x: &[f64]) -> f64 {
        let mut a = x.to_vec();
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward(&a, &mut z);
            if i < last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            std::mem::swap(&mut a, &mut z);
        }
        a[0]
    }

    /// Un-standardized prediction at `x`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.input_dim());
        self.y_mean + self.y_scale * self.forward_standardized(&self.standardize(x))
    }

    /// Mean-squared error plus `l2_lambda · ‖weights‖²` on standardized data,
    /// with its gradient with respect to [`parameters`](Self::parameters).
    pub fn loss_and_gradient(
        &self,
        xs: &[Vec<f64>],
        ys: &[f64],
        l2_lambda: f64,
    ) -> (f64, Vec<f64>) {
        let n = xs.len() as f64;
        let depth = self.layers.len();
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = self
            .layers
            .iter()
            .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.biases.len()]))
            .collect();
        let mut mse = 0.0;
        // activations[k] is the input to layer k
        let mut activations: Vec<Vec<f64>> = vec![Vec::new(); depth + 1];
        for (x, &y) in xs.iter().zip(ys) {
            activations[0].clear();
            activations[0].extend_from_slice(x);
            for k in 0..depth {
                let (head, tail) = activations.split_at_mut(k + 1);
                self.layers[k].forward(&head[k], &mut tail[0]);
                if k + 1 < depth {
                    tail[0].iter_mut().for_each(|v| *v = v.tanh());
                }
            }
            let err = activations[depth][0] - y;
            mse += err * err / n;

            let mut delta = vec![2.0 * err / n];
            for k in (0..depth).rev() {
                let layer = &self.layers[k];
                let input = &activations[k];
                let (gw, gb) = &mut grads[k];
                for (o, d) in delta.iter().enumerate() {
                    gb[o] += d;
                    for (g, a) in gw[o * layer.inputs..(o + 1) * layer.inputs]
                        .iter_mut()
                        .zip(input)
                    {
                        *g += d * a;
                    }
                }
                if k > 0 {
                    // back through the weights, then through tanh of the previous layer
                    let mut prev = vec![0.0; layer.inputs];
                    for (o, d) in delta.iter().enumerate() {
                        for (p, w) in prev
                            .iter_mut()
                            .zip(&layer.weights[o * layer.inputs..(o + 1) * layer.inputs])
                        {
                            *p += d * w;
                        }
                    }
                    for (p, a) in prev.iter_mut().zip(input) {
                        *p *= 1.0 - a * a;
                    }
                    delta = prev;
                }
            }
        }
        let mut penalty = 0.0;
        for (layer, (gw, _)) in self.layers.iter().zip(grads.iter_mut()) {
            for (g, w) in gw.iter_mut().zip(&layer.weights) {
                penalty += w * w;
                *g += 2.0 * l2_lambda * w;
            }
        }
        let flat = grads
            .into_iter()
            .flat_map(|(w, b)| w.into_iter().chain(b))
            .collect();
        (mse + l2_lambda * penalty, flat)
    }

    /// All weights and biases, layer by layer (weights then biases).
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn set_parameters(&mut self, params: &[f64]) {
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *w = it.next().expect("parameter vector too short");
            }
        }
        assert!(it.next().is_none(), "parameter vector too long");
    }

    pub fn weight_norm_sq(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| &l.weights)
            .map(|w| w * w)
            .sum()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_scaling(&self) -> (f64, f64) {
        (self.y_mean, self.y_scale)
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_data() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 / 11.0]).collect();
        let y = x.iter().map(|v| 2.0 * v[0]).collect();
        (x, y)
    }

    #[test]
    fn zero_weights_return_output_bias() {
        let layers = vec![
            Layer {
                inputs: 2,
                outputs: 3,
                weights: vec![0.0; 6],
                biases: vec![0.1, -0.2, 0.3],
            },
            Layer {
                inputs: 3,
                outputs: 1,
                weights: vec![0.0; 3],
                biases: vec![1.75],
            },
        ];
        let m = MlpModel::from_parts(layers, vec![0.0; 2], vec![1.0; 2], 0.0, 1.0).unwrap();
        assert_eq!(m.predict(&[3.0, -4.0]), 1.75);
    }

    #[test]
    fn learns_a_line() {
        let (x, y) = line_data();
        let m = MlpModel::train(&x, &y, &MlpConfig::default()).unwrap();
        let mid = m.predict(&[0.5]);
        assert!((mid - 1.0).abs() < 0.05, "{mid}");
        assert!(m.losses()[m.losses().len() - 1] <= m.losses()[0]);
    }

    #[test]
    fn constant_target() {
        let x: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, (i as f64).sqrt()]).collect();
        let c = -4.0;
        let y = vec![c; 12];
        let cfg = MlpConfig {
            l2_lambda: 0.0,
            ..MlpConfig::default()
        };
        let m = MlpModel::train(&x, &y, &cfg).unwrap();
        for xi in &x {
            let p = m.predict(xi);
            assert!((p - c).abs() <= c.abs() * 1e-2 + 1e-3, "{p}");
        }
    }

    #[test]
    fn deterministic_training_and_prediction() {
        let (x, y) = line_data();
        let cfg = MlpConfig {
            epochs: 300,
            seed: 9,
            ..MlpConfig::default()
        };
        let a = MlpModel::train(&x, &y, &cfg).unwrap();
        let b = MlpModel::train(&x, &y, &cfg).unwrap();
        assert_eq!(a.parameters(), b.parameters());
        assert_eq!(a.predict(&[0.3]).to_bits(), a.predict(&[0.3]).to_bits());
    }

    #[test]
    fn divergence_is_reported() {
        let (x, y) = line_data();
        let cfg = MlpConfig {
            learning_rate: 1e6,
            epochs: 50,
            ..MlpConfig::default()
        };
        assert!(matches!(
            MlpModel::train(&x, &y, &cfg),
            Err(Error::TrainingDiverged { .. })
        ));
    }

    #[test]
    fn rejects_bad_config() {
        for cfg in [
            MlpConfig {
                hidden_layers: 0,
                ..MlpConfig::default()
            },
            MlpConfig {
                learning_rate: 0.0,
                ..MlpConfig::default()
            },
            MlpConfig {
                l2_lambda: -1.0,
                ..MlpConfig::default()
            },
        ] {
            assert!(cfg.validate().is_err());
        }
    }
}
