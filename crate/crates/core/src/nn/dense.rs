use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Matrix, NnError, Parameters};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, v: &mut [f64]) {
        match self {
            Activation::Relu => v.iter_mut().for_each(|x| *x = x.max(0.0)),
            Activation::Tanh => v.iter_mut().for_each(|x| *x = x.tanh()),
            Activation::Linear => {}
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn input_width(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_width(&self) -> usize {
        self.weights.rows()
    }

    fn forward_into(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        self.weights.matvec_acc(x, &mut out);
        self.activation.apply(&mut out);
        out
    }
}

/// Feed-forward stack of affine layers, each followed by its activation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseStack {
    layers: Vec<DenseLayer>,
}

/// Activations recorded by [`DenseStack::forward`]; `values[0]` is the input
/// and `values[i + 1]` the output of layer `i`.
#[derive(Clone, Debug)]
pub struct DenseCache {
    values: Vec<Vec<f64>>,
}

impl DenseCache {
    pub fn output(&self) -> &[f64] {
        self.values.last().expect("cache always holds the input")
    }
}

impl DenseStack {
    /// Builds a stack with `widths[0]` inputs and `widths.last()` outputs.
    /// Hidden layers use `hidden`, the final layer uses `output`.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        assert!(widths.len() >= 2, "a dense stack needs at least an input and an output width");
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (widths[i], widths[i + 1]);
                DenseLayer {
                    weights: Matrix::glorot(fan_out, fan_in, fan_in, fan_out, rng),
                    bias: vec![0.0; fan_out],
                    activation: if i + 1 == n { output } else { hidden },
                }
            })
            .collect();
        Self { layers }
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::WidthMismatch { expected: 1, actual: 0 });
        }
        for layer in &layers {
            if layer.bias.len() != layer.output_width() {
                return Err(NnError::WidthMismatch {
                    expected: layer.output_width(),
                    actual: layer.bias.len(),
                });
            }
        }
        for pair in layers.windows(2) {
            if pair[0].output_width() != pair[1].input_width() {
                return Err(NnError::WidthMismatch {
                    expected: pair[0].output_width(),
                    actual: pair[1].input_width(),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map(DenseLayer::output_width).unwrap_or(0)
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NnError> {
        if x.len() != self.input_width() {
            return Err(NnError::WidthMismatch {
                expected: self.input_width(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Forward pass without keeping intermediate activations.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check_input(x)?;
        let mut cur = self.layers[0].forward_into(x);
        for layer in &self.layers[1..] {
            cur = layer.forward_into(&cur);
        }
        Ok(cur)
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, DenseCache), NnError> {
        self.check_input(x)?;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(x.to_vec());
        for layer in &self.layers {
            let next = layer.forward_into(values.last().unwrap());
            values.push(next);
        }
        let out = values.last().unwrap().clone();
        Ok((out, DenseCache { values }))
    }

    /// Reverse pass; returns fresh gradients and the gradient w.r.t. the input.
    pub fn backward(&self, cache: &DenseCache, grad_output: &[f64]) -> Result<(DenseStack, Vec<f64>), NnError> {
        let mut grads = self.zeros_like();
        let dx = self.backward_into(cache, grad_output, &mut grads)?;
        Ok((grads, dx))
    }

    /// Reverse pass that adds into `grads` (for mini-batch accumulation).
    pub fn backward_into(&self, cache: &DenseCache, grad_output: &[f64], grads: &mut DenseStack) -> Result<Vec<f64>, NnError> {
        if cache.values.len() != self.layers.len() + 1 {
            return Err(NnError::StaleCache("layer count"));
        }
        for (layer, v) in self.layers.iter().zip(&cache.values) {
            if v.len() != layer.input_width() {
                return Err(NnError::StaleCache("layer width"));
            }
        }
        if grad_output.len() != self.output_width() {
            return Err(NnError::WidthMismatch {
                expected: self.output_width(),
                actual: grad_output.len(),
            });
        }
        let mut delta = grad_output.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let out = &cache.values[i + 1];
            for (d, &y) in delta.iter_mut().zip(out) {
                *d *= layer.activation.derivative_from_output(y);
            }
            let g = &mut grads.layers[i];
            g.weights.outer_acc(&delta, &cache.values[i]);
            for (gb, d) in g.bias.iter_mut().zip(&delta) {
                *gb += d;
            }
            let mut dx = vec![0.0; layer.input_width()];
            layer.weights.matvec_t_acc(&delta, &mut dx);
            delta = dx;
        }
        Ok(delta)
    }
}

impl Parameters for DenseStack {
    fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer {
                    weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
                    bias: vec![0.0; l.bias.len()],
                    activation: l.activation,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{grad_check, mse_loss};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear_layer(weights: Matrix, bias: Vec<f64>) -> DenseStack {
        DenseStack::from_layers(vec![DenseLayer {
            weights,
            bias,
            activation: Activation::Linear,
        }])
        .unwrap()
    }

    #[test]
    fn identity_linear_layer_passes_input_through() {
        let net = linear_layer(Matrix::identity(3), vec![0.0; 3]);
        assert_eq!(net.predict(&[1.5, -2.0, 0.25]).unwrap(), vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn relu_of_negative_preactivations_is_zero() {
        let net = DenseStack::from_layers(vec![DenseLayer {
            weights: Matrix::identity(2),
            bias: vec![-10.0, -10.0],
            activation: Activation::Relu,
        }])
        .unwrap();
        assert_eq!(net.predict(&[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn width_mismatch_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = DenseStack::new(&[2, 4, 3], Activation::Relu, Activation::Linear, &mut rng);
        assert!(matches!(net.predict(&[1.0]), Err(NnError::WidthMismatch { expected: 2, actual: 1 })));
    }

    #[test]
    fn zero_output_gradient_gives_zero_bundle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = DenseStack::new(&[2, 8, 3], Activation::Tanh, Activation::Linear, &mut rng);
        let (_, cache) = net.forward(&[0.3, -0.7]).unwrap();
        let (g, dx) = net.backward(&cache, &[0.0; 3]).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_linear_layer_weight_gradient_is_outer_product() {
        let net = linear_layer(Matrix::from_vec(2, 3, vec![0.1, 0.2, 0.3, -0.1, 0.5, 0.0]).unwrap(), vec![0.0, 1.0]);
        let x = [1.0, -2.0, 0.5];
        let (_, cache) = net.forward(&x).unwrap();
        let g_out = [0.7, -1.3];
        let (g, _) = net.backward(&cache, &g_out).unwrap();
        let w = g.layers()[0].weights.as_slice();
        for r in 0..2 {
            for c in 0..3 {
                assert_eq!(w[r * 3 + c], g_out[r] * x[c]);
            }
        }
        assert_eq!(g.layers()[0].bias, g_out.to_vec());
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = DenseStack::new(&[2, 4, 3], Activation::Relu, Activation::Linear, &mut rng);
        let b = DenseStack::new(&[2, 4, 4, 3], Activation::Relu, Activation::Linear, &mut rng);
        let (_, cache) = b.forward(&[0.1, 0.2]).unwrap();
        assert!(matches!(a.backward(&cache, &[0.0; 3]), Err(NnError::StaleCache(_))));
    }

    #[test]
    fn q_network_shape_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = DenseStack::new(&[2, 64, 64, 9], Activation::Relu, Activation::Linear, &mut rng);
        let x = [0.4, 0.8];
        let target: Vec<f64> = (0..9).map(|i| i as f64 * 0.1).collect();
        let (out, cache) = net.forward(&x).unwrap();
        let (_, g_out) = mse_loss(&out, &target).unwrap();
        let (analytic, _) = net.backward(&cache, &g_out).unwrap();
        let err = grad_check(&net, &analytic, |p| mse_loss(&p.predict(&x).unwrap(), &target).unwrap().0);
        assert!(err < 1e-4, "max relative error {err}");
    }
}
