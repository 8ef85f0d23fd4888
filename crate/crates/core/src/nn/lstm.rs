use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::sigmoid;
use super::{Matrix, NnError, Parameters};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
    Bidirectional,
}

impl Direction {
    pub fn count(self) -> usize {
        match self {
            Direction::Bidirectional => 2,
            _ => 1,
        }
    }

    /// Whether the cell at `index` within a layer walks the sequence backwards.
    fn reversed(self, index: usize) -> bool {
        match self {
            Direction::Forward => false,
            Direction::Backward => true,
            Direction::Bidirectional => index == 1,
        }
    }
}

/// One LSTM cell. Gate rows are stacked as input, forget, cell, output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    pub w_input: Matrix,
    pub w_recurrent: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug)]
struct CellStep {
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Post-activation gates `[i, f, g, o]`, each `hidden` wide.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmCell {
    fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].iter_mut().for_each(|b| *b = 1.0);
        Self {
            w_input: Matrix::glorot(4 * hidden, input, input, hidden, rng),
            w_recurrent: Matrix::glorot(4 * hidden, hidden, hidden, hidden, rng),
            bias,
        }
    }

    fn hidden(&self) -> usize {
        self.w_recurrent.cols()
    }

    fn zeros_like(&self) -> Self {
        Self {
            w_input: Matrix::zeros(self.w_input.rows(), self.w_input.cols()),
            w_recurrent: Matrix::zeros(self.w_recurrent.rows(), self.w_recurrent.cols()),
            bias: vec![0.0; self.bias.len()],
        }
    }

    /// Runs the recurrence over `xs`; hidden states are returned in time order,
    /// step records in processing order.
    fn run(&self, xs: &[Vec<f64>], reverse: bool) -> (Vec<Vec<f64>>, Vec<CellStep>) {
        let h = self.hidden();
        let n = xs.len();
        let mut hs = vec![Vec::new(); n];
        let mut steps = Vec::with_capacity(n);
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        for s in 0..n {
            let t = if reverse { n - 1 - s } else { s };
            let mut a = self.bias.clone();
            self.w_input.matvec_acc(&xs[t], &mut a);
            self.w_recurrent.matvec_acc(&h_prev, &mut a);
            for (k, v) in a.iter_mut().enumerate() {
                *v = if (2 * h..3 * h).contains(&k) { v.tanh() } else { sigmoid(*v) };
            }
            let mut c = vec![0.0; h];
            let mut tanh_c = vec![0.0; h];
            let mut h_new = vec![0.0; h];
            for j in 0..h {
                c[j] = a[h + j] * c_prev[j] + a[j] * a[2 * h + j];
                tanh_c[j] = c[j].tanh();
                h_new[j] = a[3 * h + j] * tanh_c[j];
            }
            steps.push(CellStep {
                h_prev: std::mem::replace(&mut h_prev, h_new.clone()),
                c_prev: std::mem::replace(&mut c_prev, c),
                gates: a,
                tanh_c,
            });
            hs[t] = h_new;
        }
        (hs, steps)
    }

    /// Backpropagation through time. `dhs` are output gradients in time order;
    /// input gradients are added into `dxs`.
    fn backprop(&self, xs: &[Vec<f64>], steps: &[CellStep], dhs: &[Vec<f64>], reverse: bool, grads: &mut LstmCell, dxs: &mut [Vec<f64>]) {
        let h = self.hidden();
        let n = xs.len();
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        for s in (0..n).rev() {
            let t = if reverse { n - 1 - s } else { s };
            let st = &steps[s];
            let g = &st.gates;
            for j in 0..h {
                let dh = dhs[t][j] + dh_next[j];
                let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                let tc = st.tanh_c[j];
                let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
                dz[j] = dc * gg * i * (1.0 - i);
                dz[h + j] = dc * st.c_prev[j] * f * (1.0 - f);
                dz[2 * h + j] = dc * i * (1.0 - gg * gg);
                dz[3 * h + j] = dh * tc * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            grads.w_input.outer_acc(&dz, &xs[t]);
            grads.w_recurrent.outer_acc(&dz, &st.h_prev);
            for (b, d) in grads.bias.iter_mut().zip(&dz) {
                *b += d;
            }
            self.w_input.matvec_t_acc(&dz, &mut dxs[t]);
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            self.w_recurrent.matvec_t_acc(&dz, &mut dh_next);
        }
    }
}

/// Stack of (optionally bidirectional) LSTM layers. A bidirectional layer
/// emits `[forward, backward]` hidden states concatenated per step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmStack {
    input_width: usize,
    hidden: usize,
    direction: Direction,
    layers: Vec<Vec<LstmCell>>,
}

/// Per-layer inputs and per-cell step records from [`LstmStack::forward`].
#[derive(Clone, Debug)]
pub struct LstmCache {
    layer_inputs: Vec<Vec<Vec<f64>>>,
    steps: Vec<Vec<Vec<CellStep>>>,
}

impl LstmStack {
    pub fn new<R: Rng + ?Sized>(input_width: usize, hidden: usize, n_layers: usize, direction: Direction, rng: &mut R) -> Self {
        assert!(n_layers >= 1 && hidden >= 1 && input_width >= 1);
        let dirs = direction.count();
        let layers = (0..n_layers)
            .map(|l| {
                let w = if l == 0 { input_width } else { hidden * dirs };
                (0..dirs).map(|_| LstmCell::new(w, hidden, rng)).collect()
            })
            .collect();
        Self {
            input_width,
            hidden,
            direction,
            layers,
        }
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn output_width(&self) -> usize {
        self.hidden * self.direction.count()
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn cells_mut(&mut self) -> impl Iterator<Item = &mut LstmCell> {
        self.layers.iter_mut().flatten()
    }

    fn check_sequence(&self, xs: &[Vec<f64>]) -> Result<(), NnError> {
        if xs.is_empty() {
            return Err(NnError::EmptySequence);
        }
        if let Some(bad) = xs.iter().find(|x| x.len() != self.input_width) {
            return Err(NnError::WidthMismatch {
                expected: self.input_width,
                actual: bad.len(),
            });
        }
        Ok(())
    }

    /// Hidden states of the top layer for every step, without a cache.
    pub fn predict(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, NnError> {
        Ok(self.forward(xs)?.0)
    }

    pub fn forward(&self, xs: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, LstmCache), NnError> {
        self.check_sequence(xs)?;
        let n = xs.len();
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut all_steps = Vec::with_capacity(self.layers.len());
        let mut cur = xs.to_vec();
        for cells in &self.layers {
            let mut out = vec![Vec::with_capacity(self.output_width()); n];
            let mut layer_steps = Vec::with_capacity(cells.len());
            for (d, cell) in cells.iter().enumerate() {
                let (hs, steps) = cell.run(&cur, self.direction.reversed(d));
                for (o, h) in out.iter_mut().zip(hs) {
                    o.extend_from_slice(&h);
                }
                layer_steps.push(steps);
            }
            layer_inputs.push(std::mem::replace(&mut cur, out));
            all_steps.push(layer_steps);
        }
        Ok((
            cur,
            LstmCache {
                layer_inputs,
                steps: all_steps,
            },
        ))
    }

    /// Full-sequence BPTT. Returns parameter gradients and the gradient with
    /// respect to every input step.
    pub fn backward(&self, cache: &LstmCache, grad_outputs: &[Vec<f64>]) -> Result<(LstmStack, Vec<Vec<f64>>), NnError> {
        let mut grads = self.zeros_like();
        let dx = self.backward_into(cache, grad_outputs, &mut grads)?;
        Ok((grads, dx))
    }

    pub fn backward_into(&self, cache: &LstmCache, grad_outputs: &[Vec<f64>], grads: &mut LstmStack) -> Result<Vec<Vec<f64>>, NnError> {
        if cache.layer_inputs.len() != self.layers.len() || cache.steps.len() != self.layers.len() {
            return Err(NnError::StaleCache("layer count"));
        }
        let n = cache.layer_inputs[0].len();
        if grad_outputs.len() != n {
            return Err(NnError::StaleCache("sequence length"));
        }
        if let Some(bad) = grad_outputs.iter().find(|g| g.len() != self.output_width()) {
            return Err(NnError::WidthMismatch {
                expected: self.output_width(),
                actual: bad.len(),
            });
        }
        let h = self.hidden;
        let mut d_out = grad_outputs.to_vec();
        for l in (0..self.layers.len()).rev() {
            let xs = &cache.layer_inputs[l];
            let width = xs[0].len();
            if width != self.layers[l][0].w_input.cols() {
                return Err(NnError::StaleCache("layer width"));
            }
            let mut dxs = vec![vec![0.0; width]; n];
            for (d, cell) in self.layers[l].iter().enumerate() {
                let dhs: Vec<Vec<f64>> = d_out.iter().map(|g| g[d * h..(d + 1) * h].to_vec()).collect();
                cell.backprop(xs, &cache.steps[l][d], &dhs, self.direction.reversed(d), &mut grads.layers[l][d], &mut dxs);
            }
            d_out = dxs;
        }
        Ok(d_out)
    }
}

impl Parameters for LstmStack {
    fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flatten()
            .flat_map(|c| [c.w_input.as_slice(), c.w_recurrent.as_slice(), c.bias.as_slice()])
            .collect()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flatten()
            .flat_map(|c| [c.w_input.as_mut_slice(), c.w_recurrent.as_mut_slice(), c.bias.as_mut_slice()])
            .collect()
    }

    fn zeros_like(&self) -> Self {
        Self {
            input_width: self.input_width,
            hidden: self.hidden,
            direction: self.direction,
            layers: self.layers.iter().map(|cells| cells.iter().map(LstmCell::zeros_like).collect()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seq(rng: &mut ChaCha8Rng, n: usize, w: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..w).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn zero_parameters_give_zero_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = LstmStack::new(2, 3, 2, Direction::Bidirectional, &mut rng);
        for s in net.param_slices_mut() {
            s.iter_mut().for_each(|v| *v = 0.0);
        }
        let out = net.predict(&seq(&mut rng, 4, 2)).unwrap();
        assert!(out.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(out[0].len(), 6);
    }

    #[test]
    fn single_step_bidirectional_sees_same_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = LstmStack::new(1, 2, 1, Direction::Bidirectional, &mut rng);
        let fwd = net.layers[0][0].clone();
        net.layers[0][1] = fwd;
        let out = net.predict(&[vec![0.7]]).unwrap();
        assert_eq!(out[0][..2], out[0][2..]);
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = LstmStack::new(1, 2, 1, Direction::Forward, &mut rng);
        assert_eq!(net.predict(&[]).unwrap_err(), NnError::EmptySequence);
    }

    #[test]
    fn zero_output_gradients_give_zero_bundle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = LstmStack::new(2, 3, 2, Direction::Bidirectional, &mut rng);
        let xs = seq(&mut rng, 5, 2);
        let (out, cache) = net.forward(&xs).unwrap();
        let zeros: Vec<Vec<f64>> = out.iter().map(|o| vec![0.0; o.len()]).collect();
        let (g, dx) = net.backward(&cache, &zeros).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
        assert!(dx.iter().flatten().all(|&v| v == 0.0));
    }

    /// Two steps of a one-unit cell, differentiated by hand.
    #[test]
    fn two_step_chain_matches_symbolic_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = LstmStack::new(1, 1, 1, Direction::Forward, &mut rng);
        let cell = &net.layers[0][0];
        let (x1, x2) = (0.6, -0.4);
        let w = cell.w_input.as_slice();
        let u = cell.w_recurrent.as_slice();
        let b = &cell.bias;
        let pre = |k: usize, x: f64, hp: f64| w[k] * x + u[k] * hp + b[k];
        let (i1, g1, o1) = (sigmoid(pre(0, x1, 0.0)), pre(2, x1, 0.0).tanh(), sigmoid(pre(3, x1, 0.0)));
        let c1 = i1 * g1;
        let h1 = o1 * c1.tanh();
        let (i2, f2, g2, o2) = (
            sigmoid(pre(0, x2, h1)),
            sigmoid(pre(1, x2, h1)),
            pre(2, x2, h1).tanh(),
            sigmoid(pre(3, x2, h1)),
        );
        let c2 = f2 * c1 + i2 * g2;
        let t2 = c2.tanh();
        let d_ug = o2 * (1.0 - t2 * t2) * i2 * (1.0 - g2 * g2) * h1;
        let d_uo = t2 * o2 * (1.0 - o2) * h1;

        let (out, cache) = net.forward(&[vec![x1], vec![x2]]).unwrap();
        assert!((out[1][0] - o2 * t2).abs() < 1e-15);
        let (grads, _) = net.backward(&cache, &[vec![0.0], vec![1.0]]).unwrap();
        let gu = grads.layers[0][0].w_recurrent.as_slice();
        assert!((gu[2] - d_ug).abs() < 1e-14);
        assert!((gu[3] - d_uo).abs() < 1e-14);
    }

    #[test]
    fn bidirectional_stack_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = LstmStack::new(2, 4, 2, Direction::Bidirectional, &mut rng);
        let xs = seq(&mut rng, 5, 2);
        let weights = seq(&mut rng, 5, 8);
        let loss = |p: &LstmStack| -> f64 {
            let out = p.predict(&xs).unwrap();
            out.iter().zip(&weights).map(|(o, w)| o.iter().zip(w).map(|(a, b)| a * b).sum::<f64>()).sum()
        };
        let (_, cache) = net.forward(&xs).unwrap();
        let (analytic, _) = net.backward(&cache, &weights).unwrap();
        let err = grad_check(&net, &analytic, loss);
        assert!(err < 1e-4, "max relative error {err}");
    }
}
