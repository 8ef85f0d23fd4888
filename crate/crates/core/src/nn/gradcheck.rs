use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{mse_loss, softmax_xent, Activation, DenseStack, Direction, LstmStack, Parameters};

/// Central-difference step used by [`grad_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Perturbs every parameter of `params` by `±GRAD_CHECK_STEP` and compares the
/// central difference of `loss` with `analytic`. Returns the largest relative
/// error over all parameters.
pub fn grad_check<P, F>(params: &P, analytic: &P, loss: F) -> f64
where
    P: Parameters + Clone,
    F: Fn(&P) -> f64,
{
    let h = GRAD_CHECK_STEP;
    let analytic = analytic.flatten();
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    let mut flat_index = 0;
    let n_slices = probe.param_slices().len();
    for s in 0..n_slices {
        let len = probe.param_slices()[s].len();
        for i in 0..len {
            let orig = probe.param_slices()[s][i];
            probe.param_slices_mut()[s][i] = orig + h;
            let up = loss(&probe);
            probe.param_slices_mut()[s][i] = orig - h;
            let down = loss(&probe);
            probe.param_slices_mut()[s][i] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(analytic[flat_index], numeric));
            flat_index += 1;
        }
    }
    worst
}


/// Worst relative error per component over a batch of randomly initialised
/// checks, plus a control where the analytic gradient is deliberately wrong.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradientReport {
    pub dense: f64,
    pub lstm: f64,
    pub softmax_xent: f64,
    pub mse: f64,
    /// Smallest error seen with a corrupted gradient; should be large.
    pub corrupted: f64,
}

impl GradientReport {
    pub fn worst(&self) -> f64 {
        self.dense.max(self.lstm).max(self.softmax_xent).max(self.mse)
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Runs the finite-difference check on a dense stack, a two-layer
/// bidirectional LSTM over five steps, and the softmax cross-entropy and MSE
/// losses, once per seed.
pub fn gradient_suite(seeds: impl IntoIterator<Item = u64>) -> GradientReport {
    let mut report = GradientReport { corrupted: f64::INFINITY, ..Default::default() };
    for seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let net = DenseStack::new(&[4, 7, 5, 3], Activation::Tanh, Activation::Linear, &mut rng);
        let x = random_vec(&mut rng, 4);
        let target = random_vec(&mut rng, 3);
        let dense_loss = |n: &DenseStack| mse_loss(&n.predict(&x).expect("width"), &target).expect("width").0;
        let (out, cache) = net.forward(&x).expect("width");
        let (_, g) = mse_loss(&out, &target).expect("width");
        let (grads, _) = net.backward(&cache, &g).expect("cache");
        report.dense = report.dense.max(grad_check(&net, &grads, dense_loss));

        let mut bad = grads.clone();
        let i = rng.random_range(0..bad.param_count());
        let mut flat_index = 0;
        for s in bad.param_slices_mut() {
            for v in s.iter_mut() {
                if flat_index == i {
                    *v = -*v + if v.abs() < 1e-3 { 1.0 } else { 0.0 };
                }
                flat_index += 1;
            }
        }
        report.corrupted = report.corrupted.min(grad_check(&net, &bad, dense_loss));

        let lstm = LstmStack::new(2, 3, 2, Direction::Bidirectional, &mut rng);
        let xs: Vec<Vec<f64>> = (0..5).map(|_| random_vec(&mut rng, 2)).collect();
        let weights: Vec<Vec<f64>> = (0..5).map(|_| random_vec(&mut rng, lstm.output_width())).collect();
        let lstm_loss = |n: &LstmStack| {
            let hs = n.predict(&xs).expect("width");
            hs.iter().zip(&weights).map(|(h, w)| super::dot(h, w)).sum::<f64>()
        };
        let (_, cache) = lstm.forward(&xs).expect("width");
        let (grads, _) = lstm.backward(&cache, &weights).expect("cache");
        report.lstm = report.lstm.max(grad_check(&lstm, &grads, lstm_loss));

        let logits = random_vec(&mut rng, 6).iter().map(|v| 3.0 * v).collect::<Vec<_>>();
        let class = rng.random_range(0..6);
        let (_, g) = softmax_xent(&logits, class).expect("class");
        let err = grad_check(&logits, &g, |l: &Vec<f64>| softmax_xent(l, class).expect("class").0);
        report.softmax_xent = report.softmax_xent.max(err);

        let prediction = random_vec(&mut rng, 5);
        let target = random_vec(&mut rng, 5);
        let (_, g) = mse_loss(&prediction, &target).expect("width");
        let err = grad_check(&prediction, &g, |p: &Vec<f64>| mse_loss(p, &target).expect("width").0);
        report.mse = report.mse.max(err);
    }
    report
}
