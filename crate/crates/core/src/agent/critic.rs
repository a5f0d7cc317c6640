//! Reward regressor `Q(e, price)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::policy::ActionValue;
use crate::error::{Error, Result};
use crate::nn::{Activation, AdamState, DenseNet, Gradients, HIDDEN_ACTIVATION};

/// The price enters the network divided by `price_scale` (normally `p_max`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Critic {
    net: DenseNet,
    state_dim: usize,
    price_scale: f64,
}

impl Critic {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, hidden: usize, price_scale: f64, rng: &mut R) -> Self {
        let net = DenseNet::new(
            &[state_dim + 1, hidden, hidden, 1],
            HIDDEN_ACTIVATION,
            Activation::Identity,
            rng,
        );
        Self {
            net,
            state_dim,
            price_scale,
        }
    }

    pub fn from_net(net: DenseNet, state_dim: usize, price_scale: f64) -> Result<Self> {
        if net.input_dim() != state_dim + 1 || net.output_dim() != 1 {
            return Err(Error::ShapeMismatch {
                expected: state_dim + 1,
                actual: net.input_dim(),
            });
        }
        Ok(Self {
            net,
            state_dim,
            price_scale,
        })
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut DenseNet {
        &mut self.net
    }

    pub fn price_scale(&self) -> f64 {
        self.price_scale
    }

    fn inputs(&self, states: ArrayView2<f64>, prices: ArrayView1<f64>) -> Array2<f64> {
        assert_eq!(states.ncols(), self.state_dim, "critic state width");
        assert_eq!(states.nrows(), prices.len(), "critic batch");
        let mut x = Array2::zeros((states.nrows(), self.state_dim + 1));
        x.slice_mut(ndarray::s![.., ..self.state_dim]).assign(&states);
        x.column_mut(self.state_dim).assign(&prices.mapv(|p| p / self.price_scale));
        x
    }

    pub fn q(&self, states: ArrayView2<f64>, prices: ArrayView1<f64>) -> Array1<f64> {
        let x = self.inputs(states, prices);
        self.net.forward_batch(x.view()).expect("critic input").column(0).to_owned()
    }

    /// Mean squared error against `targets` and its parameter gradient.
    pub fn mse_gradient(
        &self,
        states: ArrayView2<f64>,
        prices: ArrayView1<f64>,
        targets: ArrayView1<f64>,
    ) -> (f64, Gradients) {
        let n = targets.len() as f64;
        let trace = self.net.forward_trace(self.inputs(states, prices)).expect("critic input");
        let resid = &trace.output().column(0) - &targets;
        let loss = resid.mapv(|r| r * r).sum() / n;
        let upstream = resid.mapv(|r| 2.0 * r / n).insert_axis(Axis(1));
        let (grads, _) = self.net.backward(&trace, upstream.view()).expect("critic trace");
        (loss, grads)
    }
}

impl ActionValue for Critic {
    fn evaluate(&self, states: ArrayView2<f64>, prices: ArrayView1<f64>) -> (Array1<f64>, Array1<f64>) {
        let trace = self.net.forward_trace(self.inputs(states, prices)).expect("critic input");
        let q = trace.output().column(0).to_owned();
        let ones = Array2::ones((states.nrows(), 1));
        let gx = self.net.input_gradient(&trace, ones.view()).expect("critic trace");
        let dq = gx.column(self.state_dim).mapv(|g| g / self.price_scale);
        (q, dq)
    }
}

/// One regression step towards `targets`. Returns the loss before the step,
/// or `None` when fewer than two samples are given.
pub fn update_critic(
    critic: &mut Critic,
    states: ArrayView2<f64>,
    prices: ArrayView1<f64>,
    targets: ArrayView1<f64>,
    adam: &mut AdamState,
) -> Option<f64> {
    if targets.len() < 2 {
        return None;
    }
    let (loss, grads) = critic.mse_gradient(states, prices, targets);
    adam.update_net(critic.net_mut(), &grads);
    Some(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Dense;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn set_param(net: &mut DenseNet, mut k: usize, f: impl Fn(f64) -> f64) {
        for slice in net.params_mut() {
            if k < slice.len() {
                slice[k] = f(slice[k]);
                return;
            }
            k -= slice.len();
        }
    }

    #[test]
    fn exact_fit_has_zero_loss_and_only_decay_moves_weights() {
        // Q = 0.5 * e + 2 * (p / 10).
        let layer = Dense {
            weight: array![[0.5], [2.0]],
            bias: array![0.0],
            activation: Activation::Identity,
        };
        let mut critic = Critic::from_net(DenseNet::from_layers(vec![layer]).unwrap(), 1, 10.0).unwrap();
        let states = array![[1.0], [2.0], [-1.0]];
        let prices = array![4.0, 6.0, 8.0];
        let targets = critic.q(states.view(), prices.view());
        let before = critic.net().flatten();
        let mut adam = AdamState::for_net(critic.net(), 1e-3, 1e-4);
        let loss = update_critic(&mut critic, states.view(), prices.view(), targets.view(), &mut adam).unwrap();
        assert_eq!(loss, 0.0);
        for (a, b) in critic.net().flatten().iter().zip(&before) {
            assert_eq!(*a, b * (1.0 - 1e-3 * 1e-4));
        }
    }

    #[test]
    fn tiny_batches_are_skipped() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut critic = Critic::new(2, 8, 20.0, &mut rng);
        let before = critic.clone();
        let mut adam = AdamState::for_net(critic.net(), 1e-3, 1e-4);
        let states = array![[0.1, 0.2]];
        assert!(update_critic(&mut critic, states.view(), array![3.0].view(), array![1.0].view(), &mut adam).is_none());
        assert_eq!(critic, before);
    }

    #[test]
    fn learns_a_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut critic = Critic::new(3, 32, 20.0, &mut rng);
        let mut adam = AdamState::for_net(critic.net(), 1e-3, 1e-4);
        for _ in 0..6000 {
            let states = Array2::from_shape_simple_fn((32, 3), || rng.random::<f64>());
            let prices = Array1::from_shape_simple_fn(32, || rng.random_range(2.0..20.0));
            let targets = Array1::from_elem(32, 7.5);
            let loss = update_critic(&mut critic, states.view(), prices.view(), targets.view(), &mut adam).unwrap();
            assert!(loss >= 0.0);
        }
        let states = Array2::from_shape_simple_fn((100, 3), || rng.random::<f64>());
        let prices = Array1::from_shape_simple_fn(100, || rng.random_range(2.0..20.0));
        for q in critic.q(states.view(), prices.view()) {
            assert!((q - 7.5).abs() < 0.075, "{q}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let critic = Critic::new(3, 6, 20.0, &mut rng);
        let states = Array2::from_shape_simple_fn((5, 3), || rng.random::<f64>());
        let prices = Array1::from_shape_simple_fn(5, || rng.random_range(2.0..20.0));
        let targets = Array1::from_shape_simple_fn(5, || rng.random_range(0.0..30.0));
        let (_, grads) = critic.mse_gradient(states.view(), prices.view(), targets.view());
        let analytic = grads.flatten();
        let h = 1e-5;
        for k in 0..analytic.len() {
            let mut plus = critic.clone();
            let mut minus = critic.clone();
            set_param(plus.net_mut(), k, |v| v + h);
            set_param(minus.net_mut(), k, |v| v - h);
            let lp = plus.mse_gradient(states.view(), prices.view(), targets.view()).0;
            let lm = minus.mse_gradient(states.view(), prices.view(), targets.view()).0;
            let numeric = (lp - lm) / (2.0 * h);
            let scale = numeric.abs().max(analytic[k].abs());
            let err = if scale < 1e-7 { (numeric - analytic[k]).abs() } else { (numeric - analytic[k]).abs() / scale };
            assert!(err < 1e-4, "param {k}: {} vs {numeric}", analytic[k]);
        }
        // Price derivative used by the actor.
        let (_, dq) = critic.evaluate(states.view(), prices.view());
        for i in 0..5 {
            let mut up = prices.clone();
            let mut down = prices.clone();
            up[i] += h;
            down[i] -= h;
            let numeric = (critic.q(states.view(), up.view())[i] - critic.q(states.view(), down.view())[i]) / (2.0 * h);
            assert!((numeric - dq[i]).abs() <= 1e-4 * numeric.abs().max(1e-3), "{numeric} vs {}", dq[i]);
        }
    }
}
