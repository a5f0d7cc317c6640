//! The denoising action generator.
//!
//! A pricing action starts as `s_N ~ N(0, 1)` and is refined by
//!
//! ```text
//! s_{n-1} = s_n / sqrt(alpha_n)
//!         - beta_n / sqrt(alpha_n (1 - alpha_bar_n)) * eps(s_n, e, n)
//!         + sqrt(beta_n) * z_n
//! ```
//!
//! for `n = N..1` with `z_1 = 0`, where `eps` is a dense network fed the
//! current sample, the observation `e`, and a sinusoidal embedding of `n`.
//! The final `s_0` is squashed by `tanh` onto `[c, p_max]`.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::schedule::DiffusionSchedule;
use crate::error::{Error, Result};
use crate::nn::{Activation, AdamState, DenseNet, ForwardTrace, Gradients, HIDDEN_ACTIVATION};

/// Something that scores `(state, price)` pairs and can differentiate the
/// score with respect to the price.
pub trait ActionValue {
    /// Values and `dQ/dprice` for each row.
    fn evaluate(&self, states: ArrayView2<f64>, prices: ArrayView1<f64>) -> (Array1<f64>, Array1<f64>);
}

/// Smooth bounded map from `s_0` onto `[low, high]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionRange {
    pub low: f64,
    pub high: f64,
}

impl ActionRange {
    pub fn squash(&self, raw: f64) -> f64 {
        self.low + 0.5 * (self.high - self.low) * (raw.tanh() + 1.0)
    }

    /// `d squash / d raw`.
    pub fn squash_grad(&self, raw: f64) -> f64 {
        let t = raw.tanh();
        0.5 * (self.high - self.low) * (1.0 - t * t)
    }

    pub fn clamp(&self, price: f64) -> f64 {
        price.clamp(self.low, self.high)
    }
}

/// Sinusoidal features of the denoising index.
pub fn time_embedding(n: usize, dim: usize) -> Vec<f64> {
    let half = dim.div_ceil(2).max(1) as f64;
    (0..dim)
        .map(|j| {
            let freq = (-(1000f64.ln()) * (j / 2) as f64 / half).exp();
            let phase = n as f64 * freq;
            if j % 2 == 0 {
                phase.sin()
            } else {
                phase.cos()
            }
        })
        .collect()
}

/// Every random draw of one batched chain: the starting sample and the
/// per-step injected noise (`injected[n - 1]`, unused for `n = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct ChainNoise {
    pub initial: Array1<f64>,
    pub injected: Vec<Array1<f64>>,
}

impl ChainNoise {
    pub fn sample<R: Rng + ?Sized>(batch: usize, steps: usize, rng: &mut R) -> Self {
        let mut normal = || Array1::from_shape_simple_fn(batch, || rng.sample::<f64, _>(StandardNormal));
        let initial = normal();
        let injected = (1..=steps)
            .map(|n| if n == 1 { Array1::zeros(batch) } else { normal() })
            .collect();
        Self { initial, injected }
    }

    /// Random start, no injected noise.
    pub fn deterministic<R: Rng + ?Sized>(batch: usize, steps: usize, rng: &mut R) -> Self {
        let initial = Array1::from_shape_simple_fn(batch, || rng.sample::<f64, _>(StandardNormal));
        Self::from_initial(initial, steps)
    }

    pub fn from_initial(initial: Array1<f64>, steps: usize) -> Self {
        let batch = initial.len();
        Self {
            initial,
            injected: vec![Array1::zeros(batch); steps],
        }
    }

    pub fn batch(&self) -> usize {
        self.initial.len()
    }
}

/// One sampled action.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledAction {
    pub price: f64,
    /// Unsquashed `s_0`.
    pub raw: f64,
    /// Present when the caller asked to record the chain's noise.
    pub noise: Option<ChainNoise>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionPolicy {
    net: DenseNet,
    schedule: DiffusionSchedule,
    state_dim: usize,
    embed_dim: usize,
    range: ActionRange,
}

impl DiffusionPolicy {
    /// Noise predictor with two hidden layers of `hidden` units.
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        hidden: usize,
        embed_dim: usize,
        schedule: DiffusionSchedule,
        range: ActionRange,
        rng: &mut R,
    ) -> Self {
        let net = DenseNet::new(
            &[1 + state_dim + embed_dim, hidden, hidden, 1],
            HIDDEN_ACTIVATION,
            Activation::Identity,
            rng,
        );
        Self {
            net,
            schedule,
            state_dim,
            embed_dim,
            range,
        }
    }

    pub fn from_net(
        net: DenseNet,
        state_dim: usize,
        embed_dim: usize,
        schedule: DiffusionSchedule,
        range: ActionRange,
    ) -> Result<Self> {
        if net.input_dim() != 1 + state_dim + embed_dim || net.output_dim() != 1 {
            return Err(Error::ShapeMismatch {
                expected: 1 + state_dim + embed_dim,
                actual: net.input_dim(),
            });
        }
        Ok(Self {
            net,
            schedule,
            state_dim,
            embed_dim,
            range,
        })
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut DenseNet {
        &mut self.net
    }

    pub fn schedule(&self) -> &DiffusionSchedule {
        &self.schedule
    }

    pub fn range(&self) -> ActionRange {
        self.range
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn check_states(&self, states: &ArrayView2<f64>) -> Result<()> {
        if states.ncols() != self.state_dim {
            return Err(Error::ShapeMismatch {
                expected: self.state_dim,
                actual: states.ncols(),
            });
        }
        Ok(())
    }

    /// Runs the reverse chain for every row of `states`. Returns the raw
    /// `s_0` and, when `keep_trace`, the network traces ordered `n = N..1`.
    fn denoise(&self, states: ArrayView2<f64>, noise: &ChainNoise, keep_trace: bool) -> (Array1<f64>, Vec<ForwardTrace>) {
        let batch = states.nrows();
        let steps = self.schedule.steps();
        let mut x = Array2::zeros((batch, 1 + self.state_dim + self.embed_dim));
        x.slice_mut(s![.., 1..1 + self.state_dim]).assign(&states);
        let mut sample = noise.initial.clone();
        let mut traces = Vec::with_capacity(if keep_trace { steps } else { 0 });
        for n in (1..=steps).rev() {
            x.column_mut(0).assign(&sample);
            let emb = time_embedding(n, self.embed_dim);
            for (j, v) in emb.into_iter().enumerate() {
                x.column_mut(1 + self.state_dim + j).fill(v);
            }
            let eps = if keep_trace {
                let trace = self.net.forward_trace(x.clone()).expect("input shape checked");
                let eps = trace.output().column(0).to_owned();
                traces.push(trace);
                eps
            } else {
                self.net.forward_batch(x.view()).expect("input shape checked").column(0).to_owned()
            };
            let k1 = self.schedule.state_coef(n);
            let k2 = self.schedule.noise_pred_coef(n);
            let std = self.schedule.injected_std(n);
            sample = &sample * k1 - &eps * k2;
            if std > 0.0 {
                sample.scaled_add(std, &noise.injected[n - 1]);
            }
        }
        (sample, traces)
    }

    /// Raw `s_0` per row for explicit noise.
    pub fn denoise_raw(&self, states: ArrayView2<f64>, noise: &ChainNoise) -> Result<Array1<f64>> {
        self.check_states(&states)?;
        Ok(self.denoise(states, noise, false).0)
    }

    /// Prices per row for explicit noise.
    pub fn prices(&self, states: ArrayView2<f64>, noise: &ChainNoise) -> Result<Array1<f64>> {
        Ok(self.denoise_raw(states, noise)?.mapv(|r| self.range.squash(r)))
    }

    /// Draws one pricing action for `state`.
    pub fn sample_action<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R, record_noise: bool) -> Result<SampledAction> {
        let states = ArrayView2::from_shape((1, state.len()), state).expect("row view");
        self.check_states(&states)?;
        let noise = ChainNoise::sample(1, self.schedule.steps(), rng);
        let raw = self.denoise(states, &noise, false).0[0];
        Ok(SampledAction {
            price: self.range.squash(raw),
            raw,
            noise: record_noise.then_some(noise),
        })
    }

    /// Inference: random start, no injected noise, averaged over `draws` chains.
    pub fn infer<R: Rng + ?Sized>(&self, state: &[f64], draws: usize, rng: &mut R) -> Result<f64> {
        let draws = draws.max(1);
        let states = ArrayView2::from_shape((1, state.len()), state).expect("row view");
        self.check_states(&states)?;
        let tiled = states.broadcast((draws, state.len())).expect("broadcast rows").to_owned();
        let noise = ChainNoise::deterministic(draws, self.schedule.steps(), rng);
        let prices = self.prices(tiled.view(), &noise)?;
        Ok(prices.mean().unwrap_or(self.range.low))
    }

    /// Loss `-mean Q(e, price(s_0))` and its gradient with respect to the
    /// noise-predictor parameters, differentiated through every denoising
    /// step with the chain noise held fixed.
    pub fn actor_gradient(
        &self,
        states: ArrayView2<f64>,
        noise: &ChainNoise,
        critic: &dyn ActionValue,
    ) -> Result<(f64, Gradients)> {
        self.check_states(&states)?;
        if noise.batch() != states.nrows() {
            return Err(Error::ShapeMismatch {
                expected: states.nrows(),
                actual: noise.batch(),
            });
        }
        let batch = states.nrows() as f64;
        let (raw, traces) = self.denoise(states, noise, true);
        let prices = raw.mapv(|r| self.range.squash(r));
        let (q, dq_dprice) = critic.evaluate(states, prices.view());
        let loss = -q.mean().unwrap_or(0.0);
        let mut grad_s = ndarray::Zip::from(&dq_dprice)
            .and(&raw)
            .map_collect(|&dq, &r| -dq / batch * self.range.squash_grad(r));
        Ok((loss, self.chain_backward(&traces, &mut grad_s)))
    }

    /// Backpropagates `dL/ds_0` through the chain into parameter gradients.
    fn chain_backward(&self, traces: &[ForwardTrace], grad_s: &mut Array1<f64>) -> Gradients {
        let steps = self.schedule.steps();
        let mut grads = Gradients::zeros_like(&self.net);
        for n in 1..=steps {
            let trace = &traces[steps - n];
            let k1 = self.schedule.state_coef(n);
            let k2 = self.schedule.noise_pred_coef(n);
            let upstream = grad_s.mapv(|g| -k2 * g).insert_axis(Axis(1));
            let (g, gx) = self.net.backward(trace, upstream.view()).expect("trace shape");
            grads.add_assign(&g);
            *grad_s *= k1;
            *grad_s += &gx.column(0);
        }
        grads
    }
}

/// One actor step: fresh chain noise for every state, loss
/// `-mean Q(e, price(s_0))`, and an optimizer update. Returns the loss.
pub fn update_actor<R: Rng + ?Sized>(
    policy: &mut DiffusionPolicy,
    critic: &dyn ActionValue,
    states: ArrayView2<f64>,
    adam: &mut AdamState,
    rng: &mut R,
) -> Result<f64> {
    let noise = ChainNoise::sample(states.nrows(), policy.schedule().steps(), rng);
    let (loss, grads) = policy.actor_gradient(states, &noise, critic)?;
    adam.update_net(policy.net_mut(), &grads);
    Ok(loss)
}
