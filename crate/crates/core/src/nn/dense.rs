use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    /// `x * sigmoid(x)`.
    Silu,
    Tanh,
}

impl Activation {
    /// Returns `(f(x), f'(x))`.
    #[inline]
    fn eval(self, x: f64) -> (f64, f64) {
        match self {
            Activation::Identity => (x, 1.0),
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-x).exp());
                (x * s, s * (1.0 + x * (1.0 - s)))
            }
            Activation::Tanh => {
                let t = x.tanh();
                (t, 1.0 - t * t)
            }
        }
    }
}

/// Affine map followed by an elementwise activation. `weight` is `in x out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    layers: Vec<Dense>,
}

/// Per-layer inputs and activation derivatives from a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    inputs: Vec<Array2<f64>>,
    derivs: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

/// Parameter gradients laid out like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            weights: net.layers.iter().map(|l| Array2::zeros(l.weight.raw_dim())).collect(),
            biases: net.layers.iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    /// Slices in the same order as [`DenseNet::params`].
    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice().unwrap(), b.as_slice().unwrap()])
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().flatten().copied().collect()
    }
}

impl DenseNet {
    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization for weights and biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        Self::build(sizes, hidden, output, |fan_in| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            rng.random_range(-bound..bound)
        })
    }

    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Self {
        Self::build(sizes, hidden, output, |_| 0.0)
    }

    fn build(sizes: &[usize], hidden: Activation, output: Activation, mut init: impl FnMut(usize) -> f64) -> Self {
        assert!(sizes.len() >= 2, "a network needs at least input and output sizes");
        let n = sizes.len() - 1;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                Dense {
                    weight: Array2::from_shape_simple_fn((fan_in, fan_out), || init(fan_in)),
                    bias: Array1::from_shape_simple_fn(fan_out, || init(fan_in)),
                    activation: if i + 1 == n { output } else { hidden },
                }
            })
            .collect();
        Self { layers }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network has no layers"));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::ShapeMismatch {
                    expected: pair[0].out_dim(),
                    actual: pair[1].in_dim(),
                });
            }
        }
        for l in &layers {
            if l.bias.len() != l.out_dim() {
                return Err(Error::ShapeMismatch {
                    expected: l.out_dim(),
                    actual: l.bias.len(),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Dense::out_dim))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Weight then bias of each layer, front to back.
    pub fn params(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice().unwrap(), l.bias.as_slice().unwrap()])
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_slice_mut().unwrap(), l.bias.as_slice_mut().unwrap()])
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.params().flatten().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.params().flatten().all(|v| v.is_finite())
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.input_dim(),
                actual: cols,
            });
        }
        Ok(())
    }

    /// Forward pass for a single input vector.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input.len())?;
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
        Ok(self.forward_batch(x)?.into_raw_vec_and_offset().0)
    }

    /// Forward pass over the rows of `x`.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let mut h = x.to_owned();
        for layer in &self.layers {
            let mut z = h.dot(&layer.weight);
            let act = layer.activation;
            for mut row in z.rows_mut() {
                row.zip_mut_with(&layer.bias, |v, b| *v = act.eval(*v + b).0);
            }
            h = z;
        }
        Ok(h)
    }

    /// Forward pass that keeps what [`DenseNet::backward`] needs.
    pub fn forward_trace(&self, x: Array2<f64>) -> Result<ForwardTrace> {
        self.check_input(x.ncols())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut derivs = Vec::with_capacity(self.layers.len());
        let mut h = x;
        for layer in &self.layers {
            let mut z = h.dot(&layer.weight);
            let act = layer.activation;
            let mut d = Vec::with_capacity(z.len());
            for mut row in z.rows_mut() {
                row.zip_mut_with(&layer.bias, |v, b| {
                    let (y, dy) = act.eval(*v + b);
                    *v = y;
                    d.push(dy);
                });
            }
            inputs.push(h);
            derivs.push(Array2::from_shape_vec(z.raw_dim(), d).expect("one derivative per unit"));
            h = z;
        }
        Ok(ForwardTrace {
            inputs,
            derivs,
            output: h,
        })
    }

    /// Reverse-mode pass: gradients of `sum(upstream * output)` with respect
    /// to the parameters (summed over the batch) and to the input rows.
    pub fn backward(&self, trace: &ForwardTrace, upstream: ArrayView2<f64>) -> Result<(Gradients, Array2<f64>)> {
        let mut weights = Vec::with_capacity(self.layers.len());
        let mut biases = Vec::with_capacity(self.layers.len());
        let delta = self.reverse(trace, upstream, |i, delta| {
            // `dot` may hand back column-major output; parameters are row-major.
            weights.push(trace.inputs[i].t().dot(delta).as_standard_layout().into_owned());
            biases.push(delta.sum_axis(Axis(0)));
        })?;
        weights.reverse();
        biases.reverse();
        Ok((Gradients { weights, biases }, delta))
    }

    /// Gradient with respect to the input rows only.
    pub fn input_gradient(&self, trace: &ForwardTrace, upstream: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.reverse(trace, upstream, |_, _| {})
    }

    /// Walks the layers backwards, handing each layer's pre-activation
    /// gradient to `visit`, and returns the input gradient.
    fn reverse(
        &self,
        trace: &ForwardTrace,
        upstream: ArrayView2<f64>,
        mut visit: impl FnMut(usize, &Array2<f64>),
    ) -> Result<Array2<f64>> {
        if upstream.dim() != trace.output.dim() {
            return Err(Error::ShapeMismatch {
                expected: trace.output.len(),
                actual: upstream.len(),
            });
        }
        let mut delta = upstream.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            delta *= &trace.derivs[i];
            visit(i, &delta);
            delta = delta.dot(&layer.weight.t());
        }
        Ok(delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rel_err(a: f64, b: f64) -> f64 {
        let scale = a.abs().max(b.abs());
        if scale < 1e-7 {
            (a - b).abs()
        } else {
            (a - b).abs() / scale
        }
    }

    #[test]
    fn zero_net_outputs_bias_composition() {
        let net = DenseNet::zeros(&[3, 4, 2], Activation::Silu, Activation::Identity);
        assert_eq!(net.forward(&[1.0, -2.0, 5.0]).unwrap(), vec![0.0, 0.0]);
        let mut net = DenseNet::zeros(&[3, 4, 2], Activation::Tanh, Activation::Identity);
        net.layers_mut()[0].bias.fill(0.5);
        net.layers_mut()[1].bias.fill(-1.0);
        net.layers_mut()[1].weight.fill(1.0);
        let expected = 4.0 * 0.5f64.tanh() - 1.0;
        let out = net.forward(&[9.0, 9.0, 9.0]).unwrap();
        assert!((out[0] - expected).abs() < 1e-15 && (out[1] - expected).abs() < 1e-15);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let layer = Dense {
            weight: Array2::eye(3),
            bias: Array1::zeros(3),
            activation: Activation::Identity,
        };
        let net = DenseNet::from_layers(vec![layer]).unwrap();
        assert_eq!(net.forward(&[1.5, -2.0, 0.25]).unwrap(), vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn shape_errors() {
        let net = DenseNet::zeros(&[3, 2], Activation::Silu, Activation::Identity);
        assert!(matches!(net.forward(&[1.0]), Err(Error::ShapeMismatch { expected: 3, actual: 1 })));
        let trace = net.forward_trace(Array2::zeros((4, 3))).unwrap();
        assert!(net.backward(&trace, Array2::zeros((4, 3)).view()).is_err());
        let a = Dense {
            weight: Array2::zeros((2, 3)),
            bias: Array1::zeros(3),
            activation: Activation::Identity,
        };
        let b = Dense {
            weight: Array2::zeros((4, 1)),
            bias: Array1::zeros(1),
            activation: Activation::Identity,
        };
        assert!(DenseNet::from_layers(vec![a, b]).is_err());
    }

    #[test]
    fn golden_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = DenseNet::new(&[3, 5, 2], Activation::Silu, Activation::Identity, &mut rng);
        let out = net.forward(&[0.1, -0.4, 0.9]).unwrap();
        // Pinned on first run; guards against silent changes to init or layout.
        let golden = [GOLDEN_FORWARD[0], GOLDEN_FORWARD[1]];
        for (o, g) in out.iter().zip(golden) {
            assert!((o - g).abs() < 1e-12, "{out:?}");
        }
    }

    const GOLDEN_FORWARD: [f64; 2] = [0.28427914526832077, -0.09549496823838755];

    #[test]
    fn linear_gradient_is_outer_product() {
        let layer = Dense {
            weight: array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]],
            bias: array![0.5, -0.5],
            activation: Activation::Identity,
        };
        let net = DenseNet::from_layers(vec![layer]).unwrap();
        let x = array![[1.0, -1.0, 2.0]];
        let up = array![[0.3, -0.7]];
        let trace = net.forward_trace(x.clone()).unwrap();
        let (g, gx) = net.backward(&trace, up.view()).unwrap();
        assert_eq!(g.weights[0], x.t().dot(&up));
        assert_eq!(g.biases[0], array![0.3, -0.7]);
        assert_eq!(gx, up.dot(&net.layers()[0].weight.t()));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = DenseNet::new(&[4, 8, 3], Activation::Silu, Activation::Tanh, &mut rng);
        let x = Array2::from_shape_fn((5, 4), |(i, j)| (i as f64 - j as f64) * 0.3);
        let trace = net.forward_trace(x).unwrap();
        let (g, gx) = net.backward(&trace, Array2::zeros((5, 3)).view()).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
        assert!(gx.iter().all(|&v| v == 0.0));
    }

    /// Central differences of `sum(upstream * net(x))` with h = 1e-5.
    fn check_gradients(sizes: &[usize], hidden: Activation, output: Activation, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = DenseNet::new(sizes, hidden, output, &mut rng);
        let batch = 3;
        let x = Array2::from_shape_fn((batch, sizes[0]), |_| rng.random_range(-1.5..1.5));
        let up = Array2::from_shape_fn((batch, *sizes.last().unwrap()), |_| rng.random_range(-1.0..1.0));
        let objective = |n: &DenseNet, x: &Array2<f64>| (n.forward_batch(x.view()).unwrap() * &up).sum();
        let trace = net.forward_trace(x.clone()).unwrap();
        let (grads, gx) = net.backward(&trace, up.view()).unwrap();
        let analytic = grads.flatten();
        let h = 1e-5;
        let total = net.param_count();
        for k in 0..total {
            let mut plus = net.clone();
            let mut minus = net.clone();
            set_param(&mut plus, k, |v| v + h);
            set_param(&mut minus, k, |v| v - h);
            let numeric = (objective(&plus, &x) - objective(&minus, &x)) / (2.0 * h);
            assert!(rel_err(analytic[k], numeric) < 1e-4, "param {k}: {} vs {numeric}", analytic[k]);
        }
        for idx in 0..x.len() {
            let (i, j) = (idx / sizes[0], idx % sizes[0]);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[[i, j]] += h;
            xm[[i, j]] -= h;
            let numeric = (objective(&net, &xp) - objective(&net, &xm)) / (2.0 * h);
            assert!(rel_err(gx[[i, j]], numeric) < 1e-4);
        }
    }

    fn set_param(net: &mut DenseNet, mut k: usize, f: impl Fn(f64) -> f64) {
        for slice in net.params_mut() {
            if k < slice.len() {
                slice[k] = f(slice[k]);
                return;
            }
            k -= slice.len();
        }
        panic!("param index out of range");
    }

    #[test]
    fn gradients_match_finite_differences() {
        check_gradients(&[3, 6, 1], Activation::Silu, Activation::Identity, 3);
        check_gradients(&[5, 7, 7, 2], Activation::Silu, Activation::Tanh, 4);
        check_gradients(&[2, 4, 4, 3], Activation::Tanh, Activation::Identity, 5);
    }
}
