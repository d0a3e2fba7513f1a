//! Fully connected feedforward network.
//!
//! Layer `n` computes `β⁽ⁿ⁾ = W⁽ⁿ⁾ α⁽ⁿ⁻¹⁾ + γ⁽ⁿ⁾` and `α⁽ⁿ⁾ = h⁽ⁿ⁾(β⁽ⁿ⁾)`, with
//! `α⁽⁰⁾ = x` and output `z = α⁽ᴸ⁾`. The backward stage propagates the output
//! sensitivities `∂z/∂β⁽ⁿ⁾` (an `N_z × N_s(n)` matrix per layer) from which the
//! Jacobians with respect to the parameters and to the inputs are formed.
//!
//! # Parameter layout
//!
//! The flat parameter vector Θ is layer-major. For each layer, in order, the
//! weight matrix `W⁽ⁿ⁾` is stored row-major (`w_{0,0}, w_{0,1}, …`) followed by
//! the bias vector `γ⁽ⁿ⁾`. Columns of [`FeedforwardNet::param_jacobian`] use the
//! same order.
//!
//! Shape mismatches in the evaluation routines are programmer errors and panic.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activated value `a = h(β)`.
    #[inline]
    pub fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub size: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(size: usize, activation: Activation) -> Self {
        Self { size, activation }
    }
}

/// Sizes and activations of a network, without parameter values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetStructure {
    pub input_size: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetStructure {
    pub fn new(input_size: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        if input_size == 0 {
            return Err(Error::Structure("network input size must be positive".into()));
        }
        if layers.is_empty() {
            return Err(Error::Structure("network needs at least one layer".into()));
        }
        if let Some(i) = layers.iter().position(|l| l.size == 0) {
            return Err(Error::Structure(format!("layer {} has zero nodes", i + 1)));
        }
        Ok(Self { input_size, layers })
    }

    /// Regression network: `tanh` hidden layers and a linear output layer.
    pub fn regression(input_size: usize, hidden: &[usize], outputs: usize) -> Result<Self> {
        let mut layers: Vec<LayerSpec> = hidden.iter().map(|&h| LayerSpec::new(h, Activation::Tanh)).collect();
        layers.push(LayerSpec::new(outputs, Activation::Identity));
        Self::new(input_size, layers)
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map(|l| l.size).unwrap_or(0)
    }

    /// Number of weights `N_w`.
    pub fn n_weights(&self) -> usize {
        let mut fan_in = self.input_size;
        let mut total = 0;
        for l in &self.layers {
            total += l.size * fan_in;
            fan_in = l.size;
        }
        total
    }

    /// Number of bias terms `N_γ`.
    pub fn n_biases(&self) -> usize {
        self.layers.iter().map(|l| l.size).sum()
    }

    /// `N_Θ = N_w + N_γ`.
    pub fn n_params(&self) -> usize {
        self.n_weights() + self.n_biases()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub activation: Activation,
    /// `N_s(n) × N_s(n-1)`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// Standard deviation rule for random weight initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScale {
    /// `σ = N_in^(-1/2)`, the number of inputs feeding the layer.
    #[default]
    FanIn,
    /// `σ = N_s^(-1/2)`, the number of nodes in the layer itself.
    LayerSize,
}

impl InitScale {
    pub fn sigma(self, fan_in: usize, layer_size: usize) -> f64 {
        match self {
            InitScale::FanIn => (fan_in as f64).powf(-0.5),
            InitScale::LayerSize => (layer_size as f64).powf(-0.5),
        }
    }
}

impl std::fmt::Display for InitScale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InitScale::FanIn => "fan-in",
            InitScale::LayerSize => "layer-size",
        })
    }
}

impl std::str::FromStr for InitScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fan-in" => Ok(InitScale::FanIn),
            "layer-size" => Ok(InitScale::LayerSize),
            _ => Err(Error::Data(format!("unknown init scale `{s}` (fan-in | layer-size)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedforwardNet {
    input_size: usize,
    layers: Vec<Layer>,
}

/// Intermediate values of one forward evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    /// `β⁽¹⁾ … β⁽ᴸ⁾`.
    pub pre_activations: Vec<DVector<f64>>,
    /// `α⁽⁰⁾ = x, α⁽¹⁾ … α⁽ᴸ⁾`.
    pub activations: Vec<DVector<f64>>,
}

impl ForwardCache {
    /// Zeroed buffers shaped for `net`, for use with [`FeedforwardNet::forward_into`].
    pub fn for_net(net: &FeedforwardNet) -> Self {
        let mut activations = vec![DVector::zeros(net.input_size)];
        activations.extend(net.layers.iter().map(|l| DVector::zeros(l.bias.len())));
        Self {
            pre_activations: activations[1..].to_vec(),
            activations,
        }
    }

    pub fn output(&self) -> &DVector<f64> {
        self.activations.last().expect("cache always holds the input")
    }
}

/// `∂z/∂β⁽ⁿ⁾` for `n = 1 … L`, each of shape `N_z × N_s(n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sensitivities {
    pub layers: Vec<DMatrix<f64>>,
}

impl Sensitivities {
    /// Zeroed buffers shaped for `net`, for use with [`FeedforwardNet::backward_into`].
    pub fn for_net(net: &FeedforwardNet) -> Self {
        let n_z = net.output_size();
        Self {
            layers: net.layers.iter().map(|l| DMatrix::zeros(n_z, l.bias.len())).collect(),
        }
    }
}

impl FeedforwardNet {
    /// Builds a net from explicit layers, checking that the shapes chain.
    pub fn from_layers(input_size: usize, layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Structure("network needs at least one layer".into()));
        }
        let mut fan_in = input_size;
        for (i, l) in layers.iter().enumerate() {
            let (rows, cols) = l.weights.shape();
            if cols != fan_in || rows == 0 || l.bias.len() != rows {
                return Err(Error::Structure(format!(
                    "layer {}: weights {}x{}, bias {}, expected fan-in {}",
                    i + 1,
                    rows,
                    cols,
                    l.bias.len(),
                    fan_in
                )));
            }
            fan_in = rows;
        }
        Ok(Self { input_size, layers })
    }

    /// All weights and biases zero.
    pub fn zeros(structure: &NetStructure) -> Self {
        let mut fan_in = structure.input_size;
        let layers = structure
            .layers
            .iter()
            .map(|spec| {
                let layer = Layer {
                    activation: spec.activation,
                    weights: DMatrix::zeros(spec.size, fan_in),
                    bias: DVector::zeros(spec.size),
                };
                fan_in = spec.size;
                layer
            })
            .collect();
        Self {
            input_size: structure.input_size,
            layers,
        }
    }

    /// Random initialization with [`InitScale::FanIn`].
    pub fn init_params<R: Rng + ?Sized>(structure: &NetStructure, rng: &mut R) -> Self {
        Self::init_params_with(structure, InitScale::FanIn, rng)
    }

    /// Random initialization: weights of layer `n` are drawn from
    /// `Normal(0, σ_n²)` with `σ_n` given by `scale`, biases are zero.
    pub fn init_params_with<R: Rng + ?Sized>(structure: &NetStructure, scale: InitScale, rng: &mut R) -> Self {
        let mut net = Self::zeros(structure);
        for layer in &mut net.layers {
            let fan_in = layer.weights.ncols();
            let normal = Normal::new(0.0, scale.sigma(fan_in, layer.weights.nrows())).expect("finite sigma");
            // Row-major draw order keeps the stream aligned with the packed layout.
            for i in 0..layer.weights.nrows() {
                for j in 0..fan_in {
                    layer.weights[(i, j)] = normal.sample(rng);
                }
            }
        }
        net
    }

    pub fn structure(&self) -> NetStructure {
        NetStructure {
            input_size: self.input_size,
            layers: self
                .layers
                .iter()
                .map(|l| LayerSpec::new(l.weights.nrows(), l.activation))
                .collect(),
        }
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map(|l| l.weights.nrows()).unwrap_or(0)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, x: &DVector<f64>) -> ForwardCache {
        let mut cache = ForwardCache::for_net(self);
        self.forward_into(x.as_slice(), &mut cache);
        cache
    }

    /// [`forward`](Self::forward) into preallocated buffers.
    pub fn forward_into(&self, x: &[f64], cache: &mut ForwardCache) {
        assert_eq!(x.len(), self.input_size, "input length mismatch");
        assert_eq!(cache.pre_activations.len(), self.layers.len(), "cache from another net");
        cache.activations[0].copy_from_slice(x);
        for (n, layer) in self.layers.iter().enumerate() {
            let (done, rest) = cache.activations.split_at_mut(n + 1);
            let beta = &mut cache.pre_activations[n];
            beta.copy_from(&layer.bias);
            beta.gemv(1.0, &layer.weights, &done[n], 1.0);
            for (a, b) in rest[0].iter_mut().zip(beta.iter()) {
                *a = layer.activation.apply(*b);
            }
        }
    }

    /// Output only, without keeping the cache.
    pub fn evaluate(&self, x: &DVector<f64>) -> DVector<f64> {
        self.forward(x).activations.pop().expect("cache always holds the input")
    }

    pub fn backward(&self, cache: &ForwardCache) -> Sensitivities {
        let mut sens = Sensitivities::for_net(self);
        self.backward_into(cache, &mut sens);
        sens
    }

    /// [`backward`](Self::backward) into preallocated buffers.
    pub fn backward_into(&self, cache: &ForwardCache, sens: &mut Sensitivities) {
        let n_layers = self.layers.len();
        assert_eq!(cache.pre_activations.len(), n_layers, "cache from another net");
        assert_eq!(sens.layers.len(), n_layers, "sensitivities from another net");

        let last = &self.layers[n_layers - 1];
        let out = &cache.activations[n_layers];
        let s_last = &mut sens.layers[n_layers - 1];
        s_last.fill(0.0);
        for (i, a) in out.iter().enumerate() {
            s_last[(i, i)] = last.activation.derivative_from_output(*a);
        }

        for n in (0..n_layers - 1).rev() {
            let layer = &self.layers[n];
            let alpha = &cache.activations[n + 1];
            let (head, tail) = sens.layers.split_at_mut(n + 1);
            let s = &mut head[n];
            s.gemm(1.0, &tail[0], &self.layers[n + 1].weights, 0.0);
            for (j, mut col) in s.column_iter_mut().enumerate() {
                col *= layer.activation.derivative_from_output(alpha[j]);
            }
        }
    }

    /// Writes `∂z/∂Θ` into `out`, a row-major `N_z × stride` buffer whose first
    /// `N_Θ` columns are overwritten.
    pub fn param_jacobian_into(&self, cache: &ForwardCache, sens: &Sensitivities, out: &mut [f64], stride: usize) {
        let n_out = self.output_size();
        let n_params = self.n_params();
        assert!(stride >= n_params && out.len() >= n_out * stride);
        let mut offset = 0;
        for (n, layer) in self.layers.iter().enumerate() {
            let s = &sens.layers[n];
            let prev = &cache.activations[n];
            let (rows, fan_in) = layer.weights.shape();
            for r in 0..n_out {
                let row = &mut out[r * stride..r * stride + n_params];
                for i in 0..rows {
                    let d = s[(r, i)];
                    let w_cols = &mut row[offset + i * fan_in..offset + (i + 1) * fan_in];
                    for (dst, a) in w_cols.iter_mut().zip(prev.iter()) {
                        *dst = d * a;
                    }
                }
                let bias_offset = offset + rows * fan_in;
                for i in 0..rows {
                    row[bias_offset + i] = s[(r, i)];
                }
            }
            offset += rows * fan_in + rows;
        }
    }

    /// `∂z/∂Θ`, shape `N_z × N_Θ`, columns in packed-parameter order.
    pub fn param_jacobian(&self, cache: &ForwardCache, sens: &Sensitivities) -> DMatrix<f64> {
        let n_params = self.n_params();
        let mut buf = vec![0.0; self.output_size() * n_params];
        self.param_jacobian_into(cache, sens, &mut buf, n_params);
        DMatrix::from_row_slice(self.output_size(), n_params, &buf)
    }

    /// `∂z/∂x = ∂z/∂β⁽¹⁾ · W⁽¹⁾`, shape `N_z × N_x`.
    pub fn input_jacobian(&self, sens: &Sensitivities) -> DMatrix<f64> {
        &sens.layers[0] * &self.layers[0].weights
    }

    /// [`input_jacobian`](Self::input_jacobian) into an `N_z × N_x` buffer.
    pub fn input_jacobian_into(&self, sens: &Sensitivities, out: &mut DMatrix<f64>) {
        out.gemm(1.0, &sens.layers[0], &self.layers[0].weights, 0.0);
    }

    pub fn pack_params(&self) -> DVector<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        for layer in &self.layers {
            for i in 0..layer.weights.nrows() {
                v.extend(layer.weights.row(i).iter());
            }
            v.extend(layer.bias.iter());
        }
        DVector::from_vec(v)
    }

    pub fn unpack_params(params: &[f64], structure: &NetStructure) -> Result<Self> {
        let mut net = Self::zeros(structure);
        net.set_params(params)?;
        Ok(net)
    }

    /// Overwrites all weights and biases from a packed vector.
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        let expected = self.n_params();
        if params.len() != expected {
            return Err(Error::Data(format!(
                "parameter vector has length {}, network expects {}",
                params.len(),
                expected
            )));
        }
        let mut it = params.iter().copied();
        for layer in &mut self.layers {
            let (rows, cols) = layer.weights.shape();
            for i in 0..rows {
                for j in 0..cols {
                    layer.weights[(i, j)] = it.next().unwrap();
                }
            }
            for b in layer.bias.iter_mut() {
                *b = it.next().unwrap();
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_net(structure: &NetStructure, seed: u64) -> FeedforwardNet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = FeedforwardNet::init_params(structure, &mut rng);
        // non-zero biases so the bias paths are exercised
        for layer in net.layers_mut() {
            for b in layer.bias.iter_mut() {
                *b = rng.gen_range(-0.5..0.5);
            }
        }
        net
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
    }

    #[test]
    fn zero_net_outputs_zero() {
        let s = NetStructure::regression(3, &[4], 2).unwrap();
        let net = FeedforwardNet::zeros(&s);
        let z = net.evaluate(&DVector::from_vec(vec![1.0, -7.0, 3.0]));
        assert_eq!(z, DVector::zeros(2));
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = FeedforwardNet::from_layers(
            2,
            vec![Layer {
                activation: Activation::Identity,
                weights: DMatrix::identity(2, 2),
                bias: DVector::zeros(2),
            }],
        )
        .unwrap();
        let x = DVector::from_vec(vec![1.5, -2.0]);
        let cache = net.forward(&x);
        assert_eq!(cache.output(), &x);
        let sens = net.backward(&cache);
        assert_eq!(sens.layers[0], DMatrix::identity(2, 2));
        // bias columns of z = Wx + γ are the identity
        let j = net.param_jacobian(&cache, &sens);
        assert_eq!(j.columns(4, 2).into_owned(), DMatrix::identity(2, 2));
    }

    #[test]
    fn hand_set_1_2_1_net_matches_scalar_arithmetic() {
        // z = v1 tanh(w1 x + b1) + v2 tanh(w2 x + b2) + c
        let (w1, w2, b1, b2) = (0.7, -1.3, 0.1, 0.4);
        let (v1, v2, c) = (2.0, 0.5, -0.25);
        let x = 0.9;
        let net = FeedforwardNet::unpack_params(
            &[w1, w2, b1, b2, v1, v2, c],
            &NetStructure::regression(1, &[2], 1).unwrap(),
        )
        .unwrap();
        let expected = v1 * (w1 * x + b1).tanh() + v2 * (w2 * x + b2).tanh() + c;
        let z = net.evaluate(&DVector::from_element(1, x));
        assert!((z[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn tanh_derivative_at_zero_is_one() {
        let s = NetStructure::new(2, vec![LayerSpec::new(3, Activation::Tanh)]).unwrap();
        let net = FeedforwardNet::zeros(&s);
        let cache = net.forward(&DVector::from_vec(vec![0.3, 0.2]));
        let sens = net.backward(&cache);
        assert_eq!(sens.layers[0], DMatrix::identity(3, 3));
    }

    #[test]
    fn zero_input_and_weights_give_zero_weight_columns() {
        let s = NetStructure::regression(2, &[3], 1).unwrap();
        let mut net = FeedforwardNet::zeros(&s);
        // non-zero output weights so that hidden biases matter
        for w in net.layers_mut()[1].weights.iter_mut() {
            *w = 1.0;
        }
        let cache = net.forward(&DVector::zeros(2));
        let sens = net.backward(&cache);
        let j = net.param_jacobian(&cache, &sens);
        assert!(j.columns(0, 6).iter().all(|&v| v == 0.0));
        assert!(j.columns(6, 3).iter().all(|&v| v != 0.0));
    }

    #[test]
    fn input_jacobian_linear_and_zero_first_layer() {
        let w = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 4.0]);
        let net = FeedforwardNet::from_layers(
            3,
            vec![Layer {
                activation: Activation::Identity,
                weights: w.clone(),
                bias: DVector::from_vec(vec![0.1, 0.2]),
            }],
        )
        .unwrap();
        let cache = net.forward(&DVector::from_vec(vec![0.3, -0.2, 1.0]));
        assert_eq!(net.input_jacobian(&net.backward(&cache)), w);

        let mut net = random_net(&NetStructure::regression(3, &[4, 2], 2).unwrap(), 5);
        net.layers_mut()[0].weights.fill(0.0);
        let cache = net.forward(&DVector::from_vec(vec![0.3, -0.2, 1.0]));
        assert_eq!(net.input_jacobian(&net.backward(&cache)), DMatrix::zeros(2, 3));
    }

    #[test]
    fn sensitivities_match_finite_differences_over_pre_activations() {
        // 2-3-2 net; perturb β⁽¹⁾ and push forward through the remaining layers.
        let s = NetStructure::regression(2, &[3], 2).unwrap();
        let net = random_net(&s, 11);
        let x = DVector::from_vec(vec![0.4, -0.8]);
        let cache = net.forward(&x);
        let sens = net.backward(&cache);
        let top = &net.layers()[1];
        let from_beta1 = |beta: &DVector<f64>| {
            let a = beta.map(f64::tanh);
            &top.weights * a + &top.bias
        };
        let h = 1e-6;
        for i in 0..3 {
            let mut bp = cache.pre_activations[0].clone();
            let mut bm = bp.clone();
            bp[i] += h;
            bm[i] -= h;
            let fd = (from_beta1(&bp) - from_beta1(&bm)) / (2.0 * h);
            for r in 0..2 {
                assert!(rel_err(sens.layers[0][(r, i)], fd[r]) < 1e-6);
            }
        }
    }

    #[test]
    fn init_biases_zero_and_seed_deterministic() {
        let s = NetStructure::regression(4, &[10], 1).unwrap();
        let a = FeedforwardNet::init_params(&s, &mut ChaCha8Rng::seed_from_u64(3));
        let b = FeedforwardNet::init_params(&s, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        assert!(a.layers().iter().all(|l| l.bias.iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn init_sigma_is_inverse_sqrt_fan_in() {
        let s = NetStructure::new(4, vec![LayerSpec::new(2500, Activation::Tanh)]).unwrap();
        let net = FeedforwardNet::init_params(&s, &mut ChaCha8Rng::seed_from_u64(9));
        let w = &net.layers()[0].weights;
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let std = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((std - 0.5).abs() < 0.025, "std = {std}");
    }

    #[test]
    fn layer_size_init_uses_the_layer_width() {
        let s = NetStructure::regression(4, &[2500], 1).unwrap();
        let net = FeedforwardNet::init_params_with(&s, InitScale::LayerSize, &mut ChaCha8Rng::seed_from_u64(9));
        let w = &net.layers()[0].weights;
        let n = w.len() as f64;
        let std = (w.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        assert!((std - 0.02).abs() < 0.001, "std = {std}");
        assert_eq!(InitScale::LayerSize.sigma(10, 1), 1.0);
        assert_eq!("layer-size".parse::<InitScale>().unwrap(), InitScale::LayerSize);
    }

    #[test]
    fn parameter_count_of_4_10_1() {
        let s = NetStructure::regression(4, &[10], 1).unwrap();
        assert_eq!(s.n_weights(), 50);
        assert_eq!(s.n_biases(), 11);
        assert_eq!(s.n_params(), 61);
        assert_eq!(FeedforwardNet::zeros(&s).pack_params(), DVector::zeros(61));
    }

    #[test]
    fn unpack_rejects_wrong_length() {
        let s = NetStructure::regression(4, &[10], 1).unwrap();
        assert!(matches!(
            FeedforwardNet::unpack_params(&[0.0; 60], &s),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn bias_and_weight_layout_is_layer_major() {
        let s = NetStructure::regression(2, &[2], 1).unwrap();
        let v: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let net = FeedforwardNet::unpack_params(&v, &s).unwrap();
        let l1 = &net.layers()[0];
        assert_eq!(l1.weights, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 3.0]));
        assert_eq!(l1.bias, DVector::from_vec(vec![4.0, 5.0]));
        assert_eq!(net.layers()[1].bias[0], 8.0);
    }

    #[test]
    #[should_panic(expected = "input length mismatch")]
    fn forward_panics_on_shape_mismatch() {
        let s = NetStructure::regression(3, &[2], 1).unwrap();
        FeedforwardNet::zeros(&s).forward(&DVector::zeros(2));
    }

    #[test]
    fn non_finite_inputs_propagate() {
        let s = NetStructure::regression(1, &[2], 1).unwrap();
        let net = random_net(&s, 1);
        let z = net.evaluate(&DVector::from_element(1, f64::NAN));
        assert!(z[0].is_nan());
    }
}
