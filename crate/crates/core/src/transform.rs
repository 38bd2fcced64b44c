//! The embedding network: a fully connected MLP with a linear output layer,
//! He-Gaussian initialization and the Adam optimizer.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::diff::{kernels, NodeRef, Shape, Tape, Tensor};
use crate::tree::Embedder;
use crate::{Error, Result};

static NEXT_STAMP: AtomicU64 = AtomicU64::new(1);

/// Fresh version stamp for embedding caches. Stamp 0 is reserved for the identity map.
pub(crate) fn next_stamp() -> u64 {
    NEXT_STAMP.fetch_add(1, Ordering::Relaxed)
}

/// Nonlinearity applied after every layer except the last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => kernels::relu(v),
            Activation::Tanh => kernels::tanh(v),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::usage(format!("unknown activation '{other}'"))),
        }
    }
}

/// Layer widths, input first and embedding last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpArchitecture {
    layer_sizes: Vec<usize>,
    activation: Activation,
}

impl MlpArchitecture {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::usage(format!(
                "architecture needs at least an input and an output size, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::usage(format!("architecture sizes must be positive, got {layer_sizes:?}")));
        }
        Ok(MlpArchitecture {
            layer_sizes,
            activation,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated non-empty")
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// `(out, in)` for each layer.
    pub fn layer_shapes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.layer_sizes.windows(2).map(|w| (w[1], w[0]))
    }
}

impl fmt::Display for MlpArchitecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.layer_sizes.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// Weight matrix `(out, in)` and bias `(out)` of one layer. Also used for
/// gradients and optimizer moments, which share the parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LayerParams {
    pub fn zeros(out: usize, inp: usize) -> Self {
        LayerParams {
            weight: Tensor::zeros(Shape::Matrix(out, inp)),
            bias: Tensor::zeros(Shape::Vector(out)),
        }
    }

    fn is_finite(&self) -> bool {
        self.weight.is_finite() && self.bias.is_finite()
    }
}

fn zero_layers(arch: &MlpArchitecture) -> Vec<LayerParams> {
    arch.layer_shapes().map(|(o, i)| LayerParams::zeros(o, i)).collect()
}

/// Parameters of the embedding network.
///
/// Every construction or update assigns a fresh stamp, which keys the boundary
/// tree's embedding cache.
#[derive(Debug, Clone)]
pub struct ParameterSet {
    arch: MlpArchitecture,
    layers: Vec<LayerParams>,
    stamp: u64,
}

impl PartialEq for ParameterSet {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch && self.layers == other.layers
    }
}

impl ParameterSet {
    pub fn from_layers(arch: MlpArchitecture, layers: Vec<LayerParams>) -> Result<Self> {
        if layers.len() != arch.num_layers() {
            return Err(Error::dimension("layers", arch.num_layers(), layers.len()));
        }
        for ((out, inp), l) in arch.layer_shapes().zip(&layers) {
            if l.weight.shape() != Shape::Matrix(out, inp) {
                return Err(Error::dimension("weight", Shape::Matrix(out, inp), l.weight.shape()));
            }
            if l.bias.shape() != Shape::Vector(out) {
                return Err(Error::dimension("bias", Shape::Vector(out), l.bias.shape()));
            }
            if !l.is_finite() {
                return Err(Error::NonFinite("parameter set".into()));
            }
        }
        Ok(ParameterSet {
            arch,
            layers,
            stamp: next_stamp(),
        })
    }

    pub fn zeros(arch: MlpArchitecture) -> Self {
        let layers = zero_layers(&arch);
        ParameterSet {
            arch,
            layers,
            stamp: next_stamp(),
        }
    }

    pub fn architecture(&self) -> &MlpArchitecture {
        &self.arch
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    /// Mutable access to the raw parameters; refreshes the stamp.
    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        self.stamp = next_stamp();
        &mut self.layers
    }

    pub fn num_scalars(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Binds every parameter tensor as a differentiable leaf of `tape`.
    pub fn bind<'a>(&'a self, tape: &mut Tape<'a>) -> BoundParams {
        let layers = self
            .layers
            .iter()
            .map(|l| (tape.param(&l.weight), tape.param(&l.bias)))
            .collect();
        BoundParams {
            layers,
            activation: self.arch.activation,
            input_dim: self.arch.input_dim(),
        }
    }

    /// Tape-free forward pass; bitwise identical to [`forward`].
    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.arch.input_dim() {
            return Err(Error::dimension("input", self.arch.input_dim(), x.len()));
        }
        let mut cur: Vec<f64> = x.to_vec();
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let (out, inp) = match l.weight.shape() {
                Shape::Matrix(o, i) => (o, i),
                _ => unreachable!(),
            };
            let mut next = alloc::vec![0.0; out];
            kernels::affine(l.weight.data(), out, inp, &cur, l.bias.data(), &mut next);
            if k != last {
                for v in &mut next {
                    *v = self.arch.activation.apply(*v);
                }
            }
            cur = next;
        }
        Ok(cur)
    }
}

impl Embedder for ParameterSet {
    fn stamp(&self) -> u64 {
        self.stamp
    }

    fn input_dim(&self) -> Option<usize> {
        Some(self.arch.input_dim())
    }

    fn embed(&self, x: &[f64]) -> Vec<f64> {
        ParameterSet::embed(self, x).expect("input dimension checked by caller")
    }
}

/// Tape node handles for a [`ParameterSet`], shared by every forward pass on one tape
/// so that gradients from the query and from every stored sample accumulate.
#[derive(Debug, Clone)]
pub struct BoundParams {
    layers: Vec<(NodeRef, NodeRef)>,
    activation: Activation,
    input_dim: usize,
}

impl BoundParams {
    /// Builds handles from `[w0, b0, w1, b1, ...]` leaves already on `tape`.
    pub fn from_refs(tape: &Tape<'_>, refs: &[NodeRef], activation: Activation) -> Result<Self> {
        if refs.is_empty() || !refs.len().is_multiple_of(2) {
            return Err(Error::usage(format!(
                "expected alternating weight/bias handles, got {} handles",
                refs.len()
            )));
        }
        let mut layers = Vec::with_capacity(refs.len() / 2);
        let mut prev_out: Option<usize> = None;
        let mut input_dim = 0;
        for pair in refs.chunks(2) {
            let (out, inp) = match tape.shape(pair[0]) {
                Shape::Matrix(o, i) => (o, i),
                s => return Err(Error::dimension("weight", "(out, in) matrix", s)),
            };
            if tape.shape(pair[1]) != Shape::Vector(out) {
                return Err(Error::dimension("bias", Shape::Vector(out), tape.shape(pair[1])));
            }
            match prev_out {
                None => input_dim = inp,
                Some(p) if p != inp => return Err(Error::dimension("weight columns", p, inp)),
                Some(_) => {}
            }
            prev_out = Some(out);
            layers.push((pair[0], pair[1]));
        }
        Ok(BoundParams {
            layers,
            activation,
            input_dim,
        })
    }

    /// Handles in `[w0, b0, w1, b1, ...]` order.
    pub fn refs(&self) -> Vec<NodeRef> {
        self.layers.iter().flat_map(|(w, b)| [*w, *b]).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Collects the gradients of every bound parameter.
    pub fn gradients(&self, tape: &Tape<'_>, grads: &mut crate::diff::Gradients) -> ParamGrads {
        ParamGrads {
            layers: self
                .layers
                .iter()
                .map(|(w, b)| LayerParams {
                    weight: grads.take(*w).unwrap_or_else(|| Tensor::zeros(tape.shape(*w))),
                    bias: grads.take(*b).unwrap_or_else(|| Tensor::zeros(tape.shape(*b))),
                })
                .collect(),
        }
    }
}

/// Evaluates the network on `x`, recording every operation on `tape`.
pub fn forward<'a>(tape: &mut Tape<'a>, params: &BoundParams, x: &'a [f64]) -> Result<NodeRef> {
    if x.len() != params.input_dim {
        return Err(Error::dimension("input", params.input_dim, x.len()));
    }
    let mut cur = tape.constant_ref(x);
    let last = params.layers.len() - 1;
    for (k, (w, b)) in params.layers.iter().enumerate() {
        cur = tape.matmul_add(*w, cur, *b)?;
        if k != last {
            cur = match params.activation {
                Activation::Relu => tape.relu(cur),
                Activation::Tanh => tape.tanh(cur),
            };
        }
    }
    Ok(cur)
}

/// He-Gaussian initialization: weights `N(0, 2 / fan_in)`, zero biases.
pub fn init_params(arch: &MlpArchitecture, seed: u64) -> ParameterSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = arch
        .layer_shapes()
        .map(|(out, inp)| {
            let sd = libm::sqrt(2.0 / inp as f64);
            let normal = Normal::new(0.0, sd).expect("positive standard deviation");
            let w: Vec<f64> = (0..out * inp).map(|_| normal.sample(&mut rng)).collect();
            LayerParams {
                weight: Tensor::matrix(out, inp, w).expect("sized to shape"),
                bias: Tensor::zeros(Shape::Vector(out)),
            }
        })
        .collect();
    ParameterSet {
        arch: arch.clone(),
        layers,
        stamp: next_stamp(),
    }
}

/// Gradient of a scalar loss with respect to every parameter, in parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub layers: Vec<LayerParams>,
}

impl ParamGrads {
    pub fn zeros(arch: &MlpArchitecture) -> Self {
        ParamGrads {
            layers: zero_layers(arch),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(LayerParams::is_finite)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weight.data().iter().chain(l.bias.data()))
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates and step counter for Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<LayerParams>,
    pub second_moment: Vec<LayerParams>,
}

impl AdamState {
    pub fn new(config: AdamConfig, arch: &MlpArchitecture) -> Self {
        AdamState {
            config,
            step: 0,
            first_moment: zero_layers(arch),
            second_moment: zero_layers(arch),
        }
    }
}

/// One bias-corrected Adam update. A non-finite gradient aborts before anything is
/// modified.
pub fn adam_step(params: &mut ParameterSet, grads: &ParamGrads, state: &mut AdamState) -> Result<()> {
    if grads.layers.len() != params.layers.len() || state.first_moment.len() != params.layers.len() {
        return Err(Error::dimension("gradient layers", params.layers.len(), grads.layers.len()));
    }
    for ((g, p), m) in grads.layers.iter().zip(&params.layers).zip(&state.first_moment) {
        if g.weight.shape() != p.weight.shape() || g.bias.shape() != p.bias.shape() {
            return Err(Error::dimension("gradient", p.weight.shape(), g.weight.shape()));
        }
        if m.weight.shape() != p.weight.shape() {
            return Err(Error::dimension("optimizer moment", p.weight.shape(), m.weight.shape()));
        }
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite(format!(
            "gradient at optimizer step {}",
            state.step + 1
        )));
    }

    state.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let t = state.step as f64;
    let c1 = 1.0 - libm::pow(beta1, t);
    let c2 = 1.0 - libm::pow(beta2, t);
    let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for i in 0..p.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (libm::sqrt(v_hat) + eps);
        }
    };
    for (((p, g), m), v) in params
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        update(p.weight.data_mut(), g.weight.data(), m.weight.data_mut(), v.weight.data_mut());
        update(p.bias.data_mut(), g.bias.data(), m.bias.data_mut(), v.bias.data_mut());
    }
    params.stamp = next_stamp();
    Ok(())
}
