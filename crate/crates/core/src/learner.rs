//! Fully connected contrastive models with hand-written reverse-mode
//! gradients, RMSProp, and the epoch loop.
//!
//! Two model kinds share one interface. The pair model scores the
//! concatenation `[bow(x); bow(x')]` with an MLP and a sigmoid head, trained
//! on squared loss. The bilinear model scores `f1(x)^T f2(x')` with two MLP
//! towers, trained on logistic loss with labels mapped to {-1, +1}. Both
//! expose a log-odds score, so `P(y=1) = sigmoid(score)` in either case.

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contrastive_data::{ContrastiveDataset, ContrastivePair, DataError, ResamplingStream};
use crate::rng::{derive_seed, stream_rng, tags, Rng};
use crate::scalar::{sigmoid, softplus, Real};
use crate::topic_model::Document;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const DROPOUT_P: f64 = 0.5;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("non-finite {what} in {stage}")]
    NonFinite { stage: String, what: &'static str },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("token {token} outside vocabulary of size {vocab}")]
    TokenOutOfRange { token: u32, vocab: usize },
    #[error("training diverged at epoch {epoch}: loss {loss} exceeded {factor}x the initial loss {initial}")]
    Diverged { epoch: usize, loss: f64, initial: f64, factor: f64, trace: Vec<EpochRecord> },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// How a half-document is turned into a network input.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputEncoding {
    /// Raw token counts.
    #[default]
    Counts,
    /// Counts divided by the half-document length.
    LengthNormalized,
}

/// Token counts of one half-document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BowVector {
    pub counts: Vec<u32>,
}

impl BowVector {
    pub fn from_document(doc: &Document, vocab: usize) -> Result<Self, LearnError> {
        if let Some(&t) = doc.tokens.iter().find(|&&t| t as usize >= vocab) {
            return Err(LearnError::TokenOutOfRange { token: t, vocab });
        }
        Ok(Self { counts: doc.counts(vocab) })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

/// One row per document.
pub fn encode_documents<'a, T: Real>(
    docs: impl IntoIterator<Item = &'a Document>,
    vocab: usize,
    encoding: InputEncoding,
) -> Result<Array2<T>, LearnError> {
    let docs: Vec<&Document> = docs.into_iter().collect();
    let mut out = Array2::<T>::zeros((docs.len(), vocab));
    for (i, d) in docs.iter().enumerate() {
        let bow = BowVector::from_document(d, vocab)?;
        let scale = match encoding {
            InputEncoding::Counts => T::one(),
            InputEncoding::LengthNormalized => T::one() / T::from_usize_lossy(d.len().max(1)),
        };
        for (j, &c) in bow.counts.iter().enumerate() {
            if c > 0 {
                out[[i, j]] = T::from_usize_lossy(c as usize) * scale;
            }
        }
    }
    Ok(out)
}

/// Encoded pairs: row `i` of `first` and `second` form pair `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T> {
    pub first: Array2<T>,
    pub second: Array2<T>,
    /// Labels in {0, 1}.
    pub y: Array1<T>,
}

impl<T: Real> Batch<T> {
    pub fn from_pairs(pairs: &[ContrastivePair], vocab: usize, encoding: InputEncoding) -> Result<Self, LearnError> {
        let first = encode_documents(pairs.iter().map(|p| &p.first), vocab, encoding)?;
        let second = encode_documents(pairs.iter().map(|p| &p.second), vocab, encoding)?;
        let y = pairs.iter().map(|p| if p.y == 1 { T::one() } else { T::zero() }).collect();
        Ok(Self { first, second, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            first: self.first.select(Axis(0), rows),
            second: self.second.select(Axis(0), rows),
            y: self.y.select(Axis(0), rows),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics for batch norm, dropout active.
    Train,
    /// Running statistics, no dropout. Deterministic.
    Eval,
}

/// Layer widths and toggles of one fully connected network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    #[serde(default)]
    pub batch_norm: bool,
    #[serde(default)]
    pub dropout: bool,
}

impl MlpSpec {
    fn validate(&self) -> Result<(), LearnError> {
        if self.input == 0 || self.output == 0 || self.hidden.contains(&0) {
            return Err(LearnError::Config(format!("zero-width layer in {self:?}")));
        }
        Ok(())
    }

    fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input];
        d.extend(&self.hidden);
        d.push(self.output);
        d
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Dense<T> {
    /// `input x output`.
    w: Array2<T>,
    b: Array1<T>,
}

#[derive(Clone, Debug, PartialEq)]
struct BatchNorm<T> {
    gamma: Array1<T>,
    beta: Array1<T>,
    running_mean: Array1<T>,
    running_var: Array1<T>,
}

/// Batch mean and unbiased variance of one batch-norm layer, used to update
/// its running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Array1<T>,
    pub var: Array1<T>,
}

struct HiddenCache<T> {
    input: Array2<T>,
    /// Normalised pre-activation and `1/sqrt(var + eps)` when batch norm is on.
    bn: Option<(Array2<T>, Array1<T>)>,
    /// Pre-activation after batch norm, before ReLU.
    pre: Array2<T>,
    dropout: Option<Array2<T>>,
}

struct MlpCache<T> {
    hidden: Vec<HiddenCache<T>>,
    last_input: Array2<T>,
    stats: Vec<BatchStats<T>>,
}

/// ReLU network with optional batch norm and dropout after each hidden
/// layer: `Linear -> [BN] -> ReLU -> [Dropout]`, then a linear output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    spec: MlpSpec,
    dense: Vec<Dense<T>>,
    bn: Vec<BatchNorm<T>>,
}

impl<T: Real> Mlp<T> {
    /// Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); batch norm
    /// starts at gamma = 1, beta = 0.
    pub fn new(spec: MlpSpec, rng: &mut Rng) -> Result<Self, LearnError> {
        spec.validate()?;
        let dims = spec.dims();
        let mut dense = Vec::with_capacity(dims.len() - 1);
        for win in dims.windows(2) {
            let (fan_in, fan_out) = (win[0], win[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = Array2::from_shape_fn((fan_in, fan_out), |_| T::from_f64_lossy(rng.random_range(-bound..bound)));
            let b = Array1::from_shape_fn(fan_out, |_| T::from_f64_lossy(rng.random_range(-bound..bound)));
            dense.push(Dense { w, b });
        }
        let bn = if spec.batch_norm {
            spec.hidden
                .iter()
                .map(|&h| BatchNorm {
                    gamma: Array1::ones(h),
                    beta: Array1::zeros(h),
                    running_mean: Array1::zeros(h),
                    running_var: Array1::ones(h),
                })
                .collect()
        } else {
            vec![]
        };
        Ok(Self { spec, dense, bn })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    /// Set the output layer's weights and bias to zero.
    pub fn zero_output_layer(&mut self) {
        let last = self.dense.last_mut().expect("at least one layer");
        last.w.fill(T::zero());
        last.b.fill(T::zero());
    }

    /// Direct access to layer `i`'s `(weights, bias)`; weights are `input x output`.
    pub fn layer_mut(&mut self, i: usize) -> (&mut Array2<T>, &mut Array1<T>) {
        let d = &mut self.dense[i];
        (&mut d.w, &mut d.b)
    }

    fn forward_cached(&self, x: ArrayView2<T>, mode: Mode, rng: &mut Rng) -> Result<(Array2<T>, MlpCache<T>), LearnError> {
        if x.ncols() != self.spec.input {
            return Err(LearnError::Shape(format!("input width {} != {}", x.ncols(), self.spec.input)));
        }
        let eps = T::from_f64_lossy(BN_EPS);
        let keep = 1.0 - DROPOUT_P;
        let mut h = x.to_owned();
        let mut hidden = Vec::with_capacity(self.spec.hidden.len());
        let mut stats = Vec::new();
        for l in 0..self.spec.hidden.len() {
            let layer = &self.dense[l];
            let z = h.dot(&layer.w) + &layer.b;
            let (pre, bn) = if self.spec.batch_norm {
                let p = &self.bn[l];
                match mode {
                    Mode::Train => {
                        let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
                        let var = z.var_axis(Axis(0), T::zero());
                        let inv_std = var.mapv(|v| T::one() / (v + eps).sqrt());
                        let xhat = (&z - &mean) * &inv_std;
                        let n = z.nrows();
                        let unbiased = if n > 1 {
                            var.mapv(|v| v * T::from_usize_lossy(n) / T::from_usize_lossy(n - 1))
                        } else {
                            var.clone()
                        };
                        stats.push(BatchStats { mean, var: unbiased });
                        (&xhat * &p.gamma + &p.beta, Some((xhat, inv_std)))
                    }
                    Mode::Eval => {
                        let inv_std = p.running_var.mapv(|v| T::one() / (v + eps).sqrt());
                        let xhat = (&z - &p.running_mean) * &inv_std;
                        (&xhat * &p.gamma + &p.beta, Some((xhat, inv_std)))
                    }
                }
            } else {
                (z, None)
            };
            let mut a = pre.mapv(|v| v.max(T::zero()));
            let dropout = if self.spec.dropout && mode == Mode::Train {
                let scale = T::from_f64_lossy(1.0 / keep);
                let mask = Array2::from_shape_fn(a.raw_dim(), |_| {
                    if rng.random::<f64>() < keep {
                        scale
                    } else {
                        T::zero()
                    }
                });
                a = a * &mask;
                Some(mask)
            } else {
                None
            };
            if a.iter().any(|v| !v.is_finite()) {
                return Err(LearnError::NonFinite { stage: format!("hidden layer {l}"), what: "activation" });
            }
            hidden.push(HiddenCache { input: h, bn, pre, dropout });
            h = a;
        }
        let last = self.dense.last().expect("at least one layer");
        let out = h.dot(&last.w) + &last.b;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(LearnError::NonFinite { stage: "output layer".into(), what: "activation" });
        }
        Ok((out, MlpCache { hidden, last_input: h, stats }))
    }

    /// Deterministic evaluation-mode forward pass.
    pub fn forward_eval(&self, x: ArrayView2<T>) -> Result<Array2<T>, LearnError> {
        let mut unused = stream_rng(0, 0);
        Ok(self.forward_cached(x, Mode::Eval, &mut unused)?.0)
    }

    /// Gradients in [`Mlp::params`] order.
    fn backward(&self, cache: &MlpCache<T>, dout: Array2<T>, mode: Mode) -> Vec<Vec<T>> {
        let n_hidden = self.spec.hidden.len();
        let last = &self.dense[n_hidden];
        let mut per_layer: Vec<Vec<Vec<T>>> = vec![vec![]; n_hidden + 1];
        let gw = cache.last_input.t().dot(&dout);
        let gb = dout.sum_axis(Axis(0));
        per_layer[n_hidden] = vec![to_vec(gw), gb.to_vec()];
        let mut dh = dout.dot(&last.w.t());
        for l in (0..n_hidden).rev() {
            let c = &cache.hidden[l];
            if let Some(mask) = &c.dropout {
                dh = dh * mask;
            }
            let mut dz = dh;
            dz.zip_mut_with(&c.pre, |g, &p| {
                if p <= T::zero() {
                    *g = T::zero();
                }
            });
            let mut slots = Vec::with_capacity(4);
            let dpre = if let Some((xhat, inv_std)) = &c.bn {
                let p = &self.bn[l];
                let dgamma = (&dz * xhat).sum_axis(Axis(0));
                let dbeta = dz.sum_axis(Axis(0));
                let dxhat = &dz * &p.gamma;
                let d = match mode {
                    Mode::Train => {
                        let n = T::from_usize_lossy(dz.nrows());
                        let sum_dxhat = dxhat.sum_axis(Axis(0));
                        let sum_dxhat_xhat = (&dxhat * xhat).sum_axis(Axis(0));
                        let inner = &dxhat * n - &sum_dxhat - &(xhat * &sum_dxhat_xhat);
                        inner * &(inv_std / n)
                    }
                    Mode::Eval => dxhat * inv_std,
                };
                slots.push(dgamma.to_vec());
                slots.push(dbeta.to_vec());
                d
            } else {
                dz
            };
            let layer = &self.dense[l];
            let gw = c.input.t().dot(&dpre);
            let gb = dpre.sum_axis(Axis(0));
            let mut g = vec![to_vec(gw), gb.to_vec()];
            g.extend(slots);
            per_layer[l] = g;
            if l > 0 {
                dh = dpre.dot(&layer.w.t());
            } else {
                dh = Array2::zeros((0, 0));
            }
        }
        per_layer.into_iter().flatten().collect()
    }

    /// Per hidden layer: `w, b, [gamma, beta]`; then the output `w, b`.
    fn params(&self) -> Vec<(&[T], bool)> {
        let mut out = Vec::new();
        for (l, d) in self.dense.iter().enumerate() {
            out.push((d.w.as_slice().expect("standard layout"), true));
            out.push((d.b.as_slice().expect("standard layout"), false));
            if self.spec.batch_norm && l < self.spec.hidden.len() {
                out.push((self.bn[l].gamma.as_slice().expect("standard layout"), false));
                out.push((self.bn[l].beta.as_slice().expect("standard layout"), false));
            }
        }
        out
    }

    fn params_mut(&mut self) -> Vec<ParamSlot<'_, T>> {
        let n_hidden = self.spec.hidden.len();
        let mut out = Vec::new();
        let mut bn = self.bn.iter_mut();
        for (l, d) in self.dense.iter_mut().enumerate() {
            out.push(ParamSlot { values: d.w.as_slice_mut().expect("standard layout"), decay: true });
            out.push(ParamSlot { values: d.b.as_slice_mut().expect("standard layout"), decay: false });
            if self.spec.batch_norm && l < n_hidden {
                let p = bn.next().expect("one batch norm per hidden layer");
                out.push(ParamSlot { values: p.gamma.as_slice_mut().expect("standard layout"), decay: false });
                out.push(ParamSlot { values: p.beta.as_slice_mut().expect("standard layout"), decay: false });
            }
        }
        out
    }

    fn buffers(&self) -> Vec<&[T]> {
        self.bn
            .iter()
            .flat_map(|p| [p.running_mean.as_slice().expect("standard layout"), p.running_var.as_slice().expect("standard layout")])
            .collect()
    }

    fn buffers_mut(&mut self) -> Vec<&mut [T]> {
        self.bn
            .iter_mut()
            .flat_map(|p| {
                [p.running_mean.as_slice_mut().expect("standard layout"), p.running_var.as_slice_mut().expect("standard layout")]
            })
            .collect()
    }

    fn apply_stats(&mut self, stats: &[BatchStats<T>]) {
        let m = T::from_f64_lossy(BN_MOMENTUM);
        for (p, s) in self.bn.iter_mut().zip(stats) {
            p.running_mean.zip_mut_with(&s.mean, |r, &v| *r = (T::one() - m) * *r + m * v);
            p.running_var.zip_mut_with(&s.var, |r, &v| *r = (T::one() - m) * *r + m * v);
        }
    }
}

fn to_vec<T: Clone>(a: Array2<T>) -> Vec<T> {
    a.iter().cloned().collect()
}

/// Mutable view of one parameter tensor, flattened row-major.
pub struct ParamSlot<'a, T> {
    pub values: &'a mut [T],
    /// Whether weight decay applies.
    pub decay: bool,
}

/// Result of one forward/backward pass.
#[derive(Clone, Debug)]
pub struct LossGrad<T> {
    pub loss: T,
    /// One entry per parameter tensor, in `params_mut` order.
    pub grads: Vec<Vec<T>>,
    pub batch_stats: Vec<BatchStats<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Pair,
    Bilinear,
}

/// Serializable description of a model, enough to rebuild it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Architecture {
    Pair {
        vocab: usize,
        hidden: Vec<usize>,
        #[serde(default)]
        batch_norm: bool,
        #[serde(default)]
        dropout: bool,
        #[serde(default)]
        encoding: InputEncoding,
    },
    Bilinear {
        vocab: usize,
        hidden: Vec<usize>,
        dim: usize,
        #[serde(default)]
        batch_norm: bool,
        #[serde(default)]
        dropout: bool,
        #[serde(default)]
        encoding: InputEncoding,
    },
}

impl Architecture {
    pub fn kind(&self) -> ModelKind {
        match self {
            Architecture::Pair { .. } => ModelKind::Pair,
            Architecture::Bilinear { .. } => ModelKind::Bilinear,
        }
    }

    /// Fresh model with initial weights drawn from `seed`.
    pub fn build<T: Real>(&self, seed: u64) -> Result<Learner<T>, LearnError> {
        let mut rng = stream_rng(derive_seed(seed, tags::INIT), 0);
        Ok(match self {
            Architecture::Pair { vocab, hidden, batch_norm, dropout, encoding } => {
                let spec = MlpSpec { input: 2 * vocab, hidden: hidden.clone(), output: 1, batch_norm: *batch_norm, dropout: *dropout };
                Learner::Pair(PairModel { net: Mlp::new(spec, &mut rng)?, vocab: *vocab, encoding: *encoding })
            }
            Architecture::Bilinear { vocab, hidden, dim, batch_norm, dropout, encoding } => {
                let spec = MlpSpec { input: *vocab, hidden: hidden.clone(), output: *dim, batch_norm: *batch_norm, dropout: *dropout };
                let one = Mlp::new(spec.clone(), &mut rng)?;
                let two = Mlp::new(spec, &mut rng)?;
                Learner::Bilinear(BilinearModel::new(one, two, *encoding)?)
            }
        })
    }
}

/// A trainable contrastive scorer.
pub trait ContrastiveModel<T: Real> {
    fn kind(&self) -> ModelKind;
    fn vocab_size(&self) -> usize;
    fn encoding(&self) -> InputEncoding;
    fn architecture(&self) -> Architecture;

    /// Log-odds score per aligned row pair. Evaluation mode.
    fn scores(&self, first: ArrayView2<T>, second: ArrayView2<T>) -> Result<Array1<T>, LearnError>;

    /// Mean loss over the batch and its gradient.
    fn loss_and_grad(&self, batch: &Batch<T>, mode: Mode, rng: &mut Rng) -> Result<LossGrad<T>, LearnError>;

    /// Mean loss over the batch without gradients.
    fn loss(&self, batch: &Batch<T>, mode: Mode, rng: &mut Rng) -> Result<T, LearnError>;

    fn params(&self) -> Vec<(&[T], bool)>;
    fn params_mut(&mut self) -> Vec<ParamSlot<'_, T>>;
    /// Non-trainable state (batch-norm running statistics).
    fn buffers(&self) -> Vec<&[T]>;
    fn buffers_mut(&mut self) -> Vec<&mut [T]>;
    fn apply_batch_stats(&mut self, stats: &[BatchStats<T>]);

    /// `P(y=1)` per aligned row pair. Evaluation mode.
    fn probs(&self, first: ArrayView2<T>, second: ArrayView2<T>) -> Result<Array1<T>, LearnError> {
        Ok(self.scores(first, second)?.mapv(sigmoid))
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|(p, _)| p.len()).sum()
    }

    fn flat_params(&self) -> Vec<T> {
        self.params().iter().flat_map(|(p, _)| p.iter().copied()).collect()
    }

    fn set_flat_params(&mut self, flat: &[T]) -> Result<(), LearnError> {
        if flat.len() != self.num_params() {
            return Err(LearnError::Shape(format!("{} parameters, expected {}", flat.len(), self.num_params())));
        }
        let mut off = 0;
        for slot in self.params_mut() {
            let n = slot.values.len();
            slot.values.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Parameters followed by buffers.
    fn state_vector(&self) -> Vec<T> {
        let mut v = self.flat_params();
        v.extend(self.buffers().iter().flat_map(|b| b.iter().copied()));
        v
    }

    fn load_state_vector(&mut self, state: &[T]) -> Result<(), LearnError> {
        let np = self.num_params();
        let nb: usize = self.buffers().iter().map(|b| b.len()).sum();
        if state.len() != np + nb {
            return Err(LearnError::Shape(format!("state of {} values, expected {}", state.len(), np + nb)));
        }
        self.set_flat_params(&state[..np])?;
        let mut off = np;
        for b in self.buffers_mut() {
            let n = b.len();
            b.copy_from_slice(&state[off..off + n]);
            off += n;
        }
        Ok(())
    }
}

fn check_batch<T: Real>(batch: &Batch<T>, vocab: usize) -> Result<(), LearnError> {
    if batch.is_empty() {
        return Err(LearnError::EmptyBatch);
    }
    let n = batch.len();
    if batch.first.dim() != (n, vocab) || batch.second.dim() != (n, vocab) {
        return Err(LearnError::Shape(format!(
            "batch halves {:?}/{:?} for {n} labels and vocabulary {vocab}",
            batch.first.dim(),
            batch.second.dim()
        )));
    }
    Ok(())
}

fn check_finite<T: Real>(lg: &LossGrad<T>) -> Result<(), LearnError> {
    if !lg.loss.is_finite() {
        return Err(LearnError::NonFinite { stage: "loss".into(), what: "value" });
    }
    if lg.grads.iter().flatten().any(|g| !g.is_finite()) {
        return Err(LearnError::NonFinite { stage: "backward pass".into(), what: "gradient" });
    }
    Ok(())
}

/// MLP on `[bow(x); bow(x')]` with a sigmoid head; squared loss.
#[derive(Clone, Debug, PartialEq)]
pub struct PairModel<T> {
    net: Mlp<T>,
    vocab: usize,
    encoding: InputEncoding,
}

impl<T: Real> PairModel<T> {
    pub fn new(net: Mlp<T>, encoding: InputEncoding) -> Result<Self, LearnError> {
        let s = net.spec();
        if s.input % 2 != 0 || s.output != 1 {
            return Err(LearnError::Config(format!("pair network must map 2V -> 1, got {} -> {}", s.input, s.output)));
        }
        let vocab = s.input / 2;
        Ok(Self { net, vocab, encoding })
    }

    pub fn net(&self) -> &Mlp<T> {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp<T> {
        &mut self.net
    }

    /// `f(x, x')` in (0, 1) for one pair of bag-of-words inputs.
    pub fn forward_pair(&self, x: &Document, x_prime: &Document) -> Result<T, LearnError> {
        let a = encode_documents([x], self.vocab, self.encoding)?;
        let b = encode_documents([x_prime], self.vocab, self.encoding)?;
        Ok(self.probs(a.view(), b.view())?[0])
    }
}

impl<T: Real> ContrastiveModel<T> for PairModel<T> {
    fn kind(&self) -> ModelKind {
        ModelKind::Pair
    }

    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn encoding(&self) -> InputEncoding {
        self.encoding
    }

    fn architecture(&self) -> Architecture {
        let s = self.net.spec();
        Architecture::Pair {
            vocab: self.vocab,
            hidden: s.hidden.clone(),
            batch_norm: s.batch_norm,
            dropout: s.dropout,
            encoding: self.encoding,
        }
    }

    fn scores(&self, first: ArrayView2<T>, second: ArrayView2<T>) -> Result<Array1<T>, LearnError> {
        let x = concatenate(Axis(1), &[first, second]).map_err(|e| LearnError::Shape(e.to_string()))?;
        Ok(self.net.forward_eval(x.view())?.column(0).to_owned())
    }

    fn loss_and_grad(&self, batch: &Batch<T>, mode: Mode, rng: &mut Rng) -> Result<LossGrad<T>, LearnError> {
        check_batch(batch, self.vocab)?;
        let x = concatenate(Axis(1), &[batch.first.view(), batch.second.view()]).map_err(|e| LearnError::Shape(e.to_string()))?;
        let (out, cache) = self.net.forward_cached(x.view(), mode, rng)?;
        let n = T::from_usize_lossy(batch.len());
        let two = T::from_f64_lossy(2.0);
        let mut loss = T::zero();
        let mut dout = Array2::zeros(out.raw_dim());
        for i in 0..batch.len() {
            let f = sigmoid(out[[i, 0]]);
            let r = f - batch.y[i];
            loss = loss + r * r;
            dout[[i, 0]] = two * r * f * (T::one() - f) / n;
        }
        let grads = self.net.backward(&cache, dout, mode);
        let lg = LossGrad { loss: loss / n, grads, batch_stats: cache.stats };
        check_finite(&lg)?;
        Ok(lg)
    }

    fn loss(&self, batch: &Batch<T>, mode: Mode, rng: &mut Rng) -> Result<T, LearnError> {
        check_batch(batch, self.vocab)?;
        let x = concatenate(Axis(1), &[batch.first.view(), batch.second.view()]).map_err(|e| LearnError::Shape(e.to_string()))?;
        let (out, _) = self.net.forward_cached(x.view(), mode, rng)?;
        let total = out.column(0).iter().zip(batch.y.iter()).fold(T::zero(), |acc, (&z, &y)| {
            let r = sigmoid(z) - y;
            acc + r * r
        });
        Ok(total / T::from_usize_lossy(batch.len()))
    }

    fn params(&self) -> Vec<(&[T], bool)> {
        self.net.params()
    }

    fn params_mut(&mut self) -> Vec<ParamSlot<'_, T>> {
        self.net.params_mut()
    }

    fn buffers(&self) -> Vec<&[T]> {
        self.net.buffers()
    }

    fn buffers_mut(&mut self) -> Vec<&mut [T]> {
        self.net.buffers_mut()
    }

    fn apply_batch_stats(&mut self, stats: &[BatchStats<T>]) {
        self.net.apply_stats(stats);
    }
}

/// Two towers `f1, f2: X -> R^d` scored by `f1(x)^T f2(x')`; logistic loss.
#[derive(Clone, Debug, PartialEq)]
pub struct BilinearModel<T> {
    tower_one: Mlp<T>,
    tower_two: Mlp<T>,
    encoding: InputEncoding,
}

impl<T: Real> BilinearModel<T> {
    pub fn new(tower_one: Mlp<T>, tower_two: Mlp<T>, encoding: InputEncoding) -> Result<Self, LearnError> {
        let (a, b) = (tower_one.spec(), tower_two.spec());
        if a.input != b.input || a.output != b.output {
            return Err(LearnError::Config(format!(
                "towers disagree: {} -> {} and {} -> {}",
                a.input, a.output, b.input, b.output
            )));
        }
        Ok(Self { tower_one, tower_two, encoding })
    }

    pub fn dim(&self) -> usize {
        self.tower_one.spec().output
    }

    pub fn tower_one(&self) -> &Mlp<T> {
        &self.tower_one
    }

    pub fn tower_two(&self) -> &Mlp<T> {
        &self.tower_two
    }

    pub fn towers_mut(&mut self) -> (&mut Mlp<T>, &mut Mlp<T>) {
        (&mut self.tower_one, &mut self.tower_two)
    }

    /// `f1` on each row. Evaluation mode.
    pub fn embed_first(&self, x: ArrayView2<T>) -> Result<Array2<T>, LearnError> {
        self.tower_one.forward_eval(x)
    }

    /// `f2` on each row. Evaluation mode.
    pub fn embed_second(&self, x: ArrayView2<T>) -> Result<Array2<T>, LearnError> {
        self.tower_two.forward_eval(x)
    }

    /// Raw score `s = f1(x)^T f2(x')` for one pair.
    pub fn forward_bilinear(&self, x: &Document, x_prime: &Document) -> Result<T, LearnError> {
        let v = self.vocab_size();
        let a = encode_documents([x], v, self.encoding)?;
        let b = encode_documents([x_prime], v, self.encoding)?;
        Ok(self.scores(a.view(), b.view())?[0])
    }

    fn forward_train(&self, batch: &Batch<T>, mode: Mode, rng: &mut Rng) -> Result<(Array2<T>, Array2<T>, MlpCache<T>, MlpCache<T>), LearnError> {
        let (a, ca) = self.tower_one.forward_cached(batch.first.view(), mode, rng)?;
        let (b, cb) = self.tower_two.forward_cached(batch.second.view(), mode, rng)?;
        Ok((a, b, ca, cb))
    }
}

impl<T: Real> ContrastiveModel<T> for BilinearModel<T> {
    fn kind(&self) -> ModelKind {
        ModelKind::Bilinear
    }

    fn vocab_size(&self) -> usize {
        self.tower_one.spec().input
    }

    fn encoding(&self) -> InputEncoding {
        self.encoding
    }

    fn architecture(&self) -> Architecture {
        let s = self.tower_one.spec();
        Architecture::Bilinear {
            vocab: s.input,
            hidden: s.hidden.clone(),
            dim: s.output,
            batch_norm: s.batch_norm,
            dropout: s.dropout,
            encoding: self.encoding,
        }
    }

    fn scores(&self, first: ArrayView2<T>, second: ArrayView2<T>) -> Result<Array1<T>, LearnError> {
        let a = self.tower_one.forward_eval(first)?;
        let b = self.tower_two.forward_eval(second)?;
        Ok((&a * &b).sum_axis(Axis(1)))
    }

    fn loss_and_grad(&self, batch: &Batch<T>, mode: Mode, rng: &mut Rng) -> Result<LossGrad<T>, LearnError> {
        check_batch(batch, self.vocab_size())?;
        let (a, b, ca, cb) = self.forward_train(batch, mode, rng)?;
        let s = (&a * &b).sum_axis(Axis(1));
        let n = T::from_usize_lossy(batch.len());
        let mut loss = T::zero();
        let mut ds = Array1::zeros(batch.len());
        for i in 0..batch.len() {
            let sign = if batch.y[i] > T::from_f64_lossy(0.5) { T::one() } else { -T::one() };
            loss = loss + softplus(-sign * s[i]);
            ds[i] = -sign * sigmoid(-sign * s[i]) / n;
        }
        let ds_col = ds.insert_axis(Axis(1));
        let da = &b * &ds_col;
        let db = &a * &ds_col;
        let mut grads = self.tower_one.backward(&ca, da, mode);
        grads.extend(self.tower_two.backward(&cb, db, mode));
        let mut batch_stats = ca.stats;
        batch_stats.extend(cb.stats);
        let lg = LossGrad { loss: loss / n, grads, batch_stats };
        check_finite(&lg)?;
        Ok(lg)
    }

    fn loss(&self, batch: &Batch<T>, mode: Mode, rng: &mut Rng) -> Result<T, LearnError> {
        check_batch(batch, self.vocab_size())?;
        let (a, b, _, _) = self.forward_train(batch, mode, rng)?;
        let s = (&a * &b).sum_axis(Axis(1));
        let total = s.iter().zip(batch.y.iter()).fold(T::zero(), |acc, (&si, &y)| {
            let sign = if y > T::from_f64_lossy(0.5) { T::one() } else { -T::one() };
            acc + softplus(-sign * si)
        });
        Ok(total / T::from_usize_lossy(batch.len()))
    }

    fn params(&self) -> Vec<(&[T], bool)> {
        let mut p = self.tower_one.params();
        p.extend(self.tower_two.params());
        p
    }

    fn params_mut(&mut self) -> Vec<ParamSlot<'_, T>> {
        let mut p = self.tower_one.params_mut();
        p.extend(self.tower_two.params_mut());
        p
    }

    fn buffers(&self) -> Vec<&[T]> {
        let mut b = self.tower_one.buffers();
        b.extend(self.tower_two.buffers());
        b
    }

    fn buffers_mut(&mut self) -> Vec<&mut [T]> {
        let mut b = self.tower_one.buffers_mut();
        b.extend(self.tower_two.buffers_mut());
        b
    }

    fn apply_batch_stats(&mut self, stats: &[BatchStats<T>]) {
        let k = self.tower_one.bn.len();
        self.tower_one.apply_stats(&stats[..k.min(stats.len())]);
        if stats.len() > k {
            self.tower_two.apply_stats(&stats[k..]);
        }
    }
}

/// Either model kind behind one type, for configuration-driven code.
#[derive(Clone, Debug, PartialEq)]
pub enum Learner<T> {
    Pair(PairModel<T>),
    Bilinear(BilinearModel<T>),
}

macro_rules! delegate {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            Learner::Pair($m) => $e,
            Learner::Bilinear($m) => $e,
        }
    };
}

impl<T: Real> ContrastiveModel<T> for Learner<T> {
    fn kind(&self) -> ModelKind {
        delegate!(self, m => m.kind())
    }
    fn vocab_size(&self) -> usize {
        delegate!(self, m => m.vocab_size())
    }
    fn encoding(&self) -> InputEncoding {
        delegate!(self, m => m.encoding())
    }
    fn architecture(&self) -> Architecture {
        delegate!(self, m => m.architecture())
    }
    fn scores(&self, first: ArrayView2<T>, second: ArrayView2<T>) -> Result<Array1<T>, LearnError> {
        delegate!(self, m => m.scores(first, second))
    }
    fn loss_and_grad(&self, batch: &Batch<T>, mode: Mode, rng: &mut Rng) -> Result<LossGrad<T>, LearnError> {
        delegate!(self, m => m.loss_and_grad(batch, mode, rng))
    }
    fn loss(&self, batch: &Batch<T>, mode: Mode, rng: &mut Rng) -> Result<T, LearnError> {
        delegate!(self, m => m.loss(batch, mode, rng))
    }
    fn params(&self) -> Vec<(&[T], bool)> {
        delegate!(self, m => m.params())
    }
    fn params_mut(&mut self) -> Vec<ParamSlot<'_, T>> {
        delegate!(self, m => m.params_mut())
    }
    fn buffers(&self) -> Vec<&[T]> {
        delegate!(self, m => m.buffers())
    }
    fn buffers_mut(&mut self) -> Vec<&mut [T]> {
        delegate!(self, m => m.buffers_mut())
    }
    fn apply_batch_stats(&mut self, stats: &[BatchStats<T>]) {
        delegate!(self, m => m.apply_batch_stats(stats))
    }
}

/// RMSProp with momentum and L2 weight decay, following the usual
/// `square_avg = alpha * square_avg + (1 - alpha) * g^2`,
/// `buf = momentum * buf + g / (sqrt(square_avg) + eps)`, `p -= lr * buf`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RmsPropConfig {
    pub lr: f64,
    pub alpha: f64,
    pub eps: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// The learning rate is halved from this epoch index on.
    pub halve_lr_at: Option<usize>,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self { lr: 1e-4, alpha: 0.99, eps: 1e-8, momentum: 0.009, weight_decay: 1e-4, halve_lr_at: Some(250) }
    }
}

impl RmsPropConfig {
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        match self.halve_lr_at {
            Some(h) if epoch >= h => self.lr / 2.0,
            _ => self.lr,
        }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.alpha)
            && self.eps > 0.0
            && (0.0..1.0).contains(&self.momentum)
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(LearnError::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptState<T> {
    pub config: RmsPropConfig,
    pub square_avg: Vec<Vec<T>>,
    pub momentum_buf: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: Real> OptState<T> {
    pub fn new<M: ContrastiveModel<T> + ?Sized>(model: &M, config: RmsPropConfig) -> Self {
        let shapes: Vec<usize> = model.params().iter().map(|(p, _)| p.len()).collect();
        Self::with_shapes(&shapes, config)
    }

    pub fn with_shapes(shapes: &[usize], config: RmsPropConfig) -> Self {
        Self {
            config,
            square_avg: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            momentum_buf: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            step: 0,
        }
    }
}

/// One in-place RMSProp update at learning rate `lr`.
pub fn rmsprop_step<T: Real>(params: Vec<ParamSlot<'_, T>>, grads: &[Vec<T>], state: &mut OptState<T>, lr: f64) -> Result<(), LearnError> {
    if params.len() != grads.len() || params.len() != state.square_avg.len() {
        return Err(LearnError::Shape(format!(
            "{} parameter tensors, {} gradients, {} accumulators",
            params.len(),
            grads.len(),
            state.square_avg.len()
        )));
    }
    let c = &state.config;
    let (alpha, eps, mom, wd) = (
        T::from_f64_lossy(c.alpha),
        T::from_f64_lossy(c.eps),
        T::from_f64_lossy(c.momentum),
        T::from_f64_lossy(c.weight_decay),
    );
    let lr = T::from_f64_lossy(lr);
    let use_momentum = c.momentum > 0.0;
    for (i, slot) in params.into_iter().enumerate() {
        let g = &grads[i];
        if g.len() != slot.values.len() {
            return Err(LearnError::Shape(format!("tensor {i}: {} values, {} gradients", slot.values.len(), g.len())));
        }
        let sq = &mut state.square_avg[i];
        let buf = &mut state.momentum_buf[i];
        for j in 0..g.len() {
            let p = &mut slot.values[j];
            let gj = if slot.decay { g[j] + wd * *p } else { g[j] };
            sq[j] = alpha * sq[j] + (T::one() - alpha) * gj * gj;
            let step = gj / (sq[j].sqrt() + eps);
            if use_momentum {
                buf[j] = mom * buf[j] + step;
                *p = *p - lr * buf[j];
            } else {
                *p = *p - lr * step;
            }
        }
    }
    state.step += 1;
    Ok(())
}

/// Source of the training dataset in force at each epoch.
pub trait DataStream {
    /// The dataset for `epoch` and whether it was freshly drawn.
    fn dataset_for_epoch(&mut self, epoch: usize) -> Result<(&ContrastiveDataset, bool), DataError>;
}

impl<T: Real> DataStream for ResamplingStream<T> {
    fn dataset_for_epoch(&mut self, epoch: usize) -> Result<(&ContrastiveDataset, bool), DataError> {
        ResamplingStream::dataset_for_epoch(self, epoch)
    }
}

/// One dataset used for every epoch.
#[derive(Clone, Debug)]
pub struct StaticData(pub ContrastiveDataset);

impl DataStream for StaticData {
    fn dataset_for_epoch(&mut self, epoch: usize) -> Result<(&ContrastiveDataset, bool), DataError> {
        Ok((&self.0, epoch == 0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: RmsPropConfig,
    /// Epoch indices after which the hook is told to checkpoint.
    pub checkpoints: Vec<usize>,
    pub divergence_factor: f64,
    pub divergence_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 128,
            optimizer: RmsPropConfig::default(),
            checkpoints: vec![],
            divergence_factor: 10.0,
            divergence_patience: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub holdout_loss: Option<f64>,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<M, T> {
    pub model: M,
    pub trace: Vec<EpochRecord>,
    /// Evaluation-mode loss on the first dataset before any update.
    pub initial_loss: f64,
    pub opt_state: OptState<T>,
}

/// Called after every epoch with the record, the current model, and whether
/// the epoch is a configured checkpoint.
pub type EpochHook<'a, M> = dyn FnMut(&EpochRecord, &M, bool) + 'a;

/// Minibatch RMSProp over the stream's datasets. Minibatch order comes from
/// `seed`; the same seed, config and stream give the same trace.
pub fn train<T, M, S>(
    mut model: M,
    stream: &mut S,
    holdout: Option<&Batch<T>>,
    config: &TrainConfig,
    seed: u64,
    hook: &mut EpochHook<'_, M>,
) -> Result<TrainOutcome<M, T>, LearnError>
where
    T: Real,
    M: ContrastiveModel<T>,
    S: DataStream + ?Sized,
{
    config.optimizer.validate()?;
    if config.batch_size == 0 {
        return Err(LearnError::Config("batch size must be positive".into()));
    }
    let mut opt = OptState::new(&model, config.optimizer.clone());
    let mut trace = Vec::with_capacity(config.epochs);
    let mut eval_rng = stream_rng(0, 0);
    let (vocab, enc) = (model.vocab_size(), model.encoding());
    let (initial_loss, mut data) = {
        let (ds, _) = stream.dataset_for_epoch(0)?;
        let b = Batch::from_pairs(&ds.pairs, vocab, enc)?;
        (model.loss(&b, Mode::Eval, &mut eval_rng)?.to_f64_lossy(), b)
    };
    let train_seed = derive_seed(seed, tags::TRAIN);
    let mut above = 0;
    for epoch in 0..config.epochs {
        let (ds, fresh) = stream.dataset_for_epoch(epoch)?;
        if fresh && epoch > 0 {
            data = Batch::from_pairs(&ds.pairs, vocab, enc)?;
        }
        if data.is_empty() {
            return Err(LearnError::EmptyBatch);
        }
        let lr = config.optimizer.lr_at_epoch(epoch);
        let mut rng = stream_rng(train_seed, epoch as u64);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let mb = data.select(chunk);
            let lg = model.loss_and_grad(&mb, Mode::Train, &mut rng)?;
            total += lg.loss.to_f64_lossy() * chunk.len() as f64;
            model.apply_batch_stats(&lg.batch_stats);
            rmsprop_step(model.params_mut(), &lg.grads, &mut opt, lr)?;
        }
        let train_loss = total / data.len() as f64;
        let holdout_loss = match holdout {
            Some(h) => Some(model.loss(h, Mode::Eval, &mut eval_rng)?.to_f64_lossy()),
            None => None,
        };
        let record = EpochRecord { epoch, train_loss, holdout_loss, lr };
        trace.push(record.clone());
        hook(&record, &model, config.checkpoints.contains(&epoch));
        if train_loss > config.divergence_factor * initial_loss {
            above += 1;
            if above >= config.divergence_patience {
                return Err(LearnError::Diverged {
                    epoch,
                    loss: train_loss,
                    initial: initial_loss,
                    factor: config.divergence_factor,
                    trace,
                });
            }
        } else {
            above = 0;
        }
    }
    Ok(TrainOutcome { model, trace, initial_loss, opt_state: opt })
}

/// Comparison of analytic and central-difference gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub coordinates: usize,
}

/// Central differences with step `h` on every parameter coordinate (or the
/// given subset). Relative error is `|a - n| / max(|a|, |n|, floor)`.
/// Dropout masks are replayed from `seed` for every evaluation.
pub fn gradient_check<T: Real, M: ContrastiveModel<T> + Clone>(
    model: &M,
    batch: &Batch<T>,
    mode: Mode,
    h: f64,
    floor: f64,
    seed: u64,
    subset: Option<&[usize]>,
) -> Result<GradCheck, LearnError> {
    let analytic: Vec<T> = model.loss_and_grad(batch, mode, &mut stream_rng(seed, 0))?.grads.into_iter().flatten().collect();
    let base = model.flat_params();
    let mut probe = model.clone();
    let all: Vec<usize>;
    let coords = match subset {
        Some(s) => s,
        None => {
            all = (0..base.len()).collect();
            &all
        }
    };
    let mut worst = (0.0, 0);
    let hh = T::from_f64_lossy(h);
    for &i in coords {
        let mut p = base.clone();
        p[i] = base[i] + hh;
        probe.set_flat_params(&p)?;
        let up = probe.loss(batch, mode, &mut stream_rng(seed, 0))?.to_f64_lossy();
        p[i] = base[i] - hh;
        probe.set_flat_params(&p)?;
        let down = probe.loss(batch, mode, &mut stream_rng(seed, 0))?.to_f64_lossy();
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i].to_f64_lossy();
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        if rel > worst.0 {
            worst = (rel, i);
        }
    }
    Ok(GradCheck { max_rel_error: worst.0, worst_index: worst.1, coordinates: coords.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contrastive_data::{build_paired_permutation, ContrastivePair};
    use crate::topic_model::SplitMode;
    use ndarray::array;

    fn random_batch(n: usize, vocab: usize, seed: u64) -> Batch<f64> {
        let mut rng = stream_rng(seed, 99);
        let pairs: Vec<ContrastivePair> = (0..n)
            .map(|i| {
                let mut doc = || Document::new((0..rng.random_range(1..6)).map(|_| rng.random_range(0..vocab as u32)).collect());
                let (first, second) = (doc(), doc());
                ContrastivePair { first, second, y: (i % 2) as u8, src: [i, i] }
            })
            .collect();
        Batch::from_pairs(&pairs, vocab, InputEncoding::Counts).unwrap()
    }

    fn pair_arch(vocab: usize, hidden: Vec<usize>, bn: bool, dropout: bool) -> Architecture {
        Architecture::Pair { vocab, hidden, batch_norm: bn, dropout, encoding: InputEncoding::Counts }
    }

    fn bilinear_arch(vocab: usize, hidden: Vec<usize>, dim: usize, bn: bool, dropout: bool) -> Architecture {
        Architecture::Bilinear { vocab, hidden, dim, batch_norm: bn, dropout, encoding: InputEncoding::Counts }
    }

    #[test]
    fn zero_output_pair_model_gives_half() {
        let Learner::Pair(mut m) = pair_arch(4, vec![5], false, false).build::<f64>(1).unwrap() else { unreachable!() };
        m.net_mut().zero_output_layer();
        for d in [vec![0u32, 1], vec![3, 3, 2]] {
            let f = m.forward_pair(&Document::new(d.clone()), &Document::new(vec![2])).unwrap();
            assert_eq!(f, 0.5);
        }
        let b = random_batch(10, 4, 1);
        let l = m.loss(&b, Mode::Eval, &mut stream_rng(0, 0)).unwrap();
        assert!((l - 0.25).abs() < 1e-15);
    }

    #[test]
    fn pair_output_ignores_token_order_and_is_repeatable() {
        let m = match pair_arch(5, vec![8, 8], true, true).build::<f64>(2).unwrap() {
            Learner::Pair(m) => m,
            _ => unreachable!(),
        };
        let a = Document::new(vec![0, 4, 4, 1]);
        let b = Document::new(vec![4, 1, 0, 4]);
        let c = Document::new(vec![2, 3]);
        let f1 = m.forward_pair(&a, &c).unwrap();
        assert_eq!(f1, m.forward_pair(&b, &c).unwrap());
        assert_eq!(f1.to_bits(), m.forward_pair(&a, &c).unwrap().to_bits());
        assert!(f1 > 0.0 && f1 < 1.0);
    }

    #[test]
    fn zero_tower_gives_zero_score_and_log2_loss() {
        let Learner::Bilinear(mut m) = bilinear_arch(3, vec![4], 2, false, false).build::<f64>(3).unwrap() else { unreachable!() };
        m.towers_mut().1.zero_output_layer();
        let s = m.forward_bilinear(&Document::new(vec![0, 1]), &Document::new(vec![2])).unwrap();
        assert_eq!(s, 0.0);
        let b = random_batch(6, 3, 2);
        let l = m.loss(&b, Mode::Eval, &mut stream_rng(0, 0)).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn hand_set_linear_towers() {
        // no hidden layers: f1(x) = x W1 + b1, f2(x) = x W2 + b2, d = 1
        let spec = MlpSpec { input: 2, hidden: vec![], output: 1, batch_norm: false, dropout: false };
        let mut rng = stream_rng(0, 0);
        let mut t1 = Mlp::<f64>::new(spec.clone(), &mut rng).unwrap();
        let mut t2 = Mlp::<f64>::new(spec, &mut rng).unwrap();
        {
            let (w, b) = t1.layer_mut(0);
            *w = array![[1.0], [-2.0]];
            *b = array![0.5];
        }
        {
            let (w, b) = t2.layer_mut(0);
            *w = array![[3.0], [0.25]];
            *b = array![-1.0];
        }
        let m = BilinearModel::new(t1, t2, InputEncoding::Counts).unwrap();
        // x = (2 of word 0, 1 of word 1), x' = (0, 4)
        let s = m.forward_bilinear(&Document::new(vec![0, 1, 0]), &Document::new(vec![1, 1, 1, 1])).unwrap();
        let f1 = 2.0 * 1.0 + 1.0 * -2.0 + 0.5;
        let f2 = 4.0 * 0.25 - 1.0;
        assert_eq!(s, f1 * f2);
    }

    #[test]
    fn score_does_not_depend_on_other_rows() {
        let m: Learner<f64> = bilinear_arch(4, vec![6], 3, true, false).build(4).unwrap();
        let b = random_batch(5, 4, 4);
        let full = m.scores(b.first.view(), b.second.view()).unwrap();
        let mut changed = b.clone();
        changed.first.row_mut(3).fill(7.0);
        let again = m.scores(changed.first.view(), changed.second.view()).unwrap();
        assert_eq!(full[0], again[0]);
        assert_eq!(full[4], again[4]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cases = [
            (pair_arch(4, vec![6, 5], false, false), Mode::Train),
            (pair_arch(4, vec![6, 5, 4], true, true), Mode::Train),
            (pair_arch(3, vec![4], true, false), Mode::Eval),
            (bilinear_arch(4, vec![5, 5], 3, false, false), Mode::Train),
            (bilinear_arch(4, vec![5], 2, true, true), Mode::Train),
        ];
        for (i, (arch, mode)) in cases.iter().enumerate() {
            let m: Learner<f64> = arch.build(10 + i as u64).unwrap();
            let b = random_batch(7, arch_vocab(arch), i as u64);
            let r = gradient_check(&m, &b, *mode, 1e-5, 1e-5, 5, None).unwrap();
            assert!(r.max_rel_error < 1e-4, "case {i}: {r:?}");
        }
    }

    fn arch_vocab(a: &Architecture) -> usize {
        match a {
            Architecture::Pair { vocab, .. } | Architecture::Bilinear { vocab, .. } => *vocab,
        }
    }

    #[test]
    fn rmsprop_zero_gradient_is_noop() {
        let mut p = vec![1.5f64, -2.0];
        let mut st = OptState::<f64>::with_shapes(&[2], RmsPropConfig { weight_decay: 0.0, ..Default::default() });
        rmsprop_step(vec![ParamSlot { values: &mut p, decay: true }], &[vec![0.0, 0.0]], &mut st, 1e-4).unwrap();
        assert_eq!(p, vec![1.5, -2.0]);
    }

    #[test]
    fn rmsprop_scalar_trace() {
        let cfg = RmsPropConfig { lr: 1e-2, alpha: 0.9, eps: 1e-8, momentum: 0.5, weight_decay: 0.1, halve_lr_at: None };
        let mut st = OptState::<f64>::with_shapes(&[1], cfg);
        st.square_avg[0][0] = 0.04;
        st.momentum_buf[0][0] = 1.0;
        let mut p = vec![2.0];
        rmsprop_step(vec![ParamSlot { values: &mut p, decay: true }], &[vec![0.3]], &mut st, 1e-2).unwrap();
        // g = 0.3 + 0.1*2 = 0.5; v = 0.9*0.04 + 0.1*0.25 = 0.061
        let v: f64 = 0.061;
        let buf = 0.5 * 1.0 + 0.5 / (v.sqrt() + 1e-8);
        assert!((st.square_avg[0][0] - v).abs() < 1e-15);
        assert!((p[0] - (2.0 - 1e-2 * buf)).abs() < 1e-14);
    }

    #[test]
    fn lr_schedule_halves() {
        let c = RmsPropConfig::default();
        assert_eq!(c.lr_at_epoch(249), 1e-4);
        assert_eq!(c.lr_at_epoch(251), 5e-5);
    }

    fn toy_dataset(seed: u64) -> ContrastiveDataset {
        // two disjoint-vocabulary topics, four words each
        let mut rng = stream_rng(seed, 1);
        let docs: Vec<Document> = (0..200)
            .map(|i| {
                let off = if i % 2 == 0 { 0 } else { 4 };
                Document::new((0..8).map(|_| off + rng.random_range(0..4u32)).collect())
            })
            .collect();
        build_paired_permutation(&docs, SplitMode::RandomPartition, seed).unwrap()
    }

    #[test]
    fn epochs_zero_returns_initial_params() {
        let m: Learner<f64> = pair_arch(8, vec![8], false, false).build(1).unwrap();
        let mut data = StaticData(toy_dataset(1));
        let cfg = TrainConfig { epochs: 0, ..Default::default() };
        let out = train(m.clone(), &mut data, None, &cfg, 1, &mut |_, _, _| {}).unwrap();
        assert_eq!(out.model, m);
        assert!(out.trace.is_empty());
    }

    #[test]
    fn separable_toy_reaches_low_loss_deterministically() {
        let holdout = Batch::from_pairs(&toy_dataset(2).pairs, 8, InputEncoding::Counts).unwrap();
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 32,
            optimizer: RmsPropConfig { lr: 1e-3, ..Default::default() },
            ..Default::default()
        };
        let run = || {
            let m: Learner<f64> = pair_arch(8, vec![16, 16], false, false).build(3).unwrap();
            train(m, &mut StaticData(toy_dataset(1)), Some(&holdout), &cfg, 7, &mut |_, _, _| {}).unwrap()
        };
        let a = run();
        // Separable topics, uniform prior: f* = 2/3 on same-topic pairs and 0
        // otherwise, which carry 3/4 of the mass, so the Bayes loss is 1/6.
        let last = a.trace.last().unwrap().holdout_loss.unwrap();
        assert!(last < 1.0 / 6.0 + 0.02, "holdout loss {last}");
        assert_eq!(a.trace, run().trace);
    }

    #[test]
    fn full_batch_gd_decreases_loss() {
        let data = toy_dataset(4);
        let batch = Batch::from_pairs(&data.pairs, 8, InputEncoding::Counts).unwrap();
        let mut m: Learner<f64> = bilinear_arch(8, vec![8], 4, false, false).build(5).unwrap();
        let mut rng = stream_rng(0, 0);
        let mut prev = f64::INFINITY;
        for _ in 0..100 {
            let lg = m.loss_and_grad(&batch, Mode::Train, &mut rng).unwrap();
            assert!(lg.loss <= prev + 1e-15);
            prev = lg.loss;
            for (slot, g) in m.params_mut().into_iter().zip(&lg.grads) {
                for (p, gi) in slot.values.iter_mut().zip(g) {
                    *p -= 0.05 * gi;
                }
            }
        }
    }

    #[test]
    fn eval_mode_is_deterministic_with_dropout_and_bn() {
        let m: Learner<f64> = pair_arch(5, vec![6, 6], true, true).build(8).unwrap();
        let b = random_batch(9, 5, 8);
        let a1 = m.loss(&b, Mode::Eval, &mut stream_rng(1, 0)).unwrap();
        let a2 = m.loss(&b, Mode::Eval, &mut stream_rng(2, 0)).unwrap();
        assert_eq!(a1, a2);
        let t1 = m.loss(&b, Mode::Train, &mut stream_rng(1, 0)).unwrap();
        let t2 = m.loss(&b, Mode::Train, &mut stream_rng(2, 0)).unwrap();
        assert_ne!(t1, t2);
    }

    #[test]
    fn state_vector_round_trip() {
        let m: Learner<f32> = bilinear_arch(5, vec![4], 3, true, false).build(9).unwrap();
        let mut other: Learner<f32> = bilinear_arch(5, vec![4], 3, true, false).build(10).unwrap();
        assert_ne!(m, other);
        other.load_state_vector(&m.state_vector()).unwrap();
        assert_eq!(m, other);
    }

    #[test]
    fn divergence_aborts_with_trace() {
        let m: Learner<f64> = pair_arch(8, vec![8], false, false).build(1).unwrap();
        let cfg = TrainConfig { epochs: 20, divergence_factor: 0.0, divergence_patience: 5, ..Default::default() };
        match train(m, &mut StaticData(toy_dataset(1)), None, &cfg, 1, &mut |_, _, _| {}) {
            Err(LearnError::Diverged { epoch, trace, .. }) => {
                assert_eq!(epoch, 4);
                assert_eq!(trace.len(), 5);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
