//! Downstream evaluation: ridge probes, MAP topic recovery, risk and bound
//! verification, topic separation, and learning curves.

use std::ops::Range;

use ndarray::{Array1, Array2, Axis};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contrastive_data::ContrastivePair;
use crate::embedding::{landmark_embed_matrix, Clamp, EmbedError, PairScorer};
use crate::linalg::{pseudo_inverse, ridge_solve, RANK_RTOL};
use crate::oracle::{eta_vector, f_star, Basis, LandmarkSet, OracleError};
use crate::rng::{derive_seed, stream_rng, tags};
use crate::scalar::Real;
use crate::topic_model::{Document, TopicModel};

/// z-value of the two-sided 95% normal interval.
pub const Z95: f64 = 1.96;
pub const CI_METHOD: &str = "mean +- 1.96 * sample_sd / sqrt(replicates)";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no examples")]
    Empty,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("singular system without ridge: rank {rank} < {dim}")]
    Singular { rank: usize, dim: usize },
    #[error("ridge penalty must be finite and >= 0, got {0}")]
    BadRidge(f64),
    #[error("label {label} outside {classes} classes")]
    BadLabel { label: usize, classes: usize },
    #[error("labeled pool of {pool} is smaller than n = {n}")]
    PoolTooSmall { pool: usize, n: usize },
    #[error("delta must lie in (0, 1), got {0}")]
    BadDelta(f64),
    #[error("need at least two topics")]
    TooFewTopics,
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// Affine map `x -> x W + b` fitted by ridge least squares. The intercept is
/// not penalised.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeModel<T> {
    /// `dim x targets`.
    pub weights: Array2<T>,
    pub bias: Array1<T>,
    pub ridge: f64,
    pub n_train: usize,
}

impl<T: Real> ProbeModel<T> {
    pub fn predict(&self, x: &Array2<T>) -> Array2<T> {
        x.dot(&self.weights) + &self.bias
    }

    /// Argmax of each prediction row, ties to the lowest index.
    pub fn predict_class(&self, x: &Array2<T>) -> Vec<usize> {
        self.predict(x).rows().into_iter().map(|r| argmax(r.iter().copied())).collect()
    }
}

/// Index of the largest value, ties to the lowest index. NaN never wins.
pub fn argmax<T: PartialOrd + Copy>(values: impl IntoIterator<Item = T>) -> usize {
    let mut best: Option<(usize, T)> = None;
    for (i, v) in values.into_iter().enumerate() {
        match best {
            Some((_, b)) if !(v > b) => {}
            _ if v.partial_cmp(&v).is_none() => {}
            _ => best = Some((i, v)),
        }
    }
    best.map_or(0, |(i, _)| i)
}

pub fn fit_linear_probe<T: Real>(x: &Array2<T>, targets: &Array2<T>, ridge: f64) -> Result<ProbeModel<T>, EvalError> {
    let (n, d) = x.dim();
    if n == 0 {
        return Err(EvalError::Empty);
    }
    if targets.nrows() != n {
        return Err(EvalError::Shape(format!("{n} inputs, {} targets", targets.nrows())));
    }
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(EvalError::BadRidge(ridge));
    }
    let xm = x.mean_axis(Axis(0)).expect("n > 0");
    let ym = targets.mean_axis(Axis(0)).expect("n > 0");
    let xc = x - &xm;
    let yc = targets - &ym;
    let weights = ridge_solve(&xc, &yc, ridge).map_err(|rank| EvalError::Singular { rank, dim: d })?;
    let bias = &ym - &xm.dot(&weights);
    Ok(ProbeModel { weights, bias, ridge, n_train: n })
}

pub fn one_hot<T: Real>(labels: &[usize], classes: usize) -> Result<Array2<T>, EvalError> {
    let mut out = Array2::zeros((labels.len(), classes));
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(EvalError::BadLabel { label: l, classes });
        }
        out[[i, l]] = T::one();
    }
    Ok(out)
}

/// One-vs-rest ridge regression on one-hot targets.
pub fn fit_classifier<T: Real>(x: &Array2<T>, labels: &[usize], classes: usize, ridge: f64) -> Result<ProbeModel<T>, EvalError> {
    fit_linear_probe(x, &one_hot(labels, classes)?, ridge)
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    predicted.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

/// Fraction of documents whose argmax over the topic block of the decoded
/// posterior equals the generating topic.
pub fn map_topic_recovery<T: Real>(decoded: &Array2<T>, topic_block: Range<usize>, true_topics: &[usize]) -> Result<f64, EvalError> {
    if decoded.nrows() != true_topics.len() {
        return Err(EvalError::Shape(format!("{} posteriors, {} topics", decoded.nrows(), true_topics.len())));
    }
    if topic_block.end > decoded.ncols() || topic_block.is_empty() {
        return Err(EvalError::Shape(format!("topic block {topic_block:?} in {} columns", decoded.ncols())));
    }
    let predicted: Vec<usize> = decoded
        .rows()
        .into_iter()
        .map(|r| argmax(r.iter().skip(topic_block.start).take(topic_block.len()).copied()))
        .collect();
    Ok(accuracy(&predicted, true_topics))
}

/// `eta(x)^T theta` for each document.
pub fn risk_targets<T: Real>(model: &TopicModel<T>, theta: &[T], basis: &Basis, docs: &[Document]) -> Result<Vec<T>, EvalError> {
    if theta.len() != basis.len() {
        return Err(EvalError::Shape(format!("theta of length {} for a basis of {}", theta.len(), basis.len())));
    }
    docs.iter()
        .map(|d| {
            let eta = eta_vector(model, d, basis)?;
            Ok(eta.iter().zip(theta).fold(T::zero(), |acc, (&e, &t)| acc + e * t))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub risk: f64,
    pub coefficients: Vec<f64>,
    pub n_fit: usize,
    pub n_eval: usize,
}

/// Weighted least squares `v = argmin sum_i w_i (t_i - phi_i^T v)^2` on the
/// fit sample (no intercept), then the weighted mean squared residual on
/// the evaluation sample. `None` weights are uniform.
pub fn fit_risk<T: Real>(
    phi_fit: &Array2<T>,
    target_fit: &[T],
    weights_fit: Option<&[f64]>,
    phi_eval: &Array2<T>,
    target_eval: &[T],
    weights_eval: Option<&[f64]>,
) -> Result<RiskEstimate, EvalError> {
    let (n, d) = phi_fit.dim();
    if n == 0 || phi_eval.nrows() == 0 {
        return Err(EvalError::Empty);
    }
    if target_fit.len() != n || target_eval.len() != phi_eval.nrows() || phi_eval.ncols() != d {
        return Err(EvalError::Shape("risk samples disagree in size".into()));
    }
    let w = |ws: Option<&[f64]>, i: usize| ws.map_or(1.0, |w| w[i]);
    let a = Array2::from_shape_fn((n, d), |(i, j)| phi_fit[[i, j]].to_f64_lossy() * w(weights_fit, i).sqrt());
    let b = Array1::from_shape_fn(n, |i| target_fit[i].to_f64_lossy() * w(weights_fit, i).sqrt());
    let v = pseudo_inverse(&a, RANK_RTOL).pinv.dot(&b);
    let (mut num, mut den) = (0.0, 0.0);
    for (i, row) in phi_eval.rows().into_iter().enumerate() {
        let pred: f64 = row.iter().zip(v.iter()).map(|(p, c)| p.to_f64_lossy() * c).sum();
        let r = target_eval[i].to_f64_lossy() - pred;
        let wi = w(weights_eval, i);
        num += wi * r * r;
        den += wi;
    }
    Ok(RiskEstimate { risk: num / den, coefficients: v.to_vec(), n_fit: n, n_eval: phi_eval.nrows() })
}

/// `R(phi) = min_v E (eta(x)^T theta - phi(x)^T v)^2`, with `v` fitted on
/// `fit_docs` and the residual measured on `eval_docs`.
pub fn estimate_risk<T, F>(
    model: &TopicModel<T>,
    embed: F,
    theta: &[T],
    basis: &Basis,
    fit_docs: &[Document],
    eval_docs: &[Document],
) -> Result<RiskEstimate, EvalError>
where
    T: Real,
    F: Fn(&[Document]) -> Result<Array2<T>, EvalError>,
{
    let phi_fit = embed(fit_docs)?;
    let phi_eval = embed(eval_docs)?;
    let t_fit = risk_targets(model, theta, basis, fit_docs)?;
    let t_eval = risk_targets(model, theta, basis, eval_docs)?;
    fit_risk(&phi_fit, &t_fit, None, &phi_eval, &t_eval, None)
}

/// Right-hand side of the error bound,
/// `|theta|^2 / (sigma_min^2 (1 - f_max)^4) * (2 eps + sqrt(2 ln(2/delta) / M))`.
pub fn error_bound(theta_norm: f64, sigma_min: f64, f_max: f64, epsilon: f64, m: usize, delta: f64) -> f64 {
    let slack = (2.0 * (2.0 / delta).ln() / m as f64).sqrt();
    theta_norm.powi(2) / (sigma_min.powi(2) * (1.0 - f_max).powi(4)) * (2.0 * epsilon + slack)
}

/// Every ingredient of the bound and both sides of the inequality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub epsilon_hat: f64,
    pub epsilon_pairs: usize,
    /// `s_min(L) / sqrt(M)`.
    pub sigma_min: f64,
    pub f_max: f64,
    pub theta_norm: f64,
    pub m: usize,
    pub delta: f64,
    pub bound: f64,
    pub risk: f64,
    pub holds: bool,
    /// Ingredients that could not be measured or assumptions seen to fail.
    pub notes: Vec<String>,
}

/// Samples used by [`verify_error_bound`].
#[derive(Clone, Copy, Debug)]
pub struct BoundSamples<'a> {
    /// Draws from the contrastive distribution for the Monte-Carlo `eps`.
    pub contrastive: &'a [ContrastivePair],
    pub fit_docs: &'a [Document],
    pub eval_docs: &'a [Document],
}

/// Measure `eps` (clamped predictor against the oracle `f*`), `sigma_min`
/// from the realised landmark matrix, and `R(phi)` for the clamped landmark
/// embedding, then compare against the bound.
pub fn verify_error_bound<T: Real, S: PairScorer<T> + ?Sized>(
    model: &TopicModel<T>,
    scorer: &S,
    landmarks: &LandmarkSet<T>,
    theta: &[T],
    delta: f64,
    clamp: Clamp,
    samples: BoundSamples<'_>,
) -> Result<BoundReport, EvalError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(EvalError::BadDelta(delta));
    }
    if samples.contrastive.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut notes = Vec::new();
    let firsts: Vec<Document> = samples.contrastive.iter().map(|p| p.first.clone()).collect();
    let seconds: Vec<Document> = samples.contrastive.iter().map(|p| p.second.clone()).collect();
    let f_hat = scorer.pair_probs(&firsts, &seconds)?;
    let lo = T::from_f64_lossy(clamp.floor);
    let hi = T::from_f64_lossy(clamp.f_max);
    let mut sq = 0.0;
    for ((a, b), fh) in firsts.iter().zip(&seconds).zip(&f_hat) {
        let fs = f_star(model, a, b)?;
        let fc = fh.max(lo).min(hi);
        sq += (fc - fs).to_f64_lossy().powi(2);
    }
    let epsilon_hat = sq / firsts.len() as f64;

    let m = landmarks.len();
    let sigma_min = landmarks.min_singular() / (m as f64).sqrt();
    if !landmarks.has_full_row_rank() {
        notes.push(format!("landmark matrix has rank {} < {}", landmarks.rank(), landmarks.basis().len()));
    }
    let theta_norm = theta.iter().map(|t| t.to_f64_lossy().powi(2)).sum::<f64>().sqrt();
    let bound = if sigma_min > 0.0 {
        error_bound(theta_norm, sigma_min, clamp.f_max, epsilon_hat, m, delta)
    } else {
        notes.push("sigma_min is zero; bound is infinite".into());
        f64::INFINITY
    };

    let docs = landmarks.landmarks();
    let phi_fit = landmark_embed_matrix(scorer, docs, samples.fit_docs, clamp)?;
    let phi_eval = landmark_embed_matrix(scorer, docs, samples.eval_docs, clamp)?;
    let t_fit = risk_targets(model, theta, landmarks.basis(), samples.fit_docs)?;
    let t_eval = risk_targets(model, theta, landmarks.basis(), samples.eval_docs)?;
    let risk = fit_risk(&phi_fit, &t_fit, None, &phi_eval, &t_eval, None)?.risk;

    let f_star_max = samples
        .eval_docs
        .iter()
        .flat_map(|x| docs.iter().map(move |l| (x, l)))
        .map(|(x, l)| f_star(model, x, l).map(|v| v.to_f64_lossy()))
        .try_fold(0.0f64, |acc, v| v.map(|v| acc.max(v)))?;
    if f_star_max > clamp.f_max + 1e-12 {
        notes.push(format!("f* reaches {f_star_max} above f_max = {}", clamp.f_max));
    }
    Ok(BoundReport {
        epsilon_hat,
        epsilon_pairs: firsts.len(),
        sigma_min,
        f_max: clamp.f_max,
        theta_norm,
        m,
        delta,
        bound,
        risk,
        holds: risk <= bound,
        notes,
    })
}

/// Mean over unordered topic pairs of `(1/2) |O(.|i) - O(.|j)|_1`.
pub fn topic_tv_separation<T: Real>(model: &TopicModel<T>) -> Result<f64, EvalError> {
    let rows = model.word_dists();
    let k = rows.len();
    if k < 2 {
        return Err(EvalError::TooFewTopics);
    }
    let mut total = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            let l1: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a.to_f64_lossy() - b.to_f64_lossy()).abs()).sum();
            total += 0.5 * l1;
        }
    }
    Ok(total / (k * (k - 1) / 2) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub n_labeled: usize,
    pub replicates: usize,
    pub seed: u64,
    pub mean_accuracy: f64,
    /// `None` with fewer than two replicates.
    pub ci_half_width: Option<f64>,
    pub ci_method: String,
    pub accuracies: Vec<f64>,
}

/// Mean and normal-approximation 95% half-width.
pub fn mean_ci(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    if values.iter().all(|&v| v == values[0]) {
        return (values[0], Some(0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, Some(Z95 * var.sqrt() / (n as f64).sqrt()))
}

/// Labeled pool and held-out test set for [`learning_curve`].
#[derive(Clone, Copy, Debug)]
pub struct LabeledSplit<'a, T> {
    pub pool: &'a Array2<T>,
    pub pool_labels: &'a [usize],
    pub test: &'a Array2<T>,
    pub test_labels: &'a [usize],
    pub classes: usize,
}

/// For each `n`, fit a classifier on `n` random pool examples per replicate
/// and report test accuracy with a confidence interval.
pub fn learning_curve<T: Real>(
    data: LabeledSplit<'_, T>,
    n_grid: &[usize],
    replicates: usize,
    ridge: f64,
    seed: u64,
) -> Result<Vec<EvalReport>, EvalError> {
    let pool = data.pool.nrows();
    if data.pool_labels.len() != pool || data.test_labels.len() != data.test.nrows() {
        return Err(EvalError::Shape("labels do not match embeddings".into()));
    }
    let base = derive_seed(seed, tags::PROBE);
    let mut out = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        if n > pool {
            return Err(EvalError::PoolTooSmall { pool, n });
        }
        if n == 0 {
            return Err(EvalError::Empty);
        }
        let mut accs = Vec::with_capacity(replicates);
        for r in 0..replicates {
            let mut rng = stream_rng(derive_seed(base, n as u64), r as u64);
            let mut idx = sample(&mut rng, pool, n).into_vec();
            idx.sort_unstable();
            let x = data.pool.select(Axis(0), &idx);
            let y: Vec<usize> = idx.iter().map(|&i| data.pool_labels[i]).collect();
            let probe = fit_classifier(&x, &y, data.classes, ridge)?;
            accs.push(accuracy(&probe.predict_class(data.test), data.test_labels));
        }
        let (mean, ci) = mean_ci(&accs);
        out.push(EvalReport {
            task: "linear-probe".into(),
            n_labeled: n,
            replicates,
            seed,
            mean_accuracy: mean,
            ci_half_width: ci,
            ci_method: CI_METHOD.into(),
            accuracies: accs,
        });
    }
    Ok(out)
}

/// Ranks from 1, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation; NaN when either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "paired samples");
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
