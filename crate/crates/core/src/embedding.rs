//! Document representations: landmark odds embeddings from a trained scorer,
//! tower embeddings from a bilinear model, and the exact oracle embedding.

use ndarray::{concatenate, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learner::{encode_documents, BilinearModel, ContrastiveModel, LearnError, Learner, PairModel};
use crate::oracle::{g_star_direct, OracleError};
use crate::scalar::Real;
use crate::topic_model::{Document, TopicModel};

/// Lower clamp on predicted probabilities before the odds map.
pub const CLAMP_FLOOR: f64 = 1e-6;
/// Upper clamp when the model's `p_min` is unknown.
pub const DEFAULT_F_MAX: f64 = 1.0 - 1e-4;

/// Rows per forward pass when scoring document-landmark pairs.
const PAIR_ROWS_PER_PASS: usize = 8192;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("clamp needs 0 <= floor < f_max < 1, got [{floor}, {f_max}]")]
    BadClamp { floor: f64, f_max: f64 },
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingMode {
    Landmark,
    Tower,
    Oracle,
}

/// Representation of one document.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding<T> {
    pub doc_id: usize,
    pub values: Vec<T>,
    pub mode: EmbeddingMode,
    /// Clamp ceiling, for landmark embeddings.
    pub f_max: Option<f64>,
}

/// `f_max = 1 / (1 + p_min)`, which bounds `f*` when `p_min` lower-bounds
/// the landmark marginals.
pub fn f_max_from_p_min(p_min: f64) -> f64 {
    1.0 / (1.0 + p_min)
}

/// Interval predicted probabilities are clamped to before the odds map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clamp {
    pub floor: f64,
    pub f_max: f64,
}

impl Clamp {
    /// `[CLAMP_FLOOR, f_max]`.
    pub fn new(f_max: f64) -> Self {
        Self { floor: CLAMP_FLOOR, f_max }
    }

    fn validate(&self) -> Result<(), EmbedError> {
        if self.f_max > 0.0 && self.f_max < 1.0 && (0.0..self.f_max).contains(&self.floor) {
            Ok(())
        } else {
            Err(EmbedError::BadClamp { floor: self.floor, f_max: self.f_max })
        }
    }

    /// `t / (1 - t)` after clamping `t`.
    pub fn odds<T: Real>(&self, t: T) -> T {
        let lo = T::from_f64_lossy(self.floor);
        let hi = T::from_f64_lossy(self.f_max);
        let c = if t.is_nan() { lo } else { t.max(lo).min(hi) };
        c / (T::one() - c)
    }
}

/// `t / (1 - t)` after clamping `t` to `[CLAMP_FLOOR, f_max]`.
pub fn clamped_odds<T: Real>(t: T, f_max: f64) -> T {
    Clamp::new(f_max).odds(t)
}

/// Anything that predicts `P(y = 1 | x, l)` for documents against landmarks.
pub trait PairScorer<T: Real> {
    /// `docs.len() x landmarks.len()` matrix of predicted probabilities.
    fn prob_matrix(&self, docs: &[Document], landmarks: &[Document]) -> Result<Array2<T>, EmbedError>;

    /// Predicted probability for each aligned pair `(first[i], second[i])`.
    fn pair_probs(&self, first: &[Document], second: &[Document]) -> Result<Vec<T>, EmbedError> {
        first
            .iter()
            .zip(second)
            .map(|(a, b)| Ok(self.prob_matrix(std::slice::from_ref(a), std::slice::from_ref(b))?[[0, 0]]))
            .collect()
    }
}

fn model_pair_probs<T: Real, M: ContrastiveModel<T>>(m: &M, first: &[Document], second: &[Document]) -> Result<Vec<T>, EmbedError> {
    let (v, enc) = (m.vocab_size(), m.encoding());
    let a = encode_documents::<T>(first, v, enc)?;
    let b = encode_documents::<T>(second, v, enc)?;
    Ok(m.probs(a.view(), b.view())?.to_vec())
}

impl<T: Real> PairScorer<T> for PairModel<T> {
    fn prob_matrix(&self, docs: &[Document], landmarks: &[Document]) -> Result<Array2<T>, EmbedError> {
        let (v, enc) = (self.vocab_size(), self.encoding());
        let x = encode_documents::<T>(docs, v, enc)?;
        let l = encode_documents::<T>(landmarks, v, enc)?;
        let m = landmarks.len();
        let mut out = Array2::zeros((docs.len(), m));
        if m == 0 {
            return Ok(out);
        }
        let docs_per_pass = (PAIR_ROWS_PER_PASS / m).max(1);
        for start in (0..docs.len()).step_by(docs_per_pass) {
            let end = (start + docs_per_pass).min(docs.len());
            let rows = (end - start) * m;
            let mut first = Array2::zeros((rows, v));
            let mut second = Array2::zeros((rows, v));
            for i in start..end {
                for j in 0..m {
                    let r = (i - start) * m + j;
                    first.row_mut(r).assign(&x.row(i));
                    second.row_mut(r).assign(&l.row(j));
                }
            }
            let p = self.probs(first.view(), second.view())?;
            for i in start..end {
                for j in 0..m {
                    out[[i, j]] = p[(i - start) * m + j];
                }
            }
        }
        Ok(out)
    }

    fn pair_probs(&self, first: &[Document], second: &[Document]) -> Result<Vec<T>, EmbedError> {
        model_pair_probs(self, first, second)
    }
}

impl<T: Real> PairScorer<T> for BilinearModel<T> {
    fn prob_matrix(&self, docs: &[Document], landmarks: &[Document]) -> Result<Array2<T>, EmbedError> {
        let (v, enc) = (self.vocab_size(), self.encoding());
        let f1 = self.embed_first(encode_documents::<T>(docs, v, enc)?.view())?;
        let f2 = self.embed_second(encode_documents::<T>(landmarks, v, enc)?.view())?;
        Ok(f1.dot(&f2.t()).mapv(crate::scalar::sigmoid))
    }

    fn pair_probs(&self, first: &[Document], second: &[Document]) -> Result<Vec<T>, EmbedError> {
        model_pair_probs(self, first, second)
    }
}

impl<T: Real> PairScorer<T> for Learner<T> {
    fn prob_matrix(&self, docs: &[Document], landmarks: &[Document]) -> Result<Array2<T>, EmbedError> {
        match self {
            Learner::Pair(m) => m.prob_matrix(docs, landmarks),
            Learner::Bilinear(m) => m.prob_matrix(docs, landmarks),
        }
    }

    fn pair_probs(&self, first: &[Document], second: &[Document]) -> Result<Vec<T>, EmbedError> {
        model_pair_probs(self, first, second)
    }
}

/// The Bayes-optimal predictor `f* = g* / (1 + g*)` of a known model.
#[derive(Clone, Copy, Debug)]
pub struct OracleScorer<'a, T> {
    pub model: &'a TopicModel<T>,
}

impl<T: Real> PairScorer<T> for OracleScorer<'_, T> {
    fn prob_matrix(&self, docs: &[Document], landmarks: &[Document]) -> Result<Array2<T>, EmbedError> {
        let mut out = Array2::zeros((docs.len(), landmarks.len()));
        for (i, x) in docs.iter().enumerate() {
            for (j, l) in landmarks.iter().enumerate() {
                let g = g_star_direct(self.model, x, l)?;
                out[[i, j]] = g / (T::one() + g);
            }
        }
        Ok(out)
    }
}

/// Clamped odds of the scorer at each landmark, one row per document.
pub fn landmark_embed_matrix<T: Real, S: PairScorer<T> + ?Sized>(
    scorer: &S,
    landmarks: &[Document],
    docs: &[Document],
    clamp: Clamp,
) -> Result<Array2<T>, EmbedError> {
    clamp.validate()?;
    Ok(scorer.prob_matrix(docs, landmarks)?.mapv(|t| clamp.odds(t)))
}

/// Landmark embedding of a single document.
pub fn landmark_embed<T: Real, S: PairScorer<T> + ?Sized>(
    scorer: &S,
    landmarks: &[Document],
    doc: &Document,
    clamp: Clamp,
) -> Result<Embedding<T>, EmbedError> {
    let m = landmark_embed_matrix(scorer, landmarks, std::slice::from_ref(doc), clamp)?;
    Ok(Embedding { doc_id: 0, values: m.row(0).to_vec(), mode: EmbeddingMode::Landmark, f_max: Some(clamp.f_max) })
}

/// `f1(x)` for each document, one row per document.
pub fn tower_embed_matrix<T: Real>(model: &BilinearModel<T>, docs: &[Document]) -> Result<Array2<T>, EmbedError> {
    let x = encode_documents::<T>(docs, model.vocab_size(), model.encoding())?;
    Ok(model.embed_first(x.view())?)
}

pub fn tower_embed<T: Real>(model: &BilinearModel<T>, doc: &Document) -> Result<Embedding<T>, EmbedError> {
    let m = tower_embed_matrix(model, std::slice::from_ref(doc))?;
    Ok(Embedding { doc_id: 0, values: m.row(0).to_vec(), mode: EmbeddingMode::Tower, f_max: None })
}

/// Exact `g*(x, l_i)` at each landmark, from the joint and product
/// likelihoods.
pub fn oracle_embed<T: Real>(model: &TopicModel<T>, landmarks: &[Document], doc: &Document) -> Result<Embedding<T>, EmbedError> {
    let values = landmarks
        .iter()
        .map(|l| g_star_direct(model, doc, l))
        .collect::<Result<Vec<T>, _>>()?;
    Ok(Embedding { doc_id: 0, values, mode: EmbeddingMode::Oracle, f_max: None })
}

pub fn oracle_embed_matrix<T: Real>(model: &TopicModel<T>, landmarks: &[Document], docs: &[Document]) -> Result<Array2<T>, EmbedError> {
    let rows = docs
        .iter()
        .map(|d| Ok(Array1::from(oracle_embed(model, landmarks, d)?.values).insert_axis(Axis(0))))
        .collect::<Result<Vec<_>, EmbedError>>()?;
    if rows.is_empty() {
        return Ok(Array2::zeros((0, landmarks.len())));
    }
    let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
    Ok(concatenate(Axis(0), &views).expect("rows share the landmark count"))
}

/// Attach document ids to the rows of an embedding matrix.
pub fn rows_to_embeddings<T: Real>(m: &Array2<T>, mode: EmbeddingMode, f_max: Option<f64>) -> Vec<Embedding<T>> {
    m.rows()
        .into_iter()
        .enumerate()
        .map(|(doc_id, r)| Embedding { doc_id, values: r.to_vec(), mode, f_max })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::{Architecture, InputEncoding};
    use crate::oracle::{eta_vector, Basis, LandmarkSet, LandmarkStrategy};
    use crate::topic_model::{LengthSpec, PriorSpec};

    fn deterministic_two_topic() -> TopicModel<f64> {
        TopicModel::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            PriorSpec::uniform_pure_topic(2),
            LengthSpec::Fixed { length: 2 },
        )
        .unwrap()
    }

    fn doc(t: &[u32]) -> Document {
        Document::new(t.to_vec())
    }

    #[test]
    fn odds_map_and_clamp() {
        assert_eq!(clamped_odds(0.5f64, DEFAULT_F_MAX), 1.0);
        assert!((clamped_odds(0.99f64, 0.99) - 99.0).abs() < 1e-9);
        assert!((clamped_odds(0.999f64, 0.99) - 99.0).abs() < 1e-9);
        assert!(clamped_odds(0.0f64, 0.99) > 0.0);
        assert_eq!(f_max_from_p_min(0.25), 0.8);
    }

    struct Constant(f64);
    impl PairScorer<f64> for Constant {
        fn prob_matrix(&self, docs: &[Document], landmarks: &[Document]) -> Result<Array2<f64>, EmbedError> {
            Ok(Array2::from_elem((docs.len(), landmarks.len()), self.0))
        }
    }

    #[test]
    fn landmark_embed_half_and_ceiling() {
        let ls = [doc(&[0]), doc(&[1])];
        let e = landmark_embed(&Constant(0.5), &ls, &doc(&[0]), Clamp::new(0.99)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0]);
        let e = landmark_embed(&Constant(0.99), &ls, &doc(&[0]), Clamp::new(0.99)).unwrap();
        assert!((e.values[0] - 99.0).abs() < 1e-9);
        assert!(landmark_embed(&Constant(0.5), &ls, &doc(&[0]), Clamp::new(1.0)).is_err());
    }

    #[test]
    fn oracle_scorer_reproduces_oracle_embedding() {
        let m = deterministic_two_topic();
        let ls = [doc(&[0]), doc(&[1]), doc(&[0, 0])];
        for x in [doc(&[0]), doc(&[1])] {
            // f* is 0 off-topic here, so the floor must be off for equality
            let clamp = Clamp { floor: 0.0, f_max: 0.99 };
            let via_f = landmark_embed(&OracleScorer { model: &m }, &ls, &x, clamp).unwrap();
            let exact = oracle_embed(&m, &ls, &x).unwrap();
            for (a, b) in via_f.values.iter().zip(&exact.values) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn oracle_embed_hand_values() {
        let m = deterministic_two_topic();
        let e = oracle_embed(&m, &[doc(&[0]), doc(&[1])], &doc(&[0])).unwrap();
        assert_eq!(e.values.len(), 2);
        assert!((e.values[0] - 2.0).abs() < 1e-12 && e.values[1].abs() < 1e-12);
    }

    #[test]
    fn single_topic_oracle_is_all_ones() {
        let m = TopicModel::<f64>::new(vec![vec![0.2, 0.3, 0.5]], PriorSpec::uniform_pure_topic(1), LengthSpec::Fixed { length: 4 }).unwrap();
        let e = oracle_embed(&m, &[doc(&[0, 2]), doc(&[1, 1])], &doc(&[2, 0])).unwrap();
        assert!(e.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn oracle_embed_equals_l_transpose_eta() {
        let m = TopicModel::<f64>::new(
            vec![vec![0.5, 0.3, 0.2], vec![0.1, 0.1, 0.8], vec![0.3, 0.4, 0.3]],
            PriorSpec::pure_topic(vec![0.2, 0.5, 0.3]),
            LengthSpec::Fixed { length: 4 },
        )
        .unwrap();
        let ls = vec![doc(&[0, 1]), doc(&[2, 2]), doc(&[1, 0]), doc(&[2, 1]), doc(&[0, 0])];
        let set = LandmarkSet::new(&m, ls.clone(), Basis::SingleTopic { num_topics: 3 }, LandmarkStrategy::UserSupplied).unwrap();
        for x in [doc(&[0, 2]), doc(&[1, 1]), doc(&[2, 0])] {
            let eta = eta_vector(&m, &x, set.basis()).unwrap();
            let lt_eta = set.matrix().t().dot(&Array1::from(eta));
            let e = oracle_embed(&m, &ls, &x).unwrap();
            for (a, b) in e.values.iter().zip(lt_eta.iter()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn tower_embeddings() {
        let arch = Architecture::Bilinear { vocab: 4, hidden: vec![6], dim: 3, batch_norm: false, dropout: false, encoding: InputEncoding::Counts };
        let Learner::Bilinear(mut m) = arch.build::<f64>(1).unwrap() else { unreachable!() };
        let a = tower_embed(&m, &doc(&[0, 1, 1])).unwrap();
        let b = tower_embed(&m, &doc(&[1, 0, 1])).unwrap();
        assert_eq!(a.values, b.values);
        m.towers_mut().0.zero_output_layer();
        assert!(tower_embed(&m, &doc(&[2])).unwrap().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batched_scorers_match_rowwise_and_permute_with_landmarks() {
        let docs = vec![doc(&[0, 1]), doc(&[2, 3, 3]), doc(&[1])];
        let ls = vec![doc(&[3]), doc(&[0, 0]), doc(&[2, 1])];
        let perm = [2usize, 0, 1];
        let ls_perm: Vec<Document> = perm.iter().map(|&i| ls[i].clone()).collect();
        for arch in [
            Architecture::Pair { vocab: 4, hidden: vec![5], batch_norm: true, dropout: true, encoding: InputEncoding::Counts },
            Architecture::Bilinear { vocab: 4, hidden: vec![5], dim: 2, batch_norm: false, dropout: false, encoding: InputEncoding::LengthNormalized },
        ] {
            let m: Learner<f64> = arch.build(2).unwrap();
            let full = landmark_embed_matrix(&m, &ls, &docs, Clamp::new(DEFAULT_F_MAX)).unwrap();
            let permuted = landmark_embed_matrix(&m, &ls_perm, &docs, Clamp::new(DEFAULT_F_MAX)).unwrap();
            for (i, d) in docs.iter().enumerate() {
                let single = landmark_embed(&m, &ls, d, Clamp::new(DEFAULT_F_MAX)).unwrap();
                for j in 0..ls.len() {
                    assert!((single.values[j] - full[[i, j]]).abs() < 1e-12);
                    assert_eq!(permuted[[i, j]], full[[i, perm[j]]]);
                }
            }
        }
    }
}
