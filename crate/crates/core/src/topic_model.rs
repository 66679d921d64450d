//! Generative topic model: topic-word distributions, document-level topic
//! priors, length laws, document sampling and half-splitting.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Gamma, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{stream_rng, Rng};
use crate::scalar::{log_sum_exp, Real};

/// Tolerance for "sums to one" checks on distributions in `f64`.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Sum-to-one tolerance for scalar type `T`; single precision cannot meet
/// [`SIMPLEX_TOL`].
pub fn simplex_tol<T: Real>() -> f64 {
    if T::epsilon().to_f64_lossy() > 1e-10 {
        1e-6
    } else {
        SIMPLEX_TOL
    }
}

fn sum_f64<T: Real>(v: &[T]) -> f64 {
    v.iter().map(|x| x.to_f64_lossy()).sum()
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("number of topics must be positive")]
    NoTopics,
    #[error("vocabulary size must be at least {min}, got {got}")]
    VocabTooSmall { min: usize, got: usize },
    #[error("dirichlet concentration must be positive, got {0}")]
    BadConcentration(f64),
    #[error("topic {topic}: word distribution is not a probability vector (sum {sum})")]
    BadTopicRow { topic: usize, sum: f64 },
    #[error("topic {topic} has {got} words, expected {expected}")]
    RowLength { topic: usize, got: usize, expected: usize },
    #[error("prior atom {atom} is not in the simplex over {num_topics} topics")]
    BadAtom { atom: usize, num_topics: usize },
    #[error("prior atom probabilities do not sum to one (sum {0})")]
    BadAtomProbs(f64),
    #[error("prior has no atoms")]
    EmptyPrior,
    #[error("document length law must never produce fewer than 2 tokens: {0}")]
    BadLength(String),
    #[error("token {token} is outside the vocabulary of size {vocab}")]
    TokenOutOfRange { token: u32, vocab: usize },
    #[error("document of length {0} cannot be split into two halves")]
    TooShortToSplit(usize),
    #[error("topic weights have length {got}, expected {expected}")]
    WeightLength { got: usize, expected: usize },
}

/// A document as a sequence of token ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Document {
    pub tokens: Vec<u32>,
}

impl Document {
    pub fn new(tokens: Vec<u32>) -> Self {
        Self { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token counts over a vocabulary of size `vocab`.
    pub fn counts(&self, vocab: usize) -> Vec<u32> {
        let mut c = vec![0u32; vocab];
        for &t in &self.tokens {
            c[t as usize] += 1;
        }
        c
    }

    /// Tokens sorted ascending: the canonical bag-of-words form.
    pub fn sorted(&self) -> Document {
        let mut tokens = self.tokens.clone();
        tokens.sort_unstable();
        Document { tokens }
    }
}

impl From<Vec<u32>> for Document {
    fn from(tokens: Vec<u32>) -> Self {
        Self { tokens }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitDocument {
    pub first_half: Document,
    pub second_half: Document,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// First `ceil(n/2)` tokens, then the rest.
    Contiguous,
    /// Shuffle, then split as `Contiguous`.
    RandomPartition,
}

/// Distribution over the topic-weight vector `w` of a document.
///
/// A pure-topic prior is a `FiniteSupport` whose atoms are basis vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PriorSpec<T> {
    FiniteSupport { atoms: Vec<Vec<T>>, probs: Vec<T> },
    SymmetricDirichlet { concentration: T },
}

impl<T: Real> PriorSpec<T> {
    /// Single-topic prior: `w = e_k` with probability `probs[k]`.
    pub fn pure_topic(probs: Vec<T>) -> Self {
        let k = probs.len();
        let atoms = (0..k)
            .map(|i| {
                let mut e = vec![T::zero(); k];
                e[i] = T::one();
                e
            })
            .collect();
        PriorSpec::FiniteSupport { atoms, probs }
    }

    pub fn uniform_pure_topic(num_topics: usize) -> Self {
        let p = T::one() / T::from_usize_lossy(num_topics.max(1));
        Self::pure_topic(vec![p; num_topics])
    }

    /// Atom index that is the basis vector `e_k`, for each atom, if every
    /// atom is a basis vector.
    pub fn pure_topic_indices(&self) -> Option<Vec<usize>> {
        match self {
            PriorSpec::FiniteSupport { atoms, .. } => atoms
                .iter()
                .map(|a| {
                    let ones: Vec<usize> =
                        (0..a.len()).filter(|&i| a[i] == T::one()).collect();
                    let zeros = a.iter().filter(|&&v| v == T::zero()).count();
                    (ones.len() == 1 && zeros + 1 == a.len()).then(|| ones[0])
                })
                .collect(),
            PriorSpec::SymmetricDirichlet { .. } => None,
        }
    }

    pub fn is_pure_topic(&self) -> bool {
        self.pure_topic_indices().is_some()
    }

    fn validate(&self, num_topics: usize) -> Result<(), ModelError> {
        match self {
            PriorSpec::FiniteSupport { atoms, probs } => {
                if atoms.is_empty() || atoms.len() != probs.len() {
                    return Err(ModelError::EmptyPrior);
                }
                for (j, a) in atoms.iter().enumerate() {
                    let ok = a.len() == num_topics
                        && a.iter().all(|&v| v >= T::zero() && v.is_finite())
                        && (sum_f64(a) - 1.0).abs() <= simplex_tol::<T>();
                    if !ok {
                        return Err(ModelError::BadAtom { atom: j, num_topics });
                    }
                }
                let s = sum_f64(probs);
                if probs.iter().any(|&p| p < T::zero() || !p.is_finite())
                    || (s - 1.0).abs() > simplex_tol::<T>()
                {
                    return Err(ModelError::BadAtomProbs(s));
                }
                Ok(())
            }
            PriorSpec::SymmetricDirichlet { concentration } => {
                let c = concentration.to_f64_lossy();
                if c > 0.0 {
                    Ok(())
                } else {
                    Err(ModelError::BadConcentration(c))
                }
            }
        }
    }
}

/// Document length law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum LengthSpec {
    Fixed { length: usize },
    /// Poisson, truncated to `n >= 2` by rejection.
    Poisson { mean: f64 },
}

impl LengthSpec {
    fn validate(&self) -> Result<(), ModelError> {
        match *self {
            LengthSpec::Fixed { length } if length < 2 => {
                Err(ModelError::BadLength(format!("fixed length {length}")))
            }
            LengthSpec::Poisson { mean } if !(mean > 0.0 && mean.is_finite()) => {
                Err(ModelError::BadLength(format!("poisson mean {mean}")))
            }
            _ => Ok(()),
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> usize {
        match *self {
            LengthSpec::Fixed { length } => length,
            LengthSpec::Poisson { mean } => {
                let dist = Poisson::new(mean).expect("validated poisson mean");
                loop {
                    let n: f64 = dist.sample(rng);
                    if n >= 2.0 {
                        return n as usize;
                    }
                }
            }
        }
    }
}

/// Topic model over `num_topics` topics and a vocabulary of `vocab_size`.
#[derive(Clone, Debug, PartialEq)]
pub struct TopicModel<T> {
    word_dists: Vec<Vec<T>>,
    log_word_dists: Vec<Vec<T>>,
    prior: PriorSpec<T>,
    length: LengthSpec,
}

impl<T: Real> TopicModel<T> {
    /// Validating constructor. Rows of `word_dists` are `O(.|k)`.
    pub fn new(
        word_dists: Vec<Vec<T>>,
        prior: PriorSpec<T>,
        length: LengthSpec,
    ) -> Result<Self, ModelError> {
        let k = word_dists.len();
        if k == 0 {
            return Err(ModelError::NoTopics);
        }
        let v = word_dists[0].len();
        if v == 0 {
            return Err(ModelError::VocabTooSmall { min: 1, got: 0 });
        }
        for (topic, row) in word_dists.iter().enumerate() {
            if row.len() != v {
                return Err(ModelError::RowLength { topic, got: row.len(), expected: v });
            }
            let sum = sum_f64(row);
            if row.iter().any(|&p| p < T::zero() || !p.is_finite())
                || (sum - 1.0).abs() > simplex_tol::<T>()
            {
                return Err(ModelError::BadTopicRow { topic, sum });
            }
        }
        prior.validate(k)?;
        length.validate()?;
        let log_word_dists = word_dists
            .iter()
            .map(|row| row.iter().map(|&p| p.ln()).collect())
            .collect();
        Ok(Self { word_dists, log_word_dists, prior, length })
    }

    pub fn num_topics(&self) -> usize {
        self.word_dists.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.word_dists[0].len()
    }

    pub fn word_dists(&self) -> &[Vec<T>] {
        &self.word_dists
    }

    /// `O(word | topic)`.
    pub fn word_prob(&self, topic: usize, word: u32) -> T {
        self.word_dists[topic][word as usize]
    }

    pub fn log_word_prob(&self, topic: usize, word: u32) -> T {
        self.log_word_dists[topic][word as usize]
    }

    pub fn prior(&self) -> &PriorSpec<T> {
        &self.prior
    }

    pub fn length(&self) -> LengthSpec {
        self.length
    }

    pub fn with_prior(self, prior: PriorSpec<T>) -> Result<Self, ModelError> {
        Self::new(self.word_dists, prior, self.length)
    }

    pub fn with_length(self, length: LengthSpec) -> Result<Self, ModelError> {
        Self::new(self.word_dists, self.prior, length)
    }

    pub fn check_document(&self, doc: &Document) -> Result<(), ModelError> {
        let vocab = self.vocab_size();
        match doc.tokens.iter().find(|&&t| t as usize >= vocab) {
            Some(&token) => Err(ModelError::TokenOutOfRange { token, vocab }),
            None => Ok(()),
        }
    }

    fn check_weights(&self, w: &[T]) -> Result<(), ModelError> {
        if w.len() != self.num_topics() {
            return Err(ModelError::WeightLength { got: w.len(), expected: self.num_topics() });
        }
        Ok(())
    }

    /// Draw the topic-weight vector of one document.
    pub fn sample_w(&self, rng: &mut Rng) -> Vec<T> {
        self.sample_w_indexed(rng).0
    }

    /// As [`sample_w`](Self::sample_w), also returning the atom index for
    /// finite-support priors (the generating topic under a pure-topic prior).
    pub fn sample_w_indexed(&self, rng: &mut Rng) -> (Vec<T>, Option<usize>) {
        match &self.prior {
            PriorSpec::FiniteSupport { atoms, probs } => {
                let j = if atoms.len() == 1 {
                    0
                } else {
                    let weights: Vec<f64> = probs.iter().map(|p| p.to_f64_lossy()).collect();
                    WeightedIndex::new(&weights).expect("validated prior").sample(rng)
                };
                (atoms[j].clone(), Some(j))
            }
            PriorSpec::SymmetricDirichlet { concentration } => {
                let w = sample_symmetric_dirichlet(
                    self.num_topics(),
                    concentration.to_f64_lossy(),
                    rng,
                );
                (w.into_iter().map(T::from_f64_lossy).collect(), None)
            }
        }
    }

    /// Draw `len` tokens iid from the mixture `sum_k w_k O(.|k)`.
    pub fn sample_tokens(&self, w: &[T], len: usize, rng: &mut Rng) -> Result<Document, ModelError> {
        self.check_weights(w)?;
        let wf: Vec<f64> = w.iter().map(|p| p.to_f64_lossy()).collect();
        let topic_dist = WeightedIndex::new(&wf).map_err(|_| ModelError::WeightLength {
            got: w.len(),
            expected: self.num_topics(),
        })?;
        let word_dists: Vec<Option<WeightedIndex<f64>>> = wf
            .iter()
            .enumerate()
            .map(|(k, &wk)| {
                (wk > 0.0).then(|| {
                    let row: Vec<f64> =
                        self.word_dists[k].iter().map(|p| p.to_f64_lossy()).collect();
                    WeightedIndex::new(&row).expect("validated topic row")
                })
            })
            .collect();
        let tokens = (0..len)
            .map(|_| {
                let z = topic_dist.sample(rng);
                word_dists[z].as_ref().expect("sampled topic has weight").sample(rng) as u32
            })
            .collect();
        Ok(Document { tokens })
    }

    /// Draw one document given `w`, with its length from the length law.
    pub fn sample_document(&self, w: &[T], rng: &mut Rng) -> Result<Document, ModelError> {
        let n = self.length.sample(rng);
        self.sample_tokens(w, n, rng)
    }

    /// `ln P(doc | w) = sum_i ln sum_k w_k O(x_i | k)`.
    pub fn doc_log_likelihood(&self, doc: &Document, w: &[T]) -> Result<T, ModelError> {
        self.check_document(doc)?;
        self.check_weights(w)?;
        let log_w: Vec<T> = w.iter().map(|&p| p.ln()).collect();
        let mut buf = vec![T::zero(); w.len()];
        let mut total = T::zero();
        for &x in &doc.tokens {
            for (k, b) in buf.iter_mut().enumerate() {
                *b = log_w[k] + self.log_word_dists[k][x as usize];
            }
            total = total + log_sum_exp(&buf);
            if total == T::neg_infinity() {
                break;
            }
        }
        Ok(total)
    }

    /// `ln P(doc | w = e_topic)`.
    pub fn doc_log_likelihood_topic(&self, doc: &Document, topic: usize) -> T {
        doc.tokens
            .iter()
            .map(|&x| self.log_word_dists[topic][x as usize])
            .sum()
    }
}

/// `ln P(doc | w)`; `-inf` for impossible documents.
pub fn doc_likelihood_given_w<T: Real>(
    model: &TopicModel<T>,
    doc: &Document,
    w: &[T],
) -> Result<T, ModelError> {
    model.doc_log_likelihood(doc, w)
}

/// Symmetric Dirichlet(`concentration`) draw over `dim` outcomes.
///
/// Gamma variates are generated in log-space (`G(a) = G(a+1) U^{1/a}`) so
/// that tiny concentrations do not underflow to all-zero rows. An infinite
/// concentration yields the uniform vector.
pub fn sample_symmetric_dirichlet(dim: usize, concentration: f64, rng: &mut Rng) -> Vec<f64> {
    if concentration.is_infinite() {
        return vec![1.0 / dim as f64; dim];
    }
    let gamma = Gamma::new(concentration + 1.0, 1.0).expect("positive concentration");
    let logs: Vec<f64> = (0..dim)
        .map(|_| {
            let g: f64 = gamma.sample(rng);
            let u: f64 = rng.random::<f64>();
            // u in [0,1); ln(0) would only shift one entry to -inf
            g.ln() + u.max(f64::MIN_POSITIVE).ln() / concentration
        })
        .collect();
    let norm = log_sum_exp(&logs);
    let mut row: Vec<f64> = logs.iter().map(|&l| (l - norm).exp()).collect();
    // re-normalise so the row sums to one within SIMPLEX_TOL
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|p| *p /= s);
    row
}

/// Topic model with `num_topics` rows drawn iid from a symmetric
/// Dirichlet(`dirichlet_alpha / num_topics`) over `vocab_size` words,
/// a uniform pure-topic prior and Poisson(30) lengths.
///
/// `dirichlet_alpha = +inf` gives uniform rows.
pub fn sample_topic_model<T: Real>(
    num_topics: usize,
    vocab_size: usize,
    dirichlet_alpha: f64,
    seed: u64,
) -> Result<TopicModel<T>, ModelError> {
    if num_topics == 0 {
        return Err(ModelError::NoTopics);
    }
    if vocab_size < 2 {
        return Err(ModelError::VocabTooSmall { min: 2, got: vocab_size });
    }
    if !(dirichlet_alpha > 0.0) {
        return Err(ModelError::BadConcentration(dirichlet_alpha));
    }
    let concentration = dirichlet_alpha / num_topics as f64;
    let rows: Vec<Vec<T>> = (0..num_topics)
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            let row = sample_symmetric_dirichlet(vocab_size, concentration, &mut rng);
            row.into_iter().map(T::from_f64_lossy).collect::<Vec<T>>()
        })
        .collect();
    TopicModel::new(
        rows,
        PriorSpec::uniform_pure_topic(num_topics),
        LengthSpec::Poisson { mean: 30.0 },
    )
}

/// Split into halves of sizes `ceil(n/2)` and `floor(n/2)`.
pub fn split_document(doc: &Document, mode: SplitMode, rng: &mut Rng) -> Result<SplitDocument, ModelError> {
    let n = doc.len();
    if n < 2 {
        return Err(ModelError::TooShortToSplit(n));
    }
    let mut tokens = doc.tokens.clone();
    if mode == SplitMode::RandomPartition {
        tokens.shuffle(rng);
    }
    let second = tokens.split_off(n.div_ceil(2));
    Ok(SplitDocument {
        first_half: Document { tokens },
        second_half: Document { tokens: second },
    })
}

/// A sampled corpus, with generating atom indices when the prior has
/// finite support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub true_topics: Option<Vec<usize>>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }
}

/// Sample `n` documents. Document `i` uses stream `i` of `seed`, so any
/// subset can be regenerated independently.
pub fn sample_corpus<T: Real>(model: &TopicModel<T>, n: usize, seed: u64) -> Corpus {
    let mut documents = Vec::with_capacity(n);
    let mut topics = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = stream_rng(seed, i as u64);
        let (w, atom) = model.sample_w_indexed(&mut rng);
        let doc = model.sample_document(&w, &mut rng).expect("w drawn from the model prior");
        documents.push(doc);
        topics.push(atom);
    }
    let true_topics = topics.into_iter().collect::<Option<Vec<usize>>>();
    Corpus { documents, true_topics }
}
