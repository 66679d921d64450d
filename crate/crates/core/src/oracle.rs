//! Exact analytic quantities of the topic model: monomial and likelihood
//! polynomial vectors, posterior moments, marginals, the Bayes density
//! ratio `g*`, landmark matrices and linear decoding.
//!
//! Half-document lengths are treated as fixed: every probability here is
//! conditional on the document length, so length factors cancel in `g*`.

use std::collections::HashMap;
use std::ops::Range;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, PseudoInverse, RANK_RTOL};
use crate::rng::Rng;
use crate::scalar::{log_sum_exp, Real};
use crate::topic_model::{Document, ModelError, PriorSpec, TopicModel};

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("symmetric Dirichlet priors have no closed-form posterior")]
    ContinuousPrior,
    #[error("the single-topic basis requires a prior supported on basis vectors")]
    NotPureTopic,
    #[error("document of length {len} exceeds the basis degree {max_degree}")]
    DocumentTooLong { len: usize, max_degree: usize },
    #[error("document has zero probability under the model")]
    ImpossibleDocument,
    #[error("g* is undefined: the second-half document has zero marginal probability")]
    UndefinedGStar,
    #[error("topics without an anchor word: {0:?}")]
    MissingAnchors(Vec<usize>),
    #[error("landmark {0} has zero marginal probability")]
    ZeroMarginalLandmark(usize),
    #[error("landmark matrix has rank {rank}, full row rank needs {needed}")]
    RankDeficient { rank: usize, needed: usize },
    #[error("vector has length {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("basis is over {basis} topics, model has {model}")]
    TopicCountMismatch { basis: usize, model: usize },
}

/// All exponent vectors `alpha` in `Z_+^K` with `|alpha| <= max_degree`, in
/// graded lexicographic order: by degree, then descending lexicographic
/// within a degree (so `(1,0)` precedes `(0,1)`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MonomialBasis {
    num_topics: usize,
    max_degree: usize,
    exponents: Vec<Vec<u32>>,
    lookup: HashMap<Vec<u32>, usize>,
    degree_start: Vec<usize>,
    // parents[j][k] = index of exponents[j] - e_k, when that is non-negative
    parents: Vec<Vec<Option<usize>>>,
}

fn push_compositions(k: usize, remaining: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if prefix.len() + 1 == k {
        prefix.push(remaining);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=remaining).rev() {
        prefix.push(first);
        push_compositions(k, remaining - first, prefix, out);
        prefix.pop();
    }
}

/// `sum_{m=0}^{d} C(K+m-1, m) = C(K+d, d)`.
pub fn basis_size(num_topics: usize, max_degree: usize) -> usize {
    let mut c: u128 = 1;
    for i in 1..=max_degree as u128 {
        c = c * (num_topics as u128 + i) / i;
    }
    c as usize
}

impl MonomialBasis {
    pub fn new(num_topics: usize, max_degree: usize) -> Self {
        assert!(num_topics >= 1, "basis needs at least one topic");
        let mut exponents = Vec::with_capacity(basis_size(num_topics, max_degree));
        let mut degree_start = Vec::with_capacity(max_degree + 2);
        for d in 0..=max_degree {
            degree_start.push(exponents.len());
            push_compositions(num_topics, d as u32, &mut Vec::new(), &mut exponents);
        }
        degree_start.push(exponents.len());
        let lookup: HashMap<Vec<u32>, usize> =
            exponents.iter().enumerate().map(|(i, a)| (a.clone(), i)).collect();
        let parents = exponents
            .iter()
            .map(|a| {
                (0..num_topics)
                    .map(|k| {
                        (a[k] > 0).then(|| {
                            let mut p = a.clone();
                            p[k] -= 1;
                            lookup[&p]
                        })
                    })
                    .collect()
            })
            .collect();
        Self { num_topics, max_degree, exponents, lookup, degree_start, parents }
    }

    pub fn num_topics(&self) -> usize {
        self.num_topics
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponent(&self, index: usize) -> &[u32] {
        &self.exponents[index]
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    pub fn index_of(&self, alpha: &[u32]) -> Option<usize> {
        self.lookup.get(alpha).copied()
    }

    pub fn degree(&self, index: usize) -> usize {
        self.exponents[index].iter().sum::<u32>() as usize
    }

    /// Flat index range holding the degree-`d` block.
    pub fn degree_range(&self, d: usize) -> Range<usize> {
        self.degree_start[d]..self.degree_start[d + 1]
    }
}

/// Coordinate system for `pi`, `psi` and `eta`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Basis {
    /// Monomials of `w` up to a degree bound; valid for any finite-support
    /// prior.
    Monomial(MonomialBasis),
    /// One coordinate per topic with `psi(x)_k = P(x | w = e_k)`; valid for
    /// pure-topic priors and documents of any length.
    SingleTopic { num_topics: usize },
}

/// Serializable description of a [`Basis`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum BasisSpec {
    Monomial { num_topics: usize, max_degree: usize },
    SingleTopic { num_topics: usize },
}

impl Basis {
    pub fn monomial(num_topics: usize, max_degree: usize) -> Self {
        Basis::Monomial(MonomialBasis::new(num_topics, max_degree))
    }

    pub fn from_spec(spec: BasisSpec) -> Self {
        match spec {
            BasisSpec::Monomial { num_topics, max_degree } => Self::monomial(num_topics, max_degree),
            BasisSpec::SingleTopic { num_topics } => Basis::SingleTopic { num_topics },
        }
    }

    pub fn spec(&self) -> BasisSpec {
        match self {
            Basis::Monomial(b) => {
                BasisSpec::Monomial { num_topics: b.num_topics, max_degree: b.max_degree }
            }
            Basis::SingleTopic { num_topics } => BasisSpec::SingleTopic { num_topics: *num_topics },
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Basis::Monomial(b) => b.len(),
            Basis::SingleTopic { num_topics } => *num_topics,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_topics(&self) -> usize {
        match self {
            Basis::Monomial(b) => b.num_topics,
            Basis::SingleTopic { num_topics } => *num_topics,
        }
    }

    /// Coordinates holding the per-topic posterior: the degree-1 block of a
    /// monomial basis, or the whole single-topic basis.
    pub fn topic_block(&self) -> Range<usize> {
        match self {
            Basis::Monomial(b) if b.max_degree >= 1 => b.degree_range(1),
            Basis::Monomial(_) => 0..0,
            Basis::SingleTopic { num_topics } => 0..*num_topics,
        }
    }

    fn check_model<T: Real>(&self, model: &TopicModel<T>) -> Result<(), OracleError> {
        if self.num_topics() != model.num_topics() {
            return Err(OracleError::TopicCountMismatch {
                basis: self.num_topics(),
                model: model.num_topics(),
            });
        }
        Ok(())
    }
}

/// `pi(w) = (prod_k w_k^{alpha_k})_alpha`. On the single-topic basis this is
/// `w` itself, which matches the monomial identity only at vertices.
pub fn pi_vector<T: Real>(w: &[T], basis: &Basis) -> Vec<T> {
    match basis {
        Basis::Monomial(b) => b
            .exponents
            .iter()
            .map(|alpha| {
                alpha
                    .iter()
                    .zip(w)
                    .fold(T::one(), |acc, (&a, &wk)| acc * wk.powi(a as i32))
            })
            .collect(),
        Basis::SingleTopic { .. } => w.to_vec(),
    }
}

/// Likelihood polynomial vector of one document, stored as logarithms.
/// Structural zeros are `-inf`.
#[derive(Clone, Debug, PartialEq)]
pub struct PsiVector<T> {
    pub log_values: Vec<T>,
    pub doc_len: usize,
}

impl<T: Real> PsiVector<T> {
    pub fn len(&self) -> usize {
        self.log_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_values.is_empty()
    }

    pub fn is_zero(&self, index: usize) -> bool {
        self.log_values[index] == T::neg_infinity()
    }

    pub fn values(&self) -> Vec<T> {
        self.log_values.iter().map(|&l| l.exp()).collect()
    }

    /// `ln(v^T psi)` for a non-negative `v`.
    pub fn log_dot_nonneg(&self, v: &[T]) -> T {
        let terms: Vec<T> = self
            .log_values
            .iter()
            .zip(v)
            .map(|(&l, &x)| if x > T::zero() { l + x.ln() } else { T::neg_infinity() })
            .collect();
        log_sum_exp(&terms)
    }
}

/// Likelihood polynomial vector `psi(doc)`.
///
/// On a monomial basis, words are added one at a time:
/// `psi^{(i)}_beta = sum_k psi^{(i-1)}_{beta - e_k} O(x_i | k)`, and only the
/// block of degree `len(doc)` is non-zero.
pub fn psi_vector<T: Real>(
    model: &TopicModel<T>,
    doc: &Document,
    basis: &Basis,
) -> Result<PsiVector<T>, OracleError> {
    model.check_document(doc)?;
    basis.check_model(model)?;
    let m = doc.len();
    let log_values = match basis {
        Basis::SingleTopic { num_topics } => (0..*num_topics)
            .map(|k| model.doc_log_likelihood_topic(doc, k))
            .collect(),
        Basis::Monomial(b) => {
            if m > b.max_degree {
                return Err(OracleError::DocumentTooLong { len: m, max_degree: b.max_degree });
            }
            let mut cur = vec![T::neg_infinity(); b.len()];
            cur[0] = T::zero();
            let mut terms = Vec::with_capacity(b.num_topics);
            for (i, &x) in doc.tokens.iter().enumerate() {
                let degree = i + 1;
                let mut next = vec![T::neg_infinity(); b.len()];
                for j in b.degree_range(degree) {
                    terms.clear();
                    for (k, parent) in b.parents[j].iter().enumerate() {
                        if let Some(p) = *parent {
                            terms.push(cur[p] + model.log_word_prob(k, x));
                        }
                    }
                    next[j] = log_sum_exp(&terms);
                }
                cur = next;
            }
            cur
        }
    };
    Ok(PsiVector { log_values, doc_len: m })
}

fn finite_support<T: Real>(model: &TopicModel<T>) -> Result<(&[Vec<T>], &[T]), OracleError> {
    match model.prior() {
        PriorSpec::FiniteSupport { atoms, probs } => Ok((atoms, probs)),
        PriorSpec::SymmetricDirichlet { .. } => Err(OracleError::ContinuousPrior),
    }
}

fn atom_log_joint<T: Real>(model: &TopicModel<T>, doc: &Document) -> Result<Vec<T>, OracleError> {
    let (atoms, probs) = finite_support(model)?;
    atoms
        .iter()
        .zip(probs)
        .map(|(a, &p)| Ok(p.ln() + model.doc_log_likelihood(doc, a)?))
        .collect()
}

/// `ln P(doc)` for a document of fixed length: `ln sum_j p_j P(doc | w_j)`.
/// Both halves share this law. `-inf` for impossible documents.
pub fn marginal_log_prob<T: Real>(model: &TopicModel<T>, doc: &Document) -> Result<T, OracleError> {
    Ok(log_sum_exp(&atom_log_joint(model, doc)?))
}

/// `P(doc)`; see [`marginal_log_prob`].
pub fn marginal_prob<T: Real>(model: &TopicModel<T>, doc: &Document) -> Result<T, OracleError> {
    Ok(marginal_log_prob(model, doc)?.exp())
}

/// Posterior over prior atoms `P(w = w_j | x)`.
pub fn atom_posterior<T: Real>(model: &TopicModel<T>, doc: &Document) -> Result<Vec<T>, OracleError> {
    let joint = atom_log_joint(model, doc)?;
    let norm = log_sum_exp(&joint);
    if norm == T::neg_infinity() {
        return Err(OracleError::ImpossibleDocument);
    }
    Ok(joint.iter().map(|&l| (l - norm).exp()).collect())
}

/// Posterior moment vector `eta(x) = E[pi(w) | x^(1) = x]`.
pub fn eta_vector<T: Real>(
    model: &TopicModel<T>,
    doc: &Document,
    basis: &Basis,
) -> Result<Vec<T>, OracleError> {
    basis.check_model(model)?;
    let post = atom_posterior(model, doc)?;
    let (atoms, _) = finite_support(model)?;
    match basis {
        Basis::SingleTopic { num_topics } => {
            let topics = model.prior().pure_topic_indices().ok_or(OracleError::NotPureTopic)?;
            let mut eta = vec![T::zero(); *num_topics];
            for (p, k) in post.into_iter().zip(topics) {
                eta[k] = eta[k] + p;
            }
            Ok(eta)
        }
        Basis::Monomial(_) => {
            let mut eta = vec![T::zero(); basis.len()];
            for (p, a) in post.into_iter().zip(atoms) {
                for (e, v) in eta.iter_mut().zip(pi_vector(a, basis)) {
                    *e = *e + p * v;
                }
            }
            Ok(eta)
        }
    }
}

/// `g*(x, x')` by both routes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GStar<T> {
    /// `eta(x)^T psi(x') / P(x')`.
    pub factorized: T,
    /// `P(x, x') / (P(x) P(x'))`.
    pub direct: T,
}

/// `P(x^(1) = x, x^(2) = x') / (P(x^(1) = x) P(x^(2) = x'))`.
pub fn g_star_direct<T: Real>(model: &TopicModel<T>, x: &Document, x_prime: &Document) -> Result<T, OracleError> {
    let jx = atom_log_joint(model, x)?;
    let (atoms, _) = finite_support(model)?;
    let lpx = log_sum_exp(&jx);
    let mut pair = Vec::with_capacity(atoms.len());
    for (a, &l) in atoms.iter().zip(&jx) {
        pair.push(l + model.doc_log_likelihood(x_prime, a)?);
    }
    let lpx2 = marginal_log_prob(model, x_prime)?;
    if lpx2 == T::neg_infinity() {
        return Err(OracleError::UndefinedGStar);
    }
    if lpx == T::neg_infinity() {
        return Err(OracleError::ImpossibleDocument);
    }
    Ok((log_sum_exp(&pair) - lpx - lpx2).exp())
}

/// Bayes density ratio `g*(x, x')` by the factorised route and, for
/// verification, the direct joint/product route.
pub fn g_star<T: Real>(
    model: &TopicModel<T>,
    x: &Document,
    x_prime: &Document,
    basis: &Basis,
) -> Result<GStar<T>, OracleError> {
    let lpx2 = marginal_log_prob(model, x_prime)?;
    if lpx2 == T::neg_infinity() {
        return Err(OracleError::UndefinedGStar);
    }
    let eta = eta_vector(model, x, basis)?;
    let psi = psi_vector(model, x_prime, basis)?;
    let factorized = (psi.log_dot_nonneg(&eta) - lpx2).exp();
    let direct = g_star_direct(model, x, x_prime)?;
    Ok(GStar { factorized, direct })
}

/// Bayes-optimal contrastive predictor `f* = g* / (1 + g*)`.
pub fn f_star<T: Real>(model: &TopicModel<T>, x: &Document, x_prime: &Document) -> Result<T, OracleError> {
    let g = g_star_direct(model, x, x_prime)?;
    Ok(g / (T::one() + g))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum LandmarkStrategy {
    /// iid draws from the second-half marginal.
    Sampled,
    /// Anchor-word documents for every exponent up to `degree`.
    Anchor { degree: usize },
    UserSupplied,
}

/// Landmark documents with their normalised likelihood matrix
/// `L = [psi(l_1)/P(l_1) ... psi(l_M)/P(l_M)]` (basis size x M) and its
/// pseudo-inverse.
#[derive(Clone, Debug)]
pub struct LandmarkSet<T> {
    landmarks: Vec<Document>,
    basis: Basis,
    strategy: LandmarkStrategy,
    matrix: Array2<T>,
    log_marginals: Vec<T>,
    pinv: PseudoInverse<T>,
}

impl<T: Real> LandmarkSet<T> {
    pub fn new(
        model: &TopicModel<T>,
        landmarks: Vec<Document>,
        basis: Basis,
        strategy: LandmarkStrategy,
    ) -> Result<Self, OracleError> {
        basis.check_model(model)?;
        let n = basis.len();
        let mut matrix = Array2::zeros((n, landmarks.len()));
        let mut log_marginals = Vec::with_capacity(landmarks.len());
        for (i, l) in landmarks.iter().enumerate() {
            let lp = marginal_log_prob(model, l)?;
            if lp == T::neg_infinity() {
                return Err(OracleError::ZeroMarginalLandmark(i));
            }
            let psi = psi_vector(model, l, &basis)?;
            for (r, &lv) in psi.log_values.iter().enumerate() {
                matrix[[r, i]] = (lv - lp).exp();
            }
            log_marginals.push(lp);
        }
        let pinv = linalg::pseudo_inverse(&matrix, RANK_RTOL);
        Ok(Self { landmarks, basis, strategy, matrix, log_marginals, pinv })
    }

    pub fn landmarks(&self) -> &[Document] {
        &self.landmarks
    }

    pub fn len(&self) -> usize {
        self.landmarks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.landmarks.is_empty()
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn strategy(&self) -> LandmarkStrategy {
        self.strategy
    }

    /// `L`, basis size x M.
    pub fn matrix(&self) -> &Array2<T> {
        &self.matrix
    }

    /// `L^+`, M x basis size.
    pub fn pseudo_inverse(&self) -> &Array2<T> {
        &self.pinv.pinv
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.pinv.singular_values
    }

    /// Smallest singular value of `L`, counting the `N - M` structural zeros
    /// when there are fewer landmarks than basis coordinates.
    pub fn min_singular(&self) -> f64 {
        if self.landmarks.len() < self.basis.len() {
            0.0
        } else {
            self.pinv.sigma_min()
        }
    }

    pub fn rank(&self) -> usize {
        self.pinv.rank
    }

    pub fn has_full_row_rank(&self) -> bool {
        self.pinv.rank == self.basis.len()
    }

    /// `P(x^(2) = l_i)` for each landmark.
    pub fn marginals(&self) -> Vec<T> {
        self.log_marginals.iter().map(|l| l.exp()).collect()
    }

    /// Smallest landmark marginal `p_min`.
    pub fn min_marginal(&self) -> T {
        self.marginals().into_iter().fold(T::infinity(), T::min)
    }

    fn require_full_rank(&self) -> Result<(), OracleError> {
        if self.has_full_row_rank() {
            Ok(())
        } else {
            Err(OracleError::RankDeficient { rank: self.pinv.rank, needed: self.basis.len() })
        }
    }

    /// Apply `(L^T)^+` to landmark-space values. With exact
    /// `phi = g*(x, l_{1:M}) = L^T eta(x)` this returns `eta(x)`.
    pub fn decode(&self, phi: &[T]) -> Result<Vec<T>, OracleError> {
        if phi.len() != self.len() {
            return Err(OracleError::DimensionMismatch { got: phi.len(), expected: self.len() });
        }
        self.require_full_rank()?;
        let phi = Array1::from(phi.to_vec());
        Ok(self.pinv.pinv.t().dot(&phi).to_vec())
    }

    /// [`LandmarkSet::decode`] applied to each row of `phi` (documents x M).
    pub fn decode_matrix(&self, phi: &Array2<T>) -> Result<Array2<T>, OracleError> {
        if phi.ncols() != self.len() {
            return Err(OracleError::DimensionMismatch { got: phi.ncols(), expected: self.len() });
        }
        self.require_full_rank()?;
        Ok(phi.dot(&self.pinv.pinv))
    }

    /// Landmark weights `theta = L^+ v` with `L theta = v`, so that
    /// `<theta, g*(x, l_{1:M})> = <v, eta(x)>`.
    pub fn polynomial_functional(&self, coeffs: &[T]) -> Result<Vec<T>, OracleError> {
        if coeffs.len() != self.basis.len() {
            return Err(OracleError::DimensionMismatch { got: coeffs.len(), expected: self.basis.len() });
        }
        self.require_full_rank()?;
        Ok(self.pinv.pinv.dot(&Array1::from(coeffs.to_vec())).to_vec())
    }
}

/// `L^+ phi`; see [`LandmarkSet::decode`].
pub fn decode_posterior<T: Real>(set: &LandmarkSet<T>, phi: &[T]) -> Result<Vec<T>, OracleError> {
    set.decode(phi)
}

/// `theta` representing the polynomial `v^T pi(w)`; see
/// [`LandmarkSet::polynomial_functional`].
pub fn polynomial_functional<T: Real>(set: &LandmarkSet<T>, coeffs: &[T]) -> Result<Vec<T>, OracleError> {
    set.polynomial_functional(coeffs)
}

/// Anchor word of each topic: the most probable word with
/// `O(a | j) > 0` iff `j = k`.
pub fn anchor_words<T: Real>(model: &TopicModel<T>) -> Result<Vec<u32>, OracleError> {
    let k = model.num_topics();
    let mut anchors = vec![None::<(u32, T)>; k];
    for word in 0..model.vocab_size() as u32 {
        let support: Vec<usize> = (0..k).filter(|&t| model.word_prob(t, word) > T::zero()).collect();
        if let [t] = support[..] {
            let p = model.word_prob(t, word);
            if anchors[t].is_none_or(|(_, q)| p > q) {
                anchors[t] = Some((word, p));
            }
        }
    }
    let missing: Vec<usize> = (0..k).filter(|&t| anchors[t].is_none()).collect();
    if !missing.is_empty() {
        return Err(OracleError::MissingAnchors(missing));
    }
    Ok(anchors.into_iter().map(|a| a.expect("checked").0).collect())
}

/// One landmark per exponent `alpha` with `|alpha| <= degree`, made of
/// `alpha_k` copies of topic `k`'s anchor word, over the monomial basis of
/// the same degree. `L` is then diagonal with positive entries.
pub fn anchor_landmarks<T: Real>(model: &TopicModel<T>, degree: usize) -> Result<LandmarkSet<T>, OracleError> {
    let anchors = anchor_words(model)?;
    let basis = MonomialBasis::new(model.num_topics(), degree);
    let docs = basis
        .exponents()
        .iter()
        .map(|alpha| {
            Document::new(
                alpha
                    .iter()
                    .zip(&anchors)
                    .flat_map(|(&a, &w)| std::iter::repeat_n(w, a as usize))
                    .collect(),
            )
        })
        .collect();
    LandmarkSet::new(model, docs, Basis::Monomial(basis), LandmarkStrategy::Anchor { degree })
}

/// `M` landmarks drawn iid from the second-half marginal at fixed length.
pub fn sample_landmarks<T: Real>(model: &TopicModel<T>, count: usize, length: usize, rng: &mut Rng) -> Vec<Document> {
    (0..count)
        .map(|_| {
            let w = model.sample_w(rng);
            model.sample_tokens(&w, length, rng).expect("w drawn from the model prior")
        })
        .collect()
}

/// Smallest eigenvalue of `(1/M) sum_j psi(l_j) psi(l_j)^T / P(l_j)^2` on the
/// single-topic basis.
pub fn second_moment_min_eigenvalue<T: Real>(model: &TopicModel<T>, landmarks: &[Document]) -> Result<f64, OracleError> {
    if !model.prior().is_pure_topic() {
        return Err(OracleError::NotPureTopic);
    }
    let set = LandmarkSet::new(
        model,
        landmarks.to_vec(),
        Basis::SingleTopic { num_topics: model.num_topics() },
        LandmarkStrategy::UserSupplied,
    )?;
    let l = set.matrix();
    let m = T::from_usize_lossy(landmarks.len().max(1));
    let second = l.dot(&l.t()).mapv(|v| v / m);
    Ok(linalg::min_eigenvalue_symmetric(&second))
}
