//! Oracle-equivalence checks on small, exhaustively enumerable instances.
//! Each check compares two independent routes to the same quantity.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::{
    anchor_landmarks, anchor_words, atom_posterior, eta_vector, g_star, g_star_direct, marginal_prob, pi_vector,
    psi_vector, sample_landmarks, Basis, LandmarkSet, LandmarkStrategy, MonomialBasis, OracleError,
};
use crate::rng::stream_rng;
use crate::topic_model::{sample_symmetric_dirichlet, Document, PriorSpec, TopicModel};

#[derive(Debug, Error)]
pub enum CheckError {
    #[error("instance exceeds the exhaustive-check limits: {0}")]
    TooLarge(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Largest instance the exhaustive checks accept.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckLimits {
    pub max_topics: usize,
    pub max_vocab: usize,
    pub max_len: usize,
}

impl Default for CheckLimits {
    fn default() -> Self {
        Self { max_topics: 4, max_vocab: 6, max_len: 5 }
    }
}

impl CheckLimits {
    pub fn validate<T>(&self, model: &TopicModel<T>, max_len: usize) -> Result<(), CheckError>
    where
        T: crate::scalar::Real,
    {
        let mut over = Vec::new();
        if model.num_topics() > self.max_topics {
            over.push(format!("K = {} > {}", model.num_topics(), self.max_topics));
        }
        if model.vocab_size() > self.max_vocab {
            over.push(format!("V = {} > {}", model.vocab_size(), self.max_vocab));
        }
        if max_len > self.max_len {
            over.push(format!("m = {} > {}", max_len, self.max_len));
        }
        if over.is_empty() {
            Ok(())
        } else {
            Err(CheckError::TooLarge(over.join(", ")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub status: CheckStatus,
    pub comparisons: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckResult {
    fn measured(name: &str, comparisons: usize, max_error: f64, tolerance: f64, detail: String) -> Self {
        let status = if max_error <= tolerance { CheckStatus::Pass } else { CheckStatus::Fail };
        Self { name: name.into(), status, comparisons, max_error, tolerance, detail }
    }

    fn skipped(name: &str, tolerance: f64, why: &str) -> Self {
        Self {
            name: name.into(),
            status: CheckStatus::Skipped,
            comparisons: 0,
            max_error: 0.0,
            tolerance,
            detail: why.into(),
        }
    }

    pub fn passed(&self) -> bool {
        self.status != CheckStatus::Fail
    }
}

pub const FACTORIZATION_TOL: f64 = 1e-12;
pub const G_STAR_TOL: f64 = 1e-10;
pub const ANCHOR_TOL: f64 = 1e-9;
pub const DECODE_TOL: f64 = 1e-10;

/// Every ordered token sequence of length `len` over `vocab` words.
pub fn all_documents(vocab: usize, len: usize) -> Vec<Document> {
    let mut out = Vec::with_capacity(vocab.pow(len as u32));
    let mut tokens = vec![0u32; len];
    loop {
        out.push(Document::new(tokens.clone()));
        let mut i = len;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            tokens[i] += 1;
            if (tokens[i] as usize) < vocab {
                break;
            }
            tokens[i] = 0;
        }
    }
}

/// Every document with `min_len <= len <= max_len`.
pub fn documents_up_to(vocab: usize, min_len: usize, max_len: usize) -> Vec<Document> {
    (min_len..=max_len).flat_map(|m| all_documents(vocab, m)).collect()
}

/// `|a - b| / max(1, |b|)`.
pub fn scaled_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn random_simplex_points(k: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| sample_symmetric_dirichlet(k, 1.0, &mut stream_rng(seed, i as u64)))
        .collect()
}

/// `P(x | w) = pi(w)^T psi(x)` for every document up to `max_len`, at
/// each prior atom and `extra_w` random mixtures.
pub fn check_factorization(model: &TopicModel<f64>, max_len: usize, extra_w: usize, seed: u64) -> Result<CheckResult, CheckError> {
    let k = model.num_topics();
    let mut ws = random_simplex_points(k, extra_w, seed);
    if let PriorSpec::FiniteSupport { atoms, .. } = model.prior() {
        ws.extend(atoms.iter().cloned());
    }
    let (mut n, mut worst) = (0usize, 0.0f64);
    for m in 1..=max_len {
        let basis = Basis::monomial(k, m);
        let pis: Vec<Vec<f64>> = ws.iter().map(|w| pi_vector(w, &basis)).collect();
        for doc in all_documents(model.vocab_size(), m) {
            let psi = psi_vector(model, &doc, &basis)?.values();
            for (w, pi) in ws.iter().zip(&pis) {
                let direct: f64 = doc
                    .tokens
                    .iter()
                    .map(|&x| (0..k).map(|t| w[t] * model.word_prob(t, x)).sum::<f64>())
                    .product();
                let factored: f64 = pi.iter().zip(&psi).map(|(a, b)| a * b).sum();
                worst = worst.max((direct - factored).abs());
                n += 1;
            }
        }
    }
    Ok(CheckResult::measured("factorization", n, worst, FACTORIZATION_TOL, format!("{} w values", ws.len())))
}

/// The psi dynamic program against enumeration of all `K^m` topic
/// assignments.
pub fn check_psi_enumeration(model: &TopicModel<f64>, max_len: usize) -> Result<CheckResult, CheckError> {
    let k = model.num_topics();
    let (mut n, mut worst) = (0usize, 0.0f64);
    for m in 1..=max_len {
        let mono = MonomialBasis::new(k, m);
        let basis = Basis::Monomial(mono.clone());
        for doc in all_documents(model.vocab_size(), m) {
            let psi = psi_vector(model, &doc, &basis)?.values();
            let mut brute = vec![0.0; basis.len()];
            let mut z = vec![0usize; m];
            'assign: loop {
                let mut alpha = vec![0u32; k];
                let mut p = 1.0;
                for (i, &zi) in z.iter().enumerate() {
                    alpha[zi] += 1;
                    p *= model.word_prob(zi, doc.tokens[i]);
                }
                brute[mono.index_of(&alpha).expect("degree m exponent")] += p;
                let mut i = m;
                loop {
                    if i == 0 {
                        break 'assign;
                    }
                    i -= 1;
                    z[i] += 1;
                    if z[i] < k {
                        break;
                    }
                    z[i] = 0;
                }
            }
            for (a, b) in psi.iter().zip(&brute) {
                worst = worst.max((a - b).abs());
                n += 1;
            }
        }
    }
    Ok(CheckResult::measured("psi_enumeration", n, worst, FACTORIZATION_TOL, String::new()))
}

/// Factorized `eta(x)^T psi(x') / P(x')` against `P(x, x') / (P(x) P(x'))`
/// on all pairs with both half-lengths up to `max_len`. Errors are scaled
/// by `max(1, |g*|)`.
pub fn check_g_star_routes(model: &TopicModel<f64>, max_len: usize) -> Result<CheckResult, CheckError> {
    if !matches!(model.prior(), PriorSpec::FiniteSupport { .. }) {
        return Ok(CheckResult::skipped("g_star_routes", G_STAR_TOL, "continuous prior"));
    }
    let basis = Basis::monomial(model.num_topics(), max_len);
    let docs: Vec<Document> = documents_up_to(model.vocab_size(), 1, max_len)
        .into_iter()
        .filter(|d| marginal_prob(model, d).map(|p| p > 0.0).unwrap_or(false))
        .collect();
    let (mut n, mut worst) = (0usize, 0.0f64);
    for x in &docs {
        for xp in &docs {
            let g = g_star(model, x, xp, &basis)?;
            worst = worst.max(scaled_error(g.factorized, g.direct));
            n += 1;
        }
    }
    Ok(CheckResult::measured("g_star_routes", n, worst, G_STAR_TOL, format!("{} possible documents", docs.len())))
}

/// With a single prior atom the halves are independent, so `g* = 1`.
pub fn check_point_mass(model: &TopicModel<f64>, max_len: usize) -> Result<CheckResult, CheckError> {
    let single = match model.prior() {
        PriorSpec::FiniteSupport { probs, .. } => probs.iter().filter(|&&p| p > 0.0).count() == 1,
        PriorSpec::SymmetricDirichlet { .. } => false,
    };
    if !single {
        return Ok(CheckResult::skipped("point_mass_g_star", G_STAR_TOL, "prior has several atoms"));
    }
    let docs: Vec<Document> = documents_up_to(model.vocab_size(), 1, max_len)
        .into_iter()
        .filter(|d| marginal_prob(model, d).map(|p| p > 0.0).unwrap_or(false))
        .collect();
    let (mut n, mut worst) = (0usize, 0.0f64);
    for x in &docs {
        for xp in &docs {
            worst = worst.max((g_star_direct(model, x, xp)? - 1.0).abs());
            n += 1;
        }
    }
    Ok(CheckResult::measured("point_mass_g_star", n, worst, G_STAR_TOL, String::new()))
}

/// Anchor landmarks up to `degree`: `<theta, g*(x, l)>` with
/// `theta = L^+ v` against `E[v^T pi(w) | x]` for `polys` random `v` and
/// all `x` with `1 <= len(x) <= degree`.
pub fn check_anchor_exactness(model: &TopicModel<f64>, degree: usize, polys: usize, seed: u64) -> Result<CheckResult, CheckError> {
    let name = "anchor_exactness";
    let PriorSpec::FiniteSupport { atoms, .. } = model.prior() else {
        return Ok(CheckResult::skipped(name, ANCHOR_TOL, "continuous prior"));
    };
    if anchor_words(model).is_err() {
        return Ok(CheckResult::skipped(name, ANCHOR_TOL, "some topic has no anchor word"));
    }
    let set = match anchor_landmarks(model, degree) {
        Ok(s) => s,
        Err(OracleError::ZeroMarginalLandmark(i)) => {
            return Ok(CheckResult::skipped(name, ANCHOR_TOL, &format!("anchor landmark {i} is impossible under the prior")));
        }
        Err(e) => return Err(e.into()),
    };
    if !set.has_full_row_rank() {
        return Ok(CheckResult::measured(name, 0, f64::INFINITY, ANCHOR_TOL, "anchor L is singular".into()));
    }
    let basis = set.basis().clone();
    let pis: Vec<Vec<f64>> = atoms.iter().map(|a| pi_vector(a, &basis)).collect();
    let mut rng = stream_rng(seed, 0);
    let coeffs: Vec<Vec<f64>> = (0..polys)
        .map(|_| (0..basis.len()).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect())
        .collect();
    let thetas = coeffs.iter().map(|v| set.polynomial_functional(v)).collect::<Result<Vec<_>, _>>()?;
    let (mut n, mut worst) = (0usize, 0.0f64);
    for x in documents_up_to(model.vocab_size(), 1, degree) {
        let Ok(post) = atom_posterior(model, &x) else { continue };
        let phi = set
            .landmarks()
            .iter()
            .map(|l| g_star_direct(model, &x, l))
            .collect::<Result<Vec<_>, _>>()?;
        for (v, theta) in coeffs.iter().zip(&thetas) {
            let lhs: f64 = theta.iter().zip(&phi).map(|(a, b)| a * b).sum();
            let rhs: f64 = post
                .iter()
                .zip(&pis)
                .map(|(p, pi)| p * v.iter().zip(pi).map(|(a, b)| a * b).sum::<f64>())
                .sum();
            worst = worst.max(scaled_error(lhs, rhs));
            n += 1;
        }
    }
    Ok(CheckResult::measured(name, n, worst, ANCHOR_TOL, format!("{} landmarks", set.len())))
}

/// Sampled landmarks of fixed length on the single-topic basis:
/// `(L^T)^+ g*(x, l)` against the topic posterior for every `x` up to
/// `max_len`. Draws landmark sets until one has full row rank.
pub fn check_single_topic_decode(
    model: &TopicModel<f64>,
    max_len: usize,
    landmark_len: usize,
    count: usize,
    seed: u64,
) -> Result<CheckResult, CheckError> {
    let name = "single_topic_decode";
    if !model.prior().is_pure_topic() {
        return Ok(CheckResult::skipped(name, DECODE_TOL, "prior is not single-topic"));
    }
    let k = model.num_topics();
    let basis = Basis::SingleTopic { num_topics: k };
    let mut set = None;
    for attempt in 0..50 {
        let docs = sample_landmarks(model, count, landmark_len, &mut stream_rng(seed, attempt));
        let s = LandmarkSet::new(model, docs, basis.clone(), LandmarkStrategy::Sampled)?;
        if s.has_full_row_rank() {
            set = Some(s);
            break;
        }
    }
    let Some(set) = set else {
        return Ok(CheckResult::skipped(name, DECODE_TOL, "no full-rank landmark set in 50 draws"));
    };
    let (mut n, mut worst) = (0usize, 0.0f64);
    for x in documents_up_to(model.vocab_size(), 1, max_len) {
        let Ok(eta) = eta_vector(model, &x, &basis) else { continue };
        let phi = set
            .landmarks()
            .iter()
            .map(|l| g_star_direct(model, &x, l))
            .collect::<Result<Vec<_>, _>>()?;
        for (a, b) in set.decode(&phi)?.iter().zip(&eta) {
            worst = worst.max((a - b).abs());
            n += 1;
        }
    }
    let detail = format!("M = {}, sigma_min = {:.3e}", set.len(), set.min_singular());
    Ok(CheckResult::measured(name, n, worst, DECODE_TOL, detail))
}

/// Every applicable check on one model. Pair checks use half-lengths up to
/// `min(max_len, 3)` to keep the quadratic pair count bounded.
pub fn run_oracle_checks(model: &TopicModel<f64>, max_len: usize, seed: u64) -> Result<Vec<CheckResult>, CheckError> {
    CheckLimits::default().validate(model, max_len)?;
    let pair_len = max_len.min(3);
    Ok(vec![
        check_factorization(model, max_len, 10, seed)?,
        check_psi_enumeration(model, max_len)?,
        check_g_star_routes(model, pair_len)?,
        check_point_mass(model, pair_len)?,
        // mixed anchor landmarks are impossible under a single-topic prior
        check_anchor_exactness(model, if model.prior().is_pure_topic() { 1 } else { pair_len }, 20, seed)?,
        check_single_topic_decode(model, pair_len, pair_len.min(2), 2 * model.num_topics() + 2, seed)?,
    ])
}

pub fn checks_to_csv(results: &[CheckResult]) -> String {
    let mut s = String::from("check,status,comparisons,max_error,tolerance,detail\n");
    for r in results {
        let status = match r.status {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::Skipped => "skipped",
        };
        s.push_str(&format!(
            "{},{},{},{:e},{:e},\"{}\"\n",
            r.name,
            status,
            r.comparisons,
            r.max_error,
            r.tolerance,
            r.detail.replace('"', "'")
        ));
    }
    s
}
