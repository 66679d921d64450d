//! Acceptance criteria. Runs as a plain binary (`harness = false`) so each
//! criterion prints one PASS/FAIL line; `cargo test --test acceptance -- 3 9`
//! runs only criteria 3 and 9.

use std::time::Instant;

use doccontrast::checks::{all_documents, documents_up_to};
use doccontrast::contrastive_data::{build_paired_permutation, DataSource, ResampleSchedule, ResamplingStream, Scheme};
use doccontrast::embedding::{f_max_from_p_min, Clamp};
use doccontrast::experiment::{run_checkpoint_probes, run_sweep, SimulationConfig, SweepSpec};
use doccontrast::learner::{
    gradient_check, train, Architecture, Batch, ContrastiveModel, InputEncoding, Mode, RmsPropConfig, TrainConfig,
};
use doccontrast::linalg::min_eigenvalue_symmetric;
use doccontrast::oracle::{
    anchor_landmarks, g_star, g_star_direct, pi_vector, psi_vector, sample_landmarks, second_moment_min_eigenvalue,
    Basis, LandmarkSet, LandmarkStrategy, MonomialBasis,
};
use doccontrast::probe_eval::{spearman, topic_tv_separation, verify_error_bound, BoundSamples};
use doccontrast::rng::stream_rng;
use doccontrast::topic_model::{
    sample_corpus, sample_symmetric_dirichlet, sample_topic_model, split_document, Document, LengthSpec, PriorSpec,
    SplitMode, TopicModel,
};
use doccontrast::TopicModel64;
use ndarray::Array2;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---------------------------------------------------------------------------
// Independent oracles: plain products and sums, no log space, no library
// routines beyond reading O(.|k).

fn lik(model: &TopicModel64, doc: &Document, w: &[f64]) -> f64 {
    doc.tokens
        .iter()
        .map(|&x| (0..model.num_topics()).map(|k| w[k] * model.word_prob(k, x)).sum::<f64>())
        .product()
}

fn atoms_of(model: &TopicModel64) -> (Vec<Vec<f64>>, Vec<f64>) {
    match model.prior() {
        PriorSpec::FiniteSupport { atoms, probs } => (atoms.clone(), probs.clone()),
        PriorSpec::SymmetricDirichlet { .. } => panic!("finite support expected"),
    }
}

/// `(P(x, x'), P(x), P(x'))` by summing over prior atoms.
fn joint_and_marginals(model: &TopicModel64, x: &Document, xp: &Document) -> (f64, f64, f64) {
    let (atoms, probs) = atoms_of(model);
    let (mut j, mut a, mut b) = (0.0, 0.0, 0.0);
    for (w, p) in atoms.iter().zip(&probs) {
        let (lx, lxp) = (lik(model, x, w), lik(model, xp, w));
        j += p * lx * lxp;
        a += p * lx;
        b += p * lxp;
    }
    (j, a, b)
}

fn atom_posterior_naive(model: &TopicModel64, x: &Document) -> Vec<f64> {
    let (atoms, probs) = atoms_of(model);
    let joint: Vec<f64> = atoms.iter().zip(&probs).map(|(w, p)| p * lik(model, x, w)).collect();
    let z: f64 = joint.iter().sum();
    joint.iter().map(|j| j / z).collect()
}

fn monomial(w: &[f64], alpha: &[u32]) -> f64 {
    w.iter().zip(alpha).map(|(wk, &a)| wk.powi(a as i32)).product()
}

fn random_rows(k: usize, v: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..k).map(|i| sample_symmetric_dirichlet(v, 1.0, &mut stream_rng(seed, i as u64))).collect()
}

fn mixed_prior(k: usize, atoms: usize, seed: u64) -> PriorSpec<f64> {
    let atoms: Vec<Vec<f64>> = (0..atoms)
        .map(|j| sample_symmetric_dirichlet(k, 1.0, &mut stream_rng(seed ^ 0xA7, j as u64)))
        .collect();
    let probs = sample_symmetric_dirichlet(atoms.len(), 3.0, &mut stream_rng(seed ^ 0x7A, 0));
    PriorSpec::FiniteSupport { atoms, probs }
}

fn fixed(rows: Vec<Vec<f64>>, prior: PriorSpec<f64>, len: usize) -> TopicModel64 {
    TopicModel::new(rows, prior, LengthSpec::Fixed { length: len.max(2) }).unwrap()
}

/// Topic `k` owns word `k` (probability `a_k >= a_min`); words `K..V` are
/// shared.
fn anchored_rows(k: usize, v: usize, a_min: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(seed, 1000);
    (0..k)
        .map(|t| {
            let a = rng.random_range(a_min..(a_min + 0.5).min(0.9));
            let rest = sample_symmetric_dirichlet(v - k, 1.0, &mut stream_rng(seed, t as u64));
            let mut row = vec![0.0; v];
            row[t] = a;
            for (j, r) in rest.iter().enumerate() {
                row[k + j] = (1.0 - a) * r;
            }
            row
        })
        .collect()
}

// ---------------------------------------------------------------------------

fn c1_factorization() -> Outcome {
    let (mut worst, mut n) = (0.0f64, 0usize);
    for k in 1..=3 {
        for v in 2..=4 {
            for s in 0..100u64 {
                let seed = (k * 1000 + v * 100) as u64 + s;
                let model = fixed(random_rows(k, v, seed), mixed_prior(k, 3, seed), 4);
                let w = sample_symmetric_dirichlet(k, 1.0, &mut stream_rng(seed, 77));
                for m in 1..=4 {
                    let basis = Basis::monomial(k, m);
                    let pi = pi_vector(&w, &basis);
                    for doc in all_documents(v, m) {
                        let psi = psi_vector(&model, &doc, &basis).unwrap().values();
                        let f: f64 = pi.iter().zip(&psi).map(|(a, b)| a * b).sum();
                        worst = worst.max((f - lik(&model, &doc, &w)).abs());
                        n += 1;
                    }
                }
            }
        }
    }
    outcome(worst <= 1e-12, format!("{n} documents, max |P(x|w) - pi(w)^T psi(x)| = {worst:.2e} (tol 1e-12)"))
}

fn c2_g_star_routes() -> Outcome {
    let (mut worst_f, mut worst_d, mut n) = (0.0f64, 0.0f64, 0usize);
    for k in 1..=3 {
        for v in 2..=4 {
            for s in 0..3u64 {
                let seed = 50_000 + (k * 100 + v * 10) as u64 + s;
                let model = fixed(random_rows(k, v, seed), mixed_prior(k, 1 + (s as usize + k) % 4, seed), 6);
                let basis = Basis::monomial(k, 3);
                let docs = documents_up_to(v, 1, 3);
                for x in &docs {
                    for xp in &docs {
                        let (j, a, b) = joint_and_marginals(&model, x, xp);
                        let truth = j / (a * b);
                        let g = g_star(&model, x, xp, &basis).unwrap();
                        let scale = truth.abs().max(1.0);
                        worst_f = worst_f.max((g.factorized - truth).abs() / scale);
                        worst_d = worst_d.max((g.direct - truth).abs() / scale);
                        n += 1;
                    }
                }
            }
        }
    }
    outcome(
        worst_f <= 1e-10 && worst_d <= 1e-10,
        format!("{n} pairs, factorized err {worst_f:.2e}, direct err {worst_d:.2e} (tol 1e-10, relative to max(1, g*))"),
    )
}

fn c3_anchor_exactness() -> Outcome {
    let (mut worst, mut n, mut singular) = (0.0f64, 0usize, 0usize);
    for k in 1..=4 {
        for d_o in 1..=3 {
            let seed = 90_000 + (k * 10 + d_o) as u64;
            let v = k + 2;
            let model = fixed(anchored_rows(k, v, 0.2, seed), mixed_prior(k, k + 2, seed), 6);
            let set = anchor_landmarks(&model, d_o).unwrap();
            let mono = MonomialBasis::new(k, d_o);
            if set.rank() != mono.len() || set.len() != mono.len() {
                singular += 1;
                continue;
            }
            let (atoms, _) = atoms_of(&model);
            let mut rng = stream_rng(seed, 5);
            let polys: Vec<Vec<f64>> = (0..50).map(|_| (0..mono.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let thetas: Vec<Vec<f64>> = polys.iter().map(|p| set.polynomial_functional(p).unwrap()).collect();
            for x in documents_up_to(v, 1, d_o) {
                let post = atom_posterior_naive(&model, &x);
                let phi: Vec<f64> = set.landmarks().iter().map(|l| g_star_direct(&model, &x, l).unwrap()).collect();
                for (p, theta) in polys.iter().zip(&thetas) {
                    let lhs: f64 = theta.iter().zip(&phi).map(|(a, b)| a * b).sum();
                    let rhs: f64 = post
                        .iter()
                        .zip(&atoms)
                        .map(|(q, w)| q * mono.exponents().iter().zip(p).map(|(al, c)| c * monomial(w, al)).sum::<f64>())
                        .sum();
                    worst = worst.max((lhs - rhs).abs());
                    n += 1;
                }
            }
        }
    }
    outcome(
        singular == 0 && worst <= 1e-9,
        format!("{n} (x, polynomial) cases, {singular} singular L, max error {worst:.2e} (tol 1e-9)"),
    )
}

fn c4_single_topic_decode() -> Outcome {
    let (mut worst, mut sets, mut draws, mut n) = (0.0f64, 0usize, 0usize, 0usize);
    let m = 2;
    let mut s = 0u64;
    while sets < 200 {
        s += 1;
        let mut rng = stream_rng(7_000_000, s);
        let k = rng.random_range(2..=4);
        let v = rng.random_range(k.max(3)..=6);
        let probs = sample_symmetric_dirichlet(k, 5.0, &mut rng);
        let model = fixed(random_rows(k, v, s), PriorSpec::pure_topic(probs.clone()), 2 * m);
        let count = k + rng.random_range(0..=4);
        let landmarks = sample_landmarks(&model, count, m, &mut rng);
        draws += 1;
        let set = LandmarkSet::new(&model, landmarks, Basis::SingleTopic { num_topics: k }, LandmarkStrategy::Sampled).unwrap();
        if !set.has_full_row_rank() {
            continue;
        }
        sets += 1;
        for x in documents_up_to(v, 1, 3) {
            let joint: Vec<f64> = (0..k).map(|t| probs[t] * x.tokens.iter().map(|&w| model.word_prob(t, w)).product::<f64>()).collect();
            let z: f64 = joint.iter().sum();
            let phi: Vec<f64> = set.landmarks().iter().map(|l| g_star_direct(&model, &x, l).unwrap()).collect();
            for (a, b) in set.decode(&phi).unwrap().iter().zip(&joint) {
                worst = worst.max((a - b / z).abs());
                n += 1;
            }
        }
    }
    outcome(worst <= 1e-10, format!("{sets} full-rank sets ({draws} drawn), {n} coordinates, max error {worst:.2e} (tol 1e-10)"))
}

fn c5_gradients() -> Outcome {
    let mut worst = 0.0f64;
    let mut kinds = [0usize; 2];
    for draw in 0..20u64 {
        let mut rng = stream_rng(31_337, draw);
        let vocab = rng.random_range(3..12);
        let depth = rng.random_range(1..=3);
        let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(2..12)).collect();
        let (bn, dropout) = (rng.random_bool(0.5), rng.random_bool(0.5));
        let arch = if draw % 2 == 0 {
            Architecture::Pair { vocab, hidden, batch_norm: bn, dropout, encoding: InputEncoding::Counts }
        } else {
            Architecture::Bilinear { vocab, hidden, dim: rng.random_range(1..6), batch_norm: bn, dropout, encoding: InputEncoding::Counts }
        };
        kinds[(draw % 2) as usize] += 1;
        let n = rng.random_range(4..16);
        let pairs: Vec<_> = (0..n)
            .map(|i| {
                let mut doc = || Document::new((0..rng.random_range(1..8)).map(|_| rng.random_range(0..vocab as u32)).collect());
                let (first, second) = (doc(), doc());
                doccontrast::contrastive_data::ContrastivePair { first, second, y: (i % 2) as u8, src: [i, i] }
            })
            .collect();
        let batch = Batch::<f64>::from_pairs(&pairs, vocab, InputEncoding::Counts).unwrap();
        let model = arch.build::<f64>(draw).unwrap();
        let mode = if draw % 3 == 0 { Mode::Eval } else { Mode::Train };
        let r = gradient_check(&model, &batch, mode, 1e-5, 1e-5, draw, None).unwrap();
        worst = worst.max(r.max_rel_error);
    }
    outcome(
        worst < 1e-4,
        format!("{} pair + {} bilinear draws, max relative error {worst:.2e} (tol 1e-4)", kinds[0], kinds[1]),
    )
}

fn c6_bayes_loss() -> Outcome {
    let rows = vec![vec![0.6, 0.3, 0.1], vec![0.1, 0.3, 0.6]];
    let model = fixed(rows, PriorSpec::uniform_pure_topic(2), 4);
    // exact E_{D_c}[f*(1 - f*)] over ordered half-documents
    let halves = all_documents(3, 2);
    let mut bayes = 0.0;
    for x in &halves {
        for xp in &halves {
            let (j, a, b) = joint_and_marginals(&model, x, xp);
            let f = j / (j + a * b);
            bayes += 0.5 * (j + a * b) * f * (1.0 - f);
        }
    }
    let holdout_docs = sample_corpus(&model, 10_000, 606).documents;
    let holdout_ds = build_paired_permutation(&holdout_docs, SplitMode::RandomPartition, 607).unwrap();
    let holdout = Batch::<f64>::from_pairs(&holdout_ds.pairs, 3, InputEncoding::Counts).unwrap();
    let bayes_empirical: f64 = holdout_ds
        .pairs
        .iter()
        .map(|p| {
            let (j, a, b) = joint_and_marginals(&model, &p.first, &p.second);
            let f = j / (j + a * b);
            (f - p.y as f64).powi(2)
        })
        .sum::<f64>()
        / holdout_ds.len() as f64;

    let arch = Architecture::Pair { vocab: 3, hidden: vec![32, 32], batch_norm: false, dropout: false, encoding: InputEncoding::Counts };
    let mut stream = ResamplingStream::new(
        DataSource::Simulation { model: model.clone(), docs_per_resample: 4000 },
        ResampleSchedule::every(1).unwrap(),
        Scheme::PairedPermutation,
        SplitMode::RandomPartition,
        608,
    );
    let cfg = TrainConfig {
        epochs: 40,
        batch_size: 64,
        optimizer: RmsPropConfig { lr: 1e-3, ..Default::default() },
        ..Default::default()
    };
    let out = train(arch.build::<f64>(609).unwrap(), &mut stream, Some(&holdout), &cfg, 609, &mut |_, _, _| {}).unwrap();
    let loss = out.model.loss(&holdout, Mode::Eval, &mut stream_rng(0, 0)).unwrap();
    outcome(
        (loss - bayes).abs() <= 0.02,
        format!(
            "holdout squared loss {loss:.4}, exact Bayes loss {bayes:.4} (f* on the same holdout {bayes_empirical:.4}), gap {:.4} (tol 0.02)",
            (loss - bayes).abs()
        ),
    )
}

fn c7_error_bound() -> Outcome {
    let mut held = 0;
    let mut lines = Vec::new();
    for inst in 0..10u64 {
        let seed = 7_700 + inst;
        let model = sample_topic_model::<f64>(3, 12, 1.0, seed).unwrap().with_length(LengthSpec::Fixed { length: 6 }).unwrap();
        let mut rng = stream_rng(seed, 1);
        let set = LandmarkSet::new(
            &model,
            sample_landmarks(&model, 200, 3, &mut rng),
            Basis::SingleTopic { num_topics: 3 },
            LandmarkStrategy::Sampled,
        )
        .unwrap();
        let arch = Architecture::Pair { vocab: 12, hidden: vec![32], batch_norm: false, dropout: false, encoding: InputEncoding::Counts };
        let mut stream = ResamplingStream::new(
            DataSource::Simulation { model: model.clone(), docs_per_resample: 2000 },
            ResampleSchedule::every(1).unwrap(),
            Scheme::PairedPermutation,
            SplitMode::RandomPartition,
            seed,
        );
        let cfg = TrainConfig { epochs: 10, batch_size: 64, optimizer: RmsPropConfig { lr: 1e-3, ..Default::default() }, ..Default::default() };
        let scorer = train(arch.build::<f64>(seed).unwrap(), &mut stream, None, &cfg, seed, &mut |_, _, _| {}).unwrap().model;
        let eval_corpus = sample_corpus(&model, 2000, seed + 1).documents;
        let contrastive = build_paired_permutation(&eval_corpus, SplitMode::RandomPartition, seed + 2).unwrap().pairs;
        let halves = |n: usize, s: u64| -> Vec<Document> {
            let mut r = stream_rng(s, 0);
            sample_corpus(&model, n, s).documents.iter().map(|d| split_document(d, SplitMode::RandomPartition, &mut r).unwrap().first_half).collect()
        };
        let (fit, eval) = (halves(800, seed + 3), halves(800, seed + 4));
        let theta: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let clamp = Clamp { floor: 1e-6, f_max: f_max_from_p_min(set.min_marginal()) };
        let rep = verify_error_bound(
            &model,
            &scorer,
            &set,
            &theta,
            0.05,
            clamp,
            BoundSamples { contrastive: &contrastive, fit_docs: &fit, eval_docs: &eval },
        )
        .unwrap();
        if rep.holds && rep.notes.is_empty() {
            held += 1;
        }
        lines.push(format!("R={:.2e}<=B={:.2e}", rep.risk, rep.bound));
    }
    outcome(held == 10, format!("{held}/10 instances hold [{}]", lines.join(", ")))
}

fn c8_second_moment() -> Outcome {
    let mut worst = f64::INFINITY;
    let mut disagreement = 0.0f64;
    for inst in 0..10u64 {
        let seed = 8_800 + inst;
        let k = 2 + (inst as usize % 4);
        let v = 3 * k + 5;
        let a_min = 0.2;
        let m = (1.0 / a_min as f64).ceil() as usize;
        let model = fixed(anchored_rows(k, v, a_min, seed), PriorSpec::uniform_pure_topic(k), 2 * m);
        let landmarks = sample_landmarks(&model, 2000, m, &mut stream_rng(seed, 3));
        let lib = second_moment_min_eigenvalue(&model, &landmarks).unwrap();
        // same matrix from plain products
        let mut s = Array2::<f64>::zeros((k, k));
        for l in &landmarks {
            let psi: Vec<f64> = (0..k).map(|t| l.tokens.iter().map(|&w| model.word_prob(t, w)).product::<f64>()).collect();
            let p: f64 = psi.iter().sum::<f64>() / k as f64;
            for i in 0..k {
                for j in 0..k {
                    s[[i, j]] += psi[i] * psi[j] / (p * p) / landmarks.len() as f64;
                }
            }
        }
        disagreement = disagreement.max((min_eigenvalue_symmetric(&s) - lib).abs() / lib.abs().max(1.0));
        worst = worst.min(lib);
    }
    outcome(
        worst >= 0.5 && disagreement < 1e-9,
        format!("10 anchored models (a_min 0.2, m 5, M 2000): min eigenvalue {worst:.3} (need >= 0.5), route disagreement {disagreement:.1e}"),
    )
}

fn sweep_base() -> SimulationConfig {
    SimulationConfig {
        num_topics: 5,
        vocab_size: 200,
        mean_length: 20.0,
        docs_per_resample: 2500,
        embed_dim: 32,
        train: TrainConfig {
            epochs: 30,
            batch_size: 64,
            optimizer: RmsPropConfig { lr: 1e-3, ..Default::default() },
            ..Default::default()
        },
        holdout_docs: 500,
        landmarks: 1000,
        test_docs: 1000,
        hidden: vec![64, 64, 64],
        ..Default::default()
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, var.sqrt())
}

fn c9_recovery_trends() -> Outcome {
    let spec = SweepSpec { alphas: vec![1.0, 5.0, 10.0], rates: vec![0.1, 1.0], widths: vec![64, 128], seeds: vec![1, 2, 3] };
    let rows = run_sweep::<f32>(&sweep_base(), &spec, |r| {
        eprintln!(
            "    alpha={:<4} r={:<4} width={:<4} seed={} acc={:.3} oracle={:.3}",
            r.alpha, r.rate, r.width, r.seed, r.accuracy, r.oracle_accuracy
        )
    })
    .unwrap();
    let pick = |f: &dyn Fn(&doccontrast::experiment::SweepRow) -> bool| -> Vec<f64> {
        rows.iter().filter(|r| f(r)).map(|r| r.accuracy).collect()
    };
    let by_alpha: Vec<f64> = spec.alphas.iter().map(|&a| mean_sd(&pick(&|r| r.alpha == a)).0).collect();
    let a_ok = by_alpha[0] > 0.6;
    let b_ok = by_alpha.windows(2).all(|w| w[1] <= w[0]);
    let mut c_ok = true;
    let mut c_parts = Vec::new();
    for &a in &spec.alphas {
        for &w in &spec.widths {
            let (hi, s_hi) = mean_sd(&pick(&|r| r.alpha == a && r.width == w && r.rate == 1.0));
            let (lo, s_lo) = mean_sd(&pick(&|r| r.alpha == a && r.width == w && r.rate == 0.1));
            let pooled = ((s_hi * s_hi + s_lo * s_lo) / 2.0).sqrt();
            c_ok &= hi >= lo - pooled;
            c_parts.push(format!("a{a}/w{w}: {hi:.3} vs {lo:.3}"));
        }
    }
    outcome(
        a_ok && b_ok && c_ok,
        format!(
            "mean acc by alpha {:?} ((a) {} (b) {}); r=1.0 vs r=0.1 ((c) {}): {}",
            by_alpha.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>(),
            if a_ok { "ok" } else { "FAIL" },
            if b_ok { "ok" } else { "FAIL" },
            if c_ok { "ok" } else { "FAIL" },
            c_parts.join(", ")
        ),
    )
}

fn c10_surrogacy() -> Outcome {
    let cfg = SimulationConfig {
        alpha: 5.0,
        rate: 1.0,
        docs_per_resample: 2000,
        train: TrainConfig {
            epochs: 20,
            checkpoints: vec![0, 1, 2, 3, 5, 7, 10, 14, 19],
            ..sweep_base().train
        },
        ..sweep_base()
    };
    let evals = run_checkpoint_probes::<f32>(&cfg, 300, 1e-3, 10).unwrap();
    let loss: Vec<f64> = evals.iter().map(|e| e.holdout_loss).collect();
    let acc: Vec<f64> = evals.iter().map(|e| e.probe_accuracy).collect();
    let rho = spearman(&loss, &acc);
    outcome(
        evals.len() >= 8 && rho <= -0.7,
        format!(
            "{} checkpoints, Spearman(holdout loss, probe accuracy) = {rho:.3} (need <= -0.7); acc {:?}",
            evals.len(),
            acc.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>()
        ),
    )
}

fn c11_tv_separation() -> Outcome {
    let mut means = Vec::new();
    let mut disagreement = 0.0f64;
    for &alpha in &[1.0, 3.0, 10.0] {
        let mut total = 0.0;
        for s in 0..20u64 {
            let model = sample_topic_model::<f64>(5, 200, alpha, 11_000 + s).unwrap();
            let tv = topic_tv_separation(&model).unwrap();
            let rows = model.word_dists();
            let mut naive = 0.0;
            let mut pairs = 0;
            for i in 0..rows.len() {
                for j in i + 1..rows.len() {
                    naive += 0.5 * rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b).abs()).sum::<f64>();
                    pairs += 1;
                }
            }
            disagreement = disagreement.max((tv - naive / pairs as f64).abs());
            total += tv;
        }
        means.push(total / 20.0);
    }
    let ok = means.windows(2).all(|w| w[1] < w[0]) && disagreement < 1e-12;
    outcome(ok, format!("mean TV at alpha 1/3/10 = {:.3}/{:.3}/{:.3}", means[0], means[1], means[2]))
}

fn main() {
    // (name, check, runtime budget in seconds)
    let criteria: [(&str, fn() -> Outcome, Option<f64>); 11] = [
        ("likelihood factorization", c1_factorization, Some(60.0)),
        ("g* route consistency", c2_g_star_routes, Some(120.0)),
        ("anchor landmark exactness", c3_anchor_exactness, Some(120.0)),
        ("single-topic decode", c4_single_topic_decode, Some(60.0)),
        ("analytic gradients", c5_gradients, Some(120.0)),
        ("Bayes-loss convergence", c6_bayes_loss, Some(300.0)),
        ("error bound soundness", c7_error_bound, Some(600.0)),
        ("landmark second-moment eigenvalue", c8_second_moment, Some(60.0)),
        ("topic recovery trends", c9_recovery_trends, Some(1800.0)),
        ("loss/probe-accuracy surrogacy", c10_surrogacy, None),
        ("TV separation against alpha", c11_tv_separation, Some(60.0)),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let secs = start.elapsed().as_secs_f64();
        let budget = *budget;
        let in_time = budget.is_none_or(|b| secs <= b);
        let pass = o.pass && in_time;
        let verdict = if pass { "PASS" } else { "FAIL" };
        failed += usize::from(!pass);
        let limit = budget.map(|b| format!(" of {b:.0}s")).unwrap_or_default();
        let late = if in_time { "" } else { " over the runtime budget" };
        println!("{verdict} {id:>2} {name}: {} [{secs:.1}s{limit}{late}]", o.detail);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
