//! One function per subcommand. Each reads its inputs from the run
//! directory, writes through [`RunDir`] so outputs land in the manifest, and
//! returns `Some(message)` when a property check fails.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use anyhow::{bail, Context, Result};
use doccontrast::checks::{checks_to_csv, run_oracle_checks};
use doccontrast::contrastive_data::{
    build_paired_permutation, ContrastiveDataset, DataSource, ResampleSchedule, ResamplingStream,
};
use doccontrast::embedding::{
    f_max_from_p_min, landmark_embed_matrix, oracle_embed_matrix, tower_embed_matrix, Clamp, EmbeddingMode,
    DEFAULT_F_MAX,
};
use doccontrast::experiment::{run_sweep, SweepRow};
use doccontrast::learner::{train, Architecture, Batch, ContrastiveModel, LearnError, Learner};
use doccontrast::oracle::{anchor_landmarks, atom_posterior, sample_landmarks, Basis, LandmarkSet, LandmarkStrategy};
use doccontrast::persist::{
    decode_csv, loss_trace_csv, matrix_csv, read_checkpoint, read_corpus, read_json, read_landmark_file,
    read_matrix_csv, read_topic_model, sha256_file, write_checkpoint, write_corpus, write_landmarks,
    write_topic_model, EmbeddingSidecar,
};
use doccontrast::probe_eval::{
    accuracy, argmax, learning_curve, map_topic_recovery, topic_tv_separation, verify_error_bound, BoundSamples,
    EvalReport, LabeledSplit, CI_METHOD,
};
use doccontrast::rng::{derive_seed, stream_rng, tags};
use doccontrast::topic_model::{
    sample_corpus, sample_topic_model, split_document, Document, LengthSpec, PriorSpec, TopicModel,
};
use doccontrast::Real;
use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, LearnerKind, PriorConfig, SourceKind, Stage, StrategyKind};
use crate::run::RunDir;

/// Files a stage must not silently overwrite.
pub fn outputs(stage: Stage) -> &'static [&'static str] {
    match stage {
        Stage::Simulate => &["model.json", "corpus.jsonl", "test.jsonl", "simulate.json"],
        Stage::OracleCheck => &["oracle_checks.csv"],
        Stage::BuildData => &["dataset.jsonl", "holdout.jsonl", "data.json"],
        Stage::Train => &["checkpoint.bin", "loss_trace.csv", "train.json"],
        Stage::Embed => &["landmarks.json", "landmarks.bin", "embeddings.csv", "embeddings.json", "decoded.csv", "embed.json"],
        Stage::Eval => &["eval.csv", "eval.json", "sweep.csv"],
        Stage::VerifyBound => &["bound.json"],
        Stage::Report => crate::report::OUTPUTS,
    }
}

pub fn execute<T: Real>(stage: Stage, cfg: &ExperimentConfig, run: &mut RunDir, config_dir: &Path) -> Result<Option<String>> {
    match stage {
        Stage::Simulate => simulate(cfg, run),
        Stage::OracleCheck => oracle_check(cfg, run),
        Stage::BuildData => build_data::<T>(cfg, run),
        Stage::Train => train_stage::<T>(cfg, run),
        Stage::Embed => embed::<T>(cfg, run),
        Stage::Eval => eval::<T>(cfg, run),
        Stage::VerifyBound => verify_bound::<T>(cfg, run),
        Stage::Report => crate::report::report(cfg, run, config_dir),
    }
}

pub fn build_model(cfg: &ExperimentConfig) -> Result<TopicModel<f64>> {
    let m = &cfg.model;
    let k = cfg.num_topics();
    let length = match m.fixed_length {
        Some(length) => LengthSpec::Fixed { length },
        None => LengthSpec::Poisson { mean: m.mean_length },
    };
    let rows = match &m.word_dists {
        Some(rows) => rows.clone(),
        None => sample_topic_model::<f64>(k, m.vocab_size, m.alpha, derive_seed(cfg.seed(), tags::TOPICS))?
            .word_dists()
            .to_vec(),
    };
    let prior = match &m.prior {
        PriorConfig::PureTopic { probs: None } => PriorSpec::uniform_pure_topic(k),
        PriorConfig::PureTopic { probs: Some(p) } => PriorSpec::pure_topic(p.clone()),
        PriorConfig::FiniteSupport { atoms, probs } => PriorSpec::FiniteSupport { atoms: atoms.clone(), probs: probs.clone() },
        PriorConfig::Dirichlet { concentration } => PriorSpec::SymmetricDirichlet { concentration: *concentration },
    };
    TopicModel::new(rows, prior, length).context("invalid topic model")
}

fn load_model<T: Real>(run: &RunDir) -> Result<TopicModel<T>> {
    Ok(read_topic_model(&run.path("model.json"))?)
}

fn read_dataset(path: &Path) -> Result<ContrastiveDataset> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(ContrastiveDataset::read_jsonl(BufReader::new(f))?)
}

fn write_dataset(run: &mut RunDir, name: &str, ds: &ContrastiveDataset) -> Result<()> {
    let p = run.record(name);
    let f = File::create(&p).with_context(|| format!("creating {}", p.display()))?;
    Ok(ds.write_jsonl(BufWriter::new(f))?)
}

/// Training documents: the corpus minus its holdout tail.
fn training_docs(cfg: &ExperimentConfig, run: &RunDir) -> Result<(Vec<Document>, Vec<Document>)> {
    let mut docs = read_corpus(&run.path("corpus.jsonl"))?.documents;
    let h = cfg.data.holdout_docs;
    if docs.len() < h + 2 {
        bail!("corpus has {} documents; need {} holdout plus at least two for training", docs.len(), h);
    }
    let holdout = docs.split_off(docs.len() - h);
    Ok((docs, holdout))
}

fn make_stream<T: Real>(cfg: &ExperimentConfig, model: &TopicModel<T>, train_docs: Vec<Document>) -> Result<ResamplingStream<T>> {
    let source = match cfg.data.source {
        SourceKind::Corpus => DataSource::Corpus(train_docs),
        SourceKind::Simulation => DataSource::Simulation {
            model: model.clone(),
            docs_per_resample: cfg.data.docs_per_resample.unwrap_or(train_docs.len()),
        },
    };
    Ok(ResamplingStream::new(
        source,
        ResampleSchedule::from_rate(cfg.data.rate)?,
        cfg.data.scheme,
        cfg.data.split,
        derive_seed(cfg.seed(), tags::DATASET),
    ))
}

/// First halves of the test documents, split the same way in every stage.
fn test_halves(cfg: &ExperimentConfig, docs: &[Document]) -> Result<Vec<Document>> {
    let mut rng = stream_rng(derive_seed(cfg.seed(), tags::TEST), u64::MAX);
    Ok(docs
        .iter()
        .map(|d| split_document(d, cfg.data.split, &mut rng).map(|s| s.first_half))
        .collect::<Result<_, _>>()?)
}

fn landmark_set<T: Real>(cfg: &ExperimentConfig, model: &TopicModel<T>) -> Result<LandmarkSet<T>> {
    match cfg.embedding.strategy {
        StrategyKind::Sampled => {
            if !model.prior().is_pure_topic() {
                bail!("sampled landmarks decode over the single-topic basis and need a pure-topic prior; use strategy = \"anchor\"");
            }
            let mut rng = stream_rng(derive_seed(cfg.seed(), tags::LANDMARKS), 0);
            let docs = sample_landmarks(model, cfg.embedding.landmarks, cfg.landmark_length(), &mut rng);
            let basis = Basis::SingleTopic { num_topics: model.num_topics() };
            Ok(LandmarkSet::new(model, docs, basis, LandmarkStrategy::Sampled)?)
        }
        StrategyKind::Anchor => Ok(anchor_landmarks(model, cfg.embedding.anchor_degree)?),
    }
}

fn clamp_for<T: Real>(cfg: &ExperimentConfig, set: &LandmarkSet<T>) -> Result<Clamp> {
    let f_max = if cfg.embedding.f_max_from_p_min {
        f_max_from_p_min(set.min_marginal().to_f64_lossy())
    } else {
        cfg.embedding.f_max.unwrap_or(DEFAULT_F_MAX)
    };
    if !(f_max < 1.0) {
        bail!("f_max = {f_max} is not below 1; the smallest landmark marginal is too small to set it");
    }
    Ok(Clamp::new(f_max))
}

fn simulate(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<Option<String>> {
    #[derive(Serialize)]
    struct Summary {
        num_topics: usize,
        vocab_size: usize,
        docs: usize,
        test_docs: usize,
        mean_doc_length: f64,
        tv_separation: Option<f64>,
    }
    let model = build_model(cfg)?;
    let seed = cfg.seed();
    write_topic_model(&run.record("model.json"), &model)?;
    let corpus = sample_corpus(&model, cfg.corpus.docs, derive_seed(seed, tags::CORPUS));
    write_corpus(&run.record("corpus.jsonl"), &corpus)?;
    let test = sample_corpus(&model, cfg.corpus.test_docs, derive_seed(seed, tags::TEST));
    write_corpus(&run.record("test.jsonl"), &test)?;
    let total: usize = corpus.documents.iter().map(Document::len).sum();
    run.write_json(
        "simulate.json",
        &Summary {
            num_topics: model.num_topics(),
            vocab_size: model.vocab_size(),
            docs: corpus.documents.len(),
            test_docs: test.documents.len(),
            mean_doc_length: total as f64 / corpus.documents.len() as f64,
            tv_separation: topic_tv_separation(&model).ok(),
        },
    )?;
    Ok(None)
}

fn oracle_check(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<Option<String>> {
    let model = build_model(cfg)?;
    let results = run_oracle_checks(&model, cfg.oracle_check.max_len, cfg.seed())?;
    run.write_text("oracle_checks.csv", &checks_to_csv(&results))?;
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
    for r in &results {
        eprintln!("{:<28} {:?} (max error {:.2e}, {} comparisons)", r.name, r.status, r.max_error, r.comparisons);
    }
    Ok((!failed.is_empty()).then(|| format!("oracle checks failed: {}", failed.join(", "))))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DataSummary {
    pub train_docs: usize,
    pub holdout_docs: usize,
    pub dataset_pairs: usize,
    pub positives: usize,
    pub negatives: usize,
    pub holdout_pairs: usize,
    pub resample_period: usize,
    pub resample_epochs: Vec<usize>,
}

fn build_data<T: Real>(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<Option<String>> {
    let model = load_model::<T>(run)?;
    let (train_docs, holdout_docs) = training_docs(cfg, run)?;
    let holdout = build_paired_permutation(&holdout_docs, cfg.data.split, derive_seed(cfg.seed(), tags::HOLDOUT))?;
    write_dataset(run, "holdout.jsonl", &holdout)?;
    let n_train = train_docs.len();
    let mut stream = make_stream(cfg, &model, train_docs)?;
    let schedule = stream.schedule();
    let (ds, _) = stream.dataset_for_epoch(0)?;
    let ds = ds.clone();
    write_dataset(run, "dataset.jsonl", &ds)?;
    run.write_json(
        "data.json",
        &DataSummary {
            train_docs: n_train,
            holdout_docs: holdout_docs.len(),
            dataset_pairs: ds.len(),
            positives: ds.positives(),
            negatives: ds.negatives(),
            holdout_pairs: holdout.len(),
            resample_period: schedule.period,
            resample_epochs: schedule.boundaries(cfg.learner.epochs),
        },
    )?;
    Ok(None)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainSummary {
    pub architecture: Architecture,
    pub num_params: usize,
    pub epochs: usize,
    pub initial_loss: f64,
    pub final_train_loss: f64,
    pub final_holdout_loss: Option<f64>,
    pub datasets_built: usize,
    pub checkpoints: Vec<String>,
}

fn train_stage<T: Real>(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<Option<String>> {
    let model = load_model::<T>(run)?;
    let (train_docs, _) = training_docs(cfg, run)?;
    let holdout_ds = read_dataset(&run.path("holdout.jsonl"))?;
    let arch = cfg.architecture();
    let holdout = Batch::<T>::from_pairs(&holdout_ds.pairs, cfg.vocab_size(), cfg.learner.encoding)?;
    let mut stream = make_stream(cfg, &model, train_docs)?;
    let init = arch.build::<T>(derive_seed(cfg.seed(), tags::INIT))?;
    let hash = cfg.stage_hash(Stage::Train);
    let dir = run.path("checkpoints");
    if !cfg.learner.checkpoints.is_empty() {
        std::fs::create_dir_all(&dir)?;
    }
    let mut saved = Vec::new();
    let mut save_err = None;
    let result = train(init, &mut stream, Some(&holdout), &cfg.train_config(), cfg.seed(), &mut |rec, m, ckpt| {
        if ckpt && save_err.is_none() {
            // named by completed epochs
            let name = format!("checkpoints/epoch_{:04}.bin", rec.epoch + 1);
            match write_checkpoint(&dir.join(format!("epoch_{:04}.bin", rec.epoch + 1)), m, rec.epoch + 1, &hash) {
                Ok(()) => saved.push(name),
                Err(e) => save_err = Some(e),
            }
        }
    });
    if let Some(e) = save_err {
        return Err(e.into());
    }
    for name in &saved {
        run.record(name);
    }
    let out = match result {
        Ok(out) => out,
        Err(LearnError::Diverged { epoch, loss, initial, factor, trace }) => {
            run.write_text("loss_trace.csv", &loss_trace_csv(&trace))?;
            return Ok(Some(format!(
                "training diverged at epoch {epoch}: loss {loss:.4} above {factor} x initial {initial:.4}"
            )));
        }
        Err(e) => return Err(e.into()),
    };
    write_checkpoint(&run.record("checkpoint.bin"), &out.model, cfg.learner.epochs, &hash)?;
    run.write_text("loss_trace.csv", &loss_trace_csv(&out.trace))?;
    let last = out.trace.last();
    run.write_json(
        "train.json",
        &TrainSummary {
            architecture: arch,
            num_params: out.model.num_params(),
            epochs: out.trace.len(),
            initial_loss: out.initial_loss,
            final_train_loss: last.map_or(f64::NAN, |r| r.train_loss),
            final_holdout_loss: last.and_then(|r| r.holdout_loss),
            datasets_built: stream.datasets_built(),
            checkpoints: saved,
        },
    )?;
    Ok(None)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmbedSummary {
    pub mode: EmbeddingMode,
    pub landmarks: usize,
    pub basis_size: usize,
    pub rank: usize,
    pub sigma_min: f64,
    pub min_marginal: f64,
    pub f_max: Option<f64>,
    pub documents: usize,
}

fn embed<T: Real>(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<Option<String>> {
    let model = load_model::<T>(run)?;
    let test = read_corpus(&run.path("test.jsonl"))?;
    let halves = test_halves(cfg, &test.documents)?;
    let set = landmark_set(cfg, &model)?;
    write_landmarks(&run.path(""), "landmarks", &set)?;
    run.record("landmarks.json");
    run.record("landmarks.bin");
    let clamp = clamp_for(cfg, &set)?;
    let ckpt = run.path("checkpoint.bin");
    let mode = cfg.embedding.mode;
    let (phi, decoded, f_max, ckpt_hash) = match mode {
        EmbeddingMode::Oracle => {
            let phi = oracle_embed_matrix(&model, set.landmarks(), &halves)?;
            let decoded = set.decode_matrix(&phi)?;
            (phi, Some(decoded), None, None)
        }
        EmbeddingMode::Landmark => {
            let (_, learner) = read_checkpoint::<T>(&ckpt)?;
            let phi = landmark_embed_matrix(&learner, set.landmarks(), &halves, clamp)?;
            let decoded = set.decode_matrix(&phi)?;
            (phi, Some(decoded), Some(clamp.f_max), Some(sha256_file(&ckpt)?))
        }
        EmbeddingMode::Tower => {
            let (_, learner) = read_checkpoint::<T>(&ckpt)?;
            let Learner::Bilinear(m) = learner else {
                bail!("tower embeddings need a bilinear learner");
            };
            (tower_embed_matrix(&m, &halves)?, None, None, Some(sha256_file(&ckpt)?))
        }
    };
    run.write_text("embeddings.csv", &matrix_csv(&phi, "e"))?;
    run.write_json(
        "embeddings.json",
        &EmbeddingSidecar {
            mode,
            rows: phi.nrows(),
            cols: phi.ncols(),
            landmark_ids: if mode == EmbeddingMode::Tower { vec![] } else { (0..set.len()).collect() },
            f_max,
            model_checkpoint_hash: ckpt_hash,
        },
    )?;
    if let Some(d) = &decoded {
        run.write_text("decoded.csv", &decode_csv(d))?;
    }
    run.write_json(
        "embed.json",
        &EmbedSummary {
            mode,
            landmarks: set.len(),
            basis_size: set.basis().len(),
            rank: set.rank(),
            sigma_min: set.min_singular() / (set.len() as f64).sqrt(),
            min_marginal: set.min_marginal().to_f64_lossy(),
            f_max,
            documents: halves.len(),
        },
    )?;
    Ok(None)
}

/// Per-run evaluation summary, read back by `report`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct EvalSummary {
    pub seed: u64,
    pub alpha: f64,
    pub rate: f64,
    pub width: usize,
    pub depth: usize,
    pub learner: Option<LearnerKind>,
    pub map_accuracy: Option<f64>,
    pub oracle_accuracy: Option<f64>,
    pub tv_separation: Option<f64>,
    pub final_holdout_loss: Option<f64>,
    pub ci_method: String,
    pub learning_curve: Vec<EvalReport>,
    /// Rows in `sweep.csv` when the run was a sweep.
    pub sweep_rows: usize,
}

pub const SWEEP_HEADER: &str = "alpha,rate,width,seed,accuracy,oracle_accuracy,tv_separation,final_holdout_loss,datasets_built";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let h = r.final_holdout_loss.map(|v| format!("{v:.10e}")).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{},{}\n",
            r.alpha, r.rate, r.width, r.seed, r.accuracy, r.oracle_accuracy, r.tv_separation, h, r.datasets_built
        ));
    }
    s
}

/// Decoded posteriors from the long `doc_id,basis_index,value` layout.
fn read_decoded(path: &Path) -> Result<Array2<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cells = Vec::new();
    for (i, line) in text.lines().skip(1).filter(|l| !l.is_empty()).enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            bail!("{} line {}: expected 3 fields", path.display(), i + 2);
        }
        cells.push((f[0].parse::<usize>()?, f[1].parse::<usize>()?, f[2].parse::<f64>()?));
    }
    let rows = cells.iter().map(|c| c.0 + 1).max().unwrap_or(0);
    let cols = cells.iter().map(|c| c.1 + 1).max().unwrap_or(0);
    let mut m = Array2::from_elem((rows, cols), f64::NAN);
    for (i, j, v) in cells {
        m[[i, j]] = v;
    }
    if m.iter().any(|v| v.is_nan()) {
        bail!("{} does not cover a full matrix", path.display());
    }
    Ok(m)
}

fn eval<T: Real>(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<Option<String>> {
    let width = cfg.learner.hidden.first().copied().unwrap_or(0);
    let mut summary = EvalSummary {
        seed: cfg.seed(),
        alpha: cfg.model.alpha,
        rate: cfg.data.rate,
        width,
        depth: cfg.learner.hidden.len(),
        learner: Some(cfg.learner.kind),
        ci_method: CI_METHOD.into(),
        ..Default::default()
    };
    if let Some(spec) = &cfg.sweep {
        let rows = run_sweep::<T>(&cfg.simulation_config(), spec, |r| {
            eprintln!("alpha={} r={} width={} seed={} accuracy={:.3}", r.alpha, r.rate, r.width, r.seed, r.accuracy)
        })?;
        run.write_text("sweep.csv", &sweep_csv(&rows))?;
        summary.sweep_rows = rows.len();
        run.write_json("eval.json", &summary)?;
        return Ok(None);
    }

    let sidecar: EmbeddingSidecar = read_json(&run.path("embeddings.json"))?;
    let phi = read_matrix_csv(&run.path("embeddings.csv"))?;
    if phi.nrows() != sidecar.rows || phi.ncols() != sidecar.cols {
        bail!("embeddings.csv is {}x{} but its sidecar says {}x{}", phi.nrows(), phi.ncols(), sidecar.rows, sidecar.cols);
    }
    let model = load_model::<f64>(run)?;
    let test = read_corpus(&run.path("test.jsonl"))?;
    let Some(topics) = test.true_topics.clone() else {
        bail!("test.jsonl has no generating topics; evaluation needs a pure-topic prior");
    };
    if topics.len() != phi.nrows() {
        bail!("{} test topics for {} embedded documents", topics.len(), phi.nrows());
    }

    let mut csv = String::from("task,n_labeled,replicate,accuracy\n");
    if run.path("decoded.csv").exists() {
        let decoded = read_decoded(&run.path("decoded.csv"))?;
        let basis = Basis::from_spec(read_landmark_file(&run.path("landmarks.json"))?.basis);
        let acc = map_topic_recovery(&decoded, basis.topic_block(), &topics)?;
        csv.push_str(&format!("map-recovery,0,0,{acc:.6}\n"));
        summary.map_accuracy = Some(acc);
    }
    let halves = test_halves(cfg, &test.documents)?;
    let predicted = halves.iter().map(|d| Ok(argmax(atom_posterior(&model, d)?))).collect::<Result<Vec<_>>>()?;
    let oracle = accuracy(&predicted, &topics);
    csv.push_str(&format!("oracle-map,0,0,{oracle:.6}\n"));
    summary.oracle_accuracy = Some(oracle);
    summary.tv_separation = topic_tv_separation(&model).ok();

    let half = phi.nrows() / 2;
    let grid: Vec<usize> = cfg.eval.n_grid.clone();
    if let Some(&n) = grid.iter().find(|&&n| n > half || n == 0) {
        bail!("eval.n_grid entry {n} must lie in 1..={half} (half the embedded documents)");
    }
    let pool = phi.slice(s![..half, ..]).to_owned();
    let held = phi.slice(s![half.., ..]).to_owned();
    let reports = learning_curve(
        LabeledSplit {
            pool: &pool,
            pool_labels: &topics[..half],
            test: &held,
            test_labels: &topics[half..],
            classes: model.num_topics(),
        },
        &grid,
        cfg.eval.replicates,
        cfg.eval.ridge,
        cfg.seed(),
    )?;
    for r in &reports {
        for (i, a) in r.accuracies.iter().enumerate() {
            csv.push_str(&format!("{},{},{},{a:.6}\n", r.task, r.n_labeled, i));
        }
    }
    summary.learning_curve = reports;
    if run.path("train.json").exists() {
        let t: TrainSummary = read_json(&run.path("train.json"))?;
        summary.final_holdout_loss = t.final_holdout_loss;
    }
    run.write_text("eval.csv", &csv)?;
    run.write_json("eval.json", &summary)?;
    Ok(None)
}

fn verify_bound<T: Real>(cfg: &ExperimentConfig, run: &mut RunDir) -> Result<Option<String>> {
    let model = load_model::<T>(run)?;
    let (_, learner) = read_checkpoint::<T>(&run.path("checkpoint.bin"))?;
    let file = read_landmark_file(&run.path("landmarks.json"))?;
    let docs = file.landmarks.into_iter().map(Document::new).collect();
    let set = LandmarkSet::new(&model, docs, Basis::from_spec(file.basis), file.strategy)?;
    let n = set.basis().len();
    let theta: Vec<T> = match &cfg.eval.theta {
        Some(t) if t.len() != n => bail!("eval.theta has {} entries; the basis has {n}", t.len()),
        Some(t) => t.iter().map(|&v| T::from_f64_lossy(v)).collect(),
        None => (0..n).map(|i| if i == 0 { T::one() } else { T::zero() }).collect(),
    };
    let base = derive_seed(cfg.seed(), tags::PROBE);
    let pairs_docs = sample_corpus(&model, cfg.eval.bound_pairs_docs, derive_seed(base, 1)).documents;
    let pairs = build_paired_permutation(&pairs_docs, cfg.data.split, derive_seed(base, 2))?.pairs;
    let halves = |count: usize, tag: u64| -> Result<Vec<Document>> {
        let docs = sample_corpus(&model, count, derive_seed(base, tag)).documents;
        let mut rng = stream_rng(derive_seed(base, tag), u64::MAX);
        Ok(docs.iter().map(|d| split_document(d, cfg.data.split, &mut rng).map(|s| s.first_half)).collect::<Result<_, _>>()?)
    };
    let (fit, evaluation) = (halves(cfg.eval.bound_fit_docs, 3)?, halves(cfg.eval.bound_eval_docs, 4)?);
    let clamp = clamp_for(cfg, &set)?;
    let report = verify_error_bound(
        &model,
        &learner,
        &set,
        &theta,
        cfg.eval.delta,
        clamp,
        BoundSamples { contrastive: &pairs, fit_docs: &fit, eval_docs: &evaluation },
    )?;
    run.write_json("bound.json", &report)?;
    eprintln!("risk {:.4e} <= bound {:.4e}: {}", report.risk, report.bound, report.holds);
    for note in &report.notes {
        eprintln!("note: {note}");
    }
    Ok((!report.holds).then(|| format!("measured risk {:.4e} exceeds the bound {:.4e}", report.risk, report.bound)))
}
