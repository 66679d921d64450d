//! End-to-end simulation runs: topic recovery through landmark decoding,
//! parameter sweeps over it, and loss/probe-accuracy tracking across
//! training checkpoints.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contrastive_data::{
    build_paired_permutation, DataError, DataSource, ResampleSchedule, ResamplingStream, Scheme,
};
use crate::embedding::{landmark_embed_matrix, tower_embed_matrix, Clamp, EmbedError, DEFAULT_F_MAX};
use crate::learner::{
    train, Architecture, Batch, ContrastiveModel, EpochRecord, InputEncoding, LearnError, Learner, RmsPropConfig,
    TrainConfig,
};
use crate::oracle::{atom_posterior, sample_landmarks, Basis, LandmarkSet, LandmarkStrategy, OracleError};
use crate::probe_eval::{accuracy, argmax, fit_classifier, map_topic_recovery, topic_tv_separation, EvalError};
use crate::rng::{derive_seed, stream_rng, tags};
use crate::scalar::Real;
use crate::topic_model::{sample_corpus, sample_topic_model, split_document, Document, LengthSpec, ModelError, SplitMode, TopicModel};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid simulation settings: {0}")]
    Config(String),
}

/// One topic-recovery simulation: single-topic model with Dirichlet(alpha/K)
/// topics and Poisson lengths, bilinear towers trained on resampled
/// contrastive data, MAP topics decoded from landmark embeddings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub num_topics: usize,
    pub vocab_size: usize,
    pub alpha: f64,
    pub mean_length: f64,
    /// Fresh documents drawn at each resample.
    pub docs_per_resample: usize,
    /// Resampling rate r; a fresh dataset every round(1/r) epochs.
    pub rate: f64,
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    pub batch_norm: bool,
    pub dropout: bool,
    pub train: TrainConfig,
    pub holdout_docs: usize,
    pub landmarks: usize,
    pub test_docs: usize,
    pub f_max: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            num_topics: 5,
            vocab_size: 200,
            alpha: 1.0,
            mean_length: 20.0,
            docs_per_resample: 2500,
            rate: 1.0,
            hidden: vec![64, 64, 64],
            embed_dim: 32,
            batch_norm: true,
            dropout: false,
            train: TrainConfig {
                epochs: 30,
                batch_size: 64,
                optimizer: RmsPropConfig { lr: 1e-3, ..Default::default() },
                ..Default::default()
            },
            holdout_docs: 500,
            landmarks: 1000,
            test_docs: 1000,
            f_max: DEFAULT_F_MAX,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.into()));
        if self.num_topics < 2 {
            return bad("need at least two topics");
        }
        if !(self.rate > 0.0 && self.rate <= 1.0) {
            return bad("rate must lie in (0, 1]");
        }
        if self.docs_per_resample < 2 || self.holdout_docs < 2 {
            return bad("need at least two documents per dataset");
        }
        if self.landmarks < self.num_topics {
            return bad("need at least one landmark per topic");
        }
        if self.test_docs == 0 {
            return bad("need test documents");
        }
        if self.mean_length < 2.0 {
            return bad("mean length must be at least 2");
        }
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        Architecture::Bilinear {
            vocab: self.vocab_size,
            hidden: self.hidden.clone(),
            dim: self.embed_dim,
            batch_norm: self.batch_norm,
            dropout: self.dropout,
            encoding: InputEncoding::Counts,
        }
    }

    /// Landmark length: the typical half-document length.
    pub fn landmark_length(&self) -> usize {
        ((self.mean_length / 2.0).floor() as usize).max(1)
    }
}

/// Ground-truth model, contrastive holdout set and test documents of one
/// simulation seed.
#[derive(Clone, Debug)]
pub struct SimulationWorld<T> {
    pub model: TopicModel<T>,
    pub holdout: Batch<T>,
    /// First halves of the test documents.
    pub test_halves: Vec<Document>,
    pub test_topics: Vec<usize>,
    pub landmarks: LandmarkSet<T>,
}

pub fn build_world<T: Real>(cfg: &SimulationConfig, seed: u64) -> Result<SimulationWorld<T>, ExperimentError> {
    cfg.validate()?;
    let model = sample_topic_model::<T>(cfg.num_topics, cfg.vocab_size, cfg.alpha, derive_seed(seed, tags::TOPICS))?
        .with_length(LengthSpec::Poisson { mean: cfg.mean_length })?;
    let holdout_docs = sample_corpus(&model, cfg.holdout_docs, derive_seed(seed, tags::HOLDOUT)).documents;
    let holdout_ds = build_paired_permutation(&holdout_docs, SplitMode::RandomPartition, derive_seed(seed, tags::HOLDOUT))?;
    let holdout = Batch::from_pairs(&holdout_ds.pairs, cfg.vocab_size, InputEncoding::Counts)?;
    let test = sample_corpus(&model, cfg.test_docs, derive_seed(seed, tags::TEST));
    let mut rng = stream_rng(derive_seed(seed, tags::TEST), u64::MAX);
    let test_halves = test
        .documents
        .iter()
        .map(|d| split_document(d, SplitMode::RandomPartition, &mut rng).map(|s| s.first_half))
        .collect::<Result<Vec<_>, _>>()?;
    let test_topics = test.true_topics.expect("pure-topic prior");
    let mut lrng = stream_rng(derive_seed(seed, tags::LANDMARKS), 0);
    let docs = sample_landmarks(&model, cfg.landmarks, cfg.landmark_length(), &mut lrng);
    let landmarks = LandmarkSet::new(&model, docs, Basis::SingleTopic { num_topics: cfg.num_topics }, LandmarkStrategy::Sampled)?;
    Ok(SimulationWorld { model, holdout, test_halves, test_topics, landmarks })
}

/// MAP accuracy of a scorer's decoded landmark embeddings on the test halves.
pub fn decoded_accuracy<T: Real>(world: &SimulationWorld<T>, scorer: &Learner<T>, f_max: f64) -> Result<f64, ExperimentError> {
    let phi = landmark_embed_matrix(scorer, world.landmarks.landmarks(), &world.test_halves, Clamp::new(f_max))?;
    let decoded = world.landmarks.decode_matrix(&phi)?;
    Ok(map_topic_recovery(&decoded, world.landmarks.basis().topic_block(), &world.test_topics)?)
}

/// MAP accuracy of the exact posterior, the ceiling for any learner.
pub fn oracle_accuracy<T: Real>(world: &SimulationWorld<T>) -> Result<f64, ExperimentError> {
    let predicted = world
        .test_halves
        .iter()
        .map(|d| Ok(argmax(atom_posterior(&world.model, d)?)))
        .collect::<Result<Vec<_>, OracleError>>()?;
    Ok(accuracy(&predicted, &world.test_topics))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub accuracy: f64,
    pub oracle_accuracy: f64,
    pub tv_separation: f64,
    pub datasets_built: usize,
    pub trace: Vec<EpochRecord>,
}

pub fn run_topic_recovery<T: Real>(cfg: &SimulationConfig, seed: u64) -> Result<(SimulationResult, Learner<T>), ExperimentError> {
    let world = build_world::<T>(cfg, seed)?;
    let mut stream = ResamplingStream::new(
        DataSource::Simulation { model: world.model.clone(), docs_per_resample: cfg.docs_per_resample },
        ResampleSchedule::from_rate(cfg.rate)?,
        Scheme::PairedPermutation,
        SplitMode::RandomPartition,
        derive_seed(seed, tags::DATASET),
    );
    let init = cfg.architecture().build::<T>(seed)?;
    let out = train(init, &mut stream, Some(&world.holdout), &cfg.train, seed, &mut |_, _, _| {})?;
    let result = SimulationResult {
        accuracy: decoded_accuracy(&world, &out.model, cfg.f_max)?,
        oracle_accuracy: oracle_accuracy(&world)?,
        tv_separation: topic_tv_separation(&world.model)?,
        datasets_built: stream.datasets_built(),
        trace: out.trace,
    };
    Ok((result, out.model))
}

/// Grid of simulation settings, each run once per seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub alphas: Vec<f64>,
    pub rates: Vec<f64>,
    pub widths: Vec<usize>,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub rate: f64,
    pub width: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub oracle_accuracy: f64,
    pub tv_separation: f64,
    pub final_holdout_loss: Option<f64>,
    pub datasets_built: usize,
}

/// Every hidden layer of `base` is set to `width` for the width axis.
pub fn run_sweep<T: Real>(
    base: &SimulationConfig,
    spec: &SweepSpec,
    mut progress: impl FnMut(&SweepRow),
) -> Result<Vec<SweepRow>, ExperimentError> {
    let mut rows = Vec::new();
    for &alpha in &spec.alphas {
        for &rate in &spec.rates {
            for &width in &spec.widths {
                for &seed in &spec.seeds {
                    let cfg = SimulationConfig {
                        alpha,
                        rate,
                        hidden: vec![width; base.hidden.len().max(1)],
                        ..base.clone()
                    };
                    let (res, _) = run_topic_recovery::<T>(&cfg, seed)?;
                    let row = SweepRow {
                        alpha,
                        rate,
                        width,
                        seed,
                        accuracy: res.accuracy,
                        oracle_accuracy: res.oracle_accuracy,
                        tv_separation: res.tv_separation,
                        final_holdout_loss: res.trace.last().and_then(|r| r.holdout_loss),
                        datasets_built: res.datasets_built,
                    };
                    progress(&row);
                    rows.push(row);
                }
            }
        }
    }
    Ok(rows)
}

/// Holdout contrastive loss and linear-probe accuracy at one checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEval {
    pub epoch: usize,
    pub holdout_loss: f64,
    pub probe_accuracy: f64,
}

/// Train once and, at each configured checkpoint, fit a topic classifier on
/// `probe_train` tower embeddings and score it on the test halves.
pub fn run_checkpoint_probes<T: Real>(
    cfg: &SimulationConfig,
    probe_train: usize,
    ridge: f64,
    seed: u64,
) -> Result<Vec<CheckpointEval>, ExperimentError> {
    let world = build_world::<T>(cfg, seed)?;
    let labeled = sample_corpus(&world.model, probe_train, derive_seed(seed, tags::PROBE));
    let mut rng = stream_rng(derive_seed(seed, tags::PROBE), u64::MAX);
    let labeled_halves = labeled
        .documents
        .iter()
        .map(|d| split_document(d, SplitMode::RandomPartition, &mut rng).map(|s| s.first_half))
        .collect::<Result<Vec<_>, _>>()?;
    let labels = labeled.true_topics.expect("pure-topic prior");
    let mut stream = ResamplingStream::new(
        DataSource::Simulation { model: world.model.clone(), docs_per_resample: cfg.docs_per_resample },
        ResampleSchedule::from_rate(cfg.rate)?,
        Scheme::PairedPermutation,
        SplitMode::RandomPartition,
        derive_seed(seed, tags::DATASET),
    );
    let mut evals = Vec::new();
    let mut failure: Option<ExperimentError> = None;
    let probe = |record: &EpochRecord, model: &Learner<T>| -> Result<CheckpointEval, ExperimentError> {
        let Learner::Bilinear(m) = model else {
            return Err(ExperimentError::Config("checkpoint probes need a bilinear model".into()));
        };
        let x = tower_embed_matrix(m, &labeled_halves)?;
        let xt = tower_embed_matrix(m, &world.test_halves)?;
        let clf = fit_classifier(&x, &labels, cfg.num_topics, ridge)?;
        Ok(CheckpointEval {
            epoch: record.epoch,
            holdout_loss: record.holdout_loss.expect("holdout supplied"),
            probe_accuracy: accuracy(&clf.predict_class(&xt), &world.test_topics),
        })
    };
    let init = cfg.architecture().build::<T>(seed)?;
    // epoch "-1": the untrained model
    let mut eval_rng = stream_rng(0, 0);
    let l0 = init.loss(&world.holdout, crate::learner::Mode::Eval, &mut eval_rng)?.to_f64_lossy();
    let start = EpochRecord { epoch: 0, train_loss: f64::NAN, holdout_loss: Some(l0), lr: 0.0 };
    let mut first = probe(&start, &init)?;
    first.epoch = 0;
    evals.push(first);
    train(init, &mut stream, Some(&world.holdout), &cfg.train, seed, &mut |rec, model, ckpt| {
        if ckpt && failure.is_none() {
            match probe(rec, model) {
                Ok(mut e) => {
                    e.epoch = rec.epoch + 1;
                    evals.push(e);
                }
                Err(e) => failure = Some(e),
            }
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(evals),
    }
}
