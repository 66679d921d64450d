//! Experiment configuration: one TOML or JSON file per run directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use doccontrast::contrastive_data::Scheme;
use doccontrast::embedding::{EmbeddingMode, DEFAULT_F_MAX};
use doccontrast::experiment::{SimulationConfig, SweepSpec};
use doccontrast::learner::{Architecture, InputEncoding, RmsPropConfig, TrainConfig};
use doccontrast::persist::sha256_bytes;
use doccontrast::topic_model::SplitMode;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum PriorConfig {
    /// One topic per document; uniform over topics unless `probs` is given.
    PureTopic {
        #[serde(default)]
        probs: Option<Vec<f64>>,
    },
    FiniteSupport { atoms: Vec<Vec<f64>>, probs: Vec<f64> },
    Dirichlet { concentration: f64 },
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig::PureTopic { probs: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub num_topics: usize,
    pub vocab_size: usize,
    /// Dirichlet concentration for the sampled topic-word rows.
    pub alpha: f64,
    pub mean_length: f64,
    /// Overrides the Poisson length law.
    pub fixed_length: Option<usize>,
    pub prior: PriorConfig,
    /// Explicit topic-word rows; replaces sampling when present.
    pub word_dists: Option<Vec<Vec<f64>>>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            num_topics: 5,
            vocab_size: 200,
            alpha: 1.0,
            mean_length: 20.0,
            fixed_length: None,
            prior: PriorConfig::default(),
            word_dists: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub docs: usize,
    pub test_docs: usize,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self { docs: 2500, test_docs: 1000 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    /// Fresh documents from the model at every resample.
    #[default]
    Simulation,
    /// The simulated training corpus, re-split and re-paired at every resample.
    Corpus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub scheme: Scheme,
    pub split: SplitMode,
    pub source: SourceKind,
    /// Resampling rate r in (0, 1].
    pub rate: f64,
    /// Documents per resample for the simulation source; defaults to the
    /// training part of the corpus.
    pub docs_per_resample: Option<usize>,
    /// Documents at the end of the corpus kept for the holdout pairs.
    pub holdout_docs: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            scheme: Scheme::PairedPermutation,
            split: SplitMode::RandomPartition,
            source: SourceKind::Simulation,
            rate: 1.0,
            docs_per_resample: None,
            holdout_docs: 500,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    Pair,
    #[default]
    Bilinear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerSection {
    pub kind: LearnerKind,
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    pub batch_norm: bool,
    pub dropout: bool,
    pub encoding: InputEncoding,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: RmsPropConfig,
    /// Epochs after which an intermediate checkpoint is written.
    pub checkpoints: Vec<usize>,
}

impl Default for LearnerSection {
    fn default() -> Self {
        Self {
            kind: LearnerKind::Bilinear,
            hidden: vec![64, 64, 64],
            embed_dim: 32,
            batch_norm: true,
            dropout: false,
            encoding: InputEncoding::Counts,
            epochs: 30,
            batch_size: 64,
            optimizer: RmsPropConfig { lr: 1e-3, ..Default::default() },
            checkpoints: vec![],
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    #[default]
    Sampled,
    Anchor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    pub mode: EmbeddingMode,
    pub landmarks: usize,
    pub strategy: StrategyKind,
    pub anchor_degree: usize,
    /// Defaults to half the mean document length.
    pub landmark_length: Option<usize>,
    pub f_max: Option<f64>,
    /// Use `1 / (1 + p_min)` over the landmark marginals instead.
    pub f_max_from_p_min: bool,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        Self {
            mode: EmbeddingMode::Landmark,
            landmarks: 1000,
            strategy: StrategyKind::Sampled,
            anchor_degree: 1,
            landmark_length: None,
            f_max: None,
            f_max_from_p_min: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub ridge: f64,
    pub delta: f64,
    /// Target functional for bound verification; defaults to the first
    /// basis coordinate.
    pub theta: Option<Vec<f64>>,
    pub bound_pairs_docs: usize,
    pub bound_fit_docs: usize,
    pub bound_eval_docs: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            n_grid: vec![10, 50, 100, 250],
            replicates: 10,
            ridge: 1e-3,
            delta: 0.05,
            theta: None,
            bound_pairs_docs: 2000,
            bound_fit_docs: 1000,
            bound_eval_docs: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleCheckSection {
    /// Longest enumerated document.
    pub max_len: usize,
}

impl Default for OracleCheckSection {
    fn default() -> Self {
        Self { max_len: 4 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    /// Run directories, relative to the config file.
    pub runs: Vec<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub precision: Precision,
    pub model: ModelSection,
    pub corpus: CorpusSection,
    pub data: DataSection,
    pub learner: LearnerSection,
    pub embedding: EmbeddingSection,
    pub eval: EvalSection,
    pub oracle_check: OracleCheckSection,
    /// When present, `eval` runs the whole grid in-process.
    pub sweep: Option<SweepSpec>,
    pub report: ReportSection,
}

/// Pipeline stages, in dependency order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Simulate,
    OracleCheck,
    BuildData,
    Train,
    Embed,
    Eval,
    VerifyBound,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::OracleCheck => "oracle-check",
            Stage::BuildData => "build-data",
            Stage::Train => "train",
            Stage::Embed => "embed",
            Stage::Eval => "eval",
            Stage::VerifyBound => "verify-bound",
            Stage::Report => "report",
        }
    }

    /// Config sections a stage's outputs depend on, upstream included.
    fn sections(self) -> &'static [&'static str] {
        const SIM: &[&str] = &["seed", "model", "corpus"];
        match self {
            Stage::Simulate => SIM,
            Stage::OracleCheck => &["seed", "model", "oracle_check"],
            Stage::BuildData => &["seed", "model", "corpus", "data", "precision"],
            Stage::Train => &["seed", "model", "corpus", "data", "learner", "precision"],
            Stage::Embed => &["seed", "model", "corpus", "data", "learner", "precision", "embedding"],
            Stage::Eval => &["seed", "model", "corpus", "data", "learner", "precision", "embedding", "eval", "sweep"],
            Stage::VerifyBound => &["seed", "model", "corpus", "data", "learner", "precision", "embedding", "eval"],
            Stage::Report => &["report"],
        }
    }

    /// Stages whose recorded outputs this stage reads.
    pub fn upstream(self, cfg: &ExperimentConfig) -> &'static [Stage] {
        match self {
            Stage::Simulate | Stage::OracleCheck | Stage::Report => &[],
            Stage::BuildData => &[Stage::Simulate],
            Stage::Train => &[Stage::BuildData],
            Stage::Embed => &[Stage::Train],
            Stage::Eval if cfg.sweep.is_some() => &[],
            Stage::Eval => &[Stage::Embed],
            Stage::VerifyBound => &[Stage::Embed],
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        };
        Ok(cfg)
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("seed resolved before any stage runs")
    }

    /// SHA-256 of the canonical JSON of the sections `stage` depends on.
    pub fn stage_hash(&self, stage: Stage) -> String {
        let full = serde_json::to_value(self).expect("config serializes");
        let picked: serde_json::Map<String, serde_json::Value> = stage
            .sections()
            .iter()
            .map(|&k| (k.to_string(), full.get(k).cloned().unwrap_or(serde_json::Value::Null)))
            .collect();
        sha256_bytes(serde_json::Value::Object(picked).to_string().as_bytes())
    }

    pub fn validate(&self, stage: Stage) -> Result<()> {
        if self.seed.is_none() {
            bail!("a seed is required (config `seed` or --seed)");
        }
        let m = &self.model;
        let (k, v) = match &m.word_dists {
            Some(rows) => (rows.len(), rows.first().map_or(0, Vec::len)),
            None => (m.num_topics, m.vocab_size),
        };
        if k == 0 || v == 0 {
            bail!("model needs at least one topic and one word");
        }
        if m.word_dists.is_none() && !(m.alpha > 0.0 && m.alpha.is_finite()) {
            bail!("model.alpha must be positive");
        }
        match stage {
            Stage::Simulate => {
                if self.corpus.docs == 0 {
                    bail!("corpus.docs must be positive");
                }
            }
            Stage::BuildData | Stage::Train => {
                let d = &self.data;
                if !(d.rate > 0.0 && d.rate <= 1.0) {
                    bail!("data.rate must lie in (0, 1]");
                }
                if d.holdout_docs < 2 || self.corpus.docs < d.holdout_docs + 2 {
                    bail!("need at least two holdout and two training documents");
                }
                if self.learner.epochs == 0 || self.learner.batch_size == 0 {
                    bail!("learner.epochs and learner.batch_size must be positive");
                }
            }
            Stage::Embed | Stage::VerifyBound => {
                if self.embedding.landmarks == 0 && self.embedding.strategy == StrategyKind::Sampled {
                    bail!("embedding.landmarks must be positive");
                }
                if let Some(f) = self.embedding.f_max {
                    if !(f > 0.0 && f < 1.0) {
                        bail!("embedding.f_max must lie in (0, 1)");
                    }
                }
                if stage == Stage::VerifyBound && !(self.eval.delta > 0.0 && self.eval.delta < 1.0) {
                    bail!("eval.delta must lie in (0, 1)");
                }
            }
            Stage::Eval => {
                if self.eval.replicates == 0 {
                    bail!("eval.replicates must be positive");
                }
                if let Some(s) = &self.sweep {
                    if s.alphas.is_empty() || s.rates.is_empty() || s.widths.is_empty() || s.seeds.is_empty() {
                        bail!("every sweep axis needs at least one value");
                    }
                    self.simulation_config().validate()?;
                }
            }
            Stage::OracleCheck | Stage::Report => {}
        }
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        let l = &self.learner;
        match l.kind {
            LearnerKind::Pair => Architecture::Pair {
                vocab: self.vocab_size(),
                hidden: l.hidden.clone(),
                batch_norm: l.batch_norm,
                dropout: l.dropout,
                encoding: l.encoding,
            },
            LearnerKind::Bilinear => Architecture::Bilinear {
                vocab: self.vocab_size(),
                hidden: l.hidden.clone(),
                dim: l.embed_dim,
                batch_norm: l.batch_norm,
                dropout: l.dropout,
                encoding: l.encoding,
            },
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let l = &self.learner;
        TrainConfig {
            epochs: l.epochs,
            batch_size: l.batch_size,
            optimizer: l.optimizer.clone(),
            checkpoints: l.checkpoints.clone(),
            ..Default::default()
        }
    }

    pub fn vocab_size(&self) -> usize {
        match &self.model.word_dists {
            Some(rows) => rows.first().map_or(0, Vec::len),
            None => self.model.vocab_size,
        }
    }

    pub fn num_topics(&self) -> usize {
        match &self.model.word_dists {
            Some(rows) => rows.len(),
            None => self.model.num_topics,
        }
    }

    pub fn train_docs(&self) -> usize {
        self.corpus.docs.saturating_sub(self.data.holdout_docs)
    }

    pub fn landmark_length(&self) -> usize {
        self.embedding
            .landmark_length
            .unwrap_or_else(|| match self.model.fixed_length {
                Some(n) => n / 2,
                None => (self.model.mean_length / 2.0).floor() as usize,
            })
            .max(1)
    }

    /// Settings for the in-process sweep.
    pub fn simulation_config(&self) -> SimulationConfig {
        SimulationConfig {
            num_topics: self.num_topics(),
            vocab_size: self.vocab_size(),
            alpha: self.model.alpha,
            mean_length: self.model.mean_length,
            docs_per_resample: self.data.docs_per_resample.unwrap_or(self.train_docs()),
            rate: self.data.rate,
            hidden: self.learner.hidden.clone(),
            embed_dim: self.learner.embed_dim,
            batch_norm: self.learner.batch_norm,
            dropout: self.learner.dropout,
            train: self.train_config(),
            holdout_docs: self.data.holdout_docs,
            landmarks: self.embedding.landmarks,
            test_docs: self.corpus.test_docs,
            f_max: self.embedding.f_max.unwrap_or(DEFAULT_F_MAX),
        }
    }
}
