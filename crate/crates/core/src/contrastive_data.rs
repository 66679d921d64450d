//! Contrastive datasets: labelled half-document pairs drawn from a corpus,
//! and the epoch schedule on which fresh datasets are drawn.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rng::{derive_seed, stream_rng, tags};
use crate::scalar::Real;
use crate::topic_model::{sample_corpus, split_document, Document, ModelError, SplitDocument, SplitMode, TopicModel};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("corpus needs at least {min} documents, got {got}")]
    CorpusTooSmall { min: usize, got: usize },
    #[error("number of pairs must be positive")]
    NoPairs,
    #[error("resampling rate must lie in (0, 1], got {0}")]
    BadRate(f64),
    #[error("resampling period must be at least one epoch")]
    BadPeriod,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("malformed dataset file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContrastivePair {
    pub first: Document,
    pub second: Document,
    /// 1 when both halves come from one document.
    pub y: u8,
    /// Source documents of the first and second half.
    pub src: [usize; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Algorithm1,
    PairedPermutation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub corpus_hash: String,
    pub seed: u64,
    pub scheme: Scheme,
    pub split_mode: SplitMode,
    /// Negatives whose halves share a source document (algorithm1 only).
    pub self_negatives: usize,
    /// Permutation fixed points dropped (paired-permutation only).
    pub discarded_collisions: usize,
    /// Positives and negatives reuse one split per document.
    pub shared_split: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContrastiveDataset {
    pub pairs: Vec<ContrastivePair>,
    pub provenance: Provenance,
}

impl ContrastiveDataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.pairs.iter().filter(|p| p.y == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    /// JSONL: a provenance header line, then one pair per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), DataError> {
        let header = serde_json::json!({ "provenance": self.provenance });
        writeln!(out, "{header}")?;
        for p in &self.pairs {
            let line = serde_json::to_string(p).map_err(|e| DataError::Format(e.to_string()))?;
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, DataError> {
        #[derive(Deserialize)]
        struct Header {
            provenance: Provenance,
        }
        let mut lines = input.lines();
        let first = lines.next().ok_or_else(|| DataError::Format("missing header".into()))??;
        let header: Header =
            serde_json::from_str(&first).map_err(|e| DataError::Format(format!("header: {e}")))?;
        let mut pairs = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let pair: ContrastivePair = serde_json::from_str(&line)
                .map_err(|e| DataError::Format(format!("line {}: {e}", i + 2)))?;
            pairs.push(pair);
        }
        Ok(Self { pairs, provenance: header.provenance })
    }
}

/// Hex SHA-256 over the corpus token lists.
pub fn corpus_hash(corpus: &[Document]) -> String {
    let mut h = Sha256::new();
    for d in corpus {
        h.update((d.tokens.len() as u64).to_le_bytes());
        for t in &d.tokens {
            h.update(t.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// `n` pairs: each iteration draws two documents uniformly with
/// replacement, splits them, and emits the true pair (label 1) or the
/// crossed pair (label 0) with probability 1/2 each.
pub fn build_algorithm1(
    corpus: &[Document],
    n: usize,
    split_mode: SplitMode,
    seed: u64,
) -> Result<ContrastiveDataset, DataError> {
    if corpus.is_empty() {
        return Err(DataError::EmptyCorpus);
    }
    if n == 0 {
        return Err(DataError::NoPairs);
    }
    let mut rng = stream_rng(seed, 0);
    let mut pairs = Vec::with_capacity(n);
    let mut self_negatives = 0;
    for _ in 0..n {
        let i = rng.random_range(0..corpus.len());
        let j = rng.random_range(0..corpus.len());
        let a = split_document(&corpus[i], split_mode, &mut rng)?;
        let b = split_document(&corpus[j], split_mode, &mut rng)?;
        if rng.random_bool(0.5) {
            pairs.push(ContrastivePair { first: a.first_half, second: a.second_half, y: 1, src: [i, i] });
        } else {
            if i == j {
                self_negatives += 1;
            }
            pairs.push(ContrastivePair { first: a.first_half, second: b.second_half, y: 0, src: [i, j] });
        }
    }
    Ok(ContrastiveDataset {
        pairs,
        provenance: Provenance {
            corpus_hash: corpus_hash(corpus),
            seed,
            scheme: Scheme::Algorithm1,
            split_mode,
            self_negatives,
            discarded_collisions: 0,
            shared_split: false,
        },
    })
}

/// One positive per document, plus one negative per non-fixed point of
/// `perm` applied to the second halves. `perm[i]` is the document whose
/// second half is paired with document `i`'s first half.
pub fn pair_with_permutation(splits: &[SplitDocument], perm: &[usize]) -> (Vec<ContrastivePair>, usize) {
    assert_eq!(splits.len(), perm.len(), "one permutation entry per document");
    let mut pairs = Vec::with_capacity(2 * splits.len());
    let mut collisions = 0;
    for (i, s) in splits.iter().enumerate() {
        pairs.push(ContrastivePair {
            first: s.first_half.clone(),
            second: s.second_half.clone(),
            y: 1,
            src: [i, i],
        });
        let j = perm[i];
        if j == i {
            collisions += 1;
        } else {
            pairs.push(ContrastivePair {
                first: s.first_half.clone(),
                second: splits[j].second_half.clone(),
                y: 0,
                src: [i, j],
            });
        }
    }
    (pairs, collisions)
}

/// Split every document once, pair each with itself (positive) and with a
/// uniformly permuted second half (negative), dropping fixed points.
pub fn build_paired_permutation(
    corpus: &[Document],
    split_mode: SplitMode,
    seed: u64,
) -> Result<ContrastiveDataset, DataError> {
    if corpus.len() < 2 {
        return Err(DataError::CorpusTooSmall { min: 2, got: corpus.len() });
    }
    let mut rng = stream_rng(seed, 0);
    let splits = corpus
        .iter()
        .map(|d| split_document(d, split_mode, &mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    let mut perm: Vec<usize> = (0..corpus.len()).collect();
    perm.shuffle(&mut rng);
    let (pairs, discarded_collisions) = pair_with_permutation(&splits, &perm);
    Ok(ContrastiveDataset {
        pairs,
        provenance: Provenance {
            corpus_hash: corpus_hash(corpus),
            seed,
            scheme: Scheme::PairedPermutation,
            split_mode,
            self_negatives: 0,
            discarded_collisions,
            shared_split: true,
        },
    })
}

/// Epochs at which a fresh dataset is drawn: every `period` epochs starting
/// at epoch 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResampleSchedule {
    pub period: usize,
}

impl ResampleSchedule {
    pub fn every(period: usize) -> Result<Self, DataError> {
        if period == 0 {
            return Err(DataError::BadPeriod);
        }
        Ok(Self { period })
    }

    /// Rate `r` in (0, 1]: resample after every `1/r`-th epoch.
    pub fn from_rate(rate: f64) -> Result<Self, DataError> {
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(DataError::BadRate(rate));
        }
        Self::every((1.0 / rate).round().max(1.0) as usize)
    }

    pub fn is_boundary(&self, epoch: usize) -> bool {
        epoch % self.period == 0
    }

    pub fn boundaries(&self, epochs: usize) -> Vec<usize> {
        (0..epochs).filter(|&e| self.is_boundary(e)).collect()
    }
}

/// Where fresh documents come from at each resample.
#[derive(Clone, Debug)]
pub enum DataSource<T> {
    /// A fixed corpus; each resample draws fresh splits and permutations.
    Corpus(Vec<Document>),
    /// Fresh documents from the generative model at each resample.
    Simulation { model: TopicModel<T>, docs_per_resample: usize },
}

/// Dataset stream following a [`ResampleSchedule`].
#[derive(Clone, Debug)]
pub struct ResamplingStream<T> {
    source: DataSource<T>,
    schedule: ResampleSchedule,
    scheme: Scheme,
    split_mode: SplitMode,
    seed: u64,
    current: Option<ContrastiveDataset>,
    built: usize,
    last_epoch: Option<usize>,
}

impl<T: Real> ResamplingStream<T> {
    pub fn new(
        source: DataSource<T>,
        schedule: ResampleSchedule,
        scheme: Scheme,
        split_mode: SplitMode,
        seed: u64,
    ) -> Self {
        Self { source, schedule, scheme, split_mode, seed, current: None, built: 0, last_epoch: None }
    }

    pub fn schedule(&self) -> ResampleSchedule {
        self.schedule
    }

    /// Number of datasets drawn so far.
    pub fn datasets_built(&self) -> usize {
        self.built
    }

    fn draw(&self, index: usize) -> Result<ContrastiveDataset, DataError> {
        let seed = derive_seed(self.seed, tags::RESAMPLE.wrapping_add(index as u64 * 0x100));
        let fresh;
        let docs: &[Document] = match &self.source {
            DataSource::Corpus(docs) => docs,
            DataSource::Simulation { model, docs_per_resample } => {
                fresh = sample_corpus(model, *docs_per_resample, derive_seed(seed, tags::CORPUS)).documents;
                &fresh
            }
        };
        match self.scheme {
            Scheme::PairedPermutation => build_paired_permutation(docs, self.split_mode, seed),
            Scheme::Algorithm1 => build_algorithm1(docs, 2 * docs.len(), self.split_mode, seed),
        }
    }

    /// Dataset in force at `epoch`, drawing a fresh one at schedule
    /// boundaries. Returns whether it was freshly drawn.
    pub fn dataset_for_epoch(&mut self, epoch: usize) -> Result<(&ContrastiveDataset, bool), DataError> {
        let fresh = self.current.is_none() || (self.schedule.is_boundary(epoch) && self.last_epoch != Some(epoch));
        self.last_epoch = Some(epoch);
        if fresh {
            let ds = self.draw(self.built)?;
            self.built += 1;
            self.current = Some(ds);
        }
        Ok((self.current.as_ref().expect("drawn above"), fresh))
    }
}
