//! On-disk formats: topic models and landmark sets as JSON, corpora as
//! JSONL, checkpoints and matrices as a JSON header plus a little-endian
//! float64 blob, traces and embeddings as CSV.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embedding::EmbeddingMode;
use crate::learner::{Architecture, ContrastiveModel, EpochRecord, LearnError, Learner};
use crate::oracle::{BasisSpec, LandmarkSet, LandmarkStrategy};
use crate::scalar::Real;
use crate::topic_model::{Corpus, Document, LengthSpec, ModelError, PriorSpec, TopicModel};

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Learn(#[from] LearnError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PersistError + '_ {
    move |source| PersistError::Io { path: path.display().to_string(), source }
}

fn format_err(what: &'static str) -> impl FnOnce(serde_json::Error) -> PersistError {
    move |e| PersistError::Format { what, detail: e.to_string() }
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String, PersistError> {
    let mut f = File::open(path).map_err(io_err(path))?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(io_err(path))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), PersistError> {
    let mut s = serde_json::to_string_pretty(value).map_err(format_err("json"))?;
    s.push('\n');
    std::fs::write(path, s).map_err(io_err(path))
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D, PersistError> {
    let s = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&s).map_err(format_err("json"))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), PersistError> {
    std::fs::write(path, text).map_err(io_err(path))
}

/// Serialized form of a [`TopicModel`], always in f64.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicModelFile {
    pub num_topics: usize,
    pub vocab_size: usize,
    pub word_dists: Vec<Vec<f64>>,
    pub prior: PriorSpec<f64>,
    pub length: LengthSpec,
}

impl TopicModelFile {
    pub fn from_model<T: Real>(model: &TopicModel<T>) -> Self {
        let conv = |v: &[T]| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<f64>>();
        let prior = match model.prior() {
            PriorSpec::FiniteSupport { atoms, probs } => PriorSpec::FiniteSupport {
                atoms: atoms.iter().map(|a| conv(a)).collect(),
                probs: conv(probs),
            },
            PriorSpec::SymmetricDirichlet { concentration } => {
                PriorSpec::SymmetricDirichlet { concentration: concentration.to_f64_lossy() }
            }
        };
        Self {
            num_topics: model.num_topics(),
            vocab_size: model.vocab_size(),
            word_dists: model.word_dists().iter().map(|r| conv(r)).collect(),
            prior,
            length: model.length(),
        }
    }

    /// Validating conversion back to a model.
    pub fn to_model<T: Real>(&self) -> Result<TopicModel<T>, PersistError> {
        let conv = |v: &[f64]| v.iter().map(|&x| T::from_f64_lossy(x)).collect::<Vec<T>>();
        let prior = match &self.prior {
            PriorSpec::FiniteSupport { atoms, probs } => PriorSpec::FiniteSupport {
                atoms: atoms.iter().map(|a| conv(a)).collect(),
                probs: conv(probs),
            },
            PriorSpec::SymmetricDirichlet { concentration } => {
                PriorSpec::SymmetricDirichlet { concentration: T::from_f64_lossy(*concentration) }
            }
        };
        let model = TopicModel::new(self.word_dists.iter().map(|r| conv(r)).collect(), prior, self.length)?;
        if model.num_topics() != self.num_topics || model.vocab_size() != self.vocab_size {
            return Err(PersistError::Format {
                what: "topic model",
                detail: format!("declared {}x{}, rows give {}x{}", self.num_topics, self.vocab_size, model.num_topics(), model.vocab_size()),
            });
        }
        Ok(model)
    }
}

pub fn write_topic_model<T: Real>(path: &Path, model: &TopicModel<T>) -> Result<(), PersistError> {
    write_json(path, &TopicModelFile::from_model(model))
}

pub fn read_topic_model<T: Real>(path: &Path) -> Result<TopicModel<T>, PersistError> {
    read_json::<TopicModelFile>(path)?.to_model()
}

#[derive(Serialize, Deserialize)]
struct CorpusLine {
    id: usize,
    tokens: Vec<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    topic: Option<usize>,
}

/// One JSON object per line: `{"id", "tokens", "topic"}`.
pub fn write_corpus(path: &Path, corpus: &Corpus) -> Result<(), PersistError> {
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    for (id, doc) in corpus.documents.iter().enumerate() {
        let line = CorpusLine {
            id,
            tokens: doc.tokens.clone(),
            topic: corpus.true_topics.as_ref().map(|t| t[id]),
        };
        let s = serde_json::to_string(&line).map_err(format_err("corpus"))?;
        writeln!(w, "{s}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_corpus(path: &Path) -> Result<Corpus, PersistError> {
    let f = File::open(path).map_err(io_err(path))?;
    let mut documents = Vec::new();
    let mut topics = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let l: CorpusLine = serde_json::from_str(&line).map_err(format_err("corpus"))?;
        if l.id != documents.len() {
            return Err(PersistError::Format { what: "corpus", detail: format!("id {} at line {}", l.id, documents.len()) });
        }
        documents.push(Document::new(l.tokens));
        topics.push(l.topic);
    }
    let true_topics = topics.iter().all(Option::is_some).then(|| topics.into_iter().flatten().collect());
    Ok(Corpus { documents, true_topics })
}

fn write_header_and_blob<H: Serialize>(path: &Path, header: &H, values: impl Iterator<Item = f64>) -> Result<(), PersistError> {
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    let h = serde_json::to_string(header).map_err(format_err("header"))?;
    writeln!(w, "{h}").map_err(io_err(path))?;
    for v in values {
        w.write_all(&v.to_le_bytes()).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn read_header_and_blob<H: DeserializeOwned>(path: &Path, what: &'static str) -> Result<(H, Vec<f64>), PersistError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or(PersistError::Format { what, detail: "missing header line".into() })?;
    let header = serde_json::from_slice(&bytes[..nl]).map_err(format_err(what))?;
    let blob = &bytes[nl + 1..];
    if blob.len() % 8 != 0 {
        return Err(PersistError::Format { what, detail: format!("blob of {} bytes", blob.len()) });
    }
    let values = blob.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok((header, values))
}

/// First line of a checkpoint file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub architecture: Architecture,
    pub epoch: usize,
    pub config_hash: String,
    pub num_params: usize,
    pub num_values: usize,
}

/// Parameters and batch-norm running statistics, as f64.
pub fn write_checkpoint<T: Real>(
    path: &Path,
    model: &Learner<T>,
    epoch: usize,
    config_hash: &str,
) -> Result<(), PersistError> {
    let state = model.state_vector();
    let header = CheckpointHeader {
        architecture: model.architecture(),
        epoch,
        config_hash: config_hash.into(),
        num_params: model.num_params(),
        num_values: state.len(),
    };
    write_header_and_blob(path, &header, state.iter().map(|v| v.to_f64_lossy()))
}

pub fn read_checkpoint<T: Real>(path: &Path) -> Result<(CheckpointHeader, Learner<T>), PersistError> {
    let (header, values): (CheckpointHeader, _) = read_header_and_blob(path, "checkpoint")?;
    if values.len() != header.num_values {
        return Err(PersistError::Format {
            what: "checkpoint",
            detail: format!("{} values, header says {}", values.len(), header.num_values),
        });
    }
    let mut model = header.architecture.build::<T>(0)?;
    let state: Vec<T> = values.iter().map(|&v| T::from_f64_lossy(v)).collect();
    model.load_state_vector(&state)?;
    Ok((header, model))
}

pub fn loss_trace_csv(trace: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_loss,holdout_loss,lr\n");
    for r in trace {
        let h = r.holdout_loss.map(|v| format!("{v:.10e}")).unwrap_or_default();
        s.push_str(&format!("{},{:.10e},{},{:e}\n", r.epoch, r.train_loss, h, r.lr));
    }
    s
}

/// JSON sidecar of an embedding matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSidecar {
    pub mode: EmbeddingMode,
    pub rows: usize,
    pub cols: usize,
    pub landmark_ids: Vec<usize>,
    pub f_max: Option<f64>,
    pub model_checkpoint_hash: Option<String>,
}

/// `doc_id,e0,e1,...` with one row per document.
pub fn matrix_csv<T: Real>(m: &Array2<T>, prefix: &str) -> String {
    let mut s = String::from("doc_id");
    for j in 0..m.ncols() {
        s.push_str(&format!(",{prefix}{j}"));
    }
    s.push('\n');
    for (i, row) in m.rows().into_iter().enumerate() {
        s.push_str(&i.to_string());
        for v in row {
            s.push_str(&format!(",{:.17e}", v.to_f64_lossy()));
        }
        s.push('\n');
    }
    s
}

pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>, PersistError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    let cols = lines.next().map(|h| h.split(',').count().saturating_sub(1)).unwrap_or(0);
    let mut data = Vec::new();
    let mut rows = 0;
    for line in lines.filter(|l| !l.is_empty()) {
        let fields: Vec<&str> = line.split(',').skip(1).collect();
        if fields.len() != cols {
            return Err(PersistError::Format { what: "matrix csv", detail: format!("row {rows} has {} fields", fields.len()) });
        }
        for f in fields {
            data.push(f.parse::<f64>().map_err(|e| PersistError::Format { what: "matrix csv", detail: e.to_string() })?);
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, cols), data).map_err(|e| PersistError::Format { what: "matrix csv", detail: e.to_string() })
}

/// Decoded posteriors as long-format rows `doc_id,basis_index,value`.
pub fn decode_csv<T: Real>(decoded: &Array2<T>) -> String {
    let mut s = String::from("doc_id,basis_index,value\n");
    for ((i, j), v) in decoded.indexed_iter() {
        s.push_str(&format!("{i},{j},{:.17e}\n", v.to_f64_lossy()));
    }
    s
}

/// JSON half of a persisted landmark set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandmarkFile {
    pub landmarks: Vec<Vec<u32>>,
    pub degree: Option<usize>,
    pub basis: BasisSpec,
    pub strategy: LandmarkStrategy,
    pub matrix_file: String,
}

/// `stem.json` with token lists and basis, `stem.bin` with `L` (header line
/// with the shape, then row-major float64).
pub fn write_landmarks<T: Real>(dir: &Path, stem: &str, set: &LandmarkSet<T>) -> Result<(), PersistError> {
    let degree = match set.basis().spec() {
        BasisSpec::Monomial { max_degree, .. } => Some(max_degree),
        BasisSpec::SingleTopic { .. } => None,
    };
    let file = LandmarkFile {
        landmarks: set.landmarks().iter().map(|d| d.tokens.clone()).collect(),
        degree,
        basis: set.basis().spec(),
        strategy: set.strategy(),
        matrix_file: format!("{stem}.bin"),
    };
    write_json(&dir.join(format!("{stem}.json")), &file)?;
    let l = set.matrix();
    write_header_and_blob(&dir.join(format!("{stem}.bin")), &[l.nrows(), l.ncols()], l.iter().map(|v| v.to_f64_lossy()))
}

pub fn read_landmark_file(path: &Path) -> Result<LandmarkFile, PersistError> {
    read_json(path)
}

pub fn read_matrix_blob(path: &Path) -> Result<Array2<f64>, PersistError> {
    let (shape, values): ([usize; 2], _) = read_header_and_blob(path, "matrix")?;
    Array2::from_shape_vec((shape[0], shape[1]), values).map_err(|e| PersistError::Format { what: "matrix", detail: e.to_string() })
}

pub fn write_matrix_blob<T: Real>(path: &Path, m: &Array2<T>) -> Result<(), PersistError> {
    write_header_and_blob(path, &[m.nrows(), m.ncols()], m.iter().map(|v| v.to_f64_lossy()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::InputEncoding;
    use crate::oracle::{sample_landmarks, Basis, LandmarkStrategy};
    use crate::rng::stream_rng;
    use crate::topic_model::{sample_corpus, sample_topic_model};

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("doccontrast-persist-{}-{name}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn topic_model_and_corpus_round_trip() {
        let dir = tmp("model");
        let model = sample_topic_model::<f64>(3, 12, 1.0, 5).unwrap();
        write_topic_model(&dir.join("m.json"), &model).unwrap();
        assert_eq!(read_topic_model::<f64>(&dir.join("m.json")).unwrap(), model);
        let corpus = sample_corpus(&model, 20, 1);
        write_corpus(&dir.join("c.jsonl"), &corpus).unwrap();
        assert_eq!(read_corpus(&dir.join("c.jsonl")).unwrap(), corpus);
    }

    #[test]
    fn corrupted_model_file_is_rejected() {
        let dir = tmp("bad");
        let mut f = TopicModelFile::from_model(&sample_topic_model::<f64>(2, 4, 1.0, 5).unwrap());
        f.word_dists[0][0] += 0.1;
        write_json(&dir.join("m.json"), &f).unwrap();
        assert!(matches!(read_topic_model::<f64>(&dir.join("m.json")), Err(PersistError::Model(_))));
    }

    #[test]
    fn checkpoint_round_trip_is_exact_in_f64() {
        let dir = tmp("ckpt");
        let arch = Architecture::Bilinear {
            vocab: 7,
            hidden: vec![5],
            dim: 3,
            batch_norm: true,
            dropout: false,
            encoding: InputEncoding::Counts,
        };
        let model = arch.build::<f64>(3).unwrap();
        write_checkpoint(&dir.join("c.ckpt"), &model, 4, "abc").unwrap();
        let (h, back) = read_checkpoint::<f64>(&dir.join("c.ckpt")).unwrap();
        assert_eq!(h.epoch, 4);
        assert_eq!(h.config_hash, "abc");
        assert_eq!(back.state_vector(), model.state_vector());
    }

    #[test]
    fn matrices_and_landmarks_round_trip() {
        let dir = tmp("lm");
        let model = sample_topic_model::<f64>(2, 6, 1.0, 2).unwrap();
        let docs = sample_landmarks(&model, 5, 3, &mut stream_rng(1, 0));
        let set = LandmarkSet::new(&model, docs, Basis::SingleTopic { num_topics: 2 }, LandmarkStrategy::Sampled).unwrap();
        write_landmarks(&dir, "landmarks", &set).unwrap();
        let file = read_landmark_file(&dir.join("landmarks.json")).unwrap();
        assert_eq!(file.landmarks.len(), 5);
        assert_eq!(read_matrix_blob(&dir.join(&file.matrix_file)).unwrap(), *set.matrix());
        std::fs::write(dir.join("e.csv"), matrix_csv(set.matrix(), "e")).unwrap();
        assert_eq!(read_matrix_csv(&dir.join("e.csv")).unwrap(), *set.matrix());
    }

    #[test]
    fn trace_csv_layout() {
        let t = vec![EpochRecord { epoch: 0, train_loss: 0.5, holdout_loss: None, lr: 1e-4 }];
        let csv = loss_trace_csv(&t);
        assert!(csv.starts_with("epoch,train_loss,holdout_loss,lr\n0,"));
        assert!(csv.contains(",,"));
    }
}
