//! Single-file model snapshots.
//!
//! Layout: the magic `SMTLCKPT`, a format version byte, a little-endian u64
//! manifest length, a JSON manifest, then every tensor as little-endian f64
//! in manifest order. Everything needed to decode travels in the file: the
//! persisted configuration, tasks, vocabularies and BPE models.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tensor};
use crate::config::Config;
use crate::data::bpe::BpeModel;
use crate::data::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Seq2Seq};
use crate::task::Task;

const MAGIC: &[u8; 8] = b"SMTLCKPT";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: String,
    tasks: Vec<Task>,
    src_vocab: String,
    tgt_vocab: String,
    src_bpe: String,
    tgt_bpe: String,
    /// Updates performed when the snapshot was taken.
    step: u64,
    tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: Config,
    pub tasks: Vec<Task>,
    pub src_vocab: Vocabulary,
    pub tgt_vocab: Vocabulary,
    pub src_bpe: BpeModel,
    pub tgt_bpe: BpeModel,
    pub step: u64,
    pub model: Seq2Seq,
}

pub fn model_config(config: &Config, tasks: &[Task], src_vocab: &Vocabulary, tgt_vocab: &Vocabulary) -> ModelConfig {
    ModelConfig {
        hidden: config.hidden,
        src_vocab: src_vocab.len(),
        tgt_vocab: tgt_vocab.len(),
        decoder_layers: config.decoder_layers,
        architecture: config.architecture,
        tasks: tasks.iter().map(|t| t.name.clone()).collect(),
    }
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors = Vec::new();
        let mut offset = 0;
        for (_, p) in self.model.params.iter() {
            tensors.push(TensorEntry {
                name: p.name.clone(),
                shape: p.tensor.shape().to_vec(),
                offset,
            });
            offset += p.tensor.len();
        }
        let manifest = Manifest {
            config: self.config.to_persisted_text(),
            tasks: self.tasks.clone(),
            src_vocab: self.src_vocab.to_text(),
            tgt_vocab: self.tgt_vocab.to_text(),
            src_bpe: self.src_bpe.to_text(),
            tgt_bpe: self.tgt_bpe.to_text(),
            step: self.step,
            tensors,
        };
        let json = serde_json::to_vec(&manifest).map_err(|e| corrupt(e.to_string()))?;
        let mut out = Vec::with_capacity(17 + json.len() + offset * 8);
        out.extend_from_slice(MAGIC);
        out.push(FORMAT_VERSION);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, p) in self.model.params.iter() {
            for v in p.tensor.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 17 || &bytes[..8] != MAGIC {
            return Err(corrupt("not a checkpoint file"));
        }
        if bytes[8] != FORMAT_VERSION {
            return Err(corrupt(format!("unsupported format version {}", bytes[8])));
        }
        let len = u64::from_le_bytes(bytes[9..17].try_into().unwrap()) as usize;
        let json = bytes.get(17..17 + len).ok_or_else(|| corrupt("truncated manifest"))?;
        let manifest: Manifest = serde_json::from_slice(json).map_err(|e| corrupt(e.to_string()))?;
        let data = &bytes[17 + len..];
        if data.len() % 8 != 0 {
            return Err(corrupt("tensor data is not a whole number of f64 values"));
        }
        let values: Vec<f64> = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();

        let mut params = ParamStore::new();
        for t in &manifest.tensors {
            let n: usize = t.shape.iter().product();
            let slice = values
                .get(t.offset..t.offset + n)
                .ok_or_else(|| corrupt(format!("tensor `{}` runs past the end of the file", t.name)))?;
            params.add(t.name.clone(), Tensor::new(t.shape.clone(), slice.to_vec()));
        }

        let config = Config::from_text(&manifest.config)?;
        let src_vocab = Vocabulary::from_text(&manifest.src_vocab)?;
        let tgt_vocab = Vocabulary::from_text(&manifest.tgt_vocab)?;
        let src_bpe = BpeModel::from_text(&manifest.src_bpe, Path::new("<checkpoint:src_bpe>"))?;
        let tgt_bpe = BpeModel::from_text(&manifest.tgt_bpe, Path::new("<checkpoint:tgt_bpe>"))?;
        let mc = model_config(&config, &manifest.tasks, &src_vocab, &tgt_vocab);
        let model = Seq2Seq::from_params(mc, params)?;
        Ok(Checkpoint {
            config,
            tasks: manifest.tasks,
            src_vocab,
            tgt_vocab,
            src_bpe,
            tgt_bpe,
            step: manifest.step,
            model,
        })
    }

    /// Writes through a temporary file so a crash never leaves a torn checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        drop(f);
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
