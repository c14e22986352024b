//! Corpus ingestion, subword segmentation, filtering and batching.

pub mod batch;
pub mod bpe;
pub mod prepare;
pub mod vocab;

use std::path::Path;

use crate::error::{Error, Result};

pub use batch::{build_minibatch, MiniBatch, MiniBatcher};
pub use bpe::BpeModel;
pub use prepare::{prepare, DevSet, PreparedData};
pub use vocab::Vocabulary;

/// Length limits for training pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LengthFilter {
    /// Sentences must be strictly shorter than this.
    pub max_len: usize,
    /// Translation targets may be at most this many times the source length.
    pub max_ratio: f64,
}

impl Default for LengthFilter {
    fn default() -> Self {
        LengthFilter {
            max_len: 60,
            max_ratio: 1.5,
        }
    }
}

impl LengthFilter {
    /// Whether a translation pair survives filtering.
    pub fn keep_pair(&self, src: usize, tgt: usize) -> bool {
        src < self.max_len && tgt < self.max_len && (tgt as f64) <= self.max_ratio * src as f64
    }

    /// Treebank sentences only go through the length limit.
    pub fn keep_sentence(&self, len: usize) -> bool {
        len < self.max_len
    }
}

/// Keep/drop decision for a translation pair under the default limits.
pub fn filter_pair(src: usize, tgt: usize) -> bool {
    LengthFilter::default().keep_pair(src, tgt)
}

/// One whitespace-tokenized sentence per line.
pub fn read_tokenized(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.split_whitespace().map(String::from).collect())
        .collect())
}
