//! Turning syntactic annotation into sequence-to-sequence pairs and back.
//!
//! Unlabeled trees become one signed head distance per word
//! (`head - position`, positions 1-based, the virtual root at 0). Labels and
//! tags are emitted in word order. Predicted sequences are unconstrained, so
//! the inverse direction is total and marks impossible heads as invalid.

use std::path::Path;

use crate::data::bpe::BpeModel;
use crate::error::{Error, Result};
use crate::task::TaskKind;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DependencyTree {
    /// `heads[i]` is the head of word `i + 1`; 0 is the virtual root.
    pub heads: Vec<usize>,
    pub labels: Vec<String>,
}

impl DependencyTree {
    pub fn new(heads: Vec<usize>, labels: Vec<String>) -> Self {
        assert_eq!(heads.len(), labels.len());
        DependencyTree { heads, labels }
    }

    pub fn unlabeled(heads: Vec<usize>) -> Self {
        let labels = vec!["_".to_string(); heads.len()];
        DependencyTree { heads, labels }
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    /// Single-rooted, acyclic and with every head in range.
    pub fn is_well_formed(&self) -> bool {
        let n = self.heads.len();
        if self.heads.iter().any(|&h| h > n) {
            return false;
        }
        if self.heads.iter().filter(|&&h| h == 0).count() != 1 {
            return false;
        }
        (1..=n).all(|start| {
            let mut node = start;
            for _ in 0..=n {
                if node == 0 {
                    return true;
                }
                node = self.heads[node - 1];
            }
            false
        })
    }
}

/// Signed offsets from each word to its head.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceSequence(pub Vec<i64>);

impl DistanceSequence {
    pub fn tokens(&self) -> Vec<String> {
        self.0.iter().map(|d| d.to_string()).collect()
    }

    /// Parses predicted tokens; anything that is not an integer becomes `None`.
    pub fn parse_tokens<S: AsRef<str>>(tokens: &[S]) -> Vec<Option<i64>> {
        tokens.iter().map(|t| t.as_ref().parse().ok()).collect()
    }
}

pub fn linearize_distances(tree: &DependencyTree) -> Result<DistanceSequence> {
    let n = tree.len();
    tree.heads
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            if h > n {
                Err(Error::OutOfRange {
                    what: "head",
                    id: h,
                    limit: n,
                })
            } else {
                Ok(h as i64 - (i as i64 + 1))
            }
        })
        .collect::<Result<Vec<_>>>()
        .map(DistanceSequence)
}

/// Heads recovered from predicted distances. A distance pointing outside
/// `[0, n]` yields `None` for that word only.
pub fn delinearize_distances(distances: &[i64]) -> Vec<Option<usize>> {
    decode_heads(&distances.iter().map(|&d| Some(d)).collect::<Vec<_>>())
}

/// Same as [`delinearize_distances`] for sequences that may contain
/// non-numeric predictions.
pub fn decode_heads(distances: &[Option<i64>]) -> Vec<Option<usize>> {
    let n = distances.len() as i64;
    distances
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let head = (i as i64 + 1).checked_add((*d)?)?;
            (0..=n).contains(&head).then_some(head as usize)
        })
        .collect()
}

/// Column indices (0-based) of a CoNLL-style file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConllLayout {
    pub form: usize,
    pub pos: usize,
    pub head: usize,
    pub deprel: usize,
}

impl ConllLayout {
    pub const CONLLX: ConllLayout = ConllLayout {
        form: 1,
        pos: 4,
        head: 6,
        deprel: 7,
    };
    pub const CONLL09: ConllLayout = ConllLayout {
        form: 1,
        pos: 4,
        head: 8,
        deprel: 10,
    };
    pub const CONLLU: ConllLayout = ConllLayout {
        form: 1,
        pos: 3,
        head: 6,
        deprel: 7,
    };

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "conllx" => Ok(Self::CONLLX),
            "conll09" => Ok(Self::CONLL09),
            "conllu" => Ok(Self::CONLLU),
            other => {
                let cols: Vec<usize> = other
                    .split(',')
                    .map(|c| c.trim().parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Config(format!("unknown CoNLL layout `{other}`")))?;
                match cols[..] {
                    [form, pos, head, deprel] => Ok(ConllLayout {
                        form,
                        pos,
                        head,
                        deprel,
                    }),
                    _ => Err(Error::Config(format!(
                        "layout `{other}` must list form,pos,head,deprel columns"
                    ))),
                }
            }
        }
    }
}

/// One treebank sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnnotatedSentence {
    pub words: Vec<String>,
    pub pos: Vec<String>,
    pub tree: DependencyTree,
}

impl AnnotatedSentence {
    /// The linearized target sequence for a syntactic task.
    pub fn target(&self, kind: TaskKind, index: usize) -> Result<Vec<String>> {
        let n = self.words.len();
        let check = |what: &'static str, found: usize| {
            if found == n {
                Ok(())
            } else {
                Err(Error::LengthMismatch {
                    index,
                    what,
                    expected: n,
                    found,
                })
            }
        };
        match kind {
            TaskKind::Pos => {
                check("POS tags", self.pos.len())?;
                Ok(self.pos.clone())
            }
            TaskKind::Parse => {
                check("heads", self.tree.heads.len())?;
                Ok(linearize_distances(&self.tree)?.tokens())
            }
            TaskKind::Labels => {
                check("labels", self.tree.labels.len())?;
                Ok(self.tree.labels.clone())
            }
            TaskKind::Translation => Err(Error::Config(
                "a treebank cannot supply translation targets".into(),
            )),
        }
    }
}

pub fn parse_conll(text: &str, layout: ConllLayout, path: &Path) -> Result<Vec<AnnotatedSentence>> {
    let needed = layout.form.max(layout.pos).max(layout.head).max(layout.deprel) + 1;
    let mut sentences = Vec::new();
    let mut current = AnnotatedSentence {
        words: Vec::new(),
        pos: Vec::new(),
        tree: DependencyTree::unlabeled(Vec::new()),
    };
    let mut flush = |current: &mut AnnotatedSentence| {
        if !current.words.is_empty() {
            sentences.push(std::mem::replace(
                current,
                AnnotatedSentence {
                    words: Vec::new(),
                    pos: Vec::new(),
                    tree: DependencyTree::unlabeled(Vec::new()),
                },
            ));
        }
    };
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut current);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        // Multi-word ranges and empty nodes (CoNLL-U) carry no tree.
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        if cols.len() < needed {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: format!("expected at least {needed} tab-separated columns"),
            });
        }
        let head = cols[layout.head].parse::<usize>().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: format!("bad head `{}`", cols[layout.head]),
        })?;
        current.words.push(cols[layout.form].to_string());
        current.pos.push(cols[layout.pos].to_string());
        current.tree.heads.push(head);
        current.tree.labels.push(cols[layout.deprel].to_string());
    }
    flush(&mut current);
    Ok(sentences)
}

pub fn read_conll(path: &Path, layout: ConllLayout) -> Result<Vec<AnnotatedSentence>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conll(&text, layout, path)
}

/// A source/target pair of token strings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TextPair {
    pub source: Vec<String>,
    pub target: Vec<String>,
}

/// Pre-tokenized data a task is built from.
#[derive(Clone, Debug)]
pub enum TaskCorpus {
    /// Aligned sentences; for syntactic kinds the target carries one tag per word.
    Parallel {
        source: Vec<Vec<String>>,
        target: Vec<Vec<String>>,
    },
    Treebank(Vec<AnnotatedSentence>),
}

/// Builds text pairs for `kind`. Sources are always segmented with
/// `source_bpe`; only translation targets go through `target_bpe`.
pub fn make_task_pairs(
    corpus: &TaskCorpus,
    kind: TaskKind,
    source_bpe: &BpeModel,
    target_bpe: &BpeModel,
) -> Result<Vec<TextPair>> {
    match corpus {
        TaskCorpus::Treebank(sentences) => sentences
            .iter()
            .enumerate()
            .map(|(i, s)| {
                Ok(TextPair {
                    source: source_bpe.apply_words(&s.words),
                    target: s.target(kind, i)?,
                })
            })
            .collect(),
        TaskCorpus::Parallel { source, target } => {
            if source.len() != target.len() {
                return Err(Error::LengthMismatch {
                    index: source.len().min(target.len()),
                    what: "parallel corpus lines",
                    expected: source.len(),
                    found: target.len(),
                });
            }
            source
                .iter()
                .zip(target)
                .enumerate()
                .map(|(i, (s, t))| {
                    let target = if kind == TaskKind::Translation {
                        target_bpe.apply_words(t)
                    } else {
                        if t.len() != s.len() {
                            return Err(Error::LengthMismatch {
                                index: i,
                                what: "annotation",
                                expected: s.len(),
                                found: t.len(),
                            });
                        }
                        t.clone()
                    };
                    Ok(TextPair {
                        source: source_bpe.apply_words(s),
                        target,
                    })
                })
                .collect()
        }
    }
}
