//! From configured corpora to id-mapped training examples and dev sets.

use std::path::Path;

use crate::config::Config;
use crate::data::bpe::BpeModel;
use crate::data::vocab::Vocabulary;
use crate::data::{read_tokenized, LengthFilter};
use crate::error::{Error, Result};
use crate::linearize::{make_task_pairs, read_conll, ConllLayout, DependencyTree, TaskCorpus};
use crate::task::{Task, TaskId, TaskKind, TrainingExample};

/// Training and dev corpora for one task, before segmentation.
#[derive(Clone, Debug)]
pub struct RawTask {
    pub task: Task,
    pub train: TaskCorpus,
    pub dev: Option<TaskCorpus>,
}

/// Held-out data for one task. References are word-level for translation
/// and one tag per word otherwise.
#[derive(Clone, Debug, Default)]
pub struct DevSet {
    pub sources: Vec<Vec<u32>>,
    pub references: Vec<Vec<String>>,
    /// Gold trees when the dev data came from a treebank.
    pub trees: Vec<DependencyTree>,
}

impl DevSet {
    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct PreparedData {
    pub tasks: Vec<Task>,
    pub src_bpe: BpeModel,
    pub tgt_bpe: BpeModel,
    pub src_vocab: Vocabulary,
    pub tgt_vocab: Vocabulary,
    /// Indexed by task.
    pub train: Vec<Vec<TrainingExample>>,
    pub dev: Vec<DevSet>,
}

fn corpus_len(c: &TaskCorpus) -> usize {
    match c {
        TaskCorpus::Parallel { source, .. } => source.len(),
        TaskCorpus::Treebank(s) => s.len(),
    }
}

fn filter_corpus(c: &TaskCorpus, kind: TaskKind, filter: LengthFilter) -> TaskCorpus {
    match c {
        TaskCorpus::Parallel { source, target } => {
            let (source, target) = source
                .iter()
                .zip(target)
                .filter(|(s, t)| {
                    if kind == TaskKind::Translation {
                        filter.keep_pair(s.len(), t.len())
                    } else {
                        filter.keep_sentence(s.len())
                    }
                })
                .map(|(s, t)| (s.clone(), t.clone()))
                .unzip();
            TaskCorpus::Parallel { source, target }
        }
        TaskCorpus::Treebank(s) => TaskCorpus::Treebank(
            s.iter()
                .filter(|x| filter.keep_sentence(x.words.len()))
                .cloned()
                .collect(),
        ),
    }
}

fn truncate(c: TaskCorpus, limit: usize) -> TaskCorpus {
    if limit == 0 {
        return c;
    }
    match c {
        TaskCorpus::Parallel { mut source, mut target } => {
            source.truncate(limit);
            target.truncate(limit);
            TaskCorpus::Parallel { source, target }
        }
        TaskCorpus::Treebank(mut s) => {
            s.truncate(limit);
            TaskCorpus::Treebank(s)
        }
    }
}

fn source_sentences(c: &TaskCorpus) -> Vec<String> {
    match c {
        TaskCorpus::Parallel { source, .. } => source.iter().map(|s| s.join(" ")).collect(),
        TaskCorpus::Treebank(s) => s.iter().map(|x| x.words.join(" ")).collect(),
    }
}

/// Segments, filters and id-maps in-memory corpora. BPE is learned from the
/// translation corpus only and then applied to every task's source side; a
/// setup without translation learns the source model from all sources.
/// With `joint_bpe` one model is learned from both translation sides.
pub fn prepare_corpora(config: &Config, raw: Vec<RawTask>) -> Result<PreparedData> {
    let filter = LengthFilter {
        max_len: config.max_len,
        max_ratio: config.max_ratio,
    };
    let tasks: Vec<Task> = raw.iter().map(|r| r.task.clone()).collect();
    let filtered: Vec<TaskCorpus> = raw
        .iter()
        .map(|r| filter_corpus(&r.train, r.task.kind, filter))
        .collect();
    for (r, c) in raw.iter().zip(&filtered) {
        if corpus_len(c) == 0 {
            return Err(Error::Config(format!(
                "task `{}` has no training examples after filtering",
                r.task.name
            )));
        }
    }

    let mut src_text = Vec::new();
    let mut tgt_text = Vec::new();
    for (r, c) in raw.iter().zip(&filtered) {
        if r.task.kind == TaskKind::Translation {
            src_text.extend(source_sentences(c));
            if let TaskCorpus::Parallel { target, .. } = c {
                tgt_text.extend(target.iter().map(|t| t.join(" ")));
            }
        }
    }
    if src_text.is_empty() {
        for c in &filtered {
            src_text.extend(source_sentences(c));
        }
    }
    let (src_bpe, tgt_bpe) = if config.joint_bpe {
        let both: Vec<String> = src_text.iter().chain(&tgt_text).cloned().collect();
        let joint = BpeModel::learn(&both, config.src_merges);
        (joint.clone(), joint)
    } else {
        (BpeModel::learn(&src_text, config.src_merges), BpeModel::learn(&tgt_text, config.tgt_merges))
    };

    let mut pairs = Vec::with_capacity(raw.len());
    for (r, c) in raw.iter().zip(&filtered) {
        pairs.push(make_task_pairs(c, r.task.kind, &src_bpe, &tgt_bpe)?);
    }
    let mut src_vocab = Vocabulary::new();
    let mut tgt_vocab = Vocabulary::with_tasks(&tasks);
    for p in pairs.iter().flatten() {
        for t in &p.source {
            src_vocab.add(t);
        }
        for t in &p.target {
            tgt_vocab.add(t);
        }
    }
    let mut train = Vec::with_capacity(raw.len());
    for (i, (r, task_pairs)) in raw.iter().zip(&pairs).enumerate() {
        let mut examples = Vec::with_capacity(task_pairs.len());
        for p in task_pairs {
            let target = if r.task.kind.closed_vocabulary() {
                tgt_vocab.encode_closed(&p.target, "target")?
            } else {
                tgt_vocab.encode(&p.target)
            };
            if p.source.is_empty() || target.is_empty() {
                continue;
            }
            examples.push(TrainingExample {
                task: TaskId(i),
                source: src_vocab.encode(&p.source),
                target,
            });
        }
        train.push(examples);
    }

    let mut dev = Vec::with_capacity(raw.len());
    for r in raw {
        let Some(corpus) = r.dev else {
            dev.push(DevSet::default());
            continue;
        };
        let corpus = truncate(corpus, config.dev_limit);
        let mut set = DevSet::default();
        match &corpus {
            TaskCorpus::Parallel { source, target } => {
                if source.len() != target.len() {
                    return Err(Error::LengthMismatch {
                        index: source.len().min(target.len()),
                        what: "dev corpus lines",
                        expected: source.len(),
                        found: target.len(),
                    });
                }
                for (s, t) in source.iter().zip(target) {
                    if s.is_empty() {
                        continue;
                    }
                    set.sources.push(src_vocab.encode(&src_bpe.apply_words(s)));
                    set.references.push(t.clone());
                }
            }
            TaskCorpus::Treebank(sentences) => {
                for (i, s) in sentences.iter().enumerate() {
                    if s.words.is_empty() {
                        continue;
                    }
                    set.sources.push(src_vocab.encode(&src_bpe.apply_words(&s.words)));
                    set.references.push(s.target(r.task.kind, i)?);
                    set.trees.push(s.tree.clone());
                }
            }
        }
        dev.push(set);
    }

    Ok(PreparedData {
        tasks,
        src_bpe,
        tgt_bpe,
        src_vocab,
        tgt_vocab,
        train,
        dev,
    })
}

fn parallel(src: &str, tgt: &str) -> Result<TaskCorpus> {
    let source = read_tokenized(Path::new(src))?;
    let target = read_tokenized(Path::new(tgt))?;
    if source.len() != target.len() {
        return Err(Error::LengthMismatch {
            index: source.len().min(target.len()),
            what: "parallel corpus lines",
            expected: source.len(),
            found: target.len(),
        });
    }
    Ok(TaskCorpus::Parallel { source, target })
}

/// Reads the files named in `config` and prepares every configured task.
pub fn prepare(config: &Config) -> Result<PreparedData> {
    config.validate()?;
    let layout = ConllLayout::by_name(&config.conll_layout)?;
    let need = |key: &str, value: &str| {
        if value.is_empty() {
            Err(Error::Config(format!("`{key}` must be set for the configured tasks")))
        } else {
            Ok(())
        }
    };
    let mut raw = Vec::new();
    let mut treebank: Option<(TaskCorpus, Option<TaskCorpus>)> = None;
    for name in &config.tasks {
        let kind: TaskKind = name.parse()?;
        let (train, dev) = if kind == TaskKind::Translation {
            need("train_src", &config.train_src)?;
            need("train_tgt", &config.train_tgt)?;
            let train = parallel(&config.train_src, &config.train_tgt)?;
            let dev = if config.dev_src.is_empty() {
                None
            } else {
                Some(parallel(&config.dev_src, &config.dev_tgt)?)
            };
            (train, dev)
        } else {
            if treebank.is_none() {
                need("train_conll", &config.train_conll)?;
                let train = TaskCorpus::Treebank(read_conll(Path::new(&config.train_conll), layout)?);
                let dev = if config.dev_conll.is_empty() {
                    None
                } else {
                    Some(TaskCorpus::Treebank(read_conll(Path::new(&config.dev_conll), layout)?))
                };
                treebank = Some((train, dev));
            }
            treebank.clone().unwrap()
        };
        raw.push(RawTask {
            task: Task::new(kind),
            train,
            dev,
        });
    }
    prepare_corpora(config, raw)
}
