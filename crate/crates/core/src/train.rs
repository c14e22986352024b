//! Scheduled multi-task training loop, dev evaluation and model selection.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::autodiff::{AdamConfig, AdamState, Graph, GradBuffer};
use crate::checkpoint::{model_config, Checkpoint};
use crate::config::Config;
use crate::data::bpe::BpeModel;
use crate::data::{MiniBatch, MiniBatcher, PreparedData};
use crate::decode::{decode_all, BeamConfig};
use crate::error::{Error, Result};
use crate::eval::{corpus_bleu, parse_scores, pos_accuracy, Accuracy, AttachmentScores};
use crate::linearize::DistanceSequence;
use crate::model::Seq2Seq;
use crate::scheduler::{ScheduleState, TaskQueue};
use crate::task::{find_task, TaskId, TaskKind, TrainingExample};

/// Examples per gradient work unit. Fixed so that the reduction order, and
/// with it every floating-point sum, does not depend on the thread count.
const CHUNK: usize = 4;

pub const CHECKPOINT_FILE: &str = "best.ckpt";
pub const LOG_FILE: &str = "train.log";

/// Dev scores for one task at one evaluation. BLEU is computed for every
/// task; for syntactic tasks it is taken over the tag sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskScores {
    pub task: String,
    pub bleu: f64,
    pub pos: Option<f64>,
    pub uas: Option<f64>,
    pub las: Option<f64>,
    pub label_accuracy: Option<f64>,
}

impl TaskScores {
    fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("bleu".into(), json!(self.bleu));
        for (k, v) in [
            ("pos", self.pos),
            ("uas", self.uas),
            ("las", self.las),
            ("label_accuracy", self.label_accuracy),
        ] {
            if let Some(v) = v {
                m.insert(k.into(), json!(v));
            }
        }
        Value::Object(m)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub step: usize,
    pub t: f64,
    pub scores: Vec<TaskScores>,
}

impl EvalRecord {
    pub fn task(&self, name: &str) -> Option<&TaskScores> {
        self.scores.iter().find(|s| s.task == name)
    }
}

/// Keeps the best focus-task dev BLEU seen so far.
#[derive(Clone, Debug, Default)]
pub struct BestModelTracker {
    pub best_score: Option<f64>,
    pub best_step: Option<usize>,
    pub best_path: Option<PathBuf>,
    pub history: Vec<EvalRecord>,
}

impl BestModelTracker {
    /// Records an evaluation; returns true if it is a new best. A tie
    /// replaces the best, since the later model has seen more data.
    pub fn observe(&mut self, record: EvalRecord, score: f64) -> bool {
        let step = record.step;
        self.history.push(record);
        if self.best_score.is_none_or(|b| score >= b) {
            self.best_score = Some(score);
            self.best_step = Some(step);
            true
        } else {
            false
        }
    }

    pub fn best_record(&self) -> Option<&EvalRecord> {
        let step = self.best_step?;
        self.history.iter().find(|r| r.step == step)
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub tracker: BestModelTracker,
    pub updates: usize,
    pub draws: u64,
    pub final_t: f64,
    /// The selected model, or `None` when no evaluation ran.
    pub best: Option<Checkpoint>,
}

fn hypothesis_tokens(data: &PreparedData, kind: TaskKind, ids: &[u32]) -> Vec<String> {
    let subwords = data.tgt_vocab.decode(ids);
    if kind == TaskKind::Translation {
        BpeModel::strip_to_words(&subwords)
    } else {
        subwords
    }
}

/// Decodes every dev set and scores it.
pub fn evaluate(model: &Seq2Seq, data: &PreparedData, beam: BeamConfig) -> Result<Vec<TaskScores>> {
    let mut scores = Vec::new();
    let mut parse_pred: Option<(usize, Vec<Vec<String>>)> = None;
    let mut label_pred: Option<(usize, Vec<Vec<String>>)> = None;
    for (i, task) in data.tasks.iter().enumerate() {
        let dev = &data.dev[i];
        if dev.is_empty() {
            continue;
        }
        let hyps = decode_all(model, &dev.sources, TaskId(i), beam)?;
        let hyps: Vec<Vec<String>> = hyps
            .iter()
            .map(|h| hypothesis_tokens(data, task.kind, &h.tokens))
            .collect();
        let bleu = corpus_bleu(&hyps, &dev.references)?.score;
        let mut s = TaskScores {
            task: task.name.clone(),
            bleu,
            pos: None,
            uas: None,
            las: None,
            label_accuracy: None,
        };
        match task.kind {
            TaskKind::Pos => {
                let mut acc = Accuracy::default();
                for (h, r) in hyps.iter().zip(&dev.references) {
                    acc.merge(pos_accuracy(h, r));
                }
                s.pos = Some(acc.percent());
            }
            TaskKind::Labels => {
                let mut acc = Accuracy::default();
                for (h, r) in hyps.iter().zip(&dev.references) {
                    acc.merge(pos_accuracy(h, r));
                }
                s.label_accuracy = Some(acc.percent());
                label_pred = Some((i, hyps.clone()));
            }
            TaskKind::Parse if dev.trees.len() == dev.len() => {
                let mut att = AttachmentScores::default();
                let none: [&str; 0] = [];
                for (h, tree) in hyps.iter().zip(&dev.trees) {
                    att.merge(parse_scores(&DistanceSequence::parse_tokens(h), &none, tree));
                }
                s.uas = Some(att.uas());
                parse_pred = Some((i, hyps.clone()));
            }
            _ => {}
        }
        scores.push(s);
    }
    // Labeled attachment needs both the parse and the label predictions of
    // the same treebank sentences.
    if let (Some((pi, heads)), Some((li, labels))) = (parse_pred, label_pred) {
        let trees = &data.dev[pi].trees;
        if data.dev[li].trees == *trees {
            let mut att = AttachmentScores::default();
            for ((h, l), tree) in heads.iter().zip(&labels).zip(trees) {
                att.merge(parse_scores(&DistanceSequence::parse_tokens(h), l, tree));
            }
            let name = &data.tasks[pi].name;
            if let Some(s) = scores.iter_mut().find(|s| &s.task == name) {
                s.las = Some(att.las());
            }
        }
    }
    Ok(scores)
}

/// Mean sequence loss of a batch and its gradient.
fn batch_gradient(model: &Seq2Seq, examples: &[&TrainingExample]) -> Result<(Vec<f64>, GradBuffer)> {
    let parts: Vec<Result<(Vec<f64>, GradBuffer)>> = examples
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut buf = GradBuffer::new(&model.params);
            let mut losses = Vec::with_capacity(chunk.len());
            for ex in chunk {
                let mut g = Graph::new();
                let loss = model.sequence_loss(&mut g, ex)?;
                g.backward(loss)?;
                g.accumulate_into(&mut buf);
                losses.push(g.scalar(loss));
            }
            Ok((losses, buf))
        })
        .collect();
    let mut losses = Vec::with_capacity(examples.len());
    let mut total = GradBuffer::new(&model.params);
    for p in parts {
        let (l, b) = p?;
        losses.extend(l);
        total.merge(&b);
    }
    total.scale(1.0 / examples.len() as f64);
    Ok((losses, total))
}

struct Log(Option<BufWriter<File>>);

impl Log {
    fn write(&mut self, v: &Value) -> Result<()> {
        if let Some(w) = &mut self.0 {
            writeln!(w, "{v}").map_err(|e| Error::io(LOG_FILE, e))?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        if let Some(w) = &mut self.0 {
            w.flush().map_err(|e| Error::io(LOG_FILE, e))?;
        }
        Ok(())
    }
}

fn dump_batch(dir: Option<&Path>, step: usize, batch: &MiniBatch) -> Error {
    let text = serde_json::to_string(&batch.draws).unwrap_or_default();
    if let Some(dir) = dir {
        let path = dir.join(format!("nonfinite-step{step}.json"));
        if std::fs::write(&path, &text).is_ok() {
            return Error::NonFiniteLoss { step, dump: path };
        }
    }
    Error::NonFiniteLossInline { step, batch: text }
}

fn make_checkpoint(config: &Config, data: &PreparedData, model: &Seq2Seq, step: usize) -> Checkpoint {
    let mut model = model.clone();
    model.params.drop_grads();
    Checkpoint {
        config: config.clone(),
        tasks: data.tasks.clone(),
        src_vocab: data.src_vocab.clone(),
        tgt_vocab: data.tgt_vocab.clone(),
        src_bpe: data.src_bpe.clone(),
        tgt_bpe: data.tgt_bpe.clone(),
        step: step as u64,
        model,
    }
}

/// Seeds of the independent random streams of a run.
fn stream_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stream)
}

pub fn train(config: &Config, data: &PreparedData) -> Result<TrainOutcome> {
    config.validate()?;
    if config.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| train_inner(config, data))
    } else {
        train_inner(config, data)
    }
}

fn train_inner(config: &Config, data: &PreparedData) -> Result<TrainOutcome> {
    let focus = find_task(&data.tasks, &config.focus)?;
    let out_dir = config.out_dir();
    if let Some(dir) = &out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut log = Log(match &out_dir {
        Some(dir) => {
            let path = dir.join(LOG_FILE);
            Some(BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?))
        }
        None => None,
    });

    let mc = model_config(config, &data.tasks, &data.src_vocab, &data.tgt_vocab);
    let mut model = Seq2Seq::new(mc, &mut ChaCha8Rng::seed_from_u64(stream_seed(config.seed, 0)))?;
    let mut queues = data
        .train
        .iter()
        .enumerate()
        .map(|(i, ex)| TaskQueue::new(TaskId(i), ex.clone(), stream_seed(config.seed, 10 + i as u64), true))
        .collect::<Result<Vec<_>>>()?;
    let mut state = ScheduleState::new(
        config.schedule,
        config.slope,
        focus.0,
        queues.len(),
        data.train[focus.0].len(),
    )?;
    let mut sampler = ChaCha8Rng::seed_from_u64(stream_seed(config.seed, 1));
    let mut batcher = MiniBatcher::new(config.batch_words);
    let mut adam = AdamState::new(AdamConfig {
        lr: config.lr,
        beta1: config.beta1,
        beta2: config.beta2,
        eps: config.eps,
    });
    let beam = BeamConfig {
        width: config.beam,
        length_norm: config.length_norm,
    };

    let mut tracker = BestModelTracker::default();
    let mut best: Option<Checkpoint> = None;
    let mut updates = 0usize;
    let mut last_eval: Option<usize> = None;
    let mut next_eval_t = 0.1;
    let max_updates = config.max_updates.unwrap_or(usize::MAX);

    let run_eval = |model: &Seq2Seq,
                        step: usize,
                        t: f64,
                        log: &mut Log,
                        tracker: &mut BestModelTracker,
                        best: &mut Option<Checkpoint>|
     -> Result<()> {
        let scores = evaluate(model, data, beam)?;
        let mut dev = Map::new();
        for s in &scores {
            dev.insert(s.task.clone(), s.to_json());
        }
        log.write(&json!({"step": step, "t": t, "dev": Value::Object(dev)}))?;
        let focus_bleu = scores
            .iter()
            .find(|s| s.task == config.focus)
            .map(|s| s.bleu)
            .ok_or_else(|| Error::Config(format!("focus task `{}` has no dev set", config.focus)))?;
        if tracker.observe(EvalRecord { step, t, scores }, focus_bleu) {
            let ck = make_checkpoint(config, data, model, step);
            if let Some(dir) = &out_dir {
                let path = dir.join(CHECKPOINT_FILE);
                ck.save(&path)?;
                tracker.best_path = Some(path);
            }
            *best = Some(ck);
        }
        Ok(())
    };

    while state.t() < config.epochs && updates < max_updates {
        let batch = batcher.next_batch(&mut queues, &mut state, &mut sampler)?;
        let examples: Vec<&TrainingExample> = batch.draws.iter().map(|d| &d.example).collect();
        let (losses, grads) = batch_gradient(&model, &examples)?;
        updates += 1;
        if losses.iter().any(|l| !l.is_finite()) {
            log.flush()?;
            return Err(dump_batch(out_dir.as_deref(), updates, &batch));
        }
        for (d, loss) in batch.draws.iter().zip(&losses) {
            log.write(&json!({
                "step": updates,
                "t": d.t,
                "task": data.tasks[d.example.task.0].name,
                "loss": loss,
                "lr": config.lr,
            }))?;
        }
        grads.apply_to(&mut model.params);
        model.params.clip_grad_norm(config.clip);
        adam.step(&mut model.params)?;

        let due = if config.eval_every > 0 {
            updates % config.eval_every == 0
        } else if state.t() + 1e-12 >= next_eval_t {
            while next_eval_t <= state.t() + 1e-12 {
                next_eval_t += 0.1;
            }
            true
        } else {
            false
        };
        if due {
            run_eval(&model, updates, state.t(), &mut log, &mut tracker, &mut best)?;
            last_eval = Some(updates);
        }
    }
    if updates > 0 && last_eval != Some(updates) {
        run_eval(&model, updates, state.t(), &mut log, &mut tracker, &mut best)?;
    }
    log.flush()?;
    Ok(TrainOutcome {
        tracker,
        updates,
        draws: state.draws(),
        final_t: state.t(),
        best,
    })
}

/// One point of a sweep grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub schedule: crate::scheduler::ScheduleKind,
    pub slope: f64,
    pub tasks: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub point: SweepPoint,
    /// `None` for the mean over replicas.
    pub seed: Option<u64>,
    pub bleu: f64,
    pub pos: Option<f64>,
    pub uas: Option<f64>,
    pub las: Option<f64>,
}

pub const SWEEP_HEADER: &str = "scheduler,alpha,tasks,seed,bleu,pos,uas,las";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.2}"))
}

impl SweepRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{:.2},{},{},{}",
            self.point.schedule.name(),
            self.point.slope,
            self.point.tasks.join("+"),
            self.seed.map_or_else(|| "mean".to_string(), |s| s.to_string()),
            self.bleu,
            opt(self.pos),
            opt(self.uas),
            opt(self.las)
        )
    }
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.collect::<Option<Vec<_>>>()?;
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Trains every grid point `replicas` times with seeds `seed, seed+1, ...`.
/// Scores are those of the selected model; the syntactic columns come from
/// whichever task reports them. A mean row follows each point when there is
/// more than one replica.
pub fn sweep_with<F>(base: &Config, grid: &[SweepPoint], replicas: usize, mut load: F) -> Result<Vec<SweepRow>>
where
    F: FnMut(&Config) -> Result<PreparedData>,
{
    if grid.is_empty() || replicas == 0 {
        return Err(Error::Config("sweep needs at least one grid point and one replica".into()));
    }
    let mut rows = Vec::new();
    for (gi, point) in grid.iter().enumerate() {
        let mut cfg = base.clone();
        cfg.schedule = point.schedule;
        cfg.slope = point.slope;
        cfg.tasks = point.tasks.clone();
        let data = load(&cfg)?;
        let mut point_rows = Vec::new();
        for r in 0..replicas {
            let mut run = cfg.clone();
            run.seed = base.seed + r as u64;
            if let Some(dir) = base.out_dir() {
                run.out_dir = dir.join(format!("run{gi}-seed{}", run.seed)).to_string_lossy().into_owned();
            }
            let outcome = train(&run, &data)?;
            let rec = outcome.tracker.best_record();
            let pick = |f: fn(&TaskScores) -> Option<f64>| rec.and_then(|r| r.scores.iter().find_map(f));
            point_rows.push(SweepRow {
                point: point.clone(),
                seed: Some(run.seed),
                bleu: outcome.tracker.best_score.unwrap_or(0.0),
                pos: pick(|s| s.pos),
                uas: pick(|s| s.uas),
                las: pick(|s| s.las),
            });
        }
        if replicas > 1 {
            let mean = SweepRow {
                point: point.clone(),
                seed: None,
                bleu: point_rows.iter().map(|r| r.bleu).sum::<f64>() / replicas as f64,
                pos: mean_of(point_rows.iter().map(|r| r.pos)),
                uas: mean_of(point_rows.iter().map(|r| r.uas)),
                las: mean_of(point_rows.iter().map(|r| r.las)),
            };
            point_rows.push(mean);
        }
        rows.extend(point_rows);
    }
    Ok(rows)
}

pub fn sweep(base: &Config, grid: &[SweepPoint], replicas: usize) -> Result<Vec<SweepRow>> {
    sweep_with(base, grid, replicas, crate::data::prepare)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::prepare::{prepare_corpora, RawTask};
    use crate::linearize::TaskCorpus;
    use crate::scheduler::ScheduleKind;
    use crate::task::Task;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn tracker_moves_to_later_ties_only() {
        let mut t = BestModelTracker::default();
        let rec = |step| EvalRecord {
            step,
            t: 0.0,
            scores: Vec::new(),
        };
        assert!(t.observe(rec(1), 50.0));
        assert!(!t.observe(rec(2), 40.0));
        assert!(t.observe(rec(3), 50.0));
        assert_eq!((t.best_step, t.best_score), (Some(3), Some(50.0)));
        assert_eq!(t.history.len(), 3);
    }

    fn copy_data(cfg: &Config, with_aux: bool) -> PreparedData {
        let lines = ["a b c d", "b c d a", "c d a b", "d a b c", "a c b d"];
        let para = |f: &dyn Fn(&str) -> String| TaskCorpus::Parallel {
            source: lines.iter().map(|l| words(l)).collect(),
            target: lines.iter().map(|l| words(&f(l))).collect(),
        };
        let mut raw = vec![RawTask {
            task: Task::new(TaskKind::Translation),
            train: para(&|l| l.to_string()),
            dev: Some(para(&|l| l.to_string())),
        }];
        if with_aux {
            let tag = |l: &str| l.split(' ').map(|w| if w < "c" { "L" } else { "H" }).collect::<Vec<_>>().join(" ");
            raw.push(RawTask {
                task: Task::new(TaskKind::Pos),
                train: para(&tag),
                dev: Some(para(&tag)),
            });
        }
        prepare_corpora(cfg, raw).unwrap()
    }

    fn small(cfg: &mut Config) {
        cfg.hidden = 8;
        cfg.src_merges = 0;
        cfg.tgt_merges = 0;
        cfg.batch_words = 16;
        cfg.beam = 2;
        cfg.lr = 0.01;
    }

    #[test]
    fn zero_updates_leave_no_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = Config::default();
        small(&mut cfg);
        cfg.max_updates = Some(0);
        cfg.out_dir = dir.path().to_string_lossy().into_owned();
        let data = copy_data(&cfg, false);
        let out = train(&cfg, &data).unwrap();
        assert_eq!(out.updates, 0);
        assert!(out.tracker.best_score.is_none() && out.best.is_none());
        assert!(!dir.path().join(CHECKPOINT_FILE).exists());
    }

    #[test]
    fn logs_every_example_and_keeps_the_best_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = Config::default();
        small(&mut cfg);
        cfg.tasks = vec!["translation".into(), "pos".into()];
        cfg.schedule = ScheduleKind::Sigmoid;
        cfg.epochs = 2.0;
        cfg.out_dir = dir.path().to_string_lossy().into_owned();
        let data = copy_data(&cfg, true);
        let out = train(&cfg, &data).unwrap();
        assert!(out.final_t >= 2.0);

        let log = std::fs::read_to_string(dir.path().join(LOG_FILE)).unwrap();
        let records: Vec<Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        let examples = records.iter().filter(|r| r.get("task").is_some()).count();
        assert_eq!(examples as u64, out.draws);
        let evals: Vec<&Value> = records.iter().filter(|r| r.get("dev").is_some()).collect();
        assert_eq!(evals.len(), out.tracker.history.len());
        // Auxiliary scores are logged even though selection uses BLEU.
        assert!(evals[0]["dev"]["pos"]["pos"].is_number());

        let best = out.tracker.best_score.unwrap();
        let max = out
            .tracker
            .history
            .iter()
            .map(|r| r.task("translation").unwrap().bleu)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(best, max);
        let saved = Checkpoint::load(&dir.path().join(CHECKPOINT_FILE)).unwrap();
        assert_eq!(saved.step as usize, out.tracker.best_step.unwrap());
        assert_eq!(saved.model.params, out.best.unwrap().model.params);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let mut cfg = Config::default();
        small(&mut cfg);
        cfg.max_updates = Some(5);
        let data = copy_data(&cfg, false);
        cfg.threads = 1;
        let a = train(&cfg, &data).unwrap();
        cfg.threads = 3;
        let b = train(&cfg, &data).unwrap();
        assert_eq!(a.best.unwrap().model.params, b.best.unwrap().model.params);
    }

    #[test]
    fn constant_zero_never_draws_the_focus_task() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = Config::default();
        small(&mut cfg);
        cfg.tasks = vec!["translation".into(), "pos".into()];
        cfg.slope = 0.0;
        cfg.max_updates = Some(4);
        cfg.out_dir = dir.path().to_string_lossy().into_owned();
        let data = copy_data(&cfg, true);
        train(&cfg, &data).unwrap();
        let log = std::fs::read_to_string(dir.path().join(LOG_FILE)).unwrap();
        let tasks: Vec<String> = log
            .lines()
            .filter_map(|l| serde_json::from_str::<Value>(l).unwrap()["task"].as_str().map(String::from))
            .collect();
        assert!(!tasks.is_empty());
        assert!(tasks.iter().all(|t| t == "pos"));
    }

    #[test]
    fn sweep_rows_and_means() {
        let mut cfg = Config::default();
        small(&mut cfg);
        cfg.max_updates = Some(2);
        let grid = [
            SweepPoint {
                schedule: ScheduleKind::Constant,
                slope: 1.0,
                tasks: vec!["translation".into()],
            },
            SweepPoint {
                schedule: ScheduleKind::Constant,
                slope: 0.5,
                tasks: vec!["translation".into()],
            },
        ];
        let load = |c: &Config| Ok(copy_data(c, false));
        let one = sweep_with(&cfg, &grid[..1], 1, load).unwrap();
        assert_eq!(one.len(), 1);
        let rows = sweep_with(&cfg, &grid, 2, load).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[2].seed, None);
        assert!((rows[2].bleu - (rows[0].bleu + rows[1].bleu) / 2.0).abs() < 1e-12);
        assert_eq!(rows, sweep_with(&cfg, &grid, 2, load).unwrap());
        assert!(rows[2].to_csv().starts_with("constant,1,translation,mean,"));
    }
}
