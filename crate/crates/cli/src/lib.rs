//! The `smtl` command line. `run` is the whole program; `main` only binds it
//! to the process.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Arg, ArgAction, ArgMatches, Command};
use serde_json::json;

use smtl_core::checkpoint::Checkpoint;
use smtl_core::config::Config;
use smtl_core::data::{prepare, read_tokenized, BpeModel};
use smtl_core::decode::{decode_all, BeamConfig};
use smtl_core::eval::{corpus_bleu, parse_scores, pos_accuracy, Accuracy, AttachmentScores};
use smtl_core::gradcheck::{check_random, RandomCheck};
use smtl_core::linearize::{linearize_distances, read_conll, ConllLayout, DistanceSequence};
use smtl_core::scheduler::{queue_distribution, ScheduleKind};
use smtl_core::task::{find_task, TaskKind};
use smtl_core::train::{sweep, train, SweepPoint, SWEEP_HEADER};
use smtl_core::{synth, Error, ErrorClass};

/// Exit status for each error class; 2 is left to argument errors.
pub fn exit_code(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::Io => 3,
        ErrorClass::Config => 4,
        ErrorClass::Shape => 5,
        ErrorClass::Numeric => 6,
        ErrorClass::Data => 7,
    }
}

pub const USAGE_EXIT: i32 = 2;

fn config_args(cmd: Command) -> Command {
    Config::KEYS.iter().fold(cmd, |cmd, k| {
        let mut arg = Arg::new(k.name).long(k.name).value_name("VALUE").help(k.help);
        let dashed = k.name.replace('_', "-");
        if dashed != k.name {
            arg = arg.alias(dashed);
        }
        cmd.arg(arg)
    })
}

fn opt(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name).long(name).value_name("VALUE").help(help)
}

fn req(name: &'static str, help: &'static str) -> Arg {
    opt(name, help).required(true)
}

fn flag(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name).long(name).action(ArgAction::SetTrue).help(help)
}

pub fn command() -> Command {
    Command::new("smtl")
        .about("Scheduled multi-task training of attentional sequence-to-sequence models")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(
            Command::new("bpe-learn")
                .about("Learn a BPE merge list from tokenized text")
                .arg(
                    Arg::new("input")
                        .long("input")
                        .value_name("FILE")
                        .required(true)
                        .action(ArgAction::Append)
                        .help("tokenized text, one sentence per line; repeatable"),
                )
                .arg(req("merges", "number of merges to learn"))
                .arg(req("output", "where to write the model")),
        )
        .subcommand(
            Command::new("bpe-apply")
                .about("Segment tokenized text into subwords")
                .arg(req("model", "BPE model file"))
                .arg(opt("input", "input text (default: stdin)"))
                .arg(opt("output", "output text (default: stdout)"))
                .arg(flag("strip", "undo segmentation instead of applying it")),
        )
        .subcommand(
            Command::new("linearize")
                .about("Print the target sequences of a treebank, one sentence per line")
                .arg(req("conll", "treebank file"))
                .arg(opt("layout", "conllx, conll09, conllu or form,pos,head,deprel columns").default_value("conllx"))
                .arg(opt("task", "parse, pos or labels").default_value("parse"))
                .arg(opt("output", "output file (default: stdout)")),
        )
        .subcommand(config_args(
            Command::new("train")
                .about("Train a model; every configuration key is also a flag and flags win")
                .arg(opt("config", "configuration file")),
        ))
        .subcommand(
            Command::new("decode")
                .about("Translate or tag tokenized sentences with a checkpoint")
                .arg(req("checkpoint", "checkpoint file"))
                .arg(opt("input", "tokenized source text (default: stdin)"))
                .arg(opt("output", "output file (default: stdout)"))
                .arg(opt("task", "task to perform (default: the checkpoint's focus task)"))
                .arg(opt("beam", "beam width (default: from the checkpoint)"))
                .arg(flag("length-norm", "rank finished hypotheses by per-token log-probability")),
        )
        .subcommand(
            Command::new("eval")
                .about("Score predictions: bleu, pos or parse")
                .arg(req("metric", "bleu, pos or parse"))
                .arg(req("hyp", "predictions, one sentence per line (distances for parse)"))
                .arg(req("ref", "reference text, or a treebank for pos and parse"))
                .arg(opt("labels", "predicted labels for LAS, one sentence per line"))
                .arg(opt("layout", "treebank layout, as for linearize").default_value("conllx"))
                .arg(opt("csv", "also write the report as CSV to this file")),
        )
        .subcommand(
            Command::new("schedule-preview")
                .about("Print queue probabilities as CSV: t, focus, then each other queue")
                .arg(req("kind", "constant, exponential or sigmoid"))
                .arg(req("slope", "schedule slope"))
                .arg(req("t", "comma-separated epoch fractions"))
                .arg(opt("queues", "number of queues; the focus queue is first").default_value("2")),
        )
        .subcommand(config_args(
            Command::new("sweep")
                .about("Train a grid of schedules and task sets and write a CSV score table")
                .arg(opt("config", "base configuration file"))
                .arg(req("schedules", "comma-separated schedule kinds"))
                .arg(req("slopes", "comma-separated slopes"))
                .arg(opt("task-sets", "task lists separated by ';' (default: the config's tasks)"))
                .arg(opt("replicas", "seeded runs per grid point").default_value("1"))
                .arg(opt("output", "CSV file (default: stdout)")),
        ))
        .subcommand(
            Command::new("synth")
                .about("Write a synthetic corpus and a matching configuration")
                .arg(req("kind", "copy or reverse-parity"))
                .arg(req("dir", "output directory"))
                .arg(opt("pairs", "training pairs [default: 50 for copy, 20000 for reverse-parity]"))
                .arg(opt("dev", "dev pairs, reverse-parity only").default_value("1000"))
                .arg(opt("seed", "generator seed").default_value("1")),
        )
        .subcommand(
            Command::new("gradcheck")
                .about("Compare analytic gradients of a random tiny model with finite differences")
                .arg(opt("hidden", "model size").default_value("4"))
                .arg(opt("vocab", "source and target vocabulary size").default_value("12"))
                .arg(opt("max-len", "longest random sentence").default_value("5"))
                .arg(opt("examples", "random examples, alternating between two tasks").default_value("4"))
                .arg(opt("architecture", "shared or separate").default_value("shared"))
                .arg(opt("seed", "seed for weights and examples").default_value("1"))
                .arg(opt("tolerance", "largest accepted relative error").default_value("1e-4")),
        )
}

/// Parses argv (including the program name) and runs one subcommand.
/// Returns the process exit status.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{}", e.render());
                return 0;
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                let _ = write!(err, "{}", e.render());
                return USAGE_EXIT;
            }
            let msg = e.render().to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            let _ = writeln!(err, "{}", json!({"error": "usage", "code": USAGE_EXIT, "message": first}));
            return USAGE_EXIT;
        }
    };
    match dispatch(&matches, out) {
        Ok(()) => 0,
        Err(e) => {
            let class = e.class();
            let code = exit_code(class);
            let _ = writeln!(
                err,
                "{}",
                json!({"error": class.name(), "code": code, "message": e.to_string()})
            );
            code
        }
    }
}

type Res<T> = Result<T, Error>;

fn dispatch(m: &ArgMatches, out: &mut dyn Write) -> Res<()> {
    match m.subcommand() {
        Some(("bpe-learn", m)) => bpe_learn(m),
        Some(("bpe-apply", m)) => bpe_apply(m, out),
        Some(("linearize", m)) => linearize(m, out),
        Some(("train", m)) => train_cmd(m, out),
        Some(("decode", m)) => decode_cmd(m, out),
        Some(("eval", m)) => eval_cmd(m, out),
        Some(("schedule-preview", m)) => schedule_preview(m, out),
        Some(("sweep", m)) => sweep_cmd(m, out),
        Some(("synth", m)) => synth_cmd(m, out),
        Some(("gradcheck", m)) => gradcheck_cmd(m, out),
        _ => unreachable!("clap enforces a subcommand"),
    }
}

fn get<'a>(m: &'a ArgMatches, name: &str) -> Option<&'a str> {
    m.get_one::<String>(name).map(String::as_str)
}

fn parsed<T: std::str::FromStr>(m: &ArgMatches, name: &str) -> Res<T>
where
    T::Err: std::fmt::Display,
{
    let raw = get(m, name).ok_or_else(|| Error::Config(format!("--{name} is required")))?;
    raw.parse()
        .map_err(|e| Error::Config(format!("--{name} `{raw}`: {e}")))
}

fn read_lines(path: Option<&str>) -> Res<Vec<String>> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Ok(text.lines().map(String::from).collect())
        }
        None => std::io::stdin()
            .lock()
            .lines()
            .collect::<Result<_, _>>()
            .map_err(|e| Error::io("<stdin>", e)),
    }
}

fn emit(path: Option<&str>, text: &str, out: &mut dyn Write) -> Res<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e)),
    }
}

fn bpe_learn(m: &ArgMatches) -> Res<()> {
    let mut lines = Vec::new();
    for p in m.get_many::<String>("input").into_iter().flatten() {
        lines.extend(read_lines(Some(p))?);
    }
    if lines.iter().all(|l| l.trim().is_empty()) {
        return Err(Error::EmptyInput("BPE training corpus"));
    }
    let merges: usize = parsed(m, "merges")?;
    let output = get(m, "output").unwrap();
    BpeModel::learn(&lines, merges).save(Path::new(output))
}

fn bpe_apply(m: &ArgMatches, out: &mut dyn Write) -> Res<()> {
    let model = BpeModel::load(Path::new(get(m, "model").unwrap()))?;
    let strip = m.get_flag("strip");
    let mut text = String::new();
    for line in read_lines(get(m, "input"))? {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if strip {
            text.push_str(&BpeModel::strip(&tokens));
        } else {
            text.push_str(&model.apply_words(&tokens).join(" "));
        }
        text.push('\n');
    }
    emit(get(m, "output"), &text, out)
}

fn linearize(m: &ArgMatches, out: &mut dyn Write) -> Res<()> {
    let layout = ConllLayout::by_name(get(m, "layout").unwrap())?;
    let kind: TaskKind = parsed(m, "task")?;
    let path = Path::new(get(m, "conll").unwrap());
    let mut text = String::new();
    for (i, s) in read_conll(path, layout)?.iter().enumerate() {
        let target = match kind {
            TaskKind::Parse => linearize_distances(&s.tree)?.tokens(),
            other => s.target(other, i)?,
        };
        text.push_str(&target.join(" "));
        text.push('\n');
    }
    emit(get(m, "output"), &text, out)
}

fn load_config(m: &ArgMatches) -> Res<(Config, Option<PathBuf>)> {
    let (mut cfg, base) = match get(m, "config") {
        Some(p) => {
            let p = Path::new(p);
            (Config::load(p)?, Some(p.parent().unwrap_or(Path::new(".")).to_path_buf()))
        }
        None => (Config::default(), None),
    };
    for k in Config::KEYS {
        if let Some(v) = get(m, k.name) {
            cfg.set(k.name, v)?;
        }
    }
    Ok((cfg, base))
}

fn train_cmd(m: &ArgMatches, out: &mut dyn Write) -> Res<()> {
    let (mut cfg, base) = load_config(m)?;
    if cfg.out_dir.is_empty() {
        let dir = base.unwrap_or_else(|| PathBuf::from(".")).join("run");
        cfg.out_dir = dir.to_string_lossy().into_owned();
    }
    let data = prepare(&cfg)?;
    let outcome = train(&cfg, &data)?;
    let summary = json!({
        "updates": outcome.updates,
        "draws": outcome.draws,
        "t": outcome.final_t,
        "best_bleu": outcome.tracker.best_score,
        "best_step": outcome.tracker.best_step,
        "checkpoint": outcome.tracker.best_path.as_ref().map(|p| p.to_string_lossy().into_owned()),
    });
    writeln!(out, "{summary}").map_err(|e| Error::io("<stdout>", e))
}

fn decode_cmd(m: &ArgMatches, out: &mut dyn Write) -> Res<()> {
    let ck = Checkpoint::load(Path::new(get(m, "checkpoint").unwrap()))?;
    let task_name = get(m, "task").unwrap_or(&ck.config.focus).to_string();
    let task = find_task(&ck.tasks, &task_name)?;
    let kind = ck.tasks[task.0].kind;
    let beam = BeamConfig {
        width: match get(m, "beam") {
            Some(_) => parsed(m, "beam")?,
            None => ck.config.beam,
        },
        length_norm: m.get_flag("length-norm") || ck.config.length_norm,
    };
    let lines = read_lines(get(m, "input"))?;
    let sources: Vec<Vec<u32>> = lines
        .iter()
        .map(|l| {
            let words: Vec<&str> = l.split_whitespace().collect();
            ck.src_vocab.encode(&ck.src_bpe.apply_words(&words))
        })
        .collect();
    let nonempty: Vec<Vec<u32>> = sources.iter().filter(|s| !s.is_empty()).cloned().collect();
    let mut decoded = decode_all(&ck.model, &nonempty, task, beam)?.into_iter();
    let mut text = String::new();
    for s in &sources {
        if !s.is_empty() {
            let tokens = ck.tgt_vocab.decode(&decoded.next().unwrap().tokens);
            if kind == TaskKind::Translation {
                text.push_str(&BpeModel::strip(&tokens));
            } else {
                text.push_str(&tokens.join(" "));
            }
        }
        text.push('\n');
    }
    emit(get(m, "output"), &text, out)
}

fn tokenized(path: &str) -> Res<Vec<Vec<String>>> {
    read_tokenized(Path::new(path))
}

fn eval_cmd(m: &ArgMatches, out: &mut dyn Write) -> Res<()> {
    let metric = get(m, "metric").unwrap();
    let hyp = tokenized(get(m, "hyp").unwrap())?;
    let reference = get(m, "ref").unwrap();
    let layout = ConllLayout::by_name(get(m, "layout").unwrap())?;
    let mut rows: Vec<(&str, f64)> = Vec::new();
    let text = match metric {
        "bleu" => {
            let refs = tokenized(reference)?;
            let r = corpus_bleu(&hyp, &refs)?;
            rows.push(("bleu", r.score));
            for (i, p) in r.precisions.iter().enumerate() {
                rows.push((["p1", "p2", "p3", "p4"][i], 100.0 * p));
            }
            rows.push(("brevity_penalty", r.brevity_penalty));
            format!("{r}\n")
        }
        "pos" | "parse" => {
            let gold = read_conll(Path::new(reference), layout)?;
            if gold.len() != hyp.len() {
                return Err(Error::LengthMismatch {
                    index: gold.len().min(hyp.len()),
                    what: "prediction lines",
                    expected: gold.len(),
                    found: hyp.len(),
                });
            }
            if metric == "pos" {
                let mut acc = Accuracy::default();
                for (h, g) in hyp.iter().zip(&gold) {
                    acc.merge(pos_accuracy(h, &g.pos));
                }
                rows.push(("pos", acc.percent()));
                format!("POS accuracy = {:.2} ({}/{})\n", acc.percent(), acc.correct, acc.total)
            } else {
                let labels = match get(m, "labels") {
                    Some(p) => Some(tokenized(p)?),
                    None => None,
                };
                let mut att = AttachmentScores::default();
                for (i, (h, g)) in hyp.iter().zip(&gold).enumerate() {
                    let l: &[String] = labels.as_ref().and_then(|l| l.get(i)).map_or(&[], |v| v.as_slice());
                    att.merge(parse_scores(&DistanceSequence::parse_tokens(h), l, &g.tree));
                }
                rows.push(("uas", att.uas()));
                if labels.is_some() {
                    rows.push(("las", att.las()));
                    format!("UAS = {:.2}, LAS = {:.2}\n", att.uas(), att.las())
                } else {
                    format!("UAS = {:.2}\n", att.uas())
                }
            }
        }
        other => return Err(Error::Config(format!("unknown metric `{other}`"))),
    };
    if let Some(csv) = get(m, "csv") {
        let mut s = String::from("metric,value\n");
        for (k, v) in &rows {
            s.push_str(&format!("{k},{v:.4}\n"));
        }
        std::fs::write(csv, s).map_err(|e| Error::io(csv, e))?;
    }
    emit(None, &text, out)
}

fn schedule_preview(m: &ArgMatches, out: &mut dyn Write) -> Res<()> {
    let kind: ScheduleKind = get(m, "kind").unwrap().parse()?;
    let slope: f64 = parsed(m, "slope")?;
    let queues: usize = parsed(m, "queues")?;
    if queues == 0 {
        return Err(Error::Config("--queues must be >= 1".into()));
    }
    let mut header = String::from("t,focus");
    for q in 1..queues {
        header.push_str(&format!(",queue{q}"));
    }
    let mut text = header + "\n";
    for raw in get(m, "t").unwrap().split(',') {
        let t: f64 = raw
            .trim()
            .parse()
            .map_err(|e| Error::Config(format!("--t `{raw}`: {e}")))?;
        let p = kind.probability(slope, t)?;
        let dist = queue_distribution(p, 0, queues);
        let cells: Vec<String> = dist.iter().map(|x| x.to_string()).collect();
        text.push_str(&format!("{},{}\n", raw.trim(), cells.join(",")));
    }
    emit(None, &text, out)
}

fn sweep_cmd(m: &ArgMatches, out: &mut dyn Write) -> Res<()> {
    let (mut cfg, base) = load_config(m)?;
    if cfg.out_dir.is_empty() {
        let dir = base.unwrap_or_else(|| PathBuf::from(".")).join("sweep");
        cfg.out_dir = dir.to_string_lossy().into_owned();
    }
    let schedules = get(m, "schedules")
        .unwrap()
        .split(',')
        .map(|s| s.trim().parse::<ScheduleKind>())
        .collect::<Res<Vec<_>>>()?;
    let slopes = get(m, "slopes")
        .unwrap()
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("--slopes `{s}`: {e}")))
        })
        .collect::<Res<Vec<_>>>()?;
    let task_sets: Vec<Vec<String>> = match get(m, "task-sets") {
        Some(s) => s
            .split(';')
            .map(|set| set.split(',').map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect())
            .collect(),
        None => vec![cfg.tasks.clone()],
    };
    let replicas: usize = parsed(m, "replicas")?;
    let mut grid = Vec::new();
    for &schedule in &schedules {
        for &slope in &slopes {
            for tasks in &task_sets {
                grid.push(SweepPoint {
                    schedule,
                    slope,
                    tasks: tasks.clone(),
                });
            }
        }
    }
    let rows = sweep(&cfg, &grid, replicas)?;
    let mut text = format!("{SWEEP_HEADER}\n");
    for r in rows {
        text.push_str(&r.to_csv());
        text.push('\n');
    }
    emit(get(m, "output"), &text, out)
}

fn synth_cmd(m: &ArgMatches, out: &mut dyn Write) -> Res<()> {
    let dir = Path::new(get(m, "dir").unwrap());
    let kind = get(m, "kind").unwrap();
    let pairs: usize = match get(m, "pairs") {
        Some(_) => parsed(m, "pairs")?,
        None if kind == "reverse-parity" => 20_000,
        None => 50,
    };
    let dev: usize = parsed(m, "dev")?;
    let seed: u64 = parsed(m, "seed")?;
    let cfg = match kind {
        "copy" => synth::write_copy(dir, pairs, seed)?,
        "reverse-parity" => synth::write_reverse_parity(dir, pairs, dev, seed)?,
        other => return Err(Error::Config(format!("unknown synthetic corpus `{other}`"))),
    };
    writeln!(out, "{}", cfg.display()).map_err(|e| Error::io("<stdout>", e))
}

fn gradcheck_cmd(m: &ArgMatches, out: &mut dyn Write) -> Res<()> {
    let setup = RandomCheck {
        hidden: parsed(m, "hidden")?,
        vocab: parsed(m, "vocab")?,
        max_len: parsed(m, "max-len")?,
        examples: parsed(m, "examples")?,
        architecture: get(m, "architecture").unwrap().parse()?,
        seed: parsed(m, "seed")?,
    };
    let tolerance: f64 = parsed(m, "tolerance")?;
    let report = check_random(setup)?;
    let worst = report.worst.as_ref().map(|(p, k)| format!("{p}[{k}]"));
    writeln!(
        out,
        "{}",
        json!({"checked": report.checked, "max_relative_error": report.max_relative_error, "worst": worst})
    )
    .map_err(|e| Error::io("<stdout>", e))?;
    if report.max_relative_error > tolerance {
        return Err(Error::GradientMismatch(format!(
            "relative error {} exceeds {tolerance} at {}",
            report.max_relative_error,
            worst.unwrap_or_default()
        )));
    }
    Ok(())
}
