//! Flat `key = value` configuration shared by the trainer and the CLI.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::Architecture;
use crate::scheduler::ScheduleKind;

/// A value that can be written as and read from a single config token.
pub trait ConfigValue: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! from_str_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                s.parse().map_err(|e| format!("{e}"))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

from_str_value!(u64, usize, f64, bool, String);

impl ConfigValue for Option<usize> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" | "" => Ok(None),
            v => v.parse().map(Some).map_err(|e| format!("{e}")),
        }
    }
    fn render(&self) -> String {
        self.map_or_else(|| "none".to_string(), |v| v.to_string())
    }
}

impl ConfigValue for Vec<String> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        let items: Vec<String> = s
            .split(',')
            .map(str::trim)
            .filter(|x| !x.is_empty())
            .map(String::from)
            .collect();
        if items.is_empty() {
            Err("empty list".into())
        } else {
            Ok(items)
        }
    }
    fn render(&self) -> String {
        self.join(",")
    }
}

impl ConfigValue for ScheduleKind {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.parse().map_err(|e: Error| e.to_string())
    }
    fn render(&self) -> String {
        self.name().to_string()
    }
}

impl ConfigValue for Architecture {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.parse().map_err(|e: Error| e.to_string())
    }
    fn render(&self) -> String {
        self.name().to_string()
    }
}

/// Name and help text of a configuration key.
#[derive(Clone, Copy, Debug)]
pub struct KeySpec {
    pub name: &'static str,
    pub help: &'static str,
    /// Keys describing where a run happens rather than what it computes.
    /// They are left out of checkpoints.
    pub environment: bool,
}

macro_rules! config_schema {
    ($( $(#[$env:ident])? $field:ident : $ty:ty = $default:expr ; $help:literal )*) => {
        #[derive(Clone, Debug, PartialEq)]
        pub struct Config {
            $( pub $field: $ty, )*
        }

        impl Default for Config {
            fn default() -> Self {
                Config { $( $field: $default, )* }
            }
        }

        impl Config {
            pub const KEYS: &'static [KeySpec] = &[
                $( KeySpec {
                    name: stringify!($field),
                    help: $help,
                    environment: config_schema!(@env $($env)?),
                }, )*
            ];

            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $( stringify!($field) => {
                        self.$field = <$ty as ConfigValue>::parse_value(value.trim())
                            .map_err(|e| Error::Config(format!("{key} = `{value}`: {e}")))?;
                    } )*
                    other => return Err(Error::Config(format!("unknown key `{other}`"))),
                }
                Ok(())
            }

            pub fn get(&self, key: &str) -> Option<String> {
                match key {
                    $( stringify!($field) => Some(ConfigValue::render(&self.$field)), )*
                    _ => None,
                }
            }
        }
    };
    (@env env) => { true };
    (@env) => { false };
}

config_schema! {
    seed: u64 = 1; "seed for initialisation, shuffling and task sampling"
    tasks: Vec<String> = vec!["translation".into()]; "comma-separated tasks among translation,pos,parse,labels"
    focus: String = "translation".into(); "task whose dev BLEU selects the model and whose corpus drives the epoch clock"
    schedule: ScheduleKind = ScheduleKind::Constant; "constant, exponential or sigmoid"
    slope: f64 = 0.5; "schedule slope; the focus probability itself for the constant schedule"
    epochs: f64 = 20.0; "training budget in epochs of the focus corpus"
    max_updates: Option<usize> = None; "optional cap on optimizer updates (none = unlimited)"
    eval_every: usize = 0; "evaluate every N updates; 0 evaluates every 0.1 focus epoch"
    batch_words: usize = 5000; "mini-batch limit in source plus target tokens"
    hidden: usize = 250; "embedding and decoder size; each encoder direction gets half"
    decoder_layers: usize = 2; "stacked decoder LSTM layers"
    architecture: Architecture = Architecture::Shared; "shared or separate decoders"
    dropout: f64 = 0.0; "reserved; must be 0"
    lr: f64 = 0.001; "Adam learning rate"
    beta1: f64 = 0.9; "Adam first-moment decay"
    beta2: f64 = 0.999; "Adam second-moment decay"
    eps: f64 = 1e-8; "Adam epsilon"
    clip: f64 = 5.0; "global gradient-norm clip"
    beam: usize = 5; "beam width for dev and test decoding"
    length_norm: bool = false; "rank finished hypotheses by per-token log-probability"
    max_len: usize = 60; "training sentences must be shorter than this many words"
    max_ratio: f64 = 1.5; "drop translation pairs whose target exceeds this multiple of the source"
    src_merges: usize = 8000; "BPE merges for the source side"
    tgt_merges: usize = 8000; "BPE merges for the translation target side"
    joint_bpe: bool = false; "learn one BPE model from both translation sides, using src_merges"
    train_src: String = String::new(); "translation training source file"
    train_tgt: String = String::new(); "translation training target file"
    dev_src: String = String::new(); "translation dev source file"
    dev_tgt: String = String::new(); "translation dev target file"
    train_conll: String = String::new(); "treebank for the syntactic tasks (training)"
    dev_conll: String = String::new(); "treebank for the syntactic tasks (dev)"
    conll_layout: String = "conllx".into(); "conllx, conll09, conllu or explicit form,pos,head,deprel columns"
    dev_limit: usize = 0; "evaluate on at most this many dev sentences per task (0 = all)"
    #[env] threads: usize = 0; "worker threads (0 = all cores)"
    #[env] out_dir: String = String::new(); "directory for the checkpoint and training log"
}

impl Config {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_text(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Makes relative data and output paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.train_src,
            &mut self.train_tgt,
            &mut self.dev_src,
            &mut self.dev_tgt,
            &mut self.train_conll,
            &mut self.dev_conll,
            &mut self.out_dir,
        ] {
            if !p.is_empty() && Path::new(p.as_str()).is_relative() {
                *p = base.join(p.as_str()).to_string_lossy().into_owned();
            }
        }
    }

    /// Every key, including environment keys.
    pub fn to_text(&self) -> String {
        self.render(true)
    }

    /// The keys that determine a run's results; stored in checkpoints.
    pub fn to_persisted_text(&self) -> String {
        self.render(false)
    }

    fn render(&self, environment: bool) -> String {
        let mut s = String::new();
        for k in Self::KEYS.iter().filter(|k| environment || !k.environment) {
            let _ = writeln!(s, "{} = {}", k.name, self.get(k.name).unwrap());
        }
        s
    }

    pub fn out_dir(&self) -> Option<PathBuf> {
        (!self.out_dir.is_empty()).then(|| PathBuf::from(&self.out_dir))
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(Error::Config("no tasks configured".into()));
        }
        if !self.tasks.contains(&self.focus) {
            return Err(Error::Config(format!(
                "focus task `{}` is not among tasks {:?}",
                self.focus, self.tasks
            )));
        }
        for (i, t) in self.tasks.iter().enumerate() {
            if self.tasks[..i].contains(t) {
                return Err(Error::Config(format!("task `{t}` listed twice")));
            }
        }
        if self.hidden < 2 || self.hidden % 2 != 0 {
            return Err(Error::Config(format!("hidden = {} must be even and >= 2", self.hidden)));
        }
        if self.decoder_layers == 0 {
            return Err(Error::Config("decoder_layers must be >= 1".into()));
        }
        if !(self.epochs > 0.0) {
            return Err(Error::Config("epochs must be > 0".into()));
        }
        if self.dropout != 0.0 {
            return Err(Error::Config("dropout is not supported; set dropout = 0".into()));
        }
        if self.beam == 0 {
            return Err(Error::Config("beam must be >= 1".into()));
        }
        if self.batch_words == 0 {
            return Err(Error::Config("batch_words must be >= 1".into()));
        }
        self.schedule.probability(self.slope, 0.0)?;
        Ok(())
    }
}
