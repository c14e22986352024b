//! Synthetic corpora for smoke tests and small end-to-end experiments.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// The twenty symbols `a` to `t`.
pub fn alphabet() -> Vec<String> {
    ('a'..='t').map(String::from).collect()
}

/// Parity tag of a symbol: its position in the alphabet, even or odd.
pub fn parity_tag(symbol: &str) -> &'static str {
    let idx = alphabet().iter().position(|s| s == symbol).unwrap_or(0);
    if idx % 2 == 0 {
        "EVEN"
    } else {
        "ODD"
    }
}

pub fn random_sentences(n: usize, min_len: usize, max_len: usize, seed: u64) -> Vec<Vec<String>> {
    let symbols = alphabet();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(min_len..=max_len);
            (0..len).map(|_| symbols[rng.gen_range(0..symbols.len())].clone()).collect()
        })
        .collect()
}

fn lines(sentences: &[Vec<String>]) -> String {
    let mut s = String::new();
    for l in sentences {
        let _ = writeln!(s, "{}", l.join(" "));
    }
    s
}

/// CoNLL-X rows with parity POS tags and a right-branching chain: every word
/// attaches to its right neighbour and the last word is the root.
pub fn parity_conll(sentences: &[Vec<String>]) -> String {
    let mut s = String::new();
    for sent in sentences {
        let n = sent.len();
        for (i, w) in sent.iter().enumerate() {
            let (head, rel) = if i + 1 == n { (0, "root") } else { (i + 2, "dep") };
            let tag = parity_tag(w);
            let _ = writeln!(s, "{}\t{w}\t_\t{tag}\t{tag}\t_\t{head}\t{rel}\t_\t_", i + 1);
        }
        s.push('\n');
    }
    s
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| Error::io(path, e))
}

/// A corpus whose target is its source. Dev is the training set, so dev BLEU
/// measures memorisation. Returns the config path.
pub fn write_copy(dir: &Path, pairs: usize, seed: u64) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let data = random_sentences(pairs, 4, 8, seed);
    let text = lines(&data);
    write(dir, "copy.src", &text)?;
    write(dir, "copy.tgt", &text)?;
    let cfg = format!(
        "# copy task, single queue\n\
         seed = {seed}\n\
         tasks = translation\n\
         focus = translation\n\
         schedule = constant\n\
         slope = 1\n\
         hidden = 32\n\
         lr = 0.01\n\
         batch_words = 50\n\
         epochs = 1000\n\
         max_updates = 2000\n\
         eval_every = 100\n\
         beam = 1\n\
         src_merges = 0\n\
         tgt_merges = 0\n\
         train_src = copy.src\n\
         train_tgt = copy.tgt\n\
         dev_src = copy.src\n\
         dev_tgt = copy.tgt\n"
    );
    let path = dir.join("copy.cfg");
    write(dir, "copy.cfg", &cfg)?;
    Ok(path)
}

/// Translation reverses the sequence; the auxiliary task tags each symbol
/// with its parity. Both tasks share the source symbols. Returns the config
/// path.
pub fn write_reverse_parity(dir: &Path, train: usize, dev: usize, seed: u64) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let all = random_sentences(train + dev, 4, 8, seed);
    let (tr, dv) = all.split_at(train);
    let rev = |s: &[Vec<String>]| -> Vec<Vec<String>> {
        s.iter().map(|x| x.iter().rev().cloned().collect()).collect()
    };
    write(dir, "train.src", &lines(tr))?;
    write(dir, "train.tgt", &lines(&rev(tr)))?;
    write(dir, "dev.src", &lines(dv))?;
    write(dir, "dev.tgt", &lines(&rev(dv)))?;
    write(dir, "train.conll", &parity_conll(tr))?;
    write(dir, "dev.conll", &parity_conll(dv))?;
    let cfg = format!(
        "# reverse translation with parity tagging as the auxiliary task\n\
         seed = {seed}\n\
         tasks = translation,pos\n\
         focus = translation\n\
         schedule = sigmoid\n\
         slope = 0.5\n\
         hidden = 64\n\
         lr = 0.003\n\
         batch_words = 100\n\
         epochs = 2\n\
         eval_every = 0\n\
         beam = 1\n\
         src_merges = 0\n\
         tgt_merges = 0\n\
         train_src = train.src\n\
         train_tgt = train.tgt\n\
         dev_src = dev.src\n\
         dev_tgt = dev.tgt\n\
         train_conll = train.conll\n\
         dev_conll = dev.conll\n"
    );
    let path = dir.join("mtl.cfg");
    write(dir, "mtl.cfg", &cfg)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::linearize::{read_conll, ConllLayout};

    #[test]
    fn parity_tags() {
        assert_eq!(parity_tag("a"), "EVEN");
        assert_eq!(parity_tag("b"), "ODD");
        assert_eq!(parity_tag("t"), "ODD");
    }

    #[test]
    fn generated_treebank_is_well_formed() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_reverse_parity(dir.path(), 20, 5, 3).unwrap();
        let sents = read_conll(&dir.path().join("train.conll"), ConllLayout::CONLLX).unwrap();
        assert_eq!(sents.len(), 20);
        assert!(sents.iter().all(|s| s.tree.is_well_formed()));
        let src = std::fs::read_to_string(dir.path().join("dev.src")).unwrap();
        let tgt = std::fs::read_to_string(dir.path().join("dev.tgt")).unwrap();
        let first_src: Vec<&str> = src.lines().next().unwrap().split(' ').collect();
        let mut first_tgt: Vec<&str> = tgt.lines().next().unwrap().split(' ').collect();
        first_tgt.reverse();
        assert_eq!(first_src, first_tgt);
        let c = Config::load(&cfg).unwrap();
        assert!(Path::new(&c.train_conll).is_absolute() || Path::new(&c.train_conll).exists());
    }

    #[test]
    fn same_seed_same_files() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_copy(a.path(), 10, 4).unwrap();
        write_copy(b.path(), 10, 4).unwrap();
        assert_eq!(
            std::fs::read(a.path().join("copy.src")).unwrap(),
            std::fs::read(b.path().join("copy.src")).unwrap()
        );
    }
}
