//! Byte-pair encoding over characters with `@@` continuation markers.
//!
//! Learning greedily merges the most frequent adjacent symbol pair inside
//! words; ties go to the lexicographically smallest pair. Application replays
//! the merges in rank order, merging occurrences left to right. Every
//! subword except the last of its word carries the `@@` suffix, so
//! [`BpeModel::strip`] restores the word sequence exactly.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::error::{Error, Result};

pub const CONTINUATION: &str = "@@";
const HEADER: &str = "bpe-v1";

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BpeModel {
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
}

fn chars_of(word: &str) -> Vec<String> {
    word.chars().map(String::from).collect()
}

/// Replaces every non-overlapping occurrence of `pair`, scanning left to right.
fn merge_pair(symbols: &[String], pair: (&str, &str)) -> Vec<String> {
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && symbols[i] == pair.0 && symbols[i + 1] == pair.1 {
            out.push(format!("{}{}", pair.0, pair.1));
            i += 2;
        } else {
            out.push(symbols[i].clone());
            i += 1;
        }
    }
    out
}

impl BpeModel {
    pub fn from_merges(merges: Vec<(String, String)>) -> Self {
        let ranks = merges
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        BpeModel { merges, ranks }
    }

    /// Learns up to `num_merges` merges from whitespace-tokenized sentences.
    /// Stops early once no word has two symbols left.
    pub fn learn<S: AsRef<str>>(sentences: &[S], num_merges: usize) -> Self {
        let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
        for s in sentences {
            for w in s.as_ref().split_whitespace() {
                *freq.entry(w).or_default() += 1;
            }
        }
        let mut words: Vec<(Vec<String>, u64)> =
            freq.into_iter().map(|(w, c)| (chars_of(w), c)).collect();

        let mut merges = Vec::with_capacity(num_merges);
        for _ in 0..num_merges {
            let mut counts: HashMap<(&str, &str), u64> = HashMap::new();
            for (symbols, c) in &words {
                for pair in symbols.windows(2) {
                    *counts.entry((&pair[0], &pair[1])).or_default() += c;
                }
            }
            let Some((best, _)) = counts
                .into_iter()
                .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)))
            else {
                break;
            };
            let best = (best.0.to_string(), best.1.to_string());
            for (symbols, _) in &mut words {
                if symbols.len() > 1 {
                    *symbols = merge_pair(symbols, (&best.0, &best.1));
                }
            }
            merges.push(best);
        }
        Self::from_merges(merges)
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn len(&self) -> usize {
        self.merges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merges.is_empty()
    }

    /// Subwords of one word, without continuation markers.
    pub fn segment_word(&self, word: &str) -> Vec<String> {
        let mut symbols = chars_of(word);
        loop {
            let best = symbols
                .windows(2)
                .filter_map(|p| self.ranks.get(&(p[0].clone(), p[1].clone())))
                .min()
                .copied();
            let Some(rank) = best else { break };
            let (l, r) = &self.merges[rank];
            symbols = merge_pair(&symbols, (l, r));
        }
        // A word-final subword ending in the marker would be read back as a
        // continuation; peel its last character off as its own subword.
        if let Some(last) = symbols.last() {
            if last.ends_with(CONTINUATION) && last.chars().count() > 1 {
                let last = symbols.pop().unwrap();
                let cut = last.char_indices().last().unwrap().0;
                symbols.push(last[..cut].to_string());
                symbols.push(last[cut..].to_string());
            }
        }
        symbols
    }

    pub fn apply_words<S: AsRef<str>>(&self, words: &[S]) -> Vec<String> {
        let mut out = Vec::new();
        for w in words {
            let pieces = self.segment_word(w.as_ref());
            let n = pieces.len();
            for (i, p) in pieces.into_iter().enumerate() {
                if i + 1 < n {
                    out.push(format!("{p}{CONTINUATION}"));
                } else {
                    out.push(p);
                }
            }
        }
        out
    }

    pub fn apply(&self, sentence: &str) -> Vec<String> {
        let words: Vec<&str> = sentence.split_whitespace().collect();
        self.apply_words(&words)
    }

    /// Joins subwords back into words.
    pub fn strip_to_words<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
        let mut words = Vec::new();
        let mut current = String::new();
        let mut open = false;
        for t in tokens {
            let t = t.as_ref();
            if let Some(stem) = t.strip_suffix(CONTINUATION) {
                current.push_str(stem);
                open = true;
            } else {
                current.push_str(t);
                words.push(std::mem::take(&mut current));
                open = false;
            }
        }
        if open {
            words.push(current);
        }
        words
    }

    pub fn strip<S: AsRef<str>>(tokens: &[S]) -> String {
        Self::strip_to_words(tokens).join(" ")
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{HEADER} {}\n", self.merges.len());
        for (l, r) in &self.merges {
            s.push_str(l);
            s.push(' ');
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| parse_err(1, "missing header".into()))?;
        let mut parts = header.split(' ');
        if parts.next() != Some(HEADER) {
            return Err(parse_err(1, format!("expected `{HEADER} <count>`")));
        }
        let count: usize = parts
            .next()
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| parse_err(1, "bad merge count".into()))?;
        let mut merges = Vec::with_capacity(count);
        for (i, line) in lines.enumerate() {
            let mut it = line.split(' ');
            match (it.next(), it.next(), it.next()) {
                (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => {
                    merges.push((l.to_string(), r.to_string()))
                }
                _ => return Err(parse_err(i + 2, format!("bad merge line `{line}`"))),
            }
        }
        if merges.len() != count {
            return Err(parse_err(
                1,
                format!("header declares {count} merges, found {}", merges.len()),
            ));
        }
        Ok(Self::from_merges(merges))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairs(m: &BpeModel) -> Vec<(&str, &str)> {
        m.merges()
            .iter()
            .map(|(l, r)| (l.as_str(), r.as_str()))
            .collect()
    }

    #[test]
    fn zero_merges_is_character_level() {
        let m = BpeModel::learn(&["hello world"], 0);
        assert_eq!(m.apply("hi"), vec!["h@@", "i"]);
    }

    #[test]
    fn first_merge_matches_brute_force_pair_count() {
        let corpus = vec!["aaab"; 10];
        // Independent count over all adjacent character pairs of the corpus.
        let mut counts: BTreeMap<(char, char), usize> = BTreeMap::new();
        for s in &corpus {
            let cs: Vec<char> = s.chars().collect();
            for w in cs.windows(2) {
                *counts.entry((w[0], w[1])).or_default() += 1;
            }
        }
        let top = counts.iter().max_by_key(|(_, &c)| c).unwrap().0;
        assert_eq!(*top, ('a', 'a'));
        let m = BpeModel::learn(&corpus, 1);
        assert_eq!(pairs(&m), vec![("a", "a")]);
        // Left-to-right, non-overlapping: "aaab" -> "aa a b".
        assert_eq!(m.segment_word("aaab"), vec!["aa", "a", "b"]);
    }

    #[test]
    fn five_merge_trace_on_skewed_corpus() {
        // low x5, lower x2, newest x6, widest x3. Pair counts traced by hand:
        // es=9 st=9 -> (e,s); (es,t)=9; lo=7 ow=7 -> (l,o); (lo,w)=7;
        // ew=ne=(w,est)=6 -> (e,w).
        let mut corpus = Vec::new();
        corpus.extend(std::iter::repeat("low").take(5));
        corpus.extend(std::iter::repeat("lower").take(2));
        corpus.extend(std::iter::repeat("newest").take(6));
        corpus.extend(std::iter::repeat("widest").take(3));
        let m = BpeModel::learn(&corpus, 5);
        assert_eq!(
            pairs(&m),
            vec![("e", "s"), ("es", "t"), ("l", "o"), ("lo", "w"), ("e", "w")]
        );
        assert_eq!(m.apply("lower newest widest"), vec![
            "low@@", "e@@", "r", "n@@", "ew@@", "est", "w@@", "i@@", "d@@", "est"
        ]);
        assert_eq!(m.apply("lowest"), vec!["low@@", "est"]);
    }

    #[test]
    fn single_character_word_is_one_token() {
        let m = BpeModel::learn(&["abc abd"], 10);
        assert_eq!(m.apply("x"), vec!["x"]);
    }

    #[test]
    fn unseen_words_decompose() {
        let m = BpeModel::learn(&["abab abab"], 3);
        let toks = m.apply("zzab");
        assert_eq!(BpeModel::strip(&toks), "zzab");
        assert!(toks.len() >= 2);
    }

    #[test]
    fn trailing_marker_in_the_data_stays_lossless() {
        let m = BpeModel::learn(&["x@@ x@@ x@@"], 5);
        for w in ["x@@", "@@", "a@@@", "@"] {
            let toks = m.apply(w);
            assert_eq!(BpeModel::strip(&toks), w, "{toks:?}");
        }
    }

    #[test]
    fn model_file_round_trips() {
        let m = BpeModel::learn(&["the cat sat on the mat"], 6);
        let text = m.to_text();
        assert!(text.starts_with("bpe-v1 6\n"));
        let back = BpeModel::from_text(&text, Path::new("m.bpe")).unwrap();
        assert_eq!(back, m);
        assert!(BpeModel::from_text("bpe-v1 2\na b\n", Path::new("m.bpe")).is_err());
    }

    proptest! {
        #[test]
        fn strip_inverts_apply(
            words in prop::collection::vec("[ab@c]{1,6}", 0..8),
            merges in 0usize..12,
        ) {
            let training = vec!["abc cab ab@@ @c", "aab bca"];
            let m = BpeModel::learn(&training, merges);
            let sentence = words.join(" ");
            let toks = m.apply(&sentence);
            prop_assert_eq!(BpeModel::strip(&toks), sentence.clone());
            prop_assert_eq!(m.apply(&BpeModel::strip(&toks)), toks);
        }
    }
}
