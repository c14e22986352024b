//! Corpus BLEU and the syntactic accuracy metrics.
//!
//! BLEU follows the usual multi-bleu behaviour: clipped n-gram counts summed
//! over the corpus, no smoothing, a zero precision at any order gives 0.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::linearize::DependencyTree;

pub const MAX_ORDER: usize = 4;

/// Sufficient statistics for corpus BLEU. Merging is associative, so
/// sentence-parallel scoring can be combined in any order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

fn ngram_counts<'a, T: Eq + std::hash::Hash>(tokens: &'a [T], n: usize) -> HashMap<&'a [T], u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

impl BleuStats {
    pub fn sentence<T: Eq + std::hash::Hash>(hyp: &[T], reference: &[T]) -> Self {
        let mut s = BleuStats {
            hyp_len: hyp.len() as u64,
            ref_len: reference.len() as u64,
            ..Default::default()
        };
        for n in 1..=MAX_ORDER {
            let h = ngram_counts(hyp, n);
            let r = ngram_counts(reference, n);
            s.totals[n - 1] = hyp.len().saturating_sub(n - 1) as u64;
            s.matches[n - 1] = h
                .iter()
                .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
                .sum();
        }
        s
    }

    pub fn merge(&mut self, other: &BleuStats) {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    pub fn report(&self) -> BleuReport {
        let mut precisions = [0.0; MAX_ORDER];
        for n in 0..MAX_ORDER {
            if self.totals[n] > 0 {
                precisions[n] = self.matches[n] as f64 / self.totals[n] as f64;
            }
        }
        let brevity_penalty = if self.hyp_len == 0 {
            0.0
        } else if self.hyp_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        } else {
            1.0
        };
        let score = if precisions.iter().any(|&p| p == 0.0) {
            0.0
        } else {
            let mean_log = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
            100.0 * brevity_penalty * mean_log.exp()
        };
        BleuReport {
            precisions,
            brevity_penalty,
            hyp_len: self.hyp_len,
            ref_len: self.ref_len,
            score,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BleuReport {
    /// Modified n-gram precisions for n = 1..4, as fractions.
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: u64,
    pub ref_len: u64,
    /// BLEU scaled to [0, 100].
    pub score: f64,
}

impl fmt::Display for BleuReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.precisions.map(|x| x * 100.0);
        write!(
            f,
            "BLEU = {:.2}, {:.1}/{:.1}/{:.1}/{:.1} (BP={:.3}, ratio={:.3}, hyp_len={}, ref_len={})",
            self.score,
            p[0],
            p[1],
            p[2],
            p[3],
            self.brevity_penalty,
            if self.ref_len == 0 {
                0.0
            } else {
                self.hyp_len as f64 / self.ref_len as f64
            },
            self.hyp_len,
            self.ref_len
        )
    }
}

pub fn corpus_bleu<H, R, T>(hypotheses: &[H], references: &[R]) -> Result<BleuReport>
where
    H: AsRef<[T]>,
    R: AsRef<[T]>,
    T: Eq + std::hash::Hash,
{
    if hypotheses.len() != references.len() {
        return Err(Error::LengthMismatch {
            index: hypotheses.len().min(references.len()),
            what: "hypotheses",
            expected: references.len(),
            found: hypotheses.len(),
        });
    }
    if hypotheses.is_empty() {
        return Err(Error::EmptyInput("BLEU corpus"));
    }
    let mut total = BleuStats::default();
    for (h, r) in hypotheses.iter().zip(references) {
        total.merge(&BleuStats::sentence(h.as_ref(), r.as_ref()));
    }
    Ok(total.report())
}

/// Correct and total positions; sums across sentences give corpus scores.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
}

impl Accuracy {
    pub fn merge(&mut self, other: Accuracy) {
        self.correct += other.correct;
        self.total += other.total;
    }

    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    pub fn percent(&self) -> f64 {
        100.0 * self.fraction()
    }
}

/// Positional tag accuracy. Extra predicted tags are ignored and missing ones
/// count as wrong.
pub fn pos_accuracy<S: AsRef<str>, G: AsRef<str>>(pred: &[S], gold: &[G]) -> Accuracy {
    Accuracy {
        correct: pred
            .iter()
            .zip(gold)
            .filter(|(p, g)| p.as_ref() == g.as_ref())
            .count(),
        total: gold.len(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AttachmentScores {
    pub unlabeled: Accuracy,
    pub labeled: Accuracy,
}

impl AttachmentScores {
    pub fn merge(&mut self, other: AttachmentScores) {
        self.unlabeled.merge(other.unlabeled);
        self.labeled.merge(other.labeled);
    }

    pub fn uas(&self) -> f64 {
        self.unlabeled.percent()
    }

    pub fn las(&self) -> f64 {
        self.labeled.percent()
    }
}

/// Scores predicted distance tokens (already parsed, `None` where a token
/// was not a number) and labels against a gold tree.
pub fn parse_scores<S: AsRef<str>>(
    pred_distances: &[Option<i64>],
    pred_labels: &[S],
    gold: &DependencyTree,
) -> AttachmentScores {
    let n = gold.len();
    let mut scores = AttachmentScores {
        unlabeled: Accuracy { correct: 0, total: n },
        labeled: Accuracy { correct: 0, total: n },
    };
    for (i, d) in pred_distances.iter().enumerate().take(n) {
        let head = d.and_then(|d| (i as i64 + 1).checked_add(d));
        if head == Some(gold.heads[i] as i64) {
            scores.unlabeled.correct += 1;
            let label_ok = pred_labels
                .get(i)
                .zip(gold.labels.get(i))
                .is_some_and(|(p, g)| p.as_ref() == g);
            if label_ok {
                scores.labeled.correct += 1;
            }
        }
    }
    scores
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    /// Counts every n-gram by scanning all positions pairwise, no hashing.
    fn brute_bleu(hyps: &[Vec<&str>], refs: &[Vec<&str>]) -> f64 {
        let mut m = [0u64; 4];
        let mut t = [0u64; 4];
        let (mut hl, mut rl) = (0.0, 0.0);
        for (h, r) in hyps.iter().zip(refs) {
            hl += h.len() as f64;
            rl += r.len() as f64;
            for n in 1..=4 {
                if h.len() < n {
                    continue;
                }
                let mut used = vec![false; r.len().saturating_sub(n - 1)];
                for i in 0..=h.len() - n {
                    t[n - 1] += 1;
                    for (j, u) in used.iter_mut().enumerate() {
                        if !*u && h[i..i + n] == r[j..j + n] {
                            *u = true;
                            m[n - 1] += 1;
                            break;
                        }
                    }
                }
            }
        }
        if (0..4).any(|n| m[n] == 0) {
            return 0.0;
        }
        let lp: f64 = (0..4).map(|n| (m[n] as f64 / t[n] as f64).ln()).sum::<f64>() / 4.0;
        let bp = if hl < rl { (1.0 - rl / hl).exp() } else { 1.0 };
        100.0 * bp * lp.exp()
    }

    #[test]
    fn identical_corpus_scores_100() {
        let h = vec![toks("a b c d e"), toks("x y z w")];
        let r = corpus_bleu(&h, &h).unwrap();
        assert!((r.score - 100.0).abs() < 1e-12);
        assert_eq!(r.brevity_penalty, 1.0);
    }

    #[test]
    fn disjoint_corpus_scores_0() {
        let r = corpus_bleu(&[toks("a b c d")], &[toks("e f g h")]).unwrap();
        assert_eq!(r.score, 0.0);
    }

    #[test]
    fn clipped_example_matches_brute_force() {
        let h = vec![toks("the the the cat")];
        let r = vec![toks("the cat sat")];
        let rep = corpus_bleu(&h, &r).unwrap();
        // unigrams: "the" clipped to 1, "cat" 1 -> 2/4
        assert_eq!(rep.precisions[0], 0.5);
        // bigram "the cat" matches once out of 3
        assert!((rep.precisions[1] - 1.0 / 3.0).abs() < 1e-15);
        // no trigram matches, so the score is 0
        assert_eq!(rep.score, 0.0);
        assert_eq!(rep.score, brute_bleu(&h, &r));
    }

    #[test]
    fn brevity_penalty_applies_to_short_output() {
        let h = vec![toks("a b c d")];
        let r = vec![toks("a b c d e f")];
        let rep = corpus_bleu(&h, &r).unwrap();
        let bp = (1.0f64 - 6.0 / 4.0).exp();
        assert!((rep.brevity_penalty - bp).abs() < 1e-15);
        assert!((rep.score - 100.0 * bp).abs() < 1e-9);
    }

    #[test]
    fn errors_on_bad_input() {
        let empty: Vec<Vec<&str>> = Vec::new();
        assert!(corpus_bleu(&empty, &empty).is_err());
        assert!(corpus_bleu(&[toks("a")], &[toks("a"), toks("b")]).is_err());
    }

    #[test]
    fn display_has_two_decimals() {
        let h = vec![toks("a b c d")];
        let rep = corpus_bleu(&h, &h).unwrap();
        assert!(rep.to_string().starts_with("BLEU = 100.00,"));
    }

    #[test]
    fn pos_accuracy_conventions() {
        assert_eq!(pos_accuracy(&["A", "B"], &["A", "B"]).percent(), 100.0);
        assert_eq!(pos_accuracy(&["A", "B", "C", "D"], &["A", "B"]).percent(), 100.0);
        let short = pos_accuracy(&["A"], &["A", "B"]);
        assert_eq!((short.correct, short.total), (1, 2));
        let none: [&str; 0] = [];
        assert_eq!(pos_accuracy(&none, &["A"]).percent(), 0.0);
    }

    #[test]
    fn parse_scores_extremes() {
        let gold = DependencyTree::new(vec![2, 0, 2], vec!["nsubj".into(), "root".into(), "obj".into()]);
        let d = [Some(1), Some(-2), Some(-1)];
        let s = parse_scores(&d, &gold.labels, &gold);
        assert_eq!((s.uas(), s.las()), (100.0, 100.0));
        let none: [&str; 0] = [];
        let s = parse_scores(&[], &none, &gold);
        assert_eq!((s.uas(), s.las()), (0.0, 0.0));
        let s = parse_scores(&d, &["nsubj", "root", "iobj"], &gold);
        assert_eq!((s.unlabeled.correct, s.labeled.correct), (3, 2));
    }

    proptest! {
        #[test]
        fn bleu_matches_brute_force(
            corpus in prop::collection::vec(
                (prop::collection::vec(0u8..4, 0..9), prop::collection::vec(0u8..4, 1..9)), 1..5)
        ) {
            let names = ["a", "b", "c", "d"];
            let hyps: Vec<Vec<&str>> = corpus.iter().map(|(h, _)| h.iter().map(|&i| names[i as usize]).collect()).collect();
            let refs: Vec<Vec<&str>> = corpus.iter().map(|(_, r)| r.iter().map(|&i| names[i as usize]).collect()).collect();
            let got = corpus_bleu(&hyps, &refs).unwrap().score;
            prop_assert!((got - brute_bleu(&hyps, &refs)).abs() < 1e-9);
        }

        #[test]
        fn bleu_is_order_invariant(
            corpus in prop::collection::vec(
                (prop::collection::vec(0u8..3, 1..8), prop::collection::vec(0u8..3, 1..8)), 2..6)
        ) {
            let hyps: Vec<_> = corpus.iter().map(|(h, _)| h.clone()).collect();
            let refs: Vec<_> = corpus.iter().map(|(_, r)| r.clone()).collect();
            let mut rh = hyps.clone();
            let mut rr = refs.clone();
            rh.reverse();
            rr.reverse();
            prop_assert_eq!(corpus_bleu(&hyps, &refs).unwrap(), corpus_bleu(&rh, &rr).unwrap());
        }

        #[test]
        fn attachment_matches_positional_oracle(
            heads in prop::collection::vec(0usize..9, 8),
            pred in prop::collection::vec(prop::option::of(-9i64..9), 0..11),
            labels in prop::collection::vec(0u8..3, 8),
            plabels in prop::collection::vec(0u8..3, 0..11),
        ) {
            let l = |v: &[u8]| v.iter().map(|x| format!("l{x}")).collect::<Vec<_>>();
            let gold = DependencyTree::new(heads.clone(), l(&labels));
            let pl = l(&plabels);
            let s = parse_scores(&pred, &pl, &gold);
            let (mut u, mut la) = (0, 0);
            for i in 0..8 {
                let ok = matches!(pred.get(i), Some(Some(d)) if (i as i64 + 1 + d) == heads[i] as i64
                    && (0..=8).contains(&(i as i64 + 1 + d)));
                if ok {
                    u += 1;
                    if pl.get(i) == Some(&gold.labels[i]) {
                        la += 1;
                    }
                }
            }
            prop_assert_eq!(s.unlabeled.correct, u);
            prop_assert_eq!(s.labeled.correct, la);
            prop_assert_eq!(s.unlabeled.total, 8);
        }
    }
}
