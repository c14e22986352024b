//! Greedy and beam-search inference.

use rayon::prelude::*;

use crate::autodiff::Graph;
use crate::data::vocab::EOS;
use crate::error::{Error, Result};
use crate::model::{DecoderState, Seq2Seq};
use crate::task::TaskId;

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Output tokens without the task token or EOS.
    pub tokens: Vec<u32>,
    /// Total log-probability, including EOS when `finished`.
    pub log_prob: f64,
    /// False only when the length cap cut the search off.
    pub finished: bool,
}

impl Hypothesis {
    fn normalized(&self) -> f64 {
        self.log_prob / (self.tokens.len() + usize::from(self.finished)) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamConfig {
    pub width: usize,
    /// Rank finished hypotheses by per-token log-probability.
    pub length_norm: bool,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            width: 5,
            length_norm: false,
        }
    }
}

/// Decoding stops after `3 * source_len + 10` output tokens.
pub fn length_cap(source_len: usize) -> usize {
    3 * source_len + 10
}

struct Live {
    tokens: Vec<u32>,
    log_prob: f64,
    prev: u32,
    state: DecoderState,
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn greedy_decode(model: &Seq2Seq, source: &[u32], task: TaskId) -> Result<Hypothesis> {
    let mut g = Graph::new();
    let dec = model.select_decoder(task)?;
    let enc = model.encode(&mut g, source)?;
    let mut state = model.initial_state(&mut g)?;
    let mut prev = model.task_token(task)?;
    let mut hyp = Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: false,
    };
    for _ in 0..length_cap(source.len()) {
        let step = model.decode_step(&mut g, dec, prev, &state, &enc)?;
        let lp = g.value(step.log_probs);
        let best = argmax(lp);
        hyp.log_prob += lp[best];
        if best as u32 == EOS {
            hyp.finished = true;
            break;
        }
        hyp.tokens.push(best as u32);
        prev = best as u32;
        state = step.state;
    }
    Ok(hyp)
}

/// Beam search over the model's output distribution. Each step expands every
/// live hypothesis, keeps the `width` best candidates by total
/// log-probability (ties broken by hypothesis then token index), and moves
/// those ending in EOS to the finished list. Search stops once the best
/// finished hypothesis scores at least as well as every live one.
pub fn beam_decode(model: &Seq2Seq, source: &[u32], task: TaskId, beam: BeamConfig) -> Result<Hypothesis> {
    if beam.width == 0 {
        return Err(Error::Config("beam width must be >= 1".into()));
    }
    let mut g = Graph::new();
    let dec = model.select_decoder(task)?;
    let enc = model.encode(&mut g, source)?;
    let mut live = vec![Live {
        tokens: Vec::new(),
        log_prob: 0.0,
        prev: model.task_token(task)?,
        state: model.initial_state(&mut g)?,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for _ in 0..length_cap(source.len()) {
        let mut steps = Vec::with_capacity(live.len());
        let mut candidates = Vec::new();
        for (hi, h) in live.iter().enumerate() {
            let out = model.decode_step(&mut g, dec, h.prev, &h.state, &enc)?;
            for (v, &lp) in g.value(out.log_probs).iter().enumerate() {
                candidates.push((h.log_prob + lp, hi, v as u32));
            }
            steps.push(out.state);
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        candidates.truncate(beam.width);

        let mut next = Vec::with_capacity(beam.width);
        for (score, hi, v) in candidates {
            let parent = &live[hi];
            if v == EOS {
                finished.push(Hypothesis {
                    tokens: parent.tokens.clone(),
                    log_prob: score,
                    finished: true,
                });
            } else {
                let mut tokens = parent.tokens.clone();
                tokens.push(v);
                next.push(Live {
                    tokens,
                    log_prob: score,
                    prev: v,
                    state: steps[hi].clone(),
                });
            }
        }
        live = next;
        let best_finished = finished.iter().map(|h| h.log_prob).fold(f64::NEG_INFINITY, f64::max);
        let best_live = live.iter().map(|h| h.log_prob).fold(f64::NEG_INFINITY, f64::max);
        if live.is_empty() || best_finished >= best_live {
            break;
        }
    }

    if finished.is_empty() {
        // The cap was hit before any hypothesis ended.
        let best = live
            .into_iter()
            .max_by(|a, b| a.log_prob.total_cmp(&b.log_prob))
            .expect("beam keeps at least one hypothesis");
        return Ok(Hypothesis {
            tokens: best.tokens,
            log_prob: best.log_prob,
            finished: false,
        });
    }
    let key = |h: &Hypothesis| if beam.length_norm { h.normalized() } else { h.log_prob };
    // Earliest finished wins ties.
    let mut best = 0;
    for i in 1..finished.len() {
        if key(&finished[i]) > key(&finished[best]) {
            best = i;
        }
    }
    Ok(finished.swap_remove(best))
}

/// Decodes many sources in parallel; output order follows input order.
pub fn decode_all(model: &Seq2Seq, sources: &[Vec<u32>], task: TaskId, beam: BeamConfig) -> Result<Vec<Hypothesis>> {
    sources
        .par_iter()
        .map(|s| beam_decode(model, s, task, beam))
        .collect()
}

/// Log-probability the model assigns to `tokens` followed by EOS.
pub fn score_sequence(model: &Seq2Seq, source: &[u32], task: TaskId, tokens: &[u32]) -> Result<f64> {
    let mut g = Graph::new();
    let dec = model.select_decoder(task)?;
    let enc = model.encode(&mut g, source)?;
    let mut state = model.initial_state(&mut g)?;
    let mut prev = model.task_token(task)?;
    let mut total = 0.0;
    for &y in tokens.iter().chain(std::iter::once(&EOS)) {
        let step = model.decode_step(&mut g, dec, prev, &state, &enc)?;
        total += g.value(step.log_probs)[y as usize];
        state = step.state;
        prev = y;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Architecture, ModelConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(seed: u64, hidden: usize) -> Seq2Seq {
        let cfg = ModelConfig {
            hidden,
            src_vocab: 10,
            tgt_vocab: 8,
            decoder_layers: 2,
            architecture: Architecture::Shared,
            tasks: vec!["t".into()],
        };
        Seq2Seq::new(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    /// Output layer that always prefers `token`.
    fn forced(token: u32) -> Seq2Seq {
        let mut m = model(1, 4);
        let dec = m.decoders[0].clone();
        m.params.get_mut(dec.w_out).values_mut().fill(0.0);
        let b = m.params.get_mut(dec.b_out).values_mut();
        b.fill(-30.0);
        b[token as usize] = 30.0;
        m
    }

    #[test]
    fn width_one_is_greedy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..20 {
            let m = model(seed, 6);
            let src: Vec<u32> = (0..rng.gen_range(1..6)).map(|_| rng.gen_range(3..10)).collect();
            let g = greedy_decode(&m, &src, TaskId(0)).unwrap();
            let b = beam_decode(&m, &src, TaskId(0), BeamConfig { width: 1, length_norm: false }).unwrap();
            assert_eq!(g, b);
        }
    }

    #[test]
    fn forced_eos_gives_empty_output_for_any_width() {
        let m = forced(EOS);
        for width in 1..6 {
            let h = beam_decode(&m, &[3, 4], TaskId(0), BeamConfig { width, length_norm: false }).unwrap();
            assert!(h.tokens.is_empty() && h.finished);
        }
    }

    #[test]
    fn forced_token_runs_to_the_cap() {
        let m = forced(5);
        for width in [1, 3] {
            let h = beam_decode(&m, &[3, 4], TaskId(0), BeamConfig { width, length_norm: false }).unwrap();
            assert_eq!(h.tokens, vec![5; length_cap(2)]);
            assert!(!h.finished);
        }
    }

    #[test]
    fn reported_score_matches_rescoring() {
        let m = model(9, 6);
        let h = beam_decode(&m, &[4, 5, 6], TaskId(0), BeamConfig::default()).unwrap();
        if h.finished {
            let s = score_sequence(&m, &[4, 5, 6], TaskId(0), &h.tokens).unwrap();
            assert!((s - h.log_prob).abs() < 1e-9);
        }
    }

    #[test]
    fn parallel_decoding_keeps_order() {
        let m = model(2, 4);
        let sources: Vec<Vec<u32>> = (3..9).map(|t| vec![t, 3]).collect();
        let all = decode_all(&m, &sources, TaskId(0), BeamConfig::default()).unwrap();
        for (s, h) in sources.iter().zip(&all) {
            assert_eq!(&beam_decode(&m, s, TaskId(0), BeamConfig::default()).unwrap(), h);
        }
    }

    #[test]
    fn zero_width_is_rejected() {
        let m = model(2, 4);
        assert!(beam_decode(&m, &[3], TaskId(0), BeamConfig { width: 0, length_norm: false }).is_err());
    }
}
