//! Central finite-difference check of the model's analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, GradBuffer, ParamId};
use crate::data::vocab::FIRST_TASK;
use crate::error::{Error, Result};
use crate::model::{Architecture, ModelConfig, Seq2Seq};
use crate::task::{TaskId, TrainingExample};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    /// Parameter name and element index of the worst entry.
    pub worst: Option<(String, usize)>,
}

fn total_loss(model: &Seq2Seq, examples: &[TrainingExample]) -> Result<f64> {
    let mut sum = 0.0;
    for ex in examples {
        sum += model.loss_value(ex)?;
    }
    Ok(sum)
}

/// Relative error with a floor on the denominator so that entries whose
/// gradient is essentially zero are judged by absolute error.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5)
}

/// Compares every parameter entry's gradient of the summed sequence loss
/// against `(L(w + h) - L(w - h)) / 2h`.
pub fn check_gradients(model: &Seq2Seq, examples: &[TrainingExample], step: f64) -> Result<GradCheckReport> {
    let mut grads = GradBuffer::new(&model.params);
    for ex in examples {
        let mut g = Graph::new();
        let loss = model.sequence_loss(&mut g, ex)?;
        g.backward(loss)?;
        g.accumulate_into(&mut grads);
    }
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        checked: 0,
        max_relative_error: 0.0,
        worst: None,
    };
    let ids: Vec<ParamId> = model.params.iter().map(|(id, _)| id).collect();
    for id in ids {
        let n = model.params.get(id).len();
        for k in 0..n {
            let orig = model.params.get(id).values()[k];
            probe.params.get_mut(id).values_mut()[k] = orig + step;
            let up = total_loss(&probe, examples)?;
            probe.params.get_mut(id).values_mut()[k] = orig - step;
            let down = total_loss(&probe, examples)?;
            probe.params.get_mut(id).values_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * step);
            let analytic = grads.get(id).map_or(0.0, |g| g[k]);
            let err = relative_error(analytic, numeric);
            report.checked += 1;
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = err;
                report.worst = Some((model.params.name(id).to_string(), k));
            }
        }
    }
    Ok(report)
}

/// Setup of a check on a random two-task model.
#[derive(Clone, Copy, Debug)]
pub struct RandomCheck {
    pub hidden: usize,
    pub vocab: usize,
    pub max_len: usize,
    pub examples: usize,
    pub architecture: Architecture,
    pub seed: u64,
}

impl Default for RandomCheck {
    fn default() -> Self {
        RandomCheck {
            hidden: 4,
            vocab: 12,
            max_len: 5,
            examples: 4,
            architecture: Architecture::Shared,
            seed: 1,
        }
    }
}

/// Builds the model and examples described by `setup` and checks them.
/// Examples alternate between the two tasks and avoid reserved ids.
pub fn check_random(setup: RandomCheck) -> Result<GradCheckReport> {
    let first_word = FIRST_TASK + 2;
    if setup.vocab <= first_word as usize || setup.max_len == 0 {
        return Err(Error::Config(format!(
            "gradient check needs vocab > {first_word} and max_len >= 1"
        )));
    }
    let cfg = ModelConfig {
        hidden: setup.hidden,
        src_vocab: setup.vocab,
        tgt_vocab: setup.vocab,
        decoder_layers: 2,
        architecture: setup.architecture,
        tasks: vec!["a".into(), "b".into()],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    let model = Seq2Seq::new(cfg, &mut rng)?;
    let sentence = |rng: &mut ChaCha8Rng| {
        let len = rng.gen_range(1..=setup.max_len);
        (0..len)
            .map(|_| rng.gen_range(first_word..setup.vocab as u32))
            .collect::<Vec<u32>>()
    };
    let examples: Vec<TrainingExample> = (0..setup.examples)
        .map(|i| TrainingExample {
            task: TaskId(i % 2),
            source: sentence(&mut rng),
            target: sentence(&mut rng),
        })
        .collect();
    check_gradients(&model, &examples, 1e-5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{ParamStore, Tensor};
    use crate::model::{lstm_step, LstmParams};

    #[test]
    fn floor_applies_to_tiny_gradients() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(2e-9, 1e-9) - 1e-4).abs() < 1e-12);
        assert!((relative_error(1.0, 1.001) - 0.001 / 1.001).abs() < 1e-12);
    }

    #[test]
    fn single_lstm_cell_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::new();
        let p = LstmParams {
            w: store.add("w", Tensor::glorot(12, 6, &mut rng)),
            b: store.add("b", Tensor::new(vec![12], Tensor::glorot(1, 12, &mut rng).values().to_vec())),
            input: 3,
            hidden: 3,
        };
        let loss = |store: &ParamStore| {
            let mut g = Graph::new();
            let x = g.vector(vec![0.5, -1.0, 0.25]).unwrap();
            let h = g.vector(vec![0.1, 0.2, -0.3]).unwrap();
            let c = g.vector(vec![-0.4, 0.0, 0.6]).unwrap();
            let (h1, c1) = lstm_step(&mut g, store, &p, x, h, c).unwrap();
            let (h2, _) = lstm_step(&mut g, store, &p, h1, h1, c1).unwrap();
            let s = g.inner(h2, h2).unwrap();
            (g, s)
        };
        let (mut g, s) = loss(&store);
        g.backward(s).unwrap();
        let mut buf = GradBuffer::new(&store);
        g.accumulate_into(&mut buf);
        for id in [p.w, p.b] {
            for k in 0..store.get(id).len() {
                let orig = store.get(id).values()[k];
                store.get_mut(id).values_mut()[k] = orig + 1e-6;
                let (g1, s1) = loss(&store);
                store.get_mut(id).values_mut()[k] = orig - 1e-6;
                let (g2, s2) = loss(&store);
                store.get_mut(id).values_mut()[k] = orig;
                let num = (g1.scalar(s1) - g2.scalar(s2)) / 2e-6;
                let err = relative_error(buf.get(id).unwrap()[k], num);
                assert!(err < 1e-5, "{} [{k}]: {err}", store.name(id));
            }
        }
    }

    #[test]
    fn full_model_matches_finite_differences() {
        for arch in [Architecture::Shared, Architecture::Separate] {
            let cfg = ModelConfig {
                hidden: 4,
                src_vocab: 12,
                tgt_vocab: 12,
                decoder_layers: 2,
                architecture: arch,
                tasks: vec!["a".into(), "b".into()],
            };
            let model = Seq2Seq::new(cfg, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
            let examples = [
                TrainingExample {
                    task: TaskId(0),
                    source: vec![3, 7, 11],
                    target: vec![5, 9],
                },
                TrainingExample {
                    task: TaskId(1),
                    source: vec![4, 4, 10, 6, 8],
                    target: vec![11, 6, 7, 5, 6],
                },
            ];
            let report = check_gradients(&model, &examples, 1e-5).unwrap();
            assert_eq!(report.checked, model.params.iter().map(|(_, p)| p.tensor.len()).sum::<usize>());
            assert!(report.max_relative_error < 1e-4, "{report:?}");
        }
    }

    #[test]
    fn random_setup_is_reproducible() {
        let a = check_random(RandomCheck::default()).unwrap();
        assert_eq!(a, check_random(RandomCheck::default()).unwrap());
        assert!(check_random(RandomCheck { vocab: 5, ..RandomCheck::default() }).is_err());
    }
}
