//! Attentional encoder-decoder shared by all tasks.
//!
//! The encoder is a single bidirectional LSTM layer whose directions each
//! have `hidden / 2` units, so `h_i = [h^F_i, h^B_i]` has the decoder's size
//! and dot attention needs no projection. The decoder is a stack of
//! unidirectional LSTMs primed with the task token; its top state `d_j`
//! attends over the encoder and feeds the output MLP
//!
//! ```text
//! g_j = tanh(W1_dec d_j + W1_att c_j)
//! u_j = tanh(g_j + W2_dec d_j + W2_att c_j)
//! p   = softmax(W_out u_j + b_out)
//! ```

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::autodiff::{Graph, NodeId, ParamId, ParamStore, Tensor};
use crate::data::vocab::{EOS, FIRST_TASK};
use crate::error::{Error, Result};
use crate::task::{TaskId, TrainingExample};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Architecture {
    /// One decoder for every task, selected by the task token.
    Shared,
    /// A private decoder and output layer per task over the shared encoder.
    Separate,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Shared => "shared",
            Architecture::Separate => "separate",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" | "shared-decoder" => Ok(Architecture::Shared),
            "separate" | "separate-decoders" => Ok(Architecture::Separate),
            other => Err(Error::Config(format!("unknown architecture `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub hidden: usize,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub decoder_layers: usize,
    pub architecture: Architecture,
    /// Task names; task `i` is primed with target id `FIRST_TASK + i`.
    pub tasks: Vec<String>,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden < 2 || self.hidden % 2 != 0 {
            return Err(Error::Config(format!("hidden size {} must be even", self.hidden)));
        }
        if self.tasks.is_empty() {
            return Err(Error::Config("model needs at least one task".into()));
        }
        if self.decoder_layers == 0 {
            return Err(Error::Config("decoder needs at least one layer".into()));
        }
        if self.tgt_vocab < FIRST_TASK as usize + self.tasks.len() || self.src_vocab < 3 {
            return Err(Error::Config("vocabularies are missing reserved tokens".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmParams {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderParams {
    pub embedding: ParamId,
    pub forward: LstmParams,
    pub backward: LstmParams,
}

/// Everything on the target side of the model for one decoder scope.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecoderParams {
    pub scope: String,
    pub embedding: ParamId,
    pub layers: Vec<LstmParams>,
    pub w1_dec: ParamId,
    pub w1_att: ParamId,
    pub w2_dec: ParamId,
    pub w2_att: ParamId,
    pub w_out: ParamId,
    pub b_out: ParamId,
}

impl DecoderParams {
    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.embedding];
        for l in &self.layers {
            ids.push(l.w);
            ids.push(l.b);
        }
        ids.extend([
            self.w1_dec,
            self.w1_att,
            self.w2_dec,
            self.w2_att,
            self.w_out,
            self.b_out,
        ]);
        ids
    }
}

/// Encoder states for one source sentence, as graph nodes.
#[derive(Clone, Debug)]
pub struct EncodedSource {
    pub states: Vec<NodeId>,
    /// The states stacked into a `[m, hidden]` matrix.
    pub matrix: NodeId,
}

/// Per-layer hidden and cell nodes; the top hidden state is `d_j`.
#[derive(Clone, Debug)]
pub struct DecoderState {
    pub hidden: Vec<NodeId>,
    pub cell: Vec<NodeId>,
}

impl DecoderState {
    pub fn top(&self) -> NodeId {
        *self.hidden.last().unwrap()
    }
}

#[derive(Clone, Debug)]
pub struct StepOutput {
    pub log_probs: NodeId,
    pub attention_weights: NodeId,
    pub context: NodeId,
    pub state: DecoderState,
}

#[derive(Clone, Debug)]
pub struct Seq2Seq {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub encoder: EncoderParams,
    pub decoders: Vec<DecoderParams>,
}

fn lstm_tensors<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> (Tensor, Tensor) {
    let w = Tensor::glorot(4 * hidden, input + hidden, rng);
    let mut b = Tensor::zeros(vec![4 * hidden]);
    // Gate order is input, forget, cell, output.
    b.values_mut()[hidden..2 * hidden].iter_mut().for_each(|x| *x = 1.0);
    (w, b)
}

fn decoder_scopes(config: &ModelConfig) -> Vec<String> {
    match config.architecture {
        Architecture::Shared => vec!["shared".to_string()],
        Architecture::Separate => config.tasks.clone(),
    }
}

/// Dot attention: `e_i = d · h_i`, softmax weights, weighted sum of states.
pub fn attend(g: &mut Graph, query: NodeId, enc: &EncodedSource) -> Result<(NodeId, NodeId)> {
    let scores = g.matvec(enc.matrix, query)?;
    let weights = g.softmax(scores)?;
    let context = g.matvec_t(enc.matrix, weights)?;
    Ok((weights, context))
}

/// One LSTM step; returns `(h, c)`.
pub fn lstm_step(
    g: &mut Graph,
    store: &ParamStore,
    p: &LstmParams,
    x: NodeId,
    h: NodeId,
    c: NodeId,
) -> Result<(NodeId, NodeId)> {
    let w = g.param(store, p.w);
    let b = g.param(store, p.b);
    let xh = g.concat(&[x, h])?;
    let gates = g.affine(w, xh, Some(b))?;
    let n = p.hidden;
    let i = g.slice(gates, 0, n)?;
    let f = g.slice(gates, n, n)?;
    let cand = g.slice(gates, 2 * n, n)?;
    let o = g.slice(gates, 3 * n, n)?;
    let i = g.sigmoid(i);
    let f = g.sigmoid(f);
    let cand = g.tanh(cand);
    let o = g.sigmoid(o);
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c_new = g.add(keep, write)?;
    let squashed = g.tanh(c_new);
    let h_new = g.mul(o, squashed)?;
    Ok((h_new, c_new))
}

impl Seq2Seq {
    pub fn new<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        let half = h / 2;
        let mut store = ParamStore::new();

        let embedding = store.add("encoder/embedding", Tensor::glorot(config.src_vocab, h, rng));
        let mut enc_lstm = |store: &mut ParamStore, dir: &str| {
            let (w, b) = lstm_tensors(h, half, rng);
            LstmParams {
                w: store.add(format!("encoder/{dir}/w"), w),
                b: store.add(format!("encoder/{dir}/b"), b),
                input: h,
                hidden: half,
            }
        };
        let forward = enc_lstm(&mut store, "forward");
        let backward = enc_lstm(&mut store, "backward");
        let encoder = EncoderParams {
            embedding,
            forward,
            backward,
        };

        let mut decoders = Vec::new();
        for scope in decoder_scopes(&config) {
            let embedding = store.add(
                format!("decoder/{scope}/embedding"),
                Tensor::glorot(config.tgt_vocab, h, rng),
            );
            let layers = (0..config.decoder_layers)
                .map(|l| {
                    let (w, b) = lstm_tensors(h, h, rng);
                    LstmParams {
                        w: store.add(format!("decoder/{scope}/layer{l}/w"), w),
                        b: store.add(format!("decoder/{scope}/layer{l}/b"), b),
                        input: h,
                        hidden: h,
                    }
                })
                .collect();
            let mut square = |name: &str| {
                store.add(format!("decoder/{scope}/mlp/{name}"), Tensor::glorot(h, h, rng))
            };
            let w1_dec = square("w1_dec");
            let w1_att = square("w1_att");
            let w2_dec = square("w2_dec");
            let w2_att = square("w2_att");
            let w_out = store.add(
                format!("output/{scope}/w"),
                Tensor::glorot(config.tgt_vocab, h, rng),
            );
            let b_out = store.add(format!("output/{scope}/b"), Tensor::zeros(vec![config.tgt_vocab]));
            decoders.push(DecoderParams {
                scope,
                embedding,
                layers,
                w1_dec,
                w1_att,
                w2_dec,
                w2_att,
                w_out,
                b_out,
            });
        }
        Ok(Seq2Seq {
            config,
            params: store,
            encoder,
            decoders,
        })
    }

    /// Rebuilds a model around loaded parameters, checking every name and shape.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let mut model = Seq2Seq::new(config, &mut rng)?;
        if params.len() != model.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                model.params.len(),
                params.len()
            )));
        }
        for (id, p) in model.params.iter() {
            let loaded = params
                .by_name(&p.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{}`", p.name)))?;
            if loaded.shape() != p.tensor.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` has shape {:?}, expected {:?}",
                    p.name,
                    loaded.shape(),
                    p.tensor.shape()
                )));
            }
            let _ = id;
        }
        let ids: Vec<_> = model.params.iter().map(|(id, p)| (id, p.name.clone())).collect();
        for (id, name) in ids {
            let values = params.by_name(&name).unwrap().values().to_vec();
            model.params.get_mut(id).values_mut().copy_from_slice(&values);
        }
        Ok(model)
    }

    pub fn task_token(&self, task: TaskId) -> Result<u32> {
        if task.0 >= self.config.tasks.len() {
            return Err(Error::UnknownTask(format!("#{}", task.0)));
        }
        Ok(FIRST_TASK + task.0 as u32)
    }

    pub fn select_decoder(&self, task: TaskId) -> Result<&DecoderParams> {
        if task.0 >= self.config.tasks.len() {
            return Err(Error::UnknownTask(format!("#{}", task.0)));
        }
        Ok(match self.config.architecture {
            Architecture::Shared => &self.decoders[0],
            Architecture::Separate => &self.decoders[task.0],
        })
    }

    pub fn encode(&self, g: &mut Graph, source: &[u32]) -> Result<EncodedSource> {
        if source.is_empty() {
            return Err(Error::EmptyInput("source sentence"));
        }
        let limit = self.config.src_vocab;
        if let Some(&bad) = source.iter().find(|&&t| t as usize >= limit) {
            return Err(Error::OutOfRange {
                what: "source token",
                id: bad as usize,
                limit,
            });
        }
        let table = g.param(&self.params, self.encoder.embedding);
        let embedded = source
            .iter()
            .map(|&t| g.lookup(table, t as usize))
            .collect::<Result<Vec<_>>>()?;

        let half = self.encoder.forward.hidden;
        let run = |g: &mut Graph, p: &LstmParams, order: &mut dyn Iterator<Item = usize>| {
            let mut h = g.zeros(half)?;
            let mut c = g.zeros(half)?;
            let mut out = vec![None; embedded.len()];
            for i in order {
                (h, c) = lstm_step(g, &self.params, p, embedded[i], h, c)?;
                out[i] = Some(h);
            }
            Ok::<_, Error>(out.into_iter().map(Option::unwrap).collect::<Vec<_>>())
        };
        let fwd = run(g, &self.encoder.forward, &mut (0..source.len()))?;
        let bwd = run(g, &self.encoder.backward, &mut (0..source.len()).rev())?;
        let states = fwd
            .iter()
            .zip(&bwd)
            .map(|(&f, &b)| g.concat(&[f, b]))
            .collect::<Result<Vec<_>>>()?;
        let matrix = g.stack_rows(&states)?;
        Ok(EncodedSource { states, matrix })
    }

    pub fn initial_state(&self, g: &mut Graph) -> Result<DecoderState> {
        let h = self.config.hidden;
        let layers = self.config.decoder_layers;
        let mut state = DecoderState {
            hidden: Vec::with_capacity(layers),
            cell: Vec::with_capacity(layers),
        };
        for _ in 0..layers {
            state.hidden.push(g.zeros(h)?);
            state.cell.push(g.zeros(h)?);
        }
        Ok(state)
    }

    pub fn decode_step(
        &self,
        g: &mut Graph,
        dec: &DecoderParams,
        prev: u32,
        state: &DecoderState,
        enc: &EncodedSource,
    ) -> Result<StepOutput> {
        if state.hidden.len() != dec.layers.len() || state.cell.len() != dec.layers.len() {
            return Err(Error::Shape {
                op: "decode_step",
                left: vec![dec.layers.len()],
                right: vec![state.hidden.len()],
            });
        }
        if prev as usize >= self.config.tgt_vocab {
            return Err(Error::OutOfRange {
                what: "target token",
                id: prev as usize,
                limit: self.config.tgt_vocab,
            });
        }
        let table = g.param(&self.params, dec.embedding);
        let mut x = g.lookup(table, prev as usize)?;
        let mut next = DecoderState {
            hidden: Vec::with_capacity(dec.layers.len()),
            cell: Vec::with_capacity(dec.layers.len()),
        };
        for (l, p) in dec.layers.iter().enumerate() {
            let (h, c) = lstm_step(g, &self.params, p, x, state.hidden[l], state.cell[l])?;
            next.hidden.push(h);
            next.cell.push(c);
            x = h;
        }
        let d = next.top();
        let (weights, context) = attend(g, d, enc)?;

        let w1_dec = g.param(&self.params, dec.w1_dec);
        let w1_att = g.param(&self.params, dec.w1_att);
        let w2_dec = g.param(&self.params, dec.w2_dec);
        let w2_att = g.param(&self.params, dec.w2_att);
        let a = g.matvec(w1_dec, d)?;
        let b = g.matvec(w1_att, context)?;
        let pre_g = g.add(a, b)?;
        let gj = g.tanh(pre_g);
        let a = g.matvec(w2_dec, d)?;
        let b = g.matvec(w2_att, context)?;
        let pre_u = g.sum(&[gj, a, b])?;
        let uj = g.tanh(pre_u);

        let w_out = g.param(&self.params, dec.w_out);
        let b_out = g.param(&self.params, dec.b_out);
        let logits = g.affine(w_out, uj, Some(b_out))?;
        let log_probs = g.log_softmax(logits)?;
        Ok(StepOutput {
            log_probs,
            attention_weights: weights,
            context,
            state: next,
        })
    }

    /// Teacher-forced negative log-likelihood of `target` followed by EOS.
    /// The task token is the first decoder input and is never scored.
    pub fn sequence_loss(&self, g: &mut Graph, example: &TrainingExample) -> Result<NodeId> {
        if example.target.is_empty() {
            return Err(Error::EmptyInput("target sentence"));
        }
        let dec = self.select_decoder(example.task)?;
        let mut prev = self.task_token(example.task)?;
        let enc = self.encode(g, &example.source)?;
        let mut state = self.initial_state(g)?;
        let mut terms = Vec::with_capacity(example.target.len() + 1);
        for &y in example.target.iter().chain(std::iter::once(&EOS)) {
            let step = self.decode_step(g, dec, prev, &state, &enc)?;
            terms.push(g.nll_pick(step.log_probs, y as usize)?);
            state = step.state;
            prev = y;
        }
        g.sum(&terms)
    }

    /// Convenience wrapper returning the encoder vectors as plain values.
    pub fn encode_values(&self, source: &[u32]) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::new();
        let enc = self.encode(&mut g, source)?;
        Ok(enc.states.iter().map(|&s| g.value(s).to_vec()).collect())
    }

    /// Loss value of one example, without gradients.
    pub fn loss_value(&self, example: &TrainingExample) -> Result<f64> {
        let mut g = Graph::new();
        let loss = self.sequence_loss(&mut g, example)?;
        Ok(g.scalar(loss))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::GradBuffer;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny(arch: Architecture) -> Seq2Seq {
        let cfg = ModelConfig {
            hidden: 4,
            src_vocab: 7,
            tgt_vocab: 9,
            decoder_layers: 2,
            architecture: arch,
            tasks: vec!["a".into(), "b".into()],
        };
        Seq2Seq::new(cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap()
    }

    fn example(task: usize) -> TrainingExample {
        TrainingExample {
            task: TaskId(task),
            source: vec![3, 4, 5],
            target: vec![5, 6, 7, 8],
        }
    }

    #[test]
    fn encoder_shape_contract() {
        let m = tiny(Architecture::Shared);
        let states = m.encode_values(&[3, 4, 5, 6, 3]).unwrap();
        assert_eq!(states.len(), 5);
        assert!(states.iter().all(|s| s.len() == 4 && s.iter().all(|x| x.is_finite())));
        assert!(matches!(m.encode_values(&[]), Err(Error::EmptyInput(_))));
        assert!(matches!(m.encode_values(&[7]), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn single_token_is_one_step_from_zero_in_each_direction() {
        let m = tiny(Architecture::Shared);
        let states = m.encode_values(&[4]).unwrap();
        let mut g = Graph::new();
        let table = g.param(&m.params, m.encoder.embedding);
        let x = g.lookup(table, 4).unwrap();
        let mut expect = Vec::new();
        for p in [&m.encoder.forward, &m.encoder.backward] {
            let h = g.zeros(2).unwrap();
            let c = g.zeros(2).unwrap();
            let (h1, _) = lstm_step(&mut g, &m.params, p, x, h, c).unwrap();
            expect.extend_from_slice(g.value(h1));
        }
        assert_eq!(states[0], expect);
    }

    #[test]
    fn tied_directions_mirror_each_other() {
        let mut m = tiny(Architecture::Shared);
        for (f, b) in [
            (m.encoder.forward.w, m.encoder.backward.w),
            (m.encoder.forward.b, m.encoder.backward.b),
        ] {
            let v = m.params.get(f).values().to_vec();
            m.params.get_mut(b).values_mut().copy_from_slice(&v);
        }
        let x = [3, 5, 6];
        let rev: Vec<u32> = x.iter().rev().copied().collect();
        let a = m.encode_values(&x).unwrap();
        let r = m.encode_values(&rev).unwrap();
        for i in 0..3 {
            // forward half of encode(reverse(x)) at i == backward half of encode(x) at 2 - i
            assert_eq!(r[i][..2], a[2 - i][2..]);
        }
    }

    #[test]
    fn attention_over_one_state_is_that_state() {
        let mut g = Graph::new();
        let h = g.vector(vec![0.3, -0.2]).unwrap();
        let matrix = g.stack_rows(&[h]).unwrap();
        let enc = EncodedSource {
            states: vec![h],
            matrix,
        };
        let d = g.vector(vec![5.0, 1.0]).unwrap();
        let (w, c) = attend(&mut g, d, &enc).unwrap();
        assert_eq!(g.value(w), &[1.0]);
        assert_eq!(g.value(c), &[0.3, -0.2]);
    }

    #[test]
    fn attention_weights_for_orthogonal_states() {
        let mut g = Graph::new();
        let h1 = g.vector(vec![1.0, 0.0]).unwrap();
        let h2 = g.vector(vec![0.0, 1.0]).unwrap();
        let matrix = g.stack_rows(&[h1, h2]).unwrap();
        let enc = EncodedSource {
            states: vec![h1, h2],
            matrix,
        };
        let d = g.vector(vec![1.0, 0.0]).unwrap();
        let (w, _) = attend(&mut g, d, &enc).unwrap();
        let e = std::f64::consts::E;
        assert!((g.value(w)[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((g.value(w)[0] - 0.7311).abs() < 1e-4);
        assert!((g.value(w)[1] - 0.2689).abs() < 1e-4);

        let d3 = g.vector(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(attend(&mut g, d3, &enc).is_err());
    }

    #[test]
    fn zero_output_layer_gives_uniform_loss() {
        let mut m = tiny(Architecture::Shared);
        let dec = m.decoders[0].clone();
        m.params.get_mut(dec.w_out).values_mut().fill(0.0);
        m.params.get_mut(dec.b_out).values_mut().fill(0.0);
        let ex = example(0);
        let loss = m.loss_value(&ex).unwrap();
        let expected = (ex.target.len() + 1) as f64 * (9f64).ln();
        assert!((loss - expected).abs() < 1e-12);
    }

    #[test]
    fn step_distribution_is_normalised_and_deterministic() {
        let m = tiny(Architecture::Shared);
        let mut g = Graph::new();
        let enc = m.encode(&mut g, &[3, 4]).unwrap();
        let s0 = m.initial_state(&mut g).unwrap();
        let dec = m.select_decoder(TaskId(1)).unwrap();
        let a = m.decode_step(&mut g, dec, 4, &s0, &enc).unwrap();
        let b = m.decode_step(&mut g, dec, 4, &s0, &enc).unwrap();
        let p: f64 = g.value(a.log_probs).iter().map(|l| l.exp()).sum();
        assert!((p - 1.0).abs() < 1e-9);
        assert_eq!(g.value(a.log_probs), g.value(b.log_probs));
        let w: f64 = g.value(a.attention_weights).iter().sum();
        assert!((w - 1.0).abs() < 1e-12);
        assert!(m.decode_step(&mut g, dec, 9, &s0, &enc).is_err());
    }

    #[test]
    fn loss_is_positive_and_rejects_bad_examples() {
        let m = tiny(Architecture::Shared);
        assert!(m.loss_value(&example(0)).unwrap() > 0.0);
        let mut bad = example(0);
        bad.target.clear();
        assert!(m.loss_value(&bad).is_err());
        assert!(matches!(m.loss_value(&example(2)), Err(Error::UnknownTask(_))));
    }

    #[test]
    fn decoder_selection() {
        let shared = tiny(Architecture::Shared);
        assert_eq!(
            shared.select_decoder(TaskId(0)).unwrap(),
            shared.select_decoder(TaskId(1)).unwrap()
        );
        let sep = tiny(Architecture::Separate);
        let a = sep.select_decoder(TaskId(0)).unwrap().param_ids();
        let b = sep.select_decoder(TaskId(1)).unwrap().param_ids();
        assert!(a.iter().all(|id| !b.contains(id)));
        assert!(sep.select_decoder(TaskId(2)).is_err());
        assert!(sep.params.id("decoder/a/layer1/w").is_some());
        assert!(sep.params.id("output/b/b").is_some());
    }

    #[test]
    fn separate_decoders_receive_no_cross_task_gradient() {
        let m = tiny(Architecture::Separate);
        let mut g = Graph::new();
        let loss = m.sequence_loss(&mut g, &example(0)).unwrap();
        g.backward(loss).unwrap();
        let mut buf = GradBuffer::new(&m.params);
        g.accumulate_into(&mut buf);
        for id in m.decoders[1].param_ids() {
            assert!(buf.get(id).is_none(), "{}", m.params.name(id));
        }
        assert!(buf.get(m.encoder.forward.w).is_some());
    }

    #[test]
    fn from_params_checks_names_and_shapes() {
        let m = tiny(Architecture::Shared);
        let back = Seq2Seq::from_params(m.config.clone(), m.params.clone()).unwrap();
        assert_eq!(back.params, m.params);
        let mut other = m.config.clone();
        other.hidden = 6;
        assert!(Seq2Seq::from_params(other, m.params.clone()).is_err());
    }
}
