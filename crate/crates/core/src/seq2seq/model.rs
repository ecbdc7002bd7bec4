use ndarray::{concatenate, s, Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::attention::{attention_backward, attention_forward, log_softmax, softmax, AttentionTrace};
use super::lstm::{lstm_backward, lstm_forward, LstmTrace};
use super::params::{ModelDims, Params};
use super::vocab::{Vocab, BOS_ID, PAD_ID};
use super::ModelError;

/// LSTM encoder, additive-attention LSTM decoder and softmax output layer,
/// together with the two vocabularies.
///
/// The decoder starts from the encoder's final `(h, c)`; its input at step
/// `t` is the embedding of the previous target token (`<BOS>` first).
#[derive(Debug, Clone, PartialEq)]
pub struct Qep2SeqModel {
    pub params: Params,
    pub vocab_in: Vocab,
    pub vocab_out: Vocab,
}

/// Activations of one teacher-forced pass.
#[derive(Debug)]
pub struct ForwardCache {
    input: Vec<usize>,
    dec_input: Vec<usize>,
    target: Vec<usize>,
    enc: Option<LstmTrace>,
    dec: Option<LstmTrace>,
    att: Option<AttentionTrace>,
    /// `[s_t; a_t]`, `T x 2d`.
    concat: Array2<f64>,
    /// Output distributions, `T x |V_out|`.
    probs: Array2<f64>,
}

impl ForwardCache {
    /// Output distribution at every decoder step.
    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn target(&self) -> &[usize] {
        &self.target
    }
}

impl Qep2SeqModel {
    /// Model with every parameter drawn from `U(-init_range, init_range)`.
    pub fn new(vocab_in: Vocab, vocab_out: Vocab, dims: ModelDims, init_range: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = Params::uniform(dims, vocab_in.len(), vocab_out.len(), init_range, &mut rng);
        Qep2SeqModel { params, vocab_in, vocab_out }
    }

    pub fn zeros(vocab_in: Vocab, vocab_out: Vocab, dims: ModelDims) -> Self {
        let params = Params::zeros(dims, vocab_in.len(), vocab_out.len());
        Qep2SeqModel { params, vocab_in, vocab_out }
    }

    pub fn dims(&self) -> ModelDims {
        self.params.dims()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.params.check_shapes()?;
        if self.params.enc_embedding.nrows() != self.vocab_in.len()
            || self.params.dec_embedding.nrows() != self.vocab_out.len()
        {
            return Err(ModelError::Dimension("embedding rows differ from vocabulary size".into()));
        }
        if !self.params.is_finite() {
            return Err(ModelError::NonFinite);
        }
        Ok(())
    }

    /// Replaces embedding rows with vectors produced elsewhere.
    ///
    /// `matrix` row `r` is the vector of `tokens[r]`; tokens absent from the
    /// model's vocabulary are skipped. Returns how many rows were replaced.
    pub fn load_embeddings(
        &mut self,
        side: EmbeddingSide,
        matrix: &Array2<f64>,
        tokens: &[String],
    ) -> Result<usize, ModelError> {
        let (table, vocab) = match side {
            EmbeddingSide::Encoder => (&mut self.params.enc_embedding, &self.vocab_in),
            EmbeddingSide::Decoder => (&mut self.params.dec_embedding, &self.vocab_out),
        };
        if matrix.ncols() != table.ncols() || matrix.nrows() != tokens.len() {
            return Err(ModelError::Dimension(format!(
                "embedding matrix is {}x{}, expected {}x{}",
                matrix.nrows(),
                matrix.ncols(),
                tokens.len(),
                table.ncols()
            )));
        }
        let mut replaced = 0;
        for (row, tok) in matrix.rows().into_iter().zip(tokens) {
            if let Some(id) = vocab.id(tok) {
                table.row_mut(id).assign(&row);
                replaced += 1;
            }
        }
        Ok(replaced)
    }

    fn check_ids(&self, ids: &[usize], vocab: &Vocab, what: &str) -> Result<(), ModelError> {
        match ids.iter().find(|&&i| i >= vocab.len()) {
            Some(bad) => Err(ModelError::Dimension(format!("{what} id {bad} outside vocabulary"))),
            None => Ok(()),
        }
    }

    fn embed(table: &Array2<f64>, ids: &[usize]) -> Array2<f64> {
        table.select(Axis(0), ids)
    }

    fn run_encoder(&self, input: &[usize]) -> LstmTrace {
        let d = self.params.encoder.hidden();
        lstm_forward(
            &self.params.encoder,
            Self::embed(&self.params.enc_embedding, input),
            Array1::zeros(d),
            Array1::zeros(d),
        )
    }

    /// Encoder hidden states `h_1..h_N`, one row per input token.
    pub fn encode(&self, input: &[usize]) -> Result<Array2<f64>, ModelError> {
        if input.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        self.check_ids(input, &self.vocab_in, "input")?;
        Ok(self.run_encoder(input).h)
    }

    /// Softmax of `W_o [s_t; a_t]` over the output vocabulary.
    pub fn decode_step_probs(&self, s: ArrayView1<f64>, a: ArrayView1<f64>) -> Array1<f64> {
        let d = s.len();
        let w = &self.params.output;
        let logits = w.slice(s![.., ..d]).dot(&s) + w.slice(s![.., d..]).dot(&a);
        softmax(logits.view())
    }

    /// Teacher-forced cross entropy `-Σ_t log P(y_t = gold_t)`.
    ///
    /// `target` is the gold output including the closing `<END>`; `<PAD>`
    /// positions contribute nothing.
    pub fn forward_loss(&self, input: &[usize], target: &[usize]) -> Result<(f64, ForwardCache), ModelError> {
        if input.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        self.check_ids(input, &self.vocab_in, "input")?;
        self.check_ids(target, &self.vocab_out, "target")?;
        let v_out = self.vocab_out.len();
        let two_d = 2 * self.params.encoder.hidden();
        if target.is_empty() {
            let cache = ForwardCache {
                input: input.to_vec(),
                dec_input: Vec::new(),
                target: Vec::new(),
                enc: None,
                dec: None,
                att: None,
                concat: Array2::zeros((0, two_d)),
                probs: Array2::zeros((0, v_out)),
            };
            return Ok((0.0, cache));
        }
        let enc = self.run_encoder(input);
        let mut dec_input = Vec::with_capacity(target.len());
        dec_input.push(BOS_ID);
        dec_input.extend_from_slice(&target[..target.len() - 1]);
        let dec = lstm_forward(
            &self.params.decoder,
            Self::embed(&self.params.dec_embedding, &dec_input),
            enc.last_h().to_owned(),
            enc.last_c().to_owned(),
        );
        let att = attention_forward(&self.params.attention, dec.h.view(), enc.h.view());
        let concat = concatenate![Axis(1), dec.h, att.context];
        let logits = concat.dot(&self.params.output.t());
        let mut probs = Array2::zeros(logits.raw_dim());
        let mut loss = 0.0;
        for (t, &gold) in target.iter().enumerate() {
            let lp = log_softmax(logits.row(t));
            if gold != PAD_ID {
                loss -= lp[gold];
            }
            probs.row_mut(t).assign(&lp.mapv(f64::exp));
        }
        let cache = ForwardCache {
            input: input.to_vec(),
            dec_input,
            target: target.to_vec(),
            enc: Some(enc),
            dec: Some(dec),
            att: Some(att),
            concat,
            probs,
        };
        Ok((loss, cache))
    }

    /// Exact gradient of [`forward_loss`](Self::forward_loss) with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache) -> Params {
        let mut g = self.params.zeros_like();
        self.accumulate_gradients(cache, &mut g);
        g
    }

    /// Adds the gradient of one sample into `g`.
    pub fn accumulate_gradients(&self, cache: &ForwardCache, g: &mut Params) {
        let (Some(enc), Some(dec), Some(att)) = (&cache.enc, &cache.dec, &cache.att) else {
            return;
        };
        let d = self.params.encoder.hidden();
        let p = &self.params;

        let mut d_logits = cache.probs.clone();
        for (t, &gold) in cache.target.iter().enumerate() {
            if gold == PAD_ID {
                d_logits.row_mut(t).fill(0.0);
            } else {
                d_logits[[t, gold]] -= 1.0;
            }
        }
        g.output += &d_logits.t().dot(&cache.concat);
        let d_concat = d_logits.dot(&p.output);
        let mut d_s = d_concat.slice(s![.., ..d]).to_owned();
        let d_ctx = d_concat.slice(s![.., d..]);

        let (d_s_att, mut d_enc_h) =
            attention_backward(&p.attention, att, dec.h.view(), enc.h.view(), d_ctx, &mut g.attention);
        d_s += &d_s_att;

        let dec_grads = lstm_backward(&p.decoder, dec, d_s.view(), None, &mut g.decoder);
        for (row, &id) in dec_grads.dx.rows().into_iter().zip(&cache.dec_input) {
            let mut dst = g.dec_embedding.row_mut(id);
            dst += &row;
        }

        // The decoder's initial state is the encoder's final state.
        let n = enc.len();
        {
            let mut last = d_enc_h.row_mut(n - 1);
            last += &dec_grads.dh0;
        }
        let enc_grads =
            lstm_backward(&p.encoder, enc, d_enc_h.view(), Some(dec_grads.dc0.view()), &mut g.encoder);
        for (row, &id) in enc_grads.dx.rows().into_iter().zip(&cache.input) {
            let mut dst = g.enc_embedding.row_mut(id);
            dst += &row;
        }
    }

    /// Argmax predictions under teacher forcing, one per target position.
    pub fn teacher_forced_predictions(&self, input: &[usize], target: &[usize]) -> Result<Vec<usize>, ModelError> {
        let (_, cache) = self.forward_loss(input, target)?;
        Ok(cache
            .probs
            .rows()
            .into_iter()
            .map(|row| {
                let mut best = 0;
                for (i, &p) in row.iter().enumerate() {
                    if p > row[best] {
                        best = i;
                    }
                }
                best
            })
            .collect())
    }
}

/// Which embedding table [`Qep2SeqModel::load_embeddings`] writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingSide {
    Encoder,
    Decoder,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq2seq::vocab::END_ID;

    fn tiny_vocabs() -> (Vocab, Vocab) {
        (Vocab::build(["a", "b"]), Vocab::build(["x", "y", "z"]))
    }

    #[test]
    fn zero_model_gives_uniform_loss() {
        let (vi, vo) = tiny_vocabs();
        let m = Qep2SeqModel::zeros(vi, vo, ModelDims { hidden: 4, enc_embed: 3, dec_embed: 2 });
        let target = [4, 5, 6, END_ID];
        let (loss, cache) = m.forward_loss(&[4, 5], &target).unwrap();
        let want = 4.0 * (m.vocab_out.len() as f64).ln();
        assert!((loss - want).abs() < 1e-12, "{loss} vs {want}");
        for row in cache.probs().rows() {
            assert!((row.sum() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn empty_target_has_zero_loss_and_gradient() {
        let (vi, vo) = tiny_vocabs();
        let m = Qep2SeqModel::new(vi, vo, ModelDims { hidden: 4, enc_embed: 3, dec_embed: 2 }, 0.1, 3);
        let (loss, cache) = m.forward_loss(&[4], &[]).unwrap();
        assert_eq!(loss, 0.0);
        let g = m.backward(&cache);
        assert!(g.tensors().iter().all(|(_, t)| t.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn one_step_loss_matches_hand_evaluation() {
        // d = 1, e = 1: every quantity is a scalar and can be written out.
        let (vi, vo) = (Vocab::build(["a"]), Vocab::build(Vec::<&str>::new()));
        let mut m = Qep2SeqModel::zeros(vi, vo, ModelDims { hidden: 1, enc_embed: 1, dec_embed: 1 });
        m.params.enc_embedding[[4, 0]] = 0.8;
        m.params.encoder.v.fill(0.5);
        m.params.encoder.u.fill(-0.3);
        m.params.decoder.v.fill(0.2);
        m.params.decoder.u.fill(0.4);
        m.params.dec_embedding[[BOS_ID, 0]] = -0.6;
        m.params.output[[END_ID, 0]] = 1.5;
        m.params.output[[END_ID, 1]] = -0.7;
        m.params.output[[UNK, 1]] = 0.9;
        let (loss, _) = m.forward_loss(&[4], &[END_ID]).unwrap();

        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        // Encoder, one step from zero state.
        let ze = 0.5 * 0.8;
        let c1 = sig(ze) * ze.tanh();
        let h1 = sig(ze) * c1.tanh();
        // Decoder step from (h1, c1) with x = emb(<BOS>).
        let zd = 0.4 * h1 + 0.2 * -0.6;
        let cs = sig(zd) * zd.tanh() + sig(zd) * c1;
        let s1 = sig(zd) * cs.tanh();
        // One encoder state: the context is h1.
        let logits = [0.0, 0.0, 1.5 * s1 - 0.7 * h1, 0.9 * h1];
        let lse = logits.iter().map(|z: &f64| z.exp()).sum::<f64>().ln();
        let want = lse - logits[END_ID];
        assert!((loss - want).abs() < 1e-14, "{loss} vs {want}");
    }
    const UNK: usize = crate::seq2seq::vocab::UNK_ID;
}
