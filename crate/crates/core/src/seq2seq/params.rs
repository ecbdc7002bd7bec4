use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;

/// Layer sizes of a translator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// LSTM cells per layer (`d`).
    pub hidden: usize,
    /// Encoder word-embedding width.
    pub enc_embed: usize,
    /// Decoder word-embedding width.
    pub dec_embed: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims { hidden: 256, enc_embed: 16, dec_embed: 32 }
    }
}

/// Gate order used for every fused block: input, forget, output, candidate.
pub const GATES: [&str; 4] = ["i", "f", "o", "c"];

/// Weights of one LSTM layer.
///
/// The four gate matrices are stored fused, row block `k` belonging to gate
/// `GATES[k]`: `u` is `4d x d` (`U_i..U_c`), `v` is `4d x e` (`V_i..V_c`) and
/// `b` holds the four gate biases.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub u: Array2<f64>,
    pub v: Array2<f64>,
    pub b: Array1<f64>,
}

impl LstmParams {
    pub fn zeros(hidden: usize, embed: usize) -> Self {
        LstmParams {
            u: Array2::zeros((4 * hidden, hidden)),
            v: Array2::zeros((4 * hidden, embed)),
            b: Array1::zeros(4 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.u.ncols()
    }

    pub fn embed(&self) -> usize {
        self.v.ncols()
    }

    /// Recurrent plus input connections including the gate biases: `4d(d + e + 1)`.
    pub fn recurrent_parameter_count(&self) -> usize {
        recurrent_parameter_count(self.hidden(), self.embed())
    }

    fn check(&self, what: &str) -> Result<(), ModelError> {
        let d = self.u.ncols();
        if self.u.nrows() != 4 * d || self.v.nrows() != 4 * d || self.b.len() != 4 * d {
            return Err(ModelError::Dimension(format!("{what}: inconsistent gate shapes")));
        }
        Ok(())
    }
}

/// `4d(d + e + 1)`: weights from the previous hidden state, from the input
/// embedding and the bias, for all four gates.
pub fn recurrent_parameter_count(hidden: usize, embed: usize) -> usize {
    4 * hidden * (hidden + embed + 1)
}

/// Additive attention `g = V_a^T tanh(W_s s + W_h h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub w_s: Array2<f64>,
    pub w_h: Array2<f64>,
    pub v_a: Array1<f64>,
}

impl AttentionParams {
    pub fn zeros(hidden: usize) -> Self {
        AttentionParams {
            w_s: Array2::zeros((hidden, hidden)),
            w_h: Array2::zeros((hidden, hidden)),
            v_a: Array1::zeros(hidden),
        }
    }
}

/// Every trainable tensor of the translator. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub enc_embedding: Array2<f64>,
    pub dec_embedding: Array2<f64>,
    pub encoder: LstmParams,
    pub decoder: LstmParams,
    pub attention: AttentionParams,
    /// `|V_out| x 2d`, row `o` is `w_o` over `[s_t; a_t]`.
    pub output: Array2<f64>,
}

impl Params {
    pub fn zeros(dims: ModelDims, vocab_in: usize, vocab_out: usize) -> Self {
        let d = dims.hidden;
        Params {
            enc_embedding: Array2::zeros((vocab_in, dims.enc_embed)),
            dec_embedding: Array2::zeros((vocab_out, dims.dec_embed)),
            encoder: LstmParams::zeros(d, dims.enc_embed),
            decoder: LstmParams::zeros(d, dims.dec_embed),
            attention: AttentionParams::zeros(d),
            output: Array2::zeros((vocab_out, 2 * d)),
        }
    }

    /// Every entry drawn from `U(-range, range)`.
    pub fn uniform<R: Rng>(
        dims: ModelDims,
        vocab_in: usize,
        vocab_out: usize,
        range: f64,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(dims, vocab_in, vocab_out);
        for (_, t) in p.tensors_mut() {
            for x in t.iter_mut() {
                *x = rng.gen_range(-range..range);
            }
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Params {
            enc_embedding: Array2::zeros(self.enc_embedding.raw_dim()),
            dec_embedding: Array2::zeros(self.dec_embedding.raw_dim()),
            encoder: LstmParams::zeros(self.encoder.hidden(), self.encoder.embed()),
            decoder: LstmParams::zeros(self.decoder.hidden(), self.decoder.embed()),
            attention: AttentionParams::zeros(self.attention.v_a.len()),
            output: Array2::zeros(self.output.raw_dim()),
        }
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            hidden: self.encoder.hidden(),
            enc_embed: self.encoder.embed(),
            dec_embed: self.decoder.embed(),
        }
    }

    /// Flat tensors in checkpoint order. Fused gate blocks appear once each.
    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        fn s<D: ndarray::Dimension>(x: &ndarray::Array<f64, D>) -> &[f64] {
            x.as_slice().expect("standard layout")
        }
        vec![
            ("enc_embedding", s(&self.enc_embedding)),
            ("dec_embedding", s(&self.dec_embedding)),
            ("encoder.U", s(&self.encoder.u)),
            ("encoder.V", s(&self.encoder.v)),
            ("encoder.b", s(&self.encoder.b)),
            ("decoder.U", s(&self.decoder.u)),
            ("decoder.V", s(&self.decoder.v)),
            ("decoder.b", s(&self.decoder.b)),
            ("attention.W_s", s(&self.attention.w_s)),
            ("attention.W_h", s(&self.attention.w_h)),
            ("attention.V_a", s(&self.attention.v_a)),
            ("output.W_o", s(&self.output)),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        fn m<D: ndarray::Dimension>(x: &mut ndarray::Array<f64, D>) -> &mut [f64] {
            x.as_slice_mut().expect("standard layout")
        }
        vec![
            ("enc_embedding", m(&mut self.enc_embedding)),
            ("dec_embedding", m(&mut self.dec_embedding)),
            ("encoder.U", m(&mut self.encoder.u)),
            ("encoder.V", m(&mut self.encoder.v)),
            ("encoder.b", m(&mut self.encoder.b)),
            ("decoder.U", m(&mut self.decoder.u)),
            ("decoder.V", m(&mut self.decoder.v)),
            ("decoder.b", m(&mut self.decoder.b)),
            ("attention.W_s", m(&mut self.attention.w_s)),
            ("attention.W_h", m(&mut self.attention.w_h)),
            ("attention.V_a", m(&mut self.attention.v_a)),
            ("output.W_o", m(&mut self.output)),
        ]
    }

    /// Tensors split per gate (`encoder.U_i`, ..., `encoder.b_c`), the
    /// granularity used when reporting gradient checks.
    pub fn named_blocks(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (name, data) in self.tensors() {
            match name.rsplit_once('.') {
                Some((layer, kind @ ("U" | "V" | "b"))) => {
                    let block = data.len() / 4;
                    for (k, gate) in GATES.iter().enumerate() {
                        out.push((
                            format!("{layer}.{kind}_{gate}"),
                            &data[k * block..(k + 1) * block],
                        ));
                    }
                }
                _ => out.push((name.to_string(), data)),
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += alpha * other`, tensor by tensor.
    pub fn add_scaled(&mut self, alpha: f64, other: &Params) {
        for ((_, dst), (_, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }

    pub(crate) fn check_shapes(&self) -> Result<(), ModelError> {
        self.encoder.check("encoder")?;
        self.decoder.check("decoder")?;
        let d = self.encoder.hidden();
        let ok = self.decoder.hidden() == d
            && self.enc_embedding.ncols() == self.encoder.embed()
            && self.dec_embedding.ncols() == self.decoder.embed()
            && self.attention.w_s.dim() == (d, d)
            && self.attention.w_h.dim() == (d, d)
            && self.attention.v_a.len() == d
            && self.output.ncols() == 2 * d
            && self.output.nrows() == self.dec_embedding.nrows();
        if ok {
            Ok(())
        } else {
            Err(ModelError::Dimension("parameter shapes are mutually inconsistent".into()))
        }
    }
}
