use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2};

use super::params::AttentionParams;
use super::ModelError;

/// Max-subtracted softmax.
pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = logits.mapv(|z| (z - max).exp());
    let sum = out.sum();
    out /= sum;
    out
}

/// Max-subtracted log-softmax.
pub fn log_softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln() + max;
    logits.mapv(|z| z - lse)
}

/// Additive attention of decoder state `s` over encoder states (rows of `enc`).
///
/// Returns the weights `α = softmax(g)` with `g_i = V_a^T tanh(W_s s + W_h h_i)`
/// and the context `a = Σ α_i h_i`.
pub fn attend(
    att: &AttentionParams,
    s: ArrayView1<f64>,
    enc: ArrayView2<f64>,
) -> Result<(Array1<f64>, Array1<f64>), ModelError> {
    let d = att.v_a.len();
    if s.len() != d || enc.ncols() != d {
        return Err(ModelError::Dimension(format!(
            "attention expects states of width {d}, got {} and {}",
            s.len(),
            enc.ncols()
        )));
    }
    if enc.nrows() == 0 {
        return Err(ModelError::EmptyInput);
    }
    let proj_h = enc.dot(&att.w_h.t());
    Ok(attend_projected(att, s, enc, proj_h.view()))
}

/// [`attend`] with `W_h h_i` precomputed (rows of `proj_h`).
pub(crate) fn attend_projected(
    att: &AttentionParams,
    s: ArrayView1<f64>,
    enc: ArrayView2<f64>,
    proj_h: ArrayView2<f64>,
) -> (Array1<f64>, Array1<f64>) {
    let ws = att.w_s.dot(&s);
    let scores: Array1<f64> = proj_h
        .rows()
        .into_iter()
        .map(|ph| {
            ph.iter()
                .zip(ws.iter())
                .zip(att.v_a.iter())
                .map(|((a, b), v)| v * (a + b).tanh())
                .sum()
        })
        .collect();
    let alpha = softmax(scores.view());
    let context = alpha.dot(&enc);
    (alpha, context)
}

/// Attention over a whole teacher-forced decoder run.
#[derive(Debug, Clone)]
pub(crate) struct AttentionTrace {
    /// `tanh(W_s s_t + W_h h_i)`, `T x N x d`.
    pub z: Array3<f64>,
    /// `T x N`.
    pub alpha: Array2<f64>,
    /// Contexts, `T x d`.
    pub context: Array2<f64>,
}

pub(crate) fn attention_forward(
    att: &AttentionParams,
    dec: ArrayView2<f64>,
    enc: ArrayView2<f64>,
) -> AttentionTrace {
    let (t_len, n, d) = (dec.nrows(), enc.nrows(), enc.ncols());
    let proj_s = dec.dot(&att.w_s.t());
    let proj_h = enc.dot(&att.w_h.t());
    let mut z = Array3::zeros((t_len, n, d));
    let mut alpha = Array2::zeros((t_len, n));
    for t in 0..t_len {
        let mut scores = Array1::zeros(n);
        for i in 0..n {
            let mut g = 0.0;
            for k in 0..d {
                let v = (proj_s[[t, k]] + proj_h[[i, k]]).tanh();
                z[[t, i, k]] = v;
                g += att.v_a[k] * v;
            }
            scores[i] = g;
        }
        alpha.row_mut(t).assign(&softmax(scores.view()));
    }
    let context = alpha.dot(&enc);
    AttentionTrace { z, alpha, context }
}

/// Returns `(d dec, d enc)` and accumulates parameter gradients.
pub(crate) fn attention_backward(
    att: &AttentionParams,
    tr: &AttentionTrace,
    dec: ArrayView2<f64>,
    enc: ArrayView2<f64>,
    d_context: ArrayView2<f64>,
    grads: &mut AttentionParams,
) -> (Array2<f64>, Array2<f64>) {
    let (t_len, n, d) = (dec.nrows(), enc.nrows(), enc.ncols());
    // Context is a weighted sum of encoder rows.
    let d_alpha = d_context.dot(&enc.t());
    let mut d_enc = tr.alpha.t().dot(&d_context);
    let mut d_proj_s = Array2::<f64>::zeros((t_len, d));
    let mut d_proj_h = Array2::<f64>::zeros((n, d));
    for t in 0..t_len {
        let a = tr.alpha.row(t);
        let da = d_alpha.row(t);
        let dot = a.dot(&da);
        for i in 0..n {
            let dg = a[i] * (da[i] - dot);
            if dg == 0.0 {
                continue;
            }
            for k in 0..d {
                let zk = tr.z[[t, i, k]];
                grads.v_a[k] += dg * zk;
                let dp = dg * att.v_a[k] * (1.0 - zk * zk);
                d_proj_s[[t, k]] += dp;
                d_proj_h[[i, k]] += dp;
            }
        }
    }
    grads.w_s += &d_proj_s.t().dot(&dec);
    grads.w_h += &d_proj_h.t().dot(&enc);
    let d_dec = d_proj_s.dot(&att.w_s);
    d_enc += &d_proj_h.dot(&att.w_h);
    (d_dec, d_enc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_att(d: usize, seed: u64) -> AttentionParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = AttentionParams::zeros(d);
        a.w_s.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        a.w_h.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        a.v_a.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        a
    }

    #[test]
    fn single_state_gets_all_weight() {
        let att = random_att(3, 1);
        let enc = array![[0.3, -0.2, 0.9]];
        let (alpha, ctx) = attend(&att, array![0.5, 0.1, -0.7].view(), enc.view()).unwrap();
        assert_eq!(alpha, array![1.0]);
        assert_eq!(ctx, enc.row(0));
    }

    #[test]
    fn identical_states_split_evenly() {
        let att = random_att(3, 2);
        let enc = array![[0.3, -0.2, 0.9], [0.3, -0.2, 0.9]];
        let (alpha, _) = attend(&att, array![0.5, 0.1, -0.7].view(), enc.view()).unwrap();
        assert_eq!(alpha, array![0.5, 0.5]);
    }

    #[test]
    fn matches_scalar_oracle() {
        let d = 3;
        let att = random_att(d, 3);
        let s = array![0.2, -0.5, 0.8];
        let enc = array![[0.1, 0.4, -0.3], [-0.6, 0.2, 0.5], [0.9, -0.1, 0.0]];
        let (alpha, ctx) = attend(&att, s.view(), enc.view()).unwrap();

        let mut g = [0.0; 3];
        for i in 0..3 {
            for k in 0..d {
                let mut pre = 0.0;
                for j in 0..d {
                    pre += att.w_s[[k, j]] * s[j] + att.w_h[[k, j]] * enc[[i, j]];
                }
                g[i] += att.v_a[k] * pre.tanh();
            }
        }
        let z: f64 = g.iter().map(|x| x.exp()).sum();
        for i in 0..3 {
            assert!((alpha[i] - g[i].exp() / z).abs() < 1e-14);
        }
        for k in 0..d {
            let want: f64 = (0..3).map(|i| g[i].exp() / z * enc[[i, k]]).sum();
            assert!((ctx[k] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn softmax_is_normalised_and_positive() {
        let p = softmax(array![1000.0, -1000.0, 0.0, 3.5].view());
        assert!((p.sum() - 1.0).abs() <= 1e-12);
        assert!(p.iter().all(|&x| x >= 0.0));
        let lp = log_softmax(array![0.0, 0.0, 0.0, 0.0].view());
        assert_eq!(lp[0], -(4f64).ln());
    }

    #[test]
    fn batched_forward_agrees_with_single_step() {
        let att = random_att(4, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let dec = Array2::from_shape_fn((3, 4), |_| rng.gen_range(-1.0..1.0));
        let enc = Array2::from_shape_fn((5, 4), |_| rng.gen_range(-1.0..1.0));
        let tr = attention_forward(&att, dec.view(), enc.view());
        for t in 0..3 {
            let (alpha, ctx) = attend(&att, dec.row(t), enc.view()).unwrap();
            for i in 0..5 {
                assert!((alpha[i] - tr.alpha[[t, i]]).abs() < 1e-14);
            }
            for k in 0..4 {
                assert!((ctx[k] - tr.context[[t, k]]).abs() < 1e-14);
            }
        }
    }
}
