use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::params::LstmParams;
use super::ModelError;

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One LSTM step without peepholes:
///
/// ```text
/// i = σ(U_i h + V_i x + b_i)      f = σ(U_f h + V_f x + b_f)
/// o = σ(U_o h + V_o x + b_o)      c = i ⊙ tanh(U_c h + V_c x + b_c) + f ⊙ c_prev
/// h = o ⊙ tanh(c)
/// ```
pub fn lstm_step(
    params: &LstmParams,
    h_prev: ArrayView1<f64>,
    c_prev: ArrayView1<f64>,
    x: ArrayView1<f64>,
) -> Result<(Array1<f64>, Array1<f64>), ModelError> {
    let d = params.hidden();
    if h_prev.len() != d || c_prev.len() != d || x.len() != params.embed() {
        return Err(ModelError::Dimension(format!(
            "lstm step expects h,c of {d} and x of {}, got {}, {}, {}",
            params.embed(),
            h_prev.len(),
            c_prev.len(),
            x.len()
        )));
    }
    let z = params.u.dot(&h_prev) + params.v.dot(&x) + &params.b;
    Ok(activate(z.view(), c_prev, d))
}

/// Gate nonlinearities for pre-activations `z` (length `4d`).
fn activate(z: ArrayView1<f64>, c_prev: ArrayView1<f64>, d: usize) -> (Array1<f64>, Array1<f64>) {
    let mut h = Array1::zeros(d);
    let mut c = Array1::zeros(d);
    for k in 0..d {
        let i = sigmoid(z[k]);
        let f = sigmoid(z[d + k]);
        let o = sigmoid(z[2 * d + k]);
        let g = z[3 * d + k].tanh();
        c[k] = i * g + f * c_prev[k];
        h[k] = o * c[k].tanh();
    }
    (h, c)
}

/// Everything a sequence forward pass keeps for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct LstmTrace {
    pub h0: Array1<f64>,
    pub c0: Array1<f64>,
    /// Inputs, `T x e`.
    pub x: Array2<f64>,
    /// Activated gates `[i f o g]`, `T x 4d`.
    pub gates: Array2<f64>,
    pub c: Array2<f64>,
    pub tanh_c: Array2<f64>,
    /// Hidden states, `T x d`.
    pub h: Array2<f64>,
}

impl LstmTrace {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn last_h(&self) -> ArrayView1<'_, f64> {
        match self.len() {
            0 => self.h0.view(),
            n => self.h.row(n - 1),
        }
    }

    pub fn last_c(&self) -> ArrayView1<'_, f64> {
        match self.len() {
            0 => self.c0.view(),
            n => self.c.row(n - 1),
        }
    }
}

/// Runs the layer over the rows of `x` starting from `(h0, c0)`.
pub(crate) fn lstm_forward(
    p: &LstmParams,
    x: Array2<f64>,
    h0: Array1<f64>,
    c0: Array1<f64>,
) -> LstmTrace {
    let d = p.hidden();
    let t_len = x.nrows();
    // Input projections do not depend on the recurrence, so batch them.
    let mut pre = x.dot(&p.v.t());
    pre += &p.b;
    let mut gates = Array2::zeros((t_len, 4 * d));
    let mut c = Array2::zeros((t_len, d));
    let mut tanh_c = Array2::zeros((t_len, d));
    let mut h = Array2::zeros((t_len, d));
    let mut h_prev = h0.clone();
    let mut c_prev = c0.clone();
    for t in 0..t_len {
        let mut z = p.u.dot(&h_prev);
        z += &pre.row(t);
        let mut g_row = gates.row_mut(t);
        for k in 0..d {
            let i = sigmoid(z[k]);
            let f = sigmoid(z[d + k]);
            let o = sigmoid(z[2 * d + k]);
            let g = z[3 * d + k].tanh();
            g_row[k] = i;
            g_row[d + k] = f;
            g_row[2 * d + k] = o;
            g_row[3 * d + k] = g;
            let ct = i * g + f * c_prev[k];
            let tc = ct.tanh();
            c[[t, k]] = ct;
            tanh_c[[t, k]] = tc;
            h[[t, k]] = o * tc;
        }
        h_prev = h.row(t).to_owned();
        c_prev = c.row(t).to_owned();
    }
    LstmTrace { h0, c0, x, gates, c, tanh_c, h }
}

/// Gradients flowing out of a layer into its inputs and initial state.
pub(crate) struct LstmInputGrads {
    pub dx: Array2<f64>,
    pub dh0: Array1<f64>,
    pub dc0: Array1<f64>,
}

/// Backpropagation through time.
///
/// `dh` holds the loss gradient reaching each hidden state from outside the
/// recurrence; `dc_last` is an extra gradient on the final cell state.
/// Parameter gradients are accumulated into `grads`.
pub(crate) fn lstm_backward(
    p: &LstmParams,
    tr: &LstmTrace,
    dh: ArrayView2<f64>,
    dc_last: Option<ArrayView1<f64>>,
    grads: &mut LstmParams,
) -> LstmInputGrads {
    let d = p.hidden();
    let t_len = tr.len();
    let u_t = p.u.t().as_standard_layout().into_owned();
    let mut dz = Array2::<f64>::zeros((t_len, 4 * d));
    let mut dh_next = Array1::<f64>::zeros(d);
    let mut dc_next = match dc_last {
        Some(v) => v.to_owned(),
        None => Array1::zeros(d),
    };
    for t in (0..t_len).rev() {
        let g = tr.gates.row(t);
        let c_prev = if t == 0 { tr.c0.view() } else { tr.c.row(t - 1) };
        let mut dz_row = dz.row_mut(t);
        for k in 0..d {
            let (i, f, o, gg) = (g[k], g[d + k], g[2 * d + k], g[3 * d + k]);
            let tc = tr.tanh_c[[t, k]];
            let dht = dh[[t, k]] + dh_next[k];
            let dct = dc_next[k] + dht * o * (1.0 - tc * tc);
            dz_row[k] = dct * gg * i * (1.0 - i);
            dz_row[d + k] = dct * c_prev[k] * f * (1.0 - f);
            dz_row[2 * d + k] = dht * tc * o * (1.0 - o);
            dz_row[3 * d + k] = dct * i * (1.0 - gg * gg);
            dc_next[k] = dct * f;
        }
        dh_next = u_t.dot(&dz.row(t));
    }
    // h_{t-1} for every step, with h0 in front.
    let mut h_prev = Array2::zeros((t_len, d));
    if t_len > 0 {
        h_prev.row_mut(0).assign(&tr.h0);
        h_prev.slice_mut(s![1.., ..]).assign(&tr.h.slice(s![..t_len - 1, ..]));
    }
    grads.u += &dz.t().dot(&h_prev);
    grads.v += &dz.t().dot(&tr.x);
    grads.b += &dz.sum_axis(Axis(0));
    LstmInputGrads { dx: dz.dot(&p.v), dh0: dh_next, dc0: dc_next }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(d: usize, e: usize, seed: u64) -> LstmParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = LstmParams::zeros(d, e);
        p.u.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        p.v.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        p.b.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        p
    }

    #[test]
    fn zero_everything_gives_zero_state() {
        let p = LstmParams::zeros(3, 2);
        let z3 = Array1::zeros(3);
        let (h, c) = lstm_step(&p, z3.view(), z3.view(), Array1::zeros(2).view()).unwrap();
        assert!(h.iter().chain(c.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn forget_path_halves_cell() {
        // All gates sit at 0.5 and the candidate at 0: c = 0.5 * c_prev.
        let p = LstmParams::zeros(3, 2);
        let c_prev = array![1.0, -2.0, 4.0];
        let (_, c) =
            lstm_step(&p, Array1::zeros(3).view(), c_prev.view(), Array1::zeros(2).view()).unwrap();
        assert_eq!(c, array![0.5, -1.0, 2.0]);
    }

    #[test]
    fn matches_scalar_loop_oracle() {
        let (d, e) = (3, 2);
        let p = random_params(d, e, 11);
        let h_prev = array![0.1, -0.4, 0.7];
        let c_prev = array![-0.3, 0.2, 0.5];
        let x = array![0.9, -0.6];
        let (h, c) = lstm_step(&p, h_prev.view(), c_prev.view(), x.view()).unwrap();

        // Scalar evaluation of the five gate equations, gate blocks indexed by hand.
        let pre = |gate: usize, k: usize| {
            let row = gate * d + k;
            let mut acc = p.b[row];
            for j in 0..d {
                acc += p.u[[row, j]] * h_prev[j];
            }
            for j in 0..e {
                acc += p.v[[row, j]] * x[j];
            }
            acc
        };
        for k in 0..d {
            let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
            let i = sig(pre(0, k));
            let f = sig(pre(1, k));
            let o = sig(pre(2, k));
            let cc = i * pre(3, k).tanh() + f * c_prev[k];
            let hh = o * cc.tanh();
            assert!((c[k] - cc).abs() < 1e-14);
            assert!((h[k] - hh).abs() < 1e-14);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let p = LstmParams::zeros(3, 2);
        let bad = Array1::zeros(4);
        let z = Array1::zeros(3);
        assert!(lstm_step(&p, bad.view(), z.view(), Array1::zeros(2).view()).is_err());
        assert!(lstm_step(&p, z.view(), z.view(), bad.view()).is_err());
    }

    #[test]
    fn sequence_forward_agrees_with_steps() {
        let p = random_params(4, 3, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Array2::from_shape_fn((5, 3), |_| rng.gen_range(-1.0..1.0));
        let tr = lstm_forward(&p, x.clone(), Array1::zeros(4), Array1::zeros(4));
        let (mut h, mut c) = (Array1::zeros(4), Array1::zeros(4));
        for t in 0..5 {
            let (h2, c2) = lstm_step(&p, h.view(), c.view(), x.row(t)).unwrap();
            h = h2;
            c = c2;
            for k in 0..4 {
                assert!((tr.h[[t, k]] - h[k]).abs() < 1e-14);
                assert!((tr.c[[t, k]] - c[k]).abs() < 1e-14);
            }
        }
    }
}
