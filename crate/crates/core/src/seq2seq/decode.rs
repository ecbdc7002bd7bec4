use std::cmp::Ordering;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::attention::{attend_projected, log_softmax};
use super::lstm::lstm_step;
use super::model::Qep2SeqModel;
use super::vocab::{BOS_ID, END_ID, PAD_ID};
use super::ModelError;

pub const DEFAULT_MAX_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeamConfig {
    /// Beam width.
    pub k: usize,
    pub max_len: usize,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig { k: 4, max_len: DEFAULT_MAX_LEN }
    }
}

/// Encoder output plus the precomputed `W_h h_i` rows.
struct Encoded {
    h: Array2<f64>,
    proj: Array2<f64>,
    last_h: Array1<f64>,
    last_c: Array1<f64>,
}

#[derive(Clone)]
struct State {
    s: Array1<f64>,
    c: Array1<f64>,
}

fn encode_for_decoding(model: &Qep2SeqModel, input: &[usize]) -> Result<Encoded, ModelError> {
    if input.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    if let Some(bad) = input.iter().find(|&&i| i >= model.vocab_in.len()) {
        return Err(ModelError::Dimension(format!("input id {bad} outside vocabulary")));
    }
    let p = &model.params;
    let d = p.encoder.hidden();
    let mut h = Array1::zeros(d);
    let mut c = Array1::zeros(d);
    let mut rows = Array2::zeros((input.len(), d));
    for (t, &id) in input.iter().enumerate() {
        let (h2, c2) = lstm_step(&p.encoder, h.view(), c.view(), p.enc_embedding.row(id))?;
        rows.row_mut(t).assign(&h2);
        h = h2;
        c = c2;
    }
    let proj = rows.dot(&p.attention.w_h.t());
    Ok(Encoded { h: rows, proj, last_h: h, last_c: c })
}

/// Feeds `prev` to the decoder and returns the next state with the
/// log-probabilities of the following token.
fn step(
    model: &Qep2SeqModel,
    enc: &Encoded,
    state: &State,
    prev: usize,
) -> Result<(State, Array1<f64>), ModelError> {
    let p = &model.params;
    let (s, c) = lstm_step(&p.decoder, state.s.view(), state.c.view(), p.dec_embedding.row(prev))?;
    let (_, a) = attend_projected(&p.attention, s.view(), enc.h.view(), enc.proj.view());
    let d = s.len();
    let w = &p.output;
    let logits = w.slice(ndarray::s![.., ..d]).dot(&s) + w.slice(ndarray::s![.., d..]).dot(&a);
    Ok((State { s, c }, log_softmax(logits.view())))
}

fn emittable(id: usize) -> bool {
    id != PAD_ID && id != BOS_ID
}

/// Most likely token at every step, lowest id on ties, until `<END>` or
/// `max_len` steps. `<END>` counts as a step and is not returned.
pub fn greedy_decode(model: &Qep2SeqModel, input: &[usize], max_len: usize) -> Result<Vec<usize>, ModelError> {
    let enc = encode_for_decoding(model, input)?;
    let mut state = State { s: enc.last_h.clone(), c: enc.last_c.clone() };
    let mut prev = BOS_ID;
    let mut out = Vec::new();
    for _ in 0..max_len {
        let (next, lp) = step(model, &enc, &state, prev)?;
        let mut best: Option<usize> = None;
        for (id, &v) in lp.iter().enumerate() {
            if emittable(id) && best.is_none_or(|b| v > lp[b]) {
                best = Some(id);
            }
        }
        let Some(tok) = best else { break };
        if tok == END_ID {
            break;
        }
        out.push(tok);
        state = next;
        prev = tok;
    }
    Ok(out)
}

#[derive(Clone)]
struct Hyp {
    score: f64,
    tokens: Vec<usize>,
    state: State,
}

/// Higher score first, then the lexicographically smaller id sequence.
fn rank(a_score: f64, a_tokens: &[usize], b_score: f64, b_tokens: &[usize]) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_tokens.cmp(b_tokens))
}

/// Beam search over summed log-probabilities without length normalisation.
///
/// Hypotheses that emit `<END>` or reach `max_len` tokens move to the
/// completed pool. Search stops once the best completed score beats every
/// live hypothesis, since scores never increase. The returned ids exclude
/// `<END>`.
pub fn beam_search(model: &Qep2SeqModel, input: &[usize], beam: BeamConfig) -> Result<Vec<usize>, ModelError> {
    if beam.k == 0 {
        return Err(ModelError::Config("beam width must be at least 1".into()));
    }
    let enc = encode_for_decoding(model, input)?;
    let mut active = vec![Hyp {
        score: 0.0,
        tokens: Vec::new(),
        state: State { s: enc.last_h.clone(), c: enc.last_c.clone() },
    }];
    let mut done: Vec<(f64, Vec<usize>)> = Vec::new();
    if beam.max_len == 0 {
        return Ok(Vec::new());
    }

    while !active.is_empty() {
        let mut cands: Vec<(f64, Vec<usize>, usize)> = Vec::new();
        let mut states = Vec::with_capacity(active.len());
        for (hi, h) in active.iter().enumerate() {
            let prev = h.tokens.last().copied().unwrap_or(BOS_ID);
            let (next, lp) = step(model, &enc, &h.state, prev)?;
            states.push(next);
            for (id, &v) in lp.iter().enumerate() {
                if emittable(id) {
                    let mut toks = h.tokens.clone();
                    toks.push(id);
                    cands.push((h.score + v, toks, hi));
                }
            }
        }
        cands.sort_by(|a, b| rank(a.0, &a.1, b.0, &b.1));
        cands.truncate(beam.k);

        let mut next_active = Vec::new();
        for (score, tokens, hi) in cands {
            if tokens.last() == Some(&END_ID) || tokens.len() >= beam.max_len {
                done.push((score, tokens));
            } else {
                next_active.push(Hyp { score, tokens, state: states[hi].clone() });
            }
        }
        active = next_active;

        let best_done = done.iter().map(|d| d.0).fold(f64::NEG_INFINITY, f64::max);
        let best_live = active.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
        if !done.is_empty() && best_done > best_live {
            break;
        }
    }

    done.sort_by(|a, b| rank(a.0, &a.1, b.0, &b.1));
    let mut best = done.into_iter().next().map(|d| d.1).unwrap_or_default();
    if best.last() == Some(&END_ID) {
        best.pop();
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq2seq::params::ModelDims;
    use crate::seq2seq::vocab::Vocab;

    fn tiny(seed: u64, words: &[&str]) -> Qep2SeqModel {
        Qep2SeqModel::new(
            Vocab::build(["a", "b"]),
            Vocab::build(words.iter().copied()),
            ModelDims { hidden: 3, enc_embed: 2, dec_embed: 2 },
            1.5,
            seed,
        )
    }

    /// Score of emitting `seq` (which may end in `<END>`) by replaying steps.
    fn sequence_score(m: &Qep2SeqModel, input: &[usize], seq: &[usize]) -> f64 {
        let enc = encode_for_decoding(m, input).unwrap();
        let mut state = State { s: enc.last_h.clone(), c: enc.last_c.clone() };
        let mut prev = BOS_ID;
        let mut total = 0.0;
        for &tok in seq {
            let (next, lp) = step(m, &enc, &state, prev).unwrap();
            total += lp[tok];
            state = next;
            prev = tok;
        }
        total
    }

    fn exhaustive(m: &Qep2SeqModel, input: &[usize], max_len: usize) -> Vec<usize> {
        let alphabet: Vec<usize> = (0..m.vocab_out.len()).filter(|&i| emittable(i)).collect();
        let words: Vec<usize> = alphabet.iter().copied().filter(|&i| i != END_ID).collect();
        let mut all: Vec<Vec<usize>> = Vec::new();
        let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
        for len in 0..max_len {
            let mut grown = Vec::new();
            for pre in &frontier {
                let mut ended = pre.clone();
                ended.push(END_ID);
                all.push(ended);
                for &w in &words {
                    let mut p = pre.clone();
                    p.push(w);
                    if len + 1 == max_len {
                        all.push(p);
                    } else {
                        grown.push(p);
                    }
                }
            }
            frontier = grown;
        }
        let mut scored: Vec<(f64, Vec<usize>)> =
            all.into_iter().map(|s| (sequence_score(m, input, &s), s)).collect();
        scored.sort_by(|a, b| rank(a.0, &a.1, b.0, &b.1));
        let mut best = scored.swap_remove(0).1;
        if best.last() == Some(&END_ID) {
            best.pop();
        }
        best
    }

    #[test]
    fn beam_of_one_is_greedy() {
        for seed in 0..100 {
            let m = tiny(seed, &["x", "y", "z"]);
            let input = [4, 5, 4];
            let g = greedy_decode(&m, &input, 6).unwrap();
            let b = beam_search(&m, &input, BeamConfig { k: 1, max_len: 6 }).unwrap();
            assert_eq!(g, b, "seed {seed}");
        }
    }

    #[test]
    fn wide_beam_is_exhaustive_argmax() {
        // END, UNK and one word are emittable: three symbols.
        for seed in 0..30 {
            let m = tiny(seed, &["w"]);
            let input = [4, 5];
            let want = exhaustive(&m, &input, 4);
            let got = beam_search(&m, &input, BeamConfig { k: 81, max_len: 4 }).unwrap();
            assert_eq!(got, want, "seed {seed}");
        }
    }

    #[test]
    fn decoding_never_emits_reserved_prefix_tokens() {
        let m = tiny(3, &["x"]);
        let out = greedy_decode(&m, &[4], 10).unwrap();
        assert!(out.iter().all(|&t| t != PAD_ID && t != BOS_ID && t != END_ID));
        assert!(out.len() <= 10);
    }

    #[test]
    fn empty_input_is_rejected() {
        let m = tiny(0, &["x"]);
        assert!(matches!(greedy_decode(&m, &[], 3), Err(ModelError::EmptyInput)));
    }
}
