use super::model::Qep2SeqModel;
use super::train::Sample;
use super::ModelError;
use crate::par::{self, Execution};

/// Worst disagreement between analytic and numeric gradients in one block.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

/// Below this magnitude the relative error is measured against the floor.
const REL_FLOOR: f64 = 1e-6;

fn total_loss(model: &Qep2SeqModel, samples: &[Sample]) -> Result<f64, ModelError> {
    let mut sum = 0.0;
    for s in samples {
        sum += model.forward_loss(&s.input, &s.target)?.0;
    }
    Ok(sum)
}

/// Compares the backpropagated gradient of the summed loss over `samples`
/// with central differences `(L(θ+ε) - L(θ-ε)) / 2ε`, one entry at a time.
///
/// Relative error is `|g - n| / max(|g|, |n|, 1e-6)`. Results are reported
/// per gate block (see [`super::Params::named_blocks`]).
pub fn gradient_check(
    model: &Qep2SeqModel,
    samples: &[Sample],
    eps: f64,
    exec: Execution,
) -> Result<Vec<TensorCheck>, ModelError> {
    let mut analytic = model.params.zeros_like();
    for s in samples {
        let (_, cache) = model.forward_loss(&s.input, &s.target)?;
        model.accumulate_gradients(&cache, &mut analytic);
    }

    let sizes: Vec<usize> = model.params.tensors().iter().map(|(_, t)| t.len()).collect();
    let coords: Vec<(usize, usize)> =
        sizes.iter().enumerate().flat_map(|(ti, &n)| (0..n).map(move |k| (ti, k))).collect();
    let numeric = par::try_map(exec, &coords, |&(ti, k)| {
        let mut m = model.clone();
        let orig = m.params.tensors()[ti].1[k];
        m.params.tensors_mut()[ti].1[k] = orig + eps;
        let plus = total_loss(&m, samples)?;
        m.params.tensors_mut()[ti].1[k] = orig - eps;
        let minus = total_loss(&m, samples)?;
        Ok::<_, ModelError>((plus - minus) / (2.0 * eps))
    })?;

    let mut numeric_params = model.params.zeros_like();
    {
        let mut flat = numeric.into_iter();
        for (_, t) in numeric_params.tensors_mut() {
            for x in t.iter_mut() {
                *x = flat.next().expect("one value per coordinate");
            }
        }
    }

    let out = analytic
        .named_blocks()
        .into_iter()
        .zip(numeric_params.named_blocks())
        .map(|((name, a), (_, n))| {
            let mut rel: f64 = 0.0;
            let mut abs: f64 = 0.0;
            for (&g, &v) in a.iter().zip(n) {
                let diff = (g - v).abs();
                abs = abs.max(diff);
                rel = rel.max(diff / g.abs().max(v.abs()).max(REL_FLOOR));
            }
            TensorCheck { name, max_rel_error: rel, max_abs_error: abs }
        })
        .collect();
    Ok(out)
}
