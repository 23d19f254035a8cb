//! Central finite differences as an independent check on tape gradients.

use crate::params::ParamStore;
use crate::tape::{Tape, Var};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub name: String,
    /// `||analytic - numeric|| / max(||analytic||, ||numeric||, NORM_FLOOR)`
    /// over the checked elements.
    pub rel_err: f64,
    pub checked: usize,
    pub analytic_norm: f64,
}

/// Keeps parameters with an exactly vanishing gradient (for instance a key
/// bias under softmax) from comparing rounding noise against rounding noise.
pub const NORM_FLOOR: f64 = 1e-8;

/// Evenly spaced element indices, at most `limit` of them.
fn sample_indices(numel: usize, limit: Option<usize>) -> Vec<usize> {
    match limit {
        Some(k) if k < numel => (0..k).map(|i| i * numel / k).collect(),
        _ => (0..numel).collect(),
    }
}

fn eval_loss<F>(store: &ParamStore<f64>, loss_fn: &F) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = store.bind(&mut tape);
    let loss = loss_fn(&mut tape, &vars)?;
    Ok(tape.value(loss)[0])
}

/// Compares reverse-mode gradients of `loss_fn` with central differences of
/// step `h`, checking up to `per_tensor` elements of every parameter.
pub fn check_gradients<F>(
    store: &mut ParamStore<f64>,
    loss_fn: F,
    h: f64,
    per_tensor: Option<usize>,
) -> Result<Vec<GradReport>>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = store.bind(&mut tape);
    let loss = loss_fn(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic = store.collect_grads(&mut tape, &vars);

    let mut reports = Vec::with_capacity(store.len());
    for (pi, grad) in analytic.iter().enumerate() {
        let id = crate::ParamId(pi);
        let idx = sample_indices(grad.len(), per_tensor);
        let (mut diff2, mut a2, mut n2) = (0.0, 0.0, 0.0);
        for &i in &idx {
            let orig = store.get(id).tensor.data()[i];
            store.get_mut(id).tensor.data_mut()[i] = orig + h;
            let plus = eval_loss(store, &loss_fn)?;
            store.get_mut(id).tensor.data_mut()[i] = orig - h;
            let minus = eval_loss(store, &loss_fn)?;
            store.get_mut(id).tensor.data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            diff2 += (grad[i] - numeric).powi(2);
            a2 += grad[i] * grad[i];
            n2 += numeric * numeric;
        }
        let denom = a2.sqrt().max(n2.sqrt()).max(NORM_FLOOR);
        reports.push(GradReport {
            name: store.get(id).name.clone(),
            rel_err: diff2.sqrt() / denom,
            checked: idx.len(),
            analytic_norm: a2.sqrt(),
        });
    }
    Ok(reports)
}
