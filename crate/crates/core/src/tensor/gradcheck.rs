//! Finite-difference oracle for tape gradients.

use super::{Matrix, ParamId, ParamStore, Tape, Var};
use crate::error::Result;

/// Worst relative error between the analytic gradient of
/// `sum(coeffs .* forward(params))` and central differences with step `h`.
///
/// Entries where both gradients are below `1e-7` are skipped; relative
/// error is meaningless there.
pub fn max_relative_error<F>(store: &ParamStore, coeffs: &Matrix, h: f64, forward: F) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = forward(&mut tape, store)?;
    let grads = tape.backward(out, coeffs.clone())?;
    let loss = |s: &ParamStore| -> Result<f64> {
        let mut t = Tape::new();
        let o = forward(&mut t, s)?;
        Ok(t.value(o)
            .data()
            .iter()
            .zip(coeffs.data())
            .map(|(a, b)| a * b)
            .sum())
    };
    let mut worst = 0.0f64;
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let Some(analytic) = grads.param(id) else {
            continue;
        };
        for k in 0..analytic.data().len() {
            let mut plus = store.clone();
            plus.get_mut(id).data_mut()[k] += h;
            let mut minus = store.clone();
            minus.get_mut(id).data_mut()[k] -= h;
            let numeric = (loss(&plus)? - loss(&minus)?) / (2.0 * h);
            let a = analytic.data()[k];
            let scale = a.abs().max(numeric.abs());
            if scale > 1e-7 {
                worst = worst.max((a - numeric).abs() / scale);
            }
        }
    }
    Ok(worst)
}
