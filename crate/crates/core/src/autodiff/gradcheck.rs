//! Central finite-difference gradient checking.
//!
//! The numerical side only ever evaluates forward passes, so it is independent
//! of the backward rules it checks.

use super::{AutodiffError, Graph, ParamId, ParameterStore, Var};

/// Gradients smaller than this are compared in absolute rather than relative terms.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
}

/// `|a − n| / max(|a|, |n|, RELATIVE_ERROR_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Compares backpropagated gradients of the scalar built by `f` against
/// central differences with step `eps`, over every entry of every parameter.
pub fn check_gradients<F>(store: &mut ParameterStore, eps: f64, f: F) -> Result<GradCheckReport, AutodiffError>
where
    F: Fn(&mut Graph, &ParameterStore) -> Result<Var, AutodiffError>,
{
    let evaluate = |store: &ParameterStore| -> Result<f64, AutodiffError> {
        let mut g = Graph::new();
        let out = f(&mut g, store)?;
        Ok(g.value(out).data()[0])
    };

    store.zero_grads();
    let mut g = Graph::new();
    let loss = f(&mut g, store)?;
    let grads = g.backward(loss, 1.0)?;
    store.accumulate(&grads);

    let ids: Vec<ParamId> = store.ids().collect();
    let mut report = GradCheckReport {
        checked: 0,
        max_relative_error: 0.0,
        worst: None,
    };
    for id in ids {
        for j in 0..store.value(id).data().len() {
            let original = store.value(id).data()[j];
            store.value_mut(id).data_mut()[j] = original + eps;
            let plus = evaluate(store)?;
            store.value_mut(id).data_mut()[j] = original - eps;
            let minus = evaluate(store)?;
            store.value_mut(id).data_mut()[j] = original;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error(store.grad(id).data()[j], numeric);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = Some((store.name(id).to_string(), j));
            }
        }
    }
    store.zero_grads();
    Ok(report)
}
