//! Finite-difference verification of analytic gradients.

use std::fmt;

use super::{ParamStore, Tape, Tensor, Var};
use crate::error::Result;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Denominator floor for the relative error, so entries whose true gradient is ~0 are judged on
/// absolute error instead of amplifying rounding noise.
pub const DEFAULT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Pass iff the maximum relative error is at most this.
    pub tolerance: f64,
    pub floor: f64,
}

impl GradCheckOptions {
    pub fn with_tolerance(tolerance: f64) -> Self {
        GradCheckOptions {
            step: DEFAULT_STEP,
            tolerance,
            floor: DEFAULT_FLOOR,
        }
    }
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self::with_tolerance(1e-4)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntryMismatch {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: Option<EntryMismatch>,
    pub entries_checked: usize,
    pub tolerance: f64,
    /// Set when the loss or a gradient was NaN or infinite.
    pub non_finite: Option<String>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.non_finite.is_none() && self.max_rel_error <= self.tolerance
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(msg) = &self.non_finite {
            return write!(f, "FAIL numeric failure: {msg}");
        }
        write!(
            f,
            "{} max_rel_error={:.3e} tol={:.0e} entries={}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.max_rel_error,
            self.tolerance,
            self.entries_checked
        )?;
        if let Some(w) = &self.worst {
            write!(
                f,
                " worst={}[{}] analytic={:.6e} numeric={:.6e}",
                w.param, w.index, w.analytic, w.numeric
            )?;
        }
        Ok(())
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn evaluate<F>(store: &ParamStore, f: &mut F) -> Result<f64>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = f(&mut tape, store)?;
    Ok(tape.value(loss).item())
}

/// Analytic gradients of `f` for every parameter, computed on a fresh tape with zeroed grads.
pub fn analytic_gradient<F>(store: &mut ParamStore, f: &mut F) -> Result<Vec<Tensor>>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var>,
{
    store.zero_grads();
    let mut tape = Tape::new();
    let loss = f(&mut tape, store)?;
    tape.backward(loss, store)?;
    let grads = store.iter().map(|(_, p)| p.grad.clone()).collect();
    store.zero_grads();
    Ok(grads)
}

/// Central differences `(f(x+h) − f(x−h)) / 2h` for every parameter entry.
pub fn numeric_gradient<F>(store: &mut ParamStore, f: &mut F, step: f64) -> Result<Vec<Tensor>>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var>,
{
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let mut g = Tensor::zeros(store.value(id).shape());
        for i in 0..g.numel() {
            let orig = store.value(id).data()[i];
            store.get_mut(id).value.data_mut()[i] = orig + step;
            let plus = evaluate(store, f);
            store.get_mut(id).value.data_mut()[i] = orig - step;
            let minus = evaluate(store, f);
            store.get_mut(id).value.data_mut()[i] = orig;
            g.data_mut()[i] = (plus? - minus?) / (2.0 * step);
        }
        out.push(g);
    }
    Ok(out)
}

/// Entry-wise comparison of two gradient sets laid out in parameter-id order.
pub fn compare_gradients(
    store: &ParamStore,
    analytic: &[Tensor],
    numeric: &[Tensor],
    opts: &GradCheckOptions,
) -> GradCheckReport {
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        entries_checked: 0,
        tolerance: opts.tolerance,
        non_finite: None,
    };
    for (((_, p), a), n) in store.iter().zip(analytic).zip(numeric) {
        for (i, (&av, &nv)) in a.data().iter().zip(n.data()).enumerate() {
            report.entries_checked += 1;
            if !av.is_finite() || !nv.is_finite() {
                report.non_finite = Some(format!("{}[{i}] analytic={av} numeric={nv}", p.name()));
                return report;
            }
            let err = relative_error(av, nv, opts.floor);
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some(EntryMismatch {
                    param: p.name().to_string(),
                    index: i,
                    analytic: av,
                    numeric: nv,
                    rel_error: err,
                });
            }
        }
    }
    report
}

/// Checks the tape gradient of the scalar built by `f` against central differences over every
/// entry of every parameter in `store`.
pub fn grad_check<F>(
    store: &mut ParamStore,
    mut f: F,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var>,
{
    let base = evaluate(store, &mut f)?;
    if !base.is_finite() {
        return Ok(GradCheckReport {
            max_rel_error: f64::INFINITY,
            worst: None,
            entries_checked: 0,
            tolerance: opts.tolerance,
            non_finite: Some(format!("loss evaluated to {base}")),
        });
    }
    let analytic = analytic_gradient(store, &mut f)?;
    let numeric = numeric_gradient(store, &mut f, opts.step)?;
    Ok(compare_gradients(store, &analytic, &numeric, opts))
}
