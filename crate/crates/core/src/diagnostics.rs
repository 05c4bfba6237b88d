//! Convergence-rate diagnostics for policy iteration traces.
//!
//! Errors `e_k = ||pi_k - pi*||_F` against a reference policy are turned into
//! `ln|ln e_k|` (which grows by `ln 2` per step under exact quadratic
//! convergence) and successive ratios `ln e_{k+1} / ln e_k` (2 for quadratic,
//! tending to 1 for linear convergence).

use crate::error::{Error, Result};
use crate::qn::IterationTrace;
use crate::table::Policy;

/// Errors at or below `ERROR_FLOOR_SCALE * ||pi*||_F` are treated as having
/// hit rounding level and are excluded from rate estimates.
pub const ERROR_FLOOR_SCALE: f64 = 1e-14;

/// Band for the last two ratios that counts as quadratic convergence.
pub const QUADRATIC_BAND: (f64, f64) = (1.5, 2.5);

/// Band for the last two ratios that counts as linear convergence.
pub const LINEAR_BAND: (f64, f64) = (0.5, 1.25);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RateVerdict {
    Quadratic,
    Linear,
    Inconclusive,
}

impl std::fmt::Display for RateVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RateVerdict::Quadratic => "quadratic",
            RateVerdict::Linear => "linear",
            RateVerdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticRow {
    /// Index of the iterate; 0 is the initial policy when it was recorded.
    pub iter: usize,
    pub err_frob: f64,
    /// `ln|ln e|`, for measurable errors.
    pub log_log_err: Option<f64>,
    /// `ln e_k / ln e_{k-1}` when both errors are measurable.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceDiagnostics {
    pub rows: Vec<DiagnosticRow>,
    /// Successive ratios between measurable errors, in order.
    pub ratios: Vec<f64>,
    pub verdict: RateVerdict,
}

impl ConvergenceDiagnostics {
    /// The last `n` ratios (fewer if not available).
    pub fn last_ratios(&self, n: usize) -> &[f64] {
        &self.ratios[self.ratios.len().saturating_sub(n)..]
    }
}

/// Per-iterate rows for a raw error sequence. Errors in `(floor, 1)` are
/// measurable and get a log-log value and, after the first, a ratio.
pub fn diagnostic_rows(errors: &[f64], floor: f64) -> Vec<DiagnosticRow> {
    let measurable = |e: f64| e > floor && e < 1.0;
    let mut prev: Option<f64> = None;
    errors
        .iter()
        .enumerate()
        .map(|(iter, &e)| {
            let (log_log_err, ratio) = if measurable(e) {
                let ratio = prev.map(|p| e.ln() / p.ln());
                prev = Some(e);
                (Some(e.ln().abs().ln()), ratio)
            } else {
                (None, None)
            };
            DiagnosticRow {
                iter,
                err_frob: e,
                log_log_err,
                ratio,
            }
        })
        .collect()
}

/// Diagnoses a raw error sequence. Errors in `(floor, 1)` are measurable.
pub fn diagnose_errors(errors: &[f64], floor: f64) -> Result<ConvergenceDiagnostics> {
    let rows = diagnostic_rows(errors, floor);
    let count = rows.iter().filter(|r| r.log_log_err.is_some()).count();
    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    if count < 3 {
        return Err(Error::InsufficientData { measurable: count });
    }
    let last = &ratios[ratios.len() - 2..];
    let within = |(lo, hi): (f64, f64)| last.iter().all(|r| (lo..=hi).contains(r));
    let verdict = if within(QUADRATIC_BAND) {
        RateVerdict::Quadratic
    } else if within(LINEAR_BAND) {
        RateVerdict::Linear
    } else {
        RateVerdict::Inconclusive
    };
    Ok(ConvergenceDiagnostics {
        rows,
        ratios,
        verdict,
    })
}

/// Errors of every recorded iterate against `reference`.
pub fn trace_errors(trace: &IterationTrace, reference: &Policy) -> Vec<f64> {
    trace
        .snapshots()
        .map(|p| p.table().frobenius_distance(reference.table()))
        .collect()
}

/// Diagnoses a trace recorded with snapshots. The usual reference is the
/// final policy of the run.
///
/// Besides the rounding floor `ERROR_FLOOR_SCALE * max(1, ||pi*||_F)`, the
/// smallest positive error is treated as unresolved: with the final iterate
/// as reference it is the size of the last step, which reflects the stopping
/// resolution of the run rather than the error of the previous iterate.
pub fn convergence_diagnostics(
    trace: &IterationTrace,
    reference: &Policy,
) -> Result<ConvergenceDiagnostics> {
    let errors = trace_errors(trace, reference);
    let resolution = errors
        .iter()
        .copied()
        .filter(|&e| e > 0.0)
        .fold(0.0, |m: f64, e| if m == 0.0 { e } else { m.min(e) });
    let floor = (ERROR_FLOOR_SCALE * reference.table().frobenius_norm().max(1.0)).max(resolution);
    diagnose_errors(&errors, floor)
}
