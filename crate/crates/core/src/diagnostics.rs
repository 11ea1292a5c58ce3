//! Per-block-step measurements and their CSV form.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::arnoldi::ArnoldiState;
use crate::basis::LinearOperator;
use crate::dense::{cond2, norm2, normalize_columns, DenseMat};
use crate::error::{Error, Result};
use crate::orth::loss_of_orthogonality;

pub const CSV_HEADER: &str = "outer,inner_cols,backward_error,ls_residual_estimate,cond_B_tilde,cond_B_subblock,cond_V,ortho_loss_V,stop_reason,restart_cycle";

/// Why a solve ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    ConvergedBackward,
    ConvergedLs,
    KeyDimensionReached,
    BreakdownConverged,
    MaxIters,
}

impl SolveStatus {
    pub fn is_converged(self) -> bool {
        matches!(
            self,
            Self::ConvergedBackward | Self::ConvergedLs | Self::BreakdownConverged
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ConvergedBackward => "converged_backward",
            Self::ConvergedLs => "converged_ls",
            Self::KeyDimensionReached => "key_dimension_reached",
            Self::BreakdownConverged => "breakdown_converged",
            Self::MaxIters => "max_iters",
        }
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolveStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Self::ConvergedBackward,
            Self::ConvergedLs,
            Self::KeyDimensionReached,
            Self::BreakdownConverged,
            Self::MaxIters,
        ]
        .into_iter()
        .find(|st| st.as_str() == s)
        .ok_or_else(|| Error::InvalidInput(format!("unknown status {s:?}")))
    }
}

/// Measurements taken after one block step.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    /// Block-step index, counted from 1 across restart cycles.
    pub outer: usize,
    /// Krylov columns in the current cycle.
    pub inner_cols: usize,
    pub backward_error: Option<f64>,
    pub ls_residual_estimate: f64,
    pub cond_b_tilde: Option<f64>,
    pub cond_b_subblock: Option<f64>,
    pub cond_v: Option<f64>,
    pub ortho_loss_v: Option<f64>,
    pub stop_reason: Option<SolveStatus>,
    pub restart_cycle: usize,
}

/// `‖Ax − b‖ / (‖A‖_F‖x‖ + ‖b‖)`.
pub fn backward_error(a: &dyn LinearOperator, a_fro: f64, b: &[f64], x: &[f64]) -> f64 {
    let mut ax = vec![0.0; b.len()];
    a.apply(x, &mut ax);
    let res: Vec<f64> = ax.iter().zip(b).map(|(p, q)| p - q).collect();
    norm2(&res) / (a_fro * norm2(x) + norm2(b))
}

fn cond_or_missing(m: &DenseMat) -> Option<f64> {
    if m.cols() == 0 {
        return None;
    }
    let (normalized, _) = normalize_columns(m).ok()?;
    cond2(&normalized).ok()
}

/// Fills the measured fields of a record; `outer` and `restart_cycle` are
/// left for the caller.
///
/// Conditioning is measured on the first `cols` basis columns, the prefix
/// that actually enters the solution.
///
/// After a breakdown the trailing basis vector carries no information and is
/// left out of the `V` measurements.
///
/// With `conditioning` off only the backward error and residual estimate
/// are recorded.
#[allow(clippy::too_many_arguments)]
pub fn measure(
    state: &ArnoldiState,
    cols: usize,
    ls_residual_estimate: f64,
    provisional_x: &[f64],
    a: &dyn LinearOperator,
    a_fro: f64,
    b: &[f64],
    conditioning: bool,
) -> IterationRecord {
    let mut rec = IterationRecord {
        outer: 0,
        inner_cols: cols,
        backward_error: Some(backward_error(a, a_fro, b, provisional_x)),
        ls_residual_estimate,
        cond_b_tilde: None,
        cond_b_subblock: None,
        cond_v: None,
        ortho_loss_v: None,
        stop_reason: None,
        restart_cycle: 0,
    };
    if conditioning {
        let cols = cols.min(state.p());
        let start = state.b_block_ends().iter().rev().nth(1).copied().unwrap_or(0).min(cols);
        rec.cond_b_tilde = cond_or_missing(&state.b().columns(0..cols));
        rec.cond_b_subblock = cond_or_missing(&state.b().columns(start..cols));
        let v_cols = if state.converged_by_breakdown() || cols < state.p() { cols } else { cols + 1 };
        let v = state.v().columns(0..v_cols);
        rec.cond_v = cond2(&v).ok();
        rec.ortho_loss_v = Some(loss_of_orthogonality(&v));
    }
    rec
}

fn field(out: &mut String, v: Option<f64>) {
    if let Some(v) = v {
        out.push_str(&format!("{v:e}"));
    }
}

/// Writes the header and one row per record.
pub fn write_csv(records: &[IterationRecord], sink: &mut dyn Write) -> Result<()> {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!("{},{},", r.outer, r.inner_cols));
        field(&mut out, r.backward_error);
        out.push(',');
        field(&mut out, Some(r.ls_residual_estimate));
        for v in [r.cond_b_tilde, r.cond_b_subblock, r.cond_v, r.ortho_loss_v] {
            out.push(',');
            field(&mut out, v);
        }
        out.push(',');
        if let Some(s) = r.stop_reason {
            out.push_str(s.as_str());
        }
        out.push_str(&format!(",{}\n", r.restart_cycle));
    }
    sink.write_all(out.as_bytes())?;
    Ok(())
}

/// Inverse of [`write_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<IterationRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "missing diagnostics header".into(),
            })
        }
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(err(format!("expected 10 fields, found {}", f.len())));
        }
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|e| err(format!("bad number {s:?}: {e}")))
            }
        };
        let int = |s: &str| -> Result<usize> { s.parse().map_err(|e| err(format!("bad integer {s:?}: {e}"))) };
        out.push(IterationRecord {
            outer: int(f[0])?,
            inner_cols: int(f[1])?,
            backward_error: opt(f[2])?,
            ls_residual_estimate: opt(f[3])?.ok_or_else(|| err("missing residual estimate".into()))?,
            cond_b_tilde: opt(f[4])?,
            cond_b_subblock: opt(f[5])?,
            cond_v: opt(f[6])?,
            ortho_loss_v: opt(f[7])?,
            stop_reason: if f[8].is_empty() { None } else { Some(f[8].parse()?) },
            restart_cycle: int(f[9])?,
        });
    }
    Ok(out)
}
