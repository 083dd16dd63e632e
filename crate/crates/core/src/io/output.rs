use std::io::Write;

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::solvers::{IterationTrace, RunOutput};

pub const TRACE_CSV_HEADER: &str = "k,index,epsilon,iset_size,beta,rse,res_norm_sq";

/// Writes one CSV row per iteration. Indices are 0-based and floats carry 17
/// significant digits.
pub fn write_trace_csv<W: Write>(trace: &IterationTrace, mut w: W) -> Result<(), IoError> {
    writeln!(w, "{TRACE_CSV_HEADER}")?;
    for r in &trace.records {
        writeln!(
            w,
            "{},{},{:.16e},{},{:.16e},{:.16e},{:.16e}",
            r.k, r.index, r.epsilon, r.iset_size, r.beta, r.rse, r.res_norm_sq
        )?;
    }
    Ok(())
}

/// Per-run summary; field order is part of the output format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub variant: String,
    pub seed: u64,
    pub iters: usize,
    pub cpu_seconds: f64,
    /// `None` when no reference solution was available.
    pub final_rse: Option<f64>,
}

impl RunSummary {
    pub fn from_output(output: &RunOutput) -> Self {
        Self {
            variant: output.trace.variant.clone(),
            seed: output.trace.seed,
            iters: output.iterations(),
            cpu_seconds: output.cpu_seconds,
            final_rse: output.trace.final_rse().filter(|v| v.is_finite()),
        }
    }
}

/// Pretty-printed JSON followed by a newline.
pub fn write_json<T: Serialize, W: Write>(value: &T, mut w: W) -> Result<(), IoError> {
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

pub fn write_summary_json<W: Write>(summary: &RunSummary, w: W) -> Result<(), IoError> {
    write_json(summary, w)
}
