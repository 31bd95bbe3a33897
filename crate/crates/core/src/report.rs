//! Machine-readable run reports.
//!
//! A report echoes every parameter and seed of the run, the iteration
//! trace, any bound audits, per-phase wall-clock timings in milliseconds
//! and SHA-256 checksums of the files read and written. Timings are the
//! only non-reproducible field. Non-finite numbers serialise as `null`.

use crate::diagnostics::BoundReport;
use crate::error::Result;
use crate::fixed_point::{FixedPointConfig, IterationRecord, IterationReport, Status};
use crate::solver::SolverConfig;
use crate::sparsify::{RoundRecord, SparsifyConfig};
use crate::tensor::EedParams;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

pub const SCHEMA_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsParams {
    pub n_samples: usize,
    pub seed: u64,
    pub inflation: f64,
    pub sigmas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportParams {
    pub eed: EedParams,
    pub solver: SolverConfig,
    pub fixed_point: FixedPointConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sparsify: Option<SparsifyConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticsParams>,
    /// Choices made by this tool rather than fixed by the method.
    pub tool_choices: Vec<String>,
}

impl ReportParams {
    pub fn new(eed: EedParams, solver: SolverConfig, fixed_point: FixedPointConfig) -> Self {
        Self {
            eed,
            solver,
            fixed_point,
            sparsify: None,
            diagnostics: None,
            tool_choices: vec![
                "initial iterate: data on the known set, its mean elsewhere".into(),
                "grey mapping v/255 on read, clamp and round half away from zero on write".into(),
            ],
        }
    }
}

/// One fixed-point run inside a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrace {
    pub sigma: f64,
    pub status: Status,
    pub returned_index: usize,
    pub error: Option<String>,
    pub records: Vec<IterationRecord>,
}

impl RunTrace {
    pub fn new(sigma: f64, rep: &IterationReport) -> Self {
        Self {
            sigma,
            status: rep.status,
            returned_index: rep.returned_index,
            error: rep.error.clone(),
            records: rep.records.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    pub params: ReportParams,
    pub iterations: Vec<RunTrace>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sparsify_rounds: Vec<RoundRecord>,
    pub bounds: Vec<BoundReport>,
    pub timings: BTreeMap<String, f64>,
    pub checksums: BTreeMap<String, String>,
}

impl RunReport {
    pub fn new(command: &str, params: ReportParams) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            params,
            iterations: Vec::new(),
            sparsify_rounds: Vec::new(),
            bounds: Vec::new(),
            timings: BTreeMap::new(),
            checksums: BTreeMap::new(),
        }
    }

    /// Runs `f` and records its wall-clock time under `phase`; repeated
    /// phases accumulate.
    pub fn timed<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.add_time(phase, start);
        out
    }

    /// Adds the time elapsed since `start` to `phase`.
    pub fn add_time(&mut self, phase: &str, start: Instant) {
        *self.timings.entry(phase.to_string()).or_insert(0.0) += start.elapsed().as_secs_f64() * 1e3;
    }

    pub fn checksum(&mut self, name: &str, bytes: &[u8]) {
        self.checksums.insert(name.to_string(), sha256_hex(bytes));
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
