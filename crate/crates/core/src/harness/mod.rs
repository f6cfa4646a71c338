//! Scaling experiments and CSV results.
//!
//! Performance is reported as traffic and command counts. Wall time is
//! recorded for information only; it measures the simulator, not the
//! modeled hardware.

use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::apps::{self, AppOutput, BenchmarkSpec};
use crate::device::{DeviceConfig, TrafficStats, TransferRecord};
use crate::error::{Error, Result};
use crate::processing::ReductionPolicy;
use crate::PimContext;

mod verify;

pub use verify::{verify_all, verify_with, CheckResult, VerifyOptions, VerifySummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scaling {
    /// Elements per core fixed.
    Weak,
    /// Total elements fixed.
    Strong,
}

impl fmt::Display for Scaling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scaling::Weak => "weak",
            Scaling::Strong => "strong",
        })
    }
}

impl FromStr for Scaling {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "weak" => Ok(Scaling::Weak),
            "strong" => Ok(Scaling::Strong),
            other => Err(format!("unknown scaling {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Benchmark parameters. `total_elems` is derived per core count.
    pub benchmark: BenchmarkSpec,
    /// Elements per core; under strong scaling, per core at the smallest
    /// core count.
    pub elems_per_core: usize,
    pub core_counts: Vec<usize>,
    pub scaling: Scaling,
    pub variant: ReductionPolicy,
    /// Device parameters other than the core count.
    pub device: DeviceConfig,
}

impl ExperimentConfig {
    pub fn new(
        benchmark: BenchmarkSpec,
        elems_per_core: usize,
        core_counts: Vec<usize>,
        scaling: Scaling,
    ) -> Self {
        ExperimentConfig {
            benchmark,
            elems_per_core,
            core_counts,
            scaling,
            variant: ReductionPolicy::Auto,
            device: DeviceConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.core_counts.is_empty() || self.core_counts.contains(&0) {
            return Err(Error::InvalidExperiment(
                "core counts must be non-empty and positive".into(),
            ));
        }
        self.benchmark.validate()
    }

    /// Total elements of the run on `cores` cores.
    pub fn total_elems(&self, cores: usize) -> usize {
        match self.scaling {
            Scaling::Weak => self.elems_per_core * cores,
            Scaling::Strong => {
                self.elems_per_core * self.core_counts.iter().copied().min().unwrap_or(cores)
            }
        }
    }
}

/// One CSV line. Field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub benchmark: String,
    pub cores: usize,
    pub scaling: Scaling,
    pub variant: String,
    pub tasklets_used: usize,
    pub total_elems: usize,
    pub correct: bool,
    pub host_to_pim_bytes: u64,
    pub pim_to_host_bytes: u64,
    pub dram_to_scratch_bytes: u64,
    pub scratch_to_dram_bytes: u64,
    pub dma_commands: u64,
    pub kernel_launches: u64,
    pub wall_time_ms: f64,
}

pub const CSV_COLUMNS: [&str; 14] = [
    "benchmark",
    "cores",
    "scaling",
    "variant",
    "tasklets_used",
    "total_elems",
    "correct",
    "host_to_pim_bytes",
    "pim_to_host_bytes",
    "dram_to_scratch_bytes",
    "scratch_to_dram_bytes",
    "dma_commands",
    "kernel_launches",
    "wall_time_ms",
];

impl ResultRow {
    /// Bank-to-scratchpad plus scratchpad-to-bank bytes.
    pub fn dram_scratch_bytes(&self) -> u64 {
        self.dram_to_scratch_bytes + self.scratch_to_dram_bytes
    }
}

/// Everything one benchmark run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub row: ResultRow,
    pub output: AppOutput,
    pub expected: AppOutput,
    pub stats: TrafficStats,
    /// Empty unless logging was requested.
    pub transfers: Vec<TransferRecord>,
}

/// Runs `spec` once on a fresh device and checks it against the oracle.
/// A mismatch is reported through `row.correct`, not as an error.
pub fn run_single(
    spec: &BenchmarkSpec,
    device: &DeviceConfig,
    variant: ReductionPolicy,
    scaling: Scaling,
    log_transfers: bool,
) -> Result<RunOutcome> {
    let data = apps::generate(spec)?;
    let expected = apps::oracle(spec, &data)?;
    let mut pim = PimContext::new(device.clone())?;
    pim.set_reduction_policy(variant);
    pim.set_transfer_log(log_transfers);
    let start = Instant::now();
    let output = apps::run(&mut pim, spec, &data)?;
    let wall = start.elapsed();

    let reduction = pim.reports().iter().rev().find_map(|r| r.reduction);
    let (variant_name, tasklets) = match reduction {
        Some(plan) => (plan.variant.name().to_owned(), plan.num_tasklets),
        None => (
            "none".to_owned(),
            pim.reports()
                .iter()
                .map(|r| r.num_tasklets)
                .max()
                .unwrap_or(0),
        ),
    };
    let stats = pim.stats();
    let row = ResultRow {
        benchmark: spec.kind.name().to_owned(),
        cores: device.num_cores,
        scaling,
        variant: variant_name,
        tasklets_used: tasklets,
        total_elems: spec.total_elems,
        correct: output == expected,
        host_to_pim_bytes: stats.host_to_pim_bytes,
        pim_to_host_bytes: stats.pim_to_host_bytes,
        dram_to_scratch_bytes: stats.dram_to_scratch_bytes,
        scratch_to_dram_bytes: stats.scratch_to_dram_bytes,
        dma_commands: stats.dma_commands,
        kernel_launches: stats.kernel_launches,
        wall_time_ms: (wall.as_secs_f64() * 1e6).round() / 1e3,
    };
    Ok(RunOutcome {
        row,
        output,
        expected,
        stats,
        transfers: pim.take_transfer_log(),
    })
}

/// Runs the benchmark at every core count. Fails on the first oracle
/// mismatch. `on_run` sees each run before the next one starts.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    log_transfers: bool,
    mut on_run: impl FnMut(&RunOutcome),
) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let mut rows = Vec::with_capacity(config.core_counts.len());
    for &cores in &config.core_counts {
        let spec = BenchmarkSpec {
            total_elems: config.total_elems(cores),
            ..config.benchmark.clone()
        };
        let device = DeviceConfig {
            num_cores: cores,
            ..config.device.clone()
        };
        let outcome = run_single(
            &spec,
            &device,
            config.variant,
            config.scaling,
            log_transfers,
        )?;
        on_run(&outcome);
        if !outcome.row.correct {
            let detail = outcome
                .output
                .first_difference(&outcome.expected)
                .unwrap_or_default();
            return Err(Error::OracleMismatch {
                benchmark: spec.kind.name().to_owned(),
                detail: format!("{cores} cores: {detail}"),
            });
        }
        rows.push(outcome.row);
    }
    Ok(rows)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    run_experiment_with(config, false, |_| {})
}

/// Writes a header and one line per row.
pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    write_csv(rows, File::create(path)?)
}

/// CSV text with the wall-time column blanked, for comparing runs.
pub fn csv_without_wall_time(rows: &[ResultRow]) -> Result<String> {
    let stripped: Vec<ResultRow> = rows
        .iter()
        .map(|r| ResultRow {
            wall_time_ms: 0.0,
            ..r.clone()
        })
        .collect();
    let mut buf = Vec::new();
    write_csv(&stripped, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}
