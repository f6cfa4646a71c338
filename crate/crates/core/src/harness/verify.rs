//! The property suite behind `pimlite verify`.

use std::fmt;

use crate::apps::{self, BenchmarkKind, BenchmarkSpec, DataGen};
use crate::comm::plan_scatter;
use crate::device::{DeviceConfig, TransferRecord};
use crate::error::Result;
use crate::processing::{compute_batch_elems, ReductionPolicy};
use crate::PimContext;

use super::{csv_without_wall_time, run_experiment, run_single, ExperimentConfig, Scaling};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyOptions {
    /// Random configurations per benchmark in the oracle check.
    pub oracle_configs: usize,
    /// Fuzzed (len, type size, cores) triples in the roundtrip check.
    pub comm_cases: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            oracle_configs: 100,
            comm_cases: 1000,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VerifySummary {
    pub checks: Vec<CheckResult>,
}

impl VerifySummary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for VerifySummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{} {}: {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            )?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

pub fn verify_all() -> VerifySummary {
    verify_with(&VerifyOptions::default())
}

type Check = fn(&VerifyOptions) -> Result<(bool, String)>;

pub fn verify_with(opts: &VerifyOptions) -> VerifySummary {
    let checks: [(&'static str, Check); 9] = [
        ("oracle equivalence", oracle_equivalence),
        ("communication roundtrip", comm_roundtrip),
        ("alignment audit", alignment_audit),
        ("variant agreement", variant_agreement),
        ("thread throttling", thread_throttling),
        ("lazy zip traffic", lazy_zip_traffic),
        ("batch sizing", batch_sizing),
        ("scaling shapes", scaling_shapes),
        ("determinism", determinism),
    ];
    let checks = checks
        .into_iter()
        .map(|(name, check)| {
            let (passed, detail) = check(opts).unwrap_or_else(|e| (false, format!("error: {e}")));
            CheckResult {
                name,
                passed,
                detail,
            }
        })
        .collect();
    VerifySummary { checks }
}

/// A random benchmark configuration and core count.
pub(crate) fn random_config(kind: BenchmarkKind, rng: &mut DataGen) -> (BenchmarkSpec, usize) {
    let cores = 1 + rng.below(32) as usize;
    let max_per_core = if kind.is_model() { 400 } else { 20_000 };
    let per_core = match rng.below(8) {
        0 => 0,
        1 => rng.below(8),
        _ => rng.below(max_per_core),
    } as usize;
    let spec = BenchmarkSpec {
        total_elems: per_core * cores + rng.below(cores as u32) as usize,
        dims: 1 + rng.below(12) as usize,
        bins: 2 + rng.below(4095) as usize,
        clusters: 1 + rng.below(12) as usize,
        iterations: 1 + rng.below(3) as usize,
        seed: rng.next_u32() as u64,
        ..BenchmarkSpec::new(kind, 0)
    };
    (spec, cores)
}

fn oracle_equivalence(opts: &VerifyOptions) -> Result<(bool, String)> {
    let mut runs = 0;
    for kind in BenchmarkKind::ALL {
        let mut rng = DataGen::new(opts.seed, 100 + kind as u64);
        for _ in 0..opts.oracle_configs {
            let (spec, cores) = random_config(kind, &mut rng);
            let out = run_single(
                &spec,
                &DeviceConfig::with_cores(cores),
                ReductionPolicy::Auto,
                Scaling::Weak,
                false,
            )?;
            if let Some(d) = out.output.first_difference(&out.expected) {
                return Ok((false, format!("{kind} on {cores} cores, {spec:?}: {d}")));
            }
            runs += 1;
        }
    }
    Ok((true, format!("{runs} runs bit-identical")))
}

fn comm_roundtrip(opts: &VerifyOptions) -> Result<(bool, String)> {
    let mut rng = DataGen::new(opts.seed, 200);
    for case in 0..opts.comm_cases {
        let type_size = match case % 4 {
            0 => 12,
            1 => 40,
            _ => 1 + rng.below(48) as usize,
        };
        let len = rng.below(1025) as usize;
        let cores = 1 + rng.below(32) as usize;
        let data: Vec<u8> = (0..len * type_size).map(|_| rng.next_u32() as u8).collect();
        let mut pim = PimContext::new(DeviceConfig::with_cores(cores))?;
        pim.scatter("a", &data, len, type_size)?;
        let fail = |what: &str| {
            Ok((
                false,
                format!("{what} for len {len}, type size {type_size}, {cores} cores"),
            ))
        };
        if pim.gather("a")? != data {
            return fail("scatter/gather");
        }
        pim.allgather("a", "all")?;
        for core in 0..cores {
            if pim.read_local("all", core)? != data {
                return fail("allgather");
            }
        }
    }
    Ok((true, format!("{} triples", opts.comm_cases)))
}

/// DMA records that break the alignment or size rules of `config`.
pub fn illegal_dma<'a>(
    log: &'a [TransferRecord],
    config: &DeviceConfig,
) -> Vec<&'a TransferRecord> {
    let a = config.dma_alignment;
    log.iter()
        .filter(|r| r.kind.is_dma())
        .filter(|r| {
            r.size == 0
                || r.size > config.dma_max_bytes
                || r.size % a != 0
                || r.dram_offset % a != 0
                || r.scratch_offset.is_none_or(|s| s % a != 0)
        })
        .collect()
}

fn alignment_audit(opts: &VerifyOptions) -> Result<(bool, String)> {
    let mut commands = 0;
    for kind in BenchmarkKind::ALL {
        for (cores, total) in [(1, 1), (3, 1001), (8, 8 * 997), (13, 4099)] {
            let spec = BenchmarkSpec {
                seed: opts.seed,
                iterations: 2,
                dims: 3,
                ..BenchmarkSpec::new(kind, total)
            };
            let cfg = DeviceConfig::with_cores(cores);
            let out = run_single(&spec, &cfg, ReductionPolicy::Auto, Scaling::Weak, true)?;
            let bad = illegal_dma(&out.transfers, &cfg);
            if let Some(r) = bad.first() {
                return Ok((
                    false,
                    format!("{} illegal commands in {kind}, first: {r}", bad.len()),
                ));
            }
            commands += out.transfers.iter().filter(|r| r.kind.is_dma()).count();
        }
    }
    Ok((true, format!("{commands} DMA commands legal")))
}

fn histogram_bins(bins: usize, policy: ReductionPolicy, seed: u64) -> Result<(Vec<u32>, usize)> {
    let data = DataGen::new(seed, 300).u32s_below(8 * 4000, 4096);
    let mut pim = PimContext::new(DeviceConfig::with_cores(8))?;
    pim.set_reduction_policy(policy);
    let out = apps::run_histogram(&mut pim, &data, bins)?;
    let tasklets = pim.reports().last().map_or(0, |r| r.num_tasklets);
    Ok((out, tasklets))
}

const BIN_SWEEP: [usize; 5] = [256, 512, 1024, 2048, 4096];

fn variant_agreement(opts: &VerifyOptions) -> Result<(bool, String)> {
    for bins in BIN_SWEEP {
        let shared = histogram_bins(bins, ReductionPolicy::Shared, opts.seed)?.0;
        let private = histogram_bins(bins, ReductionPolicy::Private, opts.seed)?.0;
        if shared != private {
            return Ok((false, format!("{bins} bins differ")));
        }
    }
    Ok((true, format!("bins {BIN_SWEEP:?}")))
}

fn thread_throttling(opts: &VerifyOptions) -> Result<(bool, String)> {
    let mut got = Vec::new();
    for bins in BIN_SWEEP {
        got.push(histogram_bins(bins, ReductionPolicy::Auto, opts.seed)?.1);
    }
    Ok((got == [12, 12, 8, 4, 2], format!("tasklets {got:?}")))
}

/// Bank/scratchpad bytes of a vecadd run with eager and lazy zipping.
pub fn vecadd_zip_traffic(elems_per_core: usize, cores: usize, seed: u64) -> Result<(u64, u64)> {
    let a = DataGen::new(seed, 0).u32s(elems_per_core * cores);
    let b = DataGen::new(seed, 1).u32s(elems_per_core * cores);
    let mut traffic = [0; 2];
    for (slot, lazy) in [(0, false), (1, true)] {
        let mut pim = PimContext::new(DeviceConfig::with_cores(cores))?;
        apps::run_vecadd_with(&mut pim, &a, &b, lazy)?;
        traffic[slot] = pim.stats().dram_scratch_bytes();
    }
    Ok((traffic[0], traffic[1]))
}

fn lazy_zip_traffic(opts: &VerifyOptions) -> Result<(bool, String)> {
    let (eager, lazy) = vecadd_zip_traffic(10_000, 8, opts.seed)?;
    let ratio = eager as f64 / lazy as f64;
    Ok((
        (2.0..=2.5).contains(&ratio),
        format!("eager {eager} / lazy {lazy} = {ratio:.4}"),
    ))
}

fn batch_sizing(_: &VerifyOptions) -> Result<(bool, String)> {
    let got: Vec<usize> = [4, 12, 40]
        .iter()
        .map(|&ts| compute_batch_elems(ts, 2048, 8))
        .collect::<Result<_>>()?;
    Ok((got == [512, 170, 51], format!("{got:?}")))
}

fn scaling_shapes(opts: &VerifyOptions) -> Result<(bool, String)> {
    let counts = vec![8, 16, 32];
    for kind in BenchmarkKind::ALL {
        let per_core = if kind.is_model() { 500 } else { 10_000 };
        let spec = BenchmarkSpec {
            seed: opts.seed,
            ..BenchmarkSpec::new(kind, 0)
        };
        let weak = run_experiment(&ExperimentConfig::new(
            spec.clone(),
            per_core,
            counts.clone(),
            Scaling::Weak,
        ))?;
        let per: Vec<u64> = weak
            .iter()
            .map(|r| r.dram_scratch_bytes() / r.cores as u64)
            .collect();
        let exact = weak
            .iter()
            .all(|r| r.dram_scratch_bytes() % r.cores as u64 == 0);
        if !exact || per.windows(2).any(|w| w[0] != w[1]) {
            return Ok((false, format!("{kind} weak per-core traffic {per:?}")));
        }
        let strong = run_experiment(&ExperimentConfig::new(
            spec.clone(),
            per_core,
            counts.clone(),
            Scaling::Strong,
        ))?;
        let base = strong[0].dram_scratch_bytes();
        for r in &strong[1..] {
            let widest = if kind.is_model() { 4 * spec.dims } else { 4 };
            let chunk = plan_scatter(r.total_elems, widest, r.cores, 8).padded_chunk_bytes as u64;
            let bound = r.kernel_launches * r.cores as u64 * chunk;
            if r.dram_scratch_bytes().abs_diff(base) > bound {
                return Ok((
                    false,
                    format!(
                        "{kind} strong traffic {} vs {base} at {} cores",
                        r.dram_scratch_bytes(),
                        r.cores
                    ),
                ));
            }
        }
    }
    Ok((true, format!("cores {counts:?}")))
}

fn determinism(opts: &VerifyOptions) -> Result<(bool, String)> {
    for kind in BenchmarkKind::ALL {
        let spec = BenchmarkSpec {
            seed: opts.seed,
            ..BenchmarkSpec::new(kind, 0)
        };
        let cfg = ExperimentConfig::new(spec, 300, vec![1, 5, 9], Scaling::Weak);
        let first = csv_without_wall_time(&run_experiment(&cfg)?)?;
        let second = csv_without_wall_time(&run_experiment(&cfg)?)?;
        if first != second {
            return Ok((false, format!("{kind} CSV differs between runs")));
        }
    }
    Ok((true, "identical CSV for every benchmark".into()))
}
