//! Software model of a UPMEM-style processing-in-memory machine.
//!
//! Each core owns a private DRAM bank and a scratchpad. Cores never address
//! each other's memory; the host moves data with serial or parallel
//! transfers, and kernels move data between a core's bank and its scratchpad
//! with explicit DMA commands that must respect the alignment and size
//! limits of the hardware. Every byte that crosses one of these boundaries is
//! counted in [`TrafficStats`], and can optionally be recorded in a transfer
//! log.
//!
//! Tasklets run under a deterministic scheduler: within a core, the tasklets
//! of a kernel phase execute one after another in id order, and phases are
//! separated by a per-core barrier. Cores themselves run in parallel on the
//! host, which is safe because their state is disjoint.

use std::fmt;
use std::ops::AddAssign;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Rounds `value` up to the next multiple of `multiple`.
pub fn round_up(value: usize, multiple: usize) -> usize {
    debug_assert!(multiple > 0);
    value.div_ceil(multiple) * multiple
}

/// Tasklet counts tried, in order, when a kernel has to shed threads to fit
/// its scratchpad footprint.
pub const TASKLET_CANDIDATES: [usize; 5] = [12, 8, 4, 2, 1];

/// Candidate tasklet counts for a configuration, largest first.
pub fn tasklet_candidates(config: &DeviceConfig) -> Vec<usize> {
    let mut out = vec![config.max_tasklets];
    out.extend(
        TASKLET_CANDIDATES
            .iter()
            .copied()
            .filter(|&t| t < config.max_tasklets),
    );
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceConfig {
    pub num_cores: usize,
    pub dram_bank_bytes: usize,
    pub scratchpad_bytes: usize,
    pub max_tasklets: usize,
    pub dma_max_bytes: usize,
    pub dma_alignment: usize,
    /// Scratchpad bytes set aside for tasklet stacks and the runtime.
    pub scratchpad_reserve_bytes: usize,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig {
            num_cores: 1,
            dram_bank_bytes: 64 << 20,
            scratchpad_bytes: 64 << 10,
            max_tasklets: 12,
            dma_max_bytes: 2048,
            dma_alignment: 8,
            scratchpad_reserve_bytes: 8192,
        }
    }
}

impl DeviceConfig {
    pub fn with_cores(num_cores: usize) -> Self {
        DeviceConfig {
            num_cores,
            ..Default::default()
        }
    }

    /// Scratchpad bytes a kernel may claim.
    pub fn usable_scratchpad(&self) -> usize {
        self.scratchpad_bytes
            .saturating_sub(self.scratchpad_reserve_bytes)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_cores == 0 {
            return fail("num_cores must be at least 1".into());
        }
        if self.max_tasklets == 0 {
            return fail("max_tasklets must be at least 1".into());
        }
        if self.dma_alignment == 0 || self.dma_max_bytes == 0 {
            return fail("DMA alignment and limit must be nonzero".into());
        }
        if !self.dma_max_bytes.is_multiple_of(self.dma_alignment) {
            return fail(format!(
                "dma_alignment {} does not divide dma_max_bytes {}",
                self.dma_alignment, self.dma_max_bytes
            ));
        }
        if self.dma_max_bytes > self.scratchpad_bytes {
            return fail(format!(
                "dma_max_bytes {} exceeds scratchpad_bytes {}",
                self.dma_max_bytes, self.scratchpad_bytes
            ));
        }
        if self.scratchpad_reserve_bytes > self.scratchpad_bytes {
            return fail("scratchpad reserve exceeds the scratchpad".into());
        }
        Ok(())
    }
}

/// Cumulative byte and command counters. Never decrease.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TrafficStats {
    pub host_to_pim_bytes: u64,
    pub pim_to_host_bytes: u64,
    pub dram_to_scratch_bytes: u64,
    pub scratch_to_dram_bytes: u64,
    pub dma_commands: u64,
    pub parallel_transfers: u64,
    pub serial_transfers: u64,
    pub kernel_launches: u64,
}

impl TrafficStats {
    /// Bank-to-scratchpad plus scratchpad-to-bank bytes.
    pub fn dram_scratch_bytes(&self) -> u64 {
        self.dram_to_scratch_bytes + self.scratch_to_dram_bytes
    }

    /// Counter-wise difference `self - earlier`.
    pub fn since(&self, earlier: &TrafficStats) -> TrafficStats {
        TrafficStats {
            host_to_pim_bytes: self.host_to_pim_bytes - earlier.host_to_pim_bytes,
            pim_to_host_bytes: self.pim_to_host_bytes - earlier.pim_to_host_bytes,
            dram_to_scratch_bytes: self.dram_to_scratch_bytes - earlier.dram_to_scratch_bytes,
            scratch_to_dram_bytes: self.scratch_to_dram_bytes - earlier.scratch_to_dram_bytes,
            dma_commands: self.dma_commands - earlier.dma_commands,
            parallel_transfers: self.parallel_transfers - earlier.parallel_transfers,
            serial_transfers: self.serial_transfers - earlier.serial_transfers,
            kernel_launches: self.kernel_launches - earlier.kernel_launches,
        }
    }
}

impl AddAssign for TrafficStats {
    fn add_assign(&mut self, rhs: Self) {
        self.host_to_pim_bytes += rhs.host_to_pim_bytes;
        self.pim_to_host_bytes += rhs.pim_to_host_bytes;
        self.dram_to_scratch_bytes += rhs.dram_to_scratch_bytes;
        self.scratch_to_dram_bytes += rhs.scratch_to_dram_bytes;
        self.dma_commands += rhs.dma_commands;
        self.parallel_transfers += rhs.parallel_transfers;
        self.serial_transfers += rhs.serial_transfers;
        self.kernel_launches += rhs.kernel_launches;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransferKind {
    HostToPim,
    PimToHost,
    DramToScratch,
    ScratchToDram,
}

impl TransferKind {
    pub fn is_dma(self) -> bool {
        matches!(
            self,
            TransferKind::DramToScratch | TransferKind::ScratchToDram
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TransferKind::HostToPim => "host->pim",
            TransferKind::PimToHost => "pim->host",
            TransferKind::DramToScratch => "dram->scratch",
            TransferKind::ScratchToDram => "scratch->dram",
        }
    }
}

/// One entry of the transfer log. Host transfers produce one record per core.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransferRecord {
    pub kind: TransferKind,
    pub core: usize,
    pub dram_offset: usize,
    /// Only set for DMA commands.
    pub scratch_offset: Option<usize>,
    pub size: usize,
}

impl fmt::Display for TransferRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} core={} offset={} size={}",
            self.kind.as_str(),
            self.core,
            self.dram_offset,
            self.size
        )?;
        if let Some(s) = self.scratch_offset {
            write!(f, " scratch={s}")?;
        }
        Ok(())
    }
}

fn check_aligned(what: &'static str, value: usize, alignment: usize) -> Result<()> {
    if !value.is_multiple_of(alignment) {
        return Err(Error::AlignmentViolation {
            what,
            value,
            alignment,
        });
    }
    Ok(())
}

fn check_range(what: &'static str, start: usize, len: usize, limit: usize) -> Result<()> {
    let end = start.saturating_add(len);
    if end > limit {
        return Err(Error::OutOfBounds {
            what,
            start,
            end,
            limit,
        });
    }
    Ok(())
}

fn check_dma(
    config: &DeviceConfig,
    dram_offset: usize,
    scratch_offset: usize,
    nbytes: usize,
    bank_len: usize,
    scratch_len: usize,
) -> Result<()> {
    if nbytes == 0 {
        return Err(Error::EmptyTransfer);
    }
    if nbytes > config.dma_max_bytes {
        return Err(Error::SizeLimitViolation {
            size: nbytes,
            limit: config.dma_max_bytes,
        });
    }
    let align = config.dma_alignment;
    check_aligned("dma size", nbytes, align)?;
    check_aligned("dram offset", dram_offset, align)?;
    check_aligned("scratchpad offset", scratch_offset, align)?;
    check_range("bank", dram_offset, nbytes, bank_len)?;
    check_range("scratchpad", scratch_offset, nbytes, scratch_len)
}

/// Per-entry mutual exclusion for one core.
///
/// Tasklets run sequentially between barriers, so a held lock at acquisition
/// time means the kernel would deadlock on hardware; that is reported as an
/// error instead of blocking.
#[derive(Debug, Default)]
pub struct LockTable {
    held: Vec<bool>,
    acquisitions: u64,
}

impl LockTable {
    pub fn acquire(&mut self, entry: usize) -> Result<()> {
        if entry >= self.held.len() {
            self.held.resize(entry + 1, false);
        }
        if self.held[entry] {
            return Err(Error::LockHeld { entry });
        }
        self.held[entry] = true;
        self.acquisitions += 1;
        Ok(())
    }

    pub fn release(&mut self, entry: usize) {
        if let Some(h) = self.held.get_mut(entry) {
            *h = false;
        }
    }

    pub fn acquisitions(&self) -> u64 {
        self.acquisitions
    }
}

/// Execution context handed to a kernel body for one (core, tasklet) pair.
pub struct TaskletContext<'a> {
    pub core_id: usize,
    pub tasklet_id: usize,
    pub num_tasklets: usize,
    config: &'a DeviceConfig,
    bank: &'a mut [u8],
    scratch: &'a mut [u8],
    locks: &'a mut LockTable,
    stats: &'a mut TrafficStats,
    log: Option<&'a mut Vec<TransferRecord>>,
}

impl<'a> TaskletContext<'a> {
    pub fn config(&self) -> &DeviceConfig {
        self.config
    }

    /// The scratchpad region claimed by the kernel, shared by every tasklet
    /// of this core.
    pub fn scratch(&mut self) -> &mut [u8] {
        self.scratch
    }

    pub fn locks(&mut self) -> &mut LockTable {
        self.locks
    }

    pub fn scratch_and_locks(&mut self) -> (&mut [u8], &mut LockTable) {
        (self.scratch, self.locks)
    }

    /// Copies `nbytes` from the bank into the scratchpad.
    pub fn dma_read(
        &mut self,
        dram_offset: usize,
        scratch_offset: usize,
        nbytes: usize,
    ) -> Result<()> {
        check_dma(
            self.config,
            dram_offset,
            scratch_offset,
            nbytes,
            self.bank.len(),
            self.scratch.len(),
        )?;
        self.scratch[scratch_offset..scratch_offset + nbytes]
            .copy_from_slice(&self.bank[dram_offset..dram_offset + nbytes]);
        self.stats.dram_to_scratch_bytes += nbytes as u64;
        self.stats.dma_commands += 1;
        self.record(
            TransferKind::DramToScratch,
            dram_offset,
            scratch_offset,
            nbytes,
        );
        Ok(())
    }

    /// Copies `nbytes` from the scratchpad into the bank.
    pub fn dma_write(
        &mut self,
        scratch_offset: usize,
        dram_offset: usize,
        nbytes: usize,
    ) -> Result<()> {
        check_dma(
            self.config,
            dram_offset,
            scratch_offset,
            nbytes,
            self.bank.len(),
            self.scratch.len(),
        )?;
        self.bank[dram_offset..dram_offset + nbytes]
            .copy_from_slice(&self.scratch[scratch_offset..scratch_offset + nbytes]);
        self.stats.scratch_to_dram_bytes += nbytes as u64;
        self.stats.dma_commands += 1;
        self.record(
            TransferKind::ScratchToDram,
            dram_offset,
            scratch_offset,
            nbytes,
        );
        Ok(())
    }

    fn record(
        &mut self,
        kind: TransferKind,
        dram_offset: usize,
        scratch_offset: usize,
        size: usize,
    ) {
        if let Some(log) = self.log.as_deref_mut() {
            log.push(TransferRecord {
                kind,
                core: self.core_id,
                dram_offset,
                scratch_offset: Some(scratch_offset),
                size,
            });
        }
    }
}

/// A program executed by every tasklet of every core.
///
/// A kernel runs as a sequence of phases with a barrier between consecutive
/// phases; every tasklet runs every phase.
pub trait Kernel: Sync {
    /// Scratchpad bytes the kernel claims on each core when launched with
    /// `num_tasklets` tasklets.
    fn scratchpad_footprint(&self, num_tasklets: usize) -> usize;

    fn num_phases(&self) -> usize {
        1
    }

    fn run(&self, phase: usize, ctx: &mut TaskletContext<'_>) -> Result<()>;
}

pub struct PimDevice {
    config: DeviceConfig,
    banks: Vec<Vec<u8>>,
    scratchpads: Vec<Vec<u8>>,
    cursors: Vec<usize>,
    stats: TrafficStats,
    log: Option<Vec<TransferRecord>>,
}

impl fmt::Debug for PimDevice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PimDevice")
            .field("config", &self.config)
            .field("cursors", &self.cursors)
            .field("stats", &self.stats)
            .finish_non_exhaustive()
    }
}

impl PimDevice {
    pub fn new(config: DeviceConfig) -> Result<Self> {
        config.validate()?;
        let n = config.num_cores;
        Ok(PimDevice {
            banks: vec![Vec::new(); n],
            scratchpads: vec![vec![0; config.scratchpad_bytes]; n],
            cursors: vec![0; n],
            stats: TrafficStats::default(),
            log: None,
            config,
        })
    }

    pub fn config(&self) -> &DeviceConfig {
        &self.config
    }

    pub fn num_cores(&self) -> usize {
        self.config.num_cores
    }

    pub fn stats(&self) -> TrafficStats {
        self.stats
    }

    /// Turns the transfer log on or off. Turning it off drops recorded entries.
    pub fn set_transfer_log(&mut self, enabled: bool) {
        self.log = enabled.then(Vec::new);
    }

    pub fn transfer_log(&self) -> Option<&[TransferRecord]> {
        self.log.as_deref()
    }

    /// Returns the recorded entries and leaves an empty log behind (if enabled).
    pub fn take_transfer_log(&mut self) -> Vec<TransferRecord> {
        match self.log.as_mut() {
            Some(log) => std::mem::take(log),
            None => Vec::new(),
        }
    }

    /// Allocation cursor of every core. Allocation is symmetric, so all
    /// entries are equal.
    pub fn cursors(&self) -> &[usize] {
        &self.cursors
    }

    pub fn cursor(&self) -> usize {
        self.cursors[0]
    }

    /// Reserves `nbytes` (rounded up to the DMA alignment) in every bank and
    /// returns the common offset.
    pub fn alloc(&mut self, nbytes: usize) -> Result<usize> {
        let size = round_up(nbytes, self.config.dma_alignment);
        let offset = self.cursor();
        let available = self.config.dram_bank_bytes - offset;
        if size > available {
            return Err(Error::OutOfBankMemory {
                requested: size,
                available,
            });
        }
        for (bank, cursor) in self.banks.iter_mut().zip(self.cursors.iter_mut()) {
            *cursor = offset + size;
            bank.resize(*cursor, 0);
        }
        Ok(offset)
    }

    /// Rolls the allocator back if `[offset, offset + nbytes)` is the most
    /// recent allocation. Returns whether space was reclaimed.
    pub fn release(&mut self, offset: usize, nbytes: usize) -> bool {
        let size = round_up(nbytes, self.config.dma_alignment);
        if offset + size != self.cursor() {
            return false;
        }
        for (bank, cursor) in self.banks.iter_mut().zip(self.cursors.iter_mut()) {
            *cursor = offset;
            bank.truncate(offset);
        }
        true
    }

    fn check_core(&self, core: usize) -> Result<()> {
        if core >= self.config.num_cores {
            return Err(Error::InvalidCore {
                core,
                num_cores: self.config.num_cores,
            });
        }
        Ok(())
    }

    fn check_host_transfer(&self, bank_offset: usize, nbytes: usize) -> Result<()> {
        let align = self.config.dma_alignment;
        check_aligned("transfer size", nbytes, align)?;
        check_aligned("bank offset", bank_offset, align)?;
        check_range("bank", bank_offset, nbytes, self.cursor())
    }

    fn log_host(&mut self, kind: TransferKind, core: usize, bank_offset: usize, size: usize) {
        if let Some(log) = self.log.as_mut() {
            log.push(TransferRecord {
                kind,
                core,
                dram_offset: bank_offset,
                scratch_offset: None,
                size,
            });
        }
    }

    /// Parallel host-to-PIM transfer: slice `i` lands in core `i`'s bank.
    /// Every slice must have the same aligned size.
    pub fn parallel_to_pim(&mut self, bank_offset: usize, slices: &[&[u8]]) -> Result<()> {
        if slices.len() != self.num_cores() {
            return Err(Error::SliceCountMismatch {
                got: slices.len(),
                expected: self.num_cores(),
            });
        }
        let nbytes = slices[0].len();
        if let Some(other) = slices.iter().find(|s| s.len() != nbytes) {
            return Err(Error::UnequalSliceSizes {
                first: nbytes,
                other: other.len(),
            });
        }
        self.check_host_transfer(bank_offset, nbytes)?;
        for (core, slice) in slices.iter().enumerate() {
            self.banks[core][bank_offset..bank_offset + nbytes].copy_from_slice(slice);
            self.log_host(TransferKind::HostToPim, core, bank_offset, nbytes);
        }
        self.stats.host_to_pim_bytes += (nbytes * self.num_cores()) as u64;
        self.stats.parallel_transfers += 1;
        Ok(())
    }

    /// Parallel PIM-to-host transfer of `nbytes` from every core.
    pub fn parallel_to_host(&mut self, bank_offset: usize, nbytes: usize) -> Result<Vec<Vec<u8>>> {
        self.check_host_transfer(bank_offset, nbytes)?;
        let out = self
            .banks
            .iter()
            .map(|bank| bank[bank_offset..bank_offset + nbytes].to_vec())
            .collect();
        for core in 0..self.num_cores() {
            self.log_host(TransferKind::PimToHost, core, bank_offset, nbytes);
        }
        self.stats.pim_to_host_bytes += (nbytes * self.num_cores()) as u64;
        self.stats.parallel_transfers += 1;
        Ok(out)
    }

    pub fn serial_to_pim(&mut self, core: usize, bank_offset: usize, data: &[u8]) -> Result<()> {
        self.check_core(core)?;
        self.check_host_transfer(bank_offset, data.len())?;
        self.banks[core][bank_offset..bank_offset + data.len()].copy_from_slice(data);
        self.log_host(TransferKind::HostToPim, core, bank_offset, data.len());
        self.stats.host_to_pim_bytes += data.len() as u64;
        self.stats.serial_transfers += 1;
        Ok(())
    }

    pub fn serial_to_host(
        &mut self,
        core: usize,
        bank_offset: usize,
        nbytes: usize,
    ) -> Result<Vec<u8>> {
        self.check_core(core)?;
        self.check_host_transfer(bank_offset, nbytes)?;
        let out = self.banks[core][bank_offset..bank_offset + nbytes].to_vec();
        self.log_host(TransferKind::PimToHost, core, bank_offset, nbytes);
        self.stats.pim_to_host_bytes += nbytes as u64;
        self.stats.serial_transfers += 1;
        Ok(out)
    }

    /// Host-issued DMA from bank to scratchpad on one core.
    pub fn dma_read(
        &mut self,
        core: usize,
        dram_offset: usize,
        scratch_offset: usize,
        nbytes: usize,
    ) -> Result<()> {
        self.with_core(core, |ctx| {
            ctx.dma_read(dram_offset, scratch_offset, nbytes)
        })
    }

    /// Host-issued DMA from scratchpad to bank on one core.
    pub fn dma_write(
        &mut self,
        core: usize,
        scratch_offset: usize,
        dram_offset: usize,
        nbytes: usize,
    ) -> Result<()> {
        self.with_core(core, |ctx| {
            ctx.dma_write(scratch_offset, dram_offset, nbytes)
        })
    }

    fn with_core<R>(
        &mut self,
        core: usize,
        f: impl FnOnce(&mut TaskletContext<'_>) -> Result<R>,
    ) -> Result<R> {
        self.check_core(core)?;
        let mut locks = LockTable::default();
        let mut ctx = TaskletContext {
            core_id: core,
            tasklet_id: 0,
            num_tasklets: 1,
            config: &self.config,
            bank: &mut self.banks[core],
            scratch: &mut self.scratchpads[core],
            locks: &mut locks,
            stats: &mut self.stats,
            log: self.log.as_mut(),
        };
        f(&mut ctx)
    }

    /// Read-only view of bank bytes, for inspection.
    pub fn bank(&self, core: usize) -> &[u8] {
        &self.banks[core]
    }

    pub fn scratchpad(&self, core: usize) -> &[u8] {
        &self.scratchpads[core]
    }

    /// Runs `kernel` on every core with `num_tasklets` tasklets per core.
    pub fn launch_kernel(&mut self, kernel: &dyn Kernel, num_tasklets: usize) -> Result<()> {
        if num_tasklets == 0 || num_tasklets > self.config.max_tasklets {
            return Err(Error::TaskletCountInvalid {
                requested: num_tasklets,
                max: self.config.max_tasklets,
            });
        }
        let required = kernel.scratchpad_footprint(num_tasklets);
        let available = self.config.usable_scratchpad();
        if required > available {
            return Err(Error::ScratchpadOverflow {
                required,
                available,
            });
        }

        let config = &self.config;
        let logging = self.log.is_some();
        let phases = kernel.num_phases();
        let per_core: Vec<(TrafficStats, Vec<TransferRecord>, Result<()>)> = self
            .banks
            .par_iter_mut()
            .zip(self.scratchpads.par_iter_mut())
            .enumerate()
            .map(|(core, (bank, scratch))| {
                let mut stats = TrafficStats::default();
                let mut log = Vec::new();
                let mut locks = LockTable::default();
                let scratch = &mut scratch[..required];
                let mut run = || -> Result<()> {
                    for phase in 0..phases {
                        for tasklet in 0..num_tasklets {
                            let mut ctx = TaskletContext {
                                core_id: core,
                                tasklet_id: tasklet,
                                num_tasklets,
                                config,
                                bank: bank.as_mut_slice(),
                                scratch: &mut *scratch,
                                locks: &mut locks,
                                stats: &mut stats,
                                log: logging.then_some(&mut log),
                            };
                            kernel.run(phase, &mut ctx)?;
                        }
                    }
                    Ok(())
                };
                let result = run();
                (stats, log, result)
            })
            .collect();

        self.stats.kernel_launches += 1;
        let mut first_err = None;
        for (stats, log, result) in per_core {
            self.stats += stats;
            if let Some(l) = self.log.as_mut() {
                l.extend(log);
            }
            if let Err(e) = result {
                first_err.get_or_insert(e);
            }
        }
        first_err.map_or(Ok(()), Err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn device(cores: usize) -> PimDevice {
        PimDevice::new(DeviceConfig {
            dram_bank_bytes: 1 << 20,
            ..DeviceConfig::with_cores(cores)
        })
        .unwrap()
    }

    struct Footprint(usize);

    impl Kernel for Footprint {
        fn scratchpad_footprint(&self, num_tasklets: usize) -> usize {
            num_tasklets * self.0
        }

        fn run(&self, _phase: usize, _ctx: &mut TaskletContext<'_>) -> Result<()> {
            Ok(())
        }
    }

    #[test]
    fn alloc_is_symmetric_and_aligned() {
        let mut dev = device(2);
        assert_eq!(dev.alloc(16).unwrap(), 0);
        let mut dev = device(2);
        assert_eq!(dev.alloc(12).unwrap(), 0);
        assert_eq!(dev.alloc(8).unwrap(), 16);
        assert_eq!(dev.cursors(), &[24, 24]);
    }

    #[test]
    fn alloc_past_capacity_fails() {
        let mut dev = device(2);
        let cap = dev.config().dram_bank_bytes;
        assert!(matches!(
            dev.alloc(cap + 1),
            Err(Error::OutOfBankMemory { .. })
        ));
        assert_eq!(dev.cursor(), 0);
    }

    #[test]
    fn release_only_rolls_back_latest() {
        let mut dev = device(1);
        let a = dev.alloc(12).unwrap();
        let b = dev.alloc(40).unwrap();
        assert!(!dev.release(a, 12));
        assert_eq!(dev.cursor(), 56);
        assert!(dev.release(b, 40));
        assert_eq!(dev.cursor(), 16);
    }

    #[test]
    fn dma_limits() {
        let mut dev = device(1);
        dev.alloc(4096).unwrap();
        dev.dma_read(0, 0, 0, 2048).unwrap();
        assert_eq!(dev.stats().dram_to_scratch_bytes, 2048);
        assert_eq!(dev.stats().dma_commands, 1);
        assert!(matches!(
            dev.dma_read(0, 0, 0, 12),
            Err(Error::AlignmentViolation { value: 12, .. })
        ));
        assert!(matches!(
            dev.dma_read(0, 0, 0, 2056),
            Err(Error::SizeLimitViolation {
                size: 2056,
                limit: 2048
            })
        ));
        assert!(matches!(
            dev.dma_read(0, 4, 0, 8),
            Err(Error::AlignmentViolation {
                what: "dram offset",
                ..
            })
        ));
        assert!(matches!(
            dev.dma_write(0, 0, 4096, 8),
            Err(Error::OutOfBounds { .. })
        ));
        assert!(matches!(
            dev.dma_read(0, 0, 0, 0),
            Err(Error::EmptyTransfer)
        ));
        // failed commands are not counted
        assert_eq!(dev.stats().dma_commands, 1);
    }

    #[test]
    fn dma_write_roundtrip() {
        let mut dev = device(1);
        dev.alloc(64).unwrap();
        dev.serial_to_pim(0, 0, &[7u8; 16]).unwrap();
        dev.dma_read(0, 0, 32, 16).unwrap();
        dev.dma_write(0, 32, 48, 16).unwrap();
        assert_eq!(&dev.bank(0)[48..64], &[7u8; 16]);
        assert_eq!(dev.stats().scratch_to_dram_bytes, 16);
    }

    #[test]
    fn parallel_transfers() {
        let mut dev = device(2);
        dev.alloc(32).unwrap();
        let a = [1u8; 16];
        let b = [2u8; 16];
        dev.parallel_to_pim(0, &[&a, &b]).unwrap();
        assert_eq!(&dev.bank(0)[..16], &a);
        assert_eq!(&dev.bank(1)[..16], &b);
        assert_eq!(dev.stats().host_to_pim_bytes, 32);
        assert_eq!(dev.stats().parallel_transfers, 1);

        let c = [0u8; 24];
        assert!(matches!(
            dev.parallel_to_pim(0, &[&a, &c]),
            Err(Error::UnequalSliceSizes {
                first: 16,
                other: 24
            })
        ));
        let odd = [0u8; 12];
        assert!(matches!(
            dev.parallel_to_pim(0, &[&odd, &odd]),
            Err(Error::AlignmentViolation { .. })
        ));
    }

    #[test]
    fn parallel_to_host_counts_every_core() {
        let mut dev = device(4);
        dev.alloc(2040).unwrap();
        let out = dev.parallel_to_host(0, 2040).unwrap();
        assert_eq!(out.len(), 4);
        assert_eq!(dev.stats().pim_to_host_bytes, 8160);
    }

    #[test]
    fn launch_checks_tasklets_and_footprint() {
        let mut dev = device(2);
        dev.launch_kernel(&Footprint(0), 12).unwrap();
        assert_eq!(dev.stats().kernel_launches, 1);
        assert!(dev.bank(0).is_empty());
        assert!(matches!(
            dev.launch_kernel(&Footprint(0), 13),
            Err(Error::TaskletCountInvalid {
                requested: 13,
                max: 12
            })
        ));
        assert!(matches!(
            dev.launch_kernel(&Footprint(2048 + 4096), 12),
            Err(Error::ScratchpadOverflow {
                required: 73728,
                available: 57344
            })
        ));
    }

    #[test]
    fn config_validation() {
        let bad = DeviceConfig {
            dma_max_bytes: 2044,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(DeviceConfig::with_cores(0).validate().is_err());
        let bad = DeviceConfig {
            max_tasklets: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn locks_detect_reentry() {
        let mut locks = LockTable::default();
        locks.acquire(3).unwrap();
        assert_eq!(locks.acquire(3), Err(Error::LockHeld { entry: 3 }));
        locks.release(3);
        locks.acquire(3).unwrap();
        assert_eq!(locks.acquisitions(), 2);
    }
}
