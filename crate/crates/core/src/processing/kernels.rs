//! Tasklet programs behind the iterators.
//!
//! Scratchpad layout on every core is `[context | accumulators | buffers]`:
//! the handle context (if any) first, then reduction accumulators, then one
//! block of streaming buffers per tasklet. Buffers hold one batch of every
//! input stream followed by the output batch.
//!
//! Work is split by batch: batch `j` of a core's elements belongs to tasklet
//! `j % num_tasklets`. Only the last batch may be short; it is transferred
//! rounded up to the alignment, which stays inside the array's padded
//! region.

use crate::device::{round_up, Kernel, TaskletContext};
use crate::error::{Error, Result};

use super::plan::{ReductionPlan, ReductionVariant};

/// One scattered array read or written by a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Stream {
    pub offset: usize,
    pub type_size: usize,
}

/// Handle context resident in the banks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ContextRef {
    pub offset: usize,
    pub len: usize,
}

pub(crate) type ElemOp<'a> = &'a (dyn Fn(&[u8], &mut [u8], &[u8]) + Send + Sync);
pub(crate) type MapToValDyn = dyn Fn(&[u8], &mut [u8], &[u8]) -> usize + Send + Sync;

fn context_bytes(context: Option<ContextRef>, alignment: usize) -> usize {
    context.map_or(0, |c| round_up(c.len, alignment))
}

/// Splits `nbytes` into DMA-sized commands.
fn dma_chunks(nbytes: usize, dma_max: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..nbytes)
        .step_by(dma_max.max(1))
        .map(move |at| (at, dma_max.min(nbytes - at)))
}

fn load_context(ctx: &mut TaskletContext<'_>, context: Option<ContextRef>) -> Result<()> {
    let Some(c) = context else { return Ok(()) };
    let cfg = ctx.config();
    let bytes = round_up(c.len, cfg.dma_alignment);
    let dma_max = cfg.dma_max_bytes;
    for (at, n) in dma_chunks(bytes, dma_max) {
        ctx.dma_read(c.offset + at, at, n)?;
    }
    Ok(())
}

/// Reads batch `[start, start + count)` of every input stream into the
/// buffers at `buffers`.
fn read_batch(
    ctx: &mut TaskletContext<'_>,
    inputs: &[Stream],
    buffers: &[usize],
    start: usize,
    count: usize,
) -> Result<()> {
    let align = ctx.config().dma_alignment;
    for (s, &buf) in inputs.iter().zip(buffers) {
        let bytes = round_up(count * s.type_size, align);
        ctx.dma_read(s.offset + start * s.type_size, buf, bytes)?;
    }
    Ok(())
}

/// Element `i` of a batch. With more than one stream the parts are
/// concatenated into `temp`.
fn element<'s>(
    scratch: &'s [u8],
    inputs: &[Stream],
    buffers: &[usize],
    i: usize,
    temp: &'s mut Vec<u8>,
) -> &'s [u8] {
    if let [s] = inputs {
        let at = buffers[0] + i * s.type_size;
        return &scratch[at..at + s.type_size];
    }
    temp.clear();
    for (s, &buf) in inputs.iter().zip(buffers) {
        let at = buf + i * s.type_size;
        temp.extend_from_slice(&scratch[at..at + s.type_size]);
    }
    temp
}

fn buffer_offsets(base: usize, inputs: &[Stream], batch: usize) -> (Vec<usize>, usize) {
    let mut at = base;
    let offs = inputs
        .iter()
        .map(|s| {
            let o = at;
            at += batch * s.type_size;
            o
        })
        .collect();
    (offs, at)
}

/// Elementwise map from one or more input streams to one output stream.
pub(crate) struct MapKernel<'a> {
    pub inputs: Vec<Stream>,
    pub output: Stream,
    pub per_core_elems: &'a [usize],
    pub batch: usize,
    pub context: Option<ContextRef>,
    pub alignment: usize,
    pub op: ElemOp<'a>,
}

impl MapKernel<'_> {
    fn tasklet_bytes(&self) -> usize {
        let per_elem: usize =
            self.inputs.iter().map(|s| s.type_size).sum::<usize>() + self.output.type_size;
        self.batch * per_elem
    }

    fn stream(&self, ctx: &mut TaskletContext<'_>) -> Result<()> {
        let elems = self.per_core_elems[ctx.core_id];
        let ctx_bytes = context_bytes(self.context, self.alignment);
        let ctx_len = self.context.map_or(0, |c| c.len);
        let base = ctx_bytes + ctx.tasklet_id * self.tasklet_bytes();
        let (buffers, out_buf) = buffer_offsets(base, &self.inputs, self.batch);
        let ots = self.output.type_size;
        let mut temp = Vec::new();

        for j in (ctx.tasklet_id..elems.div_ceil(self.batch)).step_by(ctx.num_tasklets) {
            let start = j * self.batch;
            let count = self.batch.min(elems - start);
            read_batch(ctx, &self.inputs, &buffers, start, count)?;

            let used = count * ots;
            let padded = round_up(used, self.alignment);
            {
                let (head, tail) = ctx.scratch().split_at_mut(out_buf);
                let out = &mut tail[..self.batch * ots];
                for i in 0..count {
                    let input = element(head, &self.inputs, &buffers, i, &mut temp);
                    (self.op)(input, &mut out[i * ots..(i + 1) * ots], &head[..ctx_len]);
                }
                out[used..padded].fill(0);
            }
            ctx.dma_write(out_buf, self.output.offset + start * ots, padded)?;
        }
        Ok(())
    }
}

impl Kernel for MapKernel<'_> {
    fn scratchpad_footprint(&self, num_tasklets: usize) -> usize {
        context_bytes(self.context, self.alignment) + num_tasklets * self.tasklet_bytes()
    }

    fn num_phases(&self) -> usize {
        2
    }

    fn run(&self, phase: usize, ctx: &mut TaskletContext<'_>) -> Result<()> {
        match phase {
            0 if ctx.tasklet_id == 0 => load_context(ctx, self.context),
            1 => self.stream(ctx),
            _ => Ok(()),
        }
    }
}

pub(crate) struct ReduceCallbacks<'a> {
    pub init: &'a (dyn Fn(&mut [u8]) + Send + Sync),
    pub map_to_val: &'a MapToValDyn,
    pub acc: &'a (dyn Fn(&mut [u8], &[u8]) + Send + Sync),
}

/// General reduction into an indexed accumulator array kept in the
/// scratchpad. Phases:
///
/// 0. load context, initialize accumulator(s)
/// 1. stream the input and accumulate
/// 2. ring merge steps (thread-private only, `t - 1` of them)
/// 3. collect merged segments into accumulator 0 (thread-private only)
/// 4. write the core's result to `dest_offset`
pub(crate) struct ReduceKernel<'a> {
    pub inputs: Vec<Stream>,
    pub per_core_elems: &'a [usize],
    pub batch: usize,
    pub context: Option<ContextRef>,
    pub alignment: usize,
    pub plan: ReductionPlan,
    pub dest_offset: usize,
    pub callbacks: ReduceCallbacks<'a>,
}

impl ReduceKernel<'_> {
    fn entry_bytes(&self) -> usize {
        self.plan.output_elem_bytes
    }

    fn acc_bytes(&self) -> usize {
        self.plan.accumulator_bytes(self.alignment)
    }

    fn private(&self) -> bool {
        self.plan.variant == ReductionVariant::ThreadPrivate
    }

    fn num_accumulators(&self, num_tasklets: usize) -> usize {
        if self.private() {
            num_tasklets
        } else {
            1
        }
    }

    fn ring_steps(&self, num_tasklets: usize) -> usize {
        if self.private() {
            num_tasklets - 1
        } else {
            0
        }
    }

    /// Range of entries owned by `tasklet` during the merge.
    fn segment(&self, tasklet: usize, num_tasklets: usize) -> std::ops::Range<usize> {
        let n = self.plan.output_len;
        tasklet * n / num_tasklets..(tasklet + 1) * n / num_tasklets
    }

    fn accumulators<'s>(&self, scratch: &'s mut [u8], num_tasklets: usize) -> &'s mut [u8] {
        let start = context_bytes(self.context, self.alignment);
        &mut scratch[start..start + self.num_accumulators(num_tasklets) * self.acc_bytes()]
    }

    fn init(&self, ctx: &mut TaskletContext<'_>) -> Result<()> {
        if ctx.tasklet_id == 0 {
            load_context(ctx, self.context)?;
        }
        let owner = if self.private() { ctx.tasklet_id } else { 0 };
        if !self.private() && ctx.tasklet_id != 0 {
            return Ok(());
        }
        let (d, n, acc_bytes) = (self.entry_bytes(), self.plan.output_len, self.acc_bytes());
        let t = ctx.num_tasklets;
        let accs = self.accumulators(ctx.scratch(), t);
        let mine = &mut accs[owner * acc_bytes..(owner + 1) * acc_bytes];
        for entry in mine[..n * d].chunks_exact_mut(d) {
            (self.callbacks.init)(entry);
        }
        mine[n * d..].fill(0);
        Ok(())
    }

    fn stream(&self, ctx: &mut TaskletContext<'_>) -> Result<()> {
        let elems = self.per_core_elems[ctx.core_id];
        let t = ctx.num_tasklets;
        let (d, n, acc_bytes) = (self.entry_bytes(), self.plan.output_len, self.acc_bytes());
        let ctx_bytes = context_bytes(self.context, self.alignment);
        let ctx_len = self.context.map_or(0, |c| c.len);
        let accs_start = ctx_bytes;
        let accs_end = accs_start + self.num_accumulators(t) * acc_bytes;
        let base = accs_end + ctx.tasklet_id * self.plan.input_buffer_bytes;
        let (buffers, _) = buffer_offsets(base, &self.inputs, self.batch);
        // the same buffers relative to the end of the accumulators
        let shifted: Vec<usize> = buffers.iter().map(|b| b - accs_end).collect();
        let owner = if self.private() { ctx.tasklet_id } else { 0 };
        let mut temp = Vec::new();
        let mut value = vec![0u8; d];

        for j in (ctx.tasklet_id..elems.div_ceil(self.batch)).step_by(t) {
            let start = j * self.batch;
            let count = self.batch.min(elems - start);
            read_batch(ctx, &self.inputs, &buffers, start, count)?;

            let (scratch, locks) = ctx.scratch_and_locks();
            let (head, rest) = scratch.split_at_mut(accs_end);
            let (context, accs) = head.split_at_mut(accs_start);
            let mine = &mut accs[owner * acc_bytes..(owner + 1) * acc_bytes];
            for i in 0..count {
                let input = element(rest, &self.inputs, &shifted, i, &mut temp);
                let key = (self.callbacks.map_to_val)(input, &mut value, &context[..ctx_len]);
                if key >= n {
                    return Err(Error::KeyOutOfRange { key, len: n });
                }
                let entry = &mut mine[key * d..(key + 1) * d];
                if self.private() {
                    (self.callbacks.acc)(entry, &value);
                } else {
                    locks.acquire(key)?;
                    (self.callbacks.acc)(entry, &value);
                    locks.release(key);
                }
            }
        }
        Ok(())
    }

    /// Ring step `step` (1-based): tasklet `i` folds segment `i` of
    /// accumulator `(i + step) % t` into its own accumulator.
    fn ring_step(&self, ctx: &mut TaskletContext<'_>, step: usize) -> Result<()> {
        let t = ctx.num_tasklets;
        let i = ctx.tasklet_id;
        let src = (i + step) % t;
        let seg = self.segment(i, t);
        let (d, acc_bytes) = (self.entry_bytes(), self.acc_bytes());
        let accs = self.accumulators(ctx.scratch(), t);
        let (mine, other) = if i < src {
            let (lo, hi) = accs.split_at_mut(src * acc_bytes);
            (
                &mut lo[i * acc_bytes..(i + 1) * acc_bytes],
                &hi[..acc_bytes],
            )
        } else {
            let (lo, hi) = accs.split_at_mut(i * acc_bytes);
            (
                &mut hi[..acc_bytes],
                &lo[src * acc_bytes..(src + 1) * acc_bytes],
            )
        };
        for e in seg {
            (self.callbacks.acc)(&mut mine[e * d..(e + 1) * d], &other[e * d..(e + 1) * d]);
        }
        Ok(())
    }

    fn collect_segment(&self, ctx: &mut TaskletContext<'_>) -> Result<()> {
        let t = ctx.num_tasklets;
        let i = ctx.tasklet_id;
        if i == 0 || !self.private() {
            return Ok(());
        }
        let seg = self.segment(i, t);
        let (d, acc_bytes) = (self.entry_bytes(), self.acc_bytes());
        let accs = self.accumulators(ctx.scratch(), t);
        let (first, rest) = accs.split_at_mut(acc_bytes);
        let mine = &rest[(i - 1) * acc_bytes..i * acc_bytes];
        first[seg.start * d..seg.end * d].copy_from_slice(&mine[seg.start * d..seg.end * d]);
        Ok(())
    }

    fn write_back(&self, ctx: &mut TaskletContext<'_>) -> Result<()> {
        if ctx.tasklet_id != 0 {
            return Ok(());
        }
        let start = context_bytes(self.context, self.alignment);
        let dma_max = ctx.config().dma_max_bytes;
        for (at, n) in dma_chunks(self.acc_bytes(), dma_max) {
            ctx.dma_write(start + at, self.dest_offset + at, n)?;
        }
        Ok(())
    }
}

impl Kernel for ReduceKernel<'_> {
    fn scratchpad_footprint(&self, num_tasklets: usize) -> usize {
        context_bytes(self.context, self.alignment)
            + self.num_accumulators(num_tasklets) * self.acc_bytes()
            + num_tasklets * self.plan.input_buffer_bytes
    }

    fn num_phases(&self) -> usize {
        4 + self.ring_steps(self.plan.num_tasklets)
    }

    fn run(&self, phase: usize, ctx: &mut TaskletContext<'_>) -> Result<()> {
        let steps = self.ring_steps(ctx.num_tasklets);
        match phase {
            0 => self.init(ctx),
            1 => self.stream(ctx),
            p if p < 2 + steps => self.ring_step(ctx, p - 1),
            p if p == 2 + steps => self.collect_segment(ctx),
            _ => self.write_back(ctx),
        }
    }
}
