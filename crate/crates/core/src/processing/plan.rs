//! Batch sizing and scratchpad budgeting for the iterators.

use std::fmt;
use std::str::FromStr;

use num_integer::lcm;

use crate::device::{round_up, tasklet_candidates, DeviceConfig};
use crate::error::{Error, Result};

/// Largest element count whose byte size is a multiple of `dma_alignment`
/// and fits in one DMA command.
pub fn compute_batch_elems(
    type_size: usize,
    dma_max_bytes: usize,
    dma_alignment: usize,
) -> Result<usize> {
    batch_for_streams(&[type_size], dma_max_bytes, dma_alignment)
}

/// Largest element count that is a legal single-command batch for every
/// stream at once. With one stream this is [`compute_batch_elems`].
pub(crate) fn batch_for_streams(
    type_sizes: &[usize],
    dma_max_bytes: usize,
    dma_alignment: usize,
) -> Result<usize> {
    let mut group = 1;
    let mut cap = usize::MAX;
    for &ts in type_sizes {
        if ts == 0 {
            return Err(Error::ZeroTypeSize);
        }
        group = lcm(group, lcm(ts, dma_alignment) / ts);
        cap = cap.min(dma_max_bytes / ts);
    }
    let batch = cap / group * group;
    if batch == 0 {
        let widest = type_sizes.iter().copied().max().unwrap_or(0);
        return Err(Error::ElementTooLarge {
            type_size: widest,
            dma_max: dma_max_bytes,
        });
    }
    Ok(batch)
}

/// Element count every batch must be a multiple of so all streams stay
/// aligned.
pub(crate) fn stream_group(type_sizes: &[usize], dma_alignment: usize) -> usize {
    type_sizes
        .iter()
        .fold(1, |g, &ts| lcm(g, lcm(ts, dma_alignment) / ts))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReductionVariant {
    /// One accumulator array per core, one lock per entry.
    SharedAccumulator,
    /// One accumulator array per tasklet, merged ring-style at the end.
    ThreadPrivate,
}

impl ReductionVariant {
    pub fn name(self) -> &'static str {
        match self {
            ReductionVariant::SharedAccumulator => "shared",
            ReductionVariant::ThreadPrivate => "private",
        }
    }
}

impl fmt::Display for ReductionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How [`array_red`](crate::PimContext::array_red) picks its variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ReductionPolicy {
    /// Thread-private with as many tasklets as fit.
    #[default]
    Auto,
    Shared,
    Private,
}

impl FromStr for ReductionPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(ReductionPolicy::Auto),
            "shared" => Ok(ReductionPolicy::Shared),
            "private" => Ok(ReductionPolicy::Private),
            other => Err(format!("unknown reduction variant {other:?}")),
        }
    }
}

impl fmt::Display for ReductionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReductionPolicy::Auto => "auto",
            ReductionPolicy::Shared => "shared",
            ReductionPolicy::Private => "private",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReductionPlan {
    pub variant: ReductionVariant,
    pub num_tasklets: usize,
    pub output_len: usize,
    pub output_elem_bytes: usize,
    pub input_buffer_bytes: usize,
    /// Accumulator and buffer bytes claimed in the scratchpad.
    pub occupancy: usize,
}

impl ReductionPlan {
    /// Accumulator array size rounded to the DMA alignment.
    pub fn accumulator_bytes(&self, dma_alignment: usize) -> usize {
        round_up(self.output_len * self.output_elem_bytes, dma_alignment)
    }
}

fn occupancy(variant: ReductionVariant, tasklets: usize, acc_bytes: usize, buffer: usize) -> usize {
    match variant {
        ReductionVariant::ThreadPrivate => tasklets * (acc_bytes + buffer),
        ReductionVariant::SharedAccumulator => acc_bytes + tasklets * buffer,
    }
}

/// Picks the reduction variant and tasklet count for an output of `n`
/// entries of `d` bytes, assuming full-size input buffers and no context.
pub fn select_reduction_plan(n: usize, d: usize, config: &DeviceConfig) -> Result<ReductionPlan> {
    plan_reduction(n, d, config.dma_max_bytes, 0, config, ReductionPolicy::Auto)
}

/// Like [`select_reduction_plan`] with an explicit per-tasklet input buffer,
/// scratchpad bytes already claimed (`fixed_bytes`), and policy.
pub fn plan_reduction(
    n: usize,
    d: usize,
    input_buffer_bytes: usize,
    fixed_bytes: usize,
    config: &DeviceConfig,
    policy: ReductionPolicy,
) -> Result<ReductionPlan> {
    if n == 0 {
        return Err(Error::EmptyOutput);
    }
    if d == 0 {
        return Err(Error::ZeroTypeSize);
    }
    let acc_bytes = round_up(n * d, config.dma_alignment);
    let budget = config.usable_scratchpad().saturating_sub(fixed_bytes);
    let best = |variant| {
        tasklet_candidates(config)
            .into_iter()
            .find(|&t| occupancy(variant, t, acc_bytes, input_buffer_bytes) <= budget)
            .map(|t| ReductionPlan {
                variant,
                num_tasklets: t,
                output_len: n,
                output_elem_bytes: d,
                input_buffer_bytes,
                occupancy: occupancy(variant, t, acc_bytes, input_buffer_bytes),
            })
    };
    let plan = match policy {
        ReductionPolicy::Auto => best(ReductionVariant::ThreadPrivate)
            .or_else(|| best(ReductionVariant::SharedAccumulator)),
        ReductionPolicy::Private => best(ReductionVariant::ThreadPrivate),
        ReductionPolicy::Shared => best(ReductionVariant::SharedAccumulator),
    };
    plan.ok_or(Error::NoFeasiblePlan {
        required: fixed_bytes + acc_bytes + input_buffer_bytes,
    })
}

/// Tasklet count and batch size for a streaming map over `inputs` producing
/// `output` sized elements, with `fixed_bytes` of scratchpad already claimed.
///
/// Keeps the largest tasklet count and shrinks the batch below the DMA
/// limit if the per-tasklet buffers would not fit; sheds tasklets only when
/// even the smallest aligned batch does not fit.
pub(crate) fn plan_map(
    inputs: &[usize],
    output: usize,
    fixed_bytes: usize,
    config: &DeviceConfig,
) -> Result<(usize, usize)> {
    let mut all = inputs.to_vec();
    all.push(output);
    let dma_batch = batch_for_streams(&all, config.dma_max_bytes, config.dma_alignment)?;
    let group = stream_group(&all, config.dma_alignment);
    let elem_bytes: usize = all.iter().sum();
    let budget = config.usable_scratchpad().saturating_sub(fixed_bytes);
    for t in tasklet_candidates(config) {
        let fit = budget / t / elem_bytes / group * group;
        let batch = dma_batch.min(fit);
        if batch > 0 {
            return Ok((t, batch));
        }
    }
    Err(Error::ScratchpadOverflow {
        required: fixed_bytes + group * elem_bytes,
        available: config.usable_scratchpad(),
    })
}
