//! Handles and the map / reduce / zip iterators.
//!
//! Iterators stream each core's share of the input from its bank through
//! per-tasklet scratchpad buffers. Reductions accumulate in the scratchpad
//! (shared array with per-entry locks, or one array per tasklet merged
//! ring-style), then the host folds the per-core results. Zip is lazy: it
//! records the two inputs and the next iterator reads both directly.

mod handle;
mod kernels;
mod plan;

pub use handle::{AccFn, Handle, HandleFunctions, HandleId, HandleKind, InitFn, MapFn, MapToValFn};
pub use plan::{
    compute_batch_elems, plan_reduction, select_reduction_plan, ReductionPlan, ReductionPolicy,
    ReductionVariant,
};

use crate::comm::fold_partials;
use crate::device::round_up;
use crate::error::{Error, Result};
use crate::management::{ArrayMetadata, LayoutKind, PimContext};

use kernels::{ContextRef, MapKernel, ReduceCallbacks, ReduceKernel, Stream};
use plan::{batch_for_streams, plan_map};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IteratorOp {
    Map,
    Reduce,
    /// A zip that had to be materialized.
    Zip,
}

/// What an iterator call ran on the device.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IteratorReport {
    pub op: IteratorOp,
    pub num_tasklets: usize,
    pub batch_elems: usize,
    pub reduction: Option<ReductionPlan>,
}

impl PimContext {
    /// Registers a callback bundle. The context bytes are sent to the cores
    /// the first time an iterator uses the handle.
    pub fn create_handle(
        &mut self,
        functions: HandleFunctions,
        kind: HandleKind,
        context: &[u8],
    ) -> Result<HandleId> {
        let missing = |callback| Error::MissingCallback {
            kind: kind.name(),
            callback,
        };
        match kind {
            HandleKind::Map => {
                if functions.map.is_none() {
                    return Err(missing("map"));
                }
            }
            HandleKind::Reduce => {
                if functions.init.is_none() {
                    return Err(missing("init"));
                }
                if functions.map_to_val.is_none() {
                    return Err(missing("map_to_val"));
                }
                if functions.acc.is_none() {
                    return Err(missing("acc"));
                }
            }
            HandleKind::Zip => return Err(Error::InvalidHandleKind(kind.name())),
        }
        self.handles.push(Handle {
            kind,
            functions,
            context: context.to_vec(),
            resident_at: None,
            dirty: true,
        });
        Ok(HandleId(self.handles.len() - 1))
    }

    pub fn handle(&self, id: HandleId) -> Result<&Handle> {
        self.handles.get(id.0).ok_or(Error::UnknownHandle(id.0))
    }

    /// Replaces a handle's context bytes; the new bytes reach the cores at
    /// the next iterator call. The size is fixed at creation.
    pub fn set_handle_context(&mut self, id: HandleId, context: &[u8]) -> Result<()> {
        let h = self
            .handles
            .get_mut(id.0)
            .ok_or(Error::UnknownHandle(id.0))?;
        if h.context.len() != context.len() {
            return Err(Error::ContextSizeMismatch {
                expected: h.context.len(),
                got: context.len(),
            });
        }
        h.context.copy_from_slice(context);
        h.dirty = true;
        Ok(())
    }

    pub fn reduction_policy(&self) -> ReductionPolicy {
        self.reduction_policy
    }

    pub fn set_reduction_policy(&mut self, policy: ReductionPolicy) {
        self.reduction_policy = policy;
    }

    /// One entry per iterator call that launched a kernel, oldest first.
    pub fn reports(&self) -> &[IteratorReport] {
        &self.reports
    }

    fn handle_of_kind(&self, id: HandleId, kind: HandleKind) -> Result<&Handle> {
        let h = self.handle(id)?;
        if h.kind != kind {
            return Err(Error::HandleKindMismatch {
                expected: kind.name(),
                found: h.kind.name(),
            });
        }
        Ok(h)
    }

    /// Makes sure the handle's current context is in every bank.
    fn ensure_context(&mut self, id: HandleId) -> Result<Option<ContextRef>> {
        let h = self.handle(id)?;
        if h.context.is_empty() {
            return Ok(None);
        }
        let (data, resident, dirty) = (h.context.clone(), h.resident_at, h.dirty);
        let offset = match resident {
            None => self.replicate(&data)?,
            Some(offset) => {
                if dirty {
                    self.write_replicated(offset, &data)?;
                }
                offset
            }
        };
        let h = &mut self.handles[id.0];
        h.resident_at = Some(offset);
        h.dirty = false;
        Ok(Some(ContextRef {
            offset,
            len: data.len(),
        }))
    }

    /// Metadata plus the physical streams behind `id`. A lazy zip resolves to
    /// the streams of its two inputs.
    fn resolve_source(&self, id: &str) -> Result<(ArrayMetadata, Vec<Stream>)> {
        let meta = self.lookup(id)?;
        let stream_of = |m: &ArrayMetadata| Stream {
            offset: m.bank_offset,
            type_size: m.type_size,
        };
        let streams = match &meta.layout {
            LayoutKind::Scattered => vec![stream_of(&meta)],
            LayoutKind::LazyZip { first, second } => {
                let a = self.lookup(first)?;
                let b = self.lookup(second)?;
                vec![stream_of(&a), stream_of(&b)]
            }
            LayoutKind::Replicated => {
                return Err(Error::WrongLayout {
                    id: meta.id.clone(),
                    found: meta.layout.name(),
                    expected: "scattered or lazy_zip",
                })
            }
        };
        Ok((meta, streams))
    }

    fn padded_chunk(&self, per_core_elems: &[usize], type_size: usize) -> usize {
        let max = per_core_elems.iter().copied().max().unwrap_or(0);
        round_up(max * type_size, self.config().dma_alignment)
    }

    /// Applies the handle's map callback to every element of `src`, writing
    /// a scattered array `dest` with the same distribution.
    pub fn array_map(
        &mut self,
        src: &str,
        dest: &str,
        output_type_size: usize,
        handle: HandleId,
    ) -> Result<()> {
        let (meta, inputs) = self.resolve_source(src)?;
        let map = self
            .handle_of_kind(handle, HandleKind::Map)?
            .functions
            .map
            .clone();
        let map = map.expect("map handles always carry a map callback");
        self.ensure_unused(dest)?;
        if output_type_size == 0 {
            return Err(Error::ZeroTypeSize);
        }
        let context = self.ensure_context(handle)?;
        let in_sizes: Vec<usize> = inputs.iter().map(|s| s.type_size).collect();
        let align = self.config().dma_alignment;
        let ctx_bytes = context.map_or(0, |c| round_up(c.len, align));
        let (tasklets, batch) = plan_map(&in_sizes, output_type_size, ctx_bytes, self.config())?;
        self.run_map(
            &meta,
            inputs,
            dest,
            output_type_size,
            context,
            tasklets,
            batch,
            &*map,
            IteratorOp::Map,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn run_map(
        &mut self,
        meta: &ArrayMetadata,
        inputs: Vec<Stream>,
        dest: &str,
        output_type_size: usize,
        context: Option<ContextRef>,
        tasklets: usize,
        batch: usize,
        op: kernels::ElemOp<'_>,
        kind: IteratorOp,
    ) -> Result<()> {
        let chunk = self.padded_chunk(&meta.per_core_elems, output_type_size);
        let offset = self.device.alloc(chunk)?;
        let kernel = MapKernel {
            inputs,
            output: Stream {
                offset,
                type_size: output_type_size,
            },
            per_core_elems: &meta.per_core_elems,
            batch,
            context,
            alignment: self.config().dma_alignment,
            op,
        };
        if let Err(e) = self.device.launch_kernel(&kernel, tasklets) {
            self.device.release(offset, chunk);
            return Err(e);
        }
        self.reports.push(IteratorReport {
            op: kind,
            num_tasklets: tasklets,
            batch_elems: batch,
            reduction: None,
        });
        self.registry.register(ArrayMetadata {
            id: dest.to_owned(),
            len: meta.len,
            type_size: output_type_size,
            bank_offset: offset,
            per_core_elems: meta.per_core_elems.clone(),
            padded_chunk_bytes: chunk,
            layout: LayoutKind::Scattered,
        })
    }

    /// General reduction of `src` into `output_len` entries of
    /// `output_type_size` bytes. Each core reduces its share in the
    /// scratchpad; the host folds the per-core results and stores the final
    /// array on core 0 under `dest`.
    pub fn array_red(
        &mut self,
        src: &str,
        dest: &str,
        output_type_size: usize,
        output_len: usize,
        handle: HandleId,
    ) -> Result<()> {
        let (meta, inputs) = self.resolve_source(src)?;
        let funcs = self
            .handle_of_kind(handle, HandleKind::Reduce)?
            .functions
            .clone();
        let (Some(init), Some(map_to_val), Some(acc)) = (funcs.init, funcs.map_to_val, funcs.acc)
        else {
            unreachable!("reduce handles always carry all three callbacks");
        };
        self.ensure_unused(dest)?;
        if output_len == 0 {
            return Err(Error::EmptyOutput);
        }
        if output_type_size == 0 {
            return Err(Error::ZeroTypeSize);
        }

        let cfg = self.config().clone();
        let in_sizes: Vec<usize> = inputs.iter().map(|s| s.type_size).collect();
        let batch = batch_for_streams(&in_sizes, cfg.dma_max_bytes, cfg.dma_alignment)?;
        let buffer_bytes = batch * in_sizes.iter().sum::<usize>();
        let context = self.ensure_context(handle)?;
        let ctx_bytes = context.map_or(0, |c| round_up(c.len, cfg.dma_alignment));
        let plan = plan_reduction(
            output_len,
            output_type_size,
            buffer_bytes,
            ctx_bytes,
            &cfg,
            self.reduction_policy,
        )?;

        let acc_bytes = plan.accumulator_bytes(cfg.dma_alignment);
        let offset = self.device.alloc(acc_bytes)?;
        let kernel = ReduceKernel {
            inputs,
            per_core_elems: &meta.per_core_elems,
            batch,
            context,
            alignment: cfg.dma_alignment,
            plan,
            dest_offset: offset,
            callbacks: ReduceCallbacks {
                init: &*init,
                map_to_val: &*map_to_val,
                acc: &*acc,
            },
        };
        let result = self
            .device
            .launch_kernel(&kernel, plan.num_tasklets)
            .and_then(|_| self.device.parallel_to_host(offset, acc_bytes));
        let partials = match result {
            Ok(p) => p,
            Err(e) => {
                self.device.release(offset, acc_bytes);
                return Err(e);
            }
        };
        let mut combined = fold_partials(&partials, output_len, output_type_size, &acc);
        combined.resize(acc_bytes, 0);
        self.device.serial_to_pim(0, offset, &combined)?;

        self.reports.push(IteratorReport {
            op: IteratorOp::Reduce,
            num_tasklets: plan.num_tasklets,
            batch_elems: batch,
            reduction: Some(plan),
        });
        let mut per_core_elems = vec![0; cfg.num_cores];
        per_core_elems[0] = output_len;
        self.registry.register(ArrayMetadata {
            id: dest.to_owned(),
            len: output_len,
            type_size: output_type_size,
            bank_offset: offset,
            per_core_elems,
            padded_chunk_bytes: acc_bytes,
            layout: LayoutKind::Scattered,
        })
    }

    fn check_zip_inputs(
        &self,
        src1: &str,
        src2: &str,
        dest: &str,
    ) -> Result<(ArrayMetadata, ArrayMetadata)> {
        let a = self.lookup(src1)?;
        let b = self.lookup(src2)?;
        for m in [&a, &b] {
            if m.layout == LayoutKind::Replicated {
                return Err(Error::WrongLayout {
                    id: m.id.clone(),
                    found: m.layout.name(),
                    expected: "scattered or lazy_zip",
                });
            }
        }
        if a.len != b.len {
            return Err(Error::LengthMismatch {
                first: a.len,
                second: b.len,
            });
        }
        if a.per_core_elems != b.per_core_elems {
            return Err(Error::DistributionMismatch {
                first: a.id,
                second: b.id,
            });
        }
        self.ensure_unused(dest)?;
        Ok((a, b))
    }

    /// Pairs `src1[i]` with `src2[i]`. Two plain arrays are zipped lazily
    /// without touching the device; if either input is already a lazy zip
    /// the result is materialized.
    pub fn array_zip(&mut self, src1: &str, src2: &str, dest: &str) -> Result<()> {
        let (a, b) = self.check_zip_inputs(src1, src2, dest)?;
        if a.is_lazy() || b.is_lazy() {
            return self.materialize_zip(&a, &b, dest);
        }
        let type_size = a.type_size + b.type_size;
        self.registry.register(ArrayMetadata {
            id: dest.to_owned(),
            len: a.len,
            type_size,
            bank_offset: a.bank_offset,
            padded_chunk_bytes: self.padded_chunk(&a.per_core_elems, type_size),
            per_core_elems: a.per_core_elems,
            layout: LayoutKind::LazyZip {
                first: src1.to_owned(),
                second: src2.to_owned(),
            },
        })
    }

    /// Zip that always writes the interleaved array to the banks.
    pub fn array_zip_eager(&mut self, src1: &str, src2: &str, dest: &str) -> Result<()> {
        let (a, b) = self.check_zip_inputs(src1, src2, dest)?;
        self.materialize_zip(&a, &b, dest)
    }

    fn materialize_zip(&mut self, a: &ArrayMetadata, b: &ArrayMetadata, dest: &str) -> Result<()> {
        let (_, mut inputs) = self.resolve_source(&a.id)?;
        inputs.extend(self.resolve_source(&b.id)?.1);
        let in_sizes: Vec<usize> = inputs.iter().map(|s| s.type_size).collect();
        let out_size: usize = in_sizes.iter().sum();
        let (tasklets, batch) = plan_map(&in_sizes, out_size, 0, self.config())?;
        let copy = |input: &[u8], output: &mut [u8], _: &[u8]| output.copy_from_slice(input);
        self.run_map(
            a,
            inputs,
            dest,
            out_size,
            None,
            tasklets,
            batch,
            &copy,
            IteratorOp::Zip,
        )
    }
}

#[cfg(test)]
mod tests;
