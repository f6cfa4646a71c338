//! Host-PIM and PIM-PIM communication.
//!
//! Cores cannot talk to each other directly, so every collective is built
//! from host transfers: data goes up to the host, is combined there if
//! needed, and comes back down with a parallel transfer. Parallel transfers
//! need the same aligned size on every core, which is what [`plan_scatter`]
//! works out.

use bytemuck::Pod;
use num_integer::lcm;
use rayon::prelude::*;

use crate::device::round_up;
use crate::error::{Error, Result};
use crate::management::{ArrayMetadata, LayoutKind, PimContext};
use crate::processing::{AccFn, HandleId, HandleKind};

/// How a scattered array is split across cores.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferPlan {
    pub num_cores: usize,
    pub len: usize,
    pub type_size: usize,
    pub per_core_elems: Vec<usize>,
    pub padded_chunk_bytes: usize,
    pub pad_fill: u8,
}

impl TransferPlan {
    /// Global index of the first element held by `core`.
    pub fn first_elem(&self, core: usize) -> usize {
        self.per_core_elems[..core].iter().sum()
    }
}

/// Splits `len` elements over `num_cores` cores.
///
/// Every core but the last non-empty one receives the same element count,
/// chosen so that its byte size is a multiple of the alignment; the last
/// non-empty core takes the remainder and later cores get nothing. The
/// parallel transfer size is the aligned byte size of the largest share.
pub fn plan_scatter(
    len: usize,
    type_size: usize,
    num_cores: usize,
    dma_alignment: usize,
) -> TransferPlan {
    assert!(type_size >= 1 && num_cores >= 1 && dma_alignment >= 1);
    let group = lcm(type_size, dma_alignment) / type_size;
    let base = round_up(len.div_ceil(num_cores), group);
    let mut remaining = len;
    let per_core_elems = (0..num_cores)
        .map(|_| {
            let n = remaining.min(base);
            remaining -= n;
            n
        })
        .collect();
    TransferPlan {
        num_cores,
        len,
        type_size,
        per_core_elems,
        padded_chunk_bytes: round_up(base * type_size, dma_alignment),
        pad_fill: 0,
    }
}

/// Folds equally sized per-core buffers entry by entry, in core order.
/// Entries are folded in parallel; each entry sees the same sequence of
/// `acc` calls as a sequential loop would.
pub(crate) fn fold_partials(
    partials: &[Vec<u8>],
    entries: usize,
    entry_size: usize,
    acc: &AccFn,
) -> Vec<u8> {
    let bytes = entries * entry_size;
    let mut out = partials[0][..bytes].to_vec();
    if entry_size == 0 {
        return out;
    }
    out.par_chunks_mut(entry_size)
        .enumerate()
        .for_each(|(e, dest)| {
            for p in &partials[1..] {
                acc(dest, &p[e * entry_size..(e + 1) * entry_size]);
            }
        });
    out
}

fn check_host_buffer(data: &[u8], len: usize, type_size: usize) -> Result<()> {
    if type_size == 0 {
        return Err(Error::ZeroTypeSize);
    }
    if data.len() != len * type_size {
        return Err(Error::HostBufferSize {
            got: data.len(),
            len,
            type_size,
        });
    }
    Ok(())
}

fn expect_layout(meta: &ArrayMetadata, expected: LayoutKind) -> Result<()> {
    if std::mem::discriminant(&meta.layout) != std::mem::discriminant(&expected) {
        return Err(Error::WrongLayout {
            id: meta.id.clone(),
            found: meta.layout.name(),
            expected: expected.name(),
        });
    }
    Ok(())
}

impl PimContext {
    /// Copies a host array to every core.
    pub fn broadcast(&mut self, id: &str, data: &[u8], len: usize, type_size: usize) -> Result<()> {
        check_host_buffer(data, len, type_size)?;
        self.ensure_unused(id)?;
        let offset = self.replicate(data)?;
        let cores = self.num_cores();
        self.registry.register(ArrayMetadata {
            id: id.to_owned(),
            len,
            type_size,
            bank_offset: offset,
            per_core_elems: vec![len; cores],
            padded_chunk_bytes: round_up(data.len(), self.config().dma_alignment),
            layout: LayoutKind::Replicated,
        })
    }

    /// Allocates aligned space and sends `data`, zero padded, to every core.
    pub(crate) fn replicate(&mut self, data: &[u8]) -> Result<usize> {
        let bytes = round_up(data.len(), self.config().dma_alignment);
        let offset = self.device.alloc(bytes)?;
        self.write_replicated(offset, data)?;
        Ok(offset)
    }

    pub(crate) fn write_replicated(&mut self, offset: usize, data: &[u8]) -> Result<()> {
        let bytes = round_up(data.len(), self.config().dma_alignment);
        if bytes == 0 {
            return Ok(());
        }
        let mut padded = data.to_vec();
        padded.resize(bytes, 0);
        let slices = vec![padded.as_slice(); self.num_cores()];
        self.device.parallel_to_pim(offset, &slices)
    }

    /// Splits a host array across cores with one parallel transfer.
    pub fn scatter(&mut self, id: &str, data: &[u8], len: usize, type_size: usize) -> Result<()> {
        check_host_buffer(data, len, type_size)?;
        let cfg = self.config();
        let plan = plan_scatter(len, type_size, cfg.num_cores, cfg.dma_alignment);
        self.scatter_planned(id, data, plan)
    }

    /// Scatters a host array with the same per-core element counts as the
    /// scattered array `like`, so the two can be zipped whatever their
    /// element sizes.
    pub fn scatter_like(
        &mut self,
        id: &str,
        data: &[u8],
        len: usize,
        type_size: usize,
        like: &str,
    ) -> Result<()> {
        check_host_buffer(data, len, type_size)?;
        let other = self.lookup(like)?;
        expect_layout(&other, LayoutKind::Scattered)?;
        if other.len != len {
            return Err(Error::LengthMismatch {
                first: other.len,
                second: len,
            });
        }
        let widest = other.per_core_elems.iter().copied().max().unwrap_or(0);
        let plan = TransferPlan {
            num_cores: self.num_cores(),
            len,
            type_size,
            padded_chunk_bytes: round_up(widest * type_size, self.config().dma_alignment),
            per_core_elems: other.per_core_elems,
            pad_fill: 0,
        };
        self.scatter_planned(id, data, plan)
    }

    fn scatter_planned(&mut self, id: &str, data: &[u8], plan: TransferPlan) -> Result<()> {
        self.ensure_unused(id)?;
        let type_size = plan.type_size;
        let chunk = plan.padded_chunk_bytes;
        let offset = self.device.alloc(chunk)?;
        if chunk > 0 {
            let mut start = 0;
            let buffers: Vec<Vec<u8>> = plan
                .per_core_elems
                .iter()
                .map(|&n| {
                    let bytes = n * type_size;
                    let mut buf = vec![plan.pad_fill; chunk];
                    buf[..bytes].copy_from_slice(&data[start..start + bytes]);
                    start += bytes;
                    buf
                })
                .collect();
            let slices: Vec<&[u8]> = buffers.iter().map(Vec::as_slice).collect();
            if let Err(e) = self.device.parallel_to_pim(offset, &slices) {
                self.device.release(offset, chunk);
                return Err(e);
            }
        }
        self.registry.register(ArrayMetadata {
            id: id.to_owned(),
            len: plan.len,
            type_size,
            bank_offset: offset,
            per_core_elems: plan.per_core_elems,
            padded_chunk_bytes: chunk,
            layout: LayoutKind::Scattered,
        })
    }

    /// Reassembles a scattered array on the host, padding stripped.
    pub fn gather(&mut self, id: &str) -> Result<Vec<u8>> {
        let meta = self.lookup(id)?;
        expect_layout(&meta, LayoutKind::Scattered)?;
        if meta.padded_chunk_bytes == 0 {
            return Ok(Vec::new());
        }
        let chunks = self
            .device
            .parallel_to_host(meta.bank_offset, meta.padded_chunk_bytes)?;
        let mut out = Vec::with_capacity(meta.len * meta.type_size);
        for (chunk, &n) in chunks.iter().zip(&meta.per_core_elems) {
            out.extend_from_slice(&chunk[..n * meta.type_size]);
        }
        Ok(out)
    }

    /// Reads the copy of an array held by a single core.
    pub fn read_local(&mut self, id: &str, core: usize) -> Result<Vec<u8>> {
        let meta = self.lookup(id)?;
        if meta.is_lazy() {
            return Err(Error::WrongLayout {
                id: meta.id,
                found: "lazy_zip",
                expected: "scattered or replicated",
            });
        }
        if meta.padded_chunk_bytes == 0 {
            return Ok(Vec::new());
        }
        let mut chunk =
            self.device
                .serial_to_host(core, meta.bank_offset, meta.padded_chunk_bytes)?;
        chunk.truncate(meta.per_core_elems[core] * meta.type_size);
        Ok(chunk)
    }

    /// Combines the per-core copies of a replicated array elementwise with
    /// the handle's `acc` callback and writes the result back to every core.
    pub fn allreduce(&mut self, id: &str, handle: HandleId) -> Result<()> {
        let meta = self.lookup(id)?;
        expect_layout(&meta, LayoutKind::Replicated)?;
        let acc = self.acc_of(handle)?;
        if meta.padded_chunk_bytes == 0 {
            return Ok(());
        }
        let partials = self
            .device
            .parallel_to_host(meta.bank_offset, meta.padded_chunk_bytes)?;
        let combined = fold_partials(&partials, meta.len, meta.type_size, &acc);
        self.write_replicated(meta.bank_offset, &combined)
    }

    fn acc_of(&self, handle: HandleId) -> Result<AccFn> {
        let h = self.handle(handle)?;
        match (h.kind(), &h.functions().acc) {
            (HandleKind::Reduce, Some(acc)) => Ok(acc.clone()),
            (kind, _) => Err(Error::HandleKindMismatch {
                expected: HandleKind::Reduce.name(),
                found: kind.name(),
            }),
        }
    }

    /// Gives every core the full contents of a scattered array, registered
    /// under `new_id` as a replicated array.
    pub fn allgather(&mut self, id: &str, new_id: &str) -> Result<()> {
        let meta = self.lookup(id)?;
        expect_layout(&meta, LayoutKind::Scattered)?;
        self.ensure_unused(new_id)?;
        let data = self.gather(id)?;
        self.broadcast(new_id, &data, meta.len, meta.type_size)
    }

    pub fn broadcast_slice<T: Pod>(&mut self, id: &str, data: &[T]) -> Result<()> {
        self.broadcast(
            id,
            bytemuck::cast_slice(data),
            data.len(),
            std::mem::size_of::<T>(),
        )
    }

    pub fn scatter_slice<T: Pod>(&mut self, id: &str, data: &[T]) -> Result<()> {
        self.scatter(
            id,
            bytemuck::cast_slice(data),
            data.len(),
            std::mem::size_of::<T>(),
        )
    }

    pub fn scatter_like_slice<T: Pod>(&mut self, id: &str, data: &[T], like: &str) -> Result<()> {
        self.scatter_like(
            id,
            bytemuck::cast_slice(data),
            data.len(),
            std::mem::size_of::<T>(),
            like,
        )
    }

    pub fn gather_vec<T: Pod>(&mut self, id: &str) -> Result<Vec<T>> {
        Ok(bytemuck::pod_collect_to_vec(&self.gather(id)?))
    }

    pub fn read_local_vec<T: Pod>(&mut self, id: &str, core: usize) -> Result<Vec<T>> {
        Ok(bytemuck::pod_collect_to_vec(&self.read_local(id, core)?))
    }
}
