//! Registry of PIM-resident arrays and the context object that ties the
//! registry, the device and the handle table together.

use std::collections::BTreeMap;

use crate::device::{DeviceConfig, PimDevice, TrafficStats, TransferRecord};
use crate::error::{Error, Result};
use crate::processing::{Handle, IteratorReport, ReductionPolicy};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayoutKind {
    /// Split across cores; `per_core_elems` sums to `len`.
    Scattered,
    /// A full copy on every core.
    Replicated,
    /// Pairs the elements of two scattered arrays without storing them
    /// together. Owns no device memory.
    LazyZip { first: String, second: String },
}

impl LayoutKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayoutKind::Scattered => "scattered",
            LayoutKind::Replicated => "replicated",
            LayoutKind::LazyZip { .. } => "lazy_zip",
        }
    }
}

/// Where an array lives and how it is split.
///
/// For replicated arrays `per_core_elems` holds `len` for every core. For
/// lazy zips `bank_offset` and `padded_chunk_bytes` describe the virtual
/// interleaved array and no storage is behind them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrayMetadata {
    pub id: String,
    pub len: usize,
    pub type_size: usize,
    pub bank_offset: usize,
    pub per_core_elems: Vec<usize>,
    pub padded_chunk_bytes: usize,
    pub layout: LayoutKind,
}

impl ArrayMetadata {
    pub fn owns_storage(&self) -> bool {
        !matches!(self.layout, LayoutKind::LazyZip { .. })
    }

    pub fn is_lazy(&self) -> bool {
        !self.owns_storage()
    }
}

#[derive(Debug, Default, Clone)]
pub struct Registry {
    arrays: BTreeMap<String, ArrayMetadata>,
}

impl Registry {
    pub fn lookup(&self, id: &str) -> Result<&ArrayMetadata> {
        self.arrays
            .get(id)
            .ok_or_else(|| Error::UnknownArrayId(id.to_owned()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.arrays.contains_key(id)
    }

    pub fn register(&mut self, meta: ArrayMetadata) -> Result<()> {
        if self.arrays.contains_key(&meta.id) {
            return Err(Error::DuplicateArrayId(meta.id));
        }
        self.arrays.insert(meta.id.clone(), meta);
        Ok(())
    }

    pub fn free(&mut self, id: &str) -> Result<ArrayMetadata> {
        self.arrays
            .remove(id)
            .ok_or_else(|| Error::UnknownArrayId(id.to_owned()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &ArrayMetadata> {
        self.arrays.values()
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }
}

/// Host-side state of one simulated machine: the device, the array
/// registry and the registered handles.
///
/// Communication and processing operations are implemented on this type in
/// the [`comm`](crate::comm) and [`processing`](crate::processing) modules.
#[derive(Debug)]
pub struct PimContext {
    pub(crate) device: PimDevice,
    pub(crate) registry: Registry,
    pub(crate) handles: Vec<Handle>,
    pub(crate) reduction_policy: ReductionPolicy,
    pub(crate) reports: Vec<IteratorReport>,
}

impl PimContext {
    pub fn new(config: DeviceConfig) -> Result<Self> {
        Ok(PimContext {
            device: PimDevice::new(config)?,
            registry: Registry::default(),
            handles: Vec::new(),
            reduction_policy: ReductionPolicy::Auto,
            reports: Vec::new(),
        })
    }

    pub fn device(&self) -> &PimDevice {
        &self.device
    }

    pub fn device_mut(&mut self) -> &mut PimDevice {
        &mut self.device
    }

    pub fn config(&self) -> &DeviceConfig {
        self.device.config()
    }

    pub fn num_cores(&self) -> usize {
        self.device.num_cores()
    }

    pub fn stats(&self) -> TrafficStats {
        self.device.stats()
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn set_transfer_log(&mut self, enabled: bool) {
        self.device.set_transfer_log(enabled);
    }

    pub fn take_transfer_log(&mut self) -> Vec<TransferRecord> {
        self.device.take_transfer_log()
    }

    pub fn lookup(&self, id: &str) -> Result<ArrayMetadata> {
        self.registry.lookup(id).cloned()
    }

    pub fn register(&mut self, meta: ArrayMetadata) -> Result<()> {
        self.registry.register(meta)
    }

    /// Drops `id` from the registry. Device memory is reclaimed only when the
    /// array is the most recent allocation.
    pub fn free(&mut self, id: &str) -> Result<()> {
        let meta = self.registry.free(id)?;
        if meta.owns_storage() {
            self.device
                .release(meta.bank_offset, meta.padded_chunk_bytes);
        }
        Ok(())
    }

    pub(crate) fn ensure_unused(&self, id: &str) -> Result<()> {
        if self.registry.contains(id) {
            return Err(Error::DuplicateArrayId(id.to_owned()));
        }
        Ok(())
    }
}
