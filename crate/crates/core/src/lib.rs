//! A desk-scale processing-in-memory framework on a simulated UPMEM-style
//! machine.
//!
//! [`device`] models the hardware: cores with private DRAM banks and
//! scratchpads, tasklets, and a DMA engine that enforces alignment and size
//! limits. On top of it, [`PimContext`] offers an array registry
//! ([`management`]), collectives ([`comm`]) and map / reduce / zip iterators
//! ([`processing`]). [`apps`] builds six benchmark workloads from those
//! calls, and [`harness`] runs scaling experiments and writes CSV results.
//!
//! ```
//! use pimlite_core::{DeviceConfig, HandleFunctions, HandleKind, PimContext};
//!
//! let mut pim = PimContext::new(DeviceConfig::with_cores(4)).unwrap();
//! pim.scatter_slice("t1", &(1..=100u32).collect::<Vec<_>>()).unwrap();
//! let sum = HandleFunctions::typed_reduce::<u32, u64>(
//!     || 0,
//!     |x, _ctx| (x as u64, 0),
//!     |a, b| a + b,
//! );
//! let h = pim.create_handle(sum, HandleKind::Reduce, &[]).unwrap();
//! pim.array_red("t1", "t2", 8, 1, h).unwrap();
//! assert_eq!(pim.gather_vec::<u64>("t2").unwrap(), vec![5050]);
//! ```

pub mod apps;
pub mod comm;
pub mod device;
mod error;
pub mod harness;
pub mod management;
pub mod processing;

pub use comm::{plan_scatter, TransferPlan};
pub use device::{
    DeviceConfig, Kernel, PimDevice, TaskletContext, TrafficStats, TransferKind, TransferRecord,
};
pub use error::{Error, Result};
pub use management::{ArrayMetadata, LayoutKind, PimContext, Registry};
pub use processing::{
    compute_batch_elems, select_reduction_plan, HandleFunctions, HandleId, HandleKind,
    IteratorReport, ReductionPlan, ReductionPolicy, ReductionVariant,
};
