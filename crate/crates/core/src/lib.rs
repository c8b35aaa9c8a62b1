//! Loop-blocking analysis and search for convolutional layers.
//!
//! A schedule is a [`BlockingString`]: the layer's loops listed innermost
//! to outermost with cumulative extents. From it the crate derives the
//! buffers each loop implies, counts every element transfer exactly,
//! prices the traffic with an SRAM/DRAM energy table and searches for the
//! cheapest schedule, on a custom memory hierarchy or a fixed one.

pub mod analysis;
pub mod codesign;
pub mod energy;
pub mod error;
pub mod hierarchy;
pub mod model;
pub mod optimizer;
pub mod parallel;
pub mod simulator;

pub use analysis::{
    access_counts, derive_buffers, pack_buffers, schedule_energy, AccessProfile, AnalysisOptions, BufferAlloc,
    BufferKind, EnergyMode, EnergyReport, PackingPlan,
};
pub use energy::EnergyTable;
pub use error::{Error, Result};
pub use hierarchy::{MemLevel, MemoryHierarchy};
pub use model::{builtin_benchmarks, validate_blocking, BlockingString, Dim, LayerShape, Loop};
pub use optimizer::{
    optimize_beam, optimize_exhaustive, optimize_fixed, search, unblocked_energy, ScheduleResult, SearchConfig,
    SearchKind,
};
pub use parallel::{apply_partition, multicore_report, MulticorePlan, Scheme};
pub use simulator::{check_equivalence, simulate, SimTrace};
