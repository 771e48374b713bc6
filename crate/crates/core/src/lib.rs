//! Analytic Execution-Cache-Memory (ECM) performance modeling for steady-state
//! loop kernels.
//!
//! Machines and kernels are plain TOML files. [`traffic`] turns a kernel's
//! stream list into bytes per iteration on each cache link, [`ecm`] composes
//! those with in-core cycle counts into per-level and multicore runtime
//! predictions, and [`validation`] scores predictions against measurement
//! CSVs.

pub mod auxiliary;
pub mod ecm;
pub mod error;
pub mod exec;
pub mod fixtures;
pub mod kernel;
pub mod machine;
pub mod notation;
pub mod traffic;
pub mod validation;

pub use auxiliary::{adjusted_worst_case, roofline, spike_delivery_parallel, spike_delivery_serial, LatencyScenario};
pub use ecm::{
    compose, contributions, multicore, predict, saturation_point, saturation_sweep, saturation_sweep_with, work_rate,
    EcmContribution, EcmPrediction, Link, LinkTime, PredictionBasis, SaturationPoint, SaturationRow, WorkRate,
};
pub use error::{Error, Result};
pub use exec::Execution;
pub use fixtures::{verify_fixtures, FixtureManifest, FixtureReport, FixtureSet};
pub use kernel::{in_core_times, load_kernel, Access, Contiguity, KernelClass, KernelSpec, ScenarioMode, StreamSpec};
pub use machine::{load_machine, peak_performance, rescale_frequency, L3Policy, MachineModel, SimdLevel};
pub use traffic::{link_volumes, traffic, worst_case_branching, worst_case_random_traffic, LinkVolumes, Residence, TrafficBreakdown};
pub use validation::{
    load_measurements, utilization, utilization_curve, validate, CatalogPredictor, Classification, MeasurementRecord,
    PredictionSource, ValidationReport, WeightedKernel,
};
