//! Execution-Cache-Memory composition.
//!
//! Data transfers between adjacent levels of the hierarchy are assumed not to
//! overlap with each other nor with load/store retirement (`T_nOL`), while the
//! rest of the in-core work (`T_OL`) overlaps with everything:
//!
//! ```text
//! T_ECM^X = max(T_OL, T_nOL + sum of link times down to level X)
//! ```
//!
//! Multicore scaling is perfect until the memory interface saturates.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::kernel::{in_core_times, KernelSpec};
use crate::machine::{rescale_frequency, L3Policy, MachineModel, SimdLevel};
use crate::traffic::{link_volumes, traffic, Residence};
use crate::validation::{utilization_curve, WeightedKernel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Link {
    L1L2,
    L2L3,
    L2Mem,
    L3Mem,
}

impl Link {
    pub fn is_memory(self) -> bool {
        matches!(self, Link::L2Mem | Link::L3Mem)
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Link::L1L2 => "L1L2",
            Link::L2L3 => "L2L3",
            Link::L2Mem => "L2Mem",
            Link::L3Mem => "L3Mem",
        })
    }
}

/// Transfer time over one data path, charged once the working set lives at `level` or deeper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkTime {
    pub link: Link,
    pub level: Residence,
    pub cy: f64,
}

/// Raw model inputs `{T_OL || T_nOL | T_L1L2 | T_L2L3 | T_L3Mem}` in cycles per scalar iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcmContribution {
    pub residence: Residence,
    pub t_ol_cy: f64,
    pub t_nol_cy: f64,
    /// Ordered by hierarchy depth. On a victim L3 the memory level carries two
    /// entries (L2Mem and L3Mem) that together form the memory term.
    pub links: Vec<LinkTime>,
    /// Levels that exist on the machine, L1 first, down to `residence`.
    pub levels: Vec<Residence>,
}

impl EcmContribution {
    /// Combined transfer time charged for reaching `level` from the level above it.
    pub fn level_cy(&self, level: Residence) -> f64 {
        self.links.iter().filter(|l| l.level == level).map(|l| l.cy).sum()
    }

    /// Memory-interface term; zero unless the data lives in memory.
    pub fn memory_cy(&self) -> f64 {
        self.links.iter().filter(|l| l.link.is_memory()).map(|l| l.cy).sum()
    }

    /// `[T_L1L2, T_L2L3, T_mem]` style list: one combined value per level below L1.
    pub fn level_terms(&self) -> Vec<(Residence, f64)> {
        self.levels
            .iter()
            .skip(1)
            .map(|&lvl| (lvl, self.level_cy(lvl)))
            .collect()
    }
}

/// Whether the memory interface becomes the bottleneck at some core count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaturationPoint {
    Cores(usize),
    Never,
}

impl fmt::Display for SaturationPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SaturationPoint::Cores(n) => write!(f, "{n}"),
            SaturationPoint::Never => f.write_str("no saturation"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionBasis {
    /// Composed from a full contribution tuple.
    Composed,
    /// Serial in-memory runtime supplied by the kernel file.
    SerialOverride,
}

/// Runtime predictions `{T_ECM^L1 ] T_ECM^L2 ] T_ECM^L3 ] T_ECM^Mem}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcmPrediction {
    pub levels: Vec<(Residence, f64)>,
    /// Memory term that caps multicore scaling; zero for in-cache data.
    pub mem_bottleneck_cy: f64,
    pub n_s: SaturationPoint,
    pub basis: PredictionBasis,
}

impl EcmPrediction {
    fn new(levels: Vec<(Residence, f64)>, mem_bottleneck_cy: f64, basis: PredictionBasis) -> Self {
        let serial = levels.last().map(|l| l.1).unwrap_or(0.0);
        EcmPrediction {
            n_s: saturation_point(serial, mem_bottleneck_cy),
            levels,
            mem_bottleneck_cy,
            basis,
        }
    }

    /// Single-core runtime at the deepest predicted level.
    pub fn serial_cy(&self) -> f64 {
        self.levels.last().map(|l| l.1).unwrap_or(0.0)
    }

    pub fn at(&self, level: Residence) -> Option<f64> {
        self.levels.iter().find(|l| l.0 == level).map(|l| l.1)
    }

    pub fn residence(&self) -> Residence {
        self.levels.last().map(|l| l.0).unwrap_or(Residence::L1)
    }

    /// Runtime per iteration with `n` cores sharing the work.
    pub fn multicore(&self, n: usize) -> Result<f64> {
        multicore(self, n)
    }
}

/// Smallest `n` with `serial / n <= bottleneck`, computed so that it agrees
/// exactly with [`multicore`] under floating-point rounding.
pub fn saturation_point(serial_cy: f64, bottleneck_cy: f64) -> SaturationPoint {
    if !(bottleneck_cy > 0.0) || !serial_cy.is_finite() {
        return SaturationPoint::Never;
    }
    let mut n = (serial_cy / bottleneck_cy).ceil().max(1.0) as usize;
    while n > 1 && serial_cy / (n - 1) as f64 <= bottleneck_cy {
        n -= 1;
    }
    while serial_cy / n as f64 > bottleneck_cy {
        n += 1;
    }
    SaturationPoint::Cores(n)
}

fn levels_for(m: &MachineModel, residence: Residence) -> Vec<Residence> {
    Residence::ALL
        .into_iter()
        .filter(|&r| r <= residence && (r != Residence::L3 || m.has_l3()))
        .collect()
}

pub fn contributions(
    k: &KernelSpec,
    m: &MachineModel,
    simd: SimdLevel,
    residence: Residence,
) -> Result<EcmContribution> {
    let core = in_core_times(k, m, simd)?;
    let t = traffic(k);
    let v = link_volumes(&t, m, residence)?;
    let mut links = Vec::new();
    if residence >= Residence::L2 {
        links.push(LinkTime {
            link: Link::L1L2,
            level: Residence::L2,
            cy: v.v_l1l2_b / m.l1l2_bw_bcy,
        });
    }
    if residence >= Residence::L3 && m.has_l3() {
        let cy = if m.l2l3_duplex == Some(true) {
            v.v_l2l3_read_b.max(v.v_l2l3_write_b) / m.l2l3_bw_bcy
        } else {
            (v.v_l2l3_read_b + v.v_l2l3_write_b) / m.l2l3_bw_bcy
        };
        links.push(LinkTime { link: Link::L2L3, level: Residence::L3, cy });
    }
    if residence == Residence::Mem {
        match m.l3_policy {
            L3Policy::Inclusive => links.push(LinkTime {
                link: Link::L3Mem,
                level: Residence::Mem,
                cy: m.mem_transfer_cy(v.v_l3mem_b),
            }),
            L3Policy::Victim => {
                links.push(LinkTime {
                    link: Link::L2Mem,
                    level: Residence::Mem,
                    cy: m.mem_transfer_cy(v.v_l2mem_b),
                });
                links.push(LinkTime {
                    link: Link::L3Mem,
                    level: Residence::Mem,
                    cy: m.mem_transfer_cy(v.v_l3mem_b),
                });
            }
            L3Policy::None => links.push(LinkTime {
                link: Link::L2Mem,
                level: Residence::Mem,
                cy: m.mem_transfer_cy(v.v_l2mem_b),
            }),
        }
    }
    Ok(EcmContribution {
        residence,
        t_ol_cy: core.t_ol_cy,
        t_nol_cy: core.t_nol_cy,
        links,
        levels: levels_for(m, residence),
    })
}

pub fn compose(c: &EcmContribution) -> EcmPrediction {
    let mut data = c.t_nol_cy;
    let mut levels = Vec::with_capacity(c.levels.len());
    for &lvl in &c.levels {
        data += c.level_cy(lvl);
        levels.push((lvl, c.t_ol_cy.max(data)));
    }
    EcmPrediction::new(levels, c.memory_cy(), PredictionBasis::Composed)
}

/// `max(T_serial / n, T_mem)`.
pub fn multicore(p: &EcmPrediction, n: usize) -> Result<f64> {
    if n < 1 {
        return Err(Error::Precondition("core count must be >= 1".into()));
    }
    Ok((p.serial_cy() / n as f64).max(p.mem_bottleneck_cy))
}

/// Best available prediction for `k`: composed from contributions when the
/// kernel has a split for this pair, otherwise built from the serial
/// in-memory override (which only exists for `Residence::Mem`).
///
/// An override is published at the machine's nominal clock. On a rescaled
/// machine, data-bound kernel classes shift by the change in the memory term
/// while core-bound classes keep their cycle count.
pub fn predict(k: &KernelSpec, m: &MachineModel, simd: SimdLevel, residence: Residence) -> Result<EcmPrediction> {
    let timing = k.timing_for(&m.name, simd)?;
    if timing.has_split() {
        return Ok(compose(&contributions(k, m, simd, residence)?));
    }
    let over = timing.t_serial_override_cy.ok_or_else(|| Error::NoContributionSplit {
        kernel: k.name.clone(),
        machine: m.name.clone(),
        simd,
    })?;
    m.ensure_supports(simd)?;
    if residence != Residence::Mem {
        return Err(Error::NoContributionSplit {
            kernel: k.name.clone(),
            machine: m.name.clone(),
            simd,
        });
    }
    let mem_b = link_volumes(&traffic(k), m, Residence::Mem)?.memory_b();
    let bottleneck = m.mem_transfer_cy(mem_b);
    let serial = if k.class.data_bound_in_memory() {
        let nominal = mem_b * m.nominal_core_freq_ghz() / m.mem_bw_gbs;
        over + bottleneck - nominal
    } else {
        over
    };
    Ok(EcmPrediction::new(
        vec![(Residence::Mem, serial)],
        bottleneck,
        PredictionBasis::SerialOverride,
    ))
}

/// One row of a frequency sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationRow {
    pub freq_ghz: f64,
    /// Fewest cores reaching the utilization threshold, if any.
    pub cores: Option<usize>,
}

pub fn saturation_sweep(
    kernels: &[WeightedKernel],
    m: &MachineModel,
    simd: SimdLevel,
    freqs: &[f64],
    threshold: f64,
) -> Result<Vec<SaturationRow>> {
    saturation_sweep_with(Execution::default(), kernels, m, simd, freqs, threshold)
}

pub fn saturation_sweep_with(
    exec: Execution,
    kernels: &[WeightedKernel],
    m: &MachineModel,
    simd: SimdLevel,
    freqs: &[f64],
    threshold: f64,
) -> Result<Vec<SaturationRow>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Precondition(format!(
            "threshold must lie within [0, 1], got {threshold}"
        )));
    }
    if kernels.is_empty() {
        return Err(Error::Precondition("kernel set is empty".into()));
    }
    exec.try_map(freqs, |&f| {
        let machine = rescale_frequency(m, f)?;
        let curve = utilization_curve(exec, kernels, &machine, simd)?;
        let cores = curve.iter().position(|&u| u >= threshold).map(|i| i + 1);
        Ok(SaturationRow { freq_ghz: f, cores })
    })
}

/// Throughput in work units per second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkRate {
    pub per_second: f64,
    pub unit: String,
}

impl WorkRate {
    pub fn giga(&self) -> f64 {
        self.per_second / 1e9
    }
}

pub fn work_rate(cy_per_it: f64, m: &MachineModel, unit: &str) -> Result<WorkRate> {
    if !(cy_per_it.is_finite() && cy_per_it > 0.0) {
        return Err(Error::Precondition(format!(
            "cycles per iteration must be > 0, got {cy_per_it}"
        )));
    }
    Ok(WorkRate {
        per_second: m.core_freq_ghz * 1e9 / cy_per_it,
        unit: unit.to_string(),
    })
}
