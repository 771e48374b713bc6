//! Per-iteration data volumes and how they spread over the cache links.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{Access, Contiguity, KernelSpec};
use crate::machine::{L3Policy, MachineModel};

/// Deepest memory-hierarchy level holding the working set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Residence {
    L1,
    L2,
    L3,
    Mem,
}

impl Residence {
    pub const ALL: [Residence; 4] = [Residence::L1, Residence::L2, Residence::L3, Residence::Mem];

    pub fn as_str(self) -> &'static str {
        match self {
            Residence::L1 => "L1",
            Residence::L2 => "L2",
            Residence::L3 => "L3",
            Residence::Mem => "Mem",
        }
    }
}

impl fmt::Display for Residence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Residence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Residence::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Precondition(format!("unknown residence level `{s}`")))
    }
}

/// Bytes per scalar iteration, split by traffic class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TrafficBreakdown {
    /// Demand reads after locality weighting (includes the read half of updates).
    pub read_b: f64,
    /// Write-allocate reads caused by store misses.
    pub wa_b: f64,
    /// Dirty lines written back.
    pub dirty_b: f64,
    /// Clean lines that get evicted (pure read streams only).
    pub read_only_footprint_b: f64,
}

impl TrafficBreakdown {
    pub fn total_b(&self) -> f64 {
        self.read_b + self.wa_b + self.dirty_b
    }
}

/// Bytes per scalar iteration crossing each data path.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkVolumes {
    pub v_l1l2_b: f64,
    pub v_l2l3_read_b: f64,
    pub v_l2l3_write_b: f64,
    pub v_l2mem_b: f64,
    pub v_l3mem_b: f64,
}

impl LinkVolumes {
    /// Everything crossing the memory interface.
    pub fn memory_b(&self) -> f64 {
        self.v_l2mem_b + self.v_l3mem_b
    }

    /// Sum over all links.
    pub fn total_moved_b(&self) -> f64 {
        self.v_l1l2_b + self.v_l2l3_read_b + self.v_l2l3_write_b + self.memory_b()
    }
}

pub fn traffic(k: &KernelSpec) -> TrafficBreakdown {
    let mut t = TrafficBreakdown::default();
    for s in &k.streams {
        let bytes = f64::from(s.accesses_per_it) * f64::from(s.elem_b);
        match s.access {
            Access::Read => {
                let weighted = bytes / s.locality_run_length;
                t.read_b += weighted;
                t.read_only_footprint_b += weighted;
            }
            Access::Write => {
                t.wa_b += bytes;
                t.dirty_b += bytes;
            }
            Access::Update => {
                t.read_b += bytes;
                t.dirty_b += bytes;
            }
        }
    }
    t
}

pub fn link_volumes(t: &TrafficBreakdown, m: &MachineModel, residence: Residence) -> Result<LinkVolumes> {
    if residence == Residence::L3 && !m.has_l3() {
        return Err(Error::InvalidResidence {
            machine: m.name.clone(),
            residence,
        });
    }
    let mut v = LinkVolumes::default();
    if residence == Residence::L1 {
        return Ok(v);
    }
    let total = t.total_b();
    let inbound = t.read_b + t.wa_b;
    v.v_l1l2_b = total;
    match (m.l3_policy, residence) {
        (_, Residence::L1 | Residence::L2) => {}
        (L3Policy::Inclusive, Residence::L3) => {
            v.v_l2l3_read_b = inbound;
            v.v_l2l3_write_b = t.dirty_b;
        }
        (L3Policy::Inclusive, Residence::Mem) => {
            v.v_l2l3_read_b = inbound;
            v.v_l2l3_write_b = t.dirty_b;
            v.v_l3mem_b = total;
        }
        // Every line leaving L2, clean or dirty, is written into the victim L3.
        (L3Policy::Victim, Residence::L3) => {
            v.v_l2l3_read_b = inbound;
            v.v_l2l3_write_b = t.read_only_footprint_b + t.dirty_b;
        }
        (L3Policy::Victim, Residence::Mem) => {
            v.v_l2mem_b = inbound;
            v.v_l2l3_write_b = t.read_only_footprint_b + t.dirty_b;
            v.v_l3mem_b = t.dirty_b;
        }
        (L3Policy::None, Residence::Mem) => {
            v.v_l2mem_b = total;
        }
        (L3Policy::None, Residence::L3) => unreachable!("rejected above"),
    }
    Ok(v)
}

/// Each section boundary fetches a whole line of which one element is useful.
pub fn worst_case_branching(
    t: &TrafficBreakdown,
    k: &KernelSpec,
    boundary_fraction: f64,
    cache_line_b: u32,
) -> Result<TrafficBreakdown> {
    if !(0.0..=1.0).contains(&boundary_fraction) {
        return Err(Error::Precondition(format!(
            "boundary fraction must lie within [0, 1], got {boundary_fraction}"
        )));
    }
    let arrays = k.boundary_indirect_arrays.ok_or_else(|| Error::MissingKernelField {
        kernel: k.name.clone(),
        field: "boundary_indirect_arrays",
    })?;
    let wasted = f64::from(cache_line_b).max(8.0) - 8.0;
    let extra = boundary_fraction * f64::from(arrays) * wasted;
    let mut out = *t;
    out.read_b += extra;
    out.read_only_footprint_b += extra;
    Ok(out)
}

/// Traffic when every non-contiguous access pulls a full cache line from memory.
/// Contiguous streams keep their normal per-class accounting; each random access
/// counts one line, written or not.
pub fn worst_case_random_traffic(k: &KernelSpec, cache_line_b: u32) -> Result<TrafficBreakdown> {
    let n_random = k.random_access_count.ok_or_else(|| Error::MissingKernelField {
        kernel: k.name.clone(),
        field: "random_access_count",
    })?;
    let mut contiguous = k.clone();
    contiguous.streams.retain(|s| s.contiguity != Contiguity::Random);
    let mut t = traffic(&contiguous);
    let lines = f64::from(n_random) * f64::from(cache_line_b);
    t.read_b += lines;
    t.read_only_footprint_b += lines;
    Ok(t)
}
