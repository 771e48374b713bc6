//! Declarative loop-kernel descriptions.
//!
//! A kernel file lists the data streams touched by one scalar iteration and,
//! per (machine, SIMD level), the in-core cycle inputs obtained from static
//! analysis. Entries either carry a full split (`t_ol_base_cy`, `n_exp`,
//! `t_nol_cy`) or only a serial in-memory runtime (`t_serial_override_cy`).

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, read_file, Error, Result};
use crate::machine::{MachineModel, SimdLevel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Access {
    Read,
    /// Store miss: write-allocate read plus write-back.
    Write,
    /// Read-modify-write of the same element: read plus write-back, no allocate.
    Update,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Contiguity {
    #[default]
    Contiguous,
    /// Indexed through an indirection array whose indices are (nearly) consecutive.
    IndexedContiguous,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSpec {
    pub name: String,
    pub elem_b: u32,
    pub access: Access,
    #[serde(default = "one_u32")]
    pub accesses_per_it: u32,
    /// Average run of repeated indices; reads are divided by this factor.
    #[serde(default = "one_f64")]
    pub locality_run_length: f64,
    #[serde(default)]
    pub contiguity: Contiguity,
}

fn one_u32() -> u32 {
    1
}

fn one_f64() -> f64 {
    1.0
}

/// Broad kernel family, used to group validation statistics and to decide how
/// a serial-only runtime reacts to a clock change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelClass {
    Current,
    State,
    LinearAlgebra,
    SpikeDelivery,
    Benchmark,
}

impl KernelClass {
    /// Whether a serial in-memory runtime of this class is bound by data transfers.
    pub fn data_bound_in_memory(self) -> bool {
        matches!(self, KernelClass::Current | KernelClass::Benchmark)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            KernelClass::Current => "current",
            KernelClass::State => "state",
            KernelClass::LinearAlgebra => "linear_algebra",
            KernelClass::SpikeDelivery => "spike_delivery",
            KernelClass::Benchmark => "benchmark",
        }
    }
}

impl fmt::Display for KernelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// In-core inputs for one (machine, SIMD) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InCoreTiming {
    pub machine: String,
    pub simd: SimdLevel,
    /// Loop throughput from static analysis, excluding `exp()` calls.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_ol_base_cy: Option<f64>,
    #[serde(default)]
    pub n_exp: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_nol_cy: Option<f64>,
    /// Critical path of one iteration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cp_cy: Option<f64>,
    /// Critical path of the latency-bound variant (no memory stalls included).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wc_cp_cy: Option<f64>,
    /// Serial in-memory runtime for kernels without a published split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_serial_override_cy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl InCoreTiming {
    pub fn has_split(&self) -> bool {
        self.t_ol_base_cy.is_some() && self.t_nol_cy.is_some()
    }
}

/// Which spike-delivery scenario a bandwidth override applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioMode {
    BestCase,
    WorstCase,
}

impl fmt::Display for ScenarioMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioMode::BestCase => "best_case",
            ScenarioMode::WorstCase => "worst_case",
        })
    }
}

/// Effective memory bandwidth to use for a latency scenario instead of the
/// machine's nominal figure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandwidthOverride {
    pub machine: String,
    pub mode: ScenarioMode,
    pub mem_bw_gbs: f64,
    /// Set when the value only reproduces a target and has no independent source.
    #[serde(default)]
    pub known_discrepancy: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub class: KernelClass,
    pub work_unit: String,
    pub streams: Vec<StreamSpec>,
    #[serde(default)]
    pub timing: Vec<InCoreTiming>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_access_count: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_indirect_arrays: Option<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub effective_bandwidth: Vec<BandwidthOverride>,
}

/// Overlapping and non-overlapping in-core time, cycles per scalar iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InCoreTimes {
    pub t_ol_cy: f64,
    pub t_nol_cy: f64,
}

fn non_negative(ctx: &str, field: &str, v: Option<f64>) -> Result<()> {
    match v {
        Some(x) if !(x.is_finite() && x >= 0.0) => Err(invalid(ctx, field, "must be >= 0")),
        _ => Ok(()),
    }
}

impl KernelSpec {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let k: KernelSpec = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        k.validate()?;
        Ok(k)
    }

    pub fn display_name(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.name)
    }

    pub fn validate(&self) -> Result<()> {
        let ctx = format!("kernel {}", self.name);
        if self.name.trim().is_empty() {
            return Err(invalid("kernel", "name", "must not be empty"));
        }
        if self.streams.is_empty() {
            return Err(invalid(&ctx, "streams", "must contain at least one stream"));
        }
        let mut seen = HashSet::new();
        for s in &self.streams {
            let field = format!("stream `{}`", s.name);
            if !seen.insert(s.name.as_str()) {
                return Err(invalid(&ctx, &field, "is declared twice"));
            }
            if !matches!(s.elem_b, 4 | 8) {
                return Err(invalid(&ctx, &field, format!("elem_b must be 4 or 8, got {}", s.elem_b)));
            }
            if s.accesses_per_it < 1 {
                return Err(invalid(&ctx, &field, "accesses_per_it must be >= 1"));
            }
            if !(s.locality_run_length.is_finite() && s.locality_run_length >= 1.0) {
                return Err(invalid(&ctx, &field, "locality_run_length must be >= 1"));
            }
            if s.locality_run_length > 1.0 && s.access != Access::Read {
                return Err(invalid(&ctx, &field, "locality_run_length > 1 is only valid for reads"));
            }
        }
        let mut keys = HashSet::new();
        for t in &self.timing {
            let field = format!("timing ({}, {})", t.machine, t.simd);
            if !keys.insert((t.machine.as_str(), t.simd)) {
                return Err(invalid(&ctx, &field, "is declared twice"));
            }
            non_negative(&ctx, &format!("{field} t_ol_base_cy"), t.t_ol_base_cy)?;
            non_negative(&ctx, &format!("{field} t_nol_cy"), t.t_nol_cy)?;
            non_negative(&ctx, &format!("{field} cp_cy"), t.cp_cy)?;
            non_negative(&ctx, &format!("{field} wc_cp_cy"), t.wc_cp_cy)?;
            if t.t_ol_base_cy.is_some() != t.t_nol_cy.is_some() {
                return Err(invalid(&ctx, &field, "needs both t_ol_base_cy and t_nol_cy"));
            }
            match t.t_serial_override_cy {
                Some(v) if !(v.is_finite() && v > 0.0) => {
                    return Err(invalid(&ctx, &format!("{field} t_serial_override_cy"), "must be > 0"));
                }
                None if !t.has_split() => {
                    return Err(invalid(&ctx, &field, "needs an in-core split or t_serial_override_cy"));
                }
                _ => {}
            }
            if let (Some(cp), Some(base)) = (t.cp_cy, t.t_ol_base_cy) {
                if cp < base {
                    return Err(invalid(&ctx, &format!("{field} cp_cy"), "must be >= the overlapping time"));
                }
            }
        }
        for b in &self.effective_bandwidth {
            if !(b.mem_bw_gbs.is_finite() && b.mem_bw_gbs > 0.0) {
                return Err(invalid(&ctx, &format!("effective_bandwidth ({}, {})", b.machine, b.mode), "mem_bw_gbs must be > 0"));
            }
        }
        Ok(())
    }

    pub fn timing_for(&self, machine: &str, simd: SimdLevel) -> Result<&InCoreTiming> {
        self.timing
            .iter()
            .find(|t| t.machine == machine && t.simd == simd)
            .ok_or_else(|| Error::MissingTiming {
                kernel: self.name.clone(),
                machine: machine.to_string(),
                simd,
            })
    }

    pub fn bandwidth_override(&self, machine: &str, mode: ScenarioMode) -> Option<&BandwidthOverride> {
        self.effective_bandwidth
            .iter()
            .find(|b| b.machine == machine && b.mode == mode)
    }

    /// SIMD levels with a timing entry for `machine`, narrowest first.
    pub fn simd_levels(&self, machine: &str) -> Vec<SimdLevel> {
        let mut v: Vec<_> = self
            .timing
            .iter()
            .filter(|t| t.machine == machine)
            .map(|t| t.simd)
            .collect();
        v.sort();
        v
    }
}

pub fn load_kernel(path: impl AsRef<Path>) -> Result<KernelSpec> {
    let path = path.as_ref();
    KernelSpec::from_toml_str(&read_file(path)?, path)
}

/// `T_OL` adds the machine's vector `exp()` throughput for every call in the
/// loop body to the statically analysed base; `T_nOL` is taken as given.
pub fn in_core_times(k: &KernelSpec, m: &MachineModel, simd: SimdLevel) -> Result<InCoreTimes> {
    m.ensure_supports(simd)?;
    let t = k.timing_for(&m.name, simd)?;
    let (Some(base), Some(t_nol)) = (t.t_ol_base_cy, t.t_nol_cy) else {
        return Err(Error::NoContributionSplit {
            kernel: k.name.clone(),
            machine: m.name.clone(),
            simd,
        });
    };
    let exp = if t.n_exp == 0 {
        0.0
    } else {
        let per_call = m.throughputs.exp_cy(simd).ok_or_else(|| {
            invalid(&m.name, &format!("throughputs.per_simd.{simd}"), "is missing")
        })?;
        f64::from(t.n_exp) * per_call
    };
    let t_ol = base + exp;
    if let Some(cp) = t.cp_cy {
        if cp < t_ol {
            return Err(invalid(
                &format!("kernel {}", k.name),
                &format!("timing ({}, {simd}) cp_cy", m.name),
                format!("({cp}) is below the overlapping time {t_ol}"),
            ));
        }
    }
    Ok(InCoreTimes { t_ol_cy: t_ol, t_nol_cy: t_nol })
}
