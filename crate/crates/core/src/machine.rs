//! CPU machine descriptions.
//!
//! A [`MachineModel`] is loaded from a TOML file whose keys mirror the struct
//! fields one to one; unknown keys are rejected. All cache bandwidths are in
//! bytes per core cycle, the memory bandwidth is a wall-clock figure in GB/s
//! (1 GB = 1e9 B) and frequencies are in GHz.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, read_file, Error, Result};

/// SIMD instruction-set level a kernel was compiled for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimdLevel {
    Scalar,
    Sse,
    Avx,
    Avx2,
    Avx512,
}

impl SimdLevel {
    pub const ALL: [SimdLevel; 5] = [
        SimdLevel::Scalar,
        SimdLevel::Sse,
        SimdLevel::Avx,
        SimdLevel::Avx2,
        SimdLevel::Avx512,
    ];

    /// Double-precision lanes per register.
    pub fn lanes_f64(self) -> u32 {
        match self {
            SimdLevel::Scalar => 1,
            SimdLevel::Sse => 2,
            SimdLevel::Avx | SimdLevel::Avx2 => 4,
            SimdLevel::Avx512 => 8,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SimdLevel::Scalar => "scalar",
            SimdLevel::Sse => "sse",
            SimdLevel::Avx => "avx",
            SimdLevel::Avx2 => "avx2",
            SimdLevel::Avx512 => "avx512",
        }
    }
}

impl fmt::Display for SimdLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SimdLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SimdLevel::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Precondition(format!("unknown SIMD level `{s}`")))
    }
}

/// How the last-level cache is filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum L3Policy {
    /// Every line travelling between L2 and memory passes through L3.
    Inclusive,
    /// L3 only receives lines evicted from L2; memory reads go straight to L2.
    Victim,
    /// No shared L3 at all.
    None,
}

/// Inverse throughputs of expensive operations at one SIMD level, per scalar iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimdThroughput {
    pub exp_cy_per_scalar_it: f64,
    pub div_cy_per_scalar_it: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionThroughputTable {
    /// Inverse throughput of the scalar `exp()` library call.
    pub scalar_exp_cy: f64,
    /// Latency of one scalar `exp()` call, when benchmarked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scalar_exp_latency_cy: Option<f64>,
    pub per_simd: BTreeMap<SimdLevel, SimdThroughput>,
}

impl InstructionThroughputTable {
    /// `exp()` cost per scalar iteration. The scalar level falls back to
    /// `scalar_exp_cy` when it has no explicit entry.
    pub fn exp_cy(&self, simd: SimdLevel) -> Option<f64> {
        match self.per_simd.get(&simd) {
            Some(t) => Some(t.exp_cy_per_scalar_it),
            None if simd == SimdLevel::Scalar => Some(self.scalar_exp_cy),
            None => None,
        }
    }

    pub fn div_cy(&self, simd: SimdLevel) -> Option<f64> {
        self.per_simd.get(&simd).map(|t| t.div_cy_per_scalar_it)
    }

    fn check(&self, ctx: &str) -> Result<()> {
        positive(ctx, "throughputs.scalar_exp_cy", self.scalar_exp_cy)?;
        if let Some(lat) = self.scalar_exp_latency_cy {
            positive(ctx, "throughputs.scalar_exp_latency_cy", lat)?;
        }
        for (level, t) in &self.per_simd {
            positive(ctx, &format!("throughputs.per_simd.{level}.exp_cy_per_scalar_it"), t.exp_cy_per_scalar_it)?;
            positive(ctx, &format!("throughputs.per_simd.{level}.div_cy_per_scalar_it"), t.div_cy_per_scalar_it)?;
        }
        let mut prev: Option<(SimdLevel, f64)> = None;
        for level in SimdLevel::ALL {
            let Some(exp) = self.exp_cy(level) else { continue };
            if let Some((p, pexp)) = prev {
                if exp > pexp {
                    return Err(invalid(
                        ctx,
                        &format!("throughputs.per_simd.{level}.exp_cy_per_scalar_it"),
                        format!("({exp}) must not exceed the {p} value ({pexp})"),
                    ));
                }
            }
            prev = Some((level, exp));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineModel {
    pub name: String,
    pub core_freq_ghz: f64,
    pub uncore_freq_ghz: f64,
    pub mem_bw_gbs: f64,
    pub n_cores: usize,
    pub cache_line_b: u32,
    pub l1l2_bw_bcy: f64,
    pub l2l3_bw_bcy: f64,
    /// `true` when the L2-L3 path moves `l2l3_bw_bcy` in each direction at once.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l2l3_duplex: Option<bool>,
    pub l3_policy: L3Policy,
    /// Loads retired per cycle, keyed by register width.
    pub load_throughput: BTreeMap<SimdLevel, f64>,
    pub store_throughput: BTreeMap<SimdLevel, f64>,
    /// FMA-capable pipes (an add+mul pair counts as one).
    pub fma_per_cy: u32,
    pub flops_per_fma: u32,
    pub simd_max: SimdLevel,
    pub throughputs: InstructionThroughputTable,
    #[serde(default = "default_latency")]
    pub avg_mem_access_latency_cy: f64,
    /// Frequency the machine file was written for; survives rescaling.
    #[serde(skip)]
    nominal_core_freq_ghz: Option<f64>,
}

fn default_latency() -> f64 {
    20.0
}

fn positive(ctx: &str, field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(ctx, field, "must be > 0"))
    }
}

impl MachineModel {
    /// Parse and validate a machine description. `origin` is used in diagnostics.
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let mut m: MachineModel = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        m.nominal_core_freq_ghz = Some(m.core_freq_ghz);
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let ctx = self.name.as_str();
        if self.name.trim().is_empty() {
            return Err(invalid("machine", "name", "must not be empty"));
        }
        positive(ctx, "core_freq_ghz", self.core_freq_ghz)?;
        positive(ctx, "uncore_freq_ghz", self.uncore_freq_ghz)?;
        positive(ctx, "mem_bw_gbs", self.mem_bw_gbs)?;
        positive(ctx, "l1l2_bw_bcy", self.l1l2_bw_bcy)?;
        positive(ctx, "l2l3_bw_bcy", self.l2l3_bw_bcy)?;
        if self.n_cores < 1 {
            return Err(invalid(ctx, "n_cores", "must be >= 1"));
        }
        if self.cache_line_b == 0 || !self.cache_line_b.is_power_of_two() {
            return Err(invalid(ctx, "cache_line_b", "must be a power of two"));
        }
        if self.l3_policy == L3Policy::Victim && self.l2l3_duplex.is_none() {
            return Err(invalid(ctx, "l2l3_duplex", "must be specified for a victim L3"));
        }
        if self.fma_per_cy < 1 {
            return Err(invalid(ctx, "fma_per_cy", "must be >= 1"));
        }
        if self.flops_per_fma < 1 {
            return Err(invalid(ctx, "flops_per_fma", "must be >= 1"));
        }
        for (level, v) in self.load_throughput.iter() {
            positive(ctx, &format!("load_throughput.{level}"), *v)?;
        }
        for (level, v) in self.store_throughput.iter() {
            positive(ctx, &format!("store_throughput.{level}"), *v)?;
        }
        let lat = self.avg_mem_access_latency_cy;
        if !(1.0..=1000.0).contains(&lat) {
            return Err(invalid(ctx, "avg_mem_access_latency_cy", "must lie within [1, 1000]"));
        }
        self.throughputs.check(ctx)
    }

    /// Clock frequency the machine file describes, independent of any rescaling.
    pub fn nominal_core_freq_ghz(&self) -> f64 {
        self.nominal_core_freq_ghz.unwrap_or(self.core_freq_ghz)
    }

    pub fn has_l3(&self) -> bool {
        self.l3_policy != L3Policy::None
    }

    pub fn supports(&self, simd: SimdLevel) -> bool {
        simd <= self.simd_max
    }

    pub fn ensure_supports(&self, simd: SimdLevel) -> Result<()> {
        if self.supports(simd) {
            Ok(())
        } else {
            Err(Error::UnsupportedSimd {
                machine: self.name.clone(),
                simd,
                max: self.simd_max,
            })
        }
    }

    /// Memory bandwidth expressed in bytes per core cycle.
    pub fn mem_bw_bcy(&self) -> f64 {
        self.mem_bw_gbs / self.core_freq_ghz
    }

    /// Cycles needed to move `bytes` across the memory interface.
    pub fn mem_transfer_cy(&self, bytes: f64) -> f64 {
        bytes * self.core_freq_ghz / self.mem_bw_gbs
    }
}

pub fn load_machine(path: impl AsRef<Path>) -> Result<MachineModel> {
    let path = path.as_ref();
    MachineModel::from_toml_str(&read_file(path)?, path)
}

/// Double-precision peak performance in GF/s.
pub fn peak_performance(m: &MachineModel, simd: SimdLevel, n_cores: usize) -> Result<f64> {
    m.ensure_supports(simd)?;
    if n_cores < 1 || n_cores > m.n_cores {
        return Err(Error::Precondition(format!(
            "core count {n_cores} outside 1..={} for {}",
            m.n_cores, m.name
        )));
    }
    Ok(m.core_freq_ghz
        * f64::from(simd.lanes_f64())
        * f64::from(m.fma_per_cy)
        * f64::from(m.flops_per_fma)
        * n_cores as f64)
}

/// Copy of `m` clocked at `new_core_ghz`. Per-cycle cache bandwidths stay, the
/// wall-clock memory bandwidth stays, so memory transfers cost more cycles at
/// higher clocks. The uncore clock follows the core clock proportionally.
pub fn rescale_frequency(m: &MachineModel, new_core_ghz: f64) -> Result<MachineModel> {
    if !(new_core_ghz.is_finite() && new_core_ghz > 0.0) {
        return Err(Error::Precondition(format!(
            "frequency must be > 0 GHz, got {new_core_ghz}"
        )));
    }
    let mut out = m.clone();
    out.nominal_core_freq_ghz = Some(m.nominal_core_freq_ghz());
    let ratio = new_core_ghz / m.core_freq_ghz;
    out.core_freq_ghz = new_core_ghz;
    out.uncore_freq_ghz = m.uncore_freq_ghz * ratio;
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const IVB: &str = r#"
name = "ivb"
core_freq_ghz = 2.2
uncore_freq_ghz = 2.2
mem_bw_gbs = 40.0
n_cores = 10
cache_line_b = 64
l1l2_bw_bcy = 32.0
l2l3_bw_bcy = 32.0
l3_policy = "inclusive"
fma_per_cy = 1
flops_per_fma = 2
simd_max = "avx"
load_throughput = { scalar = 2.0, sse = 2.0, avx = 1.0 }
store_throughput = { scalar = 1.0, sse = 1.0, avx = 0.5 }

[throughputs]
scalar_exp_cy = 27.8
scalar_exp_latency_cy = 64.0

[throughputs.per_simd]
scalar = { exp_cy_per_scalar_it = 27.8, div_cy_per_scalar_it = 14.0 }
sse = { exp_cy_per_scalar_it = 11.5, div_cy_per_scalar_it = 7.0 }
avx = { exp_cy_per_scalar_it = 8.0, div_cy_per_scalar_it = 7.0 }
"#;

    pub(crate) const SKX: &str = r#"
name = "skx"
core_freq_ghz = 2.3
uncore_freq_ghz = 2.3
mem_bw_gbs = 105.0
n_cores = 18
cache_line_b = 64
l1l2_bw_bcy = 64.0
l2l3_bw_bcy = 16.0
l2l3_duplex = true
l3_policy = "victim"
fma_per_cy = 2
flops_per_fma = 2
simd_max = "avx512"
load_throughput = { scalar = 2.0, sse = 2.0, avx = 2.0, avx512 = 2.0 }
store_throughput = { scalar = 1.0, sse = 1.0, avx = 1.0, avx512 = 1.0 }

[throughputs]
scalar_exp_cy = 15.1

[throughputs.per_simd]
scalar = { exp_cy_per_scalar_it = 15.1, div_cy_per_scalar_it = 4.0 }
sse = { exp_cy_per_scalar_it = 6.7, div_cy_per_scalar_it = 2.0 }
avx = { exp_cy_per_scalar_it = 3.5, div_cy_per_scalar_it = 2.0 }
avx512 = { exp_cy_per_scalar_it = 1.5, div_cy_per_scalar_it = 2.0 }
"#;

    pub(crate) fn ivb() -> MachineModel {
        MachineModel::from_toml_str(IVB, Path::new("ivb")).unwrap()
    }

    pub(crate) fn skx() -> MachineModel {
        MachineModel::from_toml_str(SKX, Path::new("skx")).unwrap()
    }

    #[test]
    fn parses_both_machines() {
        let m = ivb();
        assert_eq!(m.core_freq_ghz, 2.2);
        assert_eq!(m.l3_policy, L3Policy::Inclusive);
        assert_eq!(m.avg_mem_access_latency_cy, 20.0);
        let s = skx();
        assert_eq!(s.l2l3_duplex, Some(true));
        assert_eq!(s.n_cores, 18);
    }

    #[test]
    fn zero_bandwidth_is_rejected() {
        let text = IVB.replace("mem_bw_gbs = 40.0", "mem_bw_gbs = 0.0");
        let err = MachineModel::from_toml_str(&text, Path::new("bad")).unwrap_err();
        assert!(err.to_string().contains("mem_bw_gbs must be > 0"), "{err}");
    }

    #[test]
    fn unknown_key_is_a_parse_error() {
        let text = format!("bogus = 1\n{IVB}");
        let err = MachineModel::from_toml_str(&text, Path::new("bad")).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn victim_needs_duplex_flag() {
        let text = SKX.replace("l2l3_duplex = true\n", "");
        let err = MachineModel::from_toml_str(&text, Path::new("bad")).unwrap_err();
        assert!(err.to_string().contains("l2l3_duplex"), "{err}");
    }

    #[test]
    fn latency_range_enforced() {
        let text = IVB.replace(
            "[throughputs]\n",
            "avg_mem_access_latency_cy = 2000.0\n\n[throughputs]\n",
        );
        let err = MachineModel::from_toml_str(&text, Path::new("bad")).unwrap_err();
        assert!(err.to_string().contains("avg_mem_access_latency_cy"), "{err}");
    }

    #[test]
    fn exp_must_not_grow_with_width() {
        let text = SKX.replace("exp_cy_per_scalar_it = 1.5", "exp_cy_per_scalar_it = 4.5");
        let err = MachineModel::from_toml_str(&text, Path::new("bad")).unwrap_err();
        assert!(err.to_string().contains("avx512"), "{err}");
    }

    #[test]
    fn peak_matches_published_values() {
        let close = |a: f64, b: f64| (a - b).abs() < 1e-9;
        assert!(close(peak_performance(&ivb(), SimdLevel::Avx, 1).unwrap(), 17.6));
        assert!(close(peak_performance(&ivb(), SimdLevel::Avx, 10).unwrap(), 176.0));
        assert!(close(peak_performance(&skx(), SimdLevel::Avx512, 1).unwrap(), 73.6));
        assert!(close(peak_performance(&skx(), SimdLevel::Avx512, 18).unwrap(), 1324.8));
    }

    #[test]
    fn peak_rejects_wide_simd_and_bad_counts() {
        assert!(matches!(
            peak_performance(&ivb(), SimdLevel::Avx512, 1),
            Err(Error::UnsupportedSimd { .. })
        ));
        assert!(peak_performance(&ivb(), SimdLevel::Avx, 0).is_err());
        assert!(peak_performance(&ivb(), SimdLevel::Avx, 11).is_err());
    }

    #[test]
    fn rescale_is_identity_at_same_clock() {
        let m = ivb();
        assert_eq!(rescale_frequency(&m, 2.2).unwrap(), m);
    }

    #[test]
    fn rescale_keeps_bandwidths() {
        let m = rescale_frequency(&skx(), 3.5).unwrap();
        assert_eq!(m.core_freq_ghz, 3.5);
        assert_eq!(m.uncore_freq_ghz, 3.5);
        assert_eq!(m.mem_bw_gbs, 105.0);
        assert_eq!(m.l2l3_bw_bcy, 16.0);
        assert_eq!(m.nominal_core_freq_ghz(), 2.3);
        let back = rescale_frequency(&m, 2.3).unwrap();
        assert_eq!(back.core_freq_ghz, 2.3);
        assert!(rescale_frequency(&m, 0.0).is_err());
        assert!(rescale_frequency(&m, f64::NAN).is_err());
    }

    #[test]
    fn simd_parse_and_lanes() {
        assert_eq!("AVX512".parse::<SimdLevel>().unwrap(), SimdLevel::Avx512);
        assert!("neon".parse::<SimdLevel>().is_err());
        for l in SimdLevel::ALL {
            let lanes = l.lanes_f64();
            assert!(lanes.is_power_of_two() && (1..=8).contains(&lanes));
        }
    }
}
