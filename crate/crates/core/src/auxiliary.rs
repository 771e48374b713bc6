//! Models outside the ECM design space: the Roofline bound and the two
//! latency scenarios for event-driven spike delivery.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, ScenarioMode};
use crate::machine::{peak_performance, MachineModel, SimdLevel};
use crate::traffic::{traffic, worst_case_random_traffic, TrafficBreakdown};

/// `min(peak, I * b_mem)` in GF/s.
pub fn roofline(intensity_flop_per_b: f64, m: &MachineModel, simd: SimdLevel, n_cores: usize) -> Result<f64> {
    if !(intensity_flop_per_b > 0.0) {
        return Err(Error::Precondition(format!(
            "arithmetic intensity must be > 0, got {intensity_flop_per_b}"
        )));
    }
    let peak = peak_performance(m, simd, n_cores)?;
    Ok(peak.min(intensity_flop_per_b * m.mem_bw_gbs))
}

/// Inputs for one spike-delivery scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyScenario {
    pub mode: ScenarioMode,
    pub cp_cy: Option<f64>,
    pub n_random: Option<u32>,
    pub avg_latency_cy: Option<f64>,
    pub wc_traffic: TrafficBreakdown,
    pub effective_mem_bw_gbs: f64,
    /// The bandwidth above was back-solved from a target value.
    pub known_discrepancy: bool,
}

impl LatencyScenario {
    /// Scenario for `k` on `m`. Best case reads the critical path of the
    /// scalar timing entry and the regular per-iteration traffic; worst case
    /// uses one full cache line per random access at the machine's average
    /// memory latency.
    pub fn for_kernel(k: &KernelSpec, m: &MachineModel, mode: ScenarioMode) -> Result<Self> {
        let (effective_mem_bw_gbs, known_discrepancy) = match k.bandwidth_override(&m.name, mode) {
            Some(b) => (b.mem_bw_gbs, b.known_discrepancy),
            None => (m.mem_bw_gbs, false),
        };
        let s = match mode {
            ScenarioMode::BestCase => {
                let t = k.timing_for(&m.name, SimdLevel::Scalar)?;
                LatencyScenario {
                    mode,
                    cp_cy: Some(t.cp_cy.ok_or_else(|| Error::MissingKernelField {
                        kernel: k.name.clone(),
                        field: "cp_cy",
                    })?),
                    n_random: None,
                    avg_latency_cy: None,
                    wc_traffic: traffic(k),
                    effective_mem_bw_gbs,
                    known_discrepancy,
                }
            }
            ScenarioMode::WorstCase => LatencyScenario {
                mode,
                cp_cy: None,
                n_random: k.random_access_count,
                avg_latency_cy: Some(m.avg_mem_access_latency_cy),
                wc_traffic: worst_case_random_traffic(k, m.cache_line_b)?,
                effective_mem_bw_gbs,
                known_discrepancy,
            },
        };
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<()> {
        let missing = |what: &str| {
            Err(Error::Precondition(format!("{} scenario lacks {what}", self.mode)))
        };
        match self.mode {
            ScenarioMode::BestCase if self.cp_cy.is_none() => missing("cp_cy"),
            ScenarioMode::WorstCase if self.n_random.is_none() => missing("n_random"),
            ScenarioMode::WorstCase if self.avg_latency_cy.is_none() => missing("avg_latency_cy"),
            _ if !(self.effective_mem_bw_gbs > 0.0) => missing("a positive bandwidth"),
            _ => Ok(()),
        }
    }

    /// Cycles the scenario's traffic occupies the memory interface.
    pub fn bandwidth_bound_cy(&self, m: &MachineModel) -> f64 {
        self.wc_traffic.total_b() * m.core_freq_ghz / self.effective_mem_bw_gbs
    }
}

pub fn spike_delivery_serial(s: &LatencyScenario) -> Result<f64> {
    s.check()?;
    Ok(match s.mode {
        ScenarioMode::BestCase => s.cp_cy.unwrap_or_default(),
        ScenarioMode::WorstCase => {
            f64::from(s.n_random.unwrap_or_default()) * s.avg_latency_cy.unwrap_or_default()
        }
    })
}

pub fn spike_delivery_parallel(s: &LatencyScenario, m: &MachineModel, n: usize) -> Result<f64> {
    if n < 1 || n > m.n_cores {
        return Err(Error::Precondition(format!(
            "thread count {n} outside 1..={}",
            m.n_cores
        )));
    }
    Ok((spike_delivery_serial(s)? / n as f64).max(s.bandwidth_bound_cy(m)))
}

/// Worst-case estimate with the latency-bound critical path and the scalar
/// `exp()` latencies added on top. Diagnostic only.
pub fn adjusted_worst_case(k: &KernelSpec, m: &MachineModel) -> Result<f64> {
    let s = LatencyScenario::for_kernel(k, m, ScenarioMode::WorstCase)?;
    let t = k.timing_for(&m.name, SimdLevel::Scalar)?;
    let wc_cp = t.wc_cp_cy.ok_or_else(|| Error::MissingKernelField {
        kernel: k.name.clone(),
        field: "wc_cp_cy",
    })?;
    let exp_lat = m.throughputs.scalar_exp_latency_cy.ok_or_else(|| {
        Error::Precondition(format!("machine {} has no scalar exp latency", m.name))
    })?;
    Ok(spike_delivery_serial(&s)? + wc_cp + f64::from(t.n_exp) * exp_lat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::tests::{ivb, skx};
    use std::path::Path;

    const SPIKE: &str = r#"
name = "spike_delivery"
class = "spike_delivery"
work_unit = "spike"
random_access_count = 27
streams = [
  { name = "target", elem_b = 8, access = "read" },
  { name = "weight_index", elem_b = 4, access = "read" },
  { name = "w", elem_b = 8, access = "update", contiguity = "random" },
  { name = "g", elem_b = 8, access = "update", contiguity = "random" },
]
timing = [
  { machine = "ivb", simd = "scalar", t_ol_base_cy = 29.5, n_exp = 2, t_nol_cy = 19.5, cp_cy = 207.0, wc_cp_cy = 79.0 },
]
effective_bandwidth = [
  { machine = "ivb", mode = "worst_case", mem_bw_gbs = 39.5 },
]
"#;

    fn spike() -> KernelSpec {
        KernelSpec::from_toml_str(SPIKE, Path::new("spike")).unwrap()
    }

    #[test]
    fn roofline_bounds() {
        assert!((roofline(0.0625, &ivb(), SimdLevel::Avx, 10).unwrap() - 2.5).abs() < 1e-12);
        assert!((roofline(0.0625, &skx(), SimdLevel::Avx512, 18).unwrap() - 6.5625).abs() < 1e-12);
        let peak = peak_performance(&skx(), SimdLevel::Avx512, 18).unwrap();
        assert_eq!(roofline(1e12, &skx(), SimdLevel::Avx512, 18).unwrap(), peak);
        assert!(roofline(0.0, &ivb(), SimdLevel::Avx, 1).is_err());
    }

    #[test]
    fn best_and_worst_case() {
        let k = spike();
        let m = ivb();
        let bc = LatencyScenario::for_kernel(&k, &m, ScenarioMode::BestCase).unwrap();
        assert_eq!(spike_delivery_serial(&bc).unwrap(), 207.0);
        let bcp = spike_delivery_parallel(&bc, &m, 8).unwrap();
        assert!((bcp - 25.875).abs() < 1e-12);
        let wc = LatencyScenario::for_kernel(&k, &m, ScenarioMode::WorstCase).unwrap();
        assert_eq!(spike_delivery_serial(&wc).unwrap(), 540.0);
        assert_eq!(wc.effective_mem_bw_gbs, 39.5);
        assert!(spike_delivery_parallel(&wc, &m, 0).is_err());
        assert!(spike_delivery_parallel(&wc, &m, 11).is_err());
    }

    #[test]
    fn incomplete_scenario_rejected() {
        let mut s = LatencyScenario::for_kernel(&spike(), &ivb(), ScenarioMode::WorstCase).unwrap();
        s.n_random = None;
        assert!(spike_delivery_serial(&s).is_err());
    }

    #[test]
    fn adjusted_estimate_is_diagnostic() {
        let v = adjusted_worst_case(&spike(), &ivb()).unwrap();
        assert_eq!(v, 540.0 + 79.0 + 2.0 * 64.0);
    }
}
