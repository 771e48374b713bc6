//! Scoring predictions against measurement files, plus the application-level
//! memory bandwidth utilization model.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::auxiliary::{spike_delivery_parallel, LatencyScenario};
use crate::ecm::predict;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::kernel::{KernelClass, KernelSpec, ScenarioMode};
use crate::machine::{rescale_frequency, MachineModel, SimdLevel};
use crate::traffic::{link_volumes, traffic, Residence};

pub const MEASUREMENT_HEADER: [&str; 9] = [
    "kernel",
    "machine",
    "simd",
    "threads",
    "residence",
    "cy_per_it_median",
    "cy_per_it_iqr",
    "mem_b_per_it",
    "avg_freq_ghz",
];

/// Pseudo-kernel names addressing the two spike-delivery scenarios.
pub const SPIKE_BEST_CASE: &str = "spike_delivery_bc";
pub const SPIKE_WORST_CASE: &str = "spike_delivery_wc";
const SPIKE_KERNEL: &str = "spike_delivery";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    /// Cycles per iteration.
    Runtime,
    /// Bytes per iteration crossing the memory interface.
    Volume,
}

/// One row of a measurement CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    /// 1-based line number in the source file, header included.
    pub row: usize,
    pub kernel: String,
    pub machine: Option<String>,
    pub simd: Option<SimdLevel>,
    pub threads: Option<usize>,
    pub residence: Option<Residence>,
    pub cy_per_it_median: Option<f64>,
    pub cy_per_it_iqr: Option<f64>,
    pub mem_b_per_it: Option<f64>,
    pub avg_freq_ghz: Option<f64>,
}

impl MeasurementRecord {
    pub fn kind(&self) -> RecordKind {
        if self.cy_per_it_median.is_some() {
            RecordKind::Runtime
        } else {
            RecordKind::Volume
        }
    }

    pub fn measured(&self) -> f64 {
        match self.kind() {
            RecordKind::Runtime => self.cy_per_it_median.unwrap_or_default(),
            RecordKind::Volume => self.mem_b_per_it.unwrap_or_default(),
        }
    }

    /// Human-readable lookup key.
    pub fn key(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
        format!(
            "{}/{}/{}/{}/{}",
            self.kernel,
            opt(self.machine.clone()),
            opt(self.simd.map(|s| s.to_string())),
            opt(self.threads.map(|t| t.to_string())),
            opt(self.residence.map(|r| r.to_string())),
        )
    }
}

fn row_error(origin: &Path, row: usize, message: impl fmt::Display) -> Error {
    Error::Parse {
        path: origin.to_path_buf(),
        message: format!("row {row}: {message}"),
    }
}

fn opt_field<T: std::str::FromStr>(
    origin: &Path,
    row: usize,
    rec: &csv::StringRecord,
    idx: usize,
) -> Result<Option<T>>
where
    T::Err: fmt::Display,
{
    match rec.get(idx).map(str::trim) {
        None | Some("") => Ok(None),
        Some(s) => s
            .parse()
            .map(Some)
            .map_err(|e| row_error(origin, row, format!("{}: {e}", MEASUREMENT_HEADER[idx]))),
    }
}

/// Parse measurement CSV text. The trailing `avg_freq_ghz` column may be
/// omitted; a row either carries a runtime (median, simd, threads,
/// residence, machine) or only a memory volume.
pub fn parse_measurements(text: &str, origin: &Path) -> Result<Vec<MeasurementRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| row_error(origin, 1, e))?.clone();
    let got: Vec<&str> = header.iter().collect();
    if got.len() < 8 || got[..] != MEASUREMENT_HEADER[..got.len().min(9)] {
        return Err(row_error(
            origin,
            1,
            format!("expected header `{}`", MEASUREMENT_HEADER.join(",")),
        ));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| row_error(origin, row, e))?;
        if rec.len() < 8 || rec.len() > 9 {
            return Err(row_error(origin, row, format!("expected 8 or 9 fields, got {}", rec.len())));
        }
        let kernel = rec[0].to_string();
        if kernel.is_empty() {
            return Err(row_error(origin, row, "kernel is empty"));
        }
        let machine = Some(rec[1].to_string()).filter(|s| !s.is_empty());
        let simd: Option<SimdLevel> = opt_field(origin, row, &rec, 2)?;
        let threads: Option<usize> = opt_field(origin, row, &rec, 3)?;
        let residence: Option<Residence> = opt_field(origin, row, &rec, 4)?;
        let median: Option<f64> = opt_field(origin, row, &rec, 5)?;
        let iqr: Option<f64> = opt_field(origin, row, &rec, 6)?;
        let mem_b: Option<f64> = opt_field(origin, row, &rec, 7)?;
        let freq: Option<f64> = opt_field(origin, row, &rec, 8)?;

        if threads == Some(0) {
            return Err(row_error(origin, row, "threads must be >= 1"));
        }
        if matches!(median, Some(v) if !(v > 0.0)) {
            return Err(row_error(origin, row, "cy_per_it_median must be > 0"));
        }
        if matches!(iqr, Some(v) if !(v >= 0.0)) {
            return Err(row_error(origin, row, "cy_per_it_iqr must be >= 0"));
        }
        if matches!(mem_b, Some(v) if !(v >= 0.0)) {
            return Err(row_error(origin, row, "mem_b_per_it must be >= 0"));
        }
        if matches!(freq, Some(v) if !(v > 0.0)) {
            return Err(row_error(origin, row, "avg_freq_ghz must be > 0"));
        }
        if median.is_some() {
            for (missing, name) in [
                (machine.is_none(), "machine"),
                (simd.is_none(), "simd"),
                (threads.is_none(), "threads"),
                (residence.is_none(), "residence"),
            ] {
                if missing {
                    return Err(row_error(origin, row, format!("runtime row lacks {name}")));
                }
            }
        } else if mem_b.is_none() {
            return Err(row_error(origin, row, "row carries neither a runtime nor a memory volume"));
        }
        out.push(MeasurementRecord {
            row,
            kernel,
            machine,
            simd,
            threads,
            residence,
            cy_per_it_median: median,
            cy_per_it_iqr: iqr,
            mem_b_per_it: mem_b,
            avg_freq_ghz: freq,
        });
    }
    Ok(out)
}

pub fn load_measurements(path: impl AsRef<Path>) -> Result<Vec<MeasurementRecord>> {
    let path = path.as_ref();
    parse_measurements(&crate::error::read_file(path)?, path)
}

/// Anything that can produce the model value a measurement is compared to.
/// `Ok(None)` means the source has nothing for that key.
pub trait PredictionSource {
    fn runtime(&self, rec: &MeasurementRecord) -> Result<Option<f64>>;
    fn volume(&self, rec: &MeasurementRecord) -> Result<Option<f64>>;
    fn kernel_class(&self, _kernel: &str) -> Option<KernelClass> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Within10Pct,
    Within35Pct,
    Outlier,
}

impl Classification {
    pub fn of(rel_error: f64) -> Self {
        let a = rel_error.abs();
        if a <= 0.10 {
            Classification::Within10Pct
        } else if a <= 0.35 {
            Classification::Within35Pct
        } else {
            Classification::Outlier
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Within10Pct => "within_10pct",
            Classification::Within35Pct => "within_35pct",
            Classification::Outlier => "outlier",
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Rows whose |relative error| exceeds this are flagged.
pub const FLAG_THRESHOLD: f64 = 0.15;

pub fn rel_error(predicted: f64, measured: f64) -> f64 {
    (measured - predicted) / predicted
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub record: MeasurementRecord,
    pub kind: RecordKind,
    pub class: Option<KernelClass>,
    pub predicted: f64,
    pub measured: f64,
    pub rel_error: f64,
    pub classification: Classification,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub rows: Vec<ValidationRow>,
    /// Median |relative error| of runtime rows, per kernel class.
    pub median_abs_error_by_class: BTreeMap<String, f64>,
}

impl ValidationReport {
    pub fn flagged(&self) -> impl Iterator<Item = &ValidationRow> {
        self.rows.iter().filter(|r| r.flagged)
    }

    pub fn find(&self, kernel: &str, machine: &str, simd: SimdLevel, threads: usize) -> Option<&ValidationRow> {
        self.rows.iter().find(|r| {
            r.record.kernel == kernel
                && r.record.machine.as_deref() == Some(machine)
                && r.record.simd == Some(simd)
                && r.record.threads == Some(threads)
        })
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

pub fn validate(records: &[MeasurementRecord], source: &impl PredictionSource) -> Result<ValidationReport> {
    let mut rows = Vec::with_capacity(records.len());
    for rec in records {
        let kind = rec.kind();
        let predicted = match kind {
            RecordKind::Runtime => source.runtime(rec)?,
            RecordKind::Volume => source.volume(rec)?,
        }
        .ok_or_else(|| Error::UnmatchedRecord {
            row: rec.row,
            key: rec.key(),
        })?;
        let measured = rec.measured();
        let err = rel_error(predicted, measured);
        rows.push(ValidationRow {
            record: rec.clone(),
            kind,
            class: source.kernel_class(&rec.kernel),
            predicted,
            measured,
            rel_error: err,
            classification: Classification::of(err),
            flagged: err.abs() > FLAG_THRESHOLD,
        });
    }
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.kind == RecordKind::Runtime) {
        let label = r.class.map(|c| c.to_string()).unwrap_or_else(|| "unknown".into());
        groups.entry(label).or_default().push(r.rel_error.abs());
    }
    Ok(ValidationReport {
        rows,
        median_abs_error_by_class: groups.into_iter().map(|(k, v)| (k, median(v))).collect(),
    })
}

/// Model predictions over a catalog of machines and kernels.
#[derive(Debug, Clone, Default)]
pub struct CatalogPredictor {
    pub machines: BTreeMap<String, MachineModel>,
    pub kernels: BTreeMap<String, KernelSpec>,
}

impl CatalogPredictor {
    pub fn new(machines: impl IntoIterator<Item = MachineModel>, kernels: impl IntoIterator<Item = KernelSpec>) -> Self {
        CatalogPredictor {
            machines: machines.into_iter().map(|m| (m.name.clone(), m)).collect(),
            kernels: kernels.into_iter().map(|k| (k.name.clone(), k)).collect(),
        }
    }
}

impl PredictionSource for CatalogPredictor {
    fn runtime(&self, rec: &MeasurementRecord) -> Result<Option<f64>> {
        let (Some(machine), Some(simd), Some(threads), Some(residence)) =
            (rec.machine.as_deref(), rec.simd, rec.threads, rec.residence)
        else {
            return Ok(None);
        };
        let Some(m) = self.machines.get(machine) else {
            return Ok(None);
        };
        let m = match rec.avg_freq_ghz {
            Some(f) => rescale_frequency(m, f)?,
            None => m.clone(),
        };
        let mode = match rec.kernel.as_str() {
            SPIKE_BEST_CASE => Some(ScenarioMode::BestCase),
            SPIKE_WORST_CASE => Some(ScenarioMode::WorstCase),
            _ => None,
        };
        if let Some(mode) = mode {
            let Some(k) = self.kernels.get(SPIKE_KERNEL) else {
                return Ok(None);
            };
            let s = LatencyScenario::for_kernel(k, &m, mode)?;
            return spike_delivery_parallel(&s, &m, threads).map(Some);
        }
        let Some(k) = self.kernels.get(&rec.kernel) else {
            return Ok(None);
        };
        match predict(k, &m, simd, residence) {
            Ok(p) => p.multicore(threads).map(Some),
            Err(Error::MissingTiming { .. } | Error::NoContributionSplit { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn volume(&self, rec: &MeasurementRecord) -> Result<Option<f64>> {
        let Some(k) = self.kernels.get(&rec.kernel) else {
            return Ok(None);
        };
        Ok(Some(traffic(k).total_b()))
    }

    fn kernel_class(&self, kernel: &str) -> Option<KernelClass> {
        match kernel {
            SPIKE_BEST_CASE | SPIKE_WORST_CASE => Some(KernelClass::SpikeDelivery),
            _ => self.kernels.get(kernel).map(|k| k.class),
        }
    }
}

/// A kernel together with its share of iterations in one application step.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedKernel {
    pub kernel: KernelSpec,
    pub weight: f64,
}

struct MemoryProfile {
    weight: f64,
    volume_b: f64,
    serial_cy: f64,
    bottleneck_cy: f64,
}

fn profiles(exec: Execution, kernels: &[WeightedKernel], m: &MachineModel, simd: SimdLevel) -> Result<Vec<MemoryProfile>> {
    if kernels.is_empty() {
        return Err(Error::Precondition("kernel set is empty".into()));
    }
    exec.try_map(kernels, |wk| {
        if !(wk.weight.is_finite() && wk.weight >= 0.0) {
            return Err(Error::Precondition(format!(
                "weight of {} must be >= 0",
                wk.kernel.name
            )));
        }
        let p = predict(&wk.kernel, m, simd, Residence::Mem)?;
        let volume_b = link_volumes(&traffic(&wk.kernel), m, Residence::Mem)?.memory_b();
        Ok(MemoryProfile {
            weight: wk.weight,
            volume_b,
            serial_cy: p.serial_cy(),
            bottleneck_cy: p.mem_bottleneck_cy,
        })
    })
}

fn utilization_at(profiles: &[MemoryProfile], m: &MachineModel, n: usize) -> f64 {
    let (mut bytes, mut cycles) = (0.0, 0.0);
    for p in profiles {
        bytes += p.weight * p.volume_b;
        cycles += p.weight * (p.serial_cy / n as f64).max(p.bottleneck_cy);
    }
    if cycles <= 0.0 {
        return 0.0;
    }
    (bytes / cycles / m.mem_bw_bcy()).min(1.0)
}

/// Predicted fraction of the memory bandwidth used by the weighted kernel mix on `n` cores.
pub fn utilization(kernels: &[WeightedKernel], m: &MachineModel, simd: SimdLevel, n: usize) -> Result<f64> {
    if n < 1 || n > m.n_cores {
        return Err(Error::Precondition(format!(
            "core count {n} outside 1..={}",
            m.n_cores
        )));
    }
    let p = profiles(Execution::Sequential, kernels, m, simd)?;
    Ok(utilization_at(&p, m, n))
}

/// Utilization for `n = 1..=n_cores`.
pub fn utilization_curve(exec: Execution, kernels: &[WeightedKernel], m: &MachineModel, simd: SimdLevel) -> Result<Vec<f64>> {
    let p = profiles(exec, kernels, m, simd)?;
    Ok(exec.map_range(1, m.n_cores, |n| utilization_at(&p, m, n)))
}
