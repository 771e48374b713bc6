//! The bundled data set: machine and kernel files, measurement CSVs, kernel
//! weights, and transcribed reference values used to self-check the model.
//!
//! Layout under the fixture root:
//!
//! ```text
//! MANIFEST.toml
//! machines/*.machine
//! kernels/*.kernel
//! measurements/*.csv
//! weights/kernel_mix.csv
//! expected/*.csv
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::auxiliary::{spike_delivery_parallel, LatencyScenario};
use crate::ecm::{compose, contributions, predict};
use crate::error::{read_file, Error, Result};
use crate::kernel::{load_kernel, KernelSpec, ScenarioMode};
use crate::machine::{load_machine, peak_performance, MachineModel, SimdLevel};
use crate::traffic::{traffic, worst_case_random_traffic, Residence};
use crate::validation::{load_measurements, CatalogPredictor, MeasurementRecord, WeightedKernel};

/// Overrides the fixture root.
pub const FIXTURES_ENV: &str = "ECMKIT_FIXTURES";

/// Absolute tolerance for reference values printed with one decimal.
pub const TABLE_TOLERANCE: f64 = 0.1 + 1e-9;

/// Labels every fixture set must cover at least once.
pub const REQUIRED_SOURCES: [&str; 13] = [
    "tab_hw",
    "tab_bench",
    "tab_peak_perf",
    "tab_Im_curr",
    "tab_syn_curr",
    "tab_Ih_state",
    "tab_syn_state",
    "tab_ivb",
    "tab_skx",
    "tab_mem",
    "tab_linalg",
    "tab_delivery",
    "tab_satur_freq",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub file: String,
    /// Comma-separated source labels.
    pub source: String,
    #[serde(default)]
    pub note: String,
    #[serde(default)]
    pub override_backed: bool,
}

impl ManifestEntry {
    pub fn sources(&self) -> impl Iterator<Item = &str> {
        self.source.split(',').map(str::trim).filter(|s| !s.is_empty())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureManifest {
    #[serde(rename = "entry", default)]
    pub entries: Vec<ManifestEntry>,
}

impl FixtureManifest {
    pub fn load(path: &Path) -> Result<Self> {
        toml::from_str(&read_file(path)?).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn entry(&self, file: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.file == file)
    }

    /// Every listed file exists, every data file is listed and cites a
    /// source, and every required source is covered.
    pub fn check(&self, root: &Path) -> Result<()> {
        let listed: BTreeSet<&str> = self.entries.iter().map(|e| e.file.as_str()).collect();
        for e in &self.entries {
            if !root.join(&e.file).is_file() {
                return Err(Error::Precondition(format!("manifest lists missing file {}", e.file)));
            }
            if e.sources().next().is_none() {
                return Err(Error::Precondition(format!("manifest entry {} cites no source", e.file)));
            }
        }
        for dir in ["machines", "kernels", "measurements", "weights", "expected"] {
            for file in list_dir(&root.join(dir))? {
                let rel = format!("{dir}/{}", file.file_name().unwrap_or_default().to_string_lossy());
                if !listed.contains(rel.as_str()) {
                    return Err(Error::Precondition(format!("{rel} is not listed in the manifest")));
                }
            }
        }
        let covered: BTreeSet<&str> = self.entries.iter().flat_map(|e| e.sources()).collect();
        for s in REQUIRED_SOURCES {
            if !covered.contains(s) {
                return Err(Error::Precondition(format!("no fixture cites {s}")));
            }
        }
        Ok(())
    }
}

fn list_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for e in rd {
        let e = e.map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        if e.path().is_file() {
            out.push(e.path());
        }
    }
    out.sort();
    Ok(out)
}

fn files_with_ext(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    Ok(list_dir(dir)?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect())
}

fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = read_file(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                message: format!("row {}: {e}", i + 2),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ExpectedContribution {
    pub kernel: String,
    pub machine: String,
    pub simd: SimdLevel,
    pub t_ol: f64,
    pub t_nol: f64,
    pub l1l2: f64,
    pub l2l3: f64,
    pub mem: f64,
    pub pred_l1: Option<f64>,
    pub pred_l2: Option<f64>,
    pub pred_l3: Option<f64>,
    pub pred_mem: Option<f64>,
    pub source: String,
}

impl ExpectedContribution {
    pub fn terms(&self) -> [f64; 5] {
        [self.t_ol, self.t_nol, self.l1l2, self.l2l3, self.mem]
    }

    pub fn predictions(&self) -> [Option<f64>; 4] {
        [self.pred_l1, self.pred_l2, self.pred_l3, self.pred_mem]
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ExpectedFullSocket {
    pub kernel: String,
    pub machine: String,
    pub simd: SimdLevel,
    pub serial_pred_cy: f64,
    pub full_socket_pred_cy: f64,
    pub source: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeScenario {
    Regular,
    WorstCaseRandom,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ExpectedVolume {
    pub kernel: String,
    pub scenario: VolumeScenario,
    pub pred_b: f64,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ExpectedSaturation {
    pub machine: String,
    pub simd: SimdLevel,
    pub freq_ghz: f64,
    pub cores: usize,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ExpectedDelivery {
    pub scenario: ScenarioMode,
    pub machine: String,
    pub threads: usize,
    pub pred_cy: f64,
    pub source: String,
    /// Relative tolerance replacing the absolute table tolerance.
    pub rel_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ExpectedPeak {
    pub machine: String,
    pub simd: SimdLevel,
    pub cores: usize,
    pub gflops: f64,
    pub source: String,
}

#[derive(Debug, Clone, Deserialize)]
struct WeightRow {
    kernel: String,
    weight: f64,
}

/// Loaded fixture directory.
#[derive(Debug, Clone)]
pub struct FixtureSet {
    pub root: PathBuf,
    pub manifest: FixtureManifest,
    pub machines: BTreeMap<String, MachineModel>,
    pub kernels: BTreeMap<String, KernelSpec>,
    /// Kernel name and weight, in file order.
    pub weights: Vec<(String, f64)>,
}

impl FixtureSet {
    /// `$ECMKIT_FIXTURES` if set, otherwise the `fixtures/` directory of this workspace.
    pub fn default_dir() -> PathBuf {
        match std::env::var_os(FIXTURES_ENV) {
            Some(p) if !p.is_empty() => PathBuf::from(p),
            _ => Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures"),
        }
    }

    pub fn load_default() -> Result<Self> {
        Self::load(Self::default_dir())
    }

    pub fn load(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let manifest = FixtureManifest::load(&root.join("MANIFEST.toml"))?;
        let mut machines = BTreeMap::new();
        for p in files_with_ext(&root.join("machines"), "machine")? {
            let m = load_machine(&p)?;
            machines.insert(m.name.clone(), m);
        }
        let mut kernels = BTreeMap::new();
        for p in files_with_ext(&root.join("kernels"), "kernel")? {
            let k = load_kernel(&p)?;
            kernels.insert(k.name.clone(), k);
        }
        let weights_path = root.join("weights/kernel_mix.csv");
        let weights = if weights_path.is_file() {
            read_csv::<WeightRow>(&weights_path)?
                .into_iter()
                .map(|w| (w.kernel, w.weight))
                .collect()
        } else {
            Vec::new()
        };
        Ok(FixtureSet {
            root,
            manifest,
            machines,
            kernels,
            weights,
        })
    }

    pub fn machine(&self, name: &str) -> Result<&MachineModel> {
        self.machines
            .get(name)
            .ok_or_else(|| Error::Precondition(format!("no fixture machine named {name}")))
    }

    pub fn kernel(&self, name: &str) -> Result<&KernelSpec> {
        self.kernels
            .get(name)
            .ok_or_else(|| Error::Precondition(format!("no fixture kernel named {name}")))
    }

    /// The kernel mix with its iteration weights.
    pub fn weighted_kernels(&self) -> Result<Vec<WeightedKernel>> {
        self.weights
            .iter()
            .map(|(name, w)| {
                Ok(WeightedKernel {
                    kernel: self.kernel(name)?.clone(),
                    weight: *w,
                })
            })
            .collect()
    }

    pub fn predictor(&self) -> CatalogPredictor {
        CatalogPredictor::new(self.machines.values().cloned(), self.kernels.values().cloned())
    }

    pub fn measurement_files(&self) -> Result<Vec<PathBuf>> {
        files_with_ext(&self.root.join("measurements"), "csv")
    }

    /// Records of `measurements/<file>`.
    pub fn measurements(&self, file: &str) -> Result<Vec<MeasurementRecord>> {
        load_measurements(self.root.join("measurements").join(file))
    }

    pub fn expected_contributions(&self) -> Result<Vec<ExpectedContribution>> {
        read_csv(&self.root.join("expected/contributions.csv"))
    }

    pub fn expected_full_socket(&self) -> Result<Vec<ExpectedFullSocket>> {
        read_csv(&self.root.join("expected/full_socket.csv"))
    }

    pub fn expected_volumes(&self) -> Result<Vec<ExpectedVolume>> {
        read_csv(&self.root.join("expected/volumes.csv"))
    }

    pub fn expected_saturation(&self) -> Result<Vec<ExpectedSaturation>> {
        read_csv(&self.root.join("expected/saturation.csv"))
    }

    pub fn expected_delivery(&self) -> Result<Vec<ExpectedDelivery>> {
        read_csv(&self.root.join("expected/delivery.csv"))
    }

    pub fn expected_peak(&self) -> Result<Vec<ExpectedPeak>> {
        read_csv(&self.root.join("expected/peak.csv"))
    }
}

/// One failed comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mismatch {
    pub fixture: String,
    pub anchor: String,
    pub quantity: String,
    pub expected: f64,
    pub computed: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FixtureReport {
    pub checked: usize,
    pub mismatches: Vec<Mismatch>,
}

impl FixtureReport {
    fn compare(&mut self, fixture: &str, anchor: &str, quantity: impl Into<String>, expected: f64, computed: f64) {
        self.compare_within(fixture, anchor, quantity, expected, computed, TABLE_TOLERANCE);
    }

    fn compare_within(
        &mut self,
        fixture: &str,
        anchor: &str,
        quantity: impl Into<String>,
        expected: f64,
        computed: f64,
        tolerance: f64,
    ) {
        self.checked += 1;
        if (expected - computed).abs() > tolerance {
            self.mismatches.push(Mismatch {
                fixture: fixture.to_string(),
                anchor: anchor.to_string(),
                quantity: quantity.into(),
                expected,
                computed,
            });
        }
    }

    pub fn is_ok(&self) -> bool {
        self.mismatches.is_empty()
    }

    /// The first mismatch as an error.
    pub fn into_result(self) -> Result<Self> {
        match self.mismatches.first() {
            None => Ok(self),
            Some(m) => Err(Error::FixtureMismatch {
                fixture: m.fixture.clone(),
                anchor: m.anchor.clone(),
                message: format!("{} expected {} computed {:.4}", m.quantity, m.expected, m.computed),
            }),
        }
    }
}

fn kernel_file(name: &str) -> String {
    format!("kernels/{name}.kernel")
}

/// Recompute traffic volumes, contribution and prediction tuples, full-socket
/// predictions, peak performance and spike-delivery values, and compare
/// them with the transcribed references.
pub fn verify_fixtures(fx: &FixtureSet) -> Result<FixtureReport> {
    fx.manifest.check(&fx.root)?;
    let mut rep = FixtureReport::default();

    for e in fx.expected_volumes()? {
        let k = fx.kernel(&e.kernel)?;
        let got = match e.scenario {
            VolumeScenario::Regular => traffic(k).total_b(),
            VolumeScenario::WorstCaseRandom => {
                let line = fx.machines.values().next().map_or(64, |m| m.cache_line_b);
                worst_case_random_traffic(k, line)?.total_b()
            }
        };
        rep.compare(&kernel_file(&e.kernel), &e.source, "volume [B]", e.pred_b, got);
    }

    for e in fx.expected_contributions()? {
        let k = fx.kernel(&e.kernel)?;
        let m = fx.machine(&e.machine)?;
        let anchor = format!("{} {} {}", e.source, e.machine, e.simd);
        let c = contributions(k, m, e.simd, Residence::Mem)?;
        let mut got = vec![c.t_ol_cy, c.t_nol_cy];
        got.extend(c.level_terms().iter().map(|t| t.1));
        for ((name, want), have) in ["T_OL", "T_nOL", "T_L1L2", "T_L2L3", "T_mem"]
            .iter()
            .zip(e.terms())
            .zip(got)
        {
            rep.compare(&kernel_file(&e.kernel), &anchor, *name, want, have);
        }
        let p = compose(&c);
        for ((lvl, want), (_, have)) in Residence::ALL.iter().zip(e.predictions()).zip(&p.levels) {
            if let Some(want) = want {
                rep.compare(&kernel_file(&e.kernel), &anchor, format!("T_ECM^{lvl}"), want, *have);
            }
        }
    }

    for e in fx.expected_full_socket()? {
        let k = fx.kernel(&e.kernel)?;
        let m = fx.machine(&e.machine)?;
        let anchor = format!("{} {} {}", e.source, e.machine, e.simd);
        let p = predict(k, m, e.simd, Residence::Mem)?;
        rep.compare(&kernel_file(&e.kernel), &anchor, "serial", e.serial_pred_cy, p.serial_cy());
        rep.compare(&kernel_file(&e.kernel), &anchor, "full socket", e.full_socket_pred_cy, p.multicore(m.n_cores)?);
    }

    for e in fx.expected_peak()? {
        let m = fx.machine(&e.machine)?;
        let got = peak_performance(m, e.simd, e.cores)?;
        rep.compare(&format!("machines/{}.machine", e.machine), &e.source, format!("peak {} cores", e.cores), e.gflops, got);
    }

    if let Ok(k) = fx.kernel("spike_delivery") {
        for e in fx.expected_delivery()? {
            let m = fx.machine(&e.machine)?;
            let s = LatencyScenario::for_kernel(k, m, e.scenario)?;
            let got = spike_delivery_parallel(&s, m, e.threads)?;
            let tol = e.rel_tol.map_or(TABLE_TOLERANCE, |r| r * e.pred_cy);
            rep.compare_within(
                &kernel_file("spike_delivery"),
                &format!("{} {} {}", e.source, e.machine, e.scenario),
                format!("{} threads", e.threads),
                e.pred_cy,
                got,
                tol,
            );
        }
    }

    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fx() -> FixtureSet {
        FixtureSet::load(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")).unwrap()
    }

    #[test]
    fn loads_bundled_fixtures() {
        let fx = fx();
        assert_eq!(fx.machines.len(), 2);
        assert_eq!(fx.kernels.len(), 15);
        assert_eq!(fx.weights.len(), 12);
        let m = fx.machine("ivb").unwrap();
        assert_eq!((m.core_freq_ghz, m.mem_bw_gbs, m.n_cores), (2.2, 40.0, 10));
        let k = fx.kernel("im_current").unwrap();
        assert_eq!(traffic(k).total_b(), 136.0);
    }

    #[test]
    fn bundled_fixtures_verify() {
        let rep = verify_fixtures(&fx()).unwrap();
        assert!(rep.checked > 300, "{}", rep.checked);
        assert!(rep.is_ok(), "{:#?}", rep.mismatches);
    }

    #[test]
    fn override_backed_kernels_are_marked() {
        let fx = fx();
        for (name, k) in &fx.kernels {
            let overrides = k.timing.iter().any(|t| t.t_serial_override_cy.is_some());
            let entry = fx.manifest.entry(&kernel_file(name)).unwrap();
            assert_eq!(entry.override_backed, overrides, "{name}");
        }
    }

    #[test]
    fn mismatch_names_fixture_and_anchor() {
        let mut rep = FixtureReport::default();
        rep.compare("kernels/x.kernel", "tab_x ivb sse", "T_OL", 1.0, 2.0);
        let err = rep.into_result().unwrap_err().to_string();
        assert!(err.contains("kernels/x.kernel") && err.contains("tab_x ivb sse"), "{err}");
    }
}
