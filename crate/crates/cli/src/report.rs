//! `report`: every table and figure series as CSV, recomputed from the fixtures.
//!
//! All files are rendered in memory first and only written once everything
//! succeeded. Floats carry full precision; iteration order is fixed, so two
//! runs produce identical bytes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ecmkit::validation::{SPIKE_BEST_CASE, SPIKE_WORST_CASE};
use ecmkit::{
    adjusted_worst_case, compose, contributions, peak_performance, predict, saturation_sweep,
    spike_delivery_parallel, traffic, utilization_curve, worst_case_random_traffic, Execution, FixtureSet,
    KernelSpec, LatencyScenario, Link, MachineModel, MeasurementRecord, Residence, ScenarioMode, SimdLevel,
    WeightedKernel,
};
use serde::Serialize;

use crate::output::{csv_rows, finish};
use crate::CliError;

const CONTRIBUTION_TABLES: [(&str, &str); 4] = [
    ("tab_im_curr", "im_current"),
    ("tab_syn_curr", "exc_syn_current"),
    ("tab_ih_state", "ih_state"),
    ("tab_syn_state", "exc_syn_state"),
];

const LINALG: &str = "linear_algebra";
const SPIKE: &str = "spike_delivery";
const HIGH_CLOCK_GHZ: f64 = 3.5;
const SATURATION_THRESHOLD: f64 = 0.9;

type MeasKey = (String, String, SimdLevel, usize, Residence);

/// Runtime medians of one measurement file.
#[derive(Default)]
struct Runtimes(BTreeMap<MeasKey, f64>);

impl Runtimes {
    fn from_records(records: &[MeasurementRecord]) -> Self {
        let mut map = BTreeMap::new();
        for r in records {
            if let (Some(m), Some(s), Some(t), Some(l), Some(v)) =
                (&r.machine, r.simd, r.threads, r.residence, r.cy_per_it_median)
            {
                map.entry((r.kernel.clone(), m.clone(), s, t, l)).or_insert(v);
            }
        }
        Runtimes(map)
    }

    fn get(&self, kernel: &str, machine: &str, simd: SimdLevel, threads: usize, level: Residence) -> Option<f64> {
        self.0
            .get(&(kernel.to_string(), machine.to_string(), simd, threads, level))
            .copied()
    }
}

struct Context {
    fx: FixtureSet,
    machines: Vec<MachineModel>,
    mix: Vec<WeightedKernel>,
    files: BTreeMap<String, Vec<MeasurementRecord>>,
}

impl Context {
    fn runtimes(&self, file: &str) -> Runtimes {
        self.files
            .get(file)
            .map(|r| Runtimes::from_records(r))
            .unwrap_or_default()
    }

    fn kernel(&self, name: &str) -> Result<&KernelSpec, CliError> {
        Ok(self.fx.kernel(name)?)
    }
}

#[derive(Serialize)]
struct ContributionRow {
    kernel: String,
    label: String,
    machine: String,
    simd: SimdLevel,
    t_ol_cy: f64,
    t_nol_cy: f64,
    l1l2_cy: f64,
    l2l3_cy: Option<f64>,
    mem_cy: f64,
    pred_l1_cy: f64,
    pred_l2_cy: f64,
    pred_l3_cy: Option<f64>,
    pred_mem_cy: f64,
    n_s: String,
    meas_l2_cy: Option<f64>,
    meas_l3_cy: Option<f64>,
    meas_mem_cy: Option<f64>,
}

fn contribution_row(k: &KernelSpec, m: &MachineModel, simd: SimdLevel, meas: &Runtimes) -> Result<ContributionRow, CliError> {
    let c = contributions(k, m, simd, Residence::Mem)?;
    let p = compose(&c);
    let link = |l: Link| c.links.iter().filter(|t| t.link == l).map(|t| t.cy).sum::<f64>();
    let at = |l: Residence| p.at(l).unwrap_or(0.0);
    let measured = |l: Residence| meas.get(&k.name, &m.name, simd, 1, l);
    Ok(ContributionRow {
        kernel: k.name.clone(),
        label: k.display_name().to_string(),
        machine: m.name.clone(),
        simd,
        t_ol_cy: c.t_ol_cy,
        t_nol_cy: c.t_nol_cy,
        l1l2_cy: link(Link::L1L2),
        l2l3_cy: m.has_l3().then(|| link(Link::L2L3)),
        mem_cy: c.memory_cy(),
        pred_l1_cy: at(Residence::L1),
        pred_l2_cy: at(Residence::L2),
        pred_l3_cy: p.at(Residence::L3),
        pred_mem_cy: at(Residence::Mem),
        n_s: p.n_s.to_string(),
        meas_l2_cy: measured(Residence::L2),
        meas_l3_cy: measured(Residence::L3),
        meas_mem_cy: measured(Residence::Mem),
    })
}

fn split_simds(k: &KernelSpec, m: &MachineModel) -> Vec<SimdLevel> {
    k.simd_levels(&m.name)
        .into_iter()
        .filter(|&s| m.supports(s) && k.timing_for(&m.name, s).is_ok_and(|t| t.has_split()))
        .collect()
}

fn contribution_table(cx: &Context, kernel: &str) -> Result<String, CliError> {
    let k = cx.kernel(kernel)?;
    let mut rows = Vec::new();
    for m in &cx.machines {
        let meas = cx.runtimes(&format!("{}_measurements.csv", m.name));
        for simd in split_simds(k, m) {
            rows.push(contribution_row(k, m, simd, &meas)?);
        }
    }
    csv_rows(&rows)
}

#[derive(Serialize)]
struct FullSocketRow {
    kernel: String,
    label: String,
    simd: SimdLevel,
    serial_pred_cy: f64,
    serial_meas_cy: Option<f64>,
    threads: usize,
    full_socket_pred_cy: f64,
    full_socket_meas_cy: Option<f64>,
}

fn full_socket_table(cx: &Context, m: &MachineModel) -> Result<String, CliError> {
    let meas = cx.runtimes(&format!("tab_{}.csv", m.name));
    let mut rows = Vec::new();
    for wk in &cx.mix {
        let k = &wk.kernel;
        for simd in k.simd_levels(&m.name).into_iter().filter(|&s| m.supports(s)) {
            let p = predict(k, m, simd, Residence::Mem)?;
            rows.push(FullSocketRow {
                kernel: k.name.clone(),
                label: k.display_name().to_string(),
                simd,
                serial_pred_cy: p.serial_cy(),
                serial_meas_cy: meas.get(&k.name, &m.name, simd, 1, Residence::Mem),
                threads: m.n_cores,
                full_socket_pred_cy: p.multicore(m.n_cores)?,
                full_socket_meas_cy: meas.get(&k.name, &m.name, simd, m.n_cores, Residence::Mem),
            });
        }
    }
    csv_rows(&rows)
}

#[derive(Serialize)]
struct VolumeRow {
    kernel: String,
    machine: String,
    scenario: &'static str,
    pred_b: f64,
    meas_b: Option<f64>,
}

fn volume_table(cx: &Context) -> Result<String, CliError> {
    let mut measured: BTreeMap<(String, String), f64> = BTreeMap::new();
    for r in cx.files.values().flatten() {
        if let (Some(m), Some(v), None) = (&r.machine, r.mem_b_per_it, r.cy_per_it_median) {
            measured.entry((r.kernel.clone(), m.clone())).or_insert(v);
        }
    }
    let mut rows = Vec::new();
    for k in cx.fx.kernels.values() {
        for m in &cx.machines {
            let meas = measured.get(&(k.name.clone(), m.name.clone())).copied();
            if meas.is_none() && k.name != SPIKE {
                continue;
            }
            rows.push(VolumeRow {
                kernel: k.name.clone(),
                machine: m.name.clone(),
                scenario: "regular",
                pred_b: traffic(k).total_b(),
                meas_b: meas,
            });
            if k.random_access_count.is_some() {
                rows.push(VolumeRow {
                    kernel: k.name.clone(),
                    machine: m.name.clone(),
                    scenario: "worst_case_random",
                    pred_b: worst_case_random_traffic(k, m.cache_line_b)?.total_b(),
                    meas_b: None,
                });
            }
        }
    }
    csv_rows(&rows)
}

#[derive(Serialize)]
struct DeliveryRow {
    scenario: String,
    machine: String,
    threads: usize,
    pred_cy: f64,
    meas_cy: Option<f64>,
    effective_mem_bw_gbs: f64,
    known_discrepancy: bool,
}

fn delivery_table(cx: &Context) -> Result<String, CliError> {
    let k = cx.kernel(SPIKE)?;
    let mut rows = Vec::new();
    for m in &cx.machines {
        let meas = cx.runtimes(&format!("{}_measurements.csv", m.name));
        for (mode, pseudo) in [
            (ScenarioMode::BestCase, SPIKE_BEST_CASE),
            (ScenarioMode::WorstCase, SPIKE_WORST_CASE),
        ] {
            let s = LatencyScenario::for_kernel(k, m, mode)?;
            let mut threads: Vec<usize> = meas
                .0
                .keys()
                .filter(|key| key.0 == pseudo && key.1 == m.name)
                .map(|key| key.3)
                .collect();
            if threads.is_empty() {
                threads = vec![1, m.n_cores];
            }
            threads.sort();
            threads.dedup();
            for n in threads {
                rows.push(DeliveryRow {
                    scenario: mode.to_string(),
                    machine: m.name.clone(),
                    threads: n,
                    pred_cy: spike_delivery_parallel(&s, m, n)?,
                    meas_cy: meas.get(pseudo, &m.name, SimdLevel::Scalar, n, Residence::Mem),
                    effective_mem_bw_gbs: s.effective_mem_bw_gbs,
                    known_discrepancy: s.known_discrepancy,
                });
            }
        }
        if let Ok(adjusted) = adjusted_worst_case(k, m) {
            rows.push(DeliveryRow {
                scenario: "worst_case_adjusted".into(),
                machine: m.name.clone(),
                threads: 1,
                pred_cy: adjusted,
                meas_cy: meas.get(SPIKE_WORST_CASE, &m.name, SimdLevel::Scalar, 1, Residence::Mem),
                effective_mem_bw_gbs: m.mem_bw_gbs,
                known_discrepancy: false,
            });
        }
    }
    csv_rows(&rows)
}

fn vector_simds(m: &MachineModel) -> Vec<SimdLevel> {
    SimdLevel::ALL
        .into_iter()
        .filter(|&s| s != SimdLevel::Scalar && m.supports(s))
        .collect()
}

/// Vector levels for which every kernel of the mix has a prediction.
fn mix_simds(cx: &Context, m: &MachineModel) -> Vec<SimdLevel> {
    vector_simds(m)
        .into_iter()
        .filter(|&s| cx.mix.iter().all(|wk| predict(&wk.kernel, m, s, Residence::Mem).is_ok()))
        .collect()
}

#[derive(Serialize)]
struct SaturationRowOut {
    machine: String,
    simd: SimdLevel,
    freq_ghz: f64,
    cores: Option<usize>,
}

fn saturation_table(cx: &Context) -> Result<String, CliError> {
    let mut rows = Vec::new();
    for m in &cx.machines {
        let mut freqs = vec![m.core_freq_ghz, HIGH_CLOCK_GHZ];
        freqs.dedup();
        for simd in mix_simds(cx, m) {
            for r in saturation_sweep(&cx.mix, m, simd, &freqs, SATURATION_THRESHOLD)? {
                rows.push(SaturationRowOut {
                    machine: m.name.clone(),
                    simd,
                    freq_ghz: r.freq_ghz,
                    cores: r.cores,
                });
            }
        }
    }
    csv_rows(&rows)
}

#[derive(Serialize)]
struct PeakRow {
    machine: String,
    simd: SimdLevel,
    cores: usize,
    gflops: f64,
}

fn peak_table(cx: &Context) -> Result<String, CliError> {
    let mut rows = Vec::new();
    for m in &cx.machines {
        for simd in SimdLevel::ALL.into_iter().filter(|&s| m.supports(s)) {
            for cores in [1, m.n_cores] {
                rows.push(PeakRow {
                    machine: m.name.clone(),
                    simd,
                    cores,
                    gflops: peak_performance(m, simd, cores)?,
                });
            }
        }
    }
    csv_rows(&rows)
}

fn scaling_figure(cx: &Context, m: &MachineModel, simd: SimdLevel) -> Result<String, CliError> {
    let mut series = Vec::new();
    for wk in &cx.mix {
        let p = match predict(&wk.kernel, m, simd, Residence::Mem) {
            Ok(p) => Some(p),
            Err(ecmkit::Error::MissingTiming { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        series.push((wk.kernel.name.as_str(), p));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = std::iter::once("threads").chain(series.iter().map(|s| s.0)).collect();
    w.write_record(&header)?;
    for n in 1..=m.n_cores {
        let mut rec = vec![n.to_string()];
        for (_, p) in &series {
            rec.push(match p {
                Some(p) => p.multicore(n)?.to_string(),
                None => String::new(),
            });
        }
        w.write_record(&rec)?;
    }
    finish(w)
}

#[derive(Serialize)]
struct LinalgPoint {
    machine: String,
    threads: usize,
    pred_cy: f64,
    bottleneck_cy: f64,
}

fn linalg_figure(cx: &Context) -> Result<String, CliError> {
    let k = cx.kernel(LINALG)?;
    let mut rows = Vec::new();
    for m in &cx.machines {
        let p = predict(k, m, SimdLevel::Scalar, Residence::Mem)?;
        for n in 1..=m.n_cores {
            rows.push(LinalgPoint {
                machine: m.name.clone(),
                threads: n,
                pred_cy: p.multicore(n)?,
                bottleneck_cy: p.mem_bottleneck_cy,
            });
        }
    }
    csv_rows(&rows)
}

#[derive(Serialize)]
struct UtilizationPoint {
    threads: usize,
    utilization: f64,
}

fn utilization_figure(cx: &Context, m: &MachineModel, simd: SimdLevel) -> Result<String, CliError> {
    let curve = utilization_curve(Execution::default(), &cx.mix, m, simd)?;
    let rows: Vec<UtilizationPoint> = curve
        .into_iter()
        .enumerate()
        .map(|(i, u)| UtilizationPoint {
            threads: i + 1,
            utilization: u,
        })
        .collect();
    csv_rows(&rows)
}

fn render_all(cx: &Context) -> Result<Vec<(PathBuf, String)>, CliError> {
    let mut files = Vec::new();
    let table = |name: &str| PathBuf::from("tables").join(format!("{name}.csv"));
    let figure = |name: &str| PathBuf::from("figures").join(format!("{name}.csv"));
    for (name, kernel) in CONTRIBUTION_TABLES {
        files.push((table(name), contribution_table(cx, kernel)?));
    }
    for m in &cx.machines {
        files.push((table(&format!("tab_{}", m.name)), full_socket_table(cx, m)?));
    }
    files.push((table("tab_mem"), volume_table(cx)?));
    files.push((table("tab_linalg"), contribution_table(cx, LINALG)?));
    files.push((table("tab_delivery_ecm"), contribution_table(cx, SPIKE)?));
    files.push((table("tab_delivery"), delivery_table(cx)?));
    files.push((table("tab_satur_freq"), saturation_table(cx)?));
    files.push((table("tab_peak_perf"), peak_table(cx)?));
    for m in &cx.machines {
        let timed = |s: SimdLevel| cx.mix.iter().any(|wk| wk.kernel.timing_for(&m.name, s).is_ok());
        for simd in vector_simds(m).into_iter().filter(|&s| timed(s)) {
            files.push((
                figure(&format!("fig_scaling_{}_{}", m.name, simd)),
                scaling_figure(cx, m, simd)?,
            ));
        }
    }
    files.push((figure("fig_linalg"), linalg_figure(cx)?));
    for m in &cx.machines {
        for simd in mix_simds(cx, m) {
            files.push((
                figure(&format!("fig_satur_{}_{}", m.name, simd)),
                utilization_figure(cx, m, simd)?,
            ));
        }
    }
    Ok(files)
}

fn load_context(machine: &str) -> Result<Context, CliError> {
    let fx = FixtureSet::load_default()?;
    let machines = if machine == "both" {
        fx.machines.values().cloned().collect()
    } else {
        vec![fx.machine(machine)?.clone()]
    };
    let mix = fx.weighted_kernels()?;
    let mut files = BTreeMap::new();
    for path in fx.measurement_files()? {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        files.insert(name, ecmkit::load_measurements(&path)?);
    }
    Ok(Context {
        fx,
        machines,
        mix,
        files,
    })
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    let err = |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(err)?;
    }
    std::fs::write(path, contents).map_err(err)
}

pub fn write_report(machine: &str, out: &Path) -> Result<String, CliError> {
    let cx = load_context(machine)?;
    let files = render_all(&cx)?;
    let mut listing = String::new();
    for (rel, contents) in &files {
        write(&out.join(rel), contents)?;
        listing.push_str(&format!("{}\n", rel.display()));
    }
    Ok(listing)
}
