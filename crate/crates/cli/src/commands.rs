use std::path::{Path, PathBuf};

use ecmkit::fixtures::FIXTURES_ENV;
use ecmkit::notation::{render, render_prediction};
use ecmkit::{
    compose, contributions, load_kernel, load_machine, load_measurements, predict as model_predict, rescale_frequency,
    saturation_sweep, validate as score, verify_fixtures, work_rate, CatalogPredictor, EcmContribution,
    EcmPrediction, FixtureSet, KernelSpec, MachineModel, Residence, SaturationPoint, SimdLevel, WeightedKernel,
};
use serde::{Deserialize, Serialize};

use crate::output::{csv_rows, json, one_decimal, text_table, Inputs, OutputRecord, ScalingRow};
use crate::{CliError, Format, Target};

fn fixture_path(kind: &str, name: &str, ext: &str) -> PathBuf {
    FixtureSet::default_dir().join(kind).join(format!("{name}.{ext}"))
}

/// A file path if one exists, otherwise a bundled fixture of that name.
fn locate(arg: &str, kind: &str, ext: &str) -> Result<PathBuf, CliError> {
    let direct = Path::new(arg);
    if direct.is_file() {
        return Ok(direct.to_path_buf());
    }
    let bundled = fixture_path(kind, arg, ext);
    if bundled.is_file() {
        return Ok(bundled);
    }
    Err(CliError::Usage(format!(
        "no {ext} file `{arg}` and no fixture {} (set {FIXTURES_ENV} to change the fixture directory)",
        bundled.display()
    )))
}

pub fn resolve_machine(arg: &str) -> Result<MachineModel, CliError> {
    Ok(load_machine(locate(arg, "machines", "machine")?)?)
}

pub fn resolve_kernel(arg: &str) -> Result<KernelSpec, CliError> {
    Ok(load_kernel(locate(arg, "kernels", "kernel")?)?)
}

fn machine_at(arg: &str, freq: Option<f64>) -> Result<MachineModel, CliError> {
    let m = resolve_machine(arg)?;
    Ok(match freq {
        Some(f) => rescale_frequency(&m, f)?,
        None => m,
    })
}

struct Evaluated {
    machine: MachineModel,
    kernel: KernelSpec,
    contribution: Option<EcmContribution>,
    prediction: EcmPrediction,
}

fn evaluate(t: &Target, residence: Residence) -> Result<Evaluated, CliError> {
    let machine = machine_at(&t.machine, t.freq)?;
    let kernel = resolve_kernel(&t.kernel)?;
    machine.ensure_supports(t.simd)?;
    let contribution = if kernel.timing_for(&machine.name, t.simd)?.has_split() {
        Some(contributions(&kernel, &machine, t.simd, residence)?)
    } else {
        None
    };
    let prediction = match &contribution {
        Some(c) => compose(c),
        None => model_predict(&kernel, &machine, t.simd, residence)?,
    };
    Ok(Evaluated {
        machine,
        kernel,
        contribution,
        prediction,
    })
}

fn record(command: &str, e: &Evaluated, simd: SimdLevel, residence: Residence, threads: Option<usize>) -> OutputRecord {
    OutputRecord::new(
        command,
        Inputs {
            machine: e.machine.name.clone(),
            kernel: e.kernel.name.clone(),
            simd,
            residence,
            threads,
            freq_ghz: e.machine.core_freq_ghz,
        },
        e.contribution.as_ref(),
        &e.prediction,
    )
}

fn saturation_text(p: &EcmPrediction, m: &MachineModel) -> String {
    match p.n_s {
        SaturationPoint::Cores(n) if n > m.n_cores => format!(
            "would saturate at {n} cores, more than the {} available",
            m.n_cores
        ),
        SaturationPoint::Cores(n) => format!(
            "saturates at {n} cores (memory bound {} cy/it)",
            one_decimal(p.mem_bottleneck_cy)
        ),
        SaturationPoint::Never => "no saturation".into(),
    }
}

pub fn predict(t: &Target, residence: Residence, format: Format) -> Result<String, CliError> {
    let e = evaluate(t, residence)?;
    match format {
        Format::Table => {
            let tuple = match &e.contribution {
                Some(c) => render(c),
                None => format!("{} (serial in-memory value)", render_prediction(&e.prediction)),
            };
            Ok(format!("{tuple}\n{}\n", saturation_text(&e.prediction, &e.machine)))
        }
        Format::Json => json(&record("predict", &e, t.simd, residence, None)),
        Format::Csv => record("predict", &e, t.simd, residence, None).to_csv(),
    }
}

#[derive(Debug, Serialize)]
struct ScaleCsvRow {
    threads: usize,
    cy_per_it: f64,
    work_rate_per_s: Option<f64>,
    work_unit: Option<String>,
}

pub fn scale(
    t: &Target,
    residence: Residence,
    threads: Option<usize>,
    with_rate: bool,
    format: Format,
) -> Result<String, CliError> {
    let e = evaluate(t, residence)?;
    let max = threads.unwrap_or(e.machine.n_cores);
    if max < 1 || max > e.machine.n_cores {
        return Err(CliError::Usage(format!(
            "--threads must lie within 1..={} for {}",
            e.machine.n_cores, e.machine.name
        )));
    }
    let mut rows = Vec::with_capacity(max);
    for n in 1..=max {
        let cy = e.prediction.multicore(n)?;
        let rate = if with_rate {
            Some(work_rate(cy, &e.machine, &e.kernel.work_unit)?)
        } else {
            None
        };
        rows.push(ScalingRow {
            threads: n,
            cy_per_it: cy,
            work_rate: rate,
        });
    }
    match format {
        Format::Table => {
            let mut header = vec!["threads", "cy/it"];
            let unit = format!("G{}/s", e.kernel.work_unit);
            if with_rate {
                header.push(&unit);
            }
            let cells: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    let mut v = vec![r.threads.to_string(), one_decimal(r.cy_per_it)];
                    if let Some(w) = &r.work_rate {
                        v.push(format!("{:.3}", w.giga()));
                    }
                    v
                })
                .collect();
            Ok(format!("{}{}\n", text_table(&header, &cells), saturation_text(&e.prediction, &e.machine)))
        }
        Format::Json => {
            let mut rec = record("scale", &e, t.simd, residence, Some(max));
            rec.scaling = rows;
            json(&rec)
        }
        Format::Csv => csv_rows(
            &rows
                .into_iter()
                .map(|r| ScaleCsvRow {
                    threads: r.threads,
                    cy_per_it: r.cy_per_it,
                    work_rate_per_s: r.work_rate.as_ref().map(|w| w.per_second),
                    work_unit: r.work_rate.map(|w| w.unit),
                })
                .collect::<Vec<_>>(),
        ),
    }
}

#[derive(Debug, Deserialize)]
struct WeightRow {
    kernel: String,
    weight: f64,
}

/// Kernel mix from a `kernel,weight` CSV, or the bundled default.
pub fn kernel_mix(path: Option<&Path>) -> Result<Vec<WeightedKernel>, CliError> {
    let Some(path) = path else {
        return Ok(FixtureSet::load_default()?.weighted_kernels()?);
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for row in rdr.deserialize::<WeightRow>() {
        let row = row.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        out.push(WeightedKernel {
            kernel: resolve_kernel(&row.kernel)?,
            weight: row.weight,
        });
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct SaturationOut {
    machine: String,
    simd: SimdLevel,
    freq_ghz: f64,
    threshold: f64,
    cores: Option<usize>,
}

pub fn saturate(
    machine: &str,
    kernel_set: Option<&Path>,
    simd: SimdLevel,
    freqs: &[f64],
    threshold: f64,
    format: Format,
) -> Result<String, CliError> {
    let m = resolve_machine(machine)?;
    m.ensure_supports(simd)?;
    let mix = kernel_mix(kernel_set)?;
    let rows: Vec<SaturationOut> = saturation_sweep(&mix, &m, simd, freqs, threshold)?
        .into_iter()
        .map(|r| SaturationOut {
            machine: m.name.clone(),
            simd,
            freq_ghz: r.freq_ghz,
            threshold,
            cores: r.cores,
        })
        .collect();
    match format {
        Format::Table => {
            let cells: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        format!("{}", r.freq_ghz),
                        r.cores.map_or_else(|| "no saturation".to_string(), |n| n.to_string()),
                    ]
                })
                .collect();
            Ok(text_table(&["freq_ghz", "cores"], &cells))
        }
        Format::Json => json(&rows),
        Format::Csv => csv_rows(&rows),
    }
}

#[derive(Debug, Serialize)]
struct ValidationOut {
    row: usize,
    kernel: String,
    machine: Option<String>,
    simd: Option<SimdLevel>,
    threads: Option<usize>,
    residence: Option<Residence>,
    kind: String,
    predicted: f64,
    measured: f64,
    rel_error: f64,
    classification: String,
    flagged: bool,
}

pub fn validate(
    machine: Option<&str>,
    measurements: &Path,
    kernels: &[String],
    format: Format,
) -> Result<String, CliError> {
    let mut records = load_measurements(measurements)?;
    let machines = match machine {
        Some(arg) => {
            let m = resolve_machine(arg)?;
            records.retain(|r| r.machine.as_deref().is_none_or(|n| n == m.name));
            vec![m]
        }
        None => FixtureSet::load_default()?.machines.into_values().collect(),
    };
    let kernels: Vec<KernelSpec> = if kernels.is_empty() {
        FixtureSet::load_default()?.kernels.into_values().collect()
    } else {
        kernels.iter().map(|k| resolve_kernel(k)).collect::<Result<_, _>>()?
    };
    let report = score(&records, &CatalogPredictor::new(machines, kernels))?;
    match format {
        Format::Json => json(&report),
        Format::Csv => csv_rows(
            &report
                .rows
                .iter()
                .map(|r| ValidationOut {
                    row: r.record.row,
                    kernel: r.record.kernel.clone(),
                    machine: r.record.machine.clone(),
                    simd: r.record.simd,
                    threads: r.record.threads,
                    residence: r.record.residence,
                    kind: format!("{:?}", r.kind).to_lowercase(),
                    predicted: r.predicted,
                    measured: r.measured,
                    rel_error: r.rel_error,
                    classification: r.classification.to_string(),
                    flagged: r.flagged,
                })
                .collect::<Vec<_>>(),
        ),
        Format::Table => {
            let dash = || "-".to_string();
            let cells: Vec<Vec<String>> = report
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.record.kernel.clone(),
                        r.record.machine.clone().unwrap_or_else(dash),
                        r.record.simd.map_or_else(dash, |s| s.to_string()),
                        r.record.threads.map_or_else(dash, |t| t.to_string()),
                        r.record.residence.map_or_else(dash, |l| l.to_string()),
                        one_decimal(r.predicted),
                        one_decimal(r.measured),
                        format!("{:+.1}%", r.rel_error * 100.0),
                        r.classification.to_string(),
                        if r.flagged { "*".into() } else { String::new() },
                    ]
                })
                .collect();
            let mut out = text_table(
                &["kernel", "machine", "simd", "threads", "level", "pred", "meas", "error", "class", "flag"],
                &cells,
            );
            for (class, err) in &report.median_abs_error_by_class {
                out.push_str(&format!("median |error| {class}: {:.1}%\n", err * 100.0));
            }
            out.push_str(&format!(
                "{} of {} rows flagged\n",
                report.flagged().count(),
                report.rows.len()
            ));
            Ok(out)
        }
    }
}

pub fn verify() -> Result<String, CliError> {
    let fx = FixtureSet::load_default()?;
    let report = verify_fixtures(&fx)?;
    let checked = report.checked;
    report.into_result()?;
    let root = fx.root.canonicalize().unwrap_or(fx.root);
    Ok(format!("{}: {checked} values match\n", root.display()))
}
