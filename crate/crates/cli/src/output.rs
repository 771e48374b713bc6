//! Machine-readable records and their text, JSON and CSV forms.

use ecmkit::notation::format_value;
use ecmkit::{EcmContribution, EcmPrediction, PredictionBasis, Residence, SaturationPoint, SimdLevel, WorkRate};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CY_PER_IT: &str = "cy/it";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    pub machine: String,
    pub kernel: String,
    pub simd: SimdLevel,
    pub residence: Residence,
    pub threads: Option<usize>,
    pub freq_ghz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub link: String,
    pub level: Residence,
    pub cy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionRecord {
    pub t_ol_cy: f64,
    pub t_nol_cy: f64,
    pub links: Vec<LinkRecord>,
    pub unit: String,
}

impl From<&EcmContribution> for ContributionRecord {
    fn from(c: &EcmContribution) -> Self {
        ContributionRecord {
            t_ol_cy: c.t_ol_cy,
            t_nol_cy: c.t_nol_cy,
            links: c
                .links
                .iter()
                .map(|l| LinkRecord {
                    link: l.link.to_string(),
                    level: l.level,
                    cy: l.cy,
                })
                .collect(),
            unit: CY_PER_IT.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelValue {
    pub level: Residence,
    pub cy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub threads: usize,
    pub cy_per_it: f64,
    pub work_rate: Option<WorkRate>,
}

/// Everything one `predict` or `scale` invocation computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub command: String,
    pub inputs: Inputs,
    pub contribution: Option<ContributionRecord>,
    pub prediction: Vec<LevelValue>,
    pub basis: PredictionBasis,
    pub mem_bottleneck_cy: f64,
    pub n_s: SaturationPoint,
    pub unit: String,
    pub scaling: Vec<ScalingRow>,
}

impl OutputRecord {
    pub fn new(command: &str, inputs: Inputs, c: Option<&EcmContribution>, p: &EcmPrediction) -> Self {
        OutputRecord {
            command: command.into(),
            inputs,
            contribution: c.map(ContributionRecord::from),
            prediction: p.levels.iter().map(|&(level, cy)| LevelValue { level, cy }).collect(),
            basis: p.basis,
            mem_bottleneck_cy: p.mem_bottleneck_cy,
            n_s: p.n_s,
            unit: CY_PER_IT.into(),
            scaling: Vec::new(),
        }
    }

    /// Long-form CSV, one quantity per row.
    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["quantity", "level", "value", "unit"])?;
        let mut row = |q: &str, level: &str, v: String, unit: &str| w.write_record([q, level, &v, unit]);
        if let Some(c) = &self.contribution {
            row("t_ol", "", c.t_ol_cy.to_string(), CY_PER_IT)?;
            row("t_nol", "", c.t_nol_cy.to_string(), CY_PER_IT)?;
            for l in &c.links {
                row(&l.link, l.level.as_str(), l.cy.to_string(), CY_PER_IT)?;
            }
        }
        for p in &self.prediction {
            row("prediction", p.level.as_str(), p.cy.to_string(), CY_PER_IT)?;
        }
        row("mem_bottleneck", "", self.mem_bottleneck_cy.to_string(), CY_PER_IT)?;
        row("n_s", "", self.n_s.to_string(), "cores")?;
        for s in &self.scaling {
            let level = s.threads.to_string();
            row("multicore", &level, s.cy_per_it.to_string(), CY_PER_IT)?;
            if let Some(r) = &s.work_rate {
                row("work_rate", &level, r.per_second.to_string(), &format!("{}/s", r.unit))?;
            }
        }
        finish(w)
    }
}

pub fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, CliError> {
    let bytes = w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Usage(e.to_string()))
}

/// Serde rows as CSV with a header line.
pub fn csv_rows<T: Serialize>(rows: &[T]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    finish(w)
}

pub fn json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Whitespace-aligned text table.
pub fn text_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

pub fn one_decimal(x: f64) -> String {
    format_value(x, 1)
}
