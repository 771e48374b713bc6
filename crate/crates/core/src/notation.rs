//! ASCII rendering of contribution and prediction tuples:
//! `{T_OL || T_nOL | T_L1L2 | T_L2L3 | T_L3Mem}` and `{T_L1 ] T_L2 ] T_L3 ] T_Mem}`.
//!
//! Each link term is rounded on its own (half to even), and the displayed
//! predictions are composed from the rounded terms so that a printed tuple
//! always adds up.

use crate::ecm::{EcmContribution, EcmPrediction};

pub fn round_half_even(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (x * scale).round_ties_even() / scale
}

/// Fixed-point text with at least one decimal; extra trailing zeros are dropped.
pub fn format_value(x: f64, decimals: u32) -> String {
    let mut s = format!("{:.*}", decimals as usize, round_half_even(x, decimals));
    if decimals > 1 {
        while s.ends_with('0') && s.len() - s.find('.').unwrap_or(s.len()) > 2 {
            s.pop();
        }
    }
    if s == "-0.0" {
        s.remove(0);
    }
    s
}

/// Values as they appear in a rendered tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplayTuple {
    pub decimals: u32,
    pub t_ol: f64,
    pub t_nol: f64,
    /// One combined transfer term per level below L1.
    pub terms: Vec<f64>,
    /// One prediction per level, L1 first.
    pub predictions: Vec<f64>,
}

/// Two decimals once any nonzero term drops below one cycle, one otherwise.
fn precision(c: &EcmContribution) -> u32 {
    let smallest = [c.t_ol_cy, c.t_nol_cy]
        .into_iter()
        .chain(c.level_terms().into_iter().map(|(_, cy)| cy))
        .filter(|v| *v > 0.0)
        .fold(f64::INFINITY, f64::min);
    if smallest < 1.0 {
        2
    } else {
        1
    }
}

pub fn display_tuple(c: &EcmContribution) -> DisplayTuple {
    let d = precision(c);
    let r = |x: f64| round_half_even(x, d);
    let t_ol = r(c.t_ol_cy);
    let t_nol = r(c.t_nol_cy);
    let terms: Vec<f64> = c
        .levels
        .iter()
        .skip(1)
        .map(|&lvl| {
            c.links
                .iter()
                .filter(|l| l.level == lvl)
                .map(|l| r(l.cy))
                .sum::<f64>()
        })
        .map(r)
        .collect();
    let mut predictions = vec![t_ol.max(t_nol)];
    let mut data = t_nol;
    for t in &terms {
        data = r(data + t);
        predictions.push(t_ol.max(data));
    }
    DisplayTuple {
        decimals: d,
        t_ol,
        t_nol,
        terms,
        predictions,
    }
}

impl DisplayTuple {
    pub fn contribution_text(&self) -> String {
        let f = |x: f64| format_value(x, self.decimals);
        let mut s = format!("{{{} || {}", f(self.t_ol), f(self.t_nol));
        for t in &self.terms {
            s.push_str(" | ");
            s.push_str(&f(*t));
        }
        s.push('}');
        s
    }

    pub fn prediction_text(&self) -> String {
        bracket(&self.predictions, self.decimals)
    }
}

/// `{a ] b ] c}`.
pub fn bracket(values: &[f64], decimals: u32) -> String {
    let parts: Vec<String> = values.iter().map(|v| format_value(*v, decimals)).collect();
    format!("{{{}}}", parts.join(" ] "))
}

/// Full line: `{contributions} -> {predictions} cy/it`.
pub fn render(c: &EcmContribution) -> String {
    let t = display_tuple(c);
    format!("{} -> {} cy/it", t.contribution_text(), t.prediction_text())
}

/// Prediction tuple alone, one decimal, for predictions without a contribution split.
pub fn render_prediction(p: &EcmPrediction) -> String {
    let values: Vec<f64> = p.levels.iter().map(|l| l.1).collect();
    format!("{} cy/it", bracket(&values, 1))
}
