use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::training::Method;

/// One trained-and-evaluated sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub noise_rate: f64,
    pub seed: u64,
    pub method: Method,
    pub accuracy: f64,
    pub f1_pos: f64,
    pub f1_neg: f64,
    /// Seconds; 0 unless wall-time recording was requested.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResultFormat {
    Csv,
    Json,
}

impl FromStr for ResultFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown result format `{other}` (expected csv or json)")),
        }
    }
}

/// `x` rounded to 6 significant digits, without trailing zeros.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let decimals = (5 - x.abs().log10().floor() as i32).max(0) as usize;
    let s = format!("{:.*}", decimals, round_sig6(x));
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// `x` rounded to 6 significant digits.
pub fn round_sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

fn sorted(results: &[SweepResult]) -> Vec<SweepResult> {
    let mut out = results.to_vec();
    out.sort_by(|a, b| a.noise_rate.total_cmp(&b.noise_rate).then(a.method.cmp(&b.method)).then(a.seed.cmp(&b.seed)));
    out
}

pub const RESULT_COLUMNS: &str = "noise_rate,seed,method,accuracy,f1_pos,f1_neg,wall_time";

pub fn format_results(results: &[SweepResult], format: ResultFormat) -> String {
    let rows = sorted(results);
    match format {
        ResultFormat::Csv => {
            let mut s = format!("{RESULT_COLUMNS}\n");
            for r in &rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    sig6(r.noise_rate),
                    r.seed,
                    r.method,
                    sig6(r.accuracy),
                    sig6(r.f1_pos),
                    sig6(r.f1_neg),
                    sig6(r.wall_time)
                );
            }
            s
        }
        ResultFormat::Json => {
            let rounded: Vec<SweepResult> = rows
                .into_iter()
                .map(|r| SweepResult {
                    noise_rate: round_sig6(r.noise_rate),
                    accuracy: round_sig6(r.accuracy),
                    f1_pos: round_sig6(r.f1_pos),
                    f1_neg: round_sig6(r.f1_neg),
                    wall_time: round_sig6(r.wall_time),
                    ..r
                })
                .collect();
            let mut s = serde_json::to_string_pretty(&rounded).expect("results serialize");
            s.push('\n');
            s
        }
    }
}

pub fn emit_results(results: &[SweepResult], path: &Path, format: ResultFormat) -> Result<(), EvalError> {
    std::fs::write(path, format_results(results, format)).map_err(|source| EvalError::Io { path: path.to_path_buf(), source })
}

pub fn parse_json_results(text: &str) -> Result<Vec<SweepResult>, serde_json::Error> {
    serde_json::from_str(text)
}

/// Mean and population standard deviation of accuracy per (rate, method).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub noise_rate: f64,
    pub method: Method,
    pub runs: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_f1_pos: f64,
    pub mean_f1_neg: f64,
}

pub fn summarize(results: &[SweepResult]) -> Vec<SummaryRow> {
    let rows = sorted(results);
    let mut out: Vec<SummaryRow> = Vec::new();
    for group in rows.chunk_by(|a, b| a.noise_rate == b.noise_rate && a.method == b.method) {
        let n = group.len() as f64;
        let mean = |f: fn(&SweepResult) -> f64| group.iter().map(f).sum::<f64>() / n;
        let acc = mean(|r| r.accuracy);
        let var = group.iter().map(|r| (r.accuracy - acc).powi(2)).sum::<f64>() / n;
        out.push(SummaryRow {
            noise_rate: group[0].noise_rate,
            method: group[0].method,
            runs: group.len(),
            mean_accuracy: acc,
            std_accuracy: var.sqrt(),
            mean_f1_pos: mean(|r| r.f1_pos),
            mean_f1_neg: mean(|r| r.f1_neg),
        });
    }
    out
}

/// Mean accuracy for one (rate, method), if present.
pub fn mean_accuracy(summary: &[SummaryRow], noise_rate: f64, method: Method) -> Option<f64> {
    summary.iter().find(|r| r.method == method && (r.noise_rate - noise_rate).abs() < 1e-12).map(|r| r.mean_accuracy)
}
