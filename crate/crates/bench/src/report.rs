//! Aggregate report type and its JSON / CSV / Markdown renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use demorph_core::iqa::SsimParams;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Significant digits kept for reals in emitted reports.
pub const REPORT_DIGITS: usize = 9;

pub const TMR_POPULATION: &str =
    "pooled: two matched-pair genuine scores and two gallery impostor scores per morph, one shared threshold";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportParams {
    pub tau: f64,
    pub theta: Option<f64>,
    pub epsilon: Option<f64>,
    pub fmr: f64,
    pub ssim: SsimParams,
    pub allow_negative_b: bool,
    pub bw_normalize: bool,
    pub tmr_population: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionRates {
    /// Fraction of morphs whose outputs satisfy `B(o1, o2) < theta`.
    pub dissimilar: f64,
    /// Fraction of morphs whose outputs each match a ground truth above epsilon.
    pub aligned: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    pub morph_id: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset_name: String,
    pub matcher_name: String,
    pub n_morphs: usize,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub ra: f64,
    pub tmr_at_fmr: f64,
    pub target_fmr: f64,
    pub achieved_fmr: f64,
    pub threshold: f64,
    pub bw_ssim: f64,
    pub bw_psnr: f64,
    /// BW divided by 2; not part of the metric definition, a reading aid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bw_ssim_normalized: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bw_psnr_normalized: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditions: Option<ConditionRates>,
    pub params: ReportParams,
    #[serde(default)]
    pub rejects: Vec<Reject>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!(
                "unknown report format `{other}` (json, csv, markdown)"
            )),
        }
    }
}

/// Rounds to `digits` significant decimal digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x)
        .parse()
        .unwrap_or(x)
}

/// Shortest decimal text of `x` after rounding to the report precision.
pub fn format_real(x: f64) -> String {
    let r = round_sig(x, REPORT_DIGITS);
    if r == r.trunc() && r.abs() < 1e15 {
        format!("{r:.1}")
    } else {
        format!("{r}")
    }
}

fn round_value(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Number(n) if n.is_f64() => {
            let r = round_sig(n.as_f64().unwrap_or_default(), REPORT_DIGITS);
            if let Some(num) = serde_json::Number::from_f64(r) {
                *n = num;
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(round_value),
        serde_json::Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Canonical JSON: sorted keys, reals rounded to nine significant digits,
/// pretty-printed with a trailing newline. Equal inputs give equal bytes.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)
        .map_err(|e| HarnessError::Validation(format!("report serialization: {e}")))?;
    round_value(&mut v);
    // serde_json's Map is ordered by key unless `preserve_order` is enabled
    let mut s = serde_json::to_string_pretty(&v)
        .map_err(|e| HarnessError::Validation(format!("report serialization: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json(text: &str) -> Result<MetricsReport> {
    serde_json::from_str(text).map_err(|e| HarnessError::Validation(format!("report JSON: {e}")))
}

const CSV_HEADER: [&str; 14] = [
    "dataset",
    "matcher",
    "n_morphs",
    "mean_psnr",
    "mean_ssim",
    "restoration_accuracy",
    "tmr_at_fmr",
    "target_fmr",
    "achieved_fmr",
    "threshold",
    "bw_ssim",
    "bw_psnr",
    "bw_ssim_normalized",
    "bw_psnr_normalized",
];

/// One row per (dataset, matcher).
pub fn to_csv(reports: &[MetricsReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| HarnessError::Validation(format!("CSV: {e}"));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in reports {
        let opt = |v: Option<f64>| v.map(format_real).unwrap_or_default();
        w.write_record([
            r.dataset_name.clone(),
            r.matcher_name.clone(),
            r.n_morphs.to_string(),
            format_real(r.mean_psnr),
            format_real(r.mean_ssim),
            format_real(r.ra),
            format_real(r.tmr_at_fmr),
            format_real(r.target_fmr),
            format_real(r.achieved_fmr),
            format_real(r.threshold),
            format_real(r.bw_ssim),
            format_real(r.bw_psnr),
            opt(r.bw_ssim_normalized),
            opt(r.bw_psnr_normalized),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| HarnessError::Validation(format!("CSV: {e}")))?;
    String::from_utf8(bytes).map_err(|e| HarnessError::Validation(format!("CSV: {e}")))
}

/// Parsed CSV row: every column by header name.
pub fn read_csv_rows(text: &str) -> Result<Vec<BTreeMap<String, String>>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let csv_err = |e: csv::Error| HarnessError::Validation(format!("CSV: {e}"));
    let headers = r.headers().map_err(csv_err)?.clone();
    r.records()
        .map(|rec| {
            let rec = rec.map_err(csv_err)?;
            Ok(headers
                .iter()
                .zip(rec.iter())
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect())
        })
        .collect()
}

type CellFn = Box<dyn Fn(&MetricsReport) -> String>;

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

/// Grid shaped like the usual demorphing results table: one row per dataset,
/// per-matcher column groups for restoration accuracy, TMR and BW.
pub fn to_markdown(reports: &[MetricsReport]) -> String {
    let matchers: Vec<&str> = {
        let mut m: Vec<&str> = reports.iter().map(|r| r.matcher_name.as_str()).collect();
        m.sort_unstable();
        m.dedup();
        m
    };
    let mut datasets: Vec<&str> = Vec::new();
    for r in reports {
        if !datasets.contains(&r.dataset_name.as_str()) {
            datasets.push(&r.dataset_name);
        }
    }
    let fmr = reports.first().map(|r| r.target_fmr).unwrap_or(0.1);
    let normalized = reports.iter().any(|r| r.bw_ssim_normalized.is_some());

    let mut groups: Vec<String> = vec![
        "Rest. Acc".into(),
        format!("TMR @ {} FMR", pct(fmr)),
        "BW(SSIM)".into(),
        "BW(PSNR)".into(),
    ];
    if normalized {
        groups.push("BW(SSIM)/2 [normalized]".into());
        groups.push("BW(PSNR)/2 [normalized]".into());
    }
    let mut header = String::from("| Dataset | PSNR/SSIM |");
    for g in &groups {
        for m in &matchers {
            let _ = write!(header, " {g} ({m}) |");
        }
    }
    let columns = 2 + groups.len() * matchers.len();
    let mut out = header;
    out.push('\n');
    out.push('|');
    out.push_str(&" --- |".repeat(columns));
    out.push('\n');

    for d in datasets {
        let rows: Vec<&MetricsReport> = reports.iter().filter(|r| r.dataset_name == d).collect();
        let first = rows[0];
        let _ = write!(
            out,
            "| {d} | {:.2}/{:.2} |",
            first.mean_psnr, first.mean_ssim
        );
        let cell = |m: &str, f: &dyn Fn(&MetricsReport) -> String| {
            rows.iter()
                .find(|r| r.matcher_name == m)
                .map(|r| f(r))
                .unwrap_or_else(|| "-".into())
        };
        let mut cells: Vec<CellFn> = vec![
            Box::new(|r| pct(r.ra)),
            Box::new(|r| pct(r.tmr_at_fmr)),
            Box::new(|r| format!("{:.2}", r.bw_ssim)),
            Box::new(|r| format!("{:.2}", r.bw_psnr)),
        ];
        if normalized {
            cells.push(Box::new(|r| {
                r.bw_ssim_normalized
                    .map_or("-".into(), |v| format!("{v:.2}"))
            }));
            cells.push(Box::new(|r| {
                r.bw_psnr_normalized
                    .map_or("-".into(), |v| format!("{v:.2}"))
            }));
        }
        for f in &cells {
            for m in &matchers {
                let _ = write!(out, " {} |", cell(m, f.as_ref()));
            }
        }
        out.push('\n');
    }
    out
}

pub fn render(reports: &[MetricsReport], format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => match reports {
            [single] => to_canonical_json(single),
            many => to_canonical_json(&many),
        },
        ReportFormat::Csv => to_csv(reports),
        ReportFormat::Markdown => Ok(to_markdown(reports)),
    }
}
