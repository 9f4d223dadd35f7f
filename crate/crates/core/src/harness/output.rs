//! CSV and JSON writers. Floats are rounded to 9 significant digits and
//! printed in their shortest form; missing values are empty CSV fields
//! and JSON `null`.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use super::campaign::CampaignSummary;
use super::run::{FixRecord, RunResult};
use crate::error::{Error, Result};
use crate::localization::DopCell;

pub const SIG_DIGITS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// From the file extension; anything but `.json` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

/// `x` rounded to [`SIG_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIG_DIGITS - 1, x).parse().unwrap_or(x)
}

pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        let r = round_sig(x);
        // `{}` never uses exponents; switch for very small or large values
        let a = r.abs();
        if a != 0.0 && !(1e-6..1e15).contains(&a) {
            format!("{r:e}")
        } else {
            format!("{r}")
        }
    } else {
        String::new()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

fn round_json(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64() {
                if let Some(r) = serde_json::Number::from_f64(round_sig(x)) {
                    *n = r;
                }
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_json),
        Value::Object(o) => o.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Pretty JSON with rounded floats and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value).map_err(|e| Error::Config(format!("serialization failed: {e}")))?;
    round_json(&mut v);
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::Config(format!("serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub const FIX_COLUMNS: &[&str] = &[
    "burst", "t_s", "truth_x_m", "truth_y_m", "truth_z_m", "beacons_heard",
];

const STAGE_COLUMNS: &[&str] = &[
    "x_m", "y_m", "z_m", "err_x_m", "err_y_m", "err_z_m", "err_xy_m", "err_3d_m", "residual_m", "gdop",
];

pub fn fix_header() -> Vec<String> {
    let mut h: Vec<String> = FIX_COLUMNS.iter().map(|s| s.to_string()).collect();
    for n in 1..=3 {
        h.extend(STAGE_COLUMNS.iter().map(|c| format!("stage{n}_{c}")));
    }
    h
}

fn fix_row(r: &FixRecord) -> Vec<String> {
    let mut row = vec![
        r.burst.to_string(),
        fmt_float(r.t_s),
        fmt_float(r.truth_m.x),
        fmt_float(r.truth_m.y),
        fmt_float(r.truth_m.z),
        r.beacons_heard.to_string(),
    ];
    for f in [&r.stage1, &r.stage2, &r.stage3] {
        match f {
            Some(f) => row.extend([
                fmt_float(f.xyz_m.x),
                fmt_float(f.xyz_m.y),
                fmt_float(f.xyz_m.z),
                fmt_float(f.error_m.x),
                fmt_float(f.error_m.y),
                fmt_float(f.error_m.z),
                fmt_float(f.error_xy_m),
                fmt_float(f.error_3d_m),
                fmt_float(f.residual_m),
                opt(f.gdop),
            ]),
            None => row.extend(std::iter::repeat_n(String::new(), STAGE_COLUMNS.len())),
        }
    }
    row
}

fn csv_text(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

/// Per-fix CSV, one row per burst.
pub fn run_csv(result: &RunResult) -> String {
    csv_text(&fix_header(), result.records.iter().map(fix_row))
}

pub fn summary_header() -> Vec<String> {
    [
        "snr_db", "stage", "trials", "fixes", "unavailable", "mean_abs_x_m", "mean_abs_y_m", "mean_abs_z_m",
        "mean_xy_m", "mean_3d_m", "se_3d_m", "p95_3d_m",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

pub fn campaign_csv(summary: &CampaignSummary) -> String {
    let rows = summary.rows.iter().map(|r| {
        vec![
            fmt_float(r.snr_db),
            r.stage.number().to_string(),
            r.trials.to_string(),
            r.fixes.to_string(),
            r.unavailable.to_string(),
            fmt_float(r.mean_abs_x_m),
            fmt_float(r.mean_abs_y_m),
            fmt_float(r.mean_abs_z_m),
            fmt_float(r.mean_xy_m),
            fmt_float(r.mean_3d_m),
            fmt_float(r.se_3d_m),
            fmt_float(r.p95_3d_m),
        ]
    });
    csv_text(&summary_header(), rows)
}

pub fn dop_csv<'a>(cells: impl IntoIterator<Item = &'a DopCell>) -> String {
    let header: Vec<String> = ["x", "y", "z", "hdop", "vdop", "gdop", "category"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows = cells.into_iter().map(|c| {
        let mut row = vec![fmt_float(c.xyz_m.x), fmt_float(c.xyz_m.y), fmt_float(c.xyz_m.z)];
        match &c.dop {
            Some(d) => row.extend([
                fmt_float(d.hdop),
                fmt_float(d.vdop),
                fmt_float(d.gdop),
                d.category.as_str().to_string(),
            ]),
            None => row.extend(["".into(), "".into(), "".into(), "singular".into()]),
        }
        row
    });
    csv_text(&header, rows)
}

/// Writes `text`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes a run as per-fix CSV or as the full JSON document.
pub fn emit_results(result: &RunResult, format: Format, path: &Path) -> Result<()> {
    if let Some(burst) = first_non_finite(result) {
        return Err(Error::Domain(format!("non-finite value in the fix for burst {burst}")));
    }
    let text = match format {
        Format::Csv => run_csv(result),
        Format::Json => to_json(result)?,
    };
    write_text(path, &text)
}

fn first_non_finite(result: &RunResult) -> Option<usize> {
    result.records.iter().find_map(|r| {
        let mut vals = vec![r.t_s, r.truth_m.x, r.truth_m.y, r.truth_m.z];
        for f in [&r.stage1, &r.stage2, &r.stage3].into_iter().flatten() {
            vals.extend(f.xyz_m.iter().chain(f.error_m.iter()));
            vals.extend([f.error_xy_m, f.error_3d_m, f.residual_m]);
        }
        vals.iter().any(|v| !v.is_finite()).then_some(r.burst)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_keeps_nine_digits() {
        assert_eq!(round_sig(1.234567891234), 1.23456789);
        assert_eq!(round_sig(-0.000123456789987), -0.00012345679);
        assert_eq!(fmt_float(0.1 + 0.2), "0.3");
        assert_eq!(fmt_float(1e-9), "1e-9");
        assert_eq!(fmt_float(f64::NAN), "");
        let x = 3.141592653589793_f64;
        let back: f64 = fmt_float(x).parse().unwrap();
        assert!(((back - x) / x).abs() < 5e-9);
    }

    #[test]
    fn json_rounds_nested_numbers() {
        let v = serde_json::json!({"a": [1.0000000001, 2], "b": {"c": 0.1234567891}});
        let s = to_json(&v).unwrap();
        assert!(s.ends_with('\n'));
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["a"][0], 1.0);
        assert_eq!(back["a"][1], 2);
        assert_eq!(back["b"]["c"], 0.123456789);
    }
}
