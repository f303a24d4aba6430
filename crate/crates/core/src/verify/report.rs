use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Deviations at or below this count as agreement regardless of scale.
pub const ABS_FLOOR: f64 = 1e-12;

/// Configuration echo: ordered `key → value` strings.
pub type ConfigEcho = BTreeMap<String, String>;

pub fn echo(preset: &str, grid: &TimeGrid, seed: Option<u64>) -> ConfigEcho {
    let mut c = ConfigEcho::new();
    c.insert("preset".into(), preset.into());
    c.insert("T".into(), format!("{}", grid.horizon()));
    c.insert("N".into(), grid.steps().to_string());
    c.insert("L".into(), grid.delay_steps().to_string());
    if let Some(s) = seed {
        c.insert("seed".into(), s.to_string());
    }
    c
}

fn nan_for_null<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    #[serde(deserialize_with = "nan_for_null")]
    pub lhs: f64,
    #[serde(deserialize_with = "nan_for_null")]
    pub rhs: f64,
    #[serde(deserialize_with = "nan_for_null")]
    pub abs_dev: f64,
    #[serde(deserialize_with = "nan_for_null")]
    pub rel_dev: f64,
    #[serde(deserialize_with = "nan_for_null")]
    pub tol: f64,
    pub pass: bool,
    pub config: ConfigEcho,
}

pub fn rel_dev(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs).abs() / 1f64.max(lhs.abs()).max(rhs.abs())
}

impl CheckReport {
    fn raw(check: impl Into<String>, lhs: f64, rhs: f64, tol: f64, pass: bool, config: &ConfigEcho) -> Self {
        Self {
            check: check.into(),
            lhs,
            rhs,
            abs_dev: (lhs - rhs).abs(),
            rel_dev: rel_dev(lhs, rhs),
            tol,
            pass,
            config: config.clone(),
        }
    }

    /// `lhs = rhs` up to `tol` in relative deviation, or [`ABS_FLOOR`] absolutely.
    pub fn compare(check: impl Into<String>, lhs: f64, rhs: f64, tol: f64, config: &ConfigEcho) -> Self {
        let abs = (lhs - rhs).abs();
        let pass = rel_dev(lhs, rhs) <= tol || abs <= ABS_FLOOR;
        Self::raw(check, lhs, rhs, tol, pass, config)
    }

    /// `|lhs − rhs| ≤ tol`.
    pub fn compare_abs(check: impl Into<String>, lhs: f64, rhs: f64, tol: f64, config: &ConfigEcho) -> Self {
        let pass = (lhs - rhs).abs() <= tol;
        Self::raw(check, lhs, rhs, tol, pass, config)
    }

    /// `value ≤ limit`; `rhs` carries the limit.
    pub fn at_most(check: impl Into<String>, value: f64, limit: f64, config: &ConfigEcho) -> Self {
        Self::raw(check, value, limit, 0.0, value <= limit, config)
    }

    /// `value ≥ limit`; `rhs` carries the limit.
    pub fn at_least(check: impl Into<String>, value: f64, limit: f64, config: &ConfigEcho) -> Self {
        Self::raw(check, value, limit, 0.0, value >= limit, config)
    }

    /// `lo ≤ value ≤ hi`; `rhs` is the midpoint and `tol` the half-width.
    pub fn within(check: impl Into<String>, value: f64, lo: f64, hi: f64, config: &ConfigEcho) -> Self {
        let pass = lo <= value && value <= hi;
        Self::raw(check, value, 0.5 * (lo + hi), 0.5 * (hi - lo), pass, config)
    }

    pub fn flag(check: impl Into<String>, ok: bool, config: &ConfigEcho) -> Self {
        let v = if ok { 1.0 } else { 0.0 };
        Self::raw(check, v, 1.0, 0.0, ok, config)
    }
}

pub fn all_pass(reports: &[CheckReport]) -> bool {
    reports.iter().all(|r| r.pass)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

/// 17 significant digits; `null` (JSON) or empty (CSV) for non-finite values.
fn number(v: f64, json: bool) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if json {
        "null".into()
    } else {
        String::new()
    }
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

fn render_json(reports: &[CheckReport]) -> String {
    let mut out = String::from("[");
    for (k, r) in reports.iter().enumerate() {
        out.push_str(if k == 0 { "\n" } else { ",\n" });
        let config: Vec<String> = r
            .config
            .iter()
            .map(|(a, b)| format!("{}: {}", json_string(a), json_string(b)))
            .collect();
        let _ = write!(
            out,
            "  {{\"check\": {}, \"lhs\": {}, \"rhs\": {}, \"abs_dev\": {}, \"rel_dev\": {}, \"tol\": {}, \"pass\": {}, \"config\": {{{}}}}}",
            json_string(&r.check),
            number(r.lhs, true),
            number(r.rhs, true),
            number(r.abs_dev, true),
            number(r.rel_dev, true),
            number(r.tol, true),
            r.pass,
            config.join(", ")
        );
    }
    out.push_str(if reports.is_empty() { "]\n" } else { "\n]\n" });
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn render_csv(reports: &[CheckReport]) -> String {
    let mut out = String::from("check,lhs,rhs,abs_dev,rel_dev,tol,pass,config\n");
    for r in reports {
        let config: Vec<String> = r.config.iter().map(|(a, b)| format!("{a}={b}")).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            csv_field(&r.check),
            number(r.lhs, false),
            number(r.rhs, false),
            number(r.abs_dev, false),
            number(r.rel_dev, false),
            number(r.tol, false),
            r.pass,
            csv_field(&config.join(";"))
        );
    }
    out
}

pub fn render_report(reports: &[CheckReport], format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => render_json(reports),
        ReportFormat::Csv => render_csv(reports),
    }
}

pub fn emit_report(reports: &[CheckReport], format: ReportFormat, mut dest: impl Write) -> Result<()> {
    dest.write_all(render_report(reports, format).as_bytes())
        .and_then(|_| dest.flush())
        .map_err(|e| Error::Io(e.to_string()))
}

pub fn write_report(reports: &[CheckReport], format: ReportFormat, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    emit_report(reports, format, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ConfigEcho {
        echo("lq", &TimeGrid::new(1.0, 4, 0).unwrap(), Some(7))
    }

    #[test]
    fn empty_documents_are_valid() {
        let json = render_report(&[], ReportFormat::Json);
        assert_eq!(serde_json::from_str::<Vec<CheckReport>>(&json).unwrap(), vec![]);
        assert_eq!(render_report(&[], ReportFormat::Csv).lines().count(), 1);
    }

    #[test]
    fn json_round_trips() {
        let reports = vec![
            CheckReport::compare("a", 1.0 / 3.0, 1.0 / 3.0 + 1e-13, 1e-9, &cfg()),
            CheckReport::at_most("b", f64::NAN, 1.0, &cfg()),
        ];
        let back: Vec<CheckReport> = serde_json::from_str(&render_report(&reports, ReportFormat::Json)).unwrap();
        assert_eq!(back[0], reports[0]);
        assert!(back[1].lhs.is_nan() && !back[1].pass);
        assert!(back[0].pass);
    }

    #[test]
    fn csv_mirrors_json_columns() {
        let r = CheckReport::compare("x,y", 2.0, 1.0, 1e-9, &cfg());
        let csv = render_report(&[r], ReportFormat::Csv);
        let row = csv.lines().nth(1).unwrap();
        assert!(row.starts_with("\"x,y\",2.0000000000000000e0,1.0000000000000000e0,"));
        assert!(row.ends_with(",false,L=0;N=4;T=1;preset=lq;seed=7"));
    }

    #[test]
    fn pass_rules() {
        let c = cfg();
        assert!(CheckReport::compare("z", 0.0, 5e-13, 1e-20, &c).pass);
        assert!(!CheckReport::compare("z", 1.0, 1.1, 1e-3, &c).pass);
        assert!(CheckReport::within("w", 0.2, 0.15, 0.4, &c).pass);
        assert!(!CheckReport::at_most("m", 2.0, 1.0, &c).pass);
    }
}
