//! Report rows, their CSV and JSON forms, and file output.
//!
//! Floats are serialized with 17 significant digits so emit-then-parse
//! reproduces every value bit for bit; column order is fixed by the header
//! constants.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bounds::fmt_g17;
use crate::harness::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        })
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown format {other:?} (expected csv or json)")),
        }
    }
}

pub const TAIL_HEADER: &str = "n,delta,quantile,be02,fv18,main,main_vacuous,trials,seed";
pub const EXCESS_HEADER: &str = "n,delta,quantile,reference,fitted_c,trials,seed";

/// One (sample size, tail level) cell of a tail experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub n: usize,
    pub delta: f64,
    /// Empirical upper quantile of the estimation error at level `delta`.
    pub quantile: f64,
    pub be02: f64,
    pub fv18: f64,
    pub main: f64,
    pub main_vacuous: bool,
    pub trials: usize,
    pub seed: u64,
}

impl TailRow {
    /// Binomial standard error of the frequency with which trials exceed a
    /// level-`delta` bound: `sqrt(delta (1 - delta) / trials)`.
    pub fn exceedance_std_error(&self) -> f64 {
        (self.delta * (1.0 - self.delta) / self.trials as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TailReport {
    pub rows: Vec<TailRow>,
}

/// One (sample size, tail level) cell of an excess-loss experiment, with
/// the `ln(n/delta)/sqrt(n)` reference value and the constant fitted to
/// that curve across sample sizes at the same level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcessRow {
    pub n: usize,
    pub delta: f64,
    pub quantile: f64,
    pub reference: f64,
    pub fitted_c: f64,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExcessReport {
    pub rows: Vec<ExcessRow>,
}

fn split_line<'a>(
    line: &'a str,
    want: usize,
    line_no: usize,
) -> Result<Vec<&'a str>, HarnessError> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() == want {
        Ok(fields)
    } else {
        Err(HarnessError::Parse {
            reason: format!(
                "line {line_no}: expected {want} fields, found {}",
                fields.len()
            ),
        })
    }
}

fn parse_field<T: FromStr>(text: &str, what: &str, line_no: usize) -> Result<T, HarnessError>
where
    T::Err: fmt::Display,
{
    text.parse().map_err(|e| HarnessError::Parse {
        reason: format!("line {line_no}: bad {what} {text:?}: {e}"),
    })
}

fn check_header(text: &str, header: &str) -> Result<(), HarnessError> {
    match text.lines().next() {
        Some(first) if first == header => Ok(()),
        Some(first) => Err(HarnessError::Parse {
            reason: format!("unexpected header {first:?}"),
        }),
        None => Err(HarnessError::Parse {
            reason: "empty input".into(),
        }),
    }
}

impl TailReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TAIL_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.n,
                fmt_g17(r.delta),
                fmt_g17(r.quantile),
                fmt_g17(r.be02),
                fmt_g17(r.fv18),
                fmt_g17(r.main),
                r.main_vacuous,
                r.trials,
                r.seed
            )
            .expect("write to string");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, HarnessError> {
        check_header(text, TAIL_HEADER)?;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            let line_no = i + 1;
            let f = split_line(line, 9, line_no)?;
            rows.push(TailRow {
                n: parse_field(f[0], "n", line_no)?,
                delta: parse_field(f[1], "delta", line_no)?,
                quantile: parse_field(f[2], "quantile", line_no)?,
                be02: parse_field(f[3], "be02", line_no)?,
                fv18: parse_field(f[4], "fv18", line_no)?,
                main: parse_field(f[5], "main", line_no)?,
                main_vacuous: parse_field(f[6], "main_vacuous", line_no)?,
                trials: parse_field(f[7], "trials", line_no)?,
                seed: parse_field(f[8], "seed", line_no)?,
            });
        }
        Ok(Self { rows })
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Json => self.to_json(),
        }
    }
}

impl ExcessReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(EXCESS_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.n,
                fmt_g17(r.delta),
                fmt_g17(r.quantile),
                fmt_g17(r.reference),
                fmt_g17(r.fitted_c),
                r.trials,
                r.seed
            )
            .expect("write to string");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, HarnessError> {
        check_header(text, EXCESS_HEADER)?;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            let line_no = i + 1;
            let f = split_line(line, 7, line_no)?;
            rows.push(ExcessRow {
                n: parse_field(f[0], "n", line_no)?,
                delta: parse_field(f[1], "delta", line_no)?,
                quantile: parse_field(f[2], "quantile", line_no)?,
                reference: parse_field(f[3], "reference", line_no)?,
                fitted_c: parse_field(f[4], "fitted_c", line_no)?,
                trials: parse_field(f[5], "trials", line_no)?,
                seed: parse_field(f[6], "seed", line_no)?,
            });
        }
        Ok(Self { rows })
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Json => self.to_json(),
        }
    }
}

/// Write `text` to `path`, tagging failures with the path.
pub fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}
