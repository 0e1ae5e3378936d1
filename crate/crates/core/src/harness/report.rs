//! Aggregation of a finished run directory into summary tables.

use std::fmt::Write as _;
use std::path::Path;

use super::io::{cell, csv_error};
use super::run::RunManifest;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct InitRow {
    pub index: usize,
    pub stop: String,
    pub iterations: usize,
    pub final_misfit: Option<f64>,
    pub final_rel_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub rows: Vec<InitRow>,
    /// `(min, median, max)` of the final relative error over initializations
    /// that produced at least one iterate.
    pub rel_error: Option<(f64, f64, f64)>,
    pub misfit: Option<(f64, f64, f64)>,
}

pub fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    })
}

fn spread(v: &[f64]) -> Option<(f64, f64, f64)> {
    let m = median(v)?;
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some((lo, m, hi))
}

/// Last row of an `iterations.csv`.
fn last_iteration(path: &Path) -> Result<Option<(usize, f64, Option<f64>)>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    let mut last = None;
    for rec in r.records() {
        let rec = rec.map_err(csv_error)?;
        let num = |k: usize| -> Result<Option<f64>> {
            let s = rec.get(k).unwrap_or("");
            if s.is_empty() {
                return Ok(None);
            }
            s.parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("{}: bad number {s:?}", path.display())))
        };
        let iter = rec
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Config(format!("{}: bad iteration index", path.display())))?;
        last = Some((iter, num(1)?.unwrap_or(f64::NAN), num(2)?));
    }
    Ok(last)
}

/// Reads the manifest and per-initialization CSVs of `dir`.
pub fn summarize(dir: &Path) -> Result<Summary> {
    let manifest = RunManifest::load(&dir.join("manifest.toml"))?;
    let mut rows = Vec::new();
    for init in &manifest.initializations {
        let path = dir
            .join(format!("init_{:02}", init.index))
            .join("iterations.csv");
        let last = last_iteration(&path)?;
        rows.push(InitRow {
            index: init.index,
            stop: init.stop.clone(),
            iterations: last.map_or(0, |l| l.0),
            final_misfit: last.map(|l| l.1),
            final_rel_error: last.and_then(|l| l.2),
        });
    }
    let errs: Vec<f64> = rows.iter().filter_map(|r| r.final_rel_error).collect();
    let mis: Vec<f64> = rows.iter().filter_map(|r| r.final_misfit).collect();
    Ok(Summary {
        rel_error: spread(&errs),
        misfit: spread(&mis),
        rows,
    })
}

impl Summary {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>5} {:>13} {:>6} {:>14} {:>14}",
            "init", "stop", "iters", "misfit", "rel_error"
        );
        for r in &self.rows {
            let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6e}"));
            let _ = writeln!(
                s,
                "{:>5} {:>13} {:>6} {:>14} {:>14}",
                r.index,
                r.stop,
                r.iterations,
                f(r.final_misfit),
                f(r.final_rel_error)
            );
        }
        if let Some((lo, m, hi)) = self.rel_error {
            let _ = writeln!(
                s,
                "final relative error: min {lo:.6e}  median {m:.6e}  max {hi:.6e}"
            );
        }
        if let Some((lo, m, hi)) = self.misfit {
            let _ = writeln!(
                s,
                "final misfit:         min {lo:.6e}  median {m:.6e}  max {hi:.6e}"
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
        w.write_record([
            "init",
            "stop",
            "iterations",
            "final_misfit",
            "final_rel_error",
        ])
        .map_err(csv_error)?;
        for r in &self.rows {
            w.write_record([
                r.index.to_string(),
                r.stop.clone(),
                r.iterations.to_string(),
                cell(r.final_misfit),
                cell(r.final_rel_error),
            ])
            .map_err(csv_error)?;
        }
        for (name, k) in [("min", 0), ("median", 1), ("max", 2)] {
            let pick = |t: Option<(f64, f64, f64)>| t.map(|t| [t.0, t.1, t.2][k]);
            w.write_record([
                name.to_string(),
                String::new(),
                String::new(),
                cell(pick(self.misfit)),
                cell(pick(self.rel_error)),
            ])
            .map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Summarizes `dir`, writes `summary.csv` next to the manifest and returns
/// the printable table.
pub fn report(dir: &Path) -> Result<Summary> {
    let s = summarize(dir)?;
    s.write_csv(&dir.join("summary.csv"))?;
    Ok(s)
}
