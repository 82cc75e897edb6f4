//! Renderer-agnostic plot scripts for trajectory CSVs.
//!
//! Script format (`.plot`, line oriented, `#` starts a comment):
//!
//! ```text
//! data "<csv path>"             # the trajectory the script reads
//! x <column>                    # shared x axis (always `step`)
//! floor <value>                 # values below are drawn at this floor on log axes
//! figure <id> "<title>"         # starts a figure; following lines belong to it
//! yscale log|linear
//! series <column> <solid|dashed> <color index> "<label>"
//! pinned <column>               # series that never leaves the floor
//! end                           # closes the figure
//! ```
//!
//! Figures: `singular_values` (σ_w[k] solid and half_sum_sv[k] dashed with a
//! shared color per k), `layer_extremes` (sig_max, sig_min) and `main_term`
//! (main_sv_min). Only columns present in the CSV header are referenced;
//! a figure with no available columns is omitted.

use std::fmt::Write as _;

use crate::{LabError, LabResult};

/// Log-axis floor; a series entirely below it is reported as pinned.
pub const LOG_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub header: Vec<String>,
    /// `None` for absent (`NA`) cells.
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Trajectory {
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn has(&self, name: &str) -> bool {
        self.header.iter().any(|h| h == name)
    }
}

/// Parses a trajectory CSV (metadata lines starting with `#` are skipped).
pub fn parse_trajectory(text: &str) -> LabResult<Trajectory> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| LabError::MalformedCsv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.first().map(String::as_str) != Some("step") {
        return Err(LabError::MalformedCsv("first column must be `step`".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| LabError::MalformedCsv(format!("row {}: {e}", i + 1)))?;
        let row = rec
            .iter()
            .map(|cell| match cell {
                "NA" => Ok(None),
                c => c
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| LabError::MalformedCsv(format!("row {}: bad number `{c}`", i + 1))),
            })
            .collect::<LabResult<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(LabError::MalformedCsv("trajectory has no rows".into()));
    }
    Ok(Trajectory { header, rows })
}

/// `half_sum_sv_*` columns whose every present value lies below `floor`.
pub fn pinned_columns(traj: &Trajectory, floor: f64) -> Vec<String> {
    traj.header
        .iter()
        .filter(|h| h.starts_with("half_sum_sv_"))
        .filter(|h| {
            let col = traj.column(h).unwrap_or_default();
            let present: Vec<f64> = col.into_iter().flatten().collect();
            !present.is_empty() && present.iter().all(|&v| v.abs() < floor)
        })
        .cloned()
        .collect()
}

fn indexed(traj: &Trajectory, prefix: &str) -> Vec<(usize, String)> {
    traj.header
        .iter()
        .filter_map(|h| {
            h.strip_prefix(prefix)
                .and_then(|k| k.parse::<usize>().ok())
                .map(|k| (k, h.clone()))
        })
        .collect()
}

/// Builds the plot script for the trajectory in `csv_text`, which the
/// script refers to as `csv_path`.
pub fn emit_plot_script(csv_text: &str, csv_path: &str) -> LabResult<String> {
    let traj = parse_trajectory(csv_text)?;
    let pinned = pinned_columns(&traj, LOG_FLOOR);
    let mut s = String::new();
    let _ = writeln!(s, "# dmf-lab plot script v1");
    let _ = writeln!(s, "data \"{csv_path}\"");
    let _ = writeln!(s, "x step");
    let _ = writeln!(s, "floor {LOG_FLOOR:e}");

    let sw = indexed(&traj, "sigma_w_");
    let hs = indexed(&traj, "half_sum_sv_");
    if !sw.is_empty() || !hs.is_empty() {
        let _ = writeln!(s, "figure singular_values \"log singular values of Sigma_w and (U+V)Sigma_w/2\"");
        let _ = writeln!(s, "yscale log");
        for (k, col) in &sw {
            let _ = writeln!(s, "series {col} solid {k} \"sigma_w[{k}]\"");
        }
        for (k, col) in &hs {
            let _ = writeln!(s, "series {col} dashed {k} \"half_sum_sv[{k}]\"");
        }
        for col in &pinned {
            let _ = writeln!(s, "pinned {col}");
        }
        let _ = writeln!(s, "end");
    }
    let extremes: Vec<&str> = ["sig_max", "sig_min"].into_iter().filter(|c| traj.has(c)).collect();
    if !extremes.is_empty() {
        let _ = writeln!(s, "figure layer_extremes \"log extreme singular values of the layers\"");
        let _ = writeln!(s, "yscale log");
        for (k, col) in extremes.iter().enumerate() {
            let _ = writeln!(s, "series {col} solid {k} \"{col}\"");
        }
        let _ = writeln!(s, "end");
    }
    if traj.has("main_sv_min") {
        let _ = writeln!(s, "figure main_term \"log sigma_min of the Hermitian main term\"");
        let _ = writeln!(s, "yscale log");
        let _ = writeln!(s, "series main_sv_min solid 0 \"main_sv_min\"");
        let _ = writeln!(s, "end");
    }
    Ok(s)
}

/// Columns referenced by `series`/`pinned`/`x` lines of a script.
pub fn referenced_columns(script: &str) -> Vec<String> {
    script
        .lines()
        .filter_map(|l| {
            let mut it = l.split_whitespace();
            match it.next() {
                Some("series") | Some("pinned") | Some("x") => it.next().map(str::to_string),
                _ => None,
            }
        })
        .collect()
}
