//! Regret divided by `ln t`, ready for any plotting tool.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use crate::table::{column, read_table, write_table, Column};

/// One `R(t)/ln t` series.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub run: String,
    pub definition: &'static str,
    pub t: Vec<f64>,
    pub value: Vec<f64>,
}

/// Reads every `*/regret.csv` under `dir`, writes `plot.csv` next to each and
/// a combined long-format `plot.csv` in `dir`. Slots with `t < 2` are skipped.
pub fn cmd_plotdata(dir: &Path) -> Result<Vec<Series>> {
    let mut runs: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot read {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("regret.csv").is_file())
        .collect();
    runs.sort();
    if runs.is_empty() {
        bail!("no */regret.csv under {}", dir.display());
    }
    let mut all = Vec::new();
    for run in runs {
        let name = run.file_name().and_then(|n| n.to_str()).unwrap_or("run").to_string();
        let cols = read_table(&run.join("regret.csv"))?;
        let t = column(&cols, "t").context("regret.csv has no t column")?;
        let keep: Vec<usize> = (0..t.len()).filter(|&i| t[i] >= 2.0).collect();
        let times: Vec<f64> = keep.iter().map(|&i| t[i]).collect();
        let mut out = vec![Column::new("t", times.clone())];
        for (src, definition) in [
            ("regret_mean", "basic"),
            ("regret_cost_mean", "with_costs"),
            ("bound", "bound"),
            ("bound_cost", "bound_with_costs"),
        ] {
            let Some(values) = column(&cols, src) else { continue };
            let ratio: Vec<f64> = keep.iter().map(|&i| values[i] / t[i].ln()).collect();
            out.push(Column::new(format!("{definition}_over_log_t"), ratio.clone()));
            all.push(Series {
                run: name.clone(),
                definition,
                t: times.clone(),
                value: ratio,
            });
        }
        write_table(&run.join("plot.csv"), &out)?;
    }
    write_long(&dir.join("plot.csv"), &all)?;
    Ok(all)
}

fn write_long(path: &Path, series: &[Series]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(["run", "definition", "t", "regret_over_log_t"])?;
    for s in series {
        for (t, v) in s.t.iter().zip(&s.value) {
            w.write_record([
                s.run.as_str(),
                s.definition,
                &crate::table::format_value(*t),
                &crate::table::format_value(*v),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
