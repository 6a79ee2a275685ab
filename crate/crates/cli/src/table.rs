//! Columnar CSV files with a one-line header. Floats are written with 17
//! significant digits so that reading and rewriting a file reproduces it.

use std::path::Path;

use anyhow::{bail, Context, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
}

impl Column {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }
}

pub fn format_value(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:.16e}")
    }
}

pub fn write_table(path: &Path, columns: &[Column]) -> Result<()> {
    let rows = columns.first().map_or(0, |c| c.values.len());
    if columns.iter().any(|c| c.values.len() != rows) {
        bail!("columns of {} have different lengths", path.display());
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(columns.iter().map(|c| c.name.as_str()))?;
    for r in 0..rows {
        w.write_record(columns.iter().map(|c| format_value(c.values[r])))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_table(path: &Path) -> Result<Vec<Column>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut columns: Vec<Column> = r.headers()?.iter().map(|h| Column::new(h, Vec::new())).collect();
    for record in r.records() {
        let record = record?;
        for (col, field) in columns.iter_mut().zip(record.iter()) {
            let v: f64 = field
                .parse()
                .with_context(|| format!("{}: bad number {field:?} in column {}", path.display(), col.name))?;
            col.values.push(v);
        }
    }
    Ok(columns)
}

pub fn column<'a>(columns: &'a [Column], name: &str) -> Option<&'a [f64]> {
    columns.iter().find(|c| c.name == name).map(|c| c.values.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_round_trip() {
        for x in [0.1 + 0.2, 1.0 / 3.0, 5e5, -2.5e-300, 0.0, 123456789.0] {
            let s = format_value(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            assert_eq!(format_value(s.parse().unwrap()), s);
        }
    }
}
