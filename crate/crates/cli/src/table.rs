//! Numeric CSV tables: 17-significant-digit writing, reading, and comparison.

use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("incompatible tables: {0}")]
    Incompatible(String),
}

/// Column-major numeric table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

/// Shortest scientific form carrying 17 significant digits.
pub fn format_value(x: f64) -> String {
    format!("{x:.16e}")
}

impl Table {
    pub fn new(headers: Vec<String>, columns: Vec<Vec<f64>>) -> Self {
        debug_assert_eq!(headers.len(), columns.len());
        Self { headers, columns }
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.headers
            .iter()
            .position(|h| h == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn write(&self, path: &Path) -> Result<(), TableError> {
        let err = |source| TableError::Csv {
            path: path.display().to_string(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(&self.headers).map_err(err)?;
        for r in 0..self.n_rows() {
            w.write_record(self.columns.iter().map(|c| format_value(c[r])))
                .map_err(err)?;
        }
        w.flush().map_err(|e| err(e.into()))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, TableError> {
        let name = path.display().to_string();
        let err = |source| TableError::Csv {
            path: name.clone(),
            source,
        };
        let mut r = csv::Reader::from_path(path).map_err(err)?;
        let headers: Vec<String> = r
            .headers()
            .map_err(err)?
            .iter()
            .map(str::to_string)
            .collect();
        let mut columns = vec![Vec::new(); headers.len()];
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(err)?;
            for (j, field) in rec.iter().enumerate() {
                let x = field
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| TableError::Format {
                        path: name.clone(),
                        message: format!(
                            "row {}, column `{}`: `{field}` is not a number",
                            line + 1,
                            headers[j]
                        ),
                    })?;
                columns[j].push(x);
            }
        }
        Ok(Self { headers, columns })
    }
}

/// Max and mean absolute deviation of one shared column.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnDeviation {
    pub name: String,
    pub max_abs: f64,
    pub mean_abs: f64,
}

/// Linear interpolation of `(xs, ys)` at `x`; `xs` ascending and `x` inside its range.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let i = xs.partition_point(|&v| v < x);
    if i == 0 {
        return ys[0];
    }
    if i == xs.len() {
        return ys[i - 1];
    }
    let (x0, x1) = (xs[i - 1], xs[i]);
    ys[i - 1] + (ys[i] - ys[i - 1]) * (x - x0) / (x1 - x0)
}

/// Compares the columns two tables share, keyed on their first column.
///
/// Without `interpolate` the key columns must coincide; with it `b` is
/// linearly interpolated onto the keys of `a`, which must lie inside `b`'s range.
pub fn compare(
    a: &Table,
    b: &Table,
    interpolate_b: bool,
) -> Result<Vec<ColumnDeviation>, TableError> {
    let (Some(key_a), Some(key_b)) = (a.headers.first(), b.headers.first()) else {
        return Err(TableError::Incompatible("empty header".into()));
    };
    if key_a != key_b {
        return Err(TableError::Incompatible(format!(
            "key columns differ: `{key_a}` vs `{key_b}`"
        )));
    }
    let (ka, kb) = (&a.columns[0], &b.columns[0]);
    if interpolate_b {
        let (Some(&lo), Some(&hi)) = (kb.first(), kb.last()) else {
            return Err(TableError::Incompatible("second table has no rows".into()));
        };
        if kb.windows(2).any(|w| w[1] <= w[0]) {
            return Err(TableError::Incompatible(format!(
                "`{key_b}` is not strictly increasing in the second table"
            )));
        }
        if ka.iter().any(|&x| x < lo || x > hi) {
            return Err(TableError::Incompatible(format!(
                "`{key_a}` values fall outside the second table's range"
            )));
        }
    } else if ka.len() != kb.len()
        || ka
            .iter()
            .zip(kb)
            .any(|(x, y)| (x - y).abs() > 1e-12 * x.abs().max(1.0))
    {
        return Err(TableError::Incompatible(format!(
            "`{key_a}` values differ; pass --interpolate to resample"
        )));
    }
    let shared: Vec<&String> = a.headers[1..]
        .iter()
        .filter(|h| b.headers[1..].contains(h))
        .collect();
    if shared.is_empty() {
        return Err(TableError::Incompatible("no shared value columns".into()));
    }
    Ok(shared
        .into_iter()
        .map(|name| {
            let ya = a.column(name).unwrap();
            let yb = b.column(name).unwrap();
            let diffs: Vec<f64> = if interpolate_b {
                ka.iter()
                    .zip(ya)
                    .map(|(&x, &y)| (y - interpolate(kb, yb, x)).abs())
                    .collect()
            } else {
                ya.iter().zip(yb).map(|(x, y)| (x - y).abs()).collect()
            };
            let n = diffs.len().max(1) as f64;
            ColumnDeviation {
                name: name.clone(),
                max_abs: diffs.iter().copied().fold(0.0, f64::max),
                mean_abs: diffs.iter().sum::<f64>() / n,
            }
        })
        .collect())
}
