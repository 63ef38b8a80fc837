//! CSV and JSON writers. Floats use Rust's shortest round-trip formatting,
//! so identical inputs always give identical bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use jumplq::{Matrix, TimeGrid, Vector};
use serde::Serialize;

use crate::Failure;

pub fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, Failure> {
    let file = File::create(path).map_err(|e| Failure::output(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file)))
}

fn finish(mut w: csv::Writer<BufWriter<File>>, path: &Path) -> Result<(), Failure> {
    w.flush().map_err(|e| Failure::output(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Failure {
    Failure::Output(format!("{}: {e}", path.display()))
}

/// Rows `k,t,<name>_i_j...`, entries flattened row-major.
// Shortest round-trip form; negative zero prints as 0.
fn num(x: f64) -> String {
    (x + 0.0).to_string()
}

pub fn write_matrix_series(path: &Path, name: &str, grid: &TimeGrid, mats: &[Matrix]) -> Result<(), Failure> {
    let mut w = csv_writer(path)?;
    let (r, c) = mats.first().map_or((0, 0), |m| m.shape());
    let mut header = vec!["k".to_string(), "t".into()];
    for i in 0..r {
        header.extend((0..c).map(|j| format!("{name}_{i}_{j}")));
    }
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (k, m) in mats.iter().enumerate() {
        let mut row = vec![k.to_string(), grid.t(k).to_string()];
        for i in 0..r {
            row.extend((0..c).map(|j| num(m[(i, j)])));
        }
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    finish(w, path)
}

/// Rows `k,t,<name>_i...`.
pub fn write_vector_series(path: &Path, name: &str, grid: &TimeGrid, vecs: &[Vector]) -> Result<(), Failure> {
    let mut w = csv_writer(path)?;
    let n = vecs.first().map_or(0, Vector::len);
    let mut header = vec!["k".to_string(), "t".into()];
    header.extend((0..n).map(|i| format!("{name}_{i}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (k, v) in vecs.iter().enumerate() {
        let mut row = vec![k.to_string(), grid.t(k).to_string()];
        row.extend(v.iter().map(|&x| num(x)));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    finish(w, path)
}

pub fn write_costs(path: &Path, costs: &[f64]) -> Result<(), Failure> {
    let mut w = csv_writer(path)?;
    w.write_record(["path", "cost"]).map_err(|e| csv_err(path, e))?;
    for (i, c) in costs.iter().enumerate() {
        w.write_record([i.to_string(), num(*c)]).map_err(|e| csv_err(path, e))?;
    }
    finish(w, path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let file = File::create(path).map_err(|e| Failure::output(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Failure::Output(format!("{}: {e}", path.display())))?;
    out.write_all(b"\n").map_err(|e| Failure::output(path, e))?;
    out.flush().map_err(|e| Failure::output(path, e))
}

/// Reads a gain path in the layout of [`write_matrix_series`].
pub fn read_matrix_series(path: &Path, rows: usize, cols: usize, grid: &TimeGrid) -> Result<Vec<Matrix>, Failure> {
    let bad = |msg: String| Failure::Parse(format!("{}: {msg}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let mut out = Vec::with_capacity(grid.steps + 1);
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 2 + rows * cols {
            return Err(bad(format!(
                "row {line} has {} fields, expected {}",
                rec.len(),
                2 + rows * cols
            )));
        }
        let k: usize = rec[0].trim().parse().map_err(|_| bad(format!("row {line}: bad index `{}`", &rec[0])))?;
        if k != line {
            return Err(bad(format!("row {line} has index {k}")));
        }
        let vals = rec
            .iter()
            .skip(2)
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad(format!("row {line}: bad number `{s}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(Matrix::from_row_slice(rows, cols, &vals));
    }
    if out.len() != grid.steps + 1 {
        return Err(bad(format!("{} rows, expected {}", out.len(), grid.steps + 1)));
    }
    Ok(out)
}

/// Decimal rendering with 12 significant digits; scientific outside
/// `[1e-5, 1e12)`.
pub fn sig12(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0.00000000000".into();
    }
    let sci = format!("{v:.11e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..12).contains(&exp) {
        return sci;
    }
    let (sign, mant) = mant.strip_prefix('-').map_or(("", mant), |m| ("-", m));
    let digits: String = mant.chars().filter(char::is_ascii_digit).collect();
    let body = if exp >= 0 {
        let point = exp as usize + 1;
        let (int, frac) = digits.split_at(point);
        if frac.is_empty() {
            int.to_string()
        } else {
            format!("{int}.{frac}")
        }
    } else {
        format!("0.{}{digits}", "0".repeat((-exp - 1) as usize))
    };
    format!("{sign}{body}")
}

#[cfg(test)]
mod tests {
    use super::sig12;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(sig12(0.5), "0.500000000000");
        assert_eq!(sig12(12.0), "12.0000000000");
        assert_eq!(sig12(-0.0123456789012345), "-0.0123456789012");
        assert_eq!(sig12(9.99999999999999), "10.0000000000");
        assert_eq!(sig12(123456789012.4), "123456789012");
        assert_eq!(sig12(1e-7), "1.00000000000e-7");
        assert_eq!(sig12(0.0), "0.00000000000");
    }
}
