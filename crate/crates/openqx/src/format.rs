//! Number formatting shared by every artifact: 15 significant digits in
//! scientific notation, so columns are fixed-width and byte-stable.

use std::path::Path;
use std::str::FromStr;

use openqx_core::{CMat, C64};
use serde_json::{Map, Number, Value};

use crate::CliError;

pub fn fmt15(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    // Normalize −0 so sign noise never changes the bytes.
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.14e}")
}

/// A JSON number carrying the digits of [`fmt15`] (exponent written `e+N`); `null` when not
/// finite.
pub fn num(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    Value::Number(Number::from_str(&fmt15(x)).expect("formatted float is a JSON number"))
}

pub fn complex(z: C64) -> Value {
    Value::Array(vec![num(z.re), num(z.im)])
}

/// Row-major nested arrays of `[re, im]` pairs.
pub fn matrix(m: &CMat) -> Value {
    Value::Array((0..m.nrows()).map(|i| Value::Array((0..m.ncols()).map(|j| complex(m[(i, j)])).collect())).collect())
}

pub fn object<const N: usize>(fields: [(&str, Value); N]) -> Value {
    let mut map = Map::new();
    for (k, v) in fields {
        map.insert(k.to_string(), v);
    }
    Value::Object(map)
}

/// Column headers `prefix_ij_re, prefix_ij_im` in row-major order.
pub fn matrix_headers(prefix: &str, d: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(2 * d * d);
    for i in 0..d {
        for j in 0..d {
            out.push(format!("{prefix}_{i}{j}_re"));
            out.push(format!("{prefix}_{i}{j}_im"));
        }
    }
    out
}

pub fn matrix_cells(m: &CMat) -> Vec<String> {
    let mut out = Vec::with_capacity(2 * m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(fmt15(m[(i, j)].re));
            out.push(fmt15(m[(i, j)].im));
        }
    }
    out
}

/// Occupation label such as `1,0,2`.
pub fn label(counts: &[usize]) -> String {
    counts.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(",")
}

pub fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}
