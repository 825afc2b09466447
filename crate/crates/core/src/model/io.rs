//! JSON documents for signals and distributions.
//!
//! Numbers are written in shortest round-trip form, so loading a saved object reproduces it
//! bit for bit.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Distribution, Signal};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct BandDoc {
    pub ell: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Document {
    format_version: u32,
    kind: String,
    #[serde(rename = "L")]
    l_max: usize,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    shells: Option<usize>,
    bands: Vec<BandDoc>,
}

pub(crate) fn matrix_to_doc(ell: usize, m: &DMatrix<Complex64>) -> BandDoc {
    let rows = |f: fn(&Complex64) -> f64| (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| f(&m[(r, c)])).collect()).collect();
    BandDoc {
        ell,
        re: rows(|z| z.re),
        im: rows(|z| z.im),
    }
}

pub(crate) fn doc_to_matrix(ctx: &str, what: &str, b: &BandDoc, rows: usize, cols: usize) -> Result<DMatrix<Complex64>> {
    let bad = |field: &str, msg: String| Error::parse(ctx, format!("{what} field `{field}`: {msg}"));
    for (field, part) in [("re", &b.re), ("im", &b.im)] {
        if part.len() != rows {
            return Err(bad(field, format!("expected {rows} rows, found {}", part.len())));
        }
        for (i, row) in part.iter().enumerate() {
            if row.len() != cols {
                return Err(bad(field, format!("row {i} has {} entries, expected {cols}", row.len())));
            }
        }
    }
    Ok(DMatrix::from_fn(rows, cols, |r, c| Complex64::new(b.re[r][c], b.im[r][c])))
}

/// Parses JSON and checks the version and kind before any schema validation.
pub(crate) fn parse_header(ctx: &str, text: &str, kind: &str) -> Result<()> {
    let v: Value = serde_json::from_str(text).map_err(|e| Error::parse(ctx, e.to_string()))?;
    let version = v
        .get("format_version")
        .ok_or_else(|| Error::parse(ctx, "missing field `format_version`"))?
        .as_u64()
        .ok_or_else(|| Error::parse(ctx, "field `format_version` is not an unsigned integer"))?;
    if version != FORMAT_VERSION as u64 {
        return Err(Error::UnsupportedVersion {
            found: version as u32,
            expected: FORMAT_VERSION,
        });
    }
    let found = v
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::parse(ctx, "missing string field `kind`"))?;
    if found != kind {
        return Err(Error::parse(ctx, format!("field `kind` is \"{found}\", expected \"{kind}\"")));
    }
    Ok(())
}

/// Orders band documents by `ell`, requiring exactly one per band 0..=l_max.
pub(crate) fn collect_bands<'a>(ctx: &str, docs: &'a [BandDoc], l_max: usize) -> Result<Vec<&'a BandDoc>> {
    let mut slots: Vec<Option<&BandDoc>> = vec![None; l_max + 1];
    for d in docs {
        if d.ell > l_max {
            return Err(Error::parse(ctx, format!("band {} exceeds L = {l_max}", d.ell)));
        }
        if slots[d.ell].replace(d).is_some() {
            return Err(Error::parse(ctx, format!("band {} appears twice", d.ell)));
        }
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(l, s)| s.ok_or_else(|| Error::parse(ctx, format!("band {l} is missing"))))
        .collect()
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn signal_to_json(x: &Signal) -> String {
    let doc = Document {
        format_version: FORMAT_VERSION,
        kind: "signal".into(),
        l_max: x.l_max(),
        shells: Some(x.shells()),
        bands: x.bands().iter().enumerate().map(|(l, b)| matrix_to_doc(l, b)).collect(),
    };
    serde_json::to_string_pretty(&doc).expect("plain data serializes")
}

fn signal_from_json_ctx(ctx: &str, text: &str) -> Result<Signal> {
    parse_header(ctx, text, "signal")?;
    let doc: Document = serde_json::from_str(text).map_err(|e| Error::parse(ctx, e.to_string()))?;
    let r = doc.shells.ok_or_else(|| Error::parse(ctx, "missing field `R`"))?;
    let bands = collect_bands(ctx, &doc.bands, doc.l_max)?
        .into_iter()
        .enumerate()
        .map(|(l, b)| doc_to_matrix(ctx, &format!("band {l}"), b, 2 * l + 1, r))
        .collect::<Result<Vec<_>>>()?;
    Signal::new(bands).map_err(|e| Error::parse(ctx, e.to_string()))
}

pub fn signal_from_json(text: &str) -> Result<Signal> {
    signal_from_json_ctx("signal document", text)
}

pub fn distribution_to_json(rho: &Distribution) -> String {
    let doc = Document {
        format_version: FORMAT_VERSION,
        kind: "distribution".into(),
        l_max: rho.l_max(),
        shells: None,
        bands: rho.bands().iter().enumerate().map(|(l, b)| matrix_to_doc(l, b)).collect(),
    };
    serde_json::to_string_pretty(&doc).expect("plain data serializes")
}

fn distribution_from_json_ctx(ctx: &str, text: &str) -> Result<Distribution> {
    parse_header(ctx, text, "distribution")?;
    let doc: Document = serde_json::from_str(text).map_err(|e| Error::parse(ctx, e.to_string()))?;
    let bands = collect_bands(ctx, &doc.bands, doc.l_max)?
        .into_iter()
        .enumerate()
        .map(|(l, b)| doc_to_matrix(ctx, &format!("band {l}"), b, 2 * l + 1, 2 * l + 1))
        .collect::<Result<Vec<_>>>()?;
    Distribution::new(bands).map_err(|e| Error::parse(ctx, e.to_string()))
}

pub fn distribution_from_json(text: &str) -> Result<Distribution> {
    distribution_from_json_ctx("distribution document", text)
}

pub fn save_signal(path: impl AsRef<Path>, x: &Signal) -> Result<()> {
    write_file(path.as_ref(), &signal_to_json(x))
}

pub fn load_signal(path: impl AsRef<Path>) -> Result<Signal> {
    let p = path.as_ref();
    signal_from_json_ctx(&p.display().to_string(), &read_file(p)?)
}

pub fn save_distribution(path: impl AsRef<Path>, rho: &Distribution) -> Result<()> {
    write_file(path.as_ref(), &distribution_to_json(rho))
}

pub fn load_distribution(path: impl AsRef<Path>) -> Result<Distribution> {
    let p = path.as_ref();
    distribution_from_json_ctx(&p.display().to_string(), &read_file(p)?)
}
