//! CSV and JSON files, written atomically.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use gbridge::sde::Observations;
use nalgebra::DVector;
use serde::Serialize;

/// Write `bytes` to `path` through a temporary file in the same directory
/// and a rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// CSV text from a header and rows of already formatted fields.
pub fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(w.into_inner()?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Shortest decimal that reads back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    x.to_string()
}

/// Observations as `t,x1,..,xd`.
pub fn observations_csv(obs: &Observations) -> Result<Vec<u8>> {
    let mut header = vec!["t".to_string()];
    header.extend((1..=obs.dim()).map(|k| format!("x{k}")));
    let rows = obs.times.iter().zip(&obs.values).map(|(t, v)| {
        std::iter::once(fmt_f64(*t)).chain(v.iter().map(|x| fmt_f64(*x))).collect()
    });
    csv_bytes(&header, rows)
}

pub fn read_observations(path: &Path) -> Result<Observations> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header = r.headers()?.clone();
    if header.get(0) != Some("t") || header.len() < 2 {
        bail!("{}: expected a header 't,x1,...,xd'", path.display());
    }
    let (mut times, mut values) = (Vec::new(), Vec::new());
    for (n, rec) in r.records().enumerate() {
        let rec = rec?;
        let nums: Vec<f64> = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("{}: row {}", path.display(), n + 1))?;
        times.push(nums[0]);
        values.push(DVector::from_column_slice(&nums[1..]));
    }
    Ok(Observations::new(times, values)?)
}

/// Trace rows `iter,<names>`.
pub fn trace_csv(names: &[String], rows: &[(usize, Vec<f64>)]) -> Result<Vec<u8>> {
    let mut header = vec!["iter".to_string()];
    header.extend(names.iter().cloned());
    csv_bytes(
        &header,
        rows.iter().map(|(i, th)| std::iter::once(i.to_string()).chain(th.iter().map(|x| fmt_f64(*x))).collect()),
    )
}

/// Parameter names and rows of a trace file.
pub fn read_trace(path: &Path) -> Result<(Vec<String>, Vec<(usize, Vec<f64>)>)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header = r.headers()?.clone();
    if header.get(0) != Some("iter") {
        bail!("{}: expected a header 'iter,...'", path.display());
    }
    let names = header.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec?;
        let ctx = || format!("{}: row {}", path.display(), n + 1);
        let it = rec[0].parse::<usize>().with_context(ctx)?;
        let th = rec
            .iter()
            .skip(1)
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .with_context(ctx)?;
        rows.push((it, th));
    }
    Ok((names, rows))
}
