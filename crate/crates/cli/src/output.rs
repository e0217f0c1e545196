use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::Serialize;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(herald_core::Error::from)?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(herald_core::Error::from)
        .with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(herald_core::Error::from)
        .with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(herald_core::Error::from)
        .with_context(|| format!("parsing {}", path.display()))
}

/// CSV whose rows are produced by `rows`; each row is already joined.
pub fn write_rows(path: &Path, header: &str, rows: impl IntoIterator<Item = String>) -> anyhow::Result<()> {
    let write = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{header}")?;
        for row in rows {
            writeln!(w, "{row}")?;
        }
        w.flush()
    };
    write()
        .map_err(herald_core::Error::from)
        .with_context(|| format!("writing {}", path.display()))
}

/// Two-column `index,<value_name>` CSV.
pub fn write_indexed(path: &Path, value_name: &str, values: &[f64]) -> anyhow::Result<()> {
    write_rows(
        path,
        &format!("index,{value_name}"),
        values.iter().enumerate().map(|(i, v)| format!("{i},{v:?}")),
    )
}

/// Values column of a file written by [`write_indexed`].
pub fn read_indexed(path: &Path) -> anyhow::Result<Vec<f64>> {
    let parse = || -> herald_core::Result<Vec<f64>> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "index" {
            return Err(herald_core::Error::Format("expected an 'index,<value>' header".into()));
        }
        let mut out = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let idx: usize = rec[0].trim().parse().map_err(|_| bad_row(i))?;
            if idx != i {
                return Err(herald_core::Error::Format(format!("row {i} carries index {idx}")));
            }
            out.push(rec[1].trim().parse().map_err(|_| bad_row(i))?);
        }
        Ok(out)
    };
    parse().with_context(|| format!("reading {}", path.display()))
}

fn bad_row(i: usize) -> herald_core::Error {
    herald_core::Error::Format(format!("row {i} is not numeric"))
}
