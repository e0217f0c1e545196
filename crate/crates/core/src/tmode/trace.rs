use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_TRACE_LEN: usize = 16;
pub const MAX_TRACE_LEN: usize = 1 << 20;

pub const HTRC_MAGIC: &[u8; 4] = b"HTRC";
pub const HTRC_VERSION: u16 = 1;
/// magic + version + n_traces + samples_per_trace + dt_ns + trigger_index
pub const HTRC_HEADER_LEN: usize = 4 + 2 + 4 + 4 + 8 + 4;

/// One trigger-aligned homodyne photocurrent record.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    samples: Vec<f64>,
    dt_ns: f64,
    trigger_index: usize,
}

impl Trace {
    pub fn new(samples: Vec<f64>, dt_ns: f64, trigger_index: usize) -> Result<Self> {
        check_geometry(samples.len(), dt_ns, trigger_index)?;
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::input(format!("sample {i} is not finite")));
        }
        Ok(Trace {
            samples,
            dt_ns,
            trigger_index,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn view(&self) -> TraceView<'_> {
        TraceView {
            samples: &self.samples,
            dt_ns: self.dt_ns,
            trigger_index: self.trigger_index,
        }
    }
}

/// Borrowed trace, as handed out by [`TraceSet::get`].
#[derive(Debug, Clone, Copy)]
pub struct TraceView<'a> {
    pub samples: &'a [f64],
    pub dt_ns: f64,
    pub trigger_index: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub label: String,
    pub seed: Option<u64>,
    pub notes: String,
}

/// Homogeneous collection of traces stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    n_samples: usize,
    dt_ns: f64,
    trigger_index: usize,
    data: Vec<f64>,
    pub meta: TraceMeta,
}

fn check_geometry(n_samples: usize, dt_ns: f64, trigger_index: usize) -> Result<()> {
    if !(MIN_TRACE_LEN..=MAX_TRACE_LEN).contains(&n_samples) {
        return Err(Error::input(format!(
            "trace length {n_samples} outside [{MIN_TRACE_LEN}, {MAX_TRACE_LEN}]"
        )));
    }
    if !(dt_ns > 0.0 && dt_ns.is_finite()) {
        return Err(Error::input(format!("sample spacing {dt_ns} ns must be positive")));
    }
    if trigger_index >= n_samples {
        return Err(Error::input(format!(
            "trigger index {trigger_index} outside trace of length {n_samples}"
        )));
    }
    Ok(())
}

impl TraceSet {
    /// Empty set with the given geometry.
    pub fn new(n_samples: usize, dt_ns: f64, trigger_index: usize) -> Result<Self> {
        check_geometry(n_samples, dt_ns, trigger_index)?;
        Ok(TraceSet {
            n_samples,
            dt_ns,
            trigger_index,
            data: Vec::new(),
            meta: TraceMeta::default(),
        })
    }

    /// Builds a set from row-major samples; `data.len()` must be a multiple of `n_samples`.
    pub fn from_rows(n_samples: usize, dt_ns: f64, trigger_index: usize, data: Vec<f64>) -> Result<Self> {
        check_geometry(n_samples, dt_ns, trigger_index)?;
        if !data.len().is_multiple_of(n_samples) {
            return Err(Error::input(format!(
                "{} samples do not split into traces of length {n_samples}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::AtTrace {
                index: i / n_samples,
                source: Box::new(Error::input("non-finite sample")),
            });
        }
        Ok(TraceSet {
            n_samples,
            dt_ns,
            trigger_index,
            data,
            meta: TraceMeta::default(),
        })
    }

    /// Collects traces, rejecting any whose length, spacing or trigger differs
    /// from the first.
    pub fn from_traces(traces: &[Trace]) -> Result<Self> {
        let first = traces
            .first()
            .ok_or_else(|| Error::input("cannot infer trace geometry from an empty list"))?;
        let mut set = TraceSet::new(first.samples.len(), first.dt_ns, first.trigger_index)?;
        for (i, t) in traces.iter().enumerate() {
            set.push(t.view()).map_err(|e| Error::AtTrace {
                index: i,
                source: Box::new(e),
            })?;
        }
        Ok(set)
    }

    pub fn push(&mut self, trace: TraceView<'_>) -> Result<()> {
        if trace.samples.len() != self.n_samples
            || trace.dt_ns != self.dt_ns
            || trace.trigger_index != self.trigger_index
        {
            return Err(Error::input(format!(
                "heterogeneous trace: length {} / dt {} / trigger {} vs set {} / {} / {}",
                trace.samples.len(),
                trace.dt_ns,
                trace.trigger_index,
                self.n_samples,
                self.dt_ns,
                self.trigger_index
            )));
        }
        if trace.samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::input("non-finite sample"));
        }
        self.data.extend_from_slice(trace.samples);
        Ok(())
    }

    pub fn with_meta(mut self, meta: TraceMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.n_samples
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn dt_ns(&self) -> f64 {
        self.dt_ns
    }

    pub fn trigger_index(&self) -> usize {
        self.trigger_index
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_samples..(i + 1) * self.n_samples]
    }

    pub fn get(&self, i: usize) -> TraceView<'_> {
        TraceView {
            samples: self.row(i),
            dt_ns: self.dt_ns,
            trigger_index: self.trigger_index,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = TraceView<'_>> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Every sample multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> TraceSet {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x *= factor);
        out
    }

    /// Same geometry check as [`TraceSet::push`], for whole sets.
    pub fn ensure_compatible(&self, other: &TraceSet) -> Result<()> {
        if self.n_samples != other.n_samples || self.dt_ns != other.dt_ns {
            return Err(Error::input(format!(
                "trace sets differ: {} samples @ {} ns vs {} samples @ {} ns",
                self.n_samples, self.dt_ns, other.n_samples, other.dt_ns
            )));
        }
        Ok(())
    }

    /// Serializes in the HTRC binary layout (samples stored as f32).
    pub fn write_htrc<W: Write>(&self, mut w: W) -> Result<()> {
        let n_traces = u32::try_from(self.len()).map_err(|_| Error::input("too many traces for HTRC"))?;
        w.write_all(HTRC_MAGIC)?;
        w.write_all(&HTRC_VERSION.to_le_bytes())?;
        w.write_all(&n_traces.to_le_bytes())?;
        w.write_all(&(self.n_samples as u32).to_le_bytes())?;
        w.write_all(&self.dt_ns.to_le_bytes())?;
        w.write_all(&(self.trigger_index as u32).to_le_bytes())?;
        for x in &self.data {
            w.write_all(&(*x as f32).to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_htrc<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; HTRC_HEADER_LEN];
        r.read_exact(&mut header)
            .map_err(|e| Error::Format(format!("truncated HTRC header: {e}")))?;
        if &header[0..4] != HTRC_MAGIC {
            return Err(Error::Format("missing HTRC magic".into()));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != HTRC_VERSION {
            return Err(Error::Format(format!("unsupported HTRC version {version}")));
        }
        let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap()) as usize;
        let n_traces = u32_at(6);
        let n_samples = u32_at(10);
        let dt_ns = f64::from_le_bytes(header[14..22].try_into().unwrap());
        let trigger_index = u32_at(22);
        check_geometry(n_samples, dt_ns, trigger_index).map_err(|e| Error::Format(e.to_string()))?;

        let total = n_traces
            .checked_mul(n_samples)
            .ok_or_else(|| Error::Format("HTRC size overflow".into()))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != total * 4 {
            return Err(Error::Format(format!(
                "HTRC payload has {} bytes, header implies {}",
                bytes.len(),
                total * 4
            )));
        }
        let data: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        TraceSet::from_rows(n_samples, dt_ns, trigger_index, data)
    }

    pub fn save_htrc(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_htrc(BufWriter::new(File::create(path)?))
    }

    pub fn load_htrc(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_htrc(BufReader::new(File::open(path)?))
    }

    /// Imports headerless CSV with one trace per row.
    pub fn read_csv<R: Read>(r: R, dt_ns: f64, trigger_index: usize) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
        let mut set: Option<TraceSet> = None;
        let mut row = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            row.clear();
            for field in rec.iter() {
                let x: f64 = field.trim().parse().map_err(|_| Error::AtTrace {
                    index: i,
                    source: Box::new(Error::Format(format!("cannot parse '{field}' as a number"))),
                })?;
                row.push(x);
            }
            let s = set.get_or_insert(TraceSet::new(row.len(), dt_ns, trigger_index)?);
            s.push(TraceView {
                samples: &row,
                dt_ns,
                trigger_index,
            })
            .map_err(|e| Error::AtTrace {
                index: i,
                source: Box::new(e),
            })?;
        }
        set.ok_or_else(|| Error::Format("CSV contains no traces".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_set(n_traces: usize) -> TraceSet {
        let data: Vec<f64> = (0..n_traces * 16).map(|i| i as f64 * 0.25 - 3.0).collect();
        TraceSet::from_rows(16, 2.5, 4, data).unwrap()
    }

    #[test]
    fn htrc_layout_is_bit_exact() {
        let set = ramp_set(2);
        let mut buf = Vec::new();
        set.write_htrc(&mut buf).unwrap();
        assert_eq!(buf.len(), HTRC_HEADER_LEN + 2 * 16 * 4);
        assert_eq!(&buf[0..4], b"HTRC");
        assert_eq!(&buf[4..6], &[1, 0]);
        assert_eq!(&buf[6..10], &2u32.to_le_bytes());
        assert_eq!(&buf[10..14], &16u32.to_le_bytes());
        assert_eq!(&buf[14..22], &2.5f64.to_le_bytes());
        assert_eq!(&buf[22..26], &4u32.to_le_bytes());
        assert_eq!(&buf[26..30], &(-3.0f32).to_le_bytes());
        let back = TraceSet::read_htrc(&buf[..]).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn empty_set_round_trips() {
        let set = TraceSet::new(32, 1.0, 0).unwrap();
        let mut buf = Vec::new();
        set.write_htrc(&mut buf).unwrap();
        let back = TraceSet::read_htrc(&buf[..]).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.n_samples(), 32);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let mut buf = Vec::new();
        ramp_set(1).write_htrc(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(TraceSet::read_htrc(&bad[..]), Err(Error::Format(_))));
        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(matches!(TraceSet::read_htrc(&bad[..]), Err(Error::Format(_))));
        assert!(matches!(
            TraceSet::read_htrc(&buf[..buf.len() - 1]),
            Err(Error::Format(_))
        ));
        assert!(matches!(TraceSet::read_htrc(&buf[..10]), Err(Error::Format(_))));
    }

    #[test]
    fn heterogeneous_traces_are_rejected() {
        let a = Trace::new(vec![0.0; 16], 1.0, 0).unwrap();
        let b = Trace::new(vec![0.0; 17], 1.0, 0).unwrap();
        let c = Trace::new(vec![0.0; 16], 2.0, 0).unwrap();
        assert!(TraceSet::from_traces(&[a.clone(), a.clone()]).is_ok());
        assert!(matches!(
            TraceSet::from_traces(&[a.clone(), b]),
            Err(Error::AtTrace { index: 1, .. })
        ));
        assert!(TraceSet::from_traces(&[a, c]).is_err());
    }

    #[test]
    fn geometry_limits() {
        assert!(Trace::new(vec![0.0; 15], 1.0, 0).is_err());
        assert!(Trace::new(vec![0.0; 16], 0.0, 0).is_err());
        assert!(Trace::new(vec![0.0; 16], 1.0, 16).is_err());
        assert!(Trace::new(vec![f64::NAN; 16], 1.0, 0).is_err());
    }

    #[test]
    fn csv_import() {
        let row: Vec<String> = (0..16).map(|i| format!("{}", i as f64 * 0.5)).collect();
        let text = format!("{}\n{}\n", row.join(","), row.join(", "));
        let set = TraceSet::read_csv(text.as_bytes(), 1.0, 3).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.row(1)[3], 1.5);
        let short = format!("{}\n{}\n", row.join(","), row[..15].join(","));
        assert!(TraceSet::read_csv(short.as_bytes(), 1.0, 3).is_err());
    }
}
