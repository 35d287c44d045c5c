//! Packet trace ingestion (`time_ms,size_bytes` CSV).

use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use crate::error::{Error, Result};

pub const TRACE_HEADER: &str = "time_ms,size_bytes";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub time_ms: f64,
    pub size_bytes: u32,
}

/// A single packet stream, timestamps non-decreasing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    entries: Vec<TraceEntry>,
}

impl Trace {
    pub fn new(entries: Vec<TraceEntry>) -> Result<Self> {
        for (i, w) in entries.windows(2).enumerate() {
            if w[1].time_ms < w[0].time_ms {
                return Err(Error::Trace {
                    path: Default::default(),
                    line: i + 2,
                    message: "timestamps must be non-decreasing".into(),
                });
            }
        }
        if let Some(bad) = entries.iter().position(|e| e.size_bytes == 0) {
            return Err(Error::Trace {
                path: Default::default(),
                line: bad + 1,
                message: "size_bytes must be at least 1".into(),
            });
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[TraceEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Time after which a replay wraps to the first entry: the last timestamp
    /// plus the mean gap between entries.
    pub fn period_ms(&self) -> f64 {
        match self.entries.as_slice() {
            [] => 0.0,
            [only] => only.time_ms.max(1.0),
            [first, .., last] => {
                let gap = (last.time_ms - first.time_ms) / (self.entries.len() - 1) as f64;
                last.time_ms + gap.max(1e-3)
            }
        }
    }

    pub fn mean_size(&self) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        self.entries.iter().map(|e| e.size_bytes as f64).sum::<f64>() / self.entries.len() as f64
    }
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<Trace> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::io(format!("opening trace {}", path.display()), e))?;
    parse_trace(file).map_err(|e| match e {
        Error::Trace { line, message, .. } => Error::Trace {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other,
    })
}

/// Parses trace CSV text. Line numbers in errors are 1-based and count the header.
pub fn parse_trace<R: Read>(reader: R) -> Result<Trace> {
    let err = |line: usize, message: String| Error::Trace {
        path: Default::default(),
        line,
        message,
    };
    let mut entries: Vec<TraceEntry> = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io("reading trace", e))?;
        let line = line.trim_end_matches('\r');
        if idx == 0 && line.trim() == TRACE_HEADER {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (t, s) = line
            .split_once(',')
            .ok_or_else(|| err(lineno, format!("expected two fields, got {line:?}")))?;
        let time_ms: f64 = t
            .trim()
            .parse()
            .map_err(|_| err(lineno, format!("bad time_ms {t:?}")))?;
        let size_bytes: u32 = s
            .trim()
            .parse()
            .map_err(|_| err(lineno, format!("bad size_bytes {s:?}")))?;
        if !time_ms.is_finite() || time_ms < 0.0 {
            return Err(err(lineno, format!("time_ms must be finite and >= 0, got {time_ms}")));
        }
        if size_bytes == 0 {
            return Err(err(lineno, "size_bytes must be at least 1".into()));
        }
        if let Some(prev) = entries.last() {
            if time_ms < prev.time_ms {
                return Err(err(
                    lineno,
                    format!("timestamp {time_ms} precedes previous {}", prev.time_ms),
                ));
            }
        }
        entries.push(TraceEntry {
            time_ms,
            size_bytes,
        });
    }
    Ok(Trace { entries })
}

pub fn write_trace(path: impl AsRef<Path>, trace: &Trace) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for e in trace.entries() {
        out.push_str(&format!("{},{}\n", e.time_ms, e.size_bytes));
    }
    std::fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
