//! CSV persistence of per-episode traces and final summaries.
//!
//! Trace header: `episode,<parameter names>,value_error,events`, with events
//! written as `rejected=N|projected=M`. Reals use Rust's shortest
//! round-trip formatting, so re-reading a trace reproduces it exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::params::ParamVector;
use crate::qlearn::{Events, TraceRecord, TraceSink};

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

/// Streams records to a CSV writer.
pub struct CsvTrace<W: Write> {
    out: W,
    columns: usize,
}

impl<W: Write> CsvTrace<W> {
    pub fn new(out: W) -> Self {
        Self { out, columns: 0 }
    }

    pub fn into_inner(self) -> W {
        self.out
    }

    fn io(e: std::io::Error) -> Error {
        Error::Io(e.to_string())
    }
}

impl<W: Write> TraceSink for CsvTrace<W> {
    fn begin(&mut self, names: &[String]) -> Result<()> {
        self.columns = names.len();
        writeln!(self.out, "episode,{}{}value_error,events", names.join(","), if names.is_empty() { "" } else { "," })
            .map_err(Self::io)
    }

    fn record(&mut self, rec: &TraceRecord) -> Result<()> {
        if rec.values.len() != self.columns {
            return Err(Error::InvalidParameter(format!(
                "record has {} values, header has {}",
                rec.values.len(),
                self.columns
            )));
        }
        write!(self.out, "{}", rec.episode).map_err(Self::io)?;
        for v in &rec.values {
            write!(self.out, ",{v}").map_err(Self::io)?;
        }
        writeln!(self.out, ",{},rejected={}|projected={}", rec.value_error, rec.events.rejected, rec.events.projected)
            .map_err(Self::io)
    }
}

/// Writes a complete trace file.
pub fn write_traces(names: &[String], records: &[TraceRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut sink = CsvTrace::new(BufWriter::new(file));
    sink.begin(names)?;
    for r in records {
        sink.record(r)?;
    }
    sink.into_inner().flush().map_err(|e| io_err(path, e))
}

fn parse_events(field: &str) -> Option<Events> {
    let (r, p) = field.split_once('|')?;
    Some(Events {
        rejected: r.strip_prefix("rejected=")?.parse().ok()?,
        projected: p.strip_prefix("projected=")?.parse().ok()?,
    })
}

/// Reads a trace file back into parameter names and records.
pub fn read_traces(path: &Path) -> Result<(Vec<String>, Vec<TraceRecord>)> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let bad = |line: usize, what: &str| Error::Io(format!("{}:{line}: {what}", path.display()));
    let header = lines.next().ok_or_else(|| bad(1, "missing header"))?.map_err(|e| io_err(path, e))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3
        || cols[0] != "episode"
        || cols[cols.len() - 2] != "value_error"
        || cols[cols.len() - 1] != "events"
    {
        return Err(bad(1, "unexpected header"));
    }
    let names: Vec<String> = cols[1..cols.len() - 2].iter().map(|s| s.to_string()).collect();
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let line = line.map_err(|e| io_err(path, e))?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(bad(n, "wrong number of fields"));
        }
        let episode = fields[0].parse().map_err(|_| bad(n, "bad episode"))?;
        let values = fields[1..fields.len() - 2]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| bad(n, "bad value")))
            .collect::<Result<Vec<_>>>()?;
        let value_error = fields[fields.len() - 2].parse().map_err(|_| bad(n, "bad value_error"))?;
        let events = parse_events(fields[fields.len() - 1]).ok_or_else(|| bad(n, "bad events"))?;
        records.push(TraceRecord { episode, values, value_error, events });
    }
    Ok((names, records))
}

/// `parameter,true,learnt,abs_error` for every parameter with a reference
/// value, θ first.
pub fn write_summary(learnt: &[&ParamVector], truth: &[&ParamVector], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    let w = |out: &mut BufWriter<File>, s: String| writeln!(out, "{s}").map_err(|e| io_err(path, e));
    w(&mut out, "parameter,true,learnt,abs_error".into())?;
    for (l, t) in learnt.iter().zip(truth) {
        for (name, tv) in t.iter() {
            let lv = l.get(name).ok_or_else(|| Error::InvalidParameter(format!("learnt state has no `{name}`")))?;
            w(&mut out, format!("{name},{tv},{lv},{}", (lv - tv).abs()))?;
        }
    }
    out.flush().map_err(|e| io_err(path, e))
}
