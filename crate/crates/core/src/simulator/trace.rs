//! Channel event trace, one CSV line per event:
//! `timestamp_us,event,node,m,outcome`.

use std::fmt;
use std::io::{self, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceKind {
    TxStart,
    TxEnd,
    Collision,
    Departure,
    Block,
    Discard,
}

impl TraceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::TxStart => "TX_START",
            TraceKind::TxEnd => "TX_END",
            TraceKind::Collision => "COLLISION",
            TraceKind::Departure => "DEPARTURE",
            TraceKind::Block => "BLOCK",
            TraceKind::Discard => "DISCARD",
        }
    }
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `m` is the number of packets involved: the attempt size for TX_* and
/// COLLISION, the batch size for DEPARTURE, packets dropped for DISCARD.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub timestamp_us: u64,
    pub kind: TraceKind,
    pub node: usize,
    pub m: usize,
    pub outcome: String,
}

pub trait TraceSink {
    fn record(&mut self, event: &TraceEvent) -> io::Result<()>;
}

impl TraceSink for Vec<TraceEvent> {
    fn record(&mut self, event: &TraceEvent) -> io::Result<()> {
        self.push(event.clone());
        Ok(())
    }
}

pub const TRACE_HEADER: &str = "timestamp_us,event,node,m,outcome";

pub struct CsvTrace<W: Write> {
    out: W,
}

impl<W: Write> CsvTrace<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "{TRACE_HEADER}")?;
        Ok(CsvTrace { out })
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> TraceSink for CsvTrace<W> {
    fn record(&mut self, e: &TraceEvent) -> io::Result<()> {
        writeln!(self.out, "{},{},{},{},{}", e.timestamp_us, e.kind, e.node, e.m, e.outcome)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_lines() {
        let mut sink = CsvTrace::new(Vec::new()).unwrap();
        sink.record(&TraceEvent {
            timestamp_us: 9088,
            kind: TraceKind::TxEnd,
            node: 3,
            m: 2,
            outcome: "acked=1/2".into(),
        })
        .unwrap();
        let text = String::from_utf8(sink.into_inner()).unwrap();
        assert_eq!(text, "timestamp_us,event,node,m,outcome\n9088,TX_END,3,2,acked=1/2\n");
    }
}
