use std::fmt;
use std::io::{self, Write};

use crate::sim::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceTag {
    Send,
    Ack,
    Dupack,
    Rto,
    FastRetransmit,
}

impl fmt::Display for TraceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceTag::Send => "send",
            TraceTag::Ack => "ack",
            TraceTag::Dupack => "dupack",
            TraceTag::Rto => "rto",
            TraceTag::FastRetransmit => "fast_retransmit",
        })
    }
}

/// One sample of sender state, mirroring a TCP_INFO poll.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CwndTraceRecord {
    pub time: SimTime,
    pub cwnd: u32,
    pub ssthresh: u32,
    pub retransmit_count: u64,
    pub event_tag: TraceTag,
}

pub const CWND_CSV_HEADER: &str = "time_us,cwnd,ssthresh,retransmits,event_tag";

pub fn write_cwnd_csv<W: Write>(out: &mut W, records: &[CwndTraceRecord]) -> io::Result<()> {
    writeln!(out, "{CWND_CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.time.as_micros(),
            r.cwnd,
            r.ssthresh,
            r.retransmit_count,
            r.event_tag
        )?;
    }
    Ok(())
}
