//! Per-run metrics and the CSV files they are written to.

use std::io::{self, Write};

use crate::gateway::{SchedRecord, SCHED_CSV_HEADER};
use crate::overhead::theoretical_max;
use crate::scenario::Scenario;
use crate::tcp::{CwndTraceRecord, TraceTag};
use crate::world::World;

/// Results of one scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub scenario: Scenario,
    /// Application bytes at the destination after warm-up, in bit/s.
    pub goodput_bps: f64,
    pub efficiency: f64,
    /// Goodput per 1 s bin over the whole run, in bit/s.
    pub series_bps: Vec<f64>,
    /// Uplink wire rate per 1 s bin, all tunnels, in bit/s.
    pub uplink_series_bps: Vec<f64>,
    /// Control-message rate per 1 s bin, in bit/s.
    pub control_series_bps: Vec<f64>,
    /// Sender cwnd at the end of each 1 s bin, in segments.
    pub cwnd_series: Vec<u32>,
    pub mean_cwnd: f64,
    pub retransmits: u64,
    pub fast_retransmits: u64,
    pub rto_count: u64,
    pub mean_rtt_ms: f64,
    pub control_bytes: u64,
    pub cwnd_trace: Vec<CwndTraceRecord>,
    pub sched: Vec<SchedRecord>,
}

/// Goodput over `n_aps` times the per-protocol BaPu ceiling (or the plain
/// ceiling for a non-BaPu flow).
pub fn efficiency(goodput_bps: f64, sc: &Scenario) -> f64 {
    let max = theoretical_max(sc.proto, sc.bapu, sc.uplink_bps, sc.payload);
    goodput_bps / (sc.n_aps as f64 * max)
}

impl MetricsRecord {
    pub fn from_world(w: &World) -> Self {
        let goodput_bps = w.goodput_bps();
        let bins = &w.bins;
        let width = |i: usize| ((i + 1) as f64).min(w.sc.duration_s) - i as f64;
        let rate = |i: usize, b: u64| b as f64 * 8.0 / width(i);
        MetricsRecord {
            scenario: w.sc.clone(),
            goodput_bps,
            efficiency: efficiency(goodput_bps, &w.sc),
            series_bps: bins.iter().enumerate().map(|(i, b)| rate(i, b.delivered_bytes)).collect(),
            uplink_series_bps: bins.iter().enumerate().map(|(i, b)| rate(i, b.uplink_bytes)).collect(),
            control_series_bps: bins.iter().enumerate().map(|(i, b)| rate(i, b.control_bytes)).collect(),
            cwnd_series: bins.iter().map(|b| b.cwnd).collect(),
            mean_cwnd: w.mean_cwnd(),
            retransmits: w.tcp.retransmits,
            fast_retransmits: w.tcp.fast_retransmits,
            rto_count: w.tcp.rto_count,
            mean_rtt_ms: w.tcp.mean_rtt().map_or(0.0, |t| t.as_millis_f64()),
            control_bytes: w.control_bytes(),
            cwnd_trace: w.cwnd_trace().to_vec(),
            sched: w.gateway.sched_log.clone(),
        }
    }

    /// 1 s bins that lie entirely after warm-up.
    pub fn steady_series(&self) -> &[f64] {
        let first = self.scenario.warmup_s.ceil() as usize;
        let full = self.scenario.duration_s.floor() as usize;
        &self.series_bps[first.min(full)..full]
    }

    /// Standard deviation of the steady-state 1 s goodput bins.
    pub fn series_stddev(&self) -> f64 {
        mean_std(self.steady_series()).1
    }

    /// Fast retransmissions in the trace, warm-up included.
    pub fn fast_retransmit_events(&self) -> usize {
        self.cwnd_trace
            .iter()
            .filter(|r| r.event_tag == TraceTag::FastRetransmit)
            .count()
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// A run tagged with the sweep point it belongs to.
#[derive(Debug, Clone, Copy)]
pub struct Labeled<'a> {
    pub label: &'a str,
    pub record: &'a MetricsRecord,
}

pub const SUMMARY_CSV_HEADER: &str = "label,n_aps,proto,mode,strategy,rtt,monitor_loss,sender_rate,seed,\
goodput_bps,efficiency,mean_cwnd,retransmits,fast_retransmits,rtos,mean_rtt_ms,control_bytes";

pub const TIMESERIES_CSV_HEADER: &str = "label,seed,t_s,goodput_bps,uplink_bps,control_bps,cwnd";

pub const POINTS_CSV_HEADER: &str =
    "label,runs,goodput_mean_bps,goodput_std_bps,efficiency_mean,efficiency_std,mean_cwnd";

pub fn write_summary_csv<W: Write>(out: &mut W, runs: &[Labeled<'_>]) -> io::Result<()> {
    writeln!(out, "{SUMMARY_CSV_HEADER}")?;
    for l in runs {
        let r = l.record;
        let s = &r.scenario;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{:.0},{:.4},{:.2},{},{},{},{:.2},{}",
            l.label,
            s.n_aps,
            s.proto,
            s.mode,
            s.strategy,
            s.rtt,
            s.monitor_loss,
            s.sender_rate,
            s.seed,
            r.goodput_bps,
            r.efficiency,
            r.mean_cwnd,
            r.retransmits,
            r.fast_retransmits,
            r.rto_count,
            r.mean_rtt_ms,
            r.control_bytes
        )?;
    }
    Ok(())
}

pub fn write_timeseries_csv<W: Write>(out: &mut W, runs: &[Labeled<'_>]) -> io::Result<()> {
    writeln!(out, "{TIMESERIES_CSV_HEADER}")?;
    for l in runs {
        let r = l.record;
        for i in 0..r.series_bps.len() {
            writeln!(
                out,
                "{},{},{},{:.0},{:.0},{:.0},{}",
                l.label,
                r.scenario.seed,
                i + 1,
                r.series_bps[i],
                r.uplink_series_bps[i],
                r.control_series_bps[i],
                r.cwnd_series[i]
            )?;
        }
    }
    Ok(())
}

pub fn write_cwnd_csv<W: Write>(out: &mut W, runs: &[Labeled<'_>]) -> io::Result<()> {
    writeln!(out, "label,seed,{}", crate::tcp::CWND_CSV_HEADER)?;
    for l in runs {
        for t in &l.record.cwnd_trace {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                l.label,
                l.record.scenario.seed,
                t.time.as_micros(),
                t.cwnd,
                t.ssthresh,
                t.retransmit_count,
                t.event_tag
            )?;
        }
    }
    Ok(())
}

pub fn write_sched_csv<W: Write>(out: &mut W, runs: &[Labeled<'_>]) -> io::Result<()> {
    writeln!(out, "label,seed,{SCHED_CSV_HEADER}")?;
    for l in runs {
        for s in &l.record.sched {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                l.label,
                l.record.scenario.seed,
                s.time.as_micros(),
                s.ipid,
                s.chosen_apid,
                s.n_reporters
            )?;
        }
    }
    Ok(())
}
