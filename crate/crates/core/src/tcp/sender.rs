use std::collections::BTreeMap;

use crate::sim::SimTime;

use super::trace::{CwndTraceRecord, TraceTag};

/// Sender stack parameters. Defaults are conventional Reno values.
#[derive(Debug, Clone, PartialEq)]
pub struct TcpConfig {
    pub mss: u32,
    /// Segments.
    pub init_cwnd: u32,
    /// Segments.
    pub init_ssthresh: u32,
    pub init_rto: SimTime,
    pub min_rto: SimTime,
    pub max_rto: SimTime,
    /// Reno window inflation during fast recovery (+3, then +1 per extra
    /// duplicate).
    pub fast_recovery_inflation: bool,
    pub dupack_threshold: u32,
    /// Keep a log of every input the sender saw (for replay oracles).
    pub record_inputs: bool,
}

impl Default for TcpConfig {
    fn default() -> Self {
        TcpConfig {
            mss: 1350,
            init_cwnd: 2,
            init_ssthresh: 64,
            init_rto: SimTime::from_secs(1),
            min_rto: SimTime::from_millis(200),
            max_rto: SimTime::from_secs(60),
            fast_recovery_inflation: true,
            dupack_threshold: 3,
            record_inputs: false,
        }
    }
}

/// Reno sender state. Sequence numbers are 64-bit stream offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TcpConnState {
    pub cwnd: u32,
    /// Congestion-avoidance accumulator: cwnd grows by one once it reaches
    /// cwnd, i.e. 1/cwnd per ACK.
    pub cwnd_cnt: u32,
    pub ssthresh: u32,
    pub snd_una: u64,
    pub snd_nxt: u64,
    /// Highest sequence ever sent; differs from `snd_nxt` after go-back-N.
    pub snd_max: u64,
    pub dupack_count: u32,
    pub in_recovery: bool,
    pub rto: SimTime,
    pub srtt: Option<SimTime>,
    pub rttvar: SimTime,
    pub adv_window: u32,
    pub mss: u32,
}

impl TcpConnState {
    pub fn new(cfg: &TcpConfig, adv_window: u32) -> Self {
        TcpConnState {
            cwnd: cfg.init_cwnd.max(1),
            cwnd_cnt: 0,
            ssthresh: cfg.init_ssthresh.max(2),
            snd_una: 0,
            snd_nxt: 0,
            snd_max: 0,
            dupack_count: 0,
            in_recovery: false,
            rto: cfg.init_rto,
            srtt: None,
            rttvar: SimTime::ZERO,
            adv_window,
            mss: cfg.mss,
        }
    }

    pub fn flight_bytes(&self) -> u64 {
        self.snd_nxt - self.snd_una
    }

    pub fn flight_segments(&self) -> u32 {
        self.flight_bytes().div_ceil(self.mss as u64) as u32
    }

    /// Bytes the sender may have outstanding right now.
    pub fn send_window(&self) -> u64 {
        (self.cwnd as u64 * self.mss as u64).min(self.adv_window as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SenderInput {
    Ack {
        time: SimTime,
        ack: u64,
        adv_window: u32,
    },
    Rto {
        time: SimTime,
    },
    Transmit {
        time: SimTime,
        seq: u64,
        len: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimerAction {
    Restart,
    Stop,
    Keep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AckOutcome {
    pub newly_acked: u64,
    /// Segment to retransmit immediately (fast retransmit).
    pub retransmit: Option<(u64, u32)>,
    pub timer: TimerAction,
    pub anomaly: bool,
    pub duplicate: bool,
}

#[derive(Debug, Clone, Copy)]
struct SegMeta {
    len: u32,
    sent_at: SimTime,
    retransmitted: bool,
}

/// Simplified Reno sender: slow start, congestion avoidance, fast
/// retransmit/recovery and RTO with exponential backoff. No SACK.
#[derive(Debug, Clone)]
pub struct TcpSender {
    pub cfg: TcpConfig,
    pub state: TcpConnState,
    segs: BTreeMap<u64, SegMeta>,
    trace: Vec<CwndTraceRecord>,
    inputs: Vec<SenderInput>,
    pub retransmits: u64,
    pub fast_retransmits: u64,
    pub rto_count: u64,
    pub anomalies: u64,
    rtt_sum_us: u64,
    rtt_samples: u64,
}

impl TcpSender {
    pub fn new(cfg: TcpConfig, adv_window: u32) -> Self {
        let state = TcpConnState::new(&cfg, adv_window);
        TcpSender {
            cfg,
            state,
            segs: BTreeMap::new(),
            trace: Vec::new(),
            inputs: Vec::new(),
            retransmits: 0,
            fast_retransmits: 0,
            rto_count: 0,
            anomalies: 0,
            rtt_sum_us: 0,
            rtt_samples: 0,
        }
    }

    pub fn trace(&self) -> &[CwndTraceRecord] {
        &self.trace
    }

    pub fn take_trace(&mut self) -> Vec<CwndTraceRecord> {
        std::mem::take(&mut self.trace)
    }

    /// Starts or stops logging inputs for [`TcpSender::inputs`].
    pub fn set_record_inputs(&mut self, on: bool) {
        self.cfg.record_inputs = on;
    }

    pub fn inputs(&self) -> &[SenderInput] {
        &self.inputs
    }

    pub fn mean_rtt(&self) -> Option<SimTime> {
        (self.rtt_samples > 0).then(|| SimTime::from_micros(self.rtt_sum_us / self.rtt_samples))
    }

    pub fn has_outstanding(&self) -> bool {
        self.state.snd_max > self.state.snd_una
    }

    fn record(&mut self, time: SimTime, tag: TraceTag) {
        self.trace.push(CwndTraceRecord {
            time,
            cwnd: self.state.cwnd,
            ssthresh: self.state.ssthresh,
            retransmit_count: self.retransmits,
            event_tag: tag,
        });
    }

    /// Next segment the window allows, given the application has written
    /// `app_bytes` in total. Segments are MSS-aligned.
    pub fn next_segment(&self, app_bytes: u64) -> Option<(u64, u32)> {
        let st = &self.state;
        let seq = st.snd_nxt;
        if seq >= app_bytes {
            return None;
        }
        let len = match self.segs.get(&seq) {
            Some(m) => m.len,
            None => (app_bytes - seq).min(st.mss as u64) as u32,
        };
        // Only whole segments leave the application buffer.
        if len < st.mss && seq + (st.mss as u64) <= app_bytes {
            return None;
        }
        if st.flight_bytes() + len as u64 > st.send_window() {
            return None;
        }
        Some((seq, len))
    }

    /// Length of the outstanding segment starting at `seq`, if any.
    pub fn segment_len(&self, seq: u64) -> Option<u32> {
        self.segs.get(&seq).map(|m| m.len)
    }

    /// Records that `[seq, seq+len)` left the sender. Returns true when it
    /// is a retransmission.
    pub fn on_transmit(&mut self, now: SimTime, seq: u64, len: u32) -> bool {
        if self.cfg.record_inputs {
            self.inputs.push(SenderInput::Transmit {
                time: now,
                seq,
                len,
            });
        }
        let retx = seq < self.state.snd_max;
        if retx {
            self.retransmits += 1;
        }
        let meta = self.segs.entry(seq).or_insert(SegMeta {
            len,
            sent_at: now,
            retransmitted: false,
        });
        if retx {
            meta.retransmitted = true;
            meta.sent_at = now;
        }
        if seq == self.state.snd_nxt {
            self.state.snd_nxt += len as u64;
            self.state.snd_max = self.state.snd_max.max(self.state.snd_nxt);
        }
        self.record(now, TraceTag::Send);
        retx
    }

    fn update_rtt(&mut self, sample: SimTime) {
        let r = sample.as_micros();
        self.rtt_sum_us += r;
        self.rtt_samples += 1;
        let (srtt, rttvar) = match self.state.srtt {
            None => (r, r / 2),
            Some(s) => {
                let s = s.as_micros();
                let var = self.state.rttvar.as_micros();
                let new_var = (3 * var + s.abs_diff(r)) / 4;
                let new_srtt = (7 * s + r) / 8;
                (new_srtt, new_var)
            }
        };
        self.state.srtt = Some(SimTime::from_micros(srtt));
        self.state.rttvar = SimTime::from_micros(rttvar);
        let rto = SimTime::from_micros(srtt + (4 * rttvar).max(1));
        self.state.rto = rto.max(self.cfg.min_rto).min(self.cfg.max_rto);
    }

    /// Processes a cumulative ACK.
    pub fn on_ack(&mut self, now: SimTime, ack: u64, adv_window: u32) -> AckOutcome {
        if self.cfg.record_inputs {
            self.inputs.push(SenderInput::Ack {
                time: now,
                ack,
                adv_window,
            });
        }
        let mut out = AckOutcome {
            newly_acked: 0,
            retransmit: None,
            timer: TimerAction::Keep,
            anomaly: false,
            duplicate: false,
        };
        if ack > self.state.snd_max {
            self.anomalies += 1;
            out.anomaly = true;
            return out;
        }
        self.state.adv_window = adv_window;

        if ack > self.state.snd_una {
            out.newly_acked = ack - self.state.snd_una;
            self.state.snd_una = ack;
            if self.state.snd_nxt < ack {
                self.state.snd_nxt = ack;
            }
            self.state.dupack_count = 0;

            let mut sample = None;
            while let Some((&seq, meta)) = self.segs.first_key_value() {
                if seq + meta.len as u64 > ack {
                    break;
                }
                sample = (!meta.retransmitted).then(|| now - meta.sent_at);
                self.segs.pop_first();
            }
            if let Some(s) = sample {
                self.update_rtt(s);
            }

            if self.state.in_recovery {
                self.state.in_recovery = false;
                self.state.cwnd = self.state.ssthresh;
                self.state.cwnd_cnt = 0;
            } else if self.state.cwnd < self.state.ssthresh {
                self.state.cwnd += 1;
            } else {
                self.state.cwnd_cnt += 1;
                if self.state.cwnd_cnt >= self.state.cwnd {
                    self.state.cwnd += 1;
                    self.state.cwnd_cnt = 0;
                }
            }
            out.timer = if self.has_outstanding() {
                TimerAction::Restart
            } else {
                TimerAction::Stop
            };
            self.record(now, TraceTag::Ack);
            return out;
        }

        if ack == self.state.snd_una && self.has_outstanding() {
            out.duplicate = true;
            self.state.dupack_count += 1;
            self.record(now, TraceTag::Dupack);
            let thresh = self.cfg.dupack_threshold;
            if !self.state.in_recovery && self.state.dupack_count == thresh {
                let flight = self.state.flight_segments().max(1);
                self.state.ssthresh = (flight / 2).max(2);
                self.state.cwnd = if self.cfg.fast_recovery_inflation {
                    self.state.ssthresh + thresh
                } else {
                    self.state.ssthresh
                };
                self.state.cwnd_cnt = 0;
                self.state.in_recovery = true;
                self.fast_retransmits += 1;
                let seq = self.state.snd_una;
                let len = self.segs.get(&seq).map(|m| m.len).unwrap_or(self.state.mss);
                out.retransmit = Some((seq, len));
                out.timer = TimerAction::Restart;
                self.record(now, TraceTag::FastRetransmit);
            } else if self.state.in_recovery && self.cfg.fast_recovery_inflation {
                self.state.cwnd += 1;
            }
        }
        out
    }

    /// Retransmission timeout for `snd_una`: collapse to one segment, back
    /// off the timer and go back to `snd_una`.
    pub fn on_rto(&mut self, now: SimTime) -> Option<(u64, u32)> {
        if self.cfg.record_inputs {
            self.inputs.push(SenderInput::Rto { time: now });
        }
        if !self.has_outstanding() {
            return None;
        }
        let flight = self.state.flight_segments().max(1);
        self.state.ssthresh = (flight / 2).max(2);
        self.state.cwnd = 1;
        self.state.cwnd_cnt = 0;
        self.state.dupack_count = 0;
        self.state.in_recovery = false;
        self.state.snd_nxt = self.state.snd_una;
        self.state.rto = self.state.rto.mul(2).min(self.cfg.max_rto);
        self.rto_count += 1;
        self.record(now, TraceTag::Rto);
        let seq = self.state.snd_una;
        let len = self.segs.get(&seq).map(|m| m.len).unwrap_or(self.state.mss);
        Some((seq, len))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MSS: u32 = 1350;

    fn sender() -> TcpSender {
        TcpSender::new(TcpConfig::default(), 1 << 30)
    }

    fn send_n(s: &mut TcpSender, n: u32, now: SimTime) {
        for _ in 0..n {
            let seq = s.state.snd_nxt;
            s.on_transmit(now, seq, MSS);
        }
    }

    #[test]
    fn slow_start_grows_by_one_per_ack() {
        let mut s = sender();
        s.state.cwnd = 4;
        send_n(&mut s, 4, SimTime::ZERO);
        s.on_ack(SimTime::from_millis(30), MSS as u64, 1 << 30);
        assert_eq!(s.state.cwnd, 5);
    }

    #[test]
    fn congestion_avoidance_grows_by_one_per_window() {
        let mut s = sender();
        s.state.cwnd = 10;
        s.state.ssthresh = 10;
        send_n(&mut s, 10, SimTime::ZERO);
        for i in 1..=9 {
            s.on_ack(SimTime::from_millis(30), i * MSS as u64, 1 << 30);
            assert_eq!(s.state.cwnd, 10);
        }
        s.on_ack(SimTime::from_millis(30), 10 * MSS as u64, 1 << 30);
        assert_eq!(s.state.cwnd, 11);
    }

    #[test]
    fn third_dupack_triggers_fast_retransmit() {
        let mut s = sender();
        s.state.cwnd = 20;
        send_n(&mut s, 20, SimTime::ZERO);
        let t = SimTime::from_millis(40);
        s.on_ack(t, MSS as u64, 1 << 30);
        let cwnd_before = s.state.cwnd;
        assert!(s.on_ack(t, MSS as u64, 1 << 30).retransmit.is_none());
        assert!(s.on_ack(t, MSS as u64, 1 << 30).retransmit.is_none());
        assert_eq!(s.state.dupack_count, 2);
        let out = s.on_ack(t, MSS as u64, 1 << 30);
        assert_eq!(out.retransmit, Some((MSS as u64, MSS)));
        // 20 sent, 1 acked: 19 in flight.
        assert_eq!(s.state.ssthresh, 19 / 2);
        assert_eq!(s.state.cwnd, s.state.ssthresh + 3);
        assert!(s.state.cwnd < cwnd_before);
        assert_eq!(s.fast_retransmits, 1);

        // A new ACK leaves recovery and deflates to ssthresh.
        s.on_ack(t, 5 * MSS as u64, 1 << 30);
        assert_eq!(s.state.cwnd, s.state.ssthresh);
        assert_eq!(s.state.dupack_count, 0);
    }

    #[test]
    fn fast_retransmit_without_inflation_halves() {
        let cfg = TcpConfig {
            fast_recovery_inflation: false,
            ..TcpConfig::default()
        };
        let mut s = TcpSender::new(cfg, 1 << 30);
        s.state.cwnd = 16;
        send_n(&mut s, 16, SimTime::ZERO);
        for _ in 0..3 {
            s.on_ack(SimTime::from_millis(1), 0, 1 << 30);
        }
        assert_eq!(s.state.cwnd, 8);
        assert_eq!(s.state.ssthresh, 8);
    }

    #[test]
    fn rto_collapses_window() {
        let mut s = sender();
        s.state.cwnd = 20;
        send_n(&mut s, 20, SimTime::ZERO);
        let rtx = s.on_rto(SimTime::from_secs(1));
        assert_eq!(rtx, Some((0, MSS)));
        assert_eq!(s.state.cwnd, 1);
        assert_eq!(s.state.ssthresh, 10);
        assert_eq!(s.state.snd_nxt, 0);
    }

    #[test]
    fn rto_backoff_doubles_and_caps() {
        // Hand-computed backoff table starting from the 200ms floor.
        let mut s = sender();
        s.state.rto = SimTime::from_millis(200);
        send_n(&mut s, 1, SimTime::ZERO);
        let mut fired = vec![s.state.rto];
        for _ in 0..12 {
            s.on_rto(SimTime::ZERO);
            fired.push(s.state.rto);
        }
        let ms: Vec<u64> = fired.iter().map(|t| t.as_micros() / 1000).collect();
        assert_eq!(&ms[..4], &[200, 400, 800, 1600]);
        assert_eq!(*ms.last().unwrap(), 60_000);
    }

    #[test]
    fn ack_beyond_snd_max_is_an_anomaly() {
        let mut s = sender();
        send_n(&mut s, 2, SimTime::ZERO);
        let before = s.state.clone();
        let out = s.on_ack(SimTime::from_millis(1), 10 * MSS as u64, 1 << 30);
        assert!(out.anomaly);
        assert_eq!(s.state, before);
        assert_eq!(s.anomalies, 1);
    }

    #[test]
    fn window_respects_advertised_window() {
        let mut s = TcpSender::new(TcpConfig::default(), 2 * MSS);
        s.state.cwnd = 50;
        let app = u64::MAX;
        let mut sent = 0;
        while let Some((seq, len)) = s.next_segment(app) {
            s.on_transmit(SimTime::ZERO, seq, len);
            sent += 1;
        }
        assert_eq!(sent, 2);
    }

    #[test]
    fn rtt_estimator_sets_rto_with_floor() {
        let mut s = sender();
        send_n(&mut s, 1, SimTime::ZERO);
        s.on_ack(SimTime::from_millis(32), MSS as u64, 1 << 30);
        assert_eq!(s.state.srtt, Some(SimTime::from_millis(32)));
        assert_eq!(s.state.rttvar, SimTime::from_millis(16));
        // 32 + 4*16 = 96ms, below the 200ms floor.
        assert_eq!(s.state.rto, SimTime::from_millis(200));
    }

    #[test]
    fn karn_skips_retransmitted_samples() {
        let mut s = sender();
        send_n(&mut s, 1, SimTime::ZERO);
        s.on_rto(SimTime::from_secs(1));
        s.on_transmit(SimTime::from_secs(1), 0, MSS);
        s.on_ack(SimTime::from_millis(1032), MSS as u64, 1 << 30);
        assert_eq!(s.state.srtt, None);
    }
}
