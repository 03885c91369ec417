//! The gateway: registration, report collection, forwarder scheduling,
//! Proactive-ACK and the reorder-buffer strawman.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use bytes::Bytes;

use crate::ap::IpidWindow;
use crate::overhead::{payload_from_data_wire, CONTROL_WIRE_BYTES};
use crate::packet::{fnv1a64, AckSegment, Packet, Proto, SessionKey};
use crate::sim::SimTime;
use crate::wire::{decode_inner, NatRecord, TunnelMessage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Basic,
    Buffering,
    Proactive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    FcfsCapacity,
    Modulo,
    ModuloRedundant,
}

/// How the gateway charges scheduled bytes against an AP's reported
/// tunnel capacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CreditPolicy {
    /// Every report restores the full reported capacity.
    SinceReport,
    /// Scheduled bytes stay charged until the data reaches the gateway.
    InFlight,
}

/// What lets the gateway acknowledge a byte to the sender in Proactive-ACK
/// mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AckTrigger {
    /// Some AP reported the segment.
    Report,
    /// The segment's data reached the gateway and was injected.
    Injection,
}

macro_rules! str_enum {
    ($t:ty, $($v:path => $s:literal),+) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($v => $s),+ })
            }
        }
        impl FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s { $($s => Ok($v),)+ _ => Err(format!("unknown value {s:?}")) }
            }
        }
    };
}

str_enum!(Mode, Mode::Basic => "basic", Mode::Buffering => "buffering", Mode::Proactive => "proactive");
str_enum!(Strategy, Strategy::FcfsCapacity => "fcfs_capacity", Strategy::Modulo => "modulo",
    Strategy::ModuloRedundant => "modulo_redundant");
str_enum!(AckTrigger, AckTrigger::Report => "report", AckTrigger::Injection => "injection");
str_enum!(CreditPolicy, CreditPolicy::SinceReport => "since_report", CreditPolicy::InFlight => "in_flight");

/// Stable hash of an IPID for the modulo strawman.
pub fn ipid_hash(ipid: u16) -> u32 {
    fnv1a64(&ipid.to_be_bytes()) as u32
}

/// AP index that forwards a packet whose IPID hashes to `hash`.
pub fn forwarder_for_hash(hash: u32, n_aps: u32) -> u32 {
    if n_aps <= 1 {
        0
    } else {
        hash % n_aps
    }
}

pub fn modulo_forwarder(ipid: u16, n_aps: u32) -> u32 {
    forwarder_for_hash(ipid_hash(ipid), n_aps)
}

/// Disjoint half-open byte ranges.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IntervalSet {
    ranges: BTreeMap<u64, u64>,
}

impl IntervalSet {
    pub fn insert(&mut self, lo: u64, hi: u64) {
        if lo >= hi {
            return;
        }
        let mut lo = lo;
        let mut hi = hi;
        if let Some((&s, &e)) = self.ranges.range(..=lo).next_back() {
            if e >= lo {
                lo = s;
                hi = hi.max(e);
            }
        }
        let overlapping: Vec<u64> = self.ranges.range(lo..=hi).map(|(&s, _)| s).collect();
        for s in overlapping {
            let e = self.ranges.remove(&s).expect("present");
            hi = hi.max(e);
        }
        self.ranges.insert(lo, hi);
    }

    /// Whether `[lo, hi)` is fully covered.
    pub fn covers(&self, lo: u64, hi: u64) -> bool {
        if lo >= hi {
            return true;
        }
        matches!(self.ranges.range(..=lo).next_back(), Some((_, &e)) if e >= hi)
    }

    /// End of the range that contains `from`, or `from` if none does.
    pub fn contiguous_end(&self, from: u64) -> u64 {
        match self.ranges.range(..=from).next_back() {
            Some((_, &e)) if e >= from => e,
            _ => from,
        }
    }

    /// Drops everything below `x`.
    pub fn trim_below(&mut self, x: u64) {
        while let Some((&s, &e)) = self.ranges.first_key_value() {
            if s >= x {
                break;
            }
            self.ranges.remove(&s);
            if e > x {
                self.ranges.insert(x, e);
                break;
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn max_end(&self) -> Option<u64> {
        self.ranges.last_key_value().map(|(_, &e)| e)
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }
}

/// Reassembly cursor over reported TCP sequence ranges.
#[derive(Debug, Clone, Default)]
pub struct ContiguityTracker {
    cursor: u64,
    ahead: IntervalSet,
}

impl ContiguityTracker {
    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    /// Records `[lo, hi)`; returns true if the cursor advanced.
    pub fn report(&mut self, lo: u64, hi: u64) -> bool {
        if hi <= self.cursor {
            return false;
        }
        self.ahead.insert(lo.max(self.cursor), hi);
        let end = self.ahead.contiguous_end(self.cursor);
        if end > self.cursor {
            self.cursor = end;
            self.ahead.trim_below(end);
            true
        } else {
            false
        }
    }

    /// Whether something beyond the cursor was reported.
    pub fn has_hole(&self) -> bool {
        !self.ahead.is_empty()
    }

    /// Maps a 32-bit wire sequence number to the 64-bit stream offset
    /// closest to the cursor.
    pub fn unwrap_seq(&self, seq: u32) -> u64 {
        let diff = seq.wrapping_sub(self.cursor as u32) as i32 as i64;
        (self.cursor as i64 + diff).max(0) as u64
    }
}

#[derive(Debug, Clone)]
pub struct ProAckState {
    pub tracker: ContiguityTracker,
    pub last_spoofed_ack: u64,
    pub observed_adv_window: u32,
    smoothed_gap_us: Option<f64>,
    last_new_report: Option<SimTime>,
    /// Smoothed time a hole below the newest report takes to fill, and its
    /// mean deviation.
    smoothed_fill_us: Option<f64>,
    fill_dev_us: f64,
    hole_since: Option<SimTime>,
    hole_probed: bool,
    last_probe: Option<SimTime>,
    /// Highest sequence each AP (by APID) has reported. An AP hears the
    /// sender in order and its tunnel is FIFO, so once every AP is past the
    /// cursor nobody holds the missing segment.
    newest_by_ap: Vec<(u64, SimTime)>,
    probe_token: u64,
    probe_cursor: u64,
    probe_armed: bool,
    pub spoofed_acks: u64,
    pub spoofed_dupacks: u64,
    pub probes: u64,
    pub dropped_real_acks: u64,
}

impl ProAckState {
    pub fn new(adv_window: u32) -> Self {
        ProAckState {
            tracker: ContiguityTracker::default(),
            last_spoofed_ack: 0,
            observed_adv_window: adv_window,
            smoothed_gap_us: None,
            last_new_report: None,
            smoothed_fill_us: None,
            fill_dev_us: 0.0,
            hole_since: None,
            hole_probed: false,
            last_probe: None,
            newest_by_ap: Vec::new(),
            probe_token: 0,
            probe_cursor: 0,
            probe_armed: false,
            spoofed_acks: 0,
            spoofed_dupacks: 0,
            probes: 0,
            dropped_real_acks: 0,
        }
    }

    fn note_new_report(&mut self, now: SimTime) {
        if let Some(prev) = self.last_new_report {
            let gap = (now - prev).as_micros() as f64;
            self.smoothed_gap_us = Some(match self.smoothed_gap_us {
                None => gap,
                Some(s) => s + (gap - s) / 8.0,
            });
        }
        self.last_new_report = Some(now);
    }

    /// Tracks how long holes last. Holes that needed a probe say nothing
    /// about reordering and are not sampled.
    fn note_cursor(&mut self, now: SimTime, advanced: bool) {
        if advanced {
            if let Some(t0) = self.hole_since.take() {
                if !self.hole_probed {
                    let d = (now - t0).as_micros() as f64;
                    match self.smoothed_fill_us {
                        None => {
                            self.smoothed_fill_us = Some(d);
                            self.fill_dev_us = d / 2.0;
                        }
                        Some(s) => {
                            self.fill_dev_us += ((d - s).abs() - self.fill_dev_us) / 4.0;
                            self.smoothed_fill_us = Some(s + (d - s) / 8.0);
                        }
                    }
                }
            }
            self.hole_probed = false;
        }
        if self.hole_since.is_none() && self.tracker.has_hole() {
            self.hole_since = Some(now);
            self.hole_probed = false;
        }
    }

    fn note_reporter(&mut self, apid: u16, seq: u64, now: SimTime) {
        let i = apid as usize;
        if self.newest_by_ap.len() <= i {
            self.newest_by_ap.resize(i + 1, (0, SimTime::ZERO));
        }
        let e = &mut self.newest_by_ap[i];
        *e = (e.0.max(seq), now);
    }

    /// Every AP that reported within [`LIVE_WINDOW`] has reported something
    /// beyond the cursor.
    pub fn loss_evident(&self, now: SimTime) -> bool {
        let c = self.tracker.cursor();
        let mut live = self
            .newest_by_ap
            .iter()
            .filter(|&&(_, at)| now.saturating_sub(at) < LIVE_WINDOW)
            .peekable();
        live.peek().is_some() && live.all(|&(s, _)| s > c)
    }

    /// Probe window: twice the smoothed gap between new reports plus
    /// `margin`.
    pub fn probe_interval(&self, margin: SimTime) -> SimTime {
        SimTime::from_micros((2.0 * self.smoothed_gap_us.unwrap_or(0.0)) as u64) + margin
    }

    /// Spacing of repeated probes for one hole: the probe window stretched
    /// to cover hole fill times the way an RTO covers round trips.
    pub fn reprobe_window(&self, margin: SimTime) -> SimTime {
        let fill = self.smoothed_fill_us.map_or(0.0, |f| f + 4.0 * self.fill_dev_us);
        self.probe_interval(margin).max(SimTime::from_micros(fill as u64) + margin)
    }
}

/// An AP silent for this long no longer vetoes a loss probe.
pub const LIVE_WINDOW: SimTime = SimTime::from_millis(500);

/// Holds out-of-order TCP data until the gap fills or the buffer overflows.
#[derive(Debug, Clone)]
pub struct ReorderBuffer {
    next: u64,
    held: BTreeMap<u64, Packet>,
    cap: usize,
    pub forced_releases: u64,
}

impl ReorderBuffer {
    pub fn new(cap: usize) -> Self {
        ReorderBuffer {
            next: 0,
            held: BTreeMap::new(),
            cap: cap.max(1),
            forced_releases: 0,
        }
    }

    pub fn held(&self) -> usize {
        self.held.len()
    }

    /// Accepts one segment; returns what to inject now, in order.
    pub fn push(&mut self, pkt: Packet) -> Vec<Packet> {
        let Some(seq) = pkt.tcp_seq() else {
            return vec![pkt];
        };
        if seq < self.next {
            return vec![pkt];
        }
        self.held.entry(seq).or_insert(pkt);
        let mut out = Vec::new();
        loop {
            match self.held.first_key_value() {
                Some((&s, _)) if s <= self.next => {}
                Some(_) if self.held.len() > self.cap => self.forced_releases += 1,
                _ => break,
            }
            let (s, p) = self.held.pop_first().expect("non-empty");
            self.next = self.next.max(s + p.payload_len() as u64);
            out.push(p);
        }
        out
    }
}

/// Everything the gateway can do to the outside world.
pub trait GatewayIo {
    fn now(&self) -> SimTime;
    /// Sends an encoded frame down AP `ap`'s tunnel.
    fn send_to_ap(&mut self, ap: u32, frame: Bytes, wire_bytes: u32);
    /// Hands a packet to the destination.
    fn inject(&mut self, pkt: Packet);
    /// Sends an ACK toward the sender along the default downlink.
    fn ack_to_sender(&mut self, ack: AckSegment);
    /// Requests `on_probe_timer(session_hash, token)` at `at`.
    fn arm_probe(&mut self, session_hash: u64, at: SimTime, token: u64);
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub mode: Mode,
    pub strategy: Strategy,
    pub reorder_capacity: usize,
    pub probe_margin: SimTime,
    pub reschedule_on_nack: bool,
    pub credit: CreditPolicy,
    /// Once more than this many reported packets wait without a forwarder,
    /// the oldest goes to the reporter with the least in flight.
    pub overflow_limit: Option<usize>,
    /// Upper bound on bytes scheduled to one AP and not yet delivered.
    pub inflight_cap: Option<u32>,
    pub ack_trigger: AckTrigger,
    /// Public address of AP i is `public_base + i`.
    pub public_base: Ipv4Addr,
}

pub const DEFAULT_OVERFLOW_LIMIT: usize = 64;
pub const DEFAULT_INFLIGHT_CAP: u32 = 24 * 1024;

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            mode: Mode::Basic,
            strategy: Strategy::FcfsCapacity,
            reorder_capacity: 256,
            probe_margin: SimTime::from_millis(10),
            reschedule_on_nack: true,
            credit: CreditPolicy::InFlight,
            overflow_limit: Some(DEFAULT_OVERFLOW_LIMIT),
            inflight_cap: Some(DEFAULT_INFLIGHT_CAP),
            ack_trigger: AckTrigger::Report,
            public_base: Ipv4Addr::new(198, 51, 100, 1),
        }
    }
}

/// One scheduling decision, as logged to `sched.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchedRecord {
    pub time: SimTime,
    pub ipid: u16,
    pub chosen_apid: u16,
    pub n_reporters: u32,
}

pub const SCHED_CSV_HEADER: &str = "time_us,ipid,chosen_apid,n_reporters";

#[derive(Debug, Clone)]
struct ApSlot {
    ap_index: u32,
    reported_capacity: u32,
    /// Bytes scheduled since the last report.
    since_report: u32,
    /// Bytes scheduled whose data has not reached the gateway.
    in_flight: u32,
    pending: VecDeque<u16>,
}

impl ApSlot {
    fn credit(&self, policy: CreditPolicy, cap: u32) -> u32 {
        let charged = match policy {
            CreditPolicy::SinceReport => self.since_report,
            CreditPolicy::InFlight => self.in_flight,
        };
        self.reported_capacity
            .saturating_sub(charged)
            .min(cap.saturating_sub(self.in_flight))
    }
}

#[derive(Debug, Clone)]
struct IpidRecord {
    reporters: Vec<u16>,
    scheduled: Option<u16>,
    nacked: Vec<u16>,
    len: u32,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct GatewayStats {
    pub reports: u64,
    pub late_reports: u64,
    pub schedules: u64,
    pub reschedules: u64,
    pub nacks: u64,
    pub lost_unrecoverable: u64,
    pub data_messages: u64,
    pub duplicate_data: u64,
    pub nat_mismatches: u64,
    pub injected: u64,
    pub control_bytes_down: u64,
}

/// Gateway state for one BaPu session.
#[derive(Debug, Clone)]
pub struct GwSession {
    pub key: SessionKey,
    pub hash: u64,
    pub nat: Option<NatRecord>,
    pub home_ap: Option<u32>,
    slots: Vec<ApSlot>,
    apid_of_ap: HashMap<u32, u16>,
    waiting_registration: Vec<u32>,
    records: HashMap<u16, IpidRecord>,
    done: IpidWindow,
    pub proack: Option<ProAckState>,
    pub reorder: Option<ReorderBuffer>,
    /// TCP byte ranges handed to the destination.
    pub injected: IntervalSet,
    pub stats: GatewayStats,
    credit_policy: CreditPolicy,
    inflight_cap: u32,
    overflow_limit: Option<usize>,
    /// Ipids in first-report order; may hold stale entries.
    waiting: VecDeque<u16>,
}

impl GwSession {
    fn new(key: SessionKey, cfg: &GatewayConfig) -> Self {
        let tcp = key.proto == Proto::Tcp;
        GwSession {
            key,
            hash: key.session_hash(),
            nat: None,
            home_ap: None,
            slots: Vec::new(),
            apid_of_ap: HashMap::new(),
            waiting_registration: Vec::new(),
            records: HashMap::new(),
            done: IpidWindow::default(),
            proack: (tcp && cfg.mode == Mode::Proactive).then(|| ProAckState::new(u32::MAX)),
            reorder: (tcp && cfg.mode == Mode::Buffering)
                .then(|| ReorderBuffer::new(cfg.reorder_capacity)),
            injected: IntervalSet::default(),
            stats: GatewayStats::default(),
            credit_policy: cfg.credit,
            inflight_cap: cfg.inflight_cap.unwrap_or(u32::MAX),
            overflow_limit: cfg.overflow_limit,
            waiting: VecDeque::new(),
        }
    }

    pub fn registered_aps(&self) -> usize {
        self.slots.len()
    }

    /// Per registered AP: (reported capacity, in-flight bytes, pending ipids).
    pub fn slot_view(&self) -> Vec<(u32, u32, usize)> {
        self.slots
            .iter()
            .map(|s| (s.reported_capacity, s.in_flight, s.pending.len()))
            .collect()
    }

    pub fn unscheduled(&self) -> usize {
        self.records.values().filter(|r| r.scheduled.is_none()).count()
    }

    /// Remaining credit of `apid`: last reported capacity minus the bytes
    /// charged against it under the configured [`CreditPolicy`].
    pub fn credit(&self, apid: u16) -> Option<u32> {
        self.slots.get(apid as usize).map(|s| s.credit(self.credit_policy, self.inflight_cap))
    }

    fn register(&mut self, ap: u32, io: &mut dyn GatewayIo) {
        let Some(nat) = self.nat else {
            if !self.waiting_registration.contains(&ap) {
                self.waiting_registration.push(ap);
            }
            return;
        };
        let apid = match self.apid_of_ap.get(&ap) {
            Some(&a) => a,
            None => {
                let a = self.slots.len() as u16;
                self.slots.push(ApSlot {
                    ap_index: ap,
                    reported_capacity: 0,
                    since_report: 0,
                    in_flight: 0,
                    pending: VecDeque::new(),
                });
                self.apid_of_ap.insert(ap, a);
                a
            }
        };
        let reply = TunnelMessage::RegisterReply {
            apid,
            session_hash: self.hash,
            nat,
        };
        self.send_control(ap, reply, io);
    }

    fn send_control(&mut self, ap: u32, msg: TunnelMessage, io: &mut dyn GatewayIo) {
        self.stats.control_bytes_down += CONTROL_WIRE_BYTES as u64;
        io.send_to_ap(ap, msg.encode(), CONTROL_WIRE_BYTES);
    }

    fn schedule(&mut self, ipid: u16, apid: u16, log: &mut Vec<SchedRecord>, io: &mut dyn GatewayIo) {
        let rec = self.records.get_mut(&ipid).expect("record");
        rec.scheduled = Some(apid);
        let len = rec.len;
        let n_reporters = rec.reporters.len() as u32;
        let slot = &mut self.slots[apid as usize];
        slot.since_report += len;
        slot.in_flight += len;
        self.stats.schedules += 1;
        log.push(SchedRecord {
            time: io.now(),
            ipid,
            chosen_apid: apid,
            n_reporters,
        });
        let aps: Vec<u32> = self.slots.iter().map(|s| s.ap_index).collect();
        for ap in aps {
            let msg = TunnelMessage::Schedule {
                apid,
                session_hash: self.hash,
                ipid,
            };
            self.send_control(ap, msg, io);
        }
    }

    /// Schedules waiting ipids that `apid` reported, oldest first, while its
    /// credit lasts.
    fn drain_pending(&mut self, apid: u16, log: &mut Vec<SchedRecord>, io: &mut dyn GatewayIo) {
        while let Some(&ipid) = self.slots[apid as usize].pending.front() {
            let Some(rec) = self.records.get(&ipid) else {
                self.slots[apid as usize].pending.pop_front();
                continue;
            };
            if rec.scheduled.is_some() || rec.nacked.contains(&apid) {
                self.slots[apid as usize].pending.pop_front();
                continue;
            }
            if self.slots[apid as usize].credit(self.credit_policy, self.inflight_cap) < rec.len {
                break;
            }
            self.slots[apid as usize].pending.pop_front();
            self.schedule(ipid, apid, log, io);
        }
    }

    fn on_report(
        &mut self,
        cfg: &GatewayConfig,
        apid: u16,
        ipid: u16,
        tcp_seq: u32,
        capacity: u32,
        packet_len: u16,
        log: &mut Vec<SchedRecord>,
        io: &mut dyn GatewayIo,
    ) {
        let Some(slot) = self.slots.get_mut(apid as usize) else {
            return;
        };
        self.stats.reports += 1;
        slot.reported_capacity = capacity;
        slot.since_report = 0;

        let now = io.now();
        let is_new = !self.done.contains(ipid) && !self.records.contains_key(&ipid);
        if let Some(pa) = self.proack.as_mut() {
            if is_new {
                pa.note_new_report(now);
            }
            let payload = payload_from_data_wire(Proto::Tcp, packet_len as u32) as u64;
            let lo = pa.tracker.unwrap_seq(tcp_seq);
            pa.note_reporter(apid, lo, now);
            let advanced = pa.tracker.report(lo, lo + payload);
            pa.note_cursor(now, advanced);
            if advanced && cfg.ack_trigger == AckTrigger::Report {
                self.spoof_ack(cfg, io);
            } else {
                self.ensure_probe(cfg, io);
            }
        }

        if self.done.contains(ipid) {
            self.stats.late_reports += 1;
        } else {
            let waiting = &mut self.waiting;
            let rec = self.records.entry(ipid).or_insert_with(|| {
                waiting.push_back(ipid);
                IpidRecord {
                    reporters: Vec::new(),
                    scheduled: None,
                    nacked: Vec::new(),
                    len: packet_len as u32,
                }
            });
            if !rec.reporters.contains(&apid) {
                rec.reporters.push(apid);
            }
            if rec.scheduled.is_some() {
                self.stats.late_reports += 1;
            } else {
                self.slots[apid as usize].pending.push_back(ipid);
            }
        }
        self.drain_pending(apid, log, io);
        self.overflow(log, io);
    }

    fn is_waiting(&self, ipid: u16) -> bool {
        self.records.get(&ipid).is_some_and(|r| r.scheduled.is_none())
    }

    fn overflow(&mut self, log: &mut Vec<SchedRecord>, io: &mut dyn GatewayIo) {
        let Some(limit) = self.overflow_limit else {
            return;
        };
        if self.waiting.len() <= limit {
            return;
        }
        let mut w = std::mem::take(&mut self.waiting);
        w.retain(|&i| self.is_waiting(i));
        while w.len() > limit {
            let ipid = w.pop_front().expect("non-empty");
            let rec = &self.records[&ipid];
            let target = rec
                .reporters
                .iter()
                .copied()
                .filter(|a| !rec.nacked.contains(a))
                .min_by_key(|&a| (self.slots[a as usize].in_flight, a));
            if let Some(a) = target {
                self.schedule(ipid, a, log, io);
            }
        }
        self.waiting = w;
    }

    fn spoof_ack(&mut self, cfg: &GatewayConfig, io: &mut dyn GatewayIo) {
        let key = self.key;
        let hash = self.hash;
        let injected_end = self.injected.contiguous_end(0);
        let pa = self.proack.as_mut().expect("proactive");
        let ack = match cfg.ack_trigger {
            AckTrigger::Report => pa.tracker.cursor(),
            AckTrigger::Injection => injected_end.min(pa.tracker.cursor()),
        };
        if ack <= pa.last_spoofed_ack && pa.spoofed_acks > 0 {
            return;
        }
        pa.last_spoofed_ack = ack;
        pa.spoofed_acks += 1;
        io.ack_to_sender(AckSegment {
            session: key,
            ack,
            adv_window: pa.observed_adv_window,
            data_len: 0,
            spoofed: true,
            handshake: false,
        });
        // Restart the probe window from this advance.
        pa.probe_armed = false;
        if pa.tracker.has_hole() {
            Self::arm(pa, hash, cfg, io);
        }
    }

    fn arm(pa: &mut ProAckState, hash: u64, cfg: &GatewayConfig, io: &mut dyn GatewayIo) {
        pa.probe_token += 1;
        pa.probe_armed = true;
        pa.probe_cursor = pa.tracker.cursor();
        let at = io.now() + pa.probe_interval(cfg.probe_margin);
        io.arm_probe(hash, at, pa.probe_token);
    }

    fn ensure_probe(&mut self, cfg: &GatewayConfig, io: &mut dyn GatewayIo) {
        let hash = self.hash;
        let pa = self.proack.as_mut().expect("proactive");
        if !pa.probe_armed && pa.tracker.has_hole() {
            Self::arm(pa, hash, cfg, io);
        }
    }

    fn on_probe(&mut self, cfg: &GatewayConfig, token: u64, io: &mut dyn GatewayIo) {
        let key = self.key;
        let hash = self.hash;
        let Some(pa) = self.proack.as_mut() else {
            return;
        };
        if token != pa.probe_token || !pa.probe_armed {
            return;
        }
        pa.probe_armed = false;
        if !pa.tracker.has_hole() || pa.tracker.cursor() != pa.probe_cursor {
            return;
        }
        let now = io.now();
        // Duplicate ACKs name the first unacknowledged byte; that must be
        // the missing segment itself.
        if pa.last_spoofed_ack != pa.tracker.cursor() {
            Self::arm(pa, hash, cfg, io);
            return;
        }
        let due = match (pa.hole_probed, pa.last_probe) {
            (true, Some(t)) => now.saturating_sub(t) >= pa.reprobe_window(cfg.probe_margin),
            _ => pa.loss_evident(now),
        };
        if !due {
            Self::arm(pa, hash, cfg, io);
            return;
        }
        pa.probes += 1;
        pa.hole_probed = true;
        pa.last_probe = Some(now);
        for _ in 0..3 {
            pa.spoofed_dupacks += 1;
            io.ack_to_sender(AckSegment {
                session: key,
                ack: pa.last_spoofed_ack,
                adv_window: pa.observed_adv_window,
                data_len: 0,
                spoofed: true,
                handshake: false,
            });
        }
        Self::arm(pa, hash, cfg, io);
    }

    fn on_nack(&mut self, apid: u16, ipid: u16, cfg: &GatewayConfig, log: &mut Vec<SchedRecord>, io: &mut dyn GatewayIo) {
        self.stats.nacks += 1;
        let Some(rec) = self.records.get_mut(&ipid) else {
            return;
        };
        if rec.scheduled != Some(apid) {
            return;
        }
        rec.scheduled = None;
        rec.nacked.push(apid);
        let slot = &mut self.slots[apid as usize];
        slot.in_flight = slot.in_flight.saturating_sub(rec.len);
        let candidates: Vec<u16> = rec
            .reporters
            .iter()
            .copied()
            .filter(|a| !rec.nacked.contains(a))
            .collect();
        if !cfg.reschedule_on_nack || candidates.is_empty() {
            self.records.remove(&ipid);
            self.done.insert(ipid);
            self.stats.lost_unrecoverable += 1;
            return;
        }
        let len = rec.len;
        self.stats.reschedules += 1;
        if let Some(&a) = candidates
            .iter()
            .find(|&&a| self.slots[a as usize].credit(self.credit_policy, self.inflight_cap) >= len)
        {
            self.schedule(ipid, a, log, io);
        } else {
            for a in candidates {
                self.slots[a as usize].pending.push_front(ipid);
            }
            self.waiting.push_front(ipid);
        }
    }

    fn deliver(&mut self, cfg: &GatewayConfig, pkt: Packet, io: &mut dyn GatewayIo) {
        let batch = match self.reorder.as_mut() {
            Some(rb) => rb.push(pkt),
            None => vec![pkt],
        };
        for p in batch {
            if let Some(seq) = p.tcp_seq() {
                self.injected.insert(seq, seq + p.payload_len() as u64);
            }
            self.stats.injected += 1;
            io.inject(p);
        }
        if self.proack.is_some() && cfg.ack_trigger == AckTrigger::Injection {
            self.spoof_ack(cfg, io);
        }
    }
}

/// The centralized controller.
#[derive(Debug)]
pub struct Gateway {
    pub cfg: GatewayConfig,
    sessions: HashMap<u64, GwSession>,
    /// NAT ports handed out so far.
    next_port: u16,
    pub sched_log: Vec<SchedRecord>,
    pub decode_errors: u64,
}

impl Gateway {
    pub fn new(cfg: GatewayConfig) -> Self {
        Gateway {
            cfg,
            sessions: HashMap::new(),
            next_port: 0,
            sched_log: Vec::new(),
            decode_errors: 0,
        }
    }

    pub fn session(&self, hash: u64) -> Option<&GwSession> {
        self.sessions.get(&hash)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &GwSession> {
        self.sessions.values()
    }

    fn public_ip(&self, ap: u32) -> Ipv4Addr {
        Ipv4Addr::from(u32::from(self.cfg.public_base) + ap)
    }

    /// A packet arrived on AP `ap`'s ordinary uplink (not tunnelled).
    pub fn on_default_packet(&mut self, ap: u32, pkt: Packet, io: &mut dyn GatewayIo) {
        let hash = pkt.session.session_hash();
        if pkt.is_session_opener() {
            let public_ip = self.public_ip(ap);
            let cfg = self.cfg.clone();
            let port = 20000 + self.next_port;
            let s = self
                .sessions
                .entry(hash)
                .or_insert_with(|| GwSession::new(pkt.session, &cfg));
            if s.nat.is_none() {
                self.next_port += 1;
                s.nat = Some(NatRecord {
                    public_ip,
                    public_port: port,
                });
                s.home_ap = Some(ap);
                for w in std::mem::take(&mut s.waiting_registration) {
                    s.register(w, io);
                }
            }
        }
        io.inject(pkt);
    }

    /// A frame arrived on AP `ap`'s tunnel.
    pub fn on_tunnel_frame(&mut self, ap: u32, frame: &Bytes, io: &mut dyn GatewayIo) {
        let msg = match TunnelMessage::decode(frame) {
            Ok(m) => m,
            Err(_) => {
                self.decode_errors += 1;
                return;
            }
        };
        let cfg = self.cfg.clone();
        if let TunnelMessage::RegisterRequest {
            session_hash,
            session,
            ..
        } = msg
        {
            let s = self
                .sessions
                .entry(session_hash)
                .or_insert_with(|| GwSession::new(session, &cfg));
            s.register(ap, io);
            return;
        }
        let Some(s) = self.sessions.get_mut(&msg.session_hash()) else {
            return;
        };
        match msg {
            TunnelMessage::Report {
                apid,
                ipid,
                tcp_seq,
                capacity,
                packet_len,
                ..
            } => s.on_report(&cfg, apid, ipid, tcp_seq, capacity, packet_len, &mut self.sched_log, io),
            TunnelMessage::Nack { apid, ipid, .. } => {
                s.on_nack(apid, ipid, &cfg, &mut self.sched_log, io)
            }
            TunnelMessage::Data { ipid, inner, .. } => {
                s.stats.data_messages += 1;
                let inner = match decode_inner(&inner) {
                    Ok(i) => i,
                    Err(_) => {
                        self.decode_errors += 1;
                        return;
                    }
                };
                if Some(NatRecord {
                    public_ip: inner.src_ip,
                    public_port: inner.src_port,
                }) != s.nat
                {
                    s.stats.nat_mismatches += 1;
                }
                match s.records.remove(&ipid) {
                    Some(rec) => {
                        if let Some(a) = rec.scheduled {
                            if let Some(slot) = s.slots.get_mut(a as usize) {
                                slot.in_flight = slot.in_flight.saturating_sub(rec.len);
                            }
                            s.drain_pending(a, &mut self.sched_log, io);
                        }
                    }
                    None if s.done.contains(ipid) => s.stats.duplicate_data += 1,
                    None => {}
                }
                s.done.insert(ipid);
                // Reverse NAT: the destination sees the session as the
                // sender opened it.
                let mut pkt = inner.into_packet(s.key.bssid, io.now());
                pkt.session = s.key;
                s.deliver(&cfg, pkt, io);
            }
            _ => {}
        }
    }

    /// An ACK from the destination heading back to the sender.
    pub fn on_destination_ack(&mut self, ack: AckSegment, io: &mut dyn GatewayIo) {
        if let Some(s) = self.sessions.get_mut(&ack.session.session_hash()) {
            if let Some(pa) = s.proack.as_mut() {
                pa.observed_adv_window = ack.adv_window;
                if ack.is_pure_ack() && !ack.handshake {
                    pa.dropped_real_acks += 1;
                    return;
                }
            }
        }
        io.ack_to_sender(ack);
    }

    pub fn on_probe_timer(&mut self, session_hash: u64, token: u64, io: &mut dyn GatewayIo) {
        let cfg = self.cfg.clone();
        if let Some(s) = self.sessions.get_mut(&session_hash) {
            s.on_probe(&cfg, token, io);
        }
    }

    /// Spoofed-ACK safety: every spoofed-ACKed byte was injected.
    pub fn spoofed_acks_covered(&self) -> bool {
        self.sessions.values().all(|s| match &s.proack {
            Some(pa) => s.injected.covers(0, pa.last_spoofed_ack),
            None => true,
        })
    }

    pub fn total_stats(&self) -> GatewayStats {
        let mut t = GatewayStats::default();
        for s in self.sessions.values() {
            let x = s.stats;
            t.reports += x.reports;
            t.late_reports += x.late_reports;
            t.schedules += x.schedules;
            t.reschedules += x.reschedules;
            t.nacks += x.nacks;
            t.lost_unrecoverable += x.lost_unrecoverable;
            t.data_messages += x.data_messages;
            t.duplicate_data += x.duplicate_data;
            t.nat_mismatches += x.nat_mismatches;
            t.injected += x.injected;
            t.control_bytes_down += x.control_bytes_down;
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::overhead::data_wire_bytes;
    use crate::packet::{MacAddr, Transport};
    use crate::wire::encode_inner;
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest, Just};
    use proptest::strategy::Strategy as _;

    const MSS: u32 = 1350;

    #[derive(Default)]
    struct Io {
        now: SimTime,
        to_ap: Vec<(u32, TunnelMessage)>,
        injected: Vec<Packet>,
        acks: Vec<AckSegment>,
        probes: Vec<(SimTime, u64)>,
    }

    impl GatewayIo for Io {
        fn now(&self) -> SimTime {
            self.now
        }
        fn send_to_ap(&mut self, ap: u32, frame: Bytes, _wire_bytes: u32) {
            self.to_ap.push((ap, TunnelMessage::decode(&frame).unwrap()));
        }
        fn inject(&mut self, pkt: Packet) {
            self.injected.push(pkt);
        }
        fn ack_to_sender(&mut self, ack: AckSegment) {
            self.acks.push(ack);
        }
        fn arm_probe(&mut self, _session_hash: u64, at: SimTime, token: u64) {
            self.probes.push((at, token));
        }
    }

    fn plain(mode: Mode) -> GatewayConfig {
        GatewayConfig {
            mode,
            overflow_limit: None,
            inflight_cap: None,
            ..GatewayConfig::default()
        }
    }

    struct Rig {
        gw: Gateway,
        io: Io,
        key: SessionKey,
    }

    fn pkt_len() -> u32 {
        data_wire_bytes(Proto::Tcp, MSS)
    }

    impl Rig {
        fn new(cfg: GatewayConfig, n_aps: u32) -> Rig {
            let key = SessionKey {
                bssid: MacAddr::for_index(0),
                proto: Proto::Tcp,
                src_ip: Ipv4Addr::new(192, 168, 1, 10),
                dst_ip: Ipv4Addr::new(203, 0, 113, 5),
                src_port: 40000,
                dst_port: 5001,
            };
            let mut r = Rig {
                gw: Gateway::new(cfg),
                io: Io::default(),
                key,
            };
            let opener = Packet {
                session: key,
                ipid: 0,
                transport: Transport::TcpHandshake,
                payload: Bytes::new(),
                sent_at: SimTime::ZERO,
            };
            r.gw.on_default_packet(0, opener, &mut r.io);
            for ap in 0..n_aps {
                let req = TunnelMessage::RegisterRequest {
                    session_hash: key.session_hash(),
                    capacity: 65536,
                    session: key,
                };
                r.gw.on_tunnel_frame(ap, &req.encode(), &mut r.io);
            }
            r.io.to_ap.clear();
            r.io.injected.clear();
            r
        }

        fn hash(&self) -> u64 {
            self.key.session_hash()
        }

        fn session(&self) -> &GwSession {
            self.gw.session(self.hash()).unwrap()
        }

        /// AP `ap` (APID equals AP index here) reports segment `seg`.
        fn report(&mut self, ap: u16, seg: u16, capacity: u32) {
            let m = TunnelMessage::Report {
                apid: ap,
                session_hash: self.hash(),
                ipid: seg,
                tcp_seq: seg as u32 * MSS,
                capacity,
                packet_len: pkt_len() as u16,
            };
            self.gw.on_tunnel_frame(ap as u32, &m.encode(), &mut self.io);
        }

        fn data(&mut self, ap: u16, seg: u16) {
            let nat = self.session().nat.unwrap();
            let pkt = Packet {
                session: self.key,
                ipid: seg,
                transport: Transport::TcpData {
                    seq: seg as u64 * MSS as u64,
                },
                payload: Bytes::from(vec![0u8; MSS as usize]),
                sent_at: SimTime::ZERO,
            };
            let m = TunnelMessage::Data {
                apid: ap,
                session_hash: self.hash(),
                ipid: seg,
                tcp_seq: seg as u32 * MSS,
                inner: encode_inner(&pkt, nat.public_ip, nat.public_port),
            };
            self.gw.on_tunnel_frame(ap as u32, &m.encode(), &mut self.io);
        }

        fn nack(&mut self, ap: u16, seg: u16) {
            let m = TunnelMessage::Nack {
                apid: ap,
                session_hash: self.hash(),
                ipid: seg,
            };
            self.gw.on_tunnel_frame(ap as u32, &m.encode(), &mut self.io);
        }

        /// `(ipid, apid)` decisions broadcast so far, once each.
        fn schedules(&self) -> Vec<(u16, u16)> {
            self.io
                .to_ap
                .iter()
                .filter(|(ap, _)| *ap == 0)
                .filter_map(|(_, m)| match *m {
                    TunnelMessage::Schedule { apid, ipid, .. } => Some((ipid, apid)),
                    _ => None,
                })
                .collect()
        }

        fn fire_probe(&mut self) {
            let (at, token) = *self.io.probes.last().unwrap();
            self.io.now = self.io.now.max(at);
            let h = self.hash();
            self.gw.on_probe_timer(h, token, &mut self.io);
        }
    }

    #[test]
    fn first_reporter_with_room_is_scheduled_and_broadcast() {
        let mut r = Rig::new(plain(Mode::Basic), 3);
        r.report(0, 1, 100);
        assert!(r.schedules().is_empty());
        r.report(1, 1, 65536);
        assert_eq!(r.schedules(), vec![(1, 1)]);
        let targets: Vec<u32> = r
            .io
            .to_ap
            .iter()
            .filter(|(_, m)| matches!(m, TunnelMessage::Schedule { .. }))
            .map(|(ap, _)| *ap)
            .collect();
        assert_eq!(targets, vec![0, 1, 2]);
        r.report(2, 1, 65536);
        assert_eq!(r.schedules().len(), 1);
        assert_eq!(r.session().stats.late_reports, 1);
    }

    #[test]
    fn in_flight_credit_is_returned_by_data_arrival() {
        let mut r = Rig::new(plain(Mode::Basic), 1);
        let cap = 2 * pkt_len() + 10;
        for seg in 1..=3 {
            r.report(0, seg, cap);
        }
        assert_eq!(r.schedules(), vec![(1, 0), (2, 0)]);
        assert_eq!(r.session().credit(0), Some(10));
        r.data(0, 1);
        assert_eq!(r.schedules(), vec![(1, 0), (2, 0), (3, 0)]);
        assert_eq!(r.io.injected.len(), 1);
    }

    #[test]
    fn since_report_credit_resets_on_each_report() {
        let cfg = GatewayConfig {
            credit: CreditPolicy::SinceReport,
            ..plain(Mode::Basic)
        };
        let mut r = Rig::new(cfg, 1);
        for seg in 1..=3 {
            r.report(0, seg, pkt_len());
        }
        assert_eq!(r.schedules().len(), 3);
    }

    #[test]
    fn in_flight_cap_bounds_each_ap() {
        let cfg = GatewayConfig {
            inflight_cap: Some(2 * pkt_len()),
            ..plain(Mode::Basic)
        };
        let mut r = Rig::new(cfg, 2);
        for seg in 1..=3 {
            r.report(0, seg, 65536);
        }
        assert_eq!(r.schedules(), vec![(1, 0), (2, 0)]);
        r.report(1, 3, 65536);
        assert_eq!(r.schedules().last(), Some(&(3, 1)));
    }

    #[test]
    fn overflow_sends_oldest_to_least_loaded_reporter() {
        let cfg = GatewayConfig {
            overflow_limit: Some(2),
            ..plain(Mode::Basic)
        };
        let mut r = Rig::new(cfg, 2);
        r.report(0, 1, pkt_len());
        r.report(1, 9, 65536);
        r.report(1, 2, 0);
        r.report(0, 2, 0);
        r.report(0, 3, 0);
        assert_eq!(r.schedules(), vec![(1, 0), (9, 1)]);
        // AP 1 empties; nobody has credit.
        r.data(1, 9);
        r.report(0, 4, 0);
        assert_eq!(r.schedules().last(), Some(&(2, 1)));
        assert_eq!(r.session().unscheduled(), 2);
    }

    #[test]
    fn nack_moves_the_packet_to_another_reporter() {
        let mut r = Rig::new(plain(Mode::Basic), 2);
        r.report(0, 1, 65536);
        r.report(1, 1, 65536);
        r.nack(0, 1);
        assert_eq!(r.schedules(), vec![(1, 0), (1, 1)]);
        r.nack(1, 1);
        assert_eq!(r.session().stats.lost_unrecoverable, 1);
        assert_eq!(r.session().unscheduled(), 0);
    }

    #[test]
    fn duplicate_data_is_injected_once() {
        let mut r = Rig::new(plain(Mode::Basic), 2);
        r.report(0, 1, 65536);
        r.data(0, 1);
        r.data(1, 1);
        assert_eq!(r.io.injected.len(), 2);
        assert_eq!(r.session().stats.duplicate_data, 1);
    }

    fn dest_ack(r: &Rig, ack: u64, adv_window: u32, data_len: u32) -> AckSegment {
        AckSegment {
            session: r.key,
            ack,
            adv_window,
            data_len,
            spoofed: false,
            handshake: false,
        }
    }

    #[test]
    fn basic_mode_passes_real_acks() {
        let mut r = Rig::new(plain(Mode::Basic), 1);
        let a = dest_ack(&r, 1350, 49152, 0);
        r.gw.on_destination_ack(a, &mut r.io);
        assert_eq!(r.io.acks, vec![a]);
    }

    #[test]
    fn proactive_drops_real_acks_and_copies_their_window() {
        let mut r = Rig::new(plain(Mode::Proactive), 1);
        let a = dest_ack(&r, 1350, 48 * 1024, 0);
        r.gw.on_destination_ack(a, &mut r.io);
        assert!(r.io.acks.is_empty());
        assert_eq!(r.session().proack.as_ref().unwrap().observed_adv_window, 48 * 1024);
        let d = dest_ack(&r, 1350, 48 * 1024, 200);
        r.gw.on_destination_ack(d, &mut r.io);
        assert_eq!(r.io.acks, vec![d]);
        r.report(0, 0, 65536);
        let s = r.io.acks.last().unwrap();
        assert!(s.spoofed);
        assert_eq!((s.ack, s.adv_window), (MSS as u64, 48 * 1024));
    }

    #[test]
    fn spoofed_ack_waits_for_the_gap() {
        let mut r = Rig::new(plain(Mode::Proactive), 2);
        r.report(0, 0, 65536);
        r.report(0, 2, 65536);
        let acked = |r: &Rig| r.io.acks.iter().filter(|a| a.spoofed).map(|a| a.ack).max();
        assert_eq!(acked(&r), Some(1350));
        r.report(1, 1, 65536);
        assert_eq!(acked(&r), Some(4050));
    }

    #[test]
    fn probe_needs_every_live_ap_past_the_hole() {
        let mut r = Rig::new(plain(Mode::Proactive), 2);
        r.report(0, 0, 65536);
        r.report(1, 0, 65536);
        r.report(0, 2, 65536);
        r.fire_probe();
        let dupacks = |r: &Rig| r.io.acks.iter().filter(|a| a.ack == 1350).count();
        // AP 1 may still hold segment 1.
        assert_eq!(dupacks(&r), 1);
        r.io.now += SimTime::from_millis(5);
        r.report(1, 3, 65536);
        r.fire_probe();
        assert_eq!(dupacks(&r), 4);
        assert_eq!(r.session().proack.as_ref().unwrap().probes, 1);
    }

    #[test]
    fn probe_window_is_twice_report_gap_plus_margin() {
        let mut pa = ProAckState::new(65535);
        for i in 0..50 {
            pa.note_new_report(SimTime::from_millis(4 * i));
        }
        assert_eq!(pa.probe_interval(SimTime::from_millis(10)), SimTime::from_millis(18));
    }

    #[test]
    fn modulo_examples() {
        assert_eq!(forwarder_for_hash(9, 3), 0);
        assert_eq!(forwarder_for_hash(9, 1), 0);
        assert!((0..=u16::MAX).all(|i| modulo_forwarder(i, 7) < 7));
    }

    fn seg(n: u64) -> Packet {
        Packet {
            session: SessionKey {
                bssid: MacAddr::for_index(0),
                proto: Proto::Tcp,
                src_ip: Ipv4Addr::LOCALHOST,
                dst_ip: Ipv4Addr::LOCALHOST,
                src_port: 1,
                dst_port: 2,
            },
            ipid: n as u16,
            transport: Transport::TcpData { seq: n * 10 },
            payload: Bytes::from(vec![0u8; 10]),
            sent_at: SimTime::ZERO,
        }
    }

    fn seqs(v: Vec<Packet>) -> Vec<u64> {
        v.iter().map(|p| p.tcp_seq().unwrap() / 10).collect()
    }

    #[test]
    fn reorder_buffer_releases_in_order() {
        let mut rb = ReorderBuffer::new(8);
        assert!(rb.push(seg(1)).is_empty());
        assert_eq!(seqs(rb.push(seg(0))), vec![0, 1]);
        assert_eq!(seqs(rb.push(seg(2))), vec![2]);
        assert_eq!(rb.forced_releases, 0);
    }

    #[test]
    fn full_reorder_buffer_releases_past_the_gap() {
        let mut rb = ReorderBuffer::new(2);
        assert!(rb.push(seg(2)).is_empty());
        assert!(rb.push(seg(3)).is_empty());
        assert_eq!(seqs(rb.push(seg(5))), vec![2, 3]);
        assert_eq!(rb.forced_releases, 1);
        assert_eq!(rb.held(), 1);
    }

    proptest! {
        #[test]
        fn cursor_matches_oracle_in_any_order(order in Just((0..12u64).collect::<Vec<_>>()).prop_shuffle()) {
            let mut t = ContiguityTracker::default();
            let mut seen = [false; 12];
            for &i in &order {
                t.report(i * MSS as u64, (i + 1) * MSS as u64);
                seen[i as usize] = true;
                let prefix = seen.iter().take_while(|&&b| b).count() as u64;
                prop_assert_eq!(t.cursor(), prefix * MSS as u64);
                prop_assert_eq!(t.has_hole(), seen[prefix as usize..].iter().any(|&b| b));
            }
        }

        #[test]
        fn fcfs_never_schedules_past_reported_capacity(
            ops in prop::collection::vec((0u8..3, 0u16..4, 1u16..40, 0u32..8), 1..200)
        ) {
            let mut r = Rig::new(plain(Mode::Basic), 4);
            for (kind, ap, seg, cap_pkts) in ops {
                let before = r.schedules().len();
                match kind {
                    0 => r.report(ap, seg, cap_pkts * pkt_len()),
                    1 => {
                        if let Some(&(s, a)) = r.schedules().iter().find(|(s, _)| *s == seg) {
                            r.data(a, s);
                        }
                    }
                    _ => {
                        if let Some(&(s, a)) = r.schedules().iter().rev().find(|(s, _)| *s == seg) {
                            r.nack(a, s);
                        }
                    }
                }
                let view = r.session().slot_view();
                for &(_, a) in &r.schedules()[before..] {
                    let (reported, in_flight, _) = view[a as usize];
                    prop_assert!(in_flight <= reported, "ap {} in flight {} reported {}", a, in_flight, reported);
                }
            }
        }

        #[test]
        fn interval_set_matches_bitmap(ranges in prop::collection::vec((0u64..64, 0u64..16), 0..20)) {
            let mut s = IntervalSet::default();
            let mut bits = [false; 80];
            for &(lo, len) in &ranges {
                s.insert(lo, lo + len);
                bits[lo as usize..(lo + len) as usize].iter_mut().for_each(|b| *b = true);
            }
            for lo in 0..80u64 {
                let hi = (lo + 3).min(80);
                prop_assert_eq!(s.covers(lo, hi), bits[lo as usize..hi as usize].iter().all(|&b| b));
            }
        }
    }
}
