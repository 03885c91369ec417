//! The full topology as one discrete-event model: sender, wireless hop,
//! APs with their backhaul tunnels, gateway and destination.

use std::collections::{HashSet, VecDeque};
use std::net::Ipv4Addr;

use bytes::Bytes;

use crate::ap::{ApConfig, ApStats, BapuAp, Forwarding, Role, Uplink};
use crate::gateway::{Gateway, GatewayConfig, GatewayIo, GatewayStats, Strategy};
use crate::overhead::{overhead, ACK_WIRE_BYTES};
use crate::packet::{stream_bytes, AckSegment, MacAddr, Packet, Proto, SessionKey, Transport};
use crate::scenario::{RttPreset, Scenario, SenderRate};
use crate::sim::{EventHandle, Model, NodeId, RngStream, RunSummary, Scheduler, SimTime};
use crate::tcp::{CwndTraceRecord, TcpConfig, TcpReceiver, TcpSender, TimerAction};
use crate::tunnel::{Enqueue, LinkConfig, TrafficClass, TunnelLink};
use crate::wire::TunnelMessage;
use crate::wireless::{transmit_unicast, ChannelConfig};

pub const SENDER: NodeId = NodeId(0);
pub const DEST: NodeId = NodeId(1);
pub const GATEWAY: NodeId = NodeId(2);

pub fn ap_node(i: u32) -> NodeId {
    NodeId(3 + i)
}

/// Destination port that marks BaPu sessions.
pub const BAPU_PORT: u16 = 5001;
pub const PLAIN_PORT: u16 = 8080;
/// One-way delay between the gateway and the destination.
pub const LAN_DELAY: SimTime = SimTime::from_micros(100);
pub const DELACK_TIMEOUT: SimTime = SimTime::from_millis(40);
pub const SYN_RETRY: SimTime = SimTime::from_secs(1);
/// Frames the sender's MAC queue holds before dropping.
pub const MAC_QUEUE_FRAMES: usize = 1000;

#[derive(Debug, Clone)]
pub enum UpItem {
    Tunnel(Bytes),
    Default(Packet),
}

#[derive(Debug, Clone)]
pub enum DownItem {
    Tunnel(Bytes),
    Ack(AckSegment),
}

#[derive(Debug, Clone)]
pub enum Ev {
    Start,
    AppTick,
    MacDone,
    ApRx { ap: u32, pkt: Packet },
    UpDone { ap: u32 },
    DownDone { ap: u32 },
    AtGateway { ap: u32, item: UpItem },
    AtAp { ap: u32, item: DownItem },
    AtDest(Packet),
    DestAck(AckSegment),
    AtSender(AckSegment),
    Rto,
    SynRetry,
    DelAck,
    Probe { hash: u64, token: u64 },
    Sample,
}

/// Per-second samples.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Bin {
    pub delivered_bytes: u64,
    pub uplink_bytes: u64,
    pub control_bytes: u64,
    pub cwnd: u32,
}

/// Counters collected at the destination.
#[derive(Debug, Clone, Default)]
pub struct DestStats {
    pub udp_unique: u64,
    pub udp_duplicates: u64,
    pub udp_corrupt: u64,
    pub tcp_duplicate_segments: u64,
    pub acks_sent: u64,
}

struct UpPort<'a> {
    now: SimTime,
    ap: u32,
    link: &'a mut TunnelLink<UpItem>,
    sched: &'a mut Scheduler<Ev>,
    control_bytes: &'a mut u64,
}

impl Uplink for UpPort<'_> {
    fn free_bytes(&self) -> u32 {
        self.link.free_bytes(TrafficClass::Background)
    }

    fn send_tunnel(&mut self, frame: Bytes, wire_bytes: u32, control: bool) -> bool {
        let r = self.link.enqueue(
            self.now,
            UpItem::Tunnel(frame),
            wire_bytes,
            TrafficClass::Background,
            control,
        );
        if control {
            *self.control_bytes += wire_bytes as u64;
        }
        start_link(r, self.sched, self.ap, true)
    }

    fn send_default(&mut self, pkt: Packet, wire_bytes: u32) {
        let opener = pkt.is_session_opener();
        let r = self.link.enqueue(
            self.now,
            UpItem::Default(pkt),
            wire_bytes,
            TrafficClass::Regular,
            opener,
        );
        start_link(r, self.sched, self.ap, true);
    }
}

fn start_link(r: Enqueue, sched: &mut Scheduler<Ev>, ap: u32, up: bool) -> bool {
    match r {
        Enqueue::Accepted { tx_done } => {
            if let Some(t) = tx_done {
                let ev = if up { Ev::UpDone { ap } } else { Ev::DownDone { ap } };
                sched.schedule(t, ap_node(ap), ev).expect("future completion");
            }
            true
        }
        Enqueue::Dropped => false,
    }
}

struct GwPort<'a> {
    now: SimTime,
    downlinks: &'a mut [TunnelLink<DownItem>],
    sched: &'a mut Scheduler<Ev>,
    home_ap: u32,
}

impl GatewayIo for GwPort<'_> {
    fn now(&self) -> SimTime {
        self.now
    }

    fn send_to_ap(&mut self, ap: u32, frame: Bytes, wire_bytes: u32) {
        let r = self.downlinks[ap as usize].enqueue(
            self.now,
            DownItem::Tunnel(frame),
            wire_bytes,
            TrafficClass::Regular,
            true,
        );
        start_link(r, self.sched, ap, false);
    }

    fn inject(&mut self, pkt: Packet) {
        self.sched.schedule_in(LAN_DELAY, DEST, Ev::AtDest(pkt));
    }

    fn ack_to_sender(&mut self, ack: AckSegment) {
        let ap = self.home_ap;
        let r = self.downlinks[ap as usize].enqueue(
            self.now,
            DownItem::Ack(ack),
            ACK_WIRE_BYTES,
            TrafficClass::Regular,
            true,
        );
        start_link(r, self.sched, ap, false);
    }

    fn arm_probe(&mut self, session_hash: u64, at: SimTime, token: u64) {
        let at = at.max(self.now);
        self.sched
            .schedule(at, GATEWAY, Ev::Probe {
                hash: session_hash,
                token,
            })
            .expect("probe in the future");
    }
}

/// Everything that makes up one simulated run.
pub struct World {
    pub sc: Scenario,
    pub key: SessionKey,
    channel: ChannelConfig,
    home_rng: RngStream,
    monitor_rngs: Vec<RngStream>,
    end: SimTime,

    // Sender.
    pub tcp: TcpSender,
    established: bool,
    app_bytes: u64,
    next_dgram: u64,
    udp_limit: u64,
    app_interval_scaled: u128,
    app_ticks: u64,
    next_ipid: u16,
    mac_queue: VecDeque<Packet>,
    mac_busy: bool,
    pub mac_drops: u64,
    rto_timer: Option<EventHandle>,
    pub sent_packets: u64,

    // Infrastructure.
    pub aps: Vec<BapuAp>,
    pub uplinks: Vec<TunnelLink<UpItem>>,
    pub downlinks: Vec<TunnelLink<DownItem>>,
    pub gateway: Gateway,
    pub rtts: Vec<SimTime>,
    control_up: u64,

    // Destination.
    pub receiver: TcpReceiver,
    udp_seen: HashSet<u64>,
    delack_armed: bool,
    pub dest: DestStats,

    pub bins: Vec<Bin>,
    last_uplink_bytes: u64,
    last_control_bytes: u64,
}

impl World {
    pub fn new(sc: &Scenario) -> World {
        let n = sc.n_aps;
        let key = SessionKey {
            bssid: MacAddr::for_index(0),
            proto: sc.proto,
            src_ip: Ipv4Addr::new(192, 168, 1, 10),
            dst_ip: Ipv4Addr::new(203, 0, 113, 5),
            src_port: 40000,
            dst_port: if sc.bapu { BAPU_PORT } else { PLAIN_PORT },
        };
        let channel = ChannelConfig {
            wifi_rate_bps: sc.wifi_bps,
            per_unicast_loss: sc.per_unicast_loss,
            monitor_loss: vec![sc.monitor_loss; n as usize - 1],
            ..ChannelConfig::default()
        };
        let forwarding = match sc.strategy {
            Strategy::FcfsCapacity => Forwarding::Scheduled,
            Strategy::Modulo => Forwarding::Modulo {
                n_aps: n,
                p_extra: 0.0,
            },
            Strategy::ModuloRedundant => Forwarding::Modulo {
                n_aps: n,
                p_extra: sc.p_extra,
            },
        };
        let ap_cfg = ApConfig {
            bapu_ports: [BAPU_PORT].into_iter().collect(),
            buffer_capacity: sc.ap_buffer,
            fault_prob: sc.fault_prob,
            forwarding,
        };
        let aps = (0..n)
            .map(|i| {
                let role = if i == 0 { Role::Home } else { Role::Monitor };
                BapuAp::new(i, role, ap_cfg.clone(), RngStream::new(sc.seed, 200 + i as u64))
            })
            .collect();
        let mut rtt_rng = RngStream::new(sc.seed, 300);
        let rtts: Vec<SimTime> = (0..n)
            .map(|_| match sc.rtt {
                RttPreset::FixedMs(ms) => SimTime::from_millis(ms),
                RttPreset::UniformMs(lo, hi) => {
                    SimTime::from_micros(rtt_rng.uniform_u64(lo * 1000, hi * 1000))
                }
            })
            .collect();
        let half = |r: SimTime| SimTime::from_micros(r.as_micros() / 2);
        let uplinks = rtts
            .iter()
            .map(|&r| TunnelLink::new(LinkConfig::new(sc.uplink_bps, half(r), sc.queue_cap)))
            .collect();
        let downlinks = rtts
            .iter()
            .map(|&r| TunnelLink::new(LinkConfig::new(sc.downlink_bps, half(r), u32::MAX)))
            .collect();
        let gateway = Gateway::new(GatewayConfig {
            mode: sc.mode,
            strategy: sc.strategy,
            reorder_capacity: sc.reorder_buffer,
            probe_margin: SimTime::from_millis(sc.probe_margin_ms),
            reschedule_on_nack: sc.reschedule,
            credit: sc.credit,
            overflow_limit: (sc.overflow > 0).then_some(sc.overflow),
            inflight_cap: (sc.inflight_cap > 0).then_some(sc.inflight_cap),
            ack_trigger: sc.ack_trigger,
            ..GatewayConfig::default()
        });
        let tcp_cfg = TcpConfig {
            mss: sc.payload,
            fast_recovery_inflation: sc.fr_inflation,
            ..TcpConfig::default()
        };
        let app_rate = match (sc.proto, sc.sender_rate) {
            (Proto::Udp, _) => Some(sc.udp_rate_bps()),
            (Proto::Tcp, SenderRate::Fixed(r)) => Some(r),
            (Proto::Tcp, SenderRate::Unlimited) => None,
        };
        // Interval between application writes, in microseconds x rate.
        let app_interval_scaled = match app_rate {
            Some(_) => sc.payload as u128 * 8 * 1_000_000,
            None => 0,
        };
        let udp_limit = if sc.transfer_bytes > 0 {
            sc.transfer_bytes.div_ceil(sc.payload as u64)
        } else {
            u64::MAX
        };
        let mut ipid_rng = RngStream::new(sc.seed, 400);
        let bins = vec![Bin::default(); sc.duration_s.ceil() as usize];
        World {
            sc: sc.clone(),
            key,
            channel,
            home_rng: RngStream::new(sc.seed, 1),
            monitor_rngs: (1..n).map(|i| RngStream::new(sc.seed, 100 + i as u64)).collect(),
            end: SimTime::from_micros((sc.duration_s * 1e6).round() as u64),
            tcp: TcpSender::new(tcp_cfg, sc.adv_window),
            established: false,
            app_bytes: if app_rate.is_none() { u64::MAX / 4 } else { 0 },
            next_dgram: 0,
            udp_limit,
            app_interval_scaled,
            app_ticks: 0,
            next_ipid: ipid_rng.uniform_u64(0, u16::MAX as u64) as u16,
            mac_queue: VecDeque::new(),
            mac_busy: false,
            mac_drops: 0,
            rto_timer: None,
            sent_packets: 0,
            aps,
            uplinks,
            downlinks,
            gateway,
            rtts,
            control_up: 0,
            receiver: TcpReceiver::new(sc.adv_window, sc.delayed_ack),
            udp_seen: HashSet::new(),
            delack_armed: false,
            dest: DestStats::default(),
            bins,
            last_uplink_bytes: 0,
            last_control_bytes: 0,
        }
    }

    pub fn end_time(&self) -> SimTime {
        self.end
    }

    /// Runs the scenario to its end time and returns the engine counters.
    pub fn run(&mut self) -> RunSummary {
        let mut sched = Scheduler::new();
        sched.schedule(SimTime::ZERO, SENDER, Ev::Start).expect("t=0");
        for s in 1..=self.bins.len() as u64 {
            let t = SimTime::from_secs(s).min(self.end);
            sched.schedule(t, GATEWAY, Ev::Sample).expect("future");
        }
        let end = self.end;
        sched.run_until(self, end)
    }

    fn app_rate(&self) -> u64 {
        match (self.sc.proto, self.sc.sender_rate) {
            (Proto::Udp, _) => self.sc.udp_rate_bps(),
            (_, SenderRate::Fixed(r)) => r,
            _ => 0,
        }
    }

    fn transfer_limit(&self) -> u64 {
        if self.sc.transfer_bytes > 0 {
            self.sc.transfer_bytes
        } else {
            u64::MAX / 4
        }
    }

    fn ipid(&mut self) -> u16 {
        let i = self.next_ipid;
        self.next_ipid = self.next_ipid.wrapping_add(1);
        i
    }

    fn mac_enqueue(&mut self, pkt: Packet, sched: &mut Scheduler<Ev>) {
        if self.mac_queue.len() >= MAC_QUEUE_FRAMES {
            self.mac_drops += 1;
            return;
        }
        self.sent_packets += 1;
        self.mac_queue.push_back(pkt);
        if !self.mac_busy {
            self.mac_start(sched);
        }
    }

    fn mac_start(&mut self, sched: &mut Scheduler<Ev>) {
        let Some(pkt) = self.mac_queue.pop_front() else {
            self.mac_busy = false;
            return;
        };
        self.mac_busy = true;
        let bytes = pkt.payload_len() + overhead(self.sc.proto, false);
        let out = transmit_unicast(bytes, &self.channel, &mut self.home_rng, &mut self.monitor_rngs);
        let per = self.channel.attempt_airtime(bytes);
        let prop = self.channel.propagation_delay;
        if out.home_received {
            let at = out.attempt_arrival(out.attempts - 1, per, prop);
            sched.schedule_in(at, ap_node(0), Ev::ApRx {
                ap: 0,
                pkt: pkt.clone(),
            });
        }
        for (m, hits) in out.overheard.iter().enumerate() {
            if let Some(&k) = hits.first() {
                let ap = m as u32 + 1;
                sched.schedule_in(out.attempt_arrival(k, per, prop), ap_node(ap), Ev::ApRx {
                    ap,
                    pkt: pkt.clone(),
                });
            }
        }
        sched.schedule_in(per.mul(out.attempts as u64), SENDER, Ev::MacDone);
    }

    fn send_segment(&mut self, seq: u64, len: u32, sched: &mut Scheduler<Ev>) {
        let now = sched.now();
        self.tcp.on_transmit(now, seq, len);
        let pkt = Packet {
            session: self.key,
            ipid: self.ipid(),
            transport: Transport::TcpData { seq },
            payload: stream_bytes(self.sc.seed, seq, len as usize),
            sent_at: now,
        };
        self.mac_enqueue(pkt, sched);
        if self.rto_timer.is_none_or(|h| !sched.is_pending(h)) {
            self.restart_rto(sched);
        }
    }

    fn restart_rto(&mut self, sched: &mut Scheduler<Ev>) {
        if let Some(h) = self.rto_timer.take() {
            sched.cancel(h);
        }
        self.rto_timer = Some(sched.schedule_in(self.tcp.state.rto, SENDER, Ev::Rto));
    }

    fn pump(&mut self, sched: &mut Scheduler<Ev>) {
        if !self.established {
            return;
        }
        let avail = self.app_bytes.min(self.transfer_limit());
        while let Some((seq, len)) = self.tcp.next_segment(avail) {
            self.send_segment(seq, len, sched);
        }
    }

    fn send_syn(&mut self, sched: &mut Scheduler<Ev>) {
        let pkt = Packet {
            session: self.key,
            ipid: self.ipid(),
            transport: Transport::TcpHandshake,
            payload: Bytes::new(),
            sent_at: sched.now(),
        };
        self.mac_enqueue(pkt, sched);
        sched.schedule_in(SYN_RETRY, SENDER, Ev::SynRetry);
    }

    fn schedule_app_tick(&mut self, sched: &mut Scheduler<Ev>) {
        let rate = self.app_rate() as u128;
        if rate == 0 {
            return;
        }
        self.app_ticks += 1;
        let at = SimTime::from_micros((self.app_interval_scaled * self.app_ticks as u128 / rate) as u64);
        if at < self.end {
            sched.schedule(at, SENDER, Ev::AppTick).expect("future tick");
        }
    }

    fn on_app_tick(&mut self, sched: &mut Scheduler<Ev>) {
        match self.sc.proto {
            Proto::Udp => {
                if self.next_dgram >= self.udp_limit {
                    return;
                }
                let d = self.next_dgram;
                self.next_dgram += 1;
                let len = self.sc.payload as usize;
                let pkt = Packet {
                    session: self.key,
                    ipid: self.ipid(),
                    transport: Transport::Udp { dgram: d },
                    payload: stream_bytes(self.sc.seed, d * len as u64, len),
                    sent_at: sched.now(),
                };
                self.mac_enqueue(pkt, sched);
            }
            Proto::Tcp => {
                self.app_bytes += self.sc.payload as u64;
                self.pump(sched);
            }
        }
        self.schedule_app_tick(sched);
    }

    fn on_sender_ack(&mut self, ack: AckSegment, sched: &mut Scheduler<Ev>) {
        if self.sc.proto != Proto::Tcp {
            return;
        }
        if ack.handshake {
            if !self.established {
                self.established = true;
                self.pump(sched);
            }
            return;
        }
        if !self.established {
            return;
        }
        let out = self.tcp.on_ack(sched.now(), ack.ack, ack.adv_window);
        if let Some((seq, len)) = out.retransmit {
            self.send_segment(seq, len, sched);
        }
        match out.timer {
            TimerAction::Restart => self.restart_rto(sched),
            TimerAction::Stop => {
                if let Some(h) = self.rto_timer.take() {
                    sched.cancel(h);
                }
            }
            TimerAction::Keep => {}
        }
        self.pump(sched);
    }

    fn bin_index(&self, now: SimTime) -> usize {
        ((now.as_micros() / 1_000_000) as usize).min(self.bins.len().saturating_sub(1))
    }

    fn dest_ack(&mut self, ack: u64, sched: &mut Scheduler<Ev>) {
        self.dest.acks_sent += 1;
        let seg = AckSegment {
            session: self.key,
            ack,
            adv_window: self.receiver.adv_window,
            data_len: 0,
            spoofed: false,
            handshake: false,
        };
        sched.schedule_in(LAN_DELAY, GATEWAY, Ev::DestAck(seg));
    }

    fn on_dest(&mut self, pkt: Packet, sched: &mut Scheduler<Ev>) {
        let now = sched.now();
        let b = self.bin_index(now);
        match pkt.transport {
            Transport::TcpHandshake => {
                let seg = AckSegment {
                    session: self.key,
                    ack: 0,
                    adv_window: self.receiver.adv_window,
                    data_len: 0,
                    spoofed: false,
                    handshake: true,
                };
                sched.schedule_in(LAN_DELAY, GATEWAY, Ev::DestAck(seg));
            }
            Transport::TcpData { seq } => {
                let out = self.receiver.on_segment(seq, &pkt.payload);
                if out.duplicate && seq + (pkt.payload_len() as u64) <= self.receiver.recv_next() {
                    self.dest.tcp_duplicate_segments += 1;
                }
                self.bins[b].delivered_bytes += out.delivered;
                if let Some(a) = out.ack {
                    self.dest_ack(a, sched);
                }
                if out.arm_delack && !self.delack_armed {
                    self.delack_armed = true;
                    sched.schedule_in(DELACK_TIMEOUT, DEST, Ev::DelAck);
                }
            }
            Transport::Udp { dgram } => {
                let len = self.sc.payload as usize;
                if pkt.payload != stream_bytes(self.sc.seed, dgram * len as u64, len) {
                    self.dest.udp_corrupt += 1;
                    return;
                }
                if self.udp_seen.insert(dgram) {
                    self.dest.udp_unique += 1;
                    self.bins[b].delivered_bytes += pkt.payload_len() as u64;
                } else {
                    self.dest.udp_duplicates += 1;
                }
            }
        }
    }

    fn sample(&mut self, now: SimTime) {
        let b = self.bin_index(now.saturating_sub(SimTime::from_micros(1)));
        let up: u64 = self
            .uplinks
            .iter()
            .map(|l| {
                l.stats(TrafficClass::Background).served_bytes
                    + l.stats(TrafficClass::Regular).served_bytes
            })
            .sum();
        let ctrl = self.control_up + self.gateway.total_stats().control_bytes_down;
        let bin = &mut self.bins[b];
        bin.uplink_bytes = up - self.last_uplink_bytes;
        bin.control_bytes = ctrl - self.last_control_bytes;
        bin.cwnd = self.tcp.state.cwnd;
        self.last_uplink_bytes = up;
        self.last_control_bytes = ctrl;
    }

    // ---- results ----

    /// Application goodput at the destination after warm-up, in bit/s.
    pub fn goodput_bps(&self) -> f64 {
        let w = self.sc.warmup_s;
        let mut bytes = 0u64;
        let mut span = 0.0;
        for (i, bin) in self.bins.iter().enumerate() {
            let lo = i as f64;
            let hi = ((i + 1) as f64).min(self.sc.duration_s);
            if lo >= w {
                bytes += bin.delivered_bytes;
                span += hi - lo;
            }
        }
        if span <= 0.0 {
            return 0.0;
        }
        bytes as f64 * 8.0 / span
    }

    /// Mean cwnd over send events after warm-up.
    pub fn mean_cwnd(&self) -> f64 {
        let w = SimTime::from_micros((self.sc.warmup_s * 1e6) as u64);
        let mut n = 0u64;
        let mut sum = 0u64;
        for r in self.tcp.trace() {
            if r.time >= w && r.event_tag == crate::tcp::TraceTag::Send {
                n += 1;
                sum += r.cwnd as u64;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum as f64 / n as f64
        }
    }

    pub fn cwnd_trace(&self) -> &[CwndTraceRecord] {
        self.tcp.trace()
    }

    pub fn ap_stats(&self) -> ApStats {
        let mut t = ApStats::default();
        for a in &self.aps {
            let s = a.total_stats();
            t.buffered += s.buffered;
            t.duplicates += s.duplicates;
            t.dropped_full += s.dropped_full;
            t.evicted += s.evicted;
            t.reports += s.reports;
            t.forwarded += s.forwarded;
            t.nacks += s.nacks;
            t.tunnel_drops += s.tunnel_drops;
            t.default_routed += s.default_routed;
            t.released += s.released;
        }
        t
    }

    pub fn gateway_stats(&self) -> GatewayStats {
        self.gateway.total_stats()
    }

    /// Control bytes on uplinks and downlinks.
    pub fn control_bytes(&self) -> u64 {
        self.control_up + self.gateway.total_stats().control_bytes_down
    }

    /// Bytes the application handed to the transport.
    pub fn offered_bytes(&self) -> u64 {
        match self.sc.proto {
            Proto::Udp => self.next_dgram * self.sc.payload as u64,
            Proto::Tcp => self.tcp.state.snd_max,
        }
    }

    /// Whether the destination stream matches what the sender wrote.
    pub fn tcp_stream_intact(&self) -> bool {
        let n = self.receiver.recv_next();
        let mut h = crate::packet::Fnv64::new();
        let mut off = 0;
        while off < n {
            let len = (n - off).min(1 << 16);
            h.write(&stream_bytes(self.sc.seed, off, len as usize));
            off += len;
        }
        h.finish() == self.receiver.digest()
    }
}

impl Model for World {
    type Event = Ev;

    fn handle(&mut self, _target: NodeId, ev: Ev, sched: &mut Scheduler<Ev>) {
        let now = sched.now();
        match ev {
            Ev::Start => match self.sc.proto {
                Proto::Tcp => {
                    self.send_syn(sched);
                    self.schedule_app_tick(sched);
                }
                Proto::Udp => self.on_app_tick(sched),
            },
            Ev::AppTick => self.on_app_tick(sched),
            Ev::MacDone => self.mac_start(sched),
            Ev::SynRetry => {
                if !self.established {
                    self.send_syn(sched);
                }
            }
            Ev::Rto => {
                self.rto_timer = None;
                if let Some((seq, len)) = self.tcp.on_rto(now) {
                    self.send_segment(seq, len, sched);
                    self.restart_rto(sched);
                    self.pump(sched);
                }
            }
            Ev::AtSender(ack) => self.on_sender_ack(ack, sched),
            Ev::ApRx { ap, pkt } => {
                let mut port = UpPort {
                    now,
                    ap,
                    link: &mut self.uplinks[ap as usize],
                    sched,
                    control_bytes: &mut self.control_up,
                };
                self.aps[ap as usize].on_packet(&pkt, &mut port);
            }
            Ev::UpDone { ap } => {
                let (dep, next) = self.uplinks[ap as usize].on_tx_done(now);
                sched
                    .schedule(dep.arrival, GATEWAY, Ev::AtGateway { ap, item: dep.item })
                    .expect("future arrival");
                if let Some(t) = next {
                    sched.schedule(t, ap_node(ap), Ev::UpDone { ap }).expect("future");
                }
                let mut port = UpPort {
                    now,
                    ap,
                    link: &mut self.uplinks[ap as usize],
                    sched,
                    control_bytes: &mut self.control_up,
                };
                self.aps[ap as usize].on_uplink_drain(&mut port);
            }
            Ev::DownDone { ap } => {
                let (dep, next) = self.downlinks[ap as usize].on_tx_done(now);
                sched
                    .schedule(dep.arrival, ap_node(ap), Ev::AtAp { ap, item: dep.item })
                    .expect("future arrival");
                if let Some(t) = next {
                    sched.schedule(t, ap_node(ap), Ev::DownDone { ap }).expect("future");
                }
            }
            Ev::AtGateway { ap, item } => {
                let mut io = GwPort {
                    now,
                    downlinks: &mut self.downlinks,
                    sched,
                    home_ap: 0,
                };
                match item {
                    UpItem::Tunnel(frame) => self.gateway.on_tunnel_frame(ap, &frame, &mut io),
                    UpItem::Default(pkt) => self.gateway.on_default_packet(ap, pkt, &mut io),
                }
            }
            Ev::AtAp { ap, item } => match item {
                DownItem::Tunnel(frame) => {
                    if let Ok(msg) = TunnelMessage::decode(&frame) {
                        let mut port = UpPort {
                            now,
                            ap,
                            link: &mut self.uplinks[ap as usize],
                            sched,
                            control_bytes: &mut self.control_up,
                        };
                        self.aps[ap as usize].on_tunnel_frame(msg, &mut port);
                    }
                }
                DownItem::Ack(ack) => {
                    let at = self.channel.attempt_airtime(ACK_WIRE_BYTES)
                        + self.channel.propagation_delay;
                    sched.schedule_in(at, SENDER, Ev::AtSender(ack));
                }
            },
            Ev::AtDest(pkt) => self.on_dest(pkt, sched),
            Ev::DelAck => {
                self.delack_armed = false;
                if let Some(a) = self.receiver.flush_delayed() {
                    self.dest_ack(a, sched);
                }
            }
            Ev::DestAck(ack) => {
                let mut io = GwPort {
                    now,
                    downlinks: &mut self.downlinks,
                    sched,
                    home_ap: 0,
                };
                self.gateway.on_destination_ack(ack, &mut io);
            }
            Ev::Probe { hash, token } => {
                let mut io = GwPort {
                    now,
                    downlinks: &mut self.downlinks,
                    sched,
                    home_ap: 0,
                };
                self.gateway.on_probe_timer(hash, token, &mut io);
            }
            Ev::Sample => self.sample(now),
        }
    }
}
