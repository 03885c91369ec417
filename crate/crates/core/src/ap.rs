//! Access-point side of the protocol, for both home and monitor roles.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use bytes::Bytes;

use crate::overhead::{data_wire_bytes, plain_wire_bytes, CONTROL_WIRE_BYTES};
use crate::packet::{Packet, SessionKey};
use crate::sim::RngStream;
use crate::gateway::modulo_forwarder;
use crate::wire::{encode_inner, NatRecord, TunnelMessage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Home,
    Monitor,
}

/// Where an AP puts outgoing traffic. Implemented by the simulator over the
/// AP's uplink [`TunnelLink`](crate::tunnel::TunnelLink).
pub trait Uplink {
    /// Free bytes in the tunnel send queue.
    fn free_bytes(&self) -> u32;
    /// Queues an encoded tunnel frame. Control frames are always accepted;
    /// data frames are refused when they do not fit.
    fn send_tunnel(&mut self, frame: Bytes, wire_bytes: u32, control: bool) -> bool;
    /// Sends a packet on the regular (non-tunnelled) route.
    fn send_default(&mut self, pkt: Packet, wire_bytes: u32);
}

#[derive(Debug, Clone)]
pub struct ApConfig {
    /// Destination ports that mark a BaPu session.
    pub bapu_ports: BTreeSet<u16>,
    /// Packets buffered per session.
    pub buffer_capacity: usize,
    /// Probability that a scheduled packet is found missing (fault
    /// injection for the reschedule path).
    pub fault_prob: f64,
    pub forwarding: Forwarding,
}

/// How an AP decides to forward what it holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Forwarding {
    /// Report to the gateway and wait for a schedule.
    Scheduled,
    /// Forward iff `modulo_forwarder(ipid, n_aps)` names this AP; other
    /// holders also forward with probability `p_extra`.
    Modulo { n_aps: u32, p_extra: f64 },
}

impl Default for ApConfig {
    fn default() -> Self {
        ApConfig {
            bapu_ports: [5001].into_iter().collect(),
            buffer_capacity: 256,
            fault_prob: 0.0,
            forwarding: Forwarding::Scheduled,
        }
    }
}

/// Returns the session key and whether it is a BaPu session.
/// Whether AP `ap_index`, holding `ipid`, forwards it under the modulo
/// strategy with redundancy probability `p_extra`.
pub fn modulo_forwards(ipid: u16, ap_index: u32, n_aps: u32, p_extra: f64, rng: &mut RngStream) -> bool {
    modulo_forwarder(ipid, n_aps) == ap_index || rng.bernoulli(p_extra)
}

pub fn identify_session(pkt: &Packet, bapu_ports: &BTreeSet<u16>) -> (SessionKey, bool) {
    let key = pkt.session;
    (key, bapu_ports.contains(&key.dst_port))
}

/// Recently seen IPIDs, remembering at most the last 2^15 so that a wrapped
/// 16-bit IPID is treated as new.
#[derive(Debug, Clone)]
pub struct IpidWindow {
    bits: Vec<u64>,
    order: VecDeque<u16>,
}

pub const IPID_WINDOW: usize = 1 << 15;

impl Default for IpidWindow {
    fn default() -> Self {
        IpidWindow {
            bits: vec![0; 1 << 10],
            order: VecDeque::new(),
        }
    }
}

impl IpidWindow {
    pub fn contains(&self, ipid: u16) -> bool {
        self.bits[ipid as usize >> 6] & (1 << (ipid & 63)) != 0
    }

    /// Returns false if `ipid` was already in the window.
    pub fn insert(&mut self, ipid: u16) -> bool {
        if self.contains(ipid) {
            return false;
        }
        if self.order.len() == IPID_WINDOW {
            let old = self.order.pop_front().expect("non-empty");
            self.bits[old as usize >> 6] &= !(1 << (old & 63));
        }
        self.bits[ipid as usize >> 6] |= 1 << (ipid & 63);
        self.order.push_back(ipid);
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EntryState {
    /// Reported, waiting for a schedule.
    Reported,
    /// Scheduled to this AP, waiting for tunnel space.
    Queued,
    /// Scheduled to another AP; kept for a possible reschedule.
    Backup,
}

#[derive(Debug, Clone)]
struct Entry {
    pkt: Packet,
    state: EntryState,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ApStats {
    pub buffered: u64,
    pub duplicates: u64,
    pub dropped_full: u64,
    pub evicted: u64,
    pub reports: u64,
    pub forwarded: u64,
    pub nacks: u64,
    pub tunnel_drops: u64,
    pub default_routed: u64,
    pub released: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BufferOutcome {
    Accepted,
    Duplicate,
    Dropped,
}

/// Per-session state at one AP.
#[derive(Debug, Clone)]
pub struct ApSessionState {
    pub key: SessionKey,
    pub session_hash: u64,
    pub role: Role,
    pub apid: Option<u16>,
    pub nat_record: Option<NatRecord>,
    register_sent: bool,
    buffer: BTreeMap<u16, Entry>,
    /// Buffer insertion order; may hold stale ipids.
    order: VecDeque<u16>,
    seen: IpidWindow,
    unsent_reports: VecDeque<u16>,
    backlog: VecDeque<u16>,
    backlog_bytes: u32,
    pub stats: ApStats,
}

impl ApSessionState {
    pub fn new(key: SessionKey, role: Role) -> Self {
        ApSessionState {
            key,
            session_hash: key.session_hash(),
            role,
            apid: None,
            nat_record: None,
            register_sent: false,
            buffer: BTreeMap::new(),
            order: VecDeque::new(),
            seen: IpidWindow::default(),
            unsent_reports: VecDeque::new(),
            backlog: VecDeque::new(),
            backlog_bytes: 0,
            stats: ApStats::default(),
        }
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    pub fn holds(&self, ipid: u16) -> bool {
        self.buffer.contains_key(&ipid)
    }

    fn evict_backup(&mut self) -> bool {
        let buffer = &self.buffer;
        let pos = self.order.iter().position(
            |i| matches!(buffer.get(i), Some(e) if e.state == EntryState::Backup),
        );
        let Some(pos) = pos else { return false };
        let ipid = self.order.remove(pos).expect("in range");
        self.buffer.remove(&ipid);
        self.stats.evicted += 1;
        true
    }

    /// Drops stale ipids from the front of the insertion order.
    fn compact_order(&mut self) {
        while let Some(&front) = self.order.front() {
            if self.buffer.contains_key(&front) {
                break;
            }
            self.order.pop_front();
        }
        if self.order.len() > 4 * self.buffer.len() + 64 {
            let buffer = &self.buffer;
            self.order.retain(|i| buffer.contains_key(i));
        }
    }

    /// Duplicate elimination and buffering of one received copy.
    pub fn dedup_and_buffer(&mut self, pkt: &Packet, capacity: usize) -> BufferOutcome {
        if !self.seen.insert(pkt.ipid) {
            self.stats.duplicates += 1;
            return BufferOutcome::Duplicate;
        }
        if self.buffer.len() >= capacity && !self.evict_backup() {
            self.stats.dropped_full += 1;
            return BufferOutcome::Dropped;
        }
        if self.buffer.len() < self.order.len() {
            self.compact_order();
        }
        self.buffer.insert(
            pkt.ipid,
            Entry {
                pkt: pkt.clone(),
                state: EntryState::Reported,
            },
        );
        self.order.push_back(pkt.ipid);
        self.stats.buffered += 1;
        BufferOutcome::Accepted
    }

    /// Capacity figure advertised in reports.
    pub fn available_capacity(&self, tunnel_free: u32) -> u32 {
        tunnel_free.saturating_sub(self.backlog_bytes)
    }

    /// Builds the reception report for a buffered packet. Requires an APID.
    pub fn make_report(&self, ipid: u16, tunnel_free: u32) -> Option<TunnelMessage> {
        let apid = self.apid?;
        let e = self.buffer.get(&ipid)?;
        Some(TunnelMessage::Report {
            apid,
            session_hash: self.session_hash,
            ipid,
            tcp_seq: e.pkt.tcp_seq().unwrap_or(0) as u32,
            capacity: self.available_capacity(tunnel_free),
            packet_len: data_wire_bytes(self.key.proto, e.pkt.payload_len()) as u16,
        })
    }

    fn data_message(&self, pkt: &Packet) -> TunnelMessage {
        let nat = self.nat_record.expect("registered sessions carry a NAT record");
        TunnelMessage::Data {
            apid: self.apid.expect("registered"),
            session_hash: self.session_hash,
            ipid: pkt.ipid,
            tcp_seq: pkt.tcp_seq().unwrap_or(0) as u32,
            inner: encode_inner(pkt, nat.public_ip, nat.public_port),
        }
    }

    fn send_report(&mut self, ipid: u16, up: &mut dyn Uplink) {
        if let Some(r) = self.make_report(ipid, up.free_bytes()) {
            up.send_tunnel(r.encode(), CONTROL_WIRE_BYTES, true);
            self.stats.reports += 1;
        }
    }

    /// Strawman forwarding without reports: the modulo-designated AP sends,
    /// other holders add redundant copies with probability `p_extra`.
    fn modulo_forward(
        &mut self,
        ipid: u16,
        ap_index: u32,
        n_aps: u32,
        p_extra: f64,
        rng: &mut RngStream,
        up: &mut dyn Uplink,
    ) {
        let Some(e) = self.buffer.remove(&ipid) else {
            return;
        };
        if !modulo_forwards(ipid, ap_index, n_aps, p_extra, rng) {
            return;
        }
        let bytes = data_wire_bytes(self.key.proto, e.pkt.payload_len());
        let msg = self.data_message(&e.pkt);
        if up.send_tunnel(msg.encode(), bytes, false) {
            self.stats.forwarded += 1;
        } else {
            self.stats.tunnel_drops += 1;
        }
    }

    /// Moves queued packets into the tunnel while they fit.
    pub fn drain_backlog(&mut self, up: &mut dyn Uplink) {
        while let Some(&ipid) = self.backlog.front() {
            let Some(e) = self.buffer.get(&ipid) else {
                self.backlog.pop_front();
                continue;
            };
            let bytes = data_wire_bytes(self.key.proto, e.pkt.payload_len());
            let msg = self.data_message(&e.pkt);
            if !up.send_tunnel(msg.encode(), bytes, false) {
                break;
            }
            self.backlog.pop_front();
            self.backlog_bytes -= bytes;
            self.buffer.remove(&ipid);
            self.stats.forwarded += 1;
        }
    }

    /// Reacts to a schedule decision for this session.
    pub fn on_schedule(
        &mut self,
        apid: u16,
        ipid: u16,
        fault: Option<&mut RngStream>,
        fault_prob: f64,
        up: &mut dyn Uplink,
    ) {
        if Some(apid) != self.apid {
            if let Some(e) = self.buffer.get_mut(&ipid) {
                if e.state == EntryState::Reported {
                    e.state = EntryState::Backup;
                    self.stats.released += 1;
                }
            }
            return;
        }
        let faulted = match fault {
            Some(rng) => rng.bernoulli(fault_prob),
            None => false,
        };
        if faulted {
            self.buffer.remove(&ipid);
        }
        match self.buffer.get_mut(&ipid) {
            Some(e) if e.state != EntryState::Queued => {
                e.state = EntryState::Queued;
                let bytes = data_wire_bytes(self.key.proto, e.pkt.payload_len());
                self.backlog.push_back(ipid);
                self.backlog_bytes += bytes;
                self.drain_backlog(up);
            }
            Some(_) => {}
            None => {
                let nack = TunnelMessage::Nack {
                    apid,
                    session_hash: self.session_hash,
                    ipid,
                };
                up.send_tunnel(nack.encode(), CONTROL_WIRE_BYTES, true);
                self.stats.nacks += 1;
            }
        }
    }
}

/// One access point with all the sessions it has seen.
#[derive(Debug)]
pub struct BapuAp {
    pub index: u32,
    pub role: Role,
    pub cfg: ApConfig,
    sessions: HashMap<SessionKey, ApSessionState>,
    by_hash: HashMap<u64, SessionKey>,
    rng: RngStream,
    pub non_bapu_ignored: u64,
}

impl BapuAp {
    pub fn new(index: u32, role: Role, cfg: ApConfig, rng: RngStream) -> Self {
        BapuAp {
            index,
            role,
            cfg,
            sessions: HashMap::new(),
            by_hash: HashMap::new(),
            rng,
            non_bapu_ignored: 0,
        }
    }

    pub fn session(&self, key: &SessionKey) -> Option<&ApSessionState> {
        self.sessions.get(key)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &ApSessionState> {
        self.sessions.values()
    }

    pub fn total_stats(&self) -> ApStats {
        let mut t = ApStats::default();
        for s in self.sessions.values() {
            let x = s.stats;
            t.buffered += x.buffered;
            t.duplicates += x.duplicates;
            t.dropped_full += x.dropped_full;
            t.evicted += x.evicted;
            t.reports += x.reports;
            t.forwarded += x.forwarded;
            t.nacks += x.nacks;
            t.tunnel_drops += x.tunnel_drops;
            t.default_routed += x.default_routed;
            t.released += x.released;
        }
        t
    }

    fn session_entry<'a>(
        sessions: &'a mut HashMap<SessionKey, ApSessionState>,
        by_hash: &mut HashMap<u64, SessionKey>,
        role: Role,
        key: SessionKey,
        up: &mut dyn Uplink,
    ) -> &'a mut ApSessionState {
        let st = sessions.entry(key).or_insert_with(|| {
            by_hash.insert(key.session_hash(), key);
            ApSessionState::new(key, role)
        });
        if !st.register_sent {
            st.register_sent = true;
            let req = TunnelMessage::RegisterRequest {
                session_hash: st.session_hash,
                capacity: up.free_bytes(),
                session: key,
            };
            up.send_tunnel(req.encode(), CONTROL_WIRE_BYTES, true);
        }
        st
    }

    /// A copy of the sender's packet reached this AP (unicast reception at
    /// the home AP, overhearing at a monitor).
    pub fn on_packet(&mut self, pkt: &Packet, up: &mut dyn Uplink) -> BufferOutcome {
        let (key, is_bapu) = identify_session(pkt, &self.cfg.bapu_ports);
        if !is_bapu {
            if self.role == Role::Home {
                up.send_default(pkt.clone(), plain_wire_bytes(key.proto, pkt.payload_len()));
                return BufferOutcome::Accepted;
            }
            self.non_bapu_ignored += 1;
            return BufferOutcome::Dropped;
        }
        let role = self.role;
        let capacity = self.cfg.buffer_capacity;
        let st = Self::session_entry(&mut self.sessions, &mut self.by_hash, role, key, up);
        if pkt.is_session_opener() {
            if !st.seen.insert(pkt.ipid) {
                st.stats.duplicates += 1;
                return BufferOutcome::Duplicate;
            }
            if role == Role::Home {
                st.stats.default_routed += 1;
                up.send_default(pkt.clone(), plain_wire_bytes(key.proto, pkt.payload_len()));
            }
            return BufferOutcome::Accepted;
        }
        let out = st.dedup_and_buffer(pkt, capacity);
        if out == BufferOutcome::Accepted {
            if st.apid.is_none() {
                st.unsent_reports.push_back(pkt.ipid);
            } else if let Forwarding::Modulo { n_aps, p_extra } = self.cfg.forwarding {
                st.modulo_forward(pkt.ipid, self.index, n_aps, p_extra, &mut self.rng, up);
            } else {
                st.send_report(pkt.ipid, up);
            }
        }
        out
    }

    /// A frame arrived from the gateway over this AP's tunnel downlink.
    pub fn on_tunnel_frame(&mut self, msg: TunnelMessage, up: &mut dyn Uplink) {
        let hash = msg.session_hash();
        let Some(key) = self.by_hash.get(&hash).copied() else {
            return;
        };
        let fault_prob = self.cfg.fault_prob;
        let forwarding = self.cfg.forwarding;
        let index = self.index;
        let st = self.sessions.get_mut(&key).expect("indexed session");
        match msg {
            TunnelMessage::RegisterReply { apid, nat, .. } => {
                if st.apid.is_none() {
                    st.apid = Some(apid);
                    st.nat_record = Some(nat);
                    while let Some(ipid) = st.unsent_reports.pop_front() {
                        match forwarding {
                            Forwarding::Scheduled => st.send_report(ipid, up),
                            Forwarding::Modulo { n_aps, p_extra } => {
                                st.modulo_forward(ipid, index, n_aps, p_extra, &mut self.rng, up)
                            }
                        }
                    }
                }
            }
            TunnelMessage::Schedule { apid, ipid, .. } => {
                let fault = (fault_prob > 0.0).then_some(&mut self.rng);
                st.on_schedule(apid, ipid, fault, fault_prob, up);
            }
            _ => {}
        }
    }

    /// The uplink freed space; push any held data.
    pub fn on_uplink_drain(&mut self, up: &mut dyn Uplink) {
        for st in self.sessions.values_mut() {
            if !st.backlog.is_empty() {
                st.drain_backlog(up);
            }
        }
    }
}
