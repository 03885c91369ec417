//! Simulated traffic units: sessions, IP packets from the sender, and the
//! acknowledgements flowing back.

use std::fmt;
use std::net::Ipv4Addr;

use bytes::Bytes;

use crate::sim::SimTime;

/// 48-bit 802.11 address (BSSID or station address).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MacAddr(pub [u8; 6]);

impl MacAddr {
    /// Deterministic locally-administered address for the `index`th device.
    pub fn for_index(index: u32) -> Self {
        let b = index.to_be_bytes();
        MacAddr([0x02, 0xba, b[0], b[1], b[2], b[3]])
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            m[0], m[1], m[2], m[3], m[4], m[5]
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Proto {
    Tcp,
    Udp,
}

impl Proto {
    pub fn ip_number(self) -> u8 {
        match self {
            Proto::Tcp => 6,
            Proto::Udp => 17,
        }
    }

    pub fn from_ip_number(n: u8) -> Option<Proto> {
        match n {
            6 => Some(Proto::Tcp),
            17 => Some(Proto::Udp),
            _ => None,
        }
    }
}

impl fmt::Display for Proto {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Proto::Tcp => "tcp",
            Proto::Udp => "udp",
        })
    }
}

/// The 6-tuple that identifies a session across overlapping WLANs.
///
/// Two clients in different WLANs may legally share private addresses and
/// ports, so the BSSID is part of the key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SessionKey {
    pub bssid: MacAddr,
    pub proto: Proto,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
}

impl SessionKey {
    /// Canonical byte encoding, the input to [`SessionKey::session_hash`].
    pub fn to_bytes(&self) -> [u8; 19] {
        let mut out = [0u8; 19];
        out[..6].copy_from_slice(&self.bssid.0);
        out[6] = self.proto.ip_number();
        out[7..11].copy_from_slice(&self.src_ip.octets());
        out[11..15].copy_from_slice(&self.dst_ip.octets());
        out[15..17].copy_from_slice(&self.src_port.to_be_bytes());
        out[17..19].copy_from_slice(&self.dst_port.to_be_bytes());
        out
    }

    /// Stable 64-bit identifier carried in every tunnel message.
    pub fn session_hash(&self) -> u64 {
        fnv1a64(&self.to_bytes())
    }
}

/// FNV-1a, 64-bit. Stable across platforms and releases, unlike std's hasher.
pub fn fnv1a64(data: &[u8]) -> u64 {
    let mut h = Fnv64::new();
    h.write(data);
    h.finish()
}

/// Incremental FNV-1a, used for stream content digests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fnv64(u64);

impl Default for Fnv64 {
    fn default() -> Self {
        Self::new()
    }
}

impl Fnv64 {
    pub const fn new() -> Self {
        Fnv64(0xcbf2_9ce4_8422_2325)
    }

    pub fn write(&mut self, data: &[u8]) {
        let mut h = self.0;
        for &b in data {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        self.0 = h;
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

/// What the transport header of a sender packet says.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    /// TCP connection setup; always travels the default route.
    TcpHandshake,
    /// TCP data segment starting at stream offset `seq`.
    TcpData { seq: u64 },
    /// UDP datagram number `dgram` (iperf-style sequence in the payload).
    Udp { dgram: u64 },
}

/// An IP packet emitted by the sender.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub session: SessionKey,
    pub ipid: u16,
    pub transport: Transport,
    pub payload: Bytes,
    pub sent_at: SimTime,
}

impl Packet {
    pub fn payload_len(&self) -> u32 {
        self.payload.len() as u32
    }

    pub fn tcp_seq(&self) -> Option<u64> {
        match self.transport {
            Transport::TcpData { seq } => Some(seq),
            _ => None,
        }
    }

    /// Whether this packet must take the default uplink path so that NAT
    /// state gets installed (handshake, or the very first UDP datagram).
    pub fn is_session_opener(&self) -> bool {
        matches!(
            self.transport,
            Transport::TcpHandshake | Transport::Udp { dgram: 0 }
        )
    }
}

/// A TCP segment travelling from the destination back to the sender.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AckSegment {
    pub session: SessionKey,
    pub ack: u64,
    pub adv_window: u32,
    /// Reverse-direction payload bytes (zero for pure ACKs).
    pub data_len: u32,
    /// Generated by the gateway rather than the destination.
    pub spoofed: bool,
    pub handshake: bool,
}

impl AckSegment {
    pub fn is_pure_ack(&self) -> bool {
        self.data_len == 0
    }
}

/// Deterministic application payload for the TCP stream at `offset`.
pub fn stream_bytes(seed: u64, offset: u64, len: usize) -> Bytes {
    let mut out = Vec::with_capacity(len);
    let salt = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for i in 0..len as u64 {
        let x = (offset + i).wrapping_mul(0x2545_f491_4f6c_dd1d) ^ salt;
        out.push((x >> 29) as u8);
    }
    Bytes::from(out)
}
