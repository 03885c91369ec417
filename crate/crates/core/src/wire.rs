//! Tunnel message framing shared by APs and the gateway.
//!
//! Every message starts with a fixed 23-byte little-endian header:
//!
//! ```text
//! offset  size  field
//!      0     1  msg_type      0=register 1=report 2=schedule 3=data 4=nack
//!      1     2  apid
//!      3     8  session_hash
//!     11     2  ipid
//!     13     4  tcp_seq       low 32 bits of the stream offset
//!     17     4  capacity      free bytes in the sender's tunnel queue
//!     21     2  payload_len
//!     23     -  payload
//! ```
//!
//! Register requests carry the session key as payload, register replies the
//! NAT record, reports the size of the reported packet, and data messages the
//! encapsulated sender packet.

use std::net::Ipv4Addr;

use bytes::{BufMut, Bytes, BytesMut};
use thiserror::Error;

use crate::packet::{MacAddr, Packet, Proto, SessionKey, Transport};
use crate::sim::SimTime;

pub const HEADER_LEN: usize = 23;

/// APID placeholder used by an AP before the gateway assigned one.
pub const UNASSIGNED_APID: u16 = 0xffff;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MsgType {
    Register = 0,
    Report = 1,
    Schedule = 2,
    Data = 3,
    Nack = 4,
}

impl TryFrom<u8> for MsgType {
    type Error = WireError;

    fn try_from(v: u8) -> Result<Self, WireError> {
        Ok(match v {
            0 => MsgType::Register,
            1 => MsgType::Report,
            2 => MsgType::Schedule,
            3 => MsgType::Data,
            4 => MsgType::Nack,
            other => return Err(WireError::UnknownType(other)),
        })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("frame truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("malformed {0} payload")]
    BadPayload(&'static str),
}

/// Public address binding handed to APs at registration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NatRecord {
    pub public_ip: Ipv4Addr,
    pub public_port: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TunnelMessage {
    /// AP -> gateway: request an APID for `session`.
    RegisterRequest {
        session_hash: u64,
        capacity: u32,
        session: SessionKey,
    },
    /// Gateway -> AP: assigned contributor id and NAT record.
    RegisterReply {
        apid: u16,
        session_hash: u64,
        nat: NatRecord,
    },
    Report {
        apid: u16,
        session_hash: u64,
        ipid: u16,
        tcp_seq: u32,
        capacity: u32,
        packet_len: u16,
    },
    Schedule {
        apid: u16,
        session_hash: u64,
        ipid: u16,
    },
    Data {
        apid: u16,
        session_hash: u64,
        ipid: u16,
        tcp_seq: u32,
        inner: Bytes,
    },
    Nack {
        apid: u16,
        session_hash: u64,
        ipid: u16,
    },
}

struct Header {
    msg_type: u8,
    apid: u16,
    session_hash: u64,
    ipid: u16,
    tcp_seq: u32,
    capacity: u32,
}

fn put_frame(h: Header, payload: &[u8]) -> Bytes {
    let mut b = BytesMut::with_capacity(HEADER_LEN + payload.len());
    b.put_u8(h.msg_type);
    b.put_u16_le(h.apid);
    b.put_u64_le(h.session_hash);
    b.put_u16_le(h.ipid);
    b.put_u32_le(h.tcp_seq);
    b.put_u32_le(h.capacity);
    b.put_u16_le(payload.len() as u16);
    b.put_slice(payload);
    b.freeze()
}

impl TunnelMessage {
    pub fn msg_type(&self) -> MsgType {
        match self {
            TunnelMessage::RegisterRequest { .. } | TunnelMessage::RegisterReply { .. } => {
                MsgType::Register
            }
            TunnelMessage::Report { .. } => MsgType::Report,
            TunnelMessage::Schedule { .. } => MsgType::Schedule,
            TunnelMessage::Data { .. } => MsgType::Data,
            TunnelMessage::Nack { .. } => MsgType::Nack,
        }
    }

    pub fn session_hash(&self) -> u64 {
        match *self {
            TunnelMessage::RegisterRequest { session_hash, .. }
            | TunnelMessage::RegisterReply { session_hash, .. }
            | TunnelMessage::Report { session_hash, .. }
            | TunnelMessage::Schedule { session_hash, .. }
            | TunnelMessage::Data { session_hash, .. }
            | TunnelMessage::Nack { session_hash, .. } => session_hash,
        }
    }

    pub fn is_control(&self) -> bool {
        !matches!(self, TunnelMessage::Data { .. })
    }

    pub fn encode(&self) -> Bytes {
        match self {
            TunnelMessage::RegisterRequest {
                session_hash,
                capacity,
                session,
            } => put_frame(
                Header {
                    msg_type: MsgType::Register as u8,
                    apid: UNASSIGNED_APID,
                    session_hash: *session_hash,
                    ipid: 0,
                    tcp_seq: 0,
                    capacity: *capacity,
                },
                &session.to_bytes(),
            ),
            TunnelMessage::RegisterReply {
                apid,
                session_hash,
                nat,
            } => {
                let mut p = [0u8; 6];
                p[..4].copy_from_slice(&nat.public_ip.octets());
                p[4..].copy_from_slice(&nat.public_port.to_le_bytes());
                put_frame(
                    Header {
                        msg_type: MsgType::Register as u8,
                        apid: *apid,
                        session_hash: *session_hash,
                        ipid: 0,
                        tcp_seq: 0,
                        capacity: 0,
                    },
                    &p,
                )
            }
            TunnelMessage::Report {
                apid,
                session_hash,
                ipid,
                tcp_seq,
                capacity,
                packet_len,
            } => put_frame(
                Header {
                    msg_type: MsgType::Report as u8,
                    apid: *apid,
                    session_hash: *session_hash,
                    ipid: *ipid,
                    tcp_seq: *tcp_seq,
                    capacity: *capacity,
                },
                &packet_len.to_le_bytes(),
            ),
            TunnelMessage::Schedule {
                apid,
                session_hash,
                ipid,
            } => put_frame(
                Header {
                    msg_type: MsgType::Schedule as u8,
                    apid: *apid,
                    session_hash: *session_hash,
                    ipid: *ipid,
                    tcp_seq: 0,
                    capacity: 0,
                },
                &[],
            ),
            TunnelMessage::Data {
                apid,
                session_hash,
                ipid,
                tcp_seq,
                inner,
            } => put_frame(
                Header {
                    msg_type: MsgType::Data as u8,
                    apid: *apid,
                    session_hash: *session_hash,
                    ipid: *ipid,
                    tcp_seq: *tcp_seq,
                    capacity: 0,
                },
                inner,
            ),
            TunnelMessage::Nack {
                apid,
                session_hash,
                ipid,
            } => put_frame(
                Header {
                    msg_type: MsgType::Nack as u8,
                    apid: *apid,
                    session_hash: *session_hash,
                    ipid: *ipid,
                    tcp_seq: 0,
                    capacity: 0,
                },
                &[],
            ),
        }
    }

    /// Decodes one complete frame. Trailing bytes beyond `payload_len` are
    /// rejected.
    pub fn decode(frame: &Bytes) -> Result<TunnelMessage, WireError> {
        if frame.len() < HEADER_LEN {
            return Err(WireError::Truncated {
                need: HEADER_LEN,
                have: frame.len(),
            });
        }
        let b = &frame[..];
        let msg_type = MsgType::try_from(b[0])?;
        let apid = u16::from_le_bytes([b[1], b[2]]);
        let session_hash = u64::from_le_bytes(b[3..11].try_into().expect("8 bytes"));
        let ipid = u16::from_le_bytes([b[11], b[12]]);
        let tcp_seq = u32::from_le_bytes(b[13..17].try_into().expect("4 bytes"));
        let capacity = u32::from_le_bytes(b[17..21].try_into().expect("4 bytes"));
        let payload_len = u16::from_le_bytes([b[21], b[22]]) as usize;
        if frame.len() != HEADER_LEN + payload_len {
            return Err(WireError::Truncated {
                need: HEADER_LEN + payload_len,
                have: frame.len(),
            });
        }
        let payload = frame.slice(HEADER_LEN..);

        Ok(match msg_type {
            MsgType::Register if apid == UNASSIGNED_APID => {
                let session =
                    session_from_bytes(&payload).ok_or(WireError::BadPayload("register"))?;
                TunnelMessage::RegisterRequest {
                    session_hash,
                    capacity,
                    session,
                }
            }
            MsgType::Register => {
                if payload.len() != 6 {
                    return Err(WireError::BadPayload("register reply"));
                }
                TunnelMessage::RegisterReply {
                    apid,
                    session_hash,
                    nat: NatRecord {
                        public_ip: Ipv4Addr::new(payload[0], payload[1], payload[2], payload[3]),
                        public_port: u16::from_le_bytes([payload[4], payload[5]]),
                    },
                }
            }
            MsgType::Report => {
                if payload.len() != 2 {
                    return Err(WireError::BadPayload("report"));
                }
                TunnelMessage::Report {
                    apid,
                    session_hash,
                    ipid,
                    tcp_seq,
                    capacity,
                    packet_len: u16::from_le_bytes([payload[0], payload[1]]),
                }
            }
            MsgType::Schedule => TunnelMessage::Schedule {
                apid,
                session_hash,
                ipid,
            },
            MsgType::Data => TunnelMessage::Data {
                apid,
                session_hash,
                ipid,
                tcp_seq,
                inner: payload,
            },
            MsgType::Nack => TunnelMessage::Nack {
                apid,
                session_hash,
                ipid,
            },
        })
    }
}

fn session_from_bytes(b: &[u8]) -> Option<SessionKey> {
    if b.len() != 19 {
        return None;
    }
    Some(SessionKey {
        bssid: MacAddr(b[..6].try_into().ok()?),
        proto: Proto::from_ip_number(b[6])?,
        src_ip: Ipv4Addr::new(b[7], b[8], b[9], b[10]),
        dst_ip: Ipv4Addr::new(b[11], b[12], b[13], b[14]),
        src_port: u16::from_be_bytes([b[15], b[16]]),
        dst_port: u16::from_be_bytes([b[17], b[18]]),
    })
}

/// Length of the encapsulated-packet header inside a data message.
pub const INNER_HEADER_LEN: usize = 24;

/// Serializes the sender's packet for carriage inside a data message. The
/// source address and port are written as given, so callers apply any NAT
/// rewrite first.
pub fn encode_inner(pkt: &Packet, src_ip: Ipv4Addr, src_port: u16) -> Bytes {
    let mut b = BytesMut::with_capacity(INNER_HEADER_LEN + pkt.payload.len());
    b.put_u8(pkt.session.proto.ip_number());
    b.put_slice(&src_ip.octets());
    b.put_slice(&pkt.session.dst_ip.octets());
    b.put_u16_le(src_port);
    b.put_u16_le(pkt.session.dst_port);
    b.put_u16_le(pkt.ipid);
    let (kind, n) = match pkt.transport {
        Transport::TcpHandshake => (0u8, 0u64),
        Transport::TcpData { seq } => (1, seq),
        Transport::Udp { dgram } => (2, dgram),
    };
    b.put_u8(kind);
    b.put_u64_le(n);
    b.put_slice(&pkt.payload);
    b.freeze()
}

/// Encapsulated packet as seen by the gateway after decapsulation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InnerPacket {
    pub proto: Proto,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub ipid: u16,
    pub transport: Transport,
    pub payload: Bytes,
}

pub fn decode_inner(b: &Bytes) -> Result<InnerPacket, WireError> {
    if b.len() < INNER_HEADER_LEN {
        return Err(WireError::Truncated {
            need: INNER_HEADER_LEN,
            have: b.len(),
        });
    }
    let proto = Proto::from_ip_number(b[0]).ok_or(WireError::BadPayload("inner proto"))?;
    let n = u64::from_le_bytes(b[16..24].try_into().expect("8 bytes"));
    let transport = match b[15] {
        0 => Transport::TcpHandshake,
        1 => Transport::TcpData { seq: n },
        2 => Transport::Udp { dgram: n },
        _ => return Err(WireError::BadPayload("inner kind")),
    };
    Ok(InnerPacket {
        proto,
        src_ip: Ipv4Addr::new(b[1], b[2], b[3], b[4]),
        dst_ip: Ipv4Addr::new(b[5], b[6], b[7], b[8]),
        src_port: u16::from_le_bytes([b[9], b[10]]),
        dst_port: u16::from_le_bytes([b[11], b[12]]),
        ipid: u16::from_le_bytes([b[13], b[14]]),
        transport,
        payload: b.slice(INNER_HEADER_LEN..),
    })
}

impl InnerPacket {
    /// Rebuilds the sender-side packet once the gateway has reversed NAT.
    pub fn into_packet(self, bssid: MacAddr, sent_at: SimTime) -> Packet {
        Packet {
            session: SessionKey {
                bssid,
                proto: self.proto,
                src_ip: self.src_ip,
                dst_ip: self.dst_ip,
                src_port: self.src_port,
                dst_port: self.dst_port,
            },
            ipid: self.ipid,
            transport: self.transport,
            payload: self.payload,
            sent_at,
        }
    }
}
