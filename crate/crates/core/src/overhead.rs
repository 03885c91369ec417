//! Per-packet byte costs on the shaped uplink.
//!
//! The overheads are the integer byte counts for which
//! `rate * payload / (payload + overhead)` at 2 Mbit/s and 1350-byte payloads
//! rounds to the reference ceilings 1.94 (UDP), 1.90 (TCP), 1.82 (BaPu UDP)
//! and 1.80 (BaPu TCP) Mbit/s. The BaPu figures include the packet's own
//! reception report.

use crate::packet::Proto;

pub const UDP_OVERHEAD: u32 = 42;
pub const TCP_OVERHEAD: u32 = 71;
pub const BAPU_UDP_OVERHEAD: u32 = 133;
pub const BAPU_TCP_OVERHEAD: u32 = 150;

/// Wire cost of every control message (register, report, schedule, nack).
pub const CONTROL_WIRE_BYTES: u32 = 20;

/// Wire cost of a header-only TCP segment (ACKs on the downlink).
pub const ACK_WIRE_BYTES: u32 = TCP_OVERHEAD;

pub const DEFAULT_PAYLOAD: u32 = 1350;

pub fn overhead(proto: Proto, bapu: bool) -> u32 {
    match (proto, bapu) {
        (Proto::Udp, false) => UDP_OVERHEAD,
        (Proto::Tcp, false) => TCP_OVERHEAD,
        (Proto::Udp, true) => BAPU_UDP_OVERHEAD,
        (Proto::Tcp, true) => BAPU_TCP_OVERHEAD,
    }
}

/// Bytes a plain (non-tunnelled) packet occupies on the uplink.
pub fn plain_wire_bytes(proto: Proto, payload: u32) -> u32 {
    payload + overhead(proto, false)
}

/// Bytes a tunnel data message occupies; its report is charged separately.
pub fn data_wire_bytes(proto: Proto, payload: u32) -> u32 {
    payload + overhead(proto, true) - CONTROL_WIRE_BYTES
}

/// Inverse of [`data_wire_bytes`].
pub fn payload_from_data_wire(proto: Proto, wire: u32) -> u32 {
    (wire + CONTROL_WIRE_BYTES).saturating_sub(overhead(proto, true))
}

/// Single-uplink goodput ceiling in bit/s.
pub fn theoretical_max(proto: Proto, bapu: bool, uplink_bps: u64, payload: u32) -> f64 {
    assert!(payload > 0, "payload must be positive");
    uplink_bps as f64 * payload as f64 / (payload + overhead(proto, bapu)) as f64
}
