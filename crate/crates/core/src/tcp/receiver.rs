use std::collections::BTreeMap;

use bytes::Bytes;

use crate::packet::Fnv64;

/// Result of handing one data segment to the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceiveOutcome {
    /// Cumulative ACK to emit now, if any.
    pub ack: Option<u64>,
    /// The ACK repeats the previous one (out-of-order or old data).
    pub duplicate: bool,
    /// Bytes newly delivered in order to the application.
    pub delivered: u64,
    /// A delayed ACK is pending and the caller should arm its timer.
    pub arm_delack: bool,
}

/// Cumulative-ACK receiver with an out-of-order buffer.
#[derive(Debug, Clone)]
pub struct TcpReceiver {
    recv_next: u64,
    ooo: BTreeMap<u64, Bytes>,
    pub adv_window: u32,
    pub delayed_ack: bool,
    held: u32,
    digest: Fnv64,
    delivered: u64,
    pub dup_acks_sent: u64,
}

impl TcpReceiver {
    pub fn new(adv_window: u32, delayed_ack: bool) -> Self {
        TcpReceiver {
            recv_next: 0,
            ooo: BTreeMap::new(),
            adv_window,
            delayed_ack,
            held: 0,
            digest: Fnv64::new(),
            delivered: 0,
            dup_acks_sent: 0,
        }
    }

    pub fn recv_next(&self) -> u64 {
        self.recv_next
    }

    pub fn delivered_bytes(&self) -> u64 {
        self.delivered
    }

    /// FNV-1a over the in-order byte stream delivered so far.
    pub fn digest(&self) -> u64 {
        self.digest.finish()
    }

    pub fn buffered_segments(&self) -> usize {
        self.ooo.len()
    }

    fn deliver(&mut self, data: &[u8]) {
        self.digest.write(data);
        self.delivered += data.len() as u64;
        self.recv_next += data.len() as u64;
    }

    pub fn on_segment(&mut self, seq: u64, payload: &Bytes) -> ReceiveOutcome {
        let end = seq + payload.len() as u64;
        let before = self.recv_next;

        if end <= self.recv_next || payload.is_empty() {
            return self.dup_ack();
        }
        if seq > self.recv_next {
            let keep = self
                .ooo
                .get(&seq)
                .is_none_or(|existing| existing.len() < payload.len());
            if keep {
                self.ooo.insert(seq, payload.clone());
            }
            return self.dup_ack();
        }

        let skip = (self.recv_next - seq) as usize;
        self.deliver(&payload[skip..]);
        let mut filled_gap = false;
        while let Some((&s, _)) = self.ooo.first_key_value() {
            if s > self.recv_next {
                break;
            }
            let (s, data) = self.ooo.pop_first().unwrap();
            let e = s + data.len() as u64;
            if e > self.recv_next {
                let off = (self.recv_next - s) as usize;
                self.deliver(&data[off..]);
                filled_gap = true;
            }
        }
        let delivered = self.recv_next - before;

        if self.delayed_ack && !filled_gap && self.ooo.is_empty() {
            self.held += 1;
            if self.held < 2 {
                return ReceiveOutcome {
                    ack: None,
                    duplicate: false,
                    delivered,
                    arm_delack: true,
                };
            }
        }
        self.held = 0;
        ReceiveOutcome {
            ack: Some(self.recv_next),
            duplicate: false,
            delivered,
            arm_delack: false,
        }
    }

    fn dup_ack(&mut self) -> ReceiveOutcome {
        self.held = 0;
        self.dup_acks_sent += 1;
        ReceiveOutcome {
            ack: Some(self.recv_next),
            duplicate: true,
            delivered: 0,
            arm_delack: false,
        }
    }

    /// Delayed-ACK timer expiry.
    pub fn flush_delayed(&mut self) -> Option<u64> {
        if self.held == 0 {
            return None;
        }
        self.held = 0;
        Some(self.recv_next)
    }
}
