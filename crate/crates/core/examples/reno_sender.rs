//! Drives the Reno sender against a cumulative-ACK receiver by hand: slow
//! start, one lost segment, three duplicate ACKs and the fast retransmit
//! that repairs it.

use bapu_sim::sim::SimTime;
use bapu_sim::tcp::{TcpConfig, TcpReceiver, TcpSender};
use bytes::Bytes;

fn main() {
    let mss = 1000;
    let window = 1 << 20;
    let mut tx = TcpSender::new(
        TcpConfig {
            mss,
            ..TcpConfig::default()
        },
        window,
    );
    let mut rx = TcpReceiver::new(window, false);
    let app = 60 * mss as u64;
    let rtt = SimTime::from_millis(50);
    let payload = Bytes::from(vec![0u8; mss as usize]);
    let mut now = SimTime::ZERO;
    let mut drop_next = Some(12 * mss as u64);
    let mut retx = Vec::new();

    while tx.state.snd_una < app {
        let mut flight: Vec<(u64, u32)> = std::mem::take(&mut retx);
        while let Some((seq, len)) = tx.next_segment(app) {
            tx.on_transmit(now, seq, len);
            flight.push((seq, len));
        }
        now += rtt;
        for (seq, len) in flight {
            if drop_next == Some(seq) {
                drop_next = None;
                continue;
            }
            let Some(ack) = rx.on_segment(seq, &payload.slice(..len as usize)).ack else {
                continue;
            };
            if let Some((rseq, rlen)) = tx.on_ack(now, ack, window).retransmit {
                println!("{now}: fast retransmit of {rseq}");
                tx.on_transmit(now, rseq, rlen);
                retx.push((rseq, rlen));
            }
        }
        println!(
            "{now}: una {:>6} cwnd {:>3} ssthresh {:>3}",
            tx.state.snd_una, tx.state.cwnd, tx.state.ssthresh
        );
    }
    println!("delivered {} bytes, {} fast retransmits", rx.delivered_bytes(), tx.fast_retransmits);
}
