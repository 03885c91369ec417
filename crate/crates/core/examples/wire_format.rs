//! Encodes a report and a schedule frame, prints the bytes and decodes them
//! back.

use bapu_sim::wire::TunnelMessage;

fn hex(b: &[u8]) -> String {
    b.iter().map(|x| format!("{x:02x}")).collect::<Vec<_>>().join(" ")
}

fn main() {
    let msgs = [
        TunnelMessage::Report {
            apid: 3,
            session_hash: 0x0123_4567_89ab_cdef,
            ipid: 4242,
            tcp_seq: 1_350_000,
            capacity: 48_000,
            packet_len: 1500,
        },
        TunnelMessage::Schedule {
            apid: 3,
            session_hash: 0x0123_4567_89ab_cdef,
            ipid: 4242,
        },
    ];
    for m in msgs {
        let frame = m.encode();
        println!("{:?} ({} bytes)\n  {}", m.msg_type(), frame.len(), hex(&frame));
        let back = TunnelMessage::decode(&frame).expect("round trip");
        assert_eq!(back, m);
    }
    let mut bad = TunnelMessage::Schedule {
        apid: 0,
        session_hash: 1,
        ipid: 2,
    }
    .encode()
    .to_vec();
    bad[0] = 0x7f;
    println!("corrupt type byte: {:?}", TunnelMessage::decode(&bad.into()).unwrap_err());
}
