//! One sender transmits to its home AP while six neighbours listen in
//! monitor mode. Prints how often each neighbour caught a frame.

use bapu_sim::sim::RngStream;
use bapu_sim::wireless::{transmit_unicast, ChannelConfig};

fn main() {
    let cfg = ChannelConfig {
        per_unicast_loss: 0.1,
        monitor_loss: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.6],
        ..ChannelConfig::default()
    };
    let seed = 7;
    let mut home = RngStream::new(seed, 1);
    let mut monitors: Vec<RngStream> = (0..6).map(|i| RngStream::new(seed, 100 + i)).collect();

    let frames = 10_000;
    let mut caught = [0u32; 6];
    let mut attempts = 0;
    for _ in 0..frames {
        let out = transmit_unicast(1392, &cfg, &mut home, &mut monitors);
        attempts += out.attempts;
        for (c, heard) in caught.iter_mut().zip(&out.overheard) {
            *c += !heard.is_empty() as u32;
        }
    }
    println!("mean attempts per frame {:.3}", attempts as f64 / frames as f64);
    for (p, c) in cfg.monitor_loss.iter().zip(caught) {
        println!("monitor P={p:.1} caught {:.3}", c as f64 / frames as f64);
    }
}
