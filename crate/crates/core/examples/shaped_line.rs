//! A 2 Mbit/s line with the two-class shaper: the owner's traffic takes
//! what it needs, the shared class keeps its floor.

use bapu_sim::sim::SimTime;
use bapu_sim::tunnel::{Enqueue, LinkConfig, ShaperConfig, TrafficClass, TunnelLink};

fn main() {
    let cfg = LinkConfig {
        shaper: Some(ShaperConfig::default()),
        ..LinkConfig::new(2_000_000, SimTime::from_millis(5), 1 << 20)
    };
    let mut link: TunnelLink<u32> = TunnelLink::new(cfg);
    let mut next_done = None;
    // Both classes are saturated for two seconds.
    for i in 0..400 {
        for class in [TrafficClass::Regular, TrafficClass::Background] {
            if let Enqueue::Accepted { tx_done: Some(t) } = link.enqueue(SimTime::ZERO, i, 1400, class, false) {
                next_done = Some(t);
            }
        }
    }
    let horizon = SimTime::from_secs(2);
    while let Some(t) = next_done.filter(|&t| t <= horizon) {
        let (_, next) = link.on_tx_done(t);
        next_done = next;
    }
    for class in [TrafficClass::Regular, TrafficClass::Background] {
        let s = link.stats(class);
        println!("{class:?}: {:.0} kbit/s", s.served_bytes as f64 * 8.0 / 2.0 / 1e3);
    }
}
