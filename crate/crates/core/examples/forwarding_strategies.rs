//! Compares forwarder selection under lossy overhearing: capacity-aware
//! first-come scheduling against the two fixed modulo assignments.

use bapu_sim::ap::modulo_forwards;
use bapu_sim::experiment::run_scenario;
use bapu_sim::gateway::{Mode, Strategy};
use bapu_sim::scenario::Scenario;
use bapu_sim::sim::RngStream;

fn main() {
    // How many APs forward each packet under the redundant variant.
    let mut rng = RngStream::new(3, 0);
    let n = 7;
    let copies: u32 = (0..10_000u16)
        .map(|ipid| (0..n).filter(|&ap| modulo_forwards(ipid, ap, n, 0.3, &mut rng)).count() as u32)
        .sum();
    println!("redundant modulo, p_extra 0.3: {:.2} copies per packet", copies as f64 / 10_000.0);

    for strategy in [Strategy::FcfsCapacity, Strategy::ModuloRedundant, Strategy::Modulo] {
        let sc = Scenario {
            mode: Mode::Basic,
            strategy,
            monitor_loss: 0.3,
            duration_s: 30.0,
            ..Scenario::default()
        };
        let m = run_scenario(&sc).unwrap();
        println!("{:<17} {:5.2} Mbit/s  rtos {}", strategy.to_string(), m.goodput_bps / 1e6, m.rto_count);
    }
}
