//! UDP goodput as APs join, with the mean and spread over three seeds.

use bapu_sim::experiment::{seed_list, sweep, Axis};
use bapu_sim::packet::Proto;
use bapu_sim::scenario::Scenario;

fn main() {
    let base = Scenario {
        proto: Proto::Udp,
        duration_s: 20.0,
        ..Scenario::default()
    };
    let values = ["1", "2", "3", "4", "5", "6", "7"];
    let points = sweep(Axis::NAps, &base, &values, &seed_list(1, 3)).unwrap();
    for p in &points {
        let (g, sd) = p.goodput();
        println!("{:<8} {:6.2} ± {:.2} Mbit/s  efficiency {:.3}", p.label, g / 1e6, sd / 1e6, p.efficiency().0);
    }
}
