//! Single-line goodput ceilings with and without the tunnel encapsulation.

use bapu_sim::experiment::theoretical_max_table;

fn main() {
    for payload in [1350, 512] {
        println!("payload {payload} B over 2 Mbit/s");
        for (name, bps) in theoretical_max_table(2_000_000, payload) {
            println!("  {name:<8} {:.3} Mbit/s", bps / 1e6);
        }
    }
}
