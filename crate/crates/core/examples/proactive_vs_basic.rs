//! Seven APs carry one TCP upload, first relaying the receiver's ACKs and
//! then with the gateway acknowledging on report.

use bapu_sim::experiment::run_scenario;
use bapu_sim::gateway::Mode;
use bapu_sim::scenario::Scenario;

fn main() {
    for mode in [Mode::Basic, Mode::Proactive] {
        let sc = Scenario {
            mode,
            n_aps: 7,
            duration_s: 30.0,
            ..Scenario::default()
        };
        let m = run_scenario(&sc).unwrap();
        println!(
            "{:<9} {:6.2} Mbit/s  efficiency {:.3}  mean cwnd {:6.1}  fast retransmits {:3}  rtos {}",
            mode.to_string(),
            m.goodput_bps / 1e6,
            m.efficiency,
            m.mean_cwnd,
            m.fast_retransmits,
            m.rto_count
        );
    }
}
