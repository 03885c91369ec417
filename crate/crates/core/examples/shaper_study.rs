//! Regular traffic comes and goes on a shaped line that also carries
//! background traffic. Prints the per-second split.

use bapu_sim::experiment::run_shaper_study;
use bapu_sim::scenario::Scenario;

fn main() {
    let sc = Scenario {
        shaper_study: true,
        ..Scenario::default()
    };
    let r = run_shaper_study(&sc);
    println!("  t  regular  background  (kbit/s)");
    for (i, (reg, bg)) in r.with_background.per_second().into_iter().enumerate() {
        println!("{:3}  {:7.0}  {:10.0}", i + 1, reg / 1e3, bg / 1e3);
    }
    println!(
        "background floor {:.0} kbit/s, regular kept {:.1}% of its baseline, reclaim in {:?} s",
        r.with_background.min_background_window_bps().unwrap_or(0.0) / 1e3,
        r.regular_ratio() * 100.0,
        r.with_background.reclaim_s(0.95)
    );
}
