//! Parses a scenario in the text format, validates it and prints it back
//! with every default filled in.

use bapu_sim::scenario::Scenario;

const TEXT: &str = "
# three APs, lossy overhearing
n_aps = 3
mode = proactive
monitor_loss = 0.2
rtt = 96
duration_s = 20
";

fn main() {
    let sc = Scenario::parse(TEXT).expect("valid scenario");
    sc.validate().expect("consistent scenario");
    print!("{}", sc.to_text());

    for bad in ["n_aps = 0", "mode = turbo", "n_aps 3"] {
        let err = Scenario::parse(bad).and_then(|s| s.validate().map(|_| s)).unwrap_err();
        println!("{bad:<14} -> {err}");
    }
}
