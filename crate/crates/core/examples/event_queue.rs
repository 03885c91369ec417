//! Two nodes bounce a token through the scheduler; a cancelled timer never
//! fires and same-time events run in scheduling order.

use bapu_sim::sim::{Model, NodeId, Scheduler, SimTime};

#[derive(Debug)]
enum Ev {
    Token(u32),
    Timeout,
}

struct PingPong {
    log: Vec<String>,
}

impl Model for PingPong {
    type Event = Ev;

    fn handle(&mut self, target: NodeId, ev: Ev, sched: &mut Scheduler<Ev>) {
        self.log.push(format!("{:>10} {target} {ev:?}", sched.now()));
        if let Ev::Token(n) = ev {
            if n < 4 {
                let other = NodeId(1 - target.0);
                sched.schedule_in(SimTime::from_millis(3), other, Ev::Token(n + 1));
            }
        }
    }
}

fn main() {
    let mut sched = Scheduler::new();
    let mut model = PingPong { log: Vec::new() };
    sched.schedule(SimTime::ZERO, NodeId(0), Ev::Token(0)).unwrap();
    let t = sched.schedule(SimTime::from_millis(5), NodeId(1), Ev::Timeout).unwrap();
    sched.schedule(SimTime::from_millis(6), NodeId(0), Ev::Timeout).unwrap();
    sched.cancel(t);

    let summary = sched.run_until(&mut model, SimTime::from_millis(20));
    for line in &model.log {
        println!("{line}");
    }
    println!(
        "fired {} cancelled {} pending {} clock {}",
        summary.fired, summary.cancelled, summary.pending, summary.end_time
    );
}
