//! Uplink sharing on one home line: the owner's regular traffic against a
//! greedy background (aggregation) class, through the two-class shaper.

use crate::overhead::{data_wire_bytes, plain_wire_bytes};
use crate::packet::Proto;
use crate::scenario::Scenario;
use crate::sim::{Model, NodeId, Scheduler, SimTime};
use crate::tunnel::{Enqueue, LinkConfig, ShaperConfig, TrafficClass, TunnelLink};

const TICK: SimTime = SimTime::from_millis(10);
const TICKS_PER_S: usize = 100;
const NODE: NodeId = NodeId(0);

#[derive(Debug, Clone, PartialEq)]
pub struct ShaperStudy {
    pub uplink_bps: u64,
    pub floor_bps: u64,
    pub regular_bps: u64,
    /// Regular traffic is offered during `[regular_on, regular_off)`.
    pub regular_on: SimTime,
    pub regular_off: SimTime,
    pub duration: SimTime,
    pub queue_cap: u32,
    pub background: bool,
    pub payload: u32,
}

impl ShaperStudy {
    /// Regular traffic runs from 10 s until 20 s before the end.
    pub fn from_scenario(sc: &Scenario) -> Self {
        let duration = SimTime::from_micros((sc.duration_s * 1e6).round() as u64);
        let on = SimTime::from_secs(10).min(duration);
        let off = duration.saturating_sub(SimTime::from_secs(20)).max(on);
        ShaperStudy {
            uplink_bps: sc.uplink_bps,
            floor_bps: sc.shaper_floor_bps,
            regular_bps: sc.regular_bps,
            regular_on: on,
            regular_off: off,
            duration,
            queue_cap: sc.queue_cap,
            background: true,
            payload: sc.payload,
        }
    }

    pub fn without_background(&self) -> Self {
        ShaperStudy {
            background: false,
            ..self.clone()
        }
    }

    pub fn run(&self) -> ShaperTrace {
        let mut m = Sim::new(self);
        let mut sched = Scheduler::new();
        sched.schedule(SimTime::ZERO, NODE, Ev::Tick).expect("t=0");
        if self.regular_on < self.regular_off {
            sched.schedule(self.regular_on, NODE, Ev::Regular).expect("future");
        }
        m.top_up(SimTime::ZERO, &mut sched);
        sched.run_until(&mut m, self.duration);
        m.trace
    }
}

/// Served wire bytes per 10 ms tick.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ShaperTrace {
    pub regular: Vec<u64>,
    pub background: Vec<u64>,
    /// Whether the background class had queued bytes at the tick's start.
    pub background_backlog: Vec<bool>,
    pub regular_on: SimTime,
    pub regular_off: SimTime,
    pub uplink_bps: u64,
}

impl ShaperTrace {
    fn rate(bytes: u64, ticks: usize) -> f64 {
        bytes as f64 * 8.0 * TICKS_PER_S as f64 / ticks as f64
    }

    /// Lowest background rate over any 1 s window (10 ms steps) during which
    /// the background class was backlogged throughout.
    pub fn min_background_window_bps(&self) -> Option<f64> {
        let n = self.background.len();
        let mut best: Option<f64> = None;
        for s in 0..n.saturating_sub(TICKS_PER_S - 1) {
            let w = s..s + TICKS_PER_S;
            if !self.background_backlog[w.clone()].iter().all(|&b| b) {
                continue;
            }
            let r = Self::rate(self.background[w].iter().sum(), TICKS_PER_S);
            best = Some(best.map_or(r, |b: f64| b.min(r)));
        }
        best
    }

    /// Mean regular-class rate while regular traffic was offered.
    pub fn regular_goodput_bps(&self) -> f64 {
        let lo = (self.regular_on.as_micros() / TICK.as_micros()) as usize;
        let hi = ((self.regular_off.as_micros() / TICK.as_micros()) as usize).min(self.regular.len());
        if hi <= lo {
            return 0.0;
        }
        Self::rate(self.regular[lo..hi].iter().sum(), hi - lo)
    }

    /// Seconds from the end of regular traffic until the end of the first
    /// 1 s window in which background runs at `frac` of the line rate.
    pub fn reclaim_s(&self, frac: f64) -> Option<f64> {
        let off = (self.regular_off.as_micros() / TICK.as_micros()) as usize;
        let target = frac * self.uplink_bps as f64;
        (off..self.background.len().saturating_sub(TICKS_PER_S - 1))
            .find(|&s| Self::rate(self.background[s..s + TICKS_PER_S].iter().sum(), TICKS_PER_S) >= target)
            .map(|s| (s + TICKS_PER_S - off) as f64 / TICKS_PER_S as f64)
    }

    /// Per-second rates `(regular, background)` in bit/s.
    pub fn per_second(&self) -> Vec<(f64, f64)> {
        self.regular
            .chunks(TICKS_PER_S)
            .zip(self.background.chunks(TICKS_PER_S))
            .map(|(r, b)| (Self::rate(r.iter().sum(), r.len()), Self::rate(b.iter().sum(), b.len())))
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
enum Ev {
    Tick,
    Regular,
    TxDone,
}

struct Sim {
    link: TunnelLink<()>,
    study: ShaperStudy,
    regular_frame: u32,
    background_frame: u32,
    regular_interval: SimTime,
    regular_sent: u64,
    trace: ShaperTrace,
}

impl Sim {
    fn new(s: &ShaperStudy) -> Self {
        let mut cfg = LinkConfig::new(s.uplink_bps, SimTime::ZERO, s.queue_cap);
        cfg.shaper = Some(ShaperConfig {
            background_floor_bps: s.floor_bps,
            ..ShaperConfig::default()
        });
        let regular_frame = plain_wire_bytes(Proto::Tcp, s.payload);
        let ticks = (s.duration.as_micros() / TICK.as_micros()) as usize;
        Sim {
            link: TunnelLink::new(cfg),
            regular_frame,
            background_frame: data_wire_bytes(Proto::Tcp, s.payload),
            regular_interval: SimTime::from_micros(
                (regular_frame as u64 * 8 * 1_000_000).div_ceil(s.regular_bps.max(1)),
            ),
            regular_sent: 0,
            study: s.clone(),
            trace: ShaperTrace {
                regular: vec![0; ticks],
                background: vec![0; ticks],
                background_backlog: vec![false; ticks],
                regular_on: s.regular_on,
                regular_off: s.regular_off,
                uplink_bps: s.uplink_bps,
            },
        }
    }

    fn offer(&mut self, now: SimTime, bytes: u32, class: TrafficClass, sched: &mut Scheduler<Ev>) -> bool {
        match self.link.enqueue(now, (), bytes, class, false) {
            Enqueue::Accepted { tx_done } => {
                if let Some(t) = tx_done {
                    sched.schedule(t, NODE, Ev::TxDone).expect("future");
                }
                true
            }
            Enqueue::Dropped => false,
        }
    }

    /// Keeps the background class backlogged.
    fn top_up(&mut self, now: SimTime, sched: &mut Scheduler<Ev>) {
        if !self.study.background {
            return;
        }
        while self.link.free_bytes(TrafficClass::Background) >= self.background_frame {
            self.offer(now, self.background_frame, TrafficClass::Background, sched);
        }
    }

    fn tick_index(&self, t: SimTime) -> Option<usize> {
        let i = (t.as_micros() / TICK.as_micros()) as usize;
        (i < self.trace.regular.len()).then_some(i)
    }
}

impl Model for Sim {
    type Event = Ev;

    fn handle(&mut self, _target: NodeId, ev: Ev, sched: &mut Scheduler<Ev>) {
        let now = sched.now();
        match ev {
            Ev::Tick => {
                if let Some(i) = self.tick_index(now) {
                    self.trace.background_backlog[i] = self.link.occupancy(TrafficClass::Background) > 0;
                    sched.schedule_in(TICK, NODE, Ev::Tick);
                }
            }
            Ev::Regular => {
                self.offer(now, self.regular_frame, TrafficClass::Regular, sched);
                self.regular_sent += 1;
                let next = self.study.regular_on + self.regular_interval.mul(self.regular_sent);
                if next < self.study.regular_off {
                    sched.schedule(next, NODE, Ev::Regular).expect("future");
                }
            }
            Ev::TxDone => {
                let (dep, next) = self.link.on_tx_done(now);
                if let Some(t) = next {
                    sched.schedule(t, NODE, Ev::TxDone).expect("future");
                }
                // A frame is credited to the tick in which it finished.
                let i = self.tick_index(now.saturating_sub(SimTime::from_micros(1)));
                if let Some(i) = i {
                    match dep.class {
                        TrafficClass::Regular => self.trace.regular[i] += dep.bytes as u64,
                        TrafficClass::Background => self.trace.background[i] += dep.bytes as u64,
                    }
                }
                self.top_up(now, sched);
            }
        }
    }
}
