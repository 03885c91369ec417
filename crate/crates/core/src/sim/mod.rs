//! Discrete-event core: virtual clock, ordered event queue and the run loop.
//!
//! Time is kept in integer microseconds. Events with equal fire times are
//! delivered in insertion order, which is the simulator's notion of arrival
//! order everywhere downstream (FCFS scheduling included).

mod rng;

pub use rng::RngStream;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use thiserror::Error;

/// A point (or span) of virtual time, in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e3
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    pub fn min(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.min(rhs.0))
    }

    pub fn max(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.max(rhs.0))
    }

    /// Multiplies a span by an integer factor, saturating.
    pub fn mul(self, k: u64) -> SimTime {
        SimTime(self.0.saturating_mul(k))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 = self.0.saturating_add(rhs.0);
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

/// Identifies a simulated node (sender, destination, gateway or an AP).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("event scheduled in the past: fire time {at} is before the clock {now}")]
    PastEvent { at: SimTime, now: SimTime },
}

/// Handle returned by [`Scheduler::schedule`]; used to cancel timers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

/// An event waiting in the queue.
#[derive(Debug, Clone)]
pub struct SimEvent<E> {
    pub fire_time: SimTime,
    pub seq_no: u64,
    pub target: NodeId,
    pub payload: E,
}

impl<E> PartialEq for SimEvent<E> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_time == other.fire_time && self.seq_no == other.seq_no
    }
}

impl<E> Eq for SimEvent<E> {}

impl<E> PartialOrd for SimEvent<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for SimEvent<E> {
    // Reversed so that `BinaryHeap` pops the earliest (time, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .fire_time
            .cmp(&self.fire_time)
            .then_with(|| other.seq_no.cmp(&self.seq_no))
    }
}

/// Counters reported at the end of a run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub end_time: SimTime,
    pub scheduled: u64,
    pub fired: u64,
    pub cancelled: u64,
    /// Events still queued past `end_time`.
    pub pending: u64,
    pub fired_per_node: BTreeMap<NodeId, u64>,
}

/// Receives events from the run loop.
pub trait Model {
    type Event;

    fn handle(&mut self, target: NodeId, event: Self::Event, sched: &mut Scheduler<Self::Event>);
}

/// The virtual clock plus the pending-event queue.
#[derive(Debug)]
pub struct Scheduler<E> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<SimEvent<E>>,
    live: HashSet<u64>,
    scheduled: u64,
    fired: u64,
    cancelled: u64,
    fired_per_node: BTreeMap<NodeId, u64>,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            live: HashSet::new(),
            scheduled: 0,
            fired: 0,
            cancelled: 0,
            fired_per_node: BTreeMap::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Enqueues `payload` for `target` at absolute time `at`.
    pub fn schedule(
        &mut self,
        at: SimTime,
        target: NodeId,
        payload: E,
    ) -> Result<EventHandle, SimError> {
        if at < self.now {
            return Err(SimError::PastEvent { at, now: self.now });
        }
        let seq_no = self.next_seq;
        self.next_seq += 1;
        self.heap.push(SimEvent {
            fire_time: at,
            seq_no,
            target,
            payload,
        });
        self.live.insert(seq_no);
        self.scheduled += 1;
        Ok(EventHandle(seq_no))
    }

    /// Enqueues `payload` `delay` after the current time. Never fails.
    pub fn schedule_in(&mut self, delay: SimTime, target: NodeId, payload: E) -> EventHandle {
        let at = self.now + delay;
        self.schedule(at, target, payload)
            .expect("relative schedule cannot be in the past")
    }

    /// Cancels a pending event. Returns false if it already fired or was
    /// cancelled before.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if self.live.remove(&handle.0) {
            self.cancelled += 1;
            true
        } else {
            false
        }
    }

    pub fn is_pending(&self, handle: EventHandle) -> bool {
        self.live.contains(&handle.0)
    }

    fn pop_due(&mut self, end: SimTime) -> Option<SimEvent<E>> {
        while let Some(top) = self.heap.peek() {
            if top.fire_time > end {
                return None;
            }
            let ev = self.heap.pop().expect("peeked");
            if self.live.remove(&ev.seq_no) {
                return Some(ev);
            }
        }
        None
    }

    /// Processes every event with `fire_time <= end`, then sets the clock to
    /// `end`.
    pub fn run_until<M: Model<Event = E>>(&mut self, model: &mut M, end: SimTime) -> RunSummary {
        while let Some(ev) = self.pop_due(end) {
            debug_assert!(ev.fire_time >= self.now);
            self.now = ev.fire_time;
            self.fired += 1;
            *self.fired_per_node.entry(ev.target).or_default() += 1;
            model.handle(ev.target, ev.payload, self);
        }
        if end > self.now {
            self.now = end;
        }
        self.summary()
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            end_time: self.now,
            scheduled: self.scheduled,
            fired: self.fired,
            cancelled: self.cancelled,
            pending: self.live.len() as u64,
            fired_per_node: self.fired_per_node.clone(),
        }
    }
}
