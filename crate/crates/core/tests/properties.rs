//! Whole-system invariants over many seeds.

use bapu_sim::experiment::{run_points, write_figure, FigureData};
use bapu_sim::gateway::{AckTrigger, Mode, Strategy};
use bapu_sim::overhead::theoretical_max;
use bapu_sim::packet::Proto;
use bapu_sim::scenario::{RttPreset, Scenario};
use bapu_sim::tcp::{SenderInput, TraceTag};
use bapu_sim::world::World;
use proptest::prelude::{any, prop, prop_assert, prop_assert_eq, proptest, ProptestConfig};

const PACKETS: u64 = 10_000;

struct Case {
    proto: Proto,
    mode: Mode,
    strategy: Strategy,
    fault_prob: f64,
    per_unicast_loss: f64,
}

fn cases() -> Vec<Case> {
    let mut v = Vec::new();
    for (fault_prob, per_unicast_loss) in [(0.0, 0.0), (0.05, 0.1)] {
        for mode in [Mode::Basic, Mode::Buffering, Mode::Proactive] {
            v.push(Case {
                proto: Proto::Tcp,
                mode,
                strategy: Strategy::FcfsCapacity,
                fault_prob,
                per_unicast_loss,
            });
        }
        for strategy in [Strategy::FcfsCapacity, Strategy::Modulo, Strategy::ModuloRedundant] {
            v.push(Case {
                proto: Proto::Udp,
                mode: Mode::Basic,
                strategy,
                fault_prob,
                per_unicast_loss,
            });
        }
    }
    v
}

/// Acknowledging on report is only safe while scheduled packets cannot go
/// missing; with faults the gateway waits for the data.
fn trigger(fault_prob: f64) -> AckTrigger {
    if fault_prob > 0.0 {
        AckTrigger::Injection
    } else {
        AckTrigger::Report
    }
}

fn scenario(c: &Case, seed: u64) -> Scenario {
    Scenario {
        ack_trigger: trigger(c.fault_prob),
        proto: c.proto,
        mode: c.mode,
        strategy: c.strategy,
        fault_prob: c.fault_prob,
        per_unicast_loss: c.per_unicast_loss,
        monitor_loss: 0.3,
        seed,
        transfer_bytes: PACKETS * 1350,
        duration_s: 400.0,
        warmup_s: 0.0,
        ..Scenario::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 20, ..ProptestConfig::default() })]

    #[test]
    fn every_byte_arrives_exactly_once(seed in any::<u64>()) {
        for c in cases() {
            let sc = scenario(&c, seed);
            let mut w = World::new(&sc);
            w.run();
            let delivered: u64 = w.bins.iter().map(|b| b.delivered_bytes).sum();
            match c.proto {
                Proto::Tcp => {
                    // TCP retransmits until everything is through.
                    prop_assert_eq!(w.receiver.recv_next(), sc.transfer_bytes, "{:?} {:?}", c.mode, c.fault_prob);
                    prop_assert_eq!(delivered, sc.transfer_bytes);
                    prop_assert!(w.tcp_stream_intact());
                    prop_assert!(w.gateway.spoofed_acks_covered());
                }
                Proto::Udp => {
                    prop_assert_eq!(w.dest.udp_corrupt, 0);
                    prop_assert!(w.dest.udp_unique <= PACKETS);
                    prop_assert_eq!(delivered, w.dest.udp_unique * 1350);
                    if c.strategy == Strategy::FcfsCapacity {
                        prop_assert_eq!(w.dest.udp_duplicates, 0);
                    }
                }
            }
        }
    }

    #[test]
    fn spoofed_acks_never_outrun_injection(seed in any::<u64>(), p in 0.0f64..0.8, fault in prop::sample::select(vec![0.0, 0.02, 0.1])) {
        let sc = Scenario {
            ack_trigger: trigger(fault),
            mode: Mode::Proactive,
            monitor_loss: p,
            fault_prob: fault,
            seed,
            transfer_bytes: 3000 * 1350,
            duration_s: 120.0,
            ..Scenario::default()
        };
        let mut w = World::new(&sc);
        w.run();
        prop_assert_eq!(w.receiver.recv_next(), sc.transfer_bytes);
        prop_assert!(w.gateway.spoofed_acks_covered());
        prop_assert!(w.tcp_stream_intact());
    }
}

/// Textbook Reno over the sender's own input log.
struct Reno {
    mss: u64,
    cwnd: u32,
    cnt: u32,
    ssthresh: u32,
    una: u64,
    nxt: u64,
    max: u64,
    dup: u32,
    recovering: bool,
    adv: u64,
}

impl Reno {
    fn flight_segs(&self) -> u32 {
        (self.nxt - self.una).div_ceil(self.mss) as u32
    }

    /// Returns the trace events the input should produce.
    fn step(&mut self, input: &SenderInput) -> Vec<(TraceTag, u32, u32)> {
        let mut ev = Vec::new();
        let mut emit = |r: &Reno, t| ev.push((t, r.cwnd, r.ssthresh));
        match *input {
            SenderInput::Transmit { seq, len, .. } => {
                if seq == self.nxt {
                    assert!(
                        self.nxt - self.una + len as u64 <= (self.cwnd as u64 * self.mss).min(self.adv),
                        "window overrun at {seq}"
                    );
                    self.nxt += len as u64;
                    self.max = self.max.max(self.nxt);
                }
                emit(self, TraceTag::Send);
            }
            SenderInput::Ack { ack, adv_window, .. } => {
                if ack > self.max {
                    return ev;
                }
                self.adv = adv_window as u64;
                if ack > self.una {
                    self.una = ack;
                    self.nxt = self.nxt.max(ack);
                    self.dup = 0;
                    if self.recovering {
                        self.recovering = false;
                        self.cwnd = self.ssthresh;
                        self.cnt = 0;
                    } else if self.cwnd < self.ssthresh {
                        self.cwnd += 1;
                    } else {
                        self.cnt += 1;
                        if self.cnt >= self.cwnd {
                            self.cwnd += 1;
                            self.cnt = 0;
                        }
                    }
                    emit(self, TraceTag::Ack);
                } else if ack == self.una && self.max > self.una {
                    self.dup += 1;
                    emit(self, TraceTag::Dupack);
                    if !self.recovering && self.dup == 3 {
                        self.ssthresh = (self.flight_segs().max(1) / 2).max(2);
                        self.cwnd = self.ssthresh + 3;
                        self.cnt = 0;
                        self.recovering = true;
                        emit(self, TraceTag::FastRetransmit);
                    } else if self.recovering {
                        self.cwnd += 1;
                    }
                }
            }
            SenderInput::Rto { .. } => {
                if self.max > self.una {
                    self.ssthresh = (self.flight_segs().max(1) / 2).max(2);
                    self.cwnd = 1;
                    self.cnt = 0;
                    self.dup = 0;
                    self.recovering = false;
                    self.nxt = self.una;
                    emit(self, TraceTag::Rto);
                }
            }
        }
        ev
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn single_path_matches_reno_oracle(seed in any::<u64>(), rtt in prop::sample::select(vec![32u64, 96, 192])) {
        let sc = Scenario {
            n_aps: 1,
            bapu: false,
            per_unicast_loss: 0.0,
            rtt: RttPreset::FixedMs(rtt),
            seed,
            duration_s: 20.0,
            ..Scenario::default()
        };
        let mut w = World::new(&sc);
        w.tcp.set_record_inputs(true);
        w.run();
        let mut oracle = Reno {
            mss: sc.payload as u64,
            cwnd: 2,
            cnt: 0,
            ssthresh: 64,
            una: 0,
            nxt: 0,
            max: 0,
            dup: 0,
            recovering: false,
            adv: sc.adv_window as u64,
        };
        let expected: Vec<(TraceTag, u32, u32)> = w.tcp.inputs().iter().flat_map(|i| oracle.step(i)).collect();
        let got: Vec<(TraceTag, u32, u32)> = w.tcp.trace().iter().map(|r| (r.event_tag, r.cwnd, r.ssthresh)).collect();
        prop_assert!(got.len() > 1000);
        prop_assert_eq!(got, expected);
    }
}

fn figure_bytes(points: &[(String, Scenario)]) -> Vec<(String, Vec<u8>)> {
    let data = FigureData::Points(run_points(points, &[3, 4]).unwrap());
    let dir = tempfile::tempdir().unwrap();
    write_figure(dir.path(), &data).unwrap();
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn repeated_runs_are_byte_identical() {
    let points: Vec<(String, Scenario)> = [Mode::Basic, Mode::Buffering, Mode::Proactive]
        .into_iter()
        .map(|mode| {
            let sc = Scenario {
                mode,
                monitor_loss: 0.2,
                rtt: RttPreset::UniformMs(20, 80),
                duration_s: 6.0,
                warmup_s: 1.0,
                ..Scenario::default()
            };
            (mode.to_string(), sc)
        })
        .chain(std::iter::once((
            "udp".to_string(),
            Scenario {
                proto: Proto::Udp,
                strategy: Strategy::ModuloRedundant,
                monitor_loss: 0.3,
                duration_s: 6.0,
                warmup_s: 1.0,
                ..Scenario::default()
            },
        )))
        .collect();
    let a = figure_bytes(&points);
    let b = figure_bytes(&points);
    assert!(a.iter().any(|(n, _)| n == "summary.csv"));
    assert_eq!(a, b);
}

#[test]
fn theoretical_max_table_rows() {
    let row = |proto, bapu| (theoretical_max(proto, bapu, 2_000_000, 1350) / 1e4).round() / 100.0;
    assert_eq!(row(Proto::Udp, false), 1.94);
    assert_eq!(row(Proto::Udp, true), 1.82);
    assert_eq!(row(Proto::Tcp, false), 1.9);
    assert_eq!(row(Proto::Tcp, true), 1.8);
}
