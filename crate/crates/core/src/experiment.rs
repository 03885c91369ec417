//! Batch execution: seeded repetitions, one-axis sweeps, and the canned
//! figure reproductions.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::gateway::{Mode, Strategy};
use crate::metrics::{
    mean_std, write_cwnd_csv, write_sched_csv, write_summary_csv, write_timeseries_csv, Labeled,
    MetricsRecord, POINTS_CSV_HEADER,
};
use crate::overhead::theoretical_max;
use crate::packet::Proto;
use crate::scenario::{RttPreset, Scenario, ScenarioError, SenderRate};
use crate::shaper_study::{ShaperStudy, ShaperTrace};
use crate::world::World;

pub const DEFAULT_SEEDS: usize = 5;

/// Runs one scenario with its own seed.
pub fn run_scenario(sc: &Scenario) -> Result<MetricsRecord, ScenarioError> {
    sc.validate()?;
    let mut w = World::new(sc);
    w.run();
    Ok(MetricsRecord::from_world(&w))
}

/// One configuration repeated over several seeds.
#[derive(Debug, Clone)]
pub struct Point {
    pub label: String,
    pub scenario: Scenario,
    pub runs: Vec<MetricsRecord>,
}

impl Point {
    fn stat(&self, f: impl Fn(&MetricsRecord) -> f64) -> (f64, f64) {
        mean_std(&self.runs.iter().map(f).collect::<Vec<_>>())
    }

    /// Mean and standard deviation of goodput across seeds.
    pub fn goodput(&self) -> (f64, f64) {
        self.stat(|r| r.goodput_bps)
    }

    pub fn efficiency(&self) -> (f64, f64) {
        self.stat(|r| r.efficiency)
    }

    pub fn mean_cwnd(&self) -> f64 {
        self.stat(|r| r.mean_cwnd).0
    }

    pub fn fast_retransmits(&self) -> f64 {
        self.stat(|r| r.fast_retransmit_events() as f64).0
    }

    pub fn series_stddev(&self) -> f64 {
        self.stat(|r| r.series_stddev()).0
    }
}

/// Seeds `first, first + 1, ...`.
pub fn seed_list(first: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| first + i).collect()
}

/// Runs every `(label, scenario)` for every seed, in parallel. Points that
/// are compared share seeds, so they see the same channel draws.
pub fn run_points(specs: &[(String, Scenario)], seeds: &[u64]) -> Result<Vec<Point>, ScenarioError> {
    for (_, sc) in specs {
        sc.validate()?;
    }
    let jobs: Vec<(usize, Scenario)> = specs
        .iter()
        .enumerate()
        .flat_map(|(i, (_, sc))| {
            seeds.iter().map(move |&seed| (i, Scenario { seed, ..sc.clone() }))
        })
        .collect();
    let results: Vec<(usize, MetricsRecord)> = jobs
        .into_par_iter()
        .map(|(i, sc)| (i, run_scenario(&sc).expect("validated")))
        .collect();
    let mut points: Vec<Point> = specs
        .iter()
        .map(|(label, sc)| Point {
            label: label.clone(),
            scenario: sc.clone(),
            runs: Vec::new(),
        })
        .collect();
    for (i, r) in results {
        points[i].runs.push(r);
    }
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    NAps,
    Rtt,
    Loss,
    Strategy,
    Mode,
}

impl Axis {
    pub const ALL: [Axis; 5] = [Axis::NAps, Axis::Rtt, Axis::Loss, Axis::Strategy, Axis::Mode];

    pub fn default_values(self) -> Vec<&'static str> {
        match self {
            Axis::NAps => vec!["1", "2", "3", "4", "5", "6", "7"],
            Axis::Rtt => vec!["32", "96", "192", "random"],
            Axis::Loss => vec!["0", "0.2", "0.4", "0.6"],
            Axis::Strategy => vec!["fcfs_capacity", "modulo_redundant", "modulo"],
            Axis::Mode => vec!["basic", "buffering", "proactive"],
        }
    }

    fn key(self) -> &'static str {
        match self {
            Axis::NAps => "n_aps",
            Axis::Rtt => "rtt",
            Axis::Loss => "monitor_loss",
            Axis::Strategy => "strategy",
            Axis::Mode => "mode",
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &Scenario, value: &str) -> Result<Scenario, ScenarioError> {
        let mut sc = base.clone();
        sc.set(self.key(), value)?;
        Ok(sc)
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::NAps => "n_aps",
            Axis::Rtt => "rtt",
            Axis::Loss => "loss",
            Axis::Strategy => "strategy",
            Axis::Mode => "mode",
        })
    }
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Axis::ALL
            .into_iter()
            .find(|a| a.to_string() == s)
            .ok_or_else(|| format!("unknown axis {s:?} (expected n_aps, rtt, loss, strategy or mode)"))
    }
}

/// One point per value of `axis`, all over the same seeds.
pub fn sweep(axis: Axis, base: &Scenario, values: &[&str], seeds: &[u64]) -> Result<Vec<Point>, ScenarioError> {
    let specs = values
        .iter()
        .map(|v| Ok((format!("{axis}={v}"), axis.apply(base, v)?)))
        .collect::<Result<Vec<_>, ScenarioError>>()?;
    run_points(&specs, seeds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// Single-path ceilings for plain and tunnelled UDP/TCP.
    TheoreticalMax,
    /// Plain UDP and TCP over one 2 Mbps line.
    SinglePath,
    /// UDP goodput and efficiency against the number of APs.
    UdpScaling,
    /// Basic and Proactive-ACK TCP against the number of APs.
    TcpScaling,
    /// Basic TCP against gateway reordering with several buffer sizes.
    Buffering,
    /// Proactive-ACK and basic TCP across latency presets.
    Rtt,
    /// Proactive-ACK TCP with lossy overhearing.
    Loss,
    /// Sender cwnd traces, basic against Proactive-ACK.
    Cwnd,
    /// A fixed 11 Mbps stream against an unlimited transfer.
    Streaming,
    /// Forwarder selection strategies with lossy overhearing, TCP and UDP.
    Strategies,
    /// Regular traffic against background traffic on one shaped line.
    Shaper,
}

impl Figure {
    pub const ALL: [Figure; 11] = [
        Figure::TheoreticalMax,
        Figure::SinglePath,
        Figure::UdpScaling,
        Figure::TcpScaling,
        Figure::Buffering,
        Figure::Rtt,
        Figure::Loss,
        Figure::Cwnd,
        Figure::Streaming,
        Figure::Strategies,
        Figure::Shaper,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Figure::TheoreticalMax => "theoretical-max",
            Figure::SinglePath => "single-path",
            Figure::UdpScaling => "udp-scaling",
            Figure::TcpScaling => "tcp-scaling",
            Figure::Buffering => "buffering",
            Figure::Rtt => "rtt",
            Figure::Loss => "loss",
            Figure::Cwnd => "cwnd",
            Figure::Streaming => "streaming",
            Figure::Strategies => "strategies",
            Figure::Shaper => "shaper",
        }
    }

    /// The `(label, scenario)` points this figure runs, before seeding.
    pub fn specs(self, duration_s: f64) -> Vec<(String, Scenario)> {
        let base = Scenario {
            duration_s,
            ..Scenario::default()
        };
        let tcp = |mode: Mode, n: u32| Scenario {
            mode,
            n_aps: n,
            ..base.clone()
        };
        let label = |s: String, sc: Scenario| (s, sc);
        match self {
            Figure::TheoreticalMax | Figure::Shaper => Vec::new(),
            Figure::SinglePath => [Proto::Udp, Proto::Tcp]
                .into_iter()
                .map(|proto| {
                    let sc = Scenario {
                        proto,
                        n_aps: 1,
                        bapu: false,
                        per_unicast_loss: 0.0,
                        ..base.clone()
                    };
                    label(format!("plain_{proto}"), sc)
                })
                .collect(),
            Figure::UdpScaling => (1..=7)
                .map(|n| {
                    let sc = Scenario {
                        proto: Proto::Udp,
                        n_aps: n,
                        ..base.clone()
                    };
                    label(format!("udp_n{n}"), sc)
                })
                .collect(),
            Figure::TcpScaling => [Mode::Basic, Mode::Proactive]
                .into_iter()
                .flat_map(|m| (1..=7).map(move |n| (m, n)))
                .map(|(m, n)| label(format!("{m}_n{n}"), tcp(m, n)))
                .collect(),
            Figure::Buffering => {
                let mut v = vec![label("basic".into(), tcp(Mode::Basic, 7))];
                for rb in [64, 256, 1024] {
                    let sc = Scenario {
                        reorder_buffer: rb,
                        ..tcp(Mode::Buffering, 7)
                    };
                    v.push(label(format!("buffering_{rb}"), sc));
                }
                v
            }
            Figure::Rtt => {
                let presets = [
                    RttPreset::FixedMs(32),
                    RttPreset::FixedMs(96),
                    RttPreset::FixedMs(192),
                    RttPreset::UniformMs(20, 80),
                ];
                [Mode::Proactive, Mode::Basic]
                    .into_iter()
                    .flat_map(|m| presets.into_iter().map(move |r| (m, r)))
                    .map(|(m, rtt)| label(format!("{m}_rtt{rtt}"), Scenario { rtt, ..tcp(m, 7) }))
                    .collect()
            }
            Figure::Loss => [0.0, 0.2, 0.4, 0.6]
                .into_iter()
                .map(|p| {
                    let sc = Scenario {
                        monitor_loss: p,
                        ..tcp(Mode::Proactive, 7)
                    };
                    label(format!("proactive_p{p}"), sc)
                })
                .collect(),
            Figure::Cwnd => [Mode::Basic, Mode::Proactive]
                .into_iter()
                .map(|m| label(m.to_string(), tcp(m, 7)))
                .collect(),
            Figure::Streaming => vec![
                label(
                    "fixed_11m".into(),
                    Scenario {
                        sender_rate: SenderRate::Fixed(11_000_000),
                        ..tcp(Mode::Proactive, 7)
                    },
                ),
                label("unlimited".into(), tcp(Mode::Proactive, 7)),
            ],
            Figure::Strategies => [Proto::Tcp, Proto::Udp]
                .into_iter()
                .flat_map(|proto| {
                    [Strategy::FcfsCapacity, Strategy::ModuloRedundant, Strategy::Modulo].map(|strategy| {
                        let sc = Scenario {
                            proto,
                            mode: Mode::Basic,
                            strategy,
                            monitor_loss: 0.3,
                            ..base.clone()
                        };
                        label(format!("{proto}_{strategy}"), sc)
                    })
                })
                .collect(),
        }
    }

    /// Seeds per point; the trace figures need only one.
    pub fn default_seeds(self) -> usize {
        match self {
            Figure::Cwnd => 1,
            _ => DEFAULT_SEEDS,
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Figure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Figure::ALL.into_iter().find(|f| f.id() == s).ok_or_else(|| {
            let ids: Vec<&str> = Figure::ALL.iter().map(|f| f.id()).collect();
            format!("unknown figure {s:?} (expected one of {})", ids.join(", "))
        })
    }
}

#[derive(Debug, Clone)]
pub struct ReproduceOptions {
    pub first_seed: u64,
    pub seeds: usize,
    pub duration_s: f64,
}

impl Default for ReproduceOptions {
    fn default() -> Self {
        ReproduceOptions {
            first_seed: 1,
            seeds: DEFAULT_SEEDS,
            duration_s: 60.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShaperResult {
    pub with_background: ShaperTrace,
    pub baseline: ShaperTrace,
}

impl ShaperResult {
    pub fn regular_ratio(&self) -> f64 {
        self.with_background.regular_goodput_bps() / self.baseline.regular_goodput_bps()
    }
}

#[derive(Debug, Clone)]
pub enum FigureData {
    Points(Vec<Point>),
    /// `(label, bit/s)` rows.
    Table(Vec<(String, f64)>),
    Shaper(ShaperResult),
}

pub fn theoretical_max_table(uplink_bps: u64, payload: u32) -> Vec<(String, f64)> {
    [(Proto::Udp, false), (Proto::Udp, true), (Proto::Tcp, false), (Proto::Tcp, true)]
        .into_iter()
        .map(|(p, b)| {
            let name = if b { format!("bapu_{p}") } else { p.to_string() };
            (name, theoretical_max(p, b, uplink_bps, payload))
        })
        .collect()
}

pub fn run_shaper_study(sc: &Scenario) -> ShaperResult {
    let study = ShaperStudy::from_scenario(sc);
    ShaperResult {
        with_background: study.run(),
        baseline: study.without_background().run(),
    }
}

pub fn reproduce(fig: Figure, opts: &ReproduceOptions) -> Result<FigureData, ScenarioError> {
    let base = Scenario {
        duration_s: opts.duration_s,
        ..Scenario::default()
    };
    Ok(match fig {
        Figure::TheoreticalMax => FigureData::Table(theoretical_max_table(base.uplink_bps, base.payload)),
        Figure::Shaper => {
            let sc = Scenario {
                shaper_study: true,
                ..base
            };
            sc.validate()?;
            FigureData::Shaper(run_shaper_study(&sc))
        }
        _ => FigureData::Points(run_points(
            &fig.specs(opts.duration_s),
            &seed_list(opts.first_seed, opts.seeds),
        )?),
    })
}

fn create(dir: &Path, name: &str) -> io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Writes `summary.csv`, `points.csv` and `timeseries.csv` for every run,
/// and `cwnd.csv` and `sched.csv` for the first seed of each point.
pub fn write_points(dir: &Path, points: &[Point]) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let all: Vec<Labeled<'_>> = points
        .iter()
        .flat_map(|p| p.runs.iter().map(move |r| Labeled { label: &p.label, record: r }))
        .collect();
    let first: Vec<Labeled<'_>> = points
        .iter()
        .filter_map(|p| p.runs.first().map(|r| Labeled { label: &p.label, record: r }))
        .collect();
    let mut f = create(dir, "summary.csv")?;
    write_summary_csv(&mut f, &all)?;
    f.flush()?;
    let mut f = create(dir, "points.csv")?;
    write_points_csv(&mut f, points)?;
    f.flush()?;
    let mut f = create(dir, "timeseries.csv")?;
    write_timeseries_csv(&mut f, &all)?;
    f.flush()?;
    let mut f = create(dir, "cwnd.csv")?;
    write_cwnd_csv(&mut f, &first)?;
    f.flush()?;
    let mut f = create(dir, "sched.csv")?;
    write_sched_csv(&mut f, &first)?;
    f.flush()
}

pub fn write_points_csv<W: Write>(out: &mut W, points: &[Point]) -> io::Result<()> {
    writeln!(out, "{POINTS_CSV_HEADER}")?;
    for p in points {
        let (g, gs) = p.goodput();
        let (e, es) = p.efficiency();
        writeln!(out, "{},{},{:.0},{:.0},{:.4},{:.4},{:.2}", p.label, p.runs.len(), g, gs, e, es, p.mean_cwnd())?;
    }
    Ok(())
}

/// Figures without packet runs still get header-only trace files, so every
/// output directory has the same four CSVs.
fn write_empty_traces(dir: &Path) -> io::Result<()> {
    let mut f = create(dir, "cwnd.csv")?;
    write_cwnd_csv(&mut f, &[])?;
    f.flush()?;
    let mut f = create(dir, "sched.csv")?;
    write_sched_csv(&mut f, &[])?;
    f.flush()
}

pub fn write_figure(dir: &Path, data: &FigureData) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    match data {
        FigureData::Points(p) => write_points(dir, p),
        FigureData::Table(rows) => {
            write_empty_traces(dir)?;
            let mut f = create(dir, "timeseries.csv")?;
            write_timeseries_csv(&mut f, &[])?;
            f.flush()?;
            let mut f = create(dir, "summary.csv")?;
            writeln!(f, "label,goodput_bps")?;
            for (l, v) in rows {
                writeln!(f, "{l},{v:.0}")?;
            }
            f.flush()
        }
        FigureData::Shaper(s) => {
            write_empty_traces(dir)?;
            let mut f = create(dir, "summary.csv")?;
            writeln!(f, "metric,value")?;
            let min_bg = s.with_background.min_background_window_bps().unwrap_or(0.0);
            writeln!(f, "min_background_1s_bps,{min_bg:.0}")?;
            writeln!(f, "regular_bps,{:.0}", s.with_background.regular_goodput_bps())?;
            writeln!(f, "regular_baseline_bps,{:.0}", s.baseline.regular_goodput_bps())?;
            let reclaim = s.with_background.reclaim_s(0.95).unwrap_or(f64::NAN);
            writeln!(f, "reclaim_95_s,{reclaim:.2}")?;
            f.flush()?;
            let mut f = create(dir, "timeseries.csv")?;
            writeln!(f, "t_s,regular_bps,background_bps,baseline_regular_bps")?;
            let base = s.baseline.per_second();
            for (i, (r, b)) in s.with_background.per_second().into_iter().enumerate() {
                writeln!(f, "{},{r:.0},{b:.0},{:.0}", i + 1, base[i].0)?;
            }
            f.flush()
        }
    }
}

/// Human-readable table of a figure's results.
pub fn render(data: &FigureData) -> String {
    let mut s = String::new();
    match data {
        FigureData::Points(points) => {
            s.push_str(&format!(
                "{:<28} {:>5} {:>18} {:>16} {:>9} {:>6}\n",
                "point", "runs", "goodput Mbps", "efficiency", "cwnd", "fr"
            ));
            for p in points {
                let (g, gs) = p.goodput();
                let (e, es) = p.efficiency();
                s.push_str(&format!(
                    "{:<28} {:>5} {:>9.3} ± {:<6.3} {:>7.3} ± {:<6.3} {:>9.1} {:>6.1}\n",
                    p.label,
                    p.runs.len(),
                    g / 1e6,
                    gs / 1e6,
                    e,
                    es,
                    p.mean_cwnd(),
                    p.fast_retransmits()
                ));
            }
        }
        FigureData::Table(rows) => {
            for (l, v) in rows {
                s.push_str(&format!("{l:<10} {:.3} Mbps\n", v / 1e6));
            }
        }
        FigureData::Shaper(r) => {
            let w = &r.with_background;
            s.push_str(&format!(
                "min background over 1 s windows: {:.0} bit/s\n",
                w.min_background_window_bps().unwrap_or(0.0)
            ));
            s.push_str(&format!(
                "regular goodput: {:.0} bit/s (alone {:.0}, ratio {:.4})\n",
                w.regular_goodput_bps(),
                r.baseline.regular_goodput_bps(),
                r.regular_ratio()
            ));
            match w.reclaim_s(0.95) {
                Some(t) => s.push_str(&format!("background back to 95% of the line within {t:.2} s\n")),
                None => s.push_str("background never reclaimed 95% of the line\n"),
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_and_figure_names_round_trip() {
        for a in Axis::ALL {
            assert_eq!(a.to_string().parse::<Axis>().unwrap(), a);
        }
        for f in Figure::ALL {
            assert_eq!(f.id().parse::<Figure>().unwrap(), f);
        }
        assert!("bogus".parse::<Figure>().is_err());
    }

    #[test]
    fn every_figure_spec_validates() {
        for f in Figure::ALL {
            for (_, sc) in f.specs(20.0) {
                sc.validate().unwrap();
            }
        }
    }

    #[test]
    fn sweep_rejects_bad_values_by_field() {
        let err = sweep(Axis::NAps, &Scenario::default(), &["9"], &[1]).unwrap_err();
        assert!(err.to_string().contains("n_aps"), "{err}");
    }

    #[test]
    fn points_keep_spec_order_and_seed_order() {
        let base = Scenario {
            proto: Proto::Udp,
            duration_s: 6.0,
            ..Scenario::default()
        };
        let pts = sweep(Axis::NAps, &base, &["2", "1"], &[3, 4]).unwrap();
        assert_eq!(pts[0].label, "n_aps=2");
        assert_eq!(pts[1].scenario.n_aps, 1);
        let seeds: Vec<u64> = pts[0].runs.iter().map(|r| r.scenario.seed).collect();
        assert_eq!(seeds, vec![3, 4]);
    }
}
