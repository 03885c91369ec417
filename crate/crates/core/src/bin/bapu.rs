use std::error::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bapu_sim::experiment::{
    reproduce, run_points, run_shaper_study, seed_list, sweep, write_figure, Axis, Figure, FigureData,
    ReproduceOptions, DEFAULT_SEEDS,
};
use bapu_sim::scenario::Scenario;

/// Uplink aggregation simulator.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// First seed; later seeds count up from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Seeds per point.
    #[arg(long, global = true)]
    seeds: Option<usize>,
    /// Directory for the CSV outputs.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Simulated seconds per run.
    #[arg(long, global = true)]
    duration_s: Option<f64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario file.
    Run { scenario: PathBuf },
    /// Vary one axis of a scenario file: n_aps, rtt, loss, strategy or mode.
    Sweep {
        axis: Axis,
        scenario: PathBuf,
        /// Comma-separated axis values instead of the defaults.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<String>>,
    },
    /// Regenerate one of the canned figures.
    Reproduce { figure: Figure },
}

fn load(path: &Path, cli: &Cli) -> Result<Scenario, Box<dyn Error>> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut sc = Scenario::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(d) = cli.duration_s {
        sc.duration_s = d;
    }
    if let Some(s) = cli.seed {
        sc.seed = s;
    }
    sc.validate()?;
    Ok(sc)
}

fn finish(data: &FigureData, dir: &Path) -> Result<(), Box<dyn Error>> {
    write_figure(dir, data).map_err(|e| format!("{}: {e}", dir.display()))?;
    print!("{}", bapu_sim::experiment::render(data));
    eprintln!("wrote {}", dir.display());
    Ok(())
}

fn main_inner(cli: Cli) -> Result<(), Box<dyn Error>> {
    let n_seeds = cli.seeds.unwrap_or(DEFAULT_SEEDS);
    match &cli.cmd {
        Cmd::Run { scenario } => {
            let sc = load(scenario, &cli)?;
            let dir = cli.out_dir.clone().unwrap_or_else(|| "out/run".into());
            let data = if sc.shaper_study {
                FigureData::Shaper(run_shaper_study(&sc))
            } else {
                FigureData::Points(run_points(&[("run".into(), sc.clone())], &seed_list(sc.seed, n_seeds))?)
            };
            finish(&data, &dir)
        }
        Cmd::Sweep { axis, scenario, values } => {
            let sc = load(scenario, &cli)?;
            let values: Vec<&str> = match values {
                Some(v) => v.iter().map(String::as_str).collect(),
                None => axis.default_values(),
            };
            let dir = cli.out_dir.clone().unwrap_or_else(|| format!("out/sweep-{axis}").into());
            let points = sweep(*axis, &sc, &values, &seed_list(sc.seed, n_seeds))?;
            finish(&FigureData::Points(points), &dir)
        }
        Cmd::Reproduce { figure } => {
            let defaults = ReproduceOptions::default();
            let opts = ReproduceOptions {
                first_seed: cli.seed.unwrap_or(defaults.first_seed),
                seeds: cli.seeds.unwrap_or(figure.default_seeds()),
                duration_s: cli.duration_s.unwrap_or(defaults.duration_s),
            };
            let dir = cli.out_dir.clone().unwrap_or_else(|| format!("out/{figure}").into());
            finish(&reproduce(*figure, &opts)?, &dir)
        }
    }
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
