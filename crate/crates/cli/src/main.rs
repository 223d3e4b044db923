use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ssi_core::models::{Benchmark, RunConfig};
use ssi_core::runtime::Mode;

#[derive(Parser)]
#[command(
    name = "ssi",
    version,
    about = "Streaming semi-symbolic inference benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one benchmark and write per-step CSV.
    Run(RunArgs),
    /// Sweep particle counts and seeds; report MSE and latency quantiles.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algo {
    Ssi,
    Pf,
}

impl Algo {
    fn mode(self) -> Mode {
        match self {
            Algo::Ssi => Mode::Ssi,
            Algo::Pf => Mode::Pf,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Algo::Ssi => "ssi",
            Algo::Pf => "pf",
        }
    }
}

fn parse_model(s: &str) -> Result<Benchmark, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = Benchmark::ALL.iter().map(|b| b.name()).collect();
        format!(
            "unknown model `{s}` (expected one of: {})",
            names.join(", ")
        )
    })
}

fn parse_particles(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("particle count must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 500)]
    steps: usize,
    /// Seed of the synthetic input stream.
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_parser = parse_model)]
    model: Benchmark,
    #[arg(long, value_enum, default_value = "ssi")]
    algo: Algo,
    #[arg(long, default_value_t = 1, value_parser = parse_particles)]
    particles: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    common: Common,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the swap/sample log of particle 0 to stderr.
    #[arg(long)]
    trace: bool,
    /// Write particle 0's dependency graph after the first step.
    #[arg(long)]
    dot: Option<PathBuf>,
    /// Record per-step wall-clock latency (otherwise the column is 0).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_model)]
    model: Vec<Benchmark>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "ssi,pf")]
    algo: Vec<Algo>,
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_particles)]
    particles: Vec<usize>,
    /// Number of inference seeds, 0..N.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[command(flatten)]
    common: Common,
    /// Summary CSV destination.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let cfg = RunConfig {
        mode: args.algo.mode(),
        particles: args.particles,
        steps: args.common.steps,
        seed: args.seed,
        data_seed: args.common.data_seed,
        trace: args.trace,
        timing: args.timing,
        dot: args.dot.is_some(),
    };
    let report = args
        .model
        .run(&cfg)
        .with_context(|| format!("running {}", args.model))?;

    match &args.out {
        Some(path) => {
            let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            report.write_csv(BufWriter::new(f))?;
        }
        None => report.write_csv(io::stdout().lock())?,
    }
    if let (Some(path), Some(dot)) = (&args.dot, &report.dot) {
        std::fs::write(path, dot).with_context(|| format!("writing {}", path.display()))?;
    }
    let mut err = io::stderr().lock();
    for line in &report.trace {
        writeln!(err, "{line}")?;
    }
    writeln!(
        err,
        "model={} algo={} particles={} steps={} seed={} data_seed={} mse={} draw_count={}",
        args.model,
        args.algo.name(),
        args.particles,
        report.rows.len(),
        args.seed,
        args.common.data_seed,
        report.mse(),
        report.draw_count
    )?;
    Ok(())
}

/// Linearly interpolated quantile of a sorted sample.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn quantiles(mut xs: Vec<f64>) -> [f64; 3] {
    xs.sort_by(f64::total_cmp);
    [quantile(&xs, 0.1), quantile(&xs, 0.5), quantile(&xs, 0.9)]
}

const SWEEP_HEADER: &str = "model,algo,particles,seeds,mse_q10,mse_median,mse_q90,latency_q10_ns,latency_median_ns,latency_q90_ns,draw_count_median";

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    if args.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let mut lines = vec![SWEEP_HEADER.to_string()];
    let mut table = vec![format!(
        "{:<18} {:<4} {:>9} {:>12} {:>12} {:>12} {:>14} {:>8}",
        "model", "algo", "particles", "mse q10", "mse median", "mse q90", "latency (us)", "draws"
    )];
    for &model in &args.model {
        for &algo in &args.algo {
            for &n in &args.particles {
                let mut mses = Vec::new();
                let mut lats = Vec::new();
                let mut draws = Vec::new();
                for seed in 0..args.seeds {
                    let cfg = RunConfig {
                        mode: algo.mode(),
                        particles: n,
                        steps: args.common.steps,
                        seed,
                        data_seed: args.common.data_seed,
                        timing: true,
                        ..RunConfig::default()
                    };
                    let r = model
                        .run(&cfg)
                        .with_context(|| format!("{model} {} n={n} seed={seed}", algo.name()))?;
                    mses.push(r.mse());
                    lats.push(r.mean_latency_ns());
                    draws.push(r.draw_count as f64);
                }
                let m = quantiles(mses);
                let l = quantiles(lats);
                let d = quantiles(draws);
                lines.push(format!(
                    "{model},{},{n},{},{},{},{},{},{},{},{}",
                    algo.name(),
                    args.seeds,
                    m[0],
                    m[1],
                    m[2],
                    l[0],
                    l[1],
                    l[2],
                    d[1]
                ));
                table.push(format!(
                    "{:<18} {:<4} {:>9} {:>12.6} {:>12.6} {:>12.6} {:>14.1} {:>8}",
                    model.name(),
                    algo.name(),
                    n,
                    m[0],
                    m[1],
                    m[2],
                    l[1] / 1e3,
                    d[1]
                ));
            }
        }
    }
    let csv = lines.join("\n") + "\n";
    match &args.out {
        Some(path) => {
            std::fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{csv}"),
    }
    eprintln!("{}", table.join("\n"));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        assert_eq!(quantiles(vec![3.0]), [3.0, 3.0, 3.0]);
        let q = quantiles(vec![4.0, 0.0, 1.0, 2.0, 3.0]);
        assert!((q[0] - 0.4).abs() < 1e-12);
        assert_eq!(q[1], 2.0);
        assert!((q[2] - 3.6).abs() < 1e-12);
    }
}
