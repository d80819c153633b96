use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::info;

use hardyscope::decomposition::StoppingRule;
use hardyscope::harness::{
    config_operator, configure_threads, emit, emit_timing, family_report, parse_potential, run_certification,
    run_equivalence, run_lemma_suite, ExperimentConfig, Format,
};
use hardyscope::report::{Report, Table};
use hardyscope::riesz::riesz_truncated_block;
use hardyscope::semigroup::{core_probes, heat_kernel_block};
use hardyscope::{Error, Result};

#[derive(Parser)]
#[command(name = "hardyscope", version, about = "Heat semigroup, Riesz transform and Hardy space experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Family invariants and conditions (D) and (K).
    Certify(Common),
    /// Lemma constants with refinement checks.
    Lemmas(Common),
    /// Equivalence-ratio test matrix and atom bounds.
    Equivalence(Common),
    /// Heat kernel columns at core probe nodes.
    HeatKernel(Common),
    /// Riesz kernel columns at core probe nodes.
    Riesz(Common),
    /// Stopping-time decomposition; also writes `family.json`.
    Decompose(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `constant:1`, `spikes:7`, `step:0.5,4`, `harmonic`, … or inline JSON.
    #[arg(long)]
    potential: Option<String>,
    #[arg(long)]
    rule: Option<StoppingRule>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    grid_n: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<Format>,
    #[arg(long)]
    seed: Option<u64>,
    /// Time for `heat-kernel`.
    #[arg(long)]
    t: Option<f64>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(p) = &self.potential {
            c.potential = parse_potential(p)?;
        }
        if let Some(r) = self.rule {
            c.rule = r;
        }
        if let Some(b) = self.beta {
            c.beta = b;
        }
        if let Some(n) = self.grid_n {
            c.grid.n_points = n;
        }
        if let Some(o) = &self.out {
            c.output.dir = o.clone();
        }
        if let Some(f) = self.format {
            c.output.format = f;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(t) = self.t {
            c.time = t;
        }
        c.validate()?;
        Ok(c)
    }
}

fn kernel_table(name: &str, grid: &hardyscope::Grid, rows: &[usize], cols: &[usize], get: impl Fn(usize, usize) -> f64) -> Table {
    let mut columns = vec!["x".to_string()];
    columns.extend(cols.iter().map(|&j| format!("y={:.6}", grid.x(j))));
    let columns: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut table = Table::new(name, &columns);
    for (r, &i) in rows.iter().enumerate() {
        let mut row = vec![grid.x(i)];
        row.extend((0..cols.len()).map(|c| get(r, c)));
        table.push(row);
    }
    table
}

fn heat_kernel_report(config: &ExperimentConfig) -> Result<Report> {
    let op = config_operator(config)?;
    let grid = *op.grid();
    let rows: Vec<usize> = grid.core_range().collect();
    let cols = core_probes(&grid);
    let k = heat_kernel_block(&op, config.time, &rows, &cols)?;
    let mut report = Report::new("heat_kernel");
    report.config = Some(config.snapshot());
    report
        .value("t", config.time)
        .value("max", k.max_abs())
        .table(kernel_table("heat_kernel", &grid, &rows, &cols, |r, c| k.get(r, c)))
        .note(format!("potential {}", op.potential().name()));
    Ok(report)
}

fn riesz_report(config: &ExperimentConfig) -> Result<Report> {
    let op = config_operator(config)?;
    let grid = *op.grid();
    let rows: Vec<usize> = grid.core_range().collect();
    let cols = core_probes(&grid);
    let k = riesz_truncated_block(&op, 0.0, f64::INFINITY, &rows, &cols)?;
    let mut report = Report::new("riesz_kernel");
    report.config = Some(config.snapshot());
    report
        .table(kernel_table("riesz_kernel", &grid, &rows, &cols, |r, c| k.get(r, c)))
        .note(format!("potential {}", op.potential().name()));
    Ok(report)
}

fn decompose(config: &ExperimentConfig) -> Result<Report> {
    let grid = config.build_grid()?;
    let family = hardyscope::decomposition::family_for_grid(&config.potential.build()?, config.rule, &grid, config.beta)?;
    let dir = &config.output.dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("family.json");
    std::fs::write(&path, family.to_json() + "\n").map_err(|e| Error::io(&path, e))?;
    let mut report = Report::new("decompose");
    report.section(family_report(&family));
    report.config = Some(config.snapshot());
    Ok(report)
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = configure_threads()? {
        info!("worker pool capped at {n} threads");
    }
    let (common, runner): (&Common, fn(&ExperimentConfig) -> Result<Report>) = match &cli.command {
        Command::Certify(c) => (c, run_certification),
        Command::Lemmas(c) => (c, run_lemma_suite),
        Command::Equivalence(c) => (c, run_equivalence),
        Command::HeatKernel(c) => (c, heat_kernel_report),
        Command::Riesz(c) => (c, riesz_report),
        Command::Decompose(c) => (c, decompose),
    };
    let config = common.config()?;
    let start = Instant::now();
    let report = runner(&config)?;
    let seconds = start.elapsed().as_secs_f64();
    let dir = &config.output.dir;
    for path in emit(&report, dir, config.output.format)? {
        println!("{}", path.display());
    }
    emit_timing(&report.id, seconds, dir)?;
    for failure in report.failures() {
        eprintln!("FAILED {failure}");
    }
    println!("{} {} in {seconds:.1}s", report.id, if report.passed() { "passed" } else { "failed" });
    Ok(report.passed())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
