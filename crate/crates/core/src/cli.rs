//! Batch commands: each reads a [`RunConfig`], runs one workflow, and writes CSV
//! artifacts (plus optional heatmaps) into the output directory.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bethe::ideal_map;
use crate::config::{ClickFormat, RunConfig};
use crate::counting::{g3c_jacobi_estimate, rate_histogram, BinningSpec};
use crate::io::{
    read_clicks_binary, read_clicks_csv, read_jacobi_csv, sig9, write_clicks_binary, write_clicks_csv,
    write_g2_pairs_csv, write_g3_triples_csv, write_heatmap_pgm, write_jacobi_csv, write_trace_csv,
    MapField,
};
use crate::jacobi::{average_over_r, JacobiMap};
use crate::master::transmission_trace;
use crate::regression::g3_grid;
use crate::trajectory::simulate_ensemble;
use crate::{Error, Result};

/// Environment variable that sets the worker thread count.
pub const THREADS_ENV: &str = "SUPERATOM_THREADS";

/// Exit status of `compare` when some cell differs by more than the z threshold.
pub const EXIT_MAPS_DIFFER: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "superatom", version, about = "Three-photon correlations of light scattered by a Rydberg superatom")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Input and transmitted photon rates for each configured peak rate
    Traces,
    /// Regression g2/g3 grids and the R-averaged (η, ζ) map
    G3Regression,
    /// Quantum-jump click streams
    Simulate,
    /// Estimated rate and g3/g3_c maps from a click stream
    Correlate,
    /// Ideal chiral-emitter g3/g3_c maps
    Bethe,
    /// Per-cell z-scores between two maps
    Compare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Traces => "traces",
            Command::G3Regression => "g3-regression",
            Command::Simulate => "simulate",
            Command::Correlate => "correlate",
            Command::Bethe => "bethe",
            Command::Compare => "compare",
        }
    }
}

impl std::str::FromStr for Command {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [
            Command::Traces,
            Command::G3Regression,
            Command::Simulate,
            Command::Correlate,
            Command::Bethe,
            Command::Compare,
        ]
        .into_iter()
        .find(|c| c.name() == s)
        .ok_or_else(|| Error::UnknownCommand(s.to_string()))
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Configuration file; built-in defaults when absent
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; takes precedence over the environment and the config
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

/// What a command produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub artifacts: Vec<PathBuf>,
    pub summary: Vec<String>,
    pub exit_code: i32,
}

/// Loads the config and applies command-line overrides other than the thread count.
pub fn resolve_config(args: &CommonArgs) -> Result<RunConfig> {
    let mut config = match &args.config {
        Some(p) => RunConfig::load(p).map_err(|e| e.in_stage("config"))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.trajectory.seed = seed;
    }
    if let Some(out) = &args.out {
        config.out_dir = out.clone();
    }
    Ok(config)
}

/// Thread count from the flag, else the environment, else the config; zero means automatic.
pub fn resolve_threads(flag: Option<usize>, env: Option<&str>, config: usize) -> Result<usize> {
    if let Some(n) = flag {
        return Ok(n);
    }
    if let Some(v) = env.filter(|v| !v.trim().is_empty()) {
        return v
            .trim()
            .parse()
            .map_err(|_| Error::invalid("threads", format!("{THREADS_ENV} = `{v}` is not a count")));
    }
    Ok(config)
}

/// Parses, configures the thread pool and runs one command.
pub fn run_cli(cli: &Cli) -> Result<RunReport> {
    let config = resolve_config(&cli.common)?;
    let env = std::env::var(THREADS_ENV).ok();
    let threads = resolve_threads(cli.common.threads, env.as_deref(), config.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid("threads", e.to_string()))?;
    pool.install(|| run_command(cli.command, &config))
}

/// Config echo for artifact headers; execution-only keys are left out so that
/// outputs do not depend on where or how parallel the run was.
pub fn provenance(command: Command, config: &RunConfig) -> String {
    let mut text = format!("superatom {}\n", command.name());
    for line in config.to_text().lines() {
        let key = line.split('=').next().unwrap_or("").trim();
        if key != "out_dir" && key != "threads" {
            text.push_str(line);
            text.push('\n');
        }
    }
    text
}

struct Outputs<'a> {
    dir: &'a Path,
    report: RunReport,
}

impl Outputs<'_> {
    fn create(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        body(&mut w)?;
        w.flush()?;
        self.report.artifacts.push(path);
        Ok(())
    }

    fn map(&mut self, stem: &str, header: &str, map: &JacobiMap, heatmap: bool) -> Result<()> {
        self.create(&format!("{stem}.csv"), |w| write_jacobi_csv(w, header, map))?;
        if heatmap {
            self.create(&format!("{stem}_g3.pgm"), |w| write_heatmap_pgm(w, map, MapField::G3))?;
            self.create(&format!("{stem}_g3c.pgm"), |w| write_heatmap_pgm(w, map, MapField::G3Connected))?;
        }
        Ok(())
    }
}

/// Runs `name` with a resolved config.
pub fn run_named(name: &str, config: &RunConfig) -> Result<RunReport> {
    run_command(name.parse()?, config)
}

pub fn run_command(command: Command, config: &RunConfig) -> Result<RunReport> {
    config.validate().map_err(|e| e.in_stage("config"))?;
    std::fs::create_dir_all(&config.out_dir)?;
    let mut out = Outputs {
        dir: &config.out_dir,
        report: RunReport::default(),
    };
    let header = provenance(command, config);
    match command {
        Command::Traces => traces(config, &header, &mut out)?,
        Command::G3Regression => regression_map(config, &header, &mut out)?,
        Command::Simulate => simulate(config, &header, &mut out)?,
        Command::Correlate => correlate(config, &header, &mut out)?,
        Command::Bethe => bethe(config, &header, &mut out)?,
        Command::Compare => compare(config, &header, &mut out)?,
    }
    Ok(out.report)
}

fn traces(config: &RunConfig, header: &str, out: &mut Outputs) -> Result<()> {
    let grid = config.trace_grid();
    for &rate in &config.trace_rates {
        let pulse = config.pulse.with_peak_rate(rate)?;
        let points = transmission_trace(&config.params, &pulse, &grid).map_err(|e| e.in_stage("master equation"))?;
        let h = format!("{header}trace_peak_rate = {rate}\n");
        out.create(&format!("trace_rate_{rate}.csv"), |w| write_trace_csv(w, &h, &points))?;
        let transmitted: f64 = points.windows(2).map(|p| 0.5 * (p[0].output_rate + p[1].output_rate) * (p[1].t - p[0].t)).sum();
        out.report
            .summary
            .push(format!("peak rate {rate}: {} transmitted photons per pulse", sig9(transmitted)));
    }
    Ok(())
}

fn regression_map(config: &RunConfig, header: &str, out: &mut Outputs) -> Result<()> {
    let grid = g3_grid(&config.params, &config.pulse, &config.regression_grid(), config.stride)
        .map_err(|e| e.in_stage("regression"))?;
    out.create("g3_regression_g3.csv", |w| write_g3_triples_csv(w, header, &grid))?;
    out.create("g3_regression_g2.csv", |w| write_g2_pairs_csv(w, header, &grid))?;
    let map = average_over_r(&grid, config.r_window, config.theory_cell).map_err(|e| e.in_stage("jacobi"))?;
    out.map("g3_regression_map", header, &map, config.heatmap)?;
    out.report.summary.push(format!(
        "{} triples evaluated, {} map cells",
        grid.triple_evaluations(),
        map.len()
    ));
    Ok(())
}

fn clicks_path(config: &RunConfig) -> PathBuf {
    config
        .clicks_path
        .clone()
        .unwrap_or_else(|| config.out_dir.join(format!("clicks.{}", config.click_format.extension())))
}

fn simulate(config: &RunConfig, header: &str, out: &mut Outputs) -> Result<()> {
    let records = simulate_ensemble(&config.params, &config.pulse, &config.trajectory)
        .map_err(|e| e.in_stage("trajectories"))?;
    let name = format!("clicks.{}", config.click_format.extension());
    match config.click_format {
        ClickFormat::Csv => out.create(&name, |w| write_clicks_csv(w, header, &records))?,
        ClickFormat::Binary => out.create(&name, |w| write_clicks_binary(w, &records))?,
    }
    let clicks: usize = records.iter().map(|r| r.len()).sum();
    out.report.summary.push(format!(
        "{} pulses, {clicks} clicks, {} per pulse",
        records.len(),
        sig9(clicks as f64 / records.len() as f64)
    ));
    Ok(())
}

fn correlate(config: &RunConfig, header: &str, out: &mut Outputs) -> Result<()> {
    let path = clicks_path(config);
    let file = BufReader::new(File::open(&path).map_err(|e| Error::from(e).in_stage("click input"))?);
    let records = match config.click_format {
        ClickFormat::Csv => read_clicks_csv(file, None),
        ClickFormat::Binary => read_clicks_binary(file, Some(config.trajectory.n_pulses)),
    }
    .map_err(|e| e.in_stage("click input"))?;
    let bins = BinningSpec::new(config.estimator_bin, config.pulse.t_start, config.pulse.t_end)
        .map_err(|e| e.in_stage("estimator"))?;
    let rates = rate_histogram(&records, &bins).map_err(|e| e.in_stage("estimator"))?;
    out.create("rate_estimate.csv", |w| {
        for line in header.lines() {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "time_us,rate,rate_stderr")?;
        for b in 0..bins.n_bins() {
            writeln!(w, "{},{},{}", sig9(bins.center(b)), sig9(rates.rate[b]), sig9(rates.stderr[b]))?;
        }
        Ok(())
    })?;
    let map = g3c_jacobi_estimate(&records, &bins, config.r_window, config.estimator_cell)
        .map_err(|e| e.in_stage("estimator"))?;
    out.map("g3_estimate_map", header, &map, config.heatmap)?;
    out.report
        .summary
        .push(format!("{} pulses, {} map cells", records.len(), map.len()));
    Ok(())
}

fn bethe(config: &RunConfig, header: &str, out: &mut Outputs) -> Result<()> {
    let map = ideal_map(config.bethe_kappa, config.bethe_cell, config.bethe_half_cells)
        .map_err(|e| e.in_stage("bethe"))?;
    out.map("bethe_map", header, &map, config.heatmap)?;
    let origin = map.get(0, 0).map(|c| c.g3_connected).unwrap_or(f64::NAN);
    out.report
        .summary
        .push(format!("{} cells, g3_c(0, 0) = {}", map.len(), sig9(origin)));
    Ok(())
}

/// Per-cell comparison of two maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellComparison {
    pub eta: f64,
    pub zeta: f64,
    pub delta_g3: f64,
    pub z_g3: f64,
    pub delta_g3c: f64,
    pub z_g3c: f64,
}

fn z_score(delta: f64, a: Option<f64>, b: Option<f64>) -> f64 {
    let var = a.unwrap_or(0.0).powi(2) + b.unwrap_or(0.0).powi(2);
    if delta == 0.0 {
        0.0
    } else if var > 0.0 {
        delta / var.sqrt()
    } else {
        delta.signum() * f64::INFINITY
    }
}

/// z-scores over the cells both maps populate, plus the count of unmatched cells.
pub fn compare_maps(a: &JacobiMap, b: &JacobiMap) -> Result<(Vec<CellComparison>, usize)> {
    if (a.cell_width - b.cell_width).abs() > 1e-12 * a.cell_width {
        return Err(Error::Inconsistent(format!(
            "cell widths {} and {} differ",
            a.cell_width, b.cell_width
        )));
    }
    let mut rows = Vec::new();
    let mut unmatched = 0;
    for ((i, j), ca) in a.iter() {
        let Some(cb) = b.get(i, j) else {
            unmatched += 1;
            continue;
        };
        let d3 = ca.g3 - cb.g3;
        let dc = ca.g3_connected - cb.g3_connected;
        rows.push(CellComparison {
            eta: a.center(i),
            zeta: a.center(j),
            delta_g3: d3,
            z_g3: z_score(d3, ca.g3_stderr, cb.g3_stderr),
            delta_g3c: dc,
            z_g3c: z_score(dc, ca.g3c_stderr, cb.g3c_stderr),
        });
    }
    unmatched += b.iter().filter(|((i, j), _)| a.get(*i, *j).is_none()).count();
    Ok((rows, unmatched))
}

fn compare(config: &RunConfig, header: &str, out: &mut Outputs) -> Result<()> {
    let load = |p: &Option<PathBuf>, key: &'static str| -> Result<JacobiMap> {
        let p = p.as_ref().ok_or_else(|| Error::invalid(key, "compare needs both map_a and map_b"))?;
        read_jacobi_csv(BufReader::new(File::open(p)?)).map_err(|e| e.in_stage("map input"))
    };
    let a = load(&config.map_a, "map_a")?;
    let b = load(&config.map_b, "map_b")?;
    let (rows, unmatched) = compare_maps(&a, &b)?;
    out.create("compare.csv", |w| {
        for line in header.lines() {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "eta_us,zeta_us,delta_g3,z_g3,delta_g3_connected,z_g3_connected")?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                sig9(r.eta),
                sig9(r.zeta),
                sig9(r.delta_g3),
                sig9(r.z_g3),
                sig9(r.delta_g3c),
                sig9(r.z_g3c)
            )?;
        }
        Ok(())
    })?;
    let outside = rows
        .iter()
        .filter(|r| r.z_g3.abs() > config.z_threshold || r.z_g3c.abs() > config.z_threshold)
        .count();
    let worst = rows.iter().map(|r| r.z_g3.abs().max(r.z_g3c.abs())).fold(0.0, f64::max);
    out.report.summary.push(format!(
        "{} shared cells, {unmatched} unmatched, {outside} beyond |z| = {}, max |z| = {}",
        rows.len(),
        config.z_threshold,
        sig9(worst)
    ));
    if outside > 0 {
        out.report.exit_code = EXIT_MAPS_DIFFER;
    }
    Ok(())
}
