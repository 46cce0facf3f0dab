//! Command-line harness: scenario generation, estimation, oracle comparison
//! and noise sweeps.
//!
//! Logs go to standard error. Data goes to standard output unless `--out`
//! names a file (or, for `sweep`, a directory).

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward;
use crate::gamp::{self, EstimateReport, GampConfig};
use crate::oracle::{self, GridSpec};
use crate::par;
use crate::raytracer::{self, RayCache};
use crate::scenario::{self, Dataset, Scenario};
use crate::templates::{self, CanyonParams, Placement};

/// Environment variable holding the worker count.
pub const THREADS_ENV: &str = "RTPERM_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "rtperm",
    version,
    about = "Permittivity estimation from path-loss data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a template scenario.
    Generate(GenerateArgs),
    /// Estimate permittivities for one dataset.
    Estimate(EstimateArgs),
    /// Noise sweep: synthesize and solve for every (sigma, seed).
    Sweep(SweepArgs),
    /// Brute-force grid MAP for one dataset.
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Template {
    Canyon,
    FreeSpace,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PlacementArg {
    Sidewalk,
    Uniform,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value = "canyon")]
    pub template: Template,
    /// Number of materials M.
    #[arg(long, default_value_t = 2)]
    pub materials: usize,
    /// Number of links N.
    #[arg(long, default_value_t = 100)]
    pub links: usize,
    #[arg(long, default_value_t = 200.0)]
    pub length: f64,
    #[arg(long, default_value_t = 30.0)]
    pub width: f64,
    #[arg(long, default_value_t = 0.1)]
    pub wavelength: f64,
    #[arg(long, default_value_t = 2)]
    pub max_reflections: usize,
    #[arg(long, value_enum, default_value = "sidewalk")]
    pub placement: PlacementArg,
    /// Ground-truth permittivities, comma separated (one per material).
    #[arg(long, value_delimiter = ',')]
    pub true_eps: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Solver overrides shared by `estimate` and `sweep`.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOverrides {
    #[arg(long)]
    pub k_iter: Option<usize>,
    #[arg(long)]
    pub k_gamp: Option<usize>,
    #[arg(long)]
    pub delta_tr: Option<f64>,
    #[arg(long)]
    pub tau_w: Option<f64>,
    #[arg(long)]
    pub damping: Option<f64>,
    #[arg(long)]
    pub early_stop: Option<f64>,
}

impl SolverOverrides {
    pub fn apply(&self, mut config: GampConfig) -> GampConfig {
        if let Some(v) = self.k_iter {
            config.k_iter = v;
        }
        if let Some(v) = self.k_gamp {
            config.k_gamp = v;
        }
        if let Some(v) = self.delta_tr {
            config = config.with_delta_tr(v);
        }
        if let Some(v) = self.tau_w {
            config.tau_w = v;
        }
        if let Some(v) = self.damping {
            config.damping = v;
        }
        if let Some(v) = self.early_stop {
            config.early_stop_tol = v;
        }
        config
    }
}

#[derive(Debug, Args)]
pub struct DataSource {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Measured dataset; when absent one is synthesized from `--sigma`/`--seed`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub source: DataSource,
    #[command(flatten)]
    pub solver: SolverOverrides,
    /// Append a grid-MAP comparison to the report.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, default_value_t = 0.05)]
    pub grid_step: f64,
    /// Write zero for every timing field so output is reproducible byte for byte.
    #[arg(long)]
    pub no_timing: bool,
    /// Also write the synthesized dataset here.
    #[arg(long)]
    pub dataset_out: Option<PathBuf>,
    /// Also write the per-link ray table (CSV) here.
    #[arg(long)]
    pub dump_rays: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// JSON experiment config; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Noise levels in dB, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Option<Vec<f64>>,
    /// Seeds per noise level.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub seed_base: Option<u64>,
    #[command(flatten)]
    pub solver: SolverOverrides,
    #[arg(long)]
    pub no_timing: bool,
    /// Output directory for `sweep.csv` and `summary.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub source: DataSource,
    #[arg(long, default_value_t = 0.05)]
    pub grid_step: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Contents of a sweep config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: PathBuf,
    pub sigmas: Vec<f64>,
    pub seeds: usize,
    #[serde(default = "default_seed_base")]
    pub seed_base: u64,
    #[serde(default)]
    pub solver: SolverOverridesFile,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_seed_base() -> u64 {
    1
}

/// Serializable mirror of [`SolverOverrides`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOverridesFile {
    pub k_iter: Option<usize>,
    pub k_gamp: Option<usize>,
    pub delta_tr: Option<f64>,
    pub tau_w: Option<f64>,
    pub damping: Option<f64>,
    pub early_stop: Option<f64>,
}

impl From<&SolverOverridesFile> for SolverOverrides {
    fn from(f: &SolverOverridesFile) -> Self {
        SolverOverrides {
            k_iter: f.k_iter,
            k_gamp: f.k_gamp,
            delta_tr: f.delta_tr,
            tau_w: f.tau_w,
            damping: f.damping,
            early_stop: f.early_stop,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigmas.is_empty() {
            return Err(Error::validation(
                "sigmas",
                "at least one noise level is required",
            ));
        }
        if self.sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::validation(
                "sigmas",
                "noise levels must be finite and >= 0",
            ));
        }
        if self.seeds == 0 {
            return Err(Error::validation("seeds", "at least one seed is required"));
        }
        Ok(())
    }
}

/// A scenario with its rays traced and unusable links removed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    pub cache: RayCache,
    /// Indices (into the original link list) of the links kept.
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
}

/// Traces every link and drops those with no ray or with a gain below the
/// floor at the lower prior corner or the prior midpoint.
pub fn prepare(scenario: &Scenario) -> Result<Prepared> {
    let cache = raytracer::trace_all(scenario);
    let lower: Vec<f64> = scenario.materials.iter().map(|m| m.prior_lo).collect();
    let mid = scenario.prior_mids();
    let (lambda, pol) = (scenario.wavelength_m, scenario.polarization);
    let usable: Vec<bool> = par::map_range(cache.len(), |n| {
        let rays = cache.link(n);
        !rays.is_empty()
            && forward::link_gain_db(rays, &lower, lambda, pol).is_ok()
            && forward::link_gain_db(rays, &mid, lambda, pol).is_ok()
    });
    let kept: Vec<usize> = (0..cache.len()).filter(|&n| usable[n]).collect();
    let dropped: Vec<usize> = (0..cache.len()).filter(|&n| !usable[n]).collect();
    if !dropped.is_empty() {
        info!("dropped {} unusable link(s): {:?}", dropped.len(), dropped);
    }
    if kept.is_empty() {
        return Err(Error::validation("links", "no usable link remains"));
    }
    Ok(Prepared {
        scenario: scenario.with_links(&kept),
        cache: cache.with_links(&kept),
        kept,
        dropped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub grid_step: f64,
    pub eps_map: Vec<f64>,
    /// Largest per-component |ε̂ − ε_MAP|.
    pub max_abs_diff: f64,
}

/// JSON document written by `estimate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateOutput {
    #[serde(flatten)]
    pub report: EstimateReport,
    pub links_used: usize,
    pub dropped_links: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_true: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleComparison>,
}

fn load_inputs(source: &DataSource) -> Result<(Scenario, Dataset, Prepared)> {
    let full = scenario::load_scenario(&source.scenario)?;
    let prepared = prepare(&full)?;
    let dataset = match &source.dataset {
        Some(path) => {
            let d = scenario::load_dataset(path)?;
            if d.measured_db.len() != full.num_links() {
                return Err(Error::Dimension {
                    what: "dataset.measured_db vs scenario.links",
                    expected: full.num_links(),
                    got: d.measured_db.len(),
                });
            }
            d
        }
        None => {
            // Synthesize over the usable links only, then scatter back to the
            // full link order so the dataset file matches the scenario.
            let d = scenario::synthesize_dataset(
                &prepared.scenario,
                &prepared.cache,
                source.sigma,
                source.seed,
            )?;
            let mut measured = vec![f64::NAN; full.num_links()];
            for (k, &n) in prepared.kept.iter().enumerate() {
                measured[n] = d.measured_db[k];
            }
            if !prepared.dropped.is_empty() {
                // Unusable links carry no measurement; use the budget alone.
                for &n in &prepared.dropped {
                    measured[n] = full.links[n].budget_db();
                }
            }
            Dataset {
                measured_db: measured,
                ..d
            }
        }
    };
    Ok((full, dataset, prepared))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        }),
        None => {
            let mut stdout = io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.write_all(b"\n"))
                .map_err(|source| Error::Io {
                    path: PathBuf::from("<stdout>"),
                    source,
                })
        }
    }
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<Scenario> {
    let scenario = match args.template {
        Template::Canyon => templates::canyon(&CanyonParams {
            num_materials: args.materials,
            num_links: args.links,
            length_m: args.length,
            width_m: args.width,
            wavelength_m: args.wavelength,
            max_reflections: args.max_reflections,
            true_eps: args.true_eps.clone(),
            placement: match args.placement {
                PlacementArg::Uniform => Placement::Uniform,
                PlacementArg::Sidewalk => CanyonParams::default().placement,
            },
            seed: args.seed,
            ..CanyonParams::default()
        })?,
        Template::FreeSpace => templates::free_space(args.materials, args.links, args.seed)?,
    };
    write_output(args.out.as_deref(), &scenario.to_json())?;
    Ok(scenario)
}

pub fn cmd_estimate(args: &EstimateArgs) -> Result<EstimateOutput> {
    let (full, dataset, prepared) = load_inputs(&args.source)?;
    if let Some(path) = &args.dataset_out {
        scenario::save_dataset(&dataset, path)?;
    }
    if let Some(path) = &args.dump_rays {
        let file = fs::File::create(path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        raytracer::trace_all(&full)
            .write_csv(file)
            .map_err(|e| Error::validation("dump_rays", e.to_string()))?;
    }
    let y =
        scenario::normalize_measurements(&prepared.scenario, &dataset.with_links(&prepared.kept))?;
    let config = args.solver.apply(GampConfig::for_scenario(
        &prepared.scenario,
        dataset.noise_var,
    ));
    let mut report = gamp::solve_scenario(&prepared.scenario, &prepared.cache, &y, &config)?;
    for w in &report.warnings {
        warn!("{w}");
    }
    if args.no_timing {
        report.wall_ms = 0.0;
    }
    let oracle = if args.oracle {
        let m = prepared.scenario.num_materials();
        let eps_map = oracle::grid_map(
            &prepared.scenario,
            &prepared.cache,
            &y,
            dataset.noise_var.sqrt(),
            &GridSpec::uniform(m, args.grid_step),
        )?;
        let max_abs_diff = eps_map
            .iter()
            .zip(&report.eps_hat)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        Some(OracleComparison {
            grid_step: args.grid_step,
            eps_map,
            max_abs_diff,
        })
    } else {
        None
    };
    let output = EstimateOutput {
        report,
        links_used: prepared.kept.len(),
        dropped_links: prepared.dropped.clone(),
        eps_true: full.true_eps(),
        oracle,
    };
    let text = serde_json::to_string_pretty(&output).expect("report serializes");
    write_output(args.out.as_deref(), &text)?;
    Ok(output)
}

pub fn cmd_oracle(args: &OracleArgs) -> Result<Vec<f64>> {
    let (_, dataset, prepared) = load_inputs(&args.source)?;
    let y =
        scenario::normalize_measurements(&prepared.scenario, &dataset.with_links(&prepared.kept))?;
    let m = prepared.scenario.num_materials();
    let eps_map = oracle::grid_map(
        &prepared.scenario,
        &prepared.cache,
        &y,
        dataset.noise_var.sqrt(),
        &GridSpec::uniform(m, args.grid_step),
    )?;
    let text = serde_json::json!({ "grid_step": args.grid_step, "eps_map": eps_map });
    write_output(
        args.out.as_deref(),
        &serde_json::to_string_pretty(&text).expect("json"),
    )?;
    Ok(eps_map)
}

/// One row of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sigma_z: f64,
    pub seed: u64,
    pub material: usize,
    pub eps_true: f64,
    pub eps_hat: Option<f64>,
    pub abs_err: Option<f64>,
    pub iterations: usize,
    pub wall_ms: f64,
    pub status: String,
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub sigma_z: f64,
    pub material: usize,
    pub runs: usize,
    pub mean_abs_err: f64,
    pub std_abs_err: f64,
    pub stderr_abs_err: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SummaryRow>,
}

/// Runs the noise sweep over a fixed scenario. Runs execute in parallel;
/// rows are ordered by (sigma, seed, material).
pub fn run_sweep(
    scenario: &Scenario,
    config: &ExperimentConfig,
    timing: bool,
) -> Result<SweepResult> {
    config.validate()?;
    let truth = scenario
        .true_eps()
        .ok_or_else(|| Error::validation("materials.true_eps", "a sweep needs ground truth"))?;
    let prepared = prepare(scenario)?;
    let overrides = SolverOverrides::from(&config.solver);
    let runs: Vec<(f64, u64)> = config
        .sigmas
        .iter()
        .flat_map(|&s| (0..config.seeds as u64).map(move |k| (s, config.seed_base + k)))
        .collect();
    let results = par::map_range(runs.len(), |r| {
        let (sigma, seed) = runs[r];
        let dataset =
            scenario::synthesize_dataset(&prepared.scenario, &prepared.cache, sigma, seed)?;
        let y = scenario::normalize_measurements(&prepared.scenario, &dataset)?;
        let cfg = overrides.apply(GampConfig::for_scenario(
            &prepared.scenario,
            dataset.noise_var,
        ));
        gamp::solve_scenario(&prepared.scenario, &prepared.cache, &y, &cfg)
    });
    let mut rows = Vec::with_capacity(runs.len() * truth.len());
    for (&(sigma, seed), result) in runs.iter().zip(results) {
        for (m, &t) in truth.iter().enumerate() {
            rows.push(match &result {
                Ok(report) => SweepRow {
                    sigma_z: sigma,
                    seed,
                    material: m + 1,
                    eps_true: t,
                    eps_hat: Some(report.eps_hat[m]),
                    abs_err: Some((report.eps_hat[m] - t).abs()),
                    iterations: report.iterations_run,
                    wall_ms: if timing { report.wall_ms } else { 0.0 },
                    status: "ok".into(),
                },
                Err(e) => SweepRow {
                    sigma_z: sigma,
                    seed,
                    material: m + 1,
                    eps_true: t,
                    eps_hat: None,
                    abs_err: None,
                    iterations: 0,
                    wall_ms: 0.0,
                    status: format!("error: {e}"),
                },
            });
        }
    }
    let summary = summarize(&config.sigmas, truth.len(), &rows);
    Ok(SweepResult { rows, summary })
}

fn summarize(sigmas: &[f64], m: usize, rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for &sigma in sigmas {
        for material in 1..=m {
            let errs: Vec<f64> = rows
                .iter()
                .filter(|r| r.sigma_z == sigma && r.material == material)
                .filter_map(|r| r.abs_err)
                .collect();
            let n = errs.len();
            let mean = if n > 0 {
                errs.iter().sum::<f64>() / n as f64
            } else {
                f64::NAN
            };
            let std = if n > 1 {
                (errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            out.push(SummaryRow {
                sigma_z: sigma,
                material,
                runs: n,
                mean_abs_err: mean,
                std_abs_err: std,
                stderr_abs_err: if n > 0 {
                    std / (n as f64).sqrt()
                } else {
                    f64::NAN
                },
            });
        }
    }
    out
}

fn csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::validation("csv", e.to_string()))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::validation("csv", e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

impl SweepResult {
    pub fn rows_csv(&self) -> Result<String> {
        csv_string(&self.rows)
    }

    pub fn summary_csv(&self) -> Result<String> {
        csv_string(&self.summary)
    }
}

fn resolve_sweep_config(args: &SweepArgs) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            serde_json::from_str::<ExperimentConfig>(&text).map_err(|source| Error::Parse {
                what: "experiment config".into(),
                source,
            })?
        }
        None => ExperimentConfig {
            scenario: args.scenario.clone().ok_or_else(|| {
                Error::validation("scenario", "--scenario or --config is required")
            })?,
            sigmas: vec![0.1, 1.0, 2.0, 4.0],
            seeds: 20,
            seed_base: 1,
            solver: SolverOverridesFile::default(),
            out_dir: None,
        },
    };
    if let Some(s) = &args.scenario {
        config.scenario = s.clone();
    }
    if let Some(s) = &args.sigmas {
        config.sigmas = s.clone();
    }
    if let Some(s) = args.seeds {
        config.seeds = s;
    }
    if let Some(s) = args.seed_base {
        config.seed_base = s;
    }
    if let Some(o) = &args.out {
        config.out_dir = Some(o.clone());
    }
    let o = &args.solver;
    let f = &mut config.solver;
    f.k_iter = o.k_iter.or(f.k_iter);
    f.k_gamp = o.k_gamp.or(f.k_gamp);
    f.delta_tr = o.delta_tr.or(f.delta_tr);
    f.tau_w = o.tau_w.or(f.tau_w);
    f.damping = o.damping.or(f.damping);
    f.early_stop = o.early_stop.or(f.early_stop);
    Ok(config)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<SweepResult> {
    let config = resolve_sweep_config(args)?;
    config.validate()?;
    let scenario = scenario::load_scenario(&config.scenario)?;
    let result = run_sweep(&scenario, &config, !args.no_timing)?;
    let failures = result.rows.iter().filter(|r| r.status != "ok").count();
    if failures > 0 {
        warn!("{failures} sweep row(s) failed");
    }
    let (rows, summary) = (result.rows_csv()?, result.summary_csv()?);
    match &config.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|source| Error::Io {
                path: dir.clone(),
                source,
            })?;
            for (name, text) in [("sweep.csv", &rows), ("summary.csv", &summary)] {
                let path = dir.join(name);
                fs::write(&path, text).map_err(|source| Error::Io { path, source })?;
            }
            info!("wrote {} rows to {}", result.rows.len(), dir.display());
        }
        None => {
            print!("{rows}");
            eprint!("{summary}");
        }
    }
    Ok(result)
}

/// Process exit code for an error: 2 for input problems, 1 for solver or
/// numerical failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. }
        | Error::Parse { .. }
        | Error::Validation { .. }
        | Error::Dimension { .. } => 2,
        _ => 1,
    }
}

/// Parses `args`, runs the subcommand and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let threads = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok());
    par::init_workers(threads);
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a).map(|_| ()),
        Command::Estimate(a) => cmd_estimate(a).map(|_| ()),
        Command::Sweep(a) => cmd_sweep(a).map(|_| ()),
        Command::Oracle(a) => cmd_oracle(a).map(|_| ()),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
