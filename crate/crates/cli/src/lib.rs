//! Command-line driver: configuration, sampling, analysis, pattern tables
//! and parameter sweeps.

pub mod config;
pub mod error;
pub mod events;
pub mod sweep;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use epr_young::analysis::{
    criterion_from_events, estimate_nrel_moments, estimate_ptot_moments, fit_phase, fringe_histogram,
    HistogramAxis,
};
use epr_young::sampler::{sample_ensemble, sample_far, sample_near, EventBatch};
use epr_young::states::{far_field_valid, position_density, validate_displaced, validate_setup};
use epr_young::tabulate::{pair_pattern, EnvelopeTable, MomentumGrid};

pub use config::ExperimentConfig;
pub use error::CliError;
use events::Preamble;

/// Environment variable holding the default worker count.
pub const JOBS_ENV: &str = "EPR_YOUNG_JOBS";

#[derive(Debug, Parser)]
#[command(name = "epr-young", version, about = "Nonlocal two-particle grating interference")]
pub struct Cli {
    /// Worker threads (default: EPR_YOUNG_JOBS or all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlaneArg {
    Near,
    Far,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the default configuration.
    DefaultConfig,
    /// Check the source and grating conditions.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Tabulate the joint density and its sum-axis marginal.
    Pattern {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "far")]
        plane: PlaneArg,
        /// Pixels per grating period and axis.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        sum_out: Option<PathBuf>,
    },
    /// Generate event files.
    Sample {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        plane: PlaneArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        events: Option<usize>,
        #[arg(long)]
        near_out: Option<PathBuf>,
        #[arg(long)]
        far_out: Option<PathBuf>,
    },
    /// Estimate the criterion and fringe diagnostics from event files.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        near: PathBuf,
        #[arg(long)]
        far: PathBuf,
        /// Fit the phase origin instead of using the configured one.
        #[arg(long)]
        auto_phase: bool,
        #[arg(long, default_value_t = 200)]
        bins: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        histogram: Option<PathBuf>,
    },
    /// Sweep one parameter, or compute the critical widths.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `param=lo:hi:steps` with param one of sigma_rel, sigma_cm, w, phi,
        /// s0_p_cm, n.
        #[arg(long, conflicts_with = "table1")]
        sweep: Option<String>,
        /// Critical widths for N in {2,3,4,5,10,20,30}.
        #[arg(long)]
        table1: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write one JSON record per row here.
        #[arg(long)]
        jsonl: Option<PathBuf>,
    },
}

/// Worker count from the flag, then the environment.
pub fn resolve_jobs(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if let Some(j) = flag {
        return if j == 0 { Err(CliError::Usage("--jobs must be positive".into())) } else { Ok(Some(j)) };
    }
    match std::env::var(JOBS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|j| *j > 0)
            .map(Some)
            .ok_or_else(|| CliError::Usage(format!("{JOBS_ENV} must be a positive integer (got {v:?})"))),
        Err(_) => Ok(None),
    }
}

pub fn run(cli: Cli, stdout: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = resolve_jobs(cli.jobs)? {
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| CliError::Usage(e.to_string()))?;
    pool.install(|| dispatch(cli.command, stdout))
}

fn dispatch(cmd: Command, stdout: &mut (dyn Write + Send)) -> Result<(), CliError> {
    match cmd {
        Command::DefaultConfig => {
            write!(stdout, "{}", ExperimentConfig::default().to_toml())?;
            Ok(())
        }
        Command::Validate { config } => cmd_validate(&ExperimentConfig::load(&config)?, stdout),
        Command::Pattern { config, plane, grid, out, sum_out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = out.unwrap_or_else(|| cfg.output.pattern.clone());
            let sum_out = sum_out.unwrap_or_else(|| cfg.output.pattern_sum.clone());
            cmd_pattern(&cfg, plane, grid, &out, &sum_out, stdout)
        }
        Command::Sample { config, plane, seed, events, near_out, far_out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.sampler.seed = s;
            }
            if let Some(n) = events {
                cfg.sampler.n_events = n;
            }
            cfg.check()?;
            let near_out = near_out.unwrap_or_else(|| cfg.output.events_near.clone());
            let far_out = far_out.unwrap_or_else(|| cfg.output.events_far.clone());
            cmd_sample(&cfg, plane, &near_out, &far_out, stdout)
        }
        Command::Analyze { config, near, far, auto_phase, bins, out, histogram } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = out.unwrap_or_else(|| cfg.output.report.clone());
            let histogram = histogram.unwrap_or_else(|| cfg.output.histogram.clone());
            cmd_analyze(&cfg, &near, &far, auto_phase, bins, &out, &histogram, stdout)
        }
        Command::Sweep { config, sweep, table1, out, jsonl } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = out.unwrap_or_else(|| cfg.output.sweep.clone());
            let job = match (sweep, table1) {
                (_, true) => sweep::SweepJob::CriticalWidths,
                (Some(spec), false) => sweep::SweepJob::Range(sweep::SweepSpec::parse(&spec)?),
                (None, false) => return Err(CliError::Usage("sweep needs --sweep or --table1".into())),
            };
            sweep::cmd_sweep(&cfg, &job, &out, jsonl.as_deref(), stdout)
        }
    }
}

pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn preamble(cfg: &ExperimentConfig) -> Preamble {
    Preamble {
        seed: cfg.sampler.seed,
        config_sha: cfg.sha(),
        units: cfg.units(),
    }
}

pub fn cmd_validate(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let diag = validate_setup(&cfg.source, &cfg.grating, cfg.hbar());
    writeln!(out, "slit_correlation_ratio = {:.6}", diag.slit_correlation_ratio)?;
    writeln!(out, "illumination_ratio     = {:.6}", diag.illumination_ratio)?;
    writeln!(out, "t_max                  = {:.6e}", diag.t_max)?;
    writeln!(out, "t_grating              = {:.6e}", cfg.source.t_grating)?;
    writeln!(out, "neighbor_suppression   = {:.6e}", diag.neighbor_suppression)?;
    writeln!(out, "margin_decrease        = {:.6e}", diag.margin_decrease)?;
    writeln!(out, "conditions_met         = {}", diag.conditions_met)?;
    let mut warnings = diag.warnings.clone();
    if let Some(disp) = &cfg.displacement {
        let d = validate_displaced(&cfg.source, &cfg.grating, disp);
        writeln!(out, "x_cm(T)                = {:.6}", d.x_cm_t)?;
        writeln!(out, "x_rel(T)               = {:.6}", d.x_rel_t)?;
        writeln!(out, "n_rel(T)               = {}", d.n_rel_t)?;
        writeln!(out, "centre_ratio           = {:.6} (policy limit 0.2)", d.centre_ratio)?;
        writeln!(out, "order_ratio            = {:.6} (policy limit 0.2)", d.order_ratio)?;
        writeln!(out, "pairs_pass             = {}", d.passes)?;
        writeln!(out, "effective_order        = {}", d.effective_order)?;
        warnings.extend(d.warnings);
    }
    if let Some(t2) = cfg.sampler.far_t2 {
        let ok = far_field_valid(&cfg.grating, cfg.source.mass, t2, cfg.hbar());
        writeln!(out, "far_field_valid        = {ok}")?;
        if !ok {
            warnings.push(format!("far_t2 = {t2} is not in the dispersion-dominated regime"));
        }
    }
    for w in &warnings {
        writeln!(out, "warning: {w}")?;
    }
    Ok(())
}

/// Adds `density` at `(i, j)` to the marginal over `i + j`.
fn sum_marginal(values: &[f64], len: usize, step: f64) -> Vec<f64> {
    let mut out = vec![0.0; 2 * len - 1];
    for i in 0..len {
        for j in 0..len {
            out[i + j] += values[i * len + j] * step;
        }
    }
    out
}

pub fn cmd_pattern(
    cfg: &ExperimentConfig,
    plane: PlaneArg,
    grid: Option<usize>,
    out: &Path,
    sum_out: &Path,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let frame = cfg.frame()?;
    let state = cfg.state()?;
    let pre = preamble(cfg);
    let mut joint = create(out)?;
    let mut marginal = create(sum_out)?;
    writeln!(joint, "{}", pre.line())?;
    writeln!(marginal, "{}", pre.line())?;
    match plane {
        PlaneArg::Far => {
            let grid = MomentumGrid {
                grid_per_cell: grid.unwrap_or(cfg.grid.grid_per_cell),
                ..cfg.grid
            };
            let table = EnvelopeTable::new(&state, &frame, grid)?;
            table.require_coverage()?;
            let g = grid.grid_per_cell;
            let pattern = pair_pattern(&state, &frame, g, cfg.sampler.phase_shift)?;
            let w = cfg.sampler.admixture_w;
            let m = grid.axis_len();
            let period = table.period;
            let density: Vec<f64> = (0..m * m)
                .into_par_iter()
                .map(|k| {
                    let (i, j) = (k / m, k % m);
                    table.intensity[k] * (w + (1.0 - w) * pattern[(i % g) * g + j % g])
                })
                .collect();
            // joint table over the central 3 x 3 cells
            let lo = (grid.half_cells() - 1) * g;
            let hi = (grid.half_cells() + 2) * g;
            writeln!(joint, "p1,p2,density")?;
            for i in lo..hi {
                for j in lo..hi {
                    writeln!(
                        joint,
                        "{:.16e},{:.16e},{:.16e}",
                        grid.pixel_center(i, period),
                        grid.pixel_center(j, period),
                        density[i * m + j]
                    )?;
                }
            }
            let step = period / g as f64;
            writeln!(marginal, "xi,density")?;
            for (s, v) in sum_marginal(&density, m, step).iter().enumerate() {
                let psum = grid.pixel_center(0, period) * 2.0 + s as f64 * step;
                // density per unit of ξ = (p₁ + p₂)/period
                writeln!(marginal, "{:.16e},{:.16e}", psum / period, v * period)?;
            }
            writeln!(stdout, "far pattern: {} joint rows, enclosed mass {:.4}", 9 * g * g, table.enclosed)?;
        }
        PlaneArg::Near | PlaneArg::Both => {
            if plane == PlaneArg::Both {
                return Err(CliError::Usage("pattern takes --plane near or far".into()));
            }
            let g = cfg.grating;
            let per = grid.unwrap_or(cfg.grid.grid_per_cell);
            let len = g.n_slits * per;
            let step = g.d / per as f64;
            let lo = -0.5 * g.n_slits as f64 * g.d;
            let x = |i: usize| lo + (i as f64 + 0.5) * step;
            let density: Vec<f64> = (0..len * len)
                .into_par_iter()
                .map(|k| position_density(&state, x(k / len), x(k % len)))
                .collect();
            writeln!(joint, "x1,x2,density")?;
            for i in 0..len {
                for j in 0..len {
                    writeln!(joint, "{:.16e},{:.16e},{:.16e}", x(i), x(j), density[i * len + j])?;
                }
            }
            writeln!(marginal, "x_sum,density")?;
            for (s, v) in sum_marginal(&density, len, step).iter().enumerate() {
                writeln!(marginal, "{:.16e},{:.16e}", 2.0 * x(0) + s as f64 * step, v)?;
            }
            writeln!(stdout, "near pattern: {} joint rows", len * len)?;
        }
    }
    joint.flush()?;
    marginal.flush()?;
    Ok(())
}

fn write_batch(cfg: &ExperimentConfig, batch: &EventBatch, path: &Path) -> Result<(), CliError> {
    let mut f = create(path)?;
    events::write_events(&mut f, &preamble(cfg), batch)
        .and_then(|_| f.flush())
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn cmd_sample(
    cfg: &ExperimentConfig,
    plane: PlaneArg,
    near_out: &Path,
    far_out: &Path,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let frame = cfg.frame()?;
    let scfg = cfg.sampler_config();
    let state = cfg.state()?;
    if matches!(plane, PlaneArg::Near | PlaneArg::Both) {
        let batch = sample_near(&state, &scfg)?;
        write_batch(cfg, &batch, near_out)?;
        writeln!(stdout, "wrote {} near events to {}", batch.len(), near_out.display())?;
    }
    if matches!(plane, PlaneArg::Far | PlaneArg::Both) {
        let batch = if cfg.uses_ensemble() {
            if cfg.sampler.state != config::StateKind::Mme {
                return Err(CliError::Usage("source ensembles are sampled for the mme state only".into()));
            }
            let ens = cfg.ensemble.unwrap_or_default();
            let centre = cfg.displacement.unwrap_or_default();
            let out = sample_ensemble(&cfg.source, &cfg.grating, &ens, &centre, &scfg, &frame)?;
            writeln!(
                stdout,
                "ensemble: {} displacements drawn, {} rejected ({:.2}%)",
                out.attempts,
                out.rejected,
                100.0 * out.rejection_rate()
            )?;
            out.batch
        } else {
            sample_far(&state, &scfg, &frame)?
        };
        write_batch(cfg, &batch, far_out)?;
        writeln!(stdout, "wrote {} far events to {}", batch.len(), far_out.display())?;
    }
    Ok(())
}

fn read_batch(path: &Path) -> Result<EventBatch, CliError> {
    let f = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(events::read_events(BufReader::new(f))?.0)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_analyze(
    cfg: &ExperimentConfig,
    near: &Path,
    far: &Path,
    auto_phase: bool,
    bins: usize,
    out: &Path,
    histogram: &Path,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let frame = cfg.frame()?;
    let near = read_batch(near)?;
    let far = read_batch(far)?;
    let phi = if auto_phase { fit_phase(&far, &frame)? } else { cfg.sampler.phase_shift };
    let nrel = estimate_nrel_moments(&near, &frame, 4)?;
    let ptot = estimate_ptot_moments(&far, &frame, 4, phi)?;
    let report = if auto_phase {
        criterion_from_events(&near, &far, &frame, true)?
    } else {
        let scale = (frame.d / frame.h).powi(2);
        let se = (scale * scale * ptot.stderr_variance.powi(2) + nrel.stderr_variance.powi(2)).sqrt();
        epr_young::modular::evaluate_criterion(ptot.variance, nrel.variance, &frame, se)
    };
    let hists: Vec<_> = [HistogramAxis::Sum, HistogramAxis::Single1, HistogramAxis::Single2]
        .into_iter()
        .map(|axis| fringe_histogram(&far, axis, bins, &frame))
        .collect::<Result<_, _>>()?;

    let mut f = create(out)?;
    let records = [
        json!({"kind": "criterion", "phase": phi, "auto_phase": auto_phase, "report": report, "margin": report.margin()}),
        json!({"kind": "moments", "estimate": nrel}),
        json!({"kind": "moments", "estimate": ptot}),
    ];
    for r in &records {
        writeln!(f, "{r}")?;
    }
    for h in &hists {
        let mut summary = serde_json::to_value(h).expect("histogram serializes");
        summary.as_object_mut().map(|o| o.remove("bins"));
        writeln!(f, "{}", json!({"kind": "fringes", "summary": summary}))?;
    }
    f.flush()?;

    let mut hf = create(histogram)?;
    writeln!(hf, "{}", preamble(cfg).line())?;
    writeln!(hf, "axis,center,count,density")?;
    for h in &hists {
        let axis = serde_json::to_value(h.axis).expect("axis serializes");
        for b in &h.bins {
            writeln!(hf, "{},{:.16e},{},{:.16e}", axis.as_str().unwrap_or("?"), b.center, b.count, b.density)?;
        }
    }
    hf.flush()?;

    writeln!(stdout, "Var(N_rel)           = {:.6} +- {:.6}", nrel.variance, nrel.stderr_variance)?;
    writeln!(stdout, "Var(p_tot) d^2/h^2   = {:.6} +- {:.6}", ptot.variance * (frame.d / frame.h).powi(2), ptot.stderr_variance * (frame.d / frame.h).powi(2))?;
    writeln!(stdout, "phase                = {phi:.4}")?;
    writeln!(stdout, "lhs                  = {:.6} +- {:.6}", report.lhs, report.lhs_stderr)?;
    writeln!(stdout, "threshold (2C)       = {:.6}", report.threshold)?;
    writeln!(stdout, "entangled            = {}", report.entangled)?;
    for h in &hists {
        writeln!(
            stdout,
            "{:?}: period {:.5} (expected {:.5}), visibility {:.4} +- {:.4}, fringe statistic {:.2}",
            h.axis, h.dominant_period, h.expected_period, h.visibility, h.visibility_stderr, h.fringe_statistic
        )?;
    }
    Ok(())
}
