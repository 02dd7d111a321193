//! One-parameter sweeps of the criterion and the critical-width table.

use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;
use std::path::Path;

use epr_young::modular::criterion_threshold;
use epr_young::observables::{
    critical_sigma_cm, critical_sigma_rel, criterion_lhs_suboptimal, extended_source_variance_ptot,
    ideal_variance_ptot, ideal_variance_ptot_shifted, mixture_variance_ptot,
};
use epr_young::states::{dispersion_factors, GratingSpec};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::{create, preamble};

/// Slit counts of the critical-width table.
pub const CRITICAL_WIDTH_SLITS: [usize; 7] = [2, 3, 4, 5, 10, 20, 30];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    SigmaRel,
    SigmaCm,
    W,
    Phi,
    S0PCm,
    N,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::SigmaRel => "sigma_rel",
            SweepParam::SigmaCm => "sigma_cm",
            SweepParam::W => "w",
            SweepParam::Phi => "phi",
            SweepParam::S0PCm => "s0_p_cm",
            SweepParam::N => "n",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl SweepSpec {
    /// Parses `param=lo:hi:steps`.
    pub fn parse(spec: &str) -> Result<Self, CliError> {
        let bad = || CliError::Usage(format!("sweep spec {spec:?} is not param=lo:hi:steps"));
        let (name, range) = spec.split_once('=').ok_or_else(bad)?;
        let param = match name.trim() {
            "sigma_rel" => SweepParam::SigmaRel,
            "sigma_cm" => SweepParam::SigmaCm,
            "w" => SweepParam::W,
            "phi" => SweepParam::Phi,
            "s0_p_cm" => SweepParam::S0PCm,
            "n" => SweepParam::N,
            other => return Err(CliError::Usage(format!("unknown sweep parameter {other:?}"))),
        };
        let parts: Vec<&str> = range.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let steps: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if steps == 0 || !lo.is_finite() || !hi.is_finite() {
            return Err(bad());
        }
        Ok(Self { param, lo, hi, steps })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.lo];
        }
        (0..self.steps)
            .map(|k| self.lo + (self.hi - self.lo) * k as f64 / (self.steps - 1) as f64)
            .collect()
    }
}

pub enum SweepJob {
    Range(SweepSpec),
    CriticalWidths,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub parameter: &'static str,
    pub value: f64,
    pub lhs: Option<f64>,
    pub threshold: f64,
    pub entangled: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalWidthRow {
    pub n: usize,
    pub sigma_rel_crit_over_d: Option<f64>,
    pub sigma_cm_crit_over_nd: Option<f64>,
    pub error: Option<String>,
}

/// Criterion lhs at one sweep point.
pub fn sweep_lhs(cfg: &ExperimentConfig, param: SweepParam, value: f64) -> epr_young::Result<f64> {
    let frame = cfg.frame()?;
    let scale = (frame.d / frame.h).powi(2);
    let n = cfg.grating.n_slits;
    match param {
        SweepParam::SigmaRel | SweepParam::SigmaCm => {
            let mut src = cfg.source;
            if param == SweepParam::SigmaRel {
                src.sigma_x_rel = value;
            } else {
                src.sigma_x_cm = value;
            }
            src.check()?;
            criterion_lhs_suboptimal(&src, &cfg.grating, &frame, cfg.grid)
        }
        SweepParam::W => Ok(scale * mixture_variance_ptot(n, value, &frame)?),
        SweepParam::Phi => Ok(scale * ideal_variance_ptot_shifted(n, value, &frame)),
        SweepParam::S0PCm => {
            if !(value >= 0.0) {
                return Err(epr_young::Error::InvalidParameter(format!("s0_p_cm = {value} is negative")));
            }
            let (xi_cm, _) = dispersion_factors(&cfg.source, cfg.source.t_grating, cfg.hbar());
            Ok(scale * extended_source_variance_ptot(n, &frame, value, xi_cm.norm()))
        }
        SweepParam::N => {
            let k = value.round();
            if k < 1.0 {
                return Err(epr_young::Error::InvalidParameter(format!("n = {value} must be at least 1")));
            }
            Ok(scale * ideal_variance_ptot(k as usize, &frame))
        }
    }
}

pub fn sweep_rows(cfg: &ExperimentConfig, spec: &SweepSpec) -> Vec<SweepRow> {
    let threshold = criterion_threshold::<f64>();
    spec.values()
        .into_par_iter()
        .map(|v| {
            let value = if spec.param == SweepParam::N { v.round() } else { v };
            match sweep_lhs(cfg, spec.param, value) {
                Ok(lhs) => SweepRow {
                    parameter: spec.param.name(),
                    value,
                    lhs: Some(lhs),
                    threshold,
                    entangled: Some(lhs < threshold),
                    error: None,
                },
                Err(e) => SweepRow {
                    parameter: spec.param.name(),
                    value,
                    lhs: None,
                    threshold,
                    entangled: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// Critical widths for each slit count, keeping the configured `d`, `a`
/// and grid.
pub fn critical_width_rows(cfg: &ExperimentConfig, slits: &[usize]) -> Vec<CriticalWidthRow> {
    slits
        .par_iter()
        .map(|&n| {
            let g = GratingSpec { n_slits: n, ..cfg.grating };
            let mut errors = Vec::new();
            let frame = match g.frame(cfg.frame.h) {
                Ok(f) => f,
                Err(e) => {
                    return CriticalWidthRow { n, sigma_rel_crit_over_d: None, sigma_cm_crit_over_nd: None, error: Some(e.to_string()) }
                }
            };
            let rel = critical_sigma_rel(&g, &frame, cfg.grid)
                .map(|s| s / g.d)
                .map_err(|e| errors.push(format!("sigma_rel: {e}")))
                .ok();
            let cm = if n >= 3 {
                critical_sigma_cm(&g, &frame, cfg.grid)
                    .map(|s| s / (n as f64 * g.d))
                    .map_err(|e| errors.push(format!("sigma_cm: {e}")))
                    .ok()
            } else {
                None
            };
            CriticalWidthRow {
                n,
                sigma_rel_crit_over_d: rel,
                sigma_cm_crit_over_nd: cm,
                error: (!errors.is_empty()).then(|| errors.join("; ")),
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

fn csv_text(s: &Option<String>) -> String {
    s.as_deref().map(|e| format!("\"{}\"", e.replace('"', "'"))).unwrap_or_default()
}

pub fn cmd_sweep(
    cfg: &ExperimentConfig,
    job: &SweepJob,
    out: &Path,
    jsonl: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let mut f = create(out)?;
    writeln!(f, "{}", preamble(cfg).line())?;
    let mut records = Vec::new();
    match job {
        SweepJob::Range(spec) => {
            let rows = sweep_rows(cfg, spec);
            writeln!(f, "parameter,value,lhs,threshold,verdict,error")?;
            for r in &rows {
                let verdict = match r.entangled {
                    Some(true) => "entangled",
                    Some(false) => "not_entangled",
                    None => "error",
                };
                writeln!(
                    f,
                    "{},{:.16e},{},{:.16e},{verdict},{}",
                    r.parameter,
                    r.value,
                    opt(r.lhs),
                    r.threshold,
                    csv_text(&r.error)
                )?;
                writeln!(stdout, "{} = {:<12.6} lhs = {:<10} {verdict}", r.parameter, r.value, r.lhs.map(|l| format!("{l:.6}")).unwrap_or_else(|| "-".into()))?;
                records.push(serde_json::to_value(r).expect("row serializes"));
            }
        }
        SweepJob::CriticalWidths => {
            let rows = critical_width_rows(cfg, &CRITICAL_WIDTH_SLITS);
            writeln!(f, "n,sigma_rel_crit_over_d,sigma_cm_crit_over_nd,error")?;
            writeln!(stdout, "{:>4} {:>12} {:>12}", "N", "sig_rel/d", "sig_cm/(Nd)")?;
            for r in &rows {
                writeln!(f, "{},{},{},{}", r.n, opt(r.sigma_rel_crit_over_d), opt(r.sigma_cm_crit_over_nd), csv_text(&r.error))?;
                let show = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
                writeln!(stdout, "{:>4} {:>12} {:>12}", r.n, show(r.sigma_rel_crit_over_d), show(r.sigma_cm_crit_over_nd))?;
                records.push(serde_json::to_value(r).expect("row serializes"));
            }
        }
    }
    f.flush()?;
    if let Some(path) = jsonl {
        let mut j = create(path)?;
        for r in &records {
            writeln!(j, "{r}")?;
        }
        j.flush()?;
    }
    Ok(())
}
