//! Estimators over recorded events: modular moments with bootstrap errors,
//! the phase origin of the fringes, the criterion, and fringe histograms.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::modular::{decompose_position, evaluate_criterion, modular_momentum, CriterionReport, ModularFrame};
use crate::observables::Observable;
use crate::sampler::{substream, Coordinates, EventBatch, EventRecord, Plane, StreamKind};

/// Minimum batch size for `fit_phase`.
pub const MIN_PHASE_EVENTS: usize = 100;
/// Points of the coarse phase scan.
pub const PHASE_GRID: usize = 360;
pub const PHASE_TOL: f64 = 1e-4;
/// 99.73% quantile of χ² with two degrees of freedom.
pub const CHI2_2DOF_3SIGMA: f64 = 11.83;

/// Resampling settings for standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bootstrap {
    pub resamples: usize,
    pub seed: u64,
}

impl Default for Bootstrap {
    fn default() -> Self {
        Self {
            resamples: 200,
            seed: 0x5eed,
        }
    }
}

impl Bootstrap {
    /// Standard deviation of `stat` over resamples of `values`.
    pub fn stderr(&self, values: &[f64], stat: impl Fn(&[f64]) -> f64 + Sync) -> f64 {
        let n = values.len();
        if n < 2 || self.resamples < 2 {
            return 0.0;
        }
        let draws: Vec<f64> = (0..self.resamples as u64)
            .into_par_iter()
            .map(|r| {
                let mut rng = substream(self.seed, StreamKind::Bootstrap, r);
                let sample: Vec<f64> = (0..n).map(|_| values[rng.gen_range(0..n)]).collect();
                stat(&sample)
            })
            .collect();
        let (_, var) = mean_var(&draws);
        (var * draws.len() as f64 / (draws.len() - 1) as f64).sqrt()
    }
}

/// Sample moments of one modular observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatedMoments {
    pub observable: Observable,
    pub m1: f64,
    pub m2: f64,
    /// Raw moments `(order, value)` up to the requested order.
    pub moments: Vec<(u32, f64)>,
    pub variance: f64,
    pub stderr_variance: f64,
    pub n_events: usize,
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

fn variance(values: &[f64]) -> f64 {
    mean_var(values).1
}

fn estimate(observable: Observable, values: &[f64], m_max: u32, boot: &Bootstrap) -> EstimatedMoments {
    let n = values.len() as f64;
    let moments: Vec<(u32, f64)> = (1..=m_max.max(2))
        .map(|m| (m, values.iter().map(|v| v.powi(m as i32)).sum::<f64>() / n))
        .collect();
    EstimatedMoments {
        observable,
        m1: moments[0].1,
        m2: moments[1].1,
        variance: variance(values).max(0.0),
        stderr_variance: boot.stderr(values, variance),
        moments,
        n_events: values.len(),
    }
}

fn require_plane(events: &[EventRecord], plane: Plane) -> Result<()> {
    match events.iter().find(|e| e.plane != plane) {
        Some(e) => Err(Error::WrongPlane {
            expected: plane.as_str(),
            found: e.plane.as_str(),
        }),
        None => Ok(()),
    }
}

fn require_events(events: &[EventRecord], needed: usize) -> Result<()> {
    if events.len() < needed {
        Err(Error::InsufficientEvents {
            needed,
            got: events.len(),
        })
    } else {
        Ok(())
    }
}

/// `N_x(x₁) - N_x(x₂)` for every near event.
pub fn relative_integer_positions(batch: &EventBatch, frame: &ModularFrame<f64>) -> Result<Vec<f64>> {
    require_plane(&batch.events, Plane::Near)?;
    Ok(batch
        .events
        .iter()
        .map(|e| {
            (decompose_position(e.u1, frame).integer_part - decompose_position(e.u2, frame).integer_part) as f64
        })
        .collect())
}

/// Far events as momenta, inverting the screen map if needed.
pub fn far_momenta(batch: &EventBatch) -> Result<Vec<(f64, f64)>> {
    require_plane(&batch.events, Plane::Far)?;
    let scale = match batch.coordinates {
        Coordinates::Native => 1.0,
        Coordinates::Screen(Some(geo)) => geo.mass / geo.t2,
        Coordinates::Screen(None) => return Err(Error::MissingFarFieldMetadata),
    };
    Ok(batch.events.iter().map(|e| (e.u1 * scale, e.u2 * scale)).collect())
}

/// `p̄(p₁ + δ) + p̄(p₂)` with `δ = φħ/d`. The whole offset of `p₁ + p₂` is
/// put on the first particle so that `φ` and `φ + 2π` fold identically; a
/// positive `φ` moves fringes toward negative `p₁ + p₂`.
fn total_modular(momenta: &[(f64, f64)], frame: &ModularFrame<f64>, phi: f64) -> Vec<f64> {
    let shift = phi * frame.hbar() / frame.d;
    momenta
        .iter()
        .map(|&(p1, p2)| modular_momentum(p1 + shift, frame) + modular_momentum(p2, frame))
        .collect()
}

pub fn estimate_nrel_moments(batch: &EventBatch, frame: &ModularFrame<f64>, m_max: u32) -> Result<EstimatedMoments> {
    estimate_nrel_moments_with(batch, frame, m_max, &Bootstrap::default())
}

pub fn estimate_nrel_moments_with(
    batch: &EventBatch,
    frame: &ModularFrame<f64>,
    m_max: u32,
    boot: &Bootstrap,
) -> Result<EstimatedMoments> {
    let values = relative_integer_positions(batch, frame)?;
    require_events(&batch.events, 2)?;
    Ok(estimate(Observable::NxRel, &values, m_max, boot))
}

pub fn estimate_ptot_moments(
    batch: &EventBatch,
    frame: &ModularFrame<f64>,
    m_max: u32,
    phi: f64,
) -> Result<EstimatedMoments> {
    estimate_ptot_moments_with(batch, frame, m_max, phi, &Bootstrap::default())
}

pub fn estimate_ptot_moments_with(
    batch: &EventBatch,
    frame: &ModularFrame<f64>,
    m_max: u32,
    phi: f64,
    boot: &Bootstrap,
) -> Result<EstimatedMoments> {
    let momenta = far_momenta(batch)?;
    require_events(&batch.events, 2)?;
    Ok(estimate(Observable::PbarTot, &total_modular(&momenta, frame, phi), m_max, boot))
}

/// Phase origin in `[0, 2π)` minimizing the sample variance of `p̄_tot`.
pub fn fit_phase(batch: &EventBatch, frame: &ModularFrame<f64>) -> Result<f64> {
    let momenta = far_momenta(batch)?;
    require_events(&batch.events, MIN_PHASE_EVENTS)?;
    let cost = |phi: f64| variance(&total_modular(&momenta, frame, phi));
    let step = TAU / PHASE_GRID as f64;
    let scan: Vec<f64> = (0..PHASE_GRID).into_par_iter().map(|k| cost(k as f64 * step)).collect();
    let (best, best_cost) = scan
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, &c)| if c < acc.1 { (k, c) } else { acc });
    let centre = best as f64 * step;
    let (phi, refined) = golden_min(&cost, centre - step, centre + step, PHASE_TOL);
    let phi = if refined <= best_cost { phi } else { centre };
    Ok(phi.rem_euclid(TAU))
}

/// Golden-section search for a minimum on `[lo, hi]`.
fn golden_min(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Criterion from near- and far-plane batches. Standard errors of the two
/// terms add in quadrature.
pub fn criterion_from_events(
    near: &EventBatch,
    far: &EventBatch,
    frame: &ModularFrame<f64>,
    auto_phase: bool,
) -> Result<CriterionReport<f64>> {
    criterion_from_events_with(near, far, frame, auto_phase, &Bootstrap::default())
}

pub fn criterion_from_events_with(
    near: &EventBatch,
    far: &EventBatch,
    frame: &ModularFrame<f64>,
    auto_phase: bool,
    boot: &Bootstrap,
) -> Result<CriterionReport<f64>> {
    let nrel = estimate_nrel_moments_with(near, frame, 2, boot)?;
    let phi = if auto_phase { fit_phase(far, frame)? } else { 0.0 };
    let ptot = estimate_ptot_moments_with(far, frame, 2, phi, boot)?;
    let scale = (frame.d / frame.h).powi(2);
    let stderr = (scale * scale * ptot.stderr_variance.powi(2) + nrel.stderr_variance.powi(2)).sqrt();
    Ok(evaluate_criterion(ptot.variance, nrel.variance, frame, stderr))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HistogramAxis {
    Sum,
    Single1,
    Single2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub center: f64,
    pub count: u64,
    pub density: f64,
}

/// Histogram of one far-plane axis with fringe diagnostics, in the units the
/// events carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeHistogram {
    pub axis: HistogramAxis,
    pub bins: Vec<HistogramBin>,
    /// Fringe period expected from the grating, `h/d` or `T₂h/(md)`.
    pub expected_period: f64,
    /// Period of the strongest Fourier component near the expected one.
    pub dominant_period: f64,
    /// `|⟨exp(-2πi u/period)⟩|` at the expected period.
    pub fourier_amplitude: f64,
    /// `2n|A|²`, χ² with two degrees of freedom when there are no fringes.
    pub fringe_statistic: f64,
    pub fringes_detected: bool,
    /// `(max - min)/(max + min)` of the harmonic reconstruction over the
    /// central three periods.
    pub visibility: f64,
    pub visibility_stderr: f64,
}

fn fourier(values: &[f64], freq: f64) -> Complex64 {
    let sum: Complex64 = values
        .par_iter()
        .map(|u| Complex64::from_polar(1.0, -TAU * freq * u))
        .sum();
    sum / values.len() as f64
}

/// Visibility of `1 + 2 Σ Re(c_j e^{ijθ})` built from the significant
/// harmonics of the phases `θ = 2π u/period`.
fn harmonic_visibility(phases: &[f64], max_harmonic: usize) -> f64 {
    let n = phases.len() as f64;
    if phases.is_empty() {
        return 0.0;
    }
    let coeffs: Vec<Complex64> = (1..=max_harmonic)
        .map(|j| {
            let c: Complex64 = phases.iter().map(|t| Complex64::from_polar(1.0, -(j as f64) * t)).sum();
            c / n
        })
        .filter(|c| 2.0 * n * c.norm_sqr() > CHI2_2DOF_3SIGMA)
        .collect();
    if coeffs.is_empty() {
        return 0.0;
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..720 {
        let t = k as f64 * TAU / 720.0;
        let v = 1.0
            + 2.0
                * coeffs
                    .iter()
                    .enumerate()
                    .map(|(j, c)| (c * Complex64::from_polar(1.0, (j + 1) as f64 * t)).re)
                    .sum::<f64>();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let lo = lo.max(0.0);
    (hi - lo) / (hi + lo)
}

pub fn fringe_histogram(
    batch: &EventBatch,
    axis: HistogramAxis,
    bins: usize,
    frame: &ModularFrame<f64>,
) -> Result<FringeHistogram> {
    fringe_histogram_with(batch, axis, bins, frame, &Bootstrap::default())
}

pub fn fringe_histogram_with(
    batch: &EventBatch,
    axis: HistogramAxis,
    bins: usize,
    frame: &ModularFrame<f64>,
    boot: &Bootstrap,
) -> Result<FringeHistogram> {
    if bins < 8 {
        return Err(Error::InvalidParameter(format!("need at least 8 bins (got {bins})")));
    }
    require_plane(&batch.events, Plane::Far)?;
    require_events(&batch.events, 2)?;
    let expected_period = match batch.coordinates {
        Coordinates::Native => frame.momentum_period(),
        Coordinates::Screen(Some(geo)) => frame.momentum_period() * geo.t2 / geo.mass,
        Coordinates::Screen(None) => return Err(Error::MissingFarFieldMetadata),
    };
    let values: Vec<f64> = batch
        .events
        .iter()
        .map(|e| match axis {
            HistogramAxis::Sum => e.u1 + e.u2,
            HistogramAxis::Single1 => e.u1,
            HistogramAxis::Single2 => e.u2,
        })
        .collect();
    let n = values.len();

    let mut mags: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let edge = mags[((0.995 * n as f64) as usize).min(n - 1)].max(expected_period);
    let width = 2.0 * edge / bins as f64;
    let mut counts = vec![0u64; bins];
    for v in &values {
        if v.abs() <= edge {
            let k = (((v + edge) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
    }
    let inside: u64 = counts.iter().sum();
    let hist = counts
        .iter()
        .enumerate()
        .map(|(k, &count)| HistogramBin {
            center: -edge + (k as f64 + 0.5) * width,
            count,
            density: count as f64 / (inside.max(1) as f64 * width),
        })
        .collect();

    let f0 = 1.0 / expected_period;
    let amp = |f: f64| fourier(&values, f).norm();
    let scan = 200;
    let (flo, fhi) = (0.5 * f0, 3.0 * f0);
    let fstep = (fhi - flo) / scan as f64;
    let best = (0..=scan)
        .map(|k| flo + k as f64 * fstep)
        .map(|f| (f, amp(f)))
        .fold((f0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    let (f_best, _) = golden_min(&|f| -amp(f), best.0 - fstep, best.0 + fstep, 1e-6 * f0);

    let a0 = fourier(&values, f0).norm();
    let stat = 2.0 * n as f64 * a0 * a0;

    let window: Vec<f64> = values
        .iter()
        .filter(|v| v.abs() < 1.5 * expected_period)
        .map(|v| TAU * v / expected_period)
        .collect();
    let harmonics = 8;
    let visibility = harmonic_visibility(&window, harmonics);
    let visibility_stderr = boot.stderr(&window, |s| harmonic_visibility(s, harmonics));

    Ok(FringeHistogram {
        axis,
        bins: hist,
        expected_period,
        dominant_period: 1.0 / f_best,
        fourier_amplitude: a0,
        fringe_statistic: stat,
        fringes_detected: stat > CHI2_2DOF_3SIGMA,
        visibility,
        visibility_stderr,
    })
}
