//! Moments of the modular observables: closed forms for every state family,
//! numeric folds of tabulated densities, robustness thresholds and the
//! critical source widths.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modular::{
    criterion_constant, criterion_threshold, squeezing_s2, squeezing_s2_shifted, ModularFrame,
};
use crate::specfun::bisect;
use crate::states::{
    build_separable_state, build_suboptimal_state, EprSource, GratingSpec, SlitPairState,
};
use crate::tabulate::{cell_moments, pair_pattern, EnvelopeTable, MomentumGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// Relative integer position `N_x(x₁) - N_x(x₂)`.
    NxRel,
    /// Total modular momentum `p̄(p₁) + p̄(p₂)`.
    PbarTot,
}

/// Raw moments `(order, value)` and the variance of one observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub observable: Observable,
    pub moments: Vec<(u32, f64)>,
    pub variance: f64,
}

impl MomentSet {
    pub fn moment(&self, order: u32) -> Option<f64> {
        self.moments.iter().find(|(m, _)| *m == order).map(|(_, v)| *v)
    }
}

/// Uniform-cell variance of `p̄₁ + p̄₂`: `h²/(6d²)`.
#[inline]
pub fn uniform_variance_ptot(frame: &ModularFrame<f64>) -> f64 {
    let p = frame.momentum_period();
    p * p / 6.0
}

/// `(h²/6d²)(1 - S₂(N))`.
pub fn ideal_variance_ptot(n: usize, frame: &ModularFrame<f64>) -> f64 {
    uniform_variance_ptot(frame) * (1.0 - squeezing_s2::<f64>(n))
}

/// `(h²/6d²)(1 - S₂(N, φ))`.
pub fn ideal_variance_ptot_shifted(n: usize, phi: f64, frame: &ModularFrame<f64>) -> f64 {
    uniform_variance_ptot(frame) * (1.0 - squeezing_s2_shifted(n, phi))
}

/// `(h²/6d²)[1 - (1-w) S₂(N)]` for classical admixture weight `w`.
pub fn mixture_variance_ptot(n: usize, w: f64, frame: &ModularFrame<f64>) -> Result<f64> {
    check_weight(w)?;
    Ok(uniform_variance_ptot(frame) * (1.0 - (1.0 - w) * squeezing_s2::<f64>(n)))
}

fn check_weight(w: f64) -> Result<()> {
    if (0.0..=1.0).contains(&w) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("admixture weight {w} outside [0, 1]")))
    }
}

/// Largest classical admixture that still certifies entanglement:
/// `(12C - 1)/S₂(N) + 1`, clamped to `[0, 1]`.
pub fn classical_admixture_threshold(n: usize) -> f64 {
    let s2 = squeezing_s2::<f64>(n);
    if s2 <= 0.0 {
        return 0.0;
    }
    ((12.0 * criterion_constant::<f64>() - 1.0) / s2 + 1.0).clamp(0.0, 1.0)
}

/// Variance of `n₁ - n₂` for independent uniform slits: `(N² - 1)/6`.
pub fn separable_variance_nrel(n: usize) -> f64 {
    let n = n as f64;
    (n * n - 1.0) / 6.0
}

/// Separable admixture that exhausts the criterion through the relative
/// integer position alone, `4C`.
pub fn separable_admixture_threshold() -> f64 {
    4.0 * criterion_constant::<f64>()
}

/// Separable admixture weight at which the full mixture reaches `2C`.
///
/// The mixture's criterion value is affine in `w`, interpolating between the
/// ideal state and the numerically folded separable product state.
pub fn separable_admixture_threshold_numeric(
    g: &GratingSpec,
    frame: &ModularFrame<f64>,
    grid: MomentumGrid,
) -> Result<f64> {
    let scale = (frame.d / frame.h).powi(2);
    let ideal = scale * ideal_variance_ptot(g.n_slits, frame);
    let sep_state = build_separable_state(g)?;
    let sep = scale * numeric_variance_ptot(&sep_state, frame, grid)?
        + separable_variance_nrel(g.n_slits);
    let target = criterion_threshold::<f64>();
    let w = (target - ideal) / (sep - ideal);
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::NoRoot { lo: 0.0, hi: 1.0 });
    }
    Ok(w)
}

/// Total modular momentum variance averaged over a Gaussian spread of
/// centre-of-mass kicks with width `s0_p_cm`:
/// `(h²/6d²)[1 - exp(-(s0 d)²/(2h²|ξ_cm|²)) S₂(N)]`.
pub fn extended_source_variance_ptot(
    n: usize,
    frame: &ModularFrame<f64>,
    s0_p_cm: f64,
    xi_cm_mag: f64,
) -> f64 {
    uniform_variance_ptot(frame) * (1.0 - extended_source_damping(frame, s0_p_cm, xi_cm_mag) * squeezing_s2::<f64>(n))
}

/// `exp(-(s0 d)²/(2h²|ξ_cm|²))`.
pub fn extended_source_damping(frame: &ModularFrame<f64>, s0_p_cm: f64, xi_cm_mag: f64) -> f64 {
    let x = s0_p_cm * frame.d / (frame.h * xi_cm_mag);
    (-0.5 * x * x).exp()
}

/// Raw moments of `n - n'` under `|c_{nn'}|²`. Exact, since slit pairs have
/// disjoint support.
pub fn analytic_moments_nrel(state: &SlitPairState, m_max: u32) -> MomentSet {
    let n = state.n_slits();
    let probs = state.pair_probabilities();
    let m_max = m_max.max(2);
    let mut moments = vec![0.0; m_max as usize];
    for k1 in 0..n {
        for k2 in 0..n {
            let p = probs[k1 * n + k2];
            let diff = k1 as f64 - k2 as f64;
            let mut x = 1.0;
            for m in moments.iter_mut() {
                x *= diff;
                *m += p * x;
            }
        }
    }
    let variance = (moments[1] - moments[0] * moments[0]).max(0.0);
    MomentSet {
        observable: Observable::NxRel,
        moments: moments.into_iter().enumerate().map(|(i, v)| (i as u32 + 1, v)).collect(),
        variance,
    }
}

/// Variance of `p̄₁ + p̄₂` from the tabulated momentum density, folded onto
/// the modular cell.
pub fn numeric_variance_ptot(
    state: &SlitPairState,
    frame: &ModularFrame<f64>,
    grid: MomentumGrid,
) -> Result<f64> {
    let table = EnvelopeTable::new(state, frame, grid)?;
    table.require_coverage()?;
    let pattern = pair_pattern(state, frame, grid.grid_per_cell, 0.0)?;
    Ok(folded_variance_ptot(&table, &pattern))
}

/// Variance of `p̄₁ + p̄₂` for an envelope table and an arbitrary cell
/// pattern (row-major `G × G`).
pub fn folded_variance_ptot(table: &EnvelopeTable, pattern: &[f64]) -> f64 {
    cell_moments(&table.folded, pattern, table.grid.grid_per_cell, table.period).0
}

/// `(d²/h²) Var(p̄_tot) + Var(N_rel)` for the finite-width state of `src`.
pub fn criterion_lhs_suboptimal(
    src: &EprSource,
    g: &GratingSpec,
    frame: &ModularFrame<f64>,
    grid: MomentumGrid,
) -> Result<f64> {
    let state = build_suboptimal_state(g, src, frame.hbar())?;
    let var_p = numeric_variance_ptot(&state, frame, grid)?;
    let var_n = analytic_moments_nrel(&state, 2).variance;
    Ok((frame.d / frame.h).powi(2) * var_p + var_n)
}

/// Bracket for the critical relative width, in units of `d`.
pub const SIGMA_REL_BRACKET: (f64, f64) = (0.05, 1.0);
/// Bracket for the critical centre-of-mass width, in units of `N d`.
pub const SIGMA_CM_BRACKET: (f64, f64) = (0.02, 2.0);
/// Fixed centre-of-mass width for the relative-width scan, in units of `N d`.
pub const FIXED_SIGMA_CM: f64 = 1.5;
/// Fixed relative width for the centre-of-mass scan, in units of `d`.
pub const FIXED_SIGMA_REL: f64 = 0.1;

const CRITICAL_TOL: f64 = 1e-4;

/// Relative width at which the finite-width state stops satisfying the
/// criterion, with `σ_cm = 1.5 N d` and no flight before the gratings.
pub fn critical_sigma_rel(
    g: &GratingSpec,
    frame: &ModularFrame<f64>,
    grid: MomentumGrid,
) -> Result<f64> {
    if g.n_slits < 2 {
        return Err(Error::Precondition("critical sigma_rel needs N >= 2".into()));
    }
    let nd = g.n_slits as f64 * g.d;
    let threshold = criterion_threshold::<f64>();
    let mut failure = None;
    let f = |sigma_rel: f64| {
        let src = EprSource {
            sigma_x_rel: sigma_rel,
            sigma_x_cm: FIXED_SIGMA_CM * nd,
            mass: 1.0,
            t_grating: 0.0,
        };
        match criterion_lhs_suboptimal(&src, g, frame, grid) {
            Ok(lhs) => lhs - threshold,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    };
    let root = bisect(f, SIGMA_REL_BRACKET.0 * g.d, SIGMA_REL_BRACKET.1 * g.d, CRITICAL_TOL * g.d);
    match failure {
        Some(e) => Err(e),
        None => root,
    }
}

/// Centre-of-mass width at which the finite-width state's total modular
/// momentum variance rises to that of the ideal `(N-1)`-slit state, with
/// `σ_rel = 0.1 d`.
pub fn critical_sigma_cm(
    g: &GratingSpec,
    frame: &ModularFrame<f64>,
    grid: MomentumGrid,
) -> Result<f64> {
    let n = g.n_slits;
    if n < 3 {
        return Err(Error::Precondition(
            "critical sigma_cm is defined for N >= 3 only".into(),
        ));
    }
    let nd = n as f64 * g.d;
    let hbar = frame.hbar();
    let src = |sigma_cm: f64| EprSource {
        sigma_x_rel: FIXED_SIGMA_REL * g.d,
        sigma_x_cm: sigma_cm,
        mass: 1.0,
        t_grating: 0.0,
    };
    // the envelope depends on sigma_rel only, so one table serves the scan
    let probe = build_suboptimal_state(g, &src(nd), hbar)?;
    let table = EnvelopeTable::new(&probe, frame, grid)?;
    table.require_coverage()?;
    let target = ideal_variance_ptot(n - 1, frame);
    let mut failure = None;
    let f = |sigma_cm: f64| {
        let var = build_suboptimal_state(g, &src(sigma_cm), hbar)
            .and_then(|st| pair_pattern(&st, frame, grid.grid_per_cell, 0.0))
            .map(|pat| folded_variance_ptot(&table, &pat));
        match var {
            Ok(v) => v - target,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    };
    let root = bisect(f, SIGMA_CM_BRACKET.0 * nd, SIGMA_CM_BRACKET.1 * nd, CRITICAL_TOL * nd);
    match failure {
        Some(e) => Err(e),
        None => root,
    }
}
