//! Source models, free propagation, grating geometry and post-grating
//! two-particle states.
//!
//! A post-grating state is a coefficient matrix over slit pairs `(n, n')`
//! times one shared intra-slit pair wavefunction
//! `Ψ_s(x₁, x₂) = exp(-(x₁-x₂)²/(4σ²ξ))` on the `a × a` slit square.
//! Slit indices run over `{-(N-1)/2, ..., (N-1)/2}` and slit `n` is centred
//! at `n d`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modular::{decompose, ModularFrame};
use crate::specfun::{sinc, GridSpec};

/// Geometry of one N-slit grating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GratingSpec {
    pub n_slits: usize,
    pub d: f64,
    pub a: f64,
}

impl GratingSpec {
    pub fn new(n_slits: usize, d: f64, a: f64) -> Result<Self> {
        let g = Self { n_slits, d, a };
        g.check()?;
        Ok(g)
    }

    pub fn check(&self) -> Result<()> {
        if self.n_slits == 0 {
            return Err(Error::InvalidParameter("grating needs at least one slit".into()));
        }
        if !(self.d > 0.0 && self.a > 0.0 && self.a < self.d && self.d.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "grating needs 0 < a < d (a={}, d={})",
                self.a, self.d
            )));
        }
        Ok(())
    }

    /// Index of slit `k` in `0..N`, a half-integer when `N` is even.
    #[inline]
    pub fn slit_index(&self, k: usize) -> f64 {
        k as f64 - (self.n_slits as f64 - 1.0) / 2.0
    }

    pub fn slit_indices(&self) -> Vec<f64> {
        (0..self.n_slits).map(|k| self.slit_index(k)).collect()
    }

    #[inline]
    pub fn slit_center(&self, k: usize) -> f64 {
        self.slit_index(k) * self.d
    }

    /// Modular frame for this grating, with the position cells centred on
    /// the slits.
    pub fn frame(&self, h: f64) -> Result<ModularFrame<f64>> {
        let origin = if self.n_slits % 2 == 0 { self.d / 2.0 } else { 0.0 };
        Ok(ModularFrame::new(self.d, h)?.with_position_origin(origin))
    }
}

/// Parameters of the finite EPR source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EprSource {
    pub sigma_x_rel: f64,
    pub sigma_x_cm: f64,
    pub mass: f64,
    /// Propagation time to the gratings.
    pub t_grating: f64,
}

impl EprSource {
    pub fn new(sigma_x_rel: f64, sigma_x_cm: f64, mass: f64, t_grating: f64) -> Result<Self> {
        let s = Self {
            sigma_x_rel,
            sigma_x_cm,
            mass,
            t_grating,
        };
        s.check()?;
        Ok(s)
    }

    pub fn check(&self) -> Result<()> {
        let ok = self.sigma_x_rel > 0.0
            && self.sigma_x_cm > 0.0
            && self.mass > 0.0
            && self.t_grating >= 0.0
            && [self.sigma_x_rel, self.sigma_x_cm, self.mass, self.t_grating]
                .iter()
                .all(|v| v.is_finite());
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "source needs positive finite widths and mass and t >= 0 ({self:?})"
            )));
        }
        Ok(())
    }

    /// Warnings for parameters outside the EPR regime.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.sigma_x_rel >= self.sigma_x_cm {
            w.push(format!(
                "sigma_x_rel = {} is not below sigma_x_cm = {}: the pair is not position-correlated",
                self.sigma_x_rel, self.sigma_x_cm
            ));
        }
        w
    }
}

/// Phase-space displacement of the source centre.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Displacement {
    pub x_cm0: f64,
    pub x_rel0: f64,
    pub p_cm0: f64,
    pub p_rel0: f64,
}

impl Displacement {
    pub fn is_zero(&self) -> bool {
        self.x_cm0 == 0.0 && self.x_rel0 == 0.0 && self.p_cm0 == 0.0 && self.p_rel0 == 0.0
    }
}

/// Gaussian widths of the distribution of source displacements.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceEnsemble {
    pub s0_x_cm: f64,
    pub s0_x_rel: f64,
    pub s0_p_cm: f64,
    pub s0_p_rel: f64,
}

impl SourceEnsemble {
    pub fn check(&self) -> Result<()> {
        let w = [self.s0_x_cm, self.s0_x_rel, self.s0_p_cm, self.s0_p_rel];
        if w.iter().all(|v| *v >= 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "ensemble widths must be finite and non-negative ({self:?})"
            )))
        }
    }

    pub fn is_delta(&self) -> bool {
        self.s0_x_cm == 0.0 && self.s0_x_rel == 0.0 && self.s0_p_cm == 0.0 && self.s0_p_rel == 0.0
    }
}

/// Post-grating two-particle state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlitPairState {
    pub grating: GratingSpec,
    /// Row-major `N × N`, entry `(k, k')` for slits `k` and `k'` in `0..N`.
    pub coeffs: Vec<Complex64>,
    /// Relative-position width inside a slit pair; `f64::INFINITY` for an
    /// uncorrelated (product) pair.
    pub sigma_rel_eff: f64,
    pub xi_rel: Complex64,
    /// Norm of the coefficient matrix before normalization.
    pub norm: f64,
}

impl SlitPairState {
    /// Normalizes `raw` and wraps it. Fails on a zero or non-finite matrix.
    pub fn from_coefficients(
        grating: GratingSpec,
        raw: Vec<Complex64>,
        sigma_rel_eff: f64,
        xi_rel: Complex64,
    ) -> Result<Self> {
        grating.check()?;
        let n = grating.n_slits;
        if raw.len() != n * n {
            return Err(Error::InvalidParameter(format!(
                "coefficient matrix has {} entries, {} expected",
                raw.len(),
                n * n
            )));
        }
        if !(sigma_rel_eff > 0.0) || xi_rel.re <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "pair wavefunction needs sigma > 0 and Re xi > 0 (sigma={sigma_rel_eff}, xi={xi_rel})"
            )));
        }
        let norm = raw.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidParameter("coefficient matrix has no weight".into()));
        }
        let coeffs = raw.into_iter().map(|c| c / norm).collect();
        Ok(Self {
            grating,
            coeffs,
            sigma_rel_eff,
            xi_rel,
            norm,
        })
    }

    #[inline]
    pub fn n_slits(&self) -> usize {
        self.grating.n_slits
    }

    #[inline]
    pub fn coeff(&self, k1: usize, k2: usize) -> Complex64 {
        self.coeffs[k1 * self.grating.n_slits + k2]
    }

    /// `|c_{kk'}|²`, row-major.
    pub fn pair_probabilities(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn is_uncorrelated_pair(&self) -> bool {
        self.sigma_rel_eff.is_infinite()
    }

    /// Relative-coordinate profile `g(u) = exp(-u²/(4σ²ξ))`.
    #[inline]
    pub fn relative_profile(&self, u: f64) -> Complex64 {
        if self.is_uncorrelated_pair() {
            return Complex64::new(1.0, 0.0);
        }
        let s2 = self.sigma_rel_eff * self.sigma_rel_eff;
        (-(u * u) / (4.0 * s2 * self.xi_rel)).exp()
    }

    /// `|g(u)|²`.
    #[inline]
    pub fn relative_profile_sqr(&self, u: f64) -> f64 {
        if self.is_uncorrelated_pair() {
            return 1.0;
        }
        let s2 = self.sigma_rel_eff * self.sigma_rel_eff;
        (-(u * u) * self.xi_rel.inv().re / (2.0 * s2)).exp()
    }

    /// Intra-slit pair amplitude at slit-local coordinates; zero outside
    /// the slit square.
    pub fn pair_amplitude(&self, x1: f64, x2: f64) -> Complex64 {
        let h = self.grating.a / 2.0;
        if x1.abs() > h || x2.abs() > h {
            return Complex64::new(0.0, 0.0);
        }
        self.relative_profile(x1 - x2)
    }

    /// `‖Ψ_s‖² = 2 ∫_0^a |g(u)|² (a - u) du`.
    pub fn pair_norm_sqr(&self) -> f64 {
        let a = self.grating.a;
        if self.is_uncorrelated_pair() {
            return a * a;
        }
        let q = quadrature_nodes(self, 0.0, 0.0, 1.0).max(401);
        let g = GridSpec::new(0.0, a, q).unwrap().simpson();
        let w = g.simpson_weights();
        2.0 * g
            .points()
            .zip(w)
            .map(|(u, wk)| wk * self.relative_profile_sqr(u) * (a - u))
            .sum::<f64>()
    }
}

/// Simpson node count for the envelope integral over `[0, a]`: odd, at
/// least 33, at most ~0.1 rad of phase per node, and several nodes per
/// relative-position width.
pub(crate) fn quadrature_nodes(state: &SlitPairState, s_max: f64, r_max: f64, hbar: f64) -> usize {
    let a = state.grating.a;
    let phase = (s_max.abs() + r_max.abs()) * a / (2.0 * hbar);
    let mut q = (phase / 0.1).ceil() as usize + 1;
    if !state.is_uncorrelated_pair() {
        let width = state.sigma_rel_eff * state.xi_rel.norm();
        q = q.max((8.0 * a / width).ceil() as usize + 1);
    }
    let q = q.max(33);
    if q % 2 == 0 {
        q + 1
    } else {
        q
    }
}

/// Complex dispersion factors `(ξ_cm, ξ_rel)` after free flight for `t`.
pub fn dispersion_factors(src: &EprSource, t: f64, hbar: f64) -> (Complex64, Complex64) {
    let m = src.mass;
    let cm = Complex64::new(1.0, hbar * t / (4.0 * src.sigma_x_cm * src.sigma_x_cm * m));
    let rel = Complex64::new(1.0, hbar * t / (src.sigma_x_rel * src.sigma_x_rel * m));
    (cm, rel)
}

/// Longest flight time `σ_rel² m/ħ` that keeps the relative wavepacket
/// from spreading appreciably.
pub fn max_propagation_time(src: &EprSource, hbar: f64) -> f64 {
    src.sigma_x_rel * src.sigma_x_rel * src.mass / hbar
}

/// Slit-correlation and illumination diagnostics at the gratings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetupDiagnostics {
    /// `d / (σ_rel |ξ_rel|)`.
    pub slit_correlation_ratio: f64,
    /// `σ_cm |ξ_cm| / (N d)`.
    pub illumination_ratio: f64,
    pub t_max: f64,
    pub neighbor_suppression: f64,
    pub margin_decrease: f64,
    pub conditions_met: bool,
    pub warnings: Vec<String>,
}

pub const SLIT_CORRELATION_MIN: f64 = 5.0;
pub const ILLUMINATION_MIN: f64 = 1.0;

pub fn validate_setup(src: &EprSource, g: &GratingSpec, hbar: f64) -> SetupDiagnostics {
    let (xi_cm, xi_rel) = dispersion_factors(src, src.t_grating, hbar);
    let rel_width = src.sigma_x_rel * xi_rel.norm();
    let cm_width = src.sigma_x_cm * xi_cm.norm();
    let nd = g.n_slits as f64 * g.d;
    let slit_correlation_ratio = g.d / rel_width;
    let illumination_ratio = cm_width / nd;
    let t_max = max_propagation_time(src, hbar);
    let neighbor_suppression = (-(g.d / (2.0 * rel_width)).powi(2)).exp();
    let margin_decrease = 1.0 - (-(nd / (4.0 * cm_width)).powi(2)).exp();

    let mut warnings = src.warnings();
    if slit_correlation_ratio < SLIT_CORRELATION_MIN {
        warnings.push(format!(
            "slit correlation ratio d/(sigma_rel|xi_rel|) = {slit_correlation_ratio:.3} is below {SLIT_CORRELATION_MIN}: \
             neighbouring slit pairs are populated"
        ));
    }
    if illumination_ratio < ILLUMINATION_MIN {
        warnings.push(format!(
            "illumination ratio sigma_cm|xi_cm|/(N d) = {illumination_ratio:.3} is below {ILLUMINATION_MIN}: \
             the grating is not illuminated uniformly"
        ));
    }
    if src.t_grating > t_max {
        warnings.push(format!(
            "flight time {} exceeds T_max = {t_max:.4e}",
            src.t_grating
        ));
    }
    SetupDiagnostics {
        slit_correlation_ratio,
        illumination_ratio,
        t_max,
        neighbor_suppression,
        margin_decrease,
        conditions_met: slit_correlation_ratio >= SLIT_CORRELATION_MIN
            && illumination_ratio >= ILLUMINATION_MIN,
        warnings,
    }
}

/// Displaced-source diagnostics. The `0.2` limits on the first two ratios
/// are a policy choice, not a physical bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacedDiagnostics {
    pub x_cm_t: f64,
    pub x_rel_t: f64,
    pub n_rel_t: i64,
    pub x_rel_t_mod: f64,
    /// `|x_cm(T)| / (N d)`.
    pub centre_ratio: f64,
    pub centre_ok: bool,
    /// `|N_rel(T)| / N`.
    pub order_ratio: f64,
    pub order_ok: bool,
    /// Both particles pass: `|x̄_rel(T)| < a/2`.
    pub passes: bool,
    pub effective_order: usize,
    pub warnings: Vec<String>,
}

pub const DISPLACEMENT_RATIO_MAX: f64 = 0.2;

pub fn validate_displaced(
    src: &EprSource,
    g: &GratingSpec,
    disp: &Displacement,
) -> DisplacedDiagnostics {
    let t = src.t_grating;
    let x_cm_t = disp.x_cm0 + disp.p_cm0 * t / (2.0 * src.mass);
    let x_rel_t = disp.x_rel0 + 2.0 * disp.p_rel0 * t / src.mass;
    let dec = decompose(x_rel_t, g.d);
    let n = g.n_slits as f64;
    let centre_ratio = x_cm_t.abs() / (n * g.d);
    let order_ratio = dec.integer_part.unsigned_abs() as f64 / n;
    let passes = dec.modular_part.abs() < g.a / 2.0;
    let effective_order = g.n_slits.saturating_sub(dec.integer_part.unsigned_abs() as usize);

    let mut warnings = Vec::new();
    if centre_ratio > DISPLACEMENT_RATIO_MAX {
        warnings.push(format!(
            "centre displacement |x_cm(T)|/(N d) = {centre_ratio:.3} exceeds {DISPLACEMENT_RATIO_MAX} (policy)"
        ));
    }
    if order_ratio > DISPLACEMENT_RATIO_MAX {
        warnings.push(format!(
            "relative displacement |N_rel(T)|/N = {order_ratio:.3} exceeds {DISPLACEMENT_RATIO_MAX} (policy)"
        ));
    }
    if !passes {
        warnings.push(format!(
            "|x_rel(T) mod d| = {:.4} is not below a/2 = {:.4}: pairs are blocked",
            dec.modular_part.abs(),
            g.a / 2.0
        ));
    }
    DisplacedDiagnostics {
        x_cm_t,
        x_rel_t,
        n_rel_t: dec.integer_part,
        x_rel_t_mod: dec.modular_part,
        centre_ratio,
        centre_ok: centre_ratio <= DISPLACEMENT_RATIO_MAX,
        order_ratio,
        order_ok: order_ratio <= DISPLACEMENT_RATIO_MAX,
        passes,
        effective_order,
        warnings,
    }
}

/// Ideal state: both particles through the same slit index, equal weights.
pub fn build_mme_state(g: &GratingSpec, src: &EprSource, hbar: f64) -> Result<SlitPairState> {
    let n = g.n_slits;
    let (_, xi_rel) = dispersion_factors(src, src.t_grating, hbar);
    let mut raw = vec![Complex64::new(0.0, 0.0); n * n];
    for k in 0..n {
        raw[k * n + k] = Complex64::new(1.0, 0.0);
    }
    SlitPairState::from_coefficients(*g, raw, src.sigma_x_rel, xi_rel)
}

/// Finite-width state: Gaussian weights over slit pairs from the
/// centre-of-mass and relative widths at the gratings.
///
/// Quadratic phases picked up in flight are not modelled, so the flight
/// time must not exceed [`max_propagation_time`].
pub fn build_suboptimal_state(
    g: &GratingSpec,
    src: &EprSource,
    hbar: f64,
) -> Result<SlitPairState> {
    let t_max = max_propagation_time(src, hbar);
    if src.t_grating > t_max {
        return Err(Error::Precondition(format!(
            "flight time {} exceeds T_max = {t_max:.4e}; the phases this state drops are no longer small",
            src.t_grating
        )));
    }
    let n = g.n_slits;
    let (xi_cm, xi_rel) = dispersion_factors(src, src.t_grating, hbar);
    let cm_var = 16.0 * src.sigma_x_cm.powi(2) * xi_cm.norm_sqr();
    let rel_var = 4.0 * src.sigma_x_rel.powi(2) * xi_rel.norm_sqr();
    let mut raw = Vec::with_capacity(n * n);
    for k1 in 0..n {
        for k2 in 0..n {
            let (n1, n2) = (g.slit_index(k1), g.slit_index(k2));
            let sum = (n1 + n2) * g.d;
            let diff = (n1 - n2) * g.d;
            let w = (-(sum * sum) / cm_var - diff * diff / rel_var).exp();
            raw.push(Complex64::new(w, 0.0));
        }
    }
    SlitPairState::from_coefficients(*g, raw, src.sigma_x_rel, xi_rel)
}

/// Product of two independent, uniformly illuminated single-particle
/// gratings.
pub fn build_separable_state(g: &GratingSpec) -> Result<SlitPairState> {
    let n = g.n_slits;
    let raw = vec![Complex64::new(1.0, 0.0); n * n];
    SlitPairState::from_coefficients(*g, raw, f64::INFINITY, Complex64::new(1.0, 0.0))
}

/// Slit-pair phase sum `Σ c_{nn'} exp(-i(p₁n + p₂n')d/ħ)`.
pub fn phase_sum(state: &SlitPairState, p1: f64, p2: f64, hbar: f64) -> Complex64 {
    let g = &state.grating;
    let n = g.n_slits;
    let u: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(1.0, -p1 * g.slit_center(k) / hbar))
        .collect();
    let v: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(1.0, -p2 * g.slit_center(k) / hbar))
        .collect();
    let mut acc = Complex64::new(0.0, 0.0);
    for k1 in 0..n {
        let mut row = Complex64::new(0.0, 0.0);
        for k2 in 0..n {
            row += state.coeff(k1, k2) * v[k2];
        }
        acc += u[k1] * row;
    }
    acc
}

/// Fourier transform of the intra-slit pair wavefunction,
/// `∫∫ exp(-i(p₁x₁ + p₂x₂)/ħ) Ψ_s(x₁, x₂) dx₁ dx₂`, unnormalized.
///
/// Evaluated in the relative coordinate `u = x₁ - x₂`, where the
/// centre-of-mass integral is a closed-form sinc:
/// `2 ∫_0^a g(u) cos(r u/2ħ) (a-u) sinc(s(a-u)/2ħ) du` with `s = p₁+p₂`,
/// `r = p₁-p₂`.
pub fn envelope_amplitude(state: &SlitPairState, p1: f64, p2: f64, hbar: f64) -> Complex64 {
    let a = state.grating.a;
    let (s, r) = (p1 + p2, p1 - p2);
    if state.is_uncorrelated_pair() {
        return Complex64::new(
            a * a * sinc(p1 * a / (2.0 * hbar)) * sinc(p2 * a / (2.0 * hbar)),
            0.0,
        );
    }
    let q = quadrature_nodes(state, s, r, hbar);
    let grid = GridSpec::new(0.0, a, q).unwrap();
    let w = grid.simpson_weights();
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, wk) in w.iter().enumerate() {
        let u = grid.point(k);
        let len = a - u;
        let f = (r * u / (2.0 * hbar)).cos() * len * sinc(s * len / (2.0 * hbar));
        acc += state.relative_profile(u) * (wk * f);
    }
    acc * 2.0
}

/// Same envelope as [`envelope_amplitude`], computed as the momentum-space
/// convolution of the slit-square transform with the relative-momentum
/// Gaussian. Slower; kept as an independent cross-check.
pub fn envelope_amplitude_convolution(
    state: &SlitPairState,
    p1: f64,
    p2: f64,
    hbar: f64,
    points: usize,
) -> Complex64 {
    let a = state.grating.a;
    let (s, r) = (p1 + p2, p1 - p2);
    if state.is_uncorrelated_pair() {
        return Complex64::new(
            a * a * sinc(p1 * a / (2.0 * hbar)) * sinc(p2 * a / (2.0 * hbar)),
            0.0,
        );
    }
    let sigma = state.sigma_rel_eff;
    let xi = state.xi_rel;
    let half = 16.0 * hbar / sigma;
    let grid = GridSpec::new(r - half, r + half, points.max(3)).unwrap().simpson();
    let w = grid.simpson_weights();
    let k = xi.sqrt() * (a * a * sigma / (2.0 * std::f64::consts::PI.sqrt() * hbar));
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, wi) in w.iter().enumerate() {
        let pt = grid.point(i);
        let box_ft = sinc((s + pt) * a / (4.0 * hbar)) * sinc((s - pt) * a / (4.0 * hbar));
        let z = (r - pt) * sigma / (2.0 * hbar);
        acc += (-xi * (z * z)).exp() * (wi * box_ft);
    }
    acc * k
}

/// Full momentum amplitude: slit-pair phase sum times envelope.
pub fn momentum_amplitude(state: &SlitPairState, p1: f64, p2: f64, hbar: f64) -> Complex64 {
    phase_sum(state, p1, p2, hbar) * envelope_amplitude(state, p1, p2, hbar)
}

/// Normalization of `|momentum_amplitude|²` into a probability density:
/// `(2πħ)² ‖Ψ_s‖²`.
pub fn momentum_normalization(state: &SlitPairState, hbar: f64) -> f64 {
    let two_pi_hbar = std::f64::consts::TAU * hbar;
    two_pi_hbar * two_pi_hbar * state.pair_norm_sqr()
}

/// Normalized joint momentum density.
pub fn momentum_density(state: &SlitPairState, p1: f64, p2: f64, hbar: f64) -> f64 {
    momentum_amplitude(state, p1, p2, hbar).norm_sqr() / momentum_normalization(state, hbar)
}

/// Normalized joint position density directly behind the gratings.
pub fn position_density(state: &SlitPairState, x1: f64, x2: f64) -> f64 {
    let g = &state.grating;
    let n = g.n_slits;
    let locate = |x: f64| -> Option<(usize, f64)> {
        let k = (x / g.d + (n as f64 - 1.0) / 2.0).round();
        if k < 0.0 || k >= n as f64 {
            return None;
        }
        let k = k as usize;
        let local = x - g.slit_center(k);
        (local.abs() <= g.a / 2.0 * (1.0 + 1e-12)).then_some((k, local))
    };
    match (locate(x1), locate(x2)) {
        (Some((k1, l1)), Some((k2, l2))) => {
            state.coeff(k1, k2).norm_sqr() * state.relative_profile_sqr(l1 - l2)
                / state.pair_norm_sqr()
        }
        _ => 0.0,
    }
}

/// Momentum that ends up at screen position `x` after a flight time `t2`.
#[inline]
pub fn far_field_map(x: f64, mass: f64, t2: f64) -> f64 {
    mass * x / t2
}

/// Screen position for momentum `p`.
#[inline]
pub fn far_field_position(p: f64, mass: f64, t2: f64) -> f64 {
    p * t2 / mass
}

/// Dispersion-dominated regime: `t2 ≥ 10 m N² d²/ħ`.
pub fn far_field_valid(g: &GratingSpec, mass: f64, t2: f64, hbar: f64) -> bool {
    let n = g.n_slits as f64;
    t2 >= 10.0 * mass * n * n * g.d * g.d / hbar
}
