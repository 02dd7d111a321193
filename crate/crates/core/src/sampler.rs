//! Reproducible coincidence events behind the gratings (near field) and at
//! the far-field screens.
//!
//! Every event draws from its own ChaCha substream keyed by the batch seed,
//! a stream kind and the event index, so a batch does not depend on how the
//! work is split across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modular::{decompose, fringe_function, ModularFrame};
use crate::states::{
    build_mme_state, dispersion_factors, far_field_position, Displacement, EprSource,
    GratingSpec, SlitPairState, SourceEnsemble,
};
use crate::tabulate::{pair_pattern, EnvelopeTable, MomentumGrid};

/// Pixels per axis of the intra-slit position table.
pub const NEAR_GRID: usize = 256;
/// Displacement draws allowed per ensemble event before giving up.
pub const MAX_ENSEMBLE_ATTEMPTS: usize = 256;
/// Rejection rate above which an ensemble counts as degenerate.
pub const MAX_REJECTION_RATE: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    Near,
    Far,
}

impl Plane {
    pub fn as_str(self) -> &'static str {
        match self {
            Plane::Near => "near",
            Plane::Far => "far",
        }
    }
}

/// One coincidence detection: positions `(x₁, x₂)` in the near plane,
/// momenta `(p₁, p₂)` or screen positions in the far plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub plane: Plane,
    pub u1: f64,
    pub u2: f64,
    pub weight: f64,
}

impl EventRecord {
    pub fn new(plane: Plane, u1: f64, u2: f64) -> Self {
        Self {
            plane,
            u1,
            u2,
            weight: 1.0,
        }
    }
}

/// Screen geometry for far-field events recorded as positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FarFieldGeometry {
    pub mass: f64,
    pub t2: f64,
}

/// What the far-plane coordinates of a batch mean.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum Coordinates {
    /// Positions in the near plane, momenta in the far plane.
    #[default]
    Native,
    /// Far-plane screen positions `x = p t₂/m`.
    Screen(Option<FarFieldGeometry>),
}

/// Events plus how to read them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventBatch {
    pub events: Vec<EventRecord>,
    pub coordinates: Coordinates,
}

impl EventBatch {
    pub fn native(events: Vec<EventRecord>) -> Self {
        Self {
            events,
            coordinates: Coordinates::Native,
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub seed: u64,
    pub n_events: usize,
    /// Weight of the classical (fringe-free) admixture.
    pub admixture_w: f64,
    /// Fringe shift `φ`: the ideal pattern becomes `F_N(ξ + φ/2π)`.
    pub phase_shift: f64,
    pub ensemble: Option<SourceEnsemble>,
    /// Record far-plane events as screen positions after this flight time.
    pub far_t2: Option<f64>,
    /// Particle mass used for screen positions.
    pub mass: f64,
    pub grid: MomentumGrid,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_events: 100_000,
            admixture_w: 0.0,
            phase_shift: 0.0,
            ensemble: None,
            far_t2: None,
            mass: 1.0,
            grid: MomentumGrid::default(),
        }
    }
}

impl SamplerConfig {
    pub fn check(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.admixture_w) {
            return Err(Error::InvalidParameter(format!(
                "admixture weight {} outside [0, 1]",
                self.admixture_w
            )));
        }
        if !self.phase_shift.is_finite() {
            return Err(Error::InvalidParameter("phase shift must be finite".into()));
        }
        if let Some(t2) = self.far_t2 {
            if !(t2 > 0.0 && t2.is_finite()) {
                return Err(Error::InvalidParameter(format!("far_t2 must be positive (got {t2})")));
            }
        }
        if !(self.mass > 0.0) {
            return Err(Error::InvalidParameter(format!("mass must be positive (got {})", self.mass)));
        }
        if let Some(e) = &self.ensemble {
            e.check()?;
        }
        self.grid.check()
    }

    fn coordinates(&self) -> Coordinates {
        match self.far_t2 {
            Some(t2) => Coordinates::Screen(Some(FarFieldGeometry { mass: self.mass, t2 })),
            None => Coordinates::Native,
        }
    }
}

/// Independent random streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamKind {
    Near = 1,
    Far = 2,
    Ensemble = 3,
    Bootstrap = 4,
}

/// Generator for item `index` of stream `kind` under `seed`.
pub fn substream(seed: u64, kind: StreamKind, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(kind as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Cumulative table for inverse-CDF draws.
#[derive(Debug, Clone)]
struct Cdf {
    cum: Vec<f64>,
}

impl Cdf {
    fn new(weights: impl IntoIterator<Item = f64>) -> Self {
        let mut acc = 0.0;
        let cum = weights
            .into_iter()
            .map(|w| {
                acc += w.max(0.0);
                acc
            })
            .collect();
        Self { cum }
    }

    fn total(&self) -> f64 {
        self.cum.last().copied().unwrap_or(0.0)
    }

    /// Index with `cum[i-1] <= u·total < cum[i]`, skipping empty bins.
    fn pick(&self, u: f64) -> usize {
        let target = u * self.total();
        let i = self.cum.partition_point(|&c| c <= target);
        i.min(self.cum.len() - 1)
    }
}

/// Inverse-CDF table for `|Ψ_s|²` on the slit square.
struct NearTable {
    a: f64,
    marginal: Cdf,
    conditional: Vec<Cdf>,
}

impl NearTable {
    fn new(state: &SlitPairState) -> Self {
        let a = state.grating.a;
        let n = NEAR_GRID;
        let step = a / n as f64;
        let centre = |i: usize| -0.5 * a + (i as f64 + 0.5) * step;
        let conditional: Vec<Cdf> = (0..n)
            .map(|i| Cdf::new((0..n).map(|j| state.relative_profile_sqr(centre(i) - centre(j)))))
            .collect();
        let marginal = Cdf::new(conditional.iter().map(Cdf::total));
        Self {
            a,
            marginal,
            conditional,
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let step = self.a / NEAR_GRID as f64;
        let i = self.marginal.pick(rng.gen());
        let j = self.conditional[i].pick(rng.gen());
        let x1 = -0.5 * self.a + (i as f64 + rng.gen::<f64>()) * step;
        let x2 = -0.5 * self.a + (j as f64 + rng.gen::<f64>()) * step;
        (x1, x2)
    }
}

/// Events directly behind the gratings: a slit pair from `|c|²`, then
/// positions within the pair from `|Ψ_s|²`.
///
/// The classical admixture has the same slit-pair statistics, so
/// `admixture_w` does not change this plane.
pub fn sample_near(state: &SlitPairState, cfg: &SamplerConfig) -> Result<EventBatch> {
    cfg.check()?;
    let g = state.grating;
    let n = g.n_slits;
    let pairs = Cdf::new(state.pair_probabilities());
    let table = NearTable::new(state);
    let events = (0..cfg.n_events as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = substream(cfg.seed, StreamKind::Near, j);
            let k = pairs.pick(rng.gen());
            let (k1, k2) = (k / n, k % n);
            let (l1, l2) = table.draw(&mut rng);
            EventRecord::new(Plane::Near, g.slit_center(k1) + l1, g.slit_center(k2) + l2)
        })
        .collect();
    Ok(EventBatch::native(events))
}

/// Far-plane tables shared by the plain and ensemble samplers.
///
/// A far event is drawn in two steps: a pixel of the modular cell from the
/// cell pattern, then the cell holding it from the envelope restricted to
/// that pixel. Because the slits are narrower than their period, the
/// envelope summed over all cells is flat, so the cell pattern alone fixes
/// the modular statistics exactly; the finite grid only limits which cells
/// can be reached.
struct FarTables {
    grid: MomentumGrid,
    period: f64,
    /// Per cell pixel, CDF over the cells, row-major `(kx, ky)`.
    cells: Vec<Cdf>,
}

impl FarTables {
    fn new(table: &EnvelopeTable) -> Self {
        let grid = table.grid;
        let g = grid.grid_per_cell;
        let c = grid.cells();
        let m = grid.axis_len();
        let cells = (0..g * g)
            .into_par_iter()
            .map(|pix| {
                let (ci, cj) = (pix / g, pix % g);
                Cdf::new((0..c * c).map(|k| {
                    let (kx, ky) = (k / c, k % c);
                    table.intensity[(kx * g + ci) * m + ky * g + cj]
                }))
            })
            .collect();
        Self {
            grid,
            period: table.period,
            cells,
        }
    }

    /// Momenta for cell pixel `(ci, cj)` with a random cell and jitter.
    fn place(&self, ci: usize, cj: usize, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let g = self.grid.grid_per_cell;
        let c = self.grid.cells();
        let k = self.cells[ci * g + cj].pick(rng.gen());
        let (kx, ky) = (k / c, k % c);
        let step = self.period / g as f64;
        let p1 = self.grid.pixel_center(kx * g + ci, self.period) + (rng.gen::<f64>() - 0.5) * step;
        let p2 = self.grid.pixel_center(ky * g + cj, self.period) + (rng.gen::<f64>() - 0.5) * step;
        (p1, p2)
    }
}

fn far_record(cfg: &SamplerConfig, p1: f64, p2: f64) -> EventRecord {
    match cfg.far_t2 {
        Some(t2) => EventRecord::new(
            Plane::Far,
            far_field_position(p1, cfg.mass, t2),
            far_field_position(p2, cfg.mass, t2),
        ),
        None => EventRecord::new(Plane::Far, p1, p2),
    }
}

/// Far-plane events for `state`, mixed with a fringe-free classical
/// component of weight `admixture_w` and shifted by `phase_shift`.
pub fn sample_far(
    state: &SlitPairState,
    cfg: &SamplerConfig,
    frame: &ModularFrame<f64>,
) -> Result<EventBatch> {
    cfg.check()?;
    let table = EnvelopeTable::new(state, frame, cfg.grid)?;
    table.require_coverage()?;
    let tables = FarTables::new(&table);
    let g = cfg.grid.grid_per_cell;
    let coherent = Cdf::new(pair_pattern(state, frame, g, cfg.phase_shift)?);
    let w = cfg.admixture_w;
    let events = (0..cfg.n_events as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = substream(cfg.seed, StreamKind::Far, j);
            let classical = rng.gen::<f64>() < w;
            let u: f64 = rng.gen();
            let pix = if classical {
                ((u * (g * g) as f64) as usize).min(g * g - 1)
            } else {
                coherent.pick(u)
            };
            let (p1, p2) = tables.place(pix / g, pix % g, &mut rng);
            far_record(cfg, p1, p2)
        })
        .collect();
    Ok(EventBatch {
        events,
        coordinates: cfg.coordinates(),
    })
}

/// Far-plane events for a source whose phase-space centre fluctuates.
#[derive(Debug, Clone)]
pub struct EnsembleBatch {
    pub batch: EventBatch,
    pub attempts: u64,
    /// Displacements drawn and discarded because the pair would be blocked
    /// or would miss the grating.
    pub rejected: u64,
}

impl EnsembleBatch {
    pub fn rejection_rate(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.rejected as f64 / self.attempts as f64
        }
    }
}

/// Far-plane events averaged over Gaussian source displacements around
/// `center`.
///
/// For each event a displacement is drawn; pairs blocked by the grating
/// (`|x̄_rel(T)| ≥ a/2`) or missing it are redrawn and counted. The fringe
/// pattern of an accepted draw has order `N' = N - |N_rel(T)|` and is
/// shifted by the phase `p_cm d/(h |ξ_cm|²)`, in radians. Centre-of-mass
/// position kicks move only the envelope and are not drawn. A delta ensemble
/// at the origin reproduces [`sample_far`] on the ideal state exactly.
pub fn sample_ensemble(
    src: &EprSource,
    g: &GratingSpec,
    ens: &SourceEnsemble,
    center: &Displacement,
    cfg: &SamplerConfig,
    frame: &ModularFrame<f64>,
) -> Result<EnsembleBatch> {
    cfg.check()?;
    ens.check()?;
    let state = build_mme_state(g, src, frame.hbar())?;
    if ens.is_delta() && center.is_zero() {
        return Ok(EnsembleBatch {
            batch: sample_far(&state, cfg, frame)?,
            attempts: cfg.n_events as u64,
            rejected: 0,
        });
    }
    let table = EnvelopeTable::new(&state, frame, cfg.grid)?;
    table.require_coverage()?;
    let tables = FarTables::new(&table);
    let gpc = cfg.grid.grid_per_cell;
    let (xi_cm, _) = dispersion_factors(src, src.t_grating, frame.hbar());
    let phase_scale = frame.d / (frame.h * xi_cm.norm_sqr());
    let t = src.t_grating;
    let w = cfg.admixture_w;

    let draws: Vec<Result<(EventRecord, u64)>> = (0..cfg.n_events as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = substream(cfg.seed, StreamKind::Ensemble, j);
            let mut normal = || rng.sample::<f64, _>(StandardNormal);
            let mut rejected = 0u64;
            let (order, theta) = loop {
                if rejected as usize >= MAX_ENSEMBLE_ATTEMPTS {
                    return Err(Error::DegenerateEnsemble { rate: 1.0 });
                }
                let x_rel = center.x_rel0 + ens.s0_x_rel * normal();
                let p_cm = center.p_cm0 + ens.s0_p_cm * normal();
                let p_rel = center.p_rel0 + ens.s0_p_rel * normal();
                let x_rel_t = x_rel + 2.0 * p_rel * t / src.mass;
                let dec = decompose(x_rel_t, g.d);
                let shift = dec.integer_part.unsigned_abs() as usize;
                if dec.modular_part.abs() < g.a / 2.0 && shift < g.n_slits {
                    break (g.n_slits - shift, p_cm * phase_scale);
                }
                rejected += 1;
            };
            let classical = rng.gen::<f64>() < w;
            let (ci, cj) = if classical {
                let pix = ((rng.gen::<f64>() * (gpc * gpc) as f64) as usize).min(gpc * gpc - 1);
                (pix / gpc, pix % gpc)
            } else {
                // the ideal pattern depends on ci + cj only
                let offset = (cfg.phase_shift - theta) / std::f64::consts::TAU;
                let sums = Cdf::new((0..2 * gpc - 1).map(|s| {
                    let count = (s + 1).min(2 * gpc - 1 - s) as f64;
                    let xi = (s + 1) as f64 / gpc as f64 - 1.0;
                    count * fringe_function(order, xi + offset)
                }));
                let s = sums.pick(rng.gen());
                let lo = s.saturating_sub(gpc - 1);
                let hi = s.min(gpc - 1);
                let ci = lo + ((rng.gen::<f64>() * (hi - lo + 1) as f64) as usize).min(hi - lo);
                (ci, s - ci)
            };
            let (p1, p2) = tables.place(ci, cj, &mut rng);
            Ok((far_record(cfg, p1, p2), rejected))
        })
        .collect();

    let mut events = Vec::with_capacity(draws.len());
    let mut rejected = 0u64;
    for d in draws {
        let (e, r) = d?;
        events.push(e);
        rejected += r;
    }
    let attempts = events.len() as u64 + rejected;
    let out = EnsembleBatch {
        batch: EventBatch {
            events,
            coordinates: cfg.coordinates(),
        },
        attempts,
        rejected,
    };
    if out.rejection_rate() > MAX_REJECTION_RATE {
        return Err(Error::DegenerateEnsemble {
            rate: out.rejection_rate(),
        });
    }
    Ok(out)
}
