//! Momentum-space tabulation on grids commensurate with the modular cell.
//!
//! The momentum plane is covered by `(2K+1)²` cells of side `h/d`, each
//! split into `G × G` pixels. Pixel `i` on an axis has centre
//! `-(K + 1/2) h/d + (i + 1/2) h/(dG)`; its cell-local index is `i mod G`.
//!
//! The joint density factorizes into the slit-square envelope `|E|²` and
//! the cell-periodic slit-pair pattern `|Σ c e^{...}|²`, so the tables keep
//! the two apart.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modular::ModularFrame;
use crate::specfun::{sinc, GridSpec};
use crate::states::{momentum_normalization, quadrature_nodes, SlitPairState};

/// Resolution and extent of a momentum tabulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MomentumGrid {
    /// Pixels per cell and axis. Even.
    pub grid_per_cell: usize,
    /// Cells per axis. Rounded up to an odd count so the grid is symmetric.
    pub n_cells: usize,
    /// Minimum fraction of the envelope mass the grid must enclose.
    pub min_coverage: f64,
}

impl Default for MomentumGrid {
    fn default() -> Self {
        Self {
            grid_per_cell: 64,
            n_cells: 25,
            min_coverage: 0.8,
        }
    }
}

impl MomentumGrid {
    pub fn check(&self) -> Result<()> {
        if self.grid_per_cell < 2 || self.grid_per_cell % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "grid_per_cell must be even and >= 2 (got {})",
                self.grid_per_cell
            )));
        }
        if self.n_cells == 0 {
            return Err(Error::InvalidParameter("n_cells must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.min_coverage) {
            return Err(Error::InvalidParameter(format!(
                "min_coverage must lie in [0, 1] (got {})",
                self.min_coverage
            )));
        }
        Ok(())
    }

    /// `K`, with cells `-K..=K` per axis.
    #[inline]
    pub fn half_cells(&self) -> usize {
        self.n_cells / 2
    }

    #[inline]
    pub fn cells(&self) -> usize {
        2 * self.half_cells() + 1
    }

    /// Pixels per axis over the whole grid.
    #[inline]
    pub fn axis_len(&self) -> usize {
        self.cells() * self.grid_per_cell
    }

    /// Centre of full-grid pixel `i` for momentum period `period`.
    #[inline]
    pub fn pixel_center(&self, i: usize, period: f64) -> f64 {
        let step = period / self.grid_per_cell as f64;
        -(self.half_cells() as f64 + 0.5) * period + (i as f64 + 0.5) * step
    }

    /// Centre of cell-local pixel `i` in `[-period/2, period/2)`.
    #[inline]
    pub fn cell_pixel_center(&self, i: usize, period: f64) -> f64 {
        let step = period / self.grid_per_cell as f64;
        -0.5 * period + (i as f64 + 0.5) * step
    }

    /// Cell index `-K..=K` of full-grid pixel `i`.
    #[inline]
    pub fn cell_of(&self, i: usize) -> i64 {
        (i / self.grid_per_cell) as i64 - self.half_cells() as i64
    }
}

/// Checks that the frame and state share the slit period.
pub(crate) fn check_frame(state: &SlitPairState, frame: &ModularFrame<f64>) -> Result<()> {
    let d = state.grating.d;
    if (frame.d - d).abs() > 1e-12 * d {
        return Err(Error::InvalidParameter(format!(
            "frame period d = {} differs from the grating period {d}",
            frame.d
        )));
    }
    Ok(())
}

/// Normalized envelope density `|E(p₁,p₂)|²/((2πħ)²‖Ψ_s‖²)` on a full
/// momentum grid, plus its fold onto one cell.
#[derive(Debug, Clone)]
pub struct EnvelopeTable {
    pub grid: MomentumGrid,
    pub period: f64,
    /// Row-major, `axis_len²`, first index along `p₁`.
    pub intensity: Vec<f64>,
    /// `Σ_cells intensity`, row-major `G × G`.
    pub folded: Vec<f64>,
    /// Envelope mass on the grid; the full-plane mass is 1.
    pub enclosed: f64,
}

impl EnvelopeTable {
    /// Tabulates the envelope. Does not enforce `grid.min_coverage`; see
    /// [`EnvelopeTable::require_coverage`].
    pub fn new(state: &SlitPairState, frame: &ModularFrame<f64>, grid: MomentumGrid) -> Result<Self> {
        grid.check()?;
        check_frame(state, frame)?;
        let hbar = frame.hbar();
        let period = frame.momentum_period();
        let m = grid.axis_len();
        let norm = momentum_normalization(state, hbar);
        let p: Vec<f64> = (0..m).map(|i| grid.pixel_center(i, period)).collect();

        let intensity: Vec<f64> = if state.is_uncorrelated_pair() {
            let a = state.grating.a;
            let f: Vec<f64> = p.iter().map(|&x| a * sinc(x * a / (2.0 * hbar))).collect();
            let mut out = vec![0.0; m * m];
            out.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
                for (j, v) in row.iter_mut().enumerate() {
                    let e = f[i] * f[j];
                    *v = e * e / norm;
                }
            });
            out
        } else {
            envelope_lattice(state, &p, hbar, norm)
        };

        let g = grid.grid_per_cell;
        let mut folded = vec![0.0; g * g];
        for i in 0..m {
            let row = &intensity[i * m..(i + 1) * m];
            let fr = &mut folded[(i % g) * g..(i % g + 1) * g];
            for (j, v) in row.iter().enumerate() {
                fr[j % g] += v;
            }
        }
        let step = period / g as f64;
        let enclosed = folded.iter().sum::<f64>() * step * step;
        Ok(Self {
            grid,
            period,
            intensity,
            folded,
            enclosed,
        })
    }

    pub fn require_coverage(&self) -> Result<()> {
        if self.enclosed < self.grid.min_coverage {
            return Err(Error::InsufficientCoverage {
                enclosed: self.enclosed,
                required: self.grid.min_coverage,
            });
        }
        Ok(())
    }

    #[inline]
    pub fn pixel_area(&self) -> f64 {
        let step = self.period / self.grid.grid_per_cell as f64;
        step * step
    }

    /// Mass of `envelope × pattern` on the grid, `pattern` on the cell.
    pub fn enclosed_with(&self, pattern: &[f64]) -> f64 {
        self.folded.iter().zip(pattern).map(|(w, p)| w * p).sum::<f64>() * self.pixel_area()
    }
}

/// Envelope on the lattice `p_i`, evaluated through the relative-coordinate
/// integral with shared tables: on a uniform lattice `p_i + p_j` and
/// `p_i - p_j` only take `2M - 1` values each.
fn envelope_lattice(state: &SlitPairState, p: &[f64], hbar: f64, norm: f64) -> Vec<f64> {
    let m = p.len();
    let a = state.grating.a;
    let step = p[1] - p[0];
    let p_max = p[0].abs().max(p[m - 1].abs());
    let q = quadrature_nodes(state, 2.0 * p_max, 0.0, hbar);
    let nodes = GridSpec::new(0.0, a, q).unwrap();
    let w = nodes.simpson_weights();
    let u: Vec<f64> = nodes.points().collect();

    // rel[(i - j + m - 1) * q + k] = 2 w_k g(u_k) (a - u_k) cos(r u_k / 2ħ)
    let mut rel = vec![Complex64::new(0.0, 0.0); (2 * m - 1) * q];
    rel.par_chunks_mut(q).enumerate().for_each(|(idx, row)| {
        let r = (idx as f64 - (m as f64 - 1.0)) * step;
        for k in 0..q {
            let f = 2.0 * w[k] * (a - u[k]) * (r * u[k] / (2.0 * hbar)).cos();
            row[k] = state.relative_profile(u[k]) * f;
        }
    });
    // sum[(i + j) * q + k] = sinc(s (a - u_k) / 2ħ)
    let mut sum = vec![0.0; (2 * m - 1) * q];
    sum.par_chunks_mut(q).enumerate().for_each(|(idx, row)| {
        let s = 2.0 * p[0] + idx as f64 * step;
        for k in 0..q {
            row[k] = sinc(s * (a - u[k]) / (2.0 * hbar));
        }
    });

    let mut out = vec![0.0; m * m];
    out.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            let cr = &rel[(i + m - 1 - j) * q..(i + m - j) * q];
            let ss = &sum[(i + j) * q..(i + j + 1) * q];
            let mut re = 0.0;
            let mut im = 0.0;
            for k in 0..q {
                re += cr[k].re * ss[k];
                im += cr[k].im * ss[k];
            }
            *v = (re * re + im * im) / norm;
        }
    });
    out
}

/// Slit-pair pattern `|Σ c_{nn'} e^{-i(p₁n + p₂n')d/ħ}|²` on the cell
/// pixels, with the fringe shifted by `phase` (`F_N(ξ + φ/2π)` for the
/// ideal state). Row-major `G × G`; mean over the cell is 1.
pub fn pair_pattern(
    state: &SlitPairState,
    frame: &ModularFrame<f64>,
    grid_per_cell: usize,
    phase: f64,
) -> Result<Vec<f64>> {
    check_frame(state, frame)?;
    let g = grid_per_cell;
    let n = state.n_slits();
    let hbar = frame.hbar();
    let period = frame.momentum_period();
    let shift = phase * hbar / (2.0 * state.grating.d);
    let step = period / g as f64;
    // phases[i * n + k] = exp(-i (p_i + shift) x_k / ħ)
    let phases: Vec<Complex64> = (0..g)
        .flat_map(|i| {
            let p = -0.5 * period + (i as f64 + 0.5) * step + shift;
            (0..n).map(move |k| (p, k))
        })
        .map(|(p, k)| Complex64::from_polar(1.0, -p * state.grating.slit_center(k) / hbar))
        .collect();
    // row[i * n + k'] = Σ_k e_i(k) c_{kk'}
    let mut left = vec![Complex64::new(0.0, 0.0); g * n];
    for i in 0..g {
        for k1 in 0..n {
            let e = phases[i * n + k1];
            for k2 in 0..n {
                left[i * n + k2] += e * state.coeff(k1, k2);
            }
        }
    }
    let mut out = vec![0.0; g * g];
    out.par_chunks_mut(g).enumerate().for_each(|(i, row)| {
        let l = &left[i * n..(i + 1) * n];
        for (j, v) in row.iter_mut().enumerate() {
            let r = &phases[j * n..(j + 1) * n];
            let z: Complex64 = l.iter().zip(r).map(|(x, y)| x * y).sum();
            *v = z.norm_sqr();
        }
    });
    Ok(out)
}

/// Variance and mean of `p̄₁ + p̄₂` under the cell density
/// `folded × pattern`, read as constant within each pixel.
pub(crate) fn cell_moments(
    folded: &[f64],
    pattern: &[f64],
    grid_per_cell: usize,
    period: f64,
) -> (f64, f64) {
    let g = grid_per_cell;
    let step = period / g as f64;
    let centre = |i: usize| -0.5 * period + (i as f64 + 0.5) * step;
    let mut mass = 0.0;
    let mut m1 = 0.0;
    for i in 0..g {
        for j in 0..g {
            let w = folded[i * g + j] * pattern[i * g + j];
            mass += w;
            m1 += w * (centre(i) + centre(j));
        }
    }
    let mean = m1 / mass;
    let mut m2 = 0.0;
    for i in 0..g {
        for j in 0..g {
            let w = folded[i * g + j] * pattern[i * g + j];
            let x = centre(i) + centre(j) - mean;
            m2 += w * x * x;
        }
    }
    // each axis adds the variance of a uniform pixel, step²/12
    ((m2 / mass).max(0.0) + step * step / 6.0, mean)
}
