//! Modular variables, the N-slit fringe function, the squeezing functions
//! `S₂` and the modular entanglement criterion.
//!
//! A position splits as `x = N_x d + x̄` and a momentum as
//! `p = N_p (h/d) + p̄`, with the modular parts confined to the half-open
//! cells `[-d/2, d/2)` and `[-h/2d, h/2d)`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::specfun::{find_smallest_root, kummer_m, kummer_m_dx, ROOT_SCAN_STEPS, ROOT_TOL};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_9;

/// Slit period `d` and Planck's constant `h` of the active unit system.
///
/// `x_origin` is the position of one slit centre. Positions are decomposed
/// relative to it so that every slit sits in the middle of a modular cell;
/// gratings with an even slit count have their slits at half-integer
/// multiples of `d` and need `x_origin = d/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModularFrame<T> {
    pub d: T,
    pub h: T,
    #[serde(default)]
    pub x_origin: T,
}

impl<T: Real> ModularFrame<T> {
    pub fn new(d: T, h: T) -> Result<Self> {
        if !(d > T::zero() && h > T::zero() && d.is_finite() && h.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "modular frame needs d > 0 and h > 0 (d={d}, h={h})"
            )));
        }
        Ok(Self {
            d,
            h,
            x_origin: T::zero(),
        })
    }

    /// Natural units: `ħ = 1`, `d = 1`.
    pub fn natural() -> Self {
        Self {
            d: T::one(),
            h: T::TAU(),
            x_origin: T::zero(),
        }
    }

    pub fn with_position_origin(mut self, x_origin: T) -> Self {
        self.x_origin = x_origin;
        self
    }

    #[inline]
    pub fn hbar(&self) -> T {
        self.h / T::TAU()
    }

    /// Grating momentum `h/d`, the period of the momentum cell.
    #[inline]
    pub fn momentum_period(&self) -> T {
        self.h / self.d
    }
}

/// Integer and modular part of a position or momentum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModularDecomposition<T> {
    pub integer_part: i64,
    pub modular_part: T,
}

impl<T: Real> ModularDecomposition<T> {
    /// `integer_part * period + modular_part`.
    pub fn recompose(&self, period: T) -> T {
        T::from_i64(self.integer_part).unwrap() * period + self.modular_part
    }
}

/// Splits `value` over cells of width `period` centred on multiples of it.
pub fn decompose<T: Real>(value: T, period: T) -> ModularDecomposition<T> {
    let half = period / T::lit(2.0);
    let mut shifted = (value + half) % period;
    if shifted < T::zero() {
        shifted = shifted + period;
    }
    // (tiny negative) + period can round up to period itself
    if shifted >= period {
        shifted = shifted - period;
    }
    let modular_part = shifted - half;
    let integer_part = ((value - modular_part) / period).round().to_i64().unwrap_or(i64::MAX);
    ModularDecomposition {
        integer_part,
        modular_part,
    }
}

/// `x̄(x) = (x + d/2) mod d - d/2` and `N_x = (x - x̄)/d`, measured from
/// the frame's slit origin.
pub fn decompose_position<T: Real>(x: T, frame: &ModularFrame<T>) -> ModularDecomposition<T> {
    decompose(x - frame.x_origin, frame.d)
}

/// `p̄(p) = (p + h/2d) mod (h/d) - h/2d` and `N_p = (p - p̄) d/h`.
pub fn decompose_momentum<T: Real>(p: T, frame: &ModularFrame<T>) -> ModularDecomposition<T> {
    decompose(p, frame.momentum_period())
}

/// Modular part of a momentum only.
#[inline]
pub fn modular_momentum<T: Real>(p: T, frame: &ModularFrame<T>) -> T {
    decompose_momentum(p, frame).modular_part
}

/// N-slit fringe function `F_N(ξ) = 1 + (2/N) Σ_{j=1}^{N-1} (N-j) cos(2πjξ)`.
///
/// A Fejér kernel: non-negative, period 1, unit mean, `F_N(0) = N`.
pub fn fringe_function<T: Real>(n: usize, xi: T) -> T {
    if n <= 1 {
        return T::one();
    }
    let nf = T::from_usize(n).unwrap();
    let mut acc = T::zero();
    for j in 1..n {
        let jf = T::from_usize(j).unwrap();
        acc = acc + (nf - jf) * (T::TAU() * jf * xi).cos();
    }
    T::one() + T::lit(2.0) / nf * acc
}

/// `S₂(N, φ) = (6/π²) Σ_{j=1}^{N-1} (N-j)/(N j²) cos(jφ)`.
pub fn squeezing_s2_shifted<T: Real>(n: usize, phi: T) -> T {
    if n <= 1 {
        return T::zero();
    }
    let nf = T::from_usize(n).unwrap();
    let mut acc = T::zero();
    for j in 1..n {
        let jf = T::from_usize(j).unwrap();
        acc = acc + (nf - jf) / (nf * jf * jf) * (jf * phi).cos();
    }
    T::lit(6.0) / (T::PI() * T::PI()) * acc
}

/// `S₂(N) = S₂(N, 0)`: the fractional reduction of the total modular
/// momentum variance below its uniform value `h²/6d²`.
pub fn squeezing_s2<T: Real>(n: usize) -> T {
    squeezing_s2_shifted(n, T::zero())
}

/// Large-N form `1 - 6(1 + γ + ln N)/(π² N)`.
pub fn squeezing_s2_asymptotic<T: Real>(n: usize) -> T {
    let nf = T::from_usize(n.max(1)).unwrap();
    T::one()
        - T::lit(6.0) * (T::one() + T::lit(EULER_GAMMA) + nf.ln()) / (T::PI() * T::PI() * nf)
}

/// Derivative at `x = 1/2` of `e^{-πx²} M(1/4 - πμ/2, 1/2, 2πx²)`.
///
/// Its smallest positive root is the criterion constant `C`.
pub fn criterion_residual<T: Real>(mu: T) -> Result<T> {
    let pi = T::PI();
    let half = T::lit(0.5);
    let a = T::lit(0.25) - pi * mu / T::lit(2.0);
    let z = pi / T::lit(2.0); // 2πx² at x = 1/2
    let damp = (-pi / T::lit(4.0)).exp();
    let m = kummer_m(a, half, z)?;
    let dm = kummer_m_dx(a, half, z)?;
    // chain rule: d/dx e^{-πx²} = -2πx e^{-πx²}, d/dx M(.., 2πx²) = 4πx M'
    Ok(-T::TAU() * half * damp * m + damp * dm * (T::lit(4.0) * pi * half))
}

/// Solves for the criterion constant from scratch in the scalar type `T`.
pub fn compute_criterion_constant<T: Real>() -> Result<T> {
    let mut failure = None;
    let root = find_smallest_root(
        |mu: T| match criterion_residual(mu) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                T::nan()
            }
        },
        T::zero(),
        T::lit(0.5),
        ROOT_SCAN_STEPS,
        T::lit(ROOT_TOL).max(T::epsilon() * T::lit(4.0)),
    );
    if let Some(e) = failure {
        return Err(e);
    }
    root
}

static CRITERION_CONSTANT: OnceLock<f64> = OnceLock::new();

/// The constant `C ≈ 0.078235` of the modular entanglement criterion.
///
/// Computed once (in `f64`) on first use and cached.
///
/// # Panics
/// If the root search fails, which means the Kummer evaluation regressed.
pub fn criterion_constant<T: Real>() -> T {
    let c = *CRITERION_CONSTANT.get_or_init(|| {
        compute_criterion_constant::<f64>().expect("criterion constant root bracket in (0, 0.5]")
    });
    T::lit(c)
}

/// Entanglement threshold `2C`.
pub fn criterion_threshold<T: Real>() -> T {
    T::lit(2.0) * criterion_constant::<T>()
}

/// Outcome of the criterion `(d²/h²) Var(p̄_tot) + Var(N_x,rel) < 2C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport<T> {
    pub lhs: T,
    pub threshold: T,
    pub entangled: bool,
    pub lhs_stderr: T,
}

impl<T: Real> CriterionReport<T> {
    /// `(threshold - lhs) / threshold`; positive when entanglement is certified.
    pub fn margin(&self) -> T {
        (self.threshold - self.lhs) / self.threshold
    }
}

pub fn evaluate_criterion<T: Real>(
    var_ptot: T,
    var_nrel: T,
    frame: &ModularFrame<T>,
    stderr_lhs: T,
) -> CriterionReport<T> {
    let scale = frame.d / frame.h;
    let lhs = scale * scale * var_ptot + var_nrel;
    let threshold = criterion_threshold::<T>();
    CriterionReport {
        lhs,
        threshold,
        entangled: lhs < threshold,
        lhs_stderr: stderr_lhs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::{integrate_1d, GridSpec};
    use std::f64::consts::{PI, TAU};

    fn unit() -> ModularFrame<f64> {
        ModularFrame::new(1.0, TAU).unwrap()
    }

    #[test]
    fn frame_validation() {
        assert!(ModularFrame::new(0.0, 1.0).is_err());
        assert!(ModularFrame::new(1.0, -1.0).is_err());
        let f = ModularFrame::<f64>::natural();
        assert!((f.hbar() - 1.0).abs() < 1e-15);
        assert!((f.momentum_period() - TAU).abs() < 1e-15);
    }

    #[test]
    fn position_examples() {
        let f = unit();
        let r = decompose_position(1.37, &f);
        assert_eq!(r.integer_part, 1);
        assert!((r.modular_part - 0.37).abs() < 1e-12);
        let r = decompose_position(-0.6, &f);
        assert_eq!(r.integer_part, -1);
        assert!((r.modular_part - 0.4).abs() < 1e-12);
        let r = decompose_position(0.5, &f);
        assert_eq!(r.integer_part, 1);
        assert_eq!(r.modular_part, -0.5);
        // a slit origin moves the cells with it
        let f = f.with_position_origin(0.5);
        let r = decompose_position(0.53, &f);
        assert_eq!(r.integer_part, 0);
        assert!((r.modular_part - 0.03).abs() < 1e-12);
    }

    #[test]
    fn momentum_examples() {
        let f = ModularFrame::new(0.7f64, 2.3).unwrap();
        let per = f.momentum_period();
        let r = decompose_momentum(0.0, &f);
        assert_eq!((r.integer_part, r.modular_part), (0, 0.0));
        let r = decompose_momentum(per, &f);
        assert_eq!(r.integer_part, 1);
        assert!(r.modular_part.abs() < 1e-12);
        let r = decompose_momentum(0.75 * per, &f);
        assert_eq!(r.integer_part, 1);
        assert!((r.modular_part + 0.25 * per).abs() < 1e-12);
    }

    #[test]
    fn fringe_examples() {
        for n in [1usize, 2, 5] {
            assert!((fringe_function(n, 0.0f64) - n as f64).abs() < 1e-12);
        }
        assert!(fringe_function(2, 0.5f64).abs() < 1e-15);
        for n in [1usize, 2, 3, 7] {
            let g = GridSpec::new(0.0f64, 1.0, 2001).unwrap();
            let mean = integrate_1d(|x| fringe_function(n, x), &g);
            assert!((mean - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn fringe_is_nonnegative() {
        for n in 1..=50 {
            for k in 0..10_000 {
                let xi = k as f64 / 10_000.0;
                assert!(fringe_function(n, xi) >= -1e-9, "F_{n}({xi})");
            }
        }
    }

    #[test]
    fn s2_examples() {
        assert_eq!(squeezing_s2::<f64>(1), 0.0);
        assert!((squeezing_s2::<f64>(2) - 3.0 / (PI * PI)).abs() < 1e-15);
        // direct oracle: (6/π²)(2/3 + 1/12)
        assert!((squeezing_s2::<f64>(3) - 4.5 / (PI * PI)).abs() < 1e-15);
    }

    #[test]
    fn s2_monotone_and_bounded() {
        for n in 1..=100 {
            let (a, b) = (squeezing_s2::<f64>(n), squeezing_s2::<f64>(n + 1));
            assert!(b > a);
            assert!((0.0..1.0).contains(&a));
        }
    }

    #[test]
    fn s2_asymptotic_accuracy() {
        let rel = |n| {
            let e = squeezing_s2::<f64>(n);
            (squeezing_s2_asymptotic::<f64>(n) - e).abs() / e
        };
        assert!(rel(30) < 0.02, "{}", rel(30));
        assert!(rel(5) < 0.10, "{}", rel(5));
        assert!((squeezing_s2_asymptotic::<f64>(1_000_000) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn s2_shifted_examples() {
        for n in [2usize, 5, 10] {
            assert_eq!(squeezing_s2_shifted(n, 0.0f64), squeezing_s2::<f64>(n));
        }
        assert!((squeezing_s2_shifted(2, PI) + 3.0 / (PI * PI)).abs() < 1e-15);
        // j=1 term is cos(π/2) = 0, j=2 term is (1/12) cos π
        let v = squeezing_s2_shifted(3, PI / 2.0);
        assert!((v - 6.0 / (PI * PI) * (-1.0 / 12.0)).abs() < 1e-15);
    }

    #[test]
    fn s2_shift_never_helps() {
        for n in 1..=12 {
            let s = squeezing_s2::<f64>(n);
            for k in 0..720 {
                let phi = k as f64 * TAU / 720.0;
                assert!(squeezing_s2_shifted(n, phi) <= s + 1e-15);
            }
        }
    }

    #[test]
    fn criterion_constant_value() {
        let c = criterion_constant::<f64>();
        assert!((c - 0.078_235).abs() < 1e-5, "{c}");
        assert!(criterion_residual(c).unwrap().abs() < 1e-10);
        assert!((2.0 * c - 0.15647).abs() < 2e-5);
        // mpmath root of the same equation
        assert!((c - 0.078_235_087_351_702_65).abs() < 1e-11);
    }

    #[test]
    fn criterion_constant_f32() {
        let c = compute_criterion_constant::<f32>().unwrap();
        assert!((c as f64 - 0.078_235).abs() < 1e-5);
    }

    #[test]
    fn criterion_examples() {
        let f = unit();
        let h2d2 = f.h * f.h / (f.d * f.d);
        let r = evaluate_criterion(h2d2 / 6.0 * (1.0 - squeezing_s2::<f64>(2)), 0.0, &f, 0.0);
        assert!((r.lhs - (1.0 - 3.0 / (PI * PI)) / 6.0).abs() < 1e-12);
        assert!(r.entangled);
        assert!((r.margin() - 0.25).abs() < 0.02, "margin {}", r.margin());

        let r = evaluate_criterion(h2d2 / 6.0, 0.0, &f, 0.0);
        assert!((r.lhs - 1.0 / 6.0).abs() < 1e-12);
        assert!(!r.entangled);

        let r = evaluate_criterion(0.0, 0.0, &f, 0.0);
        assert_eq!(r.lhs, 0.0);
        assert!(r.entangled);
        assert!((r.threshold - 2.0 * criterion_constant::<f64>()).abs() < 1e-9);
    }
}
