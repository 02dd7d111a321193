//! Special functions and small numerical primitives: Kummer's confluent
//! hypergeometric function, `sinc`, bracketed root finding and composite
//! Simpson quadrature on uniform grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Hard cap on the number of Kummer series terms.
pub const KUMMER_MAX_TERMS: usize = 500;

/// Default number of uniform scan intervals for [`find_smallest_root`].
pub const ROOT_SCAN_STEPS: usize = 10_000;

/// Default bracket width at which [`find_smallest_root`] stops bisecting.
pub const ROOT_TOL: f64 = 1e-12;

fn is_nonpositive_integer<T: Real>(b: T) -> bool {
    b <= T::zero() && b == b.round()
}

/// Relative stopping threshold of the Kummer series. Never tighter than
/// half an ulp of the scalar type so that `f32` still terminates.
fn series_tol<T: Real>() -> T {
    T::lit(1e-16).max(T::epsilon() / T::lit(2.0))
}

/// Confluent hypergeometric function `M(a, b, x) = Σ (a)_k x^k / ((b)_k k!)`.
///
/// Summed by the term recurrence `t_{k+1} = t_k (a+k) x / ((b+k)(k+1))`,
/// stopping once a term drops below `1e-16` of the partial sum. Intended for
/// the moderate arguments used here (|x| of order a few); there is no
/// asymptotic branch.
pub fn kummer_m<T: Real>(a: T, b: T, x: T) -> Result<T> {
    if !(a.is_finite() && b.is_finite() && x.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "kummer_m arguments must be finite (a={a}, b={b}, x={x})"
        )));
    }
    if is_nonpositive_integer(b) {
        return Err(Error::InvalidParameter(format!(
            "kummer_m: b = {b} is zero or a negative integer"
        )));
    }
    let tol = series_tol::<T>();
    let mut term = T::one();
    let mut sum = T::one();
    for k in 0..KUMMER_MAX_TERMS {
        let kf = T::from_usize(k).unwrap();
        term = term * (a + kf) * x / ((b + kf) * (kf + T::one()));
        sum = sum + term;
        // a terminating series (a a nonpositive integer) yields exact zeros
        if term == T::zero() || term.abs() < tol * sum.abs() {
            return Ok(sum);
        }
    }
    Err(Error::NonConvergence {
        what: "Kummer series",
        iterations: KUMMER_MAX_TERMS,
    })
}

/// `dM/dx (a, b, x) = (a/b) M(a+1, b+1, x)`.
pub fn kummer_m_dx<T: Real>(a: T, b: T, x: T) -> Result<T> {
    if is_nonpositive_integer(b) {
        return Err(Error::InvalidParameter(format!(
            "kummer_m_dx: b = {b} is zero or a negative integer"
        )));
    }
    Ok(a / b * kummer_m(a + T::one(), b + T::one(), x)?)
}

/// `sin(x)/x` with the removable singularity filled in.
///
/// Evaluated on `|x|`, so the function is exactly even.
#[inline]
pub fn sinc<T: Real>(x: T) -> T {
    let x = x.abs();
    if x < T::lit(1e-4) {
        let x2 = x * x;
        T::one() - x2 / T::lit(6.0) + x2 * x2 / T::lit(120.0)
    } else {
        x.sin() / x
    }
}

/// Bisects a sign-changing bracket `[lo, hi]` down to width `tol`.
///
/// Returns the midpoint of the final bracket, or an endpoint that is an
/// exact zero.
pub fn bisect<T: Real, F>(mut f: F, lo: T, hi: T, tol: T) -> Result<T>
where
    F: FnMut(T) -> T,
{
    let (mut lo, mut hi) = (lo, hi);
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == T::zero() {
        return Ok(lo);
    }
    if f_hi == T::zero() {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() || f_lo.is_nan() || f_hi.is_nan() {
        return Err(Error::NoRoot {
            lo: lo.as_f64(),
            hi: hi.as_f64(),
        });
    }
    let two = T::lit(2.0);
    // bounded: each pass halves the bracket
    for _ in 0..4096 {
        if hi - lo <= tol {
            break;
        }
        let mid = (lo + hi) / two;
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == T::zero() {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) / two)
}

/// Leftmost root of `f` on `[lo, hi]`.
///
/// Scans `scan_steps` uniform intervals, picks the first sign change and
/// bisects it to width `tol`.
pub fn find_smallest_root<T: Real, F>(
    mut f: F,
    lo: T,
    hi: T,
    scan_steps: usize,
    tol: T,
) -> Result<T>
where
    F: FnMut(T) -> T,
{
    if scan_steps < 2 || !(tol > T::zero()) || !(hi > lo) {
        return Err(Error::InvalidParameter(format!(
            "find_smallest_root needs lo < hi, scan_steps >= 2, tol > 0 \
             (lo={lo}, hi={hi}, scan_steps={scan_steps}, tol={tol})"
        )));
    }
    let step = (hi - lo) / T::from_usize(scan_steps).unwrap();
    let mut x_prev = lo;
    let mut f_prev = f(lo);
    if f_prev == T::zero() {
        return Ok(lo);
    }
    for i in 1..=scan_steps {
        let x = if i == scan_steps {
            hi
        } else {
            lo + step * T::from_usize(i).unwrap()
        };
        let fx = f(x);
        if fx == T::zero() {
            return Ok(x);
        }
        if fx.signum() != f_prev.signum() && !fx.is_nan() && !f_prev.is_nan() {
            return bisect(&mut f, x_prev, x, tol);
        }
        x_prev = x;
        f_prev = fx;
    }
    Err(Error::NoRoot {
        lo: lo.as_f64(),
        hi: hi.as_f64(),
    })
}

/// Uniform grid `lo, lo + h, ..., hi` with `n` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec<T> {
    pub lo: T,
    pub hi: T,
    pub n: usize,
}

impl<T: Real> GridSpec<T> {
    pub fn new(lo: T, hi: T, n: usize) -> Result<Self> {
        if !(lo < hi) || n < 2 || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "grid needs finite lo < hi and n >= 2 (lo={lo}, hi={hi}, n={n})"
            )));
        }
        Ok(Self { lo, hi, n })
    }

    #[inline]
    pub fn spacing(&self) -> T {
        (self.hi - self.lo) / T::from_usize(self.n - 1).unwrap()
    }

    #[inline]
    pub fn point(&self, i: usize) -> T {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + self.spacing() * T::from_usize(i).unwrap()
        }
    }

    pub fn points(&self) -> impl Iterator<Item = T> + '_ {
        (0..self.n).map(move |i| self.point(i))
    }

    /// Same interval with an odd point count, as composite Simpson requires.
    pub fn simpson(&self) -> Self {
        let n = if self.n % 2 == 0 { self.n + 1 } else { self.n };
        Self { n, ..*self }
    }

    /// Composite Simpson weights for this grid (which must have odd `n`).
    pub(crate) fn simpson_weights(&self) -> Vec<T> {
        debug_assert!(self.n % 2 == 1);
        let h3 = self.spacing() / T::lit(3.0);
        (0..self.n)
            .map(|i| {
                if i == 0 || i + 1 == self.n {
                    h3
                } else if i % 2 == 1 {
                    h3 * T::lit(4.0)
                } else {
                    h3 * T::lit(2.0)
                }
            })
            .collect()
    }
}

/// Composite Simpson rule over the grid's interval. An even point count
/// is rounded up to the next odd one.
pub fn integrate_1d<T: Real, F>(f: F, grid: &GridSpec<T>) -> T
where
    F: Fn(T) -> T,
{
    let g = grid.simpson();
    g.simpson_weights()
        .into_iter()
        .enumerate()
        .fold(T::zero(), |acc, (i, w)| acc + w * f(g.point(i)))
}

/// Tensor-product composite Simpson rule over `gx × gy`.
pub fn integrate_2d<T: Real, F>(f: F, gx: &GridSpec<T>, gy: &GridSpec<T>) -> T
where
    F: Fn(T, T) -> T,
{
    let gx = gx.simpson();
    let gy = gy.simpson();
    let wx = gx.simpson_weights();
    let wy = gy.simpson_weights();
    let mut total = T::zero();
    for (i, &wi) in wx.iter().enumerate() {
        let x = gx.point(i);
        let row = wy
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (j, &wj)| acc + wj * f(x, gy.point(j)));
        total = total + wi * row;
    }
    total
}

#[cfg(test)]
// The test argument 1.5707963 is a fixed truncated value, not π/2.
#[allow(clippy::approx_constant, clippy::excessive_precision)]
mod tests {
    use super::*;
    use std::f64::consts::{E, PI};

    /// Independent oracle: the defining series summed in rational-free
    /// compensated arithmetic for a fixed, generous number of terms.
    fn kummer_oracle(a: f64, b: f64, x: f64) -> f64 {
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        let mut term = 1.0f64;
        for k in 0..200 {
            let y = term - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            let k = k as f64;
            term *= (a + k) * x / ((b + k) * (k + 1.0));
        }
        sum
    }

    #[test]
    fn kummer_closed_forms() {
        assert_eq!(kummer_m(0.3, 0.7, 0.0).unwrap(), 1.0);
        let m = kummer_m(1.0, 2.0, 1.0).unwrap();
        assert!((m - (E - 1.0)).abs() < 1e-14);
        // M(a, a, x) = e^x
        let m = kummer_m(0.37, 0.37, 1.3).unwrap();
        assert!((m - 1.3f64.exp()).abs() < 1e-13);
    }

    #[test]
    fn kummer_matches_high_precision_value() {
        // 200-term mpmath series, 30 digits
        let expected = 2.664_500_695_473_070_806_103_270_199_89;
        let m: f64 = kummer_m(0.25, 0.5, 1.570_796_3).unwrap();
        assert!(((m - expected) / expected).abs() < 1e-12, "{m}");
        let o = kummer_oracle(0.25, 0.5, 1.570_796_3);
        assert!(((m - o) / o).abs() < 1e-12);
    }

    #[test]
    fn kummer_rejects_nonpositive_integer_b() {
        for b in [0.0, -1.0, -3.0] {
            assert!(matches!(
                kummer_m(0.5, b, 0.3),
                Err(Error::InvalidParameter(_))
            ));
            assert!(kummer_m_dx(0.5, b, 0.3).is_err());
        }
        // non-integer negative b is fine
        assert!(kummer_m(0.5, -0.5, 0.3).is_ok());
    }

    #[test]
    fn kummer_reports_non_convergence() {
        assert!(matches!(
            kummer_m(1.0, 1.0, 900.0),
            Err(Error::NonConvergence { .. })
        ));
    }

    #[test]
    fn kummer_terminating_series_is_polynomial() {
        // M(-2, b, x) = 1 - 2x/b + x^2/(b(b+1))
        let (b, x) = (0.5f64, 0.8);
        let expected = 1.0 - 2.0 * x / b + x * x / (b * (b + 1.0));
        assert!((kummer_m(-2.0, b, x).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn kummer_derivative_closed_forms() {
        assert!((kummer_m_dx(0.3f64, 0.7, 0.0).unwrap() - 0.3 / 0.7).abs() < 1e-15);
        // d/dx (e^x - 1)/x at x = 1 is 1
        assert!((kummer_m_dx(1.0f64, 2.0, 1.0).unwrap() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn kummer_f32_agrees_with_f64() {
        let m32 = kummer_m(0.25f32, 0.5, 1.570_796_3).unwrap();
        let m64 = kummer_m(0.25f64, 0.5, 1.570_796_3).unwrap();
        assert!(((m32 as f64 - m64) / m64).abs() < 1e-6);
    }

    #[test]
    fn root_examples() {
        let r = find_smallest_root(|x: f64| x * x - 1.0, 0.0, 3.0, ROOT_SCAN_STEPS, 1e-10).unwrap();
        assert!((r - 1.0).abs() < 1e-10);
        let r = find_smallest_root(|x: f64| x.sin(), 1.0, 7.0, ROOT_SCAN_STEPS, 1e-12).unwrap();
        assert!((r - PI).abs() < 1e-11);
        let r = find_smallest_root(|x: f64| (x - 0.2) * (x - 0.8), 0.0, 1.0, 1000, 1e-12).unwrap();
        assert!((r - 0.2).abs() < 1e-11);
    }

    #[test]
    fn root_errors() {
        assert!(matches!(
            find_smallest_root(|x: f64| x * x + 1.0, -1.0, 1.0, 100, 1e-10),
            Err(Error::NoRoot { .. })
        ));
        assert!(find_smallest_root(|x: f64| x, 0.0, 1.0, 1, 1e-10).is_err());
        assert!(find_smallest_root(|x: f64| x, 0.0, 1.0, 10, 0.0).is_err());
        assert!(bisect(|x: f64| x * x + 1.0, -1.0, 1.0, 1e-10).is_err());
    }

    #[test]
    fn sinc_values() {
        assert_eq!(sinc(0.0f64), 1.0);
        assert!(sinc(PI).abs() < 1e-15);
        assert!((sinc(1e-5f64) - (1.0 - 1e-10 / 6.0)).abs() < 1e-15);
        // branch seam
        let below = sinc(0.999_999e-4f64);
        let above = sinc(1.000_001e-4f64);
        assert!((below - above).abs() < 1e-12);
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(1.0, 0.0, 10).is_err());
        assert!(GridSpec::new(0.0, 1.0, 1).is_err());
        let g = GridSpec::new(0.0f64, 1.0, 11).unwrap();
        assert!((g.spacing() - 0.1).abs() < 1e-15);
        assert_eq!(g.point(10), 1.0);
        assert_eq!(g.simpson().n, 11);
        assert_eq!(GridSpec::new(0.0, 1.0, 10).unwrap().simpson().n, 11);
    }

    #[test]
    fn quadrature_examples() {
        let g = GridSpec::new(0.0, 1.0, 3).unwrap();
        assert!((integrate_1d(|x: f64| x, &g) - 0.5).abs() < 1e-15);
        let g = GridSpec::new(0.0, PI, 1001).unwrap();
        assert!((integrate_1d(f64::sin, &g) - 2.0).abs() < 1e-8);

        let sigma = 0.7;
        let gx = GridSpec::new(-8.0 * sigma, 8.0 * sigma, 401).unwrap();
        let v = integrate_2d(
            |x: f64, y: f64| (-(x * x + y * y) / (2.0 * sigma * sigma)).exp(),
            &gx,
            &gx,
        );
        assert!((v - 2.0 * PI * sigma * sigma).abs() < 1e-8);
    }

    #[test]
    fn simpson_is_fourth_order() {
        let err = |n: usize| {
            let g = GridSpec::new(0.0, 2.0, n).unwrap();
            (integrate_1d(|x: f64| (3.0 * x).cos() * x.exp(), &g)
                - {
                    // ∫ e^x cos 3x = e^x (cos 3x + 3 sin 3x)/10
                    let f = |x: f64| x.exp() * ((3.0 * x).cos() + 3.0 * (3.0 * x).sin()) / 10.0;
                    f(2.0) - f(0.0)
                })
            .abs()
        };
        let ratio = err(41) / err(81);
        assert!(ratio > 14.0 && ratio < 18.0, "ratio {ratio}");
    }
}
