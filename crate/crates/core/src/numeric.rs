//! Quadrature, root finding and formal power series helpers.

use crate::error::{Error, Result};
use crate::Scalar;

/// Absolute and relative tolerance for adaptive routines.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance<T> {
    pub abs: T,
    pub rel: T,
}

impl<T: Scalar> Tolerance<T> {
    pub fn new(abs: T, rel: T) -> Self {
        Self { abs, rel }
    }

    /// Tolerances below what the scalar can resolve are raised to a small
    /// multiple of machine epsilon, so `f32` callers can share `f64` settings.
    fn effective(self, scale: T) -> (T, T) {
        let floor = T::lit(50.0) * T::epsilon();
        (self.abs.max(floor * scale), self.rel.max(floor))
    }
}

impl<T: Scalar> Default for Tolerance<T> {
    fn default() -> Self {
        Self::new(T::lit(1e-12), T::lit(1e-10))
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One 15-point Kronrod panel; returns (kronrod estimate, |kronrod - gauss|).
fn gk15<T: Scalar, F: Fn(T) -> T>(f: &F, a: T, b: T) -> (T, T) {
    let half = T::lit(0.5);
    let center = half * (a + b);
    let hl = half * (b - a);
    let fc = f(center);
    let mut kron = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    for j in 0..7 {
        let dx = hl * T::lit(XGK[j]);
        let pair = f(center - dx) + f(center + dx);
        kron = kron + pair * T::lit(WGK[j]);
        if j % 2 == 1 {
            gauss = gauss + pair * T::lit(WG[j / 2]);
        }
    }
    (kron * hl, ((kron - gauss) * hl).abs())
}

/// Adaptive Gauss-Kronrod (7/15) quadrature on a finite interval.
///
/// Only interior nodes are evaluated, so integrable endpoint singularities
/// are tolerated. Returns `Error::Numerical` if the integrand produces a
/// non-finite value or the subdivision budget runs out before convergence.
pub fn integrate<T: Scalar, F: Fn(T) -> T>(f: F, a: T, b: T, tol: Tolerance<T>) -> Result<T> {
    if a == b {
        return Ok(T::zero());
    }
    let (lo, hi, sign) = if a < b {
        (a, b, T::one())
    } else {
        (b, a, -T::one())
    };
    let mut panels: Vec<(T, T, T, T)> = Vec::new();
    let (v, e) = gk15(&f, lo, hi);
    panels.push((lo, hi, v, e));
    let mut total = v;
    let mut err = e;
    const MAX_PANELS: usize = 4000;
    loop {
        if !total.is_finite() {
            return Err(Error::Numerical("integrand is not finite".into()));
        }
        let (abs_tol, rel_tol) = tol.effective(total.abs());
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(sign * total);
        }
        if panels.len() >= MAX_PANELS {
            // The remaining error is dominated by rounding once panels shrink
            // this far; accept if it is small relative to the tolerance.
            if err <= T::lit(1e3) * abs_tol.max(rel_tol * total.abs()) {
                return Ok(sign * total);
            }
            return Err(Error::Numerical(format!(
                "quadrature did not converge: error estimate {err}"
            )));
        }
        // Bisect the panel with the largest error.
        let (idx, _) = panels
            .iter()
            .enumerate()
            .fold(
                (0, -T::one()),
                |acc, (i, p)| if p.3 > acc.1 { (i, p.3) } else { acc },
            );
        let (pa, pb, pv, pe) = panels.swap_remove(idx);
        let mid = T::lit(0.5) * (pa + pb);
        if !(mid > pa && mid < pb) {
            // Panel cannot be split further in this precision.
            panels.push((pa, pb, pv, T::zero()));
            err = panels.iter().map(|p| p.3).sum();
            continue;
        }
        let (v1, e1) = gk15(&f, pa, mid);
        let (v2, e2) = gk15(&f, mid, pb);
        panels.push((pa, mid, v1, e1));
        panels.push((mid, pb, v2, e2));
        total = total - pv + v1 + v2;
        err = err - pe + e1 + e2;
        if err < T::zero() {
            err = panels.iter().map(|p| p.3).sum();
        }
    }
}

/// `∫_a^∞ f`, via the map `x = a + v/(1-v)` on `v ∈ (0, 1)`.
pub fn integrate_to_infinity<T: Scalar, F: Fn(T) -> T>(f: F, a: T, tol: Tolerance<T>) -> Result<T> {
    integrate(
        |v: T| {
            let one_minus = T::one() - v;
            if one_minus <= T::zero() {
                return T::zero();
            }
            let x = a + v / one_minus;
            let jac = T::one() / (one_minus * one_minus);
            let fx = f(x);
            if fx == T::zero() {
                T::zero()
            } else {
                fx * jac
            }
        },
        T::zero(),
        T::one(),
        tol,
    )
}

/// Composite Simpson rule with `n` (rounded up to even) panels.
pub fn simpson<T: Scalar, F: Fn(T) -> T>(f: F, a: T, b: T, n: usize) -> T {
    let n = (n.max(2) + 1) & !1;
    let h = (b - a) / T::of_usize(n);
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { T::lit(4.0) } else { T::lit(2.0) };
        acc = acc + w * f(a + h * T::of_usize(i));
    }
    acc * h / T::lit(3.0)
}

/// Bisection for an increasing function on `[lo, hi]`: returns `x` with
/// `f(x) ≈ target` to absolute tolerance `xtol` in the argument.
pub fn bisect_increasing<T: Scalar, F: Fn(T) -> T>(
    f: F,
    target: T,
    mut lo: T,
    mut hi: T,
    xtol: T,
) -> T {
    for _ in 0..400 {
        if hi - lo <= xtol {
            break;
        }
        let mid = T::lit(0.5) * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    T::lit(0.5) * (lo + hi)
}

/// Compensated (Kahan) summation.
pub fn kahan_sum<T: Scalar, I: IntoIterator<Item = T>>(items: I) -> T {
    let mut sum = T::zero();
    let mut c = T::zero();
    for x in items {
        let y = x - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Coefficients `f_0..f_{n}` of `exp(p(u))` for a power series `p` with
/// `p(0) = p[0]`, via `n f_n = Σ_{k=1}^{n} k p_k f_{n-k}`.
pub fn series_exp<T: Scalar>(p: &[T], n: usize) -> Vec<T> {
    let coef = |k: usize| p.get(k).copied().unwrap_or_else(T::zero);
    let mut f = vec![T::zero(); n + 1];
    f[0] = coef(0).exp();
    for m in 1..=n {
        let mut acc = T::zero();
        for k in 1..=m {
            let pk = coef(k);
            if pk != T::zero() {
                acc = acc + T::of_usize(k) * pk * f[m - k];
            }
        }
        f[m] = acc / T::of_usize(m);
    }
    f
}

/// Coefficients `b_0..b_n` of `a(u)^rho` for a power series with `a_0 > 0`
/// (Miller's recurrence).
pub fn series_pow<T: Scalar>(a: &[T], rho: T, n: usize) -> Vec<T> {
    let coef = |k: usize| a.get(k).copied().unwrap_or_else(T::zero);
    let a0 = coef(0);
    let mut b = vec![T::zero(); n + 1];
    b[0] = a0.powf(rho);
    for m in 1..=n {
        let mut acc = T::zero();
        for k in 1..=m {
            let ak = coef(k);
            if ak != T::zero() {
                let kf = T::of_usize(k);
                acc = acc + (kf * (rho + T::one()) - T::of_usize(m)) * ak * b[m - k];
            }
        }
        b[m] = acc / (T::of_usize(m) * a0);
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_kronrod_polynomial_and_singular() {
        let v = integrate(|x: f64| x * x * x, 0.0, 2.0, Tolerance::default()).unwrap();
        assert!((v - 4.0).abs() < 1e-13);
        let v = integrate(
            |x: f64| 1.0 / x.sqrt(),
            0.0,
            1.0,
            Tolerance::new(1e-10, 1e-10),
        )
        .unwrap();
        assert!((v - 2.0).abs() < 1e-8);
        let v = integrate(
            |x: f64| x.sin(),
            std::f64::consts::PI,
            0.0,
            Tolerance::default(),
        )
        .unwrap();
        assert!((v + 2.0).abs() < 1e-12);
    }

    #[test]
    fn half_line_integral() {
        let v = integrate_to_infinity(|x: f64| (-x).exp(), 0.0, Tolerance::default()).unwrap();
        assert!((v - 1.0).abs() < 1e-11);
        let v =
            integrate_to_infinity(|x: f64| 1.0 / (1.0 + x * x), 0.0, Tolerance::default()).unwrap();
        assert!((v - std::f64::consts::FRAC_PI_2).abs() < 1e-10);
    }

    #[test]
    fn works_in_single_precision() {
        let v = integrate(|x: f32| x.exp(), 0.0, 1.0, Tolerance::new(1e-12, 1e-12)).unwrap();
        assert!((v - (std::f32::consts::E - 1.0)).abs() < 1e-5);
    }

    #[test]
    fn series_exp_matches_exponential() {
        // exp(u) = Σ u^n/n!
        let f = series_exp(&[0.0f64, 1.0], 10);
        let mut fact = 1.0;
        for (n, c) in f.iter().enumerate() {
            if n > 0 {
                fact *= n as f64;
            }
            assert!((c - 1.0 / fact).abs() < 1e-15);
        }
    }

    #[test]
    fn series_pow_matches_binomial() {
        // (1 - u)^{-2} = Σ (n+1) u^n
        let b = series_pow(&[1.0f64, -1.0], -2.0, 12);
        for (n, c) in b.iter().enumerate() {
            assert!((c - (n + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn bisection_finds_root() {
        let x = bisect_increasing(|x: f64| x * x, 2.0, 0.0, 2.0, 1e-14);
        assert!((x - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn kahan_beats_naive() {
        let v: Vec<f64> = std::iter::once(1.0)
            .chain(std::iter::repeat(1e-16).take(10_000))
            .collect();
        assert!((kahan_sum(v) - (1.0 + 1e-12)).abs() < 1e-15);
    }
}
