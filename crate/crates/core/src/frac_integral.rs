//! Riemann-Liouville fractional integrals `I^α S(t)` of sampled paths and
//! their moments.

use rand::Rng;
use rand_distr::Distribution;

use crate::error::{check_time, invalid, Error, Result};
use crate::law::JumpLaw;
use crate::numeric::{integrate, Tolerance};
use crate::rates::{RateFn, RateSpec};
use crate::sampling::{mark_sampler, poisson_count, Path};
use crate::special::{gamma, ln_gamma};
use crate::Scalar;

fn check_order<T: Scalar>(alpha: T) -> Result<()> {
    if alpha.is_finite() && alpha > T::zero() {
        Ok(())
    } else {
        Err(invalid(format!(
            "order must be positive and finite, got {alpha}"
        )))
    }
}

/// `I^α S(t) = Σ_{τ_k <= t} j_k (t - τ_k)^α / Γ(α + 1)` for a step path.
pub fn frac_integral_eval<T: Scalar>(path: &Path<T>, alpha: T, t: T) -> Result<T> {
    check_order(alpha)?;
    check_time(t)?;
    if t > path.horizon() {
        return Err(Error::InvalidParameter(format!(
            "t = {t} beyond the path horizon {}",
            path.horizon()
        )));
    }
    let norm = gamma(alpha + T::one());
    Ok(path
        .events()
        .iter()
        .take_while(|e| e.time <= t)
        .map(|e| e.jump * (t - e.time).powf(alpha))
        .sum::<T>()
        / norm)
}

/// A path together with an integration order, evaluated lazily.
#[derive(Debug, Clone)]
pub struct FracIntegralPath<T: Scalar> {
    pub source: Path<T>,
    pub alpha: T,
}

impl<T: Scalar> FracIntegralPath<T> {
    pub fn new(source: Path<T>, alpha: T) -> Result<Self> {
        check_order(alpha)?;
        Ok(Self { source, alpha })
    }

    pub fn eval(&self, t: T) -> Result<T> {
        frac_integral_eval(&self.source, self.alpha, t)
    }
}

/// `(1/Γ(α)) ∫_0^t (t - s)^{α-1} f(s) ds` by quadrature, with
/// `s = t - v^{1/α}` absorbing the kernel: `(1/Γ(α+1)) ∫_0^{t^α} f(t - v^{1/α}) dv`.
///
/// Points in `breaks` where `f` jumps or kinks split the quadrature.
pub fn riemann_liouville<T: Scalar>(
    f: impl Fn(T) -> T,
    alpha: T,
    t: T,
    breaks: &[T],
    tol: Tolerance<T>,
) -> Result<T> {
    check_order(alpha)?;
    check_time(t)?;
    if t == T::zero() {
        return Ok(T::zero());
    }
    let inv = T::one() / alpha;
    let mut cuts: Vec<T> = breaks
        .iter()
        .filter(|&&b| b > T::zero() && b < t)
        .map(|&b| (t - b).powf(alpha))
        .collect();
    cuts.push(T::zero());
    cuts.push(t.powf(alpha));
    cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite breaks"));
    let g = |v: T| f((t - v.powf(inv)).max(T::zero()));
    let mut acc = T::zero();
    for w in cuts.windows(2) {
        acc = acc + integrate(&g, w[0], w[1], tol)?;
    }
    Ok(acc / gamma(alpha + T::one()))
}

/// `I^γ Λ(t)`, closed-form for constant and offset-free power rates.
fn rl_cumulative<T: Scalar>(rate: &RateFn<T>, order: T, t: T) -> Result<T> {
    if t == T::zero() {
        return Ok(T::zero());
    }
    match rate.spec() {
        RateSpec::Constant { c } => Ok(c * t.powf(order + T::one()) / gamma(order + T::lit(2.0))),
        // Λ(u) = a u^{p}/p with p = β + 1, and I^γ u^p = Γ(p+1)/Γ(p+γ+1) t^{p+γ}.
        RateSpec::Power { a, alpha, offset } if offset == T::zero() => {
            let p = alpha + T::one();
            let log =
                ln_gamma(p + T::one()) - ln_gamma(p + order + T::one()) + (p + order) * t.ln();
            Ok(a / p * log.exp())
        }
        _ => {
            let knots = rate.knots();
            riemann_liouville(
                |s| rate.cumulative(s).unwrap_or_else(|_| T::nan()),
                order,
                t,
                &knots,
                Tolerance::new(T::lit(1e-14), T::lit(1e-10)),
            )
        }
    }
}

/// Mean and variance of `I^α S(t)`: `E = Σ i I^α Λ_i(t)` and
/// `V = 2Γ(2α)/(Γ(α)Γ(α+1)) Σ i² I^{2α} Λ_i(t)`.
pub fn frac_integral_moments<T: Scalar>(law: &JumpLaw<T>, alpha: T, t: T) -> Result<(T, T)> {
    check_order(alpha)?;
    check_time(t)?;
    let two_alpha = alpha + alpha;
    let factor =
        T::lit(2.0) * (ln_gamma(two_alpha) - ln_gamma(alpha) - ln_gamma(alpha + T::one())).exp();
    let (mut mean, mut var) = (T::zero(), T::zero());
    for j in law.jumps() {
        mean = mean + j.size * rl_cumulative(&j.rate, alpha, t)?;
        var = var + j.size * j.size * rl_cumulative(&j.rate, two_alpha, t)?;
    }
    Ok((mean, factor * var))
}

/// `Cov(I^α S(s), I^α S(t)) = Σ i²/(Γ(α)Γ(α+1)) ∫_0^{s∧t} (s-u)^{α-1}(t-u)^{α-1}(s+t-2u) Λ_i(u) du`.
///
/// The endpoint singularity at `u = s∧t` is removed by `u = s - v^{1/α}`
/// (or `v^{1/(2α)}` when `s = t`); relative tolerance `1e-9`.
pub fn frac_integral_covariance<T: Scalar>(law: &JumpLaw<T>, alpha: T, s: T, t: T) -> Result<T> {
    check_order(alpha)?;
    check_time(s)?;
    check_time(t)?;
    let (s, t) = if s <= t { (s, t) } else { (t, s) };
    if s == T::zero() {
        return Ok(T::zero());
    }
    if s == t {
        return Ok(frac_integral_moments(law, alpha, s)?.1);
    }
    let tol = Tolerance::new(T::lit(1e-14), T::lit(1e-9));
    let inv = T::one() / alpha;
    let norm = T::one() / (alpha * gamma(alpha) * gamma(alpha + T::one()));
    let mut acc = T::zero();
    for j in law.jumps() {
        if j.rate.is_zero() {
            continue;
        }
        let integral = integrate(
            |v: T| {
                let u = (s - v.powf(inv)).max(T::zero());
                let lam = j.rate.cumulative(u).unwrap_or_else(|_| T::nan());
                (t - u).powf(alpha - T::one()) * (s + t - u - u) * lam
            },
            T::zero(),
            s.powf(alpha),
            tol,
        )?;
        acc = acc + j.size * j.size * integral;
    }
    Ok(norm * acc)
}

fn compound_product<R: Rng + ?Sized>(
    law: &JumpLaw<f64>,
    t: f64,
    m: u32,
    rng: &mut R,
) -> Result<f64> {
    check_time(t)?;
    let rates = law.require_homogeneous("compound Poisson representation")?;
    let sizes: Vec<f64> = law.sizes().collect();
    let Some(marks) = mark_sampler(&rates)? else {
        return Ok(0.0);
    };
    let total: f64 = rates.iter().sum();
    let n = poisson_count(total * t, rng);
    let mut acc = 0.0;
    for _ in 0..n {
        let x = sizes[marks.sample(rng)];
        let u: f64 = (0..m).map(|_| rng.random::<f64>()).product();
        acc += x * u;
    }
    Ok(acc)
}

/// One draw of `∫_0^t S(s) ds` through `t Σ_{k <= N(t)} X_k U_k` (constant
/// rates).
pub fn integral_cp_representation_sample<R: Rng + ?Sized>(
    law: &JumpLaw<f64>,
    t: f64,
    rng: &mut R,
) -> Result<f64> {
    Ok(t * compound_product(law, t, 1, rng)?)
}

/// One draw of the `M`-fold running average `Σ_{k <= N(t)} X_k U_k^{(1)} ⋯ U_k^{(M)}`
/// (constant rates).
pub fn iterated_running_average_sample<R: Rng + ?Sized>(
    law: &JumpLaw<f64>,
    t: f64,
    m: u32,
    rng: &mut R,
) -> Result<f64> {
    if m == 0 {
        return Err(invalid("running average depth M must be at least 1"));
    }
    compound_product(law, t, m, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{Event, RngStream};
    use proptest::prelude::*;

    type Law = JumpLaw<f64>;

    fn path(horizon: f64, ev: &[(f64, f64)]) -> Path<f64> {
        Path::from_events(
            horizon,
            ev.iter()
                .map(|&(time, jump)| Event { time, jump })
                .collect(),
        )
        .unwrap()
    }

    fn tight() -> Tolerance<f64> {
        Tolerance::new(1e-14, 1e-11)
    }

    #[test]
    fn eval_examples() {
        let p = path(2.0, &[(0.5, 1.0)]);
        assert!((frac_integral_eval(&p, 1.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        let q = path(3.0, &[(0.2, 2.0), (1.1, -1.0), (2.5, 3.0)]);
        assert!(
            (frac_integral_eval(&q, 1.0, 3.0).unwrap() - (2.0 * 2.8 - 1.9 + 3.0 * 0.5)).abs()
                < 1e-14
        );
        assert_eq!(frac_integral_eval(&q, 0.7, 0.0).unwrap(), 0.0);
        assert!(frac_integral_eval(&q, 0.7, 3.5).is_err());
        assert!(frac_integral_eval(&q, 0.0, 1.0).is_err());

        // Jump of 2 at time 0+: S(s) = 2 on (0, 1].
        let tiny = 1e-300;
        let r = path(1.0, &[(tiny, 2.0)]);
        let exact = frac_integral_eval(&r, 0.5, 1.0).unwrap();
        assert!((exact - 2.256758334191025).abs() < 1e-12);
        let oracle = riemann_liouville(|s| r.value(s), 0.5, 1.0, &[tiny], tight()).unwrap();
        assert!((oracle / exact - 1.0).abs() < 1e-8);
    }

    #[test]
    fn eval_matches_defining_integral() {
        let q = path(3.0, &[(0.2, 2.0), (1.1, -1.0), (2.5, 3.0)]);
        for &alpha in &[0.3, 1.0, 1.7] {
            let jumps: Vec<f64> = q.events().iter().map(|e| e.time).collect();
            for &t in &[0.9, 2.0, 3.0] {
                let exact = frac_integral_eval(&q, alpha, t).unwrap();
                let quad = riemann_liouville(|s| q.value(s), alpha, t, &jumps, tight()).unwrap();
                assert!(
                    (exact - quad).abs() < 1e-8 * exact.abs().max(1.0),
                    "α={alpha} t={t}"
                );
            }
        }
    }

    #[test]
    fn semigroup_on_step_paths() {
        let q = path(3.0, &[(0.2, 2.0), (1.1, -1.0), (2.5, 3.0)]);
        let jumps: Vec<f64> = q.events().iter().map(|e| e.time).collect();
        for &(a, b) in &[(0.5, 0.5), (0.3, 1.2), (1.0, 0.7)] {
            let t = 2.8;
            let nested = riemann_liouville(
                |s| frac_integral_eval(&q, b, s).unwrap(),
                a,
                t,
                &jumps,
                tight(),
            )
            .unwrap();
            let direct = frac_integral_eval(&q, a + b, t).unwrap();
            assert!(
                (nested - direct).abs() < 1e-8,
                "α={a} β={b}: {nested} vs {direct}"
            );
        }
    }

    #[test]
    fn moment_examples() {
        let law = Law::homogeneous(&[(1.0, 1.0)]).unwrap();
        let (m, v) = frac_integral_moments(&law, 1.0, 1.0).unwrap();
        assert!((m - 0.5).abs() < 1e-15);
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
        let (m, v) = frac_integral_moments(&law, 1.0, 2.5).unwrap();
        assert!((m - 2.5f64.powi(2) / 2.0).abs() < 1e-12);
        assert!((v - 2.5f64.powi(3) / 3.0).abs() < 1e-10);
        assert_eq!(frac_integral_moments(&law, 0.6, 0.0).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn closed_forms_match_quadrature() {
        let t = 1.7;
        for rate in [
            RateFn::constant(0.8).unwrap(),
            RateFn::power(1.3, -0.4).unwrap(),
            RateFn::power(0.5, 1.5).unwrap(),
        ] {
            for &g in &[0.4, 1.0, 2.3] {
                let closed = rl_cumulative(&rate, g, t).unwrap();
                let quad =
                    riemann_liouville(|s| rate.cumulative(s).unwrap(), g, t, &[], tight()).unwrap();
                assert!((closed / quad - 1.0).abs() < 1e-9, "{rate:?} γ={g}");
            }
        }
    }

    #[test]
    fn covariance_examples() {
        let law = Law::homogeneous(&[(1.0, 1.0)]).unwrap();
        let c = frac_integral_covariance(&law, 1.0, 1.0, 2.0).unwrap();
        assert!((c - 5.0 / 6.0).abs() < 1e-6);
        assert_eq!(frac_integral_covariance(&law, 1.0, 0.0, 2.0).unwrap(), 0.0);
        let mixed = Law::from_pairs([
            (2.0, RateFn::power(1.0, 0.5).unwrap()),
            (-1.0, RateFn::constant(0.4).unwrap()),
        ])
        .unwrap();
        for &alpha in &[0.3, 0.5, 1.0, 1.6] {
            let v = frac_integral_moments(&mixed, alpha, 1.5).unwrap().1;
            let near = frac_integral_covariance(&mixed, alpha, 1.5, 1.5 + 1e-9).unwrap();
            assert!((near / v - 1.0).abs() < 1e-6, "α={alpha}: {near} vs {v}");
            let sym = frac_integral_covariance(&mixed, alpha, 2.0, 0.7).unwrap();
            assert!(
                (sym - frac_integral_covariance(&mixed, alpha, 0.7, 2.0).unwrap()).abs() < 1e-15
            );
        }
    }

    #[test]
    fn running_average_examples() {
        let law = Law::homogeneous(&[(1.0, 1.0), (-1.0, 1.0)]).unwrap();
        let mut a = RngStream::new(9, 0);
        let mut b = RngStream::new(9, 0);
        for _ in 0..100 {
            let y = integral_cp_representation_sample(&law, 1.3, &mut a).unwrap();
            let z = iterated_running_average_sample(&law, 1.3, 1, &mut b).unwrap();
            assert!((y / 1.3 - z).abs() < 1e-12);
        }
        let idle = Law::homogeneous(&[(1.0, 0.0)]).unwrap();
        assert_eq!(
            iterated_running_average_sample(&idle, 2.0, 4, &mut a).unwrap(),
            0.0
        );
        let varying = Law::from_pairs([(1.0, RateFn::power(1.0, 0.5).unwrap())]).unwrap();
        assert!(integral_cp_representation_sample(&varying, 1.0, &mut a).is_err());
    }

    proptest! {
        #[test]
        fn eval_additive_over_event_lists(
            a in prop::collection::vec((0.01..2.0f64, -3.0..3.0f64), 0..6),
            b in prop::collection::vec((0.01..2.0f64, -3.0..3.0f64), 0..6),
            alpha in 0.1..2.5f64,
            t in 0.0..2.0f64,
        ) {
            let a: Vec<_> = a.into_iter().map(|(t, j)| (t, j.round() + 0.5)).collect();
            let b: Vec<_> = b.into_iter().map(|(t, j)| (t + 1e-7, j.round() + 0.5)).collect();
            let both: Vec<_> = a.iter().chain(&b).copied().collect();
            let lhs = frac_integral_eval(&path(2.0, &both), alpha, t).unwrap();
            let rhs = frac_integral_eval(&path(2.0, &a), alpha, t).unwrap() + frac_integral_eval(&path(2.0, &b), alpha, t).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
        }
    }
}
