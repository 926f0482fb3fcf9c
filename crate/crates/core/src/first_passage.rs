//! First-passage times `T_n = inf{t : S(t) >= n}` of non-decreasing laws
//! (all jump sizes positive integers).

use serde::Serialize;

use crate::error::{check_time, invalid, Error, Result};
use crate::genfn::{Domain, GenFn};
use crate::law::{JumpLaw, PMF_TAIL};
use crate::numeric::{integrate_to_infinity, series_exp, series_pow, Tolerance};
use crate::sampling::{sample_path, try_par_draws, NhppMethod};
use crate::special::gamma;
use crate::Scalar;

const CROSS_TOL: f64 = 1e-9;

fn counting_sizes<T: Scalar>(law: &JumpLaw<T>) -> Result<Vec<usize>> {
    let sizes = law.integer_sizes("first passage")?;
    if sizes.iter().any(|&i| i <= 0) {
        return Err(Error::Unsupported(
            "first passage requires positive integer jump sizes".into(),
        ));
    }
    Ok(sizes.into_iter().map(|i| i as usize).collect())
}

fn check_level(n: u64) -> Result<()> {
    if n == 0 {
        return Err(invalid("level must be a positive integer"));
    }
    Ok(())
}

/// `Q_t(u) = Σ_n uⁿ P{T_n > t} = u/(1-u) · G_t(u)` on `u ∈ (0, 1)`.
pub fn survival_gf<T: Scalar>(law: &JumpLaw<T>, t: T) -> Result<GenFn<T>> {
    counting_sizes(law)?;
    let g = law.pgf(t)?;
    Ok(GenFn::new(Domain::open(T::zero(), T::one()), move |u| {
        u / (T::one() - u) * g.eval(u).expect("pgf defined on the real line")
    }))
}

/// `P{T_n > t}` for `n = 1..=n_max`, as partial sums of the pmf of `S(t)`.
///
/// The same values are extracted from the coefficients of `G_t` and the two
/// are required to agree to `1e-9`.
pub fn fpt_survival_levels<T: Scalar>(law: &JumpLaw<T>, n_max: u64, t: T) -> Result<Vec<T>> {
    check_level(n_max)?;
    let sizes = counting_sizes(law)?;
    let table = law.pmf_table(t)?;
    let mut acc = T::zero();
    let from_pmf: Vec<T> = (0..n_max as i64)
        .map(|k| {
            acc = acc + table.prob(k);
            acc.min(T::one())
        })
        .collect();

    let cum = law.cumulatives(t)?;
    let total: T = cum.iter().copied().sum();
    if (-total).exp() > T::zero() {
        let mut p = vec![T::zero(); sizes.iter().copied().max().unwrap_or(0) + 1];
        p[0] = -total;
        for (&i, &l) in sizes.iter().zip(&cum) {
            p[i] = p[i] + l;
        }
        let coef = series_exp(&p, n_max as usize);
        let mut acc = T::zero();
        for (k, &q) in from_pmf.iter().enumerate() {
            acc = acc + coef[k];
            if (acc - q).abs() > T::lit(CROSS_TOL) {
                return Err(Error::Numerical(format!(
                    "level {}: pmf sum {q} and series coefficient sum {acc} disagree",
                    k + 1
                )));
            }
        }
    } else {
        log::debug!("exp(-{total}) underflows; skipping the series cross-check");
    }
    Ok(from_pmf)
}

/// `P{T_n > t} = Σ_{k<n} P{S(t) = k}`.
pub fn fpt_survival<T: Scalar>(law: &JumpLaw<T>, n: u64, t: T) -> Result<T> {
    Ok(*fpt_survival_levels(law, n, t)?.last().expect("n >= 1"))
}

fn moment_checks<T: Scalar>(law: &JumpLaw<T>, r: T) -> Result<(Vec<usize>, Vec<T>)> {
    let sizes = counting_sizes(law)?;
    if !(r > T::zero()) {
        return Err(invalid("moment order r must be positive"));
    }
    let rates = law
        .constant_rates()
        .ok_or_else(|| Error::HomogeneousOnly("closed form requires constant rates".into()))?;
    if rates.iter().all(|&l| l == T::zero()) {
        return Err(Error::Domain(
            "all rates vanish; no level is ever reached".into(),
        ));
    }
    Ok((sizes, rates))
}

/// `Σ_n uⁿ E T_nʳ = u Γ(r+1)/(1-u) · (Σ λ_i (1 - u^i))^{-r}` for constant
/// rates.
pub fn fpt_moment_gf<T: Scalar>(law: &JumpLaw<T>, r: T, u: T) -> Result<T> {
    let (sizes, rates) = moment_checks(law, r)?;
    if !(u > T::zero() && u < T::one()) {
        return Err(Error::Domain(format!("u = {u} outside (0, 1)")));
    }
    let a: T = sizes
        .iter()
        .zip(&rates)
        .map(|(&i, &l)| l * (T::one() - u.powi(i as i32)))
        .sum();
    Ok(u * gamma(r + T::one()) / (T::one() - u) * a.powf(-r))
}

/// `E T_nʳ` for `n = 1..=n_max` from the coefficients of the closed-form
/// moment generating function (constant rates).
pub fn fpt_moments<T: Scalar>(law: &JumpLaw<T>, r: T, n_max: u64) -> Result<Vec<T>> {
    check_level(n_max)?;
    let (sizes, rates) = moment_checks(law, r)?;
    let n = n_max as usize;
    let mut a = vec![T::zero(); sizes.iter().copied().max().unwrap_or(0).max(n) + 1];
    for (&i, &l) in sizes.iter().zip(&rates) {
        a[0] = a[0] + l;
        a[i] = a[i] - l;
    }
    let b = series_pow(&a, -r, n);
    let scale = gamma(r + T::one());
    let mut acc = T::zero();
    Ok(b[..n]
        .iter()
        .map(|&bk| {
            acc = acc + bk;
            scale * acc
        })
        .collect())
}

/// General-rate form `Σ_n uⁿ E T_nʳ = u r/(1-u) ∫_0^∞ t^{r-1} G_t(u) dt` by
/// quadrature (relative tolerance `1e-8`). The exchange of derivative and
/// integral behind this form is assumed, so results are cross-checked only
/// by simulation.
pub fn fpt_moment_gf_quadrature<T: Scalar>(law: &JumpLaw<T>, r: T, u: T) -> Result<T> {
    counting_sizes(law)?;
    if !(r > T::zero()) {
        return Err(invalid("moment order r must be positive"));
    }
    if !(u > T::zero() && u < T::one()) {
        return Err(Error::Domain(format!("u = {u} outside (0, 1)")));
    }
    if law.jumps().iter().all(|j| j.rate.total_mass().is_finite()) {
        return Err(Error::Domain(
            "finite total rate mass: some levels are never reached".into(),
        ));
    }
    // With t = s^{1/r}, r t^{r-1} dt = ds removes the singularity at 0.
    let inv_r = T::one() / r;
    let integral = integrate_to_infinity(
        |s: T| {
            let t = s.powf(inv_r);
            law.pgf(t)
                .and_then(|g| g.eval(u))
                .unwrap_or_else(|_| T::nan())
        },
        T::zero(),
        Tolerance::new(T::lit(1e-14), T::lit(1e-10)),
    )?;
    Ok(u / (T::one() - u) * integral)
}

/// First-passage times drawn by simulation, right-censored at the horizon.
#[derive(Debug, Clone, Serialize)]
pub struct FptSample {
    pub level: u64,
    pub horizon: f64,
    /// Observed passage times, sorted.
    pub times: Vec<f64>,
    pub censored: usize,
}

impl FptSample {
    pub fn paths(&self) -> usize {
        self.times.len() + self.censored
    }

    pub fn censored_fraction(&self) -> f64 {
        self.censored as f64 / self.paths().max(1) as f64
    }

    /// Empirical `P{T_n <= t}` for `t` up to the horizon.
    pub fn cdf(&self, t: f64) -> f64 {
        self.times.partition_point(|&x| x <= t) as f64 / self.paths().max(1) as f64
    }
}

/// Simulates `paths` paths on `[0, horizon]` (stream `k` for path `k`) and
/// records the first time each reaches `n`.
pub fn fpt_mc(
    law: &JumpLaw<f64>,
    n: u64,
    horizon: f64,
    paths: usize,
    seed: u64,
) -> Result<FptSample> {
    check_level(n)?;
    counting_sizes(law)?;
    check_time(horizon)?;
    let level = n as f64;
    let hits = try_par_draws(paths, seed, 0, |rng| {
        Ok(sample_path(law, horizon, NhppMethod::Auto, rng)?.first_passage(level))
    })?;
    let mut times: Vec<f64> = hits.iter().flatten().copied().collect();
    times.sort_by(f64::total_cmp);
    let censored = paths - times.len();
    Ok(FptSample {
        level: n,
        horizon,
        times,
        censored,
    })
}

/// Comparison of `Σ uⁿ P{T_n <= t}` computed from the pmf of `S(t)` with
/// `u/(u-1) (G_t(u) - 1)`.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub points: Vec<IdentityPoint>,
    pub max_deviation: f64,
    /// Bound on the contribution of pmf mass cut off by truncation.
    pub truncation_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityPoint {
    pub u: f64,
    pub lhs: f64,
    pub rhs: f64,
}

pub fn fpt_gf_cdf_identity_check(law: &JumpLaw<f64>, t: f64, us: &[f64]) -> Result<IdentityReport> {
    let sizes = counting_sizes(law)?;
    if let Some(&u) = us.iter().find(|&&u| !(u > 0.0 && u < 1.0)) {
        return Err(Error::Domain(format!("u = {u} outside (0, 1)")));
    }
    let table = law.pmf_table(t)?;
    // P{T_n <= t} = P{S(t) >= n}.
    let max = table.max().max(0);
    let mut tail = vec![0.0; max as usize + 2];
    for k in (1..=max).rev() {
        tail[k as usize] = tail[k as usize + 1] + table.prob(k);
    }
    let g = law.pgf(t)?;
    let mut points = Vec::with_capacity(us.len());
    let mut max_deviation: f64 = 0.0;
    let mut truncation_bound: f64 = 0.0;
    for &u in us {
        let mut lhs = 0.0;
        let mut un = 1.0;
        for tk in tail.iter().take(max as usize + 1).skip(1) {
            un *= u;
            lhs += un * tk;
        }
        let rhs = u / (u - 1.0) * (g.eval(u)? - 1.0);
        max_deviation = max_deviation.max((lhs - rhs).abs());
        truncation_bound = truncation_bound.max(sizes.len() as f64 * PMF_TAIL * u / (1.0 - u));
        points.push(IdentityPoint { u, lhs, rhs });
    }
    Ok(IdentityReport {
        points,
        max_deviation,
        truncation_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::RateFn;
    use crate::stats::{ks_one_sample, Band};
    use proptest::prelude::*;

    type Law = JumpLaw<f64>;

    #[test]
    fn survival_gf_examples() {
        let law = Law::homogeneous(&[(1.0, 1.0), (3.0, 0.5)]).unwrap();
        let q0 = survival_gf(&law, 0.0).unwrap();
        for &u in &[0.1, 0.5, 0.9] {
            assert!((q0.eval(u).unwrap() - u / (1.0 - u)).abs() < 1e-15);
        }
        let q = survival_gf(&law, 1.3).unwrap();
        let g = law.pgf(1.3).unwrap();
        for k in 1..20 {
            let u = k as f64 / 20.0;
            let lhs = q.eval(u).unwrap() * (1.0 - u) / u;
            assert!((lhs - g.eval(u).unwrap()).abs() < 1e-12);
        }
        assert!(q.eval(1.0).is_err());
        assert!(survival_gf(&Law::classic_skellam(1.0, 1.0).unwrap(), 1.0).is_err());

        let poisson = Law::homogeneous(&[(1.0, 1.0)]).unwrap();
        let h = 1e-4;
        let q = survival_gf(&poisson, 0.7).unwrap();
        let slope = (q.eval(h).unwrap() - q.eval(h / 2.0).unwrap()) / (h / 2.0);
        assert!((slope - (-0.7f64).exp()).abs() < 1e-3);
        assert!((fpt_survival(&poisson, 1, 0.7).unwrap() - (-0.7f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn survival_examples() {
        let law = Law::homogeneous(&[(1.0, 1.0), (2.0, 1.0)]).unwrap();
        let q = fpt_survival(&law, 2, 1.0).unwrap();
        assert!((q - 2.0 * (-2.0f64).exp()).abs() < 1e-12);
        assert!((q - 0.270671).abs() < 1e-6);
        assert_eq!(fpt_survival(&law, 5, 0.0).unwrap(), 1.0);
        let varying = Law::from_pairs([
            (1.0, RateFn::power(2.0, 0.5).unwrap()),
            (2.0, RateFn::constant(0.3).unwrap()),
        ])
        .unwrap();
        let total = varying.total_cumulative(1.7).unwrap();
        assert!((fpt_survival(&varying, 1, 1.7).unwrap() - (-total).exp()).abs() < 1e-14);
        assert!(fpt_survival(&law, 0, 1.0).is_err());
    }

    #[test]
    fn survival_monotone_on_grid() {
        let law = Law::from_pairs([
            (1.0, RateFn::power(1.0, 0.3).unwrap()),
            (3.0, RateFn::constant(0.4).unwrap()),
        ])
        .unwrap();
        let ts = [0.0, 0.5, 1.0, 2.0, 4.0];
        let grid: Vec<Vec<f64>> = ts
            .iter()
            .map(|&t| fpt_survival_levels(&law, 12, t).unwrap())
            .collect();
        for row in &grid {
            assert!(row.windows(2).all(|w| w[1] >= w[0]));
        }
        for n in 0..12 {
            assert!(grid.windows(2).all(|w| w[1][n] <= w[0][n]));
        }
    }

    #[test]
    fn survival_satisfies_difference_differential_relation() {
        let law = Law::from_pairs([
            (1.0, RateFn::power(1.5, 0.5).unwrap()),
            (2.0, RateFn::constant(0.7).unwrap()),
        ])
        .unwrap();
        let h = 1e-4;
        // Levels m <= 0 are passed at time 0, so P{T_m > t} = 0.
        let q = |n: i64, t: f64| {
            if n <= 0 {
                0.0
            } else {
                fpt_survival(&law, n as u64, t).unwrap()
            }
        };
        for &t in &[0.4, 1.0, 2.5] {
            for n in 1..8 {
                let deriv = (q(n, t + h) - q(n, t - h)) / (2.0 * h);
                let total = law.total_rate(t);
                let shift: f64 = law
                    .jumps()
                    .iter()
                    .map(|j| j.rate.rate(t) * q(n - j.size as i64, t))
                    .sum();
                assert!((deriv + total * q(n, t) - shift).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn moment_gf_examples() {
        let poisson = Law::homogeneous(&[(1.0, 1.0)]).unwrap();
        for &u in &[0.2, 0.5] {
            let v = fpt_moment_gf(&poisson, 1.0, u).unwrap();
            assert!((v - u / (1.0 - u).powi(2)).abs() < 1e-12);
        }
        let means = fpt_moments(&poisson, 1.0, 5).unwrap();
        for (n, m) in means.iter().enumerate() {
            assert!((m - (n + 1) as f64).abs() < 1e-12);
        }
        // E T_n² = n(n+1) for unit-rate Poisson arrivals.
        let second = fpt_moments(&poisson, 2.0, 4).unwrap();
        for (n, m) in second.iter().enumerate() {
            let n = (n + 1) as f64;
            assert!((m - n * (n + 1.0)).abs() < 1e-10);
        }
        let law = Law::homogeneous(&[(1.0, 0.6), (3.0, 0.9)]).unwrap();
        for &r in &[0.5, 1.0, 2.5] {
            let lead = fpt_moment_gf(&law, r, 1e-7).unwrap() / 1e-7;
            let oracle = gamma(r + 1.0) * 1.5f64.powf(-r);
            assert!((lead / oracle - 1.0).abs() < 1e-6);
            assert!((fpt_moments(&law, r, 1).unwrap()[0] / oracle - 1.0).abs() < 1e-12);
        }
        let varying = Law::from_pairs([(1.0, RateFn::power(1.0, 0.5).unwrap())]).unwrap();
        assert!(matches!(
            fpt_moment_gf(&varying, 1.0, 0.5),
            Err(Error::HomogeneousOnly(_))
        ));
    }

    #[test]
    fn moment_gf_quadrature_matches_closed_form() {
        let law = Law::homogeneous(&[(1.0, 0.6), (2.0, 0.9)]).unwrap();
        for &r in &[0.5, 1.0, 2.0] {
            for &u in &[0.1, 0.5, 0.8] {
                let a = fpt_moment_gf(&law, r, u).unwrap();
                let b = fpt_moment_gf_quadrature(&law, r, u).unwrap();
                assert!((a / b - 1.0).abs() < 1e-8, "r={r} u={u}: {a} vs {b}");
            }
        }
        // Λ(t) = t²: T_1 has E T_1 = Γ(3/2).
        let varying = Law::from_pairs([(1.0, RateFn::power(2.0, 1.0).unwrap())]).unwrap();
        let u = 1e-6;
        let lead = fpt_moment_gf_quadrature(&varying, 1.0, u).unwrap() / u;
        assert!((lead - gamma(1.5)).abs() < 1e-5);
        let finite = Law::from_pairs([(
            1.0,
            RateFn::piecewise(vec![0.0, 1.0], vec![1.0, 0.0]).unwrap(),
        )])
        .unwrap();
        assert!(fpt_moment_gf_quadrature(&finite, 1.0, 0.5).is_err());
    }

    #[test]
    fn mc_examples() {
        let poisson = Law::homogeneous(&[(1.0, 1.0)]).unwrap();
        let s = fpt_mc(&poisson, 1, 50.0, 10_000, 11).unwrap();
        assert_eq!(s.censored, 0);
        let ks = ks_one_sample(&s.times, |t| 1.0 - (-t).exp());
        assert!(ks.p_value > 0.01);

        let idle = Law::from_pairs([(1.0, RateFn::zero())]).unwrap();
        let s = fpt_mc(&idle, 1, 5.0, 50, 1).unwrap();
        assert_eq!(s.censored_fraction(), 1.0);

        let law = Law::homogeneous(&[(1.0, 1.0), (2.0, 1.0)]).unwrap();
        let s = fpt_mc(&law, 2, 1.0, 100_000, 12).unwrap();
        let p = 1.0 - fpt_survival(&law, 2, 1.0).unwrap();
        let hit: Vec<f64> = (0..s.paths())
            .map(|k| if k < s.times.len() { 1.0 } else { 0.0 })
            .collect();
        assert!(Band::mean(&hit, p, 4.0).pass);

        // Jumps of size 2 only: the first jump reaches level 1, so E T_1 = 1.
        let twos = Law::homogeneous(&[(2.0, 1.0)]).unwrap();
        let s = fpt_mc(&twos, 1, 60.0, 100_000, 13).unwrap();
        assert_eq!(s.censored, 0);
        let m = fpt_moments(&twos, 1.0, 1).unwrap()[0];
        assert!(Band::mean(&s.times, m, 4.0).pass);
    }

    #[test]
    fn identity_examples() {
        let poisson = Law::homogeneous(&[(1.0, 1.0)]).unwrap();
        let r = fpt_gf_cdf_identity_check(&poisson, 0.0, &[0.3, 0.6]).unwrap();
        assert!(r.points.iter().all(|p| p.lhs == 0.0 && p.rhs == 0.0));
        let r = fpt_gf_cdf_identity_check(&poisson, 1.0, &[0.5]).unwrap();
        assert!(r.max_deviation < 1e-9);
        assert!(fpt_gf_cdf_identity_check(&poisson, 1.0, &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn identity_holds_for_random_laws(
            rates in prop::collection::vec(0.0..2.0f64, 1..4),
            t in 0.0..3.0f64,
            us in prop::collection::vec(0.01..0.95f64, 20),
        ) {
            let pairs: Vec<(f64, f64)> = rates.iter().enumerate().map(|(k, &l)| ((k + 1) as f64, l)).collect();
            let law = Law::homogeneous(&pairs).unwrap();
            let r = fpt_gf_cdf_identity_check(&law, t, &us).unwrap();
            prop_assert!(r.max_deviation < 1e-8);
        }
    }
}
