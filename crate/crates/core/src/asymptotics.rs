//! Monte Carlo suites for the large-time and large-intensity limits:
//! law of large numbers, central limit, Kac (hydrodynamic) limit and
//! correlation decay.
//!
//! Targets come from the declared limits and the closed-form moments, never
//! from the samples. Draws use [`crate::sampling::par_draws`] with fixed seeds, so reports are
//! reproducible bit for bit.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_time, invalid, Error, Result};
use crate::law::JumpLaw;
use crate::sampling::{sample_marginal, try_par_draws};
use crate::stats::{
    central_moments, chi_square_independence, covariance, ks_one_sample, linear_fit, mean_var,
    normal_cdf, quantile_table, Band,
};

/// Normalizing function `f(t) = scale · t^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalizer {
    pub scale: f64,
    pub exponent: f64,
}

impl Normalizer {
    pub fn identity() -> Self {
        Self { scale: 1.0, exponent: 1.0 }
    }

    fn validate(&self) -> Result<()> {
        if self.scale > 0.0 && self.exponent > 0.0 && self.scale.is_finite() && self.exponent.is_finite() {
            Ok(())
        } else {
            Err(invalid("normalizer needs positive scale and exponent so that f(t) grows to infinity"))
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.scale * t.powf(self.exponent)
    }
}

impl Default for Normalizer {
    fn default() -> Self {
        Self::identity()
    }
}

/// One pass/fail line: passes when `|estimate - target| <= band`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitCheck {
    pub experiment: String,
    pub target: f64,
    pub estimate: f64,
    pub band: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
}

impl LimitCheck {
    fn new(experiment: impl Into<String>, target: f64, estimate: f64, band: f64) -> Self {
        let pass = (estimate - target).abs() <= band || estimate == target;
        Self { experiment: experiment.into(), target, estimate, band, pass, p_value: None }
    }

    fn from_band(experiment: impl Into<String>, b: Band) -> Self {
        Self::new(experiment, b.target, b.estimate, b.k * b.std_error)
    }

    /// KS statistic against its critical value at level 0.01.
    fn ks(experiment: impl Into<String>, statistic: f64, critical: f64, p_value: f64) -> Self {
        Self { p_value: Some(p_value), ..Self::new(experiment, 0.0, statistic, critical) }
    }
}

/// A theorem hypothesis and whether the inputs satisfy it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hypothesis {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

impl Hypothesis {
    fn new(name: &str, holds: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), holds, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitReport {
    pub suite: String,
    pub checks: Vec<LimitCheck>,
    pub hypotheses: Vec<Hypothesis>,
    pub pass: bool,
}

impl LimitReport {
    fn new(suite: &str, checks: Vec<LimitCheck>, hypotheses: Vec<Hypothesis>) -> Self {
        let pass = checks.iter().all(|c| c.pass);
        Self { suite: suite.into(), checks, hypotheses, pass }
    }
}

const KS_LEVEL: f64 = 0.01;
const BAND_K: f64 = 4.0;

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid("time grid is empty"));
    }
    grid.iter().try_for_each(|&t| check_time(t))?;
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("time grid must be strictly increasing"));
    }
    Ok(())
}

fn check_paths(paths: usize) -> Result<()> {
    if paths < 2 {
        return Err(invalid("need at least two paths"));
    }
    Ok(())
}

/// Values keyed by jump size, returned in the law's (sorted) size order.
fn by_size<V: Copy>(law: &JumpLaw<f64>, keyed: &[(f64, V)], what: &str) -> Result<Vec<V>> {
    if keyed.len() != law.jumps().len() {
        return Err(invalid(format!(
            "expected one {what} per jump size ({}), got {}",
            law.jumps().len(),
            keyed.len()
        )));
    }
    law.sizes()
        .map(|i| {
            keyed
                .iter()
                .find(|(k, _)| *k == i)
                .map(|(_, v)| *v)
                .ok_or_else(|| invalid(format!("no {what} declared for jump size {i}")))
        })
        .collect()
}

/// Law of large numbers: `S(t)/f(t) → Σ i μ_i` when `Λ_i(t)/f(t) → μ_i`.
/// `mu` pairs each jump size with its limit.
///
/// For each grid time the sample mean of `S(t)/f(t)` is banded at 4σ around
/// `Σ i μ_i`, and the empirical L¹ distance to the limit must shrink along
/// the grid. Only the in-probability/L¹ mode is tested.
pub fn lln_check(
    law: &JumpLaw<f64>,
    f: Normalizer,
    mu: &[(f64, f64)],
    grid: &[f64],
    paths: usize,
    seed: u64,
) -> Result<LimitReport> {
    f.validate()?;
    check_grid(grid)?;
    check_paths(paths)?;
    let mu = by_size(law, mu, "limit μ_i")?;
    let mu = mu.as_slice();
    if mu.iter().any(|&m| !(m >= 0.0)) {
        return Err(invalid("limits μ_i must be nonnegative"));
    }
    let target: f64 = law.sizes().zip(mu).map(|(i, m)| i * m).sum();
    let t_max = grid[grid.len() - 1];
    let cum = law.cumulatives(t_max)?;
    let worst = cum.iter().zip(mu).map(|(l, m)| (l / f.eval(t_max) - m).abs()).fold(0.0, f64::max);
    let hypotheses = vec![
        Hypothesis::new("mu_nonnegative", true, "μ_i >= 0"),
        Hypothesis::new(
            "ratio_near_limit",
            worst <= 0.05 * mu.iter().fold(1.0, |a: f64, &b| a.max(b)),
            format!("max_i |Λ_i(t)/f(t) - μ_i| = {worst:.3e} at t = {t_max}"),
        ),
        Hypothesis::new("almost_sure_mode", false, "not tested: a.s. convergence is not decidable from samples"),
    ];
    let mut checks = Vec::new();
    let mut l1 = Vec::new();
    for (k, &t) in grid.iter().enumerate() {
        let norm = f.eval(t);
        let ratios = try_par_draws(paths, seed, (k * paths) as u64, |rng| Ok(sample_marginal(law, t, rng)? / norm))?;
        checks.push(LimitCheck::from_band(format!("lln mean t={t}"), Band::mean(&ratios, target, BAND_K)));
        l1.push(ratios.iter().map(|r| (r - target).abs()).sum::<f64>() / paths as f64);
    }
    if l1.len() > 1 {
        let rises = l1.windows(2).filter(|w| w[1] > w[0]).count();
        checks.push(LimitCheck::new("lln l1 distance nonincreasing (violations)", 0.0, rises as f64, 0.0));
    }
    Ok(LimitReport::new("lln", checks, hypotheses))
}

/// Declared split `Λ_i(t) = μ_i(t) + σ_i²(t)` for jump size `size`, through
/// its limits `μ_i(t)/√f(t) → mu` and `σ_i²(t)/f(t) → sigma2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CltSplit {
    pub size: f64,
    pub mu: f64,
    pub sigma2: f64,
}

/// Central limit: `S(t)/√f(t) ⇒ N(Σ i μ_i, Σ i² σ_i²)` under `Σ i σ_i² = 0`.
///
/// One-sample KS against the target normal at level 0.01, and
/// `|skewness| < 0.1`. Draws are smoothed by a uniform jitter over one
/// lattice cell before the KS test.
pub fn clt_check(
    law: &JumpLaw<f64>,
    f: Normalizer,
    split: &[CltSplit],
    t: f64,
    paths: usize,
    seed: u64,
) -> Result<LimitReport> {
    f.validate()?;
    check_time(t)?;
    check_paths(paths)?;
    let keyed: Vec<(f64, CltSplit)> = split.iter().map(|s| (s.size, *s)).collect();
    let split = by_size(law, &keyed, "declared split")?;
    let split = split.as_slice();
    if split.iter().any(|s| !(s.sigma2 >= 0.0) || !s.mu.is_finite()) {
        return Err(invalid("declared limits need finite μ_i and σ_i² >= 0"));
    }
    let balance: f64 = law.sizes().zip(split).map(|(i, s)| i * s.sigma2).sum();
    let scale: f64 = law.sizes().zip(split).map(|(i, s)| (i * s.sigma2).abs()).sum();
    if balance.abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(invalid(format!("balance condition Σ i σ_i² = 0 fails: sum is {balance}")));
    }
    let mean: f64 = law.sizes().zip(split).map(|(i, s)| i * s.mu).sum();
    let var: f64 = law.sizes().zip(split).map(|(i, s)| i * i * s.sigma2).sum();
    if !(var > 0.0) {
        return Err(invalid("target normal has zero variance: some σ_i² must be positive"));
    }
    let norm = f.eval(t);
    let cum = law.cumulatives(t)?;
    let worst = cum.iter().zip(split).map(|(l, s)| (l / norm - s.sigma2).abs()).fold(0.0, f64::max);
    let hypotheses = vec![
        Hypothesis::new("balanced_variance", true, "Σ i σ_i² = 0"),
        Hypothesis::new(
            "ratio_near_limit",
            worst <= 0.05 * split.iter().fold(1.0, |a: f64, s| a.max(s.sigma2)),
            format!("max_i |Λ_i(t)/f(t) - σ_i²| = {worst:.3e}"),
        ),
    ];
    let root = norm.sqrt();
    // S(t) lives on the lattice span·Z; a uniform jitter over one cell
    // removes the atoms so KS against the continuous limit is unbiased.
    let span = lattice_span(law);
    let xs = try_par_draws(paths, seed, 0, |rng| {
        let jitter = span * (rng.random::<f64>() - 0.5);
        Ok((sample_marginal(law, t, rng)? + jitter) / root)
    })?;
    let sd = var.sqrt();
    let ks = ks_one_sample(&xs, |x| normal_cdf((x - mean) / sd));
    let [m2, m3, _] = central_moments(&xs);
    let skew = m3 / m2.powf(1.5);
    let checks = vec![
        LimitCheck::ks(format!("clt ks t={t}"), ks.statistic, ks.critical_value(KS_LEVEL), ks.p_value),
        LimitCheck::new(format!("clt skewness t={t}"), 0.0, skew, 0.1),
    ];
    Ok(LimitReport::new("clt", checks, hypotheses))
}

/// Greatest common divisor of the jump sizes.
fn lattice_span(law: &JumpLaw<f64>) -> f64 {
    fn gcd(a: u64, b: u64) -> u64 {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    law.sizes().fold(0, |g, i| gcd(g, i.abs() as u64)) as f64
}

/// Kac limit of `S_α` with rates `α λ_i`, `Σ i λ_i = 0`: `S_α/√α` tends to a
/// Brownian motion with variance rate `Σ i² λ_i`.
///
/// Paths are built from independent increments over the grid cells. Checks:
/// marginal KS at every grid time, zero covariance and a chi-square
/// independence test for the first two increments, and the slope of
/// increment variance against lag (within 5%).
pub fn kac_check(law: &JumpLaw<f64>, alpha: f64, grid: &[f64], paths: usize, seed: u64) -> Result<LimitReport> {
    check_grid(grid)?;
    check_paths(paths)?;
    if !(alpha >= 1.0 && alpha.is_finite()) {
        return Err(invalid(format!("intensity scale must be finite and >= 1, got {alpha}")));
    }
    let rates = law
        .constant_rates()
        .ok_or_else(|| Error::HomogeneousOnly("the Kac suite scales constant rates".into()))?;
    let drift: f64 = law.sizes().zip(&rates).map(|(i, l)| i * l).sum();
    let scale: f64 = law.sizes().zip(&rates).map(|(i, l)| (i * l).abs()).sum();
    if drift.abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(invalid(format!("Kac limit needs Σ i λ_i = 0, got {drift}")));
    }
    let var_rate: f64 = law.sizes().zip(&rates).map(|(i, l)| i * i * l).sum();
    let scaled = law.map_rates(|_, r| r.scaled(alpha))?;
    let hypotheses = vec![
        Hypothesis::new("balanced_drift", true, "Σ i λ_i = 0"),
        Hypothesis::new("homogeneous", true, "rates α λ_i are constant"),
    ];
    let root = alpha.sqrt();
    let mut knots = vec![0.0];
    knots.extend(grid.iter().copied().filter(|&t| t > 0.0));
    // values[p][k] = S_α(knots[k+1]) / √α
    let values: Vec<Vec<f64>> = try_par_draws(paths, seed, 0, |rng| {
        let mut acc = 0.0;
        knots
            .windows(2)
            .map(|w| {
                acc += sample_marginal(&scaled, w[1] - w[0], rng)? / root;
                Ok(acc)
            })
            .collect()
    })?;
    let mut checks = Vec::new();
    if grid[0] == 0.0 {
        checks.push(LimitCheck::new("kac value at t=0", 0.0, 0.0, 0.0));
    }
    for (k, &t) in knots[1..].iter().enumerate() {
        let xs: Vec<f64> = values.iter().map(|v| v[k]).collect();
        let sd = (t * var_rate).sqrt();
        let ks = ks_one_sample(&xs, |x| normal_cdf(x / sd));
        checks.push(LimitCheck::ks(format!("kac ks t={t}"), ks.statistic, ks.critical_value(KS_LEVEL), ks.p_value));
    }
    if knots.len() >= 3 {
        let a: Vec<f64> = values.iter().map(|v| v[0]).collect();
        let b: Vec<f64> = values.iter().map(|v| v[1] - v[0]).collect();
        checks.push(LimitCheck::from_band("kac increment covariance", Band::covariance(&a, &b, 0.0, BAND_K)));
        let chi = chi_square_independence(&quantile_table(&a, &b, 4));
        let mut line = LimitCheck::new("kac increment independence chi-square p >= 0.01", 1.0, 1.0, 0.0);
        line.pass = chi.p_value >= KS_LEVEL;
        line.estimate = chi.p_value;
        line.p_value = Some(chi.p_value);
        checks.push(line);
    }
    // Variance of S(t_j) - S(t_i) against t_j - t_i over all grid pairs.
    let (mut lags, mut vars) = (Vec::new(), Vec::new());
    for j in 1..knots.len() {
        for i in 0..j {
            let d: Vec<f64> = values
                .iter()
                .map(|v| v[j - 1] - if i == 0 { 0.0 } else { v[i - 1] })
                .collect();
            lags.push(knots[j] - knots[i]);
            vars.push(mean_var(&d).1);
        }
    }
    let slope = if lags.len() >= 2 && lags.iter().any(|&l| l != lags[0]) {
        linear_fit(&lags, &vars).0
    } else {
        vars[0] / lags[0]
    };
    checks.push(LimitCheck::new("kac increment variance slope", var_rate, slope, 0.05 * var_rate));
    Ok(LimitReport::new("kac", checks, hypotheses))
}

/// Correlation decay `Cor(S(s), S(t)) ~ t^{-(max α_i + 1)/2}` for constant or
/// power rates.
///
/// Reports the log-log slope of the exact curve `√(V(s)/V(t))` (band 1e-3)
/// and of the empirical correlations (band 0.1), both against the
/// asymptotic exponent.
pub fn correlation_decay_check(law: &JumpLaw<f64>, s: f64, grid: &[f64], paths: usize, seed: u64) -> Result<LimitReport> {
    check_grid(grid)?;
    check_paths(paths)?;
    check_time(s)?;
    if grid.len() < 2 {
        return Err(invalid("need at least two times to fit a slope"));
    }
    if !(s > 0.0 && grid[0] > s) {
        return Err(invalid("need 0 < s < every grid time"));
    }
    let decay = law
        .correlation_decay_exponent()
        .ok_or_else(|| Error::Unsupported("correlation decay needs constant or power rates".into()))?;
    let target = -decay.exponent;
    let hypotheses = vec![
        Hypothesis::new("power_rates", true, "every rate is constant or a power"),
        Hypothesis::new("long_range", decay.long_range, "max α_i < 1"),
    ];
    let vs = law.moments(s)?.variance;
    let logt: Vec<f64> = grid.iter().map(|t| t.ln()).collect();
    let exact = grid
        .iter()
        .map(|&t| Ok(0.5 * (vs / law.moments(t)?.variance).ln()))
        .collect::<Result<Vec<f64>>>()?;
    let mut empirical = Vec::new();
    for (k, &t) in grid.iter().enumerate() {
        let inc = law.increment_law(s)?;
        let pairs = try_par_draws(paths, seed, (k * paths) as u64, |rng| {
            let a = sample_marginal(law, s, rng)?;
            Ok((a, a + sample_marginal(&inc, t - s, rng)?))
        })?;
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let cor = covariance(&a, &b) / (mean_var(&a).1 * mean_var(&b).1).sqrt();
        if !(cor > 0.0) {
            return Err(Error::Numerical(format!("empirical correlation {cor} at t = {t} is not positive")));
        }
        empirical.push(cor.ln());
    }
    let checks = vec![
        LimitCheck::new("correlation slope (exact curve)", target, linear_fit(&logt, &exact).0, 1e-3),
        LimitCheck::new("correlation slope (empirical)", target, linear_fit(&logt, &empirical).0, 0.1),
    ];
    Ok(LimitReport::new("corr", checks, hypotheses))
}

/// Draws of `S(t)/f(t)` for plotting, in draw order.
pub fn normalized_draws(law: &JumpLaw<f64>, f: Normalizer, t: f64, paths: usize, seed: u64) -> Result<Vec<f64>> {
    f.validate()?;
    let norm = f.eval(t);
    try_par_draws(paths, seed, 0, |rng| Ok(sample_marginal(law, t, rng)? / norm))
}
