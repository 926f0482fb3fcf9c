//! Bernstein functions, the matching subordinators, and the inverse stable
//! subordinator.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Gamma, InverseGaussian};
use serde::{Deserialize, Serialize};

use crate::error::{check_time, invalid, Error, Result};
use crate::sampling::{exp1, poisson_count};
use crate::special::{gamma, ln_gamma, poisson_pmf};
use crate::Scalar;

pub use crate::special::mittag_leffler;

/// Serialized form of a Bernstein function, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
pub enum BernsteinSpec<T> {
    /// `f(x) = x^α`, `α ∈ (0, 1)`.
    Stable { alpha: T },
    /// `f(x) = a ln(1 + x/b)`.
    Gamma { a: T, b: T },
    /// `f(x) = δ(√(2x + γ²) - γ)`.
    InverseGaussian { delta: T, gamma: T },
    /// `f(x) = (x + θ)^α - θ^α`.
    TemperedStable { alpha: T, theta: T },
    /// `f(x) = c(1 - e^{-x w})`: Lévy measure `c δ_w`.
    PoissonMeasure { rate: T, atom: T },
    /// Pointwise sum.
    Sum { terms: Vec<BernsteinSpec<T>> },
}

/// A validated Bernstein function with zero drift and killing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BernsteinSpec<T>", into = "BernsteinSpec<T>", bound = "T: Scalar")]
pub struct BernsteinFn<T: Scalar>(BernsteinSpec<T>);

impl<T: Scalar> TryFrom<BernsteinSpec<T>> for BernsteinFn<T> {
    type Error = Error;

    fn try_from(spec: BernsteinSpec<T>) -> Result<Self> {
        validate(&spec)?;
        Ok(Self(spec))
    }
}

impl<T: Scalar> From<BernsteinFn<T>> for BernsteinSpec<T> {
    fn from(f: BernsteinFn<T>) -> Self {
        f.0
    }
}

fn positive<T: Scalar>(name: &str, x: T) -> Result<()> {
    if x.is_finite() && x > T::zero() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {x}")))
    }
}

fn stable_index<T: Scalar>(alpha: T) -> Result<()> {
    if alpha > T::zero() && alpha < T::one() {
        Ok(())
    } else {
        Err(invalid(format!("stability index must lie in (0, 1), got {alpha}")))
    }
}

fn validate<T: Scalar>(spec: &BernsteinSpec<T>) -> Result<()> {
    match spec {
        BernsteinSpec::Stable { alpha } => stable_index(*alpha),
        BernsteinSpec::Gamma { a, b } => positive("gamma a", *a).and(positive("gamma b", *b)),
        BernsteinSpec::InverseGaussian { delta, gamma } => {
            positive("inverse-gaussian delta", *delta).and(positive("inverse-gaussian gamma", *gamma))
        }
        BernsteinSpec::TemperedStable { alpha, theta } => stable_index(*alpha).and(positive("tempered theta", *theta)),
        BernsteinSpec::PoissonMeasure { rate, atom } => {
            positive("poisson-measure rate", *rate).and(positive("poisson-measure atom", *atom))
        }
        BernsteinSpec::Sum { terms } => {
            if terms.is_empty() {
                return Err(invalid("sum of Bernstein functions needs at least one term"));
            }
            terms.iter().try_for_each(validate)
        }
    }
}

impl<T: Scalar> BernsteinFn<T> {
    pub fn new(spec: BernsteinSpec<T>) -> Result<Self> {
        Self::try_from(spec)
    }

    /// The same function with `f64` parameters.
    pub fn cast_f64(&self) -> BernsteinFn<f64> {
        BernsteinFn(to_f64(&self.0))
    }

    pub fn stable(alpha: T) -> Result<Self> {
        Self::new(BernsteinSpec::Stable { alpha })
    }

    pub fn gamma(a: T, b: T) -> Result<Self> {
        Self::new(BernsteinSpec::Gamma { a, b })
    }

    pub fn inverse_gaussian(delta: T, gamma: T) -> Result<Self> {
        Self::new(BernsteinSpec::InverseGaussian { delta, gamma })
    }

    pub fn tempered_stable(alpha: T, theta: T) -> Result<Self> {
        Self::new(BernsteinSpec::TemperedStable { alpha, theta })
    }

    pub fn poisson_measure(rate: T, atom: T) -> Result<Self> {
        Self::new(BernsteinSpec::PoissonMeasure { rate, atom })
    }

    pub fn sum(terms: Vec<BernsteinFn<T>>) -> Result<Self> {
        Self::new(BernsteinSpec::Sum { terms: terms.into_iter().map(|f| f.0).collect() })
    }

    pub fn spec(&self) -> &BernsteinSpec<T> {
        &self.0
    }

    /// Summands of a sum; a one-element list for the other kinds.
    pub fn terms(&self) -> Vec<BernsteinFn<T>> {
        match &self.0 {
            BernsteinSpec::Sum { terms } => terms.iter().map(|s| Self(s.clone())).collect(),
            _ => vec![self.clone()],
        }
    }

    /// `f(x) = ∫ (1 - e^{-x w}) ν(dw)`.
    pub fn eval(&self, x: T) -> Result<T> {
        if !(x >= T::zero()) {
            return Err(Error::Domain(format!("Bernstein functions take x >= 0, got {x}")));
        }
        Ok(self.eval_unchecked(x))
    }

    /// Infimum of the arguments where `f` extends analytically, i.e. where
    /// `E e^{-x H(1)}` is finite: `x >= -abscissa` (strict for gamma).
    pub fn abscissa(&self) -> T {
        match &self.0 {
            BernsteinSpec::Stable { .. } => T::zero(),
            BernsteinSpec::Gamma { b, .. } => *b,
            BernsteinSpec::InverseGaussian { gamma, .. } => *gamma * *gamma / T::lit(2.0),
            BernsteinSpec::TemperedStable { theta, .. } => *theta,
            BernsteinSpec::PoissonMeasure { .. } => T::infinity(),
            BernsteinSpec::Sum { .. } => {
                self.terms().iter().map(|f| f.abscissa()).fold(T::infinity(), |a, b| a.min(b))
            }
        }
    }

    /// `f(x) = -ln E e^{-x H(1)}` continued to negative `x` down to
    /// `-abscissa()`; needed for pgfs of negative jump sizes at `u < 1`.
    pub fn eval_extended(&self, x: T) -> Result<T> {
        let a = self.abscissa();
        let gamma_like = matches!(self.0, BernsteinSpec::Gamma { .. });
        let ok = x.is_finite() && if gamma_like { x > -a } else { x >= -a };
        if !ok {
            return Err(Error::Domain(format!(
                "Laplace exponent undefined at {x}: E e^(-x H) diverges below -{a}"
            )));
        }
        Ok(match &self.0 {
            BernsteinSpec::Sum { .. } => {
                let mut acc = T::zero();
                for f in self.terms() {
                    acc = acc + f.eval_extended(x)?;
                }
                acc
            }
            _ => self.eval_unchecked(x),
        })
    }

    fn eval_unchecked(&self, x: T) -> T {
        match &self.0 {
            BernsteinSpec::Stable { alpha } => x.powf(*alpha),
            BernsteinSpec::Gamma { a, b } => *a * (x / *b).ln_1p(),
            BernsteinSpec::InverseGaussian { delta, gamma } => {
                // δ(√(2x+γ²) - γ) written without cancellation.
                let two_x = x + x;
                *delta * two_x / ((two_x + *gamma * *gamma).sqrt() + *gamma)
            }
            BernsteinSpec::TemperedStable { alpha, theta } => {
                theta.powf(*alpha) * ((*alpha * (x / *theta).ln_1p()).exp_m1())
            }
            BernsteinSpec::PoissonMeasure { rate, atom } => -*rate * (-x * *atom).exp_m1(),
            BernsteinSpec::Sum { .. } => self.terms().iter().map(|f| f.eval_unchecked(x)).sum(),
        }
    }

    /// Density of the Lévy measure at `w > 0`; `None` for atomic measures.
    pub fn levy_density(&self, w: T) -> Option<T> {
        if !(w > T::zero()) {
            return Some(T::zero());
        }
        match &self.0 {
            BernsteinSpec::Stable { alpha } => {
                Some(*alpha / gamma(T::one() - *alpha) * w.powf(-T::one() - *alpha))
            }
            BernsteinSpec::Gamma { a, b } => Some(*a / w * (-*b * w).exp()),
            BernsteinSpec::InverseGaussian { delta, gamma } => Some(
                *delta / (T::lit(2.0) * T::PI()).sqrt()
                    * w.powf(T::lit(-1.5))
                    * (-*gamma * *gamma * w / T::lit(2.0)).exp(),
            ),
            BernsteinSpec::TemperedStable { alpha, theta } => Some(
                *alpha / gamma(T::one() - *alpha) * w.powf(-T::one() - *alpha) * (-*theta * w).exp(),
            ),
            BernsteinSpec::PoissonMeasure { .. } => None,
            BernsteinSpec::Sum { .. } => {
                self.terms().iter().map(|f| f.levy_density(w)).sum::<Option<T>>()
            }
        }
    }

    /// Human-readable form of `ν(dw)`.
    pub fn levy_measure_description(&self) -> String {
        match &self.0 {
            BernsteinSpec::Stable { alpha } => format!("{alpha}/Γ(1-{alpha}) w^(-1-{alpha}) dw"),
            BernsteinSpec::Gamma { a, b } => format!("{a} w^-1 e^(-{b} w) dw"),
            BernsteinSpec::InverseGaussian { delta, gamma } => {
                format!("{delta}/√(2π) w^(-3/2) e^(-{gamma}² w/2) dw")
            }
            BernsteinSpec::TemperedStable { alpha, theta } => {
                format!("{alpha}/Γ(1-{alpha}) w^(-1-{alpha}) e^(-{theta} w) dw")
            }
            BernsteinSpec::PoissonMeasure { rate, atom } => format!("{rate} δ_{atom}"),
            BernsteinSpec::Sum { .. } => {
                self.terms().iter().map(|f| f.levy_measure_description()).collect::<Vec<_>>().join(" + ")
            }
        }
    }

    /// Whether `ν` has finite total mass (compound Poisson subordinator).
    pub fn is_finite_measure(&self) -> bool {
        match &self.0 {
            BernsteinSpec::PoissonMeasure { .. } => true,
            BernsteinSpec::Sum { .. } => self.terms().iter().all(|f| f.is_finite_measure()),
            _ => false,
        }
    }

    /// `ν((0, ∞))`, infinite for the non-atomic kinds.
    pub fn total_mass(&self) -> T {
        match &self.0 {
            BernsteinSpec::PoissonMeasure { rate, .. } => *rate,
            BernsteinSpec::Sum { .. } => self.terms().iter().map(|f| f.total_mass()).sum(),
            _ => T::infinity(),
        }
    }

    /// `f'(0+) = ∫ w ν(dw) = E H(1)`.
    pub fn mean_rate(&self) -> T {
        match &self.0 {
            BernsteinSpec::Stable { .. } => T::infinity(),
            BernsteinSpec::Gamma { a, b } => *a / *b,
            BernsteinSpec::InverseGaussian { delta, gamma } => *delta / *gamma,
            BernsteinSpec::TemperedStable { alpha, theta } => *alpha * theta.powf(*alpha - T::one()),
            BernsteinSpec::PoissonMeasure { rate, atom } => *rate * *atom,
            BernsteinSpec::Sum { .. } => self.terms().iter().map(|f| f.mean_rate()).sum(),
        }
    }

    /// `-f''(0+) = ∫ w² ν(dw) = Var H(1)`.
    pub fn variance_rate(&self) -> T {
        match &self.0 {
            BernsteinSpec::Stable { .. } => T::infinity(),
            BernsteinSpec::Gamma { a, b } => *a / (*b * *b),
            BernsteinSpec::InverseGaussian { delta, gamma } => *delta / gamma.powi(3),
            BernsteinSpec::TemperedStable { alpha, theta } => {
                *alpha * (T::one() - *alpha) * theta.powf(*alpha - T::lit(2.0))
            }
            BernsteinSpec::PoissonMeasure { rate, atom } => *rate * *atom * *atom,
            BernsteinSpec::Sum { .. } => self.terms().iter().map(|f| f.variance_rate()).sum(),
        }
    }

    /// `∫ e^{-λw} (λw)^m / m! ν(dw)` for `m >= 1`: the rate of an `m`-fold
    /// jump when a rate-`λ` Poisson count is run on this subordinator's clock.
    pub fn poisson_mixture_intensity(&self, lambda: T, m: u64) -> Result<T> {
        if m == 0 {
            return Err(invalid("mixture intensities start at m = 1"));
        }
        if !(lambda >= T::zero()) {
            return Err(invalid(format!("rate must be nonnegative, got {lambda}")));
        }
        if lambda == T::zero() {
            return Ok(T::zero());
        }
        let mf = T::from_u64(m).unwrap();
        let ln_mfact = ln_gamma(mf + T::one());
        Ok(match &self.0 {
            // α/Γ(1-α) Γ(m-α)/m! λ^α
            BernsteinSpec::Stable { alpha } => {
                let a = *alpha;
                a / gamma(T::one() - a) * (ln_gamma(mf - a) - ln_mfact + a * lambda.ln()).exp()
            }
            // (a/m) (λ/(λ+b))^m
            BernsteinSpec::Gamma { a, b } => *a / mf * (mf * (lambda / (lambda + *b)).ln()).exp(),
            // δ/√(2π) Γ(m-½) (λ+γ²/2)^{½-m} λ^m/m!
            BernsteinSpec::InverseGaussian { delta, gamma: g } => {
                let half = T::lit(0.5);
                let base = lambda + *g * *g * half;
                *delta / (T::lit(2.0) * T::PI()).sqrt()
                    * (ln_gamma(mf - half) + (half - mf) * base.ln() + mf * lambda.ln() - ln_mfact).exp()
            }
            // α/Γ(1-α) Γ(m-α) (λ+θ)^{α-m} λ^m/m!
            BernsteinSpec::TemperedStable { alpha, theta } => {
                let a = *alpha;
                a / gamma(T::one() - a)
                    * (ln_gamma(mf - a) + (a - mf) * (lambda + *theta).ln() + mf * lambda.ln() - ln_mfact).exp()
            }
            BernsteinSpec::PoissonMeasure { rate, atom } => *rate * poisson_pmf(lambda * *atom, m),
            BernsteinSpec::Sum { .. } => {
                let mut acc = T::zero();
                for f in self.terms() {
                    acc = acc + f.poisson_mixture_intensity(lambda, m)?;
                }
                acc
            }
        })
    }
}

/// Standard positive stable variable with `E e^{-μS} = e^{-μ^α}`
/// (Kanter's representation).
pub fn sample_positive_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u = PI * rng.random::<f64>();
    let w = exp1(rng);
    let a = (alpha * u).sin() / u.sin().powf(1.0 / alpha);
    let b = (((1.0 - alpha) * u).sin() / w).powf((1.0 - alpha) / alpha);
    a * b
}

fn increment_f64<R: Rng + ?Sized>(spec: &BernsteinSpec<f64>, dt: f64, rng: &mut R) -> Result<f64> {
    if dt == 0.0 {
        return Ok(0.0);
    }
    Ok(match spec {
        BernsteinSpec::Stable { alpha } => dt.powf(1.0 / alpha) * sample_positive_stable(*alpha, rng),
        BernsteinSpec::Gamma { a, b } => Gamma::new(a * dt, 1.0 / b)
            .map_err(|e| invalid(format!("gamma increment: {e}")))?
            .sample(rng),
        BernsteinSpec::InverseGaussian { delta, gamma } => {
            let m = delta * dt / gamma;
            let shape = (delta * dt).powi(2);
            InverseGaussian::new(m, shape)
                .map_err(|e| invalid(format!("inverse-Gaussian increment: {e}")))?
                .sample(rng)
        }
        BernsteinSpec::TemperedStable { alpha, theta } => {
            // Exponential tilting of a stable increment, accepted with
            // probability e^{-θ S}; splitting dt keeps the acceptance rate
            // e^{-dt θ^α / k} at least e^{-1}.
            let pieces = (dt * theta.powf(*alpha)).ceil().max(1.0);
            let h = dt / pieces;
            let scale = h.powf(1.0 / alpha);
            let mut acc = 0.0;
            for _ in 0..pieces as u64 {
                loop {
                    let s = scale * sample_positive_stable(*alpha, rng);
                    if rng.random::<f64>() <= (-theta * s).exp() {
                        acc += s;
                        break;
                    }
                }
            }
            acc
        }
        BernsteinSpec::PoissonMeasure { rate, atom } => atom * poisson_count(rate * dt, rng) as f64,
        BernsteinSpec::Sum { terms } => {
            let mut acc = 0.0;
            for t in terms {
                acc += increment_f64(t, dt, rng)?;
            }
            acc
        }
    })
}

/// One increment `H(dt)` of the subordinator with Laplace exponent `f`:
/// `E e^{-μH(dt)} = e^{-dt f(μ)}`.
pub fn sample_subordinator_increment<T: Scalar, R: Rng + ?Sized>(
    f: &BernsteinFn<T>,
    dt: T,
    rng: &mut R,
) -> Result<T> {
    check_time(dt)?;
    let spec = to_f64(f.spec());
    Ok(T::lit(increment_f64(&spec, dt.as_f64(), rng)?))
}

fn to_f64<T: Scalar>(spec: &BernsteinSpec<T>) -> BernsteinSpec<f64> {
    match spec {
        BernsteinSpec::Stable { alpha } => BernsteinSpec::Stable { alpha: alpha.as_f64() },
        BernsteinSpec::Gamma { a, b } => BernsteinSpec::Gamma { a: a.as_f64(), b: b.as_f64() },
        BernsteinSpec::InverseGaussian { delta, gamma } => {
            BernsteinSpec::InverseGaussian { delta: delta.as_f64(), gamma: gamma.as_f64() }
        }
        BernsteinSpec::TemperedStable { alpha, theta } => {
            BernsteinSpec::TemperedStable { alpha: alpha.as_f64(), theta: theta.as_f64() }
        }
        BernsteinSpec::PoissonMeasure { rate, atom } => {
            BernsteinSpec::PoissonMeasure { rate: rate.as_f64(), atom: atom.as_f64() }
        }
        BernsteinSpec::Sum { terms } => BernsteinSpec::Sum { terms: terms.iter().map(to_f64).collect() },
    }
}

/// A subordinator ready to draw increments.
#[derive(Debug, Clone)]
pub struct SubordinatorSampler {
    pub bernstein: BernsteinFn<f64>,
}

impl SubordinatorSampler {
    pub fn new(bernstein: BernsteinFn<f64>) -> Self {
        Self { bernstein }
    }

    pub fn increment<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> Result<f64> {
        sample_subordinator_increment(&self.bernstein, dt, rng)
    }

    /// `H` at the points of an increasing grid starting after 0.
    pub fn path<R: Rng + ?Sized>(&self, grid: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let mut prev = 0.0;
        let mut level = 0.0;
        grid.iter()
            .map(|&t| {
                if !(t >= prev) {
                    return Err(invalid("subordinator grid must be nondecreasing and start at or after 0"));
                }
                level += self.increment(t - prev, rng)?;
                prev = t;
                Ok(level)
            })
            .collect()
    }
}

fn check_inverse_index(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("inverse stable index must lie in (0, 1), got {alpha}")))
    }
}

/// One draw of `L_α(t)` through the marginal identity `L_α(t) = (t/S)^α`
/// with `S` standard positive stable. Fixed-time marginals only; successive
/// calls are independent, not a path.
pub fn sample_inverse_stable<R: Rng + ?Sized>(alpha: f64, t: f64, rng: &mut R) -> Result<f64> {
    check_inverse_index(alpha)?;
    check_time(t)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    Ok((t / sample_positive_stable(alpha, rng)).powf(alpha))
}

/// Sampler for `L_α(t)`.
#[derive(Debug, Clone, Copy)]
pub struct InverseStableSampler {
    pub alpha: f64,
}

impl InverseStableSampler {
    pub fn new(alpha: f64) -> Result<Self> {
        check_inverse_index(alpha)?;
        Ok(Self { alpha })
    }

    pub fn sample<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> Result<f64> {
        sample_inverse_stable(self.alpha, t, rng)
    }

    /// `E L_α(t) = t^α / Γ(α + 1)`.
    pub fn mean(&self, t: f64) -> f64 {
        t.powf(self.alpha) / gamma(self.alpha + 1.0)
    }

    /// `E e^{-μ L_α(t)} = E_{α,1}(-μ t^α)`.
    pub fn laplace(&self, mu: f64, t: f64) -> Result<f64> {
        mittag_leffler(self.alpha, 1.0, -mu * t.powf(self.alpha))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{integrate, integrate_to_infinity, Tolerance};
    use crate::sampling::{par_draws, RngStream};
    use crate::stats::Band;

    type Bf = BernsteinFn<f64>;

    fn kinds() -> Vec<Bf> {
        vec![
            Bf::stable(0.6).unwrap(),
            Bf::gamma(1.5, 2.0).unwrap(),
            Bf::inverse_gaussian(0.8, 1.3).unwrap(),
            Bf::tempered_stable(0.4, 1.5).unwrap(),
            Bf::poisson_measure(2.0, 0.7).unwrap(),
            Bf::sum(vec![Bf::gamma(1.0, 1.0).unwrap(), Bf::poisson_measure(0.5, 2.0).unwrap()]).unwrap(),
        ]
    }

    #[test]
    fn eval_examples() {
        for f in kinds() {
            assert_eq!(f.eval(0.0).unwrap(), 0.0);
            assert!(f.eval(-1.0).is_err());
        }
        assert!((Bf::stable(0.5).unwrap().eval(4.0).unwrap() - 2.0).abs() < 1e-15);
        let e = std::f64::consts::E;
        assert!((Bf::gamma(1.0, 1.0).unwrap().eval(e - 1.0).unwrap() - 1.0).abs() < 1e-15);
        let ig = Bf::inverse_gaussian(0.8, 1.3).unwrap();
        assert!((ig.eval(2.0).unwrap() - 0.8 * ((4.0f64 + 1.69).sqrt() - 1.3)).abs() < 1e-14);
        let ts = Bf::tempered_stable(0.4, 1.5).unwrap();
        assert!((ts.eval(2.0).unwrap() - (3.5f64.powf(0.4) - 1.5f64.powf(0.4))).abs() < 1e-14);
        assert!(Bf::stable(1.0).is_err());
        assert!(Bf::gamma(1.0, 0.0).is_err());
    }

    #[test]
    fn extension_below_zero() {
        let g = Bf::gamma(1.5, 2.0).unwrap();
        assert!((g.eval_extended(-1.0).unwrap() - 1.5 * 0.5f64.ln()).abs() < 1e-15);
        assert!(g.eval_extended(-2.0).is_err());
        assert!(Bf::stable(0.5).unwrap().eval_extended(-1e-3).is_err());
        let p = Bf::poisson_measure(2.0, 0.7).unwrap();
        assert!((p.eval_extended(-3.0).unwrap() - 2.0 * (1.0 - (2.1f64).exp())).abs() < 1e-12);
        let ig = Bf::inverse_gaussian(0.8, 1.3).unwrap();
        assert!((ig.eval_extended(-0.5).unwrap() - 0.8 * (0.69f64.sqrt() - 1.3)).abs() < 1e-14);
        assert!(ig.eval_extended(-0.9).is_err());
        // Extended values still give E e^{-xH} = e^{-f(x)} for x < 0.
        let s = SubordinatorSampler::new(g.clone());
        let xs = par_draws(100_000, 50, 0, |rng| (0.5 * s.increment(1.0, rng).unwrap()).exp());
        assert!(Band::mean(&xs, (-g.eval_extended(-0.5).unwrap()).exp(), 4.0).pass);
    }

    #[test]
    fn serde_round_trip() {
        let f: Bf = serde_json::from_str(r#"{"kind":"stable","alpha":0.5}"#).unwrap();
        assert_eq!(f, Bf::stable(0.5).unwrap());
        let g: Bf = serde_json::from_str(r#"{"kind":"poisson-measure","rate":2.0,"atom":0.5}"#).unwrap();
        assert_eq!(serde_json::from_str::<Bf>(&serde_json::to_string(&g).unwrap()).unwrap(), g);
        assert!(serde_json::from_str::<Bf>(r#"{"kind":"stable","alpha":1.5}"#).is_err());
        assert!(serde_json::from_str::<Bf>(r#"{"kind":"stable","alpha":0.5,"x":1}"#).is_err());
    }

    #[test]
    fn shape_invariants_on_grid() {
        let grid: Vec<f64> = (0..60).map(|k| 0.05 * k as f64).collect();
        for f in kinds() {
            let v: Vec<f64> = grid.iter().map(|&x| f.eval(x).unwrap()).collect();
            let slope = f.mean_rate();
            for (w, x) in v.windows(2).zip(&grid[1..]) {
                assert!(w[1] >= w[0]);
                assert!(w[1] <= slope * x * (1.0 + 1e-12));
            }
            for w in v.windows(3) {
                assert!(w[2] - 2.0 * w[1] + w[0] <= 1e-12);
            }
            // (-1)^{n-1} Δⁿ f >= 0 for n = 1..3.
            let h = 0.1;
            for &x in &[0.1, 0.5, 1.0, 2.0] {
                let d1 = f.eval(x + h).unwrap() - f.eval(x).unwrap();
                let d2 = f.eval(x + 2.0 * h).unwrap() - 2.0 * f.eval(x + h).unwrap() + f.eval(x).unwrap();
                let d3 = f.eval(x + 3.0 * h).unwrap() - 3.0 * f.eval(x + 2.0 * h).unwrap() + 3.0 * f.eval(x + h).unwrap()
                    - f.eval(x).unwrap();
                assert!(d1 >= 0.0 && d2 <= 1e-14 && d3 >= -1e-14, "{f:?} at {x}");
            }
        }
    }

    #[test]
    fn levy_density_integrates_to_f() {
        let tol = Tolerance::new(1e-13, 1e-10);
        for f in kinds().into_iter().filter(|f| f.levy_density(1.0).is_some()) {
            for &x in &[0.3, 1.0, 4.0] {
                let g = |w: f64| -(-x * w).exp_m1() * f.levy_density(w).unwrap();
                let v = integrate(g, 0.0, 1.0, tol).unwrap() + integrate_to_infinity(g, 1.0, tol).unwrap();
                assert!((v / f.eval(x).unwrap() - 1.0).abs() < 1e-7, "{f:?} at {x}");
            }
        }
    }

    #[test]
    fn intensities_match_quadrature() {
        let tol = Tolerance::new(1e-15, 1e-11);
        for f in kinds().into_iter().filter(|f| f.levy_density(1.0).is_some()) {
            for &lambda in &[0.4, 2.0] {
                for m in [1u64, 2, 5] {
                    let g = |w: f64| poisson_pmf(lambda * w, m) * f.levy_density(w).unwrap();
                    let v = integrate(g, 0.0, 1.0, tol).unwrap() + integrate_to_infinity(g, 1.0, tol).unwrap();
                    let closed = f.poisson_mixture_intensity(lambda, m).unwrap();
                    assert!((v / closed - 1.0).abs() < 1e-7, "{f:?} λ={lambda} m={m}: {v} vs {closed}");
                }
            }
        }
        let p = Bf::poisson_measure(2.0, 0.7).unwrap();
        assert!((p.poisson_mixture_intensity(1.5, 2).unwrap() - 2.0 * poisson_pmf(1.05, 2)).abs() < 1e-15);
    }

    #[test]
    fn increment_means() {
        let g = SubordinatorSampler::new(Bf::gamma(1.5, 2.0).unwrap());
        let xs = par_draws(100_000, 21, 0, |rng| g.increment(0.7, rng).unwrap());
        assert!(Band::mean(&xs, 1.5 * 0.7 / 2.0, 4.0).pass);
        let p = SubordinatorSampler::new(Bf::poisson_measure(2.0, 0.7).unwrap());
        let xs = par_draws(100_000, 22, 0, |rng| p.increment(1.3, rng).unwrap());
        assert!(Band::mean(&xs, 2.0 * 0.7 * 1.3, 4.0).pass);
        for f in kinds().into_iter().filter(|f| f.mean_rate().is_finite()) {
            let s = SubordinatorSampler::new(f.clone());
            let xs = par_draws(100_000, 23, 0, |rng| s.increment(2.0, rng).unwrap());
            assert!(Band::mean(&xs, 2.0 * f.mean_rate(), 4.0).pass, "{f:?}");
            assert!(Band::variance(&xs, 2.0 * f.variance_rate(), 4.0).pass, "{f:?}");
        }
        let mut rng = RngStream::new(1, 0);
        let path = g.path(&[0.5, 1.0, 1.0, 3.0], &mut rng).unwrap();
        assert!(path.windows(2).all(|w| w[1] >= w[0]));
        assert!(g.path(&[1.0, 0.5], &mut rng).is_err());
    }

    #[test]
    fn laplace_identity_for_every_kind() {
        for (k, f) in kinds().into_iter().enumerate() {
            let s = SubordinatorSampler::new(f.clone());
            let hs = par_draws(100_000, 30 + k as u64, 0, |rng| s.increment(1.0, rng).unwrap());
            for &mu in &[0.5, 1.0, 2.0] {
                let ys: Vec<f64> = hs.iter().map(|h| (-mu * h).exp()).collect();
                assert!(Band::mean(&ys, (-f.eval(mu).unwrap()).exp(), 4.0).pass, "{f:?} μ={mu}");
            }
        }
    }

    #[test]
    fn inverse_stable_moments() {
        let mut rng = RngStream::new(2, 0);
        assert_eq!(sample_inverse_stable(0.5, 0.0, &mut rng).unwrap(), 0.0);
        assert!(sample_inverse_stable(1.0, 1.0, &mut rng).is_err());
        let s = InverseStableSampler::new(0.5).unwrap();
        assert!((s.mean(1.0) - 1.128379).abs() < 1e-6);
        assert!((s.laplace(1.0, 1.0).unwrap() - 0.427584).abs() < 1e-6);
        for (k, &alpha) in [0.3, 0.5, 0.8].iter().enumerate() {
            let s = InverseStableSampler::new(alpha).unwrap();
            let xs = par_draws(100_000, 40 + k as u64, 0, |rng| s.sample(1.7, rng).unwrap());
            assert!(Band::mean(&xs, s.mean(1.7), 4.0).pass, "α={alpha}");
            let ys: Vec<f64> = xs.iter().map(|l| (-l).exp()).collect();
            assert!(Band::mean(&ys, s.laplace(1.0, 1.7).unwrap(), 4.0).pass, "α={alpha}");
        }
    }

    #[test]
    fn mittag_leffler_monotone_on_negative_axis() {
        for &alpha in &[0.2, 0.5, 0.9, 1.0] {
            let mut prev = 1.0;
            for k in 0..=400 {
                let z = -0.05 * k as f64;
                let v = mittag_leffler(alpha, 1.0, z).unwrap();
                assert!(v > 0.0 && v <= 1.0 + 1e-15 && v <= prev + 1e-12, "α={alpha} z={z} {v}");
                prev = v;
            }
        }
    }
}
