//! Bernstein-fractional Skellam processes `S_f` and their Caputo
//! time-fractional composition `S_f ∘ L_α`.

use std::cell::RefCell;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{check_time, invalid, Error, Result};
use crate::law::{Jump, JumpLaw};
use crate::numeric::{integrate, Tolerance};
use crate::rates::RateFn;
use crate::sampling::{poisson_count, Event, Path, RngStream};
use crate::special::{ln_gamma, mittag_leffler, poisson_pmf};
use crate::subordination::{
    sample_inverse_stable, sample_subordinator_increment, BernsteinFn, BernsteinSpec,
};
use crate::Scalar;

/// One jump size with its rate and Bernstein function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct FracJump<T: Scalar> {
    pub size: i64,
    pub rate: RateFn<T>,
    pub bernstein: BernsteinFn<T>,
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
struct RawFracLaw<T: Scalar> {
    jumps: Vec<FracJump<T>>,
}

/// Nonzero integer jump sizes, each carrying `(λ_i, f_i)`. The pgf is
/// `exp(-Σ_i ∫₀ᵗ f_i(λ_i(s)(1 - u^i)) ds)`. Jumps are kept sorted by size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFracLaw<T>", bound = "T: Scalar")]
pub struct FracLaw<T: Scalar> {
    jumps: Vec<FracJump<T>>,
}

impl<T: Scalar> TryFrom<RawFracLaw<T>> for FracLaw<T> {
    type Error = Error;
    fn try_from(raw: RawFracLaw<T>) -> Result<Self> {
        Self::new(raw.jumps)
    }
}

impl<T: Scalar> FracLaw<T> {
    pub fn new(mut jumps: Vec<FracJump<T>>) -> Result<Self> {
        if jumps.is_empty() {
            return Err(invalid("a fractional law needs at least one jump size"));
        }
        if jumps.iter().any(|j| j.size == 0) {
            return Err(invalid("jump sizes must be nonzero"));
        }
        jumps.sort_by_key(|j| j.size);
        if let Some(w) = jumps.windows(2).find(|w| w[0].size == w[1].size) {
            return Err(invalid(format!("duplicate jump size {}", w[0].size)));
        }
        Ok(Self { jumps })
    }

    /// Constant-rate law from `(size, λ, f)` triples.
    pub fn homogeneous(entries: &[(i64, T, BernsteinFn<T>)]) -> Result<Self> {
        Self::new(
            entries
                .iter()
                .map(|(size, rate, f)| {
                    Ok(FracJump { size: *size, rate: RateFn::constant(*rate)?, bernstein: f.clone() })
                })
                .collect::<Result<_>>()?,
        )
    }

    pub fn jumps(&self) -> &[FracJump<T>] {
        &self.jumps
    }

    pub fn sizes(&self) -> impl Iterator<Item = i64> + '_ {
        self.jumps.iter().map(|j| j.size)
    }

    /// Whether all sizes are positive, so `S_f` is nondecreasing.
    pub fn is_nondecreasing(&self) -> bool {
        self.jumps.iter().all(|j| j.size > 0)
    }

    pub fn constant_rates(&self) -> Option<Vec<T>> {
        self.jumps.iter().map(|j| j.rate.as_constant()).collect()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.constant_rates().is_some()
    }

    fn require_homogeneous(&self, op: &str) -> Result<Vec<T>> {
        self.constant_rates().ok_or_else(|| {
            Error::HomogeneousOnly(format!(
                "{op} needs constant rates; the time-changed representation fails otherwise"
            ))
        })
    }

    /// The non-fractional law with the same sizes and rates.
    pub fn base_law(&self) -> Result<JumpLaw<T>> {
        JumpLaw::new(
            self.jumps
                .iter()
                .map(|j| Jump { size: T::of_i64(j.size), rate: j.rate.clone() })
                .collect(),
        )
    }

    /// Law of `a S_f`: sizes multiplied by the nonzero integer `a`.
    pub fn scale(&self, a: i64) -> Result<Self> {
        if a == 0 {
            return Err(invalid("scale factor must be nonzero"));
        }
        Self::new(
            self.jumps
                .iter()
                .map(|j| {
                    let size = j
                        .size
                        .checked_mul(a)
                        .ok_or_else(|| invalid("scaled jump size overflows i64"))?;
                    Ok(FracJump { size, ..j.clone() })
                })
                .collect::<Result<_>>()?,
        )
    }

    /// Law of a sum of independent processes sharing sizes and rates: the
    /// Bernstein functions add.
    pub fn sum_same_rates(laws: &[Self]) -> Result<Self> {
        let (first, rest) = laws
            .split_first()
            .ok_or_else(|| invalid("need at least one law to sum"))?;
        let mut jumps = first.jumps.clone();
        for law in rest {
            if law.jumps.len() != jumps.len() {
                return Err(invalid("summed laws must share their jump sizes"));
            }
            for (acc, j) in jumps.iter_mut().zip(&law.jumps) {
                if acc.size != j.size || acc.rate != j.rate {
                    return Err(invalid(format!(
                        "summed laws must share sizes and rates; mismatch at size {}",
                        acc.size
                    )));
                }
                acc.bernstein = BernsteinFn::sum(vec![acc.bernstein.clone(), j.bernstein.clone()])?;
            }
        }
        Self::new(jumps)
    }

    /// `Σ_i ∫₀ᵗ f_i(λ_i(s)(1 - u^i)) ds`, so that the pgf is `e^{-exponent}`.
    pub fn exponent(&self, t: T, u: T) -> Result<T> {
        self.exponent_with(t, u, false)
    }

    fn exponent_with(&self, t: T, u: T, force_quadrature: bool) -> Result<T> {
        check_time(t)?;
        check_u(u)?;
        if t == T::zero() || u == T::one() {
            return Ok(T::zero());
        }
        let mut acc = T::zero();
        for j in &self.jumps {
            let c = T::one() - u.powi(j.size as i32);
            if j.rate.is_zero() {
                continue;
            }
            match j.rate.as_constant() {
                Some(lambda) if !force_quadrature => acc = acc + t * j.bernstein.eval_extended(lambda * c)?,
                _ => acc = acc + integrate_exponent(&j.rate, &j.bernstein, c, t)?,
            }
        }
        Ok(acc)
    }
}

fn check_u<T: Scalar>(u: T) -> Result<()> {
    if u.is_finite() && u > T::zero() {
        Ok(())
    } else {
        Err(Error::Domain(format!("pgf argument must be positive and finite, got {u}")))
    }
}

/// `∫₀ᵗ f(λ(s) c) ds` by adaptive quadrature split at the rate's knots.
fn integrate_exponent<T: Scalar>(rate: &RateFn<T>, f: &BernsteinFn<T>, c: T, t: T) -> Result<T> {
    let failure = RefCell::new(None);
    let integrand = |s: T| match f.eval_extended(rate.rate(s) * c) {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            T::nan()
        }
    };
    let mut points = vec![T::zero()];
    points.extend(rate.knots().into_iter().filter(|&k| k > T::zero() && k < t));
    points.push(t);
    let tol = Tolerance::new(T::lit(1e-15), T::lit(1e-12));
    let mut acc = T::zero();
    for w in points.windows(2) {
        match integrate(&integrand, w[0], w[1], tol) {
            Ok(v) => acc = acc + v,
            Err(e) => return Err(failure.into_inner().unwrap_or(e)),
        }
    }
    Ok(acc)
}

/// `E u^{S_f(t)}`. Constant rates use `t Σ f_i(λ_i(1 - u^i))`; otherwise the
/// time integral is computed by adaptive quadrature.
///
/// For `u < 1` with negative sizes, or `u > 1` with positive sizes, the
/// arguments of `f_i` are negative and `f_i` is continued analytically; the
/// call fails where the continuation diverges (always for the stable kind).
pub fn frac_pgf<T: Scalar>(law: &FracLaw<T>, t: T, u: T) -> Result<T> {
    Ok((-law.exponent(t, u)?).exp())
}

/// [`frac_pgf`] with the time integral always done by quadrature, for
/// checking the constant-rate closed form.
pub fn frac_pgf_quadrature<T: Scalar>(law: &FracLaw<T>, t: T, u: T) -> Result<T> {
    Ok((-law.exponent_with(t, u, true)?).exp())
}

/// `Σ_n uⁿ P{T_n > t} = u/(1-u) E u^{S_f(t)}` for nondecreasing laws, where
/// `T_n` is the first time `S_f` reaches `n`.
pub fn frac_survival_gf<T: Scalar>(law: &FracLaw<T>, t: T, u: T) -> Result<T> {
    if !law.is_nondecreasing() {
        return Err(Error::Unsupported(
            "first-passage generating function needs positive jump sizes".into(),
        ));
    }
    if !(u > T::zero() && u < T::one()) {
        return Err(Error::Domain(format!("survival gf needs u in (0, 1), got {u}")));
    }
    Ok(u / (T::one() - u) * frac_pgf(law, t, u)?)
}

/// Rate at time `t` of a jump of `n`: `Σ_{m i = n, m >= 1} (λ_i^m/m!) ∫ e^{-λ_i w} w^m ν_i(dw)`
/// over all pairs, colliding pairs included. For `n = 0` returns the total
/// exit rate `Σ f_i(λ_i(t))`. Displacements no pair reaches get rate 0.
pub fn transition_intensity<T: Scalar>(law: &FracLaw<T>, t: T, n: i64) -> Result<T> {
    check_time(t)?;
    let mut acc = T::zero();
    for j in &law.jumps {
        let lambda = j.rate.rate(t);
        if n == 0 {
            acc = acc + j.bernstein.eval(lambda)?;
        } else if n % j.size == 0 && n / j.size >= 1 {
            acc = acc + j.bernstein.poisson_mixture_intensity(lambda, (n / j.size) as u64)?;
        }
    }
    Ok(acc)
}

/// Row sum of the off-diagonal intensities against the exit rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct RowSum<T: Scalar> {
    /// `Σ_{n≠0}` of the intensities: terms with `m <= truncation`, plus the
    /// exact remainder for the stable kind.
    pub value: T,
    /// `Σ_i f_i(λ_i(t))`.
    pub exit_rate: T,
    pub truncation: u64,
    /// Upper bound on the neglected terms `m > truncation`.
    pub tail_bound: T,
}

/// Summands of nested Bernstein sums.
fn leaves<T: Scalar>(f: &BernsteinFn<T>) -> Vec<BernsteinFn<T>> {
    match f.spec() {
        BernsteinSpec::Sum { .. } => f.terms().iter().flat_map(leaves).collect(),
        _ => vec![f.clone()],
    }
}

/// `P{X > k}` for the Sibuya law `P{X = m} = α Γ(m-α)/(Γ(1-α) m!)`, real `k >= 0`.
fn sibuya_tail(alpha: f64, k: f64) -> f64 {
    (ln_gamma(k + 1.0 - alpha) - ln_gamma(1.0 - alpha) - ln_gamma(k + 1.0)).exp()
}

/// Bound on `sup_m intensity(m+1)/intensity(m)` for the kinds whose
/// intensities decay geometrically.
fn decay_ratio<T: Scalar>(f: &BernsteinFn<T>, lambda: T, m: u64) -> Option<T> {
    match f.spec() {
        BernsteinSpec::Gamma { b, .. } => Some(lambda / (lambda + *b)),
        BernsteinSpec::InverseGaussian { gamma, .. } => Some(lambda / (lambda + *gamma * *gamma / T::lit(2.0))),
        BernsteinSpec::TemperedStable { theta, .. } => Some(lambda / (lambda + *theta)),
        BernsteinSpec::PoissonMeasure { atom, .. } => {
            let r = lambda * *atom / T::from_u64(m + 2).unwrap();
            (r < T::one()).then_some(r)
        }
        _ => None,
    }
}

/// `Σ_{n≠0} transition_intensity(n)` at time `t`, summed as `Σ_i Σ_{m=1}^{M}`.
/// The stable remainder `λ^α P{Sibuya > M}` is added exactly; for the other
/// kinds the remainder is bounded by a geometric series.
pub fn row_sum<T: Scalar>(law: &FracLaw<T>, t: T, truncation: u64) -> Result<RowSum<T>> {
    check_time(t)?;
    if truncation == 0 {
        return Err(invalid("row sum needs at least one term"));
    }
    let (mut value, mut exit_rate, mut tail_bound) = (T::zero(), T::zero(), T::zero());
    for j in &law.jumps {
        let lambda = j.rate.rate(t);
        exit_rate = exit_rate + j.bernstein.eval(lambda)?;
        if lambda == T::zero() {
            continue;
        }
        for f in leaves(&j.bernstein) {
            let mut last = T::zero();
            for m in 1..=truncation {
                last = f.poisson_mixture_intensity(lambda, m)?;
                value = value + last;
            }
            match (f.spec(), decay_ratio(&f, lambda, truncation)) {
                (BernsteinSpec::Stable { alpha }, _) => {
                    let tail = sibuya_tail(alpha.as_f64(), truncation as f64);
                    value = value + lambda.powf(*alpha) * T::lit(tail);
                }
                (_, Some(r)) if r < T::one() => tail_bound = tail_bound + last * r / (T::one() - r),
                _ => tail_bound = T::infinity(),
            }
        }
    }
    Ok(RowSum { value, exit_rate, truncation, tail_bound })
}

/// A moment that may diverge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Moment<T> {
    Finite(T),
    Infinite,
}

impl<T: Scalar> Moment<T> {
    pub fn value(self) -> Option<T> {
        match self {
            Moment::Finite(v) => Some(v),
            Moment::Infinite => None,
        }
    }

    fn of(v: T) -> Self {
        if v.is_finite() {
            Moment::Finite(v)
        } else {
            Moment::Infinite
        }
    }
}

impl<T: Scalar> Serialize for Moment<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Moment::Finite(v) => v.serialize(s),
            Moment::Infinite => s.serialize_str("infinite"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct FracMoments<T: Scalar> {
    pub mean: Moment<T>,
    pub variance: Moment<T>,
}

/// `E S_f(t) = Σ i λ_i E H_i(t)` and
/// `Var S_f(t) = Σ i² (λ_i² Var H_i(t) + λ_i E H_i(t))`, with
/// `E H(t) = t f'(0+)` and `Var H(t) = -t f''(0+)`. Divergent moments (stable
/// kinds with a positive rate) are flagged rather than reported as errors.
pub fn frac_moments<T: Scalar>(law: &FracLaw<T>, t: T) -> Result<FracMoments<T>> {
    check_time(t)?;
    let rates = law.require_homogeneous("frac_moments")?;
    let (mut mean, mut var) = (T::zero(), T::zero());
    let mut mean_diverges = false;
    for (j, &lambda) in law.jumps.iter().zip(&rates) {
        if lambda == T::zero() || t == T::zero() {
            continue;
        }
        let i = T::of_i64(j.size);
        let eh = t * j.bernstein.mean_rate();
        let vh = t * j.bernstein.variance_rate();
        mean_diverges |= !eh.is_finite();
        mean = mean + i * lambda * eh;
        var = var + i * i * (lambda * lambda * vh + lambda * eh);
    }
    Ok(FracMoments {
        mean: if mean_diverges { Moment::Infinite } else { Moment::of(mean) },
        variance: Moment::of(var),
    })
}

/// One draw of `S_f(t) = Σ i N_i(H_i(t))`: one subordinator increment and one
/// Poisson count per size.
pub fn sample_frac_marginal<T: Scalar, R: Rng + ?Sized>(
    law: &FracLaw<T>,
    t: T,
    rng: &mut R,
) -> Result<f64> {
    check_time(t)?;
    let rates = law.require_homogeneous("time-changed sampling")?;
    let mut acc = 0.0;
    for (j, &lambda) in law.jumps.iter().zip(&rates) {
        if lambda == T::zero() || t == T::zero() {
            continue;
        }
        let h = sample_subordinator_increment(&j.bernstein, t, rng)?.as_f64();
        acc += j.size as f64 * poisson_count(lambda.as_f64() * h, rng) as f64;
    }
    Ok(acc)
}

/// Cells per path used by [`sample_frac_path`].
pub const FRAC_PATH_CELLS: usize = 1024;

/// Path of `S_f` on `[0, horizon]` with [`FRAC_PATH_CELLS`] cells.
pub fn sample_frac_path<T: Scalar>(
    law: &FracLaw<T>,
    horizon: T,
    rng: &mut RngStream,
) -> Result<Path<T>> {
    sample_frac_path_cells(law, horizon, FRAC_PATH_CELLS, rng)
}

/// Path of `S_f` from the time change `Σ i N_i(H_i(t))`.
///
/// Poisson-measure summands are simulated exactly: `H` jumps by `w` at rate
/// `c`, and each jump releases `Poisson(λ w)` events at once. Other summands
/// use `cells` equal cells: per cell one increment `ΔH`, then
/// `Poisson(λ ΔH)` events at uniform times inside the cell. Values at cell
/// boundaries, the horizon included, have the exact law; event times inside
/// a cell are approximate.
pub fn sample_frac_path_cells<T: Scalar>(
    law: &FracLaw<T>,
    horizon: T,
    cells: usize,
    rng: &mut RngStream,
) -> Result<Path<T>> {
    check_time(horizon)?;
    if cells == 0 {
        return Err(invalid("need at least one cell"));
    }
    let rates = law.require_homogeneous("time-changed sampling")?;
    let h = horizon.as_f64();
    let mut events = Vec::new();
    let mut push = |time: f64, jump: f64| {
        // Uniform draws in (a, b] can round onto 0 for tiny cells.
        if time > 0.0 {
            events.push(Event { time: T::lit(time.min(h)), jump: T::lit(jump) });
        }
    };
    for (j, &lambda) in law.jumps.iter().zip(&rates) {
        let lambda = lambda.as_f64();
        if lambda == 0.0 || h == 0.0 {
            continue;
        }
        let size = j.size as f64;
        for f in leaves(&j.bernstein) {
            match f.spec() {
                BernsteinSpec::PoissonMeasure { rate, atom } => {
                    let n = poisson_count(rate.as_f64() * h, rng);
                    for _ in 0..n {
                        let time = h * (1.0 - rng.random::<f64>());
                        let k = poisson_count(lambda * atom.as_f64(), rng);
                        if k > 0 {
                            push(time, size * k as f64);
                        }
                    }
                }
                _ => {
                    let width = h / cells as f64;
                    for c in 0..cells {
                        let dh = sample_subordinator_increment(&f, T::lit(width), rng)?.as_f64();
                        let k = poisson_count(lambda * dh, rng);
                        for _ in 0..k {
                            push(width * (c as f64 + 1.0 - rng.random::<f64>()), size);
                        }
                    }
                }
            }
        }
    }
    Ok(Path::from_events(horizon, events)?.with_origin(rng))
}

#[derive(Debug, Clone)]
enum MarkLaw {
    /// `P{X = start + k} = cdf[k] - cdf[k-1]`.
    Table { start: u64, cdf: Vec<f64> },
    /// Sibuya(α) conditioned on `X >= start`.
    Sibuya { alpha: f64, start: u64 },
}

impl MarkLaw {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let v: f64 = rng.random();
        match self {
            MarkLaw::Table { start, cdf } => {
                let k = cdf.partition_point(|&c| c <= v * cdf[cdf.len() - 1]);
                (start + k.min(cdf.len() - 1) as u64) as f64
            }
            MarkLaw::Sibuya { alpha, start } => {
                let lo0 = *start as f64;
                let target = (1.0 - v) * sibuya_tail(*alpha, lo0 - 1.0);
                // Smallest k >= start with P{X > k} <= target.
                if sibuya_tail(*alpha, lo0) <= target {
                    return lo0;
                }
                let (mut lo, mut hi) = (lo0, 2.0 * lo0.max(1.0));
                while sibuya_tail(*alpha, hi) > target {
                    lo = hi;
                    hi *= 2.0;
                    if hi > 1e300 {
                        return hi;
                    }
                }
                while hi - lo > 1.0 && hi - lo > 1e-15 * hi {
                    let mid = ((lo + hi) / 2.0).floor();
                    if sibuya_tail(*alpha, mid) > target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                hi
            }
        }
    }
}

#[derive(Debug, Clone)]
struct CpComponent {
    size: f64,
    rate: f64,
    marks: MarkLaw,
}

/// Compound Poisson process with jump rate `u_i(n) = ∫ P{N_i(s) >= n} ν_i(ds)`
/// per size and marks `i X` with `P{X = m} = (1/u_i(n)) ∫ P{N_i(s) = m} ν_i(ds)`,
/// `m >= ⌈n⌉`.
///
/// For `n ∈ (0, 1]` the marks range over all `m >= 1` and the process has
/// exactly the law of `S_f`; for finite Lévy measures `n = 0` is exact as
/// well (with zero-size marks). Larger `n` drops the small jumps.
#[derive(Debug, Clone)]
pub struct CpApprox {
    threshold: f64,
    components: Vec<CpComponent>,
    picker: Option<WeightedIndex<f64>>,
    tail_bound: f64,
}

/// Mark tables stop once the remaining mass is below this fraction.
const MARK_TAIL: f64 = 1e-14;
const MAX_MARK_TABLE: u64 = 5_000_000;

impl CpApprox {
    pub fn new<T: Scalar>(law: &FracLaw<T>, n: f64) -> Result<Self> {
        if !(n >= 0.0 && n.is_finite()) {
            return Err(invalid(format!("cp threshold must be finite and nonnegative, got {n}")));
        }
        let rates = law.require_homogeneous("compound Poisson approximation")?;
        let start = n.ceil() as u64;
        let mut components = Vec::new();
        let mut tail_bound: f64 = 0.0;
        for (j, &lambda) in law.jumps.iter().zip(&rates) {
            let lambda = lambda.as_f64();
            if lambda == 0.0 {
                continue;
            }
            for f in leaves(&j.bernstein) {
                let f = f.cast_f64();
                let (rate, marks, tail) = cp_component(&f, lambda, start)?;
                if rate > 0.0 {
                    components.push(CpComponent { size: j.size as f64, rate, marks });
                    tail_bound = tail_bound.max(tail);
                }
            }
        }
        let picker = if components.is_empty() {
            None
        } else {
            Some(
                WeightedIndex::new(components.iter().map(|c| c.rate))
                    .map_err(|e| invalid(format!("cp component weights: {e}")))?,
            )
        };
        Ok(Self { threshold: n, components, picker, tail_bound })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// `Σ_i u_i(n)`.
    pub fn total_rate(&self) -> f64 {
        self.components.iter().map(|c| c.rate).sum()
    }

    /// Largest probability mass cut from a mark table.
    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// One draw of the compound Poisson sum at time `t`.
    pub fn sample<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> Result<f64> {
        check_time(t)?;
        let Some(picker) = &self.picker else {
            return Ok(0.0);
        };
        let count = poisson_count(t * self.total_rate(), rng);
        let mut acc = 0.0;
        for _ in 0..count {
            let c = &self.components[picker.sample(rng)];
            acc += c.size * c.marks.sample(rng);
        }
        Ok(acc)
    }
}


/// `(u(n), mark law, truncated mass)` for one non-sum Bernstein function.
fn cp_component(f: &BernsteinFn<f64>, lambda: f64, start: u64) -> Result<(f64, MarkLaw, f64)> {
    if let BernsteinSpec::Stable { alpha } = f.spec() {
        if start == 0 {
            return Err(diverges());
        }
        let rate = lambda.powf(*alpha) * sibuya_tail(*alpha, start as f64 - 1.0);
        return Ok((rate, MarkLaw::Sibuya { alpha: *alpha, start }, 0.0));
    }
    let intensity = |m: u64| -> Result<f64> {
        match (m, f.spec()) {
            (0, BernsteinSpec::PoissonMeasure { rate, atom }) => Ok(rate * poisson_pmf(lambda * atom, 0)),
            (0, _) => Err(diverges()),
            _ => f.poisson_mixture_intensity(lambda, m),
        }
    };
    let rate = if start == 0 {
        if !f.is_finite_measure() {
            return Err(diverges());
        }
        f.total_mass()
    } else {
        let below: f64 = (1..start).map(&intensity).sum::<Result<f64>>()?;
        (f.eval(lambda)? - below).max(0.0)
    };
    if rate == 0.0 {
        return Ok((0.0, MarkLaw::Table { start, cdf: vec![1.0] }, 0.0));
    }
    let mut cdf = Vec::new();
    let mut acc = 0.0;
    let mut m = start;
    loop {
        acc += intensity(m)? / rate;
        cdf.push(acc);
        if 1.0 - acc <= MARK_TAIL {
            break;
        }
        // Past the mode, the remaining mass is bounded by a geometric tail.
        if m > start + 16 {
            if let Some(r) = decay_ratio(f, lambda, m) {
                let last = cdf[cdf.len() - 1] - cdf[cdf.len() - 2];
                if r < 1.0 && last * r / (1.0 - r) <= MARK_TAIL {
                    break;
                }
            }
        }
        m += 1;
        if m - start > MAX_MARK_TABLE {
            return Err(Error::Numerical(format!(
                "mark table did not reach its tail tolerance within {MAX_MARK_TABLE} entries"
            )));
        }
    }
    let cut = (1.0 - acc).max(0.0);
    Ok((rate, MarkLaw::Table { start, cdf }, cut))
}

fn diverges() -> Error {
    Error::Domain("u_i(0) is the total mass of an infinite Lévy measure".into())
}

/// One draw from the compound Poisson approximation at threshold `n`.
pub fn cp_approx_sampler<T: Scalar, R: Rng + ?Sized>(
    law: &FracLaw<T>,
    n: f64,
    t: f64,
    rng: &mut R,
) -> Result<f64> {
    CpApprox::new(law, n)?.sample(t, rng)
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
struct RawCaputoLaw<T: Scalar> {
    base: FracLaw<T>,
    alpha: T,
}

/// `S_f ∘ L_α`: a homogeneous Bernstein-fractional law run on an independent
/// inverse stable clock. `α = 1` is the identity clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCaputoLaw<T>", bound = "T: Scalar")]
pub struct CaputoLaw<T: Scalar> {
    base: FracLaw<T>,
    alpha: T,
}

impl<T: Scalar> TryFrom<RawCaputoLaw<T>> for CaputoLaw<T> {
    type Error = Error;
    fn try_from(raw: RawCaputoLaw<T>) -> Result<Self> {
        Self::new(raw.base, raw.alpha)
    }
}

impl<T: Scalar> CaputoLaw<T> {
    pub fn new(base: FracLaw<T>, alpha: T) -> Result<Self> {
        base.require_homogeneous("the Caputo composition")?;
        if !(alpha > T::zero() && alpha <= T::one()) {
            return Err(invalid(format!("Caputo order must lie in (0, 1], got {alpha}")));
        }
        Ok(Self { base, alpha })
    }

    pub fn base(&self) -> &FracLaw<T> {
        &self.base
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }
}

/// `E u^{S_f(L_α(t))} = E_{α,1}(-t^α Σ f_i(λ_i(1 - u^i)))`.
pub fn caputo_pgf<T: Scalar>(claw: &CaputoLaw<T>, t: T, u: T) -> Result<T> {
    check_time(t)?;
    let x = claw.base.exponent(T::one(), u)? * t.powf(claw.alpha);
    if x == T::zero() {
        return Ok(T::one());
    }
    if claw.alpha == T::one() {
        Ok((-x).exp())
    } else {
        mittag_leffler(claw.alpha, T::one(), -x)
    }
}

/// One draw of `S_f(L_α(t))`: `L` from the inverse stable marginal, then an
/// independent `S_f(L)`.
pub fn caputo_sample<T: Scalar, R: Rng + ?Sized>(claw: &CaputoLaw<T>, t: T, rng: &mut R) -> Result<f64> {
    check_time(t)?;
    let alpha = claw.alpha.as_f64();
    let clock = if alpha == 1.0 { t.as_f64() } else { sample_inverse_stable(alpha, t.as_f64(), rng)? };
    sample_frac_marginal(&claw.base, T::lit(clock), rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{par_draws, try_par_draws};
    use crate::stats::{ks_two_sample, Band};
    use proptest::prelude::*;

    type Bf = BernsteinFn<f64>;

    fn single(f: Bf, lambda: f64) -> FracLaw<f64> {
        FracLaw::homogeneous(&[(1, lambda, f)]).unwrap()
    }

    fn pgf_band(draws: &[f64], u: f64, target: f64) -> Band {
        let xs: Vec<f64> = draws.iter().map(|&s| u.powf(s)).collect();
        Band::mean(&xs, target, 4.0)
    }

    #[test]
    fn pgf_examples() {
        let law = single(Bf::poisson_measure(1.0, 1.0).unwrap(), 1.0);
        let expected = (-(1.0 - (-0.5f64).exp())).exp();
        assert!((frac_pgf(&law, 1.0, 0.5).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.674712).abs() < 1e-6);
        assert!((frac_pgf_quadrature(&law, 1.0, 0.5).unwrap() - expected).abs() < 1e-12);
        assert_eq!(frac_pgf(&law, 3.0, 1.0).unwrap(), 1.0);

        let stable = single(Bf::stable(0.5).unwrap(), 1.0);
        assert!((frac_pgf(&stable, 2.0, 0.75).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!(matches!(frac_pgf(&stable, 1.0, 1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn quadrature_handles_time_varying_rates() {
        // λ(s) = 2s on [0, 1]: ∫ a ln(1 + 2s c/b) ds in closed form.
        let (a, b, c) = (1.5, 2.0, 0.6);
        let law = FracLaw::new(vec![FracJump {
            size: 1,
            rate: RateFn::power(2.0, 1.0).unwrap(),
            bernstein: Bf::gamma(a, b).unwrap(),
        }])
        .unwrap();
        let k = 2.0 * c / b;
        let exact = a * ((1.0 + k) * (1.0 + k).ln() - k) / k;
        assert!((law.exponent(1.0, 1.0 - c).unwrap() - exact).abs() < 1e-12);

        let pw = FracLaw::new(vec![FracJump {
            size: 2,
            rate: RateFn::piecewise(vec![0.0, 0.3], vec![1.0, 4.0]).unwrap(),
            bernstein: Bf::stable(0.4).unwrap(),
        }])
        .unwrap();
        let x = 1.0 - 0.5f64.powi(2);
        let exact = 0.3 * x.powf(0.4) + 0.7 * (4.0 * x).powf(0.4);
        assert!((pw.exponent(1.0, 0.5).unwrap() - exact).abs() < 1e-12);
    }

    #[test]
    fn negative_sizes_use_the_continuation() {
        let law = FracLaw::homogeneous(&[
            (1, 1.0, Bf::gamma(1.0, 2.0).unwrap()),
            (-1, 0.5, Bf::gamma(1.0, 2.0).unwrap()),
        ])
        .unwrap();
        let u = 0.7;
        let draws = par_draws(100_000, 81, 0, |rng| sample_frac_marginal(&law, 1.0, rng).unwrap());
        assert!(pgf_band(&draws, u, frac_pgf(&law, 1.0, u).unwrap()).pass);
        let stable_down = FracLaw::homogeneous(&[(-1, 1.0, Bf::stable(0.5).unwrap())]).unwrap();
        assert!(frac_pgf(&stable_down, 1.0, 0.7).is_err());
    }

    #[test]
    fn intensity_examples() {
        let (c, lambda) = (1.7, 0.9);
        let law = single(Bf::poisson_measure(c, 1.0).unwrap(), lambda);
        for m in 1..6u64 {
            let expected = c * (-lambda).exp() * lambda.powi(m as i32) / (1..=m).product::<u64>() as f64;
            assert!((transition_intensity(&law, 0.0, m as i64).unwrap() - expected).abs() < 1e-15);
        }
        let exit = c * (1.0 - (-lambda).exp());
        assert!((transition_intensity(&law, 0.0, 0).unwrap() - exit).abs() < 1e-15);
        assert_eq!(transition_intensity(&law, 0.0, -1).unwrap(), 0.0);
        let rs = row_sum(&law, 0.0, 60).unwrap();
        assert!((rs.value - exit).abs() < 1e-12);
    }

    #[test]
    fn row_sum_matches_exit_rate() {
        let law = FracLaw::homogeneous(&[
            (1, 2.0, Bf::stable(0.5).unwrap()),
            (-2, 0.7, Bf::gamma(1.0, 1.0).unwrap()),
            (3, 1.1, Bf::inverse_gaussian(0.8, 1.2).unwrap()),
            (
                -1,
                0.4,
                Bf::sum(vec![Bf::tempered_stable(0.3, 1.0).unwrap(), Bf::poisson_measure(2.0, 0.5).unwrap()])
                    .unwrap(),
            ),
        ])
        .unwrap();
        let rs = row_sum(&law, 0.0, 60).unwrap();
        assert!((rs.value - rs.exit_rate).abs() < 1e-9, "{rs:?}");
        assert!(rs.tail_bound < 1e-9);
    }

    #[test]
    fn colliding_pairs_add() {
        let law = FracLaw::homogeneous(&[
            (1, 1.0, Bf::gamma(1.0, 1.0).unwrap()),
            (2, 1.0, Bf::gamma(2.0, 1.0).unwrap()),
        ])
        .unwrap();
        let expected = 1.0 / 4.0 * 0.5f64.powi(4) + 2.0 / 2.0 * 0.5f64.powi(2);
        assert!((transition_intensity(&law, 0.0, 4).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn moment_examples() {
        let law = single(Bf::gamma(1.0, 1.0).unwrap(), 1.0);
        let m = frac_moments(&law, 2.0).unwrap();
        assert_eq!(m.mean, Moment::Finite(2.0));
        assert_eq!(m.variance, Moment::Finite(4.0));
        let stable = single(Bf::stable(0.5).unwrap(), 1.0);
        assert_eq!(frac_moments(&stable, 1.0).unwrap().mean, Moment::Infinite);
        let idle = single(Bf::stable(0.5).unwrap(), 0.0);
        let m = frac_moments(&idle, 1.0).unwrap();
        assert_eq!((m.mean, m.variance), (Moment::Finite(0.0), Moment::Finite(0.0)));
        assert_eq!(serde_json::to_string(&frac_moments(&stable, 1.0).unwrap().mean).unwrap(), "\"infinite\"");
    }

    #[test]
    fn pgf_slope_at_one_is_the_mean() {
        let law = FracLaw::homogeneous(&[
            (1, 1.3, Bf::gamma(1.0, 2.0).unwrap()),
            (-2, 0.6, Bf::inverse_gaussian(1.0, 1.5).unwrap()),
            (3, 0.2, Bf::poisson_measure(1.0, 0.8).unwrap()),
        ])
        .unwrap();
        let t = 1.5;
        let h = 1e-6;
        let slope = (frac_pgf(&law, t, 1.0).unwrap() - frac_pgf(&law, t, 1.0 - h).unwrap()) / h;
        let mean = frac_moments(&law, t).unwrap().mean.value().unwrap();
        assert!(((slope - mean) / mean).abs() < 1e-3);
    }

    #[test]
    fn marginal_sampler_matches_moments_and_pgf() {
        let law = single(Bf::gamma(1.0, 1.0).unwrap(), 1.0);
        let draws = par_draws(100_000, 82, 0, |rng| sample_frac_marginal(&law, 2.0, rng).unwrap());
        assert!(Band::mean(&draws, 2.0, 4.0).pass);
        assert!(Band::variance(&draws, 4.0, 4.0).pass);

        let stable = single(Bf::stable(0.5).unwrap(), 1.0);
        let draws = par_draws(100_000, 83, 0, |rng| sample_frac_marginal(&stable, 2.0, rng).unwrap());
        assert!(pgf_band(&draws, 0.75, (-1.0f64).exp()).pass);
    }

    #[test]
    fn path_sampler_matches_pgf() {
        let law = FracLaw::homogeneous(&[
            (1, 1.0, Bf::poisson_measure(1.5, 0.8).unwrap()),
            (2, 0.5, Bf::gamma(1.0, 1.0).unwrap()),
        ])
        .unwrap();
        let ends = try_par_draws(20_000, 84, 0, |rng| {
            Ok(sample_frac_path_cells(&law, 1.0, 64, rng)?.value(1.0))
        })
        .unwrap();
        for u in [0.3, 0.6, 0.9] {
            assert!(pgf_band(&ends, u, frac_pgf(&law, 1.0, u).unwrap()).pass, "u = {u}");
        }
        let idle = single(Bf::gamma(1.0, 1.0).unwrap(), 0.0);
        let mut rng = RngStream::new(1, 0);
        assert!(sample_frac_path(&idle, 5.0, &mut rng).unwrap().events().is_empty());
    }

    #[test]
    fn nonhomogeneous_sampling_is_rejected() {
        let law = FracLaw::new(vec![FracJump {
            size: 1,
            rate: RateFn::power(1.0, 1.0).unwrap(),
            bernstein: Bf::gamma(1.0, 1.0).unwrap(),
        }])
        .unwrap();
        let mut rng = RngStream::new(1, 0);
        assert!(matches!(sample_frac_path(&law, 1.0, &mut rng), Err(Error::HomogeneousOnly(_))));
        assert!(matches!(frac_moments(&law, 1.0), Err(Error::HomogeneousOnly(_))));
    }

    #[test]
    fn cp_representation_is_exact_for_finite_measures() {
        let law = FracLaw::homogeneous(&[
            (1, 1.2, Bf::poisson_measure(2.0, 0.7).unwrap()),
            (-3, 0.5, Bf::poisson_measure(1.0, 1.5).unwrap()),
        ])
        .unwrap();
        let cp = CpApprox::new(&law, 0.0).unwrap();
        assert!((cp.total_rate() - 3.0).abs() < 1e-15);
        let a = par_draws(10_000, 85, 0, |rng| cp.sample(1.0, rng).unwrap());
        let b = par_draws(10_000, 86, 0, |rng| sample_frac_marginal(&law, 1.0, rng).unwrap());
        assert!(ks_two_sample(&a, &b).p_value > 0.01);
    }

    #[test]
    fn cp_rates_and_marks() {
        let stable = single(Bf::stable(0.5).unwrap(), 4.0);
        assert!(matches!(CpApprox::new(&stable, 0.0), Err(Error::Domain(_))));
        for n in [0.02, 0.5, 1.0] {
            assert!((CpApprox::new(&stable, n).unwrap().total_rate() - 2.0).abs() < 1e-14);
        }
        // u(2) = λ^α P{Sibuya >= 2} = λ^α (1 - α).
        assert!((CpApprox::new(&stable, 1.5).unwrap().total_rate() - 1.0).abs() < 1e-14);

        let gamma = single(Bf::gamma(2.0, 1.0).unwrap(), 1.0);
        let cp = CpApprox::new(&gamma, 0.5).unwrap();
        assert!((cp.total_rate() - 2.0 * 2f64.ln()).abs() < 1e-14);
        let pgf = frac_pgf(&gamma, 1.0, 0.6).unwrap();
        let draws = par_draws(100_000, 87, 0, |rng| cp.sample(1.0, rng).unwrap());
        assert!(pgf_band(&draws, 0.6, pgf).pass);

        let draws = par_draws(100_000, 88, 0, |rng| cp_approx_sampler(&stable, 0.1, 1.0, rng).unwrap());
        assert!(pgf_band(&draws, 0.8, frac_pgf(&stable, 1.0, 0.8).unwrap()).pass);

        let idle = single(Bf::stable(0.5).unwrap(), 0.0);
        let mut rng = RngStream::new(3, 0);
        assert_eq!(cp_approx_sampler(&idle, 0.0, 1.0, &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn sibuya_marks_follow_their_law() {
        let marks = MarkLaw::Sibuya { alpha: 0.4, start: 1 };
        let xs = par_draws(100_000, 89, 0, |rng| marks.sample(rng));
        for k in [1.0, 2.0, 5.0, 40.0] {
            let p: Vec<f64> = xs.iter().map(|&x| (x > k) as u8 as f64).collect();
            assert!(Band::mean(&p, sibuya_tail(0.4, k), 4.0).pass, "k = {k}");
        }
    }

    #[test]
    fn caputo_examples() {
        let f = Bf::stable(0.5).unwrap();
        // λ(1 - u)^{1/2} = 1 at u = 0.75 when λ = 2^{...}: take λ = 4, u = 0.75.
        let claw = CaputoLaw::new(single(f.clone(), 4.0), 0.5).unwrap();
        let expected = std::f64::consts::E * statrs::function::erf::erfc(1.0);
        let v = caputo_pgf(&claw, 1.0, 0.75).unwrap();
        assert!((v - expected).abs() < 1e-10, "{v} vs {expected}");
        assert!((expected - 0.427584).abs() < 1e-6);
        assert_eq!(caputo_pgf(&claw, 1.0, 1.0).unwrap(), 1.0);

        let one = CaputoLaw::new(single(f, 4.0), 1.0).unwrap();
        assert_eq!(caputo_pgf(&one, 2.0, 0.6).unwrap(), frac_pgf(one.base(), 2.0, 0.6).unwrap());

        let mut rng = RngStream::new(4, 0);
        assert_eq!(caputo_sample(&claw, 0.0, &mut rng).unwrap(), 0.0);
        let draws = par_draws(100_000, 90, 0, |rng| caputo_sample(&claw, 1.0, rng).unwrap());
        for u in [0.4, 0.75, 0.8] {
            assert!(pgf_band(&draws, u, caputo_pgf(&claw, 1.0, u).unwrap()).pass, "u = {u}");
        }
    }

    #[test]
    fn caputo_mean_approaches_the_plain_mean() {
        let base = single(Bf::gamma(1.0, 1.0).unwrap(), 1.0);
        let claw = CaputoLaw::new(base.clone(), 0.95).unwrap();
        let draws = par_draws(100_000, 91, 0, |rng| caputo_sample(&claw, 1.0, rng).unwrap());
        let plain = frac_moments(&base, 1.0).unwrap().mean.value().unwrap();
        let mc = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!(((mc - plain) / plain).abs() < 0.1);
        assert!(CaputoLaw::new(base, 1.2).is_err());
    }

    #[test]
    fn survival_gf_identity() {
        let law = FracLaw::homogeneous(&[
            (1, 1.0, Bf::gamma(1.0, 1.0).unwrap()),
            (2, 0.5, Bf::stable(0.6).unwrap()),
        ])
        .unwrap();
        let t = 1.0;
        let paths = try_par_draws(20_000, 92, 0, |rng| sample_frac_path_cells(&law, t, 64, rng)).unwrap();
        for u in [0.3f64, 0.7] {
            // Σ_n uⁿ 1{T_n > t} for each path.
            let xs: Vec<f64> = paths
                .iter()
                .map(|p| {
                    let mut acc = 0.0;
                    let mut n = 1;
                    loop {
                        let w = u.powi(n);
                        if w < 1e-18 {
                            break acc;
                        }
                        if p.first_passage(n as f64).is_none() {
                            acc += w;
                        }
                        n += 1;
                    }
                })
                .collect();
            assert!(Band::mean(&xs, frac_survival_gf(&law, t, u).unwrap(), 4.0).pass, "u = {u}");
        }
    }

    #[test]
    fn caputo_pgf_decreases_in_time() {
        let law = FracLaw::homogeneous(&[(1, 1.0, Bf::gamma(1.0, 1.0).unwrap()), (3, 0.3, Bf::stable(0.7).unwrap())])
            .unwrap();
        for alpha in [0.3, 0.7, 1.0] {
            let claw = CaputoLaw::new(law.clone(), alpha).unwrap();
            let vals: Vec<f64> = (0..60).map(|k| caputo_pgf(&claw, k as f64 * 0.5, 0.4).unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[1] <= w[0] + 1e-14), "alpha = {alpha}");
        }
    }

    #[test]
    fn json_round_trip() {
        let json = r#"{"jumps":[{"size":2,"rate":{"kind":"constant","c":1.5},"bernstein":{"kind":"gamma","a":1.0,"b":2.0}},
                              {"size":-1,"rate":{"kind":"constant","c":0.5},"bernstein":{"kind":"stable","alpha":0.5}}]}"#;
        let law: FracLaw<f64> = serde_json::from_str(json).unwrap();
        assert_eq!(law.sizes().collect::<Vec<_>>(), vec![-1, 2]);
        let back: FracLaw<f64> = serde_json::from_str(&serde_json::to_string(&law).unwrap()).unwrap();
        assert_eq!(back, law);
        let bad = r#"{"jumps":[{"size":0,"rate":{"kind":"constant","c":1.0},"bernstein":{"kind":"stable","alpha":0.5}}]}"#;
        assert!(serde_json::from_str::<FracLaw<f64>>(bad).is_err());
    }

    fn kind() -> impl Strategy<Value = Bf> {
        prop_oneof![
            (0.1..0.9f64).prop_map(|a| Bf::stable(a).unwrap()),
            (0.2..3.0f64, 0.2..3.0f64).prop_map(|(a, b)| Bf::gamma(a, b).unwrap()),
            (0.2..3.0f64, 0.2..3.0f64).prop_map(|(d, g)| Bf::inverse_gaussian(d, g).unwrap()),
            (0.1..0.9f64, 0.2..3.0f64).prop_map(|(a, th)| Bf::tempered_stable(a, th).unwrap()),
            (0.2..3.0f64, 0.2..3.0f64).prop_map(|(c, w)| Bf::poisson_measure(c, w).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn scaling_maps_u_to_u_pow_a(f in kind(), g in kind(), l1 in 0.0..3.0f64, l2 in 0.0..3.0f64,
                                     a in 1i64..4, u in 0.05..1.0f64, t in 0.0..3.0f64) {
            let law = FracLaw::homogeneous(&[(1, l1, f), (2, l2, g)]).unwrap();
            let scaled = law.scale(a).unwrap();
            let lhs = frac_pgf(&scaled, t, u).unwrap();
            let rhs = frac_pgf(&law, t, u.powi(a as i32)).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-13);
        }

        #[test]
        fn independent_sum_adds_bernstein_functions(f in kind(), g in kind(), h in kind(), k in kind(),
                                                    l1 in 0.0..3.0f64, l2 in 0.0..3.0f64,
                                                    u in 0.05..1.0f64, t in 0.0..3.0f64) {
            let a = FracLaw::homogeneous(&[(1, l1, f), (3, l2, g)]).unwrap();
            let b = FracLaw::homogeneous(&[(1, l1, h), (3, l2, k)]).unwrap();
            let sum = FracLaw::sum_same_rates(&[a.clone(), b.clone()]).unwrap();
            let lhs = frac_pgf(&sum, t, u).unwrap();
            let rhs = frac_pgf(&a, t, u).unwrap() * frac_pgf(&b, t, u).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12);
        }

        #[test]
        fn quadrature_agrees_with_closed_form(f in kind(), l in 0.0..3.0f64, u in 0.05..1.0f64, t in 0.0..3.0f64) {
            let law = FracLaw::homogeneous(&[(2, l, f)]).unwrap();
            let a = frac_pgf(&law, t, u).unwrap();
            let b = frac_pgf_quadrature(&law, t, u).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a);
        }
    }
}
