//! The process specification `S = Σ i N_i` and its closed-form analytics.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_time, invalid, Error, Result};
use crate::genfn::{Domain, GenFn};
use crate::rates::RateFn;
use crate::special::{bessel_i_int, poisson_pmf};
use crate::Scalar;

/// One jump size with its rate function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct Jump<T: Scalar> {
    pub size: T,
    pub rate: RateFn<T>,
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
struct RawLaw<T: Scalar> {
    jumps: Vec<Jump<T>>,
}

/// A finite set of nonzero jump sizes, each driven by an independent
/// non-homogeneous Poisson process. Jumps are kept sorted by size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLaw<T>", bound = "T: Scalar")]
pub struct JumpLaw<T: Scalar> {
    jumps: Vec<Jump<T>>,
}

impl<T: Scalar> TryFrom<RawLaw<T>> for JumpLaw<T> {
    type Error = Error;
    fn try_from(raw: RawLaw<T>) -> Result<Self> {
        Self::new(raw.jumps)
    }
}

/// Mean, variance and third/fourth central moments of `S(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct MomentSet<T: Scalar> {
    pub mean: T,
    pub variance: T,
    pub central3: T,
    pub central4: T,
    pub fisher_index: FisherIndex<T>,
}

/// Variance-to-mean ratio, undefined when the mean vanishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FisherIndex<T> {
    Value(T),
    UndefinedZeroMean,
}

impl<T: Scalar> FisherIndex<T> {
    pub fn value(self) -> Option<T> {
        match self {
            Self::Value(v) => Some(v),
            Self::UndefinedZeroMean => None,
        }
    }
}

impl<T: Scalar> Serialize for FisherIndex<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Value(v) => v.serialize(s),
            Self::UndefinedZeroMean => s.serialize_str("undefined (zero mean)"),
        }
    }
}

impl<T: Scalar> fmt::Display for FisherIndex<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Value(v) => write!(f, "{v}"),
            Self::UndefinedZeroMean => f.write_str("undefined (zero mean)"),
        }
    }
}

/// Decay rate of `Cor(S(s), S(t))` in `t` for power-type rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct CorrelationDecay<T: Scalar> {
    /// `(max alpha_i + 1)/2`; the correlation behaves like `t^{-exponent}`.
    pub exponent: T,
    /// `max alpha_i < 1`.
    pub long_range: bool,
}

/// Probability masses on a contiguous integer range starting at `min`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct PmfTable<T: Scalar> {
    pub min: i64,
    pub probs: Vec<T>,
}

impl<T: Scalar> PmfTable<T> {
    pub fn point(n: i64) -> Self {
        Self {
            min: n,
            probs: vec![T::one()],
        }
    }

    pub fn max(&self) -> i64 {
        self.min + self.probs.len() as i64 - 1
    }

    pub fn prob(&self, n: i64) -> T {
        if n < self.min || n > self.max() {
            return T::zero();
        }
        self.probs[(n - self.min) as usize]
    }

    pub fn total(&self) -> T {
        crate::numeric::kahan_sum(self.probs.iter().copied())
    }

    /// Iterator over `(n, P{X = n})`.
    pub fn iter(&self) -> impl Iterator<Item = (i64, T)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(move |(k, &p)| (self.min + k as i64, p))
    }

    /// Distribution of `X + Y` for independent `X ~ self`, `Y ~ other`.
    pub fn convolve(&self, other: &Self) -> Self {
        let mut out = vec![T::zero(); self.probs.len() + other.probs.len() - 1];
        for (a, &pa) in self.probs.iter().enumerate() {
            if pa == T::zero() {
                continue;
            }
            for (b, &pb) in other.probs.iter().enumerate() {
                out[a + b] = out[a + b] + pa * pb;
            }
        }
        Self {
            min: self.min + other.min,
            probs: out,
        }
    }
}

/// Truncation level for each Poisson component of a pmf: the support is cut
/// where the remaining upper tail drops below this.
pub const PMF_TAIL: f64 = 1e-12;

/// Masses of `Poisson(mean)` on `0..=K` where `K` is the first point with
/// cumulative mass at least `1 - PMF_TAIL`.
pub fn poisson_table<T: Scalar>(mean: T) -> Vec<T> {
    let target = T::one() - T::lit(PMF_TAIL);
    let mut probs = Vec::new();
    let mut cum = T::zero();
    let mut k = 0u64;
    loop {
        let p = poisson_pmf(mean, k);
        probs.push(p);
        cum = cum + p;
        let past_mode = T::from_u64(k).unwrap() >= mean;
        if (cum >= target && past_mode) || (past_mode && p == T::zero()) {
            break;
        }
        k += 1;
    }
    probs
}

/// Classic Skellam mass `P{N₁ - N₂ = n}` for `N₁ ~ Poisson(l1)`,
/// `N₂ ~ Poisson(l2)`, using the modified Bessel form.
///
/// Degenerates to a Poisson mass when either mean is zero. The Bessel series
/// overflows for `2√(l1 l2)` beyond roughly 600.
pub fn classic_skellam_pmf<T: Scalar>(l1: T, l2: T, n: i64) -> Result<T> {
    if !(l1 >= T::zero()) || !(l2 >= T::zero()) {
        return Err(invalid(format!(
            "Skellam means must be nonnegative, got {l1}, {l2}"
        )));
    }
    if l2 == T::zero() {
        return Ok(if n < 0 {
            T::zero()
        } else {
            poisson_pmf(l1, n as u64)
        });
    }
    if l1 == T::zero() {
        return Ok(if n > 0 {
            T::zero()
        } else {
            poisson_pmf(l2, n.unsigned_abs())
        });
    }
    let nf = T::of_i64(n);
    let z = T::lit(2.0) * (l1 * l2).sqrt();
    let log_pref = -(l1 + l2) + nf * T::lit(0.5) * (l1 / l2).ln();
    Ok(log_pref.exp() * bessel_i_int(n, z))
}

/// [`classic_skellam_pmf`] for a real level; rejects non-integers.
pub fn classic_skellam_pmf_real<T: Scalar>(l1: T, l2: T, n: T) -> Result<T> {
    match n.as_integer() {
        Some(k) => classic_skellam_pmf(l1, l2, k),
        None => Err(invalid(format!(
            "Skellam pmf is supported on the integers, got {n}"
        ))),
    }
}

fn pow_size<T: Scalar>(u: T, size: T) -> T {
    match size.as_integer() {
        Some(k) if k.unsigned_abs() <= i32::MAX as u64 => u.powi(k as i32),
        _ => (size * u.ln()).exp(),
    }
}

impl<T: Scalar> JumpLaw<T> {
    /// Validates and sorts the jumps. Sizes must be finite, nonzero and
    /// distinct; at least one jump is required.
    pub fn new(mut jumps: Vec<Jump<T>>) -> Result<Self> {
        if jumps.is_empty() {
            return Err(invalid("a jump law needs at least one jump size"));
        }
        for j in &jumps {
            if !j.size.is_finite() || j.size == T::zero() {
                return Err(invalid(format!(
                    "jump sizes must be finite and nonzero, got {}",
                    j.size
                )));
            }
        }
        jumps.sort_by(|a, b| a.size.partial_cmp(&b.size).expect("finite sizes"));
        for w in jumps.windows(2) {
            if w[0].size == w[1].size {
                return Err(invalid(format!("duplicate jump size {}", w[0].size)));
            }
        }
        Ok(Self { jumps })
    }

    /// Law from `(size, rate)` pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (T, RateFn<T>)>) -> Result<Self> {
        Self::new(
            pairs
                .into_iter()
                .map(|(size, rate)| Jump { size, rate })
                .collect(),
        )
    }

    /// Law with constant rates from `(size, rate)` pairs.
    pub fn homogeneous(pairs: &[(T, T)]) -> Result<Self> {
        Self::from_pairs(
            pairs
                .iter()
                .map(|&(s, c)| RateFn::constant(c).map(|r| (s, r)))
                .collect::<Result<Vec<_>>>()?,
        )
    }

    /// The classic Skellam law `N₁ - N₋₁` with constant rates.
    pub fn classic_skellam(up: T, down: T) -> Result<Self> {
        Self::homogeneous(&[(T::one(), up), (-T::one(), down)])
    }

    pub fn jumps(&self) -> &[Jump<T>] {
        &self.jumps
    }

    pub fn sizes(&self) -> impl Iterator<Item = T> + '_ {
        self.jumps.iter().map(|j| j.size)
    }

    pub fn rate_of(&self, size: T) -> Option<&RateFn<T>> {
        self.jumps.iter().find(|j| j.size == size).map(|j| &j.rate)
    }

    /// All sizes are integers.
    pub fn is_integer(&self) -> bool {
        self.jumps.iter().all(|j| j.size.as_integer().is_some())
    }

    /// All sizes are positive integers, so paths are nondecreasing.
    pub fn is_nondecreasing_integer(&self) -> bool {
        self.is_integer() && self.jumps.iter().all(|j| j.size > T::zero())
    }

    /// Integer sizes, or an error naming the operation.
    pub fn integer_sizes(&self, op: &str) -> Result<Vec<i64>> {
        self.jumps
            .iter()
            .map(|j| {
                j.size.as_integer().ok_or_else(|| {
                    Error::Unsupported(format!("{op}: continuous support (jump size {})", j.size))
                })
            })
            .collect()
    }

    /// Constant rates when every rate is constant.
    pub fn constant_rates(&self) -> Option<Vec<T>> {
        self.jumps.iter().map(|j| j.rate.as_constant()).collect()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.constant_rates().is_some()
    }

    pub(crate) fn require_homogeneous(&self, op: &str) -> Result<Vec<T>> {
        self.constant_rates()
            .ok_or_else(|| Error::HomogeneousOnly(format!("{op} requires constant rates")))
    }

    /// `Λ_i(t)` for each jump, in size order.
    pub fn cumulatives(&self, t: T) -> Result<Vec<T>> {
        self.jumps.iter().map(|j| j.rate.cumulative(t)).collect()
    }

    /// Rate of the jump-counting process, `Σ λ_i(t)`.
    pub fn total_rate(&self, t: T) -> T {
        self.jumps.iter().map(|j| j.rate.rate(t)).sum()
    }

    /// `Σ Λ_i(t)`, the mean number of jumps on `[0, t]`.
    pub fn total_cumulative(&self, t: T) -> Result<T> {
        Ok(self.cumulatives(t)?.into_iter().sum())
    }

    /// Probability generating function `u ↦ exp(-Σ Λ_i(t)(1 - u^i))`.
    ///
    /// Laws with nonnegative integer sizes accept every real `u`; otherwise
    /// `u > 0` is required.
    pub fn pgf(&self, t: T) -> Result<GenFn<T>> {
        let terms: Vec<(T, T)> = self.sizes().zip(self.cumulatives(t)?).collect();
        let domain = if self.is_nondecreasing_integer() {
            Domain::real_line()
        } else {
            Domain::positive()
        };
        Ok(GenFn::new(domain, move |u| {
            let expo: T = terms
                .iter()
                .map(|&(i, l)| l * (T::one() - pow_size(u, i)))
                .sum();
            (-expo).exp()
        }))
    }

    /// `E e^{mu S(t)} = exp(-Σ Λ_i(t)(1 - e^{i mu}))`.
    pub fn mgf(&self, t: T, mu: T) -> Result<T> {
        let cum = self.cumulatives(t)?;
        let expo: T = self
            .sizes()
            .zip(cum)
            .map(|(i, l)| l * (T::one() - (i * mu).exp()))
            .sum();
        Ok((-expo).exp())
    }

    /// Mean, variance, third and fourth central moments of `S(t)`.
    pub fn moments(&self, t: T) -> Result<MomentSet<T>> {
        let cum = self.cumulatives(t)?;
        let power_sum = |p: i32| -> T {
            self.sizes()
                .zip(cum.iter())
                .map(|(i, &l)| i.powi(p) * l)
                .sum()
        };
        let mean = power_sum(1);
        let variance = power_sum(2);
        let fisher_index = if mean == T::zero() {
            FisherIndex::UndefinedZeroMean
        } else {
            FisherIndex::Value(variance / mean)
        };
        Ok(MomentSet {
            mean,
            variance,
            central3: power_sum(3),
            central4: power_sum(4) + T::lit(3.0) * variance * variance,
            fisher_index,
        })
    }

    /// `Cov(S(s), S(t))` by polarization: `(V S(s) + V S(t) - V[S(t) - S(s)]) / 2`,
    /// with the increment variance taken from the delayed law.
    pub fn covariance(&self, s: T, t: T) -> Result<T> {
        check_time(s)?;
        check_time(t)?;
        let (lo, hi) = (s.min(t), s.max(t));
        let var_at = |law: &Self, x: T| -> Result<T> {
            let mut v = T::zero();
            for j in &law.jumps {
                v = v + j.size * j.size * j.rate.cumulative(x)?;
            }
            Ok(v)
        };
        let increment = self.increment_law(lo)?;
        let v_inc = var_at(&increment, hi - lo)?;
        Ok((var_at(self, lo)? + var_at(self, hi)? - v_inc) * T::lit(0.5))
    }

    /// Correlation decay exponent for constant or power rates; `None` ("n/a")
    /// when some rate is of another kind.
    pub fn correlation_decay_exponent(&self) -> Option<CorrelationDecay<T>> {
        let mut max_alpha = T::neg_infinity();
        for j in &self.jumps {
            max_alpha = max_alpha.max(j.rate.power_exponent()?);
        }
        Some(CorrelationDecay {
            exponent: (max_alpha + T::one()) * T::lit(0.5),
            long_range: max_alpha < T::one(),
        })
    }

    /// Law of `S(t)` on the integers by exact convolution of the component
    /// Poisson masses, each truncated at its `1 - 1e-12` quantile. The
    /// total-variation error is at most `|I| · 1e-12`.
    pub fn pmf_table(&self, t: T) -> Result<PmfTable<T>> {
        let sizes = self.integer_sizes("pmf")?;
        let cum = self.cumulatives(t)?;
        let mut table = PmfTable::point(0);
        for (&i, &l) in sizes.iter().zip(cum.iter()) {
            if l == T::zero() {
                continue;
            }
            let counts = poisson_table(l);
            let step = i.unsigned_abs() as usize;
            let span = (counts.len() - 1) * step + 1;
            let mut lattice = vec![T::zero(); span];
            for (k, &p) in counts.iter().enumerate() {
                let idx = if i > 0 { k * step } else { span - 1 - k * step };
                lattice[idx] = p;
            }
            let min = if i > 0 { 0 } else { -((span - 1) as i64) };
            table = table.convolve(&PmfTable {
                min,
                probs: lattice,
            });
        }
        Ok(table)
    }

    /// `P{S(t) = n}`; zero off the integers.
    pub fn pmf(&self, t: T, n: T) -> Result<T> {
        let table = self.pmf_table(t)?;
        Ok(n.as_integer().map_or(T::zero(), |k| table.prob(k)))
    }

    /// Law of `a S`: sizes multiplied by `a`, rates unchanged.
    pub fn scale(&self, a: T) -> Result<Self> {
        if a == T::zero() || !a.is_finite() {
            return Err(invalid("scale factor must be finite and nonzero"));
        }
        Self::new(
            self.jumps
                .iter()
                .map(|j| Jump {
                    size: a * j.size,
                    rate: j.rate.clone(),
                })
                .collect(),
        )
    }

    /// Law of the sum of independent processes: sizes united, rates added.
    pub fn superpose(laws: &[Self]) -> Result<Self> {
        let mut merged: Vec<Jump<T>> = Vec::new();
        for law in laws {
            for j in &law.jumps {
                match merged.iter_mut().find(|m| m.size == j.size) {
                    Some(m) => m.rate = m.rate.plus(&j.rate),
                    None => merged.push(j.clone()),
                }
            }
        }
        Self::new(merged)
    }

    /// Law of the increment `S(s + ·) - S(s)`: each rate delayed by `s`.
    pub fn increment_law(&self, s: T) -> Result<Self> {
        let jumps = self
            .jumps
            .iter()
            .map(|j| {
                Ok(Jump {
                    size: j.size,
                    rate: j.rate.shift(s)?.to_rate_fn(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(jumps)
    }

    /// Lévy measure `Σ λ_i δ_i` of a homogeneous law, as `(atom, mass)`
    /// pairs sorted by atom.
    pub fn levy_measure(&self) -> Result<Vec<(T, T)>> {
        let rates = self.require_homogeneous("Lévy measure")?;
        Ok(self.sizes().zip(rates).collect())
    }

    /// Replaces every rate by `f(size, rate)`.
    pub fn map_rates(&self, mut f: impl FnMut(T, &RateFn<T>) -> Result<RateFn<T>>) -> Result<Self> {
        Self::new(
            self.jumps
                .iter()
                .map(|j| {
                    Ok(Jump {
                        size: j.size,
                        rate: f(j.size, &j.rate)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        )
    }
}
