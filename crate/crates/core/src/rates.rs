//! Nonnegative rate functions `λ(t)` and their cumulative integrals `Λ(t)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_time, invalid, Error, Result};
use crate::numeric::{bisect_increasing, simpson};
use crate::Scalar;

/// Serialized form of a rate function, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
pub enum RateSpec<T> {
    /// `λ(t) = c`.
    Constant { c: T },
    /// `λ(t) = a (t + offset)^alpha`, `alpha > -1`.
    Power {
        a: T,
        alpha: T,
        #[serde(default, skip_serializing_if = "is_zero")]
        offset: T,
    },
    /// Right-continuous step function; `breaks[0] = 0`, constant after the
    /// last break.
    Piecewise { breaks: Vec<T>, values: Vec<T> },
    /// Linear interpolation on `grid` (starting at 0), constant beyond the
    /// last grid point.
    Tabulated { grid: Vec<T>, values: Vec<T> },
    /// Pointwise sum of rate functions.
    Sum { terms: Vec<RateSpec<T>> },
}

fn is_zero<T: Scalar>(x: &T) -> bool {
    *x == T::zero()
}

#[derive(Debug, Clone, PartialEq)]
enum Repr<T: Scalar> {
    Constant(T),
    Power {
        a: T,
        alpha: T,
        offset: T,
    },
    Piecewise {
        breaks: Vec<T>,
        values: Vec<T>,
        prefix: Vec<T>,
    },
    Tabulated {
        grid: Vec<T>,
        values: Vec<T>,
        prefix: Vec<T>,
    },
    Sum(Vec<RateFn<T>>),
}

/// A validated rate function. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RateSpec<T>", into = "RateSpec<T>", bound = "T: Scalar")]
pub struct RateFn<T: Scalar>(Repr<T>);

impl<T: Scalar> TryFrom<RateSpec<T>> for RateFn<T> {
    type Error = Error;

    fn try_from(spec: RateSpec<T>) -> Result<Self> {
        match spec {
            RateSpec::Constant { c } => Self::constant(c),
            RateSpec::Power { a, alpha, offset } => Self::power_with_offset(a, alpha, offset),
            RateSpec::Piecewise { breaks, values } => Self::piecewise(breaks, values),
            RateSpec::Tabulated { grid, values } => Self::tabulated(grid, values),
            RateSpec::Sum { terms } => {
                let terms = terms
                    .into_iter()
                    .map(Self::try_from)
                    .collect::<Result<Vec<_>>>()?;
                Self::sum(terms)
            }
        }
    }
}

impl<T: Scalar> From<RateFn<T>> for RateSpec<T> {
    fn from(r: RateFn<T>) -> Self {
        r.spec()
    }
}

fn check_nonneg<T: Scalar>(name: &str, x: T) -> Result<()> {
    if x.is_finite() && x >= T::zero() {
        Ok(())
    } else {
        Err(invalid(format!(
            "{name} must be finite and nonnegative, got {x}"
        )))
    }
}

fn check_knots<T: Scalar>(name: &str, knots: &[T], values: &[T]) -> Result<()> {
    if knots.is_empty() || knots.len() != values.len() {
        return Err(invalid(format!(
            "{name}: need equally many knots and values (got {} and {})",
            knots.len(),
            values.len()
        )));
    }
    if knots[0] != T::zero() {
        return Err(invalid(format!(
            "{name}: first knot must be 0, got {}",
            knots[0]
        )));
    }
    for w in knots.windows(2) {
        if !(w[1] > w[0]) || !w[1].is_finite() {
            return Err(invalid(format!(
                "{name}: knots must be finite and strictly increasing"
            )));
        }
    }
    for &v in values {
        check_nonneg(&format!("{name} value"), v)?;
    }
    Ok(())
}

/// Index of the last knot `<= t` (knots start at 0, `t >= 0`).
fn segment<T: Scalar>(knots: &[T], t: T) -> usize {
    knots.partition_point(|&k| k <= t).saturating_sub(1)
}

fn interp<T: Scalar>(grid: &[T], values: &[T], t: T) -> T {
    let k = segment(grid, t);
    if k + 1 >= grid.len() {
        return values[values.len() - 1];
    }
    let w = (t - grid[k]) / (grid[k + 1] - grid[k]);
    values[k] + w * (values[k + 1] - values[k])
}

impl<T: Scalar> RateFn<T> {
    pub fn constant(c: T) -> Result<Self> {
        check_nonneg("constant rate", c)?;
        Ok(Self(Repr::Constant(c)))
    }

    /// The identically zero rate.
    pub fn zero() -> Self {
        Self(Repr::Constant(T::zero()))
    }

    /// `λ(t) = a t^alpha`.
    pub fn power(a: T, alpha: T) -> Result<Self> {
        Self::power_with_offset(a, alpha, T::zero())
    }

    /// `λ(t) = a (t + offset)^alpha`; the offset form is what shifting a
    /// power rate produces.
    pub fn power_with_offset(a: T, alpha: T, offset: T) -> Result<Self> {
        check_nonneg("power scale a", a)?;
        check_nonneg("power offset", offset)?;
        if !alpha.is_finite() || alpha <= -T::one() {
            return Err(invalid(format!(
                "power exponent must exceed -1 for a finite cumulative rate, got {alpha}"
            )));
        }
        Ok(Self(Repr::Power { a, alpha, offset }))
    }

    pub fn piecewise(breaks: Vec<T>, values: Vec<T>) -> Result<Self> {
        check_knots("piecewise rate", &breaks, &values)?;
        let mut prefix = Vec::with_capacity(breaks.len());
        let mut acc = T::zero();
        prefix.push(acc);
        for k in 1..breaks.len() {
            acc = acc + values[k - 1] * (breaks[k] - breaks[k - 1]);
            prefix.push(acc);
        }
        Ok(Self(Repr::Piecewise {
            breaks,
            values,
            prefix,
        }))
    }

    pub fn tabulated(grid: Vec<T>, values: Vec<T>) -> Result<Self> {
        check_knots("tabulated rate", &grid, &values)?;
        let mut prefix = Vec::with_capacity(grid.len());
        let mut acc = T::zero();
        prefix.push(acc);
        for k in 1..grid.len() {
            // Simpson is exact on each linear segment.
            acc = acc + simpson(|x| interp(&grid, &values, x), grid[k - 1], grid[k], 2);
            prefix.push(acc);
        }
        Ok(Self(Repr::Tabulated {
            grid,
            values,
            prefix,
        }))
    }

    /// Pointwise sum. Nested sums are flattened; a single term is returned
    /// as is.
    pub fn sum(terms: Vec<RateFn<T>>) -> Result<Self> {
        if terms.is_empty() {
            return Err(invalid("sum rate needs at least one term"));
        }
        let mut flat = Vec::new();
        for t in terms {
            match t.0 {
                Repr::Sum(inner) => flat.extend(inner),
                other => flat.push(RateFn(other)),
            }
        }
        if flat.len() == 1 {
            return Ok(flat.pop().unwrap());
        }
        Ok(Self(Repr::Sum(flat)))
    }

    /// Serializable description.
    pub fn spec(&self) -> RateSpec<T> {
        match &self.0 {
            Repr::Constant(c) => RateSpec::Constant { c: *c },
            Repr::Power { a, alpha, offset } => RateSpec::Power {
                a: *a,
                alpha: *alpha,
                offset: *offset,
            },
            Repr::Piecewise { breaks, values, .. } => RateSpec::Piecewise {
                breaks: breaks.clone(),
                values: values.clone(),
            },
            Repr::Tabulated { grid, values, .. } => RateSpec::Tabulated {
                grid: grid.clone(),
                values: values.clone(),
            },
            Repr::Sum(terms) => RateSpec::Sum {
                terms: terms.iter().map(|t| t.spec()).collect(),
            },
        }
    }

    /// `Some(c)` when the rate is the constant `c`.
    pub fn as_constant(&self) -> Option<T> {
        match &self.0 {
            Repr::Constant(c) => Some(*c),
            Repr::Power { a, .. } if *a == T::zero() => Some(T::zero()),
            Repr::Piecewise { values, .. } | Repr::Tabulated { values, .. }
                if values.iter().all(|&v| v == values[0]) =>
            {
                Some(values[0])
            }
            _ => None,
        }
    }

    /// Times where the rate may fail to be smooth: piecewise breaks and
    /// tabulation knots, sorted and deduplicated.
    pub fn knots(&self) -> Vec<T> {
        fn collect<T: Scalar>(spec: &RateSpec<T>, out: &mut Vec<T>) {
            match spec {
                RateSpec::Piecewise { breaks, .. } => out.extend_from_slice(breaks),
                RateSpec::Tabulated { grid, .. } => out.extend_from_slice(grid),
                RateSpec::Sum { terms } => terms.iter().for_each(|t| collect(t, out)),
                _ => {}
            }
        }
        let mut out = Vec::new();
        collect(&self.spec(), &mut out);
        out.sort_by(|a, b| a.partial_cmp(b).expect("finite knots"));
        out.dedup();
        out
    }

    /// Growth exponent for the correlation-decay analysis: 0 for constant
    /// rates, `alpha` for power rates, `None` otherwise.
    pub fn power_exponent(&self) -> Option<T> {
        match &self.0 {
            Repr::Constant(_) => Some(T::zero()),
            Repr::Power { alpha, .. } => Some(*alpha),
            _ => None,
        }
    }

    /// True when the rate vanishes identically.
    pub fn is_zero(&self) -> bool {
        match &self.0 {
            Repr::Sum(terms) => terms.iter().all(|t| t.is_zero()),
            _ => self.as_constant() == Some(T::zero()),
        }
    }

    /// `λ(t)` for `t >= 0`.
    pub fn rate(&self, t: T) -> T {
        match &self.0 {
            Repr::Constant(c) => *c,
            Repr::Power { a, alpha, offset } => {
                if *a == T::zero() {
                    T::zero()
                } else {
                    *a * (t + *offset).powf(*alpha)
                }
            }
            Repr::Piecewise { breaks, values, .. } => values[segment(breaks, t)],
            Repr::Tabulated { grid, values, .. } => interp(grid, values, t),
            Repr::Sum(terms) => terms.iter().map(|r| r.rate(t)).sum(),
        }
    }

    /// `Λ(t) = ∫₀ᵗ λ(s) ds`.
    pub fn cumulative(&self, t: T) -> Result<T> {
        check_time(t)?;
        Ok(self.cumulative_unchecked(t))
    }

    fn cumulative_unchecked(&self, t: T) -> T {
        match &self.0 {
            Repr::Constant(c) => *c * t,
            Repr::Power { a, alpha, offset } => {
                let p = *alpha + T::one();
                let lower = if *offset == T::zero() {
                    T::zero()
                } else {
                    offset.powf(p)
                };
                *a / p * ((t + *offset).powf(p) - lower)
            }
            Repr::Piecewise {
                breaks,
                values,
                prefix,
            } => {
                let k = segment(breaks, t);
                prefix[k] + values[k] * (t - breaks[k])
            }
            Repr::Tabulated {
                grid,
                values,
                prefix,
            } => {
                let k = segment(grid, t);
                let hi = if k + 1 < grid.len() {
                    t.min(grid[k + 1])
                } else {
                    t
                };
                let within = simpson(|x| interp(grid, values, x), grid[k], hi, 2);
                let beyond = if hi < t {
                    values[values.len() - 1] * (t - hi)
                } else {
                    T::zero()
                };
                prefix[k] + within + beyond
            }
            Repr::Sum(terms) => terms.iter().map(|r| r.cumulative_unchecked(t)).sum(),
        }
    }

    /// `Λ(b) - Λ(a)`.
    pub fn cumulative_between(&self, a: T, b: T) -> Result<T> {
        Ok(self.cumulative(b)? - self.cumulative(a)?)
    }

    /// `lim_{t→∞} Λ(t)`, infinite unless the rate eventually vanishes.
    pub fn total_mass(&self) -> T {
        match &self.0 {
            Repr::Constant(c) if *c == T::zero() => T::zero(),
            Repr::Power { a, .. } if *a == T::zero() => T::zero(),
            Repr::Piecewise { values, prefix, .. } | Repr::Tabulated { values, prefix, .. }
                if values[values.len() - 1] == T::zero() =>
            {
                prefix[prefix.len() - 1]
            }
            Repr::Sum(terms) => terms.iter().map(|r| r.total_mass()).sum(),
            _ => T::infinity(),
        }
    }

    /// Whether [`invert_cumulative`](Self::invert_cumulative) has an exact
    /// closed form.
    pub fn has_closed_form_inverse(&self) -> bool {
        matches!(
            self.0,
            Repr::Constant(_) | Repr::Power { .. } | Repr::Piecewise { .. }
        )
    }

    /// `inf{t : Λ(t) >= u}`; closed form where available, otherwise bisection
    /// to `1e-12` in `t`.
    pub fn invert_cumulative(&self, u: T) -> Result<T> {
        if u.is_nan() || u < T::zero() {
            return Err(invalid(format!(
                "cumulative level must be nonnegative, got {u}"
            )));
        }
        if u == T::zero() {
            return Ok(T::zero());
        }
        let total = self.total_mass();
        if u > total {
            return Err(Error::BeyondHorizon {
                u: u.as_f64(),
                total: total.as_f64(),
            });
        }
        match &self.0 {
            Repr::Constant(c) => Ok(u / *c),
            Repr::Power { a, alpha, offset } => {
                let p = *alpha + T::one();
                let lower = if *offset == T::zero() {
                    T::zero()
                } else {
                    offset.powf(p)
                };
                Ok((u * p / *a + lower).powf(T::one() / p) - *offset)
            }
            Repr::Piecewise {
                breaks,
                values,
                prefix,
            } => {
                // Last knot whose prefix mass is below u; its segment has a
                // positive rate.
                let k = prefix.partition_point(|&m| m < u).saturating_sub(1);
                Ok(breaks[k] + (u - prefix[k]) / values[k])
            }
            _ => {
                let mut hi = T::one();
                while self.cumulative_unchecked(hi) < u {
                    hi = hi + hi;
                    if !hi.is_finite() {
                        return Err(Error::Numerical(
                            "cumulative rate inversion diverged".into(),
                        ));
                    }
                }
                Ok(bisect_increasing(
                    |t| self.cumulative_unchecked(t),
                    u,
                    T::zero(),
                    hi,
                    T::lit(1e-12),
                ))
            }
        }
    }

    /// A constant dominating `λ` on `[a, b]`; infinite when the rate is
    /// unbounded there (power rates with negative exponent at 0).
    pub fn upper_bound_on(&self, a: T, b: T) -> T {
        match &self.0 {
            Repr::Constant(c) => *c,
            Repr::Power {
                a: scale,
                alpha,
                offset,
            } => {
                if *scale == T::zero() {
                    return T::zero();
                }
                let lo = (a + *offset).powf(*alpha);
                let hi = (b + *offset).powf(*alpha);
                *scale * lo.max(hi)
            }
            Repr::Piecewise { breaks, values, .. } => {
                let (i, j) = (segment(breaks, a), segment(breaks, b));
                values[i..=j].iter().copied().fold(T::zero(), T::max)
            }
            Repr::Tabulated { grid, values, .. } => {
                let (i, j) = (segment(grid, a), segment(grid, b));
                let inner = values[(i + 1).min(j)..=j]
                    .iter()
                    .copied()
                    .fold(T::zero(), T::max);
                inner
                    .max(interp(grid, values, a))
                    .max(interp(grid, values, b))
            }
            Repr::Sum(terms) => terms.iter().map(|r| r.upper_bound_on(a, b)).sum(),
        }
    }

    /// `p · λ` for `p >= 0`.
    pub fn scaled(&self, p: T) -> Result<Self> {
        check_nonneg("rate scale factor", p)?;
        Ok(match &self.0 {
            Repr::Constant(c) => Self(Repr::Constant(*c * p)),
            Repr::Power { a, alpha, offset } => Self(Repr::Power {
                a: *a * p,
                alpha: *alpha,
                offset: *offset,
            }),
            Repr::Piecewise {
                breaks,
                values,
                prefix,
            } => Self(Repr::Piecewise {
                breaks: breaks.clone(),
                values: values.iter().map(|&v| v * p).collect(),
                prefix: prefix.iter().map(|&v| v * p).collect(),
            }),
            Repr::Tabulated {
                grid,
                values,
                prefix,
            } => Self(Repr::Tabulated {
                grid: grid.clone(),
                values: values.iter().map(|&v| v * p).collect(),
                prefix: prefix.iter().map(|&v| v * p).collect(),
            }),
            Repr::Sum(terms) => Self(Repr::Sum(
                terms.iter().map(|t| t.scaled(p)).collect::<Result<_>>()?,
            )),
        })
    }

    /// Pointwise sum `λ + μ`, merged into a single kind when the kinds allow
    /// it exactly.
    pub fn plus(&self, other: &Self) -> Self {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        match (&self.0, &other.0) {
            (Repr::Constant(a), Repr::Constant(b)) => Self(Repr::Constant(*a + *b)),
            (
                Repr::Power {
                    a: a1,
                    alpha: p1,
                    offset: o1,
                },
                Repr::Power {
                    a: a2,
                    alpha: p2,
                    offset: o2,
                },
            ) if p1 == p2 && o1 == o2 => Self(Repr::Power {
                a: *a1 + *a2,
                alpha: *p1,
                offset: *o1,
            }),
            (
                Repr::Constant(_) | Repr::Piecewise { .. },
                Repr::Constant(_) | Repr::Piecewise { .. },
            ) => {
                let (b1, _) = self.steps();
                let (b2, _) = other.steps();
                let mut breaks: Vec<T> = b1.into_iter().chain(b2).collect();
                breaks.sort_by(|x, y| x.partial_cmp(y).expect("finite breaks"));
                breaks.dedup();
                let values = breaks
                    .iter()
                    .map(|&t| self.rate(t) + other.rate(t))
                    .collect();
                Self::piecewise(breaks, values).expect("merged steps stay valid")
            }
            _ => Self::sum(vec![self.clone(), other.clone()]).expect("two terms"),
        }
    }

    fn steps(&self) -> (Vec<T>, Vec<T>) {
        match &self.0 {
            Repr::Constant(c) => (vec![T::zero()], vec![*c]),
            Repr::Piecewise { breaks, values, .. } => (breaks.clone(), values.clone()),
            _ => unreachable!("only step kinds"),
        }
    }

    /// The delayed rate `t ↦ λ(s + t)`.
    pub fn shift(&self, s: T) -> Result<ShiftedRateFn<T>> {
        check_time(s)?;
        Ok(ShiftedRateFn {
            base: self.clone(),
            shift: s,
        })
    }
}

/// A rate function delayed by `shift`: evaluates `λ(shift + t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedRateFn<T: Scalar> {
    base: RateFn<T>,
    shift: T,
}

impl<T: Scalar> ShiftedRateFn<T> {
    pub fn base(&self) -> &RateFn<T> {
        &self.base
    }

    pub fn shift_amount(&self) -> T {
        self.shift
    }

    pub fn rate(&self, t: T) -> T {
        self.base.rate(self.shift + t)
    }

    /// `Λ(s + t) - Λ(s)`.
    pub fn cumulative(&self, t: T) -> Result<T> {
        check_time(t)?;
        Ok(self.base.cumulative_unchecked(self.shift + t)
            - self.base.cumulative_unchecked(self.shift))
    }

    /// The same function expressed as a plain [`RateFn`] of the same kind.
    pub fn to_rate_fn(&self) -> RateFn<T> {
        let s = self.shift;
        if s == T::zero() {
            return self.base.clone();
        }
        match &self.base.0 {
            Repr::Constant(_) => self.base.clone(),
            Repr::Power { a, alpha, offset } => RateFn(Repr::Power {
                a: *a,
                alpha: *alpha,
                offset: *offset + s,
            }),
            Repr::Piecewise { breaks, values, .. } => {
                let k = segment(breaks, s);
                let nb = std::iter::once(T::zero())
                    .chain(breaks[k + 1..].iter().map(|&b| b - s))
                    .collect();
                RateFn::piecewise(nb, values[k..].to_vec()).expect("suffix of a valid step rate")
            }
            Repr::Tabulated { grid, values, .. } => {
                let k = segment(grid, s);
                let ng: Vec<T> = std::iter::once(T::zero())
                    .chain(grid[k + 1..].iter().map(|&g| g - s))
                    .collect();
                let nv = std::iter::once(interp(grid, values, s))
                    .chain(values[k + 1..].iter().copied())
                    .collect();
                // Drop a knot that collapsed onto 0 after shifting.
                let (ng, nv): (Vec<T>, Vec<T>) = dedup_knots(ng, nv);
                RateFn::tabulated(ng, nv).expect("suffix of a valid table")
            }
            Repr::Sum(terms) => RateFn(Repr::Sum(
                terms
                    .iter()
                    .map(|t| {
                        ShiftedRateFn {
                            base: t.clone(),
                            shift: s,
                        }
                        .to_rate_fn()
                    })
                    .collect(),
            )),
        }
    }
}

fn dedup_knots<T: Scalar>(grid: Vec<T>, values: Vec<T>) -> (Vec<T>, Vec<T>) {
    let mut g = Vec::with_capacity(grid.len());
    let mut v = Vec::with_capacity(values.len());
    for (x, y) in grid.into_iter().zip(values) {
        if g.last().is_some_and(|&l: &T| !(x > l)) {
            continue;
        }
        g.push(x);
        v.push(y);
    }
    (g, v)
}
