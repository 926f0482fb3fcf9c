//! Splitting a process into components: whole jumps routed at random
//! (independent components), or each jump divided into two sign-preserving
//! parts by a kernel (dependent components).

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::law::{Jump, JumpLaw};
use crate::rates::RateFn;
use crate::sampling::{Event, Path};
use crate::Scalar;

const ROW_TOL: f64 = 1e-12;

/// Routing probabilities per jump size: a row of `H` probabilities summing
/// to one. Two columns give the Bernoulli split with `p_i` in column 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct AssignmentRule<T: Scalar> {
    pub rows: Vec<AssignmentRow<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct AssignmentRow<T: Scalar> {
    pub size: T,
    pub p: Vec<T>,
}

impl<T: Scalar> AssignmentRule<T> {
    /// Bernoulli rule from `(size, p_i)` pairs: a size-`i` jump goes to the
    /// first component with probability `p_i`.
    pub fn bernoulli(pairs: &[(T, T)]) -> Result<Self> {
        let rule = Self {
            rows: pairs
                .iter()
                .map(|&(size, p)| AssignmentRow {
                    size,
                    p: vec![p, T::one() - p],
                })
                .collect(),
        };
        rule.validate()?;
        Ok(rule)
    }

    /// The same `p` for every size of `law`.
    pub fn uniform_bernoulli(law: &JumpLaw<T>, p: T) -> Result<Self> {
        Self::bernoulli(&law.sizes().map(|s| (s, p)).collect::<Vec<_>>())
    }

    pub fn multinomial(rows: Vec<(T, Vec<T>)>) -> Result<Self> {
        let rule = Self {
            rows: rows
                .into_iter()
                .map(|(size, p)| AssignmentRow { size, p })
                .collect(),
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn components(&self) -> usize {
        self.rows.first().map_or(0, |r| r.p.len())
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.components();
        if h == 0 {
            return Err(invalid(
                "assignment rule needs at least one row with one component",
            ));
        }
        for row in &self.rows {
            if row.p.len() != h {
                return Err(invalid(
                    "assignment rows must all have the same number of components",
                ));
            }
            if row.p.iter().any(|&p| !(p >= T::zero() && p <= T::one())) {
                return Err(invalid(format!(
                    "assignment probabilities for size {} must lie in [0, 1]",
                    row.size
                )));
            }
            let total: T = row.p.iter().copied().sum();
            if (total - T::one()).abs() > T::lit(ROW_TOL).max(T::lit(8.0) * T::epsilon()) {
                return Err(invalid(format!(
                    "assignment row for size {} sums to {total}, not 1",
                    row.size
                )));
            }
        }
        Ok(())
    }

    fn row(&self, size: T) -> Result<&[T]> {
        self.rows
            .iter()
            .find(|r| r.size == size)
            .map(|r| r.p.as_slice())
            .ok_or_else(|| invalid(format!("assignment rule has no row for jump size {size}")))
    }
}

/// Independent component laws with rates `p_i^{(h)} λ_i`.
pub fn multinomial_split<T: Scalar>(
    law: &JumpLaw<T>,
    rule: &AssignmentRule<T>,
) -> Result<Vec<JumpLaw<T>>> {
    rule.validate()?;
    (0..rule.components())
        .map(|h| law.map_rates(|size, rate| rate.scaled(rule.row(size)?[h])))
        .collect()
}

/// The two independent components of a Bernoulli split.
pub fn bernoulli_split_laws<T: Scalar>(
    law: &JumpLaw<T>,
    rule: &AssignmentRule<T>,
) -> Result<(JumpLaw<T>, JumpLaw<T>)> {
    if rule.components() != 2 {
        return Err(invalid("a Bernoulli rule has exactly two components"));
    }
    let mut parts = multinomial_split(law, rule)?;
    let second = parts.pop().expect("two parts");
    let first = parts.pop().expect("two parts");
    Ok((first, second))
}

/// Routes each event of `path` to one of the rule's components.
pub fn multinomial_split_path<T: Scalar, R: Rng + ?Sized>(
    path: &Path<T>,
    rule: &AssignmentRule<T>,
    rng: &mut R,
) -> Result<Vec<Path<T>>> {
    rule.validate()?;
    let mut parts: Vec<Vec<Event<T>>> = vec![Vec::new(); rule.components()];
    for e in path.events() {
        let row = rule.row(e.jump)?;
        let h = WeightedIndex::new(row.iter().map(|p| p.as_f64()))
            .map_err(|err| invalid(format!("assignment row: {err}")))?
            .sample(rng);
        parts[h].push(*e);
    }
    parts
        .into_iter()
        .map(|ev| Path::from_events(path.horizon(), ev))
        .collect()
}

/// Bernoulli routing of a path's events; the outputs add back to the input.
pub fn bernoulli_split_path<T: Scalar, R: Rng + ?Sized>(
    path: &Path<T>,
    rule: &AssignmentRule<T>,
    rng: &mut R,
) -> Result<(Path<T>, Path<T>)> {
    if rule.components() != 2 {
        return Err(invalid("a Bernoulli rule has exactly two components"));
    }
    let mut parts = multinomial_split_path(path, rule, rng)?;
    let second = parts.pop().expect("two parts");
    Ok((parts.pop().expect("two parts"), second))
}

/// Conditional law `q(j; i)`, `j = 0..=|i|`, of the part of a size-`i` jump
/// assigned to the first component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct SplitKernel<T: Scalar> {
    pub rows: Vec<KernelRow<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct KernelRow<T: Scalar> {
    pub i: i64,
    pub q: Vec<T>,
}

impl<T: Scalar> SplitKernel<T> {
    pub fn new(rows: Vec<KernelRow<T>>) -> Result<Self> {
        let k = Self { rows };
        k.validate()?;
        Ok(k)
    }

    /// Binomial kernel `q(j; i) = C(|i|, j) p^j (1-p)^{|i|-j}` for each size.
    pub fn binomial(sizes: &[i64], p: T) -> Result<Self> {
        let rows = sizes
            .iter()
            .map(|&i| {
                let n = i.unsigned_abs() as usize;
                let mut q = Vec::with_capacity(n + 1);
                let mut c = T::one();
                for j in 0..=n {
                    if j > 0 {
                        c = c * T::of_usize(n + 1 - j) / T::of_usize(j);
                    }
                    q.push(c * p.powi(j as i32) * (T::one() - p).powi((n - j) as i32));
                }
                KernelRow { i, q }
            })
            .collect();
        Self::new(rows)
    }

    pub fn validate(&self) -> Result<()> {
        for row in &self.rows {
            if row.i == 0 {
                return Err(invalid("kernel rows need a nonzero jump size"));
            }
            if row.q.len() != row.i.unsigned_abs() as usize + 1 {
                return Err(invalid(format!(
                    "kernel row for i = {} needs |i| + 1 entries",
                    row.i
                )));
            }
            if row.q.iter().any(|&q| !(q >= T::zero())) {
                return Err(invalid(format!(
                    "kernel row for i = {} has negative entries",
                    row.i
                )));
            }
            let total: T = row.q.iter().copied().sum();
            if (total - T::one()).abs() > T::lit(ROW_TOL).max(T::lit(8.0) * T::epsilon()) {
                return Err(invalid(format!(
                    "kernel row for i = {} sums to {total}, not 1",
                    row.i
                )));
            }
        }
        Ok(())
    }

    pub fn row(&self, i: i64) -> Result<&[T]> {
        self.rows
            .iter()
            .find(|r| r.i == i)
            .map(|r| r.q.as_slice())
            .ok_or_else(|| invalid(format!("kernel has no row for jump size {i}")))
    }

    /// `E[Y | X = i]`.
    pub fn mean_part(&self, i: i64) -> Result<T> {
        Ok(self
            .row(i)?
            .iter()
            .enumerate()
            .map(|(j, &q)| T::of_usize(j) * q)
            .sum())
    }

    /// `E[Y (|X| - Y) | X = i]`.
    pub fn cross_moment(&self, i: i64) -> Result<T> {
        let n = T::of_i64(i.abs());
        Ok(self
            .row(i)?
            .iter()
            .enumerate()
            .map(|(j, &q)| {
                let y = T::of_usize(j);
                y * (n - y) * q
            })
            .sum())
    }
}

/// Marginal laws of a kernel split together with the data for their
/// covariance. The components are dependent.
#[derive(Debug, Clone)]
pub struct KernelSplit<T: Scalar> {
    pub first: JumpLaw<T>,
    pub second: JumpLaw<T>,
    law: JumpLaw<T>,
    sizes: Vec<i64>,
    kernel: SplitKernel<T>,
}

impl<T: Scalar> KernelSplit<T> {
    /// Always false: a kernel split couples the components.
    pub fn independent(&self) -> bool {
        false
    }

    /// `Cov(S₁(t), S₂(t)) = Σ Λ_i(t) E[Y(|X| - Y) | X = i]`.
    ///
    /// ```
    /// use skellam_core::{decomposition::{kernel_split_laws, SplitKernel}, JumpLaw};
    /// let law = JumpLaw::homogeneous(&[(3.0, 2.0)]).unwrap();
    /// let p = 0.25f64;
    /// let split = kernel_split_laws(&law, &SplitKernel::binomial(&[3], p).unwrap()).unwrap();
    /// let cov = split.covariance(1.0).unwrap();
    /// // Λ |i| (|i| - 1) p (1 - p), versus the same expression without (1 - p).
    /// assert!((cov - 2.0 * 3.0 * 2.0 * p * (1.0 - p)).abs() < 1e-12);
    /// let without_factor = 2.0 * 3.0 * 2.0 * p;
    /// assert!((cov / without_factor - (1.0 - p)).abs() < 1e-12);
    /// ```
    pub fn covariance(&self, t: T) -> Result<T> {
        let cum = self.law.cumulatives(t)?;
        let mut acc = T::zero();
        for (&i, l) in self.sizes.iter().zip(cum) {
            acc = acc + l * self.kernel.cross_moment(i)?;
        }
        Ok(acc)
    }

    /// `(E S₁(t), E S₂(t))` from the kernel's conditional means.
    pub fn means(&self, t: T) -> Result<(T, T)> {
        let cum = self.law.cumulatives(t)?;
        let (mut m1, mut m2) = (T::zero(), T::zero());
        for (&i, l) in self.sizes.iter().zip(cum) {
            let sgn = T::of_i64(i.signum());
            let ey = self.kernel.mean_part(i)?;
            m1 = m1 + l * sgn * ey;
            m2 = m2 + l * sgn * (T::of_i64(i.abs()) - ey);
        }
        Ok((m1, m2))
    }
}

/// Marginal component laws of a kernel split. Component 1 jumps by `j` at
/// rate `Σ λ_i q(|j|; i)` over sizes `i` with the sign of `j` and
/// `|i| >= |j|`; component 2 uses `q(|i| - |j|; i)`. Both range over the
/// nonzero integers between `min(0, min I)` and `max(0, max I)`.
pub fn kernel_split_laws<T: Scalar>(
    law: &JumpLaw<T>,
    kernel: &SplitKernel<T>,
) -> Result<KernelSplit<T>> {
    let sizes = law.integer_sizes("kernel split")?;
    kernel.validate()?;
    for &i in &sizes {
        kernel.row(i)?;
    }
    let lo = sizes.iter().copied().min().unwrap().min(0);
    let hi = sizes.iter().copied().max().unwrap().max(0);
    let build = |part_of: &dyn Fn(i64, i64) -> usize| -> Result<JumpLaw<T>> {
        let mut jumps = Vec::new();
        for j in lo..=hi {
            if j == 0 {
                continue;
            }
            let mut terms = Vec::new();
            for (jump, &i) in law.jumps().iter().zip(&sizes) {
                if i.signum() != j.signum() || i.abs() < j.abs() {
                    continue;
                }
                let q = kernel.row(i)?[part_of(i, j)];
                if q > T::zero() && !jump.rate.is_zero() {
                    terms.push(jump.rate.scaled(q)?);
                }
            }
            let rate = match terms.len() {
                0 => RateFn::zero(),
                _ => terms
                    .iter()
                    .skip(1)
                    .fold(terms[0].clone(), |acc, r| acc.plus(r)),
            };
            jumps.push(Jump {
                size: T::of_i64(j),
                rate,
            });
        }
        JumpLaw::new(jumps)
    };
    let first = build(&|_i, j| j.unsigned_abs() as usize)?;
    let second = build(&|i, j| (i.abs() - j.abs()) as usize)?;
    Ok(KernelSplit {
        first,
        second,
        law: law.clone(),
        sizes,
        kernel: kernel.clone(),
    })
}

/// Splits each event of size `i` into `sgn(i) Y` and `sgn(i)(|i| - Y)` with
/// `Y ~ q(·; i)`; zero parts are dropped. The outputs add back to the input.
pub fn kernel_split_path<T: Scalar, R: Rng + ?Sized>(
    path: &Path<T>,
    kernel: &SplitKernel<T>,
    rng: &mut R,
) -> Result<(Path<T>, Path<T>)> {
    kernel.validate()?;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for e in path.events() {
        let i = e.jump.as_integer().ok_or_else(|| {
            Error::Unsupported(format!("kernel split of non-integer jump {}", e.jump))
        })?;
        let row = kernel.row(i)?;
        let y = WeightedIndex::new(row.iter().map(|q| q.as_f64()))
            .map_err(|err| invalid(format!("kernel row: {err}")))?
            .sample(rng) as i64;
        let sgn = i.signum();
        if y != 0 {
            a.push(Event {
                time: e.time,
                jump: T::of_i64(sgn * y),
            });
        }
        if y != i.abs() {
            b.push(Event {
                time: e.time,
                jump: T::of_i64(sgn * (i.abs() - y)),
            });
        }
    }
    Ok((
        Path::from_events(path.horizon(), a)?,
        Path::from_events(path.horizon(), b)?,
    ))
}

/// Joint generating function
/// `E u^{S₁(t)} v^{S₂(t)} = exp(-Σ Λ_i(t)(1 - E[u^{sgn(i) Y} v^{sgn(i)(|i| - Y)} | X = i]))`.
///
/// Requires `u, v > 0` when the law has negative sizes.
pub fn joint_pgf_kernel<T: Scalar>(
    law: &JumpLaw<T>,
    kernel: &SplitKernel<T>,
    t: T,
    u: T,
    v: T,
) -> Result<T> {
    let sizes = law.integer_sizes("joint generating function")?;
    if sizes.iter().any(|&i| i < 0) && !(u > T::zero() && v > T::zero()) {
        return Err(Error::Domain(format!(
            "(u, v) = ({u}, {v}) must be positive with negative jump sizes"
        )));
    }
    let cum = law.cumulatives(t)?;
    let mut expo = T::zero();
    for (&i, l) in sizes.iter().zip(cum) {
        let row = kernel.row(i)?;
        let sgn = i.signum() as i32;
        let n = i.abs() as i32;
        let inner: T = row
            .iter()
            .enumerate()
            .map(|(y, &q)| q * u.powi(sgn * y as i32) * v.powi(sgn * (n - y as i32)))
            .sum();
        expo = expo + l * (T::one() - inner);
    }
    Ok((-expo).exp())
}
