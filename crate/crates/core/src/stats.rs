//! Monte Carlo test statistics: mean bands, Kolmogorov-Smirnov, chi-square.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Sample mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    let v = if xs.len() > 1 {
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, v)
}

/// Central sample moments of order 2, 3 and 4 (biased, divided by `n`).
pub fn central_moments(xs: &[f64]) -> [f64; 3] {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let mut acc = [0.0; 3];
    for &x in xs {
        let d = x - m;
        acc[0] += d * d;
        acc[1] += d * d * d;
        acc[2] += d * d * d * d;
    }
    acc.map(|a| a / n)
}

/// Sample covariance of paired draws.
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / (n - 1.0)
}

/// Outcome of comparing an estimate with a target inside `k` standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Band {
    pub target: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub k: f64,
    pub pass: bool,
}

impl Band {
    pub fn new(target: f64, estimate: f64, std_error: f64, k: f64) -> Self {
        let pass = (estimate - target).abs() <= k * std_error || estimate == target;
        Self {
            target,
            estimate,
            std_error,
            k,
            pass,
        }
    }

    /// Band for the sample mean of `xs` around `target`.
    pub fn mean(xs: &[f64], target: f64, k: f64) -> Self {
        let (m, v) = mean_var(xs);
        Self::new(target, m, (v / xs.len() as f64).sqrt(), k)
    }

    /// Band for the sample variance, with the standard error estimated from
    /// the fourth central moment: `sqrt((m4 - m2²)/n)`.
    pub fn variance(xs: &[f64], target: f64, k: f64) -> Self {
        let [m2, _, m4] = central_moments(xs);
        let (_, v) = mean_var(xs);
        Self::new(target, v, ((m4 - m2 * m2) / xs.len() as f64).sqrt(), k)
    }

    /// Band for the sample covariance of paired draws.
    pub fn covariance(xs: &[f64], ys: &[f64], target: f64, k: f64) -> Self {
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let prods: Vec<f64> = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| (x - mx) * (y - my))
            .collect();
        let (_, v) = mean_var(&prods);
        Self::new(target, covariance(xs, ys), (v / n).sqrt(), k)
    }
}

/// Kolmogorov-Smirnov statistic with its asymptotic p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Effective sample size `n` (or `nm/(n+m)` for two samples).
    pub n_eff: f64,
}

impl KsResult {
    /// Critical value of the statistic at level `alpha`.
    pub fn critical_value(&self, alpha: f64) -> f64 {
        kolmogorov_critical(alpha) / self.n_eff.sqrt()
    }
}

/// Survival function of the Kolmogorov distribution,
/// `Q(λ) = 2 Σ_{k>=1} (-1)^{k-1} exp(-2 k² λ²)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// `c(alpha)` with `Q(c) = alpha`, by bisection.
pub fn kolmogorov_critical(alpha: f64) -> f64 {
    let (mut lo, mut hi) = (0.2, 5.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_q(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn ks_p(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_q((s + 0.12 + 0.11 / s) * d)
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    v
}

/// One-sample test of `xs` against a continuous cdf.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let v = sorted(xs);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (k, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max((k as f64 + 1.0) / n - f).max(f - k as f64 / n);
    }
    KsResult {
        statistic: d,
        p_value: ks_p(d, n),
        n_eff: n,
    }
}

/// Two-sample test. Ties are handled by stepping through equal values
/// together, which makes the test conservative for lattice data.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> KsResult {
    let (a, b) = (sorted(xs), sorted(ys));
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let n_eff = n * m / (n + m);
    KsResult {
        statistic: d,
        p_value: ks_p(d, n_eff),
        n_eff,
    }
}

/// Chi-square statistic, degrees of freedom and upper-tail p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: f64,
    pub p_value: f64,
}

fn chi2_upper(stat: f64, dof: f64) -> f64 {
    if dof < 1.0 {
        return 1.0;
    }
    1.0 - ChiSquared::new(dof).expect("positive dof").cdf(stat)
}

/// Goodness of fit of `observed` counts to cell probabilities `probs`.
/// Adjacent cells are pooled left to right until each expected count is at
/// least 5; leftover mass (`1 - Σ probs`) joins the last cell.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> ChiSquare {
    let n: u64 = observed.iter().sum();
    let nf = n as f64;
    let leftover = (1.0 - probs.iter().sum::<f64>()).max(0.0);
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (k, (&c, &p)) in observed.iter().zip(probs).enumerate() {
        o += c as f64;
        e += p * nf;
        if k + 1 == probs.len() {
            e += leftover * nf;
        }
        if e >= 5.0 {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => cells.push((o, e)),
        }
    }
    let statistic: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = cells.len() as f64 - 1.0;
    ChiSquare {
        statistic,
        dof,
        p_value: chi2_upper(statistic, dof),
    }
}

/// Pearson test of independence on a contingency table. Rows and columns
/// with zero totals are dropped.
pub fn chi_square_independence(table: &[Vec<u64>]) -> ChiSquare {
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let ncol = table.iter().map(|r| r.len()).max().unwrap_or(0);
    let cols: Vec<f64> = (0..ncol)
        .map(|j| {
            table
                .iter()
                .map(|r| r.get(j).copied().unwrap_or(0))
                .sum::<u64>() as f64
        })
        .collect();
    let n: f64 = rows.iter().sum();
    let mut stat = 0.0;
    for (i, r) in table.iter().enumerate() {
        if rows[i] == 0.0 {
            continue;
        }
        for (j, &c) in cols.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let e = rows[i] * c / n;
            let o = r.get(j).copied().unwrap_or(0) as f64;
            stat += (o - e).powi(2) / e;
        }
    }
    let nr = rows.iter().filter(|&&r| r > 0.0).count() as f64;
    let nc = cols.iter().filter(|&&c| c > 0.0).count() as f64;
    let dof = (nr - 1.0) * (nc - 1.0);
    ChiSquare {
        statistic: stat,
        dof,
        p_value: chi2_upper(stat, dof),
    }
}

/// Bins paired values into a contingency table by quantile cut points, so
/// every margin is well populated.
pub fn quantile_table(xs: &[f64], ys: &[f64], bins: usize) -> Vec<Vec<u64>> {
    let cuts = |v: &[f64]| -> Vec<f64> {
        let s = sorted(v);
        let mut c: Vec<f64> = (1..bins).map(|k| s[k * s.len() / bins]).collect();
        c.dedup();
        c
    };
    let (cx, cy) = (cuts(xs), cuts(ys));
    let mut table = vec![vec![0u64; cy.len() + 1]; cx.len() + 1];
    for (&x, &y) in xs.iter().zip(ys) {
        let i = cx.partition_point(|&c| c <= x);
        let j = cy.partition_point(|&c| c <= y);
        table[i][j] += 1;
    }
    table
}

/// Ordinary least squares `y ≈ intercept + slope x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Standard normal cdf.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}
