//! Exact path simulation: per-size Poisson superposition, the compound
//! Poisson form for constant rates, and the binomial lattice scheme.

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Geometric, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_time, invalid, Error, Result};
use crate::law::JumpLaw;
use crate::rates::RateFn;
use crate::Scalar;

/// Reproducible random stream: ChaCha8 keyed by `seed`, with an independent
/// `stream` id per path or worker.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Runs `f` for draws `0..n` in parallel, each on its own stream
/// `(seed, stream_base + k)`, and returns results in draw order.
pub fn par_draws<R, F>(n: usize, seed: u64, stream_base: u64, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(&mut RngStream) -> R + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|k| f(&mut RngStream::new(seed, stream_base + k as u64)))
        .collect()
}

/// Fallible variant of [`par_draws`]; the first error in draw order wins.
pub fn try_par_draws<R, F>(n: usize, seed: u64, stream_base: u64, f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(&mut RngStream) -> Result<R> + Sync,
{
    par_draws(n, seed, stream_base, f).into_iter().collect()
}

pub(crate) fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    Poisson::new(mean)
        .expect("positive finite mean")
        .sample(rng) as u64
}

pub(crate) fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

/// One jump of a path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct Event<T: Scalar> {
    pub time: T,
    pub jump: T,
}

/// A càdlàg step path on `[0, horizon]` with `value(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct Path<T: Scalar> {
    horizon: T,
    events: Vec<Event<T>>,
    #[serde(skip)]
    levels: Vec<T>,
    seed: Option<u64>,
    stream: Option<u64>,
}

impl<T: Scalar> Path<T> {
    /// Builds a path from unsorted events in `(0, horizon]`. Events sharing a
    /// time are merged by summing their sizes; a merged size of zero leaves
    /// no event.
    pub fn from_events(horizon: T, mut events: Vec<Event<T>>) -> Result<Self> {
        check_time(horizon)?;
        if let Some(bad) = events
            .iter()
            .find(|e| !(e.time > T::zero() && e.time <= horizon))
        {
            return Err(invalid(format!(
                "event time {} outside (0, {horizon}]",
                bad.time
            )));
        }
        events.sort_by(|a, b| a.time.partial_cmp(&b.time).expect("finite event times"));
        let mut merged: Vec<Event<T>> = Vec::with_capacity(events.len());
        for e in events {
            match merged.last_mut() {
                Some(last) if last.time == e.time => {
                    log::warn!("simultaneous jumps at t = {}; summing sizes", e.time);
                    last.jump = last.jump + e.jump;
                }
                _ => merged.push(e),
            }
        }
        merged.retain(|e| e.jump != T::zero());
        Ok(Self::from_sorted(horizon, merged))
    }

    fn from_sorted(horizon: T, events: Vec<Event<T>>) -> Self {
        let mut acc = T::zero();
        let levels = events
            .iter()
            .map(|e| {
                acc = acc + e.jump;
                acc
            })
            .collect();
        Self {
            horizon,
            events,
            levels,
            seed: None,
            stream: None,
        }
    }

    /// The path that stays at 0.
    pub fn flat(horizon: T) -> Self {
        Self::from_sorted(horizon, Vec::new())
    }

    pub(crate) fn with_origin(mut self, rng: &RngStream) -> Self {
        self.seed = Some(rng.seed());
        self.stream = Some(rng.stream_id());
        self
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn events(&self) -> &[Event<T>] {
        &self.events
    }

    /// Seed and stream id of the generator that produced the path.
    pub fn origin(&self) -> Option<(u64, u64)> {
        self.seed.zip(self.stream)
    }

    /// `S(t) = Σ_{τ_k <= t} j_k`; times beyond the horizon read the final
    /// value.
    pub fn value(&self, t: T) -> T {
        let k = self.events.partition_point(|e| e.time <= t);
        if k == 0 {
            T::zero()
        } else {
            self.levels[k - 1]
        }
    }

    /// First time the path reaches `level` or more, if it does by the
    /// horizon.
    pub fn first_passage(&self, level: T) -> Option<T> {
        self.events
            .iter()
            .zip(&self.levels)
            .find(|(_, &v)| v >= level)
            .map(|(e, _)| e.time)
    }
}

/// How to draw non-homogeneous Poisson arrivals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NhppMethod {
    /// Lewis-Shedler thinning against a per-unit-cell dominating constant.
    Thinning,
    /// Transform unit-rate arrivals through `Λ⁻¹`.
    Inversion,
    /// Inversion when `Λ⁻¹` is closed-form, thinning otherwise.
    #[default]
    Auto,
}

/// Arrival times on `[0, horizon]` of a Poisson process with rate `rate`.
pub fn sample_nhpp<T: Scalar, R: Rng + ?Sized>(
    rate: &RateFn<T>,
    horizon: T,
    method: NhppMethod,
    rng: &mut R,
) -> Result<Vec<T>> {
    check_time(horizon)?;
    if rate.is_zero() || horizon == T::zero() {
        return Ok(Vec::new());
    }
    let method = match method {
        NhppMethod::Auto if rate.has_closed_form_inverse() => NhppMethod::Inversion,
        NhppMethod::Auto => NhppMethod::Thinning,
        m => m,
    };
    match method {
        NhppMethod::Inversion => {
            let total = rate.cumulative(horizon)?;
            let mut out = Vec::new();
            let mut u = T::zero();
            loop {
                u = u + T::lit(exp1(rng));
                if u > total {
                    break;
                }
                let t = rate.invert_cumulative(u)?.min(horizon);
                out.push(t);
            }
            Ok(out)
        }
        _ => {
            let mut out = Vec::new();
            let mut start = T::zero();
            while start < horizon {
                let end = (start + T::one()).min(horizon);
                let bound = rate.upper_bound_on(start, end);
                if !bound.is_finite() {
                    return Err(Error::Unsampleable(format!(
                        "rate is unbounded on [{start}, {end}] and thinning needs a finite bound; use inversion"
                    )));
                }
                if bound > T::zero() {
                    let mut t = start;
                    loop {
                        t = t + T::lit(exp1(rng)) / bound;
                        if t > end {
                            break;
                        }
                        let accept: f64 = rng.random();
                        if T::lit(accept) * bound < rate.rate(t) {
                            out.push(t);
                        }
                    }
                }
                start = end;
            }
            Ok(out)
        }
    }
}

/// Arrival times of each component process, in jump-size order.
pub fn sample_components<T: Scalar, R: Rng + ?Sized>(
    law: &JumpLaw<T>,
    horizon: T,
    method: NhppMethod,
    rng: &mut R,
) -> Result<Vec<Vec<T>>> {
    law.jumps()
        .iter()
        .map(|j| sample_nhpp(&j.rate, horizon, method, rng))
        .collect()
}

/// Path of `S = Σ i N_i` built from independent component arrivals.
pub fn sample_path<T: Scalar>(
    law: &JumpLaw<T>,
    horizon: T,
    method: NhppMethod,
    rng: &mut RngStream,
) -> Result<Path<T>> {
    let comps = sample_components(law, horizon, method, rng)?;
    Ok(path_from_components(law, horizon, &comps)?.with_origin(rng))
}

/// Merges component arrival times into a tagged path.
pub fn path_from_components<T: Scalar>(
    law: &JumpLaw<T>,
    horizon: T,
    comps: &[Vec<T>],
) -> Result<Path<T>> {
    let events = law
        .sizes()
        .zip(comps)
        .flat_map(|(size, times)| times.iter().map(move |&time| Event { time, jump: size }))
        .collect();
    Path::from_events(horizon, events)
}

pub(crate) fn mark_sampler<T: Scalar>(rates: &[T]) -> Result<Option<WeightedIndex<f64>>> {
    if rates.iter().all(|&r| r == T::zero()) {
        return Ok(None);
    }
    WeightedIndex::new(rates.iter().map(|r| r.as_f64()))
        .map(Some)
        .map_err(|e| invalid(format!("jump weights: {e}")))
}

/// Path from the compound Poisson form `Σ_{k <= N(t)} X_k` of a constant-rate
/// law: arrivals at rate `Σ λ_i`, marks `P{X = i} = λ_i / Σ λ_j`.
pub fn sample_path_cp<T: Scalar>(
    law: &JumpLaw<T>,
    horizon: T,
    rng: &mut RngStream,
) -> Result<Path<T>> {
    check_time(horizon)?;
    let rates = law.constant_rates().ok_or_else(|| {
        Error::HomogeneousOnly(
            "compound Poisson sampling needs constant rates; use sample_path instead".into(),
        )
    })?;
    let sizes: Vec<T> = law.sizes().collect();
    let Some(marks) = mark_sampler(&rates)? else {
        return Ok(Path::flat(horizon).with_origin(rng));
    };
    let total: T = rates.iter().copied().sum();
    let mut events = Vec::new();
    let mut t = T::zero();
    loop {
        t = t + T::lit(exp1(rng)) / total;
        if t > horizon {
            break;
        }
        events.push(Event {
            time: t,
            jump: sizes[marks.sample(rng)],
        });
    }
    Ok(Path::from_events(horizon, events)?.with_origin(rng))
}

/// Lattice approximation `Z_n(t) = Σ_{k <= ⌊n t⌋} X_k` with independent steps
/// taking value `i` with probability `λ_i / n` and 0 otherwise. Events sit at
/// times `k / n`.
pub fn binomial_scheme<T: Scalar>(
    law: &JumpLaw<T>,
    n: u64,
    horizon: T,
    rng: &mut RngStream,
) -> Result<Path<T>> {
    check_time(horizon)?;
    let rates = law.require_homogeneous("binomial scheme")?;
    if n == 0 {
        return Err(invalid("binomial scheme needs n >= 1"));
    }
    let nf = T::from_u64(n).unwrap();
    let p_jump: T = rates.iter().map(|&r| r / nf).sum();
    if p_jump >= T::one() {
        return Err(invalid(format!(
            "n too small: total step probability Σλ_i/n = {p_jump} must be < 1"
        )));
    }
    let sizes: Vec<T> = law.sizes().collect();
    let Some(marks) = mark_sampler(&rates)? else {
        return Ok(Path::flat(horizon).with_origin(rng));
    };
    let steps = (horizon * nf).floor().to_u64().unwrap_or(0);
    let skip = Geometric::new(p_jump.as_f64()).map_err(|e| invalid(format!("{e}")))?;
    let mut events = Vec::new();
    let mut k = 0u64;
    loop {
        // Geometric counts failures before the next successful step.
        k = k.saturating_add(skip.sample(rng)).saturating_add(1);
        if k > steps {
            break;
        }
        let time = (T::from_u64(k).unwrap() / nf).min(horizon);
        events.push(Event {
            time,
            jump: sizes[marks.sample(rng)],
        });
    }
    Ok(Path::from_events(horizon, events)?.with_origin(rng))
}

/// One draw of `S(t) = Σ i N_i(t)` from independent Poisson counts, without
/// building the path.
pub fn sample_marginal<T: Scalar, R: Rng + ?Sized>(
    law: &JumpLaw<T>,
    t: T,
    rng: &mut R,
) -> Result<T> {
    let cum = law.cumulatives(t)?;
    Ok(law
        .sizes()
        .zip(cum)
        .map(|(i, l)| i * T::from_u64(poisson_count(l.as_f64(), rng)).unwrap())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    type Law = JumpLaw<f64>;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        (
            m,
            xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0),
        )
    }

    #[test]
    fn reproducible_streams() {
        let law = Law::classic_skellam(1.0, 2.0).unwrap();
        let a = sample_path(&law, 5.0, NhppMethod::Auto, &mut RngStream::new(7, 3)).unwrap();
        let b = sample_path(&law, 5.0, NhppMethod::Auto, &mut RngStream::new(7, 3)).unwrap();
        let c = sample_path(&law, 5.0, NhppMethod::Auto, &mut RngStream::new(7, 4)).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_ne!(a, c);
        assert_eq!(a.origin(), Some((7, 3)));
    }

    #[test]
    fn zero_rate_is_empty() {
        let mut rng = RngStream::new(1, 0);
        let r = RateFn::constant(0.0).unwrap();
        assert!(sample_nhpp(&r, 10.0, NhppMethod::Thinning, &mut rng)
            .unwrap()
            .is_empty());
        let law = Law::homogeneous(&[(1.0, 0.0), (-2.0, 0.0)]).unwrap();
        assert!(sample_path(&law, 3.0, NhppMethod::Auto, &mut rng)
            .unwrap()
            .events()
            .is_empty());
        assert!(sample_path_cp(&law, 3.0, &mut rng)
            .unwrap()
            .events()
            .is_empty());
        assert!(binomial_scheme(&law, 10, 3.0, &mut rng)
            .unwrap()
            .events()
            .is_empty());
    }

    #[test]
    fn nhpp_counts_match_cumulative() {
        let r = RateFn::constant(2.0).unwrap();
        for method in [NhppMethod::Thinning, NhppMethod::Inversion] {
            let counts: Vec<f64> = par_draws(100_000, 11, 0, |rng| {
                sample_nhpp(&r, 10.0, method, rng).unwrap().len() as f64
            });
            let (m, v) = mean_var(&counts);
            assert!(
                (m - 20.0).abs() < 4.0 * (20.0f64 / 1e5).sqrt(),
                "{method:?}: {m}"
            );
            assert!((v - 20.0).abs() < 0.5, "{method:?}: {v}");
        }
        let r = RateFn::power(1.0, 1.0).unwrap();
        for method in [NhppMethod::Thinning, NhppMethod::Inversion] {
            let counts: Vec<f64> = par_draws(100_000, 12, 0, |rng| {
                sample_nhpp(&r, 2.0, method, rng).unwrap().len() as f64
            });
            let (m, _) = mean_var(&counts);
            assert!(
                (m - 2.0).abs() < 4.0 * (2.0f64 / 1e5).sqrt(),
                "{method:?}: {m}"
            );
        }
    }

    #[test]
    fn thinning_rejects_unbounded_rates() {
        let r = RateFn::power(1.0, -0.5).unwrap();
        let mut rng = RngStream::new(3, 0);
        assert!(matches!(
            sample_nhpp(&r, 1.0, NhppMethod::Thinning, &mut rng),
            Err(Error::Unsampleable(_))
        ));
        // Inversion handles the singular rate exactly.
        let counts: Vec<f64> = par_draws(50_000, 13, 0, |rng| {
            sample_nhpp(&r, 1.0, NhppMethod::Auto, rng).unwrap().len() as f64
        });
        let (m, _) = mean_var(&counts);
        assert!((m - 2.0).abs() < 4.0 * (2.0f64 / 5e4).sqrt());
    }

    #[test]
    fn path_value_cross_foots_with_components() {
        let law = Law::homogeneous(&[(-1.0, 1.5), (2.0, 0.7), (3.0, 0.2)]).unwrap();
        let mut rng = RngStream::new(5, 0);
        for _ in 0..50 {
            let comps = sample_components(&law, 4.0, NhppMethod::Auto, &mut rng).unwrap();
            let path = path_from_components(&law, 4.0, &comps).unwrap();
            assert_eq!(path.value(0.0), 0.0);
            for &t in &[0.5, 1.0, 2.7, 4.0] {
                let want: f64 = law
                    .sizes()
                    .zip(&comps)
                    .map(|(i, ts)| i * ts.iter().filter(|&&s| s <= t).count() as f64)
                    .sum();
                assert_eq!(path.value(t), want);
            }
            assert!(path.events().windows(2).all(|w| w[0].time < w[1].time));
        }
    }

    #[test]
    fn simultaneous_events_merge() {
        let p = Path::from_events(
            2.0,
            vec![
                Event {
                    time: 1.0,
                    jump: 1.0,
                },
                Event {
                    time: 1.0,
                    jump: 2.0,
                },
                Event {
                    time: 1.5,
                    jump: 1.0,
                },
                Event {
                    time: 1.5,
                    jump: -1.0,
                },
            ],
        )
        .unwrap();
        assert_eq!(
            p.events(),
            &[Event {
                time: 1.0,
                jump: 3.0
            }]
        );
        assert!(Path::from_events(
            1.0,
            vec![Event {
                time: 2.0,
                jump: 1.0
            }]
        )
        .is_err());
    }

    #[test]
    fn sample_path_moments() {
        let law = Law::classic_skellam(1.0, 1.0).unwrap();
        let xs: Vec<f64> = par_draws(100_000, 21, 0, |rng| {
            sample_path(&law, 1.0, NhppMethod::Auto, rng)
                .unwrap()
                .value(1.0)
        });
        let (m, v) = mean_var(&xs);
        assert!(m.abs() < 4.0 * (2.0f64 / 1e5).sqrt());
        // Var of the sample variance for a Skellam(1,1): (μ4 - σ⁴)/n with μ4 = 14.
        assert!((v - 2.0).abs() < 4.0 * ((14.0 - 4.0) / 1e5f64).sqrt());
        let counts: Vec<f64> = par_draws(50_000, 22, 0, |rng| {
            sample_path(&law, 1.0, NhppMethod::Auto, rng)
                .unwrap()
                .events()
                .len() as f64
        });
        let (m, v) = mean_var(&counts);
        assert!((m - 2.0).abs() < 4.0 * (2.0f64 / 5e4).sqrt());
        assert!((v - 2.0).abs() < 0.1);
    }

    #[test]
    fn compound_and_binomial_paths() {
        let law = Law::classic_skellam(3.0, 1.0).unwrap();
        let mut rng = RngStream::new(9, 0);
        let mut ups = 0usize;
        let mut all = 0usize;
        for _ in 0..2000 {
            let p = sample_path_cp(&law, 1.0, &mut rng).unwrap();
            ups += p.events().iter().filter(|e| e.jump > 0.0).count();
            all += p.events().len();
        }
        let frac = ups as f64 / all as f64;
        assert!((frac - 0.75).abs() < 4.0 * (0.75f64 * 0.25 / all as f64).sqrt());

        let poisson = Law::homogeneous(&[(1.0, 1.0)]).unwrap();
        let xs: Vec<f64> = par_draws(20_000, 31, 0, |rng| {
            binomial_scheme(&poisson, 1000, 1.0, rng)
                .unwrap()
                .value(1.0)
        });
        let (m, _) = mean_var(&xs);
        assert!((m - 1.0).abs() < 4.0 * (1.0f64 / 2e4).sqrt());
        assert!(binomial_scheme(&law, 4, 1.0, &mut rng).is_err());
        let p = Law::from_pairs([(1.0, RateFn::power(1.0, 1.0).unwrap())]).unwrap();
        assert!(matches!(
            sample_path_cp(&p, 1.0, &mut rng),
            Err(Error::HomogeneousOnly(_))
        ));
    }

    #[test]
    fn marginal_sampler_matches_moments() {
        let law = Law::homogeneous(&[(-1.0, 1.0), (2.0, 0.5)]).unwrap();
        let xs: Vec<f64> = par_draws(100_000, 41, 0, |rng| {
            sample_marginal(&law, 2.0, rng).unwrap()
        });
        let (m, v) = mean_var(&xs);
        let mom = law.moments(2.0).unwrap();
        assert!((m - mom.mean).abs() < 4.0 * (mom.variance / 1e5).sqrt());
        assert!((v - mom.variance).abs() < 0.1 * mom.variance);
    }
}
