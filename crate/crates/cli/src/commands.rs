//! Command implementations: config in, tables out.

use serde_json::json;

use skellam_core::asymptotics::{
    clt_check, correlation_decay_check, kac_check, lln_check, CltSplit, LimitReport, Normalizer,
};
use skellam_core::decomposition::{
    kernel_split_laws, kernel_split_path, multinomial_split, multinomial_split_path, AssignmentRule,
    SplitKernel,
};
use skellam_core::first_passage::{fpt_mc, fpt_moments, fpt_survival};
use skellam_core::frac_integral::{frac_integral_eval, frac_integral_moments};
use skellam_core::frac_skellam::{caputo_pgf, frac_moments, frac_pgf, row_sum, sample_frac_path, Moment};
use skellam_core::sampling::{sample_path, sample_path_cp, try_par_draws};
use skellam_core::stats::{covariance, mean_var};
use skellam_core::{CaputoLaw, JumpLaw, Path};

use crate::artifact::{Cell, Output, Table};
use crate::config::{
    AnalyzeConfig, DecomposeConfig, FptConfig, FracAnalyzeConfig, FracIntConfig, FracSimConfig, LimitConfig,
    Representation, SimulateConfig, SplitConfig, Suite,
};
use crate::CliError;

/// Effective run settings after merging flags and config.
#[derive(Debug, Clone, Copy)]
pub struct Ctx {
    pub seed: u64,
    pub paths: usize,
    pub horizon: Option<f64>,
}

impl Ctx {
    fn horizon(&self) -> Result<f64, CliError> {
        self.horizon.ok_or_else(|| CliError::Validation("config needs a horizon".into()))
    }
}

fn last_time(times: &[f64]) -> Result<f64, CliError> {
    if times.is_empty() {
        return Err(CliError::Validation("config needs a nonempty times list".into()));
    }
    Ok(times.iter().copied().fold(0.0, f64::max))
}

fn path_tables(paths: &[Path<f64>], grid: &[f64]) -> Vec<Table> {
    let mut events = Table::new("events", &["path", "time", "jump", "value"]);
    for (k, p) in paths.iter().enumerate() {
        let mut value = 0.0;
        for e in p.events() {
            value += e.jump;
            events.push(vec![k.into(), e.time.into(), e.jump.into(), value.into()]);
        }
    }
    let mut tables = vec![events];
    if !grid.is_empty() {
        let mut t = Table::new("grid", &["path", "t", "value"]);
        for (k, p) in paths.iter().enumerate() {
            for &s in grid {
                t.push(vec![k.into(), s.into(), p.value(s).into()]);
            }
        }
        tables.push(t);
    }
    tables
}

fn check_grid(grid: &[f64], horizon: f64) -> Result<(), CliError> {
    match grid.iter().find(|&&s| !(0.0..=horizon).contains(&s)) {
        Some(s) => Err(CliError::Validation(format!("grid time {s} outside [0, {horizon}]"))),
        None => Ok(()),
    }
}

pub fn simulate(ctx: Ctx, cfg: SimulateConfig) -> Result<Output, CliError> {
    let horizon = ctx.horizon()?;
    check_grid(&cfg.grid, horizon)?;
    let paths = try_par_draws(ctx.paths, ctx.seed, 0, |rng| match cfg.representation {
        Representation::Superposition => sample_path(&cfg.law, horizon, cfg.method, rng),
        Representation::CompoundPoisson => sample_path_cp(&cfg.law, horizon, rng),
    })?;
    Ok(Output { tables: path_tables(&paths, &cfg.grid), ..Default::default() })
}

pub fn analyze(cfg: AnalyzeConfig) -> Result<Output, CliError> {
    let mut moments = Table::new("moments", &["t", "mean", "variance", "central3", "central4", "fisher_index"]);
    let mut pmf = Table::new("pmf", &["t", "n", "p"]);
    for &t in &cfg.times {
        let m = cfg.law.moments(t)?;
        let fisher = match m.fisher_index {
            skellam_core::law::FisherIndex::Value(v) => Cell::Real(v),
            skellam_core::law::FisherIndex::UndefinedZeroMean => Cell::from("undefined"),
        };
        moments.push(vec![t.into(), m.mean.into(), m.variance.into(), m.central3.into(), m.central4.into(), fisher]);
        if cfg.pmf {
            for (n, p) in cfg.law.pmf_table(t)?.iter() {
                pmf.push(vec![t.into(), n.into(), p.into()]);
            }
        }
    }
    let mut tables = vec![moments];
    if cfg.pmf {
        tables.push(pmf);
    }
    if !cfg.covariance.is_empty() {
        let mut cov = Table::new("covariance", &["s", "t", "covariance"]);
        for &(s, t) in &cfg.covariance {
            cov.push(vec![s.into(), t.into(), cfg.law.covariance(s, t)?.into()]);
        }
        tables.push(cov);
    }
    Ok(Output { tables, ..Default::default() })
}

pub fn decompose(ctx: Ctx, cfg: DecomposeConfig) -> Result<Output, CliError> {
    let t = ctx.horizon()?;
    let law = &cfg.law;
    let (laws, cov_target, values): (Vec<JumpLaw<f64>>, Option<f64>, Vec<Vec<f64>>) = match &cfg.split {
        SplitConfig::Bernoulli { .. } | SplitConfig::Assignment { .. } => {
            let rule = match &cfg.split {
                SplitConfig::Bernoulli { p } => AssignmentRule::uniform_bernoulli(law, *p)?,
                SplitConfig::Assignment { rows } => AssignmentRule { rows: rows.clone() },
                _ => unreachable!(),
            };
            let laws = multinomial_split(law, &rule)?;
            let values = try_par_draws(ctx.paths, ctx.seed, 0, |rng| {
                let p = sample_path(law, t, Default::default(), rng)?;
                Ok(multinomial_split_path(&p, &rule, rng)?.iter().map(|c| c.value(t)).collect())
            })?;
            (laws, Some(0.0), values)
        }
        SplitConfig::Kernel { .. } | SplitConfig::Binomial { .. } => {
            let kernel = match &cfg.split {
                SplitConfig::Kernel { rows } => SplitKernel::new(rows.clone())?,
                SplitConfig::Binomial { p } => SplitKernel::binomial(&law.integer_sizes("binomial split")?, *p)?,
                _ => unreachable!(),
            };
            let split = kernel_split_laws(law, &kernel)?;
            let values = try_par_draws(ctx.paths, ctx.seed, 0, |rng| {
                let p = sample_path(law, t, Default::default(), rng)?;
                let (a, b) = kernel_split_path(&p, &kernel, rng)?;
                Ok(vec![a.value(t), b.value(t)])
            })?;
            let cov = split.covariance(t)?;
            (vec![split.first, split.second], Some(cov), values)
        }
    };
    let columns: Vec<Vec<f64>> = (0..laws.len()).map(|h| values.iter().map(|v| v[h]).collect()).collect();
    let mut comps = Table::new(
        "components",
        &["component", "mean", "mean_mc", "variance", "variance_mc"],
    );
    for (h, (l, xs)) in laws.iter().zip(&columns).enumerate() {
        let m = l.moments(t)?;
        let (mean, var) = mc_moments(xs);
        comps.push(vec![h.into(), m.mean.into(), mean.into(), m.variance.into(), var.into()]);
    }
    let mut cov = Table::new("covariance", &["first", "second", "covariance", "covariance_mc"]);
    for a in 0..laws.len() {
        for b in a + 1..laws.len() {
            let target = if laws.len() == 2 { cov_target.unwrap_or(0.0) } else { 0.0 };
            let mc = if columns[a].len() >= 2 { covariance(&columns[a], &columns[b]) } else { f64::NAN };
            cov.push(vec![a.into(), b.into(), target.into(), mc.into()]);
        }
    }
    let mut extra = serde_json::Map::new();
    extra.insert("component_laws".into(), serde_json::to_value(&laws)?);
    Ok(Output { tables: vec![comps, cov], extra, pass: None })
}

fn mc_moments(xs: &[f64]) -> (f64, f64) {
    match xs.len() {
        0 => (f64::NAN, f64::NAN),
        1 => (xs[0], f64::NAN),
        _ => mean_var(xs),
    }
}

pub fn fpt(ctx: Ctx, cfg: FptConfig) -> Result<Output, CliError> {
    let horizon = last_time(&cfg.times)?;
    let mut table = Table::new("survival", &["level", "t", "survival", "survival_mc"]);
    for n in 1..=cfg.levels {
        let analytic: Vec<f64> = cfg.times.iter().map(|&t| fpt_survival(&cfg.law, n, t)).collect::<Result<_, _>>()?;
        let mc = if ctx.paths > 0 { Some(fpt_mc(&cfg.law, n, horizon, ctx.paths, ctx.seed)?) } else { None };
        for (&t, s) in cfg.times.iter().zip(analytic) {
            let emp = mc.as_ref().map_or(f64::NAN, |m| 1.0 - m.cdf(t));
            table.push(vec![n.into(), t.into(), s.into(), emp.into()]);
        }
    }
    let mut tables = vec![table];
    if let Some(r) = cfg.moment_order {
        let mut m = Table::new("moments", &["level", "r", "moment"]);
        for (k, v) in fpt_moments(&cfg.law, r, cfg.levels)?.into_iter().enumerate() {
            m.push(vec![(k as u64 + 1).into(), r.into(), v.into()]);
        }
        tables.push(m);
    }
    Ok(Output { tables, ..Default::default() })
}

pub fn fracint(ctx: Ctx, cfg: FracIntConfig) -> Result<Output, CliError> {
    let horizon = last_time(&cfg.times)?;
    let paths = try_par_draws(ctx.paths, ctx.seed, 0, |rng| sample_path(&cfg.law, horizon, Default::default(), rng))?;
    let mut table = Table::new("moments", &["t", "mean", "mean_mc", "variance", "variance_mc"]);
    for &t in &cfg.times {
        let (mean, var) = frac_integral_moments(&cfg.law, cfg.alpha, t)?;
        let xs: Vec<f64> = paths.iter().map(|p| frac_integral_eval(p, cfg.alpha, t)).collect::<Result<_, _>>()?;
        let (m, v) = mc_moments(&xs);
        table.push(vec![t.into(), mean.into(), m.into(), var.into(), v.into()]);
    }
    Ok(Output { tables: vec![table], ..Default::default() })
}

pub fn frac_sim(ctx: Ctx, cfg: FracSimConfig) -> Result<Output, CliError> {
    let horizon = ctx.horizon()?;
    check_grid(&cfg.grid, horizon)?;
    let paths = try_par_draws(ctx.paths, ctx.seed, 0, |rng| sample_frac_path(&cfg.law, horizon, rng))?;
    Ok(Output { tables: path_tables(&paths, &cfg.grid), ..Default::default() })
}

fn moment_cell(m: Moment<f64>) -> Cell {
    match m {
        Moment::Finite(v) => v.into(),
        Moment::Infinite => "infinite".into(),
    }
}

pub fn frac_analyze(cfg: FracAnalyzeConfig) -> Result<Output, CliError> {
    let mut pgf = Table::new("pgf", &["t", "u", "pgf"]);
    let mut moments = Table::new("moments", &["t", "mean", "variance"]);
    let mut rows = Table::new("row-sum", &["t", "row_sum", "exit_rate", "tail_bound"]);
    let homogeneous = cfg.law.is_homogeneous();
    let caputo = cfg.caputo_alpha.map(|a| CaputoLaw::new(cfg.law.clone(), a)).transpose()?;
    let mut cap = Table::new("caputo-pgf", &["t", "u", "pgf"]);
    for &t in &cfg.times {
        for &u in &cfg.u {
            pgf.push(vec![t.into(), u.into(), frac_pgf(&cfg.law, t, u)?.into()]);
            if let Some(c) = &caputo {
                cap.push(vec![t.into(), u.into(), caputo_pgf(c, t, u)?.into()]);
            }
        }
        if homogeneous {
            let m = frac_moments(&cfg.law, t)?;
            moments.push(vec![t.into(), moment_cell(m.mean), moment_cell(m.variance)]);
        }
        let r = row_sum(&cfg.law, t, cfg.truncation)?;
        rows.push(vec![t.into(), r.value.into(), r.exit_rate.into(), r.tail_bound.into()]);
    }
    let mut tables = vec![pgf];
    if homogeneous {
        tables.push(moments);
    }
    tables.push(rows);
    if caputo.is_some() {
        tables.push(cap);
    }
    Ok(Output { tables, ..Default::default() })
}

/// Paths per suite when the config leaves them unset.
pub fn default_paths(suite: Suite) -> usize {
    match suite {
        Suite::Corr => 100_000,
        _ => 10_000,
    }
}

pub fn limit_check(ctx: Ctx, suite: Suite, cfg: LimitConfig) -> Result<Output, CliError> {
    let f = cfg.normalizer.unwrap_or_else(Normalizer::identity);
    let balanced = || JumpLaw::classic_skellam(1.0, 1.0);
    let report: LimitReport = match suite {
        Suite::Lln => {
            let law = cfg.law.map_or_else(|| JumpLaw::homogeneous(&[(1.0, 1.0)]), Ok)?;
            let limits = cfg.limits.unwrap_or_else(|| vec![(1.0, 1.0)]);
            let grid = cfg.grid.unwrap_or_else(|| vec![25.0, 100.0, 400.0]);
            lln_check(&law, f, &limits, &grid, ctx.paths, ctx.seed)?
        }
        Suite::Clt => {
            let law = cfg.law.map_or_else(balanced, Ok)?;
            let split = cfg.split.unwrap_or_else(|| {
                vec![CltSplit { size: -1.0, mu: 0.0, sigma2: 1.0 }, CltSplit { size: 1.0, mu: 0.0, sigma2: 1.0 }]
            });
            clt_check(&law, f, &split, cfg.t.unwrap_or(400.0), ctx.paths, ctx.seed)?
        }
        Suite::Kac => {
            let law = cfg.law.map_or_else(balanced, Ok)?;
            let grid = cfg.grid.unwrap_or_else(|| vec![0.0, 1.0, 2.0, 3.0]);
            kac_check(&law, cfg.alpha.unwrap_or(1e4), &grid, ctx.paths, ctx.seed)?
        }
        Suite::Corr => {
            let law = cfg.law.map_or_else(balanced, Ok)?;
            let grid = cfg.grid.unwrap_or_else(|| vec![16.0, 64.0, 256.0]);
            correlation_decay_check(&law, cfg.s.unwrap_or(1.0), &grid, ctx.paths, ctx.seed)?
        }
    };
    let mut checks = Table::new("checks", &["experiment", "target", "estimate", "band", "p_value", "pass"]);
    for c in &report.checks {
        checks.push(vec![
            c.experiment.clone().into(),
            c.target.into(),
            c.estimate.into(),
            c.band.into(),
            c.p_value.map_or(Cell::from(""), Cell::from),
            c.pass.into(),
        ]);
    }
    let mut hyp = Table::new("hypotheses", &["name", "holds", "detail"]);
    for h in &report.hypotheses {
        hyp.push(vec![h.name.clone().into(), h.holds.into(), h.detail.clone().into()]);
    }
    let mut extra = serde_json::Map::new();
    extra.insert("report".into(), json!(report));
    Ok(Output { tables: vec![checks, hyp], extra, pass: Some(report.pass) })
}
