//! The eight registered experiments. Each returns its tables and a summary
//! without touching the filesystem.

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use fbm_mdp_core::averaging::{
    averaging_gap, ergodic_f1bar, gauss_hermite_f1bar, khasminskii_scan, AveragedDrift, ErgodicConfig, PathSetup,
};
use fbm_mdp_core::fbm::{fbm_covariance, BmControl, Control, ControlPair, FbmMethod, FbmSampler};
use fbm_mdp_core::fracpath::{
    alpha_one_norm, lambda_alpha, window_bound_integral, young_integral, young_integral_window, GridPath,
};
use fbm_mdp_core::mc::{self, Estimate};
use fbm_mdp_core::mdp::{empirical_mdp_rate, rate_function_endpoint, write_report_csv, clt_variance_check, SkeletonProblem};
use fbm_mdp_core::rng::{stream, Domain};
use fbm_mdp_core::sde::{deviation_path, solve_ode, solve_single_scale, OdeScheme, SingleScaleSystem, SystemSpec, TwoScaleSystem};
use fbm_mdp_core::systems;
use rand::Rng;
use serde::Serialize;
use std::collections::BTreeMap;

/// A CSV table held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(file: &str, header: &[&str]) -> Self {
        Self { file: file.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

/// Random streams consumed by an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamUse {
    pub domain: String,
    pub first_index: u64,
    pub count: u64,
}

fn streams(domain: Domain, first_index: u64, count: u64) -> StreamUse {
    StreamUse { domain: format!("{domain:?}"), first_index, count }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub summary: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    pub streams: Vec<StreamUse>,
}

fn f(x: f64) -> String {
    format!("{x}")
}

fn single(c: &ExperimentConfig) -> Result<SingleScaleSystem> {
    match systems::by_name(&c.system)? {
        SystemSpec::SingleScale(s) => Ok(s),
        SystemSpec::TwoScale(_) => Err(HarnessError::Config(vec![format!("{} is not single-scale", c.system)])),
    }
}

fn two(c: &ExperimentConfig) -> Result<TwoScaleSystem> {
    match systems::by_name(&c.system)? {
        SystemSpec::TwoScale(s) => Ok(s),
        SystemSpec::SingleScale(_) => Err(HarnessError::Config(vec![format!("{} is not two-scale", c.system)])),
    }
}

/// Slow initial condition of every path experiment.
pub const X0: f64 = 1.0;

fn setup(c: &ExperimentConfig, m: usize, n: usize) -> PathSetup {
    PathSetup {
        hurst: c.hurst,
        horizon: c.horizon,
        steps: c.steps,
        x0: vec![X0; m],
        y0: vec![0.0; n],
        n_paths: c.n_paths,
        seed: c.seed,
    }
}

pub fn fbm_cov(c: &ExperimentConfig) -> Result<Outcome> {
    let m = c.steps;
    let idx: Vec<usize> = [m / 4, m / 2, 3 * m / 4, m].into_iter().filter(|&i| i > 0).collect();
    let mut table = Table::new("fbm_cov.csv", &["method", "hurst", "s", "t", "empirical", "stderr", "exact"]);
    let mut out = Outcome::default();
    let n = c.n_paths;
    let (mut worst_z, mut worst_abs) = (0.0f64, 0.0f64);
    for (k, method) in [FbmMethod::Cholesky, FbmMethod::Volterra].into_iter().enumerate() {
        let sampler = FbmSampler::cached(c.hurst, c.horizon, m, method)?;
        let first = k as u64 * n;
        let picks = mc::par_map(n, |i| {
            let p = sampler.sample(c.seed, first + i, 1);
            idx.iter().map(|&j| p.value(j, 0)).collect::<Vec<_>>()
        });
        out.streams.push(streams(Domain::Fbm, first, n));
        for a in 0..idx.len() {
            for b in a..idx.len() {
                let prods: Vec<f64> = picks.iter().map(|p| p[a] * p[b]).collect();
                let e = Estimate::from_samples(&prods);
                let (s, t) = (idx[a] as f64 * c.step(), idx[b] as f64 * c.step());
                let exact = fbm_covariance(s, t, c.hurst)?;
                match method {
                    FbmMethod::Cholesky => worst_z = worst_z.max((e.mean - exact).abs() / e.stderr),
                    _ => worst_abs = worst_abs.max((e.mean - exact).abs()),
                }
                table.push(vec![format!("{method:?}").to_lowercase(), f(c.hurst), f(s), f(t), f(e.mean), f(e.stderr), f(exact)]);
            }
        }
    }
    out.summary.insert("cholesky_max_z".into(), worst_z);
    out.summary.insert("volterra_max_abs_error".into(), worst_abs);
    out.tables.push(table);
    Ok(out)
}

/// Per-pair results of the Young experiment.
struct PairResult {
    kind: usize,
    integral: f64,
    reverse: f64,
    ibp_residual: f64,
    scale: f64,
    bound: f64,
    window: (usize, usize),
    window_integral: f64,
    window_bound: f64,
}

fn young_pair(c: &ExperimentConfig, p: u64) -> fbm_mdp_core::Result<PairResult> {
    let mut rng = stream(c.seed, Domain::Aux, p);
    let kind = rng.random_range(0..4usize);
    let (sg, sh) = (rng.random_range(0.5..2.0), rng.random_range(0.5..2.0));
    let (m, alpha) = (c.steps, c.alpha);
    let h = mc::fbm_driver(c.hurst, 1, c.horizon, m, c.seed, 2 * p + 1)?.scaled(sh);
    let g = if kind == 3 {
        let (a, w, b) = (rng.random_range(-1.0..1.0), rng.random_range(1.0..6.0), rng.random_range(-1.0..1.0));
        GridPath::from_fn(c.horizon, m, 1, |t, v| v[0] = a * (w * t).sin() + b)?
    } else {
        mc::fbm_driver(c.hurst, 1, c.horizon, m, c.seed, 2 * p)?.scaled(sg)
    };
    let s = rng.random_range(0..m - 1);
    let t = rng.random_range(s + 1..=m);
    let integral = young_integral(&g, &h, alpha)?.last()[0];
    let reverse = young_integral(&h, &g, alpha)?.last()[0];
    let product = g.last()[0] * h.last()[0] - g.row(0)[0] * h.row(0)[0];
    let lambda = lambda_alpha(&h, alpha)?;
    Ok(PairResult {
        kind,
        integral,
        reverse,
        ibp_residual: integral + reverse - product,
        scale: integral.abs().max(reverse.abs()).max(product.abs()).max(1.0),
        bound: lambda * alpha_one_norm(&g, alpha)?,
        window: (s, t),
        window_integral: young_integral_window(&g, &h, alpha, s, t)?[0],
        window_bound: lambda * window_bound_integral(&g, alpha, s, t)?,
    })
}

pub fn young_ibp(c: &ExperimentConfig) -> Result<Outcome> {
    let results = mc::try_par_map(c.n_paths, |p| young_pair(c, p))?;
    let mut table = Table::new(
        "young_ibp.csv",
        &["pair", "kind", "integral", "reverse", "ibp_residual", "bound", "window_start", "window_end", "window_integral", "window_bound"],
    );
    let mut out = Outcome::default();
    let (mut ibp, mut ratio, mut wratio) = (0.0f64, 0.0f64, 0.0f64);
    for (p, r) in results.iter().enumerate() {
        ibp = ibp.max(r.ibp_residual.abs() / r.scale);
        ratio = ratio.max(r.integral.abs() / r.bound);
        wratio = wratio.max(r.window_integral.abs() / r.window_bound);
        let kind = if r.kind == 3 { "smooth-fbm" } else { "fbm-fbm" };
        table.push(vec![
            p.to_string(),
            kind.into(),
            f(r.integral),
            f(r.reverse),
            f(r.ibp_residual),
            f(r.bound),
            r.window.0.to_string(),
            r.window.1.to_string(),
            f(r.window_integral),
            f(r.window_bound),
        ]);
    }
    let h = mc::fbm_driver(c.hurst, 1, c.horizon, c.steps, c.seed, 1)?;
    let chain = young_integral(&h, &h, c.alpha)?.last()[0];
    let exact = 0.5 * h.last()[0].powi(2);
    out.summary.insert("max_ibp_relative_residual".into(), ibp);
    out.summary.insert("max_bound_ratio".into(), ratio);
    out.summary.insert("max_window_bound_ratio".into(), wratio);
    out.summary.insert("chain_rule_relative_error".into(), (chain - exact).abs() / exact.abs());
    out.streams.push(streams(Domain::Aux, 0, c.n_paths));
    out.streams.push(streams(Domain::Fbm, 0, 2 * c.n_paths));
    out.tables.push(table);
    Ok(out)
}

/// `E sup_t |x^ε_t - x_t|²` with `x` the Euler limit on the same grid.
pub fn ode_gap(sys: &SingleScaleSystem, c: &ExperimentConfig, epsilon: f64) -> Result<Estimate> {
    let limit = solve_ode(sys, &vec![X0; sys.m], c.horizon, c.steps, OdeScheme::Euler)?;
    let params = fbm_mdp_core::sde::ScaleParams::new(epsilon, c.theta)?;
    let gaps = mc::try_par_map(c.n_paths, |i| {
        let b = mc::fbm_driver(c.hurst, sys.d1, c.horizon, c.steps, c.seed, i)?;
        let x = solve_single_scale(sys, &params, &vec![X0; sys.m], &b)?;
        Ok(x.sub(&limit)?.sup_norm().powi(2))
    })?;
    Ok(Estimate::from_samples(&gaps))
}

pub fn ode_limit(c: &ExperimentConfig) -> Result<Outcome> {
    let sys = single(c)?;
    let mut table = Table::new("ode_limit.csv", &["epsilon", "mean_sup_sq", "stderr"]);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for &eps in &c.epsilon_chain {
        let e = ode_gap(&sys, c, eps)?;
        xs.push(eps.ln());
        ys.push(e.mean.ln());
        table.push(vec![f(eps), f(e.mean), f(e.stderr)]);
    }
    let mut out = Outcome::default();
    if xs.len() > 1 {
        out.summary.insert("log_log_slope".into(), mc::slope(&xs, &ys));
    }
    out.streams.push(streams(Domain::Fbm, 0, c.n_paths));
    out.tables.push(table);
    Ok(out)
}

pub fn clt_variance(c: &ExperimentConfig) -> Result<Outcome> {
    let sys = single(c)?;
    let s = setup(c, sys.m, 0);
    let rows = clt_variance_check(&sys, &c.scale_chain()?, &s)?;
    let mut out = Outcome::default();
    let worst = rows
        .iter()
        .map(|r| (r.estimate - r.exact.unwrap_or(f64::NAN)).abs() / r.exact.unwrap_or(f64::NAN))
        .fold(0.0, f64::max);
    out.summary.insert("max_relative_error".into(), worst);
    if c.system == "SS-FREE" {
        let p = fbm_mdp_core::sde::ScaleParams::new(c.epsilon_chain[0], c.theta)?;
        let limit = solve_ode(&sys, &s.x0, c.horizon, c.steps, OdeScheme::Euler)?;
        let errs = mc::try_par_map(c.n_paths.min(100), |i| {
            let b = mc::fbm_driver(c.hurst, 1, c.horizon, c.steps, c.seed, i)?;
            let z = deviation_path(&solve_single_scale(&sys, &p, &s.x0, &b)?, &limit, &p)?;
            Ok(z.sub(&b.scaled(1.0 / p.h_eps()))?.sup_norm())
        })?;
        out.summary.insert("free_identity_max_error".into(), errs.iter().cloned().fold(0.0, f64::max));
    }
    let mut buf = Vec::new();
    write_report_csv(&rows, &mut buf)?;
    out.tables.push(table_from_csv("clt_variance.csv", &String::from_utf8(buf).expect("utf8")));
    out.streams.push(streams(Domain::Fbm, 0, c.n_paths));
    Ok(out)
}

fn table_from_csv(file: &str, text: &str) -> Table {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("").split(',').map(String::from).collect();
    Table { file: file.into(), header, rows: lines.map(|l| l.split(',').map(String::from).collect()).collect() }
}

/// Averaging window of the ergodic drift table, in units of `1/β1`.
pub const ERGODIC_WINDOW: f64 = 10_000.0;

/// Grid of slow states for the averaged-drift table.
pub const F1BAR_GRID: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];

pub fn averaging(c: &ExperimentConfig) -> Result<Outcome> {
    let sys = two(c)?;
    let mut out = Outcome::default();
    let mut drift_table = Table::new("f1bar.csv", &["x", "ergodic", "ergodic_stderr", "gauss_hermite", "analytic"]);
    let beta1 = sys.constants.beta1;
    let cfg = ErgodicConfig { t_avg: ERGODIC_WINDOW / beta1, ..ErgodicConfig::for_rate(beta1, c.seed) };
    let rate = sys.gaussian_rate.clone();
    let (mut worst_erg, mut worst_gh) = (0.0f64, 0.0f64);
    for (k, &x) in F1BAR_GRID.iter().enumerate() {
        let erg = ergodic_f1bar(&sys, &[x], ErgodicConfig { seed: c.seed.wrapping_add(k as u64), ..cfg })?;
        let gh = match &rate {
            Some(a) => gauss_hermite_f1bar(&*sys.f1, sys.m, sys.n, a(&[x]), &[x], 40)?[0],
            None => f64::NAN,
        };
        let analytic = sys.averaged.as_ref().map_or(f64::NAN, |fb| {
            let mut v = vec![0.0; sys.m];
            fb(&[x], &mut v);
            v[0]
        });
        let reference = if analytic.is_nan() { gh } else { analytic };
        worst_erg = worst_erg.max((erg.value[0] - reference).abs());
        worst_gh = worst_gh.max((gh - reference).abs());
        drift_table.push(vec![f(x), f(erg.value[0]), f(erg.stderr[0]), f(gh), f(analytic)]);
    }
    out.streams.push(streams(Domain::FastBm, 0, F1BAR_GRID.len() as u64));
    let drift = if sys.averaged.is_some() { AveragedDrift::analytic(&sys)? } else { AveragedDrift::gauss_hermite(&sys, 40)? };
    let s = setup(c, sys.m, sys.n);
    let mut gap_table = Table::new("averaging_gap.csv", &["epsilon", "mean_sup_sq", "stderr"]);
    let mut gaps = Vec::new();
    for p in c.scale_chain()? {
        let e = averaging_gap(&sys, &drift, &p, &s)?;
        gaps.push(e.mean);
        gap_table.push(vec![f(p.epsilon), f(e.mean), f(e.stderr)]);
    }
    out.streams.push(streams(Domain::Fbm, 0, c.n_paths));
    out.streams.push(streams(Domain::Bm, 0, c.n_paths));
    out.summary.insert("max_ergodic_error".into(), worst_erg);
    out.summary.insert("max_gauss_hermite_error".into(), worst_gh);
    out.summary.insert("gap_monotone".into(), f64::from(gaps.windows(2).all(|w| w[1] < w[0]) as u8));
    out.tables.push(drift_table);
    out.tables.push(gap_table);
    Ok(out)
}

/// `Delta, Delta/2, ...` down to the grid step, at most eight levels.
pub fn block_lengths(c: &ExperimentConfig) -> Vec<f64> {
    (0..8).map(|k| c.block / f64::powi(2.0, k)).take_while(|&d| d >= c.step() * (1.0 - 1e-12)).collect()
}

pub fn khasminskii_delta(c: &ExperimentConfig) -> Result<Outcome> {
    let sys = two(c)?;
    let drift = if sys.averaged.is_some() { AveragedDrift::analytic(&sys)? } else { AveragedDrift::gauss_hermite(&sys, 40)? };
    let params = fbm_mdp_core::sde::ScaleParams::new(c.epsilon_chain[0], c.theta)?;
    let u = Control::zero(c.hurst, c.horizon, 64, sys.d1)?;
    let v = BmControl::zero(sys.d2, c.horizon, 64)?;
    let controls = ControlPair::new(u, v, 1.0)?;
    let deltas = block_lengths(c);
    let scan = khasminskii_scan(&sys, &drift, &params, &setup(c, sys.m, sys.n), &controls, &deltas)?;
    let mut table = Table::new(
        "khasminskii.csv",
        &["delta", "auxiliary_gap", "auxiliary_stderr", "averaged_gap", "averaged_stderr"],
    );
    for p in &scan {
        table.push(vec![
            f(p.delta),
            f(p.auxiliary_gap.mean),
            f(p.auxiliary_gap.stderr),
            f(p.averaged_gap.mean),
            f(p.averaged_gap.stderr),
        ]);
    }
    let mut out = Outcome::default();
    let total: Vec<f64> = scan.iter().map(|p| p.auxiliary_gap.mean + p.averaged_gap.mean).collect();
    let best = total.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |(k, _)| k);
    out.summary.insert("argmin_delta".into(), deltas[best]);
    if scan.len() > 1 {
        let logs: f64 = scan.windows(2).map(|w| (w[1].auxiliary_gap.mean / w[0].auxiliary_gap.mean).ln()).sum();
        out.summary.insert("mean_halving_ratio".into(), (logs / (scan.len() - 1) as f64).exp());
    }
    out.streams.push(streams(Domain::Fbm, 0, c.n_paths));
    out.streams.push(streams(Domain::Bm, 0, c.n_paths));
    out.tables.push(table);
    Ok(out)
}

pub fn rate_endpoint(c: &ExperimentConfig) -> Result<Outcome> {
    let sys = single(c)?;
    let problem = SkeletonProblem::single_scale(&sys, &vec![X0; sys.m], c.hurst, c.alpha, c.horizon, c.steps)?;
    let mut table = Table::new("rate_endpoint.csv", &["target", "rate", "achieved"]);
    let mut out = Outcome::default();
    let mut rates = Vec::new();
    for target in [c.delta, -c.delta] {
        let mut t = vec![0.0; sys.m];
        t[0] = target;
        let sol = rate_function_endpoint(&problem, &t)?;
        rates.push(sol.cost);
        table.push(vec![f(target), f(sol.cost), f(sol.achieved_path.last()[0])]);
    }
    out.summary.insert("rate".into(), rates[0]);
    out.summary.insert("exit_rate".into(), rates[0].min(rates[1]));
    out.tables.push(table);
    Ok(out)
}

pub fn mdp_trend(c: &ExperimentConfig) -> Result<Outcome> {
    let sys = single(c)?;
    let s = setup(c, sys.m, 0);
    let report = empirical_mdp_rate(&sys, &c.scale_chain()?, c.delta, &s, c.alpha, c.system == "SS-FREE")?;
    let mut buf = Vec::new();
    write_report_csv(&report.rows, &mut buf)?;
    let mut out = Outcome::default();
    out.tables.push(table_from_csv("mdp_trend.csv", &String::from_utf8(buf).expect("utf8")));
    let mut hits = Table::new("mdp_hits.csv", &["epsilon", "hits", "n_paths", "wilson_low", "wilson_high"]);
    for (k, &eps) in c.epsilon_chain.iter().enumerate() {
        let (lo, hi) = report.intervals[k];
        hits.push(vec![f(eps), report.hits[k].to_string(), c.n_paths.to_string(), f(lo), f(hi)]);
    }
    out.tables.push(hits);
    out.summary.insert("rate".into(), report.rate);
    let mut worst = 0.0f64;
    for (k, r) in report.rows.iter().enumerate() {
        if let Some(exact) = r.exact {
            if report.hits[k] as f64 >= 10.0 {
                worst = worst.max((r.estimate - exact).abs() / r.stderr);
            }
        }
    }
    if report.rows.iter().any(|r| r.exact.is_some()) {
        out.summary.insert("max_mc_z".into(), worst);
    }
    out.notes = report.notes;
    out.streams.push(streams(Domain::Fbm, 0, c.n_paths));
    Ok(out)
}
