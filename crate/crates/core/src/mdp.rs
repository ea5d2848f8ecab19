//! Skeleton equations, endpoint rate functions and Monte Carlo checks of
//! the CLT and moderate-deviation scalings.

use crate::averaging::{AveragedDrift, PathSetup};
use crate::error::{Error, Result};
use crate::fbm::{cameron_martin_apply, BmControl, Control, ControlOperators, ControlPair};
use crate::fracpath::GridPath;
use crate::mc::{self, wilson_interval, Estimate};
use crate::sde::{
    deviation_path, solve_ode_with, solve_single_scale, Field, OdeScheme, ScaleParams, SingleScaleSystem, TwoScaleSystem,
};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use std::io::{self, Write};

/// Linearised controlled equation `dz = A(t) z dt + S(t) du` along a base
/// path, discretised on the control grid.
///
/// `A` and `S` are frozen at cell midpoints and the flow over each cell is
/// split as `Φ(t_{i+1}, t_{i+½}) [Φ(t_{i+½}, t_i) z_i + S Δu_i]`.
#[derive(Debug, Clone)]
pub struct SkeletonProblem {
    pub hurst: f64,
    pub alpha: f64,
    /// Base path on the control grid.
    pub base_path: GridPath,
    pub m: usize,
    pub d1: usize,
    /// `exp(A_i h/2)` per cell.
    half_flows: Vec<DMatrix<f64>>,
    /// `S_i`, `m × d1`, per cell.
    diffusions: Vec<DMatrix<f64>>,
}

impl SkeletonProblem {
    /// Builds the problem from a base path with twice as many steps as the
    /// control grid, so that odd nodes are cell midpoints.
    pub fn new(base_fine: &GridPath, jacobian: &Field, diffusion: &Field, d1: usize, hurst: f64, alpha: f64) -> Result<Self> {
        if !(0.5..1.0).contains(&hurst) {
            return Err(Error::InvalidParameter(format!("skeleton needs 1/2 <= H < 1, got {hurst}")));
        }
        if !(alpha > 1.0 - hurst && alpha < 0.5) {
            return Err(Error::EmptyExponentWindow { lower: 1.0 - hurst, upper: 0.5, alpha });
        }
        if base_fine.steps() % 2 != 0 {
            return Err(Error::GridMismatch("base path needs an even number of steps".into()));
        }
        let m = base_fine.dim();
        let cells = base_fine.steps() / 2;
        let h = base_fine.horizon() / cells as f64;
        let mut half_flows = Vec::with_capacity(cells);
        let mut diffusions = Vec::with_capacity(cells);
        let (mut a, mut s) = (vec![0.0; m * m], vec![0.0; m * d1]);
        for i in 0..cells {
            let x = base_fine.row(2 * i + 1);
            jacobian(x, &mut a);
            diffusion(x, &mut s);
            if a.iter().chain(&s).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: 2 * i + 1, comp: 0 });
            }
            half_flows.push((DMatrix::from_row_slice(m, m, &a) * (0.5 * h)).exp());
            diffusions.push(DMatrix::from_row_slice(m, d1, &s));
        }
        Ok(Self { hurst, alpha, base_path: base_fine.subsample(2)?, m, d1, half_flows, diffusions })
    }

    /// Skeleton of `dx = f(x)dt + √ε σ(x)dB^H` around the RK4 limit from `x0`.
    pub fn single_scale(sys: &SingleScaleSystem, x0: &[f64], hurst: f64, alpha: f64, horizon: f64, steps: usize) -> Result<Self> {
        let base = solve_ode_with(&*sys.drift, x0, horizon, 2 * steps, OdeScheme::Rk4)?;
        Self::new(&base, &sys.jacobian, &sys.diffusion, sys.d1, hurst, alpha)
    }

    /// Skeleton around the averaged limit, with `Df̄1` and `σ1`.
    #[allow(clippy::too_many_arguments)]
    pub fn two_scale(
        sys: &TwoScaleSystem,
        drift: &AveragedDrift,
        x0: &[f64],
        hurst: f64,
        alpha: f64,
        horizon: f64,
        steps: usize,
    ) -> Result<Self> {
        Self::single_scale(&drift.averaged_system(sys), x0, hurst, alpha, horizon, steps)
    }

    pub fn steps(&self) -> usize {
        self.base_path.steps()
    }

    pub fn horizon(&self) -> f64 {
        self.base_path.horizon()
    }

    /// `sup_t |A(t)|` over the cell midpoints, in the operator 2-norm.
    pub fn jacobian_bound(&self) -> f64 {
        let h = self.base_path.step();
        self.half_flows.iter().map(|e| e.clone().ln_or_log_norm(h)).fold(0.0, f64::max)
    }

    /// `Φ(T, t_i)` for `i = 0..=M`.
    fn flows_to_end(&self) -> Vec<DMatrix<f64>> {
        let n = self.steps();
        let mut q = vec![DMatrix::identity(self.m, self.m); n + 1];
        for i in (0..n).rev() {
            q[i] = &q[i + 1] * &self.half_flows[i] * &self.half_flows[i];
        }
        q
    }
}

trait LogNorm {
    fn ln_or_log_norm(self, h: f64) -> f64;
}

impl LogNorm for DMatrix<f64> {
    /// Recovers `|A|` from `exp(A h/2)` through the principal logarithm of
    /// its symmetric part, adequate for the bound check.
    fn ln_or_log_norm(self, h: f64) -> f64 {
        let sym = (&self + self.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        eig.eigenvalues.iter().map(|l| (l.abs().max(1e-300).ln() / (0.5 * h)).abs()).fold(0.0, f64::max)
    }
}

fn check_control(problem: &SkeletonProblem, control: &Control) -> Result<()> {
    if control.steps() != problem.steps()
        || (control.horizon() - problem.horizon()).abs() > 1e-12 * problem.horizon()
        || control.dim() != problem.d1
        || control.hurst() != problem.hurst
    {
        return Err(Error::GridMismatch(format!(
            "control (H = {}, {} steps, dim {}) vs skeleton (H = {}, {} steps, dim {})",
            control.hurst(),
            control.steps(),
            control.dim(),
            problem.hurst,
            problem.steps(),
            problem.d1
        )));
    }
    Ok(())
}

/// Integrates the skeleton equation from `z(0) = 0` under the control.
pub fn solve_skeleton(problem: &SkeletonProblem, control: &Control) -> Result<GridPath> {
    check_control(problem, control)?;
    let (m, n) = (problem.m, problem.steps());
    let u = control.u();
    let mut z = DVector::<f64>::zeros(m);
    let mut values = Vec::with_capacity((n + 1) * m);
    values.extend(z.iter());
    for i in 0..n {
        let du = DVector::from_iterator(problem.d1, u.row(i + 1).iter().zip(u.row(i)).map(|(b, a)| b - a));
        let e = &problem.half_flows[i];
        z = e * (e * &z + &problem.diffusions[i] * du);
        values.extend(z.iter());
    }
    GridPath::new(problem.horizon(), n, m, values)
}

/// The two-scale skeleton under a pair `(u, v)`; `v` does not enter.
pub fn solve_skeleton_pair(problem: &SkeletonProblem, controls: &ControlPair) -> Result<GridPath> {
    solve_skeleton(problem, &controls.u)
}

/// Whether the two-scale skeleton output under `(u, v)` is bit-identical
/// to the one under `(u, 0)`.
pub fn two_scale_skeleton_v_independence(problem: &SkeletonProblem, u: &Control, v: &BmControl) -> Result<bool> {
    let zero = BmControl::zero(v.v().dim(), v.v().horizon(), v.v().steps())?;
    let budget = 0.5 * (u.cm_norm_sq() + v.norm_sq());
    let with_v = solve_skeleton_pair(problem, &ControlPair::new(u.clone(), v.clone(), budget)?)?;
    let without = solve_skeleton_pair(problem, &ControlPair::new(u.clone(), zero, budget)?)?;
    Ok(with_v == without)
}

/// Matrix `R` (`m × M d1`, columns ordered cell-major) with
/// `z(T) = R · c` for the cell coefficients `c` of `u̇`.
pub fn build_response_matrix(problem: &SkeletonProblem) -> DMatrix<f64> {
    let (m, d1, n) = (problem.m, problem.d1, problem.steps());
    let ops = ControlOperators::cached(problem.hurst, problem.horizon(), n);
    let q = problem.flows_to_end();
    // P_i S_i: effect of Δu_i on z(T)
    let effect: Vec<DMatrix<f64>> =
        (0..n).map(|i| &q[i + 1] * &problem.half_flows[i] * &problem.diffusions[i]).collect();
    let a = |i: usize, j: usize| if j < i { ops.a[i * (i - 1) / 2 + j] } else { 0.0 };
    let mut r = DMatrix::<f64>::zeros(m, n * d1);
    for j in 0..n {
        for (i, eff) in effect.iter().enumerate().skip(j) {
            let coef = a(i + 1, j) - a(i, j);
            for c in 0..d1 {
                for row in 0..m {
                    r[(row, j * d1 + c)] += coef * eff[(row, c)];
                }
            }
        }
    }
    r
}

/// Minimum-cost control reaching an endpoint, with its cost and path.
#[derive(Debug, Clone)]
pub struct RateFunctionSolution {
    /// Cell coefficients of `u̇`, row-major `M × d1`.
    pub optimal_dot_u: Vec<f64>,
    pub control: Control,
    /// `½ ‖u̇‖²`.
    pub cost: f64,
    pub achieved_path: GridPath,
    pub response_matrix: DMatrix<f64>,
}

const RANK_CUTOFF: f64 = 1e-10;

/// `inf { ½‖u̇‖² : z(T) = target }` over the discrete Cameron–Martin space.
pub fn rate_function_endpoint(problem: &SkeletonProblem, target: &[f64]) -> Result<RateFunctionSolution> {
    if target.len() != problem.m {
        return Err(Error::InvalidParameter(format!("target has dimension {}, expected {}", target.len(), problem.m)));
    }
    let (d1, n) = (problem.d1, problem.steps());
    let r = build_response_matrix(problem);
    let w = &ControlOperators::cached(problem.hurst, problem.horizon(), n).w;
    let w_inv = DVector::from_iterator(n * d1, (0..n * d1).map(|k| 1.0 / w[k / d1]));
    let rw = DMatrix::from_fn(problem.m, n * d1, |i, k| r[(i, k)] * w_inv[k]);
    let gram = &rw * r.transpose();
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let t = DVector::from_column_slice(target);
    let tnorm = t.norm();
    let mut lambda = DVector::<f64>::zeros(problem.m);
    for (k, &ev) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        let proj = v.dot(&t);
        if top > 0.0 && ev > RANK_CUTOFF * top {
            lambda += v * (proj / ev);
        } else if proj.abs() > 1e-12 * tnorm.max(f64::MIN_POSITIVE) && tnorm > 0.0 {
            return Err(Error::UnreachableTarget);
        }
    }
    let dot_u: Vec<f64> = (rw.transpose() * &lambda).iter().cloned().collect();
    let control = cameron_martin_apply(&dot_u, d1, problem.hurst, problem.horizon(), n)?;
    let cost = 0.5 * control.cm_norm_sq();
    let achieved_path = solve_skeleton(problem, &control)?;
    Ok(RateFunctionSolution { optimal_dot_u: dot_u, control, cost, achieved_path, response_matrix: r })
}

/// `min` of the endpoint costs at `±δ` for a scalar slow variable.
pub fn rate_function_exit_level(problem: &SkeletonProblem, delta: f64) -> Result<f64> {
    if problem.m != 1 {
        return Err(Error::InvalidParameter("exit level needs a scalar slow variable".into()));
    }
    if delta == 0.0 {
        return Ok(0.0);
    }
    let up = rate_function_endpoint(problem, &[delta])?.cost;
    let down = rate_function_endpoint(problem, &[-delta])?.cost;
    Ok(up.min(down))
}

/// One line of a report table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub epsilon: f64,
    pub h_eps: f64,
    pub b_eps: f64,
    pub quantity: String,
    /// `NaN` when the probability is below Monte Carlo resolution.
    pub estimate: f64,
    pub stderr: f64,
    pub exact: Option<f64>,
}

impl ReportRow {
    fn new(params: &ScaleParams, quantity: &str, est: Estimate, exact: Option<f64>) -> Self {
        Self {
            epsilon: params.epsilon,
            h_eps: params.h_eps(),
            b_eps: params.b_eps(),
            quantity: quantity.to_string(),
            estimate: est.mean,
            stderr: est.stderr,
            exact,
        }
    }
}

pub fn write_report_csv<W: Write>(rows: &[ReportRow], mut out: W) -> io::Result<()> {
    writeln!(out, "epsilon,h_eps,b_eps,quantity,estimate,stderr,exact")?;
    for r in rows {
        let exact = r.exact.map(|v| v.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{},{},{},{}", r.epsilon, r.h_eps, r.b_eps, r.quantity, r.estimate, r.stderr, exact)?;
    }
    Ok(())
}

/// `Var(∫_0^T Φ(T,s)σ(x_s)dB^H_s)` of the first slow component, as the
/// double sum over grid increments of `Φ(T,t_i)σ(x_{t_i})` against the
/// increment covariance.
pub fn clt_limit_variance(sys: &SingleScaleSystem, x0: &[f64], hurst: f64, horizon: f64, steps: usize) -> Result<f64> {
    let alpha = 0.5 * (1.5 - hurst);
    let problem = SkeletonProblem::single_scale(sys, x0, hurst, alpha, horizon, steps)?;
    let q = problem.flows_to_end();
    let d1 = sys.d1;
    let mut s = vec![0.0; sys.m * d1];
    let phi: Vec<Vec<f64>> = (0..steps)
        .map(|i| {
            (sys.diffusion)(problem.base_path.row(i), &mut s);
            let sm = DMatrix::from_row_slice(sys.m, d1, &s);
            let row = q[i].row(0) * sm;
            row.iter().cloned().collect()
        })
        .collect();
    let h = horizon / steps as f64;
    let cov: Vec<f64> = (0..steps)
        .map(|k| {
            let k = k as f64;
            let p = 2.0 * hurst;
            0.5 * ((k + 1.0).powf(p) + (k - 1.0).abs().powf(p) - 2.0 * k.powf(p)) * h.powf(p)
        })
        .collect();
    let mut total = 0.0;
    for i in 0..steps {
        for j in 0..steps {
            let c = cov[i.abs_diff(j)];
            total += c * phi[i].iter().zip(&phi[j]).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    Ok(total)
}

/// Deviation paths `z^ε` for every path of the setup, against the Euler
/// limit on the same grid.
fn deviations(sys: &SingleScaleSystem, params: &ScaleParams, setup: &PathSetup) -> Result<Vec<GridPath>> {
    let limit = solve_ode_with(&*sys.drift, &setup.x0, setup.horizon, setup.steps, OdeScheme::Euler)?;
    mc::try_par_map(setup.n_paths, |i| {
        let b = mc::fbm_driver(setup.hurst, sys.d1, setup.horizon, setup.steps, setup.seed, i)?;
        let x = solve_single_scale(sys, params, &setup.x0, &b)?;
        deviation_path(&x, &limit, params)
    })
}

/// `h(ε)² Var(z^ε_T)` per `ε`, with the limit variance as the exact column.
pub fn clt_variance_check(sys: &SingleScaleSystem, chain: &[ScaleParams], setup: &PathSetup) -> Result<Vec<ReportRow>> {
    let limit = clt_limit_variance(sys, &setup.x0, setup.hurst, setup.horizon, setup.steps)?;
    chain
        .iter()
        .map(|p| {
            let z = deviations(sys, p, setup)?;
            let h2 = p.h_eps().powi(2);
            let ends: Vec<f64> = z.iter().map(|z| z.last()[0]).collect();
            let mut v = Estimate::variance_of(&ends);
            v.mean *= h2;
            v.stderr *= h2;
            Ok(ReportRow::new(p, "h2_var_z_T", v, Some(limit)))
        })
        .collect()
}

/// `ln erfc(x)`, switching to the asymptotic series where `erfc` underflows.
fn ln_erfc(x: f64) -> f64 {
    if x < 20.0 {
        statrs::function::erf::erfc(x).ln()
    } else {
        let x2 = x * x;
        -x2 - (x * std::f64::consts::PI.sqrt()).ln() + (1.0 - 0.5 / x2 + 0.75 / (x2 * x2)).ln()
    }
}

/// `b(ε) ln P(|B^H_T| ≥ δ h(ε))`, the exact value for `f = 0`, `σ = 1`.
pub fn exact_free_tail(params: &ScaleParams, delta: f64, hurst: f64, horizon: f64) -> f64 {
    let x = delta * params.h_eps() / horizon.powf(hurst);
    params.b_eps() * (ln_erfc(x / std::f64::consts::SQRT_2))
}

/// Moderate-deviation table for a scalar system.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpReport {
    pub rows: Vec<ReportRow>,
    /// Exit-level rate `inf{I(z) : |z(T)| ≥ δ}`.
    pub rate: f64,
    /// Estimate plus rate per `ε`; `NaN` below resolution.
    pub gaps: Vec<f64>,
    /// Wilson 95% interval of `b(ε) ln P` per `ε`.
    pub intervals: Vec<(f64, f64)>,
    /// Hit counts per `ε`.
    pub hits: Vec<usize>,
    pub notes: Vec<String>,
}

/// `b(ε) ln P̂(|z^ε_T| ≥ δ)` over the chain by plain Monte Carlo; when
/// `free_exact` is set the system is `f = 0`, `σ = 1` and the Gaussian tail
/// fills the exact column.
pub fn empirical_mdp_rate(
    sys: &SingleScaleSystem,
    chain: &[ScaleParams],
    delta: f64,
    setup: &PathSetup,
    alpha: f64,
    free_exact: bool,
) -> Result<MdpReport> {
    if sys.m != 1 {
        return Err(Error::InvalidParameter("MDP report needs a scalar slow variable".into()));
    }
    let problem = SkeletonProblem::single_scale(sys, &setup.x0, setup.hurst, alpha, setup.horizon, 256)?;
    let rate = rate_function_exit_level(&problem, delta)?;
    let mut report = MdpReport { rows: Vec::new(), rate, gaps: Vec::new(), intervals: Vec::new(), hits: Vec::new(), notes: Vec::new() };
    let n = setup.n_paths as usize;
    for p in chain {
        let z = deviations(sys, p, setup)?;
        let k = z.iter().filter(|z| z.last()[0].abs() >= delta).count();
        let b = p.b_eps();
        let exact = free_exact.then(|| exact_free_tail(p, delta, setup.hurst, setup.horizon));
        let (lo, hi) = wilson_interval(k, n, 1.96);
        let est = if k == 0 {
            report.notes.push(format!("epsilon = {}: below MC resolution", p.epsilon));
            Estimate { mean: f64::NAN, stderr: f64::NAN, n }
        } else {
            let ph = k as f64 / n as f64;
            Estimate { mean: b * ph.ln(), stderr: b * ((1.0 - ph) / (n as f64 * ph)).sqrt(), n }
        };
        report.rows.push(ReportRow::new(p, "b_log_p", est, exact));
        report.gaps.push(est.mean + rate);
        report.intervals.push((b * lo.max(f64::MIN_POSITIVE).ln(), b * hi.ln()));
        report.hits.push(k);
    }
    Ok(report)
}
