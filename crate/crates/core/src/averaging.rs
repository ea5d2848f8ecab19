//! The averaged slow drift `f̄1(x) = ∫ f1(x, y) μ_x(dy)` and Monte Carlo
//! checks of the averaging principle.

use crate::error::{Error, Result};
use crate::fbm::ControlPair;
use crate::fracpath::GridPath;
use crate::mc::{self, batch_means, Estimate};
use crate::quad::gauss_hermite;
use crate::sde::{
    solve_controlled_single, solve_frozen_fast, solve_khasminskii_auxiliary, solve_ode_with, solve_two_scale, Field,
    OdeScheme, ScaleParams, SingleScaleSystem, TwoScaleSystem,
};
use std::io::{self, Write};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftMethod {
    Ergodic,
    GaussHermite,
    Analytic,
}

/// An averaged drift together with how it was obtained.
#[derive(Clone)]
pub struct AveragedDrift {
    pub evaluator: Field,
    pub method: DriftMethod,
    /// Typical absolute error of one evaluation.
    pub error_estimate: f64,
}

impl std::fmt::Debug for AveragedDrift {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AveragedDrift")
            .field("method", &self.method)
            .field("error_estimate", &self.error_estimate)
            .finish()
    }
}

/// Parameters of a time-averaging run of the frozen fast process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErgodicConfig {
    pub t_burn: f64,
    pub t_avg: f64,
    pub step: f64,
    pub seed: u64,
}

impl ErgodicConfig {
    /// Burn-in `10/β₁`, averaging window `100/β₁`.
    pub fn for_rate(beta1: f64, seed: u64) -> Self {
        Self { t_burn: 10.0 / beta1, t_avg: 100.0 / beta1, step: 0.005, seed }
    }
}

/// Time average with batch-means standard errors, one entry per slow component.
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicValue {
    pub value: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl AveragedDrift {
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        (self.evaluator)(x, &mut out);
        out
    }

    /// The closed form carried by the system.
    pub fn analytic(sys: &TwoScaleSystem) -> Result<Self> {
        let f = sys
            .averaged
            .clone()
            .ok_or_else(|| Error::InvalidParameter(format!("{} has no closed-form averaged drift", sys.name)))?;
        Ok(Self { evaluator: f, method: DriftMethod::Analytic, error_estimate: 0.0 })
    }

    /// Tensor Gauss–Hermite quadrature against the Gaussian invariant law.
    pub fn gauss_hermite(sys: &TwoScaleSystem, order: usize) -> Result<Self> {
        let rate = sys
            .gaussian_rate
            .clone()
            .ok_or_else(|| Error::InvalidParameter(format!("{} has no Gaussian invariant law", sys.name)))?;
        if sys.n > 3 {
            return Err(Error::InvalidParameter(format!("tensor quadrature needs n <= 3, got {}", sys.n)));
        }
        let (m, n, f1) = (sys.m, sys.n, sys.f1.clone());
        let evaluator: Field = Arc::new(move |x, out| {
            match gauss_hermite_f1bar(&*f1, m, n, rate(x), x, order) {
                Ok(v) => out.copy_from_slice(&v),
                Err(_) => out.fill(f64::NAN),
            }
        });
        Ok(Self { evaluator, method: DriftMethod::GaussHermite, error_estimate: 1e-12 })
    }

    /// Time averaging along the frozen fast process, with common random
    /// numbers across `x`.
    pub fn ergodic(sys: &TwoScaleSystem, cfg: ErgodicConfig) -> Result<Self> {
        let probe = ergodic_f1bar(sys, &vec![0.0; sys.m], cfg)?;
        let error_estimate = probe.stderr.iter().cloned().fold(0.0, f64::max);
        let sys = sys.clone();
        let evaluator: Field = Arc::new(move |x, out| match ergodic_f1bar(&sys, x, cfg) {
            Ok(v) => out.copy_from_slice(&v.value),
            Err(_) => out.fill(f64::NAN),
        });
        Ok(Self { evaluator, method: DriftMethod::Ergodic, error_estimate })
    }

    /// The averaged equation `dx̄ = f̄1(x̄)dt + √ε σ1(x̄)dB^H` as a
    /// single-scale system.
    pub fn averaged_system(&self, sys: &TwoScaleSystem) -> SingleScaleSystem {
        let jacobian: Field = match &sys.averaged_jacobian {
            Some(j) => j.clone(),
            None => {
                let f = self.evaluator.clone();
                let m = sys.m;
                Arc::new(move |x, out| {
                    let h = 1e-5;
                    let (mut plus, mut minus) = (vec![0.0; m], vec![0.0; m]);
                    let mut xp = x.to_vec();
                    for k in 0..m {
                        xp[k] = x[k] + h;
                        f(&xp, &mut plus);
                        xp[k] = x[k] - h;
                        f(&xp, &mut minus);
                        xp[k] = x[k];
                        for r in 0..m {
                            out[r * m + k] = (plus[r] - minus[r]) / (2.0 * h);
                        }
                    }
                })
            }
        };
        SingleScaleSystem {
            name: format!("{}-averaged", sys.name),
            m: sys.m,
            d1: sys.d1,
            drift: self.evaluator.clone(),
            diffusion: sys.sigma1.clone(),
            jacobian,
            constants: sys.constants,
        }
    }
}

/// Time average of `f1(x, ỹ_t)` over `[T_burn, T_burn + T_avg]` along the
/// frozen fast process started at 0.
pub fn ergodic_f1bar(sys: &TwoScaleSystem, x: &[f64], cfg: ErgodicConfig) -> Result<ErgodicValue> {
    let beta1 = sys.constants.beta1;
    if cfg.t_burn < 5.0 / beta1 {
        return Err(Error::InvalidParameter(format!("burn-in {} shorter than 5/beta1 = {}", cfg.t_burn, 5.0 / beta1)));
    }
    if !(cfg.t_avg > 0.0 && cfg.step > 0.0) {
        return Err(Error::DegenerateGrid);
    }
    let burn = (cfg.t_burn / cfg.step).round() as usize;
    let avg = ((cfg.t_avg / cfg.step).round() as usize).max(20);
    let y = solve_frozen_fast(sys, x, &vec![0.0; sys.n], (burn + avg) as f64 * cfg.step, burn + avg, cfg.seed, 0)?;
    let mut series = vec![Vec::with_capacity(avg); sys.m];
    let mut f = vec![0.0; sys.m];
    for i in burn..burn + avg {
        (sys.f1)(x, y.row(i), &mut f);
        for (s, v) in series.iter_mut().zip(&f) {
            s.push(*v);
        }
    }
    let est: Vec<Estimate> = series.iter().map(|s| batch_means(s, 20)).collect();
    Ok(ErgodicValue { value: est.iter().map(|e| e.mean).collect(), stderr: est.iter().map(|e| e.stderr).collect() })
}

/// `∫ f1(x, y) μ(dy)` for `μ = N(0, I/(4a))`, by tensor Gauss–Hermite
/// quadrature of the given order in `n ≤ 3` fast dimensions.
pub fn gauss_hermite_f1bar(
    f1: &(dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync),
    m: usize,
    n: usize,
    a: f64,
    x: &[f64],
    order: usize,
) -> Result<Vec<f64>> {
    if !(a > 0.0) {
        return Err(Error::DissipativityViolated(a));
    }
    if n == 0 || n > 3 {
        return Err(Error::InvalidParameter(format!("tensor quadrature needs 1 <= n <= 3, got {n}")));
    }
    let (z, w) = gauss_hermite(order);
    let scale = 1.0 / (2.0 * a).sqrt();
    let norm = std::f64::consts::PI.powf(-0.5 * n as f64);
    let mut acc = vec![0.0; m];
    let mut out = vec![0.0; m];
    let mut y = vec![0.0; n];
    let mut idx = vec![0usize; n];
    loop {
        let mut weight = norm;
        for k in 0..n {
            y[k] = scale * z[idx[k]];
            weight *= w[idx[k]];
        }
        f1(x, &y, &mut out);
        for (a, o) in acc.iter_mut().zip(&out) {
            *a += weight * o;
        }
        let mut k = 0;
        while k < n {
            idx[k] += 1;
            if idx[k] < order {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == n {
            return Ok(acc);
        }
    }
}

/// One row of a tabulated averaged drift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F1barRow {
    pub x: f64,
    pub f1bar: f64,
    pub stderr: f64,
}

pub fn write_f1bar_csv<W: Write>(rows: &[F1barRow], mut out: W) -> io::Result<()> {
    writeln!(out, "x,f1bar,stderr")?;
    for r in rows {
        writeln!(out, "{},{},{}", r.x, r.f1bar, r.stderr)?;
    }
    Ok(())
}

/// Grid and sample size of a Monte Carlo run.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSetup {
    pub hurst: f64,
    pub horizon: f64,
    pub steps: usize,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub n_paths: u64,
    pub seed: u64,
}

fn sup_sq(a: &GridPath, b: &GridPath) -> Result<f64> {
    Ok(a.sub(b)?.sup_norm().powi(2))
}

/// `E sup_t |x^ε_t - x̄_t|²` with `x̄` the RK4 solution under `f̄1`.
pub fn averaging_gap(sys: &TwoScaleSystem, drift: &AveragedDrift, params: &ScaleParams, setup: &PathSetup) -> Result<Estimate> {
    let xbar = solve_ode_with(&*drift.evaluator, &setup.x0, setup.horizon, setup.steps, OdeScheme::Rk4)?;
    let gaps = mc::try_par_map(setup.n_paths, |i| {
        let d = mc::mixed_drivers(setup.hurst, sys.d1, sys.d2, setup.horizon, setup.steps, setup.seed, i)?;
        let s = solve_two_scale(sys, params, &setup.x0, &setup.y0, &d)?;
        sup_sq(&s.x, &xbar)
    })?;
    Ok(Estimate::from_samples(&gaps))
}

/// Khasminskii gaps at one block length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KhasminskiiPoint {
    pub delta: f64,
    /// `E sup |x̃^ε - x̂^ε|²`.
    pub auxiliary_gap: Estimate,
    /// `E sup |x̂^ε - x̄^ε|²`, with `x̄^ε` the controlled averaged equation
    /// on the same fBm.
    pub averaged_gap: Estimate,
}

/// Scan of the Khasminskii gaps over block lengths, with the same drivers
/// for every `Δ`.
pub fn khasminskii_scan(
    sys: &TwoScaleSystem,
    drift: &AveragedDrift,
    params: &ScaleParams,
    setup: &PathSetup,
    controls: &ControlPair,
    deltas: &[f64],
) -> Result<Vec<KhasminskiiPoint>> {
    let averaged = drift.averaged_system(sys);
    let per_path = mc::try_par_map(setup.n_paths, |i| {
        let d = mc::mixed_drivers(setup.hurst, sys.d1, sys.d2, setup.horizon, setup.steps, setup.seed, i)?;
        let xbar = solve_controlled_single(&averaged, params, &setup.x0, &d.fbm, &controls.u)?;
        deltas
            .iter()
            .map(|&delta| {
                let run = solve_khasminskii_auxiliary(sys, params, &setup.x0, &setup.y0, &d, controls, delta)?;
                Ok((sup_sq(&run.controlled.x, &run.auxiliary.x)?, sup_sq(&run.auxiliary.x, &xbar)?))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(deltas
        .iter()
        .enumerate()
        .map(|(k, &delta)| {
            let aux: Vec<f64> = per_path.iter().map(|p| p[k].0).collect();
            let avg: Vec<f64> = per_path.iter().map(|p| p[k].1).collect();
            KhasminskiiPoint { delta, auxiliary_gap: Estimate::from_samples(&aux), averaged_gap: Estimate::from_samples(&avg) }
        })
        .collect())
}

/// `Δ(ε) = ε^{γ+1} h(ε)² |ln ε|`, defined for `θ > 1/2` and `0 < γ < θ - 1/2`.
pub fn delta_schedule(params: &ScaleParams, gamma: f64) -> Result<f64> {
    if params.theta <= 0.5 {
        return Err(Error::InvalidParameter(format!("block schedule needs theta > 1/2, got {}", params.theta)));
    }
    if !(gamma > 0.0 && gamma < params.theta - 0.5) {
        return Err(Error::InvalidParameter(format!("gamma = {gamma} outside (0, theta - 1/2)")));
    }
    let eps = params.epsilon;
    Ok(eps.powf(gamma + 1.0) * params.h_eps().powi(2) * eps.ln().abs())
}
