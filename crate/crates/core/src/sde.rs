//! Euler solvers for the single-scale and slow-fast equations.
//!
//! The fBm integral is a left-point Young sum, the fast Brownian integral
//! a left-point Itô sum. Controls enter through the increments of the
//! Cameron–Martin path over each step, which equal the integral of `u′`
//! over the step.

use crate::error::{Error, Result};
use crate::fbm::{brownian_path, ControlPair, Control};
use crate::fracpath::GridPath;
use crate::rng::Domain;
use std::fmt;
use std::sync::Arc;

/// `x ↦ out`, with `out` sized by the caller.
pub type Field = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// `(x, y) ↦ out`.
pub type Field2 = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;

pub const BLOW_UP: f64 = 1e8;

/// Constants declared for the assumptions on a system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    /// Lipschitz constant `L`.
    pub lipschitz: f64,
    /// Linear growth constant `L′`.
    pub growth: f64,
    /// Contraction rate of the fast drift.
    pub beta1: f64,
    /// Dissipativity rate of the fast drift.
    pub beta2: f64,
}

/// `dx = f(x)dt + √ε σ(x) dB^H` with `x ∈ R^m`, `B^H ∈ R^{d1}`.
#[derive(Clone)]
pub struct SingleScaleSystem {
    pub name: String,
    pub m: usize,
    pub d1: usize,
    pub drift: Field,
    /// Row-major `m × d1`.
    pub diffusion: Field,
    /// Row-major `m × m` derivative of the drift.
    pub jacobian: Field,
    pub constants: Constants,
}

impl fmt::Debug for SingleScaleSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SingleScaleSystem")
            .field("name", &self.name)
            .field("m", &self.m)
            .field("d1", &self.d1)
            .field("constants", &self.constants)
            .finish()
    }
}

impl SingleScaleSystem {
    pub fn drift_at(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        (self.drift)(x, &mut out);
        out
    }

    pub fn diffusion_at(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m * self.d1];
        (self.diffusion)(x, &mut out);
        out
    }

    pub fn jacobian_at(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m * self.m];
        (self.jacobian)(x, &mut out);
        out
    }
}

/// The slow-fast system
/// `dx = f1(x,y)dt + √ε σ1(x) dB^H`, `dy = f2(x,y)/ε dt + σ2(x,y)/√ε dW`.
#[derive(Clone)]
pub struct TwoScaleSystem {
    pub name: String,
    pub m: usize,
    pub n: usize,
    pub d1: usize,
    pub d2: usize,
    pub f1: Field2,
    pub f2: Field2,
    /// Row-major `m × d1`.
    pub sigma1: Field,
    /// Row-major `n × d2`.
    pub sigma2: Field2,
    pub constants: Constants,
    /// Closed-form averaged drift, when known.
    pub averaged: Option<Field>,
    /// Derivative of the averaged drift, row-major `m × m`.
    pub averaged_jacobian: Option<Field>,
    /// `a(x)` when the fast drift is `-2a(x)y` with unit noise, so the
    /// invariant measure is `N(0, I/(4a(x)))`.
    pub gaussian_rate: Option<Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>>,
}

impl fmt::Debug for TwoScaleSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TwoScaleSystem")
            .field("name", &self.name)
            .field("dims", &(self.m, self.n, self.d1, self.d2))
            .field("constants", &self.constants)
            .finish()
    }
}

impl TwoScaleSystem {
    pub fn f1_at(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        (self.f1)(x, y, &mut out);
        out
    }

    pub fn sigma1_at(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m * self.d1];
        (self.sigma1)(x, &mut out);
        out
    }

    /// Spot check of `sup_y (|f1(x,y)| + |σ2(x,y)|) ≤ L(1+|x|)` on the
    /// given probe points; returns one message per violation.
    pub fn check_bounded_in_y(&self, probes: &[(Vec<f64>, Vec<f64>)]) -> Vec<String> {
        let mut out = Vec::new();
        let mut s2 = vec![0.0; self.n * self.d2];
        for (x, y) in probes {
            let f = norm(&self.f1_at(x, y));
            (self.sigma2)(x, y, &mut s2);
            let lhs = f + norm(&s2);
            let rhs = self.constants.lipschitz * (1.0 + norm(x));
            if lhs > rhs {
                out.push(format!("growth bound fails at x = {x:?}, y = {y:?}: {lhs:.4} > {rhs:.4}"));
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub enum SystemSpec {
    SingleScale(SingleScaleSystem),
    TwoScale(TwoScaleSystem),
}

impl SystemSpec {
    pub fn name(&self) -> &str {
        match self {
            SystemSpec::SingleScale(s) => &s.name,
            SystemSpec::TwoScale(s) => &s.name,
        }
    }

    pub fn constants(&self) -> Constants {
        match self {
            SystemSpec::SingleScale(s) => s.constants,
            SystemSpec::TwoScale(s) => s.constants,
        }
    }
}

/// Noise intensity `ε` and deviation scale `h(ε) = ε^{-θ/2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleParams {
    pub epsilon: f64,
    pub theta: f64,
}

impl ScaleParams {
    /// `ε ∈ [0, 1]`, `θ ∈ [0, 1)`; `ε = 0` gives the noiseless limit.
    pub fn new(epsilon: f64, theta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidParameter(format!("epsilon = {epsilon} outside [0, 1]")));
        }
        if !(0.0..1.0).contains(&theta) {
            return Err(Error::InvalidParameter(format!("theta = {theta} outside [0, 1)")));
        }
        Ok(Self { epsilon, theta })
    }

    pub fn h_eps(&self) -> f64 {
        self.epsilon.powf(-0.5 * self.theta)
    }

    pub fn b_eps(&self) -> f64 {
        self.epsilon.powf(self.theta)
    }

    /// `√ε h(ε) = ε^{(1-θ)/2}`.
    pub fn sqrt_eps_h(&self) -> f64 {
        self.epsilon.powf(0.5 * (1.0 - self.theta))
    }

    /// Message when `√ε h(ε) < β₂/2` fails.
    pub fn dissipativity_warning(&self, beta2: f64) -> Option<String> {
        let s = self.sqrt_eps_h();
        (s >= 0.5 * beta2).then(|| format!("sqrt(eps)h(eps) = {s:.4} exceeds beta2/2 = {:.4}", 0.5 * beta2))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoScaleState {
    pub x: GridPath,
    pub y: GridPath,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Drivers {
    /// fBm driving the slow equation, dimension `d1`.
    pub fbm: GridPath,
    /// BM driving the fast equation, dimension `d2`.
    pub bm: GridPath,
}

impl Drivers {
    pub fn new(fbm: GridPath, bm: GridPath) -> Result<Self> {
        fbm.check_same_grid(&bm)?;
        Ok(Self { fbm, bm })
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn guard(x: &[f64], step: usize) -> Result<()> {
    let n = norm(x);
    if n.is_finite() && n <= BLOW_UP {
        Ok(())
    } else {
        Err(Error::BlowUp { step })
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{what} has dimension {got}, expected {want}")))
    }
}

/// `out += a · S · inc` for a row-major `rows × cols` matrix `S`.
fn add_mat_vec(out: &mut [f64], a: f64, s: &[f64], inc: &[f64]) {
    let cols = inc.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &s[r * cols..(r + 1) * cols];
        *o += a * row.iter().zip(inc).map(|(p, q)| p * q).sum::<f64>();
    }
}

fn increment(p: &GridPath, i: usize) -> Vec<f64> {
    p.row(i + 1).iter().zip(p.row(i)).map(|(b, a)| b - a).collect()
}

/// Euler scheme `x_{i+1} = x_i + f(x_i)Δ + √ε σ(x_i)ΔB^H_i`.
pub fn solve_single_scale(sys: &SingleScaleSystem, params: &ScaleParams, x0: &[f64], driver: &GridPath) -> Result<GridPath> {
    controlled_single(sys, params, x0, driver, None)
}

/// Euler scheme for the controlled equation with forcing
/// `√ε h(ε) σ(x_i) (u(t_{i+1}) - u(t_i))`.
pub fn solve_controlled_single(
    sys: &SingleScaleSystem,
    params: &ScaleParams,
    x0: &[f64],
    driver: &GridPath,
    control: &Control,
) -> Result<GridPath> {
    controlled_single(sys, params, x0, driver, Some(control))
}

fn controlled_single(
    sys: &SingleScaleSystem,
    params: &ScaleParams,
    x0: &[f64],
    driver: &GridPath,
    control: Option<&Control>,
) -> Result<GridPath> {
    check_len("x0", x0.len(), sys.m)?;
    check_len("driver", driver.dim(), sys.d1)?;
    let u = match control {
        Some(c) => {
            check_len("control", c.dim(), sys.d1)?;
            if (c.horizon() - driver.horizon()).abs() > 1e-12 * driver.horizon() {
                return Err(Error::GridMismatch("control horizon differs from driver".into()));
            }
            Some(c.u_on(driver.steps())?)
        }
        None => None,
    };
    let (m, steps, dt) = (sys.m, driver.steps(), driver.step());
    let noise = params.epsilon.sqrt();
    let push = params.sqrt_eps_h();
    let mut values = Vec::with_capacity((steps + 1) * m);
    values.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let mut f = vec![0.0; m];
    let mut s = vec![0.0; m * sys.d1];
    for i in 0..steps {
        (sys.drift)(&x, &mut f);
        (sys.diffusion)(&x, &mut s);
        let db = increment(driver, i);
        let mut next: Vec<f64> = x.iter().zip(&f).map(|(a, b)| a + b * dt).collect();
        if let Some(u) = &u {
            add_mat_vec(&mut next, push, &s, &increment(u, i));
        }
        add_mat_vec(&mut next, noise, &s, &db);
        guard(&next, i + 1)?;
        values.extend_from_slice(&next);
        x = next;
    }
    GridPath::new(driver.horizon(), steps, m, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdeScheme {
    Rk4,
    Euler,
}

/// Deterministic limit `dx = f(x)dt` of a single-scale system.
pub fn solve_ode(sys: &SingleScaleSystem, x0: &[f64], horizon: f64, steps: usize, scheme: OdeScheme) -> Result<GridPath> {
    check_len("x0", x0.len(), sys.m)?;
    solve_ode_with(&*sys.drift, x0, horizon, steps, scheme)
}

/// `dx = f(x)dt` for an arbitrary vector field.
pub fn solve_ode_with(
    f: &(dyn Fn(&[f64], &mut [f64]) + Send + Sync),
    x0: &[f64],
    horizon: f64,
    steps: usize,
    scheme: OdeScheme,
) -> Result<GridPath> {
    if steps == 0 || !(horizon > 0.0) {
        return Err(Error::DegenerateGrid);
    }
    let m = x0.len();
    let dt = horizon / steps as f64;
    let mut values = Vec::with_capacity((steps + 1) * m);
    values.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let mut k = vec![vec![0.0; m]; 4];
    let mut tmp = vec![0.0; m];
    for i in 0..steps {
        match scheme {
            OdeScheme::Euler => {
                f(&x, &mut k[0]);
                for c in 0..m {
                    x[c] += dt * k[0][c];
                }
            }
            OdeScheme::Rk4 => {
                f(&x, &mut k[0]);
                for (c, t) in tmp.iter_mut().enumerate() {
                    *t = x[c] + 0.5 * dt * k[0][c];
                }
                f(&tmp, &mut k[1]);
                for (c, t) in tmp.iter_mut().enumerate() {
                    *t = x[c] + 0.5 * dt * k[1][c];
                }
                f(&tmp, &mut k[2]);
                for (c, t) in tmp.iter_mut().enumerate() {
                    *t = x[c] + dt * k[2][c];
                }
                f(&tmp, &mut k[3]);
                for c in 0..m {
                    x[c] += dt / 6.0 * (k[0][c] + 2.0 * k[1][c] + 2.0 * k[2][c] + k[3][c]);
                }
            }
        }
        guard(&x, i + 1)?;
        values.extend_from_slice(&x);
    }
    GridPath::new(horizon, steps, m, values)
}

/// `z^ε = (x^ε - x)/(√ε h(ε))`.
pub fn deviation_path(x_eps: &GridPath, x_limit: &GridPath, params: &ScaleParams) -> Result<GridPath> {
    if params.epsilon <= 0.0 {
        return Err(Error::InvalidParameter("deviation needs epsilon > 0".into()));
    }
    let scale = params.sqrt_eps_h();
    let diff = x_eps.sub(x_limit)?;
    let values = diff.values().iter().map(|v| v / scale).collect();
    GridPath::new(diff.horizon(), diff.steps(), diff.dim(), values)
}

fn check_fast_grid(sys: &TwoScaleSystem, params: &ScaleParams, dt: f64) -> Result<()> {
    if params.epsilon <= 0.0 {
        return Err(Error::InvalidParameter("two-scale solvers need epsilon > 0".into()));
    }
    let ratio = dt / params.epsilon;
    let limit = 0.1 / (2.0 * sys.constants.lipschitz);
    if ratio > limit * (1.0 + 1e-12) {
        return Err(Error::GridTooCoarse { ratio, limit });
    }
    Ok(())
}

fn check_two_scale_inputs(sys: &TwoScaleSystem, x0: &[f64], y0: &[f64], drivers: &Drivers) -> Result<()> {
    check_len("x0", x0.len(), sys.m)?;
    check_len("y0", y0.len(), sys.n)?;
    check_len("fBm driver", drivers.fbm.dim(), sys.d1)?;
    check_len("BM driver", drivers.bm.dim(), sys.d2)?;
    drivers.fbm.check_same_grid(&drivers.bm)
}

/// Joint Euler scheme for the slow-fast system.
pub fn solve_two_scale(sys: &TwoScaleSystem, params: &ScaleParams, x0: &[f64], y0: &[f64], drivers: &Drivers) -> Result<TwoScaleState> {
    two_scale(sys, params, x0, y0, drivers, None, None)
}

/// Slow-fast system with slow forcing `√ε h(ε) σ1 du` and fast forcing
/// `(h(ε)/√ε) σ2 dv`.
pub fn solve_controlled_two_scale(
    sys: &TwoScaleSystem,
    params: &ScaleParams,
    x0: &[f64],
    y0: &[f64],
    drivers: &Drivers,
    controls: &ControlPair,
) -> Result<TwoScaleState> {
    let steps = drivers.fbm.steps();
    let u = controls.u.u_on(steps)?;
    let v = controls.v.v_on(steps)?;
    check_len("u", u.dim(), sys.d1)?;
    check_len("v", v.dim(), sys.d2)?;
    two_scale(sys, params, x0, y0, drivers, Some(&u), Some(&v))
}

fn two_scale(
    sys: &TwoScaleSystem,
    params: &ScaleParams,
    x0: &[f64],
    y0: &[f64],
    drivers: &Drivers,
    u: Option<&GridPath>,
    v: Option<&GridPath>,
) -> Result<TwoScaleState> {
    check_two_scale_inputs(sys, x0, y0, drivers)?;
    let (steps, dt) = (drivers.fbm.steps(), drivers.fbm.step());
    check_fast_grid(sys, params, dt)?;
    let eps = params.epsilon;
    let (slow_noise, fast_noise) = (eps.sqrt(), 1.0 / eps.sqrt());
    let (slow_push, fast_push) = (params.sqrt_eps_h(), params.h_eps() / eps.sqrt());
    let (m, n) = (sys.m, sys.n);
    let mut xs = Vec::with_capacity((steps + 1) * m);
    let mut ys = Vec::with_capacity((steps + 1) * n);
    xs.extend_from_slice(x0);
    ys.extend_from_slice(y0);
    let (mut x, mut y) = (x0.to_vec(), y0.to_vec());
    let (mut f1, mut f2) = (vec![0.0; m], vec![0.0; n]);
    let (mut s1, mut s2) = (vec![0.0; m * sys.d1], vec![0.0; n * sys.d2]);
    for i in 0..steps {
        (sys.f1)(&x, &y, &mut f1);
        (sys.f2)(&x, &y, &mut f2);
        (sys.sigma1)(&x, &mut s1);
        (sys.sigma2)(&x, &y, &mut s2);
        let mut nx: Vec<f64> = x.iter().zip(&f1).map(|(a, b)| a + b * dt).collect();
        if let Some(u) = u {
            add_mat_vec(&mut nx, slow_push, &s1, &increment(u, i));
        }
        add_mat_vec(&mut nx, slow_noise, &s1, &increment(&drivers.fbm, i));
        let mut ny: Vec<f64> = y.iter().zip(&f2).map(|(a, b)| a + b * dt / eps).collect();
        if let Some(v) = v {
            add_mat_vec(&mut ny, fast_push, &s2, &increment(v, i));
        }
        add_mat_vec(&mut ny, fast_noise, &s2, &increment(&drivers.bm, i));
        guard(&nx, i + 1)?;
        guard(&ny, i + 1)?;
        xs.extend_from_slice(&nx);
        ys.extend_from_slice(&ny);
        x = nx;
        y = ny;
    }
    let horizon = drivers.fbm.horizon();
    Ok(TwoScaleState { x: GridPath::new(horizon, steps, m, xs)?, y: GridPath::new(horizon, steps, n, ys)? })
}

/// Euler–Maruyama path of the frozen equation
/// `dỹ = f2(x, ỹ)dt + σ2(x, ỹ)dW` on `[0, horizon]`, using stream `index`.
pub fn solve_frozen_fast(
    sys: &TwoScaleSystem,
    x: &[f64],
    y0: &[f64],
    horizon: f64,
    steps: usize,
    seed: u64,
    index: u64,
) -> Result<GridPath> {
    check_len("x", x.len(), sys.m)?;
    check_len("y0", y0.len(), sys.n)?;
    let w = brownian_path(seed, Domain::FastBm, index, sys.d2, horizon, steps)?;
    frozen_fast_with(sys, x, y0, &w)
}

/// Frozen fast process driven by a given Brownian path.
pub fn frozen_fast_with(sys: &TwoScaleSystem, x: &[f64], y0: &[f64], w: &GridPath) -> Result<GridPath> {
    let (n, dt) = (sys.n, w.step());
    let mut ys = Vec::with_capacity((w.steps() + 1) * n);
    ys.extend_from_slice(y0);
    let mut y = y0.to_vec();
    let mut f2 = vec![0.0; n];
    let mut s2 = vec![0.0; n * sys.d2];
    for i in 0..w.steps() {
        (sys.f2)(x, &y, &mut f2);
        (sys.sigma2)(x, &y, &mut s2);
        let mut ny: Vec<f64> = y.iter().zip(&f2).map(|(a, b)| a + b * dt).collect();
        add_mat_vec(&mut ny, 1.0, &s2, &increment(w, i));
        guard(&ny, i + 1)?;
        ys.extend_from_slice(&ny);
        y = ny;
    }
    GridPath::new(w.horizon(), w.steps(), n, ys)
}

/// The controlled solution together with its Khasminskii auxiliary pair.
#[derive(Debug, Clone, PartialEq)]
pub struct KhasminskiiRun {
    pub controlled: TwoScaleState,
    pub auxiliary: TwoScaleState,
}

/// Number of grid steps in `delta`, which must be a positive multiple of
/// the grid step.
pub fn block_length(delta: f64, step: f64) -> Result<usize> {
    let k = delta / step;
    let r = k.round();
    if r < 1.0 || (k - r).abs() > 1e-9 * r {
        return Err(Error::NotGridAligned { delta, step });
    }
    Ok(r as usize)
}

/// Auxiliary processes with the slow argument frozen at `x̃^ε_{t(Δ)}`,
/// `t(Δ) = ⌊t/Δ⌋Δ`; the fast auxiliary carries no control.
pub fn solve_khasminskii_auxiliary(
    sys: &TwoScaleSystem,
    params: &ScaleParams,
    x0: &[f64],
    y0: &[f64],
    drivers: &Drivers,
    controls: &ControlPair,
    delta: f64,
) -> Result<KhasminskiiRun> {
    let block = block_length(delta, drivers.fbm.step())?;
    let controlled = solve_controlled_two_scale(sys, params, x0, y0, drivers, controls)?;
    let u = controls.u.u_on(drivers.fbm.steps())?;
    let auxiliary = auxiliary_given(sys, params, x0, y0, drivers, &u, &controlled.x, block)?;
    Ok(KhasminskiiRun { controlled, auxiliary })
}

#[allow(clippy::too_many_arguments)]
fn auxiliary_given(
    sys: &TwoScaleSystem,
    params: &ScaleParams,
    x0: &[f64],
    y0: &[f64],
    drivers: &Drivers,
    u: &GridPath,
    x_tilde: &GridPath,
    block: usize,
) -> Result<TwoScaleState> {
    let (steps, dt) = (drivers.fbm.steps(), drivers.fbm.step());
    let eps = params.epsilon;
    let (slow_noise, fast_noise, slow_push) = (eps.sqrt(), 1.0 / eps.sqrt(), params.sqrt_eps_h());
    let (m, n) = (sys.m, sys.n);
    let mut xs = Vec::with_capacity((steps + 1) * m);
    let mut ys = Vec::with_capacity((steps + 1) * n);
    xs.extend_from_slice(x0);
    ys.extend_from_slice(y0);
    let (mut x, mut y) = (x0.to_vec(), y0.to_vec());
    let (mut f1, mut f2) = (vec![0.0; m], vec![0.0; n]);
    let (mut s1, mut s2) = (vec![0.0; m * sys.d1], vec![0.0; n * sys.d2]);
    for i in 0..steps {
        let frozen = x_tilde.row((i / block) * block);
        (sys.f1)(frozen, &y, &mut f1);
        (sys.f2)(frozen, &y, &mut f2);
        (sys.sigma1)(&x, &mut s1);
        (sys.sigma2)(frozen, &y, &mut s2);
        let mut nx: Vec<f64> = x.iter().zip(&f1).map(|(a, b)| a + b * dt).collect();
        add_mat_vec(&mut nx, slow_push, &s1, &increment(u, i));
        add_mat_vec(&mut nx, slow_noise, &s1, &increment(&drivers.fbm, i));
        let mut ny: Vec<f64> = y.iter().zip(&f2).map(|(a, b)| a + b * dt / eps).collect();
        add_mat_vec(&mut ny, fast_noise, &s2, &increment(&drivers.bm, i));
        guard(&nx, i + 1)?;
        guard(&ny, i + 1)?;
        xs.extend_from_slice(&nx);
        ys.extend_from_slice(&ny);
        x = nx;
        y = ny;
    }
    let horizon = drivers.fbm.horizon();
    Ok(TwoScaleState { x: GridPath::new(horizon, steps, m, xs)?, y: GridPath::new(horizon, steps, n, ys)? })
}
