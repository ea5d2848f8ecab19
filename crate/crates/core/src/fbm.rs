//! Fractional and standard Brownian motion.
//!
//! Three samplers share the same interface: an exact Cholesky factor of
//! the grid covariance, a discretised Volterra representation driven by
//! Brownian increments, and circulant embedding of fractional Gaussian
//! noise for long grids. Factorisations are cached per grid.

use crate::error::{Error, Result};
use crate::fracpath::GridPath;
use crate::quad::{gauss_legendre, tanh_sinh, tanh_sinh_step, PowerWeights};
use crate::rng::{self, Domain};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use statrs::function::beta::{beta, beta_reg};
use statrs::function::gamma::gamma;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// `½(t^{2H} + s^{2H} - |t-s|^{2H})`.
pub fn fbm_covariance(s: f64, t: f64, hurst: f64) -> Result<f64> {
    if s < 0.0 || t < 0.0 {
        return Err(Error::InvalidParameter(format!("negative time ({s}, {t})")));
    }
    check_hurst(hurst)?;
    let e = 2.0 * hurst;
    Ok(0.5 * (t.powf(e) + s.powf(e) - (t - s).abs().powf(e)))
}

fn check_hurst(hurst: f64) -> Result<()> {
    if hurst > 0.0 && hurst < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("Hurst parameter {hurst} outside (0, 1)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FbmMethod {
    Cholesky,
    Volterra,
    Circulant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FbmSpec {
    pub hurst: f64,
    pub dim: usize,
    pub horizon: f64,
    pub steps: usize,
    pub seed: u64,
    pub method: FbmMethod,
}

impl FbmSpec {
    pub fn new(hurst: f64, dim: usize, horizon: f64, steps: usize, seed: u64) -> Self {
        Self { hurst, dim, horizon, steps, seed, method: FbmMethod::Cholesky }
    }

    pub fn with_method(mut self, method: FbmMethod) -> Self {
        self.method = method;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_hurst(self.hurst)?;
        if self.steps == 0 || self.dim == 0 || !(self.horizon > 0.0) {
            return Err(Error::DegenerateGrid);
        }
        if self.method == FbmMethod::Volterra && self.hurst < 0.5 {
            return Err(Error::InvalidParameter("Volterra route needs H >= 1/2".into()));
        }
        Ok(())
    }
}

pub(crate) fn normals<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

#[derive(Debug)]
enum Backend {
    /// Packed lower-triangular factor of the covariance at `t_1..t_M`.
    Cholesky(Vec<f64>),
    /// Packed lower-triangular Volterra weights, row `i` for `t_{i+1}`.
    Volterra(Vec<f64>),
    /// Square roots of the circulant eigenvalues scaled for one FFT.
    Circulant(Vec<f64>),
}

/// A prepared sampler for one `(H, T, M, method)` grid.
#[derive(Debug)]
pub struct FbmSampler {
    hurst: f64,
    horizon: f64,
    steps: usize,
    method: FbmMethod,
    backend: Backend,
}

type CacheKey = (u64, u64, usize, FbmMethod);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<FbmSampler>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<FbmSampler>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn packed(i: usize) -> usize {
    i * (i + 1) / 2
}

impl FbmSampler {
    pub fn new(hurst: f64, horizon: f64, steps: usize, method: FbmMethod) -> Result<Self> {
        FbmSpec { hurst, dim: 1, horizon, steps, seed: 0, method }.validate()?;
        let backend = match method {
            FbmMethod::Cholesky => Backend::Cholesky(cholesky_factor(hurst, horizon, steps)?),
            FbmMethod::Volterra => Backend::Volterra(volterra_weights(hurst, horizon, steps)),
            FbmMethod::Circulant => Backend::Circulant(circulant_roots(hurst, steps)?),
        };
        Ok(Self { hurst, horizon, steps, method, backend })
    }

    /// Shared sampler for the grid, built on first use.
    pub fn cached(hurst: f64, horizon: f64, steps: usize, method: FbmMethod) -> Result<Arc<Self>> {
        let key = (hurst.to_bits(), horizon.to_bits(), steps, method);
        if let Some(s) = cache().lock().expect("sampler cache poisoned").get(&key) {
            return Ok(Arc::clone(s));
        }
        let sampler = Arc::new(Self::new(hurst, horizon, steps, method)?);
        cache()
            .lock()
            .expect("sampler cache poisoned")
            .entry(key)
            .or_insert_with(|| Arc::clone(&sampler));
        Ok(sampler)
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn method(&self) -> FbmMethod {
        self.method
    }

    /// Path number `index` of the `(seed, Domain::Fbm)` family.
    pub fn sample(&self, seed: u64, index: u64, dim: usize) -> GridPath {
        let mut rng = rng::stream(seed, Domain::Fbm, index);
        self.sample_with(&mut rng, dim)
    }

    pub fn sample_with<R: Rng>(&self, rng: &mut R, dim: usize) -> GridPath {
        let m = self.steps;
        let mut values = vec![0.0; (m + 1) * dim];
        for c in 0..dim {
            let comp = self.component(rng);
            for (i, v) in comp.into_iter().enumerate() {
                values[(i + 1) * dim + c] = v;
            }
        }
        GridPath::new(self.horizon, m, dim, values).expect("sampler output is finite")
    }

    /// Values at `t_1..t_M` of one scalar component.
    fn component<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let m = self.steps;
        match &self.backend {
            Backend::Cholesky(l) | Backend::Volterra(l) => {
                let z = normals(rng, m);
                let scale = match self.method {
                    FbmMethod::Volterra => (self.horizon / m as f64).sqrt(),
                    _ => 1.0,
                };
                (0..m)
                    .map(|i| {
                        let row = &l[packed(i)..packed(i) + i + 1];
                        scale * row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>()
                    })
                    .collect()
            }
            Backend::Circulant(roots) => {
                let n = roots.len();
                let mut buf: Vec<Complex<f64>> = roots
                    .iter()
                    .map(|r| {
                        let (a, b): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
                        Complex::new(r * a, r * b)
                    })
                    .collect();
                FftPlanner::new().plan_fft_forward(n).process(&mut buf);
                let scale = (self.horizon / m as f64).powf(self.hurst);
                let mut acc = 0.0;
                buf[..m]
                    .iter()
                    .map(|z| {
                        acc += scale * z.re;
                        acc
                    })
                    .collect()
            }
        }
    }

    /// Volterra route driven by given Brownian increments.
    pub fn apply_volterra(&self, bm: &GridPath) -> Result<GridPath> {
        let Backend::Volterra(w) = &self.backend else {
            return Err(Error::InvalidParameter("sampler is not a Volterra sampler".into()));
        };
        if bm.steps() != self.steps || (bm.horizon() - self.horizon).abs() > 1e-12 * self.horizon {
            return Err(Error::GridMismatch("Brownian driver and sampler grid differ".into()));
        }
        let (m, d) = (self.steps, bm.dim());
        let mut values = vec![0.0; (m + 1) * d];
        for c in 0..d {
            let inc: Vec<f64> = (0..m).map(|j| bm.value(j + 1, c) - bm.value(j, c)).collect();
            for i in 0..m {
                let row = &w[packed(i)..packed(i) + i + 1];
                values[(i + 1) * d + c] = row.iter().zip(&inc).map(|(a, b)| a * b).sum();
            }
        }
        GridPath::new(self.horizon, m, d, values)
    }
}

fn cholesky_factor(hurst: f64, horizon: f64, steps: usize) -> Result<Vec<f64>> {
    let h = horizon / steps as f64;
    let t = |i: usize| (i + 1) as f64 * h;
    let mut cov = DMatrix::from_fn(steps, steps, |i, j| {
        fbm_covariance(t(i), t(j), hurst).expect("grid times are non-negative")
    });
    let jitter = 1e-12 * cov.trace() / steps as f64;
    for attempt in 0..=3 {
        if attempt > 0 {
            for i in 0..steps {
                cov[(i, i)] += jitter;
            }
        }
        if let Some(ch) = cov.clone().cholesky() {
            let l = ch.l();
            let mut out = Vec::with_capacity(packed(steps));
            for i in 0..steps {
                for j in 0..=i {
                    out.push(l[(i, j)]);
                }
            }
            return Ok(out);
        }
    }
    Err(Error::CovarianceFactorization)
}

fn circulant_roots(hurst: f64, steps: usize) -> Result<Vec<f64>> {
    let e = 2.0 * hurst;
    let gam = |k: usize| {
        let k = k as f64;
        0.5 * ((k + 1.0).powf(e) - 2.0 * k.powf(e) + (k - 1.0).abs().powf(e))
    };
    let n = 2 * steps;
    let mut row: Vec<Complex<f64>> = (0..n)
        .map(|k| Complex::new(if k <= steps { gam(k) } else { gam(n - k) }, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut row);
    let max = row.iter().map(|z| z.re).fold(0.0, f64::max);
    row.iter()
        .map(|z| {
            if z.re < -1e-8 * max {
                Err(Error::CovarianceFactorization)
            } else {
                Ok((z.re.max(0.0) / n as f64).sqrt())
            }
        })
        .collect()
}

/// `c_H = [2HΓ(3/2-H)Γ(H+1/2)/Γ(2-2H)]^{1/2}`.
pub fn kernel_constant(hurst: f64) -> f64 {
    (2.0 * hurst * gamma(1.5 - hurst) * gamma(hurst + 0.5) / gamma(2.0 - 2.0 * hurst)).sqrt()
}

/// `K_H(t,s)` for `0 < s < t`, `H > 1/2`, and `1` for `H = 1/2`.
pub fn volterra_kernel(t: f64, s: f64, hurst: f64) -> Result<f64> {
    if !(s > 0.0) || s >= t {
        return Err(Error::InvalidParameter(format!("kernel needs 0 < s < t, got s = {s}, t = {t}")));
    }
    if !(0.5..1.0).contains(&hurst) {
        return Err(Error::InvalidParameter(format!("kernel needs 1/2 <= H < 1, got {hurst}")));
    }
    Ok(kernel(t, s, hurst))
}

/// Kernel evaluation without argument checks.
///
/// With `κ = H - 1/2` and the substitution `w = (r-s)^κ`,
/// `K_H(t,s) = c_H/Γ(H+1/2) · s^{-κ} ∫_0^{(t-s)^κ} (s + w^{1/κ})^κ dw`,
/// whose integrand is bounded; the quadrature is split where
/// `w^{1/κ} = s`.
pub(crate) fn kernel(t: f64, s: f64, hurst: f64) -> f64 {
    if hurst == 0.5 {
        return 1.0;
    }
    let k = hurst - 0.5;
    let upper = (t - s).powf(k);
    let knee = s.powf(k).min(upper);
    let f = |w: f64, _: f64, _: f64| (s + w.powf(1.0 / k)).powf(k);
    let mut integral = tanh_sinh_step(f, 0.0, knee, 0.125);
    if upper > knee {
        integral += tanh_sinh_step(f, knee, upper, 0.125);
    }
    kernel_constant(hurst) / gamma(hurst + 0.5) * s.powf(-k) * integral
}

/// `K_H(t,s) · s^{H-1/2}`, bounded as `s → 0`.
fn kernel_regular(t: f64, s: f64, hurst: f64) -> f64 {
    let k = hurst - 0.5;
    if s == 0.0 {
        return kernel_constant(hurst) / gamma(hurst + 0.5) * t.powf(2.0 * k) / 2.0;
    }
    if s >= t {
        return 0.0;
    }
    kernel(t, s, hurst) * s.powf(k)
}

/// `∫_0^{s∧t} K_H(t,r) K_H(s,r) dr` by product integration with weight
/// `r^{1-2H}` on `cells` cells of `[0, s∧t]`.
pub fn kernel_covariance(s: f64, t: f64, hurst: f64, cells: usize) -> Result<f64> {
    if !(hurst > 0.5 && hurst < 1.0) || cells == 0 {
        return Err(Error::InvalidParameter(format!("need 1/2 < H < 1 and cells > 0, got {hurst}")));
    }
    let lo = s.min(t);
    if !(lo > 0.0) {
        return Ok(0.0);
    }
    let h = lo / cells as f64;
    let pw = PowerWeights::new(1.0 - 2.0 * hurst, h, cells);
    let g = |i: usize| {
        let r = if i == cells { lo } else { i as f64 * h };
        kernel_regular(t, r, hurst) * kernel_regular(s, r, hurst)
    };
    let vals: Vec<f64> = (0..=cells).into_par_iter().map(g).collect();
    Ok((0..cells).map(|j| pw.near[j] * vals[j] + pw.far[j] * vals[j + 1]).sum())
}

/// Volterra weights: `K_H(t_i, s_j^mid)` on regular cells and the root mean
/// square of `K_H(t_i, ·)` on the first cell, where the kernel blows up.
fn volterra_weights(hurst: f64, horizon: f64, steps: usize) -> Vec<f64> {
    let h = horizon / steps as f64;
    let rows: Vec<Vec<f64>> = (0..steps)
        .into_par_iter()
        .map(|i| {
            let t = (i + 1) as f64 * h;
            (0..=i)
                .map(|j| {
                    if hurst == 0.5 {
                        1.0
                    } else if j == 0 {
                        let sq = tanh_sinh(|_, ds, _| kernel(t, ds, hurst).powi(2), 0.0, h);
                        (sq / h).sqrt()
                    } else {
                        kernel(t, (j as f64 + 0.5) * h, hurst)
                    }
                })
                .collect()
        })
        .collect();
    rows.concat()
}

/// fBm path from the sampler selected by `spec.method`.
pub fn sample_fbm(spec: &FbmSpec) -> Result<GridPath> {
    spec.validate()?;
    let sampler = FbmSampler::cached(spec.hurst, spec.horizon, spec.steps, spec.method)?;
    Ok(sampler.sample(spec.seed, 0, spec.dim))
}

/// Volterra route `B^H_{t_i} = Σ_j w_ij ΔB_j` for a given Brownian path.
pub fn sample_fbm_volterra(spec: &FbmSpec, bm: &GridPath) -> Result<GridPath> {
    spec.validate()?;
    if bm.dim() != spec.dim {
        return Err(Error::GridMismatch(format!("driver dimension {} vs {}", bm.dim(), spec.dim)));
    }
    FbmSampler::cached(spec.hurst, spec.horizon, spec.steps, FbmMethod::Volterra)?.apply_volterra(bm)
}

/// Standard Brownian path from stream `index` of `(seed, domain)`.
pub fn brownian_path(seed: u64, domain: Domain, index: u64, dim: usize, horizon: f64, steps: usize) -> Result<GridPath> {
    let mut rng = rng::stream(seed, domain, index);
    brownian_with(&mut rng, dim, horizon, steps)
}

pub fn brownian_with<R: Rng>(rng: &mut R, dim: usize, horizon: f64, steps: usize) -> Result<GridPath> {
    if steps == 0 || dim == 0 || !(horizon > 0.0) {
        return Err(Error::DegenerateGrid);
    }
    let sd = (horizon / steps as f64).sqrt();
    let mut values = vec![0.0; (steps + 1) * dim];
    for i in 0..steps {
        for c in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            values[(i + 1) * dim + c] = values[i * dim + c] + sd * z;
        }
    }
    GridPath::new(horizon, steps, dim, values)
}

/// `dim`-dimensional standard BM on its own stream family, disjoint from
/// every fBm stream of the same seed.
pub fn sample_bm(dim: usize, horizon: f64, steps: usize, seed: u64) -> Result<GridPath> {
    brownian_path(seed, Domain::Bm, 0, dim, horizon, steps)
}

/// A Cameron–Martin control `u = K_H u̇` with its derivative.
///
/// The density is stored as one coefficient per cell; on cell `j` it is
/// `u̇(s) = c_j (s/m_j)^{1/2-H}` with `m_j` the cell midpoint, which
/// follows the kernel's behaviour at the origin and is constant for
/// `H = 1/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    hurst: f64,
    dot_u: Vec<f64>,
    u: GridPath,
    u_prime: GridPath,
    cm_norm_sq: f64,
}

impl Control {
    pub fn zero(hurst: f64, horizon: f64, steps: usize, dim: usize) -> Result<Self> {
        cameron_martin_apply(&vec![0.0; steps * dim], dim, hurst, horizon, steps)
    }

    /// Density sampled from `f` at the cell midpoints.
    pub fn from_fn<F>(hurst: f64, horizon: f64, steps: usize, dim: usize, f: F) -> Result<Self>
    where
        F: Fn(f64, &mut [f64]),
    {
        let h = horizon / steps as f64;
        let mut dot_u = vec![0.0; steps * dim];
        for (j, cell) in dot_u.chunks_mut(dim).enumerate() {
            f((j as f64 + 0.5) * h, cell);
        }
        cameron_martin_apply(&dot_u, dim, hurst, horizon, steps)
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn dim(&self) -> usize {
        self.u.dim()
    }

    pub fn steps(&self) -> usize {
        self.u.steps()
    }

    pub fn horizon(&self) -> f64 {
        self.u.horizon()
    }

    /// Cell coefficients of `u̇`, row-major `M × d`.
    pub fn dot_u(&self) -> &[f64] {
        &self.dot_u
    }

    pub fn u(&self) -> &GridPath {
        &self.u
    }

    pub fn u_prime(&self) -> &GridPath {
        &self.u_prime
    }

    /// `∫_0^T |u̇|² dt`.
    pub fn cm_norm_sq(&self) -> f64 {
        self.cm_norm_sq
    }

    /// Whether `½‖u̇‖² ≤ n`, i.e. the control lies in `S_n`.
    pub fn in_ball(&self, n: f64) -> bool {
        0.5 * self.cm_norm_sq <= n
    }

    pub fn scaled(&self, c: f64) -> Control {
        Control {
            hurst: self.hurst,
            dot_u: self.dot_u.iter().map(|v| c * v).collect(),
            u: self.u.scaled(c),
            u_prime: self.u_prime.scaled(c),
            cm_norm_sq: c * c * self.cm_norm_sq,
        }
    }

    /// `u` on a grid of `steps` steps over the same horizon, by cubic
    /// Hermite interpolation of `(u, u′)` between control nodes.
    pub fn u_on(&self, steps: usize) -> Result<GridPath> {
        let mc = self.steps();
        if steps == mc {
            return Ok(self.u.clone());
        }
        if steps < mc {
            return if mc % steps == 0 {
                self.u.subsample(mc / steps)
            } else {
                Err(Error::GridMismatch(format!("control grid {mc} vs {steps}")))
            };
        }
        if steps % mc != 0 {
            return Err(Error::GridMismatch(format!("control grid {mc} does not divide {steps}")));
        }
        let r = steps / mc;
        let hc = self.u.step();
        let d = self.dim();
        let mut values = vec![0.0; (steps + 1) * d];
        for i in 0..mc {
            for k in 0..r {
                let x = k as f64 / r as f64;
                let (h00, h10) = (1.0 + x * x * (2.0 * x - 3.0), x * (1.0 - x) * (1.0 - x));
                let (h01, h11) = (x * x * (3.0 - 2.0 * x), x * x * (x - 1.0));
                for c in 0..d {
                    values[(i * r + k) * d + c] = h00 * self.u.value(i, c)
                        + h10 * hc * self.u_prime.value(i, c)
                        + h01 * self.u.value(i + 1, c)
                        + h11 * hc * self.u_prime.value(i + 1, c);
                }
            }
        }
        values[steps * d..].copy_from_slice(self.u.last());
        GridPath::new(self.horizon(), steps, d, values)
    }
}

/// Cell weights `W_j = ∫_{cell j} (s/m_j)^{1-2H} ds` of the discrete
/// Cameron–Martin inner product.
pub fn cell_weights(hurst: f64, horizon: f64, steps: usize) -> Vec<f64> {
    let h = horizon / steps as f64;
    let p = 1.0 - 2.0 * hurst;
    (0..steps)
        .map(|j| {
            let (a, b, m) = (j as f64 * h, (j + 1) as f64 * h, (j as f64 + 0.5) * h);
            (b.powf(p + 1.0) - a.powf(p + 1.0)) / (p + 1.0) * m.powf(-p)
        })
        .collect()
}

/// Matrix `A` with `u(t_i) = Σ_j A_ij c_j`, packed by rows `i = 1..M`
/// over cells `j < i`.
pub(crate) fn cameron_martin_matrix(hurst: f64, horizon: f64, steps: usize) -> Vec<f64> {
    let h = horizon / steps as f64;
    let beta = 0.5 - hurst;
    let (gx, gw) = gauss_legendre(4);
    let rows: Vec<Vec<f64>> = (1..=steps)
        .into_par_iter()
        .map(|i| {
            let t = i as f64 * h;
            (0..i)
                .map(|j| {
                    let (a, mid) = (j as f64 * h, (j as f64 + 0.5) * h);
                    if hurst == 0.5 {
                        h
                    } else if j == 0 || j + 1 == i {
                        tanh_sinh(
                            |_, da, db| {
                                let s = if j == 0 { da } else { a + da };
                                let ker = if j + 1 == i && db < da {
                                    kernel(t, t - db, hurst)
                                } else {
                                    kernel(t, s, hurst)
                                };
                                ker * (s / mid).powf(beta)
                            },
                            a,
                            a + h,
                        )
                    } else {
                        gx.iter()
                            .zip(&gw)
                            .map(|(x, w)| {
                                let s = mid + 0.5 * h * x;
                                0.5 * h * w * kernel(t, s, hurst) * (s / mid).powf(beta)
                            })
                            .sum()
                    }
                })
                .collect()
        })
        .collect();
    rows.concat()
}

/// Matrix `D` with `u′(t_i) = Σ_j D_ij c_j`, packed like
/// [`cameron_martin_matrix`]; cell integrals of the derivative weight are
/// incomplete beta functions.
pub(crate) fn derivative_matrix(hurst: f64, horizon: f64, steps: usize) -> Vec<f64> {
    let h = horizon / steps as f64;
    let k = hurst - 0.5;
    let rows: Vec<Vec<f64>> = (1..=steps)
        .into_par_iter()
        .map(|i| {
            if hurst == 0.5 {
                return vec![0.0; i];
            }
            let (a, b) = (2.0 - 2.0 * hurst, k);
            let full = beta(a, b);
            let c = kernel_constant(hurst) / gamma(k);
            let cum = |j: usize| if j >= i { 1.0 } else { beta_reg(a, b, j as f64 / i as f64) };
            let mut prev = 0.0;
            (0..i)
                .map(|j| {
                    let next = cum(j + 1);
                    let mid = (j as f64 + 0.5) * h;
                    let v = c * mid.powf(k) * full * (next - prev);
                    prev = next;
                    v
                })
                .collect()
        })
        .collect();
    rows.concat()
}

/// Builds the control `u = K_H u̇` on the grid `(T, M)` from cell
/// coefficients `dot_u` (row-major `M × d`).
///
/// For `H = 1/2` the derivative is the density itself and is reported at
/// the left end of each cell.
pub fn cameron_martin_apply(dot_u: &[f64], dim: usize, hurst: f64, horizon: f64, steps: usize) -> Result<Control> {
    if !(0.5..1.0).contains(&hurst) {
        return Err(Error::InvalidParameter(format!("Cameron–Martin map needs 1/2 <= H < 1, got {hurst}")));
    }
    if steps == 0 || dim == 0 || !(horizon > 0.0) {
        return Err(Error::DegenerateGrid);
    }
    if dot_u.len() != steps * dim {
        return Err(Error::InvalidParameter(format!("expected {} coefficients, got {}", steps * dim, dot_u.len())));
    }
    if dot_u.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite control density".into()));
    }
    let ops = ControlOperators::cached(hurst, horizon, steps);
    let mut u = vec![0.0; (steps + 1) * dim];
    let mut up = vec![0.0; (steps + 1) * dim];
    for i in 1..=steps {
        let arow = &ops.a[packed(i - 1)..packed(i - 1) + i];
        let drow = &ops.d[packed(i - 1)..packed(i - 1) + i];
        for c in 0..dim {
            let coef = |j: usize| dot_u[j * dim + c];
            u[i * dim + c] = arow.iter().enumerate().map(|(j, a)| a * coef(j)).sum();
            up[i * dim + c] = if hurst == 0.5 {
                if i < steps { coef(i) } else { coef(steps - 1) }
            } else {
                drow.iter().enumerate().map(|(j, d)| d * coef(j)).sum()
            };
        }
    }
    if hurst == 0.5 {
        for c in 0..dim {
            up[c] = dot_u[c];
        }
    }
    let cm_norm_sq = dot_u
        .chunks(dim)
        .zip(&ops.w)
        .map(|(cell, w)| w * cell.iter().map(|v| v * v).sum::<f64>())
        .sum();
    Ok(Control {
        hurst,
        dot_u: dot_u.to_vec(),
        u: GridPath::new(horizon, steps, dim, u)?,
        u_prime: GridPath::new(horizon, steps, dim, up)?,
        cm_norm_sq,
    })
}

/// Cached discretisation of `u̇ ↦ (u, u′, ‖u̇‖²)` for one grid.
#[derive(Debug)]
pub(crate) struct ControlOperators {
    pub a: Vec<f64>,
    pub d: Vec<f64>,
    pub w: Vec<f64>,
}

impl ControlOperators {
    pub fn cached(hurst: f64, horizon: f64, steps: usize) -> Arc<Self> {
        type Key = (u64, u64, usize);
        static OPS: OnceLock<Mutex<HashMap<Key, Arc<ControlOperators>>>> = OnceLock::new();
        let key = (hurst.to_bits(), horizon.to_bits(), steps);
        let map = OPS.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(ops) = map.lock().expect("operator cache poisoned").get(&key) {
            return Arc::clone(ops);
        }
        let ops = Arc::new(ControlOperators {
            a: cameron_martin_matrix(hurst, horizon, steps),
            d: derivative_matrix(hurst, horizon, steps),
            w: cell_weights(hurst, horizon, steps),
        });
        map.lock().expect("operator cache poisoned").entry(key).or_insert_with(|| Arc::clone(&ops));
        ops
    }

    /// Row `i ≥ 1` of the `u` matrix.
    #[allow(dead_code)]
    pub fn a_row(&self, i: usize) -> &[f64] {
        &self.a[packed(i - 1)..packed(i - 1) + i]
    }
}

/// A Cameron–Martin shift `v = ∫ v̇` of standard BM with a cell-wise
/// constant density.
#[derive(Debug, Clone, PartialEq)]
pub struct BmControl {
    dot_v: Vec<f64>,
    v: GridPath,
    norm_sq: f64,
}

impl BmControl {
    pub fn new(dot_v: &[f64], dim: usize, horizon: f64, steps: usize) -> Result<Self> {
        if dot_v.len() != steps * dim {
            return Err(Error::InvalidParameter(format!("expected {} coefficients, got {}", steps * dim, dot_v.len())));
        }
        let h = horizon / steps as f64;
        let mut v = vec![0.0; (steps + 1) * dim];
        for j in 0..steps {
            for c in 0..dim {
                v[(j + 1) * dim + c] = v[j * dim + c] + h * dot_v[j * dim + c];
            }
        }
        let norm_sq = h * dot_v.iter().map(|x| x * x).sum::<f64>();
        Ok(Self { dot_v: dot_v.to_vec(), v: GridPath::new(horizon, steps, dim, v)?, norm_sq })
    }

    pub fn zero(dim: usize, horizon: f64, steps: usize) -> Result<Self> {
        Self::new(&vec![0.0; steps * dim], dim, horizon, steps)
    }

    pub fn from_fn<F>(horizon: f64, steps: usize, dim: usize, f: F) -> Result<Self>
    where
        F: Fn(f64, &mut [f64]),
    {
        let h = horizon / steps as f64;
        let mut dot_v = vec![0.0; steps * dim];
        for (j, cell) in dot_v.chunks_mut(dim).enumerate() {
            f((j as f64 + 0.5) * h, cell);
        }
        Self::new(&dot_v, dim, horizon, steps)
    }

    pub fn dot_v(&self) -> &[f64] {
        &self.dot_v
    }

    pub fn v(&self) -> &GridPath {
        &self.v
    }

    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    /// `v` on a grid of `steps` steps; the path is piecewise linear so
    /// refinement is exact.
    pub fn v_on(&self, steps: usize) -> Result<GridPath> {
        let mc = self.v.steps();
        if steps == mc {
            return Ok(self.v.clone());
        }
        if steps < mc {
            return if mc % steps == 0 {
                self.v.subsample(mc / steps)
            } else {
                Err(Error::GridMismatch(format!("control grid {mc} vs {steps}")))
            };
        }
        if steps % mc != 0 {
            return Err(Error::GridMismatch(format!("control grid {mc} does not divide {steps}")));
        }
        let r = steps / mc;
        let d = self.v.dim();
        let mut values = vec![0.0; (steps + 1) * d];
        for i in 0..mc {
            for k in 0..r {
                let x = k as f64 / r as f64;
                for c in 0..d {
                    values[(i * r + k) * d + c] = (1.0 - x) * self.v.value(i, c) + x * self.v.value(i + 1, c);
                }
            }
        }
        values[steps * d..].copy_from_slice(self.v.last());
        GridPath::new(self.v.horizon(), steps, d, values)
    }
}

/// A joint control `(u, v)` constrained to `½(‖u̇‖² + ‖v̇‖²) ≤ budget`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPair {
    pub u: Control,
    pub v: BmControl,
    pub budget: f64,
}

impl ControlPair {
    pub fn new(u: Control, v: BmControl, budget: f64) -> Result<Self> {
        let cost = 0.5 * (u.cm_norm_sq() + v.norm_sq());
        if cost > budget * (1.0 + 1e-12) {
            return Err(Error::BudgetExceeded { cost, budget });
        }
        Ok(Self { u, v, budget })
    }

    pub fn cost(&self) -> f64 {
        0.5 * (self.u.cm_norm_sq() + self.v.norm_sq())
    }
}
