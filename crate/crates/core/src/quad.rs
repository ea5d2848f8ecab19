//! Quadrature building blocks.
//!
//! Product-integration weights for power-law singularities on a uniform
//! grid, Gauss–Legendre and Gauss–Hermite rules, and a tanh-sinh rule for
//! integrands with endpoint singularities.

use nalgebra::{DMatrix, SymmetricEigen};
use std::f64::consts::{FRAC_PI_2, PI};

/// Linear-interpolation product weights for `r^p` on the cells
/// `[(n-1)h, nh]`, `n = 1..=len`.
///
/// For a factor `q` sampled at `r = (n-1)h` (near) and `r = nh` (far),
/// `∫ r^p q(r) dr ≈ near[n-1]·q((n-1)h) + far[n-1]·q(nh)` with the power
/// weight integrated exactly.
#[derive(Debug, Clone)]
pub struct PowerWeights {
    pub near: Vec<f64>,
    pub far: Vec<f64>,
}

impl PowerWeights {
    pub fn new(p: f64, h: f64, len: usize) -> Self {
        assert!(p > -1.0, "power weight must be integrable");
        let mut near = Vec::with_capacity(len);
        let mut far = Vec::with_capacity(len);
        for n in 1..=len {
            let (a, b) = ((n - 1) as f64, n as f64);
            // moments in units of h, rescaled at the end
            let m0 = (b.powf(p + 1.0) - a.powf(p + 1.0)) / (p + 1.0);
            let m1 = (b.powf(p + 2.0) - a.powf(p + 2.0)) / (p + 2.0) - a * m0;
            let scale = h.powf(p + 1.0);
            near.push((m0 - m1) * scale);
            far.push(m1 * scale);
        }
        Self { near, far }
    }

    pub fn len(&self) -> usize {
        self.near.len()
    }

    pub fn is_empty(&self) -> bool {
        self.near.is_empty()
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Gauss–Hermite nodes and weights for the weight `exp(-z²)` via the
/// Golub–Welsch eigenvalue problem.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let b = (i as f64 / 2.0).sqrt();
        jac[(i, i - 1)] = b;
        jac[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // symmetrise to remove eigen-solver asymmetry
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let z = 0.5 * (pairs[j].0 - pairs[i].0);
        let w = 0.5 * (pairs[i].1 + pairs[j].1);
        pairs[i] = (-z, w);
        pairs[j] = (z, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    pairs.into_iter().unzip()
}

/// Tanh-sinh quadrature of `f` over `[a, b]`.
///
/// `f` receives the node together with its distances to `a` and `b`,
/// computed without cancellation, so endpoint singularities can be
/// evaluated accurately.
pub fn tanh_sinh<F>(f: F, a: f64, b: f64) -> f64
where
    F: Fn(f64, f64, f64) -> f64,
{
    tanh_sinh_step(f, a, b, 1.0 / 16.0)
}

/// [`tanh_sinh`] with an explicit step in the transformed variable.
pub fn tanh_sinh_step<F>(f: F, a: f64, b: f64, step: f64) -> f64
where
    F: Fn(f64, f64, f64) -> f64,
{
    const TMAX: f64 = 3.5;
    let half = 0.5 * (b - a);
    if half <= 0.0 {
        return 0.0;
    }
    let mid = 0.5 * (a + b);
    let mut sum = FRAC_PI_2 * f(mid, half, half);
    let steps = (TMAX / step) as usize;
    for k in 1..=steps {
        let t = k as f64 * step;
        let u = FRAC_PI_2 * t.sinh();
        let e = (-2.0 * u).exp();
        // 1 - tanh(u) = 2e/(1+e)
        let gap = half * 2.0 * e / (1.0 + e);
        if gap <= 0.0 {
            break;
        }
        let cu = u.cosh();
        let w = FRAC_PI_2 * t.cosh() / (cu * cu);
        let off = half - gap;
        let left = f(mid - off, gap, 2.0 * half - gap);
        let right = f(mid + off, 2.0 * half - gap, gap);
        sum += w * (left + right);
    }
    sum * half * step
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn power_weights_integrate_linear_factors_exactly() {
        let p = -0.3;
        let h = 0.125;
        let pw = PowerWeights::new(p, h, 8);
        // ∫_0^1 r^p (2 + 3r) dr
        let exact = 2.0 / (p + 1.0) + 3.0 / (p + 2.0);
        let mut approx = 0.0;
        for n in 1..=8 {
            let (r0, r1) = ((n - 1) as f64 * h, n as f64 * h);
            approx += pw.near[n - 1] * (2.0 + 3.0 * r0) + pw.far[n - 1] * (2.0 + 3.0 * r1);
        }
        assert_relative_eq!(approx, exact, max_relative = 1e-13);
    }

    #[test]
    fn legendre_rule_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre(6);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert_relative_eq!(s, 2.0 / 11.0, max_relative = 1e-13);
    }

    #[test]
    fn hermite_rule_moments() {
        let (z, w) = gauss_hermite(32);
        let m0: f64 = w.iter().sum();
        let m2: f64 = z.iter().zip(&w).map(|(z, w)| w * z * z).sum();
        assert_relative_eq!(m0, PI.sqrt(), max_relative = 1e-13);
        assert_relative_eq!(m2, PI.sqrt() / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn tanh_sinh_handles_endpoint_singularity() {
        // ∫_0^1 x^{-0.5} (1-x)^{-0.3} dx = B(0.5, 0.7)
        let v = tanh_sinh(|_, da, db| da.powf(-0.5) * db.powf(-0.3), 0.0, 1.0);
        let exact = statrs::function::beta::beta(0.5, 0.7);
        assert_relative_eq!(v, exact, max_relative = 1e-9);
    }
}
