//! Grid paths and the fractional calculus on them.
//!
//! Every integral with a power-law singularity is evaluated by product
//! integration: the power weight is integrated exactly on each cell
//! against a linear interpolant of the regular factor. The regular factor
//! is always a difference quotient, e.g. `|g(t)-g(s)|/(t-s)`, so the
//! singular weight carries one power less than in the defining formula.

use crate::error::{Error, Result};
use crate::quad::PowerWeights;
use statrs::function::gamma::gamma;
use std::io::{self, Write};

/// Values of a `dim`-dimensional path on the uniform grid `t_i = i·T/M`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    horizon: f64,
    steps: usize,
    dim: usize,
    values: Vec<f64>,
}

impl GridPath {
    /// Builds a path from row-major values of shape `(steps+1) × dim`.
    pub fn new(horizon: f64, steps: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if steps == 0 || dim == 0 || !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::DegenerateGrid);
        }
        if values.len() != (steps + 1) * dim {
            return Err(Error::InvalidParameter(format!(
                "expected {} values, got {}",
                (steps + 1) * dim,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: pos / dim, comp: pos % dim });
        }
        Ok(Self { horizon, steps, dim, values })
    }

    pub fn scalar(horizon: f64, values: Vec<f64>) -> Result<Self> {
        let steps = values.len().saturating_sub(1);
        Self::new(horizon, steps, 1, values)
    }

    pub fn from_fn<F>(horizon: f64, steps: usize, dim: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(f64, &mut [f64]),
    {
        if steps == 0 || dim == 0 {
            return Err(Error::DegenerateGrid);
        }
        let mut values = vec![0.0; (steps + 1) * dim];
        let h = horizon / steps as f64;
        for (i, row) in values.chunks_mut(dim).enumerate() {
            f(i as f64 * h, row);
        }
        Self::new(horizon, steps, dim, values)
    }

    pub fn zeros(horizon: f64, steps: usize, dim: usize) -> Result<Self> {
        Self::new(horizon, steps, dim, vec![0.0; (steps + 1) * dim])
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            i as f64 * self.step()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|i| self.time(i)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn value(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.dim + k]
    }

    pub fn last(&self) -> &[f64] {
        self.row(self.steps)
    }

    pub fn component(&self, k: usize) -> Vec<f64> {
        self.values.iter().skip(k).step_by(self.dim).copied().collect()
    }

    /// Grid index of time `t`, which must lie on the grid.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let x = t / self.step();
        let i = x.round();
        if i < 0.0 || i > self.steps as f64 || (x - i).abs() > 1e-9 * (1.0 + i) {
            return Err(Error::InvalidParameter(format!("time {t} is not a grid point")));
        }
        Ok(i as usize)
    }

    pub fn same_grid(&self, other: &GridPath) -> bool {
        self.steps == other.steps && (self.horizon - other.horizon).abs() <= 1e-12 * self.horizon
    }

    pub fn check_same_grid(&self, other: &GridPath) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "(T={}, M={}) vs (T={}, M={})",
                self.horizon, self.steps, other.horizon, other.steps
            )))
        }
    }

    fn check_same_shape(&self, other: &GridPath) -> Result<()> {
        self.check_same_grid(other)?;
        if self.dim != other.dim {
            return Err(Error::GridMismatch(format!("dimension {} vs {}", self.dim, other.dim)));
        }
        Ok(())
    }

    pub fn add(&self, other: &GridPath) -> Result<GridPath> {
        self.combine(other, 1.0)
    }

    pub fn sub(&self, other: &GridPath) -> Result<GridPath> {
        self.combine(other, -1.0)
    }

    /// `self + c·other`
    pub fn combine(&self, other: &GridPath, c: f64) -> Result<GridPath> {
        self.check_same_shape(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect();
        GridPath::new(self.horizon, self.steps, self.dim, values)
    }

    pub fn scaled(&self, c: f64) -> GridPath {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// Every `factor`-th grid point.
    pub fn subsample(&self, factor: usize) -> Result<GridPath> {
        if factor == 0 || self.steps % factor != 0 {
            return Err(Error::GridMismatch(format!(
                "cannot subsample {} steps by {factor}",
                self.steps
            )));
        }
        let values = (0..=self.steps / factor)
            .flat_map(|i| self.row(i * factor).iter().copied())
            .collect();
        GridPath::new(self.horizon, self.steps / factor, self.dim, values)
    }

    /// Largest Euclidean norm over the grid.
    pub fn sup_norm(&self) -> f64 {
        (0..=self.steps).map(|i| norm(self.row(i))).fold(0.0, f64::max)
    }

    /// Writes `t,comp_0,...,comp_{d-1}` followed by one row per grid point.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let header: Vec<String> =
            std::iter::once("t".to_string()).chain((0..self.dim).map(|k| format!("comp_{k}"))).collect();
        writeln!(out, "{}", header.join(","))?;
        for i in 0..=self.steps {
            write!(out, "{}", self.time(i))?;
            for v in self.row(i) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 0.5 {
        Ok(())
    } else {
        Err(Error::EmptyExponentWindow { lower: 0.0, upper: 0.5, alpha })
    }
}

/// `‖g‖_∞ + max_{s<t} |g(t)-g(s)|/(t-s)^η` over grid points.
pub fn holder_norm(g: &GridPath, eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidParameter(format!("eta = {eta} outside (0, 1]")));
    }
    let h = g.step();
    let lag_pow: Vec<f64> = (0..=g.steps).map(|n| (n as f64 * h).powf(-eta)).collect();
    let mut best = 0.0f64;
    for i in 0..g.steps {
        let gi = g.row(i);
        for j in i + 1..=g.steps {
            best = best.max(dist(g.row(j), gi) * lag_pow[j - i]);
        }
    }
    Ok(g.sup_norm() + best)
}

/// Values of `∫_{t_a}^{t_i} |g(t_i)-g(s)|/(t_i-s)^{α+1} ds` for `i = a..=M`.
fn left_singular_integrals(g: &GridPath, alpha: f64, a: usize) -> Vec<f64> {
    let h = g.step();
    let pw = PowerWeights::new(-alpha, h, g.steps - a);
    let mut out = vec![0.0; g.steps + 1];
    for i in a + 1..=g.steps {
        let gi = g.row(i);
        let q = |k: usize| {
            if k == i {
                dist(gi, g.row(i - 1)) / h
            } else {
                dist(gi, g.row(k)) / ((i - k) as f64 * h)
            }
        };
        let mut acc = 0.0;
        for n in 1..=i - a {
            acc += pw.near[n - 1] * q(i + 1 - n) + pw.far[n - 1] * q(i - n);
        }
        out[i] = acc;
    }
    out
}

/// `sup_t [ |g(t)| + ∫_0^t |g(t)-g(s)|/(t-s)^{α+1} ds ]`.
pub fn w_alpha_inf_norm(g: &GridPath, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let inner = left_singular_integrals(g, alpha, 0);
    Ok((0..=g.steps).map(|i| norm(g.row(i)) + inner[i]).fold(0.0, f64::max))
}

/// `‖g‖_{α,1} = ∫_0^T |g(s)|/s^α ds + ∫_0^T ∫_0^s |g(s)-g(y)|/(s-y)^{α+1} dy ds`.
pub fn alpha_one_norm(g: &GridPath, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(window_alpha_one(g, alpha, 0, g.steps, 1.0))
}

/// Right-hand side integral of the window bound
/// `∫_s^t [ |g(r)|/(r-s)^α + α ∫_s^r |g(r)-g(q)|/(r-q)^{α+1} dq ] dr`.
pub fn window_bound_integral(g: &GridPath, alpha: f64, s: usize, t: usize) -> Result<f64> {
    check_alpha(alpha)?;
    if s >= t || t > g.steps {
        return Err(Error::InvalidParameter(format!("window [{s}, {t}] invalid")));
    }
    Ok(window_alpha_one(g, alpha, s, t, alpha))
}

fn window_alpha_one(g: &GridPath, alpha: f64, a: usize, b: usize, inner_factor: f64) -> f64 {
    let h = g.step();
    let pw = PowerWeights::new(-alpha, h, b - a);
    let mut first = 0.0;
    for n in 1..=b - a {
        first += pw.near[n - 1] * norm(g.row(a + n - 1)) + pw.far[n - 1] * norm(g.row(a + n));
    }
    let inner = left_singular_integrals(g, alpha, a);
    let mut second = 0.0;
    for i in a..=b {
        let w = if i == a || i == b { 0.5 * h } else { h };
        second += w * inner[i];
    }
    first + inner_factor * second
}

/// `sup_{s<t} [ |h(t)-h(s)|/(t-s)^{1-α} + ∫_s^t |h(y)-h(s)|/(y-s)^{2-α} dy ]`.
pub fn w_one_minus_alpha_norm(path: &GridPath, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let h = path.step();
    let m = path.steps;
    let pw = PowerWeights::new(alpha - 1.0, h, m);
    let mut best = 0.0f64;
    for i in 0..m {
        let hi = path.row(i);
        let q = |k: usize| {
            if k == i {
                dist(path.row(i + 1), hi) / h
            } else {
                dist(path.row(k), hi) / ((k - i) as f64 * h)
            }
        };
        let mut acc = 0.0;
        let mut q_prev = q(i);
        for j in i + 1..=m {
            let n = j - i;
            let q_next = q(j);
            acc += pw.near[n - 1] * q_prev + pw.far[n - 1] * q_next;
            q_prev = q_next;
            let first = dist(path.row(j), hi) / (n as f64 * h).powf(1.0 - alpha);
            best = best.max(first + acc);
        }
    }
    Ok(best)
}

/// Slope of component `c` on cell `k`.
fn slope(path: &GridPath, k: usize, c: usize) -> f64 {
    (path.row(k + 1)[c] - path.row(k)[c]) / path.step()
}

/// Right Weyl derivatives `D^{1-α}_{t_j-} h_{t_j-}(t_i)` for one left index
/// `i` and every right index `j > i`, without the complex phase.
///
/// On the linear interpolant, `h - h(t_j)` is a sum of ramps `(t_l - x)_+`
/// whose derivatives are `(t_l - x)_+^α / Γ(1+α)`.
fn weyl_right_row(path: &GridPath, alpha: f64, i: usize, out: &mut Vec<Vec<f64>>) {
    let h = path.step();
    let d = path.dim;
    let scale = 1.0 / gamma(1.0 + alpha);
    out.clear();
    let mut acc = vec![0.0; d];
    for j in i + 1..=path.steps {
        let lag = ((j - i) as f64 * h).powf(alpha);
        let mut r = vec![0.0; d];
        for c in 0..d {
            if j > i + 1 {
                acc[c] += (slope(path, j - 1, c) - slope(path, j - 2, c)) * ((j - 1 - i) as f64 * h).powf(alpha);
            }
            r[c] = scale * (acc[c] - slope(path, j - 1, c) * lag);
        }
        out.push(r);
    }
}

/// `Λ_α(h) = (1/Γ(1-α)) max_{s<t} |D^{1-α}_{t-} h_{t-}(s)|` over grid pairs.
pub fn lambda_alpha(path: &GridPath, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let mut row = Vec::new();
    let mut best = 0.0f64;
    for i in 0..path.steps {
        weyl_right_row(path, alpha, i, &mut row);
        for r in &row {
            best = best.max(norm(r));
        }
    }
    Ok(best / gamma(1.0 - alpha))
}

/// Left Weyl derivative `D^α_{a+} g(t)`, component-wise.
pub fn weyl_left(g: &GridPath, alpha: f64, a: f64, t: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    let (ia, it) = (g.index_of(a)?, g.index_of(t)?);
    if it <= ia {
        return Err(Error::InvalidParameter(format!("need a < t, got a = {a}, t = {t}")));
    }
    Ok(weyl_left_at(g, alpha, ia, it, false))
}

/// On the linear interpolant, `g - g(t_a)` is a sum of ramps `(x - t_k)_+`
/// whose derivatives are `(x - t_k)_+^{1-α} / Γ(2-α)`.
fn weyl_left_at(g: &GridPath, alpha: f64, a: usize, t: usize, compensate: bool) -> Vec<f64> {
    let h = g.step();
    let (g_one, g_two) = (gamma(1.0 - alpha), gamma(2.0 - alpha));
    let base = ((t - a) as f64 * h).powf(-alpha);
    (0..g.dim)
        .map(|c| {
            let mut acc = slope(g, a, c) * ((t - a) as f64 * h).powf(1.0 - alpha);
            for k in a + 1..t {
                acc += (slope(g, k, c) - slope(g, k - 1, c)) * ((t - k) as f64 * h).powf(1.0 - alpha);
            }
            let start = if compensate { 0.0 } else { g.row(a)[c] * base / g_one };
            start + acc / g_two
        })
        .collect()
}

/// Right Weyl derivative `D^{1-α}_{b-} h_{b-}(s)` with the phase
/// `(-1)^{1-α}` dropped, component-wise.
pub fn weyl_right(path: &GridPath, alpha: f64, s: f64, b: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    let (is, ib) = (path.index_of(s)?, path.index_of(b)?);
    if ib <= is {
        return Err(Error::InvalidParameter(format!("need s < b, got s = {s}, b = {b}")));
    }
    let mut row = Vec::new();
    weyl_right_row(path, alpha, is, &mut row);
    Ok(row.swap_remove(ib - is - 1))
}

fn check_pair(g: &GridPath, h: &GridPath) -> Result<()> {
    g.check_same_shape(h)
}

/// Running integral `t ↦ ∫_0^t g dh` from the compensated Weyl-derivative
/// formula, evaluated at every grid point; multi-dimensional paths are
/// integrated component by component.
///
/// Both derivatives of the linear interpolants are sums of powers anchored
/// at grid nodes, and the pairing of `(x - t_k)_+^{1-α}` with
/// `(t_l - x)_+^α` is a Beta integral, so the formula is evaluated in
/// closed form.
pub fn young_integral(g: &GridPath, h: &GridPath, alpha: f64) -> Result<GridPath> {
    check_alpha(alpha)?;
    check_pair(g, h)?;
    let (m, d, step) = (g.steps, g.dim, g.step());
    let mut values = vec![0.0; (m + 1) * d];
    for c in 0..d {
        let ramps = ramp_coefficients(g, c, 0, m);
        // pairings with the interior ramps of h, which do not depend on b
        let mut interior = 0.0;
        for b in 1..=m {
            let v: f64 = (0..b).map(|k| ramps[k] * ((b - k) as f64 * step).powi(2)).sum::<f64>() * 0.5;
            let pairing = interior - slope(h, b - 1, c) * v;
            values[b * d + c] = -pairing + g.row(0)[c] * (h.row(b)[c] - h.row(0)[c]);
            if b < m {
                interior += (slope(h, b, c) - slope(h, b - 1, c)) * v;
            }
        }
    }
    GridPath::new(g.horizon, m, d, values)
}

/// Ramp coefficients of `g - g(t_a)` on cells `a..b`.
fn ramp_coefficients(g: &GridPath, c: usize, a: usize, b: usize) -> Vec<f64> {
    (a..b)
        .map(|k| if k == a { slope(g, a, c) } else { slope(g, k, c) - slope(g, k - 1, c) })
        .collect()
}

/// `∫_{t_a}^{t_b} g dh` from the compensated formula on the window itself.
pub fn young_integral_window(g: &GridPath, h: &GridPath, alpha: f64, a: usize, b: usize) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    check_pair(g, h)?;
    if a >= b || b > g.steps {
        return Err(Error::InvalidParameter(format!("window [{a}, {b}] invalid")));
    }
    let step = g.step();
    Ok((0..g.dim)
        .map(|c| {
            let ramps = ramp_coefficients(g, c, a, b);
            let mut pairing = 0.0;
            for l in a + 1..=b {
                let e = if l == b { -slope(h, b - 1, c) } else { slope(h, l, c) - slope(h, l - 1, c) };
                let v: f64 = (a..l).map(|k| ramps[k - a] * ((l - k) as f64 * step).powi(2)).sum();
                pairing += 0.5 * e * v;
            }
            -pairing + g.row(a)[c] * (h.row(b)[c] - h.row(a)[c])
        })
        .collect())
}

/// Running left-point sums `Σ g(t_i)(h(t_{i+1}) - h(t_i))`.
pub fn riemann_stieltjes_sum(g: &GridPath, h: &GridPath) -> Result<GridPath> {
    check_pair(g, h)?;
    let d = g.dim;
    let mut values = vec![0.0; (g.steps + 1) * d];
    for i in 0..g.steps {
        for c in 0..d {
            values[(i + 1) * d + c] =
                values[i * d + c] + g.row(i)[c] * (h.row(i + 1)[c] - h.row(i)[c]);
        }
    }
    GridPath::new(g.horizon, g.steps, d, values)
}

/// Crude Hölder exponent estimate from the growth of the largest
/// increment over dyadic lags.
pub fn estimate_holder_exponent(g: &GridPath) -> f64 {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut lag = 1;
    while lag * 4 <= g.steps {
        let max_inc = (0..=g.steps - lag)
            .map(|i| dist(g.row(i + lag), g.row(i)))
            .fold(0.0, f64::max);
        if max_inc > 0.0 {
            xs.push((lag as f64 * g.step()).ln());
            ys.push(max_inc.ln());
        }
        lag *= 2;
    }
    if xs.len() < 2 {
        return 1.0;
    }
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Warnings when the estimated exponents of `g` and `h` do not fit the
/// window `α < exp(g)` and `1-α < exp(h)`.
pub fn young_precondition_warnings(g: &GridPath, h: &GridPath, alpha: f64) -> Vec<String> {
    let mut out = Vec::new();
    let (eg, eh) = (estimate_holder_exponent(g), estimate_holder_exponent(h));
    if eg <= alpha {
        out.push(format!("integrand exponent estimate {eg:.3} does not exceed alpha = {alpha}"));
    }
    if eh <= 1.0 - alpha {
        out.push(format!("integrator exponent estimate {eh:.3} does not exceed 1 - alpha = {}", 1.0 - alpha));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn linear(steps: usize) -> GridPath {
        GridPath::from_fn(1.0, steps, 1, |t, v| v[0] = t).unwrap()
    }

    fn constant(c: f64, steps: usize) -> GridPath {
        GridPath::from_fn(1.0, steps, 1, |_, v| v[0] = c).unwrap()
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert_eq!(GridPath::new(1.0, 0, 1, vec![0.0]), Err(Error::DegenerateGrid));
        assert!(matches!(
            GridPath::new(1.0, 1, 1, vec![0.0, f64::NAN]),
            Err(Error::NonFinite { row: 1, comp: 0 })
        ));
        assert!(GridPath::new(1.0, 2, 1, vec![0.0; 2]).is_err());
    }

    #[test]
    fn csv_header_and_rows() {
        let p = GridPath::new(1.0, 2, 2, vec![0.0, 1.0, 0.5, 1.5, 1.0, 2.0]).unwrap();
        let csv = p.to_csv_string();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,comp_0,comp_1");
        assert_eq!(lines[1], "0,0,1");
        assert_eq!(lines[3], "1,1,2");
    }

    #[test]
    fn holder_norm_examples() {
        assert_relative_eq!(holder_norm(&constant(-3.0, 16), 0.4).unwrap(), 3.0);
        assert_relative_eq!(holder_norm(&linear(16), 1.0).unwrap(), 2.0, max_relative = 1e-14);
        assert!(holder_norm(&linear(16), 0.0).is_err());
    }

    #[test]
    fn w_alpha_inf_norm_of_linear_path() {
        // sup_t [t + t^{0.75}/0.75]
        let v = w_alpha_inf_norm(&linear(64), 0.25).unwrap();
        assert_relative_eq!(v, 1.0 + 4.0 / 3.0, max_relative = 1e-12);
        assert_eq!(w_alpha_inf_norm(&constant(0.0, 8), 0.25).unwrap(), 0.0);
    }

    #[test]
    fn w_one_minus_alpha_norm_of_linear_path() {
        let v = w_one_minus_alpha_norm(&linear(64), 0.25).unwrap();
        assert_relative_eq!(v, 5.0, max_relative = 1e-12);
    }

    #[test]
    fn lambda_of_linear_path_is_within_bound() {
        let a = 0.25;
        let lam = lambda_alpha(&linear(64), a).unwrap();
        // (b-s)^α / (Γ(1-α)Γ(1+α)) attains its max at b-s = 1
        assert_relative_eq!(lam, 1.0 / (gamma(0.75) * gamma(1.25)), max_relative = 1e-12);
        assert!(lam <= 5.0 / (gamma(0.75) * gamma(0.25)));
    }

    #[test]
    fn weyl_left_constant_and_linear() {
        let c = constant(2.0, 32);
        let v = weyl_left(&c, 0.3, 0.25, 1.0).unwrap()[0];
        assert_relative_eq!(v, 2.0 * 0.75f64.powf(-0.3) / gamma(0.7), max_relative = 1e-13);
        let v = weyl_left(&linear(32), 0.25, 0.0, 1.0).unwrap()[0];
        assert_relative_eq!(v, (4.0 / 3.0) / gamma(0.75), max_relative = 1e-13);
        assert!(weyl_left(&c, 0.3, 0.5, 0.5).is_err());
    }

    #[test]
    fn weyl_right_constant_and_linear() {
        assert_eq!(weyl_right(&constant(5.0, 32), 0.3, 0.25, 1.0).unwrap()[0], 0.0);
        let v = weyl_right(&linear(32), 0.25, 0.25, 1.0).unwrap()[0];
        assert_relative_eq!(v, -0.75f64.powf(0.25) / gamma(1.25), max_relative = 1e-13);
    }

    #[test]
    fn young_integral_of_linear_paths() {
        let g = linear(1024);
        let y = young_integral(&g, &g, 0.3).unwrap();
        for i in 0..=1024 {
            let t = g.time(i);
            assert!((y.value(i, 0) - 0.5 * t * t).abs() < 1e-12, "{i}");
        }
    }

    #[test]
    fn young_integral_chain_rule_holds_on_the_grid() {
        let s = GridPath::from_fn(1.0, 128, 1, |t, v| v[0] = (3.0 * t).sin()).unwrap();
        let y = young_integral(&s, &s, 0.3).unwrap();
        for i in 0..=128 {
            assert!((y.value(i, 0) - 0.5 * s.value(i, 0).powi(2)).abs() < 1e-12);
        }
        let w = young_integral_window(&s, &s, 0.3, 40, 90).unwrap();
        assert!((w[0] - 0.5 * (s.value(90, 0).powi(2) - s.value(40, 0).powi(2))).abs() < 1e-12);
    }

    #[test]
    fn young_integral_of_constant_integrand() {
        let h = GridPath::from_fn(1.0, 50, 1, |t, v| v[0] = (3.0 * t).sin() + 0.2).unwrap();
        let y = young_integral(&constant(1.0, 50), &h, 0.3).unwrap();
        for i in 0..=50 {
            assert!((y.value(i, 0) - (h.value(i, 0) - 0.2)).abs() < 1e-14);
        }
    }

    #[test]
    fn riemann_stieltjes_examples() {
        let g = linear(4);
        assert_relative_eq!(riemann_stieltjes_sum(&g, &g).unwrap().last()[0], 0.375);
        let mut prev = 0.0;
        for m in [4, 8, 16, 32] {
            let g = linear(m);
            let v = riemann_stieltjes_sum(&g, &g).unwrap().last()[0];
            assert!(v > prev && v < 0.5);
            prev = v;
        }
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        assert!(young_integral(&linear(8), &linear(16), 0.3).is_err());
        assert!(riemann_stieltjes_sum(&linear(8), &linear(16)).is_err());
    }

    #[test]
    fn alpha_outside_window_is_rejected() {
        assert!(matches!(
            young_integral(&linear(8), &linear(8), 0.6),
            Err(Error::EmptyExponentWindow { .. })
        ));
    }
}
