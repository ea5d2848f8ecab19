//! Named test systems.

use crate::error::{Error, Result};
use crate::sde::{Constants, Field, SingleScaleSystem, SystemSpec, TwoScaleSystem};
use std::sync::Arc;

pub const NAMES: [&str; 5] = ["SS-FREE", "SS-LIN", "SS-NL", "TS-OU", "TS-OUVAR"];

const SINGLE: Constants = Constants { lipschitz: 2.0, growth: 2.0, beta1: 1.0, beta2: 1.0 };
const FAST: Constants = Constants { lipschitz: 2.0, growth: 2.0, beta1: 4.0, beta2: 4.0 };

/// Scalar `dx = b·x dt + √ε σ dB^H`.
pub fn linear(name: &str, b: f64, sigma: f64) -> SingleScaleSystem {
    SingleScaleSystem {
        name: name.to_string(),
        m: 1,
        d1: 1,
        drift: Arc::new(move |x, out| out[0] = b * x[0]),
        diffusion: Arc::new(move |_, out| out[0] = sigma),
        jacobian: Arc::new(move |_, out| out[0] = b),
        constants: Constants { lipschitz: b.abs().max(sigma.abs()).max(1e-12), growth: b.abs().max(sigma.abs()).max(1e-12), ..SINGLE },
    }
}

/// `f = 0`, `σ = 1`.
pub fn ss_free() -> SingleScaleSystem {
    linear("SS-FREE", 0.0, 1.0)
}

/// `f = −x`, `σ = 1`.
pub fn ss_lin() -> SingleScaleSystem {
    linear("SS-LIN", -1.0, 1.0)
}

/// `f = −x + sin x`, `σ = 1 + 0.1 tanh x`.
pub fn ss_nl() -> SingleScaleSystem {
    SingleScaleSystem {
        name: "SS-NL".into(),
        m: 1,
        d1: 1,
        drift: Arc::new(|x, out| out[0] = -x[0] + x[0].sin()),
        diffusion: Arc::new(|x, out| out[0] = 1.0 + 0.1 * x[0].tanh()),
        jacobian: Arc::new(|x, out| out[0] = -1.0 + x[0].cos()),
        constants: SINGLE,
    }
}

/// Slow `−x + cos y` with fast `dy = −2a(x)y/ε dt + dW/√ε`, whose frozen
/// invariant law is `N(0, 1/(4a(x)))`.
pub fn gaussian_fast<A, D>(name: &str, a: A, da: D) -> TwoScaleSystem
where
    A: Fn(f64) -> f64 + Send + Sync + Clone + 'static,
    D: Fn(f64) -> f64 + Send + Sync + 'static,
{
    let (a1, a2, a3) = (a.clone(), a.clone(), a);
    let averaged: Field = Arc::new(move |x, out| out[0] = -x[0] + (-1.0 / (8.0 * a1(x[0]))).exp());
    let averaged_jacobian: Field = Arc::new(move |x, out| {
        let ax = a2(x[0]);
        out[0] = -1.0 + (-1.0 / (8.0 * ax)).exp() * da(x[0]) / (8.0 * ax * ax);
    });
    let a_fast = a3.clone();
    TwoScaleSystem {
        name: name.to_string(),
        m: 1,
        n: 1,
        d1: 1,
        d2: 1,
        f1: Arc::new(|x, y, out| out[0] = -x[0] + y[0].cos()),
        f2: Arc::new(move |x, y, out| out[0] = -2.0 * a_fast(x[0]) * y[0]),
        sigma1: Arc::new(|_, out| out[0] = 1.0),
        sigma2: Arc::new(|_, _, out| out[0] = 1.0),
        constants: FAST,
        averaged: Some(averaged),
        averaged_jacobian: Some(averaged_jacobian),
        gaussian_rate: Some(Arc::new(move |x| a3(x[0]))),
    }
}

/// `a ≡ 1`.
pub fn ts_ou() -> TwoScaleSystem {
    gaussian_fast("TS-OU", |_| 1.0, |_| 0.0)
}

/// `a(x) = 1 + 0.5 tanh²x`.
pub fn ts_ouvar() -> TwoScaleSystem {
    gaussian_fast(
        "TS-OUVAR",
        |x: f64| 1.0 + 0.5 * x.tanh().powi(2),
        |x: f64| {
            let c = x.cosh();
            x.tanh() / (c * c)
        },
    )
}

pub fn by_name(name: &str) -> Result<SystemSpec> {
    Ok(match name {
        "SS-FREE" => SystemSpec::SingleScale(ss_free()),
        "SS-LIN" => SystemSpec::SingleScale(ss_lin()),
        "SS-NL" => SystemSpec::SingleScale(ss_nl()),
        "TS-OU" => SystemSpec::TwoScale(ts_ou()),
        "TS-OUVAR" => SystemSpec::TwoScale(ts_ouvar()),
        other => return Err(Error::InvalidParameter(format!("unknown system {other}"))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric_derivative(f: &Field, x: f64) -> f64 {
        let (mut a, mut b) = ([0.0], [0.0]);
        let h = 1e-6;
        f(&[x + h], &mut a);
        f(&[x - h], &mut b);
        (a[0] - b[0]) / (2.0 * h)
    }

    #[test]
    fn registry_resolves_every_name() {
        for n in NAMES {
            assert_eq!(by_name(n).unwrap().name(), n);
        }
        assert!(by_name("nope").is_err());
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let nl = ss_nl();
        for x in [-2.0, -0.3, 0.0, 1.1, 3.0] {
            assert!((nl.jacobian_at(&[x])[0] - numeric_derivative(&nl.drift, x)).abs() < 1e-7);
        }
        for sys in [ts_ou(), ts_ouvar()] {
            let (f, df) = (sys.averaged.clone().unwrap(), sys.averaged_jacobian.clone().unwrap());
            for x in [-2.0, -0.3, 0.0, 1.1, 3.0] {
                let mut out = [0.0];
                df(&[x], &mut out);
                assert!((out[0] - numeric_derivative(&f, x)).abs() < 1e-7, "{} {x}", sys.name);
            }
        }
    }

    #[test]
    fn fast_systems_respect_growth_bound() {
        let probes: Vec<_> = [-5.0, 0.0, 2.0]
            .iter()
            .flat_map(|&x| [-10.0, 0.0, 3.0].map(|y| (vec![x], vec![y])))
            .collect();
        assert!(ts_ou().check_bounded_in_y(&probes).is_empty());
        assert!(ts_ouvar().check_bounded_in_y(&probes).is_empty());
    }
}
