//! The experiment registry.

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::experiments::{self, Outcome};

pub struct Entry {
    pub name: &'static str,
    pub description: &'static str,
    /// The result the experiment checks.
    pub anchor: &'static str,
    pub two_scale: bool,
    pub(crate) tweak: fn(&mut ExperimentConfig),
    pub(crate) run: fn(&ExperimentConfig) -> Result<Outcome>,
}

pub static EXPERIMENTS: [Entry; 8] = [
    Entry {
        name: "exp-fbm-cov",
        description: "empirical fBm covariances from Cholesky and Volterra samplers",
        anchor: "fBm covariance and Volterra representation",
        two_scale: false,
        tweak: |c| {
            c.steps = 1024;
            c.n_paths = 10_000;
            c.system = "SS-FREE".into();
        },
        run: experiments::fbm_cov,
    },
    Entry {
        name: "exp-young-ibp",
        description: "integration by parts and Weyl-derivative bounds for Young integrals of random path pairs",
        anchor: "generalized Riemann-Stieltjes integral bound",
        two_scale: false,
        tweak: |c| {
            c.steps = 512;
            c.n_paths = 200;
            c.system = "SS-FREE".into();
        },
        run: experiments::young_ibp,
    },
    Entry {
        name: "exp-ode-limit",
        description: "mean squared sup distance to the noiseless limit along the epsilon chain",
        anchor: "small-noise ODE limit",
        two_scale: false,
        tweak: |_| {},
        run: experiments::ode_limit,
    },
    Entry {
        name: "exp-clt-variance",
        description: "CLT-scale variance of the deviation endpoint against the linear-response oracle",
        anchor: "central limit scaling of the deviation process",
        two_scale: false,
        tweak: |c| {
            c.epsilon_chain = vec![1e-3];
            c.n_paths = 4000;
        },
        run: experiments::clt_variance,
    },
    Entry {
        name: "exp-averaging",
        description: "averaged drift by ergodic time average and Gauss-Hermite quadrature, and the strong averaging gap",
        anchor: "averaging principle",
        two_scale: true,
        tweak: |c| {
            c.system = "TS-OU".into();
            c.epsilon_chain = vec![1e-1, 1e-2, 1e-3];
            c.steps = 1 << 16;
            c.n_paths = 500;
        },
        run: experiments::averaging,
    },
    Entry {
        name: "exp-khasminskii-delta",
        description: "Khasminskii auxiliary gaps over halving block lengths",
        anchor: "Khasminskii time discretization estimate",
        two_scale: true,
        tweak: |c| {
            c.system = "TS-OU".into();
            c.epsilon_chain = vec![1e-2];
            c.steps = 4096;
            c.n_paths = 400;
        },
        run: experiments::khasminskii_delta,
    },
    Entry {
        name: "exp-rate-endpoint",
        description: "minimum-norm skeleton control reaching an endpoint target",
        anchor: "moderate deviation rate function",
        two_scale: false,
        tweak: |c| {
            c.system = "SS-FREE".into();
            c.steps = 128;
        },
        run: experiments::rate_endpoint,
    },
    Entry {
        name: "exp-mdp-trend",
        description: "b(eps) log P(|z_T| >= delta) along the epsilon chain, exact and Monte Carlo",
        anchor: "moderate deviation principle with speed b(eps)",
        two_scale: false,
        tweak: |c| {
            c.system = "SS-FREE".into();
            c.steps = 64;
            c.n_paths = 10_000;
        },
        run: experiments::mdp_trend,
    },
];

pub fn lookup(name: &str) -> Result<&'static Entry> {
    EXPERIMENTS
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| HarnessError::Config(vec![format!("unknown experiment {name:?}")]))
}

/// One line per experiment.
pub fn list_experiments() -> String {
    EXPERIMENTS
        .iter()
        .map(|e| format!("{:<22} {} [validates: {}]\n", e.name, e.description, e.anchor))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn listing() {
        let text = list_experiments();
        assert_eq!(text.lines().count(), 8);
        assert!(text.contains("exp-mdp-trend"));
        assert!(text.lines().all(|l| l.contains("[validates: ")));
        assert!(lookup("exp-nope").is_err());
    }
}
