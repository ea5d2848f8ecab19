use fbm_mdp_core::fracpath::{
    alpha_one_norm, holder_norm, lambda_alpha, w_alpha_inf_norm, w_one_minus_alpha_norm, window_bound_integral,
    young_integral, young_integral_window,
};
use fbm_mdp_core::mc::fbm_driver;
use fbm_mdp_core::GridPath;
use proptest::prelude::*;

const M: usize = 64;

fn fbm(hurst: f64, seed: u64, scale: f64) -> GridPath {
    fbm_driver(hurst, 1, 1.0, M, seed, 0).unwrap().scaled(scale)
}

fn smooth(a: f64, w: f64, b: f64) -> GridPath {
    GridPath::from_fn(1.0, M, 1, |t, v| v[0] = a * (w * t).sin() + b).unwrap()
}

fn end(g: &GridPath, h: &GridPath, alpha: f64) -> f64 {
    young_integral(g, h, alpha).unwrap().last()[0]
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bilinear(hurst in 0.6..0.95f64, seed in 0..1000u64, a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let alpha = 0.5 * (1.5 - hurst);
        let (g1, g2, h) = (fbm(hurst, seed, 1.0), smooth(1.0, 3.0, 0.2), fbm(hurst, seed + 5000, 1.0));
        let g = g1.scaled(a).add(&g2.scaled(b)).unwrap();
        let lhs = end(&g, &h, alpha);
        let rhs = a * end(&g1, &h, alpha) + b * end(&g2, &h, alpha);
        prop_assert!(rel(lhs, rhs) < 1e-10);
        let h2 = smooth(0.5, 2.0, -1.0);
        let hh = h.scaled(a).add(&h2.scaled(b)).unwrap();
        let lhs = end(&g1, &hh, alpha);
        let rhs = a * end(&g1, &h, alpha) + b * end(&g1, &h2, alpha);
        prop_assert!(rel(lhs, rhs) < 1e-10);
    }

    #[test]
    fn additive_over_adjacent_windows(hurst in 0.6..0.95f64, seed in 0..1000u64, s in 0..M - 2, cut in 1..M - 1, len in 2..M) {
        let alpha = 0.5 * (1.5 - hurst);
        let t = (s + len).min(M);
        prop_assume!(t > s + 1);
        let r = s + 1 + cut % (t - s - 1);
        let (g, h) = (fbm(hurst, seed, 1.0), fbm(hurst, seed + 7000, 1.0));
        let whole = young_integral_window(&g, &h, alpha, s, t).unwrap()[0];
        let left = young_integral_window(&g, &h, alpha, s, r).unwrap()[0];
        let right = young_integral_window(&g, &h, alpha, r, t).unwrap()[0];
        prop_assert!(rel(whole, left + right) < 1e-10);
        let running = young_integral(&g, &h, alpha).unwrap();
        let diff = running.row(t)[0] - running.row(s)[0];
        prop_assert!(rel(whole, diff) < 1e-10);
    }

    #[test]
    fn integration_by_parts(hurst in 0.6..0.95f64, seed in 0..1000u64, sg in 0.5..2.0f64, sh in 0.5..2.0f64) {
        let alpha = 0.5 * (1.5 - hurst);
        let (g, h) = (fbm(hurst, seed, sg), fbm(hurst, seed + 9000, sh));
        let forward = end(&g, &h, alpha);
        let reverse = end(&h, &g, alpha);
        let product = g.last()[0] * h.last()[0] - g.row(0)[0] * h.row(0)[0];
        let scale = forward.abs().max(reverse.abs()).max(product.abs()).max(1.0);
        prop_assert!((forward + reverse - product).abs() / scale < 1e-3);
    }

    #[test]
    fn integral_bounded_by_norms(hurst in 0.6..0.95f64, seed in 0..1000u64, smooth_g in any::<bool>(), w in 1.0..6.0f64) {
        let alpha = 0.5 * (1.5 - hurst);
        let g = if smooth_g { smooth(0.7, w, 0.3) } else { fbm(hurst, seed, 1.0) };
        let h = fbm(hurst, seed + 11_000, 1.0);
        let lambda = lambda_alpha(&h, alpha).unwrap();
        prop_assert!(end(&g, &h, alpha).abs() <= lambda * alpha_one_norm(&g, alpha).unwrap());
    }

    #[test]
    fn window_integral_bounded(hurst in 0.6..0.95f64, seed in 0..1000u64, s in 0..M - 1, len in 1..M) {
        let alpha = 0.5 * (1.5 - hurst);
        let t = (s + len).min(M);
        let (g, h) = (fbm(hurst, seed, 1.0), fbm(hurst, seed + 13_000, 1.0));
        let lambda = lambda_alpha(&h, alpha).unwrap();
        let value = young_integral_window(&g, &h, alpha, s, t).unwrap()[0];
        prop_assert!(value.abs() <= lambda * window_bound_integral(&g, alpha, s, t).unwrap());
    }

    #[test]
    fn norms_finite_for_regular_paths(hurst in 0.6..0.95f64, seed in 0..1000u64) {
        let alpha = 0.5 * (1.5 - hurst);
        let g = fbm(hurst, seed, 1.0);
        prop_assert!(holder_norm(&g, hurst - 0.05).unwrap().is_finite());
        prop_assert!(w_alpha_inf_norm(&g, alpha).unwrap().is_finite());
        prop_assert!(w_one_minus_alpha_norm(&g, alpha).unwrap().is_finite());
        prop_assert!(lambda_alpha(&g, alpha).unwrap().is_finite());
    }
}

#[test]
fn rejects_mismatched_grids() {
    let g = smooth(1.0, 1.0, 0.0);
    let h = GridPath::from_fn(1.0, 2 * M, 1, |t, v| v[0] = t).unwrap();
    assert!(young_integral(&g, &h, 0.3).is_err());
}
