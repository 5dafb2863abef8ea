use std::sync::OnceLock;

use betacount::fredholm::Beta2Determinant;
use betacount::orthopoly::{build_system, default_top, project_kernel, required_nodes};
use betacount::potential::{
    effective_potential, equilibrium_density, solve_one_cut_support, PolynomialPotential,
};
use betacount::quadrature::GaussLegendre;
use betacount::sampler::{
    count_in_interval, kolmogorov_p, sturm_count, tridiagonal_eigenvalues, TridiagonalSampler,
};
use betacount::WeightedPolySystem;
use proptest::prelude::*;

fn gaussian40() -> &'static WeightedPolySystem {
    static S: OnceLock<WeightedPolySystem> = OnceLock::new();
    S.get_or_init(|| {
        let v = PolynomialPotential::gaussian();
        build_system(&v, 40, default_top(&v, 40)).unwrap()
    })
}

fn quartic30() -> &'static WeightedPolySystem {
    static S: OnceLock<WeightedPolySystem> = OnceLock::new();
    S.get_or_init(|| {
        let v = PolynomialPotential::new(vec![0.1, 0.2, 0.5, -0.1, 0.3]).unwrap();
        build_system(&v, 30, default_top(&v, 30)).unwrap()
    })
}

proptest! {
    #[test]
    fn counts_are_additive_and_bounded(
        mut xs in prop::collection::vec(-3.0f64..3.0, 1..60),
        a in -4.0f64..0.0,
        cut in 0.0f64..1.0,
        len in 0.0f64..4.0,
    ) {
        xs.sort_by(|p, q| p.total_cmp(q));
        let c = a + len;
        let b = a + cut * len;
        prop_assume!(!xs.contains(&b));
        let whole = count_in_interval(&xs, a, c);
        prop_assert!(whole <= xs.len());
        prop_assert_eq!(count_in_interval(&xs, a, b) + count_in_interval(&xs, b, c), whole);
        let direct = xs.iter().filter(|&&x| a <= x && x <= c).count();
        prop_assert_eq!(whole, direct);
    }

    #[test]
    fn gauss_legendre_is_exact_to_degree_2n_minus_1(
        n in 1usize..30,
        coeffs in prop::collection::vec(-1.0f64..1.0, 60),
        a in -2.0f64..0.0,
        len in 0.1f64..3.0,
    ) {
        let deg = 2 * n - 1;
        let c = &coeffs[..=deg];
        let b = a + len;
        let approx = GaussLegendre::new(n).integrate(a, b, |x| c.iter().rev().fold(0.0, |s, &k| s * x + k));
        let prim = |x: f64| c.iter().enumerate().map(|(k, &ck)| ck * x.powi(k as i32 + 1) / (k + 1) as f64).sum::<f64>();
        let exact = prim(b) - prim(a);
        prop_assert!((approx - exact).abs() < 1e-11 * (1.0 + exact.abs()) * 3f64.powi(deg as i32));
    }

    #[test]
    fn christoffel_darboux_matches_direct_sum(x in -2.5f64..2.5, y in -2.5f64..2.5) {
        for s in [gaussian40(), quartic30()] {
            let k = s.kernel(x, y);
            prop_assert!((k - s.kernel(y, x)).abs() < 1e-12 * (1.0 + k.abs()));
            prop_assert!((k - s.kernel_by_sum(x, y)).abs() < 1e-9);
        }
    }

    #[test]
    fn near_diagonal_kernel_matches_direct_sum(x in -1.8f64..1.8, h in 1e-12f64..1e-4) {
        let s = gaussian40();
        prop_assert!((s.kernel(x, x + h) - s.kernel_by_sum(x, x + h)).abs() < 1e-9);
    }

    #[test]
    fn sturm_counts_match_eigenvalues(
        d in prop::collection::vec(-2.0f64..2.0, 2..40),
        off in prop::collection::vec(0.01f64..1.5, 40),
        t in -4.0f64..4.0,
    ) {
        let m = d.len();
        let off = off[..m - 1].to_vec();
        let e2: Vec<f64> = off.iter().map(|e| e * e).collect();
        let ev = tridiagonal_eigenvalues(d.clone(), off);
        prop_assert!(ev.windows(2).all(|w| w[0] <= w[1]));
        let below = ev.iter().filter(|&&l| l < t).count();
        prop_assume!(ev.iter().all(|&l| (l - t).abs() > 1e-9));
        prop_assert_eq!(sturm_count(&d, &e2, t, true), below);
        prop_assert_eq!(sturm_count(&d, &e2, t, false), below);
        let trace: f64 = d.iter().sum();
        prop_assert!((ev.iter().sum::<f64>() - trace).abs() < 1e-9 * (1.0 + trace.abs()) * m as f64);
    }

    #[test]
    fn kolmogorov_p_is_a_decreasing_probability(d1 in 0.0f64..0.3, d2 in 0.0f64..0.3, m in 50usize..5000) {
        let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
        let (p_lo, p_hi) = (kolmogorov_p(lo, m), kolmogorov_p(hi, m));
        prop_assert!((0.0..=1.0).contains(&p_lo) && (0.0..=1.0).contains(&p_hi));
        prop_assert!(p_hi <= p_lo + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn projected_spectrum_lies_in_unit_interval(a in -1.7f64..1.0, len in 0.1f64..2.0) {
        let s = gaussian40();
        let b = (a + len).min(1.75);
        prop_assume!(b - a > 0.05);
        let k = project_kernel(s, a, b, required_nodes(s, a, b).max(40)).unwrap();
        for e in k.eigenvalues() {
            prop_assert!((-1e-8..=1.0 + 1e-8).contains(&e));
        }
        let det = Beta2Determinant::new(&k, 40);
        prop_assert_eq!(det.eval(0.0).unwrap().log_phi, 0.0);
        // centered, so log Φ̂ >= 0 by Jensen; convex as a cumulant generating function
        let f = |x: f64| det.eval(x).unwrap().log_phi;
        for x in [-1.5, -0.5, 0.5, 1.5] {
            prop_assert!(f(x) >= -1e-12);
            prop_assert!(f(x + 0.1) + f(x - 0.1) - 2.0 * f(x) >= -1e-12);
        }
    }

    #[test]
    fn same_seed_same_counts(seed in any::<u64>(), beta in prop::sample::select(vec![1.0, 2.0, 4.0])) {
        let s = TridiagonalSampler::new(beta, 25).unwrap();
        prop_assert_eq!(s.counts(-0.5, 0.5, 300, seed), s.counts(-0.5, 0.5, 300, seed));
    }

    #[test]
    fn convex_potentials_have_normalized_flat_equilibria(
        c1 in -0.5f64..0.5,
        c2 in 0.3f64..2.0,
        c4 in 0.05f64..1.0,
        t in -0.9f64..0.9,
    ) {
        // V'' = c2 + 2 c3 λ + 3 c4 λ² > 0 when c3² < 3 c2 c4
        let c3 = t * (3.0 * c2 * c4).sqrt();
        let v = PolynomialPotential::new(vec![0.0, c1, c2 / 2.0, c3 / 3.0, c4 / 4.0]).unwrap();
        let support = solve_one_cut_support(&v).unwrap();
        let m = equilibrium_density(&v, &support).unwrap();
        prop_assert!((m.mass() - 1.0).abs() < 1e-10);
        let eff = effective_potential(&m, 1e-6).unwrap();
        prop_assert!(eff.support_deviation < 1e-6);
        prop_assert!(eff.off_support_excess < 0.0);
    }
}
