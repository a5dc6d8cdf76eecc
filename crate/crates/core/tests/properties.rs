use proptest::prelude::*;

use driftstop_core::closed_form::{bernoulli_analytics, gaussian_analytics, halfnormal_analytics};
use driftstop_core::dispersion::{invert_g, psi};
use driftstop_core::montecarlo::{simulate_path_range, simulate_paths, Moments, SimConfig};
use driftstop_core::prior::{
    build_quadrature, posterior_expectation, prior_moments, Atom, PriorSpec, QuadratureTable,
    DEFAULT_NODES,
};
use driftstop_core::stopping_solver::{solve_prior, value_bounds, SolverConfig};

fn atoms_strategy() -> impl Strategy<Value = Vec<Atom>> {
    prop::collection::vec((-3.0f64..3.0, 0.05f64..1.0), 2..6).prop_filter_map(
        "distinct points",
        |raw| {
            let mut pts: Vec<f64> = raw.iter().map(|a| a.0).collect();
            pts.sort_by(f64::total_cmp);
            if pts.windows(2).any(|w| w[1] - w[0] < 0.05) {
                return None;
            }
            let total: f64 = raw.iter().map(|a| a.1).sum();
            Some(
                raw.iter()
                    .map(|&(point, w)| Atom {
                        point,
                        weight: w / total,
                    })
                    .collect(),
            )
        },
    )
}

fn table(spec: PriorSpec) -> QuadratureTable {
    build_quadrature(&spec, DEFAULT_NODES).unwrap()
}

fn discrete(atoms: Vec<Atom>) -> QuadratureTable {
    table(PriorSpec::DiscreteAtoms { atoms })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn posterior_mean_increases_and_variance_is_positive(
        atoms in atoms_strategy(),
        t in 0.0f64..4.0,
        y in -3.0f64..3.0,
        dy in 0.01f64..1.0,
    ) {
        let tab = discrete(atoms);
        let (lo, hi) = tab.support_bounds();
        let a = tab.posterior_moments(t, y).unwrap();
        let b = tab.posterior_moments(t, y + dy).unwrap();
        prop_assert!(b.mean > a.mean);
        prop_assert!(a.variance > 0.0);
        prop_assert!(a.variance <= 0.25 * (hi - lo) * (hi - lo) + 1e-12);
        prop_assert!(a.mean > lo && a.mean < hi);
    }

    #[test]
    fn variance_matches_second_moment(
        atoms in atoms_strategy(),
        t in 0.0f64..4.0,
        y in -2.0f64..2.0,
    ) {
        let tab = discrete(atoms);
        let m = tab.posterior_moments(t, y).unwrap();
        let second = posterior_expectation(&tab, |u| u * u, t, y).unwrap();
        prop_assert!((second - m.mean * m.mean - m.variance).abs() < 1e-10);
    }

    #[test]
    fn psi_round_trip(atoms in atoms_strategy(), t in 0.0f64..3.0, y in -2.0f64..2.0) {
        let tab = discrete(atoms);
        let m = tab.posterior_moments(t, y).unwrap();
        prop_assume!(m.variance > 1e-6);
        let y_back = invert_g(&tab, t, m.mean, 1e-13).unwrap();
        let back = tab.posterior_moments(t, y_back).unwrap();
        prop_assert!((back.mean - m.mean).abs() < 1e-9);
        let p = psi(&tab, t, m.mean).unwrap();
        prop_assert!((p - m.variance).abs() < 1e-7 * m.variance.max(1e-3), "{} vs {}", p, m.variance);
    }

    #[test]
    fn two_point_table_matches_closed_form(
        beta in 0.2f64..3.0,
        p in 0.05f64..0.95,
        t in 0.0f64..3.0,
        y in -3.0f64..3.0,
    ) {
        let tab = table(PriorSpec::bernoulli(beta, p));
        let a = bernoulli_analytics(beta, p, t, y).unwrap();
        let m = tab.posterior_moments(t, y).unwrap();
        prop_assert!((a.g - m.mean).abs() < 1e-11 * beta.max(1.0));
        prop_assert!((a.h - m.variance).abs() < 1e-11 * (beta * beta).max(1.0));
        prop_assert!((a.log_f - m.log_f).abs() < 1e-10 * a.log_f.abs().max(1.0));
    }

    #[test]
    fn gaussian_quadrature_matches_closed_form(
        m0 in -1.0f64..1.0,
        s2 in 0.2f64..3.0,
        t in 0.0f64..3.0,
        y in -3.0f64..3.0,
    ) {
        let tab = build_quadrature(&PriorSpec::Gaussian { m: m0, sigma2: s2 }, DEFAULT_NODES).unwrap();
        let a = gaussian_analytics(m0, s2, t, y).unwrap();
        let m = tab.posterior_moments(t, y).unwrap();
        prop_assert!((a.g - m.mean).abs() < 1e-9);
        prop_assert!((a.h - m.variance).abs() < 1e-9);
    }

    #[test]
    fn halfnormal_mean_and_variance(s2 in 0.2f64..3.0, t in 0.0f64..3.0, y in -4.0f64..4.0) {
        let tab = build_quadrature(&PriorSpec::HalfNormal { sigma2: s2 }, DEFAULT_NODES).unwrap();
        let a = halfnormal_analytics(s2, t, y).unwrap();
        let m = tab.posterior_moments(t, y).unwrap();
        prop_assert!(a.g > 0.0 && a.h > 0.0);
        prop_assert!((a.g - m.mean).abs() < 1e-9);
        prop_assert!((a.h - m.variance).abs() < 1e-9);
    }

    #[test]
    fn moments_merge_is_concatenation(
        xs in prop::collection::vec(-10.0f64..10.0, 1..60),
        ys in prop::collection::vec(-10.0f64..10.0, 1..60),
    ) {
        let merged = Moments::from_samples(&xs).merge(Moments::from_samples(&ys));
        let all: Vec<f64> = xs.iter().chain(&ys).copied().collect();
        let direct = Moments::from_samples(&all);
        prop_assert_eq!(merged.n, direct.n);
        prop_assert!((merged.mean - direct.mean).abs() < 1e-12);
        prop_assert!((merged.m2 - direct.m2).abs() < 1e-9 * direct.m2.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn solver_value_is_bounded(beta in 0.6f64..2.0, c in 0.05f64..0.8) {
        let tab = table(PriorSpec::bernoulli(beta, 0.5));
        let cfg = SolverConfig::new(30, 41, 6.0, -beta, beta);
        let grid = solve_prior(&tab, c, &cfg).unwrap();
        let (_, var) = prior_moments(&tab);
        let bounds = value_bounds(&grid, var, 1e-9);
        prop_assert!(bounds.pass, "{:?}", bounds);
    }

    #[test]
    fn path_ranges_reproduce_the_full_batch(seed in any::<u64>(), start in 0usize..6, len in 1usize..5) {
        let tab = table(PriorSpec::bernoulli(1.0, 0.5));
        let sim = SimConfig::new(12, 0.05, 0.5, seed);
        let full = simulate_paths(&tab, &sim).unwrap();
        let part = simulate_path_range(&tab, &sim, start..start + len).unwrap();
        for k in 0..len {
            prop_assert_eq!(part.x_true[k], full.x_true[start + k]);
            prop_assert_eq!(part.x_hat_path(k), full.x_hat_path(start + k));
        }
    }
}
