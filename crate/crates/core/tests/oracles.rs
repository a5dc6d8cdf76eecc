//! Values frozen from independent high-precision evaluations (50-digit
//! quadrature and root finding).

use driftstop_core::closed_form::{
    bernoulli_solve, gaussian_tau_star, gaussian_value, halfnormal_f, halfnormal_h,
    mixture_boundary_thresholds,
};
use driftstop_core::prior::{build_quadrature, posterior_var_h, PriorSpec};

fn close(got: f64, want: f64, tol: f64) {
    assert!(
        (got - want).abs() <= tol * want.abs().max(1.0),
        "got {got}, want {want}"
    );
}

#[test]
fn bernoulli_unit_quarter() {
    let s = bernoulli_solve(1.0, 0.25, 1e-14).unwrap();
    close(s.boundary_a.unwrap(), 0.917_040_679_229_183_6, 1e-11);
    close(s.value(0.0).unwrap(), -0.481_003_637_693_741, 1e-9);
    close(s.value(0.5).unwrap(), -0.299_666_905_735_497_86, 1e-9);
    close(
        s.q(s.gamma.unwrap()).unwrap(),
        -0.420_158_387_512_467_77,
        1e-10,
    );
    assert_eq!(s.q_sign_changes(1e-3).unwrap(), 1);
}

#[test]
fn bernoulli_other_parameters() {
    for (beta, c, a, u0) in [
        (1.2, 0.25, 1.157_890_357_871_625_2, -1.003_557_784_527_424_7),
        (2.0, 0.25, 1.991_976_389_067_954_4, -3.774_696_770_825_991),
        (1.0, 0.5, 0.788_704_605_596_656_7, -0.200_888_701_783_388_22),
    ] {
        let s = bernoulli_solve(beta, c, 1e-14).unwrap();
        close(s.boundary_a.unwrap(), a, 1e-10);
        close(s.value(0.0).unwrap(), u0, 1e-8);
    }
}

#[test]
fn bernoulli_trivial_when_cost_dominates() {
    let s = bernoulli_solve(1.0, 1.0, 1e-12).unwrap();
    assert!(s.trivial_stop());
    assert_eq!(s.value(0.3).unwrap(), 0.0);
}

#[test]
fn gaussian_closed_forms() {
    close(gaussian_tau_star(1.0, 0.25).unwrap(), 1.0, 1e-14);
    close(gaussian_tau_star(2.0, 0.25).unwrap(), 1.5, 1e-14);
    close(gaussian_value(1.0, 0.25, 0.0).unwrap(), -0.25, 1e-14);
    close(gaussian_value(2.0, 0.25, 0.0).unwrap(), -1.125, 1e-14);
    assert_eq!(gaussian_value(1.0, 0.25, 1.5).unwrap(), 0.0);
}

#[test]
fn halfnormal_f_values() {
    close(halfnormal_f(-10.0), 1.000_176_904_723_567_8, 1e-13);
    close(halfnormal_f(5.0), 25.000_022_300_803_535, 1e-13);
}

#[test]
fn halfnormal_variance_closed_and_quadrature() {
    let table = build_quadrature(&PriorSpec::HalfNormal { sigma2: 1.0 }, 200).unwrap();
    for (t, y, h) in [
        (1.0, 2.0, 0.374_677_595_496_806_4),
        (0.5, -1.5, 0.116_484_275_843_213_75),
        (2.0, 3.0, 0.276_831_568_412_168_9),
    ] {
        close(halfnormal_h(1.0, t, y).unwrap(), h, 1e-12);
        close(posterior_var_h(&table, t, y).unwrap(), h, 1e-10);
    }
}

#[test]
fn mixture_thresholds() {
    let th = mixture_boundary_thresholds(1.0, 1.0, 0.04).unwrap();
    close(th.t_infinity, 4.0, 1e-12);
    close(th.t_zero, 4.854_101_966_249_685, 1e-12);
}
