//! Dispersion function `Ψ(t, x) = H(t, G_t⁻¹(x))` and PDE residual diagnostics.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::prior::{widder_f, QuadratureTable};

/// Default inversion tolerance in x-units.
pub const DEFAULT_INVERSION_TOL: f64 = 1e-10;

/// Relative distance (in units of the interval width) kept from finite endpoints.
pub const ENDPOINT_CLAMP: f64 = 1e-9;

/// Result of inverting `G_t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Inversion {
    pub y: f64,
    /// `x` was moved inward before inversion.
    pub clamped: bool,
    /// Posterior variance at the solution, i.e. `Ψ(t, x)`.
    pub h: f64,
}

/// Interval `(lo, hi)` the inversion works on after clamping.
fn clamp_range(table: &QuadratureTable) -> (f64, f64) {
    let (lo, hi) = table.mean_range();
    let margin = ENDPOINT_CLAMP * (hi - lo);
    (lo + margin, hi - margin)
}

fn check_domain(table: &QuadratureTable, x: f64) -> Result<()> {
    let (lo, hi) = table.support_bounds();
    if x.is_nan() || x < lo || x > hi || x == lo || x == hi {
        return Err(Error::OutsideDomain { x, lo, hi });
    }
    Ok(())
}

/// Solves `G(t, y) = x` for `y`.
///
/// Rejects `x` outside the open interval `I_μ`; points closer than
/// `ENDPOINT_CLAMP · width` to the reachable range are clamped.
pub fn invert_g(table: &QuadratureTable, t: f64, x: f64, tol: f64) -> Result<f64> {
    invert_g_from(table, t, x, tol, 0.0).map(|inv| inv.y)
}

/// As [`invert_g`], starting the bracket search at `guess`.
pub fn invert_g_from(
    table: &QuadratureTable,
    t: f64,
    x: f64,
    tol: f64,
    guess: f64,
) -> Result<Inversion> {
    if !(tol > 0.0) {
        return Err(invalid("tol", "inversion tolerance must be positive"));
    }
    check_domain(table, x)?;
    let (lo, hi) = clamp_range(table);
    let target = x.clamp(lo, hi);
    let clamped = target != x;
    let eval = |y: f64| -> Result<(f64, f64)> {
        let m = table.posterior_moments(t, y)?;
        Ok((m.mean - target, m.variance))
    };

    let guess = if guess.is_finite() { guess } else { 0.0 };
    let (mut y, (mut r, mut h)) = (guess, eval(guess)?);
    if r == 0.0 {
        return Ok(Inversion { y, clamped, h });
    }

    // Bracket [a, b] with r(a) < 0 < r(b), expanding from the guess.
    let (mut a, mut b);
    let mut step = 1.0;
    if r < 0.0 {
        a = y;
        loop {
            b = guess + step;
            let (rb, hb) = eval(b)?;
            if rb >= 0.0 {
                if rb.abs() < r.abs() {
                    (y, r, h) = (b, rb, hb);
                }
                break;
            }
            (a, y, r, h) = (b, b, rb, hb);
            step *= 2.0;
            if !step.is_finite() {
                return Err(no_convergence(r));
            }
        }
    } else {
        b = y;
        loop {
            a = guess - step;
            let (ra, ha) = eval(a)?;
            if ra <= 0.0 {
                if ra.abs() < r.abs() {
                    (y, r, h) = (a, ra, ha);
                }
                break;
            }
            (b, y, r, h) = (a, a, ra, ha);
            step *= 2.0;
            if !step.is_finite() {
                return Err(no_convergence(r));
            }
        }
    }

    // Safeguarded Newton: dG/dy = H.
    for _ in 0..400 {
        if r == 0.0 {
            break;
        }
        let mut next = y - r / h;
        if !(next > a && next < b) {
            next = 0.5 * (a + b);
        }
        let scale = next.abs().max(1.0);
        let moved = (next - y).abs();
        let (rn, hn) = eval(next)?;
        if rn < 0.0 {
            a = next;
        } else {
            b = next;
        }
        if rn.abs() <= r.abs() || r.abs() > tol {
            (y, r, h) = (next, rn, hn);
        }
        if moved <= 2.0 * f64::EPSILON * scale || b - a <= 2.0 * f64::EPSILON * scale {
            break;
        }
    }
    if r.abs() > tol {
        return Err(no_convergence(r));
    }
    Ok(Inversion { y, clamped, h })
}

fn no_convergence(residual: f64) -> Error {
    Error::NoConvergence {
        method: "invert_g",
        iterations: 400,
        residual: residual.abs(),
    }
}

/// `Ψ(t, x)`; strictly positive inside `I_μ`.
pub fn psi(table: &QuadratureTable, t: f64, x: f64) -> Result<f64> {
    invert_g_from(table, t, x, DEFAULT_INVERSION_TOL, 0.0).map(|inv| inv.h)
}

/// `Ψ` extended by zero outside `[0, ∞) × I_μ`.
pub fn psi_extended(table: &QuadratureTable, t: f64, x: f64) -> Result<f64> {
    if t < 0.0 || check_domain(table, x).is_err() {
        return Ok(0.0);
    }
    psi(table, t, x)
}

/// `Ψ` tabulated on a `(t, x)` lattice, with the inverted observations.
#[derive(Clone, Debug, Serialize)]
pub struct PsiGrid {
    pub t_nodes: Vec<f64>,
    pub x_nodes: Vec<f64>,
    /// `values[i][j] = Ψ(t_i, x_j)`.
    pub values: Vec<Vec<f64>>,
    /// `y_nodes[i][j] = G_{t_i}⁻¹(x_j)`.
    pub y_nodes: Vec<Vec<f64>>,
    /// Number of lattice points whose `x` was clamped before inversion.
    pub clamped_points: usize,
}

impl PsiGrid {
    /// Largest value of `Ψ²` on row `i`.
    pub fn row_sup_sq(&self, i: usize) -> f64 {
        self.values[i].iter().fold(0.0, |m, &v| m.max(v * v))
    }

    /// Writes the grid as CSV: header of x nodes, first column t.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string()];
        header.extend(self.x_nodes.iter().map(|x| format!("{x}")));
        w.write_record(&header)?;
        for (t, row) in self.t_nodes.iter().zip(&self.values) {
            let mut rec = vec![format!("{t}")];
            rec.extend(row.iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_nodes(name: &'static str, nodes: &[f64]) -> Result<()> {
    if nodes.is_empty() {
        return Err(invalid(name, "must not be empty"));
    }
    if nodes.iter().any(|v| !v.is_finite()) || nodes.windows(2).any(|p| p[0] >= p[1]) {
        return Err(invalid(name, "must be finite and strictly increasing"));
    }
    Ok(())
}

/// Tabulates `Ψ` on `t_nodes × x_nodes`; rows run in parallel, each
/// inversion warm-started from its left neighbour.
pub fn psi_grid(table: &QuadratureTable, t_nodes: &[f64], x_nodes: &[f64]) -> Result<PsiGrid> {
    check_nodes("t_nodes", t_nodes)?;
    check_nodes("x_nodes", x_nodes)?;
    if t_nodes[0] < 0.0 {
        return Err(invalid("t_nodes", "times must be >= 0"));
    }
    let rows: Vec<(Vec<f64>, Vec<f64>, usize)> = t_nodes
        .par_iter()
        .map(|&t| {
            let mut vals = Vec::with_capacity(x_nodes.len());
            let mut ys = Vec::with_capacity(x_nodes.len());
            let mut clamped = 0;
            let mut guess = 0.0;
            for &x in x_nodes {
                let inv = invert_g_from(table, t, x, DEFAULT_INVERSION_TOL, guess)?;
                guess = inv.y;
                clamped += usize::from(inv.clamped);
                vals.push(inv.h);
                ys.push(inv.y);
            }
            Ok((vals, ys, clamped))
        })
        .collect::<Result<_>>()?;
    let clamped_points = rows.iter().map(|r| r.2).sum();
    let (values, y_nodes) = rows.into_iter().map(|r| (r.0, r.1)).unzip();
    Ok(PsiGrid {
        t_nodes: t_nodes.to_vec(),
        x_nodes: x_nodes.to_vec(),
        values,
        y_nodes,
        clamped_points,
    })
}

/// As [`psi_grid`], but nodes on or outside the closed interval `I̅_μ`
/// get `Ψ = 0` (and a non-finite `y`), so the lattice may touch finite
/// endpoints of the support.
pub fn psi_grid_extended(
    table: &QuadratureTable,
    t_nodes: &[f64],
    x_nodes: &[f64],
) -> Result<PsiGrid> {
    let inside: Vec<usize> = (0..x_nodes.len())
        .filter(|&j| check_domain(table, x_nodes[j]).is_ok())
        .collect();
    let xs: Vec<f64> = inside.iter().map(|&j| x_nodes[j]).collect();
    if xs.is_empty() {
        return Err(invalid(
            "x_nodes",
            "no node lies inside the support interval",
        ));
    }
    let inner = psi_grid(table, t_nodes, &xs)?;
    let mid = 0.5 * (table.support_bounds().0 + table.support_bounds().1);
    let mut grid = PsiGrid {
        t_nodes: t_nodes.to_vec(),
        x_nodes: x_nodes.to_vec(),
        values: vec![vec![0.0; x_nodes.len()]; t_nodes.len()],
        y_nodes: vec![vec![0.0; x_nodes.len()]; t_nodes.len()],
        clamped_points: inner.clamped_points,
    };
    for i in 0..t_nodes.len() {
        for (j, &x) in x_nodes.iter().enumerate() {
            grid.y_nodes[i][j] = if x < mid {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            };
        }
        for (k, &j) in inside.iter().enumerate() {
            grid.values[i][j] = inner.values[i][k];
            grid.y_nodes[i][j] = inner.y_nodes[i][k];
        }
    }
    Ok(grid)
}

/// Residuals of the four evolution equations at one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PdeResiduals {
    /// `∂G + ½D²G + G·DG` (differences in y).
    pub burgers: f64,
    /// `∂H + ½D²H + G·DH + H²` (differences in y).
    pub variance_pde: f64,
    /// `∂Ψ + Ψ²(½D²Ψ + 1)` at `x = G(t, y)` (differences in x).
    pub psi_pde: f64,
    /// `(∂F + ½D²F)/F` (differences in y).
    pub heat: f64,
}

impl PdeResiduals {
    pub fn as_array(&self) -> [f64; 4] {
        [self.burgers, self.variance_pde, self.psi_pde, self.heat]
    }
}

pub const RESIDUAL_NAMES: [&str; 4] = ["burgers", "variance_pde", "psi_pde", "heat"];

/// Central-difference residuals at `(t, y)` with step `h` in both time and
/// space; the Ψ stencil is centred at `x = G(t, y)`.
pub fn pde_residuals(table: &QuadratureTable, t: f64, y: f64, h: f64) -> Result<PdeResiduals> {
    if !(h > 0.0) || !(t - h > 0.0) {
        return Err(invalid(
            "h",
            format!("need h > 0 and t - h > 0, got t={t}, h={h}"),
        ));
    }
    let m = |t, y| table.posterior_moments(t, y);
    let c = m(t, y)?;
    let (yp, ym) = (m(t, y + h)?, m(t, y - h)?);
    let (tp, tm) = (m(t + h, y)?, m(t - h, y)?);
    let h2 = h * h;

    let dt_g = (tp.mean - tm.mean) / (2.0 * h);
    let dy_g = (yp.mean - ym.mean) / (2.0 * h);
    let dyy_g = (yp.mean - 2.0 * c.mean + ym.mean) / h2;
    let burgers = dt_g + 0.5 * dyy_g + c.mean * dy_g;

    let dt_h = (tp.variance - tm.variance) / (2.0 * h);
    let dy_h = (yp.variance - ym.variance) / (2.0 * h);
    let dyy_h = (yp.variance - 2.0 * c.variance + ym.variance) / h2;
    let variance_pde = dt_h + 0.5 * dyy_h + c.mean * dy_h + c.variance * c.variance;

    let lf = |t, y| widder_f(table, t, y).map(|w| w.log_value);
    let l0 = lf(t, y)?;
    let ratio = |l: f64| (l - l0).exp();
    let dt_f = (ratio(lf(t + h, y)?) - ratio(lf(t - h, y)?)) / (2.0 * h);
    let dyy_f = (ratio(lf(t, y + h)?) - 2.0 + ratio(lf(t, y - h)?)) / h2;
    let heat = dt_f + 0.5 * dyy_f;

    let x = c.mean;
    let tol = DEFAULT_INVERSION_TOL;
    let p = |t, x| invert_g_from(table, t, x, tol, y).map(|inv| inv.h);
    check_domain(table, x - h)?;
    check_domain(table, x + h)?;
    let p0 = c.variance;
    let dt_p = (p(t + h, x)? - p(t - h, x)?) / (2.0 * h);
    let dxx_p = (p(t, x + h)? - 2.0 * p0 + p(t, x - h)?) / h2;
    let psi_pde = dt_p + p0 * p0 * (0.5 * dxx_p + 1.0);

    Ok(PdeResiduals {
        burgers,
        variance_pde,
        psi_pde,
        heat,
    })
}

/// Residual magnitudes below this count as converged regardless of order.
pub const RESIDUAL_FLOOR: f64 = 1e-9;

/// Minimum observed order demanded by [`residual_convergence`].
pub const MIN_ORDER: f64 = 1.8;

/// Residuals at steps `h, h/2, h/4` and the observed orders.
#[derive(Clone, Debug, Serialize)]
pub struct ResidualStudy {
    pub t: f64,
    pub y: f64,
    pub steps: [f64; 3],
    /// `residuals[k][e]`: step `k`, equation `e` in [`RESIDUAL_NAMES`] order.
    pub residuals: [[f64; 4]; 3],
    /// `orders[k][e] = log2(|r_k| / |r_{k+1}|)`.
    pub orders: [[f64; 4]; 2],
    pub pass: [bool; 4],
}

impl ResidualStudy {
    pub fn all_pass(&self) -> bool {
        self.pass.iter().all(|&p| p)
    }
}

/// Refines the stencil twice and measures the convergence order of each
/// residual. An equation passes if every refinement has order
/// `>= MIN_ORDER` or lands below `RESIDUAL_FLOOR`.
pub fn residual_convergence(
    table: &QuadratureTable,
    t: f64,
    y: f64,
    h: f64,
) -> Result<ResidualStudy> {
    let steps = [h, h / 2.0, h / 4.0];
    let mut residuals = [[0.0; 4]; 3];
    for (k, &s) in steps.iter().enumerate() {
        residuals[k] = pde_residuals(table, t, y, s)?.as_array();
    }
    let mut orders = [[0.0; 4]; 2];
    let mut pass = [true; 4];
    for k in 0..2 {
        for e in 0..4 {
            let (a, b) = (residuals[k][e].abs(), residuals[k + 1][e].abs());
            orders[k][e] = (a / b).log2();
            if !(b <= RESIDUAL_FLOOR || orders[k][e] >= MIN_ORDER) {
                pass[e] = false;
            }
        }
    }
    Ok(ResidualStudy {
        t,
        y,
        steps,
        residuals,
        orders,
        pass,
    })
}

/// Writes residual studies as CSV, one row per (point, step).
pub fn write_residuals_csv(studies: &[ResidualStudy], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "y", "h", "burgers", "variance_pde", "psi_pde", "heat"])?;
    for s in studies {
        for k in 0..3 {
            let mut rec = vec![
                format!("{}", s.t),
                format!("{}", s.y),
                format!("{}", s.steps[k]),
            ];
            rec.extend(s.residuals[k].iter().map(|r| format!("{r}")));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes any serializable record as pretty JSON.
pub(crate) fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::{build_quadrature, posterior_mean_g, posterior_var_h, PriorSpec};

    fn gaussian() -> QuadratureTable {
        build_quadrature(
            &PriorSpec::Gaussian {
                m: 0.0,
                sigma2: 1.0,
            },
            128,
        )
        .unwrap()
    }

    fn bernoulli(beta: f64, p: f64) -> QuadratureTable {
        build_quadrature(&PriorSpec::bernoulli(beta, p), 2).unwrap()
    }

    #[test]
    fn inversion_examples() {
        let g = gaussian();
        assert!(invert_g(&g, 0.7, 0.0, 1e-12).unwrap().abs() < 1e-10);
        assert!((invert_g(&g, 1.0, 1.0, 1e-12).unwrap() - 2.0).abs() < 1e-9);
        let b = bernoulli(1.0, 0.5);
        let y = invert_g(&b, 3.0, 0.5f64.tanh(), 1e-12).unwrap();
        assert!((y - 0.5).abs() < 1e-10);
    }

    #[test]
    fn endpoints_and_outside_are_rejected() {
        let b = bernoulli(1.0, 0.5);
        assert!(matches!(
            invert_g(&b, 1.0, 1.0, 1e-10),
            Err(Error::OutsideDomain { .. })
        ));
        assert!(matches!(
            invert_g(&b, 1.0, -1.5, 1e-10),
            Err(Error::OutsideDomain { .. })
        ));
        let inv = invert_g_from(&b, 1.0, 1.0 - 1e-13, 1e-10, 0.0).unwrap();
        assert!(inv.clamped);
        assert!(inv.y > 10.0);
        assert_eq!(psi_extended(&b, 1.0, 2.0).unwrap(), 0.0);
        assert_eq!(psi_extended(&b, -1.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn psi_examples() {
        for p in [0.2, 0.5, 0.8] {
            let b = bernoulli(1.3, p);
            for x in [-1.2, -0.5, 0.0, 0.9, 1.25] {
                let v = psi(&b, 0.8, x).unwrap();
                assert!((v - (1.69 - x * x)).abs() < 1e-9, "p={p} x={x} v={v}");
            }
        }
        let g = gaussian();
        for x in [-3.0, 0.0, 2.5] {
            assert!((psi(&g, 1.0, x).unwrap() - 0.5).abs() < 1e-10);
        }
    }

    #[test]
    fn psi_roundtrip_on_lattice() {
        let table = build_quadrature(
            &PriorSpec::SymmetricGaussianMixture { m: 1.0, sigma: 1.0 },
            128,
        )
        .unwrap();
        for t in [0.0, 0.5, 2.0] {
            for y in [-4.0, -1.0, 0.3, 3.0] {
                let x = posterior_mean_g(&table, t, y).unwrap();
                let h = posterior_var_h(&table, t, y).unwrap();
                assert!((psi(&table, t, x).unwrap() - h).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn grid_rows_and_clamp_count() {
        let b = bernoulli(1.0, 0.5);
        let x: Vec<f64> = (0..21).map(|j| -0.95 + 0.095 * j as f64).collect();
        let grid = psi_grid(&b, &[0.0, 1.0, 4.0], &x).unwrap();
        for row in &grid.values {
            for (v, x) in row.iter().zip(&x) {
                assert!((v - (1.0 - x * x)).abs() < 1e-9);
            }
        }
        assert_eq!(grid.clamped_points, 0);
        assert!(psi_grid(&b, &[1.0, 0.5], &x).is_err());
    }

    #[test]
    fn residuals_vanish_in_closed_cases() {
        let g = gaussian();
        let r = pde_residuals(&g, 1.0, 0.7, 1e-3).unwrap();
        assert!(r.burgers.abs() <= 1e-6, "{r:?}");
        let b = bernoulli(1.0, 0.5);
        let r = pde_residuals(&b, 1.0, 0.4, 1e-2).unwrap();
        assert!(r.psi_pde.abs() <= 1e-9, "{r:?}");
        assert!(pde_residuals(&b, 0.01, 0.0, 0.02).is_err());
    }

    #[test]
    fn residual_study_reports_second_order() {
        let table = build_quadrature(&PriorSpec::HalfNormal { sigma2: 1.0 }, 128).unwrap();
        let s = residual_convergence(&table, 1.0, 0.5, 0.05).unwrap();
        assert!(s.all_pass(), "{s:?}");
    }
}
