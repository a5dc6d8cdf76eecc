//! Structural properties of solved grids: time monotonicity, value ordering,
//! Bernoulli comparison, local goodness, symmetry and complementarity.

use serde::Serialize;

use super::{BoundaryCurve, ValueGrid};
use crate::closed_form::bernoulli_solve;
use crate::error::{invalid, Error, Result};
use crate::prior::PriorSpec;

/// Lattice location `(t, x)`.
pub type Location = (f64, f64);

#[derive(Clone, Debug, Serialize)]
pub struct MonotonicityReport {
    pub pass: bool,
    /// `max (v(t_i, x) − v(t_{i+1}, x))⁺`.
    pub worst_violation: f64,
    pub worst_at: Option<Location>,
    /// Nodes stopped at `t_i` but not at `t_{i+1}`.
    pub nesting_violations: usize,
    pub first_nesting_violation: Option<Location>,
    pub tolerance: f64,
}

/// Checks `v(t_i, ·) ≤ v(t_{i+1}, ·) + obstacle_tol` and
/// `D_{t_i} ⊆ D_{t_{i+1}}` as index sets.
pub fn monotonicity_report(grid: &ValueGrid) -> MonotonicityReport {
    let tol = grid.config.obstacle_tol;
    let mut worst = 0.0f64;
    let mut worst_at = None;
    let mut nesting = 0;
    let mut first = None;
    for i in 0..grid.t_nodes.len() - 1 {
        for j in 0..grid.x_nodes.len() {
            let d = grid.values[i][j] - grid.values[i + 1][j];
            if d > worst {
                worst = d;
                worst_at = Some((grid.t_nodes[i], grid.x_nodes[j]));
            }
            if grid.is_stopped(i, j) && !grid.is_stopped(i + 1, j) {
                nesting += 1;
                first.get_or_insert((grid.t_nodes[i], grid.x_nodes[j]));
            }
        }
    }
    MonotonicityReport {
        pass: worst <= tol && nesting == 0,
        worst_violation: worst,
        worst_at,
        nesting_violations: nesting,
        first_nesting_violation: first,
        tolerance: tol,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrendReport {
    /// `max_i (b(t_i) − b(t_{i+1}))⁺`.
    pub decrease: f64,
    /// `max_i (b(t_{i+1}) − b(t_i))⁺`.
    pub increase: f64,
}

impl TrendReport {
    pub fn non_decreasing(&self, tol: f64) -> bool {
        self.decrease <= tol
    }

    pub fn non_increasing(&self, tol: f64) -> bool {
        self.increase <= tol
    }
}

/// Largest step down and up of `b(t)` between consecutive slices.
pub fn threshold_trend(curve: &BoundaryCurve) -> TrendReport {
    let (mut dec, mut inc) = (0.0f64, 0.0f64);
    for w in curve.thresholds.windows(2) {
        let d = w[1] - w[0];
        if d.is_nan() {
            continue;
        }
        dec = dec.max(-d);
        inc = inc.max(d);
    }
    TrendReport {
        decrease: dec,
        increase: inc,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OrderingReport {
    pub pass: bool,
    /// `max (v₁ − v₂)⁺`.
    pub worst_violation: f64,
    pub worst_at: Option<Location>,
}

/// Checks `Ψ₁ ≥ Ψ₂ − tol` (premise) and then `v₁ ≤ v₂ + tol` on a shared
/// lattice.
pub fn compare_value_ordering(g1: &ValueGrid, g2: &ValueGrid, tol: f64) -> Result<OrderingReport> {
    if g1.t_nodes != g2.t_nodes || g1.x_nodes != g2.x_nodes {
        return Err(Error::GridMismatch(
            "value grids do not share their lattice".into(),
        ));
    }
    for i in 0..g1.t_nodes.len() {
        for j in 0..g1.x_nodes.len() {
            if g1.psi[i][j] < g2.psi[i][j] - tol {
                return Err(Error::PremiseViolated(format!(
                    "Ψ₁ < Ψ₂ at (t, x) = ({}, {}): {} < {}",
                    g1.t_nodes[i], g1.x_nodes[j], g1.psi[i][j], g2.psi[i][j]
                )));
            }
        }
    }
    let mut worst = 0.0f64;
    let mut worst_at = None;
    for i in 0..g1.t_nodes.len() {
        for j in 0..g1.x_nodes.len() {
            let d = g1.values[i][j] - g2.values[i][j];
            if d > worst {
                worst = d;
                worst_at = Some((g1.t_nodes[i], g1.x_nodes[j]));
            }
        }
    }
    Ok(OrderingReport {
        pass: worst <= tol,
        worst_violation: worst,
        worst_at,
    })
}

/// Which containment applies against the Bernoulli prior on `±β`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportCase {
    /// Support inside `[−β, β]`: continuation ⊆ `(−a, a)`.
    Inside,
    /// Support disjoint from `(−β, β)`: continuation ⊇ `(−a, a)`.
    Outside,
}

#[derive(Clone, Debug, Serialize)]
pub struct BernoulliComparison {
    pub pass: bool,
    pub case: SupportCase,
    /// Bernoulli boundary `a(β)`; `None` when `β⁴ ≤ c`.
    pub boundary_a: Option<f64>,
    pub violations: usize,
    pub first_violation: Option<Location>,
}

/// Which containment case `prior` falls in relative to `±β`, if any.
pub fn support_case(prior: &PriorSpec, beta: f64) -> Option<SupportCase> {
    let points: Vec<f64> = match prior {
        PriorSpec::DiscreteAtoms { atoms } => atoms.iter().map(|a| a.point).collect(),
        PriorSpec::TabulatedDensity {
            grid,
            density_values,
        } => grid
            .iter()
            .zip(density_values)
            .filter(|(_, &d)| d > 0.0)
            .map(|(&x, _)| x)
            .collect(),
        _ => {
            let (lo, hi) = prior.support_bounds();
            vec![lo, hi]
        }
    };
    if points.iter().all(|x| x.abs() <= beta) {
        Some(SupportCase::Inside)
    } else if points.iter().all(|x| x.abs() >= beta)
        && !matches!(
            prior,
            PriorSpec::Gaussian { .. }
                | PriorSpec::SymmetricGaussianMixture { .. }
                | PriorSpec::HalfNormal { .. }
        )
    {
        Some(SupportCase::Outside)
    } else {
        None
    }
}

/// Compares the continuation region of `grid` with `(−a(β), a(β))`,
/// allowing one x-cell of slack.
pub fn bernoulli_comparison_check(
    grid: &ValueGrid,
    prior: &PriorSpec,
    beta: f64,
) -> Result<BernoulliComparison> {
    if !(beta > 0.0) {
        return Err(invalid("beta", "must be > 0"));
    }
    let case = support_case(prior, beta).ok_or_else(|| {
        Error::PremiseViolated(format!(
            "support of the {} prior is neither inside [−β, β] nor disjoint from (−β, β), β = {beta}",
            prior.kind_name()
        ))
    })?;
    let a = bernoulli_solve(beta, grid.cost, 1e-12)?.boundary_a;
    let dx = grid.dx();
    let mut violations = 0;
    let mut first = None;
    for i in 0..grid.t_nodes.len() {
        for (j, &x) in grid.x_nodes.iter().enumerate() {
            let cont = !grid.is_stopped(i, j);
            let bad = match (case, a) {
                (SupportCase::Inside, Some(a)) => cont && x.abs() >= a + dx,
                (SupportCase::Inside, None) => cont,
                (SupportCase::Outside, Some(a)) => !cont && x.abs() <= a - dx,
                (SupportCase::Outside, None) => false,
            };
            if bad {
                violations += 1;
                first.get_or_insert((grid.t_nodes[i], x));
            }
        }
    }
    Ok(BernoulliComparison {
        pass: violations == 0,
        case,
        boundary_a: a,
        violations,
        first_violation: first,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LocallyGoodReport {
    pub pass: bool,
    /// Nodes where `Ψ² > c + margin`.
    pub checked: usize,
    pub violations: usize,
    pub first_violation: Option<Location>,
}

/// Every node with `Ψ² > c + margin` must be continuation, where the margin
/// is the largest change of `Ψ²` to a neighbouring node in x or t.
pub fn locally_good_check(grid: &ValueGrid) -> LocallyGoodReport {
    let (nt, nx) = (grid.t_nodes.len(), grid.x_nodes.len());
    let p2 = |i: usize, j: usize| grid.psi[i][j] * grid.psi[i][j];
    let mut checked = 0;
    let mut violations = 0;
    let mut first = None;
    for i in 0..nt {
        for j in 0..nx {
            let here = p2(i, j);
            let mut margin = 0.0f64;
            if j > 0 {
                margin = margin.max((here - p2(i, j - 1)).abs());
            }
            if j + 1 < nx {
                margin = margin.max((here - p2(i, j + 1)).abs());
            }
            if i > 0 {
                margin = margin.max((here - p2(i - 1, j)).abs());
            }
            if i + 1 < nt {
                margin = margin.max((here - p2(i + 1, j)).abs());
            }
            // Rounding floor for rows where Ψ² sits on c.
            let floor = 64.0 * f64::EPSILON * here.max(grid.cost);
            if here > grid.cost + margin + floor {
                checked += 1;
                if grid.is_stopped(i, j) {
                    violations += 1;
                    first.get_or_insert((grid.t_nodes[i], grid.x_nodes[j]));
                }
            }
        }
    }
    LocallyGoodReport {
        pass: violations == 0,
        checked,
        violations,
        first_violation: first,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SymmetryReport {
    pub pass: bool,
    /// `max |v(t, x_j) − v(t, x_{n−1−j})|`.
    pub worst: f64,
}

/// Mirror symmetry of `v` about the window centre.
pub fn symmetry_report(grid: &ValueGrid, tol: f64) -> SymmetryReport {
    let n = grid.x_nodes.len();
    let worst = grid
        .values
        .iter()
        .flat_map(|row| (0..n / 2).map(move |j| (row[j] - row[n - 1 - j]).abs()))
        .fold(0.0f64, f64::max);
    SymmetryReport {
        pass: worst <= tol,
        worst,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ComplementarityReport {
    pub pass: bool,
    /// Largest `|v^{n+1} − v^n + dt(½Ψ²D²v^n + c − Ψ²)|` over continuing
    /// interior nodes.
    pub worst_residual: f64,
    /// Largest positive `v`.
    pub worst_positive: f64,
    /// Largest violation of `v^{n+1} − v^n + dt(½Ψ²D²v^n + c − Ψ²) ≥ 0`.
    pub worst_negative_slack: f64,
}

/// Discrete obstacle complementarity on interior nodes of every implicit step.
pub fn complementarity_report(grid: &ValueGrid, tol: f64) -> ComplementarityReport {
    let (nt, nx) = (grid.t_nodes.len(), grid.x_nodes.len());
    let (dt, dx) = (grid.dt(), grid.dx());
    let zt = grid.zero_tol();
    let mut res = 0.0f64;
    let mut pos = 0.0f64;
    let mut slack = 0.0f64;
    for i in 0..nt - 1 {
        let (v, next, p) = (&grid.values[i], &grid.values[i + 1], &grid.psi[i]);
        for j in 1..nx - 1 {
            let d2 = (v[j + 1] - 2.0 * v[j] + v[j - 1]) / (dx * dx);
            let r = next[j] - v[j] + dt * (0.5 * p[j] * p[j] * d2 + grid.cost - p[j] * p[j]);
            pos = pos.max(v[j]);
            slack = slack.max(-r);
            if v[j] < -zt {
                res = res.max(r.abs());
            }
        }
    }
    ComplementarityReport {
        pass: res <= tol && pos <= tol && slack <= tol,
        worst_residual: res,
        worst_positive: pos,
        worst_negative_slack: slack,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundsReport {
    pub pass: bool,
    pub min_value: f64,
    pub max_value: f64,
    pub floor: f64,
}

/// `−Var(X) − tol ≤ v ≤ tol`.
pub fn value_bounds(grid: &ValueGrid, variance: f64, tol: f64) -> BoundsReport {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in grid.values.iter().flatten() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    BoundsReport {
        pass: lo >= -variance - tol && hi <= tol,
        min_value: lo,
        max_value: hi,
        floor: -variance,
    }
}

/// Bundle written as `monotonicity_report.json`.
#[derive(Clone, Debug, Serialize)]
pub struct StructuralReport {
    pub pass: bool,
    pub monotonicity: MonotonicityReport,
    pub threshold_trend: TrendReport,
    pub locally_good: LocallyGoodReport,
    pub complementarity: ComplementarityReport,
    pub bounds: BoundsReport,
    pub symmetry: Option<SymmetryReport>,
    pub jumps: Vec<usize>,
    pub shape: super::Shape,
    pub boundary_flag_rows: usize,
}

/// Runs the prior-independent checks; `symmetric` adds the mirror check.
pub fn structural_report(
    grid: &ValueGrid,
    curve: &BoundaryCurve,
    variance: f64,
    symmetric: bool,
) -> StructuralReport {
    let tol = grid.config.obstacle_tol;
    let monotonicity = monotonicity_report(grid);
    let locally_good = locally_good_check(grid);
    let complementarity = complementarity_report(grid, tol);
    let bounds = value_bounds(grid, variance, tol);
    let symmetry = symmetric.then(|| symmetry_report(grid, tol));
    let pass = monotonicity.pass
        && locally_good.pass
        && complementarity.pass
        && bounds.pass
        && symmetry.as_ref().is_none_or(|s| s.pass);
    StructuralReport {
        pass,
        monotonicity,
        threshold_trend: threshold_trend(curve),
        locally_good,
        complementarity,
        bounds,
        symmetry,
        jumps: curve.jumps.clone(),
        shape: curve.shape,
        boundary_flag_rows: grid.metadata.boundary_flag_rows,
    }
}
