//! Prior distributions for the unobservable drift and the posterior
//! quantities obtained by exponential reweighting.
//!
//! Every integral against the prior (or a posterior) runs on a
//! [`QuadratureTable`]: a finite set of support points with positive masses.
//! Given the observation `Y(t) = y`, the posterior puts mass proportional to
//! `w_i · exp(u_i·y − u_i²·t/2)` on node `u_i`. All exponent sums are shifted
//! by their maximum before exponentiation, so the reweighting never overflows
//! even when `u·y − u²t/2` spans thousands of units.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{gauss_hermite, gauss_legendre, norm_upper_quantile};

/// Default number of nodes for continuous priors.
pub const DEFAULT_NODES: usize = 128;

/// Default relative tolerance for matching table moments to the analytic ones.
pub const DEFAULT_MOMENT_TOL: f64 = 1e-8;

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// One support point of a discrete prior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub point: f64,
    pub weight: f64,
}

/// Declarative description of the prior law of the drift.
///
/// The JSON form is internally tagged by `kind`, e.g.
/// `{"kind": "gaussian", "m": 0.0, "sigma2": 1.0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSpec {
    DiscreteAtoms {
        atoms: Vec<Atom>,
    },
    Gaussian {
        m: f64,
        sigma2: f64,
    },
    /// Equal-weight mixture of `N(m, σ²)` and `N(−m, σ²)`; `sigma` is the
    /// component standard deviation.
    SymmetricGaussianMixture {
        m: f64,
        sigma: f64,
    },
    /// Law of `|Z|` with `Z ~ N(0, sigma2)`.
    HalfNormal {
        sigma2: f64,
    },
    TabulatedDensity {
        grid: Vec<f64>,
        density_values: Vec<f64>,
    },
}

/// Verdict of [`check_integrability`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntegrabilityVerdict {
    pub pass: bool,
    pub diagnostic: String,
}

impl PriorSpec {
    /// Two-point prior `(1−p)·δ_{−β} + p·δ_{β}`.
    pub fn bernoulli(beta: f64, p: f64) -> Self {
        PriorSpec::DiscreteAtoms {
            atoms: vec![
                Atom {
                    point: -beta,
                    weight: 1.0 - p,
                },
                Atom {
                    point: beta,
                    weight: p,
                },
            ],
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: PriorSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            PriorSpec::DiscreteAtoms { .. } => "discrete_atoms",
            PriorSpec::Gaussian { .. } => "gaussian",
            PriorSpec::SymmetricGaussianMixture { .. } => "symmetric_gaussian_mixture",
            PriorSpec::HalfNormal { .. } => "half_normal",
            PriorSpec::TabulatedDensity { .. } => "tabulated_density",
        }
    }

    /// Checks the structural invariants of the description.
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidPrior(format!(
                    "`{name}` must be finite and > 0, got {v}"
                )))
            }
        };
        match self {
            PriorSpec::DiscreteAtoms { atoms } => {
                if atoms.iter().any(|a| !a.point.is_finite()) {
                    return Err(Error::InvalidPrior("`atoms.point` must be finite".into()));
                }
                if atoms
                    .iter()
                    .any(|a| !(a.weight.is_finite() && a.weight > 0.0))
                {
                    return Err(Error::InvalidPrior("`atoms.weight` must be > 0".into()));
                }
                let total: f64 = atoms.iter().map(|a| a.weight).sum();
                if (total - 1.0).abs() > WEIGHT_SUM_TOL {
                    return Err(Error::InvalidPrior(format!(
                        "`atoms.weight` must sum to 1, got {total}"
                    )));
                }
                let first = atoms.first().map(|a| a.point);
                if atoms.len() < 2 || atoms.iter().all(|a| Some(a.point) == first) {
                    return Err(Error::InvalidPrior(
                        "`atoms` describes a one-point distribution".into(),
                    ));
                }
                Ok(())
            }
            PriorSpec::Gaussian { m, sigma2 } => {
                if !m.is_finite() {
                    return Err(Error::InvalidPrior("`m` must be finite".into()));
                }
                positive("sigma2", *sigma2)
            }
            PriorSpec::SymmetricGaussianMixture { m, sigma } => {
                positive("m", *m)?;
                positive("sigma", *sigma)
            }
            PriorSpec::HalfNormal { sigma2 } => positive("sigma2", *sigma2),
            PriorSpec::TabulatedDensity {
                grid,
                density_values,
            } => {
                if grid.len() < 3 {
                    return Err(Error::InvalidPrior("`grid` needs at least 3 points".into()));
                }
                if grid.len() != density_values.len() {
                    return Err(Error::InvalidPrior(format!(
                        "`density_values` has {} entries but `grid` has {}",
                        density_values.len(),
                        grid.len()
                    )));
                }
                if grid.iter().any(|g| !g.is_finite()) || grid.windows(2).any(|p| p[0] >= p[1]) {
                    return Err(Error::InvalidPrior(
                        "`grid` must be finite and strictly increasing".into(),
                    ));
                }
                if density_values.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
                    return Err(Error::InvalidPrior(
                        "`density_values` must be finite and nonnegative".into(),
                    ));
                }
                let cells = tabulated_cells(grid, density_values);
                if cells.len() < 2 {
                    return Err(Error::InvalidPrior(
                        "`density_values` puts mass on fewer than two cells".into(),
                    ));
                }
                if grid.len() >= 5 {
                    let fine = tabulated_second_moment(grid, density_values);
                    let coarse_grid: Vec<f64> = grid.iter().copied().step_by(2).collect();
                    let coarse_vals: Vec<f64> = density_values.iter().copied().step_by(2).collect();
                    let coarse = tabulated_second_moment(&coarse_grid, &coarse_vals);
                    if !fine.is_finite()
                        || (coarse.is_finite()
                            && (fine - coarse).abs() > 0.01 * fine.abs().max(1e-300))
                    {
                        return Err(Error::InvalidPrior(format!(
                            "second moment is not stable under grid refinement ({coarse} vs {fine})"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// Analytic mean and variance. Tabulated densities use their atom table.
    pub fn moments(&self) -> Result<(f64, f64)> {
        use std::f64::consts::PI;
        Ok(match self {
            PriorSpec::DiscreteAtoms { atoms } => {
                let mean: f64 = atoms.iter().map(|a| a.weight * a.point).sum();
                let var = atoms
                    .iter()
                    .map(|a| a.weight * (a.point - mean).powi(2))
                    .sum();
                (mean, var)
            }
            PriorSpec::Gaussian { m, sigma2 } => (*m, *sigma2),
            PriorSpec::SymmetricGaussianMixture { m, sigma } => (0.0, sigma * sigma + m * m),
            PriorSpec::HalfNormal { sigma2 } => {
                (sigma2.sqrt() * (2.0 / PI).sqrt(), sigma2 * (1.0 - 2.0 / PI))
            }
            PriorSpec::TabulatedDensity { .. } => {
                let table = build_quadrature(self, 3)?;
                prior_moments(&table)
            }
        })
    }

    /// Closed hull `[inf S_μ, sup S_μ]` of the support, possibly infinite.
    pub fn support_bounds(&self) -> (f64, f64) {
        match self {
            PriorSpec::DiscreteAtoms { atoms } => atoms
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| {
                    (lo.min(a.point), hi.max(a.point))
                }),
            PriorSpec::Gaussian { .. } | PriorSpec::SymmetricGaussianMixture { .. } => {
                (f64::NEG_INFINITY, f64::INFINITY)
            }
            PriorSpec::HalfNormal { .. } => (0.0, f64::INFINITY),
            PriorSpec::TabulatedDensity {
                grid,
                density_values,
            } => {
                let positive: Vec<usize> = (0..grid.len() - 1)
                    .filter(|&i| density_values[i] + density_values[i + 1] > 0.0)
                    .collect();
                match (positive.first(), positive.last()) {
                    (Some(&i), Some(&j)) => (grid[i], grid[j + 1]),
                    _ => (f64::NAN, f64::NAN),
                }
            }
        }
    }

    /// Whether the prior is symmetric about the origin.
    pub fn is_symmetric(&self) -> bool {
        match self {
            PriorSpec::Gaussian { m, .. } => *m == 0.0,
            PriorSpec::SymmetricGaussianMixture { .. } => true,
            PriorSpec::HalfNormal { .. } => false,
            PriorSpec::DiscreteAtoms { atoms } => {
                let mut sorted = atoms.clone();
                sorted.sort_by(|a, b| a.point.total_cmp(&b.point));
                let n = sorted.len();
                (0..n).all(|i| {
                    let (a, b) = (sorted[i], sorted[n - 1 - i]);
                    (a.point + b.point).abs() <= 1e-12 * a.point.abs().max(1.0)
                        && (a.weight - b.weight).abs() <= 1e-12
                })
            }
            PriorSpec::TabulatedDensity {
                grid,
                density_values,
            } => {
                let n = grid.len();
                (0..n).all(|i| {
                    (grid[i] + grid[n - 1 - i]).abs() <= 1e-12 * grid[i].abs().max(1.0)
                        && (density_values[i] - density_values[n - 1 - i]).abs()
                            <= 1e-12 * density_values[i].abs().max(1e-300)
                })
            }
        }
    }
}

fn tabulated_cells(grid: &[f64], density: &[f64]) -> Vec<(f64, f64)> {
    grid.windows(2)
        .zip(density.windows(2))
        .map(|(g, d)| (0.5 * (g[0] + g[1]), 0.5 * (d[0] + d[1]) * (g[1] - g[0])))
        .filter(|&(_, mass)| mass > 0.0)
        .collect()
}

fn tabulated_second_moment(grid: &[f64], density: &[f64]) -> f64 {
    let cells = tabulated_cells(grid, density);
    let total: f64 = cells.iter().map(|c| c.1).sum();
    cells.iter().map(|(u, m)| m * u * u).sum::<f64>() / total
}

/// Discretized prior (or posterior): increasing nodes with positive masses.
///
/// Masses are kept in log form so that posterior tables whose far nodes
/// carry astronomically small mass stay exact under further reweighting.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureTable {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    support_bounds: (f64, f64),
}

/// Widder transform value in log and linear form.
///
/// `value` overflows to `+∞` when `log_value` exceeds ~709; `log_value`
/// itself stays finite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WidderValue {
    pub log_value: f64,
    pub value: f64,
}

/// Log-normalizer, mean and centred variance of a posterior.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PosteriorMoments {
    pub log_f: f64,
    pub mean: f64,
    pub variance: f64,
}

impl QuadratureTable {
    /// Builds a table from nodes and log-masses; sorts, merges coincident
    /// nodes and normalizes.
    pub fn from_log_weights(
        mut pairs: Vec<(f64, f64)>,
        support_bounds: (f64, f64),
    ) -> Result<Self> {
        pairs.retain(|&(_, lw)| lw > f64::NEG_INFINITY);
        if pairs
            .iter()
            .any(|&(u, lw)| !u.is_finite() || lw.is_nan() || lw == f64::INFINITY)
        {
            return Err(invalid("nodes", "nodes and log-weights must be finite"));
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
        for (u, lw) in pairs {
            match merged.last_mut() {
                Some(last) if (u - last.0).abs() <= 1e-14 * u.abs().max(1.0) => {
                    let hi = last.1.max(lw);
                    last.1 = hi + ((last.1 - hi).exp() + (lw - hi).exp()).ln();
                }
                _ => merged.push((u, lw)),
            }
        }
        if merged.len() < 2 {
            return Err(Error::InvalidPrior(
                "quadrature table collapsed to a single node".into(),
            ));
        }
        let max = merged.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let log_total = max + merged.iter().map(|p| (p.1 - max).exp()).sum::<f64>().ln();
        let nodes = merged.iter().map(|p| p.0).collect();
        let log_weights: Vec<f64> = merged.iter().map(|p| p.1 - log_total).collect();
        let weights = log_weights.iter().map(|lw| lw.exp()).collect();
        Ok(Self {
            nodes,
            weights,
            log_weights,
            support_bounds,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `(inf S_μ, sup S_μ)` of the underlying prior, possibly infinite.
    pub fn support_bounds(&self) -> (f64, f64) {
        self.support_bounds
    }

    /// Open interval of posterior means the table can actually produce:
    /// the hull of its nodes.
    pub fn mean_range(&self) -> (f64, f64) {
        (self.nodes[0], self.nodes[self.nodes.len() - 1])
    }

    fn exponents(&self, t: f64, y: f64, out: &mut Vec<f64>) -> Result<f64> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(invalid(
                "t",
                format!("time must be finite and >= 0, got {t}"),
            ));
        }
        if !y.is_finite() {
            return Err(invalid("y", format!("observation must be finite, got {y}")));
        }
        out.clear();
        let mut max = f64::NEG_INFINITY;
        for (&u, &lw) in self.nodes.iter().zip(&self.log_weights) {
            let e = lw + u * y - 0.5 * u * u * t;
            max = max.max(e);
            out.push(e);
        }
        Ok(max)
    }

    /// Log-normalizer, posterior mean and centred posterior variance.
    pub fn posterior_moments(&self, t: f64, y: f64) -> Result<PosteriorMoments> {
        let mut buf = Vec::with_capacity(self.nodes.len());
        let max = self.exponents(t, y, &mut buf)?;
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        for (e, &u) in buf.iter_mut().zip(&self.nodes) {
            *e = (*e - max).exp();
            s0 += *e;
            s1 += *e * u;
        }
        // The maximal term contributes exp(0) = 1, so s0 >= 1.
        assert!(s0 >= 1.0, "posterior normalizer underflowed");
        let mean = s1 / s0;
        let var = buf
            .iter()
            .zip(&self.nodes)
            .map(|(s, &u)| s * (u - mean) * (u - mean))
            .sum::<f64>()
            / s0;
        Ok(PosteriorMoments {
            log_f: max + s0.ln(),
            mean,
            variance: var,
        })
    }
}

/// Discretizes the prior with `n` nodes (ignored for discrete priors).
pub fn build_quadrature(prior: &PriorSpec, n: usize) -> Result<QuadratureTable> {
    build_quadrature_with_tolerance(prior, n, DEFAULT_MOMENT_TOL)
}

/// As [`build_quadrature`], checking table moments against the analytic ones
/// at relative tolerance `moment_tol`.
pub fn build_quadrature_with_tolerance(
    prior: &PriorSpec,
    n: usize,
    moment_tol: f64,
) -> Result<QuadratureTable> {
    prior.validate()?;
    if n < 2 {
        return Err(invalid("n", format!("need at least 2 nodes, got {n}")));
    }
    let bounds = prior.support_bounds();
    let table = match prior {
        PriorSpec::DiscreteAtoms { atoms } => QuadratureTable::from_log_weights(
            atoms.iter().map(|a| (a.point, a.weight.ln())).collect(),
            bounds,
        )?,
        PriorSpec::Gaussian { m, sigma2 } => {
            QuadratureTable::from_log_weights(hermite_pairs(*m, sigma2.sqrt(), n, 0.0), bounds)?
        }
        PriorSpec::SymmetricGaussianMixture { m, sigma } => {
            let half = 0.5f64.ln();
            let mut pairs = hermite_pairs(*m, *sigma, n, half);
            pairs.extend(hermite_pairs(-*m, *sigma, n, half));
            QuadratureTable::from_log_weights(pairs, bounds)?
        }
        PriorSpec::HalfNormal { sigma2 } => {
            QuadratureTable::from_log_weights(half_normal_pairs(sigma2.sqrt(), n), bounds)?
        }
        PriorSpec::TabulatedDensity {
            grid,
            density_values,
        } => QuadratureTable::from_log_weights(
            tabulated_cells(grid, density_values)
                .into_iter()
                .map(|(u, m)| (u, m.ln()))
                .collect(),
            bounds,
        )?,
    };
    if !matches!(
        prior,
        PriorSpec::DiscreteAtoms { .. } | PriorSpec::TabulatedDensity { .. }
    ) {
        let (mean, var) = prior_moments(&table);
        let (m0, v0) = prior.moments()?;
        let scale = v0.sqrt();
        if (mean - m0).abs() > moment_tol * scale.max(m0.abs())
            || (var - v0).abs() > moment_tol * v0
        {
            return Err(invalid(
                "n",
                format!(
                    "{n} nodes do not reproduce the prior moments: table ({mean}, {var}) vs ({m0}, {v0})"
                ),
            ));
        }
    }
    Ok(table)
}

fn hermite_pairs(center: f64, sd: f64, n: usize, log_scale: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_hermite(n);
    let log_sqrt_pi = 0.5 * std::f64::consts::PI.ln();
    x.iter()
        .zip(&w)
        .map(|(&x, &w)| {
            (
                center + std::f64::consts::SQRT_2 * sd * x,
                w.ln() - log_sqrt_pi + log_scale,
            )
        })
        .collect()
}

/// Composite Gauss–Legendre rule for the half-normal law. Panel edges are
/// graded quadratically towards the origin, where the posterior of a
/// strongly negative observation concentrates, and the rule is truncated
/// at the quantile leaving tail mass 1e-30, far enough out for
/// posteriors tilted by large observations at small t.
fn half_normal_pairs(sd: f64, n: usize) -> Vec<(f64, f64)> {
    let per_panel = n.clamp(2, 8);
    let panels = (n / per_panel).max(1);
    let upper = sd * norm_upper_quantile(1e-30);
    let (gx, gw) = gauss_legendre(per_panel);
    let edge = |k: usize| upper * (k as f64 / panels as f64).powi(2);
    let mut pairs = Vec::with_capacity(panels * per_panel);
    let log_norm = 0.5 * (2.0 / std::f64::consts::PI).ln() - sd.ln();
    for k in 0..panels {
        let (a, b) = (edge(k), edge(k + 1));
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        for (&x, &w) in gx.iter().zip(&gw) {
            let u = mid + half * x;
            pairs.push((u, (w * half).ln() + log_norm - 0.5 * (u / sd).powi(2)));
        }
    }
    pairs
}

/// Widder transform `F(t, y) = Σ w_i exp(u_i y − u_i² t/2)`.
pub fn widder_f(table: &QuadratureTable, t: f64, y: f64) -> Result<WidderValue> {
    let log_value = table.posterior_moments(t, y)?.log_f;
    Ok(WidderValue {
        log_value,
        value: log_value.exp(),
    })
}

/// Posterior mean `G(t, y)`.
pub fn posterior_mean_g(table: &QuadratureTable, t: f64, y: f64) -> Result<f64> {
    Ok(table.posterior_moments(t, y)?.mean)
}

/// Posterior variance `H(t, y)`, computed in centred form.
pub fn posterior_var_h(table: &QuadratureTable, t: f64, y: f64) -> Result<f64> {
    Ok(table.posterior_moments(t, y)?.variance)
}

/// Posterior expectation of `q(X)` given `Y(t) = y`.
pub fn posterior_expectation<Q: Fn(f64) -> f64>(
    table: &QuadratureTable,
    q: Q,
    t: f64,
    y: f64,
) -> Result<f64> {
    let mut buf = Vec::with_capacity(table.len());
    let max = table.exponents(t, y, &mut buf)?;
    let mut s0 = 0.0;
    let mut sq = 0.0;
    for (i, (e, &u)) in buf.iter().zip(table.nodes()).enumerate() {
        let s = (e - max).exp();
        if s == 0.0 {
            continue;
        }
        let qv = q(u);
        if !qv.is_finite() {
            return Err(Error::NonFinite {
                node: i,
                point: u,
                value: qv,
            });
        }
        s0 += s;
        sq += s * qv;
    }
    Ok(sq / s0)
}

/// The posterior law `μ_{t,y}` on the same nodes.
pub fn posterior_measure(table: &QuadratureTable, t: f64, y: f64) -> Result<QuadratureTable> {
    let mut buf = Vec::with_capacity(table.len());
    table.exponents(t, y, &mut buf)?;
    QuadratureTable::from_log_weights(
        table.nodes().iter().copied().zip(buf).collect(),
        table.support_bounds(),
    )
}

/// Exact weighted mean and centred variance of the table.
pub fn prior_moments(table: &QuadratureTable) -> (f64, f64) {
    let mean: f64 = table
        .nodes()
        .iter()
        .zip(table.weights())
        .map(|(u, w)| u * w)
        .sum();
    let var = table
        .nodes()
        .iter()
        .zip(table.weights())
        .map(|(u, w)| w * (u - mean) * (u - mean))
        .sum();
    (mean, var)
}

/// Checks `∫ exp(a u²) μ(du) < ∞`.
pub fn check_integrability(prior: &PriorSpec, a: f64) -> IntegrabilityVerdict {
    if !(a > 0.0) || !a.is_finite() {
        return IntegrabilityVerdict {
            pass: false,
            diagnostic: format!("exponent a must be finite and > 0, got {a}"),
        };
    }
    if let Err(e) = prior.validate() {
        return IntegrabilityVerdict {
            pass: false,
            diagnostic: e.to_string(),
        };
    }
    let gaussian_tail = |sigma2: f64| {
        let limit = 1.0 / (2.0 * sigma2);
        IntegrabilityVerdict {
            pass: a < limit,
            diagnostic: format!("Gaussian tail: integrable iff a < 1/(2σ²) = {limit}"),
        }
    };
    match prior {
        PriorSpec::DiscreteAtoms { atoms } => IntegrabilityVerdict {
            pass: true,
            diagnostic: format!("finite sum over {} atoms", atoms.len()),
        },
        PriorSpec::Gaussian { sigma2, .. } | PriorSpec::HalfNormal { sigma2 } => {
            gaussian_tail(*sigma2)
        }
        PriorSpec::SymmetricGaussianMixture { sigma, .. } => gaussian_tail(sigma * sigma),
        PriorSpec::TabulatedDensity {
            grid,
            density_values,
        } => {
            let integral = |g: &[f64], d: &[f64]| {
                let cells = tabulated_cells(g, d);
                let total: f64 = cells.iter().map(|c| c.1).sum();
                cells
                    .iter()
                    .map(|(u, m)| m * (a * u * u).exp())
                    .sum::<f64>()
                    / total
            };
            let fine = integral(grid, density_values);
            let coarse_grid: Vec<f64> = grid.iter().copied().step_by(2).collect();
            let coarse_vals: Vec<f64> = density_values.iter().copied().step_by(2).collect();
            let coarse = integral(&coarse_grid, &coarse_vals);
            let change = (fine - coarse).abs() / fine.abs();
            let pass = fine.is_finite() && coarse.is_finite() && change < 0.01;
            IntegrabilityVerdict {
                pass,
                diagnostic: format!(
                    "discretized integral {fine} (coarse {coarse}, relative change {change:e})"
                ),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(m: f64, sigma2: f64, n: usize) -> QuadratureTable {
        build_quadrature(&PriorSpec::Gaussian { m, sigma2 }, n).unwrap()
    }

    #[test]
    fn discrete_atoms_pass_through() {
        let t = build_quadrature(&PriorSpec::bernoulli(1.0, 0.5), 7).unwrap();
        assert_eq!(t.nodes(), &[-1.0, 1.0]);
        assert_eq!(t.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn one_point_and_bad_sizes_rejected() {
        let one = PriorSpec::DiscreteAtoms {
            atoms: vec![Atom {
                point: 2.0,
                weight: 1.0,
            }],
        };
        assert!(build_quadrature(&one, 8).is_err());
        let same = PriorSpec::DiscreteAtoms {
            atoms: vec![
                Atom {
                    point: 2.0,
                    weight: 0.5,
                },
                Atom {
                    point: 2.0,
                    weight: 0.5,
                },
            ],
        };
        assert!(build_quadrature(&same, 8).is_err());
        let g = PriorSpec::Gaussian {
            m: 0.0,
            sigma2: 1.0,
        };
        assert!(build_quadrature(&g, 0).is_err());
        assert!(build_quadrature(&g, 1).is_err());
    }

    #[test]
    fn gaussian_table_moments() {
        let (m, v) = prior_moments(&gaussian(0.0, 1.0, 64));
        assert!(m.abs() < 1e-10);
        assert!((v - 1.0).abs() < 1e-8);
        let (m, v) = prior_moments(&gaussian(2.0, 3.0, 128));
        assert!((m - 2.0).abs() < 1e-10 && (v - 3.0).abs() < 1e-8);
    }

    #[test]
    fn half_normal_mean() {
        let t = build_quadrature(&PriorSpec::HalfNormal { sigma2: 1.0 }, 128).unwrap();
        let (m, v) = prior_moments(&t);
        assert!((m - 0.797_884_560_802_865_4).abs() < 1e-6);
        assert!((v - 0.363_380_227_632_418_7).abs() < 1e-8);
        assert!(t.nodes()[0] > 0.0);
    }

    #[test]
    fn mixture_moments() {
        let t = build_quadrature(
            &PriorSpec::SymmetricGaussianMixture { m: 1.0, sigma: 1.0 },
            128,
        )
        .unwrap();
        let (m, v) = prior_moments(&t);
        assert!(m.abs() < 1e-12 && (v - 2.0).abs() < 1e-10);
    }

    #[test]
    fn bernoulli_moments() {
        for (beta, p) in [(1.0, 0.5), (2.0, 0.3), (0.5, 0.9)] {
            let t = build_quadrature(&PriorSpec::bernoulli(beta, p), 2).unwrap();
            let (m, v) = prior_moments(&t);
            assert!((m - beta * (2.0 * p - 1.0)).abs() < 1e-14);
            assert!((v - beta * beta * 4.0 * p * (1.0 - p)).abs() < 1e-14);
        }
    }

    #[test]
    fn widder_examples() {
        let b = build_quadrature(&PriorSpec::bernoulli(1.0, 0.5), 2).unwrap();
        assert!((widder_f(&b, 0.0, 0.0).unwrap().value - 1.0).abs() < 1e-15);
        assert!((widder_f(&b, 2.0, 0.0).unwrap().value - (-1.0f64).exp()).abs() < 1e-15);
        let g = gaussian(0.0, 1.0, 128);
        assert!((widder_f(&g, 1.0, 0.0).unwrap().value - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(widder_f(&g, -0.1, 0.0).is_err());
    }

    #[test]
    fn widder_stays_finite_in_log_domain() {
        let b = build_quadrature(&PriorSpec::bernoulli(1.0, 0.3), 2).unwrap();
        for &(t, y) in &[(0.0, 1e4), (0.0, -1e4), (1e6, 1e4), (1e6, 0.0)] {
            let w = widder_f(&b, t, y).unwrap();
            assert!(w.log_value.is_finite());
            let g = posterior_mean_g(&b, t, y).unwrap();
            assert!(g.is_finite());
        }
    }

    #[test]
    fn posterior_mean_examples() {
        let b = build_quadrature(&PriorSpec::bernoulli(1.0, 0.5), 2).unwrap();
        for t in [0.0, 0.3, 5.0] {
            assert!(posterior_mean_g(&b, t, 0.0).unwrap().abs() < 1e-16);
            assert!(
                (posterior_mean_g(&b, t, 0.5).unwrap() - 0.462_117_157_260_009_76).abs() < 1e-15
            );
        }
        let g = gaussian(0.0, 1.0, 128);
        assert!((posterior_mean_g(&g, 1.0, 2.0).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn posterior_variance_examples() {
        let b = build_quadrature(&PriorSpec::bernoulli(1.5, 0.5), 2).unwrap();
        assert!((posterior_var_h(&b, 0.7, 0.0).unwrap() - 2.25).abs() < 1e-14);
        let g = gaussian(0.0, 1.0, 128);
        for y in [-2.0, 0.0, 1.5] {
            assert!((posterior_var_h(&g, 3.0, y).unwrap() - 0.25).abs() < 1e-10);
        }
        let h = build_quadrature(&PriorSpec::HalfNormal { sigma2: 1.0 }, 128).unwrap();
        assert!((posterior_var_h(&h, 0.0, 0.0).unwrap() - 0.363_380_227_632_418_7).abs() < 1e-8);
    }

    #[test]
    fn posterior_expectation_examples() {
        let g = gaussian(0.0, 1.0, 128);
        assert!((posterior_expectation(&g, |_| 1.0, 0.4, 0.7).unwrap() - 1.0).abs() < 1e-15);
        assert!((posterior_expectation(&g, |u| u * u, 1.0, 0.0).unwrap() - 0.5).abs() < 1e-10);
        let a = posterior_expectation(&g, |u| u, 0.6, -0.8).unwrap();
        let b = posterior_mean_g(&g, 0.6, -0.8).unwrap();
        assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
        let err = posterior_expectation(&g, |u| if u > 3.0 { f64::NAN } else { u }, 0.0, 0.0);
        assert!(matches!(err, Err(Error::NonFinite { .. })));
    }

    #[test]
    fn posterior_measure_examples() {
        let b = build_quadrature(&PriorSpec::bernoulli(1.0, 0.3), 2).unwrap();
        let same = posterior_measure(&b, 0.0, 0.0).unwrap();
        for (a, c) in same.weights().iter().zip(b.weights()) {
            assert!((a - c).abs() < 1e-15);
        }
        let y = 0.5 * (7.0f64 / 3.0).ln();
        let eq = posterior_measure(&b, 0.0, y).unwrap();
        assert!((eq.weights()[0] - 0.5).abs() < 1e-14);
        assert!((eq.weights()[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn posterior_composes_additively() {
        let g = gaussian(0.3, 2.0, 64);
        let once = posterior_measure(&posterior_measure(&g, 0.4, 0.9).unwrap(), 1.1, -0.2).unwrap();
        let direct = posterior_measure(&g, 1.5, 0.7).unwrap();
        for (a, b) in once.weights().iter().zip(direct.weights()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn integrability_verdicts() {
        assert!(check_integrability(&PriorSpec::bernoulli(3.0, 0.5), 100.0).pass);
        let g = PriorSpec::Gaussian {
            m: 0.0,
            sigma2: 1.0,
        };
        assert!(check_integrability(&g, 0.25).pass);
        assert!(!check_integrability(&g, 0.75).pass);
        assert!(!check_integrability(&PriorSpec::HalfNormal { sigma2: 2.0 }, 0.3).pass);
        assert!(check_integrability(&PriorSpec::HalfNormal { sigma2: 2.0 }, 0.2).pass);
        let mix = PriorSpec::SymmetricGaussianMixture { m: 1.0, sigma: 1.0 };
        assert!(check_integrability(&mix, 0.49).pass);
        assert!(!check_integrability(&mix, 0.51).pass);
    }

    #[test]
    fn tabulated_density_integrability_and_table() {
        let grid: Vec<f64> = (0..=200).map(|i| -1.0 + i as f64 * 0.01).collect();
        let dens: Vec<f64> = grid.iter().map(|u| 1.0 - u * u).collect();
        let spec = PriorSpec::TabulatedDensity {
            grid,
            density_values: dens,
        };
        let t = build_quadrature(&spec, 10).unwrap();
        let (m, v) = prior_moments(&t);
        assert!(m.abs() < 1e-12);
        assert!((v - 0.2).abs() < 1e-3);
        assert_eq!(spec.support_bounds(), (-1.0, 1.0));
        assert!(spec.is_symmetric());
        assert!(check_integrability(&spec, 2.0).pass);
    }

    #[test]
    fn json_roundtrip_and_errors() {
        let spec =
            PriorSpec::from_json(r#"{"kind": "gaussian", "m": 1.0, "sigma2": 2.0}"#).unwrap();
        assert_eq!(
            spec,
            PriorSpec::Gaussian {
                m: 1.0,
                sigma2: 2.0
            }
        );
        let err = PriorSpec::from_json(r#"{"kind": "gaussian", "m": 1.0}"#).unwrap_err();
        assert!(err.to_string().contains("sigma2"));
        let err = PriorSpec::from_json(r#"{"kind": "half_normal", "sigma2": -1.0}"#).unwrap_err();
        assert!(err.to_string().contains("sigma2"));
        let spec = PriorSpec::from_json(
            r#"{"kind": "discrete_atoms", "atoms": [{"point": -1, "weight": 0.5}, {"point": 1, "weight": 0.5}]}"#,
        )
        .unwrap();
        assert_eq!(spec, PriorSpec::bernoulli(1.0, 0.5));
    }
}
