//! Backward-in-time obstacle solver for
//! `min(−∂v − ½Ψ²D²v − (c − Ψ²), −v) = 0`, region extraction and
//! structural checks.

mod checks;
mod lcp;
mod regions;

pub use checks::*;
pub use regions::*;

use std::hash::{Hash, Hasher};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dispersion::{psi_grid_extended, write_json, PsiGrid};
use crate::error::{invalid, Error, Result};
use crate::numerics::linspace;
use crate::prior::{prior_moments, QuadratureTable};
use lcp::{policy_iteration, psor, Tridiagonal, Workspace};

/// Per-step solver for the discrete variational inequality.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ImplicitPsor,
    #[default]
    PolicyIteration,
}

pub const DEFAULT_OBSTACLE_TOL: f64 = 1e-10;
pub const DEFAULT_OMEGA: f64 = 1.5;
pub const DEFAULT_MAX_SWEEPS: usize = 10_000;
pub const DEFAULT_N_T: usize = 400;
pub const DEFAULT_N_X: usize = 401;
/// Half-width of the spatial window in prior standard deviations.
pub const DOMAIN_SDS: f64 = 6.0;
/// Relative safety margin added to the horizon crossing.
pub const HORIZON_MARGIN: f64 = 0.1;

fn default_obstacle_tol() -> f64 {
    DEFAULT_OBSTACLE_TOL
}
fn default_omega() -> f64 {
    DEFAULT_OMEGA
}
fn default_max_sweeps() -> usize {
    DEFAULT_MAX_SWEEPS
}

/// Grid and scheme parameters. `n_t` counts time steps (`n_t + 1` nodes),
/// `n_x` counts spatial nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub n_t: usize,
    pub n_x: usize,
    pub t_max: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    #[serde(default = "default_obstacle_tol")]
    pub obstacle_tol: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
}

impl SolverConfig {
    pub fn new(n_t: usize, n_x: usize, t_max: f64, x_lo: f64, x_hi: f64) -> Self {
        Self {
            n_t,
            n_x,
            t_max,
            x_lo,
            x_hi,
            obstacle_tol: DEFAULT_OBSTACLE_TOL,
            scheme: Scheme::default(),
            omega: DEFAULT_OMEGA,
            max_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }

    /// Checks the grid invariants; `support` is the closed interval the
    /// spatial window must lie in.
    pub fn validate(&self, support: (f64, f64)) -> Result<()> {
        if self.n_t < 8 || self.n_x < 8 {
            return Err(invalid(
                "n_t/n_x",
                format!("need >= 8, got {}/{}", self.n_t, self.n_x),
            ));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(invalid(
                "t_max",
                format!("must be finite and > 0, got {}", self.t_max),
            ));
        }
        if !(self.x_lo < self.x_hi) || !self.x_lo.is_finite() || !self.x_hi.is_finite() {
            return Err(invalid("x_lo/x_hi", "need finite x_lo < x_hi"));
        }
        if self.x_lo < support.0 || self.x_hi > support.1 {
            return Err(invalid(
                "x_lo/x_hi",
                format!(
                    "window [{}, {}] leaves the support interval [{}, {}]",
                    self.x_lo, self.x_hi, support.0, support.1
                ),
            ));
        }
        if !(self.obstacle_tol > 0.0) {
            return Err(invalid("obstacle_tol", "must be > 0"));
        }
        if !(self.omega > 0.0 && self.omega < 2.0) {
            return Err(invalid("omega", "must lie in (0, 2)"));
        }
        if self.max_sweeps == 0 {
            return Err(invalid("max_sweeps", "must be positive"));
        }
        Ok(())
    }

    pub fn t_nodes(&self) -> Vec<f64> {
        linspace(0.0, self.t_max, self.n_t + 1)
    }

    pub fn x_nodes(&self) -> Vec<f64> {
        linspace(self.x_lo, self.x_hi, self.n_x)
    }

    pub fn dt(&self) -> f64 {
        self.t_max / self.n_t as f64
    }

    pub fn dx(&self) -> f64 {
        (self.x_hi - self.x_lo) / (self.n_x - 1) as f64
    }

    /// Region classification threshold, `10 · obstacle_tol`.
    pub fn zero_tol(&self) -> f64 {
        10.0 * self.obstacle_tol
    }

    /// Stable digest of the serialized configuration.
    pub fn hash_hex(&self) -> String {
        let mut h = std::hash::DefaultHasher::new();
        serde_json::to_string(self).unwrap_or_default().hash(&mut h);
        format!("{:016x}", h.finish())
    }
}

/// Spatial window `prior mean ± 6 sd`, intersected with the closed support.
pub fn default_window(table: &QuadratureTable) -> (f64, f64) {
    let (mean, var) = prior_moments(table);
    let sd = var.sqrt();
    let (lo, hi) = table.support_bounds();
    (
        (mean - DOMAIN_SDS * sd).max(lo),
        (mean + DOMAIN_SDS * sd).min(hi),
    )
}

/// Upper end of the time range searched for the crossing `sup Ψ² = c`.
pub fn scan_limit(c: f64) -> f64 {
    (4.0 / c.sqrt()).max(1.0)
}

/// Outcome of [`choose_horizon`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Horizon {
    /// First time with `sup_x Ψ² ≤ c`, linearly interpolated between grid
    /// times; `None` if not reached in the scanned range.
    pub crossing: Option<f64>,
    /// `crossing · (1 + HORIZON_MARGIN)`, or the scan limit.
    pub horizon: f64,
    pub warning: Option<String>,
}

/// Locates the time from which `Ψ² ≤ c` on the whole window.
pub fn choose_horizon(psi: &PsiGrid, c: f64) -> Horizon {
    let excess: Vec<f64> = (0..psi.t_nodes.len())
        .map(|i| psi.row_sup_sq(i) - c)
        .collect();
    match excess.iter().position(|&e| e <= 0.0) {
        Some(0) => Horizon {
            crossing: Some(psi.t_nodes[0]),
            horizon: psi.t_nodes[0],
            warning: None,
        },
        Some(i) => {
            let (t0, t1) = (psi.t_nodes[i - 1], psi.t_nodes[i]);
            let (e0, e1) = (excess[i - 1], excess[i]);
            let cross = t0 + (t1 - t0) * e0 / (e0 - e1);
            Horizon {
                crossing: Some(cross),
                horizon: cross * (1.0 + HORIZON_MARGIN),
                warning: None,
            }
        }
        None => {
            let last = *psi.t_nodes.last().unwrap_or(&0.0);
            Horizon {
                crossing: None,
                horizon: last,
                warning: Some(format!(
                    "sup Ψ² stays above c = {c} up to t = {last}; horizon set to the scan limit"
                )),
            }
        }
    }
}

/// Scans `Ψ` on `[0, scan_limit(c)] × window` and applies [`choose_horizon`].
pub fn scan_horizon(table: &QuadratureTable, c: f64, window: (f64, f64)) -> Result<Horizon> {
    if !(c > 0.0) {
        return Err(invalid("cost_c", "must be > 0"));
    }
    let t = linspace(0.0, scan_limit(c), 401);
    let x = linspace(window.0, window.1, 201);
    Ok(choose_horizon(&psi_grid_extended(table, &t, &x)?, c))
}

/// Default configuration for a prior: window from [`default_window`],
/// horizon from [`scan_horizon`] (or `1/√c` when immediate stopping is
/// optimal).
pub fn auto_config(
    table: &QuadratureTable,
    c: f64,
    n_t: usize,
    n_x: usize,
) -> Result<(SolverConfig, Horizon)> {
    let (lo, hi) = default_window(table);
    let horizon = scan_horizon(table, c, (lo, hi))?;
    let t_max = if horizon.horizon > 0.0 {
        horizon.horizon
    } else {
        1.0 / c.sqrt()
    };
    Ok((SolverConfig::new(n_t, n_x, t_max, lo, hi), horizon))
}

/// How the terminal row was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    /// `Ψ² ≤ c` on the last row, so `v(T_max, ·) = 0`.
    Zero,
    /// Stationary obstacle solution with `Ψ` frozen at `T_max`.
    Stationary,
    /// `c ≥ sup Ψ²(0, ·)`: the whole grid is zero.
    ShortCircuit,
}

/// Bookkeeping attached to a solve.
#[derive(Clone, Debug, Serialize)]
pub struct SolverMetadata {
    pub config_hash: String,
    pub scheme: Scheme,
    pub terminal: Terminal,
    pub total_iterations: usize,
    pub max_step_iterations: usize,
    /// Time rows on which `Ψ² > c` at a window edge.
    pub boundary_flag_rows: usize,
    pub clamped_psi_points: usize,
}

/// Value function on the solver lattice.
#[derive(Clone, Debug, Serialize)]
pub struct ValueGrid {
    pub t_nodes: Vec<f64>,
    pub x_nodes: Vec<f64>,
    /// `values[i][j] = v(t_i, x_j)`.
    pub values: Vec<Vec<f64>>,
    /// `Ψ` on the same lattice.
    pub psi: Vec<Vec<f64>>,
    pub cost: f64,
    pub config: SolverConfig,
    pub metadata: SolverMetadata,
}

impl ValueGrid {
    pub fn zero_tol(&self) -> f64 {
        self.config.zero_tol()
    }

    pub fn dx(&self) -> f64 {
        self.config.dx()
    }

    pub fn dt(&self) -> f64 {
        self.config.dt()
    }

    /// `v(t_i, x_j) ≥ −zero_tol`.
    pub fn is_stopped(&self, i: usize, j: usize) -> bool {
        self.values[i][j] >= -self.zero_tol()
    }

    /// Index of the node nearest to `x`.
    pub fn nearest_x(&self, x: f64) -> usize {
        let j = ((x - self.config.x_lo) / self.dx()).round();
        j.clamp(0.0, (self.x_nodes.len() - 1) as f64) as usize
    }

    /// `v(0, x)` by linear interpolation in `x`.
    pub fn initial_value_at(&self, x: f64) -> f64 {
        let n = self.x_nodes.len();
        let s = ((x - self.config.x_lo) / self.dx()).clamp(0.0, (n - 1) as f64);
        let j = (s.floor() as usize).min(n - 2);
        let w = s - j as f64;
        (1.0 - w) * self.values[0][j] + w * self.values[0][j + 1]
    }

    /// Writes `v` as CSV: header of x nodes, first column t.
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

    /// Writes configuration and metadata as JSON.
    pub fn write_metadata_json(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Meta<'a> {
            cost: f64,
            config: &'a SolverConfig,
            metadata: &'a SolverMetadata,
        }
        write_json(
            &Meta {
                cost: self.cost,
                config: &self.config,
                metadata: &self.metadata,
            },
            path,
        )
    }
}

fn same_nodes(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(p, q)| (p - q).abs() <= 1e-12 * p.abs().max(q.abs()).max(1.0))
}

/// Fills `a` with `I + dt·½Ψ²(−D²)` on interior rows and identity rows at
/// the window edges (zero curvature there).
fn assemble_step(a: &mut Tridiagonal, psi: &[f64], dt: f64, dx: f64) {
    let n = psi.len();
    let r = dt / (dx * dx);
    for j in 0..n {
        if j == 0 || j == n - 1 {
            a.lower[j] = 0.0;
            a.diag[j] = 1.0;
            a.upper[j] = 0.0;
        } else {
            let k = 0.5 * psi[j] * psi[j] * r;
            a.lower[j] = -k;
            a.diag[j] = 1.0 + 2.0 * k;
            a.upper[j] = -k;
        }
    }
}

struct StepSolver {
    scheme: Scheme,
    omega: f64,
    tol: f64,
    max_sweeps: usize,
    ws: Workspace,
}

impl StepSolver {
    fn solve(
        &mut self,
        a: &Tridiagonal,
        b: &[f64],
        v: &mut [f64],
        stop: &mut [bool],
    ) -> Result<usize> {
        match self.scheme {
            Scheme::PolicyIteration => policy_iteration(a, b, v, stop, &mut self.ws),
            Scheme::ImplicitPsor => {
                let it = psor(a, b, v, self.omega, self.tol, self.max_sweeps)?;
                for (s, &x) in stop.iter_mut().zip(v.iter()) {
                    *s = x == 0.0;
                }
                Ok(it)
            }
        }
    }
}

/// Stationary problem `min(c − Ψ² − ½Ψ²(−D²)v, −v) = 0` with `v = 0` at the
/// window edges.
fn stationary(psi: &[f64], c: f64, dx: f64, solver: &mut StepSolver) -> Result<(Vec<f64>, usize)> {
    let n = psi.len();
    let mut a = Tridiagonal::with_len(n);
    let mut b = vec![0.0; n];
    let h2 = dx * dx;
    for j in 1..n - 1 {
        let k = 0.5 * psi[j] * psi[j] / h2;
        a.lower[j] = -k;
        a.diag[j] = 2.0 * k;
        a.upper[j] = -k;
        b[j] = c - psi[j] * psi[j];
    }
    a.diag[0] = 1.0;
    a.diag[n - 1] = 1.0;
    let mut stop: Vec<bool> = psi.iter().map(|p| p * p <= c).collect();
    stop[0] = true;
    stop[n - 1] = true;
    let mut v = vec![0.0; n];
    // Without the identity term PSOR barely contracts; this row always
    // uses policy iteration.
    let it = policy_iteration(&a, &b, &mut v, &mut stop, &mut solver.ws)?;
    Ok((v, it))
}

/// Backward induction on the lattice of `psi`, which must match the nodes
/// of `config`.
pub fn solve_value(psi: &PsiGrid, c: f64, config: &SolverConfig) -> Result<ValueGrid> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(invalid(
            "cost_c",
            format!("must be finite and > 0, got {c}"),
        ));
    }
    config.validate((config.x_lo, config.x_hi))?;
    let t_nodes = config.t_nodes();
    let x_nodes = config.x_nodes();
    if !same_nodes(&t_nodes, &psi.t_nodes) || !same_nodes(&x_nodes, &psi.x_nodes) {
        return Err(Error::GridMismatch(
            "Ψ lattice does not match the solver configuration".into(),
        ));
    }
    let (nt, nx) = (t_nodes.len(), x_nodes.len());
    let (dt, dx) = (config.dt(), config.dx());
    let mut values = vec![vec![0.0; nx]; nt];
    let boundary_flag_rows = psi
        .values
        .iter()
        .filter(|row| row[0] * row[0] > c || row[nx - 1] * row[nx - 1] > c)
        .count();
    let mut meta = SolverMetadata {
        config_hash: config.hash_hex(),
        scheme: config.scheme,
        terminal: Terminal::Zero,
        total_iterations: 0,
        max_step_iterations: 0,
        boundary_flag_rows,
        clamped_psi_points: psi.clamped_points,
    };
    let mut solver = StepSolver {
        scheme: config.scheme,
        omega: config.omega,
        tol: config.obstacle_tol,
        max_sweeps: config.max_sweeps,
        ws: Workspace::default(),
    };

    // Ψ² equal to c up to rounding (constant Ψ² = c) stops everywhere.
    if psi.row_sup_sq(0) <= c * (1.0 + 1e-12) {
        meta.terminal = Terminal::ShortCircuit;
    } else {
        if psi.row_sup_sq(nt - 1) > c {
            let (v, it) = stationary(&psi.values[nt - 1], c, dx, &mut solver)?;
            values[nt - 1] = v;
            meta.terminal = Terminal::Stationary;
            meta.total_iterations += it;
        }
        let mut a = Tridiagonal::with_len(nx);
        let mut b = vec![0.0; nx];
        let mut stop: Vec<bool> = values[nt - 1].iter().map(|&v| v == 0.0).collect();
        for i in (0..nt - 1).rev() {
            let p = &psi.values[i];
            assemble_step(&mut a, p, dt, dx);
            for j in 0..nx {
                b[j] = values[i + 1][j] + dt * (c - p[j] * p[j]);
            }
            let mut v = values[i + 1].clone();
            let it = solver.solve(&a, &b, &mut v, &mut stop)?;
            meta.total_iterations += it;
            meta.max_step_iterations = meta.max_step_iterations.max(it);
            values[i] = v;
        }
    }
    Ok(ValueGrid {
        t_nodes,
        x_nodes,
        values,
        psi: psi.values.clone(),
        cost: c,
        config: config.clone(),
        metadata: meta,
    })
}

/// Builds the extended `Ψ` lattice for `config` and solves.
pub fn solve_prior(table: &QuadratureTable, c: f64, config: &SolverConfig) -> Result<ValueGrid> {
    config.validate(table.support_bounds())?;
    let psi = psi_grid_extended(table, &config.t_nodes(), &config.x_nodes())?;
    solve_value(&psi, c, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::{build_quadrature, PriorSpec};

    fn table(prior: PriorSpec) -> QuadratureTable {
        build_quadrature(&prior, 128).unwrap()
    }

    #[test]
    fn horizon_examples() {
        let g = table(PriorSpec::Gaussian {
            m: 0.0,
            sigma2: 1.0,
        });
        let h = scan_horizon(&g, 0.25, default_window(&g)).unwrap();
        assert!((h.crossing.unwrap() - 1.0).abs() < 1e-3, "{h:?}");
        assert!((h.horizon - 1.1).abs() < 2e-3);
        let b = table(PriorSpec::bernoulli(1.0, 0.5));
        let h = scan_horizon(&b, 1.0, default_window(&b)).unwrap();
        assert_eq!(h.crossing, Some(0.0));
        let h = scan_horizon(&b, 0.25, default_window(&b)).unwrap();
        assert!(h.crossing.is_none() && h.warning.is_some());
        let m = table(PriorSpec::SymmetricGaussianMixture { m: 1.0, sigma: 1.0 });
        let h = scan_horizon(&m, 0.04, default_window(&m)).unwrap();
        let tc = h.crossing.unwrap();
        assert!((4.0..=4.855).contains(&tc), "{tc}");
    }

    #[test]
    fn config_validation() {
        let mut cfg = SolverConfig::new(4, 50, 1.0, -1.0, 1.0);
        assert!(cfg.validate((-1.0, 1.0)).is_err());
        cfg.n_t = 10;
        assert!(cfg.validate((-1.0, 1.0)).is_ok());
        assert!(cfg.validate((-0.5, 1.0)).is_err());
        cfg.omega = 2.5;
        assert!(cfg.validate((-1.0, 1.0)).is_err());
        let json = r#"{"n_t": 10, "n_x": 11, "t_max": 1, "x_lo": -1, "x_hi": 1, "bogus": 3}"#;
        let err = serde_json::from_str::<SolverConfig>(json)
            .unwrap_err()
            .to_string();
        assert!(err.contains("bogus"));
    }

    #[test]
    fn bernoulli_trivial_case_is_zero() {
        let b = table(PriorSpec::bernoulli(1.0, 0.5));
        let (cfg, _) = auto_config(&b, 1.0, 20, 41).unwrap();
        let grid = solve_prior(&b, 1.0, &cfg).unwrap();
        assert_eq!(grid.metadata.terminal, Terminal::ShortCircuit);
        assert!(grid.values.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn gaussian_value_is_flat_in_x() {
        let g = table(PriorSpec::Gaussian {
            m: 0.0,
            sigma2: 1.0,
        });
        let (cfg, _) = auto_config(&g, 0.25, 200, 101).unwrap();
        let grid = solve_prior(&g, 0.25, &cfg).unwrap();
        for row in &grid.values {
            let (lo, hi) = row
                .iter()
                .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
            assert!(hi - lo <= 1e-10);
        }
        assert!(
            (grid.values[0][50] + 0.25).abs() < 5e-3,
            "{}",
            grid.values[0][50]
        );
    }

    #[test]
    fn schemes_agree() {
        let m = table(PriorSpec::SymmetricGaussianMixture { m: 1.0, sigma: 1.0 });
        let (mut cfg, _) = auto_config(&m, 0.04, 40, 61).unwrap();
        let a = solve_prior(&m, 0.04, &cfg).unwrap();
        cfg.scheme = Scheme::ImplicitPsor;
        let b = solve_prior(&m, 0.04, &cfg).unwrap();
        let worst = a
            .values
            .iter()
            .flatten()
            .zip(b.values.iter().flatten())
            .fold(0.0f64, |w, (p, q)| w.max((p - q).abs()));
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn mismatched_lattice_is_rejected() {
        let b = table(PriorSpec::bernoulli(1.0, 0.5));
        let cfg = SolverConfig::new(10, 21, 1.0, -1.0, 1.0);
        let psi = psi_grid_extended(&b, &cfg.t_nodes(), &linspace(-1.0, 1.0, 11)).unwrap();
        assert!(matches!(
            solve_value(&psi, 0.25, &cfg),
            Err(Error::GridMismatch(_))
        ));
    }
}
