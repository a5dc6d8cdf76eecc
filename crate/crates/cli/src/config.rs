//! Run configuration: one JSON document, resolved against defaults and
//! written back as `resolved_config.json`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use driftstop_core::montecarlo::{default_horizon, SimConfig, DEFAULT_DT, DEFAULT_N_PATHS};
use driftstop_core::prior::{build_quadrature, PriorSpec, QuadratureTable, DEFAULT_NODES};
use driftstop_core::stopping_solver::{
    auto_config, Horizon, Scheme, SolverConfig, DEFAULT_N_T, DEFAULT_N_X,
};

use crate::CliError;

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_EXPORT_PATHS: usize = 100;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    pub n_t: Option<usize>,
    pub n_x: Option<usize>,
    pub t_max: Option<f64>,
    pub x_lo: Option<f64>,
    pub x_hi: Option<f64>,
    pub obstacle_tol: Option<f64>,
    pub scheme: Option<Scheme>,
    pub omega: Option<f64>,
    pub max_sweeps: Option<usize>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimOverrides {
    pub n_paths: Option<usize>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub seed: Option<u64>,
    /// Paths written to `paths.csv` by `simulate`.
    pub export_paths: Option<usize>,
}

/// Stopping rule examined by `verify`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicySpec {
    /// Read `boundary.csv` from the output directory.
    #[default]
    SolverBoundary,
    StopAtZero,
    /// `τ*` for Gaussian priors, the band `±a` for two-point priors.
    ClosedForm,
    FixedTime(f64),
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyOptions {
    #[serde(default)]
    pub policy: PolicySpec,
    pub shifts: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiOptions {
    /// `(t, y)` points for the residual study; `t > 0`.
    pub residual_points: Option<Vec<(f64, f64)>>,
    pub residual_step: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub prior: PriorSpec,
    pub cost_c: f64,
    pub quadrature_nodes: Option<usize>,
    #[serde(default)]
    pub solver: SolverOverrides,
    #[serde(default)]
    pub sim: SimOverrides,
    #[serde(default)]
    pub verify: VerifyOptions,
    #[serde(default)]
    pub psi: PsiOptions,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses and validates; errors name the offending key.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::input(format!("config error at `{path}`: {}", e.inner()))
        })?;
        cfg.prior
            .validate()
            .map_err(|e| CliError::input(format!("config error at `prior`: {e}")))?;
        if !(cfg.cost_c > 0.0 && cfg.cost_c.is_finite()) {
            return Err(CliError::input(format!(
                "config error at `cost_c`: must be finite and > 0, got {}",
                cfg.cost_c
            )));
        }
        Ok(cfg)
    }
}

/// Everything a command needs, with all defaults filled in.
#[derive(Clone, Debug, Serialize)]
pub struct Resolved {
    pub prior: PriorSpec,
    pub cost_c: f64,
    pub quadrature_nodes: usize,
    pub solver: SolverConfig,
    pub horizon_scan: Horizon,
    pub sim: SimConfig,
    pub export_paths: usize,
    pub verify: VerifyOptions,
    pub residual_points: Vec<(f64, f64)>,
    pub residual_step: f64,
    pub output_dir: PathBuf,
    #[serde(skip)]
    pub table: QuadratureTable,
}

pub fn resolve(
    cfg: RunConfig,
    out: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<Resolved, CliError> {
    let output_dir = out
        .or(cfg.output_dir.clone())
        .ok_or_else(|| CliError::input("no output directory: pass --out or set `output_dir`"))?;
    let nodes = cfg.quadrature_nodes.unwrap_or(DEFAULT_NODES);
    let table = build_quadrature(&cfg.prior, nodes)?;
    let c = cfg.cost_c;
    let s = &cfg.solver;
    let (mut solver, horizon_scan) = auto_config(
        &table,
        c,
        s.n_t.unwrap_or(DEFAULT_N_T),
        s.n_x.unwrap_or(DEFAULT_N_X),
    )?;
    if let Some(v) = s.t_max {
        solver.t_max = v;
    }
    if let Some(v) = s.x_lo {
        solver.x_lo = v;
    }
    if let Some(v) = s.x_hi {
        solver.x_hi = v;
    }
    if let Some(v) = s.obstacle_tol {
        solver.obstacle_tol = v;
    }
    if let Some(v) = s.scheme {
        solver.scheme = v;
    }
    if let Some(v) = s.omega {
        solver.omega = v;
    }
    if let Some(v) = s.max_sweeps {
        solver.max_sweeps = v;
    }
    solver.validate(table.support_bounds())?;

    let dt = cfg.sim.dt.unwrap_or(DEFAULT_DT);
    let sim = SimConfig::new(
        cfg.sim.n_paths.unwrap_or(DEFAULT_N_PATHS),
        dt,
        cfg.sim
            .horizon
            .unwrap_or_else(|| default_horizon(&horizon_scan, c, dt)),
        seed.or(cfg.sim.seed).unwrap_or(DEFAULT_SEED),
    );
    sim.validate()?;

    let residual_points = match &cfg.psi.residual_points {
        Some(p) => p.clone(),
        None => {
            // Immediate stopping leaves a degenerate solver window.
            let t_max = if solver.t_max >= 1.0 {
                solver.t_max
            } else {
                1.0
            };
            [0.25, 0.5, 1.0]
                .iter()
                .flat_map(|f| [-1.0, 0.0, 1.0].map(|y| (f * t_max, y)))
                .collect()
        }
    };
    let residual_step = cfg.psi.residual_step.unwrap_or(0.02);
    for &(t, _) in &residual_points {
        if t.is_nan() || t <= residual_step {
            return Err(CliError::input(format!(
                "config error at `psi.residual_points`: t = {t} must exceed residual_step = {residual_step}"
            )));
        }
    }

    Ok(Resolved {
        prior: cfg.prior,
        cost_c: c,
        quadrature_nodes: nodes,
        solver,
        horizon_scan,
        sim,
        export_paths: cfg.sim.export_paths.unwrap_or(DEFAULT_EXPORT_PATHS),
        verify: cfg.verify,
        residual_points,
        residual_step,
        output_dir,
        table,
    })
}
