//! Exact simulation of the drift/observation pair and policy evaluation.
//!
//! Path `p` draws all its randomness from a ChaCha stream keyed by
//! `(seed, p)`, so batches are reproducible under any thread schedule and
//! policies evaluated with the same `SimConfig` share paths.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numerics::pairwise_sum;
use crate::prior::{prior_moments, QuadratureTable};
use crate::stopping_solver::{default_window, scan_horizon, scan_limit, BoundaryCurve, Horizon};

/// Paths whose stopping time hits the horizon above this fraction trigger a
/// warning.
pub const CAP_WARNING_FRACTION: f64 = 0.01;

pub const DEFAULT_N_PATHS: usize = 100_000;
pub const DEFAULT_DT: f64 = 0.01;

/// `2·T_c` from a horizon scan (at least `dt`), or twice the scan limit when
/// no crossing was found.
pub fn default_horizon(h: &Horizon, c: f64, dt: f64) -> f64 {
    match h.crossing {
        Some(tc) => (2.0 * tc).max(dt),
        None => 2.0 * scan_limit(c),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(n_paths: usize, dt: f64, horizon: f64, seed: u64) -> Self {
        Self {
            n_paths,
            dt,
            horizon,
            seed,
        }
    }

    /// Horizon `2·T_c` from the crossing of `sup Ψ² = c`; twice the scan
    /// limit when no crossing is found, and one step when `T_c = 0`.
    pub fn with_default_horizon(
        table: &QuadratureTable,
        c: f64,
        n_paths: usize,
        dt: f64,
        seed: u64,
    ) -> Result<Self> {
        let h = scan_horizon(table, c, default_window(table))?;
        Ok(Self::new(n_paths, dt, default_horizon(&h, c, dt), seed))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 1 {
            return Err(invalid("n_paths", "must be ≥ 1"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", "must be a positive number"));
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return Err(invalid("horizon", "must be finite and ≥ dt"));
        }
        Ok(())
    }

    /// Number of steps; the last monitored time is `n_steps·dt ≈ horizon`.
    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round().max(1.0) as usize
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps()).map(|k| k as f64 * self.dt).collect()
    }
}

/// Sample mean with its standard error `sd / √n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std_error: f64::NAN,
            };
        }
        let mean = pairwise_sum(xs) / n as f64;
        if n == 1 {
            return Self {
                mean,
                std_error: 0.0,
            };
        }
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise_sum(&dev) / (n - 1) as f64;
        Self {
            mean,
            std_error: (var / n as f64).sqrt(),
        }
    }

    /// Whether `value` lies within `k` standard errors of the mean.
    pub fn covers(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error
    }
}

// ---------------------------------------------------------------------------
// Paths

struct PathRng {
    rng: ChaCha8Rng,
}

impl PathRng {
    fn new(seed: u64, path: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path as u64);
        Self { rng }
    }

    fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

/// Inverse-CDF sampling from the table's masses.
struct Sampler {
    cumulative: Vec<f64>,
    nodes: Vec<f64>,
}

impl Sampler {
    fn new(table: &QuadratureTable) -> Self {
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = table
            .weights()
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        if let Some(last) = cumulative.last_mut() {
            *last = f64::INFINITY;
        }
        Self {
            cumulative,
            nodes: table.nodes().to_vec(),
        }
    }

    fn draw(&self, u: f64) -> f64 {
        self.nodes[self.cumulative.partition_point(|&c| c <= u)]
    }
}

/// Count, mean and centred sum of squares; merged in a fixed order so that
/// chunked reductions are deterministic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                n: 0,
                mean: 0.0,
                m2: 0.0,
            };
        }
        let mean = pairwise_sum(xs) / n as f64;
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        Self {
            n,
            mean,
            m2: pairwise_sum(&dev),
        }
    }

    /// Chan et al. pairwise update.
    pub fn merge(self, other: Self) -> Self {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let w = other.n as f64 / n as f64;
        Self {
            n,
            mean: self.mean + delta * w,
            m2: self.m2 + other.m2 + delta * delta * self.n as f64 * w,
        }
    }

    pub fn estimate(&self) -> Estimate {
        match self.n {
            0 => Estimate {
                mean: f64::NAN,
                std_error: f64::NAN,
            },
            1 => Estimate {
                mean: self.mean,
                std_error: 0.0,
            },
            n => Estimate {
                mean: self.mean,
                std_error: (self.m2 / (n - 1) as f64 / n as f64).sqrt(),
            },
        }
    }
}

/// Simulated paths on the monitoring grid, stored path-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PathBatch {
    /// Index of the first path (paths are keyed by index).
    pub first_path: usize,
    pub times: Vec<f64>,
    pub x_true: Vec<f64>,
    pub y: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub psi: Vec<f64>,
}

impl PathBatch {
    pub fn n_paths(&self) -> usize {
        self.x_true.len()
    }

    fn row(&self, p: usize) -> std::ops::Range<usize> {
        let n = self.times.len();
        p * n..(p + 1) * n
    }

    pub fn x_hat_path(&self, p: usize) -> &[f64] {
        &self.x_hat[self.row(p)]
    }

    pub fn psi_path(&self, p: usize) -> &[f64] {
        &self.psi[self.row(p)]
    }

    /// Per monitored time, moments of `X̂`, `Ψ(t, X̂) + ∫₀^t Ψ² ds` and
    /// `∫₀^t Ψ² ds` (trapezoid) across the batch.
    pub fn monitor_moments(&self) -> Vec<[Moments; 3]> {
        let n = self.n_paths();
        let m = self.times.len();
        let mut integral = vec![0.0; n * m];
        for p in 0..n {
            let psi = self.psi_path(p);
            let row = &mut integral[p * m..(p + 1) * m];
            for k in 1..m {
                let h = self.times[k] - self.times[k - 1];
                row[k] = row[k - 1] + 0.5 * h * (psi[k - 1].powi(2) + psi[k].powi(2));
            }
        }
        (0..m)
            .map(|k| {
                let col = |v: &[f64]| (0..n).map(|p| v[p * m + k]).collect::<Vec<f64>>();
                let diss = col(&integral);
                let energy: Vec<f64> = col(&self.psi)
                    .iter()
                    .zip(&diss)
                    .map(|(a, b)| a + b)
                    .collect();
                [
                    Moments::from_samples(&col(&self.x_hat)),
                    Moments::from_samples(&energy),
                    Moments::from_samples(&diss),
                ]
            })
            .collect()
    }

    pub fn monitor_summary(&self) -> Vec<MonitorRow> {
        monitor_rows(&self.times, &self.monitor_moments())
    }

    /// Long format: `path, x_true, t, y, x_hat, psi`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["path", "x_true", "t", "y", "x_hat", "psi"])?;
        self.append_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Appends the rows of this batch to an open writer.
    pub fn append_csv<W: std::io::Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        for p in 0..self.n_paths() {
            for (k, i) in self.row(p).enumerate() {
                w.write_record([
                    (self.first_path + p).to_string(),
                    self.x_true[p].to_string(),
                    self.times[k].to_string(),
                    self.y[i].to_string(),
                    self.x_hat[i].to_string(),
                    self.psi[i].to_string(),
                ])?;
            }
        }
        Ok(())
    }
}

/// Writes `t` and mean/SE columns of a monitor summary.
pub fn write_monitor_csv(rows: &[MonitorRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "t",
        "x_hat_mean",
        "x_hat_se",
        "energy_mean",
        "energy_se",
        "dissipated_mean",
        "dissipated_se",
    ])?;
    for r in rows {
        w.write_record([
            r.t.to_string(),
            r.x_hat.mean.to_string(),
            r.x_hat.std_error.to_string(),
            r.energy.mean.to_string(),
            r.energy.std_error.to_string(),
            r.dissipated.mean.to_string(),
            r.dissipated.std_error.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn monitor_rows(times: &[f64], moments: &[[Moments; 3]]) -> Vec<MonitorRow> {
    times
        .iter()
        .zip(moments)
        .map(|(&t, [a, b, c])| MonitorRow {
            t,
            x_hat: a.estimate(),
            energy: b.estimate(),
            dissipated: c.estimate(),
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MonitorRow {
    pub t: f64,
    pub x_hat: Estimate,
    pub energy: Estimate,
    pub dissipated: Estimate,
}

/// Paths per chunk in [`monitor_paths`].
pub const MONITOR_CHUNK: usize = 4096;

/// Full paths up to the horizon. `X̂` is the exact filter `G(t, Y(t))` and
/// `Ψ(t, X̂(t)) = H(t, Y(t))`.
pub fn simulate_paths(table: &QuadratureTable, sim: &SimConfig) -> Result<PathBatch> {
    simulate_path_range(table, sim, 0..sim.n_paths)
}

/// Paths with indices in `paths`; identical to the same rows of
/// [`simulate_paths`].
pub fn simulate_path_range(
    table: &QuadratureTable,
    sim: &SimConfig,
    paths: std::ops::Range<usize>,
) -> Result<PathBatch> {
    sim.validate()?;
    let sampler = Sampler::new(table);
    let times = sim.times();
    let m = times.len();
    let sqdt = sim.dt.sqrt();
    let count = paths.len();
    let first_path = paths.start;
    let rows: Vec<(f64, Vec<[f64; 3]>)> = paths
        .into_par_iter()
        .map(|p| -> Result<(f64, Vec<[f64; 3]>)> {
            let mut rng = PathRng::new(sim.seed, p);
            let x = sampler.draw(rng.uniform());
            let mut y = 0.0;
            let mut row = Vec::with_capacity(m);
            for (k, &t) in times.iter().enumerate() {
                if k > 0 {
                    y += x * sim.dt + sqdt * rng.normal();
                }
                let pm = table.posterior_moments(t, y)?;
                row.push([y, pm.mean, pm.variance]);
            }
            Ok((x, row))
        })
        .collect::<Result<_>>()?;
    let mut batch = PathBatch {
        first_path,
        times,
        x_true: Vec::with_capacity(count),
        y: Vec::with_capacity(count * m),
        x_hat: Vec::with_capacity(count * m),
        psi: Vec::with_capacity(count * m),
    };
    for (x, row) in rows {
        batch.x_true.push(x);
        for [y, g, h] in row {
            batch.y.push(y);
            batch.x_hat.push(g);
            batch.psi.push(h);
        }
    }
    Ok(batch)
}

/// [`PathBatch::monitor_summary`] over all `sim.n_paths` paths, simulated
/// in chunks of [`MONITOR_CHUNK`] to bound memory.
pub fn monitor_paths(table: &QuadratureTable, sim: &SimConfig) -> Result<Vec<MonitorRow>> {
    sim.validate()?;
    let mut acc: Option<Vec<[Moments; 3]>> = None;
    let mut start = 0;
    while start < sim.n_paths {
        let end = (start + MONITOR_CHUNK).min(sim.n_paths);
        let chunk = simulate_path_range(table, sim, start..end)?.monitor_moments();
        acc = Some(match acc {
            None => chunk,
            Some(prev) => prev
                .into_iter()
                .zip(chunk)
                .map(|(a, b)| [a[0].merge(b[0]), a[1].merge(b[1]), a[2].merge(b[2])])
                .collect(),
        });
        start = end;
    }
    Ok(monitor_rows(&sim.times(), &acc.unwrap_or_default()))
}

// ---------------------------------------------------------------------------
// Policies

/// Stopping rule over `(t, X̂(t))`, checked at monitoring times.
#[derive(Clone, Debug)]
pub enum Policy {
    StopAtZero,
    /// Stop at the first monitoring time `≥ t`.
    FixedTime(f64),
    /// Stop on first entry into the extracted stopping set.
    Boundary(BoundaryCurve),
    /// Continue while `lo < X̂ < hi`.
    Band {
        lo: f64,
        hi: f64,
    },
}

impl Policy {
    pub fn name(&self) -> String {
        match self {
            Policy::StopAtZero => "stop_at_zero".into(),
            Policy::FixedTime(t) => format!("fixed_time({t})"),
            Policy::Boundary(_) => "boundary".into(),
            Policy::Band { lo, hi } => format!("band({lo},{hi})"),
        }
    }

    fn stops(&self, t: f64, x_hat: f64, dt: f64) -> bool {
        match self {
            Policy::StopAtZero => true,
            Policy::FixedTime(s) => t >= s - 1e-9 * dt,
            Policy::Boundary(curve) => curve.stopped_at(t, x_hat),
            Policy::Band { lo, hi } => x_hat <= *lo || x_hat >= *hi,
        }
    }

    /// Perturbed rule; positive `delta` enlarges continuation (later
    /// stopping).
    pub fn shifted(&self, delta: f64) -> Policy {
        match self {
            Policy::StopAtZero => Policy::FixedTime(delta.max(0.0)),
            Policy::FixedTime(t) => Policy::FixedTime((t + delta).max(0.0)),
            Policy::Boundary(curve) => Policy::Boundary(curve.shifted(delta)),
            Policy::Band { lo, hi } => Policy::Band {
                lo: lo - delta,
                hi: hi + delta,
            },
        }
    }
}

/// Per-path outcome of running a policy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stopped {
    pub x_true: f64,
    pub tau: f64,
    pub x_hat: f64,
    /// `Ψ(τ, X̂(τ))`.
    pub psi: f64,
    /// `∫₀^τ Ψ² ds` by the trapezoid rule.
    pub dissipated: f64,
    /// Same integral with step `2·dt` (the final odd cell at step `dt`).
    pub dissipated_coarse: f64,
    pub capped: bool,
}

/// Runs `policy` on every path, simulating each path only until it stops.
pub fn run_policy(
    table: &QuadratureTable,
    policy: &Policy,
    sim: &SimConfig,
) -> Result<Vec<Stopped>> {
    sim.validate()?;
    let sampler = Sampler::new(table);
    let n = sim.n_steps();
    let sqdt = sim.dt.sqrt();
    (0..sim.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = PathRng::new(sim.seed, p);
            let x = sampler.draw(rng.uniform());
            let mut y = 0.0;
            let mut pm = table.posterior_moments(0.0, 0.0)?;
            let mut dissipated = 0.0;
            let mut coarse = 0.0;
            let mut prev_sq = f64::NAN;
            let mut k = 0;
            loop {
                let t = k as f64 * sim.dt;
                let stop = policy.stops(t, pm.mean, sim.dt);
                if stop || k == n {
                    return Ok(Stopped {
                        x_true: x,
                        tau: t,
                        x_hat: pm.mean,
                        psi: pm.variance,
                        dissipated,
                        dissipated_coarse: if k % 2 == 1 {
                            coarse + 0.5 * sim.dt * (prev_sq + pm.variance.powi(2))
                        } else {
                            coarse
                        },
                        capped: !stop,
                    });
                }
                y += x * sim.dt + sqdt * rng.normal();
                k += 1;
                let next = table.posterior_moments(k as f64 * sim.dt, y)?;
                let (a, b) = (pm.variance.powi(2), next.variance.powi(2));
                dissipated += 0.5 * sim.dt * (a + b);
                if k % 2 == 0 {
                    coarse += sim.dt * (prev_sq + b);
                }
                prev_sq = a;
                pm = next;
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CostComponents {
    /// `E[(X − X̂(τ))²]`.
    pub estimation_error_term: f64,
    /// `c·E[τ]`.
    pub time_term: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub components: CostComponents,
    pub cap_fraction: f64,
    pub warning: Option<String>,
}

fn path_costs(runs: &[Stopped], c: f64) -> Vec<f64> {
    runs.iter()
        .map(|r| (r.x_true - r.x_hat).powi(2) + c * r.tau)
        .collect()
}

fn cost_estimate(runs: &[Stopped], c: f64) -> CostEstimate {
    let n = runs.len();
    let est = Estimate::from_samples(&path_costs(runs, c));
    let err: Vec<f64> = runs.iter().map(|r| (r.x_true - r.x_hat).powi(2)).collect();
    let taus: Vec<f64> = runs.iter().map(|r| r.tau).collect();
    let capped = runs.iter().filter(|r| r.capped).count();
    let cap_fraction = capped as f64 / n as f64;
    CostEstimate {
        mean: est.mean,
        std_error: est.std_error,
        n_paths: n,
        components: CostComponents {
            estimation_error_term: pairwise_sum(&err) / n as f64,
            time_term: c * pairwise_sum(&taus) / n as f64,
        },
        cap_fraction,
        warning: (cap_fraction > CAP_WARNING_FRACTION).then(|| {
            format!(
                "{:.2}% of paths reached the horizon without stopping",
                100.0 * cap_fraction
            )
        }),
    }
}

/// Monte Carlo estimate of `C(τ) = E[(X − X̂(τ))² + cτ]`.
pub fn evaluate_policy(
    table: &QuadratureTable,
    c: f64,
    policy: &Policy,
    sim: &SimConfig,
) -> Result<CostEstimate> {
    if !(c > 0.0) {
        return Err(invalid("cost_c", "must be > 0"));
    }
    Ok(cost_estimate(&run_policy(table, policy, sim)?, c))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VarianceIdentity {
    pub pass: bool,
    pub prior_variance: f64,
    /// `E[Ψ(τ, X̂(τ))]`.
    pub left: Estimate,
    /// `Var(X) − E[∫₀^τ Ψ² ds]`.
    pub right: Estimate,
    /// `|left − right|` in units of `se_left + se_right`; `null` when both
    /// errors vanish and the sides differ by rounding.
    pub separation: f64,
    /// `|E ∫ Ψ²|` change from halving the step; added to the 3-SE
    /// allowance, since a deterministic `τ` has no sampling error.
    pub quadrature_error: f64,
    /// Per-path difference `left − right`, with its paired error.
    pub paired: Estimate,
    pub cap_fraction: f64,
}

/// Checks `E[Ψ(τ, X̂(τ))] = Var(X) − E ∫₀^τ Ψ²(s, X̂(s)) ds`; passes when the
/// 3-SE intervals of the two sides, widened by the quadrature error
/// estimate, overlap.
pub fn verify_variance_identity(
    table: &QuadratureTable,
    policy: &Policy,
    sim: &SimConfig,
) -> Result<VarianceIdentity> {
    let runs = run_policy(table, policy, sim)?;
    let (_, var) = prior_moments(table);
    let lhs: Vec<f64> = runs.iter().map(|r| r.psi).collect();
    let rhs: Vec<f64> = runs.iter().map(|r| var - r.dissipated).collect();
    let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    let left = Estimate::from_samples(&lhs);
    let right = Estimate::from_samples(&rhs);
    let width = left.std_error + right.std_error;
    let gap = (left.mean - right.mean).abs();
    let coarse: Vec<f64> = runs
        .iter()
        .map(|r| r.dissipated_coarse - r.dissipated)
        .collect();
    let quadrature_error = (pairwise_sum(&coarse) / runs.len() as f64).abs();
    let separation = if width > 0.0 {
        gap / width
    } else if gap == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(VarianceIdentity {
        pass: gap <= 3.0 * width + quadrature_error + 1e-12 * var.max(1.0),
        prior_variance: var,
        left,
        right,
        separation,
        quadrature_error,
        paired: Estimate::from_samples(&diff),
        cap_fraction: runs.iter().filter(|r| r.capped).count() as f64 / runs.len() as f64,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapEntry {
    pub shift: f64,
    pub cost: CostEstimate,
    /// `C(shifted) − C(base)` over common paths.
    pub difference: Estimate,
    /// `difference > 2·SE`.
    pub increases: bool,
}

impl GapEntry {
    /// The shifted policy produced the same cost on every path.
    pub fn identical(&self) -> bool {
        self.difference.mean == 0.0 && self.difference.std_error == 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapReport {
    pub base: CostEstimate,
    pub entries: Vec<GapEntry>,
}

impl GapReport {
    /// Every shift that changes the policy's decisions on the simulated
    /// paths raises the cost at 2 SE.
    pub fn local_minimum(&self) -> bool {
        self.entries
            .iter()
            .filter(|e| e.shift != 0.0 && !e.identical())
            .all(|e| e.increases)
    }

    /// No shift lowers the cost by more than `k` paired standard errors.
    pub fn no_improvement(&self, k: f64) -> bool {
        self.entries
            .iter()
            .all(|e| e.difference.mean >= -k * e.difference.std_error)
    }
}

/// Costs of `policy` and its shifted variants on common random numbers.
pub fn policy_optimality_gap(
    table: &QuadratureTable,
    c: f64,
    policy: &Policy,
    shifts: &[f64],
    sim: &SimConfig,
) -> Result<GapReport> {
    if !(c > 0.0) {
        return Err(invalid("cost_c", "must be > 0"));
    }
    let base_runs = run_policy(table, policy, sim)?;
    let base_costs = path_costs(&base_runs, c);
    let entries = shifts
        .iter()
        .map(|&shift| {
            let runs = run_policy(table, &policy.shifted(shift), sim)?;
            let diff: Vec<f64> = path_costs(&runs, c)
                .iter()
                .zip(&base_costs)
                .map(|(a, b)| a - b)
                .collect();
            let difference = Estimate::from_samples(&diff);
            Ok(GapEntry {
                shift,
                cost: cost_estimate(&runs, c),
                difference,
                increases: difference.mean > 2.0 * difference.std_error,
            })
        })
        .collect::<Result<_>>()?;
    Ok(GapReport {
        base: cost_estimate(&base_runs, c),
        entries,
    })
}
