//! Tridiagonal linear complementarity problems
//! `v ≤ 0, A v ≤ b, (b − A v)·v = 0`.

use crate::error::{Error, Result};

/// Row `j` reads `lower[j]·v[j−1] + diag[j]·v[j] + upper[j]·v[j+1]`.
#[derive(Clone, Debug, Default)]
pub(crate) struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn with_len(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    /// `(A v)_j`.
    pub fn apply_row(&self, v: &[f64], j: usize) -> f64 {
        let mut s = self.diag[j] * v[j];
        if j > 0 {
            s += self.lower[j] * v[j - 1];
        }
        if j + 1 < v.len() {
            s += self.upper[j] * v[j + 1];
        }
        s
    }
}

/// Scratch space reused across time steps.
#[derive(Default)]
pub(crate) struct Workspace {
    c: Vec<f64>,
    d: Vec<f64>,
}

/// Solves the system whose stopped rows are replaced by `v_j = 0`.
fn thomas(a: &Tridiagonal, b: &[f64], stop: &[bool], v: &mut [f64], ws: &mut Workspace) {
    let n = a.len();
    ws.c.resize(n, 0.0);
    ws.d.resize(n, 0.0);
    let row = |j: usize| {
        if stop[j] {
            (0.0, 1.0, 0.0, 0.0)
        } else {
            (a.lower[j], a.diag[j], a.upper[j], b[j])
        }
    };
    let (_, d0, u0, r0) = row(0);
    ws.c[0] = u0 / d0;
    ws.d[0] = r0 / d0;
    for j in 1..n {
        let (l, d, u, r) = row(j);
        let m = d - l * ws.c[j - 1];
        ws.c[j] = u / m;
        ws.d[j] = (r - l * ws.d[j - 1]) / m;
    }
    v[n - 1] = ws.d[n - 1];
    for j in (0..n - 1).rev() {
        v[j] = ws.d[j] - ws.c[j] * v[j + 1];
    }
    for (vj, &s) in v.iter_mut().zip(stop) {
        if s {
            *vj = 0.0;
        }
    }
}

/// Howard policy iteration, warm-started from `stop`. Returns the number of
/// linear solves.
pub(crate) fn policy_iteration(
    a: &Tridiagonal,
    b: &[f64],
    v: &mut [f64],
    stop: &mut [bool],
    ws: &mut Workspace,
) -> Result<usize> {
    let n = a.len();
    let scale = b
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    let eps = 64.0 * f64::EPSILON * scale;
    for it in 1..=n + 8 {
        thomas(a, b, stop, v, ws);
        let mut changed = false;
        for j in 0..n {
            if stop[j] {
                if b[j] - a.apply_row(v, j) < -eps {
                    stop[j] = false;
                    changed = true;
                }
            } else if v[j] > eps {
                stop[j] = true;
                changed = true;
            }
        }
        if !changed {
            return Ok(it);
        }
    }
    Err(Error::NoConvergence {
        method: "policy_iteration",
        iterations: n + 8,
        residual: f64::NAN,
    })
}

/// Projected SOR with relaxation `omega`, stopping when the largest update
/// falls below `tol`. Returns the number of sweeps.
pub(crate) fn psor(
    a: &Tridiagonal,
    b: &[f64],
    v: &mut [f64],
    omega: f64,
    tol: f64,
    max_sweeps: usize,
) -> Result<usize> {
    let n = a.len();
    let mut last = f64::INFINITY;
    for sweep in 1..=max_sweeps {
        let mut delta = 0.0f64;
        for j in 0..n {
            let mut r = b[j];
            if j > 0 {
                r -= a.lower[j] * v[j - 1];
            }
            if j + 1 < n {
                r -= a.upper[j] * v[j + 1];
            }
            let gs = r / a.diag[j];
            let new = ((1.0 - omega) * v[j] + omega * gs).min(0.0);
            delta = delta.max((new - v[j]).abs());
            v[j] = new;
        }
        last = delta;
        if delta <= tol {
            return Ok(sweep);
        }
    }
    Err(Error::NoConvergence {
        method: "psor",
        iterations: max_sweeps,
        residual: last,
    })
}
