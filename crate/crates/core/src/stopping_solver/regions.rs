//! Stopping sets per time slice and their classification.

use std::path::Path;

use serde::Serialize;

use super::{SolverConfig, ValueGrid};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    AllStop,
    /// Stop for `x ≥ b(t)`.
    OneSidedUpper,
    /// Stop for `x ≤ b(t)`.
    OneSidedLower,
    /// Continue for `|x − centre| < b(t)`.
    TwoSidedSymmetric,
    General,
}

impl Shape {
    pub fn as_str(&self) -> &'static str {
        match self {
            Shape::AllStop => "all_stop",
            Shape::OneSidedUpper => "one_sided_upper",
            Shape::OneSidedLower => "one_sided_lower",
            Shape::TwoSidedSymmetric => "two_sided_symmetric",
            Shape::General => "general",
        }
    }

    pub fn parse(s: &str) -> Option<Shape> {
        [
            Shape::AllStop,
            Shape::OneSidedUpper,
            Shape::OneSidedLower,
            Shape::TwoSidedSymmetric,
            Shape::General,
        ]
        .into_iter()
        .find(|sh| sh.as_str() == s.trim())
    }
}

/// Stopping region of a solved grid.
#[derive(Clone, Debug, Serialize)]
pub struct BoundaryCurve {
    pub t_nodes: Vec<f64>,
    pub x_lo: f64,
    pub x_hi: f64,
    pub dx: f64,
    pub zero_tol: f64,
    /// Inclusive node ranges of stopped nodes per slice.
    pub index_intervals: Vec<Vec<(usize, usize)>>,
    /// Stopping intervals in `x`; ends that are not window edges are
    /// located between nodes.
    pub intervals: Vec<Vec<(f64, f64)>>,
    pub shape: Shape,
    /// `b(t)` in the sense of `shape`; window-edge sentinels mark empty and
    /// full slices. `NaN` for `General`.
    pub thresholds: Vec<f64>,
    /// Slices `i` with `|b(t_{i+1}) − b(t_i)| > 2·dx`.
    pub jumps: Vec<usize>,
}

fn runs(flags: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (j, &f) in flags.iter().enumerate() {
        match (f, start) {
            (true, None) => start = Some(j),
            (false, Some(s)) => {
                out.push((s, j - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, flags.len() - 1));
    }
    out
}

/// Position of the boundary between continuation node `c` and stopped node
/// `s` (adjacent). `√(−v)` is extrapolated linearly from the continuation
/// side; falls back to linear interpolation of `v`.
fn locate(row: &[f64], x: &[f64], c: usize, s: usize, zero_tol: f64) -> f64 {
    let dir: isize = c as isize - s as isize;
    let c2 = c as isize + dir;
    let (xc, xs) = (x[c], x[s]);
    if c2 >= 0 && (c2 as usize) < row.len() && row[c2 as usize] < -zero_tol {
        let p1 = (-row[c]).sqrt();
        let p2 = (-row[c2 as usize]).sqrt();
        if p2 > p1 {
            let frac = (p1 / (p2 - p1)).min(1.0);
            return xc + frac * (xs - xc);
        }
    }
    let (vc, vs) = (row[c], row[s]);
    let frac = ((vc + zero_tol) / (vc - vs)).clamp(0.0, 1.0);
    xc + frac * (xs - xc)
}

/// Per-slice stopping sets `{x_j : v(t_i, x_j) ≥ −zero_tol}`, merged into
/// maximal intervals and classified.
///
/// Classification looks at slices that are neither empty nor full; when
/// there are none, a grid with some empty slices is reported as
/// `TwoSidedSymmetric` with `b ∈ {half-width, 0}`.
pub fn extract_regions(grid: &ValueGrid, zero_tol: f64) -> BoundaryCurve {
    let nx = grid.x_nodes.len();
    let x = &grid.x_nodes;
    let mut index_intervals = Vec::with_capacity(grid.t_nodes.len());
    let mut intervals = Vec::with_capacity(grid.t_nodes.len());
    for row in &grid.values {
        let flags: Vec<bool> = row.iter().map(|&v| v >= -zero_tol).collect();
        let idx = runs(&flags);
        let refined: Vec<(f64, f64)> = idx
            .iter()
            .map(|&(a, b)| {
                let lo = if a == 0 {
                    x[0]
                } else {
                    locate(row, x, a - 1, a, zero_tol)
                };
                let hi = if b == nx - 1 {
                    x[nx - 1]
                } else {
                    locate(row, x, b + 1, b, zero_tol)
                };
                (lo, hi)
            })
            .collect();
        index_intervals.push(idx);
        intervals.push(refined);
    }

    let full = |iv: &Vec<(usize, usize)>| iv.len() == 1 && iv[0] == (0, nx - 1);
    let partial: Vec<&Vec<(usize, usize)>> = index_intervals
        .iter()
        .filter(|iv| !iv.is_empty() && !full(iv))
        .collect();
    let slice_shape = |iv: &Vec<(usize, usize)>| -> Shape {
        match iv.as_slice() {
            [(0, _)] => Shape::OneSidedLower,
            [(_, b)] if *b == nx - 1 => Shape::OneSidedUpper,
            [(0, e), (s, b)] if *b == nx - 1 && (*e + *s).abs_diff(nx - 1) <= 1 => {
                Shape::TwoSidedSymmetric
            }
            _ => Shape::General,
        }
    };
    let shape = if partial.is_empty() {
        if index_intervals.iter().all(full) {
            Shape::AllStop
        } else {
            Shape::TwoSidedSymmetric
        }
    } else {
        let first = slice_shape(partial[0]);
        if partial.iter().all(|iv| slice_shape(iv) == first) {
            first
        } else {
            Shape::General
        }
    };

    let (x_lo, x_hi) = (x[0], x[nx - 1]);
    let centre = 0.5 * (x_lo + x_hi);
    let thresholds: Vec<f64> = index_intervals
        .iter()
        .zip(&intervals)
        .map(|(iv, ref_iv)| {
            let empty = iv.is_empty();
            let is_full = full(iv);
            match shape {
                Shape::AllStop => 0.0,
                Shape::OneSidedLower if empty => x_lo,
                Shape::OneSidedLower if is_full => x_hi,
                Shape::OneSidedLower => ref_iv[0].1,
                Shape::OneSidedUpper if empty => x_hi,
                Shape::OneSidedUpper if is_full => x_lo,
                Shape::OneSidedUpper => ref_iv[0].0,
                Shape::TwoSidedSymmetric if empty => centre - x_lo,
                Shape::TwoSidedSymmetric if is_full => 0.0,
                Shape::TwoSidedSymmetric => {
                    let (l, r) = (ref_iv[0].1, ref_iv[ref_iv.len() - 1].0);
                    0.5 * (r - l)
                }
                Shape::General => f64::NAN,
            }
        })
        .collect();
    let dx = grid.dx();
    let jumps = thresholds
        .windows(2)
        .enumerate()
        .filter(|(_, w)| (w[1] - w[0]).abs() > 2.0 * dx)
        .map(|(i, _)| i)
        .collect();
    BoundaryCurve {
        t_nodes: grid.t_nodes.clone(),
        x_lo,
        x_hi,
        dx,
        zero_tol,
        index_intervals,
        intervals,
        shape,
        thresholds,
        jumps,
    }
}

impl BoundaryCurve {
    /// Slice in force at time `t`: the last node `t_i ≤ t` (the final slice
    /// beyond the grid).
    pub fn slice_at(&self, t: f64) -> usize {
        let n = self.t_nodes.len();
        let dt = self.t_nodes[n - 1] / (n - 1) as f64;
        let i = ((t - self.t_nodes[0]) / dt + 1e-9).floor();
        i.clamp(0.0, (n - 1) as f64) as usize
    }

    /// Whether `(t, x)` lies in the stopping set; `x` outside the window is
    /// treated as the nearest edge.
    pub fn stopped_at(&self, t: f64, x: f64) -> bool {
        let x = x.clamp(self.x_lo, self.x_hi);
        self.intervals[self.slice_at(t)]
            .iter()
            .any(|&(lo, hi)| lo <= x && x <= hi)
    }

    /// Copy with every interval end that is not a window edge moved by `delta`
    /// into the stopping set (positive `delta` enlarges continuation).
    pub fn shifted(&self, delta: f64) -> BoundaryCurve {
        let mut out = self.clone();
        for slice in &mut out.intervals {
            for iv in slice.iter_mut() {
                if iv.0 > self.x_lo {
                    iv.0 += delta;
                }
                if iv.1 < self.x_hi {
                    iv.1 -= delta;
                }
            }
            slice.retain(|iv| iv.0 <= iv.1);
        }
        match out.shape {
            Shape::OneSidedLower => out.thresholds.iter_mut().for_each(|b| *b -= delta),
            Shape::OneSidedUpper | Shape::TwoSidedSymmetric => {
                out.thresholds.iter_mut().for_each(|b| *b += delta)
            }
            _ => {}
        }
        out
    }

    /// Stopping set of slice `i` as `lo:hi;lo:hi`.
    pub fn format_intervals(&self, i: usize) -> String {
        self.intervals[i]
            .iter()
            .map(|(a, b)| format!("{a}:{b}"))
            .collect::<Vec<_>>()
            .join(";")
    }

    /// Reads a file written by [`BoundaryCurve::write_csv`]; the window and
    /// tolerance come from the solver configuration that produced it.
    pub fn read_csv(path: &Path, config: &SolverConfig) -> Result<BoundaryCurve> {
        let mut r = csv::Reader::from_path(path)?;
        let (x_lo, x_hi, dx) = (config.x_lo, config.x_hi, config.dx());
        let bad = |what: String| Error::InvalidArgument {
            name: "boundary.csv",
            reason: what,
        };
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("not a number: {s:?}")))
        };
        let mut curve = BoundaryCurve {
            t_nodes: Vec::new(),
            x_lo,
            x_hi,
            dx,
            zero_tol: config.zero_tol(),
            index_intervals: Vec::new(),
            intervals: Vec::new(),
            shape: Shape::General,
            thresholds: Vec::new(),
            jumps: Vec::new(),
        };
        let last = config.n_x - 1;
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 4 {
                return Err(bad(format!("expected 4 columns, got {}", rec.len())));
            }
            curve.t_nodes.push(num(&rec[0])?);
            let mut ivs = Vec::new();
            let mut idx = Vec::new();
            for part in rec[1].split(';').filter(|p| !p.is_empty()) {
                let (a, b) = part
                    .split_once(':')
                    .ok_or_else(|| bad(format!("bad interval {part:?}")))?;
                let (a, b) = (num(a)?, num(b)?);
                ivs.push((a, b));
                let j0 = (((a - x_lo) / dx) - 1e-9).ceil().max(0.0) as usize;
                let j1 = ((((b - x_lo) / dx) + 1e-9).floor().max(0.0) as usize).min(last);
                if j0 <= j1 {
                    idx.push((j0, j1));
                }
            }
            curve.intervals.push(ivs);
            curve.index_intervals.push(idx);
            curve.thresholds.push(num(&rec[2])?);
            curve.shape =
                Shape::parse(&rec[3]).ok_or_else(|| bad(format!("unknown shape {:?}", &rec[3])))?;
        }
        if curve.t_nodes.is_empty() {
            return Err(bad("no rows".into()));
        }
        curve.jumps = curve
            .thresholds
            .windows(2)
            .enumerate()
            .filter(|(_, w)| (w[1] - w[0]).abs() > 2.0 * dx)
            .map(|(i, _)| i)
            .collect();
        Ok(curve)
    }

    /// Writes `t, intervals, b, shape` per slice.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "intervals", "b", "shape"])?;
        for i in 0..self.t_nodes.len() {
            w.write_record([
                format!("{}", self.t_nodes[i]),
                self.format_intervals(i),
                format!("{}", self.thresholds[i]),
                self.shape.as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn runs_are_maximal() {
        assert_eq!(runs(&[true, true, false, true]), vec![(0, 1), (3, 3)]);
        assert!(runs(&[false, false]).is_empty());
        assert_eq!(runs(&[true; 3]), vec![(0, 2)]);
    }

    #[test]
    fn sqrt_extrapolation_recovers_quadratic_contact() {
        let a = 0.537;
        let x: Vec<f64> = (0..11).map(|j| j as f64 * 0.1).collect();
        let row: Vec<f64> = x
            .iter()
            .map(|&x| if x < a { -3.0 * (a - x).powi(2) } else { 0.0 })
            .collect();
        let b = locate(&row, &x, 5, 6, 1e-12);
        assert!((b - a).abs() < 1e-12);
    }
}
