//! Closed-form filtering and stopping results for the Gaussian, Bernoulli,
//! half-normal and symmetric Gaussian-mixture priors.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::numerics::{bisect, integrate, inverse_mills, mills_tails, norm_cdf};

/// Widder transform, posterior mean, posterior variance and `Ψ` at one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Analytics {
    pub f: f64,
    pub log_f: f64,
    pub g: f64,
    pub h: f64,
    /// `Ψ(t, g) = h`.
    pub psi: f64,
}

impl Analytics {
    fn new(log_f: f64, g: f64, h: f64) -> Self {
        Self {
            f: log_f.exp(),
            log_f,
            g,
            h,
            psi: h,
        }
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {v}")))
    }
}

fn time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(invalid("t", format!("must be finite and >= 0, got {t}")))
    }
}

/// `sech²(k)`, without overflow for large `|k|`.
fn sech2(k: f64) -> f64 {
    let e = (-2.0 * k.abs()).exp();
    4.0 * e / ((1.0 + e) * (1.0 + e))
}

/// `ln cosh(k)`.
fn log_cosh(k: f64) -> f64 {
    let a = k.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `ξ(t) = σ²/(1 + σ²t)`, the Gaussian posterior variance.
pub fn gaussian_xi(sigma2: f64, t: f64) -> f64 {
    sigma2 / (1.0 + sigma2 * t)
}

/// Kalman–Bucy closed forms for the prior `N(m, σ²)`.
pub fn gaussian_analytics(m: f64, sigma2: f64, t: f64, y: f64) -> Result<Analytics> {
    positive("sigma2", sigma2)?;
    time(t)?;
    let d = 1.0 + sigma2 * t;
    let num = m + sigma2 * y;
    let log_f = -0.5 * d.ln() + (num * num / d - m * m) / (2.0 * sigma2);
    Ok(Analytics::new(log_f, num / d, sigma2 / d))
}

/// Optimal deterministic stopping time `(1/√c − 1/σ²)⁺`.
pub fn gaussian_tau_star(sigma2: f64, c: f64) -> Result<f64> {
    positive("sigma2", sigma2)?;
    positive("c", c)?;
    Ok((1.0 / c.sqrt() - 1.0 / sigma2).max(0.0))
}

/// `∫₀^{s*} (c − ξ²(t+s)) ds` with `s* = (τ* − t)⁺`.
pub fn gaussian_value(sigma2: f64, c: f64, t: f64) -> Result<f64> {
    time(t)?;
    let s = (gaussian_tau_star(sigma2, c)? - t).max(0.0);
    if s == 0.0 {
        return Ok(0.0);
    }
    let anti = |s: f64| c * s + sigma2 / (1.0 + sigma2 * (t + s));
    Ok(anti(s) - anti(0.0))
}

/// Closed forms for the two-point prior `p·δ_β + (1−p)·δ_{−β}`.
pub fn bernoulli_analytics(beta: f64, p: f64, t: f64, y: f64) -> Result<Analytics> {
    positive("beta", beta)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid("p", format!("must lie in (0, 1), got {p}")));
    }
    time(t)?;
    let k = beta * y + 0.5 * (p / (1.0 - p)).ln();
    let log_f = -0.5 * beta * beta * t + 0.5 * (4.0 * p * (1.0 - p)).ln() + log_cosh(k);
    Ok(Analytics::new(
        log_f,
        beta * k.tanh(),
        beta * beta * sech2(k),
    ))
}

/// Solution of the time-homogeneous Bernoulli stopping problem.
#[derive(Clone, Debug, Serialize)]
pub struct BernoulliSolution {
    pub beta: f64,
    pub cost: f64,
    /// `√(β² − √c)`, present iff `β⁴ > c`.
    pub gamma: Option<f64>,
    /// Free boundary `a ∈ (γ, β)`, present iff `β⁴ > c`.
    pub boundary_a: Option<f64>,
    /// `Q(a)` at the located root.
    pub q_at_a: Option<f64>,
}

/// Absolute tolerance for the inner quadratures.
const Q_ABS_TOL: f64 = 1e-12;

impl BernoulliSolution {
    /// `ψ(x) = β² − x²`.
    pub fn psi(&self, x: f64) -> f64 {
        self.beta * self.beta - x * x
    }

    /// `τ* ≡ 0` is optimal.
    pub fn trivial_stop(&self) -> bool {
        self.boundary_a.is_none()
    }

    /// `Q(x) = ∫₀^x (c − ψ²)/ψ² dξ` for `|x| < β`.
    pub fn q(&self, x: f64) -> Result<f64> {
        if !(x.abs() < self.beta) {
            return Err(invalid("x", format!("Q needs |x| < beta, got {x}")));
        }
        let (b2, c) = (self.beta * self.beta, self.cost);
        integrate(
            |s| {
                let p = b2 - s * s;
                c / (p * p) - 1.0
            },
            0.0,
            x,
            Q_ABS_TOL,
            1e-14,
        )
    }

    /// Value function `u(x) = 2∫_{|x|}^a Q(y) dy` (zero off `(−a, a)`).
    pub fn value(&self, x: f64) -> Result<f64> {
        let Some(a) = self.boundary_a else {
            return Ok(0.0);
        };
        let x = x.abs();
        if x >= a {
            return Ok(0.0);
        }
        let inner = |y: f64| self.q(y).unwrap_or(f64::NAN);
        Ok(2.0 * integrate(inner, x, a, 1e-12, 1e-13)?)
    }

    /// `u′(x) = −2 Q(x)` inside `(−a, a)`, zero outside.
    pub fn value_derivative(&self, x: f64) -> Result<f64> {
        match self.boundary_a {
            Some(a) if x.abs() < a => Ok(-2.0 * self.q(x)?),
            _ => Ok(0.0),
        }
    }

    /// Number of sign changes of `Q` on `(γ, β)` sampled at `step`.
    pub fn q_sign_changes(&self, step: f64) -> Result<usize> {
        let Some(gamma) = self.gamma else {
            return Ok(0);
        };
        let mut prev = self.q(gamma)?.signum();
        let mut changes = 0;
        let mut x = gamma + step;
        while x < self.beta - 1e-9 {
            let s = self.q(x)?.signum();
            if s != prev {
                changes += 1;
                prev = s;
            }
            x += step;
        }
        Ok(changes)
    }
}

/// Locates the free boundary `a` by bisection of `Q` on `(γ, β − 1e−9)`.
pub fn bernoulli_solve(beta: f64, c: f64, root_tol: f64) -> Result<BernoulliSolution> {
    positive("beta", beta)?;
    positive("c", c)?;
    positive("root_tol", root_tol)?;
    let mut sol = BernoulliSolution {
        beta,
        cost: c,
        gamma: None,
        boundary_a: None,
        q_at_a: None,
    };
    if beta.powi(4) <= c {
        return Ok(sol);
    }
    let gamma = (beta * beta - c.sqrt()).sqrt();
    sol.gamma = Some(gamma);
    let q = |x: f64| sol.q(x).unwrap_or(f64::NAN);
    let a = bisect(q, gamma, beta - 1e-9, 0.0, root_tol.min(1e-13))?;
    sol.q_at_a = Some(sol.q(a)?);
    sol.boundary_a = Some(a);
    Ok(sol)
}

/// `z` and `σ²/(1 + σ²t)` for the half-normal posterior.
fn halfnormal_z(sigma2: f64, t: f64, y: f64) -> (f64, f64) {
    let d = 1.0 + sigma2 * t;
    (sigma2.sqrt() * y / d.sqrt(), sigma2 / d)
}

/// `ln Φ(z)`, accurate far into the left tail.
fn log_norm_cdf(z: f64) -> f64 {
    if z > -30.0 {
        norm_cdf(z).ln()
    } else {
        -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln() - inverse_mills(z).ln()
    }
}

/// Left of `−1` the continued fraction replaces `φ/Φ`.
const MILLS_CF_FROM: f64 = 1.0;

/// Closed forms for `|N(0, σ²)|`.
pub fn halfnormal_analytics(sigma2: f64, t: f64, y: f64) -> Result<Analytics> {
    positive("sigma2", sigma2)?;
    time(t)?;
    let (z, s2) = halfnormal_z(sigma2, t, y);
    let log_f =
        std::f64::consts::LN_2 - 0.5 * (1.0 + sigma2 * t).ln() + 0.5 * z * z + log_norm_cdf(z);
    let (shift, spread) = if z <= -MILLS_CF_FROM {
        let (t1, t2) = mills_tails(-z);
        (t1, t1 * (t2 - t1))
    } else {
        let r = inverse_mills(z);
        (z + r, 1.0 - z * r - r * r)
    };
    Ok(Analytics::new(log_f, s2.sqrt() * shift, s2 * spread))
}

/// Half-normal posterior variance `σ²/(1+σ²t)·(1 − zφ/Φ − φ²/Φ²)`.
pub fn halfnormal_h(sigma2: f64, t: f64, y: f64) -> Result<f64> {
    halfnormal_analytics(sigma2, t, y).map(|a| a.h)
}

/// `f(z) = (z + 2φ/Φ)(z + φ/Φ)`, which is `>= 1` everywhere.
pub fn halfnormal_f(z: f64) -> f64 {
    if z <= -MILLS_CF_FROM {
        let (t1, _) = mills_tails(-z);
        return (2.0 * t1 - z) * t1;
    }
    let r = inverse_mills(z);
    (z + 2.0 * r) * (z + r)
}

/// Outcome of [`halfnormal_monotone_check`].
#[derive(Clone, Debug, Serialize)]
pub struct MonotoneCheck {
    pub pass: bool,
    /// Smallest central-difference slope of `H(t, ·)`.
    pub min_slope: f64,
    /// Smallest `f(z)` over the nodes.
    pub min_f: f64,
}

/// Checks `DH(t, ·) >= −tol` by central differences and `f(z) >= 1 − tol`.
pub fn halfnormal_monotone_check(
    sigma2: f64,
    t: f64,
    y_nodes: &[f64],
    tol: f64,
) -> Result<MonotoneCheck> {
    let h: Vec<f64> = y_nodes
        .iter()
        .map(|&y| halfnormal_h(sigma2, t, y))
        .collect::<Result<_>>()?;
    let min_slope = (1..y_nodes.len().saturating_sub(1))
        .map(|k| (h[k + 1] - h[k - 1]) / (y_nodes[k + 1] - y_nodes[k - 1]))
        .fold(f64::INFINITY, f64::min);
    let min_f = y_nodes
        .iter()
        .map(|&y| halfnormal_f(halfnormal_z(sigma2, t, y).0))
        .fold(f64::INFINITY, f64::min);
    Ok(MonotoneCheck {
        pass: min_slope >= -tol && min_f >= 1.0 - tol,
        min_slope,
        min_f,
    })
}

/// Closed forms for `½N(m, σ²) + ½N(−m, σ²)`.
pub fn mixture_analytics(m: f64, sigma: f64, t: f64, y: f64) -> Result<Analytics> {
    positive("m", m)?;
    positive("sigma", sigma)?;
    time(t)?;
    let s2 = sigma * sigma;
    let d = 1.0 + s2 * t;
    let k = m * y / d;
    let log_f = -0.5 * d.ln() + ((m * m + s2 * s2 * y * y) / d - m * m) / (2.0 * s2) + log_cosh(k);
    let g = (s2 * y + m * k.tanh()) / d;
    let h = s2 / d + (m / d) * (m / d) * sech2(k);
    Ok(Analytics::new(log_f, g, h))
}

/// Mixture posterior variance.
pub fn mixture_h(m: f64, sigma: f64, t: f64, y: f64) -> Result<f64> {
    mixture_analytics(m, sigma, t, y).map(|a| a.h)
}

/// Times bracketing the mixture's stopping boundary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MixtureThresholds {
    /// `b(t) = ∞` (nothing stops) before this time.
    pub t_infinity: f64,
    /// `b(t) = 0` (everything stops) from this time on.
    pub t_zero: f64,
}

/// `t_∞ = (c^{−1/2} − σ^{−2})⁺` and
/// `t_0 = (1/(2√c))·(1 − 2σ^{−2}√c + √(1 + 4m²σ^{−4}√c))⁺`.
pub fn mixture_boundary_thresholds(m: f64, sigma: f64, c: f64) -> Result<MixtureThresholds> {
    positive("m", m)?;
    positive("sigma", sigma)?;
    positive("c", c)?;
    let (rc, is2) = (c.sqrt(), 1.0 / (sigma * sigma));
    let t_infinity = (1.0 / rc - is2).max(0.0);
    let inner = 1.0 + 4.0 * m * m * is2 * is2 * rc;
    let t_zero = ((1.0 - 2.0 * is2 * rc + inner.sqrt()) / (2.0 * rc)).max(0.0);
    Ok(MixtureThresholds { t_infinity, t_zero })
}
