//! Small numerical building blocks shared by the other modules: Gauss rules,
//! adaptive Gauss–Kronrod integration, bracketed root finding, the standard
//! normal density/CDF and a deterministic pairwise summation.

use crate::error::{Error, Result};

/// Gauss–Hermite rule for the weight `exp(-x²)` on the real line.
///
/// Nodes are the eigenvalues of the Jacobi matrix, polished by Newton steps
/// on the orthonormal recurrence; weights come from the recurrence as well,
/// so tail weights keep full relative accuracy. Nodes are increasing and the
/// weights sum to `√π`.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5; // π^{-1/4}
    let mut diag = vec![0.0; n];
    let mut off: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
    off.push(0.0);
    tridiagonal_eigenvalues(&mut diag, &mut off);
    diag.sort_by(f64::total_cmp);
    let nf = n as f64;
    let recurrence = |z: f64| {
        let mut p1 = PIM4;
        let mut p2 = 0.0;
        for j in 0..n {
            let p3 = p2;
            p2 = p1;
            let jf = j as f64;
            p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
        }
        (p1, (2.0 * nf).sqrt() * p2)
    };
    let mut w = vec![0.0; n];
    for (z, w) in diag.iter_mut().zip(w.iter_mut()) {
        let mut pp = 0.0;
        for _ in 0..4 {
            let (p, d) = recurrence(*z);
            pp = d;
            let step = p / d;
            *z -= step;
            if step.abs() <= 1e-16 * z.abs().max(1.0) {
                break;
            }
        }
        let (_, d) = recurrence(*z);
        if d.is_finite() && d != 0.0 {
            pp = d;
        }
        *w = 2.0 / (pp * pp);
    }
    // Enforce exact symmetry of the rule.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let z = 0.5 * (diag[j] - diag[i]);
        let wt = 0.5 * (w[i] + w[j]);
        diag[i] = -z;
        diag[j] = z;
        w[i] = wt;
        w[j] = wt;
    }
    if n % 2 == 1 {
        diag[n / 2] = 0.0;
    }
    (diag, w)
}

/// Eigenvalues of a symmetric tridiagonal matrix by implicit QL iteration.
/// `off[i]` couples rows `i` and `i + 1`; the result overwrites `diag`.
fn tridiagonal_eigenvalues(diag: &mut [f64], off: &mut [f64]) {
    let n = diag.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                break;
            }
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + off[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    off[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
}

/// Gauss–Legendre rule on `[-1, 1]`, nodes increasing.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &wk)) in XGK[..7].iter().zip(&WGK[..7]).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += wk * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Globally adaptive 7/15-point Gauss–Kronrod integration.
///
/// The panel with the largest error estimate is bisected until the summed
/// estimate drops below `max(abs_tol, rel_tol·|I|)`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    const MAX_PANELS: usize = 4000;
    let (i0, e0) = gk15(&f, a, b);
    let mut panels = vec![(a, b, i0, e0)];
    loop {
        let total: f64 = panels.iter().map(|p| p.2).sum();
        let err: f64 = panels.iter().map(|p| p.3).sum();
        if !total.is_finite() {
            return Err(Error::NonFinite {
                node: 0,
                point: a,
                value: total,
            });
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        if panels.len() >= MAX_PANELS {
            return Err(Error::NoConvergence {
                method: "adaptive Gauss-Kronrod",
                iterations: panels.len(),
                residual: err,
            });
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (lo, hi, _, _) = panels.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (il, el) = gk15(&f, lo, mid);
        let (ir, er) = gk15(&f, mid, hi);
        panels.push((lo, mid, il, el));
        panels.push((mid, hi, ir, er));
    }
}

/// Bisection on a bracket `[lo, hi]` with `f(lo) < 0 < f(hi)` (or the reverse).
///
/// Stops when the bracket is narrower than `x_tol` or `|f| <= f_tol`.
pub fn bisect<F: Fn(f64) -> f64>(
    f: F,
    mut lo: f64,
    mut hi: f64,
    x_tol: f64,
    f_tol: f64,
) -> Result<f64> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::PremiseViolated(format!(
            "root not bracketed: f({lo}) = {f_lo}, f({hi}) = {f_hi}"
        )));
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid.abs() <= f_tol || (hi - lo) <= x_tol || mid == lo || mid == hi {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal CDF through `erfc`, accurate in the far left tail.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// The ratio `φ(z)/Φ(z)` (inverse Mills ratio).
pub fn inverse_mills(z: f64) -> f64 {
    if z < -35.0 {
        // Asymptotic series; Φ underflows further left.
        let z2 = z * z;
        let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
        return -z / series;
    }
    norm_pdf(z) / norm_cdf(z)
}

/// Tails `(T₁, T₂)` of the continued fraction
/// `Φ(−x)/φ(x) = 1/(x + T₁)`, `T_n = n/(x + T_{n+1})`, for `x ≥ 1`.
///
/// With `z = −x` and `r = φ(z)/Φ(z)`: `z + r = T₁` and
/// `1 − r(z + r) = T₁(T₂ − T₁)`, both free of cancellation.
pub fn mills_tails(x: f64) -> (f64, f64) {
    debug_assert!(x >= 1.0);
    let mut t = 0.0;
    let mut prev = 0.0;
    for n in (1..=1000).rev() {
        prev = t;
        t = n as f64 / (x + t);
    }
    (t, prev)
}

/// Upper-tail quantile: the `z` with `1 − Φ(z) = tail`, for `tail` in `(0, ½]`.
pub fn norm_upper_quantile(tail: f64) -> f64 {
    bisect(|z| norm_cdf(-z).ln() - tail.ln(), 0.0, 40.0, 1e-15, 0.0).unwrap_or(f64::NAN)
}

/// Pairwise summation; the association order depends only on the length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Evenly spaced points including both end points.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
                .collect()
        }
    }
}
