//! Special functions and small numerical utilities shared across modules.

use serde::{Deserialize, Serialize};

pub use libm::{erf, erfc};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
///
/// Nodes come from Newton iteration on the Legendre recurrence; good to
/// machine precision for the orders used here (up to a few hundred).
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss–Legendre rule on `[a, b]` with `panels` equal panels.
pub fn composite_gauss(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let (xs, ws) = gauss_legendre(order);
    let width = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let mid = lo + 0.5 * width;
        for (x, w) in xs.iter().zip(&ws) {
            out.push((mid + 0.5 * width * x, 0.5 * width * w));
        }
    }
    out
}

/// `Ein(z) = ∫₀^z (1 − e^{−s}) / s ds`, the entire exponential integral.
pub fn ein(z: f64) -> f64 {
    if z.abs() < 2.0 {
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 1..200 {
            term *= -z / k as f64;
            let add = -term / k as f64;
            sum += add;
            if add.abs() < 1e-18 * sum.abs().max(1e-300) {
                break;
            }
        }
        sum
    } else {
        // Ein(z) = E1(z) + ln z + γ, with E1 by its continued fraction.
        const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
        exp_integral_e1(z) + z.ln() + EULER_GAMMA
    }
}

fn exp_integral_e1(z: f64) -> f64 {
    // Lentz's algorithm for the continued fraction of E1, valid for z > 1.
    let mut b = z + 1.0;
    let mut c = 1.0 / 1e-300;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let a = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (a * d + b);
        c = b + a / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (-z).exp()
}

/// `∫₀^τ erfc(c / (2√s)) ds` for `c ≥ 0`, i.e. `4τ·i²erfc(c / 2√τ)`.
pub fn erfc_time_integral(c: f64, tau: f64) -> f64 {
    debug_assert!(c >= 0.0);
    if tau <= 0.0 {
        return 0.0;
    }
    let z = c / (2.0 * tau.sqrt());
    (tau + 0.5 * c * c) * erfc(z) - c * (tau / std::f64::consts::PI).sqrt() * (-z * z).exp()
}

/// Ordinary least-squares line through `(x, y)` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
    pub points: usize,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Some(LineFit {
        slope,
        intercept,
        residual: (ss / nf).sqrt(),
        points: n,
    })
}

/// Relative change `|a − b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_delta(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}
