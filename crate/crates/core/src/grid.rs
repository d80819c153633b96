//! Uniform symmetric grids on `[-L, L]`, sampled functions, quadrature and
//! the free Gaussian kernel.

use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "interval [{lo}, {hi}] is reversed");
        Self { lo, hi }
    }

    pub fn centered(center: f64, length: f64) -> Self {
        Self::new(center - 0.5 * length, center + 0.5 * length)
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        other.lo >= self.lo && other.hi <= self.hi
    }

    /// Closed intervals sharing at least one point.
    pub fn intersects(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn intersection(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then(|| Interval::new(lo, hi))
    }

    /// Length of the overlap with `other` (zero when disjoint).
    pub fn overlap(&self, other: &Interval) -> f64 {
        (self.hi.min(other.hi) - self.lo.max(other.lo)).max(0.0)
    }

    pub fn scaled(&self, factor: f64) -> Interval {
        Interval::centered(self.center(), self.length() * factor)
    }
}

/// Uniform grid `x_i = -L + i·h`, `i = 0..n`, with `n` odd so that `x = 0`
/// is a node, plus a central core window `[-ρL, ρL]` on which norms and
/// sups are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    half_width: f64,
    n_points: usize,
    core_fraction: f64,
}

impl Grid {
    pub fn new(half_width: f64, n_points: usize, core_fraction: f64) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::Domain(format!("half width must be positive, got {half_width}")));
        }
        if n_points < 3 || n_points.is_multiple_of(2) {
            return Err(Error::Domain(format!("n_points must be odd and >= 3, got {n_points}")));
        }
        if !(core_fraction > 0.0 && core_fraction <= 1.0) {
            return Err(Error::Domain(format!("core fraction must lie in (0, 1], got {core_fraction}")));
        }
        let grid = Self {
            half_width,
            n_points,
            core_fraction,
        };
        let steps = core_fraction * half_width / grid.spacing();
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "core window ±{} does not land on a grid node (h = {})",
                core_fraction * half_width,
                grid.spacing()
            )));
        }
        Ok(grid)
    }

    /// `L = 16`, `ρ = 1/2`.
    pub fn standard(n_points: usize) -> Result<Self> {
        Self::new(16.0, n_points, 0.5)
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn core_fraction(&self) -> f64 {
        self.core_fraction
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n_points - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        if i == self.center_index() {
            return 0.0;
        }
        -self.half_width + i as f64 * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.x(i)).collect()
    }

    pub fn center_index(&self) -> usize {
        (self.n_points - 1) / 2
    }

    pub fn domain(&self) -> Interval {
        Interval::new(-self.half_width, self.half_width)
    }

    pub fn core(&self) -> Interval {
        let r = self.core_fraction * self.half_width;
        Interval::new(-r, r)
    }

    /// Node indices of the core window, endpoints included.
    pub fn core_range(&self) -> std::ops::Range<usize> {
        let half = (self.core_fraction * self.half_width / self.spacing()).round() as usize;
        let c = self.center_index();
        (c - half)..(c + half + 1)
    }

    /// Nearest node to `x`, clamped into the grid.
    pub fn nearest(&self, x: f64) -> usize {
        let i = ((x + self.half_width) / self.spacing()).round();
        i.clamp(0.0, (self.n_points - 1) as f64) as usize
    }

    /// Node indices lying in the closed interval (with a tolerance of a
    /// tiny fraction of `h` so that dyadic endpoints on nodes are kept).
    pub fn indices_in(&self, window: &Interval) -> std::ops::Range<usize> {
        let h = self.spacing();
        let tol = 1e-9 * h;
        let lo = ((window.lo - tol + self.half_width) / h).ceil().max(0.0) as usize;
        let hi = ((window.hi + tol + self.half_width) / h).floor();
        if hi < 0.0 {
            return 0..0;
        }
        let hi = (hi as usize).min(self.n_points - 1);
        if lo > hi {
            0..0
        } else {
            lo..hi + 1
        }
    }

    /// Trapezoid weights; node `i` carries the part of its cell
    /// `[x_i - h/2, x_i + h/2]` that lies inside the domain.
    pub fn weights(&self) -> Vec<f64> {
        self.window_weights(&self.domain())
    }

    /// Cell weights restricted to a window: node `i` carries
    /// `|[x_i - h/2, x_i + h/2] ∩ window ∩ domain|`. On the full domain
    /// this is the trapezoid rule.
    pub fn window_weights(&self, window: &Interval) -> Vec<f64> {
        let h = self.spacing();
        let clipped = match window.intersection(&self.domain()) {
            Some(w) => w,
            None => return vec![0.0; self.n_points],
        };
        (0..self.n_points)
            .map(|i| {
                let x = self.x(i);
                Interval::new(x - 0.5 * h, x + 0.5 * h).overlap(&clipped)
            })
            .collect()
    }

    /// Same grid with `2n - 1` points (spacing halved).
    pub fn refined(&self) -> Self {
        Self {
            n_points: 2 * self.n_points - 1,
            ..*self
        }
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            grid: *self,
            values: self.points().into_iter().map(f).collect(),
        }
    }

    fn check_window(&self, window: &Interval) -> Result<()> {
        let tol = 1e-12 * self.half_width;
        if window.lo < -self.half_width - tol || window.hi > self.half_width + tol {
            return Err(Error::Domain(format!(
                "window [{}, {}] exceeds grid domain ±{}",
                window.lo, window.hi, self.half_width
            )));
        }
        Ok(())
    }
}

/// Real function sampled at every node of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Domain(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite value at node {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    /// Build without the finiteness check; internal producers guarantee it.
    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        Self::from_raw(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn add(&self, other: &GridFunction) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridFunction) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &GridFunction) -> Self {
        self.zip_with(other, |a, b| a * b)
    }

    /// Zero outside the closed window.
    pub fn masked(&self, window: &Interval) -> Self {
        let mut values = vec![0.0; self.values.len()];
        for i in self.grid.indices_in(window) {
            values[i] = self.values[i];
        }
        Self::from_raw(self.grid, values)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Sup norm over the core window.
    pub fn core_sup(&self) -> f64 {
        self.values[self.grid.core_range()]
            .iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Discrete L² norm over the whole grid.
    pub fn l2_norm(&self) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// Trapezoid quadrature over the full grid.
pub fn integrate(f: &GridFunction) -> f64 {
    f.grid
        .weights()
        .iter()
        .zip(&f.values)
        .map(|(w, v)| w * v)
        .sum()
}

/// `∫_window |f|` with the cell-weighted trapezoid rule.
pub fn l1_norm(f: &GridFunction, window: &Interval) -> Result<f64> {
    f.grid.check_window(window)?;
    Ok(f.grid
        .window_weights(window)
        .iter()
        .zip(&f.values)
        .map(|(w, v)| w * v.abs())
        .sum())
}

/// Sign probes per grid cell used by [`refined_integral`].
pub const REFINE: usize = 8;

const INTERP_POINTS: usize = 8;

fn lagrange_weights(shift: usize, s: f64) -> [f64; INTERP_POINTS] {
    // nodes at offsets `k - shift`, evaluation point `s` in cell units
    let mut w = [1.0; INTERP_POINTS];
    for (k, wk) in w.iter_mut().enumerate() {
        let xk = k as f64 - shift as f64;
        for j in 0..INTERP_POINTS {
            if j != k {
                let xj = j as f64 - shift as f64;
                *wk *= (s - xj) / (xk - xj);
            }
        }
    }
    w
}

const CELL_GAUSS: usize = 6;

/// `∫ F(x, g(x)) dx` between nodes `a` and `b` for a smooth `g` sampled at
/// every node.
///
/// On each cell `g` is the eight-point Lagrange interpolant. Sign changes
/// are located by probing `m` points per cell and refining by bisection;
/// every root-free piece gets a six-point Gauss rule. Kinks of `F` at zeros
/// of `g` (as in `|g|`) therefore cost nothing beyond interpolation error.
pub fn refined_integral(grid: &Grid, g: &[f64], a: usize, b: usize, m: usize, f: impl Fn(f64, f64) -> f64) -> f64 {
    let n = grid.len();
    assert_eq!(g.len(), n, "samples must cover the grid");
    assert!(a <= b && b < n && m > 0 && n >= INTERP_POINTS);
    let h = grid.spacing();
    let centered = INTERP_POINTS / 2 - 1;
    let (gx, gw) = crate::special::gauss_legendre(CELL_GAUSS);
    let probe_table: Vec<[f64; INTERP_POINTS]> =
        (0..=m).map(|j| lagrange_weights(centered, j as f64 / m as f64)).collect();
    let gauss_table: Vec<[f64; INTERP_POINTS]> =
        gx.iter().map(|&u| lagrange_weights(centered, 0.5 * (u + 1.0))).collect();
    let mut sum = 0.0;
    for i in a..b {
        let start = i.saturating_sub(centered).min(n - INTERP_POINTS);
        let shift = i - start;
        let local = &g[start..start + INTERP_POINTS];
        let dot = |w: &[f64; INTERP_POINTS]| w.iter().zip(local).map(|(w, g)| w * g).sum::<f64>();
        let eval = |s: f64| dot(&lagrange_weights(shift, s));
        let x0 = grid.x(i);
        let interior = shift == centered;

        let probes: Vec<f64> = (0..=m)
            .map(|j| if interior { dot(&probe_table[j]) } else { eval(j as f64 / m as f64) })
            .collect();
        let mut cuts = vec![0.0];
        for j in 0..m {
            let (v0, v1) = (probes[j], probes[j + 1]);
            if v0 * v1 < 0.0 {
                let (mut lo, mut hi) = (j as f64 / m as f64, (j + 1) as f64 / m as f64);
                for _ in 0..50 {
                    let mid = 0.5 * (lo + hi);
                    if eval(mid) * v0 > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                cuts.push(0.5 * (lo + hi));
            }
        }
        cuts.push(1.0);

        if cuts.len() == 2 && interior {
            let piece: f64 = gx
                .iter()
                .zip(&gw)
                .zip(&gauss_table)
                .map(|((u, w), t)| w * f(x0 + 0.5 * (u + 1.0) * h, dot(t)))
                .sum();
            sum += 0.5 * h * piece;
            continue;
        }
        for c in cuts.windows(2) {
            let (s0, s1) = (c[0], c[1]);
            let piece: f64 = gx
                .iter()
                .zip(&gw)
                .map(|(u, w)| {
                    let s = s0 + 0.5 * (u + 1.0) * (s1 - s0);
                    w * f(x0 + s * h, eval(s))
                })
                .sum();
            sum += 0.5 * (s1 - s0) * h * piece;
        }
    }
    sum
}

/// `∫_core |f|`.
pub fn core_l1(f: &GridFunction) -> f64 {
    let core = f.grid.core();
    l1_norm(f, &core).expect("core window lies in the domain")
}

/// Half width of the central stencils used for `d/dx` and `-d²/dx²`; both
/// are of order `2·STENCIL_REACH`.
pub(crate) const STENCIL_REACH: usize = 8;

fn factorial(k: usize) -> f64 {
    (1..=k).map(|j| j as f64).product()
}

/// Central first-derivative weights `c_1..c_p` of order `2p`:
/// `f′(x) ≈ Σ c_k (f(x+kh) − f(x−kh)) / h`.
pub(crate) fn d1_stencil(p: usize) -> Vec<f64> {
    let pf = factorial(p).powi(2);
    (1..=p)
        .map(|k| {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sign * pf / (k as f64 * factorial(p - k) * factorial(p + k))
        })
        .collect()
}

/// Central `-d²/dx²` weights `c_0..c_p` of order `2p`:
/// `-f″(x) ≈ (c_0 f(x) + Σ c_k (f(x+kh) + f(x−kh))) / h²`.
pub(crate) fn neg_d2_stencil(p: usize) -> Vec<f64> {
    let pf = factorial(p).powi(2);
    let mut c = vec![0.0; p + 1];
    for k in 1..=p {
        let sign = if k % 2 == 1 { -1.0 } else { 1.0 };
        c[k] = sign * 2.0 * pf / ((k * k) as f64 * factorial(p - k) * factorial(p + k));
        c[0] += 2.0 / (k * k) as f64;
    }
    c
}

static D1: LazyLock<Vec<Vec<f64>>> = LazyLock::new(|| (0..=STENCIL_REACH).map(d1_stencil).collect());

fn central(at: impl Fn(isize) -> f64, i: isize, p: usize, h: f64) -> f64 {
    let c = &D1[p];
    (1..=p).map(|k| c[k - 1] * (at(i + k as isize) - at(i - k as isize))).sum::<f64>() / h
}

/// First derivative: central differences of order up to `2·STENCIL_REACH`,
/// shrinking the stencil next to the ends, and second-order one-sided
/// differences at the two end nodes.
pub fn derivative(f: &GridFunction) -> GridFunction {
    let v = &f.values;
    let n = v.len();
    let h = f.grid.spacing();
    let at = |j: isize| v[j as usize];
    let out = (0..n)
        .map(|i| {
            let p = i.min(n - 1 - i).min(STENCIL_REACH);
            if p > 0 {
                central(at, i as isize, p, h)
            } else if i == 0 {
                (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
            } else {
                (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h)
            }
        })
        .collect();
    GridFunction::from_raw(f.grid, out)
}

/// First derivative of a function vanishing at `±L`, using the odd
/// reflection across each end so the full stencil applies at every node.
pub fn derivative_dirichlet(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let last = (n - 1) as isize;
    let at = |j: isize| -> f64 {
        if j < 0 {
            -values[(-j) as usize]
        } else if j > last {
            -values[(2 * last - j) as usize]
        } else {
            values[j as usize]
        }
    };
    (0..n as isize).map(|i| central(at, i, STENCIL_REACH, h)).collect()
}

/// Gauss–Weierstrass kernel `P_t(x) = (4πt)^{-1/2} exp(-x²/4t)`.
pub fn free_kernel(t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("free kernel needs t > 0, got {t}")));
    }
    Ok(free_kernel_unchecked(t, x))
}

#[inline]
pub(crate) fn free_kernel_unchecked(t: f64, x: f64) -> f64 {
    (4.0 * std::f64::consts::PI * t).powf(-0.5) * (-x * x / (4.0 * t)).exp()
}

/// `(f * P_t)(x_i)` by trapezoid quadrature over the grid.
pub fn convolve_free(f: &GridFunction, t: f64) -> Result<GridFunction> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("convolution needs t > 0, got {t}")));
    }
    let grid = f.grid;
    let h = grid.spacing();
    let w = grid.weights();
    // exp(-x²/4t) < 1e-300 beyond 53√t
    let reach = ((53.0 * t.sqrt()) / h).ceil() as usize;
    let n = grid.len();
    let kernel: Vec<f64> = (0..=reach.min(n))
        .map(|k| free_kernel_unchecked(t, k as f64 * h))
        .collect();
    let fw: Vec<f64> = f.values.iter().zip(&w).map(|(v, w)| v * w).collect();
    let out = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(reach);
            let hi = (i + reach).min(n - 1);
            (lo..=hi).map(|j| kernel[i.abs_diff(j)] * fw[j]).sum()
        })
        .collect();
    Ok(GridFunction::from_raw(grid, out))
}
