//! The Riesz transform in its time-integral form
//! `R^{[ε,M]}(x, y) = ∫_ε^M ∂ₓT_t(x, y) t^{-1/2} dt`, its splitting at
//! `t = d(Q)²`, the free local part, the perturbation kernel `W_Q`, and
//! numerical checks of the lemmas that bound them.
//!
//! In the eigenbasis the time integral is exact:
//! `R^{[ε,M]} = Σ_k w_k ∂ₓu_k(x) u_k(y) / h` with
//! `w_k = √(π/λ_k) [erf(√(Mλ_k)) − erf(√(ελ_k))]`, so the full transform is
//! `√π ∂ₓ L^{-1/2}`.

mod lemmas;

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

pub use lemmas::{
    commutator_check, commutator_check_with, core_abs_integral, default_epsilon_grid, default_lemma21_times, far_field_sum_check,
    far_field_sum_check_with, lemma21_check, lemma21_values, lemma22_check, lemma23_check, lemma21_window,
    pairing_bound_check, w_epsilon_convergence,
};

use crate::decomposition::DyadicInterval;
use crate::error::{Error, Result};
use crate::grid::{derivative, Grid, GridFunction};
use crate::semigroup::{heat_apply_coefficients, Basis, KernelMatrix, SpectralOperator};
use crate::special::{composite_gauss, erfc};

/// `√(π/λ) [erfc(√(ελ)) − erfc(√(Mλ))]`, i.e. `∫_ε^M e^{-tλ} t^{-1/2} dt`.
pub fn riesz_weight(lambda: f64, epsilon: f64, upper: f64) -> f64 {
    if upper <= epsilon {
        return 0.0;
    }
    let hi = if upper.is_infinite() { 0.0 } else { erfc((upper * lambda).sqrt()) };
    (std::f64::consts::PI / lambda).sqrt() * (erfc((epsilon * lambda).sqrt()) - hi)
}

fn check_window(epsilon: f64, upper: f64) -> Result<()> {
    if !(epsilon >= 0.0 && epsilon.is_finite() && upper >= epsilon && !upper.is_nan()) {
        return Err(Error::Domain(format!("need 0 ≤ ε ≤ M, got ε = {epsilon}, M = {upper}")));
    }
    Ok(())
}

/// Weights `w_k` for every mode of `op`.
pub fn riesz_weights(op: &SpectralOperator, epsilon: f64, upper: f64) -> Result<Vec<f64>> {
    check_window(epsilon, upper)?;
    op.check_invertible()?;
    Ok(op.eigenvalues().iter().map(|&l| riesz_weight(l, epsilon, upper)).collect())
}

/// Truncated Riesz kernel on a block of nodes, stored as densities.
#[derive(Debug, Clone)]
pub struct RieszKernel {
    kernel: KernelMatrix,
    epsilon: f64,
    upper: f64,
}

impl RieszKernel {
    pub fn kernel(&self) -> &KernelMatrix {
        &self.kernel
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `M`; infinite for the untruncated upper end.
    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.kernel.get(r, c)
    }

    pub fn grid(&self) -> &Grid {
        self.kernel.grid()
    }

    /// `max |R(x,y) + R(y,x)|` on square blocks.
    pub fn antisymmetry_defect(&self) -> Option<f64> {
        let k = &self.kernel;
        if k.rows() != k.cols() {
            return None;
        }
        let n = k.rows().len();
        let mut m = 0.0f64;
        for c in 0..n {
            for r in 0..=c {
                m = m.max((k.get(r, c) + k.get(c, r)).abs());
            }
        }
        Some(m)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        self.kernel.write_csv(out)
    }
}

fn core_nodes(grid: &Grid) -> Vec<usize> {
    grid.core_range().collect()
}

fn riesz_block(
    op: &SpectralOperator,
    epsilon: f64,
    upper: f64,
    rows: &[usize],
    cols: &[usize],
) -> Result<RieszKernel> {
    let w = riesz_weights(op, epsilon, upper)?;
    let data = op.spectral_block(Basis::Derivatives, rows, cols, &w);
    Ok(RieszKernel {
        kernel: KernelMatrix::new(
            *op.grid(),
            format!("R[{epsilon},{upper}]"),
            vec![epsilon, upper],
            rows.to_vec(),
            cols.to_vec(),
            data,
        ),
        epsilon,
        upper,
    })
}

/// `R^{[ε,M]}(x, y)` for `x, y` in the core window.
pub fn riesz_truncated(op: &SpectralOperator, epsilon: f64, upper: f64) -> Result<RieszKernel> {
    let core = core_nodes(op.grid());
    riesz_block(op, epsilon, upper, &core, &core)
}

/// `R^{[ε,M]}(x, y)` on an arbitrary block of nodes.
pub fn riesz_truncated_block(
    op: &SpectralOperator,
    epsilon: f64,
    upper: f64,
    rows: &[usize],
    cols: &[usize],
) -> Result<RieszKernel> {
    riesz_block(op, epsilon, upper, rows, cols)
}

/// `R = R^{[0,∞]}` on the core window.
pub fn riesz_full(op: &SpectralOperator) -> Result<RieszKernel> {
    riesz_truncated(op, 0.0, f64::INFINITY)
}

/// `R^{[ε,M]} f` at every node, through the eigen-coefficients of `f`.
pub fn riesz_apply(op: &SpectralOperator, epsilon: f64, upper: f64, f: &GridFunction) -> Result<GridFunction> {
    if f.grid() != op.grid() {
        return Err(Error::Domain("function and operator live on different grids".into()));
    }
    let w = riesz_weights(op, epsilon, upper)?;
    let weighted: Vec<f64> = op.coefficients(f.values()).iter().zip(&w).map(|(c, w)| c * w).collect();
    GridFunction::new(*op.grid(), op.synthesize(op.derivatives(), &weighted))
}

/// `R f`.
pub fn riesz_full_apply(op: &SpectralOperator, f: &GridFunction) -> Result<GridFunction> {
    riesz_apply(op, 0.0, f64::INFINITY, f)
}

/// `∫_ε^M ∂ₓ(T_t f) t^{-1/2} dt` evaluated as written: `t = e^u`, composite
/// midpoint rule in `u`, `T_t f` from the eigenbasis and `∂ₓ` by grid
/// differences.
pub fn riesz_quadrature(
    op: &SpectralOperator,
    f: &GridFunction,
    epsilon: f64,
    upper: f64,
    steps: usize,
) -> Result<GridFunction> {
    if !(epsilon > 0.0 && upper > epsilon && upper.is_finite()) {
        return Err(Error::Domain(format!("need 0 < ε < M < ∞, got ε = {epsilon}, M = {upper}")));
    }
    if steps == 0 {
        return Err(Error::Precondition("need at least one step".into()));
    }
    if f.grid() != op.grid() {
        return Err(Error::Domain("function and operator live on different grids".into()));
    }
    let coeffs = op.coefficients(f.values());
    let (a, b) = (epsilon.ln(), upper.ln());
    let du = (b - a) / steps as f64;
    let parts: Vec<Vec<f64>> = (0..steps)
        .into_par_iter()
        .map(|j| {
            let t = (a + (j as f64 + 0.5) * du).exp();
            let g = heat_apply_coefficients(op, t, &coeffs);
            let scale = du * t.sqrt();
            derivative(&g).values().iter().map(|v| scale * v).collect()
        })
        .collect();
    let mut out = vec![0.0; op.grid().len()];
    for p in parts {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    GridFunction::new(*op.grid(), out)
}

/// Time windows of the local and far parts at cutoff `ε`:
/// local `[ε, d²]`, far `[d², 1/ε]` when `ε < d² < 1/ε`; everything is far
/// when `d² ≤ ε` and local when `d² ≥ 1/ε`. `None` marks a zero part.
pub fn split_windows(d2: f64, epsilon: f64) -> (Option<(f64, f64)>, Option<(f64, f64)>) {
    let top = 1.0 / epsilon;
    if d2 <= epsilon {
        (None, Some((epsilon, top)))
    } else if d2 >= top {
        (Some((epsilon, top)), None)
    } else {
        (Some((epsilon, d2)), Some((d2, top)))
    }
}

/// `(R^ε_{Q,0}, R^ε_{Q,∞})` on the core window.
pub fn split_kernels(op: &SpectralOperator, q: &DyadicInterval, epsilon: f64) -> Result<(RieszKernel, RieszKernel)> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("need 0 < ε < 1, got {epsilon}")));
    }
    let d2 = q.diameter().powi(2);
    let (local, far) = split_windows(d2, epsilon);
    // an empty window gives the zero kernel with the same block layout
    let local = local.unwrap_or((epsilon, epsilon));
    let far = far.unwrap_or((epsilon, epsilon));
    Ok((riesz_truncated(op, local.0, local.1)?, riesz_truncated(op, far.0, far.1)?))
}

/// `∫_ε^D ∂ₓP_t(z) t^{-1/2} dt = (e^{-z²/4D} − e^{-z²/4ε}) / (-√π z)`.
pub fn free_local_kernel(z: f64, epsilon: f64, d2: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    let a = z * z / (4.0 * d2);
    let b = if epsilon > 0.0 { z * z / (4.0 * epsilon) } else { f64::INFINITY };
    // e^{-a} − e^{-b} = −e^{-a}·expm1(a − b)
    (-a).exp() * (a - b).exp_m1() / (std::f64::consts::PI.sqrt() * z)
}

/// `H^ε_Q f(x) = ∫_ε^{d(Q)²} ∂ₓ(f * P_t)(x) t^{-1/2} dt`, with the time
/// integral of the free kernel in closed form and the convolution by the
/// grid trapezoid rule.
pub fn local_riesz_free(q: &DyadicInterval, f: &GridFunction, epsilon: f64) -> Result<GridFunction> {
    let d2 = q.diameter().powi(2);
    if !(epsilon > 0.0 && epsilon < d2) {
        return Err(Error::Domain(format!("need 0 < ε < d(Q)² = {d2}, got {epsilon}")));
    }
    let grid = *f.grid();
    let w = grid.weights();
    let support: Vec<(f64, f64)> = f
        .values()
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| (grid.x(i), v * w[i]))
        .collect();
    let out: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = grid.x(i);
            support.iter().map(|&(y, fy)| free_local_kernel(x - y, epsilon, d2) * fy).sum()
        })
        .collect();
    GridFunction::new(grid, out)
}

/// Largest `d(Q)²` for which kernels up to time `d(Q)²` are trusted on the
/// core window.
pub fn reliable_time(grid: &Grid) -> f64 {
    grid.half_width().powi(2) / 16.0
}

fn check_reliable(grid: &Grid, q: &DyadicInterval) -> Result<()> {
    let d2 = q.diameter().powi(2);
    let limit = reliable_time(grid);
    if d2 > limit * (1.0 + 1e-12) {
        return Err(Error::Range {
            message: format!("d(Q)² = {d2} exceeds the reliable time {limit}"),
            suggestion: Some(limit.sqrt()),
        });
    }
    Ok(())
}

/// Weights of `∫_ε^{d²} ∂ₓ(T_t − P̃_t) t^{-1/2} dt` split over the two
/// spectral bases, `P̃` being the free semigroup on the same grid.
fn w_weights(op: &SpectralOperator, free: &SpectralOperator, epsilon: f64, d2: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok((riesz_weights(op, epsilon, d2)?, riesz_weights(free, epsilon, d2)?))
}

/// `W^ε_Q(x, y) = ∫_ε^{d(Q)²} ∂ₓ(T_t(x,y) − P_t(x−y)) t^{-1/2} dt`.
///
/// `P_t` is taken from the `V ≡ 0` operator on the same grid, so that the
/// near-diagonal discretization of the two singular parts cancels.
pub fn w_kernel_block(
    op: &SpectralOperator,
    q: &DyadicInterval,
    epsilon: f64,
    rows: &[usize],
    cols: &[usize],
) -> Result<KernelMatrix> {
    check_reliable(op.grid(), q)?;
    let d2 = q.diameter().powi(2);
    if !(epsilon >= 0.0 && epsilon < d2) {
        return Err(Error::Domain(format!("need 0 ≤ ε < d(Q)² = {d2}, got {epsilon}")));
    }
    let free = op.free_companion()?;
    let (wv, wf) = w_weights(op, &free, epsilon, d2)?;
    let a = op.spectral_block(Basis::Derivatives, rows, cols, &wv);
    let b = free.spectral_block(Basis::Derivatives, rows, cols, &wf);
    Ok(KernelMatrix::new(
        *op.grid(),
        format!("W[{epsilon},{d2}]"),
        vec![epsilon, d2],
        rows.to_vec(),
        cols.to_vec(),
        a - b,
    ))
}

/// Nodes of `Q*` inside the core window.
pub fn star_nodes(grid: &Grid, q: &DyadicInterval, beta: f64) -> Vec<usize> {
    let core = grid.core_range();
    grid.indices_in(&q.dilate(1, beta)).filter(|i| core.contains(i)).collect()
}

/// `W_Q(x, y)` for core `x` and `y ∈ Q*` (at `β = 1/8`).
pub fn w_kernel(op: &SpectralOperator, q: &DyadicInterval) -> Result<KernelMatrix> {
    let grid = *op.grid();
    let cols = star_nodes(&grid, q, crate::decomposition::DEFAULT_BETA);
    w_kernel_block(op, q, 0.0, &core_nodes(&grid), &cols)
}

/// `W^ε_Q f` at every node.
pub fn w_apply(op: &SpectralOperator, q: &DyadicInterval, epsilon: f64, f: &GridFunction) -> Result<GridFunction> {
    check_reliable(op.grid(), q)?;
    let d2 = q.diameter().powi(2);
    if !(epsilon >= 0.0 && epsilon < d2) {
        return Err(Error::Domain(format!("need 0 ≤ ε < d(Q)² = {d2}, got {epsilon}")));
    }
    let free = op.free_companion()?;
    let (wv, wf) = w_weights(op, &free, epsilon, d2)?;
    let cv: Vec<f64> = op.coefficients(f.values()).iter().zip(&wv).map(|(c, w)| c * w).collect();
    let cf: Vec<f64> = free.coefficients(f.values()).iter().zip(&wf).map(|(c, w)| c * w).collect();
    let a = op.synthesize(op.derivatives(), &cv);
    let b = free.synthesize(free.derivatives(), &cf);
    GridFunction::new(*op.grid(), a.iter().zip(&b).map(|(x, y)| x - y).collect())
}

/// `W_Q` by `t = s²` Gauss quadrature of the kernel difference,
/// `2 ∫_0^{d(Q)} ∂ₓ(T_{s²} − P̃_{s²}) ds`; a second route to
/// [`w_kernel_block`].
pub fn w_kernel_quadrature(
    op: &SpectralOperator,
    q: &DyadicInterval,
    rows: &[usize],
    cols: &[usize],
    panels: usize,
) -> Result<KernelMatrix> {
    check_reliable(op.grid(), q)?;
    let free = op.free_companion()?;
    let d = q.diameter();
    let mut acc = faer::Mat::<f64>::zeros(rows.len(), cols.len());
    for (s, w) in composite_gauss(0.0, d, panels, 8) {
        let t = s * s;
        let gv: Vec<f64> = op.eigenvalues().iter().map(|l| (-t * l).exp()).collect();
        let gf: Vec<f64> = free.eigenvalues().iter().map(|l| (-t * l).exp()).collect();
        let a = op.spectral_block(Basis::Derivatives, rows, cols, &gv);
        let b = free.spectral_block(Basis::Derivatives, rows, cols, &gf);
        acc += (a - b) * faer::Scale(2.0 * w);
    }
    Ok(KernelMatrix::new(
        *op.grid(),
        format!("W[0,{}]", d * d),
        vec![0.0, d * d],
        rows.to_vec(),
        cols.to_vec(),
        acc,
    ))
}

/// Operator for the same potential on the grid with spacing halved.
pub fn refined_operator(op: &SpectralOperator) -> Result<Arc<SpectralOperator>> {
    let grid = op.grid().refined();
    if op.potential().is_rescaled() {
        return Ok(Arc::new(crate::semigroup::discretize(op.potential(), &grid)?));
    }
    crate::cache::operator(op.potential().spec(), &grid)
}
