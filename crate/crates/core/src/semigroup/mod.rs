//! Discretized Schrödinger operator, its heat semigroup and structural checks
//! (Gaussian domination, the Duhamel identity, mass decay, scaling).

mod potential;
mod spectral;

use std::io::Write;

use faer::Mat;

pub use potential::{GridSpec, Potential, PotentialFamily, PotentialFile, PotentialSpec};
pub use spectral::{discretize, SpectralOperator};
pub(crate) use spectral::Basis;

use crate::error::{Error, Result};
use crate::grid::{free_kernel_unchecked, Grid, GridFunction};
use crate::report::{Report, Table};
use crate::sampling::evenly_spaced;

/// Kernel densities `K(x_i, y_j)` on a block of grid nodes.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    grid: Grid,
    label: String,
    times: Vec<f64>,
    rows: Vec<usize>,
    cols: Vec<usize>,
    data: Mat<f64>,
}

impl KernelMatrix {
    pub(crate) fn new(
        grid: Grid,
        label: impl Into<String>,
        times: Vec<f64>,
        rows: Vec<usize>,
        cols: Vec<usize>,
        data: Mat<f64>,
    ) -> Self {
        debug_assert_eq!(data.nrows(), rows.len());
        debug_assert_eq!(data.ncols(), cols.len());
        Self {
            grid,
            label: label.into(),
            times,
            rows,
            cols,
            data,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Node indices of the rows (`x`).
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    /// Node indices of the columns (`y`).
    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    /// Entry by local row/column position.
    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[(r, c)]
    }

    pub fn data(&self) -> &Mat<f64> {
        &self.data
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows.len()).map(|r| self.data[(r, c)]).collect()
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for c in 0..self.data.ncols() {
            for r in 0..self.data.nrows() {
                m = m.max(self.data[(r, c)].abs());
            }
        }
        m
    }

    /// `max |K - Kᵀ|` for square blocks over the same nodes.
    pub fn symmetry_defect(&self) -> Option<f64> {
        if self.rows != self.cols {
            return None;
        }
        let n = self.rows.len();
        let mut m = 0.0f64;
        for c in 0..n {
            for r in 0..c {
                m = m.max((self.data[(r, c)] - self.data[(c, r)]).abs());
            }
        }
        Some(m)
    }

    /// Entrywise combination of two kernels on the same block.
    pub fn zip_with(&self, other: &KernelMatrix, label: &str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Domain("kernel blocks differ".into()));
        }
        let data = Mat::from_fn(self.rows.len(), self.cols.len(), |r, c| {
            f(self.data[(r, c)], other.data[(r, c)])
        });
        Ok(Self::new(self.grid, label, self.times.clone(), self.rows.clone(), self.cols.clone(), data))
    }

    /// `∫ |K(x, y_c)| dx` over the row nodes, cell-weighted.
    pub fn column_l1(&self, c: usize) -> f64 {
        let w = self.grid.weights();
        self.rows
            .iter()
            .enumerate()
            .map(|(r, &i)| w[i] * self.data[(r, c)].abs())
            .sum()
    }

    /// CSV with one line per `x` node: `x_index, x, K(x, y_0), …`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let mut header = vec!["x_index".to_string(), "x".to_string()];
        header.extend(self.cols.iter().map(|&j| format!("y[{j}]={}", fmt17(self.grid.x(j)))));
        wtr.write_record(&header)?;
        for (r, &i) in self.rows.iter().enumerate() {
            let mut rec = vec![i.to_string(), fmt17(self.grid.x(i))];
            rec.extend((0..self.cols.len()).map(|c| fmt17(self.data[(r, c)])));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<kernel csv>", e))?;
        Ok(())
    }
}

/// Seventeen significant digits, decimal point, exponent form.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn check_time(t: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::Domain(format!("time must be positive and finite, got {t}")));
    }
    Ok(())
}

fn core_nodes(grid: &Grid) -> Vec<usize> {
    grid.core_range().collect()
}

fn check_in_core(grid: &Grid, y: usize) -> Result<()> {
    if !grid.core_range().contains(&y) {
        return Err(Error::Domain(format!("node {y} is outside the core window")));
    }
    Ok(())
}

/// `T_t(x, y)` on an arbitrary block of nodes.
pub fn heat_kernel_block(op: &SpectralOperator, t: f64, rows: &[usize], cols: &[usize]) -> Result<KernelMatrix> {
    check_time(t)?;
    let modes = op.active_modes(t);
    let weights: Vec<f64> = op.eigenvalues()[..modes].iter().map(|l| (-t * l).exp()).collect();
    let data = op.spectral_block(Basis::Vectors, rows, cols, &weights);
    Ok(KernelMatrix::new(
        *op.grid(),
        format!("T_{t}"),
        vec![t],
        rows.to_vec(),
        cols.to_vec(),
        data,
    ))
}

/// `T_t(x, y)` for `x, y` in the core window.
pub fn heat_kernel(op: &SpectralOperator, t: f64) -> Result<KernelMatrix> {
    let core = core_nodes(op.grid());
    heat_kernel_block(op, t, &core, &core)
}

/// `∂ₓT_t(x, y)` on a block of nodes.
pub fn heat_kernel_dx_block(op: &SpectralOperator, t: f64, rows: &[usize], cols: &[usize]) -> Result<KernelMatrix> {
    check_time(t)?;
    let modes = op.active_modes(t);
    let weights: Vec<f64> = op.eigenvalues()[..modes].iter().map(|l| (-t * l).exp()).collect();
    let data = op.spectral_block(Basis::Derivatives, rows, cols, &weights);
    Ok(KernelMatrix::new(
        *op.grid(),
        format!("dT_{t}"),
        vec![t],
        rows.to_vec(),
        cols.to_vec(),
        data,
    ))
}

/// `T_t f = Σ_k e^{-tλ_k} ⟨f, u_k⟩ u_k`; `t = 0` is the projection onto the
/// eigenbasis.
pub fn heat_apply(op: &SpectralOperator, t: f64, f: &GridFunction) -> Result<GridFunction> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Domain(format!("time must be nonnegative, got {t}")));
    }
    if f.grid() != op.grid() {
        return Err(Error::Domain("function and operator live on different grids".into()));
    }
    let coeffs = op.coefficients(f.values());
    Ok(heat_apply_coefficients(op, t, &coeffs))
}

/// `T_t` applied to a function given by its eigen-coefficients.
pub fn heat_apply_coefficients(op: &SpectralOperator, t: f64, coeffs: &[f64]) -> GridFunction {
    let modes = op.active_modes(t);
    let weighted: Vec<f64> = coeffs[..modes]
        .iter()
        .zip(op.eigenvalues())
        .map(|(c, l)| c * (-t * l).exp())
        .collect();
    GridFunction::from_raw(*op.grid(), op.synthesize(op.vectors(), &weighted))
}

/// Gaussian domination `0 ≤ T_t(x,y) ≤ P_t(x − y)` on the core window.
pub fn feynman_kac_check(op: &SpectralOperator, t_set: &[f64]) -> Result<Report> {
    if t_set.is_empty() {
        return Err(Error::Precondition("empty time set".into()));
    }
    let grid = *op.grid();
    let core = core_nodes(&grid);
    let mut table = Table::new(
        "feynman_kac",
        &["t", "max_excess_over_gaussian", "max_negative_part", "max_ratio_to_gaussian"],
    );
    let (mut worst_excess, mut worst_negative) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &t in t_set {
        let k = heat_kernel(op, t)?;
        let (mut excess, mut negative, mut ratio) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0f64);
        // ratios only where the Gaussian is resolved above roundoff
        let floor = 1e-6 * free_kernel_unchecked(t, 0.0);
        for (c, &j) in core.iter().enumerate() {
            for (r, &i) in core.iter().enumerate() {
                let p = free_kernel_unchecked(t, grid.x(i) - grid.x(j));
                let v = k.get(r, c);
                excess = excess.max(v - p);
                negative = negative.max(-v);
                if p > floor {
                    ratio = ratio.max(v / p);
                }
            }
        }
        worst_excess = worst_excess.max(excess);
        worst_negative = worst_negative.max(negative);
        table.push(vec![t, excess, negative, ratio]);
    }
    let mut report = Report::new("feynman_kac");
    report
        .value("max_excess", worst_excess)
        .value("max_negative", worst_negative)
        .verdict("domination", worst_excess <= 1e-6)
        .verdict("positivity", worst_negative <= 1e-8)
        .table(table)
        .note(format!("potential {}", op.potential().name()));
    Ok(report)
}

/// Smallest time whose Gaussian width `√(2t)` spans `4h`, the finest length
/// the cube clamps admit. Below it the grid kernel no longer resolves `P_t`:
/// at `n = 2049` the free operator exceeds `P_t` by 1.4e-6 at `t = 2^{-10}`.
pub fn resolved_time(grid: &Grid) -> f64 {
    8.0 * grid.spacing().powi(2)
}

/// Column probes used for sups over `y` in the core: 33 evenly spaced
/// core nodes.
pub fn core_probes(grid: &Grid) -> Vec<usize> {
    evenly_spaced(&core_nodes(grid), 33)
}

/// Sup over core `x` and probe `y` of `T_t − P_t + ∫₀ᵗ P_{t−s} V T_s ds`,
/// the `s`-integral by the composite midpoint rule.
pub fn duhamel_residual(op: &SpectralOperator, t: f64, s_steps: usize) -> Result<f64> {
    duhamel_residual_at(op, t, s_steps, &core_probes(op.grid()))
}

pub fn duhamel_residual_at(op: &SpectralOperator, t: f64, s_steps: usize, probes: &[usize]) -> Result<f64> {
    check_time(t)?;
    if s_steps < 8 {
        return Err(Error::Precondition(format!("need at least 8 s-steps, got {s_steps}")));
    }
    let grid = *op.grid();
    let n = grid.len();
    let h = grid.spacing();
    let core = core_nodes(&grid);
    let all: Vec<usize> = (0..n).collect();
    let weights = grid.weights();
    let v = op.potential_samples();
    let vw: Vec<f64> = v.iter().zip(&weights).map(|(a, b)| a * b).collect();

    let mut acc = Mat::<f64>::zeros(core.len(), probes.len());
    if v.iter().any(|&x| x != 0.0) {
        let ds = t / s_steps as f64;
        for j in 0..s_steps {
            let s = (j as f64 + 0.5) * ds;
            let ts = heat_kernel_block(op, s, &all, probes)?;
            let tau = t - s;
            let vts = Mat::<f64>::from_fn(n, probes.len(), |z, c| vw[z] * ts.get(z, c));
            // P_{t-s}(x - z) only depends on the offset
            let by_offset: Vec<f64> = (0..n).map(|d| free_kernel_unchecked(tau, d as f64 * h)).collect();
            let g = Mat::<f64>::from_fn(core.len(), n, |r, z| by_offset[core[r].abs_diff(z)]);
            let contrib = &g * &vts;
            for c in 0..probes.len() {
                for r in 0..core.len() {
                    acc[(r, c)] += ds * contrib[(r, c)];
                }
            }
        }
    }
    let tt = heat_kernel_block(op, t, &core, probes)?;
    let mut worst = 0.0f64;
    for (c, &y) in probes.iter().enumerate() {
        for (r, &x) in core.iter().enumerate() {
            let p = free_kernel_unchecked(t, grid.x(x) - grid.x(y));
            worst = worst.max((tt.get(r, c) - p + acc[(r, c)]).abs());
        }
    }
    Ok(worst)
}

/// `∫_core T_t(x, y) dx`.
pub fn mass(op: &SpectralOperator, t: f64, y: usize) -> Result<f64> {
    check_time(t)?;
    check_in_core(op.grid(), y)?;
    Ok(mass_unchecked(op, t, y))
}

pub(crate) fn mass_unchecked(op: &SpectralOperator, t: f64, y: usize) -> f64 {
    let c = op.core_mass_coefficients();
    let modes = op.active_modes(t);
    (0..modes)
        .map(|k| (-t * op.eigenvalues()[k]).exp() * op.vector(y, k) * c[k])
        .sum()
}

/// `∫₀^∞ ∫ V(z) T_s(z, y) dz ds = (L⁻¹V)(y)` in closed spectral form.
pub fn global_absorption(op: &SpectralOperator, y: usize) -> Result<f64> {
    check_in_core(op.grid(), y)?;
    if op.potential().is_free() {
        return Ok(0.0);
    }
    op.check_invertible()?;
    let coeffs = op.coefficients(op.potential_samples());
    Ok(coeffs
        .iter()
        .zip(op.eigenvalues())
        .enumerate()
        .map(|(k, (c, l))| c / l * op.vector(y, k))
        .sum())
}

/// Compare `T_t(x, y)` with `t^{-1/2} T̃_1(x/√t, y/√t)`, where `T̃` is
/// generated by `-d²/dx² + tV(√t·)` on the grid rescaled by `1/√t`.
pub fn scaling_check(op: &SpectralOperator, t: f64) -> Result<Report> {
    check_time(t)?;
    let grid = *op.grid();
    let half = grid.half_width() / t.sqrt();
    if !(half.is_finite() && (1e-3..=1e6).contains(&half)) {
        return Err(Error::Domain(format!("rescaled half width {half} out of range")));
    }
    let scaled_grid = Grid::new(half, grid.len(), grid.core_fraction())?;
    let companion = discretize(&op.potential().rescaled(t)?, &scaled_grid)?;
    let direct = heat_kernel(op, t)?;
    let scaled = heat_kernel(&companion, 1.0)?;
    let factor = t.powf(-0.5);
    let mut worst = 0.0f64;
    let core = core_nodes(&grid);
    for c in 0..core.len() {
        for r in 0..core.len() {
            worst = worst.max((direct.get(r, c) - factor * scaled.get(r, c)).abs());
        }
    }
    let mut report = Report::new("scaling");
    report
        .value("t", t)
        .value("discrepancy", worst)
        .value("kernel_max", direct.max_abs())
        .note(format!("potential {}", op.potential().name()));
    Ok(report)
}

#[cfg(test)]
mod tests;
