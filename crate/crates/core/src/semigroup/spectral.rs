use std::sync::{Arc, OnceLock};

use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::grid::{derivative_dirichlet, neg_d2_stencil, Grid, GridFunction, STENCIL_REACH};

use super::potential::{Potential, PotentialSpec};

/// Modes with `t·(λ_k − λ_0)` above this contribute less than `e^{-46}` and
/// are dropped from heat sums.
const MODE_CUTOFF: f64 = 46.0;

/// Full eigendecomposition of the discretized `L = -d²/dx² + V` on
/// `[-L, L]` with Dirichlet ends.
///
/// `-d²/dx²` uses the 17-point sixteenth-order stencil; ghost values past
/// either end are the odd reflection of the interior, which keeps the
/// matrix symmetric. Eigenvectors are orthonormal in plain ℓ² over the
/// interior nodes and stored over the full grid (zero at both ends), so a
/// kernel density is `Σ_k g(λ_k) u_k(x) u_k(y) / h`.
#[derive(Debug)]
pub struct SpectralOperator {
    grid: Grid,
    potential: Potential,
    samples: Vec<f64>,
    eigenvalues: Vec<f64>,
    vectors: Mat<f64>,
    derivatives: OnceLock<Mat<f64>>,
    core_mass: OnceLock<Vec<f64>>,
    free: OnceLock<Arc<SpectralOperator>>,
}

impl SpectralOperator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn potential_samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn potential_function(&self) -> GridFunction {
        GridFunction::from_raw(self.grid, self.samples.clone())
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn bottom(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Eigenvector `k` at node `i`.
    #[inline]
    pub fn vector(&self, i: usize, k: usize) -> f64 {
        self.vectors[(i, k)]
    }

    pub fn vectors(&self) -> &Mat<f64> {
        &self.vectors
    }

    /// `∂ₓu_k` at every node, with odd reflection at the ends.
    pub fn derivatives(&self) -> &Mat<f64> {
        self.derivatives.get_or_init(|| {
            let n = self.grid.len();
            let h = self.grid.spacing();
            let mut d = Mat::<f64>::zeros(n, self.modes());
            for k in 0..self.modes() {
                let col = self.vectors.col_as_slice(k);
                let dcol = derivative_dirichlet(col, h);
                d.col_as_slice_mut(k).copy_from_slice(&dcol);
            }
            d
        })
    }

    /// `Σ_x w_x u_k(x) / h` over the core window, so that the core mass of
    /// `T_t(·, y)` is `Σ_k e^{-tλ_k} u_k(y) c_k`.
    pub fn core_mass_coefficients(&self) -> &[f64] {
        self.core_mass.get_or_init(|| {
            let h = self.grid.spacing();
            let w = self.grid.window_weights(&self.grid.core());
            let range = self.grid.core_range();
            (0..self.modes())
                .map(|k| {
                    range
                        .clone()
                        .map(|i| w[i] * self.vectors[(i, k)])
                        .sum::<f64>()
                        / h
                })
                .collect()
        })
    }

    /// The `V ≡ 0` operator on the same grid, used where the free
    /// semigroup has to carry the same discretization as this one.
    pub fn free_companion(&self) -> Result<Arc<SpectralOperator>> {
        if let Some(op) = self.free.get() {
            return Ok(op.clone());
        }
        let op = crate::cache::operator(&PotentialSpec::free(), &self.grid)?;
        Ok(self.free.get_or_init(|| op).clone())
    }

    /// Number of leading modes that matter at time `t`.
    pub fn active_modes(&self, t: f64) -> usize {
        if t <= 0.0 {
            return self.modes();
        }
        let base = self.eigenvalues[0];
        self.eigenvalues
            .partition_point(|&l| t * (l - base) <= MODE_CUTOFF)
            .max(1)
    }

    /// `⟨f, u_k⟩` in plain ℓ² for every mode.
    pub fn coefficients(&self, values: &[f64]) -> Vec<f64> {
        (0..self.modes())
            .map(|k| {
                self.vectors
                    .col_as_slice(k)
                    .iter()
                    .zip(values)
                    .map(|(u, f)| u * f)
                    .sum()
            })
            .collect()
    }

    /// `Σ_k weights_k coeffs_k basis_k(i)` over all nodes, `basis` being
    /// either the eigenvectors or their derivatives.
    pub(crate) fn synthesize(&self, basis: &Mat<f64>, weighted: &[f64]) -> Vec<f64> {
        let n = self.grid.len();
        let mut out = vec![0.0; n];
        for (k, &c) in weighted.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for (o, u) in out.iter_mut().zip(basis.col_as_slice(k)) {
                *o += c * u;
            }
        }
        out
    }

    /// Dense block `Σ_{k<modes} g_k A(rows, k) B(cols, k) / h` where `A`, `B`
    /// are the eigenvectors or their derivatives.
    pub(crate) fn spectral_block(
        &self,
        left: Basis,
        rows: &[usize],
        cols: &[usize],
        weights: &[f64],
    ) -> Mat<f64> {
        let modes = weights.len();
        let h = self.grid.spacing();
        let lb = match left {
            Basis::Vectors => &self.vectors,
            Basis::Derivatives => self.derivatives(),
        };
        let a = Mat::<f64>::from_fn(rows.len(), modes, |r, k| lb[(rows[r], k)] * weights[k] / h);
        let b = Mat::<f64>::from_fn(cols.len(), modes, |c, k| self.vectors[(cols[c], k)]);
        &a * b.transpose()
    }

    pub fn check_invertible(&self) -> Result<()> {
        if self.eigenvalues[0] <= 0.0 {
            return Err(Error::SingularOperator(format!(
                "bottom eigenvalue {} is not positive",
                self.eigenvalues[0]
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Basis {
    Vectors,
    Derivatives,
}

/// Assemble and diagonalize `-d²/dx² + V` on `grid`.
pub fn discretize(potential: &Potential, grid: &Grid) -> Result<SpectralOperator> {
    let n = grid.len();
    if n < 2 * STENCIL_REACH + 1 {
        return Err(Error::Domain(format!(
            "need at least {} grid points, got {n}",
            2 * STENCIL_REACH + 1
        )));
    }
    let h = grid.spacing();
    let samples: Vec<f64> = grid.points().into_iter().map(|x| potential.eval(x)).collect();
    if let Some(i) = samples.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Domain(format!(
            "potential value {} at x = {} is not finite and nonnegative",
            samples[i],
            grid.x(i)
        )));
    }

    // interior unknowns are nodes 1..n-1, local index m = node - 1
    let dim = n - 2;
    let stencil = neg_d2_stencil(STENCIL_REACH);
    let inv_h2 = 1.0 / (h * h);
    let mut a = Mat::<f64>::zeros(dim, dim);
    for m in 0..dim {
        let node = m + 1;
        a[(m, m)] += stencil[0] * inv_h2 + samples[node];
        for off in 1..=STENCIL_REACH {
            let c = stencil[off] * inv_h2;
            if m + off < dim {
                a[(m, m + off)] += c;
            }
            if m >= off {
                a[(m, m - off)] += c;
            }
            // ghost node `node - off` below the left end reflects to
            // `off - node` with a sign flip
            if off > node {
                let mirror = off - node;
                a[(m, mirror - 1)] -= c;
            }
            let last = n - 1;
            if node + off > last {
                let mirror = 2 * last - (node + off);
                a[(m, mirror - 1)] -= c;
            }
        }
    }

    let evd = a.self_adjoint_eigen(Side::Lower).map_err(|_| {
        let (lo, hi) = (0..dim).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
            (lo.min(a[(i, i)]), hi.max(a[(i, i)]))
        });
        Error::Eigen {
            dim,
            diag_min: lo,
            diag_max: hi,
            offdiag: stencil[1].abs() * inv_h2,
        }
    })?;
    let eigenvalues: Vec<f64> = evd.S().column_vector().iter().copied().collect();
    let u = evd.U();
    let mut vectors = Mat::<f64>::zeros(n, dim);
    for k in 0..dim {
        // fix the sign so the largest-magnitude component is positive
        let mut best = 0.0f64;
        for m in 0..dim {
            if u[(m, k)].abs() > best.abs() {
                best = u[(m, k)];
            }
        }
        let sign = if best < 0.0 { -1.0 } else { 1.0 };
        for m in 0..dim {
            vectors[(m + 1, k)] = sign * u[(m, k)];
        }
    }
    Ok(SpectralOperator {
        grid: *grid,
        potential: potential.clone(),
        samples,
        eigenvalues,
        vectors,
        derivatives: OnceLock::new(),
        core_mass: OnceLock::new(),
        free: OnceLock::new(),
    })
}
