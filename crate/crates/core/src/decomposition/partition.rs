use crate::error::{Error, Result};
use crate::grid::{derivative, Grid, GridFunction};

use super::CubeFamily;

/// `C^∞` step: 0 for `u ≤ -1`, 1 for `u ≥ 1`, with `S(u) + S(-u) = 1`.
pub fn smooth_step(u: f64) -> f64 {
    if u <= -1.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    let f = |s: f64| (-1.0 / s).exp();
    let (a, b) = (f(1.0 + u), f(1.0 - u));
    a / (a + b)
}

/// Smooth partition of unity subordinate to `{Q*}`.
#[derive(Debug, Clone)]
pub struct PartitionOfUnity {
    pub functions: Vec<GridFunction>,
    /// `max_Q max_x |φ′_Q(x)|·d(Q)` from the grid derivative.
    pub gradient_constant: f64,
    /// `max |Σφ_Q − 1|` over core nodes.
    pub sum_defect: f64,
}

/// Each `1_Q` is mollified at scale `r = β·d(Q)/4` (support
/// `[a − r, b + r]`, inside the open `Q*`) and the results are normalized by
/// their sum. Outside the family's domain, where the sum may vanish, every
/// `φ_Q` is set to zero.
pub fn partition_of_unity(family: &CubeFamily, grid: &Grid) -> Result<PartitionOfUnity> {
    let n = grid.len();
    let domain = family.domain();
    let raw: Vec<Vec<f64>> = family
        .intervals()
        .iter()
        .map(|q| {
            let r = family.beta() * q.diameter() / 4.0;
            let (a, b) = (q.lo(), q.hi());
            (0..n)
                .map(|i| {
                    let x = grid.x(i);
                    smooth_step((x - a) / r) - smooth_step((x - b) / r)
                })
                .collect()
        })
        .collect();
    let mut sum = vec![0.0; n];
    for f in &raw {
        for (s, v) in sum.iter_mut().zip(f) {
            *s += v;
        }
    }
    for i in grid.indices_in(&domain) {
        if sum[i] <= 0.0 {
            return Err(Error::FamilyInvalid(format!(
                "partition of unity vanishes at x = {}",
                grid.x(i)
            )));
        }
    }
    let mut functions = Vec::with_capacity(raw.len());
    let mut gradient_constant = 0.0f64;
    for (q, f) in family.intervals().iter().zip(raw) {
        let values: Vec<f64> = f
            .iter()
            .zip(&sum)
            .map(|(v, s)| if *s > 0.0 { v / s } else { 0.0 })
            .collect();
        let phi = GridFunction::from_raw(*grid, values);
        gradient_constant = gradient_constant.max(derivative(&phi).sup_norm() * q.diameter());
        functions.push(phi);
    }
    let mut sum_defect = 0.0f64;
    for i in grid.indices_in(&domain) {
        let s: f64 = functions.iter().map(|f| f.values()[i]).sum();
        sum_defect = sum_defect.max((s - 1.0).abs());
    }
    Ok(PartitionOfUnity {
        functions,
        gradient_constant,
        sum_defect,
    })
}
