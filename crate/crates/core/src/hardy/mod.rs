//! Heat maximal function, the `H¹_L` norm `‖sup_t |T_t f|‖₁`, atoms, and the
//! quantities compared by the Riesz characterization
//! `‖f‖_{H¹_L} ≈ ‖f‖₁ + ‖Rf‖₁`.

mod atoms;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use atoms::{build_atom, make_atom, Atom, AtomKind, AtomLibrary, AtomSpec, Profile};

use crate::decomposition::CubeFamily;
use crate::error::{Error, Result};
use crate::grid::{core_l1, Grid, GridFunction};
use crate::report::{Report, Table};
use crate::riesz::{refined_operator, riesz_full_apply};
use crate::sampling::evenly_spaced;
use crate::semigroup::{heat_apply_coefficients, SpectralOperator};

/// `t = 2^{-k/per_octave}` for `k = -2·per_octave ..= 20·per_octave`,
/// clipped to `[h², 4]`.
pub fn t_grid(grid: &Grid, per_octave: usize) -> Vec<f64> {
    assert!(per_octave > 0);
    let lo = grid.spacing().powi(2);
    let p = per_octave as i32;
    (-2 * p..=20 * p)
        .map(|k| 2f64.powf(-(k as f64) / p as f64))
        .filter(|&t| t >= lo && t <= 4.0)
        .collect()
}

/// One point per octave.
pub fn default_t_grid(grid: &Grid) -> Vec<f64> {
    t_grid(grid, 1)
}

/// `max(|f|, max_{t ∈ t_grid} |T_t f|)` at every node.
pub fn maximal_function(op: &SpectralOperator, f: &GridFunction, t_grid: &[f64]) -> Result<GridFunction> {
    if f.grid() != op.grid() {
        return Err(Error::Domain("function and operator live on different grids".into()));
    }
    if t_grid.is_empty() {
        return Err(Error::Precondition("empty t grid".into()));
    }
    if let Some(t) = t_grid.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(Error::Domain(format!("time {t} is not positive")));
    }
    let coeffs = op.coefficients(f.values());
    let parts: Vec<GridFunction> = t_grid
        .par_iter()
        .map(|&t| heat_apply_coefficients(op, t, &coeffs))
        .collect();
    let mut out = f.map(f64::abs);
    for p in &parts {
        out = out.zip_with(p, |a, b| a.max(b.abs()));
    }
    Ok(out)
}

/// `‖M_L f‖_{L¹(core)}` on the default t grid.
pub fn h1_norm(op: &SpectralOperator, f: &GridFunction) -> Result<f64> {
    h1_norm_with(op, f, &default_t_grid(op.grid()))
}

pub fn h1_norm_with(op: &SpectralOperator, f: &GridFunction, t_grid: &[f64]) -> Result<f64> {
    Ok(core_l1(&maximal_function(op, f, t_grid)?))
}

/// `‖f‖_{L¹(core)} + ‖Rf‖_{L¹(core)}`.
pub fn riesz_norm(op: &SpectralOperator, f: &GridFunction) -> Result<f64> {
    Ok(core_l1(f) + core_l1(&riesz_full_apply(op, f)?))
}

/// `‖f‖_{H¹_L} / (‖f‖₁ + ‖Rf‖₁)`.
pub fn equivalence_ratio(op: &SpectralOperator, f: &GridFunction) -> Result<f64> {
    equivalence_ratio_with(op, f, &default_t_grid(op.grid()))
}

pub fn equivalence_ratio_with(op: &SpectralOperator, f: &GridFunction, t_grid: &[f64]) -> Result<f64> {
    if core_l1(f) == 0.0 {
        return Err(Error::Degenerate("f vanishes on the core window".into()));
    }
    Ok(h1_norm_with(op, f, t_grid)? / riesz_norm(op, f)?)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn atom_norms(op: &SpectralOperator, atoms: &[Atom]) -> Result<Vec<(f64, f64)>> {
    let t = default_t_grid(op.grid());
    atoms
        .par_iter()
        .map(|a| {
            let r = core_l1(&riesz_full_apply(op, &a.values)?);
            Ok((r, h1_norm_with(op, &a.values, &t)?))
        })
        .collect()
}

fn relative_change(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// `‖Ra‖₁` and `‖a‖_{H¹_L}` over `n_atoms` seeded atoms of `family`, with
/// max, median and spread, and the same library re-evaluated after
/// `h → h/2`.
pub fn atom_bound_suite(op: &SpectralOperator, family: &CubeFamily, n_atoms: usize, seed: u64) -> Result<Report> {
    if n_atoms == 0 {
        return Err(Error::Precondition("need at least one atom".into()));
    }
    let library = AtomLibrary::generate(family, op.grid(), n_atoms, seed)?;
    let mut report = atom_bound_report(op, &library)?;
    let fine_op = refined_operator(op)?;
    let fine = atom_bound_report(&fine_op, &library)?;
    for key in ["riesz_max", "riesz_median", "h1_max", "h1_median"] {
        let d = relative_change(report.get(key).unwrap(), fine.get(key).unwrap());
        report.value(format!("{key}_refinement_change"), d);
    }
    report.section(fine);
    Ok(report)
}

/// Atom statistics for a fixed library at the operator's resolution.
pub fn atom_bound_report(op: &SpectralOperator, library: &AtomLibrary) -> Result<Report> {
    if library.atoms.is_empty() {
        return Err(Error::Precondition("need at least one atom".into()));
    }
    let grid = *op.grid();
    let atoms = library.build(&grid)?;
    let norms = atom_norms(op, &atoms)?;
    let riesz: Vec<f64> = norms.iter().map(|n| n.0).collect();
    let h1: Vec<f64> = norms.iter().map(|n| n.1).collect();
    let mut table = Table::new("atoms", &["atom", "cube_diameter", "cancellative", "riesz_l1", "h1_norm"]);
    for (i, (a, (r, m))) in atoms.iter().zip(&norms).enumerate() {
        let kind = if a.kind() == AtomKind::Cancellative { 1.0 } else { 0.0 };
        table.push(vec![i as f64, a.cube().diameter(), kind, *r, *m]);
    }
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let (rmax, rmed, hmax, hmed) = (max(&riesz), median(&riesz), max(&h1), median(&h1));
    let mut report = Report::new("atom_bounds");
    report
        .value("n_atoms", atoms.len() as f64)
        .value("n_points", grid.len() as f64)
        .value("riesz_max", rmax)
        .value("riesz_median", rmed)
        .value("riesz_spread", rmax / rmed)
        .value("h1_max", hmax)
        .value("h1_median", hmed)
        .value("h1_spread", hmax / hmed)
        .verdict("finite", rmax.is_finite() && hmax.is_finite())
        .table(table)
        .note(format!("potential {}", op.potential().name()));
    Ok(report)
}

/// A named test function.
#[derive(Debug, Clone)]
pub struct TestFunction {
    pub name: String,
    /// Characteristic length.
    pub scale: f64,
    pub values: GridFunction,
}

/// Parameters of the test-function library, so it can be rebuilt on a
/// refined grid.
#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Gaussian { center: f64, width: f64 },
    GaussianDifference { center: f64, width: f64, shift: f64 },
    Bump { center: f64, radius: f64, modes: Vec<f64> },
    Atom(AtomSpec),
}

fn sample_shape(grid: &Grid, shape: &Shape) -> Result<GridFunction> {
    let g = |x: f64, c: f64, w: f64| (-((x - c) / w).powi(2)).exp() / (w * std::f64::consts::PI.sqrt());
    Ok(match shape {
        Shape::Gaussian { center, width } => grid.sample(|x| g(x, *center, *width)),
        Shape::GaussianDifference { center, width, shift } => {
            grid.sample(|x| g(x, center - 0.5 * shift, *width) - g(x, center + 0.5 * shift, *width))
        }
        Shape::Bump { center, radius, modes } => grid.sample(|x| {
            let u = (x - center) / radius;
            if u.abs() >= 1.0 {
                return 0.0;
            }
            let s: f64 = modes.iter().enumerate().map(|(k, a)| a * (k as f64 * u).cos()).sum();
            (1.0 - 1.0 / (1.0 - u * u)).exp() * (1.0 + s)
        }),
        Shape::Atom(spec) => build_atom(spec, grid)?.values,
    })
}

/// Seeded library of test functions: Gaussians with widths `2^{-5}..2^5`,
/// differences of shifted Gaussians, smooth random bumps, and atoms of both
/// kinds on evenly chosen cubes of `family`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestLibrary {
    entries: Vec<(String, f64, Shape)>,
}

impl TestLibrary {
    pub fn generate(family: &CubeFamily, grid: &Grid, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entries = Vec::new();
        for k in -5..=5 {
            let width = 2f64.powi(k);
            let center = rng.random_range(-2.0..2.0);
            entries.push((format!("gaussian(w=2^{k})"), width, Shape::Gaussian { center, width }));
        }
        for k in -4..=3 {
            let width = 2f64.powi(k);
            let center = rng.random_range(-2.0..2.0);
            let shift = width * rng.random_range(0.5..2.0);
            entries.push((
                format!("gaussian_difference(w=2^{k})"),
                width,
                Shape::GaussianDifference { center, width, shift },
            ));
        }
        for i in 0..9 {
            let radius = 2f64.powf(rng.random_range(-3.0..2.0));
            let center = rng.random_range(-3.0..3.0);
            let modes = (0..3).map(|_| rng.random_range(-0.5..0.5)).collect();
            entries.push((format!("bump({i})"), radius, Shape::Bump { center, radius, modes }));
        }
        let cubes: Vec<usize> = (0..family.len()).collect();
        for q in evenly_spaced(&cubes, 8) {
            for kind in [AtomKind::Indicator, AtomKind::Cancellative] {
                let atom = make_atom(family, q, kind, rng.random(), grid)?;
                let label = match kind {
                    AtomKind::Indicator => "indicator",
                    AtomKind::Cancellative => "cancellative",
                };
                entries.push((
                    format!("{label}_atom({})", atom.cube()),
                    atom.support().length(),
                    Shape::Atom(atom.spec),
                ));
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn build(&self, grid: &Grid) -> Result<Vec<TestFunction>> {
        self.entries
            .iter()
            .map(|(name, scale, shape)| {
                Ok(TestFunction {
                    name: name.clone(),
                    scale: *scale,
                    values: sample_shape(grid, shape)?,
                })
            })
            .collect()
    }
}

/// `equivalence_ratio` for every function, in order.
pub fn equivalence_ratios(op: &SpectralOperator, functions: &[TestFunction], t_grid: &[f64]) -> Result<Vec<f64>> {
    functions
        .par_iter()
        .map(|f| equivalence_ratio_with(op, &f.values, t_grid))
        .collect()
}

#[cfg(test)]
mod tests;
