use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Interval};
use crate::report::{Report, Table};
use crate::semigroup::{mass_unchecked, Potential, SpectralOperator};
use crate::special::{erfc_time_integral, fit_line, LineFit};

use super::{CubeFamily, DyadicInterval, DEFAULT_BETA};

/// Pass thresholds for the fitted exponents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitThresholds {
    pub epsilon_min: f64,
    pub delta_min: f64,
    pub residual_max: f64,
    /// Final local log-log slope of `m(n)` below which steepening decay
    /// counts as superpolynomial.
    pub superpolynomial_slope: f64,
}

impl Default for FitThresholds {
    fn default() -> Self {
        Self {
            epsilon_min: 0.05,
            delta_min: 0.05,
            residual_max: 0.2,
            superpolynomial_slope: -3.0,
        }
    }
}

/// Masses below this are at roundoff level and end the sequence.
const MASS_FLOOR: f64 = 1e-13;

fn beta_note(report: &mut Report, beta: f64) {
    report.value("beta", beta);
    if beta == DEFAULT_BETA {
        report.note("beta = 1/8 is the default choice, not a derived constant");
    }
}

fn fit_or_nan(fit: Option<LineFit>) -> (f64, f64, f64) {
    fit.map(|f| (f.slope, f.intercept, f.residual))
        .unwrap_or((f64::NAN, f64::NAN, f64::NAN))
}

/// Largest `n` with `2ⁿd² ≤ L²/16`.
fn max_reliable_n(grid: &Grid, d: f64) -> i64 {
    let limit = grid.half_width().powi(2) / 16.0;
    ((limit / (d * d)).log2() + 1e-12).floor() as i64
}

/// Mass decay `m(n) = sup_{y ∈ Q*} ∫_core T_{2ⁿd²}(x, y) dx`, `n = 1..n_max`,
/// with a power-law fit on the upper half of the `n` range.
pub fn check_condition_d(
    op: &SpectralOperator,
    family: &CubeFamily,
    q: usize,
    n_max: usize,
    thresholds: &FitThresholds,
) -> Result<Report> {
    let grid = *op.grid();
    let cube = family.intervals().get(q).ok_or_else(|| {
        Error::Precondition(format!("cube index {q} outside family of {}", family.len()))
    })?;
    let d = cube.diameter();
    let reliable = max_reliable_n(&grid, d);
    if n_max as i64 > reliable {
        return Err(Error::Range {
            message: format!("2^{n_max}·d(Q)² exceeds the reliable time L²/16 for d(Q) = {d}"),
            suggestion: (reliable >= 2).then_some(reliable as f64),
        });
    }
    if n_max < 2 {
        return Err(Error::Precondition(format!("need n_max ≥ 2, got {n_max}")));
    }
    let star = family.dilate(q, 1);
    let core = grid.core_range();
    let ys: Vec<usize> = grid.indices_in(&star).filter(|i| core.contains(i)).collect();
    if ys.is_empty() {
        return Err(Error::Resolution(format!("no grid node of the core lies in {cube}*")));
    }
    let masses: Vec<f64> = (1..=n_max)
        .map(|n| {
            let t = 2f64.powi(n as i32) * d * d;
            ys.iter().map(|&y| mass_unchecked(op, t, y)).fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();

    let mut table = Table::new("mass_decay", &["n", "t", "m"]);
    for (i, m) in masses.iter().enumerate() {
        let n = i + 1;
        table.push(vec![n as f64, 2f64.powi(n as i32) * d * d, *m]);
    }

    // usable prefix: stop at roundoff level
    let usable = masses.iter().take_while(|&&m| m > MASS_FLOOR).count();
    let truncated = usable < masses.len();
    let start = (n_max / 2).max(1) - 1;
    let tail: Vec<(f64, f64)> = (start..usable)
        .map(|i| (((i + 1) as f64).ln(), masses[i].ln()))
        .collect();
    let (xs, ls): (Vec<f64>, Vec<f64>) = tail.iter().copied().unzip();
    let (slope, intercept, residual) = fit_or_nan(fit_line(&xs, &ls));
    let local: Vec<f64> = tail.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
    // a crossover between two exponential rates can flatten single steps,
    // so steepening compares the ends of the tail only
    let decreasing = local.iter().all(|s| *s < 0.0);
    let steepening = decreasing && local.first().zip(local.last()).is_none_or(|(a, b)| b <= a);
    let superpolynomial = (truncated && steepening)
        || (local.len() >= 2 && steepening && *local.last().unwrap() < thresholds.superpolynomial_slope);
    let epsilon = -slope - 1.0;
    let fitted = epsilon > thresholds.epsilon_min && residual < thresholds.residual_max;

    let mut report = Report::new("condition_d");
    report
        .value("q_level", cube.level as f64)
        .value("q_index", cube.index as f64)
        .value("diameter", d)
        .value("n_max", n_max as f64)
        .value("slope", slope)
        .value("epsilon_hat", epsilon)
        .value("c_hat", intercept.exp())
        .value("residual", residual)
        .value("final_local_slope", local.last().copied().unwrap_or(f64::NAN))
        .verdict("superpolynomial", superpolynomial)
        .verdict("pass", fitted || superpolynomial)
        .table(table);
    if truncated {
        report.note(format!("m(n) fell below {MASS_FLOOR:e} at n = {}", usable + 1));
    }
    beta_note(&mut report, family.beta());
    Ok(report)
}

/// Runs the (D) check on every cube whose reliable range allows `n_max ≥ 2`
/// (capped at `n_cap`) and tabulates the results.
pub fn check_condition_d_family(
    op: &SpectralOperator,
    family: &CubeFamily,
    n_cap: usize,
    thresholds: &FitThresholds,
) -> Result<Report> {
    let all: Vec<usize> = (0..family.len()).collect();
    check_condition_d_cubes(op, family, &all, n_cap, thresholds)
}

/// [`check_condition_d_family`] restricted to the cube indices `cubes`.
pub fn check_condition_d_cubes(
    op: &SpectralOperator,
    family: &CubeFamily,
    cubes: &[usize],
    n_cap: usize,
    thresholds: &FitThresholds,
) -> Result<Report> {
    let grid = *op.grid();
    if let Some(q) = cubes.iter().find(|&&q| q >= family.len()) {
        return Err(Error::Precondition(format!("cube index {q} outside family of {}", family.len())));
    }
    let jobs: Vec<(usize, usize)> = cubes
        .iter()
        .filter_map(|&q| {
            let n = max_reliable_n(&grid, family.intervals()[q].diameter()).min(n_cap as i64);
            (n >= 2).then_some((q, n as usize))
        })
        .collect();
    let results: Vec<Report> = jobs
        .par_iter()
        .map(|&(q, n)| check_condition_d(op, family, q, n, thresholds))
        .collect::<Result<_>>()?;
    let mut table = Table::new(
        "condition_d",
        &["q", "level", "index", "diameter", "n_max", "epsilon_hat", "c_hat", "residual", "superpolynomial", "pass"],
    );
    let (mut min_eps, mut max_res) = (f64::INFINITY, 0.0f64);
    let mut all_pass = true;
    let mut superpoly = 0usize;
    for (&(q, n), r) in jobs.iter().zip(&results) {
        let sp = r.verdicts["superpolynomial"];
        let pass = r.verdicts["pass"];
        let cube = family.intervals()[q];
        table.push(vec![
            q as f64,
            cube.level as f64,
            cube.index as f64,
            cube.diameter(),
            n as f64,
            r.get("epsilon_hat").unwrap(),
            r.get("c_hat").unwrap(),
            r.get("residual").unwrap(),
            sp as u8 as f64,
            pass as u8 as f64,
        ]);
        all_pass &= pass;
        if sp {
            superpoly += 1;
        } else {
            min_eps = min_eps.min(r.get("epsilon_hat").unwrap());
            max_res = max_res.max(r.get("residual").unwrap());
        }
    }
    let mut report = Report::new("condition_d_family");
    report
        .value("cubes_checked", jobs.len() as f64)
        .value("cubes_skipped", (cubes.len() - jobs.len()) as f64)
        .value("superpolynomial_count", superpoly as f64)
        .value("min_epsilon_hat", min_eps)
        .value("max_residual", max_res)
        .verdict("pass", all_pass && !jobs.is_empty())
        .table(table)
        .note(format!("potential {}", op.potential().name()));
    beta_note(&mut report, family.beta());
    Ok(report)
}

/// `∫₀^τ ½ erfc(c / 2√s) ds` for any real `c`.
fn half_erfc_time(c: f64, tau: f64) -> f64 {
    if c >= 0.0 {
        0.5 * erfc_time_integral(c, tau)
    } else {
        tau - 0.5 * erfc_time_integral(-c, tau)
    }
}

/// `sup_x ∫₀^{2t} (1_W V) * P_s(x) ds` over core nodes in `W`.
///
/// `V` is replaced by its exact average on each node cell clipped to `W`;
/// for a constant density on `[a, b]` the time integral of the heat flow
/// has the closed form `G(a − x) − G(b − x)`. The maximum of a convolution
/// of a nonnegative function with the Gaussian lies in the hull of its
/// support, so nodes outside `W` are not needed.
pub fn condition_k_value(potential: &Potential, grid: &Grid, window: &Interval, t: f64) -> f64 {
    let h = grid.spacing();
    let tau = 2.0 * t;
    let mut edges = vec![window.lo];
    let first = ((window.lo + grid.half_width()) / h - 0.5).floor() as i64 + 1;
    let mut k = first;
    loop {
        let e = -grid.half_width() + (k as f64 + 0.5) * h;
        if e >= window.hi {
            break;
        }
        if e > window.lo {
            edges.push(e);
        }
        k += 1;
    }
    edges.push(window.hi);
    let cells: Vec<(f64, f64, f64)> = edges
        .windows(2)
        .filter_map(|e| {
            let m = potential.integral(&Interval::new(e[0], e[1]));
            (m > 0.0).then(|| (e[0], e[1], m / (e[1] - e[0])))
        })
        .collect();
    if cells.is_empty() {
        return 0.0;
    }
    let core = grid.core();
    let xs: Vec<f64> = grid
        .indices_in(window)
        .map(|i| grid.x(i))
        .filter(|x| core.contains(*x))
        .collect();
    xs.par_iter()
        .map(|&x| {
            cells
                .iter()
                .map(|&(a, b, rho)| rho * (half_erfc_time(a - x, tau) - half_erfc_time(b - x, tau)))
                .sum::<f64>()
        })
        .reduce(|| 0.0, f64::max)
}

/// `t = d(Q)²·2^{-k}`, `k = 0..=10`.
pub fn default_k_times(d: f64) -> Vec<f64> {
    (0..=10).map(|k| d * d * 2f64.powi(-k)).collect()
}

/// Smallness of the absorbed mass near `Q***`: `k(t)` on `t_grid` and a fit
/// of `log k` against `log(t/d(Q)²)` over the smaller-`t` half.
pub fn check_condition_k(
    potential: &Potential,
    grid: &Grid,
    q: &DyadicInterval,
    beta: f64,
    t_grid: &[f64],
    thresholds: &FitThresholds,
) -> Result<Report> {
    let d = q.diameter();
    if t_grid.len() < 2 {
        return Err(Error::Precondition("need at least two times".into()));
    }
    if let Some(&t) = t_grid.iter().find(|&&t| !(t > 0.0 && t <= d * d * (1.0 + 1e-12))) {
        return Err(Error::Precondition(format!("time {t} outside (0, d(Q)²] with d(Q) = {d}")));
    }
    let window = q.dilate(3, beta);
    let mut ts = t_grid.to_vec();
    ts.sort_by(f64::total_cmp);
    let ks: Vec<f64> = ts.iter().map(|&t| condition_k_value(potential, grid, &window, t)).collect();

    let mut table = Table::new("condition_k", &["t", "t_over_d2", "k"]);
    for (t, k) in ts.iter().zip(&ks) {
        table.push(vec![*t, t / (d * d), *k]);
    }
    let mut report = Report::new("condition_k");
    report
        .value("q_level", q.level as f64)
        .value("q_index", q.index as f64)
        .value("diameter", d)
        .table(table);
    beta_note(&mut report, beta);

    if ks.iter().all(|&k| k == 0.0) {
        report
            .value("delta_hat", f64::INFINITY)
            .value("c_hat", 0.0)
            .value("residual", 0.0)
            .verdict("vanishing", true)
            .verdict("pass", true)
            .note("V vanishes on Q***");
        return Ok(report);
    }
    let half = ts.len().div_ceil(2).max(2);
    let pts: Vec<(f64, f64)> = ts[..half]
        .iter()
        .zip(&ks[..half])
        .filter(|(_, k)| **k > 0.0)
        .map(|(t, k)| ((t / (d * d)).ln(), k.ln()))
        .collect();
    let (xs, ls): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let (delta, intercept, residual) = fit_or_nan(fit_line(&xs, &ls));
    report
        .value("delta_hat", delta)
        .value("c_hat", intercept.exp())
        .value("residual", residual)
        .verdict("vanishing", false)
        .verdict("pass", delta > thresholds.delta_min);
    Ok(report)
}

/// The (K) check for every cube of `family`.
pub fn check_condition_k_family(
    potential: &Potential,
    grid: &Grid,
    family: &CubeFamily,
    thresholds: &FitThresholds,
) -> Result<Report> {
    let all: Vec<usize> = (0..family.len()).collect();
    check_condition_k_cubes(potential, grid, family, &all, thresholds)
}

/// [`check_condition_k_family`] restricted to the cube indices `cubes`.
pub fn check_condition_k_cubes(
    potential: &Potential,
    grid: &Grid,
    family: &CubeFamily,
    cubes: &[usize],
    thresholds: &FitThresholds,
) -> Result<Report> {
    if let Some(q) = cubes.iter().find(|&&q| q >= family.len()) {
        return Err(Error::Precondition(format!("cube index {q} outside family of {}", family.len())));
    }
    let results: Vec<Report> = cubes
        .par_iter()
        .map(|&q| {
            let cube = &family.intervals()[q];
            check_condition_k(potential, grid, cube, family.beta(), &default_k_times(cube.diameter()), thresholds)
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new(
        "condition_k",
        &["q", "level", "index", "diameter", "delta_hat", "c_hat", "residual", "pass"],
    );
    let (mut min_delta, mut max_res) = (f64::INFINITY, 0.0f64);
    let mut all_pass = true;
    let mut vanishing = 0usize;
    for (&i, r) in cubes.iter().zip(&results) {
        let q = &family.intervals()[i];
        let pass = r.verdicts["pass"];
        table.push(vec![
            i as f64,
            q.level as f64,
            q.index as f64,
            q.diameter(),
            r.get("delta_hat").unwrap(),
            r.get("c_hat").unwrap(),
            r.get("residual").unwrap(),
            pass as u8 as f64,
        ]);
        all_pass &= pass;
        if r.verdicts["vanishing"] {
            vanishing += 1;
        } else {
            min_delta = min_delta.min(r.get("delta_hat").unwrap());
            max_res = max_res.max(r.get("residual").unwrap());
        }
    }
    let mut report = Report::new("condition_k_family");
    report
        .value("cubes", cubes.len() as f64)
        .value("vanishing_cubes", vanishing as f64)
        .value("min_delta_hat", min_delta)
        .value("max_residual", max_res)
        .verdict("pass", all_pass)
        .table(table)
        .note(format!("potential {}", potential.name()));
    beta_note(&mut report, family.beta());
    Ok(report)
}
