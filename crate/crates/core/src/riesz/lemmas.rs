use rayon::prelude::*;

use crate::decomposition::{neighbors, partition_of_unity, CubeFamily, PartitionOfUnity};
use crate::error::{Error, Result};
use crate::grid::{core_l1, derivative, integrate, l1_norm, refined_integral, Grid, GridFunction, Interval, REFINE};
use crate::report::{Report, Table};
use crate::sampling::evenly_spaced;
use crate::semigroup::{Basis, SpectralOperator};

use super::{
    refined_operator, reliable_time, riesz_full_apply, riesz_weights, split_windows, star_nodes, w_apply,
    w_kernel_block,
};

/// Column probes per cube.
const PROBES: usize = 33;

/// `t = 10^{-3 + j/4}`, `j = 0..=12`.
pub fn default_lemma21_times() -> Vec<f64> {
    (0..=12).map(|j| 10f64.powf(-3.0 + j as f64 / 4.0)).collect()
}

/// `ε = 2^{-m}`, `m = 1..=10`.
pub fn default_epsilon_grid() -> Vec<f64> {
    (1..=10).map(|m| 2f64.powi(-m)).collect()
}

/// Half width, in units of `√t`, of the `x` window around `y`: beyond it
/// `e^{-u²/4 + αu} < e^{-12}`.
pub fn lemma21_window(alpha: f64) -> f64 {
    2.0 * alpha + 2.0 * (alpha * alpha + 12.0).sqrt()
}

/// Exponent of the largest weight used; kept clear of overflow.
const MAX_EXPONENT: f64 = 600.0;

fn largest_alpha() -> f64 {
    let (mut lo, mut hi) = (0.0f64, 100.0f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if mid * lemma21_window(mid) <= MAX_EXPONENT {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// `A₂(t,y) = t^{3/2} ∫|∂ₓT_t(x,y)|² e^{α|x−y|/√t} dx` and
/// `A₁(t,y) = t^{1/2} ∫|∂ₓT_t(x,y)| e^{α|x−y|/√t} dx` at 65 evenly spaced core
/// nodes `y`, for every `t` in `t_set`.
pub fn lemma21_values(op: &SpectralOperator, t_set: &[f64], alpha: f64) -> Result<Report> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Domain(format!("need α ≥ 0, got {alpha}")));
    }
    let c = lemma21_window(alpha);
    if alpha * c > MAX_EXPONENT {
        return Err(Error::Range {
            message: format!("weight exponent α·{c:.3} overflows for α = {alpha}"),
            suggestion: Some(largest_alpha()),
        });
    }
    if t_set.is_empty() {
        return Err(Error::Precondition("empty time set".into()));
    }
    let grid = *op.grid();
    let limit = reliable_time(&grid);
    if let Some(t) = t_set.iter().find(|&&t| !(t > 0.0 && t <= limit)) {
        return Err(Error::Domain(format!("time {t} outside (0, {limit}]")));
    }
    let core: Vec<usize> = grid.core_range().collect();
    let ys = evenly_spaced(&core, 65);
    let all: Vec<usize> = (0..grid.len()).collect();
    let domain = grid.domain();

    let mut table = Table::new("lemma21", &["t", "a2_max", "a2_min", "a1_max", "a1_min"]);
    let (mut a2_sup, mut a1_sup) = (0.0f64, 0.0f64);
    let (mut a2_inf, mut a1_inf) = (f64::INFINITY, f64::INFINITY);
    let mut clipped = 0usize;
    for &t in t_set {
        let modes = op.active_modes(t);
        let g: Vec<f64> = op.eigenvalues()[..modes].iter().map(|l| (-t * l).exp()).collect();
        let block = op.spectral_block(Basis::Derivatives, &all, &ys, &g);
        let st = t.sqrt();
        let (mut a2_max, mut a1_max, mut a2_min, mut a1_min) = (0.0f64, 0.0f64, f64::INFINITY, f64::INFINITY);
        for (col, &y) in ys.iter().enumerate() {
            let yx = grid.x(y);
            let window = Interval::centered(yx, 2.0 * c * st);
            if !domain.contains_interval(&window) {
                clipped += 1;
            }
            let column: Vec<f64> = block.col(col).iter().copied().collect();
            let range = grid.indices_in(&window);
            let (a, b) = (range.start, range.end - 1);
            let weight = |x: f64| (alpha * (x - yx).abs() / st).exp();
            let s2 = refined_integral(&grid, &column, a, b, REFINE, |x, k| weight(x) * k * k);
            let s1 = refined_integral(&grid, &column, a, b, REFINE, |x, k| weight(x) * k.abs());
            let (a2, a1) = (t.powf(1.5) * s2, st * s1);
            a2_max = a2_max.max(a2);
            a1_max = a1_max.max(a1);
            a2_min = a2_min.min(a2);
            a1_min = a1_min.min(a1);
        }
        table.push(vec![t, a2_max, a2_min, a1_max, a1_min]);
        a2_sup = a2_sup.max(a2_max);
        a1_sup = a1_sup.max(a1_max);
        a2_inf = a2_inf.min(a2_min);
        a1_inf = a1_inf.min(a1_min);
    }
    let mut report = Report::new("lemma21");
    report
        .value("alpha", alpha)
        .value("window", c)
        .value("a2_sup", a2_sup)
        .value("a1_sup", a1_sup)
        .value("a2_inf", a2_inf)
        .value("a1_inf", a1_inf)
        .value("n_points", grid.len() as f64)
        .verdict("finite", a2_sup.is_finite() && a1_sup.is_finite())
        .table(table)
        .note(format!("potential {}", op.potential().name()));
    if clipped > 0 {
        report.note(format!("{clipped} (t, y) windows clipped at the Dirichlet boundary"));
    }
    Ok(report)
}

fn relative_change(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// [`lemma21_values`] at `h` and `h/2`; passes iff both sups are finite and
/// move by less than 10%.
pub fn lemma21_check(op: &SpectralOperator, t_set: &[f64], alpha: f64) -> Result<Report> {
    let coarse = lemma21_values(op, t_set, alpha)?;
    let fine_op = refined_operator(op)?;
    let fine = lemma21_values(&fine_op, t_set, alpha)?;
    let a2 = relative_change(coarse.get("a2_sup").unwrap(), fine.get("a2_sup").unwrap());
    let a1 = relative_change(coarse.get("a1_sup").unwrap(), fine.get("a1_sup").unwrap());
    let mut report = Report::new("lemma21_check");
    report
        .value("a2_sup", coarse.get("a2_sup").unwrap())
        .value("a1_sup", coarse.get("a1_sup").unwrap())
        .value("a2_refinement_change", a2)
        .value("a1_refinement_change", a1)
        .verdict("finite", coarse.verdicts["finite"] && fine.verdicts["finite"])
        .verdict("refinement_stable", a2 < 0.1 && a1 < 0.1)
        .section(coarse)
        .section(fine);
    Ok(report)
}

fn cube_index(family: &CubeFamily, q: usize) -> Result<()> {
    if q >= family.len() {
        return Err(Error::Precondition(format!("cube index {q} outside family of {}", family.len())));
    }
    Ok(())
}

/// `Q̃ = ∪_{Q′ ∈ Q′(Q)} Q′*` (an interval, since `Q′(Q)` is contiguous).
pub(crate) fn neighborhood(family: &CubeFamily, q: usize) -> Interval {
    let (near, _) = neighbors(family, q);
    let stars: Vec<Interval> = near.iter().map(|&j| family.dilate(j, 1)).collect();
    Interval::new(
        stars.iter().map(|s| s.lo).fold(f64::INFINITY, f64::min),
        stars.iter().map(|s| s.hi).fold(f64::NEG_INFINITY, f64::max),
    )
}

/// `sup_y ∫_core max_{ε ∈ ε-grid} |R^ε_{Q,∞}(x, y)| dx` over probes `y` in
/// `∪_{Q′∈Q′(Q)} Q′*`.
pub fn lemma22_check(op: &SpectralOperator, family: &CubeFamily, q: usize, eps_grid: &[f64]) -> Result<Report> {
    cube_index(family, q)?;
    if eps_grid.is_empty() {
        return Err(Error::Precondition("empty ε grid".into()));
    }
    if let Some(e) = eps_grid.iter().find(|&&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::Precondition(format!("ε = {e} outside (0, 1)")));
    }
    let grid = *op.grid();
    let cube = family.intervals()[q];
    let d2 = cube.diameter().powi(2);
    let core: Vec<usize> = grid.core_range().collect();
    let near_nodes: Vec<usize> = grid
        .indices_in(&neighborhood(family, q))
        .filter(|i| grid.core_range().contains(i))
        .collect();
    let ys = evenly_spaced(&near_nodes, PROBES);
    let w = grid.weights();

    let mut envelope = faer::Mat::<f64>::zeros(core.len(), ys.len());
    let mut table = Table::new("lemma22", &["epsilon", "far_lower", "far_upper", "sup_l1"]);
    for &eps in eps_grid {
        let (_, far) = split_windows(d2, eps);
        let Some((lo, hi)) = far else {
            table.push(vec![eps, f64::NAN, f64::NAN, 0.0]);
            continue;
        };
        let weights = riesz_weights(op, lo, hi)?;
        let block = op.spectral_block(Basis::Derivatives, &core, &ys, &weights);
        let mut sup = 0.0f64;
        for c in 0..ys.len() {
            let mut s = 0.0;
            for (r, &i) in core.iter().enumerate() {
                let v = block[(r, c)].abs();
                s += w[i] * v;
                if v > envelope[(r, c)] {
                    envelope[(r, c)] = v;
                }
            }
            sup = sup.max(s);
        }
        table.push(vec![eps, lo, hi, sup]);
    }
    let mut constant = 0.0f64;
    for c in 0..ys.len() {
        let s: f64 = core.iter().enumerate().map(|(r, &i)| w[i] * envelope[(r, c)]).sum();
        constant = constant.max(s);
    }
    let mut report = Report::new("lemma22");
    report
        .value("q", q as f64)
        .value("diameter", cube.diameter())
        .value("constant", constant)
        .value("probes", ys.len() as f64)
        .verdict("finite", constant.is_finite())
        .table(table);
    Ok(report)
}

/// `∫_core |g|` for `g` sampled at every node, resolving the kinks of `|g|`.
pub fn core_abs_integral(grid: &Grid, g: &[f64]) -> f64 {
    let core = grid.core_range();
    refined_integral(grid, g, core.start, core.end - 1, REFINE, |_, v| v.abs())
}

/// `sup_{y ∈ Q*} ∫_core |W_Q(x, y)| dx` over probes `y`.
pub fn lemma23_check(op: &SpectralOperator, family: &CubeFamily, q: usize) -> Result<Report> {
    cube_index(family, q)?;
    let grid = *op.grid();
    let cube = family.intervals()[q];
    let all: Vec<usize> = (0..grid.len()).collect();
    let ys = evenly_spaced(&star_nodes(&grid, &cube, family.beta()), PROBES);
    let k = w_kernel_block(op, &cube, 0.0, &all, &ys)?;
    let sup = (0..ys.len())
        .map(|c| core_abs_integral(&grid, &k.column(c)))
        .fold(0.0, f64::max);
    let mut report = Report::new("lemma23");
    report
        .value("q", q as f64)
        .value("diameter", cube.diameter())
        .value("constant", sup)
        .verdict("finite", sup.is_finite());
    Ok(report)
}

/// `‖W^ε(φ_Q f) − W(φ_Q f)‖_{L¹(core)}` along a decreasing ε grid.
pub fn w_epsilon_convergence(
    op: &SpectralOperator,
    family: &CubeFamily,
    pou: &PartitionOfUnity,
    q: usize,
    f: &GridFunction,
    eps_grid: &[f64],
) -> Result<Report> {
    cube_index(family, q)?;
    let cube = family.intervals()[q];
    let g = pou.functions[q].mul(f);
    let limit = w_apply(op, &cube, 0.0, &g)?;
    let mut eps: Vec<f64> = eps_grid.iter().copied().filter(|&e| e < cube.diameter().powi(2)).collect();
    eps.sort_by(|a, b| b.total_cmp(a));
    let mut table = Table::new("w_epsilon", &["epsilon", "l1_distance"]);
    let mut distances = Vec::new();
    for &e in &eps {
        let d = core_l1(&w_apply(op, &cube, e, &g)?.sub(&limit));
        distances.push(d);
        table.push(vec![e, d]);
    }
    let monotone = distances.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-14);
    let mut report = Report::new("w_epsilon_convergence");
    report
        .value("q", q as f64)
        .value("limit_l1", core_l1(&limit))
        .value("last_distance", distances.last().copied().unwrap_or(0.0))
        .verdict("monotone", monotone)
        .table(table);
    Ok(report)
}

/// `‖R(φ_Q f) − φ_Q R f‖_{L¹} / ‖f‖_{L¹(Q̃)}` with `f` masked to `Q̃`; the
/// numerator is taken over the core window inside the family's domain.
pub fn commutator_check(op: &SpectralOperator, family: &CubeFamily, q: usize, f: &GridFunction) -> Result<Report> {
    let pou = partition_of_unity(family, op.grid())?;
    commutator_check_with(op, family, &pou, q, f)
}

pub fn commutator_check_with(
    op: &SpectralOperator,
    family: &CubeFamily,
    pou: &PartitionOfUnity,
    q: usize,
    f: &GridFunction,
) -> Result<Report> {
    cube_index(family, q)?;
    let grid = *op.grid();
    let tilde = neighborhood(family, q)
        .intersection(&grid.domain())
        .ok_or_else(|| Error::Domain("neighbourhood outside the grid".into()))?;
    let fm = f.masked(&tilde);
    let norm = l1_norm(&fm, &tilde)?;
    if norm == 0.0 {
        return Err(Error::Degenerate("f vanishes on the neighbourhood of Q".into()));
    }
    let phi = &pou.functions[q];
    let a = riesz_full_apply(op, &phi.mul(&fm))?;
    let b = phi.mul(&riesz_full_apply(op, &fm)?);
    let window = grid
        .core()
        .intersection(&family.domain())
        .ok_or_else(|| Error::Domain("family domain misses the core window".into()))?;
    let num = l1_norm(&a.sub(&b), &window)?;
    let mut report = Report::new("commutator");
    report
        .value("q", q as f64)
        .value("diameter", family.intervals()[q].diameter())
        .value("numerator", num)
        .value("f_l1", norm)
        .value("ratio", num / norm)
        .verdict("finite", (num / norm).is_finite());
    Ok(report)
}

/// `Σ_Q ‖1_{Q***} R(Σ_{Q″ ∈ Q″(Q)} φ_{Q″} f)‖₁ / ‖f‖₁`.
pub fn far_field_sum_check(op: &SpectralOperator, family: &CubeFamily, f: &GridFunction) -> Result<Report> {
    let pou = partition_of_unity(family, op.grid())?;
    far_field_sum_check_with(op, family, &pou, f)
}

pub fn far_field_sum_check_with(
    op: &SpectralOperator,
    family: &CubeFamily,
    pou: &PartitionOfUnity,
    f: &GridFunction,
) -> Result<Report> {
    let grid = *op.grid();
    let norm = l1_norm(f, &grid.domain())?;
    if norm == 0.0 {
        return Err(Error::Degenerate("f vanishes".into()));
    }
    let mut total = GridFunction::zeros(grid);
    for phi in &pou.functions {
        total = total.add(phi);
    }
    let parts: Vec<f64> = (0..family.len())
        .into_par_iter()
        .map(|q| -> Result<f64> {
            let (near, far) = neighbors(family, q);
            if far.is_empty() {
                return Ok(0.0);
            }
            let mut weight = total.clone();
            for &j in &near {
                weight = weight.sub(&pou.functions[j]);
            }
            let g = f.mul(&weight);
            let rg = riesz_full_apply(op, &g)?;
            let window = family
                .dilate(q, 3)
                .intersection(&grid.domain())
                .expect("cubes lie inside the grid");
            l1_norm(&rg, &window)
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new("far_field", &["q", "diameter", "l1"]);
    for (q, v) in parts.iter().enumerate() {
        table.push(vec![q as f64, family.intervals()[q].diameter(), *v]);
    }
    let sum: f64 = parts.iter().sum();
    let mut report = Report::new("far_field_sum");
    report
        .value("sum", sum)
        .value("f_l1", norm)
        .value("ratio", sum / norm)
        .verdict("finite", (sum / norm).is_finite())
        .table(table);
    Ok(report)
}

/// `C = max |⟨Rf, φ⟩| / (‖f‖₁ (‖φ‖₂ + ‖φ′‖_∞))` over the given pairs.
pub fn pairing_bound_check(op: &SpectralOperator, fs: &[GridFunction], phis: &[GridFunction]) -> Result<Report> {
    if fs.is_empty() || phis.is_empty() {
        return Err(Error::Precondition("need at least one f and one φ".into()));
    }
    let grid = *op.grid();
    let mut table = Table::new("pairing", &["f", "phi", "pairing", "bound_factor", "ratio"]);
    let mut c = 0.0f64;
    for (i, f) in fs.iter().enumerate() {
        let rf = riesz_full_apply(op, f)?;
        let f1 = l1_norm(f, &grid.domain())?;
        if f1 == 0.0 {
            return Err(Error::Degenerate(format!("test function {i} vanishes")));
        }
        for (j, phi) in phis.iter().enumerate() {
            let pairing = integrate(&rf.mul(phi));
            let l2 = integrate(&phi.mul(phi)).sqrt();
            let factor = f1 * (l2 + derivative(phi).sup_norm());
            let ratio = pairing.abs() / factor;
            c = c.max(ratio);
            table.push(vec![i as f64, j as f64, pairing, factor, ratio]);
        }
    }
    let mut report = Report::new("pairing_bound");
    report.value("constant", c).verdict("finite", c.is_finite()).table(table);
    Ok(report)
}
