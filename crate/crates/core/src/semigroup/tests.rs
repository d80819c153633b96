use super::*;
use crate::cache::operator;
use crate::grid::{core_l1, integrate};

fn op(spec: PotentialSpec, n: usize) -> std::sync::Arc<SpectralOperator> {
    operator(&spec, &Grid::standard(n).unwrap()).unwrap()
}

fn mehler(t: f64, x: f64, y: f64) -> f64 {
    let s = (2.0 * t).sinh();
    let c = (2.0 * t).cosh();
    (2.0 * std::f64::consts::PI * s).powf(-0.5) * (-((x * x + y * y) * c - 2.0 * x * y) / (2.0 * s)).exp()
}

#[test]
fn free_dirichlet_spectrum() {
    let o = op(PotentialSpec::free(), 513);
    for k in 1..=10 {
        let exact = (k as f64 * std::f64::consts::PI / 32.0).powi(2);
        let got = o.eigenvalues()[k - 1];
        assert!((got - exact).abs() <= 1e-8 * exact, "k={k}: {got} vs {exact}");
    }
    assert!(o.bottom() > 0.0);
}

#[test]
fn constant_shift_is_exact() {
    let free = op(PotentialSpec::free(), 257);
    let shifted = op(PotentialSpec::constant(2.5), 257);
    for (a, b) in free.eigenvalues().iter().zip(shifted.eigenvalues()) {
        assert!((b - a - 2.5).abs() < 1e-9 * b.max(1.0));
    }
}

#[test]
fn harmonic_spectrum() {
    let o = op(PotentialSpec::harmonic(), 2049);
    for k in 0..=20 {
        let got = o.eigenvalues()[k];
        assert!((got - (2 * k + 1) as f64).abs() < 1e-6, "k={k}: {got}");
    }
}

#[test]
fn eigenbasis_reproduces_identity() {
    let o = op(PotentialSpec::spikes(1), 257);
    let u = o.vectors();
    let prod = u.transpose() * u;
    let mut worst = 0.0f64;
    for i in 0..prod.nrows() {
        for j in 0..prod.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((prod[(i, j)] - target).abs());
        }
    }
    assert!(worst < 1e-10, "{worst}");
}

#[test]
fn heat_kernel_oracles() {
    let g = Grid::standard(2049).unwrap();
    let c = g.core_range().len() / 2;
    let free = heat_kernel(&op(PotentialSpec::free(), 2049), 1.0).unwrap();
    assert!((free.get(c, c) - 0.282_094_791_773_878_1).abs() < 1e-6);

    let harm = heat_kernel(&op(PotentialSpec::harmonic(), 2049), 0.5).unwrap();
    assert!((harm.get(c, c) - mehler(0.5, 0.0, 0.0)).abs() < 4e-5);
    assert!((mehler(0.5, 0.0, 0.0) - 0.36800).abs() < 1e-5);

    let one = heat_kernel(&op(PotentialSpec::constant(1.0), 2049), 1.0).unwrap();
    let expected = (-1.0f64).exp() * 0.282_094_791_773_878_1;
    assert!((one.get(c, c) - expected).abs() < 1e-7);
    assert!(one.symmetry_defect().unwrap() < 1e-10);
}

#[test]
fn heat_apply_identities() {
    let o = op(PotentialSpec::free(), 2049);
    let g = *o.grid();
    let f = g.sample(|x| free_kernel_unchecked(1.0, x));
    let same = heat_apply(&o, 0.0, &f).unwrap();
    assert!(same.sub(&f).sup_norm() < 1e-10);

    let out = heat_apply(&o, 1.0, &f).unwrap();
    let p2 = g.sample(|x| free_kernel_unchecked(2.0, x));
    assert!(out.sub(&p2).core_sup() < 1e-6);

    let h = op(PotentialSpec::harmonic(), 257);
    let u0 = GridFunction::new(*h.grid(), h.vectors().col_as_slice(0).to_vec()).unwrap();
    let evolved = heat_apply(&h, 0.7, &u0).unwrap();
    let expected = u0.scale((-0.7 * h.bottom()).exp());
    assert!(evolved.sub(&expected).sup_norm() < 1e-13);
    assert!(heat_apply(&h, -1.0, &u0).is_err());
}

#[test]
fn semigroup_law_and_contractivity() {
    let o = op(PotentialSpec::spikes(2), 513);
    let g = *o.grid();
    let f = g.sample(|x| (-(x - 0.3).powi(2)).exp() * (3.0 * x).cos());
    let a = heat_apply(&o, 0.3, &heat_apply(&o, 0.45, &f).unwrap()).unwrap();
    let b = heat_apply(&o, 0.75, &f).unwrap();
    assert!(a.sub(&b).sup_norm() < 1e-10);
    for t in [0.01, 0.1, 1.0] {
        let out = heat_apply(&o, t, &f).unwrap();
        assert!(core_l1(&out) <= core_l1(&f) * (1.0 + 1e-6));
    }
}

#[test]
fn feynman_kac_examples() {
    let ts = [0.05, 0.1, 0.25, 0.5, 1.0];
    let free = feynman_kac_check(&op(PotentialSpec::free(), 2049), &ts).unwrap();
    assert!(free.get("max_excess").unwrap() <= 1e-8);
    assert!(free.get("max_negative").unwrap() <= 1e-8);
    let one = feynman_kac_check(&op(PotentialSpec::constant(1.0), 2049), &ts).unwrap();
    assert!(one.passed());
    let ratios = one.find_table("feynman_kac").unwrap().column("max_ratio_to_gaussian").unwrap();
    for (t, r) in ts.iter().zip(ratios) {
        assert!((r - (-t).exp()).abs() < 1e-5, "t={t}: {r}");
    }
    let harm = feynman_kac_check(&op(PotentialSpec::harmonic(), 2049), &ts).unwrap();
    assert!(harm.get("max_excess").unwrap() <= 1e-6);
    assert!(feynman_kac_check(&op(PotentialSpec::harmonic(), 2049), &[]).is_err());
}

#[test]
fn free_kernel_resolution_limit() {
    let g = Grid::standard(2049).unwrap();
    let lo = resolved_time(&g);
    assert_eq!(lo, 2f64.powi(-9));
    let free = op(PotentialSpec::free(), 2049);
    let at = |t: f64| feynman_kac_check(&free, &[t]).unwrap().get("max_excess").unwrap();
    assert!(at(lo) <= 1e-7);
    // half the resolved time: the grid kernel overshoots the Gaussian
    assert!(at(lo / 2.0) > 1e-7);
}

#[test]
fn duhamel_examples() {
    let free = op(PotentialSpec::free(), 1025);
    assert!(duhamel_residual(&free, 0.5, 16).unwrap() <= 1e-10);
    let one = op(PotentialSpec::constant(1.0), 1025);
    let r = duhamel_residual(&one, 0.5, 64).unwrap();
    assert!(r <= 1e-3, "{r}");
    assert!(duhamel_residual(&one, 0.5, 4).is_err());
}

#[test]
fn mass_examples() {
    let g = Grid::standard(2049).unwrap();
    let c = g.center_index();
    let free = op(PotentialSpec::free(), 2049);
    // the core is [-8, 8]: what is missing is the Gaussian tail past it
    for t in [0.01, 0.1, 1.0] {
        let m = mass(&free, t, c).unwrap();
        assert!((m - crate::special::erf(4.0 / t.sqrt())).abs() < 1e-8, "t={t}: {m}");
    }
    let one = op(PotentialSpec::constant(1.0), 2049);
    assert!((mass(&one, 1.0, c).unwrap() - (-1.0f64).exp() * crate::special::erf(4.0)).abs() < 1e-8);
    assert!(mass(&one, 1.0, 0).is_err());
    let spikes = op(PotentialSpec::spikes(4), 2049);
    for y in g.core_range().step_by(97) {
        assert!(mass(&spikes, 0.5, y).unwrap() <= 1.0 + 1e-8);
    }
}

#[test]
fn global_absorption_examples() {
    let g = Grid::standard(1025).unwrap();
    let c = g.center_index();
    assert_eq!(global_absorption(&op(PotentialSpec::free(), 1025), c).unwrap(), 0.0);
    let v = global_absorption(&op(PotentialSpec::constant(2.0), 1025), c).unwrap();
    assert!((v - 1.0).abs() < 0.01, "{v}");

    // independent oracle: integrate s ↦ ∫ V T_s(·, 0) over s numerically
    let harm = op(PotentialSpec::harmonic(), 1025);
    let closed = global_absorption(&harm, c).unwrap();
    let w = g.weights();
    let vw: Vec<f64> = harm.potential_samples().iter().zip(&w).map(|(a, b)| a * b).collect();
    let all: Vec<usize> = (0..g.len()).collect();
    let rule = crate::special::composite_gauss((1e-7f64).ln(), (60.0f64).ln(), 64, 8);
    let mut quad = 0.0;
    for (u, wt) in rule {
        let s = u.exp();
        let col = heat_kernel_block(&harm, s, &all, &[c]).unwrap();
        let inner: f64 = (0..g.len()).map(|z| vw[z] * col.get(z, 0)).sum();
        quad += wt * s * inner;
    }
    assert!(closed <= 1.0 + 0.01);
    assert!((closed - quad).abs() < 1e-3, "{closed} vs {quad}");
}

#[test]
fn scaling_examples() {
    let free = scaling_check(&op(PotentialSpec::free(), 513), 4.0).unwrap();
    assert!(free.get("discrepancy").unwrap() <= 1e-8);
    let one = scaling_check(&op(PotentialSpec::constant(1.0), 513), 0.25).unwrap();
    assert!(one.get("discrepancy").unwrap() <= 1e-6);
    let harm = scaling_check(&op(PotentialSpec::harmonic(), 513), 0.5).unwrap();
    assert!(harm.get("discrepancy").unwrap() <= 1e-5);
    assert!(scaling_check(&op(PotentialSpec::harmonic(), 513), 0.0).is_err());
}

#[test]
fn kernel_csv_has_one_line_per_row() {
    let o = op(PotentialSpec::constant(1.0), 65);
    let k = heat_kernel(&o, 0.5).unwrap();
    let mut buf = Vec::new();
    k.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), k.rows().len() + 1);
    assert!(!text.contains('\r'));
}

#[test]
fn free_mass_integrates_full_kernel() {
    let o = op(PotentialSpec::free(), 1025);
    let g = *o.grid();
    let all: Vec<usize> = (0..g.len()).collect();
    let col = heat_kernel_block(&o, 0.2, &all, &[g.center_index()]).unwrap();
    let f = GridFunction::new(g, col.column(0)).unwrap();
    assert!((integrate(&f) - 1.0).abs() < 1e-10);
}
