use proptest::prelude::*;

use super::*;
use crate::cache::operator;
use crate::decomposition::{
    family_for_grid, Clamps, CubeFamily, DyadicInterval, Provenance, StoppingRule, DEFAULT_BETA,
};
use crate::grid::{integrate, l1_norm};
use crate::semigroup::PotentialSpec;
use std::sync::Arc;

fn op(spec: PotentialSpec, n: usize) -> Arc<SpectralOperator> {
    operator(&spec, &Grid::standard(n).unwrap()).unwrap()
}

fn cz(spec: PotentialSpec, grid: &Grid) -> CubeFamily {
    family_for_grid(&spec.build().unwrap(), StoppingRule::Cz, grid, DEFAULT_BETA).unwrap()
}

fn gaussian(grid: &Grid, c: f64, w: f64) -> GridFunction {
    grid.sample(|x| (-((x - c) / w).powi(2)).exp())
}

#[test]
fn t_grid_is_dyadic_and_clipped() {
    let g = Grid::standard(2049).unwrap();
    let t = default_t_grid(&g);
    assert_eq!(t[0], 4.0);
    assert!(t.iter().all(|&t| t >= g.spacing().powi(2) && t <= 4.0));
    assert_eq!(*t.last().unwrap(), 2f64.powi(-12));
    let fine = t_grid(&g, 2);
    assert!(t.iter().all(|x| fine.contains(x)));
    assert_eq!(fine.len(), 2 * t.len() - 1);
}

#[test]
fn ground_state_is_its_own_maximal_function() {
    let o = op(PotentialSpec::constant(1.0), 513);
    let g = *o.grid();
    let u0 = GridFunction::new(g, (0..g.len()).map(|i| o.vector(i, 0)).collect()).unwrap();
    let m = maximal_function(&o, &u0, &default_t_grid(&g)).unwrap();
    let worst = m.values().iter().zip(u0.values()).map(|(a, b)| (a - b.abs()).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-12, "{worst}");
}

#[test]
fn free_heat_profile_peaks_at_time_zero() {
    // f = P_1, so T_t f = P_{1+t} and sup_t T_t f(0) = P_1(0) = (4π)^{-1/2}
    let o = op(PotentialSpec::free(), 2049);
    let g = *o.grid();
    let f = g.sample(|x| (4.0 * std::f64::consts::PI).powf(-0.5) * (-x * x / 4.0).exp());
    let m = maximal_function(&o, &f, &default_t_grid(&g)).unwrap();
    let v = m.values()[g.center_index()];
    assert!((v - 0.28209479177387814).abs() < 1e-8, "{v}");
}

#[test]
fn maximal_function_dominates_and_grows_with_t_grid() {
    let o = op(PotentialSpec::spikes(2), 513);
    let g = *o.grid();
    let f = gaussian(&g, 0.3, 0.2).sub(&gaussian(&g, -0.4, 0.5).scale(0.7));
    let coarse = maximal_function(&o, &f, &default_t_grid(&g)).unwrap();
    let fine = maximal_function(&o, &f, &t_grid(&g, 2)).unwrap();
    for i in 0..g.len() {
        assert!(coarse.values()[i] >= f.values()[i].abs());
        assert!(fine.values()[i] >= coarse.values()[i]);
    }
    let h = h1_norm(&o, &f).unwrap();
    assert!(h >= core_l1(&f) * (1.0 - 1e-6));
    assert!((h1_norm(&o, &f.scale(2.0)).unwrap() - 2.0 * h).abs() < 1e-12 * h);
}

#[test]
fn riesz_norm_basics() {
    let o = op(PotentialSpec::constant(1.0), 513);
    let g = *o.grid();
    assert_eq!(riesz_norm(&o, &GridFunction::zeros(g)).unwrap(), 0.0);
    let f = gaussian(&g, 0.0, 0.5);
    let a = riesz_norm(&o, &f).unwrap();
    assert!((riesz_norm(&o, &f.scale(-3.0)).unwrap() - 3.0 * a).abs() < 1e-12 * a);
    assert!(matches!(equivalence_ratio(&o, &GridFunction::zeros(g)), Err(Error::Degenerate(_))));
    let r = equivalence_ratio(&o, &f).unwrap();
    assert!((equivalence_ratio(&o, &f.scale(-0.25)).unwrap() - r).abs() < 1e-12 * r);
}

#[test]
fn riesz_and_h1_norms_are_refinement_stable() {
    let coarse = op(PotentialSpec::constant(1.0), 1025);
    let fine = op(PotentialSpec::constant(1.0), 2049);
    let atom = |g: &Grid| {
        let fam = single(DyadicInterval::new(2, 0));
        make_atom(&fam, 0, AtomKind::Indicator, 0, g).unwrap().values
    };
    let h = |o: &SpectralOperator| h1_norm(o, &atom(o.grid())).unwrap();
    let (a, b) = (h(&coarse), h(&fine));
    assert!(a.is_finite() && (a / b - 1.0).abs() < 0.1, "{a} {b}");
    let r = |o: &SpectralOperator| riesz_norm(o, &gaussian(o.grid(), 0.0, 1.0)).unwrap();
    let (a, b) = (r(&coarse), r(&fine));
    assert!((a / b - 1.0).abs() < 0.1, "{a} {b}");
}

fn single(q: DyadicInterval) -> CubeFamily {
    CubeFamily::new(vec![q], DEFAULT_BETA, q.interval(), Clamps::new(-3, 4), Provenance::default()).unwrap()
}

#[test]
fn indicator_atom_example() {
    let g = Grid::standard(2049).unwrap();
    let a = make_atom(&single(DyadicInterval::new(2, 0)), 0, AtomKind::Indicator, 0, &g).unwrap();
    assert_eq!(a.values.values()[g.nearest(0.125)], 4.0);
    assert!((integrate(&a.values) - 1.0).abs() < 1e-14);
    assert!((l1_norm(&a.values, &g.domain()).unwrap() - 1.0).abs() < 1e-14);
}

#[test]
fn haar_atom_on_full_star() {
    let g = Grid::standard(2049).unwrap();
    let q = DyadicInterval::new(1, 1);
    let star = q.dilate(1, DEFAULT_BETA);
    let spec = AtomSpec {
        cube: q,
        kind: AtomKind::Cancellative,
        support: Some((star.lo, star.hi)),
        profile: Some(Profile::Haar),
        seed: 0,
    };
    let a = build_atom(&spec, &g).unwrap();
    assert!(integrate(&a.values).abs() < 1e-12);
    assert!((a.values.sup_norm() - 1.0 / star.length()).abs() < 1e-12 / star.length());
}

#[test]
fn atoms_satisfy_their_constraints() {
    let g = Grid::standard(2049).unwrap();
    for spec in [PotentialSpec::constant(1.0), PotentialSpec::spikes(4)] {
        let fam = cz(spec, &g);
        let lib = AtomLibrary::generate(&fam, &g, 60, 9).unwrap();
        for a in lib.build(&g).unwrap() {
            let s = a.support();
            let v = &a.values;
            match a.kind() {
                AtomKind::Indicator => {
                    assert!((integrate(v) - 1.0).abs() < 1e-12);
                    assert!((v.sup_norm() * s.length() - 1.0).abs() < 1e-12);
                }
                AtomKind::Cancellative => {
                    let star = fam.dilate(fam.position(&a.cube()).unwrap(), 1);
                    assert!(s.lo >= star.lo - 1e-12 && s.hi <= star.hi + 1e-12);
                    assert!(integrate(v).abs() < 1e-12 * v.sup_norm(), "{}", integrate(v));
                    assert!(v.sup_norm() * s.length() <= 1.0 + 1e-12);
                }
            }
            for (i, x) in g.points().into_iter().enumerate() {
                if v.values()[i] != 0.0 {
                    assert!(x >= s.lo - 1e-12 && x <= s.hi + 1e-12);
                }
            }
        }
    }
}

#[test]
fn atoms_are_reproducible_and_roundtrip() {
    let g = Grid::standard(1025).unwrap();
    let fam = cz(PotentialSpec::constant(1.0), &g);
    let a = make_atom(&fam, 5, AtomKind::Cancellative, 77, &g).unwrap();
    let b = make_atom(&fam, 5, AtomKind::Cancellative, 77, &g).unwrap();
    assert_eq!(a.values.values(), b.values.values());
    let lib = AtomLibrary::generate(&fam, &g, 12, 3).unwrap();
    assert_eq!(AtomLibrary::from_json(&lib.to_json()).unwrap(), lib);
}

#[test]
fn narrow_support_is_a_resolution_error() {
    let g = Grid::standard(257).unwrap();
    let spec = AtomSpec {
        cube: DyadicInterval::new(3, 0),
        kind: AtomKind::Cancellative,
        support: Some((0.0, 0.2)),
        profile: Some(Profile::OddBump),
        seed: 0,
    };
    assert!(matches!(build_atom(&spec, &g), Err(Error::Resolution(_))));
}

#[test]
fn atom_suite_on_unit_potential() {
    let o = op(PotentialSpec::constant(1.0), 1025);
    let fam = cz(PotentialSpec::constant(1.0), o.grid());
    let lib = AtomLibrary::generate(&fam, o.grid(), 40, 1).unwrap();
    let r = atom_bound_report(&o, &lib).unwrap();
    assert!(r.get("riesz_spread").unwrap() <= 20.0);
    // linearity: ‖R(−a)‖₁ = ‖Ra‖₁
    let a = &lib.build(o.grid()).unwrap()[0].values;
    let p = core_l1(&riesz_full_apply(&o, a).unwrap());
    let m = core_l1(&riesz_full_apply(&o, &a.scale(-1.0)).unwrap());
    assert!((p - m).abs() < 1e-14 * p);
}

#[test]
fn test_library_spans_three_decades() {
    let g = Grid::standard(2049).unwrap();
    let fam = cz(PotentialSpec::constant(1.0), &g);
    let lib = TestLibrary::generate(&fam, &g, 5).unwrap();
    let fs = lib.build(&g).unwrap();
    assert!(fs.len() >= 40);
    let lo = fs.iter().map(|f| f.scale).fold(f64::INFINITY, f64::min);
    let hi = fs.iter().map(|f| f.scale).fold(0.0, f64::max);
    assert!(hi / lo >= 1000.0);
    assert!(fs.iter().all(|f| core_l1(&f.values) > 0.0));
    assert_eq!(TestLibrary::generate(&fam, &g, 5).unwrap(), lib);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn maximal_function_is_sublinear(c1 in -2.0f64..2.0, c2 in -2.0f64..2.0, w1 in 0.1f64..2.0, w2 in 0.1f64..2.0) {
        let o = op(PotentialSpec::spikes(2), 257);
        let g = *o.grid();
        let f = gaussian(&g, c1, w1);
        let h = gaussian(&g, c2, w2).scale(-0.5);
        let t = default_t_grid(&g);
        let mf = maximal_function(&o, &f, &t).unwrap();
        let mh = maximal_function(&o, &h, &t).unwrap();
        let ms = maximal_function(&o, &f.add(&h), &t).unwrap();
        for i in 0..g.len() {
            prop_assert!(ms.values()[i] <= mf.values()[i] + mh.values()[i] + 1e-10);
        }
    }
}
