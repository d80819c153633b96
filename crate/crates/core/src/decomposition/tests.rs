use proptest::prelude::*;

use super::*;
use crate::cache::operator;
use crate::semigroup::PotentialSpec;
use crate::special::{composite_gauss, erf};

fn grid() -> Grid {
    Grid::standard(2049).unwrap()
}

fn family(spec: PotentialSpec, rule: StoppingRule) -> Result<CubeFamily> {
    family_for_grid(&spec.build().unwrap(), rule, &grid(), DEFAULT_BETA)
}

#[test]
fn dilation_examples() {
    let q = DyadicInterval::new(0, 0);
    let d = dilate(&q, 1, 0.5);
    assert_eq!((d.lo, d.hi), (-0.25, 1.25));
    let tiny = dilate(&q, 4, 1e-12);
    assert!((tiny.lo).abs() < 1e-11 && (tiny.hi - 1.0).abs() < 1e-11);
    let q = DyadicInterval::new(2, 0);
    let d = dilate(&q, 3, 0.125);
    assert_eq!(d.center(), 0.125);
    assert!((d.length() - 0.355_957_031_25).abs() < 1e-12);
}

#[test]
fn clamps_follow_grid() {
    let c = Clamps::for_grid(&grid());
    assert_eq!((c.j_min, c.j_max), (-3, 4));
    let c = Clamps::for_grid(&grid().refined());
    assert_eq!((c.j_min, c.j_max), (-3, 5));
}

#[test]
fn constant_potential_families() {
    let cz = family(PotentialSpec::constant(1.0), StoppingRule::Cz).unwrap();
    assert!(cz.intervals().iter().all(|q| q.diameter() == 0.25));
    assert_eq!(cz.len(), 64);
    let rh = family(PotentialSpec::constant(1.0), StoppingRule::Rh).unwrap();
    assert!(rh.intervals().iter().all(|q| q.diameter() == 1.0));
    assert_eq!(rh.clamps().coarse_hits, 0);
}

#[test]
fn translation_invariance_for_constants() {
    for c in [0.5, 3.0, 16.0] {
        let f = family(PotentialSpec::constant(c), StoppingRule::Cz).unwrap();
        let d0 = f.intervals()[0].diameter();
        assert!(f.intervals().iter().all(|q| q.diameter() == d0), "c={c}");
    }
}

#[test]
fn free_potential_hits_coarse_clamp() {
    let f = family(PotentialSpec::free(), StoppingRule::Cz).unwrap();
    assert_eq!(f.len(), 2);
    assert!(f.intervals().iter().all(|q| q.level == -3));
    assert_eq!(f.clamps().coarse_hits, 2);
}

#[test]
fn singular_potential_needs_refinement() {
    let err = family(PotentialSpec::harmonic(), StoppingRule::Cz).unwrap_err();
    assert!(matches!(err, Error::RefinementNeeded(_)), "{err}");
}

#[test]
fn beta_is_validated() {
    let v = PotentialSpec::constant(1.0).build().unwrap();
    let e = family_for_grid(&v, StoppingRule::Cz, &grid(), 0.4).unwrap_err();
    assert!(matches!(e, Error::Range { suggestion: Some(s), .. } if s == DEFAULT_BETA));
    assert!(family_for_grid(&v, StoppingRule::Cz, &grid(), 0.0).is_err());
}

/// Independent rule evaluation: Gauss quadrature split at breakpoints.
fn rule_value_quadrature(v: &Potential, rule: StoppingRule, q: &DyadicInterval) -> f64 {
    let d = q.diameter();
    let w = match rule {
        StoppingRule::Cz => Interval::centered(q.center(), 16.0 * d),
        StoppingRule::Rh => q.interval(),
    };
    let mut cuts = vec![w.lo];
    cuts.extend(v.breakpoints().into_iter().filter(|b| *b > w.lo && *b < w.hi));
    cuts.push(w.hi);
    let mut total = 0.0;
    for c in cuts.windows(2) {
        total += composite_gauss(c[0], c[1], 4, 8).iter().map(|(x, wt)| wt * v.eval(*x)).sum::<f64>();
    }
    d * total
}

#[test]
fn brute_force_tree_agrees_on_piecewise_potentials() {
    let g = grid();
    let clamps = Clamps::for_grid(&g);
    for seed in 0..4 {
        let v = PotentialSpec::piecewise(seed).build().unwrap();
        for rule in [StoppingRule::Cz, StoppingRule::Rh] {
            let f = family_for_grid(&v, rule, &g, DEFAULT_BETA).unwrap();
            for q in f.intervals() {
                assert!(rule_value_quadrature(&v, rule, q) <= 1.0 + 1e-9, "{q} violates {rule}");
                if q.level > clamps.j_min {
                    assert!(rule_value_quadrature(&v, rule, &q.parent()) > 1.0 - 1e-9, "{q} not maximal");
                }
            }
        }
    }
}

#[test]
fn neighbor_structure() {
    let f = family(PotentialSpec::constant(1.0), StoppingRule::Cz).unwrap();
    let (near, far) = neighbors(&f, 10);
    assert_eq!(near, vec![9, 10, 11]);
    assert_eq!(near.len() + far.len(), f.len());
    assert!(far.iter().all(|j| !near.contains(j)));

    let single = CubeFamily::new(
        vec![DyadicInterval::new(-3, 0)],
        DEFAULT_BETA,
        Interval::new(0.0, 8.0),
        Clamps::new(-3, 4),
        Provenance::default(),
    )
    .unwrap();
    assert_eq!(neighbors(&single, 0), (vec![0], vec![]));
}

#[test]
fn overlap_and_comparability_are_recorded() {
    for spec in [PotentialSpec::spikes(3), PotentialSpec::step(0.25, 4.0), PotentialSpec::piecewise(2)] {
        let f = family(spec, StoppingRule::Cz).unwrap();
        assert!(f.overlap() <= f.overlap_bound(), "{} > {}", f.overlap(), f.overlap_bound());
        assert!(f.comparability().is_finite() && f.comparability() >= 1.0);
        let total: f64 = f.intervals().iter().map(|q| q.diameter()).sum();
        assert!((total - 16.0).abs() < 1e-12);
    }
    let uniform = family(PotentialSpec::constant(1.0), StoppingRule::Cz).unwrap();
    assert_eq!(uniform.comparability(), 1.0);
    assert_eq!(uniform.overlap(), 2);
}

#[test]
fn invalid_families_are_rejected() {
    let d = Interval::new(0.0, 2.0);
    let gap = vec![DyadicInterval::new(0, 0), DyadicInterval::new(1, 3)];
    let e = CubeFamily::new(gap, DEFAULT_BETA, d, Clamps::new(-1, 4), Provenance::default()).unwrap_err();
    assert!(matches!(e, Error::FamilyInvalid(_)));
}

#[test]
fn family_json_round_trip() {
    let f = family(PotentialSpec::spikes(5), StoppingRule::Cz).unwrap();
    let back = CubeFamily::from_json(&f.to_json()).unwrap();
    assert_eq!(f, back);
    let v: serde_json::Value = serde_json::from_str(&f.to_json()).unwrap();
    assert!(v["intervals"][0]["j"].is_i64());
    assert_eq!(v["provenance"]["rule"], "cz");
}

#[test]
fn partition_of_unity_examples() {
    let g = grid();
    let single = CubeFamily::new(
        vec![DyadicInterval::new(-3, 0)],
        DEFAULT_BETA,
        Interval::new(0.0, 8.0),
        Clamps::new(-3, 4),
        Provenance::default(),
    )
    .unwrap();
    let p = partition_of_unity(&single, &g).unwrap();
    for i in g.indices_in(&Interval::new(0.0, 8.0)) {
        assert!((p.functions[0].values()[i] - 1.0).abs() < 1e-15);
    }

    let beta = DEFAULT_BETA;
    for spec in [PotentialSpec::constant(1.0), PotentialSpec::spikes(1), PotentialSpec::piecewise(3)] {
        let f = family(spec, StoppingRule::Cz).unwrap();
        let p = partition_of_unity(&f, &g).unwrap();
        assert!(p.sum_defect <= 1e-12);
        for (i, phi) in p.functions.iter().enumerate() {
            let star = f.dilate(i, 1);
            for (k, v) in phi.values().iter().enumerate() {
                assert!((0.0..=1.0 + 1e-15).contains(v));
                if *v > 0.0 {
                    assert!(g.x(k) > star.lo && g.x(k) < star.hi);
                }
            }
        }
        assert!(p.gradient_constant <= 16.0 / beta * f.comparability(), "{}", p.gradient_constant);
    }
    let uniform = partition_of_unity(&family(PotentialSpec::constant(1.0), StoppingRule::Cz).unwrap(), &g).unwrap();
    assert!(uniform.gradient_constant <= 16.0 / beta);
}

#[test]
fn smooth_step_is_symmetric() {
    for k in -20..=20 {
        let u = k as f64 / 17.0;
        assert!((smooth_step(u) + smooth_step(-u) - 1.0).abs() < 1e-15);
    }
}

#[test]
fn condition_d_constant_potential() {
    let op = operator(&PotentialSpec::constant(1.0), &grid()).unwrap();
    let f = family(PotentialSpec::constant(1.0), StoppingRule::Cz).unwrap();
    let q = f.locate(0.1).unwrap();
    let r = check_condition_d(&op, &f, q, 8, &FitThresholds::default()).unwrap();
    let m = r.find_table("mass_decay").unwrap().column("m").unwrap();
    assert!((m[3] - (-1.0f64).exp()).abs() < 1e-6, "{}", m[3]);
    assert!(r.verdicts["superpolynomial"]);
    assert!(r.passed());
    let e = check_condition_d(&op, &f, q, 9, &FitThresholds::default()).unwrap_err();
    assert!(matches!(e, Error::Range { suggestion: Some(s), .. } if s == 8.0));
}

#[test]
fn condition_d_free_fails() {
    let op = operator(&PotentialSpec::free(), &grid()).unwrap();
    let f = family(PotentialSpec::constant(1.0), StoppingRule::Cz).unwrap();
    let q = f.locate(0.1).unwrap();
    let r = check_condition_d(&op, &f, q, 4, &FitThresholds::default()).unwrap();
    let m = r.find_table("mass_decay").unwrap().column("m").unwrap();
    assert!(m.iter().all(|v| (v - 1.0).abs() < 1e-6));
    assert!(!r.verdicts["pass"]);
}

#[test]
fn condition_k_free_is_trivial() {
    let v = PotentialSpec::free().build().unwrap();
    let q = DyadicInterval::new(2, 1);
    let r = check_condition_k(&v, &grid(), &q, DEFAULT_BETA, &default_k_times(0.25), &FitThresholds::default()).unwrap();
    assert!(r.verdicts["vanishing"] && r.passed());
}

#[test]
fn condition_k_constant_matches_closed_form() {
    let g = grid();
    let v = PotentialSpec::constant(1.0).build().unwrap();
    let q = DyadicInterval::new(2, 1);
    let w = q.dilate(3, DEFAULT_BETA);
    for t in default_k_times(0.25) {
        let k = condition_k_value(&v, &g, &w, t);
        assert!(k <= 2.0 * t * (1.0 + 1e-12));
        // sup at the node nearest the centre of Q***; √s-substituted quadrature
        let x = g.x(g.nearest(w.center()));
        let rule = composite_gauss(0.0, (2.0 * t).sqrt(), 32, 16);
        let exact: f64 = rule
            .iter()
            .map(|(u, wt)| {
                let s2 = 2.0 * u;
                wt * s2 * 0.5 * (erf((x - w.lo) / (2.0 * u)) - erf((x - w.hi) / (2.0 * u)))
            })
            .sum();
        assert!((k - exact).abs() < 1e-12 * t.max(1e-3), "t={t}: {k} vs {exact}");
    }
    let r = check_condition_k(&v, &g, &q, DEFAULT_BETA, &default_k_times(0.25), &FitThresholds::default()).unwrap();
    assert!(r.get("delta_hat").unwrap() >= 0.95);
    let e = check_condition_k(&v, &g, &q, DEFAULT_BETA, &[0.01, 0.1], &FitThresholds::default()).unwrap_err();
    assert!(matches!(e, Error::Precondition(_)));
}

#[test]
fn condition_k_spike_family_exponent() {
    let g = grid();
    let spec = PotentialSpec::spikes(7);
    let v = spec.build().unwrap();
    let f = family_for_grid(&v, StoppingRule::Cz, &g, DEFAULT_BETA).unwrap();
    let r = check_condition_k_family(&v, &g, &f, &FitThresholds::default()).unwrap();
    assert!(r.get("min_delta_hat").unwrap() >= 0.45, "{}", r.get("min_delta_hat").unwrap());
}

proptest! {
    #[test]
    fn dyadic_intervals_nest_or_are_disjoint(j1 in -4i32..8, k1 in -200i64..200, j2 in -4i32..8, k2 in -200i64..200) {
        let (a, b) = (DyadicInterval::new(j1, k1), DyadicInterval::new(j2, k2));
        let disjoint = a.interval().overlap(&b.interval()) == 0.0;
        prop_assert!(disjoint || a.contains(&b) || b.contains(&a));
        prop_assert_eq!(a.contains(&b), a.interval().contains_interval(&b.interval()));
    }

    #[test]
    fn dilates_are_nested(j in -3i32..6, k in -50i64..50, beta in 0.01f64..0.3) {
        let q = DyadicInterval::new(j, k);
        for s in 0..4 {
            prop_assert!(q.dilate(s + 1, beta).contains_interval(&q.dilate(s, beta)));
        }
    }
}
