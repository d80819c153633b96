//! Property tests of the public API on small grids.

use std::sync::Arc;

use proptest::prelude::*;

use hardyscope::cache::operator;
use hardyscope::decomposition::DyadicInterval;
use hardyscope::grid::{convolve_free, integrate, l1_norm};
use hardyscope::harness::{read_table_csv, table_csv};
use hardyscope::riesz::{riesz_truncated, split_kernels};
use hardyscope::semigroup::{heat_apply, mass};
use hardyscope::special::relative_delta;
use hardyscope::{Grid, GridFunction, PotentialSpec, SpectralOperator, Table};

const N: usize = 257;

fn grid() -> Grid {
    Grid::standard(N).unwrap()
}

fn op(spec: PotentialSpec) -> Arc<SpectralOperator> {
    operator(&spec, &grid()).unwrap()
}

fn potentials() -> impl Strategy<Value = PotentialSpec> {
    prop_oneof![
        (0.1f64..4.0).prop_map(PotentialSpec::constant),
        (0u64..50).prop_map(PotentialSpec::spikes),
        (0u64..50).prop_map(PotentialSpec::piecewise),
        ((0.0f64..2.0), (0.5f64..6.0)).prop_map(|(l, r)| PotentialSpec::step(l, r)),
        Just(PotentialSpec::harmonic()),
    ]
}

fn bump(center: f64, width: f64, sign: f64) -> GridFunction {
    grid().sample(|x| sign * (-((x - center) / width).powi(2)).exp())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn trapezoid_is_exact_on_affine_functions(a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let f = grid().sample(|x| a + b * x);
        let exact = 2.0 * 16.0 * a;
        prop_assert!((integrate(&f) - exact).abs() <= 1e-11 * (1.0 + exact.abs()));
        let abs = f.map(f64::abs);
        prop_assert_eq!(l1_norm(&f, &grid().domain()).unwrap(), integrate(&abs));
    }

    #[test]
    fn free_convolution_is_a_semigroup(s in 0.05f64..0.5, t in 0.05f64..0.5, c in -2.0f64..2.0) {
        let f = bump(c, 0.5, 1.0);
        let two_steps = convolve_free(&convolve_free(&f, s).unwrap(), t).unwrap();
        let one_step = convolve_free(&f, s + t).unwrap();
        prop_assert!(two_steps.sub(&one_step).core_sup() < 1e-6);
    }

    #[test]
    fn heat_flow_is_a_semigroup(spec in potentials(), s in 0.01f64..1.0, t in 0.01f64..1.0, c in -3.0f64..3.0) {
        let o = op(spec);
        let f = bump(c, 0.7, 1.0);
        let composed = heat_apply(&o, t, &heat_apply(&o, s, &f).unwrap()).unwrap();
        let direct = heat_apply(&o, s + t, &f).unwrap();
        prop_assert!(composed.sub(&direct).sup_norm() <= 1e-10 * f.sup_norm().max(1.0));
    }

    #[test]
    fn heat_flow_is_submarkov_and_l1_contractive(spec in potentials(), t in 0.001f64..4.0, c in -3.0f64..3.0, y in 0usize..129) {
        let o = op(spec);
        let g = grid();
        let node = g.core_range().start + y;
        prop_assert!(mass(&o, t, node).unwrap() <= 1.0 + 1e-8);
        // supported well inside the core, so the core L¹ norm sees all of f
        let f = bump(c, 0.3, -1.0);
        let core = g.core();
        let before = l1_norm(&f, &g.domain()).unwrap();
        let after = l1_norm(&heat_apply(&o, t, &f).unwrap(), &core).unwrap();
        prop_assert!(after <= before * (1.0 + 1e-6));
    }

    #[test]
    fn local_and_far_parts_add_up(level in -1i32..3, index in -4i64..4, m in 1i32..8) {
        let o = op(PotentialSpec::constant(1.0));
        let q = DyadicInterval::new(level, index);
        let eps = 2f64.powi(-m);
        let (local, far) = split_kernels(&o, &q, eps).unwrap();
        let whole = riesz_truncated(&o, eps, 1.0 / eps).unwrap();
        let scale = whole.kernel().max_abs();
        let (rows, cols) = (whole.kernel().rows().len(), whole.kernel().cols().len());
        let mut worst = 0.0f64;
        for c in 0..cols {
            for r in 0..rows {
                worst = worst.max((local.get(r, c) + far.get(r, c) - whole.get(r, c)).abs());
            }
        }
        prop_assert!(worst <= 1e-12 * scale.max(1.0), "{}", worst);
    }

    #[test]
    fn csv_round_trip_is_lossless(values in proptest::collection::vec(proptest::num::f64::ANY, 1..40)) {
        let mut t = Table::new("t", &["a", "b"]);
        for pair in values.chunks(2) {
            t.push(vec![pair[0], *pair.get(1).unwrap_or(&0.0)]);
        }
        let back = read_table_csv("t", table_csv(&t).as_bytes()).unwrap();
        for (x, y) in back.rows.iter().flatten().zip(t.rows.iter().flatten()) {
            prop_assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()));
        }
    }

    #[test]
    fn relative_delta_is_symmetric_and_bounded(a in -1e6f64..1e6, b in -1e6f64..1e6) {
        let d = relative_delta(a, b);
        prop_assert_eq!(d, relative_delta(b, a));
        prop_assert!((0.0..=2.0).contains(&d));
    }
}
