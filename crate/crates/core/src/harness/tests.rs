use super::*;
use crate::semigroup::{GridSpec, PotentialSpec};

fn small(potential: PotentialSpec, n: usize) -> ExperimentConfig {
    ExperimentConfig {
        id: "test".into(),
        grid: GridSpec {
            half_width: 16.0,
            n_points: n,
            core_fraction: 0.5,
        },
        potential,
        ..ExperimentConfig::default()
    }
}

#[test]
fn config_defaults_and_round_trip() {
    let c = ExperimentConfig::default();
    c.validate().unwrap();
    assert_eq!(c.grid.n_points, 2049);
    assert_eq!(c.beta, 0.125);
    let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
    assert_eq!(back, c);
    let partial = ExperimentConfig::from_json(r#"{"id": "p", "seed": 4}"#).unwrap();
    assert_eq!(partial.seed, 4);
    assert_eq!(partial.potential, PotentialSpec::constant(1.0));
}

#[test]
fn config_rejects_bad_values() {
    assert!(matches!(ExperimentConfig::from_json(r#"{"bogus": 1}"#), Err(Error::Config(_))));
    assert!(matches!(ExperimentConfig::from_json(r#"{"beta": 0.5}"#), Err(Error::Range { .. })));
    let mut c = ExperimentConfig::default();
    c.thresholds.delta_min = 0.0;
    assert!(matches!(c.validate(), Err(Error::Config(_))));
    let mut c = ExperimentConfig::default();
    c.n_atoms = 0;
    assert!(matches!(c.validate(), Err(Error::Config(_))));
}

#[test]
fn potential_short_forms() {
    assert_eq!(parse_potential("constant:2").unwrap(), PotentialSpec::constant(2.0));
    assert_eq!(parse_potential("spikes:7").unwrap(), PotentialSpec::spikes(7));
    assert_eq!(parse_potential("piecewise:3").unwrap(), PotentialSpec::piecewise(3));
    assert_eq!(parse_potential("harmonic").unwrap(), PotentialSpec::harmonic());
    assert_eq!(parse_potential("free").unwrap(), PotentialSpec::free());
    assert_eq!(parse_potential("step:0.5,4").unwrap(), PotentialSpec::step(0.5, 4.0));
    assert_eq!(parse_potential("inverse_power:0.5,40").unwrap(), PotentialSpec::inverse_power(0.5, 40.0));
    let json = serde_json::to_string(&PotentialSpec::spikes(2)).unwrap();
    assert_eq!(parse_potential(&json).unwrap(), PotentialSpec::spikes(2));
    for bad in ["constant", "constant:x", "spikes:1.5", "nope", "constant:0"] {
        assert!(parse_potential(bad).is_err(), "{bad}");
    }
}

#[test]
fn epsilon_grids_nest() {
    let e = EpsilonGridSpec { levels: 4 };
    assert_eq!(e.values(), vec![0.5, 0.25, 0.125, 0.0625]);
    let r = e.refined();
    assert_eq!(r.len(), 7);
    assert!(e.values().iter().all(|v| r.iter().any(|w| (v - w).abs() < 1e-15)));
}

#[test]
fn certification_of_unit_potential() {
    let r = run_certification(&small(PotentialSpec::constant(1.0), 1025)).unwrap();
    let fam = r.find_section("family").unwrap();
    let d = fam.find_table("family").unwrap().column("diameter").unwrap();
    assert!(d.iter().all(|&d| d == 0.25));
    assert!(r.verdicts["family_valid"] && r.verdicts["condition_d"] && r.verdicts["condition_k"]);
    assert!(r.get("min_delta_hat").unwrap() >= 0.45);
    assert!(r.config.is_some());
}

#[test]
fn certification_refuses_free_operator() {
    let e = run_certification(&small(PotentialSpec::free(), 257)).unwrap_err();
    assert!(e.to_string().contains("V ≢ 0 required"));
}

#[test]
fn certification_of_unresolvable_family_fails_without_crashing() {
    let r = run_certification(&small(PotentialSpec::constant(17.0), 2049)).unwrap();
    assert!(!r.passed());
    assert_eq!(r.verdicts["family_valid"], false);
}

#[test]
fn certification_is_deterministic() {
    let c = small(PotentialSpec::spikes(3), 1025);
    let a = run_certification(&c).unwrap();
    let b = run_certification(&c).unwrap();
    assert_eq!(a.content_hash(), b.content_hash());
}

#[test]
fn csv_round_trip_is_exact() {
    let mut t = Table::new("t", &["a", "b,c", "d\"e"]);
    t.push(vec![0.1, 1.0 / 3.0, -2.5e-300]);
    t.push(vec![f64::MAX, f64::MIN_POSITIVE, f64::INFINITY]);
    t.push(vec![f64::NAN, -0.0, 12345.678]);
    let text = table_csv(&t);
    assert!(!text.contains('\r'));
    assert!(text.starts_with("a,\"b,c\",\"d\"\"e\"\n"));
    let back = read_table_csv("t", text.as_bytes()).unwrap();
    assert_eq!(back.columns, t.columns);
    for (x, y) in back.rows.iter().flatten().zip(t.rows.iter().flatten()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
}

#[test]
fn empty_report_emits_skeleton() {
    let dir = tempfile::tempdir().unwrap();
    let paths = emit(&Report::new("empty"), dir.path(), Format::Both).unwrap();
    assert_eq!(paths.len(), 1);
    let text = std::fs::read_to_string(&paths[0]).unwrap();
    let back: Report = serde_json::from_str(&text).unwrap();
    assert!(back.tables.is_empty());
    assert_eq!(back.id, "empty");
}

#[test]
fn re_emission_is_byte_identical() {
    let mut r = Report::new("r");
    let mut t = Table::new("values", &["x", "y"]);
    t.push(vec![1.0, f64::NAN]);
    r.table(t.clone()).value("z", 0.5);
    let mut child = Report::new("child");
    child.table(t.clone()).table(t);
    r.section(child);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let pa = emit(&r, a.path(), Format::Both).unwrap();
    let pb = emit(&r, b.path(), Format::Both).unwrap();
    assert_eq!(pa.len(), 4);
    for (x, y) in pa.iter().zip(&pb) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    let names: Vec<String> = pa.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert!(names.contains(&"r.child.values.2.csv".to_string()));
}

#[test]
fn json_keys_are_sorted() {
    let mut r = Report::new("k");
    r.value("zeta", 1.0).value("alpha", 2.0);
    let text = r.to_pretty_json();
    assert!(text.find("\"alpha\"").unwrap() < text.find("\"zeta\"").unwrap());
    assert!(text.find("\"id\"").unwrap() < text.find("\"values\"").unwrap());
}

#[test]
fn relative_change_floor() {
    assert_eq!(relative_change(0.0, 0.0), 0.0);
    assert!(relative_change(1e-16, 2e-16) < 1e-3);
    assert!((relative_change(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
}

#[test]
fn histogram_counts_everything() {
    let v = [0.4, 0.41, 0.5, 0.9, 0.99];
    let h = histogram(&v, 4);
    let counts = h.column("count").unwrap();
    assert_eq!(counts.iter().sum::<f64>(), 5.0);
    assert_eq!(h.rows[0][0], 0.4);
    assert!((h.rows[3][1] - 0.99).abs() < 1e-15);
}
