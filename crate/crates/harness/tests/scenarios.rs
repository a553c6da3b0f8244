use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DVector;
use shadowlab::experiments::{fitted_derivatives, grid_centers, r0_map, run_scenario, shadow_scan};
use shadowlab::ledger::{Ledger, Record};
use shadowlab::report::{parse_csv, to_csv, to_svg, CSV_HEADER};
use shadowlab::scenario::{Experiment, Scenario, SCHEMA};
use shadowlab::HarnessError;
use shadowlab_core::embedding::{AnalyticPath, EmbeddingComposition};
use shadowlab_core::shadow::ShadowGeometry;
use shadowlab_core::symplectic::random::random_symplectic;
use shadowlab_core::symplectic::{symplectic_projector, SymplecticSubspace};

fn corpus_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn load(name: &str) -> Scenario {
    Scenario::load(corpus_dir().join(name)).unwrap()
}

#[test]
fn every_corpus_scenario_is_valid_and_round_trips() {
    let mut n = 0;
    for entry in std::fs::read_dir(corpus_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let s = Scenario::load(&path).unwrap();
            let again = Scenario::from_json(&s.to_json()).unwrap();
            assert_eq!(s, again);
            assert_eq!(s.hash(), again.hash());
            n += 1;
        }
    }
    assert!(n >= 8);
}

#[test]
fn invalid_configs_are_rejected() {
    let good = load("linear_identity.json");
    let mut bad = good.clone();
    bad.schema = "shadowlab/scenario/v0".into();
    assert!(matches!(bad.validate(), Err(HarnessError::InvalidConfig(_))));
    let mut bad = good.clone();
    bad.params.tol = 0.0;
    assert!(matches!(bad.validate(), Err(HarnessError::InvalidConfig(_))));
    let mut bad = good.clone();
    bad.params.quadrature_order = 30;
    assert!(bad.validate().is_err());
    let mut bad = good.clone();
    bad.subspace = None;
    assert!(bad.validate().is_err());
    let mut text = good.to_json();
    text = text.replacen("\"dimension\"", "\"unknown_field\": 1, \"dimension\"", 1);
    assert!(matches!(Scenario::from_json(&text), Err(HarnessError::InvalidConfig(_))));
    assert_eq!(HarnessError::InvalidConfig(String::new()).exit_code(), 2);
    let err: HarnessError = shadowlab_core::Error::SingularJacobian.into();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn identity_linear_shadow_is_the_ball_section() {
    let out = run_scenario(&load("linear_identity.json")).unwrap();
    assert_eq!(out.records.len(), 1);
    let r = &out.records[0];
    assert!((r.value - PI * PI).abs() < 1e-12);
    assert!(r.margin.abs() < 1e-12);
    assert!(r.pass);
    // both routes present when cross-checking
    assert!((r.routes["stokes"] - PI * PI).abs() < 1e-9);
    assert!((r.routes["oracle"] - PI * PI).abs() < 1e-6);
}

#[test]
fn mixing_shear_has_positive_linear_margin() {
    let out = run_scenario(&load("linear_mixing_shear.json")).unwrap();
    let r = &out.records[0];
    assert!(r.margin > 1e-3 && r.pass);
    assert!((r.routes["stokes"] - r.value).abs() < 1e-8 * r.value);
}

#[test]
fn ball_capacity_scenario() {
    let out = run_scenario(&load("capacity_ball.json")).unwrap();
    let r = &out.records[0];
    assert!((r.value - 1.69 * PI).abs() < 1e-4, "{}", r.value);
    assert!(r.pass);
}

#[test]
fn shear_scan_margins_are_monotone_and_non_negative() {
    let s = load("shadow_scan_shear.json");
    let out = run_scenario(&s).unwrap();
    let margins: Vec<f64> = out.records.iter().map(|r| r.margin).collect();
    assert_eq!(margins.len(), 6);
    assert!(margins.iter().all(|&m| m >= -1e-3 * PI * PI));
    assert!(margins.windows(2).all(|w| w[1] >= w[0]));
    assert!(margins[5] > 0.0);
}

#[test]
fn unitary_scan_is_flat_and_trivial() {
    let s = load("shadow_scan_unitary.json");
    let Experiment::ShadowScan { t_grid, t_max } = &s.experiment else {
        panic!("scan scenario")
    };
    let path = s.analytic_path(*t_max).unwrap();
    let prof = shadow_scan(&path, &s.subspace().unwrap(), &s.geometry().unwrap(), t_grid, 24, None).unwrap();
    assert!(prof.truncated.is_none());
    assert!(prof.points.iter().all(|p| p.margin.abs() < 1e-8));
    let d = prof.dichotomy.unwrap();
    assert!(d.trivial && d.leading_order.is_none());
}

#[test]
fn constant_path_gives_flat_profile() {
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let l = random_symplectic(6, 2, 0.5, &mut r);
    let v = SymplecticSubspace::coordinate(6, &[0, 1]).unwrap();
    let geom = ShadowGeometry::new(&symplectic_projector(&v).unwrap()).unwrap();
    let path = AnalyticPath::constant(&EmbeddingComposition::from_linear(l.clone()).unwrap().with_domain_radius(1.0));
    let prof = shadow_scan(&path, &v, &geom, &[0.0, 0.1, 0.3], 24, None).unwrap();
    let exact = shadowlab_core::symplectic::linear_shadow_volume(&l, &v).unwrap() - PI * PI;
    for p in &prof.points {
        assert!((p.margin - exact).abs() < 1e-8 * PI * PI);
    }
}

#[test]
fn linear_r0_map_is_constant_and_full() {
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let l = random_symplectic(6, 2, 0.5, &mut r);
    let phi = EmbeddingComposition::from_linear(l).unwrap().with_domain_radius(1.0);
    let v = SymplecticSubspace::coordinate(6, &[0, 1]).unwrap();
    let geom = ShadowGeometry::new(&symplectic_projector(&v).unwrap()).unwrap();
    let centers = grid_centers(6, &[0, 3], 2, 0.2);
    assert_eq!(centers.len(), 4);
    let grid = [0.0, 0.2, 0.4];
    let t = r0_map(&phi, &geom, &centers, &grid, 24, 1e-3).unwrap();
    assert_eq!(t.min_r0, 0.4);
    let f0 = t.rows[0].margins[0].1;
    for row in &t.rows {
        assert!(row.truncated.is_none());
        for &(_, m) in &row.margins {
            assert!((m - f0).abs() < 1e-9);
        }
    }
    // a centre outside the domain is a config error
    let far = vec![DVector::from_element(6, 1.0)];
    assert!(matches!(r0_map(&phi, &geom, &far, &grid, 24, 1e-3), Err(HarnessError::InvalidConfig(_))));
}

#[test]
fn derivative_fit_recovers_a_cubic() {
    let ts: Vec<f64> = (0..8).map(|i| 0.01 * i as f64).collect();
    let vs: Vec<f64> = ts.iter().map(|t| 2.0 + 3.0 * t - 0.5 * t * t + 4.0 * t * t * t).collect();
    let d = fitted_derivatives(&ts, &vs, 3);
    assert!((d[0] - 3.0).abs() < 1e-8);
    assert!((d[1] + 1.0).abs() < 1e-6);
    assert!((d[2] - 24.0).abs() < 1e-4);
}

#[test]
fn deform_scenario_reports_obstruction_and_decreasing_profile() {
    let out = run_scenario(&load("deform_hopf.json")).unwrap();
    assert_eq!(out.records[0].value, 1.0);
    let a: Vec<f64> = out.records[1..].iter().map(|r| r.value).collect();
    assert_eq!(a.len(), 3);
    assert!(a.windows(2).all(|w| w[1] < w[0]) && a[0] < PI);
    assert!(out.records.iter().all(|r| r.pass));
    assert_eq!(out.summary["decreasing"], true);
}

#[test]
fn empty_ledger_gives_header_only_csv() {
    assert_eq!(to_csv(&[]), format!("{CSV_HEADER}\n"));
}

#[test]
fn csv_round_trip_is_bit_exact() {
    let mut ledger = Ledger::new();
    for (i, v) in [PI, 1.0 / 3.0, 1e-300, -2.5e17, 0.1 + 0.2].into_iter().enumerate() {
        ledger.append(Record::new("rt", i as f64 * 0.01, v, v * 1e-7, -v, i % 2 == 0));
    }
    let rows = parse_csv(&to_csv(ledger.records())).unwrap();
    assert_eq!(rows.len(), 5);
    for (row, rec) in rows.iter().zip(ledger.records()) {
        assert_eq!(row.value.to_bits(), rec.value.to_bits());
        assert_eq!(row.t_or_r.to_bits(), rec.t_or_r.to_bits());
        assert_eq!(row.error.to_bits(), rec.error.to_bits());
        assert_eq!(row.margin.to_bits(), rec.margin.to_bits());
        assert_eq!(row.pass, rec.pass);
    }
    let back = Ledger::from_jsonl(&ledger.to_jsonl()).unwrap();
    assert_eq!(back, ledger.records());
    assert!(back.iter().all(Record::verify_id));
}

#[test]
fn svg_plots_margin_profiles() {
    let recs: Vec<Record> = (0..5).map(|i| Record::new("scan", 0.01 * i as f64, 0.0, 0.0, (i * i) as f64, true)).collect();
    let svg = to_svg(&recs);
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("t or r") && svg.contains("margin"));
    assert_eq!(svg.matches("stroke-width=\"1.5\"").count(), 1);
}

#[test]
fn runs_are_deterministic() {
    let s = load("r0_map_small.json");
    let a = run_scenario(&s).unwrap().records;
    let b = shadowlab::experiments::with_workers(3, || run_scenario(&s).unwrap().records);
    let seal = |r: Vec<Record>| {
        let mut l = Ledger::new();
        l.extend(r);
        l.to_jsonl()
    };
    assert_eq!(seal(a), seal(b));
    assert_eq!(s.params.seed, 0);
    assert_eq!(SCHEMA, s.schema);
}

use rand::SeedableRng;
