use proptest::prelude::*;

use conekit::cone_charts::{ChartMap, ConeParams, WPoint};
use conekit::grid::GridField;
use conekit::harness::{run_suite, ExperimentConfig, RunReport};
use conekit::ConeError;

proptest! {
    #[test]
    fn chart_round_trip(beta in 0.05f64..0.95, m in 1e-6f64..10.0, s in -1.0f64..1.0) {
        for chart in ChartMap::all(beta).unwrap() {
            let w = WPoint::transverse(m, chart.center + 0.999 * s * chart.half_width);
            let back = chart.psi_inverse(&chart.psi(&w).unwrap()).unwrap();
            prop_assert!((back.modulus - m).abs() <= 1e-12 * m);
            prop_assert!((back.arg - w.arg).abs() <= 1e-12);
        }
    }

    #[test]
    fn admissible_pairs(alpha in 0.01f64..0.99, beta in 0.01f64..0.99) {
        let ok = ConeParams::new(alpha, beta).is_ok();
        prop_assert_eq!(ok, alpha < 1.0 / beta - 1.0);
    }
}

#[test]
fn config_toml_round_trip() {
    let mut cfg = ExperimentConfig { name: "rt".into(), seed: 7, ..ExperimentConfig::default() };
    cfg.checks = vec!["phi_bound".into()];
    let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
    assert_eq!(back.to_toml_string(), cfg.to_toml_string());
}

#[test]
fn config_rejects_unknown_keys() {
    let e = ExperimentConfig::from_toml_str("name = \"x\"\nsede = 3\n").unwrap_err();
    assert!(matches!(e, ConeError::Config(_)), "{e}");
}

#[test]
fn report_json_round_trip() {
    let cfg = ExperimentConfig { checks: vec!["flattening".into()], ..ExperimentConfig::default() };
    let r = run_suite(&cfg).unwrap();
    assert_eq!(RunReport::from_json(&r.to_json()).unwrap().to_json(), r.to_json());
}

#[test]
fn grid_field_save_load() {
    let f = GridField::disc(0.6, 1e-3, 1.0, 12, 8, |z| z * z.norm()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("f.csv");
    f.save(&p).unwrap();
    let g = GridField::load(&p).unwrap();
    assert_eq!(g.radii, f.radii);
    let err = g.values.iter().zip(&f.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert_eq!(err, 0.0);
    assert_eq!(g.at(3, 2), f.at(3, 2));
}
