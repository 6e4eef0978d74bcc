use ambientlab::fg::solve_expansion;
use ambientlab::suites::{registry, resolve_suites, run_suites, SuiteConfig, SUITES};
use ambientlab::volume::volume_coefficients;
use ambientlab::zoo::{instantiate_jets, parse_metric_spec};
use ambientlab::Error;
use std::collections::HashSet;

const SPHERE3: &str = r#"{
  "dimension": 3,
  "variables": ["x", "y", "z"],
  "components": [["4/(1+x^2+y^2+z^2)^2"],
                 ["0", "4/(1+x^2+y^2+z^2)^2"],
                 ["0", "0", "4/(1+x^2+y^2+z^2)^2"]],
  "description": "round 3-sphere, stereographic"
}"#;

#[test]
fn spec_document_to_volume_coefficients() {
    let spec = parse_metric_spec(SPHERE3).unwrap();
    let g = instantiate_jets(&spec, &[0.2, -0.4, 0.1], 4).unwrap();
    let v = volume_coefficients(&solve_expansion(&g, 2).unwrap(), 2)
        .unwrap()
        .values();
    // C(3,k)/2^k
    assert!((v[0] - 1.5).abs() < 1e-12);
    assert!((v[1] - 0.75).abs() < 1e-12);
}

#[test]
fn registry_is_well_formed() {
    let r = registry();
    assert!(r.len() >= 25);
    let names: HashSet<_> = r.iter().map(|d| d.name).collect();
    assert_eq!(names.len(), r.len());
    for s in SUITES {
        assert!(r.iter().any(|d| d.suite == s), "suite {s} is empty");
    }
    assert!(r
        .iter()
        .all(|d| SUITES.contains(&d.suite) && d.tolerance > 0.0));
    assert_eq!(resolve_suites(&["all".into()]).unwrap().len(), SUITES.len());
    assert!(matches!(
        resolve_suites(&["nope".into()]),
        Err(Error::Usage(_))
    ));
}

#[test]
fn conventions_suite_passes_and_is_deterministic() {
    let cfg = SuiteConfig {
        seed: 5,
        ..Default::default()
    };
    let names = vec!["conventions".to_string(), "fg".to_string()];
    let a = run_suites(&names, &cfg).unwrap();
    assert!(a.iter().all(|c| c.pass), "{a:?}");
    let b = run_suites(&names, &cfg).unwrap();
    let strip = |v: &[ambientlab::suites::CheckResult]| serde_json::to_string(v).unwrap();
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn tolerance_overrides_apply() {
    let mut cfg = SuiteConfig::default();
    cfg.overrides
        .insert("conventions/g1_equals_2P".into(), 1e-30);
    let r = run_suites(&["conventions".into()], &cfg).unwrap();
    let g1 = r.iter().find(|c| c.name == "g1_equals_2P").unwrap();
    assert_eq!(g1.tolerance, 1e-30);
    let others_pass = r
        .iter()
        .filter(|c| c.name != "g1_equals_2P")
        .all(|c| c.pass);
    assert!(others_pass);
    cfg.overrides.insert("no_such_check".into(), 1.0);
    assert!(matches!(
        run_suites(&["conventions".into()], &cfg),
        Err(Error::Usage(_))
    ));
}
