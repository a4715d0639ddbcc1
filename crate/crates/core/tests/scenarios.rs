use std::path::PathBuf;

use isoext::scenario::*;
use isoext::Error;

fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn load(name: &str) -> ScenarioConfig {
    let text = std::fs::read_to_string(scenario_dir().join(format!("{name}.json"))).unwrap();
    ScenarioConfig::from_json(&text).unwrap()
}

fn quick(mut config: ScenarioConfig) -> ScenarioConfig {
    config.sampling.samples = 2000;
    config.sampling.pairs = 2000;
    config.sampling.fd_points = 200;
    config.sampling.roundtrip_points = 200;
    config.sampling.grid_resolution = 32;
    config
}

#[test]
fn bundled_scenarios_load_and_round_trip() {
    let mut names: Vec<String> = std::fs::read_dir(scenario_dir())
        .unwrap()
        .map(|e| {
            e.unwrap()
                .path()
                .file_stem()
                .unwrap()
                .to_string_lossy()
                .into_owned()
        })
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "alignment",
            "identity",
            "reflected_cluster",
            "rigid_motion",
            "slowtwist_3d",
            "slowtwist_dumbbell"
        ]
    );
    for name in &names {
        let config = load(name);
        assert_eq!(config.schema_version, SCHEMA_VERSION);
        let again = ScenarioConfig::from_json(&config.to_json()).unwrap();
        assert_eq!(again, config);
        assert_eq!(again.to_json(), config.to_json());
    }
}

#[test]
fn two_dimensional_scenarios_pass() {
    for name in [
        "identity",
        "rigid_motion",
        "reflected_cluster",
        "slowtwist_dumbbell",
    ] {
        let report = run_scenario(&quick(load(name)), false).unwrap();
        assert!(report.pass, "{name}: {:#?}", report.verification.checks);
        assert!(report.timings.is_none());
        assert!(report.decomposition.stats.k_ov <= 144, "{name}");
    }
}

#[test]
fn identity_scenario_has_no_error() {
    let report = run_scenario(&quick(load("identity")), false).unwrap();
    let v = &report.verification;
    assert_eq!(v.eps_input, 0.0);
    assert_eq!(v.realized_c, None);
    assert_eq!((v.far_field_max_err, v.near_field_max_err), (0.0, 0.0));
    assert!(v.distortion_spectrum_sup <= 1e-12);
    assert!(v.bilipschitz_sup <= 1e-12);
    assert_eq!(v.injectivity_collisions, 0);
    assert_eq!(v.det_sign, 1);
}

#[test]
fn reflected_cluster_reverses_orientation() {
    let report = run_scenario(&quick(load("reflected_cluster")), false).unwrap();
    assert_eq!(report.verification.det_sign, -1);
}

#[test]
fn reports_are_deterministic_and_timings_opt_in() {
    let config = quick(load("slowtwist_dumbbell"));
    let a = run_scenario(&config, false).unwrap().to_json();
    let b = run_scenario(&config, false).unwrap().to_json();
    assert_eq!(a, b);
    let value: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert!(value["timings"].is_null());

    let timed = run_scenario(&config, true).unwrap();
    let t = timed.timings.unwrap();
    assert!(t.build_seconds >= 0.0 && t.verify_seconds >= 0.0);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut config = load("identity");
    config.c0 = -0.1;
    assert!(matches!(
        run_scenario(&config, false),
        Err(Error::InvalidConfig(_))
    ));

    let text = std::fs::read_to_string(scenario_dir().join("identity.json")).unwrap();
    let unknown = text.replacen("\"n\": 2", "\"n\": 2, \"bogus\": 1", 1);
    assert!(matches!(
        ScenarioConfig::from_json(&unknown),
        Err(Error::InvalidConfig(_))
    ));
    assert!(ScenarioConfig::from_json("{").is_err());
}

#[test]
fn geometry_validation() {
    let g = validate_geometry(&load("slowtwist_dumbbell")).unwrap();
    let again = validate_geometry(&load("slowtwist_dumbbell")).unwrap();
    assert_eq!(g, again);
}

#[test]
fn identity_dump() {
    let ext = load("identity").build().unwrap();
    let csv = dump_field(&ext, 8);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "x_1,x_2,Phi_1,Phi_2,sigma_min,sigma_max,region"
    );
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    assert_eq!(rows.len(), 64);
    let mut far = 0;
    for row in &rows {
        let v: Vec<f64> = row[..6].iter().map(|s| s.parse().unwrap()).collect();
        assert!(
            (v[0] - v[2]).abs() <= 1e-12 && (v[1] - v[3]).abs() <= 1e-12,
            "{row:?}"
        );
        assert!((v[4] - 1.0).abs() <= 1e-12 && (v[5] - 1.0).abs() <= 1e-12);
        assert!(["NEAR", "BLEND", "FAR"].contains(&row[6].as_str()));
        far += (row[6] == "FAR") as usize;
    }
    assert!(far > 0);
    assert_eq!(csv, dump_field(&ext, 8));
}

#[test]
fn far_dump_rows_are_isometric() {
    let ext = load("slowtwist_dumbbell").build().unwrap();
    let csv = dump_field(&ext, 16);
    let mut far = 0;
    for line in csv.lines().skip(1).filter(|l| l.ends_with(",FAR")) {
        let v: Vec<f64> = line
            .split(',')
            .take(6)
            .map(|s| s.parse().unwrap())
            .collect();
        assert!(
            (v[4] - 1.0).abs() <= 1e-12 && (v[5] - 1.0).abs() <= 1e-12,
            "{line}"
        );
        far += 1;
    }
    assert!(far > 0);
}

#[test]
fn bundled_alignment() {
    let report = align(&load("alignment")).unwrap();
    assert!(report.max_residual <= 1e-9);
    assert!(report.relative_residual <= 1e-9);
    assert_eq!(report.point_count, 5);
    let motion = report.motion.to_motion().unwrap();
    assert!(motion.is_proper());
    let blocks = report.blocks.unwrap();
    assert!(!blocks.positive.is_empty() && blocks.negative.is_empty());
    assert!((report.max_simplex_volume.unwrap().volume - 0.5).abs() <= 1e-12);
    assert!(align(&load("identity")).is_err());
}

#[test]
fn alignment_variants() {
    let mut config = load("alignment");
    let input = config.alignment.as_mut().unwrap();
    for z in input.zs.iter_mut() {
        z[0] = -z[0];
    }
    input.proper = false;
    let report = align(&config).unwrap();
    assert!(report.max_residual <= 1e-9);
    let blocks = report.blocks.unwrap();
    assert!(blocks.positive.is_empty() && !blocks.negative.is_empty());

    let input = config.alignment.as_mut().unwrap();
    input.ys.truncate(1);
    input.zs.truncate(1);
    let single = align(&config).unwrap();
    let m = single.motion.to_motion().unwrap();
    assert_eq!(m.linear(), &nalgebra::DMatrix::identity(2, 2));
    assert_eq!(single.max_residual, 0.0);
    assert!(
        single.normalized.is_none()
            && single.blocks.is_none()
            && single.max_simplex_volume.is_none()
    );
}
