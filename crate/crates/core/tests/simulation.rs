use evsynth::simulation::*;
use evsynth::Family;

fn null_scenario(n_reps: usize) -> ScenarioParams {
    ScenarioParams {
        treated_fraction: 0.5,
        hazard_ratio: 1.0,
        n_sites: 5,
        max_n: 2000,
        n_strata: 5,
        tau: 0.0,
        n_reps,
        seed: 11,
        baseline_hazard_min: 1e-4,
        baseline_hazard_max: 1e-3,
        ..Default::default()
    }
}

/// Every method a fixed-effects study is analysed with.
fn fixed_study_methods() -> Vec<Method> {
    Method::fixed_only()
}

#[test]
fn null_case_is_calibrated() {
    let result = run_scenario(
        &null_scenario(500),
        &fixed_study_methods(),
        &SimulationOptions::default(),
    )
    .unwrap();
    for (method, m) in &result.metrics {
        assert!(m.bias.abs() < 0.05, "{method}: bias {}", m.bias);
        assert!(
            (0.93..=0.97).contains(&m.coverage),
            "{method}: coverage {}",
            m.coverage
        );
        assert_eq!(m.non_estimable, 0.0, "{method}");
        assert!(m.mse >= m.bias * m.bias);
    }
}

#[test]
fn random_effects_study_is_unbiased() {
    let params = ScenarioParams {
        hazard_ratio: 2.0,
        n_sites: 10,
        tau: 0.5,
        n_reps: 100,
        ..null_scenario(0)
    };
    let methods = [
        Method::Random(Family::Grid),
        Method::Random(Family::Custom),
        Method::TraditionalRandom,
    ];
    let result = run_scenario(&params, &methods, &SimulationOptions::default()).unwrap();
    for (method, m) in &result.metrics {
        assert!(m.bias.abs() < 0.05, "{method}: bias {}", m.bias);
        assert!(m.precision.is_finite() && m.precision > 0.0);
    }
}

#[test]
fn grid_synthesis_tracks_pooled_patient_level_fit() {
    let params = ScenarioParams {
        treated_fraction: 0.25,
        hazard_ratio: 2.0,
        n_sites: 4,
        max_n: 10_000,
        baseline_hazard_min: 1e-5,
        baseline_hazard_max: 1e-4,
        ..null_scenario(1)
    };
    let options = SimulationOptions::default();
    for rep in 0..30 {
        let sites = generate_rep_sites(&params, rep).unwrap();
        let pooled = pooled_cox_estimate(&sites).unwrap();
        let record = &run_rep(&params, &[Method::Fixed(Family::Grid)], rep, &options).unwrap()[0];
        if let (Some(truth), Some(grid)) = (pooled.mode(), record.estimate) {
            assert!(
                (truth - grid.estimate).abs() < 0.01,
                "rep {rep}: {truth} vs {}",
                grid.estimate
            );
        }
    }
}

#[test]
fn reps_dump_reproduces_metrics_exactly() {
    let params = ScenarioParams {
        treated_fraction: 0.1,
        baseline_hazard_min: 1e-6,
        baseline_hazard_max: 1e-5,
        ..null_scenario(40)
    };
    let methods = vec![
        Method::Fixed(Family::Normal),
        Method::Fixed(Family::Grid),
        Method::TraditionalRandom,
    ];
    let result = run_scenario(&params, &methods, &SimulationOptions::default()).unwrap();
    assert!(
        result.reps.iter().any(|r| r.estimate.is_none()),
        "expected some non-estimable reps"
    );

    let parsed = read_reps_csv(&reps_csv(std::slice::from_ref(&result))).unwrap();
    assert!(parsed.iter().all(|(id, _)| *id == 0));
    let reps: Vec<RepRecord> = parsed.into_iter().map(|(_, r)| r).collect();
    assert_eq!(reps, result.reps);
    let recomputed = ScenarioResult {
        metrics: metrics_from_reps(&params, &methods, &reps),
        ..result.clone()
    };
    assert_eq!(metrics_csv(&[recomputed]), metrics_csv(&[result]));
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let params = null_scenario(12);
    let methods = vec![Method::Fixed(Family::Custom), Method::Random(Family::Grid)];
    let serial = SimulationOptions {
        jobs: Some(1),
        ..Default::default()
    };
    let parallel = SimulationOptions {
        jobs: Some(3),
        ..Default::default()
    };
    let a = run_scenario(&params, &methods, &serial).unwrap();
    let b = run_scenario(&params, &methods, &parallel).unwrap();
    assert_eq!(reps_csv(std::slice::from_ref(&a)), reps_csv(&[b]));
    let c = run_scenario(&ScenarioParams { seed: 12, ..params }, &methods, &serial).unwrap();
    assert_ne!(reps_csv(&[a]), reps_csv(&[c]));
}

#[test]
fn metric_definitions() {
    let est = |estimate: f64, se: f64| {
        Some(RepEstimate {
            estimate,
            ci_lo: estimate - 2.0 * se,
            ci_hi: estimate + 2.0 * se,
            se,
        })
    };
    let m = compute_metrics(0.0, &[est(0.1, 0.1), est(-0.3, 0.1), None, est(0.2, 0.5)]);
    assert!((m.coverage - 2.0 / 3.0).abs() < 1e-15);
    assert!((m.bias - 0.0).abs() < 1e-15);
    assert!((m.mse - (0.01 + 0.09 + 0.04) / 3.0).abs() < 1e-15);
    let precision = ((100.0f64.ln() * 2.0 + 4.0f64.ln()) / 3.0).exp();
    assert!((m.precision - precision).abs() < 1e-9);
    assert_eq!(m.non_estimable, 0.25);
}

#[test]
fn grid_expansion_and_config_parsing() {
    let grid: ScenarioGrid = serde_json::from_str(
        r#"{"treated_fraction": [0.1, 0.5], "hazard_ratio": [2], "n_sites": [3],
            "max_n": [2000], "n_strata": [1, 5], "tau": [0], "n_reps": 7}"#,
    )
    .unwrap();
    let scenarios = grid.expand(3);
    assert_eq!(scenarios.len(), 4);
    assert!(scenarios
        .iter()
        .all(|s| s.n_reps == 7 && s.baseline_hazard_min == 1e-4));
    let seeds: std::collections::HashSet<u64> = scenarios.iter().map(|s| s.seed).collect();
    assert_eq!(seeds.len(), 4);
    assert_eq!(grid.expand(3), scenarios);
    assert!(serde_json::from_str::<ScenarioGrid>(r#"{"n_site": [3]}"#).is_err());
    assert_eq!(
        ScenarioGrid::fixed_effects().expand(0).len(),
        4 * 3 * 4 * 3 * 3
    );
}
