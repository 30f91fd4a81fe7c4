use dtaigen::benchmark::{
    baseline_generate, interpolate_pair, make_synthetic_dataset, oracle_eval, run_benchmark,
    write_benchmark_outputs, Baseline, BenchmarkConfig, Method, ProblemSpec,
};
use dtaigen::config::{ExperimentConfig, TargetsConfig};
use dtaigen::data::fit_normalizer;
use dtaigen::gan::Variant;
use dtaigen::metrics::{evaluate_all, Evaluator, MetricsConfig, ReportLabel};

fn ring8() -> ProblemSpec {
    ProblemSpec::by_id("ring8").unwrap()
}

#[test]
fn oracle_examples() {
    let (p, f) = oracle_eval(&[0.25, 0.25, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5]).unwrap();
    assert_eq!(p[0], 1.0);
    assert!(f);
    let (_, f) = oracle_eval(&[1.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5]).unwrap();
    assert!(!f);
    let (_, f) = oracle_eval(&[0.1, 0.1, 0.9, 0.2, 0.5, 0.5, 0.5, 0.5]).unwrap();
    assert!(!f);
}

#[test]
fn synthetic_dataset_shape() {
    let data = make_synthetic_dataset(&ring8(), 4500, 0).unwrap();
    assert_eq!((data.n_rows(), data.design_width(), data.objective_count()), (4500, 8, 3));
    let infeasible = data.feasible().iter().filter(|&&f| !f).count() as f64 / 4500.0;
    // 0.6 * 0.311 (uniform part) + 0.4 * ~0.03 (clustered part)
    assert!((0.16..=0.22).contains(&infeasible), "infeasible fraction {infeasible}");
    assert!(data.performances().as_slice().iter().all(|&p| p > 0.0 && p <= 1.0));
    assert!(make_synthetic_dataset(&ring8(), 99, 0).is_err());
}

#[test]
fn synthetic_dataset_csv_is_byte_identical() {
    let render = |seed| {
        let mut buf = Vec::new();
        make_synthetic_dataset(&ring8(), 500, seed)
            .unwrap()
            .write_csv(&mut buf, &["seed=3".into()])
            .unwrap();
        buf
    };
    assert_eq!(render(3), render(3));
    assert_ne!(render(3), render(4));
}

#[test]
fn interpolation_endpoint_and_feasibility() {
    let data = make_synthetic_dataset(&ring8(), 1000, 2).unwrap();
    let layout = data.layout();
    let a = data.designs().row(0);
    let b = data.designs().row(1);
    assert_eq!(interpolate_pair(a, b, 0.0, &layout), b.to_vec());
    assert_eq!(interpolate_pair(a, b, 1.0, &layout), a.to_vec());

    let x = baseline_generate(&data, Baseline::Interpolation, 250, 5).unwrap();
    for row in x.row_iter() {
        assert!(oracle_eval(row).unwrap().1, "infeasible interpolant {row:?}");
    }
}

#[test]
fn baselines_evaluate_exactly() {
    let data = make_synthetic_dataset(&ring8(), 1000, 1).unwrap();
    let norm = fit_normalizer(&data).unwrap();
    let targets = TargetsConfig::default().compute(&data).unwrap();
    let label = |m: &str| ReportLabel {
        method: m.into(),
        seed: 1,
        config_digest: "x".into(),
    };
    let oracle = Evaluator::Oracle(ring8().oracle());
    let cfg = MetricsConfig::default();

    let x = baseline_generate(&data, Baseline::DatasetSample, 250, 1).unwrap();
    let r = evaluate_all(&x, &data, &norm, &targets, &oracle, &cfg, &label("dataset")).unwrap();
    assert_eq!(r.mean_novelty, 0.0);
    assert_eq!(r.feasibility_rate, 1.0);
    assert!((0.0..=1.0).contains(&r.mean_tsr));
    assert_eq!(r.n_designs, 250);

    let x = baseline_generate(&data, Baseline::Interpolation, 250, 1).unwrap();
    let r = evaluate_all(&x, &data, &norm, &targets, &oracle, &cfg, &label("interpolation")).unwrap();
    assert_eq!(r.feasibility_rate, 1.0);

    // report round trip
    let mut buf = Vec::new();
    r.write_json(&mut buf).unwrap();
    let back = dtaigen::metrics::MetricsReport::read_json(std::str::from_utf8(&buf).unwrap()).unwrap();
    assert_eq!(back, r);
}

#[test]
fn default_method_set_covers_the_comparison() {
    let cfg = BenchmarkConfig::default();
    let names: Vec<&str> = cfg.methods().into_iter().map(Method::name).collect();
    for m in ["dataset", "interpolation", "vanilla", "no_dtai_no_clf", "proposed"] {
        assert!(names.contains(&m), "{m} missing from {names:?}");
    }
    let ablations: Vec<&str> = Variant::ALL
        .into_iter()
        .filter(|v| *v != Variant::Vanilla)
        .map(Variant::name)
        .collect();
    assert_eq!(ablations, ["proposed", "no_dtai", "no_clf", "no_dtai_no_clf"]);
    assert_eq!(cfg.eval_count, 250);
    assert_eq!(cfg.dataset_size, 4500);
}

fn small() -> ExperimentConfig {
    ExperimentConfig::from_json_str(
        r#"{
            "surrogate": {"epochs": 3},
            "gan": {"steps": 40},
            "benchmark": {"dataset_size": 300, "seeds": [0, 1], "eval_count": 40}
        }"#,
    )
    .unwrap()
}

#[test]
fn benchmark_outputs_are_byte_identical_across_runs_and_threads() {
    let cfg = small();
    let a = run_benchmark(&cfg, 1).unwrap();
    let b = run_benchmark(&cfg, 2).unwrap();
    let summary = |o: &dtaigen::benchmark::BenchmarkOutcome| {
        let mut buf = Vec::new();
        o.write_summary_csv(&mut buf, &cfg.preamble(0)).unwrap();
        buf
    };
    assert_eq!(summary(&a), summary(&b));
    assert!(a.failed_cells().is_empty());

    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    write_benchmark_outputs(&a, &cfg, d1.path()).unwrap();
    write_benchmark_outputs(&b, &cfg, d2.path()).unwrap();
    for rel in [
        "summary.csv",
        "cells.csv",
        "0/dataset.csv",
        "0/targets.json",
        "1/surrogates.json",
        "1/proposed/report.json",
        "1/proposed/designs.csv",
        "1/proposed/generator.json",
        "1/proposed/training_log.csv",
        "0/dataset/per_design.csv",
    ] {
        let x = std::fs::read(d1.path().join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"));
        let y = std::fs::read(d2.path().join(rel)).unwrap();
        assert_eq!(x, y, "{rel} differs");
    }
    let summary = std::fs::read_to_string(d1.path().join("summary.csv")).unwrap();
    assert!(summary.starts_with(&format!("# config_digest={}", cfg.digest())));
}
