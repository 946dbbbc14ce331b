use mlqc::bench::{aggregate, metrics_csv, read_metrics_csv, run_benchmark, BenchmarkPlan, METRICS_HEADER};
use mlqc::eval::Metric;
use mlqc::model::Hyperparams;
use mlqc::scoring::PoolingMethod;
use mlqc::synth::GenConfig;

fn quick_plan() -> BenchmarkPlan {
    BenchmarkPlan {
        dataset: GenConfig {
            n_samples: 800,
            ..GenConfig::small(0)
        },
        n_replicates: 2,
        base_seed: 40,
        hyperparams: Hyperparams {
            epochs: 100,
            ..Hyperparams::default()
        },
        methods: vec![PoolingMethod::Min, PoolingMethod::Ema { alpha: 0.8 }],
        jobs: 2,
        ..BenchmarkPlan::small()
    }
}

#[test]
fn one_row_per_method_and_metric() {
    let plan = BenchmarkPlan {
        n_replicates: 1,
        ..quick_plan()
    };
    let report = run_benchmark(&plan).unwrap();
    assert_eq!(report.rows.len(), 2 * plan.metrics.len());
    assert!(report.metadata.failures.is_empty());
    assert_eq!(report.flag_rows.len(), 1);
    let methods: Vec<&str> = report.rows.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(methods.iter().filter(|&&m| m == "min").count(), plan.metrics.len());
    let t = report
        .rows
        .iter()
        .find(|r| r.metric == Metric::ApAtT { k: 1 }.to_string())
        .unwrap()
        .param_t;
    assert_eq!(t, Some(report.flag_rows[0].n_mislabeled));
}

#[test]
fn reruns_are_byte_identical() {
    let plan = quick_plan();
    let a = run_benchmark(&plan).unwrap();
    let b = run_benchmark(&BenchmarkPlan { jobs: 1, ..plan }).unwrap();
    assert_eq!(a.metrics_csv(), b.metrics_csv());
    assert_eq!(a.aggregates_csv(), b.aggregates_csv());
    assert!(a.metrics_csv().starts_with(METRICS_HEADER));
}

#[test]
fn written_report_round_trips() {
    let report = run_benchmark(&quick_plan()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    report.write_dir(dir.path()).unwrap();
    for f in ["metrics.csv", "aggregate.csv", "aggregate.txt", "flags.csv", "metadata.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let rows = read_metrics_csv(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics_csv(&rows), report.metrics_csv());
    // aggregates are recomputable from the rows
    assert_eq!(aggregate(&rows), report.aggregates);
    let spearman: Vec<&str> = report
        .aggregates
        .iter()
        .filter(|a| a.method == "min" && a.metric.starts_with("spearman"))
        .map(|a| a.metric.as_str())
        .collect();
    assert_eq!(spearman, vec!["spearman_raw", "spearman_negated"]);
}

#[test]
fn invalid_plans_are_rejected() {
    assert!(run_benchmark(&BenchmarkPlan { n_replicates: 0, ..quick_plan() }).is_err());
    assert!(run_benchmark(&BenchmarkPlan { methods: vec![], ..quick_plan() }).is_err());
    let too_deep = BenchmarkPlan {
        methods: vec![PoolingMethod::CumAvgBottom { j: 9 }],
        ..quick_plan()
    };
    assert!(run_benchmark(&too_deep).is_err());
}
