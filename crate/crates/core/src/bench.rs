//! End-to-end benchmark: generate, corrupt, cross-validate, score, flag and
//! evaluate, over several seeded replicates.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confident::flag_multilabel;
use crate::data::{fmt_f64, MultiLabelDataset, ProbMatrix};
use crate::error::{Error, Result};
use crate::eval::{ErrorTruth, Metric};
use crate::model::{cross_val_pred_probs, CvConfig, Hyperparams};
use crate::scoring::{pool, self_confidence, PoolingMethod};
use crate::synth::{corrupt, gen_multilabel, GenConfig, NoiseSpec, TraceSplit};

pub const CLASSIFIER: &str = "logistic_regression";
pub const METRICS_HEADER: &str = "dataset,seed,classifier,method,metric,param_T,param_k,value";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub gamma_shape: f64,
    pub gamma_scale: f64,
    pub max_errors_per_example: usize,
    pub split: TraceSplit,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            gamma_shape: 2.0,
            gamma_scale: 0.01,
            max_errors_per_example: 3,
            split: TraceSplit::Symmetric,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkPlan {
    pub dataset_name: String,
    /// Generator template; its seed is replaced per replicate.
    pub dataset: GenConfig,
    pub n_replicates: usize,
    pub base_seed: u64,
    pub noise: NoiseParams,
    pub n_folds: usize,
    pub hyperparams: Hyperparams,
    pub methods: Vec<PoolingMethod>,
    pub metrics: Vec<Metric>,
    /// Replicates run concurrently up to this many threads.
    pub jobs: usize,
}

impl BenchmarkPlan {
    pub fn small() -> Self {
        BenchmarkPlan {
            dataset_name: "small".into(),
            dataset: GenConfig::small(0),
            n_replicates: 10,
            base_seed: 0,
            noise: NoiseParams::default(),
            n_folds: 5,
            hyperparams: Hyperparams::default(),
            methods: PoolingMethod::all_defaults(),
            metrics: Metric::standard_set(),
            jobs: 1,
        }
    }

    pub fn large() -> Self {
        BenchmarkPlan {
            dataset_name: "large".into(),
            dataset: GenConfig::large(0),
            ..Self::small()
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.n_replicates < 1 {
            return Err(Error::param("n_replicates", self.n_replicates, "must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::param("methods", "[]", "at least one pooling method required"));
        }
        if self.jobs < 1 {
            return Err(Error::param("jobs", self.jobs, "must be at least 1"));
        }
        for m in &self.methods {
            m.check(self.dataset.n_classes)?;
        }
        self.dataset.check()
    }

    pub fn replicate_seeds(&self) -> Vec<u64> {
        (0..self.n_replicates as u64).map(|r| self.base_seed + r).collect()
    }
}

/// Generated, corrupted dataset for one replicate seed, with its noise spec.
pub fn prepare_replicate(plan: &BenchmarkPlan, seed: u64) -> Result<(MultiLabelDataset, NoiseSpec)> {
    let config = GenConfig {
        seed: crate::derive_seed(seed, 0),
        ..plan.dataset.clone()
    };
    let clean = gen_multilabel(&config)?;
    let spec = NoiseSpec {
        gamma_shape: plan.noise.gamma_shape,
        gamma_scale: plan.noise.gamma_scale,
        max_errors_per_example: plan.noise.max_errors_per_example,
        split: plan.noise.split,
        ..NoiseSpec::new(crate::derive_seed(seed, 1))
    }
    .sample(config.n_classes)?;
    let noisy = corrupt(&clean, &spec)?;
    Ok((noisy, spec))
}

/// Cross-validation settings used by the benchmark for a replicate seed.
pub fn replicate_cv(plan: &BenchmarkPlan, seed: u64) -> CvConfig {
    CvConfig {
        n_folds: plan.n_folds,
        seed: crate::derive_seed(seed, 2),
        shuffle: true,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub dataset: String,
    pub seed: u64,
    pub classifier: String,
    pub method: String,
    pub metric: String,
    pub param_t: Option<usize>,
    pub param_k: Option<usize>,
    pub value: Option<f64>,
}

impl MetricRow {
    fn to_csv_line(&self) -> String {
        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.dataset,
            self.seed,
            self.classifier,
            self.method,
            self.metric,
            opt(self.param_t),
            opt(self.param_k),
            self.value.map(fmt_f64).unwrap_or_else(|| "NA".into())
        )
    }
}

/// Confident-learning flag quality for one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagRow {
    pub seed: u64,
    pub n_flagged: usize,
    pub n_mislabeled: usize,
    pub true_positives: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub metric: String,
    pub mean: f64,
    /// Sample standard deviation; `None` with fewer than two values.
    pub std: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub version: String,
    pub plan: BenchmarkPlan,
    pub seeds: Vec<u64>,
    pub failures: Vec<ReplicateFailure>,
    pub wall_time_secs: f64,
    pub started_at_unix: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub rows: Vec<MetricRow>,
    pub flag_rows: Vec<FlagRow>,
    pub aggregates: Vec<Aggregate>,
    pub metadata: RunMetadata,
}

struct ReplicateOutput {
    rows: Vec<MetricRow>,
    flags: FlagRow,
}

/// Scores and metric rows for one replicate, given its probabilities.
pub fn evaluate_replicate(
    plan: &BenchmarkPlan,
    seed: u64,
    dataset: &MultiLabelDataset,
    probs: &ProbMatrix,
) -> Result<(Vec<MetricRow>, FlagRow)> {
    let truth_labels = dataset.true_labels.as_ref().ok_or(Error::MissingTruth)?;
    let truth = ErrorTruth::from_labels(&dataset.given_labels, truth_labels)?;
    let per_class = self_confidence(&dataset.given_labels, probs)?;

    let mut rows = Vec::with_capacity(plan.methods.len() * plan.metrics.len());
    for &method in &plan.methods {
        let scores = pool(&per_class, method)?;
        for metric in &plan.metrics {
            let (param_t, param_k) = match metric {
                Metric::ApAtT { k } => (Some(truth.n_mislabeled()), Some(*k)),
                _ => (None, None),
            };
            // an undefined metric (no positives, constant input) is recorded as NA
            let value = metric.evaluate(&scores.values, &truth).ok().and_then(|r| r.value);
            rows.push(MetricRow {
                dataset: plan.dataset_name.clone(),
                seed,
                classifier: CLASSIFIER.into(),
                method: method.name().into(),
                metric: metric.to_string(),
                param_t,
                param_k,
                value,
            });
        }
    }

    let report = flag_multilabel(&dataset.given_labels, probs)?;
    let tp = report
        .example_flags
        .iter()
        .zip(&truth.error_flags)
        .filter(|(f, t)| **f && **t)
        .count();
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    let flags = FlagRow {
        seed,
        n_flagged: report.n_flagged(),
        n_mislabeled: truth.n_mislabeled(),
        true_positives: tp,
        precision: ratio(tp, report.n_flagged()),
        recall: ratio(tp, truth.n_mislabeled()),
    };
    Ok((rows, flags))
}

fn run_replicate(plan: &BenchmarkPlan, seed: u64) -> Result<ReplicateOutput> {
    let (dataset, _) = prepare_replicate(plan, seed)?;
    let probs = cross_val_pred_probs(&dataset, &replicate_cv(plan, seed), &plan.hyperparams)?;
    let (rows, flags) = evaluate_replicate(plan, seed, &dataset, &probs)?;
    Ok(ReplicateOutput { rows, flags })
}

pub fn run_benchmark(plan: &BenchmarkPlan) -> Result<BenchmarkReport> {
    plan.check()?;
    let started = Instant::now();
    let started_at_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let seeds = plan.replicate_seeds();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.jobs)
        .build()
        .map_err(|_| Error::param("jobs", plan.jobs, "thread pool could not be built"))?;
    let outputs: Vec<(u64, Result<ReplicateOutput>)> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| (seed, run_replicate(plan, seed)))
            .collect()
    });

    let mut rows = Vec::new();
    let mut flag_rows = Vec::new();
    let mut failures = Vec::new();
    for (seed, out) in outputs {
        match out {
            Ok(out) => {
                rows.extend(out.rows);
                flag_rows.push(out.flags);
            }
            Err(e) => failures.push(ReplicateFailure {
                seed,
                error: e.to_string(),
            }),
        }
    }
    let aggregates = aggregate(&rows);
    Ok(BenchmarkReport {
        rows,
        flag_rows,
        aggregates,
        metadata: RunMetadata {
            version: env!("CARGO_PKG_VERSION").into(),
            plan: plan.clone(),
            seeds,
            failures,
            wall_time_secs: started.elapsed().as_secs_f64(),
            started_at_unix,
        },
    })
}

fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() >= 2).then(|| {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    });
    (mean, std)
}

/// Mean and standard deviation over replicates for every (method, metric).
/// Spearman rows yield two entries, `spearman_raw` and `spearman_negated`.
/// Missing values are skipped; method and metric order follow first
/// appearance in `rows`.
pub fn aggregate(rows: &[MetricRow]) -> Vec<Aggregate> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for row in rows {
        let key = (row.method.clone(), row.metric.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        let entry = groups.entry(key).or_default();
        if let Some(v) = row.value {
            entry.push(v);
        }
    }
    let mut out = Vec::new();
    for key in order {
        let values = &groups[&key];
        if values.is_empty() {
            continue;
        }
        let (method, metric) = key;
        if metric == "spearman" {
            let negated: Vec<f64> = values.iter().map(|v| -v).collect();
            for (name, vals) in [("spearman_raw", values.as_slice()), ("spearman_negated", &negated)] {
                let (mean, std) = mean_std(vals);
                out.push(Aggregate {
                    method: method.clone(),
                    metric: name.into(),
                    mean,
                    std,
                    n: vals.len(),
                });
            }
        } else {
            let (mean, std) = mean_std(values);
            out.push(Aggregate { method, metric, mean, std, n: values.len() });
        }
    }
    out
}

/// Mean of `metric` for `method`, if present.
pub fn aggregate_mean(aggregates: &[Aggregate], method: &str, metric: &str) -> Option<f64> {
    aggregates
        .iter()
        .find(|a| a.method == method && a.metric == metric)
        .map(|a| a.mean)
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv_line());
        out.push('\n');
    }
    out
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<MetricRow>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != METRICS_HEADER {
        return Err(Error::Header {
            path: path.to_owned(),
            message: format!("expected header `{METRICS_HEADER}`"),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let err = |column: &str, message: String| Error::Parse {
            path: path.to_owned(),
            line,
            column: column.into(),
            message,
        };
        let opt_usize = |col: usize, name: &str| -> Result<Option<usize>> {
            let s = record[col].trim();
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| err(name, format!("`{s}` is not an integer")))
            }
        };
        let value = match record[7].trim() {
            "NA" => None,
            s => Some(s.parse::<f64>().map_err(|_| err("value", format!("`{s}` is not a number")))?),
        };
        rows.push(MetricRow {
            dataset: record[0].to_owned(),
            seed: record[1]
                .trim()
                .parse()
                .map_err(|_| err("seed", format!("`{}` is not an integer", &record[1])))?,
            classifier: record[2].to_owned(),
            method: record[3].to_owned(),
            metric: record[4].to_owned(),
            param_t: opt_usize(5, "param_T")?,
            param_k: opt_usize(6, "param_k")?,
            value,
        });
    }
    Ok(rows)
}

pub fn aggregates_csv(aggregates: &[Aggregate]) -> String {
    let mut out = String::from("method,metric,mean,std,n\n");
    for a in aggregates {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            a.method,
            a.metric,
            fmt_f64(a.mean),
            a.std.map(fmt_f64).unwrap_or_else(|| "NA".into()),
            a.n
        );
    }
    out
}

/// Methods × metrics table of `mean ± std`, aligned for a terminal.
pub fn render_table(aggregates: &[Aggregate]) -> String {
    let mut methods: Vec<&str> = Vec::new();
    let mut metrics: Vec<&str> = Vec::new();
    for a in aggregates {
        if !methods.contains(&a.method.as_str()) {
            methods.push(&a.method);
        }
        if !metrics.contains(&a.metric.as_str()) {
            metrics.push(&a.metric);
        }
    }
    let cell = |method: &str, metric: &str| -> String {
        aggregates
            .iter()
            .find(|a| a.method == method && a.metric == metric)
            .map(|a| match a.std {
                Some(s) => format!("{:.4} ± {:.4}", a.mean, s),
                None => format!("{:.4}", a.mean),
            })
            .unwrap_or_else(|| "-".into())
    };
    let mut grid: Vec<Vec<String>> = vec![std::iter::once("method".to_owned())
        .chain(metrics.iter().map(|m| m.to_string()))
        .collect()];
    for method in &methods {
        grid.push(
            std::iter::once(method.to_string())
                .chain(metrics.iter().map(|m| cell(method, m)))
                .collect(),
        );
    }
    let widths: Vec<usize> = (0..grid[0].len())
        .map(|c| grid.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &grid {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (s, &w))| {
                let pad = w - s.chars().count();
                if c == 0 {
                    format!("{s}{}", " ".repeat(pad))
                } else {
                    format!("{}{s}", " ".repeat(pad))
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn flags_csv(rows: &[FlagRow]) -> String {
    let mut out = String::from("seed,n_flagged,n_mislabeled,true_positives,precision,recall\n");
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_else(|| "NA".into());
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.seed,
            r.n_flagged,
            r.n_mislabeled,
            r.true_positives,
            opt(r.precision),
            opt(r.recall)
        );
    }
    out
}

impl BenchmarkReport {
    pub fn metrics_csv(&self) -> String {
        metrics_csv(&self.rows)
    }

    pub fn aggregates_csv(&self) -> String {
        aggregates_csv(&self.aggregates)
    }

    pub fn render_table(&self) -> String {
        render_table(&self.aggregates)
    }

    /// Writes `metrics.csv`, `aggregate.csv`, `aggregate.txt`, `flags.csv`
    /// and `metadata.json` into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("metrics.csv"), self.metrics_csv())?;
        fs::write(dir.join("aggregate.csv"), self.aggregates_csv())?;
        fs::write(dir.join("aggregate.txt"), self.render_table())?;
        fs::write(dir.join("flags.csv"), flags_csv(&self.flag_rows))?;
        let mut f = fs::File::create(dir.join("metadata.json"))?;
        serde_json::to_writer_pretty(&mut f, &self.metadata)?;
        f.write_all(b"\n")?;
        Ok(())
    }
}
