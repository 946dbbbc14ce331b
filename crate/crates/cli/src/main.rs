//! `mlqc`: label error detection and the synthetic benchmark from the shell.
//!
//! Exit status: 0 success, 1 usage error, 2 data error, 3 internal error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mlqc::bench::{aggregate, aggregates_csv, read_metrics_csv, render_table, run_benchmark, BenchmarkPlan};
use mlqc::confident::flag_multilabel;
use mlqc::data::{
    load_probs_aligned, read_features_csv, read_jsonl, read_labels_csv, save_scores, validate,
    write_features_csv, write_labels_csv, write_probs_csv, MultiLabelDataset, ProbMatrix,
};
use mlqc::model::{cross_val_pred_probs, Hyperparams};
use mlqc::scoring::{score_examples, PoolingMethod};
use mlqc::Error;

const OUT_DIR_ENV: &str = "MLQC_OUT_DIR";

#[derive(Parser)]
#[command(name = "mlqc", version, about = "Find mislabeled examples in multi-label datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank examples by a pooled label-quality score (lower = more suspicious).
    Score(ScoreArgs),
    /// Flag likely mislabeled examples (per-class confident learning, union over classes).
    Flag(FlagArgs),
    /// Generate a noisy synthetic dataset with ground truth.
    Gen(GenArgs),
    /// Cross-validated out-of-sample probabilities from one-vs-rest logistic regression.
    TrainPredict(TrainArgs),
    /// Aggregate a long-format metrics CSV into a method × metric table.
    Report(ReportArgs),
    /// Run the full benchmark: generate, corrupt, cross-validate, score, evaluate.
    Bench(BenchArgs),
}

#[derive(Args)]
struct Inputs {
    /// Labels CSV (`id,label_0,...`) or JSON-lines file (`.jsonl`, may carry probs).
    #[arg(long)]
    labels: PathBuf,
    /// Probabilities CSV (`id,prob_0,...`); ids must match the labels row for row.
    #[arg(long)]
    probs: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// min, max, mean, median, ema, softmin, log, cumavg, weighted_cumavg, sma
    #[arg(long, default_value = "ema")]
    method: String,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    j: Option<usize>,
    #[arg(long)]
    period: Option<usize>,
    /// Min-max rescale scores to [0,1] before writing (display only).
    #[arg(long)]
    rescale: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FlagArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Flags CSV: `id,flagged,classes_flagged`.
    #[arg(long)]
    out: PathBuf,
    /// JSON summary path; defaults to `<out>` with a `.summary.json` suffix.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Small,
    Large,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "small")]
    preset: Preset,
    /// Required for the large preset.
    #[arg(long)]
    allow_large: bool,
    /// Replicate seed; matches replicate `seed` of `bench`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the number of examples.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, env = OUT_DIR_ENV, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Output probabilities CSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    /// Replicate seed; fold shuffling uses the same stream as `bench`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use raw feature values instead of ln(1 + x).
    #[arg(long)]
    no_log: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Long-format metrics CSV written by `bench`.
    #[arg(long)]
    metrics: PathBuf,
    /// Aggregate CSV output; the aligned table always goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "small")]
    preset: Preset,
    #[arg(long)]
    allow_large: bool,
    #[arg(long, default_value_t = 10)]
    replicates: usize,
    /// First replicate seed; replicate r uses seed + r.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated pooling methods (default: all, with default parameters).
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Override the number of training examples per replicate.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, env = OUT_DIR_ENV, default_value = ".")]
    out_dir: PathBuf,
}

enum Failure {
    Usage(String),
    Data(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. } => Failure::Usage(e.to_string()),
            Error::Diverged { .. } | Error::Undefined(_) => Failure::Internal(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Score(a) => score(a),
        Command::Flag(a) => flag(a),
        Command::Gen(a) => gen(a),
        Command::TrainPredict(a) => train_predict(a),
        Command::Report(a) => report(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(3)
        }
    }
}

/// Loads labels and probabilities and checks them against each other.
fn load_inputs(inputs: &Inputs) -> Result<(MultiLabelDataset, ProbMatrix), Failure> {
    let is_jsonl = inputs.labels.extension().is_some_and(|e| e == "jsonl");
    let (dataset, embedded) = if is_jsonl {
        read_jsonl(&inputs.labels)?
    } else {
        let (ids, labels) = read_labels_csv(&inputs.labels)?;
        (MultiLabelDataset::new(ids, labels)?, None)
    };
    let probs = match (&inputs.probs, embedded) {
        (Some(path), _) => load_probs_aligned(path, &dataset.example_ids)?,
        (None, Some(p)) => p,
        (None, None) => return Err(Failure::Usage("--probs is required unless the labels file carries probs".into())),
    };
    let report = validate(&dataset, &probs);
    for w in report.warnings() {
        eprintln!("warning: {w}");
    }
    if !report.is_ok() {
        let msgs: Vec<String> = report.errors().map(|e| e.to_string()).collect();
        return Err(Failure::Data(format!("invalid input:\n  {}", msgs.join("\n  "))));
    }
    Ok((dataset, probs))
}

fn pooling_method(a: &ScoreArgs) -> Result<PoolingMethod, Failure> {
    let base: PoolingMethod = a.method.parse().map_err(Failure::Usage)?;
    let unused = |flag: &str| Failure::Usage(format!("--{flag} does not apply to method `{}`", base.name()));
    let method = match base {
        PoolingMethod::Ema { alpha } => PoolingMethod::Ema { alpha: a.alpha.unwrap_or(alpha) },
        PoolingMethod::Softmin { tau } => PoolingMethod::Softmin { tau: a.tau.unwrap_or(tau) },
        PoolingMethod::LogTransform { epsilon } => PoolingMethod::LogTransform {
            epsilon: a.epsilon.unwrap_or(epsilon),
        },
        PoolingMethod::CumAvgBottom { j } => PoolingMethod::CumAvgBottom { j: a.j.unwrap_or(j) },
        PoolingMethod::MeanSma { period } => PoolingMethod::MeanSma {
            period: a.period.unwrap_or(period),
        },
        other => other,
    };
    let takes = |name: &str| method.params().iter().any(|(p, _)| *p == name);
    for (flag, given) in [
        ("alpha", a.alpha.is_some()),
        ("tau", a.tau.is_some()),
        ("epsilon", a.epsilon.is_some()),
        ("j", a.j.is_some()),
        ("period", a.period.is_some()),
    ] {
        if given && !takes(flag) {
            return Err(unused(flag));
        }
    }
    Ok(method)
}

fn score(a: ScoreArgs) -> CliResult {
    let method = pooling_method(&a)?;
    let (dataset, probs) = load_inputs(&a.inputs)?;
    let scores = score_examples(&dataset.given_labels, &probs, method)?;
    let values = if a.rescale { scores.min_max_rescaled() } else { scores.values };
    save_scores(&a.out, &dataset.example_ids, &values, None)?;
    eprintln!("scored {} examples with {method}", values.len());
    Ok(())
}

fn flag(a: FlagArgs) -> CliResult {
    let (dataset, probs) = load_inputs(&a.inputs)?;
    let report = flag_multilabel(&dataset.given_labels, &probs)?;
    let mut csv = String::from("id,flagged,classes_flagged\n");
    for (i, id) in dataset.example_ids.iter().enumerate() {
        let classes: Vec<String> = report.classes_flagged(i).iter().map(usize::to_string).collect();
        let _ = writeln!(csv, "{id},{},{}", u8::from(report.example_flags[i]), classes.join(";"));
    }
    fs::write(&a.out, csv).map_err(Error::from)?;
    let summary_path = a.summary.unwrap_or_else(|| with_suffix(&a.out, ".summary.json"));
    let json = serde_json::to_string_pretty(&report.summary()).map_err(Error::from)?;
    fs::write(&summary_path, json + "\n").map_err(Error::from)?;
    for skip in &report.skipped {
        eprintln!("warning: class {} skipped ({:?})", skip.class, skip.reason);
    }
    eprintln!("flagged {} of {} examples", report.n_flagged(), dataset.n_examples());
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn plan_for(preset: Preset, allow_large: bool) -> Result<BenchmarkPlan, Failure> {
    match preset {
        Preset::Small => Ok(BenchmarkPlan::small()),
        Preset::Large if allow_large => Ok(BenchmarkPlan::large()),
        Preset::Large => Err(Failure::Usage(
            "the large preset is slow; pass --allow-large to run it".into(),
        )),
    }
}

fn gen(a: GenArgs) -> CliResult {
    let mut plan = plan_for(a.preset, a.allow_large)?;
    if let Some(n) = a.samples {
        plan.dataset.n_samples = n;
    }
    let (dataset, spec) = mlqc::bench::prepare_replicate(&plan, a.seed)?;
    fs::create_dir_all(&a.out_dir).map_err(Error::from)?;
    let ids = &dataset.example_ids;
    let truth = dataset.true_labels.as_ref().ok_or(Error::MissingTruth)?;
    let features = dataset.features.as_ref().ok_or(Error::MissingFeatures)?;
    write_labels_csv(a.out_dir.join("labels.csv"), ids, &dataset.given_labels)?;
    write_labels_csv(a.out_dir.join("truth.csv"), ids, truth)?;
    write_features_csv(a.out_dir.join("features.csv"), ids, features)?;
    let json = serde_json::to_string_pretty(&spec).map_err(Error::from)?;
    fs::write(a.out_dir.join("noise_spec.json"), json + "\n").map_err(Error::from)?;
    eprintln!(
        "wrote {} examples × {} classes to {}",
        dataset.n_examples(),
        dataset.n_classes(),
        a.out_dir.display()
    );
    Ok(())
}

fn train_predict(a: TrainArgs) -> CliResult {
    let (ids, labels) = read_labels_csv(&a.labels)?;
    let (feature_ids, features) = read_features_csv(&a.features)?;
    if let Some(row) = ids.iter().zip(&feature_ids).position(|(x, y)| x != y) {
        return Err(Error::IdMismatch {
            row,
            left: ids[row].clone(),
            right: feature_ids[row].clone(),
        }
        .into());
    }
    let mut dataset = MultiLabelDataset::new(ids, labels)?;
    dataset.features = Some(features);
    let report = mlqc::data::validate_dataset(&dataset);
    if !report.is_ok() {
        let msgs: Vec<String> = report.errors().map(|e| e.to_string()).collect();
        return Err(Failure::Data(format!("invalid input:\n  {}", msgs.join("\n  "))));
    }
    let hp = Hyperparams {
        learning_rate: a.lr,
        l2: a.l2,
        epochs: a.epochs,
        log_transform: !a.no_log,
    };
    let plan = BenchmarkPlan {
        n_folds: a.folds,
        ..BenchmarkPlan::small()
    };
    let cv = mlqc::bench::replicate_cv(&plan, a.seed);
    let probs = cross_val_pred_probs(&dataset, &cv, &hp)?;
    write_probs_csv(&a.out, &dataset.example_ids, &probs)?;
    eprintln!("wrote out-of-sample probabilities for {} examples", dataset.n_examples());
    Ok(())
}

fn report(a: ReportArgs) -> CliResult {
    let rows = read_metrics_csv(&a.metrics)?;
    if rows.is_empty() {
        return Err(Failure::Data(format!("{}: no metric rows", a.metrics.display())));
    }
    let agg = aggregate(&rows);
    print!("{}", render_table(&agg));
    if let Some(out) = a.out {
        fs::write(out, aggregates_csv(&agg)).map_err(Error::from)?;
    }
    Ok(())
}

fn bench(a: BenchArgs) -> CliResult {
    let mut plan = plan_for(a.preset, a.allow_large)?;
    plan.n_replicates = a.replicates;
    plan.base_seed = a.seed;
    plan.jobs = a.jobs;
    plan.hyperparams.epochs = a.epochs;
    if let Some(n) = a.samples {
        plan.dataset.n_samples = n;
    }
    if !a.methods.is_empty() {
        plan.methods = a
            .methods
            .iter()
            .map(|m| m.parse::<PoolingMethod>())
            .collect::<Result<_, _>>()
            .map_err(Failure::Usage)?;
    }
    let report = run_benchmark(&plan)?;
    report.write_dir(&a.out_dir)?;
    print!("{}", report.render_table());
    for f in &report.metadata.failures {
        eprintln!("warning: replicate seed {} failed: {}", f.seed, f.error);
    }
    eprintln!(
        "{} replicates in {:.1}s, results in {}",
        plan.n_replicates,
        report.metadata.wall_time_secs,
        a.out_dir.display()
    );
    Ok(())
}
