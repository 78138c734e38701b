//! `nrbm` command-line interface.
//!
//! Every successful command prints a JSON run manifest (configuration, seed,
//! SHA-256 of inputs and outputs, and a result summary) to stdout. Errors go
//! to stderr with exit code 2 (usage), 3 (format) or 4 (numeric).

mod input;
mod manifest;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nrbm::export::{default_grid_cols, export_filters};
use nrbm::knn::{error_rate, knn_predict, Metric};
use nrbm::rng::{derive_seed, domain};
use nrbm::stability::{fit_predictor, run_stability_protocol, Method, ReplicatePredictor, StabilityConfig};
use nrbm::train::{
    dead_units, default_bin_edges, reconstruction_error, train_with_options, weight_histogram, DeadUnitConfig,
    TraceOptions, TrainConfig,
};
use nrbm::{classification_metrics, load_model, save_model, ChainMode, Model, ModelKind, Rbm};
use serde_json::json;

use input::{read_labeled_csv, write_matrix_csv, DataArgs, FormatArgs};
use manifest::{CliError, CliResult, Manifest};

#[derive(Debug, Parser)]
#[command(name = "nrbm", version, about = "Nonnegative restricted Boltzmann machine experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an RBM; a positive --alpha adds the nonnegativity barrier.
    Train(TrainArgs),
    /// Write hidden posteriors p(h | v) for every row.
    Transform(ModelDataArgs),
    /// Write one-step mean-field reconstructions.
    Reconstruct(ModelDataArgs),
    /// Count used hidden units for each threshold.
    DeadUnits(DeadUnitsArgs),
    /// Render receptive fields as a PGM image.
    ExportFilters(ExportArgs),
    /// Histogram of the weight matrix.
    Histogram(HistogramArgs),
    /// k-nearest-neighbour error between two labelled posterior files.
    KnnEval(KnnArgs),
    /// Bootstrap feature-selection stability.
    Stabilize(StabilizeArgs),
    /// Classification metrics of a lasso or pipeline model.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    input: DataArgs,
    #[arg(long, default_value_t = 100)]
    hidden: usize,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    #[arg(long, default_value_t = 100)]
    batch: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 1)]
    cd_k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    hidden_bias: f64,
    /// Sample visible states in the negative chain instead of using probabilities.
    #[arg(long)]
    sampled_visibles: bool,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ModelDataArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    input: DataArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DeadUnitsArgs {
    #[arg(long)]
    model: PathBuf,
    /// `start:stop:step` (inclusive) or a comma-separated list.
    #[arg(long, default_value = "0.01:0.06:0.01")]
    tau_set: String,
    /// Optional per-unit CSV of normalized l1 norms and dead flags.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    width: usize,
    #[arg(long)]
    height: usize,
    /// Tiles per grid row (default: ceil(sqrt(K))).
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct HistogramArgs {
    #[arg(long)]
    model: PathBuf,
    /// Bin edges: `start:stop:step` or a comma-separated list.
    #[arg(long, allow_hyphen_values = true)]
    bins: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct KnnArgs {
    /// CSV with a header and a trailing label column, as written by `transform`.
    #[arg(long)]
    train_posteriors: PathBuf,
    #[arg(long)]
    test_posteriors: PathBuf,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value = "cosine")]
    metric: Metric,
}

#[derive(Debug, Args)]
struct StabilizeArgs {
    #[command(flatten)]
    input: DataArgs,
    #[arg(long, default_value = "nrbm+lasso")]
    method: Method,
    #[arg(long, default_value_t = 200)]
    hidden: usize,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    #[arg(long, default_value_t = 100)]
    batch: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    beta: f64,
    #[arg(long, default_value_t = 10)]
    bootstraps: usize,
    #[arg(long, default_value = "10,50,100,150,200", value_delimiter = ',')]
    t_list: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Held-out data scored with the bootstrap-averaged model; read with the same format flags.
    #[arg(long)]
    test_data: Option<PathBuf>,
    /// IDX labels for --test-data.
    #[arg(long, requires = "test_data")]
    test_labels: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Save a classifier: the averaged lasso, or for two-stage methods a
    /// pipeline refit on the full training data.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Labelled data to score.
    #[arg(long, visible_alias = "data")]
    test_data: PathBuf,
    #[command(flatten)]
    fmt: FormatArgs,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `start:stop:step` (inclusive) or `a,b,c`.
fn parse_grid(spec: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::usage(format!("cannot parse value list {spec:?}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let [start, stop, step] = parts[..] else {
            return Err(bad());
        };
        let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
        if step.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) || stop < start {
            return Err(bad());
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        // Rounding keeps 0.01:0.06:0.01 at the literal decimal values.
        Ok((0..count)
            .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
            .collect())
    } else {
        spec.split(',').map(num).collect()
    }
}

fn load_rbm(path: &PathBuf, manifest: &mut Manifest) -> CliResult<(Model, Rbm)> {
    manifest.input(path)?;
    let model: Model = load_model(path)?;
    let rbm = model
        .rbm
        .clone()
        .ok_or_else(|| CliError::from(nrbm::Error::Format(format!("{} model has no RBM", model.kind))))?;
    Ok((model, rbm))
}

fn cmd_train(a: TrainArgs) -> CliResult<Manifest> {
    let config = TrainConfig {
        eta: a.eta,
        alpha: a.alpha,
        cd_k: a.cd_k,
        batch_size: a.batch,
        epochs: a.epochs,
        seed: a.seed,
        hidden_count: a.hidden,
        hidden_bias_init: a.hidden_bias,
        chain_mode: if a.sampled_visibles {
            ChainMode::Sampled
        } else {
            ChainMode::MeanFieldVisible
        },
        ..TrainConfig::default()
    };
    let mut m = Manifest::new("train").config(json!({ "input": &a.input, "train": &config }));
    m.seed = Some(a.seed);
    let data = a.input.load(&mut m)?;
    let (params, trace) = train_with_options(&data, &config, &TraceOptions::default())?;
    save_model(&Model::from_rbm(params, config), &a.out)?;
    m.output(&a.out)?;
    if let Some(path) = &a.trace {
        std::fs::write(path, trace.to_csv())?;
        m.output(path)?;
    }
    let last = trace.records.last().expect("epoch 0 is always recorded");
    m.result(json!({
        "rows": data.rows(),
        "visible": data.cols(),
        "reconstruction_error": last.reconstruction_error,
        "negative_fraction": last.negative_fraction,
        "used_units": last.used_units,
    }));
    Ok(m)
}

fn cmd_transform(a: ModelDataArgs, reconstruct: bool) -> CliResult<Manifest> {
    let name = if reconstruct { "reconstruct" } else { "transform" };
    let mut m = Manifest::new(name).config(json!({ "input": &a.input }));
    let (model, rbm) = load_rbm(&a.model, &mut m)?;
    m.seed = Some(model.master_seed);
    let data = a.input.load(&mut m)?;
    let out = if reconstruct {
        rbm.reconstruct(data.values())?
    } else {
        rbm.hidden_conditional_batch(data.values())?
    };
    write_matrix_csv(&a.out, out.view(), data.labels(), if reconstruct { "v" } else { "h" })?;
    m.output(&a.out)?;
    let mut result = json!({ "rows": out.nrows(), "cols": out.ncols() });
    if reconstruct {
        result["reconstruction_error"] = json!(reconstruction_error(&rbm, data.values())?);
    }
    m.result(result);
    Ok(m)
}

fn cmd_dead_units(a: DeadUnitsArgs) -> CliResult<Manifest> {
    let config = DeadUnitConfig {
        thresholds: parse_grid(&a.tau_set)?,
    };
    let mut m = Manifest::new("dead-units").config(&config);
    let (model, rbm) = load_rbm(&a.model, &mut m)?;
    m.seed = Some(model.master_seed);
    let report = dead_units(&rbm, &config)?;
    if let Some(path) = &a.out {
        let mut csv = String::from("unit,normalized_l1");
        for t in &report.thresholds {
            csv.push_str(&format!(",dead_at_{t}"));
        }
        csv.push('\n');
        for (k, l1) in report.normalized_l1.iter().enumerate() {
            csv.push_str(&format!("{k},{l1}"));
            for mask in &report.dead_masks {
                csv.push_str(&format!(",{}", u8::from(mask[k])));
            }
            csv.push('\n');
        }
        std::fs::write(path, csv)?;
        m.output(path)?;
    }
    m.result(json!({
        "thresholds": report.thresholds,
        "used_per_threshold": report.used_per_threshold,
        "averaged_used": report.averaged_used,
        "hidden": rbm.n_hidden(),
    }));
    Ok(m)
}

fn cmd_export(a: ExportArgs) -> CliResult<Manifest> {
    let mut m = Manifest::new("export-filters").config(json!({
        "width": a.width, "height": a.height, "cols": a.cols,
    }));
    let (model, rbm) = load_rbm(&a.model, &mut m)?;
    m.seed = Some(model.master_seed);
    let cols = a.cols.unwrap_or_else(|| default_grid_cols(rbm.n_hidden()));
    let img = export_filters(&rbm, a.width, a.height, cols, &a.out)?;
    m.output(&a.out)?;
    m.result(json!({ "image_width": img.width, "image_height": img.height, "tiles": rbm.n_hidden() }));
    Ok(m)
}

fn cmd_histogram(a: HistogramArgs) -> CliResult<Manifest> {
    let edges = match &a.bins {
        Some(spec) => parse_grid(spec)?,
        None => default_bin_edges(),
    };
    let mut m = Manifest::new("histogram").config(json!({ "bin_edges": &edges }));
    let (model, rbm) = load_rbm(&a.model, &mut m)?;
    m.seed = Some(model.master_seed);
    let counts = weight_histogram(rbm.weights(), &edges)?;
    let mut csv = String::from("lower,upper,count\n");
    for (i, c) in counts.iter().enumerate() {
        csv.push_str(&format!("{},{},{c}\n", edges[i], edges[i + 1]));
    }
    std::fs::write(&a.out, csv)?;
    m.output(&a.out)?;
    m.result(json!({ "total": counts.iter().sum::<u64>() }));
    Ok(m)
}

fn cmd_knn(a: KnnArgs) -> CliResult<Manifest> {
    let mut m = Manifest::new("knn-eval").config(json!({ "k": a.k, "metric": format!("{:?}", a.metric).to_lowercase() }));
    m.input(&a.train_posteriors)?;
    m.input(&a.test_posteriors)?;
    let train = read_labeled_csv(&a.train_posteriors)?;
    let test = read_labeled_csv(&a.test_posteriors)?;
    let train_y = train.labels().expect("label column requested");
    let test_y = test.labels().expect("label column requested");
    let predicted = knn_predict(train.values(), train_y, test.values(), a.k, a.metric)?;
    let error = error_rate(&predicted, test_y)?;
    m.result(json!({ "error_rate": error, "train_rows": train.rows(), "test_rows": test.rows() }));
    Ok(m)
}

fn cmd_stabilize(a: StabilizeArgs) -> CliResult<Manifest> {
    let config = StabilityConfig {
        method: a.method,
        t_list: a.t_list.clone(),
        bootstraps: a.bootstraps,
        seed: a.seed,
        beta: a.beta,
        rbm: TrainConfig {
            hidden_count: a.hidden,
            alpha: if a.method == Method::RbmLasso { 0.0 } else { a.alpha },
            eta: a.eta,
            batch_size: a.batch,
            epochs: a.epochs,
            ..TrainConfig::default()
        },
        threshold: a.threshold,
        ..StabilityConfig::default()
    };
    let mut m = Manifest::new("stabilize").config(json!({ "input": &a.input, "stability": &config }));
    m.seed = Some(a.seed);
    let train = a.input.load(&mut m)?;
    let test = match &a.test_data {
        Some(path) => {
            let fmt = FormatArgs {
                labels: a.test_labels.clone(),
                ..a.input.fmt.clone()
            };
            Some(fmt.load(path, &mut m)?)
        }
        None => None,
    };
    let outcome = run_stability_protocol(&train, test.as_ref(), &config)?;
    let report = json!({
        "method": config.method,
        "reports": &outcome.reports,
        "test_metrics": &outcome.test_metrics,
    });
    std::fs::write(&a.out, serde_json::to_string_pretty(&report).expect("report serializes"))?;
    m.output(&a.out)?;

    if let Some(path) = &a.model_out {
        let model = match outcome.final_model.averaged_lasso() {
            Some(lasso) => Model::from_lasso(lasso, a.seed),
            None => {
                let seed = derive_seed(a.seed, &[domain::FULL_FIT]);
                let p = fit_predictor(&train, &config, seed)?;
                let rbm = p.rbm.expect("two-stage methods have a stage-1 model");
                Model::pipeline(rbm, p.lasso, TrainConfig { seed, ..config.rbm.clone() })
            }
        };
        save_model(&model, path)?;
        m.output(path)?;
    }
    let summary: Vec<_> = outcome
        .reports
        .iter()
        .map(|r| json!({ "t": r.t, "consistency": r.consistency, "jaccard": r.jaccard }))
        .collect();
    m.result(json!({ "stability": summary, "test_metrics": outcome.test_metrics }));
    Ok(m)
}

fn cmd_evaluate(a: EvaluateArgs) -> CliResult<Manifest> {
    let mut m = Manifest::new("evaluate").config(json!({ "test_data": &a.test_data, "format": &a.fmt, "threshold": a.threshold }));
    m.input(&a.model)?;
    let model: Model = load_model(&a.model)?;
    m.seed = Some(model.master_seed);
    if !matches!(model.kind, ModelKind::Lasso | ModelKind::Pipeline) {
        return Err(nrbm::Error::Format(format!("a {} model is not a classifier", model.kind)).into());
    }
    let predictor = ReplicatePredictor {
        rbm: model.rbm,
        lasso: model.lasso.expect("validated on load"),
    };
    let data = a.fmt.load(&a.test_data, &mut m)?;
    let labels = data.binary_labels()?;
    let scores = predictor.predict_proba(data.values())?.to_vec();
    let metrics = classification_metrics(&scores, labels, a.threshold)?;
    if let Some(path) = &a.out {
        std::fs::write(path, serde_json::to_string_pretty(&metrics).expect("metrics serialize"))?;
        m.output(path)?;
    }
    m.result(&metrics);
    Ok(m)
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("NRBM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::usage(format!("NRBM_THREADS must be a non-negative integer, got {raw:?}")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<Manifest> {
    configure_threads()?;
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Transform(a) => cmd_transform(a, false),
        Command::Reconstruct(a) => cmd_transform(a, true),
        Command::DeadUnits(a) => cmd_dead_units(a),
        Command::ExportFilters(a) => cmd_export(a),
        Command::Histogram(a) => cmd_histogram(a),
        Command::KnnEval(a) => cmd_knn(a),
        Command::Stabilize(a) => cmd_stabilize(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(manifest) => {
            let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
            // A closed pipe (e.g. `| head`) is not an error of the run.
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_ranges_are_inclusive_and_exact() {
        assert_eq!(parse_grid("0.01:0.06:0.01").unwrap(), vec![0.01, 0.02, 0.03, 0.04, 0.05, 0.06]);
        assert_eq!(parse_grid("-1,0,2.5").unwrap(), vec![-1.0, 0.0, 2.5]);
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("a,b").is_err());
    }
}
