use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pgvar::estimation::{grid_search, FitConfig};
use pgvar::experiment::{
    run_experiment_to_dir, structure_for_family, ExperimentConfig, ResolvedGraphs,
};
use pgvar::graph::{
    build_knn_graph, load_points_csv, normalize_shift, Graph, KnnWeighting,
};
use pgvar::metrics::evaluate;
use pgvar::models::{load_model, rollout, save_model, PredictionMode};
use pgvar::signal::{
    load_sequence, load_sequence_with_offset, preprocess, save_sequence_from, SignalSequence,
};
use pgvar::synth::{gen_moving_mesh, gen_stable_coeffs, simulate, FeatureTopology, MeshOptions, SynthSpec};

/// Forecasting multi-dimensional time processes on graphs.
#[derive(Parser)]
#[command(name = "pgvar", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Generate synthetic data from a spec file.
    Synth(SynthArgs),
    /// Grid-search fit of one model family; writes a model JSON.
    Fit(FitArgs),
    /// One-step predictions from a fitted model.
    Predict(PredictArgs),
    /// Compare a predictions file against ground truth.
    Evaluate(EvaluateArgs),
    /// Run the full multi-family comparison protocol from a config file.
    Experiment(ExperimentArgs),
}

/// Spec file for `synth`: either a stable graph process or a moving mesh.
#[derive(serde::Deserialize)]
#[serde(rename_all = "snake_case")]
enum SynthFileSpec {
    Process(SynthSpec),
    Mesh {
        n_nodes: usize,
        n_steps: usize,
        seed: u64,
        #[serde(default)]
        options: Option<MeshOptions>,
    },
}

#[derive(Args)]
struct SynthArgs {
    /// JSON spec: {"process": {...}} or {"mesh": {...}}.
    #[arg(long)]
    spec: PathBuf,
    /// Output sequence CSV.
    #[arg(long)]
    out: PathBuf,
    /// Output first-frame point-cloud CSV (mesh specs only).
    #[arg(long)]
    points: Option<PathBuf>,
    /// Save the generating model as JSON (process specs only).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Override the seed in the spec file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Args)]
struct FitArgs {
    /// Input sequence CSV.
    #[arg(long)]
    data: PathBuf,
    /// Feature count per node in the data file.
    #[arg(long)]
    features: usize,
    /// Model family.
    #[arg(long)]
    family: String,
    /// Point-cloud CSV; a kNN graph is built from it.
    #[arg(long)]
    points: Option<PathBuf>,
    /// Edge-list CSV with a ready-made node graph.
    #[arg(long)]
    edges: Option<PathBuf>,
    /// Neighbors for the kNN graph.
    #[arg(long, default_value_t = 10)]
    knn: usize,
    /// Binary kNN weights instead of gaussian.
    #[arg(long)]
    binary: bool,
    /// Feature graph topology.
    #[arg(long, default_value = "complete")]
    feature_topology: String,
    /// Product graph kind for the product family.
    #[arg(long, default_value = "cartesian")]
    product: String,
    /// Comma-separated lag orders, e.g. 1,2,3.
    #[arg(long, value_delimiter = ',')]
    p_grid: Vec<usize>,
    /// Comma-separated node-shift orders.
    #[arg(long, value_delimiter = ',')]
    k_grid: Vec<usize>,
    /// Comma-separated feature-shift orders (bivariate family).
    #[arg(long, value_delimiter = ',')]
    l_grid: Vec<usize>,
    #[arg(long, default_value_t = 0.9)]
    in_fraction: f64,
    #[arg(long, default_value_t = 0.7)]
    train_fraction: f64,
    /// Ridge strength; omit for the automatic default.
    #[arg(long)]
    ridge: Option<f64>,
    /// Normalize shift operators to unit spectral norm.
    #[arg(long, value_enum, default_value = "on")]
    normalize: OnOff,
    /// Output model JSON.
    #[arg(long)]
    out: PathBuf,
    /// Also write the full fit report JSON here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Space {
    Original,
    Preprocessed,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Teacher,
    Recursive,
}

#[derive(Args)]
struct PredictArgs {
    /// Fitted model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Input sequence CSV (original units).
    #[arg(long)]
    data: PathBuf,
    /// First step to predict (default: the model's lag order).
    #[arg(long)]
    from: Option<usize>,
    /// One past the last step to predict (default: sequence end).
    #[arg(long)]
    to: Option<usize>,
    #[arg(long, value_enum, default_value = "teacher")]
    mode: Mode,
    /// Units of the emitted predictions.
    #[arg(long, value_enum, default_value = "original")]
    space: Space,
    /// Output predictions CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predictions CSV from `predict`.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth sequence CSV.
    #[arg(long)]
    truth: PathBuf,
    /// Feature count per node.
    #[arg(long)]
    features: usize,
    /// Output evaluation JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config JSON; schema documented in the README.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for reports and the comparison CSV.
    #[arg(long)]
    out_dir: PathBuf,
    /// Override the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Synth(args) => cmd_synth(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Experiment(args) => cmd_experiment(args),
    }
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.spec)
        .with_context(|| format!("reading {}", args.spec.display()))?;
    let spec: SynthFileSpec = serde_json::from_str(&text).context("parsing synth spec")?;
    match spec {
        SynthFileSpec::Process(mut spec) => {
            if let Some(seed) = args.seed {
                spec.seed = seed;
            }
            let model = gen_stable_coeffs(&spec)?;
            let seq = simulate(&model, spec.n_steps, spec.noise_sigma, spec.burn_in, spec.seed)?;
            pgvar::signal::save_sequence(&seq, &args.out)?;
            if let Some(model_path) = &args.model {
                save_model(&model, None, model_path)?;
            }
            eprintln!(
                "wrote {} steps of a {}-node, {}-feature process to {}",
                seq.n_steps(),
                seq.n_nodes(),
                seq.n_features(),
                args.out.display()
            );
        }
        SynthFileSpec::Mesh {
            n_nodes,
            n_steps,
            seed,
            options,
        } => {
            let seed = args.seed.unwrap_or(seed);
            let opts = options.unwrap_or_default();
            let (points, seq) = gen_moving_mesh(n_nodes, n_steps, seed, &opts)?;
            pgvar::signal::save_sequence(&seq, &args.out)?;
            if let Some(points_path) = &args.points {
                pgvar::graph::save_points_csv(&points, points_path)?;
            }
            eprintln!(
                "wrote a {n_steps}-step moving mesh of {n_nodes} points to {}",
                args.out.display()
            );
        }
    }
    Ok(())
}

fn resolve_fit_graphs(args: &FitArgs, n_features: usize) -> Result<ResolvedGraphs> {
    let node_graph = match (&args.edges, &args.points) {
        (Some(edges), _) => Graph::load_edges_csv(edges, None)?,
        (None, Some(points)) => {
            let pts = load_points_csv(points)?;
            let weighting = if args.binary {
                KnnWeighting::Binary
            } else {
                KnnWeighting::Gaussian
            };
            build_knn_graph(&pts, args.knn, weighting)?
        }
        (None, None) => bail!("fit needs --points or --edges for the node graph"),
    };
    let feature_graph = FeatureTopology::parse(&args.feature_topology)?.build(n_features)?;
    let (node_graph, feature_graph) = match args.normalize {
        OnOff::On => {
            let ng = normalize_shift(&node_graph, 1e-10, 5000)?;
            let fg = if feature_graph.n_edges() > 0 {
                normalize_shift(&feature_graph, 1e-10, 5000)?
            } else {
                feature_graph
            };
            (ng, fg)
        }
        OnOff::Off => (node_graph, feature_graph),
    };
    Ok(ResolvedGraphs {
        node_graph,
        feature_graph,
    })
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let raw = load_sequence(&args.data, args.features)
        .with_context(|| format!("loading {}", args.data.display()))?;
    let (seq, transform) = preprocess(&raw)?;
    let graphs = resolve_fit_graphs(&args, seq.n_features())?;
    let structure = structure_for_family(&args.family, &graphs, Some(args.product.as_str()))?;
    let config = FitConfig {
        p_grid: args.p_grid.clone(),
        k_grid: if args.k_grid.is_empty() { vec![0] } else { args.k_grid.clone() },
        l_grid: if args.l_grid.is_empty() { vec![0] } else { args.l_grid.clone() },
        ridge_lambda: args.ridge,
        in_fraction: args.in_fraction,
        train_fraction: args.train_fraction,
    };
    let outcome = grid_search(&seq, &structure, &config)?;
    for point in &outcome.report.grid {
        println!("{}", serde_json::to_string(point)?);
    }
    save_model(&outcome.model, Some(&transform), &args.out)?;
    if let Some(report_path) = &args.report {
        let json = serde_json::to_string_pretty(&outcome.report)?;
        std::fs::write(report_path, json + "\n")?;
    }
    eprintln!(
        "selected P={} K={:?} L={:?}; validation rNMSE {:.6}, test rNMSE {:.6}; model written to {}",
        outcome.report.selected_p,
        outcome.report.selected_k,
        outcome.report.selected_l,
        outcome.report.val_rnmse,
        outcome.report.test_rnmse,
        args.out.display()
    );
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let (model, transform) = load_model(&args.model)?;
    let width = model.width();
    let raw = load_sequence(&args.data, 1)?;
    if raw.width() != width {
        bail!(
            "data width {} does not match model width {width}",
            raw.width()
        );
    }
    // Re-group with the model's feature count.
    let (n_nodes, n_features) = (width / feature_count(&model), feature_count(&model));
    let raw = SignalSequence::from_rows(n_nodes, n_features, raw.rows())?;

    let seq = match &transform {
        Some(tr) => tr.apply(&raw)?,
        None => raw.clone(),
    };
    let p = model.lag_order();
    let from = args.from.unwrap_or(p);
    let to = args.to.unwrap_or(seq.n_steps());
    let mode = match args.mode {
        Mode::Teacher => PredictionMode::TeacherForced,
        Mode::Recursive => PredictionMode::Recursive,
    };
    let preds = rollout(&model, &seq, from, to, mode)?;
    let rows = match (args.space, &transform) {
        (Space::Original, Some(tr)) => preds.iter().map(|r| tr.invert_row(r)).collect(),
        _ => preds,
    };
    let out_seq = SignalSequence::from_rows(n_nodes, n_features, rows)?;
    save_sequence_from(&out_seq, &args.out, from)?;
    eprintln!(
        "wrote predictions for steps {from}..{to} to {}",
        args.out.display()
    );
    Ok(())
}

fn feature_count(model: &pgvar::models::ModelParams) -> usize {
    use pgvar::models::ModelParams;
    match model {
        ModelParams::Var { .. } => 1,
        ModelParams::Gvar { n_features, .. } => *n_features,
        ModelParams::Pgvar { op, .. } => op.n_features(),
        ModelParams::Gpgvar { feature_graph, .. } => feature_graph.n_nodes(),
    }
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let (pred, t0) = load_sequence_with_offset(&args.pred, args.features)?;
    let truth = load_sequence(&args.truth, args.features)?;
    let t1 = t0 + pred.n_steps();
    if t1 > truth.n_steps() {
        bail!(
            "predictions cover steps {t0}..{t1} but truth has only {} steps",
            truth.n_steps()
        );
    }
    let pred_rows = pred.rows();
    let truth_rows: Vec<Vec<f64>> = (t0..t1).map(|t| truth.step(t).to_vec()).collect();
    let report = evaluate(&pred_rows, &truth_rows, args.features)?;
    let json = serde_json::to_string_pretty(&report)?;
    std::fs::write(&args.out, json + "\n")?;
    println!("rnmse {:.9} over {} steps", report.rnmse, report.n_steps);
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut config: ExperimentConfig = serde_json::from_str(&text).context("parsing config")?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let report = run_experiment_to_dir(&config, &args.out_dir)?;
    for cell in &report.cells {
        println!(
            "family {} in-fraction {:.2}: test rNMSE {:.9}",
            cell.family, cell.in_fraction, cell.fit.test_rnmse
        );
    }
    eprintln!("reports written to {}", args.out_dir.display());
    Ok(())
}
