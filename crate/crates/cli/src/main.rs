//! `cgnn`: certify, project, run and train contractive graph networks.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use contractive_gnn::layers::{ModelKind, DEFAULT_LEAKY_SLOPE};
use contractive_gnn::parallel::{execution_for_threads, with_threads};
use contractive_gnn::projection::project_model;
use contractive_gnn::train::{default_model, evaluate, history_to_json_lines, synth_sbm, train_projected, TrainConfig};
use contractive_gnn::verify::{
    certify_model, check_kronecker_norm_identity, check_vec_identity, empirical_contraction_with, IdentityReport,
};
use contractive_gnn::{Activation, AlphaSplit, ContractionCertificate, Graph, Matrix, Model};
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Input { path: PathBuf, source: contractive_gnn::Error },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] contractive_gnn::Error),
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "cgnn", version, about = "Contractive GCN / GraphConv toolkit")]
struct Cli {
    /// Worker threads for perturbation trials.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Analytic contraction certificate for every layer.
    Certify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Clip singular values so every layer certifies, then re-certify.
    Project {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run the model on a feature matrix.
    Forward {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded Gaussian perturbation trials.
    Perturb {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    /// Check ‖A⊗B‖ = ‖A‖‖B‖ on random matrices.
    KronCheck(IdentityArgs),
    /// Check vec(A X Bᵀ) = (B⊗A) vec(X) on random triples.
    VecCheck(IdentityArgs),
    /// Projected gradient descent on a synthetic task.
    Train(TrainArgs),
}

#[derive(clap::Args, Debug)]
struct IdentityArgs {
    #[arg(long, default_value_t = 4)]
    dim: usize,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Task {
    Sbm,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Arch {
    Gcn,
    Graphconv,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ActivationArg {
    Relu,
    LeakyRelu,
    Tanh,
    Identity,
}

#[derive(clap::Args, Debug)]
struct TrainArgs {
    #[arg(long, value_enum, default_value = "sbm")]
    task: Task,
    #[arg(long, default_value_t = 40)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    blocks: usize,
    #[arg(long, default_value_t = 0.5)]
    p_in: f64,
    #[arg(long, default_value_t = 0.05)]
    p_out: f64,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    /// 0 trains without projection.
    #[arg(long, default_value_t = 1)]
    project_every: usize,
    #[arg(long, value_enum, default_value = "graphconv")]
    arch: Arch,
    #[arg(long, default_value_t = 8)]
    hidden: usize,
    #[arg(long, value_enum, default_value = "relu")]
    activation: ActivationArg,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trained model JSON.
    #[arg(long)]
    out: PathBuf,
    /// JSON-lines history; defaults to the model path with a `.history.jsonl` suffix.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Serialize)]
struct TrainSummary {
    train_acc: f64,
    test_acc: f64,
    min_margin: f64,
    epochs: usize,
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|source| CliError::Io { path: path.into(), source })
}

fn load_model(path: &Path) -> CliResult<Model> {
    Model::from_json(&read(path)?).map_err(|source| CliError::Input { path: path.into(), source })
}

fn load_graph(path: &Path) -> CliResult<Graph> {
    Graph::from_json(&read(path)?).map_err(|source| CliError::Input { path: path.into(), source })
}

fn load_matrix(path: &Path) -> CliResult<Matrix> {
    Matrix::from_json(&read(path)?).map_err(|source| CliError::Input { path: path.into(), source })
}

fn split(alpha: f64) -> CliResult<AlphaSplit> {
    let s = AlphaSplit::new(alpha).map_err(|_| CliError::Invalid(format!("--alpha must lie in [0, 1], got {alpha}")))?;
    if s.is_degenerate() {
        eprintln!("warning: --alpha {alpha} zeroes one GraphConv branch");
    }
    Ok(s)
}

fn check_features(model: &Model, graph: &Graph, x: &Matrix) -> CliResult<()> {
    if x.rows() != graph.num_nodes() || x.cols() != model.input_dim() {
        return Err(CliError::Invalid(format!(
            "--features: expected {}x{} matrix, got {}x{}",
            graph.num_nodes(),
            model.input_dim(),
            x.rows(),
            x.cols()
        )));
    }
    Ok(())
}

fn fmt_norms(norms: &[f64]) -> String {
    norms.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(",")
}

fn print_certificate(cert: &ContractionCertificate) {
    println!("architecture: {}", cert.architecture.as_str());
    println!("{:>5}  {:>22}  {:>10}  {:>10}  {:>6}  {:>12}  ok", "layer", "weight norms", "adj norm", "lhs", "bound", "margin");
    for l in &cert.layers {
        println!(
            "{:>5}  {:>22}  {:>10.6}  {:>10.6}  {:>6}  {:>12.4e}  {}",
            l.layer,
            fmt_norms(&l.operator_norms),
            l.adjacency_norm,
            l.lhs,
            l.bound,
            l.margin,
            if l.satisfied { "yes" } else { "no" }
        );
    }
    println!("satisfied: {}", cert.satisfied);
}

fn status(ok: bool) -> u8 {
    if ok {
        0
    } else {
        2
    }
}

fn certify(model: &Path, graph: &Path, json: bool) -> CliResult<u8> {
    let (m, g) = (load_model(model)?, load_graph(graph)?);
    let cert = certify_model(&m, &g)?;
    if json {
        println!("{}", cert.to_json());
    } else {
        print_certificate(&cert);
    }
    Ok(status(cert.satisfied))
}

fn project(model: &Path, graph: &Path, alpha: f64, out: &Path, json: bool) -> CliResult<u8> {
    let s = split(alpha)?;
    let (m, g) = (load_model(model)?, load_graph(graph)?);
    let p = project_model(&m, &g, s)?;
    write(out, &(p.to_json() + "\n"))?;
    let cert = certify_model(&p, &g)?;
    if json {
        println!("{}", cert.to_json());
    } else {
        print_certificate(&cert);
    }
    eprintln!("wrote {}", out.display());
    Ok(status(cert.satisfied))
}

fn forward(model: &Path, graph: &Path, features: &Path, out: &Path) -> CliResult<u8> {
    let (m, g, x) = (load_model(model)?, load_graph(graph)?, load_matrix(features)?);
    check_features(&m, &g, &x)?;
    let y = m.forward(&m.adjacency(&g), &x)?;
    write(out, &(y.to_json() + "\n"))?;
    eprintln!("wrote {}x{} output to {}", y.rows(), y.cols(), out.display());
    Ok(0)
}

fn perturb(threads: usize, model: &Path, graph: &Path, trials: usize, eps: f64, seed: u64, json: bool) -> CliResult<u8> {
    if trials == 0 {
        return Err(CliError::Invalid("--trials must be >= 1".into()));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(CliError::Invalid(format!("--eps must be > 0, got {eps}")));
    }
    let (m, g) = (load_model(model)?, load_graph(graph)?);
    let exec = execution_for_threads(threads);
    let rep = with_threads(threads, || empirical_contraction_with(&m, &g, trials, eps, seed, exec))?;
    if json {
        println!("{}", rep.to_json());
    } else {
        println!("trials: {}  eps: {}  seed: {}", rep.trials, rep.eps_scale, rep.seed);
        println!("{:>5}  {:>14}", "layer", "max ratio");
        for (i, r) in rep.layer_max_ratios.iter().enumerate() {
            println!("{i:>5}  {r:>14.10}");
        }
        println!("end-to-end max ratio: {:.10}", rep.end_to_end_max_ratio);
        println!("contracts: {}", rep.contracts());
    }
    Ok(status(rep.contracts()))
}

fn identity(args: &IdentityArgs, check: fn(usize, usize, u64) -> contractive_gnn::Result<IdentityReport>) -> CliResult<u8> {
    if args.dim == 0 || args.dim * args.dim > 4096 {
        return Err(CliError::Invalid(format!("--dim must lie in 1..=64, got {}", args.dim)));
    }
    if args.trials == 0 {
        return Err(CliError::Invalid("--trials must be >= 1".into()));
    }
    let rep = check(args.dim, args.trials, args.seed)?;
    if args.json {
        println!("{}", serde_json::to_string(&rep).expect("report serialization is infallible"));
    } else {
        println!(
            "{}: trials {}  max dim {}  seed {}  max deviation {:.3e}  tolerance {:.0e}  {}",
            rep.identity,
            rep.trials,
            rep.max_dim,
            rep.seed,
            rep.max_deviation,
            rep.tolerance,
            if rep.passed { "PASS" } else { "FAIL" }
        );
    }
    Ok(status(rep.passed))
}

fn history_path(out: &Path) -> PathBuf {
    let mut name = out.file_stem().unwrap_or_default().to_os_string();
    name.push(".history.jsonl");
    out.with_file_name(name)
}

fn train(a: &TrainArgs) -> CliResult<u8> {
    let Task::Sbm = a.task;
    let alpha = split(a.alpha)?;
    if a.epochs == 0 {
        return Err(CliError::Invalid("--epochs must be >= 1".into()));
    }
    if !(a.lr.is_finite() && a.lr >= 0.0) {
        return Err(CliError::Invalid(format!("--lr must be >= 0, got {}", a.lr)));
    }
    if a.hidden == 0 {
        return Err(CliError::Invalid("--hidden must be >= 1".into()));
    }
    let task = synth_sbm(a.n, a.blocks, a.p_in, a.p_out, a.seed)
        .map_err(|e| CliError::Invalid(format!("--n/--blocks/--p-in/--p-out: {e}")))?;
    let kind = match a.arch {
        Arch::Gcn => ModelKind::Gcn,
        Arch::Graphconv => ModelKind::Graphconv,
    };
    let act = match a.activation {
        ActivationArg::Relu => Activation::Relu,
        ActivationArg::LeakyRelu => Activation::LeakyRelu(DEFAULT_LEAKY_SLOPE),
        ActivationArg::Tanh => Activation::Tanh,
        ActivationArg::Identity => Activation::Identity,
    };
    let init = default_model(kind, &task, a.hidden, act, a.seed)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        lr: a.lr,
        project_every: a.project_every,
        alpha,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let (model, history) = train_projected(&init, &task, &cfg)?;
    let (train_acc, test_acc) = evaluate(&model, &task)?;
    let min_margin = history.iter().map(|h| h.min_margin).fold(f64::INFINITY, f64::min);

    write(&a.out, &(model.to_json() + "\n"))?;
    let hist = a.history.clone().unwrap_or_else(|| history_path(&a.out));
    write(&hist, &history_to_json_lines(&history))?;
    let summary = TrainSummary {
        train_acc,
        test_acc,
        min_margin,
        epochs: a.epochs,
    };
    if a.json {
        println!("{}", serde_json::to_string(&summary).expect("summary serialization is infallible"));
    } else {
        println!("train accuracy: {train_acc:.4}");
        println!("test accuracy:  {test_acc:.4}");
        println!("min certificate margin over epochs: {min_margin:.4e}");
    }
    eprintln!("wrote {} and {}", a.out.display(), hist.display());
    Ok(0)
}

fn run(cli: Cli) -> CliResult<u8> {
    let threads = cli.threads;
    if threads == 0 {
        return Err(CliError::Invalid("--threads must be >= 1".into()));
    }
    match cli.command {
        Command::Certify { model, graph, json } => certify(&model, &graph, json),
        Command::Project { model, graph, alpha, out, json } => project(&model, &graph, alpha, &out, json),
        Command::Forward { model, graph, features, out } => forward(&model, &graph, &features, &out),
        Command::Perturb { model, graph, trials, eps, seed, json } => {
            perturb(threads, &model, &graph, trials, eps, seed, json)
        }
        Command::KronCheck(args) => identity(&args, check_kronecker_norm_identity),
        Command::VecCheck(args) => identity(&args, check_vec_identity),
        Command::Train(args) => train(&args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
