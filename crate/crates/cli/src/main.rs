use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

use cutlearn::harness::{evaluate, fit_method, run_experiment, write_results, ExperimentConfig, Method};
use cutlearn::io::{
    cuts_dump, fit_to_toml, model_to_toml, read_fit, read_model, read_samples, samples_to_string,
};
use cutlearn::model::pairs;
use cutlearn::{
    assign_parameters, empirical_means, exact_log_partition, exact_mean_parameters, gibbs_sample, make_graph,
    GraphSpec, LambdaRule, SamplerConfig, SolverConfig,
};

#[derive(Parser)]
#[command(name = "cutlearn", version, about = "Learn sparse Ising models with cutting planes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a graph and parameters and write a model file.
    Gen(GenArgs),
    /// Gibbs-sample a model and write a samples file.
    Sample(SampleArgs),
    /// Fit a model to a samples file.
    Fit(FitArgs),
    /// Score a fit against a true model and/or held-out samples.
    Eval(EvalArgs),
    /// Exact log-partition function or marginals by enumeration.
    Oracle(OracleArgs),
    /// Run a batch experiment described by a config file.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphKind {
    Grid4,
    RandomSparse,
    DenseSubgraphs,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    graph: GraphKind,
    /// Node count (random-sparse, dense-subgraphs).
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    /// Total edge count (random-sparse, dense-subgraphs).
    #[arg(long)]
    edges: Option<usize>,
    #[arg(long)]
    max_degree: Option<usize>,
    #[arg(long, default_value_t = 8)]
    block_size: usize,
    #[arg(long, default_value_t = 1)]
    blocks: usize,
    /// Couplings are drawn from U[-xi, xi].
    #[arg(long)]
    xi: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(short, long)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    burn_in: usize,
    #[arg(long, default_value_t = 5)]
    thin: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Samples file.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "logdet-cut")]
    method: Method,
    /// `auto` (2 sqrt(log p / n)) or a number.
    #[arg(long, default_value = "auto")]
    lambda: LambdaRule,
    #[arg(long)]
    max_rounds: Option<usize>,
    /// Recorded in the fit file; fitting itself is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Also write one line per added cut.
    #[arg(long)]
    cuts_out: Option<PathBuf>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("against").required(true).multiple(true).args(["truth", "test"])))]
struct EvalArgs {
    #[arg(long)]
    fit: PathBuf,
    /// True model file.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Held-out samples file.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("query").required(true).multiple(true).args(["logz", "marginals"])))]
struct OracleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    logz: bool,
    #[arg(long)]
    marginals: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    write_fits: bool,
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => Ok(std::io::stdout().write_all(text.as_bytes())?),
    }
}

fn load<T>(path: &Path, read: impl FnOnce(&Path) -> cutlearn::Result<T>) -> anyhow::Result<T> {
    read(path).with_context(|| format!("reading {}", path.display()))
}

fn gen(args: GenArgs) -> anyhow::Result<()> {
    let need = |v: Option<usize>, name: &str| v.with_context(|| format!("--{name} is required for this graph"));
    let spec = match args.graph {
        GraphKind::Grid4 => GraphSpec::Grid4 { rows: need(args.rows, "rows")?, cols: need(args.cols, "cols")? },
        GraphKind::RandomSparse => GraphSpec::RandomSparse {
            p: need(args.p, "p")?,
            n_edges: need(args.edges, "edges")?,
            max_degree: args.max_degree,
        },
        GraphKind::DenseSubgraphs => GraphSpec::DenseSubgraphs {
            p: need(args.p, "p")?,
            n_edges: need(args.edges, "edges")?,
            block_size: args.block_size,
            n_blocks: args.blocks,
        },
    };
    let edges = make_graph(&spec, args.seed)?;
    let model = assign_parameters(spec.p(), &edges, args.xi, args.seed)?;
    emit(args.out.as_deref(), &model_to_toml(&model, Some(args.seed)))
}

fn sample(args: SampleArgs) -> anyhow::Result<()> {
    let (model, _) = load(&args.model, read_model)?;
    let cfg = SamplerConfig { n: args.n, burn_in: args.burn_in, thin: args.thin, seed: args.seed };
    emit(args.out.as_deref(), &samples_to_string(&gibbs_sample(&model, &cfg)?))
}

fn fit(args: FitArgs) -> anyhow::Result<()> {
    let data = load(&args.data, read_samples)?;
    let mut cfg = SolverConfig::with_lambda(args.lambda.resolve(data.p(), data.n()));
    if let Some(r) = args.max_rounds {
        cfg.max_outer_rounds = r;
    }
    let mut rec = fit_method(args.method, &data, &cfg)?;
    rec.seed = args.seed;
    if let Some(path) = &args.cuts_out {
        emit(Some(path), &cuts_dump(&rec.cuts, &rec.cut_violations))?;
    }
    emit(args.out.as_deref(), &fit_to_toml(&rec)?)
}

fn eval(args: EvalArgs) -> anyhow::Result<()> {
    let rec = load(&args.fit, read_fit)?;
    let truth = args.truth.as_deref().map(|p| load(p, read_model)).transpose()?.map(|(m, _)| m);
    let test = match &args.test {
        Some(path) => Some(empirical_means(&load(path, read_samples)?)?),
        None => None,
    };
    for p in truth.iter().map(|m| m.p()).chain(test.iter().map(|t| t.p())) {
        if p != rec.model.p() {
            bail!(cutlearn::Error::InvalidData(format!("fit has p = {} but the reference has p = {p}", rec.model.p())));
        }
    }
    let m = evaluate(&rec, truth.as_ref(), test.as_ref(), rec.solver.edge_tol)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "method",
        "lambda",
        "edge_count",
        "precision",
        "recall",
        "l2_param_error",
        "test_loglik",
        "test_loglik_no_cuts",
        "cuts_added",
        "wall_time",
    ])?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    // an undefined ratio against a given truth is NaN; an absent truth leaves it blank
    let ratio = |x: Option<f64>| if truth.is_some() && x.is_none() { "NaN".to_string() } else { opt(x) };
    w.write_record([
        rec.method.to_string(),
        rec.lambda.to_string(),
        m.edge_count.to_string(),
        ratio(m.precision),
        ratio(m.recall),
        opt(m.l2_param_error),
        opt(m.test_surrogate_loglik),
        opt(m.test_surrogate_loglik_no_cuts),
        m.cuts_added.to_string(),
        format!("{:.6}", m.wall_time),
    ])?;
    let bytes = w.into_inner().context("flushing csv")?;
    emit(args.out.as_deref(), std::str::from_utf8(&bytes)?)
}

fn oracle(args: OracleArgs) -> anyhow::Result<()> {
    let (model, _) = load(&args.model, read_model)?;
    let mut out = String::new();
    if args.logz {
        out.push_str(&format!("logz={}\n", exact_log_partition(&model)?));
    }
    if args.marginals {
        let eta = exact_mean_parameters(&model)?;
        for v in 0..model.p() {
            out.push_str(&format!("eta_{v}={}\n", eta.node(v)));
        }
        for (u, v) in pairs(model.p()) {
            out.push_str(&format!("eta_{u}_{v}={}\n", eta.pair(u, v)));
        }
    }
    emit(None, &out)
}

fn experiment(args: ExperimentArgs) -> anyhow::Result<()> {
    let mut cfg = load(&args.config, ExperimentConfig::load)?;
    if let Some(dir) = args.out {
        cfg.output_dir = dir;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    cfg.write_fits |= args.write_fits;
    cfg.validate()?;
    let out = run_experiment(&cfg)?;
    write_results(&out, &cfg, &cfg.output_dir)?;
    let failed = out.rows.iter().filter(|r| !r.is_ok()).count();
    eprintln!("{} rows ({failed} failed) written to {}", out.rows.len(), cfg.output_dir.display());
    Ok(())
}

/// Bad arguments and unreadable or malformed inputs exit with 1; everything
/// the numerics or the model itself rejects exits with 2.
fn exit_code(err: &anyhow::Error) -> u8 {
    use cutlearn::Error as E;
    match err.downcast_ref::<E>() {
        Some(E::Config(_) | E::Parse(_) | E::Io(_) | E::Csv(_)) | None => 1,
        Some(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Sample(a) => sample(a),
        Command::Fit(a) => fit(a),
        Command::Eval(a) => eval(a),
        Command::Oracle(a) => oracle(a),
        Command::Experiment(a) => experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
