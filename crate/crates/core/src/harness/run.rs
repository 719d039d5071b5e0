use std::path::Path;

use rayon::prelude::*;

use super::{evaluate, fit_method, l2_param_error, ExperimentConfig, FitRecord, Method, Protocol};
use crate::error::{Error, Result};
use crate::io::write_fit;
use crate::model::{edge_set, IsingModel, MeanVector};
use crate::oracle::exact_mean_parameters;
use crate::solver::{fit, fit_no_cuts, surrogate_loglik, SolverConfig};
use crate::synthetic::{assign_parameters, empirical_means, gibbs_sample, make_graph, SamplerConfig, RNG_NAME};

/// Column order of `results.csv`; `wall_time` is last so it can be stripped
/// when comparing runs.
pub const CSV_HEADER: [&str; 25] = [
    "protocol",
    "graph",
    "method",
    "p",
    "n",
    "xi",
    "replicate",
    "graph_seed",
    "seed",
    "lambda",
    "status",
    "true_edges",
    "edge_count",
    "precision",
    "recall",
    "l2_param_error",
    "ref_param_error",
    "train_loglik",
    "test_loglik",
    "test_loglik_no_cuts",
    "cuts_added",
    "rounds",
    "flags",
    "error",
    "wall_time",
];

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// `base_seed XOR hash(indices)`, with a splitmix64 chain as the hash.
pub fn derive_seed(base_seed: u64, indices: &[u64]) -> u64 {
    base_seed ^ indices.iter().fold(0x5eed, |h, &i| splitmix64(h ^ splitmix64(i)))
}

// stream tags keep the graph, training, test and reference draws apart
const GRAPH: u64 = 1;
const PARAMS: u64 = 2;
const TRAIN: u64 = 3;
const TEST: u64 = 4;

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub protocol: Protocol,
    pub graph: &'static str,
    pub method: Method,
    pub p: usize,
    pub n: usize,
    pub xi: f64,
    pub replicate: usize,
    pub graph_seed: u64,
    pub seed: u64,
    pub lambda: f64,
    /// `Err` carries the message of a failed cell.
    pub status: std::result::Result<(), String>,
    pub true_edges: usize,
    pub edge_count: Option<usize>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub l2_param_error: Option<f64>,
    /// Distance to the population fit (rate protocol).
    pub ref_param_error: Option<f64>,
    pub train_loglik: Option<f64>,
    pub test_loglik: Option<f64>,
    pub test_loglik_no_cuts: Option<f64>,
    pub cuts_added: Option<usize>,
    pub rounds: Option<usize>,
    pub flags: Vec<&'static str>,
    pub wall_time: f64,
}

impl ResultRow {
    pub fn is_ok(&self) -> bool {
        self.status.is_ok()
    }

    pub fn record(&self) -> Vec<String> {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let count = |x: Option<usize>| x.map(|v| v.to_string()).unwrap_or_default();
        // an undefined ratio is written as NaN and named in `flags`
        let ratio = |x: Option<f64>| match (x, self.is_ok() && self.edge_count.is_some()) {
            (Some(v), _) => v.to_string(),
            (None, true) => "NaN".to_string(),
            (None, false) => String::new(),
        };
        vec![
            self.protocol.as_str().to_string(),
            self.graph.to_string(),
            self.method.to_string(),
            self.p.to_string(),
            self.n.to_string(),
            self.xi.to_string(),
            self.replicate.to_string(),
            self.graph_seed.to_string(),
            self.seed.to_string(),
            self.lambda.to_string(),
            if self.is_ok() { "ok" } else { "error" }.to_string(),
            self.true_edges.to_string(),
            count(self.edge_count),
            ratio(self.precision),
            ratio(self.recall),
            opt(self.l2_param_error),
            opt(self.ref_param_error),
            opt(self.train_loglik),
            opt(self.test_loglik),
            opt(self.test_loglik_no_cuts),
            count(self.cuts_added),
            count(self.rounds),
            self.flags.join(";"),
            self.status.clone().err().unwrap_or_default(),
            format!("{:.6}", self.wall_time),
        ]
    }
}

/// Median reference error per `n` and the fitted log-log slope, for one
/// `(xi, method)` group of a rate experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSummary {
    pub xi: f64,
    pub method: Method,
    pub n: Vec<usize>,
    pub ok_replicates: Vec<usize>,
    pub median_error: Vec<f64>,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub rate: Vec<RateSummary>,
}

impl ExperimentOutput {
    /// `results.csv` contents.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for row in &self.rows {
            w.write_record(row.record())?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn rate_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "xi", "n", "ok_replicates", "median_ref_error", "loglog_slope"])?;
        for s in &self.rate {
            for k in 0..s.n.len() {
                w.write_record([
                    s.method.to_string(),
                    s.xi.to_string(),
                    s.n[k].to_string(),
                    s.ok_replicates[k].to_string(),
                    s.median_error[k].to_string(),
                    s.slope.to_string(),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / k, ly.iter().sum::<f64>() / k);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    xi_index: usize,
    n_index: usize,
    replicate: usize,
}

fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for xi_index in 0..cfg.xi.len() {
        for n_index in 0..cfg.n.len() {
            for replicate in 0..cfg.replicates {
                out.push(Cell { xi_index, n_index, replicate });
            }
        }
    }
    out
}

/// The true model of a cell. Shared by every `n` of one `(xi, replicate)`
/// pair so that sample-size trends are measured on matched graphs.
fn true_model(cfg: &ExperimentConfig, xi_index: usize, graph_seed: u64) -> Result<IsingModel> {
    let edges = make_graph(&cfg.graph, splitmix64(graph_seed ^ GRAPH))?;
    assign_parameters(cfg.p(), &edges, cfg.xi[xi_index], splitmix64(graph_seed ^ PARAMS))
}

fn sample(cfg: &ExperimentConfig, model: &IsingModel, n: usize, seed: u64) -> Result<crate::synthetic::Dataset> {
    gibbs_sample(model, &SamplerConfig { n, burn_in: cfg.sampler.burn_in, thin: cfg.sampler.thin, seed })
}

fn blank_row(cfg: &ExperimentConfig, cell: Cell, method: Method, graph_seed: u64, seed: u64) -> ResultRow {
    let n = cfg.n[cell.n_index];
    ResultRow {
        protocol: cfg.protocol,
        graph: cfg.graph.kind(),
        method,
        p: cfg.p(),
        n,
        xi: cfg.xi[cell.xi_index],
        replicate: cell.replicate,
        graph_seed,
        seed,
        lambda: cfg.lambda.resolve(cfg.p(), n),
        status: Ok(()),
        true_edges: 0,
        edge_count: None,
        precision: None,
        recall: None,
        l2_param_error: None,
        ref_param_error: None,
        train_loglik: None,
        test_loglik: None,
        test_loglik_no_cuts: None,
        cuts_added: None,
        rounds: None,
        flags: Vec::new(),
        wall_time: 0.0,
    }
}

fn fill_from_fit(row: &mut ResultRow, rec: &FitRecord, truth: &IsingModel, cfg: &ExperimentConfig) -> Result<()> {
    let metrics = evaluate(rec, Some(truth), None, cfg.solver.edge_tol)?;
    row.edge_count = Some(metrics.edge_count);
    row.precision = metrics.precision;
    row.recall = metrics.recall;
    row.l2_param_error = metrics.l2_param_error;
    row.cuts_added = Some(metrics.cuts_added);
    row.rounds = Some(rec.rounds);
    row.wall_time = metrics.wall_time;
    if row.precision.is_none() {
        row.flags.push("precision_undefined");
    }
    if row.recall.is_none() {
        row.flags.push("recall_undefined");
    }
    if rec.round_limit_reached {
        row.flags.push("round_limit");
    }
    if !rec.capped_nodes.is_empty() {
        row.flags.push("capped");
    }
    if !rec.unconverged_nodes.is_empty() {
        row.flags.push("unconverged");
    }
    Ok(())
}

fn fit_file_name(cfg: &ExperimentConfig, cell: Cell, method: Method) -> String {
    format!(
        "{}_xi{}_n{}_r{}_{}.toml",
        cfg.protocol.as_str(),
        cell.xi_index,
        cell.n_index,
        cell.replicate,
        method
    )
}

fn save_fit(cfg: &ExperimentConfig, cell: Cell, rec: &FitRecord) -> Result<()> {
    if cfg.write_fits {
        let dir = cfg.output_dir.join("fits");
        std::fs::create_dir_all(&dir)?;
        write_fit(&dir.join(fit_file_name(cfg, cell, rec.method)), rec)?;
    }
    Ok(())
}

fn solver_for(cfg: &ExperimentConfig, lambda: f64) -> SolverConfig {
    SolverConfig { lambda, ..cfg.solver }
}

/// Runs the structure or likelihood protocol for one cell.
fn sampled_cell(cfg: &ExperimentConfig, cell: Cell) -> Vec<ResultRow> {
    let graph_seed = derive_seed(cfg.base_seed, &[cell.xi_index as u64, cell.replicate as u64]);
    let seed = derive_seed(cfg.base_seed, &[cell.xi_index as u64, cell.n_index as u64, cell.replicate as u64]);
    let n = cfg.n[cell.n_index];
    let likelihood = cfg.protocol == Protocol::Likelihood;

    let prepared = (|| -> Result<(IsingModel, crate::synthetic::Dataset, Option<crate::synthetic::Dataset>)> {
        let truth = true_model(cfg, cell.xi_index, graph_seed)?;
        let train = sample(cfg, &truth, n, splitmix64(seed ^ TRAIN))?;
        let test = if likelihood {
            Some(sample(cfg, &truth, cfg.test_size.unwrap_or(n), splitmix64(seed ^ TEST))?)
        } else {
            None
        };
        Ok((truth, train, test))
    })();

    cfg.methods
        .iter()
        .map(|&method| {
            let mut row = blank_row(cfg, cell, method, graph_seed, seed);
            let outcome = (|| -> Result<()> {
                let (truth, train, test) = prepared.as_ref().map_err(|e| Error::Config(e.to_string()))?;
                row.true_edges = edge_set(truth, 0.0).len();
                let rec = fit_method(method, train, &solver_for(cfg, row.lambda))?;
                fill_from_fit(&mut row, &rec, truth, cfg)?;
                if let Some(test) = test {
                    let eval_cfg = rec.solver;
                    let train_means = empirical_means(train)?;
                    let test_means = empirical_means(test)?;
                    row.train_loglik = Some(surrogate_loglik(&rec.model, &train_means, &rec.cuts, &eval_cfg)?);
                    let metrics = evaluate(&rec, None, Some(&test_means), cfg.solver.edge_tol)?;
                    row.test_loglik = metrics.test_surrogate_loglik;
                    row.test_loglik_no_cuts = metrics.test_surrogate_loglik_no_cuts;
                }
                save_fit(cfg, cell, &rec)
            })();
            if let Err(e) = outcome {
                row.status = Err(e.to_string());
            }
            row
        })
        .collect()
}

/// Population fit for the rate protocol: the model fitted to exact means.
struct Reference {
    truth: IsingModel,
    fits: Vec<Result<IsingModel>>,
}

fn reference(cfg: &ExperimentConfig, xi_index: usize, graph_seed: u64) -> Result<Reference> {
    let truth = true_model(cfg, xi_index, graph_seed)?;
    let eta_star: MeanVector = exact_mean_parameters(&truth)?;
    let ref_cfg = solver_for(cfg, cfg.reference_lambda);
    let fits = cfg
        .methods
        .iter()
        .map(|&m| {
            let res = if m == Method::LogdetCut { fit(&eta_star, &ref_cfg) } else { fit_no_cuts(&eta_star, &ref_cfg) };
            res.map(|r| r.model)
        })
        .collect();
    Ok(Reference { truth, fits })
}

fn rate_cell(cfg: &ExperimentConfig, cell: Cell, graph_seed: u64, refs: &Result<Reference>) -> Vec<ResultRow> {
    let seed = derive_seed(cfg.base_seed, &[cell.xi_index as u64, cell.n_index as u64, cell.replicate as u64]);
    let n = cfg.n[cell.n_index];
    let train = refs
        .as_ref()
        .map_err(|e| e.to_string())
        .and_then(|r| sample(cfg, &r.truth, n, splitmix64(seed ^ TRAIN)).map_err(|e| e.to_string()));
    cfg.methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let mut row = blank_row(cfg, cell, method, graph_seed, seed);
            let outcome = (|| -> std::result::Result<(), String> {
                let r = refs.as_ref().map_err(|e| e.to_string())?;
                let train = train.as_ref().map_err(|e| e.clone())?;
                let reference = r.fits[k].as_ref().map_err(|e| format!("reference fit: {e}"))?;
                row.true_edges = edge_set(&r.truth, 0.0).len();
                let rec = fit_method(method, train, &solver_for(cfg, row.lambda)).map_err(|e| e.to_string())?;
                fill_from_fit(&mut row, &rec, &r.truth, cfg).map_err(|e| e.to_string())?;
                row.ref_param_error = Some(l2_param_error(&rec.model, reference).map_err(|e| e.to_string())?);
                save_fit(cfg, cell, &rec).map_err(|e| e.to_string())
            })();
            row.status = outcome;
            row
        })
        .collect()
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn run_sampled(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let grid = cells(cfg);
    let rows: Vec<Vec<ResultRow>> = pool(cfg.workers)?.install(|| grid.par_iter().map(|&c| sampled_cell(cfg, c)).collect());
    Ok(ExperimentOutput { rows: rows.into_iter().flatten().collect(), rate: Vec::new() })
}

/// Edge recovery over the `(xi, n, replicate)` grid; one row per method per cell.
pub fn run_structure_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    run_sampled(&ExperimentConfig { protocol: Protocol::Structure, ..cfg.clone() })
}

/// As the structure experiment, plus train and held-out surrogate
/// log-likelihoods under each fit's own cuts and under no cuts.
pub fn run_likelihood_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    run_sampled(&ExperimentConfig { protocol: Protocol::Likelihood, ..cfg.clone() })
}

/// Distance of sampled-data fits to the fit on exact means, per `n`.
///
/// The true model depends only on `xi`, so replicates differ only in the
/// sample drawn from it.
pub fn run_rate_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let cfg = ExperimentConfig { protocol: Protocol::Rate, ..cfg.clone() };
    cfg.validate()?;
    let pool = pool(cfg.workers)?;
    let graph_seeds: Vec<u64> = (0..cfg.xi.len()).map(|i| derive_seed(cfg.base_seed, &[i as u64])).collect();
    let refs: Vec<Result<Reference>> =
        pool.install(|| (0..cfg.xi.len()).into_par_iter().map(|i| reference(&cfg, i, graph_seeds[i])).collect());
    let grid = cells(&cfg);
    let rows: Vec<ResultRow> = pool
        .install(|| {
            grid.par_iter()
                .map(|&c| rate_cell(&cfg, c, graph_seeds[c.xi_index], &refs[c.xi_index]))
                .collect::<Vec<_>>()
        })
        .into_iter()
        .flatten()
        .collect();

    let mut rate = Vec::new();
    for &xi in &cfg.xi {
        for &method in &cfg.methods {
            let mut ok = Vec::new();
            let mut med = Vec::new();
            for &n in &cfg.n {
                let errs: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.xi == xi && r.n == n && r.method == method && r.is_ok())
                    .filter_map(|r| r.ref_param_error)
                    .collect();
                ok.push(errs.len());
                med.push(median(errs));
            }
            let ns: Vec<f64> = cfg.n.iter().map(|&n| n as f64).collect();
            let slope = if cfg.n.len() >= 2 { loglog_slope(&ns, &med) } else { f64::NAN };
            rate.push(RateSummary { xi, method, n: cfg.n.clone(), ok_replicates: ok, median_error: med, slope });
        }
    }
    Ok(ExperimentOutput { rows, rate })
}

/// Dispatches on `cfg.protocol`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    match cfg.protocol {
        Protocol::Structure => run_structure_experiment(cfg),
        Protocol::Likelihood => run_likelihood_experiment(cfg),
        Protocol::Rate => run_rate_experiment(cfg),
    }
}

/// Writes `results.csv`, `rate_summary.csv` (rate protocol) and `manifest.toml` into `dir`.
pub fn write_results(out: &ExperimentOutput, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("results.csv"), out.to_csv()?)?;
    if cfg.protocol == Protocol::Rate {
        std::fs::write(dir.join("rate_summary.csv"), out.rate_csv()?)?;
    }
    let failed = out.rows.iter().filter(|r| !r.is_ok()).count();
    let echo: toml::Table = toml::from_str(&cfg.to_toml()?).map_err(|e| Error::Parse(e.to_string()))?;
    let mut manifest = toml::Table::new();
    manifest.insert("crate".into(), env!("CARGO_PKG_NAME").into());
    manifest.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    manifest.insert("rng".into(), RNG_NAME.into());
    manifest.insert("rows".into(), (out.rows.len() as i64).into());
    manifest.insert("failed_rows".into(), (failed as i64).into());
    manifest.insert("columns".into(), CSV_HEADER.to_vec().into());
    manifest.insert("config".into(), echo.into());
    let manifest = toml::to_string(&manifest).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(dir.join("manifest.toml"), manifest)?;
    Ok(())
}
