//! Text formats: model files, samples files, fit files and cut dumps.
//!
//! Model and fit files are TOML. A fit file carries the estimate in
//! model-file form at its top level, so any fit file is also a model file.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{FitRecord, Method};
use crate::model::{num_pairs, IsingModel, MeanVector};
use crate::separation::{cycle_to_matrix, CycleInequality};
use crate::solver::SolverConfig;
use crate::synthetic::{Dataset, Provenance};

fn parse_err(e: impl std::fmt::Display) -> Error {
    Error::Parse(e.to_string())
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    p: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    nodes: Vec<f64>,
    #[serde(default)]
    edges: Vec<(usize, usize, f64)>,
}

impl ModelFile {
    fn from_model(model: &IsingModel, seed: Option<u64>) -> Self {
        ModelFile {
            p: model.p(),
            seed,
            nodes: model.node_params().to_vec(),
            edges: model.edge_params().iter().map(|(&(u, v), &t)| (u, v, t)).collect(),
        }
    }

    fn into_model(self) -> Result<(IsingModel, Option<u64>)> {
        if self.nodes.len() != self.p {
            return Err(Error::InvalidModel(format!("p = {} but {} node parameters", self.p, self.nodes.len())));
        }
        Ok((IsingModel::new(self.nodes, self.edges)?, self.seed))
    }
}

/// Model file text for `model`.
pub fn model_to_toml(model: &IsingModel, seed: Option<u64>) -> String {
    toml::to_string(&ModelFile::from_model(model, seed)).expect("model file serializes")
}

/// Parses a model file (or the estimate in a fit file) and its optional seed.
pub fn model_from_toml(text: &str) -> Result<(IsingModel, Option<u64>)> {
    toml::from_str::<ModelFile>(text).map_err(parse_err)?.into_model()
}

pub fn read_model(path: &Path) -> Result<(IsingModel, Option<u64>)> {
    model_from_toml(&std::fs::read_to_string(path)?)
}

pub fn write_model(path: &Path, model: &IsingModel, seed: Option<u64>) -> Result<()> {
    Ok(std::fs::write(path, model_to_toml(model, seed))?)
}

/// Samples file text: a `# p=.. n=.. seed=..` header, then one row of spins per line.
pub fn samples_to_string(data: &Dataset) -> String {
    let mut out = format!("# p={} n={}", data.p(), data.n());
    if let Some(seed) = data.provenance.seed {
        let _ = write!(out, " seed={seed}");
    }
    out.push('\n');
    for row in data.rows() {
        let line: Vec<&str> = row.iter().map(|&s| if s > 0 { "1" } else { "-1" }).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Parses a samples file. Spins may be written `1`, `+1` or `-1`.
pub fn parse_samples(text: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((_, l)) => break l.trim(),
            None => return Err(Error::Parse("samples file is empty".into())),
        }
    };
    let fields = header
        .strip_prefix('#')
        .ok_or_else(|| Error::Parse("samples file must start with `# p=<p> n=<n>`".into()))?;
    let (mut p, mut n, mut seed) = (None, None, None);
    for token in fields.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("header token `{token}` is not key=value")))?;
        let num = || value.parse::<u64>().map_err(|_| Error::Parse(format!("header value `{token}` is not an integer")));
        match key {
            "p" => p = Some(num()? as usize),
            "n" => n = Some(num()? as usize),
            "seed" => seed = Some(num()?),
            _ => {}
        }
    }
    let p = p.ok_or_else(|| Error::Parse("header is missing p".into()))?;
    let n = n.ok_or_else(|| Error::Parse("header is missing n".into()))?;

    let mut values = Vec::with_capacity(n * p);
    let mut rows = 0;
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let before = values.len();
        for token in line.split_whitespace() {
            values.push(match token {
                "1" | "+1" => 1,
                "-1" => -1,
                _ => return Err(Error::Parse(format!("line {}: `{token}` is not a spin", lineno + 1))),
            });
        }
        if values.len() - before != p {
            return Err(Error::Parse(format!("line {}: expected {p} spins, found {}", lineno + 1, values.len() - before)));
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Parse(format!("header says n = {n} but the file has {rows} rows")));
    }
    let mut data = Dataset::new(p, values)?;
    data.provenance = Provenance { seed, ..Provenance::default() };
    Ok(data)
}

pub fn read_samples(path: &Path) -> Result<Dataset> {
    parse_samples(&std::fs::read_to_string(path)?)
}

pub fn write_samples(path: &Path, data: &Dataset) -> Result<()> {
    Ok(std::fs::write(path, samples_to_string(data))?)
}

#[derive(Debug, Serialize, Deserialize)]
struct MeansSection {
    nodes: Vec<f64>,
    pairs: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CutEntry {
    cycle: Vec<usize>,
    odd_set: Vec<(usize, usize)>,
    rhs: f64,
    violation: f64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct TraceSection {
    objective_per_round: Vec<f64>,
    cuts_per_round: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FitFile {
    method: Method,
    penalty_scale: String,
    lambda: f64,
    rounds: usize,
    cuts_added: usize,
    round_limit_reached: bool,
    wall_time: f64,
    #[serde(default)]
    capped_nodes: Vec<usize>,
    #[serde(default)]
    unconverged_nodes: Vec<usize>,
    #[serde(flatten)]
    model: ModelFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fitted_means: Option<MeansSection>,
    #[serde(default)]
    trace: TraceSection,
    #[serde(default)]
    cuts: Vec<CutEntry>,
    #[serde(default)]
    solver: SolverConfig,
}

/// Fit file text for a fitted model.
pub fn fit_to_toml(rec: &FitRecord) -> Result<String> {
    let file = FitFile {
        method: rec.method,
        penalty_scale: rec.method.penalty_scale().to_string(),
        lambda: rec.lambda,
        rounds: rec.rounds,
        cuts_added: rec.cuts_added(),
        round_limit_reached: rec.round_limit_reached,
        wall_time: rec.wall_time,
        capped_nodes: rec.capped_nodes.clone(),
        unconverged_nodes: rec.unconverged_nodes.clone(),
        model: ModelFile::from_model(&rec.model, rec.seed),
        fitted_means: rec
            .fitted_means
            .as_ref()
            .map(|m| MeansSection { nodes: m.node_means().to_vec(), pairs: m.pair_means().to_vec() }),
        trace: TraceSection {
            objective_per_round: rec.objective_per_round.clone(),
            cuts_per_round: rec.cuts_per_round.clone(),
        },
        cuts: rec
            .cuts
            .iter()
            .zip(&rec.cut_violations)
            .map(|(c, &violation)| CutEntry {
                cycle: c.cycle().to_vec(),
                odd_set: c.odd_set().to_vec(),
                rhs: c.rhs(),
                violation,
            })
            .collect(),
        solver: rec.solver,
    };
    toml::to_string(&file).map_err(parse_err)
}

/// Parses a fit file, rebuilding each cut from its cycle and odd set.
pub fn fit_from_toml(text: &str) -> Result<FitRecord> {
    let file: FitFile = toml::from_str(text).map_err(parse_err)?;
    let (model, seed) = file.model.into_model()?;
    let p = model.p();
    let fitted_means = match file.fitted_means {
        Some(m) if m.pairs.len() != num_pairs(p) => {
            return Err(Error::Parse(format!("fitted_means has {} pairs, expected {}", m.pairs.len(), num_pairs(p))))
        }
        Some(m) => Some(MeanVector::new(m.nodes, m.pairs)?),
        None => None,
    };
    let mut cuts = Vec::with_capacity(file.cuts.len());
    let mut cut_violations = Vec::with_capacity(file.cuts.len());
    for entry in file.cuts {
        let cut = cycle_to_matrix(&entry.cycle, &entry.odd_set, p)?;
        if (cut.rhs() - entry.rhs).abs() > 1e-12 {
            return Err(Error::Parse(format!("cut on {:?} records rhs {} but implies {}", entry.cycle, entry.rhs, cut.rhs())));
        }
        cuts.push(cut);
        cut_violations.push(entry.violation);
    }
    Ok(FitRecord {
        method: file.method,
        lambda: file.lambda,
        model,
        fitted_means,
        cuts,
        cut_violations,
        rounds: file.rounds,
        objective_per_round: file.trace.objective_per_round,
        cuts_per_round: file.trace.cuts_per_round,
        round_limit_reached: file.round_limit_reached,
        capped_nodes: file.capped_nodes,
        unconverged_nodes: file.unconverged_nodes,
        wall_time: file.wall_time,
        solver: file.solver,
        seed,
    })
}

pub fn read_fit(path: &Path) -> Result<FitRecord> {
    fit_from_toml(&std::fs::read_to_string(path)?)
}

pub fn write_fit(path: &Path, rec: &FitRecord) -> Result<()> {
    Ok(std::fs::write(path, fit_to_toml(rec)?)?)
}

/// One line per cut: cycle vertices, odd edges, right-hand side and the
/// violation when the cut was added.
pub fn cuts_dump(cuts: &[CycleInequality], violations: &[f64]) -> String {
    let mut out = String::new();
    for (c, v) in cuts.iter().zip(violations) {
        let cycle: Vec<String> = c.cycle().iter().map(|x| x.to_string()).collect();
        let odd: Vec<String> = c.odd_set().iter().map(|(a, b)| format!("{a}-{b}")).collect();
        let _ = writeln!(out, "cycle={} odd={} b={} violation={}", cycle.join(","), odd.join(","), c.rhs(), v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> IsingModel {
        IsingModel::new(vec![0.25, -1.0, 1.0 / 3.0], [(0, 1, 0.5), (1, 2, -2.0)]).unwrap()
    }

    #[test]
    fn model_file_round_trip_is_exact() {
        let text = model_to_toml(&model(), Some(42));
        let (back, seed) = model_from_toml(&text).unwrap();
        assert_eq!(back, model());
        assert_eq!(seed, Some(42));
    }

    #[test]
    fn model_file_accepts_integer_parameters() {
        let (m, seed) = model_from_toml("p = 2\nnodes = [0, 1]\nedges = [[0, 1, -1]]\n").unwrap();
        assert_eq!(m.edge(0, 1), -1.0);
        assert_eq!(seed, None);
    }

    #[test]
    fn model_file_rejects_bad_edges() {
        for bad in [
            "p = 2\nnodes = [0, 0]\nedges = [[0, 2, 1.0]]\n",
            "p = 3\nnodes = [0, 0, 0]\nedges = [[0, 1, 1.0], [0, 1, 2.0]]\n",
            "p = 3\nnodes = [0, 0, 0]\nedges = [[0, 1, 1.0], [1, 0, 2.0]]\n",
            "p = 2\nnodes = [0, 0]\nedges = [[1, 1, 1.0]]\n",
            "p = 3\nnodes = [0, 0]\n",
        ] {
            assert!(model_from_toml(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn samples_round_trip() {
        let mut data = Dataset::from_rows(3, &[vec![1, -1, 1], vec![-1, -1, 1]]).unwrap();
        data.provenance.seed = Some(9);
        let text = samples_to_string(&data);
        assert!(text.starts_with("# p=3 n=2 seed=9\n"));
        let back = parse_samples(&text).unwrap();
        assert_eq!(back.rows().collect::<Vec<_>>(), data.rows().collect::<Vec<_>>());
        assert_eq!(back.provenance.seed, Some(9));
    }

    #[test]
    fn samples_accept_both_sign_spellings() {
        let data = parse_samples("# p=2 n=2 seed=1\n+1 -1\n1 1\n").unwrap();
        assert_eq!(data.row(0), &[1, -1]);
        assert_eq!(data.row(1), &[1, 1]);
    }

    #[test]
    fn samples_reject_malformed_files() {
        for bad in [
            "",
            "p=2 n=1\n1 1\n",
            "# p=2 n=2\n1 1\n",
            "# p=2 n=1\n1 0\n",
            "# p=2 n=1\n1 1 1\n",
            "# n=1\n1\n",
        ] {
            assert!(parse_samples(bad).is_err(), "{bad:?}");
        }
    }

    fn fit_with_a_cut() -> FitRecord {
        let eta = MeanVector::new(vec![-0.8, 0.2, 0.3], vec![-0.6, -0.2, -0.7]).unwrap();
        let cfg = SolverConfig::with_lambda(0.2);
        let res = crate::solver::fit(&eta, &cfg).unwrap();
        assert!(res.cuts_added() > 0);
        FitRecord {
            method: Method::LogdetCut,
            lambda: res.lambda,
            model: res.model,
            fitted_means: Some(res.fitted_means),
            cuts: res.cuts,
            cut_violations: res.cut_violations,
            rounds: res.rounds,
            objective_per_round: res.objective_per_round,
            cuts_per_round: res.cuts_per_round,
            round_limit_reached: res.round_limit_reached,
            capped_nodes: Vec::new(),
            unconverged_nodes: Vec::new(),
            wall_time: 0.5,
            solver: cfg,
            seed: Some(3),
        }
    }

    #[test]
    fn fit_file_round_trip() {
        let rec = fit_with_a_cut();
        let text = fit_to_toml(&rec).unwrap();
        assert_eq!(fit_from_toml(&text).unwrap(), rec);
        // the estimate doubles as a model file
        assert_eq!(model_from_toml(&text).unwrap(), (rec.model.clone(), Some(3)));
        assert!(text.contains("penalty_scale = \"theta\""));
    }

    #[test]
    fn fit_file_rejects_inconsistent_cuts() {
        let text = fit_to_toml(&fit_with_a_cut()).unwrap();
        let tampered = text.replacen("rhs = ", "rhs = 7", 1);
        assert!(fit_from_toml(&tampered).is_err());
    }

    #[test]
    fn cuts_dump_lines() {
        let cut = cycle_to_matrix(&[0, 1, 2], &[(0, 1)], 2).unwrap();
        let text = cuts_dump(&[cut], &[0.125]);
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("cycle=0,1,2 odd=0-1 b="));
        assert!(text.trim_end().ends_with("violation=0.125"));
    }
}
