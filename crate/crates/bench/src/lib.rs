//! Fixtures shared by the benchmarks.

use cutlearn::{
    assign_parameters, empirical_means, gibbs_sample, make_graph, Dataset, GraphSpec, IsingModel, MeanVector,
    SamplerConfig,
};

/// A sampled problem: the true model, its data and the empirical means.
pub struct Problem {
    pub name: &'static str,
    pub model: IsingModel,
    pub data: Dataset,
    pub eta_hat: MeanVector,
}

fn problem(name: &'static str, spec: GraphSpec, xi: f64, n: usize, seed: u64) -> Problem {
    let edges = make_graph(&spec, seed).expect("feasible graph");
    let model = assign_parameters(spec.p(), &edges, xi, seed).expect("valid parameters");
    let data = gibbs_sample(&model, &SamplerConfig { n, seed, ..SamplerConfig::default() }).expect("sampling");
    let eta_hat = empirical_means(&data).expect("non-empty data");
    Problem { name, model, data, eta_hat }
}

/// Grid, sparse and dense-block problems at the sizes used in the experiments.
pub fn problems() -> Vec<Problem> {
    vec![
        problem("grid_p16", GraphSpec::Grid4 { rows: 4, cols: 4 }, 0.5, 500, 1),
        problem("sparse_p30", GraphSpec::RandomSparse { p: 30, n_edges: 60, max_degree: None }, 0.5, 1000, 2),
        problem(
            "dense_p30",
            GraphSpec::DenseSubgraphs { p: 30, n_edges: 60, block_size: 8, n_blocks: 2 },
            2.0,
            500,
            3,
        ),
    ]
}
