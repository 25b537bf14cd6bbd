//! Random-instance sweeps written as CSV.

use std::io::Write;
use std::time::Instant;

use anyhow::{bail, Result};
use arctic_core::instance::{random_instance, split_nodes};
use arctic_core::par::{map_collect, Execution};
use arctic_core::perturb::attempt_seed;
use arctic_core::solve::{solve, Algorithm, SolveOptions};
use arctic_core::strong::run_strong;
use arctic_core::trace::Counters;
use arctic_core::MarketInstance;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub const HEADER: [&str; 9] = [
    "n",
    "m",
    "trial",
    "algorithm",
    "phases",
    "augmentations",
    "restarts",
    "abundant_edges",
    "wall_ms",
];

#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub n: usize,
    pub m: usize,
    pub trial: usize,
    pub algorithm: &'static str,
    pub phases: usize,
    pub augmentations: usize,
    pub restarts: usize,
    pub abundant_edges: usize,
    pub wall_ms: f64,
}

impl Row {
    fn new(
        inst: &MarketInstance,
        trial: usize,
        algorithm: &'static str,
        c: &Counters,
        started: Instant,
    ) -> Self {
        Self {
            n: inst.num_nodes(),
            m: inst.num_edges(),
            trial,
            algorithm,
            phases: c.phases,
            augmentations: c.augmentations,
            restarts: c.restarts,
            abundant_edges: c.abundant_edges,
            wall_ms: started.elapsed().as_secs_f64() * 1000.0,
        }
    }
}

/// Budgets and utilities in `1..=10`, about two edges per node.
pub fn bench_instance(n: usize, seed: u64) -> MarketInstance {
    let (b, g) = split_nodes(n);
    let m = (2 * n).min(b * g).max(b.max(g));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_instance(&mut rng, b, g, m, 10)
}

fn run_trial(n: usize, trial: usize, seed: u64, algorithm: Algorithm) -> Result<Vec<Row>> {
    let job_seed = attempt_seed(seed ^ ((n as u64) << 32), trial as u32);
    let inst = bench_instance(n, job_seed);
    let mut rows = Vec::new();
    let first = if algorithm.runs_weak() {
        Algorithm::Weak
    } else {
        Algorithm::Strong
    };
    let started = Instant::now();
    let mut opts = SolveOptions::new(&inst, first, job_seed);
    opts.strong.execution = Execution::Sequential;
    let solved = solve(&inst, &opts)?;
    if let Some(w) = &solved.weak {
        rows.push(Row::new(
            &solved.instance,
            trial,
            "weak",
            &w.trace.counters,
            started,
        ));
    }
    if let Some(s) = &solved.strong {
        rows.push(Row::new(
            &solved.instance,
            trial,
            "strong",
            &s.trace.counters,
            started,
        ));
    }
    if algorithm == Algorithm::Both {
        let started = Instant::now();
        let strong = run_strong(&solved.instance, &opts.strong)?;
        rows.push(Row::new(
            &solved.instance,
            trial,
            "strong",
            &strong.trace.counters,
            started,
        ));
        let weak = solved.weak.as_ref().expect("weak ran");
        if weak.equilibrium.state != strong.equilibrium.state {
            bail!("n = {n}, trial {trial}: weak and strong equilibria differ");
        }
    }
    for row in &rows {
        if row.abundant_edges + 1 > row.n {
            bail!(
                "n = {n}, trial {trial}: {} abundant edges",
                row.abundant_edges
            );
        }
    }
    Ok(rows)
}

/// Runs every `(size, trial)` pair, in parallel across pairs.
pub fn run(
    sizes: &[usize],
    trials: usize,
    seed: u64,
    algorithm: Algorithm,
    out: impl Write,
) -> Result<usize> {
    let jobs: Vec<(usize, usize)> = sizes
        .iter()
        .flat_map(|&n| (0..trials).map(move |t| (n, t)))
        .collect();
    let results = map_collect(Execution::Parallel, &jobs, |&(n, t)| {
        run_trial(n, t, seed, algorithm)
    });
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    writer.write_record(HEADER)?;
    let mut count = 0;
    for rows in results {
        for row in rows? {
            writer.serialize(row)?;
            count += 1;
        }
    }
    writer.flush()?;
    Ok(count)
}
