//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use arctic_core::instance::random_instance;
use arctic_core::oracle::brute_force_equilibrium;
use arctic_core::par::{map_collect, Execution};
use arctic_core::rational::int;
use arctic_core::solve::{solve, Algorithm, SolveOptions, Solved};
use arctic_core::trace::RunTrace;
use arctic_core::weak::{run_weak, Termination, WeakOptions};
use arctic_core::MarketInstance;
use num_traits::Signed;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const ORACLE_INSTANCES: usize = 200;
const CERTIFY_INSTANCES: usize = 1000;
const COUNTER_INSTANCES: usize = 100;
const AUX_SNAPSHOTS: usize = 50;
const SCALE_LIMIT: Duration = Duration::from_secs(60);
const DETERMINISM_INSTANCES: usize = 20;

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(failures: &[String], summary: String) -> Self {
        let detail = match failures.first() {
            None => summary,
            Some(first) => format!("{summary}; {} failures, first: {first}", failures.len()),
        };
        Self {
            passed: failures.is_empty(),
            detail,
        }
    }
}

fn report(id: usize, name: &str, started: Instant, outcome: &Outcome) {
    println!(
        "criterion {id} {name}: {} ({}, {:.1}s)",
        if outcome.passed { "PASS" } else { "FAIL" },
        outcome.detail,
        started.elapsed().as_secs_f64()
    );
}

fn solve_all(instances: &[MarketInstance], seed: u64) -> Vec<Result<Solved, String>> {
    map_collect(Execution::Parallel, instances, |inst| {
        let mut opts = SolveOptions::new(inst, Algorithm::Both, seed);
        opts.strong.collect_snapshots = true;
        solve(inst, &opts).map_err(|e| e.to_string())
    })
}

fn oracle_equivalence(instances: &[MarketInstance]) -> Outcome {
    let results = map_collect(Execution::Parallel, instances, |inst| {
        let solved =
            solve(inst, &SolveOptions::new(inst, Algorithm::Both, 1)).map_err(|e| e.to_string())?;
        let oracle = brute_force_equilibrium(&solved.instance, Execution::Sequential)
            .map_err(|e| e.to_string())?;
        let weak = &solved.weak.as_ref().unwrap().equilibrium.state;
        let strong = &solved.strong.as_ref().unwrap().equilibrium.state;
        if *weak != oracle.state || *strong != oracle.state {
            return Err("solver output differs from the oracle".to_string());
        }
        Ok(())
    });
    let failures = failures_of(&results);
    Outcome::new(&failures, format!("{} instances, exact", instances.len()))
}

fn failures_of<T>(results: &[Result<T, String>]) -> Vec<String> {
    results
        .iter()
        .enumerate()
        .filter_map(|(t, r)| r.as_ref().err().map(|e| format!("#{t}: {e}")))
        .collect()
}

fn certification(solved: &[Result<Solved, String>]) -> Outcome {
    let mut failures = failures_of(solved);
    for (t, s) in solved.iter().enumerate() {
        let Ok(s) = s else { continue };
        let w = &s.weak.as_ref().unwrap().equilibrium;
        let st = &s.strong.as_ref().unwrap().equilibrium;
        if !w.certificate.passed() || !st.certificate.passed() {
            failures.push(format!("#{t}: certificate fails"));
        }
    }
    Outcome::new(&failures, format!("{} instances", solved.len()))
}

fn traces(s: &Solved) -> [(&'static str, &RunTrace); 2] {
    [
        ("weak", &s.weak.as_ref().unwrap().trace),
        ("strong", &s.strong.as_ref().unwrap().trace),
    ]
}

fn potential_discipline(solved: &[Result<Solved, String>]) -> Outcome {
    let mut failures = Vec::new();
    let mut rows = 0;
    for (t, s) in solved.iter().enumerate() {
        let Ok(s) = s else { continue };
        let n = s.instance.num_nodes() as i64;
        for (name, trace) in traces(s) {
            for row in trace.rows.iter().filter(|r| r.is_inner_step()) {
                rows += 1;
                let (Some(a), Some(b)) = (row.phi_before, row.phi_after) else {
                    failures.push(format!("#{t} {name}: row without potential"));
                    continue;
                };
                if a - b != 1 {
                    failures.push(format!("#{t} {name} phase {}: drop {}", row.phase, a - b));
                }
            }
            for p in &trace.phases {
                if p.phi_start > n {
                    failures.push(format!(
                        "#{t} {name} phase {}: start {} > n",
                        p.index, p.phi_start
                    ));
                }
            }
        }
    }
    Outcome::new(&failures, format!("{rows} inner steps"))
}

fn drift_and_abundance(solved: &[Result<Solved, String>]) -> Outcome {
    let mut failures = Vec::new();
    let mut phases = 0;
    for (t, s) in solved.iter().enumerate() {
        let Ok(s) = s else { continue };
        let n = int(s.instance.num_nodes() as i64);
        for (name, trace) in traces(s) {
            for p in &trace.phases {
                phases += 1;
                if p.max_drift > &n * &p.delta {
                    failures.push(format!("#{t} {name} phase {}: drift above nΔ", p.index));
                }
            }
            for w in trace.phases.windows(2) {
                if let Some(k) = w[0]
                    .abundant_start
                    .iter()
                    .find(|k| !w[1].abundant_start.contains(k))
                {
                    failures.push(format!(
                        "#{t} {name} phase {}: edge {k} stopped being abundant",
                        w[1].index
                    ));
                }
            }
        }
    }
    Outcome::new(&failures, format!("{phases} phases"))
}

fn support_recovery(instances: &[MarketInstance]) -> Outcome {
    let results = map_collect(Execution::Parallel, instances, |inst| {
        let solved = solve(inst, &SolveOptions::new(inst, Algorithm::Strong, 1))
            .map_err(|e| e.to_string())?;
        let perturbed = &solved.instance;
        let oracle =
            brute_force_equilibrium(perturbed, Execution::Sequential).map_err(|e| e.to_string())?;
        let run = run_weak(
            perturbed,
            &WeakOptions {
                termination: Termination::Threshold,
            },
        )
        .map_err(|e| e.to_string())?;
        if !run.reached_threshold {
            return Err("stopped above the threshold".into());
        }
        let bound = int(4 * perturbed.num_nodes() as i64) * &run.final_delta;
        let recovered: Vec<usize> = (0..perturbed.num_edges())
            .filter(|&k| run.final_phase_end[k] > bound)
            .collect();
        if recovered != oracle.support() {
            return Err("recovered support differs from the oracle".into());
        }
        for (k, x) in run.final_phase_start.iter().enumerate() {
            if (&oracle.state.spending[k] - x).abs() >= bound {
                return Err(format!("edge {k} is 4nΔ or more from the equilibrium"));
            }
        }
        Ok(())
    });
    let failures = failures_of(&results);
    Outcome::new(&failures, format!("{} threshold runs", instances.len()))
}

fn strong_counters(solved: &[Result<Solved, String>]) -> Outcome {
    let mut failures = Vec::new();
    let mut restarts = 0;
    for (t, s) in solved.iter().enumerate() {
        let Ok(s) = s else { continue };
        let inst = &s.instance;
        let n = inst.num_nodes();
        let nb = inst.num_buyers();
        let run = s.strong.as_ref().unwrap();
        let c = &run.trace.counters;
        let gap_bound = 5.0 * (n as f64).log2() + 10.0;
        let mut fail = |msg: String| failures.push(format!("#{t} (n = {n}): {msg}"));
        if c.abundant_edges > n - 1 {
            fail(format!("{} abundant edges", c.abundant_edges));
        }
        if c.progress_events > 2 * n - 1 {
            fail(format!("{} progress events", c.progress_events));
        }
        if run.max_progress_gap() as f64 > gap_bound {
            fail(format!("progress gap {}", run.max_progress_gap()));
        }
        if c.special_price_max_iterations > n + nb {
            fail(format!(
                "{} price-raise iterations",
                c.special_price_max_iterations
            ));
        }
        for check in run.trace.phases.iter().filter_map(|p| p.restart.as_ref()) {
            restarts += 1;
            let n = int(n as i64);
            let floor = -(&check.new_delta / (&n * &n));
            if check.surpluses.iter().any(|s| *s < floor) {
                fail("restart surplus below -Δ'/n²".into());
            }
            if let Some(x) = &check.min_old_abundant {
                if *x <= int(3) * &n * &check.new_delta {
                    fail("old abundant edge at most 3nΔ' after restart".into());
                }
            }
        }
    }
    Outcome::new(
        &failures,
        format!("{} instances, {restarts} compressed restarts", solved.len()),
    )
}

fn aux_soundness(solved: &[Result<Solved, String>]) -> Outcome {
    let states: Vec<_> = solved
        .iter()
        .flatten()
        .flat_map(|s| {
            let run = s.strong.as_ref().unwrap();
            run.snapshots.iter().map(move |snap| (&s.instance, snap))
        })
        .collect();
    let mut failures = Vec::new();
    if states.len() < AUX_SNAPSHOTS {
        failures.push(format!("only {} states available", states.len()));
    }
    let stride = (states.len() / AUX_SNAPSHOTS).max(1);
    let mut sampled = 0;
    for (inst, snap) in states.iter().step_by(stride).take(AUX_SNAPSHOTS) {
        sampled += 1;
        let aux = snap.aux_network(inst);
        if aux.has_improving_cycle() {
            failures.push(format!(
                "phase {}: cycle with product above one",
                snap.phase
            ));
        }
    }
    Outcome::new(&failures, format!("{sampled} states"))
}

fn scale() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let inst = random_instance(&mut rng, 20, 20, 80, 10);
    let started = Instant::now();
    let result = solve(&inst, &SolveOptions::new(&inst, Algorithm::Strong, 1));
    let elapsed = started.elapsed();
    let mut failures = Vec::new();
    match result {
        Err(e) => failures.push(e.to_string()),
        Ok(s) if !s.strong.as_ref().unwrap().equilibrium.certificate.passed() => {
            failures.push("certificate fails".into())
        }
        Ok(_) => {}
    }
    if elapsed > SCALE_LIMIT {
        failures.push(format!("took {:.1}s", elapsed.as_secs_f64()));
    }
    Outcome::new(
        &failures,
        format!(
            "n = 40, m = {}, {:.2}s of {}s",
            inst.num_edges(),
            elapsed.as_secs_f64(),
            SCALE_LIMIT.as_secs()
        ),
    )
}

fn fingerprint(s: &Solved) -> String {
    let mut out = format!("{:?}\n{:?}\n", s.perturbation, s.instance.to_document());
    if let Some(w) = &s.weak {
        out += &format!("{:?}\n{}", w.equilibrium, w.trace.to_json_lines());
    }
    if let Some(st) = &s.strong {
        out += &format!("{:?}\n{}", st.equilibrium, st.trace.to_json_lines());
    }
    out
}

fn determinism(instances: &[MarketInstance]) -> Outcome {
    let mut failures = Vec::new();
    for (t, inst) in instances.iter().enumerate() {
        let mut prints = Vec::new();
        for exec in [
            Execution::Parallel,
            Execution::Parallel,
            Execution::Sequential,
        ] {
            let mut opts = SolveOptions::new(inst, Algorithm::Both, 99);
            opts.strong.execution = exec;
            match solve(inst, &opts) {
                Ok(s) => prints.push(fingerprint(&s)),
                Err(e) => prints.push(format!("error: {e}")),
            }
        }
        if prints.iter().any(|p| *p != prints[0]) {
            failures.push(format!("#{t}: outputs differ between runs"));
        }
    }
    Outcome::new(
        &failures,
        format!("{} instances, 3 runs each", instances.len()),
    )
}

fn main() -> ExitCode {
    let mut all = true;
    let mut run = |id: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let started = Instant::now();
        let outcome = f();
        report(id, name, started, &outcome);
        all &= outcome.passed;
    };

    let small = common::suite(1, ORACLE_INSTANCES, 8, 12);
    run(1, "oracle equivalence", &mut || oracle_equivalence(&small));

    let started = Instant::now();
    let medium = common::suite(2, CERTIFY_INSTANCES, 20, 40);
    let solved = solve_all(&medium, 2);
    println!(
        "(solved {} instances with n <= 20 in {:.1}s)",
        medium.len(),
        started.elapsed().as_secs_f64()
    );
    run(2, "equilibrium certification", &mut || {
        certification(&solved)
    });
    run(3, "potential discipline", &mut || {
        potential_discipline(&solved)
    });
    run(4, "drift and abundance", &mut || {
        drift_and_abundance(&solved)
    });
    run(5, "support recovery", &mut || support_recovery(&small));
    run(6, "strong counters", &mut || {
        strong_counters(&solved[..COUNTER_INSTANCES])
    });
    run(7, "auxiliary network", &mut || {
        aux_soundness(&solved[..COUNTER_INSTANCES])
    });
    run(8, "scale", &mut scale);
    run(9, "determinism", &mut || {
        determinism(&medium[..DETERMINISM_INSTANCES])
    });

    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
