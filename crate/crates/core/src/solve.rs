//! Perturb, run one or both solvers, retry with a fresh seed on genericity
//! failures.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};
use crate::instance::MarketInstance;
use crate::par::{map_collect, Execution};
use crate::perturb::{attempt_seed, perturb, PerturbationConfig};
use crate::strong::{run_strong, StrongOptions, StrongRun};
use crate::weak::{run_weak, WeakOptions, WeakRun};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Weak,
    Strong,
    #[default]
    Both,
}

impl Algorithm {
    pub fn runs_weak(self) -> bool {
        matches!(self, Algorithm::Weak | Algorithm::Both)
    }

    pub fn runs_strong(self) -> bool {
        matches!(self, Algorithm::Strong | Algorithm::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveOptions {
    pub algorithm: Algorithm,
    pub perturbation: PerturbationConfig,
    pub weak: WeakOptions,
    pub strong: StrongOptions,
}

impl SolveOptions {
    pub fn new(inst: &MarketInstance, algorithm: Algorithm, seed: u64) -> Self {
        Self {
            algorithm,
            perturbation: PerturbationConfig::default_for(inst, seed),
            weak: WeakOptions::default(),
            strong: StrongOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Solved {
    /// The perturbed instance the solvers ran on.
    pub instance: MarketInstance,
    /// Configuration of the successful attempt.
    pub perturbation: PerturbationConfig,
    pub attempts: u32,
    pub weak: Option<WeakRun>,
    pub strong: Option<StrongRun>,
}

impl Solved {
    /// Whether both solvers ran and returned the same state.
    pub fn solvers_agree(&self) -> Option<bool> {
        match (&self.weak, &self.strong) {
            (Some(w), Some(s)) => Some(w.equilibrium.state == s.equilibrium.state),
            _ => None,
        }
    }
}

/// Solves `inst` under perturbation. Genericity failures trigger up to
/// `max_retries` further attempts with derived seeds; the last such error is
/// returned if all attempts fail.
pub fn solve(inst: &MarketInstance, opts: &SolveOptions) -> Result<Solved> {
    let base = &opts.perturbation;
    let mut last = None;
    for attempt in 0..=base.max_retries {
        let cfg = base.with_seed(attempt_seed(base.seed, attempt));
        let perturbed = perturb(inst, &cfg)?;
        match solve_perturbed(&perturbed, opts) {
            Ok((weak, strong)) => {
                return Ok(Solved {
                    instance: perturbed,
                    perturbation: cfg,
                    attempts: attempt + 1,
                    weak,
                    strong,
                })
            }
            Err(e) if e.is_genericity() => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Runs the selected solvers on an already perturbed instance.
pub fn solve_perturbed(
    inst: &MarketInstance,
    opts: &SolveOptions,
) -> Result<(Option<WeakRun>, Option<StrongRun>)> {
    let weak = if opts.algorithm.runs_weak() {
        Some(run_weak(inst, &opts.weak)?)
    } else {
        None
    };
    let strong = if opts.algorithm.runs_strong() {
        Some(run_strong(inst, &opts.strong)?)
    } else {
        None
    };
    if let (Some(w), Some(s)) = (&weak, &strong) {
        if w.equilibrium.state != s.equilibrium.state {
            return Err(SolverError::InvariantViolation(
                "weak and strong solvers disagree".into(),
            ));
        }
    }
    Ok((weak, strong))
}

/// Solves many instances, one per item, across threads when `exec` allows.
pub fn solve_batch(
    instances: &[MarketInstance],
    opts: impl Fn(&MarketInstance) -> SolveOptions + Sync + Send,
    exec: Execution,
) -> Vec<Result<Solved>> {
    map_collect(exec, instances, |inst| solve(inst, &opts(inst)))
}
