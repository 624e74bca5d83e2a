//! AIC scoring of fitted candidates and the outer discovery loop.

use crate::datagen::Dataset;
use crate::fit::{estimate, FitResult};
use crate::genmech::{enumerate, MechanismMatrix};
use crate::problem::{plan_iteration, validate, IterationPlan, ProblemSpec};
use crate::translate::{species_names, to_kinetic_model, to_reaction_strings};
use crate::{exec, seed, Error, Result};
use serde::{Deserialize, Serialize};
use std::time::Duration;

/// Gaussian negative log-likelihood with the variance profiled out at
/// `sse / n`:
///
/// `nll = (n/2) ln(sse/n) + (n/2)(1 + ln 2 pi)`
///
/// Monotone in `sse` for fixed `n`; `sse` is floored at 1e-300 so an exact
/// fit stays finite.
pub fn nll(sse: f64, n: usize) -> f64 {
    let nf = n as f64;
    let sse = sse.max(1e-300);
    (nf / 2.0) * (sse / nf).ln() + (nf / 2.0) * (1.0 + (2.0 * std::f64::consts::PI).ln())
}

/// Akaike information criterion, `2 nll + 2 d`.
pub fn aic(nll_value: f64, d: usize) -> f64 {
    2.0 * nll_value + 2.0 * d as f64
}

/// One candidate mechanism with its fit and information scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub matrix: MechanismMatrix,
    pub reaction_strings: Vec<String>,
    pub fit: FitResult,
    pub nll: f64,
    /// Parameter count: the number of rate constants (= matrix rows).
    pub d: usize,
    pub aic: f64,
}

/// All scored candidates of one iteration, ascending by AIC (ties broken by
/// lexicographically smaller matrix).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationReport {
    pub plan: IterationPlan,
    pub n_candidates: usize,
    /// False when the generation budget or candidate cap truncated the set.
    pub complete: bool,
    pub scored: Vec<ScoredCandidate>,
}

impl IterationReport {
    pub fn best(&self) -> &ScoredCandidate {
        &self.scored[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminationReason {
    AicWorsened,
    MaxIterations,
    NoCandidates,
}

/// Outcome of a full discovery run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub iterations: Vec<IterationReport>,
    /// 1-based index of the winning iteration.
    pub winner_iteration: usize,
    pub terminated: TerminationReason,
}

impl RunReport {
    pub fn winner(&self) -> &ScoredCandidate {
        self.iterations[self.winner_iteration - 1].best()
    }

    /// Best AIC of each completed iteration, in order.
    pub fn best_aic_sequence(&self) -> Vec<f64> {
        self.iterations.iter().map(|it| it.best().aic).collect()
    }
}

/// Enumerates, fits and scores every candidate of one iteration.
///
/// Candidates are fitted in deterministic order with per-candidate seeds
/// derived from `(seed, candidate index)`; fits run in parallel.
pub fn run_iteration(
    spec: &ProblemSpec,
    plan: &IterationPlan,
    data: &Dataset,
    seed_value: u64,
) -> Result<IterationReport> {
    let budget = Duration::from_secs_f64(spec.gen_time_budget_s);
    let workers = if spec.workers == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        spec.workers
    };
    let (mut candidates, enum_complete) =
        enumerate(plan, &spec.overall, Some(budget), workers);
    let mut complete = enum_complete;
    if let Some(cap) = spec.max_candidates {
        if candidates.len() > cap {
            candidates.truncate(cap);
            complete = false;
        }
    }
    if candidates.is_empty() {
        return Err(Error::NoCandidates(plan.iteration_index));
    }

    let n_candidates = candidates.len();
    let names = species_names(&data.observed_names, plan.n_species);
    let n = data.n_obs_total();
    let indexed: Vec<(usize, MechanismMatrix)> = candidates.into_iter().enumerate().collect();
    let mut scored: Vec<ScoredCandidate> = exec::par_map(indexed, |(idx, matrix)| {
        let model = to_kinetic_model(&matrix).expect("feasible candidates always decode");
        let fit: FitResult = estimate(
            &model,
            data,
            spec.rate_bounds,
            spec.multistart_count,
            seed::derive(seed_value, idx as u64),
            None,
        )
        .expect("dimensions verified by construction");
        let nll_value = nll(fit.sse, n);
        let reaction_strings =
            to_reaction_strings(&matrix, &names).expect("feasible candidates format");
        ScoredCandidate {
            d: matrix.n_steps(),
            aic: aic(nll_value, matrix.n_steps()),
            matrix,
            reaction_strings,
            fit,
            nll: nll_value,
        }
    });
    scored.sort_by(|a, b| a.aic.total_cmp(&b.aic).then_with(|| a.matrix.cmp(&b.matrix)));
    Ok(IterationReport {
        plan: *plan,
        n_candidates,
        complete,
        scored,
    })
}

/// Runs the outer loop: iterate `run_iteration` from index 1, stop as soon as
/// the best AIC strictly worsens (returning the previous iteration's best) or
/// the iteration budget runs out.
pub fn run_discovery(spec: &ProblemSpec, data: &Dataset, seed_value: u64) -> Result<RunReport> {
    let report = validate(spec);
    if !report.ok() {
        return Err(Error::InvalidProblem(report.violations.join("; ")));
    }
    if data.n_observed() != spec.overall.n_observed() {
        return Err(Error::DimensionMismatch(format!(
            "dataset observes {} species, problem names {}",
            data.n_observed(),
            spec.overall.n_observed()
        )));
    }

    let mut iterations: Vec<IterationReport> = Vec::new();
    let mut terminated = TerminationReason::MaxIterations;
    for index in 1..=spec.max_iterations {
        let plan = plan_iteration(spec, index)?;
        match run_iteration(spec, &plan, data, seed_value) {
            Ok(report) => {
                let worsened = iterations
                    .last()
                    .is_some_and(|prev| report.best().aic > prev.best().aic);
                iterations.push(report);
                if worsened {
                    terminated = TerminationReason::AicWorsened;
                    break;
                }
            }
            Err(Error::NoCandidates(i)) if index > 1 => {
                debug_assert_eq!(i, index);
                terminated = TerminationReason::NoCandidates;
                break;
            }
            Err(e) => return Err(e),
        }
    }

    // the winner is the first iteration attaining the minimal best AIC, i.e.
    // the last one that still improved on its predecessor
    let winner_iteration = iterations
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.best().aic.total_cmp(&b.best().aic).then(ia.cmp(ib)))
        .map(|(i, _)| i + 1)
        .expect("at least one iteration completed");
    Ok(RunReport {
        iterations,
        winner_iteration,
        terminated,
    })
}
