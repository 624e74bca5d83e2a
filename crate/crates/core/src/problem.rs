//! Problem definition: the overall reaction, search bounds and budgets, and
//! the per-iteration mechanism dimensions.

use crate::{genmech, Error, Result};
use serde::{Deserialize, Serialize};

/// The net chemical transformation the mechanism must explain.
///
/// Only observed species appear here; intermediates are introduced by the
/// search itself and occupy trailing matrix columns. Negative coefficients are
/// consumed species, positive ones are produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallReaction {
    species_names: Vec<String>,
    stoich: Vec<i32>,
}

impl OverallReaction {
    pub fn new(species_names: Vec<String>, stoich: Vec<i32>) -> Result<Self> {
        if species_names.len() != stoich.len() {
            return Err(Error::InvalidProblem(format!(
                "{} species names but {} stoichiometric coefficients",
                species_names.len(),
                stoich.len()
            )));
        }
        if stoich.iter().any(|&s| s == 0) {
            return Err(Error::InvalidProblem(
                "overall stoichiometry must not contain zeros; intermediates are not listed"
                    .into(),
            ));
        }
        if !stoich.iter().any(|&s| s < 0) || !stoich.iter().any(|&s| s > 0) {
            return Err(Error::InvalidProblem(
                "overall reaction needs at least one reactant and one product".into(),
            ));
        }
        Ok(Self {
            species_names,
            stoich,
        })
    }

    pub fn species_names(&self) -> &[String] {
        &self.species_names
    }

    pub fn stoich(&self) -> &[i32] {
        &self.stoich
    }

    /// Number of observed species (= matrix columns reserved before intermediates).
    pub fn n_observed(&self) -> usize {
        self.stoich.len()
    }

    /// Total reactant molecules consumed by one overall-reaction event.
    pub fn reactant_molecules(&self) -> i32 {
        self.stoich.iter().filter(|&&s| s < 0).map(|s| -s).sum()
    }

    /// Total product molecules produced by one overall-reaction event.
    pub fn product_molecules(&self) -> i32 {
        self.stoich.iter().filter(|&&s| s > 0).sum()
    }
}

/// Full specification of a discovery run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub overall: OverallReaction,
    /// Elementary-step count of iteration 1.
    pub min_steps: usize,
    /// Species count (observed + intermediates) of iteration 1.
    pub min_species: usize,
    /// Closed interval admissible for every rate constant.
    pub rate_bounds: (f64, f64),
    /// Wall-clock seconds allowed for mechanism generation per iteration.
    pub gen_time_budget_s: f64,
    pub max_iterations: usize,
    /// Local-optimization starts per candidate model.
    pub multistart_count: usize,
    /// Per-observed-species measurement noise, for synthetic runs.
    pub noise_model: Option<Vec<f64>>,
}

impl ProblemSpec {
    /// A spec with the defaults used throughout the case studies.
    pub fn new(overall: OverallReaction, min_steps: usize, min_species: usize) -> Self {
        Self {
            overall,
            min_steps,
            min_species,
            rate_bounds: (0.0, 10.0),
            gen_time_budget_s: 600.0,
            max_iterations: 6,
            multistart_count: 10,
            noise_model: None,
        }
    }
}

/// Outcome of [`validate`]: empty means the spec is usable as-is.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every spec invariant and reports violations as data, not errors.
pub fn validate(spec: &ProblemSpec) -> ValidationReport {
    let mut v = Vec::new();
    if spec.min_steps == 0 {
        v.push("min_steps must be positive".to_string());
    }
    if spec.min_species < spec.overall.n_observed() {
        v.push(format!(
            "min_species below observed count ({} < {})",
            spec.min_species,
            spec.overall.n_observed()
        ));
    }
    let (lo, hi) = spec.rate_bounds;
    if lo < 0.0 {
        v.push(format!("rate bounds lower end {lo} is negative"));
    }
    if lo >= hi {
        v.push(format!("empty bounds interval [{lo}, {hi}]"));
    }
    if spec.max_iterations == 0 {
        v.push("max_iterations must be positive".to_string());
    }
    if spec.multistart_count == 0 {
        v.push("multistart_count must be positive".to_string());
    }
    if spec.gen_time_budget_s <= 0.0 {
        v.push("generation time budget must be positive".to_string());
    }
    if let Some(sd) = &spec.noise_model {
        if sd.len() != spec.overall.n_observed() {
            v.push(format!(
                "noise model has {} entries for {} observed species",
                sd.len(),
                spec.overall.n_observed()
            ));
        }
    }
    ValidationReport { violations: v }
}

/// Matrix dimensions for one iteration of the outer loop.
///
/// Each iteration adds exactly one elementary step and one intermediate to
/// the previous one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationPlan {
    pub iteration_index: usize,
    pub n_steps: usize,
    pub n_species: usize,
    pub n_intermediates: usize,
}

/// Dimensions of iteration `index` (1-based).
pub fn plan_iteration(spec: &ProblemSpec, index: usize) -> Result<IterationPlan> {
    if index == 0 || index > spec.max_iterations {
        return Err(Error::IterationOutOfRange {
            index,
            max: spec.max_iterations,
        });
    }
    let n_steps = spec.min_steps + index - 1;
    let n_species = spec.min_species + index - 1;
    Ok(IterationPlan {
        iteration_index: index,
        n_steps,
        n_species,
        n_intermediates: n_species - spec.overall.n_observed(),
    })
}

/// Smallest `(steps, species)` admitting at least one feasible mechanism.
///
/// Molecularity limits each step to two reactant and two product molecules,
/// so at least `ceil(R/2)` and `ceil(P/2)` steps are needed for R reactant and
/// P product molecules. Starting from that bound, sizes are tried in
/// lexicographic `(steps, species)` order by running the enumerator until it
/// produces a candidate; species counts above `observed + steps - 1` cannot
/// host an extra intermediate that is both produced and later consumed, so
/// they are skipped. The step search is capped at twice the molecule-count
/// bound.
pub fn suggest_minimum_size(overall: &OverallReaction) -> Result<(usize, usize)> {
    let molecule_bound = (overall.reactant_molecules() as usize).div_ceil(2).max(
        (overall.product_molecules() as usize).div_ceil(2),
    );
    let lb_steps = molecule_bound.max(1);
    let cap = 2 * molecule_bound;
    let n_obs = overall.n_observed();
    for steps in lb_steps..=cap {
        for species in n_obs..=(n_obs + steps.saturating_sub(1)) {
            let plan = IterationPlan {
                iteration_index: 1,
                n_steps: steps,
                n_species: species,
                n_intermediates: species - n_obs,
            };
            let (found, _complete) = genmech::enumerate(&plan, overall, None, 1);
            if !found.is_empty() {
                return Ok((steps, species));
            }
        }
    }
    Err(Error::SizeSearchCapExceeded { cap })
}
