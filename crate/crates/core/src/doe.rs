//! Model-discriminating experiment design: propose the initial condition that
//! maximally separates the predictions of the two best rival models.

use crate::integrate::Integrator;
use crate::translate::KineticModel;
use crate::{exec, seed, Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Admissible initial conditions for the next experiment, one closed interval
/// per observed species (intermediates always start at zero), plus the fixed
/// sampling grid of the prospective experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignSpace {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub times: Vec<f64>,
}

impl DesignSpace {
    fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(Error::DimensionMismatch(
                "design space bounds have different lengths".into(),
            ));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| l > u) {
            return Err(Error::InvalidProblem(
                "design space has an empty interval".into(),
            ));
        }
        Ok(())
    }
}

/// A proposed experiment and the separation it achieves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoEProposal {
    pub x_star: Vec<f64>,
    pub objective: f64,
    pub evaluations: usize,
}

/// Squared divergence of the observed-species predictions of two models
/// started from the observed initial condition `x` (intermediates at zero),
/// summed over the grid. Models may carry different intermediate counts; the
/// comparison covers the first `x.len()` state variables only. A failed
/// simulation makes the point undiscriminating (returns 0).
pub fn discrepancy(
    model_nu: &KineticModel,
    model_mu: &KineticModel,
    x: &[f64],
    times: &[f64],
) -> f64 {
    let n_obs = x.len();
    let mut integrator = Integrator::new();
    let mut run = |model: &KineticModel, out: &mut Vec<f64>| -> bool {
        let mut c0 = vec![0.0; model.n_species];
        c0[..n_obs].copy_from_slice(x);
        integrator
            .solve_grid(model, &model.theta, &c0, times, out)
            .is_ok()
    };
    let (mut states_nu, mut states_mu) = (Vec::new(), Vec::new());
    if !run(model_nu, &mut states_nu) || !run(model_mu, &mut states_mu) {
        return 0.0;
    }
    let (sn, sm) = (model_nu.n_species, model_mu.n_species);
    let mut total = 0.0;
    for ti in 0..times.len() {
        for j in 0..n_obs {
            let d = states_nu[ti * sn + j] - states_mu[ti * sm + j];
            total += d * d;
        }
    }
    total
}

/// Seeded random search over the design space followed by a bounded
/// coordinate polish from the incumbent. A heuristic global search: the
/// returned point is the best found, not a certified optimum. The objective
/// never decreases with a larger budget under the same seed.
pub fn design(
    model_nu: &KineticModel,
    model_mu: &KineticModel,
    space: &DesignSpace,
    budget: usize,
    seed_value: u64,
) -> Result<DoEProposal> {
    if budget == 0 {
        return Err(Error::InvalidProblem("design budget must be positive".into()));
    }
    space.validate()?;
    let d = space.lower.len();
    let mut rng = seed::rng(seed_value);
    let points: Vec<Vec<f64>> = (0..budget)
        .map(|_| {
            (0..d)
                .map(|j| {
                    if space.lower[j] == space.upper[j] {
                        space.lower[j]
                    } else {
                        rng.gen_range(space.lower[j]..=space.upper[j])
                    }
                })
                .collect()
        })
        .collect();

    let objectives: Vec<f64> = exec::par_map(points.clone(), |x| {
        discrepancy(model_nu, model_mu, &x, &space.times)
    });
    let mut evaluations = objectives.len();
    let mut best_idx = 0;
    for (i, &v) in objectives.iter().enumerate() {
        if v > objectives[best_idx] {
            best_idx = i;
        }
    }
    let mut x_star = points[best_idx].clone();
    let mut best = objectives[best_idx];

    // compass polish: shrink coordinate steps until nothing improves
    let mut steps: Vec<f64> = space
        .lower
        .iter()
        .zip(&space.upper)
        .map(|(l, u)| (u - l) / 8.0)
        .collect();
    let min_step: Vec<f64> = space
        .lower
        .iter()
        .zip(&space.upper)
        .map(|(l, u)| 1e-9 * (u - l).max(1e-9))
        .collect();
    loop {
        let mut improved = false;
        for j in 0..d {
            if steps[j] <= 0.0 {
                continue;
            }
            for dir in [1.0, -1.0] {
                let mut trial = x_star.clone();
                trial[j] = (trial[j] + dir * steps[j]).clamp(space.lower[j], space.upper[j]);
                if trial[j] == x_star[j] {
                    continue;
                }
                let v = discrepancy(model_nu, model_mu, &trial, &space.times);
                evaluations += 1;
                if v > best {
                    best = v;
                    x_star = trial;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            let all_done = (0..d).all(|j| steps[j] <= min_step[j]);
            if all_done {
                break;
            }
            for s in steps.iter_mut() {
                *s /= 2.0;
            }
        }
    }

    let objective = discrepancy(model_nu, model_mu, &x_star, &space.times);
    evaluations += 1;
    Ok(DoEProposal {
        x_star,
        objective,
        evaluations,
    })
}
