//! Rate-constant estimation: SSE objective plus bounded multi-start
//! quasi-Newton minimization.

use crate::datagen::Dataset;
use crate::integrate::{Integrator, RateModel};
use crate::{exec, seed, Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Objective value standing in for a failed integration: finite, orderable,
/// and far above any real sum of squared errors.
pub const PENALTY_SSE: f64 = 1e12;

/// Outcome of [`estimate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_star: Vec<f64>,
    pub sse: f64,
    /// Number of scalar residuals behind `sse`.
    pub n_obs_total: usize,
    pub converged: bool,
    pub starts_used: usize,
    pub best_start_index: usize,
}

/// Reusable SSE evaluator for one (model, dataset) pair.
///
/// Candidate intermediates start at concentration zero; observed initial
/// concentrations come from the experiment record. Integration failure in any
/// experiment yields [`PENALTY_SSE`].
pub struct SseEvaluator<'a> {
    model: &'a dyn RateModel,
    data: &'a Dataset,
    integrator: Integrator,
    c0: Vec<f64>,
    states: Vec<f64>,
}

impl<'a> SseEvaluator<'a> {
    pub fn new(model: &'a dyn RateModel, data: &'a Dataset) -> Result<Self> {
        if model.n_species() < data.n_observed() {
            return Err(Error::DimensionMismatch(format!(
                "model has {} species but the dataset observes {}",
                model.n_species(),
                data.n_observed()
            )));
        }
        Ok(Self {
            model,
            data,
            integrator: Integrator::new(),
            c0: vec![0.0; model.n_species()],
            states: Vec::new(),
        })
    }

    pub fn eval(&mut self, theta: &[f64]) -> f64 {
        let n_obs = self.data.n_observed();
        let n_sp = self.model.n_species();
        let mut total = 0.0;
        for exp in &self.data.experiments {
            self.c0[..n_obs].copy_from_slice(&exp.c0_observed);
            self.c0[n_obs..].fill(0.0);
            if self
                .integrator
                .solve_grid(self.model, theta, &self.c0, &self.data.times, &mut self.states)
                .is_err()
            {
                return PENALTY_SSE;
            }
            for (ti, obs) in exp.y.chunks(n_obs).enumerate() {
                let predicted = &self.states[ti * n_sp..ti * n_sp + n_obs];
                for (p, o) in predicted.iter().zip(obs) {
                    let d = p - o;
                    total += d * d;
                }
            }
        }
        total
    }
}

/// Sum of squared errors of `model` at `theta` against `data`.
pub fn sse(model: &dyn RateModel, theta: &[f64], data: &Dataset) -> Result<f64> {
    if theta.len() != model.n_params() {
        return Err(Error::DimensionMismatch(format!(
            "{} rate constants for {} parameters",
            theta.len(),
            model.n_params()
        )));
    }
    Ok(SseEvaluator::new(model, data)?.eval(theta))
}

/// Tolerances and budget of one local minimization.
#[derive(Debug, Clone, Copy)]
pub struct OptimOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    pub history: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            max_iters: 120,
            grad_tol: 1e-8,
            step_tol: 1e-8,
            history: 8,
        }
    }
}

/// Result of one local minimization.
#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub fx: f64,
    pub converged: bool,
    pub n_evals: usize,
}

fn clamp_to(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((xi, &lo), &hi) in x.iter_mut().zip(lower).zip(upper) {
        *xi = xi.clamp(lo, hi);
    }
}

/// Forward finite-difference gradient with step `max(1e-7, 1e-7 |x_i|)`,
/// switching to a backward difference at the upper bound so no evaluation
/// ever leaves the box.
fn fd_gradient(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x: &[f64],
    fx: f64,
    upper: &[f64],
    g: &mut [f64],
    work: &mut Vec<f64>,
    n_evals: &mut usize,
) {
    work.clear();
    work.extend_from_slice(x);
    for i in 0..x.len() {
        let h = 1e-7f64.max(1e-7 * x[i].abs());
        if x[i] + h <= upper[i] {
            work[i] = x[i] + h;
            let fp = f(work);
            g[i] = (fp - fx) / h;
        } else {
            work[i] = x[i] - h;
            let fm = f(work);
            g[i] = (fx - fm) / h;
        }
        work[i] = x[i];
        *n_evals += 1;
    }
}

/// Bounded quasi-Newton local minimization (projected L-BFGS with Armijo
/// backtracking). Deterministic; never evaluates outside the box.
pub fn minimize(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &OptimOptions,
) -> Minimum {
    let d = x0.len();
    let mut x = x0.to_vec();
    clamp_to(&mut x, lower, upper);
    let mut fx = f(&x);
    let mut n_evals = 1usize;
    let mut g = vec![0.0; d];
    let mut work = Vec::with_capacity(d);
    fd_gradient(f, &x, fx, upper, &mut g, &mut work, &mut n_evals);

    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho: Vec<f64> = Vec::new();
    let mut converged = false;
    let at_bound_eps = 1e-12;

    for _ in 0..opts.max_iters {
        // projected gradient: components pushing outside the box are inactive
        let pg_norm = x
            .iter()
            .zip(&g)
            .zip(lower.iter().zip(upper))
            .map(|((&xi, &gi), (&lo, &hi))| {
                if (xi - lo <= at_bound_eps && gi > 0.0)
                    || (hi - xi <= at_bound_eps && gi < 0.0)
                {
                    0.0
                } else {
                    gi.abs()
                }
            })
            .fold(0.0f64, f64::max);
        if pg_norm <= opts.grad_tol {
            converged = true;
            break;
        }

        // two-loop recursion for the quasi-Newton direction
        let mut dir: Vec<f64> = g.iter().map(|&gi| -gi).collect();
        if !s_hist.is_empty() {
            let m = s_hist.len();
            let mut alpha = vec![0.0; m];
            for i in (0..m).rev() {
                let a = rho[i]
                    * s_hist[i]
                        .iter()
                        .zip(&dir)
                        .map(|(si, di)| si * di)
                        .sum::<f64>();
                alpha[i] = a;
                for (dj, yj) in dir.iter_mut().zip(&y_hist[i]) {
                    *dj -= a * yj;
                }
            }
            let sy: f64 = s_hist[m - 1]
                .iter()
                .zip(&y_hist[m - 1])
                .map(|(a, b)| a * b)
                .sum();
            let yy: f64 = y_hist[m - 1].iter().map(|v| v * v).sum();
            if yy > 0.0 {
                let gamma = sy / yy;
                for dj in dir.iter_mut() {
                    *dj *= gamma;
                }
            }
            for i in 0..m {
                let b = rho[i]
                    * y_hist[i]
                        .iter()
                        .zip(&dir)
                        .map(|(yi, di)| yi * di)
                        .sum::<f64>();
                for (dj, sj) in dir.iter_mut().zip(&s_hist[i]) {
                    *dj += (alpha[i] - b) * sj;
                }
            }
        }
        // fall back to steepest descent when the model direction is uphill
        let descent: f64 = dir.iter().zip(&g).map(|(di, gi)| di * gi).sum();
        if descent >= 0.0 {
            dir = g.iter().map(|&gi| -gi).collect();
            s_hist.clear();
            y_hist.clear();
            rho.clear();
        }
        // freeze directions that push against an active bound
        for i in 0..d {
            if (x[i] - lower[i] <= at_bound_eps && dir[i] < 0.0)
                || (upper[i] - x[i] <= at_bound_eps && dir[i] > 0.0)
            {
                dir[i] = 0.0;
            }
        }
        if dir.iter().all(|&v| v == 0.0) {
            converged = true;
            break;
        }

        // Armijo backtracking along the projected path
        let mut alpha = 1.0f64;
        let mut accepted: Option<(Vec<f64>, f64)> = None;
        for _ in 0..30 {
            let mut xn: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + alpha * di).collect();
            clamp_to(&mut xn, lower, upper);
            let fn_ = f(&xn);
            n_evals += 1;
            let slope: f64 = g
                .iter()
                .zip(xn.iter().zip(&x))
                .map(|(gi, (xni, xi))| gi * (xni - xi))
                .sum();
            if fn_ <= fx + 1e-4 * slope.min(0.0) && fn_ < fx {
                accepted = Some((xn, fn_));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fn_)) = accepted else {
            if !s_hist.is_empty() {
                // retry from scratch with a steepest-descent memory
                s_hist.clear();
                y_hist.clear();
                rho.clear();
                continue;
            }
            break;
        };

        let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let step_norm = step.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let mut gn = vec![0.0; d];
        fd_gradient(f, &xn, fn_, upper, &mut gn, &mut work, &mut n_evals);
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = step.iter().zip(&yv).map(|(a, b)| a * b).sum();
        let s_norm: f64 = step.iter().map(|v| v * v).sum::<f64>().sqrt();
        let y_norm: f64 = yv.iter().map(|v| v * v).sum::<f64>().sqrt();
        if sy > 1e-10 * s_norm * y_norm {
            s_hist.push(step.clone());
            y_hist.push(yv);
            rho.push(1.0 / sy);
            if s_hist.len() > opts.history {
                s_hist.remove(0);
                y_hist.remove(0);
                rho.remove(0);
            }
        }
        x = xn;
        fx = fn_;
        g = gn;
        if step_norm <= opts.step_tol {
            converged = true;
            break;
        }
    }

    Minimum {
        x,
        fx,
        converged,
        n_evals,
    }
}

/// Multi-start bounded estimation of the rate constants of `model`.
///
/// Starts with the optional expert guess, then uniform random points in the
/// bounds drawn from a stream seeded by `seed`; the stream does not depend on
/// `n_starts`, so a larger run extends a smaller one. The lowest-SSE start
/// wins, ties broken by start index.
pub fn estimate(
    model: &dyn RateModel,
    data: &Dataset,
    bounds: (f64, f64),
    n_starts: usize,
    seed_value: u64,
    initial_guess: Option<&[f64]>,
) -> Result<FitResult> {
    if n_starts == 0 {
        return Err(Error::InvalidProblem("n_starts must be positive".into()));
    }
    let d = model.n_params();
    if let Some(guess) = initial_guess {
        if guess.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "initial guess has {} entries for {} parameters",
                guess.len(),
                d
            )));
        }
    }
    let (lo, hi) = bounds;
    let lower = vec![lo; d];
    let upper = vec![hi; d];

    let mut rng = seed::rng(seed_value);
    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(n_starts);
    if let Some(guess) = initial_guess {
        let mut g = guess.to_vec();
        clamp_to(&mut g, &lower, &upper);
        starts.push(g);
    }
    while starts.len() < n_starts {
        starts.push((0..d).map(|_| rng.gen_range(lo..=hi)).collect());
    }

    // dry-run guard: dimension errors surface here once instead of inside the
    // parallel workers
    SseEvaluator::new(model, data)?;

    let opts = OptimOptions::default();
    let runs: Vec<Minimum> = exec::par_map(starts, |x0| {
        let mut evaluator = SseEvaluator::new(model, data).expect("checked above");
        let mut objective = |theta: &[f64]| evaluator.eval(theta);
        minimize(&mut objective, &x0, &lower, &upper, &opts)
    });

    let best_start_index = runs
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.fx.total_cmp(&b.fx).then(ia.cmp(ib)))
        .map(|(i, _)| i)
        .expect("n_starts >= 1");
    let best = &runs[best_start_index];
    Ok(FitResult {
        theta_star: best.x.clone(),
        sse: best.fx,
        n_obs_total: data.n_obs_total(),
        converged: best.converged && best.fx < PENALTY_SSE,
        starts_used: runs.len(),
        best_start_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{case, generate, CaseName, Dataset, Experiment};
    use crate::genmech::MechanismMatrix;
    use crate::integrate::simulate;
    use crate::translate::to_kinetic_model;
    use approx::assert_relative_eq;

    fn decay_model(k: f64) -> crate::translate::KineticModel {
        let m = MechanismMatrix::from_rows(&[vec![-1, 1]]).unwrap();
        let mut model = to_kinetic_model(&m).unwrap();
        model.theta = vec![k];
        model
    }

    fn decay_dataset(k: f64) -> Dataset {
        let model = decay_model(k);
        let times: Vec<f64> = (0..30).map(|i| i as f64 / 2.9).collect();
        let c0 = [3.0, 0.0];
        let traj = simulate(&model, &model.theta, &c0, &times).unwrap();
        let y: Vec<f64> = (0..times.len())
            .flat_map(|ti| traj.state(ti).to_vec())
            .collect();
        Dataset {
            observed_names: vec!["A".into(), "B".into()],
            times,
            experiments: vec![Experiment {
                c0_observed: c0.to_vec(),
                y,
            }],
            seed: 0,
        }
    }

    #[test]
    fn minimize_solves_a_bounded_quadratic() {
        let mut f = |x: &[f64]| (x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2);
        // interior optimum
        let m = minimize(&mut f, &[0.0, 0.0], &[-5.0, -5.0], &[5.0, 5.0], &Default::default());
        assert!(m.converged);
        assert_relative_eq!(m.x[0], 3.0, epsilon = 1e-5);
        assert_relative_eq!(m.x[1], -1.0, epsilon = 1e-5);
        // optimum clipped by the box
        let m = minimize(&mut f, &[0.0, 0.0], &[0.0, 0.0], &[1.0, 1.0], &Default::default());
        assert!(m.converged);
        assert_relative_eq!(m.x[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(m.x[1], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn minimize_crosses_the_rosenbrock_valley() {
        let mut f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = OptimOptions {
            max_iters: 500,
            ..Default::default()
        };
        let m = minimize(&mut f, &[-1.2, 1.0], &[-2.0, -2.0], &[2.0, 2.0], &opts);
        assert!(m.fx < 1e-8, "fx = {}", m.fx);
        assert_relative_eq!(m.x[0], 1.0, epsilon = 1e-3);
    }

    #[test]
    fn noiseless_self_fit_recovers_the_rate_constant() {
        let data = decay_dataset(0.5);
        let model = decay_model(0.0);
        let fit = estimate(&model, &data, (0.0, 10.0), 5, 7, None).unwrap();
        assert!(fit.converged);
        assert!((fit.theta_star[0] - 0.5).abs() / 0.5 < 0.01, "{:?}", fit);
        assert!(fit.sse <= 1e-8, "sse = {}", fit.sse);
    }

    #[test]
    fn expert_guess_converges_immediately() {
        let data = decay_dataset(0.5);
        let model = decay_model(0.0);
        let fit = estimate(&model, &data, (0.0, 10.0), 1, 0, Some(&[0.5])).unwrap();
        assert!(fit.sse <= 1e-8);
        assert_eq!(fit.best_start_index, 0);
    }

    #[test]
    fn empty_dataset_has_zero_sse() {
        let data = Dataset {
            observed_names: vec!["A".into(), "B".into()],
            times: vec![0.0, 1.0],
            experiments: vec![],
            seed: 0,
        };
        let model = decay_model(1.0);
        assert_eq!(sse(&model, &[1.0], &data).unwrap(), 0.0);
    }

    #[test]
    fn self_consistency_of_reported_sse() {
        let data = decay_dataset(0.7);
        let model = decay_model(0.0);
        let fit = estimate(&model, &data, (0.0, 10.0), 3, 1, None).unwrap();
        let re = sse(&model, &fit.theta_star, &data).unwrap();
        assert!((re - fit.sse).abs() <= 1e-10 * re.max(1.0));
    }

    #[test]
    fn more_starts_never_hurt() {
        let cs = case(CaseName::Hypothetical);
        let data = generate(&cs, 5).unwrap();
        let truth = match &cs.truth {
            crate::datagen::TruthModel::Mechanism(m) => m.clone(),
            _ => unreachable!(),
        };
        let one = estimate(&truth, &data, (0.0, 10.0), 1, 42, None).unwrap();
        let ten = estimate(&truth, &data, (0.0, 10.0), 10, 42, None).unwrap();
        assert!(ten.sse <= one.sse);
    }

    #[test]
    fn estimation_is_deterministic() {
        let data = decay_dataset(0.3);
        let model = decay_model(0.0);
        let a = estimate(&model, &data, (0.0, 10.0), 4, 9, None).unwrap();
        let b = estimate(&model, &data, (0.0, 10.0), 4, 9, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bounds_are_respected_during_optimization() {
        let data = decay_dataset(0.5);
        let model = decay_model(0.0);
        let mut evaluator = SseEvaluator::new(&model, &data).unwrap();
        let mut objective = |theta: &[f64]| {
            assert!(theta.iter().all(|&t| (0.0..=2.0).contains(&t)), "{theta:?}");
            evaluator.eval(theta)
        };
        let m = minimize(
            &mut objective,
            &[1.9],
            &[0.0],
            &[2.0],
            &Default::default(),
        );
        assert!(m.x[0] <= 2.0);
    }
}
