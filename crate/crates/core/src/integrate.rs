//! Adaptive Runge-Kutta integration of kinetic models over experiment time
//! grids, plus exact linear conservation analysis for verification.

use crate::translate::KineticModel;
use crate::{Error, Result};
use num_rational::Ratio;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Relative tolerance of the embedded step-size controller.
pub const RTOL: f64 = 1e-6;
/// Absolute tolerance of the embedded step-size controller.
pub const ATOL: f64 = 1e-8;

/// Right-hand side of an autonomous concentration ODE `dc/dt = f(c; theta)`.
pub trait RateModel: Sync {
    fn n_species(&self) -> usize;
    fn n_params(&self) -> usize;
    /// Writes the derivative into `out` without allocating.
    fn rhs_into(&self, theta: &[f64], c: &[f64], out: &mut [f64]);
}

/// Why an integration attempt was abandoned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimFailure {
    StepUnderflow,
    NonFinite,
    MaxSteps,
    NegativeState,
}

impl fmt::Display for SimFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::StepUnderflow => write!(f, "minimum step size underflow"),
            Self::NonFinite => write!(f, "state became non-finite"),
            Self::MaxSteps => write!(f, "step limit exceeded"),
            Self::NegativeState => write!(f, "state left the nonnegative region"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrajectoryStatus {
    Ok,
    Failed(SimFailure),
}

/// Solution sampled on an experiment time grid (row-major `n_t x n_species`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub n_species: usize,
    pub status: TrajectoryStatus,
}

impl Trajectory {
    pub fn is_ok(&self) -> bool {
        self.status == TrajectoryStatus::Ok
    }

    pub fn state(&self, t_index: usize) -> &[f64] {
        &self.states[t_index * self.n_species..(t_index + 1) * self.n_species]
    }
}

// Dormand-Prince 5(4) tableau
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const MAX_STEPS: usize = 100_000;

/// Reusable Dormand-Prince 5(4) integrator.
///
/// Holds all stage buffers so repeated solves (the fitting hot path) allocate
/// nothing beyond the caller's output. Solves are deterministic functions of
/// the inputs.
pub struct Integrator {
    pub rtol: f64,
    pub atol: f64,
    k: [Vec<f64>; 7],
    y: Vec<f64>,
    y_stage: Vec<f64>,
    y_new: Vec<f64>,
    clamped: Vec<f64>,
}

impl Default for Integrator {
    fn default() -> Self {
        Self::new()
    }
}

impl Integrator {
    pub fn new() -> Self {
        Self::with_tolerances(RTOL, ATOL)
    }

    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            k: Default::default(),
            y: Vec::new(),
            y_stage: Vec::new(),
            y_new: Vec::new(),
            clamped: Vec::new(),
        }
    }

    fn resize(&mut self, n: usize) {
        for k in &mut self.k {
            k.resize(n, 0.0);
        }
        self.y.resize(n, 0.0);
        self.y_stage.resize(n, 0.0);
        self.y_new.resize(n, 0.0);
        self.clamped.resize(n, 0.0);
    }

    /// RHS evaluation with the nonnegativity clamp: components below `-atol`
    /// enter the rate law as zero; the raw solver state is untouched.
    fn eval_into(
        &mut self,
        model: &dyn RateModel,
        theta: &[f64],
        y: &[f64],
        stage: usize,
    ) {
        for (dst, &src) in self.clamped.iter_mut().zip(y) {
            *dst = if src < -self.atol { 0.0 } else { src };
        }
        let mut k = std::mem::take(&mut self.k[stage]);
        model.rhs_into(theta, &self.clamped, &mut k);
        self.k[stage] = k;
    }

    fn stage(&mut self, model: &dyn RateModel, theta: &[f64], stage: usize) {
        let ys = std::mem::take(&mut self.y_stage);
        self.eval_into(model, theta, &ys, stage);
        self.y_stage = ys;
    }

    /// Classic starting-step heuristic for a fifth-order method.
    fn initial_step(
        &mut self,
        model: &dyn RateModel,
        theta: &[f64],
        span: f64,
    ) -> std::result::Result<f64, SimFailure> {
        let n = self.y.len();
        let sc: Vec<f64> = self
            .y
            .iter()
            .map(|&v| self.atol + self.rtol * v.abs())
            .collect();
        let rms = |v: &[f64]| -> f64 {
            (v.iter()
                .zip(&sc)
                .map(|(&x, &s)| (x / s) * (x / s))
                .sum::<f64>()
                / n as f64)
                .sqrt()
        };
        let d0 = rms(&self.y);
        let f0 = self.k[0].clone();
        let d1 = rms(&f0);
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6 * span.max(1.0)
        } else {
            0.01 * d0 / d1
        };
        h0 = h0.min(span);
        for j in 0..n {
            self.y_stage[j] = self.y[j] + h0 * f0[j];
        }
        self.stage(model, theta, 1);
        if self.k[1].iter().any(|v| !v.is_finite()) {
            return Err(SimFailure::NonFinite);
        }
        let diff: Vec<f64> = self.k[1].iter().zip(&f0).map(|(a, b)| a - b).collect();
        let d2 = rms(&diff) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        Ok((100.0 * h0).min(h1).min(span))
    }

    /// Integrates from `times[0]`, writing the state at every grid time into
    /// `out` (row-major, resized to `times.len() * n_species`).
    pub fn solve_grid(
        &mut self,
        model: &dyn RateModel,
        theta: &[f64],
        c0: &[f64],
        times: &[f64],
        out: &mut Vec<f64>,
    ) -> std::result::Result<(), SimFailure> {
        let n = model.n_species();
        self.resize(n);
        self.y.copy_from_slice(c0);
        out.clear();
        out.extend_from_slice(c0);
        if times.len() == 1 {
            return Ok(());
        }
        let span = times[times.len() - 1] - times[0];
        let h_min = 1e-14 * span;

        let y0 = self.y.clone();
        self.eval_into(model, theta, &y0, 0); // k1; FSAL keeps it warm afterwards
        if self.k[0].iter().any(|v| !v.is_finite()) {
            return Err(SimFailure::NonFinite);
        }
        let mut h = self.initial_step(model, theta, span)?;
        let mut t = times[0];
        let mut steps = 0usize;

        for &t_target in &times[1..] {
            while t < t_target {
                steps += 1;
                if steps > MAX_STEPS {
                    return Err(SimFailure::MaxSteps);
                }
                let h_step = h.min(t_target - t);

                for j in 0..n {
                    self.y_stage[j] = self.y[j] + h_step * A21 * self.k[0][j];
                }
                self.stage(model, theta, 1);
                for j in 0..n {
                    self.y_stage[j] =
                        self.y[j] + h_step * (A31 * self.k[0][j] + A32 * self.k[1][j]);
                }
                self.stage(model, theta, 2);
                for j in 0..n {
                    self.y_stage[j] = self.y[j]
                        + h_step
                            * (A41 * self.k[0][j] + A42 * self.k[1][j] + A43 * self.k[2][j]);
                }
                self.stage(model, theta, 3);
                for j in 0..n {
                    self.y_stage[j] = self.y[j]
                        + h_step
                            * (A51 * self.k[0][j]
                                + A52 * self.k[1][j]
                                + A53 * self.k[2][j]
                                + A54 * self.k[3][j]);
                }
                self.stage(model, theta, 4);
                for j in 0..n {
                    self.y_stage[j] = self.y[j]
                        + h_step
                            * (A61 * self.k[0][j]
                                + A62 * self.k[1][j]
                                + A63 * self.k[2][j]
                                + A64 * self.k[3][j]
                                + A65 * self.k[4][j]);
                }
                self.stage(model, theta, 5);

                for j in 0..n {
                    self.y_new[j] = self.y[j]
                        + h_step
                            * (B1 * self.k[0][j]
                                + B3 * self.k[2][j]
                                + B4 * self.k[3][j]
                                + B5 * self.k[4][j]
                                + B6 * self.k[5][j]);
                }
                let yn = std::mem::take(&mut self.y_new);
                self.eval_into(model, theta, &yn, 6); // FSAL stage
                self.y_new = yn;

                if self.y_new.iter().any(|v| !v.is_finite()) {
                    return Err(SimFailure::NonFinite);
                }

                let mut err_sq = 0.0;
                for j in 0..n {
                    let e = h_step
                        * (E1 * self.k[0][j]
                            + E3 * self.k[2][j]
                            + E4 * self.k[3][j]
                            + E5 * self.k[4][j]
                            + E6 * self.k[5][j]
                            + E7 * self.k[6][j]);
                    let sc = self.atol + self.rtol * self.y[j].abs().max(self.y_new[j].abs());
                    err_sq += (e / sc) * (e / sc);
                }
                let err = (err_sq / n as f64).sqrt();
                if !err.is_finite() {
                    return Err(SimFailure::NonFinite);
                }

                if err <= 1.0 {
                    t += h_step;
                    std::mem::swap(&mut self.y, &mut self.y_new);
                    self.k.swap(0, 6); // accepted: k7 becomes next step's k1
                    h = h_step * (0.9 * err.powf(-0.2)).clamp(0.2, 5.0);
                } else {
                    h = h_step * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                }
                if h < h_min {
                    return Err(SimFailure::StepUnderflow);
                }
            }
            out.extend_from_slice(&self.y);
        }

        if out.iter().any(|&v| v < -self.atol) {
            return Err(SimFailure::NegativeState);
        }
        Ok(())
    }
}

fn validate_grid(c0: &[f64], times: &[f64], n_species: usize) -> Result<()> {
    if c0.len() != n_species {
        return Err(Error::DimensionMismatch(format!(
            "initial condition has {} entries for {} species",
            c0.len(),
            n_species
        )));
    }
    if c0.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::DimensionMismatch(
            "initial concentrations must be finite and nonnegative".into(),
        ));
    }
    if times.is_empty() || times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::DimensionMismatch(
            "time grid must be nonempty and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Integrates `model` from `c0` and samples the solution on `times`.
///
/// Solver trouble (step underflow, non-finite or negative states, step-limit
/// blowout) is reported in the trajectory status rather than as an error;
/// structurally invalid input is an error.
pub fn simulate(
    model: &dyn RateModel,
    theta: &[f64],
    c0: &[f64],
    times: &[f64],
) -> Result<Trajectory> {
    validate_grid(c0, times, model.n_species())?;
    if theta.len() != model.n_params() {
        return Err(Error::DimensionMismatch(format!(
            "{} rate constants for {} parameters",
            theta.len(),
            model.n_params()
        )));
    }
    let mut integrator = Integrator::new();
    let mut states = Vec::new();
    let status = match integrator.solve_grid(model, theta, c0, times, &mut states) {
        Ok(()) => TrajectoryStatus::Ok,
        Err(reason) => TrajectoryStatus::Failed(reason),
    };
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        n_species: model.n_species(),
        status,
    })
}

/// [`simulate`] using the model's own rate constants.
pub fn simulate_model(model: &KineticModel, c0: &[f64], times: &[f64]) -> Result<Trajectory> {
    simulate(model, &model.theta, c0, times)
}

type Rat = Ratio<i64>;

/// Integer basis of the conserved linear quantities of a kinetic model.
///
/// Returns all `w` (up to scaling) with `E w = 0`, where `E` is the model's
/// effective net-coefficient matrix; for every such `w` and any state,
/// `w . rhs(c) = 0` exactly, so `w . c(t)` is constant along ok trajectories.
/// Computed by exact rational elimination; vectors are scaled to the smallest
/// integers with a positive leading entry.
pub fn conserved_vectors(model: &KineticModel) -> Vec<Vec<i64>> {
    let effective = model.effective_matrix();
    let rows = effective.len();
    let cols = model.n_species;
    let mut mat: Vec<Vec<Rat>> = effective
        .iter()
        .map(|r| r.iter().map(|&v| Rat::from_integer(v)).collect())
        .collect();

    let mut pivots: Vec<usize> = Vec::new();
    let mut r = 0usize;
    for c in 0..cols {
        if r >= rows {
            break;
        }
        let Some(p) = (r..rows).find(|&i| !mat[i][c].is_zero()) else {
            continue;
        };
        mat.swap(r, p);
        let inv = mat[r][c];
        for x in &mut mat[r] {
            *x /= inv;
        }
        for i in 0..rows {
            if i != r && !mat[i][c].is_zero() {
                let f = mat[i][c];
                for j in 0..cols {
                    let sub = f * mat[r][j];
                    mat[i][j] -= sub;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }

    let mut basis = Vec::new();
    for free in (0..cols).filter(|c| !pivots.contains(c)) {
        let mut v = vec![Rat::zero(); cols];
        v[free] = Rat::from_integer(1);
        for (pi, &pc) in pivots.iter().enumerate() {
            v[pc] = -mat[pi][free];
        }
        let lcm = v
            .iter()
            .map(|x| *x.denom())
            .fold(1i64, |acc, d| acc / gcd(acc, d) * d);
        let mut ints: Vec<i64> = v.iter().map(|x| x.numer() * (lcm / x.denom())).collect();
        let g = ints.iter().fold(0i64, |acc, &x| gcd(acc, x.abs()));
        if g > 1 {
            for x in &mut ints {
                *x /= g;
            }
        }
        basis.push(ints);
    }
    basis
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.max(1)
    } else {
        gcd(b, a % b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genmech::MechanismMatrix;
    use crate::translate::to_kinetic_model;
    use approx::assert_relative_eq;

    fn grid(t0: f64, tf: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| t0 + (tf - t0) * i as f64 / (n - 1) as f64)
            .collect()
    }

    fn first_order_decay() -> KineticModel {
        let m = MechanismMatrix::from_rows(&[vec![-1, 1]]).unwrap();
        let mut model = to_kinetic_model(&m).unwrap();
        model.theta = vec![0.5];
        model
    }

    #[test]
    fn single_point_grid_returns_the_initial_condition() {
        let model = first_order_decay();
        let traj = simulate_model(&model, &[2.0, 0.0], &[0.0]).unwrap();
        assert!(traj.is_ok());
        assert_eq!(traj.states, vec![2.0, 0.0]);
    }

    #[test]
    fn matches_analytic_exponential_decay() {
        let model = first_order_decay();
        let times = grid(0.0, 10.0, 30);
        let traj = simulate_model(&model, &[4.0, 0.0], &times).unwrap();
        assert!(traj.is_ok());
        for (i, &t) in times.iter().enumerate() {
            let exact = 4.0 * (-0.5 * t).exp();
            assert_relative_eq!(traj.state(i)[0], exact, max_relative = 1e-6);
            assert_relative_eq!(traj.state(i)[1], 4.0 - exact, max_relative = 1e-6);
        }
    }

    #[test]
    fn conserves_linear_invariants_along_trajectories() {
        // A + B -> D, B + D -> C
        let m =
            MechanismMatrix::from_rows(&[vec![-1, -1, 0, 1], vec![0, -1, 1, -1]]).unwrap();
        let mut model = to_kinetic_model(&m).unwrap();
        model.theta = vec![0.7, 1.3];
        let basis = conserved_vectors(&model);
        assert_eq!(basis.len(), 2);
        let c0 = [1.5, 2.5, 0.3, 0.0];
        let times = grid(0.0, 8.0, 25);
        let traj = simulate_model(&model, &c0, &times).unwrap();
        assert!(traj.is_ok());
        for w in &basis {
            let dot =
                |c: &[f64]| -> f64 { w.iter().zip(c).map(|(&wi, &ci)| wi as f64 * ci).sum() };
            let reference = dot(&c0);
            for i in 0..times.len() {
                let drift = (dot(traj.state(i)) - reference).abs() / reference.abs().max(1.0);
                assert!(drift <= 1e-6, "drift {drift} for w={w:?}");
            }
        }
    }

    #[test]
    fn conserved_vectors_for_reference_mechanisms() {
        // single step A -> B conserves A + B
        let m = MechanismMatrix::from_rows(&[vec![-1, 1]]).unwrap();
        let model = to_kinetic_model(&m).unwrap();
        assert_eq!(conserved_vectors(&model), vec![vec![1, 1]]);

        // full-rank square net matrix has no conserved quantity
        let m = MechanismMatrix::from_rows(&[vec![-1, 1], vec![-2, 1]]).unwrap();
        let model = to_kinetic_model(&m).unwrap();
        assert!(conserved_vectors(&model).is_empty());
    }

    #[test]
    fn conservation_identity_is_exact_at_random_states() {
        use rand::Rng;
        let m =
            MechanismMatrix::from_rows(&[vec![-1, -1, 0, 1], vec![0, -1, 1, -1]]).unwrap();
        let mut model = to_kinetic_model(&m).unwrap();
        model.theta = vec![0.31, 2.17];
        let basis = conserved_vectors(&model);
        // (1,0,1,1) solves both step equations and must lie in the basis span
        let w = [1.0, 0.0, 1.0, 1.0];
        for row in [[-1.0, -1.0, 0.0, 1.0], [0.0, -1.0, 1.0, -1.0]] {
            let dot: f64 = w.iter().zip(row.iter()).map(|(a, b)| a * b).sum();
            assert_eq!(dot, 0.0);
        }
        let mut rng = crate::seed::rng(11);
        for _ in 0..100 {
            let c: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..10.0)).collect();
            let d = model.rhs(&c);
            for w in &basis {
                let dot: f64 = w.iter().zip(&d).map(|(&wi, &di)| wi as f64 * di).sum();
                assert!(dot.abs() <= 1e-12, "w={w:?} dot={dot}");
            }
        }
    }

    #[test]
    fn tolerance_halving_changes_little() {
        let model = first_order_decay();
        let times = grid(0.0, 10.0, 10);
        let mut tight = Integrator::with_tolerances(RTOL / 2.0, ATOL / 2.0);
        let mut loose = Integrator::with_tolerances(RTOL, ATOL);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        tight
            .solve_grid(&model, &model.theta, &[4.0, 0.0], &times, &mut a)
            .unwrap();
        loose
            .solve_grid(&model, &model.theta, &[4.0, 0.0], &times, &mut b)
            .unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 10.0 * RTOL * x.abs().max(1.0));
        }
    }

    #[test]
    fn determinism() {
        let model = first_order_decay();
        let times = grid(0.0, 10.0, 30);
        let a = simulate_model(&model, &[4.0, 0.0], &times).unwrap();
        let b = simulate_model(&model, &[4.0, 0.0], &times).unwrap();
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn structural_misuse_is_an_error_not_a_status() {
        let model = first_order_decay();
        assert!(simulate_model(&model, &[1.0], &[0.0, 1.0]).is_err());
        assert!(simulate_model(&model, &[-1.0, 0.0], &[0.0, 1.0]).is_err());
        assert!(simulate_model(&model, &[1.0, 0.0], &[1.0, 0.5]).is_err());
        assert!(simulate_model(&model, &[1.0, 0.0], &[]).is_err());
    }
}
