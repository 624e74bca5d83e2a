//! Built-in synthetic case studies: ground-truth kinetics, factorial initial
//! conditions, observation masks, and seeded Gaussian measurement noise.

use crate::genmech::MechanismMatrix;
use crate::integrate::{simulate, RateModel};
use crate::problem::{OverallReaction, ProblemSpec};
use crate::translate::{to_kinetic_model, KineticModel};
use crate::{seed, Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

/// Identifier of a bundled case study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseName {
    /// 4A -> B + C through four elementary steps, two hidden intermediates.
    Hypothetical,
    /// Aldol condensation A + B -> C + D with hidden enolate and adduct.
    Aldol,
    /// Fructose dehydration A -> 3B + C driven by an acid-catalyzed rate law.
    Fructose,
}

impl FromStr for CaseName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hypothetical" => Ok(Self::Hypothetical),
            "aldol" => Ok(Self::Aldol),
            "fructose" => Ok(Self::Fructose),
            other => Err(Error::UnknownCase(other.to_string())),
        }
    }
}

impl std::fmt::Display for CaseName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Hypothetical => write!(f, "hypothetical"),
            Self::Aldol => write!(f, "aldol"),
            Self::Fructose => write!(f, "fructose"),
        }
    }
}

/// Second-order rate law for the fructose dehydration, `r = k C_A C_acid`
/// with Arrhenius-corrected `k = theta * exp(-Ea / (R T))` at fixed
/// temperature. Species balances follow `dC_i/dt = nu_i * r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FructoseRateLaw {
    pub acid_conc: f64,
    pub activation_energy: f64,
    pub temperature: f64,
    pub nu: [f64; 3],
}

impl FructoseRateLaw {
    const GAS_CONSTANT: f64 = 8.314;

    pub fn reference() -> Self {
        Self {
            acid_conc: 3.3e-2,
            activation_energy: 124.0,
            temperature: 410.15,
            nu: [-1.0, 3.0, 1.0],
        }
    }

    /// `exp(-Ea / (R T))`, the fixed Arrhenius factor.
    pub fn arrhenius(&self) -> f64 {
        (-self.activation_energy / (Self::GAS_CONSTANT * self.temperature)).exp()
    }

    /// Effective first-order constant `theta * arrhenius * C_acid`.
    pub fn effective_rate(&self, theta: f64) -> f64 {
        theta * self.arrhenius() * self.acid_conc
    }
}

impl RateModel for FructoseRateLaw {
    fn n_species(&self) -> usize {
        3
    }

    fn n_params(&self) -> usize {
        1
    }

    fn rhs_into(&self, theta: &[f64], c: &[f64], out: &mut [f64]) {
        let r = self.effective_rate(theta[0]) * c[0];
        for (o, nu) in out.iter_mut().zip(self.nu) {
            *o = nu * r;
        }
    }
}

/// Ground truth of a case study: either a full mechanism or a literature rate
/// law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TruthModel {
    Mechanism(KineticModel),
    RateLaw(FructoseRateLaw),
}

impl TruthModel {
    pub fn as_rate_model(&self) -> &dyn RateModel {
        match self {
            Self::Mechanism(m) => m,
            Self::RateLaw(l) => l,
        }
    }
}

/// Everything needed to regenerate one case study's dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseStudy {
    pub name: CaseName,
    pub species_names: Vec<String>,
    pub observed_mask: Vec<bool>,
    pub truth: TruthModel,
    pub theta_true: Vec<f64>,
    /// Full-species initial conditions, one per experiment.
    pub experiments: Vec<Vec<f64>>,
    pub t_span: (f64, f64),
    pub n_times: usize,
    /// Measurement noise standard deviation per observed species.
    pub noise_sd: Vec<f64>,
    /// Search dimensions used for this case's discovery runs.
    pub min_steps: usize,
    pub min_species: usize,
    pub time_unit: String,
}

impl CaseStudy {
    pub fn n_observed(&self) -> usize {
        self.observed_mask.iter().filter(|&&b| b).count()
    }

    pub fn observed_names(&self) -> Vec<String> {
        self.species_names
            .iter()
            .zip(&self.observed_mask)
            .filter(|(_, &obs)| obs)
            .map(|(n, _)| n.clone())
            .collect()
    }

    /// The evenly spaced sampling grid, endpoints included.
    pub fn times(&self) -> Vec<f64> {
        let (t0, tf) = self.t_span;
        (0..self.n_times)
            .map(|i| t0 + (tf - t0) * i as f64 / (self.n_times - 1) as f64)
            .collect()
    }

    /// Overall stoichiometry restricted to the observed species.
    pub fn overall(&self) -> OverallReaction {
        let stoich = match self.name {
            CaseName::Hypothetical => vec![-4, 1, 1],
            CaseName::Aldol => vec![-1, -1, 1, 1],
            CaseName::Fructose => vec![-1, 3, 1],
        };
        OverallReaction::new(self.observed_names(), stoich).expect("case stoichiometry")
    }

    /// The discovery configuration the case was designed to run with.
    pub fn problem_spec(&self) -> ProblemSpec {
        let mut spec = ProblemSpec::new(self.overall(), self.min_steps, self.min_species);
        spec.noise_model = Some(self.noise_sd.clone());
        spec
    }
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn truth_mechanism(rows: &[Vec<i8>], theta: Vec<f64>) -> TruthModel {
    let matrix = MechanismMatrix::from_rows(rows).expect("truth matrix");
    let mut model = to_kinetic_model(&matrix).expect("truth model");
    model.theta = theta;
    TruthModel::Mechanism(model)
}

/// Returns one of the three bundled case studies.
pub fn case(name: CaseName) -> CaseStudy {
    match name {
        CaseName::Hypothetical => CaseStudy {
            name,
            species_names: names(&["A", "B", "C", "D", "E"]),
            observed_mask: vec![true, true, true, false, false],
            truth: truth_mechanism(
                &[
                    vec![-2, 1, 0, 0, 0],
                    vec![-1, 0, 0, 1, 0],
                    vec![0, 0, 0, -1, 1],
                    vec![-1, 0, 1, 0, -1],
                ],
                vec![0.1, 0.2, 0.13, 0.25],
            ),
            theta_true: vec![0.1, 0.2, 0.13, 0.25],
            experiments: vec![
                vec![10.0, 0.0, 2.0, 0.0, 0.0],
                vec![10.0, 2.0, 0.0, 0.0, 0.0],
                vec![10.0, 2.0, 2.0, 0.0, 0.0],
                vec![5.0, 0.0, 0.0, 0.0, 0.0],
                vec![10.0, 0.0, 0.0, 0.0, 0.0],
            ],
            t_span: (0.0, 10.0),
            n_times: 30,
            noise_sd: vec![0.15, 0.15, 0.15],
            min_steps: 2,
            min_species: 3,
            time_unit: "h".into(),
        },
        CaseName::Aldol => CaseStudy {
            name,
            species_names: names(&["A", "B", "C", "D", "E", "F"]),
            observed_mask: vec![true, true, true, true, false, false],
            truth: truth_mechanism(
                &[
                    vec![-1, 0, 0, 0, 1, 0],
                    vec![0, -1, 0, 0, -1, 1],
                    vec![0, 0, 1, 1, 0, -1],
                ],
                vec![0.759, 0.293, 0.681],
            ),
            theta_true: vec![0.759, 0.293, 0.681],
            experiments: vec![
                vec![5.0, 10.0, 0.0, 0.0, 0.0, 0.0],
                vec![5.0, 5.0, 2.0, 0.0, 0.0, 0.0],
                vec![5.0, 10.0, 0.0, 2.0, 0.0, 0.0],
                vec![10.0, 10.0, 0.0, 2.0, 0.0, 0.0],
                vec![10.0, 10.0, 2.0, 2.0, 0.0, 0.0],
            ],
            t_span: (0.0, 10.0),
            n_times: 30,
            noise_sd: vec![0.15, 0.15, 0.15, 0.15],
            min_steps: 1,
            min_species: 4,
            time_unit: "h".into(),
        },
        CaseName::Fructose => CaseStudy {
            name,
            species_names: names(&["A", "B", "C"]),
            observed_mask: vec![true, true, true],
            truth: TruthModel::RateLaw(FructoseRateLaw::reference()),
            theta_true: vec![0.9],
            experiments: vec![
                vec![4.0, 0.0, 0.0],
                vec![6.0, 2.0, 1.0],
                vec![4.0, 2.0, 0.0],
                vec![4.0, 0.0, 1.0],
                vec![6.0, 2.0, 0.0],
            ],
            t_span: (0.0, 90.0),
            n_times: 30,
            noise_sd: vec![0.2, 0.2, 0.2],
            min_steps: 3,
            min_species: 5,
            time_unit: "min".into(),
        },
    }
}

/// Parses a case name and returns its study.
pub fn case_by_name(name: &str) -> Result<CaseStudy> {
    Ok(case(name.parse()?))
}

/// One measured experiment: known initial condition plus noisy observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    /// Initial concentrations of the observed species (the experiment's
    /// design variables, known exactly).
    pub c0_observed: Vec<f64>,
    /// Observations, row-major `n_t x n_observed`.
    pub y: Vec<f64>,
}

impl Experiment {
    pub fn observation(&self, t_index: usize, n_observed: usize) -> &[f64] {
        &self.y[t_index * n_observed..(t_index + 1) * n_observed]
    }
}

/// A set of experiments sharing one time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub observed_names: Vec<String>,
    pub times: Vec<f64>,
    pub experiments: Vec<Experiment>,
    pub seed: u64,
}

impl Dataset {
    pub fn n_observed(&self) -> usize {
        self.observed_names.len()
    }

    /// Total scalar observation count (experiments x times x species).
    pub fn n_obs_total(&self) -> usize {
        self.experiments.len() * self.times.len() * self.n_observed()
    }
}

/// Simulates the ground truth on the case grid, drops unobserved species, and
/// adds seeded i.i.d. Gaussian noise. Pure function of `(cs, seed)`.
///
/// Noise is drawn experiment by experiment, time by time, species by species
/// from a ChaCha8 stream, and is not clipped at zero.
pub fn generate(cs: &CaseStudy, seed_value: u64) -> Result<Dataset> {
    let times = cs.times();
    let n_obs = cs.n_observed();
    let model = cs.truth.as_rate_model();
    let mut rng = seed::rng(seed_value);
    let mut experiments = Vec::with_capacity(cs.experiments.len());
    for c0 in &cs.experiments {
        let traj = simulate(model, &cs.theta_true, c0, &times)?;
        if !traj.is_ok() {
            return Err(Error::TruthSimulationFailed(format!(
                "case {} at c0 {:?}: {:?}",
                cs.name, c0, traj.status
            )));
        }
        let mut y = Vec::with_capacity(times.len() * n_obs);
        for ti in 0..times.len() {
            let state = traj.state(ti);
            for j in 0..n_obs {
                let clean = state[j];
                let z: f64 = rng.sample(StandardNormal);
                y.push(clean + cs.noise_sd[j] * z);
            }
        }
        experiments.push(Experiment {
            c0_observed: c0[..n_obs].to_vec(),
            y,
        });
    }
    Ok(Dataset {
        observed_names: cs.observed_names(),
        times,
        experiments,
        seed: seed_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn case_parameters_match_the_references() {
        let hypo = case(CaseName::Hypothetical);
        assert_eq!(hypo.theta_true, vec![0.1, 0.2, 0.13, 0.25]);
        assert_eq!(hypo.experiments.len(), 5);
        assert_eq!(hypo.n_times, 30);

        let aldol = case(CaseName::Aldol);
        assert_eq!(aldol.experiments[0], vec![5.0, 10.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(aldol.observed_names(), vec!["A", "B", "C", "D"]);

        let fructose = case(CaseName::Fructose);
        assert_eq!(fructose.noise_sd, vec![0.2, 0.2, 0.2]);
        assert_eq!(fructose.t_span, (0.0, 90.0));
    }

    #[test]
    fn unknown_case_is_an_error() {
        assert!(matches!(
            case_by_name("nope"),
            Err(Error::UnknownCase(_))
        ));
    }

    #[test]
    fn fructose_decay_matches_the_closed_form() {
        let cs = case(CaseName::Fructose);
        let law = FructoseRateLaw::reference();
        let k_eff = law.effective_rate(0.9);
        let times = cs.times();
        let traj = simulate(cs.truth.as_rate_model(), &cs.theta_true, &[4.0, 0.0, 0.0], &times)
            .unwrap();
        assert!(traj.is_ok());
        for (i, &t) in times.iter().enumerate() {
            let exact = 4.0 * (-k_eff * t).exp();
            assert_relative_eq!(traj.state(i)[0], exact, max_relative = 1e-6);
            // water appears three times faster than fructose disappears
            assert_relative_eq!(traj.state(i)[1], 3.0 * (4.0 - exact), max_relative = 1e-6);
        }
    }

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        let cs = case(CaseName::Hypothetical);
        assert_eq!(generate(&cs, 3).unwrap(), generate(&cs, 3).unwrap());
        assert_ne!(generate(&cs, 3).unwrap(), generate(&cs, 4).unwrap());
    }

    #[test]
    fn zero_noise_reproduces_the_clean_trajectory() {
        let mut cs = case(CaseName::Aldol);
        cs.noise_sd = vec![0.0; 4];
        let data = generate(&cs, 0).unwrap();
        let times = cs.times();
        let traj = simulate(
            cs.truth.as_rate_model(),
            &cs.theta_true,
            &cs.experiments[0],
            &times,
        )
        .unwrap();
        for ti in 0..times.len() {
            for j in 0..4 {
                assert_eq!(data.experiments[0].observation(ti, 4)[j], traj.state(ti)[j]);
            }
        }
    }

    #[test]
    fn dataset_shape_is_five_by_thirty() {
        let cs = case(CaseName::Fructose);
        let data = generate(&cs, 9).unwrap();
        assert_eq!(data.experiments.len(), 5);
        assert_eq!(data.times.len(), 30);
        assert_eq!(data.n_obs_total(), 450);
    }

    #[test]
    fn noise_variance_is_close_to_nominal() {
        let cs = case(CaseName::Hypothetical);
        let data = generate(&cs, 0).unwrap();
        let times = cs.times();
        let model = cs.truth.as_rate_model();
        let mut sq_sum = 0.0;
        let mut count = 0usize;
        for (exp, c0) in data.experiments.iter().zip(&cs.experiments) {
            let traj = simulate(model, &cs.theta_true, c0, &times).unwrap();
            for ti in 0..times.len() {
                for j in 0..3 {
                    let resid = exp.observation(ti, 3)[j] - traj.state(ti)[j];
                    sq_sum += resid * resid;
                    count += 1;
                }
            }
        }
        let var = sq_sum / count as f64;
        let nominal = 0.15 * 0.15;
        assert!(
            (var - nominal).abs() <= 0.25 * nominal,
            "sample variance {var} vs nominal {nominal}"
        );
    }
}
