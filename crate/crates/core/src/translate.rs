//! Translation of mechanism matrices into reaction strings and executable
//! mass-action rate models.

use crate::genmech::MechanismMatrix;
use crate::integrate::RateModel;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// One elementary reaction, decoded from a matrix row.
///
/// Multiplicities are 1 or 2; the reactant and product species sets are
/// disjoint by construction of the matrix representation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementaryStep {
    pub reactants: Vec<(usize, u8)>,
    pub products: Vec<(usize, u8)>,
    /// Zero-based index of the rate constant driving this step.
    pub rate_index: usize,
}

/// An executable microkinetic model: elementary steps plus rate constants.
///
/// The rate of step `i` is `theta[i] * prod(c[j]^m)` over its reactants
/// `(j, m)`. The species balance applies each step rate with unit magnitude
/// to every reactant column and with the stoichiometric coefficient to every
/// product column, so rate constants absorb reactant stoichiometric factors
/// (a `2X -> Y` step depletes X at rate `r`, not `2r`). The bundled case
/// studies and their reference rate constants use this convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticModel {
    pub steps: Vec<ElementaryStep>,
    pub n_species: usize,
    /// Rate constants, one per step. Unset (zeros) until fitted.
    pub theta: Vec<f64>,
}

impl KineticModel {
    pub fn n_params(&self) -> usize {
        self.steps.len()
    }

    /// Mass-action derivative at concentrations `c` using `self.theta`.
    pub fn rhs(&self, c: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_species];
        RateModel::rhs_into(self, &self.theta, c, &mut out);
        out
    }

    /// Net coefficients as applied by the rate law: −1 per reactant column,
    /// +multiplicity per product column. Conservation analysis must use this
    /// matrix rather than the raw mechanism matrix.
    pub fn effective_matrix(&self) -> Vec<Vec<i64>> {
        self.steps
            .iter()
            .map(|step| {
                let mut row = vec![0i64; self.n_species];
                for &(j, _) in &step.reactants {
                    row[j] = -1;
                }
                for &(j, m) in &step.products {
                    row[j] = i64::from(m);
                }
                row
            })
            .collect()
    }
}

impl RateModel for KineticModel {
    fn n_species(&self) -> usize {
        self.n_species
    }

    fn n_params(&self) -> usize {
        self.steps.len()
    }

    fn rhs_into(&self, theta: &[f64], c: &[f64], out: &mut [f64]) {
        debug_assert_eq!(theta.len(), self.steps.len());
        debug_assert_eq!(c.len(), self.n_species);
        out.fill(0.0);
        for (step, &k) in self.steps.iter().zip(theta) {
            let mut rate = k;
            for &(j, m) in &step.reactants {
                let cj = c[j];
                rate *= if m == 2 { cj * cj } else { cj };
            }
            for &(j, _) in &step.reactants {
                out[j] -= rate;
            }
            for &(j, m) in &step.products {
                out[j] += f64::from(m) * rate;
            }
        }
    }
}

fn decode_row(row: &[i8], rate_index: usize) -> Result<ElementaryStep> {
    let mut reactants = Vec::new();
    let mut products = Vec::new();
    for (j, &e) in row.iter().enumerate() {
        match e {
            -2 | -1 => reactants.push((j, (-e) as u8)),
            1 | 2 => products.push((j, e as u8)),
            0 => {}
            _ => {
                return Err(Error::InfeasibleMatrix(format!(
                    "entry {e} outside -2..=2 in step {rate_index}"
                )))
            }
        }
    }
    let consumed: u8 = reactants.iter().map(|&(_, m)| m).sum();
    let produced: u8 = products.iter().map(|&(_, m)| m).sum();
    if !(1..=2).contains(&consumed) || !(1..=2).contains(&produced) {
        return Err(Error::InfeasibleMatrix(format!(
            "step {rate_index} violates molecularity"
        )));
    }
    Ok(ElementaryStep {
        reactants,
        products,
        rate_index,
    })
}

/// Builds the executable rate model for a mechanism (theta left at zero).
pub fn to_kinetic_model(m: &MechanismMatrix) -> Result<KineticModel> {
    let steps: Result<Vec<ElementaryStep>> = m
        .rows()
        .enumerate()
        .map(|(i, row)| decode_row(row, i))
        .collect();
    let steps = steps?;
    Ok(KineticModel {
        theta: vec![0.0; steps.len()],
        n_species: m.n_species(),
        steps,
    })
}

/// Species names for an `n_species`-column matrix: the observed names first,
/// then fresh single letters (continuing past every used letter) for the
/// intermediates.
pub fn species_names(observed: &[String], n_species: usize) -> Vec<String> {
    let mut names: Vec<String> = observed.to_vec();
    for letter in b'A'..=b'Z' {
        if names.len() >= n_species {
            break;
        }
        let candidate = (letter as char).to_string();
        if !names.contains(&candidate) {
            names.push(candidate);
        }
    }
    let mut k = 1;
    while names.len() < n_species {
        let candidate = format!("I{k}");
        if !names.contains(&candidate) {
            names.push(candidate);
        }
        k += 1;
    }
    names
}

fn format_side(side: &[(usize, u8)], names: &[String]) -> String {
    side.iter()
        .map(|&(j, m)| {
            if m == 2 {
                format!("2{}", names[j])
            } else {
                names[j].clone()
            }
        })
        .collect::<Vec<_>>()
        .join(" + ")
}

/// One reaction string per matrix row, e.g. `"A + B -> D"` or `"2A -> B"`.
///
/// Grammar: `term ("+" term)* "->" term ("+" term)*`, where a term is an
/// optional multiplicity digit followed by a species name. The row index is
/// the step's rate-constant subscript.
pub fn to_reaction_strings(m: &MechanismMatrix, names: &[String]) -> Result<Vec<String>> {
    if names.len() != m.n_species() {
        return Err(Error::DimensionMismatch(format!(
            "{} names for {} species columns",
            names.len(),
            m.n_species()
        )));
    }
    m.rows()
        .enumerate()
        .map(|(i, row)| {
            let step = decode_row(row, i)?;
            Ok(format!(
                "{} -> {}",
                format_side(&step.reactants, names),
                format_side(&step.products, names)
            ))
        })
        .collect()
}

fn parse_side(side: &str, names: &[String]) -> Result<Vec<(usize, u8)>> {
    let mut out: Vec<(usize, u8)> = Vec::new();
    for term in side.split('+') {
        let term = term.trim();
        if term.is_empty() {
            return Err(Error::Parse(format!("empty term in `{side}`")));
        }
        let (mult, name) = match term.strip_prefix('2') {
            Some(rest) if !rest.is_empty() => (2u8, rest.trim()),
            _ => (1u8, term),
        };
        let j = names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Parse(format!("unknown species `{name}`")))?;
        match out.iter_mut().find(|(idx, _)| *idx == j) {
            Some((_, m)) => *m += mult,
            None => out.push((j, mult)),
        }
    }
    Ok(out)
}

/// Parses one reaction string back into an [`ElementaryStep`]. Inverse of
/// [`to_reaction_strings`] for well-formed mechanisms.
pub fn parse_reaction_string(
    line: &str,
    names: &[String],
    rate_index: usize,
) -> Result<ElementaryStep> {
    let (lhs, rhs) = line
        .split_once("->")
        .ok_or_else(|| Error::Parse(format!("missing `->` in `{line}`")))?;
    Ok(ElementaryStep {
        reactants: parse_side(lhs, names)?,
        products: parse_side(rhs, names)?,
        rate_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn names(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    fn eq_example_matrix() -> MechanismMatrix {
        MechanismMatrix::from_rows(&[vec![-1, -1, 0, 1], vec![0, -1, 1, -1]]).unwrap()
    }

    #[test]
    fn reaction_strings_match_reference_forms() {
        let strings =
            to_reaction_strings(&eq_example_matrix(), &names(&["A", "B", "C", "D"])).unwrap();
        assert_eq!(strings, vec!["A + B -> D", "B + D -> C"]);

        let m = MechanismMatrix::from_rows(&[vec![-2, 1, 0]]).unwrap();
        assert_eq!(
            to_reaction_strings(&m, &names(&["A", "B", "C"])).unwrap(),
            vec!["2A -> B"]
        );

        let m = MechanismMatrix::from_rows(&[vec![-1, 1]]).unwrap();
        assert_eq!(
            to_reaction_strings(&m, &names(&["A", "B"])).unwrap(),
            vec!["A -> B"]
        );
    }

    #[test]
    fn intermediate_names_continue_after_observed() {
        assert_eq!(
            species_names(&names(&["A", "B", "C"]), 5),
            names(&["A", "B", "C", "D", "E"])
        );
        assert_eq!(
            species_names(&names(&["A", "B", "C", "D"]), 6),
            names(&["A", "B", "C", "D", "E", "F"])
        );
    }

    #[test]
    fn kinetic_model_reproduces_reference_odes() {
        // A + B -> D, B + D -> C with unit rate constants
        let mut model = to_kinetic_model(&eq_example_matrix()).unwrap();
        model.theta = vec![1.0, 1.0];
        let d = model.rhs(&[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(d, vec![-1.0, -1.0, 0.0, 1.0]);

        // at c = (2, 3, 0, 5): r1 = 6, r2 = 15
        let d = model.rhs(&[2.0, 3.0, 0.0, 5.0]);
        assert_abs_diff_eq!(d[0], -6.0);
        assert_abs_diff_eq!(d[1], -21.0);
        assert_abs_diff_eq!(d[2], 15.0);
        assert_abs_diff_eq!(d[3], -9.0);
    }

    #[test]
    fn squared_reactant_and_unit_coefficient_convention() {
        // 2A -> B: dA/dt = -k c_A^2, dB/dt = +k c_A^2
        let m = MechanismMatrix::from_rows(&[vec![-2, 1]]).unwrap();
        let mut model = to_kinetic_model(&m).unwrap();
        model.theta = vec![0.5];
        let d = model.rhs(&[3.0, 0.0]);
        assert_abs_diff_eq!(d[0], -4.5);
        assert_abs_diff_eq!(d[1], 4.5);

        // X -> 2Y: the product coefficient is applied as written
        let m = MechanismMatrix::from_rows(&[vec![-1, 2]]).unwrap();
        let mut model = to_kinetic_model(&m).unwrap();
        model.theta = vec![1.0];
        let d = model.rhs(&[1.0, 0.0]);
        assert_abs_diff_eq!(d[0], -1.0);
        assert_abs_diff_eq!(d[1], 2.0);
    }

    #[test]
    fn zero_rate_constant_means_zero_rhs() {
        let m = MechanismMatrix::from_rows(&[vec![-1, 1]]).unwrap();
        let model = to_kinetic_model(&m).unwrap(); // theta stays zero
        assert_eq!(model.rhs(&[4.0, 1.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn rhs_vanishes_at_zero_concentration() {
        let mut model = to_kinetic_model(&eq_example_matrix()).unwrap();
        model.theta = vec![2.0, 3.0];
        assert_eq!(model.rhs(&[0.0; 4]), vec![0.0; 4]);
    }

    #[test]
    fn infeasible_rows_are_rejected() {
        let m = MechanismMatrix::from_rows(&[vec![0, 0, 0, 1]]).unwrap();
        assert!(to_kinetic_model(&m).is_err());
        let m = MechanismMatrix::from_rows(&[vec![-1, -1, -1, 1]]).unwrap();
        assert!(to_kinetic_model(&m).is_err());
    }

    #[test]
    fn strings_parse_back_to_the_same_steps() {
        let m = MechanismMatrix::from_rows(&[
            vec![-2, 1, 0, 0, 0],
            vec![-1, 0, 0, 1, 0],
            vec![0, 0, 0, -1, 1],
            vec![-1, 0, 1, 0, -1],
        ])
        .unwrap();
        let names = species_names(&names(&["A", "B", "C"]), 5);
        let strings = to_reaction_strings(&m, &names).unwrap();
        let model = to_kinetic_model(&m).unwrap();
        for (i, line) in strings.iter().enumerate() {
            let parsed = parse_reaction_string(line, &names, i).unwrap();
            assert_eq!(parsed, model.steps[i]);
        }
    }
}
