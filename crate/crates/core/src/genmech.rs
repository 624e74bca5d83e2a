//! Enumeration of physically feasible mechanism matrices.
//!
//! A mechanism is an integer matrix: one row per elementary step, one column
//! per species (observed species first, intermediates trailing), entries in
//! {-2..2} giving net stoichiometric coefficients. Feasibility rules:
//!
//! - **Row molecularity**: each step consumes one or two molecules and
//!   produces one or two molecules (no zero rows, no termolecular steps).
//! - **Stoichiometric consistency**: observed columns sum to the overall
//!   stoichiometry, intermediate columns sum to zero.
//! - **Species roles**: an overall reactant is never produced by a step and
//!   an overall product is never consumed by one.
//! - **Intermediate availability**: reading the rows as a sequence of events,
//!   the cumulative amount of every intermediate stays nonnegative after each
//!   step (an intermediate is never consumed before enough of it has been
//!   produced), and every intermediate takes part in at least one step.
//!
//! Two mechanisms that differ only in row order or in intermediate labels are
//! distinct candidates; the reference counts for the case-study grids (2, 31
//! and 10 candidates) are reproduced only under that convention.
//!
//! [`enumerate`] is a backtracking search with monotone pruning, split across
//! workers by complete assignments of the first row. [`enumerate_bruteforce`]
//! filters all 5^(r*c) raw matrices and serves as the correctness oracle.

use crate::problem::{IterationPlan, OverallReaction};
use crate::{exec, Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

/// Integer stoichiometric matrix of a candidate mechanism.
///
/// Row-major storage; ordering is lexicographic on the flattened entries,
/// which is also the order [`enumerate`] emits.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MechanismMatrix {
    n_steps: usize,
    n_species: usize,
    entries: Vec<i8>,
}

impl MechanismMatrix {
    pub fn new(n_steps: usize, n_species: usize, entries: Vec<i8>) -> Result<Self> {
        if entries.len() != n_steps * n_species {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix needs {} entries, got {}",
                n_steps,
                n_species,
                n_steps * n_species,
                entries.len()
            )));
        }
        Ok(Self {
            n_steps,
            n_species,
            entries,
        })
    }

    pub fn from_rows(rows: &[Vec<i8>]) -> Result<Self> {
        let n_steps = rows.len();
        let n_species = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_species) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Ok(Self {
            n_steps,
            n_species,
            entries: rows.concat(),
        })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_species(&self) -> usize {
        self.n_species
    }

    pub fn entry(&self, step: usize, species: usize) -> i8 {
        self.entries[step * self.n_species + species]
    }

    pub fn row(&self, step: usize) -> &[i8] {
        &self.entries[step * self.n_species..(step + 1) * self.n_species]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[i8]> {
        self.entries.chunks(self.n_species)
    }

    pub fn entries(&self) -> &[i8] {
        &self.entries
    }

    /// Column sum of `species` over all steps.
    pub fn column_sum(&self, species: usize) -> i32 {
        self.rows().map(|r| i32::from(r[species])).sum()
    }

    /// True if `other` is the same mechanism up to row permutation and
    /// relabeling of intermediate columns.
    pub fn isomorphic_to(&self, other: &MechanismMatrix, n_observed: usize) -> bool {
        if self.n_steps != other.n_steps || self.n_species != other.n_species {
            return false;
        }
        canonical_form(self, n_observed) == canonical_form(other, n_observed)
    }
}

impl fmt::Display for MechanismMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, row) in self.rows().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            let cells: Vec<String> = row.iter().map(|e| e.to_string()).collect();
            write!(f, "{}", cells.join(" "))?;
        }
        Ok(())
    }
}

/// Minimal representative over intermediate-column permutations and row order.
fn canonical_form(m: &MechanismMatrix, n_observed: usize) -> Vec<i8> {
    let n_int = m.n_species - n_observed;
    let mut perm: Vec<usize> = (0..n_int).collect();
    let mut best: Option<Vec<i8>> = None;
    permute(&mut perm, 0, &mut |p| {
        let mut rows: Vec<Vec<i8>> = m
            .rows()
            .map(|r| {
                let mut row = r[..n_observed].to_vec();
                row.extend(p.iter().map(|&k| r[n_observed + k]));
                row
            })
            .collect();
        rows.sort_unstable();
        let flat = rows.concat();
        if best.as_ref().is_none_or(|b| flat < *b) {
            best = Some(flat);
        }
    });
    best.unwrap_or_default()
}

fn permute(perm: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == perm.len() {
        visit(perm);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permute(perm, k + 1, visit);
        perm.swap(k, i);
    }
}

/// The first feasibility rule a matrix violates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuleViolation {
    /// A step with zero or more than two molecules on either side.
    RowMolecularity { step: usize },
    /// An observed column whose sum differs from the overall stoichiometry,
    /// or an intermediate column with nonzero sum.
    StoichConsistency { species: usize },
    /// An overall reactant produced, or an overall product consumed.
    SpeciesRole { species: usize },
    /// An intermediate consumed before enough of it was produced.
    IntermediateOrdering { species: usize },
    /// An intermediate column with no nonzero entry.
    UnusedIntermediate { species: usize },
}

impl fmt::Display for RuleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::RowMolecularity { step } => {
                write!(f, "row molecularity violated in step {step}")
            }
            Self::StoichConsistency { species } => {
                write!(f, "stoichiometric consistency violated in column {species}")
            }
            Self::SpeciesRole { species } => {
                write!(f, "species role violated in column {species}")
            }
            Self::IntermediateOrdering { species } => {
                write!(f, "intermediate ordering violated in column {species}")
            }
            Self::UnusedIntermediate { species } => {
                write!(f, "intermediate column {species} is unused")
            }
        }
    }
}

/// Checks all feasibility rules; `Ok(None)` means feasible.
///
/// Rules are reported in a fixed order: molecularity by row, then per column
/// (left to right) role, stoichiometric consistency, and the intermediate
/// availability rules.
pub fn check_feasible(
    m: &MechanismMatrix,
    overall: &OverallReaction,
) -> Result<Option<RuleViolation>> {
    let n_obs = overall.n_observed();
    if m.n_species < n_obs {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} columns but overall reaction names {} species",
            m.n_species, n_obs
        )));
    }
    for (i, row) in m.rows().enumerate() {
        let consumed: i32 = row.iter().filter(|&&e| e < 0).map(|&e| -i32::from(e)).sum();
        let produced: i32 = row.iter().filter(|&&e| e > 0).map(|&e| i32::from(e)).sum();
        if !(1..=2).contains(&consumed) || !(1..=2).contains(&produced) {
            return Ok(Some(RuleViolation::RowMolecularity { step: i }));
        }
    }
    for j in 0..m.n_species {
        if j < n_obs {
            let target = overall.stoich()[j];
            let role_ok = if target < 0 {
                (0..m.n_steps).all(|i| m.entry(i, j) <= 0)
            } else {
                (0..m.n_steps).all(|i| m.entry(i, j) >= 0)
            };
            if !role_ok {
                return Ok(Some(RuleViolation::SpeciesRole { species: j }));
            }
            if m.column_sum(j) != target {
                return Ok(Some(RuleViolation::StoichConsistency { species: j }));
            }
        } else {
            if m.column_sum(j) != 0 {
                return Ok(Some(RuleViolation::StoichConsistency { species: j }));
            }
            let mut running = 0i32;
            let mut touched = false;
            for i in 0..m.n_steps {
                let e = i32::from(m.entry(i, j));
                touched |= e != 0;
                running += e;
                if running < 0 {
                    return Ok(Some(RuleViolation::IntermediateOrdering { species: j }));
                }
            }
            if !touched {
                return Ok(Some(RuleViolation::UnusedIntermediate { species: j }));
            }
        }
    }
    Ok(None)
}

/// Raw search-space size 5^(steps * species), saturating at `u128::MAX`.
pub fn search_space_size(plan: &IterationPlan) -> u128 {
    let cells = (plan.n_steps * plan.n_species) as u32;
    5u128.checked_pow(cells).unwrap_or(u128::MAX)
}

/// All rows a step may take: molecularity-valid, role-valid, sorted
/// lexicographically.
fn candidate_rows(n_species: usize, stoich: &[i32]) -> Vec<Vec<i8>> {
    let may_consume =
        |j: usize| -> bool { j >= stoich.len() || stoich[j] < 0 };
    let may_produce =
        |j: usize| -> bool { j >= stoich.len() || stoich[j] > 0 };

    let mut reactant_parts: Vec<Vec<(usize, i8)>> = Vec::new();
    let mut product_parts: Vec<Vec<(usize, i8)>> = Vec::new();
    for j in 0..n_species {
        if may_consume(j) {
            reactant_parts.push(vec![(j, -1)]);
            reactant_parts.push(vec![(j, -2)]);
        }
        if may_produce(j) {
            product_parts.push(vec![(j, 1)]);
            product_parts.push(vec![(j, 2)]);
        }
    }
    for i in 0..n_species {
        for j in (i + 1)..n_species {
            if may_consume(i) && may_consume(j) {
                reactant_parts.push(vec![(i, -1), (j, -1)]);
            }
            if may_produce(i) && may_produce(j) {
                product_parts.push(vec![(i, 1), (j, 1)]);
            }
        }
    }

    let mut rows = Vec::with_capacity(reactant_parts.len() * product_parts.len());
    for rp in &reactant_parts {
        'prod: for pp in &product_parts {
            for (jr, _) in rp {
                if pp.iter().any(|(jp, _)| jp == jr) {
                    continue 'prod; // a species cannot appear on both sides of one step
                }
            }
            let mut row = vec![0i8; n_species];
            for &(j, v) in rp.iter().chain(pp) {
                row[j] = v;
            }
            rows.push(row);
        }
    }
    rows.sort_unstable();
    rows
}

struct Search<'a> {
    rows: &'a [Vec<i8>],
    target: Vec<i32>,
    n_obs: usize,
    n_steps: usize,
    n_species: usize,
    deadline: Option<Instant>,
    expired: &'a AtomicBool,
    node_counter: u64,
}

impl Search<'_> {
    /// Returns false if the budget expired while extending this subtree.
    fn dfs(
        &mut self,
        depth: usize,
        colsum: &mut [i32],
        nonzero: &mut [u16],
        chosen: &mut Vec<usize>,
        out: &mut Vec<MechanismMatrix>,
    ) -> bool {
        if depth == self.n_steps {
            // column sums are exact here thanks to the remaining-rows bound
            if (self.n_obs..self.n_species).all(|j| nonzero[j] > 0) {
                let mut entries = Vec::with_capacity(self.n_steps * self.n_species);
                for &ri in chosen.iter() {
                    entries.extend_from_slice(&self.rows[ri]);
                }
                out.push(MechanismMatrix {
                    n_steps: self.n_steps,
                    n_species: self.n_species,
                    entries,
                });
            }
            return true;
        }
        let rem = (self.n_steps - depth - 1) as i32;
        'rows: for (ri, row) in self.rows.iter().enumerate() {
            self.node_counter += 1;
            if self.node_counter % 4096 == 0 {
                if let Some(deadline) = self.deadline {
                    if self.expired.load(Ordering::Relaxed) || Instant::now() >= deadline {
                        self.expired.store(true, Ordering::Relaxed);
                        return false;
                    }
                }
            }
            for j in 0..self.n_species {
                let s = colsum[j] + i32::from(row[j]);
                if (self.target[j] - s).abs() > 2 * rem {
                    continue 'rows;
                }
                if j >= self.n_obs {
                    if s < 0 {
                        continue 'rows; // intermediate consumed before produced
                    }
                    // an untouched intermediate still needs a production and a
                    // later consumption, which takes at least two rows
                    if nonzero[j] == 0 && row[j] == 0 && rem < 2 {
                        continue 'rows;
                    }
                }
            }
            for j in 0..self.n_species {
                colsum[j] += i32::from(row[j]);
                nonzero[j] += u16::from(row[j] != 0);
            }
            chosen.push(ri);
            let keep_going = self.dfs(depth + 1, colsum, nonzero, chosen, out);
            chosen.pop();
            for j in 0..self.n_species {
                colsum[j] -= i32::from(row[j]);
                nonzero[j] -= u16::from(row[j] != 0);
            }
            if !keep_going {
                return false;
            }
        }
        true
    }
}

/// Enumerates every feasible mechanism of the planned dimensions.
///
/// Returns the matrices in lexicographic order of their flattened entries and
/// a completeness flag, which is `false` only if the wall-clock budget expired
/// before the search tree was exhausted (the partial results are still valid
/// feasible mechanisms). Output is independent of `workers`; the tree is split
/// across workers by complete assignments of the first row and per-subtree
/// results are concatenated in first-row order.
pub fn enumerate(
    plan: &IterationPlan,
    overall: &OverallReaction,
    time_budget: Option<Duration>,
    workers: usize,
) -> (Vec<MechanismMatrix>, bool) {
    let n_obs = overall.n_observed();
    let n_species = plan.n_species;
    let n_steps = plan.n_steps;
    if n_species < n_obs || n_steps == 0 {
        return (Vec::new(), true);
    }
    let mut target = vec![0i32; n_species];
    target[..n_obs].copy_from_slice(overall.stoich());

    let rows = candidate_rows(n_species, overall.stoich());
    let deadline = time_budget.map(|b| Instant::now() + b);
    let expired = AtomicBool::new(false);

    // depth-0 split: every viable first row becomes one worker task
    let rem0 = (n_steps - 1) as i32;
    let tasks: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter(|(_, row)| {
            (0..n_species).all(|j| {
                let s = i32::from(row[j]);
                (target[j] - s).abs() <= 2 * rem0
                    && (j < n_obs || (s >= 0 && !(row[j] == 0 && rem0 < 2)))
            })
        })
        .map(|(ri, _)| ri)
        .collect();

    let run_task = |first: usize| -> Vec<MechanismMatrix> {
        let mut search = Search {
            rows: &rows,
            target: target.clone(),
            n_obs,
            n_steps,
            n_species,
            deadline,
            expired: &expired,
            node_counter: 0,
        };
        let mut colsum = vec![0i32; n_species];
        let mut nonzero = vec![0u16; n_species];
        for j in 0..n_species {
            colsum[j] = i32::from(rows[first][j]);
            nonzero[j] = u16::from(rows[first][j] != 0);
        }
        let mut chosen = vec![first];
        let mut out = Vec::new();
        search.dfs(1, &mut colsum, &mut nonzero, &mut chosen, &mut out);
        out
    };

    let per_task: Vec<Vec<MechanismMatrix>> = if workers > 1 {
        exec::with_pool(workers, || exec::par_map(tasks, run_task))
    } else {
        tasks.into_iter().map(run_task).collect()
    };
    let mut found: Vec<MechanismMatrix> = per_task.into_iter().flatten().collect();
    found.sort_unstable();
    debug_assert!(found
        .iter()
        .all(|m| check_feasible(m, overall) == Ok(None)));
    (found, !expired.load(Ordering::Relaxed))
}

/// Filters all 5^(steps*species) raw matrices through [`check_feasible`].
///
/// Deliberately exhaustive: this is the oracle the backtracking enumerator is
/// checked against. Guarded to at most 10^9 raw matrices.
pub fn enumerate_bruteforce(
    plan: &IterationPlan,
    overall: &OverallReaction,
) -> Result<Vec<MechanismMatrix>> {
    let cells = plan.n_steps * plan.n_species;
    let total = 5u128.checked_pow(cells as u32).unwrap_or(u128::MAX);
    if total > 1_000_000_000 {
        return Err(Error::BruteForceGuard { cells });
    }
    let mut out = Vec::new();
    let mut digits = vec![0u8; cells]; // digit d encodes entry d-2
    loop {
        let entries: Vec<i8> = digits.iter().map(|&d| d as i8 - 2).collect();
        let m = MechanismMatrix {
            n_steps: plan.n_steps,
            n_species: plan.n_species,
            entries,
        };
        if check_feasible(&m, overall)? == None {
            out.push(m);
        }
        // odometer: least-significant digit is the last cell, so successive
        // matrices come out in lexicographic order of the flattened entries
        let mut pos = cells;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            if digits[pos] < 4 {
                digits[pos] += 1;
                break;
            }
            digits[pos] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::OverallReaction;

    fn overall(stoich: Vec<i32>) -> OverallReaction {
        let names = (b'A'..)
            .take(stoich.len())
            .map(|c| (c as char).to_string())
            .collect();
        OverallReaction::new(names, stoich).unwrap()
    }

    fn plan(n_steps: usize, n_species: usize, n_obs: usize) -> IterationPlan {
        IterationPlan {
            iteration_index: 1,
            n_steps,
            n_species,
            n_intermediates: n_species - n_obs,
        }
    }

    #[test]
    fn search_space_sizes_match_hand_arithmetic() {
        assert_eq!(search_space_size(&plan(4, 5, 3)), 95_367_431_640_625);
        assert_eq!(search_space_size(&plan(3, 4, 3)), 244_140_625);
        assert_eq!(search_space_size(&plan(1, 1, 1)), 5);
    }

    #[test]
    fn single_step_isomerization_has_one_mechanism() {
        let ov = overall(vec![-1, 1]);
        let (found, complete) = enumerate(&plan(1, 2, 2), &ov, None, 1);
        assert!(complete);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].entries(), &[-1, 1]);
    }

    #[test]
    fn case_study_grid_counts() {
        let hypo = overall(vec![-4, 1, 1]);
        assert_eq!(enumerate(&plan(2, 3, 3), &hypo, None, 1).0.len(), 2);
        assert_eq!(enumerate(&plan(3, 4, 3), &hypo, None, 1).0.len(), 31);
        let fructose = overall(vec![-1, 3, 1]);
        assert_eq!(enumerate(&plan(3, 5, 3), &fructose, None, 1).0.len(), 10);
        let aldol = overall(vec![-1, -1, 1, 1]);
        assert_eq!(enumerate(&plan(1, 4, 4), &aldol, None, 1).0.len(), 1);
    }

    #[test]
    fn feasibility_examples() {
        // A + 2B -> C with intermediate D
        let ov = overall(vec![-1, -2, 1]);
        let m = MechanismMatrix::from_rows(&[vec![-1, -1, 0, 1], vec![0, -1, 1, -1]]).unwrap();
        assert_eq!(check_feasible(&m, &ov).unwrap(), None);

        let hypo = overall(vec![-4, 1, 1]);
        let m = MechanismMatrix::from_rows(&[vec![-2, 1, 0], vec![-2, 0, 1]]).unwrap();
        assert_eq!(check_feasible(&m, &hypo).unwrap(), None);

        // zero-reactant row
        let ov4 = overall(vec![-1, -1, 1, 1]);
        let m = MechanismMatrix::from_rows(&[vec![0, 0, 0, 1], vec![-1, -1, 1, -1]]).unwrap();
        assert_eq!(
            check_feasible(&m, &ov4).unwrap(),
            Some(RuleViolation::RowMolecularity { step: 0 })
        );

        // intermediate consumed in step 0, produced in step 1
        let ov2 = overall(vec![-2, 1]);
        let m = MechanismMatrix::from_rows(&[vec![-1, 1, -1], vec![-1, 0, 1]]).unwrap();
        assert_eq!(
            check_feasible(&m, &ov2).unwrap(),
            Some(RuleViolation::IntermediateOrdering { species: 2 })
        );
    }

    #[test]
    fn role_rule_is_reported() {
        let hypo = overall(vec![-4, 1, 1]);
        // step 1 consumes the overall product B
        let m =
            MechanismMatrix::from_rows(&[vec![-2, 2, 0], vec![-1, -1, 1], vec![-1, 0, 1]])
                .unwrap();
        assert_eq!(
            check_feasible(&m, &hypo).unwrap(),
            Some(RuleViolation::SpeciesRole { species: 1 })
        );
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let ov = overall(vec![-1, -1, 1, 1]);
        let m = MechanismMatrix::from_rows(&[vec![-1, 1]]).unwrap();
        assert!(check_feasible(&m, &ov).is_err());
    }

    #[test]
    fn bruteforce_guard_trips() {
        let ov = overall(vec![-4, 1, 1]);
        assert!(matches!(
            enumerate_bruteforce(&plan(4, 5, 3), &ov),
            Err(Error::BruteForceGuard { .. })
        ));
    }

    #[test]
    fn backtracking_matches_bruteforce_on_small_grids() {
        for (p, ov) in [
            (plan(2, 3, 3), overall(vec![-4, 1, 1])),
            (plan(1, 4, 4), overall(vec![-1, -1, 1, 1])),
            (plan(2, 4, 3), overall(vec![-1, -2, 1])),
        ] {
            let oracle = enumerate_bruteforce(&p, &ov).unwrap();
            let (fast, complete) = enumerate(&p, &ov, None, 1);
            assert!(complete);
            assert_eq!(fast, oracle);
        }
    }

    #[test]
    fn output_is_sorted_and_worker_independent() {
        let hypo = overall(vec![-4, 1, 1]);
        let p = plan(3, 4, 3);
        let (w1, c1) = enumerate(&p, &hypo, None, 1);
        let (w2, _) = enumerate(&p, &hypo, None, 2);
        let (w8, _) = enumerate(&p, &hypo, None, 8);
        assert!(c1);
        assert_eq!(w1, w2);
        assert_eq!(w1, w8);
        assert!(w1.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn expired_budget_reports_incomplete() {
        let hypo = overall(vec![-4, 1, 1]);
        let p = plan(5, 6, 3);
        let (partial, complete) = enumerate(&p, &hypo, Some(Duration::ZERO), 1);
        assert!(!complete);
        for m in &partial {
            assert_eq!(check_feasible(m, &hypo).unwrap(), None);
        }
    }

    #[test]
    fn isomorphism_ignores_row_order_and_intermediate_labels() {
        let a = MechanismMatrix::from_rows(&[
            vec![-1, 1, 0, 1, 0],
            vec![0, 1, 0, -1, 1],
            vec![0, 1, 1, 0, -1],
        ])
        .unwrap();
        // same chain with D and E labels swapped and rows shuffled
        let b = MechanismMatrix::from_rows(&[
            vec![0, 1, 0, 1, -1],
            vec![-1, 1, 0, 0, 1],
            vec![0, 1, 1, -1, 0],
        ])
        .unwrap();
        assert!(a.isomorphic_to(&b, 3));
        let c = MechanismMatrix::from_rows(&[
            vec![-1, 1, 0, 1, 0],
            vec![0, 1, 0, -1, 1],
            vec![0, 2, 0, 0, -1],
        ])
        .unwrap();
        assert!(!a.isomorphic_to(&c, 3));
    }
}
