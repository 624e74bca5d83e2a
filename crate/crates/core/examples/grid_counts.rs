//! Prints feasible-mechanism counts and timings for the case-study grids.

use mechfind::genmech::enumerate;
use mechfind::problem::{IterationPlan, OverallReaction};
use std::time::Instant;

fn main() {
    let cases = [
        ("hypothetical 4A->B+C", vec![-4, 1, 1], 2usize, 3usize, 4usize),
        ("aldol A+B->C+D", vec![-1, -1, 1, 1], 1, 4, 4),
        ("fructose A->3B+C", vec![-1, 3, 1], 3, 5, 3),
    ];
    for (name, stoich, min_steps, min_species, max_iter) in cases {
        let names = (b'A'..)
            .take(stoich.len())
            .map(|c| (c as char).to_string())
            .collect();
        let overall = OverallReaction::new(names, stoich).unwrap();
        println!("{name}:");
        for it in 0..max_iter {
            let plan = IterationPlan {
                iteration_index: it + 1,
                n_steps: min_steps + it,
                n_species: min_species + it,
                n_intermediates: min_species + it - overall.n_observed(),
            };
            let t0 = Instant::now();
            let (found, complete) = enumerate(&plan, &overall, None, 2);
            println!(
                "  iter {} ({}x{}): {} mechanisms, complete={}, {:.2?}",
                it + 1,
                plan.n_steps,
                plan.n_species,
                found.len(),
                complete,
                t0.elapsed()
            );
        }
    }
}
