//! Differential evolution, DE/rand/1/bin with bounce-back repair.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CountingObjective, OptProblem, OptResult, SearchSpace, DE_DEFAULT_BUDGET};
use crate::error::Result;

const POPULATION: usize = 40;
const WEIGHT: f64 = 0.8;
const CROSSOVER: f64 = 0.9;

/// Minimizes a single objective with DE/rand/1/bin: population 40, F = 0.8,
/// CR = 0.9, bounce-back repair toward the base vector, greedy one-to-one
/// selection with in-place replacement. Termination contract matches PSO.
pub fn minimize_de(problem: &OptProblem) -> Result<OptResult> {
    let objective = problem.require_single()?;
    let space = SearchSpace::new(problem)?;
    let budget = problem.budget_or(DE_DEFAULT_BUDGET);
    let mut counter = CountingObjective::new(objective, &problem.specs, &problem.pins, budget);
    let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);

    let dim = space.dim();
    let (lo, hi) = (space.lo().to_vec(), space.hi().to_vec());

    let mut population: Vec<Vec<f64>> = (0..POPULATION)
        .map(|_| (0..dim).map(|d| rng.gen_range(lo[d]..=hi[d])).collect())
        .collect();
    let mut values: Vec<f64> = Vec::with_capacity(POPULATION);
    for member in &population {
        values.push(counter.eval(&space.assemble(member)));
    }
    let mut best = values.iter().cloned().fold(f64::INFINITY, f64::min);

    let mut trace = Vec::new();
    let mut stagnant = 0;
    while counter.remaining() >= POPULATION && stagnant < problem.stagnation_patience {
        let best_before = best;
        for i in 0..POPULATION {
            // three distinct partners, none equal to the target
            let mut pick = || loop {
                let r = rng.gen_range(0..POPULATION);
                if r != i {
                    return r;
                }
            };
            let r1 = pick();
            let r2 = loop {
                let r = pick();
                if r != r1 {
                    break r;
                }
            };
            let r3 = loop {
                let r = pick();
                if r != r1 && r != r2 {
                    break r;
                }
            };

            let mut mutant: Vec<f64> = (0..dim)
                .map(|d| population[r1][d] + WEIGHT * (population[r2][d] - population[r3][d]))
                .collect();
            for d in 0..dim {
                if mutant[d] < lo[d] {
                    mutant[d] = lo[d] + rng.gen::<f64>() * (population[r1][d] - lo[d]);
                } else if mutant[d] > hi[d] {
                    mutant[d] = hi[d] - rng.gen::<f64>() * (hi[d] - population[r1][d]);
                }
            }

            let forced = rng.gen_range(0..dim);
            let mut trial = population[i].clone();
            for d in 0..dim {
                if rng.gen::<f64>() < CROSSOVER || d == forced {
                    trial[d] = mutant[d];
                }
            }

            let value = counter.eval(&space.assemble(&trial));
            if value <= values[i] {
                population[i] = trial;
                values[i] = value;
                if value < best {
                    best = value;
                }
            }
        }
        trace.push(best);
        if best_before - best < problem.stagnation_tolerance {
            stagnant += 1;
        } else {
            stagnant = 0;
        }
    }

    let best_idx = (0..POPULATION)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)))
        .expect("non-empty population");
    Ok(OptResult {
        best_point: space.assemble(&population[best_idx]),
        best_value: values[best_idx],
        evaluations: counter.count(),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{DesignPoint, Feature, FeatureSpecs};
    use crate::thermal::synthetic_oracle;

    fn canonical_sphere(specs: &FeatureSpecs) -> impl Fn(&DesignPoint) -> f64 + Sync + '_ {
        move |p: &DesignPoint| {
            p.values()
                .iter()
                .zip(specs.iter())
                .map(|(&y, s)| {
                    let x = 2.0 * (y - s.lower) / (s.upper - s.lower) - 1.0;
                    x * x
                })
                .sum()
        }
    }

    #[test]
    fn de_minimizes_sphere() {
        let specs = FeatureSpecs::heat_sink();
        let problem = OptProblem::single(canonical_sphere(&specs), specs.clone())
            .with_budget(20_000)
            .with_stagnation(200, 1e-8)
            .with_seed(5);
        let result = minimize_de(&problem).unwrap();
        assert!(
            result.best_value < 1e-6,
            "sphere best {}",
            result.best_value
        );
    }

    #[test]
    fn de_is_deterministic() {
        let specs = FeatureSpecs::heat_sink();
        let pins = [
            (Feature::AmbientTemperature.index(), 45.0),
            (Feature::PowerLoss.index(), 140.0),
        ];
        let mk = || {
            OptProblem::single(
                |p: &DesignPoint| synthetic_oracle(p, &FeatureSpecs::heat_sink()).unwrap(),
                specs.clone(),
            )
            .with_pins(&pins)
            .unwrap()
            .with_budget(1600)
            .with_seed(11)
        };
        let a = minimize_de(&mk()).unwrap();
        let b = minimize_de(&mk()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn de_oracle_runs_match_pso_scale() {
        let specs = FeatureSpecs::heat_sink();
        let pins = [
            (Feature::AmbientTemperature.index(), 45.0),
            (Feature::PowerLoss.index(), 140.0),
        ];
        let problem = OptProblem::single(
            |p: &DesignPoint| synthetic_oracle(p, &FeatureSpecs::heat_sink()).unwrap(),
            specs,
        )
        .with_pins(&pins)
        .unwrap()
        .with_seed(2);
        let result = minimize_de(&problem).unwrap();
        assert!(result.evaluations <= 8000);
        let v = result.best_point.get(Feature::AirVelocity);
        assert!((v - 5.0).abs() < 1e-2, "v* = {v}");
    }
}
