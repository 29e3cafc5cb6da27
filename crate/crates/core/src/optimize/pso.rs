//! Global-best particle swarm in constriction form.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CountingObjective, OptProblem, OptResult, SearchSpace, PSO_DEFAULT_BUDGET};
use crate::error::Result;

const SWARM_SIZE: usize = 25;
const INERTIA: f64 = 0.729;
const COGNITIVE: f64 = 1.494;
const SOCIAL: f64 = 1.494;

/// Minimizes a single objective with a global-best particle swarm:
/// 25 particles, constriction coefficients (0.729, 1.494, 1.494), velocity
/// clamped to half the range per dimension, reflective boundary handling.
/// Terminates on the evaluation budget or after the configured number of
/// stagnant iterations.
pub fn minimize_pso(problem: &OptProblem) -> Result<OptResult> {
    let objective = problem.require_single()?;
    let space = SearchSpace::new(problem)?;
    let budget = problem.budget_or(PSO_DEFAULT_BUDGET);
    let mut counter = CountingObjective::new(objective, &problem.specs, &problem.pins, budget);
    let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);

    let dim = space.dim();
    let (lo, hi) = (space.lo().to_vec(), space.hi().to_vec());
    let vmax: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (h - l)).collect();

    let mut positions: Vec<Vec<f64>> = (0..SWARM_SIZE)
        .map(|_| {
            (0..dim)
                .map(|d| rng.gen_range(lo[d]..=hi[d]))
                .collect()
        })
        .collect();
    let mut velocities = vec![vec![0.0; dim]; SWARM_SIZE];

    let mut personal_best = positions.clone();
    let mut personal_value: Vec<f64> = Vec::with_capacity(SWARM_SIZE);
    for p in &positions {
        personal_value.push(counter.eval(&space.assemble(p)));
    }
    let mut best_idx = 0;
    for i in 1..SWARM_SIZE {
        if personal_value[i] < personal_value[best_idx] {
            best_idx = i;
        }
    }
    let mut global_best = personal_best[best_idx].clone();
    let mut global_value = personal_value[best_idx];

    let mut trace = Vec::new();
    let mut stagnant = 0;
    while counter.remaining() >= SWARM_SIZE && stagnant < problem.stagnation_patience {
        let value_before = global_value;
        for i in 0..SWARM_SIZE {
            for d in 0..dim {
                let r1: f64 = rng.gen();
                let r2: f64 = rng.gen();
                let v = INERTIA * velocities[i][d]
                    + COGNITIVE * r1 * (personal_best[i][d] - positions[i][d])
                    + SOCIAL * r2 * (global_best[d] - positions[i][d]);
                velocities[i][d] = v.clamp(-vmax[d], vmax[d]);
                positions[i][d] += velocities[i][d];
                // reflect off the box walls
                if positions[i][d] < lo[d] {
                    positions[i][d] = 2.0 * lo[d] - positions[i][d];
                    velocities[i][d] = -velocities[i][d];
                } else if positions[i][d] > hi[d] {
                    positions[i][d] = 2.0 * hi[d] - positions[i][d];
                    velocities[i][d] = -velocities[i][d];
                }
            }
            let value = counter.eval(&space.assemble(&positions[i]));
            if value < personal_value[i] {
                personal_value[i] = value;
                personal_best[i] = positions[i].clone();
                if value < global_value {
                    global_value = value;
                    global_best = positions[i].clone();
                }
            }
        }
        trace.push(global_value);
        if value_before - global_value < problem.stagnation_tolerance {
            stagnant += 1;
        } else {
            stagnant = 0;
        }
    }

    Ok(OptResult {
        best_point: space.assemble(&global_best),
        best_value: global_value,
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
    fn pso_minimizes_sphere() {
        let specs = FeatureSpecs::heat_sink();
        let problem = OptProblem::single(canonical_sphere(&specs), specs.clone())
            .with_budget(3200)
            .with_seed(1);
        let result = minimize_pso(&problem).unwrap();
        assert!(
            result.best_value < 1e-6,
            "sphere best {}",
            result.best_value
        );
        assert!(result.evaluations <= 3200);
    }

    #[test]
    fn pso_is_deterministic() {
        let specs = FeatureSpecs::heat_sink();
        let mk = || {
            OptProblem::single(canonical_sphere(&specs), specs.clone())
                .with_budget(600)
                .with_seed(9)
        };
        let a = minimize_pso(&mk()).unwrap();
        let b = minimize_pso(&mk()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.best_value.to_bits(), b.best_value.to_bits());
    }

    #[test]
    fn pso_respects_pins_and_drives_velocity_up() {
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
        .with_seed(3);
        let result = minimize_pso(&problem).unwrap();
        assert_eq!(result.best_point.get(Feature::AmbientTemperature), 45.0);
        assert_eq!(result.best_point.get(Feature::PowerLoss), 140.0);
        let v = result.best_point.get(Feature::AirVelocity);
        assert!((v - 5.0).abs() < 1e-2, "v* = {v}");
        assert!(result.evaluations <= 2000);
    }

    #[test]
    fn pso_rejects_bi_objective() {
        let specs = FeatureSpecs::heat_sink();
        let problem = OptProblem::bi(|_| 0.0, |_| 0.0, specs);
        assert!(minimize_pso(&problem).is_err());
    }
}
