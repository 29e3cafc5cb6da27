//! NSGA-II: fast nondominated sorting, crowding distance, simulated binary
//! crossover, and polynomial mutation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    MooResult, OptProblem, ParetoEntry, ParetoFront, SearchSpace, NSGA2_DEFAULT_BUDGET,
};
use crate::error::Result;

const POPULATION: usize = 100;
const SBX_ETA: f64 = 15.0;
const SBX_RATE: f64 = 0.9;
const PM_ETA: f64 = 20.0;

/// Minimizes two objectives with NSGA-II: population 100, simulated binary
/// crossover (eta = 15, rate 0.9), polynomial mutation (eta = 20, rate
/// 1/d per free dimension), binary tournaments under the crowded
/// comparison, and elitist environmental selection. The generation count
/// is sized so one run spends the evaluation budget.
pub fn minimize_nsga2(problem: &OptProblem) -> Result<MooResult> {
    let (obj1, obj2) = problem.require_bi()?;
    let space = SearchSpace::new(problem)?;
    let budget = problem.budget_or(NSGA2_DEFAULT_BUDGET);
    let generations = budget.saturating_sub(POPULATION) / POPULATION;
    let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);

    let dim = space.dim();
    let (lo, hi) = (space.lo().to_vec(), space.hi().to_vec());
    let mutation_rate = 1.0 / dim as f64;

    let mut evaluations = 0usize;
    let evaluate = |genome: &[f64], evaluations: &mut usize| -> (f64, f64) {
        let point = space.assemble(genome);
        problem
            .specs
            .validate_point(&point)
            .expect("NSGA-II produced an out-of-bounds candidate");
        assert!(*evaluations < budget, "evaluation budget exceeded");
        *evaluations += 1;
        (obj1(&point), obj2(&point))
    };

    let mut genomes: Vec<Vec<f64>> = (0..POPULATION)
        .map(|_| (0..dim).map(|d| rng.gen_range(lo[d]..=hi[d])).collect())
        .collect();
    let mut objectives: Vec<(f64, f64)> = genomes
        .iter()
        .map(|g| evaluate(g, &mut evaluations))
        .collect();
    let (mut ranks, mut crowding) = rank_and_crowd(&objectives);

    for _ in 0..generations {
        let mut children: Vec<Vec<f64>> = Vec::with_capacity(POPULATION);
        while children.len() < POPULATION {
            let a = tournament(&mut rng, &ranks, &crowding);
            let b = tournament(&mut rng, &ranks, &crowding);
            let (mut c1, mut c2) = crossover(&mut rng, &genomes[a], &genomes[b], &lo, &hi);
            mutate(&mut rng, &mut c1, &lo, &hi, mutation_rate);
            mutate(&mut rng, &mut c2, &lo, &hi, mutation_rate);
            children.push(c1);
            if children.len() < POPULATION {
                children.push(c2);
            }
        }
        let child_objs: Vec<(f64, f64)> = children
            .iter()
            .map(|g| evaluate(g, &mut evaluations))
            .collect();

        genomes.extend(children);
        objectives.extend(child_objs);
        let selected = environmental_selection(&objectives, POPULATION);
        genomes = selected.iter().map(|&i| genomes[i].clone()).collect();
        objectives = selected.iter().map(|&i| objectives[i]).collect();
        let rc = rank_and_crowd(&objectives);
        ranks = rc.0;
        crowding = rc.1;
    }

    let entries: Vec<ParetoEntry> = (0..genomes.len())
        .filter(|&i| ranks[i] == 0)
        .map(|i| ParetoEntry {
            f1: objectives[i].0,
            f2: objectives[i].1,
            point: space.assemble(&genomes[i]),
        })
        .collect();
    Ok(MooResult {
        front: ParetoFront::new(entries)?,
        evaluations,
    })
}

/// Fronts of equal rank under fast nondominated sorting.
fn fast_nondominated_sort(objs: &[(f64, f64)]) -> Vec<Vec<usize>> {
    let n = objs.len();
    let mut dominated: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut counts = vec![0usize; n];
    for i in 0..n {
        for j in 0..n {
            if i != j && super::dominates(objs[i], objs[j]) {
                dominated[i].push(j);
                counts[j] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| counts[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated[i] {
                counts[j] -= 1;
                if counts[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::replace(&mut current, next));
    }
    fronts
}

/// Crowding distance within one front.
fn crowding_distance(objs: &[(f64, f64)], front: &[usize]) -> Vec<f64> {
    let n = front.len();
    let mut distance = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    for pick in [0usize, 1] {
        let value = |i: usize| if pick == 0 { objs[front[i]].0 } else { objs[front[i]].1 };
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| value(a).total_cmp(&value(b)).then(a.cmp(&b)));
        let span = value(order[n - 1]) - value(order[0]);
        distance[order[0]] = f64::INFINITY;
        distance[order[n - 1]] = f64::INFINITY;
        if span > 0.0 {
            for k in 1..n - 1 {
                distance[order[k]] += (value(order[k + 1]) - value(order[k - 1])) / span;
            }
        }
    }
    distance
}

fn rank_and_crowd(objs: &[(f64, f64)]) -> (Vec<usize>, Vec<f64>) {
    let fronts = fast_nondominated_sort(objs);
    let mut ranks = vec![0usize; objs.len()];
    let mut crowding = vec![0.0; objs.len()];
    for (rank, front) in fronts.iter().enumerate() {
        let dist = crowding_distance(objs, front);
        for (&i, &d) in front.iter().zip(&dist) {
            ranks[i] = rank;
            crowding[i] = d;
        }
    }
    (ranks, crowding)
}

/// Binary tournament under the crowded comparison (lower rank wins, ties
/// broken by larger crowding distance, then by index).
fn tournament(rng: &mut ChaCha8Rng, ranks: &[usize], crowding: &[f64]) -> usize {
    let n = ranks.len();
    let a = rng.gen_range(0..n);
    let b = rng.gen_range(0..n);
    if ranks[a] < ranks[b] {
        a
    } else if ranks[b] < ranks[a] {
        b
    } else if crowding[a] > crowding[b] {
        a
    } else if crowding[b] > crowding[a] {
        b
    } else {
        a.min(b)
    }
}

/// Elitist selection of `target` survivors from the combined population.
fn environmental_selection(objs: &[(f64, f64)], target: usize) -> Vec<usize> {
    let fronts = fast_nondominated_sort(objs);
    let mut selected = Vec::with_capacity(target);
    for front in fronts {
        if selected.len() + front.len() <= target {
            selected.extend_from_slice(&front);
            if selected.len() == target {
                break;
            }
        } else {
            let dist = crowding_distance(objs, &front);
            let mut order: Vec<usize> = (0..front.len()).collect();
            order.sort_by(|&a, &b| {
                dist[b]
                    .total_cmp(&dist[a])
                    .then(front[a].cmp(&front[b]))
            });
            for &k in order.iter().take(target - selected.len()) {
                selected.push(front[k]);
            }
            break;
        }
    }
    selected
}

/// Bounded simulated binary crossover on a genome pair.
fn crossover(
    rng: &mut ChaCha8Rng,
    a: &[f64],
    b: &[f64],
    lo: &[f64],
    hi: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = a.to_vec();
    let mut c2 = b.to_vec();
    if rng.gen::<f64>() > SBX_RATE {
        return (c1, c2);
    }
    for d in 0..a.len() {
        if rng.gen::<f64>() > 0.5 {
            continue;
        }
        let (x1, x2) = (a[d].min(b[d]), a[d].max(b[d]));
        if x2 - x1 < 1e-14 {
            continue;
        }
        let u: f64 = rng.gen();
        let spread = |bound_gap: f64| -> f64 {
            let beta = 1.0 + 2.0 * bound_gap / (x2 - x1);
            let alpha = 2.0 - beta.powf(-(SBX_ETA + 1.0));
            if u <= 1.0 / alpha {
                (u * alpha).powf(1.0 / (SBX_ETA + 1.0))
            } else {
                (1.0 / (2.0 - u * alpha)).powf(1.0 / (SBX_ETA + 1.0))
            }
        };
        let beta_lo = spread(x1 - lo[d]);
        let beta_hi = spread(hi[d] - x2);
        let mut y1 = 0.5 * ((x1 + x2) - beta_lo * (x2 - x1));
        let mut y2 = 0.5 * ((x1 + x2) + beta_hi * (x2 - x1));
        y1 = y1.clamp(lo[d], hi[d]);
        y2 = y2.clamp(lo[d], hi[d]);
        if rng.gen::<f64>() < 0.5 {
            std::mem::swap(&mut y1, &mut y2);
        }
        c1[d] = y1;
        c2[d] = y2;
    }
    (c1, c2)
}

/// Bounded polynomial mutation.
fn mutate(rng: &mut ChaCha8Rng, genome: &mut [f64], lo: &[f64], hi: &[f64], rate: f64) {
    for d in 0..genome.len() {
        if rng.gen::<f64>() >= rate {
            continue;
        }
        let span = hi[d] - lo[d];
        let delta1 = (genome[d] - lo[d]) / span;
        let delta2 = (hi[d] - genome[d]) / span;
        let u: f64 = rng.gen();
        let exponent = 1.0 / (PM_ETA + 1.0);
        let deltaq = if u < 0.5 {
            let base = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - delta1).powf(PM_ETA + 1.0);
            base.powf(exponent) - 1.0
        } else {
            let base =
                2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - delta2).powf(PM_ETA + 1.0);
            1.0 - base.powf(exponent)
        };
        genome[d] = (genome[d] + deltaq * span).clamp(lo[d], hi[d]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{DesignPoint, FeatureSpec, FeatureSpecs};

    fn one_var_problem(seed: u64) -> OptProblem<'static> {
        let specs = FeatureSpecs::new(vec![FeatureSpec::continuous("x", "", -5.0, 5.0)]).unwrap();
        OptProblem::bi(
            |p: &DesignPoint| p.values()[0] * p.values()[0],
            |p: &DesignPoint| (p.values()[0] - 2.0) * (p.values()[0] - 2.0),
            specs,
        )
        .with_seed(seed)
    }

    #[test]
    fn nsga2_front_covers_the_tradeoff() {
        let result = minimize_nsga2(&one_var_problem(1)).unwrap();
        assert_eq!(result.evaluations, 14_100);
        let front = &result.front;
        assert!(front.len() > 50);
        // the nondominated set lives at x in [0, 2]
        for e in front.entries() {
            let x = e.point.values()[0];
            assert!((-0.01..=2.01).contains(&x), "x = {x}");
        }
        // both extremes are approached
        let min_f1 = front.entries().iter().map(|e| e.f1).fold(f64::INFINITY, f64::min);
        let min_f2 = front.entries().iter().map(|e| e.f2).fold(f64::INFINITY, f64::min);
        assert!(min_f1 < 1e-3);
        assert!(min_f2 < 1e-3);
        // sorted ascending by f2, nondominated implies f1 descending-or-equal
        for w in front.entries().windows(2) {
            assert!(w[0].f2 <= w[1].f2);
            assert!(w[0].f1 >= w[1].f1);
        }
    }

    #[test]
    fn nsga2_is_deterministic() {
        let a = minimize_nsga2(&one_var_problem(7)).unwrap();
        let b = minimize_nsga2(&one_var_problem(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn nsga2_rejects_single_objective() {
        let specs = FeatureSpecs::heat_sink();
        let problem = OptProblem::single(|_| 0.0, specs);
        assert!(minimize_nsga2(&problem).is_err());
    }

    #[test]
    fn sort_and_crowding_basics() {
        let objs = [(1.0, 2.0), (2.0, 1.0), (2.0, 2.0), (3.0, 3.0)];
        let fronts = fast_nondominated_sort(&objs);
        assert_eq!(fronts[0], vec![0, 1]);
        assert_eq!(fronts[1], vec![2]);
        assert_eq!(fronts[2], vec![3]);

        let dist = crowding_distance(&objs, &fronts[0]);
        assert!(dist.iter().all(|d| d.is_infinite()));
    }
}
