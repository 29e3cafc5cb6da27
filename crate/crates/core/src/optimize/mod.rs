//! Stochastic optimizers over the design box: particle swarm, differential
//! evolution, and NSGA-II, plus Pareto filtering and ensemble aggregation
//! of single-objective optima.
//!
//! Pinned features are removed from the search space entirely, so every
//! evaluated candidate honors the equality constraints exactly. All
//! algorithms draw from a seeded stream and are bitwise reproducible.

mod de;
mod nsga2;
mod pso;

pub use de::minimize_de;
pub use nsga2::minimize_nsga2;
pub use pso::minimize_pso;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleModel;
use crate::error::{Error, Result};
use crate::features::{DesignPoint, Feature, FeatureSpecs};
use crate::thermal::{junction_temperature, ThermalConstants};

/// Default evaluation budgets per algorithm.
pub const PSO_DEFAULT_BUDGET: usize = 2000;
pub const DE_DEFAULT_BUDGET: usize = 8000;
pub const NSGA2_DEFAULT_BUDGET: usize = 14_100;

/// Termination defaults shared by PSO and DE.
pub const DEFAULT_STAGNATION_PATIENCE: usize = 20;
pub const DEFAULT_STAGNATION_TOLERANCE: f64 = 1e-8;

type ObjectiveFn<'a> = dyn Fn(&DesignPoint) -> f64 + Sync + 'a;

enum Objectives<'a> {
    Single(Box<ObjectiveFn<'a>>),
    Bi(Box<ObjectiveFn<'a>>, Box<ObjectiveFn<'a>>),
}

impl Objectives<'_> {
    fn arity(&self) -> usize {
        match self {
            Objectives::Single(_) => 1,
            Objectives::Bi(..) => 2,
        }
    }
}

/// A box-constrained stochastic optimization problem with optional
/// fixed-feature pins.
pub struct OptProblem<'a> {
    objectives: Objectives<'a>,
    specs: FeatureSpecs,
    pins: Vec<(usize, f64)>,
    budget: Option<usize>,
    seed: u64,
    stagnation_patience: usize,
    stagnation_tolerance: f64,
}

impl<'a> OptProblem<'a> {
    pub fn single(
        objective: impl Fn(&DesignPoint) -> f64 + Sync + 'a,
        specs: FeatureSpecs,
    ) -> Self {
        OptProblem {
            objectives: Objectives::Single(Box::new(objective)),
            specs,
            pins: Vec::new(),
            budget: None,
            seed: 0,
            stagnation_patience: DEFAULT_STAGNATION_PATIENCE,
            stagnation_tolerance: DEFAULT_STAGNATION_TOLERANCE,
        }
    }

    pub fn bi(
        objective1: impl Fn(&DesignPoint) -> f64 + Sync + 'a,
        objective2: impl Fn(&DesignPoint) -> f64 + Sync + 'a,
        specs: FeatureSpecs,
    ) -> Self {
        OptProblem {
            objectives: Objectives::Bi(Box::new(objective1), Box::new(objective2)),
            specs,
            pins: Vec::new(),
            budget: None,
            seed: 0,
            stagnation_patience: DEFAULT_STAGNATION_PATIENCE,
            stagnation_tolerance: DEFAULT_STAGNATION_TOLERANCE,
        }
    }

    /// Fixes features to exact values; pinned dimensions leave the search
    /// space.
    pub fn with_pins(mut self, pins: &[(usize, f64)]) -> Result<Self> {
        for &(idx, value) in pins {
            if idx >= self.specs.len() {
                return Err(Error::Argument(format!(
                    "pin index {idx} out of range for {}-dimensional space",
                    self.specs.len()
                )));
            }
            let spec = self.specs.get(idx);
            if !spec.contains(value) {
                return Err(Error::BoundsViolation {
                    feature: spec.name.clone(),
                    value,
                    lower: spec.lower,
                    upper: spec.upper,
                });
            }
        }
        self.pins = pins.to_vec();
        Ok(self)
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_stagnation(mut self, patience: usize, tolerance: f64) -> Self {
        self.stagnation_patience = patience;
        self.stagnation_tolerance = tolerance;
        self
    }

    pub fn specs(&self) -> &FeatureSpecs {
        &self.specs
    }

    pub fn pins(&self) -> &[(usize, f64)] {
        &self.pins
    }

    fn budget_or(&self, default: usize) -> usize {
        self.budget.unwrap_or(default)
    }

    fn require_single(&self) -> Result<&ObjectiveFn<'a>> {
        match &self.objectives {
            Objectives::Single(f) => Ok(f.as_ref()),
            other => Err(Error::WrongAlgorithm {
                expected: "single-objective optimizer",
                got: other.arity(),
            }),
        }
    }

    fn require_bi(&self) -> Result<(&ObjectiveFn<'a>, &ObjectiveFn<'a>)> {
        match &self.objectives {
            Objectives::Bi(f, g) => Ok((f.as_ref(), g.as_ref())),
            other => Err(Error::WrongAlgorithm {
                expected: "bi-objective optimizer",
                got: other.arity(),
            }),
        }
    }
}

/// Free-dimension view of a pinned problem.
pub(crate) struct SearchSpace {
    free: Vec<usize>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    template: Vec<f64>,
}

impl SearchSpace {
    pub(crate) fn new(problem: &OptProblem) -> Result<Self> {
        let dim = problem.specs.len();
        let mut template: Vec<f64> = problem.specs.iter().map(|s| s.midpoint()).collect();
        let mut pinned = vec![false; dim];
        for &(idx, value) in &problem.pins {
            template[idx] = value;
            pinned[idx] = true;
        }
        let free: Vec<usize> = (0..dim).filter(|&i| !pinned[i]).collect();
        if free.is_empty() {
            return Err(Error::Argument(
                "every dimension is pinned; nothing to optimize".into(),
            ));
        }
        let lo = free.iter().map(|&i| problem.specs.get(i).lower).collect();
        let hi = free.iter().map(|&i| problem.specs.get(i).upper).collect();
        Ok(SearchSpace {
            free,
            lo,
            hi,
            template,
        })
    }

    pub(crate) fn dim(&self) -> usize {
        self.free.len()
    }

    pub(crate) fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub(crate) fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub(crate) fn assemble(&self, z: &[f64]) -> DesignPoint {
        let mut values = self.template.clone();
        for (&i, &v) in self.free.iter().zip(z) {
            values[i] = v;
        }
        DesignPoint::new(values)
    }
}

/// Objective wrapper that counts evaluations and asserts feasibility and
/// the budget on every call.
pub(crate) struct CountingObjective<'p, 'a> {
    objective: &'p ObjectiveFn<'a>,
    specs: &'p FeatureSpecs,
    pins: &'p [(usize, f64)],
    budget: usize,
    count: usize,
}

impl<'p, 'a> CountingObjective<'p, 'a> {
    pub(crate) fn new(
        objective: &'p ObjectiveFn<'a>,
        specs: &'p FeatureSpecs,
        pins: &'p [(usize, f64)],
        budget: usize,
    ) -> Self {
        CountingObjective {
            objective,
            specs,
            pins,
            budget,
            count: 0,
        }
    }

    pub(crate) fn count(&self) -> usize {
        self.count
    }

    pub(crate) fn remaining(&self) -> usize {
        self.budget - self.count
    }

    pub(crate) fn eval(&mut self, point: &DesignPoint) -> f64 {
        assert!(self.count < self.budget, "evaluation budget exceeded");
        self.specs
            .validate_point(point)
            .expect("optimizer produced an out-of-bounds candidate");
        for &(idx, value) in self.pins {
            assert_eq!(
                point.values()[idx],
                value,
                "optimizer perturbed pinned feature {idx}"
            );
        }
        self.count += 1;
        (self.objective)(point)
    }
}

/// Outcome of a single-objective run.
#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub best_point: DesignPoint,
    pub best_value: f64,
    pub evaluations: usize,
    /// Best objective value after each iteration.
    pub trace: Vec<f64>,
}

/// One nondominated design.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoEntry {
    /// First objective (junction temperature in the design pipeline).
    pub f1: f64,
    /// Second objective (heat-sink volume in the design pipeline).
    pub f2: f64,
    pub point: DesignPoint,
}

/// Nondominated set, sorted ascending by the second objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoFront {
    entries: Vec<ParetoEntry>,
}

impl ParetoFront {
    /// Validates pairwise nondomination and sorts by f2.
    pub fn new(mut entries: Vec<ParetoEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Argument("Pareto front must be non-empty".into()));
        }
        for e in &entries {
            if !e.f1.is_finite() || !e.f2.is_finite() {
                return Err(Error::NonFinite("Pareto entry objective".into()));
            }
        }
        for i in 0..entries.len() {
            for j in 0..entries.len() {
                if i != j && dominates((entries[i].f1, entries[i].f2), (entries[j].f1, entries[j].f2))
                {
                    return Err(Error::Argument(format!(
                        "entry ({}, {}) dominates ({}, {})",
                        entries[i].f1, entries[i].f2, entries[j].f1, entries[j].f2
                    )));
                }
            }
        }
        entries.sort_by(|a, b| a.f2.total_cmp(&b.f2).then(a.f1.total_cmp(&b.f1)));
        Ok(ParetoFront { entries })
    }

    pub fn entries(&self) -> &[ParetoEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Strict Pareto dominance under component-wise minimization.
pub(crate) fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.0 && a.1 <= b.1 && (a.0 < b.0 || a.1 < b.1)
}

/// Indices of the nondominated points, by sort-and-sweep over (f1, f2).
pub(crate) fn nondominated_sweep(objs: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..objs.len()).collect();
    order.sort_by(|&a, &b| {
        objs[a]
            .0
            .total_cmp(&objs[b].0)
            .then(objs[a].1.total_cmp(&objs[b].1))
            .then(a.cmp(&b))
    });
    let mut kept = Vec::new();
    let mut best_f2 = f64::INFINITY;
    let mut i = 0;
    while i < order.len() {
        let f1 = objs[order[i]].0;
        let mut j = i;
        while j < order.len() && objs[order[j]].0 == f1 {
            j += 1;
        }
        let group_min = objs[order[i]].1;
        if group_min < best_f2 {
            for &idx in &order[i..j] {
                if objs[idx].1 == group_min {
                    kept.push(idx);
                } else {
                    break;
                }
            }
            best_f2 = group_min;
        }
        i = j;
    }
    kept.sort_unstable();
    kept
}

/// Filters a point cloud down to its nondominated subset.
pub fn pareto_filter(points: Vec<(f64, f64, DesignPoint)>) -> Result<ParetoFront> {
    if points.is_empty() {
        return Err(Error::Argument("pareto_filter needs at least one point".into()));
    }
    if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::NonFinite("pareto_filter input objective".into()));
    }
    let objs: Vec<(f64, f64)> = points.iter().map(|p| (p.0, p.1)).collect();
    let kept = nondominated_sweep(&objs);
    let entries = kept
        .into_iter()
        .map(|i| ParetoEntry {
            f1: points[i].0,
            f2: points[i].1,
            point: points[i].2.clone(),
        })
        .collect();
    ParetoFront::new(entries)
}

/// Bi-objective front plus the evaluation count of the run that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct MooResult {
    pub front: ParetoFront,
    pub evaluations: usize,
}

/// Single-objective algorithm selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SingleAlgorithm {
    Pso,
    De,
}

/// Per-feature statistics of the aggregated optima.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStat {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

/// Ensemble aggregation of I single-objective optimization runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedOptimum {
    pub mu_ts_min: f64,
    pub sigma_ts_min: f64,
    /// Worst-case junction temperature at mean + six standard deviations.
    pub six_sigma_tj: f64,
    pub mean_evaluations: f64,
    pub features: Vec<FeatureStat>,
}

fn population_stats(values: &[f64]) -> (f64, f64) {
    // Identical inputs must report exactly zero spread.
    if values
        .windows(2)
        .all(|w| w[0].to_bits() == w[1].to_bits())
    {
        return (values[0], 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Six-sigma worst-case junction temperature from aggregated minima.
pub fn six_sigma_junction(
    mu_ts_min: f64,
    sigma_ts_min: f64,
    t_a: f64,
    power: f64,
    constants: &ThermalConstants,
) -> Result<f64> {
    junction_temperature(mu_ts_min + 6.0 * sigma_ts_min, t_a, power, constants)
}

/// Runs the chosen optimizer once per ensemble member (parallel, with
/// member-derived seeds) and aggregates minima and optimal features into
/// population means and standard deviations.
///
/// The ambient temperature and power loss must be pinned: the six-sigma
/// junction estimate is computed at those operating conditions.
pub fn optimize_over_ensemble(
    ensemble: &EnsembleModel,
    algorithm: SingleAlgorithm,
    pins: &[(usize, f64)],
    seed: u64,
    budget: Option<usize>,
    constants: &ThermalConstants,
) -> Result<AggregatedOptimum> {
    let t_a = pins
        .iter()
        .find(|(i, _)| *i == Feature::AmbientTemperature.index())
        .map(|&(_, v)| v)
        .ok_or_else(|| Error::Argument("ambient temperature must be pinned".into()))?;
    let power = pins
        .iter()
        .find(|(i, _)| *i == Feature::PowerLoss.index())
        .map(|&(_, v)| v)
        .ok_or_else(|| Error::Argument("power loss must be pinned".into()))?;

    let results: Vec<OptResult> = ensemble
        .members()
        .par_iter()
        .enumerate()
        .map(|(i, member)| {
            let member_seed = splitmix64(seed ^ splitmix64(i as u64 + 1));
            let mut problem = OptProblem::single(
                move |p: &DesignPoint| member.eval(p).expect("in-box surrogate evaluation"),
                ensemble.specs().clone(),
            )
            .with_pins(pins)?
            .with_seed(member_seed);
            if let Some(b) = budget {
                problem = problem.with_budget(b);
            }
            match algorithm {
                SingleAlgorithm::Pso => minimize_pso(&problem),
                SingleAlgorithm::De => minimize_de(&problem),
            }
        })
        .collect::<Result<_>>()?;

    let minima: Vec<f64> = results.iter().map(|r| r.best_value).collect();
    let (mu_ts_min, sigma_ts_min) = population_stats(&minima);
    let evals: Vec<f64> = results.iter().map(|r| r.evaluations as f64).collect();
    let mean_evaluations = evals.iter().sum::<f64>() / evals.len() as f64;

    let features = ensemble
        .specs()
        .iter()
        .enumerate()
        .map(|(d, spec)| {
            let values: Vec<f64> = results.iter().map(|r| r.best_point.values()[d]).collect();
            let (mean, std) = population_stats(&values);
            FeatureStat {
                name: spec.name.clone(),
                mean,
                std,
            }
        })
        .collect();

    Ok(AggregatedOptimum {
        mu_ts_min,
        sigma_ts_min,
        six_sigma_tj: six_sigma_junction(mu_ts_min, sigma_ts_min, t_a, power, constants)?,
        mean_evaluations,
        features,
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
