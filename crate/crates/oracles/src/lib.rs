//! Brute-force reference implementations for test cross-checks.
//!
//! Everything here trades speed for obviousness: direct normal-equation
//! solves on tiny systems, all-pairs domination filtering, quadrature
//! orthonormality checks, and enumerate-then-filter multi-index
//! construction. These routines exist so the production algorithms can be
//! validated against an independent route; they are dev-dependencies only
//! and never ship in the library surface.

use nalgebra::{DMatrix, DVector};

use ddpce::basis::{MultiIndex, MultiIndexSet};
use ddpce::features::{DesignPoint, FeatureSpecs};

/// One oracle-versus-implementation comparison.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub case: String,
    pub inputs: String,
    pub oracle_output: String,
    pub main_output: String,
    pub tolerance: f64,
    pub agrees: bool,
}

impl OracleReport {
    /// Compares scalar outputs within an absolute tolerance.
    pub fn scalar(case: &str, inputs: &str, oracle: f64, main: f64, tolerance: f64) -> Self {
        OracleReport {
            case: case.to_string(),
            inputs: inputs.to_string(),
            oracle_output: format!("{oracle}"),
            main_output: format!("{main}"),
            tolerance,
            agrees: (oracle - main).abs() <= tolerance,
        }
    }

    /// Compares structural outputs for exact equality.
    pub fn exact<T: PartialEq + std::fmt::Debug>(case: &str, inputs: &str, oracle: &T, main: &T) -> Self {
        OracleReport {
            case: case.to_string(),
            inputs: inputs.to_string(),
            oracle_output: format!("{oracle:?}"),
            main_output: format!("{main:?}"),
            tolerance: 0.0,
            agrees: oracle == main,
        }
    }

    /// Panics with the full report when the two routes disagree.
    pub fn assert_agrees(&self) {
        assert!(
            self.agrees,
            "oracle disagreement in `{}`\n  inputs: {}\n  oracle: {}\n  main:   {}\n  tol:    {}",
            self.case, self.inputs, self.oracle_output, self.main_output, self.tolerance
        );
    }
}

/// Solves (DᵀD) s = Dᵀ b by direct elimination. Tiny well-conditioned
/// systems only; this is the route the production solver must avoid.
pub fn oracle_normal_equations(design: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let gram = design.transpose() * design;
    let rhs = design.transpose() * b;
    gram.lu().solve(&rhs)
}

/// All-pairs domination filter: returns indices of nondominated points
/// under component-wise minimization.
pub fn oracle_pareto_bruteforce(points: &[(f64, f64)]) -> Vec<usize> {
    let dominates = |a: (f64, f64), b: (f64, f64)| {
        a.0 <= b.0 && a.1 <= b.1 && (a.0 < b.0 || a.1 < b.1)
    };
    (0..points.len())
        .filter(|&j| !(0..points.len()).any(|i| i != j && dominates(points[i], points[j])))
        .collect()
}

/// Which truncation rule a multi-index set follows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SetKind {
    TensorProduct,
    TotalDegree,
    Hyperbolic { q: f64 },
}

/// Enumerate-and-filter construction of a multi-index set: walks the full
/// tensor grid and keeps indices passing the membership predicate.
pub fn oracle_enumerate_set(kind: SetKind, dim: usize, max_degree: u32) -> MultiIndexSet {
    assert!(
        ((max_degree as u128) + 1).pow(dim as u32) <= 1_000_000,
        "oracle enumeration capacity exceeded"
    );
    let mut kept = Vec::new();
    let mut current = vec![0u32; dim];
    loop {
        let keep = match kind {
            SetKind::TensorProduct => true,
            SetKind::TotalDegree => current.iter().sum::<u32>() <= max_degree,
            SetKind::Hyperbolic { q } => {
                let sum: f64 = current
                    .iter()
                    .filter(|&&d| d > 0)
                    .map(|&d| (d as f64).powf(q))
                    .sum();
                sum.powf(1.0 / q) <= max_degree as f64 * (1.0 + 1e-12)
            }
        };
        if keep {
            kept.push(MultiIndex::new(current.clone()));
        }
        let mut pos = dim;
        let mut carried = true;
        while pos > 0 && carried {
            pos -= 1;
            if current[pos] < max_degree {
                current[pos] += 1;
                carried = false;
            } else {
                current[pos] = 0;
            }
        }
        if carried {
            break;
        }
    }
    MultiIndexSet::from_indices(dim, kept).expect("oracle enumeration yields a valid set")
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on the
/// classical recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n.div_ceil(2) {
        // Chebyshev-angle initial guess
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = -x.abs();
        nodes[n - 1 - k] = x.abs();
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut prev = 1.0;
    let mut curr = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * x * curr - kf * prev) / (kf + 1.0);
        prev = curr;
        curr = next;
    }
    let dp = n as f64 * (x * curr - prev) / (x * x - 1.0);
    (curr, dp)
}

/// Quadrature inner product of two orthonormal Legendre polynomials against
/// the uniform density 1/2 on [-1, 1].
pub fn quadrature_inner_product(deg_a: u32, deg_b: u32, quad_nodes: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(quad_nodes);
    nodes
        .iter()
        .zip(&weights)
        .map(|(&x, &w)| {
            let a = ddpce::basis::legendre_orthonormal(deg_a, x).unwrap();
            let b = ddpce::basis::legendre_orthonormal(deg_b, x).unwrap();
            0.5 * w * a * b
        })
        .sum()
}

/// Checks that `f` strictly decreases along a grid sweep of feature `dim`,
/// holding the other coordinates of `base` fixed. Returns the observed
/// violations.
pub fn monotone_decreasing_violations(
    f: &dyn Fn(&DesignPoint) -> f64,
    base: &DesignPoint,
    specs: &FeatureSpecs,
    dim: usize,
    steps: usize,
    strictness: f64,
) -> usize {
    let spec = specs.get(dim);
    let mut last = f64::INFINITY;
    let mut violations = 0;
    for i in 0..=steps {
        let mut values = base.values().to_vec();
        values[dim] = spec.lower + (spec.upper - spec.lower) * i as f64 / steps as f64;
        let y = f(&DesignPoint::new(values));
        if !(y < last - strictness) {
            violations += 1;
        }
        last = y;
    }
    violations
}
