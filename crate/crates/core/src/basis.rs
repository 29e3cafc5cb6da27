//! Polynomial chaos basis machinery: multi-index sets, orthonormal Legendre
//! evaluation, and the trained surrogate model.
//!
//! Univariate polynomials are Legendre polynomials normalized against the
//! uniform density 1/2 on [-1, 1], so the multivariate products are
//! orthonormal over the canonical box. A basis is identified by its
//! multi-index set; sets are kept in a canonical order (ascending total
//! degree, ties broken lexicographically) so that serialized models are
//! byte-stable.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{scale_to_canonical, DesignPoint, FeatureSpecs};

/// Largest basis the set constructors will materialize.
pub const DEFAULT_BASIS_CAP: usize = 1_000_000;

/// Per-dimension polynomial degrees of one basis term.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(degrees: Vec<u32>) -> Self {
        MultiIndex(degrees)
    }

    pub fn zeros(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    pub fn degrees(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&d| d == 0)
    }

    /// Canonical comparison: ascending total degree, ties lexicographic.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.total_degree()
            .cmp(&other.total_degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

/// Ordered, duplicate-free set of multi-indices defining a PCE basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiIndexSet {
    dim: usize,
    indices: Vec<MultiIndex>,
}

impl MultiIndexSet {
    /// Builds a set from arbitrary indices: orders canonically and rejects
    /// duplicates, dimension mismatches, and sets missing the constant term.
    pub fn from_indices(dim: usize, mut indices: Vec<MultiIndex>) -> Result<Self> {
        for idx in &indices {
            if idx.dim() != dim {
                return Err(Error::Argument(format!(
                    "multi-index {:?} does not have dimension {dim}",
                    idx.degrees()
                )));
            }
        }
        indices.sort_unstable_by(|a, b| a.canonical_cmp(b));
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Argument("duplicate multi-index in set".into()));
        }
        if !indices.is_empty() && !indices[0].is_zero() {
            return Err(Error::Argument(
                "non-empty multi-index set must contain the zero index".into(),
            ));
        }
        Ok(MultiIndexSet { dim, indices })
    }

    /// All indices with `max_n p_n <= max_order`; cardinality (P+1)^N.
    pub fn tensor_product(dim: usize, max_order: u32) -> Result<Self> {
        Self::check_dim(dim)?;
        let size = (max_order as u128 + 1)
            .checked_pow(dim as u32)
            .unwrap_or(u128::MAX);
        if size > DEFAULT_BASIS_CAP as u128 {
            return Err(Error::Capacity {
                requested: size.min(usize::MAX as u128) as usize,
                cap: DEFAULT_BASIS_CAP,
            });
        }
        let mut indices = Vec::with_capacity(size as usize);
        let mut current = vec![0u32; dim];
        loop {
            indices.push(MultiIndex(current.clone()));
            // odometer increment over digits 0..=max_order
            let mut pos = dim;
            let mut carried = true;
            while pos > 0 && carried {
                pos -= 1;
                if current[pos] < max_order {
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
        Self::from_indices(dim, indices)
    }

    /// All indices with total degree at most `max_degree`;
    /// cardinality (N+P)! / (N! P!).
    pub fn total_degree(dim: usize, max_degree: u32) -> Result<Self> {
        Self::check_dim(dim)?;
        let size = total_degree_cardinality(dim, max_degree);
        if size > DEFAULT_BASIS_CAP as u128 {
            return Err(Error::Capacity {
                requested: size.min(usize::MAX as u128) as usize,
                cap: DEFAULT_BASIS_CAP,
            });
        }
        let mut indices = Vec::with_capacity(size as usize);
        let mut current = vec![0u32; dim];
        enumerate_total_degree(&mut current, 0, max_degree, &mut indices);
        Self::from_indices(dim, indices)
    }

    /// All indices with q-quasi-norm at most `max_degree`:
    /// (sum_n p_n^q)^(1/q) <= P for q in (0, 1]. At q = 1 this is exactly
    /// the total-degree set.
    pub fn hyperbolic(dim: usize, max_degree: u32, q: f64) -> Result<Self> {
        Self::check_dim(dim)?;
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::Argument(format!("q = {q} must lie in (0, 1]")));
        }
        // Compare in the q-power domain: sum p^q <= P^q. A tiny relative
        // slack keeps analytically tight members (e.g. single-variable terms
        // of degree P) from being dropped by round-off.
        let budget = (max_degree as f64).powf(q) * (1.0 + 1e-12);
        let mut indices = Vec::new();
        let mut current = vec![0u32; dim];
        enumerate_hyperbolic(&mut current, 0, q, budget, max_degree, &mut indices)?;
        Self::from_indices(dim, indices)
    }

    fn check_dim(dim: usize) -> Result<()> {
        if dim == 0 {
            return Err(Error::Argument("dimension must be at least 1".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn contains(&self, idx: &MultiIndex) -> bool {
        self.indices
            .binary_search_by(|probe| probe.canonical_cmp(idx))
            .is_ok()
    }

    /// Highest degree used in each dimension.
    pub fn max_degree_per_dim(&self) -> Vec<u32> {
        let mut maxes = vec![0u32; self.dim];
        for idx in &self.indices {
            for (m, &d) in maxes.iter_mut().zip(idx.degrees()) {
                *m = (*m).max(d);
            }
        }
        maxes
    }
}

/// (N + P)! / (N! P!) without intermediate overflow.
pub fn total_degree_cardinality(dim: usize, max_degree: u32) -> u128 {
    let n = dim as u128;
    let p = max_degree as u128;
    let mut size: u128 = 1;
    for i in 1..=p {
        size = size * (n + i) / i;
    }
    size
}

fn enumerate_total_degree(
    current: &mut Vec<u32>,
    pos: usize,
    remaining: u32,
    out: &mut Vec<MultiIndex>,
) {
    if pos == current.len() {
        out.push(MultiIndex(current.clone()));
        return;
    }
    for d in 0..=remaining {
        current[pos] = d;
        enumerate_total_degree(current, pos + 1, remaining - d, out);
    }
    current[pos] = 0;
}

fn enumerate_hyperbolic(
    current: &mut Vec<u32>,
    pos: usize,
    q: f64,
    remaining_budget: f64,
    max_degree: u32,
    out: &mut Vec<MultiIndex>,
) -> Result<()> {
    if pos == current.len() {
        if out.len() >= DEFAULT_BASIS_CAP {
            return Err(Error::Capacity {
                requested: out.len() + 1,
                cap: DEFAULT_BASIS_CAP,
            });
        }
        out.push(MultiIndex(current.clone()));
        return Ok(());
    }
    for d in 0..=max_degree {
        let cost = if d == 0 { 0.0 } else { (d as f64).powf(q) };
        if cost > remaining_budget {
            break;
        }
        current[pos] = d;
        enumerate_hyperbolic(current, pos + 1, q, remaining_budget - cost, max_degree, out)?;
    }
    current[pos] = 0;
    Ok(())
}

/// Orthonormal Legendre polynomial of the given degree at `x` in [-1, 1].
///
/// Returns sqrt(2p + 1) * P_p(x), where P_p is the classical Legendre
/// polynomial with P_p(1) = 1; the family is orthonormal with respect to
/// the uniform density 1/2 on [-1, 1].
pub fn legendre_orthonormal(degree: u32, x: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x = {x} outside [-1, 1]")));
    }
    Ok(legendre_orthonormal_unchecked(degree, x))
}

pub(crate) fn legendre_orthonormal_unchecked(degree: u32, x: f64) -> f64 {
    let norm = (2.0 * degree as f64 + 1.0).sqrt();
    if degree == 0 {
        return 1.0;
    }
    if degree == 1 {
        return norm * x;
    }
    let mut prev = 1.0;
    let mut curr = x;
    for n in 1..degree {
        let n = n as f64;
        let next = ((2.0 * n + 1.0) * x * curr - n * prev) / (n + 1.0);
        prev = curr;
        curr = next;
    }
    norm * curr
}

/// Orthonormal Legendre values for all degrees 0..=max_degree at `x`,
/// sharing one pass of the three-term recurrence.
pub(crate) fn legendre_table(max_degree: u32, x: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    if max_degree == 0 {
        return;
    }
    let mut prev = 1.0;
    let mut curr = x;
    out.push(3f64.sqrt() * x);
    for n in 1..max_degree {
        let nf = n as f64;
        let next = ((2.0 * nf + 1.0) * x * curr - nf * prev) / (nf + 1.0);
        prev = curr;
        curr = next;
        out.push((2.0 * (n + 1) as f64 + 1.0).sqrt() * curr);
    }
}

/// Evaluates every basis polynomial of `set` at a canonical point.
pub fn eval_basis(set: &MultiIndexSet, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != set.dim() {
        return Err(Error::Argument(format!(
            "point has {} components, basis has dimension {}",
            x.len(),
            set.dim()
        )));
    }
    for &xi in x {
        if !(-1.0..=1.0).contains(&xi) {
            return Err(Error::Domain(format!("x = {xi} outside [-1, 1]")));
        }
    }
    Ok(eval_basis_unchecked(set, x))
}

pub(crate) fn eval_basis_unchecked(set: &MultiIndexSet, x: &[f64]) -> Vec<f64> {
    let maxes = set.max_degree_per_dim();
    let mut tables: Vec<Vec<f64>> = Vec::with_capacity(set.dim());
    for (n, &max) in maxes.iter().enumerate() {
        let mut t = Vec::with_capacity(max as usize + 1);
        legendre_table(max, x[n], &mut t);
        tables.push(t);
    }
    set.indices()
        .iter()
        .map(|idx| {
            idx.degrees()
                .iter()
                .enumerate()
                .filter(|(_, &d)| d > 0)
                .map(|(n, &d)| tables[n][d as usize])
                .product()
        })
        .collect()
}

/// Per-feature variance-based sensitivity indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SobolIndices {
    pub first_order: f64,
    pub total: f64,
}

/// Training provenance stored with serialized models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub training_size: usize,
    pub builder: String,
}

/// A trained polynomial chaos surrogate: basis, coefficients, and the
/// feature scaling that maps design points onto the canonical box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PceModel {
    basis: MultiIndexSet,
    coefficients: Vec<f64>,
    specs: FeatureSpecs,
    provenance: Option<Provenance>,
}

const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct PceModelFile {
    schema_version: u32,
    specs: FeatureSpecs,
    multi_indices: Vec<Vec<u32>>,
    coefficients: Vec<f64>,
    provenance: Option<Provenance>,
}

impl PceModel {
    pub fn new(basis: MultiIndexSet, coefficients: Vec<f64>, specs: FeatureSpecs) -> Result<Self> {
        if coefficients.len() != basis.len() {
            return Err(Error::Argument(format!(
                "{} coefficients for a basis of {} terms",
                coefficients.len(),
                basis.len()
            )));
        }
        if basis.dim() != specs.len() {
            return Err(Error::Argument(format!(
                "basis dimension {} does not match feature space of size {}",
                basis.dim(),
                specs.len()
            )));
        }
        if let Some(bad) = coefficients.iter().find(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!("coefficient {bad} is not finite")));
        }
        Ok(PceModel {
            basis,
            coefficients,
            specs,
            provenance: None,
        })
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    pub fn basis(&self) -> &MultiIndexSet {
        &self.basis
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn specs(&self) -> &FeatureSpecs {
        &self.specs
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    /// Predicted response at a design point inside the box.
    pub fn eval(&self, point: &DesignPoint) -> Result<f64> {
        let x = scale_to_canonical(point, &self.specs)?;
        Ok(self.eval_canonical(&x))
    }

    pub(crate) fn eval_canonical(&self, x: &[f64]) -> f64 {
        let values = eval_basis_unchecked(&self.basis, x);
        values
            .iter()
            .zip(&self.coefficients)
            .map(|(v, c)| v * c)
            .sum()
    }

    /// First-order and total Sobol indices per feature, from the
    /// orthonormal-coefficient variance decomposition: the total variance is
    /// the sum of squared non-constant coefficients, and each index collects
    /// the share of terms involving the feature.
    pub fn sobol_indices(&self) -> Result<Vec<SobolIndices>> {
        let mut variance = 0.0;
        for (idx, &c) in self.basis.indices().iter().zip(&self.coefficients) {
            if !idx.is_zero() {
                variance += c * c;
            }
        }
        if variance == 0.0 {
            return Err(Error::DegenerateModel(
                "model has no non-constant term with nonzero coefficient".into(),
            ));
        }
        let dim = self.basis.dim();
        let mut first = vec![0.0; dim];
        let mut total = vec![0.0; dim];
        for (idx, &c) in self.basis.indices().iter().zip(&self.coefficients) {
            if idx.is_zero() {
                continue;
            }
            let partial = c * c;
            let active: Vec<usize> = idx
                .degrees()
                .iter()
                .enumerate()
                .filter(|(_, &d)| d > 0)
                .map(|(n, _)| n)
                .collect();
            for &n in &active {
                total[n] += partial;
                if active.len() == 1 {
                    first[n] += partial;
                }
            }
        }
        Ok(first
            .into_iter()
            .zip(total)
            .map(|(f, t)| SobolIndices {
                first_order: f / variance,
                total: t / variance,
            })
            .collect())
    }

    /// Writes the model as a structured text document; loading reproduces
    /// predictions bitwise.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = PceModelFile {
            schema_version: MODEL_SCHEMA_VERSION,
            specs: self.specs.clone(),
            multi_indices: self
                .basis
                .indices()
                .iter()
                .map(|i| i.degrees().to_vec())
                .collect(),
            coefficients: self.coefficients.clone(),
            provenance: self.provenance.clone(),
        };
        let text = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::Serialization(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: PceModelFile =
            serde_json::from_str(&text).map_err(|e| Error::Serialization(e.to_string()))?;
        if file.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported model schema version {}",
                file.schema_version
            )));
        }
        let dim = file.specs.len();
        let basis = MultiIndexSet::from_indices(
            dim,
            file.multi_indices.into_iter().map(MultiIndex::new).collect(),
        )?;
        let mut model = PceModel::new(basis, file.coefficients, file.specs)?;
        model.provenance = file.provenance;
        Ok(model)
    }
}
