//! PCE coefficient computation: design-matrix assembly, least squares via
//! orthogonal factorization, least-angle regression with hybrid refit, and
//! the sensitivity-driven adaptive basis builder with condition-number
//! stopping.
//!
//! The normal equations are never formed on the production path; every
//! solve goes through a QR factorization of the design matrix.

use std::collections::HashSet;
use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{
    eval_basis_unchecked, legendre_table, MultiIndex, MultiIndexSet, PceModel, Provenance,
};
use crate::error::{Error, Result};
use crate::features::{scale_to_canonical, Dataset, DesignPoint, FeatureSpecs};

/// Coefficient solver used for a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    OlsQr,
    LarL1,
    SparseAdaptive,
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Solver::OlsQr => "ols-qr",
            Solver::LarL1 => "lar-l1",
            Solver::SparseAdaptive => "sparse-adaptive",
        };
        f.write_str(name)
    }
}

/// Diagnostics attached to every fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub solver: Solver,
    /// 2-norm condition number of the (active-set) design matrix.
    pub condition_number: f64,
    /// Number of nonzero coefficients.
    pub active_terms: usize,
    /// Euclidean norm of the training residual.
    pub residual_norm: f64,
    /// Set when the data could not support the requested fit (for example
    /// all-constant responses) and a fallback model was returned.
    pub degenerate: bool,
}

/// Sample-by-basis matrix of basis evaluations at the training points.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    matrix: DMatrix<f64>,
}

impl DesignMatrix {
    /// Wraps a raw matrix; entries must be finite.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::Argument("design matrix must be non-empty".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design matrix entry is not finite".into()));
        }
        Ok(DesignMatrix { matrix })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::Argument("design matrix must be non-empty".into()));
        }
        let k = rows[0].len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Argument("ragged rows in design matrix".into()));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Self::from_matrix(DMatrix::from_row_slice(flat.len() / k, k, &flat))
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

/// Evaluates the basis at every (scaled) training point; row m holds the
/// basis values at point m, with the constant term in the first column.
pub fn build_design_matrix(
    basis: &MultiIndexSet,
    points: &[DesignPoint],
    specs: &FeatureSpecs,
) -> Result<DesignMatrix> {
    if basis.is_empty() {
        return Err(Error::Argument("basis must be non-empty".into()));
    }
    if points.is_empty() {
        return Err(Error::Argument("point list must be non-empty".into()));
    }
    let mut matrix = DMatrix::zeros(points.len(), basis.len());
    for (m, p) in points.iter().enumerate() {
        let x = scale_to_canonical(p, specs)?;
        let row = eval_basis_unchecked(basis, &x);
        for (k, v) in row.into_iter().enumerate() {
            matrix[(m, k)] = v;
        }
    }
    DesignMatrix::from_matrix(matrix)
}

/// 2-norm condition number via singular values; returns +inf when the
/// smallest singular value vanishes.
pub fn condition_number(design: &DesignMatrix) -> Result<f64> {
    let (m, k) = (design.nrows(), design.ncols());
    if m < k {
        return Err(Error::Argument(format!(
            "condition number needs rows >= columns, got {m} x {k}"
        )));
    }
    // Singular values are invariant under Q; reducing tall matrices to their
    // triangular factor first keeps the SVD cheap.
    let reduced: DMatrix<f64> = if m > k {
        design.matrix.clone().qr().r()
    } else {
        design.matrix.clone()
    };
    let sv = reduced.singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Ok(f64::INFINITY);
    }
    Ok(max / min)
}

fn condition_from_triangular(r: &DMatrix<f64>) -> f64 {
    let sv = r.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return f64::INFINITY;
    }
    max / min
}

/// Ordinary least squares through a QR factorization of the design matrix.
pub fn fit_ols(
    basis: &MultiIndexSet,
    dataset: &Dataset,
    specs: &FeatureSpecs,
) -> Result<(PceModel, FitReport)> {
    let m = dataset.len();
    let k = basis.len();
    if m <= k {
        return Err(Error::Underdetermined { rows: m, cols: k });
    }
    let design = build_design_matrix(basis, dataset.points(), specs)?;
    let b = DVector::from_column_slice(dataset.responses());
    let qr = design.matrix.clone().qr();
    let q = qr.q();
    let r = qr.r();

    let condition = condition_from_triangular(&r);
    if !condition.is_finite() || condition > 1.0 / (f64::EPSILON * k as f64) {
        return Err(Error::IllConditioned { condition });
    }
    let qtb = q.transpose() * &b;
    let coeffs = r
        .solve_upper_triangular(&qtb)
        .ok_or(Error::IllConditioned { condition })?;

    let residual = &design.matrix * &coeffs - &b;
    let report = FitReport {
        solver: Solver::OlsQr,
        condition_number: condition,
        active_terms: coeffs.iter().filter(|c| **c != 0.0).count(),
        residual_norm: residual.norm(),
        degenerate: false,
    };
    let model = PceModel::new(basis.clone(), coeffs.as_slice().to_vec(), specs.clone())?
        .with_provenance(Provenance {
            seed: None,
            training_size: m,
            builder: Solver::OlsQr.to_string(),
        });
    Ok((model, report))
}

/// OLS restricted to a column subset; returns (coefficients, hat diagonal,
/// residual vector, condition number).
fn ols_on_columns(
    design: &DMatrix<f64>,
    b: &DVector<f64>,
    columns: &[usize],
) -> Option<(Vec<f64>, Vec<f64>, DVector<f64>, f64)> {
    let m = design.nrows();
    let sub = design.select_columns(columns.iter());
    let qr = sub.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let qtb = q.transpose() * b;
    let coeffs = r.solve_upper_triangular(&qtb)?;
    let hat: Vec<f64> = (0..m).map(|i| q.row(i).norm_squared()).collect();
    let residual = b - &sub * &coeffs;
    let condition = condition_from_triangular(&r);
    Some((coeffs.as_slice().to_vec(), hat, residual, condition))
}

/// Leave-one-out error from the hat-matrix diagonal of an OLS fit:
/// mean over samples of (r_m / (1 - h_mm))^2.
fn loo_error(residual: &DVector<f64>, hat: &[f64]) -> f64 {
    let m = residual.len();
    let mut acc = 0.0;
    for i in 0..m {
        let denom = 1.0 - hat[i];
        if denom <= 1e-10 {
            return f64::INFINITY;
        }
        let e = residual[i] / denom;
        acc += e * e;
    }
    acc / m as f64
}

/// Least-angle regression: traces the LAR path on the centered, normalized
/// design matrix, selects the path prefix with minimal leave-one-out error,
/// and refits the selected active set by OLS (hybrid LAR). Coefficients
/// outside the active set are exactly zero.
pub fn fit_lar(
    basis: &MultiIndexSet,
    dataset: &Dataset,
    specs: &FeatureSpecs,
    max_active: usize,
) -> Result<(PceModel, FitReport)> {
    let m = dataset.len();
    let k = basis.len();
    if m < 2 {
        return Err(Error::InsufficientData { needed: 2, got: m });
    }
    if max_active == 0 || max_active > (m - 1).min(k) {
        return Err(Error::Argument(format!(
            "max_active = {max_active} must lie in 1..={}",
            (m - 1).min(k)
        )));
    }
    let design = build_design_matrix(basis, dataset.points(), specs)?;
    let b = DVector::from_column_slice(dataset.responses());
    let ybar = b.mean();
    let bc = b.add_scalar(-ybar);
    let bscale = b.amax();

    let make_model = |coeffs: Vec<f64>, report: FitReport| -> Result<(PceModel, FitReport)> {
        let model = PceModel::new(basis.clone(), coeffs, specs.clone())?.with_provenance(
            Provenance {
                seed: None,
                training_size: m,
                builder: Solver::LarL1.to_string(),
            },
        );
        Ok((model, report))
    };

    // All-constant responses: nothing to regress on.
    if bc.amax() <= 1e-12 * (1.0 + bscale) {
        let mut coeffs = vec![0.0; k];
        coeffs[0] = ybar;
        let report = FitReport {
            solver: Solver::LarL1,
            condition_number: 1.0,
            active_terms: coeffs.iter().filter(|c| **c != 0.0).count(),
            residual_norm: (&b.add_scalar(-ybar)).norm(),
            degenerate: true,
        };
        return make_model(coeffs, report);
    }

    // Center and normalize the non-constant predictors.
    let mut usable: Vec<usize> = Vec::new();
    let mut xn = DMatrix::zeros(m, k);
    for j in 1..k {
        let col = design.matrix.column(j);
        let mean = col.mean();
        let centered = col.add_scalar(-mean);
        let norm = centered.norm();
        if norm > 1e-12 * (1.0 + col.norm()) {
            xn.set_column(j, &(centered / norm));
            usable.push(j);
        }
    }

    // LAR path (Efron et al.): at each step add the predictor most
    // correlated with the residual and advance along the equiangular
    // direction until the next predictor ties.
    let mut active: Vec<usize> = Vec::new();
    let mut in_active = vec![false; k];
    let mut mu = DVector::zeros(m);
    let steps = max_active - 1;
    let tol = 1e-12 * bc.norm().max(1.0);
    while active.len() < steps {
        let res = &bc - &mu;
        let mut cmax = 0.0;
        let mut jmax = usize::MAX;
        for &j in &usable {
            if in_active[j] {
                continue;
            }
            let c = xn.column(j).dot(&res);
            if c.abs() > cmax {
                cmax = c.abs();
                jmax = j;
            }
        }
        if jmax == usize::MAX || cmax < tol {
            break;
        }
        active.push(jmax);
        in_active[jmax] = true;

        // signed active matrix and equiangular direction
        let s = active.len();
        let signs = DVector::from_iterator(
            s,
            active.iter().map(|&j| xn.column(j).dot(&res).signum()),
        );
        let mut xa = DMatrix::zeros(m, s);
        for (idx, &j) in active.iter().enumerate() {
            xa.set_column(idx, &(xn.column(j) * signs[idx]));
        }
        let gram = xa.transpose() * &xa;
        let chol = match Cholesky::new(gram) {
            Some(c) => c,
            None => {
                active.pop();
                in_active[jmax] = false;
                break;
            }
        };
        let w0 = chol.solve(&DVector::repeat(s, 1.0));
        let denom = w0.sum();
        if denom <= 0.0 {
            active.pop();
            in_active[jmax] = false;
            break;
        }
        let a_a = denom.powf(-0.5);
        let u = &xa * &(w0 * a_a);

        // step length to the next tie, capped at the full least-squares step
        let gamma_full = cmax / a_a;
        let mut gamma = gamma_full;
        for &j in &usable {
            if in_active[j] {
                continue;
            }
            let cj = xn.column(j).dot(&res);
            let aj = xn.column(j).dot(&u);
            for cand in [(cmax - cj) / (a_a - aj), (cmax + cj) / (a_a + aj)] {
                if cand > tol && cand < gamma {
                    gamma = cand;
                }
            }
        }
        mu += u * gamma;
        if gamma >= gamma_full - tol {
            break; // residual correlation exhausted
        }
    }

    // Model selection over path prefixes (including the constant-only
    // model) by leave-one-out error; refit each candidate by OLS.
    let mut best: Option<(f64, Vec<usize>, Vec<f64>, DVector<f64>, f64)> = None;
    for t in 0..=active.len() {
        let mut columns = vec![0usize];
        columns.extend_from_slice(&active[..t]);
        if let Some((coeffs, hat, residual, condition)) =
            ols_on_columns(&design.matrix, &b, &columns)
        {
            let loo = loo_error(&residual, &hat);
            let better = match &best {
                None => true,
                Some((best_loo, ..)) => loo < *best_loo,
            };
            if better {
                best = Some((loo, columns, coeffs, residual, condition));
            }
        }
    }
    let (_, columns, sel_coeffs, residual, condition) = best.ok_or_else(|| {
        Error::NonFinite("least-angle regression found no solvable active set".into())
    })?;

    let mut coeffs = vec![0.0; k];
    for (&j, &c) in columns.iter().zip(&sel_coeffs) {
        coeffs[j] = c;
    }
    let report = FitReport {
        solver: Solver::LarL1,
        condition_number: condition,
        active_terms: coeffs.iter().filter(|c| **c != 0.0).count(),
        residual_norm: residual.norm(),
        degenerate: false,
    };
    make_model(coeffs, report)
}

/// Options for the sparse-adaptive builder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseAdaptiveOptions {
    /// Hard cap on the total degree of admitted terms.
    pub max_total_degree: u32,
    /// Basis expansion stops before the design-matrix condition number
    /// would reach this threshold.
    pub cond_threshold: f64,
}

impl Default for SparseAdaptiveOptions {
    fn default() -> Self {
        SparseAdaptiveOptions {
            max_total_degree: 10,
            cond_threshold: 10.0,
        }
    }
}

/// Incrementally grown thin QR factorization with re-orthogonalized
/// classical Gram-Schmidt columns.
struct GrowingQr {
    m: usize,
    /// Orthonormal columns.
    q: Vec<Vec<f64>>,
    /// Upper-triangular factor, column-major: r[j] holds rows 0..=j.
    r: Vec<Vec<f64>>,
    qtb: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl GrowingQr {
    fn new(m: usize) -> Self {
        GrowingQr {
            m,
            q: Vec::new(),
            r: Vec::new(),
            qtb: Vec::new(),
        }
    }

    fn ncols(&self) -> usize {
        self.q.len()
    }

    /// Orthogonalizes `v` against the current columns (two Gram-Schmidt
    /// passes) and returns (projections, orthogonal remainder, its norm).
    fn orthogonalize(&self, v: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let mut w = v.to_vec();
        let mut proj = vec![0.0; self.ncols()];
        for _ in 0..2 {
            for (j, qj) in self.q.iter().enumerate() {
                let s = dot(qj, &w);
                proj[j] += s;
                axpy(&mut w, -s, qj);
            }
        }
        let norm = dot(&w, &w).sqrt();
        (proj, w, norm)
    }

    /// Appends a column given its orthogonalization; returns false when the
    /// column is numerically dependent (it is stored with a zero pivot and
    /// excluded from solves).
    fn push_orthogonalized(
        &mut self,
        proj: Vec<f64>,
        mut w: Vec<f64>,
        norm: f64,
        vnorm: f64,
        b: &[f64],
    ) -> bool {
        let mut rcol = proj;
        let dependent = norm <= 1e-13 * vnorm.max(1e-300);
        if dependent {
            rcol.push(0.0);
            self.q.push(vec![0.0; self.m]);
            self.qtb.push(0.0);
        } else {
            rcol.push(norm);
            let inv = 1.0 / norm;
            for x in &mut w {
                *x *= inv;
            }
            self.qtb.push(dot(&w, b));
            self.q.push(w);
        }
        self.r.push(rcol);
        !dependent
    }

    fn push_column(&mut self, v: &[f64], b: &[f64]) -> bool {
        let vnorm = dot(v, v).sqrt();
        let (proj, w, norm) = self.orthogonalize(v);
        self.push_orthogonalized(proj, w, norm, vnorm, b)
    }

    fn pop_column(&mut self) {
        self.q.pop();
        self.r.pop();
        self.qtb.pop();
    }

    /// Back substitution of R s = Qᵀb; dependent columns get zero.
    fn solve(&self) -> Vec<f64> {
        let n = self.ncols();
        let mut s = vec![0.0; n];
        for j in (0..n).rev() {
            let diag = self.r[j][j];
            if diag.abs() <= 1e-300 {
                continue;
            }
            let mut acc = self.qtb[j];
            for i in j + 1..n {
                acc -= self.r[i][j] * s[i];
            }
            s[j] = acc / diag;
        }
        s
    }

    fn r_to_matrix(r: &[Vec<f64>]) -> DMatrix<f64> {
        let n = r.len();
        let mut out = DMatrix::zeros(n, n);
        for (i, col) in r.iter().enumerate() {
            for (j, &v) in col.iter().enumerate() {
                out[(j, i)] = v;
            }
        }
        out
    }

    fn condition_exact(&self) -> f64 {
        condition_from_triangular(&Self::r_to_matrix(&self.r))
    }
}

/// Warm-started extreme-singular-value estimates for the triangular factor.
struct CondEstimator {
    vmax: Vec<f64>,
    vmin: Vec<f64>,
}

impl CondEstimator {
    fn new() -> Self {
        CondEstimator {
            vmax: Vec::new(),
            vmin: Vec::new(),
        }
    }

    /// Condition number of the triangular factor given by `r` columns.
    /// Exact SVD for small factors, warm-started power/inverse iteration on
    /// RᵀR otherwise, with an exact fallback when iteration stalls.
    fn estimate(&mut self, r: &[Vec<f64>]) -> f64 {
        let n = r.len();
        if n <= 64 {
            return condition_from_triangular(&GrowingQr::r_to_matrix(r));
        }
        for v in [&mut self.vmax, &mut self.vmin] {
            v.resize(n, 0.3);
            let norm = dot(v, v).sqrt();
            for x in v.iter_mut() {
                *x /= norm;
            }
        }
        if r.iter().enumerate().any(|(j, col)| col[j].abs() <= 1e-300) {
            return f64::INFINITY;
        }

        let mul_r = |v: &[f64], out: &mut Vec<f64>| {
            out.clear();
            out.resize(n, 0.0);
            for (i, col) in r.iter().enumerate() {
                let vi = v[i];
                if vi != 0.0 {
                    for (j, &rji) in col.iter().enumerate() {
                        out[j] += rji * vi;
                    }
                }
            }
        };
        let mul_rt = |v: &[f64], out: &mut Vec<f64>| {
            out.clear();
            out.extend(r.iter().map(|col| dot(col, &v[..col.len()])));
        };
        // forward substitution Rᵀ y = v, then back substitution R z = y
        let inv_normal = |v: &[f64], y: &mut Vec<f64>, z: &mut Vec<f64>| -> bool {
            y.clear();
            y.resize(n, 0.0);
            for i in 0..n {
                let mut acc = v[i];
                for j in 0..i {
                    acc -= r[i][j] * y[j];
                }
                y[i] = acc / r[i][i];
                if !y[i].is_finite() {
                    return false;
                }
            }
            z.clear();
            z.resize(n, 0.0);
            for j in (0..n).rev() {
                let mut acc = y[j];
                for i in j + 1..n {
                    acc -= r[i][j] * z[i];
                }
                z[j] = acc / r[j][j];
                if !z[j].is_finite() {
                    return false;
                }
            }
            true
        };

        let mut buf1 = Vec::new();
        let mut buf2 = Vec::new();

        let mut sigma_max = 0.0;
        let mut prev = -1.0;
        let mut converged = false;
        for it in 0..1000 {
            mul_r(&self.vmax, &mut buf1);
            sigma_max = dot(&buf1, &buf1).sqrt();
            mul_rt(&buf1, &mut buf2);
            let nz = dot(&buf2, &buf2).sqrt();
            if nz == 0.0 {
                break;
            }
            for (v, z) in self.vmax.iter_mut().zip(&buf2) {
                *v = z / nz;
            }
            if it >= 3 && (sigma_max - prev).abs() <= 1e-10 * sigma_max {
                converged = true;
                break;
            }
            prev = sigma_max;
        }

        let mut sigma_min = f64::INFINITY;
        let mut prev = -1.0;
        let mut converged_min = false;
        for it in 0..1000 {
            if !inv_normal(&self.vmin, &mut buf1, &mut buf2) {
                return f64::INFINITY;
            }
            let nz = dot(&buf2, &buf2).sqrt();
            if nz == 0.0 || nz > 1e280 {
                return f64::INFINITY;
            }
            sigma_min = nz.powf(-0.5);
            for (v, z) in self.vmin.iter_mut().zip(&buf2) {
                *v = z / nz;
            }
            if it >= 3 && (sigma_min - prev).abs() <= 1e-10 * sigma_min {
                converged_min = true;
                break;
            }
            prev = sigma_min;
        }

        if !(converged && converged_min) || !(sigma_min > 0.0) {
            return condition_from_triangular(&GrowingQr::r_to_matrix(r));
        }
        sigma_max / sigma_min
    }
}

/// One admissible basis-term candidate tracked by the adaptive builder.
struct Candidate {
    index: MultiIndex,
    /// Raw design column.
    v: Vec<f64>,
    vnorm2: f64,
    /// Component of `v` orthogonal to the accepted columns.
    w: Vec<f64>,
    wnorm2: f64,
    /// Column position in the joint scoring factorization, when built.
    joint_col: Option<usize>,
}

/// Design column for one multi-index from per-point Legendre tables.
fn candidate_column(index: &MultiIndex, tables: &[Vec<Vec<f64>>]) -> Vec<f64> {
    tables
        .iter()
        .map(|point_table| {
            index
                .degrees()
                .iter()
                .enumerate()
                .filter(|(_, &d)| d > 0)
                .map(|(n, &d)| point_table[n][d as usize])
                .product()
        })
        .collect()
}

/// Sensitivity-driven sparse-adaptive fit.
///
/// Starting from the constant term, the basis is expanded one multi-index
/// at a time: the admissible forward neighbours of the current lower set
/// are scored by their squared coefficient (their partial variance) in a
/// tentative OLS fit, the best is admitted, and expansion stops when
/// admitting the best candidate would push the design-matrix condition
/// number to `cond_threshold` or beyond. Final coefficients come from OLS
/// on the accepted set.
pub fn fit_sparse_adaptive(
    dataset: &Dataset,
    specs: &FeatureSpecs,
    options: &SparseAdaptiveOptions,
) -> Result<(PceModel, FitReport)> {
    let m = dataset.len();
    if m < 10 {
        return Err(Error::InsufficientData { needed: 10, got: m });
    }
    if !(options.cond_threshold >= 1.0) {
        return Err(Error::Argument(format!(
            "cond_threshold = {} must be at least 1",
            options.cond_threshold
        )));
    }
    let dim = specs.len();
    let b: Vec<f64> = dataset.responses().to_vec();
    let bnorm2 = dot(&b, &b);

    // Per-point Legendre tables up to the degree cap.
    let mut tables: Vec<Vec<Vec<f64>>> = Vec::with_capacity(m);
    for p in dataset.points() {
        let x = scale_to_canonical(p, specs)?;
        let mut per_dim = Vec::with_capacity(dim);
        for &xi in &x {
            let mut t = Vec::new();
            legendre_table(options.max_total_degree, xi, &mut t);
            per_dim.push(t);
        }
        tables.push(per_dim);
    }

    let mut accepted: Vec<MultiIndex> = vec![MultiIndex::zeros(dim)];
    let mut accepted_set: HashSet<MultiIndex> = accepted.iter().cloned().collect();
    let mut aqr = GrowingQr::new(m);
    aqr.push_column(&vec![1.0; m], &b);

    let mut candidates: Vec<Candidate> = Vec::new();
    let mut joint: Option<GrowingQr> = None;
    let mut estimator = CondEstimator::new();

    // Forward neighbours of `from` that became admissible, in canonical
    // order for deterministic insertion.
    let discover = |from: &MultiIndex,
                    accepted_set: &HashSet<MultiIndex>,
                    candidates: &mut Vec<Candidate>,
                    aqr: &GrowingQr,
                    joint: &mut Option<GrowingQr>| {
        let mut new_indices = Vec::new();
        for n in 0..dim {
            let mut degrees = from.degrees().to_vec();
            degrees[n] += 1;
            let cand = MultiIndex::new(degrees);
            if cand.total_degree() > options.max_total_degree
                || accepted_set.contains(&cand)
                || candidates.iter().any(|c| c.index == cand)
            {
                continue;
            }
            let admissible = (0..dim).all(|j| {
                let d = cand.degrees()[j];
                if d == 0 {
                    return true;
                }
                let mut back = cand.degrees().to_vec();
                back[j] -= 1;
                accepted_set.contains(&MultiIndex::new(back))
            });
            if admissible {
                new_indices.push(cand);
            }
        }
        new_indices.sort_unstable_by(|a, b| a.canonical_cmp(b));
        for index in new_indices {
            let v = candidate_column(&index, &tables);
            let vnorm2 = dot(&v, &v);
            let (_, w, norm) = aqr.orthogonalize(&v);
            let joint_col = joint.as_mut().map(|jq| {
                jq.push_column(&v, &b);
                jq.ncols() - 1
            });
            candidates.push(Candidate {
                index,
                v,
                vnorm2,
                w,
                wnorm2: norm * norm,
                joint_col,
            });
        }
    };
    discover(
        &MultiIndex::zeros(dim),
        &accepted_set,
        &mut candidates,
        &aqr,
        &mut joint,
    );

    loop {
        if candidates.is_empty() || m <= accepted.len() + 1 {
            break;
        }
        let batch = m > accepted.len() + candidates.len();

        let scores: Vec<f64> = if batch {
            let rebuild = match &joint {
                Some(_) => candidates.iter().any(|c| c.joint_col.is_none()),
                None => true,
            };
            if rebuild {
                let mut jq = GrowingQr::new(m);
                for idx in &accepted {
                    let col = candidate_column(idx, &tables);
                    jq.push_column(&col, &b);
                }
                for cand in candidates.iter_mut() {
                    jq.push_column(&cand.v, &b);
                    cand.joint_col = Some(jq.ncols() - 1);
                }
                joint = Some(jq);
            }
            let solution = joint.as_ref().expect("joint factorization built").solve();
            candidates
                .iter()
                .map(|c| {
                    let s = solution[c.joint_col.expect("joint column assigned")];
                    s * s
                })
                .collect()
        } else {
            // Too few samples for a joint fit: score each candidate in its
            // own one-column extension of the accepted fit.
            joint = None;
            for cand in candidates.iter_mut() {
                cand.joint_col = None;
            }
            candidates
                .iter()
                .map(|c| {
                    if c.wnorm2 <= 1e-26 * c.vnorm2.max(1e-300) {
                        0.0
                    } else {
                        let gamma = dot(&c.w, &b) / c.wnorm2;
                        gamma * gamma
                    }
                })
                .collect()
        };

        let mut best_slot = 0;
        for i in 1..candidates.len() {
            if scores[i] > scores[best_slot]
                || (scores[i] == scores[best_slot]
                    && candidates[i]
                        .index
                        .canonical_cmp(&candidates[best_slot].index)
                        .is_lt())
            {
                best_slot = i;
            }
        }

        // Refresh the winning column exactly before the conditioning check.
        let (proj, w, norm) = aqr.orthogonalize(&candidates[best_slot].v);
        let vnorm = candidates[best_slot].vnorm2.sqrt();
        if norm <= 1e-13 * vnorm.max(1e-300) {
            break; // numerically dependent: admitting it would be singular
        }
        let mut r_tentative = aqr.r.clone();
        let mut rcol = proj.clone();
        rcol.push(norm);
        r_tentative.push(rcol);
        let cond = estimator.estimate(&r_tentative);
        if cond >= options.cond_threshold {
            break;
        }

        // Admit.
        let admitted = candidates.remove(best_slot);
        aqr.push_orthogonalized(proj, w, norm, vnorm, &b);
        let q_new = aqr.q.last().expect("column just pushed").clone();
        accepted.push(admitted.index.clone());
        accepted_set.insert(admitted.index.clone());
        for cand in candidates.iter_mut() {
            let s = dot(&q_new, &cand.w);
            axpy(&mut cand.w, -s, &q_new);
            cand.wnorm2 = (cand.wnorm2 - s * s).max(0.0);
        }
        discover(
            &admitted.index,
            &accepted_set,
            &mut candidates,
            &aqr,
            &mut joint,
        );
    }

    // Exact conditioning of the accepted matrix; trim if the in-loop
    // estimate let a boundary case through.
    let report_condition = loop {
        let cond = aqr.condition_exact();
        if accepted.len() == 1 || cond < options.cond_threshold {
            break cond;
        }
        aqr.pop_column();
        let removed = accepted.pop().expect("non-empty accepted set");
        accepted_set.remove(&removed);
    };

    let coeffs_admission_order = aqr.solve();
    let mut order: Vec<usize> = (0..accepted.len()).collect();
    order.sort_unstable_by(|&a, &b| accepted[a].canonical_cmp(&accepted[b]));
    let sorted_indices: Vec<MultiIndex> = order.iter().map(|&i| accepted[i].clone()).collect();
    let coefficients: Vec<f64> = order.iter().map(|&i| coeffs_admission_order[i]).collect();
    let set = MultiIndexSet::from_indices(dim, sorted_indices)?;

    let residual_norm = (bnorm2 - dot(&aqr.qtb, &aqr.qtb)).max(0.0).sqrt();
    let report = FitReport {
        solver: Solver::SparseAdaptive,
        condition_number: report_condition,
        active_terms: coefficients.iter().filter(|c| **c != 0.0).count(),
        residual_norm,
        degenerate: false,
    };
    let model = PceModel::new(set, coefficients, specs.clone())?.with_provenance(Provenance {
        seed: None,
        training_size: m,
        builder: Solver::SparseAdaptive.to_string(),
    });
    Ok((model, report))
}
