//! Ensembles of surrogates over reshuffled train/test splits.
//!
//! The dataset is re-ordered once per member with a seed derived from
//! (master seed, member index); each member trains on the first M rows of
//! its permutation and is scored on the next J rows, so the splits are
//! disjoint by construction. Aggregating per-member test errors and
//! predictions quantifies the model-form uncertainty left by the data.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{MultiIndexSet, PceModel, Provenance};
use crate::error::{Error, Result};
use crate::features::{Dataset, DesignPoint, FeatureSpecs};
use crate::regression::{
    fit_lar, fit_ols, fit_sparse_adaptive, FitReport, SparseAdaptiveOptions,
};

/// Relative prediction error |(truth - pred) / truth|.
pub fn relative_error(truth: f64, pred: f64) -> Result<f64> {
    if truth == 0.0 {
        return Err(Error::Domain(
            "relative error undefined for zero truth value".into(),
        ));
    }
    Ok(((truth - pred) / truth).abs())
}

fn paired_errors(truths: &[f64], preds: &[f64]) -> Result<Vec<f64>> {
    if truths.is_empty() || truths.len() != preds.len() {
        return Err(Error::Argument(format!(
            "need equal non-empty lengths, got {} truths and {} predictions",
            truths.len(),
            preds.len()
        )));
    }
    truths
        .iter()
        .zip(preds)
        .map(|(&t, &p)| relative_error(t, p))
        .collect()
}

/// Mean absolute percentage error over paired values.
pub fn mape(truths: &[f64], preds: &[f64]) -> Result<f64> {
    let errs = paired_errors(truths, preds)?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// Maximum absolute percentage error over paired values.
pub fn max_ape(truths: &[f64], preds: &[f64]) -> Result<f64> {
    let errs = paired_errors(truths, preds)?;
    Ok(errs.into_iter().fold(0.0, f64::max))
}

/// Reshuffling plan: how many members to train and how each member's
/// train/test rows are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub master_seed: u64,
    /// Number of ensemble members I.
    pub reshuffles: usize,
    /// Training rows per member M.
    pub train_size: usize,
    /// Test rows per member J.
    pub test_size: usize,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SplitPlan {
    pub fn validate(&self, dataset_len: usize) -> Result<()> {
        if self.reshuffles == 0 {
            return Err(Error::Argument("plan needs at least one reshuffle".into()));
        }
        if self.train_size == 0 || self.test_size == 0 {
            return Err(Error::Argument(
                "train and test sizes must be positive".into(),
            ));
        }
        if self.train_size + self.test_size > dataset_len {
            return Err(Error::Argument(format!(
                "plan needs {} + {} rows but the dataset has {dataset_len}",
                self.train_size, self.test_size
            )));
        }
        Ok(())
    }

    /// Independent seed stream for member `i`.
    pub fn member_seed(&self, member: usize) -> u64 {
        splitmix64(self.master_seed ^ splitmix64(member as u64 + 1))
    }

    /// Disjoint (train, test) row indices for member `i`.
    pub fn member_split(&self, member: usize, dataset_len: usize) -> (Vec<usize>, Vec<usize>) {
        let mut indices: Vec<usize> = (0..dataset_len).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.member_seed(member));
        indices.shuffle(&mut rng);
        let train = indices[..self.train_size].to_vec();
        let test = indices[self.train_size..self.train_size + self.test_size].to_vec();
        (train, test)
    }
}

/// Fixed-structure basis choice for OLS / LAR fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BasisSpec {
    TotalDegree { degree: u32 },
    TensorProduct { degree: u32 },
    Hyperbolic { degree: u32, q: f64 },
}

impl BasisSpec {
    pub fn build(&self, dim: usize) -> Result<MultiIndexSet> {
        match *self {
            BasisSpec::TotalDegree { degree } => MultiIndexSet::total_degree(dim, degree),
            BasisSpec::TensorProduct { degree } => MultiIndexSet::tensor_product(dim, degree),
            BasisSpec::Hyperbolic { degree, q } => MultiIndexSet::hyperbolic(dim, degree, q),
        }
    }
}

/// Which fitter trains each ensemble member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum FitSettings {
    Ols {
        basis: BasisSpec,
    },
    Lar {
        basis: BasisSpec,
        max_active: usize,
    },
    SparseAdaptive {
        #[serde(flatten)]
        options: SparseAdaptiveOptions,
    },
}

impl FitSettings {
    pub fn fit(&self, dataset: &Dataset, specs: &FeatureSpecs) -> Result<(PceModel, FitReport)> {
        match self {
            FitSettings::Ols { basis } => fit_ols(&basis.build(specs.len())?, dataset, specs),
            FitSettings::Lar { basis, max_active } => {
                fit_lar(&basis.build(specs.len())?, dataset, specs, *max_active)
            }
            FitSettings::SparseAdaptive { options } => {
                fit_sparse_adaptive(dataset, specs, options)
            }
        }
    }
}

/// Test errors of one trained member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemberError {
    pub eps_mean: f64,
    pub eps_max: f64,
}

/// Ensemble-level aggregation of the member test errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mu_mean: f64,
    pub sigma_mean: f64,
    pub mu_max: f64,
    pub sigma_max: f64,
    /// Absolute worst case across members.
    pub worst: f64,
}

fn population_mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    // Identical inputs must give exactly zero spread; summation round-off
    // would otherwise leave noise at the 1e-15 level.
    let mut iter = values.clone();
    if let Some(first) = iter.next() {
        if iter.all(|v| v.to_bits() == first.to_bits()) {
            return (first, 0.0);
        }
    }
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Population (1/I) mean and standard deviation of the member errors.
pub fn error_stats_from(errors: &[MemberError]) -> ErrorStats {
    let (mu_mean, sigma_mean) = population_mean_std(errors.iter().map(|e| e.eps_mean));
    let (mu_max, sigma_max) = population_mean_std(errors.iter().map(|e| e.eps_max));
    let worst = errors.iter().map(|e| e.eps_max).fold(0.0, f64::max);
    ErrorStats {
        mu_mean,
        sigma_mean,
        mu_max,
        sigma_max,
        worst,
    }
}

/// I surrogates trained on reshuffled splits of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    members: Vec<PceModel>,
    member_errors: Vec<MemberError>,
    member_reports: Vec<FitReport>,
    plan: SplitPlan,
    settings: FitSettings,
    specs: FeatureSpecs,
}

impl EnsembleModel {
    /// Assembles an ensemble from parts, checking the container invariants.
    pub fn from_parts(
        members: Vec<PceModel>,
        member_errors: Vec<MemberError>,
        member_reports: Vec<FitReport>,
        plan: SplitPlan,
        settings: FitSettings,
        specs: FeatureSpecs,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Argument("ensemble must have members".into()));
        }
        if members.len() != member_errors.len() || members.len() != member_reports.len() {
            return Err(Error::Argument(
                "members, errors, and reports must have equal lengths".into(),
            ));
        }
        if members.iter().any(|m| m.specs() != &specs) {
            return Err(Error::Argument(
                "all members must share the ensemble feature space".into(),
            ));
        }
        Ok(EnsembleModel {
            members,
            member_errors,
            member_reports,
            plan,
            settings,
            specs,
        })
    }

    pub fn members(&self) -> &[PceModel] {
        &self.members
    }

    pub fn member_errors(&self) -> &[MemberError] {
        &self.member_errors
    }

    pub fn member_reports(&self) -> &[FitReport] {
        &self.member_reports
    }

    pub fn plan(&self) -> &SplitPlan {
        &self.plan
    }

    pub fn settings(&self) -> &FitSettings {
        &self.settings
    }

    pub fn specs(&self) -> &FeatureSpecs {
        &self.specs
    }

    pub fn error_stats(&self) -> ErrorStats {
        error_stats_from(&self.member_errors)
    }

    /// Ensemble prediction: mean and population standard deviation of the
    /// member predictions at a point.
    pub fn predict_with_uncertainty(&self, point: &DesignPoint) -> Result<(f64, f64)> {
        let preds: Vec<f64> = self
            .members
            .iter()
            .map(|m| m.eval(point))
            .collect::<Result<_>>()?;
        Ok(population_mean_std(preds.iter().copied()))
    }

    /// Writes `meta` (plan, settings, per-member records) plus one
    /// `member_<i>` model file per member into `dir`.
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let meta = EnsembleMeta {
            schema_version: 1,
            plan: self.plan,
            settings: self.settings,
            specs: self.specs.clone(),
            member_errors: self.member_errors.clone(),
            member_reports: self.member_reports.clone(),
        };
        let text =
            serde_json::to_string_pretty(&meta).map_err(|e| Error::Serialization(e.to_string()))?;
        std::fs::write(dir.join("meta"), text)?;
        for (i, member) in self.members.iter().enumerate() {
            member.save(dir.join(format!("member_{i}")))?;
        }
        Ok(())
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let text = std::fs::read_to_string(dir.join("meta"))?;
        let meta: EnsembleMeta =
            serde_json::from_str(&text).map_err(|e| Error::Serialization(e.to_string()))?;
        if meta.schema_version != 1 {
            return Err(Error::Serialization(format!(
                "unsupported ensemble schema version {}",
                meta.schema_version
            )));
        }
        let members: Vec<PceModel> = (0..meta.plan.reshuffles)
            .map(|i| PceModel::load(dir.join(format!("member_{i}"))))
            .collect::<Result<_>>()?;
        EnsembleModel::from_parts(
            members,
            meta.member_errors,
            meta.member_reports,
            meta.plan,
            meta.settings,
            meta.specs,
        )
    }
}

#[derive(Serialize, Deserialize)]
struct EnsembleMeta {
    schema_version: u32,
    plan: SplitPlan,
    settings: FitSettings,
    specs: FeatureSpecs,
    member_errors: Vec<MemberError>,
    member_reports: Vec<FitReport>,
}

/// Trains one member per reshuffle; members run in parallel but the result
/// is independent of the thread count.
pub fn train_ensemble(
    dataset: &Dataset,
    specs: &FeatureSpecs,
    plan: &SplitPlan,
    settings: &FitSettings,
) -> Result<EnsembleModel> {
    plan.validate(dataset.len())?;
    let parts: Vec<(PceModel, FitReport, MemberError)> = (0..plan.reshuffles)
        .into_par_iter()
        .map(|i| {
            let (train_idx, test_idx) = plan.member_split(i, dataset.len());
            let train = dataset.subset(&train_idx);
            let (model, report) = settings.fit(&train, specs)?;
            let builder = model
                .provenance()
                .map(|p| p.builder.clone())
                .unwrap_or_default();
            let model = model.with_provenance(Provenance {
                seed: Some(plan.member_seed(i)),
                training_size: plan.train_size,
                builder,
            });
            let test = dataset.subset(&test_idx);
            let preds: Vec<f64> = test
                .points()
                .iter()
                .map(|p| model.eval(p))
                .collect::<Result<_>>()?;
            let member_error = MemberError {
                eps_mean: mape(test.responses(), &preds)?,
                eps_max: max_ape(test.responses(), &preds)?,
            };
            Ok((model, report, member_error))
        })
        .collect::<Result<_>>()?;

    let mut members = Vec::with_capacity(parts.len());
    let mut member_errors = Vec::with_capacity(parts.len());
    let mut member_reports = Vec::with_capacity(parts.len());
    for (model, report, err) in parts {
        members.push(model);
        member_errors.push(err);
        member_reports.push(report);
    }
    EnsembleModel::from_parts(
        members,
        member_errors,
        member_reports,
        *plan,
        *settings,
        specs.clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::sample_uniform;
    use crate::thermal::synthetic_oracle;
    use approx::assert_relative_eq;

    fn oracle_dataset(n: usize, seed: u64) -> (Dataset, FeatureSpecs) {
        let specs = FeatureSpecs::heat_sink();
        let points = sample_uniform(n, &specs, seed).unwrap();
        let responses: Vec<f64> = points
            .iter()
            .map(|p| synthetic_oracle(p, &specs).unwrap())
            .collect();
        (Dataset::new(points, responses).unwrap(), specs)
    }

    #[test]
    fn relative_error_examples() {
        assert_eq!(relative_error(100.0, 100.0).unwrap(), 0.0);
        assert_relative_eq!(relative_error(100.0, 90.0).unwrap(), 0.1);
        assert_relative_eq!(relative_error(50.0, 55.0).unwrap(), 0.1);
        assert!(relative_error(0.0, 1.0).is_err());
    }

    #[test]
    fn mape_and_max_ape_examples() {
        let t = [100.0, 100.0];
        let p = [90.0, 110.0];
        assert_relative_eq!(mape(&t, &p).unwrap(), 0.1);
        assert_relative_eq!(max_ape(&t, &p).unwrap(), 0.1);

        let t = [100.0, 200.0];
        let p = [110.0, 100.0];
        assert_relative_eq!(mape(&t, &p).unwrap(), 0.3);
        assert_relative_eq!(max_ape(&t, &p).unwrap(), 0.5);

        assert_eq!(mape(&t, &t).unwrap(), 0.0);
        assert!(mape(&t, &[1.0]).is_err());
    }

    #[test]
    fn splits_are_disjoint_and_deterministic() {
        let plan = SplitPlan {
            master_seed: 7,
            reshuffles: 20,
            train_size: 100,
            test_size: 135,
        };
        for i in 0..20 {
            let (train, test) = plan.member_split(i, 935);
            assert_eq!(train.len(), 100);
            assert_eq!(test.len(), 135);
            let overlap = train.iter().any(|t| test.contains(t));
            assert!(!overlap, "member {i} has overlapping splits");
            let (train2, test2) = plan.member_split(i, 935);
            assert_eq!(train, train2);
            assert_eq!(test, test2);
        }
        assert_ne!(plan.member_split(0, 935).0, plan.member_split(1, 935).0);
    }

    #[test]
    fn error_stats_two_member_example() {
        let errors = [
            MemberError {
                eps_mean: 0.1,
                eps_max: 0.2,
            },
            MemberError {
                eps_mean: 0.3,
                eps_max: 0.6,
            },
        ];
        let stats = error_stats_from(&errors);
        assert_relative_eq!(stats.mu_mean, 0.2);
        assert_relative_eq!(stats.sigma_mean, 0.1);
        assert_relative_eq!(stats.mu_max, 0.4);
        assert_relative_eq!(stats.sigma_max, 0.2);
        assert_eq!(stats.worst, 0.6);
        assert!(stats.worst >= stats.mu_max);
    }

    #[test]
    fn single_member_has_zero_sigmas() {
        let (dataset, specs) = oracle_dataset(300, 3);
        let plan = SplitPlan {
            master_seed: 1,
            reshuffles: 1,
            train_size: 150,
            test_size: 135,
        };
        let settings = FitSettings::Ols {
            basis: BasisSpec::TotalDegree { degree: 2 },
        };
        let e = train_ensemble(&dataset, &specs, &plan, &settings).unwrap();
        let stats = e.error_stats();
        assert_eq!(stats.sigma_mean, 0.0);
        assert_eq!(stats.sigma_max, 0.0);
        assert_eq!(stats.mu_mean, e.member_errors()[0].eps_mean);
        assert_eq!(stats.worst, stats.mu_max);
    }

    #[test]
    fn infeasible_plan_is_rejected() {
        let (dataset, specs) = oracle_dataset(200, 4);
        let plan = SplitPlan {
            master_seed: 1,
            reshuffles: 2,
            train_size: 100,
            test_size: 135,
        };
        let settings = FitSettings::Ols {
            basis: BasisSpec::TotalDegree { degree: 1 },
        };
        assert!(matches!(
            train_ensemble(&dataset, &specs, &plan, &settings),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn duplicated_rows_give_identical_members() {
        let specs = FeatureSpecs::heat_sink();
        let p = specs.midpoint();
        let points: Vec<_> = (0..40).map(|_| p.clone()).collect();
        let dataset = Dataset::new(points, vec![60.0; 40]).unwrap();
        let plan = SplitPlan {
            master_seed: 9,
            reshuffles: 5,
            train_size: 20,
            test_size: 10,
        };
        let settings = FitSettings::SparseAdaptive {
            options: SparseAdaptiveOptions::default(),
        };
        let e = train_ensemble(&dataset, &specs, &plan, &settings).unwrap();
        let stats = e.error_stats();
        assert_eq!(stats.sigma_mean, 0.0);
        assert_eq!(stats.sigma_max, 0.0);
        let (mean, std) = e.predict_with_uncertainty(&p).unwrap();
        assert_relative_eq!(mean, 60.0, max_relative = 1e-12);
        assert_eq!(std, 0.0);
    }

    #[test]
    fn prediction_mean_within_member_range() {
        let (dataset, specs) = oracle_dataset(400, 5);
        let plan = SplitPlan {
            master_seed: 21,
            reshuffles: 4,
            train_size: 150,
            test_size: 135,
        };
        let settings = FitSettings::Ols {
            basis: BasisSpec::TotalDegree { degree: 2 },
        };
        let e = train_ensemble(&dataset, &specs, &plan, &settings).unwrap();
        for p in sample_uniform(25, &specs, 77).unwrap() {
            let (mean, std) = e.predict_with_uncertainty(&p).unwrap();
            let preds: Vec<f64> = e.members().iter().map(|m| m.eval(&p).unwrap()).collect();
            let lo = preds.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = preds.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(mean >= lo && mean <= hi);
            assert!(std >= 0.0);
        }
    }

    #[test]
    fn ensemble_round_trips_through_directory() {
        let (dataset, specs) = oracle_dataset(300, 6);
        let plan = SplitPlan {
            master_seed: 13,
            reshuffles: 3,
            train_size: 120,
            test_size: 100,
        };
        let settings = FitSettings::Lar {
            basis: BasisSpec::TotalDegree { degree: 2 },
            max_active: 20,
        };
        let e = train_ensemble(&dataset, &specs, &plan, &settings).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ensemble");
        e.save_dir(&path).unwrap();
        let back = EnsembleModel::load_dir(&path).unwrap();
        assert_eq!(back, e);
        let p = specs.midpoint();
        assert_eq!(
            e.predict_with_uncertainty(&p).unwrap().0.to_bits(),
            back.predict_with_uncertainty(&p).unwrap().0.to_bits()
        );
    }
}
