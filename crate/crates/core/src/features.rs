//! Design feature space: bounds, scaling to the canonical polynomial domain,
//! uniform sampling, and dataset I/O.
//!
//! The nine heat-sink features follow a fixed order
//! (l, g_f, w_f, h_f, h_b, N_f, v, T_a, P); all polynomial machinery operates
//! on the canonical box [-1, 1]^N obtained by affine scaling.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of heat-sink design features.
pub const FEATURE_COUNT: usize = 9;

/// Named accessor for the nine heat-sink features, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feature {
    Length,
    FinGap,
    FinWidth,
    FinHeight,
    BaseHeight,
    FinCount,
    AirVelocity,
    AmbientTemperature,
    PowerLoss,
}

impl Feature {
    pub const ALL: [Feature; FEATURE_COUNT] = [
        Feature::Length,
        Feature::FinGap,
        Feature::FinWidth,
        Feature::FinHeight,
        Feature::BaseHeight,
        Feature::FinCount,
        Feature::AirVelocity,
        Feature::AmbientTemperature,
        Feature::PowerLoss,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Column name used in the CSV schema.
    pub fn csv_name(self) -> &'static str {
        match self {
            Feature::Length => "l_mm",
            Feature::FinGap => "gf_mm",
            Feature::FinWidth => "wf_mm",
            Feature::FinHeight => "hf_mm",
            Feature::BaseHeight => "hb_mm",
            Feature::FinCount => "Nf",
            Feature::AirVelocity => "v_mps",
            Feature::AmbientTemperature => "Ta_C",
            Feature::PowerLoss => "P_W",
        }
    }
}

/// CSV column name of the response (heat-sink temperature).
pub const RESPONSE_COLUMN: &str = "Ts_C";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    Continuous,
    IntegerValued,
}

/// One design feature: name, unit, closed bounds, and value kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub unit: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: FeatureKind,
}

impl FeatureSpec {
    pub fn continuous(name: &str, unit: &str, lower: f64, upper: f64) -> Self {
        FeatureSpec {
            name: name.to_string(),
            unit: unit.to_string(),
            lower,
            upper,
            kind: FeatureKind::Continuous,
        }
    }

    pub fn integer_valued(name: &str, unit: &str, lower: f64, upper: f64) -> Self {
        FeatureSpec {
            name: name.to_string(),
            unit: unit.to_string(),
            lower,
            upper,
            kind: FeatureKind::IntegerValued,
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.lower && value <= self.upper
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn range(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Ordered collection of feature specifications defining the design box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpecs(Vec<FeatureSpec>);

impl FeatureSpecs {
    /// Builds a feature space, checking that every interval is non-empty.
    pub fn new(specs: Vec<FeatureSpec>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Argument("feature space must be non-empty".into()));
        }
        for s in &specs {
            if !(s.lower < s.upper) {
                return Err(Error::Argument(format!(
                    "feature `{}`: lower bound {} must be below upper bound {}",
                    s.name, s.lower, s.upper
                )));
            }
        }
        Ok(FeatureSpecs(specs))
    }

    /// The nine heat-sink features with their design-range bounds.
    pub fn heat_sink() -> Self {
        FeatureSpecs(vec![
            FeatureSpec::continuous("l_mm", "mm", 50.0, 200.0),
            FeatureSpec::continuous("gf_mm", "mm", 3.0, 8.0),
            FeatureSpec::continuous("wf_mm", "mm", 1.4, 4.0),
            FeatureSpec::continuous("hf_mm", "mm", 16.0, 45.0),
            FeatureSpec::continuous("hb_mm", "mm", 4.0, 15.0),
            FeatureSpec::integer_valued("Nf", "", 5.0, 25.0),
            FeatureSpec::continuous("v_mps", "m/s", 1.0, 5.0),
            FeatureSpec::continuous("Ta_C", "degC", 25.0, 45.0),
            FeatureSpec::continuous("P_W", "W", 115.0, 140.0),
        ])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> &FeatureSpec {
        &self.0[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, FeatureSpec> {
        self.0.iter()
    }

    /// Index of the feature with the given name, if present.
    pub fn position(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|s| s.name == name)
    }

    /// Checks that a point matches this space and lies inside the box.
    pub fn validate_point(&self, point: &DesignPoint) -> Result<()> {
        if point.len() != self.len() {
            return Err(Error::Argument(format!(
                "point has {} components, feature space has {}",
                point.len(),
                self.len()
            )));
        }
        for (spec, &v) in self.0.iter().zip(point.values()) {
            if !v.is_finite() || !spec.contains(v) {
                return Err(Error::BoundsViolation {
                    feature: spec.name.clone(),
                    value: v,
                    lower: spec.lower,
                    upper: spec.upper,
                });
            }
        }
        Ok(())
    }

    /// Center of the design box.
    pub fn midpoint(&self) -> DesignPoint {
        DesignPoint::new(self.0.iter().map(|s| s.midpoint()).collect())
    }
}

impl Default for FeatureSpecs {
    fn default() -> Self {
        FeatureSpecs::heat_sink()
    }
}

/// One design configuration; components follow the feature-space order.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignPoint(Vec<f64>);

impl DesignPoint {
    pub fn new(values: Vec<f64>) -> Self {
        DesignPoint(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Component accessor for the heat-sink layout.
    pub fn get(&self, feature: Feature) -> f64 {
        self.0[feature.index()]
    }
}

impl From<Vec<f64>> for DesignPoint {
    fn from(values: Vec<f64>) -> Self {
        DesignPoint(values)
    }
}

/// Maps a design point into the canonical box [-1, 1]^N.
///
/// Component i maps via x_i = 2 (y_i - lower_i) / (upper_i - lower_i) - 1,
/// so the lower bound lands exactly on -1 and the upper bound on +1.
pub fn scale_to_canonical(point: &DesignPoint, specs: &FeatureSpecs) -> Result<Vec<f64>> {
    specs.validate_point(point)?;
    Ok(point
        .values()
        .iter()
        .zip(specs.iter())
        .map(|(&y, s)| 2.0 * (y - s.lower) / (s.upper - s.lower) - 1.0)
        .collect())
}

/// Inverse of [`scale_to_canonical`]; accepts only canonical coordinates.
pub fn unscale_from_canonical(x: &[f64], specs: &FeatureSpecs) -> Result<DesignPoint> {
    if x.len() != specs.len() {
        return Err(Error::Argument(format!(
            "canonical vector has {} components, feature space has {}",
            x.len(),
            specs.len()
        )));
    }
    let mut values = Vec::with_capacity(x.len());
    for (&xi, s) in x.iter().zip(specs.iter()) {
        if !(-1.0..=1.0).contains(&xi) {
            return Err(Error::Domain(format!(
                "canonical component for `{}` is {xi}, outside [-1, 1]",
                s.name
            )));
        }
        let y = s.lower + 0.5 * (xi + 1.0) * (s.upper - s.lower);
        // Guard against round-off pushing the endpoint past the bound.
        values.push(y.clamp(s.lower, s.upper));
    }
    Ok(DesignPoint(values))
}

/// Draws `n` independent uniform points from the design box.
///
/// Integer-valued features are rounded to the nearest admissible integer.
/// The sequence is fully determined by `seed`.
pub fn sample_uniform(n: usize, specs: &FeatureSpecs, seed: u64) -> Result<Vec<DesignPoint>> {
    if n == 0 {
        return Err(Error::Argument("sample count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let values = specs
            .iter()
            .map(|s| {
                let v = rng.gen_range(s.lower..s.upper);
                match s.kind {
                    FeatureKind::Continuous => v,
                    FeatureKind::IntegerValued => v.round().clamp(s.lower, s.upper),
                }
            })
            .collect();
        points.push(DesignPoint(values));
    }
    Ok(points)
}

/// Labeled design data: points with their observed heat-sink temperatures.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<DesignPoint>,
    responses: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset, rejecting length mismatches, empty data, and
    /// identical points carrying conflicting responses.
    pub fn new(points: Vec<DesignPoint>, responses: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Argument("dataset must contain at least one row".into()));
        }
        if points.len() != responses.len() {
            return Err(Error::Argument(format!(
                "{} points but {} responses",
                points.len(),
                responses.len()
            )));
        }
        let mut seen: HashMap<Vec<u64>, f64> = HashMap::with_capacity(points.len());
        for (p, &r) in points.iter().zip(&responses) {
            let key: Vec<u64> = p.values().iter().map(|v| v.to_bits()).collect();
            if let Some(&prev) = seen.get(&key) {
                if prev.to_bits() != r.to_bits() {
                    return Err(Error::Argument(format!(
                        "identical points with conflicting responses {prev} and {r}"
                    )));
                }
            } else {
                seen.insert(key, r);
            }
        }
        Ok(Dataset { points, responses })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[DesignPoint] {
        &self.points
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    /// Row subset in the given index order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            points: indices.iter().map(|&i| self.points[i].clone()).collect(),
            responses: indices.iter().map(|&i| self.responses[i]).collect(),
        }
    }

    /// Reads a labeled dataset; the header must match the schema exactly and
    /// every row must lie inside the feature bounds.
    pub fn load_csv(path: impl AsRef<Path>, specs: &FeatureSpecs) -> Result<Dataset> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let display = path.display().to_string();
        let mut expected: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
        expected.push(RESPONSE_COLUMN);

        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::Parse {
            path: display.clone(),
            row: 1,
            column: 1,
            message: "empty file".into(),
        })?;
        let header_cols: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
        if header_cols != expected {
            return Err(Error::Parse {
                path: display,
                row: 1,
                column: 1,
                message: format!(
                    "header `{}` does not match schema `{}`",
                    header_cols.join(","),
                    expected.join(",")
                ),
            });
        }

        let mut points = Vec::new();
        let mut responses = Vec::new();
        for (line_idx, line) in lines {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let row = line_idx + 1;
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != expected.len() {
                return Err(Error::Parse {
                    path: display,
                    row,
                    column: cells.len(),
                    message: format!("expected {} columns, found {}", expected.len(), cells.len()),
                });
            }
            let mut values = Vec::with_capacity(specs.len());
            for (col, cell) in cells.iter().enumerate() {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    path: display.clone(),
                    row,
                    column: col + 1,
                    message: format!("`{cell}` is not a number"),
                })?;
                if col < specs.len() {
                    let spec = specs.get(col);
                    if !v.is_finite() || !spec.contains(v) {
                        return Err(Error::Parse {
                            path: display,
                            row,
                            column: col + 1,
                            message: format!(
                                "feature `{}` = {v} outside bounds [{}, {}]",
                                spec.name, spec.lower, spec.upper
                            ),
                        });
                    }
                    values.push(v);
                } else {
                    responses.push(v);
                }
            }
            points.push(DesignPoint(values));
        }
        Dataset::new(points, responses)
    }

    /// Writes this dataset in the CSV schema; numeric cells use the shortest
    /// representation that parses back to the identical value.
    pub fn save_csv(&self, path: impl AsRef<Path>, specs: &FeatureSpecs) -> Result<()> {
        let mut out = String::new();
        for s in specs.iter() {
            out.push_str(&s.name);
            out.push(',');
        }
        out.push_str(RESPONSE_COLUMN);
        out.push('\n');
        for (p, r) in self.points.iter().zip(&self.responses) {
            for v in p.values() {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{r}");
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heat_sink_specs_match_design_ranges() {
        let specs = FeatureSpecs::heat_sink();
        assert_eq!(specs.len(), FEATURE_COUNT);
        let bounds: Vec<(f64, f64)> = specs.iter().map(|s| (s.lower, s.upper)).collect();
        assert_eq!(
            bounds,
            vec![
                (50.0, 200.0),
                (3.0, 8.0),
                (1.4, 4.0),
                (16.0, 45.0),
                (4.0, 15.0),
                (5.0, 25.0),
                (1.0, 5.0),
                (25.0, 45.0),
                (115.0, 140.0),
            ]
        );
        let integer_features: Vec<&str> = specs
            .iter()
            .filter(|s| s.kind == FeatureKind::IntegerValued)
            .map(|s| s.name.as_str())
            .collect();
        assert_eq!(integer_features, vec!["Nf"]);
    }

    #[test]
    fn scaling_midpoint_and_bounds() {
        let specs = FeatureSpecs::heat_sink();
        let mid = specs.midpoint();
        let x = scale_to_canonical(&mid, &specs).unwrap();
        // l = 125 has an exactly representable midpoint; the others map to
        // zero up to one rounding of the midpoint value itself.
        assert_eq!(x[Feature::Length.index()], 0.0);
        for xi in &x {
            assert!(xi.abs() < 1e-15);
        }

        let mut v = mid.values().to_vec();
        v[Feature::Length.index()] = 200.0;
        let x = scale_to_canonical(&DesignPoint::new(v), &specs).unwrap();
        assert_eq!(x[Feature::Length.index()], 1.0);

        // v = 2 m/s on [1, 5]: 2*(2-1)/4 - 1 = -0.5
        let mut v = mid.values().to_vec();
        v[Feature::AirVelocity.index()] = 2.0;
        let x = scale_to_canonical(&DesignPoint::new(v), &specs).unwrap();
        assert_eq!(x[Feature::AirVelocity.index()], -0.5);
    }

    #[test]
    fn unscale_inverts_scale() {
        let specs = FeatureSpecs::heat_sink();
        let zero = vec![0.0; FEATURE_COUNT];
        let p = unscale_from_canonical(&zero, &specs).unwrap();
        assert_eq!(p, specs.midpoint());

        let mut x = zero.clone();
        x[Feature::Length.index()] = 1.0;
        let p = unscale_from_canonical(&x, &specs).unwrap();
        assert_eq!(p.get(Feature::Length), 200.0);

        let mut x = zero;
        x[Feature::AirVelocity.index()] = -0.5;
        let p = unscale_from_canonical(&x, &specs).unwrap();
        assert_eq!(p.get(Feature::AirVelocity), 2.0);
    }

    #[test]
    fn scale_rejects_out_of_bounds() {
        let specs = FeatureSpecs::heat_sink();
        let mut v = specs.midpoint().values().to_vec();
        v[Feature::PowerLoss.index()] = 141.0;
        let err = scale_to_canonical(&DesignPoint::new(v), &specs).unwrap_err();
        assert!(matches!(err, Error::BoundsViolation { ref feature, .. } if feature == "P_W"));
    }

    #[test]
    fn unscale_rejects_non_canonical() {
        let specs = FeatureSpecs::heat_sink();
        let mut x = vec![0.0; FEATURE_COUNT];
        x[3] = 1.5;
        assert!(matches!(
            unscale_from_canonical(&x, &specs),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn sampling_is_deterministic_and_in_bounds() {
        let specs = FeatureSpecs::heat_sink();
        let a = sample_uniform(1000, &specs, 42).unwrap();
        let b = sample_uniform(1000, &specs, 42).unwrap();
        assert_eq!(a, b);
        for p in &a {
            specs.validate_point(p).unwrap();
            let nf = p.get(Feature::FinCount);
            assert_eq!(nf, nf.round());
        }
        let c = sample_uniform(1000, &specs, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sampling_rejects_zero_count() {
        let specs = FeatureSpecs::heat_sink();
        assert!(matches!(
            sample_uniform(0, &specs, 1),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn sample_means_near_midpoints() {
        let specs = FeatureSpecs::heat_sink();
        let pts = sample_uniform(10_000, &specs, 7).unwrap();
        for (i, spec) in specs.iter().enumerate() {
            let mean = pts.iter().map(|p| p.values()[i]).sum::<f64>() / pts.len() as f64;
            let mid = spec.midpoint();
            assert!(
                (mean - mid).abs() <= 0.02 * mid,
                "feature {} mean {mean} too far from midpoint {mid}",
                spec.name
            );
        }
    }

    #[test]
    fn csv_round_trip_single_row() {
        let specs = FeatureSpecs::heat_sink();
        let ds = Dataset::new(vec![specs.midpoint()], vec![60.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.csv");
        ds.save_csv(&path, &specs).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("l_mm,gf_mm,wf_mm,hf_mm,hb_mm,Nf,v_mps,Ta_C,P_W,Ts_C\n"));
        let back = Dataset::load_csv(&path, &specs).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn csv_rejects_missing_response_column() {
        let specs = FeatureSpecs::heat_sink();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "l_mm,gf_mm,wf_mm,hf_mm,hb_mm,Nf,v_mps,Ta_C,P_W\n125,5.5,2.7,30.5,9.5,15,3,35,127.5\n",
        )
        .unwrap();
        let err = Dataset::load_csv(&path, &specs).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, .. }));
    }

    #[test]
    fn csv_rejects_out_of_bounds_row() {
        let specs = FeatureSpecs::heat_sink();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("oob.csv");
        std::fs::write(
            &path,
            "l_mm,gf_mm,wf_mm,hf_mm,hb_mm,Nf,v_mps,Ta_C,P_W,Ts_C\n125,5.5,2.7,30.5,9.5,15,9.9,35,127.5,60\n",
        )
        .unwrap();
        let err = Dataset::load_csv(&path, &specs).unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, 7);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn csv_rejects_non_numeric_cell() {
        let specs = FeatureSpecs::heat_sink();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nan.csv");
        std::fs::write(
            &path,
            "l_mm,gf_mm,wf_mm,hf_mm,hb_mm,Nf,v_mps,Ta_C,P_W,Ts_C\n125,abc,2.7,30.5,9.5,15,3,35,127.5,60\n",
        )
        .unwrap();
        let err = Dataset::load_csv(&path, &specs).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, column: 2, .. }));
    }

    #[test]
    fn dataset_rejects_conflicting_duplicates() {
        let specs = FeatureSpecs::heat_sink();
        let p = specs.midpoint();
        assert!(Dataset::new(vec![p.clone(), p.clone()], vec![60.0, 61.0]).is_err());
        assert!(Dataset::new(vec![p.clone(), p], vec![60.0, 60.0]).is_ok());
    }
}
