//! Closed-form thermal quantities, heat-sink volume, and the synthetic
//! analytic stand-in for the expensive flow simulation.

use crate::error::{Error, Result};
use crate::features::{DesignPoint, Feature, FeatureSpecs};

/// Device-level thermal constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalConstants {
    /// Worst-case junction-to-case thermal resistance, K/W.
    pub r_th_jc: f64,
    /// Maximum admissible junction temperature, degC.
    pub t_j_limit: f64,
}

impl Default for ThermalConstants {
    fn default() -> Self {
        ThermalConstants {
            r_th_jc: 0.74,
            t_j_limit: 175.0,
        }
    }
}

/// Steady-state sink-to-ambient thermal resistance (T_s - T_a) / P, K/W.
pub fn thermal_resistance_sa(t_s: f64, t_a: f64, power: f64) -> Result<f64> {
    if power <= 0.0 {
        return Err(Error::Argument(format!(
            "power loss must be positive, got {power}"
        )));
    }
    Ok((t_s - t_a) / power)
}

/// Worst-case junction temperature from the heat-sink temperature:
/// T_a + (R_th,j-c + R_th,s-a) * P, which algebraically equals
/// T_s + R_th,j-c * P.
pub fn junction_temperature(
    t_s: f64,
    t_a: f64,
    power: f64,
    constants: &ThermalConstants,
) -> Result<f64> {
    let r_sa = thermal_resistance_sa(t_s, t_a, power)?;
    Ok(t_a + (constants.r_th_jc + r_sa) * power)
}

/// Heat-sink material volume in mm^3: base slab at full width plus fin
/// material, V = l * (W * h_b + N_f * w_f * h_f) with
/// W = N_f * w_f + (N_f - 1) * g_f.
pub fn heatsink_volume(point: &DesignPoint, specs: &FeatureSpecs) -> Result<f64> {
    specs.validate_point(point)?;
    let l = point.get(Feature::Length);
    let g_f = point.get(Feature::FinGap);
    let w_f = point.get(Feature::FinWidth);
    let h_f = point.get(Feature::FinHeight);
    let h_b = point.get(Feature::BaseHeight);
    let n_f = point.get(Feature::FinCount);
    let width = n_f * w_f + (n_f - 1.0) * g_f;
    Ok(l * (width * h_b + n_f * w_f * h_f))
}

// Synthetic-oracle constants, fixed and versioned: every labeled dataset in
// the test suite must be reproducible bit-for-bit.
const HTC_COEFF: f64 = 15.0; // W/(m^2 K) per (m/s)^0.8
const FIN_CONDUCTIVITY: f64 = 200.0; // W/(m K)
const CONTACT_RESISTIVITY: f64 = 0.005; // m^2 K / W
const RESISTANCE_CAP: f64 = 1.0; // K/W, parallel saturation

/// Deterministic smooth stand-in for the flow simulation: a fin-array
/// forced-convection model with fin efficiency, base conduction, and a
/// contact term. The raw resistance is saturated in parallel with
/// `RESISTANCE_CAP`, which keeps the response inside (T_a, 200 degC) over
/// the whole design box while preserving strict monotonicity and smoothness.
/// This model makes no claim of matching any flow-solver output.
///
/// Returns the heat-sink temperature T_s in degC; output is finite, strictly
/// above T_a, affine in P, and strictly decreasing in v, h_f, N_f, and l.
pub fn synthetic_oracle(point: &DesignPoint, specs: &FeatureSpecs) -> Result<f64> {
    specs.validate_point(point)?;
    let l = point.get(Feature::Length) * 1e-3;
    let g_f = point.get(Feature::FinGap) * 1e-3;
    let w_f = point.get(Feature::FinWidth) * 1e-3;
    let h_f = point.get(Feature::FinHeight) * 1e-3;
    let h_b = point.get(Feature::BaseHeight) * 1e-3;
    let n_f = point.get(Feature::FinCount);
    let v = point.get(Feature::AirVelocity);
    let t_a = point.get(Feature::AmbientTemperature);
    let power = point.get(Feature::PowerLoss);

    let htc = HTC_COEFF * v.powf(0.8);
    let m = (2.0 * htc / (FIN_CONDUCTIVITY * w_f)).sqrt();
    let efficiency = (m * h_f).tanh() / (m * h_f);
    let area = l * (n_f * (w_f + 2.0 * efficiency * h_f) + (n_f - 1.0) * g_f);
    let width = n_f * w_f + (n_f - 1.0) * g_f;
    let footprint = l * width;
    let r_base = h_b / (FIN_CONDUCTIVITY * footprint) + CONTACT_RESISTIVITY / footprint;
    let r_raw = 1.0 / (htc * area) + r_base;
    let r_sink = r_raw * RESISTANCE_CAP / (r_raw + RESISTANCE_CAP);
    Ok(t_a + power * r_sink)
}
