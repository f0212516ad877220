//! Propagation and dispersion delays.
//!
//! All delays leave this module as integer picoseconds, rounded half-up.

use crate::error::ConfigError;

/// Speed of light in vacuum, m/s.
const SPEED_OF_LIGHT_M_S: f64 = 2.997_924_58e8;

/// Default propagation speed in standard single-mode fiber, km/s.
pub const DEFAULT_PROPAGATION_SPEED_KM_S: f64 = 2.0e5;

/// Fixed-point scale used for per-arc dispersion coefficients (milli-picoseconds).
pub const GVD_COEFF_SCALE: i64 = 1000;

/// Fiber and grid parameters shared by the delay computations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiberParams {
    /// Chromatic dispersion at the central frequency, ps/(nm·km).
    pub dispersion_ps_per_nm_km: f64,
    pub central_frequency_thz: f64,
    /// Width of one frequency slot, GHz.
    pub slot_width_ghz: f64,
    pub propagation_speed_km_s: f64,
    /// Explicit wavelength width of one slot. When set it takes precedence over
    /// the value derived from `slot_width_ghz`.
    pub slot_width_nm: Option<f64>,
}

impl Default for FiberParams {
    fn default() -> Self {
        FiberParams {
            dispersion_ps_per_nm_km: 17.0,
            central_frequency_thz: 193.1,
            slot_width_ghz: 50.0,
            propagation_speed_km_s: DEFAULT_PROPAGATION_SPEED_KM_S,
            slot_width_nm: None,
        }
    }
}

impl FiberParams {
    pub fn with_slot_width_nm(mut self, nm: f64) -> Self {
        self.slot_width_nm = Some(nm);
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let checks = [
            ("dispersion", self.dispersion_ps_per_nm_km),
            ("central frequency", self.central_frequency_thz),
            ("slot width", self.slot_width_ghz),
            ("propagation speed", self.propagation_speed_km_s),
        ];
        for (what, v) in checks {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::Invalid(format!("{what} must be positive, got {v}")));
            }
        }
        if let Some(nm) = self.slot_width_nm {
            if !(nm.is_finite() && nm > 0.0) {
                return Err(ConfigError::Invalid(format!("slot width must be positive, got {nm} nm")));
            }
        }
        Ok(())
    }

    /// Wavelength width of one slot in nm.
    pub fn slot_width_nm(&self) -> f64 {
        self.slot_width_nm
            .unwrap_or_else(|| slot_width_nm(self.slot_width_ghz, self.central_frequency_thz))
    }
}

/// Converts a frequency width to a wavelength width at `central_thz`
/// using Δλ = c·Δf / f².
pub fn slot_width_nm(width_ghz: f64, central_thz: f64) -> f64 {
    let df = width_ghz * 1e9;
    let f = central_thz * 1e12;
    SPEED_OF_LIGHT_M_S * df / (f * f) * 1e9
}

pub(crate) fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

/// Intra-band delay spread caused by group velocity dispersion for a band of
/// `band_slots` slots carried over `length_km`.
pub fn gvd_differential_delay_ps(params: &FiberParams, band_slots: u32, length_km: f64) -> i64 {
    let band_nm = f64::from(band_slots) * params.slot_width_nm();
    round_half_up(params.dispersion_ps_per_nm_km * band_nm * length_km)
}

pub fn propagation_delay_ps(params: &FiberParams, length_km: f64) -> i64 {
    propagation_delay_ps_at(params.propagation_speed_km_s, length_km)
}

pub fn propagation_delay_ps_at(speed_km_s: f64, length_km: f64) -> i64 {
    round_half_up(length_km / speed_km_s * 1e12)
}

/// Per-slot dispersion spread over one arc, in milli-picoseconds.
///
/// Multi-arc paths sum these coefficients and convert once with
/// [`gvd_from_coefficients`], so that the optimization model and the
/// brute-force search agree on every path's value to the picosecond.
pub fn gvd_coefficient(params: &FiberParams, length_km: f64) -> i64 {
    round_half_up(params.dispersion_ps_per_nm_km * params.slot_width_nm() * length_km * GVD_COEFF_SCALE as f64)
}

/// GVD spread in ps of a `band_slots`-wide band over arcs whose coefficients sum to `coeff_sum`.
pub fn gvd_from_coefficients(coeff_sum: i64, band_slots: i64) -> i64 {
    let scaled = coeff_sum * band_slots;
    (scaled + GVD_COEFF_SCALE / 2).div_euclid(GVD_COEFF_SCALE)
}
