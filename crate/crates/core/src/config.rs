use serde::{Deserialize, Serialize};

use crate::calibration::ReferenceProfile;
use crate::error::{Result, SdError};

/// Every tunable of the decomposition pipeline.
///
/// Defaults: 4 subapertures, window coefficient 0.75 for both transmit
/// compensation and the sub-band windows, a 10x10 moving average with
/// coefficient 0.01 and decimation by 10.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdConfig {
    pub n_subapertures: usize,
    pub hamming_coefficient: f64,
    pub compensate_transmit_window: bool,
    pub lowpass_size: usize,
    pub lowpass_coefficient: f64,
    pub decimation_factor: usize,
    pub include_original_channel: bool,
    pub calibration: ReferenceProfile,
}

impl Default for SdConfig {
    fn default() -> Self {
        SdConfig {
            n_subapertures: 4,
            hamming_coefficient: 0.75,
            compensate_transmit_window: true,
            lowpass_size: 10,
            lowpass_coefficient: 0.01,
            decimation_factor: 10,
            include_original_channel: false,
            calibration: ReferenceProfile::default(),
        }
    }
}

/// Maximum deviation of the low-pass kernel sum from one.
pub const UNIT_GAIN_TOLERANCE: f64 = 1e-12;

impl SdConfig {
    /// Size-independent checks.
    pub fn validate(&self) -> Result<()> {
        if self.n_subapertures < 1 {
            return Err(SdError::Config("n_subapertures must be >= 1".into()));
        }
        let a = self.hamming_coefficient;
        if !(a > 0.5 && a <= 1.0) {
            return Err(SdError::Config(format!(
                "hamming_coefficient {a} outside (0.5, 1.0]"
            )));
        }
        if self.lowpass_size < 1 {
            return Err(SdError::Config("lowpass_size must be >= 1".into()));
        }
        if self.decimation_factor < 1 {
            return Err(SdError::Config("decimation_factor must be >= 1".into()));
        }
        let gain = self.lowpass_coefficient * (self.lowpass_size * self.lowpass_size) as f64;
        if (gain - 1.0).abs() > UNIT_GAIN_TOLERANCE {
            return Err(SdError::Config(format!(
                "lowpass kernel sums to {gain}, expected 1 (coefficient x size^2)"
            )));
        }
        self.calibration.validate()
    }

    /// Full check against a vignette with `n_az` azimuth rows.
    pub fn validate_for(&self, n_az: usize) -> Result<()> {
        self.validate()?;
        if self.n_subapertures > n_az / 4 {
            return Err(SdError::Config(format!(
                "n_subapertures {} exceeds n_az/4 = {} for n_az = {n_az}",
                self.n_subapertures,
                n_az / 4
            )));
        }
        Ok(())
    }

    /// Channel labels in emission order.
    pub fn channel_labels(&self) -> Vec<String> {
        let mut labels = Vec::with_capacity(self.n_subapertures + 1);
        if self.include_original_channel {
            labels.push("O".to_string());
        }
        labels.extend((1..=self.n_subapertures).map(|k| format!("S{k}")));
        labels
    }
}
