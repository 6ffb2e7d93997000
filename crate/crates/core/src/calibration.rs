//! Sigma-nought calibration against a constant-wind ocean reference.
//!
//! The reference backscatter comes from outside (a scalar or an
//! incidence-angle table produced by whatever model function the user
//! trusts). It is a power quantity, so complex samples are divided by its
//! square root and the calibrated intensity equals sigma0 / reference.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SdError};
use crate::raster::{ComplexVignette, IncidenceAngle, Raster, Real};

/// Reference sigma0 in linear power units.
///
/// JSON: `{"kind": "scalar", "value": 0.1}` or
/// `{"kind": "incidence_table", "table": [[20.0, 0.2], [40.0, 0.1]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceProfile {
    Scalar { value: f64 },
    IncidenceTable { table: Vec<(f64, f64)> },
}

impl Default for ReferenceProfile {
    fn default() -> Self {
        ReferenceProfile::Scalar { value: 1.0 }
    }
}

impl ReferenceProfile {
    pub fn scalar(value: f64) -> Result<Self> {
        let p = ReferenceProfile::Scalar { value };
        p.validate()?;
        Ok(p)
    }

    pub fn table(table: Vec<(f64, f64)>) -> Result<Self> {
        let p = ReferenceProfile::IncidenceTable { table };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ReferenceProfile::Scalar { value } => {
                if !(*value > 0.0 && value.is_finite()) {
                    return Err(SdError::Config(format!(
                        "reference value {value} must be positive and finite"
                    )));
                }
            }
            ReferenceProfile::IncidenceTable { table } => {
                if table.len() < 2 {
                    return Err(SdError::Config(
                        "incidence table needs at least 2 entries".into(),
                    ));
                }
                for (k, &(angle, value)) in table.iter().enumerate() {
                    if !angle.is_finite() || !(value > 0.0 && value.is_finite()) {
                        return Err(SdError::Config(format!(
                            "incidence table entry {k} ({angle}, {value}) invalid"
                        )));
                    }
                    if k > 0 && angle <= table[k - 1].0 {
                        return Err(SdError::Config(format!(
                            "incidence table angles not strictly increasing at entry {k}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Reference sigma0 at the given incidence. Tables interpolate linearly
    /// and never extrapolate.
    pub fn reference_factor(&self, incidence_angle_deg: f64) -> Result<f64> {
        match self {
            ReferenceProfile::Scalar { value } => Ok(*value),
            ReferenceProfile::IncidenceTable { table } => {
                let (min, max) = (table[0].0, table[table.len() - 1].0);
                if !(incidence_angle_deg >= min && incidence_angle_deg <= max) {
                    return Err(SdError::OutOfRange {
                        angle: incidence_angle_deg,
                        min,
                        max,
                    });
                }
                // first entry with angle >= query; exact hits return the entry
                let hi = table.partition_point(|&(a, _)| a < incidence_angle_deg);
                if table[hi].0 == incidence_angle_deg || hi == 0 {
                    return Ok(table[hi].1);
                }
                let (a0, r0) = table[hi - 1];
                let (a1, r1) = table[hi];
                let t = (incidence_angle_deg - a0) / (a1 - a0);
                Ok(r0 + t * (r1 - r0))
            }
        }
    }
}

/// Divides every sample of range column `j` by `sqrt(reference(theta_j))`.
pub fn calibrate<T: Real>(
    v: &ComplexVignette<T>,
    profile: &ReferenceProfile,
) -> Result<ComplexVignette<T>> {
    profile.validate()?;
    let n_rg = v.n_rg();
    let incidence = v.incidence_angle_deg();
    let scale: Vec<T> = (0..n_rg)
        .map(|j| {
            profile
                .reference_factor(incidence.at(j))
                .map(|r| T::of_f64(1.0 / r.sqrt()))
                .map_err(|e| SdError::Calibration {
                    column: j,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;

    let src = v.data();
    let mut out = vec![Complex::new(T::zero(), T::zero()); src.as_slice().len()];
    out.par_chunks_mut(n_rg)
        .zip(src.as_slice().par_chunks(n_rg))
        .for_each(|(dst, row)| {
            for ((d, &z), &s) in dst.iter_mut().zip(row).zip(&scale) {
                *d = z.scale(s);
            }
        });
    let note = match (profile, incidence) {
        (ReferenceProfile::Scalar { value }, _) => format!("sigma0 / {value}"),
        (ReferenceProfile::IncidenceTable { table }, IncidenceAngle::Scalar(a)) => {
            format!("sigma0 / table({a} deg), {} entries", table.len())
        }
        (ReferenceProfile::IncidenceTable { table }, IncidenceAngle::PerColumn(_)) => {
            format!("sigma0 / table(per-column incidence), {} entries", table.len())
        }
    };
    let data = Raster::new(v.n_az(), n_rg, out)?;
    Ok(v.with_samples(data, Some(note)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::VignetteParts;

    fn constant(n_az: usize, n_rg: usize, a: f64, incidence: IncidenceAngle) -> ComplexVignette<f64> {
        ComplexVignette::new(VignetteParts {
            data: Raster::filled(n_az, n_rg, Complex::new(a, 0.0)),
            pixel_spacing_az: 5.0,
            pixel_spacing_rg: 4.0,
            incidence_angle_deg: incidence,
            id: "c".into(),
        })
        .unwrap()
    }

    #[test]
    fn scalar_reference_ignores_angle() {
        let p = ReferenceProfile::scalar(0.1).unwrap();
        assert_eq!(p.reference_factor(12.0).unwrap(), 0.1);
        assert_eq!(p.reference_factor(60.0).unwrap(), 0.1);
    }

    #[test]
    fn table_interpolates_and_refuses_extrapolation() {
        let p = ReferenceProfile::table(vec![(20.0, 0.2), (40.0, 0.1)]).unwrap();
        assert!((p.reference_factor(30.0).unwrap() - 0.15).abs() < 1e-15);
        assert_eq!(p.reference_factor(20.0).unwrap(), 0.2);
        assert_eq!(p.reference_factor(40.0).unwrap(), 0.1);
        assert!(matches!(
            p.reference_factor(45.0),
            Err(SdError::OutOfRange { angle, min, max }) if angle == 45.0 && min == 20.0 && max == 40.0
        ));
    }

    #[test]
    fn rejects_malformed_profiles() {
        assert!(ReferenceProfile::scalar(0.0).is_err());
        assert!(ReferenceProfile::table(vec![(20.0, 0.2)]).is_err());
        assert!(ReferenceProfile::table(vec![(20.0, 0.2), (20.0, 0.1)]).is_err());
        assert!(ReferenceProfile::table(vec![(20.0, 0.2), (30.0, -0.1)]).is_err());
    }

    #[test]
    fn unit_reference_is_identity() {
        let v = constant(4, 3, 2.5, IncidenceAngle::Scalar(30.0));
        let c = calibrate(&v, &ReferenceProfile::default()).unwrap();
        assert_eq!(c.data(), v.data());
        assert_eq!(c.pixel_spacing_az(), 5.0);
        assert!(c.calibration_note().is_some());
    }

    #[test]
    fn constant_field_scales_by_root_reference() {
        let v = constant(4, 3, 3.0, IncidenceAngle::Scalar(30.0));
        let c = calibrate(&v, &ReferenceProfile::scalar(4.0).unwrap()).unwrap();
        for z in c.data().as_slice() {
            assert!((z.re - 1.5).abs() < 1e-15);
            assert!((z.norm_sqr() - 9.0 / 4.0).abs() < 1e-14);
        }
    }

    #[test]
    fn per_column_table_matches_direct_computation() {
        let angles = vec![20.0, 25.0, 31.0, 40.0];
        let v = constant(6, 4, 1.0, IncidenceAngle::PerColumn(angles.clone()));
        let table = vec![(20.0, 0.2), (30.0, 0.12), (40.0, 0.1)];
        let c = calibrate(&v, &ReferenceProfile::table(table.clone()).unwrap()).unwrap();
        for (j, &theta) in angles.iter().enumerate() {
            // brute-force bracket search
            let mut r = f64::NAN;
            for w in table.windows(2) {
                if theta >= w[0].0 && theta <= w[1].0 {
                    r = w[0].1 + (theta - w[0].0) / (w[1].0 - w[0].0) * (w[1].1 - w[0].1);
                    break;
                }
            }
            for i in 0..6 {
                let got = c.data().get(i, j).re;
                assert!((got - 1.0 / r.sqrt()).abs() < 1e-12, "col {j}");
            }
        }
    }

    #[test]
    fn out_of_range_column_is_reported() {
        let v = constant(4, 3, 1.0, IncidenceAngle::PerColumn(vec![25.0, 30.0, 50.0]));
        let p = ReferenceProfile::table(vec![(20.0, 0.2), (40.0, 0.1)]).unwrap();
        assert!(matches!(
            calibrate(&v, &p),
            Err(SdError::Calibration { column: 2, .. })
        ));
    }

    #[test]
    fn profile_json_shapes() {
        let p: ReferenceProfile =
            serde_json::from_str(r#"{"kind":"incidence_table","table":[[20,0.2],[40,0.1]]}"#).unwrap();
        assert_eq!(p, ReferenceProfile::table(vec![(20.0, 0.2), (40.0, 0.1)]).unwrap());
        let s: ReferenceProfile = serde_json::from_str(r#"{"kind":"scalar","value":0.5}"#).unwrap();
        assert_eq!(s, ReferenceProfile::Scalar { value: 0.5 });
    }
}
