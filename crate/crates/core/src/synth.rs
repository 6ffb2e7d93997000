//! Synthetic vignettes with known ground truth.
//!
//! Every scene is drawn from one ChaCha20 stream seeded with the
//! little-endian bytes of `rng_seed` (zero-padded to 32 bytes). Uniforms take
//! the top 53 bits of each `u64`; complex Gaussian samples use Box-Muller.
//! Samples are generated in f64 in row-major order and cast at the end, so
//! a scene is identical across runs and thread counts.

use num_complex::Complex;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SdError};
use crate::raster::{ComplexVignette, IncidenceAngle, Raster, Real, VignetteParts};
use crate::sd::{azimuth_fft, azimuth_ifft, center_spectrum, generate_subaperture_spectra, make_bands};

/// Recorded in sidecars of generated scenes.
pub const RNG_ALGORITHM: &str = "chacha20-seed_u64le-boxmuller_f64-v1";

/// Coefficient of the processor window emulated on point targets.
pub const POINT_TARGET_WINDOW: f64 = 0.75;

fn default_spacing() -> f64 {
    5.0
}

fn default_incidence() -> f64 {
    35.0
}

fn default_band_a() -> [f64; 2] {
    [0.0, 1.0]
}

fn default_band_b() -> [f64; 2] {
    [0.25, 0.5]
}

/// Scene description; also the JSON schema accepted by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub n_az: usize,
    pub n_rg: usize,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_spacing")]
    pub pixel_spacing_az: f64,
    #[serde(default = "default_spacing")]
    pub pixel_spacing_rg: f64,
    #[serde(default = "default_incidence")]
    pub incidence_angle_deg: f64,
    #[serde(default)]
    pub kind: SceneKind,
}

/// Externally tagged in JSON: `"speckle"` or `{"swell": {...}}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SceneKind {
    /// Fully developed speckle: unit-variance circular complex Gaussian.
    #[default]
    Speckle,
    /// Speckle with amplitude modulated by
    /// `sqrt(1 + m cos(2 pi (x cos(dir) + y sin(dir)) / wavelength))`,
    /// x along azimuth and y along range, both in metres.
    Swell {
        wavelength_m: f64,
        direction_deg: f64,
        modulation_depth: f64,
    },
    /// One bright sample, band-limited in azimuth by the processor window.
    PointTarget {
        position: [usize; 2],
        amplitude: f64,
        #[serde(default)]
        background_level: f64,
    },
    /// Range columns left of `boundary_col` carry speckle restricted to the
    /// centered azimuth band `band_a` (fractions of the spectrum), the rest
    /// to `band_b`. Both regions have unit mean intensity.
    TwoTextureDirectional {
        boundary_col: usize,
        #[serde(default = "default_band_a")]
        band_a: [f64; 2],
        #[serde(default = "default_band_b")]
        band_b: [f64; 2],
    },
}

impl SceneSpec {
    pub fn speckle(n_az: usize, n_rg: usize, rng_seed: u64) -> Self {
        SceneSpec {
            n_az,
            n_rg,
            rng_seed,
            pixel_spacing_az: default_spacing(),
            pixel_spacing_rg: default_spacing(),
            incidence_angle_deg: default_incidence(),
            kind: SceneKind::Speckle,
        }
    }

    pub fn with_kind(mut self, kind: SceneKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SdError::Config(msg));
        if self.n_az < 2 || self.n_rg < 1 {
            return bad(format!("scene {}x{} too small", self.n_az, self.n_rg));
        }
        if !(self.pixel_spacing_az > 0.0 && self.pixel_spacing_rg > 0.0) {
            return bad("pixel spacings must be positive".into());
        }
        match &self.kind {
            SceneKind::Speckle => {}
            SceneKind::Swell {
                wavelength_m,
                direction_deg,
                modulation_depth,
            } => {
                if wavelength_m.is_nan() || *wavelength_m <= 0.0 || !direction_deg.is_finite() {
                    return bad("swell wavelength must be positive".into());
                }
                if !(*modulation_depth >= 0.0 && *modulation_depth < 1.0) {
                    return bad(format!("modulation_depth {modulation_depth} outside [0, 1)"));
                }
            }
            SceneKind::PointTarget {
                position,
                amplitude,
                background_level,
            } => {
                if position[0] >= self.n_az || position[1] >= self.n_rg {
                    return bad(format!("point target {position:?} outside scene"));
                }
                if !amplitude.is_finite() || background_level.is_nan() || *background_level < 0.0 {
                    return bad("point target amplitude/background invalid".into());
                }
            }
            SceneKind::TwoTextureDirectional {
                boundary_col,
                band_a,
                band_b,
            } => {
                if *boundary_col > self.n_rg {
                    return bad(format!("boundary_col {boundary_col} beyond n_rg"));
                }
                for band in [band_a, band_b] {
                    let (lo, hi) = band_rows(self.n_az, *band);
                    if !(band[0] >= 0.0 && band[1] <= 1.0 && band[0] < band[1]) || hi <= lo {
                        return bad(format!("band {band:?} is empty or outside [0, 1]"));
                    }
                }
            }
        }
        Ok(())
    }
}

fn band_rows(n_az: usize, band: [f64; 2]) -> (usize, usize) {
    let at = |f: f64| ((f * n_az as f64).floor().max(0.0) as usize).min(n_az);
    (at(band[0]), at(band[1]))
}

struct Gaussian(ChaCha20Rng);

impl Gaussian {
    fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        Gaussian(ChaCha20Rng::from_seed(key))
    }

    /// Uniform on [0, 1).
    fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Circular complex Gaussian with E|z|^2 = 1.
    fn complex(&mut self) -> Complex<f64> {
        let u1 = 1.0 - self.uniform(); // (0, 1]
        let u2 = self.uniform();
        let r = (-u1.ln()).sqrt();
        let phi = 2.0 * std::f64::consts::PI * u2;
        Complex::new(r * phi.cos(), r * phi.sin())
    }
}

fn speckle_field(n_az: usize, n_rg: usize, seed: u64) -> Raster<Complex<f64>> {
    let mut g = Gaussian::new(seed);
    Raster::from_fn(n_az, n_rg, |_, _| g.complex())
}

fn wrap(spec: &SceneSpec, data: Raster<Complex<f64>>) -> Result<ComplexVignette<f64>> {
    ComplexVignette::new(VignetteParts {
        data,
        pixel_spacing_az: spec.pixel_spacing_az,
        pixel_spacing_rg: spec.pixel_spacing_rg,
        incidence_angle_deg: IncidenceAngle::Scalar(spec.incidence_angle_deg),
        id: scene_id(spec),
    })
}

fn scene_id(spec: &SceneSpec) -> String {
    let kind = match spec.kind {
        SceneKind::Speckle => "speckle",
        SceneKind::Swell { .. } => "swell",
        SceneKind::PointTarget { .. } => "point_target",
        SceneKind::TwoTextureDirectional { .. } => "two_texture_directional",
    };
    format!("{kind}_{}x{}_seed{}", spec.n_az, spec.n_rg, spec.rng_seed)
}

/// Generates the scene described by `spec`.
pub fn generate<T: Real>(spec: &SceneSpec) -> Result<ComplexVignette<T>> {
    spec.validate()?;
    let (n_az, n_rg) = (spec.n_az, spec.n_rg);
    let scene = match &spec.kind {
        SceneKind::Speckle => wrap(spec, speckle_field(n_az, n_rg, spec.rng_seed))?,
        SceneKind::Swell {
            wavelength_m,
            direction_deg,
            modulation_depth,
        } => {
            let field = speckle_field(n_az, n_rg, spec.rng_seed);
            let (c, s) = (direction_deg.to_radians().cos(), direction_deg.to_radians().sin());
            let k = 2.0 * std::f64::consts::PI / wavelength_m;
            let data = Raster::from_fn(n_az, n_rg, |i, j| {
                let x = i as f64 * spec.pixel_spacing_az;
                let y = j as f64 * spec.pixel_spacing_rg;
                let gain = (1.0 + modulation_depth * (k * (x * c + y * s)).cos()).sqrt();
                field.get(i, j) * gain
            });
            wrap(spec, data)?
        }
        SceneKind::PointTarget {
            position,
            amplitude,
            background_level,
        } => {
            let mut data = if *background_level > 0.0 {
                speckle_field(n_az, n_rg, spec.rng_seed).map(|z| z * *background_level)
            } else {
                Raster::filled(n_az, n_rg, Complex::new(0.0, 0.0))
            };
            let [i, j] = *position;
            let z = data.get(i, j) + Complex::new(*amplitude, 0.0);
            data.set(i, j, z);
            let raw = wrap(spec, data)?;
            let spectrum = center_spectrum(azimuth_fft(&raw))?;
            let full = make_bands(n_az, 1, POINT_TARGET_WINDOW)?;
            let windowed = generate_subaperture_spectra(&spectrum, &full)?
                .pop()
                .expect("one band");
            raw.with_samples(azimuth_ifft(windowed), None)
        }
        SceneKind::TwoTextureDirectional {
            boundary_col,
            band_a,
            band_b,
        } => {
            let raw = wrap(spec, speckle_field(n_az, n_rg, spec.rng_seed))?;
            let mut spectrum = center_spectrum(azimuth_fft(&raw))?;
            let masks = [band_rows(n_az, *band_a), band_rows(n_az, *band_b)];
            for (col, line) in spectrum.lines_mut().chunks_mut(n_az).enumerate() {
                let (lo, hi) = masks[usize::from(col >= *boundary_col)];
                let gain = (n_az as f64 / (hi - lo) as f64).sqrt();
                for (row, z) in line.iter_mut().enumerate() {
                    *z = if (lo..hi).contains(&row) { *z * gain } else { Complex::new(0.0, 0.0) };
                }
            }
            raw.with_samples(azimuth_ifft(spectrum), None)
        }
    };
    Ok(cast(&scene))
}

fn cast<T: Real>(v: &ComplexVignette<f64>) -> ComplexVignette<T> {
    ComplexVignette::new(VignetteParts {
        data: v.data().map(|z| Complex::new(T::of_f64(z.re), T::of_f64(z.im))),
        pixel_spacing_az: v.pixel_spacing_az(),
        pixel_spacing_rg: v.pixel_spacing_rg(),
        incidence_angle_deg: v.incidence_angle_deg().clone(),
        id: v.id().to_string(),
    })
    .expect("finite f64 scene stays finite after cast")
}

/// Half-power (-3 dB) width, in samples, of an intensity profile.
///
/// Crossings are located by linear interpolation between the last sample at
/// or above half the peak and the first sample below it on either side.
pub fn measure_irw(profile: &[f64]) -> Result<f64> {
    let (peak_idx, peak) = profile
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (k, x)| if x > best.1 { (k, x) } else { best });
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(SdError::Measurement(
            "profile has no positive finite peak".into(),
        ));
    }
    let half = peak / 2.0;

    let mut k = peak_idx;
    while k > 0 && profile[k - 1] >= half {
        k -= 1;
    }
    if k == 0 {
        return Err(SdError::Measurement(
            "no half-power crossing left of the peak".into(),
        ));
    }
    let (a, b) = (profile[k - 1], profile[k]);
    let left = (k - 1) as f64 + (half - a) / (b - a);

    let mut k = peak_idx;
    while k + 1 < profile.len() && profile[k + 1] >= half {
        k += 1;
    }
    if k + 1 == profile.len() {
        return Err(SdError::Measurement(
            "no half-power crossing right of the peak".into(),
        ));
    }
    let (a, b) = (profile[k], profile[k + 1]);
    let right = k as f64 + (a - half) / (a - b);

    Ok(right - left)
}
