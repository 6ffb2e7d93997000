//! Azimuth spectral processing: forward FFT, spectrum centering, transmit
//! window compensation, shifted sub-band windows and the inverse FFT back to
//! complex subaperture images.
//!
//! Spectra are stored range-major (one contiguous azimuth-frequency line per
//! range column) so every per-line operation is a contiguous slice. Callers
//! see the usual (azimuth-frequency row, range column) indexing.

use std::sync::Arc;
use std::time::{Duration, Instant};

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::calibration::calibrate;
use crate::config::SdConfig;
use crate::error::{Result, SdError, Stage, StageExt};
use crate::raster::{BandDescriptor, ComplexVignette, Raster, Real, SubapertureStack};

/// Lines handed to one rayon task; large enough to amortize scratch space.
const LINES_PER_TASK: usize = 16;
const TRANSPOSE_BLOCK: usize = 32;

/// Generalized Hamming window `w[n] = a - (1 - a) cos(2 pi n / (M - 1))`.
#[derive(Debug, Clone, PartialEq)]
pub struct HammingWindow {
    coefficient: f64,
    weights: Vec<f64>,
}

impl HammingWindow {
    pub fn new(length: usize, coefficient: f64) -> Result<Self> {
        if length < 1 {
            return Err(SdError::Config("window length must be >= 1".into()));
        }
        if !(coefficient > 0.5 && coefficient <= 1.0) {
            return Err(SdError::Config(format!(
                "window coefficient {coefficient} outside (0.5, 1.0]"
            )));
        }
        let mut weights = vec![1.0; length];
        if length >= 2 {
            let denom = (length - 1) as f64;
            for n in 0..length.div_ceil(2) {
                let w = coefficient
                    - (1.0 - coefficient) * (2.0 * std::f64::consts::PI * n as f64 / denom).cos();
                weights[n] = w;
                weights[length - 1 - n] = w;
            }
        }
        Ok(HammingWindow {
            coefficient,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Complex raster in (azimuth frequency x range) with layout bookkeeping.
///
/// Only the operations of this module create spectra, so `is_centered`
/// always reflects the actual row order.
#[derive(Debug, Clone, PartialEq)]
pub struct AzimuthSpectrum<T = f32> {
    n_az: usize,
    n_rg: usize,
    /// `n_rg` lines of `n_az` frequency bins.
    lines: Vec<Complex<T>>,
    centered: bool,
    band: Option<BandDescriptor>,
    source_id: String,
}

impl<T: Real> AzimuthSpectrum<T> {
    pub fn n_az(&self) -> usize {
        self.n_az
    }

    pub fn n_rg(&self) -> usize {
        self.n_rg
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n_az, self.n_rg)
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    /// Sub-band this spectrum was cut to, if any.
    pub fn band(&self) -> Option<&BandDescriptor> {
        self.band.as_ref()
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex<T> {
        self.lines[col * self.n_az + row]
    }

    /// Azimuth-frequency line of range column `col`.
    pub fn line(&self, col: usize) -> &[Complex<T>] {
        &self.lines[col * self.n_az..(col + 1) * self.n_az]
    }

    pub(crate) fn lines_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.lines
    }

    /// Row-major (frequency row, range column) copy.
    pub fn to_raster(&self) -> Raster<Complex<T>> {
        let data = transpose(&self.lines, self.n_rg, self.n_az);
        Raster::new(self.n_az, self.n_rg, data).expect("dimensions tracked")
    }

    /// Sum of |S|^2 accumulated in f64.
    pub fn energy(&self) -> f64 {
        energy(&self.lines)
    }
}

pub(crate) fn energy<T: Real>(samples: &[Complex<T>]) -> f64 {
    samples
        .par_chunks(1 << 14)
        .map(|c| c.iter().map(|z| z.norm_sqr().as_f64()).sum::<f64>())
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

/// Blocked out-of-place transpose of a `rows x cols` row-major buffer.
pub(crate) fn transpose<T: Copy + Default + Send + Sync>(
    src: &[T],
    rows: usize,
    cols: usize,
) -> Vec<T> {
    debug_assert_eq!(src.len(), rows * cols);
    let mut dst = vec![T::default(); src.len()];
    if src.is_empty() {
        return dst;
    }
    dst.par_chunks_mut(rows * TRANSPOSE_BLOCK)
        .enumerate()
        .for_each(|(block, out)| {
            let c0 = block * TRANSPOSE_BLOCK;
            let c1 = (c0 + TRANSPOSE_BLOCK).min(cols);
            for r0 in (0..rows).step_by(TRANSPOSE_BLOCK) {
                let r1 = (r0 + TRANSPOSE_BLOCK).min(rows);
                for r in r0..r1 {
                    let row = &src[r * cols..(r + 1) * cols];
                    for c in c0..c1 {
                        out[(c - c0) * rows + r] = row[c];
                    }
                }
            }
        });
    dst
}

fn run_fft<T: Real>(lines: &mut [Complex<T>], fft: &Arc<dyn Fft<T>>) {
    let n = fft.len();
    let scratch_len = fft.get_inplace_scratch_len();
    lines
        .par_chunks_mut(n * LINES_PER_TASK)
        .for_each_init(
            || vec![Complex::new(T::zero(), T::zero()); scratch_len],
            |scratch, chunk| fft.process_with_scratch(chunk, scratch),
        );
}

/// Unnormalized forward DFT of every azimuth column, length exactly `n_az`.
/// Output is in natural FFT order.
pub fn azimuth_fft<T: Real>(v: &ComplexVignette<T>) -> AzimuthSpectrum<T> {
    let (n_az, n_rg) = v.data().dims();
    let mut lines = transpose(v.data().as_slice(), n_az, n_rg);
    let fft = FftPlanner::<T>::new().plan_fft_forward(n_az);
    run_fft(&mut lines, &fft);
    AzimuthSpectrum {
        n_az,
        n_rg,
        lines,
        centered: false,
        band: None,
        source_id: v.id().to_string(),
    }
}

fn rotate_lines<T: Real>(lines: &mut [Complex<T>], n_az: usize, center: bool) {
    let shift = n_az / 2;
    lines.par_chunks_mut(n_az).for_each(|line| {
        if center {
            line.rotate_right(shift);
        } else {
            line.rotate_left(shift);
        }
    });
}

/// Moves the zero-frequency bin from row 0 to row `n_az / 2`.
pub fn center_spectrum<T: Real>(mut s: AzimuthSpectrum<T>) -> Result<AzimuthSpectrum<T>> {
    if s.centered {
        return Err(SdError::State("spectrum is already centered".into()));
    }
    rotate_lines(&mut s.lines, s.n_az, true);
    s.centered = true;
    Ok(s)
}

/// Inverse of [`center_spectrum`].
pub fn uncenter_spectrum<T: Real>(mut s: AzimuthSpectrum<T>) -> Result<AzimuthSpectrum<T>> {
    if !s.centered {
        return Err(SdError::State("spectrum is not centered".into()));
    }
    rotate_lines(&mut s.lines, s.n_az, false);
    s.centered = false;
    Ok(s)
}

/// Divides each centered azimuth-frequency row by the full-length transmit
/// window, flattening the processed azimuth spectrum.
pub fn compensate_hamming<T: Real>(
    mut s: AzimuthSpectrum<T>,
    coefficient: f64,
) -> Result<AzimuthSpectrum<T>> {
    if !s.centered {
        return Err(SdError::State(
            "compensation requires a centered spectrum".into(),
        ));
    }
    let w: Vec<T> = HammingWindow::new(s.n_az, coefficient)?
        .weights()
        .iter()
        .map(|&x| T::of_f64(x))
        .collect();
    s.lines.par_chunks_mut(s.n_az).for_each(|line| {
        for (z, &wk) in line.iter_mut().zip(&w) {
            *z = z.unscale(wk);
        }
    });
    Ok(s)
}

/// Splits `n_az` centered-spectrum rows into `n` contiguous equal bands;
/// the last band absorbs the remainder.
///
/// Only non-empty bands are required here; the stricter `n <= n_az / 4`
/// limit is checked by [`SdConfig::validate_for`] when a run starts.
pub fn make_bands(n_az: usize, n: usize, coefficient: f64) -> Result<Vec<BandDescriptor>> {
    if n < 1 || n > n_az {
        return Err(SdError::Config(format!(
            "{n} subapertures outside [1, {n_az}] for n_az = {n_az}"
        )));
    }
    if !(coefficient > 0.5 && coefficient <= 1.0) {
        return Err(SdError::Config(format!(
            "window coefficient {coefficient} outside (0.5, 1.0]"
        )));
    }
    let width = n_az / n;
    Ok((0..n)
        .map(|k| {
            let start_row = k * width;
            let end_row = if k + 1 == n { n_az } else { (k + 1) * width };
            BandDescriptor {
                index: k,
                start_row,
                end_row,
                center_row: (start_row + end_row) / 2,
                window_coefficient: coefficient,
            }
        })
        .collect())
}

fn check_bands(bands: &[BandDescriptor], n_az: usize) -> Result<()> {
    let mut expected_start = 0;
    for (k, b) in bands.iter().enumerate() {
        if b.index != k || b.start_row != expected_start || b.end_row <= b.start_row {
            return Err(SdError::Consistency(format!(
                "band {k} [{}, {}) does not continue the partition at row {expected_start}",
                b.start_row, b.end_row
            )));
        }
        expected_start = b.end_row;
    }
    if expected_start != n_az {
        return Err(SdError::Consistency(format!(
            "bands cover [0, {expected_start}) but spectrum has {n_az} rows"
        )));
    }
    Ok(())
}

/// One spectrum per band: band rows weighted by a Hamming window of the
/// band's length aligned to the band, every other row exactly zero.
pub fn generate_subaperture_spectra<T: Real>(
    s: &AzimuthSpectrum<T>,
    bands: &[BandDescriptor],
) -> Result<Vec<AzimuthSpectrum<T>>> {
    if !s.centered {
        return Err(SdError::State(
            "sub-band windows require a centered spectrum".into(),
        ));
    }
    check_bands(bands, s.n_az)?;
    let n_az = s.n_az;
    bands
        .iter()
        .map(|band| {
            let w: Vec<T> = HammingWindow::new(band.len(), band.window_coefficient)?
                .weights()
                .iter()
                .map(|&x| T::of_f64(x))
                .collect();
            let mut lines = vec![Complex::new(T::zero(), T::zero()); s.lines.len()];
            lines
                .par_chunks_mut(n_az)
                .zip(s.lines.par_chunks(n_az))
                .for_each(|(dst, src)| {
                    let rows = band.start_row..band.end_row;
                    for ((d, z), &wk) in dst[rows.clone()].iter_mut().zip(&src[rows]).zip(&w) {
                        *d = z.scale(wk);
                    }
                });
            Ok(AzimuthSpectrum {
                n_az,
                n_rg: s.n_rg,
                lines,
                centered: true,
                band: Some(*band),
                source_id: s.source_id.clone(),
            })
        })
        .collect()
}

/// Inverse DFT (1/n_az normalized) of every line, back to a row-major image.
pub fn azimuth_ifft<T: Real>(s: AzimuthSpectrum<T>) -> Raster<Complex<T>> {
    let mut s = if s.centered {
        uncenter_spectrum(s).expect("centered checked")
    } else {
        s
    };
    let fft = FftPlanner::<T>::new().plan_fft_inverse(s.n_az);
    run_fft(&mut s.lines, &fft);
    let norm = T::of_f64(1.0 / s.n_az as f64);
    s.lines
        .par_chunks_mut(1 << 14)
        .for_each(|c| c.iter_mut().for_each(|z| *z = z.scale(norm)));
    let data = transpose(&s.lines, s.n_rg, s.n_az);
    Raster::new(s.n_az, s.n_rg, data).expect("dimensions tracked")
}

/// Inverse-transforms every sub-band spectrum into a subaperture image.
pub fn azimuth_ifft_all<T: Real>(spectra: Vec<AzimuthSpectrum<T>>) -> Result<SubapertureStack<T>> {
    let source_id = match spectra.first() {
        Some(s) => s.source_id.clone(),
        None => return Err(SdError::Consistency("no spectra to invert".into())),
    };
    let dims = spectra[0].dims();
    let mut bands = Vec::with_capacity(spectra.len());
    for (k, s) in spectra.into_iter().enumerate() {
        if s.dims() != dims {
            return Err(SdError::Consistency(format!(
                "spectrum {k} is {:?}, expected {dims:?}",
                s.dims()
            )));
        }
        let band = s.band.ok_or_else(|| {
            SdError::Consistency(format!("spectrum {k} carries no band descriptor"))
        })?;
        bands.push((band, azimuth_ifft(s)));
    }
    SubapertureStack::new(bands, source_id)
}

/// Full decomposition of one vignette into complex subaperture images.
pub fn decompose<T: Real>(v: &ComplexVignette<T>, cfg: &SdConfig) -> Result<SubapertureStack<T>> {
    decompose_timed(v, cfg, |_, _| {}).map(|(stack, _)| stack)
}

/// [`decompose`] reporting the wall time of each stage to `on_stage`.
/// Also returns the calibrated vignette, which the multilook stage needs for
/// the original channel.
pub fn decompose_timed<T: Real>(
    v: &ComplexVignette<T>,
    cfg: &SdConfig,
    mut on_stage: impl FnMut(Stage, Duration),
) -> Result<(SubapertureStack<T>, ComplexVignette<T>)> {
    cfg.validate_for(v.n_az())?;

    let t = Instant::now();
    let calibrated = calibrate(v, &cfg.calibration).stage(Stage::Calibrate)?;
    on_stage(Stage::Calibrate, t.elapsed());

    let t = Instant::now();
    let spectrum = center_spectrum(azimuth_fft(&calibrated)).stage(Stage::Fft)?;
    on_stage(Stage::Fft, t.elapsed());

    let t = Instant::now();
    let spectrum = if cfg.compensate_transmit_window {
        compensate_hamming(spectrum, cfg.hamming_coefficient).stage(Stage::Compensate)?
    } else {
        spectrum
    };
    on_stage(Stage::Compensate, t.elapsed());

    let t = Instant::now();
    let spectra = make_bands(v.n_az(), cfg.n_subapertures, cfg.hamming_coefficient)
        .and_then(|bands| generate_subaperture_spectra(&spectrum, &bands))
        .stage(Stage::Window)?;
    drop(spectrum);
    on_stage(Stage::Window, t.elapsed());

    let t = Instant::now();
    let stack = azimuth_ifft_all(spectra).stage(Stage::Ifft)?;
    on_stage(Stage::Ifft, t.elapsed());

    Ok((stack, calibrated))
}
