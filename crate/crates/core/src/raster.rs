//! In-memory rasters and the vignette/stack model shared by every stage.
//!
//! Rasters are row-major with azimuth along rows and range along columns.
//! Public constructors of the model types run the same checks as
//! [`validate`], so an instance that exists is valid.

use std::collections::HashSet;
use std::fmt;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::config::SdConfig;
use crate::error::{Result, SdError};

/// Floating-point sample type of a pipeline run: `f32` by default, `f64`
/// for oracle-grade runs.
pub trait Real:
    rustfft::FftNum + num_traits::Float + Default + fmt::Display + Send + Sync + 'static
{
    const BYTES: usize;
    const NAME: &'static str;

    fn of_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Real for f32 {
    const BYTES: usize = 4;
    const NAME: &'static str = "f32";

    #[inline]
    fn of_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    #[inline]
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().unwrap())
    }
}

impl Real for f64 {
    const BYTES: usize = 8;
    const NAME: &'static str = "f64";

    #[inline]
    fn of_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    #[inline]
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    #[inline]
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().unwrap())
    }
}

/// Dense row-major 2-D array.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy> Raster<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(SdError::Consistency(format!(
                "raster {rows}x{cols} needs {} samples, got {}",
                rows.saturating_mul(cols),
                data.len()
            )));
        }
        Ok(Raster { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Raster {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Raster { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.cols + col] = value;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[T] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, col)).collect()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Raster<U> {
        Raster {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}

/// Incidence angle in degrees: one value for the whole vignette or one per
/// range column. Serialized as a bare number or an array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IncidenceAngle {
    Scalar(f64),
    PerColumn(Vec<f64>),
}

impl IncidenceAngle {
    /// Angle at range column `col`; scalars broadcast.
    pub fn at(&self, col: usize) -> f64 {
        match self {
            IncidenceAngle::Scalar(a) => *a,
            IncidenceAngle::PerColumn(v) => v[col],
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            IncidenceAngle::Scalar(a) => *a,
            IncidenceAngle::PerColumn(v) if v.is_empty() => f64::NAN,
            IncidenceAngle::PerColumn(v) => v.iter().sum::<f64>() / v.len() as f64,
        }
    }
}

/// One violated invariant, with enough location information to find it.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    AzimuthTooShort { n_az: usize },
    RangeEmpty,
    NonFiniteSample { row: usize, col: usize, count: usize },
    NonPositiveSpacing { axis: &'static str, value: f64 },
    IncidenceLength { expected: usize, actual: usize },
    NonFiniteIncidence { index: usize },
    ShapeMismatch { index: usize, expected: (usize, usize), actual: (usize, usize) },
    NegativeValue { channel: usize, row: usize, col: usize },
    LabelCount { channels: usize, labels: usize },
    DuplicateLabel(String),
    EmptyStack,
    BandIndex { position: usize, index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::AzimuthTooShort { n_az } => write!(f, "n_az = {n_az}, need n_az >= 2"),
            Violation::RangeEmpty => write!(f, "n_rg = 0, need n_rg >= 1"),
            Violation::NonFiniteSample { row, col, count } => write!(
                f,
                "non-finite sample at ({row}, {col}) ({count} non-finite samples in total)"
            ),
            Violation::NonPositiveSpacing { axis, value } => {
                write!(f, "pixel_spacing_{axis} = {value}, must be > 0")
            }
            Violation::IncidenceLength { expected, actual } => write!(
                f,
                "per-column incidence has {actual} entries, expected {expected}"
            ),
            Violation::NonFiniteIncidence { index } => {
                write!(f, "non-finite incidence angle at column {index}")
            }
            Violation::ShapeMismatch {
                index,
                expected,
                actual,
            } => write!(
                f,
                "member {index} has shape {}x{}, expected {}x{}",
                actual.0, actual.1, expected.0, expected.1
            ),
            Violation::NegativeValue { channel, row, col } => write!(
                f,
                "channel {channel} has a negative or non-finite value at ({row}, {col})"
            ),
            Violation::LabelCount { channels, labels } => {
                write!(f, "{labels} channel labels for {channels} channels")
            }
            Violation::DuplicateLabel(l) => write!(f, "duplicate channel label {l:?}"),
            Violation::EmptyStack => write!(f, "stack has no members"),
            Violation::BandIndex { position, index } => {
                write!(f, "band at position {position} has index {index}")
            }
        }
    }
}

/// Unchecked vignette parts, as read from disk or assembled by a caller.
#[derive(Debug, Clone)]
pub struct VignetteParts<T> {
    pub data: Raster<Complex<T>>,
    pub pixel_spacing_az: f64,
    pub pixel_spacing_rg: f64,
    pub incidence_angle_deg: IncidenceAngle,
    pub id: String,
}

/// Lists every violated vignette invariant. An empty list means valid.
pub fn validate<T: Real>(parts: &VignetteParts<T>) -> Vec<Violation> {
    let mut out = Vec::new();
    let (n_az, n_rg) = parts.data.dims();
    if n_az < 2 {
        out.push(Violation::AzimuthTooShort { n_az });
    }
    if n_rg < 1 {
        out.push(Violation::RangeEmpty);
    }
    let mut first = None;
    let mut count = 0usize;
    for (k, z) in parts.data.as_slice().iter().enumerate() {
        if !(z.re.is_finite() && z.im.is_finite()) {
            count += 1;
            first.get_or_insert(k);
        }
    }
    if let Some(k) = first {
        out.push(Violation::NonFiniteSample {
            row: k / n_rg,
            col: k % n_rg,
            count,
        });
    }
    for (axis, value) in [("az", parts.pixel_spacing_az), ("rg", parts.pixel_spacing_rg)] {
        if !(value > 0.0 && value.is_finite()) {
            out.push(Violation::NonPositiveSpacing { axis, value });
        }
    }
    match &parts.incidence_angle_deg {
        IncidenceAngle::Scalar(a) => {
            if !a.is_finite() {
                out.push(Violation::NonFiniteIncidence { index: 0 });
            }
        }
        IncidenceAngle::PerColumn(v) => {
            if v.len() != n_rg {
                out.push(Violation::IncidenceLength {
                    expected: n_rg,
                    actual: v.len(),
                });
            }
            if let Some(index) = v.iter().position(|a| !a.is_finite()) {
                out.push(Violation::NonFiniteIncidence { index });
            }
        }
    }
    out
}

/// Single-look complex azimuth x range raster with acquisition metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVignette<T = f32> {
    data: Raster<Complex<T>>,
    pixel_spacing_az: f64,
    pixel_spacing_rg: f64,
    incidence_angle_deg: IncidenceAngle,
    id: String,
    calibration_note: Option<String>,
}

impl<T: Real> ComplexVignette<T> {
    pub fn new(parts: VignetteParts<T>) -> Result<Self> {
        let violations = validate(&parts);
        if !violations.is_empty() {
            return Err(SdError::Validation(violations));
        }
        Ok(ComplexVignette {
            data: parts.data,
            pixel_spacing_az: parts.pixel_spacing_az,
            pixel_spacing_rg: parts.pixel_spacing_rg,
            incidence_angle_deg: parts.incidence_angle_deg,
            id: parts.id,
            calibration_note: None,
        })
    }

    /// Convenience constructor with scalar incidence.
    pub fn from_raster(
        data: Raster<Complex<T>>,
        pixel_spacing_az: f64,
        pixel_spacing_rg: f64,
        incidence_angle_deg: f64,
        id: impl Into<String>,
    ) -> Result<Self> {
        Self::new(VignetteParts {
            data,
            pixel_spacing_az,
            pixel_spacing_rg,
            incidence_angle_deg: IncidenceAngle::Scalar(incidence_angle_deg),
            id: id.into(),
        })
    }

    pub fn data(&self) -> &Raster<Complex<T>> {
        &self.data
    }

    pub fn n_az(&self) -> usize {
        self.data.rows()
    }

    pub fn n_rg(&self) -> usize {
        self.data.cols()
    }

    pub fn pixel_spacing_az(&self) -> f64 {
        self.pixel_spacing_az
    }

    pub fn pixel_spacing_rg(&self) -> f64 {
        self.pixel_spacing_rg
    }

    pub fn incidence_angle_deg(&self) -> &IncidenceAngle {
        &self.incidence_angle_deg
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Provenance note left by calibration, if the vignette was calibrated.
    pub fn calibration_note(&self) -> Option<&str> {
        self.calibration_note.as_deref()
    }

    /// Re-checks invariants; always empty for a constructed vignette.
    pub fn validate(&self) -> Vec<Violation> {
        validate(&self.to_parts())
    }

    pub fn to_parts(&self) -> VignetteParts<T> {
        VignetteParts {
            data: self.data.clone(),
            pixel_spacing_az: self.pixel_spacing_az,
            pixel_spacing_rg: self.pixel_spacing_rg,
            incidence_angle_deg: self.incidence_angle_deg.clone(),
            id: self.id.clone(),
        }
    }

    /// Same metadata, new samples. Callers guarantee finiteness and shape.
    pub(crate) fn with_samples(&self, data: Raster<Complex<T>>, note: Option<String>) -> Self {
        debug_assert_eq!(data.dims(), self.data.dims());
        ComplexVignette {
            data,
            pixel_spacing_az: self.pixel_spacing_az,
            pixel_spacing_rg: self.pixel_spacing_rg,
            incidence_angle_deg: self.incidence_angle_deg.clone(),
            id: self.id.clone(),
            calibration_note: note.or_else(|| self.calibration_note.clone()),
        }
    }
}

/// One contiguous band of the centered azimuth spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandDescriptor {
    pub index: usize,
    /// Inclusive.
    pub start_row: usize,
    /// Exclusive.
    pub end_row: usize,
    pub center_row: usize,
    pub window_coefficient: f64,
}

impl BandDescriptor {
    pub fn len(&self) -> usize {
        self.end_row - self.start_row
    }

    pub fn is_empty(&self) -> bool {
        self.end_row == self.start_row
    }
}

/// N co-registered complex subaperture images.
#[derive(Debug, Clone)]
pub struct SubapertureStack<T = f32> {
    bands: Vec<(BandDescriptor, Raster<Complex<T>>)>,
    source_id: String,
}

impl<T: Real> SubapertureStack<T> {
    pub fn new(
        bands: Vec<(BandDescriptor, Raster<Complex<T>>)>,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        let mut violations = Vec::new();
        match bands.first() {
            None => violations.push(Violation::EmptyStack),
            Some((_, first)) => {
                let expected = first.dims();
                for (index, (band, img)) in bands.iter().enumerate() {
                    if img.dims() != expected {
                        violations.push(Violation::ShapeMismatch {
                            index,
                            expected,
                            actual: img.dims(),
                        });
                    }
                    if band.index != index {
                        violations.push(Violation::BandIndex {
                            position: index,
                            index: band.index,
                        });
                    }
                }
            }
        }
        if !violations.is_empty() {
            return Err(SdError::Validation(violations));
        }
        Ok(SubapertureStack {
            bands,
            source_id: source_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    pub fn bands(&self) -> &[(BandDescriptor, Raster<Complex<T>>)] {
        &self.bands
    }

    pub fn image(&self, k: usize) -> &Raster<Complex<T>> {
        &self.bands[k].1
    }

    pub fn descriptor(&self, k: usize) -> &BandDescriptor {
        &self.bands[k].0
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn into_bands(self) -> Vec<(BandDescriptor, Raster<Complex<T>>)> {
        self.bands
    }
}

/// Decimated intensity channels ready for a learning pipeline.
///
/// Labels follow the convention `O` for the multilooked original and
/// `S1`..`SN` for subapertures in band order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedStack<T = f32> {
    channels: Vec<Raster<T>>,
    channel_labels: Vec<String>,
    out_pixel_spacing_az: f64,
    out_pixel_spacing_rg: f64,
    provenance: Option<SdConfig>,
}

impl<T: Real> ProcessedStack<T> {
    pub fn new(
        channels: Vec<Raster<T>>,
        channel_labels: Vec<String>,
        out_pixel_spacing_az: f64,
        out_pixel_spacing_rg: f64,
        provenance: Option<SdConfig>,
    ) -> Result<Self> {
        let mut violations = Vec::new();
        if channels.is_empty() {
            violations.push(Violation::EmptyStack);
        }
        if channels.len() != channel_labels.len() {
            violations.push(Violation::LabelCount {
                channels: channels.len(),
                labels: channel_labels.len(),
            });
        }
        let mut seen = HashSet::new();
        for l in &channel_labels {
            if !seen.insert(l.as_str()) {
                violations.push(Violation::DuplicateLabel(l.clone()));
            }
        }
        if let Some(first) = channels.first() {
            let expected = first.dims();
            for (index, ch) in channels.iter().enumerate() {
                if ch.dims() != expected {
                    violations.push(Violation::ShapeMismatch {
                        index,
                        expected,
                        actual: ch.dims(),
                    });
                }
                let bad = ch
                    .as_slice()
                    .iter()
                    .position(|&x| !(x.is_finite() && x >= T::zero()));
                if let Some(k) = bad {
                    let cols = ch.cols();
                    violations.push(Violation::NegativeValue {
                        channel: index,
                        row: k / cols,
                        col: k % cols,
                    });
                }
            }
        }
        for (axis, value) in [("az", out_pixel_spacing_az), ("rg", out_pixel_spacing_rg)] {
            if !(value > 0.0 && value.is_finite()) {
                violations.push(Violation::NonPositiveSpacing { axis, value });
            }
        }
        if !violations.is_empty() {
            return Err(SdError::Validation(violations));
        }
        Ok(ProcessedStack {
            channels,
            channel_labels,
            out_pixel_spacing_az,
            out_pixel_spacing_rg,
            provenance,
        })
    }

    pub fn channels(&self) -> &[Raster<T>] {
        &self.channels
    }

    pub fn channel(&self, label: &str) -> Option<&Raster<T>> {
        self.channel_labels
            .iter()
            .position(|l| l == label)
            .map(|k| &self.channels[k])
    }

    pub fn channel_labels(&self) -> &[String] {
        &self.channel_labels
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    /// (rows, cols) of every channel.
    pub fn dims(&self) -> (usize, usize) {
        self.channels[0].dims()
    }

    pub fn out_pixel_spacing_az(&self) -> f64 {
        self.out_pixel_spacing_az
    }

    pub fn out_pixel_spacing_rg(&self) -> f64 {
        self.out_pixel_spacing_rg
    }

    pub fn provenance(&self) -> Option<&SdConfig> {
        self.provenance.as_ref()
    }
}
