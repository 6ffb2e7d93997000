//! On-disk formats: headerless little-endian payloads with a JSON sidecar,
//! NPY (v1.0) import, and 8-bit grayscale PNG previews.
//!
//! Payload sample `(i, j)` of a vignette sits at byte offset
//! `(i * n_rg + j) * bytes_per_sample`; stacks are channel-major.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::config::SdConfig;
use crate::error::{Result, SdError};
use crate::raster::{ComplexVignette, IncidenceAngle, ProcessedStack, Raster, Real, VignetteParts};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    /// Interleaved f32 (re, im) pairs.
    C64,
    /// Interleaved f64 (re, im) pairs.
    C128,
    F32,
    F64,
}

impl Dtype {
    pub fn sample_bytes(self) -> usize {
        match self {
            Dtype::C64 | Dtype::F64 => 8,
            Dtype::C128 => 16,
            Dtype::F32 => 4,
        }
    }

    pub fn is_complex(self) -> bool {
        matches!(self, Dtype::C64 | Dtype::C128)
    }

    fn complex_of<T: Real>() -> Self {
        if T::BYTES == 4 {
            Dtype::C64
        } else {
            Dtype::C128
        }
    }

    fn real_of<T: Real>() -> Self {
        if T::BYTES == 4 {
            Dtype::F32
        } else {
            Dtype::F64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ByteOrder {
    Little,
}

/// JSON sidecar. Unknown fields are ignored on read.
///
/// `dtype` and `shape` are always written; they may be omitted only when the
/// payload is an NPY file, whose header supplies them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarMetadata {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dtype: Option<Dtype>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Vec<usize>>,
    #[serde(default = "little")]
    pub byte_order: ByteOrder,
    pub pixel_spacing_az: f64,
    pub pixel_spacing_rg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incidence_angle_deg: Option<IncidenceAngle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<SdConfig>,
    /// Scene generator and RNG algorithm, for synthetic vignettes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
}

fn little() -> ByteOrder {
    ByteOrder::Little
}

impl SidecarMetadata {
    fn sample_count(&self) -> Option<u64> {
        self.shape
            .as_ref()
            .map(|s| s.iter().map(|&d| d as u64).product())
    }
}

pub fn read_sidecar(path: impl AsRef<Path>) -> Result<SidecarMetadata> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| SdError::io(path, e))?;
    let meta: SidecarMetadata = serde_json::from_str(&text)
        .map_err(|e| SdError::Format(format!("{}: {e}", path.display())))?;
    if meta.schema_version != SCHEMA_VERSION {
        return Err(SdError::UnsupportedVersion(meta.schema_version));
    }
    if let Some(shape) = &meta.shape {
        if shape.is_empty() || shape.contains(&0) {
            return Err(SdError::Format(format!(
                "{}: shape {shape:?} has an empty axis",
                path.display()
            )));
        }
    }
    Ok(meta)
}

pub fn write_sidecar(meta: &SidecarMetadata, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(meta).expect("sidecar serializes");
    fs::write(path, text + "\n").map_err(|e| SdError::io(path, e))
}

/// Sidecar path conventionally paired with a payload: same stem, `.json`.
pub fn sidecar_path_for(raster_path: impl AsRef<Path>) -> PathBuf {
    raster_path.as_ref().with_extension("json")
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Vignette in the precision it was stored in.
#[derive(Debug, Clone)]
pub enum AnyVignette {
    C64(ComplexVignette<f32>),
    C128(ComplexVignette<f64>),
}

impl AnyVignette {
    pub fn id(&self) -> &str {
        match self {
            AnyVignette::C64(v) => v.id(),
            AnyVignette::C128(v) => v.id(),
        }
    }
}

struct Payload {
    dtype: Dtype,
    shape: Vec<usize>,
    bytes: Vec<u8>,
}

fn read_raw_payload(path: &Path, meta: &SidecarMetadata) -> Result<Payload> {
    let (Some(dtype), Some(shape)) = (meta.dtype, meta.shape.clone()) else {
        return Err(SdError::Format(format!(
            "sidecar for {} lacks dtype/shape",
            path.display()
        )));
    };
    let expected = meta.sample_count().unwrap() * dtype.sample_bytes() as u64;
    let actual = fs::metadata(path).map_err(|e| SdError::io(path, e))?.len();
    if actual != expected {
        return Err(SdError::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            actual,
        });
    }
    let bytes = fs::read(path).map_err(|e| SdError::io(path, e))?;
    if bytes.len() as u64 != expected {
        return Err(SdError::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    Ok(Payload {
        dtype,
        shape,
        bytes,
    })
}

fn is_npy(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("npy"))
}

fn decode_complex<T: Real>(bytes: &[u8], dtype: Dtype) -> Vec<Complex<T>> {
    match dtype {
        Dtype::C64 => bytes
            .chunks_exact(8)
            .map(|c| Complex::new(T::of_f64(f32::read_le(c) as f64), T::of_f64(f32::read_le(&c[4..]) as f64)))
            .collect(),
        Dtype::C128 => bytes
            .chunks_exact(16)
            .map(|c| Complex::new(T::of_f64(f64::read_le(c)), T::of_f64(f64::read_le(&c[8..]))))
            .collect(),
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| Complex::new(T::of_f64(f32::read_le(c) as f64), T::zero()))
            .collect(),
        Dtype::F64 => bytes
            .chunks_exact(8)
            .map(|c| Complex::new(T::of_f64(f64::read_le(c)), T::zero()))
            .collect(),
    }
}

fn decode_real<T: Real>(bytes: &[u8], dtype: Dtype) -> Result<Vec<T>> {
    match dtype {
        Dtype::F32 => Ok(bytes
            .chunks_exact(4)
            .map(|c| T::of_f64(f32::read_le(c) as f64))
            .collect()),
        Dtype::F64 => Ok(bytes
            .chunks_exact(8)
            .map(|c| T::of_f64(f64::read_le(c)))
            .collect()),
        other => Err(SdError::Format(format!("expected a real dtype, found {other:?}"))),
    }
}

fn load_vignette_payload(raster_path: &Path, meta: &SidecarMetadata) -> Result<Payload> {
    let payload = if is_npy(raster_path) {
        let npy = read_npy(raster_path)?;
        if meta.dtype.is_some_and(|d| d != npy.dtype) || meta.shape.as_ref().is_some_and(|s| *s != npy.shape) {
            return Err(SdError::Format(format!(
                "sidecar dtype/shape disagree with NPY header of {}",
                raster_path.display()
            )));
        }
        npy
    } else {
        read_raw_payload(raster_path, meta)?
    };
    if payload.shape.len() != 2 {
        return Err(SdError::Format(format!(
            "vignette shape must be [n_az, n_rg], found {:?}",
            payload.shape
        )));
    }
    Ok(payload)
}

/// Reads a vignette, converting samples to `T`.
pub fn read_vignette<T: Real>(
    raster_path: impl AsRef<Path>,
    sidecar_path: impl AsRef<Path>,
) -> Result<ComplexVignette<T>> {
    let raster_path = raster_path.as_ref();
    let sidecar_path = sidecar_path.as_ref();
    let meta = read_sidecar(sidecar_path)?;
    let payload = load_vignette_payload(raster_path, &meta)?;
    let data = Raster::new(
        payload.shape[0],
        payload.shape[1],
        decode_complex(&payload.bytes, payload.dtype),
    )?;
    let incidence_angle_deg = meta.incidence_angle_deg.ok_or_else(|| {
        SdError::Format(format!(
            "{}: vignette sidecar lacks incidence_angle_deg",
            sidecar_path.display()
        ))
    })?;
    ComplexVignette::new(VignetteParts {
        data,
        pixel_spacing_az: meta.pixel_spacing_az,
        pixel_spacing_rg: meta.pixel_spacing_rg,
        incidence_angle_deg,
        id: stem_of(sidecar_path),
    })
}

/// Reads a vignette in its stored precision: c64 (and f32 NPY) as `f32`,
/// c128 (and f64 NPY) as `f64`.
pub fn read_vignette_any(
    raster_path: impl AsRef<Path>,
    sidecar_path: impl AsRef<Path>,
) -> Result<AnyVignette> {
    let raster_path = raster_path.as_ref();
    let meta = read_sidecar(sidecar_path.as_ref())?;
    let dtype = if is_npy(raster_path) {
        npy_header(raster_path)?.0
    } else {
        meta.dtype.ok_or_else(|| SdError::Format("sidecar lacks dtype".into()))?
    };
    Ok(match dtype {
        Dtype::C64 | Dtype::F32 => AnyVignette::C64(read_vignette(raster_path, sidecar_path)?),
        Dtype::C128 | Dtype::F64 => AnyVignette::C128(read_vignette(raster_path, sidecar_path)?),
    })
}

fn write_payload(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| SdError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes)
        .and_then(|_| w.flush())
        .map_err(|e| SdError::io(path, e))
}

fn encode_complex<T: Real>(samples: &[Complex<T>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(samples.len() * 2 * T::BYTES);
    for z in samples {
        z.re.write_le(&mut out);
        z.im.write_le(&mut out);
    }
    out
}

/// Writes payload (c64 for `f32`, c128 for `f64`) and sidecar.
pub fn write_vignette<T: Real>(
    v: &ComplexVignette<T>,
    raster_path: impl AsRef<Path>,
    sidecar_path: impl AsRef<Path>,
) -> Result<()> {
    write_vignette_with(v, raster_path, sidecar_path, None)
}

/// [`write_vignette`] with a generator note in the sidecar.
pub fn write_vignette_with<T: Real>(
    v: &ComplexVignette<T>,
    raster_path: impl AsRef<Path>,
    sidecar_path: impl AsRef<Path>,
    generator: Option<String>,
) -> Result<()> {
    let meta = SidecarMetadata {
        schema_version: SCHEMA_VERSION,
        dtype: Some(Dtype::complex_of::<T>()),
        shape: Some(vec![v.n_az(), v.n_rg()]),
        byte_order: ByteOrder::Little,
        pixel_spacing_az: v.pixel_spacing_az(),
        pixel_spacing_rg: v.pixel_spacing_rg(),
        incidence_angle_deg: Some(v.incidence_angle_deg().clone()),
        channel_labels: None,
        provenance: None,
        generator,
    };
    write_payload(raster_path.as_ref(), &encode_complex(v.data().as_slice()))?;
    write_sidecar(&meta, sidecar_path)
}

/// Channel-major little-endian payload of a stack.
pub fn encode_stack_payload<T: Real>(s: &ProcessedStack<T>) -> Vec<u8> {
    let (h, w) = s.dims();
    let mut out = Vec::with_capacity(s.n_channels() * h * w * T::BYTES);
    for ch in s.channels() {
        for &x in ch.as_slice() {
            x.write_le(&mut out);
        }
    }
    out
}

fn stack_sidecar<T: Real>(s: &ProcessedStack<T>) -> SidecarMetadata {
    let (h, w) = s.dims();
    SidecarMetadata {
        schema_version: SCHEMA_VERSION,
        dtype: Some(Dtype::real_of::<T>()),
        shape: Some(vec![s.n_channels(), h, w]),
        byte_order: ByteOrder::Little,
        pixel_spacing_az: s.out_pixel_spacing_az(),
        pixel_spacing_rg: s.out_pixel_spacing_rg(),
        incidence_angle_deg: None,
        channel_labels: Some(s.channel_labels().to_vec()),
        provenance: s.provenance().cloned(),
        generator: None,
    }
}

pub fn write_stack<T: Real>(
    s: &ProcessedStack<T>,
    raster_path: impl AsRef<Path>,
    sidecar_path: impl AsRef<Path>,
) -> Result<()> {
    write_payload(raster_path.as_ref(), &encode_stack_payload(s))?;
    write_sidecar(&stack_sidecar(s), sidecar_path)
}

/// Stack in its stored precision.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyStack {
    F32(ProcessedStack<f32>),
    F64(ProcessedStack<f64>),
}

/// Reads a stack, converting samples to `T`. Missing channel labels fall
/// back to `C0`, `C1`, ...
pub fn read_stack<T: Real>(
    raster_path: impl AsRef<Path>,
    sidecar_path: impl AsRef<Path>,
) -> Result<ProcessedStack<T>> {
    let raster_path = raster_path.as_ref();
    let meta = read_sidecar(sidecar_path.as_ref())?;
    let payload = read_raw_payload(raster_path, &meta)?;
    let (n, h, w) = match payload.shape.as_slice() {
        &[n, h, w] => (n, h, w),
        &[h, w] => (1, h, w),
        other => {
            return Err(SdError::Format(format!(
                "stack shape must be [n_channels, n_az, n_rg], found {other:?}"
            )))
        }
    };
    let samples: Vec<T> = decode_real(&payload.bytes, payload.dtype)?;
    let channels = samples
        .chunks_exact(h * w)
        .map(|c| Raster::new(h, w, c.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let labels = meta
        .channel_labels
        .unwrap_or_else(|| (0..n).map(|k| format!("C{k}")).collect());
    ProcessedStack::new(
        channels,
        labels,
        meta.pixel_spacing_az,
        meta.pixel_spacing_rg,
        meta.provenance,
    )
}

pub fn read_stack_any(
    raster_path: impl AsRef<Path>,
    sidecar_path: impl AsRef<Path>,
) -> Result<AnyStack> {
    let meta = read_sidecar(sidecar_path.as_ref())?;
    match meta.dtype {
        Some(Dtype::F32) => Ok(AnyStack::F32(read_stack(raster_path, sidecar_path)?)),
        Some(Dtype::F64) => Ok(AnyStack::F64(read_stack(raster_path, sidecar_path)?)),
        other => Err(SdError::Format(format!(
            "stack dtype must be f32 or f64, found {other:?}"
        ))),
    }
}

// ---------------------------------------------------------------------------
// NPY v1.0 import
// ---------------------------------------------------------------------------

const NPY_MAGIC: &[u8] = b"\x93NUMPY";

fn npy_header(path: &Path) -> Result<(Dtype, Vec<usize>, usize)> {
    use std::io::Read;
    let mut f = File::open(path).map_err(|e| SdError::io(path, e))?;
    let mut head = [0u8; 10];
    f.read_exact(&mut head).map_err(|e| SdError::io(path, e))?;
    let len = u16::from_le_bytes([head[8], head[9]]) as usize;
    let mut dict = vec![0u8; len];
    f.read_exact(&mut dict).map_err(|e| SdError::io(path, e))?;
    let (dtype, shape) = parse_npy_header(&head, &dict)
        .map_err(|msg| SdError::Format(format!("{}: {msg}", path.display())))?;
    Ok((dtype, shape, 10 + len))
}

fn parse_npy_header(head: &[u8], dict: &[u8]) -> std::result::Result<(Dtype, Vec<usize>), String> {
    if &head[..6] != NPY_MAGIC {
        return Err("not an NPY file".into());
    }
    if head[6..8] != [1, 0] {
        return Err(format!("NPY version {}.{} unsupported (need 1.0)", head[6], head[7]));
    }
    let dict = std::str::from_utf8(dict).map_err(|_| "header is not ASCII".to_string())?;
    let value_of = |key: &str| -> std::result::Result<&str, String> {
        let at = dict
            .find(&format!("'{key}'"))
            .ok_or_else(|| format!("header lacks '{key}'"))?;
        let rest = &dict[at + key.len() + 2..];
        let colon = rest.find(':').ok_or("malformed header")?;
        Ok(rest[colon + 1..].trim_start())
    };

    let descr = value_of("descr")?;
    let descr = descr
        .strip_prefix('\'')
        .and_then(|s| s.split('\'').next())
        .ok_or("malformed descr")?;
    let dtype = match descr {
        "<c8" => Dtype::C64,
        "<c16" => Dtype::C128,
        "<f4" => Dtype::F32,
        "<f8" => Dtype::F64,
        other => return Err(format!("dtype {other} unsupported")),
    };
    if !value_of("fortran_order")?.starts_with("False") {
        return Err("Fortran-ordered arrays unsupported".into());
    }
    let shape = value_of("shape")?;
    let inner = shape
        .strip_prefix('(')
        .and_then(|s| s.split(')').next())
        .ok_or("malformed shape")?;
    let shape = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| format!("bad shape entry {s:?}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((dtype, shape))
}

fn read_npy(path: &Path) -> Result<Payload> {
    let (dtype, shape, offset) = npy_header(path)?;
    let mut bytes = fs::read(path).map_err(|e| SdError::io(path, e))?;
    let expected = shape.iter().product::<usize>() * dtype.sample_bytes();
    let actual = bytes.len() - offset;
    if actual != expected {
        return Err(SdError::SizeMismatch {
            path: path.to_path_buf(),
            expected: expected as u64,
            actual: actual as u64,
        });
    }
    bytes.drain(..offset);
    Ok(Payload {
        dtype,
        shape,
        bytes,
    })
}

// ---------------------------------------------------------------------------
// PNG previews
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stretch {
    Linear,
    Log,
}

impl FromStr for Stretch {
    type Err = SdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Stretch::Linear),
            "log" => Ok(Stretch::Log),
            other => Err(SdError::Config(format!("unknown stretch {other:?}"))),
        }
    }
}

pub const LOG_EPSILON: f64 = 1e-10;

/// Nearest-rank percentile of a non-empty slice (reorders it).
fn percentile(values: &mut [f64], p: f64) -> f64 {
    let k = ((values.len() - 1) as f64 * p).round() as usize;
    *values
        .select_nth_unstable_by(k, |a, b| a.partial_cmp(b).unwrap())
        .1
}

/// Maps an image to 8-bit gray levels: optional `10 log10(x + 1e-10)`, then
/// the [p1, p99] range onto [0, 255] with clamping. Constant images map to
/// 128.
pub fn stretch_to_u8<T: Real>(image: &Raster<T>, stretch: Stretch) -> Result<Vec<u8>> {
    let mut values: Vec<f64> = Vec::with_capacity(image.as_slice().len());
    for &x in image.as_slice() {
        let x = x.as_f64();
        if !x.is_finite() {
            return Err(SdError::Config("cannot render non-finite samples".into()));
        }
        values.push(match stretch {
            Stretch::Linear => x,
            Stretch::Log if x < 0.0 => {
                return Err(SdError::Config("log stretch needs non-negative samples".into()))
            }
            Stretch::Log => 10.0 * (x + LOG_EPSILON).log10(),
        });
    }
    if values.is_empty() {
        return Ok(Vec::new());
    }
    let mut scratch = values.clone();
    let lo = percentile(&mut scratch, 0.01);
    let hi = percentile(&mut scratch, 0.99);
    if hi <= lo {
        return Ok(vec![128; values.len()]);
    }
    Ok(values
        .iter()
        .map(|&x| ((x - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect())
}

/// Writes an 8-bit grayscale PNG without alpha.
pub fn render_png<T: Real>(image: &Raster<T>, path: impl AsRef<Path>, stretch: Stretch) -> Result<()> {
    let path = path.as_ref();
    let pixels = stretch_to_u8(image, stretch)?;
    let file = File::create(path).map_err(|e| SdError::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), image.cols() as u32, image.rows() as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| SdError::Format(format!("{}: {e}", path.display()));
    let mut writer = encoder.write_header().map_err(png_err)?;
    writer.write_image_data(&pixels).map_err(png_err)?;
    writer.finish().map_err(png_err)
}
