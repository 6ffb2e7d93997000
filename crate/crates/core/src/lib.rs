//! Sub-aperture decomposition of single-look complex SAR vignettes.
//!
//! The azimuth spectrum of each calibrated vignette is split into N
//! contiguous Doppler bands, each band is Hamming-windowed and brought back
//! to the image domain, and the resulting N complex images are multilooked
//! into an intensity stack.

pub mod calibration;
pub mod config;
pub mod error;
pub mod io;
pub mod multilook;
pub mod pipeline;
pub mod raster;
pub mod sd;
pub mod synth;

pub use calibration::{calibrate, ReferenceProfile};
pub use config::SdConfig;
pub use error::{Result, SdError, Stage};
pub use raster::{
    BandDescriptor, ComplexVignette, IncidenceAngle, ProcessedStack, Raster, Real, SubapertureStack,
    VignetteParts, Violation,
};
pub use num_complex::Complex;
