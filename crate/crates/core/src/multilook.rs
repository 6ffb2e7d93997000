//! Intensity, uniform low-pass filtering and decimation.
//!
//! Filtering is valid-mode (no padding). [`multilook_channel`] samples the
//! filtered grid at every multiple of the decimation factor whose window
//! fits inside the image, which gives `floor(n / D)` samples per axis
//! whenever the filter size equals the factor (the default 10 / 10).

use num_complex::Complex;
use rayon::prelude::*;

use crate::config::SdConfig;
use crate::error::{Result, SdError};
use crate::raster::{Raster, Real};

/// `|z|^2` per sample.
pub fn intensity<T: Real>(img: &Raster<Complex<T>>) -> Raster<T> {
    img.map(|z| z.norm_sqr())
}

fn check_kernel(rows: usize, cols: usize, size: usize) -> Result<()> {
    if size < 1 {
        return Err(SdError::Config("filter size must be >= 1".into()));
    }
    if size > rows.min(cols) {
        return Err(SdError::Config(format!(
            "filter size {size} exceeds image dimensions {rows}x{cols}"
        )));
    }
    Ok(())
}

/// Valid-mode correlation with a `size x size` kernel of constant
/// `coefficient`, computed as two running-sum passes.
pub fn boxcar_lowpass<T: Real>(img: &Raster<T>, size: usize, coefficient: f64) -> Result<Raster<T>> {
    let (h, w) = img.dims();
    check_kernel(h, w, size)?;
    let (oh, ow) = (h - size + 1, w - size + 1);
    // running sums can leave tiny negative residues where a non-negative
    // image drops to zero
    let floor = if img.as_slice().iter().all(|&x| x >= T::zero()) {
        0.0
    } else {
        f64::NEG_INFINITY
    };

    // horizontal window sums, h x ow
    let mut horiz = vec![0.0f64; h * ow];
    horiz
        .par_chunks_mut(ow)
        .zip(img.as_slice().par_chunks(w))
        .for_each(|(dst, row)| {
            let mut acc: f64 = row[..size].iter().map(|x| x.as_f64()).sum();
            dst[0] = acc;
            for j in 1..ow {
                acc += row[j + size - 1].as_f64() - row[j - 1].as_f64();
                dst[j] = acc;
            }
        });

    // vertical running sums, split over column strips
    let mut out = vec![T::zero(); oh * ow];
    let strip = 64usize;
    let strips: Vec<Vec<T>> = (0..ow.div_ceil(strip))
        .into_par_iter()
        .map(|s| {
            let c0 = s * strip;
            let c1 = (c0 + strip).min(ow);
            let wid = c1 - c0;
            let mut acc = vec![0.0f64; wid];
            for r in 0..size {
                for (a, x) in acc.iter_mut().zip(&horiz[r * ow + c0..r * ow + c1]) {
                    *a += x;
                }
            }
            let mut block = Vec::with_capacity(oh * wid);
            for i in 0..oh {
                if i > 0 {
                    let add = &horiz[(i + size - 1) * ow + c0..(i + size - 1) * ow + c1];
                    let sub = &horiz[(i - 1) * ow + c0..(i - 1) * ow + c1];
                    for ((a, x), y) in acc.iter_mut().zip(add).zip(sub) {
                        *a += x - y;
                    }
                }
                block.extend(acc.iter().map(|&a| T::of_f64((a * coefficient).max(floor))));
            }
            block
        })
        .collect();
    for (s, block) in strips.into_iter().enumerate() {
        let c0 = s * strip;
        let wid = block.len() / oh.max(1);
        for i in 0..oh {
            out[i * ow + c0..i * ow + c0 + wid].copy_from_slice(&block[i * wid..(i + 1) * wid]);
        }
    }
    Raster::new(oh, ow, out)
}

/// Pure subsampling `out[i][j] = in[i * factor][j * factor]`, output
/// `floor(H / factor) x floor(W / factor)`.
pub fn decimate<T: Real>(img: &Raster<T>, factor: usize) -> Result<Raster<T>> {
    if factor < 1 {
        return Err(SdError::Config("decimation factor must be >= 1".into()));
    }
    let (h, w) = img.dims();
    Ok(Raster::from_fn(h / factor, w / factor, |i, j| {
        img.get(i * factor, j * factor)
    }))
}

/// Output (rows, cols) of [`multilook_channel`] for an `h x w` input.
pub fn multilook_dims(h: usize, w: usize, size: usize, factor: usize) -> (usize, usize) {
    let grid = |n: usize| {
        if n < size {
            0
        } else {
            (n - size) / factor + 1
        }
    };
    (grid(h), grid(w))
}

/// Intensity, low-pass and decimation in one pass, evaluated only on the
/// retained grid points. Equals `decimate(boxcar_lowpass(intensity(img)))`
/// on their common support.
pub fn multilook_channel<T: Real>(img: &Raster<Complex<T>>, cfg: &SdConfig) -> Result<Raster<T>> {
    multilook_with(
        img,
        cfg.lowpass_size,
        cfg.lowpass_coefficient,
        cfg.decimation_factor,
    )
}

pub fn multilook_with<T: Real>(
    img: &Raster<Complex<T>>,
    size: usize,
    coefficient: f64,
    factor: usize,
) -> Result<Raster<T>> {
    let (h, w) = img.dims();
    check_kernel(h, w, size)?;
    if factor < 1 {
        return Err(SdError::Config("decimation factor must be >= 1".into()));
    }
    let (oh, ow) = multilook_dims(h, w, size, factor);
    let src = img.as_slice();
    let mut out = vec![T::zero(); oh * ow];
    out.par_chunks_mut(ow.max(1)).enumerate().for_each_init(
        || vec![0.0f64; ow],
        |acc, (i, dst)| {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for r in i * factor..i * factor + size {
                let row = &src[r * w..(r + 1) * w];
                for (j, a) in acc.iter_mut().enumerate() {
                    let c0 = j * factor;
                    let s: f64 = row[c0..c0 + size]
                        .iter()
                        .map(|z| z.norm_sqr().as_f64())
                        .sum();
                    *a += s;
                }
            }
            for (d, &a) in dst.iter_mut().zip(acc.iter()) {
                *d = T::of_f64(a * coefficient);
            }
        },
    );
    Raster::new(oh, ow, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(img: &Raster<f64>, size: usize, coefficient: f64) -> Raster<f64> {
        let (h, w) = img.dims();
        Raster::from_fn(h - size + 1, w - size + 1, |i, j| {
            let mut s = 0.0;
            for a in 0..size {
                for b in 0..size {
                    s += coefficient * img.get(i + a, j + b);
                }
            }
            s
        })
    }

    fn noise(h: usize, w: usize, seed: u64) -> Raster<f64> {
        let mut x = seed.wrapping_add(0x9E3779B97F4A7C15);
        Raster::from_fn(h, w, |_, _| {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            (x >> 11) as f64 / (1u64 << 53) as f64
        })
    }

    #[test]
    fn intensity_definition() {
        let img = Raster::new(
            1,
            3,
            vec![Complex::new(1.0f32, 0.0), Complex::new(0.0, 2.0), Complex::new(3.0, 4.0)],
        )
        .unwrap();
        assert_eq!(intensity(&img).as_slice(), &[1.0, 4.0, 25.0]);
        let zero = Raster::filled(4, 4, Complex::new(0.0f32, 0.0));
        assert!(intensity(&zero).as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn intensity_sum_is_squared_frobenius_norm() {
        let re = noise(17, 9, 1);
        let im = noise(17, 9, 2);
        let img = Raster::from_fn(17, 9, |i, j| Complex::new(re.get(i, j) - 0.5, im.get(i, j) - 0.5));
        let total: f64 = intensity(&img).as_slice().iter().sum();
        let frob: f64 = img.as_slice().iter().map(|z| z.re * z.re + z.im * z.im).sum();
        assert!((total - frob).abs() <= 1e-12 * frob);
    }

    #[test]
    fn constant_image_keeps_its_level() {
        let img = Raster::filled(30, 25, 3.7f64);
        let out = boxcar_lowpass(&img, 10, 0.01).unwrap();
        assert_eq!(out.dims(), (21, 16));
        assert!(out.as_slice().iter().all(|&x| (x - 3.7).abs() <= 1e-12 * 3.7));
    }

    #[test]
    fn single_impulse_gives_kernel_coefficient() {
        let mut img = Raster::filled(10, 10, 0.0f64);
        img.set(4, 7, 1.0);
        let out = boxcar_lowpass(&img, 10, 0.01).unwrap();
        assert_eq!(out.dims(), (1, 1));
        assert!((out.get(0, 0) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn matches_brute_force_on_random_input() {
        let img = noise(64, 64, 3);
        let fast = boxcar_lowpass(&img, 10, 0.01).unwrap();
        let slow = brute_force(&img, 10, 0.01);
        for (a, b) in fast.as_slice().iter().zip(slow.as_slice()) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-12));
        }
    }

    #[test]
    fn oversized_kernel_is_a_config_error() {
        let img = Raster::filled(8, 20, 1.0f32);
        assert!(matches!(boxcar_lowpass(&img, 9, 1.0 / 81.0), Err(SdError::Config(_))));
    }

    #[test]
    fn decimation_definition() {
        let img = Raster::from_fn(20, 20, |i, j| (i * 100 + j) as f32);
        assert_eq!(decimate(&img, 1).unwrap(), img);
        let d = decimate(&img, 10).unwrap();
        assert_eq!(d.as_slice(), &[0.0, 10.0, 1000.0, 1010.0]);
        assert_eq!(decimate(&Raster::filled(25, 19, 0.0f32), 10).unwrap().dims(), (2, 1));
    }

    #[test]
    fn grid_size_rule_is_frozen() {
        assert_eq!(multilook_dims(4096, 4096, 10, 10), (409, 409));
        assert_eq!(multilook_dims(4095, 4099, 10, 10), (409, 409));
        assert_eq!(multilook_dims(20, 20, 10, 10), (2, 2));
        assert_eq!(multilook_dims(512, 333, 10, 10), (51, 33));
        for n in 10..200 {
            assert_eq!(multilook_dims(n, n, 10, 10).0, n / 10);
        }
    }

    #[test]
    fn fused_path_matches_composition() {
        let re = noise(47, 38, 5);
        let im = noise(47, 38, 6);
        let img = Raster::from_fn(47, 38, |i, j| Complex::new(re.get(i, j), im.get(i, j)));
        let fused = multilook_with(&img, 10, 0.01, 10).unwrap();
        let composed = decimate(&boxcar_lowpass(&intensity(&img), 10, 0.01).unwrap(), 10).unwrap();
        assert_eq!(fused.dims(), (4, 3));
        assert_eq!(composed.dims(), (3, 2));
        for i in 0..composed.rows() {
            for j in 0..composed.cols() {
                let (a, b) = (fused.get(i, j), composed.get(i, j));
                assert!((a - b).abs() <= 1e-12 * b);
            }
        }
    }

    #[test]
    fn unit_parameters_reduce_to_intensity() {
        let img = Raster::from_fn(6, 5, |i, j| Complex::new(i as f32 - 2.0, j as f32 * 0.5));
        let cfg = SdConfig {
            lowpass_size: 1,
            lowpass_coefficient: 1.0,
            decimation_factor: 1,
            ..SdConfig::default()
        };
        assert_eq!(multilook_channel(&img, &cfg).unwrap(), intensity(&img));
    }

    #[test]
    fn constant_amplitude_gives_constant_intensity() {
        let img = Raster::filled(40, 30, Complex::new(0.0f64, 2.0));
        let out = multilook_channel(&img, &SdConfig::default()).unwrap();
        assert_eq!(out.dims(), (4, 3));
        assert!(out.as_slice().iter().all(|&x| (x - 4.0).abs() < 1e-12));
    }
}
