use proptest::prelude::*;
use sarsd::io::{read_stack, read_vignette, sidecar_path_for, write_stack, write_vignette};
use sarsd::multilook::{multilook_dims, multilook_with};
use sarsd::sd::{
    azimuth_fft, center_spectrum, decompose, generate_subaperture_spectra, make_bands, uncenter_spectrum,
    HammingWindow,
};
use sarsd::{calibrate, Complex, ComplexVignette, ProcessedStack, Raster, ReferenceProfile, SdConfig};

fn complex_raster(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Raster<Complex<f64>>> {
    (2..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| {
        prop::collection::vec((-1e3..1e3f64, -1e3..1e3f64), r * c)
            .prop_map(move |v| Raster::new(r, c, v.into_iter().map(|(a, b)| Complex::new(a, b)).collect()).unwrap())
    })
}

fn vignette(data: Raster<Complex<f64>>) -> ComplexVignette<f64> {
    ComplexVignette::from_raster(data, 5.0, 4.5, 33.0, "p").unwrap()
}

fn max_abs_diff(a: &Raster<Complex<f64>>, b: &Raster<Complex<f64>>) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn vignette_round_trip_is_bit_exact(data in complex_raster(12, 12)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.bin");
        let v = vignette(data);
        write_vignette(&v, &path, sidecar_path_for(&path)).unwrap();
        let back = read_vignette::<f64>(&path, sidecar_path_for(&path)).unwrap();
        prop_assert_eq!(back.data(), v.data());
        prop_assert_eq!(back.pixel_spacing_rg(), 4.5);

        let v32 = ComplexVignette::from_raster(v.data().map(|z| Complex::new(z.re as f32, z.im as f32)), 5.0, 5.0, 30.0, "q").unwrap();
        write_vignette(&v32, &path, sidecar_path_for(&path)).unwrap();
        let back32 = read_vignette::<f32>(&path, sidecar_path_for(&path)).unwrap();
        prop_assert_eq!(back32.data(), v32.data());
    }

    #[test]
    fn stack_round_trip_is_bit_exact(
        (h, w, values) in (1..8usize, 1..8usize).prop_flat_map(|(h, w)| (Just(h), Just(w), prop::collection::vec(0.0..1e6f32, 3 * h * w)))
    ) {
        let channels = values.chunks(h * w).map(|c| Raster::new(h, w, c.to_vec()).unwrap()).collect();
        let s = ProcessedStack::new(channels, vec!["O".into(), "S1".into(), "S2".into()], 50.0, 45.0, Some(SdConfig::default())).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.stack.bin");
        write_stack(&s, &path, sidecar_path_for(&path)).unwrap();
        prop_assert_eq!(read_stack::<f32>(&path, sidecar_path_for(&path)).unwrap(), s);
    }

    #[test]
    fn decomposition_is_linear(
        (x, y) in (4..24usize, 1..6usize).prop_flat_map(|(r, c)| {
            let img = move || prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), r * c)
                .prop_map(move |v| Raster::new(r, c, v.into_iter().map(|(a, b)| Complex::new(a, b)).collect()).unwrap());
            (img(), img())
        }),
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
    ) {
        let cfg = SdConfig { n_subapertures: x.rows() / 4, calibration: ReferenceProfile::scalar(0.5).unwrap(), ..SdConfig::default() };
        let combo = Raster::new(x.rows(), x.cols(), x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| p * a + q * b).collect()).unwrap();
        let sx = decompose(&vignette(x.clone()), &cfg).unwrap();
        let sy = decompose(&vignette(y), &cfg).unwrap();
        let sc = decompose(&vignette(combo), &cfg).unwrap();
        for k in 0..sc.len() {
            let want = Raster::new(x.rows(), x.cols(), sx.image(k).as_slice().iter().zip(sy.image(k).as_slice()).map(|(p, q)| p * a + q * b).collect()).unwrap();
            prop_assert!(max_abs_diff(sc.image(k), &want) < 1e-9);
        }
    }

    #[test]
    fn bands_partition_with_disjoint_support(n_az in 4..300usize, n_frac in 0.0..1.0f64, alpha in 0.501..=1.0f64) {
        let n = 1 + ((n_az / 4 - 1) as f64 * n_frac) as usize;
        let bands = make_bands(n_az, n, alpha).unwrap();
        prop_assert_eq!(bands.len(), n);
        prop_assert_eq!(bands[0].start_row, 0);
        prop_assert_eq!(bands[n - 1].end_row, n_az);
        for pair in bands.windows(2) {
            prop_assert_eq!(pair[0].end_row, pair[1].start_row);
            prop_assert_eq!(pair[0].len(), n_az / n);
        }
        prop_assert!(bands[n - 1].len() - n_az / n < n);

        let v = vignette(Raster::filled(n_az, 2, Complex::new(1.0, -0.5)));
        let spec = center_spectrum(azimuth_fft(&v)).unwrap();
        let subs = generate_subaperture_spectra(&spec, &bands).unwrap();
        for (i, a) in subs.iter().enumerate() {
            for b in &subs[i + 1..] {
                for c in 0..2 {
                    prop_assert!(a.line(c).iter().zip(b.line(c)).all(|(p, q)| p * q == Complex::new(0.0, 0.0)));
                }
            }
        }
    }

    #[test]
    fn hamming_window_is_symmetric(len in 1..600usize, alpha in 0.501..=1.0f64) {
        let w = HammingWindow::new(len, alpha).unwrap();
        let w = w.weights();
        prop_assert_eq!(w.len(), len);
        for k in 0..len {
            prop_assert_eq!(w[k], w[len - 1 - k]);
            prop_assert!(w[k] > 0.0 && w[k] <= 1.0 + 1e-15);
        }
        if len > 1 {
            prop_assert!((w[0] - (2.0 * alpha - 1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn centering_round_trips_exactly(data in complex_raster(40, 3)) {
        let v = vignette(data);
        let s = azimuth_fft(&v);
        let back = uncenter_spectrum(center_spectrum(s.clone()).unwrap()).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn calibration_scales_energy(data in complex_raster(10, 10), r in 1e-3..1e3f64) {
        let v = vignette(data);
        let out = calibrate(&v, &ReferenceProfile::scalar(r).unwrap()).unwrap();
        let e = |x: &ComplexVignette<f64>| x.data().as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>();
        let (e0, e1) = (e(&v), e(&out));
        prop_assert!((e1 - e0 / r).abs() <= 1e-6 * e0 / r + 1e-300);
    }

    #[test]
    fn multilook_is_non_negative_with_expected_grid(data in complex_raster(40, 40), size in 1..5usize, factor in 1..5usize) {
        prop_assume!(size <= data.rows().min(data.cols()));
        let out = multilook_with(&data, size, 1.0 / (size * size) as f64, factor).unwrap();
        prop_assert_eq!(out.dims(), multilook_dims(data.rows(), data.cols(), size, factor));
        prop_assert!(out.as_slice().iter().all(|&x| x >= 0.0 && x.is_finite()));
    }
}

#[test]
fn decomposition_ignores_thread_count() {
    let v: ComplexVignette<f32> = sarsd::synth::generate(&sarsd::synth::SceneSpec::speckle(300, 130, 8)).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| sarsd::pipeline::process_vignette(&v, &SdConfig::default()).unwrap().0)
    };
    let one = run(1);
    for threads in [2, 5] {
        let other = run(threads);
        for (a, b) in one.channels().iter().zip(other.channels()) {
            assert!(a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
