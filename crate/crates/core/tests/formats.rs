use std::fs;

use sarsd::io::{read_sidecar, read_stack, read_vignette, sidecar_path_for, write_stack, write_vignette, Dtype};
use sarsd::{Complex, ComplexVignette, ProcessedStack, Raster, SdConfig};

#[test]
fn full_size_c64_payload_is_134_217_728_bytes() {
    let data = Raster::from_fn(4096, 4096, |i, j| Complex::new(i as f32, -(j as f32)));
    let v = ComplexVignette::from_raster(data, 5.0, 5.0, 23.0, "wv").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wv.bin");
    write_vignette(&v, &path, sidecar_path_for(&path)).unwrap();
    assert_eq!(fs::metadata(&path).unwrap().len(), 134_217_728);
    let meta = read_sidecar(sidecar_path_for(&path)).unwrap();
    assert_eq!(meta.dtype, Some(Dtype::C64));
    assert_eq!(meta.shape, Some(vec![4096, 4096]));
    let back = read_vignette::<f32>(&path, sidecar_path_for(&path)).unwrap();
    assert_eq!(back.data(), v.data());
    assert_eq!(back.id(), "wv");
}

#[test]
fn four_channel_stack_payload_is_4_000_000_bytes() {
    let channels = (0..4)
        .map(|k| Raster::from_fn(500, 500, |i, j| (k * 1_000_000 + i * 500 + j) as f32))
        .collect();
    let labels = ["S1", "S2", "S3", "S4"].map(String::from).to_vec();
    let s = ProcessedStack::new(channels, labels, 50.0, 50.0, Some(SdConfig::default())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.stack.bin");
    write_stack(&s, &path, sidecar_path_for(&path)).unwrap();
    assert_eq!(fs::metadata(&path).unwrap().len(), 4_000_000);
    let meta = read_sidecar(sidecar_path_for(&path)).unwrap();
    assert_eq!(meta.shape, Some(vec![4, 500, 500]));
    assert_eq!(meta.dtype, Some(Dtype::F32));
    assert_eq!(meta.channel_labels.as_deref(), Some(&["S1", "S2", "S3", "S4"].map(String::from)[..]));
    assert_eq!(meta.provenance, Some(SdConfig::default()));
    assert_eq!(read_stack::<f32>(&path, sidecar_path_for(&path)).unwrap(), s);
}

#[test]
fn stack_payload_is_channel_major() {
    let channels = vec![Raster::filled(1, 2, 1.0f32), Raster::filled(1, 2, 2.0f32)];
    let s = ProcessedStack::new(channels, vec!["S1".into(), "S2".into()], 50.0, 50.0, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.stack.bin");
    write_stack(&s, &path, sidecar_path_for(&path)).unwrap();
    let bytes = fs::read(&path).unwrap();
    let floats: Vec<f32> = bytes.chunks(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    assert_eq!(floats, [1.0, 1.0, 2.0, 2.0]);
}

#[test]
fn unlabeled_stack_falls_back_to_index_names() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.bin");
    fs::write(&path, [0u8; 16]).unwrap();
    fs::write(
        sidecar_path_for(&path),
        r#"{"schema_version": 1, "dtype": "f32", "shape": [2, 1, 2], "byte_order": "little",
            "pixel_spacing_az": 50.0, "pixel_spacing_rg": 50.0}"#,
    )
    .unwrap();
    let s = read_stack::<f32>(&path, sidecar_path_for(&path)).unwrap();
    assert_eq!(s.channel_labels(), ["C0", "C1"]);
}
