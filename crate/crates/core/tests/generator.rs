use mvgf_core::data::{generate_synthetic_dataset, GeneratorConfig};

#[test]
fn soybean_preset_matches_reference_yield_distribution() {
    let cfg = GeneratorConfig { pixels_per_field: 2_000, ..GeneratorConfig::preset("arg-s-like", 2).unwrap() };
    let ds = generate_synthetic_dataset(&cfg).unwrap();
    assert!(ds.len() >= 100_000);
    let n = ds.len() as f64;
    let mean = ds.samples.iter().map(|s| s.yield_t_ha).sum::<f64>() / n;
    let std = (ds.samples.iter().map(|s| (s.yield_t_ha - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!((mean - 3.86).abs() < 0.1, "mean {mean}");
    assert!((std - 1.49).abs() < 0.1, "std {std}");
}

#[test]
fn zero_fields_is_a_config_error() {
    let cfg = GeneratorConfig { fields_per_farm: 0, ..GeneratorConfig::desk(0) };
    assert!(matches!(generate_synthetic_dataset(&cfg), Err(mvgf_core::Error::Config(_))));
}
