use std::path::Path;

use nonloc_homog_cli::config::{
    BoxKernel, ConstantMu, CosineProductMu, ExperimentConfig, ExponentialKernel, GaussianKernel, KernelConfig,
    MuConfig, ThresholdConfig, Tolerances, XiGridConfig,
};
use proptest::prelude::*;

fn shipped() -> Vec<std::path::PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut files: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files
}

#[test]
fn shipped_configs_round_trip() {
    for path in shipped() {
        let text = std::fs::read_to_string(&path).unwrap();
        let config = ExperimentConfig::load(&path).unwrap();
        let original: serde_json::Value = serde_json::from_str(&text).unwrap();
        let again: serde_json::Value = serde_json::from_str(&config.to_json()).unwrap();
        assert_eq!(original, again, "{}", path.display());
    }
}

fn kernel() -> impl Strategy<Value = KernelConfig> {
    prop_oneof![
        (0.1f64..0.5, 0.5f64..2.0)
            .prop_map(|(radius, normalization)| KernelConfig::Box(BoxKernel { radius, normalization })),
        (0.05f64..0.3, 0.5f64..2.0)
            .prop_map(|(sigma, normalization)| KernelConfig::Gaussian(GaussianKernel { sigma, normalization })),
        (2.0f64..8.0, 0.5f64..2.0, prop::option::of(0.3f64..0.5)).prop_map(
            |(rate, normalization, truncation_radius)| {
                KernelConfig::Exponential(ExponentialKernel { rate, normalization, truncation_radius })
            }
        ),
    ]
}

fn mu() -> impl Strategy<Value = MuConfig> {
    prop_oneof![
        (0.5f64..3.0).prop_map(|value| MuConfig::Constant(ConstantMu { value })),
        (1.0f64..3.0, 0.0f64..0.9).prop_map(|(base, alpha)| MuConfig::CosineProduct(CosineProductMu { base, alpha })),
    ]
}

fn config() -> impl Strategy<Value = ExperimentConfig> {
    (
        kernel(),
        mu(),
        prop::sample::select(vec![16usize, 32, 64]),
        prop::option::of((prop::option::of(1usize..12), prop::option::of(Just(vec![vec![1.0]])))),
        prop::option::of((prop::option::of(3usize..20), prop::option::of(0usize..9))),
        prop::option::of(prop::collection::btree_set(1u32..1000, 1..6)),
        (
            prop::option::of(any::<u64>()),
            prop::option::of(1usize..200),
            prop::option::of(prop::option::of(1e-9f64..1e-3)),
        ),
    )
        .prop_map(|(kernel, mu, grid_n, threshold, xi, eps, (seed, pairs, tau))| ExperimentConfig {
            schema_version: 1,
            dimension: 1,
            kernel,
            mu,
            grid_n,
            threshold: threshold.map(|(count, directions)| ThresholdConfig { count, directions }),
            xi_grid: xi.map(|(per_axis, refinement)| XiGridConfig { per_axis, refinement }),
            epsilons: eps.map(|s| s.into_iter().map(|k| k as f64 / 1024.0).collect()),
            contour_points: None,
            seed,
            lipschitz_pairs: pairs,
            output_dir: None,
            tolerances: tau.map(|tau| Tolerances { tau, ..Tolerances::default() }),
            base_dir: Default::default(),
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn configs_round_trip(config in config()) {
        let text = config.to_json();
        let parsed = ExperimentConfig::from_json(&text, Path::new("")).unwrap();
        prop_assert_eq!(&parsed, &config);
        let a: serde_json::Value = serde_json::from_str(&text).unwrap();
        let b: serde_json::Value = serde_json::from_str(&parsed.to_json()).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn unknown_fields_are_rejected() {
    let text = r#"{"schema_version": 1, "dimension": 1, "grid_n": 32, "colour": "red",
        "kernel": {"family": "box", "radius": 0.5, "normalization": 1.0},
        "mu": {"family": "constant", "value": 1.0}}"#;
    let err = ExperimentConfig::from_json(text, Path::new("")).unwrap_err().to_string();
    assert!(err.contains("colour"), "{err}");
}
