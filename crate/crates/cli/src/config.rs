//! Versioned JSON experiment configuration.

use std::path::{Path, PathBuf};

use nonloc_homog::grid::Grid;
use nonloc_homog::kernels::{KernelSpec, MuSpec, RadialTable};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_THRESHOLD_COUNT: usize = 10;
pub const DEFAULT_XI_PER_AXIS: usize = 17;
pub const DEFAULT_XI_REFINEMENT: usize = 8;
pub const DEFAULT_EPSILON_COUNT: usize = 7;
pub const DEFAULT_LIPSCHITZ_PAIRS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelConfig {
    Box(BoxKernel),
    Gaussian(GaussianKernel),
    Exponential(ExponentialKernel),
    Tabulated(TabulatedKernel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxKernel {
    pub radius: f64,
    pub normalization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianKernel {
    pub sigma: f64,
    pub normalization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentialKernel {
    pub rate: f64,
    pub normalization: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabulatedKernel {
    /// Two-column CSV (radius, value) with a header row; relative to the config file.
    pub table: PathBuf,
    pub normalization: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MuConfig {
    Constant(ConstantMu),
    CosineProduct(CosineProductMu),
    Tabulated(TabulatedMu),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantMu {
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosineProductMu {
    pub base: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabulatedMu {
    pub points: usize,
    /// Row-major (x node, y node) values, points^d × points^d entries.
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    /// Number of geometric steps |ξ| = δ₀·2^{-m}.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// Sweep directions; defaults to the first axis (plus the diagonal for d ≥ 2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directions: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XiGridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_axis: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refinement: Option<usize>,
}

/// Overrides for check tolerances.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Quadrature tolerance τ_q; estimated from an N vs 2N comparison when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_point: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g3_exactness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub dimension: usize,
    pub kernel: KernelConfig,
    pub mu: MuConfig,
    pub grid_n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<ThresholdConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_grid: Option<XiGridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contour_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz_pairs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
    /// Directory relative paths are resolved against; set by `load`.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn invalid(field: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {message}"))
}

fn probe<T: DeserializeOwned>(section: serde_json::Value) -> Option<(String, String)> {
    serde_path_to_error::deserialize::<_, T>(section).err().map(|e| (e.path().to_string(), e.into_inner().to_string()))
}

/// 1-based (line, column) of `"key"` after `"section"` in the source text.
fn key_position(text: &str, section: &str, key: &str) -> Option<(usize, usize)> {
    let from = text.find(&format!("\"{section}\""))?;
    let at = from + text[from..].find(&format!("\"{key}\""))?;
    let line_start = text[..at].rfind('\n').map_or(0, |i| i + 1);
    Some((text[..at].matches('\n').count() + 1, at - line_start + 1))
}

/// Tagged sections are buffered during parsing, so errors inside them lose their
/// field and position. This re-reads the section as its family's parameter struct.
fn locate_in_section(text: &str, section: &str) -> Option<String> {
    let mut value: serde_json::Value = serde_json::from_str(text).ok()?;
    let body = value.get_mut(section)?.as_object_mut()?;
    let family = body.remove("family")?.as_str()?.to_string();
    let body = serde_json::Value::Object(body.clone());
    let (field, message) = match (section, family.as_str()) {
        ("kernel", "box") => probe::<BoxKernel>(body),
        ("kernel", "gaussian") => probe::<GaussianKernel>(body),
        ("kernel", "exponential") => probe::<ExponentialKernel>(body),
        ("kernel", "tabulated") => probe::<TabulatedKernel>(body),
        ("mu", "constant") => probe::<ConstantMu>(body),
        ("mu", "cosine_product") => probe::<CosineProductMu>(body),
        ("mu", "tabulated") => probe::<TabulatedMu>(body),
        _ => None,
    }?;
    let key = field.split(['.', '[']).next().unwrap_or_default();
    let location = match key_position(text, section, key).filter(|_| !key.is_empty() && key != ".") {
        Some((line, column)) => format!("line {line} column {column}"),
        None => format!("section `{section}`"),
    };
    let field = if field == "." { section.to_string() } else { format!("{section}.{field}") };
    Some(format!("{location}: field `{field}`: {message}"))
}

impl ExperimentConfig {
    /// Parses JSON text, reporting line, column and field path on failure, then validates.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let located = matches!(path.as_str(), "kernel" | "mu").then(|| locate_in_section(text, &path)).flatten();
            CliError::Config(
                located.unwrap_or_else(|| {
                    format!("line {} column {}: field `{path}`: {inner}", inner.line(), inner.column())
                }),
            )
        })?;
        config.base_dir = base_dir.to_path_buf();
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, &base).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid("schema_version", format!("expected {SCHEMA_VERSION}, got {}", self.schema_version)));
        }
        if !(1..=3).contains(&self.dimension) {
            return Err(invalid("dimension", "must be 1, 2 or 3"));
        }
        if self.grid_n < 2 || !self.grid_n.is_multiple_of(2) {
            return Err(invalid("grid_n", format!("must be even and at least 2 (got {})", self.grid_n)));
        }
        if let Some(eps) = &self.epsilons {
            if eps.is_empty() || eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
                return Err(invalid("epsilons", "values must be positive and finite"));
            }
            let mut sorted = eps.clone();
            sorted.sort_by(f64::total_cmp);
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(invalid("epsilons", "values must be distinct"));
            }
        }
        if let Some(dirs) = self.threshold.as_ref().and_then(|t| t.directions.as_ref()) {
            for (i, d) in dirs.iter().enumerate() {
                if d.len() != self.dimension || d.iter().all(|v| *v == 0.0) || d.iter().any(|v| !v.is_finite()) {
                    return Err(invalid(
                        &format!("threshold.directions[{i}]"),
                        "must be a nonzero vector of the configured dimension",
                    ));
                }
            }
        }
        if self.threshold.as_ref().and_then(|t| t.count) == Some(0) {
            return Err(invalid("threshold.count", "must be positive"));
        }
        if let Some(x) = &self.xi_grid {
            if x.per_axis == Some(0) {
                return Err(invalid("xi_grid.per_axis", "must be positive"));
            }
        }
        if let Some(k) = self.contour_points {
            if k < nonloc_homog::threshold::MIN_CONTOUR_POINTS {
                return Err(invalid(
                    "contour_points",
                    format!("must be at least {}", nonloc_homog::threshold::MIN_CONTOUR_POINTS),
                ));
            }
        }
        if let KernelConfig::Tabulated(t) = &self.kernel {
            let path = self.resolve(&t.table);
            if !path.is_file() {
                return Err(invalid("kernel.table", format!("file {} does not exist", path.display())));
            }
        }
        if let Some(t) = &self.tolerances {
            let all = [
                t.tau,
                t.projection,
                t.idempotency,
                t.route,
                t.cell_residual,
                t.cell_mean,
                t.fixed_point,
                t.g3_exactness,
            ];
            if all.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(invalid("tolerances", "values must be finite and nonnegative"));
            }
        }
        // Surfaces spec-level errors (bad radius, asymmetric μ, ...) as config errors.
        self.kernel_spec()?;
        self.mu_spec()?;
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec, CliError> {
        let d = self.dimension;
        let spec = match &self.kernel {
            KernelConfig::Box(k) => KernelSpec::box_kernel(d, k.radius, k.normalization),
            KernelConfig::Gaussian(k) => KernelSpec::gaussian(d, k.sigma, k.normalization),
            KernelConfig::Exponential(k) => {
                KernelSpec::exponential(d, k.rate, k.normalization).and_then(|spec| match k.truncation_radius {
                    Some(r) => spec.with_truncation_radius(r),
                    None => Ok(spec),
                })
            }
            KernelConfig::Tabulated(k) => RadialTable::from_csv_path(&self.resolve(&k.table))
                .and_then(|t| KernelSpec::tabulated(d, t, k.normalization, k.truncation_radius)),
        };
        spec.map_err(|e| invalid("kernel", e))
    }

    pub fn mu_spec(&self) -> Result<MuSpec, CliError> {
        let d = self.dimension;
        let spec = match &self.mu {
            MuConfig::Constant(m) => MuSpec::constant(d, m.value),
            MuConfig::CosineProduct(m) => MuSpec::cosine_product(d, m.base, m.alpha),
            MuConfig::Tabulated(m) => {
                let bounds = match (m.lower, m.upper) {
                    (Some(l), Some(u)) => Some((l, u)),
                    (None, None) => None,
                    _ => return Err(invalid("mu", "give both lower and upper or neither")),
                };
                MuSpec::tabulated(d, m.points, m.values.clone(), bounds)
            }
        };
        spec.map_err(|e| invalid("mu", e))
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        Grid::new(self.dimension, self.grid_n).map_err(|e| invalid("grid_n", e))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn epsilons(&self) -> Vec<f64> {
        self.epsilons.clone().unwrap_or_else(|| nonloc_homog::harness::default_epsilons(DEFAULT_EPSILON_COUNT))
    }

    pub fn threshold_count(&self) -> usize {
        self.threshold.as_ref().and_then(|t| t.count).unwrap_or(DEFAULT_THRESHOLD_COUNT)
    }

    pub fn threshold_directions(&self) -> Vec<Vec<f64>> {
        if let Some(dirs) = self.threshold.as_ref().and_then(|t| t.directions.clone()) {
            return dirs;
        }
        let d = self.dimension;
        let mut axis = vec![0.0; d];
        axis[0] = 1.0;
        let mut dirs = vec![axis];
        if d >= 2 {
            dirs.push(vec![1.0; d]);
        }
        dirs
    }

    pub fn xi_per_axis(&self) -> usize {
        self.xi_grid.as_ref().and_then(|x| x.per_axis).unwrap_or(DEFAULT_XI_PER_AXIS)
    }

    pub fn xi_refinement(&self) -> usize {
        self.xi_grid.as_ref().and_then(|x| x.refinement).unwrap_or(DEFAULT_XI_REFINEMENT)
    }

    pub fn contour_points(&self) -> usize {
        self.contour_points.unwrap_or(nonloc_homog::threshold::DEFAULT_CONTOUR_POINTS)
    }

    pub fn lipschitz_pairs(&self) -> usize {
        self.lipschitz_pairs.unwrap_or(DEFAULT_LIPSCHITZ_PAIRS)
    }

    pub fn tolerances(&self) -> Tolerances {
        self.tolerances.clone().unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "dimension": 1,
        "kernel": {"family": "box", "radius": 0.5, "normalization": 1.0},
        "mu": {"family": "cosine_product", "base": 1.0, "alpha": 0.5},
        "grid_n": 64
    }"#;

    #[test]
    fn parses_minimal_config() {
        let c = ExperimentConfig::from_json(MINIMAL, Path::new(".")).unwrap();
        assert_eq!(c.grid_n, 64);
        assert_eq!(c.epsilons().len(), 7);
        assert_eq!(c.threshold_directions(), vec![vec![1.0]]);
    }

    #[test]
    fn rejects_odd_grid_with_field_name() {
        let text = MINIMAL.replace("\"grid_n\": 64", "\"grid_n\": 63");
        let err = ExperimentConfig::from_json(&text, Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("grid_n"), "{err}");
    }

    #[test]
    fn reports_line_and_field_on_type_errors() {
        let text = MINIMAL.replace("\"radius\": 0.5", "\"radius\": \"wide\"");
        let err = ExperimentConfig::from_json(&text, Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("line 4") && err.contains("kernel.radius"), "{err}");
        let text = MINIMAL.replace("\"radius\": 0.5", "\"radius\": 0.5, \"width\": 1");
        let err = ExperimentConfig::from_json(&text, Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("width"), "{err}");
        let text = MINIMAL.replace("\"radius\": 0.5, ", "");
        let err = ExperimentConfig::from_json(&text, Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("radius"), "{err}");
    }

    #[test]
    fn rejects_repeated_epsilons() {
        let text = MINIMAL.replace("\"grid_n\": 64", "\"grid_n\": 64, \"epsilons\": [0.5, 0.5]");
        assert!(ExperimentConfig::from_json(&text, Path::new(".")).is_err());
    }
}
