//! Run configuration: one JSON document fully describes a run.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use coalition_attrib::{FeatureKind, GraphSpec, Law};

/// Problems with a configuration, tagged with where they were found.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    /// Not valid JSON.
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    /// Valid JSON that does not describe a usable run. `field` is a dotted path.
    Field {
        field: String,
        message: String,
    },
    Io {
        path: PathBuf,
        message: String,
    },
}

impl ConfigError {
    pub fn field(field: impl Into<String>, message: impl fmt::Display) -> Self {
        ConfigError::Field {
            field: field.into(),
            message: message.to_string(),
        }
    }

    /// Dotted field path, when the error is tied to one.
    pub fn path(&self) -> Option<&str> {
        match self {
            ConfigError::Field { field, .. } => Some(field),
            _ => None,
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse {
                line,
                column,
                message,
            } => {
                write!(f, "parse error at line {line}, column {column}: {message}")
            }
            ConfigError::Field { field, message } => write!(f, "{field}: {message}"),
            ConfigError::Io { path, message } => write!(f, "{}: {message}", path.display()),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
    Text,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "text" => Ok(Format::Text),
            other => Err(format!("unknown format `{other}` (json, csv or text)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    Inline(String),
    File { file: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureDecl {
    pub name: String,
    #[serde(default = "continuous")]
    pub kind: KindDecl,
    #[serde(default)]
    pub levels: Vec<String>,
}

fn continuous() -> KindDecl {
    KindDecl::Continuous
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindDecl {
    Continuous,
    Binary,
    Categorical,
}

impl FeatureDecl {
    pub fn kind(&self) -> Result<FeatureKind, String> {
        match (self.kind, self.levels.is_empty()) {
            (KindDecl::Continuous, true) => Ok(FeatureKind::Continuous),
            (KindDecl::Binary, true) => Ok(FeatureKind::Binary),
            (KindDecl::Categorical, false) => Ok(FeatureKind::Categorical {
                levels: self.levels.clone(),
            }),
            (KindDecl::Categorical, true) => Err("categorical features need levels".into()),
            (_, false) => Err("levels are only allowed on categorical features".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    /// Detect `{0,1}` columns as binary when no schema is declared.
    #[serde(default = "yes")]
    pub infer_schema: bool,
    #[serde(default)]
    pub weight_column: Option<String>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawDecl {
    pub name: String,
    pub law: Law,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParametricSource {
    pub laws: Vec<LawDecl>,
    /// Joint covariance for all-normal specs, in `laws` order.
    #[serde(default)]
    pub covariance: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataDecl {
    #[serde(default)]
    pub csv: Option<CsvSource>,
    #[serde(default)]
    pub parametric: Option<ParametricSource>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeDecl {
    #[default]
    Marginal,
    Conditional,
    Asymmetric,
    Causal,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum GraphDecl {
    Inline(GraphSpec),
    File(PathBuf),
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceDecl {
    #[serde(default)]
    pub mode: ModeDecl,
    #[serde(default)]
    pub bandwidth: Option<f64>,
    #[serde(default)]
    pub neighbors: Option<usize>,
    #[serde(default)]
    pub graph: Option<GraphDecl>,
}

/// One observation: values by feature name, or a row of the CSV data.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDecl {
    #[serde(default)]
    pub values: Option<serde_json::Map<String, serde_json::Value>>,
    #[serde(default)]
    pub row: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorDecl {
    #[serde(default = "exact_kind")]
    pub kind: EstimatorKind,
    #[serde(default = "default_order")]
    pub quadrature_order: usize,
    #[serde(default = "default_max_points")]
    pub max_points: usize,
    /// Lift the feature-count caps of exact enumeration.
    #[serde(default)]
    pub force: bool,
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default = "default_draws")]
    pub reference_draws: usize,
}

fn exact_kind() -> EstimatorKind {
    EstimatorKind::Exact
}
fn default_order() -> usize {
    32
}
fn default_max_points() -> usize {
    4_000_000
}
fn default_permutations() -> usize {
    2000
}
fn default_draws() -> usize {
    10
}

impl Default for EstimatorDecl {
    fn default() -> Self {
        Self {
            kind: EstimatorKind::Exact,
            quadrature_order: default_order(),
            max_points: default_max_points(),
            force: false,
            permutations: default_permutations(),
            reference_draws: default_draws(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltasDecl {
    #[serde(default)]
    pub feature: Option<String>,
    /// Cancellation threshold; `0.05 * max |v|` when unset.
    #[serde(default)]
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FairnessDecl {
    #[serde(default)]
    pub sensitive: Option<String>,
    #[serde(default)]
    pub max_instances: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "tol_fairness")]
    pub fairness: f64,
    #[serde(default = "tol_gap")]
    pub gap: f64,
    #[serde(default = "tol_property")]
    pub property: f64,
    /// `|phi_j|` at or below this counts as zero for the cancellation flag.
    #[serde(default = "tol_zero")]
    pub zero: f64,
}

fn tol_fairness() -> f64 {
    1e-6
}
fn tol_gap() -> f64 {
    1e-6
}
fn tol_property() -> f64 {
    1e-9
}
fn tol_zero() -> f64 {
    1e-6
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            fairness: tol_fairness(),
            gap: tol_gap(),
            property: tol_property(),
            zero: tol_zero(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputDecl {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

/// Parsed configuration file. Relative paths are resolved against `base_dir`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Declared feature schema; implied by the laws or the CSV header when absent.
    #[serde(default)]
    pub features: Option<Vec<FeatureDecl>>,
    pub model: ModelSource,
    pub data: DataDecl,
    #[serde(default)]
    pub reference: ReferenceDecl,
    #[serde(default)]
    pub instance: Option<InstanceDecl>,
    /// Extra observations for the screen, the mode comparison and validation.
    #[serde(default)]
    pub instances: Option<Vec<InstanceDecl>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub estimator: EstimatorDecl,
    #[serde(default)]
    pub deltas: DeltasDecl,
    #[serde(default)]
    pub fairness: FairnessDecl,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputDecl,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if inner.is_data() {
                ConfigError::Field {
                    field: if path == "." { String::new() } else { path },
                    message: inner.to_string(),
                }
            } else {
                ConfigError::Parse {
                    line: inner.line(),
                    column: inner.column(),
                    message: inner.to_string(),
                }
            }
        })?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Checks that do not need to load data.
    fn validate(&self) -> Result<(), ConfigError> {
        match (&self.data.csv, &self.data.parametric) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::field(
                    "data",
                    "exactly one data source is allowed, got both `csv` and `parametric`",
                ))
            }
            (None, None) => {
                return Err(ConfigError::field(
                    "data",
                    "one data source is required: `csv` or `parametric`",
                ))
            }
            _ => {}
        }
        if let Some(p) = &self.data.parametric {
            if p.laws.is_empty() {
                return Err(ConfigError::field(
                    "data.parametric.laws",
                    "at least one law is required",
                ));
            }
        }
        if matches!(self.reference.mode, ModeDecl::Asymmetric | ModeDecl::Causal)
            && self.reference.graph.is_none()
        {
            return Err(ConfigError::field(
                "reference.graph",
                "a causal graph is required for asymmetric and causal modes",
            ));
        }
        if let Some(h) = self.reference.bandwidth {
            if !(h.is_finite() && h > 0.0) {
                return Err(ConfigError::field("reference.bandwidth", "must be > 0"));
            }
        }
        if self.reference.neighbors == Some(0) {
            return Err(ConfigError::field("reference.neighbors", "must be >= 1"));
        }
        if let Some(inst) = &self.instance {
            inst.validate("instance")?;
        }
        if let Some(list) = &self.instances {
            for (k, inst) in list.iter().enumerate() {
                inst.validate(&format!("instances[{k}]"))?;
            }
        }
        let e = &self.estimator;
        if e.quadrature_order == 0 {
            return Err(ConfigError::field(
                "estimator.quadrature_order",
                "must be >= 1",
            ));
        }
        if e.permutations == 0 {
            return Err(ConfigError::field("estimator.permutations", "must be >= 1"));
        }
        if e.reference_draws == 0 {
            return Err(ConfigError::field(
                "estimator.reference_draws",
                "must be >= 1",
            ));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("fairness", t.fairness),
            ("gap", t.gap),
            ("property", t.property),
            ("zero", t.zero),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ConfigError::field(
                    format!("tolerances.{name}"),
                    "must be >= 0",
                ));
            }
        }
        if let Some(tau) = self.deltas.tau {
            if !(tau.is_finite() && tau >= 0.0) {
                return Err(ConfigError::field("deltas.tau", "must be >= 0"));
            }
        }
        if self.fairness.max_instances == Some(0) {
            return Err(ConfigError::field("fairness.max_instances", "must be >= 1"));
        }
        Ok(())
    }
}

impl InstanceDecl {
    fn validate(&self, field: &str) -> Result<(), ConfigError> {
        match (&self.values, &self.row) {
            (Some(_), Some(_)) => Err(ConfigError::field(
                field,
                "give either `values` or `row`, not both",
            )),
            (None, None) => Err(ConfigError::field(field, "`values` or `row` is required")),
            _ => Ok(()),
        }
    }
}

/// Reads and validates a configuration file.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    RunConfig::parse(&text, base)
}
