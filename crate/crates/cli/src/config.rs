use std::path::{Path, PathBuf};

use positionforge::analysis::DesignSpec;
use positionforge::gnn::GnnHyperParams;
use positionforge::hetgraph::GraphConfigId;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

/// Input and output locations, relative to the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub reports: PathBuf,
    pub bills: PathBuf,
    pub entities: PathBuf,
    /// Externally labelled positions merged during annotation.
    #[serde(default)]
    pub labels: Option<PathBuf>,
    /// Gold lines used to score the classifier.
    #[serde(default)]
    pub gold: Option<PathBuf>,
    #[serde(default)]
    pub firms: Option<PathBuf>,
    #[serde(default)]
    pub cfscores: Option<PathBuf>,
    #[serde(default = "default_cache")]
    pub cache: PathBuf,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_cache() -> PathBuf {
    PathBuf::from("cache")
}

fn default_output() -> PathBuf {
    PathBuf::from("output")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classifier {
    Rule,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSettings {
    pub model_name: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub max_in_flight: usize,
    pub requests_per_minute: u32,
    pub backoff_ms: u64,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            model_name: "gpt-4".into(),
            temperature: 0.0,
            max_retries: 3,
            max_in_flight: 4,
            requests_per_minute: 60,
            backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IrtSettings {
    pub min_row: usize,
    pub min_col: usize,
    pub nodes: usize,
    pub half_width: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for IrtSettings {
    fn default() -> Self {
        Self {
            min_row: 10,
            min_col: 10,
            nodes: 61,
            half_width: 6.0,
            max_iter: 500,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSettings {
    pub bootstrap: usize,
    pub p_hi: f64,
    pub p_lo: f64,
    pub design: DesignSpec,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            bootstrap: 1000,
            p_hi: 0.9,
            p_lo: 0.1,
            design: DesignSpec {
                controls: Vec::new(),
                year_effects: true,
                naics_effects: false,
            },
            max_iter: 2000,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub strict: bool,
    #[serde(default = "default_congress")]
    pub congress_range: (u16, u16),
    #[serde(default = "default_classifier")]
    pub classifier: Classifier,
    #[serde(default)]
    pub llm: LlmSettings,
    #[serde(default = "default_graph_config")]
    pub graph_config: GraphConfigId,
    #[serde(default)]
    pub gnn: GnnHyperParams,
    #[serde(default = "default_split")]
    pub split: (u32, u32, u32),
    #[serde(default = "default_threshold")]
    pub proxy_threshold: f64,
    #[serde(default)]
    pub irt: IrtSettings,
    #[serde(default)]
    pub analysis: AnalysisSettings,
}

fn default_congress() -> (u16, u16) {
    (111, 117)
}

fn default_classifier() -> Classifier {
    Classifier::Rule
}

fn default_graph_config() -> GraphConfigId {
    GraphConfigId::SELECTED
}

fn default_split() -> (u32, u32, u32) {
    (7, 1, 2)
}

fn default_threshold() -> f64 {
    0.9
}

/// A loaded config plus the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: PipelineConfig,
    pub base: PathBuf,
}

impl Loaded {
    pub fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn output(&self) -> PathBuf {
        self.path(&self.config.paths.output)
    }
}

/// Sets `dotted.key` in a JSON object, creating intermediate objects. The
/// value is parsed as JSON when possible and taken as a string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Validation(format!("override `{assignment}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(|| {
            CliError::Validation(format!(
                "override `{key}`: `{part}` is not inside an object"
            ))
        })?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Err(CliError::Validation(format!(
        "empty override key in `{assignment}`"
    )))
}

pub fn load(path: &Path, overrides: &[String]) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
    let mut value: Value = serde_json::from_str(&text).map_err(|e| {
        CliError::Validation(format!("config {} is not valid JSON: {e}", path.display()))
    })?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let config: PipelineConfig = serde_json::from_value(value)
        .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
    validate(&config)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let base = if base.as_os_str().is_empty() {
        PathBuf::from(".")
    } else {
        base
    };
    Ok(Loaded { config, base })
}

fn validate(c: &PipelineConfig) -> Result<(), CliError> {
    let mut bad = Vec::new();
    if let Err(e) = c.gnn.validate() {
        bad.push(e.to_string());
    }
    if !(c.proxy_threshold > 0.0 && c.proxy_threshold < 1.0) {
        bad.push(format!(
            "proxy_threshold {} not in (0, 1)",
            c.proxy_threshold
        ));
    }
    if c.congress_range.0 > c.congress_range.1 {
        bad.push("congress_range is empty".into());
    }
    if c.split.0 == 0 || c.split.0 + c.split.1 + c.split.2 == 0 {
        bad.push("split needs a positive training share".into());
    }
    if c.irt.nodes < 2 || c.irt.half_width <= 0.0 {
        bad.push("irt quadrature needs at least 2 nodes and a positive half width".into());
    }
    let a = &c.analysis;
    if !(0.0..=1.0).contains(&a.p_lo) || !(0.0..=1.0).contains(&a.p_hi) || a.p_lo >= a.p_hi {
        bad.push(format!(
            "analysis quantiles p_lo {} / p_hi {} invalid",
            a.p_lo, a.p_hi
        ));
    }
    if a.bootstrap == 0 {
        bad.push("analysis.bootstrap must be positive".into());
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(bad.join("; ")))
    }
}
