//! Stage orchestration for the `positionforge` binary.
//!
//! Each stage reads its prerequisites' artifacts, writes into
//! `<output>/<stage>/` through a temporary directory and records a
//! `manifest.json` with the hashes of its inputs and outputs. A stage whose
//! recorded inputs match the current ones is skipped.

pub mod config;
pub mod error;
mod io;
mod stages;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub use config::{load, Loaded, PipelineConfig};
pub use error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Annotate,
    BuildGraph,
    TrainGnn,
    Label,
    Irt,
    Analyze,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Annotate,
        Stage::BuildGraph,
        Stage::TrainGnn,
        Stage::Label,
        Stage::Irt,
        Stage::Analyze,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Annotate => "annotate",
            Stage::BuildGraph => "build-graph",
            Stage::TrainGnn => "train-gnn",
            Stage::Label => "label",
            Stage::Irt => "irt",
            Stage::Analyze => "analyze",
        }
    }

    pub fn from_name(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.name() == s)
    }

    /// Stages whose artifacts this one reads.
    pub fn deps(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Annotate => &[Stage::Ingest],
            Stage::BuildGraph => &[Stage::Ingest],
            Stage::TrainGnn => &[Stage::BuildGraph, Stage::Annotate],
            Stage::Label => &[Stage::BuildGraph, Stage::Annotate, Stage::TrainGnn],
            Stage::Irt => &[Stage::Label],
            Stage::Analyze => &[Stage::Ingest, Stage::Annotate, Stage::Label, Stage::Irt],
        }
    }

    /// All transitive prerequisites in pipeline order.
    pub fn prerequisites(self) -> Vec<Stage> {
        let mut out = std::collections::BTreeSet::new();
        let mut todo = self.deps().to_vec();
        while let Some(s) = todo.pop() {
            if out.insert(s) {
                todo.extend_from_slice(s.deps());
            }
        }
        out.into_iter().collect()
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    /// Input label → SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    /// Output file name → SHA-256 of its bytes.
    pub outputs: BTreeMap<String, String>,
}

/// What happened when a stage was requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ran,
    UpToDate,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn stage_dir(loaded: &Loaded, stage: Stage) -> PathBuf {
    loaded.output().join(stage.name())
}

pub fn read_manifest(loaded: &Loaded, stage: Stage) -> Option<StageManifest> {
    let text = std::fs::read_to_string(stage_dir(loaded, stage).join(MANIFEST)).ok()?;
    serde_json::from_str(&text).ok()
}

/// The settings a stage depends on.
fn config_section(c: &PipelineConfig, stage: Stage) -> Value {
    match stage {
        Stage::Ingest => json!({ "congress_range": c.congress_range }),
        Stage::Annotate => match c.classifier {
            config::Classifier::Rule => json!({ "classifier": c.classifier }),
            config::Classifier::Llm => json!({ "classifier": c.classifier, "llm": c.llm }),
        },
        Stage::BuildGraph => json!({ "graph_config": c.graph_config, "strict": c.strict }),
        Stage::TrainGnn => json!({ "gnn": c.gnn, "split": c.split, "seed": c.seed }),
        Stage::Label => json!({ "proxy_threshold": c.proxy_threshold }),
        Stage::Irt => json!({ "irt": c.irt }),
        Stage::Analyze => json!({ "analysis": c.analysis, "seed": c.seed }),
    }
}

fn raw_inputs(c: &PipelineConfig, stage: Stage) -> Vec<(&'static str, Option<&PathBuf>)> {
    let p = &c.paths;
    match stage {
        Stage::Ingest => vec![
            ("reports", Some(&p.reports)),
            ("bills", Some(&p.bills)),
            ("entities", Some(&p.entities)),
        ],
        Stage::Annotate => vec![("labels", p.labels.as_ref()), ("gold", p.gold.as_ref())],
        Stage::Analyze => vec![
            ("firms", p.firms.as_ref()),
            ("cfscores", p.cfscores.as_ref()),
        ],
        _ => Vec::new(),
    }
}

/// Current config hash and input hashes of `stage`. Fails with a
/// prerequisite error when a direct dependency has no manifest.
pub fn fingerprint(
    loaded: &Loaded,
    stage: Stage,
) -> Result<(String, BTreeMap<String, String>), CliError> {
    let section = serde_json::to_vec(&config_section(&loaded.config, stage))?;
    let config_hash = hex::encode(Sha256::digest(&section));
    let mut inputs = BTreeMap::new();
    for (label, path) in raw_inputs(&loaded.config, stage) {
        if let Some(path) = path {
            let full = loaded.path(path);
            if !full.is_file() {
                return Err(CliError::Validation(format!(
                    "{label} file {} does not exist",
                    full.display()
                )));
            }
            inputs.insert(label.to_string(), sha256_file(&full)?);
        }
    }
    for dep in stage.deps() {
        let m = read_manifest(loaded, *dep).ok_or_else(|| missing(stage, *dep, loaded))?;
        for name in m.outputs.keys() {
            let path = stage_dir(loaded, *dep).join(name);
            let hash = sha256_file(&path).map_err(|_| missing(stage, *dep, loaded))?;
            inputs.insert(format!("{dep}/{name}"), hash);
        }
    }
    Ok((config_hash, inputs))
}

fn missing(stage: Stage, dep: Stage, loaded: &Loaded) -> CliError {
    CliError::Prerequisite(format!(
        "stage `{stage}` needs the output of `{dep}` in {}; run `positionforge {dep} --config <config>` first",
        stage_dir(loaded, dep).display()
    ))
}

/// Whether `stage`'s recorded manifest matches its current inputs and the
/// files on disk. `Ok(false)` means stale; missing manifests are errors.
fn is_current(loaded: &Loaded, stage: Stage, m: &StageManifest) -> Result<bool, CliError> {
    let (config_hash, inputs) = fingerprint(loaded, stage)?;
    if m.config_hash != config_hash || m.inputs != inputs || m.version != VERSION {
        return Ok(false);
    }
    let dir = stage_dir(loaded, stage);
    for (name, hash) in &m.outputs {
        match sha256_file(&dir.join(name)) {
            Ok(h) if &h == hash => {}
            _ => return Ok(false),
        }
    }
    Ok(true)
}

fn check_prerequisites(loaded: &Loaded, stage: Stage) -> Result<(), CliError> {
    for dep in stage.prerequisites() {
        let m = read_manifest(loaded, dep).ok_or_else(|| missing(stage, dep, loaded))?;
        if !is_current(loaded, dep, &m)? {
            return Err(CliError::Prerequisite(format!(
                "output of `{dep}` is stale (its inputs, settings or files changed); rerun `positionforge {dep} --config <config>` before `{stage}`"
            )));
        }
    }
    Ok(())
}

/// Runs one stage unless its outputs are already current.
pub fn run_stage(loaded: &Loaded, stage: Stage) -> Result<Outcome, CliError> {
    check_prerequisites(loaded, stage)?;
    if let Some(m) = read_manifest(loaded, stage) {
        if is_current(loaded, stage, &m)? {
            log::info!("{stage}: up to date");
            return Ok(Outcome::UpToDate);
        }
    }
    let (config_hash, inputs) = fingerprint(loaded, stage)?;
    let out = loaded.output();
    std::fs::create_dir_all(&out)?;
    let tmp = out.join(format!(".{}.tmp", stage.name()));
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp)?;
    }
    std::fs::create_dir_all(&tmp)?;
    let result = stages::run(loaded, stage, &tmp);
    if let Err(e) = result {
        let _ = std::fs::remove_dir_all(&tmp);
        return Err(e);
    }
    let mut outputs = BTreeMap::new();
    let mut names: Vec<String> = std::fs::read_dir(&tmp)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    for name in names {
        outputs.insert(name.clone(), sha256_file(&tmp.join(&name))?);
    }
    let manifest = StageManifest {
        stage: stage.name().into(),
        version: VERSION.into(),
        seed: loaded.config.seed,
        config_hash,
        inputs,
        outputs,
    };
    std::fs::write(
        tmp.join(MANIFEST),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    let dir = stage_dir(loaded, stage);
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    std::fs::rename(&tmp, &dir)?;
    log::info!("{stage}: wrote {}", dir.display());
    Ok(Outcome::Ran)
}

/// Runs every stage in order.
pub fn run_all(loaded: &Loaded) -> Result<Vec<(Stage, Outcome)>, CliError> {
    Stage::ALL
        .iter()
        .map(|s| run_stage(loaded, *s).map(|o| (*s, o)))
        .collect()
}

pub use stages::write_synthetic;
