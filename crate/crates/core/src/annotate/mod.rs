//! Keyword filtering, position classification, validation metrics,
//! coarsening and conflict de-duplication.

mod llm;
mod metrics;
mod prompt;
mod rules;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{BillId, LobbyLine};

pub use llm::{parse_label, HttpTransport, LlmClient, LlmConfig, Transport, KEY_ENV, URL_ENV};
pub use metrics::{evaluate, ClassLabel, Metrics};
pub use prompt::{build_prompt, format_prompt};
pub use rules::{keyword_filter, rule_classify, KeywordClass, KEYWORDS, SYNONYMS};

/// Five-way position read from report text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PositionLabel {
    Support,
    Oppose,
    Amend,
    Monitor,
    Mention,
}

impl PositionLabel {
    pub const ALL: [PositionLabel; 5] = [
        PositionLabel::Support,
        PositionLabel::Oppose,
        PositionLabel::Amend,
        PositionLabel::Monitor,
        PositionLabel::Mention,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PositionLabel::Support => "Support",
            PositionLabel::Oppose => "Oppose",
            PositionLabel::Amend => "Amend",
            PositionLabel::Monitor => "Monitor",
            PositionLabel::Mention => "Mention",
        }
    }
}

/// Three-way label used for graph edges; Amend and Monitor merge into Engage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CoarseLabel {
    Support,
    Oppose,
    Engage,
}

impl CoarseLabel {
    pub const ALL: [CoarseLabel; 3] = [
        CoarseLabel::Support,
        CoarseLabel::Oppose,
        CoarseLabel::Engage,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CoarseLabel::Support => "Support",
            CoarseLabel::Oppose => "Oppose",
            CoarseLabel::Engage => "Engage",
        }
    }
}

macro_rules! label_text {
    ($t:ty) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                <$t>::ALL
                    .iter()
                    .copied()
                    .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
                    .ok_or_else(|| Error::invalid(format!("unknown label `{s}`")))
            }
        }
    };
}
label_text!(PositionLabel);
label_text!(CoarseLabel);

/// Support→Support, Oppose→Oppose, Amend/Monitor→Engage, Mention→none.
pub fn coarsen(label: PositionLabel) -> Option<CoarseLabel> {
    match label {
        PositionLabel::Support => Some(CoarseLabel::Support),
        PositionLabel::Oppose => Some(CoarseLabel::Oppose),
        PositionLabel::Amend | PositionLabel::Monitor => Some(CoarseLabel::Engage),
        PositionLabel::Mention => None,
    }
}

/// Where a label came from. Declaration order is ascending priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Source {
    Gnn,
    Rule,
    Llm,
    External,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Gnn => "GNN",
            Source::Rule => "RULE",
            Source::Llm => "LLM",
            Source::External => "EXTERNAL",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub client_id: String,
    pub bill_id: BillId,
    pub line: LobbyLine,
    pub label: PositionLabel,
    pub source: Source,
    pub raw_response: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledEdge {
    pub client_id: String,
    pub bill_id: BillId,
    pub label: CoarseLabel,
    pub source: Source,
    pub confidence: f64,
}

impl LabeledEdge {
    pub fn new(
        client_id: impl Into<String>,
        bill_id: BillId,
        label: CoarseLabel,
        source: Source,
        confidence: f64,
    ) -> Self {
        Self {
            client_id: client_id.into(),
            bill_id,
            label,
            source,
            confidence,
        }
    }
}

/// Collapses edges to one per (client, bill).
///
/// Agreeing groups keep the highest-priority source (EXTERNAL > LLM > RULE
/// > GNN) and the maximum confidence; groups with conflicting labels are
/// dropped entirely. Output is sorted by (client, bill).
pub fn dedupe_positions(edges: &[LabeledEdge]) -> Vec<LabeledEdge> {
    let mut groups: BTreeMap<(&str, BillId), Vec<&LabeledEdge>> = BTreeMap::new();
    for e in edges {
        groups
            .entry((e.client_id.as_str(), e.bill_id))
            .or_default()
            .push(e);
    }
    groups
        .into_values()
        .filter_map(|g| {
            let label = g[0].label;
            if g.iter().any(|e| e.label != label) {
                return None;
            }
            let source = g.iter().map(|e| e.source).max()?;
            let confidence = g
                .iter()
                .map(|e| e.confidence)
                .fold(f64::NEG_INFINITY, f64::max);
            Some(LabeledEdge::new(
                g[0].client_id.clone(),
                g[0].bill_id,
                label,
                source,
                confidence,
            ))
        })
        .collect()
}

pub fn write_edges(path: &Path, edges: &[LabeledEdge]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in edges {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `client_id,bill_id,label,source,confidence` rows.
pub fn read_edges(path: &Path) -> Result<Vec<LabeledEdge>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    let mut errors = Vec::new();
    for (i, row) in r.deserialize::<LabeledEdge>().enumerate() {
        match row {
            Ok(e) if (0.0..=1.0).contains(&e.confidence) => out.push(e),
            Ok(_) => errors.push((i + 2, "confidence outside [0, 1]".to_string())),
            Err(e) => errors.push((i + 2, e.to_string())),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(Error::Rows {
            path: path.to_path_buf(),
            errors,
        })
    }
}

/// A hand-labelled validation item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldRow {
    pub bill_id: BillId,
    pub text: String,
    pub label: PositionLabel,
}

pub fn read_gold(path: &Path) -> Result<Vec<GoldRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows: std::result::Result<Vec<GoldRow>, _> = r.deserialize().collect();
    Ok(rows?)
}
