//! Record parsing, bill-reference extraction, text segmentation and node
//! feature construction.
//!
//! File formats: reports and bills are JSONL (one object per line, issue
//! text may contain newlines); entities are CSV. See `docs/data-formats.md`.

mod billref;
mod features;
mod porter;
mod records;
mod text;

use serde::{Deserialize, Serialize};

pub(crate) use billref::bill_ref_spans;
pub use billref::{congress_for_year, extract_bill_refs, BillId, Chamber};
pub use features::{
    bill_attributes, bill_text, default_industries, encode_bill, encode_entity, encode_features,
    entity_text, CategoricalBlock, FeatureLayout, FeatureVector, KindLayout, LayoutSpec, NodeKind,
    BILL_SUBJECTS, FINAL_STATES, LOBBYIST_ETHNICITIES,
};
pub use porter::porter_stem;
pub use records::{
    parse_bills, parse_entities, parse_records, parse_reports, write_entities, write_jsonl, Action,
    Bill, CoveredPosition, EntityKind, EntityRecord, IngestOptions, Party, RawReport, RecordKind,
    Records, Stage,
};
pub use text::{build_text_features, tokenize, TextFeatures};

/// One non-empty line of a report's issue text with its bill mentions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LobbyLine {
    pub report_id: String,
    /// Position among the report's non-empty lines.
    pub index: usize,
    pub text: String,
    pub bill_refs: Vec<BillId>,
}

/// Splits issue text into trimmed, non-empty lines.
pub fn segment_issue_text(report_id: &str, issue_text: &str, congress: u16) -> Vec<LobbyLine> {
    issue_text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(index, text)| LobbyLine {
            report_id: report_id.to_string(),
            index,
            text: text.to_string(),
            bill_refs: extract_bill_refs(text, congress),
        })
        .collect()
}

pub fn segment_report(report: &RawReport) -> Vec<LobbyLine> {
    segment_issue_text(&report.report_id, &report.issue_text, report.congress())
}
