use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::billref::{congress_for_year, BillId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoveredPosition {
    pub lobbyist_id: String,
    pub legislator_id: String,
}

/// One quarterly LDA filing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawReport {
    pub report_id: String,
    pub year: i32,
    pub quarter: u8,
    pub registrant_id: String,
    pub client_id: String,
    pub issue_text: String,
    #[serde(default)]
    pub lobbyist_ids: Vec<String>,
    #[serde(default)]
    pub covered_positions: Vec<CoveredPosition>,
}

impl RawReport {
    pub fn congress(&self) -> u16 {
        congress_for_year(self.year)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Party {
    Democrat,
    Independent,
    Republican,
}

impl Party {
    pub fn as_str(self) -> &'static str {
        match self {
            Party::Democrat => "Democrat",
            Party::Independent => "Independent",
            Party::Republican => "Republican",
        }
    }
}

/// Legislative stage vocabulary used for action histories and timelines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "Referred to Committee")]
    ReferredToCommittee,
    #[serde(rename = "Committee Reported")]
    CommitteeReported,
    #[serde(rename = "Passed Senate/House")]
    PassedChamber,
    #[serde(rename = "Passed")]
    Passed,
    #[serde(rename = "Enacted")]
    Enacted,
    #[serde(rename = "Vetoed")]
    Vetoed,
    #[serde(rename = "Temporarily Rejected")]
    TemporarilyRejected,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::ReferredToCommittee,
        Stage::CommitteeReported,
        Stage::PassedChamber,
        Stage::Passed,
        Stage::Enacted,
        Stage::Vetoed,
        Stage::TemporarilyRejected,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::ReferredToCommittee => "Referred to Committee",
            Stage::CommitteeReported => "Committee Reported",
            Stage::PassedChamber => "Passed Senate/House",
            Stage::Passed => "Passed",
            Stage::Enacted => "Enacted",
            Stage::Vetoed => "Vetoed",
            Stage::TemporarilyRejected => "Temporarily Rejected",
        }
    }

    /// Stages that can end a bill's timeline.
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            Stage::Passed | Stage::Enacted | Stage::Vetoed | Stage::TemporarilyRejected
        )
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub date: NaiveDate,
    pub stage: Stage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bill {
    pub bill_id: BillId,
    #[serde(default)]
    pub short_title: String,
    #[serde(default)]
    pub official_title: String,
    #[serde(default)]
    pub summary: String,
    pub subject: String,
    pub sponsor_id: String,
    #[serde(default)]
    pub cosponsor_ids: Vec<String>,
    pub party: Party,
    pub final_state: String,
    #[serde(default)]
    pub action_history: Vec<Action>,
    #[serde(default)]
    pub related_bill_ids: Vec<BillId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityKind {
    InterestGroup,
    Legislator,
    Registrant,
    Lobbyist,
}

impl EntityKind {
    pub const ALL: [EntityKind; 4] = [
        EntityKind::InterestGroup,
        EntityKind::Legislator,
        EntityKind::Registrant,
        EntityKind::Lobbyist,
    ];

    /// Attribute keys an entity of this kind may carry.
    pub fn attribute_keys(self) -> &'static [&'static str] {
        match self {
            EntityKind::InterestGroup => &[
                "name",
                "description",
                "industry",
                "state",
                "government",
                "industry_type",
            ],
            EntityKind::Legislator => &["name", "term", "party", "state", "gender"],
            EntityKind::Registrant => &["name", "description", "state"],
            EntityKind::Lobbyist => &["name", "ethnicity", "party", "gender"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub id: String,
    pub kind: EntityKind,
    pub attributes: BTreeMap<String, String>,
}

impl EntityRecord {
    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attributes.get(key).map(String::as_str)
    }
}

/// Which file schema to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    Reports,
    Bills,
    Entities,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Records {
    Reports(Vec<RawReport>),
    Bills(Vec<Bill>),
    Entities(Vec<EntityRecord>),
}

/// Validation bounds applied while parsing.
#[derive(Debug, Clone, Copy)]
pub struct IngestOptions {
    pub min_congress: u16,
    pub max_congress: u16,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            min_congress: 111,
            max_congress: 117,
        }
    }
}

pub fn parse_records(path: &Path, kind: RecordKind, opts: &IngestOptions) -> Result<Records> {
    Ok(match kind {
        RecordKind::Reports => Records::Reports(parse_reports(path, opts)?),
        RecordKind::Bills => Records::Bills(parse_bills(path, opts)?),
        RecordKind::Entities => Records::Entities(parse_entities(path)?),
    })
}

type RowErrors = Vec<(usize, String)>;

fn rows_error(path: &Path, errors: RowErrors) -> Error {
    Error::Rows {
        path: path.to_path_buf(),
        errors,
    }
}

/// Reads a JSONL file, validating each row; blank lines are skipped.
fn read_jsonl<T, F>(path: &Path, validate: F) -> Result<Vec<(usize, T)>>
where
    T: for<'de> Deserialize<'de>,
    F: Fn(&T) -> std::result::Result<(), String>,
{
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    let mut errors = RowErrors::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<T>(&line) {
            Ok(v) => match validate(&v) {
                Ok(()) => rows.push((i + 1, v)),
                Err(msg) => errors.push((i + 1, msg)),
            },
            Err(e) => errors.push((i + 1, e.to_string())),
        }
    }
    if errors.is_empty() {
        Ok(rows)
    } else {
        Err(rows_error(path, errors))
    }
}

/// Collapses identical duplicates; conflicting duplicates are a hard error.
fn dedupe_by_id<T: PartialEq>(
    path: &Path,
    rows: Vec<(usize, T)>,
    id: impl Fn(&T) -> String,
) -> Result<Vec<T>> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut out: Vec<T> = Vec::with_capacity(rows.len());
    for (_, row) in rows {
        let key = id(&row);
        match seen.get(&key) {
            Some(&at) if out[at] == row => {}
            Some(_) => {
                return Err(Error::DuplicateId {
                    path: path.to_path_buf(),
                    id: key,
                })
            }
            None => {
                seen.insert(key, out.len());
                out.push(row);
            }
        }
    }
    Ok(out)
}

pub fn parse_reports(path: &Path, opts: &IngestOptions) -> Result<Vec<RawReport>> {
    let rows = read_jsonl::<RawReport, _>(path, |r| {
        if !(1..=4).contains(&r.quarter) {
            return Err("quarter out of range".into());
        }
        let congress = congress_for_year(r.year);
        if r.year < 1789 || congress < opts.min_congress || congress > opts.max_congress {
            return Err(format!("year {} outside congress range", r.year));
        }
        if r.report_id.is_empty() || r.client_id.is_empty() {
            return Err("empty report_id or client_id".into());
        }
        Ok(())
    })?;
    dedupe_by_id(path, rows, |r| r.report_id.clone())
}

pub fn parse_bills(path: &Path, opts: &IngestOptions) -> Result<Vec<Bill>> {
    let rows = read_jsonl::<Bill, _>(path, |b| {
        let c = b.bill_id.congress;
        if c < opts.min_congress || c > opts.max_congress {
            return Err(format!("congress {c} out of range"));
        }
        if b.action_history.windows(2).any(|w| w[1].date < w[0].date) {
            return Err("action_history dates decrease".into());
        }
        Ok(())
    })?;
    dedupe_by_id(path, rows, |b| b.bill_id.to_string())
}

const ENTITY_COLUMNS: [&str; 12] = [
    "id",
    "kind",
    "name",
    "description",
    "industry",
    "state",
    "government",
    "industry_type",
    "term",
    "party",
    "gender",
    "ethnicity",
];

/// Reads the entity CSV. Columns are `id,kind` followed by attribute
/// columns; empty cells mean "absent". A non-empty attribute outside the
/// kind's schema is a row error.
pub fn parse_entities(path: &Path) -> Result<Vec<EntityRecord>> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_path(path)?;
    let headers = reader.headers()?.clone();
    for h in headers.iter() {
        if !ENTITY_COLUMNS.contains(&h) {
            return Err(rows_error(path, vec![(1, format!("unknown column `{h}`"))]));
        }
    }
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(id_col), Some(kind_col)) = (col("id"), col("kind")) else {
        return Err(rows_error(path, vec![(1, "missing id/kind column".into())]));
    };
    let mut rows = Vec::new();
    let mut errors = RowErrors::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                errors.push((line, e.to_string()));
                continue;
            }
        };
        let kind = match &rec[kind_col] {
            "InterestGroup" => EntityKind::InterestGroup,
            "Legislator" => EntityKind::Legislator,
            "Registrant" => EntityKind::Registrant,
            "Lobbyist" => EntityKind::Lobbyist,
            other => {
                errors.push((line, format!("unknown entity kind `{other}`")));
                continue;
            }
        };
        let id = rec[id_col].trim().to_string();
        if id.is_empty() {
            errors.push((line, "empty id".into()));
            continue;
        }
        let mut attributes = BTreeMap::new();
        let mut bad = None;
        for (h, v) in headers.iter().zip(rec.iter()) {
            if h == "id" || h == "kind" || v.is_empty() {
                continue;
            }
            if !kind.attribute_keys().contains(&h) {
                bad = Some(format!("attribute `{h}` not allowed for {kind:?}"));
                break;
            }
            attributes.insert(h.to_string(), v.to_string());
        }
        match bad {
            Some(msg) => errors.push((line, msg)),
            None => rows.push((
                line,
                EntityRecord {
                    id,
                    kind,
                    attributes,
                },
            )),
        }
    }
    if !errors.is_empty() {
        return Err(rows_error(path, errors));
    }
    dedupe_by_id(path, rows, |e| e.id.clone())
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_entities(path: &Path, entities: &[EntityRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(ENTITY_COLUMNS)?;
    for e in entities {
        let kind = format!("{:?}", e.kind);
        let mut row: Vec<&str> = vec![&e.id, &kind];
        for c in &ENTITY_COLUMNS[2..] {
            row.push(e.attr(c).unwrap_or(""));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
