use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::records::{Bill, EntityKind, EntityRecord};
use crate::error::{Error, Result};

/// Node types of the lobbying/legislative graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    InterestGroup,
    Bill,
    Legislator,
    Registrant,
    Lobbyist,
}

impl NodeKind {
    pub const ALL: [NodeKind; 5] = [
        NodeKind::InterestGroup,
        NodeKind::Bill,
        NodeKind::Legislator,
        NodeKind::Registrant,
        NodeKind::Lobbyist,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::InterestGroup => "interest_group",
            NodeKind::Bill => "bill",
            NodeKind::Legislator => "legislator",
            NodeKind::Registrant => "registrant",
            NodeKind::Lobbyist => "lobbyist",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<EntityKind> for NodeKind {
    fn from(k: EntityKind) -> Self {
        match k {
            EntityKind::InterestGroup => NodeKind::InterestGroup,
            EntityKind::Legislator => NodeKind::Legislator,
            EntityKind::Registrant => NodeKind::Registrant,
            EntityKind::Lobbyist => NodeKind::Lobbyist,
        }
    }
}

/// One one-hot block: attribute key and its ordered vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalBlock {
    pub attribute: String,
    pub values: Vec<String>,
}

impl CategoricalBlock {
    fn new(attribute: &str, values: &[&str]) -> Self {
        Self {
            attribute: attribute.to_string(),
            values: values.iter().map(|v| v.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindLayout {
    pub blocks: Vec<CategoricalBlock>,
    /// Whether a tf-idf text block follows the categorical blocks.
    pub text: bool,
}

/// Feature schema for every node kind. Configuration-driven; the default
/// matches the published block widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutSpec {
    pub text_dim: usize,
    pub kinds: BTreeMap<NodeKind, KindLayout>,
}

/// Resolved column layout: `(feature_name, offset, width)` in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub entries: Vec<(String, usize, usize)>,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: Arc<FeatureLayout>,
}

const US_STATES: [&str; 50] = [
    "AL", "AK", "AZ", "AR", "CA", "CO", "CT", "DE", "FL", "GA", "HI", "ID", "IL", "IN", "IA", "KS",
    "KY", "LA", "ME", "MD", "MA", "MI", "MN", "MS", "MO", "MT", "NE", "NV", "NH", "NJ", "NM", "NY",
    "NC", "ND", "OH", "OK", "OR", "PA", "RI", "SC", "SD", "TN", "TX", "UT", "VT", "VA", "WA", "WV",
    "WI", "WY",
];
const TERRITORIES: [&str; 9] = ["DC", "PR", "GU", "VI", "AS", "MP", "FM", "MH", "PW"];

fn states(extra: usize) -> Vec<String> {
    US_STATES
        .iter()
        .chain(TERRITORIES.iter().take(extra))
        .map(|s| s.to_string())
        .collect()
}

pub const BILL_SUBJECTS: [&str; 34] = [
    "Agriculture and food",
    "Animals",
    "Armed forces and national security",
    "Arts, culture, religion",
    "Civil rights and liberties, minority issues",
    "Commerce",
    "Congress",
    "Crime and law enforcement",
    "Economics and public finance",
    "Education",
    "Emergency management",
    "Energy",
    "Environmental protection",
    "Families",
    "Finance and financial sector",
    "Foreign trade and international finance",
    "Geographic areas, entities, and organizations",
    "Government operations and politics",
    "Health",
    "Housing and community development",
    "Immigration",
    "International affairs",
    "Labor and employment",
    "Law",
    "Native Americans",
    "Private legislation",
    "Public lands and natural resources",
    "Science, technology, communications",
    "Social sciences and history",
    "Social welfare",
    "Sports and recreation",
    "Taxation",
    "Transportation and public works",
    "Water resources development",
];

pub const FINAL_STATES: [&str; 9] = [
    "INTRODUCED",
    "REFERRED",
    "REPORTED",
    "PASS_OVER",
    "PASSED:BILL",
    "ENACTED:SIGNED",
    "VETOED",
    "PROV_KILL",
    "FAIL",
];

pub const LOBBYIST_ETHNICITIES: [&str; 13] = [
    "Asian/GreaterEastAsian/EastAsian",
    "Asian/GreaterEastAsian/Japanese",
    "Asian/IndianSubContinent",
    "GreaterAfrican/Africans",
    "GreaterAfrican/Muslim",
    "GreaterEuropean/British",
    "GreaterEuropean/EastEuropean",
    "GreaterEuropean/Jewish",
    "GreaterEuropean/WestEuropean/French",
    "GreaterEuropean/WestEuropean/Germanic",
    "GreaterEuropean/WestEuropean/Hispanic",
    "GreaterEuropean/WestEuropean/Italian",
    "GreaterEuropean/WestEuropean/Nordic",
];

const PARTIES: [&str; 3] = ["Democrat", "Independent", "Republican"];
const BOOLS: [&str; 2] = ["True", "False"];

/// Industry codes `IND001`..`IND426`; real deployments supply named categories.
pub fn default_industries() -> Vec<String> {
    (1..=426).map(|i| format!("IND{i:03}")).collect()
}

impl Default for LayoutSpec {
    fn default() -> Self {
        let mut kinds = BTreeMap::new();
        kinds.insert(
            NodeKind::InterestGroup,
            KindLayout {
                blocks: vec![
                    CategoricalBlock {
                        attribute: "industry".into(),
                        values: default_industries(),
                    },
                    CategoricalBlock {
                        attribute: "state".into(),
                        values: states(9),
                    },
                    CategoricalBlock::new("government", &BOOLS),
                    CategoricalBlock::new(
                        "industry_type",
                        &["org", "com", "edu", "net", "gov", "others"],
                    ),
                ],
                text: true,
            },
        );
        kinds.insert(
            NodeKind::Bill,
            KindLayout {
                blocks: vec![
                    CategoricalBlock::new("subject", &BILL_SUBJECTS),
                    CategoricalBlock::new("final_state", &FINAL_STATES),
                    CategoricalBlock::new("party", &PARTIES),
                    CategoricalBlock::new("bipartisan", &BOOLS),
                    CategoricalBlock::new("same_state", &BOOLS),
                ],
                text: true,
            },
        );
        kinds.insert(
            NodeKind::Legislator,
            KindLayout {
                blocks: vec![
                    CategoricalBlock::new("term", &["Representative", "Senate"]),
                    CategoricalBlock::new("party", &PARTIES),
                    CategoricalBlock {
                        attribute: "state".into(),
                        values: states(6),
                    },
                    CategoricalBlock::new("gender", &["Female", "Male"]),
                ],
                text: false,
            },
        );
        kinds.insert(
            NodeKind::Registrant,
            KindLayout {
                blocks: vec![CategoricalBlock {
                    attribute: "state".into(),
                    values: states(4),
                }],
                text: true,
            },
        );
        kinds.insert(
            NodeKind::Lobbyist,
            KindLayout {
                blocks: vec![
                    CategoricalBlock::new("ethnicity", &LOBBYIST_ETHNICITIES),
                    CategoricalBlock::new("party", &PARTIES),
                    CategoricalBlock::new(
                        "gender",
                        &[
                            "Female",
                            "Male",
                            "Mostly Female",
                            "Mostly Male",
                            "Andy",
                            "Unknown",
                        ],
                    ),
                ],
                text: false,
            },
        );
        LayoutSpec {
            text_dim: 64,
            kinds,
        }
    }
}

impl LayoutSpec {
    pub fn kind(&self, kind: NodeKind) -> Result<&KindLayout> {
        self.kinds
            .get(&kind)
            .ok_or_else(|| Error::invalid(format!("layout has no entry for {kind}")))
    }

    pub fn layout(&self, kind: NodeKind) -> Result<FeatureLayout> {
        let k = self.kind(kind)?;
        let mut entries = Vec::new();
        let mut offset = 0;
        for b in &k.blocks {
            entries.push((b.attribute.clone(), offset, b.values.len()));
            offset += b.values.len();
        }
        if k.text {
            entries.push(("text".to_string(), offset, self.text_dim));
            offset += self.text_dim;
        }
        Ok(FeatureLayout {
            entries,
            width: offset,
        })
    }

    pub fn width(&self, kind: NodeKind) -> Result<usize> {
        Ok(self.layout(kind)?.width)
    }
}

/// One-hot encodes `attrs` under `kind`'s layout and appends `text`.
///
/// Unknown or missing categories give an all-zero block unless `strict`,
/// in which case an out-of-vocabulary value is an error naming the
/// attribute. A missing text vector gives a zero text block.
pub fn encode_features(
    kind: NodeKind,
    attrs: &BTreeMap<String, String>,
    text: Option<&[f64]>,
    spec: &LayoutSpec,
    strict: bool,
) -> Result<FeatureVector> {
    let k = spec.kind(kind)?;
    let layout = Arc::new(spec.layout(kind)?);
    let mut values = vec![0.0; layout.width];
    let mut offset = 0;
    for block in &k.blocks {
        if let Some(v) = attrs.get(&block.attribute) {
            match block.values.iter().position(|x| x == v) {
                Some(i) => values[offset + i] = 1.0,
                None if strict => {
                    return Err(Error::UnknownCategory {
                        attribute: block.attribute.clone(),
                        value: v.clone(),
                    })
                }
                None => {}
            }
        }
        offset += block.values.len();
    }
    if k.text {
        if let Some(t) = text {
            if t.len() != spec.text_dim {
                return Err(Error::invalid(format!(
                    "text vector width {} != {}",
                    t.len(),
                    spec.text_dim
                )));
            }
            values[offset..offset + t.len()].copy_from_slice(t);
        }
    }
    Ok(FeatureVector { values, layout })
}

pub fn encode_entity(
    e: &EntityRecord,
    text: Option<&[f64]>,
    spec: &LayoutSpec,
    strict: bool,
) -> Result<FeatureVector> {
    let mut attrs = e.attributes.clone();
    attrs.remove("name");
    attrs.remove("description");
    encode_features(e.kind.into(), &attrs, text, spec, strict)
}

/// Categorical attributes of a bill, deriving `bipartisan` (some cosponsor
/// from another party) and `same_state` (every cosponsor from the sponsor's
/// state) from legislator records where available.
pub fn bill_attributes(
    bill: &Bill,
    legislators: &HashMap<String, &EntityRecord>,
) -> BTreeMap<String, String> {
    let mut a = BTreeMap::new();
    a.insert("subject".to_string(), bill.subject.clone());
    a.insert("final_state".to_string(), bill.final_state.clone());
    a.insert("party".to_string(), bill.party.as_str().to_string());
    let co: Vec<&EntityRecord> = bill
        .cosponsor_ids
        .iter()
        .filter_map(|id| legislators.get(id).copied())
        .collect();
    if co.len() == bill.cosponsor_ids.len() {
        let bipartisan = co
            .iter()
            .any(|l| l.attr("party").is_some_and(|p| p != bill.party.as_str()));
        a.insert("bipartisan".into(), bool_str(bipartisan));
        if let Some(state) = legislators
            .get(&bill.sponsor_id)
            .and_then(|l| l.attr("state"))
        {
            let same = co.iter().all(|l| l.attr("state") == Some(state));
            a.insert("same_state".into(), bool_str(same));
        }
    }
    a
}

fn bool_str(b: bool) -> String {
    if b { "True" } else { "False" }.to_string()
}

pub fn encode_bill(
    bill: &Bill,
    legislators: &HashMap<String, &EntityRecord>,
    text: Option<&[f64]>,
    spec: &LayoutSpec,
    strict: bool,
) -> Result<FeatureVector> {
    encode_features(
        NodeKind::Bill,
        &bill_attributes(bill, legislators),
        text,
        spec,
        strict,
    )
}

/// The text a node contributes to its kind's tf-idf corpus.
pub fn entity_text(e: &EntityRecord) -> String {
    [e.attr("name"), e.attr("description")]
        .into_iter()
        .flatten()
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn bill_text(b: &Bill) -> String {
    [
        b.short_title.as_str(),
        b.official_title.as_str(),
        b.summary.as_str(),
    ]
    .into_iter()
    .filter(|s| !s.is_empty())
    .collect::<Vec<_>>()
    .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attrs(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn published_widths() {
        let spec = LayoutSpec::default();
        assert_eq!(spec.width(NodeKind::InterestGroup).unwrap(), 557);
        assert_eq!(spec.width(NodeKind::Bill).unwrap(), 114);
        assert_eq!(spec.width(NodeKind::Legislator).unwrap(), 63);
        assert_eq!(spec.width(NodeKind::Registrant).unwrap(), 118);
        assert_eq!(spec.width(NodeKind::Lobbyist).unwrap(), 22);
    }

    #[test]
    fn legislator_has_four_ones() {
        let spec = LayoutSpec::default();
        let a = attrs(&[
            ("term", "Senate"),
            ("party", "Republican"),
            ("state", "AK"),
            ("gender", "Male"),
        ]);
        let v = encode_features(NodeKind::Legislator, &a, None, &spec, true).unwrap();
        assert_eq!(v.values.len(), 63);
        assert_eq!(v.values.iter().filter(|x| **x == 1.0).count(), 4);
        assert_eq!(v.values.iter().sum::<f64>(), 4.0);
        // Senate is the second term value; Republican the third party value
        assert_eq!(v.values[1], 1.0);
        assert_eq!(v.values[2 + 2], 1.0);
    }

    #[test]
    fn unknown_categories_zero_unless_strict() {
        let spec = LayoutSpec::default();
        let a = attrs(&[("term", "Mayor"), ("party", "Whig")]);
        let v = encode_features(NodeKind::Legislator, &a, None, &spec, false).unwrap();
        assert!(v.values.iter().all(|x| *x == 0.0));
        match encode_features(NodeKind::Legislator, &a, None, &spec, true) {
            Err(Error::UnknownCategory { attribute, .. }) => assert_eq!(attribute, "term"),
            other => panic!("expected UnknownCategory, got {other:?}"),
        }
    }

    #[test]
    fn interest_group_with_text() {
        let spec = LayoutSpec::default();
        let a = attrs(&[
            ("industry", "IND007"),
            ("state", "PW"),
            ("government", "False"),
            ("industry_type", "org"),
        ]);
        let text: Vec<f64> = (0..64).map(|i| i as f64 / 100.0).collect();
        let v = encode_features(NodeKind::InterestGroup, &a, Some(&text), &spec, true).unwrap();
        assert_eq!(v.values.len(), 557);
        assert_eq!(&v.values[493..], text.as_slice());
        assert_eq!(v.values[..493].iter().sum::<f64>(), 4.0);
        assert_eq!(
            v.layout.entries.last().unwrap(),
            &("text".to_string(), 493, 64)
        );
    }
}
