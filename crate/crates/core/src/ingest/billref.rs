use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Chamber {
    House,
    Senate,
}

impl Chamber {
    fn prefix(self) -> &'static str {
        match self {
            Chamber::House => "H.R.",
            Chamber::Senate => "S.",
        }
    }
}

/// A House or Senate bill within one congress.
///
/// Renders canonically as `H.R.1421@115` / `S.744@113`; [`FromStr`] parses
/// exactly that form back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BillId {
    pub chamber: Chamber,
    pub number: u32,
    pub congress: u16,
}

impl BillId {
    pub fn new(chamber: Chamber, number: u32, congress: u16) -> Self {
        Self {
            chamber,
            number,
            congress,
        }
    }

    /// The short form used in report text and prompts, e.g. `H.R.1421`.
    pub fn label(&self) -> String {
        format!("{}{}", self.chamber.prefix(), self.number)
    }
}

impl fmt::Display for BillId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}@{}",
            self.chamber.prefix(),
            self.number,
            self.congress
        )
    }
}

impl FromStr for BillId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || {
            Error::invalid(format!(
                "malformed bill id `{s}` (expected e.g. H.R.1421@115)"
            ))
        };
        let (head, congress) = s.split_once('@').ok_or_else(bad)?;
        let (chamber, digits) = if let Some(rest) = head.strip_prefix("H.R.") {
            (Chamber::House, rest)
        } else if let Some(rest) = head.strip_prefix("S.") {
            (Chamber::Senate, rest)
        } else {
            return Err(bad());
        };
        if digits.is_empty()
            || !digits.bytes().all(|b| b.is_ascii_digit())
            || digits.starts_with('0')
        {
            return Err(bad());
        }
        let number: u32 = digits.parse().map_err(|_| bad())?;
        if congress.is_empty()
            || !congress.bytes().all(|b| b.is_ascii_digit())
            || congress.starts_with('0')
        {
            return Err(bad());
        }
        let congress: u16 = congress.parse().map_err(|_| bad())?;
        Ok(BillId::new(chamber, number, congress))
    }
}

impl Serialize for BillId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BillId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn bill_ref_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(?:(H)\.?[ \t]*R|(S))\.?[ \t]*(\d+)\b").expect("static regex"))
}

/// Congress in session during `year` (111th = 2009–2010).
pub fn congress_for_year(year: i32) -> u16 {
    ((year - 1789) / 2 + 1) as u16
}

/// Finds every House/Senate bill mention in `text`.
///
/// Accepts `H.R. 1421`, `HR1421`, `H R 1421`, `S. 568`, `S 744`, `S.744`.
/// Mentions are bound to `congress`, deduplicated, and returned in order of
/// first appearance.
pub fn extract_bill_refs(text: &str, congress: u16) -> Vec<BillId> {
    let mut out: Vec<BillId> = Vec::new();
    for cap in bill_ref_regex().captures_iter(text) {
        let chamber = if cap.get(1).is_some() {
            Chamber::House
        } else {
            Chamber::Senate
        };
        let Ok(number) = cap[3].parse::<u32>() else {
            continue;
        };
        if number == 0 {
            continue;
        }
        let id = BillId::new(chamber, number, congress);
        if !out.contains(&id) {
            out.push(id);
        }
    }
    out
}

/// Byte spans of bill mentions, for callers that need to mask them.
pub(crate) fn bill_ref_spans(text: &str, congress: u16) -> Vec<(usize, usize, BillId)> {
    bill_ref_regex()
        .captures_iter(text)
        .filter_map(|cap| {
            let m = cap.get(0)?;
            let chamber = if cap.get(1).is_some() {
                Chamber::House
            } else {
                Chamber::Senate
            };
            let number = cap[3].parse::<u32>().ok().filter(|n| *n > 0)?;
            Some((m.start(), m.end(), BillId::new(chamber, number, congress)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hr(n: u32) -> BillId {
        BillId::new(Chamber::House, n, 115)
    }
    fn s(n: u32) -> BillId {
        BillId::new(Chamber::Senate, n, 115)
    }

    #[test]
    fn table_examples() {
        assert_eq!(
            extract_bill_refs(
                "S. 568, H.R. 1421, Improving Access to Medicare Coverage Act",
                115
            ),
            vec![s(568), hr(1421)]
        );
        assert_eq!(
            extract_bill_refs(
                "defeat S. 23 and H.R. 1249, and pass funding only bill",
                115
            ),
            vec![s(23), hr(1249)]
        );
        assert!(extract_bill_refs("no bills here", 115).is_empty());
    }

    #[test]
    fn textual_variants() {
        let text = "H.R. 1421; HR1421, H R 9, S 744 and S.744 plus S. 600";
        assert_eq!(
            extract_bill_refs(text, 115),
            vec![hr(1421), hr(9), s(744), s(600)]
        );
        assert_eq!(
            extract_bill_refs(
                "Legislation watched includes: S 169, S 744, HR 2131, HR 459, HR 15 and S 600.",
                113
            ),
            vec![
                BillId::new(Chamber::Senate, 169, 113),
                BillId::new(Chamber::Senate, 744, 113),
                BillId::new(Chamber::House, 2131, 113),
                BillId::new(Chamber::House, 459, 113),
                BillId::new(Chamber::House, 15, 113),
                BillId::new(Chamber::Senate, 600, 113),
            ]
        );
    }

    #[test]
    fn ignores_embedded_letters() {
        assert!(extract_bill_refs("items 5 and US 12 and THR 4", 115).is_empty());
        assert!(extract_bill_refs("S. 0", 115).is_empty());
    }

    #[test]
    fn congress_from_year() {
        assert_eq!(congress_for_year(2009), 111);
        assert_eq!(congress_for_year(2010), 111);
        assert_eq!(congress_for_year(2017), 115);
        assert_eq!(congress_for_year(2022), 117);
    }

    #[test]
    fn canonical_rendering() {
        assert_eq!(hr(1421).to_string(), "H.R.1421@115");
        assert_eq!(s(744).label(), "S.744");
        assert!("H.R.01@115".parse::<BillId>().is_err());
        assert!("H.R.1@+115".parse::<BillId>().is_err());
        assert!("HR1@115".parse::<BillId>().is_err());
        let json = serde_json::to_string(&s(5)).unwrap();
        assert_eq!(json, "\"S.5@115\"");
        assert_eq!(serde_json::from_str::<BillId>(&json).unwrap(), s(5));
    }

    proptest! {
        #[test]
        fn render_parse_roundtrip(house in any::<bool>(), number in 1u32..100_000, congress in 1u16..1000) {
            let b = BillId::new(if house { Chamber::House } else { Chamber::Senate }, number, congress);
            prop_assert_eq!(b.to_string().parse::<BillId>().unwrap(), b);
            prop_assert_eq!(extract_bill_refs(&b.label(), congress), vec![b]);
        }
    }
}
