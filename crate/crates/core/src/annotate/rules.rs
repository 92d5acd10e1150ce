//! Offline keyword classifier standing in for the LLM backend.
//!
//! | class   | keywords (word-prefix match)                                   |
//! |---------|----------------------------------------------------------------|
//! | Oppose  | oppose, against, defeat, reject, repeal                        |
//! | Amend   | amend, modify, delete, *change*                                |
//! | Monitor | monitor, track, watch                                          |
//! | Support | support, advocate, favor, endorse, engage, encourage, yes,     |
//! |         | passage, promote, attempt, influence, introduce, propose, draft|
//!
//! `change` is a synonym outside the filter keyword list. Precedence runs
//! top to bottom. Only the sentence(s) mentioning the target bill are
//! read; a keyword preceded within three tokens by `not` or `no` is
//! ignored, and a bill with no usable keyword in its sentence is a Mention.

use std::sync::OnceLock;

use regex::Regex;

use super::PositionLabel;
use crate::ingest::{bill_ref_spans, BillId, LobbyLine};

/// The 25 position keywords used by the line filter.
pub const KEYWORDS: [&str; 25] = [
    "support",
    "advocate",
    "favor",
    "endorse",
    "engage",
    "encourage",
    "yes",
    "passage",
    "promote",
    "attempt",
    "influence",
    "introduce",
    "propose",
    "draft",
    "oppose",
    "against",
    "defeat",
    "reject",
    "repeal",
    "amend",
    "modify",
    "delete",
    "monitor",
    "track",
    "watch",
];

/// Extra classifier-only keywords, with their class.
pub const SYNONYMS: [(&str, KeywordClass); 1] = [("change", KeywordClass::Amend)];

const NEGATION_WINDOW: usize = 3;

/// Keyword classes in precedence order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum KeywordClass {
    Oppose,
    Amend,
    Monitor,
    Support,
}

impl KeywordClass {
    fn label(self) -> PositionLabel {
        match self {
            KeywordClass::Oppose => PositionLabel::Oppose,
            KeywordClass::Amend => PositionLabel::Amend,
            KeywordClass::Monitor => PositionLabel::Monitor,
            KeywordClass::Support => PositionLabel::Support,
        }
    }
}

fn keyword_class(keyword: &str) -> KeywordClass {
    match keyword {
        "oppose" | "against" | "defeat" | "reject" | "repeal" => KeywordClass::Oppose,
        "amend" | "modify" | "delete" | "change" => KeywordClass::Amend,
        "monitor" | "track" | "watch" => KeywordClass::Monitor,
        _ => KeywordClass::Support,
    }
}

fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphabetic())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

fn matching_keyword(word: &str) -> Option<&'static str> {
    KEYWORDS
        .iter()
        .copied()
        .chain(SYNONYMS.iter().map(|(k, _)| *k))
        .find(|k| word.starts_with(k))
}

/// True iff the line mentions a bill and some word starts with a keyword.
pub fn keyword_filter(line: &LobbyLine) -> bool {
    !line.bill_refs.is_empty()
        && words(&line.text).any(|w| KEYWORDS.iter().any(|k| w.starts_with(k)))
}

fn sentence_split() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[.;!?](?:\s+|$)").expect("static regex"))
}

/// Sentences of `text` that mention `bill`, with bill mentions masked so
/// their periods do not end sentences.
fn target_sentences(text: &str, bill: &BillId) -> Vec<String> {
    let spans = bill_ref_spans(text, bill.congress);
    let mut masked = String::with_capacity(text.len());
    let mut last = 0;
    for (start, end, id) in &spans {
        masked.push_str(&text[last..*start]);
        masked.push_str(if id == bill {
            " \u{1}TARGET\u{1} "
        } else {
            " \u{1}BILL\u{1} "
        });
        last = *end;
    }
    masked.push_str(&text[last..]);
    sentence_split()
        .split(&masked)
        .filter(|s| s.contains("\u{1}TARGET\u{1}"))
        .map(str::to_string)
        .collect()
}

pub fn rule_classify(line: &LobbyLine, bill: &BillId) -> PositionLabel {
    let mut best: Option<KeywordClass> = None;
    for sentence in target_sentences(&line.text, bill) {
        let toks: Vec<String> = words(&sentence).collect();
        for (i, w) in toks.iter().enumerate() {
            let Some(k) = matching_keyword(w) else {
                continue;
            };
            let negated = toks[i.saturating_sub(NEGATION_WINDOW)..i]
                .iter()
                .any(|t| t == "not" || t == "no");
            if negated {
                continue;
            }
            let class = keyword_class(k);
            best = Some(best.map_or(class, |b| b.min(class)));
        }
    }
    best.map_or(PositionLabel::Mention, KeywordClass::label)
}
