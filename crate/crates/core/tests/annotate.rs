use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use positionforge::annotate::{
    build_prompt, coarsen, dedupe_positions, evaluate, keyword_filter, rule_classify, CoarseLabel,
    LabeledEdge, LlmClient, LlmConfig, PositionLabel, Source, Transport,
};
use positionforge::ingest::{segment_issue_text, Bill, BillId, Party};
use positionforge::Error;
use proptest::prelude::*;
use serde_json::{json, Value};

use PositionLabel::{Amend, Mention, Monitor, Oppose, Support};

struct GoldFixture {
    bill: Bill,
    text: String,
    label: PositionLabel,
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn gold_rows() -> Vec<GoldFixture> {
    let mut r = csv::Reader::from_path(fixtures().join("gold_rows.csv")).unwrap();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            let bill_id: BillId = rec[0].parse().unwrap();
            GoldFixture {
                bill: Bill {
                    bill_id,
                    short_title: rec[1].to_string(),
                    official_title: rec[2].to_string(),
                    summary: String::new(),
                    subject: "Other".into(),
                    sponsor_id: "M1".into(),
                    cosponsor_ids: Vec::new(),
                    party: Party::Democrat,
                    final_state: "FAIL".into(),
                    action_history: Vec::new(),
                    related_bill_ids: Vec::new(),
                },
                text: rec[3].to_string(),
                label: rec[4].parse().unwrap(),
            }
        })
        .collect()
}

/// Classifies each gold row by every filtered line that cites its bill.
fn rule_predictions(rows: &[GoldFixture]) -> Vec<PositionLabel> {
    rows.iter()
        .map(|g| {
            let lines = segment_issue_text("gold", &g.text, g.bill.bill_id.congress);
            let hits: Vec<PositionLabel> = lines
                .iter()
                .filter(|l| keyword_filter(l) && l.bill_refs.contains(&g.bill.bill_id))
                .map(|l| rule_classify(l, &g.bill.bill_id))
                .collect();
            assert_eq!(hits.len(), 1, "{}", g.text);
            hits[0]
        })
        .collect()
}

#[test]
fn rule_classifier_reproduces_gold_rows() {
    let start = Instant::now();
    let rows = gold_rows();
    assert_eq!(rows.len(), 4);
    let pred = rule_predictions(&rows);
    let gold: Vec<PositionLabel> = rows.iter().map(|g| g.label).collect();
    assert_eq!(gold, vec![Support, Oppose, Amend, Monitor]);
    let m = evaluate(&pred, &gold).unwrap();
    assert_eq!(m.accuracy, 100.0);
    assert_eq!(m.macro_f1, 100.0);
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn five_class_confusion_by_hand() {
    let gold = [
        Support, Support, Support, Oppose, Oppose, Amend, Monitor, Monitor,
    ];
    let pred = [
        Support, Support, Oppose, Oppose, Oppose, Monitor, Monitor, Mention,
    ];
    let m = evaluate(&pred, &gold).unwrap();
    assert!((m.accuracy - 62.5).abs() < 1e-9);
    // Support 2·2/(2+3), Oppose 2·2/(3+2), Amend 0, Monitor 2·1/(2+2)
    let f1 = |k: &str| m.per_class_f1[k];
    assert!((f1("Support") - 80.0).abs() < 1e-9);
    assert!((f1("Oppose") - 80.0).abs() < 1e-9);
    assert!((f1("Amend") - 0.0).abs() < 1e-9);
    assert!((f1("Monitor") - 50.0).abs() < 1e-9);
    assert!((f1("Mention") - 0.0).abs() < 1e-9);
    // Mention is absent from gold and left out of the average
    assert!((m.macro_f1 - 52.5).abs() < 1e-9);
    assert_eq!(m.confusion[0], vec![2, 1, 0, 0, 0]);
    assert_eq!(m.confusion[3], vec![0, 0, 0, 1, 1]);
}

#[test]
fn length_mismatch() {
    assert!(matches!(
        evaluate(&[Support], &[Support, Oppose]),
        Err(Error::LengthMismatch { .. })
    ));
}

#[test]
fn prompts_match_golden_files() {
    for g in gold_rows() {
        let line = segment_issue_text("gold", &g.text, g.bill.bill_id.congress).remove(0);
        let want = std::fs::read_to_string(
            fixtures()
                .join("prompts")
                .join(format!("{}.txt", g.bill.bill_id.label())),
        )
        .unwrap();
        assert_eq!(build_prompt(&g.bill, &line), want);
    }
}

struct Canned {
    reply: Value,
    calls: AtomicUsize,
}

impl Transport for Canned {
    fn post_json(&self, _url: &str, _key: Option<&str>, body: &Value) -> Result<Value, String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        assert_eq!(body["temperature"], json!(0.0));
        assert_eq!(body["messages"][0]["role"], "user");
        Ok(self.reply.clone())
    }
}

struct Down;

impl Transport for Down {
    fn post_json(&self, _: &str, _: Option<&str>, _: &Value) -> Result<Value, String> {
        Err("connection refused".into())
    }
}

#[test]
fn llm_cache_replays_without_network() {
    let dir = tempfile::tempdir().unwrap();
    let config = LlmConfig::new("http://unused", "gpt-4", dir.path());
    let client = LlmClient::with_transport(
        config.clone(),
        Canned {
            reply: json!({"choices": [{"message": {"content": " oppose."}}]}),
            calls: AtomicUsize::new(0),
        },
    );
    let (label, raw) = client.classify("prompt A").unwrap();
    assert_eq!((label, raw.as_str()), (Oppose, " oppose."));
    let bytes = std::fs::read(client.cache_path("prompt A")).unwrap();
    assert_eq!(client.classify("prompt A").unwrap().0, Oppose);
    assert_eq!(std::fs::read(client.cache_path("prompt A")).unwrap(), bytes);

    let offline = LlmClient::with_transport(config, Down);
    assert_eq!(offline.classify("prompt A").unwrap().0, Oppose);
}

#[test]
fn llm_failures() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = LlmConfig::new("http://unused", "gpt-4", dir.path());
    config.max_retries = 2;
    config.backoff_ms = 1;
    let offline = LlmClient::with_transport(config.clone(), Down);
    assert!(matches!(
        offline.classify("p"),
        Err(Error::Transport { attempts: 3, .. })
    ));

    let chatty = LlmClient::with_transport(
        config,
        Canned {
            reply: json!({"choices": [{"message": {"content": "I think it depends"}}]}),
            calls: AtomicUsize::new(0),
        },
    );
    assert!(matches!(chatty.classify("p"), Err(Error::Unparseable(_))));
}

fn edge(client: &str, bill: u32, label: CoarseLabel, source: Source) -> LabeledEdge {
    LabeledEdge::new(
        client,
        format!("H.R.{bill}@115").parse().unwrap(),
        label,
        source,
        0.5,
    )
}

#[test]
fn dedupe_examples() {
    let agree = dedupe_positions(&[
        edge("A", 1, CoarseLabel::Support, Source::Gnn),
        edge("A", 1, CoarseLabel::Support, Source::Llm),
    ]);
    assert_eq!(agree.len(), 1);
    assert_eq!(agree[0].source, Source::Llm);
    assert!(dedupe_positions(&[
        edge("A", 1, CoarseLabel::Support, Source::Rule),
        edge("A", 1, CoarseLabel::Oppose, Source::Rule),
    ])
    .is_empty());
    assert!(dedupe_positions(&[]).is_empty());
}

fn label_strategy() -> impl Strategy<Value = PositionLabel> {
    prop::sample::select(PositionLabel::ALL.to_vec())
}

fn coarse_strategy() -> impl Strategy<Value = CoarseLabel> {
    prop::sample::select(CoarseLabel::ALL.to_vec())
}

fn source_strategy() -> impl Strategy<Value = Source> {
    prop::sample::select(vec![
        Source::Gnn,
        Source::Rule,
        Source::Llm,
        Source::External,
    ])
}

proptest! {
    #[test]
    fn evaluate_is_permutation_invariant(pairs in prop::collection::vec((label_strategy(), label_strategy()), 1..40), seed in any::<u64>()) {
        let (p, g): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
        let base = evaluate(&p, &g).unwrap();
        let mut shuffled = pairs.clone();
        let n = shuffled.len();
        for i in (1..n).rev() {
            shuffled.swap(i, (seed.wrapping_mul(i as u64 + 7) % (i as u64 + 1)) as usize);
        }
        let (p2, g2): (Vec<_>, Vec<_>) = shuffled.into_iter().unzip();
        prop_assert_eq!(evaluate(&p2, &g2).unwrap(), base.clone());
        prop_assert!((0.0..=100.0).contains(&base.accuracy));
        prop_assert!(base.per_class_f1.values().all(|f| (0.0..=100.0).contains(f)));
        for (i, row) in base.confusion.iter().enumerate() {
            prop_assert_eq!(row.iter().sum::<usize>(), g.iter().filter(|l| **l == PositionLabel::ALL[i]).count());
        }
    }

    #[test]
    fn dedupe_keys_are_unique_and_agreeing(
        raw in prop::collection::vec((0usize..4, 1u32..5, coarse_strategy(), source_strategy()), 0..40)
    ) {
        let edges: Vec<LabeledEdge> = raw.iter().map(|(c, b, l, s)| edge(&format!("C{c}"), *b, *l, *s)).collect();
        let out = dedupe_positions(&edges);
        let mut keys = std::collections::BTreeSet::new();
        for e in &out {
            prop_assert!(keys.insert((e.client_id.clone(), e.bill_id.clone())));
            let group: Vec<&LabeledEdge> = edges.iter().filter(|x| x.client_id == e.client_id && x.bill_id == e.bill_id).collect();
            prop_assert!(group.iter().all(|x| x.label == e.label));
            prop_assert_eq!(Some(e.source), group.iter().map(|x| x.source).max());
        }
    }
}

#[test]
fn coarsen_is_total_and_onto() {
    let images: std::collections::BTreeSet<Option<CoarseLabel>> =
        PositionLabel::ALL.iter().map(|l| coarsen(*l)).collect();
    assert_eq!(images.len(), 4);
    assert_eq!(coarsen(Amend), Some(CoarseLabel::Engage));
    assert_eq!(coarsen(Mention), None);
}
