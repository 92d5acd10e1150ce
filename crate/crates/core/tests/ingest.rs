use std::path::{Path, PathBuf};

use positionforge::ingest::{
    extract_bill_refs, parse_bills, parse_entities, parse_records, parse_reports, porter_stem,
    segment_report, write_jsonl, BillId, Chamber, IngestOptions, RecordKind, Records,
};
use positionforge::synth::{generate_corpus, write_corpus, CorpusSpec};
use positionforge::Error;
use proptest::prelude::*;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

#[test]
fn porter_vectors() {
    let text = std::fs::read_to_string(fixture("porter_vectors.tsv")).unwrap();
    let mut wrong = Vec::new();
    let mut n = 0;
    for line in text.lines().filter(|l| !l.is_empty()) {
        let (word, stem) = line.split_once('\t').expect("two columns");
        n += 1;
        if porter_stem(word) != stem {
            wrong.push(format!("{word}: got {}, want {stem}", porter_stem(word)));
        }
    }
    assert!(n > 2000);
    assert!(
        wrong.is_empty(),
        "{} mismatches: {:?}",
        wrong.len(),
        &wrong[..wrong.len().min(10)]
    );
}

#[test]
fn stems_from_feature_examples() {
    assert_eq!(porter_stem("advocacies"), "advocaci");
    assert_eq!(porter_stem("alliance"), "allianc");
    assert_eq!(porter_stem("america"), "america");
}

#[test]
fn four_report_rows() {
    let Records::Reports(reports) = parse_records(
        &fixture("reports_4.jsonl"),
        RecordKind::Reports,
        &IngestOptions::default(),
    )
    .unwrap() else {
        panic!("wrong record kind");
    };
    assert_eq!(reports.len(), 4);
    assert_eq!(reports[0].report_id, "R1");
    assert_eq!(reports[0].covered_positions[0].legislator_id, "M1");
    assert_eq!(reports[1].congress(), 112);
    assert_eq!(reports[3].congress(), 113);

    let dir = tempfile::tempdir().unwrap();
    let copy = dir.path().join("r.jsonl");
    write_jsonl(&copy, &reports).unwrap();
    assert_eq!(
        parse_reports(&copy, &IngestOptions::default()).unwrap(),
        reports
    );
}

#[test]
fn quarter_out_of_range_is_a_row_error() {
    match parse_reports(
        &fixture("reports_bad_quarter.jsonl"),
        &IngestOptions::default(),
    ) {
        Err(Error::Rows { errors, .. }) => {
            assert_eq!(errors, vec![(2, "quarter out of range".to_string())]);
        }
        other => panic!("expected row errors, got {other:?}"),
    }
}

#[test]
fn duplicate_ids() {
    let dir = tempfile::tempdir().unwrap();
    let row = r#"{"report_id":"R1","year":2017,"quarter":1,"registrant_id":"A","client_id":"G","issue_text":"x"}"#;
    let same = dir.path().join("same.jsonl");
    std::fs::write(&same, format!("{row}\n{row}\n")).unwrap();
    assert_eq!(
        parse_reports(&same, &IngestOptions::default())
            .unwrap()
            .len(),
        1
    );

    let conflict = dir.path().join("conflict.jsonl");
    std::fs::write(
        &conflict,
        format!("{row}\n{}\n", row.replace("\"x\"", "\"y\"")),
    )
    .unwrap();
    assert!(matches!(
        parse_reports(&conflict, &IngestOptions::default()),
        Err(Error::DuplicateId { id, .. }) if id == "R1"
    ));
}

#[test]
fn malformed_row_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.jsonl");
    std::fs::write(
        &p,
        "{\"report_id\":\"R1\",\"year\":2017,\"quarter\":1,\"registrant_id\":\"A\",\"client_id\":\"G\",\"issue_text\":\"x\"}\n{not json\n",
    )
    .unwrap();
    match parse_reports(&p, &IngestOptions::default()) {
        Err(Error::Rows { errors, .. }) => {
            assert_eq!(errors.iter().map(|e| e.0).collect::<Vec<_>>(), vec![2])
        }
        other => panic!("expected row errors, got {other:?}"),
    }
}

#[test]
fn report_outside_congress_range() {
    let opts = IngestOptions {
        min_congress: 115,
        max_congress: 115,
    };
    assert!(
        matches!(parse_reports(&fixture("reports_4.jsonl"), &opts), Err(Error::Rows { errors, .. }) if errors.len() == 3)
    );
}

#[test]
fn entity_attribute_outside_schema() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("e.csv");
    std::fs::write(&p, "id,kind,name,term\nG1,InterestGroup,Acme,Senator\n").unwrap();
    assert!(matches!(parse_entities(&p), Err(Error::Rows { errors, .. }) if errors[0].0 == 2));
}

#[test]
fn segmented_fixture_lines_carry_refs() {
    let reports = parse_reports(&fixture("reports_4.jsonl"), &IngestOptions::default()).unwrap();
    let lines = segment_report(&reports[3]);
    assert_eq!(lines.len(), 2);
    assert!(lines[0].bill_refs.is_empty());
    assert_eq!(lines[1].bill_refs.len(), 6);
    assert!(lines.iter().all(|l| l.report_id == "R4"));
    let lines = segment_report(&reports[0]);
    assert_eq!(
        lines[0].bill_refs,
        vec![
            BillId::new(Chamber::Senate, 568, 115),
            BillId::new(Chamber::House, 1421, 115)
        ]
    );
}

#[test]
fn synthetic_counts_match_generator_manifest() {
    let corpus = generate_corpus(&CorpusSpec::default(), 3);
    let dir = tempfile::tempdir().unwrap();
    write_corpus(&corpus, dir.path()).unwrap();
    let opts = IngestOptions::default();
    let m = &corpus.manifest;
    assert_eq!(
        parse_reports(&dir.path().join("reports.jsonl"), &opts)
            .unwrap()
            .len(),
        m.reports
    );
    assert_eq!(
        parse_bills(&dir.path().join("bills.jsonl"), &opts)
            .unwrap()
            .len(),
        m.bills
    );
    let entities = parse_entities(&dir.path().join("entities.csv")).unwrap();
    assert_eq!(entities.len(), m.entities.values().sum::<usize>());
}

proptest! {
    #[test]
    fn canonical_id_round_trips(house in any::<bool>(), number in 1u32..20000, congress in 100u16..120) {
        let chamber = if house { Chamber::House } else { Chamber::Senate };
        let id = BillId::new(chamber, number, congress);
        let parsed: BillId = id.to_string().parse().unwrap();
        prop_assert_eq!(parsed, id);
    }

    #[test]
    fn every_spelling_is_extracted(number in 1u32..9999, form in 0usize..6, pad in "[a-z ]{0,12}") {
        let spelled = ["H.R. ", "H.R.", "HR ", "S. ", "S.", "S "][form];
        let text = format!("{pad} bill {spelled}{number} {pad}");
        let refs = extract_bill_refs(&text, 115);
        let chamber = if form < 3 { Chamber::House } else { Chamber::Senate };
        prop_assert_eq!(refs, vec![BillId::new(chamber, number, 115)]);
    }
}
