//! A small end-to-end corpus: reports, bills, entities, a firm panel and
//! comparison scores, with the latent truth that generated them.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analysis::{write_firms, FirmRecord};
use crate::annotate::{coarsen, write_edges, LabeledEdge, PositionLabel, Source};
use crate::error::Result;
use crate::ingest::{
    segment_report, write_entities, write_jsonl, Action, Bill, BillId, Chamber, CoveredPosition,
    EntityKind, EntityRecord, Party, RawReport, Stage,
};
use crate::irt::ItemParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub groups: usize,
    pub bills: usize,
    pub reports: usize,
    pub legislators: usize,
    pub registrants: usize,
    pub lobbyists: usize,
    /// Firms in the panel with no lobbying client.
    pub quiet_firms: usize,
    /// Support/Oppose bills per group; coverage is balanced across bills.
    pub positions_per_group: usize,
    pub engage_per_group: usize,
    pub mentions_per_group: usize,
    pub external_labels: usize,
    pub years: (i32, i32),
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            groups: 30,
            bills: 50,
            reports: 200,
            legislators: 40,
            registrants: 8,
            lobbyists: 24,
            quiet_firms: 30,
            positions_per_group: 20,
            engage_per_group: 3,
            mentions_per_group: 2,
            external_labels: 20,
            years: (2017, 2018),
        }
    }
}

/// Expected counts written next to the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub seed: u64,
    pub reports: usize,
    pub bills: usize,
    pub entities: BTreeMap<String, usize>,
    pub firm_rows: usize,
    pub lines: usize,
    pub line_counts: BTreeMap<String, usize>,
    pub labeled_pairs: BTreeMap<String, usize>,
    pub external_labels: usize,
}

/// The generating parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusTruth {
    pub theta: BTreeMap<String, f64>,
    pub items: BTreeMap<BillId, ItemParams>,
    /// Fine label of every (group, bill) pair written into the reports.
    pub positions: Vec<(String, BillId, PositionLabel)>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub reports: Vec<RawReport>,
    pub bills: Vec<Bill>,
    pub entities: Vec<EntityRecord>,
    pub labels: Vec<LabeledEdge>,
    pub firms: Vec<FirmRecord>,
    pub cfscores: Vec<(String, f64)>,
    pub truth: CorpusTruth,
    pub manifest: CorpusManifest,
}

const STATES: [&str; 12] = [
    "CA", "TX", "NY", "FL", "OH", "PA", "IL", "WA", "GA", "MI", "AK", "CO",
];
const INDUSTRIES: [&str; 6] = ["IND012", "IND047", "IND103", "IND188", "IND250", "IND311"];
const SUBJECTS: [&str; 6] = [
    "Taxation",
    "Health",
    "Energy",
    "Agriculture and food",
    "Transportation and public works",
    "Finance and financial sector",
];
const TOPICS: [&str; 10] = [
    "Broadband",
    "Water",
    "Energy",
    "Tax",
    "Health Care",
    "Farm",
    "Transit",
    "Housing",
    "Pension",
    "Trade",
];
const ADJECTIVES: [&str; 8] = [
    "Rural",
    "Clean",
    "Fair",
    "Modern",
    "Secure",
    "Affordable",
    "Small Business",
    "American",
];
const NOUNS: [&str; 7] = [
    "Access",
    "Relief",
    "Reform",
    "Investment",
    "Protection",
    "Fairness",
    "Improvement",
];
const GROUP_WORDS: [&str; 8] = [
    "Alliance",
    "Association",
    "Council",
    "Coalition",
    "Institute",
    "Federation",
    "Society",
    "Partners",
];
const FIRM_WORDS: [&str; 6] = [
    "Strategies",
    "Advisors",
    "Group",
    "Public Affairs",
    "Consulting",
    "Associates",
];
const NAICS: [&str; 4] = ["31", "42", "52", "54"];

fn line_for(
    label: PositionLabel,
    bill: &str,
    title: &str,
    topic: &str,
    rng: &mut ChaCha8Rng,
) -> String {
    let templates: &[&str] = match label {
        PositionLabel::Support => &[
            "Support passage of {b}, the {t}.",
            "Advocate for enactment of {b} ({t}).",
            "Urge Congress to promote {b}, the {t}.",
        ],
        PositionLabel::Oppose => &[
            "Oppose {b}, the {t}.",
            "Lobby against {b} ({t}).",
            "Urge members to reject {b}, the {t}.",
        ],
        PositionLabel::Amend => &[
            "Seek to amend {b}, the {t}, on reporting rules.",
            "Work to modify provisions of {b} ({t}).",
        ],
        PositionLabel::Monitor => &["Monitor {b}, the {t}.", "Track developments on {b} ({t})."],
        PositionLabel::Mention => {
            &["Issues related to {b}, the {t}. Promote awareness of {p} programs."]
        }
    };
    templates
        .choose(rng)
        .expect("non-empty")
        .replace("{b}", bill)
        .replace("{t}", title)
        .replace("{p}", &topic.to_lowercase())
}

fn filler(topic: &str, rng: &mut ChaCha8Rng) -> String {
    let t = topic.to_lowercase();
    match rng.random_range(0..3) {
        0 => format!("General issues regarding {t} policy."),
        1 => format!("Outreach to agencies on {t} programs."),
        _ => format!("Meetings with staff about {t} appropriations."),
    }
}

/// Renders a bill reference in one of the spellings seen in filings.
fn spelling(id: &BillId, rng: &mut ChaCha8Rng) -> String {
    let n = id.number;
    match (id.chamber, rng.random_range(0..3)) {
        (Chamber::House, 0) => format!("H.R. {n}"),
        (Chamber::House, 1) => format!("H.R.{n}"),
        (Chamber::House, _) => format!("HR {n}"),
        (Chamber::Senate, 0) => format!("S. {n}"),
        (Chamber::Senate, 1) => format!("S.{n}"),
        (Chamber::Senate, _) => format!("S {n}"),
    }
}

fn entity(id: String, kind: EntityKind, attrs: &[(&str, String)]) -> EntityRecord {
    EntityRecord {
        id,
        kind,
        attributes: attrs
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect(),
    }
}

fn pick<'a>(xs: &[&'a str], rng: &mut ChaCha8Rng) -> String {
    xs.choose(rng).expect("non-empty").to_string()
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

/// Action history consistent with `final_state`, starting at `start`.
fn history(final_state: &str, start: NaiveDate, rng: &mut ChaCha8Rng) -> Vec<Action> {
    use Stage::*;
    let path: &[Stage] = match final_state {
        "INTRODUCED" | "REFERRED" => &[ReferredToCommittee],
        "REPORTED" => &[ReferredToCommittee, CommitteeReported],
        "PASS_OVER" => &[ReferredToCommittee, CommitteeReported, PassedChamber],
        "PASSED:BILL" => &[
            ReferredToCommittee,
            CommitteeReported,
            PassedChamber,
            Passed,
        ],
        "ENACTED:SIGNED" => &[
            ReferredToCommittee,
            CommitteeReported,
            PassedChamber,
            Passed,
            Enacted,
        ],
        "VETOED" => &[
            ReferredToCommittee,
            CommitteeReported,
            PassedChamber,
            Passed,
            Vetoed,
        ],
        _ => &[ReferredToCommittee, CommitteeReported, TemporarilyRejected],
    };
    let mut d = start;
    path.iter()
        .map(|s| {
            let a = Action { date: d, stage: *s };
            d += chrono::Duration::days(rng.random_range(30..150));
            a
        })
        .collect()
}

/// Generates the corpus. Every group holds a fixed, consistent position on
/// each bill it lobbies; Support versus Oppose follows a 2PL draw from the
/// group's latent score and the bill's item parameters, and the group-bill
/// design is balanced so every group and every bill has the same number of
/// Support/Oppose pairs.
pub fn generate_corpus(spec: &CorpusSpec, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (y0, y1) = spec.years;
    let congress = crate::ingest::congress_for_year(y0);

    let parties = [Party::Democrat, Party::Republican];
    let mut entities = Vec::new();
    let mut legislators: Vec<(String, Chamber, Party, String)> = Vec::new();
    for i in 0..spec.legislators {
        let id = format!("L{:03}", i + 1);
        let chamber = if i < spec.legislators * 3 / 4 {
            Chamber::House
        } else {
            Chamber::Senate
        };
        let party = if rng.random::<f64>() < 0.05 {
            Party::Independent
        } else {
            *parties.choose(&mut rng).expect("non-empty")
        };
        let state = pick(&STATES, &mut rng);
        let term = match chamber {
            Chamber::House => "Representative",
            Chamber::Senate => "Senate",
        };
        entities.push(entity(
            id.clone(),
            EntityKind::Legislator,
            &[
                ("name", format!("Legislator {}", i + 1)),
                ("term", term.into()),
                ("party", party.as_str().into()),
                ("state", state.clone()),
                ("gender", pick(&["Female", "Male"], &mut rng)),
            ],
        ));
        legislators.push((id, chamber, party, state));
    }

    for i in 0..spec.registrants {
        let w = FIRM_WORDS[i % FIRM_WORDS.len()];
        entities.push(entity(
            format!("R{:02}", i + 1),
            EntityKind::Registrant,
            &[
                (
                    "name",
                    format!("{} {w}", ["Capitol", "Harbor", "Summit", "Beacon"][i % 4]),
                ),
                (
                    "description",
                    format!("Government relations {} firm", w.to_lowercase()),
                ),
                ("state", pick(&["DC", "VA", "MD", "NY"], &mut rng)),
            ],
        ));
    }

    // lobbyist id, registrant index, covered legislator
    let mut lobbyists: Vec<(String, usize, Option<String>)> = Vec::new();
    for i in 0..spec.lobbyists {
        let id = format!("B{:03}", i + 1);
        entities.push(entity(
            id.clone(),
            EntityKind::Lobbyist,
            &[
                ("name", format!("Lobbyist {}", i + 1)),
                (
                    "ethnicity",
                    pick(&crate::ingest::LOBBYIST_ETHNICITIES, &mut rng),
                ),
                ("party", pick(&["Democrat", "Republican"], &mut rng)),
                ("gender", pick(&["Female", "Male", "Mostly Male"], &mut rng)),
            ],
        ));
        let covered = (rng.random::<f64>() < 0.4)
            .then(|| legislators.choose(&mut rng).expect("legislators").0.clone());
        lobbyists.push((id, i % spec.registrants.max(1), covered));
    }

    let mut groups = Vec::new();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut theta = BTreeMap::new();
    for i in 0..spec.groups {
        let id = format!("G{:03}", i + 1);
        let topic = TOPICS[i % TOPICS.len()];
        entities.push(entity(
            id.clone(),
            EntityKind::InterestGroup,
            &[
                (
                    "name",
                    format!("{topic} {}", GROUP_WORDS[i % GROUP_WORDS.len()]),
                ),
                (
                    "description",
                    format!(
                        "National {} industry {}",
                        topic.to_lowercase(),
                        GROUP_WORDS[(i + 3) % 8].to_lowercase()
                    ),
                ),
                ("industry", INDUSTRIES[i % INDUSTRIES.len()].into()),
                ("state", pick(&STATES, &mut rng)),
                (
                    "government",
                    if i % 15 == 14 { "True" } else { "False" }.into(),
                ),
                (
                    "industry_type",
                    pick(&["org", "com", "com", "net"], &mut rng),
                ),
            ],
        ));
        theta.insert(id.clone(), normal.sample(&mut rng));
        groups.push((id, topic));
    }

    let mut numbers: BTreeSet<(Chamber, u32)> = BTreeSet::new();
    let mut bills = Vec::new();
    let mut items = BTreeMap::new();
    let house: Vec<&(String, Chamber, Party, String)> = legislators
        .iter()
        .filter(|l| l.1 == Chamber::House)
        .collect();
    let senate: Vec<&(String, Chamber, Party, String)> = legislators
        .iter()
        .filter(|l| l.1 == Chamber::Senate)
        .collect();
    for i in 0..spec.bills {
        let chamber = if i < spec.bills * 3 / 5 {
            Chamber::House
        } else {
            Chamber::Senate
        };
        let number = loop {
            let n = rng.random_range(1..5000);
            if numbers.insert((chamber, n)) {
                break n;
            }
        };
        let bill_id = BillId::new(chamber, number, congress);
        let pool = if chamber == Chamber::House {
            &house
        } else {
            &senate
        };
        let sponsor = *pool.choose(&mut rng).expect("sponsors");
        let k = rng.random_range(0..5);
        let cosponsors: Vec<String> = pool
            .choose_multiple(&mut rng, k)
            .filter(|l| l.0 != sponsor.0)
            .map(|l| l.0.clone())
            .collect();
        let topic = TOPICS[rng.random_range(0..TOPICS.len())];
        let noun = pick(&NOUNS, &mut rng);
        let title = format!("{} {topic} {noun} Act", pick(&ADJECTIVES, &mut rng));
        let final_state = pick(&crate::ingest::FINAL_STATES, &mut rng);
        let start = date(y0, rng.random_range(1..=3), rng.random_range(1..=28));
        let action_history = history(&final_state, start, &mut rng);
        bills.push(Bill {
            bill_id,
            short_title: title.clone(),
            official_title: format!(
                "To provide for {} {}, and for other purposes.",
                topic.to_lowercase(),
                noun.to_lowercase()
            ),
            summary: format!(
                "This bill addresses {} {} programs.",
                topic.to_lowercase(),
                noun.to_lowercase()
            ),
            subject: SUBJECTS[i % SUBJECTS.len()].into(),
            sponsor_id: sponsor.0.clone(),
            cosponsor_ids: cosponsors,
            party: sponsor.2,
            final_state,
            action_history,
            related_bill_ids: Vec::new(),
        });
        items.insert(
            bill_id,
            ItemParams {
                a: rng.random_range(0.8..2.0),
                b: rng.random_range(-1.0..1.0),
            },
        );
    }
    for i in (0..bills.len()).step_by(10) {
        let j = (i + 5) % bills.len();
        if i != j {
            let other = bills[j].bill_id;
            bills[i].related_bill_ids.push(other);
        }
    }

    // Balanced design: each group takes the least-covered bills so far.
    let mut coverage = vec![0usize; bills.len()];
    let mut positions: Vec<(String, BillId, PositionLabel)> = Vec::new();
    let mut per_group: Vec<Vec<(BillId, PositionLabel)>> = Vec::new();
    for (gid, _) in &groups {
        let mut order: Vec<usize> = (0..bills.len()).collect();
        order.shuffle(&mut rng);
        order.sort_by_key(|&j| coverage[j]);
        let mut mine = Vec::new();
        for &j in order.iter().take(spec.positions_per_group) {
            coverage[j] += 1;
            let it = &items[&bills[j].bill_id];
            let p = crate::irt::icc(it.a, it.b, theta[gid]);
            let label = if rng.random::<f64>() < p {
                PositionLabel::Support
            } else {
                PositionLabel::Oppose
            };
            mine.push((bills[j].bill_id, label));
        }
        let mut rest: Vec<usize> = order[spec.positions_per_group.min(order.len())..].to_vec();
        rest.shuffle(&mut rng);
        let mut rest = rest.into_iter();
        for j in rest.by_ref().take(spec.engage_per_group) {
            let label = if rng.random::<bool>() {
                PositionLabel::Amend
            } else {
                PositionLabel::Monitor
            };
            mine.push((bills[j].bill_id, label));
        }
        for j in rest.take(spec.mentions_per_group) {
            mine.push((bills[j].bill_id, PositionLabel::Mention));
        }
        positions.extend(mine.iter().map(|(b, l)| (gid.clone(), *b, *l)));
        per_group.push(mine);
    }

    let bill_title: BTreeMap<BillId, &str> = bills
        .iter()
        .map(|b| (b.bill_id, b.short_title.as_str()))
        .collect();
    let mut reports = Vec::new();
    let group_reports: Vec<Vec<usize>> = (0..groups.len())
        .map(|g| {
            (0..spec.reports)
                .filter(|r| r % groups.len() == g)
                .collect()
        })
        .collect();
    let mut lines: Vec<Vec<String>> = vec![Vec::new(); spec.reports];
    for (g, mine) in per_group.iter().enumerate() {
        let slots = &group_reports[g];
        if slots.is_empty() {
            continue;
        }
        let topic = groups[g].1;
        for (bill, label) in mine {
            let copies = if rng.random::<f64>() < 0.3 { 2 } else { 1 };
            for r in slots.choose_multiple(&mut rng, copies) {
                let text = line_for(
                    *label,
                    &spelling(bill, &mut rng),
                    bill_title[bill],
                    topic,
                    &mut rng,
                );
                lines[*r].push(text);
            }
        }
        for &r in slots {
            for _ in 0..rng.random_range(0..=2) {
                let f = filler(topic, &mut rng);
                lines[r].push(f);
            }
            lines[r].shuffle(&mut rng);
        }
    }
    let registrant_lobbyists = |reg: usize| -> Vec<&(String, usize, Option<String>)> {
        lobbyists.iter().filter(|l| l.1 == reg).collect()
    };
    for (r, body) in lines.iter_mut().enumerate() {
        let g = r % groups.len();
        if body.is_empty() {
            body.push(filler(groups[g].1, &mut rng));
        }
        let reg = g % spec.registrants.max(1);
        let pool = registrant_lobbyists(reg);
        let k = rng.random_range(1..=3);
        let team: Vec<&(String, usize, Option<String>)> =
            pool.choose_multiple(&mut rng, k).copied().collect();
        let mut text = String::new();
        for (k, l) in body.iter().enumerate() {
            if k > 0 {
                text.push_str(if rng.random::<f64>() < 0.15 {
                    "\n\n"
                } else {
                    "\n"
                });
            }
            text.push_str(l);
        }
        if rng.random::<f64>() < 0.2 {
            text.push_str("  \n");
        }
        reports.push(RawReport {
            report_id: format!("RPT{:04}", r + 1),
            year: rng.random_range(y0..=y1),
            quarter: rng.random_range(1..=4),
            registrant_id: format!("R{:02}", reg + 1),
            client_id: groups[g].0.clone(),
            issue_text: text,
            lobbyist_ids: team.iter().map(|l| l.0.clone()).collect(),
            covered_positions: team
                .iter()
                .filter_map(|l| {
                    l.2.as_ref().map(|leg| CoveredPosition {
                        lobbyist_id: l.0.clone(),
                        legislator_id: leg.clone(),
                    })
                })
                .collect(),
        });
    }

    let mut labels = Vec::new();
    let labelable: Vec<&(String, BillId, PositionLabel)> = positions
        .iter()
        .filter(|p| coarsen(p.2).is_some())
        .collect();
    for p in labelable.choose_multiple(&mut rng, spec.external_labels) {
        let coarse = coarsen(p.2).expect("filtered");
        labels.push(LabeledEdge::new(
            p.0.clone(),
            p.1,
            coarse,
            Source::External,
            1.0,
        ));
    }
    labels.sort_by(|a, b| (&a.client_id, a.bill_id).cmp(&(&b.client_id, b.bill_id)));

    let mut firms = Vec::new();
    let emp_noise = Normal::new(0.0, 0.1).expect("sd > 0");
    let total_firms = spec.groups + spec.quiet_firms;
    for f in 0..total_firms {
        let client = (f < spec.groups).then(|| groups[f].0.clone());
        let base: f64 = if client.is_some() { 8.0 } else { 7.0 }
            + 1.2 * Distribution::<f64>::sample(&StandardNormal, &mut rng);
        let naics = pick(&NAICS, &mut rng);
        for year in y0..=y1 {
            let emp = base + emp_noise.sample(&mut rng);
            let ppent = 0.8 * emp + 0.5 * Distribution::<f64>::sample(&StandardNormal, &mut rng);
            firms.push(FirmRecord {
                firm_id: format!("F{:03}", f + 1),
                client_id: client.clone(),
                year,
                log_employment: emp,
                naics2: Some(naics.clone()),
                controls: [("log_ppent".to_string(), ppent)].into_iter().collect(),
            });
        }
    }

    let cfscores: Vec<(String, f64)> = theta
        .iter()
        .map(|(g, t)| {
            (
                g.clone(),
                0.5 * t + 0.8 * Distribution::<f64>::sample(&StandardNormal, &mut rng),
            )
        })
        .collect();

    let line_counts: BTreeMap<String, usize> = reports
        .iter()
        .map(|r| (r.report_id.clone(), segment_report(r).len()))
        .collect();
    let mut kinds = BTreeMap::new();
    for e in &entities {
        *kinds.entry(format!("{:?}", e.kind)).or_insert(0) += 1;
    }
    let mut labeled_pairs = BTreeMap::new();
    for p in &positions {
        *labeled_pairs.entry(p.2.as_str().to_string()).or_insert(0) += 1;
    }
    let manifest = CorpusManifest {
        seed,
        reports: reports.len(),
        bills: bills.len(),
        entities: kinds,
        firm_rows: firms.len(),
        lines: line_counts.values().sum(),
        line_counts,
        labeled_pairs,
        external_labels: labels.len(),
    };
    Corpus {
        reports,
        bills,
        entities,
        labels,
        firms,
        cfscores,
        truth: CorpusTruth {
            theta,
            items,
            positions,
        },
        manifest,
    }
}

/// File names used by [`write_corpus`].
pub mod files {
    pub const REPORTS: &str = "reports.jsonl";
    pub const BILLS: &str = "bills.jsonl";
    pub const ENTITIES: &str = "entities.csv";
    pub const LABELS: &str = "labels.csv";
    pub const FIRMS: &str = "firms.csv";
    pub const CFSCORES: &str = "cfscores.csv";
    pub const MANIFEST: &str = "manifest.json";
    pub const TRUTH: &str = "truth.json";
}

pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_jsonl(&dir.join(files::REPORTS), &corpus.reports)?;
    write_jsonl(&dir.join(files::BILLS), &corpus.bills)?;
    write_entities(&dir.join(files::ENTITIES), &corpus.entities)?;
    write_edges(&dir.join(files::LABELS), &corpus.labels)?;
    write_firms(&dir.join(files::FIRMS), &corpus.firms)?;
    let mut w = csv::Writer::from_path(dir.join(files::CFSCORES))?;
    w.write_record(["group_id", "cfscore"])?;
    for (g, s) in &corpus.cfscores {
        w.write_record([g.as_str(), &s.to_string()])?;
    }
    w.flush()?;
    std::fs::write(
        dir.join(files::MANIFEST),
        serde_json::to_string_pretty(&corpus.manifest)? + "\n",
    )?;
    std::fs::write(
        dir.join(files::TRUTH),
        serde_json::to_string_pretty(&corpus.truth)? + "\n",
    )?;
    Ok(())
}
