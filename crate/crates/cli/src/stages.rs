use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use positionforge::analysis::{
    self, block_bootstrap, build_design, dirichlet_fit, firm_years, logistic_fit,
    map_report_to_stage, pearson, position_ratio_by_subject, qoi_delta, read_firms,
    smooth_proportions, stage_frequency, DesignMatrix, FirmYear, FitControl, QoiModel, QoiResult,
    StageEvent, FINE_LABELS,
};
use positionforge::annotate::{
    build_prompt, coarsen, dedupe_positions, evaluate, format_prompt, keyword_filter, read_edges,
    read_gold, rule_classify, write_edges, AnnotationRecord, CoarseLabel, LabeledEdge, LlmClient,
    LlmConfig, PositionLabel, Source,
};
use positionforge::error::Error;
use positionforge::gnn::{
    evaluate_model, forward, init_model, proxy_labels, train, youden_threshold, GnnModel,
    GraphSchema,
};
use positionforge::hetgraph::{
    build_graph, compute_node_features, graph_stats, split_edges, EdgeSplit, HeteroGraph,
};
use positionforge::ingest::{
    extract_bill_refs, parse_bills, parse_entities, parse_reports, segment_report, write_entities,
    write_jsonl, Bill, BillId, EntityKind, EntityRecord, IngestOptions, LayoutSpec, LobbyLine,
    NodeKind, RawReport,
};
use positionforge::irt::{
    build_response_matrix, eap_reliability, eap_scores, fit_graded, orientation_ok, prune_matrix,
    QuadratureSpec,
};
use positionforge::par;
use serde_json::json;

use crate::config::{Classifier, Loaded};
use crate::error::CliError;
use crate::io::{num, read_json, read_jsonl, read_scores, write_json, write_table};
use crate::{stage_dir, Stage};

pub(crate) fn run(loaded: &Loaded, stage: Stage, out: &Path) -> Result<(), CliError> {
    match stage {
        Stage::Ingest => ingest(loaded, out),
        Stage::Annotate => annotate(loaded, out),
        Stage::BuildGraph => build(loaded, out),
        Stage::TrainGnn => train_gnn(loaded, out),
        Stage::Label => label(loaded, out),
        Stage::Irt => irt(loaded, out),
        Stage::Analyze => analyze(loaded, out),
    }
}

struct Ingested {
    reports: Vec<RawReport>,
    bills: Vec<Bill>,
    entities: Vec<EntityRecord>,
}

fn ingest_options(loaded: &Loaded) -> IngestOptions {
    IngestOptions {
        min_congress: loaded.config.congress_range.0,
        max_congress: loaded.config.congress_range.1,
    }
}

fn load_ingested(loaded: &Loaded) -> Result<Ingested, CliError> {
    let dir = stage_dir(loaded, Stage::Ingest);
    let opts = ingest_options(loaded);
    Ok(Ingested {
        reports: parse_reports(&dir.join("reports.jsonl"), &opts)?,
        bills: parse_bills(&dir.join("bills.jsonl"), &opts)?,
        entities: parse_entities(&dir.join("entities.csv"))?,
    })
}

fn ingest(loaded: &Loaded, out: &Path) -> Result<(), CliError> {
    let p = &loaded.config.paths;
    let opts = ingest_options(loaded);
    let mut reports = parse_reports(&loaded.path(&p.reports), &opts)?;
    let mut bills = parse_bills(&loaded.path(&p.bills), &opts)?;
    let mut entities = parse_entities(&loaded.path(&p.entities))?;
    reports.sort_by(|a, b| a.report_id.cmp(&b.report_id));
    bills.sort_by_key(|b| b.bill_id);
    entities.sort_by(|a, b| a.id.cmp(&b.id));
    let lines: Vec<LobbyLine> = reports.iter().flat_map(segment_report).collect();
    write_jsonl(&out.join("reports.jsonl"), &reports)?;
    write_jsonl(&out.join("bills.jsonl"), &bills)?;
    write_entities(&out.join("entities.csv"), &entities)?;
    write_jsonl(&out.join("lines.jsonl"), &lines)?;
    let mut kinds: BTreeMap<String, usize> = BTreeMap::new();
    for e in &entities {
        *kinds.entry(format!("{:?}", e.kind)).or_default() += 1;
    }
    write_json(
        &out.join("summary.json"),
        &json!({
            "reports": reports.len(),
            "bills": bills.len(),
            "entities": kinds,
            "lines": lines.len(),
            "lines_with_bills": lines.iter().filter(|l| !l.bill_refs.is_empty()).count(),
            "keyword_lines": lines.iter().filter(|l| keyword_filter(l)).count(),
        }),
    )
}

enum Backend {
    Rule,
    Llm(Box<LlmClient>),
}

impl Backend {
    fn new(loaded: &Loaded) -> Result<Self, CliError> {
        match loaded.config.classifier {
            Classifier::Rule => Ok(Backend::Rule),
            Classifier::Llm => {
                let s = &loaded.config.llm;
                let mut c = LlmConfig::from_env(
                    s.model_name.clone(),
                    loaded.path(&loaded.config.paths.cache),
                );
                if c.endpoint_url.is_empty() {
                    return Err(CliError::External(format!(
                        "classifier `llm` needs an endpoint in {}",
                        positionforge::annotate::URL_ENV
                    )));
                }
                c.temperature = s.temperature;
                c.max_retries = s.max_retries;
                c.max_in_flight = s.max_in_flight;
                c.requests_per_minute = s.requests_per_minute;
                c.backoff_ms = s.backoff_ms;
                Ok(Backend::Llm(Box::new(LlmClient::new(c))))
            }
        }
    }

    fn source(&self) -> Source {
        match self {
            Backend::Rule => Source::Rule,
            Backend::Llm(_) => Source::Llm,
        }
    }

    fn classify(
        &self,
        line: &LobbyLine,
        bill: &BillId,
        prompt: impl FnOnce() -> String,
    ) -> Result<(PositionLabel, Option<String>), Error> {
        match self {
            Backend::Rule => Ok((rule_classify(line, bill), None)),
            Backend::Llm(client) => client.classify(&prompt()).map(|(l, raw)| (l, Some(raw))),
        }
    }
}

fn annotate(loaded: &Loaded, out: &Path) -> Result<(), CliError> {
    let data = load_ingested(loaded)?;
    let lines: Vec<LobbyLine> = read_jsonl(&stage_dir(loaded, Stage::Ingest).join("lines.jsonl"))?;
    let client_of: HashMap<&str, &str> = data
        .reports
        .iter()
        .map(|r| (r.report_id.as_str(), r.client_id.as_str()))
        .collect();
    let bills: HashMap<BillId, &Bill> = data.bills.iter().map(|b| (b.bill_id, b)).collect();
    let backend = Backend::new(loaded)?;

    let filtered: Vec<&LobbyLine> = lines.iter().filter(|l| keyword_filter(l)).collect();
    let mut tasks: Vec<(&LobbyLine, BillId)> = Vec::new();
    let mut unknown = 0usize;
    for l in &filtered {
        for b in &l.bill_refs {
            if bills.contains_key(b) {
                tasks.push((l, *b));
            } else {
                unknown += 1;
            }
        }
    }
    // the first failure stops the remaining requests
    let failed = AtomicBool::new(false);
    let mut results = par::map(&tasks, |(line, bill)| {
        if failed.load(Ordering::Relaxed) {
            return None;
        }
        let r = backend.classify(line, bill, || build_prompt(bills[bill], line));
        if r.is_err() {
            failed.store(true, Ordering::Relaxed);
        }
        Some(r)
    });
    if let Some(i) = results.iter().position(|r| matches!(r, Some(Err(_)))) {
        if let Some(Err(e)) = results.swap_remove(i) {
            return Err(e.into());
        }
    }
    let mut annotations = Vec::with_capacity(tasks.len());
    for ((line, bill), r) in tasks.iter().zip(results) {
        let (label, raw_response) = r.expect("no task skipped without a failure")?;
        let client_id = client_of.get(line.report_id.as_str()).ok_or_else(|| {
            CliError::Validation(format!("line references unknown report {}", line.report_id))
        })?;
        annotations.push(AnnotationRecord {
            client_id: client_id.to_string(),
            bill_id: *bill,
            line: (*line).clone(),
            label,
            source: backend.source(),
            raw_response,
        });
    }
    let mut edges: Vec<LabeledEdge> = annotations
        .iter()
        .filter_map(|a| {
            coarsen(a.label)
                .map(|c| LabeledEdge::new(a.client_id.clone(), a.bill_id, c, a.source, 1.0))
        })
        .collect();
    let mut external = 0;
    if let Some(p) = &loaded.config.paths.labels {
        let ext = read_edges(&loaded.path(p))?;
        external = ext.len();
        edges.extend(ext);
    }
    let pairs: BTreeSet<(String, BillId)> = edges
        .iter()
        .map(|e| (e.client_id.clone(), e.bill_id))
        .collect();
    let deduped = dedupe_positions(&edges);
    write_jsonl(&out.join("annotations.jsonl"), &annotations)?;
    write_edges(&out.join("edges.csv"), &deduped)?;

    let mut fine: BTreeMap<&str, usize> = BTreeMap::new();
    for a in &annotations {
        *fine.entry(a.label.as_str()).or_default() += 1;
    }
    let mut coarse: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &deduped {
        *coarse.entry(e.label.as_str()).or_default() += 1;
    }
    let mut summary = json!({
        "classifier": backend.source().as_str(),
        "lines": lines.len(),
        "filtered_lines": filtered.len(),
        "classified_pairs": annotations.len(),
        "unknown_bill_refs": unknown,
        "fine_labels": fine,
        "external_labels": external,
        "edges": deduped.len(),
        "edge_labels": coarse,
        "conflicting_pairs_dropped": pairs.len() - deduped.len(),
    });

    if let Some(p) = &loaded.config.paths.gold {
        let gold = read_gold(&loaded.path(p))?;
        let mut pred = Vec::with_capacity(gold.len());
        for (i, g) in gold.iter().enumerate() {
            let line = LobbyLine {
                report_id: "gold".into(),
                index: i,
                text: g.text.clone(),
                bill_refs: extract_bill_refs(&g.text, g.bill_id.congress),
            };
            let prompt = || match bills.get(&g.bill_id) {
                Some(b) => build_prompt(b, &line),
                None => format_prompt(&g.bill_id.label(), "", "", &line.text),
            };
            pred.push(backend.classify(&line, &g.bill_id, prompt)?.0);
        }
        let gold_labels: Vec<PositionLabel> = gold.iter().map(|g| g.label).collect();
        let metrics = evaluate(&pred, &gold_labels)?;
        write_json(&out.join("gold_metrics.json"), &metrics)?;
        summary["gold_accuracy"] = json!(metrics.accuracy);
    }
    write_json(&out.join("summary.json"), &summary)
}

fn build(loaded: &Loaded, out: &Path) -> Result<(), CliError> {
    let data = load_ingested(loaded)?;
    let strict = loaded.config.strict;
    let nodes = compute_node_features(&data.entities, &data.bills, &LayoutSpec::default(), strict)?;
    let g = build_graph(
        &nodes,
        &data.reports,
        &data.bills,
        loaded.config.graph_config,
        strict,
    )?;
    g.save(&out.join("graph.json"))?;
    write_json(
        &out.join("stats.json"),
        &json!({
            "config": loaded.config.graph_config.index(),
            "name": loaded.config.graph_config.name(),
            "stats": graph_stats(&g),
        }),
    )
}

fn in_graph(g: &HeteroGraph, e: &LabeledEdge) -> bool {
    g.node_index(NodeKind::InterestGroup, &e.client_id).is_ok()
        && g.node_index(NodeKind::Bill, &e.bill_id.to_string()).is_ok()
}

fn train_gnn(loaded: &Loaded, out: &Path) -> Result<(), CliError> {
    let c = &loaded.config;
    let g = HeteroGraph::load(&stage_dir(loaded, Stage::BuildGraph).join("graph.json"))?;
    let edges = read_edges(&stage_dir(loaded, Stage::Annotate).join("edges.csv"))?;
    let (usable, skipped): (Vec<LabeledEdge>, Vec<LabeledEdge>) =
        edges.into_iter().partition(|e| in_graph(&g, e));
    if !skipped.is_empty() {
        log::warn!(
            "{} labeled edges reference nodes outside the graph",
            skipped.len()
        );
    }
    let split = split_edges(&usable, c.split, c.seed)?;
    let mut hp = c.gnn.clone();
    hp.seed = c.seed;
    let model = init_model(&GraphSchema::of(&g), &hp, c.seed)?;
    let outcome = train(&model, &g, &split, &hp)?;
    outcome.model.save(&out.join("model.bin"))?;
    write_table(
        &out.join("history.csv"),
        &["epoch", "train_loss", "val_accuracy", "val_macro_f1"],
        outcome.history.iter().map(|r| {
            vec![
                r.epoch.to_string(),
                num(r.train_loss),
                num(r.val_accuracy),
                num(r.val_macro_f1),
            ]
        }),
    )?;
    write_json(&out.join("split.json"), &split)?;
    let score = |set: &[LabeledEdge]| -> Result<serde_json::Value, CliError> {
        Ok(if set.is_empty() {
            json!(null)
        } else {
            serde_json::to_value(evaluate_model(&outcome.model, &g, set)?)?
        })
    };
    write_json(
        &out.join("metrics.json"),
        &json!({
            "parameters": outcome.model.num_parameters(),
            "best_epoch": outcome.best_epoch,
            "diverged": outcome.diverged,
            "edges_used": usable.len(),
            "edges_skipped": skipped.len(),
            "split": [split.train.len(), split.validation.len(), split.test.len()],
            "validation": score(&split.validation)?,
            "test": score(&split.test)?,
        }),
    )
}

const THRESHOLD_SWEEP: [f64; 4] = [0.5, 0.58, 0.7, 0.9];

fn label(loaded: &Loaded, out: &Path) -> Result<(), CliError> {
    let threshold = loaded.config.proxy_threshold;
    let g = HeteroGraph::load(&stage_dir(loaded, Stage::BuildGraph).join("graph.json"))?;
    let model = GnnModel::load(&stage_dir(loaded, Stage::TrainGnn).join("model.bin"))?;
    let split: EdgeSplit = read_json(&stage_dir(loaded, Stage::TrainGnn).join("split.json"))?;
    let edges = read_edges(&stage_dir(loaded, Stage::Annotate).join("edges.csv"))?;

    let labeled: BTreeSet<(String, BillId)> = edges
        .iter()
        .map(|e| (e.client_id.clone(), e.bill_id))
        .collect();
    let mut candidates = BTreeSet::new();
    for (client, bill) in g.client_bill_pairs() {
        let bill: BillId = bill.parse()?;
        if !labeled.contains(&(client.clone(), bill)) {
            candidates.insert((client, bill));
        }
    }
    let candidates: Vec<(String, BillId)> = candidates.into_iter().collect();
    let preds = forward(&model, &g, &candidates)?;
    let proxies = proxy_labels(&preds, threshold);
    let mut merged = edges.clone();
    merged.extend(proxies.iter().cloned());
    let labels = dedupe_positions(&merged);
    write_edges(&out.join("labels.csv"), &labels)?;
    let kept: BTreeSet<(&str, BillId)> = proxies
        .iter()
        .map(|e| (e.client_id.as_str(), e.bill_id))
        .collect();
    write_table(
        &out.join("predictions.csv"),
        &[
            "client_id",
            "bill_id",
            "p_support",
            "p_oppose",
            "p_engage",
            "argmax",
            "kept",
        ],
        preds.iter().map(|p| {
            vec![
                p.client_id.clone(),
                p.bill_id.to_string(),
                num(p.probs[CoarseLabel::Support.index()]),
                num(p.probs[CoarseLabel::Oppose.index()]),
                num(p.probs[CoarseLabel::Engage.index()]),
                p.argmax.as_str().to_string(),
                kept.contains(&(p.client_id.as_str(), p.bill_id))
                    .to_string(),
            ]
        }),
    )?;

    // Confidence cutoff separating correct from incorrect test predictions.
    let test_pairs: Vec<(String, BillId)> = split
        .test
        .iter()
        .map(|e| (e.client_id.clone(), e.bill_id))
        .collect();
    let test_preds = forward(&model, &g, &test_pairs)?;
    let scores: Vec<f64> = test_preds
        .iter()
        .map(|p| p.probs[p.argmax.index()])
        .collect();
    let correct: Vec<bool> = test_preds
        .iter()
        .zip(&split.test)
        .map(|(p, e)| p.argmax == e.label)
        .collect();
    let youden = youden_threshold(&scores, &correct).ok();

    let mut by_source: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &labels {
        *by_source.entry(e.source.as_str()).or_default() += 1;
    }
    let sweep: BTreeMap<String, usize> = THRESHOLD_SWEEP
        .iter()
        .map(|t| (format!("{t}"), proxy_labels(&preds, *t).len()))
        .collect();
    write_json(
        &out.join("summary.json"),
        &json!({
            "candidates": candidates.len(),
            "threshold": threshold,
            "kept": proxies.len(),
            "kept_by_threshold": sweep,
            "youden_threshold": youden,
            "labels": labels.len(),
            "labels_by_source": by_source,
        }),
    )
}

fn irt(loaded: &Loaded, out: &Path) -> Result<(), CliError> {
    let s = &loaded.config.irt;
    let edges = read_edges(&stage_dir(loaded, Stage::Label).join("labels.csv"))?;
    let m = build_response_matrix(&edges);
    let pruned = prune_matrix(&m, s.min_row, s.min_col)?;
    let quad = QuadratureSpec::rectangle(s.nodes, s.half_width);
    let model = fit_graded(&pruned, &quad, s.max_iter, s.tol)?;
    let est = eap_scores(&model, &pruned, &quad);
    write_table(
        &out.join("lpscores.csv"),
        &["group_id", "theta", "se"],
        pruned
            .row_ids
            .iter()
            .zip(&est)
            .map(|(g, e)| vec![g.clone(), num(e.theta), num(e.se)]),
    )?;
    write_table(
        &out.join("bill_scores.csv"),
        &["bill_id", "a", "b"],
        model
            .bill_ids
            .iter()
            .zip(&model.items)
            .map(|(b, it)| vec![b.to_string(), num(it.a), num(it.b)]),
    )?;
    let ll = &model.log_likelihood;
    let se = est.iter().map(|e| e.se);
    write_json(
        &out.join("summary.json"),
        &json!({
            "groups_before_pruning": m.num_rows(),
            "bills_before_pruning": m.num_cols(),
            "groups": pruned.num_rows(),
            "bills": pruned.num_cols(),
            "observed": pruned.num_observed(),
            "dropped_items": model.dropped.iter().map(|b| b.to_string()).collect::<Vec<_>>(),
            "converged": model.converged,
            "iterations": model.iterations,
            "log_likelihood": ll.last(),
            "log_likelihood_monotone": ll.windows(2).all(|w| w[1] >= w[0] - 1e-8),
            "reliability": eap_reliability(&est).ok(),
            "se_min": se.clone().fold(f64::INFINITY, f64::min),
            "se_max": se.fold(f64::NEG_INFINITY, f64::max),
            "orientation_ok": orientation_ok(&pruned, &est),
        }),
    )
}

fn analyze(loaded: &Loaded, out: &Path) -> Result<(), CliError> {
    let c = &loaded.config;
    let data = load_ingested(loaded)?;
    let annotations: Vec<AnnotationRecord> =
        read_jsonl(&stage_dir(loaded, Stage::Annotate).join("annotations.jsonl"))?;
    let labels = read_edges(&stage_dir(loaded, Stage::Label).join("labels.csv"))?;
    let lpscores = read_scores(
        &stage_dir(loaded, Stage::Irt).join("lpscores.csv"),
        "group_id",
        "theta",
    )?;
    let mut written = vec![
        "stage_frequency.csv",
        "subject_ratios.csv",
        "industry_lpscores.csv",
    ];

    stage_tables(&data, &annotations, out)?;

    let ratios = position_ratio_by_subject(&labels, &data.bills);
    write_table(
        &out.join("subject_ratios.csv"),
        &[
            "subject",
            "unique_bills",
            "avg_lobbying",
            "support",
            "oppose",
            "engage",
        ],
        ratios.iter().map(|r| {
            vec![
                r.subject.clone(),
                r.unique_bills.to_string(),
                num(r.avg_lobbying),
                num(r.support),
                num(r.oppose),
                num(r.engage),
            ]
        }),
    )?;

    let groups: HashMap<&str, &EntityRecord> = data
        .entities
        .iter()
        .filter(|e| e.kind == EntityKind::InterestGroup)
        .map(|e| (e.id.as_str(), e))
        .collect();
    let se = read_scores(
        &stage_dir(loaded, Stage::Irt).join("lpscores.csv"),
        "group_id",
        "se",
    )?;
    write_table(
        &out.join("industry_lpscores.csv"),
        &["group_id", "industry", "theta", "se"],
        lpscores.iter().zip(&se).map(|((g, t), (_, s))| {
            let industry = groups
                .get(g.as_str())
                .and_then(|e| e.attr("industry"))
                .unwrap_or("")
                .to_string();
            vec![g.clone(), industry, num(*t), num(*s)]
        }),
    )?;

    let mut summary = json!({});
    if let Some(p) = &c.paths.cfscores {
        let cf: HashMap<String, f64> = read_scores(&loaded.path(p), "group_id", "cfscore")?
            .into_iter()
            .collect();
        let (x, y): (Vec<f64>, Vec<f64>) = lpscores
            .iter()
            .filter_map(|(g, t)| cf.get(g).map(|v| (*t, *v)))
            .unzip();
        let r = pearson(&x, &y).ok();
        write_json(
            &out.join("cfscore_correlation.json"),
            &json!({ "n": x.len(), "pearson": r }),
        )?;
        written.push("cfscore_correlation.json");
        summary["cfscore_pearson"] = json!(r);
    }

    if let Some(p) = &c.paths.firms {
        let firms = read_firms(&loaded.path(p))?;
        let panel = firm_years(&firms, &data.reports, &annotations);
        firm_models(loaded, &panel, out)?;
        written.extend(["logistic.csv", "dirichlet.csv", "qoi.csv"]);
        summary["firm_years"] = json!(panel.len());
        summary["lobbied_firm_years"] = json!(panel.iter().filter(|f| f.lobbied).count());
    }
    written.sort();
    summary["tables"] = json!(written);
    write_json(&out.join("summary.json"), &summary)
}

fn stage_tables(
    data: &Ingested,
    annotations: &[AnnotationRecord],
    out: &Path,
) -> Result<(), CliError> {
    let reports: HashMap<&str, &RawReport> = data
        .reports
        .iter()
        .map(|r| (r.report_id.as_str(), r))
        .collect();
    let bills: HashMap<BillId, &Bill> = data.bills.iter().map(|b| (b.bill_id, b)).collect();
    let mut events: HashMap<(String, BillId), StageEvent> = HashMap::new();
    for a in annotations {
        let key = (a.line.report_id.clone(), a.bill_id);
        if events.contains_key(&key) {
            continue;
        }
        let (Some(r), Some(b)) = (
            reports.get(a.line.report_id.as_str()),
            bills.get(&a.bill_id),
        ) else {
            continue;
        };
        if let Some(ev) = map_report_to_stage(r, b)? {
            events.insert(key, ev);
        }
    }
    let states: BTreeSet<&str> = data.bills.iter().map(|b| b.final_state.as_str()).collect();
    let filters = std::iter::once(None).chain(states.into_iter().map(Some));
    let mut rows = Vec::new();
    for filter in filters {
        let t = stage_frequency(annotations, &events, &bills, filter);
        let name = filter.unwrap_or("ALL").to_string();
        for (stage, cells) in &t.rows {
            let mut r = vec![name.clone(), stage.to_string()];
            r.extend(cells.iter().map(usize::to_string));
            r.push(t.row_total(*stage).to_string());
            rows.push(r);
        }
        let mut r = vec![name.clone(), "Total".to_string()];
        r.extend(t.column_totals.iter().map(usize::to_string));
        r.push(t.total.to_string());
        rows.push(r);
    }
    let mut header = vec!["final_state", "stage"];
    let lower: Vec<String> = FINE_LABELS
        .iter()
        .map(|l| l.as_str().to_lowercase())
        .collect();
    header.extend(lower.iter().map(String::as_str));
    header.push("total");
    write_table(&out.join("stage_frequency.csv"), &header, rows)
}

fn firm_models(loaded: &Loaded, panel: &[FirmYear], out: &Path) -> Result<(), CliError> {
    let a = &loaded.config.analysis;
    let control = FitControl {
        max_iter: a.max_iter,
        tol: a.tol,
    };
    let spec = a.design.clone();

    let logit_stat = |rows: &[&FirmYear]| -> positionforge::error::Result<Vec<f64>> {
        let owned: Vec<FirmYear> = rows.iter().map(|r| (*r).clone()).collect();
        let d = build_design(&owned, &spec)?;
        let y: Vec<bool> = owned.iter().map(|r| r.lobbied).collect();
        let clusters: Vec<String> = owned.iter().map(|r| r.firm_id.clone()).collect();
        let fit = logistic_fit(&d, &y, &clusters)?;
        qoi_delta(
            &QoiModel::Logistic(&fit),
            &d,
            analysis::EMPLOYMENT,
            a.p_hi,
            a.p_lo,
        )
    };
    let dirichlet_data =
        |rows: &[&FirmYear]| -> positionforge::error::Result<(DesignMatrix, ndarray::Array2<f64>)> {
            let owned: Vec<FirmYear> = rows
                .iter()
                .filter(|r| r.proportions.is_some())
                .map(|r| (*r).clone())
                .collect();
            let d = build_design(&owned, &spec)?;
            let mut y = ndarray::Array2::zeros((owned.len(), FINE_LABELS.len()));
            for (i, r) in owned.iter().enumerate() {
                for (j, v) in r.proportions.expect("filtered").iter().enumerate() {
                    y[[i, j]] = *v;
                }
            }
            let n = owned.len();
            Ok((d, smooth_proportions(&y, n)))
        };
    let dirichlet_stat = |rows: &[&FirmYear]| -> positionforge::error::Result<Vec<f64>> {
        let (d, y) = dirichlet_data(rows)?;
        let fit = dirichlet_fit(&d, &y, control)?;
        if !fit.converged {
            return Err(Error::Degenerate("Dirichlet fit did not converge".into()));
        }
        qoi_delta(
            &QoiModel::Dirichlet(&fit),
            &d,
            analysis::EMPLOYMENT,
            a.p_hi,
            a.p_lo,
        )
    };

    let all: Vec<&FirmYear> = panel.iter().collect();
    let owned: Vec<FirmYear> = panel.to_vec();
    let d = build_design(&owned, &spec)?;
    let y: Vec<bool> = owned.iter().map(|r| r.lobbied).collect();
    let clusters: Vec<String> = owned.iter().map(|r| r.firm_id.clone()).collect();
    let logit = logistic_fit(&d, &y, &clusters)?;
    write_table(
        &out.join("logistic.csv"),
        &["term", "coef", "se", "dropped"],
        logit.columns.iter().enumerate().map(|(i, col)| {
            vec![
                col.clone(),
                num(logit.coef[i]),
                num(logit.se[i]),
                logit.dropped.contains(col).to_string(),
            ]
        }),
    )?;

    let (dd, dy) = dirichlet_data(&all)?;
    let dir = dirichlet_fit(&dd, &dy, control)?;
    let mut rows = Vec::new();
    for (j, outcome) in FINE_LABELS.iter().enumerate() {
        for (p, col) in dir.columns.iter().enumerate() {
            rows.push(vec![
                outcome.as_str().to_string(),
                col.clone(),
                num(dir.beta[[j, p]]),
            ]);
        }
    }
    write_table(
        &out.join("dirichlet.csv"),
        &["outcome", "term", "coef"],
        rows,
    )?;

    let seed = loaded.config.seed;
    let logit_ci = block_bootstrap(panel, |r| r.firm_id.as_str(), logit_stat, a.bootstrap, seed)?;
    let dir_ci = block_bootstrap(
        panel,
        |r| r.firm_id.as_str(),
        dirichlet_stat,
        a.bootstrap,
        seed,
    )?;
    let row = |model: &str, outcome: &str, q: &QoiResult| {
        vec![
            model.to_string(),
            outcome.to_string(),
            num(q.delta),
            num(q.ci90.0),
            num(q.ci90.1),
            num(q.ci95.0),
            num(q.ci95.1),
            q.n_boot.to_string(),
            q.failed.to_string(),
        ]
    };
    let mut rows = vec![row("logistic", "lobbied", &logit_ci[0])];
    for (l, q) in FINE_LABELS.iter().zip(&dir_ci) {
        rows.push(row("dirichlet", &l.as_str().to_lowercase(), q));
    }
    write_table(
        &out.join("qoi.csv"),
        &[
            "model", "outcome", "delta", "ci90_lo", "ci90_hi", "ci95_lo", "ci95_hi", "n_boot",
            "failed",
        ],
        rows,
    )?;
    write_json(
        &out.join("fit_diagnostics.json"),
        &json!({
            "logistic": { "converged": logit.converged, "iterations": logit.iterations, "separation": logit.separation, "log_likelihood": logit.log_likelihood, "dropped": logit.dropped },
            "dirichlet": { "converged": dir.converged, "iterations": dir.iterations, "log_likelihood": dir.log_likelihood, "rows": dy.nrows() },
        }),
    )
}

/// Writes the bundled synthetic corpus, a gold fixture and a pipeline
/// config into `dir`.
pub fn write_synthetic(dir: &Path, seed: u64) -> Result<(), CliError> {
    use positionforge::synth::{generate_corpus, write_corpus, CorpusSpec};
    let corpus = generate_corpus(&CorpusSpec::default(), seed);
    write_corpus(&corpus, dir)?;
    std::fs::write(dir.join("gold.csv"), GOLD)?;
    let config = json!({
        "paths": {
            "reports": "reports.jsonl",
            "bills": "bills.jsonl",
            "entities": "entities.csv",
            "labels": "labels.csv",
            "gold": "gold.csv",
            "firms": "firms.csv",
            "cfscores": "cfscores.csv",
            "cache": "cache",
            "output": "output"
        },
        "seed": seed,
        "classifier": "rule",
        "graph_config": 8,
        "gnn": positionforge::gnn::GnnHyperParams::default(),
        "proxy_threshold": 0.9,
        "irt": crate::config::IrtSettings::default(),
        "analysis": { "bootstrap": 200 }
    });
    write_json(&dir.join("pipeline.json"), &config)
}

const GOLD: &str = "\
bill_id,text,label
H.R.1421@115,\"S. 568, H.R. 1421, Improving Access to Medicare Coverage Act - Discussed our support for/endorsed bill.\",Support
H.R.1249@112,\"defeat S. 23 and H.R. 1249, and pass funding only bill for USPTO.\",Oppose
H.R.9@114,\"Advocacy for changes to H.R. 9, the Innovation Act regarding the potential impact of provisions on the ability of universities to protect the rights of faculty and support research spin-outs.\",Amend
S.744@113,\"Educated members of Congress and administration officials about the need to reform the immigration process and expand the number of worker-sponsored visas for highly skilled workers. Legislation watched includes: S 169, S 744, HR 2131, HR 459, HR 15 and S 600.\",Monitor
";
