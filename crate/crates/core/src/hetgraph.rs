//! Typed lobbying + legislative graph in one of the 17 published
//! configurations, plus stratified 7:1:2 edge splitting.
//!
//! Edges are stored once per relation in the direction given by
//! [`Relation::endpoints`]; the message-passing model adds the reverse
//! direction itself.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotate::{CoarseLabel, LabeledEdge};
use crate::error::{Error, Result};
use crate::ingest::{
    bill_text, build_text_features, encode_bill, encode_entity, entity_text, segment_report, Bill,
    BillId, EntityKind, EntityRecord, LayoutSpec, NodeKind, RawReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// interest group lobbied on bill
    ClientBill,
    /// related bill
    BillBill,
    BillSponsor,
    BillCosponsor,
    ClientRegistrant,
    RegistrantBill,
    ClientLobbyist,
    LobbyistBill,
    LobbyistLegislator,
    LobbyistRegistrant,
    /// sponsor–cosponsor pairs
    LegislatorLegislator,
}

impl Relation {
    pub const ALL: [Relation; 11] = [
        Relation::ClientBill,
        Relation::BillBill,
        Relation::BillSponsor,
        Relation::BillCosponsor,
        Relation::ClientRegistrant,
        Relation::RegistrantBill,
        Relation::ClientLobbyist,
        Relation::LobbyistBill,
        Relation::LobbyistLegislator,
        Relation::LobbyistRegistrant,
        Relation::LegislatorLegislator,
    ];

    /// (source kind, destination kind) of stored edges.
    pub fn endpoints(self) -> (NodeKind, NodeKind) {
        use NodeKind::*;
        match self {
            Relation::ClientBill => (InterestGroup, Bill),
            Relation::BillBill => (Bill, Bill),
            Relation::BillSponsor | Relation::BillCosponsor => (Bill, Legislator),
            Relation::ClientRegistrant => (InterestGroup, Registrant),
            Relation::RegistrantBill => (Registrant, Bill),
            Relation::ClientLobbyist => (InterestGroup, Lobbyist),
            Relation::LobbyistBill => (Lobbyist, Bill),
            Relation::LobbyistLegislator => (Lobbyist, Legislator),
            Relation::LobbyistRegistrant => (Lobbyist, Registrant),
            Relation::LegislatorLegislator => (Legislator, Legislator),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::ClientBill => "client_bill",
            Relation::BillBill => "bill_bill",
            Relation::BillSponsor => "bill_sponsor",
            Relation::BillCosponsor => "bill_cosponsor",
            Relation::ClientRegistrant => "client_registrant",
            Relation::RegistrantBill => "registrant_bill",
            Relation::ClientLobbyist => "client_lobbyist",
            Relation::LobbyistBill => "lobbyist_bill",
            Relation::LobbyistLegislator => "lobbyist_legislator",
            Relation::LobbyistRegistrant => "lobbyist_registrant",
            Relation::LegislatorLegislator => "legislator_legislator",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Row of the graph-configuration table, 1..=17.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct GraphConfigId(u8);

/// Optional components: sponsor, legislator, registrant, lobbyist, related bill.
const CONFIG_ROWS: [(&str, [bool; 5]); 17] = [
    (
        "Base Graph (Interest Group + Bill)",
        [false, false, false, false, false],
    ),
    ("+ sponsor", [true, false, false, false, false]),
    (
        "+ legislator (sponsor + cosponsor)",
        [true, true, false, false, false],
    ),
    ("+ registrant", [false, false, true, false, false]),
    ("+ lobbyist", [false, false, false, true, false]),
    ("+ relatedBill", [false, false, false, false, true]),
    ("+ legislator-registrant", [true, true, true, false, false]),
    ("+ legislator-lobbyist", [true, true, false, true, false]),
    ("+ legislator-relatedBill", [true, true, false, false, true]),
    ("+ registrant-lobbyist", [false, false, true, true, false]),
    (
        "+ registrant-relatedBill",
        [false, false, true, false, true],
    ),
    ("+ lobbyist-relatedBill", [false, false, false, true, true]),
    (
        "+ legislator-registrant-lobbyist",
        [true, true, true, true, false],
    ),
    (
        "+ legislator-registrant-relatedBill",
        [true, true, true, false, true],
    ),
    (
        "+ legislator-lobbyist-relatedBill",
        [true, true, false, true, true],
    ),
    (
        "+ registrant-lobbyist-relatedBill",
        [false, false, true, true, true],
    ),
    (
        "+ legislator-registrant-lobbyist-relatedBill",
        [true, true, true, true, true],
    ),
];

impl GraphConfigId {
    pub const SELECTED: GraphConfigId = GraphConfigId(8);

    pub fn new(index: u8) -> Result<Self> {
        if (1..=17).contains(&index) {
            Ok(Self(index))
        } else {
            Err(Error::invalid(format!(
                "graph configuration {index} not in 1..=17"
            )))
        }
    }

    pub fn all() -> impl Iterator<Item = GraphConfigId> {
        (1..=17).map(GraphConfigId)
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn name(self) -> &'static str {
        CONFIG_ROWS[self.0 as usize - 1].0
    }

    fn flags(self) -> [bool; 5] {
        CONFIG_ROWS[self.0 as usize - 1].1
    }

    pub fn node_kinds(self) -> BTreeSet<NodeKind> {
        let [sponsor, legislator, registrant, lobbyist, _] = self.flags();
        let mut k = BTreeSet::from([NodeKind::InterestGroup, NodeKind::Bill]);
        if sponsor || legislator {
            k.insert(NodeKind::Legislator);
        }
        if registrant {
            k.insert(NodeKind::Registrant);
        }
        if lobbyist {
            k.insert(NodeKind::Lobbyist);
        }
        k
    }

    pub fn relations(self) -> BTreeSet<Relation> {
        let [sponsor, legislator, registrant, lobbyist, related] = self.flags();
        let mut r = BTreeSet::from([Relation::ClientBill]);
        if sponsor {
            r.insert(Relation::BillSponsor);
        }
        if legislator {
            r.extend([Relation::BillCosponsor, Relation::LegislatorLegislator]);
        }
        if registrant {
            r.extend([Relation::ClientRegistrant, Relation::RegistrantBill]);
        }
        if lobbyist {
            r.extend([Relation::ClientLobbyist, Relation::LobbyistBill]);
        }
        if lobbyist && legislator {
            r.insert(Relation::LobbyistLegislator);
        }
        if lobbyist && registrant {
            r.insert(Relation::LobbyistRegistrant);
        }
        if related {
            r.insert(Relation::BillBill);
        }
        r
    }

    /// Checkmark containment between table rows.
    pub fn is_subset_of(self, other: GraphConfigId) -> bool {
        self.flags().iter().zip(other.flags()).all(|(a, b)| !a || b)
    }
}

impl TryFrom<u8> for GraphConfigId {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        GraphConfigId::new(v)
    }
}

impl From<GraphConfigId> for u8 {
    fn from(c: GraphConfigId) -> u8 {
        c.0
    }
}

/// Nodes of one kind with a dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "NodeSetRepr", into = "NodeSetRepr")]
pub struct NodeSet {
    pub ids: Vec<String>,
    pub width: usize,
    pub features: Vec<f64>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct NodeSetRepr {
    ids: Vec<String>,
    width: usize,
    features: Vec<Vec<f64>>,
}

impl From<NodeSetRepr> for NodeSet {
    fn from(r: NodeSetRepr) -> Self {
        NodeSet::new(r.ids, r.width, r.features.concat())
    }
}

impl From<NodeSet> for NodeSetRepr {
    fn from(n: NodeSet) -> Self {
        let features = if n.width == 0 {
            vec![Vec::new(); n.ids.len()]
        } else {
            n.features.chunks(n.width).map(<[f64]>::to_vec).collect()
        };
        NodeSetRepr {
            ids: n.ids,
            width: n.width,
            features,
        }
    }
}

impl NodeSet {
    pub fn new(ids: Vec<String>, width: usize, features: Vec<f64>) -> Self {
        assert_eq!(ids.len() * width, features.len(), "feature matrix shape");
        let index = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        Self {
            ids,
            width,
            features,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.width..(i + 1) * self.width]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeteroGraph {
    pub config: GraphConfigId,
    pub nodes: BTreeMap<NodeKind, NodeSet>,
    /// Edges as (source index, destination index) into the endpoint node sets.
    pub edges: BTreeMap<Relation, Vec<(usize, usize)>>,
}

impl HeteroGraph {
    pub fn node_set(&self, kind: NodeKind) -> Result<&NodeSet> {
        self.nodes
            .get(&kind)
            .ok_or_else(|| Error::invalid(format!("graph has no {kind} nodes")))
    }

    pub fn node_index(&self, kind: NodeKind, id: &str) -> Result<usize> {
        self.node_set(kind)?
            .position(id)
            .ok_or_else(|| Error::UnknownNode(format!("{kind}:{id}")))
    }

    /// Every endpoint must index into its node set.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        for (rel, edges) in &self.edges {
            let (s, d) = rel.endpoints();
            let (ns, nd) = (self.node_set(s)?.len(), self.node_set(d)?.len());
            for &(a, b) in edges {
                if a >= ns || b >= nd {
                    bad.push(format!("{rel}:{a}->{b}"));
                }
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Dangling(bad))
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec(self)?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let g: HeteroGraph = serde_json::from_slice(&std::fs::read(path)?)?;
        g.validate()?;
        Ok(g)
    }

    /// Client–bill pairs present as lobbying edges.
    pub fn client_bill_pairs(&self) -> Vec<(String, String)> {
        let (Some(c), Some(b)) = (
            self.nodes.get(&NodeKind::InterestGroup),
            self.nodes.get(&NodeKind::Bill),
        ) else {
            return Vec::new();
        };
        self.edges
            .get(&Relation::ClientBill)
            .map(|es| {
                es.iter()
                    .map(|&(i, j)| (c.ids[i].clone(), b.ids[j].clone()))
                    .collect()
            })
            .unwrap_or_default()
    }
}

/// Per-kind node features: one-hot blocks plus a per-kind tf-idf text block.
pub fn compute_node_features(
    entities: &[EntityRecord],
    bills: &[Bill],
    layout: &LayoutSpec,
    strict: bool,
) -> Result<BTreeMap<NodeKind, NodeSet>> {
    let mut out = BTreeMap::new();
    for kind in EntityKind::ALL {
        let node_kind: NodeKind = kind.into();
        let members: Vec<&EntityRecord> = entities.iter().filter(|e| e.kind == kind).collect();
        let width = layout.width(node_kind)?;
        let text = if layout.kind(node_kind)?.text && !members.is_empty() {
            let corpus: Vec<(String, String)> = members
                .iter()
                .map(|e| (e.id.clone(), entity_text(e)))
                .collect();
            Some(build_text_features(&corpus, layout.text_dim))
        } else {
            None
        };
        let mut features = Vec::with_capacity(members.len() * width);
        for e in &members {
            let t = text.as_ref().and_then(|t| t.get(&e.id));
            features.extend(encode_entity(e, t, layout, strict)?.values);
        }
        out.insert(
            node_kind,
            NodeSet::new(
                members.iter().map(|e| e.id.clone()).collect(),
                width,
                features,
            ),
        );
    }
    let legislators: HashMap<String, &EntityRecord> = entities
        .iter()
        .filter(|e| e.kind == EntityKind::Legislator)
        .map(|e| (e.id.clone(), e))
        .collect();
    let width = layout.width(NodeKind::Bill)?;
    let corpus: Vec<(String, String)> = bills
        .iter()
        .map(|b| (b.bill_id.to_string(), bill_text(b)))
        .collect();
    let text = (!bills.is_empty()).then(|| build_text_features(&corpus, layout.text_dim));
    let mut features = Vec::with_capacity(bills.len() * width);
    for b in bills {
        let t = text.as_ref().and_then(|t| t.get(&b.bill_id.to_string()));
        features.extend(encode_bill(b, &legislators, t, layout, strict)?.values);
    }
    out.insert(
        NodeKind::Bill,
        NodeSet::new(
            corpus.into_iter().map(|(id, _)| id).collect(),
            width,
            features,
        ),
    );
    Ok(out)
}

struct EdgeCollector<'a> {
    nodes: &'a BTreeMap<NodeKind, NodeSet>,
    relations: BTreeSet<Relation>,
    edges: BTreeMap<Relation, BTreeSet<(usize, usize)>>,
    dangling: BTreeSet<String>,
}

impl EdgeCollector<'_> {
    fn add(&mut self, rel: Relation, src: &str, dst: &str) {
        if !self.relations.contains(&rel) {
            return;
        }
        let (sk, dk) = rel.endpoints();
        let s = self.nodes.get(&sk).and_then(|n| n.position(src));
        let d = self.nodes.get(&dk).and_then(|n| n.position(dst));
        match (s, d) {
            (Some(s), Some(d)) => {
                self.edges.entry(rel).or_default().insert((s, d));
            }
            (s, d) => {
                if s.is_none() {
                    self.dangling.insert(format!("{sk}:{src}"));
                }
                if d.is_none() {
                    self.dangling.insert(format!("{dk}:{dst}"));
                }
            }
        }
    }
}

/// Assembles the graph for `config` from precomputed node features.
///
/// Client–bill edges come from report lines mentioning bills; registrant
/// and lobbyist edges from report rosters; lobbyist–legislator edges from
/// covered positions; sponsor, cosponsor, legislator–legislator and
/// related-bill edges from bill metadata. References to unknown nodes are
/// an error when `strict`, otherwise skipped with a warning.
pub fn build_graph(
    all_nodes: &BTreeMap<NodeKind, NodeSet>,
    reports: &[RawReport],
    bills: &[Bill],
    config: GraphConfigId,
    strict: bool,
) -> Result<HeteroGraph> {
    let kinds = config.node_kinds();
    let nodes: BTreeMap<NodeKind, NodeSet> = kinds
        .iter()
        .map(|k| {
            let set = all_nodes
                .get(k)
                .cloned()
                .unwrap_or_else(|| NodeSet::new(Vec::new(), 0, Vec::new()));
            (*k, set)
        })
        .collect();
    let mut c = EdgeCollector {
        nodes: &nodes,
        relations: config.relations(),
        edges: BTreeMap::new(),
        dangling: BTreeSet::new(),
    };
    for r in reports {
        let mut bills_in_report: Vec<BillId> = Vec::new();
        for line in segment_report(r) {
            for b in line.bill_refs {
                if !bills_in_report.contains(&b) {
                    bills_in_report.push(b);
                }
            }
        }
        for b in &bills_in_report {
            let b = b.to_string();
            c.add(Relation::ClientBill, &r.client_id, &b);
            c.add(Relation::RegistrantBill, &r.registrant_id, &b);
            for l in &r.lobbyist_ids {
                c.add(Relation::LobbyistBill, l, &b);
            }
        }
        c.add(Relation::ClientRegistrant, &r.client_id, &r.registrant_id);
        for l in &r.lobbyist_ids {
            c.add(Relation::ClientLobbyist, &r.client_id, l);
            c.add(Relation::LobbyistRegistrant, l, &r.registrant_id);
        }
        for cp in &r.covered_positions {
            c.add(
                Relation::LobbyistLegislator,
                &cp.lobbyist_id,
                &cp.legislator_id,
            );
        }
    }
    for b in bills {
        let id = b.bill_id.to_string();
        c.add(Relation::BillSponsor, &id, &b.sponsor_id);
        for co in &b.cosponsor_ids {
            c.add(Relation::BillCosponsor, &id, co);
            c.add(Relation::LegislatorLegislator, &b.sponsor_id, co);
        }
        for rel in &b.related_bill_ids {
            c.add(Relation::BillBill, &id, &rel.to_string());
        }
    }
    let EdgeCollector {
        edges,
        dangling,
        relations,
        ..
    } = c;
    if !dangling.is_empty() {
        if strict {
            return Err(Error::Dangling(dangling.into_iter().collect()));
        }
        log::warn!("skipped edges touching {} unknown nodes", dangling.len());
    }
    let mut edges: BTreeMap<Relation, Vec<(usize, usize)>> = edges
        .into_iter()
        .map(|(r, e)| (r, e.into_iter().collect()))
        .collect();
    for r in relations {
        edges.entry(r).or_default();
    }
    let g = HeteroGraph {
        config,
        nodes,
        edges,
    };
    g.validate()?;
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub nodes: BTreeMap<NodeKind, usize>,
    pub edges: BTreeMap<Relation, usize>,
}

pub fn graph_stats(g: &HeteroGraph) -> GraphStats {
    GraphStats {
        nodes: g.nodes.iter().map(|(k, n)| (*k, n.len())).collect(),
        edges: g.edges.iter().map(|(r, e)| (*r, e.len())).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSplit {
    pub train: Vec<LabeledEdge>,
    pub validation: Vec<LabeledEdge>,
    pub test: Vec<LabeledEdge>,
    pub seed: u64,
}

const MIN_STRATUM: usize = 10;

/// Seeded train/validation/test split, stratified by label.
///
/// Global sizes are `round(n·r_train)`, `round(n·r_val)` and the rest. Each
/// class gets its floor share and leftover items go to the (class, split)
/// cells with the largest fractional remainders. If any present class has
/// fewer than ten items the split falls back to a plain shuffle.
pub fn split_edges(
    labeled: &[LabeledEdge],
    ratios: (u32, u32, u32),
    seed: u64,
) -> Result<EdgeSplit> {
    if labeled.is_empty() {
        return Err(Error::invalid("cannot split an empty labeled set"));
    }
    let total_ratio = (ratios.0 + ratios.1 + ratios.2) as f64;
    if total_ratio == 0.0 {
        return Err(Error::invalid("split ratios sum to zero"));
    }
    let r = [
        ratios.0 as f64 / total_ratio,
        ratios.1 as f64 / total_ratio,
        ratios.2 as f64 / total_ratio,
    ];
    let n = labeled.len();
    let train_n = (n as f64 * r[0]).round() as usize;
    let val_n = ((n as f64 * r[1]).round() as usize).min(n - train_n);
    let targets = [train_n, val_n, n - train_n - val_n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut by_class: Vec<Vec<&LabeledEdge>> = CoarseLabel::ALL
        .iter()
        .map(|c| labeled.iter().filter(|e| e.label == *c).collect())
        .collect();
    let stratify = by_class
        .iter()
        .all(|g| g.is_empty() || g.len() >= MIN_STRATUM);
    let mut parts: [Vec<LabeledEdge>; 3] = Default::default();

    if !stratify {
        log::warn!(
            "a class has fewer than {MIN_STRATUM} labeled edges; splitting without stratification"
        );
        let mut all: Vec<&LabeledEdge> = labeled.iter().collect();
        all.shuffle(&mut rng);
        let mut it = all.into_iter();
        for (p, t) in parts.iter_mut().zip(targets) {
            p.extend(it.by_ref().take(t).cloned());
        }
    } else {
        let k = by_class.len();
        let mut alloc = vec![[0usize; 3]; k];
        let mut frac = Vec::new();
        for (c, g) in by_class.iter().enumerate() {
            for s in 0..3 {
                let ideal = g.len() as f64 * r[s];
                alloc[c][s] = ideal.floor() as usize;
                frac.push((ideal - ideal.floor(), c, s));
            }
        }
        let mut class_left: Vec<usize> = (0..k)
            .map(|c| by_class[c].len() - alloc[c].iter().sum::<usize>())
            .collect();
        let mut split_left: Vec<usize> = (0..3)
            .map(|s| targets[s] - (0..k).map(|c| alloc[c][s]).sum::<usize>())
            .collect();
        frac.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        for &(_, c, s) in &frac {
            if class_left[c] > 0 && split_left[s] > 0 {
                alloc[c][s] += 1;
                class_left[c] -= 1;
                split_left[s] -= 1;
            }
        }
        for c in 0..k {
            for s in 0..3 {
                while class_left[c] > 0 && split_left[s] > 0 {
                    alloc[c][s] += 1;
                    class_left[c] -= 1;
                    split_left[s] -= 1;
                }
            }
        }
        for (c, g) in by_class.iter_mut().enumerate() {
            g.shuffle(&mut rng);
            let mut it = g.iter();
            for s in 0..3 {
                parts[s].extend(it.by_ref().take(alloc[c][s]).map(|e| (*e).clone()));
            }
        }
    }
    let [train, validation, test] = parts;
    Ok(EdgeSplit {
        train,
        validation,
        test,
        seed,
    })
}
