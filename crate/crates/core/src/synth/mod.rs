//! Seeded synthetic data: a planted-community graph for classifier checks
//! and a small end-to-end lobbying corpus.

mod corpus;

pub use corpus::{
    files, generate_corpus, write_corpus, Corpus, CorpusManifest, CorpusSpec, CorpusTruth,
};

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::annotate::{CoarseLabel, LabeledEdge, Source};
use crate::hetgraph::{GraphConfigId, HeteroGraph, NodeSet, Relation};
use crate::ingest::{BillId, Chamber, NodeKind};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpec {
    pub clients: usize,
    pub bills: usize,
    pub legislators: usize,
    pub lobbyists: usize,
    pub bills_per_client: usize,
    pub feature_width: usize,
    /// Community signal added to the one-hot coordinate of each node.
    pub signal: f64,
    /// Probability that a structural edge stays inside its community.
    pub homophily: f64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            clients: 120,
            bills: 200,
            legislators: 120,
            lobbyists: 60,
            bills_per_client: 6,
            feature_width: 8,
            signal: 1.0,
            homophily: 0.9,
        }
    }
}

/// Configuration-8 graph with three latent communities. Every bill's
/// community fixes the label of each client–bill edge touching it; node
/// features are noisy community indicators and sponsor, cosponsor and
/// lobbying ties are mostly within-community.
pub fn planted_graph(spec: &PlantedSpec, seed: u64) -> (HeteroGraph, Vec<LabeledEdge>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = CoarseLabel::ALL.len();
    let community = |rng: &mut ChaCha8Rng, n: usize| -> Vec<usize> {
        (0..n).map(|_| rng.random_range(0..k)).collect()
    };
    let comm: BTreeMap<NodeKind, Vec<usize>> = [
        (NodeKind::InterestGroup, spec.clients),
        (NodeKind::Bill, spec.bills),
        (NodeKind::Legislator, spec.legislators),
        (NodeKind::Lobbyist, spec.lobbyists),
    ]
    .into_iter()
    .map(|(kind, n)| (kind, community(&mut rng, n)))
    .collect();

    let mut nodes = BTreeMap::new();
    for (&kind, cs) in &comm {
        let prefix = match kind {
            NodeKind::InterestGroup => "client",
            NodeKind::Legislator => "leg",
            NodeKind::Lobbyist => "lob",
            _ => "",
        };
        let ids: Vec<String> = (0..cs.len())
            .map(|i| match kind {
                NodeKind::Bill => BillId::new(Chamber::House, i as u32 + 1, 115).to_string(),
                _ => format!("{prefix}{i:04}"),
            })
            .collect();
        let w = spec.feature_width;
        let mut f = Vec::with_capacity(cs.len() * w);
        for &c in cs {
            for j in 0..w {
                let noise: f64 = StandardNormal.sample(&mut rng);
                f.push(noise + if j == c { spec.signal } else { 0.0 });
            }
        }
        nodes.insert(kind, NodeSet::new(ids, w, f));
    }

    let members = |kind: NodeKind, c: usize| -> Vec<usize> {
        comm[&kind]
            .iter()
            .enumerate()
            .filter(|(_, &x)| x == c)
            .map(|(i, _)| i)
            .collect()
    };
    let by_comm: BTreeMap<NodeKind, Vec<Vec<usize>>> = comm
        .keys()
        .map(|&kind| (kind, (0..k).map(|c| members(kind, c)).collect()))
        .collect();
    let pick = |rng: &mut ChaCha8Rng, kind: NodeKind, c: usize| -> usize {
        let n = comm[&kind].len();
        if rng.random::<f64>() < spec.homophily {
            if let Some(&i) = by_comm[&kind][c].choose(rng) {
                return i;
            }
        }
        rng.random_range(0..n)
    };

    let mut edges: BTreeMap<Relation, BTreeSet<(usize, usize)>> = GraphConfigId::SELECTED
        .relations()
        .into_iter()
        .map(|r| (r, BTreeSet::new()))
        .collect();
    let mut add = |r: Relation, a: usize, b: usize| {
        edges
            .get_mut(&r)
            .expect("relation in configuration")
            .insert((a, b));
    };
    for (b, &c) in comm[&NodeKind::Bill].iter().enumerate() {
        let sponsor = pick(&mut rng, NodeKind::Legislator, c);
        add(Relation::BillSponsor, b, sponsor);
        for _ in 0..3 {
            let co = pick(&mut rng, NodeKind::Legislator, c);
            if co != sponsor {
                add(Relation::BillCosponsor, b, co);
                add(Relation::LegislatorLegislator, sponsor, co);
            }
        }
    }
    for (l, &c) in comm[&NodeKind::Lobbyist].iter().enumerate() {
        for _ in 0..3 {
            add(
                Relation::LobbyistLegislator,
                l,
                pick(&mut rng, NodeKind::Legislator, c),
            );
            add(Relation::LobbyistBill, l, pick(&mut rng, NodeKind::Bill, c));
        }
    }
    let mut labeled = Vec::new();
    let bill_ids = nodes[&NodeKind::Bill].ids.clone();
    let client_ids = nodes[&NodeKind::InterestGroup].ids.clone();
    for (ci, &c) in comm[&NodeKind::InterestGroup].iter().enumerate() {
        add(
            Relation::ClientLobbyist,
            ci,
            pick(&mut rng, NodeKind::Lobbyist, c),
        );
        let mut chosen = BTreeSet::new();
        while chosen.len() < spec.bills_per_client.min(spec.bills) {
            chosen.insert(rng.random_range(0..spec.bills));
        }
        for b in chosen {
            add(Relation::ClientBill, ci, b);
            labeled.push(LabeledEdge::new(
                client_ids[ci].clone(),
                bill_ids[b].parse().expect("generated bill id"),
                CoarseLabel::from_index(comm[&NodeKind::Bill][b]),
                Source::External,
                1.0,
            ));
        }
    }
    let graph = HeteroGraph {
        config: GraphConfigId::SELECTED,
        nodes,
        edges: edges
            .into_iter()
            .map(|(r, e)| (r, e.into_iter().collect()))
            .collect(),
    };
    (graph, labeled)
}

/// Draws from a 2PL model with known parameters.
#[derive(Debug, Clone)]
pub struct IrtSimulation {
    pub matrix: crate::irt::ResponseMatrix,
    pub theta: Vec<f64>,
    pub items: Vec<crate::irt::ItemParams>,
}

/// `rows × items` responses with θ ~ N(0,1), a ~ U(0.8, 2.0),
/// b ~ U(−1.5, 1.5); each cell is observed with probability `density`.
pub fn simulate_irt(rows: usize, items: usize, density: f64, seed: u64) -> IrtSimulation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta: Vec<f64> = (0..rows).map(|_| StandardNormal.sample(&mut rng)).collect();
    let params: Vec<crate::irt::ItemParams> = (0..items)
        .map(|_| crate::irt::ItemParams {
            a: rng.random_range(0.8..2.0),
            b: rng.random_range(-1.5..1.5),
        })
        .collect();
    let mut cells = Vec::new();
    for (i, &t) in theta.iter().enumerate() {
        for (j, it) in params.iter().enumerate() {
            if rng.random::<f64>() < density {
                let y = u8::from(rng.random::<f64>() < crate::irt::icc(it.a, it.b, t));
                cells.push((
                    format!("g{i:05}"),
                    BillId::new(Chamber::House, j as u32 + 1, 115),
                    y,
                ));
            }
        }
    }
    IrtSimulation {
        matrix: crate::irt::ResponseMatrix::from_cells(cells),
        theta,
        items: params,
    }
}

/// `n` rows with design `[1, z]`, `z ~ N(0, 1)`, and Dirichlet outcomes
/// with `α_ij = exp(x_i · beta_j)`.
pub fn simulate_dirichlet(
    n: usize,
    beta: &ndarray::Array2<f64>,
    seed: u64,
) -> (crate::analysis::DesignMatrix, ndarray::Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (jn, pn) = beta.dim();
    assert_eq!(pn, 2, "design is intercept plus one covariate");
    let mut x = ndarray::Array2::zeros((n, 2));
    let mut y = ndarray::Array2::zeros((n, jn));
    for i in 0..n {
        let z: f64 = StandardNormal.sample(&mut rng);
        x[[i, 0]] = 1.0;
        x[[i, 1]] = z;
        let mut total = 0.0;
        for j in 0..jn {
            let alpha = (beta[[j, 0]] + beta[[j, 1]] * z).exp();
            let g: f64 = rand_distr::Gamma::new(alpha, 1.0)
                .expect("positive shape")
                .sample(&mut rng);
            y[[i, j]] = g.max(1e-300);
            total += y[[i, j]];
        }
        for j in 0..jn {
            y[[i, j]] /= total;
        }
    }
    let design = crate::analysis::DesignMatrix {
        columns: vec!["(Intercept)".into(), crate::analysis::EMPLOYMENT.into()],
        x,
    };
    (design, y)
}

/// Binary outcomes from `P(y = 1) = σ(b0 + b1·z)` with `z ~ N(0, 1)`.
pub fn simulate_logistic(
    n: usize,
    b0: f64,
    b1: f64,
    seed: u64,
) -> (crate::analysis::DesignMatrix, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = ndarray::Array2::zeros((n, 2));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let z: f64 = StandardNormal.sample(&mut rng);
        x[[i, 0]] = 1.0;
        x[[i, 1]] = z;
        let p = 1.0 / (1.0 + (-(b0 + b1 * z)).exp());
        y.push(rng.random::<f64>() < p);
    }
    let design = crate::analysis::DesignMatrix {
        columns: vec!["(Intercept)".into(), crate::analysis::EMPLOYMENT.into()],
        x,
    };
    (design, y)
}
