use std::collections::BTreeMap;

use ndarray::Array2;
use positionforge::annotate::{CoarseLabel, LabeledEdge};
use positionforge::gnn::*;
use positionforge::hetgraph::{split_edges, HeteroGraph, NodeSet};
use positionforge::ingest::NodeKind;
use positionforge::synth::{planted_graph, PlantedSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy() -> (HeteroGraph, Vec<LabeledEdge>) {
    let spec = PlantedSpec {
        clients: 4,
        bills: 6,
        legislators: 5,
        lobbyists: 3,
        bills_per_client: 2,
        feature_width: 3,
        ..PlantedSpec::default()
    };
    planted_graph(&spec, 11)
}

fn small_hp() -> GnnHyperParams {
    GnnHyperParams {
        hidden_channels: 4,
        num_layers: 2,
        use_bn: true,
        use_skip: true,
        ..GnnHyperParams::default()
    }
}

fn pairs_of(edges: &[LabeledEdge]) -> Vec<(String, positionforge::ingest::BillId)> {
    edges
        .iter()
        .map(|e| (e.client_id.clone(), e.bill_id))
        .collect()
}

#[test]
fn toy_graph_is_small() {
    let (g, _) = toy();
    assert!(g.nodes.values().map(NodeSet::len).sum::<usize>() <= 20);
}

#[test]
fn gradient_matches_central_differences() {
    let (g, edges) = toy();
    for hp in [
        small_hp(),
        GnnHyperParams {
            hidden_channels: 3,
            num_layers: 3,
            num_bases: 4,
            use_bn: false,
            use_skip: false,
            ..small_hp()
        },
    ] {
        let model = init_model(&GraphSchema::of(&g), &hp, 5).unwrap();
        let (_, grads) = loss_and_grad(&model, &g, &edges, 9).unwrap();
        let eps = 1e-4;
        let mut worst = 0.0f64;
        for (ti, t) in model.tensors.iter().enumerate() {
            if !t.trainable {
                continue;
            }
            for idx in 0..t.value.len() {
                let mut m = model.clone();
                let (r, c) = (idx / t.value.ncols(), idx % t.value.ncols());
                m.tensors[ti].value[[r, c]] += eps;
                let up = loss_and_grad(&m, &g, &edges, 9).unwrap().0;
                m.tensors[ti].value[[r, c]] -= 2.0 * eps;
                let down = loss_and_grad(&m, &g, &edges, 9).unwrap().0;
                let numeric = (up - down) / (2.0 * eps);
                let analytic = grads[ti][[r, c]];
                let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
                assert!(
                    rel < 1e-4,
                    "{} [{r},{c}]: analytic {analytic} numeric {numeric}",
                    t.name
                );
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-4);
    }
}

/// Independent loop-based evaluation-mode forward pass.
fn naive_probs(model: &GnnModel, g: &HeteroGraph, pairs: &[(usize, usize)]) -> Vec<[f64; 3]> {
    let hp = &model.hp;
    let t = |n: &str| model.tensor(n).unwrap().clone();
    let lin = |x: &[f64], w: &Array2<f64>, b: Option<&Array2<f64>>| -> Vec<f64> {
        (0..w.ncols())
            .map(|j| {
                x.iter()
                    .enumerate()
                    .map(|(i, v)| v * w[[i, j]])
                    .sum::<f64>()
                    + b.map_or(0.0, |b| b[[0, j]])
            })
            .collect()
    };
    let elu = |v: f64| if v > 0.0 { v } else { v.exp() - 1.0 };
    let bn = |x: &mut [f64], p: &str| {
        let (m, v, ga, be) = (
            t(&format!("{p}.running_mean")),
            t(&format!("{p}.running_var")),
            t(&format!("{p}.gamma")),
            t(&format!("{p}.beta")),
        );
        for j in 0..x.len() {
            x[j] = (x[j] - m[[0, j]]) / (v[[0, j]] + 1e-5).sqrt() * ga[[0, j]] + be[[0, j]];
        }
    };
    let mut h: BTreeMap<NodeKind, Vec<Vec<f64>>> = BTreeMap::new();
    for (k, n) in &g.nodes {
        let (w, b) = (
            t(&format!("input.{k}.weight")),
            t(&format!("input.{k}.bias")),
        );
        h.insert(
            *k,
            (0..n.len()).map(|i| lin(n.row(i), &w, Some(&b))).collect(),
        );
    }
    let msgs = model.schema.message_types();
    for l in 0..hp.num_layers {
        let coef = t(&format!("layer{l}.coef"));
        let mut next = BTreeMap::new();
        for (k, hk) in &h {
            let (w, b) = (
                t(&format!("layer{l}.self.{k}.weight")),
                t(&format!("layer{l}.self.{k}.bias")),
            );
            let mut rows = Vec::new();
            for (i, hi) in hk.iter().enumerate() {
                let mut z = lin(hi, &w, Some(&b));
                for (m, (rel, rev)) in msgs.iter().enumerate() {
                    let (s, d) = if *rev {
                        (rel.endpoints().1, rel.endpoints().0)
                    } else {
                        rel.endpoints()
                    };
                    if d != *k {
                        continue;
                    }
                    let nbrs: Vec<usize> = g.edges[rel]
                        .iter()
                        .filter_map(|&(a, b)| {
                            if *rev {
                                (a == i).then_some(b)
                            } else {
                                (b == i).then_some(a)
                            }
                        })
                        .collect();
                    if nbrs.is_empty() {
                        continue;
                    }
                    let mut wr = Array2::<f64>::zeros((hp.hidden_channels, hp.hidden_channels));
                    for bb in 0..hp.num_bases {
                        wr = wr + t(&format!("layer{l}.basis{bb}")) * coef[[m, bb]];
                    }
                    let mut acc = vec![0.0; hp.hidden_channels];
                    for &nb in &nbrs {
                        for (a, v) in acc.iter_mut().zip(lin(&h[&s][nb], &wr, None)) {
                            *a += v / nbrs.len() as f64;
                        }
                    }
                    for (zz, a) in z.iter_mut().zip(acc) {
                        *zz += a;
                    }
                }
                let mut a: Vec<f64> = z.into_iter().map(elu).collect();
                if hp.use_bn {
                    bn(&mut a, &format!("layer{l}.bn.{k}"));
                }
                if hp.use_skip {
                    a.iter_mut().zip(hi).for_each(|(x, y)| *x += y);
                }
                rows.push(a);
            }
            next.insert(*k, rows);
        }
        h = next;
    }
    pairs
        .iter()
        .map(|&(c, b)| {
            let x: Vec<f64> = h[&NodeKind::InterestGroup][c]
                .iter()
                .chain(&h[&NodeKind::Bill][b])
                .copied()
                .collect();
            let mut z = lin(&x, &t("decoder.lin1.weight"), Some(&t("decoder.lin1.bias")));
            if hp.use_decoder_bn {
                bn(&mut z, "decoder.bn");
            }
            let a: Vec<f64> = z.into_iter().map(elu).collect();
            let o = lin(&a, &t("decoder.lin2.weight"), Some(&t("decoder.lin2.bias")));
            let m = o.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = o.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            [e[0] / s, e[1] / s, e[2] / s]
        })
        .collect()
}

#[test]
fn forward_matches_straight_line_oracle() {
    let (g, edges) = toy();
    let mut model = init_model(&GraphSchema::of(&g), &small_hp(), 3).unwrap();
    // Non-trivial running statistics so the frozen batch norm is exercised.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for t in model
        .tensors
        .iter_mut()
        .filter(|t| t.name.contains("running"))
    {
        t.value.mapv_inplace(|_| rng.random_range(0.5..1.5));
    }
    let preds = forward(&model, &g, &pairs_of(&edges)).unwrap();
    let idx: Vec<(usize, usize)> = edges
        .iter()
        .map(|e| {
            (
                g.node_index(NodeKind::InterestGroup, &e.client_id).unwrap(),
                g.node_index(NodeKind::Bill, &e.bill_id.to_string())
                    .unwrap(),
            )
        })
        .collect();
    let oracle = naive_probs(&model, &g, &idx);
    for (p, o) in preds.iter().zip(&oracle) {
        for c in 0..3 {
            assert!((p.probs[c] - o[c]).abs() < 1e-12, "{p:?} vs {o:?}");
        }
        assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(p.probs.iter().all(|&x| x > 0.0));
    }
}

#[test]
fn parameter_count_closed_form() {
    let (g, _) = planted_graph(&PlantedSpec::default(), 0);
    let hp = GnnHyperParams::default();
    let model = init_model(&GraphSchema::of(&g), &hp, 0).unwrap();
    let h = 90;
    let w = 8;
    let kinds = 4;
    // client_bill, bill_sponsor, bill_cosponsor, legislator_legislator,
    // client_lobbyist, lobbyist_bill, lobbyist_legislator
    let relations = 7;
    let input = kinds * (w * h + h);
    let layer = kinds * (h * h + h) + 3 * h * h + 2 * relations * 3;
    let decoder = (2 * h * h + h) + 2 * h + (h * 3 + 3);
    assert_eq!(model.num_parameters(), input + 3 * layer + decoder);
    assert_eq!(model.tensor("decoder.lin2.weight").unwrap().ncols(), 3);
}

#[test]
fn init_is_deterministic() {
    let (g, _) = toy();
    let s = GraphSchema::of(&g);
    let a = init_model(&s, &small_hp(), 42).unwrap();
    let b = init_model(&s, &small_hp(), 42).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, init_model(&s, &small_hp(), 43).unwrap());
}

#[test]
fn zero_decoder_gives_uniform_probabilities() {
    let (g, edges) = toy();
    let mut model = init_model(&GraphSchema::of(&g), &small_hp(), 1).unwrap();
    model.tensor_mut("decoder.lin2.weight").unwrap().fill(0.0);
    for p in forward(&model, &g, &pairs_of(&edges)).unwrap() {
        for x in p.probs {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }
    let (loss, _) = loss_and_grad(&model, &g, &edges, 0).unwrap();
    assert!((loss - 3f64.ln()).abs() < 1e-12);
}

#[test]
fn isolated_nodes_use_self_transform_only() {
    let (mut g, edges) = toy();
    for e in g.edges.values_mut() {
        e.clear();
    }
    let model = init_model(&GraphSchema::of(&g), &small_hp(), 1).unwrap();
    let preds = forward(&model, &g, &pairs_of(&edges)).unwrap();
    let idx: Vec<(usize, usize)> = edges
        .iter()
        .map(|e| {
            (
                g.node_index(NodeKind::InterestGroup, &e.client_id).unwrap(),
                g.node_index(NodeKind::Bill, &e.bill_id.to_string())
                    .unwrap(),
            )
        })
        .collect();
    for (p, o) in preds.iter().zip(naive_probs(&model, &g, &idx)) {
        for c in 0..3 {
            assert!((p.probs[c] - o[c]).abs() < 1e-12);
        }
    }
}

#[test]
fn eval_forward_is_bit_identical() {
    let (g, edges) = toy();
    let model = init_model(&GraphSchema::of(&g), &small_hp(), 1).unwrap();
    let a = forward(&model, &g, &pairs_of(&edges)).unwrap();
    let b = forward(&model, &g, &pairs_of(&edges)).unwrap();
    assert_eq!(a, b);
}

fn permute(g: &HeteroGraph, seed: u64) -> HeteroGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perms = BTreeMap::new();
    let mut nodes = BTreeMap::new();
    for (k, n) in &g.nodes {
        let mut p: Vec<usize> = (0..n.len()).collect();
        for i in (1..p.len()).rev() {
            p.swap(i, rng.random_range(0..=i));
        }
        // new position j holds old node p[j]
        let ids = p.iter().map(|&o| n.ids[o].clone()).collect();
        let feats = p.iter().flat_map(|&o| n.row(o).to_vec()).collect();
        let mut inv = vec![0; p.len()];
        for (j, &o) in p.iter().enumerate() {
            inv[o] = j;
        }
        perms.insert(*k, inv);
        nodes.insert(*k, NodeSet::new(ids, n.width, feats));
    }
    let edges = g
        .edges
        .iter()
        .map(|(r, es)| {
            let (s, d) = r.endpoints();
            let mut v: Vec<(usize, usize)> = es
                .iter()
                .map(|&(a, b)| (perms[&s][a], perms[&d][b]))
                .collect();
            v.sort();
            (*r, v)
        })
        .collect();
    HeteroGraph {
        config: g.config,
        nodes,
        edges,
    }
}

#[test]
fn predictions_are_permutation_equivariant() {
    let (g, edges) = toy();
    let model = init_model(&GraphSchema::of(&g), &small_hp(), 2).unwrap();
    let a = forward(&model, &g, &pairs_of(&edges)).unwrap();
    for seed in 0..5 {
        let b = forward(&model, &permute(&g, seed), &pairs_of(&edges)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            for c in 0..3 {
                assert!((x.probs[c] - y.probs[c]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn unknown_pair_endpoint_is_rejected() {
    let (g, edges) = toy();
    let model = init_model(&GraphSchema::of(&g), &small_hp(), 2).unwrap();
    let bad = vec![("nobody".to_string(), edges[0].bill_id)];
    assert!(forward(&model, &g, &bad).is_err());
}

#[test]
fn zero_epochs_returns_initial_model() {
    let (g, edges) = toy();
    let hp = GnnHyperParams {
        epochs: 0,
        ..small_hp()
    };
    let model = init_model(&GraphSchema::of(&g), &hp, 2).unwrap();
    let split = split_edges(&edges, (7, 1, 2), 0).unwrap();
    let out = train(&model, &g, &split, &hp).unwrap();
    assert_eq!(out.model, model);
    assert!(out.history.is_empty());
    assert_eq!(out.best_epoch, None);
}

#[test]
fn checkpoint_round_trip() {
    let (g, _) = toy();
    let model = init_model(&GraphSchema::of(&g), &small_hp(), 8).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("model.bin");
    model.save(&p).unwrap();
    assert_eq!(GnnModel::load(&p).unwrap(), model);
    std::fs::write(&p, b"garbage").unwrap();
    assert!(GnnModel::load(&p).is_err());
}

#[test]
fn hyperparameters_outside_search_space_are_rejected() {
    assert!(GnnHyperParams::default().validate().is_ok());
    assert!(GnnHyperParams {
        num_layers: 5,
        ..Default::default()
    }
    .validate()
    .is_err());
    assert!(GnnHyperParams {
        learning_rate: 0.1,
        ..Default::default()
    }
    .validate()
    .is_err());
}

#[test]
fn planted_structure_is_learned() {
    let (g, edges) = planted_graph(&PlantedSpec::default(), 4);
    let split = split_edges(&edges, (7, 1, 2), 4).unwrap();
    let hp = GnnHyperParams {
        epochs: 60,
        hidden_channels: 32,
        seed: 4,
        ..Default::default()
    };
    let model = init_model(&GraphSchema::of(&g), &hp, 4).unwrap();
    let out = train(&model, &g, &split, &hp).unwrap();
    let m = evaluate_model(&out.model, &g, &split.test).unwrap();
    assert!(m.accuracy >= 90.0, "{m:?}");
}

fn pred(p: [f64; 3]) -> Prediction {
    let argmax = (0..3).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
    Prediction {
        client_id: "c".into(),
        bill_id: "H.R.1@115".parse().unwrap(),
        probs: p,
        argmax: CoarseLabel::from_index(argmax),
    }
}

#[test]
fn proxy_gate() {
    let kept = proxy_labels(&[pred([0.95, 0.03, 0.02]), pred([0.5, 0.3, 0.2])], 0.9);
    assert_eq!(kept.len(), 1);
    assert_eq!(kept[0].label, CoarseLabel::Support);
    assert_eq!(kept[0].confidence, 0.95);
}

fn brute_youden(scores: &[f64], labels: &[bool]) -> f64 {
    let mut s: Vec<f64> = scores.to_vec();
    s.sort_by(f64::total_cmp);
    s.dedup();
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for w in s.windows(2) {
        let c = 0.5 * (w[0] + w[1]);
        let tp = scores
            .iter()
            .zip(labels)
            .filter(|(x, &l)| l && **x >= c)
            .count() as f64;
        let tn = scores
            .iter()
            .zip(labels)
            .filter(|(x, &l)| !l && **x < c)
            .count() as f64;
        let j = tp / pos + tn / neg - 1.0;
        if j > best.0 {
            best = (j, c);
        }
    }
    best.1
}

#[test]
fn youden_examples() {
    assert_eq!(
        youden_threshold(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(),
        0.5
    );
    assert!(youden_threshold(&[0.1, 0.2], &[true, true]).is_err());
}

proptest! {
    #[test]
    fn youden_matches_brute_force(seed in 0u64..1000, n in 4usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<bool> = (0..n).map(|i| i % 2 == 0 || rng.random_bool(0.3)).collect();
        let scores: Vec<f64> = labels.iter().map(|&l| ((rng.random::<f64>() + if l { 0.3 } else { 0.0 }) * 20.0).round() / 20.0).collect();
        prop_assume!(labels.iter().any(|&l| !l));
        let distinct = { let mut s = scores.clone(); s.sort_by(f64::total_cmp); s.dedup(); s.len() };
        prop_assume!(distinct > 1);
        prop_assert_eq!(youden_threshold(&scores, &labels).unwrap(), brute_youden(&scores, &labels));
    }

    #[test]
    fn youden_label_swap_mirrors_scores(seed in 0u64..1000) {
        // Swapping labels and negating scores reflects the optimal cutoff.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<bool> = (0..30).map(|i| i % 3 == 0).collect();
        let scores: Vec<f64> = labels.iter().map(|&l| rng.random::<f64>() + if l { 0.5 } else { 0.0 }).collect();
        let a = youden_threshold(&scores, &labels).unwrap();
        let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let b = youden_threshold(&neg, &flipped).unwrap();
        let j = |c: f64, s: &[f64], l: &[bool]| {
            let pos = l.iter().filter(|&&x| x).count() as f64;
            let tp = s.iter().zip(l).filter(|(x, &y)| y && **x >= c).count() as f64;
            let tn = s.iter().zip(l).filter(|(x, &y)| !y && **x < c).count() as f64;
            tp / pos + tn / (l.len() as f64 - pos) - 1.0
        };
        prop_assert!((j(a, &scores, &labels) - j(b, &neg, &flipped)).abs() < 1e-12);
    }

    #[test]
    fn proxy_set_shrinks_with_threshold(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let preds: Vec<Prediction> = (0..50).map(|_| {
            let a: [f64; 3] = [rng.random::<f64>().powi(3), rng.random(), rng.random()];
            let s: f64 = a.iter().sum();
            pred([a[0] / s, a[1] / s, a[2] / s])
        }).collect();
        let mut last = usize::MAX;
        for t in [0.5, 0.58, 0.7, 0.9] {
            let k = proxy_labels(&preds, t).len();
            prop_assert!(k <= last);
            last = k;
        }
    }
}
