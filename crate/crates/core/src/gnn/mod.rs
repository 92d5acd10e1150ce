//! Relational message-passing link classifier.
//!
//! Each layer updates every node kind with a self transform plus, for every
//! incoming relation direction, the mean of neighbor states multiplied by a
//! relation weight `W_r = Σ_b c[r,b] · B_b` built from shared bases. The
//! decoder maps the concatenated client and bill embeddings to three logits
//! (Support, Oppose, Engage).

mod tape;

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use tape::{softmax_rows, Adjacency, Tape, Var};

use crate::annotate::{evaluate, CoarseLabel, LabeledEdge, Metrics, Source};
use crate::error::{Error, Result};
use crate::hetgraph::{EdgeSplit, HeteroGraph, Relation};
use crate::ingest::{BillId, NodeKind};

pub const NUM_CLASSES: usize = 3;
const LEARNING_RATES: [f64; 4] = [0.0005, 0.001, 0.003, 0.005];
const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GnnHyperParams {
    pub hidden_channels: usize,
    pub num_layers: usize,
    pub num_bases: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub use_bn: bool,
    pub use_skip: bool,
    pub use_decoder_bn: bool,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for GnnHyperParams {
    fn default() -> Self {
        Self {
            hidden_channels: 90,
            num_layers: 3,
            num_bases: 3,
            learning_rate: 0.005,
            weight_decay: 0.0,
            dropout: 0.2,
            use_bn: false,
            use_skip: false,
            use_decoder_bn: true,
            epochs: 200,
            seed: 0,
        }
    }
}

impl GnnHyperParams {
    /// Checks the values against the published search space.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.hidden_channels == 0 {
            bad.push("hidden_channels must be positive".to_string());
        }
        if !(2..=3).contains(&self.num_layers) {
            bad.push(format!("num_layers {} not in 2..=3", self.num_layers));
        }
        if !(3..=4).contains(&self.num_bases) {
            bad.push(format!("num_bases {} not in 3..=4", self.num_bases));
        }
        if !LEARNING_RATES
            .iter()
            .any(|lr| (lr - self.learning_rate).abs() < 1e-12)
        {
            bad.push(format!(
                "learning_rate {} not in {LEARNING_RATES:?}",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            bad.push(format!("dropout {} not in [0, 1)", self.dropout));
        }
        if self.weight_decay < 0.0 || !self.weight_decay.is_finite() {
            bad.push("weight_decay must be non-negative".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(bad.join("; ")))
        }
    }
}

/// Node kinds with input widths and the relations present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSchema {
    pub kinds: Vec<(NodeKind, usize)>,
    pub relations: Vec<Relation>,
}

impl GraphSchema {
    pub fn of(graph: &HeteroGraph) -> Self {
        Self {
            kinds: graph.nodes.iter().map(|(k, n)| (*k, n.width)).collect(),
            relations: graph.edges.keys().copied().collect(),
        }
    }

    /// Directed message types: each relation forward, then reversed.
    pub fn message_types(&self) -> Vec<(Relation, bool)> {
        self.relations
            .iter()
            .flat_map(|r| [(*r, false), (*r, true)])
            .collect()
    }

    fn message_endpoints(rel: Relation, reversed: bool) -> (NodeKind, NodeKind) {
        let (s, d) = rel.endpoints();
        if reversed {
            (d, s)
        } else {
            (s, d)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub value: Array2<f64>,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnModel {
    pub hp: GnnHyperParams,
    pub schema: GraphSchema,
    pub tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let s = (6.0 / (rows + cols).max(1) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-s..=s))
}

/// Glorot-initialized model for `schema`; deterministic in `seed`.
pub fn init_model(schema: &GraphSchema, hp: &GnnHyperParams, seed: u64) -> Result<GnnModel> {
    hp.validate()?;
    for k in [NodeKind::InterestGroup, NodeKind::Bill] {
        if !schema.kinds.iter().any(|(kk, _)| *kk == k) {
            return Err(Error::invalid(format!("schema lacks {k} nodes")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = hp.hidden_channels;
    let mut t = Vec::new();
    let mut add = |name: String, value: Array2<f64>, trainable: bool| {
        t.push(Tensor {
            name,
            value,
            trainable,
        })
    };
    for &(k, w) in &schema.kinds {
        add(format!("input.{k}.weight"), glorot(&mut rng, w, h), true);
        add(format!("input.{k}.bias"), Array2::zeros((1, h)), true);
    }
    let m = schema.message_types().len();
    for l in 0..hp.num_layers {
        for &(k, _) in &schema.kinds {
            add(
                format!("layer{l}.self.{k}.weight"),
                glorot(&mut rng, h, h),
                true,
            );
            add(
                format!("layer{l}.self.{k}.bias"),
                Array2::zeros((1, h)),
                true,
            );
        }
        for b in 0..hp.num_bases {
            add(format!("layer{l}.basis{b}"), glorot(&mut rng, h, h), true);
        }
        add(
            format!("layer{l}.coef"),
            glorot(&mut rng, m.max(1), hp.num_bases),
            true,
        );
        if hp.use_bn {
            for &(k, _) in &schema.kinds {
                add_bn(&mut add, &format!("layer{l}.bn.{k}"), h);
            }
        }
    }
    add(
        "decoder.lin1.weight".into(),
        glorot(&mut rng, 2 * h, h),
        true,
    );
    add("decoder.lin1.bias".into(), Array2::zeros((1, h)), true);
    if hp.use_decoder_bn {
        add_bn(&mut add, "decoder.bn", h);
    }
    add(
        "decoder.lin2.weight".into(),
        glorot(&mut rng, h, NUM_CLASSES),
        true,
    );
    add(
        "decoder.lin2.bias".into(),
        Array2::zeros((1, NUM_CLASSES)),
        true,
    );
    Ok(GnnModel::from_parts(hp.clone(), schema.clone(), t))
}

fn add_bn(add: &mut impl FnMut(String, Array2<f64>, bool), prefix: &str, h: usize) {
    add(format!("{prefix}.gamma"), Array2::ones((1, h)), true);
    add(format!("{prefix}.beta"), Array2::zeros((1, h)), true);
    add(
        format!("{prefix}.running_mean"),
        Array2::zeros((1, h)),
        false,
    );
    add(format!("{prefix}.running_var"), Array2::ones((1, h)), false);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Graph tensors prepared once for repeated forward passes.
pub struct GraphContext {
    features: BTreeMap<NodeKind, Array2<f64>>,
    adjacency: Vec<Arc<Adjacency>>,
    ids: BTreeMap<NodeKind, HashMap<String, usize>>,
}

impl GraphContext {
    pub fn new(graph: &HeteroGraph, schema: &GraphSchema) -> Result<Self> {
        if GraphSchema::of(graph) != *schema {
            return Err(Error::invalid("graph does not match the model schema"));
        }
        let mut features = BTreeMap::new();
        let mut ids = BTreeMap::new();
        for (k, n) in &graph.nodes {
            features.insert(
                *k,
                Array2::from_shape_vec((n.len(), n.width), n.features.clone()).expect("shape"),
            );
            ids.insert(
                *k,
                n.ids
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (s.clone(), i))
                    .collect(),
            );
        }
        let count = |k: NodeKind| graph.nodes[&k].len();
        let adjacency = schema
            .message_types()
            .into_iter()
            .map(|(rel, rev)| {
                let (s, d) = GraphSchema::message_endpoints(rel, rev);
                let pairs: Vec<(usize, usize)> = graph.edges[&rel]
                    .iter()
                    .map(|&(a, b)| if rev { (b, a) } else { (a, b) })
                    .collect();
                Arc::new(Adjacency::new(count(s), count(d), &pairs))
            })
            .collect();
        Ok(Self {
            features,
            adjacency,
            ids,
        })
    }

    pub fn resolve(&self, client_id: &str, bill_id: &BillId) -> Result<(usize, usize)> {
        let c = self.ids[&NodeKind::InterestGroup]
            .get(client_id)
            .ok_or_else(|| Error::UnknownNode(format!("interest_group:{client_id}")))?;
        let b = bill_id.to_string();
        let bi = self.ids[&NodeKind::Bill]
            .get(&b)
            .ok_or_else(|| Error::UnknownNode(format!("bill:{b}")))?;
        Ok((*c, *bi))
    }

    fn resolve_edges(&self, edges: &[LabeledEdge]) -> Result<(Vec<(usize, usize)>, Vec<usize>)> {
        let mut pairs = Vec::with_capacity(edges.len());
        for e in edges {
            pairs.push(self.resolve(&e.client_id, &e.bill_id)?);
        }
        Ok((pairs, edges.iter().map(|e| e.label.index()).collect()))
    }
}

struct Forward {
    tape: Tape,
    logits: Var,
    params: Vec<Option<Var>>,
    /// (tensor index of running_mean, batch mean, batch variance, batch size)
    bn_batches: Vec<(usize, Array1<f64>, Array1<f64>, usize)>,
}

impl GnnModel {
    fn from_parts(hp: GnnHyperParams, schema: GraphSchema, tensors: Vec<Tensor>) -> Self {
        let index = tensors
            .iter()
            .enumerate()
            .map(|(i, t)| (t.name.clone(), i))
            .collect();
        Self {
            hp,
            schema,
            tensors,
            index,
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&Array2<f64>> {
        self.index.get(name).map(|&i| &self.tensors[i].value)
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Array2<f64>> {
        self.index.get(name).map(|&i| &mut self.tensors[i].value)
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors
            .iter()
            .filter(|t| t.trainable)
            .map(|t| t.value.len())
            .sum()
    }

    fn idx(&self, name: &str) -> usize {
        self.index[name]
    }

    fn run(
        &self,
        ctx: &GraphContext,
        pairs: &[(usize, usize)],
        mode: Mode,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Forward {
        let hp = &self.hp;
        let mut tape = Tape::new();
        let params: Vec<Option<Var>> = self
            .tensors
            .iter()
            .map(|t| t.trainable.then(|| tape.leaf(t.value.clone())))
            .collect();
        let p = |name: &str| params[self.idx(name)].expect("trainable");
        let mut rng = rng;
        let dropout = |tape: &mut Tape, x: Var, rng: &mut Option<&mut ChaCha8Rng>| -> Var {
            match (mode, rng.as_deref_mut()) {
                (Mode::Train, Some(r)) if hp.dropout > 0.0 => {
                    let keep = 1.0 - hp.dropout;
                    let shape = tape.value(x).raw_dim();
                    let mask = Array2::from_shape_simple_fn(shape, || {
                        if r.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    });
                    tape.mask(x, mask)
                }
                _ => x,
            }
        };
        let mut bn_batches = Vec::new();
        let mut batch_norm = |tape: &mut Tape, x: Var, prefix: &str| -> Var {
            let (g, b) = (p(&format!("{prefix}.gamma")), p(&format!("{prefix}.beta")));
            let rm = self.idx(&format!("{prefix}.running_mean"));
            match mode {
                Mode::Train => {
                    let n = tape.value(x).nrows();
                    let (y, mean, var) = tape.batch_norm(x, g, b);
                    bn_batches.push((rm, mean, var, n));
                    y
                }
                Mode::Eval => {
                    let mean = self.tensors[rm].value.row(0).to_owned();
                    let var = self.tensors[rm + 1].value.row(0).to_owned();
                    tape.batch_norm_frozen(x, g, b, &mean, &var)
                }
            }
        };

        let mut h: BTreeMap<NodeKind, Var> = BTreeMap::new();
        for (k, x) in &ctx.features {
            let xv = tape.leaf(x.clone());
            let z = tape.matmul(xv, p(&format!("input.{k}.weight")));
            h.insert(*k, tape.add_row(z, p(&format!("input.{k}.bias"))));
        }
        let messages = self.schema.message_types();
        for l in 0..hp.num_layers {
            let bases: Vec<Var> = (0..hp.num_bases)
                .map(|b| p(&format!("layer{l}.basis{b}")))
                .collect();
            let coef = p(&format!("layer{l}.coef"));
            let mut incoming: BTreeMap<NodeKind, Vec<Var>> = BTreeMap::new();
            for (m, &(rel, rev)) in messages.iter().enumerate() {
                let (s, d) = GraphSchema::message_endpoints(rel, rev);
                let w = tape.combine(coef, m, bases.clone());
                let agg = tape.mean(h[&s], ctx.adjacency[m].clone());
                let msg = tape.matmul(agg, w);
                incoming.entry(d).or_default().push(msg);
            }
            let mut next = BTreeMap::new();
            for (&k, &hk) in &h {
                let z = tape.matmul(hk, p(&format!("layer{l}.self.{k}.weight")));
                let z = tape.add_row(z, p(&format!("layer{l}.self.{k}.bias")));
                let mut terms = vec![z];
                terms.extend(incoming.remove(&k).unwrap_or_default());
                let z = if terms.len() > 1 { tape.sum(terms) } else { z };
                let mut a = tape.elu(z);
                if hp.use_bn {
                    a = batch_norm(&mut tape, a, &format!("layer{l}.bn.{k}"));
                }
                a = dropout(&mut tape, a, &mut rng);
                if hp.use_skip {
                    a = tape.sum(vec![a, hk]);
                }
                next.insert(k, a);
            }
            h = next;
        }
        let ci = Arc::new(pairs.iter().map(|p| p.0).collect::<Vec<_>>());
        let bi = Arc::new(pairs.iter().map(|p| p.1).collect::<Vec<_>>());
        let hc = tape.gather(h[&NodeKind::InterestGroup], ci);
        let hb = tape.gather(h[&NodeKind::Bill], bi);
        let x = tape.concat(hc, hb);
        let z = tape.matmul(x, p("decoder.lin1.weight"));
        let mut z = tape.add_row(z, p("decoder.lin1.bias"));
        if hp.use_decoder_bn {
            z = batch_norm(&mut tape, z, "decoder.bn");
        }
        let a = tape.elu(z);
        let a = dropout(&mut tape, a, &mut rng);
        let z = tape.matmul(a, p("decoder.lin2.weight"));
        let logits = tape.add_row(z, p("decoder.lin2.bias"));
        Forward {
            tape,
            logits,
            params,
            bn_batches,
        }
    }

    /// Class probabilities for index pairs in evaluation mode.
    pub fn predict_probs(&self, ctx: &GraphContext, pairs: &[(usize, usize)]) -> Array2<f64> {
        let f = self.run(ctx, pairs, Mode::Eval, None);
        softmax_rows(f.tape.value(f.logits))
    }

    /// Mean cross-entropy and its gradient for every tensor (zeros for
    /// running statistics). Dropout masks come from `rng` in training mode.
    pub fn loss_and_grad_indexed(
        &self,
        ctx: &GraphContext,
        pairs: &[(usize, usize)],
        targets: &[usize],
        mode: Mode,
        rng: Option<&mut ChaCha8Rng>,
    ) -> (
        f64,
        Vec<Array2<f64>>,
        Vec<(usize, Array1<f64>, Array1<f64>, usize)>,
    ) {
        let mut f = self.run(ctx, pairs, mode, rng);
        let loss = f.tape.softmax_ce(f.logits, Arc::new(targets.to_vec()));
        let value = f.tape.value(loss)[[0, 0]];
        let mut g = f.tape.backward(loss);
        let grads = self
            .tensors
            .iter()
            .zip(&f.params)
            .map(|(t, v)| {
                v.and_then(|v| g[v].take())
                    .unwrap_or_else(|| Array2::zeros(t.value.raw_dim()))
            })
            .collect();
        (value, grads, f.bn_batches)
    }

    fn apply_bn_batches(&mut self, batches: Vec<(usize, Array1<f64>, Array1<f64>, usize)>) {
        for (rm, mean, var, n) in batches {
            if n == 0 {
                continue;
            }
            let unbiased = if n > 1 {
                var * (n as f64 / (n as f64 - 1.0))
            } else {
                var
            };
            let m = &mut self.tensors[rm].value;
            m.zip_mut_with(&mean.insert_axis(ndarray::Axis(0)), |a, &b| {
                *a = (1.0 - BN_MOMENTUM) * *a + BN_MOMENTUM * b
            });
            let v = &mut self.tensors[rm + 1].value;
            v.zip_mut_with(&unbiased.insert_axis(ndarray::Axis(0)), |a, &b| {
                *a = (1.0 - BN_MOMENTUM) * *a + BN_MOMENTUM * b
            });
        }
    }
}

/// Loss and gradients on labeled edges, training mode with dropout masks
/// drawn from `seed`.
pub fn loss_and_grad(
    model: &GnnModel,
    graph: &HeteroGraph,
    batch: &[LabeledEdge],
    seed: u64,
) -> Result<(f64, Vec<Array2<f64>>)> {
    let ctx = GraphContext::new(graph, &model.schema)?;
    let (pairs, targets) = ctx.resolve_edges(batch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (loss, grads, _) =
        model.loss_and_grad_indexed(&ctx, &pairs, &targets, Mode::Train, Some(&mut rng));
    if !loss.is_finite() {
        return Err(non_finite(batch));
    }
    Ok((loss, grads))
}

fn non_finite(batch: &[LabeledEdge]) -> Error {
    Error::NonFinite(
        batch
            .iter()
            .map(|e| format!("{}|{}", e.client_id, e.bill_id))
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_macro_f1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: GnnModel,
    pub history: Vec<EpochRecord>,
    /// Epoch of the selected checkpoint, 1-based; `None` for zero epochs.
    pub best_epoch: Option<usize>,
    pub diverged: bool,
}

struct Adam {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(model: &GnnModel) -> Self {
        let z: Vec<Array2<f64>> = model
            .tensors
            .iter()
            .map(|t| Array2::zeros(t.value.raw_dim()))
            .collect();
        Self {
            m: z.clone(),
            v: z,
            t: 0,
        }
    }

    fn step(&mut self, model: &mut GnnModel, grads: &[Array2<f64>], lr: f64, wd: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (i, t) in model.tensors.iter_mut().enumerate() {
            if !t.trainable {
                continue;
            }
            let mut g = grads[i].clone();
            if wd > 0.0 {
                g.scaled_add(wd, &t.value);
            }
            self.m[i].zip_mut_with(&g, |m, &g| *m = Self::B1 * *m + (1.0 - Self::B1) * g);
            self.v[i].zip_mut_with(&g, |v, &g| *v = Self::B2 * *v + (1.0 - Self::B2) * g * g);
            ndarray::Zip::from(&mut t.value)
                .and(&self.m[i])
                .and(&self.v[i])
                .for_each(|w, &m, &v| *w -= lr * (m / c1) / ((v / c2).sqrt() + Self::EPS));
        }
    }
}

/// Full-batch Adam on the training edges, keeping the epoch with the best
/// validation macro F1 (the last epoch when there is no validation set).
pub fn train(
    model: &GnnModel,
    graph: &HeteroGraph,
    split: &EdgeSplit,
    hp: &GnnHyperParams,
) -> Result<TrainOutcome> {
    hp.validate()?;
    if split.train.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    let ctx = GraphContext::new(graph, &model.schema)?;
    let (pairs, targets) = ctx.resolve_edges(&split.train)?;
    let (val_pairs, val_targets) = ctx.resolve_edges(&split.validation)?;
    let val_gold: Vec<CoarseLabel> = val_targets
        .iter()
        .map(|&i| CoarseLabel::from_index(i))
        .collect();
    let mut current = model.clone();
    let mut best = model.clone();
    let mut best_score = f64::NEG_INFINITY;
    let mut best_epoch = None;
    let mut history = Vec::with_capacity(hp.epochs);
    let mut adam = Adam::new(model);
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    for epoch in 1..=hp.epochs {
        let (loss, grads, bn) =
            current.loss_and_grad_indexed(&ctx, &pairs, &targets, Mode::Train, Some(&mut rng));
        if !loss.is_finite() || grads.iter().any(|g| g.iter().any(|x| !x.is_finite())) {
            log::error!("training diverged at epoch {epoch}");
            return Ok(TrainOutcome {
                model: if best_epoch.is_some() { best } else { current },
                history,
                best_epoch,
                diverged: true,
            });
        }
        adam.step(&mut current, &grads, hp.learning_rate, hp.weight_decay);
        current.apply_bn_batches(bn);
        let (val_accuracy, val_macro_f1) = if val_pairs.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let m = metrics_for(&current, &ctx, &val_pairs, &val_gold)?;
            (m.accuracy, m.macro_f1)
        };
        history.push(EpochRecord {
            epoch,
            train_loss: loss,
            val_accuracy,
            val_macro_f1,
        });
        let score = if val_pairs.is_empty() {
            epoch as f64
        } else {
            val_macro_f1
        };
        if score > best_score {
            best_score = score;
            best = current.clone();
            best_epoch = Some(epoch);
        }
    }
    Ok(TrainOutcome {
        model: best,
        history,
        best_epoch,
        diverged: false,
    })
}

fn metrics_for(
    model: &GnnModel,
    ctx: &GraphContext,
    pairs: &[(usize, usize)],
    gold: &[CoarseLabel],
) -> Result<Metrics> {
    let probs = model.predict_probs(ctx, pairs);
    let pred: Vec<CoarseLabel> = probs
        .rows()
        .into_iter()
        .map(|r| CoarseLabel::from_index(argmax(r.as_slice().expect("row"))))
        .collect();
    evaluate(&pred, gold)
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

pub fn evaluate_model(
    model: &GnnModel,
    graph: &HeteroGraph,
    test: &[LabeledEdge],
) -> Result<Metrics> {
    let ctx = GraphContext::new(graph, &model.schema)?;
    let (pairs, targets) = ctx.resolve_edges(test)?;
    let gold: Vec<CoarseLabel> = targets.into_iter().map(CoarseLabel::from_index).collect();
    metrics_for(model, &ctx, &pairs, &gold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub client_id: String,
    pub bill_id: BillId,
    pub probs: [f64; NUM_CLASSES],
    pub argmax: CoarseLabel,
}

pub fn forward(
    model: &GnnModel,
    graph: &HeteroGraph,
    pairs: &[(String, BillId)],
) -> Result<Vec<Prediction>> {
    let ctx = GraphContext::new(graph, &model.schema)?;
    let idx = pairs
        .iter()
        .map(|(c, b)| ctx.resolve(c, b))
        .collect::<Result<Vec<_>>>()?;
    let probs = model.predict_probs(&ctx, &idx);
    Ok(pairs
        .iter()
        .zip(probs.rows())
        .map(|((c, b), r)| {
            let p = [r[0], r[1], r[2]];
            Prediction {
                client_id: c.clone(),
                bill_id: *b,
                probs: p,
                argmax: CoarseLabel::from_index(argmax(&p)),
            }
        })
        .collect())
}

/// Keeps predictions whose top probability exceeds `threshold`.
pub fn proxy_labels(predictions: &[Prediction], threshold: f64) -> Vec<LabeledEdge> {
    predictions
        .iter()
        .filter_map(|p| {
            let conf = p.probs[p.argmax.index()];
            (conf > threshold).then(|| {
                LabeledEdge::new(p.client_id.clone(), p.bill_id, p.argmax, Source::Gnn, conf)
            })
        })
        .collect()
}

pub fn predict_proxy_labels(
    model: &GnnModel,
    graph: &HeteroGraph,
    candidates: &[(String, BillId)],
    threshold: f64,
) -> Result<Vec<LabeledEdge>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!(
            "threshold {threshold} not in (0, 1)"
        )));
    }
    Ok(proxy_labels(&forward(model, graph, candidates)?, threshold))
}

/// Cutoff maximizing sensitivity + specificity − 1 over midpoints of the
/// sorted distinct scores; a score at or above the cutoff counts as
/// positive. Ties go to the smallest cutoff.
pub fn youden_threshold(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("scores must be finite"));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("Youden threshold needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sweep cutoffs upward; below the cutoff counts as negative.
    let (mut fn_, mut tn) = (0usize, 0usize);
    let mut best: Option<(f64, f64)> = None;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                fn_ += 1;
            } else {
                tn += 1;
            }
            i += 1;
        }
        if i == order.len() {
            break;
        }
        let cut = 0.5 * (s + scores[order[i]]);
        let j = (pos - fn_) as f64 / pos as f64 + tn as f64 / neg as f64 - 1.0;
        if best.is_none_or(|(bj, _)| j > bj) {
            best = Some((j, cut));
        }
    }
    best.map(|(_, c)| c)
        .ok_or_else(|| Error::invalid("Youden threshold needs at least two distinct scores"))
}

const MAGIC: &[u8; 8] = b"PFGNN01\n";

#[derive(Serialize, Deserialize)]
struct Manifest {
    hyperparams: GnnHyperParams,
    schema: GraphSchema,
    tensors: Vec<TensorMeta>,
}

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    shape: [usize; 2],
    trainable: bool,
}

impl GnnModel {
    /// Writes the checkpoint container: magic, little-endian u32 manifest
    /// length, JSON manifest, then every tensor's values as f64 LE in
    /// manifest order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let manifest = Manifest {
            hyperparams: self.hp.clone(),
            schema: self.schema.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| TensorMeta {
                    name: t.name.clone(),
                    shape: [t.value.nrows(), t.value.ncols()],
                    trainable: t.trainable,
                })
                .collect(),
        };
        let json = serde_json::to_vec(&manifest)?;
        let len = u32::try_from(json.len())
            .map_err(|_| Error::Checkpoint("manifest too large".into()))?;
        let mut out = Vec::with_capacity(
            json.len() + 12 + 8 * self.tensors.iter().map(|t| t.value.len()).sum::<usize>(),
        );
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&json);
        for t in &self.tensors {
            for v in t.value.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        std::fs::File::create(path)?.write_all(&out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let bad = |m: &str| Error::Checkpoint(format!("{}: {m}", path.display()));
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint"));
        }
        let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let body = bytes
            .get(12..12 + len)
            .ok_or_else(|| bad("truncated manifest"))?;
        let manifest: Manifest = serde_json::from_slice(body)?;
        let mut rest = &bytes[12 + len..];
        let mut tensors = Vec::new();
        for m in manifest.tensors {
            let n = m.shape[0] * m.shape[1];
            if rest.len() < 8 * n {
                return Err(bad("truncated values"));
            }
            let vals: Vec<f64> = rest[..8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            rest = &rest[8 * n..];
            tensors.push(Tensor {
                name: m.name,
                value: Array2::from_shape_vec((m.shape[0], m.shape[1]), vals)
                    .map_err(|e| bad(&e.to_string()))?,
                trainable: m.trainable,
            });
        }
        if !rest.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self::from_parts(
            manifest.hyperparams,
            manifest.schema,
            tensors,
        ))
    }
}
