//! Two-category graded response model (2PL) by marginal maximum likelihood.
//!
//! Rows are interest groups, columns are bills, and a response is 1 for
//! Support and 0 for Oppose. `P(y = 1 | θ) = 1 / (1 + exp(−a(θ − b)))` with
//! `a > 0`, so groups that support more items sit higher on θ.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::annotate::{CoarseLabel, LabeledEdge};
use crate::error::{Error, Result};
use crate::ingest::BillId;
use crate::par;

/// Sparse groups × bills matrix stored by row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseMatrix {
    pub row_ids: Vec<String>,
    pub col_ids: Vec<BillId>,
    /// Per row, `(column, response)` sorted by column.
    pub rows: Vec<Vec<(usize, u8)>>,
}

impl ResponseMatrix {
    /// Builds from `(row id, column id, response)` triples; the first
    /// response for a repeated cell wins.
    pub fn from_cells(cells: impl IntoIterator<Item = (String, BillId, u8)>) -> Self {
        let mut map: BTreeMap<String, BTreeMap<BillId, u8>> = BTreeMap::new();
        let mut cols = BTreeSet::new();
        for (r, c, y) in cells {
            cols.insert(c);
            let row = map.entry(r).or_default();
            if row.contains_key(&c) {
                log::warn!("repeated response cell for {c}; keeping the first");
            } else {
                row.insert(c, y);
            }
        }
        let col_ids: Vec<BillId> = cols.into_iter().collect();
        let col_index: BTreeMap<BillId, usize> =
            col_ids.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        let (row_ids, rows) = map
            .into_iter()
            .map(|(r, cells)| {
                (
                    r,
                    cells.into_iter().map(|(c, y)| (col_index[&c], y)).collect(),
                )
            })
            .unzip();
        Self {
            row_ids,
            col_ids,
            rows,
        }
    }

    pub fn num_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn num_cols(&self) -> usize {
        self.col_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_ids.is_empty() || self.col_ids.is_empty()
    }

    pub fn get(&self, row: usize, col: usize) -> Option<u8> {
        self.rows[row]
            .binary_search_by_key(&col, |c| c.0)
            .ok()
            .map(|i| self.rows[row][i].1)
    }

    pub fn num_observed(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn col_counts(&self) -> Vec<usize> {
        let mut n = vec![0; self.num_cols()];
        for r in &self.rows {
            for &(c, _) in r {
                n[c] += 1;
            }
        }
        n
    }

    /// Keeps the given rows and columns, reindexing columns.
    fn restrict(&self, keep_rows: &[bool], keep_cols: &[bool]) -> Self {
        let mut new_col = vec![usize::MAX; self.num_cols()];
        let mut col_ids = Vec::new();
        for (c, &k) in keep_cols.iter().enumerate() {
            if k {
                new_col[c] = col_ids.len();
                col_ids.push(self.col_ids[c]);
            }
        }
        let mut row_ids = Vec::new();
        let mut rows = Vec::new();
        for (r, &k) in keep_rows.iter().enumerate() {
            if k {
                row_ids.push(self.row_ids[r].clone());
                rows.push(
                    self.rows[r]
                        .iter()
                        .filter(|(c, _)| keep_cols[*c])
                        .map(|&(c, y)| (new_col[c], y))
                        .collect(),
                );
            }
        }
        Self {
            row_ids,
            col_ids,
            rows,
        }
    }

    /// Swaps Support and Oppose in every cell.
    pub fn reflected(&self) -> Self {
        let mut m = self.clone();
        for r in &mut m.rows {
            for c in r.iter_mut() {
                c.1 = 1 - c.1;
            }
        }
        m
    }
}

/// Support → 1, Oppose → 0; Engage edges are ignored.
pub fn build_response_matrix(edges: &[LabeledEdge]) -> ResponseMatrix {
    ResponseMatrix::from_cells(edges.iter().filter_map(|e| {
        let y = match e.label {
            CoarseLabel::Support => 1,
            CoarseLabel::Oppose => 0,
            CoarseLabel::Engage => return None,
        };
        Some((e.client_id.clone(), e.bill_id, y))
    }))
}

/// Drops rows with fewer than `min_row` cells, then columns with fewer than
/// `min_col`, repeating until nothing changes.
pub fn prune_matrix(m: &ResponseMatrix, min_row: usize, min_col: usize) -> Result<ResponseMatrix> {
    let mut cur = m.clone();
    loop {
        let keep_rows: Vec<bool> = cur.rows.iter().map(|r| r.len() >= min_row).collect();
        let all_cols = vec![true; cur.num_cols()];
        let after_rows = cur.restrict(&keep_rows, &all_cols);
        let keep_cols: Vec<bool> = after_rows
            .col_counts()
            .iter()
            .map(|&n| n >= min_col)
            .collect();
        let next = after_rows.restrict(&vec![true; after_rows.num_rows()], &keep_cols);
        if next == cur {
            break;
        }
        cur = next;
    }
    if cur.is_empty() {
        return Err(Error::EmptyAfterPruning);
    }
    Ok(cur)
}

pub fn icc(a: f64, b: f64, theta: f64) -> f64 {
    logistic(a * (theta - b))
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln P(y | θ)` computed without cancellation.
fn log_prob(y: u8, eta: f64) -> f64 {
    // ln σ(η) = −ln(1 + e^{−η})
    let s = if y == 1 { eta } else { -eta };
    if s >= 0.0 {
        -(-s).exp().ln_1p()
    } else {
        s - s.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureSpec {
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != weights.len() {
            return Err(Error::invalid(
                "quadrature needs matching non-empty nodes and weights",
            ));
        }
        if weights.iter().any(|w| !(*w > 0.0)) || nodes.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid(
                "quadrature weights must be positive and nodes finite",
            ));
        }
        if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("quadrature weights must sum to 1"));
        }
        Ok(Self { nodes, weights })
    }

    /// Equally spaced nodes on `[−half_width, half_width]` weighted by the
    /// standard normal density, renormalized.
    pub fn rectangle(count: usize, half_width: f64) -> Self {
        let nodes: Vec<f64> = if count == 1 {
            vec![0.0]
        } else {
            (0..count)
                .map(|i| -half_width + 2.0 * half_width * i as f64 / (count - 1) as f64)
                .collect()
        };
        let dens: Vec<f64> = nodes.iter().map(|x| (-0.5 * x * x).exp()).collect();
        let total: f64 = dens.iter().sum();
        Self {
            weights: dens.iter().map(|d| d / total).collect(),
            nodes,
        }
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self::rectangle(61, 6.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemParams {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrtModel {
    pub bill_ids: Vec<BillId>,
    pub items: Vec<ItemParams>,
    /// Items removed for having a single observed response value.
    pub dropped: Vec<BillId>,
    pub converged: bool,
    pub iterations: usize,
    /// Marginal log-likelihood at the start of each EM iteration, plus the
    /// value at the returned parameters.
    pub log_likelihood: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub theta: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-6,
        }
    }
}

const LOG_A_RANGE: (f64, f64) = (-4.0, 4.0);
const B_RANGE: (f64, f64) = (-12.0, 12.0);

/// Posterior over quadrature nodes for one row; returns (posterior, ln L_i).
fn row_posterior(
    cells: &[(usize, u8)],
    items: &[ItemParams],
    col_map: &[Option<usize>],
    quad: &QuadratureSpec,
) -> (Vec<f64>, f64) {
    let mut lp: Vec<f64> = quad.weights.iter().map(|w| w.ln()).collect();
    for &(c, y) in cells {
        if let Some(j) = col_map[c] {
            let it = items[j];
            for (l, &t) in lp.iter_mut().zip(&quad.nodes) {
                *l += log_prob(y, it.a * (t - it.b));
            }
        }
    }
    let m = lp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = lp.iter().map(|l| (l - m).exp()).sum();
    let norm = m + s.ln();
    (lp.iter().map(|l| (l - norm).exp()).collect(), norm)
}

/// Expected complete-data log-likelihood of one item.
fn item_q(alpha: f64, b: f64, n: &[f64], s: &[f64], nodes: &[f64]) -> f64 {
    let a = alpha.exp();
    nodes
        .iter()
        .zip(n.iter().zip(s))
        .map(|(&t, (&n, &s))| {
            let eta = a * (t - b);
            s * log_prob(1, eta) + (n - s) * log_prob(0, eta)
        })
        .sum()
}

fn m_step_item(start: ItemParams, n: &[f64], s: &[f64], nodes: &[f64]) -> ItemParams {
    let clamp = |x: f64, r: (f64, f64)| x.clamp(r.0, r.1);
    let mut alpha = start.a.ln();
    let mut b = start.b;
    let mut q = item_q(alpha, b, n, s, nodes);
    for _ in 0..25 {
        let a = alpha.exp();
        let (mut ga, mut gb, mut haa, mut hbb, mut hab) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&t, (&n, &s)) in nodes.iter().zip(n.iter().zip(s)) {
            let u = t - b;
            let p = logistic(a * u);
            let r = s - n * p;
            let w = n * p * (1.0 - p);
            ga += r * a * u;
            gb -= r * a;
            haa += -w * a * a * u * u + r * a * u;
            hbb -= w * a * a;
            hab += w * a * a * u - r * a;
        }
        if ga.abs().max(gb.abs()) < 1e-10 {
            break;
        }
        let det = haa * hbb - hab * hab;
        let (da, db) = if haa < 0.0 && det > 0.0 {
            (-(hbb * ga - hab * gb) / det, -(haa * gb - hab * ga) / det)
        } else {
            let scale = 1.0 / (1.0 + (ga * ga + gb * gb).sqrt());
            (ga * scale, gb * scale)
        };
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let na = clamp(alpha + step * da, LOG_A_RANGE);
            let nb = clamp(b + step * db, B_RANGE);
            let nq = item_q(na, nb, n, s, nodes);
            if nq >= q {
                improved = nq > q || (na == alpha && nb == b);
                alpha = na;
                b = nb;
                q = nq;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    ItemParams { a: alpha.exp(), b }
}

/// Fits item parameters by EM. Items whose observed responses are all equal
/// are dropped first; the result is flagged when `max_iter` is reached
/// before the largest parameter change falls below `tol`.
pub fn fit_graded(
    m: &ResponseMatrix,
    quad: &QuadratureSpec,
    max_iter: usize,
    tol: f64,
) -> Result<IrtModel> {
    let mut seen = vec![[false; 2]; m.num_cols()];
    for r in &m.rows {
        for &(c, y) in r {
            seen[c][y as usize] = true;
        }
    }
    let keep: Vec<usize> = (0..m.num_cols())
        .filter(|&c| seen[c][0] && seen[c][1])
        .collect();
    let dropped: Vec<BillId> = (0..m.num_cols())
        .filter(|c| !keep.contains(c))
        .map(|c| m.col_ids[c])
        .collect();
    if !dropped.is_empty() {
        log::warn!(
            "dropping {} items with a single observed response value",
            dropped.len()
        );
    }
    if keep.len() < 2 {
        return Err(Error::Degenerate(format!(
            "{} usable items; at least 2 are required",
            keep.len()
        )));
    }
    let mut col_map = vec![None; m.num_cols()];
    for (j, &c) in keep.iter().enumerate() {
        col_map[c] = Some(j);
    }
    let mut items: Vec<ItemParams> = keep
        .iter()
        .map(|&c| {
            let (mut ones, mut total) = (0.0, 0.0);
            for r in &m.rows {
                if let Ok(i) = r.binary_search_by_key(&c, |x| x.0) {
                    total += 1.0;
                    ones += r[i].1 as f64;
                }
            }
            let p = (ones / total).clamp(0.01, 0.99);
            ItemParams {
                a: 1.0,
                b: -(p / (1.0 - p)).ln(),
            }
        })
        .collect();
    let nq = quad.nodes.len();
    let mut log_likelihood = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        let posts = par::map(&m.rows, |cells| {
            row_posterior(cells, &items, &col_map, quad)
        });
        log_likelihood.push(posts.iter().map(|p| p.1).sum());
        let mut n = vec![vec![0.0; nq]; items.len()];
        let mut s = vec![vec![0.0; nq]; items.len()];
        for (cells, (post, _)) in m.rows.iter().zip(&posts) {
            for &(c, y) in cells {
                if let Some(j) = col_map[c] {
                    for q in 0..nq {
                        n[j][q] += post[q];
                        if y == 1 {
                            s[j][q] += post[q];
                        }
                    }
                }
            }
        }
        let next: Vec<ItemParams> = par::map_range(items.len(), |j| {
            m_step_item(items[j], &n[j], &s[j], &quad.nodes)
        });
        let change = items
            .iter()
            .zip(&next)
            .map(|(o, n)| (o.a - n.a).abs().max((o.b - n.b).abs()))
            .fold(0.0, f64::max);
        items = next;
        if change < tol {
            converged = true;
            break;
        }
    }
    let final_ll: f64 = par::map(&m.rows, |cells| {
        row_posterior(cells, &items, &col_map, quad).1
    })
    .iter()
    .sum();
    log_likelihood.push(final_ll);
    if !converged {
        log::warn!("EM stopped after {iterations} iterations without converging");
    }
    Ok(IrtModel {
        bill_ids: keep.iter().map(|&c| m.col_ids[c]).collect(),
        items,
        dropped,
        converged,
        iterations,
        log_likelihood,
    })
}

/// Posterior mean and SD of θ for every row of `m`. Rows without responses
/// to fitted items get the prior (0, 1).
pub fn eap_scores(
    model: &IrtModel,
    m: &ResponseMatrix,
    quad: &QuadratureSpec,
) -> Vec<ThetaEstimate> {
    let index: BTreeMap<BillId, usize> = model
        .bill_ids
        .iter()
        .enumerate()
        .map(|(j, b)| (*b, j))
        .collect();
    let col_map: Vec<Option<usize>> = m.col_ids.iter().map(|c| index.get(c).copied()).collect();
    par::map(&m.rows, |cells| {
        if !cells.iter().any(|(c, _)| col_map[*c].is_some()) {
            return ThetaEstimate {
                theta: 0.0,
                se: 1.0,
            };
        }
        let (post, _) = row_posterior(cells, &model.items, &col_map, quad);
        let mean: f64 = post.iter().zip(&quad.nodes).map(|(p, t)| p * t).sum();
        let var: f64 = post
            .iter()
            .zip(&quad.nodes)
            .map(|(p, t)| p * (t - mean).powi(2))
            .sum();
        ThetaEstimate {
            theta: mean,
            se: var.max(0.0).sqrt(),
        }
    })
}

/// `var(θ̂) / (var(θ̂) + mean(se²))` with an N−1 variance.
pub fn eap_reliability(estimates: &[ThetaEstimate]) -> Result<f64> {
    if estimates.len() < 2 {
        return Err(Error::invalid("reliability needs at least two estimates"));
    }
    let n = estimates.len() as f64;
    let mean = estimates.iter().map(|e| e.theta).sum::<f64>() / n;
    let var = estimates
        .iter()
        .map(|e| (e.theta - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    let err = estimates.iter().map(|e| e.se * e.se).sum::<f64>() / n;
    if var + err <= 0.0 {
        return Err(Error::Degenerate("zero total variance".into()));
    }
    Ok(var / (var + err))
}

/// Bill score = item location `b`.
pub fn bill_latent_scores(model: &IrtModel) -> BTreeMap<BillId, f64> {
    model
        .bill_ids
        .iter()
        .zip(&model.items)
        .map(|(id, it)| (*id, it.b))
        .collect()
}

/// Whether Support-majority rows have a higher mean θ̂ than zero.
pub fn orientation_ok(m: &ResponseMatrix, estimates: &[ThetaEstimate]) -> bool {
    let support: Vec<f64> = m
        .rows
        .iter()
        .zip(estimates)
        .filter(|(r, _)| 2 * r.iter().filter(|c| c.1 == 1).count() > r.len())
        .map(|(_, e)| e.theta)
        .collect();
    support.is_empty() || support.iter().sum::<f64>() / support.len() as f64 > 0.0
}
