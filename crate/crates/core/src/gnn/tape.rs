//! Matrix-level reverse-mode differentiation.

use std::sync::Arc;

use ndarray::{concatenate, s, Array1, Array2, Axis};

use crate::par;

pub type Var = usize;

/// Mean-aggregation pattern from source rows to destination rows.
#[derive(Debug, Clone)]
pub struct Adjacency {
    pub num_src: usize,
    pub num_dst: usize,
    /// CSR over destinations.
    dst_ptr: Vec<usize>,
    src_idx: Vec<usize>,
    /// CSR over sources, for the backward pass.
    src_ptr: Vec<usize>,
    dst_idx: Vec<usize>,
}

impl Adjacency {
    /// `pairs` are (source, destination); duplicates are kept.
    pub fn new(num_src: usize, num_dst: usize, pairs: &[(usize, usize)]) -> Self {
        let (dst_ptr, src_idx) = csr(num_dst, pairs.iter().map(|&(s, d)| (d, s)));
        let (src_ptr, dst_idx) = csr(num_src, pairs.iter().copied());
        Self {
            num_src,
            num_dst,
            dst_ptr,
            src_idx,
            src_ptr,
            dst_idx,
        }
    }

    pub fn in_degree(&self, d: usize) -> usize {
        self.dst_ptr[d + 1] - self.dst_ptr[d]
    }

    pub fn neighbors(&self, d: usize) -> &[usize] {
        &self.src_idx[self.dst_ptr[d]..self.dst_ptr[d + 1]]
    }
}

fn csr(n: usize, pairs: impl Iterator<Item = (usize, usize)> + Clone) -> (Vec<usize>, Vec<usize>) {
    let mut ptr = vec![0usize; n + 1];
    for (r, _) in pairs.clone() {
        ptr[r + 1] += 1;
    }
    for i in 0..n {
        ptr[i + 1] += ptr[i];
    }
    let mut fill = ptr.clone();
    let mut idx = vec![0usize; ptr[n]];
    for (r, c) in pairs {
        idx[fill[r]] = c;
        fill[r] += 1;
    }
    for i in 0..n {
        idx[ptr[i]..ptr[i + 1]].sort_unstable();
    }
    (ptr, idx)
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Sum(Vec<Var>),
    Elu(Var),
    Mask(Var, Array2<f64>),
    Gather(Var, Arc<Vec<usize>>),
    Concat(Var, Var),
    Mean(Var, Arc<Adjacency>),
    Combine {
        coef: Var,
        row: usize,
        bases: Vec<Var>,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Array2<f64>,
        inv_std: Array1<f64>,
    },
    Affine {
        x: Var,
        scale: Array1<f64>,
    },
    SoftmaxCe {
        logits: Var,
        targets: Arc<Vec<usize>>,
        probs: Array2<f64>,
    },
}

pub struct Tape {
    values: Vec<Array2<f64>>,
    ops: Vec<Op>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

pub const BN_EPS: f64 = 1e-5;

impl Tape {
    pub fn new() -> Self {
        Self {
            values: Vec::new(),
            ops: Vec::new(),
        }
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.values.push(value);
        self.ops.push(op);
        self.values.len() - 1
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.values[v]
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.values[a].dot(&self.values[b]);
        self.push(v, Op::MatMul(a, b))
    }

    /// `x + 1·bias` with `bias` of shape 1×n.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Var {
        let v = &self.values[x] + &self.values[bias];
        self.push(v, Op::AddRow(x, bias))
    }

    /// `x ⊙ (1·row)` with `row` of shape 1×n.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Var {
        let v = &self.values[x] * &self.values[row];
        self.push(v, Op::MulRow(x, row))
    }

    pub fn sum(&mut self, terms: Vec<Var>) -> Var {
        let mut v = self.values[terms[0]].clone();
        for &t in &terms[1..] {
            v += &self.values[t];
        }
        self.push(v, Op::Sum(terms))
    }

    pub fn elu(&mut self, x: Var) -> Var {
        let v = self.values[x].mapv(|z| if z > 0.0 { z } else { z.exp_m1() });
        self.push(v, Op::Elu(x))
    }

    /// Elementwise product with a constant mask.
    pub fn mask(&mut self, x: Var, mask: Array2<f64>) -> Var {
        let v = &self.values[x] * &mask;
        self.push(v, Op::Mask(x, mask))
    }

    pub fn gather(&mut self, x: Var, rows: Arc<Vec<usize>>) -> Var {
        let v = self.values[x].select(Axis(0), &rows);
        self.push(v, Op::Gather(x, rows))
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let v = concatenate![Axis(1), self.values[a], self.values[b]];
        self.push(v, Op::Concat(a, b))
    }

    /// Row-wise mean of source rows over each destination's neighbors;
    /// destinations without neighbors get zeros.
    pub fn mean(&mut self, x: Var, adj: Arc<Adjacency>) -> Var {
        let src = &self.values[x];
        assert_eq!(src.nrows(), adj.num_src, "aggregation source rows");
        let cols = src.ncols();
        let mut out = Array2::zeros((adj.num_dst, cols));
        if cols > 0 {
            let buf = out.as_slice_mut().expect("standard layout");
            par::for_each_chunk_mut(buf, cols, |d, row| {
                let nb = adj.neighbors(d);
                if nb.is_empty() {
                    return;
                }
                for &s in nb {
                    for (o, v) in row.iter_mut().zip(src.row(s)) {
                        *o += v;
                    }
                }
                let k = nb.len() as f64;
                row.iter_mut().for_each(|o| *o /= k);
            });
        }
        self.push(out, Op::Mean(x, adj))
    }

    /// `Σ_b coef[row, b] · bases[b]`.
    pub fn combine(&mut self, coef: Var, row: usize, bases: Vec<Var>) -> Var {
        let c = &self.values[coef];
        let mut v = Array2::zeros(self.values[bases[0]].raw_dim());
        for (b, &basis) in bases.iter().enumerate() {
            v.scaled_add(c[[row, b]], &self.values[basis]);
        }
        self.push(v, Op::Combine { coef, row, bases })
    }

    /// Batch normalization with batch statistics; returns the output and
    /// the batch mean and (biased) variance.
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var) -> (Var, Array1<f64>, Array1<f64>) {
        let xv = &self.values[x];
        let n = xv.nrows().max(1) as f64;
        let mean = xv.sum_axis(Axis(0)) / n;
        let centered = xv - &mean;
        let var = centered.mapv(|z| z * z).sum_axis(Axis(0)) / n;
        let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
        let xhat = centered * &inv_std;
        let y = &xhat * &self.values[gamma].row(0) + &self.values[beta].row(0);
        let out = self.push(
            y,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        );
        (out, mean, var)
    }

    /// Batch normalization with frozen statistics.
    pub fn batch_norm_frozen(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &Array1<f64>,
        var: &Array1<f64>,
    ) -> Var {
        let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
        let y = (&self.values[x] - mean) * &inv_std;
        let xhat = self.push(y, Op::Affine { x, scale: inv_std });
        let scaled = self.mul_row(xhat, gamma);
        self.add_row(scaled, beta)
    }

    /// Mean softmax cross-entropy as a 1×1 value.
    pub fn softmax_ce(&mut self, logits: Var, targets: Arc<Vec<usize>>) -> Var {
        let probs = softmax_rows(&self.values[logits]);
        let n = probs.nrows().max(1) as f64;
        let loss: f64 = targets
            .iter()
            .enumerate()
            .map(|(i, &t)| -probs[[i, t]].ln())
            .sum::<f64>()
            / n;
        self.push(
            Array2::from_elem((1, 1), loss),
            Op::SoftmaxCe {
                logits,
                targets,
                probs,
            },
        )
    }

    /// Gradients of the scalar `out` with respect to every variable.
    pub fn backward(&self, out: Var) -> Vec<Option<Array2<f64>>> {
        let mut g: Vec<Option<Array2<f64>>> = vec![None; self.values.len()];
        g[out] = Some(Array2::ones(self.values[out].raw_dim()));
        for v in (0..=out).rev() {
            if matches!(self.ops[v], Op::Leaf) {
                continue;
            }
            let Some(gv) = g[v].take() else { continue };
            match &self.ops[v] {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    let ga = gv.dot(&self.values[*b].t());
                    let gb = self.values[*a].t().dot(&gv);
                    acc(&mut g, *a, ga);
                    acc(&mut g, *b, gb);
                }
                Op::AddRow(x, b) => {
                    acc(&mut g, *b, gv.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut g, *x, gv);
                }
                Op::MulRow(x, r) => {
                    let gr = (&gv * &self.values[*x])
                        .sum_axis(Axis(0))
                        .insert_axis(Axis(0));
                    acc(&mut g, *r, gr);
                    acc(&mut g, *x, gv * &self.values[*r]);
                }
                Op::Sum(ts) => {
                    for &t in ts {
                        acc(&mut g, t, gv.clone());
                    }
                }
                Op::Elu(x) => {
                    let d = self.values[v].mapv(|y| if y > 0.0 { 1.0 } else { y + 1.0 });
                    acc(&mut g, *x, gv * d);
                }
                Op::Mask(x, m) => acc(&mut g, *x, gv * m),
                Op::Gather(x, rows) => {
                    let mut gx = Array2::zeros(self.values[*x].raw_dim());
                    for (i, &r) in rows.iter().enumerate() {
                        let mut dst = gx.row_mut(r);
                        dst += &gv.row(i);
                    }
                    acc(&mut g, *x, gx);
                }
                Op::Concat(a, b) => {
                    let ca = self.values[*a].ncols();
                    acc(&mut g, *a, gv.slice(s![.., ..ca]).to_owned());
                    acc(&mut g, *b, gv.slice(s![.., ca..]).to_owned());
                }
                Op::Mean(x, adj) => {
                    let cols = gv.ncols();
                    let mut gx = Array2::zeros((adj.num_src, cols));
                    if cols > 0 {
                        let buf = gx.as_slice_mut().expect("standard layout");
                        par::for_each_chunk_mut(buf, cols, |s, row| {
                            for &d in &adj.dst_idx[adj.src_ptr[s]..adj.src_ptr[s + 1]] {
                                let k = adj.in_degree(d) as f64;
                                for (o, v) in row.iter_mut().zip(gv.row(d)) {
                                    *o += v / k;
                                }
                            }
                        });
                    }
                    acc(&mut g, *x, gx);
                }
                Op::Combine { coef, row, bases } => {
                    let c = &self.values[*coef];
                    let mut gc = Array2::zeros(c.raw_dim());
                    for (b, &basis) in bases.iter().enumerate() {
                        gc[[*row, b]] = (&gv * &self.values[basis]).sum();
                        acc(&mut g, basis, &gv * c[[*row, b]]);
                    }
                    acc(&mut g, *coef, gc);
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let n = xhat.nrows().max(1) as f64;
                    let gamma_v = self.values[*gamma].row(0).to_owned();
                    acc(&mut g, *beta, gv.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(
                        &mut g,
                        *gamma,
                        (&gv * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)),
                    );
                    let gxhat = &gv * &gamma_v;
                    let m1 = gxhat.sum_axis(Axis(0)) / n;
                    let m2 = (&gxhat * xhat).sum_axis(Axis(0)) / n;
                    let gx = (gxhat - &m1 - xhat * &m2) * inv_std;
                    acc(&mut g, *x, gx);
                }
                Op::Affine { x, scale } => acc(&mut g, *x, gv * scale),
                Op::SoftmaxCe {
                    logits,
                    targets,
                    probs,
                } => {
                    let n = probs.nrows().max(1) as f64;
                    let mut gl = probs.clone();
                    for (i, &t) in targets.iter().enumerate() {
                        gl[[i, t]] -= 1.0;
                    }
                    gl *= gv[[0, 0]] / n;
                    acc(&mut g, *logits, gl);
                }
            }
        }
        g
    }
}

fn acc(g: &mut [Option<Array2<f64>>], v: Var, d: Array2<f64>) {
    match &mut g[v] {
        Some(x) => *x += &d,
        slot => *slot = Some(d),
    }
}

pub fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut p = x.clone();
    for mut row in p.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|z| (z - m).exp());
        let s = row.sum();
        row /= s;
    }
    p
}
