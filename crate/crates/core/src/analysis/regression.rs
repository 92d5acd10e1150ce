use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::linalg::{cholesky, cholesky_solve, independent_columns, spd_inverse};
use super::{quantile, DesignMatrix};
use crate::error::{Error, Result};
use crate::special::{digamma, ln_gamma, trigamma};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitControl {
    pub max_iter: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub columns: Vec<String>,
    /// Zero for dropped columns.
    pub coef: Vec<f64>,
    /// Cluster-robust (CR1) standard errors; NaN for dropped columns.
    pub se: Vec<f64>,
    pub dropped: Vec<String>,
    pub converged: bool,
    pub iterations: usize,
    pub separation: bool,
    pub log_likelihood: f64,
}

impl LogisticFit {
    pub fn coefficient(&self, name: &str) -> Option<(f64, f64)> {
        self.columns
            .iter()
            .position(|c| c == name)
            .map(|i| (self.coef[i], self.se[i]))
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `Σ y ln p + (1 − y) ln(1 − p)` at `beta`.
pub fn logistic_log_likelihood(x: &Array2<f64>, y: &[bool], beta: &Array1<f64>) -> f64 {
    x.dot(beta)
        .iter()
        .zip(y)
        .map(|(&eta, &yi)| {
            let s = if yi { eta } else { -eta };
            if s >= 0.0 {
                -(-s).exp().ln_1p()
            } else {
                s - s.exp().ln_1p()
            }
        })
        .sum()
}

/// Newton–Raphson logistic regression with step halving, stopping when the
/// score's Euclidean norm drops below 1e-8 or after 100 iterations.
/// Collinear columns are dropped left to right. Standard errors are
/// clustered on `clusters` with the CR1 small-sample factor.
pub fn logistic_fit(design: &DesignMatrix, y: &[bool], clusters: &[String]) -> Result<LogisticFit> {
    let n = design.x.nrows();
    if y.len() != n || clusters.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: y.len().min(clusters.len()),
        });
    }
    if n == 0 {
        return Err(Error::invalid("logistic regression on no rows"));
    }
    let keep = independent_columns(&design.x, 1e-9);
    let dropped: Vec<String> = (0..design.columns.len())
        .filter(|j| !keep.contains(j))
        .map(|j| design.columns[j].clone())
        .collect();
    if !dropped.is_empty() {
        log::warn!("dropping collinear columns {dropped:?}");
    }
    let x = design.x.select(Axis(1), &keep);
    let k = keep.len();
    let yv: Array1<f64> = y.iter().map(|&b| f64::from(u8::from(b))).collect();
    let mut beta = Array1::<f64>::zeros(k);
    let mut ll = logistic_log_likelihood(&x, y, &beta);
    let mut converged = false;
    let mut iterations = 0;
    let mut hessian = Array2::zeros((k, k));
    for _ in 0..100 {
        let p = x.dot(&beta).mapv(sigmoid);
        let grad = x.t().dot(&(&yv - &p));
        let w = p.mapv(|v| v * (1.0 - v));
        hessian = x.t().dot(&(&x * &w.view().insert_axis(Axis(1))));
        if grad.dot(&grad).sqrt() < 1e-8 {
            converged = true;
            break;
        }
        iterations += 1;
        let step = match cholesky(&hessian) {
            Some(l) => cholesky_solve(&l, &grad),
            None => grad.clone(),
        };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..50 {
            let cand = &beta + &(&step * t);
            let cll = logistic_log_likelihood(&x, y, &cand);
            // Near the optimum the likelihood is flat to rounding error.
            if cll >= ll - 1e-12 * (1.0 + ll.abs()) {
                beta = cand;
                ll = cll;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let all_same = y.iter().all(|&v| v == y[0]);
    let separation = all_same || beta.iter().any(|b| b.abs() > 30.0);
    if separation {
        log::warn!("logistic regression shows separation");
    }
    let se_kept = match spd_inverse(&hessian) {
        Some(bread) => {
            let p = x.dot(&beta).mapv(sigmoid);
            let resid = &yv - &p;
            let mut scores: BTreeMap<&str, Array1<f64>> = BTreeMap::new();
            for i in 0..n {
                let s = scores
                    .entry(clusters[i].as_str())
                    .or_insert_with(|| Array1::zeros(k));
                s.scaled_add(resid[i], &x.row(i));
            }
            let g = scores.len() as f64;
            let mut meat = Array2::<f64>::zeros((k, k));
            for s in scores.values() {
                let col = s.view().insert_axis(Axis(1));
                meat += &col.dot(&col.t());
            }
            let factor = if g > 1.0 && n > k {
                g / (g - 1.0) * (n as f64 - 1.0) / (n as f64 - k as f64)
            } else {
                f64::NAN
            };
            let v = bread.dot(&meat).dot(&bread) * factor;
            v.diag().mapv(|d| d.max(0.0).sqrt()).to_vec()
        }
        None => vec![f64::NAN; k],
    };
    let mut coef = vec![0.0; design.columns.len()];
    let mut se = vec![f64::NAN; design.columns.len()];
    for (i, &j) in keep.iter().enumerate() {
        coef[j] = beta[i];
        se[j] = se_kept[i];
    }
    Ok(LogisticFit {
        columns: design.columns.clone(),
        coef,
        se,
        dropped,
        converged,
        iterations,
        separation,
        log_likelihood: ll,
    })
}

/// `y* = (y(N − 1) + 1/J) / N` applied row-wise with `N` = number of rows.
pub fn smooth_proportions(y: &Array2<f64>, n: usize) -> Array2<f64> {
    let j = y.ncols() as f64;
    let n = n as f64;
    y.mapv(|v| (v * (n - 1.0) + 1.0 / j) / n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletModel {
    pub columns: Vec<String>,
    /// `beta[[j, p]]`: outcome `j`, covariate `p`; `α_ij = exp(x_i · beta_j)`.
    pub beta: Array2<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
}

impl DirichletModel {
    /// Expected proportions `α_j / Σα` for each row.
    pub fn predict_mean(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut a = x.dot(&self.beta.t()).mapv(f64::exp);
        for mut r in a.rows_mut() {
            let s = r.sum();
            r /= s;
        }
        a
    }
}

fn check_dirichlet(x: &Array2<f64>, y: &Array2<f64>, beta: &Array2<f64>) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(Error::LengthMismatch {
            left: x.nrows(),
            right: y.nrows(),
        });
    }
    if beta.dim() != (y.ncols(), x.ncols()) {
        return Err(Error::invalid("beta must be outcomes × covariates"));
    }
    Ok(())
}

pub fn dirichlet_log_likelihood(x: &Array2<f64>, y: &Array2<f64>, beta: &Array2<f64>) -> f64 {
    let alpha = x.dot(&beta.t()).mapv(f64::exp);
    alpha
        .rows()
        .into_iter()
        .zip(y.rows())
        .map(|(a, yr)| {
            let total: f64 = a.sum();
            ln_gamma(total)
                + a.iter()
                    .zip(yr)
                    .map(|(&aj, &yj)| -ln_gamma(aj) + (aj - 1.0) * yj.ln())
                    .sum::<f64>()
        })
        .sum()
}

/// `∂ℓ/∂β_jp = Σ_i α_ij x_ip (ψ(Σα_i) − ψ(α_ij) + ln y_ij)`.
pub fn dirichlet_gradient(x: &Array2<f64>, y: &Array2<f64>, beta: &Array2<f64>) -> Array2<f64> {
    let alpha = x.dot(&beta.t()).mapv(f64::exp);
    let mut r = Array2::zeros(alpha.raw_dim());
    for i in 0..alpha.nrows() {
        let psi_total = digamma(alpha.row(i).sum());
        for j in 0..alpha.ncols() {
            let a = alpha[[i, j]];
            r[[i, j]] = a * (psi_total - digamma(a) + y[[i, j]].ln());
        }
    }
    r.t().dot(x)
}

/// Negative expected Hessian (Fisher information) over vec(β) in
/// outcome-major order.
fn dirichlet_fisher(x: &Array2<f64>, beta: &Array2<f64>) -> Array2<f64> {
    let (jn, pn) = beta.dim();
    let alpha = x.dot(&beta.t()).mapv(f64::exp);
    let mut info = Array2::zeros((jn * pn, jn * pn));
    for i in 0..x.nrows() {
        let a = alpha.row(i);
        let tg_total = trigamma(a.sum());
        let xi = x.row(i);
        for j in 0..jn {
            for k in 0..jn {
                let mut w = -a[j] * a[k] * tg_total;
                if j == k {
                    w += a[j] * a[j] * trigamma(a[j]);
                }
                for p in 0..pn {
                    for q in 0..pn {
                        info[[j * pn + p, k * pn + q]] += w * xi[p] * xi[q];
                    }
                }
            }
        }
    }
    info
}

/// Maximizes the Dirichlet log-likelihood over all `J × P` coefficients with
/// Fisher-scoring directions (gradient directions when the information is
/// not positive definite) and backtracking. Converged when the gradient's
/// max-norm is below `control.tol`.
pub fn dirichlet_fit(
    design: &DesignMatrix,
    y: &Array2<f64>,
    control: FitControl,
) -> Result<DirichletModel> {
    let x = &design.x;
    if y.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
        return Err(Error::invalid(
            "Dirichlet outcomes must lie strictly inside (0, 1)",
        ));
    }
    if independent_columns(x, 1e-9).len() != x.ncols() {
        return Err(Error::invalid("Dirichlet design matrix is not full rank"));
    }
    let (jn, pn) = (y.ncols(), x.ncols());
    let mut beta = Array2::<f64>::zeros((jn, pn));
    check_dirichlet(x, y, &beta)?;
    let mut ll = dirichlet_log_likelihood(x, y, &beta);
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..control.max_iter {
        let g = dirichlet_gradient(x, y, &beta);
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < control.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let gv = Array1::from_iter(g.iter().copied());
        let dir = match cholesky(&dirichlet_fisher(x, &beta)) {
            Some(l) => cholesky_solve(&l, &gv),
            None => &gv / (1.0 + gv.dot(&gv).sqrt()),
        };
        let dir = dir.into_shape_with_order((jn, pn)).expect("shape");
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand = &beta + &(&dir * t);
            let cll = dirichlet_log_likelihood(x, y, &cand);
            if cll.is_finite() && cll >= ll - 1e-12 * (1.0 + ll.abs()) {
                moved = cand != beta;
                beta = cand;
                ll = cll;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    if !converged {
        let g = dirichlet_gradient(x, y, &beta);
        converged = g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < control.tol;
        if !converged {
            log::warn!("Dirichlet regression did not converge after {iterations} iterations");
        }
    }
    Ok(DirichletModel {
        columns: design.columns.clone(),
        beta,
        converged,
        iterations,
        log_likelihood: ll,
    })
}

pub enum QoiModel<'a> {
    Dirichlet(&'a DirichletModel),
    Logistic(&'a LogisticFit),
}

/// Average predicted outcome with `column` set to its `p_hi` quantile minus
/// the same with its `p_lo` quantile. Dirichlet models give one Δ per
/// outcome; logistic models give one Δ for the probability of `y = 1`.
pub fn qoi_delta(
    model: &QoiModel<'_>,
    design: &DesignMatrix,
    column: &str,
    p_hi: f64,
    p_lo: f64,
) -> Result<Vec<f64>> {
    let c = design.column_index(column)?;
    let col: Vec<f64> = design.x.column(c).to_vec();
    let (hi, lo) = (quantile(&col, p_hi)?, quantile(&col, p_lo)?);
    let at = |v: f64| {
        let mut x = design.x.clone();
        x.column_mut(c).fill(v);
        x
    };
    let average = |x: Array2<f64>| -> Vec<f64> {
        match model {
            QoiModel::Dirichlet(m) => m
                .predict_mean(&x)
                .mean_axis(Axis(0))
                .expect("rows")
                .to_vec(),
            QoiModel::Logistic(m) => {
                let b = Array1::from(m.coef.clone());
                vec![x.dot(&b).mapv(sigmoid).mean().expect("rows")]
            }
        }
    };
    let (yh, yl) = (average(at(hi)), average(at(lo)));
    Ok(yh.iter().zip(&yl).map(|(h, l)| h - l).collect())
}
