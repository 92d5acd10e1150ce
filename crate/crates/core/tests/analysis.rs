use std::collections::HashMap;

use chrono::NaiveDate;
use ndarray::{array, Array1, Array2};
use positionforge::analysis::*;
use positionforge::annotate::{AnnotationRecord, CoarseLabel, LabeledEdge, PositionLabel, Source};
use positionforge::ingest::{Action, Bill, BillId, Chamber, LobbyLine, Party, Stage};
use positionforge::synth::{simulate_dirichlet, simulate_logistic};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("f{i}")).collect()
}

/// Coarse-to-fine 2-D grid maximization of the log-likelihood.
fn grid_argmax(x: &Array2<f64>, y: &[bool]) -> (f64, f64) {
    let (mut c0, mut c1, mut half) = (0.0, 0.0, 4.0);
    while half > 1e-6 {
        let mut best = (f64::NEG_INFINITY, c0, c1);
        for i in 0..=40 {
            for j in 0..=40 {
                let b0 = c0 - half + 2.0 * half * i as f64 / 40.0;
                let b1 = c1 - half + 2.0 * half * j as f64 / 40.0;
                let ll = logistic_log_likelihood(x, y, &array![b0, b1]);
                if ll > best.0 {
                    best = (ll, b0, b1);
                }
            }
        }
        c0 = best.1;
        c1 = best.2;
        half /= 8.0;
    }
    (c0, c1)
}

#[test]
fn logistic_matches_grid_search() {
    let (d, y) = simulate_logistic(400, -0.3, 0.8, 1);
    let fit = logistic_fit(&d, &y, &ids(400)).unwrap();
    assert!(fit.converged && !fit.separation, "{fit:?}");
    let (g0, g1) = grid_argmax(&d.x, &y);
    assert!((fit.coef[0] - g0).abs() < 1e-4, "{} vs {g0}", fit.coef[0]);
    assert!((fit.coef[1] - g1).abs() < 1e-4, "{} vs {g1}", fit.coef[1]);
}

#[test]
fn null_slope_coverage() {
    let mut covered = 0;
    for seed in 0..50 {
        let (d, y) = simulate_logistic(5000, 0.2, 0.0, 100 + seed);
        let fit = logistic_fit(&d, &y, &ids(5000)).unwrap();
        let (b, se) = fit.coefficient(EMPLOYMENT).unwrap();
        if b.abs() < 1.96 * se {
            covered += 1;
        }
    }
    assert!(covered >= 45, "covered {covered}/50");
}

#[test]
fn cluster_robust_se_matches_hand_sandwich() {
    // With one row per cluster CR1 reduces to HC1: n/(n−k) · B M B.
    let (d, y) = simulate_logistic(300, 0.1, 0.5, 9);
    let fit = logistic_fit(&d, &y, &ids(300)).unwrap();
    let beta = Array1::from(fit.coef.clone());
    let p = d.x.dot(&beta).mapv(|z| 1.0 / (1.0 + (-z).exp()));
    let mut h = Array2::<f64>::zeros((2, 2));
    let mut m = Array2::<f64>::zeros((2, 2));
    for i in 0..300 {
        let xi = d.x.row(i);
        let r = f64::from(u8::from(y[i])) - p[i];
        for a in 0..2 {
            for b in 0..2 {
                h[[a, b]] += p[i] * (1.0 - p[i]) * xi[a] * xi[b];
                m[[a, b]] += r * r * xi[a] * xi[b];
            }
        }
    }
    let det = h[[0, 0]] * h[[1, 1]] - h[[0, 1]] * h[[1, 0]];
    let inv = array![
        [h[[1, 1]] / det, -h[[0, 1]] / det],
        [-h[[1, 0]] / det, h[[0, 0]] / det]
    ];
    let v = inv.dot(&m).dot(&inv) * (300.0 / 299.0) * (299.0 / 298.0);
    for k in 0..2 {
        assert!((fit.se[k] - v[[k, k]].sqrt()).abs() < 1e-10);
    }
}

#[test]
fn logistic_flags_and_collinearity() {
    let (d, _) = simulate_logistic(50, 0.0, 1.0, 2);
    let fit = logistic_fit(&d, &vec![true; 50], &ids(50)).unwrap();
    assert!(fit.separation);
    let mut d2 = d.clone();
    let extra = d.x.column(1).mapv(|v| 2.0 * v);
    d2.x = ndarray::concatenate![ndarray::Axis(1), d.x, extra.insert_axis(ndarray::Axis(1))];
    d2.columns.push("twice".into());
    let (_, y) = simulate_logistic(50, 0.0, 1.0, 2);
    let fit = logistic_fit(&d2, &y, &ids(50)).unwrap();
    assert_eq!(fit.dropped, vec!["twice".to_string()]);
    assert_eq!(fit.coef[2], 0.0);
}

#[test]
fn smoothing_arithmetic() {
    let y = array![[1.0, 0.0, 0.0, 0.0]];
    let s = smooth_proportions(&y, 100);
    for (a, b) in s.iter().zip([0.9925, 0.0025, 0.0025, 0.0025]) {
        assert!((a - b).abs() < 1e-15);
    }
    let inner = array![[0.1, 0.2, 0.3, 0.4]];
    let s = smooth_proportions(&inner, 10_000_000);
    assert!((s - &inner).iter().all(|d| d.abs() < 1e-7));
}

proptest! {
    #[test]
    fn smoothing_preserves_row_sums(seed in 0u64..1000, n in 2usize..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y = Array2::<f64>::zeros((5, 4));
        for mut r in y.rows_mut() {
            r.mapv_inplace(|_| rng.random::<f64>());
            let s = r.sum();
            r /= s;
        }
        let s = smooth_proportions(&y, n);
        for r in s.rows() {
            prop_assert!((r.sum() - 1.0).abs() < 1e-12);
            prop_assert!(r.iter().all(|&v| v > 0.0));
        }
    }
}

fn beta_true() -> Array2<f64> {
    array![[1.0, 0.3], [0.2, -0.2], [0.5, 0.0], [0.0, 0.4]]
}

#[test]
fn dirichlet_gradient_matches_finite_differences() {
    let (d, y) = simulate_dirichlet(200, &beta_true(), 3);
    let beta = array![[0.4, 0.1], [0.1, -0.3], [0.6, 0.2], [-0.2, 0.5]];
    let g = dirichlet_gradient(&d.x, &y, &beta);
    let eps = 1e-5;
    for j in 0..4 {
        for p in 0..2 {
            let mut up = beta.clone();
            up[[j, p]] += eps;
            let mut dn = beta.clone();
            dn[[j, p]] -= eps;
            let num = (dirichlet_log_likelihood(&d.x, &y, &up)
                - dirichlet_log_likelihood(&d.x, &y, &dn))
                / (2.0 * eps);
            let rel = (num - g[[j, p]]).abs() / num.abs().max(g[[j, p]].abs()).max(1e-8);
            assert!(rel < 1e-5, "({j},{p}) {num} vs {}", g[[j, p]]);
        }
    }
}

#[test]
fn dirichlet_recovers_coefficients() {
    let b = beta_true();
    let (d, y) = simulate_dirichlet(2000, &b, 7);
    let m = dirichlet_fit(
        &d,
        &y,
        FitControl {
            max_iter: 200,
            tol: 1e-6,
        },
    )
    .unwrap();
    assert!(m.converged);
    for (est, truth) in m.beta.iter().zip(b.iter()) {
        assert!((est - truth).abs() < 0.1, "{est} vs {truth}");
    }
    let delta = qoi_delta(&QoiModel::Dirichlet(&m), &d, EMPLOYMENT, 0.9, 0.1).unwrap();
    assert!(delta.iter().sum::<f64>().abs() < 1e-9);
    for r in m.predict_mean(&d.x).rows() {
        assert!((r.sum() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn intercept_only_dirichlet_matches_coordinate_grid() {
    let (d, y) = simulate_dirichlet(500, &array![[0.7, 0.0], [0.1, 0.0], [-0.3, 0.0]], 12);
    let d1 = DesignMatrix {
        columns: vec!["(Intercept)".into()],
        x: d.x.slice(ndarray::s![.., ..1]).to_owned(),
    };
    let m = dirichlet_fit(
        &d1,
        &y,
        FitControl {
            max_iter: 200,
            tol: 1e-9,
        },
    )
    .unwrap();
    for j in 0..3 {
        let ll = |v: f64| {
            let mut b = m.beta.clone();
            b[[j, 0]] = v;
            dirichlet_log_likelihood(&d1.x, &y, &b)
        };
        let (mut c, mut half) = (m.beta[[j, 0]], 1.0);
        while half > 1e-8 {
            let best = (0..=100)
                .map(|i| c - half + 2.0 * half * i as f64 / 100.0)
                .max_by(|a, b| ll(*a).total_cmp(&ll(*b)))
                .unwrap();
            c = best;
            half /= 20.0;
        }
        assert!(
            (c.exp() - m.beta[[j, 0]].exp()).abs() < 1e-5,
            "α_{j}: grid {} fit {}",
            c.exp(),
            m.beta[[j, 0]].exp()
        );
    }
}

#[test]
fn zero_slope_gives_exact_zero_delta() {
    let (d, _) = simulate_dirichlet(100, &beta_true(), 1);
    let m = DirichletModel {
        columns: d.columns.clone(),
        beta: array![[0.3, 0.0], [0.1, 0.0], [-0.2, 0.0], [0.5, 0.0]],
        converged: true,
        iterations: 0,
        log_likelihood: 0.0,
    };
    let delta = qoi_delta(&QoiModel::Dirichlet(&m), &d, EMPLOYMENT, 0.9, 0.1).unwrap();
    assert!(delta.iter().all(|&v| v == 0.0));
}

#[test]
fn logistic_delta_matches_plug_in() {
    let (d, y) = simulate_logistic(3000, -0.5, 0.7, 21);
    let fit = logistic_fit(&d, &y, &ids(3000)).unwrap();
    let delta = qoi_delta(&QoiModel::Logistic(&fit), &d, EMPLOYMENT, 0.9, 0.1).unwrap()[0];
    assert!(delta > 0.0);
    let col: Vec<f64> = d.x.column(1).to_vec();
    let (hi, lo) = (quantile(&col, 0.9).unwrap(), quantile(&col, 0.1).unwrap());
    let s = |z: f64| 1.0 / (1.0 + (-z).exp());
    // The design has no other covariates, so every row predicts the same.
    let plug = s(fit.coef[0] + fit.coef[1] * hi) - s(fit.coef[0] + fit.coef[1] * lo);
    assert!((delta - plug).abs() < 1e-12);
}

#[test]
fn bootstrap_properties() {
    let rows: Vec<(String, f64)> = (0..40)
        .map(|i| (format!("f{}", i % 10), i as f64))
        .collect();
    let constant = block_bootstrap(&rows, |r| r.0.as_str(), |_| Ok(vec![3.0]), 200, 1).unwrap();
    assert_eq!(constant[0].ci90, (3.0, 3.0));
    assert_eq!(constant[0].ci95, (3.0, 3.0));
    let mean = |s: &[&(String, f64)]| Ok(vec![s.iter().map(|r| r.1).sum::<f64>() / s.len() as f64]);
    let a = block_bootstrap(&rows, |r| r.0.as_str(), mean, 300, 5).unwrap();
    let b = block_bootstrap(&rows, |r| r.0.as_str(), mean, 300, 5).unwrap();
    assert_eq!(a, b);
    let mut rev = rows.clone();
    rev.reverse();
    let c = block_bootstrap(&rev, |r| r.0.as_str(), mean, 300, 5).unwrap();
    assert!((a[0].ci95.0 - c[0].ci95.0).abs() < 1e-12 && (a[0].ci95.1 - c[0].ci95.1).abs() < 1e-12);
    assert!(a[0].ci95.0 <= a[0].ci90.0 && a[0].ci90.1 <= a[0].ci95.1);
    let fails = block_bootstrap(
        &rows,
        |r| r.0.as_str(),
        |s: &[&(String, f64)]| {
            if !s.iter().any(|r| r.0 == "f3") {
                Err(positionforge::Error::invalid("x"))
            } else {
                mean(s)
            }
        },
        100,
        2,
    )
    .unwrap();
    assert_eq!(fails[0].n_boot + fails[0].failed, 100);
    assert!(block_bootstrap(&rows[..1], |r| r.0.as_str(), mean, 10, 0).is_err());
}

#[test]
fn bootstrap_width_matches_analytic_gaussian_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let n = 400;
    let rows: Vec<(String, f64)> = (0..n)
        .map(|i| {
            (
                format!("f{i:04}"),
                rng.sample::<f64, _>(rand_distr::StandardNormal) * 2.0,
            )
        })
        .collect();
    let mean = |s: &[&(String, f64)]| Ok(vec![s.iter().map(|r| r.1).sum::<f64>() / s.len() as f64]);
    let r = block_bootstrap(&rows, |r| r.0.as_str(), mean, 2000, 3).unwrap();
    let m = rows.iter().map(|r| r.1).sum::<f64>() / n as f64;
    let sd = (rows.iter().map(|r| (r.1 - m).powi(2)).sum::<f64>() / n as f64).sqrt();
    let analytic = 2.0 * 1.959964 * sd / (n as f64).sqrt();
    let width = r[0].ci95.1 - r[0].ci95.0;
    assert!(
        (width / analytic - 1.0).abs() < 0.1,
        "width {width} analytic {analytic}"
    );
}

#[test]
fn pearson_matches_two_pass() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
    let y: Vec<f64> = x.iter().map(|v| v * 0.3 + rng.random::<f64>()).collect();
    let n = 100.0;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov = x
        .iter()
        .zip(&y)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / (n - 1.0);
    let sx = (x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let sy = (y.iter().map(|b| (b - my).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((pearson(&x, &y).unwrap() - cov / (sx * sy)).abs() < 1e-12);
}

fn bill(n: u32, subject: &str, final_state: &str, actions: Vec<Action>) -> Bill {
    Bill {
        bill_id: BillId::new(Chamber::Senate, n, 115),
        short_title: String::new(),
        official_title: String::new(),
        summary: String::new(),
        subject: subject.into(),
        sponsor_id: "L".into(),
        cosponsor_ids: vec![],
        party: Party::Republican,
        final_state: final_state.into(),
        action_history: actions,
        related_bill_ids: vec![],
    }
}

#[test]
fn taxation_ratio_fixture() {
    // 239 bills and 1000 positions split 833/43/124.
    let bills: Vec<Bill> = (1..=239)
        .map(|n| bill(n, "Taxation", "REFERRED", vec![]))
        .collect();
    let mut edges = Vec::new();
    for i in 0..1000u32 {
        let label = if i < 833 {
            CoarseLabel::Support
        } else if i < 876 {
            CoarseLabel::Oppose
        } else {
            CoarseLabel::Engage
        };
        edges.push(LabeledEdge::new(
            format!("g{i}"),
            BillId::new(Chamber::Senate, i % 239 + 1, 115),
            label,
            Source::Llm,
            1.0,
        ));
    }
    let t = position_ratio_by_subject(&edges, &bills);
    assert_eq!(t.len(), 1);
    let r = &t[0];
    assert_eq!((r.subject.as_str(), r.unique_bills), ("Taxation", 239));
    assert!(
        (r.support - 0.833).abs() < 1e-12
            && (r.oppose - 0.043).abs() < 1e-12
            && (r.engage - 0.124).abs() < 1e-12
    );
    assert!((r.avg_lobbying - 1000.0 / 239.0).abs() < 1e-12);
    let only = position_ratio_by_subject(&edges[..5], &bills);
    assert_eq!(
        (only[0].support, only[0].oppose, only[0].engage),
        (1.0, 0.0, 0.0)
    );
}

fn day(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

#[test]
fn stage_frequency_matches_group_by() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let stages = [
        Stage::ReferredToCommittee,
        Stage::CommitteeReported,
        Stage::PassedChamber,
        Stage::Enacted,
    ];
    let bills: Vec<Bill> = (1..=12)
        .map(|n| {
            let k = rng.random_range(1..=4);
            let actions = (0..k)
                .map(|i| Action {
                    date: day("2017-01-01") + chrono::Days::new(90 * i as u64 + n as u64),
                    stage: stages[i],
                })
                .collect();
            bill(
                n,
                "Health",
                if k == 4 { "ENACTED:SIGNED" } else { "REFERRED" },
                actions,
            )
        })
        .collect();
    let by_id: HashMap<BillId, &Bill> = bills.iter().map(|b| (b.bill_id, b)).collect();
    let mut annotations = Vec::new();
    let mut events = HashMap::new();
    for r in 0..200 {
        let b = &bills[rng.random_range(0..12)];
        let (year, q) = (2017 + rng.random_range(0..2), rng.random_range(1..=4u8));
        let report_id = format!("r{r}");
        if let Some(e) = stage_at(b, report_deadline(year, q).unwrap()).unwrap() {
            events.insert((report_id.clone(), b.bill_id), e);
        }
        annotations.push(AnnotationRecord {
            client_id: "g".into(),
            bill_id: b.bill_id,
            line: LobbyLine {
                report_id,
                index: 0,
                text: String::new(),
                bill_refs: vec![b.bill_id],
            },
            label: PositionLabel::ALL[rng.random_range(0..5)],
            source: Source::Rule,
            raw_response: None,
        });
    }
    for filter in [None, Some("ENACTED:SIGNED")] {
        let t = stage_frequency(&annotations, &events, &by_id, filter);
        let mut brute: HashMap<(TimelineStage, usize), usize> = HashMap::new();
        let mut n = 0;
        for a in &annotations {
            let col = match a.label {
                PositionLabel::Support => 0,
                PositionLabel::Oppose => 1,
                PositionLabel::Amend => 2,
                PositionLabel::Monitor => 3,
                PositionLabel::Mention => continue,
            };
            if filter.is_some_and(|f| by_id[&a.bill_id].final_state != f) {
                continue;
            }
            if let Some(e) = events.get(&(a.line.report_id.clone(), a.bill_id)) {
                *brute.entry((e.stage, col)).or_default() += 1;
                n += 1;
            }
        }
        for (s, row) in &t.rows {
            for (c, &v) in row.iter().enumerate() {
                assert_eq!(v, brute.get(&(*s, c)).copied().unwrap_or(0));
            }
        }
        assert_eq!(t.total, n);
        assert_eq!(
            t.rows.keys().map(|s| t.row_total(*s)).sum::<usize>(),
            t.total
        );
        assert_eq!(t.column_totals.iter().sum::<usize>(), t.total);
    }
}

proptest! {
    #[test]
    fn stage_matches_linear_scan(gaps in proptest::collection::vec(0u64..200, 1..6), offset in 0u64..1500, terminal in any::<bool>()) {
        let mut date = day("2015-01-01");
        let mut actions = Vec::new();
        for (i, g) in gaps.iter().enumerate() {
            date = date + chrono::Days::new(*g);
            let stage = if terminal && i + 1 == gaps.len() { Stage::Enacted } else { [Stage::ReferredToCommittee, Stage::CommitteeReported, Stage::PassedChamber][i % 3] };
            actions.push(Action { date, stage });
        }
        let b = bill(1, "x", "y", actions.clone());
        let when = day("2015-01-01") + chrono::Days::new(offset);
        let got = stage_at(&b, when).unwrap().map(|e| e.stage);
        let mut want = None;
        for (i, a) in actions.iter().enumerate() {
            if a.date <= when {
                want = Some(if i + 1 == actions.len() && a.stage.is_terminal() && a.date < when {
                    TimelineStage::After(a.stage)
                } else {
                    TimelineStage::At(a.stage)
                });
            }
        }
        prop_assert_eq!(got, want);
    }
}
