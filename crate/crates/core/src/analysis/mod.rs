//! Stage timelines, position tables, firm-size regressions, bootstrap
//! intervals and score correlation.

mod bootstrap;
mod firms;
mod linalg;
mod regression;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use bootstrap::{block_bootstrap, QoiResult};
pub use firms::{firm_years, read_firms, write_firms, FirmRecord};
pub use linalg::{cholesky, cholesky_solve, independent_columns, spd_inverse};
pub use regression::{
    dirichlet_fit, dirichlet_gradient, dirichlet_log_likelihood, logistic_fit,
    logistic_log_likelihood, qoi_delta, smooth_proportions, DirichletModel, FitControl,
    LogisticFit, QoiModel,
};

use crate::annotate::{AnnotationRecord, CoarseLabel, LabeledEdge, PositionLabel};
use crate::error::{Error, Result};
use crate::ingest::{Bill, BillId, RawReport, Stage};

/// Position of a lobbying timestamp on a bill's timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TimelineStage {
    At(Stage),
    After(Stage),
}

impl fmt::Display for TimelineStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimelineStage::At(s) => f.write_str(s.as_str()),
            TimelineStage::After(s) => write!(f, "After {s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEvent {
    pub bill_id: BillId,
    pub stage: TimelineStage,
    /// Filing deadline used as the lobbying timestamp.
    pub date: NaiveDate,
}

/// Filing deadline of a quarterly report: the 20th of the month after the
/// quarter ends.
pub fn report_deadline(year: i32, quarter: u8) -> Result<NaiveDate> {
    let (y, m) = match quarter {
        1 => (year, 4),
        2 => (year, 7),
        3 => (year, 10),
        4 => (year + 1, 1),
        q => return Err(Error::invalid(format!("quarter {q} out of range"))),
    };
    NaiveDate::from_ymd_opt(y, m, 20)
        .ok_or_else(|| Error::invalid(format!("no deadline for {year}Q{quarter}")))
}

/// Stage of `bill` at the report's deadline: the latest action dated on or
/// before it, or `After <terminal>` once a terminal final action is strictly
/// in the past. `None` when the deadline precedes the first action.
pub fn map_report_to_stage(report: &RawReport, bill: &Bill) -> Result<Option<StageEvent>> {
    let date = report_deadline(report.year, report.quarter)?;
    stage_at(bill, date)
}

pub fn stage_at(bill: &Bill, date: NaiveDate) -> Result<Option<StageEvent>> {
    let h = &bill.action_history;
    if h.is_empty() {
        return Err(Error::invalid(format!(
            "bill {} has no action history",
            bill.bill_id
        )));
    }
    let Some(i) = h.iter().rposition(|a| a.date <= date) else {
        return Ok(None);
    };
    let a = &h[i];
    let stage = if i + 1 == h.len() && a.stage.is_terminal() && a.date < date {
        TimelineStage::After(a.stage)
    } else {
        TimelineStage::At(a.stage)
    };
    Ok(Some(StageEvent {
        bill_id: bill.bill_id,
        stage,
        date,
    }))
}

pub const FINE_LABELS: [PositionLabel; 4] = [
    PositionLabel::Support,
    PositionLabel::Oppose,
    PositionLabel::Amend,
    PositionLabel::Monitor,
];

/// Stage × {Support, Oppose, Amend, Monitor} counts with margins.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTable {
    pub rows: BTreeMap<TimelineStage, [usize; 4]>,
    pub column_totals: [usize; 4],
    pub total: usize,
}

impl StageTable {
    pub fn row_total(&self, s: TimelineStage) -> usize {
        self.rows.get(&s).map_or(0, |r| r.iter().sum())
    }
}

/// Tabulates annotations by the stage of their bill at the report deadline.
/// Mention annotations, annotations without a stage event, and (when a
/// filter is given) bills whose final state differs are skipped.
pub fn stage_frequency(
    annotations: &[AnnotationRecord],
    events: &HashMap<(String, BillId), StageEvent>,
    bills: &HashMap<BillId, &Bill>,
    final_state: Option<&str>,
) -> StageTable {
    let mut t = StageTable::default();
    for a in annotations {
        let Some(col) = FINE_LABELS.iter().position(|l| *l == a.label) else {
            continue;
        };
        if let Some(fs) = final_state {
            if bills.get(&a.bill_id).is_none_or(|b| b.final_state != fs) {
                continue;
            }
        }
        let Some(e) = events.get(&(a.line.report_id.clone(), a.bill_id)) else {
            continue;
        };
        t.rows.entry(e.stage).or_default()[col] += 1;
        t.column_totals[col] += 1;
        t.total += 1;
    }
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRatio {
    pub subject: String,
    pub unique_bills: usize,
    pub avg_lobbying: f64,
    pub support: f64,
    pub oppose: f64,
    pub engage: f64,
}

/// Per-subject bill counts and coarse position shares, sorted by support
/// share (descending) then subject.
pub fn position_ratio_by_subject(edges: &[LabeledEdge], bills: &[Bill]) -> Vec<SubjectRatio> {
    let subject: HashMap<BillId, &str> = bills
        .iter()
        .map(|b| (b.bill_id, b.subject.as_str()))
        .collect();
    let mut acc: BTreeMap<&str, (std::collections::BTreeSet<BillId>, [usize; 3])> = BTreeMap::new();
    for e in edges {
        let Some(s) = subject.get(&e.bill_id) else {
            continue;
        };
        let entry = acc.entry(s).or_default();
        entry.0.insert(e.bill_id);
        entry.1[e.label.index()] += 1;
    }
    let mut out: Vec<SubjectRatio> = acc
        .into_iter()
        .map(|(s, (set, c))| {
            let n: usize = c.iter().sum();
            let f = |k: usize| c[k] as f64 / n as f64;
            SubjectRatio {
                subject: s.to_string(),
                unique_bills: set.len(),
                avg_lobbying: n as f64 / set.len() as f64,
                support: f(CoarseLabel::Support.index()),
                oppose: f(CoarseLabel::Oppose.index()),
                engage: f(CoarseLabel::Engage.index()),
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.support
            .total_cmp(&a.support)
            .then_with(|| a.subject.cmp(&b.subject))
    });
    out
}

/// Sample correlation of two equal-length, non-constant vectors.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::invalid(
            "correlation needs at least two observations",
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("correlation of a constant vector".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Type-7 quantile (linear interpolation between order statistics).
pub fn quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid("quantile needs data and p in [0, 1]"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    Ok(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

/// One firm in one year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmYear {
    pub firm_id: String,
    pub year: i32,
    pub lobbied: bool,
    /// Support, Oppose, Amend, Monitor shares when lobbied.
    pub proportions: Option<[f64; 4]>,
    pub log_employment: f64,
    #[serde(default)]
    pub controls: BTreeMap<String, f64>,
    #[serde(default)]
    pub naics2: Option<String>,
}

/// Named design-matrix columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub columns: Vec<String>,
    pub x: ndarray::Array2<f64>,
}

impl DesignMatrix {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::invalid(format!("no design column {name}")))
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            columns: self.columns.clone(),
            x: self.x.select(ndarray::Axis(0), rows),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    /// Extra numeric columns taken from `FirmYear::controls`.
    pub controls: Vec<String>,
    pub year_effects: bool,
    pub naics_effects: bool,
}

pub const EMPLOYMENT: &str = "log_employment";

/// Intercept, log employment, controls, then year and NAICS-2 dummies
/// (first level omitted).
pub fn build_design(rows: &[FirmYear], spec: &DesignSpec) -> Result<DesignMatrix> {
    let mut columns = vec!["(Intercept)".to_string(), EMPLOYMENT.to_string()];
    columns.extend(spec.controls.iter().cloned());
    let years: Vec<i32> = {
        let s: std::collections::BTreeSet<i32> = rows.iter().map(|r| r.year).collect();
        s.into_iter().collect()
    };
    let naics: Vec<String> = {
        let s: std::collections::BTreeSet<String> =
            rows.iter().filter_map(|r| r.naics2.clone()).collect();
        s.into_iter().collect()
    };
    if spec.year_effects {
        columns.extend(years.iter().skip(1).map(|y| format!("year_{y}")));
    }
    if spec.naics_effects {
        columns.extend(naics.iter().skip(1).map(|n| format!("naics_{n}")));
    }
    let mut x = ndarray::Array2::zeros((rows.len(), columns.len()));
    for (i, r) in rows.iter().enumerate() {
        x[[i, 0]] = 1.0;
        x[[i, 1]] = r.log_employment;
        let mut c = 2;
        for name in &spec.controls {
            x[[i, c]] = *r.controls.get(name).ok_or_else(|| {
                Error::invalid(format!(
                    "firm {} year {} lacks control {name}",
                    r.firm_id, r.year
                ))
            })?;
            c += 1;
        }
        if spec.year_effects {
            if let Some(k) = years.iter().skip(1).position(|y| *y == r.year) {
                x[[i, c + k]] = 1.0;
            }
            c += years.len().saturating_sub(1);
        }
        if spec.naics_effects {
            if let Some(k) = naics
                .iter()
                .skip(1)
                .position(|n| Some(n) == r.naics2.as_ref())
            {
                x[[i, c + k]] = 1.0;
            }
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("design matrix has non-finite values"));
    }
    Ok(DesignMatrix { columns, x })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Action, Chamber, Party};

    fn bill(actions: &[(&str, Stage)]) -> Bill {
        Bill {
            bill_id: BillId::new(Chamber::House, 1, 115),
            short_title: String::new(),
            official_title: String::new(),
            summary: String::new(),
            subject: "Taxation".into(),
            sponsor_id: "L1".into(),
            cosponsor_ids: vec![],
            party: Party::Democrat,
            final_state: "ENACTED:SIGNED".into(),
            action_history: actions
                .iter()
                .map(|(d, s)| Action {
                    date: d.parse().unwrap(),
                    stage: *s,
                })
                .collect(),
            related_bill_ids: vec![],
        }
    }

    #[test]
    fn deadlines() {
        assert_eq!(
            report_deadline(2017, 1).unwrap(),
            NaiveDate::from_ymd_opt(2017, 4, 20).unwrap()
        );
        assert_eq!(
            report_deadline(2017, 4).unwrap(),
            NaiveDate::from_ymd_opt(2018, 1, 20).unwrap()
        );
        assert!(report_deadline(2017, 5).is_err());
    }

    #[test]
    fn stage_rules() {
        let b = bill(&[
            ("2016-03-01", Stage::ReferredToCommittee),
            ("2017-01-15", Stage::Enacted),
        ]);
        let d = report_deadline(2017, 2).unwrap();
        assert_eq!(
            stage_at(&b, d).unwrap().unwrap().stage,
            TimelineStage::After(Stage::Enacted)
        );
        assert_eq!(
            TimelineStage::After(Stage::Enacted).to_string(),
            "After Enacted"
        );
        let on = NaiveDate::from_ymd_opt(2017, 1, 15).unwrap();
        assert_eq!(
            stage_at(&b, on).unwrap().unwrap().stage,
            TimelineStage::At(Stage::Enacted)
        );
        let early = NaiveDate::from_ymd_opt(2016, 1, 1).unwrap();
        assert_eq!(stage_at(&b, early).unwrap(), None);
        assert!(stage_at(&bill(&[]), on).is_err());
    }

    #[test]
    fn pearson_and_quantile() {
        let x = [1.0, 2.0, 3.5, 4.0];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!(pearson(&x, &[1.0; 4]).is_err());
        assert_eq!(quantile(&[4.0, 1.0, 3.0, 2.0], 0.5).unwrap(), 2.5);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.9).unwrap(), 4.6);
        assert_eq!(quantile(&[7.0], 0.3).unwrap(), 7.0);
    }
}
