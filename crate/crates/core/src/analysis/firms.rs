use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FirmYear, FINE_LABELS};
use crate::annotate::AnnotationRecord;
use crate::error::{Error, Result};
use crate::ingest::RawReport;

/// One row of the firm panel. `client_id` links a firm to an interest
/// group; firms that never lobby leave it empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmRecord {
    pub firm_id: String,
    pub client_id: Option<String>,
    pub year: i32,
    pub log_employment: f64,
    pub naics2: Option<String>,
    pub controls: BTreeMap<String, f64>,
}

const FIXED: [&str; 5] = ["firm_id", "client_id", "year", "log_employment", "naics2"];

/// Reads the firm CSV. Columns beyond the fixed five are numeric controls.
pub fn read_firms(path: &Path) -> Result<Vec<FirmRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(firm), Some(year), Some(emp)) = (col("firm_id"), col("year"), col("log_employment"))
    else {
        return Err(Error::Rows {
            path: path.to_path_buf(),
            errors: vec![(1, "need firm_id, year and log_employment columns".into())],
        });
    };
    let (client, naics) = (col("client_id"), col("naics2"));
    let extra: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !FIXED.contains(h))
        .map(|(i, h)| (i, h.to_string()))
        .collect();
    let mut out = Vec::new();
    let mut errors = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                errors.push((line, e.to_string()));
                continue;
            }
        };
        let opt = |c: Option<usize>| {
            c.map(|c| rec[c].trim())
                .filter(|v| !v.is_empty())
                .map(str::to_string)
        };
        let parsed = (|| -> std::result::Result<FirmRecord, String> {
            let mut controls = BTreeMap::new();
            for (c, name) in &extra {
                let v: f64 = rec[*c]
                    .trim()
                    .parse()
                    .map_err(|_| format!("control `{name}` is not numeric"))?;
                controls.insert(name.clone(), v);
            }
            Ok(FirmRecord {
                firm_id: rec[firm].trim().to_string(),
                client_id: opt(client),
                year: rec[year]
                    .trim()
                    .parse()
                    .map_err(|_| "year is not an integer".to_string())?,
                log_employment: rec[emp]
                    .trim()
                    .parse()
                    .map_err(|_| "log_employment is not numeric".to_string())?,
                naics2: opt(naics),
                controls,
            })
        })();
        match parsed {
            Ok(f) if f.firm_id.is_empty() => errors.push((line, "empty firm_id".into())),
            Ok(f) => out.push(f),
            Err(msg) => errors.push((line, msg)),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(Error::Rows {
            path: path.to_path_buf(),
            errors,
        })
    }
}

pub fn write_firms(path: &Path, firms: &[FirmRecord]) -> Result<()> {
    let names: Vec<String> = {
        let s: std::collections::BTreeSet<&String> =
            firms.iter().flat_map(|f| f.controls.keys()).collect();
        s.into_iter().cloned().collect()
    };
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = FIXED.to_vec();
    header.extend(names.iter().map(String::as_str));
    w.write_record(&header)?;
    for f in firms {
        let mut row = vec![
            f.firm_id.clone(),
            f.client_id.clone().unwrap_or_default(),
            f.year.to_string(),
            f.log_employment.to_string(),
            f.naics2.clone().unwrap_or_default(),
        ];
        for n in &names {
            row.push(f.controls.get(n).map(f64::to_string).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Joins the firm panel with annotations. A firm-year is lobbied when its
/// client filed a report that year; proportions are the shares of Support,
/// Oppose, Amend and Monitor annotations on those reports, if any.
pub fn firm_years(
    firms: &[FirmRecord],
    reports: &[RawReport],
    annotations: &[AnnotationRecord],
) -> Vec<FirmYear> {
    let report_year: HashMap<&str, (&str, i32)> = reports
        .iter()
        .map(|r| (r.report_id.as_str(), (r.client_id.as_str(), r.year)))
        .collect();
    let filed: std::collections::HashSet<(&str, i32)> = report_year.values().copied().collect();
    let mut counts: HashMap<(&str, i32), [usize; 4]> = HashMap::new();
    for a in annotations {
        let Some(col) = FINE_LABELS.iter().position(|l| *l == a.label) else {
            continue;
        };
        if let Some(&(client, year)) = report_year.get(a.line.report_id.as_str()) {
            counts.entry((client, year)).or_default()[col] += 1;
        }
    }
    firms
        .iter()
        .map(|f| {
            let key = f.client_id.as_deref().map(|c| (c, f.year));
            let lobbied = key.is_some_and(|k| filed.contains(&k));
            let proportions = key.and_then(|k| counts.get(&k)).and_then(|c| {
                let n: usize = c.iter().sum();
                (n > 0).then(|| c.map(|v| v as f64 / n as f64))
            });
            FirmYear {
                firm_id: f.firm_id.clone(),
                year: f.year,
                lobbied,
                proportions,
                log_employment: f.log_employment,
                controls: f.controls.clone(),
                naics2: f.naics2.clone(),
            }
        })
        .collect()
}
