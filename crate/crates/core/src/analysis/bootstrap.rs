use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::quantile;
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QoiResult {
    pub delta: f64,
    pub ci90: (f64, f64),
    pub ci95: (f64, f64),
    pub n_boot: usize,
    /// Replicates dropped because the statistic failed.
    pub failed: usize,
}

/// Resamples firms with replacement (all rows of a firm together) and
/// recomputes `statistic` `b` times; replicate `r` draws from seed
/// `seed + r`. Firms are ordered by id before sampling. Returns one
/// percentile interval per statistic component.
pub fn block_bootstrap<T, K, S>(
    data: &[T],
    firm_of: K,
    statistic: S,
    b: usize,
    seed: u64,
) -> Result<Vec<QoiResult>>
where
    T: Sync,
    K: Fn(&T) -> &str,
    S: Fn(&[&T]) -> Result<Vec<f64>> + Sync + Send,
{
    let mut groups: BTreeMap<&str, Vec<&T>> = BTreeMap::new();
    for row in data {
        groups.entry(firm_of(row)).or_default().push(row);
    }
    if groups.len() < 2 {
        return Err(Error::invalid("block bootstrap needs at least two firms"));
    }
    let blocks: Vec<Vec<&T>> = groups.into_values().collect();
    let all: Vec<&T> = blocks.iter().flatten().copied().collect();
    let point = statistic(&all)?;
    let reps: Vec<Option<Vec<f64>>> = par::map_range(b, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
        let mut sample = Vec::with_capacity(all.len());
        for _ in 0..blocks.len() {
            sample.extend_from_slice(&blocks[rng.random_range(0..blocks.len())]);
        }
        statistic(&sample)
            .ok()
            .filter(|v| v.len() == point.len() && v.iter().all(|x| x.is_finite()))
    });
    let ok: Vec<Vec<f64>> = reps.iter().flatten().cloned().collect();
    let failed = b - ok.len();
    if failed > 0 {
        log::warn!("{failed} of {b} bootstrap replicates failed");
    }
    if ok.is_empty() {
        return Err(Error::Degenerate("every bootstrap replicate failed".into()));
    }
    (0..point.len())
        .map(|k| {
            let v: Vec<f64> = ok.iter().map(|r| r[k]).collect();
            Ok(QoiResult {
                delta: point[k],
                ci90: (quantile(&v, 0.05)?, quantile(&v, 0.95)?),
                ci95: (quantile(&v, 0.025)?, quantile(&v, 0.975)?),
                n_boot: ok.len(),
                failed,
            })
        })
        .collect()
}
