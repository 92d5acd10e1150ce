use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CoarseLabel, PositionLabel};
use crate::error::{Error, Result};

/// A closed label set that can be scored.
pub trait ClassLabel: Copy + Eq + 'static {
    fn all() -> &'static [Self];
    fn name(self) -> &'static str;
    /// Whether the class enters the macro average even when absent from gold.
    fn always_scored(self) -> bool {
        true
    }
}

impl ClassLabel for PositionLabel {
    fn all() -> &'static [Self] {
        &PositionLabel::ALL
    }
    fn name(self) -> &'static str {
        self.as_str()
    }
    fn always_scored(self) -> bool {
        self != PositionLabel::Mention
    }
}

impl ClassLabel for CoarseLabel {
    fn all() -> &'static [Self] {
        &CoarseLabel::ALL
    }
    fn name(self) -> &'static str {
        self.as_str()
    }
}

/// Accuracy and F1 scores, all on a 0–100 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class_f1: BTreeMap<String, f64>,
    /// Class names in confusion-matrix order.
    pub labels: Vec<String>,
    /// `confusion[gold][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn evaluate<L: ClassLabel>(predictions: &[L], gold: &[L]) -> Result<Metrics> {
    if predictions.len() != gold.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: gold.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty label set"));
    }
    let classes = L::all();
    let idx = |l: L| {
        classes
            .iter()
            .position(|c| *c == l)
            .expect("label in its own set")
    };
    let k = classes.len();
    let mut confusion = vec![vec![0usize; k]; k];
    for (p, g) in predictions.iter().zip(gold) {
        confusion[idx(*g)][idx(*p)] += 1;
    }
    let correct: usize = (0..k).map(|i| confusion[i][i]).sum();
    let accuracy = 100.0 * correct as f64 / gold.len() as f64;

    let mut per_class_f1 = BTreeMap::new();
    let mut scored = Vec::new();
    for (i, c) in classes.iter().enumerate() {
        let tp = confusion[i][i] as f64;
        let pred_pos: usize = (0..k).map(|g| confusion[g][i]).sum();
        let gold_pos: usize = confusion[i].iter().sum();
        let denom = pred_pos as f64 + gold_pos as f64;
        // harmonic mean of precision and recall, 0/0 -> 0
        let f1 = if denom == 0.0 {
            0.0
        } else {
            100.0 * 2.0 * tp / denom
        };
        per_class_f1.insert(c.name().to_string(), f1);
        if c.always_scored() || gold_pos > 0 {
            scored.push(f1);
        }
    }
    let macro_f1 = scored.iter().sum::<f64>() / scored.len() as f64;
    Ok(Metrics {
        accuracy,
        macro_f1,
        per_class_f1,
        labels: classes.iter().map(|c| c.name().to_string()).collect(),
        confusion,
    })
}
