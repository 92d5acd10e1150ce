use std::collections::{BTreeMap, HashMap};

use super::porter::porter_stem;
use crate::par;

/// Lowercases, splits on non-alphanumeric characters, stems, and drops
/// stems shorter than two characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| porter_stem(&t.to_lowercase()))
        .filter(|t| t.chars().count() >= 2)
        .collect()
}

/// Per-document tf-idf vectors over a shared vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct TextFeatures {
    /// Vocabulary in column order; may be shorter than `dim`.
    pub vocabulary: Vec<String>,
    pub dim: usize,
    pub vectors: BTreeMap<String, Vec<f64>>,
}

impl TextFeatures {
    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.vectors.get(id).map(Vec::as_slice)
    }
}

/// Builds `dim`-wide tf-idf vectors.
///
/// The vocabulary is the `dim` stems with the highest document frequency
/// (ties broken lexicographically). Weights are raw term count times
/// `ln((1+N)/(1+df)) + 1`, L2-normalised per document; documents with no
/// vocabulary terms stay all-zero. Vectors are padded with zeros when the
/// corpus has fewer than `dim` distinct stems.
pub fn build_text_features(corpus: &[(String, String)], dim: usize) -> TextFeatures {
    assert!(dim >= 1, "text feature dimension must be positive");
    let docs: Vec<Vec<String>> = par::map(corpus, |(_, text)| tokenize(text));

    let mut df: HashMap<&str, usize> = HashMap::new();
    for doc in &docs {
        let mut uniq: Vec<&str> = doc.iter().map(String::as_str).collect();
        uniq.sort_unstable();
        uniq.dedup();
        for t in uniq {
            *df.entry(t).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = df.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(dim);

    let n = corpus.len() as f64;
    let column: HashMap<&str, usize> = ranked
        .iter()
        .enumerate()
        .map(|(i, (t, _))| (*t, i))
        .collect();
    let idf: Vec<f64> = ranked
        .iter()
        .map(|(_, d)| ((1.0 + n) / (1.0 + *d as f64)).ln() + 1.0)
        .collect();

    let rows: Vec<Vec<f64>> = par::map(&docs, |doc| {
        let mut v = vec![0.0; dim];
        for t in doc {
            if let Some(&c) = column.get(t.as_str()) {
                v[c] += 1.0;
            }
        }
        for (x, w) in v.iter_mut().zip(&idf) {
            *x *= w;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    });

    TextFeatures {
        vocabulary: ranked.iter().map(|(t, _)| t.to_string()).collect(),
        dim,
        vectors: corpus.iter().map(|(id, _)| id.clone()).zip(rows).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, text: &str) -> (String, String) {
        (id.to_string(), text.to_string())
    }

    #[test]
    fn tokenizer_stems_and_filters() {
        assert_eq!(
            tokenize("Advocacies: the American-Manufacturing ALLIANCE, a 1 b"),
            vec!["advocaci", "the", "american", "manufactur", "allianc"]
        );
    }

    #[test]
    fn single_document_is_unit_tf() {
        let f = build_text_features(&[doc("a", "health health care")], 64);
        let v = f.get("a").unwrap();
        assert_eq!(f.vocabulary, vec!["care", "health"]);
        let norm = (1.0f64 + 4.0).sqrt();
        assert!((v[0] - 1.0 / norm).abs() < 1e-15);
        assert!((v[1] - 2.0 / norm).abs() < 1e-15);
        assert!(v[2..].iter().all(|x| *x == 0.0));
    }

    #[test]
    fn identical_documents_identical_vectors() {
        let f = build_text_features(
            &[
                doc("a", "farm bill support"),
                doc("b", "farm bill support"),
                doc("c", "tax"),
            ],
            8,
        );
        assert_eq!(f.get("a"), f.get("b"));
    }

    #[test]
    fn empty_document_stays_zero() {
        let f = build_text_features(&[doc("a", "!!"), doc("b", "energy")], 4);
        assert!(f.get("a").unwrap().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn vocabulary_ranked_by_df_then_lexicographic() {
        let f = build_text_features(
            &[
                doc("a", "zeta alpha beta"),
                doc("b", "zeta beta"),
                doc("c", "gamma"),
            ],
            2,
        );
        assert_eq!(f.vocabulary, vec!["beta", "zeta"]);
    }
}
