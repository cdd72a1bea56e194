//! Document-by-term matrices: term frequency, inverse document frequency and
//! cosine similarity.

use std::collections::{BTreeSet, HashMap};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::corpus::CleanDocument;

#[derive(Debug, Error, PartialEq)]
pub enum VectorizeError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("degenerate vocabulary: term `{0}` occurs in no document")]
    DegenerateVocabulary(String),
    #[error("expected {expected:?} weighting, got {actual:?}")]
    WrongWeighting { expected: Weighting, actual: Weighting },
    #[error("undefined similarity: zero vector")]
    ZeroVector,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
}

/// Sorted, duplicate-free term list with its inverse lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new<S: Into<String>>(terms: impl IntoIterator<Item = S>) -> Self {
        let terms: Vec<String> = terms
            .into_iter()
            .map(Into::into)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { terms, index }
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Weighting {
    Tf,
    Tfidf,
    TfSemantic,
    TfidfSemantic,
}

impl Weighting {
    pub fn semantic(self) -> Self {
        match self {
            Weighting::Tf | Weighting::TfSemantic => Weighting::TfSemantic,
            Weighting::Tfidf | Weighting::TfidfSemantic => Weighting::TfidfSemantic,
        }
    }
}

/// Documents (rows) by vocabulary terms (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct DocTermMatrix {
    doc_ids: Vec<String>,
    vocab: Vocabulary,
    weights: Array2<f64>,
    weighting: Weighting,
}

impl DocTermMatrix {
    pub fn new(
        doc_ids: Vec<String>,
        vocab: Vocabulary,
        weights: Array2<f64>,
        weighting: Weighting,
    ) -> Result<Self, VectorizeError> {
        if weights.nrows() != doc_ids.len() || weights.ncols() != vocab.len() {
            return Err(VectorizeError::InvalidMatrix(format!(
                "{}x{} weights for {} documents and {} terms",
                weights.nrows(),
                weights.ncols(),
                doc_ids.len(),
                vocab.len()
            )));
        }
        if let Some(v) = weights.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(VectorizeError::InvalidMatrix(format!("entry {v} is not a finite non-negative value")));
        }
        if weighting == Weighting::Tf && weights.iter().any(|v| v.fract() != 0.0) {
            return Err(VectorizeError::InvalidMatrix("TF entries must be integers".into()));
        }
        Ok(Self {
            doc_ids,
            vocab,
            weights,
            weighting,
        })
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn weighting(&self) -> Weighting {
        self.weighting
    }

    pub fn n_docs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_terms(&self) -> usize {
        self.weights.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.weights.row(i)
    }

    /// Value of `term` in row `doc`, zero when the term is unknown.
    pub fn get(&self, doc: usize, term: &str) -> f64 {
        self.vocab.index_of(term).map_or(0.0, |j| self.weights[[doc, j]])
    }

    pub(crate) fn with_weights(&self, weights: Array2<f64>, weighting: Weighting) -> Self {
        Self {
            doc_ids: self.doc_ids.clone(),
            vocab: self.vocab.clone(),
            weights,
            weighting,
        }
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            doc_ids: rows.iter().map(|&i| self.doc_ids[i].clone()).collect(),
            vocab: self.vocab.clone(),
            weights: self.weights.select(Axis(0), rows),
            weighting: self.weighting,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct DocTermMatrixJson {
    doc_ids: Vec<String>,
    terms: Vec<String>,
    weighting: Weighting,
    rows: Vec<Vec<f64>>,
}

impl Serialize for DocTermMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        DocTermMatrixJson {
            doc_ids: self.doc_ids.clone(),
            terms: self.vocab.terms.clone(),
            weighting: self.weighting,
            rows: self.weights.outer_iter().map(|r| r.to_vec()).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DocTermMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let raw = DocTermMatrixJson::deserialize(deserializer)?;
        let vocab = Vocabulary::new(raw.terms.iter().cloned());
        if vocab.terms != raw.terms {
            return Err(D::Error::custom("terms must be sorted and unique"));
        }
        let m = vocab.len();
        let n = raw.rows.len();
        if raw.rows.iter().any(|r| r.len() != m) {
            return Err(D::Error::custom("ragged rows"));
        }
        let weights = Array2::from_shape_vec((n, m), raw.rows.into_iter().flatten().collect())
            .map_err(D::Error::custom)?;
        DocTermMatrix::new(raw.doc_ids, vocab, weights, raw.weighting).map_err(D::Error::custom)
    }
}

/// Term-frequency matrix over the union vocabulary of `docs`.
pub fn build_tf(docs: &[CleanDocument]) -> Result<DocTermMatrix, VectorizeError> {
    let vocab = Vocabulary::new(docs.iter().flat_map(|d| d.tokens.iter().cloned()));
    if docs.is_empty() || vocab.is_empty() {
        return Err(VectorizeError::EmptyInput("corpus has no tokens"));
    }
    let mut weights = Array2::zeros((docs.len(), vocab.len()));
    for (i, doc) in docs.iter().enumerate() {
        for token in &doc.tokens {
            // every token is in the vocabulary by construction
            weights[[i, vocab.index[token]]] += 1.0;
        }
    }
    Ok(DocTermMatrix {
        doc_ids: docs.iter().map(|d| d.event_id.clone()).collect(),
        vocab,
        weights,
        weighting: Weighting::Tf,
    })
}

/// `ln(n / n_j)` per column, `n_j` the number of documents containing term `j`.
pub fn idf(mat: &DocTermMatrix) -> Result<Array1<f64>, VectorizeError> {
    if mat.weighting != Weighting::Tf {
        return Err(VectorizeError::WrongWeighting {
            expected: Weighting::Tf,
            actual: mat.weighting,
        });
    }
    let n = mat.n_docs() as f64;
    let mut out = Array1::zeros(mat.n_terms());
    for (j, col) in mat.weights.axis_iter(Axis(1)).enumerate() {
        let nj = col.iter().filter(|v| **v > 0.0).count();
        if nj == 0 {
            return Err(VectorizeError::DegenerateVocabulary(mat.vocab.terms[j].clone()));
        }
        out[j] = (n / nj as f64).ln();
    }
    Ok(out)
}

/// TF-IDF: every column scaled by its IDF.
pub fn apply_idf(mat: &DocTermMatrix) -> Result<DocTermMatrix, VectorizeError> {
    let idf = idf(mat)?;
    let weights = &mat.weights * &idf.view().insert_axis(Axis(0));
    Ok(mat.with_weights(weights, Weighting::Tfidf))
}

pub fn cosine_similarity(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<f64, VectorizeError> {
    if x.len() != y.len() {
        return Err(VectorizeError::LengthMismatch(x.len(), y.len()));
    }
    let (xx, yy) = (x.dot(&x), y.dot(&y));
    if xx == 0.0 || yy == 0.0 {
        return Err(VectorizeError::ZeroVector);
    }
    // one square root keeps exact cases such as 2 / sqrt(5 * 5) exact
    Ok((x.dot(&y) / (xx * yy).sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use proptest::prelude::*;

    fn doc(id: &str, tokens: &[&str]) -> CleanDocument {
        CleanDocument {
            event_id: id.into(),
            tokens: tokens.iter().map(|t| t.to_string()).collect(),
        }
    }

    fn fig3() -> DocTermMatrix {
        build_tf(&[
            doc("d1", &["customer", "lost", "his", "credit", "card"]),
            doc("d2", &["client", "mislaid", "her", "credit", "card"]),
        ])
        .unwrap()
    }

    const FIG3_ORDER: [&str; 8] = ["customer", "client", "lost", "mislaid", "his", "her", "credit", "card"];

    #[test]
    fn fig3_tf_rows() {
        let m = fig3();
        assert_eq!(m.n_docs(), 2);
        assert_eq!(m.n_terms(), 8);
        let d1: Vec<f64> = FIG3_ORDER.iter().map(|t| m.get(0, t)).collect();
        assert_eq!(d1, [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        let d2: Vec<f64> = FIG3_ORDER.iter().map(|t| m.get(1, t)).collect();
        assert_eq!(d2, [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0]);
        // columns are lexicographic
        assert_eq!(m.vocab().terms()[0], "card");
    }

    #[test]
    fn fig3_cosine_is_two_fifths() {
        let m = fig3();
        let cs = cosine_similarity(m.row(0), m.row(1)).unwrap();
        assert_eq!(cs, 0.4);
    }

    #[test]
    fn repeated_tokens_counted() {
        let m = build_tf(&[doc("x", &["a", "a", "b"])]).unwrap();
        assert_eq!(m.weights(), &array![[2.0, 1.0]]);
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(matches!(build_tf(&[]), Err(VectorizeError::EmptyInput(_))));
        assert!(matches!(build_tf(&[doc("a", &[])]), Err(VectorizeError::EmptyInput(_))));
    }

    #[test]
    fn idf_values() {
        let m = fig3();
        let v = idf(&m).unwrap();
        for (j, t) in m.vocab().terms().iter().enumerate() {
            let expect = if t == "credit" || t == "card" { 0.0 } else { 2f64.ln() };
            assert_eq!(v[j], expect, "{t}");
        }
        let m = build_tf(&[doc("a", &["x", "y"]), doc("b", &["y"]), doc("c", &["y"]), doc("d", &["y"])]).unwrap();
        let v = idf(&m).unwrap();
        assert!((v[0] - 1.3862943611198906).abs() < 1e-15);
        assert_eq!(v[1], 0.0);
    }

    #[test]
    fn idf_rejects_zero_column_and_non_tf() {
        let m = DocTermMatrix::new(
            vec!["a".into()],
            Vocabulary::new(["x", "y"]),
            array![[1.0, 0.0]],
            Weighting::Tf,
        )
        .unwrap();
        assert_eq!(idf(&m), Err(VectorizeError::DegenerateVocabulary("y".into())));
        let t = apply_idf(&fig3()).unwrap();
        assert!(matches!(idf(&t), Err(VectorizeError::WrongWeighting { .. })));
    }

    #[test]
    fn tfidf_examples() {
        let m = apply_idf(&fig3()).unwrap();
        assert_eq!(m.weighting(), Weighting::Tfidf);
        assert_eq!(m.get(0, "credit"), 0.0);
        assert_eq!(m.get(0, "card"), 0.0);
        assert_eq!(m.get(0, "customer"), 2f64.ln());
        assert_eq!(m.get(0, "client"), 0.0);
        let single = apply_idf(&build_tf(&[doc("a", &["x", "y", "y"])]).unwrap()).unwrap();
        assert!(single.weights().iter().all(|v| *v == 0.0));
        let everywhere = apply_idf(&build_tf(&[doc("a", &["x", "y"]), doc("b", &["y", "x", "x"])]).unwrap()).unwrap();
        assert!(everywhere.weights().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn cosine_edge_cases() {
        let x = array![1.0, 2.0, 3.0];
        assert!((cosine_similarity(x.view(), x.view()).unwrap() - 1.0).abs() < 1e-15);
        let e1 = array![1.0, 0.0];
        let e2 = array![0.0, 1.0];
        assert_eq!(cosine_similarity(e1.view(), e2.view()).unwrap(), 0.0);
        let z = array![0.0, 0.0];
        assert_eq!(cosine_similarity(e1.view(), z.view()), Err(VectorizeError::ZeroVector));
        assert!(cosine_similarity(x.view(), e1.view()).is_err());
    }

    #[test]
    fn json_shape() {
        let m = fig3();
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(v["weighting"], "TF");
        assert_eq!(v["doc_ids"][1], "d2");
        assert_eq!(v["terms"].as_array().unwrap().len(), 8);
        let back: DocTermMatrix = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn constructor_validates() {
        let v = Vocabulary::new(["a"]);
        assert!(DocTermMatrix::new(vec!["d".into()], v.clone(), array![[-1.0]], Weighting::Tfidf).is_err());
        assert!(DocTermMatrix::new(vec!["d".into()], v.clone(), array![[0.5]], Weighting::Tf).is_err());
        assert!(DocTermMatrix::new(vec![], v, array![[0.5]], Weighting::Tfidf).is_err());
    }

    fn docs_strategy() -> impl Strategy<Value = Vec<Vec<usize>>> {
        proptest::collection::vec(proptest::collection::vec(0usize..6, 1..8), 1..6)
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant(
            x in proptest::collection::vec(0.01f64..10.0, 5),
            y in proptest::collection::vec(0.01f64..10.0, 5),
            a in 0.1f64..100.0,
            b in 0.1f64..100.0,
        ) {
            let x = Array1::from(x);
            let y = Array1::from(y);
            let c = cosine_similarity(x.view(), y.view()).unwrap();
            let c2 = cosine_similarity(y.view(), x.view()).unwrap();
            let xs = &x * a;
            let ys = &y * b;
            let c3 = cosine_similarity(xs.view(), ys.view()).unwrap();
            prop_assert!((c - c2).abs() < 1e-12);
            prop_assert!((c - c3).abs() < 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&c));
        }

        #[test]
        fn tf_rows_sum_to_token_counts_and_idf_keeps_zeros(raw in docs_strategy()) {
            let docs: Vec<CleanDocument> = raw
                .iter()
                .enumerate()
                .map(|(i, toks)| CleanDocument {
                    event_id: format!("d{i}"),
                    tokens: toks.iter().map(|t| format!("w{t}")).collect(),
                })
                .collect();
            let tf = build_tf(&docs).unwrap();
            for (i, d) in docs.iter().enumerate() {
                prop_assert_eq!(tf.row(i).sum(), d.tokens.len() as f64);
            }
            let tfidf = apply_idf(&tf).unwrap();
            for (a, b) in tf.weights().iter().zip(tfidf.weights().iter()) {
                if *a == 0.0 {
                    prop_assert_eq!(*b, 0.0);
                }
            }
        }
    }
}
