//! Word-embedding similarity and the semantic adjustment of a
//! document-by-term matrix.
//!
//! Each zero cell `(i, j)` of the matrix takes the value of the word of row
//! `i` most similar to term `j`, scaled by that similarity. All reads go to
//! the unmodified input matrix, so the result does not depend on the order in
//! which cells are visited.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use thiserror::Error;

use crate::vectorize::{DocTermMatrix, Vocabulary};

#[derive(Debug, Error)]
pub enum SemanticError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("embedding format error at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("similarity threshold must lie in (0, 1], got {0}")]
    Threshold(f64),
    #[error("vocabulary mismatch between matrix and similarity matrix")]
    Alignment,
    #[error("invalid similarity matrix: {0}")]
    InvalidSimilarity(String),
}

/// Pre-trained word vectors, restricted to a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Array1<f64>>,
}

impl EmbeddingTable {
    /// Zero vectors are dropped (their cosine is undefined).
    pub fn new(dim: usize, vectors: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self, SemanticError> {
        let mut out = HashMap::new();
        for (token, v) in vectors {
            if v.len() != dim {
                return Err(SemanticError::Format {
                    line: 0,
                    message: format!("vector for `{token}` has {} coordinates, expected {dim}", v.len()),
                });
            }
            if v.iter().any(|x| *x != 0.0) {
                out.insert(token, Array1::from(v));
            }
        }
        Ok(Self { dim, vectors: out })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&Array1<f64>> {
        self.vectors.get(token)
    }
}

pub fn load_embeddings(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<EmbeddingTable, SemanticError> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|source| SemanticError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_embeddings(f, vocab)
}

/// Parses word2vec text format: a `<count> <dim>` header line followed by
/// `<token> <v1> ... <vdim>` rows. Only tokens present in `vocab` are kept,
/// but every row is validated.
pub fn read_embeddings<R: Read>(reader: R, vocab: &Vocabulary) -> Result<EmbeddingTable, SemanticError> {
    let mut lines = BufReader::new(reader).lines();
    let io = |source| SemanticError::Io {
        path: "<embeddings>".into(),
        source,
    };
    let header = lines.next().transpose().map_err(io)?.ok_or(SemanticError::Format {
        line: 1,
        message: "missing header".into(),
    })?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (count, dim) = match fields.as_slice() {
        [c, d] => match (c.parse::<usize>(), d.parse::<usize>()) {
            (Ok(c), Ok(d)) if d > 0 => (c, d),
            _ => {
                return Err(SemanticError::Format {
                    line: 1,
                    message: format!("bad header `{header}`"),
                })
            }
        },
        _ => {
            return Err(SemanticError::Format {
                line: 1,
                message: format!("bad header `{header}`"),
            })
        }
    };

    let mut vectors = HashMap::new();
    let mut rows = 0usize;
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        rows += 1;
        if rows > count {
            return Err(SemanticError::Format {
                line: line_no,
                message: format!("more rows than the {count} declared"),
            });
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().unwrap_or_default();
        let coords: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
        let coords = coords.map_err(|e| SemanticError::Format {
            line: line_no,
            message: e.to_string(),
        })?;
        if coords.len() != dim {
            return Err(SemanticError::Format {
                line: line_no,
                message: format!("{} coordinates, expected {dim}", coords.len()),
            });
        }
        if vocab.index_of(token).is_some() && coords.iter().any(|x| *x != 0.0) {
            vectors.insert(token.to_string(), Array1::from(coords));
        }
    }
    if rows != count {
        return Err(SemanticError::Format {
            line: rows + 2,
            message: format!("header declares {count} rows, found {rows}"),
        });
    }
    Ok(EmbeddingTable { dim, vectors })
}

/// Vocabulary-by-vocabulary similarities, zeroed below a threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct WordSimilarityMatrix {
    vocab: Vocabulary,
    sim: Array2<f64>,
    threshold: f64,
}

impl WordSimilarityMatrix {
    /// Builds from explicit entries; every invariant is checked.
    pub fn from_matrix(vocab: Vocabulary, sim: Array2<f64>, threshold: f64) -> Result<Self, SemanticError> {
        check_threshold(threshold)?;
        let m = vocab.len();
        if sim.dim() != (m, m) {
            return Err(SemanticError::InvalidSimilarity(format!("shape {:?} for {m} terms", sim.dim())));
        }
        for j in 0..m {
            if sim[[j, j]] != 1.0 {
                return Err(SemanticError::InvalidSimilarity(format!("diagonal entry {j} is not 1")));
            }
            for k in 0..m {
                let v = sim[[j, k]];
                if v != sim[[k, j]] {
                    return Err(SemanticError::InvalidSimilarity(format!("asymmetric at ({j},{k})")));
                }
                if !(0.0..=1.0).contains(&v) || (j != k && v != 0.0 && v < threshold) {
                    return Err(SemanticError::InvalidSimilarity(format!("entry ({j},{k}) = {v}")));
                }
            }
        }
        Ok(Self { vocab, sim, threshold })
    }

    /// Similarity matrix with no word pairs above threshold.
    pub fn identity(vocab: Vocabulary, threshold: f64) -> Result<Self, SemanticError> {
        check_threshold(threshold)?;
        let sim = Array2::eye(vocab.len());
        Ok(Self { vocab, sim, threshold })
    }

    /// Sets a symmetric pair; values below the threshold are stored as 0.
    pub fn set_pair(&mut self, a: &str, b: &str, value: f64) -> Result<(), SemanticError> {
        let (j, k) = match (self.vocab.index_of(a), self.vocab.index_of(b)) {
            (Some(j), Some(k)) if j != k => (j, k),
            _ => return Err(SemanticError::InvalidSimilarity(format!("bad pair ({a}, {b})"))),
        };
        if !(0.0..=1.0).contains(&value) {
            return Err(SemanticError::InvalidSimilarity(format!("value {value} outside [0,1]")));
        }
        let v = if value >= self.threshold { value } else { 0.0 };
        self.sim[[j, k]] = v;
        self.sim[[k, j]] = v;
        Ok(())
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn sim(&self) -> &Array2<f64> {
        &self.sim
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        Some(self.sim[[self.vocab.index_of(a)?, self.vocab.index_of(b)?]])
    }

    /// Number of off-diagonal pairs kept above threshold.
    pub fn linked_pairs(&self) -> usize {
        let m = self.vocab.len();
        (0..m)
            .map(|j| (j + 1..m).filter(|&k| self.sim[[j, k]] > 0.0).count())
            .sum()
    }
}

fn check_threshold(t: f64) -> Result<(), SemanticError> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(SemanticError::Threshold(t))
    }
}

/// Cosine similarity between embedded terms; negative cosines and values below
/// `threshold` become 0, the diagonal is 1, unembedded terms link to nothing.
pub fn build_similarity(
    emb: &EmbeddingTable,
    vocab: &Vocabulary,
    threshold: f64,
) -> Result<WordSimilarityMatrix, SemanticError> {
    check_threshold(threshold)?;
    let m = vocab.len();
    let unit: Vec<Option<Array1<f64>>> = vocab
        .terms()
        .iter()
        .map(|t| {
            emb.get(t).map(|v| {
                let norm = v.dot(v).sqrt();
                v / norm
            })
        })
        .collect();
    let mut sim = Array2::<f64>::eye(m);
    let rows: Vec<Vec<(usize, f64)>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let Some(uj) = &unit[j] else { return Vec::new() };
            ((j + 1)..m)
                .filter_map(|k| {
                    let uk = unit[k].as_ref()?;
                    let c = uj.dot(uk).clamp(0.0, 1.0);
                    (c >= threshold).then_some((k, c))
                })
                .collect()
        })
        .collect();
    for (j, row) in rows.into_iter().enumerate() {
        for (k, c) in row {
            sim[[j, k]] = c;
            sim[[k, j]] = c;
        }
    }
    Ok(WordSimilarityMatrix {
        vocab: vocab.clone(),
        sim,
        threshold,
    })
}

/// Fills each zero cell with `mat(i, w*) * sim(j, w*)`, where `w*` is the
/// present word of row `i` most similar to term `j`.
///
/// Ties on similarity go to the larger original cell, then to the lower column.
pub fn semantic_adjust(mat: &DocTermMatrix, simm: &WordSimilarityMatrix) -> Result<DocTermMatrix, SemanticError> {
    if mat.vocab() != simm.vocab() {
        return Err(SemanticError::Alignment);
    }
    let input = mat.weights();
    let sim = &simm.sim;
    let m = mat.n_terms();
    let rows: Vec<Vec<f64>> = (0..input.nrows())
        .into_par_iter()
        .map(|i| {
            let row = input.row(i);
            let present: Vec<usize> = (0..m).filter(|&k| row[k] > 0.0).collect();
            (0..m)
                .map(|j| {
                    if row[j] != 0.0 {
                        return row[j];
                    }
                    let mut best: Option<(f64, f64)> = None;
                    for &k in &present {
                        let s = sim[[j, k]];
                        if s <= 0.0 {
                            continue;
                        }
                        let better = match best {
                            None => true,
                            Some((bs, bv)) => s > bs || (s == bs && row[k] > bv),
                        };
                        if better {
                            best = Some((s, row[k]));
                        }
                    }
                    best.map_or(0.0, |(s, v)| v * s)
                })
                .collect()
        })
        .collect();
    let n = mat.n_docs();
    let weights = Array2::from_shape_vec((n, m), rows.into_iter().flatten().collect())
        .expect("row lengths match the vocabulary");
    Ok(mat.with_weights(weights, mat.weighting().semantic()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CleanDocument;
    use crate::vectorize::{build_tf, cosine_similarity, Weighting};
    use ndarray::array;
    use proptest::prelude::*;

    const FIG3_ORDER: [&str; 8] = ["customer", "client", "lost", "mislaid", "his", "her", "credit", "card"];

    fn fig3() -> DocTermMatrix {
        let doc = |id: &str, t: [&str; 5]| CleanDocument {
            event_id: id.into(),
            tokens: t.iter().map(|s| s.to_string()).collect(),
        };
        build_tf(&[
            doc("d1", ["customer", "lost", "his", "credit", "card"]),
            doc("d2", ["client", "mislaid", "her", "credit", "card"]),
        ])
        .unwrap()
    }

    fn fig4(vocab: &Vocabulary) -> WordSimilarityMatrix {
        let mut s = WordSimilarityMatrix::identity(vocab.clone(), 0.8).unwrap();
        s.set_pair("customer", "client", 0.8).unwrap();
        s.set_pair("lost", "mislaid", 0.9).unwrap();
        s.set_pair("his", "her", 0.9).unwrap();
        s
    }

    fn in_fig_order(m: &DocTermMatrix, i: usize) -> Vec<f64> {
        FIG3_ORDER.iter().map(|t| m.get(i, t)).collect()
    }

    #[test]
    fn fig5_rows() {
        let tf = fig3();
        let adj = semantic_adjust(&tf, &fig4(tf.vocab())).unwrap();
        assert_eq!(adj.weighting(), Weighting::TfSemantic);
        assert_eq!(in_fig_order(&adj, 0), [1.0, 0.8, 1.0, 0.9, 1.0, 0.9, 1.0, 1.0]);
        assert_eq!(in_fig_order(&adj, 1), [0.8, 1.0, 0.9, 1.0, 0.9, 1.0, 1.0, 1.0]);
        let cs = cosine_similarity(adj.row(0), adj.row(1)).unwrap();
        assert!((cs - 0.992).abs() <= 0.001, "{cs}");
    }

    #[test]
    fn identity_similarity_is_identity() {
        let tf = fig3();
        let id = WordSimilarityMatrix::identity(tf.vocab().clone(), 0.8).unwrap();
        let adj = semantic_adjust(&tf, &id).unwrap();
        assert_eq!(adj.weights(), tf.weights());
    }

    #[test]
    fn full_row_unchanged() {
        let vocab = Vocabulary::new(["a", "b"]);
        let mat = DocTermMatrix::new(vec!["d".into()], vocab.clone(), array![[2.0, 3.0]], Weighting::Tf).unwrap();
        let mut s = WordSimilarityMatrix::identity(vocab, 0.5).unwrap();
        s.set_pair("a", "b", 0.9).unwrap();
        assert_eq!(semantic_adjust(&mat, &s).unwrap().weights(), mat.weights());
    }

    #[test]
    fn tie_break_prefers_larger_cell_then_lower_column() {
        let vocab = Vocabulary::new(["a", "b", "c", "d"]);
        let mut s = WordSimilarityMatrix::identity(vocab.clone(), 0.5).unwrap();
        s.set_pair("d", "a", 0.9).unwrap();
        s.set_pair("d", "b", 0.9).unwrap();
        s.set_pair("d", "c", 0.9).unwrap();
        let mat = DocTermMatrix::new(
            vec!["x".into(), "y".into()],
            vocab,
            array![[1.0, 3.0, 2.0, 0.0], [2.0, 2.0, 0.0, 0.0]],
            Weighting::Tf,
        )
        .unwrap();
        let adj = semantic_adjust(&mat, &s).unwrap();
        assert_eq!(adj.weights()[[0, 3]], 3.0 * 0.9);
        assert_eq!(adj.weights()[[1, 3]], 2.0 * 0.9);
        // "c" is only linked to "d", which row y lacks
        assert_eq!(adj.weights()[[1, 2]], 0.0);
    }

    #[test]
    fn no_cascading() {
        // a~b and b~c, row has only a: c must stay 0 because b is 0 in the input
        let vocab = Vocabulary::new(["a", "b", "c"]);
        let mut s = WordSimilarityMatrix::identity(vocab.clone(), 0.5).unwrap();
        s.set_pair("a", "b", 0.9).unwrap();
        s.set_pair("b", "c", 0.9).unwrap();
        let mat = DocTermMatrix::new(vec!["x".into()], vocab, array![[1.0, 0.0, 0.0]], Weighting::Tf).unwrap();
        let adj = semantic_adjust(&mat, &s).unwrap();
        assert_eq!(adj.weights(), &array![[1.0, 0.9, 0.0]]);
    }

    #[test]
    fn vocabulary_mismatch() {
        let tf = fig3();
        let s = WordSimilarityMatrix::identity(Vocabulary::new(["x"]), 0.8).unwrap();
        assert!(matches!(semantic_adjust(&tf, &s), Err(SemanticError::Alignment)));
    }

    #[test]
    fn read_embeddings_restricts_to_vocab() {
        let vocab = Vocabulary::new(["credit", "card", "missing"]);
        let text = "3 2\ncredit 1.0 0.5\ncard -0.5 2\nloan 0 1\n";
        let emb = read_embeddings(text.as_bytes(), &vocab).unwrap();
        assert_eq!(emb.dim(), 2);
        assert_eq!(emb.len(), 2);
        assert!(emb.get("loan").is_none());
        assert!(emb.get("missing").is_none());
        assert_eq!(emb.get("card").unwrap(), &array![-0.5, 2.0]);
    }

    #[test]
    fn read_embeddings_errors() {
        let vocab = Vocabulary::new(["a"]);
        let bad = |t: &str| read_embeddings(t.as_bytes(), &vocab).unwrap_err();
        assert!(matches!(bad("3 2 1\n"), SemanticError::Format { line: 1, .. }));
        assert!(matches!(bad("x 2\n"), SemanticError::Format { line: 1, .. }));
        assert!(matches!(bad("2 2\na 1 2\nb 1\n"), SemanticError::Format { line: 3, .. }));
        assert!(matches!(bad("1 2\na 1 zz\n"), SemanticError::Format { line: 2, .. }));
        assert!(matches!(bad("1 2\na 1 2\nb 1 2\n"), SemanticError::Format { line: 3, .. }));
        assert!(matches!(bad("2 2\na 1 2\n"), SemanticError::Format { .. }));
        assert!(matches!(bad(""), SemanticError::Format { line: 1, .. }));
    }

    #[test]
    fn build_similarity_thresholds_and_clips() {
        let vocab = Vocabulary::new(["a", "b", "c", "d", "e"]);
        let emb = EmbeddingTable::new(
            2,
            [
                ("a".to_string(), vec![1.0, 0.0]),
                ("b".to_string(), vec![2.0, 0.0]),
                ("c".to_string(), vec![0.75, (1.0f64 - 0.5625).sqrt()]),
                ("d".to_string(), vec![-1.0, 0.0]),
            ],
        )
        .unwrap();
        let s = build_similarity(&emb, &vocab, 0.8).unwrap();
        assert_eq!(s.get("a", "b"), Some(1.0));
        assert_eq!(s.get("a", "c"), Some(0.0));
        assert_eq!(s.get("a", "d"), Some(0.0));
        assert_eq!(s.get("e", "e"), Some(1.0));
        for t in ["a", "b", "c", "d"] {
            assert_eq!(s.get("e", t), Some(0.0));
        }
        let low = build_similarity(&emb, &vocab, 0.7).unwrap();
        assert!((low.get("a", "c").unwrap() - 0.75).abs() < 1e-12);
        // the result satisfies every invariant
        WordSimilarityMatrix::from_matrix(vocab, low.sim().clone(), 0.7).unwrap();
        assert!(build_similarity(&emb, s.vocab(), 0.0).is_err());
        assert!(build_similarity(&emb, s.vocab(), 1.5).is_err());
    }

    #[test]
    fn from_matrix_checks_invariants() {
        let v = Vocabulary::new(["a", "b"]);
        assert!(WordSimilarityMatrix::from_matrix(v.clone(), array![[1.0, 0.5], [0.5, 1.0]], 0.8).is_err());
        assert!(WordSimilarityMatrix::from_matrix(v.clone(), array![[1.0, 0.9], [0.8, 1.0]], 0.8).is_err());
        assert!(WordSimilarityMatrix::from_matrix(v.clone(), array![[0.9, 0.9], [0.9, 1.0]], 0.8).is_err());
        assert!(WordSimilarityMatrix::from_matrix(v, array![[1.0, 0.9], [0.9, 1.0]], 0.8).is_ok());
    }

    fn random_setup() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let m = 6;
        (
            proptest::collection::vec(proptest::collection::vec(prop_oneof![Just(0.0), 0.5f64..3.0], m), 1..5),
            proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 3), m),
        )
    }

    proptest! {
        #[test]
        fn adjustment_properties((rows, embs) in random_setup(), t1 in 0.05f64..1.0, t2 in 0.05f64..1.0) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let terms: Vec<String> = (0..6).map(|j| format!("t{j}")).collect();
            let vocab = Vocabulary::new(terms.clone());
            let n = rows.len();
            let w = Array2::from_shape_vec((n, 6), rows.into_iter().flatten().collect()).unwrap();
            let mat = DocTermMatrix::new((0..n).map(|i| format!("d{i}")).collect(), vocab.clone(), w, Weighting::Tfidf).unwrap();
            let emb = EmbeddingTable::new(3, terms.into_iter().zip(embs)).unwrap();
            let s_lo = build_similarity(&emb, &vocab, lo).unwrap();
            let s_hi = build_similarity(&emb, &vocab, hi).unwrap();
            let a_lo = semantic_adjust(&mat, &s_lo).unwrap();
            let a_hi = semantic_adjust(&mat, &s_hi).unwrap();
            for ((orig, l), h) in mat.weights().iter().zip(a_lo.weights()).zip(a_hi.weights()) {
                prop_assert!(*l >= *orig && *h >= *orig);
                prop_assert!(*h >= 0.0);
                if *orig != 0.0 {
                    prop_assert_eq!(*l, *orig);
                }
                // raising the threshold never increases an adjusted cell
                prop_assert!(*h <= *l);
            }
            for j in 0..6 {
                for k in 0..6 {
                    let v = s_lo.sim()[[j, k]];
                    prop_assert_eq!(v, s_lo.sim()[[k, j]]);
                    prop_assert!(j == k || v == 0.0 || v >= lo);
                }
            }
        }
    }
}
