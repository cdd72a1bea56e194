//! Silhouette diagnostics and accuracy against analyst tags.

use std::collections::{BTreeMap, HashSet};

use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{ClusterResult, Label};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidateError {
    #[error("{what}: expected {expected} entries, got {actual}")]
    Alignment {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("silhouette is undefined with fewer than two populated clusters")]
    UndefinedSilhouette,
    #[error("no tagged documents to score against")]
    NoTags,
    #[error("tag `{0}` is not among the declared tag names")]
    UnknownTag(String),
    #[error("invalid tag name `{0}`")]
    InvalidTag(String),
    #[error("validation needs at least two distinct tags, found {0}")]
    InsufficientTags(usize),
}

/// Literal used for documents without a tag in files and JSON.
pub const UNTAGGED: &str = "UNTAGGED";

/// Analyst tags, one per document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TagSetRepr", into = "TagSetRepr")]
pub struct TagSet {
    labels: Vec<Option<String>>,
    tag_names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct TagSetRepr {
    labels: Vec<Option<String>>,
    tag_names: Vec<String>,
}

impl TryFrom<TagSetRepr> for TagSet {
    type Error = ValidateError;
    fn try_from(r: TagSetRepr) -> Result<Self, Self::Error> {
        TagSet::with_names(r.labels, r.tag_names)
    }
}

impl From<TagSet> for TagSetRepr {
    fn from(t: TagSet) -> Self {
        TagSetRepr {
            labels: t.labels,
            tag_names: t.tag_names,
        }
    }
}

fn check_name(name: &str) -> Result<(), ValidateError> {
    if name.trim().is_empty() || name != name.trim() || name == UNTAGGED {
        return Err(ValidateError::InvalidTag(name.to_string()));
    }
    Ok(())
}

impl TagSet {
    /// Tag names are collected in order of first appearance.
    pub fn new(labels: Vec<Option<String>>) -> Result<Self, ValidateError> {
        let mut names: Vec<String> = Vec::new();
        for l in labels.iter().flatten() {
            check_name(l)?;
            if !names.contains(l) {
                names.push(l.clone());
            }
        }
        Ok(Self { labels, tag_names: names })
    }

    pub fn with_names(labels: Vec<Option<String>>, tag_names: Vec<String>) -> Result<Self, ValidateError> {
        for (i, n) in tag_names.iter().enumerate() {
            check_name(n)?;
            if tag_names[..i].contains(n) {
                return Err(ValidateError::InvalidTag(n.clone()));
            }
        }
        if let Some(l) = labels.iter().flatten().find(|l| !tag_names.contains(l)) {
            return Err(ValidateError::UnknownTag(l.clone()));
        }
        Ok(Self { labels, tag_names })
    }

    pub fn untagged(n: usize) -> Self {
        Self {
            labels: vec![None; n],
            tag_names: Vec::new(),
        }
    }

    pub fn labels(&self) -> &[Option<String>] {
        &self.labels
    }

    pub fn tag_names(&self) -> &[String] {
        &self.tag_names
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_tagged(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }

    /// Sets one document's tag, registering new names at the end.
    pub fn set(&mut self, index: usize, tag: Option<String>) -> Result<(), ValidateError> {
        if index >= self.labels.len() {
            return Err(ValidateError::Alignment {
                what: "tag index",
                expected: self.labels.len(),
                actual: index,
            });
        }
        if let Some(t) = &tag {
            check_name(t)?;
            if !self.tag_names.contains(t) {
                self.tag_names.push(t.clone());
            }
        }
        self.labels[index] = tag;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Silhouette {
    pub index: f64,
    /// `None` for trimmed points.
    pub per_point: Vec<Option<f64>>,
}

fn dist(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Euclidean silhouette. Trimmed points are left out of every average, and
/// points alone in their cluster score 0.
pub fn silhouette(points: ArrayView2<'_, f64>, result: &ClusterResult) -> Result<Silhouette, ValidateError> {
    let n = points.nrows();
    if result.assignment.len() != n {
        return Err(ValidateError::Alignment {
            what: "assignment",
            expected: n,
            actual: result.assignment.len(),
        });
    }
    let labels = result.indices();
    let k = result.k;
    let sizes = result.cluster_sizes();
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(ValidateError::UndefinedSilhouette);
    }
    let per_point: Vec<Option<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = labels[i]?;
            if sizes[own] == 1 {
                return Some(0.0);
            }
            let mut sums = vec![0.0; k];
            for j in 0..n {
                if let Some(c) = labels[j] {
                    if j != i {
                        sums[c] += dist(points.row(i), points.row(j));
                    }
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            Some(if denom > 0.0 { (b - a) / denom } else { 0.0 })
        })
        .collect();
    let included: Vec<f64> = per_point.iter().flatten().copied().collect();
    let index = included.iter().sum::<f64>() / included.len() as f64;
    Ok(Silhouette { index, per_point })
}

/// One bar of a silhouette plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteBar {
    pub cluster: usize,
    pub doc_index: usize,
    pub value: f64,
}

/// Bars grouped by cluster, each group sorted by decreasing value.
pub fn silhouette_plot(sil: &Silhouette, result: &ClusterResult) -> Vec<SilhouetteBar> {
    let mut bars: Vec<SilhouetteBar> = sil
        .per_point
        .iter()
        .zip(&result.assignment)
        .enumerate()
        .filter_map(|(i, (v, l))| match (v, l) {
            (Some(v), Label::Cluster(c)) => Some(SilhouetteBar {
                cluster: *c,
                doc_index: i,
                value: *v,
            }),
            _ => None,
        })
        .collect();
    bars.sort_by(|a, b| a.cluster.cmp(&b.cluster).then(b.value.total_cmp(&a.value)).then(a.doc_index.cmp(&b.doc_index)));
    bars
}

/// Maximum-weight assignment of rows to columns on a (possibly rectangular)
/// non-negative weight table. Returns the matched column per row.
pub fn max_weight_matching(weights: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    let size = rows.max(cols);
    if size == 0 {
        return Vec::new();
    }
    let top = weights.iter().flatten().cloned().fold(0.0, f64::max);
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            top - weights[i][j]
        } else {
            top
        }
    };
    // Hungarian algorithm with potentials; arrays are 1-based, 0 is a sentinel.
    let mut u = vec![0.0; size + 1];
    let mut v = vec![0.0; size + 1];
    let mut p = vec![0usize; size + 1];
    let mut way = vec![0usize; size + 1];
    for i in 1..=size {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; size + 1];
        let mut used = vec![false; size + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=size {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=size {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; rows];
    for j in 1..=size {
        let i = p[j];
        if i >= 1 && i <= rows && j <= cols {
            out[i - 1] = Some(j - 1);
        }
    }
    out
}

/// Accuracy of a clustering after optimal cluster-to-tag alignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub accuracy: f64,
    pub correct: usize,
    /// Tagged documents, trimmed ones included.
    pub counted: usize,
    pub misclassified: usize,
    /// 1-based cluster id to tag; unmatched clusters are absent.
    pub alignment: BTreeMap<usize, String>,
}

/// Cluster-by-tag counts over tagged, non-trimmed documents.
pub fn contingency(result: &ClusterResult, tags: &TagSet) -> Vec<Vec<f64>> {
    let mut table = vec![vec![0.0; tags.tag_names.len()]; result.k];
    for (label, tag) in result.assignment.iter().zip(&tags.labels) {
        if let (Some(c), Some(t)) = (label.index(), tag) {
            let j = tags.tag_names.iter().position(|n| n == t).expect("validated tag");
            table[c][j] += 1.0;
        }
    }
    table
}

pub fn accuracy(result: &ClusterResult, tags: &TagSet) -> Result<AccuracyReport, ValidateError> {
    if tags.len() != result.assignment.len() {
        return Err(ValidateError::Alignment {
            what: "tags",
            expected: result.assignment.len(),
            actual: tags.len(),
        });
    }
    let counted = tags.n_tagged();
    if counted == 0 {
        return Err(ValidateError::NoTags);
    }
    let table = contingency(result, tags);
    let matching = max_weight_matching(&table);
    let mut correct = 0usize;
    let mut alignment = BTreeMap::new();
    for (c, m) in matching.iter().enumerate() {
        if let Some(t) = m {
            correct += table[c][*t] as usize;
            alignment.insert(c + 1, tags.tag_names[*t].clone());
        }
    }
    Ok(AccuracyReport {
        accuracy: correct as f64 / counted as f64,
        correct,
        counted,
        misclassified: counted - correct,
        alignment,
    })
}

/// Accuracy and silhouette together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub accuracy: f64,
    pub misclassified: usize,
    pub counted: usize,
    pub silhouette_index: f64,
    pub per_point_silhouette: Vec<Option<f64>>,
    pub alignment: BTreeMap<usize, String>,
}

pub fn validate(points: ArrayView2<'_, f64>, result: &ClusterResult, tags: &TagSet) -> Result<ValidationReport, ValidateError> {
    let acc = accuracy(result, tags)?;
    let sil = silhouette(points, result)?;
    Ok(ValidationReport {
        accuracy: acc.accuracy,
        misclassified: acc.misclassified,
        counted: acc.counted,
        silhouette_index: sil.index,
        per_point_silhouette: sil.per_point,
        alignment: acc.alignment,
    })
}

/// Like [`validate`], but the silhouette only looks at tagged documents, so
/// untagged ones get `None`. Needs at least two distinct tags in use.
pub fn validate_tagged(points: ArrayView2<'_, f64>, result: &ClusterResult, tags: &TagSet) -> Result<ValidationReport, ValidateError> {
    let acc = accuracy(result, tags)?;
    let distinct: HashSet<&String> = tags.labels.iter().flatten().collect();
    if distinct.len() < 2 {
        return Err(ValidateError::InsufficientTags(distinct.len()));
    }
    if points.nrows() != result.assignment.len() {
        return Err(ValidateError::Alignment {
            what: "points",
            expected: result.assignment.len(),
            actual: points.nrows(),
        });
    }
    let keep: Vec<usize> = (0..tags.len()).filter(|&i| tags.labels[i].is_some()).collect();
    let sub = ClusterResult {
        assignment: keep.iter().map(|&i| result.assignment[i]).collect(),
        soft: None,
        ..result.clone()
    };
    let sil = silhouette(points.select(Axis(0), &keep).view(), &sub)?;
    let mut per_point = vec![None; tags.len()];
    for (&i, v) in keep.iter().zip(sil.per_point) {
        per_point[i] = v;
    }
    Ok(ValidationReport {
        accuracy: acc.accuracy,
        misclassified: acc.misclassified,
        counted: acc.counted,
        silhouette_index: sil.index,
        per_point_silhouette: per_point,
        alignment: acc.alignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::Method;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn result(labels: &[usize], k: usize) -> ClusterResult {
        ClusterResult {
            method: Method::Kmeans,
            k,
            seed: 0,
            objective: 0.0,
            log_likelihood: None,
            assignment: labels.iter().map(|&c| Label::Cluster(c)).collect(),
            soft: None,
        }
    }

    fn tags(names: &[&str]) -> TagSet {
        TagSet::new(names.iter().map(|s| (!s.is_empty()).then(|| s.to_string())).collect()).unwrap()
    }

    /// Best matching by trying every injective map of clusters into tags.
    fn brute_force(table: &[Vec<f64>]) -> f64 {
        fn go(table: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
            if row == table.len() {
                return 0.0;
            }
            let mut best = go(table, row + 1, used);
            for j in 0..used.len() {
                if !used[j] {
                    used[j] = true;
                    best = best.max(table[row][j] + go(table, row + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        let cols = table.first().map_or(0, Vec::len);
        go(table, 0, &mut vec![false; cols])
    }

    #[test]
    fn silhouette_of_tight_pairs() {
        let p = array![[0.0, 0.0], [0.0, 0.1], [10.0, 0.0], [10.0, 0.1]];
        let s = silhouette(p.view(), &result(&[1, 1, 2, 2], 2)).unwrap();
        assert!(s.index > 0.9);
        let swapped = silhouette(p.view(), &result(&[1, 2, 2, 2], 2)).unwrap();
        assert!(swapped.per_point[1].unwrap() < 0.0);
        assert_eq!(swapped.per_point[0], Some(0.0));
    }

    #[test]
    fn silhouette_hand_computed() {
        // 1-D points 0, 1, 5 with clusters {0,1} and {5}
        let p = array![[0.0], [1.0], [5.0]];
        let s = silhouette(p.view(), &result(&[1, 1, 2], 2)).unwrap();
        assert!((s.per_point[0].unwrap() - (5.0 - 1.0) / 5.0).abs() < 1e-15);
        assert!((s.per_point[1].unwrap() - (4.0 - 1.0) / 4.0).abs() < 1e-15);
        assert_eq!(s.per_point[2], Some(0.0));
        assert!((s.index - (0.8 + 0.75) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn silhouette_skips_trimmed_and_needs_two_clusters() {
        let p = array![[0.0], [1.0], [5.0], [100.0]];
        let mut r = result(&[1, 1, 2, 2], 2);
        r.method = Method::TrimmedKmeans;
        r.assignment[3] = Label::Trimmed;
        let s = silhouette(p.view(), &r).unwrap();
        assert_eq!(s.per_point[3], None);
        assert!((s.index - (0.8 + 0.75) / 3.0).abs() < 1e-12);
        assert_eq!(
            silhouette(p.view(), &result(&[1, 1, 1, 1], 2)).unwrap_err(),
            ValidateError::UndefinedSilhouette
        );
    }

    #[test]
    fn accuracy_examples() {
        let r = result(&[2, 2, 1, 1, 3], 3);
        let t = tags(&["a", "a", "b", "b", "c"]);
        let acc = accuracy(&r, &t).unwrap();
        assert_eq!(acc.accuracy, 1.0);
        assert_eq!(acc.alignment[&2], "a");
        let one = result(&[1, 1, 1, 1], 1);
        assert_eq!(accuracy(&one, &tags(&["x", "y", "x", "y"])).unwrap().accuracy, 0.5);
        assert!(matches!(accuracy(&one, &tags(&["x"])), Err(ValidateError::Alignment { .. })));
        assert_eq!(accuracy(&one, &tags(&["", "", "", ""])).unwrap_err(), ValidateError::NoTags);
    }

    #[test]
    fn untagged_and_trimmed_rules() {
        let mut r = result(&[1, 1, 2, 2, 2], 2);
        r.method = Method::TrimmedKmeans;
        r.assignment[4] = Label::Trimmed;
        let t = tags(&["a", "a", "b", "", "b"]);
        let acc = accuracy(&r, &t).unwrap();
        // doc 3 untagged is ignored; trimmed doc 4 counts but cannot be correct
        assert_eq!(acc.counted, 4);
        assert_eq!(acc.correct, 3);
        assert_eq!(acc.misclassified, 1);
        assert_eq!(acc.accuracy, 0.75);
    }

    #[test]
    fn misclassified_26_of_644() {
        let mut labels = Vec::new();
        let mut names = Vec::new();
        let sizes = [(1usize, "internal fraud", 300usize), (2, "card forgery", 200), (3, "bank transfer", 144)];
        for &(_, name, size) in &sizes {
            names.extend(std::iter::repeat_n(name, size));
        }
        for &(c, _, size) in &sizes {
            labels.extend(std::iter::repeat_n(c, size));
        }
        // 26 errors spread across the clusters
        for i in 0..10 {
            labels[i] = 2;
        }
        for i in 300..310 {
            labels[i] = 3;
        }
        for i in 500..506 {
            labels[i] = 1;
        }
        let acc = accuracy(&result(&labels, 3), &tags(&names)).unwrap();
        assert_eq!(acc.misclassified, 26);
        assert!((acc.accuracy - 0.9596).abs() < 5e-5);
    }

    #[test]
    fn tagged_half_only() {
        let p = array![[0.0], [1.0], [5.0], [6.0], [100.0], [200.0]];
        let r = result(&[1, 1, 2, 2, 2, 1], 2);
        let t = tags(&["a", "a", "b", "b", "", ""]);
        let rep = validate_tagged(p.view(), &r, &t).unwrap();
        assert_eq!(rep.accuracy, 1.0);
        assert_eq!(rep.counted, 4);
        let (near, far) = (1.0 - 1.0 / 4.5, 1.0 - 1.0 / 5.5);
        let want = [Some(far), Some(near), Some(near), Some(far), None, None];
        for (got, want) in rep.per_point_silhouette.iter().zip(want) {
            assert_eq!(got.is_some(), want.is_some());
            if let (Some(g), Some(w)) = (got, want) {
                assert!((g - w).abs() < 1e-12);
            }
        }
        assert!((rep.silhouette_index - (near + far) / 2.0).abs() < 1e-12);
        assert_eq!(
            validate_tagged(p.view(), &r, &tags(&["a", "a", "", "", "", ""])).unwrap_err(),
            ValidateError::InsufficientTags(1)
        );
    }

    #[test]
    fn matching_rectangular() {
        let table = vec![vec![5.0, 1.0], vec![4.0, 0.0], vec![0.0, 3.0]];
        let m = max_weight_matching(&table);
        assert_eq!(m, [Some(0), None, Some(1)]);
        let wide = vec![vec![0.0, 2.0, 7.0]];
        assert_eq!(max_weight_matching(&wide), [Some(2)]);
    }

    #[test]
    fn tagset_rules() {
        assert!(TagSet::new(vec![Some(UNTAGGED.into())]).is_err());
        assert!(TagSet::new(vec![Some(" a".into())]).is_err());
        assert_eq!(
            TagSet::with_names(vec![Some("b".into())], vec!["a".into()]).unwrap_err(),
            ValidateError::UnknownTag("b".into())
        );
        let mut t = tags(&["a", ""]);
        t.set(1, Some("z".into())).unwrap();
        assert_eq!(t.tag_names(), ["a", "z"]);
        let json = serde_json::to_string(&t).unwrap();
        let back: TagSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<TagSet>(r#"{"labels":["q"],"tag_names":[]}"#).is_err());
    }

    #[test]
    fn plot_bars_sorted() {
        let p = array![[0.0], [1.0], [5.0], [6.0], [20.0]];
        let r = result(&[1, 1, 2, 2, 2], 2);
        let s = silhouette(p.view(), &r).unwrap();
        let bars = silhouette_plot(&s, &r);
        assert_eq!(bars.len(), 5);
        for w in bars.windows(2) {
            assert!(w[0].cluster < w[1].cluster || (w[0].cluster == w[1].cluster && w[0].value >= w[1].value));
        }
    }

    fn table_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..=6, 1usize..=6).prop_flat_map(|(r, c)| {
            proptest::collection::vec(proptest::collection::vec((0u32..20).prop_map(f64::from), c), r)
        })
    }

    proptest! {
        #[test]
        fn hungarian_matches_brute_force(table in table_strategy()) {
            let m = max_weight_matching(&table);
            let total: f64 = m.iter().enumerate().filter_map(|(i, j)| j.map(|j| table[i][j])).sum();
            prop_assert_eq!(total, brute_force(&table));
            let mut seen: Vec<usize> = m.iter().flatten().copied().collect();
            seen.sort();
            seen.dedup();
            prop_assert_eq!(seen.len(), m.iter().flatten().count());
        }

        #[test]
        fn accuracy_invariant_under_relabeling(
            labels in proptest::collection::vec(1usize..=4, 5..40),
            tag_ids in proptest::collection::vec(0usize..3, 40),
            perm_seed in 0usize..24,
        ) {
            let n = labels.len();
            let names = ["a", "b", "c"];
            let t = TagSet::new((0..n).map(|i| Some(names[tag_ids[i]].to_string())).collect()).unwrap();
            let base = accuracy(&result(&labels, 4), &t).unwrap();

            let mut perm = vec![1, 2, 3, 4];
            let mut s = perm_seed;
            for i in (1..4).rev() {
                perm.swap(i, s % (i + 1));
                s /= i + 1;
            }
            let relabeled: Vec<usize> = labels.iter().map(|&c| perm[c - 1]).collect();
            prop_assert_eq!(accuracy(&result(&relabeled, 4), &t).unwrap().correct, base.correct);

            let renamed = TagSet::new((0..n).map(|i| Some(format!("tag-{}", 2 - tag_ids[i]))).collect()).unwrap();
            prop_assert_eq!(accuracy(&result(&labels, 4), &renamed).unwrap().correct, base.correct);

            // duplicating a correctly matched document never lowers accuracy
            let mut dup_labels = labels.clone();
            let mut dup_tags: Vec<Option<String>> = t.labels().to_vec();
            dup_labels.push(labels[0]);
            dup_tags.push(t.labels()[0].clone());
            let dup = accuracy(&result(&dup_labels, 4), &TagSet::new(dup_tags).unwrap()).unwrap();
            prop_assert!(dup.correct >= base.correct);
            prop_assert_eq!(base.misclassified, base.counted - base.correct);
        }

        #[test]
        fn accuracy_symmetric_for_equal_cardinality(
            pairs in proptest::collection::vec((0usize..3, 0usize..3), 3..30),
        ) {
            let names = ["a", "b", "c"];
            let r = result(&pairs.iter().map(|p| p.0 + 1).collect::<Vec<_>>(), 3);
            let t = TagSet::with_names(
                pairs.iter().map(|p| Some(names[p.1].to_string())).collect(),
                names.iter().map(|s| s.to_string()).collect(),
            ).unwrap();
            let swapped_r = result(&pairs.iter().map(|p| p.1 + 1).collect::<Vec<_>>(), 3);
            let swapped_t = TagSet::with_names(
                pairs.iter().map(|p| Some(names[p.0].to_string())).collect(),
                names.iter().map(|s| s.to_string()).collect(),
            ).unwrap();
            prop_assert_eq!(accuracy(&r, &t).unwrap().correct, accuracy(&swapped_r, &swapped_t).unwrap().correct);
        }

        #[test]
        fn silhouette_bounds_and_mean(
            pts in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 4..25),
            labels in proptest::collection::vec(1usize..=3, 25),
        ) {
            let n = pts.len();
            let p = Array2::from_shape_fn((n, 2), |(i, j)| if j == 0 { pts[i].0 } else { pts[i].1 });
            let r = result(&labels[..n], 3);
            if let Ok(s) = silhouette(p.view(), &r) {
                let vals: Vec<f64> = s.per_point.iter().flatten().copied().collect();
                prop_assert!(vals.iter().all(|v| (-1.0..=1.0).contains(v)));
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                prop_assert!((mean - s.index).abs() < 1e-12);
            }
        }
    }
}
