//! Clustering and topic models over the LSA projection or the (semantic)
//! document-by-term matrix.
//!
//! Every model that uses random starts runs them through [`MultiStartPolicy`]:
//! restart `r` draws from its own ChaCha stream derived from `(seed, r)`, so
//! restarts can run in parallel and the winner (lowest objective, ties to the
//! lowest restart index) does not depend on scheduling.

use std::fmt;

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

pub mod dmm;
pub mod gmm;
pub mod kmeans;
pub mod lda;
pub mod mou;

pub use dmm::{dirichlet_multinomial, DmmOptions};
pub use gmm::{gmm_spherical, GmmOptions};
pub use kmeans::{kmeans, spherical_kmeans, trimmed_kmeans};
pub use lda::{lda_gibbs, LdaOptions};
pub use mou::{mixtures_of_unigrams, MouOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("degenerate point at row {0} (zero vector)")]
    DegeneratePoint(usize),
    #[error("degenerate document at row {0} (no mass)")]
    DegenerateDocument(usize),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("optimization failure: {0}")]
    OptimizationFailure(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    Kmeans,
    Skmeans,
    GmmSpherical,
    TrimmedKmeans,
    Mou,
    Dmm,
    Lda,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Kmeans => "kmeans",
            Method::Skmeans => "skmeans",
            Method::GmmSpherical => "gmm_spherical",
            Method::TrimmedKmeans => "trimmed_kmeans",
            Method::Mou => "mou",
            Method::Dmm => "dmm",
            Method::Lda => "lda",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-document label: a 1-based cluster id, or trimmed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Cluster(usize),
    Trimmed,
}

impl Label {
    /// 0-based cluster index.
    pub fn index(self) -> Option<usize> {
        match self {
            Label::Cluster(c) => Some(c - 1),
            Label::Trimmed => None,
        }
    }

    pub fn from_index(i: usize) -> Self {
        Label::Cluster(i + 1)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Cluster(c) => write!(f, "{c}"),
            Label::Trimmed => f.write_str("TRIMMED"),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Label::Cluster(c) => serializer.serialize_u64(*c as u64),
            Label::Trimmed => serializer.serialize_str("TRIMMED"),
        }
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct LabelVisitor;
        impl Visitor<'_> for LabelVisitor {
            type Value = Label;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a positive cluster id or \"TRIMMED\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Label, E> {
                if v == 0 {
                    Err(E::custom("cluster ids start at 1"))
                } else {
                    Ok(Label::Cluster(v as usize))
                }
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Label, E> {
                if v <= 0 {
                    Err(E::custom("cluster ids start at 1"))
                } else {
                    Ok(Label::Cluster(v as usize))
                }
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Label, E> {
                if v == "TRIMMED" {
                    Ok(Label::Trimmed)
                } else {
                    Err(E::custom(format!("unknown label `{v}`")))
                }
            }
        }
        deserializer.deserialize_any(LabelVisitor)
    }
}

/// Output of one clustering method.
///
/// `objective` is lower-is-better for every method: within-cluster sum of
/// squares (k-means, trimmed k-means over retained points), summed cosine
/// distance (spherical k-means), BIC (Gaussian, unigram and
/// Dirichlet-multinomial mixtures) and the negative collapsed log-likelihood
/// of the final Gibbs state (LDA).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub method: Method,
    pub k: usize,
    pub seed: u64,
    pub objective: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_likelihood: Option<f64>,
    pub assignment: Vec<Label>,
    #[serde(default, with = "soft_serde", skip_serializing_if = "Option::is_none")]
    pub soft: Option<Array2<f64>>,
}

impl ClusterResult {
    /// 0-based indices, `None` for trimmed documents.
    pub fn indices(&self) -> Vec<Option<usize>> {
        self.assignment.iter().map(|l| l.index()).collect()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for i in self.assignment.iter().filter_map(|l| l.index()) {
            sizes[i] += 1;
        }
        sizes
    }

    pub fn n_trimmed(&self) -> usize {
        self.assignment.iter().filter(|l| **l == Label::Trimmed).count()
    }

    /// Checks the label range, the trimmed-label rule and the soft matrix.
    pub fn check(&self) -> Result<(), String> {
        for l in &self.assignment {
            match l {
                Label::Cluster(c) if *c == 0 || *c > self.k => return Err(format!("label {c} outside 1..={}", self.k)),
                Label::Trimmed if self.method != Method::TrimmedKmeans => {
                    return Err("TRIMMED label on a non-trimmed method".into())
                }
                _ => {}
            }
        }
        if let Some(soft) = &self.soft {
            if soft.dim() != (self.assignment.len(), self.k) {
                return Err(format!("soft matrix has shape {:?}", soft.dim()));
            }
            for (i, row) in soft.outer_iter().enumerate() {
                let sum: f64 = row.sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(format!("soft row {i} sums to {sum}"));
                }
                if Some(argmax(row.iter().copied())) != self.assignment[i].index() {
                    return Err(format!("soft row {i} argmax disagrees with assignment"));
                }
            }
        }
        Ok(())
    }
}

mod soft_serde {
    use ndarray::Array2;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(soft: &Option<Array2<f64>>, s: S) -> Result<S::Ok, S::Error> {
        soft.as_ref()
            .map(|m| m.outer_iter().map(|r| r.to_vec()).collect::<Vec<_>>())
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Array2<f64>>, D::Error> {
        use serde::de::Error;
        let rows = Option::<Vec<Vec<f64>>>::deserialize(d)?;
        rows.map(|rows| {
            let n = rows.len();
            let k = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != k) {
                return Err(D::Error::custom("ragged soft matrix"));
            }
            Array2::from_shape_vec((n, k), rows.into_iter().flatten().collect()).map_err(D::Error::custom)
        })
        .transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Selection {
    MinObjective,
    MinBic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiStartPolicy {
    pub restarts: usize,
    pub seed: u64,
    pub selection: Selection,
}

impl MultiStartPolicy {
    pub fn new(restarts: usize, seed: u64) -> Self {
        Self {
            restarts,
            seed,
            selection: Selection::MinObjective,
        }
    }

    pub fn with_selection(mut self, selection: Selection) -> Self {
        self.selection = selection;
        self
    }

    fn validate(&self) -> Result<(), ClusterError> {
        if self.restarts == 0 {
            return Err(ClusterError::Parameter("restarts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Random stream owned by restart `restart` of a run seeded with `seed`.
pub fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

/// Score of one finished restart.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Score {
    pub objective: f64,
    pub bic: Option<f64>,
}

impl Score {
    fn key(&self, selection: Selection) -> f64 {
        match selection {
            Selection::MinObjective => self.objective,
            Selection::MinBic => self.bic.unwrap_or(self.objective),
        }
    }
}

/// Runs every restart and keeps the best. Failed restarts are skipped; when
/// all fail the last error is returned.
pub(crate) fn best_of<T, F>(policy: &MultiStartPolicy, run: F) -> Result<T, ClusterError>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> Result<(T, Score), ClusterError> + Sync,
{
    policy.validate()?;
    let outcomes: Vec<Result<(T, Score), ClusterError>> = (0..policy.restarts)
        .into_par_iter()
        .map(|r| run(r, &mut restart_rng(policy.seed, r)))
        .collect();
    let mut best: Option<(T, f64)> = None;
    let mut last_err = None;
    for outcome in outcomes {
        match outcome {
            Ok((value, score)) => {
                let key = score.key(policy.selection);
                if !key.is_nan() && best.as_ref().is_none_or(|(_, b)| key < *b) {
                    best = Some((value, key));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match (best, last_err) {
        (Some((v, _)), _) => Ok(v),
        (None, Some(e)) => Err(e),
        (None, None) => Err(ClusterError::DegenerateFit("no restart produced a finite objective".into())),
    }
}

/// Index of the largest value, ties to the lowest index.
pub(crate) fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) fn check_points(points: ArrayView2<'_, f64>, k: usize) -> Result<(), ClusterError> {
    let (n, d) = points.dim();
    if d == 0 {
        return Err(ClusterError::Parameter("points need at least one dimension".into()));
    }
    if k == 0 {
        return Err(ClusterError::Parameter("k must be at least 1".into()));
    }
    if k > n {
        return Err(ClusterError::Parameter(format!("k = {k} exceeds the {n} points")));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(ClusterError::Parameter("non-finite coordinate".into()));
    }
    Ok(())
}

/// Validates a count matrix for the mixture/topic models.
pub(crate) fn check_counts(counts: ArrayView2<'_, f64>, k: usize) -> Result<(), ClusterError> {
    let n = counts.nrows();
    if k == 0 {
        return Err(ClusterError::Parameter("k must be at least 1".into()));
    }
    if k > n {
        return Err(ClusterError::Parameter(format!("k = {k} exceeds the {n} documents")));
    }
    if counts.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(ClusterError::Parameter("counts must be finite and non-negative".into()));
    }
    if let Some(i) = counts.outer_iter().position(|r| r.sum() <= 0.0) {
        return Err(ClusterError::DegenerateDocument(i));
    }
    Ok(())
}

/// Random hard assignment with every cluster non-empty (`k <= n`).
pub(crate) fn random_partition(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    use rand::seq::SliceRandom;
    use rand::Rng;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut labels = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        labels[i] = if pos < k { pos } else { rng.random_range(0..k) };
    }
    labels
}
