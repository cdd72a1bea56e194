//! Mixture of unigrams: each document draws all of its words from a single
//! multinomial topic. Fit by EM in log space; fractional counts are allowed.

use ndarray::{Array1, Array2, ArrayView2};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::{
    argmax, best_of, check_counts, log_sum_exp, random_partition, ClusterError, ClusterResult, Label, Method,
    MultiStartPolicy, Score, Selection,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MouOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for MouOptions {
    fn default() -> Self {
        Self { max_iter: 1000, tol: 1e-7 }
    }
}

#[derive(Debug, Clone)]
pub struct MouFit {
    /// Topic-word probabilities, one row per component.
    pub topics: Array2<f64>,
    pub weights: Array1<f64>,
    pub responsibilities: Array2<f64>,
    pub trace: Vec<f64>,
}

impl MouFit {
    pub fn log_likelihood(&self) -> f64 {
        *self.trace.last().expect("trace is never empty")
    }

    pub fn bic(&self, n: usize) -> f64 {
        let (k, m) = self.topics.dim();
        let p = (k - 1) + k * (m - 1);
        -2.0 * self.log_likelihood() + p as f64 * (n as f64).ln()
    }
}

/// `ln Γ(N+1) - Σ ln Γ(x+1)` per document.
pub(crate) fn log_multinomial_coef(counts: ArrayView2<'_, f64>) -> Array1<f64> {
    counts
        .outer_iter()
        .map(|row| ln_gamma(row.sum() + 1.0) - row.iter().filter(|&&x| x > 0.0).map(|&x| ln_gamma(x + 1.0)).sum::<f64>())
        .collect()
}

fn e_step(counts: ArrayView2<'_, f64>, coef: &Array1<f64>, topics: &Array2<f64>, w: &Array1<f64>, resp: &mut Array2<f64>) -> f64 {
    let k = topics.nrows();
    let log_topics = topics.mapv(f64::ln);
    let mut logs = vec![0.0; k];
    let mut ll = 0.0;
    for (i, row) in counts.outer_iter().enumerate() {
        for c in 0..k {
            // zero counts contribute nothing even where the topic has zero mass
            let s: f64 = row
                .iter()
                .zip(log_topics.row(c))
                .filter(|(x, _)| **x > 0.0)
                .map(|(x, lt)| x * lt)
                .sum();
            logs[c] = w[c].ln() + s;
        }
        let lse = log_sum_exp(&logs);
        ll += lse + coef[i];
        for c in 0..k {
            resp[[i, c]] = (logs[c] - lse).exp();
        }
    }
    ll
}

fn m_step(counts: ArrayView2<'_, f64>, resp: &Array2<f64>, topics: &mut Array2<f64>, w: &mut Array1<f64>) {
    let n = counts.nrows() as f64;
    let expected = resp.t().dot(&counts);
    for (c, row) in expected.outer_iter().enumerate() {
        let total = row.sum();
        let nk = resp.column(c).sum();
        w[c] = nk / n;
        // a component with no mass keeps its previous topic
        if total > 0.0 {
            topics.row_mut(c).assign(&(&row / total));
        }
    }
}

/// EM started from a random hard partition with every component non-empty.
pub fn fit_mou(counts: ArrayView2<'_, f64>, k: usize, opts: &MouOptions, rng: &mut ChaCha8Rng) -> Result<MouFit, ClusterError> {
    check_counts(counts, k)?;
    let n = counts.nrows();
    let m = counts.ncols();
    let coef = log_multinomial_coef(counts);
    let labels = random_partition(n, k, rng);
    let mut resp = Array2::<f64>::zeros((n, k));
    for (i, &c) in labels.iter().enumerate() {
        resp[[i, c]] = 1.0;
    }
    let mut topics = Array2::<f64>::from_elem((k, m), 1.0 / m as f64);
    let mut w = Array1::<f64>::zeros(k);
    let mut trace = Vec::new();
    for _ in 0..opts.max_iter.max(1) {
        m_step(counts, &resp, &mut topics, &mut w);
        let ll = e_step(counts, &coef, &topics, &w, &mut resp);
        if !ll.is_finite() {
            return Err(ClusterError::DegenerateFit("non-finite log-likelihood".into()));
        }
        let done = trace.last().is_some_and(|&prev: &f64| (ll - prev).abs() <= opts.tol * ll.abs());
        trace.push(ll);
        if done {
            break;
        }
    }
    Ok(MouFit {
        topics,
        weights: w,
        responsibilities: resp,
        trace,
    })
}

/// Multi-start mixture of unigrams. The policy's selection is forced to BIC.
pub fn mixtures_of_unigrams(
    counts: ArrayView2<'_, f64>,
    k: usize,
    policy: &MultiStartPolicy,
    opts: &MouOptions,
) -> Result<ClusterResult, ClusterError> {
    check_counts(counts, k)?;
    let n = counts.nrows();
    let policy = policy.with_selection(Selection::MinBic);
    let fit = best_of(&policy, |_, rng| {
        let fit = fit_mou(counts, k, opts, rng)?;
        let bic = fit.bic(n);
        Ok((fit, Score { objective: bic, bic: Some(bic) }))
    })?;
    Ok(ClusterResult {
        method: Method::Mou,
        k,
        seed: policy.seed,
        objective: fit.bic(n),
        log_likelihood: Some(fit.log_likelihood()),
        assignment: fit
            .responsibilities
            .outer_iter()
            .map(|r| Label::from_index(argmax(r.iter().copied())))
            .collect(),
        soft: Some(fit.responsibilities.clone()),
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::cluster::restart_rng;
    use ndarray::{array, Axis};
    use rand::Rng;

    /// 20 documents over words 0..5 followed by 20 over words 5..10.
    pub(crate) fn disjoint_corpus(seed: u64) -> Array2<f64> {
        let mut rng = restart_rng(seed, 0);
        Array2::from_shape_fn((40, 10), |(i, j)| {
            let group = i / 20;
            if j / 5 == group {
                rng.random_range(0..4) as f64 + if j % 5 == i % 5 { 1.0 } else { 0.0 }
            } else {
                0.0
            }
        })
    }

    pub(crate) fn separates_groups(r: &ClusterResult) -> bool {
        let a = r.assignment[0];
        r.assignment[..20].iter().all(|l| *l == a) && r.assignment[20..].iter().all(|l| *l != a)
            && r.assignment[20..].iter().all(|l| *l == r.assignment[20])
    }

    #[test]
    fn disjoint_vocabularies_separate() {
        let c = disjoint_corpus(1);
        let r = mixtures_of_unigrams(c.view(), 2, &MultiStartPolicy::new(10, 3), &MouOptions::default()).unwrap();
        r.check().unwrap();
        assert!(separates_groups(&r));
        let soft = r.soft.unwrap();
        assert!(soft.iter().all(|&p| p < 1e-12 || p > 1.0 - 1e-12));
    }

    #[test]
    fn one_component_is_corpus_frequencies() {
        let c = array![[1.0, 2.0, 0.0], [0.0, 1.0, 4.0], [0.5, 0.0, 1.5]];
        let fit = fit_mou(c.view(), 1, &MouOptions::default(), &mut restart_rng(0, 0)).unwrap();
        let totals = c.sum_axis(Axis(0));
        let expected = &totals / totals.sum();
        for (a, b) in fit.topics.row(0).iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
        let single = array![[2.0, 1.0]];
        let r = mixtures_of_unigrams(single.view(), 1, &MultiStartPolicy::new(1, 0), &MouOptions::default()).unwrap();
        assert_eq!(r.soft.unwrap()[[0, 0]], 1.0);
    }

    #[test]
    fn log_likelihood_matches_closed_form_k1() {
        let c = array![[2.0, 1.0], [1.0, 0.0]];
        let fit = fit_mou(c.view(), 1, &MouOptions::default(), &mut restart_rng(0, 0)).unwrap();
        // p = (3/4, 1/4); doc1: 3!/(2!1!) * (3/4)^2 (1/4); doc2: 3/4
        let expected = (3.0f64 * 0.5625 * 0.25).ln() + 0.75f64.ln();
        assert!((fit.log_likelihood() - expected).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let c = array![[1.0, 0.0], [0.0, 0.0]];
        assert_eq!(
            fit_mou(c.view(), 1, &MouOptions::default(), &mut restart_rng(0, 0)).unwrap_err(),
            ClusterError::DegenerateDocument(1)
        );
        let c = array![[1.0, -1.0]];
        assert!(matches!(
            mixtures_of_unigrams(c.view(), 1, &MultiStartPolicy::new(1, 0), &MouOptions::default()),
            Err(ClusterError::Parameter(_))
        ));
    }

    #[test]
    fn log_likelihood_non_decreasing() {
        for seed in 0..20 {
            let mut rng = restart_rng(seed, 7);
            let c = Array2::from_shape_fn((30, 8), |_| rng.random_range(0.0..3.0f64).floor() + rng.random_range(0.0..0.5));
            let fit = fit_mou(c.view(), 3, &MouOptions::default(), &mut restart_rng(seed, 0)).unwrap();
            for w in fit.trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "seed {seed}: {} -> {}", w[0], w[1]);
            }
        }
    }
}
