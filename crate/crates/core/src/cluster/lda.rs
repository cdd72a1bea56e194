//! Latent Dirichlet allocation by collapsed Gibbs sampling.
//!
//! Real-valued cells are rounded to the nearest non-negative integer count
//! before tokens are laid out.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::{argmax, restart_rng, ClusterError, ClusterResult, Label, Method};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaOptions {
    pub iterations: usize,
    pub burn_in: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
}

impl Default for LdaOptions {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            burn_in: 5_000,
            alpha: 0.1,
            beta: 0.05,
            seed: 0,
        }
    }
}

/// Nearest integer counts, clamped at zero.
pub fn round_counts(counts: ArrayView2<'_, f64>) -> Array2<u32> {
    counts.mapv(|x| if x.is_finite() && x > 0.0 { x.round() as u32 } else { 0 })
}

struct Sampler {
    k: usize,
    vocab: usize,
    alpha: f64,
    beta: f64,
    // token (doc, word) pairs and their current topic
    docs: Vec<usize>,
    words: Vec<usize>,
    topic: Vec<usize>,
    doc_topic: Array2<u32>,
    topic_word: Array2<u32>,
    topic_total: Vec<u32>,
}

impl Sampler {
    fn sweep<R: Rng>(&mut self, rng: &mut R, weights: &mut [f64]) {
        let vb = self.vocab as f64 * self.beta;
        for t in 0..self.topic.len() {
            let (d, w, old) = (self.docs[t], self.words[t], self.topic[t]);
            self.doc_topic[[d, old]] -= 1;
            self.topic_word[[old, w]] -= 1;
            self.topic_total[old] -= 1;
            let mut total = 0.0;
            for z in 0..self.k {
                total += (self.doc_topic[[d, z]] as f64 + self.alpha) * (self.topic_word[[z, w]] as f64 + self.beta)
                    / (self.topic_total[z] as f64 + vb);
                weights[z] = total;
            }
            let u = rng.random::<f64>() * total;
            let new = weights.iter().position(|&c| u < c).unwrap_or(self.k - 1);
            self.topic[t] = new;
            self.doc_topic[[d, new]] += 1;
            self.topic_word[[new, w]] += 1;
            self.topic_total[new] += 1;
        }
    }

    /// `ln p(w | z)` with topics integrated out.
    fn log_likelihood(&self) -> f64 {
        let v = self.vocab as f64;
        let mut ll = self.k as f64 * (ln_gamma(v * self.beta) - v * ln_gamma(self.beta));
        for z in 0..self.k {
            ll += self.topic_word.row(z).iter().map(|&c| ln_gamma(c as f64 + self.beta)).sum::<f64>();
            ll -= ln_gamma(self.topic_total[z] as f64 + v * self.beta);
        }
        ll
    }
}

/// Runs one chain. `objective` is the negative collapsed log-likelihood of
/// the final state; `soft` is θ averaged over post-burn-in sweeps.
pub fn lda_gibbs(counts: ArrayView2<'_, f64>, k: usize, opts: &LdaOptions) -> Result<ClusterResult, ClusterError> {
    if k == 0 {
        return Err(ClusterError::Parameter("k must be at least 1".into()));
    }
    if opts.burn_in >= opts.iterations {
        return Err(ClusterError::Parameter(format!(
            "burn-in {} must be below the {} iterations",
            opts.burn_in, opts.iterations
        )));
    }
    if !(opts.alpha > 0.0 && opts.beta > 0.0 && opts.alpha.is_finite() && opts.beta.is_finite()) {
        return Err(ClusterError::Parameter("alpha and beta must be positive".into()));
    }
    if counts.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(ClusterError::Parameter("counts must be finite and non-negative".into()));
    }
    let rounded = round_counts(counts);
    let (n, m) = rounded.dim();
    if let Some(i) = rounded.outer_iter().position(|r| r.iter().all(|&c| c == 0)) {
        return Err(ClusterError::DegenerateDocument(i));
    }

    let mut rng = restart_rng(opts.seed, 0);
    let mut s = Sampler {
        k,
        vocab: m,
        alpha: opts.alpha,
        beta: opts.beta,
        docs: Vec::new(),
        words: Vec::new(),
        topic: Vec::new(),
        doc_topic: Array2::zeros((n, k)),
        topic_word: Array2::zeros((k, m)),
        topic_total: vec![0; k],
    };
    for ((d, w), &c) in rounded.indexed_iter() {
        for _ in 0..c {
            let z = rng.random_range(0..k);
            s.docs.push(d);
            s.words.push(w);
            s.topic.push(z);
            s.doc_topic[[d, z]] += 1;
            s.topic_word[[z, w]] += 1;
            s.topic_total[z] += 1;
        }
    }

    let lengths: Vec<f64> = rounded.outer_iter().map(|r| r.iter().map(|&c| c as f64).sum()).collect();
    let mut theta = Array2::<f64>::zeros((n, k));
    let mut weights = vec![0.0; k];
    let ka = k as f64 * opts.alpha;
    for it in 0..opts.iterations {
        s.sweep(&mut rng, &mut weights);
        if it >= opts.burn_in {
            for d in 0..n {
                for z in 0..k {
                    theta[[d, z]] += (s.doc_topic[[d, z]] as f64 + opts.alpha) / (lengths[d] + ka);
                }
            }
        }
    }
    for mut row in theta.outer_iter_mut() {
        let total = row.sum();
        row /= total;
    }
    let ll = s.log_likelihood();
    Ok(ClusterResult {
        method: Method::Lda,
        k,
        seed: opts.seed,
        objective: -ll,
        log_likelihood: Some(ll),
        assignment: theta.outer_iter().map(|r| Label::from_index(argmax(r.iter().copied()))).collect(),
        soft: Some(theta),
    })
}
