//! Mixture of Dirichlet-multinomials, fit by gradient ascent on the exact
//! log-likelihood. Weights are softmax(η) and concentrations exp(λ), so the
//! search is unconstrained.

use ndarray::{Array1, Array2, ArrayView2};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use super::mou::log_multinomial_coef;
use super::{
    argmax, best_of, check_counts, log_sum_exp, random_partition, ClusterError, ClusterResult, Label, Method,
    MultiStartPolicy, Score, Selection,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DmmOptions {
    pub max_iter: usize,
    /// Relative improvement below which ascent stops early.
    pub tol: f64,
}

impl Default for DmmOptions {
    fn default() -> Self {
        Self { max_iter: 100, tol: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct DmmFit {
    pub weights: Array1<f64>,
    /// Dirichlet concentration per component and term.
    pub alpha: Array2<f64>,
    pub responsibilities: Array2<f64>,
    /// Log-likelihood after each accepted step.
    pub trace: Vec<f64>,
}

impl DmmFit {
    pub fn log_likelihood(&self) -> f64 {
        *self.trace.last().expect("trace is never empty")
    }

    pub fn bic(&self, n: usize) -> f64 {
        let (k, m) = self.alpha.dim();
        let p = (k - 1) + k * m;
        -2.0 * self.log_likelihood() + p as f64 * (n as f64).ln()
    }

    /// Dirichlet means `α / Σα` per component.
    pub fn means(&self) -> Array2<f64> {
        let mut out = self.alpha.clone();
        for mut row in out.outer_iter_mut() {
            let s = row.sum();
            row /= s;
        }
        out
    }
}

/// Sparse view of the corpus: nonzero (term, count) pairs and row totals.
struct Docs {
    rows: Vec<Vec<(usize, f64)>>,
    totals: Vec<f64>,
    coef: Array1<f64>,
}

impl Docs {
    fn new(counts: ArrayView2<'_, f64>) -> Self {
        let rows: Vec<Vec<(usize, f64)>> = counts
            .outer_iter()
            .map(|r| r.iter().enumerate().filter(|(_, x)| **x > 0.0).map(|(j, x)| (j, *x)).collect())
            .collect();
        let totals = rows.iter().map(|r| r.iter().map(|(_, x)| x).sum()).collect();
        Self {
            rows,
            totals,
            coef: log_multinomial_coef(counts),
        }
    }
}

struct Params {
    eta: Array1<f64>,
    lambda: Array2<f64>,
}

impl Params {
    fn log_weights(&self) -> Array1<f64> {
        let lse = log_sum_exp(self.eta.as_slice().unwrap());
        self.eta.mapv(|e| e - lse)
    }
}

/// Per-document component log-densities, without the multinomial coefficient.
fn component_logs(docs: &Docs, alpha: &Array2<f64>) -> Array2<f64> {
    let k = alpha.nrows();
    let sums: Vec<f64> = alpha.outer_iter().map(|r| r.sum()).collect();
    let mut out = Array2::zeros((docs.rows.len(), k));
    for (i, row) in docs.rows.iter().enumerate() {
        for c in 0..k {
            let a = alpha.row(c);
            let mut s = ln_gamma(sums[c]) - ln_gamma(docs.totals[i] + sums[c]);
            for &(j, x) in row {
                s += ln_gamma(x + a[j]) - ln_gamma(a[j]);
            }
            out[[i, c]] = s;
        }
    }
    out
}

/// Log-likelihood and responsibilities.
fn evaluate(docs: &Docs, p: &Params) -> (f64, Array2<f64>) {
    let alpha = p.lambda.mapv(f64::exp);
    let logw = p.log_weights();
    let mut logs = component_logs(docs, &alpha);
    let mut ll = 0.0;
    for (i, mut row) in logs.outer_iter_mut().enumerate() {
        row += &logw;
        let lse = log_sum_exp(row.as_slice().unwrap());
        ll += lse + docs.coef[i];
        row.mapv_inplace(|v| (v - lse).exp());
    }
    (ll, logs)
}

fn gradient(docs: &Docs, p: &Params, resp: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = docs.rows.len() as f64;
    let (k, m) = p.lambda.dim();
    let alpha = p.lambda.mapv(f64::exp);
    let w = p.log_weights().mapv(f64::exp);
    let mut g_eta = Array1::zeros(k);
    let mut g_lambda = Array2::zeros((k, m));
    for c in 0..k {
        let a = alpha.row(c);
        let total_alpha = a.sum();
        let mut common = 0.0;
        let mut per_term = vec![0.0; m];
        for (i, row) in docs.rows.iter().enumerate() {
            let r = resp[[i, c]];
            if r == 0.0 {
                continue;
            }
            common += r * (digamma(total_alpha) - digamma(docs.totals[i] + total_alpha));
            for &(j, x) in row {
                per_term[j] += r * (digamma(x + a[j]) - digamma(a[j]));
            }
        }
        g_eta[c] = resp.column(c).sum() - n * w[c];
        for j in 0..m {
            g_lambda[[c, j]] = a[j] * (common + per_term[j]);
        }
    }
    (g_eta, g_lambda)
}

const MAX_HALVINGS: usize = 60;

/// Gradient ascent from a random hard partition. A step is accepted only if
/// the log-likelihood does not drop; otherwise the step is halved.
pub fn fit_dmm(counts: ArrayView2<'_, f64>, k: usize, opts: &DmmOptions, rng: &mut ChaCha8Rng) -> Result<DmmFit, ClusterError> {
    check_counts(counts, k)?;
    let (n, m) = counts.dim();
    let docs = Docs::new(counts);
    let labels = random_partition(n, k, rng);

    let mut lambda = Array2::zeros((k, m));
    let mut sizes = vec![0.0; k];
    for c in 0..k {
        let mut profile = vec![0.5; m];
        for (i, &l) in labels.iter().enumerate() {
            if l == c {
                sizes[c] += 1.0;
                for &(j, x) in &docs.rows[i] {
                    profile[j] += x;
                }
            }
        }
        let total: f64 = profile.iter().sum();
        for j in 0..m {
            lambda[[c, j]] = (m as f64 * profile[j] / total).ln();
        }
    }
    let eta = Array1::from_iter(sizes.iter().map(|s| (s / n as f64).ln()));
    let mut params = Params { eta, lambda };
    let (mut ll, mut resp) = evaluate(&docs, &params);
    if !ll.is_finite() {
        return Err(ClusterError::OptimizationFailure("non-finite log-likelihood at start".into()));
    }
    let mut trace = vec![ll];
    let mut step = 1.0 / n as f64;

    for _ in 0..opts.max_iter {
        let (g_eta, g_lambda) = gradient(&docs, &params, &resp);
        if g_eta.iter().chain(g_lambda.iter()).any(|g| !g.is_finite()) {
            return Err(ClusterError::OptimizationFailure("non-finite gradient".into()));
        }
        let mut accepted = None;
        let mut any_finite = false;
        let mut s = step;
        for _ in 0..MAX_HALVINGS {
            let trial = Params {
                eta: &params.eta + &(&g_eta * s),
                lambda: &params.lambda + &(&g_lambda * s),
            };
            let (trial_ll, trial_resp) = evaluate(&docs, &trial);
            if trial_ll.is_finite() {
                any_finite = true;
                if trial_ll >= ll {
                    accepted = Some((trial, trial_ll, trial_resp));
                    break;
                }
            }
            s *= 0.5;
        }
        match accepted {
            Some((p, new_ll, new_resp)) => {
                let gain = new_ll - ll;
                params = p;
                ll = new_ll;
                resp = new_resp;
                trace.push(ll);
                step = s * 2.0;
                if gain <= opts.tol * ll.abs() {
                    break;
                }
            }
            None if !any_finite => {
                return Err(ClusterError::OptimizationFailure("every trial step was non-finite".into()));
            }
            // no ascent direction left at machine precision
            None => break,
        }
    }
    Ok(DmmFit {
        weights: params.log_weights().mapv(f64::exp),
        alpha: params.lambda.mapv(f64::exp),
        responsibilities: resp,
        trace,
    })
}

/// Multi-start Dirichlet-multinomial mixture ranked by BIC.
pub fn dirichlet_multinomial(
    counts: ArrayView2<'_, f64>,
    k: usize,
    policy: &MultiStartPolicy,
    opts: &DmmOptions,
) -> Result<ClusterResult, ClusterError> {
    check_counts(counts, k)?;
    let n = counts.nrows();
    let policy = policy.with_selection(Selection::MinBic);
    let fit = best_of(&policy, |_, rng| {
        let fit = fit_dmm(counts, k, opts, rng)?;
        let bic = fit.bic(n);
        Ok((fit, Score { objective: bic, bic: Some(bic) }))
    })?;
    Ok(ClusterResult {
        method: Method::Dmm,
        k,
        seed: policy.seed,
        objective: fit.bic(n),
        log_likelihood: Some(fit.log_likelihood()),
        assignment: fit
            .responsibilities
            .outer_iter()
            .map(|r| Label::from_index(argmax(r.iter().copied())))
            .collect(),
        soft: Some(fit.responsibilities),
    })
}
