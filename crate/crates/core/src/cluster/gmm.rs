//! Gaussian mixture with one spherical covariance `σ_k² I` per component.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, best_of, check_points, log_sum_exp, ClusterError, ClusterResult, Label, Method, MultiStartPolicy, Score};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmOptions {
    pub max_iter: usize,
    /// Relative log-likelihood change that ends EM.
    pub tol: f64,
}

impl Default for GmmOptions {
    fn default() -> Self {
        Self { max_iter: 500, tol: 1e-8 }
    }
}

/// One fitted mixture.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub means: Array2<f64>,
    pub variances: Array1<f64>,
    pub weights: Array1<f64>,
    pub responsibilities: Array2<f64>,
    /// Log-likelihood before each M step, ending with the final value.
    pub trace: Vec<f64>,
}

impl GmmFit {
    pub fn log_likelihood(&self) -> f64 {
        *self.trace.last().expect("trace is never empty")
    }

    pub fn bic(&self, n: usize) -> f64 {
        let (k, d) = self.means.dim();
        let p = k * d + k + (k - 1);
        -2.0 * self.log_likelihood() + p as f64 * (n as f64).ln()
    }
}

// Variances below this fraction of the data variance count as a collapse.
const COLLAPSE: f64 = 1e-10;

fn e_step(points: ArrayView2<'_, f64>, means: &Array2<f64>, var: &Array1<f64>, w: &Array1<f64>, resp: &mut Array2<f64>) -> f64 {
    let d = points.ncols() as f64;
    let k = means.nrows();
    let mut ll = 0.0;
    let mut logs = vec![0.0; k];
    for (i, x) in points.outer_iter().enumerate() {
        for c in 0..k {
            let sq: f64 = x.iter().zip(means.row(c)).map(|(a, b)| (a - b) * (a - b)).sum();
            logs[c] = w[c].ln() - 0.5 * d * (2.0 * PI * var[c]).ln() - sq / (2.0 * var[c]);
        }
        let lse = log_sum_exp(&logs);
        ll += lse;
        for c in 0..k {
            resp[[i, c]] = (logs[c] - lse).exp();
        }
    }
    ll
}

/// EM from `k` distinct random points, the pooled variance and equal weights.
pub fn fit_gmm(points: ArrayView2<'_, f64>, k: usize, opts: &GmmOptions, rng: &mut ChaCha8Rng) -> Result<GmmFit, ClusterError> {
    check_points(points, k)?;
    let (n, d) = points.dim();
    let pooled = points.var_axis(Axis(0), 0.0).mean().unwrap_or(0.0);
    if pooled <= 0.0 {
        return Err(ClusterError::DegenerateFit("all points coincide".into()));
    }
    let idx = sample(rng, n, k).into_vec();
    let mut means = points.select(Axis(0), &idx);
    let mut var = Array1::from_elem(k, pooled);
    let mut w = Array1::from_elem(k, 1.0 / k as f64);
    let mut resp = Array2::<f64>::zeros((n, k));
    let mut trace = vec![e_step(points, &means, &var, &w, &mut resp)];

    for _ in 0..opts.max_iter {
        let nk = resp.sum_axis(Axis(0));
        for c in 0..k {
            if nk[c] <= f64::MIN_POSITIVE {
                return Err(ClusterError::DegenerateFit(format!("component {} lost all mass", c + 1)));
            }
            let mean = resp.column(c).dot(&points) / nk[c];
            let ss: f64 = points
                .outer_iter()
                .zip(resp.column(c))
                .map(|(x, r)| r * x.iter().zip(mean.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .sum();
            var[c] = ss / (d as f64 * nk[c]);
            if !(var[c] > COLLAPSE * pooled) {
                return Err(ClusterError::DegenerateFit(format!("component {} variance collapsed", c + 1)));
            }
            means.row_mut(c).assign(&mean);
            w[c] = nk[c] / n as f64;
        }
        let ll = e_step(points, &means, &var, &w, &mut resp);
        let prev = *trace.last().unwrap();
        trace.push(ll);
        if !ll.is_finite() {
            return Err(ClusterError::DegenerateFit("non-finite log-likelihood".into()));
        }
        if (ll - prev).abs() <= opts.tol * ll.abs() {
            break;
        }
    }
    Ok(GmmFit {
        means,
        variances: var,
        weights: w,
        responsibilities: resp,
        trace,
    })
}

/// Multi-start spherical GMM; restarts are ranked by BIC. Restarts that
/// collapse are dropped, and if all of them do the last error is returned.
pub fn gmm_spherical(points: ArrayView2<'_, f64>, k: usize, policy: &MultiStartPolicy) -> Result<ClusterResult, ClusterError> {
    gmm_spherical_with(points, k, policy, &GmmOptions::default())
}

pub fn gmm_spherical_with(
    points: ArrayView2<'_, f64>,
    k: usize,
    policy: &MultiStartPolicy,
    opts: &GmmOptions,
) -> Result<ClusterResult, ClusterError> {
    check_points(points, k)?;
    let n = points.nrows();
    let fit = best_of(policy, |_, rng| {
        let fit = fit_gmm(points, k, opts, rng)?;
        let bic = fit.bic(n);
        Ok((fit, Score { objective: bic, bic: Some(bic) }))
    })?;
    Ok(ClusterResult {
        method: Method::GmmSpherical,
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::restart_rng;
    use ndarray::array;
    use rand_distr::{Distribution, Normal};

    fn two_blobs(seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = restart_rng(seed, 0);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut p = Array2::zeros((400, 2));
        let mut truth = Vec::new();
        for i in 0..400 {
            let g = i / 200;
            p[[i, 0]] = normal.sample(&mut rng) + 10.0 * g as f64;
            p[[i, 1]] = normal.sample(&mut rng);
            truth.push(g);
        }
        (p, truth)
    }

    #[test]
    fn separated_blobs_recovered() {
        let (p, truth) = two_blobs(1);
        let r = gmm_spherical(p.view(), 2, &MultiStartPolicy::new(10, 2)).unwrap();
        r.check().unwrap();
        let idx: Vec<usize> = r.indices().into_iter().map(Option::unwrap).collect();
        let agree = idx.iter().zip(&truth).filter(|(a, b)| a == b).count();
        let best = agree.max(400 - agree);
        assert!(best as f64 / 400.0 >= 0.99, "agreement {best}/400");
    }

    #[test]
    fn single_component_is_sample_mean() {
        let p = array![[0.0, 1.0], [2.0, 3.0], [4.0, -1.0], [1.0, 1.0]];
        let fit = fit_gmm(p.view(), 1, &GmmOptions::default(), &mut restart_rng(0, 0)).unwrap();
        assert!(fit.responsibilities.iter().all(|&r| (r - 1.0).abs() < 1e-15));
        let mean = p.mean_axis(Axis(0)).unwrap();
        for (a, b) in fit.means.row(0).iter().zip(mean.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let r = gmm_spherical(p.view(), 1, &MultiStartPolicy::new(2, 0)).unwrap();
        assert!(r.assignment.iter().all(|l| *l == Label::Cluster(1)));
    }

    #[test]
    fn duplicated_points_collapse_is_reported_or_shared() {
        let p = array![[1.0, 1.0], [1.0, 1.0], [1.0, 1.0], [1.0, 1.0]];
        assert!(matches!(
            gmm_spherical(p.view(), 2, &MultiStartPolicy::new(4, 0)),
            Err(ClusterError::DegenerateFit(_))
        ));
        // two distinct points each duplicated: components either split the pairs or collapse
        let q = array![[0.0], [0.0], [5.0], [5.0]];
        match gmm_spherical(q.view(), 2, &MultiStartPolicy::new(4, 0)) {
            Ok(r) => assert_eq!(r.assignment[0], r.assignment[1]),
            Err(e) => assert!(matches!(e, ClusterError::DegenerateFit(_))),
        }
    }

    #[test]
    fn log_likelihood_non_decreasing() {
        for seed in 0..20 {
            let (p, _) = two_blobs(100 + seed);
            let q = p.slice(ndarray::s![..150, ..]).to_owned();
            if let Ok(fit) = fit_gmm(q.view(), 3, &GmmOptions::default(), &mut restart_rng(seed, 0)) {
                for w in fit.trace.windows(2) {
                    assert!(w[1] >= w[0] - 1e-9, "seed {seed}: {} -> {}", w[0], w[1]);
                }
            }
        }
    }
}
