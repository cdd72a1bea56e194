//! Latent semantic analysis: truncated SVD of a document-by-term matrix and
//! the two-dimensional document projection.
//!
//! The decomposition is a one-sided (Hestenes) Jacobi SVD run on whichever of
//! `A` and `Aᵀ` is taller. It is exact to working precision, which matters more
//! here than speed at a thousand rows.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vectorize::DocTermMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum LsaError {
    #[error("rank {rank} out of range 1..={max}")]
    Rank { rank: usize, max: usize },
    #[error("projection needs at least 2 factors, got {0}")]
    TooFewFactors(usize),
    #[error("{ids} document ids for {rows} rows")]
    Length { ids: usize, rows: usize },
    #[error("non-finite input")]
    NonFinite,
}

const MAX_SWEEPS: usize = 80;
const JACOBI_TOL: f64 = 1e-15;

/// Rank-`r` factors `A ≈ U diag(s) Vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub u: Array2<f64>,
    pub singular_values: Array1<f64>,
    pub v: Array2<f64>,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn reconstruct(&self) -> Array2<f64> {
        let us = &self.u * &self.singular_values.view().insert_axis(Axis(0));
        us.dot(&self.v.t())
    }

    /// Document coordinates `U Σ` over all retained factors.
    pub fn scaled_u(&self) -> Array2<f64> {
        &self.u * &self.singular_values.view().insert_axis(Axis(0))
    }
}

pub fn truncated_svd(mat: &DocTermMatrix, rank: usize) -> Result<SvdFactors, LsaError> {
    svd_truncated(mat.weights().view(), rank)
}

/// Truncated SVD of a dense matrix, with the sign of each factor pair fixed so
/// that the largest-magnitude entry of the `u` column is positive.
pub fn svd_truncated(a: ArrayView2<'_, f64>, rank: usize) -> Result<SvdFactors, LsaError> {
    let (n, m) = a.dim();
    let max = n.min(m);
    if rank == 0 || rank > max {
        return Err(LsaError::Rank { rank, max });
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(LsaError::NonFinite);
    }
    let full = if n >= m {
        let (u, s, v) = hestenes(a.to_owned());
        (u, s, v)
    } else {
        let (v, s, u) = hestenes(a.t().to_owned());
        (u, s, v)
    };
    let (mut u, s, mut v) = full;
    for c in 0..max {
        let col = u.column(c);
        let pivot = col
            .iter()
            .enumerate()
            .fold((0usize, 0.0f64), |(bi, bv), (i, x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) })
            .0;
        if u[[pivot, c]] < 0.0 {
            u.column_mut(c).mapv_inplace(|x| -x);
            v.column_mut(c).mapv_inplace(|x| -x);
        }
    }
    Ok(SvdFactors {
        u: u.slice(s![.., ..rank]).to_owned(),
        singular_values: s.slice(s![..rank]).to_owned(),
        v: v.slice(s![.., ..rank]).to_owned(),
    })
}

/// One-sided Jacobi on a tall `a` (rows ≥ cols). Returns thin `U` (rows×cols),
/// singular values sorted non-increasing and square orthogonal `V`.
fn hestenes(a: Array2<f64>) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    let (rows, m) = a.dim();
    // columns of A and V are kept as contiguous rows
    let mut w = a.reversed_axes().as_standard_layout().into_owned();
    let mut vt = Array2::<f64>::eye(m);
    // columns this small are round-off from a rank deficiency; rotating them
    // against each other never meets the relative test above
    let fro = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    let floor = (f64::EPSILON * rows.max(m) as f64 * fro).powi(2);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..m {
            for q in (p + 1)..m {
                let (alpha, beta, gamma) = {
                    let cp = w.row(p);
                    let cq = w.row(q);
                    (cp.dot(&cp), cq.dot(&cq), cp.dot(&cq))
                };
                if gamma == 0.0 || alpha <= floor || beta <= floor || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta == 0.0 {
                    1.0
                } else {
                    zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut w, p, q, c, s);
                rotate_rows(&mut vt, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = w.outer_iter().map(|c| c.dot(&c).sqrt()).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let mut u = Array2::<f64>::zeros((rows, m));
    let mut sv = Array1::<f64>::zeros(m);
    let mut vs = Array2::<f64>::zeros((m, m));
    let scale = norms.iter().cloned().fold(0.0, f64::max);
    let cutoff = scale * 1e-14 * (rows.max(m) as f64);
    let mut deficient = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        sv[dst] = norms[src];
        vs.column_mut(dst).assign(&vt.row(src));
        if norms[src] > cutoff && norms[src] > 0.0 {
            u.column_mut(dst).assign(&(&w.row(src) / norms[src]));
        } else {
            deficient.push(dst);
        }
    }
    complete_basis(&mut u, &deficient);
    (u, sv, vs)
}

fn rotate_rows(x: &mut Array2<f64>, p: usize, q: usize, c: f64, s: f64) {
    let (mut rp, mut rq) = x.multi_slice_mut((s![p, ..], s![q, ..]));
    ndarray::Zip::from(&mut rp).and(&mut rq).for_each(|xp, xq| {
        let a = *xp;
        let b = *xq;
        *xp = c * a - s * b;
        *xq = s * a + c * b;
    });
}

/// Replaces the listed columns with unit vectors orthogonal to every other
/// column (modified Gram-Schmidt against the standard basis).
fn complete_basis(u: &mut Array2<f64>, columns: &[usize]) {
    let rows = u.nrows();
    let mut filled: Vec<usize> = (0..u.ncols()).filter(|c| !columns.contains(c)).collect();
    let mut candidate = 0usize;
    for &c in columns {
        loop {
            assert!(candidate < rows, "cannot complete an orthonormal basis");
            let mut e = Array1::<f64>::zeros(rows);
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for &f in &filled {
                    let col = u.column(f);
                    let proj = col.dot(&e);
                    e.scaled_add(-proj, &col);
                }
            }
            let norm = e.dot(&e).sqrt();
            if norm > 1e-8 {
                u.column_mut(c).assign(&(e / norm));
                filled.push(c);
                break;
            }
        }
    }
}

/// Per-document `(V1, V2)` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection2D {
    pub doc_ids: Vec<String>,
    pub coords: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub doc_id: String,
    pub v1: f64,
    pub v2: f64,
}

impl Projection2D {
    pub fn points(&self) -> Vec<ProjectedPoint> {
        self.doc_ids
            .iter()
            .zip(self.coords.outer_iter())
            .map(|(id, c)| ProjectedPoint {
                doc_id: id.clone(),
                v1: c[0],
                v2: c[1],
            })
            .collect()
    }

    pub fn from_points(points: &[ProjectedPoint]) -> Self {
        let mut coords = Array2::zeros((points.len(), 2));
        for (i, p) in points.iter().enumerate() {
            coords[[i, 0]] = p.v1;
            coords[[i, 1]] = p.v2;
        }
        Self {
            doc_ids: points.iter().map(|p| p.doc_id.clone()).collect(),
            coords,
        }
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }
}

impl Serialize for Projection2D {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.points().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Projection2D {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let points = Vec::<ProjectedPoint>::deserialize(deserializer)?;
        Ok(Self::from_points(&points))
    }
}

/// First two columns of `U`, each scaled by its singular value.
pub fn project_2d(factors: &SvdFactors, doc_ids: &[String]) -> Result<Projection2D, LsaError> {
    if factors.rank() < 2 {
        return Err(LsaError::TooFewFactors(factors.rank()));
    }
    if doc_ids.len() != factors.u.nrows() {
        return Err(LsaError::Length {
            ids: doc_ids.len(),
            rows: factors.u.nrows(),
        });
    }
    let scaled = factors.scaled_u();
    Ok(Projection2D {
        doc_ids: doc_ids.to_vec(),
        coords: scaled.slice(s![.., ..2]).to_owned(),
    })
}
