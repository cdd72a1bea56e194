//! k-means, trimmed k-means and spherical k-means.
//!
//! Plain and trimmed k-means share one concentration loop: assign each point
//! to its nearest center, drop the `h` points farthest from their center, and
//! move centers to the mean of what remains. With `h = 0` this is Lloyd's
//! algorithm, so trimmed k-means at `alpha = 0` reproduces k-means exactly.
//! Without trimming, Lloyd's fixed point is then polished by single-point
//! transfers, which escape the fixed points Lloyd cannot leave.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;

use super::{best_of, check_points, ClusterError, ClusterResult, Label, Method, MultiStartPolicy, Score};

pub const MAX_ITER: usize = 300;

/// State after running the concentration loop from one set of centers.
#[derive(Debug, Clone, PartialEq)]
pub struct LloydRun {
    /// 0-based cluster per point, `None` when trimmed.
    pub assignment: Vec<Option<usize>>,
    pub centers: Array2<f64>,
    pub objective: f64,
    /// Objective after each assignment step.
    pub history: Vec<f64>,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: ArrayView1<'_, f64>, centers: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.outer_iter().enumerate() {
        let d = sq_dist(point, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Concentration steps from `centers`, trimming `n_trim` points each step.
pub fn concentrate(points: ArrayView2<'_, f64>, mut centers: Array2<f64>, n_trim: usize, max_iter: usize) -> LloydRun {
    let n = points.nrows();
    let k = centers.nrows();
    let mut history = Vec::new();
    let mut previous: Option<Vec<Option<usize>>> = None;
    let mut assignment = vec![None; n];

    for _ in 0..max_iter.max(1) {
        let nearest_all: Vec<(usize, f64)> = points.outer_iter().map(|p| nearest(p, &centers)).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| nearest_all[j].1.total_cmp(&nearest_all[i].1).then(i.cmp(&j)));
        let mut trimmed = vec![false; n];
        for &i in order.iter().take(n_trim) {
            trimmed[i] = true;
        }
        assignment = (0..n).map(|i| (!trimmed[i]).then_some(nearest_all[i].0)).collect();
        let objective: f64 = (0..n).filter(|&i| !trimmed[i]).map(|i| nearest_all[i].1).sum();
        history.push(objective);

        if previous.as_ref() == Some(&assignment) {
            break;
        }

        let (sums, counts) = accumulate(points, &assignment, k);
        let mut empty: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
        for c in 0..k {
            if counts[c] > 0 {
                centers.row_mut(c).assign(&(&sums.row(c) / counts[c] as f64));
            }
        }
        if !empty.is_empty() {
            repair_empty(points, &mut assignment, &mut centers, &mut empty, &counts);
        }
        previous = Some(assignment.clone());
    }

    let objective = *history.last().unwrap_or(&0.0);
    LloydRun {
        assignment,
        centers,
        objective,
        history,
    }
}

fn accumulate(points: ArrayView2<'_, f64>, assignment: &[Option<usize>], k: usize) -> (Array2<f64>, Vec<usize>) {
    let mut sums = Array2::<f64>::zeros((k, points.ncols()));
    let mut counts = vec![0usize; k];
    for (i, a) in assignment.iter().enumerate() {
        if let Some(c) = a {
            let mut row = sums.row_mut(*c);
            row += &points.row(i);
            counts[*c] += 1;
        }
    }
    (sums, counts)
}

/// Moves the retained point farthest from its (updated) center into each empty
/// cluster, taking points only from clusters with more than one member.
fn repair_empty(
    points: ArrayView2<'_, f64>,
    assignment: &mut [Option<usize>],
    centers: &mut Array2<f64>,
    empty: &mut Vec<usize>,
    counts: &[usize],
) {
    let mut counts = counts.to_vec();
    for c in empty.drain(..) {
        let donor = (0..points.nrows())
            .filter_map(|i| assignment[i].map(|a| (i, a)))
            .filter(|&(_, a)| counts[a] > 1)
            .map(|(i, a)| (i, a, sq_dist(points.row(i), centers.row(a))))
            .fold(None::<(usize, usize, f64)>, |best, cand| match best {
                Some(b) if b.2 >= cand.2 => Some(b),
                _ => Some(cand),
            });
        if let Some((i, a, _)) = donor {
            counts[a] -= 1;
            counts[c] += 1;
            assignment[i] = Some(c);
            centers.row_mut(c).assign(&points.row(i));
        }
    }
}

fn initial_centers(points: ArrayView2<'_, f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let idx = sample(rng, points.nrows(), k).into_vec();
    points.select(Axis(0), &idx)
}

fn to_result(method: Method, k: usize, seed: u64, run: LloydRun) -> ClusterResult {
    ClusterResult {
        method,
        k,
        seed,
        objective: run.objective,
        log_likelihood: None,
        assignment: run
            .assignment
            .iter()
            .map(|a| a.map_or(Label::Trimmed, Label::from_index))
            .collect(),
        soft: None,
    }
}

/// Multi-start Lloyd k-means; the restart with the smallest within-cluster sum
/// of squares wins.
pub fn kmeans(points: ArrayView2<'_, f64>, k: usize, policy: &MultiStartPolicy) -> Result<ClusterResult, ClusterError> {
    check_points(points, k)?;
    let run = best_run(points, k, 0, policy)?;
    Ok(to_result(Method::Kmeans, k, policy.seed, run))
}

/// Hartigan transfers: move a point to another cluster whenever that lowers
/// the within-cluster sum of squares, with means updated after every move.
/// Stops when no single move helps. Every point must be assigned.
pub fn transfer_refine(points: ArrayView2<'_, f64>, run: &mut LloydRun, max_sweeps: usize) {
    let k = run.centers.nrows();
    let (sums, mut counts) = accumulate(points, &run.assignment, k);
    let mut centers = run.centers.clone();
    for c in 0..k {
        if counts[c] > 0 {
            centers.row_mut(c).assign(&(&sums.row(c) / counts[c] as f64));
        }
    }
    let scale = run.objective.abs().max(f64::MIN_POSITIVE);
    let mut moved_any = false;
    for _ in 0..max_sweeps {
        let mut moved = false;
        for i in 0..points.nrows() {
            let Some(a) = run.assignment[i] else { continue };
            if counts[a] < 2 {
                continue;
            }
            let x = points.row(i);
            let na = counts[a] as f64;
            let remove = na / (na - 1.0) * sq_dist(x, centers.row(a));
            let mut best = (a, remove);
            for b in (0..k).filter(|&b| b != a) {
                let nb = counts[b] as f64;
                let add = nb / (nb + 1.0) * sq_dist(x, centers.row(b));
                if add < best.1 {
                    best = (b, add);
                }
            }
            let (b, add) = best;
            if b == a || remove - add <= 1e-12 * scale {
                continue;
            }
            let nb = counts[b] as f64;
            let ca = (&centers.row(a) * na - &x) / (na - 1.0);
            let cb = (&centers.row(b) * nb + &x) / (nb + 1.0);
            centers.row_mut(a).assign(&ca);
            centers.row_mut(b).assign(&cb);
            counts[a] -= 1;
            counts[b] += 1;
            run.assignment[i] = Some(b);
            moved = true;
        }
        if !moved {
            break;
        }
        moved_any = true;
    }
    if moved_any {
        let objective = (0..points.nrows())
            .filter_map(|i| run.assignment[i].map(|c| sq_dist(points.row(i), centers.row(c))))
            .sum();
        run.centers = centers;
        run.objective = objective;
        run.history.push(objective);
    }
}

fn best_run(points: ArrayView2<'_, f64>, k: usize, n_trim: usize, policy: &MultiStartPolicy) -> Result<LloydRun, ClusterError> {
    best_of(policy, |_, rng| {
        let centers = initial_centers(points, k, rng);
        let mut run = concentrate(points, centers, n_trim, MAX_ITER);
        if n_trim == 0 {
            transfer_refine(points, &mut run, MAX_ITER);
        }
        let objective = run.objective;
        Ok((run, Score { objective, bic: None }))
    })
}

/// Trimmed k-means: a fraction `alpha` of the points (`floor(alpha * n)`)
/// farthest from their nearest center is left unassigned.
pub fn trimmed_kmeans(
    points: ArrayView2<'_, f64>,
    k: usize,
    alpha: f64,
    policy: &MultiStartPolicy,
) -> Result<ClusterResult, ClusterError> {
    check_points(points, k)?;
    let n = points.nrows();
    if !(0.0..1.0).contains(&alpha) {
        return Err(ClusterError::Parameter(format!("alpha = {alpha} outside [0, 1)")));
    }
    if (alpha * n as f64).ceil() as usize > n - k {
        return Err(ClusterError::Parameter(format!(
            "alpha = {alpha} trims too many of {n} points for k = {k}"
        )));
    }
    let n_trim = (alpha * n as f64).floor() as usize;
    let run = best_run(points, k, n_trim, policy)?;
    Ok(to_result(Method::TrimmedKmeans, k, policy.seed, run))
}

/// Spherical k-means result plus the per-iteration objective.
#[derive(Debug, Clone)]
pub struct SphericalRun {
    pub assignment: Vec<usize>,
    pub directions: Array2<f64>,
    pub objective: f64,
    pub history: Vec<f64>,
}

/// Rows scaled to unit length; zero rows are rejected.
pub fn normalize_rows(points: ArrayView2<'_, f64>) -> Result<Array2<f64>, ClusterError> {
    let mut out = points.to_owned();
    for (i, mut row) in out.outer_iter_mut().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 {
            return Err(ClusterError::DegeneratePoint(i));
        }
        row /= norm;
    }
    Ok(out)
}

/// Spherical k-means iterations on unit rows from the given unit directions.
pub fn spherical_iterate(unit: ArrayView2<'_, f64>, mut directions: Array2<f64>, max_iter: usize) -> SphericalRun {
    let n = unit.nrows();
    let k = directions.nrows();
    let mut history = Vec::new();
    let mut previous: Option<Vec<usize>> = None;
    let mut assignment = vec![0; n];
    for _ in 0..max_iter.max(1) {
        let best: Vec<(usize, f64)> = unit
            .outer_iter()
            .map(|p| {
                let mut b = (0, f64::NEG_INFINITY);
                for (c, dir) in directions.outer_iter().enumerate() {
                    let s = p.dot(&dir);
                    if s > b.1 {
                        b = (c, s);
                    }
                }
                b
            })
            .collect();
        assignment = best.iter().map(|b| b.0).collect();
        history.push(best.iter().map(|b| 1.0 - b.1).sum());
        if previous.as_ref() == Some(&assignment) {
            break;
        }
        let mut sums = Array2::<f64>::zeros(directions.dim());
        let mut counts = vec![0usize; k];
        for (i, &c) in assignment.iter().enumerate() {
            let mut row = sums.row_mut(c);
            row += &unit.row(i);
            counts[c] += 1;
        }
        for c in 0..k {
            let norm = sums.row(c).dot(&sums.row(c)).sqrt();
            if counts[c] > 0 && norm > 0.0 {
                directions.row_mut(c).assign(&(&sums.row(c) / norm));
            } else {
                // reseed with the point least aligned to its current direction
                let far = (0..n)
                    .filter(|&i| counts[assignment[i]] > 1)
                    .min_by(|&i, &j| best[i].1.total_cmp(&best[j].1).then(i.cmp(&j)));
                if let Some(i) = far {
                    counts[assignment[i]] -= 1;
                    counts[c] += 1;
                    assignment[i] = c;
                    directions.row_mut(c).assign(&unit.row(i));
                }
            }
        }
        previous = Some(assignment.clone());
    }
    let objective = *history.last().unwrap_or(&0.0);
    SphericalRun {
        assignment,
        directions,
        objective,
        history,
    }
}

/// k-means on the unit sphere under cosine distance `1 - cos`.
pub fn spherical_kmeans(points: ArrayView2<'_, f64>, k: usize, policy: &MultiStartPolicy) -> Result<ClusterResult, ClusterError> {
    check_points(points, k)?;
    let unit = normalize_rows(points)?;
    let run = best_of(policy, |_, rng| {
        let dirs = initial_centers(unit.view(), k, rng);
        let run = spherical_iterate(unit.view(), dirs, MAX_ITER);
        let objective = run.objective;
        Ok((run, Score { objective, bic: None }))
    })?;
    Ok(ClusterResult {
        method: Method::Skmeans,
        k,
        seed: policy.seed,
        objective: run.objective.max(0.0),
        log_likelihood: None,
        assignment: run.assignment.iter().map(|&c| Label::from_index(c)).collect(),
        soft: None,
    })
}

/// Within-cluster sum of squares of a hard partition (0-based labels).
pub fn within_ss(points: ArrayView2<'_, f64>, labels: &[usize], k: usize) -> f64 {
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        let mean: Array1<f64> = points.select(Axis(0), &members).mean_axis(Axis(0)).unwrap();
        total += members.iter().map(|&i| sq_dist(points.row(i), mean.view())).sum::<f64>();
    }
    total
}
