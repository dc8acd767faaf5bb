//! k-means, full-covariance Gaussian mixtures and silhouette scores.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::StatsError;

const KMEANS_MAX_ITER: usize = 300;
const KMEANS_TOL: f64 = 1e-6;
const GMM_MAX_ITER: usize = 200;
const GMM_TOL: f64 = 1e-6;
/// Lower bound on covariance diagonals.
const COV_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterMethod {
    Kmeans,
    Gmm,
}

impl std::str::FromStr for ClusterMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "kmeans" => Ok(Self::Kmeans),
            "gmm" => Ok(Self::Gmm),
            _ => Err(format!("unknown clustering method `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopLabel {
    pub label: String,
    /// Share of the cluster carrying `label`, in percent.
    pub percentage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub method: ClusterMethod,
    pub k: usize,
    pub seed: u64,
    pub iterations: usize,
    pub assignments: Vec<usize>,
    pub silhouette: f64,
    pub cluster_sizes: Vec<usize>,
    /// Per-cluster dominant label; `None` when no labels were given or the cluster is empty.
    pub per_cluster_top_label: Vec<Option<TopLabel>>,
    /// WCSS per Lloyd iteration (k-means) or log-likelihood per EM iteration (GMM).
    pub objective_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

fn check_points<P: AsRef<[f64]>>(points: &[P], k: usize) -> Result<usize, StatsError> {
    if k < 2 {
        return Err(StatsError::BadParams(format!("k must be at least 2, got {k}")));
    }
    if points.len() < k {
        return Err(StatsError::TooFewPoints {
            points: points.len(),
            k,
        });
    }
    let d = points[0].as_ref().len();
    if points.iter().any(|p| p.as_ref().len() != d) {
        return Err(StatsError::BadParams("points have mixed dimensions".into()));
    }
    Ok(d)
}

#[derive(Debug, Clone)]
pub struct KMeansRun {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squares after each centroid update.
    pub wcss_history: Vec<f64>,
    pub iterations: usize,
}

fn kmeans_pp<P: AsRef<[f64]>>(points: &[P], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].as_ref().to_vec()];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| sq_dist(p.as_ref(), &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    idx = i;
                    break;
                }
                r -= w;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick].as_ref().to_vec();
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p.as_ref(), &c));
        }
        centroids.push(c);
    }
    centroids
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(p, centroid);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations. Empty clusters are
/// re-seeded with the point farthest from its centroid.
pub fn kmeans<P: AsRef<[f64]>>(points: &[P], k: usize, seed: u64) -> Result<KMeansRun, StatsError> {
    let d = check_points(points, k)?;
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp(points, k, &mut rng);
    let mut assignments = vec![0usize; n];
    let mut history = Vec::new();
    let mut iterations = 0;

    while iterations < KMEANS_MAX_ITER {
        iterations += 1;
        for (i, p) in points.iter().enumerate() {
            assignments[i] = nearest(p.as_ref(), &centroids);
        }
        let mut sizes = vec![0usize; k];
        for &a in &assignments {
            sizes[a] += 1;
        }
        while let Some(empty) = sizes.iter().position(|&s| s == 0) {
            let far = (0..n)
                .filter(|&i| sizes[assignments[i]] > 1)
                .max_by(|&a, &b| {
                    let da = sq_dist(points[a].as_ref(), &centroids[assignments[a]]);
                    let db = sq_dist(points[b].as_ref(), &centroids[assignments[b]]);
                    da.total_cmp(&db).then(b.cmp(&a))
                })
                .ok_or(StatsError::DegenerateCluster(empty))?;
            sizes[assignments[far]] -= 1;
            assignments[far] = empty;
            sizes[empty] = 1;
        }

        let mut next = vec![vec![0.0; d]; k];
        for (i, p) in points.iter().enumerate() {
            for (acc, x) in next[assignments[i]].iter_mut().zip(p.as_ref()) {
                *acc += x;
            }
        }
        for (c, centroid) in next.iter_mut().enumerate() {
            centroid.iter_mut().for_each(|x| *x /= sizes[c] as f64);
        }
        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| dist(a, b))
            .fold(0.0, f64::max);
        centroids = next;
        history.push(
            points
                .iter()
                .zip(&assignments)
                .map(|(p, &a)| sq_dist(p.as_ref(), &centroids[a]))
                .sum(),
        );
        if shift < KMEANS_TOL {
            break;
        }
    }
    Ok(KMeansRun {
        assignments,
        centroids,
        wcss_history: history,
        iterations,
    })
}

#[derive(Debug, Clone)]
pub struct GmmRun {
    pub assignments: Vec<usize>,
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
    /// Log-likelihood of the data under the parameters entering each E-step.
    pub log_likelihood_history: Vec<f64>,
    pub iterations: usize,
    /// Size of the log-likelihood drop that ended the run, if one did.
    pub rejected_drop: Option<f64>,
}

struct Component {
    log_weight: f64,
    mean: DVector<f64>,
    chol_l: DMatrix<f64>,
    log_det: f64,
}

fn floor_and_factor(mut cov: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, f64) {
    let d = cov.nrows();
    for i in 0..d {
        if cov[(i, i)] < COV_FLOOR {
            cov[(i, i)] = COV_FLOOR;
        }
    }
    // flooring the diagonal alone may not restore definiteness; add jitter until it does
    let mut jitter = 0.0;
    loop {
        let mut m = cov.clone();
        for i in 0..d {
            m[(i, i)] += jitter;
        }
        if let Some(ch) = m.clone().cholesky() {
            let l = ch.l();
            let log_det = 2.0 * l.diagonal().iter().map(|x| x.ln()).sum::<f64>();
            return (m, l, log_det);
        }
        jitter = if jitter == 0.0 { COV_FLOOR } else { jitter * 10.0 };
    }
}

/// Components, covariances and responsibilities of an accepted EM step.
type EmState = (Vec<Component>, Vec<DMatrix<f64>>, DMatrix<f64>);

fn log_pdf(x: &DVector<f64>, c: &Component) -> f64 {
    let d = x.len() as f64;
    let diff = x - &c.mean;
    let z = c
        .chol_l
        .solve_lower_triangular(&diff)
        .expect("cholesky factor is non-singular");
    -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + c.log_det + z.norm_squared())
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// EM for a full-covariance Gaussian mixture, initialized from k-means.
pub fn gmm<P: AsRef<[f64]>>(points: &[P], k: usize, seed: u64) -> Result<GmmRun, StatsError> {
    let d = check_points(points, k)?;
    let n = points.len();
    let xs: Vec<DVector<f64>> = points
        .iter()
        .map(|p| DVector::from_column_slice(p.as_ref()))
        .collect();
    let init = kmeans(points, k, seed)?;

    // responsibilities from the hard k-means partition
    let mut resp = DMatrix::<f64>::zeros(n, k);
    for (i, &a) in init.assignments.iter().enumerate() {
        resp[(i, a)] = 1.0;
    }

    let mut history: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let mut accepted: Option<EmState> = None;
    let mut rejected_drop = None;
    loop {
        // M-step
        let mut comps = Vec::with_capacity(k);
        let mut covs = Vec::with_capacity(k);
        for c in 0..k {
            let nk: f64 = resp.column(c).sum();
            if nk < 1e-10 {
                return Err(StatsError::DegenerateCluster(c));
            }
            let mut mean = DVector::<f64>::zeros(d);
            for (i, x) in xs.iter().enumerate() {
                mean.axpy(resp[(i, c)], x, 1.0);
            }
            mean /= nk;
            let mut cov = DMatrix::<f64>::zeros(d, d);
            for (i, x) in xs.iter().enumerate() {
                let diff = x - &mean;
                cov.ger(resp[(i, c)], &diff, &diff, 1.0);
            }
            cov /= nk;
            let (cov, chol_l, log_det) = floor_and_factor(cov);
            covs.push(cov);
            comps.push(Component {
                log_weight: (nk / n as f64).ln(),
                mean,
                chol_l,
                log_det,
            });
        }

        // E-step
        let mut ll = 0.0;
        let mut next_resp = DMatrix::<f64>::zeros(n, k);
        let mut row = vec![0.0; k];
        for (i, x) in xs.iter().enumerate() {
            for (c, comp) in comps.iter().enumerate() {
                row[c] = comp.log_weight + log_pdf(x, comp);
            }
            let lse = log_sum_exp(&row);
            ll += lse;
            for c in 0..k {
                next_resp[(i, c)] = (row[c] - lse).exp();
            }
        }
        iterations += 1;
        let prev = history.last().copied();
        // at the fixed point a step can lose a few ulps; keep the previous
        // parameters instead of recording a decrease
        if let Some(p) = prev.filter(|&p| ll < p) {
            rejected_drop = Some(p - ll);
            break;
        }
        history.push(ll);
        resp = next_resp.clone();
        accepted = Some((comps, covs, next_resp));
        let converged = prev.is_some_and(|p| (ll - p).abs() < GMM_TOL);
        if converged || iterations >= GMM_MAX_ITER {
            break;
        }
    }
    let (comps, covs, resp) = accepted.expect("first EM step is always accepted");
    let assignments = (0..n)
        .map(|i| {
            (0..k)
                .max_by(|&a, &b| resp[(i, a)].total_cmp(&resp[(i, b)]).then(b.cmp(&a)))
                .unwrap()
        })
        .collect();
    Ok(GmmRun {
        assignments,
        weights: comps.iter().map(|c| c.log_weight.exp()).collect(),
        means: comps.into_iter().map(|c| c.mean).collect(),
        covariances: covs,
        log_likelihood_history: history,
        iterations,
        rejected_drop,
    })
}

/// Mean silhouette coefficient. Points in singleton clusters contribute 0,
/// as do points with `a = b = 0`.
pub fn silhouette<P: AsRef<[f64]>>(points: &[P], assignments: &[usize]) -> Result<f64, StatsError> {
    if points.len() != assignments.len() || points.is_empty() {
        return Err(StatsError::BadParams(
            "points and assignments differ in length".into(),
        ));
    }
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(StatsError::SingleCluster);
    }
    let n = points.len();
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        let own = assignments[i];
        if sizes[own] == 1 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if j != i {
                sums[assignments[j]] += dist(points[i].as_ref(), points[j].as_ref());
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

/// Cluster points and summarize the partition. `labels`, when given, name
/// each point's class for the per-cluster composition.
pub fn cluster<P: AsRef<[f64]>>(
    points: &[P],
    k: usize,
    method: ClusterMethod,
    seed: u64,
    labels: Option<&[String]>,
) -> Result<ClusterReport, StatsError> {
    if let Some(l) = labels {
        if l.len() != points.len() {
            return Err(StatsError::BadParams("one label per point is required".into()));
        }
    }
    let (assignments, history, iterations) = match method {
        ClusterMethod::Kmeans => {
            let r = kmeans(points, k, seed)?;
            (r.assignments, r.wcss_history, r.iterations)
        }
        ClusterMethod::Gmm => {
            let r = gmm(points, k, seed)?;
            (r.assignments, r.log_likelihood_history, r.iterations)
        }
    };
    let mut sizes = vec![0usize; k];
    for &a in &assignments {
        sizes[a] += 1;
    }
    let silhouette = silhouette(points, &assignments)?;
    let per_cluster_top_label = (0..k)
        .map(|c| {
            let labels = labels?;
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for (i, &a) in assignments.iter().enumerate() {
                if a == c {
                    *counts.entry(labels[i].as_str()).or_default() += 1;
                }
            }
            // ties resolve to the alphabetically first label
            let (label, count) = counts
                .into_iter()
                .fold(None, |best: Option<(&str, usize)>, (l, n)| match best {
                    Some((_, bn)) if bn >= n => best,
                    _ => Some((l, n)),
                })?;
            Some(TopLabel {
                label: label.to_string(),
                percentage: 100.0 * count as f64 / sizes[c] as f64,
            })
        })
        .collect();
    Ok(ClusterReport {
        method,
        k,
        seed,
        iterations,
        assignments,
        silhouette,
        cluster_sizes: sizes,
        per_cluster_top_label,
        objective_history: history,
    })
}
