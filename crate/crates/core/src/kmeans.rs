//! Lloyd k-means with k-means++ seeding and best-of-restarts selection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assignment::ClusterAssignment;
use crate::error::{Error, Result};

pub const DEFAULT_RESTARTS: usize = 10;
pub const DEFAULT_MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignment: ClusterAssignment,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squared distances of the returned assignment.
    pub wcss: f64,
    pub iterations: usize,
    pub converged: bool,
    /// WCSS after every centroid update of the winning restart.
    pub wcss_trace: Vec<f64>,
    /// Index of the restart that produced the result.
    pub restart: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn validate(points: &[Vec<f64>], k: usize) -> Result<usize> {
    if k == 0 || points.len() < k {
        return Err(Error::InvalidConfig(format!(
            "k-means needs 1 <= k <= n, got k = {k}, n = {}",
            points.len()
        )));
    }
    let d = points[0].len();
    if let Some(bad) = points.iter().find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: bad.len(),
        });
    }
    Ok(d)
}

/// Draws an index with probability proportional to `weights`, or uniformly
/// among `fallback` when every weight is zero.
pub(crate) fn weighted_draw<R: Rng + ?Sized>(
    weights: &[f64],
    fallback: &[usize],
    rng: &mut R,
) -> usize {
    let total: f64 = weights.iter().sum();
    if total > 0.0 && total.is_finite() {
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                acc += w;
                last_positive = i;
                if target < acc {
                    return i;
                }
            }
        }
        last_positive
    } else {
        fallback[rng.random_range(0..fallback.len())]
    }
}

/// k-means++: the first center uniform, each further center drawn with
/// probability proportional to the squared distance to its nearest chosen
/// center. Returns point indices, all distinct.
pub fn kmeans_plus_plus<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Result<Vec<usize>> {
    validate(points, k)?;
    let n = points.len();
    let mut chosen = Vec::with_capacity(k);
    let mut is_chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen.push(first);
    is_chosen[first] = true;
    let mut nearest: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while chosen.len() < k {
        let weights: Vec<f64> = nearest
            .iter()
            .zip(&is_chosen)
            .map(|(&d, &c)| if c { 0.0 } else { d })
            .collect();
        let unchosen: Vec<usize> = (0..n).filter(|&i| !is_chosen[i]).collect();
        let next = weighted_draw(&weights, &unchosen, rng);
        chosen.push(next);
        is_chosen[next] = true;
        for (d, p) in nearest.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &points[next]));
        }
    }
    Ok(chosen)
}

fn nearest_center(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn centroids(points: &[Vec<f64>], labels: &[usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        for v in s.iter_mut() {
            *v /= c as f64;
        }
    }
    sums
}

fn wcss(points: &[Vec<f64>], labels: &[usize], centers: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, &centers[l]))
        .sum()
}

/// Fills empty clusters by moving in the point farthest from its current
/// centroid, taken only from clusters that keep at least one member.
fn repair_empty(points: &[Vec<f64>], labels: &mut [usize], centers: &[Vec<f64>], k: usize) {
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            if sizes[labels[i]] < 2 {
                continue;
            }
            let d = sq_dist(p, &centers[labels[i]]);
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        let (i, _) = best.expect("n >= k leaves a cluster with two members");
        sizes[labels[i]] -= 1;
        labels[i] = empty;
        sizes[empty] = 1;
    }
}

fn lloyd<R: Rng + ?Sized>(
    points: &[Vec<f64>],
    k: usize,
    dim: usize,
    max_iter: usize,
    rng: &mut R,
) -> Result<KMeansResult> {
    let seeds = kmeans_plus_plus(points, k, rng)?;
    let mut centers: Vec<Vec<f64>> = seeds.iter().map(|&i| points[i].clone()).collect();
    let mut labels = vec![usize::MAX; points.len()];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        let next: Vec<usize> = points.iter().map(|p| nearest_center(p, &centers).0).collect();
        if next == labels {
            converged = true;
            break;
        }
        labels = next;
        repair_empty(points, &mut labels, &centers, k);
        centers = centroids(points, &labels, k, dim);
        trace.push(wcss(points, &labels, &centers));
        iterations += 1;
    }
    if !converged {
        // One more assignment pass tells whether the cap hit a fixed point.
        converged = points
            .iter()
            .zip(&labels)
            .all(|(p, &l)| nearest_center(p, &centers).0 == l);
    }
    Ok(KMeansResult {
        wcss: wcss(points, &labels, &centers),
        assignment: ClusterAssignment::new(labels, k)?,
        centroids: centers,
        iterations,
        converged,
        wcss_trace: trace,
        restart: 0,
    })
}

/// Best of `restarts` Lloyd runs by WCSS (ties → lowest restart index).
/// Restart `r` uses its own generator seeded with `base + r`, where `base`
/// is drawn once from `rng`.
pub fn kmeans<R: Rng + ?Sized>(
    points: &[Vec<f64>],
    k: usize,
    rng: &mut R,
    restarts: usize,
    max_iter: usize,
) -> Result<KMeansResult> {
    let dim = validate(points, k)?;
    let base: u64 = rng.random();
    let mut best: Option<KMeansResult> = None;
    for r in 0..restarts.max(1) {
        let mut restart_rng = ChaCha8Rng::seed_from_u64(base.wrapping_add(r as u64));
        let run = lloyd(points, k, dim, max_iter, &mut restart_rng)?;
        if best.as_ref().is_none_or(|b| run.wcss < b.wcss) {
            best = Some(KMeansResult { restart: r, ..run });
        }
    }
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::nmi;

    fn pts(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn separates_two_pairs() {
        let r = kmeans(&pts(&[0.0, 0.1, 10.0, 10.1]), 2, &mut rng(1), 10, 300).unwrap();
        let l = r.assignment.labels();
        assert_eq!(l[0], l[1]);
        assert_eq!(l[2], l[3]);
        assert_ne!(l[0], l[2]);
        assert!(r.converged);
    }

    #[test]
    fn k_equals_n_gives_singletons() {
        let p = pts(&[3.0, -1.0, 7.5, 2.0]);
        let r = kmeans(&p, 4, &mut rng(2), 10, 300).unwrap();
        assert_eq!(r.wcss, 0.0);
        let mut l = r.assignment.labels().to_vec();
        l.sort();
        assert_eq!(l, vec![0, 1, 2, 3]);
    }

    #[test]
    fn matches_exhaustive_contiguous_split() {
        let xs: Vec<f64> = (0..=5).map(f64::from).chain((100..=105).map(f64::from)).collect();
        // Oracle: optimal 1-D 2-clustering is a contiguous split of the sorted points.
        let cost = |s: &[f64]| {
            let m = s.iter().sum::<f64>() / s.len() as f64;
            s.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
        };
        let oracle = (1..xs.len())
            .map(|cut| cost(&xs[..cut]) + cost(&xs[cut..]))
            .fold(f64::INFINITY, f64::min);
        let r = kmeans(&pts(&xs), 2, &mut rng(3), 10, 300).unwrap();
        assert!((r.wcss - oracle).abs() < 1e-9);
        let l = r.assignment.labels();
        assert!(l[..6].iter().all(|&x| x == l[0]));
        assert!(l[6..].iter().all(|&x| x == l[6]));
        assert_ne!(l[0], l[6]);
    }

    #[test]
    fn wcss_trace_non_increasing() {
        let mut r = rng(4);
        for trial in 0..50 {
            let p: Vec<Vec<f64>> = (0..60)
                .map(|_| vec![r.random_range(-5.0..5.0), r.random_range(-5.0..5.0)])
                .collect();
            let res = kmeans(&p, 2 + trial % 5, &mut r, 3, 300).unwrap();
            for w in res.wcss_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "trial {trial}: {:?}", res.wcss_trace);
            }
        }
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let p = pts(&[1.0, 1.0, 1.0, 1.0, 1.0]);
        let r = kmeans(&p, 3, &mut rng(5), 2, 50).unwrap();
        assert!(r.assignment.sizes().iter().all(|&s| s > 0));
    }

    #[test]
    fn plus_plus_picks_distinct_indices() {
        let mut r = rng(6);
        let p: Vec<Vec<f64>> = (0..30).map(|i| vec![f64::from(i % 7)]).collect();
        for _ in 0..100 {
            let mut s = kmeans_plus_plus(&p, 7, &mut r).unwrap();
            s.sort();
            s.dedup();
            assert_eq!(s.len(), 7);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let p: Vec<Vec<f64>> = (0..40).map(|i| vec![f64::from(i).sin(), f64::from(i).cos()]).collect();
        let a = kmeans(&p, 4, &mut rng(9), 10, 300).unwrap();
        let b = kmeans(&p, 4, &mut rng(9), 10, 300).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_k() {
        assert!(kmeans(&pts(&[1.0]), 2, &mut rng(0), 1, 10).is_err());
        assert!(kmeans(&pts(&[1.0]), 0, &mut rng(0), 1, 10).is_err());
    }

    #[test]
    fn three_blobs() {
        let mut r = rng(10);
        let mut p = Vec::new();
        let mut truth = Vec::new();
        for (c, center) in [(0.0, 0.0), (8.0, 0.0), (0.0, 8.0)].iter().enumerate() {
            for _ in 0..20 {
                p.push(vec![center.0 + r.random_range(-1.0..1.0), center.1 + r.random_range(-1.0..1.0)]);
                truth.push(c);
            }
        }
        let res = kmeans(&p, 3, &mut r, 10, 300).unwrap();
        let truth = ClusterAssignment::new(truth, 3).unwrap();
        assert!((nmi(&res.assignment, &truth).unwrap() - 1.0).abs() < 1e-12);
    }
}
