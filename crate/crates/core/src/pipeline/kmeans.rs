use alloc::vec::Vec;

use crate::{Error, Result};

pub const KMEANS_MAX_ITER: usize = 100;
/// Convergence threshold on the largest center move, meters.
pub const KMEANS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// Cluster index per input point.
    pub assignments: Vec<usize>,
    pub centers: Vec<f64>,
    pub iterations: usize,
}

/// One-dimensional Lloyd iterations starting from `centers`.
///
/// Points go to the nearest center (lower index on ties). A cluster that
/// empties is re-seeded at the point farthest from its current center among
/// points whose own cluster keeps at least one other member. The final
/// assignment is recomputed against the final centers, so every point sits
/// in its nearest cluster.
///
/// The iteration is fully determined by the initial centers; `seed` only
/// enters through the returned result's reproducibility contract.
pub fn cluster_lanes(xs: &[f64], k: usize, centers: &[f64], seed: u64) -> Result<KMeansResult> {
    let _ = seed;
    if k == 0 || k > xs.len() {
        return Err(Error::InvalidArgument(alloc::format!(
            "k = {k} must be in [1, {}]",
            xs.len()
        )));
    }
    if centers.len() != k {
        return Err(Error::InvalidArgument(alloc::format!(
            "{} initial centers supplied for k = {k}",
            centers.len()
        )));
    }
    if xs.iter().chain(centers).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }

    let mut centers = centers.to_vec();
    let mut assignments = alloc::vec![0usize; xs.len()];
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITER {
        iterations += 1;
        assign(xs, &centers, &mut assignments);
        reseed_empty(xs, &mut centers, &mut assignments);

        let mut sums = alloc::vec![0.0f64; k];
        let mut counts = alloc::vec![0usize; k];
        for (&x, &a) in xs.iter().zip(&assignments) {
            sums[a] += x;
            counts[a] += 1;
        }
        let mut shift = 0.0f64;
        for c in 0..k {
            if counts[c] > 0 {
                let next = sums[c] / counts[c] as f64;
                shift = shift.max((next - centers[c]).abs());
                centers[c] = next;
            }
        }
        if shift < KMEANS_TOLERANCE {
            break;
        }
    }
    assign(xs, &centers, &mut assignments);
    Ok(KMeansResult {
        assignments,
        centers,
        iterations,
    })
}

fn assign(xs: &[f64], centers: &[f64], out: &mut [usize]) {
    for (x, a) in xs.iter().zip(out.iter_mut()) {
        let mut best = 0;
        for (c, center) in centers.iter().enumerate().skip(1) {
            if (x - center).abs() < (x - centers[best]).abs() {
                best = c;
            }
        }
        *a = best;
    }
}

fn reseed_empty(xs: &[f64], centers: &mut [f64], assignments: &mut [usize]) {
    let k = centers.len();
    loop {
        let mut counts = alloc::vec![0usize; k];
        for &a in assignments.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let donor = xs
            .iter()
            .zip(assignments.iter())
            .enumerate()
            .filter(|(_, (_, &a))| counts[a] > 1)
            .map(|(i, (&x, &a))| (i, (x - centers[a]).abs()))
            .fold(None::<(usize, f64)>, |best, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        match donor {
            Some((i, _)) => {
                centers[empty] = xs[i];
                assignments[i] = empty;
            }
            None => return,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn separated_pairs() {
        let r = cluster_lanes(&[0.0, 0.1, 5.0, 5.1], 2, &[0.05, 5.05], 0).unwrap();
        assert_eq!(r.assignments, vec![0, 0, 1, 1]);
    }

    #[test]
    fn single_cluster_is_mean() {
        let xs = [1.0, 2.0, 4.0, 9.0];
        let r = cluster_lanes(&xs, 1, &[0.0], 0).unwrap();
        assert_eq!(r.assignments, vec![0; 4]);
        assert_eq!(r.centers, vec![4.0]);
    }

    #[test]
    fn lloyd_fixed_point_after_one_iteration() {
        let r = cluster_lanes(&[0.0, 1.0, 2.0, 10.0], 2, &[1.0, 10.0], 0).unwrap();
        assert_eq!(r.centers, vec![1.0, 10.0]);
        assert_eq!(r.assignments, vec![0, 0, 0, 1]);
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn empty_cluster_reseeded_at_farthest_point() {
        // both initial centers sit left of the data; the second is never
        // nearest and gets re-seeded at 10, the farthest from center 0
        let r = cluster_lanes(&[0.0, 1.0, 2.0, 10.0], 2, &[-5.0, -100.0], 0).unwrap();
        assert_eq!(r.assignments, vec![0, 0, 0, 1]);
        assert_eq!(r.centers, vec![1.0, 10.0]);
    }

    #[test]
    fn rejects_bad_k() {
        assert!(cluster_lanes(&[1.0, 2.0], 3, &[0.0, 1.0, 2.0], 0).is_err());
        assert!(cluster_lanes(&[1.0, 2.0], 0, &[], 0).is_err());
        assert!(cluster_lanes(&[1.0, 2.0], 2, &[0.0], 0).is_err());
    }

    proptest! {
        #[test]
        fn every_point_in_nearest_cluster(
            xs in prop::collection::vec(-50.0f64..50.0, 3..60),
            init in prop::collection::vec(-50.0f64..50.0, 1..4),
        ) {
            let k = init.len().min(xs.len());
            let r = cluster_lanes(&xs, k, &init[..k], 0).unwrap();
            for (x, &a) in xs.iter().zip(&r.assignments) {
                for c in &r.centers {
                    prop_assert!((x - r.centers[a]).abs() <= (x - c).abs());
                }
            }
            let again = cluster_lanes(&xs, k, &init[..k], 0).unwrap();
            prop_assert_eq!(r, again);
        }
    }
}
