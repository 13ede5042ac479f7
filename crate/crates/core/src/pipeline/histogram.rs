use alloc::vec::Vec;

use super::DetectionParams;
use crate::{Error, Result};

/// Width of the Gaussian smoothing kernel, in bins.
pub const HISTOGRAM_SIGMA_BINS: f64 = 1.5;

/// Fewest lateral positions a lane-count estimate accepts.
pub const MIN_POSITIONS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct LaneCountEstimate {
    pub k: usize,
    /// Peak positions in meters, ascending.
    pub centers: Vec<f64>,
    /// True when no peak cleared the prominence threshold and the median
    /// was used instead.
    pub fallback: bool,
}

/// Estimates the number of lanes from mean lateral positions.
///
/// A `bin_count`-bin histogram over `[min, max]` is smoothed with a Gaussian
/// kernel (zero outside the range) and its local maxima are kept when their
/// topographic prominence reaches `peak_prominence` times the smoothed
/// maximum.
pub fn estimate_lane_count(xs: &[f64], params: &DetectionParams) -> Result<LaneCountEstimate> {
    if xs.len() < MIN_POSITIONS {
        return Err(Error::InsufficientData(alloc::format!(
            "lane-count estimation needs {MIN_POSITIONS} positions, got {}",
            xs.len()
        )));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-9 {
        return Ok(LaneCountEstimate {
            k: 1,
            centers: alloc::vec![median(xs)],
            fallback: false,
        });
    }

    let bins = params.bin_count.max(1) as usize;
    let width = (hi - lo) / bins as f64;
    let mut hist = alloc::vec![0.0f64; bins];
    for &x in xs {
        let b = (((x - lo) / width) as usize).min(bins - 1);
        hist[b] += 1.0;
    }
    let smoothed = gaussian_smooth(&hist, HISTOGRAM_SIGMA_BINS);
    let top = smoothed.iter().copied().fold(0.0, f64::max);
    let threshold = params.peak_prominence * top;

    let centers: Vec<f64> = find_peaks(&smoothed)
        .into_iter()
        .filter(|p| p.prominence >= threshold)
        .map(|p| lo + (p.position + 0.5) * width)
        .collect();

    if centers.is_empty() {
        return Ok(LaneCountEstimate {
            k: 1,
            centers: alloc::vec![median(xs)],
            fallback: true,
        });
    }
    Ok(LaneCountEstimate {
        k: centers.len(),
        centers,
        fallback: false,
    })
}

fn median(xs: &[f64]) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Discrete Gaussian convolution truncated at four sigma, zero padded.
pub(crate) fn gaussian_smooth(hist: &[f64], sigma: f64) -> Vec<f64> {
    let radius = libm::ceil(4.0 * sigma) as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| libm::exp(-0.5 * (i as f64 / sigma) * (i as f64 / sigma)))
        .collect();
    let total: f64 = kernel.iter().sum();
    let n = hist.len() as isize;
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let j = i + k as isize - radius;
                if (0..n).contains(&j) {
                    acc += w * hist[j as usize];
                }
            }
            acc / total
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Peak {
    /// Bin index (plateau midpoint, possibly fractional).
    pub position: f64,
    pub height: f64,
    pub prominence: f64,
}

/// Local maxima of `h` with their prominences. The signal is treated as
/// zero beyond both ends, so edge bins can be peaks. Flat tops report their
/// midpoint.
pub(crate) fn find_peaks(h: &[f64]) -> Vec<Peak> {
    let n = h.len();
    let at = |i: isize| {
        if i < 0 || i >= n as isize {
            0.0
        } else {
            h[i as usize]
        }
    };
    let mut peaks = Vec::new();
    let mut i = 0usize;
    while i < n {
        // extent of the plateau starting at i
        let mut j = i;
        while j + 1 < n && h[j + 1] == h[i] {
            j += 1;
        }
        let left = at(i as isize - 1);
        let right = at(j as isize + 1);
        if h[i] > left && h[i] > right {
            let height = h[i];
            let mut left_min = height;
            let mut k = i as isize - 1;
            loop {
                let v = at(k);
                left_min = left_min.min(v);
                if k < 0 || v > height {
                    break;
                }
                k -= 1;
            }
            let mut right_min = height;
            let mut k = j as isize + 1;
            loop {
                let v = at(k);
                right_min = right_min.min(v);
                if k >= n as isize || v > height {
                    break;
                }
                k += 1;
            }
            peaks.push(Peak {
                position: 0.5 * (i + j) as f64,
                height,
                prominence: height - left_min.max(right_min),
            });
        }
        i = j + 1;
    }
    peaks
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn params(bins: u32, prominence: f64) -> DetectionParams {
        DetectionParams::new(5.0, 0.5, bins, prominence, 0).unwrap()
    }

    fn clusters(centers: &[f64], per: usize, sd: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sd).unwrap();
        let mut xs = Vec::new();
        for &c in centers {
            for _ in 0..per {
                xs.push(c + noise.sample(&mut rng));
            }
        }
        xs
    }

    #[test]
    fn two_clusters_two_peaks() {
        let xs = clusters(&[0.0, 3.7], 100, 0.1, 1);
        for prom in [0.05, 0.2, 0.5] {
            for bins in [16, 32, 64] {
                let est = estimate_lane_count(&xs, &params(bins, prom)).unwrap();
                assert_eq!(est.k, 2, "bins {bins} prominence {prom}");
                assert!((est.centers[0] - 0.0).abs() < 0.4);
                assert!((est.centers[1] - 3.7).abs() < 0.4);
            }
        }
    }

    #[test]
    fn constant_positions_single_center() {
        let est = estimate_lane_count(&[5.0; 9], &params(32, 0.2)).unwrap();
        assert_eq!(est.k, 1);
        assert_eq!(est.centers, alloc::vec![5.0]);
    }

    #[test]
    fn three_lanes_at_standard_pitch() {
        let xs = clusters(&[0.0, 3.7, 7.4], 200, 0.18, 9);
        let est = estimate_lane_count(&xs, &params(64, 0.1)).unwrap();
        assert_eq!(est.k, 3);
        assert_eq!(est.k, est.centers.len());
    }

    #[test]
    fn too_few_positions() {
        assert!(matches!(
            estimate_lane_count(&[1.0, 2.0, 3.0, 4.0], &params(32, 0.1)),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn highest_peak_always_survives() {
        // with zero padding the global maximum has prominence equal to its
        // height, so even the strictest threshold keeps one peak
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..400).map(|_| rng.random_range(0.0..10.0)).collect();
        let est = estimate_lane_count(&xs, &params(256, 0.9)).unwrap();
        assert_eq!(est.k, est.centers.len());
        assert!(est.k >= 1);
        assert!(!est.fallback);
    }

    #[test]
    fn peak_prominence_definition() {
        // two bumps: 5 with a valley of 1 to a taller bump of 8
        let h = [0.0, 5.0, 1.0, 8.0, 0.0];
        let p = find_peaks(&h);
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].prominence, 4.0);
        assert_eq!(p[1].prominence, 8.0);
        // edge bin counts as a peak against the zero padding
        let e = find_peaks(&[3.0, 1.0, 0.0]);
        assert_eq!(e[0].position, 0.0);
        assert_eq!(e[0].prominence, 3.0);
        // plateau midpoint
        let f = find_peaks(&[0.0, 2.0, 2.0, 2.0, 0.0]);
        assert_eq!(f[0].position, 2.0);
    }

    #[test]
    fn smoothing_preserves_mass_away_from_edges() {
        let mut h = alloc::vec![0.0; 40];
        h[20] = 10.0;
        let s = gaussian_smooth(&h, HISTOGRAM_SIGMA_BINS);
        assert!((s.iter().sum::<f64>() - 10.0).abs() < 1e-12);
        assert!(s[20] > s[19] && s[19] > s[18]);
    }
}
