use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::{unit_normals, Polyline};
use crate::{Error, Result};

/// Physical clamp applied to the `2 sigma` width estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthBounds {
    pub floor: f64,
    pub cap: f64,
}

impl Default for WidthBounds {
    fn default() -> Self {
        Self {
            floor: 2.5,
            cap: 5.5,
        }
    }
}

/// Lane width as twice the population standard deviation of the lateral
/// residuals, clamped to `bounds`.
pub fn estimate_width(residuals: &[f64], bounds: WidthBounds) -> Result<f64> {
    if residuals.len() < 2 {
        return Err(Error::InsufficientData(
            "width needs at least 2 residuals".into(),
        ));
    }
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let var = residuals
        .iter()
        .map(|r| (r - mean) * (r - mean))
        .sum::<f64>()
        / n;
    Ok((2.0 * libm::sqrt(var)).clamp(bounds.floor, bounds.cap))
}

/// Offsets `centerline` by half the width along its left unit normals.
/// Returns `(left, right)`.
pub fn build_boundaries(centerline: &Polyline, width: f64) -> Result<(Polyline, Polyline)> {
    if !(width > 0.0) || !width.is_finite() {
        return Err(Error::InvalidArgument("lane width must be positive".into()));
    }
    let normals = unit_normals(centerline)?;
    let half = 0.5 * width;
    let left = centerline
        .points()
        .iter()
        .zip(&normals)
        .map(|(&p, &n)| p + n * half)
        .collect();
    let right = centerline
        .points()
        .iter()
        .zip(&normals)
        .map(|(&p, &n)| p - n * half)
        .collect();
    Ok((Polyline::new(left)?, Polyline::new(right)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    /// Ordered in the direction of travel.
    pub centerline: Polyline,
    pub width: f64,
    pub left_boundary: Polyline,
    pub right_boundary: Polyline,
    pub direction_group: u32,
    pub member_track_ids: Vec<String>,
}

impl Lane {
    /// Builds a lane with boundaries derived from `centerline` and `width`.
    pub fn new(
        centerline: Polyline,
        width: f64,
        direction_group: u32,
        member_track_ids: Vec<String>,
    ) -> Result<Self> {
        let (left_boundary, right_boundary) = build_boundaries(&centerline, width)?;
        Ok(Self {
            centerline,
            width,
            left_boundary,
            right_boundary,
            direction_group,
            member_track_ids,
        })
    }
}

/// Detection output for one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LaneModelRepr", into = "LaneModelRepr")]
pub struct LaneModel {
    scene_id: String,
    lanes: Vec<Lane>,
    lane_count_per_group: BTreeMap<u32, usize>,
}

impl LaneModel {
    pub fn new(scene_id: impl Into<String>, lanes: Vec<Lane>) -> Self {
        let mut counts = BTreeMap::new();
        for l in &lanes {
            *counts.entry(l.direction_group).or_insert(0) += 1;
        }
        Self {
            scene_id: scene_id.into(),
            lanes,
            lane_count_per_group: counts,
        }
    }

    pub fn scene_id(&self) -> &str {
        &self.scene_id
    }

    pub fn lanes(&self) -> &[Lane] {
        &self.lanes
    }

    pub fn lane_count_per_group(&self) -> &BTreeMap<u32, usize> {
        &self.lane_count_per_group
    }

    pub fn lane_count(&self) -> usize {
        self.lanes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lanes.is_empty()
    }

    /// Indices of the lanes in `group`, in model order.
    pub fn group_lanes(&self, group: u32) -> Vec<usize> {
        (0..self.lanes.len())
            .filter(|&i| self.lanes[i].direction_group == group)
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct LaneModelRepr {
    scene_id: String,
    lanes: Vec<Lane>,
    lane_count_per_group: BTreeMap<u32, usize>,
}

impl TryFrom<LaneModelRepr> for LaneModel {
    type Error = Error;
    fn try_from(r: LaneModelRepr) -> Result<Self> {
        let model = LaneModel::new(r.scene_id, r.lanes);
        if model.lane_count_per_group != r.lane_count_per_group {
            return Err(Error::InvalidArgument(
                "lane_count_per_group disagrees with the lane list".into(),
            ));
        }
        for lane in &model.lanes {
            if lane.left_boundary.len() != lane.centerline.len()
                || lane.right_boundary.len() != lane.centerline.len()
            {
                return Err(Error::InvalidArgument(
                    "lane boundaries must match the centerline vertex count".into(),
                ));
            }
        }
        Ok(model)
    }
}

impl From<LaneModel> for LaneModelRepr {
    fn from(m: LaneModel) -> Self {
        Self {
            scene_id: m.scene_id,
            lanes: m.lanes,
            lane_count_per_group: m.lane_count_per_group,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PlanarPoint;
    use core::f64::consts::FRAC_PI_2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn width_is_two_sigma() {
        // +-1.5 alternating: population sigma exactly 1.5
        let r: Vec<f64> = (0..10)
            .map(|i| if i % 2 == 0 { 1.5 } else { -1.5 })
            .collect();
        assert!((estimate_width(&r, WidthBounds::default()).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn width_floor_and_cap() {
        assert_eq!(
            estimate_width(&[0.0; 5], WidthBounds::default()).unwrap(),
            2.5
        );
        assert_eq!(
            estimate_width(&[-10.0, 10.0], WidthBounds::default()).unwrap(),
            5.5
        );
        assert!(estimate_width(&[1.0], WidthBounds::default()).is_err());
    }

    #[test]
    fn width_from_gaussian_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = Normal::new(0.0, 1.85).unwrap();
        let r: Vec<f64> = (0..1000).map(|_| n.sample(&mut rng)).collect();
        let w = estimate_width(&r, WidthBounds::default()).unwrap();
        assert!((w - 3.7).abs() < 0.05 * 3.7, "{w}");
    }

    fn line(pts: &[(f64, f64)]) -> Polyline {
        Polyline::new(pts.iter().map(|&(x, y)| PlanarPoint::new(x, y)).collect()).unwrap()
    }

    #[test]
    fn boundaries_of_straight_lines() {
        let (l, r) = build_boundaries(&line(&[(0.0, 0.0), (0.0, 5.0), (0.0, 10.0)]), 4.0).unwrap();
        assert!(l.points().iter().all(|p| p.x == -2.0));
        assert!(r.points().iter().all(|p| p.x == 2.0));

        let (l, r) = build_boundaries(&line(&[(0.0, 0.0), (5.0, 0.0), (10.0, 0.0)]), 3.0).unwrap();
        assert!(l.points().iter().all(|p| p.y == 1.5));
        assert!(r.points().iter().all(|p| p.y == -1.5));
    }

    #[test]
    fn boundaries_of_quarter_circle() {
        let radius = 50.0;
        let pts: Vec<_> = (0..65)
            .map(|i| {
                let t = FRAC_PI_2 * i as f64 / 64.0;
                (radius * libm::cos(t), radius * libm::sin(t))
            })
            .collect();
        let c = line(&pts);
        let (l, r) = build_boundaries(&c, 3.0).unwrap();
        // counter-clockwise: left is the inside of the curve
        for p in l.points() {
            assert!((p.norm() - (radius - 1.5)).abs() < 1e-3);
        }
        for p in r.points() {
            assert!((p.norm() - (radius + 1.5)).abs() < 1e-3);
        }
        for ((p, q), s) in l.points().iter().zip(r.points()).zip(c.points()) {
            assert!((p.distance(s) - 1.5).abs() < 1e-9);
            assert!((q.distance(s) - 1.5).abs() < 1e-9);
        }
    }

    #[test]
    fn model_counts_and_serde_validation() {
        let c = line(&[(0.0, 0.0), (0.0, 10.0)]);
        let lanes = alloc::vec![
            Lane::new(c.clone(), 3.5, 0, alloc::vec![]).unwrap(),
            Lane::new(
                c.translated(PlanarPoint::new(3.5, 0.0)),
                3.5,
                0,
                alloc::vec![]
            )
            .unwrap(),
            Lane::new(
                c.reversed().translated(PlanarPoint::new(-5.0, 0.0)),
                3.5,
                1,
                alloc::vec![]
            )
            .unwrap(),
        ];
        let m = LaneModel::new("s", lanes);
        assert_eq!(m.lane_count_per_group().get(&0), Some(&2));
        assert_eq!(m.lane_count_per_group().get(&1), Some(&1));
        assert_eq!(m.group_lanes(1), alloc::vec![2]);
    }
}
