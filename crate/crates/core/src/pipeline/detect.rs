use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::grouping::group_by_direction;
use super::histogram::{estimate_lane_count, MIN_POSITIONS};
use super::kmeans::cluster_lanes;
use super::lane::{estimate_width, Lane, LaneModel, WidthBounds};
use super::spline::fit_centerline_span;
use super::{DetectionParams, Track};
use crate::geometry::{PlanarPoint, Polyline};
use crate::{Error, Result};

/// Knobs of the pipeline that are not meta-learned.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub width_bounds: WidthBounds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedGroup {
    /// Position of the group in the direction sweep.
    pub sweep_index: usize,
    pub track_count: usize,
    pub reason: Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub model: LaneModel,
    pub skipped_groups: Vec<SkippedGroup>,
    /// Ids of lanes whose centerline fell back to a straight line.
    pub degraded_lanes: Vec<usize>,
}

/// Runs the full pipeline with the default configuration.
pub fn detect_lanes(
    scene_id: &str,
    tracks: &[Track],
    params: &DetectionParams,
) -> Result<LaneModel> {
    detect_lanes_with(scene_id, tracks, params, &PipelineConfig::default()).map(|d| d.model)
}

/// Direction grouping, lane-count estimation, clustering, centerline fit
/// and boundary generation, in that order.
///
/// Each direction group is processed in its own frame, rotated so that the
/// group's mean travel direction points along `+y`; lateral positions are
/// the `x` coordinates of that frame. Centerlines are rotated back and come
/// out ordered along the direction of travel.
pub fn detect_lanes_with(
    scene_id: &str,
    tracks: &[Track],
    params: &DetectionParams,
    config: &PipelineConfig,
) -> Result<Detection> {
    params.validate()?;
    if tracks.len() < MIN_POSITIONS {
        return Err(Error::InsufficientData(alloc::format!(
            "scene `{scene_id}` has {} tracks, need {MIN_POSITIONS}",
            tracks.len()
        )));
    }

    let mut lanes = Vec::new();
    let mut skipped_groups = Vec::new();
    let mut degraded_lanes = Vec::new();
    let mut next_group = 0u32;
    for (sweep_index, members) in group_by_direction(tracks, params.angle_threshold)
        .into_iter()
        .enumerate()
    {
        let group: Vec<&Track> = members.iter().map(|&i| &tracks[i]).collect();
        match detect_group(&group, params, config, next_group) {
            Ok(found) => {
                for (lane, degraded) in found {
                    if degraded {
                        degraded_lanes.push(lanes.len());
                    }
                    lanes.push(lane);
                }
                next_group += 1;
            }
            Err(reason @ Error::InsufficientData(_)) => skipped_groups.push(SkippedGroup {
                sweep_index,
                track_count: group.len(),
                reason,
            }),
            Err(e) => return Err(e),
        }
    }
    if lanes.is_empty() {
        return Err(Error::NoValidGroups(scene_id.into()));
    }
    Ok(Detection {
        model: LaneModel::new(scene_id, lanes),
        skipped_groups,
        degraded_lanes,
    })
}

fn detect_group(
    group: &[&Track],
    params: &DetectionParams,
    config: &PipelineConfig,
    group_id: u32,
) -> Result<Vec<(Lane, bool)>> {
    if group.len() < MIN_POSITIONS {
        return Err(Error::InsufficientData(alloc::format!(
            "direction group has {} tracks, need {MIN_POSITIONS}",
            group.len()
        )));
    }
    let heading = mean_heading(group);
    let to_frame = FRAC_PI_2 - heading;

    let xs: Vec<f64> = group
        .iter()
        .map(|t| {
            let s = t.summary();
            PlanarPoint::new(s.mean_x, s.mean_y).rotated(to_frame).x
        })
        .collect();
    let estimate = estimate_lane_count(&xs, params)?;
    let clusters = cluster_lanes(&xs, estimate.k, &estimate.centers, params.kmeans_seed)?;

    // lanes ordered left to right across the road, as seen in the frame
    let mut order: Vec<usize> = (0..clusters.centers.len()).collect();
    order.sort_by(|&a, &b| {
        clusters.centers[a]
            .total_cmp(&clusters.centers[b])
            .then(a.cmp(&b))
    });

    let mut out = Vec::new();
    for c in order {
        let members: Vec<&Track> = group
            .iter()
            .zip(&clusters.assignments)
            .filter(|(_, &a)| a == c)
            .map(|(t, _)| *t)
            .collect();
        if members.is_empty() {
            continue;
        }
        let frame_points: Vec<PlanarPoint> = members
            .iter()
            .flat_map(|t| t.points())
            .map(|p| p.rotated(to_frame))
            .collect();
        // Sample the centerline where a typical member track is observed,
        // not out to the most extreme noisy sample.
        let starts: Vec<f64> = members
            .iter()
            .map(|t| t.samples()[0].point.rotated(to_frame).y)
            .collect();
        let ends: Vec<f64> = members
            .iter()
            .map(|t| t.samples()[t.samples().len() - 1].point.rotated(to_frame).y)
            .collect();
        let span = (median(starts), median(ends));
        let fit = fit_centerline_span(&frame_points, params.smoothing, Some(span))?;
        let width = estimate_width(&fit.residuals, config.width_bounds)?;
        let centerline: Polyline = fit.centerline.map_points(|p| p.rotated(-to_frame))?;
        let ids: Vec<String> = members.iter().map(|t| String::from(t.id())).collect();
        out.push((Lane::new(centerline, width, group_id, ids)?, fit.degraded));
    }
    Ok(out)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Circular mean of the track headings.
fn mean_heading(group: &[&Track]) -> f64 {
    let (s, c) = group.iter().fold((0.0, 0.0), |(s, c), t| {
        let (ts, tc) = libm::sincos(t.heading());
        (s + ts, c + tc)
    });
    libm::atan2(s, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::TrackSample;
    use alloc::format;

    fn straight_track(id: usize, x: f64, y0: f64, y1: f64) -> Track {
        let n = 20;
        let samples = (0..n)
            .map(|i| {
                let y = y0 + (y1 - y0) * i as f64 / (n - 1) as f64;
                TrackSample::new(i as f64 * 0.5, x, y)
            })
            .collect();
        Track::new(format!("t{id}"), samples).unwrap()
    }

    fn params() -> DetectionParams {
        DetectionParams::new(5.0, 0.5, 64, 0.1, 0).unwrap()
    }

    #[test]
    fn five_collinear_tracks_one_lane() {
        let tracks: Vec<Track> = (0..5)
            .map(|i| straight_track(i, 1.25, 0.0, 100.0))
            .collect();
        let model = detect_lanes("line", &tracks, &params()).unwrap();
        assert_eq!(model.lane_count(), 1);
        let lane = &model.lanes()[0];
        for p in lane.centerline.points() {
            assert!((p.x - 1.25).abs() < 1e-6, "{p:?}");
        }
        assert_eq!(lane.width, 2.5);
        assert_eq!(lane.member_track_ids.len(), 5);
        // travel is +y, so the first vertex is the southern end
        assert!(lane.centerline.first().y < lane.centerline.last().y);
    }

    #[test]
    fn opposing_directions_form_two_groups() {
        let mut tracks = Vec::new();
        for i in 0..8 {
            tracks.push(straight_track(i, 0.0, 0.0, 100.0));
            tracks.push(straight_track(100 + i, -6.0, 100.0, 0.0));
        }
        let model = detect_lanes("two-way", &tracks, &params()).unwrap();
        assert_eq!(model.lane_count_per_group().len(), 2);
        for lane in model.lanes() {
            let forward = lane.centerline.last().y > lane.centerline.first().y;
            let x = lane.centerline.first().x;
            assert_eq!(forward, x > -3.0, "lane at x={x}");
        }
    }

    #[test]
    fn too_few_tracks_rejected() {
        let tracks: Vec<Track> = (0..4).map(|i| straight_track(i, 0.0, 0.0, 10.0)).collect();
        assert!(matches!(
            detect_lanes("few", &tracks, &params()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn sparse_group_skipped_and_reported() {
        let mut tracks: Vec<Track> = (0..6).map(|i| straight_track(i, 0.0, 0.0, 50.0)).collect();
        tracks.push(straight_track(99, 8.0, 50.0, 0.0));
        let d = detect_lanes_with("s", &tracks, &params(), &PipelineConfig::default()).unwrap();
        assert_eq!(d.model.lane_count(), 1);
        assert_eq!(d.skipped_groups.len(), 1);
        assert_eq!(d.skipped_groups[0].track_count, 1);
    }

    #[test]
    fn all_groups_insufficient_is_an_error() {
        let tracks: Vec<Track> = (0..6)
            .map(|i| {
                let a = i as f64 * 1.0;
                let (s, c) = libm::sincos(a);
                let samples = (0..5)
                    .map(|k| TrackSample::new(k as f64, c * k as f64, s * k as f64))
                    .collect();
                Track::new(format!("r{i}"), samples).unwrap()
            })
            .collect();
        assert!(matches!(
            detect_lanes(
                "rays",
                &tracks,
                &DetectionParams::new(5.0, 0.087, 64, 0.1, 0).unwrap()
            ),
            Err(Error::NoValidGroups(_))
        ));
    }

    #[test]
    fn boundaries_sit_half_a_width_away() {
        let mut tracks = Vec::new();
        for i in 0..30 {
            let x = if i % 2 == 0 { 0.0 } else { 3.6 } + libm::sin(i as f64 * 0.37) * 0.8;
            tracks.push(straight_track(i, x, 0.0, 80.0));
        }
        let model = detect_lanes("w", &tracks, &params()).unwrap();
        for lane in model.lanes() {
            for ((c, l), r) in lane
                .centerline
                .points()
                .iter()
                .zip(lane.left_boundary.points())
                .zip(lane.right_boundary.points())
            {
                assert!((c.distance(l) - lane.width / 2.0).abs() < 1e-6);
                assert!((c.distance(r) - lane.width / 2.0).abs() < 1e-6);
            }
        }
        let again = detect_lanes("w", &tracks, &params()).unwrap();
        assert_eq!(model, again);
    }
}
