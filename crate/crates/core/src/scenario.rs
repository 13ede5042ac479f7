//! Synthetic scenes with known lane geometry.
//!
//! A [`SceneSpec`] describes lanes by centerline, width and traffic volume.
//! From it we generate noisy vehicle tracks, the exact reference
//! [`LaneModel`], and, by exhaustive search over a parameter grid, the
//! detection parameters that best recover the reference.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{resample_arclength, PlanarPoint, Polyline, DEFAULT_FRECHET_SAMPLES};
use crate::metanet::{FeatureScaling, SceneFeatures};
use crate::metrics::{loss_total, LossBreakdown, MetricsConfig};
use crate::pipeline::{
    detect_lanes, DetectionParams, Lane, LaneModel, Track, TrackSample, WidthBounds,
};
use crate::{Error, Result};

/// Vertices of a reference centerline.
pub const REFERENCE_SAMPLES: usize = DEFAULT_FRECHET_SAMPLES;

/// Declared raw trajectory-file size of one scene when none is given:
/// a quarter of 427.3 MB.
pub const DEFAULT_RAW_FILE_BYTES: u64 = 106_825_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneSpec {
    /// Centerline vertices, ordered in the direction of travel.
    pub centerline: Vec<PlanarPoint>,
    pub width: f64,
    pub tracks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionGroupSpec {
    pub lanes: Vec<LaneSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficSpec {
    /// Per-sample lateral noise; half the lane width when absent.
    #[serde(default)]
    pub lateral_sigma: Option<f64>,
    pub speed_min: f64,
    pub speed_max: f64,
    /// Seconds between consecutive samples of a track.
    pub sample_interval: f64,
}

impl Default for TrafficSpec {
    fn default() -> Self {
        Self {
            lateral_sigma: None,
            speed_min: 8.0,
            speed_max: 16.0,
            sample_interval: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub scene_id: String,
    pub groups: Vec<DirectionGroupSpec>,
    #[serde(default)]
    pub traffic: TrafficSpec,
    pub hour_of_day: f64,
    pub seed: u64,
    #[serde(default = "default_raw_file_bytes")]
    pub raw_file_bytes: u64,
}

fn default_raw_file_bytes() -> u64 {
    DEFAULT_RAW_FILE_BYTES
}

impl SceneSpec {
    pub fn lanes(&self) -> impl Iterator<Item = (usize, &LaneSpec)> {
        self.groups
            .iter()
            .enumerate()
            .flat_map(|(g, gs)| gs.lanes.iter().map(move |l| (g, l)))
    }

    pub fn lane_count(&self) -> usize {
        self.lanes().count()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lane_count() == 0 {
            return Err(Error::InvalidArgument(format!(
                "scene `{}` has no lanes",
                self.scene_id
            )));
        }
        let bounds = WidthBounds::default();
        let mut curves = Vec::new();
        for (_, lane) in self.lanes() {
            if !(lane.width >= bounds.floor && lane.width <= bounds.cap) {
                return Err(Error::ParamOutOfRange {
                    name: "width",
                    value: lane.width,
                    lo: bounds.floor,
                    hi: bounds.cap,
                });
            }
            let c = Polyline::new(lane.centerline.clone())?;
            curves.push((resample_arclength(&c, REFERENCE_SAMPLES)?, lane.width));
        }
        for i in 0..curves.len() {
            for j in i + 1..curves.len() {
                let gap = min_vertex_gap(&curves[i].0, &curves[j].0);
                let need = 0.8 * curves[i].1.max(curves[j].1);
                if gap < need {
                    return Err(Error::InvalidArgument(format!(
                        "scene `{}`: lanes {i} and {j} are {gap:.2} m apart, need {need:.2}",
                        self.scene_id
                    )));
                }
            }
        }
        let t = &self.traffic;
        let speeds_ok = t.speed_min > 0.0 && t.speed_max >= t.speed_min && t.speed_max.is_finite();
        let sigma_ok = t.lateral_sigma.is_none_or(|s| s >= 0.0 && s.is_finite());
        if !speeds_ok || !sigma_ok || !(t.sample_interval > 0.0) || !self.hour_of_day.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "scene `{}`: invalid traffic settings",
                self.scene_id
            )));
        }
        Ok(())
    }
}

fn min_vertex_gap(a: &Polyline, b: &Polyline) -> f64 {
    a.points()
        .iter()
        .flat_map(|p| b.points().iter().map(move |q| p.distance(q)))
        .fold(f64::INFINITY, f64::min)
}

/// Samples vehicle tracks for every lane of `spec`.
///
/// Each vehicle enters at the start of its lane, travels at a constant speed
/// drawn uniformly from the configured range and leaves at the end; each
/// sample is displaced along the lane normal by independent Gaussian noise.
pub fn generate_tracks(spec: &SceneSpec) -> Result<Vec<Track>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let t = spec.traffic;
    let mut tracks = Vec::new();
    for (g, group) in spec.groups.iter().enumerate() {
        for (l, lane) in group.lanes.iter().enumerate() {
            let centerline = Polyline::new(lane.centerline.clone())?;
            let length = centerline.length();
            let sigma = t.lateral_sigma.unwrap_or(0.5 * lane.width);
            let noise =
                Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(format!("{e}")))?;
            for k in 0..lane.tracks {
                let speed = if t.speed_max > t.speed_min {
                    rng.random_range(t.speed_min..t.speed_max)
                } else {
                    t.speed_min
                };
                let t0 = rng.random_range(0.0..600.0);
                let step = speed * t.sample_interval;
                let mut arc = Vec::new();
                let mut s = 0.0;
                while s < length - 1e-6 {
                    arc.push(s);
                    s += step;
                }
                arc.push(length);
                let samples = arc
                    .into_iter()
                    .map(|s| {
                        let tan = centerline.tangent_at(s);
                        let normal = PlanarPoint::new(-tan.y, tan.x);
                        let p = centerline.point_at(s) + normal * noise.sample(&mut rng);
                        TrackSample {
                            t: t0 + s / speed,
                            point: p,
                        }
                    })
                    .collect();
                tracks.push(Track::new(
                    format!("{}-g{g}-l{l}-{k}", spec.scene_id),
                    samples,
                )?);
            }
        }
    }
    Ok(tracks)
}

/// Exact lane model of `spec`, each centerline resampled to
/// [`REFERENCE_SAMPLES`] vertices.
pub fn reference_model(spec: &SceneSpec) -> Result<LaneModel> {
    spec.validate()?;
    let mut lanes = Vec::new();
    for (g, lane) in spec.lanes() {
        let c = resample_arclength(&Polyline::new(lane.centerline.clone())?, REFERENCE_SAMPLES)?;
        lanes.push(Lane::new(c, lane.width, g as u32, Vec::new())?);
    }
    Ok(LaneModel::new(spec.scene_id.clone(), lanes))
}

pub fn extract_features(
    tracks: &[Track],
    hour_of_day: f64,
    scaling: &FeatureScaling,
) -> Result<SceneFeatures> {
    SceneFeatures::extract(tracks, hour_of_day, scaling)
}

/// Candidate values per tunable parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub smoothing: Vec<f64>,
    pub angle_threshold: Vec<f64>,
    pub bin_count: Vec<u32>,
    pub peak_prominence: Vec<f64>,
}

impl Default for ParamGrid {
    fn default() -> Self {
        Self {
            smoothing: vec![1.0, 5.0, 10.0, 20.0],
            angle_threshold: vec![0.2, 0.5, 1.0],
            bin_count: vec![32, 64, 128],
            peak_prominence: vec![0.05, 0.1, 0.2, 0.4],
        }
    }
}

impl ParamGrid {
    pub fn single(p: &DetectionParams) -> Self {
        Self {
            smoothing: vec![p.smoothing],
            angle_threshold: vec![p.angle_threshold],
            bin_count: vec![p.bin_count],
            peak_prominence: vec![p.peak_prominence],
        }
    }

    pub fn len(&self) -> usize {
        self.smoothing.len()
            * self.angle_threshold.len()
            * self.bin_count.len()
            * self.peak_prominence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every grid point, validated against the parameter ranges.
    pub fn points(&self, kmeans_seed: u64) -> Result<Vec<DetectionParams>> {
        if self.is_empty() {
            return Err(Error::InvalidArgument("parameter grid is empty".into()));
        }
        let mut out = Vec::with_capacity(self.len());
        for &s in &self.smoothing {
            for &a in &self.angle_threshold {
                for &b in &self.bin_count {
                    for &p in &self.peak_prominence {
                        out.push(DetectionParams::new(s, a, b, p, kmeans_seed)?);
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub params: DetectionParams,
    pub loss: LossBreakdown,
    pub evaluated: usize,
    /// Grid points whose detection failed.
    pub failed: usize,
}

fn lexicographic(a: &DetectionParams, b: &DetectionParams) -> core::cmp::Ordering {
    a.smoothing
        .total_cmp(&b.smoothing)
        .then(a.angle_threshold.total_cmp(&b.angle_threshold))
        .then(a.bin_count.cmp(&b.bin_count))
        .then(a.peak_prominence.total_cmp(&b.peak_prominence))
}

/// Picks the grid point whose detection minimizes the total loss against
/// `reference`. Exact ties go to the lexicographically smallest parameters,
/// so the result does not depend on grid order.
pub fn oracle_params(
    tracks: &[Track],
    reference: &LaneModel,
    grid: &ParamGrid,
    metrics: &MetricsConfig,
    kmeans_seed: u64,
) -> Result<OracleResult> {
    let scene_id = reference.scene_id();
    let mut best: Option<(DetectionParams, LossBreakdown)> = None;
    let mut failed = 0;
    let points = grid.points(kmeans_seed)?;
    for p in &points {
        let Ok(model) = detect_lanes(scene_id, tracks, p) else {
            failed += 1;
            continue;
        };
        let loss = loss_total(&model, reference, metrics)?.breakdown;
        let better = match &best {
            None => true,
            Some((bp, bl)) => match loss.total.total_cmp(&bl.total) {
                core::cmp::Ordering::Less => true,
                core::cmp::Ordering::Equal => lexicographic(p, bp).is_lt(),
                core::cmp::Ordering::Greater => false,
            },
        };
        if better {
            best = Some((*p, loss));
        }
    }
    let (params, loss) = best.ok_or(Error::GridExhausted)?;
    Ok(OracleResult {
        params,
        loss,
        evaluated: points.len(),
        failed,
    })
}

/// Centerlines of parallel lanes along a straight or circular road.
///
/// The reference path starts at `origin` with `heading` and turns with
/// constant `curvature` (1/m, positive to the left). Each lane is offset
/// along the path's left normal by the given amount. Lanes are sampled at
/// `vertices` points each, in the direction of travel.
pub fn road_lanes(
    origin: PlanarPoint,
    heading: f64,
    curvature: f64,
    length: f64,
    offsets: &[f64],
    vertices: usize,
) -> Vec<Vec<PlanarPoint>> {
    offsets
        .iter()
        .map(|&off| {
            (0..vertices)
                .map(|i| {
                    let s = length * i as f64 / (vertices - 1) as f64;
                    let theta = heading + curvature * s;
                    let base = if curvature.abs() < 1e-12 {
                        PlanarPoint::new(libm::cos(heading) * s, libm::sin(heading) * s)
                    } else {
                        PlanarPoint::new(
                            (libm::sin(theta) - libm::sin(heading)) / curvature,
                            (libm::cos(heading) - libm::cos(theta)) / curvature,
                        )
                    };
                    origin + base + PlanarPoint::new(-libm::sin(theta), libm::cos(theta)) * off
                })
                .collect()
        })
        .collect()
}

/// Lane offsets for adjacent lanes of the given widths, starting at `first`
/// and stepping left.
fn stacked_offsets(first: f64, widths: &[f64]) -> Vec<f64> {
    let mut out = vec![first];
    for w in widths.windows(2) {
        let last = out[out.len() - 1];
        out.push(last + 0.5 * (w[0] + w[1]));
    }
    out
}

fn group(
    origin: PlanarPoint,
    heading: f64,
    curvature: f64,
    length: f64,
    first_offset: f64,
    widths: &[f64],
    tracks: usize,
) -> DirectionGroupSpec {
    group_with_shares(
        origin,
        heading,
        curvature,
        length,
        first_offset,
        widths,
        tracks,
        &vec![1.0; widths.len()],
    )
}

/// Like [`group`], with lane `i` carrying `shares[i] * tracks` vehicles.
#[allow(clippy::too_many_arguments)]
fn group_with_shares(
    origin: PlanarPoint,
    heading: f64,
    curvature: f64,
    length: f64,
    first_offset: f64,
    widths: &[f64],
    tracks: usize,
    shares: &[f64],
) -> DirectionGroupSpec {
    let offsets = stacked_offsets(first_offset, widths);
    let lanes = road_lanes(origin, heading, curvature, length, &offsets, 65)
        .into_iter()
        .zip(widths.iter().zip(shares))
        .map(|(centerline, (&width, &share))| LaneSpec {
            centerline,
            width,
            tracks: (libm::round(share * tracks as f64) as usize).max(1),
        })
        .collect();
    DirectionGroupSpec { lanes }
}

fn scene(
    id: &str,
    groups: Vec<DirectionGroupSpec>,
    traffic: TrafficSpec,
    hour: f64,
    seed: u64,
) -> SceneSpec {
    SceneSpec {
        scene_id: id.into(),
        groups,
        traffic,
        hour_of_day: hour,
        seed,
        raw_file_bytes: DEFAULT_RAW_FILE_BYTES,
    }
}

/// Training scenes: straight and curved roads with two to four lanes,
/// including one two-way road.
pub fn seen_scenes(seed: u64, tracks_per_lane: usize) -> Vec<SceneSpec> {
    let o = PlanarPoint::default();
    let n = tracks_per_lane;
    let reverse = |mut g: DirectionGroupSpec| {
        for l in &mut g.lanes {
            l.centerline.reverse();
        }
        g
    };
    vec![
        scene(
            "straight-3",
            vec![group(o, 0.35, 0.0, 150.0, 0.0, &[3.7, 3.6, 3.5], n)],
            TrafficSpec {
                speed_min: 12.0,
                speed_max: 18.0,
                ..TrafficSpec::default()
            },
            8.0,
            seed,
        ),
        scene(
            "curve-2",
            vec![group(o, 1.2, 1.0 / 400.0, 150.0, 0.0, &[3.5, 3.5], n)],
            TrafficSpec {
                speed_min: 8.0,
                speed_max: 13.0,
                ..TrafficSpec::default()
            },
            13.0,
            seed.wrapping_add(1),
        ),
        scene(
            "two-way-2x2",
            vec![
                group(o, -0.6, 0.0, 140.0, 0.0, &[3.6, 3.6], n),
                reverse(group(o, -0.6, 0.0, 140.0, 8.2, &[3.6, 3.6], n)),
            ],
            TrafficSpec {
                speed_min: 9.0,
                speed_max: 15.0,
                ..TrafficSpec::default()
            },
            17.5,
            seed.wrapping_add(2),
        ),
        scene(
            "curve-4",
            vec![group(
                o,
                2.4,
                -1.0 / 600.0,
                160.0,
                0.0,
                &[3.7, 3.7, 3.5, 3.5],
                n,
            )],
            TrafficSpec {
                speed_min: 14.0,
                speed_max: 22.0,
                ..TrafficSpec::default()
            },
            22.0,
            seed.wrapping_add(3),
        ),
    ]
}

/// Held-out scenes with layouts and traffic not present in [`seen_scenes`],
/// including lightly used lanes.
pub fn unseen_scenes(seed: u64, tracks_per_lane: usize) -> Vec<SceneSpec> {
    let o = PlanarPoint::new(250.0, -80.0);
    let n = tracks_per_lane;
    vec![
        scene(
            "park-curve-3",
            vec![group_with_shares(
                o,
                0.9,
                1.0 / 300.0,
                130.0,
                0.0,
                &[3.3, 3.3, 3.3],
                n,
                &[1.0, 0.55, 0.2],
            )],
            TrafficSpec {
                speed_min: 6.0,
                speed_max: 11.0,
                ..TrafficSpec::default()
            },
            3.0,
            seed.wrapping_add(10),
        ),
        scene(
            "wide-2",
            vec![group_with_shares(
                o,
                -1.9,
                0.0,
                170.0,
                0.0,
                &[4.2, 4.4],
                n,
                &[1.0, 0.22],
            )],
            TrafficSpec {
                speed_min: 18.0,
                speed_max: 26.0,
                ..TrafficSpec::default()
            },
            20.0,
            seed.wrapping_add(11),
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::resampled_frechet;
    use crate::metanet::RawFeatures;
    use crate::metrics::loss_lane_num;
    use crate::pipeline::{estimate_width, fit_centerline};

    fn one_lane(width: f64, tracks: usize, sigma: Option<f64>, seed: u64) -> SceneSpec {
        scene(
            "lane",
            vec![group(
                PlanarPoint::default(),
                core::f64::consts::FRAC_PI_2,
                0.0,
                150.0,
                0.0,
                &[width],
                tracks,
            )],
            TrafficSpec {
                lateral_sigma: sigma,
                ..TrafficSpec::default()
            },
            12.0,
            seed,
        )
    }

    #[test]
    fn noiseless_tracks_lie_on_the_centerline() {
        let tracks = generate_tracks(&one_lane(3.5, 20, Some(0.0), 1)).unwrap();
        assert_eq!(tracks.len(), 20);
        for t in &tracks {
            for s in t.samples() {
                // the lane runs north along x = 0
                assert!(s.point.x.abs() < 1e-9, "{:?}", s.point);
            }
        }
    }

    #[test]
    fn generation_is_seeded() {
        let spec = &seen_scenes(5, 10)[1];
        assert_eq!(
            generate_tracks(spec).unwrap(),
            generate_tracks(spec).unwrap()
        );
        let mut other = spec.clone();
        other.seed += 1;
        assert_ne!(
            generate_tracks(spec).unwrap(),
            generate_tracks(&other).unwrap()
        );
    }

    #[test]
    fn width_estimate_converges_to_spec_width() {
        let tracks = generate_tracks(&one_lane(3.7, 1000, None, 9)).unwrap();
        let refs: Vec<&Track> = tracks.iter().collect();
        let fit = fit_centerline(&refs, 5.0).unwrap();
        let w = estimate_width(&fit.residuals, WidthBounds::default()).unwrap();
        assert!((w - 3.7).abs() < 0.02 * 3.7, "{w}");
    }

    #[test]
    fn reference_model_examples() {
        for spec in seen_scenes(1, 5).iter().chain(&unseen_scenes(1, 5)) {
            let m = reference_model(spec).unwrap();
            assert_eq!(m.lane_count(), spec.lane_count());
            let e = loss_total(&m, &m, &MetricsConfig::default()).unwrap();
            assert_eq!(e.breakdown.total, 0.0);
        }
        let m = reference_model(&one_lane(3.6, 5, None, 0)).unwrap();
        let lane = &m.lanes()[0];
        assert_eq!(lane.centerline.len(), REFERENCE_SAMPLES);
        // northbound along x = 0: left is west
        assert!(lane
            .left_boundary
            .points()
            .iter()
            .all(|p| (p.x + 1.8).abs() < 1e-9));
        assert!(lane
            .right_boundary
            .points()
            .iter()
            .all(|p| (p.x - 1.8).abs() < 1e-9));
    }

    #[test]
    fn curved_reference_boundaries_are_concentric() {
        let spec = &seen_scenes(1, 5)[1];
        let m = reference_model(spec).unwrap();
        // curvature 1/400 starting at the origin with heading 1.2: center of
        // the turning circle sits 400 m to the left
        let center = PlanarPoint::new(-libm::sin(1.2), libm::cos(1.2)) * 400.0;
        let lane = &m.lanes()[0];
        // resampled vertices sit on chords of the control polygon, up to
        // 2.34^2 / (8 * 400) = 1.7 mm inside the arc
        for p in lane.left_boundary.points() {
            assert!((p.distance(&center) - (400.0 - 1.75)).abs() < 5e-3);
        }
        for p in lane.right_boundary.points() {
            assert!((p.distance(&center) - (400.0 + 1.75)).abs() < 5e-3);
        }
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let mut s = one_lane(3.5, 5, None, 0);
        s.groups[0].lanes[0].width = 6.0;
        assert!(s.validate().is_err());
        let mut s = one_lane(3.5, 5, None, 0);
        let mut close = s.groups[0].lanes[0].clone();
        for p in &mut close.centerline {
            p.x += 2.0;
        }
        s.groups[0].lanes.push(close);
        assert!(s.validate().is_err());
        let mut s = one_lane(3.5, 5, None, 0);
        s.groups.clear();
        assert!(s.validate().is_err());
    }

    #[test]
    fn features_match_direct_statistics() {
        let spec = &seen_scenes(3, 20)[2];
        let tracks = generate_tracks(spec).unwrap();
        let raw = RawFeatures::from_tracks(&tracks, spec.hour_of_day).unwrap();
        let speeds: Vec<f64> = tracks
            .iter()
            .map(|t| {
                let s = t.samples();
                let path: f64 = s.windows(2).map(|w| w[0].point.distance(&w[1].point)).sum();
                path / (s[s.len() - 1].t - s[0].t)
            })
            .collect();
        let mean = speeds.iter().sum::<f64>() / speeds.len() as f64;
        let var = speeds.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / speeds.len() as f64;
        assert!((raw.mean_speed - mean).abs() < 1e-9);
        assert!((raw.speed_std - libm::sqrt(var)).abs() < 1e-9);
        assert_eq!(raw.track_count, 80.0);
        // two-way road: headings split evenly, so the spread is about pi/2
        assert!((raw.mean_heading_spread - core::f64::consts::FRAC_PI_2).abs() < 0.1);
        let z = extract_features(&tracks, spec.hour_of_day, &FeatureScaling::default()).unwrap();
        assert_eq!(z, FeatureScaling::default().standardize(&raw));
    }

    #[test]
    fn oracle_single_point_grid() {
        let spec = &seen_scenes(2, 40)[0];
        let tracks = generate_tracks(spec).unwrap();
        let reference = reference_model(spec).unwrap();
        let p = DetectionParams::new(7.0, 0.4, 50, 0.3, 0).unwrap();
        let r = oracle_params(
            &tracks,
            &reference,
            &ParamGrid::single(&p),
            &MetricsConfig::default(),
            0,
        )
        .unwrap();
        assert_eq!(r.params, p);
        assert_eq!(r.evaluated, 1);
    }

    #[test]
    fn oracle_recovers_lane_count_and_ignores_grid_order() {
        let spec = &seen_scenes(4, 60)[2];
        let tracks = generate_tracks(spec).unwrap();
        let reference = reference_model(spec).unwrap();
        let grid = ParamGrid {
            smoothing: vec![1.0, 10.0],
            angle_threshold: vec![0.2, 1.0],
            bin_count: vec![16, 64],
            peak_prominence: vec![0.1, 0.4],
        };
        let cfg = MetricsConfig::default();
        let r = oracle_params(&tracks, &reference, &grid, &cfg, 0).unwrap();
        let model = detect_lanes("x", &tracks, &r.params).unwrap();
        assert_eq!(loss_lane_num(&model, &reference), 0.0);
        let mut reversed = grid.clone();
        reversed.smoothing.reverse();
        reversed.angle_threshold.reverse();
        reversed.bin_count.reverse();
        reversed.peak_prominence.reverse();
        assert_eq!(
            oracle_params(&tracks, &reference, &reversed, &cfg, 0)
                .unwrap()
                .params,
            r.params
        );
    }

    #[test]
    fn clean_scene_is_recovered() {
        let spec = &seen_scenes(42, 100)[0];
        let tracks = generate_tracks(spec).unwrap();
        let reference = reference_model(spec).unwrap();
        let r = oracle_params(
            &tracks,
            &reference,
            &ParamGrid::default(),
            &MetricsConfig::default(),
            0,
        )
        .unwrap();
        let model = detect_lanes("x", &tracks, &r.params).unwrap();
        let eval = loss_total(&model, &reference, &MetricsConfig::default()).unwrap();
        assert_eq!(eval.breakdown.lane_num, 0.0);
        for &(d, rf) in &eval.matching.pairs {
            let (dl, rl) = (&model.lanes()[d], &reference.lanes()[rf]);
            assert!((dl.width - rl.width).abs() < 0.05 * rl.width);
            assert!(resampled_frechet(&dl.centerline, &rl.centerline, 64).unwrap() < 0.3);
        }
    }
}
