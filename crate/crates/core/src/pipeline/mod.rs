//! Knowledge-based lane detection.
//!
//! Trajectories go in, a [`LaneModel`] comes out. The stages run in order:
//! direction grouping, per-group lane-count estimation on a smoothed
//! histogram of mean lateral positions, 1-D k-means, a penalized cubic
//! spline per lane, and width/boundary generation. Every stage is steered by
//! [`DetectionParams`]; nothing here is differentiable, and nothing needs to
//! be.

mod detect;
mod grouping;
mod histogram;
mod kmeans;
mod lane;
mod params;
mod spline;
mod track;

pub use detect::{detect_lanes, detect_lanes_with, Detection, PipelineConfig, SkippedGroup};
pub use grouping::group_by_direction;
pub use histogram::{estimate_lane_count, LaneCountEstimate, HISTOGRAM_SIGMA_BINS};
pub use kmeans::{cluster_lanes, KMeansResult, KMEANS_MAX_ITER, KMEANS_TOLERANCE};
pub use lane::{build_boundaries, estimate_width, Lane, LaneModel, WidthBounds};
pub use params::{DetectionParams, ParamRange, ParamVector, META_PARAMS};
pub use spline::{
    fit_centerline, fit_centerline_points, fit_centerline_span, CenterlineFit, SmoothingSpline,
};
pub use track::{Track, TrackSample, TrackSummary};
