use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::PlanarPoint;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackSample {
    /// Seconds.
    pub t: f64,
    pub point: PlanarPoint,
}

impl TrackSample {
    pub const fn new(t: f64, x: f64, y: f64) -> Self {
        Self {
            t,
            point: PlanarPoint::new(x, y),
        }
    }
}

/// Per-object aggregates used by the detection stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackSummary {
    pub mean_x: f64,
    pub mean_y: f64,
    /// Travel direction in radians, counter-clockwise from +x.
    pub heading: f64,
    /// Path length over duration, m/s.
    pub mean_speed: f64,
}

/// One vehicle's time-ordered trajectory.
///
/// The summary is derived from the samples and kept in sync by every
/// mutating method.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    id: String,
    samples: Vec<TrackSample>,
    summary: TrackSummary,
}

impl Track {
    pub fn new(id: impl Into<String>, samples: Vec<TrackSample>) -> Result<Self> {
        let summary = summarize(&samples)?;
        Ok(Self {
            id: id.into(),
            samples,
            summary,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn samples(&self) -> &[TrackSample] {
        &self.samples
    }

    pub fn summary(&self) -> &TrackSummary {
        &self.summary
    }

    pub fn heading(&self) -> f64 {
        self.summary.heading
    }

    pub fn points(&self) -> impl Iterator<Item = PlanarPoint> + '_ {
        self.samples.iter().map(|s| s.point)
    }

    /// Replaces the samples, recomputing the summary.
    pub fn set_samples(&mut self, samples: Vec<TrackSample>) -> Result<()> {
        self.summary = summarize(&samples)?;
        self.samples = samples;
        Ok(())
    }

    /// Appends newer samples; they must continue the time ordering.
    pub fn extend(&mut self, more: impl IntoIterator<Item = TrackSample>) -> Result<()> {
        let mut samples = self.samples.clone();
        samples.extend(more);
        self.set_samples(samples)
    }
}

fn summarize(samples: &[TrackSample]) -> Result<TrackSummary> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(alloc::format!(
            "track needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    if samples
        .iter()
        .any(|s| !(s.t.is_finite() && s.point.is_finite()))
    {
        return Err(Error::NonFinite);
    }
    if samples.windows(2).any(|w| w[1].t <= w[0].t) {
        return Err(Error::InvalidArgument(
            "track timestamps must strictly increase".into(),
        ));
    }
    let n = samples.len() as f64;
    let mean_x = samples.iter().map(|s| s.point.x).sum::<f64>() / n;
    let mean_y = samples.iter().map(|s| s.point.y).sum::<f64>() / n;

    // Principal axis of the point cloud, oriented along the net displacement.
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for s in samples {
        let dx = s.point.x - mean_x;
        let dy = s.point.y - mean_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let first = samples[0].point;
    let last = samples[samples.len() - 1].point;
    let disp = last - first;
    let heading = if sxx + syy > 0.0 {
        let axis = 0.5 * libm::atan2(2.0 * sxy, sxx - syy);
        let (sa, ca) = libm::sincos(axis);
        let along = disp.x * ca + disp.y * sa;
        if along < 0.0 {
            crate::geometry::wrap_angle(axis + core::f64::consts::PI)
        } else {
            axis
        }
    } else {
        return Err(Error::InvalidArgument(
            "stationary track has no heading".into(),
        ));
    };

    let path: f64 = samples
        .windows(2)
        .map(|w| w[0].point.distance(&w[1].point))
        .sum();
    let duration = samples[samples.len() - 1].t - samples[0].t;
    Ok(TrackSummary {
        mean_x,
        mean_y,
        heading,
        mean_speed: path / duration,
    })
}
