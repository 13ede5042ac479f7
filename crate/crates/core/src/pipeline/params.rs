use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Closed range of one meta-learned detection parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamRange {
    pub name: &'static str,
    pub lo: f64,
    pub hi: f64,
}

impl ParamRange {
    pub fn span(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    /// Maps `v` into `[0, 1]` relative to the range.
    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.lo) / self.span()
    }

    pub fn denormalize(&self, u: f64) -> f64 {
        self.lo + u * self.span()
    }

    fn check(&self, v: f64) -> Result<()> {
        if v.is_finite() && self.contains(v) {
            Ok(())
        } else {
            Err(Error::ParamOutOfRange {
                name: self.name,
                value: v,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }
}

/// The four parameters the meta-learner predicts, in head order.
pub const META_PARAMS: [ParamRange; 4] = [
    ParamRange {
        name: "smoothing",
        lo: 1.0,
        hi: 20.0,
    },
    ParamRange {
        name: "angle_threshold",
        lo: 0.087,
        hi: 1.571,
    },
    ParamRange {
        name: "bin_count",
        lo: 8.0,
        hi: 256.0,
    },
    ParamRange {
        name: "peak_prominence",
        lo: 0.01,
        hi: 0.9,
    },
];

/// Parameter set steering the detection pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    /// Spline roughness penalty weight.
    pub smoothing: f64,
    /// Maximum heading spread (radians) inside one direction group.
    pub angle_threshold: f64,
    pub bin_count: u32,
    /// Minimum peak prominence as a fraction of the smoothed histogram max.
    pub peak_prominence: f64,
    pub kmeans_seed: u64,
}

/// Fixed hand-tuned setting used when nothing is learned.
impl Default for DetectionParams {
    fn default() -> Self {
        Self {
            smoothing: 10.0,
            angle_threshold: 0.5,
            bin_count: 64,
            peak_prominence: 0.3,
            kmeans_seed: 0,
        }
    }
}

impl DetectionParams {
    pub fn new(
        smoothing: f64,
        angle_threshold: f64,
        bin_count: u32,
        peak_prominence: f64,
        kmeans_seed: u64,
    ) -> Result<Self> {
        let p = Self {
            smoothing,
            angle_threshold,
            bin_count,
            peak_prominence,
            kmeans_seed,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.to_vector();
        for (range, value) in META_PARAMS.iter().zip(v.0) {
            range.check(value)?;
        }
        Ok(())
    }

    pub fn to_vector(&self) -> ParamVector {
        ParamVector([
            self.smoothing,
            self.angle_threshold,
            self.bin_count as f64,
            self.peak_prominence,
        ])
    }
}

/// Real-valued view of the meta-learned parameters, in [`META_PARAMS`]
/// order. `bin_count` stays continuous here; it is rounded only when the
/// vector is turned into [`DetectionParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub [f64; 4]);

impl ParamVector {
    pub fn smoothing(&self) -> f64 {
        self.0[0]
    }

    pub fn angle_threshold(&self) -> f64 {
        self.0[1]
    }

    pub fn bin_count(&self) -> f64 {
        self.0[2]
    }

    pub fn peak_prominence(&self) -> f64 {
        self.0[3]
    }

    /// Values clamped into range and `bin_count` rounded to the nearest
    /// integer.
    pub fn to_detection_params(&self, kmeans_seed: u64) -> DetectionParams {
        let c = |i: usize| self.0[i].clamp(META_PARAMS[i].lo, META_PARAMS[i].hi);
        DetectionParams {
            smoothing: c(0),
            angle_threshold: c(1),
            bin_count: libm::round(c(2)) as u32,
            peak_prominence: c(3),
            kmeans_seed,
        }
    }
}

impl From<&DetectionParams> for ParamVector {
    fn from(p: &DetectionParams) -> Self {
        p.to_vector()
    }
}
