//! Scene-conditioned parameter predictor.
//!
//! A two-layer perceptron maps a fixed 7-feature scene description to the
//! four tunable detection parameters. The hidden layer is shared; each
//! parameter has its own linear head followed by a sigmoid and an affine
//! rescale into the parameter's range, so every output is valid by
//! construction. Training uses the analytic gradient of the range-normalized
//! parameter loss; nothing is differentiated through the detection pipeline.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{angle_diff, PlanarPoint};
use crate::metrics::loss_param;
use crate::pipeline::{DetectionParams, ParamVector, Track, META_PARAMS};
use crate::{Error, Result};

pub const FEATURE_COUNT: usize = 7;
pub const HEAD_COUNT: usize = META_PARAMS.len();
pub const DEFAULT_HIDDEN: usize = 16;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "mean_speed",
    "speed_std",
    "track_count",
    "hour_sin",
    "hour_cos",
    "mean_heading_spread",
    "lateral_extent",
];

/// Un-standardized scene statistics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RawFeatures {
    /// Mean over tracks of each track's mean speed, m/s.
    pub mean_speed: f64,
    /// Population standard deviation of per-track mean speeds, m/s.
    pub speed_std: f64,
    pub track_count: f64,
    pub hour_sin: f64,
    pub hour_cos: f64,
    /// Mean absolute angular deviation of track headings from their circular
    /// mean, radians.
    pub mean_heading_spread: f64,
    /// Spread of track mean positions across the dominant road axis, m.
    pub lateral_extent: f64,
}

impl RawFeatures {
    pub fn from_tracks(tracks: &[Track], hour_of_day: f64) -> Result<Self> {
        if tracks.is_empty() {
            return Err(Error::InsufficientData(
                "feature extraction needs at least one track".into(),
            ));
        }
        if !hour_of_day.is_finite() {
            return Err(Error::NonFinite);
        }
        let n = tracks.len() as f64;
        let speeds: Vec<f64> = tracks.iter().map(|t| t.summary().mean_speed).collect();
        let mean_speed = speeds.iter().sum::<f64>() / n;
        let speed_std = libm::sqrt(
            speeds
                .iter()
                .map(|v| (v - mean_speed) * (v - mean_speed))
                .sum::<f64>()
                / n,
        );

        let (s, c) = tracks.iter().fold((0.0, 0.0), |(s, c), t| {
            let (ts, tc) = libm::sincos(t.heading());
            (s + ts, c + tc)
        });
        let mean_heading = libm::atan2(s, c);
        let mean_heading_spread = tracks
            .iter()
            .map(|t| angle_diff(t.heading(), mean_heading))
            .sum::<f64>()
            / n;

        // Axial mean (doubled angles) so opposing carriageways share an axis.
        let (s2, c2) = tracks.iter().fold((0.0, 0.0), |(s, c), t| {
            let (ts, tc) = libm::sincos(2.0 * t.heading());
            (s + ts, c + tc)
        });
        let axis = 0.5 * libm::atan2(s2, c2);
        let normal = PlanarPoint::new(-libm::sin(axis), libm::cos(axis));
        let (lo, hi) = tracks
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
                let sm = t.summary();
                let v = PlanarPoint::new(sm.mean_x, sm.mean_y).dot(&normal);
                (lo.min(v), hi.max(v))
            });

        let (hour_sin, hour_cos) = libm::sincos(TAU * hour_of_day / 24.0);
        Ok(Self {
            mean_speed,
            speed_std,
            track_count: n,
            hour_sin,
            hour_cos,
            mean_heading_spread,
            lateral_extent: hi - lo,
        })
    }

    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        [
            self.mean_speed,
            self.speed_std,
            self.track_count,
            self.hour_sin,
            self.hour_cos,
            self.mean_heading_spread,
            self.lateral_extent,
        ]
    }
}

/// Fixed standardization constants: `z = (raw - center) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaling {
    pub center: [f64; FEATURE_COUNT],
    pub scale: [f64; FEATURE_COUNT],
}

impl Default for FeatureScaling {
    fn default() -> Self {
        Self {
            center: [12.0, 1.0, 500.0, 0.0, 0.0, 0.5, 10.0],
            scale: [5.0, 1.0, 400.0, 1.0, 1.0, 0.5, 8.0],
        }
    }
}

impl FeatureScaling {
    pub fn validate(&self) -> Result<()> {
        if self.center.iter().all(|v| v.is_finite())
            && self.scale.iter().all(|v| v.is_finite() && *v > 0.0)
        {
            Ok(())
        } else {
            Err(Error::InvalidArgument(
                "feature scales must be finite and positive".into(),
            ))
        }
    }

    pub fn standardize(&self, raw: &RawFeatures) -> SceneFeatures {
        let r = raw.to_array();
        SceneFeatures(core::array::from_fn(|i| {
            (r[i] - self.center[i]) / self.scale[i]
        }))
    }
}

/// Standardized network input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneFeatures(pub [f64; FEATURE_COUNT]);

impl SceneFeatures {
    pub fn new(values: [f64; FEATURE_COUNT]) -> Result<Self> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(Self(values))
        } else {
            Err(Error::NonFinite)
        }
    }

    pub fn extract(tracks: &[Track], hour_of_day: f64, scaling: &FeatureScaling) -> Result<Self> {
        let z = scaling.standardize(&RawFeatures::from_tracks(tracks, hour_of_day)?);
        Self::new(z.0)
    }
}

/// Weights of the predictor. Gradients use the same shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Checkpoint", into = "Checkpoint")]
pub struct MetaNet {
    hidden: usize,
    /// `hidden x FEATURE_COUNT`, row-major.
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// `HEAD_COUNT x hidden`, row-major; row `p` is head `p`.
    w2: Vec<f64>,
    b2: [f64; HEAD_COUNT],
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub hidden: Vec<f64>,
    /// Sigmoid outputs in `[0, 1]`.
    pub unit: [f64; HEAD_COUNT],
    pub params: ParamVector,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-z))
}

impl MetaNet {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            hidden,
            w1: vec![0.0; hidden * FEATURE_COUNT],
            b1: vec![0.0; hidden],
            w2: vec![0.0; HEAD_COUNT * hidden],
            b2: [0.0; HEAD_COUNT],
        }
    }

    /// Glorot-uniform weights from a seeded stream; biases start at zero.
    pub fn init(seed: u64, hidden: usize) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::InvalidArgument(
                "hidden size must be positive".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Self::zeros(hidden);
        let a1 = init_bound(FEATURE_COUNT, hidden);
        for w in &mut net.w1 {
            *w = rng.random_range(-a1..=a1);
        }
        let a2 = init_bound(hidden, 1);
        for w in &mut net.w2 {
            *w = rng.random_range(-a2..=a2);
        }
        Ok(net)
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn w1(&self, j: usize, i: usize) -> f64 {
        self.w1[j * FEATURE_COUNT + i]
    }

    pub fn b1(&self, j: usize) -> f64 {
        self.b1[j]
    }

    pub fn w2(&self, p: usize, j: usize) -> f64 {
        self.w2[p * self.hidden + j]
    }

    pub fn b2(&self, p: usize) -> f64 {
        self.b2[p]
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + HEAD_COUNT
    }

    /// All weights in the order `w1, b1, w2, b2`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.extend_from_slice(&self.b2);
        v
    }

    pub fn from_flat(hidden: usize, flat: &[f64]) -> Result<Self> {
        let mut net = Self::zeros(hidden);
        if flat.len() != net.param_count() {
            return Err(Error::InvalidArgument(alloc::format!(
                "expected {} weights for hidden size {hidden}, got {}",
                net.param_count(),
                flat.len()
            )));
        }
        if !flat.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let (w1, rest) = flat.split_at(net.w1.len());
        let (b1, rest) = rest.split_at(hidden);
        let (w2, b2) = rest.split_at(net.w2.len());
        net.w1.copy_from_slice(w1);
        net.b1.copy_from_slice(b1);
        net.w2.copy_from_slice(w2);
        net.b2.copy_from_slice(b2);
        Ok(net)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.hidden != other.hidden {
            return Err(Error::InvalidArgument("hidden sizes differ".into()));
        }
        let a = self.to_flat();
        let b = other.to_flat();
        let out: Vec<f64> = a.iter().zip(&b).map(|(&x, &y)| f(x, y)).collect();
        Self::from_flat(self.hidden, &out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scaled(&self, k: f64) -> Result<Self> {
        self.zip_with(self, |a, _| a * k)
    }

    pub fn forward_pass(&self, x: &SceneFeatures) -> ForwardPass {
        let hidden: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let a = self.b1[j]
                    + (0..FEATURE_COUNT)
                        .map(|i| self.w1(j, i) * x.0[i])
                        .sum::<f64>();
                libm::tanh(a)
            })
            .collect();
        let unit: [f64; HEAD_COUNT] = core::array::from_fn(|p| {
            sigmoid(
                self.b2[p]
                    + (0..self.hidden)
                        .map(|j| self.w2(p, j) * hidden[j])
                        .sum::<f64>(),
            )
        });
        let params = ParamVector(core::array::from_fn(|p| {
            META_PARAMS[p].denormalize(unit[p])
        }));
        ForwardPass {
            hidden,
            unit,
            params,
        }
    }

    /// Real-valued parameter prediction, as seen by training.
    pub fn forward_raw(&self, x: &SceneFeatures) -> ParamVector {
        self.forward_pass(x).params
    }

    /// Prediction ready for the pipeline: bin count rounded, seed attached.
    pub fn forward(&self, x: &SceneFeatures, kmeans_seed: u64) -> DetectionParams {
        self.forward_raw(x).to_detection_params(kmeans_seed)
    }

    /// Parameter-alignment loss of the prediction against `target` and its
    /// gradient with respect to every weight. Heads with `active[p] == false`
    /// are left out of the loss entirely.
    pub fn grad_param_loss_masked(
        &self,
        x: &SceneFeatures,
        target: &ParamVector,
        active: [bool; HEAD_COUNT],
    ) -> (f64, MetaNet) {
        let fp = self.forward_pass(x);
        let mut grad = Self::zeros(self.hidden);
        let mut loss = 0.0;
        let mut dh = vec![0.0; self.hidden];
        for p in 0..HEAD_COUNT {
            if !active[p] {
                continue;
            }
            let u = (fp.params.0[p] - target.0[p]) / META_PARAMS[p].span();
            loss += u * u;
            let s = fp.unit[p];
            let dz = 2.0 * u * s * (1.0 - s);
            grad.b2[p] = dz;
            for j in 0..self.hidden {
                grad.w2[p * self.hidden + j] = dz * fp.hidden[j];
                dh[j] += dz * self.w2(p, j);
            }
        }
        for j in 0..self.hidden {
            let da = dh[j] * (1.0 - fp.hidden[j] * fp.hidden[j]);
            grad.b1[j] = da;
            for i in 0..FEATURE_COUNT {
                grad.w1[j * FEATURE_COUNT + i] = da * x.0[i];
            }
        }
        (loss, grad)
    }

    pub fn grad_param_loss(&self, x: &SceneFeatures, target: &ParamVector) -> (f64, MetaNet) {
        self.grad_param_loss_masked(x, target, [true; HEAD_COUNT])
    }

    pub fn param_loss(&self, x: &SceneFeatures, target: &ParamVector) -> f64 {
        loss_param(&self.forward_raw(x), target)
    }

    /// `w - lr * g`, elementwise.
    pub fn sgd_step(&self, grad: &MetaNet, lr: f64) -> Result<MetaNet> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::InvalidArgument(
                "learning rate must be positive".into(),
            ));
        }
        self.zip_with(grad, |w, g| w - lr * g)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from(self.clone())
    }
}

fn init_bound(fan_in: usize, fan_out: usize) -> f64 {
    libm::sqrt(6.0 / (fan_in + fan_out) as f64)
}

/// Bound of the initial weight distribution for each layer: `(input, head)`.
pub fn init_bounds(hidden: usize) -> (f64, f64) {
    (init_bound(FEATURE_COUNT, hidden), init_bound(hidden, 1))
}

/// Serialized form of a [`MetaNet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub hidden: usize,
    pub feature_names: Vec<String>,
    pub head_names: Vec<String>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl From<MetaNet> for Checkpoint {
    fn from(n: MetaNet) -> Self {
        Self {
            hidden: n.hidden,
            feature_names: FEATURE_NAMES.iter().map(|s| String::from(*s)).collect(),
            head_names: META_PARAMS.iter().map(|r| String::from(r.name)).collect(),
            w1: n.w1,
            b1: n.b1,
            w2: n.w2,
            b2: n.b2.to_vec(),
        }
    }
}

impl TryFrom<Checkpoint> for MetaNet {
    type Error = Error;
    fn try_from(c: Checkpoint) -> Result<Self> {
        let heads_ok = c.head_names.len() == HEAD_COUNT
            && c.head_names
                .iter()
                .zip(META_PARAMS.iter())
                .all(|(a, r)| a == r.name);
        if !heads_ok {
            return Err(Error::Decode(
                "checkpoint head names do not match the parameter set".into(),
            ));
        }
        if c.feature_names.len() != FEATURE_COUNT {
            return Err(Error::Decode("checkpoint feature count mismatch".into()));
        }
        let mut flat = c.w1;
        flat.extend(c.b1);
        flat.extend(c.w2);
        flat.extend(c.b2);
        MetaNet::from_flat(c.hidden, &flat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::TrackSample;
    use alloc::format;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_features(rng: &mut ChaCha8Rng) -> SceneFeatures {
        SceneFeatures(core::array::from_fn(|_| rng.random_range(-2.0..2.0)))
    }

    fn random_target(rng: &mut ChaCha8Rng) -> ParamVector {
        ParamVector(core::array::from_fn(|p| {
            META_PARAMS[p].denormalize(rng.random_range(0.0..1.0))
        }))
    }

    /// Direct evaluation of the network formula, written independently of
    /// the indexed accessors.
    fn reference_forward(net: &MetaNet, x: &[f64; FEATURE_COUNT]) -> [f64; HEAD_COUNT] {
        let flat = net.to_flat();
        let h = net.hidden();
        let w1 = &flat[..h * 7];
        let b1 = &flat[h * 7..h * 8];
        let w2 = &flat[h * 8..h * 12];
        let b2 = &flat[h * 12..];
        let mut hid = vec![0.0; h];
        for j in 0..h {
            let mut a = b1[j];
            for i in 0..7 {
                a += w1[j * 7 + i] * x[i];
            }
            hid[j] = libm::tanh(a);
        }
        let mut out = [0.0; HEAD_COUNT];
        for p in 0..HEAD_COUNT {
            let mut z = b2[p];
            for j in 0..h {
                z += w2[p * h + j] * hid[j];
            }
            let r = &META_PARAMS[p];
            out[p] = r.lo + (r.hi - r.lo) / (1.0 + libm::exp(-z));
        }
        out
    }

    #[test]
    fn zero_net_outputs_midpoints() {
        let p = MetaNet::zeros(16).forward_raw(&SceneFeatures([0.3; 7]));
        assert_eq!(p.smoothing(), 10.5);
        assert!((p.peak_prominence() - 0.455).abs() < 1e-15);
    }

    #[test]
    fn saturated_head_hits_upper_bound() {
        let mut net = MetaNet::zeros(4);
        net.b2[0] = 20.0;
        let p = net.forward_raw(&SceneFeatures([0.0; 7]));
        assert!((p.smoothing() - 20.0).abs() < 1e-6 * 20.0);
        // sigma(20) = 1 - 2.06e-9; scaled by a span of 19
        assert!((p.smoothing() - 20.0).abs() < 19.0 * 1e-8);
    }

    #[test]
    fn forward_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..10 {
            let net = MetaNet::init(seed, 16).unwrap();
            let x = random_features(&mut rng);
            let got = net.forward_raw(&x);
            let want = reference_forward(&net, &x.0);
            for p in 0..HEAD_COUNT {
                assert!((got.0[p] - want[p]).abs() <= 1e-12 * want[p].abs());
            }
        }
    }

    #[test]
    fn forward_rounds_bins_only_for_the_pipeline() {
        let mut net = MetaNet::zeros(2);
        net.b2[2] = 0.1;
        let x = SceneFeatures([0.0; 7]);
        let raw = net.forward_raw(&x).bin_count();
        assert!(raw.fract() != 0.0);
        assert_eq!(net.forward(&x, 9).bin_count, libm::round(raw) as u32);
        assert_eq!(net.forward(&x, 9).kmeans_seed, 9);
    }

    #[test]
    fn gradient_zero_at_target() {
        let net = MetaNet::init(5, 16).unwrap();
        let x = SceneFeatures([0.5, -0.2, 1.0, 0.0, 1.0, -0.3, 0.1]);
        let t = net.forward_raw(&x);
        let (loss, g) = net.grad_param_loss(&x, &t);
        assert_eq!(loss, 0.0);
        assert!(g.to_flat().iter().all(|&v| v == 0.0));
    }

    fn finite_difference_max_rel_error(net: &MetaNet, x: &SceneFeatures, t: &ParamVector) -> f64 {
        let (_, g) = net.grad_param_loss(x, t);
        let flat = net.to_flat();
        let gf = g.to_flat();
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..flat.len() {
            let mut plus = flat.clone();
            let mut minus = flat.clone();
            plus[k] += eps;
            minus[k] -= eps;
            let lp = MetaNet::from_flat(net.hidden(), &plus)
                .unwrap()
                .param_loss(x, t);
            let lm = MetaNet::from_flat(net.hidden(), &minus)
                .unwrap()
                .param_loss(x, t);
            let fd = (lp - lm) / (2.0 * eps);
            // absolute floor for components that are zero up to rounding
            let err = (fd - gf[k]).abs() / fd.abs().max(gf[k].abs()).max(1e-6);
            worst = worst.max(err);
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..20 {
            let net = MetaNet::init(100 + seed, 16).unwrap();
            let x = random_features(&mut rng);
            let t = random_target(&mut rng);
            let e = finite_difference_max_rel_error(&net, &x, &t);
            assert!(e < 1e-4, "seed {seed}: {e}");
        }
    }

    #[test]
    fn frozen_head_has_zero_gradient() {
        let mut net = MetaNet::init(1, 8).unwrap();
        for j in 0..8 {
            net.w2[3 * 8 + j] = 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_features(&mut rng);
        let t = random_target(&mut rng);
        let (_, g) = net.grad_param_loss_masked(&x, &t, [true, true, true, false]);
        assert!((0..8).all(|j| g.w2(3, j) == 0.0));
        assert_eq!(g.b2(3), 0.0);
        assert!(g.b2(0) != 0.0);
    }

    #[test]
    fn sgd_examples() {
        let net = MetaNet::init(4, 8).unwrap();
        assert_eq!(net.sgd_step(&MetaNet::zeros(8), 0.3).unwrap(), net);
        assert!(net
            .sgd_step(&net, 1.0)
            .unwrap()
            .to_flat()
            .iter()
            .all(|&v| v == 0.0));
        assert!(net.sgd_step(&net, 0.0).is_err());
        // loss 0.5 |w|^2 has gradient w: two steps give 0.9^2 w
        let w1 = net.sgd_step(&net, 0.1).unwrap();
        let w2 = w1.sgd_step(&w1, 0.1).unwrap();
        for (a, b) in w2.to_flat().iter().zip(net.to_flat()) {
            assert!((a - 0.81 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = MetaNet::init(42, 16).unwrap();
        assert_eq!(a, MetaNet::init(42, 16).unwrap());
        assert_ne!(a, MetaNet::init(43, 16).unwrap());
        let (b1, b2) = init_bounds(16);
        assert!(a.w1.iter().all(|w| w.abs() <= b1));
        assert!(a.w2.iter().all(|w| w.abs() <= b2));
        assert!(MetaNet::init(0, 0).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = MetaNet::init(8, 5).unwrap();
        let back = MetaNet::try_from(net.checkpoint()).unwrap();
        assert_eq!(back, net);
        let mut bad = net.checkpoint();
        bad.w1.pop();
        assert!(MetaNet::try_from(bad).is_err());
        let mut renamed = net.checkpoint();
        renamed.head_names[0] = "other".into();
        assert!(MetaNet::try_from(renamed).is_err());
    }

    fn constant_speed_track(id: usize, x: f64, v: f64, heading: f64) -> Track {
        let (s, c) = libm::sincos(heading);
        let samples = (0..10)
            .map(|i| {
                let d = v * i as f64;
                TrackSample::new(i as f64, x + c * d, s * d)
            })
            .collect();
        Track::new(format!("t{id}"), samples).unwrap()
    }

    #[test]
    fn raw_features_examples() {
        let tracks: Vec<Track> = (0..6)
            .map(|i| constant_speed_track(i, i as f64 * 3.5, 12.0, 0.3))
            .collect();
        let f = RawFeatures::from_tracks(&tracks, 0.0).unwrap();
        assert!((f.mean_speed - 12.0).abs() < 1e-12);
        assert!(f.speed_std < 1e-12);
        assert_eq!(f.track_count, 6.0);
        assert_eq!((f.hour_sin, f.hour_cos), (0.0, 1.0));
        assert!(f.mean_heading_spread < 1e-9);
        let noon = RawFeatures::from_tracks(&tracks, 12.0).unwrap();
        assert!(noon.hour_sin.abs() < 1e-12 && (noon.hour_cos + 1.0).abs() < 1e-12);
    }

    #[test]
    fn lateral_extent_across_opposing_lanes() {
        let mut tracks = Vec::new();
        for i in 0..4 {
            let samples = (0..5)
                .map(|k| TrackSample::new(k as f64, i as f64 * 4.0, k as f64 * 10.0))
                .collect();
            tracks.push(Track::new(format!("n{i}"), samples).unwrap());
            let samples = (0..5)
                .map(|k| TrackSample::new(k as f64, -6.0, 40.0 - k as f64 * 10.0))
                .collect();
            tracks.push(Track::new(format!("s{i}"), samples).unwrap());
        }
        let f = RawFeatures::from_tracks(&tracks, 8.0).unwrap();
        assert!((f.lateral_extent - 18.0).abs() < 1e-9);
        assert!((f.mean_speed - 10.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn outputs_always_in_range(seed in 0u64..1000, scale in 0.1f64..50.0,
                                   x in prop::array::uniform7(-100.0f64..100.0)) {
            let net = MetaNet::init(seed, 6).unwrap().scaled(scale).unwrap();
            let p = net.forward_raw(&SceneFeatures(x));
            for (v, r) in p.0.iter().zip(META_PARAMS.iter()) {
                prop_assert!(r.contains(*v), "{} = {v}", r.name);
            }
            prop_assert!(net.forward(&SceneFeatures(x), 0).validate().is_ok());
        }

        #[test]
        fn gradient_property(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = MetaNet::init(seed, 8).unwrap();
            let x = random_features(&mut rng);
            let t = random_target(&mut rng);
            prop_assert!(finite_difference_max_rel_error(&net, &x, &t) < 1e-4);
        }

        #[test]
        fn small_steps_never_increase_loss(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut net = MetaNet::init(seed, 16).unwrap();
            let x = random_features(&mut rng);
            let t = random_target(&mut rng);
            let mut prev = net.param_loss(&x, &t);
            for _ in 0..100 {
                let (_, g) = net.grad_param_loss(&x, &t);
                net = net.sgd_step(&g, 1e-3).unwrap();
                let now = net.param_loss(&x, &t);
                prop_assert!(now <= prev + 1e-15, "{now} > {prev}");
                prev = now;
            }
        }
    }
}
