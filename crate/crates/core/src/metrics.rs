//! Scoring a detected [`LaneModel`] against a reference one.
//!
//! Detected and reference direction groups are first paired by travel
//! direction, lanes are then matched inside paired groups by centerline
//! Fréchet distance, and the four losses are computed over the matches.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::{
    resample_arclength, resampled_frechet, PlanarPoint, Polyline, DEFAULT_FRECHET_SAMPLES,
};
use crate::pipeline::{LaneModel, ParamVector, META_PARAMS};
use crate::{Error, Result};

/// Arc-length samples of the fixed centerline embedding.
pub const EMBEDDING_SAMPLES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub consistency: f64,
    pub geometry: f64,
    pub center: f64,
    pub lane_num: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            consistency: 1.0,
            geometry: 1.0,
            center: 1.0,
            lane_num: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.consistency, self.geometry, self.center, self.lane_num];
        if all.iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(
                "loss weights must be finite and >= 0".into(),
            ))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchStrategy {
    /// Repeatedly take the globally closest remaining pair.
    #[default]
    Greedy,
    /// Minimum summed distance over all assignments (exhaustive).
    Optimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub weights: LossWeights,
    pub strategy: MatchStrategy,
    /// Resampling density for Fréchet comparisons.
    pub frechet_samples: usize,
    /// Training stops once the total loss drops below this.
    pub stop_threshold: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            strategy: MatchStrategy::Greedy,
            frechet_samples: DEFAULT_FRECHET_SAMPLES,
            stop_threshold: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LaneMatch {
    /// `(detected lane, reference lane)`, sorted by detected index.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_detected: Vec<usize>,
    pub unmatched_reference: Vec<usize>,
    /// `(detected group, reference group)` pairs used to restrict matching.
    pub group_pairs: Vec<(u32, u32)>,
}

/// Unit travel direction of each direction group: the normalized sum of its
/// lanes' start-to-end chords.
fn group_directions(model: &LaneModel) -> BTreeMap<u32, PlanarPoint> {
    let mut acc: BTreeMap<u32, PlanarPoint> = BTreeMap::new();
    for lane in model.lanes() {
        let chord = lane.centerline.last() - lane.centerline.first();
        let n = chord.norm();
        let e = acc.entry(lane.direction_group).or_default();
        if n > 0.0 {
            *e = *e + chord * (1.0 / n);
        }
    }
    for v in acc.values_mut() {
        let n = v.norm();
        if n > 0.0 {
            *v = *v * (1.0 / n);
        }
    }
    acc
}

/// Pairs detected and reference direction groups whose travel directions
/// differ by less than 90 degrees, closest angle first.
pub fn align_groups(detected: &LaneModel, reference: &LaneModel) -> Vec<(u32, u32)> {
    let dd = group_directions(detected);
    let rd = group_directions(reference);
    let mut candidates: Vec<(f64, u32, u32)> = Vec::new();
    for (&dg, dv) in &dd {
        for (&rg, rv) in &rd {
            let cos = dv.dot(rv);
            if cos > 0.0 {
                candidates.push((-cos, dg, rg));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_d = Vec::new();
    let mut used_r = Vec::new();
    let mut pairs = Vec::new();
    for (_, dg, rg) in candidates {
        if !used_d.contains(&dg) && !used_r.contains(&rg) {
            used_d.push(dg);
            used_r.push(rg);
            pairs.push((dg, rg));
        }
    }
    pairs.sort();
    pairs
}

/// Matches detected lanes to reference lanes inside aligned direction groups
/// by resampled centerline Fréchet distance.
pub fn match_lanes(
    detected: &LaneModel,
    reference: &LaneModel,
    config: &MetricsConfig,
) -> Result<LaneMatch> {
    if detected.is_empty() || reference.is_empty() {
        return Err(Error::InvalidArgument(
            "lane matching needs non-empty models".into(),
        ));
    }
    let group_pairs = align_groups(detected, reference);
    let mut pairs = Vec::new();
    for &(dg, rg) in &group_pairs {
        let ds = detected.group_lanes(dg);
        let rs = reference.group_lanes(rg);
        let mut cost = Vec::with_capacity(ds.len());
        for &d in &ds {
            let mut row = Vec::with_capacity(rs.len());
            for &r in &rs {
                row.push(resampled_frechet(
                    &detected.lanes()[d].centerline,
                    &reference.lanes()[r].centerline,
                    config.frechet_samples,
                )?);
            }
            cost.push(row);
        }
        let local = match config.strategy {
            MatchStrategy::Greedy => greedy_assignment(&cost),
            MatchStrategy::Optimal => optimal_assignment(&cost),
        };
        pairs.extend(local.into_iter().map(|(i, j)| (ds[i], rs[j])));
    }
    pairs.sort();
    let unmatched_detected = (0..detected.lane_count())
        .filter(|d| !pairs.iter().any(|p| p.0 == *d))
        .collect();
    let unmatched_reference = (0..reference.lane_count())
        .filter(|r| !pairs.iter().any(|p| p.1 == *r))
        .collect();
    Ok(LaneMatch {
        pairs,
        unmatched_detected,
        unmatched_reference,
        group_pairs,
    })
}

fn greedy_assignment(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let mut entries: Vec<(f64, usize, usize)> = Vec::new();
    for (i, row) in cost.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            entries.push((c, i, j));
        }
    }
    entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut taken_i = alloc::vec![false; cost.len()];
    let mut taken_j = alloc::vec![false; cost.first().map_or(0, Vec::len)];
    let mut out = Vec::new();
    for (_, i, j) in entries {
        if !taken_i[i] && !taken_j[j] {
            taken_i[i] = true;
            taken_j[j] = true;
            out.push((i, j));
        }
    }
    out
}

/// Exhaustive minimum-cost assignment of `min(rows, cols)` pairs. Ties keep
/// the lexicographically first assignment.
fn optimal_assignment(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    let want = rows.min(cols);
    let mut best: Option<(f64, Vec<(usize, usize)>)> = None;
    let mut current = Vec::new();
    let mut used = alloc::vec![false; cols];

    #[allow(clippy::too_many_arguments)]
    fn search(
        cost: &[Vec<f64>],
        row: usize,
        want: usize,
        acc: f64,
        used: &mut [bool],
        current: &mut Vec<(usize, usize)>,
        best: &mut Option<(f64, Vec<(usize, usize)>)>,
    ) {
        let remaining_rows = cost.len() - row;
        if current.len() + remaining_rows < want {
            return;
        }
        if current.len() == want {
            if best.as_ref().is_none_or(|(b, _)| acc < *b) {
                *best = Some((acc, current.clone()));
            }
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                current.push((row, j));
                search(cost, row + 1, want, acc + cost[row][j], used, current, best);
                current.pop();
                used[j] = false;
            }
        }
        // leave this row unmatched
        search(cost, row + 1, want, acc, used, current, best);
    }

    search(cost, 0, want, 0.0, &mut used, &mut current, &mut best);
    best.map(|(_, a)| a).unwrap_or_default()
}

/// Mean resampled Fréchet distance over matched centerlines.
///
/// Returns `(loss, warning)`; with no matched pair the loss is 0 and the
/// warning flag is set.
pub fn loss_consistency(
    m: &LaneMatch,
    detected: &LaneModel,
    reference: &LaneModel,
    samples: usize,
) -> Result<(f64, bool)> {
    if m.pairs.is_empty() {
        return Ok((0.0, true));
    }
    let mut sum = 0.0;
    for &(d, r) in &m.pairs {
        sum += resampled_frechet(
            &detected.lanes()[d].centerline,
            &reference.lanes()[r].centerline,
            samples,
        )?;
    }
    Ok((sum / m.pairs.len() as f64, false))
}

/// Sum of squared width differences over matched pairs.
pub fn loss_geometry(m: &LaneMatch, detected: &LaneModel, reference: &LaneModel) -> f64 {
    m.pairs
        .iter()
        .map(|&(d, r)| {
            let diff = detected.lanes()[d].width - reference.lanes()[r].width;
            diff * diff
        })
        .sum()
}

/// Fixed centerline embedding: `EMBEDDING_SAMPLES` arc-length samples
/// relative to `anchor`, flattened.
fn embed(c: &Polyline, anchor: PlanarPoint) -> Result<Vec<f64>> {
    Ok(resample_arclength(c, EMBEDDING_SAMPLES)?
        .points()
        .iter()
        .flat_map(|&p| {
            let q = p - anchor;
            [q.x, q.y]
        })
        .collect())
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Triplet hinge over matched pairs.
///
/// For a pair (detected `s`, reference `c`) the negative `c'` is the other
/// reference lane of `c`'s group closest to `c` in Fréchet distance. All
/// three curves are embedded relative to `c`'s first vertex, so a common
/// rigid translation of both models leaves the loss unchanged. Pairs with no
/// negative contribute the positive distance alone.
pub fn loss_center(
    m: &LaneMatch,
    detected: &LaneModel,
    reference: &LaneModel,
    samples: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for &(d, r) in &m.pairs {
        let c = &reference.lanes()[r];
        let anchor = c.centerline.first();
        let fc = embed(&c.centerline, anchor)?;
        let fs = embed(&detected.lanes()[d].centerline, anchor)?;
        let positive = squared_distance(&fc, &fs);

        let mut negative: Option<(f64, usize)> = None;
        for other in reference.group_lanes(c.direction_group) {
            if other == r {
                continue;
            }
            let dist =
                resampled_frechet(&c.centerline, &reference.lanes()[other].centerline, samples)?;
            if negative.is_none_or(|(best, _)| dist < best) {
                negative = Some((dist, other));
            }
        }
        total += match negative {
            Some((_, n)) => {
                let fn_ = embed(&reference.lanes()[n].centerline, anchor)?;
                (positive - squared_distance(&fc, &fn_)).max(0.0)
            }
            None => positive,
        };
    }
    Ok(total)
}

/// Absolute lane-count difference per aligned direction group. Groups with
/// no counterpart contribute their whole lane count.
pub fn loss_lane_num(detected: &LaneModel, reference: &LaneModel) -> f64 {
    let pairs = align_groups(detected, reference);
    let dc = detected.lane_count_per_group();
    let rc = reference.lane_count_per_group();
    let mut total = 0usize;
    for (&g, &n) in dc {
        match pairs.iter().find(|p| p.0 == g) {
            Some(&(_, rg)) => total += n.abs_diff(rc.get(&rg).copied().unwrap_or(0)),
            None => total += n,
        }
    }
    for (&g, &n) in rc {
        if !pairs.iter().any(|p| p.1 == g) {
            total += n;
        }
    }
    total as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub consistency: f64,
    pub geometry: f64,
    pub center: f64,
    pub lane_num: f64,
    pub total: f64,
    pub weights: LossWeights,
}

impl LossBreakdown {
    pub fn from_components(
        consistency: f64,
        geometry: f64,
        center: f64,
        lane_num: f64,
        weights: LossWeights,
    ) -> Self {
        let total = weights.consistency * consistency
            + weights.geometry * geometry
            + weights.center * center
            + weights.lane_num * lane_num;
        Self {
            consistency,
            geometry,
            center,
            lane_num,
            total,
            weights,
        }
    }

    pub fn below(&self, stop_threshold: f64) -> bool {
        self.total < stop_threshold
    }
}

/// Full evaluation result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub breakdown: LossBreakdown,
    pub matching: LaneMatch,
    /// Set when no lane pair could be matched.
    pub no_match_warning: bool,
}

/// Matches the two models and computes every loss component.
pub fn loss_total(
    detected: &LaneModel,
    reference: &LaneModel,
    config: &MetricsConfig,
) -> Result<Evaluation> {
    config.weights.validate()?;
    let matching = match_lanes(detected, reference, config)?;
    let (consistency, warn) =
        loss_consistency(&matching, detected, reference, config.frechet_samples)?;
    let geometry = loss_geometry(&matching, detected, reference);
    let center = loss_center(&matching, detected, reference, config.frechet_samples)?;
    let lane_num = loss_lane_num(detected, reference);
    Ok(Evaluation {
        breakdown: LossBreakdown::from_components(
            consistency,
            geometry,
            center,
            lane_num,
            config.weights,
        ),
        matching,
        no_match_warning: warn,
    })
}

/// Range-normalized squared error over the meta-learned parameters.
pub fn loss_param(predicted: &ParamVector, reference: &ParamVector) -> f64 {
    META_PARAMS
        .iter()
        .zip(predicted.0.iter().zip(&reference.0))
        .map(|(range, (p, r))| {
            let u = (p - r) / range.span();
            u * u
        })
        .sum()
}
