use alloc::vec::Vec;
use core::f64::consts::TAU;

use super::Track;
use crate::geometry::angle_diff;

/// Partitions tracks into direction groups.
///
/// Headings are swept in ascending order on `[0, 2pi)`; a track joins the
/// open group while its heading stays within `angle_threshold` of the
/// group's first heading, otherwise it opens a new group. The last group is
/// folded into the first when the union still satisfies the threshold across
/// the wrap-around. Returned groups hold indices into `tracks`.
pub fn group_by_direction(tracks: &[Track], angle_threshold: f64) -> Vec<Vec<usize>> {
    let headings: Vec<f64> = tracks.iter().map(|t| t.heading()).collect();
    group_headings(&headings, angle_threshold)
}

pub(crate) fn group_headings(headings: &[f64], angle_threshold: f64) -> Vec<Vec<usize>> {
    let norm = |h: f64| {
        let r = libm::fmod(h, TAU);
        if r < 0.0 {
            r + TAU
        } else {
            r
        }
    };
    let mut order: Vec<(f64, usize)> = headings.iter().map(|&h| norm(h)).zip(0..).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut open_start = f64::NAN;
    for &(h, idx) in &order {
        match groups.last_mut() {
            Some(g) if h - open_start <= angle_threshold => g.push(idx),
            _ => {
                groups.push(alloc::vec![idx]);
                open_start = h;
            }
        }
    }

    if groups.len() > 1 {
        let first = &groups[0];
        let last = &groups[groups.len() - 1];
        let fits = first.iter().chain(last.iter()).all(|&a| {
            first
                .iter()
                .chain(last.iter())
                .all(|&b| angle_diff(headings[a], headings[b]) <= angle_threshold)
        });
        if fits {
            let mut tail = groups.pop().unwrap_or_default();
            tail.extend_from_slice(&groups[0]);
            groups[0] = tail;
        }
    }
    groups
}
