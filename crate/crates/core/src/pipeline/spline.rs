use alloc::vec::Vec;

use super::Track;
use crate::geometry::{PlanarPoint, Polyline};
use crate::{Error, Result};

/// Number of centerline vertices produced by a fit.
pub const CENTERLINE_SAMPLES: usize = 64;

/// Upper bound on uniform knot intervals of the spline basis.
pub const MAX_KNOT_INTERVALS: usize = 48;

/// Abscissae closer than this are merged before fitting.
const TIE_EPS: f64 = 1e-9;

/// Penalized cubic spline `x = f(y)`.
///
/// Minimizes `sum w_i (x_i - f(y_i))^2 / sum w_i + s * integral f''(y)^2 dy`
/// over cubic B-splines on uniform knots spanning the data. Normalizing the
/// data term keeps the effect of `s` independent of the sample count. The roughness integral is
/// computed exactly from the basis, so the penalty's null space is the
/// straight lines: constant and linear data are reproduced for every `s`,
/// and `s -> infinity` tends to the weighted least-squares line.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingSpline {
    y0: f64,
    h: f64,
    intervals: usize,
    coef: Vec<f64>,
}

impl SmoothingSpline {
    /// Fits to `(y, x)` pairs with unit weights. Ties in `y` are averaged
    /// and carry their multiplicity as weight.
    pub fn fit(ys: &[f64], xs: &[f64], smoothing: f64) -> Result<Self> {
        let (ty, tx, tw) = merge_ties(ys, xs)?;
        let intervals = ty.len().saturating_sub(3).clamp(1, MAX_KNOT_INTERVALS);
        Self::fit_weighted(&ty, &tx, &tw, smoothing, intervals)
    }

    fn fit_weighted(
        ys: &[f64],
        xs: &[f64],
        ws: &[f64],
        smoothing: f64,
        intervals: usize,
    ) -> Result<Self> {
        if !(smoothing >= 0.0 && smoothing.is_finite()) {
            return Err(Error::InvalidArgument(
                "smoothing must be finite and >= 0".into(),
            ));
        }
        let y0 = ys[0];
        let span = ys[ys.len() - 1] - y0;
        if !(span > 0.0) {
            return Err(Error::InsufficientData(
                "spline needs two distinct abscissae".into(),
            ));
        }
        let h = span / intervals as f64;
        let nb = intervals + 3;

        // Banded normal equations, upper band stored as band[i][d] = A[i][i+d].
        let mut band = alloc::vec![[0.0f64; 4]; nb];
        let mut rhs = alloc::vec![0.0f64; nb];
        for ((&y, &x), &w) in ys.iter().zip(xs).zip(ws) {
            let (j, b) = basis(y0, h, intervals, y);
            for a in 0..4 {
                rhs[j + a] += w * b[a] * x;
                for c in a..4 {
                    band[j + a][c - a] += w * b[a] * b[c];
                }
            }
        }
        let omega = roughness_block(h);
        let penalty = smoothing * ws.iter().sum::<f64>();
        for j in 0..intervals {
            for a in 0..4 {
                for c in a..4 {
                    band[j + a][c - a] += penalty * omega[a][c];
                }
            }
        }
        let coef = solve_banded_spd(band, rhs)?;
        Ok(Self {
            y0,
            h,
            intervals,
            coef,
        })
    }

    pub fn eval(&self, y: f64) -> f64 {
        let (j, b) = basis(self.y0, self.h, self.intervals, y);
        (0..4).map(|a| b[a] * self.coef[j + a]).sum()
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.y0, self.y0 + self.h * self.intervals as f64)
    }

    /// Roughness `integral f''^2` over the domain.
    pub fn roughness(&self) -> f64 {
        let omega = roughness_block(self.h);
        let mut r = 0.0;
        for j in 0..self.intervals {
            for a in 0..4 {
                for c in 0..4 {
                    let (lo, hi) = if a <= c { (a, c) } else { (c, a) };
                    r += self.coef[j + a] * omega[lo][hi] * self.coef[j + c];
                }
            }
        }
        r
    }
}

/// Interval index and the four non-zero uniform cubic B-spline values at `y`.
fn basis(y0: f64, h: f64, intervals: usize, y: f64) -> (usize, [f64; 4]) {
    let u = (y - y0) / h;
    let j = (libm::floor(u).max(0.0) as usize).min(intervals - 1);
    let t = u - j as f64;
    let s = 1.0 - t;
    let t2 = t * t;
    let t3 = t2 * t;
    (
        j,
        [
            s * s * s / 6.0,
            (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
            (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
            t3 / 6.0,
        ],
    )
}

/// `integral B_a'' B_c'' dy` over one knot interval of width `h`.
fn roughness_block(h: f64) -> [[f64; 4]; 4] {
    // second derivatives in local t are linear: p0 + p1 t
    let second = [(1.0, -1.0), (-2.0, 3.0), (1.0, -3.0), (0.0, 1.0)];
    let scale = 1.0 / (h * h * h);
    let mut m = [[0.0; 4]; 4];
    for a in 0..4 {
        for c in 0..4 {
            let (p0, p1) = second[a];
            let (q0, q1) = second[c];
            m[a][c] = scale * (p0 * q0 + 0.5 * (p0 * q1 + p1 * q0) + p1 * q1 / 3.0);
        }
    }
    m
}

/// Cholesky solve of a symmetric positive definite matrix with three
/// super-diagonals.
fn solve_banded_spd(mut band: Vec<[f64; 4]>, mut rhs: Vec<f64>) -> Result<Vec<f64>> {
    let n = band.len();
    // factor A = L L^T, storing L^T in the same upper band
    for i in 0..n {
        for d in 1..4 {
            if i >= d {
                let k = i - d;
                let lki = band[k][d];
                for e in 0..4 - d {
                    band[i][e] -= lki * band[k][d + e];
                }
            }
        }
        let pivot = band[i][0];
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(Error::InsufficientData(
                "spline normal equations are not positive definite".into(),
            ));
        }
        let root = libm::sqrt(pivot);
        band[i][0] = root;
        for d in 1..4 {
            band[i][d] /= root;
        }
    }
    // forward: L z = b
    for i in 0..n {
        for d in 1..4 {
            if i >= d {
                rhs[i] -= band[i - d][d] * rhs[i - d];
            }
        }
        rhs[i] /= band[i][0];
    }
    // back: L^T x = z
    for i in (0..n).rev() {
        for d in 1..4 {
            if i + d < n {
                rhs[i] -= band[i][d] * rhs[i + d];
            }
        }
        rhs[i] /= band[i][0];
    }
    Ok(rhs)
}

/// Sorts by `y`, averaging `x` over coincident `y` values.
fn merge_ties(ys: &[f64], xs: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if ys.len() != xs.len() {
        return Err(Error::InvalidArgument("x and y lengths differ".into()));
    }
    if ys.iter().chain(xs).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut pairs: Vec<(f64, f64)> = ys.iter().copied().zip(xs.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let (mut ty, mut tx, mut tw) = (Vec::new(), Vec::new(), Vec::<f64>::new());
    for (y, x) in pairs {
        match ty.last() {
            Some(&last) if y - last <= TIE_EPS => {
                let i = tw.len() - 1;
                let w = tw[i] + 1.0;
                tx[i] += (x - tx[i]) / w;
                tw[i] = w;
            }
            _ => {
                ty.push(y);
                tx.push(x);
                tw.push(1.0);
            }
        }
    }
    Ok((ty, tx, tw))
}

/// A fitted lane centerline.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterlineFit {
    /// `CENTERLINE_SAMPLES` vertices `(f(y), y)` at uniform `y` over the data.
    pub centerline: Polyline,
    /// Lateral residuals `x_i - f(y_i)` of every input point, input order.
    pub residuals: Vec<f64>,
    /// True when fewer than four distinct `y` values forced a straight-line
    /// least-squares fit.
    pub degraded: bool,
}

/// Fits `x = f(y)` through the samples of every track in a lane.
pub fn fit_centerline(tracks: &[&Track], smoothing: f64) -> Result<CenterlineFit> {
    let pts: Vec<PlanarPoint> = tracks.iter().flat_map(|t| t.points()).collect();
    fit_centerline_points(&pts, smoothing)
}

/// Fits over all points and samples the centerline across their full
/// longitudinal range.
pub fn fit_centerline_points(points: &[PlanarPoint], smoothing: f64) -> Result<CenterlineFit> {
    fit_centerline_span(points, smoothing, None)
}

/// Like [`fit_centerline_points`], but samples the centerline only over
/// `span` (clipped to the data range) when one is given.
pub fn fit_centerline_span(
    points: &[PlanarPoint],
    smoothing: f64,
    span: Option<(f64, f64)>,
) -> Result<CenterlineFit> {
    let ys: Vec<f64> = points.iter().map(|p| p.y).collect();
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let (ty, tx, tw) = merge_ties(&ys, &xs)?;
    if ty.len() < 2 {
        return Err(Error::InsufficientData(
            "centerline needs at least two distinct longitudinal positions".into(),
        ));
    }
    let (mut y_lo, mut y_hi) = (ty[0], ty[ty.len() - 1]);
    if let Some((lo, hi)) = span {
        let (lo, hi) = (lo.max(y_lo), hi.min(y_hi));
        if hi - lo > TIE_EPS {
            (y_lo, y_hi) = (lo, hi);
        }
    }

    let (f, degraded): (alloc::boxed::Box<dyn Fn(f64) -> f64>, bool) = if ty.len() < 4 {
        let (a, b) = weighted_line(&ty, &tx, &tw);
        (alloc::boxed::Box::new(move |y| a + b * y), true)
    } else {
        let intervals = (ty.len() - 3).clamp(1, MAX_KNOT_INTERVALS);
        let spline = SmoothingSpline::fit_weighted(&ty, &tx, &tw, smoothing, intervals)?;
        (alloc::boxed::Box::new(move |y| spline.eval(y)), false)
    };

    let n = CENTERLINE_SAMPLES;
    let vertices: Vec<PlanarPoint> = (0..n)
        .map(|i| {
            let y = if i == n - 1 {
                y_hi
            } else {
                y_lo + (y_hi - y_lo) * i as f64 / (n - 1) as f64
            };
            PlanarPoint::new(f(y), y)
        })
        .collect();
    let residuals = points.iter().map(|p| p.x - f(p.y)).collect();
    Ok(CenterlineFit {
        centerline: Polyline::new(vertices)?,
        residuals,
        degraded,
    })
}

/// Weighted least-squares line `x = a + b y`.
fn weighted_line(ys: &[f64], xs: &[f64], ws: &[f64]) -> (f64, f64) {
    let sw: f64 = ws.iter().sum();
    let my = ys.iter().zip(ws).map(|(y, w)| y * w).sum::<f64>() / sw;
    let mx = xs.iter().zip(ws).map(|(x, w)| x * w).sum::<f64>() / sw;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for ((y, x), w) in ys.iter().zip(xs).zip(ws) {
        syy += w * (y - my) * (y - my);
        sxy += w * (y - my) * (x - mx);
    }
    let b = if syy > 0.0 { sxy / syy } else { 0.0 };
    (mx - b * my, b)
}
