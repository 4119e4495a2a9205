//! Piecewise-linear curves with exact breakpoint arithmetic.
//!
//! One type serves three roles: concave revenue curves `q -> q F_D(q)`,
//! concave ex-ante curves `f(q)` of a single MDP, and convex optimality
//! curves `y -> V_y(s)` used for fair indices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adjacent slopes closer than this (relative to their magnitude) are merged.
pub const SLOPE_TOL: f64 = 1e-9;
const X_TOL: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Concave,
    Convex,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    bp: Vec<(f64, f64)>,
    shape: Shape,
}

fn slope_tol(a: f64, b: f64) -> f64 {
    SLOPE_TOL * 1f64.max(a.abs()).max(b.abs())
}

fn seg_slope(a: (f64, f64), b: (f64, f64)) -> f64 {
    (b.1 - a.1) / (b.0 - a.0)
}

fn interp(a: (f64, f64), b: (f64, f64), x: f64) -> f64 {
    if x == b.0 {
        return b.1;
    }
    a.1 + (x - a.0) * seg_slope(a, b)
}

/// Drops near-duplicate abscissae and merges collinear runs.
fn simplify(bp: &mut Vec<(f64, f64)>) {
    bp.dedup_by(|b, a| (b.0 - a.0).abs() <= X_TOL * 1f64.max(a.0.abs()));
    if bp.len() < 3 {
        return;
    }
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(bp.len());
    for &p in bp.iter() {
        while out.len() >= 2 {
            let a = out[out.len() - 2];
            let b = out[out.len() - 1];
            let s1 = seg_slope(a, b);
            let s2 = seg_slope(b, p);
            if (s1 - s2).abs() < slope_tol(s1, s2) {
                out.pop();
            } else {
                break;
            }
        }
        out.push(p);
    }
    *bp = out;
}

/// Indices of the points on the upper concave hull, left to right.
///
/// Points must be sorted by `x`; for equal `x` only the highest is kept.
pub fn upper_hull_indices(points: &[(f64, f64)]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::new();
    for (i, &p) in points.iter().enumerate() {
        if let Some(&last) = hull.last() {
            let q = points[last];
            if (p.0 - q.0).abs() <= X_TOL * 1f64.max(q.0.abs()) {
                if p.1 > q.1 {
                    hull.pop();
                } else {
                    continue;
                }
            }
        }
        while hull.len() >= 2 {
            let a = points[hull[hull.len() - 2]];
            let b = points[hull[hull.len() - 1]];
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    hull
}

impl PiecewiseLinear {
    /// Validated constructor; collinear breakpoints are merged.
    pub fn new(bp: Vec<(f64, f64)>, shape: Shape) -> Result<Self> {
        if bp.is_empty() {
            return Err(Error::EmptyCurve);
        }
        for (i, w) in bp.windows(2).enumerate() {
            if !(w[1].0 > w[0].0) {
                return Err(Error::NonIncreasingBreakpoints(i + 1));
            }
        }
        if bp.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return Err(Error::invalid("/bp", "non-finite breakpoint"));
        }
        let curve = Self::build(bp, shape);
        curve.check_shape()?;
        Ok(curve)
    }

    pub(crate) fn build(mut bp: Vec<(f64, f64)>, shape: Shape) -> Self {
        simplify(&mut bp);
        PiecewiseLinear { bp, shape }
    }

    pub fn line(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::build(vec![(x0, y0), (x1, y1)], Shape::Concave)
    }

    pub fn constant(lo: f64, hi: f64, c: f64) -> Self {
        Self::build(vec![(lo, c), (hi, c)], Shape::Concave)
    }

    fn check_shape(&self) -> Result<()> {
        let s = self.slopes();
        for w in s.windows(2) {
            let tol = slope_tol(w[0], w[1]);
            let ok = match self.shape {
                Shape::Concave => w[1] <= w[0] + tol,
                Shape::Convex => w[1] >= w[0] - tol,
            };
            if !ok {
                return Err(Error::WrongShape {
                    expected: match self.shape {
                        Shape::Concave => "concave",
                        Shape::Convex => "convex",
                    },
                    before: w[0],
                    after: w[1],
                });
            }
        }
        Ok(())
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.bp
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.bp[0].0, self.bp[self.bp.len() - 1].0)
    }

    pub fn slopes(&self) -> Vec<f64> {
        self.bp.windows(2).map(|w| seg_slope(w[0], w[1])).collect()
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        let tol = 1e-12 * 1f64.max(x.abs());
        if !(x >= lo - tol && x <= hi + tol) {
            return Err(Error::OutOfDomain { x, lo, hi });
        }
        Ok(self.eval_extended(x.clamp(lo, hi)))
    }

    /// Evaluates with the first and last segments extended linearly.
    pub fn eval_extended(&self, x: f64) -> f64 {
        let bp = &self.bp;
        if bp.len() == 1 {
            return bp[0].1;
        }
        let i = bp.partition_point(|p| p.0 < x);
        let seg = i.clamp(1, bp.len() - 1);
        if i < bp.len() && bp[i].0 == x {
            return bp[i].1;
        }
        interp(bp[seg - 1], bp[seg], x)
    }

    pub fn shift_add(&self, c: f64) -> Self {
        PiecewiseLinear {
            bp: self.bp.iter().map(|&(x, y)| (x, y + c)).collect(),
            shape: self.shape,
        }
    }

    /// Pointwise running maximum from the left.
    pub fn clip_monotone_hull(&self) -> Self {
        let mut out = vec![self.bp[0]];
        let mut best = self.bp[0].1;
        for w in self.bp.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b.1 > best {
                if a.1 < best {
                    let xc = a.0 + (best - a.1) / seg_slope(a, b);
                    out.push((xc, best));
                }
                out.push(b);
                best = b.1;
            } else {
                out.push((b.0, best));
            }
        }
        Self::build(out, self.shape)
    }

    /// Smallest `x` at which the curve attains its maximum.
    pub fn argmax(&self) -> f64 {
        let mut best = self.bp[0];
        for &p in &self.bp[1..] {
            if p.1 > best.1 {
                best = p;
            }
        }
        best.0
    }

    /// Pointwise maximum of two curves on the same domain.
    pub fn max_pointwise(&self, other: &Self) -> Self {
        let mut xs: Vec<f64> = self.bp.iter().chain(&other.bp).map(|p| p.0).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let mut out = Vec::with_capacity(xs.len() * 2);
        let mut prev: Option<(f64, f64)> = None;
        for &x in &xs {
            let d = self.eval_extended(x) - other.eval_extended(x);
            if let Some((px, pd)) = prev {
                if (pd < 0.0 && d > 0.0) || (pd > 0.0 && d < 0.0) {
                    let xc = px + (x - px) * pd / (pd - d);
                    out.push((xc, self.eval_extended(xc).max(other.eval_extended(xc))));
                }
            }
            out.push((x, self.eval_extended(x).max(other.eval_extended(x))));
            prev = Some((x, d));
        }
        Self::build(out, self.shape)
    }

    /// `constant + sum_j w_j * curve_j` on the union of breakpoints.
    pub fn weighted_sum(terms: &[(f64, &PiecewiseLinear)], constant: f64, shape: Shape) -> Self {
        let mut xs: Vec<f64> = terms.iter().flat_map(|(_, c)| c.bp.iter().map(|p| p.0)).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let bp = xs
            .into_iter()
            .map(|x| {
                let y = terms.iter().fold(constant, |acc, (w, c)| acc + w * c.eval_extended(x));
                (x, y)
            })
            .collect();
        Self::build(bp, shape)
    }

    /// Concave hull of the pointwise maximum of `curves` together with `points`.
    pub fn upper_concave_envelope(curves: &[&PiecewiseLinear], points: &[(f64, f64)]) -> Result<Self> {
        let mut all: Vec<(f64, f64)> = curves
            .iter()
            .flat_map(|c| c.bp.iter().copied())
            .chain(points.iter().copied())
            .collect();
        if all.is_empty() {
            return Err(Error::EmptyInput);
        }
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
        let hull = upper_hull_indices(&all);
        Ok(Self::build(hull.into_iter().map(|i| all[i]).collect(), Shape::Concave))
    }

    /// `h(x) = max { sum_j p_j f_j(x_j) : sum_j p_j x_j = x }` for concave `f_j`.
    pub fn budget_merge(weighted: &[(f64, &PiecewiseLinear)]) -> Result<Self> {
        let order = MergeOrder::new(weighted)?;
        let mut bp = vec![order.start];
        let mut cur = order.start;
        for seg in &order.segments {
            cur = (cur.0 + seg.width, cur.1 + seg.width * seg.slope);
            bp.push(cur);
        }
        Ok(Self::build(bp, Shape::Concave))
    }

    /// Per-child abscissae `x_j` realising `budget_merge(weighted)` at `x`.
    pub fn budget_split(weighted: &[(f64, &PiecewiseLinear)], x: f64) -> Result<Vec<f64>> {
        let order = MergeOrder::new(weighted)?;
        let mut xs: Vec<f64> = weighted.iter().map(|(_, c)| c.domain().0).collect();
        let mut remaining = x - order.start.0;
        for seg in &order.segments {
            if remaining <= 0.0 {
                break;
            }
            let take = remaining.min(seg.width);
            xs[seg.child] = if take >= seg.width {
                seg.end_x
            } else {
                seg.begin_x + take / weighted[seg.child].0
            };
            remaining -= take;
        }
        Ok(xs)
    }

    /// Smallest `y` with `curve(y) = y` for a curve with slopes at most 1.
    ///
    /// The first and last segments are extended when the crossing lies
    /// outside the stored domain.
    pub fn root_of_curve_minus_identity(&self) -> Result<f64> {
        let slopes = self.slopes();
        if let Some(&s) = slopes.iter().find(|&&s| s > 1.0 + SLOPE_TOL) {
            return Err(Error::SlopeBound(s));
        }
        let gap = |p: (f64, f64)| p.1 - p.0;
        let tol = |p: (f64, f64)| 1e-12 * 1f64.max(p.0.abs()).max(p.1.abs());
        let first = self.bp[0];
        if gap(first) <= tol(first) {
            let m0 = slopes.first().copied().unwrap_or(0.0);
            if gap(first) < -tol(first) && m0 < 1.0 - SLOPE_TOL {
                return Ok(first.0 + gap(first) / (1.0 - m0));
            }
            return Ok(first.0);
        }
        for w in self.bp.windows(2) {
            let (a, b) = (w[0], w[1]);
            if gap(b) <= tol(b) {
                if gap(b) >= -tol(b) {
                    return Ok(b.0);
                }
                let m = seg_slope(a, b);
                return Ok((a.0 + gap(a) / (1.0 - m)).clamp(a.0, b.0));
            }
        }
        let last = self.bp[self.bp.len() - 1];
        let m = slopes.last().copied().unwrap_or(0.0);
        if m >= 1.0 - SLOPE_TOL {
            return Err(Error::Unsupported(format!(
                "curve stays above the identity (gap {} with final slope {m})",
                gap(last)
            )));
        }
        Ok(last.0 + gap(last) / (1.0 - m))
    }
}

struct MergeSegment {
    child: usize,
    slope: f64,
    width: f64,
    begin_x: f64,
    end_x: f64,
}

struct MergeOrder {
    start: (f64, f64),
    segments: Vec<MergeSegment>,
}

impl MergeOrder {
    fn new(weighted: &[(f64, &PiecewiseLinear)]) -> Result<Self> {
        if weighted.is_empty() {
            return Err(Error::EmptyInput);
        }
        let total: f64 = weighted.iter().map(|w| w.0).sum();
        if weighted.iter().any(|w| !(w.0 > 0.0)) || total > 1.0 + 1e-9 {
            return Err(Error::BadWeights(total));
        }
        let mut start = (0.0, 0.0);
        let mut segments = Vec::new();
        for (child, &(p, curve)) in weighted.iter().enumerate() {
            if curve.shape != Shape::Concave {
                return Err(Error::WrongShape {
                    expected: "concave",
                    before: f64::NAN,
                    after: f64::NAN,
                });
            }
            curve.check_shape()?;
            let b0 = curve.bp[0];
            start.0 += p * b0.0;
            start.1 += p * b0.1;
            for w in curve.bp.windows(2) {
                segments.push(MergeSegment {
                    child,
                    slope: seg_slope(w[0], w[1]),
                    width: p * (w[1].0 - w[0].0),
                    begin_x: w[0].0,
                    end_x: w[1].0,
                });
            }
        }
        // Stable: equal slopes keep child order, then segment order.
        segments.sort_by(|a, b| b.slope.total_cmp(&a.slope));
        Ok(MergeOrder { start, segments })
    }
}
