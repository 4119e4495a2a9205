use cics_core::plc::{PiecewiseLinear, Shape};
use proptest::prelude::*;

/// A concave curve starting at `(x0, y0)` with descending slopes.
fn concave(x0: f64, y0: f64, mut segs: Vec<(f64, f64)>) -> PiecewiseLinear {
    segs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut bp = vec![(x0, y0)];
    let (mut x, mut y) = (x0, y0);
    for (slope, width) in segs {
        x += width;
        y += slope * width;
        bp.push((x, y));
    }
    PiecewiseLinear::new(bp, Shape::Concave).unwrap()
}

fn arb_concave() -> impl Strategy<Value = PiecewiseLinear> {
    (-2.0f64..2.0, prop::collection::vec((-3.0f64..3.0, 0.05f64..1.0), 1..5))
        .prop_map(|(y0, segs)| concave(0.0, y0, segs))
}

/// `(slope, width)` runs with equal neighbours merged.
fn slope_runs(mut v: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    v.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (s, w) in v {
        match out.last_mut() {
            Some(last) if (last.0 - s).abs() <= 1e-9 * 1f64.max(s.abs()) => last.1 += w,
            _ => out.push((s, w)),
        }
    }
    out
}

fn runs_of(c: &PiecewiseLinear, scale: f64) -> Vec<(f64, f64)> {
    c.breakpoints()
        .windows(2)
        .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0), scale * (w[1].0 - w[0].0)))
        .collect()
}

proptest! {
    #[test]
    fn budget_merge_keeps_slope_multiset(
        a in arb_concave(), b in arb_concave(), c in arb_concave(), p in 0.05f64..0.9, r in 0.05f64..0.95,
    ) {
        let (p1, p2, p3) = (p, (1.0 - p) * r, (1.0 - p) * (1.0 - r));
        let h = PiecewiseLinear::budget_merge(&[(p1, &a), (p2, &b), (p3, &c)]).unwrap();
        let mut want = runs_of(&a, p1);
        want.extend(runs_of(&b, p2));
        want.extend(runs_of(&c, p3));
        let want = slope_runs(want);
        let got = slope_runs(runs_of(&h, 1.0));
        prop_assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g.0 - w.0).abs() <= 1e-9 * 1f64.max(w.0.abs()));
            prop_assert!((g.1 - w.1).abs() <= 1e-9);
        }
    }

    #[test]
    fn budget_merge_matches_two_curve_search(a in arb_concave(), b in arb_concave(), p in 0.05f64..0.95) {
        let h = PiecewiseLinear::budget_merge(&[(p, &a), (1.0 - p, &b)]).unwrap();
        let (lo, hi) = h.domain();
        let (a0, a1) = a.domain();
        let (b0, b1) = b.domain();
        for k in 0..=50 {
            let x = lo + (hi - lo) * k as f64 / 50.0;
            // Candidates: x1 on a's breakpoints, x2 on b's breakpoints, and a fine grid.
            let mut cands: Vec<f64> = a.breakpoints().iter().map(|q| q.0).collect();
            cands.extend(b.breakpoints().iter().map(|q| (x - (1.0 - p) * q.0) / p));
            cands.extend((0..=1000).map(|i| a0 + (a1 - a0) * i as f64 / 1000.0));
            let mut best = f64::NEG_INFINITY;
            for x1 in cands {
                let x2 = (x - p * x1) / (1.0 - p);
                if x1 < a0 - 1e-12 || x1 > a1 + 1e-12 || x2 < b0 - 1e-12 || x2 > b1 + 1e-12 {
                    continue;
                }
                best = best.max(p * a.eval_extended(x1) + (1.0 - p) * b.eval_extended(x2));
            }
            prop_assert!((h.eval(x).unwrap() - best).abs() <= 1e-6, "x = {}: {} vs {}", x, h.eval(x).unwrap(), best);
        }
    }

    #[test]
    fn envelope_dominates_and_is_tight(
        a in arb_concave(), b in arb_concave(),
        pts in prop::collection::vec((0.0f64..2.0, -3.0f64..3.0), 0..4),
    ) {
        let env = PiecewiseLinear::upper_concave_envelope(&[&a, &b], &pts).unwrap();
        for c in [&a, &b] {
            let (lo, hi) = c.domain();
            for k in 0..=40 {
                let x = lo + (hi - lo) * k as f64 / 40.0;
                prop_assert!(env.eval(x).unwrap() >= c.eval(x).unwrap() - 1e-9);
            }
        }
        for &(x, y) in &pts {
            prop_assert!(env.eval(x).unwrap() >= y - 1e-9);
        }
        // Minimality: every envelope vertex is an input point.
        for &(x, y) in env.breakpoints() {
            let hit = pts.iter().any(|&(px, py)| (px - x).abs() <= 1e-12 && (py - y).abs() <= 1e-9)
                || [&a, &b].iter().any(|c| c.breakpoints().iter().any(|&(cx, cy)| (cx - x).abs() <= 1e-12 && (cy - y).abs() <= 1e-9));
            prop_assert!(hit, "vertex ({}, {}) is not an input point", x, y);
        }
    }

    #[test]
    fn root_crosses_identity(
        y0 in 0.1f64..3.0,
        mut slopes in prop::collection::vec(0.0f64..1.0, 1..5),
        widths in prop::collection::vec(0.2f64..2.0, 5),
    ) {
        slopes.sort_by(f64::total_cmp);
        let mut bp = vec![(0.0, y0)];
        for (s, w) in slopes.iter().zip(&widths) {
            let (x, y) = *bp.last().unwrap();
            bp.push((x + w, y + s * w));
        }
        let curve = PiecewiseLinear::new(bp, Shape::Convex).unwrap();
        let r = curve.root_of_curve_minus_identity().unwrap();
        prop_assert!((curve.eval_extended(r) - r).abs() <= 1e-9);
        let (lo, hi) = curve.domain();
        let d = 1e-6;
        if r - d > lo && r < hi {
            prop_assert!(curve.eval(r - d).unwrap() > r - d);
        }
    }
}

#[test]
fn merge_of_identical_halves_is_the_curve() {
    let f = concave(0.0, 0.0, vec![(2.0, 0.5), (1.0, 0.5)]);
    let h = PiecewiseLinear::budget_merge(&[(0.5, &f), (0.5, &f)]).unwrap();
    for k in 0..=10 {
        let x = k as f64 / 10.0;
        assert!((h.eval(x).unwrap() - f.eval(x).unwrap()).abs() < 1e-12);
    }
}
