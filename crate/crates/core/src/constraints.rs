//! Downward-closed feasibility families and their ex-ante polytopes.

use serde::{Deserialize, Serialize};

use crate::error::{guard, Error, Result};
use crate::plc::PiecewiseLinear;
use crate::simplex::{simplex_solve, Lp, Relation};

/// Brute-force structural checks (k-system ratio, matroid test) run up to this size.
pub const BRUTE_FORCE_N: usize = 12;
const SIZE_TOL: f64 = 1e-12;

/// A set of element indices (at most 64 elements).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Subset(pub u64);

impl Subset {
    pub const EMPTY: Subset = Subset(0);

    pub fn from_indices(it: impl IntoIterator<Item = usize>) -> Self {
        Subset(it.into_iter().fold(0, |m, i| m | 1 << i))
    }

    pub fn full(n: usize) -> Self {
        Subset(if n >= 64 { u64::MAX } else { (1u64 << n) - 1 })
    }

    pub fn contains(self, i: usize) -> bool {
        i < 64 && self.0 >> i & 1 == 1
    }

    pub fn with(self, i: usize) -> Self {
        Subset(self.0 | 1 << i)
    }

    pub fn without(self, i: usize) -> Self {
        Subset(self.0 & !(1 << i))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset_of(self, other: Subset) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn intersect(self, other: Subset) -> Self {
        Subset(self.0 & other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut m = self.0;
        std::iter::from_fn(move || {
            if m == 0 {
                None
            } else {
                let i = m.trailing_zeros() as usize;
                m &= m - 1;
                Some(i)
            }
        })
    }

    pub fn max_index(self) -> Option<usize> {
        (self.0 != 0).then(|| 63 - self.0.leading_zeros() as usize)
    }
}

impl Serialize for Subset {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RawConstraint {
    Single,
    UniformMatroid { k: usize },
    PartitionMatroid { parts: Vec<Vec<usize>>, caps: Vec<usize> },
    Explicit { feasible: Vec<Vec<usize>> },
    Knapsack { sizes: Vec<f64> },
    KSystem { feasible: Vec<Vec<usize>>, k: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConstraint", into = "RawConstraint")]
pub enum Constraint {
    SingleSelection,
    UniformMatroid {
        k: usize,
    },
    /// Elements outside every part are unconstrained.
    PartitionMatroid {
        parts: Vec<Subset>,
        caps: Vec<usize>,
    },
    /// Downward closure of the listed sets; only the maximal ones are kept.
    ExplicitFamily {
        maximal: Vec<Subset>,
    },
    Knapsack {
        sizes: Vec<f64>,
    },
    KSystem {
        maximal: Vec<Subset>,
        k: usize,
    },
}

fn set_of(v: &[usize], pointer: &str) -> Result<Subset> {
    if let Some(&i) = v.iter().find(|&&i| i >= 64) {
        return Err(Error::invalid(
            pointer,
            format!("element {i} exceeds the 64-element limit"),
        ));
    }
    Ok(Subset::from_indices(v.iter().copied()))
}

fn maximal_sets(family: &[Vec<usize>], pointer: &str) -> Result<Vec<Subset>> {
    let mut sets = Vec::with_capacity(family.len());
    for (j, s) in family.iter().enumerate() {
        sets.push(set_of(s, &format!("{pointer}/{j}"))?);
    }
    let mut out: Vec<Subset> = sets
        .iter()
        .copied()
        .filter(|&s| !sets.iter().any(|&t| t != s && s.is_subset_of(t)))
        .collect();
    out.sort();
    out.dedup();
    if out.is_empty() {
        out.push(Subset::EMPTY);
    }
    Ok(out)
}

impl TryFrom<RawConstraint> for Constraint {
    type Error = Error;
    fn try_from(raw: RawConstraint) -> Result<Self> {
        Ok(match raw {
            RawConstraint::Single => Constraint::SingleSelection,
            RawConstraint::UniformMatroid { k } => Constraint::UniformMatroid { k },
            RawConstraint::PartitionMatroid { parts, caps } => {
                if parts.len() != caps.len() {
                    return Err(Error::invalid(
                        "/constraint/caps",
                        format!("{} parts but {} caps", parts.len(), caps.len()),
                    ));
                }
                let mut seen = Subset::EMPTY;
                let mut sets = Vec::with_capacity(parts.len());
                for (j, p) in parts.iter().enumerate() {
                    let s = set_of(p, &format!("/constraint/parts/{j}"))?;
                    if !s.intersect(seen).is_empty() {
                        return Err(Error::invalid(format!("/constraint/parts/{j}"), "parts overlap"));
                    }
                    seen = Subset(seen.0 | s.0);
                    sets.push(s);
                }
                Constraint::PartitionMatroid { parts: sets, caps }
            }
            RawConstraint::Explicit { feasible } => Constraint::ExplicitFamily {
                maximal: maximal_sets(&feasible, "/constraint/feasible")?,
            },
            RawConstraint::Knapsack { sizes } => {
                if let Some(j) = sizes.iter().position(|&s| !(s > 0.0 && s <= 1.0)) {
                    return Err(Error::invalid(
                        format!("/constraint/sizes/{j}"),
                        "sizes must lie in (0, 1]",
                    ));
                }
                Constraint::Knapsack { sizes }
            }
            RawConstraint::KSystem { feasible, k } => {
                let maximal = maximal_sets(&feasible, "/constraint/feasible")?;
                let c = Constraint::KSystem { maximal, k };
                c.verify_k_system()?;
                c
            }
        })
    }
}

impl From<Constraint> for RawConstraint {
    fn from(c: Constraint) -> Self {
        let lists = |sets: &[Subset]| sets.iter().map(|s| s.iter().collect()).collect();
        match c {
            Constraint::SingleSelection => RawConstraint::Single,
            Constraint::UniformMatroid { k } => RawConstraint::UniformMatroid { k },
            Constraint::PartitionMatroid { parts, caps } => RawConstraint::PartitionMatroid {
                parts: lists(&parts),
                caps,
            },
            Constraint::ExplicitFamily { maximal } => RawConstraint::Explicit {
                feasible: lists(&maximal),
            },
            Constraint::Knapsack { sizes } => RawConstraint::Knapsack { sizes },
            Constraint::KSystem { maximal, k } => RawConstraint::KSystem {
                feasible: lists(&maximal),
                k,
            },
        }
    }
}

/// `q*` and `sum_i R_i(q*_i)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExAnteSolution {
    pub q: Vec<f64>,
    pub value: f64,
}

impl Constraint {
    pub fn explicit(family: &[&[usize]]) -> Result<Self> {
        RawConstraint::Explicit {
            feasible: family.iter().map(|s| s.to_vec()).collect(),
        }
        .try_into()
    }

    pub fn k_system(family: &[&[usize]], k: usize) -> Result<Self> {
        RawConstraint::KSystem {
            feasible: family.iter().map(|s| s.to_vec()).collect(),
            k,
        }
        .try_into()
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Constraint::SingleSelection => "single",
            Constraint::UniformMatroid { .. } => "uniform_matroid",
            Constraint::PartitionMatroid { .. } => "partition_matroid",
            Constraint::ExplicitFamily { .. } => "explicit",
            Constraint::Knapsack { .. } => "knapsack",
            Constraint::KSystem { .. } => "k_system",
        }
    }

    /// Errors when the constraint mentions elements beyond `n` or has the wrong length.
    pub fn check_arity(&self, n: usize) -> Result<()> {
        let within = |s: &Subset| s.max_index().is_none_or(|m| m < n);
        match self {
            Constraint::Knapsack { sizes } if sizes.len() != n => Err(Error::ArityMismatch {
                expected: n,
                found: sizes.len(),
            }),
            Constraint::PartitionMatroid { parts, .. } if !parts.iter().all(within) => {
                Err(Error::invalid("/constraint/parts", format!("element index >= n = {n}")))
            }
            Constraint::ExplicitFamily { maximal } | Constraint::KSystem { maximal, .. }
                if !maximal.iter().all(within) =>
            {
                Err(Error::invalid(
                    "/constraint/feasible",
                    format!("element index >= n = {n}"),
                ))
            }
            _ if n > 64 => Err(Error::IndexOutOfRange { index: n - 1, n: 64 }),
            _ => Ok(()),
        }
    }

    /// Membership test without range checking.
    pub fn feasible(&self, s: Subset) -> bool {
        match self {
            Constraint::SingleSelection => s.len() <= 1,
            Constraint::UniformMatroid { k } => s.len() <= *k,
            Constraint::PartitionMatroid { parts, caps } => {
                parts.iter().zip(caps).all(|(p, &c)| s.intersect(*p).len() <= c)
            }
            Constraint::ExplicitFamily { maximal } | Constraint::KSystem { maximal, .. } => {
                maximal.iter().any(|&m| s.is_subset_of(m))
            }
            Constraint::Knapsack { sizes } => {
                s.iter().all(|i| i < sizes.len()) && s.iter().map(|i| sizes[i]).sum::<f64>() <= 1.0 + SIZE_TOL
            }
        }
    }

    pub fn is_feasible(&self, n: usize, s: Subset) -> Result<bool> {
        if let Some(i) = s.max_index().filter(|&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        Ok(self.feasible(s))
    }

    pub fn can_extend(&self, n: usize, s: Subset, i: usize) -> Result<bool> {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        Ok(!s.contains(i) && self.is_feasible(n, s.with(i))?)
    }

    /// True for the kinds that are matroids by construction.
    pub fn is_structural_matroid(&self) -> bool {
        matches!(
            self,
            Constraint::SingleSelection | Constraint::UniformMatroid { .. } | Constraint::PartitionMatroid { .. }
        )
    }

    /// Matroid test; brute force for explicit families.
    pub fn is_matroid(&self) -> Result<bool> {
        match self {
            Constraint::ExplicitFamily { maximal } | Constraint::KSystem { maximal, .. } => {
                Ok(family_ratio(maximal)? <= 1.0)
            }
            Constraint::Knapsack { .. } => Ok(false),
            _ => Ok(true),
        }
    }

    /// Size of a largest feasible subset of `s`.
    pub fn rank(&self, s: Subset) -> Result<usize> {
        match self {
            Constraint::SingleSelection => Ok(s.len().min(1)),
            Constraint::UniformMatroid { k } => Ok(s.len().min(*k)),
            Constraint::PartitionMatroid { parts, caps } => {
                let covered = parts.iter().fold(0u64, |m, p| m | p.0);
                let free = Subset(s.0 & !covered).len();
                Ok(free
                    + parts
                        .iter()
                        .zip(caps)
                        .map(|(p, &c)| s.intersect(*p).len().min(c))
                        .sum::<usize>())
            }
            Constraint::ExplicitFamily { maximal } | Constraint::KSystem { maximal, .. } => {
                if !self.is_matroid()? {
                    return Err(Error::NotMatroid);
                }
                Ok(maximal.iter().map(|&m| s.intersect(m).len()).max().unwrap_or(0))
            }
            Constraint::Knapsack { .. } => Err(Error::NotMatroid),
        }
    }

    fn verify_k_system(&self) -> Result<()> {
        if let Constraint::KSystem { maximal, k } = self {
            if *k == 0 {
                return Err(Error::KSystemViolated { k: 0, ratio: f64::NAN });
            }
            let n = maximal.iter().filter_map(|m| m.max_index()).max().map_or(0, |m| m + 1);
            if n <= BRUTE_FORCE_N {
                let ratio = family_ratio(maximal)?;
                if ratio > *k as f64 + 1e-12 {
                    return Err(Error::KSystemViolated { k: *k, ratio });
                }
            }
        }
        Ok(())
    }

    /// `max_{q in P(F)} sum_i curve_i(q_i)` for concave curves on `[0, 1]`.
    pub fn maximize_separable_concave(&self, curves: &[PiecewiseLinear]) -> Result<ExAnteSolution> {
        let n = curves.len();
        self.check_arity(n)?;
        let q = match self {
            Constraint::SingleSelection => pour(curves, |q, i| (1.0 - q[i]).min(1.0 - q.iter().sum::<f64>())),
            Constraint::UniformMatroid { k } => {
                let k = *k as f64;
                pour(curves, |q, i| (1.0 - q[i]).min(k - q.iter().sum::<f64>()))
            }
            Constraint::PartitionMatroid { parts, caps } => pour(curves, |q, i| {
                let mut room = 1.0 - q[i];
                if let Some((p, &c)) = parts.iter().zip(caps).find(|(p, _)| p.contains(i)) {
                    room = room.min(c as f64 - p.iter().map(|j| q[j]).sum::<f64>());
                }
                room
            }),
            Constraint::Knapsack { sizes } => knapsack_fractional(curves, sizes),
            Constraint::ExplicitFamily { maximal } | Constraint::KSystem { maximal, .. } => hull_lp(curves, maximal)?,
        };
        Ok(solution(curves, q))
    }
}

fn solution(curves: &[PiecewiseLinear], q: Vec<f64>) -> ExAnteSolution {
    let value = curves.iter().zip(&q).map(|(c, &x)| c.eval_extended(x)).sum();
    ExAnteSolution { q, value }
}

/// Largest ratio between the sizes of two maximal feasible subsets of a common set.
fn family_ratio(maximal: &[Subset]) -> Result<f64> {
    let n = maximal.iter().filter_map(|m| m.max_index()).max().map_or(0, |m| m + 1);
    guard("brute-force family check (elements)", n as u128, BRUTE_FORCE_N as u128)?;
    let size = 1usize << n;
    let feasible: Vec<bool> = (0..size as u64)
        .map(|s| maximal.iter().any(|&m| Subset(s).is_subset_of(m)))
        .collect();
    let mut worst = 1.0f64;
    for s in 0..size as u64 {
        let (mut lo, mut hi) = (usize::MAX, 0usize);
        // Enumerate submasks of s.
        let mut t = s;
        loop {
            if feasible[t as usize] {
                let maximal_in_s = Subset(s & !t).iter().all(|i| !feasible[(t | 1 << i) as usize]);
                if maximal_in_s {
                    let l = t.count_ones() as usize;
                    lo = lo.min(l);
                    hi = hi.max(l);
                }
            }
            if t == 0 {
                break;
            }
            t = (t - 1) & s;
        }
        if hi > 0 {
            worst = worst.max(if lo == 0 { f64::INFINITY } else { hi as f64 / lo as f64 });
        }
    }
    Ok(worst)
}

struct Seg {
    elem: usize,
    slope: f64,
    width: f64,
}

/// Positive-slope segments in pouring order: slope descending, then element index.
fn positive_segments(curves: &[PiecewiseLinear]) -> Vec<Seg> {
    let mut segs = Vec::new();
    for (i, c) in curves.iter().enumerate() {
        for w in c.breakpoints().windows(2) {
            let slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
            if slope > 0.0 {
                segs.push(Seg {
                    elem: i,
                    slope,
                    width: w[1].0 - w[0].0,
                });
            }
        }
    }
    segs.sort_by(|a, b| b.slope.total_cmp(&a.slope));
    segs
}

/// Polymatroid greedy: pour along the steepest remaining segment as far as
/// `room(q, i)` allows; a blocked element stays blocked.
fn pour(curves: &[PiecewiseLinear], room: impl Fn(&[f64], usize) -> f64) -> Vec<f64> {
    let mut q = vec![0.0; curves.len()];
    let mut blocked = vec![false; curves.len()];
    for seg in positive_segments(curves) {
        if blocked[seg.elem] {
            continue;
        }
        let r = room(&q, seg.elem).max(0.0);
        let inc = seg.width.min(r);
        q[seg.elem] += inc;
        if inc < seg.width {
            blocked[seg.elem] = true;
        }
    }
    q
}

/// Polymatroid greedy against an arbitrary rank oracle (`2^n` rank calls per step).
pub fn polymatroid_greedy(curves: &[PiecewiseLinear], rank: impl Fn(Subset) -> usize) -> Result<ExAnteSolution> {
    let n = curves.len();
    guard("rank-oracle greedy (elements)", n as u128, 16)?;
    let ranks: Vec<f64> = (0..1u64 << n).map(|s| rank(Subset(s)) as f64).collect();
    let q = pour(curves, |q, i| {
        let mut room = f64::INFINITY;
        for s in 0..1u64 << n {
            if Subset(s).contains(i) {
                let load: f64 = Subset(s).iter().map(|j| q[j]).sum();
                room = room.min(ranks[s as usize] - load);
            }
        }
        room
    });
    Ok(solution(curves, q))
}

fn knapsack_fractional(curves: &[PiecewiseLinear], sizes: &[f64]) -> Vec<f64> {
    let mut segs = positive_segments(curves);
    segs.sort_by(|a, b| (b.slope / sizes[b.elem]).total_cmp(&(a.slope / sizes[a.elem])));
    let mut q = vec![0.0; curves.len()];
    let mut budget = 1.0;
    for seg in segs {
        if budget <= 0.0 {
            break;
        }
        let s = sizes[seg.elem];
        let inc = seg.width.min(budget / s);
        q[seg.elem] += inc;
        budget -= inc * s;
    }
    q
}

/// LP over convex weights of maximal sets plus per-segment fill variables.
fn hull_lp(curves: &[PiecewiseLinear], maximal: &[Subset]) -> Result<Vec<f64>> {
    let n = curves.len();
    let segs: Vec<Seg> = {
        let mut v = Vec::new();
        for (i, c) in curves.iter().enumerate() {
            for w in c.breakpoints().windows(2) {
                let slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                if slope > 0.0 {
                    v.push(Seg {
                        elem: i,
                        slope,
                        width: w[1].0 - w[0].0,
                    });
                }
            }
        }
        v
    };
    if segs.is_empty() {
        return Ok(vec![0.0; n]);
    }
    let ns = maximal.len();
    let nv = ns + segs.len();
    let mut obj = vec![0.0; nv];
    for (j, s) in segs.iter().enumerate() {
        obj[ns + j] = s.slope;
    }
    let mut lp = Lp::new(obj);
    let mut simplex_row = vec![0.0; nv];
    simplex_row[..ns].fill(1.0);
    lp.row(simplex_row, Relation::Le, 1.0);
    for i in 0..n {
        let mut row = vec![0.0; nv];
        let mut any = false;
        for (j, s) in segs.iter().enumerate() {
            if s.elem == i {
                row[ns + j] = 1.0;
                any = true;
            }
        }
        if !any {
            continue;
        }
        for (k, m) in maximal.iter().enumerate() {
            if m.contains(i) {
                row[k] = -1.0;
            }
        }
        lp.row(row, Relation::Le, 0.0);
    }
    for (j, s) in segs.iter().enumerate() {
        let mut row = vec![0.0; nv];
        row[ns + j] = 1.0;
        lp.row(row, Relation::Le, s.width);
    }
    let sol = simplex_solve(&lp)?;
    let mut q = vec![0.0; n];
    for (j, s) in segs.iter().enumerate() {
        q[s.elem] += sol.x[ns + j];
    }
    for x in &mut q {
        *x = x.clamp(0.0, 1.0);
    }
    Ok(q)
}
