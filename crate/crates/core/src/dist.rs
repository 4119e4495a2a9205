//! Finite real-valued distributions and their quantile revenue curves.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plc::{PiecewiseLinear, Shape};

/// A finite distribution with atoms sorted by value, largest first.
///
/// Duplicate values are merged and every stored probability is strictly
/// positive; the probabilities sum to one up to rounding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDist")]
pub struct DiscreteDist {
    atoms: Vec<(f64, f64)>,
}

#[derive(Deserialize)]
struct RawDist {
    atoms: Vec<(f64, f64)>,
}

impl TryFrom<RawDist> for DiscreteDist {
    type Error = Error;
    fn try_from(raw: RawDist) -> Result<Self> {
        DiscreteDist::normalize(raw.atoms)
    }
}

impl DiscreteDist {
    /// Merges duplicate values, rescales to unit mass and sorts descending.
    pub fn normalize(raw: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut atoms: Vec<(f64, f64)> = Vec::new();
        for (index, (value, prob)) in raw.into_iter().enumerate() {
            if !value.is_finite() || !prob.is_finite() {
                return Err(Error::NonFiniteAtom { index, value, prob });
            }
            if prob < 0.0 {
                return Err(Error::NegativeProbability { index, prob });
            }
            atoms.push((value, prob));
        }
        if atoms.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        atoms.sort_by(|a, b| b.0.total_cmp(&a.0));
        atoms.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        atoms.retain(|a| a.1 > 0.0);
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if atoms.is_empty() || !(total > 0.0) {
            return Err(Error::ZeroMass);
        }
        for a in &mut atoms {
            a.1 /= total;
        }
        Ok(DiscreteDist { atoms })
    }

    pub fn point(value: f64) -> Self {
        DiscreteDist {
            atoms: vec![(value, 1.0)],
        }
    }

    /// `value` with probability `p`, zero otherwise.
    pub fn bernoulli(value: f64, p: f64) -> Result<Self> {
        Self::normalize([(value, p), (0.0, 1.0 - p)])
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(v, p)| v * p).sum()
    }

    pub fn max_support(&self) -> f64 {
        self.atoms[0].0
    }

    pub fn min_support(&self) -> f64 {
        self.atoms[self.atoms.len() - 1].0
    }

    pub fn negated(&self) -> Self {
        let mut atoms: Vec<(f64, f64)> = self.atoms.iter().map(|&(v, p)| (-v, p)).collect();
        atoms.reverse();
        DiscreteDist { atoms }
    }

    /// `R_D(q) = q F_D(q)`: the mass-weighted value of the top `q` quantiles.
    ///
    /// An atom straddling the cut contributes only its included share.
    pub fn top_quantile_revenue(&self, q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::QuantileOutOfRange(q));
        }
        let mut left = q;
        let mut acc = 0.0;
        for &(v, p) in &self.atoms {
            if left <= 0.0 {
                break;
            }
            let take = p.min(left);
            acc += take * v;
            left -= take;
        }
        Ok(acc)
    }

    /// Conditional mean of the top `q` quantiles, `F_D(q)`; `q` must be positive.
    pub fn top_quantile_mean(&self, q: f64) -> Result<f64> {
        if !(q > 0.0) {
            return Err(Error::QuantileOutOfRange(q));
        }
        Ok(self.top_quantile_revenue(q)? / q)
    }

    /// The concave curve `q -> R_D(q)` on `[0, 1]`.
    pub fn revenue_curve(&self) -> PiecewiseLinear {
        let mut bp = Vec::with_capacity(self.atoms.len() + 1);
        let (mut x, mut y) = (0.0, 0.0);
        bp.push((x, y));
        for (i, &(v, p)) in self.atoms.iter().enumerate() {
            x = if i + 1 == self.atoms.len() { 1.0 } else { x + p };
            y += p * v;
            bp.push((x, y));
        }
        PiecewiseLinear::build(bp, Shape::Concave)
    }

    /// `D | X < t`, or `None` when no mass lies strictly below `t`.
    pub fn condition_below(&self, t: f64) -> Option<Self> {
        let kept: Vec<(f64, f64)> = self.atoms.iter().copied().filter(|a| a.0 < t).collect();
        if kept.is_empty() {
            return None;
        }
        Self::normalize(kept).ok()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for &(v, p) in &self.atoms {
            acc += p;
            if u < acc {
                return v;
            }
        }
        self.min_support()
    }
}
