//! Dense two-phase primal simplex with Bland's rule.
//!
//! Solves `max c.x` subject to rows `a.x (<=|=|>=) b` and `x >= 0`.

use crate::error::{Error, Result};

const EPS: f64 = 1e-10;
const MAX_PIVOTS: usize = 50_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lp {
    pub objective: Vec<f64>,
    pub rows: Vec<(Vec<f64>, Relation, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub value: f64,
}

impl Lp {
    pub fn new(objective: Vec<f64>) -> Self {
        Lp {
            objective,
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, a: Vec<f64>, rel: Relation, b: f64) -> &mut Self {
        self.rows.push((a, rel, b));
        self
    }
}

struct Tableau {
    /// `m` constraint rows followed by the objective row; last column is the rhs.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.t[r][self.cols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let pv = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= pv;
        }
        let prow = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(&prow) {
                    *v -= f * p;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Maximises the objective row over columns `allowed`; the objective
    /// row stores `-reduced cost`.
    fn optimise(&mut self, allowed: usize) -> Result<()> {
        let m = self.basis.len();
        for _ in 0..MAX_PIVOTS {
            let obj = &self.t[m];
            let Some(enter) = (0..allowed).find(|&j| obj[j] < -EPS) else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..m {
                let a = self.t[r][enter];
                if a > EPS {
                    let ratio = self.rhs(r) / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - EPS || (ratio <= lratio + EPS && self.basis[r] < self.basis[lr]) {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return Err(Error::Lp("unbounded")),
                Some((r, _)) => self.pivot(r, enter),
            }
        }
        Err(Error::Lp("not converging"))
    }
}

pub fn simplex_solve(lp: &Lp) -> Result<LpSolution> {
    let n = lp.objective.len();
    let m = lp.rows.len();
    if lp.rows.iter().any(|r| r.0.len() != n) {
        return Err(Error::ArityMismatch {
            expected: n,
            found: lp.rows.iter().map(|r| r.0.len()).find(|&l| l != n).unwrap_or(0),
        });
    }
    // Normalise to b >= 0.
    let rows: Vec<(Vec<f64>, Relation, f64)> = lp
        .rows
        .iter()
        .map(|(a, rel, b)| {
            if *b < 0.0 {
                let flipped = match rel {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
                (a.iter().map(|v| -v).collect(), flipped, -b)
            } else {
                (a.clone(), *rel, *b)
            }
        })
        .collect();
    let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Relation::Le).count();
    let real = n + n_slack;
    let cols = real + n_art;
    let mut t = vec![vec![0.0; cols + 1]; m + 1];
    let mut basis = vec![0; m];
    let (mut s, mut a) = (n, real);
    for (i, (coef, rel, b)) in rows.iter().enumerate() {
        t[i][..n].copy_from_slice(coef);
        t[i][cols] = *b;
        match rel {
            Relation::Le => {
                t[i][s] = 1.0;
                basis[i] = s;
                s += 1;
            }
            Relation::Ge => {
                t[i][s] = -1.0;
                s += 1;
                t[i][a] = 1.0;
                basis[i] = a;
                a += 1;
            }
            Relation::Eq => {
                t[i][a] = 1.0;
                basis[i] = a;
                a += 1;
            }
        }
    }
    let mut tab = Tableau { t, basis, cols };

    if n_art > 0 {
        // Phase one: maximise -sum(artificials).
        for j in real..cols {
            tab.t[m][j] = 1.0;
        }
        for r in 0..m {
            if tab.basis[r] >= real {
                let row = tab.t[r].clone();
                for (v, x) in tab.t[m].iter_mut().zip(&row) {
                    *v -= x;
                }
            }
        }
        tab.optimise(cols)?;
        if tab.t[m][cols] < -1e-7 * 1f64.max(rows.iter().map(|r| r.2).fold(0.0, f64::max)) {
            return Err(Error::Lp("infeasible"));
        }
        // Drive zero-level artificials out of the basis where possible.
        for r in 0..m {
            if tab.basis[r] >= real {
                if let Some(c) = (0..real).find(|&c| tab.t[r][c].abs() > EPS) {
                    tab.pivot(r, c);
                }
            }
        }
        for row in tab.t.iter_mut() {
            for v in &mut row[real..cols] {
                *v = 0.0;
            }
        }
    }

    // Phase two.
    for v in tab.t[m].iter_mut() {
        *v = 0.0;
    }
    for j in 0..n {
        tab.t[m][j] = -lp.objective[j];
    }
    for r in 0..m {
        let b = tab.basis[r];
        let f = tab.t[m][b];
        if f != 0.0 {
            let row = tab.t[r].clone();
            for (v, x) in tab.t[m].iter_mut().zip(&row) {
                *v -= f * x;
            }
        }
    }
    tab.optimise(real)?;
    let mut x = vec![0.0; n];
    for r in 0..m {
        if tab.basis[r] < n {
            x[tab.basis[r]] = tab.rhs(r).max(0.0);
        }
    }
    let value = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
    Ok(LpSolution { x, value })
}
