//! Weighted L1 fitting over the probability simplex.
//!
//! Solves `min_c sum_r m_r |p_r - (A c)_r|` subject to `c >= 0`, `sum c = 1`
//! through its dual
//!
//! ```text
//! max  p.y + z   s.t.  A^T y + z 1 + s = delta,  -m <= y <= m,  s >= 0,
//! ```
//!
//! whose basis is only `K x K` (one row per coefficient) no matter how many
//! residual rows there are. The primal coefficients are the simplex
//! multipliers at the optimum. `delta` is a tiny decreasing penalty that
//! breaks ties toward lexicographically smaller coefficient vectors.

use crate::error::{Error, Result};

const TOL: f64 = 1e-12;
const PENALTY: f64 = 1e-11;
const MAX_ITERATIONS: usize = 200_000;
/// Consecutive degenerate pivots before switching to Bland's rule.
const BLAND_AFTER: usize = 50;

#[derive(Debug, Clone)]
pub struct L1Fit {
    pub coefficients: Vec<f64>,
    /// `sum_r m_r |p_r - (A c)_r|` at the returned coefficients.
    pub objective: f64,
    pub iterations: usize,
}

/// Residual rows of the fit: `targets[r] ~ sum_k rows[r][k] c_k`, with
/// multiplicity `weights[r]`.
pub fn l1_fit_simplex(rows: &[Vec<f64>], targets: &[f64], weights: &[f64]) -> Result<L1Fit> {
    let k = rows.first().map(Vec::len).unwrap_or(0);
    if k == 0 {
        return Err(Error::Parameter("fit needs at least one coefficient".into()));
    }
    if rows.len() != targets.len() || rows.len() != weights.len() || rows.iter().any(|r| r.len() != k) {
        return Err(Error::Parameter("fit rows, targets and weights disagree in shape".into()));
    }
    if weights.iter().any(|&w| !(w >= 0.0)) || targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::Parameter("fit weights must be nonnegative and targets finite".into()));
    }
    let mut lp = DualSimplex::new(rows, targets, weights);
    let iterations = lp.solve()?;
    let mut c: Vec<f64> = lp.multipliers().into_iter().map(|v| v.max(0.0)).collect();
    let total: f64 = c.iter().sum();
    if total <= 0.0 {
        return Err(Error::Resource("simplex returned a degenerate multiplier vector".into()));
    }
    c.iter_mut().for_each(|v| *v /= total);
    let objective = l1_objective(rows, targets, weights, &c);
    Ok(L1Fit {
        coefficients: c,
        objective,
        iterations,
    })
}

/// Evaluates the fit objective at `c`.
pub fn l1_objective(rows: &[Vec<f64>], targets: &[f64], weights: &[f64], c: &[f64]) -> f64 {
    rows.iter()
        .zip(targets)
        .zip(weights)
        .map(|((row, t), w)| {
            let fit: f64 = row.iter().zip(c).map(|(a, b)| a * b).sum();
            w * (t - fit).abs()
        })
        .sum()
}

/// Variables: `y_0..y_{R-1}`, then `z`, then slacks `s_0..s_{K-1}`.
struct DualSimplex<'a> {
    rows: &'a [Vec<f64>],
    targets: &'a [f64],
    weights: &'a [f64],
    k: usize,
    r: usize,
    delta: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    x: Vec<f64>,
    binv: Vec<Vec<f64>>,
}

impl<'a> DualSimplex<'a> {
    fn new(rows: &'a [Vec<f64>], targets: &'a [f64], weights: &'a [f64]) -> Self {
        let k = rows[0].len();
        let r = rows.len();
        let delta: Vec<f64> = (0..k).map(|i| PENALTY * (k - i) as f64 / k as f64).collect();
        let mut x = vec![0.0; r + 1 + k];
        // y at its lower bound; A >= 0 keeps the slacks feasible.
        for i in 0..r {
            x[i] = -weights[i];
        }
        for j in 0..k {
            x[r + 1 + j] = delta[j] + (0..r).map(|i| rows[i][j] * weights[i]).sum::<f64>();
        }
        let basis: Vec<usize> = (0..k).map(|j| r + 1 + j).collect();
        let mut is_basic = vec![false; r + 1 + k];
        basis.iter().for_each(|&b| is_basic[b] = true);
        DualSimplex {
            rows,
            targets,
            weights,
            k,
            r,
            delta,
            basis,
            is_basic,
            x,
            binv: Vec::new(),
        }
    }

    fn column(&self, j: usize) -> Vec<f64> {
        if j < self.r {
            self.rows[j].clone()
        } else if j == self.r {
            vec![1.0; self.k]
        } else {
            let mut e = vec![0.0; self.k];
            e[j - self.r - 1] = 1.0;
            e
        }
    }

    fn cost(&self, j: usize) -> f64 {
        if j < self.r {
            self.targets[j]
        } else if j == self.r {
            1.0
        } else {
            0.0
        }
    }

    fn bounds(&self, j: usize) -> (f64, f64) {
        if j < self.r {
            (-self.weights[j], self.weights[j])
        } else if j == self.r {
            (f64::NEG_INFINITY, f64::INFINITY)
        } else {
            (0.0, f64::INFINITY)
        }
    }

    fn refactor(&mut self) -> Result<()> {
        let cols: Vec<Vec<f64>> = self.basis.iter().map(|&b| self.column(b)).collect();
        // B[i][j] = cols[j][i]
        let b: Vec<Vec<f64>> = (0..self.k).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        self.binv = invert(&b).ok_or_else(|| Error::Resource("simplex basis became singular".into()))?;
        // recompute basic values from the nonbasic ones to limit drift
        let mut rhs = self.delta.clone();
        for j in 0..self.x.len() {
            if !self.is_basic[j] && self.x[j] != 0.0 {
                let col = self.column(j);
                for i in 0..self.k {
                    rhs[i] -= col[i] * self.x[j];
                }
            }
        }
        for (i, &bv) in self.basis.iter().enumerate() {
            self.x[bv] = (0..self.k).map(|c| self.binv[i][c] * rhs[c]).sum();
        }
        Ok(())
    }

    /// `pi = c_B B^{-1}`.
    fn multipliers(&self) -> Vec<f64> {
        (0..self.k)
            .map(|c| {
                self.basis
                    .iter()
                    .enumerate()
                    .map(|(i, &bv)| self.cost(bv) * self.binv[i][c])
                    .sum()
            })
            .collect()
    }

    fn solve(&mut self) -> Result<usize> {
        let mut degenerate_run = 0usize;
        for iter in 0..MAX_ITERATIONS {
            self.refactor()?;
            let pi = self.multipliers();
            let bland = degenerate_run >= BLAND_AFTER;
            let mut entering: Option<(usize, f64, f64)> = None;
            for j in 0..self.x.len() {
                if self.is_basic[j] {
                    continue;
                }
                let col = self.column(j);
                let d = self.cost(j) - col.iter().zip(&pi).map(|(a, b)| a * b).sum::<f64>();
                let scale = 1.0 + self.cost(j).abs();
                let (lo, hi) = self.bounds(j);
                let dir = if d > TOL * scale && self.x[j] < hi - TOL {
                    1.0
                } else if d < -TOL * scale && self.x[j] > lo + TOL {
                    -1.0
                } else {
                    continue;
                };
                match entering {
                    None => entering = Some((j, d, dir)),
                    Some(_) if bland => {}
                    Some((_, best, _)) if d.abs() > best.abs() => entering = Some((j, d, dir)),
                    _ => {}
                }
                if bland {
                    break;
                }
            }
            let Some((j, _, dir)) = entering else {
                return Ok(iter);
            };
            let col = self.column(j);
            let w: Vec<f64> = (0..self.k)
                .map(|i| (0..self.k).map(|c| self.binv[i][c] * col[c]).sum())
                .collect();
            let (lo_j, hi_j) = self.bounds(j);
            let mut step = hi_j - lo_j;
            let mut leaving: Option<usize> = None;
            for (i, &bv) in self.basis.iter().enumerate() {
                let rate = -dir * w[i];
                let (lo, hi) = self.bounds(bv);
                let t = if rate < -1e-14 && lo.is_finite() {
                    ((self.x[bv] - lo) / -rate).max(0.0)
                } else if rate > 1e-14 && hi.is_finite() {
                    ((hi - self.x[bv]) / rate).max(0.0)
                } else {
                    continue;
                };
                let better = match leaving {
                    None => t < step,
                    Some(l) => t < step || (t == step && bv < self.basis[l]),
                };
                if better {
                    step = t;
                    leaving = Some(i);
                }
            }
            if !step.is_finite() {
                return Err(Error::Resource("fit dual is unbounded".into()));
            }
            degenerate_run = if step <= TOL { degenerate_run + 1 } else { 0 };
            self.x[j] += dir * step;
            for (i, &bv) in self.basis.iter().enumerate() {
                self.x[bv] -= dir * step * w[i];
            }
            match leaving {
                None => {
                    // bound flip of the entering variable
                    self.x[j] = if dir > 0.0 { hi_j } else { lo_j };
                }
                Some(i) => {
                    let out = self.basis[i];
                    let (lo, hi) = self.bounds(out);
                    self.x[out] = if (self.x[out] - lo).abs() <= (self.x[out] - hi).abs() { lo } else { hi };
                    self.is_basic[out] = false;
                    self.is_basic[j] = true;
                    self.basis[i] = j;
                }
            }
        }
        Err(Error::Resource(format!("simplex did not converge in {MAX_ITERATIONS} iterations")))
    }
}

/// Gauss-Jordan inverse with partial pivoting.
fn invert(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        let p = a[col][col];
        a[col].iter_mut().for_each(|v| *v /= p);
        for row in 0..n {
            if row != col {
                let f = a[row][col];
                if f != 0.0 {
                    let pivot_row = a[col].clone();
                    a[row].iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
                }
            }
        }
    }
    Some(a.into_iter().map(|r| r[n..].to_vec()).collect())
}
