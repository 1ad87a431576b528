//! Dense two-phase simplex for `A x = b, x >= 0` with Bland's rule.
//!
//! Phase one adds one artificial variable per row and minimizes their sum.
//! A positive optimum proves infeasibility and the final reduced costs of
//! the artificial columns yield a Farkas multiplier `y` with `A'y <= 0` and
//! `b'y > 0`. Phase two maximizes a linear objective from the feasible basis
//! left behind by phase one, so several objectives can share one phase one.
//!
//! Entering and leaving variables are always chosen by lowest index among
//! the eligible candidates, which rules out cycling and makes every result
//! a deterministic function of the inputs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Reduced costs below `-PRICE_TOL` are treated as improving.
const PRICE_TOL: f64 = 1e-11;
/// Smallest pivot element accepted in the ratio test.
const PIVOT_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub enum PhaseOne {
    Feasible,
    /// `dual` is expressed for the caller's (unflipped) rows.
    Infeasible { dual: DVector<f64>, infeasibility: f64 },
}

#[derive(Debug, Clone)]
pub struct Simplex {
    m: usize,
    n: usize,
    width: usize,
    /// Row-major `m x (n + m + 1)`; the last column is the right-hand side.
    tab: Vec<f64>,
    /// Basic variable of each row; indices `>= n` are artificials.
    basis: Vec<usize>,
    flipped: Vec<bool>,
    /// Reduced-cost row for the current objective (minimization form).
    cost: Vec<f64>,
    pivots: usize,
    pivot_limit: usize,
}

impl Simplex {
    pub fn new(a: &DMatrix<f64>, b: &DVector<f64>) -> Self {
        let (m, n) = a.shape();
        let width = n + m + 1;
        let mut tab = vec![0.0; m * width];
        let mut flipped = vec![false; m];
        for i in 0..m {
            let sign = if b[i] < 0.0 {
                flipped[i] = true;
                -1.0
            } else {
                1.0
            };
            let row = &mut tab[i * width..(i + 1) * width];
            for j in 0..n {
                row[j] = sign * a[(i, j)];
            }
            row[n + i] = 1.0;
            row[width - 1] = sign * b[i];
        }
        Self {
            m,
            n,
            width,
            tab,
            basis: (n..n + m).collect(),
            flipped,
            cost: vec![0.0; width],
            pivots: 0,
            pivot_limit: 50_000 + 50 * (n + m),
        }
    }

    pub fn pivots(&self) -> usize {
        self.pivots
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.tab[i * self.width + j]
    }

    fn pivot(&mut self, row: usize, col: usize) -> Result<()> {
        self.pivots += 1;
        if self.pivots > self.pivot_limit {
            return Err(Error::PivotLimit(self.pivot_limit));
        }
        let w = self.width;
        let inv = 1.0 / self.tab[row * w + col];
        for v in &mut self.tab[row * w..(row + 1) * w] {
            *v *= inv;
        }
        self.tab[row * w + col] = 1.0;
        let (before, rest) = self.tab.split_at_mut(row * w);
        let (pivot_row, after) = rest.split_at_mut(w);
        for other in before.chunks_mut(w).chain(after.chunks_mut(w)) {
            let factor = other[col];
            if factor != 0.0 {
                for (o, p) in other.iter_mut().zip(pivot_row.iter()) {
                    *o -= factor * p;
                }
                other[col] = 0.0;
            }
        }
        let factor = self.cost[col];
        if factor != 0.0 {
            for (o, p) in self.cost.iter_mut().zip(pivot_row.iter()) {
                *o -= factor * p;
            }
            self.cost[col] = 0.0;
        }
        self.basis[row] = col;
        Ok(())
    }

    /// Minimizes the current cost row over columns `< limit`. Returns false if unbounded.
    fn iterate(&mut self, limit: usize) -> Result<bool> {
        loop {
            let Some(col) = (0..limit).find(|&j| self.cost[j] < -PRICE_TOL) else {
                return Ok(true);
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.at(i, col);
                if a > PIVOT_TOL {
                    let ratio = self.at(i, self.width - 1) / a;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((r, br)) => {
                            if ratio < br || (ratio == br && self.basis[i] < self.basis[r]) {
                                Some((i, ratio))
                            } else {
                                Some((r, br))
                            }
                        }
                    };
                }
            }
            match best {
                Some((row, _)) => self.pivot(row, col)?,
                None => return Ok(false),
            }
        }
    }

    /// Sum of artificial values at the current basis.
    fn artificial_sum(&self) -> f64 {
        (0..self.m)
            .filter(|&i| self.basis[i] >= self.n)
            .map(|i| self.at(i, self.width - 1).max(0.0))
            .sum()
    }

    /// Runs phase one. `tol` bounds the accepted sum of artificial values.
    pub fn phase_one(&mut self, tol: f64) -> Result<PhaseOne> {
        let w = self.width;
        self.cost = vec![0.0; w];
        for i in 0..self.m {
            for j in 0..self.n {
                self.cost[j] -= self.at(i, j);
            }
            self.cost[w - 1] -= self.at(i, w - 1);
        }
        self.iterate(self.n)?;
        let infeasibility = self.artificial_sum();
        if infeasibility > tol {
            // Artificial column k has cost 1 and original column e_k, so its
            // reduced cost is 1 - y_k.
            let dual = DVector::from_fn(self.m, |k, _| {
                let y = 1.0 - self.cost[self.n + k];
                if self.flipped[k] {
                    -y
                } else {
                    y
                }
            });
            return Ok(PhaseOne::Infeasible {
                dual,
                infeasibility,
            });
        }
        self.drive_out_artificials()?;
        Ok(PhaseOne::Feasible)
    }

    /// Pivots zero-level artificials out of the basis where a structural
    /// column allows it; rows that remain are linearly dependent.
    fn drive_out_artificials(&mut self) -> Result<()> {
        for i in 0..self.m {
            if self.basis[i] < self.n {
                continue;
            }
            if let Some(col) = (0..self.n).find(|&j| self.at(i, j).abs() > PIVOT_TOL) {
                self.pivot(i, col)?;
            }
        }
        Ok(())
    }

    /// Phase two: maximizes `c'x` over the feasible set found by phase one.
    pub fn maximize(&mut self, c: &[f64]) -> Result<()> {
        assert_eq!(c.len(), self.n);
        let w = self.width;
        self.cost = vec![0.0; w];
        for (j, cj) in c.iter().enumerate() {
            self.cost[j] = -cj;
        }
        for i in 0..self.m {
            let b = self.basis[i];
            if b < self.n {
                let cb = self.cost[b];
                if cb != 0.0 {
                    for j in 0..w {
                        self.cost[j] -= cb * self.tab[i * w + j];
                    }
                }
            }
        }
        if self.iterate(self.n)? {
            Ok(())
        } else {
            Err(Error::Unbounded)
        }
    }

    /// Values of the structural variables at the current basis.
    pub fn solution(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for i in 0..self.m {
            let b = self.basis[i];
            if b < self.n {
                x[b] = self.at(i, self.width - 1).max(0.0);
            }
        }
        x
    }
}
