//! Dense two-phase simplex for the small fairness LPs.
//!
//! Solves `minimize c·x subject to A·x >= b, x >= 0` with `b >= 0`.
//! Problem sizes here are at most a couple dozen rows, so a plain tableau
//! with Bland's rule (which precludes cycling) is entirely adequate.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const REDUCED_COST_TOL: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-11;
const FEASIBILITY_TOL: f64 = 1e-7;
const MAX_PIVOTS: usize = 10_000;

struct Tableau {
    // rows: m constraint rows then one objective row; cols: variables + rhs.
    a: Vec<Vec<f64>>,
    basis: Vec<usize>,
    m: usize,
    cols: usize,
}

impl Tableau {
    fn rhs(&self, row: usize) -> f64 {
        self.a[row][self.cols - 1]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let scale = self.a[row][col];
        for v in self.a[row].iter_mut() {
            *v /= scale;
        }
        for r in 0..self.a.len() {
            if r == row {
                continue;
            }
            let factor = self.a[r][col];
            if factor != 0.0 {
                for cidx in 0..self.cols {
                    self.a[r][cidx] -= factor * self.a[row][cidx];
                }
            }
        }
        self.basis[row] = col;
    }

    /// Run Bland-rule pivots until the objective row has no negative
    /// reduced cost among `allowed` columns.
    fn optimize(&mut self, allowed: &[bool]) -> Result<()> {
        for _ in 0..MAX_PIVOTS {
            let obj_row = self.m;
            // Bland: the entering variable is the lowest-index column with
            // a negative reduced cost.
            let entering = (0..self.cols - 1).find(|&j| {
                allowed[j] && self.a[obj_row][j] < -REDUCED_COST_TOL
            });
            let Some(col) = entering else {
                return Ok(());
            };
            // Ratio test; ties go to the smallest basis variable index
            // (the second half of Bland's rule).
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.m {
                let coef = self.a[r][col];
                if coef > PIVOT_TOL {
                    let ratio = self.rhs(r) / coef;
                    let better = match leave {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - PIVOT_TOL
                                || (ratio <= lratio + PIVOT_TOL
                                    && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((row, _)) = leave else {
                return Err(Error::Infeasible(
                    "LP is unbounded below; the fairness problem is malformed".into(),
                ));
            };
            self.pivot(row, col);
        }
        Err(Error::Infeasible(
            "simplex exceeded its pivot limit".into(),
        ))
    }
}

/// Minimize `c·x` subject to `A·x >= b`, `x >= 0` (requires `b >= 0`).
pub(crate) fn minimize(c: &[f64], a: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let m = a.nrows();
    let n = a.ncols();
    if c.len() != n || b.len() != m {
        return Err(Error::Dimension(format!(
            "LP shapes disagree: c has {}, A is {m}x{n}, b has {}",
            c.len(),
            b.len()
        )));
    }
    if b.iter().any(|&v| v < 0.0) {
        return Err(Error::Argument(
            "simplex expects nonnegative right-hand sides".into(),
        ));
    }

    // Columns: n structural, m surplus, m artificial, then rhs.
    let surplus0 = n;
    let art0 = n + m;
    let cols = n + 2 * m + 1;
    let mut rows = Vec::with_capacity(m + 1);
    for i in 0..m {
        // Normalize each row by its largest coefficient so the pivot
        // tolerances are scale-free.
        let row_scale = (0..n)
            .map(|j| a[(i, j)].abs())
            .fold(b[i].abs(), f64::max)
            .max(f64::MIN_POSITIVE);
        let mut row = vec![0.0; cols];
        for j in 0..n {
            row[j] = a[(i, j)] / row_scale;
        }
        row[surplus0 + i] = -1.0 / row_scale;
        row[art0 + i] = 1.0;
        row[cols - 1] = b[i] / row_scale;
        rows.push(row);
    }
    // Phase-1 objective: minimize the sum of artificials. Price out the
    // initial (artificial) basis so reduced costs start consistent; the
    // rhs column sits past the artificial block and is included here.
    let mut obj = vec![0.0; cols];
    for row in rows.iter().take(m) {
        for (j, v) in obj.iter_mut().enumerate() {
            if !(art0..art0 + m).contains(&j) {
                *v -= row[j];
            }
        }
    }
    rows.push(obj);

    let mut tab = Tableau {
        a: rows,
        basis: (art0..art0 + m).collect(),
        m,
        cols,
    };
    let allowed: Vec<bool> = (0..cols - 1).map(|j| j < art0).collect();
    tab.optimize(&allowed)?;
    let phase1 = -tab.a[m][cols - 1];
    if phase1 > FEASIBILITY_TOL {
        return Err(Error::Infeasible(format!(
            "no point satisfies the SINR requirements (phase-1 residual {phase1:.3e})"
        )));
    }

    // Drive any degenerate artificial out of the basis where possible.
    for r in 0..m {
        if tab.basis[r] >= art0 {
            if let Some(col) =
                (0..art0).find(|&j| tab.a[r][j].abs() > PIVOT_TOL)
            {
                tab.pivot(r, col);
            }
        }
    }

    // Phase 2: swap in the real objective, priced out against the basis.
    let mut obj = vec![0.0; cols];
    for (j, &cj) in c.iter().enumerate() {
        obj[j] = cj;
    }
    for r in 0..m {
        let bv = tab.basis[r];
        if bv < n {
            let factor = obj[bv];
            if factor != 0.0 {
                for j in 0..cols {
                    obj[j] -= factor * tab.a[r][j];
                }
            }
        }
    }
    tab.a[m] = obj;
    tab.optimize(&allowed)?;

    let mut x = vec![0.0; n];
    for r in 0..m {
        if tab.basis[r] < n {
            x[tab.basis[r]] = tab.rhs(r).max(0.0);
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn hand_lp_diagonal() {
        // min p1 + p2 s.t. p1 >= 1, 4 p2 >= 1: p = (1, 0.25).
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]);
        let x = minimize(&[1.0, 1.0], &a, &[1.0, 1.0]).unwrap();
        assert_relative_eq!(x[0], 1.0, max_relative = 1e-9);
        assert_relative_eq!(x[1], 0.25, max_relative = 1e-9);
    }

    #[test]
    fn hand_lp_coupled() {
        // min p1 + p2 s.t. p1 + p2 >= 1, p1 + 3 p2 >= 1.
        // Optimal cost 1 along the first facet.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 3.0]);
        let x = minimize(&[1.0, 1.0], &a, &[1.0, 1.0]).unwrap();
        let cost = x[0] + x[1];
        assert_relative_eq!(cost, 1.0, max_relative = 1e-9);
        assert!(x[0] + x[1] >= 1.0 - 1e-9);
        assert!(x[0] + 3.0 * x[1] >= 1.0 - 1e-9);
    }

    #[test]
    fn degenerate_duplicate_rows() {
        let a = DMatrix::from_row_slice(
            3,
            2,
            &[1.0, 2.0, 1.0, 2.0, 2.0, 1.0],
        );
        let x = minimize(&[3.0, 1.0], &a, &[1.0, 1.0, 1.0]).unwrap();
        for r in 0..3 {
            let lhs: f64 = (0..2).map(|j| a[(r, j)] * x[j]).sum();
            assert!(lhs >= 1.0 - 1e-9);
        }
    }

    #[test]
    fn matches_vertex_enumeration_oracle() {
        let mut rng = crate::channel::RandomSource::new(27, 0);
        for _ in 0..40 {
            let k = 4;
            let mut entries = vec![0.0; k * k];
            for (idx, v) in entries.iter_mut().enumerate() {
                let (i, j) = (idx / k, idx % k);
                *v = if i == j {
                    1.0 + 3.0 * rng.random::<f64>()
                } else if rng.random::<f64>() < 0.5 {
                    rng.random::<f64>()
                } else {
                    0.0
                };
            }
            let a = DMatrix::from_row_slice(k, k, &entries);
            let c: Vec<f64> = (0..k).map(|_| 0.3 + rng.random::<f64>()).collect();
            let b = vec![1.0; k];
            let x = minimize(&c, &a, &b).unwrap();
            let cost: f64 = c.iter().zip(&x).map(|(c, x)| c * x).sum();
            let oracle_cost = oracle::min_cost_lp_by_vertices(&a, &c)
                .expect("vertex oracle found no feasible vertex");
            assert!(
                (cost - oracle_cost).abs() <= 1e-8 * oracle_cost.max(1.0),
                "simplex {cost} vs vertex oracle {oracle_cost}"
            );
        }
    }
}
