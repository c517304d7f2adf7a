//! Rectangular linear assignment via a forward auction with epsilon scaling.
//!
//! Rows are agents, columns are objects, and the solver minimizes the total
//! matched cost. The returned assignment carries a certificate: its cost is
//! within `rows * eps_final` of the optimum, which makes the result exactly
//! optimal for integer-valued costs whenever `eps_final < 1/rows`.

use crate::error::{Error, Result};

/// Dense non-negative cost matrix with `rows <= cols`.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid_argument(
                "cost matrix must have at least one row and column",
            ));
        }
        if rows > cols {
            return Err(Error::invalid_argument(format!(
                "cost matrix needs rows <= cols, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::invalid_argument(format!(
                "cost data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if data.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::invalid_argument(
                "cost entries must be finite and non-negative",
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    fn max_entry(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

/// An injective row -> column matching with its total cost and the
/// suboptimality bound certified by the solver.
#[derive(Debug, Clone)]
pub struct AssignmentResult {
    matches: Vec<usize>,
    total_cost: f64,
    eps_bound: f64,
}

impl AssignmentResult {
    /// Column assigned to each row.
    pub fn matches(&self) -> &[usize] {
        &self.matches
    }

    pub fn assigned_col(&self, row: usize) -> usize {
        self.matches[row]
    }

    pub fn total_cost(&self) -> f64 {
        self.total_cost
    }

    /// The result's cost is at most `optimum + eps_bound`.
    pub fn eps_bound(&self) -> f64 {
        self.eps_bound
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }
}

const MAX_BIDS_PER_PHASE: usize = 1_000_000;

/// Solves the rectangular assignment problem by epsilon-scaled forward
/// auction: the phase epsilon starts at `max_entry / 4` and divides by 5
/// until it reaches the target epsilon. Prices persist across phases,
/// assignments reset. A phase exceeding the bid cap reports a stall instead
/// of spinning.
///
/// Rectangular inputs are padded to square with zero-cost dummy rows. The
/// epsilon-CS certificate needs the final assignment and the optimum to
/// cover the same column set (their price sums must cancel), which padding
/// restores; the phase epsilon shrinks by `rows/cols` so the returned bound
/// is still `rows * eps_final` over the original problem.
pub fn auction_assign(cost: &CostMatrix, eps_final: f64) -> Result<AssignmentResult> {
    if !(eps_final > 0.0) || !eps_final.is_finite() {
        return Err(Error::invalid_argument(format!(
            "eps_final must be a positive finite scalar, got {eps_final}"
        )));
    }
    let rows = cost.rows();
    let cols = cost.cols();
    let eps_run = eps_final * rows as f64 / cols as f64;

    let get = |r: usize, c: usize| if r < rows { cost.get(r, c) } else { 0.0 };

    let mut phases = Vec::new();
    let mut eps = cost.max_entry() / 4.0;
    while eps > eps_run {
        phases.push(eps);
        eps /= 5.0;
    }
    phases.push(eps_run);

    let mut prices = vec![0.0f64; cols];
    let mut row_of_col: Vec<Option<usize>> = vec![None; cols];
    let mut col_of_row: Vec<Option<usize>> = vec![None; cols];

    for &phase_eps in &phases {
        row_of_col.fill(None);
        col_of_row.fill(None);
        let mut unassigned: Vec<usize> = (0..cols).rev().collect();
        let mut bids = 0usize;

        while let Some(r) = unassigned.pop() {
            bids += 1;
            if bids > MAX_BIDS_PER_PHASE {
                return Err(Error::SolverStalled { bids });
            }

            // Benefit of column c for row r is -cost - price; track the best
            // and second best to size the bid.
            let mut best_col = 0usize;
            let mut best_val = f64::NEG_INFINITY;
            let mut second_val = f64::NEG_INFINITY;
            for (c, &price) in prices.iter().enumerate() {
                let v = -get(r, c) - price;
                if v > best_val {
                    second_val = best_val;
                    best_val = v;
                    best_col = c;
                } else if v > second_val {
                    second_val = v;
                }
            }
            let increment = if second_val.is_finite() {
                best_val - second_val + phase_eps
            } else {
                phase_eps
            };
            prices[best_col] += increment;

            if let Some(prev) = row_of_col[best_col] {
                col_of_row[prev] = None;
                unassigned.push(prev);
            }
            row_of_col[best_col] = Some(r);
            col_of_row[r] = Some(best_col);
        }
    }

    let matches: Vec<usize> = col_of_row[..rows]
        .iter()
        .map(|c| c.expect("auction left a row unassigned"))
        .collect();
    let total_cost = matches
        .iter()
        .enumerate()
        .map(|(r, &c)| cost.get(r, c))
        .sum();
    Ok(AssignmentResult {
        matches,
        total_cost,
        eps_bound: rows as f64 * eps_final,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force_min(cost: &CostMatrix) -> f64 {
        // Enumerates all injective row->col maps; fine for tiny matrices.
        fn rec(cost: &CostMatrix, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == cost.rows() {
                *best = best.min(acc);
                return;
            }
            for c in 0..cost.cols() {
                if !used[c] {
                    used[c] = true;
                    rec(cost, row + 1, used, acc + cost.get(row, c), best);
                    used[c] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(cost, 0, &mut vec![false; cost.cols()], 0.0, &mut best);
        best
    }

    #[test]
    fn one_by_one() {
        let cost = CostMatrix::new(1, 1, vec![3.5]).unwrap();
        let res = auction_assign(&cost, 1e-9).unwrap();
        assert_eq!(res.matches(), &[0]);
        assert_eq!(res.total_cost(), 3.5);
    }

    #[test]
    fn two_by_two_unique_optimum() {
        let cost = CostMatrix::new(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        let res = auction_assign(&cost, 1e-6).unwrap();
        assert_eq!(res.matches(), &[0, 1]);
        assert_eq!(res.total_cost(), 2.0);
    }

    #[test]
    fn rejects_bad_shapes_and_eps() {
        assert!(CostMatrix::new(3, 2, vec![0.0; 6]).is_err());
        assert!(CostMatrix::new(2, 2, vec![0.0; 3]).is_err());
        assert!(CostMatrix::new(1, 1, vec![-1.0]).is_err());
        let cost = CostMatrix::new(1, 1, vec![1.0]).unwrap();
        assert!(auction_assign(&cost, 0.0).is_err());
    }

    #[test]
    fn matches_bruteforce_within_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..40 {
            let cost =
                CostMatrix::from_fn(6, 6, |_, _| rng.random_range(0.0..10.0)).unwrap();
            let res = auction_assign(&cost, 1e-7).unwrap();
            let opt = brute_force_min(&cost);
            assert!(res.total_cost() <= opt + res.eps_bound());
            assert!(res.total_cost() >= opt - 1e-12);
        }
    }

    #[test]
    fn integer_costs_exact_below_one_over_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..40 {
            let cost =
                CostMatrix::from_fn(5, 5, |_, _| rng.random_range(0..50) as f64).unwrap();
            let res = auction_assign(&cost, 0.19).unwrap(); // 0.19 < 1/5
            assert_eq!(res.total_cost(), brute_force_min(&cost));
        }
    }

    #[test]
    fn rectangular_leaves_columns_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cost = CostMatrix::from_fn(4, 9, |_, _| rng.random_range(0.0..4.0)).unwrap();
        let res = auction_assign(&cost, 1e-7).unwrap();
        let mut cols = res.matches().to_vec();
        cols.sort_unstable();
        cols.dedup();
        assert_eq!(cols.len(), 4); // injective
        let opt = brute_force_min(&cost);
        assert!(res.total_cost() <= opt + res.eps_bound());
    }
}
