//! Point-set distances: Chamfer distance and exact small-instance EMD.

use crate::assign::{auction_assign, CostMatrix};
use crate::error::{Error, Result};
use crate::geom::{dist2, PointCloud};

/// Default size cap for [`emd_exact`].
pub const EMD_DEFAULT_CAP: usize = 512;

/// Chamfer distance: the mean squared distance from each point of `a` to its
/// nearest point of `b`, plus the symmetric term. Zero iff the two sets
/// cover each other exactly.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> f64 {
    let (value, _, _) = chamfer_with_argmins(a.points(), b.points());
    value
}

/// Chamfer distance over raw point slices, also reporting per-point nearest
/// neighbor indices (`a -> b` and `b -> a`). The argmin arrays are what a
/// gradient step needs; ties resolve to the lowest index.
pub(crate) fn chamfer_with_argmins(
    a: &[[f64; 3]],
    b: &[[f64; 3]],
) -> (f64, Vec<usize>, Vec<usize>) {
    assert!(!a.is_empty() && !b.is_empty());
    let mut nn_ab = vec![0usize; a.len()];
    let mut nn_ba = vec![0usize; b.len()];
    let mut sum_ab = 0.0;
    let mut min_ba = vec![f64::INFINITY; b.len()];

    for (i, pa) in a.iter().enumerate() {
        let mut best = f64::INFINITY;
        let mut best_j = 0usize;
        for (j, pb) in b.iter().enumerate() {
            let d = dist2(pa, pb);
            if d < best {
                best = d;
                best_j = j;
            }
            if d < min_ba[j] {
                min_ba[j] = d;
                nn_ba[j] = i;
            }
        }
        nn_ab[i] = best_j;
        sum_ab += best;
    }
    let sum_ba: f64 = min_ba.iter().sum();
    let value = sum_ab / a.len() as f64 + sum_ba / b.len() as f64;
    (value, nn_ab, nn_ba)
}

/// Exact Earth Mover's Distance between equal-size sets: the minimal mean
/// squared distance over all bijections, solved with the auction assignment
/// solver. Restricted to small instances (`<=` [`EMD_DEFAULT_CAP`] points).
pub fn emd_exact(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    emd_exact_capped(a, b, EMD_DEFAULT_CAP)
}

/// [`emd_exact`] with an explicit size cap.
pub fn emd_exact_capped(a: &PointCloud, b: &PointCloud, cap: usize) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid_argument(format!(
            "emd needs equal sizes, got {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() > cap {
        return Err(Error::invalid_argument(format!(
            "emd instance size {} exceeds cap {cap}",
            a.len()
        )));
    }
    let n = a.len();
    let mut max_entry = 0.0f64;
    let cost = CostMatrix::from_fn(n, n, |i, j| {
        let d = dist2(&a.point(i), &b.point(j));
        max_entry = max_entry.max(d);
        d
    })?;
    let eps = (max_entry * 1e-12).max(1e-15) / n as f64;
    let result = auction_assign(&cost, eps)?;
    Ok(result.total_cost() / n as f64)
}
