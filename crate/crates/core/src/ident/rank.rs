//! Nonnegative-rank estimation: linear-algebraic lower bounds, explicit
//! small-rank factorizations, and multiplicative-update search for upper
//! bounds.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics;

/// Options for the factorization search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankOptions {
    /// Random restarts per candidate inner dimension.
    pub restarts: usize,
    /// Multiplicative-update iterations per restart.
    pub iterations: usize,
    /// Relative Frobenius residual counted as an exact factorization.
    pub residual_tol: f64,
    /// Relative singular-value threshold for the linear rank.
    pub rank_rel_tol: f64,
    /// Seed for factorization restarts.
    pub seed: u64,
}

impl Default for RankOptions {
    fn default() -> Self {
        RankOptions {
            restarts: 50,
            iterations: 2000,
            residual_tol: 1e-7,
            rank_rel_tol: 1e-9,
            seed: 0x5eed,
        }
    }
}

/// Bracketed nonnegative rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NonnegRankEstimate {
    /// Linear-algebraic rank: a lower bound.
    pub lower: usize,
    /// Smallest certified factorization size found.
    pub upper: usize,
    /// True iff the bounds meet.
    pub exact: bool,
}

fn check_nonneg(t: &DMatrix<f64>) -> Result<()> {
    if t.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::Domain("matrix has negative or non-finite entries".into()));
    }
    Ok(())
}

/// Estimate the nonnegative rank of a matrix up to 32x32.
///
/// The lower bound is the numerical rank. Upper-bound certificates, best
/// first: rank-0/1/2 matrices admit explicit constructions (nonnegative
/// rank equals rank up to 2); otherwise multiplicative updates search the
/// smallest p <= p_max reaching the residual tolerance; the trivial
/// identity factorization caps everything at min(m, n).
pub fn estimate_nonneg_rank(
    t: &DMatrix<f64>,
    p_max: usize,
    opts: &RankOptions,
) -> Result<NonnegRankEstimate> {
    let (m, n) = t.shape();
    if m > 32 || n > 32 {
        return Err(Error::Domain(format!("matrix is {m}x{n}; estimator accepts up to 32x32")));
    }
    check_nonneg(t)?;
    let lower = numerics::numeric_rank(t, opts.rank_rel_tol);
    if lower == 0 {
        return Ok(NonnegRankEstimate { lower: 0, upper: 0, exact: true });
    }
    let mut upper = m.min(n);
    if lower <= 2 {
        if numerics::rank2_nonneg_factorization(t).is_some() {
            upper = lower;
        }
    } else {
        for p in lower..upper.min(p_max.max(lower)) {
            let (res, _, _) = numerics::nmf(t, p, opts.restarts, opts.iterations, opts.seed);
            if res < opts.residual_tol {
                upper = p;
                break;
            }
        }
    }
    Ok(NonnegRankEstimate { lower, upper, exact: lower == upper })
}

/// Three-way decision used by the bottleneck criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankBelow {
    /// Certified: nonnegative rank < threshold.
    Yes,
    /// Certified: nonnegative rank >= threshold (linear rank already is).
    No,
    /// Bounds straddle the threshold.
    Indeterminate,
}

/// Decide whether rank_+(t) < threshold, conservatively: `Yes` requires a
/// certified factorization below the threshold, `No` requires the linear
/// lower bound to reach it. Proportional columns are merged first; this
/// changes neither bound.
pub fn nonneg_rank_below(t: &DMatrix<f64>, threshold: usize, opts: &RankOptions) -> Result<RankBelow> {
    check_nonneg(t)?;
    let t = merge_proportional_columns(t);
    let (m, n) = t.shape();
    if m.min(n) < threshold {
        return Ok(RankBelow::Yes); // identity factorization certificate
    }
    let lower = numerics::numeric_rank(&t, opts.rank_rel_tol);
    if lower >= threshold {
        return Ok(RankBelow::No);
    }
    if lower <= 2 && numerics::rank2_nonneg_factorization(&t).is_some() {
        return Ok(RankBelow::Yes);
    }
    for p in lower..threshold {
        let (res, _, _) = numerics::nmf(&t, p, opts.restarts, opts.iterations, opts.seed);
        if res < opts.residual_tol {
            return Ok(RankBelow::Yes);
        }
    }
    Ok(RankBelow::Indeterminate)
}

/// Sum together columns that are positive multiples of one another.
/// Nonnegative rank is invariant under this compression: the shared
/// direction can carry the combined weight in any factorization.
fn merge_proportional_columns(t: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = t.shape();
    let mut groups: Vec<(nalgebra::DVector<f64>, nalgebra::DVector<f64>)> = Vec::new();
    for j in 0..n {
        let col = t.column(j).into_owned();
        let norm = col.norm();
        if norm == 0.0 {
            continue;
        }
        let dir = &col / norm;
        match groups.iter_mut().find(|(d, _)| (d - &dir).amax() < 1e-12) {
            Some((_, acc)) => *acc += col,
            None => groups.push((dir, col)),
        }
    }
    if groups.is_empty() {
        return DMatrix::zeros(m, 1);
    }
    DMatrix::from_fn(m, groups.len(), |i, j| groups[j].1[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dm(r: usize, c: usize, d: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, d)
    }

    #[test]
    fn rank_one_outer_product_is_exact() {
        let u = [2.0, 1.0, 0.5];
        let v = [1.0, 3.0];
        let t = DMatrix::from_fn(3, 2, |i, j| u[i] * v[j]);
        let est = estimate_nonneg_rank(&t, 4, &RankOptions::default()).unwrap();
        assert_eq!(est, NonnegRankEstimate { lower: 1, upper: 1, exact: true });
    }

    #[test]
    fn rank_two_is_exact_via_construction() {
        let t = dm(3, 4, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 5.0, 2.0, 0.5, 1.5, 2.0, 0.5]);
        let est = estimate_nonneg_rank(&t, 4, &RankOptions::default()).unwrap();
        assert_eq!(est, NonnegRankEstimate { lower: 2, upper: 2, exact: true });
    }

    #[test]
    fn generic_product_brackets_at_three() {
        // 4x4 built as B(4x3) C(3x4) with generic nonnegative entries.
        let b = dm(4, 3, &[0.9, 0.1, 0.3, 0.2, 0.8, 0.15, 0.4, 0.3, 0.7, 0.05, 0.6, 0.2]);
        let c = dm(3, 4, &[0.5, 0.2, 0.9, 0.1, 0.3, 0.7, 0.2, 0.6, 0.8, 0.1, 0.3, 0.9]);
        let t = &b * &c;
        let est = estimate_nonneg_rank(&t, 4, &RankOptions::default()).unwrap();
        assert_eq!(est.lower, 3);
        assert!(est.upper <= 3, "upper {}", est.upper);
        assert!(est.exact);
    }

    #[test]
    fn negative_entries_rejected() {
        let t = dm(2, 2, &[1.0, -0.5, 0.0, 1.0]);
        assert!(estimate_nonneg_rank(&t, 2, &RankOptions::default()).is_err());
    }

    #[test]
    fn rank_below_decisions() {
        let opts = RankOptions::default();
        // Full-rank 3x3 identity-ish: not below 3.
        let t = dm(3, 3, &[0.5, 0.1, 0.0, 0.0, 0.4, 0.1, 0.1, 0.0, 0.6]);
        assert_eq!(nonneg_rank_below(&t, 3, &opts).unwrap(), RankBelow::No);
        // Rank-2: below 3.
        let t = dm(3, 4, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 5.0, 2.0, 0.5, 1.5, 2.0, 0.5]);
        assert_eq!(nonneg_rank_below(&t, 3, &opts).unwrap(), RankBelow::Yes);
        // Wide matrix with fewer rows than the threshold: trivially yes.
        let t = dm(2, 5, &[0.1; 10]);
        assert_eq!(nonneg_rank_below(&t, 3, &opts).unwrap(), RankBelow::Yes);
    }

    #[test]
    fn proportional_column_merge_preserves_rank() {
        let t = dm(3, 4, &[1.0, 2.0, 2.0, 0.0, 0.5, 1.0, 1.0, 0.0, 0.2, 0.4, 0.4, 0.0]);
        let merged = merge_proportional_columns(&t);
        assert_eq!(merged.ncols(), 1);
        assert_eq!(numerics::numeric_rank(&merged, 1e-9), 1);
    }
}
