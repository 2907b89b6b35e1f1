//! Conditional-independence tests: exact on enumerated tables, G-squared
//! on samples.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::JointTable;
use crate::numerics;

/// Specification of one conditional-independence test A ⊥ B | C over an
/// exact table. Deviation is measured per conditioning cell as the total
/// variation between P(A,B|C) and P(A|C)P(B|C).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CiTestSpec {
    /// First variable block (indices into the joint).
    pub a: Vec<usize>,
    /// Second variable block, disjoint from `a`.
    pub b: Vec<usize>,
    /// Conditioning block, disjoint from both.
    pub c: Vec<usize>,
    /// Max admissible total-variation deviation per cell.
    pub tolerance: f64,
}

/// Outcome of an exact conditional-independence test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CiOutcome {
    /// Verdict at the spec's tolerance.
    pub independent: bool,
    /// Largest per-cell total-variation deviation observed.
    pub max_deviation: f64,
    /// Conditioning cells skipped for zero mass (vacuous).
    pub skipped_cells: usize,
}

/// Exact conditional-independence decision on an enumerated table.
pub fn ci_test(joint: &JointTable, spec: &CiTestSpec) -> Result<CiOutcome> {
    for (name, block) in [("a", &spec.a), ("b", &spec.b), ("c", &spec.c)] {
        for &v in block {
            if v >= joint.n_vars() {
                return Err(Error::ShapeMismatch(format!(
                    "block {name} references variable {v}, joint has {}",
                    joint.n_vars()
                )));
            }
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    for &v in spec.a.iter().chain(&spec.b).chain(&spec.c) {
        if !seen.insert(v) {
            return Err(Error::Domain(format!("blocks are not pairwise disjoint at variable {v}")));
        }
    }
    let cells: Vec<Vec<usize>> = if spec.c.is_empty() {
        vec![Vec::new()]
    } else {
        joint.joint_positive_support(&spec.c)
    };
    let mut max_dev = 0.0f64;
    let mut skipped = 0usize;
    for cell in &cells {
        let given: Vec<(usize, usize)> = spec.c.iter().copied().zip(cell.iter().copied()).collect();
        let ab: Vec<usize> = spec.a.iter().chain(&spec.b).copied().collect();
        let (joint_ab, pa, pb) = match (
            joint.conditional_dist(&ab, &given),
            joint.conditional_dist(&spec.a, &given),
            joint.conditional_dist(&spec.b, &given),
        ) {
            (Some(x), Some(y), Some(z)) => (x, y, z),
            _ => {
                skipped += 1;
                continue;
            }
        };
        let nb = pb.len();
        let mut tv = 0.0;
        for (ia, &pav) in pa.iter().enumerate() {
            for (ib, &pbv) in pb.iter().enumerate() {
                tv += (joint_ab[ia * nb + ib] - pav * pbv).abs();
            }
        }
        max_dev = max_dev.max(0.5 * tv);
    }
    Ok(CiOutcome { independent: max_dev <= spec.tolerance, max_deviation: max_dev, skipped_cells: skipped })
}

/// Outcome of an empirical G-squared conditional-independence test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GSquaredOutcome {
    /// Test statistic summed over conditioning strata.
    pub statistic: f64,
    /// Degrees of freedom (zero-margin rows/columns excluded).
    pub df: f64,
    /// Survival-function p-value.
    pub p_value: f64,
    /// True when independence is *not* rejected at the given level.
    pub independent: bool,
}

/// Stratified G-squared test of rows[a] ⊥ rows[b] | rows[c] on discrete
/// samples, the empirical counterpart of [`ci_test`].
pub fn g_squared_ci(
    rows: &[Vec<u32>],
    a: usize,
    b: usize,
    c: &[usize],
    alpha: f64,
) -> GSquaredOutcome {
    // Collect per-stratum contingency tables keyed by the c-values.
    let mut a_levels: BTreeMap<u32, usize> = BTreeMap::new();
    let mut b_levels: BTreeMap<u32, usize> = BTreeMap::new();
    for r in rows {
        let na = a_levels.len();
        a_levels.entry(r[a]).or_insert(na);
        let nb = b_levels.len();
        b_levels.entry(r[b]).or_insert(nb);
    }
    let (na, nb) = (a_levels.len().max(1), b_levels.len().max(1));
    let mut strata: BTreeMap<Vec<u32>, DMatrix<f64>> = BTreeMap::new();
    for r in rows {
        let key: Vec<u32> = c.iter().map(|&v| r[v]).collect();
        let m = strata.entry(key).or_insert_with(|| DMatrix::zeros(na, nb));
        m[(a_levels[&r[a]], b_levels[&r[b]])] += 1.0;
    }
    let mut stat = 0.0;
    let mut df = 0.0;
    for m in strata.values() {
        let (g2, d) = numerics::g_squared_2way(m);
        stat += g2;
        df += d;
    }
    let p_value = if df > 0.0 { numerics::chi2_sf(stat, df) } else { 1.0 };
    GSquaredOutcome { statistic: stat, df, p_value, independent: p_value > alpha }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fair_pair(p11: f64) -> JointTable {
        let p10 = 0.5 - p11;
        let p01 = 0.5 - p11;
        let p00 = 1.0 - p01 - p10 - p11;
        JointTable::new(
            vec!["a".into(), "b".into()],
            vec![vec![0, 1], vec![0, 1]],
            vec![p00, p01, p10, p11],
        )
        .unwrap()
    }

    #[test]
    fn independent_coins_pass_with_zero_deviation() {
        let t = fair_pair(0.25);
        let out = ci_test(
            &t,
            &CiTestSpec { a: vec![0], b: vec![1], c: vec![], tolerance: 1e-9 },
        )
        .unwrap();
        assert!(out.independent);
        assert!(out.max_deviation < 1e-15);
    }

    #[test]
    fn copied_coins_fail_with_deviation_half() {
        let t = fair_pair(0.5);
        let out = ci_test(
            &t,
            &CiTestSpec { a: vec![0], b: vec![1], c: vec![], tolerance: 1e-9 },
        )
        .unwrap();
        assert!(!out.independent);
        assert!((out.max_deviation - 0.5).abs() < 1e-12);
    }

    #[test]
    fn collider_marginal_independent_conditionally_dependent() {
        // a, b fair independent bits; s = AND(a, b) as third variable.
        let mut probs = vec![0.0; 8]; // order a, b, s
        for a in 0..2usize {
            for b in 0..2usize {
                let s = a & b;
                probs[a * 4 + b * 2 + s] = 0.25;
            }
        }
        let t = JointTable::new(
            vec!["a".into(), "b".into(), "s".into()],
            vec![vec![0, 1], vec![0, 1], vec![0, 1]],
            probs,
        )
        .unwrap();
        let marginal = ci_test(
            &t,
            &CiTestSpec { a: vec![0], b: vec![1], c: vec![], tolerance: 1e-9 },
        )
        .unwrap();
        assert!(marginal.independent);
        let conditioned = ci_test(
            &t,
            &CiTestSpec { a: vec![0], b: vec![1], c: vec![2], tolerance: 1e-9 },
        )
        .unwrap();
        assert!(!conditioned.independent, "selecting on the child couples its parents");
    }

    #[test]
    fn overlapping_blocks_are_rejected() {
        let t = fair_pair(0.25);
        let err = ci_test(
            &t,
            &CiTestSpec { a: vec![0], b: vec![0], c: vec![], tolerance: 1e-9 },
        )
        .unwrap_err();
        assert!(err.to_string().contains("disjoint"), "{err}");
    }

    #[test]
    fn g_squared_flags_copies_and_passes_independents() {
        let mut rows = Vec::new();
        for i in 0..2000u32 {
            let a = i % 2;
            rows.push(vec![a, a, i % 3]);
        }
        let out = g_squared_ci(&rows, 0, 1, &[2], 0.01);
        assert!(!out.independent);
        assert!(out.p_value < 1e-12);
        let mut rows = Vec::new();
        for i in 0..2000u32 {
            rows.push(vec![i % 2, (i / 2) % 2, 0]);
        }
        let out = g_squared_ci(&rows, 0, 1, &[], 0.01);
        assert!(out.independent);
    }
}
