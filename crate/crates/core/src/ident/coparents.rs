//! Minimal conditioning-set search via the nonnegative-rank bottleneck.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::model::JointTable;

use super::rank::{nonneg_rank_below, RankBelow, RankOptions};

/// Options for the co-parent search.
#[derive(Debug, Clone)]
pub struct CoparentOptions {
    /// Largest conditioning-set size tried.
    pub search_cap: usize,
    /// Rank-decision options.
    pub rank: RankOptions,
}

impl Default for CoparentOptions {
    fn default() -> Self {
        CoparentOptions { search_cap: 4, rank: RankOptions::default() }
    }
}

/// Evidence gathered for the returned conditioning set.
#[derive(Debug, Clone)]
pub struct CoparentResult {
    /// The cardinality-minimal conditioning set (variable indices).
    pub coparents: BTreeSet<usize>,
    /// Number of conditioning cells the criterion was verified on.
    pub cells_checked: usize,
    /// Human-readable justification for provenance records.
    pub fact: String,
}

/// Find the cardinality-minimal conditioning set C (ties broken
/// lexicographically) such that for every positive cell of C the table of
/// `d` against the remaining variables admits nonnegative rank strictly
/// below |supp(d)|: the bottleneck criterion identifying C as the
/// co-parents of `d`.
///
/// Two guards keep the criterion meaningful. Candidates leaving an empty
/// remainder are excluded (a single-column table is trivially rank one).
/// And a variable that is jointly independent of everything else reports
/// no bottleneck up front: its unconditional table against the rest is
/// already rank one, so the criterion would otherwise certify a spurious
/// zero-information latent with C = {}.
pub fn find_coparents(
    joint: &JointTable,
    d: usize,
    opts: &CoparentOptions,
) -> Result<CoparentResult> {
    let n = joint.n_vars();
    let label = joint.label(d).to_string();
    let support = joint.positive_support(d);
    if support.len() < 2 {
        // A constant variable cannot exhibit a rank bottleneck.
        return Err(Error::NoBottleneck(label));
    }
    let threshold = support.len();
    let others: Vec<usize> = (0..n).filter(|&v| v != d).collect();
    if let Some((table, _, _)) = joint.conditional_matrix(d, &others, &[]) {
        if crate::numerics::numeric_rank(&table, opts.rank.rank_rel_tol) <= 1 {
            return Err(Error::NoBottleneck(label));
        }
    }
    let max_c = opts.search_cap.min(others.len().saturating_sub(1));
    for size in 0..=max_c {
        let mut candidate = Vec::new();
        let mut found: Option<CoparentResult> = None;
        subsets_in_lex_order(&others, size, 0, &mut candidate, &mut |c_set| {
            if found.is_some() {
                return Ok(());
            }
            let c_vars: Vec<usize> = c_set.to_vec();
            let r_vars: Vec<usize> =
                others.iter().copied().filter(|v| !c_vars.contains(v)).collect();
            debug_assert!(!r_vars.is_empty());
            let cells: Vec<Vec<usize>> = if c_vars.is_empty() {
                vec![Vec::new()]
            } else {
                joint.joint_positive_support(&c_vars)
            };
            let mut all_below = true;
            for cell in &cells {
                let given: Vec<(usize, usize)> =
                    c_vars.iter().copied().zip(cell.iter().copied()).collect();
                let Some((table, _, _)) = joint.conditional_matrix(d, &r_vars, &given) else {
                    continue;
                };
                match nonneg_rank_below(&table, threshold, &opts.rank)? {
                    RankBelow::Yes => {}
                    RankBelow::No => {
                        all_below = false;
                        break;
                    }
                    RankBelow::Indeterminate => {
                        return Err(Error::IndeterminateRank {
                            context: format!(
                                "bottleneck test for {label} given {:?} at cell {cell:?}",
                                c_vars.iter().map(|&v| joint.label(v)).collect::<Vec<_>>()
                            ),
                            lower: 0,
                            threshold,
                            upper: threshold,
                        });
                    }
                }
            }
            if all_below {
                found = Some(CoparentResult {
                    coparents: c_vars.iter().copied().collect(),
                    cells_checked: cells.len(),
                    fact: format!(
                        "rank_+(P({label}, rest | C)) < {threshold} on all {} cells of C = {{{}}}",
                        cells.len(),
                        c_vars.iter().map(|&v| joint.label(v)).collect::<Vec<_>>().join(", ")
                    ),
                });
            }
            Ok(())
        })?;
        if let Some(result) = found {
            return Ok(result);
        }
    }
    Err(Error::NoBottleneck(label))
}

/// Enumerate size-k subsets of `pool` in lexicographic order (pool is
/// already ascending), with a fallible visitor.
fn subsets_in_lex_order(
    pool: &[usize],
    k: usize,
    start: usize,
    current: &mut Vec<usize>,
    f: &mut impl FnMut(&[usize]) -> Result<()>,
) -> Result<()> {
    if current.len() == k {
        return f(current);
    }
    for i in start..pool.len() {
        current.push(pool[i]);
        subsets_in_lex_order(pool, k, i + 1, current, f)?;
        current.pop();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::JointTable;

    /// Three ternary observed variables where s = a quantized sum of
    /// (d0, d1) selects the pair, and d2 is independent noise. The
    /// co-parents of d0 are then exactly {d1}.
    fn pair_plus_noise() -> JointTable {
        // s = 0 if d0+d1 < 2, 1 if 2 <= d0+d1 < 4, 2 if d0+d1 = 4.
        // Keep s in {0,1} with positive mass (drop s=2 region to make the
        // selection proper: configurations with d0+d1=4 never occur).
        let mut masses = vec![0.0; 27];
        let weight = |d0: usize, d1: usize| -> f64 {
            // Dirichlet-ish fixed perturbation, deterministic.
            1.0 + 0.31 * d0 as f64 + 0.17 * d1 as f64 + 0.07 * (d0 * d1) as f64
        };
        for d0 in 0..3usize {
            for d1 in 0..3usize {
                if d0 + d1 == 4 {
                    continue;
                }
                for d2 in 0..3usize {
                    let w_d2 = [0.5, 0.3, 0.2][d2];
                    masses[d0 * 9 + d1 * 3 + d2] = weight(d0, d1) * w_d2;
                }
            }
        }
        JointTable::from_masses(
            vec!["d0".into(), "d1".into(), "d2".into()],
            vec![vec![0, 1, 2], vec![0, 1, 2], vec![0, 1, 2]],
            masses,
        )
        .unwrap()
    }

    #[test]
    fn independent_variables_have_no_bottleneck() {
        // Three independent ternary variables.
        let mut masses = vec![0.0; 27];
        let w = [[0.5, 0.3, 0.2], [0.4, 0.35, 0.25], [0.6, 0.25, 0.15]];
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    masses[a * 9 + b * 3 + c] = w[0][a] * w[1][b] * w[2][c];
                }
            }
        }
        let joint = JointTable::from_masses(
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![0, 1, 2], vec![0, 1, 2], vec![0, 1, 2]],
            masses,
        )
        .unwrap();
        for d in 0..3 {
            match find_coparents(&joint, d, &CoparentOptions::default()) {
                Err(Error::NoBottleneck(_)) => {}
                other => panic!("expected no bottleneck for var {d}, got {other:?}"),
            }
        }
    }

    #[test]
    fn sole_parent_pair_is_recovered() {
        let joint = pair_plus_noise();
        let res = find_coparents(&joint, 0, &CoparentOptions::default()).unwrap();
        let got: Vec<&str> = res.coparents.iter().map(|&v| joint.label(v)).collect();
        assert_eq!(got, vec!["d1"], "fact: {}", res.fact);
        let res = find_coparents(&joint, 1, &CoparentOptions::default()).unwrap();
        let got: Vec<&str> = res.coparents.iter().map(|&v| joint.label(v)).collect();
        assert_eq!(got, vec!["d0"]);
    }
}
