//! Brute-force reference implementations. Everything here is intentionally
//! slow and maximally simple: independent code paths that the fast
//! implementations are tested against, shipped in the library so the CLI
//! can run the cross-checks end to end. Budgets are explicit; exceeding
//! one is an error, never a silent truncation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ident::LearnedDiscreteModel;
use crate::model::{DiscreteSelectionModel, JointTable};

/// Caps for oracle runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleBudget {
    /// Max joint states enumerated.
    pub max_states: usize,
    /// Max candidate subsets examined.
    pub max_subsets: usize,
    /// Max permutation assignments examined.
    pub max_permutations: usize,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget { max_states: 1 << 20, max_subsets: 1 << 16, max_permutations: 1 << 20 }
    }
}

// ── Rank by Gaussian elimination ──────────────────────────────────────

/// Row-echelon rank with partial pivoting, relative tolerance. Kept
/// deliberately separate from the SVD-based rank in the main path.
fn gauss_rank(mut rows: Vec<Vec<f64>>, rel_tol: f64) -> usize {
    let m = rows.len();
    if m == 0 {
        return 0;
    }
    let n = rows[0].len();
    let scale = rows
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |a, &b| a.max(b.abs()));
    if scale == 0.0 {
        return 0;
    }
    let tol = rel_tol * scale;
    let mut rank = 0;
    let mut col = 0;
    while rank < m && col < n {
        let pivot = (rank..m).max_by(|&a, &b| {
            rows[a][col].abs().partial_cmp(&rows[b][col].abs()).unwrap()
        });
        let pivot = pivot.unwrap();
        if rows[pivot][col].abs() <= tol {
            col += 1;
            continue;
        }
        rows.swap(rank, pivot);
        for r in rank + 1..m {
            let factor = rows[r][col] / rows[rank][col];
            for c in col..n {
                rows[r][c] -= factor * rows[rank][c];
            }
        }
        rank += 1;
        col += 1;
    }
    rank
}

// ── Minimal co-parents ────────────────────────────────────────────────

/// Exhaustive reference for the minimal-conditioning-set search: every
/// candidate C in cardinality-then-lexicographic order is tested against
/// the exact bottleneck criterion (nonnegative rank of the conditional
/// table strictly below the variable's support size on every positive
/// cell, with a genuine joint dependence on the rest to rule out the
/// fully-independent case). Nonnegative-rank decisions are closed by
/// elementary facts at support sizes up to 3: rank_+ equals rank when the
/// rank is at most 2, and a table of full row support size is certified by
/// its linear rank alone.
pub fn oracle_minimal_coparents(
    joint: &JointTable,
    d: usize,
    budget: &OracleBudget,
) -> Result<BTreeSet<usize>> {
    if joint.state_count() > budget.max_states {
        return Err(Error::Budget(format!(
            "{} joint states exceed the oracle cap {}",
            joint.state_count(),
            budget.max_states
        )));
    }
    let label = joint.label(d).to_string();
    let k = joint.positive_support(d).len();
    if k < 2 {
        return Err(Error::NoBottleneck(label));
    }
    if k > 3 {
        return Err(Error::Budget(format!(
            "oracle decides nonnegative rank only below support size 4; {label} has {k} states"
        )));
    }
    let others: Vec<usize> = (0..joint.n_vars()).filter(|&v| v != d).collect();
    // Fully independent variables exhibit no bottleneck.
    if let Some((m, _, _)) = joint.conditional_matrix(d, &others, &[]) {
        let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        if gauss_rank(rows, 1e-9) <= 1 {
            return Err(Error::NoBottleneck(label));
        }
    }
    let mut examined = 0usize;
    for size in 0..others.len() {
        let mut subsets: Vec<Vec<usize>> = Vec::new();
        enumerate_subsets(&others, size, 0, &mut Vec::new(), &mut subsets);
        for c_vars in subsets {
            examined += 1;
            if examined > budget.max_subsets {
                return Err(Error::Budget(format!("{examined} candidate sets exceed the cap")));
            }
            let r_vars: Vec<usize> =
                others.iter().copied().filter(|v| !c_vars.contains(v)).collect();
            if r_vars.is_empty() {
                continue;
            }
            let cells: Vec<Vec<usize>> = if c_vars.is_empty() {
                vec![Vec::new()]
            } else {
                joint.joint_positive_support(&c_vars)
            };
            let mut ok = true;
            for cell in &cells {
                let given: Vec<(usize, usize)> =
                    c_vars.iter().copied().zip(cell.iter().copied()).collect();
                let Some((m, _, _)) = joint.conditional_matrix(d, &r_vars, &given) else {
                    continue;
                };
                let rows: Vec<Vec<f64>> =
                    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
                let rank = gauss_rank(rows, 1e-9);
                // rank_+ < k  <=>  rank < k here: either rank <= 2 (where
                // nonnegative rank equals rank) or rank = 3 = k.
                if rank >= k {
                    ok = false;
                    break;
                }
            }
            if ok {
                return Ok(c_vars.into_iter().collect());
            }
        }
    }
    Err(Error::NoBottleneck(label))
}

fn enumerate_subsets(
    pool: &[usize],
    k: usize,
    start: usize,
    current: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if current.len() == k {
        out.push(current.clone());
        return;
    }
    for i in start..pool.len() {
        current.push(pool[i]);
        enumerate_subsets(pool, k, i + 1, current, out);
        current.pop();
    }
}

// ── Intersection cardinalities ────────────────────────────────────────

/// Direct intersection counting for every nonempty index subset of an
/// explicit family (n <= 8, universe <= 64). Output is indexed by bitmask.
pub fn oracle_set_intersections(sets: &[BTreeSet<u64>], budget: &OracleBudget) -> Result<Vec<u64>> {
    if sets.len() > 8 {
        return Err(Error::Budget(format!("{} sets exceed the oracle cap of 8", sets.len())));
    }
    if sets.iter().flatten().any(|&e| e >= 64) {
        return Err(Error::Budget("universe elements must lie below 64".into()));
    }
    let size = 1usize << sets.len();
    if size > budget.max_subsets {
        return Err(Error::Budget("subset lattice exceeds the cap".into()));
    }
    let mut out = vec![0u64; size];
    for mask in 1..size {
        let mut members: Option<BTreeSet<u64>> = None;
        for (i, s) in sets.iter().enumerate() {
            if mask & (1 << i) != 0 {
                members = Some(match members {
                    None => s.clone(),
                    Some(acc) => acc.intersection(s).copied().collect(),
                });
            }
        }
        out[mask] = members.map_or(0, |s| s.len() as u64);
    }
    Ok(out)
}

// ── Component-wise match ──────────────────────────────────────────────

/// A full equivalence witness found by exhaustive search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleWitness {
    /// Learned latent id -> truth latent id.
    pub node_map: BTreeMap<String, String>,
    /// Truth latent id -> (truth state -> learned state).
    pub state_maps: BTreeMap<String, BTreeMap<u32, u32>>,
}

/// Outcome of the exhaustive match search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleMatch {
    /// The witness, if any assignment commutes.
    pub witness: Option<OracleWitness>,
    /// Closest-match diagnostics when none exists.
    pub diagnostics: String,
}

/// Exhaustive search over level-wise latent permutations with derived
/// state bijections. No pruning beyond the budget: every assignment is
/// checked by pushing all supported configurations through both models.
pub fn oracle_best_match(
    truth: &DiscreteSelectionModel,
    learned: &LearnedDiscreteModel,
    budget: &OracleBudget,
) -> Result<OracleMatch> {
    let joint = truth.exact_joint(false, None)?;
    let t_levels = truth.graph.level_count();
    if learned.graph.level_count() != t_levels {
        return Ok(OracleMatch {
            witness: None,
            diagnostics: format!(
                "level counts differ: truth {}, learned {}",
                t_levels,
                learned.graph.level_count()
            ),
        });
    }
    let bottom: Vec<String> = truth.level_ids(t_levels - 1);
    {
        let learned_bottom: BTreeSet<String> = learned
            .graph
            .level_nodes(t_levels - 1)
            .iter()
            .map(|&n| learned.graph.id(n).to_string())
            .collect();
        let truth_bottom: BTreeSet<String> = bottom.iter().cloned().collect();
        if learned_bottom != truth_bottom {
            return Err(Error::ShapeMismatch("bottom variables differ".into()));
        }
    }
    // Latent levels, bottom-most first.
    let latent_levels: Vec<usize> = (0..t_levels - 1).rev().collect();
    let mut level_perms: Vec<Vec<Vec<usize>>> = Vec::new();
    let mut total: usize = 1;
    for &l in &latent_levels {
        let tn = truth.graph.level_nodes(l).len();
        let ln = learned.graph.level_nodes(l).len();
        if tn != ln {
            return Ok(OracleMatch {
                witness: None,
                diagnostics: format!("latent counts differ at level {l}: {tn} vs {ln}"),
            });
        }
        let perms = permutations(tn);
        total = total.saturating_mul(perms.len());
        level_perms.push(perms);
    }
    if total > budget.max_permutations {
        return Err(Error::Budget(format!(
            "{total} permutation assignments exceed the cap {}",
            budget.max_permutations
        )));
    }
    let mut diagnostics = String::new();
    let mut choice = vec![0usize; latent_levels.len()];
    loop {
        match try_assignment(truth, learned, &joint, &bottom, &latent_levels, &level_perms, &choice)
        {
            Ok(witness) => return Ok(OracleMatch { witness: Some(witness), diagnostics: String::new() }),
            Err(reason) => {
                if diagnostics.is_empty() {
                    diagnostics = reason;
                }
            }
        }
        // Odometer.
        let mut i = 0;
        loop {
            if i == choice.len() {
                return Ok(OracleMatch { witness: None, diagnostics });
            }
            choice[i] += 1;
            if choice[i] < level_perms[i].len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..n).collect();
    heap_permute(&mut p, n, &mut out);
    out.sort();
    out
}

fn heap_permute(p: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k <= 1 {
        out.push(p.clone());
        return;
    }
    for i in 0..k {
        heap_permute(p, k - 1, out);
        if k % 2 == 0 {
            p.swap(i, k - 1);
        } else {
            p.swap(0, k - 1);
        }
    }
}

fn try_assignment(
    truth: &DiscreteSelectionModel,
    learned: &LearnedDiscreteModel,
    joint: &JointTable,
    bottom: &[String],
    latent_levels: &[usize],
    level_perms: &[Vec<Vec<usize>>],
    choice: &[usize],
) -> std::result::Result<OracleWitness, String> {
    // learned node id -> truth node id, seeded with the observed identity.
    let mut node_map: BTreeMap<String, String> = BTreeMap::new();
    let mut state_maps: BTreeMap<String, BTreeMap<u32, u32>> = BTreeMap::new();
    for id in bottom {
        node_map.insert(id.clone(), id.clone());
        let var = joint.var_by_label(id).expect("observed var");
        let map: BTreeMap<u32, u32> = joint
            .positive_support(var)
            .into_iter()
            .map(|pos| {
                let v = joint.alphabet(var)[pos];
                (v, v)
            })
            .collect();
        state_maps.insert(id.clone(), map);
    }
    for (k, &level) in latent_levels.iter().enumerate() {
        let perm = &level_perms[k][choice[k]];
        let truth_ids: Vec<String> = truth.level_ids(level);
        let learned_ids: Vec<String> = learned
            .graph
            .level_nodes(level)
            .iter()
            .map(|&n| learned.graph.id(n).to_string())
            .collect();
        for (li, &ti) in perm.iter().enumerate() {
            let (l_id, t_id) = (&learned_ids[li], &truth_ids[ti]);
            // Derive the state bijection by brute enumeration of supported
            // truth parent configurations.
            let tf = &truth.functions[t_id];
            let lf = &learned.functions[l_id];
            let t_parent_vars: Vec<usize> = tf
                .parents
                .iter()
                .map(|p| joint.var_by_label(p).expect("truth parent var"))
                .collect();
            let mut h: BTreeMap<u32, u32> = BTreeMap::new();
            for cfg in joint.joint_positive_support(&t_parent_vars) {
                let t_values: Vec<u32> = t_parent_vars
                    .iter()
                    .zip(&cfg)
                    .map(|(&v, &pos)| joint.alphabet(v)[pos])
                    .collect();
                let sigma = tf.apply(&t_values).map_err(|e| e.to_string())?;
                let l_values: Vec<u32> = lf
                    .parents
                    .iter()
                    .map(|lp| {
                        let tp = node_map
                            .get(lp)
                            .ok_or_else(|| format!("unmapped learned parent {lp}"))?;
                        let ix = tf
                            .parents
                            .iter()
                            .position(|q| q == tp)
                            .ok_or_else(|| format!("{l_id}: parent {tp} not a parent of {t_id}"))?;
                        state_maps[tp]
                            .get(&t_values[ix])
                            .copied()
                            .ok_or_else(|| format!("no mapped state for {tp}={}", t_values[ix]))
                    })
                    .collect::<std::result::Result<_, String>>()?;
                let sigma_hat = lf.apply(&l_values).map_err(|e| e.to_string())?;
                match h.get(&sigma) {
                    None => {
                        h.insert(sigma, sigma_hat);
                    }
                    Some(&prev) if prev == sigma_hat => {}
                    Some(&prev) => {
                        return Err(format!(
                            "{t_id} -> {l_id}: state {sigma} maps to both {prev} and {sigma_hat}"
                        ))
                    }
                }
            }
            let image: BTreeSet<u32> = h.values().copied().collect();
            if image.len() != h.len() || image.len() != learned.supports[l_id].len() {
                return Err(format!(
                    "{t_id} -> {l_id}: {} truth states vs {} learned states, image {}",
                    h.len(),
                    learned.supports[l_id].len(),
                    image.len()
                ));
            }
            node_map.insert(l_id.clone(), t_id.clone());
            state_maps.insert(t_id.clone(), h);
        }
    }
    let latent_nodes: BTreeSet<String> = latent_levels
        .iter()
        .flat_map(|&l| truth.level_ids(l))
        .collect();
    Ok(OracleWitness {
        node_map: node_map.into_iter().filter(|(k, _)| !bottom.contains(k)).collect(),
        state_maps: state_maps
            .into_iter()
            .filter(|(k, _)| latent_nodes.contains(k))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rank_agrees_with_structure() {
        let rank1 = vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![0.5, 1.0]];
        assert_eq!(gauss_rank(rank1, 1e-9), 1);
        let full = vec![vec![1.0, 0.0, 0.1], vec![0.2, 1.0, 0.0], vec![0.0, 0.3, 1.0]];
        assert_eq!(gauss_rank(full, 1e-9), 3);
        assert_eq!(gauss_rank(vec![vec![0.0; 3]; 2], 1e-9), 0);
    }

    #[test]
    fn set_intersections_nested_chain() {
        let a: BTreeSet<u64> = [0, 1].into();
        let b: BTreeSet<u64> = [0, 1, 2].into();
        let c: BTreeSet<u64> = [0, 1, 2, 3].into();
        let out = oracle_set_intersections(&[a, b, c], &OracleBudget::default()).unwrap();
        for mask in [0b001usize, 0b011, 0b101, 0b111] {
            assert_eq!(out[mask], 2);
        }
        assert_eq!(out[0b110], 3);
    }

    #[test]
    fn budget_is_enforced() {
        let sets: Vec<BTreeSet<u64>> = (0..9).map(|i| [i as u64].into()).collect();
        assert!(matches!(
            oracle_set_intersections(&sets, &OracleBudget::default()),
            Err(Error::Budget(_))
        ));
    }
}
