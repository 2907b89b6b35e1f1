//! Component-wise equivalence between a ground-truth model and a learned
//! one: a level-wise permutation plus per-node state bijections under
//! which the selection functions commute on every supported configuration.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DiscreteSelectionModel, JointTable};

use super::LearnedDiscreteModel;

/// Outcome of the equivalence search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchReport {
    /// True when a full witness was found.
    pub matched: bool,
    /// Learned latent id -> truth latent id (full map when matched).
    pub node_map: BTreeMap<String, String>,
    /// Truth node id -> (truth state -> learned state) bijection.
    pub state_maps: BTreeMap<String, BTreeMap<u32, u32>>,
    /// Where the search stopped or why it failed.
    pub detail: String,
}

/// Search for a component-wise equivalence witness. Levels are matched
/// bottom-up: observed variables align by label, and each latent level is
/// searched over all parent-set-compatible assignments with backtracking.
/// State bijections are not searched; they are *derived* by pushing every
/// supported parent configuration through both selection functions, which
/// either yields a consistent bijection or refutes the assignment.
pub fn check_componentwise_equivalence(
    truth: &DiscreteSelectionModel,
    learned: &LearnedDiscreteModel,
) -> Result<MatchReport> {
    let joint = truth.exact_joint(false, None)?;
    let t_levels = truth.graph.level_count();
    let l_levels = learned.graph.level_count();
    // Observed labels must coincide.
    let t_bottom: BTreeSet<String> = truth.level_ids(t_levels - 1).into_iter().collect();
    let l_bottom: BTreeSet<String> = learned
        .graph
        .level_nodes(l_levels - 1)
        .iter()
        .map(|&n| learned.graph.id(n).to_string())
        .collect();
    if t_bottom != l_bottom {
        return Err(Error::ShapeMismatch(format!(
            "bottom variables differ: truth {t_bottom:?} vs learned {l_bottom:?}"
        )));
    }
    if t_levels != l_levels {
        return Ok(MatchReport {
            matched: false,
            node_map: BTreeMap::new(),
            state_maps: BTreeMap::new(),
            detail: format!(
                "level count mismatch: truth has {} latent levels, learned {}",
                t_levels - 1,
                l_levels - 1
            ),
        });
    }

    // Observed nodes map to themselves with identity state maps.
    let mut node_map: BTreeMap<String, String> = BTreeMap::new();
    let mut state_maps: BTreeMap<String, BTreeMap<u32, u32>> = BTreeMap::new();
    for id in &t_bottom {
        node_map.insert(id.clone(), id.clone());
        let var = joint.var_by_label(id).expect("observed in joint");
        let identity: BTreeMap<u32, u32> = joint
            .positive_support(var)
            .into_iter()
            .map(|pos| {
                let v = joint.alphabet(var)[pos];
                (v, v)
            })
            .collect();
        state_maps.insert(id.clone(), identity);
    }

    let mut best_detail = String::new();
    if search_level(
        truth,
        learned,
        &joint,
        t_levels - 1,
        &mut node_map,
        &mut state_maps,
        &mut best_detail,
    ) {
        // Report only the latent part of the node map.
        let latent_map: BTreeMap<String, String> = node_map
            .iter()
            .filter(|(k, _)| !t_bottom.contains(*k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let latent_states: BTreeMap<String, BTreeMap<u32, u32>> = state_maps
            .iter()
            .filter(|(k, _)| !t_bottom.contains(*k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Ok(MatchReport {
            matched: true,
            node_map: latent_map,
            state_maps: latent_states,
            detail: "witness found".into(),
        })
    } else {
        Ok(MatchReport {
            matched: false,
            node_map: BTreeMap::new(),
            state_maps: BTreeMap::new(),
            detail: if best_detail.is_empty() {
                "no level-wise assignment commutes".into()
            } else {
                best_detail
            },
        })
    }
}

/// Try to extend the witness from the (already mapped) level below
/// `level`, i.e. match truth level `level - 1` against the learned level
/// of the same index. Returns true when the full hierarchy is matched.
#[allow(clippy::too_many_arguments)]
fn search_level(
    truth: &DiscreteSelectionModel,
    learned: &LearnedDiscreteModel,
    joint: &JointTable,
    level: usize,
    node_map: &mut BTreeMap<String, String>,
    state_maps: &mut BTreeMap<String, BTreeMap<u32, u32>>,
    best_detail: &mut String,
) -> bool {
    if level == 0 {
        return true;
    }
    let lt = level - 1;
    let truth_ids: Vec<String> = truth.level_ids(lt);
    let learned_ids: Vec<String> = learned
        .graph
        .level_nodes(lt)
        .iter()
        .map(|&n| learned.graph.id(n).to_string())
        .collect();
    if truth_ids.len() != learned_ids.len() {
        if best_detail.is_empty() {
            *best_detail = format!(
                "level {lt}: truth has {} latents, learned {}",
                truth_ids.len(),
                learned_ids.len()
            );
        }
        return false;
    }
    assign_latents(
        truth,
        learned,
        joint,
        level,
        &learned_ids,
        0,
        &truth_ids,
        &mut vec![false; truth_ids.len()],
        node_map,
        state_maps,
        best_detail,
    )
}

#[allow(clippy::too_many_arguments)]
fn assign_latents(
    truth: &DiscreteSelectionModel,
    learned: &LearnedDiscreteModel,
    joint: &JointTable,
    level: usize,
    learned_ids: &[String],
    next: usize,
    truth_ids: &[String],
    used: &mut Vec<bool>,
    node_map: &mut BTreeMap<String, String>,
    state_maps: &mut BTreeMap<String, BTreeMap<u32, u32>>,
    best_detail: &mut String,
) -> bool {
    if next == learned_ids.len() {
        return search_level(truth, learned, joint, level - 1, node_map, state_maps, best_detail);
    }
    let l_id = &learned_ids[next];
    for (ti, t_id) in truth_ids.iter().enumerate() {
        if used[ti] {
            continue;
        }
        // Parent sets must correspond under the finer-level node map.
        let l_node = learned.graph.node_by_id(l_id).expect("learned node");
        let mapped_parents: Option<BTreeSet<String>> = learned
            .graph
            .parents(l_node)
            .iter()
            .map(|&p| node_map.get(learned.graph.id(p)).cloned())
            .collect();
        let Some(mapped_parents) = mapped_parents else { continue };
        let t_node = truth.graph.node_by_id(t_id).expect("truth node");
        let t_parents: BTreeSet<String> = truth
            .graph
            .parents(t_node)
            .iter()
            .map(|&p| truth.graph.id(p).to_string())
            .collect();
        if mapped_parents != t_parents {
            if best_detail.is_empty() {
                *best_detail = format!(
                    "{l_id} cannot match {t_id}: parents {mapped_parents:?} vs {t_parents:?}"
                );
            }
            continue;
        }
        match derive_state_map(truth, learned, joint, t_id, l_id, node_map, state_maps) {
            Ok(h) => {
                node_map.insert(l_id.clone(), t_id.clone());
                state_maps.insert(t_id.clone(), h);
                used[ti] = true;
                if assign_latents(
                    truth,
                    learned,
                    joint,
                    level,
                    learned_ids,
                    next + 1,
                    truth_ids,
                    used,
                    node_map,
                    state_maps,
                    best_detail,
                ) {
                    return true;
                }
                used[ti] = false;
                node_map.remove(l_id);
                state_maps.remove(t_id);
            }
            Err(reason) => {
                if best_detail.is_empty() {
                    *best_detail = format!("{l_id} vs {t_id}: {reason}");
                }
            }
        }
    }
    false
}

/// Push every truth-supported parent configuration through both selection
/// functions; succeed iff the induced truth-state -> learned-state relation
/// is a bijection.
fn derive_state_map(
    truth: &DiscreteSelectionModel,
    learned: &LearnedDiscreteModel,
    joint: &JointTable,
    t_id: &str,
    l_id: &str,
    node_map: &BTreeMap<String, String>,
    state_maps: &BTreeMap<String, BTreeMap<u32, u32>>,
) -> std::result::Result<BTreeMap<u32, u32>, String> {
    let tf = &truth.functions[t_id];
    let lf = &learned.functions[l_id];
    // Truth variables backing the learned function's parents.
    let lf_truth_parents: Vec<String> = lf
        .parents
        .iter()
        .map(|p| node_map[p].clone())
        .collect();
    let support_vars: Vec<usize> = tf
        .parents
        .iter()
        .map(|p| joint.var_by_label(p).expect("truth parent in joint"))
        .collect();
    let mut h: BTreeMap<u32, u32> = BTreeMap::new();
    for cfg in joint.joint_positive_support(&support_vars) {
        let truth_values: Vec<u32> = support_vars
            .iter()
            .zip(&cfg)
            .map(|(&v, &pos)| joint.alphabet(v)[pos])
            .collect();
        let sigma = tf.apply(&truth_values).map_err(|e| e.to_string())?;
        // Assemble the learned tuple in the learned function's parent order.
        let learned_values: Vec<u32> = lf_truth_parents
            .iter()
            .map(|tp| {
                let ix = tf.parents.iter().position(|q| q == tp).ok_or_else(|| {
                    format!("learned parent {tp} is not a truth parent of {t_id}")
                })?;
                let tv = truth_values[ix];
                state_maps[tp]
                    .get(&tv)
                    .copied()
                    .ok_or_else(|| format!("no state map for {tp} value {tv}"))
            })
            .collect::<std::result::Result<_, String>>()?;
        let sigma_hat = lf.apply(&learned_values).map_err(|e| e.to_string())?;
        match h.get(&sigma) {
            None => {
                h.insert(sigma, sigma_hat);
            }
            Some(&prev) if prev == sigma_hat => {}
            Some(&prev) => {
                return Err(format!(
                    "truth state {sigma} maps to both {prev} and {sigma_hat}: selection functions do not commute"
                ));
            }
        }
    }
    let image: BTreeSet<u32> = h.values().copied().collect();
    if image.len() != h.len() {
        return Err(format!(
            "state map is not injective: {} truth states onto {} learned states",
            h.len(),
            image.len()
        ));
    }
    let learned_states = learned.supports[l_id].len();
    if image.len() != learned_states {
        return Err(format!(
            "state map covers {} of {learned_states} learned states",
            image.len()
        ));
    }
    Ok(h)
}
