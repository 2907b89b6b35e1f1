//! Checkers for the identification conditions of ground-truth models, so
//! experiments can run in both satisfied and violated regimes.
//!
//! Continuous models: sparse connectivity (every parent concept is the sole
//! common parent of some child subset) and sufficient variability (score
//! difference vectors of the finer-given-coarser conditional are linearly
//! independent). Discrete models: proper-subset supports under random
//! recombination, support-size bottlenecks, injectivity of the state-to-
//! downstream-conditional map, and distinct adjacency sets. Maximality is
//! logged as unchecked: deciding it would quantify over all possible
//! latent splits and no decision procedure is known.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    ContinuousSelectionModel, DiscreteSelectionModel, JointTable, NodeEquation, SelectionGraph,
};
use crate::numerics;

/// Verdict of one per-node check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Condition holds at this node.
    Pass,
    /// Condition is violated at this node.
    Fail,
    /// Condition does not constrain this node.
    Inapplicable,
    /// No decision procedure; recorded for transparency.
    Unchecked,
}

/// One node-level diagnostic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeCheck {
    /// Node id.
    pub node: String,
    /// Outcome.
    pub verdict: Verdict,
    /// Numeric evidence (rank, support size, ...) where meaningful.
    pub value: Option<f64>,
    /// Human-readable evidence.
    pub detail: String,
}

/// All checks for one named condition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionEntry {
    /// Condition name, e.g. "sparse_connectivity".
    pub condition: String,
    /// Per-node outcomes in node-id order.
    pub checks: Vec<NodeCheck>,
}

impl ConditionEntry {
    /// True when no node failed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.verdict != Verdict::Fail)
    }
}

/// A bundle of condition entries for one model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionReport {
    /// Entries in a fixed condition order.
    pub entries: Vec<ConditionEntry>,
}

impl ConditionReport {
    /// True when every checked condition passed (unchecked entries do not
    /// count against the verdict).
    pub fn passed(&self) -> bool {
        self.entries.iter().all(ConditionEntry::passed)
    }

    /// Entry by condition name.
    pub fn entry(&self, condition: &str) -> Option<&ConditionEntry> {
        self.entries.iter().find(|e| e.condition == condition)
    }

    /// Serialize to JSON.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Fixed-order table for terminal output.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&format!("== {} ==\n", entry.condition));
            for c in &entry.checks {
                let value = c.value.map_or(String::new(), |v| format!(" [{v}]"));
                out.push_str(&format!(
                    "  {:<12} {:<12} {}{}\n",
                    c.node,
                    format!("{:?}", c.verdict).to_lowercase(),
                    c.detail,
                    value
                ));
            }
        }
        out
    }
}

// ── Sparse connectivity ───────────────────────────────────────────────

/// For each parent concept, search for a subset of its children whose
/// parent sets intersect to exactly that concept. Exhaustive over child
/// subsets; children counts are small at this scale.
pub fn check_sparse_connectivity(g: &SelectionGraph) -> ConditionReport {
    let mut checks = Vec::new();
    for node in 0..g.node_count() {
        let children = g.children(node);
        if children.is_empty() {
            // Top-level concepts are not parents of anything.
            checks.push(NodeCheck {
                node: g.id(node).to_string(),
                verdict: Verdict::Inapplicable,
                value: None,
                detail: "no children".into(),
            });
            continue;
        }
        let mut witness: Option<Vec<usize>> = None;
        'subsets: for mask in 1usize..1 << children.len() {
            let mut inter: Option<BTreeSet<usize>> = None;
            for (i, &c) in children.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    let pa: BTreeSet<usize> = g.parents(c).iter().copied().collect();
                    inter = Some(match inter {
                        None => pa,
                        Some(acc) => acc.intersection(&pa).copied().collect(),
                    });
                }
            }
            let inter = inter.unwrap();
            if inter.len() == 1 && inter.contains(&node) {
                witness = Some(
                    children
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| mask & (1 << i) != 0)
                        .map(|(_, &c)| c)
                        .collect(),
                );
                break 'subsets;
            }
        }
        checks.push(match witness {
            Some(ws) => NodeCheck {
                node: g.id(node).to_string(),
                verdict: Verdict::Pass,
                value: Some(ws.len() as f64),
                detail: format!(
                    "children {{{}}} intersect to this node alone",
                    ws.iter().map(|&c| g.id(c)).collect::<Vec<_>>().join(", ")
                ),
            },
            None => NodeCheck {
                node: g.id(node).to_string(),
                verdict: Verdict::Fail,
                value: None,
                detail: "every child subset shares an extra common parent".into(),
            },
        });
    }
    ConditionReport {
        entries: vec![ConditionEntry { condition: "sparse_connectivity".into(), checks }],
    }
}

// ── Sufficient variability ────────────────────────────────────────────

/// Probe configuration for the variability check: candidate values for the
/// target concept and reference values for its same-level siblings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariabilityGrid {
    /// Candidate target values; an (n_parents + 1)-subset must succeed.
    pub probe_values: Vec<f64>,
    /// Sibling reference configurations (one entry per grid point; values
    /// for the target's level in level order, target entry ignored).
    pub sibling_configs: Vec<Vec<f64>>,
}

impl VariabilityGrid {
    /// Symmetric default grid around zero with the all-zero sibling config.
    pub fn default_for(n_level_nodes: usize) -> Self {
        VariabilityGrid {
            probe_values: vec![-2.0, -1.2, -0.6, -0.2, 0.2, 0.6, 1.2, 2.0],
            sibling_configs: vec![vec![0.0; n_level_nodes]],
        }
    }
}

/// The assembled score probe: difference vectors of the conditional score
/// of the parents given the target, one row per probe value beyond the
/// base one. For additive-noise Gaussian families the rows reduce to
/// scaled differences of conditional means, so the parent-value argument
/// cancels and rank depends only on the probed target values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreProbe {
    /// Parent ids (column order).
    pub target_parents: Vec<String>,
    /// Probe values of the target, base value first.
    pub probe_values: Vec<f64>,
    /// Difference rows; shape (probes - 1) x n(parents).
    pub score_vectors: Vec<Vec<f64>>,
    /// Relative singular-value threshold used for the verdict.
    pub rank_tolerance: f64,
}

/// Sufficient-variability check for one latent node: over the grid, search
/// for n(parents)+1 probe values whose score difference vectors have full
/// rank (smallest singular value above `tol` relative to the largest).
pub fn check_sufficient_variability(
    model: &ContinuousSelectionModel,
    node_id: &str,
    grid: &VariabilityGrid,
    tol: f64,
) -> Result<ConditionReport> {
    let node = model
        .graph
        .node_by_id(node_id)
        .ok_or_else(|| Error::InvalidModel(format!("unknown node {node_id}")))?;
    let level = model.graph.level(node);
    if level + 1 >= model.graph.level_count() {
        return Err(Error::Domain(format!(
            "{node_id} is at the observed level; variability applies to latent concepts"
        )));
    }
    let parents: Vec<usize> = model.graph.parents(node).to_vec();
    if parents.is_empty() {
        return Err(Error::InvalidModel(format!("{node_id} has no parents to probe")));
    }
    let level_ids = model.level_ids(level);
    let pos_in_level = level_ids
        .iter()
        .position(|id| id == node_id)
        .expect("node in its level");

    // Score of parent i given the level values: for Gaussian additive noise
    // d/d(parent_i) log p = -(parent_i - mean_i(level)) / sigma_i^2, so
    // probe differences are (mean_i(level_k) - mean_i(level_0)) / sigma_i^2.
    let mean_row = |level_values: &[f64]| -> Result<Vec<f64>> {
        parents
            .iter()
            .map(|&p| {
                let pid = model.graph.id(p);
                let eq: &NodeEquation = model
                    .equations
                    .get(pid)
                    .ok_or_else(|| Error::Domain(format!("unsupported family: no equation for {pid}")))?;
                let inputs: Vec<f64> = eq
                    .inputs()
                    .iter()
                    .map(|cid| {
                        let ix = level_ids.iter().position(|l| l == cid).expect("input in level");
                        level_values[ix]
                    })
                    .collect();
                let sigma = eq.noise_sigma();
                if sigma <= 0.0 {
                    return Err(Error::Domain(format!(
                        "unsupported family: zero noise at {pid} has no density"
                    )));
                }
                Ok(eq.mean(&inputs) / (sigma * sigma))
            })
            .collect()
    };

    let n = parents.len();
    let need = n + 1;
    let mut best_min_sv = 0.0f64;
    let mut best_probe: Option<ScoreProbe> = None;
    let mut all_points_pass = true;
    for sibling in &grid.sibling_configs {
        let mut point_pass = false;
        let rows: Vec<Vec<f64>> = grid
            .probe_values
            .iter()
            .map(|&z| {
                let mut level_values = sibling.clone();
                level_values[pos_in_level] = z;
                mean_row(&level_values)
            })
            .collect::<Result<_>>()?;
        // Exhaust (n+1)-subsets of the probe values.
        let mut subset = Vec::new();
        let mut found: Option<(f64, Vec<usize>)> = None;
        search_subsets(grid.probe_values.len(), need, 0, &mut subset, &mut |sel| {
            if found.is_some() {
                return;
            }
            let base = sel[0];
            let diff = DMatrix::from_fn(n, sel.len() - 1, |i, k| rows[sel[k + 1]][i] - rows[base][i]);
            let svs = numerics::singular_values(&diff);
            let (top, bottom) = (svs.first().copied().unwrap_or(0.0), svs.last().copied().unwrap_or(0.0));
            if top > 0.0 && bottom > tol * top {
                found = Some((bottom / top, sel.to_vec()));
            }
        });
        if let Some((rel_sv, sel)) = found {
            point_pass = true;
            if rel_sv > best_min_sv {
                best_min_sv = rel_sv;
                let base = sel[0];
                best_probe = Some(ScoreProbe {
                    target_parents: parents.iter().map(|&p| model.graph.id(p).to_string()).collect(),
                    probe_values: sel.iter().map(|&k| grid.probe_values[k]).collect(),
                    score_vectors: (1..sel.len())
                        .map(|k| {
                            (0..n)
                                .map(|i| rows[sel[k]][i] - rows[base][i])
                                .collect()
                        })
                        .collect(),
                    rank_tolerance: tol,
                });
            }
        }
        all_points_pass &= point_pass;
    }
    let check = NodeCheck {
        node: node_id.to_string(),
        verdict: if all_points_pass { Verdict::Pass } else { Verdict::Fail },
        value: Some(best_min_sv),
        detail: match &best_probe {
            Some(p) => format!(
                "{} probe values give relative sigma_min {best_min_sv:.3e} over parents ({})",
                p.probe_values.len(),
                p.target_parents.join(", ")
            ),
            None => "no probe subset reaches full rank".into(),
        },
    };
    Ok(ConditionReport {
        entries: vec![ConditionEntry { condition: "sufficient_variability".into(), checks: vec![check] }],
    })
}

fn search_subsets(
    n: usize,
    k: usize,
    start: usize,
    current: &mut Vec<usize>,
    f: &mut impl FnMut(&[usize]),
) {
    if current.len() == k {
        f(current);
        return;
    }
    for i in start..n {
        current.push(i);
        search_subsets(n, k, i + 1, current, f);
        current.pop();
    }
}

/// Run the variability check for every latent node that has parents.
pub fn check_sufficient_variability_all(
    model: &ContinuousSelectionModel,
    grid: &VariabilityGrid,
    tol: f64,
) -> Result<ConditionReport> {
    let mut checks = Vec::new();
    let latent_levels = model.latent_levels();
    for level in 0..latent_levels.saturating_sub(1) {
        for &n in model.graph.level_nodes(level) {
            let id = model.graph.id(n).to_string();
            let mut grid = grid.clone();
            if grid.sibling_configs.iter().any(|s| s.len() != model.graph.level_nodes(level).len()) {
                grid = VariabilityGrid {
                    probe_values: grid.probe_values,
                    sibling_configs: vec![vec![0.0; model.graph.level_nodes(level).len()]],
                };
            }
            let report = check_sufficient_variability(model, &id, &grid, tol)?;
            checks.extend(report.entries.into_iter().flat_map(|e| e.checks));
        }
    }
    Ok(ConditionReport {
        entries: vec![ConditionEntry { condition: "sufficient_variability".into(), checks }],
    })
}

// ── Discrete conditions ───────────────────────────────────────────────

/// Check the discrete identification conditions (proper-subset supports,
/// support bottlenecks, injective state-to-conditional maps, distinct
/// adjacency sets) against the exact joint. Maximality is reported as
/// unchecked. Latents with degenerate (single-state) realized supports
/// fail the injectivity check loudly: they carry no information.
pub fn check_discrete_conditions(model: &DiscreteSelectionModel) -> Result<ConditionReport> {
    model.validate()?;
    let joint = model.exact_joint(false, None)?;
    check_discrete_conditions_on(model, &joint)
}

/// Same as [`check_discrete_conditions`] but against a caller-provided
/// all-variables joint (useful when the joint is already enumerated).
pub fn check_discrete_conditions_on(
    model: &DiscreteSelectionModel,
    joint: &JointTable,
) -> Result<ConditionReport> {
    let g = &model.graph;
    let bottom = model.bottom_level();
    let var_of = |node: usize| -> usize {
        joint
            .var_by_label(g.id(node))
            .expect("joint covers all model variables")
    };
    let realized_values = |node: usize| -> Vec<u32> {
        let v = var_of(node);
        joint
            .positive_support(v)
            .into_iter()
            .map(|pos| joint.alphabet(v)[pos])
            .collect()
    };

    let mut natural_selection = Vec::new();
    let mut bottlenecks = Vec::new();
    let mut minimal_supports = Vec::new();

    for level in 0..bottom {
        for &node in g.level_nodes(level) {
            let id = g.id(node).to_string();
            let f = &model.functions[&id];
            // (i) realized support vs image over the product of the
            // parents' realized marginal supports (random recombination).
            let parent_alphabets: Vec<Vec<u32>> = f
                .parents
                .iter()
                .map(|p| realized_values(g.node_by_id(p).expect("parent")))
                .collect();
            let image = f.image_over(&parent_alphabets);
            let supp = realized_values(node);
            let proper = supp.len() < image.len();
            natural_selection.push(NodeCheck {
                node: id.clone(),
                verdict: if proper { Verdict::Pass } else { Verdict::Fail },
                value: Some(supp.len() as f64),
                detail: format!(
                    "support {{{}}} vs recombination image {{{}}}",
                    join_u32(&supp),
                    join_u32(&image)
                ),
            });
            // (ii) support strictly smaller than the parents' joint support.
            let parent_vars: Vec<usize> =
                f.parents.iter().map(|p| var_of(g.node_by_id(p).expect("parent"))).collect();
            let joint_supp = joint.joint_positive_support(&parent_vars).len();
            bottlenecks.push(NodeCheck {
                node: id.clone(),
                verdict: if supp.len() < joint_supp { Verdict::Pass } else { Verdict::Fail },
                value: Some(joint_supp as f64),
                detail: format!("{} states vs {joint_supp} joint parent configurations", supp.len()),
            });
            // (iii) injectivity of state -> P(rest | state, hybrid value).
            minimal_supports.push(check_minimal_supports(model, joint, node));
        }
    }

    // (iv) distinct adjacency sets across all latents.
    let mut twins = Vec::new();
    let mut adjacency: Vec<(String, BTreeSet<String>)> = Vec::new();
    for level in 0..bottom {
        for &node in g.level_nodes(level) {
            let adj: BTreeSet<String> = g
                .parents(node)
                .iter()
                .chain(g.children(node))
                .map(|&x| g.id(x).to_string())
                .collect();
            adjacency.push((g.id(node).to_string(), adj));
        }
    }
    for (i, (id, adj)) in adjacency.iter().enumerate() {
        let twin = adjacency
            .iter()
            .enumerate()
            .find(|(j, (_, other))| *j != i && other == adj)
            .map(|(_, (other_id, _))| other_id.clone());
        twins.push(match twin {
            Some(other) => NodeCheck {
                node: id.clone(),
                verdict: Verdict::Fail,
                value: None,
                detail: format!("identical adjacency set with {other}"),
            },
            None => NodeCheck {
                node: id.clone(),
                verdict: Verdict::Pass,
                value: None,
                detail: "adjacency set unique".into(),
            },
        });
    }

    let maximality = vec![NodeCheck {
        node: "*".into(),
        verdict: Verdict::Unchecked,
        value: None,
        detail: "maximality quantifies over all latent splits; no decision procedure".into(),
    }];

    Ok(ConditionReport {
        entries: vec![
            ConditionEntry { condition: "natural_selection".into(), checks: natural_selection },
            ConditionEntry { condition: "bottleneck_supports".into(), checks: bottlenecks },
            ConditionEntry { condition: "minimal_supports".into(), checks: minimal_supports },
            ConditionEntry { condition: "no_twins".into(), checks: twins },
            ConditionEntry { condition: "maximality".into(), checks: maximality },
        ],
    })
}

/// Injectivity tolerance for exact-table distribution comparisons.
pub const DIST_TOL: f64 = 1e-9;

fn check_minimal_supports(
    model: &DiscreteSelectionModel,
    joint: &JointTable,
    node: usize,
) -> NodeCheck {
    let g = &model.graph;
    let id = g.id(node).to_string();
    let level = g.level(node);
    let s_var = joint.var_by_label(&id).expect("latent in joint");
    let (_, hybrids) = g.split_parents(node);
    let hybrid_vars: Vec<usize> = hybrids
        .iter()
        .map(|&h| joint.var_by_label(g.id(h)).expect("hybrid in joint"))
        .collect();
    // "Rest" is the parent level minus this node's parents.
    let pa_ids: BTreeSet<&str> = g.parents(node).iter().map(|&p| g.id(p)).collect();
    let rest_vars: Vec<usize> = g
        .level_nodes(level + 1)
        .iter()
        .filter(|&&v| !pa_ids.contains(g.id(v)))
        .map(|&v| joint.var_by_label(g.id(v)).expect("level var in joint"))
        .collect();
    if rest_vars.is_empty() {
        return NodeCheck {
            node: id,
            verdict: Verdict::Fail,
            value: None,
            detail: "no remaining variables at the parent level to compare against".into(),
        };
    }
    let supp = joint.positive_support(s_var);
    if supp.len() < 2 {
        return NodeCheck {
            node: id,
            verdict: Verdict::Fail,
            value: Some(supp.len() as f64),
            detail: "degenerate support: a single-state concept offers no distinguishing information"
                .into(),
        };
    }
    let hybrid_cells: Vec<Vec<usize>> = if hybrid_vars.is_empty() {
        vec![Vec::new()]
    } else {
        joint.joint_positive_support(&hybrid_vars)
    };
    let mut min_gap = f64::INFINITY;
    for cell in &hybrid_cells {
        let given_base: Vec<(usize, usize)> =
            hybrid_vars.iter().copied().zip(cell.iter().copied()).collect();
        let dists: Vec<(usize, Vec<f64>)> = supp
            .iter()
            .filter_map(|&spos| {
                let mut given = given_base.clone();
                given.push((s_var, spos));
                joint.conditional_dist(&rest_vars, &given).map(|d| (spos, d))
            })
            .collect();
        for i in 0..dists.len() {
            for j in i + 1..dists.len() {
                let tv = 0.5
                    * dists[i]
                        .1
                        .iter()
                        .zip(&dists[j].1)
                        .map(|(a, b)| (a - b).abs())
                        .sum::<f64>();
                min_gap = min_gap.min(tv);
                if tv <= DIST_TOL {
                    return NodeCheck {
                        node: id,
                        verdict: Verdict::Fail,
                        value: Some(tv),
                        detail: format!(
                            "states {} and {} give identical downstream conditionals at hybrid cell {cell:?}",
                            dists[i].0, dists[j].0
                        ),
                    };
                }
            }
        }
    }
    NodeCheck {
        node: id,
        verdict: Verdict::Pass,
        value: if min_gap.is_finite() { Some(min_gap) } else { None },
        detail: "state-to-conditional map injective at every hybrid cell".into(),
    }
}

fn join_u32(vals: &[u32]) -> String {
    vals.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NodeKind;

    fn line(ids: &[&str]) -> Vec<(String, NodeKind)> {
        ids.iter().map(|s| (s.to_string(), NodeKind::Discrete)).collect()
    }

    #[test]
    fn chain_with_private_child_passes_sparse_connectivity() {
        let g = SelectionGraph::new(
            vec![line(&["s"]), line(&["a"])],
            &[("a".into(), "s".into())],
        )
        .unwrap();
        let report = check_sparse_connectivity(&g);
        let checks = &report.entries[0].checks;
        let a = checks.iter().find(|c| c.node == "a").unwrap();
        assert_eq!(a.verdict, Verdict::Pass);
    }

    #[test]
    fn shared_every_child_fails_sparse_connectivity() {
        // Two finer concepts feeding the same two coarser ones: every child
        // subset keeps both as common parents.
        let g = SelectionGraph::new(
            vec![line(&["u", "v"]), line(&["p", "q"])],
            &[
                ("p".into(), "u".into()),
                ("q".into(), "u".into()),
                ("p".into(), "v".into()),
                ("q".into(), "v".into()),
            ],
        )
        .unwrap();
        let report = check_sparse_connectivity(&g);
        for node in ["p", "q"] {
            let c = report.entries[0].checks.iter().find(|c| c.node == node).unwrap();
            assert_eq!(c.verdict, Verdict::Fail, "{node}");
        }
    }

    #[test]
    fn variability_constant_conditional_fails() {
        use crate::model::{ContinuousSelectionModel, NodeEquation, ObservationMap};
        use std::collections::BTreeMap;
        // z1's mean ignores t entirely: all difference vectors vanish.
        let graph = SelectionGraph::new(
            vec![
                vec![("t".to_string(), NodeKind::Continuous)],
                vec![("z1".to_string(), NodeKind::Continuous)],
                vec![("x1".to_string(), NodeKind::Continuous)],
            ],
            &[("z1".into(), "t".into()), ("x1".into(), "z1".into())],
        )
        .unwrap();
        let mut equations = BTreeMap::new();
        equations.insert(
            "z1".to_string(),
            NodeEquation::AffineLeaky {
                inputs: vec!["t".into()],
                weights: vec![0.0],
                bias: 0.3,
                leak: 0.2,
                noise_sigma: 1.0,
            },
        );
        let mut top_sigma = BTreeMap::new();
        top_sigma.insert("t".to_string(), 1.0);
        let model = ContinuousSelectionModel {
            graph,
            equations,
            top_sigma,
            observation: ObservationMap {
                latent_weights: vec![vec![1.0]],
                noise_weights: vec![vec![]],
                bias: vec![0.0],
                leak: 0.2,
                noise_sigma: 0.0,
            },
        };
        let grid = VariabilityGrid::default_for(1);
        let report = check_sufficient_variability(&model, "t", &grid, 1e-8).unwrap();
        assert_eq!(report.entries[0].checks[0].verdict, Verdict::Fail);
    }

    #[test]
    fn variability_generic_affine_single_parent_passes() {
        use crate::model::{ContinuousSelectionModel, NodeEquation, ObservationMap};
        use std::collections::BTreeMap;
        // One parent: a single nonzero difference vector suffices, matching
        // the closed-form Gaussian score mu(z_k) - mu(z_0) with slope 1.3.
        let graph = SelectionGraph::new(
            vec![
                vec![("t".to_string(), NodeKind::Continuous)],
                vec![("z1".to_string(), NodeKind::Continuous)],
                vec![("x1".to_string(), NodeKind::Continuous)],
            ],
            &[("z1".into(), "t".into()), ("x1".into(), "z1".into())],
        )
        .unwrap();
        let mut equations = BTreeMap::new();
        equations.insert(
            "z1".to_string(),
            NodeEquation::AffineLeaky {
                inputs: vec!["t".into()],
                weights: vec![1.3],
                bias: 0.0,
                leak: 1.0, // purely linear: the Gaussian score is exactly affine in t
                noise_sigma: 1.0,
            },
        );
        let mut top_sigma = BTreeMap::new();
        top_sigma.insert("t".to_string(), 1.0);
        let model = ContinuousSelectionModel {
            graph,
            equations,
            top_sigma,
            observation: ObservationMap {
                latent_weights: vec![vec![1.0]],
                noise_weights: vec![vec![]],
                bias: vec![0.0],
                leak: 0.2,
                noise_sigma: 0.0,
            },
        };
        let grid = VariabilityGrid::default_for(1);
        let report = check_sufficient_variability(&model, "t", &grid, 1e-8).unwrap();
        let check = &report.entries[0].checks[0];
        assert_eq!(check.verdict, Verdict::Pass);
        assert_eq!(report.entries[0].checks.len(), 1);
    }

    #[test]
    fn variability_duplicated_parents_fail() {
        use crate::model::{ContinuousSelectionModel, NodeEquation, ObservationMap};
        use std::collections::BTreeMap;
        // Two parents with identical equations: score rows are duplicated,
        // so the 2x2 difference matrix is singular at every probe subset.
        let graph = SelectionGraph::new(
            vec![
                vec![("t".to_string(), NodeKind::Continuous)],
                vec![
                    ("z1".to_string(), NodeKind::Continuous),
                    ("z2".to_string(), NodeKind::Continuous),
                ],
                vec![("x1".to_string(), NodeKind::Continuous), ("x2".to_string(), NodeKind::Continuous)],
            ],
            &[
                ("z1".into(), "t".into()),
                ("z2".into(), "t".into()),
                ("x1".into(), "z1".into()),
                ("x2".into(), "z2".into()),
            ],
        )
        .unwrap();
        let eq = NodeEquation::AffineLeaky {
            inputs: vec!["t".into()],
            weights: vec![0.9],
            bias: 0.1,
            leak: 0.2,
            noise_sigma: 1.0,
        };
        let mut equations = BTreeMap::new();
        equations.insert("z1".to_string(), eq.clone());
        equations.insert("z2".to_string(), eq);
        let mut top_sigma = BTreeMap::new();
        top_sigma.insert("t".to_string(), 1.0);
        let model = ContinuousSelectionModel {
            graph,
            equations,
            top_sigma,
            observation: ObservationMap {
                latent_weights: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                noise_weights: vec![vec![], vec![]],
                bias: vec![0.0, 0.0],
                leak: 0.2,
                noise_sigma: 0.0,
            },
        };
        let grid = VariabilityGrid::default_for(1);
        let report = check_sufficient_variability(&model, "t", &grid, 1e-8).unwrap();
        assert_eq!(report.entries[0].checks[0].verdict, Verdict::Fail);
    }
}
