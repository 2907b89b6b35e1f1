//! Constructive identification of discrete hierarchical selection models
//! from the exact observed joint: level by level, find each variable's
//! co-parents through the nonnegative-rank bottleneck, introduce one
//! latent per maximal co-parent clique, recover each latent's selection
//! function by equivalence-class state merging, then marginalize onto the
//! learned latents and repeat until no bottleneck remains.

mod ci;
mod coparents;
mod equiv;
mod latents;
mod merge;
mod rank;

pub use ci::{ci_test, g_squared_ci, CiOutcome, CiTestSpec, GSquaredOutcome};
pub use coparents::{find_coparents, CoparentOptions, CoparentResult};
pub use equiv::{check_componentwise_equivalence, MatchReport};
pub use latents::{introduce_latents, IntroducedLatent, IntroducedLayer};
pub use merge::{merge_states, MergeOutcome};
pub use rank::{estimate_nonneg_rank, nonneg_rank_below, NonnegRankEstimate, RankBelow, RankOptions};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{JointTable, NodeKind, SelectionFunction, SelectionGraph};

/// Options for the full hierarchy recovery.
#[derive(Debug, Clone)]
pub struct IdentifyOptions {
    /// Maximum number of latent levels to introduce.
    pub level_cap: usize,
    /// Co-parent search options.
    pub coparents: CoparentOptions,
    /// Distribution-comparison tolerance for state merging.
    pub merge_tol: f64,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        IdentifyOptions { level_cap: 4, coparents: CoparentOptions::default(), merge_tol: 1e-9 }
    }
}

/// How one learned latent was justified.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatentProvenance {
    /// Learned latent id.
    pub latent: String,
    /// 1 = directly above the observed level.
    pub level_above_observed: usize,
    /// Parent variable ids.
    pub parents: Vec<String>,
    /// Conditional-independence / rank facts that justified the edges.
    pub facts: Vec<String>,
    /// Number of learned states.
    pub n_states: usize,
}

/// A recovered model: graph over learned latents plus observed variables,
/// selection functions total over the observed joint parent support, and
/// per-latent provenance. State labels are dense integers in order of
/// first appearance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnedDiscreteModel {
    /// Levels: coarsest learned level first, observed level last.
    pub graph: SelectionGraph,
    /// Value alphabets (observed: from the joint; learned: 0..k-1).
    pub supports: BTreeMap<String, Vec<u32>>,
    /// Selection function per learned latent.
    pub functions: BTreeMap<String, SelectionFunction>,
    /// Why each latent exists.
    pub provenance: Vec<LatentProvenance>,
}

impl LearnedDiscreteModel {
    /// Number of learned latent levels.
    pub fn learned_levels(&self) -> usize {
        self.graph.level_count() - 1
    }

    /// Serialize to the canonical JSON document (same schema as the
    /// ground-truth model file, with a provenance block instead of the
    /// generative tables).
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct File<'a> {
            schema_version: u32,
            #[serde(flatten)]
            model: &'a LearnedDiscreteModel,
        }
        Ok(serde_json::to_string_pretty(&File { schema_version: crate::SCHEMA_VERSION, model: self })? + "\n")
    }

    /// Parse the canonical JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct File {
            schema_version: u32,
            #[serde(flatten)]
            model: LearnedDiscreteModel,
        }
        let f: File = serde_json::from_str(text)?;
        if f.schema_version != crate::SCHEMA_VERSION {
            return Err(Error::InvalidModel(format!(
                "schema version {} unsupported",
                f.schema_version
            )));
        }
        let mut m = f.model;
        m.graph.rebuild_adjacency();
        Ok(m)
    }
}

/// The result of a recovery run. On failure of any sub-operation the model
/// holds everything built so far and `error` carries the reason.
#[derive(Debug, Clone)]
pub struct IdentifyOutcome {
    /// Learned model (possibly partial).
    pub model: LearnedDiscreteModel,
    /// Error annotation when the run could not complete.
    pub error: Option<String>,
}

struct LearnedLevel {
    labels: Vec<String>,
    functions: Vec<SelectionFunction>,
    provenance: Vec<LatentProvenance>,
    n_states: Vec<usize>,
}

/// Recover the latent hierarchy from the exact observed joint.
pub fn identify_hierarchy(observed: &JointTable, opts: &IdentifyOptions) -> IdentifyOutcome {
    let mut levels: Vec<LearnedLevel> = Vec::new();
    let mut current = observed.clone();
    let mut error: Option<String> = None;

    for depth in 1..=opts.level_cap {
        // Co-parent sets for every variable that exhibits a bottleneck.
        let mut cp: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        let mut facts: BTreeMap<usize, String> = BTreeMap::new();
        let mut fatal = None;
        for v in 0..current.n_vars() {
            match find_coparents(&current, v, &opts.coparents) {
                Ok(res) => {
                    facts.insert(v, res.fact.clone());
                    cp.insert(v, res.coparents);
                }
                Err(Error::NoBottleneck(_)) => {}
                Err(e) => {
                    fatal = Some(format!("level {depth}: {e}"));
                    break;
                }
            }
        }
        if let Some(e) = fatal {
            error = Some(e);
            break;
        }
        if cp.is_empty() {
            break; // top reached
        }
        let labels_vec: Vec<String> = current.labels().to_vec();
        let layer = match introduce_latents(&cp, &labels_vec) {
            Ok(l) => l,
            Err(e) => {
                error = Some(format!("level {depth}: {e}"));
                break;
            }
        };
        let mut level = LearnedLevel {
            labels: Vec::new(),
            functions: Vec::new(),
            provenance: Vec::new(),
            n_states: Vec::new(),
        };
        let mut failed = None;
        for (ix, latent) in layer.latents.iter().enumerate() {
            let label = format!("L{depth}.{}", ix + 1);
            match merge_states(&current, &layer, ix, &label, opts.merge_tol) {
                Ok(out) => {
                    let latent_facts: Vec<String> = latent
                        .parents
                        .iter()
                        .filter_map(|p| facts.get(p).cloned())
                        .chain(out.notes.iter().cloned())
                        .collect();
                    level.provenance.push(LatentProvenance {
                        latent: label.clone(),
                        level_above_observed: depth,
                        parents: out.function.parents.clone(),
                        facts: latent_facts,
                        n_states: out.n_states,
                    });
                    level.labels.push(label);
                    level.n_states.push(out.n_states);
                    level.functions.push(out.function);
                }
                Err(e) => {
                    failed = Some(format!("level {depth}, latent {label}: {e}"));
                    break;
                }
            }
        }
        if let Some(e) = failed {
            error = Some(e);
            break;
        }
        // Marginalize onto the learned latents.
        let parent_vars: Vec<Vec<usize>> = level
            .functions
            .iter()
            .map(|f| {
                f.parents
                    .iter()
                    .map(|p| current.var_by_label(p).expect("parent in joint"))
                    .collect()
            })
            .collect();
        let new_vars: Vec<(String, Vec<u32>)> = level
            .labels
            .iter()
            .zip(&level.n_states)
            .map(|(l, &k)| (l.clone(), (0..k as u32).collect()))
            .collect();
        let snapshot = current.clone();
        match snapshot.pushforward(new_vars, |nv, cfg| {
            let f = &level.functions[nv];
            let values: Vec<u32> = parent_vars[nv]
                .iter()
                .map(|&v| snapshot.alphabet(v)[cfg[v]])
                .collect();
            f.apply(&values).expect("function total over observed support")
        }) {
            Ok(next) => current = next,
            Err(e) => {
                error = Some(format!("level {depth}: {e}"));
                levels.push(level);
                break;
            }
        }
        levels.push(level);
    }

    IdentifyOutcome { model: assemble(observed, &levels), error }
}

fn assemble(observed: &JointTable, levels: &[LearnedLevel]) -> LearnedDiscreteModel {
    // Graph levels: deepest learned level first, observed last.
    let mut graph_levels: Vec<Vec<(String, NodeKind)>> = Vec::new();
    for level in levels.iter().rev() {
        graph_levels.push(level.labels.iter().map(|l| (l.clone(), NodeKind::Discrete)).collect());
    }
    graph_levels.push(
        observed
            .labels()
            .iter()
            .map(|l| (l.clone(), NodeKind::Discrete))
            .collect(),
    );
    let mut edges = Vec::new();
    let mut supports = BTreeMap::new();
    let mut functions = BTreeMap::new();
    let mut provenance = Vec::new();
    for (v, label) in observed.labels().iter().enumerate() {
        supports.insert(label.clone(), observed.alphabet(v).to_vec());
    }
    for level in levels {
        for (i, f) in level.functions.iter().enumerate() {
            let label = &level.labels[i];
            supports.insert(label.clone(), (0..level.n_states[i] as u32).collect());
            for p in &f.parents {
                edges.push((p.clone(), label.clone()));
            }
            functions.insert(label.clone(), f.clone());
        }
        provenance.extend(level.provenance.iter().cloned());
    }
    let graph = SelectionGraph::new(graph_levels, &edges).expect("learned graph is well-formed");
    LearnedDiscreteModel { graph, supports, functions, provenance }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn independent_variables_learn_zero_levels() {
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
        let out = identify_hierarchy(&joint, &IdentifyOptions::default());
        assert!(out.error.is_none(), "{:?}", out.error);
        assert_eq!(out.model.learned_levels(), 0);
        assert!(out.model.functions.is_empty());
    }
}
