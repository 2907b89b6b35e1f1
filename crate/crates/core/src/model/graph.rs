//! Leveled selection graphs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether a node carries a continuous or a discrete value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    /// Real-valued concept.
    Continuous,
    /// Finite-support concept.
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Node {
    id: String,
    level: usize,
    kind: NodeKind,
}

/// A leveled DAG of concepts. Edges run from a node at level `l+1` (finer,
/// a *parent* in selection terms) to a node at level `l` (coarser, the
/// *child* concept selected by its parents). Level 0 is the top.
///
/// The structure is immutable after construction; acyclicity holds by
/// construction for any edge set that passes [`SelectionGraph::validate`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionGraph {
    nodes: Vec<Node>,
    /// Node indices per level, coarsest first.
    levels: Vec<Vec<usize>>,
    /// Edges as (finer node, coarser node) index pairs.
    edges: Vec<(usize, usize)>,
    #[serde(skip)]
    parents_of: Vec<Vec<usize>>,
    #[serde(skip)]
    children_of: Vec<Vec<usize>>,
}

impl PartialEq for SelectionGraph {
    /// Compares structure only; adjacency caches are derived.
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.levels == other.levels && self.edges == other.edges
    }
}

impl SelectionGraph {
    /// Build a graph from per-level node ids and (finer id, coarser id)
    /// edges. Fails on duplicate or unknown ids; structural violations are
    /// reported by [`validate`](Self::validate), not here.
    pub fn new(
        levels: Vec<Vec<(String, NodeKind)>>,
        edges: &[(String, String)],
    ) -> Result<Self> {
        let mut nodes = Vec::new();
        let mut level_ix = Vec::new();
        let mut by_id = BTreeMap::new();
        for (level, ids) in levels.into_iter().enumerate() {
            let mut this_level = Vec::new();
            for (id, kind) in ids {
                if by_id.insert(id.clone(), nodes.len()).is_some() {
                    return Err(Error::InvalidModel(format!("duplicate node id {id}")));
                }
                this_level.push(nodes.len());
                nodes.push(Node { id, level, kind });
            }
            level_ix.push(this_level);
        }
        let mut edge_ix = Vec::with_capacity(edges.len());
        let mut seen = BTreeSet::new();
        for (from, to) in edges {
            let f = *by_id
                .get(from)
                .ok_or_else(|| Error::InvalidModel(format!("unknown edge source {from}")))?;
            let t = *by_id
                .get(to)
                .ok_or_else(|| Error::InvalidModel(format!("unknown edge target {to}")))?;
            if !seen.insert((f, t)) {
                return Err(Error::InvalidModel(format!("duplicate edge {from} -> {to}")));
            }
            edge_ix.push((f, t));
        }
        edge_ix.sort_unstable();
        let mut g = SelectionGraph {
            nodes,
            levels: level_ix,
            edges: edge_ix,
            parents_of: Vec::new(),
            children_of: Vec::new(),
        };
        g.rebuild_adjacency();
        Ok(g)
    }

    /// Recompute adjacency caches (needed after deserialization).
    pub fn rebuild_adjacency(&mut self) {
        let n = self.nodes.len();
        self.parents_of = vec![Vec::new(); n];
        self.children_of = vec![Vec::new(); n];
        for &(f, t) in &self.edges {
            // f is finer: a parent of the coarser concept t.
            self.parents_of[t].push(f);
            self.children_of[f].push(t);
        }
    }

    /// Number of levels (top level is 0).
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    /// Node indices at `level`, in declaration order.
    pub fn level_nodes(&self, level: usize) -> &[usize] {
        &self.levels[level]
    }

    /// Total node count.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// All (finer, coarser) edges, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Id of a node.
    pub fn id(&self, node: usize) -> &str {
        &self.nodes[node].id
    }

    /// Level of a node.
    pub fn level(&self, node: usize) -> usize {
        self.nodes[node].level
    }

    /// Kind of a node.
    pub fn kind(&self, node: usize) -> NodeKind {
        self.nodes[node].kind
    }

    /// Index of the node with the given id.
    pub fn node_by_id(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Parents of a concept: the finer-level nodes that compose it.
    pub fn parents(&self, node: usize) -> &[usize] {
        &self.parents_of[node]
    }

    /// Children of a node: the coarser concepts it helps select.
    pub fn children(&self, node: usize) -> &[usize] {
        &self.children_of[node]
    }

    /// A parent with exactly one child is *pure*; with more it is *hybrid*.
    pub fn is_pure_parent(&self, node: usize) -> bool {
        self.children_of[node].len() == 1
    }

    /// Parents of `node` partitioned into (pure, hybrid).
    pub fn split_parents(&self, node: usize) -> (Vec<usize>, Vec<usize>) {
        let mut pure = Vec::new();
        let mut hybrid = Vec::new();
        for &p in self.parents(node) {
            if self.is_pure_parent(p) {
                pure.push(p);
            } else {
                hybrid.push(p);
            }
        }
        (pure, hybrid)
    }

    /// All finer-level nodes with a directed path into `node`: the cone of
    /// variables generated downstream of this concept. Includes nothing at
    /// coarser levels and not `node` itself.
    pub fn influence_cone(&self, node: usize) -> BTreeSet<usize> {
        let mut cone = BTreeSet::new();
        let mut stack: Vec<usize> = self.parents(node).to_vec();
        while let Some(v) = stack.pop() {
            if cone.insert(v) {
                stack.extend_from_slice(self.parents(v));
            }
        }
        cone
    }

    /// Structural validation: leveled edges and non-orphan concepts.
    pub fn validate(&self) -> ValidationReport {
        let mut issues = Vec::new();
        for &(f, t) in &self.edges {
            let (lf, lt) = (self.nodes[f].level, self.nodes[t].level);
            if lf == lt {
                issues.push(ValidationIssue {
                    kind: "within-level edge".into(),
                    detail: format!(
                        "{} -> {} both at level {lf}",
                        self.nodes[f].id, self.nodes[t].id
                    ),
                });
            } else if lf != lt + 1 {
                issues.push(ValidationIssue {
                    kind: "level-skipping edge".into(),
                    detail: format!(
                        "{} (level {lf}) -> {} (level {lt})",
                        self.nodes[f].id, self.nodes[t].id
                    ),
                });
            }
        }
        // Every node above the bottom level must be composed of something.
        let bottom = self.levels.len().saturating_sub(1);
        for (ix, node) in self.nodes.iter().enumerate() {
            if node.level < bottom && self.parents_of[ix].is_empty() {
                issues.push(ValidationIssue {
                    kind: "orphan concept".into(),
                    detail: format!("{} at level {} has no parents", node.id, node.level),
                });
            }
        }
        ValidationReport { issues }
    }
}

/// One structural violation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationIssue {
    /// Violation class, e.g. "within-level edge".
    pub kind: String,
    /// Human-readable location.
    pub detail: String,
}

/// Outcome of [`SelectionGraph::validate`]; empty iff the graph is valid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    /// All detected violations.
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    /// True when no violations were found.
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(ids: &[&str]) -> Vec<(String, NodeKind)> {
        ids.iter().map(|s| (s.to_string(), NodeKind::Discrete)).collect()
    }

    #[test]
    fn within_level_edge_is_flagged() {
        let g = SelectionGraph::new(
            vec![line(&["a"]), line(&["b", "c"])],
            &[
                ("b".into(), "a".into()),
                ("c".into(), "a".into()),
                ("b".into(), "c".into()),
            ],
        )
        .unwrap();
        let report = g.validate();
        assert_eq!(report.issues.len(), 1);
        assert_eq!(report.issues[0].kind, "within-level edge");
    }

    #[test]
    fn single_level_graph_is_vacuously_valid() {
        let g = SelectionGraph::new(vec![line(&["a", "b"])], &[]).unwrap();
        assert!(g.validate().is_valid());
    }

    #[test]
    fn orphan_concept_is_flagged() {
        let g = SelectionGraph::new(
            vec![line(&["a", "b"]), line(&["c"])],
            &[("c".into(), "a".into())],
        )
        .unwrap();
        let report = g.validate();
        assert!(!report.is_valid());
        assert!(report.issues.iter().any(|i| i.kind == "orphan concept" && i.detail.contains('b')));
    }

    #[test]
    fn pure_and_hybrid_parents() {
        let g = SelectionGraph::new(
            vec![line(&["a", "b"]), line(&["p", "h", "q"])],
            &[
                ("p".into(), "a".into()),
                ("h".into(), "a".into()),
                ("h".into(), "b".into()),
                ("q".into(), "b".into()),
            ],
        )
        .unwrap();
        let a = g.node_by_id("a").unwrap();
        let (pure, hybrid) = g.split_parents(a);
        assert_eq!(pure, vec![g.node_by_id("p").unwrap()]);
        assert_eq!(hybrid, vec![g.node_by_id("h").unwrap()]);
    }

    #[test]
    fn influence_cone_is_transitive() {
        let g = SelectionGraph::new(
            vec![line(&["t"]), line(&["m1", "m2"]), line(&["x", "y", "z"])],
            &[
                ("m1".into(), "t".into()),
                ("m2".into(), "t".into()),
                ("x".into(), "m1".into()),
                ("y".into(), "m1".into()),
                ("z".into(), "m2".into()),
            ],
        )
        .unwrap();
        let t = g.node_by_id("t").unwrap();
        let cone = g.influence_cone(t);
        assert_eq!(cone.len(), 5);
        let m1 = g.node_by_id("m1").unwrap();
        let cone1 = g.influence_cone(m1);
        assert_eq!(
            cone1.iter().map(|&n| g.id(n)).collect::<Vec<_>>(),
            vec!["x", "y"]
        );
    }
}
