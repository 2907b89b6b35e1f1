//! Canonical graphs and models used across tests, experiments, and the
//! CLI verify suite.

use crate::error::Result;
use crate::model::generate::{self, NoisyGateModel};
use crate::model::{DiscreteSelectionModel, NodeKind, SelectionGraph};

fn nodes(kind: NodeKind, ids: &[&str]) -> Vec<(String, NodeKind)> {
    ids.iter().map(|s| (s.to_string(), kind)).collect()
}

/// The visual concept demo graph: two text variables over three levels of
/// visual concepts of sizes 2, 4, and 6, with the canonical 19-edge
/// pattern (hybrid parents at every level).
pub fn visual_concept_graph() -> SelectionGraph {
    let levels = vec![
        nodes(NodeKind::Discrete, &["D1", "D2"]),
        nodes(NodeKind::Continuous, &["Z1.1", "Z1.2"]),
        nodes(NodeKind::Continuous, &["Z2.1", "Z2.2", "Z2.3", "Z2.4"]),
        nodes(NodeKind::Continuous, &["Z3.1", "Z3.2", "Z3.3", "Z3.4", "Z3.5", "Z3.6"]),
    ];
    let edge = |a: &str, b: &str| (a.to_string(), b.to_string());
    let edges = vec![
        edge("Z1.1", "D1"),
        edge("Z1.1", "D2"),
        edge("Z1.2", "D2"),
        edge("Z2.1", "Z1.1"),
        edge("Z2.2", "Z1.1"),
        edge("Z2.3", "Z1.1"),
        edge("Z2.2", "Z1.2"),
        edge("Z2.3", "Z1.2"),
        edge("Z2.4", "Z1.2"),
        edge("Z3.1", "Z2.1"),
        edge("Z3.1", "Z2.2"),
        edge("Z3.2", "Z2.1"),
        edge("Z3.2", "Z2.2"),
        edge("Z3.3", "Z2.2"),
        edge("Z3.4", "Z2.3"),
        edge("Z3.5", "Z2.2"),
        edge("Z3.5", "Z2.4"),
        edge("Z3.6", "Z2.3"),
        edge("Z3.6", "Z2.4"),
    ];
    SelectionGraph::new(levels, &edges).expect("canonical visual graph")
}

/// The textual concept demo graph: two top concepts, four mid concepts,
/// six observed tokens, with nested parent sets at the bottom layer
/// (pa(S2.1) sits inside pa(S2.2)), which makes it a useful hard case for
/// structure recovery.
pub fn textual_concept_graph() -> SelectionGraph {
    let levels = vec![
        nodes(NodeKind::Discrete, &["S1.1", "S1.2"]),
        nodes(NodeKind::Discrete, &["S2.1", "S2.2", "S2.3", "S2.4"]),
        nodes(NodeKind::Discrete, &["D1", "D2", "D3", "D4", "D5", "D6"]),
    ];
    let edge = |a: &str, b: &str| (a.to_string(), b.to_string());
    let edges = vec![
        edge("S2.1", "S1.1"),
        edge("S2.2", "S1.1"),
        edge("S2.3", "S1.1"),
        edge("S2.2", "S1.2"),
        edge("S2.3", "S1.2"),
        edge("S2.4", "S1.2"),
        edge("D1", "S2.1"),
        edge("D1", "S2.2"),
        edge("D2", "S2.1"),
        edge("D2", "S2.2"),
        edge("D3", "S2.2"),
        edge("D4", "S2.3"),
        edge("D5", "S2.2"),
        edge("D5", "S2.4"),
        edge("D6", "S2.3"),
        edge("D6", "S2.4"),
    ];
    SelectionGraph::new(levels, &edges).expect("canonical textual graph")
}

/// A fully specified discrete demo model in the same spirit as
/// [`textual_concept_graph`] (six observed tokens, four mid concepts with
/// one shared parent per adjacent pair, two top concepts), restricted to
/// the clique-recoverable family so the constructive identification
/// pipeline provably applies. Deterministic for a given seed.
pub fn textual_demo_model(seed: u64) -> Result<DiscreteSelectionModel> {
    generate::textual_demo_model(seed)
}

/// Binary activation model over the visual demo graph: all fourteen bits
/// observed, noisy threshold gates along the edges. The ground-truth
/// skeleton is retained for structure-recovery scoring.
pub fn visual_binary_model(seed: u64) -> NoisyGateModel {
    NoisyGateModel::random(visual_concept_graph(), seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_graphs_are_valid() {
        assert!(visual_concept_graph().validate().is_valid());
        assert!(textual_concept_graph().validate().is_valid());
    }

    #[test]
    fn visual_graph_has_nineteen_edges_and_hybrids() {
        let g = visual_concept_graph();
        assert_eq!(g.edges().len(), 19);
        // Z2.2 feeds both Z1.1 and Z1.2: a hybrid parent.
        let z22 = g.node_by_id("Z2.2").unwrap();
        assert_eq!(g.children(z22).len(), 2);
        assert!(!g.is_pure_parent(z22));
    }

    #[test]
    fn textual_graph_bottom_layer_is_nested() {
        let g = textual_concept_graph();
        let s21 = g.node_by_id("S2.1").unwrap();
        let s22 = g.node_by_id("S2.2").unwrap();
        let pa21: std::collections::BTreeSet<usize> = g.parents(s21).iter().copied().collect();
        let pa22: std::collections::BTreeSet<usize> = g.parents(s22).iter().copied().collect();
        assert!(pa21.is_subset(&pa22));
    }
}
