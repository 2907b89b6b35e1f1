//! Latent introduction: one learned latent per maximal co-parent clique.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

/// One introduced latent with its parent set split by purity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntroducedLatent {
    /// Parent variable indices (the clique).
    pub parents: Vec<usize>,
    /// Parents belonging to no other introduced latent.
    pub pure: Vec<usize>,
    /// Parents shared with another introduced latent.
    pub hybrid: Vec<usize>,
}

/// The learned bipartite layer.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IntroducedLayer {
    /// Introduced latents in canonical (sorted parent set) order.
    pub latents: Vec<IntroducedLatent>,
}

/// Build the next latent layer from a co-parent map: vertices are the
/// mapped variables, edges join mutual co-parents, and each maximal clique
/// becomes one latent whose parents are the clique members. Parents in a
/// single clique are pure, the rest hybrid.
///
/// The map must be symmetric-consistent; `labels` is used for error text.
pub fn introduce_latents(
    coparents: &BTreeMap<usize, BTreeSet<usize>>,
    labels: &[String],
) -> Result<IntroducedLayer> {
    for (&a, set) in coparents {
        for &b in set {
            if !coparents.get(&b).is_some_and(|s| s.contains(&a)) {
                return Err(Error::InconsistentCoparents {
                    a: labels.get(a).cloned().unwrap_or_else(|| a.to_string()),
                    b: labels.get(b).cloned().unwrap_or_else(|| b.to_string()),
                });
            }
        }
    }
    let vertices: Vec<usize> = coparents.keys().copied().collect();
    if vertices.is_empty() {
        return Ok(IntroducedLayer::default());
    }
    let adjacent = |a: usize, b: usize| coparents[&a].contains(&b);
    let mut cliques: Vec<Vec<usize>> = Vec::new();
    bron_kerbosch(
        &mut Vec::new(),
        vertices.clone().into_iter().collect(),
        BTreeSet::new(),
        &adjacent,
        &mut cliques,
    );
    cliques.sort();
    let mut membership: BTreeMap<usize, usize> = BTreeMap::new();
    for clique in &cliques {
        for &v in clique {
            *membership.entry(v).or_insert(0) += 1;
        }
    }
    let latents = cliques
        .into_iter()
        .map(|clique| {
            let (pure, hybrid): (Vec<usize>, Vec<usize>) =
                clique.iter().partition(|v| membership[v] == 1);
            IntroducedLatent { parents: clique, pure, hybrid }
        })
        .collect();
    Ok(IntroducedLayer { latents })
}

/// Bron–Kerbosch with pivoting over an implicit adjacency predicate.
fn bron_kerbosch(
    r: &mut Vec<usize>,
    mut p: BTreeSet<usize>,
    mut x: BTreeSet<usize>,
    adjacent: &dyn Fn(usize, usize) -> bool,
    out: &mut Vec<Vec<usize>>,
) {
    if p.is_empty() && x.is_empty() {
        let mut clique = r.clone();
        clique.sort_unstable();
        out.push(clique);
        return;
    }
    // Pivot: the candidate with the most neighbours in P.
    let pivot = p
        .iter()
        .chain(x.iter())
        .copied()
        .max_by_key(|&u| p.iter().filter(|&&v| adjacent(u, v)).count())
        .expect("nonempty P or X");
    let candidates: Vec<usize> = p.iter().copied().filter(|&v| !adjacent(pivot, v)).collect();
    for v in candidates {
        let np: BTreeSet<usize> = p.iter().copied().filter(|&u| adjacent(v, u)).collect();
        let nx: BTreeSet<usize> = x.iter().copied().filter(|&u| adjacent(v, u)).collect();
        r.push(v);
        bron_kerbosch(r, np, nx, adjacent, out);
        r.pop();
        p.remove(&v);
        x.insert(v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(entries: &[(usize, &[usize])]) -> BTreeMap<usize, BTreeSet<usize>> {
        entries
            .iter()
            .map(|(k, vs)| (*k, vs.iter().copied().collect()))
            .collect()
    }

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("d{i}")).collect()
    }

    #[test]
    fn disjoint_pairs_make_two_latents() {
        let cp = map(&[(0, &[1]), (1, &[0]), (2, &[3]), (3, &[2])]);
        let layer = introduce_latents(&cp, &labels(4)).unwrap();
        assert_eq!(layer.latents.len(), 2);
        assert_eq!(layer.latents[0].parents, vec![0, 1]);
        assert_eq!(layer.latents[1].parents, vec![2, 3]);
        assert!(layer.latents.iter().all(|l| l.hybrid.is_empty()));
    }

    #[test]
    fn overlapping_cliques_share_hybrids() {
        // {d0,d1,d2} and {d1,d2,d3}: d1, d2 are hybrid parents of both.
        let cp = map(&[
            (0, &[1, 2]),
            (1, &[0, 2, 3]),
            (2, &[0, 1, 3]),
            (3, &[1, 2]),
        ]);
        let layer = introduce_latents(&cp, &labels(4)).unwrap();
        assert_eq!(layer.latents.len(), 2);
        assert_eq!(layer.latents[0].parents, vec![0, 1, 2]);
        assert_eq!(layer.latents[1].parents, vec![1, 2, 3]);
        assert_eq!(layer.latents[0].pure, vec![0]);
        assert_eq!(layer.latents[0].hybrid, vec![1, 2]);
        assert_eq!(layer.latents[1].pure, vec![3]);
    }

    #[test]
    fn empty_map_gives_empty_layer() {
        let layer = introduce_latents(&BTreeMap::new(), &[]).unwrap();
        assert!(layer.latents.is_empty());
    }

    #[test]
    fn isolated_vertex_becomes_single_parent_latent() {
        let cp = map(&[(0, &[]), (1, &[2]), (2, &[1])]);
        let layer = introduce_latents(&cp, &labels(3)).unwrap();
        assert_eq!(layer.latents.len(), 2);
        assert_eq!(layer.latents[0].parents, vec![0]);
        assert_eq!(layer.latents[1].parents, vec![1, 2]);
    }

    #[test]
    fn asymmetry_is_reported_with_the_pair() {
        let cp = map(&[(0, &[1]), (1, &[])]);
        match introduce_latents(&cp, &labels(2)) {
            Err(Error::InconsistentCoparents { a, b }) => {
                assert_eq!((a.as_str(), b.as_str()), ("d0", "d1"));
            }
            other => panic!("expected inconsistency, got {other:?}"),
        }
    }
}
