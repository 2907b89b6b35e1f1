//! Equivalence-class state merging: recover a learned latent's selection
//! function from the exact joint.
//!
//! Stage one merges parent configurations with the same hybrid values when
//! they induce identical conditional distributions over everything outside
//! the parent set. Stage two links configurations across hybrid values:
//! treating the parent tuple as a meta-variable that is a pure parent of
//! the combined children of the hybrids, two configurations merge when no
//! value of the extended conditioning set (the other parents of those
//! children) distinguishes their conditionals over the remaining
//! variables. Vacuous comparisons merge: the minimality principle keeps
//! the largest equivalence classes. Same-hybrid pairs are decided by stage
//! one alone; stage two conditions away strictly more variables, so
//! applying it within a hybrid slice could only blur distinctions stage
//! one already made.

use crate::error::{Error, Result};
use crate::model::{JointTable, SelectionFunction};

use super::latents::IntroducedLayer;

/// Result of a state merge.
#[derive(Debug, Clone)]
pub struct MergeOutcome {
    /// The learned selection function, total over the observed joint
    /// parent support, with dense states 0..k-1 labeled in order of first
    /// appearance.
    pub function: SelectionFunction,
    /// Number of learned states.
    pub n_states: usize,
    /// Diagnostics for provenance records.
    pub notes: Vec<String>,
}

/// Distributions farther apart than `tol` but closer than this multiple of
/// it are inconclusive and abort the merge.
const AMBIGUITY_BAND: f64 = 1e3;

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Merge the states of `layer.latents[latent_ix]` on the exact joint.
pub fn merge_states(
    joint: &JointTable,
    layer: &IntroducedLayer,
    latent_ix: usize,
    latent_label: &str,
    tol: f64,
) -> Result<MergeOutcome> {
    let latent = &layer.latents[latent_ix];
    let pa = &latent.parents;
    let domain = joint.joint_positive_support(pa);
    if domain.is_empty() {
        return Err(Error::InvalidModel(format!(
            "latent {latent_label} has empty observed parent support"
        )));
    }
    let all: Vec<usize> = (0..joint.n_vars()).collect();
    let rest1: Vec<usize> = all.iter().copied().filter(|v| !pa.contains(v)).collect();
    let assign = |vars: &[usize], cfg: &[usize]| -> Vec<(usize, usize)> {
        vars.iter().copied().zip(cfg.iter().copied()).collect()
    };
    let values_of = |cfg: &[usize]| -> Vec<u32> {
        pa.iter().zip(cfg).map(|(&v, &pos)| joint.alphabet(v)[pos]).collect()
    };
    let h_pos: Vec<usize> = pa
        .iter()
        .enumerate()
        .filter(|(_, v)| latent.hybrid.contains(v))
        .map(|(i, _)| i)
        .collect();
    let h_part = |cfg: &[usize]| -> Vec<usize> { h_pos.iter().map(|&i| cfg[i]).collect() };

    let cond1: Vec<Option<Vec<f64>>> = domain
        .iter()
        .map(|cfg| {
            if rest1.is_empty() {
                None
            } else {
                joint.conditional_dist(&rest1, &assign(pa, cfg))
            }
        })
        .collect();

    let mut uf = UnionFind::new(domain.len());
    let mut ambiguous: Option<(usize, usize)> = None;
    // Stage 1: same hybrid values, identical conditionals elsewhere.
    for i in 0..domain.len() {
        for j in i + 1..domain.len() {
            if h_part(&domain[i]) != h_part(&domain[j]) {
                continue;
            }
            match (&cond1[i], &cond1[j]) {
                (Some(a), Some(b)) => {
                    let d = tv(a, b);
                    if d <= tol {
                        uf.union(i, j);
                    } else if d <= AMBIGUITY_BAND * tol {
                        ambiguous.get_or_insert((i, j));
                    }
                }
                // Vacuous comparison: indistinguishable, so merge.
                _ => uf.union(i, j),
            }
        }
    }

    // Stage 2: link across hybrid values through the shared children.
    if !latent.hybrid.is_empty() {
        let sharer_parents: std::collections::BTreeSet<usize> = layer
            .latents
            .iter()
            .filter(|l| l.parents.iter().any(|p| latent.hybrid.contains(p)))
            .flat_map(|l| l.parents.iter().copied())
            .collect();
        let ttilde: Vec<usize> =
            sharer_parents.iter().copied().filter(|v| !pa.contains(v)).collect();
        let rest2: Vec<usize> =
            all.iter().copied().filter(|v| !sharer_parents.contains(v)).collect();
        // Positive (parents, ttilde) support, grouped by parent config.
        let mut t_of: std::collections::BTreeMap<Vec<usize>, Vec<Vec<usize>>> =
            std::collections::BTreeMap::new();
        if !ttilde.is_empty() {
            let ext: Vec<usize> = pa.iter().chain(&ttilde).copied().collect();
            for cfg in joint.joint_positive_support(&ext) {
                let (p, t) = cfg.split_at(pa.len());
                t_of.entry(p.to_vec()).or_default().push(t.to_vec());
            }
        }
        for i in 0..domain.len() {
            for j in i + 1..domain.len() {
                if h_part(&domain[i]) == h_part(&domain[j]) {
                    continue;
                }
                let empty = Vec::new();
                let ti = t_of.get(&domain[i]).unwrap_or(&empty);
                let tj = t_of.get(&domain[j]).unwrap_or(&empty);
                let common: Vec<&Vec<usize>> = ti.iter().filter(|t| tj.contains(t)).collect();
                let mut distinct = false;
                let mut in_band = false;
                let mut equal_everywhere = true;
                for t in &common {
                    let mut given_i = assign(pa, &domain[i]);
                    given_i.extend(assign(&ttilde, t));
                    let mut given_j = assign(pa, &domain[j]);
                    given_j.extend(assign(&ttilde, t));
                    let (da, db) = if rest2.is_empty() {
                        continue; // vacuous at this cell
                    } else {
                        match (
                            joint.conditional_dist(&rest2, &given_i),
                            joint.conditional_dist(&rest2, &given_j),
                        ) {
                            (Some(a), Some(b)) => (a, b),
                            _ => continue,
                        }
                    };
                    let d = tv(&da, &db);
                    if d > AMBIGUITY_BAND * tol {
                        distinct = true;
                        equal_everywhere = false;
                        break;
                    } else if d > tol {
                        in_band = true;
                        equal_everywhere = false;
                    }
                }
                if distinct {
                    continue;
                }
                if in_band {
                    ambiguous.get_or_insert((i, j));
                    continue;
                }
                debug_assert!(equal_everywhere);
                uf.union(i, j);
            }
        }
    }

    if let Some((i, j)) = ambiguous {
        return Err(Error::AmbiguousMerge {
            latent: latent_label.to_string(),
            left: values_of(&domain[i]),
            right: values_of(&domain[j]),
        });
    }

    // Dense labels in order of first appearance over the lex-ordered domain.
    let mut class_label: std::collections::BTreeMap<usize, u32> = std::collections::BTreeMap::new();
    let mut entries = Vec::with_capacity(domain.len());
    for (i, cfg) in domain.iter().enumerate() {
        let root = uf.find(i);
        let next = class_label.len() as u32;
        let label = *class_label.entry(root).or_insert(next);
        entries.push((values_of(cfg), label));
    }
    let n_states = class_label.len();
    let parent_labels: Vec<String> = pa.iter().map(|&v| joint.label(v).to_string()).collect();
    let function = SelectionFunction::new(latent_label, parent_labels, entries)?;
    Ok(MergeOutcome {
        function,
        n_states,
        notes: vec![format!(
            "{} parent configurations merged into {n_states} states ({} pure, {} hybrid parents)",
            domain.len(),
            latent.pure.len(),
            latent.hybrid.len()
        )],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ident::latents::IntroducedLatent;
    use crate::model::JointTable;

    /// Joint over (a, b, w) where w is a downstream witness whose
    /// distribution depends on f(a, b) only.
    fn witnessed_joint(f: impl Fn(u32, u32) -> u32, n_states: usize) -> JointTable {
        // P(w | state) columns: distinct per state.
        let w_cols: Vec<Vec<f64>> = (0..n_states)
            .map(|s| {
                let p = 0.15 + 0.7 * (s as f64) / (n_states.max(2) as f64 - 1.0);
                vec![p, 1.0 - p]
            })
            .collect();
        let mut masses = vec![0.0; 2 * 2 * 2];
        for a in 0..2u32 {
            for b in 0..2u32 {
                let s = f(a, b) as usize;
                // Mildly nonuniform base weights over (a, b).
                let base = 1.0 + 0.2 * a as f64 + 0.35 * b as f64;
                for w in 0..2usize {
                    masses[(a as usize) * 4 + (b as usize) * 2 + w] = base * w_cols[s][w];
                }
            }
        }
        JointTable::from_masses(
            vec!["a".into(), "b".into(), "w".into()],
            vec![vec![0, 1], vec![0, 1], vec![0, 1]],
            masses,
        )
        .unwrap()
    }

    fn pure_layer() -> IntroducedLayer {
        IntroducedLayer {
            latents: vec![IntroducedLatent {
                parents: vec![0, 1],
                pure: vec![0, 1],
                hybrid: vec![],
            }],
        }
    }

    #[test]
    fn or_merges_to_two_states() {
        let joint = witnessed_joint(|a, b| u32::from(a == 1 || b == 1), 2);
        let out = merge_states(&joint, &pure_layer(), 0, "s", 1e-9).unwrap();
        assert_eq!(out.n_states, 2);
        let f = &out.function;
        assert_eq!(f.apply(&[0, 0]).unwrap(), 0);
        for tuple in [[0u32, 1], [1, 0], [1, 1]] {
            assert_eq!(f.apply(&tuple).unwrap(), 1, "{tuple:?}");
        }
    }

    #[test]
    fn xor_merges_to_parity_classes() {
        let joint = witnessed_joint(|a, b| a ^ b, 2);
        let out = merge_states(&joint, &pure_layer(), 0, "s", 1e-9).unwrap();
        assert_eq!(out.n_states, 2);
        let f = &out.function;
        assert_eq!(f.apply(&[0, 0]).unwrap(), f.apply(&[1, 1]).unwrap());
        assert_eq!(f.apply(&[0, 1]).unwrap(), f.apply(&[1, 0]).unwrap());
        assert_ne!(f.apply(&[0, 0]).unwrap(), f.apply(&[0, 1]).unwrap());
        // Canonical labels: first appearance order makes (0,0) state 0.
        assert_eq!(f.apply(&[0, 0]).unwrap(), 0);
    }

    #[test]
    fn injective_selection_keeps_singleton_classes() {
        let joint = witnessed_joint(|a, b| a * 2 + b, 4);
        let out = merge_states(&joint, &pure_layer(), 0, "s", 1e-9).unwrap();
        assert_eq!(out.n_states, 4);
    }
}
