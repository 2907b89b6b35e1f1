//! Identification-quality metrics: component matching by rank
//! correlation, mask overlap and coverage, per-level attribution spread,
//! deactivation effect, and graph distance.
//!
//! Rank correlation is the association measure because component-wise
//! equivalence permits an arbitrary invertible map per component, which
//! rank statistics absorb whenever the map is monotone. Non-monotone
//! invertible maps are a known blind spot of this choice.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::discovery::ConceptGraph;
use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::numerics;

// ── Component matching ────────────────────────────────────────────────

/// Result of the optimal component assignment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentMatch {
    /// For each true component, the matched learned column (or None when
    /// there are fewer learned columns than true ones).
    pub assignment: Vec<Option<usize>>,
    /// Absolute rank correlation of each matched pair.
    pub scores: Vec<f64>,
    /// Mean matched score: the component-matching score.
    pub mean_score: f64,
    /// Columns whose correlations were pinned to 0 for being constant.
    pub constant_columns: Vec<String>,
}

/// Match learned code columns to true latent columns: absolute Spearman
/// correlation for every pair, then an exact maximum assignment; the mean
/// matched score is the headline number. Constant columns correlate as 0
/// and are reported.
pub fn match_components(true_latents: &Dataset, learned_codes: &Dataset) -> Result<ComponentMatch> {
    if true_latents.n_rows() != learned_codes.n_rows() {
        return Err(Error::ShapeMismatch(format!(
            "{} vs {} rows",
            true_latents.n_rows(),
            learned_codes.n_rows()
        )));
    }
    if true_latents.n_rows() < 2 {
        return Err(Error::Config("need at least two rows to rank-correlate".into()));
    }
    let (nt, nl) = (true_latents.n_cols(), learned_codes.n_cols());
    let mut constant_columns = Vec::new();
    let t_cols: Vec<Vec<f64>> = (0..nt).map(|c| true_latents.column(c)).collect();
    let l_cols: Vec<Vec<f64>> = (0..nl).map(|c| learned_codes.column(c)).collect();
    let mut score = DMatrix::zeros(nt, nl);
    for i in 0..nt {
        for j in 0..nl {
            score[(i, j)] = numerics::spearman(&t_cols[i], &l_cols[j]).map_or(0.0, f64::abs);
        }
    }
    for (label, col) in true_latents.labels.iter().zip(&t_cols) {
        if col.windows(2).all(|w| w[0] == w[1]) {
            constant_columns.push(label.clone());
        }
    }
    for (label, col) in learned_codes.labels.iter().zip(&l_cols) {
        if col.windows(2).all(|w| w[0] == w[1]) {
            constant_columns.push(label.clone());
        }
    }
    let assigned = numerics::assignment_max(&score);
    let mut assignment = Vec::with_capacity(nt);
    let mut scores = Vec::new();
    for (i, &col) in assigned.iter().enumerate() {
        if col == usize::MAX {
            assignment.push(None);
        } else {
            assignment.push(Some(col));
            scores.push(score[(i, col)]);
        }
    }
    let mean_score = scores.iter().sum::<f64>() / scores.len().max(1) as f64;
    Ok(ComponentMatch { assignment, scores, mean_score, constant_columns })
}

// ── Masks ─────────────────────────────────────────────────────────────

/// Mean pairwise intersection-over-union and union coverage (percent) of a
/// family of equally shaped binary masks. Pairs whose union is empty are
/// skipped.
pub fn overlap_coverage(masks: &[Vec<bool>]) -> Result<(f64, f64)> {
    let first = masks.first().ok_or_else(|| Error::Config("empty mask list".into()))?;
    let len = first.len();
    if masks.iter().any(|m| m.len() != len) {
        return Err(Error::ShapeMismatch("masks differ in shape".into()));
    }
    if len == 0 {
        return Err(Error::Config("zero-size masks".into()));
    }
    let mut iou_sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..masks.len() {
        for j in i + 1..masks.len() {
            let mut inter = 0usize;
            let mut union = 0usize;
            for (a, b) in masks[i].iter().zip(&masks[j]) {
                inter += usize::from(*a && *b);
                union += usize::from(*a || *b);
            }
            if union > 0 {
                iou_sum += inter as f64 / union as f64;
                pairs += 1;
            }
        }
    }
    let mean_iou = if pairs > 0 { iou_sum / pairs as f64 } else { 0.0 };
    let mut covered = vec![false; len];
    for m in masks {
        for (c, &b) in covered.iter_mut().zip(m) {
            *c |= b;
        }
    }
    let coverage = 100.0 * covered.iter().filter(|&&c| c).count() as f64 / len as f64;
    Ok((mean_iou, coverage))
}

/// One row of a spatial-spread report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadRow {
    /// Level the masks came from.
    pub level: u32,
    /// Top-k cutoff.
    pub top_k: usize,
    /// Mean activated proportion over the first k masks.
    pub proportion: f64,
}

/// Per-level, per-top-k mean activated proportion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadReport {
    /// Rows ascending by (level, top_k).
    pub rows: Vec<SpreadRow>,
}

impl SpreadReport {
    /// The proportion for one (level, k) pair.
    pub fn proportion(&self, level: u32, top_k: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.level == level && r.top_k == top_k).map(|r| r.proportion)
    }
}

/// Mean activated proportion of the first k masks per level; masks arrive
/// ordered by feature importance within each level.
pub fn spatial_spread(
    masks_by_level: &BTreeMap<u32, Vec<Vec<bool>>>,
    top_k: &[usize],
) -> Result<SpreadReport> {
    let mut ks = top_k.to_vec();
    ks.sort_unstable();
    let mut rows = Vec::new();
    for (&level, masks) in masks_by_level {
        for &k in &ks {
            if k > masks.len() {
                return Err(Error::Config(format!(
                    "top-{k} requested but level {level} offers {} masks",
                    masks.len()
                )));
            }
            let mut total = 0.0;
            for m in &masks[..k] {
                total += m.iter().filter(|&&b| b).count() as f64 / m.len().max(1) as f64;
            }
            rows.push(SpreadRow { level, top_k: k, proportion: total / k.max(1) as f64 });
        }
    }
    Ok(SpreadReport { rows })
}

/// Mean per-row L1 distance and cosine similarity between an original and
/// a modified dataset; rows where either vector is zero are skipped for
/// the cosine and counted.
pub fn deactivation_effect(original: &Dataset, modified: &Dataset) -> Result<(f64, f64, usize)> {
    if original.n_rows() != modified.n_rows() || original.n_cols() != modified.n_cols() {
        return Err(Error::ShapeMismatch("datasets differ in shape".into()));
    }
    let mut l1 = 0.0;
    let mut cos = 0.0;
    let mut cos_rows = 0usize;
    let mut skipped = 0usize;
    for (a, b) in original.rows.iter().zip(&modified.rows) {
        l1 += a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na > 0.0 && nb > 0.0 {
            cos += a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
            cos_rows += 1;
        } else {
            skipped += 1;
        }
    }
    let n = original.n_rows().max(1) as f64;
    Ok((l1 / n, cos / cos_rows.max(1) as f64, skipped))
}

// ── Graph distance ────────────────────────────────────────────────────

/// Structural Hamming distance plus skeleton precision/recall between two
/// concept graphs over the same (level, index) node set.
pub fn graph_distance(truth: &ConceptGraph, learned: &ConceptGraph) -> Result<(u32, f64, f64)> {
    let key = |g: &ConceptGraph| -> Vec<(u32, u32)> {
        let mut k: Vec<(u32, u32)> = g.nodes.iter().map(|n| (n.level, n.index)).collect();
        k.sort_unstable();
        k
    };
    if key(truth) != key(learned) {
        return Err(Error::ShapeMismatch("node sets differ; align by (level, index) first".into()));
    }
    // Edge state per unordered node-key pair.
    #[derive(PartialEq, Clone, Copy)]
    enum EdgeState {
        None,
        Undirected,
        Forward,
        Backward,
    }
    let states = |g: &ConceptGraph| -> BTreeMap<((u32, u32), (u32, u32)), EdgeState> {
        let nk = |v: usize| (g.nodes[v].level, g.nodes[v].index);
        let mut m = BTreeMap::new();
        for &(f, t, _) in &g.edges {
            let (a, b) = (nk(f), nk(t));
            if a <= b {
                m.insert((a, b), EdgeState::Forward);
            } else {
                m.insert((b, a), EdgeState::Backward);
            }
        }
        for &(x, y) in &g.undirected {
            let (a, b) = (nk(x), nk(y));
            let k = if a <= b { (a, b) } else { (b, a) };
            m.insert(k, EdgeState::Undirected);
        }
        m
    };
    let ts = states(truth);
    let ls = states(learned);
    let mut shd = 0u32;
    let mut keys: Vec<((u32, u32), (u32, u32))> = ts.keys().chain(ls.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    for k in &keys {
        let a = ts.get(k).copied().unwrap_or(EdgeState::None);
        let b = ls.get(k).copied().unwrap_or(EdgeState::None);
        if a != b {
            shd += 1;
        }
    }
    let truth_skel: Vec<_> = ts.keys().collect();
    let learned_skel: Vec<_> = ls.keys().collect();
    let hit = learned_skel.iter().filter(|k| ts.contains_key(**k)).count() as f64;
    let precision = if learned_skel.is_empty() { 1.0 } else { hit / learned_skel.len() as f64 };
    let recall = if truth_skel.is_empty() { 1.0 } else { hit / truth_skel.len() as f64 };
    Ok((shd, precision, recall))
}

/// Precision of *directed* edges: the fraction of learned directed edges
/// present with the same direction in the truth.
pub fn oriented_precision(truth: &ConceptGraph, learned: &ConceptGraph) -> f64 {
    let nk = |g: &ConceptGraph, v: usize| (g.nodes[v].level, g.nodes[v].index);
    let truth_edges: std::collections::BTreeSet<((u32, u32), (u32, u32))> = truth
        .edges
        .iter()
        .map(|&(f, t, _)| (nk(truth, f), nk(truth, t)))
        .collect();
    if learned.edges.is_empty() {
        return 1.0;
    }
    let hits = learned
        .edges
        .iter()
        .filter(|&&(f, t, _)| truth_edges.contains(&(nk(learned, f), nk(learned, t))))
        .count();
    hits as f64 / learned.edges.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discovery::{ConceptNode, OrientationSource};

    fn ds(cols: Vec<Vec<f64>>) -> Dataset {
        let rows = (0..cols[0].len())
            .map(|r| cols.iter().map(|c| c[r]).collect())
            .collect();
        Dataset::new(
            (0..cols.len()).map(|i| format!("c{i}")).collect(),
            vec![0; cols.len()],
            rows,
            None,
        )
        .unwrap()
    }

    #[test]
    fn permuted_monotone_transform_scores_one() {
        let mut rg = crate::rng::stream(4, "metrics");
        let a: Vec<f64> = (0..200).map(|_| crate::rng::normal(&mut rg)).collect();
        let b: Vec<f64> = (0..200).map(|_| crate::rng::normal(&mut rg)).collect();
        let truth = ds(vec![a.clone(), b.clone()]);
        // Learned: swapped columns, strictly monotone maps applied.
        let la: Vec<f64> = b.iter().map(|&v| (2.0 * v).exp()).collect();
        let lb: Vec<f64> = a.iter().map(|&v| v.powi(3) - 1.0).collect();
        let learned = ds(vec![la, lb]);
        let m = match_components(&truth, &learned).unwrap();
        assert!((m.mean_score - 1.0).abs() < 1e-12);
        assert_eq!(m.assignment, vec![Some(1), Some(0)]);
    }

    #[test]
    fn constant_column_scores_zero_with_warning() {
        let a: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let truth = ds(vec![a.clone()]);
        let learned = ds(vec![vec![1.0; 50]]);
        let m = match_components(&truth, &learned).unwrap();
        assert_eq!(m.mean_score, 0.0);
        assert!(!m.constant_columns.is_empty());
    }

    #[test]
    fn overlap_and_coverage_basics() {
        let m1 = vec![true, true, false, false];
        let (iou, cov) = overlap_coverage(&[m1.clone(), m1.clone()]).unwrap();
        assert_eq!(iou, 1.0);
        assert_eq!(cov, 50.0);
        let disjoint = vec![
            vec![true, false, false, false],
            vec![false, true, true, false],
            vec![false, false, false, true],
        ];
        let (iou, cov) = overlap_coverage(&disjoint).unwrap();
        assert_eq!(iou, 0.0);
        assert_eq!(cov, 100.0);
        assert!(overlap_coverage(&[]).is_err());
    }

    #[test]
    fn spread_of_all_ones_is_one() {
        let mut by_level = BTreeMap::new();
        by_level.insert(0u32, vec![vec![true; 8], vec![true; 8]]);
        let report = spatial_spread(&by_level, &[1, 2]).unwrap();
        assert_eq!(report.proportion(0, 1), Some(1.0));
        assert_eq!(report.proportion(0, 2), Some(1.0));
    }

    #[test]
    fn deactivation_identity_is_zero_one() {
        let d = ds(vec![vec![1.0, -2.0, 0.5], vec![0.3, 0.4, -0.2]]);
        let (l1, cos, skipped) = deactivation_effect(&d, &d).unwrap();
        assert_eq!(l1, 0.0);
        assert!((cos - 1.0).abs() < 1e-12);
        assert_eq!(skipped, 0);
    }

    fn tiny_graph(edges: Vec<(usize, usize)>) -> ConceptGraph {
        ConceptGraph {
            nodes: vec![
                ConceptNode { level: 0, index: 0, label: None },
                ConceptNode { level: 1, index: 0, label: None },
                ConceptNode { level: 1, index: 1, label: None },
            ],
            edges: edges
                .into_iter()
                .map(|(f, t)| (f, t, OrientationSource::LevelRule))
                .collect(),
            undirected: vec![],
            sepsets: BTreeMap::new(),
        }
    }

    #[test]
    fn graph_distance_identity_and_missing_edge() {
        let g = tiny_graph(vec![(1, 0), (2, 0)]);
        assert_eq!(graph_distance(&g, &g).unwrap(), (0, 1.0, 1.0));
        let missing = tiny_graph(vec![(1, 0)]);
        let (shd, precision, recall) = graph_distance(&g, &missing).unwrap();
        assert_eq!(shd, 1);
        assert_eq!(precision, 1.0);
        assert!((recall - 0.5).abs() < 1e-12);
        assert_eq!(oriented_precision(&g, &missing), 1.0);
        let reversed = tiny_graph(vec![(0, 1), (2, 0)]);
        assert_eq!(oriented_precision(&g, &reversed), 0.5);
    }
}
