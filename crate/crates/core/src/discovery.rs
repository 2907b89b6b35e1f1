//! Cross-level structure discovery over binarized codes: select candidate
//! features per level, binarize per-sample activity, run the constraint-
//! based skeleton phase, then orient edges (cross-level edges follow the
//! selection convention, finer to coarser; within-level edges get the
//! collider rule where separating sets allow and are flagged otherwise).
//!
//! Level numbering is coarsest-first everywhere in this crate, so "finer
//! to coarser" means from the larger level index to the smaller.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ident::{ci_test, g_squared_ci, CiTestSpec};
use crate::model::JointTable;

// ── Binarized features ────────────────────────────────────────────────

/// Per-sample binary activity of the selected candidate features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryFeatureMatrix {
    /// (level, feature index) per column, ascending by level then index.
    pub columns: Vec<(u32, u32)>,
    /// Rows of 0/1 entries.
    pub rows: Vec<Vec<u8>>,
    /// Active-set size used per level block.
    pub k: usize,
    /// Where the codes came from (checkpoint ids, dataset labels).
    pub provenance: Vec<String>,
}

impl BinaryFeatureMatrix {
    /// Column label "L<level>.F<index>".
    pub fn label(&self, col: usize) -> String {
        let (l, f) = self.columns[col];
        format!("L{l}.F{f}")
    }

    /// Write as CSV plus a provenance sidecar.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let labels: Vec<String> = (0..self.columns.len()).map(|c| self.label(c)).collect();
        let levels: Vec<u32> = self.columns.iter().map(|&(l, _)| l).collect();
        let rows: Vec<Vec<f64>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(|&b| f64::from(b)).collect())
            .collect();
        let ds = crate::model::Dataset::new(labels, levels, rows, None)?;
        ds.write_csv(path)?;
        let meta = serde_json::json!({
            "schema_version": crate::SCHEMA_VERSION,
            "k": self.k,
            "columns": self.columns,
            "provenance": self.provenance,
        });
        std::fs::write(
            path.with_extension("provenance.json"),
            serde_json::to_string_pretty(&meta)? + "\n",
        )?;
        Ok(())
    }
}

/// Binarize per-level code matrices: per level, keep the K candidate
/// features with the highest average activation (ties to the lower index),
/// then mark each row 1 where the feature is in that row's top-K active
/// set. Rows therefore carry at most K ones per level block.
pub fn binarize_topk(
    codes_per_level: &BTreeMap<u32, Vec<Vec<f64>>>,
    k: usize,
    provenance: Vec<String>,
) -> Result<BinaryFeatureMatrix> {
    let mut n_rows = None;
    for (level, codes) in codes_per_level {
        let rows = codes.len();
        if *n_rows.get_or_insert(rows) != rows {
            return Err(Error::ShapeMismatch(format!(
                "level {level} has {rows} rows, other levels differ"
            )));
        }
        let width = codes.first().map_or(0, Vec::len);
        if k > width {
            return Err(Error::Config(format!(
                "k = {k} exceeds level {level} code dimension {width}"
            )));
        }
    }
    let n_rows = n_rows.unwrap_or(0);
    let mut columns = Vec::new();
    let mut per_level_selected: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (&level, codes) in codes_per_level {
        let width = codes.first().map_or(0, Vec::len);
        let mut avg = vec![0.0f64; width];
        for row in codes {
            for (i, &v) in row.iter().enumerate() {
                avg[i] += v;
            }
        }
        let mut order: Vec<usize> = (0..width).collect();
        order.sort_by(|&a, &b| avg[b].partial_cmp(&avg[a]).unwrap().then(a.cmp(&b)));
        let mut selected: Vec<usize> = order.into_iter().take(k).collect();
        selected.sort_unstable();
        for &f in &selected {
            columns.push((level, f as u32));
        }
        per_level_selected.insert(level, selected);
    }
    let mut rows = Vec::with_capacity(n_rows);
    for r in 0..n_rows {
        let mut row = Vec::with_capacity(columns.len());
        for (&level, codes) in codes_per_level {
            let code = &codes[r];
            // The row's top-K active set over the full code.
            let mut order: Vec<usize> = (0..code.len()).collect();
            order.sort_by(|&a, &b| code[b].partial_cmp(&code[a]).unwrap().then(a.cmp(&b)));
            let active: BTreeSet<usize> =
                order.into_iter().take(k).filter(|&i| code[i] > 0.0).collect();
            for &f in &per_level_selected[&level] {
                row.push(u8::from(active.contains(&f)));
            }
        }
        rows.push(row);
    }
    Ok(BinaryFeatureMatrix { columns, rows, k, provenance })
}

// ── Skeleton search ───────────────────────────────────────────────────

/// Options for the skeleton phase.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcOptions {
    /// Significance level for the G-squared test.
    pub alpha: f64,
    /// Largest conditioning-set size.
    pub max_cond: usize,
    /// Statistical floor on the sample count.
    pub min_rows: usize,
}

impl Default for PcOptions {
    fn default() -> Self {
        PcOptions { alpha: 0.01, max_cond: 3, min_rows: 100 }
    }
}

/// Undirected skeleton with separating sets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Skeleton {
    /// Number of variables (columns).
    pub n: usize,
    /// Retained edges (i < j).
    pub edges: BTreeSet<(usize, usize)>,
    /// Separating set found for each removed pair.
    pub sepsets: BTreeMap<(usize, usize), Vec<usize>>,
    /// Columns dropped as degenerate (constant), with a warning.
    pub dropped: Vec<usize>,
}

/// Stable skeleton phase over an abstract independence tester: start
/// complete, and for growing conditioning sizes remove every edge whose
/// endpoints some subset of current neighbours separates. Adjacency is
/// frozen within a round and removals commit between rounds, so the result
/// does not depend on edge visit order; visits are lexicographic anyway.
pub fn pc_skeleton_with(
    n: usize,
    max_cond: usize,
    dropped: Vec<usize>,
    mut independent: impl FnMut(usize, usize, &[usize]) -> Result<bool>,
) -> Result<Skeleton> {
    let alive = |v: usize| !dropped.contains(&v);
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for i in 0..n {
        for j in i + 1..n {
            if alive(i) && alive(j) {
                edges.insert((i, j));
            }
        }
    }
    let mut sepsets = BTreeMap::new();
    for size in 0..=max_cond {
        let snapshot = edges.clone();
        let adj = |v: usize| -> Vec<usize> {
            snapshot
                .iter()
                .filter_map(|&(a, b)| {
                    if a == v {
                        Some(b)
                    } else if b == v {
                        Some(a)
                    } else {
                        None
                    }
                })
                .collect()
        };
        let mut removals: Vec<((usize, usize), Vec<usize>)> = Vec::new();
        for &(i, j) in &snapshot {
            let mut found: Option<Vec<usize>> = None;
            for side in [i, j] {
                if found.is_some() {
                    break;
                }
                let pool: Vec<usize> =
                    adj(side).into_iter().filter(|&v| v != i && v != j).collect();
                if pool.len() < size {
                    continue;
                }
                let mut subset = Vec::new();
                search_subsets(&pool, size, 0, &mut subset, &mut |cond| {
                    if found.is_none() && independent(i, j, cond)? {
                        found = Some(cond.to_vec());
                    }
                    Ok(())
                })?;
            }
            if let Some(sep) = found {
                removals.push(((i, j), sep));
            }
        }
        for ((i, j), sep) in removals {
            edges.remove(&(i, j));
            sepsets.insert((i, j), sep);
        }
    }
    Ok(Skeleton { n, edges, sepsets, dropped })
}

fn search_subsets(
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
        search_subsets(pool, k, i + 1, current, f)?;
        current.pop();
    }
    Ok(())
}

/// Skeleton phase on binary data with the stratified G-squared test.
/// Constant columns are dropped with a warning entry.
pub fn pc_skeleton(data: &BinaryFeatureMatrix, opts: &PcOptions) -> Result<Skeleton> {
    if data.rows.len() < opts.min_rows {
        return Err(Error::Config(format!(
            "{} rows below the statistical floor {}",
            data.rows.len(),
            opts.min_rows
        )));
    }
    let n = data.columns.len();
    let rows: Vec<Vec<u32>> = data
        .rows
        .iter()
        .map(|r| r.iter().map(|&b| u32::from(b)).collect())
        .collect();
    let dropped: Vec<usize> = (0..n)
        .filter(|&c| {
            let first = rows[0][c];
            rows.iter().all(|r| r[c] == first)
        })
        .collect();
    pc_skeleton_with(n, opts.max_cond, dropped, |i, j, cond| {
        Ok(g_squared_ci(&rows, i, j, cond, opts.alpha).independent)
    })
}

/// Skeleton phase with exact conditional-independence tests on an
/// enumerated joint (variable order must match the column order).
pub fn pc_skeleton_exact(joint: &JointTable, max_cond: usize, tolerance: f64) -> Result<Skeleton> {
    pc_skeleton_with(joint.n_vars(), max_cond, Vec::new(), |i, j, cond| {
        let spec =
            CiTestSpec { a: vec![i], b: vec![j], c: cond.to_vec(), tolerance };
        Ok(ci_test(joint, &spec)?.independent)
    })
}

// ── Concept graphs ────────────────────────────────────────────────────

/// How an edge got its direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrientationSource {
    /// Cross-level selection convention: finer level points to coarser.
    LevelRule,
    /// Within-level v-structure.
    ColliderRule,
}

/// One node of the learned concept graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptNode {
    /// Level (coarsest = 0 by crate convention).
    pub level: u32,
    /// Feature index within the level.
    pub index: u32,
    /// Optional human annotation.
    pub label: Option<String>,
}

/// The learned cross-level graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptGraph {
    /// Nodes, ascending by (level, index).
    pub nodes: Vec<ConceptNode>,
    /// Directed edges (from, to, source), node indices.
    pub edges: Vec<(usize, usize, OrientationSource)>,
    /// Within-level edges the collider rule could not orient (flagged).
    pub undirected: Vec<(usize, usize)>,
    /// Separating sets found during the skeleton phase.
    pub sepsets: BTreeMap<String, Vec<String>>,
}

/// Orient a skeleton: cross-level edges take the selection direction
/// (finer to coarser); within-level edges are oriented by the collider
/// rule where a separating set licenses it, otherwise left undirected.
pub fn orient_levels(skeleton: &Skeleton, columns: &[(u32, u32)]) -> ConceptGraph {
    let nodes: Vec<ConceptNode> = columns
        .iter()
        .map(|&(level, index)| ConceptNode { level, index, label: None })
        .collect();
    let mut edges: Vec<(usize, usize, OrientationSource)> = Vec::new();
    let mut undirected: Vec<(usize, usize)> = Vec::new();
    // Collider claims on within-level pairs: (a, c) oriented a -> c.
    let mut claims: BTreeSet<(usize, usize)> = BTreeSet::new();
    let adjacent = |a: usize, b: usize| {
        skeleton.edges.contains(&(a.min(b), a.max(b)))
    };
    for a in 0..nodes.len() {
        for b in a + 1..nodes.len() {
            if adjacent(a, b) {
                continue;
            }
            let Some(sep) = skeleton.sepsets.get(&(a, b)) else { continue };
            for c in 0..nodes.len() {
                if c == a || c == b || !adjacent(a, c) || !adjacent(b, c) {
                    continue;
                }
                if sep.contains(&c) {
                    continue;
                }
                // a -> c <- b; record claims for within-level arms only.
                for &(x, y) in &[(a, c), (b, c)] {
                    if nodes[x].level == nodes[y].level {
                        claims.insert((x, y));
                    }
                }
            }
        }
    }
    for &(i, j) in &skeleton.edges {
        let (li, lj) = (nodes[i].level, nodes[j].level);
        if li != lj {
            // Finer (larger level index) points to coarser.
            let (from, to) = if li > lj { (i, j) } else { (j, i) };
            edges.push((from, to, OrientationSource::LevelRule));
        } else {
            let fwd = claims.contains(&(i, j));
            let bwd = claims.contains(&(j, i));
            match (fwd, bwd) {
                (true, false) => edges.push((i, j, OrientationSource::ColliderRule)),
                (false, true) => edges.push((j, i, OrientationSource::ColliderRule)),
                // Conflicting or absent evidence: leave flagged.
                _ => undirected.push((i, j)),
            }
        }
    }
    let label_of = |v: usize| format!("L{}.F{}", nodes[v].level, nodes[v].index);
    let sepsets = skeleton
        .sepsets
        .iter()
        .map(|(&(a, b), sep)| {
            (
                format!("{}|{}", label_of(a), label_of(b)),
                sep.iter().map(|&s| label_of(s)).collect(),
            )
        })
        .collect();
    ConceptGraph { nodes, edges, undirected, sepsets }
}

impl ConceptGraph {
    /// Byte-deterministic DOT rendering with one ranked cluster per level.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph concepts {\n  rankdir=BT;\n");
        let mut levels: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (ix, n) in self.nodes.iter().enumerate() {
            levels.entry(n.level).or_default().push(ix);
        }
        for (level, members) in &levels {
            out.push_str(&format!("  subgraph cluster_level_{level} {{\n"));
            out.push_str(&format!("    label=\"level {level}\";\n    rank=same;\n"));
            for &m in members {
                let node = &self.nodes[m];
                let label = node
                    .label
                    .clone()
                    .unwrap_or_else(|| format!("L{}.F{}", node.level, node.index));
                out.push_str(&format!("    n{m} [label=\"{label}\"];\n"));
            }
            out.push_str("  }\n");
        }
        let mut lines: Vec<String> = self
            .edges
            .iter()
            .map(|&(f, t, src)| {
                let style = match src {
                    OrientationSource::LevelRule => "",
                    OrientationSource::ColliderRule => " [style=dashed]",
                };
                format!("  n{f} -> n{t}{style};\n")
            })
            .collect();
        lines.extend(
            self.undirected
                .iter()
                .map(|&(a, b)| format!("  n{a} -> n{b} [dir=none, color=gray];\n")),
        );
        lines.sort();
        for l in lines {
            out.push_str(&l);
        }
        out.push_str("}\n");
        out
    }

    /// Canonical JSON rendering.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct File<'a> {
            schema_version: u32,
            #[serde(flatten)]
            graph: &'a ConceptGraph,
        }
        Ok(serde_json::to_string_pretty(&File { schema_version: crate::SCHEMA_VERSION, graph: self })?
            + "\n")
    }

    /// Parse the canonical JSON rendering.
    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct File {
            schema_version: u32,
            #[serde(flatten)]
            graph: ConceptGraph,
        }
        let f: File = serde_json::from_str(text)?;
        if f.schema_version != crate::SCHEMA_VERSION {
            return Err(Error::InvalidModel(format!(
                "concept graph schema {} unsupported",
                f.schema_version
            )));
        }
        Ok(f.graph)
    }

    /// Render in the requested format ("dot" or "json").
    pub fn export(&self, format: &str) -> Result<String> {
        match format {
            "dot" => Ok(self.to_dot()),
            "json" => self.to_json(),
            other => Err(Error::Config(format!("unknown export format {other}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binarize_selects_by_average_and_marks_active() {
        let mut codes = BTreeMap::new();
        codes.insert(0u32, vec![vec![5.0, 1.0, 3.0]]);
        let m = binarize_topk(&codes, 2, vec![]).unwrap();
        assert_eq!(m.columns, vec![(0, 0), (0, 2)]);
        assert_eq!(m.rows, vec![vec![1, 1]]);
    }

    #[test]
    fn binarize_all_zero_codes_gives_all_zero_matrix() {
        let mut codes = BTreeMap::new();
        codes.insert(0u32, vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
        let m = binarize_topk(&codes, 1, vec![]).unwrap();
        assert!(m.rows.iter().all(|r| r.iter().all(|&b| b == 0)));
    }

    #[test]
    fn binarize_rejects_oversized_k() {
        let mut codes = BTreeMap::new();
        codes.insert(0u32, vec![vec![1.0, 2.0]]);
        assert!(binarize_topk(&codes, 3, vec![]).is_err());
    }

    #[test]
    fn skeleton_keeps_copies_and_separates_independents() {
        let mut rg = crate::rng::stream(5, "pc-test");
        use rand::Rng;
        let mut rows = Vec::new();
        for _ in 0..4000 {
            let a = u8::from(rg.gen_bool(0.5));
            let b = u8::from(rg.gen_bool(0.5));
            rows.push(vec![a, a, b]);
        }
        let data = BinaryFeatureMatrix {
            columns: vec![(1, 0), (1, 1), (0, 0)],
            rows,
            k: 1,
            provenance: vec![],
        };
        let sk = pc_skeleton(&data, &PcOptions::default()).unwrap();
        assert!(sk.edges.contains(&(0, 1)), "copied columns stay adjacent");
        assert!(!sk.edges.contains(&(0, 2)));
        assert!(!sk.edges.contains(&(1, 2)));
    }

    #[test]
    fn constant_column_is_dropped() {
        let rows = vec![vec![1, 0], vec![1, 1], vec![1, 0], vec![1, 1]];
        let data = BinaryFeatureMatrix {
            columns: vec![(0, 0), (0, 1)],
            rows: rows.into_iter().cycle().take(200).collect(),
            k: 2,
            provenance: vec![],
        };
        let sk = pc_skeleton(&data, &PcOptions::default()).unwrap();
        assert_eq!(sk.dropped, vec![0]);
        assert!(sk.edges.is_empty());
    }

    #[test]
    fn cross_level_orientation_points_fine_to_coarse() {
        let mut edges = BTreeSet::new();
        edges.insert((0, 1));
        let sk = Skeleton { n: 2, edges, sepsets: BTreeMap::new(), dropped: vec![] };
        // Column 0 is the coarse one (level 0), column 1 is finer (level 2).
        let g = orient_levels(&sk, &[(0, 3), (2, 7)]);
        assert_eq!(g.edges, vec![(1, 0, OrientationSource::LevelRule)]);
    }

    #[test]
    fn within_level_collider_rule() {
        // a - c - b at one level, a and b separated by the empty set.
        let mut edges = BTreeSet::new();
        edges.insert((0, 2));
        edges.insert((1, 2));
        let mut sepsets = BTreeMap::new();
        sepsets.insert((0, 1), vec![]);
        let sk = Skeleton { n: 3, edges, sepsets, dropped: vec![] };
        let g = orient_levels(&sk, &[(1, 0), (1, 1), (1, 2)]);
        let mut got: Vec<(usize, usize)> = g.edges.iter().map(|&(f, t, _)| (f, t)).collect();
        got.sort_unstable();
        assert_eq!(got, vec![(0, 2), (1, 2)]);
        assert!(g.undirected.is_empty());
    }

    #[test]
    fn export_round_trip_and_dot_shape() {
        let g = ConceptGraph {
            nodes: vec![
                ConceptNode { level: 0, index: 0, label: None },
                ConceptNode { level: 1, index: 4, label: Some("part".into()) },
            ],
            edges: vec![(1, 0, OrientationSource::LevelRule)],
            undirected: vec![],
            sepsets: BTreeMap::new(),
        };
        let dot = g.to_dot();
        assert_eq!(dot.matches("->").count(), 1);
        let js = g.to_json().unwrap();
        let back = ConceptGraph::from_json(&js).unwrap();
        assert_eq!(back, g);
        let empty = ConceptGraph {
            nodes: vec![],
            edges: vec![],
            undirected: vec![],
            sepsets: BTreeMap::new(),
        };
        let dot = empty.to_dot();
        assert!(dot.starts_with("digraph") && dot.trim_end().ends_with('}'));
        assert!(empty.export("nonsense").is_err());
    }
}
