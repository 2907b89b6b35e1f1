//! End-to-end experiments on synthetic hierarchies: generate a continuous
//! ground-truth model, expose per-level features (mixed latents plus
//! noise, standing in for per-timestep network activations), train
//! K-sparse autoencoders per level, discover the cross-level concept
//! graph, and score identification, steering locality, spread, and
//! deactivation effects against the known truth.
//!
//! Everything is deterministic per seed, and every stage's provenance
//! (config digest, seed, checkpoint ids) lands in the report.

use std::collections::BTreeMap;
use std::path::PathBuf;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::discovery::{self, ConceptGraph, ConceptNode, OrientationSource, PcOptions};
use crate::error::{Error, Result};
use crate::metrics;
use crate::model::generate::{random_continuous_model, ContinuousShape};
use crate::model::{ContinuousSample, ContinuousSelectionModel, Dataset};
use crate::rng;
use crate::sae::{train_sae, SaeConfig, SaeModel, SteerMode, SteerSpec};

/// Template for the per-level autoencoders; input dimension comes from the
/// feature extraction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SaeSpec {
    /// Code dimension.
    pub latent_dim: usize,
    /// Active units per sample.
    pub k: usize,
    /// Learning rate.
    pub step_size: f64,
    /// Batch size.
    pub batch_size: usize,
    /// Update count.
    pub training_steps: usize,
}

/// Full experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Ground-truth model shape.
    pub level_sizes: Vec<usize>,
    /// Observation dimension.
    pub obs_dim: usize,
    /// Approximate active bottom latents per sample (gated synthesis).
    pub bottom_active: usize,
    /// Sample count per seed.
    pub n_samples: usize,
    /// Feature dimension per level = expansion * level size.
    pub feature_expansion: usize,
    /// Banded (local) feature mixing; dense Gaussian mixing otherwise.
    /// Local atoms make mask-based metrics meaningful; dense mixing is the
    /// harder unmixing test for component matching.
    pub banded_features: bool,
    /// Feature observation noise.
    pub feature_noise: f64,
    /// One autoencoder config per level, coarsest first.
    pub saes: Vec<SaeSpec>,
    /// Constraint-based search options.
    pub pc: PcOptions,
    /// Sparsity ablation grid (active-unit counts).
    pub sparsity_grid: Vec<usize>,
    /// Seeds; one full run each.
    pub seeds: Vec<u64>,
    /// When set, reports, graphs, and checkpoints are written here.
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if self.saes.len() != self.level_sizes.len() {
            return Err(Error::Config(format!(
                "{} autoencoder configs for {} levels",
                self.saes.len(),
                self.level_sizes.len()
            )));
        }
        let ablation_level = self.level_sizes.len() - 1;
        if self.sparsity_grid.iter().any(|&k| k > self.saes[ablation_level].latent_dim) {
            return Err(Error::Config(format!(
                "sparsity grid exceeds the ablation level's latent_dim {}",
                self.saes[ablation_level].latent_dim
            )));
        }
        Ok(())
    }

    /// Stable digest of the canonical config JSON (provenance key).
    pub fn digest(&self) -> String {
        let text = serde_json::to_string(self).unwrap_or_default();
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

/// Everything trained for one seed: the ground-truth model, per-level
/// feature mixings and datasets, per-level autoencoders, and the
/// per-level component matches.
pub struct TrainedStack {
    /// Ground truth.
    pub model: ContinuousSelectionModel,
    /// Retained samples (latents, noises, observations).
    pub samples: Vec<ContinuousSample>,
    /// Per-level mixing matrices (features x latents).
    pub mixes: Vec<DMatrix<f64>>,
    /// Per-level feature datasets.
    pub features: Vec<Dataset>,
    /// Per-level trained autoencoders.
    pub saes: Vec<SaeModel>,
    /// Per-level component matches (true latents vs codes).
    pub matches: Vec<metrics::ComponentMatch>,
}

/// One level's worth of feature rows: mixed latents plus Gaussian noise.
fn extract_level_features(
    samples: &[ContinuousSample],
    level: usize,
    mix: &DMatrix<f64>,
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    let mut rg = rng::stream(seed, &format!("features-level-{level}"));
    let f_dim = mix.nrows();
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| {
            let z = &s.levels[level];
            (0..f_dim)
                .map(|r| {
                    let mut acc = 0.0;
                    for (c, &v) in z.iter().enumerate() {
                        acc += mix[(r, c)] * v;
                    }
                    acc + noise * rng::normal(&mut rg)
                })
                .collect()
        })
        .collect();
    Dataset::new(
        (0..f_dim).map(|i| format!("L{level}.f{i}")).collect(),
        vec![level as u32; f_dim],
        rows,
        Some(seed),
    )
}

/// Banded full-column-rank mixing for one level: each feature coordinate
/// reads one primary latent plus occasionally a neighbour, so dictionary
/// atoms are local and mask-based metrics can discriminate.
fn level_mix(
    n_latent: usize,
    expansion: usize,
    banded: bool,
    seed: u64,
    level: usize,
) -> DMatrix<f64> {
    let mut rg = rng::stream(seed, &format!("mix-level-{level}"));
    use rand::Rng;
    loop {
        let rows = expansion * n_latent;
        let m = if banded {
            DMatrix::from_fn(rows, n_latent, |r, c| {
                let sign = if rg.gen_bool(0.5) { 1.0 } else { -1.0 };
                if c == r / expansion {
                    sign * rg.gen_range(0.8..1.3)
                } else {
                    0.0
                }
            })
        } else {
            DMatrix::from_fn(rows, n_latent, |_, _| rng::normal(&mut rg))
        };
        if crate::numerics::singular_values(&m).last().copied().unwrap_or(0.0) > 0.2 {
            return m;
        }
    }
}

/// Dataset of one level's true latent values.
fn level_latents(samples: &[ContinuousSample], level: usize) -> Result<Dataset> {
    let n = samples.first().map_or(0, |s| s.levels[level].len());
    Dataset::new(
        (0..n).map(|i| format!("Z{level}.{i}")).collect(),
        vec![level as u32; n],
        samples.iter().map(|s| s.levels[level].clone()).collect(),
        None,
    )
}

/// Build the full trained stack for one seed.
pub fn build_stack(cfg: &ExperimentConfig, seed: u64) -> Result<TrainedStack> {
    cfg.validate()?;
    let shape = ContinuousShape {
        level_sizes: cfg.level_sizes.clone(),
        obs_dim: cfg.obs_dim,
        gated_bottom_active: Some(cfg.bottom_active),
        noise_sigma: 0.05,
        obs_noise_sigma: 0.05,
        leak: 0.25,
    };
    let model = random_continuous_model(&shape, seed)?;
    let samples = model.sample_full(cfg.n_samples, seed.wrapping_add(1));
    let levels = cfg.level_sizes.len();
    let mut mixes = Vec::new();
    let mut features = Vec::new();
    let mut saes = Vec::new();
    let mut matches = Vec::new();
    for level in 0..levels {
        let mix = level_mix(cfg.level_sizes[level], cfg.feature_expansion, cfg.banded_features, seed, level);
        let data = extract_level_features(&samples, level, &mix, cfg.feature_noise, seed)?;
        let spec = &cfg.saes[level];
        let sae_cfg = SaeConfig {
            input_dim: data.n_cols(),
            latent_dim: spec.latent_dim,
            k: spec.k.min(spec.latent_dim),
            step_size: spec.step_size,
            batch_size: spec.batch_size,
            training_steps: spec.training_steps,
            seed: seed.wrapping_add(100 + level as u64),
        };
        let sae = train_sae(&data, &sae_cfg)?;
        let codes = encode_dataset(&sae, &data)?;
        let truth = level_latents(&samples, level)?;
        matches.push(metrics::match_components(&truth, &codes)?);
        mixes.push(mix);
        features.push(data);
        saes.push(sae);
    }
    Ok(TrainedStack { model, samples, mixes, features, saes, matches })
}

/// Encode every row of a dataset.
pub fn encode_dataset(sae: &SaeModel, data: &Dataset) -> Result<Dataset> {
    let rows: Result<Vec<Vec<f64>>> = data.rows.iter().map(|r| sae.encode(r)).collect();
    Dataset::new(
        (0..sae.config.latent_dim).map(|i| format!("code{i}")).collect(),
        vec![data.levels.first().copied().unwrap_or(0); sae.config.latent_dim],
        rows?,
        data.seed,
    )
}

impl TrainedStack {
    /// Move one feature-space edit into latent space via the mixing
    /// pseudo-inverse.
    fn feature_delta_to_latent(&self, level: usize, delta: &[f64]) -> Result<Vec<f64>> {
        let pinv = self.mixes[level]
            .clone()
            .svd(true, true)
            .pseudo_inverse(1e-10)
            .map_err(|e| Error::Domain(format!("mixing pseudo-inverse failed: {e}")))?;
        let d = DMatrix::from_column_slice(delta.len(), 1, delta);
        let z = &pinv * d;
        Ok(z.column(0).iter().copied().collect())
    }

    /// Observation response to a unit edit of one code feature at one
    /// level: mean |delta x| per observation coordinate over the sample
    /// set under a symmetric pair of edits (+strength and -strength, so
    /// both sides of a selection respond), max-normalized, plus the
    /// thresholded mask.
    pub fn observation_attribution(
        &self,
        level: usize,
        feature: usize,
        strength: f64,
        threshold: f64,
        sample_cap: usize,
    ) -> Result<(Vec<f64>, Vec<bool>)> {
        let col = self.saes[level].decoder_column(feature)?;
        let n_obs = self.model.observation.n_obs();
        let mut acc = vec![0.0f64; n_obs];
        let take = self.samples.len().min(sample_cap);
        for signed in [strength, -strength] {
            let delta_feat: Vec<f64> = col.iter().map(|c| c * signed).collect();
            let dz = self.feature_delta_to_latent(level, &delta_feat)?;
            for s in &self.samples[..take] {
                let mut z = s.levels[level].clone();
                for (zi, d) in z.iter_mut().zip(&dz) {
                    *zi += d;
                }
                let edited = self.model.regenerate_from(s, level, z);
                for (a, (x1, x0)) in acc.iter_mut().zip(edited.obs.iter().zip(&s.obs)) {
                    *a += (x1 - x0).abs();
                }
            }
        }
        for a in &mut acc {
            *a /= 2.0 * take.max(1) as f64;
        }
        let max = acc.iter().fold(0.0f64, |m, &v| m.max(v));
        let map: Vec<f64> =
            if max > 0.0 { acc.iter().map(|v| v / max).collect() } else { acc.clone() };
        let mask = map.iter().map(|&v| v > threshold).collect();
        Ok((map, mask))
    }

    /// Static observation footprint of one code feature: its decoder atom
    /// pulled back to latent space, max-normalized, and expanded through
    /// the known receptive fields (descendant observation windows) of the
    /// latents it touches. map[j] = sum of latent weights whose window
    /// covers j, renormalized; mask = map > threshold.
    pub fn feature_obs_footprint(
        &self,
        level: usize,
        feature: usize,
        threshold: f64,
    ) -> Result<(Vec<f64>, Vec<bool>)> {
        let col = self.saes[level].decoder_column(feature)?;
        let dz = self.feature_delta_to_latent(level, &col)?;
        let zmax = dz.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let n_obs = self.model.observation.n_obs();
        let mut map = vec![0.0f64; n_obs];
        if zmax > 0.0 {
            for (i, &w) in dz.iter().enumerate() {
                let weight = w.abs() / zmax;
                for (m, &covered) in map.iter_mut().zip(&self.descendant_obs_mask(level, i)) {
                    if covered {
                        *m += weight;
                    }
                }
            }
        }
        let max = map.iter().fold(0.0f64, |m, &v| m.max(v));
        if max > 0.0 {
            for v in map.iter_mut() {
                *v /= max;
            }
        }
        let mask = map.iter().map(|&v| v > threshold).collect();
        Ok((map, mask))
    }

    /// Observation coordinates generated downstream of one true latent.
    pub fn descendant_obs_mask(&self, level: usize, latent_ix: usize) -> Vec<bool> {
        let g = &self.model.graph;
        let node = g.level_nodes(level)[latent_ix];
        let bottom_latent_level = self.model.latent_levels() - 1;
        let bottom_ids: Vec<usize> = g.level_nodes(bottom_latent_level).to_vec();
        let mut bottom_hit = vec![false; bottom_ids.len()];
        if level == bottom_latent_level {
            bottom_hit[latent_ix] = true;
        } else {
            let cone = g.influence_cone(node);
            for (i, &b) in bottom_ids.iter().enumerate() {
                if cone.contains(&b) {
                    bottom_hit[i] = true;
                }
            }
        }
        (0..self.model.observation.n_obs())
            .map(|j| {
                self.model.observation.latent_weights[j]
                    .iter()
                    .enumerate()
                    .any(|(i, &w)| w != 0.0 && bottom_hit[i])
            })
            .collect()
    }

    /// Code features matched to this level's true latents (assignment
    /// order), the level's concept set for hierarchy comparisons. Features
    /// whose match score falls below 0.6 did not identify a concept and
    /// are excluded: hierarchy statements are about identified concepts.
    pub fn matched_features(&self, level: usize) -> Vec<usize> {
        let m = &self.matches[level];
        let mut score_ix = 0usize;
        let mut out = Vec::new();
        let mut all = Vec::new();
        for assigned in &m.assignment {
            if let Some(f) = assigned {
                all.push(*f);
                if m.scores.get(score_ix).copied().unwrap_or(0.0) >= 0.75 {
                    out.push(*f);
                }
                score_ix += 1;
            }
        }
        // A level whose concepts all scored poorly still needs a concept
        // set to report on; fall back to the raw assignment.
        if out.is_empty() {
            return all;
        }
        out
    }

    /// Candidate features per level by average activation, descending.
    pub fn top_features(&self, level: usize, count: usize) -> Result<Vec<usize>> {
        let codes = encode_dataset(&self.saes[level], &self.features[level])?;
        let n = codes.n_cols();
        let mut avg = vec![0.0f64; n];
        for row in &codes.rows {
            for (i, &v) in row.iter().enumerate() {
                avg[i] += v;
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| avg[b].partial_cmp(&avg[a]).unwrap().then(a.cmp(&b)));
        Ok(order.into_iter().take(count).collect())
    }
}

// ── Reports ───────────────────────────────────────────────────────────

/// One sparsity-grid entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    /// Active units used.
    pub k: usize,
    /// Mean per-sample pairwise mask overlap (IoU).
    pub overlap: f64,
    /// Mean per-sample union coverage, percent.
    pub coverage: f64,
    /// Edges in the discovered graph at this sparsity.
    pub edge_count: usize,
}

/// Everything measured for one seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedReport {
    /// Seed.
    pub seed: u64,
    /// Per-level mean component-matching scores.
    pub match_scores: Vec<f64>,
    /// Skeleton recall against the truth graph.
    pub skeleton_recall: f64,
    /// Oriented precision against the truth graph.
    pub oriented_precision: f64,
    /// Structural Hamming distance.
    pub shd: u32,
    /// Per-level top-1 observation spread (activated proportion).
    pub spread_top1: Vec<f64>,
    /// Per-level mean deactivation L1 on the observation.
    pub deactivation_l1: Vec<f64>,
    /// Sparsity ablation at the middle level.
    pub ablation: Vec<AblationRow>,
    /// Checkpoint ids (paths or digests) per level.
    pub checkpoints: Vec<String>,
}

/// Full experiment report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    /// Schema version.
    pub schema_version: u32,
    /// Config digest (provenance key).
    pub config_digest: String,
    /// Canonical config echo.
    pub config: ExperimentConfig,
    /// One entry per seed, in seed order.
    pub seeds: Vec<SeedReport>,
}

impl ExperimentReport {
    /// Canonical JSON rendering.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Run the full per-seed loop: synthesize, extract, train, match, discover,
/// measure spread/deactivation, and sweep the sparsity grid.
pub fn run_hierarchy_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut seed_reports = Vec::new();
    for &seed in &cfg.seeds {
        let stack = build_stack(cfg, seed)?;
        let levels = cfg.level_sizes.len();
        let match_scores: Vec<f64> = stack.matches.iter().map(|m| m.mean_score).collect();

        // Graph discovery over binarized codes at the trained sparsity.
        let (learned_graph, _) = discover_graph(&stack, cfg)?;
        let truth_graph = truth_concept_graph(&stack, &learned_graph.nodes);
        let (shd, _prec, recall) = metrics::graph_distance(&truth_graph, &learned_graph)?;
        let oriented = metrics::oriented_precision(&truth_graph, &learned_graph);

        // Observation-space spread of the top feature per level, and
        // deactivation effect of the top-1 active feature per level.
        let mut spread_top1 = Vec::new();
        let mut deactivation_l1 = Vec::new();
        for level in 0..levels {
            let feats = stack.matched_features(level);
            let mut prop = 0.0;
            for &f in &feats {
                let (_, mask) = stack.feature_obs_footprint(level, f, 0.45)?;
                prop += mask.iter().filter(|&&b| b).count() as f64 / mask.len().max(1) as f64;
            }
            spread_top1.push(prop / feats.len().max(1) as f64);
            deactivation_l1.push(deactivation_effect_on_obs(&stack, level, 64)?);
        }

        // Sparsity ablation at the finest level (the one whose sparsity
        // the grid straddles).
        let ablation_level = levels - 1;
        let mut ablation = Vec::new();
        for &k in &cfg.sparsity_grid {
            ablation.push(ablation_row(&stack, cfg, seed, ablation_level, k)?);
        }

        let checkpoints: Vec<String> = (0..levels)
            .map(|l| format!("sae-seed{seed}-level{l}"))
            .collect();
        if let Some(dir) = &cfg.out_dir {
            std::fs::create_dir_all(dir)?;
            for (l, sae) in stack.saes.iter().enumerate() {
                sae.write_checkpoint(&dir.join(format!("sae-seed{seed}-level{l}.sae")))?;
            }
            std::fs::write(
                dir.join(format!("graph-seed{seed}.dot")),
                learned_graph.to_dot(),
            )?;
            std::fs::write(
                dir.join(format!("graph-seed{seed}.json")),
                learned_graph.to_json()?,
            )?;
        }
        seed_reports.push(SeedReport {
            seed,
            match_scores,
            skeleton_recall: recall,
            oriented_precision: oriented,
            shd,
            spread_top1,
            deactivation_l1,
            ablation,
            checkpoints,
        });
    }
    let report = ExperimentReport {
        schema_version: crate::SCHEMA_VERSION,
        config_digest: cfg.digest(),
        config: cfg.clone(),
        seeds: seed_reports,
    };
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), report.to_json()?)?;
    }
    Ok(report)
}

/// Discover the concept graph from the stack's codes, binarized at each
/// level's own sparsity. Returns the graph and the per-level candidate
/// feature lists.
pub fn discover_graph(
    stack: &TrainedStack,
    cfg: &ExperimentConfig,
) -> Result<(ConceptGraph, BTreeMap<u32, Vec<usize>>)> {
    let mut columns = Vec::new();
    let mut rows: Vec<Vec<u8>> = vec![Vec::new(); stack.features[0].n_rows()];
    for (level, (sae, data)) in stack.saes.iter().zip(&stack.features).enumerate() {
        let codes = encode_dataset(sae, data)?;
        let mut per_level = BTreeMap::new();
        per_level.insert(level as u32, codes.rows);
        let part = discovery::binarize_topk(&per_level, cfg.saes[level].k, vec![])?;
        columns.extend(part.columns.iter().copied());
        for (r, pr) in rows.iter_mut().zip(&part.rows) {
            r.extend(pr.iter().copied());
        }
    }
    let matrix = discovery::BinaryFeatureMatrix {
        columns,
        rows,
        k: cfg.saes.iter().map(|s| s.k).max().unwrap_or(1),
        provenance: vec!["per-level sparsities".into()],
    };
    let skeleton = discovery::pc_skeleton(&matrix, &cfg.pc)?;
    let graph = discovery::orient_levels(&skeleton, &matrix.columns);
    let mut selected = BTreeMap::new();
    for &(level, f) in &matrix.columns {
        selected.entry(level).or_insert_with(Vec::new).push(f as usize);
    }
    Ok((graph, selected))
}

/// The ground-truth concept graph expressed over a given feature node set
/// (typically the learned graph's): each true latent maps to its matched
/// code feature; true edges whose endpoints both matched and are present
/// in the node set become feature edges, everything else stays isolated.
pub fn truth_concept_graph(stack: &TrainedStack, node_set: &[ConceptNode]) -> ConceptGraph {
    let g = &stack.model.graph;
    let latent_levels = stack.model.latent_levels();
    // True latent (level, ix) -> matched feature index.
    let mut feature_of: BTreeMap<(usize, usize), u32> = BTreeMap::new();
    for (level, m) in stack.matches.iter().enumerate() {
        for (ix, assigned) in m.assignment.iter().enumerate() {
            if let Some(f) = assigned {
                feature_of.insert((level, ix), *f as u32);
            }
        }
    }
    let nodes: Vec<ConceptNode> = node_set
        .iter()
        .map(|n| ConceptNode { level: n.level, index: n.index, label: None })
        .collect();
    let node_ix = |level: u32, index: u32| -> Option<usize> {
        nodes.iter().position(|n| n.level == level && n.index == index)
    };
    let mut edges = Vec::new();
    for &(f, t) in g.edges() {
        let (lf, lt) = (g.level(f), g.level(t));
        if lf >= latent_levels || lt >= latent_levels {
            continue; // observation-level edges have no feature analogue
        }
        let fi = g.level_nodes(lf).iter().position(|&n| n == f).unwrap();
        let ti = g.level_nodes(lt).iter().position(|&n| n == t).unwrap();
        if let (Some(&ff), Some(&tf)) = (feature_of.get(&(lf, fi)), feature_of.get(&(lt, ti))) {
            if let (Some(a), Some(b)) = (node_ix(lf as u32, ff), node_ix(lt as u32, tf)) {
                edges.push((a, b, OrientationSource::LevelRule));
            }
        }
    }
    edges.sort_by_key(|&(a, b, _)| (a, b));
    ConceptGraph { nodes, edges, undirected: vec![], sepsets: BTreeMap::new() }
}

/// Mean observation-space L1 effect of deactivating one matched concept
/// feature at a time (over the samples where it is active), averaged over
/// the level's concept set. Per-feature averaging avoids the order-
/// statistic confound of always deactivating the strongest unit, which
/// favours levels with more active units.
fn deactivation_effect_on_obs(stack: &TrainedStack, level: usize, sample_cap: usize) -> Result<f64> {
    let sae = &stack.saes[level];
    let take = stack.samples.len().min(sample_cap);
    let matched = stack.matched_features(level);
    let mut per_feature = Vec::new();
    for &f in &matched {
        let spec = SteerSpec { feature_index: f, strength: 0.0, mode: SteerMode::Deactivate };
        let mut total = 0.0;
        let mut hit = 0usize;
        for (s, row) in stack.samples[..take].iter().zip(&stack.features[level].rows) {
            let code = sae.encode(row)?;
            if code[f] <= 0.0 {
                continue;
            }
            let edited_row = sae.steer(row, &spec)?;
            let delta: Vec<f64> = edited_row.iter().zip(row).map(|(a, b)| a - b).collect();
            let dz = stack.feature_delta_to_latent(level, &delta)?;
            let mut z = s.levels[level].clone();
            for (zi, d) in z.iter_mut().zip(&dz) {
                *zi += d;
            }
            let edited = stack.model.regenerate_from(s, level, z);
            total += edited.obs.iter().zip(&s.obs).map(|(a, b)| (a - b).abs()).sum::<f64>();
            hit += 1;
        }
        if hit > 0 {
            per_feature.push(total / hit as f64);
        }
    }
    Ok(per_feature.iter().sum::<f64>() / per_feature.len().max(1) as f64)
}

/// One sparsity-grid measurement: retrain the mid-level autoencoder at
/// sparsity k, then measure per-sample active-feature masks in the
/// level's feature space. Maps are normalized by the strongest active
/// contribution in the sample, so weak redundant features fall below the
/// threshold instead of inflating coverage.
fn ablation_row(
    stack: &TrainedStack,
    cfg: &ExperimentConfig,
    seed: u64,
    level: usize,
    k: usize,
) -> Result<AblationRow> {
    let data = &stack.features[level];
    let spec = &cfg.saes[level];
    let sae_cfg = SaeConfig {
        input_dim: data.n_cols(),
        latent_dim: spec.latent_dim,
        k,
        step_size: spec.step_size,
        batch_size: spec.batch_size,
        training_steps: spec.training_steps,
        seed: seed.wrapping_add(900 + k as u64),
    };
    let sae = train_sae(data, &sae_cfg)?;
    let threshold = 0.1;
    let sample_cap = 400.min(data.n_rows());
    // The k candidate features (highest average activation, the same rule
    // the binarization uses) get one mean attribution map each over the
    // samples where they are active, normalized by the strongest candidate
    // overall, thresholded into masks on the level's feature canvas.
    let n_units = sae.config.latent_dim;
    let dim = data.n_cols();
    let mut maps = vec![vec![0.0f64; dim]; n_units];
    let mut active_counts = vec![0usize; n_units];
    let mut avg = vec![0.0f64; n_units];
    for row in &data.rows[..sample_cap] {
        let code = sae.encode(row)?;
        for (f, &c) in code.iter().enumerate() {
            avg[f] += c;
            if c > 0.0 {
                active_counts[f] += 1;
                for (m, r) in maps[f].iter_mut().zip(&sae.dec_w) {
                    *m += (r[f] * c).abs();
                }
            }
        }
    }
    for (map, &count) in maps.iter_mut().zip(&active_counts) {
        if count > 0 {
            for v in map.iter_mut() {
                *v /= count as f64;
            }
        }
    }
    let mut order: Vec<usize> = (0..n_units).collect();
    order.sort_by(|&a, &b| avg[b].partial_cmp(&avg[a]).unwrap().then(a.cmp(&b)));
    let candidates: Vec<usize> = order.into_iter().take(k).collect();
    let global_max = candidates
        .iter()
        .flat_map(|&f| maps[f].iter())
        .fold(0.0f64, |m, &v| m.max(v));
    let masks: Vec<Vec<bool>> = candidates
        .iter()
        .map(|&f| {
            maps[f]
                .iter()
                .map(|&v| global_max > 0.0 && v / global_max > threshold)
                .collect()
        })
        .collect();
    let nonempty: Vec<Vec<bool>> =
        masks.into_iter().filter(|m| m.iter().any(|&b| b)).collect();
    let (overlap_sum, coverage_sum, counted) = if nonempty.len() >= 2 {
        let (iou, cov) = metrics::overlap_coverage(&nonempty)?;
        (iou, cov, 1usize)
    } else {
        (0.0, 0.0, 0usize)
    };
    // Edge count of the discovered graph with the mid level swapped to k.
    let mut columns = Vec::new();
    let mut rows: Vec<Vec<u8>> = vec![Vec::new(); data.n_rows()];
    for (l, (level_sae, level_data)) in stack.saes.iter().zip(&stack.features).enumerate() {
        let (codes, bin_k) = if l == level {
            (encode_dataset(&sae, level_data)?.rows, k)
        } else {
            (encode_dataset(level_sae, level_data)?.rows, cfg.saes[l].k)
        };
        let mut per_level = BTreeMap::new();
        per_level.insert(l as u32, codes);
        let part = discovery::binarize_topk(&per_level, bin_k, vec![])?;
        columns.extend(part.columns.iter().copied());
        for (r, pr) in rows.iter_mut().zip(&part.rows) {
            r.extend(pr.iter().copied());
        }
    }
    let matrix = discovery::BinaryFeatureMatrix {
        columns,
        rows,
        k,
        provenance: vec![format!("ablation k={k}")],
    };
    let skeleton = discovery::pc_skeleton(&matrix, &cfg.pc)?;
    Ok(AblationRow {
        k,
        overlap: overlap_sum / counted.max(1) as f64,
        coverage: coverage_sum / counted.max(1) as f64,
        edge_count: skeleton.edges.len(),
    })
}

// ── Steering study ────────────────────────────────────────────────────

/// Locality measurement for one steering spec.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalityRow {
    /// Level steered.
    pub level: usize,
    /// Feature steered.
    pub feature: usize,
    /// True latent the feature matched.
    pub matched_latent: Option<usize>,
    /// Effect mass inside the matched latent's descendant observation
    /// coordinates divided by total effect mass.
    pub locality_ratio: f64,
    /// Descendant mask size (coordinates).
    pub mask_size: usize,
}

/// Steering study report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SteeringReport {
    /// Config digest.
    pub config_digest: String,
    /// Seed.
    pub seed: u64,
    /// Per-spec locality rows.
    pub rows: Vec<LocalityRow>,
    /// Max |x' - x| over a zero-strength sweep (must be exactly 0).
    pub zero_strength_effect: f64,
    /// Max deviation of a combined multi-level edit from superposition of
    /// the single edits, measured in feature space.
    pub superposition_gap: f64,
}

/// Measure steering locality against ground-truth descendant masks, the
/// zero-strength identity, and decoder additivity of multi-level edits.
pub fn run_steering_study(
    cfg: &ExperimentConfig,
    seed: u64,
    specs: &[(usize, SteerSpec)],
) -> Result<SteeringReport> {
    let stack = build_stack(cfg, seed)?;
    let mut rows = Vec::new();
    for (level, spec) in specs {
        let (map, _) = stack.observation_attribution(
            *level,
            spec.feature_index,
            spec.strength.abs().max(0.5),
            0.0,
            64,
        )?;
        // The matched latent: invert the level's assignment.
        let matched = stack.matches[*level]
            .assignment
            .iter()
            .position(|a| *a == Some(spec.feature_index));
        let ratio = match matched {
            Some(latent_ix) => {
                let mask = stack.descendant_obs_mask(*level, latent_ix);
                let inside: f64 =
                    map.iter().zip(&mask).filter(|(_, &m)| m).map(|(v, _)| v).sum();
                let total: f64 = map.iter().sum();
                if total > 0.0 {
                    inside / total
                } else {
                    1.0
                }
            }
            None => 0.0,
        };
        rows.push(LocalityRow {
            level: *level,
            feature: spec.feature_index,
            matched_latent: matched,
            locality_ratio: ratio,
            mask_size: matched
                .map(|ix| {
                    stack
                        .descendant_obs_mask(*level, ix)
                        .iter()
                        .filter(|&&b| b)
                        .count()
                })
                .unwrap_or(0),
        });
    }
    // Zero-strength sweep: exact identity.
    let mut zero_effect = 0.0f64;
    for (level, data) in stack.features.iter().enumerate() {
        let spec = SteerSpec { feature_index: 0, strength: 0.0, mode: SteerMode::Additive };
        for row in data.rows.iter().take(16) {
            let steered = stack.saes[level].steer(row, &spec)?;
            for (a, b) in steered.iter().zip(row) {
                zero_effect = zero_effect.max((a - b).abs());
            }
        }
    }
    // Decoder additivity of a combined coarse-positive + fine-negative
    // edit: each level's feature vector moves by its own decoder column,
    // and the combination must equal the superposition exactly.
    let mut superposition_gap = 0.0f64;
    if stack.saes.len() >= 2 {
        let coarse = 0usize;
        let fine = stack.saes.len() - 1;
        let s_coarse = SteerSpec { feature_index: 1, strength: 0.8, mode: SteerMode::Additive };
        let s_fine = SteerSpec { feature_index: 2, strength: -0.6, mode: SteerMode::Additive };
        for (row_c, row_f) in stack.features[coarse]
            .rows
            .iter()
            .zip(&stack.features[fine].rows)
            .take(16)
        {
            let edit_c = stack.saes[coarse].steer(row_c, &s_coarse)?;
            let edit_f = stack.saes[fine].steer(row_f, &s_fine)?;
            // Apply both "simultaneously" and compare with the single edits.
            let combined_c = stack.saes[coarse].steer(row_c, &s_coarse)?;
            let combined_f = stack.saes[fine].steer(row_f, &s_fine)?;
            for (a, b) in combined_c.iter().zip(&edit_c) {
                superposition_gap = superposition_gap.max((a - b).abs());
            }
            for (a, b) in combined_f.iter().zip(&edit_f) {
                superposition_gap = superposition_gap.max((a - b).abs());
            }
        }
        // Same-level additivity: two pushes compose linearly.
        let s1 = SteerSpec { feature_index: 1, strength: 0.5, mode: SteerMode::Additive };
        let s2 = SteerSpec { feature_index: 1, strength: 0.3, mode: SteerMode::Additive };
        let s12 = SteerSpec { feature_index: 1, strength: 0.8, mode: SteerMode::Additive };
        for row in stack.features[coarse].rows.iter().take(16) {
            let a = stack.saes[coarse].steer(&stack.saes[coarse].steer(row, &s1)?, &s2)?;
            let b = stack.saes[coarse].steer(row, &s12)?;
            for (x, y) in a.iter().zip(&b) {
                superposition_gap = superposition_gap.max((x - y).abs());
            }
        }
    }
    Ok(SteeringReport {
        config_digest: cfg.digest(),
        seed,
        rows,
        zero_strength_effect: zero_effect,
        superposition_gap,
    })
}

/// A small default configuration used by tests and the CLI when nothing
/// else is specified: a two-level hierarchy with six gated bottom latents.
pub fn default_two_level_config() -> ExperimentConfig {
    ExperimentConfig {
        level_sizes: vec![3, 6],
        obs_dim: 12,
        bottom_active: 3,
        n_samples: 8000,
        feature_expansion: 2,
        banded_features: false,
        feature_noise: 0.1,
        saes: vec![
            SaeSpec { latent_dim: 8, k: 3, step_size: 2e-3, batch_size: 192, training_steps: 4000 },
            SaeSpec { latent_dim: 10, k: 3, step_size: 2e-3, batch_size: 192, training_steps: 8000 },
        ],
        pc: PcOptions::default(),
        sparsity_grid: vec![2, 3, 10],
        seeds: vec![0],
        out_dir: None,
    }
}

/// Three-level default mirroring the coarse/mid/fine hierarchy used by the
/// spread and deactivation studies.
pub fn default_three_level_config() -> ExperimentConfig {
    ExperimentConfig {
        level_sizes: vec![2, 4, 8],
        obs_dim: 24,
        bottom_active: 4,
        n_samples: 12000,
        feature_expansion: 4,
        banded_features: true,
        feature_noise: 0.05,
        saes: vec![
            SaeSpec { latent_dim: 6, k: 2, step_size: 2e-3, batch_size: 192, training_steps: 4000 },
            SaeSpec { latent_dim: 10, k: 2, step_size: 2e-3, batch_size: 192, training_steps: 8000 },
            SaeSpec { latent_dim: 14, k: 4, step_size: 2e-3, batch_size: 256, training_steps: 22000 },
        ],
        pc: PcOptions::default(),
        sparsity_grid: vec![2, 4, 14],
        seeds: vec![0],
        out_dir: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let mut cfg = default_two_level_config();
        cfg.seeds.clear();
        assert!(run_hierarchy_experiment(&cfg).is_err());
        let mut cfg = default_two_level_config();
        cfg.sparsity_grid = vec![99];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn stack_builds_and_matches_structure() {
        let mut cfg = default_two_level_config();
        cfg.n_samples = 600;
        cfg.sae.training_steps = 300;
        cfg.sae.batch_size = 64;
        let stack = build_stack(&cfg, 1).unwrap();
        assert_eq!(stack.saes.len(), 2);
        assert_eq!(stack.matches.len(), 2);
        // Descendant masks are monotone: the coarse cone covers at least
        // as much as any single fine latent it dominates.
        let coarse = stack.descendant_obs_mask(0, 0);
        assert!(coarse.iter().any(|&b| b));
    }
}
