//! Random ground-truth model generators with screening.
//!
//! The discrete family is engineered so that every screened instance is
//! recoverable by the constructive identification pipeline. Identification
//! places competing demands on each selection function f(a, b):
//!
//! - per-parent-per-cell images of size at most 2, so the nonnegative-rank
//!   bottleneck criterion accepts the true co-parent set cell by cell;
//! - at least two *distinct* level-set partitions among its slices, so
//!   that any candidate conditioning set missing a co-parent leaves a
//!   full-rank table and is rejected (one shared partition would leave the
//!   variable with a two-state effective channel, and the rank test would
//!   certify a spurious bottleneck with a smaller set);
//! - one output value achievable over the full parent product but never
//!   realized (a proper support under random recombination);
//! - three realized values, since coarser rounds need the same bottleneck
//!   machinery one level up.
//!
//! A 3x3 template meeting all four at once is
//!
//!   f = [[0,1,1], [2,1,1], [2,2,3]]
//!
//! (value 3 is the overflow: any configuration mapping through it is
//! excluded by the selection itself, which is what keeps it unrealized).
//! The corpus composes this template, randomized by input/output
//! relabelings and transposition, over private parent pairs: four mid
//! concepts on eight observed variables, two top concepts on mid pairs.
//! Parent sets are kept disjoint because a shared parent whose children
//! consume it through a common coarsening (the only arrangement that
//! leaves state merging exact) has a channel too narrow for the
//! cardinality-minimal rank criterion to force it into any conditioning
//! set: its co-parents would be undiscoverable. Hybrid-parent handling is
//! exercised against hand-built adjacency at unit level instead.
//!
//! Distributions are product-form over preimages (one weight vector per
//! variable, shared across rows): arbitrary per-row weights would couple a
//! latent's private parents to the remainder inside each preimage and
//! break the conditional-independence relations identification rests on.
//! Instances are screened for faithfulness, the discrete identification
//! conditions, exact state mergeability, and a quiet top level.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::conditions;
use crate::error::{Error, Result};
use crate::ident::{self, IntroducedLatent, IntroducedLayer};
use crate::model::{
    ContinuousSelectionModel, Dataset, DiscreteSelectionModel, JointTable, LevelConditional,
    NodeEquation, NodeKind, ObservationMap, SelectionFunction, SelectionGraph,
};
use crate::rng;

/// How preimage mass is distributed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PreimageWeights {
    /// Uniform over the preimage.
    Uniform,
    /// Independent symmetric Dirichlet weights (generic).
    Dirichlet {
        /// Concentration (> 1 keeps weights away from zero).
        alpha: f64,
    },
}

/// Options for the discrete corpus generator.
#[derive(Debug, Clone)]
pub struct DiscreteGenOptions {
    /// Root seed; each retry derives a fresh stream.
    pub seed: u64,
    /// Resampling budget for the screens.
    pub max_retries: usize,
    /// Preimage weight family.
    pub weights: PreimageWeights,
}

impl Default for DiscreteGenOptions {
    fn default() -> Self {
        DiscreteGenOptions {
            seed: 0,
            max_retries: 100,
            weights: PreimageWeights::Dirichlet { alpha: 3.0 },
        }
    }
}

/// A screened instance plus how many attempts it took.
#[derive(Debug, Clone)]
pub struct GeneratedDiscrete {
    /// The model; all screens green.
    pub model: DiscreteSelectionModel,
    /// Attempts consumed (1 = first try).
    pub attempts: usize,
}

// ── Structure plan ────────────────────────────────────────────────────

/// The base selection template. Rows are the first input, columns the
/// second; entry 3 is the overflow value whose witnesses the selection
/// excludes.
const TEMPLATE: [[u32; 3]; 3] = [[0, 1, 1], [2, 1, 1], [2, 2, 3]];

/// A randomized instance of the template: optional transpose, per-input
/// value relabelings, and a relabeling of the realized outputs (overflow
/// stays 3).
#[derive(Debug, Clone)]
struct FnVariant {
    transpose: bool,
    in_perm: [[u32; 3]; 2],
    out_perm: [u32; 3],
}

impl FnVariant {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let perm3 = |rng: &mut ChaCha8Rng| -> [u32; 3] {
            let mut p = [0u32, 1, 2];
            p.shuffle(rng);
            p
        };
        FnVariant {
            transpose: rng.gen_bool(0.5),
            in_perm: [perm3(rng), perm3(rng)],
            out_perm: perm3(rng),
        }
    }

    fn apply(&self, a: u32, b: u32) -> u32 {
        let (x, y) = (self.in_perm[0][a as usize] as usize, self.in_perm[1][b as usize] as usize);
        let raw = if self.transpose { TEMPLATE[y][x] } else { TEMPLATE[x][y] };
        if raw == 3 {
            3
        } else {
            self.out_perm[raw as usize]
        }
    }
}

#[derive(Debug, Clone)]
struct Plan {
    n_observed: usize,
    /// Observed index pair per mid concept.
    mids: Vec<([usize; 2], FnVariant)>,
    /// Mid index pair per top concept.
    tops: Vec<([usize; 2], FnVariant)>,
}

fn draw_plan(rng: &mut ChaCha8Rng) -> Plan {
    let n_observed = 8;
    let mut obs: Vec<usize> = (0..n_observed).collect();
    obs.shuffle(rng);
    let mut mids = Vec::new();
    for pair in obs.chunks(2) {
        let mut p = [pair[0], pair[1]];
        p.sort_unstable();
        mids.push((p, FnVariant::random(rng)));
    }
    mids.sort_by_key(|(p, _)| *p);
    let mut mid_ix: Vec<usize> = (0..4).collect();
    mid_ix.shuffle(rng);
    let mut tops = Vec::new();
    for pair in mid_ix.chunks(2) {
        let mut p = [pair[0], pair[1]];
        p.sort_unstable();
        tops.push((p, FnVariant::random(rng)));
    }
    tops.sort_by_key(|(p, _)| *p);
    Plan { n_observed, mids, tops }
}

impl Plan {
    /// Mid selection value over an observed configuration (3 = overflow).
    fn mid_value(&self, m: usize, obs: &[u32]) -> u32 {
        let (pair, variant) = &self.mids[m];
        variant.apply(obs[pair[0]], obs[pair[1]])
    }

    fn mid_tuple(&self, obs: &[u32]) -> Vec<u32> {
        (0..self.mids.len()).map(|m| self.mid_value(m, obs)).collect()
    }

    /// Top selection value over a mid configuration (3 = overflow).
    fn top_value(&self, t: usize, mids: &[u32]) -> u32 {
        let (pair, variant) = &self.tops[t];
        variant.apply(mids[pair[0]], mids[pair[1]])
    }

    fn top_tuple(&self, mids: &[u32]) -> Vec<u32> {
        (0..self.tops.len()).map(|t| self.top_value(t, mids)).collect()
    }
}

/// Generate one screened discrete model.
pub fn random_discrete_model(opts: &DiscreteGenOptions) -> Result<GeneratedDiscrete> {
    let mut reasons: BTreeMap<String, usize> = BTreeMap::new();
    for attempt in 1..=opts.max_retries {
        let mut rng = rng::stream(opts.seed, &format!("discrete-gen-{attempt}"));
        let plan = draw_plan(&mut rng);
        match build_and_screen(&plan, &mut rng, opts.weights) {
            Ok(Ok(model)) => return Ok(GeneratedDiscrete { model, attempts: attempt }),
            Ok(Err(reason)) => {
                *reasons.entry(reason).or_insert(0usize) += 1;
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::Config(format!(
        "no screened discrete model within {} retries of seed {}; screen failures: {:?}",
        opts.max_retries, opts.seed, reasons
    )))
}

type Screened = std::result::Result<DiscreteSelectionModel, String>;

fn build_and_screen(
    plan: &Plan,
    rng: &mut ChaCha8Rng,
    weights: PreimageWeights,
) -> Result<Screened> {
    let n_obs = plan.n_observed;
    let m1 = plan.mids.len();
    let m2 = plan.tops.len();

    // Reachability: an observed configuration survives iff no selection
    // value overflows anywhere up the hierarchy.
    let mut obs_by_mid: BTreeMap<Vec<u32>, Vec<Vec<u32>>> = BTreeMap::new();
    product_configs(n_obs, &[0, 1, 2], &mut |obs| {
        let mids = plan.mid_tuple(obs);
        if mids.contains(&3) {
            return;
        }
        if plan.top_tuple(&mids).contains(&3) {
            return;
        }
        obs_by_mid.entry(mids).or_default().push(obs.to_vec());
    });
    if obs_by_mid.is_empty() {
        return Ok(Err("no reachable configurations".into()));
    }
    let mut top_configs: BTreeMap<Vec<u32>, Vec<Vec<u32>>> = BTreeMap::new();
    for m in obs_by_mid.keys() {
        top_configs.entry(plan.top_tuple(m)).or_default().push(m.clone());
    }
    if top_configs.len() < 2 {
        return Ok(Err("top prior support below 2".into()));
    }
    // Marginal support screens: everything designed must be realized.
    for v in 0..n_obs {
        let seen: BTreeSet<u32> = obs_by_mid.values().flatten().map(|cfg| cfg[v]).collect();
        if seen.len() != 3 {
            return Ok(Err("observed marginal not full".into()));
        }
    }
    for m in 0..m1 {
        let seen: BTreeSet<u32> = obs_by_mid.keys().map(|cfg| cfg[m]).collect();
        if seen != BTreeSet::from([0, 1, 2]) {
            return Ok(Err("mid marginal not {0,1,2}".into()));
        }
    }
    for t in 0..m2 {
        let seen: BTreeSet<u32> = top_configs.keys().map(|cfg| cfg[t]).collect();
        if seen != BTreeSet::from([0, 1, 2]) {
            return Ok(Err("top marginal not {0,1,2}".into()));
        }
    }

    // Clique recoverability: with disjoint parent pairs the co-parent graph
    // is a perfect matching, whose maximal cliques are exactly the pairs.
    let parent_sets: Vec<BTreeSet<usize>> =
        plan.mids.iter().map(|(pair, _)| pair.iter().copied().collect()).collect();

    // Assemble the model.
    let obs_id = |v: usize| format!("D{}", v + 1);
    let mid_id = |m: usize| format!("S{}", m + 1);
    let top_id = |t: usize| format!("T{}", t + 1);
    let levels: Vec<Vec<(String, NodeKind)>> = vec![
        (0..m2).map(|t| (top_id(t), NodeKind::Discrete)).collect(),
        (0..m1).map(|m| (mid_id(m), NodeKind::Discrete)).collect(),
        (0..n_obs).map(|v| (obs_id(v), NodeKind::Discrete)).collect(),
    ];
    let mut edges = Vec::new();
    for (m, pa) in parent_sets.iter().enumerate() {
        for &v in pa {
            edges.push((obs_id(v), mid_id(m)));
        }
    }
    for (t, (pair, _)) in plan.tops.iter().enumerate() {
        for &m in pair {
            edges.push((mid_id(m), top_id(t)));
        }
    }
    let graph = SelectionGraph::new(levels, &edges)?;

    let mut supports: BTreeMap<String, Vec<u32>> = BTreeMap::new();
    for v in 0..n_obs {
        supports.insert(obs_id(v), vec![0, 1, 2]);
    }
    for m in 0..m1 {
        supports.insert(mid_id(m), vec![0, 1, 2]);
    }
    for t in 0..m2 {
        supports.insert(top_id(t), vec![0, 1, 2]);
    }

    let mut functions: BTreeMap<String, SelectionFunction> = BTreeMap::new();
    for (m, (pair, _)) in plan.mids.iter().enumerate() {
        let parent_ids: Vec<String> = pair.iter().map(|&v| obs_id(v)).collect();
        let alphabets = vec![vec![0, 1, 2], vec![0, 1, 2]];
        let f = SelectionFunction::from_fn(mid_id(m), parent_ids, &alphabets, |tuple| {
            let mut obs = vec![0u32; n_obs];
            obs[pair[0]] = tuple[0];
            obs[pair[1]] = tuple[1];
            plan.mid_value(m, &obs)
        })?;
        functions.insert(mid_id(m), f);
    }
    for (t, (pair, _)) in plan.tops.iter().enumerate() {
        let parent_ids: Vec<String> = pair.iter().map(|&m| mid_id(m)).collect();
        let alphabets = vec![vec![0, 1, 2], vec![0, 1, 2]];
        let f = SelectionFunction::from_fn(top_id(t), parent_ids, &alphabets, |tuple| {
            let mut mids = vec![0u32; m1];
            mids[pair[0]] = tuple[0];
            mids[pair[1]] = tuple[1];
            plan.top_value(t, &mids)
        })?;
        functions.insert(top_id(t), f);
    }

    // Preimage mass must be *product form*: one weight vector per variable,
    // shared across all rows, with each row the normalized restriction of
    // the product measure to the preimage. Arbitrary per-row weights would
    // couple a latent's private parents to the remainder inside each
    // preimage and break the conditional-independence relations that state
    // merging (and the whole identification argument) rests on; with
    // product weights the row normalizers cancel between configurations
    // that share a coarse value.
    let var_weights = |dim: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        match weights {
            PreimageWeights::Uniform => vec![1.0 / dim as f64; dim],
            PreimageWeights::Dirichlet { alpha } => rng::dirichlet(rng, dim, alpha),
        }
    };
    let q_obs: Vec<Vec<f64>> = (0..n_obs).map(|_| var_weights(3, rng)).collect();
    let q_mid: Vec<Vec<f64>> = (0..m1).map(|_| var_weights(3, rng)).collect();
    let obs_weight =
        |d: &[u32]| -> f64 { d.iter().enumerate().map(|(v, &x)| q_obs[v][x as usize]).product() };
    let mid_weight =
        |m: &[u32]| -> f64 { m.iter().enumerate().map(|(s, &x)| q_mid[s][x as usize]).product() };
    let normalized = |items: Vec<(Vec<u32>, f64)>| -> Vec<(Vec<u32>, f64)> {
        let total: f64 = items.iter().map(|(_, w)| w).sum();
        items.into_iter().map(|(k, w)| (k, w / total)).collect()
    };
    let mut top_prior: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    {
        let keys: Vec<Vec<u32>> = top_configs.keys().cloned().collect();
        let w = match weights {
            PreimageWeights::Uniform => vec![1.0 / keys.len() as f64; keys.len()],
            PreimageWeights::Dirichlet { alpha } => rng::dirichlet(rng, keys.len(), alpha),
        };
        for (k, &p) in keys.iter().zip(&w) {
            top_prior.insert(k.clone(), p);
        }
    }
    let mut mid_rows: BTreeMap<Vec<u32>, Vec<(Vec<u32>, f64)>> = BTreeMap::new();
    for (top_cfg, mids) in &top_configs {
        let row: Vec<(Vec<u32>, f64)> = mids.iter().map(|m| (m.clone(), mid_weight(m))).collect();
        mid_rows.insert(top_cfg.clone(), normalized(row));
    }
    let mut obs_rows: BTreeMap<Vec<u32>, Vec<(Vec<u32>, f64)>> = BTreeMap::new();
    for (mid_cfg, obs) in &obs_by_mid {
        let row: Vec<(Vec<u32>, f64)> = obs.iter().map(|d| (d.clone(), obs_weight(d))).collect();
        obs_rows.insert(mid_cfg.clone(), normalized(row));
    }
    let model = DiscreteSelectionModel {
        graph,
        supports,
        functions,
        top_prior,
        level_conditionals: vec![
            LevelConditional { rows: mid_rows },
            LevelConditional { rows: obs_rows },
        ],
    };
    model.validate()?;

    // Distribution-level screens.
    let joint = model.exact_joint(false, None)?;
    if !faithful(&model, &joint) {
        return Ok(Err("faithfulness: an edge shows no mutual information".into()));
    }
    let report = conditions::check_discrete_conditions_on(&model, &joint)?;
    if !report.passed() {
        let failed: Vec<&str> = report
            .entries
            .iter()
            .filter(|e| !e.passed())
            .map(|e| e.condition.as_str())
            .collect();
        return Ok(Err(format!("conditions failed: {}", failed.join("+"))));
    }
    if !merge_recovers_truth(&model)? {
        return Ok(Err("merge does not recover truth fibers".into()));
    }
    if !top_level_is_quiet(&model)? {
        return Ok(Err("top level still shows a bottleneck".into()));
    }
    Ok(Ok(model))
}

/// Fixed textual-demo pairing (the canonical committed fixture): eight
/// observed tokens in adjacent pairs under four mid concepts, adjacent mid
/// pairs under two top concepts. Function variants and weights vary with
/// the seed until the screens pass.
pub(crate) fn textual_demo_model(seed: u64) -> Result<DiscreteSelectionModel> {
    for attempt in 0..200u64 {
        let mut rng = rng::stream(seed, &format!("textual-demo-{attempt}"));
        let plan = Plan {
            n_observed: 8,
            mids: (0..4).map(|m| ([2 * m, 2 * m + 1], FnVariant::random(&mut rng))).collect(),
            tops: (0..2).map(|t| ([2 * t, 2 * t + 1], FnVariant::random(&mut rng))).collect(),
        };
        if let Ok(model) =
            build_and_screen(&plan, &mut rng, PreimageWeights::Dirichlet { alpha: 3.0 })?
        {
            return Ok(model);
        }
    }
    Err(Error::Config("textual demo model: no screened instance in 200 attempts".into()))
}

fn product_configs(dims: usize, values: &[u32], f: &mut impl FnMut(&[u32])) {
    let mut cfg = vec![values[0]; dims];
    fn rec(cfg: &mut Vec<u32>, depth: usize, values: &[u32], f: &mut impl FnMut(&[u32])) {
        if depth == cfg.len() {
            f(cfg);
            return;
        }
        for &v in values {
            cfg[depth] = v;
            rec(cfg, depth + 1, values, f);
        }
    }
    rec(&mut cfg, 0, values, f);
}

/// Every graph edge must show up as dependence in the joint.
fn faithful(model: &DiscreteSelectionModel, joint: &JointTable) -> bool {
    for &(f, t) in model.graph.edges() {
        let a = joint.var_by_label(model.graph.id(f)).expect("var");
        let b = joint.var_by_label(model.graph.id(t)).expect("var");
        if joint.mutual_information(a, b) <= 1e-6 {
            return false;
        }
    }
    true
}

/// Genericity screen: running the state merge against the *true* adjacency
/// must reproduce each latent's fibers exactly, level by level. This is
/// what rules out the symmetric coincidences that the identification
/// conditions alone do not exclude.
fn merge_recovers_truth(model: &DiscreteSelectionModel) -> Result<bool> {
    let bottom = model.bottom_level();
    let mut current = model.exact_joint(true, None)?;
    for level in (0..bottom).rev() {
        let level_ids = model.level_ids(level);
        // Build the true layer over the current joint's variables.
        let mut latents = Vec::new();
        for id in &level_ids {
            let node = model.graph.node_by_id(id).expect("node");
            let parents: Vec<usize> = model
                .graph
                .parents(node)
                .iter()
                .map(|&p| current.var_by_label(model.graph.id(p)).expect("parent var"))
                .collect();
            let (pure, hybrid) = model.graph.split_parents(node);
            let to_var = |nodes: Vec<usize>| -> Vec<usize> {
                nodes
                    .iter()
                    .map(|&p| current.var_by_label(model.graph.id(p)).expect("var"))
                    .collect()
            };
            let mut parents_sorted = parents;
            parents_sorted.sort_unstable();
            latents.push(IntroducedLatent {
                parents: parents_sorted,
                pure: {
                    let mut v = to_var(pure);
                    v.sort_unstable();
                    v
                },
                hybrid: {
                    let mut v = to_var(hybrid);
                    v.sort_unstable();
                    v
                },
            });
        }
        let layer = IntroducedLayer { latents };
        for (ix, id) in level_ids.iter().enumerate() {
            let out = match ident::merge_states(&current, &layer, ix, id, 1e-9) {
                Ok(o) => o,
                Err(Error::AmbiguousMerge { .. }) => return Ok(false),
                Err(e) => return Err(e),
            };
            // Classes must coincide with the true function's fibers.
            let truth = &model.functions[id];
            let mut class_of_state: BTreeMap<u32, u32> = BTreeMap::new();
            for (tuple, learned_state) in out.function.domain() {
                // Learned parent order may differ from the truth function's.
                let values: Vec<u32> = truth
                    .parents
                    .iter()
                    .map(|p| {
                        let ix = out.function.parents.iter().position(|q| q == p).expect("parent");
                        tuple[ix]
                    })
                    .collect();
                let sigma = truth.apply(&values)?;
                match class_of_state.get(&sigma) {
                    None => {
                        if class_of_state.values().any(|&c| c == learned_state) {
                            return Ok(false); // two truth states merged
                        }
                        class_of_state.insert(sigma, learned_state);
                    }
                    Some(&c) if c == learned_state => {}
                    Some(_) => return Ok(false), // one truth state split
                }
            }
        }
        // Marginalize onto this level using the true values so the next
        // round sees exactly the model's own level variables.
        let snapshot = current.clone();
        let new_vars: Vec<(String, Vec<u32>)> = level_ids
            .iter()
            .map(|id| (id.clone(), model.supports[id].clone()))
            .collect();
        let fns: BTreeMap<String, &SelectionFunction> =
            level_ids.iter().map(|id| (id.clone(), &model.functions[id])).collect();
        current = snapshot.pushforward(new_vars.clone(), |nv, cfg| {
            let f = fns[&new_vars[nv].0];
            let values: Vec<u32> = f
                .parents
                .iter()
                .map(|p| {
                    let v = snapshot.var_by_label(p).expect("parent");
                    snapshot.alphabet(v)[cfg[v]]
                })
                .collect();
            f.apply(&values).expect("total function")
        })?;
    }
    Ok(true)
}

/// The recursion must terminate above the top level: no top variable may
/// exhibit a bottleneck on the top-level marginal.
fn top_level_is_quiet(model: &DiscreteSelectionModel) -> Result<bool> {
    let joint = model.exact_joint(false, None)?;
    let top_vars: Vec<usize> = model
        .level_ids(0)
        .iter()
        .map(|id| joint.var_by_label(id).expect("top var"))
        .collect();
    let top = joint.marginal(&top_vars);
    for v in 0..top.n_vars() {
        match ident::find_coparents(&top, v, &ident::CoparentOptions::default()) {
            Err(Error::NoBottleneck(_)) => {}
            Err(e) => return Err(e),
            Ok(_) => return Ok(false),
        }
    }
    Ok(true)
}

// ── Continuous models ─────────────────────────────────────────────────

/// Shape of a random continuous hierarchy.
#[derive(Debug, Clone)]
pub struct ContinuousShape {
    /// Latent level sizes, coarsest first.
    pub level_sizes: Vec<usize>,
    /// Observation dimension (>= bottom level size).
    pub obs_dim: usize,
    /// When set, bottom-level equations are gated so that on average about
    /// this many bottom latents are active per sample.
    pub gated_bottom_active: Option<usize>,
    /// Noise standard deviation of latent equations.
    pub noise_sigma: f64,
    /// Observation noise standard deviation.
    pub obs_noise_sigma: f64,
    /// Leaky slope everywhere.
    pub leak: f64,
}

/// Generate a random continuous selection model of the given shape,
/// retrying until the observation mixing is comfortably invertible.
pub fn random_continuous_model(shape: &ContinuousShape, seed: u64) -> Result<ContinuousSelectionModel> {
    for attempt in 0..50 {
        let mut rg = rng::stream(seed, &format!("continuous-gen-{attempt}"));
        if let Some(model) = try_continuous(shape, &mut rg)? {
            return Ok(model);
        }
    }
    Err(Error::Config("no invertible continuous model within 50 attempts".into()))
}

fn try_continuous(
    shape: &ContinuousShape,
    rg: &mut ChaCha8Rng,
) -> Result<Option<ContinuousSelectionModel>> {
    let l = shape.level_sizes.len();
    if l < 2 || shape.obs_dim < shape.level_sizes[l - 1] {
        return Err(Error::Config("need >= 2 latent levels and obs_dim >= bottom size".into()));
    }
    let latent_id = |level: usize, i: usize| format!("Z{}.{}", level + 1, i + 1);
    let obs_id = |j: usize| format!("X{}", j + 1);
    let mut levels: Vec<Vec<(String, NodeKind)>> = Vec::new();
    for (level, &size) in shape.level_sizes.iter().enumerate() {
        levels.push((0..size).map(|i| (latent_id(level, i), NodeKind::Continuous)).collect());
    }
    levels.push((0..shape.obs_dim).map(|j| (obs_id(j), NodeKind::Continuous)).collect());

    // Opponent-pair layout: when a gated level is exactly twice the level
    // above, its nodes come in complementary pairs, each pair driven by
    // one coarse concept whose sign selects which variant fires. Activity
    // is then exactly one per pair, so the true active count is a constant
    // the code sparsity can match. Applied at every doubling level when
    // gating is requested.
    let paired_level = |level: usize| -> bool {
        shape.gated_bottom_active.is_some()
            && level >= 1
            && shape.level_sizes[level] == 2 * shape.level_sizes[level - 1]
    };
    let opponent_pairs = paired_level(l - 1);
    // Cross-level latent edges: each finer node picks 1-2 coarser children;
    // uncovered coarser nodes get patched with an extra parent.
    let mut edges: Vec<(String, String)> = Vec::new();
    let mut inputs_of: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for level in 1..l {
        let coarse = shape.level_sizes[level - 1];
        if paired_level(level) {
            for i in 0..shape.level_sizes[level] {
                let c = i / 2;
                edges.push((latent_id(level, i), latent_id(level - 1, c)));
                inputs_of.insert(latent_id(level, i), vec![latent_id(level - 1, c)]);
            }
            continue;
        }
        let mut covered = vec![false; coarse];
        for i in 0..shape.level_sizes[level] {
            let k = if coarse == 1 { 1 } else { *[1usize, 2].choose(rg).unwrap() };
            let mut picks: Vec<usize> = (0..coarse).collect();
            picks.shuffle(rg);
            picks.truncate(k);
            picks.sort_unstable();
            for &c in &picks {
                covered[c] = true;
                edges.push((latent_id(level, i), latent_id(level - 1, c)));
            }
            inputs_of.insert(
                latent_id(level, i),
                picks.iter().map(|&c| latent_id(level - 1, c)).collect(),
            );
        }
        for (c, &cov) in covered.iter().enumerate() {
            if !cov {
                let i = rg.gen_range(0..shape.level_sizes[level]);
                edges.push((latent_id(level, i), latent_id(level - 1, c)));
                inputs_of.get_mut(&latent_id(level, i)).unwrap().push(latent_id(level - 1, c));
            }
        }
    }
    // Observation mask: contiguous windows per bottom latent, plus random
    // overlaps, so descendant footprints are local.
    let n_z = shape.level_sizes[l - 1];
    let n_x = shape.obs_dim;
    // Partition windows: each observation coordinate reads exactly one
    // bottom latent, so receptive fields tile the canvas and per-level
    // footprints have deterministic sizes.
    let mut mask: Vec<Vec<bool>> = vec![vec![false; n_z]; n_x];
    for (j, row) in mask.iter_mut().enumerate() {
        row[(j * n_z) / n_x] = true;
    }
    for (j, row) in mask.iter().enumerate() {
        for (i, &m) in row.iter().enumerate() {
            if m {
                edges.push((obs_id(j), latent_id(l - 1, i)));
            }
        }
    }
    let graph = SelectionGraph::new(levels, &edges)?;

    let mut equations: BTreeMap<String, NodeEquation> = BTreeMap::new();
    for level in 1..l {
        let gated = shape.gated_bottom_active.is_some() && (level == l - 1 || paired_level(level));
        let paired = paired_level(level);
        for i in 0..shape.level_sizes[level] {
            let id = latent_id(level, i);
            let inputs = inputs_of[&id].clone();
            let weights: Vec<f64> = inputs
                .iter()
                .map(|_| rg.gen_range(0.6..1.4) * if rg.gen_bool(0.5) { 1.0 } else { -1.0 })
                .collect();
            // Gated (bottom) nodes get a positive value-path offset so active
            // values sit on one side of zero: a rectified code can then carry
            // each source on a single unit instead of a sign-split pair.
            let bias = if gated { 1.5 } else { rg.gen_range(-0.3..0.3) };
            let eq = if gated && paired {
                // Complementary gates per pair: node 2c fires on the
                // positive side of its driver, node 2c+1 on the negative.
                // The value path rides the drive gently (narrow range), so
                // effect sizes stay comparable across levels and hierarchy
                // comparisons are dominated by descendant-cone size.
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                let drive = rg.gen_range(0.9..1.3) * sign;
                NodeEquation::GatedAffineLeaky {
                    inputs,
                    weights: vec![0.5 * sign],
                    bias: 0.8,
                    leak: shape.leak,
                    gate_weights: vec![drive],
                    gate_bias: 0.0,
                    gate_sharpness: 20.0,
                    noise_sigma: shape.noise_sigma,
                }
            } else if gated {
                // Distinct sign patterns per node index keep the gates
                // pointing at well-separated half-spaces, so activity
                // patterns decorrelate across bottom latents.
                let gate_weights: Vec<f64> = inputs
                    .iter()
                    .enumerate()
                    .map(|(ix, _)| {
                        let sign = if (i >> ix) & 1 == 0 { 1.0 } else { -1.0 };
                        rg.gen_range(0.9..1.6) * sign
                    })
                    .collect();
                NodeEquation::GatedAffineLeaky {
                    inputs,
                    weights,
                    bias,
                    leak: shape.leak,
                    gate_weights,
                    gate_bias: 0.0, // calibrated below
                    gate_sharpness: 20.0,
                    noise_sigma: shape.noise_sigma,
                }
            } else {
                NodeEquation::AffineLeaky {
                    inputs,
                    weights,
                    bias,
                    leak: shape.leak,
                    noise_sigma: shape.noise_sigma,
                }
            };
            equations.insert(id, eq);
        }
    }
    let mut top_sigma = BTreeMap::new();
    for i in 0..shape.level_sizes[0] {
        top_sigma.insert(latent_id(0, i), 1.0);
    }

    // Observation mixing: masked latent block plus dense noise block.
    let n_eps = n_x - n_z;
    let latent_weights: Vec<Vec<f64>> = mask
        .iter()
        .map(|row| {
            row.iter()
                .map(|&m| {
                    if m {
                        rg.gen_range(0.7..1.3) * if rg.gen_bool(0.5) { 1.0 } else { -1.0 }
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let noise_weights: Vec<Vec<f64>> =
        (0..n_x).map(|_| (0..n_eps).map(|_| 0.6 * rng::normal(rg)).collect()).collect();
    let bias: Vec<f64> = (0..n_x).map(|_| rg.gen_range(-0.2..0.2)).collect();
    let observation = ObservationMap {
        latent_weights,
        noise_weights,
        bias,
        leak: shape.leak,
        noise_sigma: shape.obs_noise_sigma,
    };
    let mut model = ContinuousSelectionModel { graph, equations, top_sigma, observation };
    model.validate()?;

    // Calibrate gate biases level by level (coarse first, re-probing after
    // each level since calibration changes what the next level sees).
    // Paired levels split each driver at its median, so exactly one pair
    // member fires regardless of the driver's distribution (a sparse
    // nonnegative mid value is as fine a driver as a centered Gaussian).
    // A non-paired gated bottom falls back to quantile gating at the
    // requested activity fraction. Value paths ride the centered drive
    // gently (slope 0.5 from 0.8 at the threshold) so per-node effect
    // sizes stay comparable across levels.
    if let Some(active) = shape.gated_bottom_active {
        for level in 1..l {
            let paired = paired_level(level);
            let is_gated = level == l - 1 || paired;
            if !is_gated {
                continue;
            }
            let probe = model.sample_full(512, rg.gen());
            let level_ids = model.level_ids(level);
            let coarse_ids = model.level_ids(level - 1);
            let frac = if paired { 0.5 } else { active as f64 / n_z as f64 };
            for id in level_ids {
                let eq = model.equations[&id].clone();
                let NodeEquation::GatedAffineLeaky { inputs, gate_weights, .. } = &eq else {
                    continue;
                };
                let input_ix: Vec<usize> = inputs
                    .iter()
                    .map(|cid| coarse_ids.iter().position(|c| c == cid).unwrap())
                    .collect();
                let mut gate_pres: Vec<f64> = probe
                    .iter()
                    .map(|s| {
                        input_ix
                            .iter()
                            .zip(gate_weights)
                            .map(|(&ix, w)| w * s.levels[level - 1][ix])
                            .sum::<f64>()
                    })
                    .collect();
                gate_pres.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let cut = gate_pres[((1.0 - frac) * (gate_pres.len() - 1) as f64) as usize];
                let norm = gate_weights.iter().map(|w| w * w).sum::<f64>().sqrt().max(1e-9);
                if let Some(NodeEquation::GatedAffineLeaky {
                    gate_bias, gate_weights, weights, bias, ..
                }) = model.equations.get_mut(&id)
                {
                    *gate_bias = -cut;
                    for (w, gw) in weights.iter_mut().zip(gate_weights.iter()) {
                        *w = 0.8 * gw / norm;
                    }
                    *bias = 0.6 - 0.8 * cut / norm;
                }
            }
        }
    }

    // Invertibility screen on the mixing matrix.
    let min_sv = crate::numerics::smallest_singular_value(&model.observation.mixing_matrix());
    if min_sv < 0.05 {
        return Ok(None);
    }
    // Gated bottoms must be distinguishable sources: reject models whose
    // bottom latents are too correlated (near-duplicate gates make two
    // sources one atom, and no code can split them).
    if shape.gated_bottom_active.is_some() && !opponent_pairs {
        let probe = model.sample_full(512, 0xdec0);
        let nb = shape.level_sizes[l - 1];
        for i in 0..nb {
            for j in i + 1..nb {
                let a: Vec<f64> = probe.iter().map(|s| s.levels[l - 1][i]).collect();
                let b: Vec<f64> = probe.iter().map(|s| s.levels[l - 1][j]).collect();
                if crate::numerics::spearman(&a, &b).map_or(0.0, f64::abs) > 0.7 {
                    return Ok(None);
                }
            }
        }
    }
    Ok(Some(model))
}

// ── Binary activation model for graph recovery ────────────────────────

/// A leveled model of binary codes: bottom-level bits are independent
/// Bernoulli, and each coarser bit is a noisy threshold gate of its
/// parents. All levels are observed; the generator retains the graph as
/// the ground-truth skeleton for structure-recovery experiments. (This is
/// a plain generative stand-in for binarized per-level activations; unlike
/// a selection model it has no deterministic constraint, so its joint is
/// faithful to the drawn graph and exactly recoverable in principle.)
#[derive(Debug, Clone)]
pub struct NoisyGateModel {
    /// Leveled graph, finest level last; edges finer -> coarser.
    pub graph: SelectionGraph,
    /// Bernoulli rate per bottom node.
    pub base_rate: BTreeMap<String, f64>,
    /// (threshold, p_high, p_low) per non-bottom node.
    pub gates: BTreeMap<String, (u32, f64, f64)>,
}

impl NoisyGateModel {
    /// Random gates over a fixed graph.
    pub fn random(graph: SelectionGraph, seed: u64) -> Self {
        let mut rg = rng::stream(seed, "noisy-gate");
        let bottom = graph.level_count() - 1;
        let mut base_rate = BTreeMap::new();
        let mut gates = BTreeMap::new();
        for n in 0..graph.node_count() {
            let id = graph.id(n).to_string();
            if graph.level(n) == bottom {
                base_rate.insert(id, rg.gen_range(0.35..0.65));
            } else {
                let k = graph.parents(n).len() as u32;
                let threshold = rg.gen_range(1..=k.max(1));
                let p_high = rg.gen_range(0.78..0.92);
                let p_low = rg.gen_range(0.08..0.22);
                gates.insert(id, (threshold, p_high, p_low));
            }
        }
        NoisyGateModel { graph, base_rate, gates }
    }

    fn node_prob(&self, node: usize, values: &[u32]) -> f64 {
        let id = self.graph.id(node);
        let bottom = self.graph.level_count() - 1;
        if self.graph.level(node) == bottom {
            self.base_rate[id]
        } else {
            let (threshold, p_high, p_low) = self.gates[id];
            let sum: u32 = self.graph.parents(node).iter().map(|&p| values[p]).sum();
            if sum >= threshold {
                p_high
            } else {
                p_low
            }
        }
    }

    /// Topological order: finest level first.
    fn generation_order(&self) -> Vec<usize> {
        let mut order = Vec::new();
        for level in (0..self.graph.level_count()).rev() {
            order.extend_from_slice(self.graph.level_nodes(level));
        }
        order
    }

    /// Ancestral sampling (fine to coarse). Column order matches the graph
    /// declaration: coarsest level first.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        let mut rg = rng::stream(seed, "noisy-gate-sample");
        let order = self.generation_order();
        let node_count = self.graph.node_count();
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let mut values = vec![0u32; node_count];
            for &node in &order {
                let p = self.node_prob(node, &values);
                values[node] = u32::from(rg.gen_bool(p));
            }
            rows.push((0..node_count).map(|v| f64::from(values[v])).collect());
        }
        let labels: Vec<String> =
            (0..node_count).map(|n| self.graph.id(n).to_string()).collect();
        let levels: Vec<u32> = (0..node_count).map(|n| self.graph.level(n) as u32).collect();
        Dataset::new(labels, levels, rows, Some(seed))
    }

    /// Exact joint over all bits (2^N states).
    pub fn exact_joint(&self) -> Result<JointTable> {
        let node_count = self.graph.node_count();
        if node_count > 22 {
            return Err(Error::StateCap { states: 1u128 << node_count, cap: 1 << 22 });
        }
        let order = self.generation_order();
        let labels: Vec<String> =
            (0..node_count).map(|n| self.graph.id(n).to_string()).collect();
        let supports = vec![vec![0u32, 1]; node_count];
        let mut probs = vec![0.0f64; 1 << node_count];
        let mut values = vec![0u32; node_count];
        for state in 0..probs.len() {
            for (v, val) in values.iter_mut().enumerate() {
                // Variable 0 is the most significant position.
                *val = ((state >> (node_count - 1 - v)) & 1) as u32;
            }
            let mut p = 1.0;
            for &node in &order {
                let p1 = self.node_prob(node, &values);
                p *= if values[node] == 1 { p1 } else { 1.0 - p1 };
            }
            probs[state] = p;
        }
        JointTable::new(labels, supports, probs)
    }

    /// Ground-truth skeleton as (finer id, coarser id) pairs.
    pub fn skeleton(&self) -> Vec<(String, String)> {
        self.graph
            .edges()
            .iter()
            .map(|&(f, t)| (self.graph.id(f).to_string(), self.graph.id(t).to_string()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discrete_generator_produces_screened_models() {
        let gen = random_discrete_model(&DiscreteGenOptions { seed: 1, ..Default::default() })
            .expect("a screened model");
        let model = &gen.model;
        model.validate().unwrap();
        assert_eq!(model.graph.level_count(), 3);
        let report = conditions::check_discrete_conditions(model).unwrap();
        assert!(report.passed(), "{}", report.render_table());
    }

    #[test]
    fn discrete_generator_is_deterministic() {
        let a = random_discrete_model(&DiscreteGenOptions { seed: 7, ..Default::default() }).unwrap();
        let b = random_discrete_model(&DiscreteGenOptions { seed: 7, ..Default::default() }).unwrap();
        assert_eq!(a.model.to_json().unwrap(), b.model.to_json().unwrap());
    }

    #[test]
    fn continuous_generator_validates() {
        let shape = ContinuousShape {
            level_sizes: vec![2, 6],
            obs_dim: 12,
            gated_bottom_active: Some(3),
            noise_sigma: 0.05,
            obs_noise_sigma: 0.05,
            leak: 0.25,
        };
        let model = random_continuous_model(&shape, 3).unwrap();
        model.validate().unwrap();
        let samples = model.sample_full(64, 9);
        model.check_observation_jacobian(&samples, 1e-6).unwrap();
        // Gating produces sparse bottom activity.
        let bottom = &samples[0].levels[1];
        assert_eq!(bottom.len(), 6);
    }

    #[test]
    fn noisy_gate_joint_sums_to_one() {
        use crate::model::NodeKind;
        let graph = SelectionGraph::new(
            vec![
                vec![("a".to_string(), NodeKind::Discrete)],
                vec![("b".to_string(), NodeKind::Discrete), ("c".to_string(), NodeKind::Discrete)],
            ],
            &[("b".into(), "a".into()), ("c".into(), "a".into())],
        )
        .unwrap();
        let m = NoisyGateModel::random(graph, 5);
        let j = m.exact_joint().unwrap();
        assert_eq!(j.state_count(), 8);
        let d = m.sample(100, 3).unwrap();
        assert_eq!(d.n_rows(), 100);
    }
}
