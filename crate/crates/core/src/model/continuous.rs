//! Continuous hierarchical selection models.
//!
//! Latent levels 0..=L are real-valued concepts; one extra graph level
//! holds the observation coordinates, whose adjacency is exactly the
//! sparsity mask of the observation map. Generation runs top down: each
//! node at level l+1 is a smooth function of the coarser concepts it is
//! adjacent to plus private Gaussian noise, and the observation is an
//! invertible masked mixing of the bottom latents with fresh noise
//! coordinates.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Dataset, SelectionGraph};
use crate::error::{Error, Result};
use crate::rng;

/// Structural equation of one latent node below the top level.
///
/// `inputs` are the node's adjacent coarser concepts (its graph children;
/// in generative order they are sampled first). The conditional density of
/// the node given the level above is Gaussian with the stated mean map, so
/// scores stay analytic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeEquation {
    /// mean = leaky(w . inputs + b)
    AffineLeaky {
        /// Input node ids (coarser level), fixing weight order.
        inputs: Vec<String>,
        /// One weight per input.
        weights: Vec<f64>,
        /// Affine offset.
        bias: f64,
        /// Negative-side slope of the leaky nonlinearity.
        leak: f64,
        /// Additive noise standard deviation.
        noise_sigma: f64,
    },
    /// mean = sigmoid(sharpness * (gw . inputs + gb)) * leaky(w . inputs + b)
    ///
    /// The gate makes bottom-level activity sparse while keeping the
    /// conditional density smooth (noise is added outside the gate).
    GatedAffineLeaky {
        /// Input node ids (coarser level), fixing weight order.
        inputs: Vec<String>,
        /// One weight per input for the value path.
        weights: Vec<f64>,
        /// Value-path offset.
        bias: f64,
        /// Negative-side slope of the leaky nonlinearity.
        leak: f64,
        /// One weight per input for the gate path.
        gate_weights: Vec<f64>,
        /// Gate offset.
        gate_bias: f64,
        /// Gate steepness.
        gate_sharpness: f64,
        /// Additive noise standard deviation.
        noise_sigma: f64,
    },
}

fn leaky(t: f64, leak: f64) -> f64 {
    if t >= 0.0 {
        t
    } else {
        leak * t
    }
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

impl NodeEquation {
    /// Input node ids in weight order.
    pub fn inputs(&self) -> &[String] {
        match self {
            NodeEquation::AffineLeaky { inputs, .. }
            | NodeEquation::GatedAffineLeaky { inputs, .. } => inputs,
        }
    }

    /// Noise standard deviation.
    pub fn noise_sigma(&self) -> f64 {
        match self {
            NodeEquation::AffineLeaky { noise_sigma, .. }
            | NodeEquation::GatedAffineLeaky { noise_sigma, .. } => *noise_sigma,
        }
    }

    /// Conditional mean given input values (in `inputs` order).
    pub fn mean(&self, input_values: &[f64]) -> f64 {
        match self {
            NodeEquation::AffineLeaky { weights, bias, leak, .. } => {
                let pre: f64 = weights.iter().zip(input_values).map(|(w, v)| w * v).sum();
                leaky(pre + bias, *leak)
            }
            NodeEquation::GatedAffineLeaky {
                weights,
                bias,
                leak,
                gate_weights,
                gate_bias,
                gate_sharpness,
                ..
            } => {
                let pre: f64 = weights.iter().zip(input_values).map(|(w, v)| w * v).sum();
                let gpre: f64 = gate_weights.iter().zip(input_values).map(|(w, v)| w * v).sum();
                sigmoid(gate_sharpness * (gpre + gate_bias)) * leaky(pre + bias, *leak)
            }
        }
    }
}

/// Invertible masked mixing from bottom latents and fresh noise to the
/// observation: x = leaky(W z + C eps + b). `latent_weights[j][i]` is
/// nonzero only where the graph has an edge from observation coordinate j
/// to bottom latent i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationMap {
    /// n_x rows, one per observation coordinate; n_z columns.
    pub latent_weights: Vec<Vec<f64>>,
    /// n_x rows; n_eps columns with n_z + n_eps = n_x.
    pub noise_weights: Vec<Vec<f64>>,
    /// Per-coordinate offset.
    pub bias: Vec<f64>,
    /// Negative-side slope.
    pub leak: f64,
    /// Noise standard deviation for the eps coordinates.
    pub noise_sigma: f64,
}

impl ObservationMap {
    /// Observation dimension.
    pub fn n_obs(&self) -> usize {
        self.latent_weights.len()
    }

    /// Bottom-latent dimension.
    pub fn n_latent(&self) -> usize {
        self.latent_weights.first().map_or(0, Vec::len)
    }

    /// Exogenous coordinate count.
    pub fn n_noise(&self) -> usize {
        self.noise_weights.first().map_or(0, Vec::len)
    }

    /// Apply the map.
    pub fn apply(&self, z: &[f64], eps: &[f64]) -> Vec<f64> {
        (0..self.n_obs())
            .map(|j| {
                let mut pre = self.bias[j];
                for (w, v) in self.latent_weights[j].iter().zip(z) {
                    pre += w * v;
                }
                for (w, v) in self.noise_weights[j].iter().zip(eps) {
                    pre += w * v;
                }
                leaky(pre, self.leak)
            })
            .collect()
    }

    /// The square mixing matrix [W | C].
    pub fn mixing_matrix(&self) -> DMatrix<f64> {
        let n = self.n_obs();
        DMatrix::from_fn(n, self.n_latent() + self.n_noise(), |j, k| {
            if k < self.n_latent() {
                self.latent_weights[j][k]
            } else {
                self.noise_weights[j][k - self.n_latent()]
            }
        })
    }
}

/// One generated sample with every intermediate quantity retained, so
/// counterfactual regeneration (same noise, edited concepts) is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousSample {
    /// Latent values per level, coarsest first, nodes in level order.
    pub levels: Vec<Vec<f64>>,
    /// Noise draws per level (empty for level 0, which is pure noise).
    pub noises: Vec<Vec<f64>>,
    /// Observation vector.
    pub obs: Vec<f64>,
    /// Exogenous observation noise.
    pub obs_noise: Vec<f64>,
}

/// A fully specified continuous selection model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSelectionModel {
    /// Levels 0..=L are latent; the final level holds observation coords.
    pub graph: SelectionGraph,
    /// Equation per latent node below the top level.
    pub equations: BTreeMap<String, NodeEquation>,
    /// Standard deviation of each top-level (level 0) node.
    pub top_sigma: BTreeMap<String, f64>,
    /// The observation map; its sparsity mask mirrors the bottom edges.
    pub observation: ObservationMap,
}

impl ContinuousSelectionModel {
    /// Number of latent levels (excludes the observation level).
    pub fn latent_levels(&self) -> usize {
        self.graph.level_count() - 1
    }

    /// Node ids of one latent level, in canonical order.
    pub fn level_ids(&self, level: usize) -> Vec<String> {
        self.graph
            .level_nodes(level)
            .iter()
            .map(|&n| self.graph.id(n).to_string())
            .collect()
    }

    /// Structural validation: leveled graph, equations matching adjacency,
    /// observation mask matching bottom edges, square mixing.
    pub fn validate(&self) -> Result<()> {
        let report = self.graph.validate();
        if !report.is_valid() {
            return Err(Error::InvalidModel(format!(
                "graph violations: {:?}",
                report.issues
            )));
        }
        let levels = self.graph.level_count();
        if levels < 2 {
            return Err(Error::InvalidModel(
                "continuous model needs at least one latent level and the observation level".into(),
            ));
        }
        for &n in self.graph.level_nodes(0) {
            let id = self.graph.id(n);
            if !self.top_sigma.contains_key(id) {
                return Err(Error::InvalidModel(format!("missing top sigma for {id}")));
            }
        }
        for level in 1..levels - 1 {
            for &n in self.graph.level_nodes(level) {
                let id = self.graph.id(n);
                let eq = self
                    .equations
                    .get(id)
                    .ok_or_else(|| Error::InvalidModel(format!("missing equation for {id}")))?;
                let mut expected: Vec<String> = self
                    .graph
                    .children(n)
                    .iter()
                    .map(|&c| self.graph.id(c).to_string())
                    .collect();
                expected.sort();
                let mut got: Vec<String> = eq.inputs().to_vec();
                got.sort();
                if expected != got {
                    return Err(Error::InvalidModel(format!(
                        "equation inputs for {id} are {got:?}, adjacency says {expected:?}"
                    )));
                }
            }
        }
        let obs_level = levels - 1;
        let n_x = self.graph.level_nodes(obs_level).len();
        let n_z = self.graph.level_nodes(obs_level - 1).len();
        if self.observation.n_obs() != n_x || self.observation.n_latent() != n_z {
            return Err(Error::ShapeMismatch(format!(
                "observation map is {}x{}, graph has {n_x} coords over {n_z} bottom latents",
                self.observation.n_obs(),
                self.observation.n_latent()
            )));
        }
        if self.observation.n_latent() + self.observation.n_noise() != self.observation.n_obs() {
            return Err(Error::InvalidModel(
                "observation mixing must be square: n_latent + n_noise = n_obs".into(),
            ));
        }
        // Mask must match bottom-level edges exactly.
        let bottom_ids = self.level_ids(obs_level - 1);
        for (j, &xn) in self.graph.level_nodes(obs_level).iter().enumerate() {
            let mut adj: Vec<usize> = self
                .graph
                .children(xn)
                .iter()
                .map(|&c| {
                    let cid = self.graph.id(c);
                    bottom_ids.iter().position(|b| b == cid).expect("bottom latent")
                })
                .collect();
            adj.sort_unstable();
            let nz: Vec<usize> = (0..n_z)
                .filter(|&i| self.observation.latent_weights[j][i] != 0.0)
                .collect();
            if adj != nz {
                return Err(Error::InvalidModel(format!(
                    "observation row {j} support {nz:?} does not match graph edges {adj:?}"
                )));
            }
        }
        Ok(())
    }

    /// Smallest singular value of the observation Jacobian at a point
    /// (pre-activation signs evaluated at the sample).
    pub fn observation_jacobian_min_sv(&self, sample: &ContinuousSample) -> f64 {
        let m = self.observation.mixing_matrix();
        let bottom = &sample.levels[self.latent_levels() - 1];
        let n = self.observation.n_obs();
        let mut scaled = m;
        for j in 0..n {
            let mut pre = self.observation.bias[j];
            for (w, v) in self.observation.latent_weights[j].iter().zip(bottom) {
                pre += w * v;
            }
            for (w, v) in self.observation.noise_weights[j].iter().zip(&sample.obs_noise) {
                pre += w * v;
            }
            let slope = if pre >= 0.0 { 1.0 } else { self.observation.leak };
            for k in 0..scaled.ncols() {
                scaled[(j, k)] *= slope;
            }
        }
        crate::numerics::smallest_singular_value(&scaled)
    }

    /// Check Jacobian nonsingularity on sampled points.
    pub fn check_observation_jacobian(&self, samples: &[ContinuousSample], tol: f64) -> Result<()> {
        for (i, s) in samples.iter().enumerate() {
            let sv = self.observation_jacobian_min_sv(s);
            if sv <= tol {
                return Err(Error::InvalidModel(format!(
                    "observation Jacobian near-singular at sample {i}: sigma_min {sv} <= {tol}"
                )));
            }
        }
        Ok(())
    }

    /// Draw one sample, retaining all noise.
    pub fn sample_one<R: rand::Rng>(&self, rng: &mut R) -> ContinuousSample {
        let latent_levels = self.latent_levels();
        let mut levels: Vec<Vec<f64>> = Vec::with_capacity(latent_levels);
        let mut noises: Vec<Vec<f64>> = Vec::with_capacity(latent_levels);
        // Top level: pure noise.
        let top: Vec<f64> = self
            .level_ids(0)
            .iter()
            .map(|id| self.top_sigma[id] * rng::normal(rng))
            .collect();
        noises.push(Vec::new());
        levels.push(top);
        for level in 1..latent_levels {
            let coarse_ids = self.level_ids(level - 1);
            let coarse = levels[level - 1].clone();
            let mut values = Vec::new();
            let mut level_noise = Vec::new();
            for id in self.level_ids(level) {
                let eq = &self.equations[&id];
                let inputs: Vec<f64> = eq
                    .inputs()
                    .iter()
                    .map(|cid| {
                        let ix = coarse_ids.iter().position(|c| c == cid).expect("input above");
                        coarse[ix]
                    })
                    .collect();
                let e = rng::normal(rng);
                level_noise.push(e);
                values.push(eq.mean(&inputs) + eq.noise_sigma() * e);
            }
            levels.push(values);
            noises.push(level_noise);
        }
        let obs_noise: Vec<f64> = (0..self.observation.n_noise())
            .map(|_| self.observation.noise_sigma * rng::normal(rng))
            .collect();
        let obs = self.observation.apply(&levels[latent_levels - 1], &obs_noise);
        ContinuousSample { levels, noises, obs, obs_noise }
    }

    /// Replace the values of one latent level and regenerate everything
    /// finer with the stored noise: an exact counterfactual.
    pub fn regenerate_from(
        &self,
        base: &ContinuousSample,
        level: usize,
        values: Vec<f64>,
    ) -> ContinuousSample {
        let latent_levels = self.latent_levels();
        let mut out = base.clone();
        out.levels[level] = values;
        for l in level + 1..latent_levels {
            let coarse_ids = self.level_ids(l - 1);
            let coarse = out.levels[l - 1].clone();
            let ids = self.level_ids(l);
            for (j, id) in ids.iter().enumerate() {
                let eq = &self.equations[id];
                let inputs: Vec<f64> = eq
                    .inputs()
                    .iter()
                    .map(|cid| {
                        let ix = coarse_ids.iter().position(|c| c == cid).expect("input above");
                        coarse[ix]
                    })
                    .collect();
                out.levels[l][j] = eq.mean(&inputs) + eq.noise_sigma() * base.noises[l][j];
            }
        }
        out.obs = self.observation.apply(&out.levels[latent_levels - 1], &out.obs_noise);
        out
    }

    /// Draw full samples (deterministic per seed).
    pub fn sample_full(&self, n: usize, seed: u64) -> Vec<ContinuousSample> {
        let mut rng = rng::stream(seed, "continuous-sample");
        (0..n).map(|_| self.sample_one(&mut rng)).collect()
    }

    /// Ancestral sampling into a dataset with columns for every latent
    /// level followed by the observation coordinates.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        self.validate()?;
        let samples = self.sample_full(n, seed);
        let mut labels = Vec::new();
        let mut levels = Vec::new();
        for l in 0..self.graph.level_count() {
            for id in self.level_ids(l) {
                labels.push(id);
                levels.push(l as u32);
            }
        }
        let rows = samples
            .iter()
            .map(|s| {
                let mut row: Vec<f64> = Vec::with_capacity(labels.len());
                for lv in &s.levels {
                    row.extend_from_slice(lv);
                }
                row.extend_from_slice(&s.obs);
                row
            })
            .collect();
        Dataset::new(labels, levels, rows, Some(seed))
    }

    /// Serialize to the canonical JSON document.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct File<'a> {
            schema_version: u32,
            model: &'a ContinuousSelectionModel,
        }
        Ok(serde_json::to_string_pretty(&File { schema_version: crate::SCHEMA_VERSION, model: self })? + "\n")
    }

    /// Parse the canonical JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct File {
            schema_version: u32,
            model: ContinuousSelectionModel,
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NodeKind;

    fn tiny_model() -> ContinuousSelectionModel {
        let graph = SelectionGraph::new(
            vec![
                vec![("t".to_string(), NodeKind::Continuous)],
                vec![
                    ("z1".to_string(), NodeKind::Continuous),
                    ("z2".to_string(), NodeKind::Continuous),
                ],
                vec![
                    ("x1".to_string(), NodeKind::Continuous),
                    ("x2".to_string(), NodeKind::Continuous),
                    ("x3".to_string(), NodeKind::Continuous),
                ],
            ],
            &[
                ("z1".into(), "t".into()),
                ("z2".into(), "t".into()),
                ("x1".into(), "z1".into()),
                ("x2".into(), "z1".into()),
                ("x2".into(), "z2".into()),
                ("x3".into(), "z2".into()),
            ],
        )
        .unwrap();
        let mut equations = BTreeMap::new();
        equations.insert(
            "z1".to_string(),
            NodeEquation::AffineLeaky {
                inputs: vec!["t".into()],
                weights: vec![1.3],
                bias: 0.2,
                leak: 0.2,
                noise_sigma: 0.5,
            },
        );
        equations.insert(
            "z2".to_string(),
            NodeEquation::AffineLeaky {
                inputs: vec!["t".into()],
                weights: vec![-0.7],
                bias: -0.1,
                leak: 0.2,
                noise_sigma: 0.5,
            },
        );
        let observation = ObservationMap {
            latent_weights: vec![vec![1.0, 0.0], vec![0.8, -0.6], vec![0.0, 1.1]],
            noise_weights: vec![vec![0.4], vec![0.0], vec![0.3]],
            bias: vec![0.0, 0.1, -0.2],
            leak: 0.3,
            noise_sigma: 0.1,
        };
        let mut top_sigma = BTreeMap::new();
        top_sigma.insert("t".to_string(), 1.0);
        ContinuousSelectionModel { graph, equations, top_sigma, observation }
    }

    #[test]
    fn validates_and_samples_deterministically() {
        let m = tiny_model();
        m.validate().unwrap();
        let d1 = m.sample(50, 3).unwrap();
        let d2 = m.sample(50, 3).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(d1.n_cols(), 6);
        assert_eq!(d1.levels, vec![0, 1, 1, 2, 2, 2]);
    }

    #[test]
    fn mask_mismatch_is_rejected() {
        let mut m = tiny_model();
        m.observation.latent_weights[0][1] = 0.5; // x1 has no edge to z2
        let err = m.validate().unwrap_err();
        assert!(err.to_string().contains("does not match graph edges"), "{err}");
    }

    #[test]
    fn jacobian_check_passes_for_generic_mixing() {
        let m = tiny_model();
        let samples = m.sample_full(20, 5);
        m.check_observation_jacobian(&samples, 1e-6).unwrap();
    }

    #[test]
    fn regeneration_replays_noise_exactly() {
        let m = tiny_model();
        let s = m.sample_full(1, 11).into_iter().next().unwrap();
        let same = m.regenerate_from(&s, 0, s.levels[0].clone());
        assert_eq!(same, s);
        // Editing the top level moves everything downstream.
        let edited = m.regenerate_from(&s, 0, vec![s.levels[0][0] + 1.0]);
        assert_ne!(edited.levels[1], s.levels[1]);
        assert_ne!(edited.obs, s.obs);
    }

    #[test]
    fn gated_equation_is_sparse_when_gate_closed() {
        let eq = NodeEquation::GatedAffineLeaky {
            inputs: vec!["t".into()],
            weights: vec![1.0],
            bias: 1.0,
            leak: 0.2,
            gate_weights: vec![1.0],
            gate_bias: 0.0,
            gate_sharpness: 50.0,
            noise_sigma: 0.0,
        };
        assert!(eq.mean(&[-2.0]).abs() < 1e-12); // gate shut
        assert!((eq.mean(&[2.0]) - 3.0).abs() < 1e-6); // gate open
    }
}
