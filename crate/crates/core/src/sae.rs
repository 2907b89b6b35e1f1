//! K-sparse autoencoders: hard top-K codes trained by stochastic
//! first-order updates with per-parameter adaptive scaling, plus the
//! steering, deactivation, and attribution primitives built on the
//! decoder dictionary.
//!
//! The update rule is the standard moment-scaled one: for each parameter
//! group, m <- b1 m + (1-b1) g, v <- b2 v + (1-b2) g^2, with bias
//! correction and step -lr * m_hat / (sqrt(v_hat) + eps). Decoder columns
//! are renormalized to unit norm after every step (the usual guard against
//! scale degeneracy between encoder and decoder). Training is
//! deterministic given the config seed; batches are drawn from a dedicated
//! stream and gradients are accumulated in fixed sample order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::rng;
use rand::Rng;

/// Training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaeConfig {
    /// Feature dimension.
    pub input_dim: usize,
    /// Code dimension (overcomplete allowed).
    pub latent_dim: usize,
    /// Active units per sample.
    pub k: usize,
    /// Learning rate.
    pub step_size: f64,
    /// Samples per update.
    pub batch_size: usize,
    /// Number of updates.
    pub training_steps: usize,
    /// Seed for initialization and batch order.
    pub seed: u64,
}

impl SaeConfig {
    fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.latent_dim {
            return Err(Error::Config(format!(
                "k = {} outside 1..={}",
                self.k, self.latent_dim
            )));
        }
        if self.input_dim == 0 || self.batch_size == 0 || self.training_steps == 0 {
            return Err(Error::Config("zero-sized training configuration".into()));
        }
        Ok(())
    }
}

/// A trained model: encoder/decoder weights, the config that produced it,
/// and the loss trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaeModel {
    /// Encoder weights, latent x input, row-major.
    pub enc_w: Vec<Vec<f64>>,
    /// Encoder bias.
    pub enc_b: Vec<f64>,
    /// Decoder weights, input x latent, row-major (columns are features).
    pub dec_w: Vec<Vec<f64>>,
    /// Decoder bias.
    pub dec_b: Vec<f64>,
    /// Training configuration.
    pub config: SaeConfig,
    /// Per-step batch loss.
    pub loss_trace: Vec<f64>,
}

/// One steering instruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteerSpec {
    /// Code unit to act on.
    pub feature_index: usize,
    /// Signed strength (additive mode).
    pub strength: f64,
    /// What to do.
    pub mode: SteerMode,
}

/// Steering modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteerMode {
    /// x' = x + strength * (decoder column of the feature).
    Additive,
    /// x' = x - code[feature] * (decoder column): remove the feature's
    /// contribution entirely.
    Deactivate,
}

/// Attribution output: per-coordinate magnitudes (max-normalized) and the
/// thresholded mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    /// Max-normalized per-coordinate magnitude of the feature's decoder
    /// contribution.
    pub map: Vec<f64>,
    /// map > threshold (strict).
    pub mask: Vec<bool>,
    /// Set when the feature contributed nothing at this input.
    pub all_zero: bool,
}

impl SaeModel {
    /// Hard top-K encoding: affine map, rectification, keep the K largest
    /// magnitudes (ties to the lowest index), zero the rest. Units whose
    /// rectified pre-activation is zero are never kept, so a code has
    /// exactly min(K, nonzero) active units.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.config.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "input has {} dims, model expects {}",
                x.len(),
                self.config.input_dim
            )));
        }
        let mut pre: Vec<f64> = self
            .enc_w
            .iter()
            .zip(&self.enc_b)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect();
        for p in &mut pre {
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let mut order: Vec<usize> = (0..pre.len()).collect();
        order.sort_by(|&a, &b| pre[b].partial_cmp(&pre[a]).unwrap().then(a.cmp(&b)));
        let mut code = vec![0.0; pre.len()];
        for &u in order.iter().take(self.config.k) {
            if pre[u] > 0.0 {
                code[u] = pre[u];
            }
        }
        Ok(code)
    }

    /// Linear decode of a code.
    pub fn decode(&self, code: &[f64]) -> Vec<f64> {
        self.dec_w
            .iter()
            .zip(&self.dec_b)
            .map(|(row, b)| row.iter().zip(code).map(|(w, c)| w * c).sum::<f64>() + b)
            .collect()
    }

    /// The decoder column (dictionary atom) of one feature.
    pub fn decoder_column(&self, feature: usize) -> Result<Vec<f64>> {
        if feature >= self.config.latent_dim {
            return Err(Error::ShapeMismatch(format!(
                "feature {feature} out of range {}",
                self.config.latent_dim
            )));
        }
        Ok(self.dec_w.iter().map(|row| row[feature]).collect())
    }

    /// Apply a steering spec. Additive mode adds strength times the
    /// feature's dictionary atom; deactivation subtracts the feature's
    /// current contribution (an input where the feature is silent comes
    /// back unchanged).
    pub fn steer(&self, x: &[f64], spec: &SteerSpec) -> Result<Vec<f64>> {
        let col = self.decoder_column(spec.feature_index)?;
        match spec.mode {
            SteerMode::Additive => {
                Ok(x.iter().zip(&col).map(|(v, c)| v + spec.strength * c).collect())
            }
            SteerMode::Deactivate => {
                let code = self.encode(x)?;
                let activation = code[spec.feature_index];
                Ok(x.iter().zip(&col).map(|(v, c)| v - activation * c).collect())
            }
        }
    }

    /// Per-coordinate attribution of one feature at an input: magnitude of
    /// the feature's decoder contribution, max-normalized, thresholded
    /// strictly.
    pub fn attribution_map(&self, feature: usize, x: &[f64], threshold: f64) -> Result<Attribution> {
        let col = self.decoder_column(feature)?;
        let code = self.encode(x)?;
        let contrib: Vec<f64> = col.iter().map(|c| (c * code[feature]).abs()).collect();
        let max = contrib.iter().fold(0.0f64, |a, &b| a.max(b));
        if max <= 0.0 {
            return Ok(Attribution {
                map: vec![0.0; contrib.len()],
                mask: vec![false; contrib.len()],
                all_zero: true,
            });
        }
        let map: Vec<f64> = contrib.iter().map(|c| c / max).collect();
        let mask: Vec<bool> = map.iter().map(|&m| m > threshold).collect();
        Ok(Attribution { map, mask, all_zero: false })
    }

    /// Mean reconstruction loss (squared error summed over coordinates,
    /// averaged over rows).
    pub fn reconstruction_loss(&self, rows: &[Vec<f64>]) -> Result<f64> {
        let mut total = 0.0;
        for x in rows {
            let xhat = self.decode(&self.encode(x)?);
            total += x.iter().zip(&xhat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        Ok(total / rows.len().max(1) as f64)
    }

    /// Write the checkpoint: a JSON header followed by little-endian f32
    /// weights (encoder weights, encoder bias, decoder weights, decoder
    /// bias, loss trace).
    pub fn write_checkpoint(&self, path: &std::path::Path) -> Result<()> {
        #[derive(Serialize)]
        struct Header<'a> {
            schema_version: u32,
            config: &'a SaeConfig,
            trace_len: usize,
        }
        let header = serde_json::to_vec(&Header {
            schema_version: crate::SCHEMA_VERSION,
            config: &self.config,
            trace_len: self.loss_trace.len(),
        })?;
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"SAEC");
        bytes.extend_from_slice(&(header.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&header);
        {
            let mut push = |vals: &[f64]| {
                for &v in vals {
                    bytes.extend_from_slice(&(v as f32).to_le_bytes());
                }
            };
            for row in &self.enc_w {
                push(row);
            }
            push(&self.enc_b);
            for row in &self.dec_w {
                push(row);
            }
            push(&self.dec_b);
            push(&self.loss_trace);
        }
        std::fs::write(path, bytes)?;
        Ok(())
    }

    /// Read a checkpoint written by [`write_checkpoint`].
    pub fn read_checkpoint(path: &std::path::Path) -> Result<SaeModel> {
        #[derive(Deserialize)]
        struct Header {
            schema_version: u32,
            config: SaeConfig,
            trace_len: usize,
        }
        let bytes = std::fs::read(path)?;
        if bytes.len() < 8 || &bytes[..4] != b"SAEC" {
            return Err(Error::InvalidModel("not a checkpoint file".into()));
        }
        let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        if bytes.len() < 8 + hlen {
            return Err(Error::InvalidModel("truncated checkpoint header".into()));
        }
        let header: Header = serde_json::from_slice(&bytes[8..8 + hlen])?;
        if header.schema_version != crate::SCHEMA_VERSION {
            return Err(Error::InvalidModel(format!(
                "checkpoint schema {} unsupported",
                header.schema_version
            )));
        }
        let cfg = header.config;
        let mut off = 8 + hlen;
        let mut take = |n: usize| -> Result<Vec<f64>> {
            let need = n * 4;
            if bytes.len() < off + need {
                return Err(Error::InvalidModel("truncated checkpoint".into()));
            }
            let out = bytes[off..off + need]
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
                .collect();
            off += need;
            Ok(out)
        };
        let mut enc_w = Vec::with_capacity(cfg.latent_dim);
        for _ in 0..cfg.latent_dim {
            enc_w.push(take(cfg.input_dim)?);
        }
        let enc_b = take(cfg.latent_dim)?;
        let mut dec_w = Vec::with_capacity(cfg.input_dim);
        for _ in 0..cfg.input_dim {
            dec_w.push(take(cfg.latent_dim)?);
        }
        let dec_b = take(cfg.input_dim)?;
        let loss_trace = take(header.trace_len)?;
        Ok(SaeModel { enc_w, enc_b, dec_w, dec_b, config: cfg, loss_trace })
    }
}

/// Divergence rule: smoothed (100-step window) loss must not rise for this
/// many consecutive windows.
const DIVERGENCE_WINDOWS: usize = 5;
const WINDOW: usize = 100;

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t as i32);
        let c2 = 1.0 - B2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grads[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grads[i] * grads[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + EPS);
        }
    }
}

/// Train a K-sparse autoencoder on the dataset rows.
pub fn train_sae(features: &Dataset, cfg: &SaeConfig) -> Result<SaeModel> {
    cfg.validate()?;
    if features.n_cols() != cfg.input_dim {
        return Err(Error::ShapeMismatch(format!(
            "dataset has {} columns, config says {}",
            features.n_cols(),
            cfg.input_dim
        )));
    }
    if features.n_rows() < cfg.batch_size {
        return Err(Error::Config(format!(
            "need at least batch_size = {} rows, got {}",
            cfg.batch_size,
            features.n_rows()
        )));
    }
    let (n_in, n_lat) = (cfg.input_dim, cfg.latent_dim);
    let mut init_rng = rng::stream(cfg.seed, "sae-init");
    // Decoder columns start as random unit atoms, encoder as the decoder
    // transpose, biases at zero.
    let mut dec_w = vec![vec![0.0f64; n_lat]; n_in];
    for j in 0..n_lat {
        let mut col: Vec<f64> = (0..n_in).map(|_| rng::normal(&mut init_rng)).collect();
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        for v in &mut col {
            *v /= norm;
        }
        for (i, v) in col.iter().enumerate() {
            dec_w[i][j] = *v;
        }
    }
    let mut enc_w: Vec<Vec<f64>> =
        (0..n_lat).map(|j| (0..n_in).map(|i| dec_w[i][j]).collect()).collect();
    let mut enc_b = vec![0.0f64; n_lat];
    let mut dec_b = vec![0.0f64; n_in];

    let mut adam_ew = Adam::new(n_lat * n_in);
    let mut adam_eb = Adam::new(n_lat);
    let mut adam_dw = Adam::new(n_in * n_lat);
    let mut adam_db = Adam::new(n_in);

    let mut batch_rng = rng::stream(cfg.seed, "sae-batches");
    let mut trace = Vec::with_capacity(cfg.training_steps);
    let mut window_means: Vec<f64> = Vec::new();
    let mut rising = 0usize;

    let mut g_ew = vec![0.0f64; n_lat * n_in];
    let mut g_eb = vec![0.0f64; n_lat];
    let mut g_dw = vec![0.0f64; n_in * n_lat];
    let mut g_db = vec![0.0f64; n_in];

    for step in 0..cfg.training_steps {
        g_ew.iter_mut().for_each(|g| *g = 0.0);
        g_eb.iter_mut().for_each(|g| *g = 0.0);
        g_dw.iter_mut().for_each(|g| *g = 0.0);
        g_db.iter_mut().for_each(|g| *g = 0.0);
        let mut batch_loss = 0.0;
        for _ in 0..cfg.batch_size {
            let row = &features.rows[batch_rng.gen_range(0..features.n_rows())];
            // Forward.
            let mut pre = vec![0.0f64; n_lat];
            for (j, p) in pre.iter_mut().enumerate() {
                let mut acc = enc_b[j];
                for (i, &x) in row.iter().enumerate() {
                    acc += enc_w[j][i] * x;
                }
                *p = acc.max(0.0);
            }
            let mut order: Vec<usize> = (0..n_lat).collect();
            order.sort_by(|&a, &b| pre[b].partial_cmp(&pre[a]).unwrap().then(a.cmp(&b)));
            let active: Vec<usize> =
                order.iter().copied().take(cfg.k).filter(|&u| pre[u] > 0.0).collect();
            let mut xhat = dec_b.clone();
            for &u in &active {
                for i in 0..n_in {
                    xhat[i] += dec_w[i][u] * pre[u];
                }
            }
            let err: Vec<f64> = xhat.iter().zip(row).map(|(a, b)| a - b).collect();
            batch_loss += err.iter().map(|e| e * e).sum::<f64>();
            // Backward; the top-K support is treated as fixed.
            for i in 0..n_in {
                g_db[i] += 2.0 * err[i];
            }
            for &u in &active {
                let mut gc = 0.0;
                for i in 0..n_in {
                    g_dw[i * n_lat + u] += 2.0 * err[i] * pre[u];
                    gc += 2.0 * err[i] * dec_w[i][u];
                }
                g_eb[u] += gc;
                for (i, &x) in row.iter().enumerate() {
                    g_ew[u * n_in + i] += gc * x;
                }
            }
        }
        let scale = 1.0 / cfg.batch_size as f64;
        for g in g_ew.iter_mut().chain(&mut g_eb).chain(&mut g_dw).chain(&mut g_db) {
            *g *= scale;
        }
        let mut flat_ew: Vec<f64> = enc_w.iter().flatten().copied().collect();
        adam_ew.step(&mut flat_ew, &g_ew, cfg.step_size);
        for (j, row) in enc_w.iter_mut().enumerate() {
            row.copy_from_slice(&flat_ew[j * n_in..(j + 1) * n_in]);
        }
        adam_eb.step(&mut enc_b, &g_eb, cfg.step_size);
        let mut flat_dw: Vec<f64> = dec_w.iter().flatten().copied().collect();
        adam_dw.step(&mut flat_dw, &g_dw, cfg.step_size);
        for (i, row) in dec_w.iter_mut().enumerate() {
            row.copy_from_slice(&flat_dw[i * n_lat..(i + 1) * n_lat]);
        }
        adam_db.step(&mut dec_b, &g_db, cfg.step_size);
        // Unit-norm decoder columns.
        for j in 0..n_lat {
            let norm = (0..n_in).map(|i| dec_w[i][j] * dec_w[i][j]).sum::<f64>().sqrt();
            if norm > 1e-12 {
                for i in 0..n_in {
                    dec_w[i][j] /= norm;
                }
            }
        }
        trace.push(batch_loss * scale);
        // Divergence detection on smoothed windows. A relative margin keeps
        // batch noise at a converged plateau from counting as a rise.
        if (step + 1) % WINDOW == 0 {
            let mean = trace[step + 1 - WINDOW..=step].iter().sum::<f64>() / WINDOW as f64;
            if let Some(&prev) = window_means.last() {
                if mean > prev * 1.02 {
                    rising += 1;
                    if rising >= DIVERGENCE_WINDOWS {
                        return Err(Error::Diverged { steps: step + 1, windows: rising });
                    }
                } else {
                    rising = 0;
                }
            }
            window_means.push(mean);
        }
    }
    Ok(SaeModel { enc_w, enc_b, dec_w, dec_b, config: cfg.clone(), loss_trace: trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_model(k: usize) -> SaeModel {
        SaeModel {
            enc_w: vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
            enc_b: vec![0.0, 0.0, 0.0],
            dec_w: vec![vec![1.0, 0.0, 0.5], vec![0.0, 1.0, 0.5]],
            dec_b: vec![0.0, 0.0],
            config: SaeConfig {
                input_dim: 2,
                latent_dim: 3,
                k,
                step_size: 1e-3,
                batch_size: 1,
                training_steps: 1,
                seed: 0,
            },
            loss_trace: vec![],
        }
    }

    #[test]
    fn zero_input_zero_bias_gives_zero_code() {
        let m = toy_model(2);
        assert_eq!(m.encode(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn tie_break_keeps_lowest_index() {
        let m = SaeModel {
            enc_w: vec![vec![1.0], vec![1.0]],
            enc_b: vec![0.0, 0.0],
            dec_w: vec![vec![1.0, 1.0]],
            dec_b: vec![0.0],
            config: SaeConfig {
                input_dim: 1,
                latent_dim: 2,
                k: 1,
                step_size: 1e-3,
                batch_size: 1,
                training_steps: 1,
                seed: 0,
            },
            loss_trace: vec![],
        };
        let code = m.encode(&[3.0]).unwrap();
        assert_eq!(code, vec![3.0, 0.0]);
    }

    #[test]
    fn active_set_matches_sort_oracle() {
        let mut rg = crate::rng::stream(5, "sae-test");
        for _ in 0..50 {
            let m = toy_model(2);
            let x: Vec<f64> = (0..2).map(|_| crate::rng::normal(&mut rg)).collect();
            let code = m.encode(&x).unwrap();
            // Oracle: full sort of rectified pre-activations.
            let pre: Vec<f64> = m
                .enc_w
                .iter()
                .map(|row| row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>().max(0.0))
                .collect();
            let mut order: Vec<usize> = (0..3).collect();
            order.sort_by(|&a, &b| pre[b].partial_cmp(&pre[a]).unwrap().then(a.cmp(&b)));
            let expect: std::collections::BTreeSet<usize> =
                order.iter().take(2).copied().filter(|&u| pre[u] > 0.0).collect();
            let got: std::collections::BTreeSet<usize> =
                (0..3).filter(|&u| code[u] != 0.0).collect();
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn steering_contracts() {
        let m = toy_model(2);
        let x = [0.7, -0.3];
        // Zero strength is exact identity.
        let spec = SteerSpec { feature_index: 0, strength: 0.0, mode: SteerMode::Additive };
        assert_eq!(m.steer(&x, &spec).unwrap(), x.to_vec());
        // Additivity: lambda1 then lambda2 equals lambda1 + lambda2.
        let s1 = SteerSpec { feature_index: 2, strength: 0.4, mode: SteerMode::Additive };
        let s2 = SteerSpec { feature_index: 2, strength: -1.1, mode: SteerMode::Additive };
        let s12 = SteerSpec { feature_index: 2, strength: -0.7, mode: SteerMode::Additive };
        let via_two = m.steer(&m.steer(&x, &s1).unwrap(), &s2).unwrap();
        let direct = m.steer(&x, &s12).unwrap();
        for (a, b) in via_two.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-15);
        }
        // Deactivating a silent feature is the identity.
        let x_neg = [-1.0, -1.0]; // all pre-activations rectify to zero
        let spec = SteerSpec { feature_index: 1, strength: 0.0, mode: SteerMode::Deactivate };
        assert_eq!(m.steer(&x_neg, &spec).unwrap(), x_neg.to_vec());
    }

    #[test]
    fn attribution_mask_reads_decoder_support() {
        // Feature 2's column is supported on both coordinates equally.
        let m = toy_model(2);
        let x = [1.0, 1.0];
        let att = m.attribution_map(2, &x, 0.1).unwrap();
        assert!(!att.all_zero);
        assert_eq!(att.mask, vec![true, true]);
        // Threshold 1.0 empties the mask (strict inequality).
        let att = m.attribution_map(2, &x, 1.0).unwrap();
        assert_eq!(att.mask, vec![false, false]);
        // A silent feature yields the all-zero warning.
        let att = m.attribution_map(0, &[-1.0, -1.0], 0.1).unwrap();
        assert!(att.all_zero);
        assert!(att.mask.iter().all(|&b| !b));
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        // 2-ish-sparse data over three atoms in a 4-dim space.
        let mut rg = crate::rng::stream(11, "sae-data");
        let atoms = [[1.0, 0.0, 0.0, 0.5], [0.0, 1.0, 0.5, 0.0], [0.0, 0.0, 1.0, 1.0]];
        let rows: Vec<Vec<f64>> = (0..600)
            .map(|_| {
                let mut x = vec![0.0; 4];
                for atom in &atoms {
                    if rg.gen_bool(0.5) {
                        let scale = rg.gen_range(0.5..1.5);
                        for i in 0..4 {
                            x[i] += scale * atom[i];
                        }
                    }
                }
                x
            })
            .collect();
        let data = Dataset::new(
            (0..4).map(|i| format!("f{i}")).collect(),
            vec![0; 4],
            rows,
            Some(11),
        )
        .unwrap();
        let cfg = SaeConfig {
            input_dim: 4,
            latent_dim: 6,
            k: 2,
            step_size: 3e-3,
            batch_size: 64,
            training_steps: 400,
            seed: 3,
        };
        let m1 = train_sae(&data, &cfg).unwrap();
        let m2 = train_sae(&data, &cfg).unwrap();
        assert_eq!(m1, m2);
        let head: f64 = m1.loss_trace[..50].iter().sum::<f64>() / 50.0;
        let tail: f64 = m1.loss_trace[m1.loss_trace.len() - 50..].iter().sum::<f64>() / 50.0;
        assert!(tail < 0.5 * head, "loss did not fall: {head} -> {tail}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = toy_model(2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.sae");
        m.write_checkpoint(&path).unwrap();
        let back = SaeModel::read_checkpoint(&path).unwrap();
        assert_eq!(back.config, m.config);
        // f32 storage: compare at f32 precision.
        for (a, b) in m.enc_w.iter().flatten().zip(back.enc_w.iter().flatten()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
