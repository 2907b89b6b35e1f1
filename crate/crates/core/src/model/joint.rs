//! Exact joint probability tables over finitely supported variables.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{MASS_TOL, NORM_TOL};
use crate::error::{Error, Result};

/// A dense exact joint distribution. Variables are indexed; each carries a
/// label and an ordered value alphabet. Probabilities are stored in
/// mixed-radix order with the first variable most significant.
///
/// Positions (indices into an alphabet) and values (alphabet entries) are
/// distinct notions throughout: configurations are passed as positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTable {
    labels: Vec<String>,
    supports: Vec<Vec<u32>>,
    probs: Vec<f64>,
}

impl JointTable {
    /// Construct and validate: entries nonnegative, total within 1e-12 of 1.
    pub fn new(labels: Vec<String>, supports: Vec<Vec<u32>>, probs: Vec<f64>) -> Result<Self> {
        if labels.len() != supports.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels vs {} supports",
                labels.len(),
                supports.len()
            )));
        }
        let states: usize = supports.iter().map(Vec::len).product();
        if probs.len() != states {
            return Err(Error::ShapeMismatch(format!(
                "{} probabilities for {states} joint states",
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|&&p| !(p >= 0.0)) {
            return Err(Error::InvalidModel(format!("negative or NaN probability {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidModel(format!(
                "joint table sums to {total}, outside 1e-12 of 1"
            )));
        }
        Ok(JointTable { labels, supports, probs })
    }

    /// Construct from unnormalized masses (e.g. counts); normalizes.
    pub fn from_masses(
        labels: Vec<String>,
        supports: Vec<Vec<u32>>,
        mut masses: Vec<f64>,
    ) -> Result<Self> {
        let total: f64 = masses.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidModel("zero total mass".into()));
        }
        for m in &mut masses {
            *m /= total;
        }
        // Renormalize once more against accumulated rounding.
        let total: f64 = masses.iter().sum();
        for m in &mut masses {
            *m /= total;
        }
        Self::new(labels, supports, masses)
    }

    /// Number of variables.
    pub fn n_vars(&self) -> usize {
        self.labels.len()
    }

    /// Variable labels.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Label of variable `v`.
    pub fn label(&self, v: usize) -> &str {
        &self.labels[v]
    }

    /// Index of the variable with the given label.
    pub fn var_by_label(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Declared alphabet (ordered values) of variable `v`.
    pub fn alphabet(&self, v: usize) -> &[u32] {
        &self.supports[v]
    }

    /// Total number of joint states.
    pub fn state_count(&self) -> usize {
        self.probs.len()
    }

    /// Raw dense probabilities in mixed-radix order.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn strides(&self) -> Vec<usize> {
        let n = self.supports.len();
        let mut strides = vec![1usize; n];
        for i in (0..n.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.supports[i + 1].len();
        }
        strides
    }

    /// Probability of a full configuration (positions).
    pub fn prob(&self, config: &[usize]) -> f64 {
        let strides = self.strides();
        let ix: usize = config.iter().zip(&strides).map(|(&c, &s)| c * s).sum();
        self.probs[ix]
    }

    /// Visit every cell with positive mass as (positions, probability).
    pub fn for_each_positive(&self, mut f: impl FnMut(&[usize], f64)) {
        let dims: Vec<usize> = self.supports.iter().map(Vec::len).collect();
        let mut config = vec![0usize; dims.len()];
        for (ix, &p) in self.probs.iter().enumerate() {
            if p > MASS_TOL {
                let mut rem = ix;
                for (d, &dim) in dims.iter().enumerate().rev() {
                    config[d] = rem % dim;
                    rem /= dim;
                }
                f(&config, p);
            }
        }
    }

    /// Marginal over `keep` (output variable order follows `keep`).
    pub fn marginal(&self, keep: &[usize]) -> JointTable {
        let out_supports: Vec<Vec<u32>> = keep.iter().map(|&v| self.supports[v].clone()).collect();
        let out_labels: Vec<String> = keep.iter().map(|&v| self.labels[v].clone()).collect();
        let out_dims: Vec<usize> = out_supports.iter().map(Vec::len).collect();
        let mut out_strides = vec![1usize; out_dims.len()];
        for i in (0..out_dims.len().saturating_sub(1)).rev() {
            out_strides[i] = out_strides[i + 1] * out_dims[i + 1];
        }
        let mut probs = vec![0.0; out_dims.iter().product::<usize>().max(1)];
        self.for_each_positive(|config, p| {
            let ix: usize = keep
                .iter()
                .zip(&out_strides)
                .map(|(&v, &s)| config[v] * s)
                .sum();
            probs[ix] += p;
        });
        JointTable { labels: out_labels, supports: out_supports, probs }
    }

    /// Positions of `v`'s alphabet with positive marginal mass.
    pub fn positive_support(&self, v: usize) -> Vec<usize> {
        let mut mass = vec![0.0f64; self.supports[v].len()];
        self.for_each_positive(|config, p| mass[config[v]] += p);
        (0..mass.len()).filter(|&i| mass[i] > MASS_TOL).collect()
    }

    /// Jointly supported position-configurations of `vars`, lexicographic.
    pub fn joint_positive_support(&self, vars: &[usize]) -> Vec<Vec<usize>> {
        let mut seen = std::collections::BTreeMap::new();
        self.for_each_positive(|config, p| {
            let key: Vec<usize> = vars.iter().map(|&v| config[v]).collect();
            *seen.entry(key).or_insert(0.0) += p;
        });
        seen.into_iter()
            .filter(|(_, p)| *p > MASS_TOL)
            .map(|(k, _)| k)
            .collect()
    }

    /// Total mass of the cells matching a partial assignment (positions).
    pub fn mass_of(&self, given: &[(usize, usize)]) -> f64 {
        let mut total = 0.0;
        self.for_each_positive(|config, p| {
            if given.iter().all(|&(v, pos)| config[v] == pos) {
                total += p;
            }
        });
        total
    }

    /// Conditional distribution of `targets` given a partial assignment,
    /// dense over the product of the targets' full alphabets (target
    /// order). `None` when the conditioning event has (numerically) zero
    /// mass.
    pub fn conditional_dist(
        &self,
        targets: &[usize],
        given: &[(usize, usize)],
    ) -> Option<Vec<f64>> {
        let dims: Vec<usize> = targets.iter().map(|&v| self.supports[v].len()).collect();
        let mut strides = vec![1usize; dims.len()];
        for i in (0..dims.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * dims[i + 1];
        }
        let mut dist = vec![0.0f64; dims.iter().product::<usize>().max(1)];
        let mut total = 0.0;
        self.for_each_positive(|config, p| {
            if given.iter().all(|&(v, pos)| config[v] == pos) {
                let ix: usize = targets
                    .iter()
                    .zip(&strides)
                    .map(|(&v, &s)| config[v] * s)
                    .sum();
                dist[ix] += p;
                total += p;
            }
        });
        if total <= MASS_TOL {
            return None;
        }
        for d in &mut dist {
            *d /= total;
        }
        Some(dist)
    }

    /// Conditional table of `row_var` against the joint of `col_vars`,
    /// given a partial assignment. Rows cover the *global* positive support
    /// of `row_var`; columns cover the col-configurations with positive
    /// mass under the conditioning. Entries are normalized to the
    /// conditional joint P(row, cols | given). Returns the matrix with its
    /// row positions and column configurations, or `None` on a zero-mass
    /// conditioning cell or when no column survives.
    #[allow(clippy::type_complexity)]
    pub fn conditional_matrix(
        &self,
        row_var: usize,
        col_vars: &[usize],
        given: &[(usize, usize)],
    ) -> Option<(DMatrix<f64>, Vec<usize>, Vec<Vec<usize>>)> {
        let rows = self.positive_support(row_var);
        let mut cells: std::collections::BTreeMap<Vec<usize>, Vec<f64>> =
            std::collections::BTreeMap::new();
        let mut total = 0.0;
        self.for_each_positive(|config, p| {
            if given.iter().all(|&(v, pos)| config[v] == pos) {
                let col: Vec<usize> = col_vars.iter().map(|&v| config[v]).collect();
                let row_pos = config[row_var];
                let entry = cells.entry(col).or_insert_with(|| vec![0.0; rows.len()]);
                if let Some(r) = rows.iter().position(|&rp| rp == row_pos) {
                    entry[r] += p;
                }
                total += p;
            }
        });
        if total <= MASS_TOL || cells.is_empty() || rows.is_empty() {
            return None;
        }
        let cols: Vec<Vec<usize>> = cells.keys().cloned().collect();
        let mut m = DMatrix::zeros(rows.len(), cols.len());
        for (j, col) in cols.iter().enumerate() {
            for (i, v) in cells[col].iter().enumerate() {
                m[(i, j)] = v / total;
            }
        }
        Some((m, rows, cols))
    }

    /// Mutual information (nats) between two variables.
    pub fn mutual_information(&self, a: usize, b: usize) -> f64 {
        let joint = self.marginal(&[a, b]);
        let pa = joint.marginal(&[0]);
        let pb = joint.marginal(&[1]);
        let mut mi = 0.0;
        joint.for_each_positive(|config, p| {
            let q = pa.probs[config[0]] * pb.probs[config[1]];
            mi += p * (p / q).ln();
        });
        mi.max(0.0)
    }

    /// Push the distribution forward through derived variables. Each new
    /// variable's value is computed from the full source configuration
    /// (positions); returned table is over the new variables only.
    pub fn pushforward(
        &self,
        new_vars: Vec<(String, Vec<u32>)>,
        eval: impl Fn(usize, &[usize]) -> u32,
    ) -> Result<JointTable> {
        let (labels, supports): (Vec<String>, Vec<Vec<u32>>) = new_vars.into_iter().unzip();
        let dims: Vec<usize> = supports.iter().map(Vec::len).collect();
        let mut strides = vec![1usize; dims.len()];
        for i in (0..dims.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * dims[i + 1];
        }
        let mut probs = vec![0.0f64; dims.iter().product::<usize>().max(1)];
        let mut bad: Option<(usize, u32)> = None;
        self.for_each_positive(|config, p| {
            let mut ix = 0usize;
            for (nv, stride) in strides.iter().enumerate() {
                let val = eval(nv, config);
                match supports[nv].iter().position(|&s| s == val) {
                    Some(pos) => ix += pos * stride,
                    None => {
                        bad.get_or_insert((nv, val));
                        return;
                    }
                }
            }
            probs[ix] += p;
        });
        if let Some((nv, val)) = bad {
            return Err(Error::ShapeMismatch(format!(
                "derived variable {} produced value {val} outside its alphabet",
                labels[nv]
            )));
        }
        JointTable::new(labels, supports, probs)
    }

    /// Largest absolute deviation of the table from the product of its own
    /// marginals over the given split, in total-variation terms.
    pub fn tv_from_independence(&self, left: &[usize], right: &[usize]) -> f64 {
        let l = self.marginal(left);
        let r = self.marginal(right);
        let both: Vec<usize> = left.iter().chain(right).copied().collect();
        let joint = self.marginal(&both);
        let mut tv = 0.0;
        joint.for_each_positive(|config, p| {
            let lp = l.prob(&config[..left.len()]);
            let rp = r.prob(&config[left.len()..]);
            tv += (p - lp * rp).abs();
        });
        // Cells where the joint is zero but the product is not.
        let mut prod_on_zero = 0.0;
        l.for_each_positive(|lc, lp| {
            r.for_each_positive(|rc, rp| {
                let mut cfg = lc.to_vec();
                cfg.extend_from_slice(rc);
                if joint.prob(&cfg) <= MASS_TOL {
                    prod_on_zero += lp * rp;
                }
            });
        });
        0.5 * (tv + prod_on_zero)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coin_pair(p11: f64) -> JointTable {
        // Fair marginals; dependence controlled by p11.
        let p10 = 0.5 - p11;
        let p01 = 0.5 - p11;
        let p00 = 1.0 - p01 - p10 - p11;
        JointTable::new(
            vec!["a".into(), "b".into()],
            vec![vec![0, 1], vec![0, 1]],
            vec![p00, p01, p10, p11],
        )
        .unwrap()
    }

    #[test]
    fn marginal_and_support() {
        let t = coin_pair(0.25);
        let ma = t.marginal(&[0]);
        assert!((ma.probs()[0] - 0.5).abs() < 1e-12);
        assert_eq!(t.positive_support(0), vec![0, 1]);
    }

    #[test]
    fn independent_coins_have_zero_mi_and_tv() {
        let t = coin_pair(0.25);
        assert!(t.mutual_information(0, 1) < 1e-12);
        assert!(t.tv_from_independence(&[0], &[1]) < 1e-12);
    }

    #[test]
    fn copied_coins_have_tv_half() {
        let t = JointTable::new(
            vec!["a".into(), "b".into()],
            vec![vec![0, 1], vec![0, 1]],
            vec![0.5, 0.0, 0.0, 0.5],
        )
        .unwrap();
        assert!((t.tv_from_independence(&[0], &[1]) - 0.5).abs() < 1e-12);
        assert!(t.mutual_information(0, 1) > 0.6);
    }

    #[test]
    fn conditional_matrix_rows_follow_global_support() {
        // Three-variable chain with one zero-mass value of `a`.
        let mut probs = vec![0.0; 3 * 2 * 2];
        // a in {0,1} used, a=2 never; b = a; c fair and independent.
        probs[0] = 0.25; // a0 b0 c0
        probs[1] = 0.25; // a0 b0 c1
        probs[4 + 2] = 0.25; // a1 b1 c0
        probs[4 + 3] = 0.25; // a1 b1 c1
        let t = JointTable::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![0, 1, 2], vec![0, 1], vec![0, 1]],
            probs,
        )
        .unwrap();
        let (m, rows, cols) = t.conditional_matrix(0, &[2], &[(1, 0)]).unwrap();
        assert_eq!(rows, vec![0, 1]); // a=2 dropped from global support
        assert_eq!(cols.len(), 2);
        assert!((m[(0, 0)] - 0.5).abs() < 1e-12);
        assert!((m[(1, 0)]).abs() < 1e-12); // a=1 impossible given b=0
    }

    #[test]
    fn pushforward_collapses_to_function_image() {
        let t = coin_pair(0.25);
        let out = t
            .pushforward(vec![("or".into(), vec![0, 1])], |_, cfg| {
                u32::from(cfg[0] == 1 || cfg[1] == 1)
            })
            .unwrap();
        assert!((out.probs()[0] - 0.25).abs() < 1e-12);
        assert!((out.probs()[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn zero_mass_conditioning_cell_is_none() {
        let t = JointTable::new(
            vec!["a".into(), "b".into()],
            vec![vec![0, 1], vec![0, 1]],
            vec![0.5, 0.0, 0.0, 0.5],
        )
        .unwrap();
        assert!(t.conditional_dist(&[0], &[(1, 1), (0, 0)]).is_none());
    }
}
