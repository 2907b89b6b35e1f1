//! Shared numeric kernels: rank estimation, nonnegative factorization,
//! optimal assignment, rank statistics, and contingency-table tests.
//!
//! Matrices are [`nalgebra::DMatrix`] throughout. Everything here is
//! deterministic; routines that need randomness take an explicit seed.

use nalgebra::DMatrix;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::rng;

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

/// Numerical rank: singular values above `rel_tol` times the largest.
///
/// The zero matrix has rank 0 regardless of tolerance.
pub fn numeric_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = singular_values(m);
    match sv.first() {
        None => 0,
        Some(&s0) if s0 <= 0.0 => 0,
        Some(&s0) => sv.iter().filter(|&&s| s > rel_tol * s0).count(),
    }
}

/// Smallest singular value (0 for an empty matrix).
pub fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

/// Relative Frobenius residual ||v - w h|| / ||v||.
fn rel_residual(v: &DMatrix<f64>, w: &DMatrix<f64>, h: &DMatrix<f64>) -> f64 {
    let denom = v.norm();
    if denom == 0.0 {
        return 0.0;
    }
    (v - w * h).norm() / denom
}

/// Nonnegative factorization `v ~= w h` with inner dimension `p` via
/// multiplicative updates (Frobenius objective). Returns the best
/// `(residual, w, h)` over `restarts` seeded random initializations.
pub fn nmf(
    v: &DMatrix<f64>,
    p: usize,
    restarts: usize,
    iters: usize,
    seed: u64,
) -> (f64, DMatrix<f64>, DMatrix<f64>) {
    const EPS: f64 = 1e-12;
    let (m, n) = v.shape();
    let scale = (v.mean().max(EPS) / p as f64).sqrt();
    let mut best: Option<(f64, DMatrix<f64>, DMatrix<f64>)> = None;
    for r in 0..restarts {
        let mut rg = rng::stream(seed, &format!("nmf-restart-{r}"));
        let mut w = DMatrix::from_fn(m, p, |_, _| scale * rg.gen_range(0.05..1.0));
        let mut h = DMatrix::from_fn(p, n, |_, _| scale * rg.gen_range(0.05..1.0));
        for _ in 0..iters {
            // H <- H .* (W'V) ./ (W'W H)
            let wt = w.transpose();
            let num = &wt * v;
            let den = &wt * &w * &h;
            h.zip_zip_apply(&num, &den, |hv, nu, de| *hv *= nu / (de + EPS));
            // W <- W .* (V H') ./ (W H H')
            let ht = h.transpose();
            let num = v * &ht;
            let den = &w * &h * &ht;
            w.zip_zip_apply(&num, &den, |wv, nu, de| *wv *= nu / (de + EPS));
        }
        let res = rel_residual(v, &w, &h);
        if best.as_ref().map_or(true, |(b, _, _)| res < *b) {
            best = Some((res, w, h));
        }
    }
    best.expect("restarts >= 1")
}

/// Explicit nonnegative factorization of a rank-<=2 nonnegative matrix.
///
/// The columns of such a matrix lie in a pointed two-dimensional cone; the
/// two angularly extreme columns generate it, so every column is a
/// nonnegative combination of those two. Returns `None` when the matrix has
/// numerical rank above 2 or a solve leaves a materially negative
/// coefficient.
pub fn rank2_nonneg_factorization(a: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    const TOL: f64 = 1e-9;
    let (m, n) = a.shape();
    let rank = numeric_rank(a, TOL);
    match rank {
        0 => Some((DMatrix::zeros(m, 1), DMatrix::zeros(1, n))),
        1 => {
            let j = (0..n)
                .max_by(|&i, &j| a.column(i).norm().partial_cmp(&a.column(j).norm()).unwrap())?;
            let u = a.column(j).into_owned();
            let uu = u.dot(&u);
            let coeff = DMatrix::from_fn(1, n, |_, k| (a.column(k).dot(&u) / uu).max(0.0));
            Some((DMatrix::from_columns(&[u]), coeff))
        }
        2 => {
            // Orthonormal basis of the column span, mean-aligned so that all
            // columns sit at signed angles within (-pi/2, pi/2).
            let mean = {
                let mut s = a.column(0).into_owned();
                for k in 1..n {
                    s += a.column(k);
                }
                s
            };
            let e1 = &mean / mean.norm();
            let mut e2 = None;
            for k in 0..n {
                let c = a.column(k);
                let resid = c - &e1 * e1.dot(&c);
                if resid.norm() > TOL * a.norm() {
                    e2 = Some(&resid / resid.norm());
                    break;
                }
            }
            let e2 = e2?;
            let angle = |k: usize| {
                let c = a.column(k);
                f64::atan2(e2.dot(&c), e1.dot(&c))
            };
            let nonzero: Vec<usize> = (0..n).filter(|&k| a.column(k).norm() > 0.0).collect();
            let lo = *nonzero
                .iter()
                .min_by(|&&i, &&j| angle(i).partial_cmp(&angle(j)).unwrap())?;
            let hi = *nonzero
                .iter()
                .max_by(|&&i, &&j| angle(i).partial_cmp(&angle(j)).unwrap())?;
            let b = DMatrix::from_columns(&[a.column(lo), a.column(hi)]);
            // 2x2 solve per column in (e1, e2) coordinates.
            let g = [
                [e1.dot(&b.column(0)), e1.dot(&b.column(1))],
                [e2.dot(&b.column(0)), e2.dot(&b.column(1))],
            ];
            let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
            if det.abs() < TOL {
                return None;
            }
            let mut c = DMatrix::zeros(2, n);
            for k in 0..n {
                let col = a.column(k);
                let (y1, y2) = (e1.dot(&col), e2.dot(&col));
                let x0 = (y1 * g[1][1] - y2 * g[0][1]) / det;
                let x1 = (y2 * g[0][0] - y1 * g[1][0]) / det;
                let floor = -1e-7 * a.norm().max(1.0);
                if x0 < floor || x1 < floor {
                    return None;
                }
                c[(0, k)] = x0.max(0.0);
                c[(1, k)] = x1.max(0.0);
            }
            Some((b, c))
        }
        _ => None,
    }
}

/// Maximum-total-score assignment via the Hungarian algorithm with row and
/// column potentials. `score` may be rectangular; the result maps each row
/// to a distinct column, with `usize::MAX` for rows left unmatched when
/// rows > cols.
pub fn assignment_max(score: &DMatrix<f64>) -> Vec<usize> {
    let (rows, cols) = score.shape();
    if rows == 0 || cols == 0 {
        return vec![usize::MAX; rows];
    }
    // Pad to square; padding cells carry the worst cost so real pairs win.
    let n = rows.max(cols);
    let big = score.iter().fold(0.0f64, |a, &b| a.max(b.abs())) + 1.0;
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            big - score[(i, j)]
        } else {
            big
        }
    };
    let inf = f64::INFINITY;
    // 1-based arrays; p[j] is the row matched to column j, 0 = free.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![usize::MAX; rows];
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i - 1 < rows && j - 1 < cols {
            out[i - 1] = j - 1;
        }
    }
    out
}

/// Midranks (ties get the average of the ranks they span), 1-based.
pub fn midranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation; `None` when either input is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        None
    } else {
        Some(sxy / (sxx * syy).sqrt())
    }
}

/// Spearman rank correlation with midranks; `None` for constant input.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    pearson(&midranks(x), &midranks(y))
}

/// Chi-squared survival function P(X > x) with `df` degrees of freedom.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if df <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(df).map(|d| d.sf(x.max(0.0))).unwrap_or(1.0)
}

/// G-statistic and degrees of freedom for one two-way contingency table.
///
/// Degrees of freedom use only rows and columns with nonzero marginals, the
/// usual adjustment for sparse tables; cells with zero observed count
/// contribute nothing to the statistic.
pub fn g_squared_2way(counts: &DMatrix<f64>) -> (f64, f64) {
    let (r, c) = counts.shape();
    let total: f64 = counts.sum();
    if total <= 0.0 {
        return (0.0, 0.0);
    }
    let row_sums: Vec<f64> = (0..r).map(|i| counts.row(i).sum()).collect();
    let col_sums: Vec<f64> = (0..c).map(|j| counts.column(j).sum()).collect();
    let mut g2 = 0.0;
    for i in 0..r {
        for j in 0..c {
            let o = counts[(i, j)];
            if o > 0.0 {
                let e = row_sums[i] * col_sums[j] / total;
                g2 += 2.0 * o * (o / e).ln();
            }
        }
    }
    let r_eff = row_sums.iter().filter(|&&s| s > 0.0).count();
    let c_eff = col_sums.iter().filter(|&&s| s > 0.0).count();
    let df = (r_eff.saturating_sub(1) * c_eff.saturating_sub(1)) as f64;
    (g2.max(0.0), df)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dm(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn rank_of_outer_product_is_one() {
        let u = [1.0, 2.0, 0.5];
        let v = [3.0, 1.0];
        let a = DMatrix::from_fn(3, 2, |i, j| u[i] * v[j]);
        assert_eq!(numeric_rank(&a, 1e-9), 1);
    }

    #[test]
    fn rank_zero_matrix() {
        assert_eq!(numeric_rank(&DMatrix::zeros(3, 4), 1e-9), 0);
    }

    #[test]
    fn rank2_factorization_reconstructs() {
        // Rank-2 nonnegative: sum of two outer products.
        let a = dm(
            3,
            4,
            &[
                1.0, 2.0, 3.0, 1.0, //
                2.0, 3.0, 5.0, 2.0, //
                0.5, 1.5, 2.0, 0.5,
            ],
        );
        assert_eq!(numeric_rank(&a, 1e-9), 2);
        let (b, c) = rank2_nonneg_factorization(&a).expect("rank-2 factorization");
        assert!(b.iter().all(|&x| x >= 0.0) && c.iter().all(|&x| x >= 0.0));
        assert!(rel_residual(&a, &b, &c) < 1e-9);
    }

    #[test]
    fn rank2_factorization_rejects_rank3() {
        let a = dm(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(rank2_nonneg_factorization(&a).is_none());
    }

    #[test]
    fn nmf_reaches_exact_rank2() {
        let a = dm(3, 4, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 5.0, 2.0, 0.5, 1.5, 2.0, 0.5]);
        let (res, _, _) = nmf(&a, 2, 20, 1500, 42);
        assert!(res < 1e-7, "residual {res}");
    }

    #[test]
    fn assignment_matches_brute_force() {
        let mut rg = rng::stream(9, "assign");
        for n in 1..=6 {
            for _ in 0..20 {
                let s = DMatrix::from_fn(n, n, |_, _| rg.gen_range(-1.0..1.0));
                let got = assignment_max(&s);
                let got_score: f64 = (0..n).map(|i| s[(i, got[i])]).sum();
                // Brute force over permutations.
                let mut perm: Vec<usize> = (0..n).collect();
                let mut best = f64::NEG_INFINITY;
                permute(&mut perm, 0, &mut |p| {
                    let sc: f64 = (0..n).map(|i| s[(i, p[i])]).sum();
                    if sc > best {
                        best = sc;
                    }
                });
                assert!(
                    (got_score - best).abs() < 1e-9,
                    "n={n} got {got_score} best {best}"
                );
            }
        }
    }

    fn permute(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k == p.len() {
            f(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            permute(p, k + 1, f);
            p.swap(k, i);
        }
    }

    #[test]
    fn spearman_is_monotone_invariant() {
        let x = [0.3, -1.0, 2.0, 0.7, 0.0];
        let y: Vec<f64> = x.iter().map(|&v: &f64| v.powi(3) + 2.0).collect();
        assert!((spearman(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let z: Vec<f64> = x.iter().map(|&v: &f64| -v.exp()).collect();
        assert!((spearman(&x, &z).unwrap() + 1.0).abs() < 1e-12);
        assert!(spearman(&x, &[1.0; 5]).is_none());
    }

    #[test]
    fn g_squared_detects_dependence() {
        let indep = dm(2, 2, &[250.0, 250.0, 250.0, 250.0]);
        let (g0, df0) = g_squared_2way(&indep);
        assert!(g0 < 1e-9);
        assert_eq!(df0, 1.0);
        let dep = dm(2, 2, &[400.0, 100.0, 100.0, 400.0]);
        let (g1, df1) = g_squared_2way(&dep);
        assert!(chi2_sf(g1, df1) < 1e-10);
    }

    #[test]
    fn g_squared_adjusts_df_for_zero_margins() {
        let t = dm(2, 3, &[5.0, 0.0, 7.0, 3.0, 0.0, 2.0]);
        let (_, df) = g_squared_2way(&t);
        assert_eq!(df, 1.0); // middle column empty: (2-1)*(2-1)
    }
}
