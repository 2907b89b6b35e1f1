//! Dev probe: inspect bottom-latent sparsity, SAE convergence, and
//! per-component alignment in detail.
use hsm_core::numerics;
use hsm_core::pipeline::*;

fn main() {
    let cfg = default_two_level_config();
    let stack = build_stack(&cfg, 0).expect("stack");
    let bottom = 1usize;
    let n = stack.model.graph.level_nodes(bottom).len();
    // Bottom latent stats.
    let mut active_counts = Vec::new();
    let mut mins = vec![f64::INFINITY; n];
    let mut maxs = vec![f64::NEG_INFINITY; n];
    let mut frac_active = vec![0.0; n];
    for s in &stack.samples {
        let z = &s.levels[bottom];
        let mut count = 0;
        for (i, &v) in z.iter().enumerate() {
            mins[i] = mins[i].min(v);
            maxs[i] = maxs[i].max(v);
            if v.abs() > 0.3 {
                count += 1;
                frac_active[i] += 1.0;
            }
        }
        active_counts.push(count);
    }
    let n_s = stack.samples.len() as f64;
    println!(
        "mean active (|z|>0.3): {:.2}; per-node frac: {:?}",
        active_counts.iter().sum::<usize>() as f64 / n_s,
        frac_active.iter().map(|f| format!("{:.2}", f / n_s)).collect::<Vec<_>>()
    );
    println!(
        "value ranges: {:?}",
        mins.iter().zip(&maxs).map(|(a, b)| format!("[{a:.1},{b:.1}]")).collect::<Vec<_>>()
    );
    // SAE convergence.
    let sae = &stack.saes[bottom];
    let t = &sae.loss_trace;
    println!(
        "loss: start {:.4} mid {:.4} end {:.4}",
        t[..50].iter().sum::<f64>() / 50.0,
        t[t.len() / 2 - 25..t.len() / 2 + 25].iter().sum::<f64>() / 50.0,
        t[t.len() - 50..].iter().sum::<f64>() / 50.0
    );
    // Per-true-component best correlation across all units.
    let truth: Vec<Vec<f64>> = (0..n)
        .map(|i| stack.samples.iter().map(|s| s.levels[bottom][i]).collect())
        .collect();
    let codes = encode_dataset(sae, &stack.features[bottom]).expect("codes");
    for (i, t_col) in truth.iter().enumerate() {
        let mut best = (0usize, 0.0f64);
        for u in 0..sae.config.latent_dim {
            let c: Vec<f64> = codes.rows.iter().map(|r| r[u]).collect();
            let rho = numerics::spearman(t_col, &c).map_or(0.0, f64::abs);
            if rho > best.1 {
                best = (u, rho);
            }
        }
        println!(
            "true z{i}: best unit {} |rho| {:.3}; assigned {:?} score {:.3}",
            best.0,
            best.1,
            stack.matches[bottom].assignment[i],
            stack.matches[bottom].scores.get(i).copied().unwrap_or(f64::NAN)
        );
    }
    // Cross-correlations between true bottom latents.
    let mut worst = (0, 0, 0.0f64);
    for i in 0..n {
        for j in i + 1..n {
            let rho = numerics::spearman(&truth[i], &truth[j]).map_or(0.0, f64::abs);
            if rho > worst.2 {
                worst = (i, j, rho);
            }
        }
    }
    println!("max cross |rho| between true latents: z{} z{} = {:.3}", worst.0, worst.1, worst.2);
    // Active-count histogram.
    let mut hist = [0usize; 7];
    for s in &stack.samples {
        let c = s.levels[bottom].iter().filter(|v| v.abs() > 0.3).count();
        hist[c.min(6)] += 1;
    }
    println!("active-count hist: {hist:?}");
    // Spearman restricted to samples where the true latent is active.
    for (i, t_col) in truth.iter().enumerate() {
        let Some(u) = stack.matches[bottom].assignment[i] else { continue };
        let c: Vec<f64> = codes.rows.iter().map(|r| r[u]).collect();
        let pairs: Vec<(f64, f64)> = t_col
            .iter()
            .zip(&c)
            .filter(|(t, _)| t.abs() > 0.3)
            .map(|(t, c)| (*t, *c))
            .collect();
        let (tv, cv): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let rho_active = numerics::spearman(&tv, &cv).map_or(0.0, f64::abs);
        println!("z{i}: active-only |rho| with its unit: {rho_active:.3} over {} samples", tv.len());
    }
    // Mean code sparsity.
    let mean_active: f64 = codes
        .rows
        .iter()
        .map(|r| r.iter().filter(|&&v| v > 0.0).count() as f64)
        .sum::<f64>()
        / codes.rows.len() as f64;
    println!("mean code actives: {mean_active:.2} (k = {})", sae.config.k);
}
