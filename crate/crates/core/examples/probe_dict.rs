//! Dev probe: textbook dictionary recovery, no hierarchy. If this fails,
//! the trainer is the problem; if it succeeds, the synthetic data is.
use hsm_core::metrics::match_components;
use hsm_core::model::Dataset;
use hsm_core::numerics;
use hsm_core::rng;
use hsm_core::sae::{train_sae, SaeConfig};
use rand::Rng;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3000);
    let lr: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2e-3);
    for seed in 0..3u64 {
        let mut rg = rng::stream(seed, "dict");
        let n_src = 6;
        let dim = 12;
        let mix: Vec<Vec<f64>> = (0..dim)
            .map(|_| (0..n_src).map(|_| rng::normal(&mut rg)).collect())
            .collect();
        let n = 6000;
        let mut z_rows = Vec::new();
        let mut x_rows = Vec::new();
        for _ in 0..n {
            let mut z = vec![0.0f64; n_src];
            // independent Bernoulli(1/3) activity (binomial counts)
            for zi in z.iter_mut() {
                if rg.gen_bool(1.0 / 3.0) {
                    *zi = rg.gen_range(0.5..2.0);
                }
            }
            let x: Vec<f64> = (0..dim)
                .map(|r| {
                    mix[r].iter().zip(&z).map(|(m, v)| m * v).sum::<f64>()
                        + 0.05 * rng::normal(&mut rg)
                })
                .collect();
            z_rows.push(z);
            x_rows.push(x);
        }
        let truth = Dataset::new(
            (0..n_src).map(|i| format!("z{i}")).collect(),
            vec![0; n_src],
            z_rows,
            None,
        )
        .unwrap();
        let data = Dataset::new(
            (0..dim).map(|i| format!("x{i}")).collect(),
            vec![0; dim],
            x_rows,
            None,
        )
        .unwrap();
        for (k, latent) in [(2usize, 8usize), (8, 8)] {
            let cfg = SaeConfig {
                input_dim: dim,
                latent_dim: latent,
                k,
                step_size: lr,
                batch_size: 192,
                training_steps: steps,
                seed,
            };
            let sae = train_sae(&data, &cfg).unwrap();
            let codes_rows: Vec<Vec<f64>> =
                data.rows.iter().map(|r| sae.encode(r).unwrap()).collect();
            let codes = Dataset::new(
                (0..latent).map(|i| format!("c{i}")).collect(),
                vec![0; latent],
                codes_rows,
                None,
            )
            .unwrap();
            let m = match_components(&truth, &codes).unwrap();
            let tail = sae.loss_trace[steps - 50..].iter().sum::<f64>() / 50.0;
            println!(
                "seed {seed} k={k:<2} score {:.3} loss {:.4} per-comp {:?}",
                m.mean_score,
                tail,
                m.scores.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>()
            );
            let _ = numerics::spearman(&[0.0, 1.0], &[0.0, 1.0]);
        }
    }
}
