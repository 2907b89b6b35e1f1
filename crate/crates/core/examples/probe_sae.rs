//! Dev probe: sparsity-surrogate numbers over seeds (match scores for
//! K-matched vs dense codes, spread/deactivation trends, ablation grid).
use hsm_core::pipeline::*;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "match".into());
    match which.as_str() {
        "match" => probe_match(),
        "trends" => probe_trends(),
        "ablation" => probe_ablation(),
        other => eprintln!("unknown probe {other}"),
    }
}

fn probe_match() {
    let t0 = std::time::Instant::now();
    for seed in 0..5u64 {
        let mut cfg = default_two_level_config();
        let stack = build_stack(&cfg, seed).expect("stack");
        let sparse = stack.matches[1].mean_score;
        cfg.saes[1].k = cfg.saes[1].latent_dim; // dense baseline
        let dense_stack = build_stack(&cfg, seed).expect("dense stack");
        let dense = dense_stack.matches[1].mean_score;
        println!(
            "seed {seed}: K-matched {sparse:.3} vs dense {dense:.3}  ({})",
            if sparse > dense { "sparse wins" } else { "DENSE WINS" }
        );
    }
    println!("elapsed {:?}", t0.elapsed());
}

fn probe_trends() {
    let t0 = std::time::Instant::now();
    for seed in 0..5u64 {
        let mut cfg = default_three_level_config();
        cfg.sparsity_grid = vec![];
        let report = run_hierarchy_experiment(&ExperimentConfig {
            seeds: vec![seed],
            ..cfg
        })
        .expect("report");
        let s = &report.seeds[0];
        println!(
            "seed {seed}: match {:?} spread {:?} deact {:?} recall {:.2} prec {:.2} shd {}",
            s.match_scores
                .iter()
                .map(|v| format!("{v:.2}"))
                .collect::<Vec<_>>(),
            s.spread_top1.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>(),
            s.deactivation_l1.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>(),
            s.skeleton_recall,
            s.oriented_precision,
            s.shd
        );
    }
    println!("elapsed {:?}", t0.elapsed());
}

fn probe_ablation() {
    let t0 = std::time::Instant::now();
    for seed in 0..5u64 {
        let cfg = default_three_level_config();
        let report =
            run_hierarchy_experiment(&ExperimentConfig { seeds: vec![seed], ..cfg }).expect("report");
        let s = &report.seeds[0];
        let fmt: Vec<String> = s
            .ablation
            .iter()
            .map(|r| format!("k={} iou={:.3} cov={:.1} edges={}", r.k, r.overlap, r.coverage, r.edge_count))
            .collect();
        println!("seed {seed}: {}", fmt.join(" | "));
    }
    println!("elapsed {:?}", t0.elapsed());
}
