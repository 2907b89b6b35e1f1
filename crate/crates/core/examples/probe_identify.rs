//! Dev probe: end-to-end identification success rate over generated models.
use hsm_core::ident::{check_componentwise_equivalence, identify_hierarchy, IdentifyOptions};
use hsm_core::model::generate::{random_discrete_model, DiscreteGenOptions};
use hsm_core::oracle::{oracle_best_match, OracleBudget};

fn main() {
    let n: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let t0 = std::time::Instant::now();
    let mut ok = 0;
    let mut attempts_total = 0;
    for seed in 0..n {
        let gen = random_discrete_model(&DiscreteGenOptions { seed, ..Default::default() })
            .expect("generator");
        attempts_total += gen.attempts;
        let joint = gen.model.exact_joint(true, None).expect("joint");
        let out = identify_hierarchy(&joint, &IdentifyOptions::default());
        if let Some(e) = &out.error {
            println!("seed {seed}: identify error: {e}");
            continue;
        }
        let report = check_componentwise_equivalence(&gen.model, &out.model).expect("equiv");
        let oracle = oracle_best_match(&gen.model, &out.model, &OracleBudget::default()).expect("oracle");
        match (report.matched, oracle.witness.is_some()) {
            (true, true) => ok += 1,
            (fast, slow) => println!(
                "seed {seed}: fast {fast} oracle {slow}; detail: {} | {}",
                report.detail, oracle.diagnostics
            ),
        }
    }
    println!(
        "{ok}/{n} matched; mean generator attempts {:.1}; total {:?}",
        attempts_total as f64 / n as f64,
        t0.elapsed()
    );
}
