//! Dev probe: print observation-response maps per level.
use hsm_core::pipeline::*;

fn main() {
    let cfg = default_three_level_config();
    let stack = build_stack(&cfg, 0).expect("stack");
    for level in 0..3 {
        println!("level {level} matched {:?}", stack.matched_features(level));
        for &f in &stack.matched_features(level) {
            let (map, mask) = stack.observation_attribution(level, f, 2.5, 0.25, 64).unwrap();
            let m: Vec<String> = map.iter().map(|v| format!("{v:.2}")).collect();
            println!(
                "  f{f}: prop {:.2} map {}",
                mask.iter().filter(|&&b| b).count() as f64 / mask.len() as f64,
                m.join(" ")
            );
        }
    }
}
