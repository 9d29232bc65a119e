//! Repeats the synthetic replay and counts significant average-case
//! comparisons.
//!
//! `cargo run --release -p refereval-analysis --example replay [REPLICATIONS]`

use refereval_analysis::{synthetic_replay, ReplayConfig};
use refereval_microworld::ExperimentConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(100);
    let e = ExperimentConfig::reference().compile()?;
    let config = ReplayConfig::default();
    let mut significant = 0;
    println!("{:>4} {:>4} {:>9} {:>10} {:>9} {:>10}", "seed", "w_ba", "avg t0", "avg p", "worst t0", "worst p");
    for seed in 0..n {
        // A replication without a valid test counts as not significant.
        let r = match synthetic_replay(&e, &config, seed) {
            Ok(r) => r,
            Err(err) => {
                println!("{seed:>4} {err}");
                continue;
            }
        };
        let (a, w) = (&r.report.average_case, &r.report.worst_case);
        if a.t0 > 0.0 && a.p_value < 0.05 {
            significant += 1;
        }
        println!("{seed:>4} {:>4} {:>9.3} {:>10.2e} {:>9.3} {:>10.2e}", r.schedule.ba_load.unwrap_or(0), a.t0, a.p_value, w.t0, w.p_value);
    }
    println!("average case significant at 0.05: {significant}/{n}");
    Ok(())
}
