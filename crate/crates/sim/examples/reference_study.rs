//! Runs the reference study and prints per-instance mean costs.
//!
//! `cargo run --release -p refereval-sim --example reference_study`

use refereval_sim::summary::{relative_gap, relative_saving};
use refereval_sim::{compare, run_study, summarize, PolicyKind, ScenarioConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ScenarioConfig::default();
    let results = run_study(&cfg, None)?;
    let summaries = summarize(&results.rows);
    println!("instance  w_ba  w_sa      OA      BA      SA  saving   gap");
    for (s, rec) in summaries.iter().zip(&results.instances) {
        let m = |k| s.policies[&k].mean_expected;
        let (oa, ba, sa) = (m(PolicyKind::Oa), m(PolicyKind::Ba), m(PolicyKind::Sa));
        println!(
            "{:>8}  {:>4}  {:>4}  {oa:>6.3}  {ba:>6.3}  {sa:>6.3}  {:>5.1}%  {:>4.1}%",
            s.instance_id,
            rec.ba_load.unwrap(),
            rec.sa_load.unwrap(),
            100.0 * relative_saving(oa, ba),
            100.0 * relative_gap(oa, sa)
        );
    }
    println!("{:?}", compare(&summaries));
    Ok(())
}
