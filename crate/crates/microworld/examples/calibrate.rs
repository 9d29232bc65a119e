//! Prints the exact operating points of the reference trees and the
//! automation leaf posteriors.
//!
//! `cargo run -p refereval-microworld --example calibrate [CONFIG.toml]`

use refereval_microworld::ExperimentConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = match std::env::args().nth(1) {
        Some(path) => ExperimentConfig::load(path.as_ref())?,
        None => ExperimentConfig::reference(),
    };
    let e = config.compile()?;
    println!("human tree       TPR {:.4}  FPR {:.4}", e.human_rates.tpr(), e.human_rates.fpr());
    println!("automation tree  TPR {:.4}  FPR {:.4}", e.automation_rates.tpr(), e.automation_rates.fpr());
    println!();
    println!("{:<6} {:>10} {:>10} {:>10} {:>10}  label", "leaf", "P(l|H0)", "P(l|H1)", "P(l)", "posterior");
    for leaf in e.automation_tree.leaves() {
        let [l0, l1] = e.leaf_likelihoods[&leaf.id];
        println!(
            "{:<6} {l0:>10.5} {l1:>10.5} {:>10.5} {:>10.5}  {:?}",
            leaf.id,
            e.leaf_probability(&leaf.id).unwrap_or(0.0),
            e.leaf_posteriors[&leaf.id].value(),
            leaf.label
        );
    }
    Ok(())
}
