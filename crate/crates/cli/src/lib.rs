//! The `refereval` command line.
//!
//! Every command prints the effective seed and the digest of the
//! configuration it ran from before doing any work, and embeds the digest
//! in the files it writes.

pub mod digest;
pub mod oracle;

use std::collections::BTreeMap;
use std::fmt;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use refereval_analysis::{compare_policies, estimate_perf, subject_costs, Alternative, EstimateOptions, PerfEstimate};
use refereval_core::PerfModel;
use refereval_microworld::{build_calibration, build_experiment2, read_logs, ExperimentConfig, Mode, Schedule, SessionLog};
use refereval_server::{router, ServerConfig, SessionStore, SystemClock};
use refereval_sim::{compare, export_with_meta, run_study, summarize, ResultsMeta, ScenarioConfig};

pub use digest::config_digest;

/// Log levels accepted in `REFEREVAL_LOG_LEVEL`.
pub const LOG_LEVELS: [&str; 4] = ["error", "warn", "info", "debug"];

#[derive(Debug, Parser)]
#[command(name = "refereval", version, about = "Evaluate human-automation task referral policies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the Monte Carlo policy study and write per-batch results.
    Simulate(SimulateArgs),
    /// Estimate human TPR/FPR per load from calibration session logs.
    Estimate(EstimateArgs),
    /// Build a session schedule from an experiment configuration.
    BuildExperiment(BuildArgs),
    /// Paired comparison of blind and optimal allocation from session logs.
    Analyze(AnalyzeArgs),
    /// Serve live sessions over HTTP.
    Serve(ServeArgs),
    /// Check the allocation policies against exhaustive search.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario TOML; the reference study when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the scenario's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Results CSV; metadata goes to `<out>.meta.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-instance policy means as CSV, for plotting.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Glob of session logs (JSON lines); may be repeated.
    #[arg(long, required = true)]
    pub logs: Vec<String>,
    /// Schedule the sessions were played from.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Leave auto-resolved labels out of the counts.
    #[arg(long)]
    pub exclude_auto_resolve: bool,
    #[arg(long)]
    pub include_practice: bool,
    /// Sessions with a smaller share of participant labels are discarded.
    #[arg(long, default_value_t = 0.55)]
    pub min_completion: f64,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Experiment TOML; the bundled reference when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Performance estimate; required for allocation sessions.
    #[arg(long)]
    pub perf: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the configuration's mode.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Logs supplying blind-allocation rounds; may be repeated.
    #[arg(long, required = true)]
    pub logs_a: Vec<String>,
    /// Logs supplying optimal-allocation rounds; `--logs-a` when omitted.
    #[arg(long)]
    pub logs_b: Vec<String>,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub two_sided: bool,
    /// Report file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    #[arg(long, default_value = "sessions")]
    pub log_dir: PathBuf,
    /// `NAME=PATH` of a schedule sessions can use; may be repeated. The
    /// reference calibration schedule is served as `calibration` when none
    /// is given.
    #[arg(long = "schedule", value_parser = parse_named_path)]
    pub schedules: Vec<(String, PathBuf)>,
    /// Seeds the auto-resolve coin.
    #[arg(long, default_value_t = 20240601)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub grace_ms: u64,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Largest batch size; batch sizes are drawn from `1..=k`.
    #[arg(long, default_value_t = 6)]
    pub k: usize,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    match s {
        "calibration" => Ok(Mode::Calibration),
        "experiment2" => Ok(Mode::Experiment2),
        _ => Err(format!("unknown mode {s:?}; expected calibration or experiment2")),
    }
}

fn parse_named_path(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected NAME=PATH, got {s:?}")),
    }
}

/// A problem with the invocation rather than with the work; exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// The work finished but its checks did not pass.
    ChecksFailed,
}

fn read_config(path: &Path) -> anyhow::Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn provenance(seed: u64, digest: &str) {
    println!("seed: {seed}");
    println!("config digest: {digest}");
}

fn expand_globs(patterns: &[String]) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in patterns {
        let matches = glob::glob(p).map_err(|e| usage(format!("bad glob {p:?}: {e}")))?;
        for m in matches {
            out.push(m?);
        }
    }
    if out.is_empty() {
        return Err(usage(format!("no log files match {patterns:?}")));
    }
    out.sort();
    out.dedup();
    Ok(out)
}

fn load_truth(path: &Path) -> anyhow::Result<(Schedule, String)> {
    let bytes = read_config(path)?;
    let schedule = Schedule::load(path)?;
    let digest = schedule.config_digest.clone().unwrap_or_else(|| config_digest(&bytes));
    Ok((schedule, digest))
}

fn simulate(a: &SimulateArgs) -> anyhow::Result<Outcome> {
    let (mut config, digest) = match &a.config {
        Some(p) => {
            let bytes = read_config(p)?;
            let text = String::from_utf8(bytes.clone()).context("configuration is not UTF-8")?;
            (ScenarioConfig::from_toml_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?, config_digest(&bytes))
        }
        None => {
            let c = ScenarioConfig::default();
            let digest = config_digest(c.to_toml_string().as_bytes());
            (c, digest)
        }
    };
    if let Some(seed) = a.seed {
        config.study.seed = seed;
    }
    provenance(config.study.seed, &digest);
    let results = run_study(&config, a.workers)?;
    let mut meta = ResultsMeta::of(&results);
    meta.config_digest = Some(digest);
    export_with_meta(&results, &meta, &a.out)?;

    let summaries = summarize(&results.rows);
    if let Some(path) = &a.summary {
        let mut csv = String::from("instance_id,policy,batches,mean_expected,mean_realized,se_realized,mean_load\n");
        for s in &summaries {
            for (k, p) in &s.policies {
                csv.push_str(&format!("{},{},{},{},{},{},{}\n", s.instance_id, k.name(), p.batches, p.mean_expected, p.mean_realized, p.se_realized, p.mean_load));
            }
        }
        std::fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
    }
    let c = compare(&summaries);
    println!("rows: {}", results.rows.len());
    println!("OA <= BA: {}/{}", c.oa_not_above_ba, c.instances);
    println!("OA >= 15% below BA: {}/{}", c.oa_15pct_below_ba, c.instances);
    println!("SA within 5% of OA: {}/{}", c.sa_within_5pct_of_oa, c.instances);
    Ok(Outcome::Success)
}

fn estimate(a: &EstimateArgs) -> anyhow::Result<Outcome> {
    let (schedule, digest) = load_truth(&a.truth)?;
    provenance(schedule.seed, &digest);
    let logs = read_logs(&expand_globs(&a.logs)?)?;
    let options = EstimateOptions { include_auto_resolve: !a.exclude_auto_resolve, include_practice: a.include_practice, min_completion: a.min_completion };
    let est = estimate_perf(&logs, &schedule, &options)?;
    std::fs::write(&a.out, est.to_json()).with_context(|| format!("writing {}", a.out.display()))?;
    println!("sessions used: {}, excluded: {}", est.sessions_used.len(), est.sessions_excluded.len());
    for c in &est.counts {
        let show = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        println!("w={:>3}  tpr {}  fpr {}  (n_h1 {}, n_h0 {}){}", c.w, show(c.tpr), show(c.fpr), c.n_h1, c.n_h0, if c.flagged { "  flagged" } else { "" });
    }
    Ok(Outcome::Success)
}

fn build(a: &BuildArgs) -> anyhow::Result<Outcome> {
    let (mut config, digest) = match &a.config {
        Some(p) => {
            let bytes = read_config(p)?;
            let text = String::from_utf8(bytes.clone()).context("configuration is not UTF-8")?;
            (ExperimentConfig::from_toml_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?, config_digest(&bytes))
        }
        None => (ExperimentConfig::reference(), config_digest(refereval_microworld::REFERENCE_TOML.as_bytes())),
    };
    if let Some(mode) = a.mode {
        config.mode = mode;
    }
    let seed = a.seed.unwrap_or(config.seed);
    provenance(seed, &digest);
    let experiment = config.compile()?;
    let mut schedule = match config.mode {
        Mode::Calibration => build_calibration(&experiment, seed)?,
        Mode::Experiment2 => {
            let path = a.perf.as_ref().ok_or_else(|| usage("allocation sessions need --perf"))?;
            let text = String::from_utf8(read_config(path)?).context("estimate is not UTF-8")?;
            let table = PerfEstimate::from_json_str(&text)?.table()?;
            for w in experiment.load_set.iter().filter(|&w| table.is_extrapolated(w)) {
                tracing::warn!(load = w, "load outside the measured range; rates clamped to the nearest measured load");
                eprintln!("warning: load {w} is outside the measured range; using the nearest measured rates");
            }
            build_experiment2(&experiment, &table as &dyn PerfModel, seed)?
        }
    };
    schedule.config_digest = Some(digest);
    schedule.save(&a.out)?;
    if let Some(w) = schedule.ba_load {
        println!("blind allocation load: {w}");
    }
    let loads: Vec<String> = schedule.scored_rounds().map(|r| r.load().to_string()).collect();
    println!("rounds: {} ({} practice); scored loads: {}", schedule.rounds.len(), schedule.rounds.iter().filter(|r| r.practice).count(), loads.join(" "));
    Ok(Outcome::Success)
}

fn analyze(a: &AnalyzeArgs) -> anyhow::Result<Outcome> {
    let (schedule, digest) = load_truth(&a.truth)?;
    provenance(schedule.seed, &digest);
    let logs_a: Vec<SessionLog> = read_logs(&expand_globs(&a.logs_a)?)?;
    let logs_b: Vec<SessionLog> = if a.logs_b.is_empty() { logs_a.clone() } else { read_logs(&expand_globs(&a.logs_b)?)? };
    let costs = subject_costs(&logs_a, &logs_b, &schedule)?;
    let alternative = if a.two_sided { Alternative::TwoSided } else { Alternative::Greater };
    let report = compare_policies(&costs, alternative)?;
    for id in &report.excluded {
        tracing::warn!(subject = %id, "subject lacks rounds under one policy; excluded");
        eprintln!("warning: subject {id} lacks rounds under one policy; excluded");
    }
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match &a.out {
        Some(p) => {
            std::fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?;
            for (name, r) in [("average case", &report.average_case), ("worst case", &report.worst_case)] {
                println!("{name}: t0 = {:.4}, df = {}, p = {:.3e}", r.t0, r.df, r.p_value);
            }
        }
        None => print!("{text}"),
    }
    Ok(Outcome::Success)
}

fn serve(a: &ServeArgs) -> anyhow::Result<Outcome> {
    let mut schedules = BTreeMap::new();
    let mut digests = Vec::new();
    for (name, path) in &a.schedules {
        let (s, d) = load_truth(path)?;
        digests.push(format!("{name}={d}"));
        schedules.insert(name.clone(), Arc::new(s));
    }
    if schedules.is_empty() {
        let e = ExperimentConfig::reference().compile()?;
        schedules.insert("calibration".to_string(), Arc::new(build_calibration(&e, a.seed)?));
        digests.push(format!("calibration={}", config_digest(refereval_microworld::REFERENCE_TOML.as_bytes())));
    }
    provenance(a.seed, &digests.join(","));
    let config = ServerConfig { log_dir: a.log_dir.clone(), seed: a.seed, grace_ms: a.grace_ms, schedules };
    let store = Arc::new(SessionStore::open(config, Arc::new(SystemClock))?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(a.addr).await.with_context(|| format!("binding {}", a.addr))?;
        println!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(store))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        anyhow::Ok(())
    })?;
    Ok(Outcome::Success)
}

fn oracle_cmd(a: &OracleArgs) -> anyhow::Result<Outcome> {
    if a.k == 0 || a.k > oracle::MAX_K {
        bail!(UsageError(format!("--k must be in 1..={}: exhaustive search over 2^K subsets", oracle::MAX_K)));
    }
    provenance(a.seed, &config_digest(format!("oracle k={} trials={}", a.k, a.trials).as_bytes()));
    let mut ok = true;
    for (name, report) in [
        ("optimal load (all subsets)", oracle::optimal_load_suite(a.k, a.trials, a.seed)?),
        ("fixed load (subsets of size w)", oracle::fixed_load_suite(a.k, a.trials, a.seed)?),
    ] {
        println!(
            "{name}: {} checks, {} exact, {} within {:e}, {} mismatches: {}",
            report.checks,
            report.exact,
            report.within_tolerance,
            oracle::TOLERANCE,
            report.mismatches,
            if report.passed() { "PASS" } else { "FAIL" }
        );
        ok &= report.passed();
    }
    Ok(if ok { Outcome::Success } else { Outcome::ChecksFailed })
}

pub fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::BuildExperiment(a) => build(a),
        Command::Analyze(a) => analyze(a),
        Command::Serve(a) => serve(a),
        Command::Oracle(a) => oracle_cmd(a),
    }
}
