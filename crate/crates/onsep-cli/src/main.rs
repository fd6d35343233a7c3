//! `onsep` — command-line driver: dataset loading, scorer selection, the
//! online forecasting loop, synthetic dataset generation, and rule-file
//! diagnostics.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error (including
//! malformed input files).

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use onsep_core::rulebase::CausalRuleBase;
use onsep_core::synth::{generate_synthetic, SyntheticSpec};
use onsep_core::tkg::Dataset;
use onsep_core::{
    run_online, HttpScorer, OnlineConfig, OnsepError, RunReport, ScorerBackend, ScorerKind,
    StubScorer,
};

#[derive(Parser)]
#[command(
    name = "onsep",
    version,
    about = "Online neural-symbolic event prediction over temporal knowledge graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the online forecasting loop over a dataset's test split
    Run(RunArgs),
    /// Generate a synthetic planted-rule dataset directory
    Synth(SynthArgs),
    /// Round-trip a rule file against a dataset and re-serialize it
    ExportRules(ExportRulesArgs),
    /// Report how much of a rule file resolves against a dataset
    ImportCheck(ImportCheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScorerArg {
    Stub,
    Http,
}

#[derive(Args)]
struct RunArgs {
    /// Dataset directory with entity2id.txt, relation2id.txt and the
    /// train/valid/test fact files
    #[arg(long, env = "ONSEP_DATASET_DIR")]
    dataset_dir: PathBuf,
    /// L: maximum events per retrieved history chain
    #[arg(long, env = "ONSEP_HISTORY_LEN", default_value_t = 200)]
    history_len: usize,
    /// Weight of the long-term branch in the ensemble
    #[arg(long, env = "ONSEP_LAMBDA", default_value_t = 0.1)]
    lambda: f64,
    /// Weight of scorer probability vs. coverage in rule confidence
    #[arg(long, env = "ONSEP_ALPHA", default_value_t = 0.5)]
    alpha: f64,
    /// Smoothing factor of the confidence update
    #[arg(long, env = "ONSEP_THETA", default_value_t = 0.25)]
    theta: f64,
    /// Growth factor applied to the previous confidence
    #[arg(long, env = "ONSEP_BETA", default_value_t = 0.2)]
    beta: f64,
    /// Top-k candidates kept per mining pass
    #[arg(long, env = "ONSEP_TOPK_RULES", default_value_t = 10)]
    topk_rules: usize,
    /// Confidence threshold below which rules are pruned
    #[arg(long, env = "ONSEP_CONF_MIN", default_value_t = 0.01)]
    conf_min: f64,
    #[arg(long, env = "ONSEP_SCORER", value_enum, default_value_t = ScorerArg::Stub)]
    scorer: ScorerArg,
    /// Base URL of the scoring service (http scorer only)
    #[arg(long, env = "ONSEP_SCORER_URL")]
    scorer_url: Option<String>,
    /// Preload a rule file before the run (inductive setting)
    #[arg(long, env = "ONSEP_RULES_IN")]
    rules_in: Option<PathBuf>,
    /// Write the final rule base here
    #[arg(long, env = "ONSEP_RULES_OUT")]
    rules_out: Option<PathBuf>,
    /// Write the machine-readable metrics file here
    #[arg(long, env = "ONSEP_METRICS_OUT")]
    metrics_out: Option<PathBuf>,
    /// Freeze the rule base for the whole run
    #[arg(long, env = "ONSEP_DISABLE_MINING")]
    disable_mining: bool,
    /// Intra-snapshot prediction parallelism
    #[arg(long, env = "ONSEP_WORKERS", default_value_t = 1)]
    workers: usize,
    #[arg(long, env = "ONSEP_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SynthArgs {
    /// Spec file in the flat key=value format
    #[arg(long, env = "ONSEP_SPEC")]
    spec: PathBuf,
    /// Output dataset directory
    #[arg(long, env = "ONSEP_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct ExportRulesArgs {
    /// Rule file to round-trip
    #[arg(long, env = "ONSEP_RULES")]
    rules: PathBuf,
    /// Dataset whose relation names anchor the rules
    #[arg(long, env = "ONSEP_DATASET_DIR")]
    dataset_dir: PathBuf,
    /// Re-serialized output path (stdout when omitted)
    #[arg(long, env = "ONSEP_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ImportCheckArgs {
    /// Rule file to check
    #[arg(long, env = "ONSEP_RULES")]
    rules: PathBuf,
    /// Target dataset to resolve against
    #[arg(long, env = "ONSEP_DATASET_DIR")]
    dataset_dir: PathBuf,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Synth(args) => cmd_synth(args),
        Command::ExportRules(args) => cmd_export_rules(args),
        Command::ImportCheck(args) => cmd_import_check(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("onsep: {e}");
            match e {
                OnsepError::Argument(_) | OnsepError::Parse { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn scorer_timeout() -> Duration {
    let ms = std::env::var("ONSEP_SCORER_TIMEOUT_MS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(30_000);
    Duration::from_millis(ms)
}

fn build_backend(cfg: &OnlineConfig) -> Result<Box<dyn ScorerBackend>, OnsepError> {
    match cfg.scorer {
        ScorerKind::Stub => Ok(Box::new(StubScorer)),
        ScorerKind::Http => {
            let url = cfg.scorer_url.as_deref().expect("validated");
            Ok(Box::new(HttpScorer::new(url, scorer_timeout())?))
        }
    }
}

fn print_report(report: &RunReport) {
    let m = &report.metrics;
    println!("queries     {}", m.queries);
    println!("hit@1       {:.4}", m.hit_at(1));
    println!("hit@3       {:.4}", m.hit_at(3));
    println!("hit@10      {:.4}", m.hit_at(10));
    println!("rules       {}", report.rulebase.len());
    println!(
        "throughput  {:.1} queries/s ({:.2?} total)",
        report.queries_per_second(),
        report.elapsed
    );
}

fn cmd_run(args: RunArgs) -> Result<ExitCode, OnsepError> {
    let cfg = OnlineConfig {
        history_len: args.history_len,
        lambda: args.lambda,
        alpha: args.alpha,
        theta: args.theta,
        beta: args.beta,
        topk_rules: args.topk_rules,
        conf_min: args.conf_min,
        scorer: match args.scorer {
            ScorerArg::Stub => ScorerKind::Stub,
            ScorerArg::Http => ScorerKind::Http,
        },
        scorer_url: args.scorer_url.clone(),
        seed: args.seed,
        mining_enabled: !args.disable_mining,
        workers: args.workers,
        record_predictions: false,
    };
    cfg.validate()?;
    println!(
        "config      L={} lambda={} alpha={} theta={} beta={} k={} conf_min={} scorer={} workers={} seed={} mining={}",
        cfg.history_len,
        cfg.lambda,
        cfg.alpha,
        cfg.theta,
        cfg.beta,
        cfg.topk_rules,
        cfg.conf_min,
        match cfg.scorer {
            ScorerKind::Stub => "stub",
            ScorerKind::Http => "http",
        },
        cfg.workers,
        cfg.seed,
        if cfg.mining_enabled { "on" } else { "off" }
    );

    let dataset = Dataset::load(&args.dataset_dir)?.add_inverse_relations()?;
    println!(
        "dataset     {} entities, {} relations, train/valid/test = {}/{}/{}",
        dataset.entity_count(),
        dataset.relation_count(),
        dataset.train.len(),
        dataset.valid.len(),
        dataset.test.len()
    );

    let initial_rules = match &args.rules_in {
        None => None,
        Some(path) => {
            let text = fs::read_to_string(path)?;
            let outcome = CausalRuleBase::import(&text, &dataset.relation_names)?;
            println!(
                "rules-in    {} rules loaded, {} dropped (unresolvable names)",
                outcome.rulebase.len(),
                outcome.dropped
            );
            Some(outcome.rulebase)
        }
    };

    let backend = build_backend(&cfg)?;
    let report = run_online(&dataset, &cfg, backend.as_ref(), initial_rules)?;
    print_report(&report);

    if let Some(path) = &args.metrics_out {
        fs::write(path, report.metrics.to_file_format())?;
        println!("metrics     written to {}", path.display());
    }
    if let Some(path) = &args.rules_out {
        fs::write(path, report.rulebase.export(&dataset.relation_names)?)?;
        println!("rules       written to {}", path.display());
    }
    if report.incomplete {
        eprintln!("onsep: run aborted early, metrics are partial");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_synth(args: SynthArgs) -> Result<ExitCode, OnsepError> {
    let spec = SyntheticSpec::parse(&fs::read_to_string(&args.spec)?)?;
    let dataset = generate_synthetic(&spec)?;
    dataset.write_to_dir(&args.out)?;
    println!(
        "synth       {} entities, {} relations, train/valid/test = {}/{}/{} -> {}",
        dataset.entity_count(),
        dataset.relation_count(),
        dataset.train.len(),
        dataset.valid.len(),
        dataset.test.len(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_export_rules(args: ExportRulesArgs) -> Result<ExitCode, OnsepError> {
    // resolve against the augmented vocabulary, the one runs mine over
    let dataset = Dataset::load(&args.dataset_dir)?.add_inverse_relations()?;
    let text = fs::read_to_string(&args.rules)?;
    let outcome = CausalRuleBase::import(&text, &dataset.relation_names)?;
    let exported = outcome.rulebase.export(&dataset.relation_names)?;
    eprintln!(
        "export-rules: {} rules kept, {} dropped",
        outcome.rulebase.len(),
        outcome.dropped
    );
    match &args.out {
        Some(path) => fs::write(path, exported)?,
        None => print!("{exported}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_import_check(args: ImportCheckArgs) -> Result<ExitCode, OnsepError> {
    // resolve against the augmented vocabulary, the one runs mine over
    let dataset = Dataset::load(&args.dataset_dir)?.add_inverse_relations()?;
    let text = fs::read_to_string(&args.rules)?;

    // distinct relation names appearing in the file vs. resolvable ones
    let mut seen = std::collections::HashSet::new();
    let mut resolvable = std::collections::HashSet::new();
    let known: std::collections::HashSet<&str> =
        dataset.relation_names.iter().map(String::as_str).collect();
    for line in text.lines().skip(1) {
        if line.is_empty() {
            continue;
        }
        for name in line.split('\t').take(2) {
            if seen.insert(name.to_string()) && known.contains(name) {
                resolvable.insert(name.to_string());
            }
        }
    }
    let outcome = CausalRuleBase::import(&text, &dataset.relation_names)?;
    let pct = if seen.is_empty() {
        100.0
    } else {
        100.0 * resolvable.len() as f64 / seen.len() as f64
    };
    println!(
        "relations   {}/{} resolvable ({:.1}%)",
        resolvable.len(),
        seen.len(),
        pct
    );
    println!(
        "rules       {} importable, {} dropped",
        outcome.rulebase.len(),
        outcome.dropped
    );
    Ok(ExitCode::SUCCESS)
}
