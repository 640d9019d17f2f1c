use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use rspo_core::harness::{
    apply_env_overrides, load_config, parse_ablation_matrix, run_ablation, run_experiment, RunConfig,
};
use rspo_core::oracle::{run_audit, AuditConfig, CheckStatus};
use rspo_core::tasks::{generate_instances, write_instances, TaskKind, TaskParams};

/// Relative score policy optimization on toy masked diffusion models.
#[derive(Parser)]
#[command(name = "rspo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run and print its summary as JSON.
    Train(TrainArgs),
    /// Check the implementation against brute-force and closed-form oracles.
    Audit(AuditArgs),
    /// Run the lambda x centering x reference grid.
    Ablate(AblateArgs),
    /// Write task instances as JSON Lines.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// JSON config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    group_size: Option<usize>,
    #[arg(long)]
    k_masks: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    no_centering: bool,
    #[arg(long)]
    no_reference: bool,
    #[arg(long)]
    normalize_adv: bool,
    /// countdown, sudoku4 or arith.
    #[arg(long)]
    task: Option<String>,
    /// Run directory for metrics, checkpoints and the summary.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print the report as JSON instead of one line per check.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct AblateArgs {
    /// JSON matrix: {"base": {...}, "lambdas": [...], "centering": [...], "reference": [...]}.
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    task: String,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_task(name: &str) -> Result<TaskKind> {
    TaskKind::parse(name).with_context(|| format!("unknown task {name:?} (expected countdown, sudoku4 or arith)"))
}

/// Config file, then `RSPO_*` environment variables, then flags.
fn train_config(args: &TrainArgs) -> Result<RunConfig> {
    let base = match &args.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    let mut cfg = apply_env_overrides(&base, std::env::vars())?;
    if let Some(v) = args.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = args.group_size {
        cfg.group_size = v;
    }
    if let Some(v) = args.k_masks {
        cfg.k_masks = v;
    }
    if let Some(v) = args.steps {
        cfg.steps = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if args.no_centering {
        cfg.centering = false;
    }
    if args.no_reference {
        cfg.reference = false;
    }
    if args.normalize_adv {
        cfg.normalize_adv = true;
    }
    if let Some(name) = &args.task {
        cfg.task = parse_task(name)?;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = Some(out.to_string_lossy().into_owned());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train(args: &TrainArgs) -> Result<ExitCode> {
    let cfg = train_config(args)?;
    let outcome = run_experiment(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&outcome.summary)?);
    Ok(ExitCode::SUCCESS)
}

fn audit(args: &AuditArgs) -> Result<ExitCode> {
    let report = run_audit(&AuditConfig {
        seed: args.seed,
        ..AuditConfig::default()
    })?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        for c in &report.checks {
            let tag = match c.status {
                CheckStatus::Pass => "PASS",
                CheckStatus::Fail => "FAIL",
                CheckStatus::Report => "INFO",
            };
            println!("{tag} {}: {}", c.name, c.detail);
        }
    }
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn ablate(args: &AblateArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&args.matrix).with_context(|| format!("reading {}", args.matrix.display()))?;
    let mut matrix = parse_ablation_matrix(&text)?;
    matrix.base = apply_env_overrides(&matrix.base, std::env::vars())?;
    if let Some(out) = &args.out {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    }
    let rows = run_ablation(&matrix, args.out.as_deref())?;
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "{:<32} {:>10} {:>10} {:>12} {:>12}", "run", "init", "final", "|offset|", "var_delta")?;
    for r in &rows {
        let s = &r.summary;
        writeln!(
            stdout,
            "{:<32} {:>10.4} {:>10.4} {:>12.3e} {:>12.3e}",
            r.name,
            s.init_sampled_reward,
            s.final_sampled_reward,
            s.mean_abs_batch_mean_offset.unwrap_or(f64::NAN),
            s.mean_last10_var_delta.unwrap_or(f64::NAN),
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

fn generate(args: &GenerateArgs) -> Result<ExitCode> {
    let params = TaskParams::defaults(parse_task(&args.task)?);
    let instances = generate_instances(&params, args.count, args.seed)?;
    match &args.out {
        Some(path) => write_to(path, |w| Ok(write_instances(w, &instances)?))?,
        None => write_instances(&mut io::stdout().lock(), &instances)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn write_to(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => train(a),
        Command::Audit(a) => audit(a),
        Command::Ablate(a) => ablate(a),
        Command::Generate(a) => generate(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config() {
        let cli = Cli::try_parse_from([
            "rspo",
            "train",
            "--lambda",
            "0.5",
            "--no-centering",
            "--task",
            "sudoku4",
            "--k-masks",
            "4",
        ])
        .unwrap();
        let Command::Train(args) = cli.command else { panic!() };
        let cfg = train_config(&args).unwrap();
        assert_eq!(cfg.lambda, 0.5);
        assert!(!cfg.centering && cfg.reference);
        assert_eq!(cfg.task, TaskKind::Sudoku4);
        assert_eq!(cfg.k_masks, 4);
    }

    #[test]
    fn bad_task_is_rejected() {
        assert!(parse_task("chess").is_err());
    }
}
