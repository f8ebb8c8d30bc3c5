use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use safenum::harness::{
    emit_outputs, report, run_experiment, verify, ExperimentConfig, Series, Study, WORKERS_ENV,
};
use safenum::spnum::ScheduleMode;

#[derive(Parser)]
#[command(name = "safenum", version, about = "Safe pricing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a study and write its output directory.
    Run(RunArgs),
    /// Re-check the invariants of an output directory.
    Verify { dir: PathBuf },
    /// Recompute the figure data of an output directory.
    Report { dir: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// benchmark_binary, benchmark_real, ball, sharpness_sweep or custom.
    #[arg(long)]
    study: Option<Study>,
    /// Run a single seed.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma-separated seeds, or a half-open range `a..b`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// `paper` or `scaled:<factor>`.
    #[arg(long)]
    schedule_mode: Option<ScheduleMode>,
    /// TOML file; command-line flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a
            .trim()
            .parse()
            .map_err(|_| format!("bad seed range {s:?}"))?;
        let b: u64 = b
            .trim()
            .parse()
            .map_err(|_| format!("bad seed range {s:?}"))?;
        return Ok((a..b).collect());
    }
    s.split(',')
        .map(|v| v.trim().parse().map_err(|_| format!("bad seed {v:?}")))
        .collect()
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig, String> {
    let mut cfg = match (&args.config, args.study) {
        (Some(path), _) => ExperimentConfig::from_file(path).map_err(|e| e.to_string())?,
        (None, Some(study)) => ExperimentConfig::for_study(study),
        (None, None) => return Err("either --study or --config is required".into()),
    };
    if let (Some(study), Some(_)) = (args.study, &args.config) {
        if study != cfg.study {
            return Err(format!(
                "--study {study} contradicts the config file ({})",
                cfg.study
            ));
        }
    }
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(seeds) = &args.seeds {
        cfg.seeds = parse_seeds(seeds)?;
    }
    if let Some(h) = args.horizon {
        cfg.horizon = h;
    }
    if let Some(mode) = args.schedule_mode {
        cfg.schedule_mode = mode;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn print_series(series: &[Series]) {
    for s in series {
        let (Some(first), Some(last)) = (s.bands.first(), s.bands.last()) else {
            continue;
        };
        let mut label = format!("{:<16} {:<6}", s.figure, s.method);
        if let (Some(b), Some(g), Some(n)) = (s.beta, s.gamma, s.n) {
            label.push_str(&format!(" beta={b} Gamma={g} n={n}"));
        }
        println!(
            "{label}  k={}: {:.4e}  k={}: {:.4e} (+/- {:.2e}, {} runs)",
            first.k, first.mean, last.k, last.mean, last.std, last.count
        );
    }
}

fn run(args: RunArgs) -> Result<bool, String> {
    let cfg = build_config(&args)?;
    eprintln!(
        "running {} with {} seed(s), horizon {} ({}={})",
        cfg.study,
        cfg.seeds.len(),
        cfg.horizon,
        WORKERS_ENV,
        safenum::harness::worker_count()
    );
    let bundle = run_experiment(&cfg).map_err(|e| e.to_string())?;
    emit_outputs(&bundle, &args.out).map_err(|e| e.to_string())?;
    let failed: Vec<_> = bundle.failures().collect();
    for r in &failed {
        if let Some(f) = &r.failure {
            eprintln!("{}: {:?}: {}", r.id, f.kind, f.message);
        }
    }
    println!(
        "{} runs, {} failed, safety {}; wrote {}",
        bundle.runs.len(),
        failed.len(),
        if bundle.safety_ok() { "ok" } else { "VIOLATED" },
        args.out.display()
    );
    Ok(bundle.safety_ok())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Verify { dir } => verify(&dir).map_err(|e| e.to_string()).map(|rep| {
            for p in &rep.problems {
                eprintln!("{p}");
            }
            println!(
                "checked {} runs, {} trace rows: {} problem(s)",
                rep.runs_checked,
                rep.rows_checked,
                rep.problems.len()
            );
            rep.ok()
        }),
        Command::Report { dir } => report(&dir).map_err(|e| e.to_string()).map(|series| {
            print_series(&series);
            true
        }),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
