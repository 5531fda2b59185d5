use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pmd_core::config::ExperimentConfig;
use pmd_core::corpus::{dump, generate, load};
use pmd_core::model::{read_checkpoint, write_checkpoint};
use pmd_core::par::{with_threads, Exec};
use pmd_core::suite::{
    compare_schedulers, main_suite, run_suite, sweep_alpha, write_scheduler_outputs, write_suite_outputs,
    write_sweep_outputs, SuiteError, SuiteResults,
};
use pmd_core::trainer::evaluate;

#[derive(Parser)]
#[command(name = "pmd", version, about = "Pareto mutual distillation experiments at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML); built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Comma-separated seeds, overriding the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Run everything on the calling thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteName {
    Main,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment suite and write CSVs, checkpoints and a summary.
    Run {
        #[arg(long, value_enum, default_value = "main")]
        suite: SuiteName,
        #[command(flatten)]
        common: Common,
    },
    /// Repeat the configured uni/bi run for several alpha values.
    SweepAlpha {
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.4,0.6,0.8")]
        values: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the auto strategy under all four step-size schedules.
    CompareSchedulers {
        #[command(flatten)]
        common: Common,
    },
    /// Write the configured corpus as `corpus.tsv` plus its header.
    DumpCorpus {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint on the configured corpus (or a dumped one).
    EvalCheckpoint {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dumped corpus data file; generated from the config when omitted.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

/// Exit 1: bad input. Exit 2: failure while training or writing results.
enum Failure {
    Validation(String),
    Abort(String),
}

impl From<SuiteError> for Failure {
    fn from(e: SuiteError) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Abort(e.to_string())
        }
    }
}

fn init_logging() -> Result<(), Failure> {
    let level = std::env::var("PMD_LOG_LEVEL").unwrap_or_else(|_| "info".into());
    if !["error", "info", "debug"].contains(&level.as_str()) {
        return Err(Failure::Validation(format!(
            "PMD_LOG_LEVEL must be one of error, info, debug (got {level:?})"
        )));
    }
    env_logger::Builder::new()
        .parse_filters(&level)
        .format_timestamp(None)
        .init();
    Ok(())
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| Failure::Validation(e.to_string()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seeds) = &common.seeds {
        cfg.seeds = seeds.clone();
    }
    cfg.validate().map_err(|e| Failure::Validation(e.to_string()))?;
    Ok(cfg)
}

fn exec(common: &Common) -> Exec {
    if common.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    }
}

fn write_checkpoints(results: &SuiteResults, dir: &Path) -> Result<(), Failure> {
    let dir = dir.join("checkpoints");
    let io = |e: std::io::Error| Failure::Abort(format!("writing checkpoints: {e}"));
    fs::create_dir_all(&dir).map_err(io)?;
    for e in &results.entries {
        for r in &e.records {
            for (m, p) in r.final_params.iter().enumerate() {
                let path = dir.join(format!("{}-seed{}-model{}.ckpt", e.name, r.seed, m + 1));
                let f = fs::File::create(&path).map_err(io)?;
                write_checkpoint(p, BufWriter::new(f)).map_err(|e| Failure::Abort(e.to_string()))?;
            }
        }
    }
    Ok(())
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { suite: SuiteName::Main, common } => {
            let cfg = load_config(&common)?;
            let suite = main_suite(&cfg.train, &cfg.seeds);
            let results = with_threads(common.jobs, || run_suite(&suite, exec(&common)))?;
            write_suite_outputs(&results, &common.out)?;
            write_checkpoints(&results, &common.out)?;
            print!("{}", pmd_core::suite::summary_table(&results));
        }
        Command::SweepAlpha { values, common } => {
            let cfg = load_config(&common)?;
            let (results, rows) = with_threads(common.jobs, || sweep_alpha(&cfg.train, &values, &cfg.seeds, exec(&common)))?;
            write_sweep_outputs(&results, &rows, &common.out)?;
            for r in rows {
                println!("alpha {}: model-1 {:.4}, model-2 {:.4}", r.alpha, r.model_means[0], r.model_means[1]);
            }
        }
        Command::CompareSchedulers { common } => {
            let cfg = load_config(&common)?;
            let (results, rows) = with_threads(common.jobs, || compare_schedulers(&cfg.train, &cfg.seeds, exec(&common)))?;
            write_scheduler_outputs(&results, &rows, &common.out)?;
            for (e, r) in results.entries.iter().zip(rows) {
                println!("{}: model-1 {:.4}, model-2 {:.4}", e.name, r.model_means[0], r.model_means[1]);
            }
        }
        Command::DumpCorpus { common } => {
            let cfg = load_config(&common)?;
            let corpus = generate(&cfg.train.corpus).map_err(|e| Failure::Validation(e.to_string()))?;
            fs::create_dir_all(&common.out).map_err(|e| Failure::Abort(e.to_string()))?;
            let path = common.out.join("corpus.tsv");
            dump(&corpus, &path).map_err(|e| Failure::Abort(e.to_string()))?;
            println!("wrote {}", path.display());
        }
        Command::EvalCheckpoint { checkpoint, corpus, common } => {
            let cfg = load_config(&common)?;
            let corpus = match corpus {
                Some(p) => load(&p).map_err(|e| Failure::Validation(e.to_string()))?,
                None => generate(&cfg.train.corpus).map_err(|e| Failure::Validation(e.to_string()))?,
            };
            let f = fs::File::open(&checkpoint)
                .map_err(|e| Failure::Validation(format!("{}: {e}", checkpoint.display())))?;
            let params = read_checkpoint(std::io::BufReader::new(f)).map_err(|e| Failure::Validation(e.to_string()))?;
            let metrics = evaluate(&params, &corpus).map_err(|e| Failure::Validation(e.to_string()))?;
            println!("language,dev_ce,accuracy");
            for (l, m) in metrics.iter().enumerate() {
                println!("{l},{},{}", m.dev_ce, m.accuracy);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_logging().and_then(|_| execute(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Abort(msg)) => {
            eprintln!("training aborted: {msg}");
            ExitCode::from(2)
        }
    }
}
