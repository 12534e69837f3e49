use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use ttdyn_cli::analysis::METRIC_NAMES;
use ttdyn_cli::output::{fmt_f64, write_classical, write_trajectory};
use ttdyn_cli::runner::oracle_samples;
use ttdyn_cli::{
    compare, parse_config, read_summary, run_experiment, slopes, write_outputs, ExperimentConfig, RunOptions,
    OUTPUT_DIR_ENV,
};

#[derive(Parser)]
#[command(name = "ttdyn", version, about = "Tensor-train propagation sweeps for exciton-phonon chains")]
struct Cli {
    /// Worker threads for independent sweep cells.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (scheme, rank, sub-steps) cell of a config.
    Propagate {
        config: PathBuf,
        /// Output directory; overrides the environment and the config.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Write zero CPU times so reruns give byte-identical summaries.
        #[arg(long)]
        no_timing: bool,
    },
    /// Write the dense and classical reference trajectories only.
    Oracle {
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Tabulate metric differences between two summaries (B - A).
    Compare { a: PathBuf, b: PathBuf },
    /// Fit log-log slopes of rmsd_state against dt per scheme and rank.
    Slopes {
        summary: PathBuf,
        #[arg(long, default_value_t = 1e-12)]
        min_error: f64,
        #[arg(long, default_value_t = 1e-3)]
        max_error: f64,
    },
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

fn config_at(path: &Path) -> Result<ExperimentConfig, Failure> {
    parse_config(path).map_err(|e| Failure::Config(anyhow::Error::new(e).context(path.display().to_string())))
}

fn output_dir(config: &ExperimentConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| config.output_dir.clone())
}

fn run_info(dir: &Path, config: &ExperimentConfig, threads: usize, timing: bool, failed: usize) -> anyhow::Result<()> {
    let text = format!(
        "ttdyn {}\nthreads = {threads}\nseed = {}\ntiming = {timing}\nfailed_cells = {failed}\n",
        env!("CARGO_PKG_VERSION"),
        config.seed
    );
    let path = dir.join("run_info.txt");
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn propagate(config: &Path, output: Option<PathBuf>, threads: usize, timing: bool) -> Result<(), Failure> {
    let cfg = config_at(config)?;
    let dir = output_dir(&cfg, output);
    let records = run_experiment(&cfg, &RunOptions { threads }).map_err(Failure::Runtime)?;
    let paths = write_outputs(&records, &dir, timing).map_err(Failure::Runtime)?;
    let failed = records.iter().filter(|r| r.failure.is_some()).count();
    run_info(&dir, &cfg, threads, timing, failed).map_err(Failure::Runtime)?;
    for r in &records {
        if let Some(f) = &r.failure {
            eprintln!("cell {} failed: {f}", r.file_name());
        }
    }
    println!("wrote {} files to {}", paths.len() + 1, dir.display());
    Ok(())
}

fn oracle(config: &Path, output: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = config_at(config)?;
    if !cfg.quantum_reference && !cfg.classical_reference {
        return Err(Failure::Config(anyhow::anyhow!("no reference is enabled or available for this system")));
    }
    let dir = output_dir(&cfg, output);
    let run = || -> anyhow::Result<()> {
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let (samples, refs) = oracle_samples(&cfg)?;
        let stem = format!("{}_N{}", cfg.system.kind, cfg.system.n_sites);
        if let Some(s) = samples {
            let path = dir.join(format!("{stem}_dense.csv"));
            write_trajectory(&path, cfg.system.n_sites, &s)?;
            println!("wrote {}", path.display());
        }
        if let Some(c) = &refs.classical {
            let path = dir.join(format!("{stem}_classical.csv"));
            write_classical(&path, &refs.times, c)?;
            println!("wrote {}", path.display());
        }
        Ok(())
    };
    run().map_err(Failure::Runtime)
}

fn compare_cmd(a: &Path, b: &Path) -> Result<(), Failure> {
    let ra = read_summary(a).map_err(Failure::Config)?;
    let rb = read_summary(b).map_err(Failure::Config)?;
    let cmp = compare(&ra, &rb);
    println!("kind,N,d,scheme,rank,sub_steps,{}", METRIC_NAMES.map(|m| format!("d_{m}")).join(","));
    for row in &cmp.matched {
        let a = &row.a;
        let diffs: Vec<String> = row.diffs.iter().map(|&x| fmt_f64(x)).collect();
        println!("{},{},{},{},{},{},{}", a.kind, a.n_sites, a.local_dim, a.scheme, a.rank, a.sub_steps, diffs.join(","));
    }
    for k in &cmp.only_a {
        eprintln!("only in {}: {k}", a.display());
    }
    for k in &cmp.only_b {
        eprintln!("only in {}: {k}", b.display());
    }
    Ok(())
}

fn slopes_cmd(summary: &Path, lo: f64, hi: f64) -> Result<(), Failure> {
    let rows = read_summary(summary).map_err(Failure::Config)?;
    println!("kind,N,scheme,rank,points,slope");
    for f in slopes(&rows, lo, hi) {
        let slope = f.slope.map_or("NaN".to_string(), |s| format!("{s:.4}"));
        println!("{},{},{},{},{},{}", f.kind, f.n_sites, f.scheme, f.rank, f.points, slope);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let threads = cli.threads.max(1);
    let result = match cli.command {
        Command::Propagate { config, output, no_timing } => propagate(&config, output, threads, !no_timing),
        Command::Oracle { config, output } => oracle(&config, output),
        Command::Compare { a, b } => compare_cmd(&a, &b),
        Command::Slopes { summary, min_error, max_error } => slopes_cmd(&summary, min_error, max_error),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
