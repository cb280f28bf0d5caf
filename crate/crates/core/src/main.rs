use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use fincluster::pipeline::{run_all, run_stage, verify_workspace, ExportFormat, PipelineConfig, Stage, VerifyStatus};
use fincluster::synth::synthetic_panel_csv;

#[derive(Parser)]
#[command(name = "fincluster", version, about = "Cluster insurers by the temporal behaviour of their financial ratios")]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workspace: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Load the raw quarterly panel.
    Ingest {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Compute and standardize the ratio tensor.
    Ratios,
    /// Train the LSTM autoencoder and encode latent series.
    Fuse,
    /// Pairwise DTW distance matrix.
    Distances,
    /// Cluster at the configured `m`.
    Cluster {
        #[arg(long)]
        m: Option<usize>,
    },
    /// Silhouette and distortion sweep over `m`.
    Evaluate {
        #[arg(long)]
        m_min: Option<usize>,
        #[arg(long)]
        m_max: Option<usize>,
    },
    /// Bundle assignments, curves and heatmap tables.
    Report,
    /// Run every stage in order.
    Run {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Re-hash every stage's inputs and outputs against its manifest.
    Verify,
    /// Print the effective configuration as TOML.
    Config,
    /// Write a seeded synthetic raw panel.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 28)]
        companies: usize,
        #[arg(long, default_value_t = 41)]
        periods: usize,
    },
}

fn effective_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = &cli.workspace {
        cfg.workspace = w.clone();
    }
    if let Some(f) = cli.format {
        cfg.format = match f {
            FormatArg::Csv => ExportFormat::Csv,
            FormatArg::Json => ExportFormat::Json,
        };
    }
    match &cli.command {
        Command::Ingest { input: Some(i) } | Command::Run { input: Some(i) } => cfg.ingest.input = Some(i.clone()),
        Command::Cluster { m: Some(m) } => cfg.cluster.m = *m,
        Command::Evaluate { m_min, m_max } => {
            if let Some(v) = m_min {
                cfg.evaluate.m_min = *v;
            }
            if let Some(v) = m_max {
                cfg.evaluate.m_max = *v;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = effective_config(&cli)?;
    let stage = match &cli.command {
        Command::Ingest { .. } => Stage::Ingest,
        Command::Ratios => Stage::Ratios,
        Command::Fuse => Stage::Fuse,
        Command::Distances => Stage::Distances,
        Command::Cluster { .. } => Stage::Cluster,
        Command::Evaluate { .. } => Stage::Evaluate,
        Command::Report => Stage::Report,
        Command::Run { .. } => {
            for m in run_all(&cfg)? {
                println!("{}: {} outputs", m.stage, m.outputs.len());
            }
            return Ok(());
        }
        Command::Verify => {
            let mut failed = false;
            for (stage, status) in verify_workspace(&cfg.workspace) {
                match status {
                    VerifyStatus::Ok => println!("{stage}: ok"),
                    VerifyStatus::Absent => println!("{stage}: not run"),
                    VerifyStatus::Failed(e) => {
                        failed = true;
                        println!("{stage}: FAILED ({e})");
                    }
                }
            }
            if failed {
                bail!("workspace verification failed");
            }
            return Ok(());
        }
        Command::Config => {
            print!("{}", cfg.to_toml());
            return Ok(());
        }
        Command::Synth { out, companies, periods } => {
            if *companies == 0 || *periods == 0 {
                bail!("companies and periods must be positive");
            }
            std::fs::write(out, synthetic_panel_csv(*companies, *periods, cfg.seed))
                .with_context(|| format!("writing {}", out.display()))?;
            return Ok(());
        }
    };
    let m = run_stage(stage, &cfg)?;
    for a in &m.outputs {
        println!("{}", a.path.trim_start_matches("ws:"));
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
