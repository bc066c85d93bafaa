use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hsi_zeroshot::config::PipelineConfig;
use hsi_zeroshot::pipeline::{cmd_eval, cmd_pipeline, cmd_pseudo, cmd_render, cmd_train};
use hsi_zeroshot::Result;

/// Zero-shot hyperspectral classification pipeline.
///
/// Any config key can be overridden with `--section.key value`, for example
/// `--train.lambda2 0.25` or `--pseudo.scales "[1.0]"`.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; each stage derives its own stream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Use a generated scene and a simulated noisy scorer.
    #[arg(long, global = true)]
    synthetic: bool,

    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate fused pseudo-labels.
    Pseudo,
    /// Train the spectral classifier on the pseudo-labels.
    Train,
    /// Score a prediction against ground truth.
    Eval,
    /// Render label maps as PNG.
    Render,
    /// Run pseudo, train and eval in order.
    Pipeline,
}

/// Pulls `--a.b value` and `--a.b=value` pairs out of the argument list.
fn split_overrides(args: Vec<String>) -> (Vec<String>, Vec<(String, String)>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        match arg.strip_prefix("--") {
            Some(flag) if flag.split('=').next().is_some_and(|k| k.contains('.')) => {
                if let Some((k, v)) = flag.split_once('=') {
                    overrides.push((k.to_string(), v.to_string()));
                } else {
                    let v = it.next().unwrap_or_default();
                    overrides.push((flag.to_string(), v));
                }
            }
            _ => rest.push(arg),
        }
    }
    (rest, overrides)
}

fn run(cli: Cli, mut overrides: Vec<(String, String)>) -> Result<()> {
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(out) = &cli.out {
        overrides.push(("paths.out".into(), format!("{:?}", out.display().to_string())));
    }
    if cli.synthetic {
        overrides.push(("synthetic.enabled".into(), "true".into()));
    }
    let cfg = PipelineConfig::load(cli.config.as_deref(), &overrides).map_err(|e| e.in_stage("config"))?;
    match cli.command {
        Command::Pseudo => {
            let r = cmd_pseudo(&cfg, cli.force)?;
            if let Some(m) = r.metrics {
                println!("pseudo-labels: OA {:.2} AA {:.2} kappa {:.2}", m.oa, m.aa, m.kappa);
            }
        }
        Command::Train => {
            let r = cmd_train(&cfg, cli.force)?;
            if let (Some(w), Some(m)) = (r.warmup_metrics, r.metrics) {
                println!("warmup OA {:.2}, refined OA {:.2}", w.oa, m.oa);
            }
        }
        Command::Eval => {
            let m = cmd_eval(&cfg, cli.force)?;
            println!("OA {:.2} AA {:.2} kappa {:.2}", m.oa, m.aa, m.kappa);
        }
        Command::Render => {
            for p in cmd_render(&cfg, cli.force)? {
                println!("{}", p.display());
            }
        }
        Command::Pipeline => {
            let r = cmd_pipeline(&cfg, cli.force)?;
            if let Some(m) = r.pseudo.metrics {
                println!("pseudo-labels: OA {:.2} AA {:.2} kappa {:.2}", m.oa, m.aa, m.kappa);
            }
            match r.eval {
                Some(m) => println!("final: OA {:.2} AA {:.2} kappa {:.2}", m.oa, m.aa, m.kappa),
                None => println!("no ground truth; eval skipped"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let (args, overrides) = split_overrides(std::env::args().collect());
    let cli = Cli::parse_from(args);
    match run(cli, overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
