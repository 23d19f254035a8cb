use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use specvit_harness::{
    evaluate, generate, init_workers, plot_predictions, render_samples, run_experiment, train_all, EvalReport,
    ExperimentConfig, HarnessError, Layout, Method,
};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "specvit", version, about = "Spectrogram ViT forecasting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated subset of methods, e.g. `vit-num-spec,naive`.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the datasets and write the task cache.
    Gen(Common),
    /// Write strip, spectrogram, composed and lineplot images for a few tasks.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3)]
        count: usize,
    },
    /// Train the configured ViT variants.
    Train(Common),
    /// Score every method on the test split and write the report.
    Eval(Common),
    /// Re-render report.csv and report.md from report.json.
    Report(Common),
    /// Draw forecast overlays for a few test tasks.
    Plot {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 4)]
        count: usize,
    },
    /// gen, train and eval in one go.
    Run(Common),
}

fn load(common: &Common) -> Result<(ExperimentConfig, Layout), HarnessError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(list) = &common.methods {
        cfg.methods = list.iter().map(|m| m.parse::<Method>()).collect::<Result<_, _>>()?;
    }
    cfg.validate()?;
    let layout = Layout::new(&cfg.output_dir);
    Ok((cfg, layout))
}

fn execute(command: &Command) -> Result<(), HarnessError> {
    init_workers()?;
    match command {
        Command::Gen(c) => {
            let (cfg, layout) = load(c)?;
            generate(&cfg, &layout)
        }
        Command::Render { common, count } => {
            let (cfg, layout) = load(common)?;
            for p in render_samples(&cfg, &layout, *count)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Train(c) => {
            let (cfg, layout) = load(c)?;
            train_all(&cfg, &layout)
        }
        Command::Eval(c) => {
            let (cfg, layout) = load(c)?;
            let report = evaluate(&cfg, &layout, &BTreeMap::new())?;
            print!("{}", report.to_markdown());
            Ok(())
        }
        Command::Report(c) => {
            let (_, layout) = load(c)?;
            let report = EvalReport::load(&layout.root)?;
            report.save_tables(&layout.root)?;
            print!("{}", report.to_markdown());
            Ok(())
        }
        Command::Plot { common, count } => {
            let (cfg, layout) = load(common)?;
            for p in plot_predictions(&cfg, &layout, *count)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Run(c) => {
            let (cfg, layout) = load(c)?;
            let report = run_experiment(&cfg, &layout)?;
            print!("{}", report.to_markdown());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli.command).context("specvit failed") {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err.downcast_ref::<HarnessError>().map_or(1, HarnessError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
