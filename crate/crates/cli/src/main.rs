use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use cpsflow::learners::{LinearLearner, TreeLearner};
use cpsflow::remote::{serve, ServerConfig, ServerHandle};
use cpsflow_cli::{config, execute, load_config, load_dataset, load_model, predict, write_outputs, CliError, ScenarioLearner};

#[derive(Parser)]
#[command(name = "cpsflow", version, about = "Learn models of cyber-physical systems from declarative pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a pipeline config and write report.json and the model file.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the built-in one-tank case study.
    Watertank {
        #[arg(long, value_enum, default_value = "tree")]
        learner: ScenarioLearner,
        #[arg(long, default_value_t = 5)]
        max_depth: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Serve a native learner over the remote protocol.
    ServeLearner {
        #[arg(long)]
        listen: String,
        #[arg(long, default_value_t = 8)]
        max_sessions: usize,
        #[arg(long, value_enum, default_value = "linear")]
        learner: ServedLearner,
        #[arg(long, default_value_t = 5)]
        max_depth: usize,
    },
    /// Predict with a saved model; writes CSV to stdout.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// CSV or JSON file holding the model's input columns.
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ServedLearner {
    Linear,
    Tree,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { config, out, seed } => {
            let mut cfg = load_config(&config)?;
            if seed.is_some() {
                cfg.seed = seed;
            }
            let dir = out
                .or_else(|| cfg.output.as_ref().map(|o| o.dir.clone()))
                .unwrap_or_else(|| PathBuf::from("out"));
            run(&cfg, &dir)
        }
        Command::Watertank { learner, max_depth, out } => run(&config::watertank(learner, max_depth), &out),
        Command::Validate { config } => {
            let path = config;
            let problems = match cpsflow_cli::config::load(&path) {
                Ok(_) => vec![],
                Err(p) => p,
            };
            println!("{}", serde_json::json!({ "valid": problems.is_empty(), "diagnostics": problems }));
            if problems.is_empty() {
                Ok(())
            } else {
                Err(CliError::Config(problems))
            }
        }
        Command::ServeLearner {
            listen,
            max_sessions,
            learner,
            max_depth,
        } => {
            let config = ServerConfig {
                max_sessions,
                ..ServerConfig::default()
            };
            let handle: ServerHandle = match learner {
                ServedLearner::Linear => serve(LinearLearner, &listen, config),
                ServedLearner::Tree => {
                    let tree = TreeLearner::new(max_depth, 1).map_err(cpsflow::Error::from)?;
                    serve(tree, &listen, config)
                }
            }
            .map_err(cpsflow::Error::from)?;
            println!("listening on {}", handle.address());
            let _ = std::io::stdout().flush();
            handle.wait();
            Ok(())
        }
        Command::Predict { model, input } => {
            let model = load_model(&model)?;
            let inputs = load_dataset(&input)?;
            let out = predict(&model, &inputs)?;
            let stdout = std::io::stdout();
            cpsflow::data::write_csv(&out, stdout.lock(), b',').map_err(cpsflow::Error::from)?;
            Ok(())
        }
    }
}

fn run(cfg: &cpsflow_cli::PipelineConfig, dir: &std::path::Path) -> Result<(), CliError> {
    let output = execute(cfg)?;
    write_outputs(&output, dir)?;
    print!("{}", output.report.to_json().map_err(|e| CliError::Io {
        path: dir.to_owned(),
        message: e.to_string(),
    })?);
    Ok(())
}
