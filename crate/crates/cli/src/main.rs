use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ids_core::pipeline::{self, ConfigError, PipelineError, RunConfig};

#[derive(Parser)]
#[command(name = "ids", version, about = "DBN-based network intrusion detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit encoder, PCA and network on a labeled split and save the model
    Train(Opts),
    /// Score a labeled split with a saved model
    Eval(Opts),
    /// Classify a record stream; suspicious verdicts are appended to --report
    Detect(Opts),
    /// Export the first three principal components as CSV
    Project(Opts),
}

/// Every flag is optional here; each command checks what it needs.
/// Flags override values read from `--config`.
#[derive(Args)]
struct Opts {
    /// `key = value` file with the same keys as the flags
    #[arg(long)]
    config: Option<PathBuf>,
    /// kdd99, nslkdd or unswnb15
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    train: Option<String>,
    #[arg(long)]
    test: Option<String>,
    /// Record source for detect/project (stdin when omitted for detect)
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    report: Option<String>,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<String>,
    /// Label taxonomy file replacing the built-in mapping
    #[arg(long)]
    taxonomy: Option<String>,
    /// Fraction of variance PCA keeps
    #[arg(long)]
    alpha: Option<String>,
    /// Hidden layer widths, e.g. 64,32
    #[arg(long)]
    layers: Option<String>,
    #[arg(long = "pretrain-lr")]
    pretrain_lr: Option<String>,
    #[arg(long = "pretrain-epochs")]
    pretrain_epochs: Option<String>,
    #[arg(long = "cd-k")]
    cd_k: Option<String>,
    /// Fine-tuning learning rate
    #[arg(long)]
    lr: Option<String>,
    /// Fine-tuning epochs
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long = "max-train-rows")]
    max_train_rows: Option<String>,
}

impl Opts {
    fn into_config(self) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let flags = [
            ("dataset", self.dataset),
            ("train", self.train),
            ("test", self.test),
            ("input", self.input),
            ("model", self.model),
            ("report", self.report),
            ("out", self.out),
            ("taxonomy", self.taxonomy),
            ("alpha", self.alpha),
            ("layers", self.layers),
            ("pretrain-lr", self.pretrain_lr),
            ("pretrain-epochs", self.pretrain_epochs),
            ("cd-k", self.cd_k),
            ("lr", self.lr),
            ("epochs", self.epochs),
            ("batch", self.batch),
            ("seed", self.seed),
            ("max-train-rows", self.max_train_rows),
        ];
        for (key, value) in flags {
            if let Some(value) = value {
                cfg.set(key, &value)?;
            }
        }
        Ok(cfg)
    }
}

fn run(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Train(opts) => {
            let cfg = opts.into_config()?;
            let outcome = pipeline::cmd_train(&cfg)?;
            let acc = outcome.report.fine_tune_accuracy.last().copied();
            eprintln!(
                "model written to {} (input width {}, layers {:?})",
                outcome.model_path.display(),
                outcome.model.pca.rank,
                outcome.model.network.layer_sizes()
            );
            if let Some(acc) = acc {
                eprintln!("final training accuracy {acc:.4}");
            }
            eprintln!("training report written to {}", outcome.report_path.display());
        }
        Command::Eval(opts) => {
            let cfg = opts.into_config()?;
            let outcome = pipeline::cmd_eval(&cfg)?;
            print!("{}", outcome.metrics.to_text());
            println!("{}", serde_json::to_string(&outcome.record).expect("record serializes"));
        }
        Command::Detect(opts) => {
            let cfg = opts.into_config()?;
            let summary = pipeline::cmd_detect(&cfg, |line, err| eprintln!("skipping line {line}: {err}"))?;
            eprintln!(
                "processed {} records: {} normal, {} suspicious, {} skipped",
                summary.processed, summary.normal, summary.suspicious, summary.skipped
            );
        }
        Command::Project(opts) => {
            let cfg = opts.into_config()?;
            let rows = pipeline::cmd_project(&cfg)?;
            eprintln!("wrote {rows} projected rows");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
