use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use invdes::commands::{self, Command, Options};
use invdes::{io, Error};

/// Layout-aware inverse design of analog circuits: dataset generation,
/// topology classification, graph surrogate training and parameter search.
///
/// Results are printed to stdout as JSON, logs go to stderr. Exit status is
/// 0 on success, 1 on a runtime failure and 2 on bad flags.
#[derive(Debug, Parser)]
#[command(name = "invdes", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// JSON-lines dataset to read.
    #[arg(long, global = true, value_name = "FILE")]
    data: Option<PathBuf>,
    /// Output file (dataset, result JSON, graph) or model directory.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Model directory to read.
    #[arg(long, global = true, value_name = "DIR")]
    model: Option<PathBuf>,
    /// Random seed.
    #[arg(long, global = true, default_value_t = commands::DEFAULT_SEED)]
    seed: u64,
    /// Maximum training epochs.
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Training batch size.
    #[arg(long, global = true)]
    batch: Option<usize>,
    /// Learning rate (training), or base step size in box coordinates (design).
    #[arg(long, global = true)]
    lr: Option<f64>,
    /// Topology code or class id; `auto` lets the classifier pick (design);
    /// comma-separated oracle families for gen-data.
    #[arg(long, global = true)]
    topology: Option<String>,
    /// Target performance JSON, metric name to value.
    #[arg(long, global = true, value_name = "FILE")]
    target: Option<PathBuf>,
    /// Netlist file.
    #[arg(long, global = true, value_name = "FILE")]
    netlist: Option<PathBuf>,
    /// Parameter values JSON, name to SI value or literal such as "10u".
    #[arg(long, global = true, value_name = "FILE")]
    params: Option<PathBuf>,
    /// Per-step optimization trace (JSON lines) for design.
    #[arg(long, global = true, value_name = "FILE")]
    trace: Option<PathBuf>,
    /// Topology registry directory. Defaults to $FALCON_REGISTRY, then the
    /// bundled registry.
    #[arg(long, global = true, value_name = "DIR")]
    registry: Option<PathBuf>,
    /// Samples per oracle family for gen-data.
    #[arg(long, global = true)]
    n: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Sub {
    /// Sample oracle families into a JSON-lines dataset.
    GenData,
    /// Train the topology classifier (--data, --out).
    TrainClassifier,
    /// Train the graph forward model (--data, --out).
    TrainGnn,
    /// Retrain only the output head on new data (--model, --data, --out).
    Finetune,
    /// Forward prediction (--model, --topology, --params) or topology
    /// prediction (--model, --target).
    Predict,
    /// Inverse design for a target (--model, --target, --topology).
    Design,
    /// Layout estimate and rule check (--netlist or --topology, --params).
    LayoutReport,
    /// Circuit graph as JSON, or DOT with --out x.dot (--netlist or --topology).
    ExportGraph,
    /// Score saved models on a dataset (--model, --data).
    Eval,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::GenData => Command::GenData,
            Sub::TrainClassifier => Command::TrainClassifier,
            Sub::TrainGnn => Command::TrainGnn,
            Sub::Finetune => Command::Finetune,
            Sub::Predict => Command::Predict,
            Sub::Design => Command::Design,
            Sub::LayoutReport => Command::LayoutReport,
            Sub::ExportGraph => Command::ExportGraph,
            Sub::Eval => Command::Eval,
        }
    }
}

fn fail(e: &Error) -> ExitCode {
    let doc = serde_json::json!({"error": {"kind": e.kind(), "message": e.to_string()}});
    eprintln!("{doc}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let opts = Options {
        data: cli.data,
        out: cli.out,
        model: cli.model,
        seed: Some(cli.seed),
        epochs: cli.epochs,
        batch: cli.batch,
        lr: cli.lr,
        topology: cli.topology,
        target: cli.target,
        netlist: cli.netlist,
        params: cli.params,
        trace: cli.trace,
        registry: cli.registry,
        n: cli.n,
    };
    let cmd = Command::from(cli.command);
    if cmd == Command::GenData && opts.out.is_none() {
        return match commands::gen_data_records(&opts) {
            Ok(records) => match io::write_records(std::io::stdout().lock(), &records) {
                Ok(()) => ExitCode::SUCCESS,
                Err(source) => fail(&Error::Io {
                    path: PathBuf::from("<stdout>"),
                    source,
                }),
            },
            Err(e) => fail(&e),
        };
    }
    match commands::run(cmd, &opts) {
        Ok(doc) => {
            let mut out = std::io::stdout().lock();
            let _ = writeln!(out, "{}", serde_json::to_string_pretty(&doc).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
