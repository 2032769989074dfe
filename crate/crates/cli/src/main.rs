use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use gnn_core::experiment::{
    cmd_benchmark, cmd_evaluate_checkpoint, cmd_generate, cmd_train, Architecture, ExperimentConfig,
    ExperimentError, CHECKPOINT_FILE,
};
use gnn_core::{Error, SamplingKind};

#[derive(Parser)]
#[command(name = "gnn", version, about = "Graph neural networks on graph shift operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw the graph and write the train/validation/test datasets.
    Generate(Common),
    /// Train the configured architecture on generated data.
    Train(Common),
    /// Evaluate a checkpoint on the test split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Defaults to model.ckpt in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run graphs x realizations cells and report mean and std accuracy.
    Benchmark {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        graphs: Option<usize>,
        #[arg(long)]
        realizations: Option<usize>,
        /// Concurrent cells; 0 uses every core.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run the oracle and property suites.
    Selftest,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults reproduce the SBM source-localization setup.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed_graph: Option<u64>,
    #[arg(long)]
    seed_data: Option<u64>,
    #[arg(long)]
    seed_init: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_arch)]
    arch: Option<Architecture>,
    #[arg(long, value_parser = parse_sampling)]
    sampling: Option<SamplingKind>,
}

fn parse_arch(s: &str) -> Result<Architecture, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_sampling(s: &str) -> Result<SamplingKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl Common {
    fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed_graph {
            c.seeds.graph = s;
        }
        if let Some(s) = self.seed_data {
            c.seeds.data = s;
        }
        if let Some(s) = self.seed_init {
            c.seeds.init = s;
        }
        if let Some(o) = &self.out {
            c.output_dir = o.clone();
        }
        if let Some(a) = self.arch {
            c.architecture = a;
        }
        if let Some(s) = self.sampling {
            c.sampling = s;
        }
        c.validate()?;
        Ok(c)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate(common) => {
            let c = common.resolve()?;
            let s = cmd_generate(&c)?;
            let [tr, va, te] = s.split_sizes;
            println!(
                "graph: {} nodes, sources {:?}; datasets {tr}/{va}/{te} written to {}",
                s.graph.adjacency.n_nodes(),
                s.graph.sources,
                c.output_dir.display()
            );
        }
        Command::Train(common) => {
            let c = common.resolve()?;
            let s = cmd_train(&c)?;
            let first = s.trace.train_loss.first().copied().unwrap_or(f64::NAN);
            let last = s.trace.train_loss.last().copied().unwrap_or(f64::NAN);
            println!(
                "{} / {}: {} steps, training loss {first:.4} -> {last:.4}, {:.1} s",
                c.architecture,
                c.sampling,
                s.trace.steps(),
                s.seconds
            );
        }
        Command::Evaluate { common, checkpoint } => {
            let c = common.resolve()?;
            let path = checkpoint.unwrap_or_else(|| c.output_dir.join(CHECKPOINT_FILE));
            let r = cmd_evaluate_checkpoint(&c, &path)?;
            println!("test accuracy {:.4}, loss {:.4}", r.mean_accuracy, r.cells[0].test_loss);
        }
        Command::Benchmark { common, graphs, realizations, workers } => {
            let mut c = common.resolve()?;
            if let Some(g) = graphs {
                c.benchmark.n_graphs = g;
            }
            if let Some(r) = realizations {
                c.benchmark.n_realizations = r;
            }
            if let Some(w) = workers {
                c.benchmark.workers = w;
            }
            let r = cmd_benchmark(&c)?;
            let text = r.to_text();
            let table = text.split("[table]\n").nth(1).and_then(|t| t.split("\n[config]").next()).unwrap_or("");
            print!("{table}");
        }
        Command::Selftest => {
            let mut failed = 0;
            for outcome in gnn_core::selftest::run_all() {
                println!("{outcome}");
                failed += usize::from(!outcome.passed);
            }
            if failed > 0 {
                anyhow::bail!(SelftestFailed(failed));
            }
        }
    }
    Ok(())
}

#[derive(Debug)]
struct SelftestFailed(usize);

impl std::fmt::Display for SelftestFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} self-test check(s) failed", self.0)
    }
}

impl std::error::Error for SelftestFailed {}

fn code_for(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Dimension(_) | Error::InvalidInput(_) => 1,
        Error::NonFinite(_) | Error::Convergence(..) => 2,
        Error::Io(_) | Error::Format(_) => 3,
    }
}

/// 1 configuration error, 2 numerical abort (or failed self-test), 3 I/O error.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<ExperimentError>() {
            return match e {
                ExperimentError::Abort(_) => 2,
                ExperimentError::Core(e) => code_for(e),
            };
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return code_for(e);
        }
        if cause.downcast_ref::<SelftestFailed>().is_some() {
            return 2;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    1
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
