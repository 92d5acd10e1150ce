use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use positionforge_cli::{load, run_all, run_stage, write_synthetic, CliError, Outcome, Stage};

#[derive(Parser)]
#[command(
    name = "positionforge",
    version,
    about = "Bill-position labels and LPscores from lobbying reports"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and normalize reports, bills and entities.
    Ingest(Common),
    /// Classify report lines into bill positions.
    Annotate(Common),
    /// Build the heterogeneous graph and node features.
    BuildGraph(Common),
    /// Train the link-type classifier.
    TrainGnn(Common),
    /// Add high-confidence classifier labels to unlabeled pairs.
    Label(Common),
    /// Fit the item response model and score groups.
    Irt(Common),
    /// Stage tables, subject ratios, firm-size regressions.
    Analyze(Common),
    /// Run every stage in order.
    All(Common),
    /// Write the seeded synthetic corpus and a matching config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20240501)]
        seed: u64,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Override any config value, e.g. `--set gnn.epochs=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_parser = ["rule", "llm"])]
    classifier: Option<String>,
    #[arg(long)]
    graph_config: Option<u8>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    proxy_threshold: Option<f64>,
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long)]
    strict: bool,
}

impl Common {
    fn overrides(&self) -> Vec<String> {
        let mut o = self.set.clone();
        let json = |s: &str| serde_json::to_string(s).expect("string");
        if let Some(v) = self.seed {
            o.push(format!("seed={v}"));
        }
        if let Some(v) = &self.output {
            o.push(format!("paths.output={}", json(&v.to_string_lossy())));
        }
        if let Some(v) = &self.classifier {
            o.push(format!("classifier={}", json(v)));
        }
        if let Some(v) = self.graph_config {
            o.push(format!("graph_config={v}"));
        }
        if let Some(v) = self.epochs {
            o.push(format!("gnn.epochs={v}"));
        }
        if let Some(v) = self.proxy_threshold {
            o.push(format!("proxy_threshold={v}"));
        }
        if let Some(v) = self.bootstrap {
            o.push(format!("analysis.bootstrap={v}"));
        }
        if self.strict {
            o.push("strict=true".into());
        }
        o
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (stage, common) = match cli.command {
        Command::Synth { out, seed } => {
            write_synthetic(&out, seed)?;
            println!("wrote synthetic corpus to {}", out.display());
            return Ok(());
        }
        Command::Ingest(c) => (Some(Stage::Ingest), c),
        Command::Annotate(c) => (Some(Stage::Annotate), c),
        Command::BuildGraph(c) => (Some(Stage::BuildGraph), c),
        Command::TrainGnn(c) => (Some(Stage::TrainGnn), c),
        Command::Label(c) => (Some(Stage::Label), c),
        Command::Irt(c) => (Some(Stage::Irt), c),
        Command::Analyze(c) => (Some(Stage::Analyze), c),
        Command::All(c) => (None, c),
    };
    let loaded = load(&common.config, &common.overrides())?;
    let report = |s: Stage, o: Outcome| match o {
        Outcome::Ran => println!("{s}: done"),
        Outcome::UpToDate => println!("{s}: up to date"),
    };
    match stage {
        Some(s) => report(s, run_stage(&loaded, s)?),
        None => {
            for (s, o) in run_all(&loaded)? {
                report(s, o);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
