use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use specvi_core::Task;

mod bench_cmd;
mod report_cmd;
mod run_cmd;

#[derive(Parser)]
#[command(name = "spec-harness", version, about = "Tool-augmented inspection harness for 1-D spectra")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic candidate pool and catalog for one task.
    Synth(bench_cmd::SynthArgs),
    /// Build train/test splits from a pool via weak-classifier rejection sampling.
    Build(bench_cmd::BuildArgs),
    /// Run policy rollouts over benchmark items.
    Rollout(run_cmd::RolloutArgs),
    /// Score trajectories with an LLM judge.
    Judge(run_cmd::JudgeArgs),
    /// Compute Acc / F1 per task from a predictions table.
    Eval(report_cmd::EvalArgs),
    /// Export rewards, advantages and loss masks for RL.
    ExportRl(report_cmd::ExportArgs),
    /// Compare two score tables (Spearman and score distributions).
    Agreement(report_cmd::AgreementArgs),
    /// Serve an archive to reviewers and record their scores.
    Serve(ServeArgs),
    /// Render one spectrum range to PNG.
    Render(RenderArgs),
}

#[derive(clap::Args)]
struct ServeArgs {
    /// Directory holding *.traj.jsonl and assets/.
    #[arg(long)]
    archive: PathBuf,
    /// Append-only annotation log.
    #[arg(long)]
    store: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: String,
    /// Include gold labels in trajectory documents.
    #[arg(long)]
    show_gold: bool,
}

#[derive(clap::Args)]
struct RenderArgs {
    #[arg(long)]
    spectrum: PathBuf,
    #[arg(long)]
    min: Option<f64>,
    #[arg(long)]
    max: Option<f64>,
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

pub fn parse_task(s: &str) -> Result<Task, String> {
    s.parse::<Task>().map_err(|e| e.to_string())
}

fn render(args: RenderArgs) -> anyhow::Result<()> {
    let spec = specvi_core::load_spectrum(&args.spectrum)?;
    let full = spec.full_range();
    let range = specvi_core::WavelengthRange::new(args.min.unwrap_or(full.min()), args.max.unwrap_or(full.max()))?;
    let view = specvi_core::tool::render_view(&spec, &range, args.label.as_deref())?;
    std::fs::write(&args.out, &*view.image)?;
    println!("{} samples in {} -> {}", view.sample_count, range, args.out.display());
    Ok(())
}

fn serve(args: ServeArgs) -> anyhow::Result<()> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(specvi_annotate::serve(specvi_annotate::ServeOptions {
        archive_dir: args.archive,
        store_path: args.store,
        bind_addr: args.bind,
        show_gold: args.show_gold,
    }))?;
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => bench_cmd::synth(a).map(|_| 0),
        Command::Build(a) => bench_cmd::build(a).map(|_| 0),
        Command::Rollout(a) => run_cmd::rollout(a),
        Command::Judge(a) => run_cmd::judge(a).map(|_| 0),
        Command::Eval(a) => report_cmd::eval(a).map(|_| 0),
        Command::ExportRl(a) => report_cmd::export_rl(a).map(|_| 0),
        Command::Agreement(a) => report_cmd::agreement(a).map(|_| 0),
        Command::Serve(a) => serve(a).map(|_| 0),
        Command::Render(a) => render(a).map(|_| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
