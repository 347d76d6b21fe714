//! `rollout` and `judge` subcommands.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use specvi_agent::{
    judge_trajectory, BatchItem, Engine, HttpPolicy, Policy, PolicyFile, RolloutConfig,
    ScriptedPolicy, SpectrumSource, DEFAULT_RUBRIC,
};
use specvi_annotate::Archive;
use specvi_core::bench::{BenchManifest, Split, MANIFEST_FILE};
use tokio::task::JoinSet;

#[derive(Clone, Copy, clap::ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(clap::Args)]
pub struct RolloutArgs {
    /// A benchmark directory (with manifest.json) or a directory of them.
    #[arg(long)]
    items: PathBuf,
    /// Policy TOML (`kind = "http"` or `kind = "scripted"`).
    #[arg(long)]
    policy: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    group_size: usize,
    #[arg(long, default_value_t = 8)]
    max_tool_calls: usize,
    #[arg(long, default_value_t = 8)]
    concurrency: usize,
    #[arg(long, default_value_t = 17)]
    seed: u64,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
}

/// Manifests at `dir` itself or one level below, in path order.
pub fn find_manifests(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if dir.join(MANIFEST_FILE).is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut found: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| dir.display().to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST_FILE).is_file())
        .collect();
    found.sort();
    if found.is_empty() {
        bail!("no {MANIFEST_FILE} under {}", dir.display());
    }
    Ok(found)
}

pub fn batch_items(dir: &Path, split: SplitArg) -> anyhow::Result<Vec<BatchItem>> {
    let mut items = Vec::new();
    for bench_dir in find_manifests(dir)? {
        let manifest = BenchManifest::read(&bench_dir)?;
        for item in manifest.items {
            let keep = match split {
                SplitArg::Train => item.split == Split::Train,
                SplitArg::Test => item.split == Split::Test,
                SplitArg::All => true,
            };
            if keep {
                items.push(BatchItem {
                    item_id: item.item_id,
                    task: Some(item.task),
                    gold: Some(item.gold),
                    prompt: item.prompt,
                    spectrum: SpectrumSource::Path(bench_dir.join(&item.spectrum_path)),
                });
            }
        }
    }
    Ok(items)
}

fn load_policy(path: &Path) -> anyhow::Result<Arc<dyn Policy>> {
    Ok(match PolicyFile::load(path)? {
        PolicyFile::Http(cfg) => Arc::new(HttpPolicy::new(cfg)?),
        PolicyFile::Scripted { rules } => Arc::new(ScriptedPolicy::new(rules)),
    })
}

pub fn rollout(args: RolloutArgs) -> anyhow::Result<i32> {
    let items = batch_items(&args.items, args.split)?;
    if items.is_empty() {
        bail!("no items selected from {}", args.items.display());
    }
    let policy = load_policy(&args.policy)?;
    let cfg = RolloutConfig {
        max_tool_calls: args.max_tool_calls,
        group_size: args.group_size,
        per_item_seed: args.seed,
        concurrency: args.concurrency,
    };
    let rt = tokio::runtime::Runtime::new()?;
    let report = rt.block_on(Engine::new(policy).run_batch(&items, &cfg, &args.out))?;
    for f in &report.item_failures {
        eprintln!("item {} failed: {}", f.item_id, f.reason);
    }
    println!(
        "{} items, {} trajectories, {} failed rollouts, {} failed items -> {}",
        report.items_total,
        report.trajectories,
        report.rollouts_failed,
        report.item_failures.len(),
        args.out.display()
    );
    Ok(report.exit_code())
}

#[derive(clap::Args)]
pub struct JudgeArgs {
    /// Directory holding *.traj.jsonl and assets/.
    #[arg(long)]
    archive: PathBuf,
    /// Policy TOML of kind "http" pointing at the judge model.
    #[arg(long)]
    policy: PathBuf,
    /// Output CSV with columns trajectory_id,annotator_id,score.
    #[arg(long)]
    out: PathBuf,
    /// Replace the builtin rubric with the contents of this file.
    #[arg(long)]
    rubric: Option<PathBuf>,
    /// Score only the first N trajectories in id order.
    #[arg(long)]
    limit: Option<usize>,
}

pub fn judge(args: JudgeArgs) -> anyhow::Result<()> {
    let PolicyFile::Http(cfg) = PolicyFile::load(&args.policy)? else {
        bail!("the judge needs an http policy file");
    };
    let annotator = format!("judge:{}", cfg.model_name);
    let client = Arc::new(HttpPolicy::new(cfg)?);
    let rubric: Arc<str> = match &args.rubric {
        Some(p) => std::fs::read_to_string(p).with_context(|| p.display().to_string())?.into(),
        None => DEFAULT_RUBRIC.into(),
    };
    let archive = Archive::load(&args.archive)?;
    let n = args.limit.unwrap_or(archive.len()).min(archive.len());
    let trajectories: Vec<_> = archive.page(1, archive.len().max(1)).into_iter().take(n).collect();

    let rt = tokio::runtime::Runtime::new()?;
    let results = rt.block_on(async {
        let mut set = JoinSet::new();
        for (i, summary) in trajectories.iter().enumerate() {
            let traj = archive.get(&summary.id).expect("listed id exists").clone();
            let client = Arc::clone(&client);
            let rubric = Arc::clone(&rubric);
            let root = archive.root().to_path_buf();
            set.spawn(async move {
                let r = judge_trajectory(&client, &traj, &rubric, Some(&root)).await;
                (i, traj.id, r)
            });
        }
        let mut out = Vec::with_capacity(n);
        while let Some(joined) = set.join_next().await {
            out.push(joined.expect("judge task panicked"));
        }
        out.sort_by_key(|(i, _, _)| *i);
        out
    });

    let mut w = csv::Writer::from_path(&args.out).with_context(|| args.out.display().to_string())?;
    w.write_record(["trajectory_id", "annotator_id", "score"])?;
    let mut failed = 0;
    for (_, id, r) in &results {
        match r {
            Ok(s) => w.write_record([id.as_str(), annotator.as_str(), &s.score.to_string()])?,
            Err(e) => {
                failed += 1;
                eprintln!("{id}: {e}");
            }
        }
    }
    w.flush()?;
    println!("scored {} of {} trajectories -> {}", results.len() - failed, results.len(), args.out.display());
    if failed > 0 && failed == results.len() {
        bail!("every judge call failed");
    }
    Ok(())
}
