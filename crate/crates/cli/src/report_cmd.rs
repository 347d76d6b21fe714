//! `eval`, `export-rl` and `agreement` subcommands.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context};
use serde::Deserialize;
use specvi_annotate::Archive;
use specvi_core::metrics::{score_histogram, score_task, spearman, EvalReport};
use specvi_core::reward::{export_rl_batch, export_sft_samples, write_rl_batch, AdvantageMode, RewardConfig};
use specvi_core::trajectory::{Prediction, Trajectory};
use specvi_core::Task;

#[derive(clap::Args)]
pub struct EvalArgs {
    /// predictions.csv files written by `rollout`.
    #[arg(long, required = true, num_args = 1..)]
    predictions: Vec<PathBuf>,
    /// Name for the system column.
    #[arg(long, default_value = "system")]
    system: String,
    /// Which rollout of each group to score.
    #[arg(long, default_value_t = 0)]
    group_index: usize,
    /// Write the full report as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct PredictionRow {
    item_id: String,
    task: String,
    group_index: usize,
    prediction: String,
    gold: String,
}

pub fn eval(args: EvalArgs) -> anyhow::Result<()> {
    let mut by_task: BTreeMap<Task, (Vec<Prediction>, Vec<bool>)> = BTreeMap::new();
    for path in &args.predictions {
        let mut r = csv::Reader::from_path(path).with_context(|| path.display().to_string())?;
        for row in r.deserialize::<PredictionRow>() {
            let row = row.with_context(|| path.display().to_string())?;
            if row.group_index != args.group_index {
                continue;
            }
            let gold = match row.gold.as_str() {
                "YES" => true,
                "NO" => false,
                _ => bail!("{}: item {} has no gold label", path.display(), row.item_id),
            };
            let task: Task = row
                .task
                .parse()
                .map_err(|_| anyhow::anyhow!("{}: item {} has no task", path.display(), row.item_id))?;
            let pred: Prediction = row.prediction.parse().unwrap_or(Prediction::Invalid);
            let entry = by_task.entry(task).or_default();
            entry.0.push(pred);
            entry.1.push(gold);
        }
    }
    if by_task.is_empty() {
        bail!("no rows with group_index {}", args.group_index);
    }
    let reports = by_task
        .into_iter()
        .map(|(task, (p, g))| score_task(task, &p, &g))
        .collect::<Result<Vec<_>, _>>()?;
    let report = EvalReport::new(args.system, reports)?;
    if let Some(out) = &args.out {
        std::fs::write(out, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    print!("{}", report.to_csv());
    Ok(())
}

#[derive(Clone, Copy, clap::ValueEnum)]
pub enum AdvantageArg {
    Normalized,
    Centered,
}

#[derive(clap::Args)]
pub struct ExportArgs {
    /// Directory holding *.traj.jsonl.
    #[arg(long)]
    archive: PathBuf,
    /// RL batch output, one JSON record per line.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "normalized")]
    advantage: AdvantageArg,
    /// Also write masked SFT samples for well-formed trajectories here.
    #[arg(long)]
    sft: Option<PathBuf>,
}

fn group_position(t: &Trajectory) -> usize {
    t.id.rsplit_once(".g").and_then(|(_, g)| g.parse().ok()).unwrap_or(usize::MAX)
}

/// Trajectories grouped by item, each group ordered by rollout index.
pub fn groups(archive: &Archive) -> Vec<(String, Vec<Trajectory>)> {
    let mut map: BTreeMap<String, Vec<Trajectory>> = BTreeMap::new();
    for s in archive.page(1, archive.len().max(1)) {
        let t = archive.get(&s.id).expect("listed id exists").clone();
        let key = t.item_id.clone().unwrap_or_else(|| t.id.clone());
        map.entry(key).or_default().push(t);
    }
    for v in map.values_mut() {
        v.sort_by(|a, b| group_position(a).cmp(&group_position(b)).then_with(|| a.id.cmp(&b.id)));
    }
    map.into_iter().collect()
}

pub fn export_rl(args: ExportArgs) -> anyhow::Result<()> {
    let archive = Archive::load(&args.archive)?;
    let mut cfg = RewardConfig::new(args.alpha)?;
    cfg.advantage = match args.advantage {
        AdvantageArg::Normalized => AdvantageMode::Normalized,
        AdvantageArg::Centered => AdvantageMode::Centered,
    };
    let groups = groups(&archive);
    let records = export_rl_batch(&groups, &cfg)?;
    write_rl_batch(&args.out, &records)?;
    println!("{} records in {} groups -> {}", records.len(), groups.len(), args.out.display());
    if let Some(sft) = &args.sft {
        let good: Vec<Trajectory> = groups
            .into_iter()
            .flat_map(|(_, ts)| ts)
            .filter(|t| t.format_ok)
            .collect();
        let samples = export_sft_samples(&good);
        let mut text = String::new();
        for s in &samples {
            text.push_str(&serde_json::to_string(s)?);
            text.push('\n');
        }
        std::fs::write(sft, text)?;
        println!("{} SFT samples -> {}", samples.len(), sft.display());
    }
    Ok(())
}

#[derive(clap::Args)]
pub struct AgreementArgs {
    /// Score CSV with columns trajectory_id,annotator_id,score.
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
}

#[derive(Debug, Deserialize)]
struct ScoreRow {
    trajectory_id: String,
    score: i64,
}

fn read_scores(path: &PathBuf) -> anyhow::Result<(BTreeMap<String, f64>, Vec<i64>)> {
    let mut r = csv::Reader::from_path(path).with_context(|| path.display().to_string())?;
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut all = Vec::new();
    for row in r.deserialize::<ScoreRow>() {
        let row = row.with_context(|| path.display().to_string())?;
        all.push(row.score);
        let e = sums.entry(row.trajectory_id).or_default();
        e.0 += row.score as f64;
        e.1 += 1;
    }
    Ok((sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect(), all))
}

/// Spearman correlation over trajectories scored in both files. Several
/// scores for one trajectory are averaged first.
pub fn agreement(args: AgreementArgs) -> anyhow::Result<()> {
    let (a, all_a) = read_scores(&args.a)?;
    let (b, all_b) = read_scores(&args.b)?;
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        a.iter().filter_map(|(id, x)| b.get(id).map(|y| (*x, *y))).unzip();
    let out = serde_json::json!({
        "paired": xs.len(),
        "spearman": spearman(&xs, &ys)?,
        "a": score_histogram(&all_a)?,
        "b": score_histogram(&all_b)?,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}
