//! `synth` and `build` subcommands.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specvi_core::bench::classifier::passes_snr_filter;
use specvi_core::bench::synth::{task_lines, task_slope, SyntheticSpec};
use specvi_core::bench::{
    assemble_splits, rejection_sample, spectrum_file_stem, train_weak_classifier, BenchManifest,
    CriteriaRegistry, SplitCounts, SplitRequest, TrainConfig,
};
use specvi_core::{load_spectrum, Spectrum, Task};

use crate::parse_task;

#[derive(clap::Args)]
pub struct SynthArgs {
    #[arg(long, value_parser = parse_task)]
    task: Task,
    #[arg(long)]
    out: PathBuf,
    /// Catalogued members of the class.
    #[arg(long, default_value_t = 60)]
    positives: usize,
    /// Uncatalogued spectra.
    #[arg(long, default_value_t = 400)]
    others: usize,
    /// Share of uncatalogued spectra that carry the class features at catalogue-like strength.
    #[arg(long, default_value_t = 0.25)]
    lookalike_fraction: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn sky(rng: &mut ChaCha8Rng) -> (Option<f64>, Option<f64>) {
    let ra = rng.random_range(0.0..360.0);
    let dec = rng.random_range(-30.0..70.0);
    (Some(ra), Some(dec))
}

/// Writes `<out>/<id>.specvi.json` for each generated spectrum and
/// `<out>/catalog.txt` with the catalogued ids.
pub fn synth(args: SynthArgs) -> anyhow::Result<()> {
    if !(0.0..=1.0).contains(&args.lookalike_fraction) {
        bail!("--lookalike-fraction must lie in [0, 1]");
    }
    std::fs::create_dir_all(&args.out).with_context(|| args.out.display().to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let code = args.task.code().to_lowercase();
    let mut catalog = Vec::new();
    let others: Vec<Task> = Task::ALL.into_iter().filter(|t| *t != args.task).collect();

    for i in 0..args.positives {
        let mut s = SyntheticSpec::new(format!("{code}-cat-{i:05}"), rng.random());
        s.slope = task_slope(args.task);
        s.lines = task_lines(args.task, rng.random_range(0.8..1.3));
        (s.ra_deg, s.dec_deg) = sky(&mut rng);
        s.generate()?.save(args.out.join(format!("{}.specvi.json", s.id)))?;
        catalog.push(s.id);
    }
    let n_look = (args.others as f64 * args.lookalike_fraction).round() as usize;
    for i in 0..args.others {
        let mut s = SyntheticSpec::new(format!("{code}-obs-{i:05}"), rng.random());
        if i < n_look {
            s.slope = task_slope(args.task);
            s.lines = task_lines(args.task, rng.random_range(0.5..1.1));
        } else {
            let other = *others.choose(&mut rng).expect("other tasks exist");
            s.slope = task_slope(other);
            s.lines = task_lines(other, rng.random_range(0.0..1.2));
        }
        (s.ra_deg, s.dec_deg) = sky(&mut rng);
        s.generate()?.save(args.out.join(format!("{}.specvi.json", s.id)))?;
    }
    std::fs::write(args.out.join("catalog.txt"), catalog.join("\n") + "\n")?;
    println!(
        "wrote {} catalogued and {} uncatalogued {} spectra to {}",
        args.positives,
        args.others,
        args.task,
        args.out.display()
    );
    Ok(())
}

#[derive(clap::Args)]
pub struct BuildArgs {
    #[arg(long, value_parser = parse_task)]
    task: Task,
    /// Directory of *.specvi.json candidate spectra.
    #[arg(long)]
    pool: PathBuf,
    /// Ids of catalogued members, one per line.
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Split sizes as TRAIN_POS,TRAIN_NEG,TEST_POS,TEST_NEG. Defaults to half
    /// the positives for test and a balanced training split.
    #[arg(long)]
    counts: Option<String>,
    /// Ids that must not appear in the test split, one per line.
    #[arg(long)]
    exclude: Option<PathBuf>,
    /// Directory overriding builtin criteria with <TASK>.md files.
    #[arg(long)]
    criteria: Option<PathBuf>,
    /// Stop rejection sampling after this many accepted spectra.
    #[arg(long)]
    quota: Option<usize>,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 1.0)]
    lr: f64,
}

pub fn read_id_list(path: &Path) -> anyhow::Result<HashSet<String>> {
    let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

pub fn load_dir(dir: &Path) -> anyhow::Result<Vec<Spectrum>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| dir.display().to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".specvi.json"))
        .collect();
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        match load_spectrum(&p) {
            Ok(s) => out.push(s),
            Err(e) => eprintln!("warning: skipping {}: {e}", p.display()),
        }
    }
    Ok(out)
}

fn parse_counts(text: &str) -> anyhow::Result<SplitCounts> {
    let v: Vec<usize> = text
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .context("--counts expects four integers")?;
    let [train_pos, train_neg, test_pos, test_neg] = v[..] else {
        bail!("--counts expects four integers");
    };
    Ok(SplitCounts { train_pos, train_neg, test_pos, test_neg })
}

pub fn build(args: BuildArgs) -> anyhow::Result<()> {
    let catalog = read_id_list(&args.catalog)?;
    let mut pool = load_dir(&args.pool)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    pool.shuffle(&mut rng);

    let positives: Vec<Spectrum> = pool
        .iter()
        .filter(|s| catalog.contains(s.id()) && passes_snr_filter(s))
        .cloned()
        .collect();
    let background: Vec<Spectrum> = pool
        .iter()
        .filter(|s| !catalog.contains(s.id()) && passes_snr_filter(s))
        .take(positives.len().max(10))
        .cloned()
        .collect();
    let mut cfg = TrainConfig::new(args.task);
    cfg.epochs = args.epochs;
    cfg.lr = args.lr;
    let clf = train_weak_classifier(&positives, &background, &cfg)?;

    let quota = args.quota.unwrap_or(usize::MAX);
    let (hard, report) = rejection_sample(&clf, pool.iter().cloned(), &catalog, args.threshold, quota)?;
    let counts = match &args.counts {
        Some(t) => parse_counts(t)?,
        None => {
            let test_pos = positives.len() / 2;
            let train_pos = positives.len() - test_pos;
            let train_neg = train_pos.min(hard.len() / 2);
            SplitCounts { train_pos, train_neg, test_pos, test_neg: hard.len() - train_neg }
        }
    };
    let exclude = match &args.exclude {
        Some(p) => read_id_list(p)?,
        None => HashSet::new(),
    };
    let registry = match &args.criteria {
        Some(d) => CriteriaRegistry::from_dir(d)?,
        None => CriteriaRegistry::builtin(),
    };
    let pos_ids: Vec<String> = positives.iter().map(|s| s.id().to_string()).collect();
    let neg_ids: Vec<String> = hard.iter().map(|s| s.id().to_string()).collect();
    let req = SplitRequest {
        task: args.task,
        positives: &pos_ids,
        negatives: &neg_ids,
        counts,
        exclude_ids: &exclude,
        seed: args.seed,
    };
    let (train, test) = assemble_splits(&req, &registry)?;

    let spectra_dir = args.out.join("spectra");
    std::fs::create_dir_all(&spectra_dir)?;
    let used: HashSet<&str> = train.iter().chain(&test).map(|i| i.spectrum_id.as_str()).collect();
    for s in positives.iter().chain(&hard).filter(|s| used.contains(s.id())) {
        let label = specvi_core::TaskLabel { task: args.task, is_positive: catalog.contains(s.id()) };
        s.with_label(Some(label))
            .save(spectra_dir.join(format!("{}.specvi.json", spectrum_file_stem(s.id()))))?;
    }
    std::fs::write(args.out.join("classifier.json"), clf.to_json() + "\n")?;
    let manifest = BenchManifest {
        task: args.task,
        seed: args.seed,
        sampling: Some(report.clone()),
        items: train.into_iter().chain(test).collect(),
    };
    manifest.write(&args.out)?;
    println!(
        "{}: {} catalogued, {} hard negatives accepted of {} seen (rate {:.4}); train {}+{} / test {}+{}",
        args.task,
        positives.len(),
        report.accepted,
        report.candidates_seen,
        report.acceptance_rate,
        counts.train_pos,
        counts.train_neg,
        counts.test_pos,
        counts.test_neg
    );
    Ok(())
}
