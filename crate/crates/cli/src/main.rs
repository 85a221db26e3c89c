use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use roomparam::eval::{evaluate, fuse_predictions, group_by_room, predict_split, write_report, PredictionRecord};
use roomparam::geometry::RoomSpec;
use roomparam::io::{read_jsonl, write_jsonl};
use roomparam::neural::train::{examples_from_manifest, EpochLog};
use roomparam::neural::{load_checkpoint, save_checkpoint, train, TrainConfig};
use roomparam::pipeline::dataset::{
    annotate, assemble_manifest, assign_splits, fit_spectrum, load_room_rirs, mix_room, sample_rooms, save_room_rirs,
    simulate_room,
};
use roomparam::pipeline::{build_dataset, DatasetConfig, DatasetManifest, RoomRecord, Split};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// Everything a run needs, stored as `run.toml` in the run directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct RunConfig {
    seed: u64,
    /// Largest number of positions fused in reports.
    j_max: usize,
    dataset: DatasetConfig,
    train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { seed: 0, j_max: 5, dataset: DatasetConfig::default(), train: TrainConfig::desk() }
    }
}

#[derive(Parser)]
#[command(name = "roomparam", version, about = "Simulate rooms, build noisy two-channel datasets and estimate room parameters")]
struct Cli {
    /// TOML run configuration. Defaults to `<run>/run.toml` when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (all cores when omitted).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunDir {
    /// Run directory holding every artefact.
    #[arg(long, default_value = "run")]
    run: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Draw room geometries and absorption.
    SampleRooms(RunDir),
    /// Simulate the two-channel responses of every sampled room.
    Simulate(RunDir),
    /// Compute the 14 targets of every room from geometry and responses.
    Annotate(RunDir),
    /// Render calibrated noisy mixtures and write the manifest.
    Mix(RunDir),
    /// All dataset stages in one pass, without storing responses unless configured.
    Generate(RunDir),
    /// Train an estimator on the train split with early stopping on validation NLL.
    Train {
        #[command(flatten)]
        dir: RunDir,
        /// Checkpoint path. Defaults to `<run>/model.ckpt` or `<run>/model_sc.ckpt`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Drop the inter-channel branch.
        #[arg(long)]
        sc_only: bool,
        /// Overrides `train.max_epochs` from the configuration.
        #[arg(long)]
        max_epochs: Option<usize>,
    },
    /// Per-mixture estimates of a split as JSONL.
    Predict {
        #[command(flatten)]
        dir: RunDir,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
        /// Defaults to `<run>/predictions_<split>.jsonl`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fuse per-position estimates into one estimate per room.
    Fuse {
        #[arg(long)]
        predictions: PathBuf,
        /// Positions fused per room (all when omitted).
        #[arg(long)]
        j: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate checkpoints on the test split and write tables and plots.
    Report {
        #[command(flatten)]
        dir: RunDir,
        /// Repeat to compare variants; the first drives the per-band table.
        #[arg(long, required = true)]
        checkpoint: Vec<PathBuf>,
        /// Defaults to `<run>/report`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_split(s: &str) -> Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        _ => Err(format!("unknown split `{s}` (train, val or test)")),
    }
}

fn load_config(cli: &Cli, run: Option<&Path>) -> anyhow::Result<RunConfig> {
    let path = cli.config.clone().or_else(|| run.map(|r| r.join("run.toml")).filter(|p| p.exists()));
    let mut cfg = match &path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let bad = |e: &dyn std::fmt::Display| roomparam::Error::Config(format!("{}: {e}", p.display()));
            let given: toml::Table = toml::from_str(&text).map_err(|e| bad(&e))?;
            let mut merged = toml::Table::try_from(RunConfig::default()).map_err(|e| bad(&e))?;
            overlay(&mut merged, given);
            merged.try_into().map_err(|e| bad(&e))?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.dataset.validate()?;
    Ok(cfg)
}

/// Replaces leaves of `base` with those of `over`, recursing into tables, so
/// a partial section keeps the remaining defaults.
fn overlay(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => overlay(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn save_config(run: &Path, cfg: &RunConfig) -> anyhow::Result<()> {
    std::fs::create_dir_all(run)?;
    let text = toml::to_string(cfg).map_err(|e| roomparam::Error::Config(e.to_string()))?;
    std::fs::write(run.join("run.toml"), text)?;
    Ok(())
}

fn read_rooms(run: &Path) -> anyhow::Result<Vec<RoomSpec>> {
    let p = run.join("rooms.jsonl");
    read_jsonl(&p).with_context(|| format!("run `sample-rooms` first ({} missing)", p.display()))
}

fn read_manifest(run: &Path) -> anyhow::Result<DatasetManifest> {
    let p = run.join("manifest.jsonl");
    DatasetManifest::read(&p).with_context(|| format!("run `mix` or `generate` first ({} missing)", p.display()))
}

fn sample_rooms_cmd(cfg: &RunConfig, run: &Path) -> anyhow::Result<()> {
    save_config(run, cfg)?;
    let rooms = sample_rooms(&cfg.dataset, cfg.seed);
    write_jsonl(&run.join("rooms.jsonl"), &rooms)?;
    eprintln!("sampled {} rooms into {}", rooms.len(), run.display());
    Ok(())
}

fn simulate_cmd(cfg: &RunConfig, run: &Path) -> anyhow::Result<()> {
    let rooms = read_rooms(run)?;
    let dir = run.join("rirs");
    rooms.par_iter().try_for_each(|room| -> roomparam::Result<()> {
        save_room_rirs(&dir, &simulate_room(room, cfg.dataset.positions, &cfg.dataset.sim)?)
    })?;
    eprintln!("simulated {} rooms × {} positions into {}", rooms.len(), cfg.dataset.positions, dir.display());
    Ok(())
}

fn annotate_cmd(cfg: &RunConfig, run: &Path) -> anyhow::Result<()> {
    let rooms = read_rooms(run)?;
    let splits = assign_splits(rooms.len(), cfg.dataset.split_fractions, cfg.seed);
    let dir = run.join("rirs");
    let records = rooms
        .par_iter()
        .zip(splits.par_iter())
        .map(|(room, &split)| -> roomparam::Result<RoomRecord> {
            let rirs = load_room_rirs(&dir, room.id, cfg.dataset.positions)?;
            let a = annotate(room, &rirs.positions)?;
            Ok(RoomRecord { room_id: room.id, split, targets: a.to_targets().to_vec() })
        })
        .collect::<roomparam::Result<Vec<_>>>()?;
    write_jsonl(&run.join("annotations.jsonl"), &records)?;
    eprintln!("annotated {} rooms", records.len());
    Ok(())
}

fn mix_cmd(cfg: &RunConfig, run: &Path) -> anyhow::Result<()> {
    let rooms = read_rooms(run)?;
    let p = run.join("annotations.jsonl");
    let annotations: Vec<RoomRecord> = read_jsonl(&p).with_context(|| format!("run `annotate` first ({} missing)", p.display()))?;
    if annotations.len() != rooms.len() || annotations.iter().zip(&rooms).any(|(a, r)| a.room_id != r.id) {
        bail!(roomparam::Error::Data("annotations do not match rooms.jsonl".into()));
    }
    let speech = cfg.dataset.speech_source(cfg.seed)?;
    let model = fit_spectrum(&speech, cfg.dataset.spectrum_clips)?;
    let dir = run.join("rirs");
    let per_room = rooms
        .par_iter()
        .zip(annotations.par_iter())
        .map(|(room, rec)| {
            let rirs = load_room_rirs(&dir, room.id, cfg.dataset.positions)?;
            let a = rec.annotation()?;
            mix_room(run, room, rec.split, &rirs, &a, &speech, &model, &cfg.dataset.snr)
        })
        .collect::<roomparam::Result<Vec<_>>>()?;
    let manifest = assemble_manifest(cfg.seed, cfg.dataset.positions, per_room);
    manifest.write(&run.join("manifest.jsonl"))?;
    eprintln!("wrote {} mixtures and {}", manifest.mixtures.len(), run.join("manifest.jsonl").display());
    Ok(())
}

fn generate_cmd(cfg: &RunConfig, run: &Path) -> anyhow::Result<()> {
    save_config(run, cfg)?;
    let m = build_dataset(&cfg.dataset, cfg.seed, run)?;
    eprintln!("wrote {} rooms, {} mixtures into {}", m.rooms.len(), m.mixtures.len(), run.display());
    Ok(())
}

fn train_cmd(cfg: &RunConfig, run: &Path, out: Option<PathBuf>, sc_only: bool, max_epochs: Option<usize>) -> anyhow::Result<()> {
    let manifest = read_manifest(run)?;
    let mut tc = cfg.train.clone();
    tc.seed = cfg.seed;
    if sc_only {
        tc.arch.use_ic = false;
    }
    if let Some(e) = max_epochs {
        tc.max_epochs = e;
    }
    let train_set = examples_from_manifest(&manifest, run, Split::Train)?;
    let val_set = examples_from_manifest(&manifest, run, Split::Val)?;
    eprintln!("training on {} mixtures, validating on {}", train_set.len(), val_set.len());
    let outcome = train(&train_set, &val_set, &tc, |e: &EpochLog| {
        eprintln!("epoch {:>3}  train NLL {:>9.4}  val NLL {:>9.4}", e.epoch, e.train_nll, e.val_nll)
    })?;
    let default_name = if tc.arch.use_ic { "model.ckpt" } else { "model_sc.ckpt" };
    let out = out.unwrap_or_else(|| run.join(default_name));
    let meta = serde_json::json!({
        "seed": tc.seed,
        "best_epoch": outcome.best_epoch,
        "stopped_early": outcome.stopped_early,
        "train": tc,
        "log": outcome.log,
    });
    save_checkpoint(&out, &outcome.model, &meta.to_string())?;
    let mut csv = String::from("epoch,train_nll,val_nll\n");
    for e in &outcome.log {
        csv += &format!("{},{},{}\n", e.epoch, e.train_nll, e.val_nll);
    }
    std::fs::write(out.with_extension("log.csv"), csv)?;
    eprintln!("best epoch {}, checkpoint {}", outcome.best_epoch, out.display());
    Ok(())
}

fn predict_cmd(run: &Path, checkpoint: &Path, split: Split, out: Option<PathBuf>) -> anyhow::Result<()> {
    let manifest = read_manifest(run)?;
    let (model, _) = load_checkpoint(checkpoint)?;
    let records = predict_split(&model, &manifest, run, split)?;
    let name = format!("predictions_{}.jsonl", parse_name(split));
    let out = out.unwrap_or_else(|| run.join(name));
    write_jsonl(&out, &records)?;
    eprintln!("wrote {} predictions to {}", records.len(), out.display());
    Ok(())
}

fn parse_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Val => "val",
        Split::Test => "test",
    }
}

fn fuse_cmd(predictions: &Path, j: Option<usize>, out: &Path) -> anyhow::Result<()> {
    let records: Vec<PredictionRecord> = read_jsonl(predictions)?;
    let fused = fuse_predictions(&records, j)?;
    write_jsonl(out, &fused)?;
    eprintln!("fused {} rooms into {}", fused.len(), out.display());
    Ok(())
}

fn report_cmd(cfg: &RunConfig, run: &Path, checkpoints: &[PathBuf], out: Option<PathBuf>) -> anyhow::Result<()> {
    let manifest = read_manifest(run)?;
    let mut reports = Vec::new();
    for ck in checkpoints {
        let (model, _) = load_checkpoint(ck)?;
        let preds = predict_split(&model, &manifest, run, Split::Test)?;
        let rooms = group_by_room(&preds, &manifest)?;
        reports.push(evaluate(&rooms, cfg.j_max, &model.arch, cfg.seed)?);
    }
    let out = out.unwrap_or_else(|| run.join("report"));
    for p in write_report(&out, &reports)? {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| roomparam::Error::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::SampleRooms(d) => sample_rooms_cmd(&load_config(&cli, Some(&d.run))?, &d.run),
        Command::Simulate(d) => simulate_cmd(&load_config(&cli, Some(&d.run))?, &d.run),
        Command::Annotate(d) => annotate_cmd(&load_config(&cli, Some(&d.run))?, &d.run),
        Command::Mix(d) => mix_cmd(&load_config(&cli, Some(&d.run))?, &d.run),
        Command::Generate(d) => generate_cmd(&load_config(&cli, Some(&d.run))?, &d.run),
        Command::Train { dir, out, sc_only, max_epochs } => {
            train_cmd(&load_config(&cli, Some(&dir.run))?, &dir.run, out.clone(), *sc_only, *max_epochs)
        }
        Command::Predict { dir, checkpoint, split, out } => predict_cmd(&dir.run, checkpoint, *split, out.clone()),
        Command::Fuse { predictions, j, out } => fuse_cmd(predictions, *j, out),
        Command::Report { dir, checkpoint, out } => {
            report_cmd(&load_config(&cli, Some(&dir.run))?, &dir.run, checkpoint, out.clone())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Context lines down to the first toolkit error, whose message
            // already names its cause.
            let mut parts = Vec::new();
            let mut category = ("error", 1);
            for c in e.chain() {
                parts.push(c.to_string());
                if let Some(r) = c.downcast_ref::<roomparam::Error>() {
                    category = (r.category(), r.exit_code());
                    break;
                }
            }
            eprintln!("error [{}]: {}", category.0, parts.join(": "));
            ExitCode::from(category.1 as u8)
        }
    }
}
