use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::MetricTable;
use crate::image::BoundaryImage;
use crate::io::{encode_trail, load_checkpoint_file, read_bseq_file, save_checkpoint_file, write_bseq_file, Dtype};
use crate::model::Cmsc;
use crate::sim::{strip_border, SimConfig};

use super::dataset::{generate, sequence_seed};
use super::evaluate::{EvalOptions, HorizonScores};
use super::rollout::{rollout, teacher_forced};
use super::train::{train, TrainConfig, TrainReport};

pub const MANIFEST: &str = "manifest.txt";

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {raw:?}", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Applies a config file to a training config; unknown keys are errors.
pub fn apply_train_config(config: &mut TrainConfig, text: &str) -> Result<()> {
    for (k, v) in parse_kv(text)? {
        if !config.set(&k, &v)? {
            return Err(Error::Config(format!("unknown key {k:?}")));
        }
    }
    config.validate()
}

/// Writes `seq_NNNN.bseq` files and a manifest with one
/// `file= seed= n_balls= side= length=` record per sequence.
pub fn cmd_gen(sim: &SimConfig, count: usize, seed: u64, out_dir: &Path) -> Result<String> {
    fs::create_dir_all(out_dir)?;
    let seqs = generate(sim, count, seed)?;
    let mut manifest = String::new();
    for (i, s) in seqs.iter().enumerate() {
        let file = format!("seq_{i:04}.bseq");
        write_bseq_file(out_dir.join(&file), &s.frames, Dtype::U8)?;
        writeln!(
            manifest,
            "file={file} seed={} n_balls={} side={} length={}",
            sequence_seed(seed, i),
            sim.n_balls,
            s.worlds[0].side,
            s.frames.len()
        )
        .expect("string write");
    }
    fs::write(out_dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Reads every sequence listed in a dataset directory's manifest, or a
/// single sequence file.
pub fn load_dataset(path: &Path) -> Result<Vec<Vec<BoundaryImage>>> {
    if path.is_file() {
        return Ok(vec![read_bseq_file(path)?]);
    }
    let manifest = fs::read_to_string(path.join(MANIFEST))?;
    let mut out = Vec::new();
    for (i, line) in manifest.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let file = line
            .split_whitespace()
            .find_map(|f| f.strip_prefix("file="))
            .ok_or_else(|| Error::Config(format!("manifest line {}: no file= field", i + 1)))?;
        out.push(read_bseq_file(path.join(file))?);
    }
    Ok(out)
}

/// Path of the loss log written next to a checkpoint.
pub fn loss_log_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("loss.csv")
}

/// Trains from a fresh seeded initialization or from `init`, writes the
/// checkpoint to `out` and the per-epoch loss log beside it.
pub fn cmd_train(config: &TrainConfig, data: &Path, init: Option<&Path>, out: &Path) -> Result<TrainReport> {
    config.validate()?;
    let sequences = load_dataset(data)?;
    let (mut model, prior_steps) = match init {
        Some(p) => {
            let ck = load_checkpoint_file(p)?;
            (ck.model_for::<f32>(&config.model)?, ck.step)
        }
        None => (config.initial_model()?, 0),
    };
    let mut log = String::from("epoch,loss\n");
    let report = train(&mut model, &sequences, config, |e, l| {
        writeln!(log, "{e},{l}").expect("string write");
    })?;
    save_checkpoint_file(out, &model, prior_steps + report.steps)?;
    fs::write(loss_log_path(out), log)?;
    Ok(report)
}

/// Predicts `steps` frames after frame `from` (default: the last frame) of
/// `input` and writes them as float frames. With `teacher_forced`, each
/// step reads ground-truth frames from `input` instead of predictions.
pub fn cmd_predict(
    checkpoint: &Path,
    input: &Path,
    steps: usize,
    from: Option<usize>,
    teacher_forced_mode: bool,
    blind: bool,
    out: &Path,
) -> Result<Vec<BoundaryImage>> {
    if steps == 0 {
        return Err(Error::Config("steps must be at least 1".into()));
    }
    let model: Cmsc<f32> = load_checkpoint_file(checkpoint)?.model()?;
    let mut frames = read_bseq_file(input)?;
    if blind {
        frames = frames.iter().map(strip_border).collect();
    }
    if frames.is_empty() {
        return Err(Error::Config("input sequence is empty".into()));
    }
    let t = from.unwrap_or(frames.len() - 1);
    if t >= frames.len() {
        return Err(Error::Config(format!("start frame {t} beyond {} frames", frames.len())));
    }
    let preds = if teacher_forced_mode {
        teacher_forced(&model, &frames, t, steps)?
    } else {
        rollout(&model, &frames[..=t], steps)?
    };
    write_bseq_file(out, &preds, Dtype::F32)?;
    Ok(preds)
}

/// Scores predicted frame `k` against ground-truth frame `gt_offset + k`.
pub fn cmd_eval(pred: &Path, gt: &Path, gt_offset: usize, options: &EvalOptions) -> Result<MetricTable> {
    let preds = read_bseq_file(pred)?;
    let gts = read_bseq_file(gt)?;
    if gt_offset + preds.len() > gts.len() {
        return Err(Error::shape(
            "eval",
            format!(
                "{} predictions from offset {gt_offset} but only {} ground-truth frames",
                preds.len(),
                gts.len()
            ),
        ));
    }
    let mut scores = HorizonScores::new(options.clone(), preds.len())?;
    scores.add(&preds, &gts[gt_offset..])?;
    Ok(scores.table())
}

pub fn cmd_trails(input: &Path, out: &Path) -> Result<()> {
    let frames = read_bseq_file(input)?;
    fs::write(out, encode_trail(&frames)?)?;
    Ok(())
}
