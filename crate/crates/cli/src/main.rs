use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use cmsc_core::eval::default_thresholds;
use cmsc_core::io::{decode_pgm, read_bseq_file};
use cmsc_core::pipeline::{
    apply_train_config, cmd_eval, cmd_gen, cmd_predict, cmd_trails, cmd_train, gradcheck_suite, loss_log_path,
    EvalOptions, TrainConfig,
};
use cmsc_core::sim::SimConfig;
use cmsc_core::{BoundaryImage, Error};

#[derive(Parser)]
#[command(
    name = "cmsc",
    version,
    about = "Multi-scale boundary prediction on synthetic billiards"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Side 64, radius 6, velocities in [-2, 2]^2.
    Desk,
    /// Sides 96..256, radius 13, velocities in [-3, 3]^2.
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset of sequence files and a manifest.
    Gen {
        #[arg(long, value_enum, default_value = "desk")]
        preset: Preset,
        #[arg(long, default_value_t = 1)]
        balls: usize,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Extra simulator setting, `key=value`; repeatable.
        #[arg(long = "set")]
        settings: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write a checkpoint plus a per-epoch loss log.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "desk")]
        preset: Preset,
        /// `key=value` file applied on top of the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Warm-start checkpoint; the optimizer starts fresh.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Strip the table border from all frames.
        #[arg(long)]
        blind: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll a checkpoint forward from the frames of a sequence file.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        steps: usize,
        /// Last observed frame; defaults to the final frame of the input.
        #[arg(long)]
        from: Option<usize>,
        /// Feed ground-truth frames from the input instead of predictions.
        #[arg(long)]
        teacher_forced: bool,
        #[arg(long)]
        blind: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted frames against ground truth, one row per step.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 1)]
        tol: usize,
        /// Binary mask as a sequence file (first frame) or graymap.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Also report the area under the precision-recall curve.
        #[arg(long)]
        confidence: bool,
        /// Index of the ground-truth frame matching the first prediction.
        #[arg(long, default_value_t = 0)]
        gt_offset: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Superimpose the frames of a sequence into one graymap.
    Trails {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic gradients with central differences.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
}

const EXIT_GRADCHECK: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_NUMERIC: u8 = 4;
const EXIT_DATA: u8 = 5;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Sim(_) => EXIT_CONFIG,
        Error::Io(_) | Error::Decode(_) => EXIT_IO,
        Error::NonFinite(_) => EXIT_NUMERIC,
        Error::Shape { .. } | Error::InvalidData(_) | Error::Tape(_) => EXIT_DATA,
    }
}

fn read_mask(path: &PathBuf) -> Result<BoundaryImage, Error> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(b"P5") {
        return Ok(decode_pgm(&bytes)?);
    }
    read_bseq_file(path)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::InvalidData("mask file has no frames".into()))
}

fn sim_config(preset: Preset, balls: usize) -> SimConfig {
    match (preset, balls) {
        (Preset::Desk, 1) => SimConfig::desk_single_ball(),
        (Preset::Desk, n) => SimConfig::desk_multi_ball(n),
        (Preset::Full, 1) => SimConfig::full_single_ball(),
        (Preset::Full, n) => SimConfig::full_multi_ball(n),
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Gen {
            preset,
            balls,
            count,
            seed,
            settings,
            out,
        } => {
            let mut sim = sim_config(preset, balls);
            for s in &settings {
                let (k, v) = s
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("--set expects key=value, got {s:?}")))?;
                if !sim.set(k, v)? {
                    return Err(Error::Config(format!("unknown simulator key {k:?}")));
                }
            }
            cmd_gen(&sim, count, seed, &out)?;
            println!("wrote {count} sequences to {}", out.display());
        }
        Command::Train {
            data,
            preset,
            config,
            seed,
            init,
            blind,
            out,
        } => {
            let mut tc = match preset {
                Preset::Desk => TrainConfig::desk(),
                Preset::Full => TrainConfig::full(),
            };
            if let Some(p) = config {
                apply_train_config(&mut tc, &fs::read_to_string(p)?)?;
            }
            if let Some(s) = seed {
                tc.seed = s;
            }
            tc.blind |= blind;
            let report = cmd_train(&tc, &data, init.as_deref(), &out)?;
            for (e, l) in report.epoch_losses.iter().enumerate() {
                println!("epoch {:>3}  loss {l:.6}", e + 1);
            }
            println!(
                "{} updates; checkpoint {}, log {}",
                report.steps,
                out.display(),
                loss_log_path(&out).display()
            );
        }
        Command::Predict {
            ckpt,
            input,
            steps,
            from,
            teacher_forced,
            blind,
            out,
        } => {
            let preds = cmd_predict(&ckpt, &input, steps, from, teacher_forced, blind, &out)?;
            println!("wrote {} frames to {}", preds.len(), out.display());
        }
        Command::Eval {
            pred,
            gt,
            tol,
            mask,
            confidence,
            gt_offset,
            csv,
        } => {
            let options = EvalOptions {
                tol,
                mask: mask.as_ref().map(read_mask).transpose()?,
                thresholds: default_thresholds(),
                confidence,
            };
            let table = cmd_eval(&pred, &gt, gt_offset, &options)?;
            print!("{}", table.to_text());
            if let Some(p) = csv {
                fs::write(p, table.to_csv())?;
            }
        }
        Command::Trails { input, out } => {
            cmd_trails(&input, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Gradcheck { seeds } => {
            let seeds: Vec<u64> = (0..seeds).collect();
            let entries = gradcheck_suite(&seeds)?;
            let mut failed = 0;
            for e in &entries {
                let ok = e.report.passed();
                failed += !ok as usize;
                println!(
                    "{:<16} seed {:>3}  max rel error {:.3e}  over {:>5} coords ({} at kinks skipped)  {}",
                    e.name,
                    e.seed,
                    e.report.max_rel_error,
                    e.report.coordinates,
                    e.report.skipped,
                    if ok { "ok" } else { "FAIL" }
                );
            }
            if failed > 0 {
                eprintln!("{failed} gradient checks exceeded tolerance");
                return Ok(EXIT_GRADCHECK);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
