//! Command-line front end.
//!
//! Exit status: `0` ok, `1` i/o, `2` format, `3` schema, `4` infeasible,
//! `5` acceptance failure, `6` domain or shape error, `64` usage.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::decode::{decode, DecodeConfig};
use crate::encode::{encode, EncodeConfig};
use crate::error::{Error, Result};
use crate::harness::{breakdown_report, image_eval_from_docs, roundtrip};
use crate::io::{read_field_file, read_scene_file, write_field_file, SceneDoc};
use crate::loss::{gradient_check, loss_total_tensors, LossTensors, LossWeights};
use crate::metrics::{evaluate, ImageEval, OksConfig};
use crate::synth::{synth_scene, SynthConfig};
use crate::types::GridSpec;

/// Environment variable holding the default worker count.
pub const JOBS_ENV: &str = "COURTSIDE_JOBS";

pub const EXIT_OK: u8 = 0;
pub const EXIT_ACCEPTANCE: u8 = 5;
pub const EXIT_USAGE: u8 = 64;

/// Largest finite-difference relative error accepted by `loss --grad-check`.
pub const GRAD_CHECK_TOL: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "courtside", version, about = "Field encoding, decoding and evaluation for ball, player and pose analysis")]
pub struct Cli {
    /// Worker threads (overrides COURTSIDE_JOBS; default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub players: usize,
    #[arg(long)]
    pub ball: bool,
    #[arg(long, default_value_t = 320)]
    pub width: u32,
    #[arg(long, default_value_t = 256)]
    pub height: u32,
    #[arg(long, default_value_t = 8)]
    pub stride: u32,
    /// Minimum gap between bounding boxes, default 3 strides.
    #[arg(long)]
    pub min_separation: Option<f64>,
    #[arg(long, default_value_t = 32.0)]
    pub min_size: f64,
    #[arg(long, default_value_t = 64.0)]
    pub max_size: f64,
}

impl SynthArgs {
    fn config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            n_players: self.players,
            player_size_range: (self.min_size, self.max_size),
            ball: self.ball,
            min_separation: self.min_separation.unwrap_or(3.0 * self.stride as f64),
            grid: GridSpec { width: self.width, height: self.height, stride: self.stride },
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic ground-truth scene.
    Synth {
        #[command(flatten)]
        synth: SynthArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Encode a scene into a field file.
    Encode {
        scene: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Decode a field file into a result document.
    Decode {
        fields: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        threshold: f64,
        #[arg(long)]
        nms_radius: Option<f64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Score results against ground truth (files or directories).
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Discard players outside the ground-truth court polygon.
        #[arg(long)]
        court: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        roc: Option<PathBuf>,
        #[arg(long)]
        pr: Option<PathBuf>,
    },
    /// Keypoint error breakdown as CSV.
    Breakdown {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        court: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Training loss between two field files.
    Loss {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Also compare analytic gradients with central differences.
        #[arg(long)]
        grad_check: bool,
        #[arg(long, default_value_t = 1e-4)]
        step: f64,
        /// Entries checked per tensor.
        #[arg(long, default_value_t = 256)]
        samples: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Synthesize, encode, decode and evaluate in one go.
    Roundtrip {
        #[command(flatten)]
        synth: SynthArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports always serialize");
    s.push('\n');
    s
}

/// Files of a directory in lexicographic order, or the path itself.
fn inputs(path: &Path) -> Result<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in std::fs::read_dir(path)? {
        let p = entry?.path();
        if p.is_file() {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

fn load_pairs(pred: &Path, gt: &Path, court: bool) -> Result<Vec<ImageEval>> {
    let (preds, gts) = (inputs(pred)?, inputs(gt)?);
    if preds.len() != gts.len() {
        return Err(Error::Shape(format!("{} prediction files but {} ground-truth files", preds.len(), gts.len())));
    }
    preds
        .iter()
        .zip(&gts)
        .map(|(p, g)| {
            let ctx = |e: Error| match e {
                Error::Schema(m) => Error::Schema(format!("{}: {m}", p.display())),
                other => other,
            };
            image_eval_from_docs(&read_scene_file(g).map_err(ctx)?, &read_scene_file(p).map_err(ctx)?, court)
        })
        .collect()
}

#[derive(Serialize)]
struct GradCheckVerdict {
    checked: usize,
    skipped_kinks: usize,
    max_rel_error: f64,
    tolerance: f64,
    passed: bool,
}

#[derive(Serialize)]
struct LossOutput {
    loss: crate::loss::LossBreakdown,
    #[serde(skip_serializing_if = "Option::is_none")]
    grad_check: Option<GradCheckVerdict>,
}

/// Runs one command; returns the exit status on success.
pub fn execute(command: &Command) -> Result<u8> {
    match command {
        Command::Synth { synth, output } => {
            let scene = synth_scene(&synth.config())?;
            emit(output.as_deref(), &SceneDoc::from_scene(&scene).to_json())?;
        }
        Command::Encode { scene, output } => {
            let scene = read_scene_file(scene)?.to_scene()?;
            write_field_file(output, &encode(&scene, &EncodeConfig::default())?)?;
        }
        Command::Decode { fields, threshold, nms_radius, output } => {
            let fields = read_field_file(fields)?;
            let cfg = DecodeConfig { keypoint_threshold: *threshold, nms_radius: *nms_radius, ..DecodeConfig::default() };
            let result = decode(&fields, &cfg)?;
            emit(output.as_deref(), &SceneDoc::from_decode(&result, *fields.grid()).to_json())?;
        }
        Command::Eval { pred, gt, court, output, roc, pr } => {
            let images = load_pairs(pred, gt, *court)?;
            let report = evaluate(&images, &OksConfig::default())?;
            if let Some(p) = roc {
                std::fs::write(p, report.roc_csv())?;
            }
            if let Some(p) = pr {
                std::fs::write(p, report.pr_csv())?;
            }
            emit(output.as_deref(), &to_json(&report))?;
        }
        Command::Breakdown { pred, gt, court, output } => {
            let cfg = OksConfig::default();
            let images = load_pairs(pred, gt, *court)?;
            let report = evaluate(&images, &cfg)?;
            emit(output.as_deref(), &breakdown_report(&images, &report, &cfg).to_csv())?;
        }
        Command::Loss { pred, gt, grad_check, step, samples, output } => {
            let (p, g) = (read_field_file(pred)?, read_field_file(gt)?);
            if p.grid() != g.grid() {
                return Err(Error::Shape("prediction and target grids differ".into()));
            }
            let (pt, gt) = (LossTensors::from_fields(&p), LossTensors::from_fields(&g));
            let w = LossWeights::default();
            let loss = loss_total_tensors(&pt, &gt, &w)?;
            let verdict = if *grad_check {
                let r = gradient_check(&pt, &gt, &w, *step, *samples)?;
                Some(GradCheckVerdict {
                    checked: r.checked,
                    skipped_kinks: r.skipped_kinks,
                    max_rel_error: r.max_rel_error,
                    tolerance: GRAD_CHECK_TOL,
                    passed: r.max_rel_error <= GRAD_CHECK_TOL,
                })
            } else {
                None
            };
            let failed = verdict.as_ref().is_some_and(|v| !v.passed);
            emit(output.as_deref(), &to_json(&LossOutput { loss, grad_check: verdict }))?;
            if failed {
                return Ok(EXIT_ACCEPTANCE);
            }
        }
        Command::Roundtrip { synth, output } => {
            let (summary, _) = roundtrip(&synth.config(), &DecodeConfig::default())?;
            emit(output.as_deref(), &to_json(&summary))?;
            if !summary.passed {
                return Ok(EXIT_ACCEPTANCE);
            }
        }
    }
    Ok(EXIT_OK)
}

fn jobs(flag: Option<usize>) -> std::result::Result<usize, String> {
    if let Some(n) = flag {
        return if n == 0 { Err("--jobs must be positive".into()) } else { Ok(n) };
    }
    match std::env::var(JOBS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(format!("{JOBS_ENV} must be a positive integer, got {v:?}")),
        },
        Err(_) => Ok(0),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit
/// status. Diagnostics go to standard error as one line.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let n = match jobs(cli.jobs) {
        Ok(n) => n,
        Err(msg) => {
            eprintln!("courtside: {msg}");
            return EXIT_USAGE;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("courtside: cannot start worker pool: {e}");
            return 1;
        }
    };
    match pool.install(|| execute(&cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("courtside: {e}");
            e.exit_code()
        }
    }
}
