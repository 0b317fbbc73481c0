//! Command-line front end. Exit codes: 0 success, 1 usage or config
//! error, 2 data error, 3 acceptance-gate failure. Failures print one JSON
//! object on stderr.

mod commands;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::config::{PipelineConfig, CONFIG_ENV};
use crate::error::{ExitKind, Result, RunError};

#[derive(Debug, Parser)]
#[command(name = "sarforge", version, about = "Build and score large-scene SAR detection datasets")]
pub struct Cli {
    /// Pipeline configuration (TOML). Flags override its values.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Worker threads for batch steps; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment chips listed in a manifest into object (and shadow) masks.
    Segment(SegmentArgs),
    /// Label single-target chips with a bounding box.
    Autolabel(AutolabelArgs),
    /// Draw non-overlapping chip positions for a scene.
    Plan(PlanArgs),
    /// Composite segmented chips into a scene following a plan.
    Synth(SynthArgs),
    /// Tile a scene into overlapping square slices.
    Slice(SliceArgs),
    /// Replace a fraction of pixels with uniform noise.
    Noise(NoiseArgs),
    /// Map slice detections to scene coordinates and suppress duplicates.
    Nms(NmsArgs),
    /// Score detections against ground truth.
    Eval(EvalArgs),
    /// Fréchet distance between two feature sets or image directories.
    Fid(FidArgs),
    /// Print the effective configuration as TOML.
    ShowConfig,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// JSON Lines chip manifest, one `{"image", "class"}` per line.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "_mask")]
    pub suffix: String,
    /// Skip the shadow stage and write object masks.
    #[arg(long)]
    pub object_only: bool,
}

#[derive(Debug, Args)]
pub struct AutolabelArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Reference boxes keyed by `image`; labels below IoU 0.5 count as errors.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub white_pixel_threshold: Option<usize>,
    #[arg(long)]
    pub expand_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Scene image; only its dimensions are used.
    #[arg(long)]
    pub scene: PathBuf,
    /// Defaults to the scene file stem.
    #[arg(long)]
    pub scene_id: Option<String>,
    /// Mask of forbidden pixels (non-zero = excluded).
    #[arg(long)]
    pub exclusion: Option<PathBuf>,
    /// `CLASS=COUNT`, repeatable; served in the given order.
    #[arg(long = "request", required = true, value_parser = parse_request)]
    pub requests: Vec<(String, usize)>,
    /// Chip footprint `WxH`.
    #[arg(long, default_value = "128x128", value_parser = parse_dims)]
    pub chip_size: (usize, usize),
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_attempts: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub plan: PathBuf,
    /// Chip manifest; entry `k` of a class takes that class's `k`-th chip.
    #[arg(long)]
    pub chips: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SliceArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Scene labels (JSON Lines); records naming another scene are ignored.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub scene_id: Option<String>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Emit every window, not only those holding a label.
    #[arg(long)]
    pub all: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    /// An image file or a directory of images.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub fraction: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct NmsArgs {
    /// Detections (JSON Lines) in slice or scene frames.
    #[arg(long)]
    pub detections: PathBuf,
    /// Slice index written by `slice`; required for slice-frame records.
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub per_class: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub detections: PathBuf,
    /// Evaluated windows without ground truth; TN = this minus FP.
    #[arg(long, default_value_t = 0)]
    pub background_units: u64,
    #[arg(long)]
    pub iou_min: Option<f64>,
    /// Fail with exit code 3 when the average ACC (%) is below this.
    #[arg(long)]
    pub min_acc: Option<f64>,
    /// JSON report path; the text table also goes next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FidArgs {
    /// Directory of images, `.csv` feature file or raw `f64` file.
    pub real: PathBuf,
    pub generated: PathBuf,
    /// Thumbnail side for image directories.
    #[arg(long)]
    pub side: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_request(s: &str) -> std::result::Result<(String, usize), String> {
    let (class, count) = s.rsplit_once('=').ok_or("expected CLASS=COUNT")?;
    let count = count.parse().map_err(|_| format!("bad count in {s:?}"))?;
    Ok((class.to_string(), count))
}

fn parse_dims(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WxH")?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad dimensions {s:?}"));
    Ok((parse(w)?, parse(h)?))
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitKind::Success as i32;
        }
        Err(e) => return report(&RunError::Usage(e.render().to_string().trim_end().to_string())),
    };
    match execute(cli) {
        Ok(()) => ExitKind::Success as i32,
        Err(e) => report(&e),
    }
}

fn report(e: &RunError) -> i32 {
    let r = e.report();
    let line = serde_json::to_string(&r).expect("error report serializes");
    let _ = writeln!(std::io::stderr(), "{line}");
    r.exit_code
}

pub fn execute(cli: Cli) -> Result<()> {
    let cfg = PipelineConfig::load(cli.config.as_deref())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| RunError::Usage(format!("cannot start {} worker threads: {e}", cli.jobs)))?;
    pool.install(|| commands::dispatch(cfg, cli.command))
}
