mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "propflow", version, about = "Proposal flow: region matching and dense correspondence")]
struct Cli {
    /// Seed for every randomized step; echoed in the log.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Match the proposals of two images and write a match CSV.
    Match(MatchArgs),
    /// Turn a match CSV into a dense flow field (.flo).
    Flow(FlowArgs),
    /// Generate region ground truth from keypoint correspondences.
    Gtgen(GtgenArgs),
    /// PCR curve and its AuC.
    EvalPcr(EvalRegionArgs),
    /// mIoU@k curve and its AuC.
    EvalMiou(EvalRegionArgs),
    /// PCK of a flow field at the keypoints.
    EvalPck(EvalPckArgs),
    /// Audit keypoints by predicting held-out points with a TPS fit on the rest.
    LeaveNOut(LeaveNOutArgs),
    /// Write a synthetic image pair with proposals, features, keypoints and truth.
    Synth(SynthArgs),
    /// Write a sliding-window proposal manifest for an image.
    SlidingWindows(SlidingArgs),
}

#[derive(Args, Debug, Clone)]
struct ProposalArgs {
    /// Proposal manifest of the first image.
    #[arg(long)]
    src: PathBuf,
    /// Proposal manifest of the second image.
    #[arg(long)]
    dst: PathBuf,
    /// Keep at most this many proposals per image (highest score first, else file order).
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u32).range(1..))]
    max_proposals: u32,
}

#[derive(Args, Debug)]
struct MatchArgs {
    #[command(flatten)]
    proposals: ProposalArgs,
    /// nam, phm or lom.
    #[arg(long, default_value = "lom")]
    matcher: String,
    /// rectified_dot, chi2_kernel or l2_gaussian.
    #[arg(long, default_value = "rectified_dot")]
    similarity: String,
    /// Temperature of the chi2 and l2 kernels.
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Spatial kernel bandwidth in px (default 5% of the larger side of the first image).
    #[arg(long)]
    sigma_xy: Option<f64>,
    /// Log-scale kernel bandwidth (default ln(2)/2).
    #[arg(long)]
    sigma_ls: Option<f64>,
    /// exact or binned.
    #[arg(long, default_value = "binned")]
    phm_mode: String,
    /// Spatial histogram cell of binned PHM (default sigma_xy/2).
    #[arg(long)]
    bin_xy: Option<f64>,
    /// Log-scale histogram cell of binned PHM (default sigma_ls/2).
    #[arg(long)]
    bin_ls: Option<f64>,
    /// Output match CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FlowArgs {
    #[arg(long)]
    src: PathBuf,
    #[arg(long)]
    dst: PathBuf,
    /// Match CSV produced by `match`.
    #[arg(long)]
    matches: PathBuf,
    /// Guide image for edge-aware hole filling.
    #[arg(long)]
    guide: Option<PathBuf>,
    /// Also write the second image warped onto the first image's grid.
    #[arg(long)]
    warp: Option<PathBuf>,
    /// Output .flo file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GtgenArgs {
    /// Keypoint JSON.
    #[arg(long)]
    keypoints: PathBuf,
    /// Proposal manifest of the first image.
    #[arg(long)]
    src: PathBuf,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u32).range(1..))]
    max_proposals: u32,
    /// Also require warped regions to lie mostly inside the second image's object box.
    #[arg(long)]
    dst_filter: bool,
    /// Output GT CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalRegionArgs {
    #[arg(long)]
    matches: PathBuf,
    /// GT CSV produced by `gtgen`.
    #[arg(long)]
    gt: PathBuf,
    /// Proposal manifest of the second image.
    #[arg(long)]
    dst: PathBuf,
    /// Also report the fraction of regions whose IoU reaches this value.
    #[arg(long, default_value_t = 0.5)]
    iou_thresh: f64,
    /// Output directory for the curve CSV and SVG.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalPckArgs {
    #[arg(long)]
    flow: PathBuf,
    #[arg(long)]
    keypoints: PathBuf,
    #[arg(long, default_value_t = propflow::eval::DEFAULT_ALPHA)]
    alpha: f64,
}

#[derive(Args, Debug)]
struct LeaveNOutArgs {
    #[arg(long)]
    keypoints: PathBuf,
    /// Held-out counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    trials: u32,
    #[arg(long, default_value_t = propflow::eval::DEFAULT_ALPHA)]
    alpha: f64,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct SynthArgs {
    #[arg(long, default_value_t = 256)]
    width: u32,
    #[arg(long, default_value_t = 256)]
    height: u32,
    #[arg(long, default_value_t = 2)]
    objects: u32,
    #[arg(long, default_value_t = 14)]
    proposals_per_object: u32,
    #[arg(long, default_value_t = 12)]
    clutter: u32,
    #[arg(long, default_value_t = 32)]
    feature_dim: u32,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0.5)]
    part_spread: f64,
    #[arg(long, default_value_t = 0.0)]
    trans_sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    logscale_sigma: f64,
    /// Global transform `a,b,c,d,e,f` mapping (x, y) to (ax+by+c, dx+ey+f).
    #[arg(long, default_value = "1,0,0,0,1,0", allow_hyphen_values = true)]
    transform: String,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SlidingArgs {
    /// Image the windows are laid over.
    #[arg(long)]
    image: PathBuf,
    /// Window sides in px (default: five log-spaced from 10% to 90% of the smaller side).
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<f64>>,
    /// Width/height ratios (default 1/2, 1/sqrt2, 1, sqrt2, 2).
    #[arg(long, value_delimiter = ',')]
    aspects: Option<Vec<f64>>,
    /// Step as a fraction of the window size.
    #[arg(long, default_value_t = 0.5)]
    stride: f64,
    /// Output manifest.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error kind=UsageError message=\"{}\"", first.replace('"', "\\\""));
            return ExitCode::from(2);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", commands::error_line(&e));
            ExitCode::FAILURE
        }
    }
}
