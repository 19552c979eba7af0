use std::path::PathBuf;

use clap::Args;
use koopgait::io::{format_smoothed_track, read_detections};
use koopgait::track::{select_largest, smooth_track, SmoothingParams, DEFAULT_STRIDE, DEFAULT_WINDOW};

use super::Context;
use crate::failure::Failure;
use crate::runlog::RunLog;

#[derive(Args, Debug)]
pub struct SmoothArgs {
    /// Detection CSV with header `frame,x,y,w,h,confidence`.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: usize,
    #[arg(long, default_value_t = DEFAULT_STRIDE)]
    pub stride: usize,
    /// Output file name inside --out-dir.
    #[arg(long, default_value = "smoothed_track.csv")]
    pub output: String,
}

pub fn run(ctx: &Context, args: &SmoothArgs, log: &mut RunLog) -> Result<(), Failure> {
    if args.window < 4 || args.stride == 0 {
        return Err(Failure::usage(format!("--window must be at least 4 and --stride positive, got {} and {}", args.window, args.stride)));
    }
    log.note("input", args.input.display());
    log.note("window", args.window);
    log.note("stride", args.stride);
    let detections = read_detections(&args.input).map_err(|e| Failure::at(&args.input, e))?;
    let track = select_largest(&detections)?;
    let smoothed = smooth_track(&track, SmoothingParams { window: args.window, stride: args.stride })?;
    let path = ctx.write(&args.output, format_smoothed_track(&smoothed).as_bytes())?;
    let clamped = smoothed.clamped.iter().filter(|c| **c).count();
    println!("smoothed {} frames ({} observed, {clamped} clamped) -> {}", smoothed.points.len(), track.observed(), path.display());
    Ok(())
}
