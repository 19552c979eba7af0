use std::path::PathBuf;

use clap::Args;
use koopgait::io::{format_forecast_errors, read_sequence, write_sequence, SequenceRecord};
use koopgait::lds::smooth_l1;
use koopgait::pose::flatten_frame;

use super::{load_model, Context};
use crate::failure::Failure;
use crate::runlog::RunLog;

#[derive(Args, Debug)]
pub struct ForecastArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Sequence file to extend.
    #[arg(long)]
    pub input: PathBuf,
    /// Number of forecast frames appended to the input.
    #[arg(long, default_value_t = 40)]
    pub extra: usize,
    /// Sequence whose frames after the input length are compared with the forecast.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value = "forecast.seq")]
    pub output: String,
}

pub fn run(ctx: &Context, args: &ForecastArgs, log: &mut RunLog) -> Result<(), Failure> {
    let bundle = load_model(&args.model)?;
    let input = read_sequence(&args.input).map_err(|e| Failure::at(&args.input, e))?;
    log.note("model", args.model.display());
    log.note("input", args.input.display());
    log.note("extra", args.extra);
    let n = input.sequence.len();
    let frames = if args.extra == 0 { Vec::new() } else { bundle.lds.forecast(&input.sequence, args.extra)? };
    let extended = SequenceRecord { sequence: input.sequence.extended(frames.iter().cloned()), ..input };
    let path = ctx.path(&args.output);
    write_sequence(&path, &extended).map_err(|e| Failure::runtime(e.to_string()))?;
    println!("wrote {} frames ({n} given + {} forecast) -> {}", extended.sequence.len(), args.extra, path.display());

    if let Some(truth_path) = &args.truth {
        let truth = read_sequence(truth_path).map_err(|e| Failure::at(truth_path, e))?;
        if truth.sequence.len() < n + args.extra {
            return Err(Failure::usage(format!(
                "{}: ground truth has {} frames, {} are needed",
                truth_path.display(),
                truth.sequence.len(),
                n + args.extra
            )));
        }
        let errors = frames
            .iter()
            .zip(&truth.sequence.frames()[n..n + args.extra])
            .map(|(f, t)| smooth_l1(&flatten_frame(f), &flatten_frame(t)))
            .collect::<koopgait::Result<Vec<f64>>>()?;
        ctx.write("forecast_errors.csv", format_forecast_errors(n, &errors).as_bytes())?;
        if !errors.is_empty() {
            let mean = errors.iter().sum::<f64>() / errors.len() as f64;
            log.note("mean_forecast_smooth_l1", mean);
            println!("mean per-frame smooth-L1 against ground truth: {mean:.6}");
        }
    }
    Ok(())
}
