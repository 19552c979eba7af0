use std::path::PathBuf;

use clap::Args;
use koopgait::io::{encode_model, format_history, ModelBundle, Role};
use koopgait::lds::LdsModel;
use koopgait::train::{train_lds, train_recognition, EpochRecord, GaitSample, TrainFailure};

use super::{load_model, Context};
use crate::dataset::Dataset;
use crate::failure::Failure;
use crate::runlog::RunLog;
use crate::svg;

#[derive(Args, Debug)]
pub struct TrainLdsArgs {
    /// Dataset directory written by `gen`; the gallery sequences are used for training.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Train on random crops of this many frames.
    #[arg(long)]
    pub crop: Option<usize>,
    #[arg(long, default_value = "lds.kgm")]
    pub output: String,
}

#[derive(Args, Debug)]
pub struct TrainHeadArgs {
    /// Dynamics model written by `train-lds`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value = "gait.kgm")]
    pub output: String,
}

fn gallery(dataset: &Dataset) -> Vec<&koopgait::io::SequenceRecord> {
    dataset.with_role(Role::Gallery).map(|e| &e.record).collect()
}

fn write_history(ctx: &Context, stem: &str, history: &[EpochRecord]) -> Result<(), Failure> {
    ctx.write(&format!("{stem}.csv"), format_history(history).as_bytes())?;
    if ctx.plot {
        let epochs = |f: fn(&EpochRecord) -> f64| history.iter().map(|r| (r.epoch as f64, f(r))).collect::<Vec<_>>();
        let chart = svg::line_chart(
            "Training loss",
            "epoch",
            "loss",
            &[("total", epochs(|r| r.total)), ("L_recons", epochs(|r| r.recons)), ("L_recons_rec", epochs(|r| r.recons_rec))],
            true,
        );
        ctx.write(&format!("{stem}.svg"), chart.as_bytes())?;
    }
    Ok(())
}

fn report_failure<M>(ctx: &Context, failure: TrainFailure<M>, stem: &str, save: impl FnOnce(&M) -> Vec<u8>) -> Failure {
    let saved = write_history(ctx, stem, &failure.history)
        .and_then(|_| ctx.write(&format!("{stem}_last_good.kgm"), &save(&failure.last_good)));
    match saved {
        Ok(path) => Failure::runtime(format!("{}; last good parameters saved to {}", failure.error, path.display())),
        Err(e) => Failure::runtime(format!("{}; saving the last good parameters also failed: {e}", failure.error)),
    }
}

pub fn run_lds(ctx: &Context, args: &TrainLdsArgs, log: &mut RunLog) -> Result<(), Failure> {
    let mut config = ctx.config.clone();
    if let Some(v) = args.epochs {
        config.max_epochs = v;
    }
    if let Some(v) = args.lr {
        config.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if args.crop.is_some() {
        config.sequence_length = args.crop;
    }
    config.validate()?;
    log.set_config(config.to_key_values());
    let dataset = Dataset::load(&args.data)?;
    let sequences: Vec<_> = gallery(&dataset).into_iter().map(|r| r.sequence.clone()).collect();
    log.note("data", args.data.display());
    dataset.describe(log);
    log.note("training_sequences", sequences.len());
    let outcome = train_lds(&sequences, &config, LdsModel::new(config.seed), None)
        .map_err(|f| report_failure(ctx, f, "lds_loss", |m: &LdsModel| encode_model(&ModelBundle { lds: m.clone(), head: None })))?;
    write_history(ctx, "lds_loss", &outcome.history)?;
    let path = ctx.write(&args.output, &encode_model(&ModelBundle { lds: outcome.model, head: None }))?;
    let last = outcome.history.last().map(|r| r.total).unwrap_or(f64::NAN);
    log.note("steps", outcome.steps);
    log.note("final_loss", last);
    println!("trained {} epochs ({} steps), final loss {last:.6} -> {}", outcome.history.len(), outcome.steps, path.display());
    Ok(())
}

pub fn run_head(ctx: &Context, args: &TrainHeadArgs, log: &mut RunLog) -> Result<(), Failure> {
    let mut config = ctx.config.clone();
    if let Some(v) = args.epochs {
        config.max_epochs = v;
    }
    if let Some(v) = args.lr {
        config.learning_rate = v;
    }
    config.validate()?;
    log.set_config(config.to_key_values());
    let lds = load_model(&args.model)?.lds;
    let dataset = Dataset::load(&args.data)?;
    let samples: Vec<GaitSample> = gallery(&dataset)
        .into_iter()
        .map(|r| GaitSample { label: r.label.clone(), shape: r.shape.clone(), sequence: r.sequence.clone() })
        .collect();
    log.note("model", args.model.display());
    log.note("data", args.data.display());
    dataset.describe(log);
    log.note("training_sequences", samples.len());
    let bundle = |m: &koopgait::recognition::GaitModel| encode_model(&ModelBundle { lds: m.lds.clone(), head: Some(m.head.clone()) });
    let outcome = train_recognition(&samples, lds, &config, None).map_err(|f| report_failure(ctx, f, "head_loss", bundle))?;
    write_history(ctx, "head_loss", &outcome.history)?;
    let path = ctx.write(&args.output, &bundle(&outcome.model))?;
    log.note("steps", outcome.steps);
    println!("trained recognition head for {} epochs ({} steps) -> {}", outcome.history.len(), outcome.steps, path.display());
    Ok(())
}
