use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use koopgait::io::{format_cmc_curve, format_probe_report, format_summary, Role, SummaryRow};
use koopgait::nn::Parameterized;
use koopgait::recognition::{cmc_evaluate, GaitModel, GalleryProbeProtocol};

use super::{load_model, Context};
use crate::dataset::Dataset;
use crate::failure::Failure;
use crate::runlog::RunLog;
use crate::svg;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truncation {
    Full,
    Frames(usize),
}

impl FromStr for Truncation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "full" => Ok(Truncation::Full),
            t => match t.parse::<usize>() {
                Ok(n) if n >= 2 => Ok(Truncation::Frames(n)),
                _ => Err(format!("expected `full` or a frame count of at least 2, got {t:?}")),
            },
        }
    }
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Dynamics model, or a bundle that also carries the recognition head.
    #[arg(long)]
    pub model: PathBuf,
    /// Bundle written by `train-head`; defaults to the head inside --model.
    #[arg(long)]
    pub head: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Probe lengths to evaluate, comma separated (`full` keeps every frame).
    #[arg(long, value_delimiter = ',', default_value = "full")]
    pub truncate: Vec<Truncation>,
    /// Forecast frames appended to each truncated probe, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub extend: Vec<usize>,
}

fn same_parameters(a: &impl Parameterized, b: &impl Parameterized) -> bool {
    let (a, b) = (a.param_slices(), b.param_slices());
    a.len() == b.len() && a.iter().zip(&b).all(|((_, x), (_, y))| x.len() == y.len() && x.iter().zip(y.iter()).all(|(p, q)| p.to_bits() == q.to_bits()))
}

fn load_gait_model(args: &EvalArgs) -> Result<GaitModel, Failure> {
    let bundle = load_model(&args.model)?;
    let head = match &args.head {
        None => bundle
            .head
            .ok_or_else(|| Failure::usage(format!("{} has no recognition head; pass --head", args.model.display())))?,
        Some(path) => {
            let head_bundle = load_model(path)?;
            if !same_parameters(&head_bundle.lds, &bundle.lds) {
                return Err(Failure::usage(format!(
                    "{} was trained against a different dynamics model than {}",
                    path.display(),
                    args.model.display()
                )));
            }
            head_bundle.head.ok_or_else(|| Failure::usage(format!("{} has no recognition head", path.display())))?
        }
    };
    Ok(GaitModel { lds: bundle.lds, head })
}

fn tag(t: Truncation) -> String {
    match t {
        Truncation::Full => "full".into(),
        Truncation::Frames(n) => n.to_string(),
    }
}

pub fn run(ctx: &Context, args: &EvalArgs, log: &mut RunLog) -> Result<(), Failure> {
    let model = load_gait_model(args)?;
    let dataset = Dataset::load(&args.data)?;
    log.note("model", args.model.display());
    if let Some(h) = &args.head {
        log.note("head", h.display());
    }
    log.note("data", args.data.display());
    dataset.describe(log);
    log.note("truncate", args.truncate.iter().map(|t| tag(*t)).collect::<Vec<_>>().join(","));
    log.note("extend", args.extend.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(","));

    let gallery = dataset
        .with_role(Role::Gallery)
        .map(|e| Ok((e.record.label.clone(), model.embed_sequence(&e.record.shape, &e.record.sequence)?)))
        .collect::<koopgait::Result<Vec<_>>>()?;
    let probes: Vec<_> = dataset.with_role(Role::Probe).collect();
    let probe_ids: Vec<String> = probes.iter().map(|e| e.file.clone()).collect();

    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for &t in &args.truncate {
        for &extra in &args.extend {
            let embedded = probes
                .iter()
                .map(|e| {
                    let seq = match t {
                        Truncation::Full => e.record.sequence.clone(),
                        Truncation::Frames(n) => e.record.sequence.truncated(n),
                    };
                    Ok((e.record.label.clone(), model.extend_then_match(&e.record.shape, &seq, extra)?))
                })
                .collect::<koopgait::Result<Vec<_>>>()?;
            let report = cmc_evaluate(&GalleryProbeProtocol { gallery: gallery.clone(), probes: embedded })?;
            let stem = format!("eval_t{}_e{extra}", tag(t));
            ctx.write(&format!("{stem}_probes.csv"), format_probe_report(&report, &probe_ids).as_bytes())?;
            ctx.write(&format!("{stem}_cmc.csv"), format_cmc_curve(&report).as_bytes())?;
            let row = SummaryRow {
                truncate: match t {
                    Truncation::Full => None,
                    Truncation::Frames(n) => Some(n),
                },
                extend: extra,
                probes: report.probes.len(),
                rank1: report.rank(1),
                rank5: report.rank(5),
            };
            println!("truncate={:<5} extend={extra:<3} rank-1={:.4} rank-5={:.4}", tag(t), row.rank1, row.rank5);
            curves.push((format!("t={} e={extra}", tag(t)), report.curve.iter().enumerate().map(|(k, v)| ((k + 1) as f64, *v)).collect::<Vec<_>>()));
            rows.push(row);
        }
    }
    let path = ctx.write("eval_summary.csv", format_summary(&rows).as_bytes())?;
    println!("summary -> {}", path.display());
    if ctx.plot {
        let bars: Vec<(String, f64)> = rows.iter().map(|r| (format!("{}/{}", r.truncate.map_or("full".into(), |v| v.to_string()), r.extend), r.rank1)).collect();
        ctx.write("eval_rank1.svg", svg::bar_chart("Rank-1 accuracy (truncate/extend)", &bars).as_bytes())?;
        let series: Vec<(&str, Vec<(f64, f64)>)> = curves.iter().map(|(n, c)| (n.as_str(), c.clone())).collect();
        ctx.write("eval_cmc.svg", svg::line_chart("CMC", "rank", "accuracy", &series, false).as_bytes())?;
    }
    Ok(())
}
