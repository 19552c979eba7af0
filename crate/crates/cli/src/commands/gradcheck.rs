use clap::Args;
use koopgait::train::{run_gradcheck_suite, SuiteOptions};

use super::Context;
use crate::failure::Failure;
use crate::runlog::RunLog;

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Random coordinates checked per parameter group.
    #[arg(long, default_value_t = 100)]
    pub coords: usize,
    #[arg(long, hide = true)]
    pub corrupt_group: Option<String>,
}

pub fn run(ctx: &Context, args: &GradcheckArgs, log: &mut RunLog) -> Result<(), Failure> {
    if args.coords == 0 {
        return Err(Failure::usage("--coords must be positive"));
    }
    let options = SuiteOptions { seed: ctx.config.seed, coordinates_per_group: Some(args.coords), corrupt_group: args.corrupt_group.clone() };
    log.note("coords", args.coords);
    if let Some(g) = &args.corrupt_group {
        log.note("corrupt_group", g);
    }
    let report = run_gradcheck_suite(&options)?;
    let table = report.table();
    print!("{table}");
    let mut csv = String::from("objective,group,coordinates,skipped,max_relative_error,max_absolute_error,passed\n");
    for r in &report.rows {
        let c = &r.check;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.objective, c.group, c.coordinates, c.skipped, c.max_relative_error, c.max_absolute_error, c.passed
        ));
    }
    ctx.write("gradcheck.csv", csv.as_bytes())?;
    let failed = report.rows.iter().filter(|r| !r.check.passed).count();
    println!("{} of {} checks passed in {:.1}s", report.rows.len() - failed, report.rows.len(), report.seconds);
    log.note("failed_checks", failed);
    if failed > 0 {
        return Err(Failure::runtime(format!("{failed} gradient checks failed")));
    }
    Ok(())
}
