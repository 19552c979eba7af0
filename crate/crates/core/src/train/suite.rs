//! The standard gradient-check battery over every LDS term and every recognition
//! objective, checked group by group.

use std::time::Instant;

use super::gradient::{check_gradient, FiniteDifferenceConfig, GroupCheck, Objective};
use super::lds_train::{LdsObjective, LdsTerm};
use super::recognition_train::{GaitSample, LossWeights, RecognitionObjective};
use crate::error::{Error, Result};
use crate::lds::LdsModel;
use crate::nn::Parameterized;
use crate::recognition::{GaitModel, RecognitionHead};
use crate::synth::generate_population;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRow {
    pub objective: &'static str,
    pub check: GroupCheck,
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub rows: Vec<SuiteRow>,
    pub seconds: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.check.passed)
    }

    pub fn table(&self) -> String {
        let mut out = format!("{:<18} {:<14} {:>6} {:>7} {:>12} {:>12}  result\n", "objective", "group", "coords", "skipped", "max_rel", "max_abs");
        for r in &self.rows {
            out.push_str(&format!(
                "{:<18} {:<14} {:>6} {:>7} {:>12.3e} {:>12.3e}  {}\n",
                r.objective,
                r.check.group,
                r.check.coordinates,
                r.check.skipped,
                r.check.max_relative_error,
                r.check.max_absolute_error,
                if r.check.passed { "PASS" } else { "FAIL" }
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Default)]
pub struct SuiteOptions {
    pub seed: u64,
    pub coordinates_per_group: Option<usize>,
    /// Deliberately perturbs the analytic gradient of this parameter group.
    pub corrupt_group: Option<String>,
}

const SUITE_EMBEDDING: usize = 16;
const SUITE_HIDDEN: usize = 64;

fn corrupt<M: Parameterized>(grad: &mut M, group: &str) {
    for (g, values) in grad.param_slices_mut() {
        if g == group {
            values.iter_mut().for_each(|v| *v += 1e-2 * (1.0 + v.abs()));
        }
    }
}

fn run_one<M: Parameterized, O: Objective<M>>(
    name: &'static str,
    objective: &O,
    model: &M,
    fd: &FiniteDifferenceConfig,
    options: &SuiteOptions,
    rows: &mut Vec<SuiteRow>,
) -> Result<()> {
    let (_, mut analytic) = objective.value_and_gradient(model)?;
    if let Some(g) = &options.corrupt_group {
        corrupt(&mut analytic, g);
    }
    rows.extend(check_gradient(objective, model, &analytic, fd)?.into_iter().map(|check| SuiteRow { objective: name, check }));
    Ok(())
}

pub fn known_groups() -> Vec<&'static str> {
    let model = GaitModel { lds: LdsModel::new(0), head: RecognitionHead::new(0, 1, 1).expect("unit head") };
    model.groups()
}

pub fn run_gradcheck_suite(options: &SuiteOptions) -> Result<SuiteReport> {
    if let Some(g) = &options.corrupt_group {
        if !known_groups().contains(&g.as_str()) {
            return Err(Error::invalid(format!("unknown parameter group {g:?}; expected one of {:?}", known_groups())));
        }
    }
    let start = Instant::now();
    let fd = FiniteDifferenceConfig {
        coordinates_per_group: options.coordinates_per_group.unwrap_or(FiniteDifferenceConfig::default().coordinates_per_group),
        seed: options.seed,
        ..Default::default()
    };
    let population = generate_population(3, 2, 6, 0.01, options.seed)?;
    let lds = LdsModel::new(options.seed);
    let sequence = &population.sequences[0].sequence;
    let mut rows = Vec::new();
    for term in [LdsTerm::Recons, LdsTerm::Linearity, LdsTerm::ReconsRec, LdsTerm::Total] {
        run_one(term.name(), &LdsObjective::new(sequence, term)?, &lds, &fd, options, &mut rows)?;
    }

    let samples: Vec<GaitSample> = population
        .sequences
        .iter()
        .map(|s| GaitSample { label: s.label.clone(), shape: s.shape.clone(), sequence: s.sequence.clone() })
        .collect();
    let model = GaitModel { lds: lds.clone(), head: RecognitionHead::new(options.seed.wrapping_add(1), SUITE_EMBEDDING, SUITE_HIDDEN)? };
    let composed = LossWeights { identity: 1.0, soft: 0.06, motion: 1.0, pose: 1000.0, margin: 1.0 };
    let triplet = LossWeights { soft: 0.0, motion: 0.0, ..composed };
    run_one("triplet", &RecognitionObjective::new(&samples, &lds, triplet, false)?, &model, &fd, options, &mut rows)?;
    run_one("composed_frozen", &RecognitionObjective::new(&samples, &lds, composed, false)?, &model, &fd, options, &mut rows)?;
    run_one("composed_joint", &RecognitionObjective::new(&samples, &lds, composed, true)?, &model, &fd, options, &mut rows)?;
    Ok(SuiteReport { rows, seconds: start.elapsed().as_secs_f64() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrupted_group_fails_and_others_pass() {
        let options = SuiteOptions { seed: 3, coordinates_per_group: Some(8), corrupt_group: Some("fusion".into()) };
        let report = run_gradcheck_suite(&options).unwrap();
        assert!(!report.passed());
        for r in &report.rows {
            assert_eq!(r.check.passed, r.check.group != "fusion", "{r:?}");
        }
        assert!(report.table().contains("FAIL"));
    }

    #[test]
    fn unknown_group_is_rejected() {
        let options = SuiteOptions { corrupt_group: Some("nope".into()), ..Default::default() };
        assert!(matches!(run_gradcheck_suite(&options), Err(Error::InvalidArgument(_))));
    }
}
