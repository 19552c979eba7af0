//! LDS objectives and the unsupervised training loop.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::AdamState;
use super::config::TrainConfig;
use super::gradient::Objective;
use super::history::{EarlyStop, EpochRecord};
use crate::error::{Error, Result};
use crate::lds::{LdsLosses, LdsModel, LdsTape};
use crate::nn::Parameterized;
use crate::pose::{PoseSequence, ROTATION_DIM};

/// Which part of the LDS objective to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LdsTerm {
    Recons,
    Linearity,
    ReconsRec,
    Total,
}

impl LdsTerm {
    pub fn name(&self) -> &'static str {
        match self {
            LdsTerm::Recons => "L_recons",
            LdsTerm::Linearity => "L_linearity",
            LdsTerm::ReconsRec => "L_recons_rec",
            LdsTerm::Total => "L_LDS",
        }
    }
}

/// One LDS loss term on a fixed sequence, differentiable in every model parameter
/// (including through the estimated operator).
#[derive(Debug, Clone)]
pub struct LdsObjective {
    rows: Vec<f64>,
    frames: usize,
    term: LdsTerm,
}

impl LdsObjective {
    pub fn new(seq: &PoseSequence, term: LdsTerm) -> Result<Self> {
        seq.require_len(2)?;
        Ok(Self { rows: seq.to_rotation_rows(), frames: seq.len(), term })
    }

    fn evaluate(&self, model: &LdsModel, grad: Option<&mut LdsModel>) -> Result<f64> {
        let mut tape = LdsTape::new(model, &self.rows, self.frames)?;
        let want = grad.is_some();
        let value = match self.term {
            LdsTerm::Recons => tape.recons(1.0, want)?,
            LdsTerm::Linearity => tape.linearity(1.0, want)?,
            LdsTerm::ReconsRec => {
                let mut grad = grad;
                let v = tape.recons_rec(1.0, grad.as_deref_mut())?;
                if let Some(g) = grad {
                    tape.backward(g)?;
                }
                return Ok(v);
            }
            LdsTerm::Total => {
                let mut grad = grad;
                let v = tape.lds_losses(1.0, grad.as_deref_mut())?.total();
                if let Some(g) = grad {
                    tape.backward(g)?;
                }
                return Ok(v);
            }
        };
        if let Some(g) = grad {
            tape.backward(g)?;
        }
        Ok(value)
    }
}

impl Objective<LdsModel> for LdsObjective {
    fn value(&self, model: &LdsModel) -> Result<f64> {
        self.evaluate(model, None)
    }

    fn value_and_gradient(&self, model: &LdsModel) -> Result<(f64, LdsModel)> {
        let mut grad = model.zeros_like();
        let v = self.evaluate(model, Some(&mut grad))?;
        Ok((v, grad))
    }
}

/// Result of a completed training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    pub model: M,
    pub history: Vec<EpochRecord>,
    pub steps: u64,
}

/// A run that hit a non-finite value; `last_good` is the model before the failing step.
#[derive(Debug)]
pub struct TrainFailure<M> {
    pub error: Error,
    pub last_good: M,
    pub history: Vec<EpochRecord>,
}

impl<M> std::fmt::Display for TrainFailure<M> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} completed epochs)", self.error, self.history.len())
    }
}

impl<M: std::fmt::Debug> std::error::Error for TrainFailure<M> {}

/// Snapshot passed to step observers after every optimizer update.
pub struct StepReport<'a, M> {
    pub epoch: usize,
    pub step: u64,
    pub model: &'a M,
    /// Largest absolute parameter change of this step.
    pub max_update: f64,
    pub learning_rate: f64,
}

pub type StepObserver<'o, M> = &'o mut dyn FnMut(&StepReport<'_, M>);

/// Pre-flattened training sequence.
pub(crate) struct FlatSequence {
    pub rows: Vec<f64>,
    pub frames: usize,
}

impl FlatSequence {
    pub fn new(seq: &PoseSequence) -> Self {
        Self { rows: seq.to_rotation_rows(), frames: seq.len() }
    }

    /// A window of `length` frames at a random offset, or the whole sequence.
    pub fn window<R: Rng + ?Sized>(&self, length: Option<usize>, rng: &mut R) -> (&[f64], usize) {
        match length {
            Some(l) if l < self.frames => {
                let start = rng.random_range(0..=self.frames - l);
                (&self.rows[start * ROTATION_DIM..(start + l) * ROTATION_DIM], l)
            }
            _ => (&self.rows, self.frames),
        }
    }
}

/// Scales `grad` so its global norm is at most `max_norm`.
pub(crate) fn clip_gradient<M: Parameterized>(grad: &mut M, max_norm: f64) {
    let norm = grad.squared_norm().sqrt();
    if norm > max_norm {
        grad.scale(max_norm / norm);
    }
}

/// Minimizes the mean LDS loss over `dataset` with Adam.
pub fn train_lds(
    dataset: &[PoseSequence],
    config: &TrainConfig,
    init: LdsModel,
    mut observer: Option<StepObserver<'_, LdsModel>>,
) -> std::result::Result<TrainOutcome<LdsModel>, TrainFailure<LdsModel>> {
    let fail = |error: Error, model: LdsModel, history: Vec<EpochRecord>| TrainFailure { error, last_good: model, history };
    if let Err(e) = config.validate() {
        return Err(fail(e, init, Vec::new()));
    }
    if dataset.is_empty() {
        return Err(fail(Error::invalid("training dataset is empty"), init, Vec::new()));
    }
    if let Some(short) = dataset.iter().find(|s| s.len() < 2) {
        return Err(fail(Error::invalid(format!("sequence of length {} is too short", short.len())), init, Vec::new()));
    }
    let flat: Vec<FlatSequence> = dataset.iter().map(FlatSequence::new).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = init;
    let mut adam = AdamState::new(&model, config.learning_rate);
    let mut history = Vec::new();
    let mut stop = EarlyStop::new(config.early_stop_patience, config.early_stop_tolerance);
    let mut order: Vec<usize> = (0..flat.len()).collect();
    let mut steps = 0u64;

    'epochs: for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut record = EpochRecord { epoch, ..Default::default() };
        let mut seen = 0usize;
        for batch in order.chunks(config.batch_size) {
            if config.max_steps.is_some_and(|m| steps >= m) {
                break 'epochs;
            }
            let mut grad = model.zeros_like();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (rows, n) = flat[i].window(config.sequence_length, &mut rng);
                let losses = match lds_step_loss(&model, rows, n, scale, &mut grad) {
                    Ok(l) => l,
                    Err(e) => return Err(fail(e, model, history)),
                };
                record.recons += losses.recons;
                record.linearity += losses.linearity;
                record.recons_rec += losses.recons_rec;
                seen += 1;
            }
            if !grad.all_finite() {
                return Err(fail(Error::Divergence { op: "LDS gradient".into() }, model, history));
            }
            if let Some(c) = config.grad_clip {
                clip_gradient(&mut grad, c);
            }
            let last_good = model.clone();
            let max_update = match adam.step(&mut model, &grad) {
                Ok(u) => u,
                Err(e) => return Err(fail(e, last_good, history)),
            };
            if !model.all_finite() {
                return Err(fail(Error::Divergence { op: "adam update".into() }, last_good, history));
            }
            steps += 1;
            if let Some(obs) = observer.as_deref_mut() {
                obs(&StepReport { epoch, step: steps, model: &model, max_update, learning_rate: config.learning_rate });
            }
        }
        if seen == 0 {
            break;
        }
        let n = seen as f64;
        record.recons /= n;
        record.linearity /= n;
        record.recons_rec /= n;
        record.total = record.recons + record.linearity + record.recons_rec;
        if !record.total.is_finite() {
            return Err(fail(Error::Divergence { op: "epoch loss".into() }, model, history));
        }
        history.push(record);
        if stop.update(record.total) {
            break;
        }
    }
    Ok(TrainOutcome { model, history, steps })
}

/// Loss of one sequence with its gradient scaled by `scale` added into `grad`.
fn lds_step_loss(model: &LdsModel, rows: &[f64], n: usize, scale: f64, grad: &mut LdsModel) -> Result<LdsLosses> {
    let mut tape = LdsTape::new(model, rows, n)?;
    let losses = tape.lds_losses(scale, Some(grad))?;
    tape.backward(grad)?;
    Ok(losses)
}
