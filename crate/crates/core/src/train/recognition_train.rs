//! The composed recognition objective and its training loop.

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::AdamState;
use super::config::TrainConfig;
use super::gradient::Objective;
use super::history::{EarlyStop, EpochRecord};
use super::lds_train::{clip_gradient, StepObserver, StepReport, TrainFailure, TrainOutcome};
use crate::error::{Error, Result};
use crate::lds::{LdsLosses, LdsModel, LdsTape, LATENT_DIM};
use crate::nn::Parameterized;
use crate::pose::{PoseSequence, ShapeVector, POSE_DIM, SHAPE_DIM};
use crate::recognition::{
    batch_hard, normalize_rows, normalize_rows_backward, soft_pose_term, tape_motion_input, GaitModel, HeadCache,
    IdentityLoss, RecognitionHead, MOTION_INPUT_DIM,
};

/// A labeled training sequence with its pseudo-ground-truth shape.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitSample {
    pub label: String,
    pub shape: ShapeVector,
    pub sequence: PoseSequence,
}

/// Weights of the composed objective `λ_id L_id + λ_soft L_soft + λ_motion L_LDS`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub identity: f64,
    pub soft: f64,
    pub motion: f64,
    pub pose: f64,
    pub margin: f64,
}

impl From<&TrainConfig> for LossWeights {
    fn from(c: &TrainConfig) -> Self {
        Self { identity: c.lambda_id, soft: c.lambda_soft, motion: c.lambda_motion, pose: c.lambda_pose, margin: c.margin }
    }
}

/// Value of every term of the composed objective on one batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub identity: IdentityLoss,
    pub soft: f64,
    pub lds: LdsLosses,
    pub total: f64,
}

/// A sample with everything the objective needs precomputed. The motion input and
/// the soft/LDS terms are only valid for the LDS they were prepared with.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    label: usize,
    shape: [f64; SHAPE_DIM],
    rows: Vec<f64>,
    frames: usize,
    theta: Vec<f64>,
    motion: Vec<f64>,
    soft: f64,
    lds: LdsLosses,
}

/// Maps labels to indices in order of first appearance.
fn label_indices(samples: &[GaitSample]) -> (Vec<String>, Vec<usize>) {
    let mut names: Vec<String> = Vec::new();
    let idx = samples
        .iter()
        .map(|s| match names.iter().position(|n| *n == s.label) {
            Some(i) => i,
            None => {
                names.push(s.label.clone());
                names.len() - 1
            }
        })
        .collect();
    (names, idx)
}

fn prepare(samples: &[GaitSample], lds: &LdsModel, weights: &LossWeights) -> Result<Vec<Prepared>> {
    let (_, labels) = label_indices(samples);
    samples
        .iter()
        .zip(labels)
        .map(|(s, label)| {
            s.sequence.require_len(2)?;
            let rows = s.sequence.to_rotation_rows();
            let frames = s.sequence.len();
            let theta: Vec<f64> = s.sequence.frames().iter().flat_map(|f| f.to_vec()).collect();
            let mut tape = LdsTape::new(lds, &rows, frames)?;
            let motion = tape_motion_input(&tape);
            let raw = tape.reconstruction()?.to_owned();
            let soft = weights.pose * soft_pose_term(raw.view(), &theta, false).0;
            let lds = tape.lds_losses(1.0, None)?;
            Ok(Prepared { label, shape: *s.shape.coefficients(), rows, frames, theta, motion, soft, lds })
        })
        .collect()
}

/// Composed objective on one batch. With `joint` the LDS terms and the motion
/// inputs are recomputed from `model.lds` and differentiated; otherwise the
/// prepared values are used and the LDS gradient stays zero.
pub(crate) fn composite(
    model: &GaitModel,
    batch: &[&Prepared],
    weights: &LossWeights,
    joint: bool,
    mut grad: Option<&mut GaitModel>,
) -> Result<(LossBreakdown, HeadCache)> {
    let b = batch.len();
    let bf = b as f64;
    let mut shapes = Array2::zeros((b, SHAPE_DIM));
    let mut motions = Array2::zeros((b, MOTION_INPUT_DIM));
    let mut soft = 0.0;
    let mut lds = LdsLosses::default();
    let mut tapes = Vec::new();
    for (i, p) in batch.iter().enumerate() {
        shapes.row_mut(i).assign(&ndarray::ArrayView1::from(&p.shape));
        if joint {
            let mut tape = LdsTape::new(&model.lds, &p.rows, p.frames)?;
            motions.row_mut(i).assign(&ndarray::Array1::from(tape_motion_input(&tape)));
            let raw = tape.reconstruction()?.to_owned();
            let (pose, d_raw) = soft_pose_term(raw.view(), &p.theta, grad.is_some());
            soft += weights.pose * pose;
            if let Some(d) = d_raw {
                tape.add_reconstruction_grad((d * (weights.soft * weights.pose / bf)).view());
            }
            let l = tape.lds_losses(weights.motion / bf, grad.as_deref_mut().map(|g| &mut g.lds))?;
            lds.recons += l.recons;
            lds.linearity += l.linearity;
            lds.recons_rec += l.recons_rec;
            tapes.push(tape);
        } else {
            motions.row_mut(i).assign(&ndarray::ArrayView1::from(&p.motion));
            soft += p.soft;
            lds.recons += p.lds.recons;
            lds.linearity += p.lds.linearity;
            lds.recons_rec += p.lds.recons_rec;
        }
    }
    soft /= bf;
    lds.recons /= bf;
    lds.linearity /= bf;
    lds.recons_rec /= bf;

    let labels: Vec<usize> = batch.iter().map(|p| p.label).collect();
    let (out, cache) = model.head.forward_train(shapes.view(), motions.view())?;
    let (shape_unit, shape_norms) = normalize_rows(&out.shape)?;
    let (motion_unit, motion_norms) = normalize_rows(&out.motion)?;
    let (l_shape, g_shape) = batch_hard(&shape_unit, &labels, weights.margin)?;
    let (l_motion, g_motion) = batch_hard(&motion_unit, &labels, weights.margin)?;
    let (l_gait, g_gait) = batch_hard(&out.gait, &labels, weights.margin)?;
    let identity = IdentityLoss { shape: l_shape, motion: l_motion, gait: l_gait };
    let total = weights.identity * identity.total() + weights.soft * soft + weights.motion * lds.total();

    if let Some(grad) = grad {
        let w = weights.identity;
        let d_shape = normalize_rows_backward(&shape_unit, &shape_norms, (g_shape * w).view());
        let d_motion = normalize_rows_backward(&motion_unit, &motion_norms, (g_motion * w).view());
        let d_inputs = model.head.backward(&cache, d_shape.view(), d_motion.view(), (g_gait * w).view(), &mut grad.head);
        if joint {
            for (i, mut tape) in tapes.into_iter().enumerate() {
                tape.add_latent_grad(0, d_inputs.slice(s![i, ..LATENT_DIM]));
                tape.add_phase_grad(d_inputs.slice(s![i, LATENT_DIM..]));
                tape.backward(&mut grad.lds)?;
            }
        }
    }
    Ok((LossBreakdown { identity, soft, lds, total }, cache))
}

/// The composed objective on a fixed batch, as a function of every parameter of a [`GaitModel`].
#[derive(Debug, Clone)]
pub struct RecognitionObjective {
    samples: Vec<Prepared>,
    weights: LossWeights,
    joint: bool,
}

impl RecognitionObjective {
    /// `lds` fixes the precomputed motion inputs when `joint` is false.
    pub fn new(samples: &[GaitSample], lds: &LdsModel, weights: LossWeights, joint: bool) -> Result<Self> {
        Ok(Self { samples: prepare(samples, lds, &weights)?, weights, joint })
    }

    pub fn breakdown(&self, model: &GaitModel) -> Result<LossBreakdown> {
        let batch: Vec<&Prepared> = self.samples.iter().collect();
        Ok(composite(model, &batch, &self.weights, self.joint, None)?.0)
    }
}

impl Objective<GaitModel> for RecognitionObjective {
    fn value(&self, model: &GaitModel) -> Result<f64> {
        Ok(self.breakdown(model)?.total)
    }

    fn value_and_gradient(&self, model: &GaitModel) -> Result<(f64, GaitModel)> {
        let batch: Vec<&Prepared> = self.samples.iter().collect();
        let mut grad = model.zeros_like();
        let (b, _) = composite(model, &batch, &self.weights, self.joint, Some(&mut grad))?;
        Ok((b.total, grad))
    }
}

/// Checks the closed-set batch requirements: at least two identities, two samples each.
pub fn check_identities(samples: &[GaitSample]) -> Result<()> {
    let (names, labels) = label_indices(samples);
    if names.len() < 2 {
        return Err(Error::Protocol(format!("recognition training needs at least 2 identities, found {}", names.len())));
    }
    for (i, name) in names.iter().enumerate() {
        if labels.iter().filter(|l| **l == i).count() < 2 {
            return Err(Error::Protocol(format!("identity {name} has fewer than 2 sequences")));
        }
    }
    Ok(())
}

/// One epoch of P×S batches: identities are shuffled and taken P at a time,
/// each contributing up to S of its samples.
fn epoch_batches(by_label: &[Vec<usize>], config: &TrainConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut ids: Vec<usize> = (0..by_label.len()).collect();
    ids.shuffle(rng);
    let mut groups: Vec<Vec<usize>> = ids.chunks(config.identities_per_batch).map(|c| c.to_vec()).collect();
    if groups.len() > 1 && groups.last().is_some_and(|g| g.len() < 2) {
        let last = groups.pop().expect("non-empty");
        groups.last_mut().expect("non-empty").extend(last);
    }
    groups
        .into_iter()
        .map(|group| {
            let mut batch = Vec::new();
            for id in group {
                let mut members = by_label[id].clone();
                members.shuffle(rng);
                batch.extend(members.into_iter().take(config.sequences_per_identity));
            }
            batch
        })
        .collect()
}

/// Trains the recognition head (and the LDS when `train_lds_jointly` is set) on
/// labeled sequences, then recalibrates the normalization statistics on the whole set.
pub fn train_recognition(
    samples: &[GaitSample],
    lds: LdsModel,
    config: &TrainConfig,
    mut observer: Option<StepObserver<'_, GaitModel>>,
) -> std::result::Result<TrainOutcome<GaitModel>, TrainFailure<GaitModel>> {
    let head = match RecognitionHead::new(config.seed.wrapping_add(1), config.embedding_dim, config.hidden_dim) {
        Ok(h) => h,
        Err(e) => {
            let fallback = RecognitionHead::new(0, 1, 1).expect("unit head");
            return Err(TrainFailure { error: e, last_good: GaitModel { lds, head: fallback }, history: Vec::new() });
        }
    };
    let mut model = GaitModel { lds, head };
    let fail = |error: Error, model: GaitModel, history: Vec<EpochRecord>| TrainFailure { error, last_good: model, history };
    if let Err(e) = config.validate().and_then(|_| check_identities(samples)) {
        return Err(fail(e, model, Vec::new()));
    }
    let weights = LossWeights::from(config);
    let mut prepared = match prepare(samples, &model.lds, &weights) {
        Ok(p) => p,
        Err(e) => return Err(fail(e, model, Vec::new())),
    };
    let (names, labels) = label_indices(samples);
    let by_label: Vec<Vec<usize>> =
        (0..names.len()).map(|l| labels.iter().enumerate().filter(|(_, x)| **x == l).map(|(i, _)| i).collect()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(&model, config.learning_rate);
    let mut history = Vec::new();
    let mut stop = EarlyStop::new(config.early_stop_patience, config.early_stop_tolerance);
    let mut steps = 0u64;

    'epochs: for epoch in 0..config.max_epochs {
        let mut record = EpochRecord { epoch, ..Default::default() };
        let mut batches_seen = 0usize;
        for batch in epoch_batches(&by_label, config, &mut rng) {
            if config.max_steps.is_some_and(|m| steps >= m) {
                break 'epochs;
            }
            let refs: Vec<&Prepared> = batch.iter().map(|&i| &prepared[i]).collect();
            let mut grad = model.zeros_like();
            let (b, cache) = match composite(&model, &refs, &weights, config.train_lds_jointly, Some(&mut grad)) {
                Ok(r) => r,
                Err(e) => return Err(fail(e, model, history)),
            };
            if !b.total.is_finite() || !grad.all_finite() {
                return Err(fail(Error::Divergence { op: "recognition objective".into() }, model, history));
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
            model.head.update_running(&cache);
            steps += 1;
            batches_seen += 1;
            record.accumulate(
                &EpochRecord {
                    epoch,
                    recons: b.lds.recons,
                    linearity: b.lds.linearity,
                    recons_rec: b.lds.recons_rec,
                    triplet_shape: b.identity.shape,
                    triplet_motion: b.identity.motion,
                    triplet_gait: b.identity.gait,
                    identity: b.identity.total(),
                    soft: b.soft,
                    total: b.total,
                },
                1.0,
            );
            if let Some(obs) = observer.as_deref_mut() {
                obs(&StepReport { epoch, step: steps, model: &model, max_update, learning_rate: config.learning_rate });
            }
        }
        if batches_seen == 0 {
            break;
        }
        let mut mean = EpochRecord { epoch, ..Default::default() };
        mean.accumulate(&record, 1.0 / batches_seen as f64);
        history.push(mean);
        if stop.update(mean.total) {
            break;
        }
    }

    if config.train_lds_jointly {
        prepared = match prepare(samples, &model.lds, &weights) {
            Ok(p) => p,
            Err(e) => return Err(fail(e, model, history)),
        };
    }
    let n = prepared.len();
    let mut shapes = Array2::zeros((n, SHAPE_DIM));
    let mut motions = Array2::zeros((n, MOTION_INPUT_DIM));
    for (i, p) in prepared.iter().enumerate() {
        shapes.row_mut(i).assign(&ndarray::ArrayView1::from(&p.shape));
        motions.row_mut(i).assign(&ndarray::ArrayView1::from(&p.motion));
    }
    if let Err(e) = model.head.recalibrate(shapes.view(), motions.view()) {
        return Err(fail(e, model, history));
    }
    debug_assert!(prepared.iter().all(|p| p.theta.len() == p.frames * POSE_DIM));
    Ok(TrainOutcome { model, history, steps })
}
