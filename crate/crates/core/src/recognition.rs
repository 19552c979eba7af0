//! Gait description head with its metric-learning losses.
//!
//! A sequence is described by its shape vector and by the LDS quantities
//! `[re z₁, im z₁, phases]`. Each goes through its own branch, the two branch
//! outputs are fused, and the fused vector is L2-normalized into a
//! [`GaitEmbedding`]. Branches are `Linear → ReLU → BatchNorm → Linear`.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure_finite, Error, Result};
use crate::lds::{KoopmanOperator, LatentState, LdsModel, LdsTape, LATENT_CHANNELS, LATENT_DIM};
use crate::nn::{BatchNorm, BatchNormCache, Linear, Parameterized};
use crate::pose::{triple_from_raw, triple_from_raw_vjp, PoseFrame, PoseSequence, ShapeVector, NUM_JOINTS, POSE_DIM, ROTATION_DIM, SHAPE_DIM};

pub const DEFAULT_EMBEDDING_DIM: usize = 64;
pub const DEFAULT_HIDDEN_DIM: usize = 2048;
/// Length of `[re z₁, im z₁, phases]`.
pub const MOTION_INPUT_DIM: usize = LATENT_DIM + LATENT_CHANNELS;

const UNIT_NORM_TOLERANCE: f64 = 1e-9;

/// A unit-norm gait descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitEmbedding {
    values: Vec<f64>,
}

impl GaitEmbedding {
    /// Normalizes `values`; fails on a zero or non-finite vector.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        let norm = l2_norm(&values);
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::invalid("cannot normalize a zero or non-finite embedding"));
        }
        let mut values = values;
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(Self { values })
    }

    /// Wraps a vector that is already unit norm.
    pub fn from_unit(values: Vec<f64>) -> Result<Self> {
        let norm = l2_norm(&values);
        if !((norm - 1.0).abs() < UNIT_NORM_TOLERANCE) {
            return Err(Error::invalid(format!("embedding norm {norm} is not 1")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine of the angle between two vectors, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("dimension mismatch: {} vs {}", a.len(), b.len())));
    }
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("cosine similarity of a zero vector"));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let cos = dot / (na * nb);
    if !cos.is_finite() {
        return Err(Error::invalid("cosine similarity of non-finite vectors"));
    }
    Ok(cos.clamp(-1.0, 1.0))
}

/// Whether batch normalization uses batch statistics or the stored running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// `Linear → ReLU → BatchNorm → Linear`.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub first: Linear,
    pub norm: BatchNorm,
    pub second: Linear,
}

#[derive(Debug, Clone)]
pub struct BranchCache {
    input: Array2<f64>,
    pre: Array2<f64>,
    act: Array2<f64>,
    norm: BatchNormCache,
    normed: Array2<f64>,
}

impl Branch {
    pub fn new<R: rand::Rng + ?Sized>(rng: &mut R, input: usize, hidden: usize, output: usize) -> Self {
        Self { first: Linear::new(rng, input, hidden), norm: BatchNorm::new(hidden), second: Linear::new(rng, hidden, output) }
    }

    pub fn input_dim(&self) -> usize {
        self.first.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.first.output_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.second.output_dim()
    }

    fn hidden(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.first.forward(x).mapv(|v| v.max(0.0))
    }

    pub fn forward(&self, x: ArrayView2<f64>, mode: Mode) -> Array2<f64> {
        match mode {
            Mode::Eval => self.second.forward(self.norm.forward_eval(self.hidden(x).view()).view()),
            Mode::Train => self.forward_train(x).0,
        }
    }

    /// Batch-statistics forward pass with everything needed by [`Branch::backward`].
    pub fn forward_train(&self, x: ArrayView2<f64>) -> (Array2<f64>, BranchCache) {
        let pre = self.first.forward(x);
        let act = pre.mapv(|v| v.max(0.0));
        let (normed, norm) = self.norm.forward_train(act.view());
        let out = self.second.forward(normed.view());
        (out, BranchCache { input: x.to_owned(), pre, act, norm, normed })
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&self, cache: &BranchCache, dy: ArrayView2<f64>, grad: &mut Branch) -> Array2<f64> {
        let d_normed = self.second.backward(cache.normed.view(), dy, &mut grad.second);
        let mut d_act = self.norm.backward(&cache.norm, d_normed.view(), &mut grad.norm);
        ndarray::Zip::from(&mut d_act).and(&cache.pre).for_each(|d, &p| {
            if p <= 0.0 {
                *d = 0.0;
            }
        });
        self.first.backward(cache.input.view(), d_act.view(), &mut grad.first)
    }

    fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.first.slices().to_vec();
        out.extend(self.norm.slices());
        out.extend(self.second.slices());
        out
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.first.slices_mut().into_iter().collect();
        out.extend(self.norm.slices_mut());
        out.extend(self.second.slices_mut());
        out
    }

    fn recalibrate(&mut self, x: ArrayView2<f64>) {
        let act = self.hidden(x);
        self.norm.set_population_stats(act.view());
    }

    fn hidden_activations(&self, cache: &BranchCache) -> usize {
        cache.act.nrows()
    }
}

/// Outputs of the head on a batch.
#[derive(Debug, Clone)]
pub struct HeadOutput {
    pub shape: Array2<f64>,
    pub motion: Array2<f64>,
    /// L2-normalized rows.
    pub gait: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct HeadCache {
    shape: BranchCache,
    motion: BranchCache,
    fusion: BranchCache,
    fused_norms: Array1<f64>,
    gait: Array2<f64>,
}

/// Two input branches feeding a fusion branch.
#[derive(Debug, Clone, PartialEq)]
pub struct RecognitionHead {
    pub shape: Branch,
    pub motion: Branch,
    pub fusion: Branch,
}

impl RecognitionHead {
    pub fn new(seed: u64, embedding_dim: usize, hidden_dim: usize) -> Result<Self> {
        if embedding_dim == 0 || hidden_dim == 0 {
            return Err(Error::invalid("embedding and hidden widths must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            shape: Branch::new(&mut rng, SHAPE_DIM, hidden_dim, embedding_dim),
            motion: Branch::new(&mut rng, MOTION_INPUT_DIM, hidden_dim, embedding_dim),
            fusion: Branch::new(&mut rng, 2 * embedding_dim, hidden_dim, embedding_dim),
        })
    }

    pub fn embedding_dim(&self) -> usize {
        self.fusion.output_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.shape.hidden_dim()
    }

    /// Checks that the three branches fit together.
    pub fn validate_architecture(&self) -> Result<()> {
        let e = self.embedding_dim();
        let h = self.hidden_dim();
        let expected = [(SHAPE_DIM, h, e), (MOTION_INPUT_DIM, h, e), (2 * e, h, e)];
        for (branch, want) in [&self.shape, &self.motion, &self.fusion].iter().zip(expected) {
            let found = (branch.input_dim(), branch.hidden_dim(), branch.output_dim());
            let consistent = branch.second.input_dim() == branch.hidden_dim() && branch.norm.gamma.len() == branch.hidden_dim();
            if found != want || !consistent {
                return Err(Error::ArchitectureMismatch {
                    expected: format!("{want:?}"),
                    found: format!("{found:?}"),
                });
            }
        }
        Ok(())
    }

    fn check_inputs(&self, shapes: ArrayView2<f64>, motions: ArrayView2<f64>) -> Result<()> {
        if shapes.ncols() != SHAPE_DIM || motions.ncols() != MOTION_INPUT_DIM || shapes.nrows() != motions.nrows() {
            return Err(Error::invalid(format!(
                "head expects B×{SHAPE_DIM} shapes and B×{MOTION_INPUT_DIM} motion inputs, got {:?} and {:?}",
                shapes.dim(),
                motions.dim()
            )));
        }
        if shapes.nrows() == 0 {
            return Err(Error::invalid("empty batch"));
        }
        ensure_finite("head input", shapes.iter().chain(motions.iter()))
    }

    pub fn forward(&self, shapes: ArrayView2<f64>, motions: ArrayView2<f64>, mode: Mode) -> Result<HeadOutput> {
        match mode {
            Mode::Train => Ok(self.forward_train(shapes, motions)?.0),
            Mode::Eval => {
                self.check_inputs(shapes, motions)?;
                let shape = self.shape.forward(shapes, Mode::Eval);
                let motion = self.motion.forward(motions, Mode::Eval);
                let fused = self.fusion.forward(concat(&shape, &motion).view(), Mode::Eval);
                let (gait, _) = normalize_rows(&fused)?;
                Ok(HeadOutput { shape, motion, gait })
            }
        }
    }

    pub fn forward_train(&self, shapes: ArrayView2<f64>, motions: ArrayView2<f64>) -> Result<(HeadOutput, HeadCache)> {
        self.check_inputs(shapes, motions)?;
        if shapes.nrows() < 2 {
            return Err(Error::invalid("batch statistics need at least two samples"));
        }
        let (shape, shape_cache) = self.shape.forward_train(shapes);
        let (motion, motion_cache) = self.motion.forward_train(motions);
        let (fused, fusion_cache) = self.fusion.forward_train(concat(&shape, &motion).view());
        let (gait, fused_norms) = normalize_rows(&fused)?;
        let cache = HeadCache { shape: shape_cache, motion: motion_cache, fusion: fusion_cache, fused_norms, gait: gait.clone() };
        Ok((HeadOutput { shape, motion, gait }, cache))
    }

    /// Backpropagates gradients on the branch outputs and the (normalized) gait output.
    /// Returns the gradient on the motion inputs.
    pub fn backward(
        &self,
        cache: &HeadCache,
        d_shape: ArrayView2<f64>,
        d_motion: ArrayView2<f64>,
        d_gait: ArrayView2<f64>,
        grad: &mut RecognitionHead,
    ) -> Array2<f64> {
        let e = self.embedding_dim();
        let d_fused = normalize_rows_backward(&cache.gait, &cache.fused_norms, d_gait);
        let d_concat = self.fusion.backward(&cache.fusion, d_fused.view(), &mut grad.fusion);
        let d_shape_total = &d_shape + &d_concat.slice(s![.., ..e]);
        let d_motion_total = &d_motion + &d_concat.slice(s![.., e..]);
        self.shape.backward(&cache.shape, d_shape_total.view(), &mut grad.shape);
        self.motion.backward(&cache.motion, d_motion_total.view(), &mut grad.motion)
    }

    /// Moves the running statistics towards those of a training batch.
    pub fn update_running(&mut self, cache: &HeadCache) {
        for (branch, c) in [(&mut self.shape, &cache.shape), (&mut self.motion, &cache.motion), (&mut self.fusion, &cache.fusion)] {
            let n = branch.hidden_activations(c);
            branch.norm.update_running(&c.norm, n);
        }
    }

    /// Replaces every running statistic with the exact statistic over a population,
    /// branch by branch: the fusion statistics see recalibrated branch outputs.
    pub fn recalibrate(&mut self, shapes: ArrayView2<f64>, motions: ArrayView2<f64>) -> Result<()> {
        self.check_inputs(shapes, motions)?;
        self.shape.recalibrate(shapes);
        self.motion.recalibrate(motions);
        let shape = self.shape.forward(shapes, Mode::Eval);
        let motion = self.motion.forward(motions, Mode::Eval);
        self.fusion.recalibrate(concat(&shape, &motion).view());
        Ok(())
    }

    pub fn shape_embed(&self, beta: &ShapeVector) -> Result<Vec<f64>> {
        let x = Array2::from_shape_vec((1, SHAPE_DIM), beta.coefficients().to_vec()).expect("shape row");
        Ok(self.shape.forward(x.view(), Mode::Eval).row(0).to_vec())
    }

    pub fn motion_embed(&self, z1: &LatentState, k: &KoopmanOperator) -> Result<Vec<f64>> {
        let input = motion_input(z1, k);
        ensure_finite("motion input", input.iter())?;
        let x = Array2::from_shape_vec((1, MOTION_INPUT_DIM), input).expect("motion row");
        Ok(self.motion.forward(x.view(), Mode::Eval).row(0).to_vec())
    }

    pub fn fuse(&self, shape_emb: &[f64], motion_emb: &[f64]) -> Result<GaitEmbedding> {
        let e = self.embedding_dim();
        if shape_emb.len() != e || motion_emb.len() != e {
            return Err(Error::invalid(format!(
                "fusion expects two {e}-vectors, got {} and {}",
                shape_emb.len(),
                motion_emb.len()
            )));
        }
        ensure_finite("fusion input", shape_emb.iter().chain(motion_emb))?;
        let mut x = Array2::zeros((1, 2 * e));
        x.slice_mut(s![0, ..e]).assign(&ArrayView1::from(shape_emb));
        x.slice_mut(s![0, e..]).assign(&ArrayView1::from(motion_emb));
        GaitEmbedding::normalized(self.fusion.forward(x.view(), Mode::Eval).row(0).to_vec())
    }

    pub fn embed(&self, beta: &ShapeVector, z1: &LatentState, k: &KoopmanOperator) -> Result<GaitEmbedding> {
        let s = self.shape_embed(beta)?;
        let m = self.motion_embed(z1, k)?;
        self.fuse(&s, &m)
    }
}

impl Parameterized for RecognitionHead {
    fn param_slices(&self) -> Vec<(&'static str, &[f64])> {
        let mut out: Vec<(&'static str, &[f64])> = Vec::new();
        out.extend(self.shape.slices().into_iter().map(|s| ("shape_branch", s)));
        out.extend(self.motion.slices().into_iter().map(|s| ("motion_branch", s)));
        out.extend(self.fusion.slices().into_iter().map(|s| ("fusion", s)));
        out
    }

    fn param_slices_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out: Vec<(&'static str, &mut [f64])> = Vec::new();
        out.extend(self.shape.slices_mut().into_iter().map(|s| ("shape_branch", s)));
        out.extend(self.motion.slices_mut().into_iter().map(|s| ("motion_branch", s)));
        out.extend(self.fusion.slices_mut().into_iter().map(|s| ("fusion", s)));
        out
    }
}

/// The LDS together with the recognition head; the full trainable parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitModel {
    pub lds: LdsModel,
    pub head: RecognitionHead,
}

impl Parameterized for GaitModel {
    fn param_slices(&self) -> Vec<(&'static str, &[f64])> {
        let mut out = self.lds.param_slices();
        out.extend(self.head.param_slices());
        out
    }

    fn param_slices_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out = self.lds.param_slices_mut();
        out.extend(self.head.param_slices_mut());
        out
    }
}

impl GaitModel {
    /// Embeds a sequence with the shape vector that accompanies it.
    pub fn embed_sequence(&self, beta: &ShapeVector, seq: &PoseSequence) -> Result<GaitEmbedding> {
        let input = sequence_motion_input(&self.lds, seq)?;
        let x = Array2::from_shape_vec((1, MOTION_INPUT_DIM), input).expect("motion row");
        let m = self.head.motion.forward(x.view(), Mode::Eval).row(0).to_vec();
        let s = self.head.shape_embed(beta)?;
        self.head.fuse(&s, &m)
    }

    /// Lengthens `probe` by `extra` forecast frames, then embeds it.
    pub fn extend_then_match(&self, beta: &ShapeVector, probe: &PoseSequence, extra: usize) -> Result<GaitEmbedding> {
        extend_then_match(&self.lds, &self.head, beta, probe, extra)
    }
}

/// `[re z₁, im z₁, phases]`.
pub fn motion_input(z1: &LatentState, k: &KoopmanOperator) -> Vec<f64> {
    let mut out = z1.stacked();
    out.extend_from_slice(k.phases());
    out
}

/// Motion input of a sequence: its first latent and its estimated operator.
pub fn sequence_motion_input(lds: &LdsModel, seq: &PoseSequence) -> Result<Vec<f64>> {
    seq.require_len(1)?;
    let tape = LdsTape::new(lds, &seq.to_rotation_rows(), seq.len())?;
    Ok(tape_motion_input(&tape))
}

pub(crate) fn tape_motion_input(tape: &LdsTape<'_>) -> Vec<f64> {
    let mut out = tape.latents.row(0).to_vec();
    out.extend(tape.phases.iter());
    out
}

pub fn extend_then_match(
    lds: &LdsModel,
    head: &RecognitionHead,
    beta: &ShapeVector,
    probe: &PoseSequence,
    extra: usize,
) -> Result<GaitEmbedding> {
    probe.require_len(2)?;
    let model_seq = if extra == 0 { probe.clone() } else { probe.extended(lds.forecast(probe, extra)?) };
    let input = sequence_motion_input(lds, &model_seq)?;
    let x = Array2::from_shape_vec((1, MOTION_INPUT_DIM), input).expect("motion row");
    let m = head.motion.forward(x.view(), Mode::Eval).row(0).to_vec();
    head.fuse(&head.shape_embed(beta)?, &m)
}

fn concat(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate(Axis(1), &[a.view(), b.view()]).expect("matching rows")
}

/// Row-wise L2 normalization; returns the normalized rows and the original norms.
pub(crate) fn normalize_rows(x: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    let norms = x.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    if norms.iter().any(|n| !(*n > 0.0 && n.is_finite())) {
        return Err(Error::Divergence { op: "L2 normalization".into() });
    }
    let y = x / &norms.view().insert_axis(Axis(1));
    Ok((y, norms))
}

/// `dx = (dy − y (y·dy)) / ‖x‖` row by row.
pub(crate) fn normalize_rows_backward(y: &Array2<f64>, norms: &Array1<f64>, dy: ArrayView2<f64>) -> Array2<f64> {
    let mut dx = dy.to_owned();
    for ((mut row, yr), n) in dx.outer_iter_mut().zip(y.outer_iter()).zip(norms.iter()) {
        let proj = yr.dot(&row);
        row.scaled_add(-proj, &yr);
        row /= *n;
    }
    dx
}

/// `max(0, d(a,p) − d(a,n) + margin)` with Euclidean distance between L2-normalized vectors.
pub fn triplet_loss(anchor: &[f64], positive: &[f64], negative: &[f64], margin: f64) -> Result<f64> {
    if anchor.len() != positive.len() || anchor.len() != negative.len() {
        return Err(Error::invalid("triplet members differ in dimension"));
    }
    if !(margin >= 0.0) {
        return Err(Error::invalid(format!("margin must be non-negative, got {margin}")));
    }
    let a = GaitEmbedding::normalized(anchor.to_vec())?;
    let p = GaitEmbedding::normalized(positive.to_vec())?;
    let n = GaitEmbedding::normalized(negative.to_vec())?;
    let d = |x: &GaitEmbedding, y: &GaitEmbedding| x.values.iter().zip(&y.values).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
    Ok((d(&a, &p) - d(&a, &n) + margin).max(0.0))
}

fn check_triplet_batch(labels: &[usize]) -> Result<()> {
    let mut counts = std::collections::BTreeMap::new();
    for l in labels {
        *counts.entry(*l).or_insert(0usize) += 1;
    }
    if counts.len() < 2 {
        return Err(Error::Protocol(format!("triplets need at least two identities, batch has {}", counts.len())));
    }
    if let Some((l, _)) = counts.iter().find(|(_, c)| **c < 2) {
        return Err(Error::Protocol(format!("identity {l} has a single sample; no positive pair exists")));
    }
    Ok(())
}

/// Batch-hard triplet loss over unit-norm rows: for every anchor the farthest
/// positive and the closest negative, averaged over anchors. Also returns the
/// gradient with respect to the rows.
pub(crate) fn batch_hard(emb: &Array2<f64>, labels: &[usize], margin: f64) -> Result<(f64, Array2<f64>)> {
    check_triplet_batch(labels)?;
    let b = emb.nrows();
    let mut dist = Array2::zeros((b, b));
    for i in 0..b {
        for j in i + 1..b {
            let d = (&emb.row(i) - &emb.row(j)).mapv(|v| v * v).sum().sqrt();
            dist[[i, j]] = d;
            dist[[j, i]] = d;
        }
    }
    let mut loss = 0.0;
    let mut grad = Array2::zeros(emb.raw_dim());
    for a in 0..b {
        let mut pos: Option<usize> = None;
        let mut neg: Option<usize> = None;
        for j in 0..b {
            if j == a {
                continue;
            }
            if labels[j] == labels[a] {
                if pos.is_none_or(|p| dist[[a, j]] > dist[[a, p]]) {
                    pos = Some(j);
                }
            } else if neg.is_none_or(|n| dist[[a, j]] < dist[[a, n]]) {
                neg = Some(j);
            }
        }
        let (p, n) = (pos.expect("checked positives"), neg.expect("checked negatives"));
        let hinge = dist[[a, p]] - dist[[a, n]] + margin;
        if hinge > 0.0 {
            loss += hinge;
            let w = 1.0 / b as f64;
            add_distance_grad(emb, &mut grad, a, p, dist[[a, p]], w);
            add_distance_grad(emb, &mut grad, a, n, dist[[a, n]], -w);
        }
    }
    Ok((loss / b as f64, grad))
}

fn add_distance_grad(emb: &Array2<f64>, grad: &mut Array2<f64>, i: usize, j: usize, d: f64, weight: f64) {
    if d <= 0.0 {
        return;
    }
    let diff = (&emb.row(i) - &emb.row(j)) * (weight / d);
    let mut gi = grad.row_mut(i);
    gi += &diff;
    let mut gj = grad.row_mut(j);
    gj -= &diff;
}

/// Batch-hard triplet losses at the three embedding levels.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IdentityLoss {
    pub shape: f64,
    pub motion: f64,
    pub gait: f64,
}

impl IdentityLoss {
    pub fn total(&self) -> f64 {
        self.shape + self.motion + self.gait
    }
}

/// Batch-hard triplet loss on each level; rows of every matrix are normalized first.
pub fn identity_loss(
    shape: ArrayView2<f64>,
    motion: ArrayView2<f64>,
    gait: ArrayView2<f64>,
    labels: &[usize],
    margin: f64,
) -> Result<IdentityLoss> {
    if shape.nrows() != labels.len() || motion.nrows() != labels.len() || gait.nrows() != labels.len() {
        return Err(Error::invalid("embedding rows and labels differ in count"));
    }
    let level = |x: ArrayView2<f64>| -> Result<f64> {
        let (y, _) = normalize_rows(&x.to_owned()).map_err(|_| Error::invalid("zero embedding"))?;
        Ok(batch_hard(&y, labels, margin)?.0)
    };
    Ok(IdentityLoss { shape: level(shape)?, motion: level(motion)?, gait: level(gait)? })
}

/// Per-frame pose estimates read from the raw decoder output of each frame.
pub fn decoded_poses(lds: &LdsModel, seq: &PoseSequence) -> Result<Vec<PoseFrame>> {
    seq.require_len(1)?;
    let mut tape = LdsTape::new(lds, &seq.to_rotation_rows(), seq.len())?;
    let raw = tape.reconstruction()?;
    raw.outer_iter()
        .map(|row| {
            let mut joints = [[0.0; 3]; NUM_JOINTS];
            for (j, out) in joints.iter_mut().enumerate() {
                *out = triple_from_raw(&row.as_slice().expect("row contiguous")[9 * j..9 * j + 9]);
            }
            PoseFrame::new(joints)
        })
        .collect()
}

/// `‖β′ − β̂‖₂ + λ_pose · Σᵢ ‖θ′ᵢ − θ̂ᵢ‖₂`.
pub fn soft_reconstruction_loss(
    beta_hat: &ShapeVector,
    theta_hat: &[PoseFrame],
    beta_prime: &ShapeVector,
    theta_prime: &[PoseFrame],
    lambda_pose: f64,
) -> Result<f64> {
    if theta_hat.len() != theta_prime.len() {
        return Err(Error::invalid(format!(
            "pose sequences differ in length: {} vs {}",
            theta_hat.len(),
            theta_prime.len()
        )));
    }
    let shape_term = l2_norm(&beta_prime.coefficients().iter().zip(beta_hat.coefficients()).map(|(a, b)| a - b).collect::<Vec<_>>());
    let pose_term: f64 = theta_hat
        .iter()
        .zip(theta_prime)
        .map(|(h, p)| l2_norm(&h.to_vec().iter().zip(p.to_vec()).map(|(a, b)| a - b).collect::<Vec<_>>()))
        .sum();
    Ok(shape_term + lambda_pose * pose_term)
}

/// Pose term of the soft loss taken directly from raw decoder rows, with the gradient on those rows.
pub(crate) fn soft_pose_term(raw: ArrayView2<f64>, theta_prime: &[f64], want_grad: bool) -> (f64, Option<Array2<f64>>) {
    let n = raw.nrows();
    let mut total = 0.0;
    let mut grad = want_grad.then(|| Array2::zeros((n, ROTATION_DIM)));
    for (i, row) in raw.outer_iter().enumerate() {
        let row = row.as_slice().expect("row contiguous");
        let mut diff = [0.0; POSE_DIM];
        for j in 0..NUM_JOINTS {
            let t = triple_from_raw(&row[9 * j..9 * j + 9]);
            for k in 0..3 {
                diff[3 * j + k] = t[k] - theta_prime[i * POSE_DIM + 3 * j + k];
            }
        }
        let norm = l2_norm(&diff);
        total += norm;
        if let Some(g) = grad.as_mut() {
            if norm > 0.0 {
                let mut g_row = g.row_mut(i);
                let g_row = g_row.as_slice_mut().expect("row contiguous");
                for j in 0..NUM_JOINTS {
                    let up = [diff[3 * j] / norm, diff[3 * j + 1] / norm, diff[3 * j + 2] / norm];
                    triple_from_raw_vjp(&row[9 * j..9 * j + 9], &up, &mut g_row[9 * j..9 * j + 9]);
                }
            }
        }
    }
    (total, grad)
}

/// Labeled gallery and probe embeddings for closed-set identification.
#[derive(Debug, Clone)]
pub struct GalleryProbeProtocol {
    pub gallery: Vec<(String, GaitEmbedding)>,
    pub probes: Vec<(String, GaitEmbedding)>,
}

/// Ranked gallery identities for one probe.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub probe: usize,
    pub true_label: String,
    /// Gallery identities with their best similarity, best first.
    pub ranking: Vec<(String, f64)>,
    /// 1-based rank of the true identity.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmcReport {
    /// `curve[k−1]` is the rank-k accuracy, for k up to the number of gallery identities.
    pub curve: Vec<f64>,
    pub probes: Vec<ProbeResult>,
}

impl CmcReport {
    /// Rank-k accuracy; ranks beyond the gallery size saturate at the last value.
    pub fn rank(&self, k: usize) -> f64 {
        if k == 0 || self.curve.is_empty() {
            return 0.0;
        }
        self.curve[(k - 1).min(self.curve.len() - 1)]
    }
}

/// Ranks gallery identities for every probe by their best cosine similarity.
/// Equal scores keep the order in which identities first appear in the gallery.
pub fn cmc_evaluate(protocol: &GalleryProbeProtocol) -> Result<CmcReport> {
    if protocol.gallery.is_empty() || protocol.probes.is_empty() {
        return Err(Error::Protocol("gallery and probe sets must be non-empty".into()));
    }
    let mut identities: Vec<&str> = Vec::new();
    for (label, _) in &protocol.gallery {
        if !identities.contains(&label.as_str()) {
            identities.push(label);
        }
    }
    let g = identities.len();
    let mut hits = vec![0usize; g];
    let mut results = Vec::with_capacity(protocol.probes.len());
    for (pi, (label, emb)) in protocol.probes.iter().enumerate() {
        if !identities.contains(&label.as_str()) {
            return Err(Error::Protocol(format!("probe identity {label} is absent from the gallery")));
        }
        let mut best = vec![f64::NEG_INFINITY; g];
        for (gl, ge) in &protocol.gallery {
            let idx = identities.iter().position(|l| *l == gl).expect("collected above");
            best[idx] = best[idx].max(cosine_similarity(emb.values(), ge.values())?);
        }
        let mut order: Vec<usize> = (0..g).collect();
        order.sort_by(|&a, &b| best[b].total_cmp(&best[a]));
        let rank = order.iter().position(|&i| identities[i] == label).expect("present") + 1;
        for h in hits.iter_mut().skip(rank - 1) {
            *h += 1;
        }
        results.push(ProbeResult {
            probe: pi,
            true_label: label.clone(),
            ranking: order.iter().map(|&i| (identities[i].to_string(), best[i])).collect(),
            rank,
        });
    }
    let p = protocol.probes.len() as f64;
    Ok(CmcReport { curve: hits.iter().map(|h| *h as f64 / p).collect(), probes: results })
}
