//! Linear dynamical system over a learned latent space.
//!
//! An autoencoder lifts each 216-dim rotation frame to 90 complex latent channels.
//! A recurrent estimator reads the first half of a sequence's latents and emits one
//! phase per channel, giving a diagonal operator `K = diag(e^{iφ})`. Only phases
//! are learned: `|K_jj| = 1` holds by construction, and repeated application never
//! changes a latent's magnitude.

use std::f64::consts::PI;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure_finite, Error, Result};
use crate::nn::{Gru, GruCache, Linear, Mlp, MlpCache, Parameterized};
use crate::pose::{unflatten_frame, PoseFrame, PoseSequence, ROTATION_DIM};

pub const LATENT_CHANNELS: usize = 90;
pub const LATENT_DIM: usize = 2 * LATENT_CHANNELS;
pub const ENCODER_SIZES: [usize; 4] = [ROTATION_DIM, 216, 198, LATENT_DIM];
pub const DECODER_SIZES: [usize; 4] = [LATENT_DIM, 198, 216, ROTATION_DIM];
pub const ESTIMATOR_HIDDEN: usize = LATENT_DIM;

/// 90 complex values stored as split real and imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl LatentState {
    pub fn new(re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        if re.len() != LATENT_CHANNELS || im.len() != LATENT_CHANNELS {
            return Err(Error::invalid(format!(
                "latent state needs {LATENT_CHANNELS} real and imaginary parts, got {} and {}",
                re.len(),
                im.len()
            )));
        }
        if re.iter().chain(im.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("latent state contains non-finite values"));
        }
        Ok(Self { re, im })
    }

    /// Splits a 180-vector as `[re; im]`.
    pub fn from_stacked(values: &[f64]) -> Result<Self> {
        if values.len() != LATENT_DIM {
            return Err(Error::invalid(format!("latent vector needs {LATENT_DIM} values, got {}", values.len())));
        }
        Self::new(values[..LATENT_CHANNELS].to_vec(), values[LATENT_CHANNELS..].to_vec())
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub fn stacked(&self) -> Vec<f64> {
        let mut out = self.re.clone();
        out.extend_from_slice(&self.im);
        out
    }

    /// Complex 2-norm.
    pub fn norm(&self) -> f64 {
        self.re.iter().chain(self.im.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn channel_modulus(&self, j: usize) -> f64 {
        self.re[j].hypot(self.im[j])
    }
}

/// Diagonal unit-modulus operator parameterized by one phase per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanOperator {
    phases: Vec<f64>,
}

impl KoopmanOperator {
    /// Wraps phases into (−π, π].
    pub fn from_phases(phases: Vec<f64>) -> Result<Self> {
        if phases.len() != LATENT_CHANNELS {
            return Err(Error::invalid(format!("operator needs {LATENT_CHANNELS} phases, got {}", phases.len())));
        }
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("operator phases must be finite"));
        }
        Ok(Self { phases: phases.into_iter().map(wrap_phase).collect() })
    }

    pub fn identity() -> Self {
        Self { phases: vec![0.0; LATENT_CHANNELS] }
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// Diagonal entry `j` as `(re, im)`.
    pub fn entry(&self, j: usize) -> (f64, f64) {
        let (s, c) = self.phases[j].sin_cos();
        (c, s)
    }

    /// Largest deviation of any `|K_jj|` from one.
    pub fn max_modulus_error(&self) -> f64 {
        (0..LATENT_CHANNELS)
            .map(|j| {
                let (c, s) = self.entry(j);
                (c.hypot(s) - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

pub(crate) fn wrap_phase(p: f64) -> f64 {
    let mut w = p.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// Multiplies `z` by `K^steps`; `steps = 0` is the identity.
pub fn apply_koopman(k: &KoopmanOperator, z: &LatentState, steps: i64) -> Result<LatentState> {
    if steps < 0 {
        return Err(Error::invalid(format!("koopman steps must be non-negative, got {steps}")));
    }
    if steps == 0 {
        return Ok(z.clone());
    }
    let mut re = vec![0.0; LATENT_CHANNELS];
    let mut im = vec![0.0; LATENT_CHANNELS];
    for j in 0..LATENT_CHANNELS {
        let (s, c) = (steps as f64 * k.phases[j]).sin_cos();
        re[j] = z.re[j] * c - z.im[j] * s;
        im[j] = z.re[j] * s + z.im[j] * c;
    }
    Ok(LatentState { re, im })
}

/// Rotates a stacked latent row by `mult · φ`.
fn rotate_row(z: ArrayView1<f64>, phases: ArrayView1<f64>, mult: f64, out: &mut [f64]) {
    for j in 0..LATENT_CHANNELS {
        let (s, c) = (mult * phases[j]).sin_cos();
        let (re, im) = (z[j], z[LATENT_CHANNELS + j]);
        out[j] = re * c - im * s;
        out[LATENT_CHANNELS + j] = re * s + im * c;
    }
}

/// Mean smooth-L1 (β = 1) between two equal-length vectors.
pub fn smooth_l1(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("smooth-L1 length mismatch: {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(a.iter().zip(b).map(|(x, y)| huber(x - y)).sum::<f64>() / a.len() as f64)
}

#[inline]
pub(crate) fn huber(d: f64) -> f64 {
    let ad = d.abs();
    if ad < 1.0 {
        0.5 * d * d
    } else {
        ad - 0.5
    }
}

#[inline]
pub(crate) fn huber_grad(d: f64) -> f64 {
    d.clamp(-1.0, 1.0)
}

/// Autoencoder plus recurrent phase estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct LdsModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub estimator: Gru,
    /// Maps the final hidden state to 90 (cos, sin) pairs, stacked as `[cos; sin]`.
    pub readout: Linear,
}

impl LdsModel {
    /// Glorot-uniform weights and zero biases from a fixed seed.
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Mlp::new(&mut rng, &ENCODER_SIZES);
        let decoder = Mlp::new(&mut rng, &DECODER_SIZES);
        let estimator = Gru::new(&mut rng, LATENT_DIM, ESTIMATOR_HIDDEN);
        let readout = Linear::new(&mut rng, ESTIMATOR_HIDDEN, LATENT_DIM);
        Self { encoder, decoder, estimator, readout }
    }

    /// Checks layer widths against the fixed architecture.
    pub fn validate_architecture(&self) -> Result<()> {
        let found = (self.encoder.sizes(), self.decoder.sizes(), self.estimator.input_dim(), self.estimator.hidden_dim());
        let expected = (ENCODER_SIZES.to_vec(), DECODER_SIZES.to_vec(), LATENT_DIM, ESTIMATOR_HIDDEN);
        if found != expected || self.readout.input_dim() != ESTIMATOR_HIDDEN || self.readout.output_dim() != LATENT_DIM {
            return Err(Error::ArchitectureMismatch { expected: format!("{expected:?}"), found: format!("{found:?}") });
        }
        Ok(())
    }

    pub fn encode(&self, frame: &[f64]) -> Result<LatentState> {
        if frame.len() != ROTATION_DIM {
            return Err(Error::invalid(format!("encoder input needs {ROTATION_DIM} values, got {}", frame.len())));
        }
        if frame.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("encoder input contains non-finite values"));
        }
        let x = ArrayView2::from_shape((1, ROTATION_DIM), frame).expect("length checked");
        let z = self.encoder.forward(x);
        ensure_finite("encoder", z.iter())?;
        LatentState::from_stacked(z.as_slice().expect("standard layout"))
    }

    pub fn decode(&self, z: &LatentState) -> Result<Vec<f64>> {
        let stacked = z.stacked();
        let x = ArrayView2::from_shape((1, LATENT_DIM), &stacked).expect("length checked");
        let y = self.decoder.forward(x);
        ensure_finite("decoder", y.iter())?;
        Ok(y.into_raw_vec_and_offset().0)
    }

    /// Runs the recurrent estimator over `latents` (in order) and reads out the phases.
    pub fn estimate_koopman(&self, latents: &[LatentState]) -> Result<KoopmanOperator> {
        if latents.is_empty() {
            return Err(Error::invalid("koopman estimation needs at least one latent state"));
        }
        let rows: Vec<f64> = latents.iter().flat_map(|z| z.stacked()).collect();
        let x = Array2::from_shape_vec((latents.len(), LATENT_DIM), rows).expect("row length fixed");
        let (phases, _) = self.phases_cached(x.view());
        ensure_finite("koopman estimator", phases.iter())?;
        KoopmanOperator::from_phases(phases.to_vec())
    }

    fn phases_cached(&self, latents: ArrayView2<f64>) -> (Array1<f64>, EstimatorCache) {
        let (h, gru) = self.estimator.forward(latents);
        let pairs = self.readout.forward_vec(h.view());
        let phases = Array1::from_shape_fn(LATENT_CHANNELS, |j| {
            let p = pairs[LATENT_CHANNELS + j].atan2(pairs[j]);
            if p <= -PI {
                PI
            } else {
                p
            }
        });
        (phases, EstimatorCache { gru, hidden: h, pairs })
    }

    /// Encodes the first `⌈N/2⌉` frames and estimates the operator from them.
    pub fn estimate_from_sequence(&self, seq: &PoseSequence) -> Result<KoopmanOperator> {
        seq.require_len(1)?;
        let tape = LdsTape::new(self, &seq.to_rotation_rows(), seq.len())?;
        KoopmanOperator::from_phases(tape.phases.to_vec())
    }

    /// Raw decoder outputs for frames `N+1 ..= N+m` as an `m × 216` matrix.
    pub fn forecast_raw(&self, seq: &PoseSequence, m: usize) -> Result<Array2<f64>> {
        seq.require_len(2)?;
        let n = seq.len();
        let tape = LdsTape::new(self, &seq.to_rotation_rows(), n)?;
        let z0 = tape.latents.row(0);
        let mut rolled = Array2::zeros((m, LATENT_DIM));
        for i in 0..m {
            let steps = (n - 1 + i + 1) as f64;
            rotate_row(z0, tape.phases.view(), steps, rolled.row_mut(i).as_slice_mut().expect("row contiguous"));
        }
        let out = self.decoder.forward(rolled.view());
        ensure_finite("decoder", out.iter())?;
        Ok(out)
    }

    /// Extends a sequence by `m` frames rolled out from its first latent.
    pub fn forecast(&self, seq: &PoseSequence, m: usize) -> Result<Vec<PoseFrame>> {
        let raw = self.forecast_raw(seq, m)?;
        raw.rows()
            .into_iter()
            .map(|row| unflatten_frame(row.as_slice().expect("row contiguous"))?.to_pose_frame())
            .collect()
    }
}

impl Parameterized for LdsModel {
    fn param_slices(&self) -> Vec<(&'static str, &[f64])> {
        let mut out: Vec<(&'static str, &[f64])> = Vec::new();
        out.extend(self.encoder.slices().into_iter().map(|s| ("encoder", s)));
        out.extend(self.decoder.slices().into_iter().map(|s| ("decoder", s)));
        out.extend(self.estimator.slices().into_iter().map(|s| ("k_estimator", s)));
        out.extend(self.readout.slices().into_iter().map(|s| ("k_estimator", s)));
        out
    }

    fn param_slices_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out: Vec<(&'static str, &mut [f64])> = Vec::new();
        out.extend(self.encoder.slices_mut().into_iter().map(|s| ("encoder", s)));
        out.extend(self.decoder.slices_mut().into_iter().map(|s| ("decoder", s)));
        out.extend(self.estimator.slices_mut().into_iter().map(|s| ("k_estimator", s)));
        out.extend(self.readout.slices_mut().into_iter().map(|s| ("k_estimator", s)));
        out
    }
}

struct EstimatorCache {
    gru: GruCache,
    hidden: Array1<f64>,
    pairs: Array1<f64>,
}

/// Number of leading frames fed to the estimator.
pub fn estimator_window(n: usize) -> usize {
    n.div_ceil(2)
}

/// Component values of the LDS objective.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LdsLosses {
    pub recons: f64,
    pub linearity: f64,
    pub recons_rec: f64,
}

impl LdsLosses {
    pub fn total(&self) -> f64 {
        self.recons + self.linearity + self.recons_rec
    }
}

/// Forward record of one sequence through the encoder and estimator, with
/// accumulators for gradients flowing back into the latents and phases.
pub(crate) struct LdsTape<'m> {
    model: &'m LdsModel,
    x: Array2<f64>,
    pub latents: Array2<f64>,
    pub phases: Array1<f64>,
    encoder_cache: MlpCache,
    estimator_cache: EstimatorCache,
    reconstruction: Option<(Array2<f64>, MlpCache)>,
    d_latents: Array2<f64>,
    d_phases: Array1<f64>,
    d_reconstruction: Option<Array2<f64>>,
}

impl<'m> LdsTape<'m> {
    /// `rows` is a row-major `n × 216` matrix.
    pub fn new(model: &'m LdsModel, rows: &[f64], n: usize) -> Result<Self> {
        if n == 0 || rows.len() != n * ROTATION_DIM {
            return Err(Error::invalid(format!("expected {n} frames of {ROTATION_DIM} values")));
        }
        let x = Array2::from_shape_vec((n, ROTATION_DIM), rows.to_vec()).expect("shape checked");
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sequence contains non-finite values"));
        }
        let (latents, encoder_cache) = model.encoder.forward_cached(x.view());
        ensure_finite("encoder", latents.iter())?;
        let window = estimator_window(n);
        let (phases, estimator_cache) = model.phases_cached(latents.slice(s![..window, ..]));
        ensure_finite("koopman estimator", phases.iter())?;
        Ok(Self {
            model,
            x,
            d_latents: Array2::zeros(latents.raw_dim()),
            latents,
            phases,
            encoder_cache,
            estimator_cache,
            reconstruction: None,
            d_phases: Array1::zeros(LATENT_CHANNELS),
            d_reconstruction: None,
        })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    /// `D(E(x_i))` for every frame.
    pub fn reconstruction(&mut self) -> Result<ArrayView2<'_, f64>> {
        if self.reconstruction.is_none() {
            let (y, cache) = self.model.decoder.forward_cached(self.latents.view());
            ensure_finite("decoder", y.iter())?;
            self.reconstruction = Some((y, cache));
        }
        Ok(self.reconstruction.as_ref().expect("just set").0.view())
    }

    pub fn add_reconstruction_grad(&mut self, d: ArrayView2<f64>) {
        match &mut self.d_reconstruction {
            Some(acc) => *acc += &d,
            None => self.d_reconstruction = Some(d.to_owned()),
        }
    }

    pub fn add_latent_grad(&mut self, row: usize, d: ArrayView1<f64>) {
        let mut r = self.d_latents.row_mut(row);
        r += &d;
    }

    pub fn add_phase_grad(&mut self, d: ArrayView1<f64>) {
        self.d_phases += &d;
    }

    /// Mean smooth-L1 between every frame and its reconstruction.
    pub fn recons(&mut self, weight: f64, want_grad: bool) -> Result<f64> {
        let count = (self.len() * ROTATION_DIM) as f64;
        let x = self.x.clone();
        let y = self.reconstruction()?;
        let loss = x.iter().zip(y.iter()).map(|(a, b)| huber(a - b)).sum::<f64>() / count;
        if want_grad {
            let d = ndarray::Zip::from(&y).and(&x).map_collect(|b, a| -huber_grad(a - b) * weight / count);
            self.add_reconstruction_grad(d.view());
        }
        Ok(loss)
    }

    /// Mean smooth-L1 between `z_{i+1}` and `K z_i` over all transitions.
    pub fn linearity(&mut self, weight: f64, want_grad: bool) -> Result<f64> {
        let n = self.len();
        if n < 2 {
            return Err(Error::invalid("linearity loss needs at least two frames"));
        }
        let count = ((n - 1) * LATENT_DIM) as f64;
        let trig: Vec<(f64, f64)> = self.phases.iter().map(|p| p.sin_cos()).collect();
        let mut loss = 0.0;
        for i in 0..n - 1 {
            for (j, &(s, c)) in trig.iter().enumerate() {
                let (re, im) = (self.latents[[i, j]], self.latents[[i, LATENT_CHANNELS + j]]);
                let pre = re * c - im * s;
                let pim = re * s + im * c;
                let dre = self.latents[[i + 1, j]] - pre;
                let dim = self.latents[[i + 1, LATENT_CHANNELS + j]] - pim;
                loss += huber(dre) + huber(dim);
                if want_grad {
                    let gre = huber_grad(dre) * weight / count;
                    let gim = huber_grad(dim) * weight / count;
                    self.d_latents[[i + 1, j]] += gre;
                    self.d_latents[[i + 1, LATENT_CHANNELS + j]] += gim;
                    // Gradient on the prediction is the negation.
                    let (a, b) = (-gre, -gim);
                    self.d_latents[[i, j]] += a * c + b * s;
                    self.d_latents[[i, LATENT_CHANNELS + j]] += -a * s + b * c;
                    self.d_phases[j] += -a * pim + b * pre;
                }
            }
        }
        Ok(loss / count)
    }

    /// Mean smooth-L1 between `x_{i+1}` and `D(K^i z_1)` for `i = 1..N−1`.
    /// Decoder gradients go straight into `grad`.
    pub fn recons_rec(&mut self, weight: f64, grad: Option<&mut LdsModel>) -> Result<f64> {
        let n = self.len();
        if n < 2 {
            return Err(Error::invalid("recurrent reconstruction loss needs at least two frames"));
        }
        let mut rolled = Array2::zeros((n - 1, LATENT_DIM));
        for i in 1..n {
            rotate_row(
                self.latents.row(0),
                self.phases.view(),
                i as f64,
                rolled.row_mut(i - 1).as_slice_mut().expect("row contiguous"),
            );
        }
        let (y, cache) = self.model.decoder.forward_cached(rolled.view());
        ensure_finite("decoder", y.iter())?;
        let target = self.x.slice(s![1.., ..]);
        let count = ((n - 1) * ROTATION_DIM) as f64;
        let loss = target.iter().zip(y.iter()).map(|(a, b)| huber(a - b)).sum::<f64>() / count;
        if let Some(grad) = grad {
            let dy = ndarray::Zip::from(&y).and(&target).map_collect(|b, a| -huber_grad(a - b) * weight / count);
            let d_rolled = self.model.decoder.backward(&cache, dy, &mut grad.decoder, true).expect("input grad requested");
            for i in 1..n {
                let mult = i as f64;
                let dr = d_rolled.row(i - 1);
                let w = rolled.row(i - 1);
                for j in 0..LATENT_CHANNELS {
                    let (s, c) = (mult * self.phases[j]).sin_cos();
                    let (a, b) = (dr[j], dr[LATENT_CHANNELS + j]);
                    self.d_latents[[0, j]] += a * c + b * s;
                    self.d_latents[[0, LATENT_CHANNELS + j]] += -a * s + b * c;
                    self.d_phases[j] += mult * (-a * w[LATENT_CHANNELS + j] + b * w[j]);
                }
            }
        }
        Ok(loss)
    }

    /// Evaluates the three LDS components with the given weights.
    pub fn lds_losses(&mut self, weight: f64, mut grad: Option<&mut LdsModel>) -> Result<LdsLosses> {
        let want = grad.is_some();
        let recons = self.recons(weight, want)?;
        let linearity = self.linearity(weight, want)?;
        let recons_rec = self.recons_rec(weight, grad.as_deref_mut())?;
        Ok(LdsLosses { recons, linearity, recons_rec })
    }

    /// Propagates all accumulated gradients into the model parameters.
    pub fn backward(mut self, grad: &mut LdsModel) -> Result<()> {
        if let (Some(d), Some((_, cache))) = (self.d_reconstruction.take(), self.reconstruction.as_ref()) {
            let dz = self.model.decoder.backward(cache, d, &mut grad.decoder, true).expect("input grad requested");
            self.d_latents += &dz;
        }
        if self.d_phases.iter().any(|v| *v != 0.0) {
            let pairs = &self.estimator_cache.pairs;
            let mut d_pairs = Array1::zeros(LATENT_DIM);
            for j in 0..LATENT_CHANNELS {
                let (c, s) = (pairs[j], pairs[LATENT_CHANNELS + j]);
                let r2 = c * c + s * s;
                if r2 > 0.0 {
                    d_pairs[j] = -self.d_phases[j] * s / r2;
                    d_pairs[LATENT_CHANNELS + j] = self.d_phases[j] * c / r2;
                }
            }
            let h = self.estimator_cache.hidden.view().insert_axis(Axis(0));
            let d_h = self.model.readout.backward(h, d_pairs.view().insert_axis(Axis(0)), &mut grad.readout);
            let d_in = self.model.estimator.backward(&self.estimator_cache.gru, d_h.row(0), &mut grad.estimator);
            let window = d_in.nrows();
            let mut head = self.d_latents.slice_mut(s![..window, ..]);
            head += &d_in;
        }
        ensure_finite("latent gradient", self.d_latents.iter())?;
        self.model.encoder.backward(&self.encoder_cache, self.d_latents, &mut grad.encoder, false);
        Ok(())
    }
}

fn tape_for<'m>(model: &'m LdsModel, seq: &PoseSequence) -> Result<LdsTape<'m>> {
    seq.require_len(1)?;
    LdsTape::new(model, &seq.to_rotation_rows(), seq.len())
}

/// Per-frame-averaged autoencoder reconstruction loss.
pub fn loss_recons(model: &LdsModel, seq: &PoseSequence) -> Result<f64> {
    tape_for(model, seq)?.recons(1.0, false)
}

/// Linearity loss of the encoded sequence under an explicit operator.
pub fn loss_linearity(model: &LdsModel, seq: &PoseSequence, k: &KoopmanOperator) -> Result<f64> {
    seq.require_len(2)?;
    let mut tape = tape_for(model, seq)?;
    tape.phases = Array1::from(k.phases().to_vec());
    tape.linearity(1.0, false)
}

/// Recurrent reconstruction loss under an explicit operator.
pub fn loss_recons_rec(model: &LdsModel, seq: &PoseSequence, k: &KoopmanOperator) -> Result<f64> {
    seq.require_len(2)?;
    let mut tape = tape_for(model, seq)?;
    tape.phases = Array1::from(k.phases().to_vec());
    tape.recons_rec(1.0, None)
}

/// All three components with `K` estimated from the sequence's first half.
pub fn loss_lds(model: &LdsModel, seq: &PoseSequence) -> Result<LdsLosses> {
    seq.require_len(2)?;
    tape_for(model, seq)?.lds_losses(1.0, None)
}

/// `loss_lds` and its gradient with respect to every model parameter.
pub fn loss_lds_with_grad(model: &LdsModel, rows: &[f64], n: usize, grad: &mut LdsModel) -> Result<LdsLosses> {
    if n < 2 {
        return Err(Error::invalid("LDS loss needs at least two frames"));
    }
    let mut tape = LdsTape::new(model, rows, n)?;
    let losses = tape.lds_losses(1.0, Some(grad))?;
    tape.backward(grad)?;
    Ok(losses)
}
