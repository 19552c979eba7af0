//! Objectives, reverse-mode gradients and central-difference verification.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::Parameterized;

/// A scalar function of a model's parameters with an exact gradient.
pub trait Objective<M: Parameterized> {
    fn value(&self, model: &M) -> Result<f64>;

    /// Value and gradient; the gradient has the same structure as `model`.
    fn value_and_gradient(&self, model: &M) -> Result<(f64, M)>;
}

pub fn gradient<M: Parameterized, O: Objective<M> + ?Sized>(objective: &O, params: &M) -> Result<M> {
    let (value, grad) = objective.value_and_gradient(params)?;
    if !value.is_finite() {
        return Err(Error::Divergence { op: "objective value".into() });
    }
    if !grad.all_finite() {
        return Err(Error::Divergence { op: "gradient".into() });
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteDifferenceConfig {
    pub step: f64,
    pub coordinates_per_group: usize,
    pub tolerance: f64,
    /// Denominator floor of the relative error; gradients smaller than this are
    /// effectively held to an absolute tolerance of `tolerance * floor`.
    pub floor: f64,
    /// The floor is raised to this many units of `ε·|f|/h`, the rounding noise of a
    /// central difference. Gradients too small to resolve at this step are then
    /// compared in absolute terms against that noise.
    pub noise_ulps: f64,
    pub seed: u64,
}

impl Default for FiniteDifferenceConfig {
    fn default() -> Self {
        Self { step: 1e-5, coordinates_per_group: 100, tolerance: 1e-4, floor: 1e-6, noise_ulps: 8.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupCheck {
    pub group: String,
    pub coordinates: usize,
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    /// Denominator floor actually used for this group.
    pub floor: f64,
    /// Sampled coordinates replaced because the function is not smooth within one step of them.
    pub skipped: usize,
    pub passed: bool,
}

const MAX_ATTEMPTS_PER_COORDINATE: usize = 10;

fn central_difference<M: Parameterized, O: Objective<M> + ?Sized>(
    objective: &O,
    probe: &mut M,
    tensor: usize,
    index: usize,
    step: f64,
) -> Result<f64> {
    let original = probe.param_slices()[tensor].1[index];
    probe.param_slices_mut()[tensor].1[index] = original + step;
    let plus = objective.value(probe);
    probe.param_slices_mut()[tensor].1[index] = original - step;
    let minus = objective.value(probe);
    probe.param_slices_mut()[tensor].1[index] = original;
    Ok((plus? - minus?) / (2.0 * step))
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares an analytic gradient against central differences on random coordinates
/// of every parameter group. A coordinate whose differences at `h` and `h/2` disagree
/// straddles a kink (a ReLU or a loss switching branch) and is replaced by a fresh draw.
/// `analytic` is usually `objective.value_and_gradient(model)`.
pub fn check_gradient<M: Parameterized, O: Objective<M> + ?Sized>(
    objective: &O,
    model: &M,
    analytic: &M,
    config: &FiniteDifferenceConfig,
) -> Result<Vec<GroupCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let scale = objective.value(model)?.abs();
    let noise = config.noise_ulps * f64::EPSILON * scale / config.step;
    let floor = config.floor.max(noise / config.tolerance);
    let mut probe = model.clone();
    let analytic_slices = analytic.param_slices();
    let mut reports = Vec::new();
    for group in model.groups() {
        // (tensor index, length) of every tensor in this group.
        let tensors: Vec<(usize, usize)> = model
            .param_slices()
            .iter()
            .enumerate()
            .filter(|(_, (g, _))| *g == group)
            .map(|(i, (_, s))| (i, s.len()))
            .collect();
        let total: usize = tensors.iter().map(|(_, n)| n).sum();
        let mut report = GroupCheck {
            group: group.to_string(),
            coordinates: 0,
            max_relative_error: 0.0,
            max_absolute_error: 0.0,
            floor,
            skipped: 0,
            passed: true,
        };
        let wanted = config.coordinates_per_group.min(total);
        let mut attempts = 0;
        while report.coordinates < wanted && attempts < MAX_ATTEMPTS_PER_COORDINATE * wanted {
            attempts += 1;
            let mut flat = rng.random_range(0..total);
            let (tensor, index) = tensors
                .iter()
                .find_map(|&(t, n)| {
                    if flat < n {
                        Some((t, flat))
                    } else {
                        flat -= n;
                        None
                    }
                })
                .expect("index within group");
            let numeric = central_difference(objective, &mut probe, tensor, index, config.step)?;
            let half = central_difference(objective, &mut probe, tensor, index, config.step / 2.0)?;
            if relative_error(numeric, half, floor) >= config.tolerance {
                report.skipped += 1;
                continue;
            }
            let a = analytic_slices[tensor].1[index];
            let rel = relative_error(a, numeric, floor);
            report.coordinates += 1;
            report.max_relative_error = report.max_relative_error.max(rel);
            report.max_absolute_error = report.max_absolute_error.max((a - numeric).abs());
        }
        report.passed = report.coordinates == wanted && report.max_relative_error < config.tolerance;
        reports.push(report);
    }
    Ok(reports)
}
