//! Seeded generator of periodic, subject-distinct pose sequences and shape vectors.
//!
//! Each joint follows `a_j · (h₁ sin(ωt + φ_j) + h₂ sin(2ωt + φ_j))` in axis-angle
//! space plus Gaussian noise; the ground-truth dynamics are known exactly.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::pose::{PoseFrame, PoseSequence, ShapeVector, NUM_JOINTS, SHAPE_DIM};

pub const DEFAULT_FRAME_RATE: f64 = 30.0;
pub const SHAPE_JITTER: f64 = 0.01;
pub const MIN_FREQUENCY_GAP: f64 = 0.02;
const FREQUENCY_BASE: f64 = 0.1;
const FREQUENCY_SPACING: f64 = 0.025;

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectSpec {
    pub label: String,
    /// Radians per frame.
    pub omega: f64,
    pub amplitudes: [[f64; 3]; NUM_JOINTS],
    pub phase_offsets: [f64; NUM_JOINTS],
    /// Weights of the fundamental and the second harmonic.
    pub harmonics: (f64, f64),
    pub shape: ShapeVector,
    pub noise: f64,
}

impl SubjectSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega < PI) {
            return Err(Error::invalid(format!("frequency {} outside (0, π)", self.omega)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::invalid(format!("noise level must be non-negative, got {}", self.noise)));
        }
        let (h1, h2) = self.harmonics;
        if !(h1.is_finite() && h2.is_finite()) {
            return Err(Error::invalid("harmonic weights must be finite"));
        }
        for (j, a) in self.amplitudes.iter().enumerate() {
            let peak = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt() * (h1.abs() + h2.abs());
            if !(peak < PI) {
                return Err(Error::invalid(format!("joint {j} amplitude reaches {peak:.3} rad, must stay below π")));
            }
        }
        Ok(())
    }

    /// Random amplitude profile and phase offsets for a subject walking at `omega`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, label: String, omega: f64, second_harmonic: bool, noise: f64) -> Self {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut amplitudes = [[0.0; 3]; NUM_JOINTS];
        for a in amplitudes.iter_mut() {
            let dir: [f64; 3] = [normal.sample(rng), normal.sample(rng), normal.sample(rng)];
            let n = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt().max(1e-9);
            let magnitude = rng.random_range(0.05..0.45);
            *a = [dir[0] / n * magnitude, dir[1] / n * magnitude, dir[2] / n * magnitude];
        }
        let mut phase_offsets = [0.0; NUM_JOINTS];
        phase_offsets.iter_mut().for_each(|p| *p = rng.random_range(0.0..2.0 * PI));
        let h2 = if second_harmonic { rng.random_range(0.1..0.4) } else { 0.0 };
        let mut shape = [0.0; SHAPE_DIM];
        shape.iter_mut().for_each(|b| *b = normal.sample(rng));
        Self {
            label,
            omega,
            amplitudes,
            phase_offsets,
            harmonics: (1.0, h2),
            shape: ShapeVector::new(shape).expect("finite samples"),
            noise,
        }
    }

    /// Noise-free joint angles at (possibly fractional) time `t`.
    pub fn clean_frame(&self, t: f64) -> [[f64; 3]; NUM_JOINTS] {
        let (h1, h2) = self.harmonics;
        let mut joints = [[0.0; 3]; NUM_JOINTS];
        for (j, out) in joints.iter_mut().enumerate() {
            let phi = self.phase_offsets[j];
            let w = h1 * (self.omega * t + phi).sin() + h2 * (2.0 * self.omega * t + phi).sin();
            for k in 0..3 {
                out[k] = self.amplitudes[j][k] * w;
            }
        }
        joints
    }
}

/// Generates `n` frames from a random point of the gait cycle and a per-sequence shape vector with small jitter.
pub fn generate_sequence(profile: &SubjectSpec, n: usize, seed: u64) -> Result<(PoseSequence, ShapeVector)> {
    if n < 2 {
        return Err(Error::invalid(format!("sequence length must be at least 2, got {n}")));
    }
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, SHAPE_JITTER).expect("positive std");
    let noise = Normal::new(0.0, profile.noise.max(0.0)).expect("non-negative std");
    let mut shape = *profile.shape.coefficients();
    shape.iter_mut().for_each(|b| *b += jitter.sample(&mut rng));
    let start = rng.random_range(0.0..2.0 * PI / profile.omega);
    let mut frames = Vec::with_capacity(n);
    for t in 0..n {
        let mut joints = profile.clean_frame(start + t as f64);
        if profile.noise > 0.0 {
            joints.iter_mut().flatten().for_each(|v| *v += noise.sample(&mut rng));
        }
        frames.push(PoseFrame::new(joints)?);
    }
    Ok((PoseSequence::new(frames, DEFAULT_FRAME_RATE)?, ShapeVector::new(shape)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub label: String,
    pub subject: usize,
    /// Index of this sequence within its subject.
    pub take: usize,
    pub sequence: PoseSequence,
    pub shape: ShapeVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub subjects: Vec<SubjectSpec>,
    /// Subject-major: all takes of subject 0, then subject 1, ...
    pub sequences: Vec<LabeledSequence>,
}

impl Population {
    /// Indices of the first `gallery_per_subject` takes of every subject (gallery)
    /// and the remaining takes (probes).
    pub fn split(&self, gallery_per_subject: usize) -> (Vec<usize>, Vec<usize>) {
        let mut gallery = Vec::new();
        let mut probes = Vec::new();
        for (i, s) in self.sequences.iter().enumerate() {
            if s.take < gallery_per_subject {
                gallery.push(i);
            } else {
                probes.push(i);
            }
        }
        (gallery, probes)
    }

    pub fn minimum_frequency_gap(&self) -> f64 {
        let mut w: Vec<f64> = self.subjects.iter().map(|s| s.omega).collect();
        w.sort_by(f64::total_cmp);
        w.windows(2).map(|p| p[1] - p[0]).fold(f64::INFINITY, f64::min)
    }
}

pub fn subject_label(index: usize) -> String {
    format!("subject_{index:03}")
}

fn sequence_seed(seed: u64, subject: usize, take: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((subject as u64) << 32 | take as u64).wrapping_add(1)
}

/// `g` subjects with well-separated walking frequencies, `s` takes each.
pub fn generate_population(g: usize, s: usize, n: usize, noise: f64, seed: u64) -> Result<Population> {
    if g < 2 || s < 2 {
        return Err(Error::invalid(format!("population needs at least 2 subjects and 2 takes, got {g} and {s}")));
    }
    let top = FREQUENCY_BASE + FREQUENCY_SPACING * (g as f64 - 1.0) + FREQUENCY_SPACING / 10.0;
    if top >= PI {
        return Err(Error::invalid(format!("{g} subjects do not fit distinct frequencies below π")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slots: Vec<usize> = (0..g).collect();
    slots.shuffle(&mut rng);
    let subjects: Vec<SubjectSpec> = slots
        .iter()
        .enumerate()
        .map(|(i, &slot)| {
            let jitter = rng.random_range(-FREQUENCY_SPACING / 10.0..FREQUENCY_SPACING / 10.0);
            let omega = FREQUENCY_BASE + FREQUENCY_SPACING * slot as f64 + jitter;
            SubjectSpec::random(&mut rng, subject_label(i), omega, true, noise)
        })
        .collect();
    build_population(subjects, s, n, seed)
}

/// Noise-free, single-harmonic population where every subject walks at `omega`.
pub fn single_frequency_population(g: usize, s: usize, n: usize, omega: f64, seed: u64) -> Result<Population> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subjects = (0..g).map(|i| SubjectSpec::random(&mut rng, subject_label(i), omega, false, 0.0)).collect();
    build_population(subjects, s, n, seed)
}

pub fn build_population(subjects: Vec<SubjectSpec>, s: usize, n: usize, seed: u64) -> Result<Population> {
    let mut sequences = Vec::with_capacity(subjects.len() * s);
    for (i, profile) in subjects.iter().enumerate() {
        for take in 0..s {
            let (sequence, shape) = generate_sequence(profile, n, sequence_seed(seed, i, take))?;
            sequences.push(LabeledSequence { label: profile.label.clone(), subject: i, take, sequence, shape });
        }
    }
    Ok(Population { subjects, sequences })
}
