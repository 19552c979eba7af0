//! Pose and rotation primitives shared by the rest of the crate.
//!
//! A pose frame holds 24 axis-angle triples (23 body joints plus the global
//! orientation). The LDS network consumes the same frame as 24 rotation
//! matrices flattened joint-major, row-major into a 216-vector.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const NUM_JOINTS: usize = 24;
pub const POSE_DIM: usize = NUM_JOINTS * 3;
pub const ROTATION_DIM: usize = NUM_JOINTS * 9;
pub const SHAPE_DIM: usize = 10;

pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Body shape coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeVector {
    coefficients: [f64; SHAPE_DIM],
}

impl ShapeVector {
    pub fn new(coefficients: [f64; SHAPE_DIM]) -> Result<Self> {
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("shape vector contains non-finite values"));
        }
        Ok(Self { coefficients })
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let coefficients: [f64; SHAPE_DIM] = values.try_into().map_err(|_| {
            Error::invalid(format!("shape vector needs {SHAPE_DIM} values, got {}", values.len()))
        })?;
        Self::new(coefficients)
    }

    pub fn zeros() -> Self {
        Self { coefficients: [0.0; SHAPE_DIM] }
    }

    pub fn coefficients(&self) -> &[f64; SHAPE_DIM] {
        &self.coefficients
    }

    /// Per-sequence shape estimate: the mean of per-frame shape vectors.
    pub fn average(shapes: &[ShapeVector]) -> Result<Self> {
        if shapes.is_empty() {
            return Err(Error::invalid("cannot average an empty set of shape vectors"));
        }
        let mut acc = [0.0; SHAPE_DIM];
        for s in shapes {
            for (a, c) in acc.iter_mut().zip(s.coefficients.iter()) {
                *a += c;
            }
        }
        let n = shapes.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Self::new(acc)
    }
}

/// One frame of joint rotations as axis-angle triples, each with angle in [0, π].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseFrame {
    joints: [[f64; 3]; NUM_JOINTS],
}

impl PoseFrame {
    /// Builds a frame, canonicalizing any triple whose angle exceeds π.
    pub fn new(mut joints: [[f64; 3]; NUM_JOINTS]) -> Result<Self> {
        for triple in joints.iter_mut() {
            if triple.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("pose frame contains non-finite values"));
            }
            if norm3(triple) > PI {
                *triple = triple_from_rotation(&rotation_from_triple(*triple)?)?;
            }
        }
        Ok(Self { joints })
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        if values.len() != POSE_DIM {
            return Err(Error::invalid(format!(
                "pose frame needs {POSE_DIM} values, got {}",
                values.len()
            )));
        }
        let mut joints = [[0.0; 3]; NUM_JOINTS];
        for (j, chunk) in values.chunks_exact(3).enumerate() {
            joints[j] = [chunk[0], chunk[1], chunk[2]];
        }
        Self::new(joints)
    }

    pub fn identity() -> Self {
        Self { joints: [[0.0; 3]; NUM_JOINTS] }
    }

    pub fn joints(&self) -> &[[f64; 3]; NUM_JOINTS] {
        &self.joints
    }

    /// The 72 angle values, joint-major.
    pub fn to_vec(&self) -> Vec<f64> {
        self.joints.iter().flatten().copied().collect()
    }
}

/// Time-ordered pose frames. `frame_rate` is carried along as metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    frames: Vec<PoseFrame>,
    frame_rate: f64,
}

impl PoseSequence {
    pub fn new(frames: Vec<PoseFrame>, frame_rate: f64) -> Result<Self> {
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(Error::invalid(format!("frame rate must be positive, got {frame_rate}")));
        }
        Ok(Self { frames, frame_rate })
    }

    pub fn frames(&self) -> &[PoseFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    /// The first `n` frames (or all of them if the sequence is shorter).
    pub fn truncated(&self, n: usize) -> Self {
        Self { frames: self.frames[..n.min(self.frames.len())].to_vec(), frame_rate: self.frame_rate }
    }

    pub fn extended(&self, extra: impl IntoIterator<Item = PoseFrame>) -> Self {
        let mut frames = self.frames.clone();
        frames.extend(extra);
        Self { frames, frame_rate: self.frame_rate }
    }

    /// Row-major `len × 216` matrix of flattened rotation frames.
    pub fn to_rotation_rows(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.frames.len() * ROTATION_DIM);
        for f in &self.frames {
            out.extend_from_slice(&flatten_frame(f));
        }
        out
    }

    pub(crate) fn require_len(&self, min: usize) -> Result<()> {
        if self.frames.len() < min {
            return Err(Error::invalid(format!(
                "sequence needs at least {min} frames, got {}",
                self.frames.len()
            )));
        }
        Ok(())
    }
}

/// 24 proper rotation matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationFrame {
    matrices: [Mat3; NUM_JOINTS],
}

impl RotationFrame {
    pub fn matrices(&self) -> &[Mat3; NUM_JOINTS] {
        &self.matrices
    }

    pub fn to_pose_frame(&self) -> Result<PoseFrame> {
        let mut joints = [[0.0; 3]; NUM_JOINTS];
        for (t, m) in joints.iter_mut().zip(self.matrices.iter()) {
            *t = triple_from_rotation(m)?;
        }
        PoseFrame::new(joints)
    }

    pub fn flatten(&self) -> [f64; ROTATION_DIM] {
        let mut out = [0.0; ROTATION_DIM];
        for (chunk, m) in out.chunks_exact_mut(9).zip(self.matrices.iter()) {
            for r in 0..3 {
                chunk[3 * r..3 * r + 3].copy_from_slice(&m[r]);
            }
        }
        out
    }
}

/// Exponential map from an axis-angle vector to a rotation matrix.
pub fn rotation_from_triple(triple: [f64; 3]) -> Result<Mat3> {
    if triple.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("rotation triple contains non-finite values"));
    }
    let theta2 = dot3(&triple, &triple);
    let theta = theta2.sqrt();
    // a = sin θ / θ, b = (1 − cos θ) / θ²
    let (a, b) = if theta < 1e-4 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = skew(&triple);
    let k2 = matmul3(&k, &k);
    let mut m = IDENTITY;
    for r in 0..3 {
        for c in 0..3 {
            m[r][c] += a * k[r][c] + b * k2[r][c];
        }
    }
    Ok(m)
}

/// Logarithm map back to an axis-angle vector with angle in [0, π].
///
/// At exactly π the axis sign is chosen so that its first nonzero component is positive.
pub fn triple_from_rotation(m: &Mat3) -> Result<[f64; 3]> {
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("rotation matrix contains non-finite values"));
    }
    let err = orthonormality_error(m);
    let det = det3(m);
    if err > 1e-6 || (det - 1.0).abs() > 1e-6 {
        return Err(Error::Domain(format!(
            "matrix is not a rotation (orthonormality error {err:.3e}, det {det:.6})"
        )));
    }
    let v = [
        0.5 * (m[2][1] - m[1][2]),
        0.5 * (m[0][2] - m[2][0]),
        0.5 * (m[1][0] - m[0][1]),
    ];
    let s = norm3(&v);
    let c = (0.5 * (m[0][0] + m[1][1] + m[2][2] - 1.0)).clamp(-1.0, 1.0);
    let theta = s.atan2(c);
    if theta < 1e-6 {
        let f = 1.0 + theta * theta / 6.0;
        return Ok([v[0] * f, v[1] * f, v[2] * f]);
    }
    if s > 1e-6 || c > 0.0 {
        let f = theta / s;
        return Ok([v[0] * f, v[1] * f, v[2] * f]);
    }
    // Near a half turn: recover the axis from the symmetric part, M ≈ 2aaᵀ − I.
    let k = (0..3).max_by(|&i, &j| m[i][i].total_cmp(&m[j][j])).unwrap_or(0);
    let one_minus_c = 1.0 - c;
    let ak = ((m[k][k] - c) / one_minus_c).max(0.0).sqrt();
    let mut axis = [0.0; 3];
    for i in 0..3 {
        axis[i] = if i == k { ak } else { 0.5 * (m[i][k] + m[k][i]) / (one_minus_c * ak) };
    }
    let n = norm3(&axis);
    axis.iter_mut().for_each(|a| *a /= n);
    let d = dot3(&axis, &v);
    let flip = if d.abs() > 0.0 {
        d < 0.0
    } else {
        axis.iter().find(|a| a.abs() > 1e-12).is_some_and(|a| *a < 0.0)
    };
    if flip {
        axis.iter_mut().for_each(|a| *a = -*a);
    }
    Ok([axis[0] * theta, axis[1] * theta, axis[2] * theta])
}

/// Closest proper rotation in Frobenius norm (orthogonal polar factor).
pub fn nearest_rotation(m: &Mat3) -> Result<Mat3> {
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix contains non-finite values"));
    }
    let scale = frobenius(m);
    let det = det3(m);
    if scale == 0.0 || det.abs() <= 1e-12 * scale.powi(3) {
        return Err(Error::Degenerate(format!("matrix is rank deficient (det {det:.3e})")));
    }
    let q = orthogonal_polar_factor(m)?;
    if det > 0.0 {
        return Ok(q);
    }
    // det < 0: Q is a reflection. Flip the direction of the smallest singular value.
    let qt = transpose3(&q);
    let h = symmetrize(&matmul3(&qt, m));
    let (vals, vecs) = symmetric_eigen3(&h);
    let k = (0..3).min_by(|&i, &j| vals[i].total_cmp(&vals[j])).unwrap_or(0);
    let v = [vecs[0][k], vecs[1][k], vecs[2][k]];
    let mut reflect = IDENTITY;
    for r in 0..3 {
        for c in 0..3 {
            reflect[r][c] -= 2.0 * v[r] * v[c];
        }
    }
    Ok(matmul3(&q, &reflect))
}

/// Scaled Newton iteration `X ← (γX + X⁻ᵀ/γ)/2`.
fn orthogonal_polar_factor(m: &Mat3) -> Result<Mat3> {
    let mut x = *m;
    for iter in 0..100 {
        let inv_t = transpose3(&inverse3(&x).ok_or_else(|| {
            Error::Degenerate("matrix became singular during polar iteration".into())
        })?);
        let gamma = if iter < 8 { (frobenius(&inv_t) / frobenius(&x)).sqrt() } else { 1.0 };
        let mut next = [[0.0; 3]; 3];
        let mut delta: f64 = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                next[r][c] = 0.5 * (gamma * x[r][c] + inv_t[r][c] / gamma);
                delta = delta.max((next[r][c] - x[r][c]).abs());
            }
        }
        x = next;
        if delta < 1e-15 {
            break;
        }
    }
    Ok(x)
}

/// Cyclic Jacobi eigen-decomposition of a symmetric 3×3 matrix.
/// Returns eigenvalues and eigenvectors as columns.
fn symmetric_eigen3(a: &Mat3) -> ([f64; 3], Mat3) {
    let mut a = *a;
    let mut v = IDENTITY;
    for _ in 0..50 {
        let off = a[0][1].abs() + a[0][2].abs() + a[1][2].abs();
        if off < 1e-300 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q].abs() < 1e-300 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut rot = IDENTITY;
            rot[p][p] = c;
            rot[q][q] = c;
            rot[p][q] = s;
            rot[q][p] = -s;
            a = matmul3(&transpose3(&rot), &matmul3(&a, &rot));
            v = matmul3(&v, &rot);
        }
    }
    ([a[0][0], a[1][1], a[2][2]], v)
}

/// Joint-major, row-major 216-vector of the frame's rotation matrices.
pub fn flatten_frame(frame: &PoseFrame) -> [f64; ROTATION_DIM] {
    let mut out = [0.0; ROTATION_DIM];
    for (chunk, t) in out.chunks_exact_mut(9).zip(frame.joints.iter()) {
        // Triples in a PoseFrame are finite by construction.
        let m = rotation_from_triple(*t).unwrap_or(IDENTITY);
        for r in 0..3 {
            chunk[3 * r..3 * r + 3].copy_from_slice(&m[r]);
        }
    }
    out
}

/// Inverse of [`flatten_frame`], projecting each 3×3 block onto the nearest rotation.
pub fn unflatten_frame(values: &[f64]) -> Result<RotationFrame> {
    if values.len() != ROTATION_DIM {
        return Err(Error::invalid(format!(
            "rotation frame needs {ROTATION_DIM} values, got {}",
            values.len()
        )));
    }
    let mut matrices = [IDENTITY; NUM_JOINTS];
    for (m, chunk) in matrices.iter_mut().zip(values.chunks_exact(9)) {
        let raw = [
            [chunk[0], chunk[1], chunk[2]],
            [chunk[3], chunk[4], chunk[5]],
            [chunk[6], chunk[7], chunk[8]],
        ];
        *m = nearest_rotation(&raw)?;
    }
    Ok(RotationFrame { matrices })
}

/// Smooth axis-angle read-out of an arbitrary 3×3 block, `atan2(s, c)/s · v` with
/// `v = vee((M − Mᵀ)/2)`, `s = |v|`, `c = (tr M − 1)/2`.
///
/// Agrees with [`triple_from_rotation`] on rotations with angle below π and is
/// differentiable everywhere else that `c > 0` or `s > 0`; used to compare raw
/// decoder output against angle-space targets.
pub fn triple_from_raw(m: &[f64]) -> [f64; 3] {
    let (v, _s, f) = raw_log_parts(m);
    [v[0] * f, v[1] * f, v[2] * f]
}

/// Vector-Jacobian product of [`triple_from_raw`]: accumulates `Jᵀ·upstream` into `grad` (9 entries).
pub fn triple_from_raw_vjp(m: &[f64], upstream: &[f64; 3], grad: &mut [f64]) {
    let (v, s, f) = raw_log_parts(m);
    let c = 0.5 * (m[0] + m[4] + m[8] - 1.0);
    // ∂f/∂s divided by s, and ∂f/∂c, with f(s, c) = atan2(s, c)/s.
    let r2 = s * s + c * c;
    let (fs_over_s, fc) = if s < 1e-6 && c > 0.0 {
        (-2.0 / (3.0 * c * c * c), -1.0 / (c * c) + s * s / (c * c * c * c))
    } else {
        ((c / r2 - f) / (s * s), -1.0 / r2)
    };
    // dr = f dv + v (fs/s · vᵀdv + fc dc)
    let vu = dot3(&v, upstream);
    let mut dv = [0.0; 3];
    for i in 0..3 {
        dv[i] = f * upstream[i] + fs_over_s * vu * v[i];
    }
    let dc = fc * vu;
    // v = ½(M21 − M12, M02 − M20, M10 − M01); c = ½(M00 + M11 + M22 − 1)
    grad[7] += 0.5 * dv[0];
    grad[5] -= 0.5 * dv[0];
    grad[2] += 0.5 * dv[1];
    grad[6] -= 0.5 * dv[1];
    grad[3] += 0.5 * dv[2];
    grad[1] -= 0.5 * dv[2];
    grad[0] += 0.5 * dc;
    grad[4] += 0.5 * dc;
    grad[8] += 0.5 * dc;
}

fn raw_log_parts(m: &[f64]) -> ([f64; 3], f64, f64) {
    let v = [0.5 * (m[7] - m[5]), 0.5 * (m[2] - m[6]), 0.5 * (m[3] - m[1])];
    let s = norm3(&v);
    let c = 0.5 * (m[0] + m[4] + m[8] - 1.0);
    let f = if s < 1e-6 && c > 0.0 { (1.0 - s * s / (3.0 * c * c)) / c } else { s.atan2(c) / s };
    (v, s, f)
}

pub fn orthonormality_error(m: &Mat3) -> f64 {
    let mtm = matmul3(&transpose3(m), m);
    let mut err: f64 = 0.0;
    for r in 0..3 {
        for c in 0..3 {
            err = err.max((mtm[r][c] - IDENTITY[r][c]).abs());
        }
    }
    err
}

pub fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn matmul3(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c] + a[r][2] * b[2][c];
        }
    }
    out
}

pub fn transpose3(m: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = m[c][r];
        }
    }
    out
}

pub fn mat_vec3(m: &Mat3, v: &[f64; 3]) -> [f64; 3] {
    [dot3(&m[0], v), dot3(&m[1], v), dot3(&m[2], v)]
}

fn inverse3(m: &Mat3) -> Option<Mat3> {
    let det = det3(m);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            let (r1, r2) = ((c + 1) % 3, (c + 2) % 3);
            let (c1, c2) = ((r + 1) % 3, (r + 2) % 3);
            inv[r][c] = (m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1]) / det;
        }
    }
    Some(inv)
}

fn symmetrize(m: &Mat3) -> Mat3 {
    let mut out = *m;
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = 0.5 * (m[r][c] + m[c][r]);
        }
    }
    out
}

fn skew(v: &[f64; 3]) -> Mat3 {
    [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
}

fn frobenius(m: &Mat3) -> f64 {
    m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm3(v: &[f64; 3]) -> f64 {
    dot3(v, v).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_abs_diff(a: &Mat3, b: &Mat3) -> f64 {
        a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn random_triple(rng: &mut ChaCha8Rng, max_angle: f64) -> [f64; 3] {
        loop {
            let v: [f64; 3] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let n = norm3(&v);
            if n > 1e-3 && n <= 1.0 {
                let angle = rng.random_range(0.0..max_angle);
                return [v[0] / n * angle, v[1] / n * angle, v[2] / n * angle];
            }
        }
    }

    #[test]
    fn zero_triple_is_identity() {
        assert_eq!(rotation_from_triple([0.0; 3]).unwrap(), IDENTITY);
    }

    #[test]
    fn half_turn_about_x() {
        let m = rotation_from_triple([PI, 0.0, 0.0]).unwrap();
        let expected = [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]];
        assert!(max_abs_diff(&m, &expected) < 1e-15);
        let t = triple_from_rotation(&expected).unwrap();
        assert_abs_diff_eq!(norm3(&t), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(t[0].abs(), PI, epsilon = 1e-12);
    }

    #[test]
    fn non_finite_triple_rejected() {
        assert!(matches!(rotation_from_triple([f64::NAN, 0.0, 0.0]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn random_rotations_are_orthonormal_and_fix_their_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let r = random_triple(&mut rng, PI);
            let m = rotation_from_triple(r).unwrap();
            assert!(orthonormality_error(&m) < 1e-12);
            let n = norm3(&r);
            let axis = [r[0] / n, r[1] / n, r[2] / n];
            let moved = mat_vec3(&m, &axis);
            for i in 0..3 {
                assert_abs_diff_eq!(moved[i], axis[i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn identity_logs_to_zero() {
        assert_eq!(triple_from_rotation(&IDENTITY).unwrap(), [0.0; 3]);
    }

    #[test]
    fn round_trip_thousand_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for i in 0..1000 {
            // Include angles right next to π.
            let max_angle = if i % 10 == 0 { PI } else { 3.0 };
            let m = rotation_from_triple(random_triple(&mut rng, max_angle)).unwrap();
            let t = triple_from_rotation(&m).unwrap();
            assert!(norm3(&t) <= PI + 1e-12);
            worst = worst.max(max_abs_diff(&rotation_from_triple(t).unwrap(), &m));
        }
        assert!(worst < 1e-8, "worst round-trip error {worst}");
    }

    #[test]
    fn near_half_turn_round_trip() {
        for eps in [0.0, 1e-9, 1e-7, 1e-5, 1e-3] {
            let axis = [0.36, -0.48, 0.8];
            let angle = PI - eps;
            let m = rotation_from_triple([axis[0] * angle, axis[1] * angle, axis[2] * angle]).unwrap();
            let t = triple_from_rotation(&m).unwrap();
            assert!(max_abs_diff(&rotation_from_triple(t).unwrap(), &m) < 1e-8, "eps {eps}");
        }
    }

    #[test]
    fn log_rejects_non_rotation() {
        let mut m = IDENTITY;
        m[0][0] = 1.1;
        assert!(matches!(triple_from_rotation(&m), Err(Error::Domain(_))));
        let reflection = [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(matches!(triple_from_rotation(&reflection), Err(Error::Domain(_))));
    }

    #[test]
    fn canonicalizes_large_angles() {
        let mut joints = [[0.0; 3]; NUM_JOINTS];
        joints[3] = [4.0, 0.0, 0.0];
        let f = PoseFrame::new(joints).unwrap();
        let t = f.joints()[3];
        assert!(norm3(&t) <= PI);
        assert_abs_diff_eq!(t[0], 4.0 - 2.0 * PI, epsilon = 1e-12);
    }

    #[test]
    fn nearest_rotation_is_idempotent_and_absorbs_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let r = rotation_from_triple(random_triple(&mut rng, PI)).unwrap();
            assert!(max_abs_diff(&nearest_rotation(&r).unwrap(), &r) < 1e-12);
            let mut scaled = r;
            scaled.iter_mut().flatten().for_each(|v| *v *= 1.05);
            assert!(max_abs_diff(&nearest_rotation(&scaled).unwrap(), &r) < 1e-12);
        }
    }

    #[test]
    fn nearest_rotation_handles_reflections() {
        let m = [[-1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let r = nearest_rotation(&m).unwrap();
        assert!(orthonormality_error(&r) < 1e-12);
        assert_abs_diff_eq!(det3(&r), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn nearest_rotation_rejects_rank_deficient() {
        let m = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]];
        assert!(matches!(nearest_rotation(&m), Err(Error::Degenerate(_))));
        assert!(matches!(nearest_rotation(&[[0.0; 3]; 3]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn identity_frame_flattens_to_identities() {
        let flat = flatten_frame(&PoseFrame::identity());
        for chunk in flat.chunks_exact(9) {
            assert_eq!(chunk, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn unflatten_round_trip_and_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut joints = [[0.0; 3]; NUM_JOINTS];
        joints.iter_mut().for_each(|j| *j = random_triple(&mut rng, 2.5));
        let frame = PoseFrame::new(joints).unwrap();
        let flat = flatten_frame(&frame);
        let back = unflatten_frame(&flat).unwrap().flatten();
        assert!(flat.iter().zip(back.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
        let scaled: Vec<f64> = flat.iter().map(|v| v * 1.05).collect();
        let back = unflatten_frame(&scaled).unwrap().flatten();
        assert!(flat.iter().zip(back.iter()).all(|(a, b)| (a - b).abs() < 1e-9));
        assert!(unflatten_frame(&flat[..215]).is_err());
    }

    #[test]
    fn raw_log_agrees_with_log_on_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let t = random_triple(&mut rng, 3.0);
            let m = rotation_from_triple(t).unwrap();
            let flat: Vec<f64> = m.iter().flatten().copied().collect();
            let r = triple_from_raw(&flat);
            for i in 0..3 {
                assert_abs_diff_eq!(r[i], t[i], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn raw_log_vjp_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for case in 0..50 {
            let angle_cap = if case < 10 { 1e-4 } else { 2.5 };
            let m = rotation_from_triple(random_triple(&mut rng, angle_cap)).unwrap();
            let mut flat: Vec<f64> = m.iter().flatten().copied().collect();
            flat.iter_mut().for_each(|v| *v += rng.random_range(-0.05..0.05));
            let up = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let mut grad = [0.0; 9];
            triple_from_raw_vjp(&flat, &up, &mut grad);
            let h = 1e-6;
            for k in 0..9 {
                let mut p = flat.clone();
                p[k] += h;
                let mut q = flat.clone();
                q[k] -= h;
                let (fp, fq) = (triple_from_raw(&p), triple_from_raw(&q));
                let fd: f64 = (0..3).map(|i| up[i] * (fp[i] - fq[i]) / (2.0 * h)).sum();
                assert_abs_diff_eq!(grad[k], fd, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn average_shape() {
        let a = ShapeVector::new([1.0; SHAPE_DIM]).unwrap();
        let b = ShapeVector::new([3.0; SHAPE_DIM]).unwrap();
        assert_eq!(ShapeVector::average(&[a, b]).unwrap().coefficients(), &[2.0; SHAPE_DIM]);
        assert!(ShapeVector::average(&[]).is_err());
    }
}
