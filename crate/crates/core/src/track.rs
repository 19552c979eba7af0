//! Person-track post-processing, from per-frame detections to smoothed square crops.

use crate::error::{Error, Result};

pub const DEFAULT_WINDOW: usize = 150;
pub const DEFAULT_STRIDE: usize = 50;
/// Side length crops are resized to.
pub const CROP_RESOLUTION: f64 = 224.0;
pub const MIN_SIZE: f64 = 1.0;
/// Longest frame span a track may cover.
pub const MAX_TRACK_FRAMES: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
    pub confidence: f64,
}

impl Detection {
    pub fn area(&self) -> f64 {
        self.width * self.height
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionFrame {
    pub frame: u64,
    pub boxes: Vec<Detection>,
}

/// Detections over strictly increasing frame indices. Frames that are absent, or
/// present with no boxes, are missed detections.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSeries {
    frames: Vec<DetectionFrame>,
}

impl DetectionSeries {
    pub fn new(frames: Vec<DetectionFrame>) -> Result<Self> {
        if let Some(w) = frames.windows(2).find(|w| w[1].frame <= w[0].frame) {
            return Err(Error::invalid(format!("frame {} follows frame {}", w[1].frame, w[0].frame)));
        }
        for f in &frames {
            for b in &f.boxes {
                let finite = [b.x, b.y, b.width, b.height, b.confidence].iter().all(|v| v.is_finite());
                if !finite || b.width <= 0.0 || b.height <= 0.0 {
                    return Err(Error::invalid(format!("frame {} has an invalid box {b:?}", f.frame)));
                }
            }
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[DetectionFrame] {
        &self.frames
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub x: f64,
    pub y: f64,
    pub size: f64,
}

/// Contiguous frames starting at `start_frame`; `None` marks a missed detection.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSeries {
    pub start_frame: u64,
    pub points: Vec<Option<TrackPoint>>,
}

impl TrackSeries {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn observed(&self) -> usize {
        self.points.iter().filter(|p| p.is_some()).count()
    }
}

/// Keeps the largest box of every frame; size is the larger box side.
pub fn select_largest(series: &DetectionSeries) -> Result<TrackSeries> {
    let observed: Vec<&DetectionFrame> = series.frames.iter().filter(|f| !f.boxes.is_empty()).collect();
    let (first, last) = match (observed.first(), observed.last()) {
        (Some(a), Some(b)) => (a.frame, b.frame),
        _ => return Err(Error::EmptyTrack),
    };
    let span = last - first;
    if span >= MAX_TRACK_FRAMES {
        return Err(Error::invalid(format!("track spans {span} frames, more than {MAX_TRACK_FRAMES}")));
    }
    let len = span as usize + 1;
    let mut points = vec![None; len];
    for f in observed {
        let best = f
            .boxes
            .iter()
            .fold(None::<&Detection>, |acc, b| match acc {
                Some(a) if a.area() >= b.area() => Some(a),
                _ => Some(b),
            })
            .expect("non-empty");
        points[(f.frame - first) as usize] = Some(TrackPoint { x: best.x, y: best.y, size: best.width.max(best.height) });
    }
    Ok(TrackSeries { start_frame: first, points })
}

/// A least-squares polynomial of degree ≤ 3 in the scaled variable `u = (t − center) / half_width`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cubic {
    pub center: f64,
    pub half_width: f64,
    /// Coefficients of `1, u, u², u³`; entries above the fitted degree are zero.
    pub scaled: [f64; 4],
    pub degree: usize,
}

impl Cubic {
    pub fn eval(&self, t: f64) -> f64 {
        let u = (t - self.center) / self.half_width;
        self.scaled.iter().rev().fold(0.0, |acc, c| acc * u + c)
    }

    /// Coefficients of `1, t, t², t³` in the original variable.
    pub fn monomial(&self) -> [f64; 4] {
        let (c, s) = (self.center, self.half_width);
        let a = self.scaled;
        // p(t) = Σ a_k ((t − c)/s)^k, expanded binomially.
        let mut out = [0.0; 4];
        let binom = [[1.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0], [1.0, 2.0, 1.0, 0.0], [1.0, 3.0, 3.0, 1.0]];
        for k in 0..4 {
            let scale = a[k] / s.powi(k as i32);
            for j in 0..=k {
                out[j] += scale * binom[k][j] * (-c).powi((k - j) as i32);
            }
        }
        out
    }
}

/// Least-squares cubic through `(t, v)` pairs via normal equations on a centered,
/// scaled basis. With fewer than four distinct `t` the degree drops to what the
/// data determine (three points give a quadratic, one point a constant).
pub fn fit_cubic(points: &[(f64, f64)]) -> Result<Cubic> {
    if points.is_empty() {
        return Err(Error::invalid("cannot fit a polynomial to zero points"));
    }
    if points.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
        return Err(Error::invalid("non-finite sample in polynomial fit"));
    }
    let mut ts: Vec<f64> = points.iter().map(|p| p.0).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let degree = (ts.len() - 1).min(3);
    let (lo, hi) = (ts[0], ts[ts.len() - 1]);
    let center = 0.5 * (lo + hi);
    let half_width = if hi > lo { 0.5 * (hi - lo) } else { 1.0 };
    let m = degree + 1;
    let mut ata = [[0.0; 4]; 4];
    let mut atb = [0.0; 4];
    for &(t, v) in points {
        let u = (t - center) / half_width;
        let mut basis = [1.0; 4];
        for k in 1..m {
            basis[k] = basis[k - 1] * u;
        }
        for i in 0..m {
            atb[i] += basis[i] * v;
            for j in 0..m {
                ata[i][j] += basis[i] * basis[j];
            }
        }
    }
    let solution = solve(ata, atb, m).ok_or_else(|| Error::Degenerate("singular normal equations".into()))?;
    Ok(Cubic { center, half_width, scaled: solution, degree })
}

/// Gaussian elimination with partial pivoting on the leading `m × m` block.
fn solve(mut a: [[f64; 4]; 4], mut b: [f64; 4], m: usize) -> Option<[f64; 4]> {
    for col in 0..m {
        let pivot = (col..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..m {
            let f = a[row][col] / a[col][col];
            for k in col..m {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..m).rev() {
        let tail: f64 = (row + 1..m).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmoothingParams {
    pub window: usize,
    pub stride: usize,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        Self { window: DEFAULT_WINDOW, stride: DEFAULT_STRIDE }
    }
}

/// Start offsets of the windows covering `n` frames: every `stride` frames while a
/// full window fits, plus one window flush with the end if the last one falls short.
pub fn window_starts(n: usize, params: SmoothingParams) -> Vec<usize> {
    if n <= params.window {
        return vec![0];
    }
    let mut starts: Vec<usize> = (0..=n - params.window).step_by(params.stride).collect();
    if starts.last() != Some(&(n - params.window)) {
        starts.push(n - params.window);
    }
    starts
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedTrack {
    pub start_frame: u64,
    pub points: Vec<TrackPoint>,
    /// Frames whose smoothed size was raised to [`MIN_SIZE`].
    pub clamped: Vec<bool>,
}

/// Fits each channel independently in every window and averages the evaluations of
/// all windows covering a frame. Missed frames are filled from the polynomials.
pub fn smooth_track(track: &TrackSeries, params: SmoothingParams) -> Result<SmoothedTrack> {
    if params.window == 0 || params.stride == 0 {
        return Err(Error::invalid("window and stride must be positive"));
    }
    if track.observed() == 0 {
        return Err(Error::EmptyTrack);
    }
    if track.observed() < 4 {
        return Err(Error::invalid(format!("smoothing needs at least 4 observed frames, got {}", track.observed())));
    }
    let n = track.len();
    let mut sums = vec![[0.0; 3]; n];
    let mut counts = vec![0usize; n];
    for start in window_starts(n, params) {
        let end = (start + params.window).min(n);
        let samples: Vec<(f64, [f64; 3])> = (start..end)
            .filter_map(|i| track.points[i].map(|p| (i as f64, [p.x, p.y, p.size])))
            .collect();
        if samples.is_empty() {
            continue;
        }
        let fits: Vec<Cubic> = (0..3)
            .map(|c| fit_cubic(&samples.iter().map(|(t, v)| (*t, v[c])).collect::<Vec<_>>()))
            .collect::<Result<_>>()?;
        for i in start..end {
            for c in 0..3 {
                sums[i][c] += fits[c].eval(i as f64);
            }
            counts[i] += 1;
        }
    }
    let mut points = Vec::with_capacity(n);
    let mut clamped = Vec::with_capacity(n);
    for (i, (s, &c)) in sums.iter().zip(&counts).enumerate() {
        if c == 0 {
            return Err(Error::invalid(format!("frame {} lies in no window with detections", track.start_frame + i as u64)));
        }
        let k = c as f64;
        let size = s[2] / k;
        clamped.push(size < MIN_SIZE);
        points.push(TrackPoint { x: s[0] / k, y: s[1] / k, size: size.max(MIN_SIZE) });
    }
    Ok(SmoothedTrack { start_frame: track.start_frame, points, clamped })
}

/// Square region in pixel coordinates with the factor that maps it to the crop resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropRegion {
    pub x0: f64,
    pub y0: f64,
    pub side: f64,
    pub scale: f64,
    /// The side was reduced to fit the frame.
    pub clamped: bool,
}

/// Square of side `size` centered on the point, shifted to lie inside a `width × height` frame.
pub fn square_crop(point: &TrackPoint, width: f64, height: f64) -> Result<CropRegion> {
    if !(point.size > 0.0 && width > 0.0 && height > 0.0) || !point.x.is_finite() || !point.y.is_finite() {
        return Err(Error::invalid("crop needs a positive size and frame dimensions"));
    }
    let limit = width.min(height);
    let clamped = point.size > limit;
    let side = point.size.min(limit);
    let x0 = (point.x - side / 2.0).clamp(0.0, width - side);
    let y0 = (point.y - side / 2.0).clamp(0.0, height - side);
    Ok(CropRegion { x0, y0, side, scale: CROP_RESOLUTION / side, clamped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn det(x: f64, y: f64, w: f64, h: f64) -> Detection {
        Detection { x, y, width: w, height: h, confidence: 0.9 }
    }

    #[test]
    fn largest_box_wins() {
        let series = DetectionSeries::new(vec![
            DetectionFrame { frame: 3, boxes: vec![det(1.0, 1.0, 10.0, 10.0), det(5.0, 5.0, 10.0, 20.0)] },
            DetectionFrame { frame: 5, boxes: vec![det(2.0, 2.0, 4.0, 3.0)] },
        ])
        .unwrap();
        let track = select_largest(&series).unwrap();
        assert_eq!(track.start_frame, 3);
        assert_eq!(track.points, vec![Some(TrackPoint { x: 5.0, y: 5.0, size: 20.0 }), None, Some(TrackPoint { x: 2.0, y: 2.0, size: 4.0 })]);
    }

    #[test]
    fn largest_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frames: Vec<DetectionFrame> = (0..200)
            .map(|f| DetectionFrame {
                frame: f,
                boxes: (0..rng.random_range(1..6))
                    .map(|_| det(rng.random_range(0.0..100.0), 0.0, rng.random_range(1.0..50.0), rng.random_range(1.0..50.0)))
                    .collect(),
            })
            .collect();
        let track = select_largest(&DetectionSeries::new(frames.clone()).unwrap()).unwrap();
        for (f, p) in frames.iter().zip(&track.points) {
            let mut best = 0;
            for (i, b) in f.boxes.iter().enumerate() {
                if b.area() > f.boxes[best].area() {
                    best = i;
                }
            }
            assert_eq!(p.unwrap().x, f.boxes[best].x);
        }
    }

    #[test]
    fn oversized_frame_span_is_rejected() {
        let d = Detection { x: 1.0, y: 1.0, width: 2.0, height: 2.0, confidence: 1.0 };
        let frames = vec![DetectionFrame { frame: 0, boxes: vec![d] }, DetectionFrame { frame: u64::MAX, boxes: vec![d] }];
        assert!(matches!(select_largest(&DetectionSeries::new(frames).unwrap()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn empty_series_is_rejected() {
        let series = DetectionSeries::new(vec![DetectionFrame { frame: 0, boxes: vec![] }]).unwrap();
        assert!(matches!(select_largest(&series), Err(Error::EmptyTrack)));
        assert!(DetectionSeries::new(vec![
            DetectionFrame { frame: 2, boxes: vec![] },
            DetectionFrame { frame: 2, boxes: vec![] }
        ])
        .is_err());
        assert!(DetectionSeries::new(vec![DetectionFrame { frame: 0, boxes: vec![det(0.0, 0.0, 0.0, 1.0)] }]).is_err());
    }

    #[test]
    fn exact_cubic_is_recovered() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| {
            let t = i as f64 * 0.5 - 2.0;
            (t, t * t * t - 2.0 * t)
        }).collect();
        let fit = fit_cubic(&pts).unwrap();
        let m = fit.monomial();
        for (got, want) in m.iter().zip([0.0, -2.0, 0.0, 1.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-9);
        }
        for (t, v) in pts {
            assert_abs_diff_eq!(fit.eval(t), v, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_series_has_only_constant_term() {
        let pts: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, 7.5)).collect();
        let m = fit_cubic(&pts).unwrap().monomial();
        assert_abs_diff_eq!(m[0], 7.5, epsilon = 1e-10);
        assert!(m[1..].iter().all(|c| c.abs() < 1e-10));
    }

    #[test]
    fn degree_falls_back_with_few_points() {
        assert!(fit_cubic(&[]).is_err());
        let one = fit_cubic(&[(3.0, 2.0), (3.0, 4.0)]).unwrap();
        assert_eq!(one.degree, 0);
        assert_eq!(one.eval(10.0), 3.0);
        let quad = fit_cubic(&[(0.0, 0.0), (1.0, 1.0), (2.0, 4.0)]).unwrap();
        assert_eq!(quad.degree, 2);
        assert_abs_diff_eq!(quad.eval(3.0), 9.0, epsilon = 1e-12);
    }

    #[test]
    fn residual_is_orthogonal_to_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<(f64, f64)> = (0..150).map(|i| (i as f64, 0.3 * i as f64 + rng.random_range(-5.0..5.0))).collect();
        let fit = fit_cubic(&pts).unwrap();
        for k in 0..4 {
            let dot: f64 = pts.iter().map(|(t, v)| (v - fit.eval(*t)) * ((t - fit.center) / fit.half_width).powi(k)).sum();
            assert!(dot.abs() < 1e-8, "{k} {dot}");
        }
    }

    fn cubic_track(n: usize) -> TrackSeries {
        let f = |t: f64, a: f64| a + 0.5 * t - 0.002 * t * t + 1e-6 * t * t * t;
        TrackSeries {
            start_frame: 10,
            points: (0..n).map(|i| Some(TrackPoint { x: f(i as f64, 100.0), y: f(i as f64, 50.0), size: f(i as f64, 80.0) })).collect(),
        }
    }

    #[test]
    fn windows_cover_the_track() {
        let p = SmoothingParams::default();
        assert_eq!(window_starts(100, p), vec![0]);
        assert_eq!(window_starts(150, p), vec![0]);
        assert_eq!(window_starts(300, p), vec![0, 50, 100, 150]);
        assert_eq!(window_starts(320, p), vec![0, 50, 100, 150, 170]);
    }

    #[test]
    fn cubic_tracks_pass_through_and_smoothing_is_idempotent() {
        let track = cubic_track(400);
        let out = smooth_track(&track, SmoothingParams::default()).unwrap();
        let rms = (out.points.iter().zip(&track.points).map(|(a, b)| (a.x - b.unwrap().x).powi(2)).sum::<f64>() / 400.0).sqrt();
        assert!(rms < 1e-6);
        let again = TrackSeries { start_frame: 10, points: out.points.iter().map(|p| Some(*p)).collect() };
        let twice = smooth_track(&again, SmoothingParams::default()).unwrap();
        for (a, b) in twice.points.iter().zip(&out.points) {
            assert!((a.x - b.x).abs() < 1e-9 && (a.size - b.size).abs() < 1e-9);
        }
    }

    #[test]
    fn overlap_average_is_exact_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let track = TrackSeries {
            start_frame: 0,
            points: (0..260).map(|i| Some(TrackPoint { x: i as f64 + rng.random_range(-3.0..3.0), y: 0.0, size: 50.0 })).collect(),
        };
        let p = SmoothingParams::default();
        let out = smooth_track(&track, p).unwrap();
        let frame = 120;
        let mut evals = Vec::new();
        for s in window_starts(260, p) {
            if (s..s + 150).contains(&frame) {
                let pts: Vec<(f64, f64)> = (s..s + 150).map(|i| (i as f64, track.points[i].unwrap().x)).collect();
                evals.push(fit_cubic(&pts).unwrap().eval(frame as f64));
            }
        }
        assert_eq!(evals.len(), 4);
        assert_abs_diff_eq!(out.points[frame].x, evals.iter().sum::<f64>() / 4.0, epsilon = 1e-12);
    }

    #[test]
    fn gaps_are_filled_and_channels_are_independent() {
        let mut track = cubic_track(200);
        for i in [5, 6, 7, 120] {
            track.points[i] = None;
        }
        let out = smooth_track(&track, SmoothingParams::default()).unwrap();
        assert_eq!(out.points.len(), 200);
        let full = cubic_track(200);
        assert!((out.points[6].x - full.points[6].unwrap().x).abs() < 1e-6);
        let swapped = TrackSeries {
            start_frame: 10,
            points: track.points.iter().map(|p| p.map(|q| TrackPoint { x: q.y, y: q.x, size: q.size })).collect(),
        };
        let out2 = smooth_track(&swapped, SmoothingParams::default()).unwrap();
        for (a, b) in out.points.iter().zip(&out2.points) {
            assert_eq!((a.x, a.y), (b.y, b.x));
        }
    }

    #[test]
    fn size_is_clamped_to_one_pixel() {
        let track = TrackSeries {
            start_frame: 0,
            points: (0..20).map(|i| Some(TrackPoint { x: 0.0, y: 0.0, size: 10.0 - i as f64 })).collect(),
        };
        let out = smooth_track(&track, SmoothingParams::default()).unwrap();
        assert!(out.points.iter().all(|p| p.size >= MIN_SIZE));
        assert!(out.clamped[19] && !out.clamped[0]);
    }

    #[test]
    fn crop_geometry() {
        let c = square_crop(&TrackPoint { x: 100.0, y: 100.0, size: 50.0 }, 640.0, 480.0).unwrap();
        assert_eq!((c.x0, c.y0, c.side, c.clamped), (75.0, 75.0, 50.0, false));
        assert_abs_diff_eq!(c.scale, 224.0 / 50.0);
        let c = square_crop(&TrackPoint { x: 5.0, y: 100.0, size: 50.0 }, 640.0, 480.0).unwrap();
        assert_eq!(c.x0, 0.0);
        let c = square_crop(&TrackPoint { x: 300.0, y: 200.0, size: 900.0 }, 640.0, 480.0).unwrap();
        assert!(c.clamped);
        assert_eq!(c.side, 480.0);
        assert!(square_crop(&TrackPoint { x: 0.0, y: 0.0, size: 0.0 }, 640.0, 480.0).is_err());
    }
}
