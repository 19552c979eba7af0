//! Neural-network layers, each with a hand-written backward pass. Activations are batched row-major (`batch × features`).

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

/// Models whose trainable values can be visited as flat slices in a stable order.
pub trait Parameterized: Clone {
    /// `(group, values)` for every trainable tensor, in declaration order.
    fn param_slices(&self) -> Vec<(&'static str, &[f64])>;
    fn param_slices_mut(&mut self) -> Vec<(&'static str, &mut [f64])>;

    /// A structurally identical value with every parameter zeroed; used as a gradient buffer.
    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, s) in z.param_slices_mut() {
            s.fill(0.0);
        }
        z
    }

    fn param_count(&self) -> usize {
        self.param_slices().iter().map(|(_, s)| s.len()).sum()
    }

    /// Distinct group names in order of first appearance.
    fn groups(&self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = Vec::new();
        for (g, _) in self.param_slices() {
            if !out.contains(&g) {
                out.push(g);
            }
        }
        out
    }

    fn all_finite(&self) -> bool {
        self.param_slices().iter().all(|(_, s)| s.iter().all(|v| v.is_finite()))
    }

    /// `self += scale * other`, tensor by tensor.
    fn add_scaled(&mut self, other: &Self, scale: f64) {
        for ((_, dst), (_, src)) in self.param_slices_mut().into_iter().zip(other.param_slices()) {
            dst.iter_mut().zip(src.iter()).for_each(|(d, s)| *d += scale * s);
        }
    }

    fn scale(&mut self, factor: f64) {
        for (_, s) in self.param_slices_mut() {
            s.iter_mut().for_each(|v| *v *= factor);
        }
    }

    fn squared_norm(&self) -> f64 {
        self.param_slices().iter().flat_map(|(_, s)| s.iter()).map(|v| v * v).sum()
    }
}

pub(crate) fn glorot_uniform<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite glorot bound");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

/// `y = x Wᵀ + b` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, input: usize, output: usize) -> Self {
        Self { weight: glorot_uniform(rng, output, input), bias: Array1::zeros(output) }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.weight.t());
        y += &self.bias;
        y
    }

    pub fn forward_vec(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.weight.dot(&x) + &self.bias
    }

    /// Accumulates parameter gradients into `grad` and returns `∂L/∂x`.
    pub fn backward(&self, x: ArrayView2<f64>, dy: ArrayView2<f64>, grad: &mut Linear) -> Array2<f64> {
        ndarray::linalg::general_mat_mul(1.0, &dy.t(), &x, 1.0, &mut grad.weight);
        grad.bias += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight)
    }

    /// Same as [`Linear::backward`] without computing the input gradient.
    pub fn backward_params(&self, x: ArrayView2<f64>, dy: ArrayView2<f64>, grad: &mut Linear) {
        ndarray::linalg::general_mat_mul(1.0, &dy.t(), &x, 1.0, &mut grad.weight);
        grad.bias += &dy.sum_axis(Axis(0));
    }

    pub(crate) fn slices(&self) -> [&[f64]; 2] {
        [self.weight.as_slice().expect("standard layout"), self.bias.as_slice().expect("standard layout")]
    }

    pub(crate) fn slices_mut(&mut self) -> [&mut [f64]; 2] {
        [
            self.weight.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("standard layout"),
        ]
    }
}

/// Stack of linear layers with ReLU between consecutive layers (none after the last).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Inputs seen by every layer during a forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
}

impl Mlp {
    /// `sizes = [input, hidden.., output]`.
    pub fn new<R: Rng + ?Sized>(rng: &mut R, sizes: &[usize]) -> Self {
        Self { layers: sizes.windows(2).map(|w| Linear::new(rng, w[0], w[1])).collect() }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![self.layers[0].input_dim()];
        out.extend(self.layers.iter().map(Linear::output_dim));
        out
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut h = self.layers[0].forward(x);
        for layer in &self.layers[1..] {
            h.mapv_inplace(relu);
            h = layer.forward(h.view());
        }
        h
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> (Array2<f64>, MlpCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        inputs.push(x.to_owned());
        let mut h = self.layers[0].forward(x);
        for layer in &self.layers[1..] {
            h.mapv_inplace(relu);
            let next = layer.forward(h.view());
            inputs.push(h);
            h = next;
        }
        (h, MlpCache { inputs })
    }

    /// Backpropagates `dy`; returns `∂L/∂x` when `need_input_grad`.
    pub fn backward(
        &self,
        cache: &MlpCache,
        dy: Array2<f64>,
        grad: &mut Mlp,
        need_input_grad: bool,
    ) -> Option<Array2<f64>> {
        let mut d = dy;
        for k in (0..self.layers.len()).rev() {
            let x = cache.inputs[k].view();
            if k == 0 {
                if !need_input_grad {
                    self.layers[0].backward_params(x, d.view(), &mut grad.layers[0]);
                    return None;
                }
                return Some(self.layers[0].backward(x, d.view(), &mut grad.layers[0]));
            }
            let mut dx = self.layers[k].backward(x, d.view(), &mut grad.layers[k]);
            // ReLU gate: the layer input is the post-activation of the previous layer.
            Zip::from(&mut dx).and(&cache.inputs[k]).for_each(|g, &a| {
                if a <= 0.0 {
                    *g = 0.0;
                }
            });
            d = dx;
        }
        None
    }

    pub(crate) fn slices(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.slices()).collect()
    }

    pub(crate) fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| l.slices_mut()).collect()
    }
}

#[inline]
pub(crate) fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

#[inline]
fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Single-layer gated recurrent unit. Gate blocks are stacked `[reset; update; candidate]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gru {
    pub w_input: Array2<f64>,
    pub w_hidden: Array2<f64>,
    pub b_input: Array1<f64>,
    pub b_hidden: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct GruCache {
    inputs: Array2<f64>,
    /// Hidden state entering each step; row `t` is `h_{t}` with `h_0 = 0`.
    hidden: Array2<f64>,
    reset: Array2<f64>,
    update: Array2<f64>,
    candidate: Array2<f64>,
    /// `W_hn h + b_hn` per step.
    hidden_candidate: Array2<f64>,
}

impl Gru {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, input: usize, hidden: usize) -> Self {
        let mut w_input = Array2::zeros((3 * hidden, input));
        let mut w_hidden = Array2::zeros((3 * hidden, hidden));
        for g in 0..3 {
            w_input.slice_mut(s![g * hidden..(g + 1) * hidden, ..]).assign(&glorot_uniform(rng, hidden, input));
            w_hidden.slice_mut(s![g * hidden..(g + 1) * hidden, ..]).assign(&glorot_uniform(rng, hidden, hidden));
        }
        Self { w_input, w_hidden, b_input: Array1::zeros(3 * hidden), b_hidden: Array1::zeros(3 * hidden) }
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hidden.ncols()
    }

    /// Runs the recurrence over the rows of `x` from a zero state; returns the final hidden state.
    pub fn forward(&self, x: ArrayView2<f64>) -> (Array1<f64>, GruCache) {
        let hsz = self.hidden_dim();
        let steps = x.nrows();
        let mut xi = x.dot(&self.w_input.t());
        xi += &self.b_input;
        let mut cache = GruCache {
            inputs: x.to_owned(),
            hidden: Array2::zeros((steps + 1, hsz)),
            reset: Array2::zeros((steps, hsz)),
            update: Array2::zeros((steps, hsz)),
            candidate: Array2::zeros((steps, hsz)),
            hidden_candidate: Array2::zeros((steps, hsz)),
        };
        for t in 0..steps {
            let h = cache.hidden.row(t).to_owned();
            let hh = self.w_hidden.dot(&h) + &self.b_hidden;
            let xr = xi.row(t);
            let mut h_next = Array1::zeros(hsz);
            for j in 0..hsz {
                let r = sigmoid(xr[j] + hh[j]);
                let z = sigmoid(xr[hsz + j] + hh[hsz + j]);
                let hn = hh[2 * hsz + j];
                let n = (xr[2 * hsz + j] + r * hn).tanh();
                cache.reset[[t, j]] = r;
                cache.update[[t, j]] = z;
                cache.candidate[[t, j]] = n;
                cache.hidden_candidate[[t, j]] = hn;
                h_next[j] = (1.0 - z) * n + z * h[j];
            }
            cache.hidden.row_mut(t + 1).assign(&h_next);
        }
        (cache.hidden.row(steps).to_owned(), cache)
    }

    /// Backpropagation through time from a gradient on the final hidden state.
    /// Returns `∂L/∂x` for every input row.
    pub fn backward(&self, cache: &GruCache, d_final: ArrayView1<f64>, grad: &mut Gru) -> Array2<f64> {
        let hsz = self.hidden_dim();
        let steps = cache.inputs.nrows();
        let mut d_xi = Array2::zeros((steps, 3 * hsz));
        let mut dh = d_final.to_owned();
        let mut d_hh = Array1::zeros(3 * hsz);
        for t in (0..steps).rev() {
            let h_prev = cache.hidden.row(t);
            let mut dh_prev = Array1::zeros(hsz);
            for j in 0..hsz {
                let (r, z, n, hn) = (
                    cache.reset[[t, j]],
                    cache.update[[t, j]],
                    cache.candidate[[t, j]],
                    cache.hidden_candidate[[t, j]],
                );
                let dn = dh[j] * (1.0 - z);
                let dz = dh[j] * (h_prev[j] - n);
                dh_prev[j] = dh[j] * z;
                let dan = dn * (1.0 - n * n);
                let dar = dan * hn * r * (1.0 - r);
                let daz = dz * z * (1.0 - z);
                d_xi[[t, j]] = dar;
                d_xi[[t, hsz + j]] = daz;
                d_xi[[t, 2 * hsz + j]] = dan;
                d_hh[j] = dar;
                d_hh[hsz + j] = daz;
                d_hh[2 * hsz + j] = dan * r;
            }
            // dW_hh += d_hh ⊗ h_prev
            Zip::from(grad.w_hidden.rows_mut()).and(&d_hh).for_each(|mut row, &g| {
                if g != 0.0 {
                    row.scaled_add(g, &h_prev);
                }
            });
            grad.b_hidden += &d_hh;
            dh_prev += &self.w_hidden.t().dot(&d_hh);
            dh = dh_prev;
        }
        ndarray::linalg::general_mat_mul(1.0, &d_xi.t(), &cache.inputs, 1.0, &mut grad.w_input);
        grad.b_input += &d_xi.sum_axis(Axis(0));
        d_xi.dot(&self.w_input)
    }

    pub(crate) fn slices(&self) -> Vec<&[f64]> {
        vec![
            self.w_input.as_slice().expect("standard layout"),
            self.w_hidden.as_slice().expect("standard layout"),
            self.b_input.as_slice().expect("standard layout"),
            self.b_hidden.as_slice().expect("standard layout"),
        ]
    }

    pub(crate) fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w_input.as_slice_mut().expect("standard layout"),
            self.w_hidden.as_slice_mut().expect("standard layout"),
            self.b_input.as_slice_mut().expect("standard layout"),
            self.b_hidden.as_slice_mut().expect("standard layout"),
        ]
    }
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Feature-wise batch normalization with learnable affine terms.
///
/// Training passes normalize with the batch's own (biased) statistics; inference uses
/// the stored running statistics, which are not trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    normalized: Array2<f64>,
    inv_std: Array1<f64>,
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

impl BatchNorm {
    pub fn new(features: usize) -> Self {
        Self {
            gamma: Array1::ones(features),
            beta: Array1::zeros(features),
            running_mean: Array1::zeros(features),
            running_var: Array1::ones(features),
        }
    }

    pub fn forward_train(&self, x: ArrayView2<f64>) -> (Array2<f64>, BatchNormCache) {
        let n = x.nrows() as f64;
        let mean = x.sum_axis(Axis(0)) / n;
        let centered = &x - &mean;
        let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / n;
        let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
        let normalized = centered * &inv_std;
        let y = &normalized * &self.gamma + &self.beta;
        (y, BatchNormCache { normalized, inv_std, mean, var })
    }

    pub fn forward_eval(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let inv_std = self.running_var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
        (&x - &self.running_mean) * &(inv_std * &self.gamma) + &self.beta
    }

    pub fn backward(&self, cache: &BatchNormCache, dy: ArrayView2<f64>, grad: &mut BatchNorm) -> Array2<f64> {
        let n = dy.nrows() as f64;
        grad.beta += &dy.sum_axis(Axis(0));
        grad.gamma += &(&dy * &cache.normalized).sum_axis(Axis(0));
        let dxhat = &dy * &self.gamma;
        let sum_dxhat = dxhat.sum_axis(Axis(0));
        let sum_dxhat_xhat = (&dxhat * &cache.normalized).sum_axis(Axis(0));
        // dx = inv_std/n · (n·dxhat − Σdxhat − xhat·Σ(dxhat·xhat))
        let mut dx = dxhat * n - &sum_dxhat - &(&cache.normalized * &sum_dxhat_xhat);
        dx *= &(&cache.inv_std / n);
        dx
    }

    /// Exponential moving update of the running statistics from a training batch.
    pub fn update_running(&mut self, cache: &BatchNormCache, batch: usize) {
        let unbiased = if batch > 1 { batch as f64 / (batch - 1) as f64 } else { 1.0 };
        self.running_mean = &self.running_mean * (1.0 - BN_MOMENTUM) + &cache.mean * BN_MOMENTUM;
        self.running_var = &self.running_var * (1.0 - BN_MOMENTUM) + &(&cache.var * (unbiased * BN_MOMENTUM));
    }

    /// Replaces the running statistics with the exact statistics of `x`.
    pub fn set_population_stats(&mut self, x: ArrayView2<f64>) {
        let n = x.nrows() as f64;
        let mean = x.sum_axis(Axis(0)) / n;
        let centered = &x - &mean;
        let denom = if x.nrows() > 1 { n - 1.0 } else { 1.0 };
        self.running_var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / denom;
        self.running_mean = mean;
    }

    pub(crate) fn slices(&self) -> [&[f64]; 2] {
        [self.gamma.as_slice().expect("standard layout"), self.beta.as_slice().expect("standard layout")]
    }

    pub(crate) fn slices_mut(&mut self) -> [&mut [f64]; 2] {
        [
            self.gamma.as_slice_mut().expect("standard layout"),
            self.beta.as_slice_mut().expect("standard layout"),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_simple_fn((r, c), || rng.random_range(-1.0..1.0))
    }

    /// Scalar objective `Σ w ⊙ f(x)` for fixed random weights `w`.
    fn weighted_sum(y: &Array2<f64>, w: &Array2<f64>) -> f64 {
        (y * w).sum()
    }

    #[test]
    fn glorot_bounds_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = glorot_uniform(&mut rng, 30, 20);
        let limit = (6.0f64 / 50.0).sqrt();
        assert!(w.iter().all(|v| v.abs() <= limit));
    }

    #[test]
    fn mlp_input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mlp = Mlp::new(&mut rng, &[5, 7, 6, 4]);
        let x = random_matrix(&mut rng, 3, 5);
        let w = random_matrix(&mut rng, 3, 4);
        let (_, cache) = mlp.forward_cached(x.view());
        let mut grad = mlp.zeros_like();
        let dx = mlp.backward(&cache, w.clone(), &mut grad, true).unwrap();
        let h = 1e-6;
        for idx in [(0, 0), (1, 3), (2, 4)] {
            let mut xp = x.clone();
            xp[idx] += h;
            let mut xm = x.clone();
            xm[idx] -= h;
            let fd = (weighted_sum(&mlp.forward(xp.view()), &w) - weighted_sum(&mlp.forward(xm.view()), &w)) / (2.0 * h);
            assert!((fd - dx[idx]).abs() < 1e-7, "{fd} vs {}", dx[idx]);
        }
    }

    #[test]
    fn gru_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gru = Gru::new(&mut rng, 4, 5);
        let x = random_matrix(&mut rng, 6, 4);
        let w: Array1<f64> = Array1::from_shape_simple_fn(5, || rng.random_range(-1.0..1.0));
        let f = |g: &Gru, x: &Array2<f64>| g.forward(x.view()).0.dot(&w);
        let (_, cache) = gru.forward(x.view());
        let mut grad = gru.zeros_like();
        let dx = gru.backward(&cache, w.view(), &mut grad);
        let h = 1e-6;
        for idx in [(0, 0), (3, 2), (5, 3)] {
            let mut xp = x.clone();
            xp[idx] += h;
            let mut xm = x.clone();
            xm[idx] -= h;
            let fd = (f(&gru, &xp) - f(&gru, &xm)) / (2.0 * h);
            assert!((fd - dx[idx]).abs() < 1e-8);
        }
        let analytic: Vec<f64> = grad.param_slices().iter().flat_map(|(_, s)| s.to_vec()).collect();
        let mut probe = gru.clone();
        let mut k = 0;
        for t in 0..4 {
            let len = probe.param_slices()[t].1.len();
            for i in (0..len).step_by(7) {
                let orig = probe.param_slices()[t].1[i];
                probe.param_slices_mut()[t].1[i] = orig + h;
                let fp = f(&probe, &x);
                probe.param_slices_mut()[t].1[i] = orig - h;
                let fm = f(&probe, &x);
                probe.param_slices_mut()[t].1[i] = orig;
                let fd = (fp - fm) / (2.0 * h);
                assert!((fd - analytic[k + i]).abs() < 1e-8, "tensor {t} index {i}");
            }
            k += len;
        }
    }

    #[test]
    fn batchnorm_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut bn = BatchNorm::new(3);
        bn.gamma = Array1::from(vec![0.5, 1.5, -0.7]);
        bn.beta = Array1::from(vec![0.1, 0.0, 0.3]);
        let x = random_matrix(&mut rng, 5, 3);
        let w = random_matrix(&mut rng, 5, 3);
        let (_, cache) = bn.forward_train(x.view());
        let mut grad = bn.clone();
        grad.gamma.fill(0.0);
        grad.beta.fill(0.0);
        let dx = bn.backward(&cache, w.view(), &mut grad);
        let h = 1e-6;
        for idx in [(0, 0), (2, 1), (4, 2)] {
            let mut xp = x.clone();
            xp[idx] += h;
            let mut xm = x.clone();
            xm[idx] -= h;
            let fd = (weighted_sum(&bn.forward_train(xp.view()).0, &w) - weighted_sum(&bn.forward_train(xm.view()).0, &w))
                / (2.0 * h);
            assert!((fd - dx[idx]).abs() < 1e-7);
        }
    }

    #[test]
    fn batchnorm_eval_uses_running_stats() {
        let mut bn = BatchNorm::new(2);
        let x = Array2::from_shape_vec((3, 2), vec![1.0, 2.0, 3.0, 4.0, 5.0, 9.0]).unwrap();
        bn.set_population_stats(x.view());
        let y = bn.forward_eval(x.view());
        // Unbiased population variance gives column std 2 and sqrt(13).
        assert!((y[[0, 0]] + 2.0 / (4.0 + BN_EPS).sqrt()).abs() < 1e-12);
        assert!(y.column(1).sum().abs() < 1e-12);
    }

    impl Parameterized for Mlp {
        fn param_slices(&self) -> Vec<(&'static str, &[f64])> {
            self.slices().into_iter().map(|s| ("mlp", s)).collect()
        }
        fn param_slices_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
            self.slices_mut().into_iter().map(|s| ("mlp", s)).collect()
        }
    }

    impl Parameterized for Gru {
        fn param_slices(&self) -> Vec<(&'static str, &[f64])> {
            self.slices().into_iter().map(|s| ("gru", s)).collect()
        }
        fn param_slices_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
            self.slices_mut().into_iter().map(|s| ("gru", s)).collect()
        }
    }
}
