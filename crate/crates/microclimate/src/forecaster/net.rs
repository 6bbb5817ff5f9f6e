//! Dense network internals for the residual forecaster: two small
//! architectures with hand-written backpropagation, a momentum SGD step and
//! a finite-difference gradient check harness.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::forecaster::FeatureLayout;

/// Row-major dense matrix (`rows` outputs by `cols` inputs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    fn xavier(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// y = M x
    fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0;
            for (w, xv) in row.iter().zip(x) {
                acc += w * xv;
            }
            out[r] = acc;
        }
    }

    /// y = Mᵀ d (gradient of the input of a matvec).
    fn matvec_transposed(&self, d: &[f64], out: &mut [f64]) {
        debug_assert_eq!(d.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let dr = d[r];
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * dr;
            }
        }
    }

    /// M += d ⊗ x (outer-product gradient accumulation).
    fn add_outer(&mut self, d: &[f64], x: &[f64]) {
        for r in 0..self.rows {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            let dr = d[r];
            for (w, xv) in row.iter_mut().zip(x) {
                *w += dr * xv;
            }
        }
    }
}

/// Affine map y = W x + b.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Mat,
    pub b: Vec<f64>,
}

impl Dense {
    fn zeros(rows: usize, cols: usize) -> Dense {
        Dense {
            w: Mat::zeros(rows, cols),
            b: vec![0.0; rows],
        }
    }

    fn xavier(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Dense {
        Dense {
            w: Mat::xavier(rows, cols, rng),
            b: vec![0.0; rows],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.b.clone();
        let mut lin = vec![0.0; self.w.rows];
        self.w.matvec(x, &mut lin);
        for (o, l) in out.iter_mut().zip(&lin) {
            *o += l;
        }
        out
    }
}

/// Model weights, tagged by architecture.
///
/// `linear` is a single affine map from the feature vector to the horizon
/// outputs. `scale_mlp` first encodes each decomposition band group with its
/// own affine map, concatenates those embeddings with the station-forecast
/// and time features, and finishes with one tanh hidden layer and an affine
/// head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "architecture", rename_all = "snake_case")]
pub enum Weights {
    Linear {
        out: Dense,
    },
    ScaleMlp {
        encoders: Vec<Dense>,
        hidden: Dense,
        head: Dense,
    },
}

/// Which parameter a visitor is currently walking. Matrix weights and biases
/// are distinguished so fine-tuning can freeze the former.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    MatrixWeight,
    Bias,
    /// The output head (matrix and bias) — always trainable.
    Head,
}

impl Weights {
    /// Initialize for the layout. The output map starts at zero in both
    /// architectures, so an untrained model predicts a zero residual and
    /// passes the station forecast through unchanged.
    pub fn init(layout: &FeatureLayout, hidden_units: usize, linear: bool, rng: &mut ChaCha8Rng) -> Weights {
        if linear {
            Weights::Linear {
                out: Dense::zeros(layout.horizons, layout.len()),
            }
        } else {
            let bands = layout.bands();
            let encoders: Vec<Dense> = (0..bands)
                .map(|_| Dense::xavier(hidden_units, layout.band_block(), rng))
                .collect();
            let concat = bands * hidden_units + layout.rest();
            let hidden = Dense::xavier(hidden_units, concat, rng);
            let head = Dense::zeros(layout.horizons, hidden_units);
            Weights::ScaleMlp {
                encoders,
                hidden,
                head,
            }
        }
    }

    pub fn zeroed_like(&self) -> Weights {
        match self {
            Weights::Linear { out } => Weights::Linear {
                out: Dense::zeros(out.w.rows, out.w.cols),
            },
            Weights::ScaleMlp {
                encoders,
                hidden,
                head,
            } => Weights::ScaleMlp {
                encoders: encoders
                    .iter()
                    .map(|e| Dense::zeros(e.w.rows, e.w.cols))
                    .collect(),
                hidden: Dense::zeros(hidden.w.rows, hidden.w.cols),
                head: Dense::zeros(head.w.rows, head.w.cols),
            },
        }
    }

    pub fn is_all_zero(&self) -> bool {
        let mut all = true;
        let mut probe = self.clone();
        probe.visit_params(|_, v| {
            if *v != 0.0 {
                all = false;
            }
        });
        all
    }

    pub fn forward(&self, x: &[f64], layout: &FeatureLayout) -> Vec<f64> {
        match self {
            Weights::Linear { out } => out.forward(x),
            Weights::ScaleMlp {
                encoders,
                hidden,
                head,
            } => {
                let acts = self.forward_scale_mlp(x, layout, encoders, hidden, head);
                acts.output
            }
        }
    }

    fn forward_scale_mlp(
        &self,
        x: &[f64],
        layout: &FeatureLayout,
        encoders: &[Dense],
        hidden: &Dense,
        head: &Dense,
    ) -> ScaleMlpActivations {
        let mut concat = Vec::with_capacity(hidden.w.cols);
        for (b, enc) in encoders.iter().enumerate() {
            concat.extend(enc.forward(&x[layout.band_range(b)]));
        }
        concat.extend_from_slice(&x[layout.rest_range()]);
        let hidden_act: Vec<f64> = hidden.forward(&concat).iter().map(|v| v.tanh()).collect();
        let output = head.forward(&hidden_act);
        ScaleMlpActivations {
            concat,
            hidden_act,
            output,
        }
    }

    /// Forward pass plus gradient accumulation into `grads` given the loss
    /// gradient `d_out` w.r.t. the output vector. Returns the output.
    pub fn forward_backward(
        &self,
        x: &[f64],
        layout: &FeatureLayout,
        d_out_of: impl FnOnce(&[f64]) -> Vec<f64>,
        grads: &mut Weights,
    ) -> Vec<f64> {
        match (self, grads) {
            (Weights::Linear { out }, Weights::Linear { out: g_out }) => {
                let output = out.forward(x);
                let d_out = d_out_of(&output);
                g_out.w.add_outer(&d_out, x);
                for (gb, d) in g_out.b.iter_mut().zip(&d_out) {
                    *gb += d;
                }
                output
            }
            (
                Weights::ScaleMlp {
                    encoders,
                    hidden,
                    head,
                },
                Weights::ScaleMlp {
                    encoders: g_enc,
                    hidden: g_hidden,
                    head: g_head,
                },
            ) => {
                let acts = self.forward_scale_mlp(x, layout, encoders, hidden, head);
                let d_out = d_out_of(&acts.output);

                g_head.w.add_outer(&d_out, &acts.hidden_act);
                for (gb, d) in g_head.b.iter_mut().zip(&d_out) {
                    *gb += d;
                }

                let mut d_hidden_act = vec![0.0; acts.hidden_act.len()];
                head.w.matvec_transposed(&d_out, &mut d_hidden_act);
                // tanh'(z) = 1 - tanh(z)^2, and hidden_act already holds tanh(z).
                let d_hidden_pre: Vec<f64> = d_hidden_act
                    .iter()
                    .zip(&acts.hidden_act)
                    .map(|(d, h)| d * (1.0 - h * h))
                    .collect();

                g_hidden.w.add_outer(&d_hidden_pre, &acts.concat);
                for (gb, d) in g_hidden.b.iter_mut().zip(&d_hidden_pre) {
                    *gb += d;
                }

                let mut d_concat = vec![0.0; acts.concat.len()];
                hidden.w.matvec_transposed(&d_hidden_pre, &mut d_concat);

                let e = encoders[0].w.rows;
                for (b, (enc, g)) in encoders.iter().zip(g_enc.iter_mut()).enumerate() {
                    let d_emb = &d_concat[b * e..(b + 1) * e];
                    let band = &x[layout.band_range(b)];
                    g.w.add_outer(d_emb, band);
                    for (gb, d) in g.b.iter_mut().zip(d_emb) {
                        *gb += d;
                    }
                    let _ = enc;
                }
                acts.output
            }
            _ => unreachable!("weights/grads architecture mismatch"),
        }
    }

    /// Walk every parameter in a fixed order.
    pub fn visit_params(&mut self, mut f: impl FnMut(ParamKind, &mut f64)) {
        match self {
            Weights::Linear { out } => {
                out.w.data.iter_mut().for_each(|v| f(ParamKind::Head, v));
                out.b.iter_mut().for_each(|v| f(ParamKind::Head, v));
            }
            Weights::ScaleMlp {
                encoders,
                hidden,
                head,
            } => {
                for enc in encoders {
                    enc.w.data.iter_mut().for_each(|v| f(ParamKind::MatrixWeight, v));
                    enc.b.iter_mut().for_each(|v| f(ParamKind::Bias, v));
                }
                hidden.w.data.iter_mut().for_each(|v| f(ParamKind::MatrixWeight, v));
                hidden.b.iter_mut().for_each(|v| f(ParamKind::Bias, v));
                head.w.data.iter_mut().for_each(|v| f(ParamKind::Head, v));
                head.b.iter_mut().for_each(|v| f(ParamKind::Head, v));
            }
        }
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        let mut probe = self.clone();
        probe.visit_params(|_, _| n += 1);
        n
    }
}

struct ScaleMlpActivations {
    concat: Vec<f64>,
    hidden_act: Vec<f64>,
    output: Vec<f64>,
}

/// Momentum SGD over the visit order of [`Weights::visit_params`].
pub struct SgdMomentum {
    velocity: Vec<f64>,
    learning_rate: f64,
    momentum: f64,
    /// When set, only head parameters and bias vectors are updated.
    freeze_matrix_weights: bool,
}

impl SgdMomentum {
    pub fn new(param_count: usize, learning_rate: f64, momentum: f64) -> SgdMomentum {
        SgdMomentum {
            velocity: vec![0.0; param_count],
            learning_rate,
            momentum,
            freeze_matrix_weights: false,
        }
    }

    pub fn freeze_matrix_weights(mut self, freeze: bool) -> SgdMomentum {
        self.freeze_matrix_weights = freeze;
        self
    }

    pub fn step(&mut self, weights: &mut Weights, grads: &Weights) {
        let mut flat_grads = Vec::with_capacity(self.velocity.len());
        let mut g = grads.clone();
        g.visit_params(|kind, v| flat_grads.push((kind, *v)));
        let mut i = 0usize;
        let (lr, mu, freeze) = (self.learning_rate, self.momentum, self.freeze_matrix_weights);
        let velocity = &mut self.velocity;
        weights.visit_params(|kind, w| {
            let (gkind, gv) = flat_grads[i];
            debug_assert!(gkind == kind);
            let frozen = freeze && kind == ParamKind::MatrixWeight;
            if !frozen {
                velocity[i] = mu * velocity[i] - lr * gv;
                *w += velocity[i];
            }
            i += 1;
        });
    }
}

/// Mean squared error over all rows and output dimensions.
pub fn mse_loss(weights: &Weights, layout: &FeatureLayout, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> f64 {
    let mut acc = 0.0;
    let mut n = 0usize;
    for (x, y) in xs.iter().zip(ys) {
        let out = weights.forward(x, layout);
        for (o, t) in out.iter().zip(y) {
            let d = o - t;
            acc += d * d;
        }
        n += y.len();
    }
    acc / n as f64
}

/// Accumulate MSE gradients for a batch; returns the batch loss. The loss is
/// averaged over `rows * outputs` of the batch, matching [`mse_loss`].
pub fn mse_batch_gradients(
    weights: &Weights,
    layout: &FeatureLayout,
    xs: &[&Vec<f64>],
    ys: &[&Vec<f64>],
    grads: &mut Weights,
) -> f64 {
    let n = xs.len() * ys[0].len();
    let scale = 2.0 / n as f64;
    let mut loss = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let out = weights.forward_backward(
            x,
            layout,
            |out| {
                out.iter()
                    .zip(y.iter())
                    .map(|(o, t)| scale * (o - t))
                    .collect()
            },
            grads,
        );
        for (o, t) in out.iter().zip(y.iter()) {
            let d = o - t;
            loss += d * d;
        }
    }
    loss / n as f64
}

/// Compare analytic gradients with central finite differences on up to
/// `max_params` sampled parameters. Returns the maximum relative error.
pub fn finite_difference_check(
    weights: &Weights,
    layout: &FeatureLayout,
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    max_params: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let step = 1e-5;
    let mut grads = weights.zeroed_like();
    let xref: Vec<&Vec<f64>> = xs.iter().collect();
    let yref: Vec<&Vec<f64>> = ys.iter().collect();
    mse_batch_gradients(weights, layout, &xref, &yref, &mut grads);

    let mut analytic = Vec::new();
    grads.visit_params(|_, v| analytic.push(*v));

    let total = analytic.len();
    let mut indices: Vec<usize> = (0..total).collect();
    if total > max_params {
        // Seeded partial Fisher-Yates keeps the sample deterministic.
        for i in 0..max_params {
            let j = rng.random_range(i..total);
            indices.swap(i, j);
        }
        indices.truncate(max_params);
    }

    let mut max_rel = 0.0f64;
    for &idx in &indices {
        let numeric = {
            let mut plus = weights.clone();
            nudge(&mut plus, idx, step);
            let mut minus = weights.clone();
            nudge(&mut minus, idx, -step);
            (mse_loss(&plus, layout, xs, ys) - mse_loss(&minus, layout, xs, ys)) / (2.0 * step)
        };
        let a = analytic[idx];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        max_rel = max_rel.max(rel);
    }
    max_rel
}

fn nudge(weights: &mut Weights, target: usize, delta: f64) {
    let mut i = 0usize;
    weights.visit_params(|_, v| {
        if i == target {
            *v += delta;
        }
        i += 1;
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn layout() -> FeatureLayout {
        FeatureLayout {
            channels: 2,
            levels: 2,
            window: 3,
            horizons: 4,
        }
    }

    fn random_data(layout: &FeatureLayout, rows: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs = (0..rows)
            .map(|_| (0..layout.len()).map(|_| rng.random_range(-1.5..1.5)).collect())
            .collect();
        let ys = (0..rows)
            .map(|_| (0..layout.horizons).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        (xs, ys)
    }

    #[test]
    fn linear_gradients_match_finite_differences() {
        let layout = layout();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut weights = Weights::init(&layout, 0, true, &mut rng);
        // Move off the zero init so gradients are generic.
        weights.visit_params(|_, v| *v = rng.random_range(-0.3..0.3));
        let (xs, ys) = random_data(&layout, 12, 6);
        let max_rel = finite_difference_check(&weights, &layout, &xs, &ys, 50, &mut rng);
        assert!(max_rel < 1e-6, "linear max relative error {max_rel}");
    }

    #[test]
    fn scale_mlp_gradients_match_finite_differences() {
        let layout = layout();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut weights = Weights::init(&layout, 5, false, &mut rng);
        weights.visit_params(|_, v| {
            if *v == 0.0 {
                *v = rng.random_range(-0.2..0.2);
            }
        });
        let (xs, ys) = random_data(&layout, 10, 9);
        let max_rel = finite_difference_check(&weights, &layout, &xs, &ys, 50, &mut rng);
        assert!(max_rel < 1e-4, "scale_mlp max relative error {max_rel}");
    }

    #[test]
    fn zero_weights_zero_targets_have_zero_gradient() {
        let layout = layout();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let weights = Weights::init(&layout, 4, false, &mut rng).zeroed_like();
        let (xs, _) = random_data(&layout, 5, 2);
        let ys = vec![vec![0.0; layout.horizons]; 5];
        let mut grads = weights.zeroed_like();
        let xr: Vec<&Vec<f64>> = xs.iter().collect();
        let yr: Vec<&Vec<f64>> = ys.iter().collect();
        let loss = mse_batch_gradients(&weights, &layout, &xr, &yr, &mut grads);
        assert_eq!(loss, 0.0);
        assert!(grads.is_all_zero());
    }

    #[test]
    fn sgd_descends_on_a_linear_problem() {
        let layout = layout();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut weights = Weights::init(&layout, 0, true, &mut rng);
        let (xs, _) = random_data(&layout, 40, 4);
        // Learnable targets: a fixed linear map of the features.
        let ys: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| {
                (0..layout.horizons)
                    .map(|h| x.iter().enumerate().map(|(i, v)| v * ((i + h) % 5) as f64 * 0.1).sum())
                    .collect()
            })
            .collect();
        let before = mse_loss(&weights, &layout, &xs, &ys);
        let mut opt = SgdMomentum::new(weights.param_count(), 1e-2, 0.9);
        for _ in 0..200 {
            let mut grads = weights.zeroed_like();
            let xr: Vec<&Vec<f64>> = xs.iter().collect();
            let yr: Vec<&Vec<f64>> = ys.iter().collect();
            mse_batch_gradients(&weights, &layout, &xr, &yr, &mut grads);
            opt.step(&mut weights, &grads);
        }
        let after = mse_loss(&weights, &layout, &xs, &ys);
        assert!(after < before * 0.2, "loss {before} -> {after}");
    }

    #[test]
    fn frozen_matrix_weights_do_not_move() {
        let layout = layout();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut weights = Weights::init(&layout, 4, false, &mut rng);
        weights.visit_params(|_, v| {
            if *v == 0.0 {
                *v = 0.05;
            }
        });
        let snapshot = weights.clone();
        let (xs, ys) = random_data(&layout, 8, 14);
        let mut opt = SgdMomentum::new(weights.param_count(), 1e-2, 0.9).freeze_matrix_weights(true);
        for _ in 0..5 {
            let mut grads = weights.zeroed_like();
            let xr: Vec<&Vec<f64>> = xs.iter().collect();
            let yr: Vec<&Vec<f64>> = ys.iter().collect();
            mse_batch_gradients(&weights, &layout, &xr, &yr, &mut grads);
            opt.step(&mut weights, &grads);
        }
        let (mut w, mut s) = (weights.clone(), snapshot.clone());
        let mut frozen_moved = false;
        let mut any_bias_moved = false;
        let mut before = Vec::new();
        s.visit_params(|_, v| before.push(*v));
        let mut i = 0;
        w.visit_params(|kind, v| {
            match kind {
                ParamKind::MatrixWeight => {
                    if *v != before[i] {
                        frozen_moved = true;
                    }
                }
                ParamKind::Bias | ParamKind::Head => {
                    if *v != before[i] {
                        any_bias_moved = true;
                    }
                }
            }
            i += 1;
        });
        assert!(!frozen_moved);
        assert!(any_bias_moved);
    }
}
