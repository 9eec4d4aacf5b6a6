//! Network layers: linear, ReLU, inverted dropout, and the normalization
//! family (layer norm, layer norm without variance re-scaling, batch norm,
//! group norm with two groups).
//!
//! Each layer owns its trainable parameters, optional non-trainable buffers
//! (batch-norm running statistics), and the forward cache consumed by the
//! backward pass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::tensor::Tensor;

/// Epsilon inside the normalization square roots.
pub const NORM_EPS: f64 = 1e-5;
/// Running-statistics momentum for batch normalization.
pub const BATCH_NORM_MOMENTUM: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Linear { input: usize, output: usize },
    Relu,
    Dropout { rate: f64 },
    LayerNorm { width: usize },
    LayerNormNoVr { width: usize },
    BatchNorm { width: usize },
    GroupNorm { width: usize, groups: usize },
}

impl LayerSpec {
    /// Output width given the incoming width, validating compatibility.
    pub fn output_width(&self, input_width: usize) -> Result<usize> {
        match *self {
            LayerSpec::Linear { input, output } => {
                if input != input_width {
                    return Err(Error::Config(format!(
                        "linear layer expects input width {input}, got {input_width}"
                    )));
                }
                Ok(output)
            }
            LayerSpec::Relu => Ok(input_width),
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
                }
                Ok(input_width)
            }
            LayerSpec::LayerNorm { width }
            | LayerSpec::LayerNormNoVr { width }
            | LayerSpec::BatchNorm { width } => {
                if width != input_width {
                    return Err(Error::Config(format!(
                        "normalization width {width} does not match input width {input_width}"
                    )));
                }
                Ok(width)
            }
            LayerSpec::GroupNorm { width, groups } => {
                if width != input_width {
                    return Err(Error::Config(format!(
                        "group norm width {width} does not match input width {input_width}"
                    )));
                }
                if groups == 0 || width % groups != 0 {
                    return Err(Error::Config(format!(
                        "group norm width {width} not divisible by {groups} groups"
                    )));
                }
                Ok(width)
            }
        }
    }

    /// Trainable parameter count for this layer.
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Linear { input, output } => input * output + output,
            LayerSpec::Relu | LayerSpec::Dropout { .. } => 0,
            LayerSpec::LayerNorm { width }
            | LayerSpec::LayerNormNoVr { width }
            | LayerSpec::BatchNorm { width }
            | LayerSpec::GroupNorm { width, .. } => 2 * width,
        }
    }
}

/// Per-call forward behaviour for a train-mode pass.
#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    /// Draw and apply dropout masks. When false, dropout layers are identity.
    pub dropout_active: bool,
    /// Fold this batch's statistics into the batch-norm running estimates.
    pub update_running_stats: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            dropout_active: true,
            update_running_stats: true,
        }
    }
}

#[derive(Debug, Clone)]
enum Cache {
    Linear { input: Tensor },
    Relu { input: Tensor },
    /// `None` mask means the pass was an exact identity.
    Dropout { mask: Option<Vec<f64>> },
    LayerNorm { xhat: Tensor, inv: Vec<f64> },
    LayerNormNoVr { centered: Tensor },
    BatchNorm { xhat: Tensor, inv: Vec<f64> },
    GroupNorm { xhat: Tensor, inv: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct Layer {
    spec: LayerSpec,
    /// Linear: [weight (in x out), bias (1 x out)]; norms: [gain, bias].
    params: Vec<Tensor>,
    /// BatchNorm: [running_mean, running_var].
    buffers: Vec<Tensor>,
    cache: Option<Cache>,
}

impl Layer {
    pub fn new(spec: LayerSpec) -> Self {
        let params = match spec {
            LayerSpec::Linear { input, output } => {
                vec![Tensor::zeros(input, output), Tensor::zeros(1, output)]
            }
            LayerSpec::LayerNorm { width }
            | LayerSpec::LayerNormNoVr { width }
            | LayerSpec::BatchNorm { width }
            | LayerSpec::GroupNorm { width, .. } => {
                vec![
                    Tensor::from_fn(1, width, |_, _| 1.0),
                    Tensor::zeros(1, width),
                ]
            }
            LayerSpec::Relu | LayerSpec::Dropout { .. } => Vec::new(),
        };
        let buffers = match spec {
            LayerSpec::BatchNorm { width } => vec![
                Tensor::zeros(1, width),
                Tensor::from_fn(1, width, |_, _| 1.0),
            ],
            _ => Vec::new(),
        };
        Self {
            spec,
            params,
            buffers,
            cache: None,
        }
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[Tensor] {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut [Tensor] {
        &mut self.buffers
    }

    /// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for linear weights
    /// and biases; norm gains stay 1 and biases 0 (no randomness consumed).
    pub fn init(&mut self, rng: &mut RandomStream) {
        if let LayerSpec::Linear { input, .. } = self.spec {
            let bound = 1.0 / (input as f64).sqrt();
            for p in &mut self.params {
                for v in p.values_mut() {
                    *v = rng.uniform(-bound, bound);
                }
            }
        }
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    /// Smallest nonzero |pre-activation| seen by a ReLU in the last recorded
    /// forward. Exact zeros are excluded: they come from dropout masks and
    /// stay zero under any parameter perturbation, so they sit on no kink.
    pub fn relu_input_margin(&self) -> Option<f64> {
        match &self.cache {
            Some(Cache::Relu { input }) => input
                .values()
                .iter()
                .filter(|v| **v != 0.0)
                .map(|v| v.abs())
                .fold(None, |acc: Option<f64>, v| {
                    Some(acc.map_or(v, |a| a.min(v)))
                }),
            _ => None,
        }
    }

    /// Train-mode forward; records the cache needed by `backward`.
    pub fn forward_train(
        &mut self,
        x: &Tensor,
        rng: &mut RandomStream,
        opts: TrainOptions,
    ) -> Result<Tensor> {
        let out = match self.spec {
            LayerSpec::Linear { .. } => {
                let w = &self.params[0];
                let b = &self.params[1];
                let mut y = x.matmul(w)?;
                let cols = y.cols();
                for r in 0..y.rows() {
                    let row = &mut y.values_mut()[r * cols..(r + 1) * cols];
                    for (yv, bv) in row.iter_mut().zip(b.values()) {
                        *yv += bv;
                    }
                }
                self.cache = Some(Cache::Linear { input: x.clone() });
                y
            }
            LayerSpec::Relu => {
                let mut y = x.clone();
                for v in y.values_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                self.cache = Some(Cache::Relu { input: x.clone() });
                y
            }
            LayerSpec::Dropout { rate } => {
                if opts.dropout_active && rate > 0.0 {
                    let scale = 1.0 / (1.0 - rate);
                    let mut y = x.clone();
                    let mut mask = Vec::with_capacity(x.len());
                    for v in y.values_mut() {
                        let keep = rng.next_f64() >= rate;
                        let m = if keep { scale } else { 0.0 };
                        mask.push(m);
                        *v *= m;
                    }
                    self.cache = Some(Cache::Dropout { mask: Some(mask) });
                    y
                } else {
                    self.cache = Some(Cache::Dropout { mask: None });
                    x.clone()
                }
            }
            LayerSpec::LayerNorm { width } => {
                let (y, xhat, inv) = layer_norm_rows(x, width, &self.params[0], &self.params[1]);
                self.cache = Some(Cache::LayerNorm { xhat, inv });
                y
            }
            LayerSpec::LayerNormNoVr { width } => {
                let mut centered = Tensor::zeros(x.rows(), width);
                for r in 0..x.rows() {
                    let m = x.row_slice(r).iter().sum::<f64>() / width as f64;
                    for j in 0..width {
                        centered.set(r, j, x.at(r, j) - m);
                    }
                }
                let gain = &self.params[0];
                let bias = &self.params[1];
                let y = Tensor::from_fn(x.rows(), width, |r, j| {
                    gain.values()[j] * centered.at(r, j) + bias.values()[j]
                });
                self.cache = Some(Cache::LayerNormNoVr { centered });
                y
            }
            LayerSpec::BatchNorm { width } => {
                let rows = x.rows() as f64;
                let mut mean = vec![0.0; width];
                let mut var = vec![0.0; width];
                for r in 0..x.rows() {
                    for (j, m) in mean.iter_mut().enumerate() {
                        *m += x.at(r, j);
                    }
                }
                mean.iter_mut().for_each(|m| *m /= rows);
                for r in 0..x.rows() {
                    for (j, v) in var.iter_mut().enumerate() {
                        let d = x.at(r, j) - mean[j];
                        *v += d * d;
                    }
                }
                var.iter_mut().for_each(|v| *v /= rows);

                if opts.update_running_stats {
                    let rm = self.buffers[0].values_mut();
                    for (r, m) in rm.iter_mut().zip(&mean) {
                        *r = BATCH_NORM_MOMENTUM * *r + (1.0 - BATCH_NORM_MOMENTUM) * m;
                    }
                    let rv = self.buffers[1].values_mut();
                    for (r, v) in rv.iter_mut().zip(&var) {
                        *r = BATCH_NORM_MOMENTUM * *r + (1.0 - BATCH_NORM_MOMENTUM) * v;
                    }
                }

                let inv: Vec<f64> = var.iter().map(|v| 1.0 / (v + NORM_EPS).sqrt()).collect();
                let xhat = Tensor::from_fn(x.rows(), width, |r, j| (x.at(r, j) - mean[j]) * inv[j]);
                let gain = &self.params[0];
                let bias = &self.params[1];
                let y = Tensor::from_fn(x.rows(), width, |r, j| {
                    gain.values()[j] * xhat.at(r, j) + bias.values()[j]
                });
                self.cache = Some(Cache::BatchNorm { xhat, inv });
                y
            }
            LayerSpec::GroupNorm { width, groups } => {
                let gw = width / groups;
                let mut xhat = Tensor::zeros(x.rows(), width);
                let mut inv = Vec::with_capacity(x.rows() * groups);
                for r in 0..x.rows() {
                    for g in 0..groups {
                        let lo = g * gw;
                        let seg = &x.row_slice(r)[lo..lo + gw];
                        let m = seg.iter().sum::<f64>() / gw as f64;
                        let v = seg.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / gw as f64;
                        let iv = 1.0 / (v + NORM_EPS).sqrt();
                        inv.push(iv);
                        for (j, s) in seg.iter().enumerate() {
                            xhat.set(r, lo + j, (s - m) * iv);
                        }
                    }
                }
                let gain = &self.params[0];
                let bias = &self.params[1];
                let y = Tensor::from_fn(x.rows(), width, |r, j| {
                    gain.values()[j] * xhat.at(r, j) + bias.values()[j]
                });
                self.cache = Some(Cache::GroupNorm { xhat, inv });
                y
            }
        };
        Ok(out)
    }

    /// Eval-mode forward: pure, no randomness, no cache, no stat updates.
    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        let out = match self.spec {
            LayerSpec::Linear { .. } => {
                let w = &self.params[0];
                let b = &self.params[1];
                let mut y = x.matmul(w)?;
                let cols = y.cols();
                for r in 0..y.rows() {
                    let row = &mut y.values_mut()[r * cols..(r + 1) * cols];
                    for (yv, bv) in row.iter_mut().zip(b.values()) {
                        *yv += bv;
                    }
                }
                y
            }
            LayerSpec::Relu => Tensor::from_fn(x.rows(), x.cols(), |r, c| x.at(r, c).max(0.0)),
            LayerSpec::Dropout { .. } => x.clone(),
            LayerSpec::LayerNorm { width } => {
                layer_norm_rows(x, width, &self.params[0], &self.params[1]).0
            }
            LayerSpec::LayerNormNoVr { width } => {
                center_rows(x, width, &self.params[0], &self.params[1])
            }
            LayerSpec::BatchNorm { width } => {
                let rm = self.buffers[0].values();
                let rv = self.buffers[1].values();
                let gain = &self.params[0];
                let bias = &self.params[1];
                Tensor::from_fn(x.rows(), width, |r, j| {
                    gain.values()[j] * (x.at(r, j) - rm[j]) / (rv[j] + NORM_EPS).sqrt()
                        + bias.values()[j]
                })
            }
            LayerSpec::GroupNorm { width, groups } => {
                let gw = width / groups;
                let gain = &self.params[0];
                let bias = &self.params[1];
                let mut y = Tensor::zeros(x.rows(), width);
                for r in 0..x.rows() {
                    for g in 0..groups {
                        let lo = g * gw;
                        let seg = &x.row_slice(r)[lo..lo + gw];
                        let m = seg.iter().sum::<f64>() / gw as f64;
                        let v = seg.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / gw as f64;
                        let iv = 1.0 / (v + NORM_EPS).sqrt();
                        for (j, s) in seg.iter().enumerate() {
                            y.set(r, lo + j, gain.values()[lo + j] * (s - m) * iv + bias.values()[lo + j]);
                        }
                    }
                }
                y
            }
        };
        Ok(out)
    }

    /// Backward through the cache from the last train-mode forward.
    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, gy: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::Usage("backward without a live forward tape".into()))?;
        let gx = match (&self.spec, cache) {
            (LayerSpec::Linear { .. }, Cache::Linear { input }) => {
                let gw = input.matmul_tn(gy)?;
                self.params[0].add_to_grad(gw.values());
                let mut gb = vec![0.0; gy.cols()];
                for r in 0..gy.rows() {
                    for (g, v) in gb.iter_mut().zip(gy.row_slice(r)) {
                        *g += v;
                    }
                }
                self.params[1].add_to_grad(&gb);
                gy.matmul_nt(&self.params[0])?
            }
            (LayerSpec::Relu, Cache::Relu { input }) => {
                let mut gx = gy.clone();
                for (g, x) in gx.values_mut().iter_mut().zip(input.values()) {
                    if *x <= 0.0 {
                        *g = 0.0;
                    }
                }
                gx
            }
            (LayerSpec::Dropout { .. }, Cache::Dropout { mask }) => match mask {
                Some(mask) => {
                    let mut gx = gy.clone();
                    for (g, m) in gx.values_mut().iter_mut().zip(&mask) {
                        *g *= m;
                    }
                    gx
                }
                None => gy.clone(),
            },
            (LayerSpec::LayerNorm { width }, Cache::LayerNorm { xhat, inv }) => {
                let width = *width;
                let gain = self.params[0].values().to_vec();
                let mut gx = Tensor::zeros(gy.rows(), width);
                let mut ggain = vec![0.0; width];
                let mut gbias = vec![0.0; width];
                for r in 0..gy.rows() {
                    let gy_row = gy.row_slice(r);
                    let xh_row = xhat.row_slice(r);
                    let mut mean_gxh = 0.0;
                    let mut mean_gxh_xhat = 0.0;
                    for j in 0..width {
                        let gxh = gy_row[j] * gain[j];
                        mean_gxh += gxh;
                        mean_gxh_xhat += gxh * xh_row[j];
                        ggain[j] += gy_row[j] * xh_row[j];
                        gbias[j] += gy_row[j];
                    }
                    mean_gxh /= width as f64;
                    mean_gxh_xhat /= width as f64;
                    let iv = inv[r];
                    let gx_row = &mut gx.values_mut()[r * width..(r + 1) * width];
                    for j in 0..width {
                        let gxh = gy_row[j] * gain[j];
                        gx_row[j] = iv * (gxh - mean_gxh - xh_row[j] * mean_gxh_xhat);
                    }
                }
                self.params[0].add_to_grad(&ggain);
                self.params[1].add_to_grad(&gbias);
                gx
            }
            (LayerSpec::LayerNormNoVr { width }, Cache::LayerNormNoVr { centered }) => {
                // y = gain * (x - mean(x)) + bias, so d(xc)/dx = I - 1/w.
                let width = *width;
                let gain = self.params[0].values().to_vec();
                let mut gx = Tensor::zeros(gy.rows(), width);
                let mut ggain = vec![0.0; width];
                let mut gbias = vec![0.0; width];
                for r in 0..gy.rows() {
                    let mut mean_gxc = 0.0;
                    for j in 0..width {
                        let g = gy.at(r, j) * gain[j];
                        mean_gxc += g;
                        ggain[j] += gy.at(r, j) * centered.at(r, j);
                        gbias[j] += gy.at(r, j);
                    }
                    mean_gxc /= width as f64;
                    for j in 0..width {
                        gx.set(r, j, gy.at(r, j) * gain[j] - mean_gxc);
                    }
                }
                self.params[0].add_to_grad(&ggain);
                self.params[1].add_to_grad(&gbias);
                gx
            }
            (LayerSpec::BatchNorm { width }, Cache::BatchNorm { xhat, inv }) => {
                let width = *width;
                let rows = gy.rows();
                let gain = self.params[0].values().to_vec();
                let mut ggain = vec![0.0; width];
                let mut gbias = vec![0.0; width];
                let mut mean_gxh = vec![0.0; width];
                let mut mean_gxh_xhat = vec![0.0; width];
                for r in 0..rows {
                    for j in 0..width {
                        let gxh = gy.at(r, j) * gain[j];
                        mean_gxh[j] += gxh;
                        mean_gxh_xhat[j] += gxh * xhat.at(r, j);
                        ggain[j] += gy.at(r, j) * xhat.at(r, j);
                        gbias[j] += gy.at(r, j);
                    }
                }
                let n = rows as f64;
                mean_gxh.iter_mut().for_each(|v| *v /= n);
                mean_gxh_xhat.iter_mut().for_each(|v| *v /= n);
                let gx = Tensor::from_fn(rows, width, |r, j| {
                    let gxh = gy.at(r, j) * gain[j];
                    inv[j] * (gxh - mean_gxh[j] - xhat.at(r, j) * mean_gxh_xhat[j])
                });
                self.params[0].add_to_grad(&ggain);
                self.params[1].add_to_grad(&gbias);
                gx
            }
            (LayerSpec::GroupNorm { width, groups }, Cache::GroupNorm { xhat, inv }) => {
                let (width, groups) = (*width, *groups);
                let gw = width / groups;
                let gain = self.params[0].values().to_vec();
                let mut gx = Tensor::zeros(gy.rows(), width);
                let mut ggain = vec![0.0; width];
                let mut gbias = vec![0.0; width];
                for r in 0..gy.rows() {
                    for g in 0..groups {
                        let lo = g * gw;
                        let iv = inv[r * groups + g];
                        let mut mean_gxh = 0.0;
                        let mut mean_gxh_xhat = 0.0;
                        for j in lo..lo + gw {
                            let gxh = gy.at(r, j) * gain[j];
                            mean_gxh += gxh;
                            mean_gxh_xhat += gxh * xhat.at(r, j);
                            ggain[j] += gy.at(r, j) * xhat.at(r, j);
                            gbias[j] += gy.at(r, j);
                        }
                        mean_gxh /= gw as f64;
                        mean_gxh_xhat /= gw as f64;
                        for j in lo..lo + gw {
                            let gxh = gy.at(r, j) * gain[j];
                            gx.set(r, j, iv * (gxh - mean_gxh - xhat.at(r, j) * mean_gxh_xhat));
                        }
                    }
                }
                self.params[0].add_to_grad(&ggain);
                self.params[1].add_to_grad(&gbias);
                gx
            }
            _ => return Err(Error::Usage("forward cache does not match layer kind".into())),
        };
        Ok(gx)
    }
}

fn center_rows(x: &Tensor, width: usize, gain: &Tensor, bias: &Tensor) -> Tensor {
    let mut y = Tensor::zeros(x.rows(), width);
    for r in 0..x.rows() {
        let m = x.row_slice(r).iter().sum::<f64>() / width as f64;
        for j in 0..width {
            y.set(r, j, gain.values()[j] * (x.at(r, j) - m) + bias.values()[j]);
        }
    }
    y
}

fn layer_norm_rows(x: &Tensor, width: usize, gain: &Tensor, bias: &Tensor) -> (Tensor, Tensor, Vec<f64>) {
    let rows = x.rows();
    let mut xhat = Tensor::zeros(rows, width);
    let mut y = Tensor::zeros(rows, width);
    let mut inv = Vec::with_capacity(rows);
    let g = gain.values();
    let b = bias.values();
    for r in 0..rows {
        let seg = x.row_slice(r);
        let m = seg.iter().sum::<f64>() / width as f64;
        let v = seg.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / width as f64;
        let iv = 1.0 / (v + NORM_EPS).sqrt();
        inv.push(iv);
        let xh_row = &mut xhat.values_mut()[r * width..(r + 1) * width];
        for (xh, s) in xh_row.iter_mut().zip(seg) {
            *xh = (s - m) * iv;
        }
        let y_row = &mut y.values_mut()[r * width..(r + 1) * width];
        for j in 0..width {
            y_row[j] = g[j] * xh_row[j] + b[j];
        }
    }
    (y, xhat, inv)
}
