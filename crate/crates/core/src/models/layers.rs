//! Layer stack with hand-written forward and backward passes.
//!
//! Only what the MLP and CNN reward models need: dense, valid 2-D convolution
//! with stride 1, 2x2 max pooling, rectified linear, inverted dropout and a
//! flatten. Activations are batched along the leading axis.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::tensor::Tensor;
use crate::rng::SimRng;

#[derive(Debug, Clone)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// `[outputs, inputs]`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// `[out_channels, in_channels, kernel, kernel]`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum Layer {
    Dense(Dense),
    Conv2d(Conv2d),
    /// 2x2 window, stride 2, odd trailing rows/columns dropped.
    MaxPool2d,
    Relu,
    /// Inverted dropout: kept units are scaled by `1 / (1 - rate)`.
    Dropout(f64),
    Flatten,
}

impl Dense {
    /// Variance-scaled normal init for layers feeding a rectifier.
    pub fn he(inputs: usize, outputs: usize, rng: &mut SimRng) -> Self {
        let std = (2.0 / inputs as f64).sqrt();
        let weight = (0..inputs * outputs)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                std * z
            })
            .collect();
        Self {
            inputs,
            outputs,
            weight,
            bias: vec![0.0; outputs],
        }
    }

    /// Small symmetric uniform init, used for the scalar output node.
    pub fn small_uniform(inputs: usize, outputs: usize, rng: &mut SimRng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weight = (0..inputs * outputs)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Self {
            inputs,
            outputs,
            weight,
            bias: vec![0.0; outputs],
        }
    }
}

impl Conv2d {
    pub fn he(in_channels: usize, out_channels: usize, kernel: usize, rng: &mut SimRng) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let std = (2.0 / fan_in as f64).sqrt();
        let weight = (0..out_channels * fan_in)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                std * z
            })
            .collect();
        Self {
            in_channels,
            out_channels,
            kernel,
            weight,
            bias: vec![0.0; out_channels],
        }
    }
}

/// What a layer keeps from its forward pass for the backward pass.
#[derive(Debug)]
pub(crate) enum Cache {
    Input(Tensor),
    Mask(Vec<f64>),
    Pool {
        input_shape: Vec<usize>,
        argmax: Vec<usize>,
    },
    Shape(Vec<usize>),
    Nothing,
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        sum += a[i] * b[i];
    }
    sum
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl Layer {
    pub fn param_count(&self) -> usize {
        match self {
            Layer::Dense(d) => d.weight.len() + d.bias.len(),
            Layer::Conv2d(c) => c.weight.len() + c.bias.len(),
            _ => 0,
        }
    }

    pub(crate) fn params(&self) -> Vec<&[f64]> {
        match self {
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            Layer::Conv2d(c) => vec![&c.weight, &c.bias],
            _ => Vec::new(),
        }
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        match self {
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            Layer::Conv2d(c) => vec![&mut c.weight, &mut c.bias],
            _ => Vec::new(),
        }
    }

    /// Per-item output shape for a per-item input shape.
    pub fn output_shape(&self, input: &[usize]) -> Vec<usize> {
        match self {
            Layer::Dense(d) => vec![d.outputs],
            Layer::Conv2d(c) => {
                vec![
                    c.out_channels,
                    input[1] + 1 - c.kernel,
                    input[2] + 1 - c.kernel,
                ]
            }
            Layer::MaxPool2d => vec![input[0], input[1] / 2, input[2] / 2],
            Layer::Relu | Layer::Dropout(_) => input.to_vec(),
            Layer::Flatten => vec![input.iter().product()],
        }
    }

    /// Forward pass. `rng` activates dropout; without it dropout is the identity.
    /// With `keep` the returned cache holds what `backward` needs.
    pub(crate) fn forward(
        &self,
        x: Tensor,
        rng: Option<&mut SimRng>,
        keep: bool,
    ) -> (Tensor, Cache) {
        match self {
            Layer::Dense(d) => {
                let batch = x.batch();
                let mut out = vec![0.0; batch * d.outputs];
                for b in 0..batch {
                    let xi = x.item(b);
                    let row = &mut out[b * d.outputs..(b + 1) * d.outputs];
                    for (o, slot) in row.iter_mut().enumerate() {
                        let w = &d.weight[o * d.inputs..(o + 1) * d.inputs];
                        *slot = d.bias[o] + dot(w, xi);
                    }
                }
                let out = Tensor::from_vec(&[batch, d.outputs], out).expect("dense shape");
                (
                    out,
                    if keep {
                        Cache::Input(x)
                    } else {
                        Cache::Nothing
                    },
                )
            }
            Layer::Conv2d(c) => {
                let out = conv_forward(c, &x);
                (
                    out,
                    if keep {
                        Cache::Input(x)
                    } else {
                        Cache::Nothing
                    },
                )
            }
            Layer::MaxPool2d => {
                let (out, argmax) = pool_forward(&x);
                let cache = if keep {
                    Cache::Pool {
                        input_shape: x.shape().to_vec(),
                        argmax,
                    }
                } else {
                    Cache::Nothing
                };
                (out, cache)
            }
            Layer::Relu => {
                let (mut out, cache) = if keep {
                    (x.clone(), Cache::Input(x))
                } else {
                    (x, Cache::Nothing)
                };
                for v in out.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                (out, cache)
            }
            Layer::Dropout(rate) => match rng {
                Some(rng) if *rate > 0.0 => {
                    let keep_prob = 1.0 - rate;
                    let scale = 1.0 / keep_prob;
                    let mask: Vec<f64> = (0..x.len())
                        .map(|_| {
                            if rng.random::<f64>() < keep_prob {
                                scale
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    let mut out = x;
                    for (v, m) in out.data_mut().iter_mut().zip(&mask) {
                        *v *= m;
                    }
                    (
                        out,
                        if keep {
                            Cache::Mask(mask)
                        } else {
                            Cache::Nothing
                        },
                    )
                }
                _ => (x, Cache::Nothing),
            },
            Layer::Flatten => {
                let shape = x.shape().to_vec();
                let batch = shape[0];
                let rest = x.item_len();
                (x.reshaped(&[batch, rest]), Cache::Shape(shape))
            }
        }
    }

    /// Backward pass: returns the gradient with respect to the layer input
    /// (skipped when `need_input_grad` is false) and parameter gradients in
    /// `params()` order.
    pub(crate) fn backward(
        &self,
        cache: Cache,
        grad: Tensor,
        need_input_grad: bool,
    ) -> (Option<Tensor>, Vec<Vec<f64>>) {
        match (self, cache) {
            (Layer::Dense(d), Cache::Input(x)) => {
                let batch = x.batch();
                let g = grad.data();
                let mut dw = vec![0.0; d.weight.len()];
                let mut db = vec![0.0; d.outputs];
                let mut dx = if need_input_grad {
                    vec![0.0; x.len()]
                } else {
                    Vec::new()
                };
                for b in 0..batch {
                    let xi = x.item(b);
                    for o in 0..d.outputs {
                        let go = g[b * d.outputs + o];
                        if go == 0.0 {
                            continue;
                        }
                        db[o] += go;
                        axpy(go, xi, &mut dw[o * d.inputs..(o + 1) * d.inputs]);
                        if need_input_grad {
                            axpy(
                                go,
                                &d.weight[o * d.inputs..(o + 1) * d.inputs],
                                &mut dx[b * d.inputs..(b + 1) * d.inputs],
                            );
                        }
                    }
                }
                let dx = need_input_grad
                    .then(|| Tensor::from_vec(x.shape(), dx).expect("dense grad shape"));
                (dx, vec![dw, db])
            }
            (Layer::Conv2d(c), Cache::Input(x)) => conv_backward(c, &x, &grad, need_input_grad),
            (
                Layer::MaxPool2d,
                Cache::Pool {
                    input_shape,
                    argmax,
                },
            ) => {
                let mut dx = Tensor::zeros(&input_shape);
                let dxd = dx.data_mut();
                for (g, &idx) in grad.data().iter().zip(&argmax) {
                    dxd[idx] += g;
                }
                (Some(dx), Vec::new())
            }
            (Layer::Relu, Cache::Input(x)) => {
                let mut g = grad;
                for (gv, xv) in g.data_mut().iter_mut().zip(x.data()) {
                    if *xv <= 0.0 {
                        *gv = 0.0;
                    }
                }
                (Some(g), Vec::new())
            }
            (Layer::Dropout(_), Cache::Mask(mask)) => {
                let mut g = grad;
                for (gv, m) in g.data_mut().iter_mut().zip(&mask) {
                    *gv *= m;
                }
                (Some(g), Vec::new())
            }
            (Layer::Dropout(_), Cache::Nothing) => (Some(grad), Vec::new()),
            (Layer::Flatten, Cache::Shape(shape)) => (Some(grad.reshaped(&shape)), Vec::new()),
            (layer, cache) => unreachable!("cache {cache:?} does not belong to {layer:?}"),
        }
    }
}

/// Unfolds one `channels x h x w` image into a `(channels*k*k) x (oh*ow)`
/// matrix whose row `(ic, ky, kx)` holds the input under that kernel tap.
fn im2col(src: &[f64], channels: usize, h: usize, w: usize, k: usize, cols: &mut [f64]) {
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let plane = oh * ow;
    for ic in 0..channels {
        let img = &src[ic * h * w..(ic + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ic * k + ky) * k + kx) * plane..][..plane];
                for oy in 0..oh {
                    row[oy * ow..][..ow].copy_from_slice(&img[(oy + ky) * w + kx..][..ow]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates column rows back into the image.
fn col2im(cols: &[f64], channels: usize, h: usize, w: usize, k: usize, dst: &mut [f64]) {
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let plane = oh * ow;
    for ic in 0..channels {
        let img = &mut dst[ic * h * w..(ic + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ic * k + ky) * k + kx) * plane..][..plane];
                for oy in 0..oh {
                    axpy(
                        1.0,
                        &row[oy * ow..][..ow],
                        &mut img[(oy + ky) * w + kx..][..ow],
                    );
                }
            }
        }
    }
}

fn conv_forward(c: &Conv2d, x: &Tensor) -> Tensor {
    let s = x.shape();
    let (batch, channels, h, w) = (s[0], s[1], s[2], s[3]);
    debug_assert_eq!(channels, c.in_channels);
    let k = c.kernel;
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let plane = oh * ow;
    let taps = channels * k * k;
    let mut cols = vec![0.0; taps * plane];
    let mut out = vec![0.0; batch * c.out_channels * plane];
    for b in 0..batch {
        im2col(x.item(b), channels, h, w, k, &mut cols);
        for oc in 0..c.out_channels {
            let dst = &mut out[(b * c.out_channels + oc) * plane..][..plane];
            dst.fill(c.bias[oc]);
            let wrow = &c.weight[oc * taps..(oc + 1) * taps];
            for (j, &wv) in wrow.iter().enumerate() {
                axpy(wv, &cols[j * plane..][..plane], dst);
            }
        }
    }
    Tensor::from_vec(&[batch, c.out_channels, oh, ow], out).expect("conv shape")
}

fn conv_backward(
    c: &Conv2d,
    x: &Tensor,
    grad: &Tensor,
    need_input_grad: bool,
) -> (Option<Tensor>, Vec<Vec<f64>>) {
    let s = x.shape();
    let (batch, channels, h, w) = (s[0], s[1], s[2], s[3]);
    let k = c.kernel;
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let plane = oh * ow;
    let taps = channels * k * k;
    let mut dw = vec![0.0; c.weight.len()];
    let mut db = vec![0.0; c.out_channels];
    let mut dx = if need_input_grad {
        vec![0.0; x.len()]
    } else {
        Vec::new()
    };
    let mut cols = vec![0.0; taps * plane];
    let mut dcols = if need_input_grad {
        vec![0.0; taps * plane]
    } else {
        Vec::new()
    };
    let g = grad.data();
    for b in 0..batch {
        im2col(x.item(b), channels, h, w, k, &mut cols);
        dcols.fill(0.0);
        for oc in 0..c.out_channels {
            let gp = &g[(b * c.out_channels + oc) * plane..][..plane];
            db[oc] += gp.iter().sum::<f64>();
            let dwrow = &mut dw[oc * taps..(oc + 1) * taps];
            for (j, d) in dwrow.iter_mut().enumerate() {
                *d += dot(gp, &cols[j * plane..][..plane]);
            }
            if need_input_grad {
                let wrow = &c.weight[oc * taps..(oc + 1) * taps];
                for (j, &wv) in wrow.iter().enumerate() {
                    axpy(wv, gp, &mut dcols[j * plane..][..plane]);
                }
            }
        }
        if need_input_grad {
            col2im(
                &dcols,
                channels,
                h,
                w,
                k,
                &mut dx[b * channels * h * w..(b + 1) * channels * h * w],
            );
        }
    }
    let dx = need_input_grad.then(|| Tensor::from_vec(s, dx).expect("conv grad shape"));
    (dx, vec![dw, db])
}

fn pool_forward(x: &Tensor) -> (Tensor, Vec<usize>) {
    let s = x.shape();
    let (batch, channels, h, w) = (s[0], s[1], s[2], s[3]);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(batch * channels * oh * ow);
    let mut argmax = Vec::with_capacity(out.capacity());
    let data = x.data();
    for bc in 0..batch * channels {
        let base = bc * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if data[idx] > data[best] {
                        best = idx;
                    }
                }
                out.push(data[best]);
                argmax.push(best);
            }
        }
    }
    let out = Tensor::from_vec(&[batch, channels, oh, ow], out).expect("pool shape");
    (out, argmax)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_matches_naive_correlation() {
        let c = Conv2d {
            in_channels: 1,
            out_channels: 1,
            kernel: 2,
            weight: vec![1.0, 2.0, 3.0, 4.0],
            bias: vec![0.5],
        };
        let x = Tensor::from_vec(&[1, 1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
        let (out, _) = Layer::Conv2d(c).forward(x, None, false);
        // top-left window [1,2;4,5] -> 1 + 4 + 12 + 20 + 0.5
        assert_eq!(out.shape(), &[1, 1, 2, 2]);
        assert_eq!(out.data(), &[37.5, 47.5, 67.5, 77.5]);
    }

    #[test]
    fn pool_picks_window_max() {
        let x =
            Tensor::from_vec(&[1, 1, 2, 4], vec![1.0, 5.0, 2.0, 0.0, 3.0, 4.0, 8.0, 1.0]).unwrap();
        let (out, _) = Layer::MaxPool2d.forward(x, None, false);
        assert_eq!(out.data(), &[5.0, 8.0]);
    }

    #[test]
    fn dropout_without_rng_is_identity() {
        let x = Tensor::from_vec(&[1, 3], vec![1.0, -2.0, 3.0]).unwrap();
        let (out, _) = Layer::Dropout(0.5).forward(x.clone(), None, true);
        assert_eq!(out, x);
    }

    #[test]
    fn dot_handles_remainders() {
        let a: Vec<f64> = (0..7).map(f64::from).collect();
        assert_eq!(dot(&a, &a), 91.0);
    }
}
