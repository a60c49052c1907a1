//! Batched kernels for the parametric layers.
//!
//! Activations are `[batch, ..]` row-major buffers; conv inputs are
//! channel-major `[batch, channels, height, width]`. Convolutions use stride 1
//! and no padding.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub in_h: usize,
    pub in_w: usize,
}

impl ConvGeometry {
    pub fn out_h(&self) -> usize {
        self.in_h + 1 - self.kernel
    }

    pub fn out_w(&self) -> usize {
        self.in_w + 1 - self.kernel
    }

    pub fn in_len(&self) -> usize {
        self.in_channels * self.in_h * self.in_w
    }

    pub fn out_len(&self) -> usize {
        self.out_channels * self.out_h() * self.out_w()
    }
}

pub(crate) fn dense_forward(
    input: &[f64],
    batch: usize,
    weight: &[f64],
    bias: &[f64],
    in_dim: usize,
    out_dim: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; batch * out_dim];
    for b in 0..batch {
        let x = &input[b * in_dim..(b + 1) * in_dim];
        let y = &mut out[b * out_dim..(b + 1) * out_dim];
        for (o, yo) in y.iter_mut().enumerate() {
            let w = &weight[o * in_dim..(o + 1) * in_dim];
            *yo = bias[o] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    out
}

/// Returns `(d_input, d_weight, d_bias)`; `d_input` is skipped when not needed.
pub(crate) fn dense_backward(
    input: &[f64],
    grad_out: &[f64],
    batch: usize,
    weight: &[f64],
    in_dim: usize,
    out_dim: usize,
    need_input_grad: bool,
) -> (Option<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let mut dw = vec![0.0; out_dim * in_dim];
    let mut db = vec![0.0; out_dim];
    let mut dx = need_input_grad.then(|| vec![0.0; batch * in_dim]);
    for b in 0..batch {
        let x = &input[b * in_dim..(b + 1) * in_dim];
        let g = &grad_out[b * out_dim..(b + 1) * out_dim];
        for (o, &go) in g.iter().enumerate() {
            if go == 0.0 {
                continue;
            }
            db[o] += go;
            let row = &mut dw[o * in_dim..(o + 1) * in_dim];
            for (r, xi) in row.iter_mut().zip(x) {
                *r += go * xi;
            }
            if let Some(dx) = dx.as_mut() {
                let w = &weight[o * in_dim..(o + 1) * in_dim];
                let dxb = &mut dx[b * in_dim..(b + 1) * in_dim];
                for (d, wi) in dxb.iter_mut().zip(w) {
                    *d += go * wi;
                }
            }
        }
    }
    (dx, dw, db)
}

pub(crate) fn conv_forward(
    input: &[f64],
    batch: usize,
    weight: &[f64],
    bias: &[f64],
    g: &ConvGeometry,
) -> Vec<f64> {
    let (oh, ow, k) = (g.out_h(), g.out_w(), g.kernel);
    let mut out = vec![0.0; batch * g.out_len()];
    for b in 0..batch {
        let x = &input[b * g.in_len()..(b + 1) * g.in_len()];
        let y = &mut out[b * g.out_len()..(b + 1) * g.out_len()];
        for o in 0..g.out_channels {
            let plane = &mut y[o * oh * ow..(o + 1) * oh * ow];
            plane.iter_mut().for_each(|v| *v = bias[o]);
            for c in 0..g.in_channels {
                let xc = &x[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
                let wk = &weight[(o * g.in_channels + c) * k * k..(o * g.in_channels + c + 1) * k * k];
                for ky in 0..k {
                    for kx in 0..k {
                        let w = wk[ky * k + kx];
                        for yy in 0..oh {
                            let src = &xc[(yy + ky) * g.in_w + kx..(yy + ky) * g.in_w + kx + ow];
                            let dst = &mut plane[yy * ow..(yy + 1) * ow];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += w * s;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn conv_backward(
    input: &[f64],
    grad_out: &[f64],
    batch: usize,
    weight: &[f64],
    g: &ConvGeometry,
    need_input_grad: bool,
) -> (Option<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let (oh, ow, k) = (g.out_h(), g.out_w(), g.kernel);
    let mut dw = vec![0.0; weight.len()];
    let mut db = vec![0.0; g.out_channels];
    let mut dx = need_input_grad.then(|| vec![0.0; batch * g.in_len()]);
    for b in 0..batch {
        let x = &input[b * g.in_len()..(b + 1) * g.in_len()];
        let gy = &grad_out[b * g.out_len()..(b + 1) * g.out_len()];
        for o in 0..g.out_channels {
            let gplane = &gy[o * oh * ow..(o + 1) * oh * ow];
            db[o] += gplane.iter().sum::<f64>();
            for c in 0..g.in_channels {
                let xc = &x[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
                let base = (o * g.in_channels + c) * k * k;
                for ky in 0..k {
                    for kx in 0..k {
                        let mut acc = 0.0;
                        for yy in 0..oh {
                            let src = &xc[(yy + ky) * g.in_w + kx..(yy + ky) * g.in_w + kx + ow];
                            let gr = &gplane[yy * ow..(yy + 1) * ow];
                            acc += src.iter().zip(gr).map(|(a, b)| a * b).sum::<f64>();
                        }
                        dw[base + ky * k + kx] += acc;
                        if let Some(dx) = dx.as_mut() {
                            let w = weight[base + ky * k + kx];
                            let dxc = &mut dx[b * g.in_len() + c * g.in_h * g.in_w
                                ..b * g.in_len() + (c + 1) * g.in_h * g.in_w];
                            for yy in 0..oh {
                                let dst = &mut dxc[(yy + ky) * g.in_w + kx..(yy + ky) * g.in_w + kx + ow];
                                let gr = &gplane[yy * ow..(yy + 1) * ow];
                                for (d, gv) in dst.iter_mut().zip(gr) {
                                    *d += w * gv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

/// Row-wise softmax with max subtraction.
pub(crate) fn softmax_rows(logits: &[f64], batch: usize, classes: usize) -> Vec<f64> {
    let mut out = vec![0.0; batch * classes];
    for b in 0..batch {
        let z = &logits[b * classes..(b + 1) * classes];
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let p = &mut out[b * classes..(b + 1) * classes];
        let mut sum = 0.0;
        for (pi, zi) in p.iter_mut().zip(z) {
            *pi = (zi - max).exp();
            sum += *pi;
        }
        p.iter_mut().for_each(|v| *v /= sum);
    }
    out
}
