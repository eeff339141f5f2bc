//! Forward and backward kernels on row-major `(h, w, c)` buffers.
//!
//! Conv weights are laid out `[out][kh][kw][in]` so that a weight row lines
//! up with an im2col patch gathered from the input.

use super::spec::Shape;

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in chunks * 4..a.len() {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub(crate) fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Geometry of a same-padded convolution.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub input: Shape,
    pub output: Shape,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvGeom {
    pub fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.input.channels
    }

    fn pad(&self) -> usize {
        (self.kernel - 1) / 2
    }

    /// Gathers the receptive field of output `(oh, ow)`; out-of-image taps are zero.
    #[inline]
    fn gather(&self, input: &[f64], oh: usize, ow: usize, patch: &mut [f64]) {
        let ic = self.input.channels;
        let pad = self.pad() as isize;
        let k = self.kernel;
        for kh in 0..k {
            let ih = (oh * self.stride + kh) as isize - pad;
            for kw in 0..k {
                let iw = (ow * self.stride + kw) as isize - pad;
                let dst = &mut patch[(kh * k + kw) * ic..(kh * k + kw + 1) * ic];
                if ih < 0 || iw < 0 || ih as usize >= self.input.height || iw as usize >= self.input.width {
                    dst.fill(0.0);
                } else {
                    let src = (ih as usize * self.input.width + iw as usize) * ic;
                    dst.copy_from_slice(&input[src..src + ic]);
                }
            }
        }
    }

    #[inline]
    fn scatter_add(&self, d_input: &mut [f64], oh: usize, ow: usize, d_patch: &[f64]) {
        let ic = self.input.channels;
        let pad = self.pad() as isize;
        let k = self.kernel;
        for kh in 0..k {
            let ih = (oh * self.stride + kh) as isize - pad;
            if ih < 0 || ih as usize >= self.input.height {
                continue;
            }
            for kw in 0..k {
                let iw = (ow * self.stride + kw) as isize - pad;
                if iw < 0 || iw as usize >= self.input.width {
                    continue;
                }
                let dst = (ih as usize * self.input.width + iw as usize) * ic;
                let src = &d_patch[(kh * k + kw) * ic..(kh * k + kw + 1) * ic];
                for (d, s) in d_input[dst..dst + ic].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
    }

    /// Convolution followed by ReLU.
    pub fn forward_relu(&self, input: &[f64], weights: &[f64], bias: &[f64]) -> Vec<f64> {
        let oc = self.output.channels;
        let plen = self.patch_len();
        let mut out = vec![0.0; self.output.len()];
        let mut patch = vec![0.0; plen];
        for oh in 0..self.output.height {
            for ow in 0..self.output.width {
                self.gather(input, oh, ow, &mut patch);
                let row = &mut out[(oh * self.output.width + ow) * oc..][..oc];
                for (o, r) in row.iter_mut().enumerate() {
                    let v = bias[o] + dot(&weights[o * plen..(o + 1) * plen], &patch);
                    *r = if v > 0.0 { v } else { 0.0 };
                }
            }
        }
        out
    }

    /// Backward pass through ReLU and the convolution. `output` holds the
    /// forward activations (for the ReLU mask); `d_output` is overwritten.
    /// Input gradients are only produced when `d_input` is given.
    #[allow(clippy::too_many_arguments)]
    pub fn backward_relu(
        &self,
        input: &[f64],
        output: &[f64],
        d_output: &mut [f64],
        weights: &[f64],
        d_weights: &mut [f64],
        d_bias: &mut [f64],
        mut d_input: Option<&mut [f64]>,
    ) {
        let oc = self.output.channels;
        let plen = self.patch_len();
        for (d, &o) in d_output.iter_mut().zip(output) {
            if o <= 0.0 {
                *d = 0.0;
            }
        }
        let mut patch = vec![0.0; plen];
        let mut d_patch = vec![0.0; plen];
        for oh in 0..self.output.height {
            for ow in 0..self.output.width {
                let g_row = &d_output[(oh * self.output.width + ow) * oc..][..oc];
                if g_row.iter().all(|&g| g == 0.0) {
                    continue;
                }
                self.gather(input, oh, ow, &mut patch);
                if d_input.is_some() {
                    d_patch.fill(0.0);
                }
                for (o, &g) in g_row.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    d_bias[o] += g;
                    axpy(&mut d_weights[o * plen..(o + 1) * plen], g, &patch);
                    if d_input.is_some() {
                        axpy(&mut d_patch, g, &weights[o * plen..(o + 1) * plen]);
                    }
                }
                if let Some(d_in) = d_input.as_deref_mut() {
                    self.scatter_add(d_in, oh, ow, &d_patch);
                }
            }
        }
    }
}

/// Geometry of an unpadded max pooling.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PoolGeom {
    pub input: Shape,
    pub output: Shape,
    pub kernel: usize,
    pub stride: usize,
}

impl PoolGeom {
    /// Input index of the window maximum; the first maximum in scan order wins.
    #[inline]
    fn argmax(&self, input: &[f64], oh: usize, ow: usize, c: usize) -> usize {
        let ch = self.input.channels;
        let mut best_idx = usize::MAX;
        let mut best = f64::NEG_INFINITY;
        for kh in 0..self.kernel {
            let ih = oh * self.stride + kh;
            for kw in 0..self.kernel {
                let iw = ow * self.stride + kw;
                let idx = (ih * self.input.width + iw) * ch + c;
                if input[idx] > best || best_idx == usize::MAX {
                    best = input[idx];
                    best_idx = idx;
                }
            }
        }
        best_idx
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let ch = self.output.channels;
        let mut out = vec![0.0; self.output.len()];
        for oh in 0..self.output.height {
            for ow in 0..self.output.width {
                for c in 0..ch {
                    out[(oh * self.output.width + ow) * ch + c] = input[self.argmax(input, oh, ow, c)];
                }
            }
        }
        out
    }

    pub fn backward(&self, input: &[f64], d_output: &[f64], d_input: &mut [f64]) {
        let ch = self.output.channels;
        for oh in 0..self.output.height {
            for ow in 0..self.output.width {
                for c in 0..ch {
                    let g = d_output[(oh * self.output.width + ow) * ch + c];
                    if g != 0.0 {
                        d_input[self.argmax(input, oh, ow, c)] += g;
                    }
                }
            }
        }
    }
}

/// `weights` is row-major `[out][in]`.
pub(crate) fn linear_forward(input: &[f64], weights: &[f64], bias: &[f64], relu: bool) -> Vec<f64> {
    let n_in = input.len();
    bias.iter()
        .enumerate()
        .map(|(o, b)| {
            let v = b + dot(&weights[o * n_in..(o + 1) * n_in], input);
            if relu && v <= 0.0 {
                0.0
            } else {
                v
            }
        })
        .collect()
}

/// Backward through an (optionally ReLU-activated) linear layer. `d_output`
/// is masked in place when `relu` is set.
#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_backward(
    input: &[f64],
    output: &[f64],
    d_output: &mut [f64],
    relu: bool,
    weights: &[f64],
    d_weights: &mut [f64],
    d_bias: &mut [f64],
    d_input: Option<&mut [f64]>,
) {
    let n_in = input.len();
    if relu {
        for (d, &o) in d_output.iter_mut().zip(output) {
            if o <= 0.0 {
                *d = 0.0;
            }
        }
    }
    for (o, &g) in d_output.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        d_bias[o] += g;
        axpy(&mut d_weights[o * n_in..(o + 1) * n_in], g, input);
    }
    if let Some(d_in) = d_input {
        for (o, &g) in d_output.iter().enumerate() {
            if g != 0.0 {
                axpy(d_in, g, &weights[o * n_in..(o + 1) * n_in]);
            }
        }
    }
}
