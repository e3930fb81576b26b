//! 3-D cross-correlation (stride 1) and non-overlapping 3-D max pooling over
//! `[n × c × t × h × w]` volumes.

use crate::error::{Error, Result};
use crate::module::{glorot_uniform, Module};
use crate::rng::Rng;
use crate::tensor::gemm::{gemm_nn, gemm_nt, gemm_tn};
use crate::tensor::Tensor;

fn dims5(x: &Tensor, op: &'static str) -> Result<[usize; 5]> {
    match *x.shape() {
        [n, c, t, h, w] => Ok([n, c, t, h, w]),
        _ => Err(Error::InvalidArgument(format!(
            "{op} expects [n × c × t × h × w], got {:?}",
            x.shape()
        ))),
    }
}

/// Kernels `[f × c × kt × kh × kw]`, one bias per filter, zero padding per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv3d {
    pub kernels: Tensor,
    pub bias: Tensor,
    pub padding: [usize; 3],
}

#[derive(Clone, Debug)]
pub struct Conv3dCache {
    input_shape: [usize; 5],
    out: [usize; 3],
    /// Per sample, the unfolded input `[c·kt·kh·kw × to·ho·wo]`.
    cols: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv3dGrads {
    pub kernels: Tensor,
    pub bias: Tensor,
    pub x: Option<Tensor>,
}

impl Conv3d {
    pub fn new(in_channels: usize, filters: usize, kernel: [usize; 3], padding: [usize; 3], rng: &mut Rng) -> Self {
        let vol = kernel.iter().product::<usize>();
        Conv3d {
            kernels: glorot_uniform(
                &[filters, in_channels, kernel[0], kernel[1], kernel[2]],
                in_channels * vol,
                filters * vol,
                rng,
            ),
            bias: Tensor::zeros(&[filters]),
            padding,
        }
    }

    /// 3×3×3 kernels with padding 1, so extents are preserved.
    pub fn same(in_channels: usize, filters: usize, rng: &mut Rng) -> Self {
        Self::new(in_channels, filters, [3, 3, 3], [1, 1, 1], rng)
    }

    pub fn zeros_like(&self) -> Self {
        Conv3d {
            kernels: self.kernels.zeros_like(),
            bias: self.bias.zeros_like(),
            padding: self.padding,
        }
    }

    pub fn filters(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn kernel(&self) -> [usize; 3] {
        let s = self.kernels.shape();
        [s[2], s[3], s[4]]
    }

    /// Output extents for an input of extents `[t, h, w]`.
    pub fn output_extents(&self, extents: [usize; 3]) -> Result<[usize; 3]> {
        let k = self.kernel();
        let mut out = [0; 3];
        for a in 0..3 {
            let padded = extents[a] + 2 * self.padding[a];
            if padded < k[a] {
                return Err(Error::shape("conv3d", &extents, &k));
            }
            out[a] = padded - k[a] + 1;
        }
        Ok(out)
    }

    fn im2col(&self, x: &[f64], c: usize, ext: [usize; 3], out: [usize; 3]) -> Vec<f64> {
        let [kt, kh, kw] = self.kernel();
        let [pt, ph, pw] = self.padding;
        let [t, h, w] = ext;
        let [to, ho, wo] = out;
        let p = to * ho * wo;
        let mut cols = vec![0.0; c * kt * kh * kw * p];
        let mut row = 0;
        for ci in 0..c {
            for dt in 0..kt {
                for dh in 0..kh {
                    for dw in 0..kw {
                        let dst = &mut cols[row * p..(row + 1) * p];
                        for ot in 0..to {
                            let it = (ot + dt) as isize - pt as isize;
                            if it < 0 || it >= t as isize {
                                continue;
                            }
                            for oh in 0..ho {
                                let ih = (oh + dh) as isize - ph as isize;
                                if ih < 0 || ih >= h as isize {
                                    continue;
                                }
                                let src_base = ((ci * t + it as usize) * h + ih as usize) * w;
                                let dst_base = (ot * ho + oh) * wo;
                                for ow in 0..wo {
                                    let iw = (ow + dw) as isize - pw as isize;
                                    if iw >= 0 && iw < w as isize {
                                        dst[dst_base + ow] = x[src_base + iw as usize];
                                    }
                                }
                            }
                        }
                        row += 1;
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64], c: usize, ext: [usize; 3], out: [usize; 3], dx: &mut [f64]) {
        let [kt, kh, kw] = self.kernel();
        let [pt, ph, pw] = self.padding;
        let [t, h, w] = ext;
        let [to, ho, wo] = out;
        let p = to * ho * wo;
        let mut row = 0;
        for ci in 0..c {
            for dt in 0..kt {
                for dh in 0..kh {
                    for dw in 0..kw {
                        let src = &cols[row * p..(row + 1) * p];
                        for ot in 0..to {
                            let it = (ot + dt) as isize - pt as isize;
                            if it < 0 || it >= t as isize {
                                continue;
                            }
                            for oh in 0..ho {
                                let ih = (oh + dh) as isize - ph as isize;
                                if ih < 0 || ih >= h as isize {
                                    continue;
                                }
                                let dst_base = ((ci * t + it as usize) * h + ih as usize) * w;
                                let src_base = (ot * ho + oh) * wo;
                                for ow in 0..wo {
                                    let iw = (ow + dw) as isize - pw as isize;
                                    if iw >= 0 && iw < w as isize {
                                        dx[dst_base + iw as usize] += src[src_base + ow];
                                    }
                                }
                            }
                        }
                        row += 1;
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Conv3dCache)> {
        let [n, c, t, h, w] = dims5(x, "conv3d")?;
        if c != self.in_channels() {
            return Err(Error::shape("conv3d", x.shape(), self.kernels.shape()));
        }
        let out = self.output_extents([t, h, w])?;
        let f = self.filters();
        let p: usize = out.iter().product();
        let ck = self.kernels.len() / f;
        let in_len = c * t * h * w;
        let mut y = vec![0.0; n * f * p];
        let mut cols = Vec::with_capacity(n);
        for s in 0..n {
            let col = self.im2col(&x.data()[s * in_len..(s + 1) * in_len], c, [t, h, w], out);
            let ys = &mut y[s * f * p..(s + 1) * f * p];
            for (fi, chunk) in ys.chunks_mut(p).enumerate() {
                chunk.fill(self.bias.data()[fi]);
            }
            gemm_nn(f, ck, p, self.kernels.data(), &col, ys);
            cols.push(col);
        }
        let y = Tensor::new(vec![n, f, out[0], out[1], out[2]], y)?;
        Ok((
            y,
            Conv3dCache {
                input_shape: [n, c, t, h, w],
                out,
                cols,
            },
        ))
    }

    /// Gradients for kernels and bias; the input gradient only when `need_x`.
    pub fn backward(&self, cache: &Conv3dCache, grad_y: &Tensor, need_x: bool) -> Result<Conv3dGrads> {
        let [n, c, t, h, w] = cache.input_shape;
        let f = self.filters();
        let out = cache.out;
        if grad_y.shape() != [n, f, out[0], out[1], out[2]] {
            return Err(Error::shape(
                "conv3d_backward",
                grad_y.shape(),
                &[n, f, out[0], out[1], out[2]],
            ));
        }
        let p: usize = out.iter().product();
        let ck = self.kernels.len() / f;
        let mut gk = self.kernels.zeros_like();
        let mut gb = vec![0.0; f];
        let mut gx = need_x.then(|| vec![0.0; n * c * t * h * w]);
        let in_len = c * t * h * w;
        for s in 0..n {
            let gys = &grad_y.data()[s * f * p..(s + 1) * f * p];
            for (fi, chunk) in gys.chunks(p).enumerate() {
                gb[fi] += chunk.iter().sum::<f64>();
            }
            gemm_nt(f, p, ck, gys, &cache.cols[s], gk.data_mut());
            if let Some(gx) = gx.as_mut() {
                let mut dcols = vec![0.0; ck * p];
                gemm_tn(ck, f, p, self.kernels.data(), gys, &mut dcols);
                self.col2im(&dcols, c, [t, h, w], out, &mut gx[s * in_len..(s + 1) * in_len]);
            }
        }
        Ok(Conv3dGrads {
            kernels: gk,
            bias: Tensor::new(vec![f], gb)?,
            x: gx.map(|g| Tensor::new(vec![n, c, t, h, w], g)).transpose()?,
        })
    }
}

impl Module for Conv3d {
    fn params(&self) -> Vec<(String, &Tensor)> {
        vec![("kernels".into(), &self.kernels), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.kernels, &mut self.bias]
    }
}

/// Max pooling with stride equal to the window. Extents that do not divide
/// evenly are padded on the right with −∞, so every output sees at least one
/// real element.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaxPool3d {
    pub window: [usize; 3],
}

#[derive(Clone, Debug)]
pub struct PoolCache {
    input_shape: [usize; 5],
    /// Flat input index of the winner of every output element.
    argmax: Vec<usize>,
}

impl MaxPool3d {
    pub fn new(window: [usize; 3]) -> Result<Self> {
        if window.contains(&0) {
            return Err(Error::InvalidArgument(format!("pool window {window:?} has a zero extent")));
        }
        Ok(MaxPool3d { window })
    }

    pub fn output_extents(&self, extents: [usize; 3]) -> [usize; 3] {
        [0, 1, 2].map(|a| extents[a].div_ceil(self.window[a]))
    }

    /// Ties go to the first position in `(t, h, w)` scan order.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, PoolCache)> {
        let [n, c, t, h, w] = dims5(x, "maxpool3d")?;
        let [to, ho, wo] = self.output_extents([t, h, w]);
        let [pt, ph, pw] = self.window;
        let mut y = Vec::with_capacity(n * c * to * ho * wo);
        let mut argmax = Vec::with_capacity(y.capacity());
        let xd = x.data();
        for plane in 0..n * c {
            let base = plane * t * h * w;
            for ot in 0..to {
                for oh in 0..ho {
                    for ow in 0..wo {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = usize::MAX;
                        for it in ot * pt..((ot + 1) * pt).min(t) {
                            for ih in oh * ph..((oh + 1) * ph).min(h) {
                                for iw in ow * pw..((ow + 1) * pw).min(w) {
                                    let idx = base + (it * h + ih) * w + iw;
                                    if best_idx == usize::MAX || xd[idx] > best {
                                        best = xd[idx];
                                        best_idx = idx;
                                    }
                                }
                            }
                        }
                        y.push(best);
                        argmax.push(best_idx);
                    }
                }
            }
        }
        let y = Tensor::new(vec![n, c, to, ho, wo], y)?;
        Ok((
            y,
            PoolCache {
                input_shape: [n, c, t, h, w],
                argmax,
            },
        ))
    }

    /// Routes each output gradient to its argmax position.
    pub fn backward(&self, cache: &PoolCache, grad_y: &Tensor) -> Result<Tensor> {
        if grad_y.len() != cache.argmax.len() {
            return Err(Error::shape("maxpool3d_backward", grad_y.shape(), &[cache.argmax.len()]));
        }
        let mut gx = Tensor::zeros(&cache.input_shape);
        for (&idx, &g) in cache.argmax.iter().zip(grad_y.data()) {
            gx.data_mut()[idx] += g;
        }
        Ok(gx)
    }
}
