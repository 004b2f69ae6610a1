use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One layer of a feed-forward classifier.
///
/// Shapes are per-sample: images are `(C, H, W)`, vectors are `(n,)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// `weight: (out, in)`, `bias: (out,)`.
    Dense { weight: Tensor, bias: Tensor },
    /// `weight: (out_ch, in_ch, k, k)`, `bias: (out_ch,)`, zero padding.
    Conv2d {
        weight: Tensor,
        bias: Tensor,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool2d { size: usize, stride: usize },
    Flatten,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Dense,
    Conv2d,
    Relu,
    MaxPool2d,
    Flatten,
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Dense { .. } => LayerKind::Dense,
            Layer::Conv2d { .. } => LayerKind::Conv2d,
            Layer::Relu => LayerKind::Relu,
            Layer::MaxPool2d { .. } => LayerKind::MaxPool2d,
            Layer::Flatten => LayerKind::Flatten,
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, Layer::Dense { .. } | Layer::Conv2d { .. })
    }

    /// Output shape for a given input shape, or an error when the layer does not accept it.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Dense { weight, bias } => {
                let [out, inp] = weight.shape() else {
                    return Err(Error::shape("dense weight must be 2-D"));
                };
                if bias.shape() != [*out] {
                    return Err(Error::shape("dense bias does not match weight rows"));
                }
                if input != [*inp] {
                    return Err(Error::shape(format!(
                        "dense layer expects input ({inp},), got {input:?}"
                    )));
                }
                Ok(vec![*out])
            }
            Layer::Conv2d {
                weight,
                bias,
                stride,
                padding,
            } => {
                let [oc, ic, kh, kw] = weight.shape() else {
                    return Err(Error::shape("conv weight must be 4-D"));
                };
                if kh != kw {
                    return Err(Error::shape("only square conv kernels are supported"));
                }
                if bias.shape() != [*oc] {
                    return Err(Error::shape("conv bias does not match output channels"));
                }
                if *stride == 0 {
                    return Err(Error::shape("conv stride must be positive"));
                }
                let [c, h, w] = input else {
                    return Err(Error::shape(format!("conv expects (C,H,W), got {input:?}")));
                };
                if c != ic {
                    return Err(Error::shape(format!(
                        "conv expects {ic} input channels, got {c}"
                    )));
                }
                let (oh, ow) = conv_out(*h, *w, *kh, *stride, *padding)?;
                Ok(vec![*oc, oh, ow])
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::MaxPool2d { size, stride } => {
                let [c, h, w] = input else {
                    return Err(Error::shape(format!("maxpool expects (C,H,W), got {input:?}")));
                };
                if *size == 0 || *stride == 0 || *size > *h || *size > *w {
                    return Err(Error::shape("maxpool window does not fit the input"));
                }
                Ok(vec![*c, (h - size) / stride + 1, (w - size) / stride + 1])
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    pub(crate) fn forward(&self, x: &Tensor, out_shape: &[usize]) -> Tensor {
        match self {
            Layer::Dense { weight, bias } => {
                let (out, inp) = (weight.shape()[0], weight.shape()[1]);
                let w = weight.data();
                let xs = x.data();
                let data = (0..out)
                    .map(|o| {
                        let row = &w[o * inp..(o + 1) * inp];
                        bias.data()[o] + row.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>()
                    })
                    .collect();
                Tensor::new(out_shape.to_vec(), data).expect("dense output shape")
            }
            Layer::Conv2d {
                weight,
                bias,
                stride,
                padding,
            } => {
                let geo = ConvGeometry::new(x.shape(), weight.shape(), *stride, *padding);
                let cols = geo.im2col(x.data());
                let p = geo.oh * geo.ow;
                let mut out = vec![0.0; geo.oc * p];
                for (o, chunk) in out.chunks_mut(p).enumerate() {
                    chunk.fill(bias.data()[o]);
                }
                gemm(
                    geo.oc,
                    geo.ckk(),
                    p,
                    weight.data(),
                    false,
                    &cols,
                    false,
                    &mut out,
                    1.0,
                );
                Tensor::new(out_shape.to_vec(), out).expect("conv output shape")
            }
            Layer::Relu => x.map(|v| v.max(0.0)),
            Layer::MaxPool2d { size, stride } => {
                let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                let (oh, ow) = (out_shape[1], out_shape[2]);
                let xs = x.data();
                let mut out = Vec::with_capacity(c * oh * ow);
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let idx = pool_argmax(xs, ch, h, w, oy, ox, *size, *stride);
                            out.push(xs[idx]);
                        }
                    }
                }
                Tensor::new(out_shape.to_vec(), out).expect("pool output shape")
            }
            Layer::Flatten => x.clone().reshape(out_shape).expect("flatten shape"),
        }
    }

    /// Gradient with respect to the layer input for the plain chain rule, accumulating
    /// parameter gradients into `param_grads` when given.
    pub(crate) fn backward_linear(
        &self,
        input: &Tensor,
        grad_out: &Tensor,
        param_grads: Option<(&mut Tensor, &mut Tensor)>,
    ) -> Tensor {
        match self {
            Layer::Dense { weight, .. } => {
                let (out, inp) = (weight.shape()[0], weight.shape()[1]);
                let w = weight.data();
                let g = grad_out.data();
                let mut gx = vec![0.0; inp];
                for o in 0..out {
                    let go = g[o];
                    if go == 0.0 {
                        continue;
                    }
                    let row = &w[o * inp..(o + 1) * inp];
                    for (gxi, wi) in gx.iter_mut().zip(row) {
                        *gxi += go * wi;
                    }
                }
                if let Some((gw, gb)) = param_grads {
                    let xs = input.data();
                    let gwd = gw.data_mut();
                    for o in 0..out {
                        let go = g[o];
                        for (dst, xi) in gwd[o * inp..(o + 1) * inp].iter_mut().zip(xs) {
                            *dst += go * xi;
                        }
                    }
                    for (dst, go) in gb.data_mut().iter_mut().zip(g) {
                        *dst += go;
                    }
                }
                Tensor::new(input.shape().to_vec(), gx).expect("dense grad shape")
            }
            Layer::Conv2d {
                weight,
                stride,
                padding,
                ..
            } => {
                let geo = ConvGeometry::new(input.shape(), weight.shape(), *stride, *padding);
                let p = geo.oh * geo.ow;
                let mut gcols = vec![0.0; geo.ckk() * p];
                gemm(
                    geo.ckk(),
                    geo.oc,
                    p,
                    weight.data(),
                    true,
                    grad_out.data(),
                    false,
                    &mut gcols,
                    0.0,
                );
                if let Some((gw, gb)) = param_grads {
                    let cols = geo.im2col(input.data());
                    gemm(
                        geo.oc,
                        p,
                        geo.ckk(),
                        grad_out.data(),
                        false,
                        &cols,
                        true,
                        gw.data_mut(),
                        1.0,
                    );
                    for (o, dst) in gb.data_mut().iter_mut().enumerate() {
                        *dst += grad_out.data()[o * p..(o + 1) * p].iter().sum::<f64>();
                    }
                }
                let gx = geo.col2im(&gcols);
                Tensor::new(input.shape().to_vec(), gx).expect("conv grad shape")
            }
            Layer::Relu => input
                .zip_with(grad_out, |x, g| if x > 0.0 { g } else { 0.0 })
                .expect("relu grad shape"),
            Layer::MaxPool2d { size, stride } => {
                let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
                let (oh, ow) = (grad_out.shape()[1], grad_out.shape()[2]);
                let xs = input.data();
                let g = grad_out.data();
                let mut gx = vec![0.0; xs.len()];
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let idx = pool_argmax(xs, ch, h, w, oy, ox, *size, *stride);
                            gx[idx] += g[(ch * oh + oy) * ow + ox];
                        }
                    }
                }
                Tensor::new(input.shape().to_vec(), gx).expect("pool grad shape")
            }
            Layer::Flatten => grad_out
                .clone()
                .reshape(input.shape())
                .expect("flatten grad shape"),
        }
    }
}

pub(crate) fn conv_out(
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    padding: usize,
) -> Result<(usize, usize)> {
    if h + 2 * padding < k || w + 2 * padding < k {
        return Err(Error::shape("conv kernel larger than padded input"));
    }
    Ok((
        (h + 2 * padding - k) / stride + 1,
        (w + 2 * padding - k) / stride + 1,
    ))
}

/// Flat index of the window maximum; first maximum in row-major order wins.
#[allow(clippy::too_many_arguments)]
fn pool_argmax(
    xs: &[f64],
    ch: usize,
    h: usize,
    w: usize,
    oy: usize,
    ox: usize,
    size: usize,
    stride: usize,
) -> usize {
    let base = ch * h * w;
    let mut best = base + oy * stride * w + ox * stride;
    for dy in 0..size {
        let row = base + (oy * stride + dy) * w + ox * stride;
        for dx in 0..size {
            if xs[row + dx] > xs[best] {
                best = row + dx;
            }
        }
    }
    best
}

struct ConvGeometry {
    c: usize,
    h: usize,
    w: usize,
    oc: usize,
    k: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeometry {
    fn new(input: &[usize], weight: &[usize], stride: usize, padding: usize) -> Self {
        let (c, h, w) = (input[0], input[1], input[2]);
        let (oc, k) = (weight[0], weight[2]);
        let (oh, ow) = conv_out(h, w, k, stride, padding).expect("validated conv geometry");
        Self {
            c,
            h,
            w,
            oc,
            k,
            stride,
            padding,
            oh,
            ow,
        }
    }

    fn ckk(&self) -> usize {
        self.c * self.k * self.k
    }

    /// Rows are (channel, ky, kx), columns are output positions.
    fn im2col(&self, x: &[f64]) -> Vec<f64> {
        let p = self.oh * self.ow;
        let mut cols = vec![0.0; self.ckk() * p];
        for ch in 0..self.c {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (ch * self.k + ky) * self.k + kx;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oy in 0..self.oh {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let src_row = (ch * self.h + iy as usize) * self.w;
                        for ox in 0..self.ow {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            if ix >= 0 && ix < self.w as isize {
                                dst[oy * self.ow + ox] = x[src_row + ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64]) -> Vec<f64> {
        let p = self.oh * self.ow;
        let mut x = vec![0.0; self.c * self.h * self.w];
        for ch in 0..self.c {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (ch * self.k + ky) * self.k + kx;
                    let src = &cols[row * p..(row + 1) * p];
                    for oy in 0..self.oh {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let dst_row = (ch * self.h + iy as usize) * self.w;
                        for ox in 0..self.ow {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            if ix >= 0 && ix < self.w as isize {
                                x[dst_row + ix as usize] += src[oy * self.ow + ox];
                            }
                        }
                    }
                }
            }
        }
        x
    }
}

/// `c = a·b + beta·c` for row-major operands; `a` is `m×k` (stored `k×m` when `a_t`),
/// `b` is `k×n` (stored `n×k` when `b_t`).
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    beta: f64,
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above guarantee every strided access stays inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
