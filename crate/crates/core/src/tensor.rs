//! Dense arrays and the handful of kernels the blocks are built from.
//!
//! Feature maps are `[channels, height, width]`, row-major. Convolutions are
//! cross-correlations (the kernel is not flipped) with zero padding, computed
//! by direct summation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major array of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::invalid(
                "tensor shape",
                format!("{shape:?} must be non-empty with positive dimensions"),
            ));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::shape("Tensor::new", "data length", len, data.len()));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "tensor data",
                format!("non-finite value {} at flat index {i}", data[i]),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let len = shape.iter().product();
        Self::new(shape.to_vec(), vec![0.0; len])
    }

    /// Builds a tensor by evaluating `f` at each flat index.
    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> f64) -> Result<Self> {
        let len = shape.iter().product();
        Self::new(shape.to_vec(), (0..len).map(f).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(channels, height, width)` of a rank-3 feature map.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::shape(
                "feature map",
                "rank",
                3,
                format!("{} (shape {:?})", self.shape.len(), self.shape),
            )),
        }
    }

    /// `(out, in_per_group, kh, kw)` of a rank-4 filter bank.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [o, i, kh, kw] => Ok((o, i, kh, kw)),
            _ => Err(Error::shape(
                "filter bank",
                "rank",
                4,
                format!("{} (shape {:?})", self.shape.len(), self.shape),
            )),
        }
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    /// Elementwise sum of two tensors of identical shape.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape(
                "Tensor::add",
                "shape",
                format!("{:?}", self.shape),
                format!("{:?}", other.shape),
            ));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Channel slice `[start, end)` of a feature map.
    pub fn channels(&self, start: usize, end: usize) -> Result<Tensor> {
        let (c, h, w) = self.dims3()?;
        if start >= end || end > c {
            return Err(Error::shape(
                "channel slice",
                "channel range",
                format!("within 0..{c}"),
                format!("{start}..{end}"),
            ));
        }
        let plane = h * w;
        Ok(Tensor {
            shape: vec![end - start, h, w],
            data: self.data[start * plane..end * plane].to_vec(),
        })
    }

    /// Stacks feature maps of equal spatial size along the channel axis.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("channel concat", "no inputs"))?;
        let (_, h, w) = first.dims3()?;
        let mut channels = 0;
        let mut data = Vec::new();
        for part in parts {
            let (c, ph, pw) = part.dims3()?;
            if (ph, pw) != (h, w) {
                return Err(Error::shape(
                    "channel concat",
                    "spatial size",
                    format!("{h}x{w}"),
                    format!("{ph}x{pw}"),
                ));
            }
            channels += c;
            data.extend_from_slice(&part.data);
        }
        Tensor::new(vec![channels, h, w], data)
    }
}

/// Padding applied around the input before a convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PaddingMode {
    #[default]
    Zeros,
    Reflect,
    Replicate,
}

/// Geometry of a 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
    #[serde(default)]
    pub padding_mode: PaddingMode,
}

impl ConvSpec {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> Result<Self> {
        let spec = Self {
            in_channels,
            out_channels,
            kernel_size,
            stride,
            padding,
            groups,
            padding_mode: PaddingMode::Zeros,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Standard convolution with "same" padding for odd kernels.
    pub fn standard(in_channels: usize, out_channels: usize, kernel_size: usize, stride: usize) -> Result<Self> {
        Self::new(in_channels, out_channels, kernel_size, stride, kernel_size / 2, 1)
    }

    pub fn depthwise(channels: usize, kernel_size: usize, stride: usize) -> Result<Self> {
        Self::new(channels, channels, kernel_size, stride, kernel_size / 2, channels)
    }

    pub fn pointwise(in_channels: usize, out_channels: usize) -> Result<Self> {
        Self::new(in_channels, out_channels, 1, 1, 0, 1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::invalid("conv spec", reason));
        if self.in_channels == 0 || self.out_channels == 0 {
            return bad(format!(
                "channel counts must be positive (in {}, out {})",
                self.in_channels, self.out_channels
            ));
        }
        if self.kernel_size == 0 || self.kernel_size.is_multiple_of(2) {
            return bad(format!("kernel_size {} must be odd", self.kernel_size));
        }
        if self.stride == 0 {
            return bad("stride must be >= 1".into());
        }
        if self.groups == 0 {
            return bad("groups must be >= 1".into());
        }
        if !self.in_channels.is_multiple_of(self.groups) || !self.out_channels.is_multiple_of(self.groups) {
            return bad(format!(
                "in_channels {} and out_channels {} must both be divisible by groups {}",
                self.in_channels, self.out_channels, self.groups
            ));
        }
        if self.padding_mode != PaddingMode::Zeros {
            return bad(format!("padding mode {:?} is not supported, only zero padding", self.padding_mode));
        }
        Ok(())
    }

    pub fn is_depthwise(&self) -> bool {
        self.groups == self.in_channels && self.in_channels == self.out_channels
    }

    pub fn is_pointwise(&self) -> bool {
        self.kernel_size == 1 && self.stride == 1 && self.padding == 0 && self.groups == 1
    }

    /// Output spatial size `floor((n + 2p - k) / s) + 1` along each axis.
    pub fn output_size(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        let axis = |n: usize, name: &str| {
            let padded = n + 2 * self.padding;
            if padded < self.kernel_size {
                Err(Error::shape(
                    "conv output size",
                    name.to_string(),
                    format!(">= {} after padding", self.kernel_size),
                    padded,
                ))
            } else {
                Ok((padded - self.kernel_size) / self.stride + 1)
            }
        };
        Ok((axis(height, "input height")?, axis(width, "input width")?))
    }

    /// Expected filter bank shape `[out, in / groups, k, k]`.
    pub fn weight_shape(&self) -> [usize; 4] {
        [
            self.out_channels,
            self.in_channels / self.groups,
            self.kernel_size,
            self.kernel_size,
        ]
    }

    fn check_operands(&self, context: &'static str, input: &Tensor, weights: &Tensor, bias: Option<&Tensor>) -> Result<(usize, usize, usize)> {
        self.validate()?;
        let (c, h, w) = input.dims3()?;
        if c != self.in_channels {
            return Err(Error::shape(context, "input channels", self.in_channels, c));
        }
        let expected = self.weight_shape();
        if weights.shape() != expected {
            return Err(Error::shape(
                context,
                "weight shape",
                format!("{expected:?}"),
                format!("{:?}", weights.shape()),
            ));
        }
        if let Some(b) = bias {
            if b.shape() != [self.out_channels] {
                return Err(Error::shape(
                    context,
                    "bias shape",
                    format!("[{}]", self.out_channels),
                    format!("{:?}", b.shape()),
                ));
            }
        }
        Ok((c, h, w))
    }
}

/// General grouped 2-D cross-correlation.
pub fn conv2d(input: &Tensor, weights: &Tensor, bias: Option<&Tensor>, spec: &ConvSpec) -> Result<Tensor> {
    let (_, h, w) = spec.check_operands("conv2d", input, weights, bias)?;
    let (oh, ow) = spec.output_size(h, w)?;
    let k = spec.kernel_size;
    let cin_g = spec.in_channels / spec.groups;
    let cout_g = spec.out_channels / spec.groups;
    let x = input.data();
    let wt = weights.data();
    let mut out = vec![0.0; spec.out_channels * oh * ow];

    for co in 0..spec.out_channels {
        let group = co / cout_g;
        let b = bias.map_or(0.0, |b| b.data()[co]);
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = b;
                for ci in 0..cin_g {
                    let plane = (group * cin_g + ci) * h * w;
                    let wbase = (co * cin_g + ci) * k * k;
                    for ky in 0..k {
                        let iy = (oy * spec.stride + ky) as isize - spec.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let row = plane + iy as usize * w;
                        for kx in 0..k {
                            let ix = (ox * spec.stride + kx) as isize - spec.padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc += wt[wbase + ky * k + kx] * x[row + ix as usize];
                        }
                    }
                }
                out[(co * oh + oy) * ow + ox] = acc;
            }
        }
    }
    Tensor::new(vec![spec.out_channels, oh, ow], out)
}

/// Per-channel spatial filtering; `spec.groups` must equal the channel count.
pub fn depthwise_conv2d(input: &Tensor, weights: &Tensor, bias: Option<&Tensor>, spec: &ConvSpec) -> Result<Tensor> {
    if !spec.is_depthwise() {
        return Err(Error::invalid(
            "depthwise conv spec",
            format!(
                "groups ({}) must equal in_channels ({}) and out_channels ({})",
                spec.groups, spec.in_channels, spec.out_channels
            ),
        ));
    }
    let (c, h, w) = spec.check_operands("depthwise_conv2d", input, weights, bias)?;
    let (oh, ow) = spec.output_size(h, w)?;
    let k = spec.kernel_size;
    let pad = spec.padding as isize;
    let mut out = Vec::with_capacity(c * oh * ow);

    for ch in 0..c {
        let plane = &input.data()[ch * h * w..(ch + 1) * h * w];
        let kernel = &weights.data()[ch * k * k..(ch + 1) * k * k];
        let b = bias.map_or(0.0, |b| b.data()[ch]);
        for oy in 0..oh {
            let y0 = (oy * spec.stride) as isize - pad;
            for ox in 0..ow {
                let x0 = (ox * spec.stride) as isize - pad;
                let mut acc = b;
                for (ky, krow) in kernel.chunks_exact(k).enumerate() {
                    let iy = y0 + ky as isize;
                    if !(0..h as isize).contains(&iy) {
                        continue;
                    }
                    let row = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (kx, &kv) in krow.iter().enumerate() {
                        let ix = x0 + kx as isize;
                        if (0..w as isize).contains(&ix) {
                            acc += kv * row[ix as usize];
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

/// 1x1 channel mixing: every pixel's channel vector is multiplied by the
/// `[out, in]` weight matrix.
pub fn pointwise_conv2d(input: &Tensor, weights: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let (cin, h, w) = input.dims3()?;
    let (cout, wcin, kh, kw) = weights.dims4()?;
    if (kh, kw) != (1, 1) {
        return Err(Error::shape("pointwise_conv2d", "kernel size", "1x1", format!("{kh}x{kw}")));
    }
    if wcin != cin {
        return Err(Error::shape("pointwise_conv2d", "weight input channels", cin, wcin));
    }
    ConvSpec::pointwise(cin, cout)?.check_operands("pointwise_conv2d", input, weights, bias)?;

    let plane = h * w;
    let x = input.data();
    let wt = weights.data();
    let mut out = vec![0.0; cout * plane];
    for co in 0..cout {
        let dst = &mut out[co * plane..(co + 1) * plane];
        if let Some(b) = bias {
            dst.fill(b.data()[co]);
        }
        for ci in 0..cin {
            let coef = wt[co * cin + ci];
            let src = &x[ci * plane..(ci + 1) * plane];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += coef * s;
            }
        }
    }
    Tensor::new(vec![cout, h, w], out)
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::shape("Matrix::new", "data length", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::shape(
            "matmul",
            "inner dimension",
            format!("{} (lhs columns)", a.cols),
            format!("{} (rhs rows)", b.rows),
        ));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let dst = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a.row(i).iter().enumerate() {
            for (d, &bkj) in dst.iter_mut().zip(b.row(k)) {
                *d += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// Softmax of each row, with the row maximum subtracted first.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    if m.cols == 0 {
        return out;
    }
    for row in out.data.chunks_exact_mut(m.cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

const JACOBI_TOLERANCE: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Singular values in descending order, `min(rows, cols)` of them.
///
/// One-sided (Hestenes) cyclic Jacobi: plane rotations are applied to the
/// columns of the taller orientation until every column pair is orthogonal
/// to within `1e-12` relative, which diagonalises the smaller Gram matrix
/// without forming it. The column norms are then the singular values.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    let (tall, n) = if m.rows >= m.cols {
        (m.clone(), m.cols)
    } else {
        (m.transpose(), m.rows)
    };
    if n == 0 {
        return Vec::new();
    }
    let rows = tall.rows;
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..rows).map(|i| tall.get(i, j)).collect())
        .collect();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&cols[p], &cols[q]);
                    cp.iter().zip(cq).fold((0.0, 0.0, 0.0), |(a, b, g), (x, y)| {
                        (a + x * x, b + y * y, g + x * y)
                    })
                };
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOLERANCE * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                for (x, y) in left[p].iter_mut().zip(right[0].iter_mut()) {
                    let xp = *x;
                    *x = c * xp - s * *y;
                    *y = s * xp + c * *y;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigma: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    sigma.sort_by(|a, b| b.total_cmp(a));
    sigma
}
