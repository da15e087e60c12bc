//! The shared volumetric decoder: a small convolutional generator mapping an
//! n-dimensional latent vector to a complex 3D volume, with exact
//! reverse-mode derivatives with respect to both the weights and the latent
//! input.
//!
//! Architecture: dense layer to a (base_channels, 4, 4) feature map, then a
//! chain of {2x nearest-neighbor upsample, 3x3 conv, leaky-ReLU} stages up to
//! the in-plane grid size, then an output head producing 2*Nz channels that
//! are reinterpreted as the real and imaginary parts of the Nz slices. A
//! true-3D head (1x1 lift to volumetric features followed by a 3x3x3 conv)
//! is available behind the architecture descriptor.

use crate::error::{CoreError, Result};
use crate::rng::{stream_rng, StreamDomain};
use crate::types::{Grid, Volume3D};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Flat real tensor with an explicit shape; the unit Adam and checkpoints
/// operate on.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// 2D feature map, channel-major: data[(c*h + i)*w + j].
#[derive(Debug, Clone)]
pub struct FeatureMap {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    fn zeros(c: usize, h: usize, w: usize) -> Self {
        FeatureMap { c, h, w, data: vec![0.0; c * h * w] }
    }

    #[inline]
    fn row(&self, c: usize, i: usize) -> &[f64] {
        let base = (c * self.h + i) * self.w;
        &self.data[base..base + self.w]
    }
}

/// 3D feature block, channel-major: data[((c*x + ix)*y + iy)*z + iz].
#[derive(Debug, Clone)]
pub struct Feature3 {
    pub c: usize,
    pub x: usize,
    pub y: usize,
    pub z: usize,
    pub data: Vec<f64>,
}

impl Feature3 {
    fn zeros(c: usize, x: usize, y: usize, z: usize) -> Self {
        Feature3 { c, x, y, z, data: vec![0.0; c * x * y * z] }
    }

    #[inline]
    fn idx(&self, c: usize, ix: usize, iy: usize, iz: usize) -> usize {
        ((c * self.x + ix) * self.y + iy) * self.z + iz
    }
}

/// Output head turning the last 2D feature map into 2*Nz volume channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OutputHead {
    /// 1x1 conv straight to 2*Nz channels (a slice per channel pair).
    SliceChannels,
    /// 1x1 lift to `channels`*Nz volumetric features, then a 3x3x3 conv to
    /// the 2 real/imaginary output channels.
    Conv3d { channels: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorArch {
    pub latent_dim: usize,
    pub base_size: usize,
    pub base_channels: usize,
    /// Output channels of each upsample stage; each stage doubles resolution.
    pub stage_channels: Vec<usize>,
    /// Number of slices Nz in the generated volume.
    pub out_slices: usize,
    pub leaky_slope: f64,
    pub head: OutputHead,
}

impl GeneratorArch {
    /// Default decoder for an (n, n, nz) grid; `n` must be base_size * 2^k.
    pub fn default_for_grid(grid: Grid, latent_dim: usize) -> Result<Self> {
        let mut arch = GeneratorArch {
            latent_dim,
            base_size: 4,
            base_channels: 32,
            stage_channels: Vec::new(),
            out_slices: grid.nz,
            leaky_slope: 0.1,
            head: OutputHead::SliceChannels,
        };
        if grid.nx != grid.ny {
            return Err(CoreError::config_one(
                "generator",
                format!("in-plane grid must be square, got {}x{}", grid.nx, grid.ny),
            ));
        }
        let mut size = arch.base_size;
        let widths = [32usize, 32, 16, 12, 8, 8];
        let mut k = 0;
        while size < grid.nx {
            arch.stage_channels.push(widths[k.min(widths.len() - 1)]);
            size *= 2;
            k += 1;
        }
        if size != grid.nx {
            return Err(CoreError::config_one(
                "generator",
                format!("grid size {} is not base_size * 2^k", grid.nx),
            ));
        }
        Ok(arch)
    }

    pub fn out_size(&self) -> usize {
        self.base_size << self.stage_channels.len()
    }

    pub fn out_grid(&self) -> Grid {
        Grid::new(self.out_size(), self.out_size(), self.out_slices)
    }

    fn last_channels(&self) -> usize {
        *self.stage_channels.last().unwrap_or(&self.base_channels)
    }

    /// Shapes of all parameter tensors, in storage order.
    pub fn tensor_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = Vec::new();
        let dense_out = self.base_channels * self.base_size * self.base_size;
        shapes.push(vec![dense_out, self.latent_dim]);
        shapes.push(vec![dense_out]);
        let mut c_in = self.base_channels;
        for &c_out in &self.stage_channels {
            shapes.push(vec![c_out, c_in, 3, 3]);
            shapes.push(vec![c_out]);
            c_in = c_out;
        }
        match self.head {
            OutputHead::SliceChannels => {
                shapes.push(vec![2 * self.out_slices, c_in]);
                shapes.push(vec![2 * self.out_slices]);
            }
            OutputHead::Conv3d { channels } => {
                shapes.push(vec![channels * self.out_slices, c_in]);
                shapes.push(vec![channels * self.out_slices]);
                shapes.push(vec![2, channels, 3, 3, 3]);
                shapes.push(vec![2]);
            }
        }
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.tensor_shapes()
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.base_size == 0 || self.base_channels == 0 {
            return Err(CoreError::config_one("generator", "zero-sized architecture"));
        }
        if self.out_slices == 0 {
            return Err(CoreError::config_one("generator", "out_slices must be >= 1"));
        }
        if self.stage_channels.iter().any(|&c| c == 0) {
            return Err(CoreError::config_one("generator", "zero-width stage"));
        }
        if let OutputHead::Conv3d { channels } = self.head {
            if channels == 0 {
                return Err(CoreError::config_one("generator", "conv3d head needs channels >= 1"));
            }
        }
        if !(0.0..1.0).contains(&self.leaky_slope) {
            return Err(CoreError::config_one("generator", "leaky_slope must be in [0, 1)"));
        }
        Ok(())
    }
}

/// The decoder weights theta, shared across every slice and frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub arch: GeneratorArch,
    pub tensors: Vec<Tensor>,
}

impl GeneratorParams {
    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    /// Sum of absolute values of all weights (the L1 norm of theta).
    pub fn l1_norm(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.data.iter().map(|v| v.abs()).sum::<f64>())
            .sum()
    }

    pub fn zeros_like(&self) -> Vec<Tensor> {
        self.tensors.iter().map(|t| Tensor::zeros(&t.shape)).collect()
    }
}

/// Seeded fan-in-scaled Gaussian initialization; biases start at zero.
pub fn init_params(arch: &GeneratorArch, seed: u64) -> Result<GeneratorParams> {
    arch.validate()?;
    let shapes = arch.tensor_shapes();
    let slope = arch.leaky_slope;
    let tensors = shapes
        .iter()
        .enumerate()
        .map(|(idx, shape)| {
            let mut t = Tensor::zeros(shape);
            if shape.len() >= 2 {
                // Weight tensor: fan-in = product of all but the leading dim.
                let fan_in: usize = shape[1..].iter().product();
                let gain = if shape.len() == 4 {
                    (2.0 / (1.0 + slope * slope)).sqrt()
                } else {
                    1.0
                };
                let sd = gain / (fan_in as f64).sqrt();
                let mut rng = stream_rng(seed, StreamDomain::GeneratorInit, 0, idx as u64);
                for v in &mut t.data {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    *v = sd * e;
                }
            }
            t
        })
        .collect();
    Ok(GeneratorParams { arch: arch.clone(), tensors })
}

/// Activations cached by the forward pass for the backward pass.
pub struct DecodeCache {
    latent: Vec<f64>,
    dense_out: FeatureMap,
    /// Upsampled input to each stage conv.
    stage_inputs: Vec<FeatureMap>,
    /// Stage conv outputs before the leaky-ReLU.
    stage_preact: Vec<FeatureMap>,
    /// Input to the head (last stage activation, or the dense output).
    head_input: FeatureMap,
    /// Conv3d head only: lifted volumetric features.
    lift_out: Option<Feature3>,
}

fn check_latent(arch: &GeneratorArch, c: &[f64]) -> Result<()> {
    if c.len() != arch.latent_dim {
        return Err(CoreError::Shape {
            expected: format!("latent of dim {}", arch.latent_dim),
            got: format!("{}", c.len()),
        });
    }
    Ok(())
}

/// Decode a latent vector to a complex volume.
pub fn decode(params: &GeneratorParams, c: &[f64]) -> Result<Volume3D> {
    Ok(decode_with_cache(params, c)?.0)
}

/// Decode and keep the activations needed by [`decode_grad_cached`].
pub fn decode_with_cache(params: &GeneratorParams, c: &[f64]) -> Result<(Volume3D, DecodeCache)> {
    let arch = &params.arch;
    check_latent(arch, c)?;
    let bs = arch.base_size;

    let dense_w = &params.tensors[0];
    let dense_b = &params.tensors[1];
    let mut dense_out = FeatureMap::zeros(arch.base_channels, bs, bs);
    for (r, out) in dense_out.data.iter_mut().enumerate() {
        let mut acc = dense_b.data[r];
        let row = &dense_w.data[r * arch.latent_dim..(r + 1) * arch.latent_dim];
        for (w, x) in row.iter().zip(c.iter()) {
            acc += w * x;
        }
        *out = acc;
    }

    let mut stage_inputs = Vec::with_capacity(arch.stage_channels.len());
    let mut stage_preact = Vec::with_capacity(arch.stage_channels.len());
    let mut x = dense_out.clone();
    for (s, _) in arch.stage_channels.iter().enumerate() {
        let up = upsample2(&x);
        let w = &params.tensors[2 + 2 * s];
        let b = &params.tensors[3 + 2 * s];
        let pre = conv3x3(&up, w, b);
        x = leaky(&pre, arch.leaky_slope);
        stage_inputs.push(up);
        stage_preact.push(pre);
    }
    let head_input = x;

    let nz = arch.out_slices;
    let n = arch.out_size();
    let hbase = 2 + 2 * arch.stage_channels.len();
    let (volume, lift_out) = match arch.head {
        OutputHead::SliceChannels => {
            let w = &params.tensors[hbase];
            let b = &params.tensors[hbase + 1];
            let chan = conv1x1(&head_input, w, b);
            let mut vol = Volume3D::zeros((n, n, nz));
            for iz in 0..nz {
                for ix in 0..n {
                    let re_row = chan.row(iz, ix);
                    let im_row = chan.row(nz + iz, ix);
                    for iy in 0..n {
                        vol[[ix, iy, iz]] = Complex64::new(re_row[iy], im_row[iy]);
                    }
                }
            }
            (vol, None)
        }
        OutputHead::Conv3d { channels } => {
            let lw = &params.tensors[hbase];
            let lb = &params.tensors[hbase + 1];
            let lifted = conv1x1(&head_input, lw, lb);
            // (channels*nz, n, n) reinterpreted as (channels, n, n, nz).
            let mut f3 = Feature3::zeros(channels, n, n, nz);
            for ch in 0..channels {
                for iz in 0..nz {
                    for ix in 0..n {
                        let row = lifted.row(ch * nz + iz, ix);
                        for iy in 0..n {
                            f3.data[f3.idx(ch, ix, iy, iz)] = row[iy];
                        }
                    }
                }
            }
            let w3 = &params.tensors[hbase + 2];
            let b3 = &params.tensors[hbase + 3];
            let out = conv3d(&f3, w3, b3);
            let mut vol = Volume3D::zeros((n, n, nz));
            for ix in 0..n {
                for iy in 0..n {
                    for iz in 0..nz {
                        vol[[ix, iy, iz]] = Complex64::new(
                            out.data[out.idx(0, ix, iy, iz)],
                            out.data[out.idx(1, ix, iy, iz)],
                        );
                    }
                }
            }
            (vol, Some(f3))
        }
    };

    Ok((
        volume,
        DecodeCache {
            latent: c.to_vec(),
            dense_out,
            stage_inputs,
            stage_preact,
            head_input,
            lift_out,
        },
    ))
}

/// Reverse-mode gradients of `<cotangent, decode(params, c)>` (real inner
/// product over real/imaginary channels) with respect to theta and c.
pub fn decode_grad(
    params: &GeneratorParams,
    c: &[f64],
    cotangent: &Volume3D,
) -> Result<(Vec<Tensor>, Vec<f64>)> {
    let (_, cache) = decode_with_cache(params, c)?;
    decode_grad_cached(params, &cache, cotangent)
}

/// Same as [`decode_grad`], reusing the cache of an earlier forward pass.
pub fn decode_grad_cached(
    params: &GeneratorParams,
    cache: &DecodeCache,
    cotangent: &Volume3D,
) -> Result<(Vec<Tensor>, Vec<f64>)> {
    let arch = &params.arch;
    let n = arch.out_size();
    let nz = arch.out_slices;
    if cotangent.dim() != (n, n, nz) {
        return Err(CoreError::Shape {
            expected: format!("({n}, {n}, {nz})"),
            got: format!("{:?}", cotangent.dim()),
        });
    }
    let mut grads = params.zeros_like();
    let hbase = 2 + 2 * arch.stage_channels.len();

    // Head backward: cotangent volume -> gradient w.r.t. head input.
    let mut dx = match arch.head {
        OutputHead::SliceChannels => {
            let mut dchan = FeatureMap::zeros(2 * nz, n, n);
            for iz in 0..nz {
                for ix in 0..n {
                    for iy in 0..n {
                        let v = cotangent[[ix, iy, iz]];
                        dchan.data[(iz * n + ix) * n + iy] = v.re;
                        dchan.data[((nz + iz) * n + ix) * n + iy] = v.im;
                    }
                }
            }
            let w = &params.tensors[hbase];
            let (dw, db, dx) = conv1x1_backward(&cache.head_input, w, &dchan);
            grads[hbase] = dw;
            grads[hbase + 1] = db;
            dx
        }
        OutputHead::Conv3d { channels } => {
            let lifted = cache.lift_out.as_ref().expect("conv3d cache");
            let mut dout = Feature3::zeros(2, n, n, nz);
            for ix in 0..n {
                for iy in 0..n {
                    for iz in 0..nz {
                        let v = cotangent[[ix, iy, iz]];
                        dout.data[dout.idx(0, ix, iy, iz)] = v.re;
                        dout.data[dout.idx(1, ix, iy, iz)] = v.im;
                    }
                }
            }
            let w3 = &params.tensors[hbase + 2];
            let (dw3, db3, dlift) = conv3d_backward(lifted, w3, &dout);
            grads[hbase + 2] = dw3;
            grads[hbase + 3] = db3;
            // Reinterpret (channels, n, n, nz) gradient as (channels*nz, n, n).
            let mut dchan = FeatureMap::zeros(channels * nz, n, n);
            for ch in 0..channels {
                for iz in 0..nz {
                    for ix in 0..n {
                        for iy in 0..n {
                            dchan.data[((ch * nz + iz) * n + ix) * n + iy] =
                                dlift.data[dlift.idx(ch, ix, iy, iz)];
                        }
                    }
                }
            }
            let lw = &params.tensors[hbase];
            let (dw, db, dx) = conv1x1_backward(&cache.head_input, lw, &dchan);
            grads[hbase] = dw;
            grads[hbase + 1] = db;
            dx
        }
    };

    // Stages, last to first.
    for s in (0..arch.stage_channels.len()).rev() {
        let dpre = leaky_backward(&cache.stage_preact[s], &dx, arch.leaky_slope);
        let w = &params.tensors[2 + 2 * s];
        let (dw, db, dup) = conv3x3_backward(&cache.stage_inputs[s], w, &dpre);
        grads[2 + 2 * s] = dw;
        grads[3 + 2 * s] = db;
        dx = upsample2_backward(&dup);
    }

    // Dense backward.
    let dense_w = &params.tensors[0];
    let dz = dx; // (base_channels, bs, bs) flat order matches the dense rows
    let mut dc = vec![0.0; arch.latent_dim];
    for (r, &g) in dz.data.iter().enumerate() {
        grads[1].data[r] = g;
        let wrow = &dense_w.data[r * arch.latent_dim..(r + 1) * arch.latent_dim];
        let grow = &mut grads[0].data[r * arch.latent_dim..(r + 1) * arch.latent_dim];
        for j in 0..arch.latent_dim {
            grow[j] = g * cache.latent[j];
            dc[j] += g * wrow[j];
        }
    }

    Ok((grads, dc))
}

fn upsample2(x: &FeatureMap) -> FeatureMap {
    let mut out = FeatureMap::zeros(x.c, x.h * 2, x.w * 2);
    for c in 0..x.c {
        for i in 0..x.h {
            let src = x.row(c, i);
            for di in 0..2 {
                let base = (c * out.h + 2 * i + di) * out.w;
                let dst = &mut out.data[base..base + out.w];
                for j in 0..x.w {
                    dst[2 * j] = src[j];
                    dst[2 * j + 1] = src[j];
                }
            }
        }
    }
    out
}

fn upsample2_backward(dy: &FeatureMap) -> FeatureMap {
    let (h, w) = (dy.h / 2, dy.w / 2);
    let mut dx = FeatureMap::zeros(dy.c, h, w);
    for c in 0..dy.c {
        for i in 0..h {
            let r0 = dy.row(c, 2 * i);
            let r1 = dy.row(c, 2 * i + 1);
            let base = (c * h + i) * w;
            let dst = &mut dx.data[base..base + w];
            for j in 0..w {
                dst[j] = r0[2 * j] + r0[2 * j + 1] + r1[2 * j] + r1[2 * j + 1];
            }
        }
    }
    dx
}

fn conv3x3(x: &FeatureMap, w: &Tensor, b: &Tensor) -> FeatureMap {
    let (ci, h, wd) = (x.c, x.h, x.w);
    let co = b.len();
    debug_assert_eq!(w.shape, vec![co, ci, 3, 3]);
    let mut out = FeatureMap::zeros(co, h, wd);
    for o in 0..co {
        let obase = o * h * wd;
        out.data[obase..obase + h * wd].fill(b.data[o]);
        for c in 0..ci {
            let wbase = (o * ci + c) * 9;
            for ki in 0..3usize {
                let di = ki as isize - 1;
                let (i0, i1) = (di.max(0) as usize, (h as isize + di.min(0)) as usize);
                for kj in 0..3usize {
                    let dj = kj as isize - 1;
                    let (j0, j1) = (dj.max(0) as usize, (wd as isize + dj.min(0)) as usize);
                    let wgt = w.data[wbase + ki * 3 + kj];
                    for i in i0..i1 {
                        let ob = obase + i * wd;
                        let xb = ((c * h) as isize + i as isize - di) as usize * wd;
                        let xs = (xb as isize + j0 as isize - dj) as usize;
                        let dst = &mut out.data[ob + j0..ob + j1];
                        let src = &x.data[xs..xs + (j1 - j0)];
                        for (d, s) in dst.iter_mut().zip(src.iter()) {
                            *d += wgt * s;
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv3x3_backward(x: &FeatureMap, w: &Tensor, dy: &FeatureMap) -> (Tensor, Tensor, FeatureMap) {
    let (ci, h, wd) = (x.c, x.h, x.w);
    let co = dy.c;
    let mut dwt = Tensor::zeros(&w.shape);
    let mut dbt = Tensor::zeros(&[co]);
    let mut dx = FeatureMap::zeros(ci, h, wd);
    for o in 0..co {
        let obase = o * h * wd;
        dbt.data[o] = dy.data[obase..obase + h * wd].iter().sum();
        for c in 0..ci {
            let wbase = (o * ci + c) * 9;
            for ki in 0..3usize {
                let di = ki as isize - 1;
                let (i0, i1) = (di.max(0) as usize, (h as isize + di.min(0)) as usize);
                for kj in 0..3usize {
                    let dj = kj as isize - 1;
                    let (j0, j1) = (dj.max(0) as usize, (wd as isize + dj.min(0)) as usize);
                    let wgt = w.data[wbase + ki * 3 + kj];
                    let mut wacc = 0.0;
                    for i in i0..i1 {
                        let ob = obase + i * wd;
                        let xrow = ((c * h) as isize + i as isize - di) as usize * wd;
                        let xs = (xrow as isize + j0 as isize - dj) as usize;
                        let dyrow = &dy.data[ob + j0..ob + j1];
                        let xsrc = &x.data[xs..xs + (j1 - j0)];
                        let dxdst = &mut dx.data[xs..xs + (j1 - j0)];
                        for ((g, xv), dv) in dyrow.iter().zip(xsrc.iter()).zip(dxdst.iter_mut()) {
                            wacc += g * xv;
                            *dv += wgt * g;
                        }
                    }
                    dwt.data[wbase + ki * 3 + kj] = wacc;
                }
            }
        }
    }
    (dwt, dbt, dx)
}

fn conv1x1(x: &FeatureMap, w: &Tensor, b: &Tensor) -> FeatureMap {
    let (ci, h, wd) = (x.c, x.h, x.w);
    let co = b.len();
    debug_assert_eq!(w.shape, vec![co, ci]);
    let mut out = FeatureMap::zeros(co, h, wd);
    let plane = h * wd;
    for o in 0..co {
        let dst0 = o * plane;
        out.data[dst0..dst0 + plane].fill(b.data[o]);
        for c in 0..ci {
            let wgt = w.data[o * ci + c];
            let src0 = c * plane;
            for p in 0..plane {
                out.data[dst0 + p] += wgt * x.data[src0 + p];
            }
        }
    }
    out
}

fn conv1x1_backward(x: &FeatureMap, w: &Tensor, dy: &FeatureMap) -> (Tensor, Tensor, FeatureMap) {
    let (ci, h, wd) = (x.c, x.h, x.w);
    let co = dy.c;
    let plane = h * wd;
    let mut dwt = Tensor::zeros(&w.shape);
    let mut dbt = Tensor::zeros(&[co]);
    let mut dx = FeatureMap::zeros(ci, h, wd);
    for o in 0..co {
        let dy0 = o * plane;
        dbt.data[o] = dy.data[dy0..dy0 + plane].iter().sum();
        for c in 0..ci {
            let x0 = c * plane;
            let wgt = w.data[o * ci + c];
            let mut acc = 0.0;
            for p in 0..plane {
                let g = dy.data[dy0 + p];
                acc += g * x.data[x0 + p];
                dx.data[x0 + p] += wgt * g;
            }
            dwt.data[o * ci + c] = acc;
        }
    }
    (dwt, dbt, dx)
}

fn leaky(x: &FeatureMap, slope: f64) -> FeatureMap {
    let mut out = x.clone();
    for v in &mut out.data {
        if *v < 0.0 {
            *v *= slope;
        }
    }
    out
}

fn leaky_backward(pre: &FeatureMap, dy: &FeatureMap, slope: f64) -> FeatureMap {
    let mut dx = dy.clone();
    for (d, &p) in dx.data.iter_mut().zip(pre.data.iter()) {
        if p < 0.0 {
            *d *= slope;
        }
    }
    dx
}

fn conv3d(x: &Feature3, w: &Tensor, b: &Tensor) -> Feature3 {
    let co = b.len();
    debug_assert_eq!(w.shape, vec![co, x.c, 3, 3, 3]);
    let mut out = Feature3::zeros(co, x.x, x.y, x.z);
    for o in 0..co {
        let o0 = o * x.x * x.y * x.z;
        out.data[o0..o0 + x.x * x.y * x.z].fill(b.data[o]);
        for c in 0..x.c {
            for kx in 0..3usize {
                let dxo = kx as isize - 1;
                for ky in 0..3usize {
                    let dyo = ky as isize - 1;
                    for kz in 0..3usize {
                        let dzo = kz as isize - 1;
                        let wgt = w.data[(((o * x.c + c) * 3 + kx) * 3 + ky) * 3 + kz];
                        for ix in range_for(x.x, dxo) {
                            for iy in range_for(x.y, dyo) {
                                for iz in range_for(x.z, dzo) {
                                    let src = x.idx(
                                        c,
                                        (ix as isize - dxo) as usize,
                                        (iy as isize - dyo) as usize,
                                        (iz as isize - dzo) as usize,
                                    );
                                    out.data[out.idx(o, ix, iy, iz)] += wgt * x.data[src];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv3d_backward(x: &Feature3, w: &Tensor, dy: &Feature3) -> (Tensor, Tensor, Feature3) {
    let co = dy.c;
    let mut dwt = Tensor::zeros(&w.shape);
    let mut dbt = Tensor::zeros(&[co]);
    let mut dx = Feature3::zeros(x.c, x.x, x.y, x.z);
    let block = x.x * x.y * x.z;
    for o in 0..co {
        dbt.data[o] = dy.data[o * block..(o + 1) * block].iter().sum();
        for c in 0..x.c {
            for kx in 0..3usize {
                let dxo = kx as isize - 1;
                for ky in 0..3usize {
                    let dyo = ky as isize - 1;
                    for kz in 0..3usize {
                        let dzo = kz as isize - 1;
                        let widx = (((o * x.c + c) * 3 + kx) * 3 + ky) * 3 + kz;
                        let wgt = w.data[widx];
                        let mut acc = 0.0;
                        for ix in range_for(x.x, dxo) {
                            for iy in range_for(x.y, dyo) {
                                for iz in range_for(x.z, dzo) {
                                    let src = x.idx(
                                        c,
                                        (ix as isize - dxo) as usize,
                                        (iy as isize - dyo) as usize,
                                        (iz as isize - dzo) as usize,
                                    );
                                    let g = dy.data[dy.idx(o, ix, iy, iz)];
                                    acc += g * x.data[src];
                                    dx.data[src] += wgt * g;
                                }
                            }
                        }
                        dwt.data[widx] = acc;
                    }
                }
            }
        }
    }
    (dwt, dbt, dx)
}

fn range_for(n: usize, d: isize) -> std::ops::Range<usize> {
    (d.max(0) as usize)..((n as isize + d.min(0)) as usize)
}
