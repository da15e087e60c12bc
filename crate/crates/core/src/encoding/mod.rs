//! Time-dependent measurement operators: slice extraction, coil-sensitivity
//! weighting, and the non-uniform Fourier transform on a frame's trajectory,
//! plus the exact adjoint and the acquisition noise model.

pub mod gridded;
pub mod nudft;

use crate::error::{CoreError, Result};
use crate::phantom::GroundTruthRecord;
use crate::rng::{stream_rng, StreamDomain};
use crate::sampling::{FrameBinning, Trajectory};
use crate::types::{Grid, Volume3D};
use gridded::GriddedPlan;
use ndarray::{Array2, Array4};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Which non-uniform transform backs the operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformMode {
    /// Brute-force non-uniform DFT; the correctness reference.
    Direct,
    /// Kaiser-Bessel gridding on an oversampled FFT grid.
    Gridded,
}

/// Complex coil sensitivity maps, shape (ncoils, nx, ny, nz).
#[derive(Debug, Clone)]
pub struct CoilMaps {
    pub maps: Array4<Complex64>,
}

impl CoilMaps {
    /// Smooth synthetic maps: Gaussian magnitude profiles centered on a ring
    /// of virtual coils around the FOV, with a mild linear phase per coil.
    /// Deterministic; identical for every slice.
    pub fn synthetic(ncoils: usize, grid: Grid) -> Self {
        let (nx, ny, nz) = (grid.nx, grid.ny, grid.nz);
        let mut maps = Array4::<Complex64>::zeros((ncoils, nx, ny, nz));
        let (cx, cy) = (nx as f64 / 2.0, ny as f64 / 2.0);
        let ring = 0.55 * nx.min(ny) as f64;
        let width = 0.8 * nx.max(ny) as f64;
        for c in 0..ncoils {
            let theta = 2.0 * std::f64::consts::PI * c as f64 / ncoils as f64;
            let (px, py) = (cx + ring * theta.cos(), cy + ring * theta.sin());
            for ix in 0..nx {
                for iy in 0..ny {
                    let d2 = (ix as f64 - px).powi(2) + (iy as f64 - py).powi(2);
                    let mag = (-d2 / (2.0 * width * width)).exp();
                    let phase = 0.4
                        * std::f64::consts::PI
                        * ((ix as f64 - cx) / nx as f64 * theta.cos()
                            + (iy as f64 - cy) / ny as f64 * theta.sin());
                    let v = Complex64::from_polar(mag, phase);
                    for iz in 0..nz {
                        maps[[c, ix, iy, iz]] = v;
                    }
                }
            }
        }
        CoilMaps { maps }
    }

    pub fn ncoils(&self) -> usize {
        self.maps.dim().0
    }

    pub fn grid(&self) -> Grid {
        let (_, nx, ny, nz) = self.maps.dim();
        Grid::new(nx, ny, nz)
    }

    /// Minimum root-sum-of-squares magnitude over all voxels.
    pub fn min_rss(&self) -> f64 {
        let (nc, nx, ny, nz) = self.maps.dim();
        let mut min = f64::INFINITY;
        for ix in 0..nx {
            for iy in 0..ny {
                for iz in 0..nz {
                    let rss: f64 = (0..nc)
                        .map(|c| self.maps[[c, ix, iy, iz]].norm_sqr())
                        .sum::<f64>()
                        .sqrt();
                    min = min.min(rss);
                }
            }
        }
        min
    }
}

/// k-space sample locations of one frame (the concatenation of its
/// interleaves), with the matching density-compensation weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePoints {
    pub kx: Vec<f64>,
    pub ky: Vec<f64>,
    pub weights: Vec<f64>,
}

impl FramePoints {
    pub fn len(&self) -> usize {
        self.kx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kx.is_empty()
    }

    pub fn concat(parts: &[&FramePoints]) -> FramePoints {
        let mut out = FramePoints {
            kx: Vec::new(),
            ky: Vec::new(),
            weights: Vec::new(),
        };
        for p in parts {
            out.kx.extend_from_slice(&p.kx);
            out.ky.extend_from_slice(&p.ky);
            out.weights.extend_from_slice(&p.weights);
        }
        out
    }
}

impl From<&Trajectory> for FramePoints {
    fn from(t: &Trajectory) -> Self {
        FramePoints {
            kx: t.points.iter().map(|p| p[0]).collect(),
            ky: t.points.iter().map(|p| p[1]).collect(),
            weights: t.density_weights.clone(),
        }
    }
}

/// Build per-frame sample points from interleave trajectories and a binning.
pub fn frame_points(interleaves: &[Trajectory], binning: &FrameBinning) -> Vec<FramePoints> {
    binning
        .frames
        .iter()
        .map(|group| {
            let parts: Vec<FramePoints> =
                group.iter().map(|&k| FramePoints::from(&interleaves[k])).collect();
            FramePoints::concat(&parts.iter().collect::<Vec<_>>())
        })
        .collect()
}

/// Measurements of one slice: one (ncoils, npoints) block per binned frame.
#[derive(Debug, Clone)]
pub struct KtFrame {
    pub data: Array2<Complex64>,
    pub points: FramePoints,
}

#[derive(Debug, Clone)]
pub struct KTSlice {
    pub slice_index: usize,
    pub frames: Vec<KtFrame>,
    pub noise_sd: f64,
}

impl KTSlice {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn validate(&self) -> Result<()> {
        for (f, frame) in self.frames.iter().enumerate() {
            if frame.data.dim().1 != frame.points.len() {
                return Err(CoreError::Consistency(format!(
                    "slice {} frame {}: {} samples per coil but {} trajectory points",
                    self.slice_index,
                    f,
                    frame.data.dim().1,
                    frame.points.len()
                )));
            }
        }
        Ok(())
    }
}

/// Merge groups of `factor` consecutive frames (trailing partial dropped);
/// used by the progressive-in-time training schedule.
pub fn rebin_coarser(kt: &KTSlice, factor: usize) -> KTSlice {
    assert!(factor >= 1);
    if factor == 1 {
        return kt.clone();
    }
    let ncoils = kt.frames.first().map(|f| f.data.dim().0).unwrap_or(0);
    let frames = kt
        .frames
        .chunks_exact(factor)
        .map(|group| {
            let total: usize = group.iter().map(|f| f.points.len()).sum();
            let mut data = Array2::<Complex64>::zeros((ncoils, total));
            let mut offset = 0;
            for f in group {
                let n = f.points.len();
                data.slice_mut(ndarray::s![.., offset..offset + n])
                    .assign(&f.data);
                offset += n;
            }
            let parts: Vec<&FramePoints> = group.iter().map(|f| &f.points).collect();
            KtFrame {
                data,
                points: FramePoints::concat(&parts),
            }
        })
        .collect();
    KTSlice {
        slice_index: kt.slice_index,
        frames,
        noise_sd: kt.noise_sd,
    }
}

/// Shared state for building per-frame operators: grid geometry, coil maps,
/// transform mode (and the FFT plan when gridded).
pub struct EncodingContext {
    pub grid: Grid,
    pub maps: Arc<CoilMaps>,
    pub mode: TransformMode,
    plan: Option<Arc<GriddedPlan>>,
}

impl EncodingContext {
    pub fn new(grid: Grid, maps: Arc<CoilMaps>, mode: TransformMode) -> Result<Self> {
        if maps.grid() != grid {
            return Err(CoreError::Shape {
                expected: format!("coil maps on {grid:?}"),
                got: format!("{:?}", maps.grid()),
            });
        }
        let plan = match mode {
            TransformMode::Direct => None,
            TransformMode::Gridded => Some(Arc::new(GriddedPlan::new(grid.nx, grid.ny))),
        };
        Ok(EncodingContext { grid, maps, mode, plan })
    }

    pub fn ncoils(&self) -> usize {
        self.maps.ncoils()
    }

    /// The measurement operator for slice `z` on `points`.
    pub fn operator<'a>(&'a self, z: usize, points: &'a FramePoints) -> Result<EncodingOperator<'a>> {
        if z >= self.grid.nz {
            return Err(CoreError::Index(format!(
                "slice {} out of range (nz = {})",
                z, self.grid.nz
            )));
        }
        Ok(EncodingOperator { ctx: self, slice_index: z, points })
    }
}

/// One linear measurement operator A: volume -> (ncoils, npoints) samples of
/// slice `slice_index` on the frame trajectory.
pub struct EncodingOperator<'a> {
    ctx: &'a EncodingContext,
    pub slice_index: usize,
    pub points: &'a FramePoints,
}

impl EncodingOperator<'_> {
    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn ncoils(&self) -> usize {
        self.ctx.ncoils()
    }

    /// A x: extract slice z, weight by each coil map, transform onto the
    /// trajectory. Linear in x.
    pub fn forward(&self, x: &Volume3D) -> Result<Array2<Complex64>> {
        let grid = self.ctx.grid;
        if !grid.matches_volume(x) {
            return Err(CoreError::Shape {
                expected: format!("({}, {}, {})", grid.nx, grid.ny, grid.nz),
                got: format!("{:?}", x.dim()),
            });
        }
        let z = self.slice_index;
        let nc = self.ncoils();
        let coil_imgs: Vec<Array2<Complex64>> = (0..nc)
            .map(|c| {
                Array2::from_shape_fn((grid.nx, grid.ny), |(ix, iy)| {
                    x[[ix, iy, z]] * self.ctx.maps.maps[[c, ix, iy, z]]
                })
            })
            .collect();
        let per_coil = match self.ctx.mode {
            TransformMode::Direct => {
                let views: Vec<_> = coil_imgs.iter().map(|a| a.view()).collect();
                nudft::forward_multicoil(&views, &self.points.kx, &self.points.ky)
            }
            TransformMode::Gridded => self
                .ctx
                .plan
                .as_ref()
                .expect("gridded plan")
                .forward_multicoil(&coil_imgs, &self.points.kx, &self.points.ky),
        };
        let npts = self.n_points();
        let mut out = Array2::<Complex64>::zeros((nc, npts));
        for (c, row) in per_coil.into_iter().enumerate() {
            for (p, v) in row.into_iter().enumerate() {
                out[[c, p]] = v;
            }
        }
        Ok(out)
    }

    /// A^H y: conjugate transform per coil, conjugate coil combine, embed in
    /// slice z of an otherwise zero volume.
    pub fn adjoint(&self, y: &Array2<Complex64>) -> Result<Volume3D> {
        let grid = self.ctx.grid;
        let nc = self.ncoils();
        if y.dim() != (nc, self.n_points()) {
            return Err(CoreError::Shape {
                expected: format!("({nc}, {})", self.n_points()),
                got: format!("{:?}", y.dim()),
            });
        }
        let rows: Vec<&[Complex64]> = (0..nc)
            .map(|c| y.row(c).to_slice().expect("contiguous row"))
            .collect();
        // Rows borrow y, which must stay contiguous; take views per coil.
        let per_coil = match self.ctx.mode {
            TransformMode::Direct => nudft::adjoint_multicoil(
                &rows,
                &self.points.kx,
                &self.points.ky,
                grid.nx,
                grid.ny,
            ),
            TransformMode::Gridded => self
                .ctx
                .plan
                .as_ref()
                .expect("gridded plan")
                .adjoint_multicoil(&rows, &self.points.kx, &self.points.ky),
        };
        let z = self.slice_index;
        let mut vol = grid.zero_volume();
        for (c, img) in per_coil.iter().enumerate() {
            for ix in 0..grid.nx {
                for iy in 0..grid.ny {
                    vol[[ix, iy, z]] += self.ctx.maps.maps[[c, ix, iy, z]].conj() * img[[ix, iy]];
                }
            }
        }
        Ok(vol)
    }
}

/// Simulate the acquisition: for every ground-truth record, measure its
/// volume through the frame operator and add seeded complex Gaussian noise
/// of per-component standard deviation `noise_sd`.
pub fn acquire(
    truth: &[GroundTruthRecord],
    ctx: &EncodingContext,
    points_per_frame: &[FramePoints],
    noise_sd: f64,
    seed: u64,
) -> Result<Vec<KTSlice>> {
    if noise_sd < 0.0 {
        return Err(CoreError::Argument("noise_sd must be >= 0".into()));
    }
    let n_frames = points_per_frame.len();
    let nz = ctx.grid.nz;
    let mut by_key: BTreeMap<(usize, usize), &GroundTruthRecord> = BTreeMap::new();
    for r in truth {
        by_key.insert((r.slice_index, r.frame_index), r);
    }
    for z in 0..nz {
        for f in 0..n_frames {
            if !by_key.contains_key(&(z, f)) {
                return Err(CoreError::Consistency(format!(
                    "no ground-truth record for slice {z}, frame {f}"
                )));
            }
        }
    }
    let jobs: Vec<(usize, usize)> = (0..nz)
        .flat_map(|z| (0..n_frames).map(move |f| (z, f)))
        .collect();
    let frames: Vec<((usize, usize), KtFrame)> = jobs
        .into_par_iter()
        .map(|(z, f)| {
            let record = by_key[&(z, f)];
            let op = ctx.operator(z, &points_per_frame[f])?;
            let mut data = op.forward(&record.volume)?;
            if noise_sd > 0.0 {
                let mut rng =
                    stream_rng(seed, StreamDomain::AcquisitionNoise, z as u64, f as u64);
                for v in data.iter_mut() {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    *v += Complex64::new(noise_sd * re, noise_sd * im);
                }
            }
            Ok((
                (z, f),
                KtFrame {
                    data,
                    points: points_per_frame[f].clone(),
                },
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut slices: Vec<KTSlice> = (0..nz)
        .map(|z| KTSlice {
            slice_index: z,
            frames: Vec::with_capacity(n_frames),
            noise_sd,
        })
        .collect();
    for ((z, _f), frame) in frames {
        slices[z].frames.push(frame);
    }
    Ok(slices)
}
