//! Direct (brute-force) non-uniform DFT on a 2D slice. O(Nx*Ny) per sample
//! point; this is the reference implementation the gridded path is tested
//! against.
//!
//! Conventions: sample `p` at (kx, ky) cycles/FOV measures
//! `sum_{ix,iy} img[ix,iy] * exp(-2*pi*i*(kx*(ix-cx)/Nx + ky*(iy-cy)/Ny))`
//! with cx = Nx/2, cy = Ny/2. Integer k therefore reproduces the centered DFT.

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

/// Per-point separable phase factors, shared across coils within one call.
struct PhaseTable {
    /// (npoints, nx)
    wx: Vec<Vec<Complex64>>,
    /// (npoints, ny)
    wy: Vec<Vec<Complex64>>,
}

fn phase_table(kx: &[f64], ky: &[f64], nx: usize, ny: usize, sign: f64) -> PhaseTable {
    let cx = (nx / 2) as f64;
    let cy = (ny / 2) as f64;
    let fx = sign * 2.0 * std::f64::consts::PI / nx as f64;
    let fy = sign * 2.0 * std::f64::consts::PI / ny as f64;
    let wx = kx
        .iter()
        .map(|&k| {
            (0..nx)
                .map(|ix| {
                    let (s, c) = (fx * k * (ix as f64 - cx)).sin_cos();
                    Complex64::new(c, s)
                })
                .collect()
        })
        .collect();
    let wy = ky
        .iter()
        .map(|&k| {
            (0..ny)
                .map(|iy| {
                    let (s, c) = (fy * k * (iy as f64 - cy)).sin_cos();
                    Complex64::new(c, s)
                })
                .collect()
        })
        .collect();
    PhaseTable { wx, wy }
}

/// Forward NUDFT of several coil images sharing one trajectory.
/// Returns one sample vector per input image.
pub fn forward_multicoil(
    imgs: &[ArrayView2<'_, Complex64>],
    kx: &[f64],
    ky: &[f64],
) -> Vec<Vec<Complex64>> {
    assert_eq!(kx.len(), ky.len());
    let (nx, ny) = imgs.first().map(|a| a.dim()).unwrap_or((0, 0));
    let t = phase_table(kx, ky, nx, ny, -1.0);
    imgs.iter()
        .map(|img| {
            (0..kx.len())
                .map(|p| {
                    let wxp = &t.wx[p];
                    let wyp = &t.wy[p];
                    let mut acc = Complex64::default();
                    for ix in 0..nx {
                        let row = img.row(ix);
                        let mut s = Complex64::default();
                        for iy in 0..ny {
                            s += row[iy] * wyp[iy];
                        }
                        acc += wxp[ix] * s;
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// Adjoint NUDFT: conjugate-transpose of [`forward_multicoil`] for each coil.
pub fn adjoint_multicoil(
    samples: &[&[Complex64]],
    kx: &[f64],
    ky: &[f64],
    nx: usize,
    ny: usize,
) -> Vec<Array2<Complex64>> {
    assert_eq!(kx.len(), ky.len());
    let t = phase_table(kx, ky, nx, ny, 1.0);
    samples
        .iter()
        .map(|y| {
            assert_eq!(y.len(), kx.len());
            let mut img = Array2::<Complex64>::zeros((nx, ny));
            for ix in 0..nx {
                let mut row = img.row_mut(ix);
                for p in 0..kx.len() {
                    let a = t.wx[p][ix] * y[p];
                    let wyp = &t.wy[p];
                    for iy in 0..ny {
                        row[iy] += a * wyp[iy];
                    }
                }
            }
            img
        })
        .collect()
}
