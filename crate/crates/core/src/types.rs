//! Shared domain types: grid geometry, complex volumes, image series.

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// A complex-valued 3D image volume on a fixed grid, indexed `[x, y, z]`.
pub type Volume3D = Array3<Complex64>;

/// A complex-valued single-slice image, indexed `[x, y]`.
pub type Slice2D = Array2<Complex64>;

/// A time series of volumes, one per frame.
pub type ImageSeries = Vec<Volume3D>;

/// Voxel grid geometry of the reconstruction volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Self { nx, ny, nz }
    }

    /// Center voxel index along x (the DC voxel of the centered transform).
    pub fn cx(&self) -> usize {
        self.nx / 2
    }

    pub fn cy(&self) -> usize {
        self.ny / 2
    }

    pub fn cz(&self) -> usize {
        self.nz / 2
    }

    pub fn n_voxels(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn matches_volume(&self, v: &Volume3D) -> bool {
        v.dim() == (self.nx, self.ny, self.nz)
    }

    pub fn zero_volume(&self) -> Volume3D {
        Volume3D::zeros((self.nx, self.ny, self.nz))
    }
}

/// Squared L2 norm of a complex array.
pub fn norm_sqr_c64<'a, I: IntoIterator<Item = &'a Complex64>>(xs: I) -> f64 {
    xs.into_iter().map(|v| v.norm_sqr()).sum()
}

/// Complex inner product `<a, b> = sum conj(a_i) * b_i`.
pub fn inner_c64<'a, A, B>(a: A, b: B) -> Complex64
where
    A: IntoIterator<Item = &'a Complex64>,
    B: IntoIterator<Item = &'a Complex64>,
{
    a.into_iter()
        .zip(b)
        .map(|(x, y)| x.conj() * y)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_centers_use_floor_halving() {
        let g = Grid::new(64, 64, 4);
        assert_eq!((g.cx(), g.cy(), g.cz()), (32, 32, 2));
        let g = Grid::new(9, 7, 3);
        assert_eq!((g.cx(), g.cy(), g.cz()), (4, 3, 1));
    }

    #[test]
    fn inner_product_conjugates_left_argument() {
        let a = [Complex64::new(0.0, 1.0)];
        let b = [Complex64::new(0.0, 1.0)];
        let p = inner_c64(a.iter(), b.iter());
        assert!((p - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }
}
