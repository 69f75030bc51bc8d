//! Periodic uniform grids, cell/face fields and the discrete operators
//! acting on them.
//!
//! Cells are indexed zero-based: cell `i` along an axis has its center at
//! `lo + (i + 1/2) h`, which is cell `i + 1` in the usual one-based
//! notation. The face stored with cell `i` along axis `k` is the face
//! `i + 1/2` in that axis, i.e. between cell `i` and cell `i + 1`
//! (wrapping at the last cell). Linear indices run with axis 0 fastest.

mod field;
mod ops;

pub use field::{CellField, FaceField};
pub use ops::{
    avg_forward, diff_forward, divergence, face_inner, gradient, inner, laplacian, mean, norm,
    sum, weighted_laplacian, weighted_laplacian_into, Norm,
};

use crate::{Error, Result};

/// Uniform periodic grid on `(lo, hi)^dim` with `n` cells per axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    dim: usize,
    n: usize,
    lo: f64,
    hi: f64,
}

impl GridSpec {
    pub fn new(dim: usize, n: usize, lo: f64, hi: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension must be 1, 2 or 3, got {dim}")));
        }
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 cells per axis, got {n}")));
        }
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::InvalidGrid(format!("empty or non-finite domain ({lo}, {hi})")));
        }
        if n.checked_pow(dim as u32).is_none() {
            return Err(Error::InvalidGrid("cell count overflows".into()));
        }
        Ok(Self { dim, n, lo, hi })
    }

    /// The unit cube `(0, 1)^dim`.
    pub fn unit(dim: usize, n: usize) -> Result<Self> {
        Self::new(dim, n, 0.0, 1.0)
    }

    /// Builds a grid from per-axis cell counts and intervals. Only isotropic
    /// descriptions (same count and interval on every axis) are accepted.
    pub fn from_axes(cells: &[usize], domains: &[(f64, f64)]) -> Result<Self> {
        if cells.is_empty() || cells.len() != domains.len() {
            return Err(Error::InvalidGrid(
                "need one cell count and one interval per axis".into(),
            ));
        }
        if cells.iter().any(|&c| c != cells[0]) || domains.iter().any(|&d| d != domains[0]) {
            return Err(Error::InvalidGrid(
                "anisotropic grids are not supported: every axis needs the same cells and interval"
                    .into(),
            ));
        }
        Self::new(cells.len(), cells[0], domains[0].0, domains[0].1)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn h(&self) -> f64 {
        (self.hi - self.lo) / self.n as f64
    }

    /// Total number of cells, `n^dim`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `h^dim`, the quadrature weight of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    /// `|Ω| = (hi - lo)^dim`.
    pub fn volume(&self) -> f64 {
        (self.hi - self.lo).powi(self.dim as i32)
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.n.pow(axis as u32)
    }

    pub(crate) fn check_axis(&self, axis: usize) -> Result<()> {
        if axis >= self.dim {
            Err(Error::InvalidAxis { axis, dim: self.dim })
        } else {
            Ok(())
        }
    }

    /// Per-axis cell coordinates of a linear index; unused axes are 0.
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let mut out = [0; 3];
        let mut rest = idx;
        for c in out.iter_mut().take(self.dim) {
            *c = rest % self.n;
            rest /= self.n;
        }
        out
    }

    /// Linear index of integer cell coordinates, wrapped periodically.
    pub fn wrap_index(&self, coords: &[isize]) -> usize {
        let n = self.n as isize;
        coords
            .iter()
            .take(self.dim)
            .enumerate()
            .map(|(axis, &c)| c.rem_euclid(n) as usize * self.stride(axis))
            .sum()
    }

    /// Neighbor of `idx` one cell up along `axis`, with periodic wrap.
    #[inline]
    pub fn plus(&self, idx: usize, axis: usize) -> usize {
        let s = self.stride(axis);
        if (idx / s) % self.n == self.n - 1 {
            idx + s - self.n * s
        } else {
            idx + s
        }
    }

    /// Neighbor of `idx` one cell down along `axis`, with periodic wrap.
    #[inline]
    pub fn minus(&self, idx: usize, axis: usize) -> usize {
        let s = self.stride(axis);
        if (idx / s) % self.n == 0 {
            idx + self.n * s - s
        } else {
            idx - s
        }
    }

    /// Walks all cells in linear order, yielding each index with its
    /// periodic up and down neighbors along every axis (unused axes repeat
    /// the cell itself).
    pub fn neighbors(&self) -> NeighborWalk {
        NeighborWalk { spec: *self, idx: 0, coords: [0; 3] }
    }

    /// Physical position of a cell center. Unused axes are 0.
    pub fn center(&self, idx: usize) -> [f64; 3] {
        let c = self.coords(idx);
        let h = self.h();
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = self.lo + (c[axis] as f64 + 0.5) * h;
        }
        x
    }

    /// Physical position of the face `idx + 1/2` along `axis`.
    pub fn face_center(&self, idx: usize, axis: usize) -> [f64; 3] {
        let mut x = self.center(idx);
        x[axis] += 0.5 * self.h();
        x
    }
}

/// Cell index with its neighbors, see [`GridSpec::neighbors`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Neighbors {
    pub idx: usize,
    pub up: [usize; 3],
    pub down: [usize; 3],
}

/// Iterator returned by [`GridSpec::neighbors`].
#[derive(Clone, Debug)]
pub struct NeighborWalk {
    spec: GridSpec,
    idx: usize,
    coords: [usize; 3],
}

impl Iterator for NeighborWalk {
    type Item = Neighbors;

    #[inline]
    fn next(&mut self) -> Option<Neighbors> {
        let len = self.spec.len();
        if self.idx >= len {
            return None;
        }
        let n = self.spec.n;
        let idx = self.idx;
        let mut up = [idx; 3];
        let mut down = [idx; 3];
        let mut s = 1;
        for axis in 0..self.spec.dim {
            let c = self.coords[axis];
            up[axis] = if c == n - 1 { idx + s - n * s } else { idx + s };
            down[axis] = if c == 0 { idx + n * s - s } else { idx - s };
            s *= n;
        }
        for c in self.coords.iter_mut().take(self.spec.dim) {
            *c += 1;
            if *c < n {
                break;
            }
            *c = 0;
        }
        self.idx += 1;
        Some(Neighbors { idx, up, down })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let rest = self.spec.len() - self.idx;
        (rest, Some(rest))
    }
}
