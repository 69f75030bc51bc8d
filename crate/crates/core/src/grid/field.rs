use super::GridSpec;
use crate::{Error, Result};

/// Scalar values at cell centers of a periodic grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CellField {
    spec: GridSpec,
    values: Vec<f64>,
}

impl CellField {
    pub fn zeros(spec: GridSpec) -> Self {
        Self::constant(spec, 0.0)
    }

    pub fn constant(spec: GridSpec, value: f64) -> Self {
        Self {
            spec,
            values: vec![value; spec.len()],
        }
    }

    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} cell values, got {}",
                spec.len(),
                values.len()
            )));
        }
        Ok(Self { spec, values })
    }

    /// Samples `f` at every cell center.
    pub fn from_fn(spec: GridSpec, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..spec.len()).map(|i| f(spec.center(i))).collect();
        Self { spec, values }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at integer cell coordinates, periodic in every axis.
    pub fn at(&self, coords: &[isize]) -> f64 {
        self.values[self.spec.wrap_index(coords)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            spec: self.spec,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &CellField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_grid(other.spec())?;
        Ok(Self {
            spec: self.spec,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index and value of the smallest entry.
    pub fn argmin(&self) -> (usize, f64) {
        self.values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best })
    }

    pub(crate) fn check_same_grid(&self, other: &GridSpec) -> Result<()> {
        if &self.spec == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Per-axis values at staggered face centers. Component `k` holds, at
/// linear cell index `i`, the value on the face between cell `i` and its
/// upper neighbor along axis `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceField {
    spec: GridSpec,
    components: Vec<Vec<f64>>,
}

impl FaceField {
    pub fn zeros(spec: GridSpec) -> Self {
        Self::constant(spec, 0.0)
    }

    pub fn constant(spec: GridSpec, value: f64) -> Self {
        Self {
            spec,
            components: vec![vec![value; spec.len()]; spec.dim()],
        }
    }

    pub fn from_components(spec: GridSpec, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != spec.dim() || components.iter().any(|c| c.len() != spec.len()) {
            return Err(Error::InvalidGrid(format!(
                "expected {} face components of {} values",
                spec.dim(),
                spec.len()
            )));
        }
        Ok(Self { spec, components })
    }

    /// Samples `f(x, axis)` at every face center.
    pub fn from_fn(spec: GridSpec, f: impl Fn([f64; 3], usize) -> f64) -> Self {
        let components = (0..spec.dim())
            .map(|axis| (0..spec.len()).map(|i| f(spec.face_center(i, axis), axis)).collect())
            .collect();
        Self { spec, components }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn component(&self, axis: usize) -> Result<&[f64]> {
        self.spec.check_axis(axis)?;
        Ok(&self.components[axis])
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn components_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.components
    }

    /// Value on the face `coords + 1/2` along `axis`, periodic.
    pub fn at(&self, axis: usize, coords: &[isize]) -> f64 {
        self.components[axis][self.spec.wrap_index(coords)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            spec: self.spec,
            components: self
                .components
                .iter()
                .map(|c| c.iter().map(|&v| f(v)).collect())
                .collect(),
        }
    }

    pub fn zip_map(&self, other: &FaceField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.spec != other.spec {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            spec: self.spec,
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect())
                .collect(),
        })
    }

    pub fn min(&self) -> f64 {
        self.components
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest absolute value over all faces and axes.
    pub fn max_abs(&self) -> f64 {
        self.components
            .iter()
            .flatten()
            .fold(0.0, |m: f64, &v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_reads_repeat() {
        let g = GridSpec::unit(2, 3).unwrap();
        let f = CellField::from_values(g, (0..9).map(f64::from).collect()).unwrap();
        let faces = FaceField::from_components(
            g,
            vec![(0..9).map(f64::from).collect(), (10..19).map(f64::from).collect()],
        )
        .unwrap();
        for i in -3..6isize {
            for j in -3..6isize {
                assert_eq!(f.at(&[i, j]), f.at(&[i + 3, j]));
                assert_eq!(f.at(&[i, j]), f.at(&[i, j - 3]));
                for axis in 0..2 {
                    assert_eq!(faces.at(axis, &[i, j]), faces.at(axis, &[i + 3, j + 3]));
                }
            }
        }
        assert_eq!(f.at(&[1, 2]), 7.0);
    }

    #[test]
    fn length_checks() {
        let g = GridSpec::unit(2, 3).unwrap();
        assert!(CellField::from_values(g, vec![0.0; 8]).is_err());
        assert!(FaceField::from_components(g, vec![vec![0.0; 9]]).is_err());
        let h = GridSpec::unit(2, 4).unwrap();
        assert!(matches!(
            CellField::zeros(g).zip_map(&CellField::zeros(h), |a, b| a + b),
            Err(Error::GridMismatch)
        ));
    }
}
