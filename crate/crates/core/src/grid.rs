//! Uniform periodic grids standing in for ℝⁿ.
//!
//! Samples are stored row-major with axis 0 varying slowest. The point with
//! multi-index `i` sits at coordinate `i·h`, so the box center `L/2` is the
//! grid point with every index equal to `N/2`.

use crate::error::{validation, Result};

/// Grid geometry shared by every field on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    dim: usize,
    points: usize,
    box_length: f64,
}

impl GridSpec {
    pub fn new(dim: usize, points: usize, box_length: f64) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return validation(format!("dimension must be 2 or 3, got {dim}"));
        }
        if points < 8 || points % 2 != 0 {
            return validation(format!("points_per_axis must be even and >= 8, got {points}"));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return validation(format!("box_length must be positive, got {box_length}"));
        }
        Ok(Self { dim, points, box_length })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    /// Grid spacing `h = L / N`.
    pub fn spacing(&self) -> f64 {
        self.box_length / self.points as f64
    }

    /// Total number of samples `Nⁿ`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight `hⁿ`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Box volume `Lⁿ`.
    pub fn volume(&self) -> f64 {
        self.box_length.powi(self.dim as i32)
    }

    /// Stride of `axis` in the flat layout.
    pub fn stride(&self, axis: usize) -> usize {
        self.points.pow((self.dim - 1 - axis) as u32)
    }

    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        let mut rem = flat;
        for axis in (0..self.dim).rev() {
            out[axis] = rem % self.points;
            rem /= self.points;
        }
        out
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .take(self.dim)
            .fold(0, |acc, &i| acc * self.points + (i % self.points))
    }

    /// Coordinates of a grid point; unused trailing entries are zero.
    pub fn coordinate(&self, flat: usize) -> [f64; 3] {
        let h = self.spacing();
        let idx = self.multi_index(flat);
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = idx[axis] as f64 * h;
        }
        x
    }

    pub fn center(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for v in c.iter_mut().take(self.dim) {
            *v = 0.5 * self.box_length;
        }
        c
    }

    /// Multi-index of the box center.
    pub fn center_index(&self) -> [usize; 3] {
        let mut c = [0usize; 3];
        for v in c.iter_mut().take(self.dim) {
            *v = self.points / 2;
        }
        c
    }

    /// Minimum-image displacement `x - origin` on the torus.
    pub fn displacement(&self, flat: usize, origin: &[f64]) -> [f64; 3] {
        let x = self.coordinate(flat);
        let l = self.box_length;
        let mut d = [0.0; 3];
        for axis in 0..self.dim {
            let mut v = x[axis] - origin[axis];
            v -= l * (v / l).round();
            d[axis] = v;
        }
        d
    }

    /// Minimum-image distance from `origin`.
    pub fn distance(&self, flat: usize, origin: &[f64]) -> f64 {
        let d = self.displacement(flat, origin);
        d.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Snap an arbitrary point to the nearest grid point, returning its
    /// multi-index.
    pub fn nearest_index(&self, x: &[f64]) -> [usize; 3] {
        let h = self.spacing();
        let mut idx = [0usize; 3];
        for axis in 0..self.dim {
            let i = (x[axis] / h).round() as i64;
            idx[axis] = i.rem_euclid(self.points as i64) as usize;
        }
        idx
    }

    pub fn same_as(&self, other: &GridSpec) -> bool {
        self == other
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_geometry() {
        assert!(GridSpec::new(1, 16, 1.0).is_err());
        assert!(GridSpec::new(2, 7, 1.0).is_err());
        assert!(GridSpec::new(2, 6, 1.0).is_err());
        assert!(GridSpec::new(3, 16, 0.0).is_err());
        assert!(GridSpec::new(3, 16, f64::NAN).is_err());
    }

    #[test]
    fn index_roundtrip_and_center() {
        let g = GridSpec::new(3, 8, 4.0).unwrap();
        for flat in [0, 1, 17, 300, g.len() - 1] {
            let idx = g.multi_index(flat);
            assert_eq!(g.flat_index(&idx[..3]), flat);
        }
        let c = g.flat_index(&g.center_index());
        assert_eq!(g.coordinate(c), [2.0, 2.0, 2.0]);
        assert_eq!(g.distance(c, &g.center()), 0.0);
    }

    #[test]
    fn minimum_image_wraps() {
        let g = GridSpec::new(2, 8, 8.0).unwrap();
        let corner = g.flat_index(&[7, 0]);
        let d = g.displacement(corner, &[0.0, 0.0]);
        assert_eq!(d[0], -1.0);
        assert_eq!(d[1], 0.0);
    }
}
