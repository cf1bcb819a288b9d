//! Regular node grids and axis-aligned boxes.
//!
//! Flattened indices are row-major: the last axis varies fastest.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("axis {axis}: need at least 2 nodes, got {count}")]
    TooFewNodes { axis: usize, count: usize },
    #[error("axis {axis}: min {min} must be below max {max}")]
    EmptyRange { axis: usize, min: f64, max: f64 },
    #[error("grids support 1 to 4 dimensions, got {0}")]
    UnsupportedDimension(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.count - 1) as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k + 1 == self.count {
            self.max
        } else {
            self.min + k as f64 * self.spacing()
        }
    }
}

/// A regular grid of nodes, inclusive of both ends of every axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    axes: Vec<Axis>,
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>) -> Result<Self, GridError> {
        if axes.is_empty() || axes.len() > 4 {
            return Err(GridError::UnsupportedDimension(axes.len()));
        }
        for (axis, a) in axes.iter().enumerate() {
            if a.count < 2 {
                return Err(GridError::TooFewNodes {
                    axis,
                    count: a.count,
                });
            }
            if !(a.min < a.max) {
                return Err(GridError::EmptyRange {
                    axis,
                    min: a.min,
                    max: a.max,
                });
            }
        }
        Ok(GridSpec { axes })
    }

    /// Same `count` on every axis of the box `[lo, hi]`.
    pub fn uniform(lo: &[f64], hi: &[f64], count: usize) -> Result<Self, GridError> {
        Self::new(
            lo.iter()
                .zip(hi)
                .map(|(&min, &max)| Axis { min, max, count })
                .collect(),
        )
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.count).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.axes.iter().map(Axis::spacing).collect()
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for (slot, axis) in idx.iter_mut().zip(&self.axes).rev() {
            *slot = flat % axis.count;
            flat /= axis.count;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.axes)
            .fold(0, |acc, (&i, axis)| acc * axis.count + i)
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&k, a)| a.node(k))
            .collect()
    }

    /// All nodes as an `len x dim` matrix in flat-index order.
    pub fn nodes(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.len(), self.dim()));
        for (flat, mut row) in out.rows_mut().into_iter().enumerate() {
            for (j, v) in self.node(flat).into_iter().enumerate() {
                row[j] = v;
            }
        }
        out
    }

    /// Index of the node nearest to `x` along each axis, or `None` when `x`
    /// lies more than half a cell outside the grid.
    pub fn nearest(&self, x: &[f64]) -> Option<Vec<usize>> {
        let mut idx = Vec::with_capacity(self.dim());
        for (&v, a) in x.iter().zip(&self.axes) {
            let t = (v - a.min) / a.spacing();
            let last = (a.count - 1) as f64;
            if !t.is_finite() || t < -0.5 || t > last + 0.5 {
                return None;
            }
            idx.push(t.round().clamp(0.0, last) as usize);
        }
        Some(idx)
    }

    /// Volume of one grid cell (product of spacings).
    pub fn cell_volume(&self) -> f64 {
        self.spacing().iter().product()
    }
}

/// A closed axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len(), "box bounds must have equal length");
        BoxRegion { lo, hi }
    }

    /// Box of half-width `half` around `center`.
    pub fn around(center: &[f64], half: f64) -> Self {
        BoxRegion {
            lo: center.iter().map(|c| c - half).collect(),
            hi: center.iter().map(|c| c + half).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *v >= *l && *v <= *h)
    }

    /// Cell centers of a `resolution[0] x ... ` partition, row-major.
    pub fn cell_centers(&self, resolution: &[usize]) -> Array2<f64> {
        let d = self.dim();
        let total: usize = resolution.iter().product();
        let mut out = Array2::zeros((total, d));
        let mut idx = vec![0usize; d];
        for mut row in out.rows_mut() {
            for j in 0..d {
                let w = (self.hi[j] - self.lo[j]) / resolution[j] as f64;
                row[j] = self.lo[j] + (idx[j] as f64 + 0.5) * w;
            }
            for j in (0..d).rev() {
                idx[j] += 1;
                if idx[j] < resolution[j] {
                    break;
                }
                idx[j] = 0;
            }
        }
        out
    }

    pub fn cell_volume(&self, resolution: &[usize]) -> f64 {
        self.volume() / resolution.iter().product::<usize>() as f64
    }
}
