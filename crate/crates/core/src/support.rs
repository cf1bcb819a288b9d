//! Support estimation: level sets of a gridded density, convex hulls of
//! 2-D samples, boundary shrinking, and training grids inside a support.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{BoxRegion, GridError, GridSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SupportError {
    #[error("need at least 3 non-collinear 2-D points")]
    DegenerateInput,
    #[error("no grid point lies in the support")]
    EmptySupport,
    #[error("shrink factor must lie in (0, 1], got {0}")]
    InvalidFactor(f64),
    #[error("expected {expected} values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("grid value {index} is not finite")]
    NonFinite { index: usize },
    #[error("resolution must have one count of at least 2 per axis")]
    InvalidResolution,
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Where the density is taken to be positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SupportRegion {
    /// Membership of each grid node, flat row-major.
    GridMask { grid: GridSpec, mask: Vec<bool> },
    /// Convex polygon with counter-clockwise vertices.
    Polygon2D { vertices: Vec<[f64; 2]> },
}

impl SupportRegion {
    /// The whole grid.
    pub fn full(grid: GridSpec) -> Self {
        let mask = vec![true; grid.len()];
        SupportRegion::GridMask { grid, mask }
    }

    pub fn dim(&self) -> usize {
        match self {
            SupportRegion::GridMask { grid, .. } => grid.dim(),
            SupportRegion::Polygon2D { .. } => 2,
        }
    }

    /// Grid masks answer by the nearest node; polygons count points on an
    /// edge as inside.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            SupportRegion::GridMask { grid, mask } => grid
                .nearest(x)
                .is_some_and(|idx| mask[grid.flat_index(&idx)]),
            SupportRegion::Polygon2D { vertices } => {
                point_in_convex_polygon(vertices, [x[0], x[1]])
            }
        }
    }

    pub fn bounding_box(&self) -> BoxRegion {
        match self {
            SupportRegion::GridMask { grid, .. } => BoxRegion::new(
                grid.axes().iter().map(|a| a.min).collect(),
                grid.axes().iter().map(|a| a.max).collect(),
            ),
            SupportRegion::Polygon2D { vertices } => {
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for v in vertices {
                    for k in 0..2 {
                        lo[k] = lo[k].min(v[k]);
                        hi[k] = hi[k].max(v[k]);
                    }
                }
                BoxRegion::new(lo.to_vec(), hi.to_vec())
            }
        }
    }

    /// Number of true cells (masks) or polygon vertices.
    pub fn size(&self) -> usize {
        match self {
            SupportRegion::GridMask { mask, .. } => mask.iter().filter(|m| **m).count(),
            SupportRegion::Polygon2D { vertices } => vertices.len(),
        }
    }
}

/// `1e-3` times the largest grid value.
pub fn default_tau(values: &[f64]) -> f64 {
    1e-3 * values.iter().cloned().fold(0.0, f64::max)
}

/// Mask of nodes whose value is at least `tau`.
pub fn level_set_support(
    grid: &GridSpec,
    values: &[f64],
    tau: f64,
) -> Result<SupportRegion, SupportError> {
    if values.len() != grid.len() {
        return Err(SupportError::ShapeMismatch {
            expected: grid.len(),
            found: values.len(),
        });
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(SupportError::NonFinite { index });
    }
    let mask: Vec<bool> = values.iter().map(|v| *v >= tau).collect();
    if !mask.iter().any(|m| *m) {
        log::warn!("level set at tau {tau} is empty");
    }
    Ok(SupportRegion::GridMask {
        grid: grid.clone(),
        mask,
    })
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain. Returns CCW vertices without collinear points.
pub fn convex_hull(samples: ArrayView2<'_, f64>) -> Result<SupportRegion, SupportError> {
    if samples.ncols() != 2 {
        return Err(SupportError::DegenerateInput);
    }
    let mut pts: Vec<[f64; 2]> = samples.rows().into_iter().map(|r| [r[0], r[1]]).collect();
    if pts.iter().any(|p| !(p[0].is_finite() && p[1].is_finite())) {
        return Err(SupportError::DegenerateInput);
    }
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return Err(SupportError::DegenerateInput);
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
            {
                hull.pop();
            }
            hull.push(p);
        }
        // The last point of each chain starts the other one.
        hull.pop();
    }
    if hull.len() < 3 {
        return Err(SupportError::DegenerateInput);
    }
    Ok(SupportRegion::Polygon2D { vertices: hull })
}

/// Inclusive point-in-polygon test for a convex CCW polygon.
pub fn point_in_convex_polygon(vertices: &[[f64; 2]], p: [f64; 2]) -> bool {
    let scale = vertices
        .iter()
        .flat_map(|v| v.iter())
        .fold(p[0].abs().max(p[1].abs()), |m, v| m.max(v.abs()))
        .max(1.0);
    let tol = 1e-12 * scale * scale;
    let n = vertices.len();
    (0..n).all(|i| cross(vertices[i], vertices[(i + 1) % n], p) >= -tol)
}

/// Shoelace area.
pub fn polygon_area(vertices: &[[f64; 2]]) -> f64 {
    let n = vertices.len();
    0.5 * (0..n)
        .map(|i| {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
}

/// Area centroid of a simple polygon.
pub fn polygon_centroid(vertices: &[[f64; 2]]) -> [f64; 2] {
    let n = vertices.len();
    let area = polygon_area(vertices);
    let mut c = [0.0; 2];
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        let w = a[0] * b[1] - b[0] * a[1];
        c[0] += (a[0] + b[0]) * w;
        c[1] += (a[1] + b[1]) * w;
    }
    [c[0] / (6.0 * area), c[1] / (6.0 * area)]
}

/// Shrinks a polygon about its centroid, or erodes a mask by
/// `ceil((1 - factor) * min_axis_count / 2)` cells with a box element.
/// Cells outside the grid count as false during erosion.
pub fn shrink_region(r: &SupportRegion, factor: f64) -> Result<SupportRegion, SupportError> {
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(SupportError::InvalidFactor(factor));
    }
    if factor == 1.0 {
        return Ok(r.clone());
    }
    match r {
        SupportRegion::Polygon2D { vertices } => {
            let c = polygon_centroid(vertices);
            let vertices = vertices
                .iter()
                .map(|v| [c[0] + factor * (v[0] - c[0]), c[1] + factor * (v[1] - c[1])])
                .collect();
            Ok(SupportRegion::Polygon2D { vertices })
        }
        SupportRegion::GridMask { grid, mask } => {
            let min_count = grid.shape().into_iter().min().unwrap_or(0);
            let radius = ((1.0 - factor) * min_count as f64 / 2.0).ceil() as usize;
            Ok(SupportRegion::GridMask {
                grid: grid.clone(),
                mask: erode(grid, mask, radius),
            })
        }
    }
}

/// Box erosion, done one axis at a time (the element is separable).
fn erode(grid: &GridSpec, mask: &[bool], radius: usize) -> Vec<bool> {
    let shape = grid.shape();
    let mut current = mask.to_vec();
    for axis in 0..shape.len() {
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        let mut next = vec![false; current.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * len + k) * inner + i;
                // Prefix counts of true cells along this line.
                let mut prefix = vec![0usize; len + 1];
                for k in 0..len {
                    prefix[k + 1] = prefix[k] + usize::from(current[at(k)]);
                }
                for k in 0..len {
                    if k < radius || k + radius >= len {
                        continue;
                    }
                    let window = prefix[k + radius + 1] - prefix[k - radius];
                    next[at(k)] = window == 2 * radius + 1;
                }
            }
        }
        current = next;
    }
    current
}

/// Cell centers of a `resolution` partition of the region's bounding box
/// that fall inside the region, row-major.
pub fn grid_in_support(
    r: &SupportRegion,
    resolution: &[usize],
) -> Result<Array2<f64>, SupportError> {
    if resolution.len() != r.dim() || resolution.iter().any(|&c| c < 2) {
        return Err(SupportError::InvalidResolution);
    }
    let centers = r.bounding_box().cell_centers(resolution);
    let keep: Vec<usize> = centers
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(_, row)| r.contains(row.as_slice().expect("standard layout")))
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Err(SupportError::EmptySupport);
    }
    Ok(centers.select(ndarray::Axis(0), &keep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn unit_square() -> SupportRegion {
        convex_hull(array![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]].view()).unwrap()
    }

    #[test]
    fn hull_of_square_with_interior_points() {
        let pts = array![
            [0.5, 0.5],
            [0.0, 0.0],
            [1.0, 1.0],
            [0.2, 0.7],
            [1.0, 0.0],
            [0.0, 1.0],
            [0.5, 0.0],
            [1.0, 0.5]
        ];
        match convex_hull(pts.view()).unwrap() {
            SupportRegion::Polygon2D { vertices } => {
                assert_eq!(
                    vertices,
                    vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
                );
                assert_eq!(polygon_area(&vertices), 1.0);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn hull_rejects_degenerate_input() {
        assert!(convex_hull(array![[0.0, 0.0], [1.0, 1.0]].view()).is_err());
        assert!(convex_hull(array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]].view()).is_err());
        assert!(convex_hull(array![[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]].view()).is_err());
    }

    #[test]
    fn polygon_edges_count_as_inside() {
        let sq = unit_square();
        assert!(sq.contains(&[0.5, 0.0]));
        assert!(sq.contains(&[1.0, 1.0]));
        assert!(!sq.contains(&[1.0 + 1e-9, 0.5]));
    }

    #[test]
    fn shrink_square() {
        let sq = unit_square();
        assert_eq!(shrink_region(&sq, 1.0).unwrap(), sq);
        match shrink_region(&sq, 0.9).unwrap() {
            SupportRegion::Polygon2D { vertices } => {
                assert!((polygon_area(&vertices) - 0.81).abs() < 1e-12);
                assert!((vertices[0][0] - 0.05).abs() < 1e-12);
            }
            _ => unreachable!(),
        }
        assert!(shrink_region(&sq, 0.0).is_err());
    }

    #[test]
    fn erosion_trims_borders() {
        let grid = GridSpec::uniform(&[0.0, 0.0], &[1.0, 1.0], 10).unwrap();
        let full = SupportRegion::full(grid);
        // ceil(0.2 * 10 / 2) = 1 cell on every side.
        let eroded = shrink_region(&full, 0.8).unwrap();
        assert_eq!(eroded.size(), 64);
        assert_eq!(shrink_region(&full, 1.0).unwrap(), full);
    }

    #[test]
    fn level_sets() {
        let grid = GridSpec::uniform(&[0.0], &[1.0], 5).unwrap();
        let vals = [0.1, 0.5, 0.9, 0.5, 0.1];
        assert_eq!(level_set_support(&grid, &vals, 0.0).unwrap().size(), 5);
        assert_eq!(level_set_support(&grid, &vals, 0.5).unwrap().size(), 3);
        assert_eq!(level_set_support(&grid, &vals, 1.0).unwrap().size(), 0);
        assert!(level_set_support(&grid, &[0.1, f64::NAN, 0.0, 0.0, 0.0], 0.0).is_err());
        assert!(level_set_support(&grid, &vals[..3], 0.0).is_err());
        assert!((default_tau(&vals) - 9e-4).abs() < 1e-15);
    }

    #[test]
    fn grid_in_support_full_and_triangle() {
        let grid = GridSpec::uniform(&[0.0, 0.0], &[1.0, 1.0], 11).unwrap();
        let pts = grid_in_support(&SupportRegion::full(grid), &[8, 8]).unwrap();
        assert_eq!(pts.nrows(), 64);
        assert_eq!(pts.row(1).to_vec(), vec![0.0625, 0.1875]);

        let tri = convex_hull(array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]].view()).unwrap();
        let count = 100;
        let pts = grid_in_support(&tri, &[count, count]).unwrap();
        let frac = pts.nrows() as f64 / (count * count) as f64;
        assert!((frac - 0.5).abs() <= 2.0 / count as f64, "{frac}");
        for row in pts.rows() {
            assert!(row[0] + row[1] <= 1.0 + 1e-12);
        }
        assert!(grid_in_support(&tri, &[1, 5]).is_err());
    }

    #[test]
    fn empty_support_is_an_error() {
        let grid = GridSpec::uniform(&[0.0], &[1.0], 4).unwrap();
        let r = level_set_support(&grid, &[0.0; 4], 1.0).unwrap();
        assert!(matches!(
            grid_in_support(&r, &[4]),
            Err(SupportError::EmptySupport)
        ));
    }
}
