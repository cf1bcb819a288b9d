//! Quantitative checks: quadrature, probability mass in boxes, expression
//! normalization, log-likelihood and residual maps.

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::format_constant;
use crate::grid::{BoxRegion, GridSpec};
use crate::support::SupportRegion;
use crate::Density;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidateError {
    #[error("region has zero or negative extent on some axis")]
    InvalidRegion,
    #[error("resolution must have one count of at least 2 per axis")]
    InvalidResolution,
    #[error("sample set is empty")]
    EmptySampleSet,
    #[error("volume {0} is not positive and finite")]
    NonPositiveVolume(f64),
    #[error("clip threshold must be positive, got {0}")]
    InvalidClip(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Midpoint-rule value and the change observed when the resolution doubles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integral {
    pub value: f64,
    pub error_estimate: f64,
}

fn check_box(region: &BoxRegion, resolution: &[usize]) -> Result<(), ValidateError> {
    if region.lo.iter().zip(&region.hi).any(|(l, h)| !(l < h)) {
        return Err(ValidateError::InvalidRegion);
    }
    if resolution.len() != region.dim() || resolution.iter().any(|&r| r < 2) {
        return Err(ValidateError::InvalidResolution);
    }
    Ok(())
}

fn midpoint_sum<D: Density + ?Sized>(f: &D, region: &BoxRegion, resolution: &[usize]) -> f64 {
    let centers = region.cell_centers(resolution);
    // Chunked so that large grids are evaluated in parallel with a fixed
    // summation order.
    let chunk = 4096;
    let partial: Vec<f64> = centers
        .axis_chunks_iter(ndarray::Axis(0), chunk)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|block| f.density_batch(block).iter().sum::<f64>())
        .collect();
    partial.iter().sum::<f64>() * region.cell_volume(resolution)
}

/// Midpoint-rule integral of `f` over `region` (value only).
pub fn integrate_grid<D: Density + ?Sized>(
    f: &D,
    region: &BoxRegion,
    resolution: &[usize],
) -> Result<f64, ValidateError> {
    check_box(region, resolution)?;
    if f.dim() != region.dim() {
        return Err(ValidateError::DimensionMismatch {
            expected: region.dim(),
            found: f.dim(),
        });
    }
    Ok(midpoint_sum(f, region, resolution))
}

/// Midpoint-rule integral with an error estimate from one doubling.
pub fn integrate_with_error<D: Density + ?Sized>(
    f: &D,
    region: &BoxRegion,
    resolution: &[usize],
) -> Result<Integral, ValidateError> {
    let value = integrate_grid(f, region, resolution)?;
    let doubled: Vec<usize> = resolution.iter().map(|r| 2 * r).collect();
    let fine = midpoint_sum(f, region, &doubled);
    Ok(Integral {
        value,
        error_estimate: (fine - value).abs(),
    })
}

/// Fraction of samples inside the closed box.
pub fn empirical_mass(
    samples: ArrayView2<'_, f64>,
    region: &BoxRegion,
) -> Result<f64, ValidateError> {
    if samples.nrows() == 0 {
        return Err(ValidateError::EmptySampleSet);
    }
    if samples.ncols() != region.dim() {
        return Err(ValidateError::DimensionMismatch {
            expected: region.dim(),
            found: samples.ncols(),
        });
    }
    let inside = samples
        .rows()
        .into_iter()
        .filter(|r| {
            r.iter()
                .zip(region.lo.iter().zip(&region.hi))
                .all(|(v, (l, h))| v >= l && v <= h)
        })
        .count();
    Ok(inside as f64 / samples.nrows() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassRow {
    pub source: String,
    pub values: Vec<f64>,
}

/// Probability mass per region: the empirical row first, then one row per
/// model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassReport {
    pub regions: Vec<String>,
    pub rows: Vec<MassRow>,
}

impl MassReport {
    pub fn row(&self, source: &str) -> Option<&MassRow> {
        self.rows.iter().find(|r| r.source == source)
    }

    /// Header `source,<region names>`, then one line per row.
    pub fn to_csv(&self) -> String {
        let mut out = format!("source,{}\n", self.regions.join(","));
        for row in &self.rows {
            out.push_str(&row.source);
            for v in &row.values {
                out.push(',');
                out.push_str(&format_constant(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// Empirical and model masses for every region.
pub fn local_mass_report(
    samples: ArrayView2<'_, f64>,
    models: &[(&str, &dyn Density)],
    regions: &[(String, BoxRegion)],
    resolution: &[usize],
) -> Result<MassReport, ValidateError> {
    let mut rows = vec![MassRow {
        source: "Empirical".into(),
        values: regions
            .iter()
            .map(|(_, b)| empirical_mass(samples, b))
            .collect::<Result<_, _>>()?,
    }];
    for (name, model) in models {
        rows.push(MassRow {
            source: name.to_string(),
            values: regions
                .iter()
                .map(|(_, b)| integrate_grid(*model, b, resolution))
                .collect::<Result<_, _>>()?,
        });
    }
    Ok(MassReport {
        regions: regions.iter().map(|(n, _)| n.clone()).collect(),
        rows,
    })
}

/// `f / scale`, where `scale` is the integral of `f` over a support.
#[derive(Debug, Clone)]
pub struct Normalized<D> {
    pub inner: D,
    pub scale: f64,
}

impl<D: Density> Density for Normalized<D> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn density(&self, x: &[f64]) -> f64 {
        self.inner.density(x) / self.scale
    }

    fn density_batch(&self, points: ArrayView2<'_, f64>) -> Vec<f64> {
        let mut v = self.inner.density_batch(points);
        for x in v.iter_mut() {
            *x /= self.scale;
        }
        v
    }
}

/// Midpoint integral of `f` over the cells of `resolution` whose centers lie
/// in `support`.
pub fn integrate_over_support<D: Density + ?Sized>(
    f: &D,
    support: &SupportRegion,
    resolution: &[usize],
) -> Result<f64, ValidateError> {
    let bbox = support.bounding_box();
    check_box(&bbox, resolution)?;
    let centers = bbox.cell_centers(resolution);
    let keep: Vec<usize> = centers
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(_, r)| support.contains(r.as_slice().expect("standard layout")))
        .map(|(i, _)| i)
        .collect();
    let inside = centers.select(ndarray::Axis(0), &keep);
    Ok(f.density_batch(inside.view()).iter().sum::<f64>() * bbox.cell_volume(resolution))
}

/// Scales `f` to unit integral over `support`.
pub fn normalize_expression<D: Density>(
    f: D,
    support: &SupportRegion,
    resolution: &[usize],
) -> Result<Normalized<D>, ValidateError> {
    let z = integrate_over_support(&f, support, resolution)?;
    if !(z > 0.0 && z.is_finite()) {
        return Err(ValidateError::NonPositiveVolume(z));
    }
    Ok(Normalized { inner: f, scale: z })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLikelihood {
    pub mean: f64,
    /// Samples whose density was below the threshold (or NaN).
    pub clipped: usize,
}

/// Mean of `log(max(f(x), clip))` over the samples.
pub fn mean_log_likelihood<D: Density + ?Sized>(
    f: &D,
    samples: ArrayView2<'_, f64>,
    clip: f64,
) -> Result<LogLikelihood, ValidateError> {
    if !(clip > 0.0) {
        return Err(ValidateError::InvalidClip(clip));
    }
    if samples.nrows() == 0 {
        return Err(ValidateError::EmptySampleSet);
    }
    let values = f.density_batch(samples);
    let mut clipped = 0;
    let mut total = 0.0;
    for v in values {
        if v >= clip {
            total += v.ln();
        } else {
            clipped += 1;
            total += clip.ln();
        }
    }
    Ok(LogLikelihood {
        mean: total / samples.nrows() as f64,
        clipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualGrid {
    /// `e - reference` at every grid node, flat row-major.
    pub residual: Vec<f64>,
    pub prediction: Vec<f64>,
    pub max_abs: f64,
    pub max_pred: f64,
}

pub fn residual_grid<A: Density + ?Sized, B: Density + ?Sized>(
    e: &A,
    reference: &B,
    grid: &GridSpec,
) -> ResidualGrid {
    let nodes = grid.nodes();
    let prediction = e.density_batch(nodes.view());
    let truth = reference.density_batch(nodes.view());
    let residual: Vec<f64> = prediction.iter().zip(&truth).map(|(p, t)| p - t).collect();
    let max_abs = residual.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let max_pred = prediction.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    ResidualGrid {
        residual,
        prediction,
        max_abs,
        max_pred,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{seed, FnDensity};
    use ndarray::{array, Array2};
    use rand::Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::PI;

    fn normal_pdf(x: f64) -> f64 {
        (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
    }

    #[test]
    fn quadrature_cases() {
        let one = FnDensity::new(2, |_| 1.0);
        let unit = BoxRegion::new(vec![0.0; 2], vec![1.0; 2]);
        assert_eq!(integrate_grid(&one, &unit, &[7, 3]).unwrap(), 1.0);
        let n = FnDensity::new(1, |x| normal_pdf(x[0]));
        let i = integrate_with_error(&n, &BoxRegion::new(vec![-8.0], vec![8.0]), &[4096]).unwrap();
        assert!((i.value - 1.0).abs() < 1e-6);
        assert!(i.error_estimate < 1e-6);
        assert!(integrate_grid(&one, &unit, &[1, 4]).is_err());
        assert!(
            integrate_grid(&one, &BoxRegion::new(vec![0.0; 2], vec![0.0, 1.0]), &[4, 4]).is_err()
        );
    }

    #[test]
    fn quadrature_is_additive_over_boxes() {
        let f = FnDensity::new(2, |x| (x[0] * 3.0).sin() + x[1] * x[1]);
        let whole =
            integrate_grid(&f, &BoxRegion::new(vec![0.0; 2], vec![2.0, 1.0]), &[40, 20]).unwrap();
        let left =
            integrate_grid(&f, &BoxRegion::new(vec![0.0; 2], vec![1.0, 1.0]), &[20, 20]).unwrap();
        let right = integrate_grid(
            &f,
            &BoxRegion::new(vec![1.0, 0.0], vec![2.0, 1.0]),
            &[20, 20],
        )
        .unwrap();
        assert!((whole - left - right).abs() < 1e-12);
    }

    #[test]
    fn empirical_mass_cases() {
        let s = array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        assert_eq!(
            empirical_mass(s.view(), &BoxRegion::new(vec![-1.0; 2], vec![5.0; 2])).unwrap(),
            1.0
        );
        assert_eq!(
            empirical_mass(s.view(), &BoxRegion::new(vec![10.0; 2], vec![11.0; 2])).unwrap(),
            0.0
        );
        // Closed faces: a point on the boundary counts.
        assert_eq!(
            empirical_mass(s.view(), &BoxRegion::new(vec![1.0; 2], vec![2.0; 2])).unwrap(),
            0.5
        );
        assert!(empirical_mass(
            Array2::<f64>::zeros((0, 2)).view(),
            &BoxRegion::new(vec![0.0; 2], vec![1.0; 2])
        )
        .is_err());
    }

    #[test]
    fn half_plane_of_symmetric_data() {
        let mut rng = seed::rng(12);
        let n = 10_000;
        let s = Array2::from_shape_fn((n, 1), |_| rng.sample::<f64, _>(StandardNormal));
        let m = empirical_mass(s.view(), &BoxRegion::new(vec![-100.0], vec![0.0])).unwrap();
        assert!((m - 0.5).abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn mass_report_layout() {
        let s = array![[0.1], [0.6], [0.7]];
        let zero = FnDensity::new(1, |_| 0.0);
        let unif = FnDensity::new(1, |_| 1.0);
        let regions = vec![
            ("A".to_string(), BoxRegion::new(vec![0.0], vec![0.5])),
            ("B".to_string(), BoxRegion::new(vec![0.5], vec![1.0])),
        ];
        let models: Vec<(&str, &dyn Density)> = vec![("Zero", &zero), ("Uniform", &unif)];
        let r = local_mass_report(s.view(), &models, &regions, &[16]).unwrap();
        assert_eq!(r.row("Zero").unwrap().values, vec![0.0, 0.0]);
        assert_eq!(r.row("Uniform").unwrap().values, vec![0.5, 0.5]);
        assert_eq!(r.to_csv().lines().next(), Some("source,A,B"));
        assert!(r
            .to_csv()
            .contains("Empirical,0.33333333333333331,0.66666666666666663"));
    }

    #[test]
    fn normalization_cases() {
        let grid = GridSpec::uniform(&[-6.0], &[6.0], 50).unwrap();
        let support = SupportRegion::full(grid);
        let n = FnDensity::new(1, |x| 7.0 * normal_pdf(x[0]));
        let norm = normalize_expression(&n, &support, &[2000]).unwrap();
        assert!((norm.scale - 7.0).abs() < 1e-3);
        assert!((norm.density(&[0.3]) - normal_pdf(0.3)).abs() < 1e-3);
        let lobe = FnDensity::new(1, |x| if x[0] < 0.0 { -0.25 / 6.0 } else { 0.75 / 6.0 });
        let n2 = normalize_expression(&lobe, &support, &[1000]).unwrap();
        assert!((n2.scale - 0.5).abs() < 1e-9);
        let neg = FnDensity::new(1, |_| -1.0);
        assert!(matches!(
            normalize_expression(&neg, &support, &[10]),
            Err(ValidateError::NonPositiveVolume(_))
        ));
    }

    #[test]
    fn log_likelihood_matches_entropy() {
        let mut rng = seed::rng(3);
        let n = 100_000;
        let s = Array2::from_shape_fn((n, 1), |_| rng.sample::<f64, _>(StandardNormal));
        let f = FnDensity::new(1, |x| normal_pdf(x[0]));
        let ll = mean_log_likelihood(&f, s.view(), 1e-12).unwrap();
        let entropy = 0.5 * (1.0 + (2.0 * PI).ln());
        assert!((ll.mean + entropy).abs() < 0.01, "{}", ll.mean);
        assert_eq!(ll.clipped, 0);
        let tiny = FnDensity::new(1, |_| 1e-12);
        let ll = mean_log_likelihood(&tiny, s.view(), 1e-12).unwrap();
        assert!((ll.mean - 1e-12f64.ln()).abs() < 1e-9);
        let zero = FnDensity::new(1, |_| 0.0);
        assert_eq!(
            mean_log_likelihood(&zero, s.view(), 1e-12).unwrap().clipped,
            n
        );
    }

    #[test]
    fn residual_cases() {
        let grid = GridSpec::uniform(&[0.0], &[1.0], 11).unwrap();
        let f = FnDensity::new(1, |x| x[0] * x[0]);
        let g = FnDensity::new(1, |x| x[0] * x[0] + 0.01);
        let same = residual_grid(&f, &f, &grid);
        assert!(same.residual.iter().all(|r| *r == 0.0));
        let off = residual_grid(&g, &f, &grid);
        assert!((off.max_abs - 0.01).abs() < 1e-12);
        assert!((off.max_pred - 1.01).abs() < 1e-12);
    }
}
