//! Gaussian kernel density estimation.
//!
//! The surrogate density that symbolic regression is trained against:
//!
//! ```text
//! f(x) = 1 / (n h^d (2 pi)^(d/2)) * sum_i exp(-|x - X_i|^2 / (2 h^2))
//! ```
//!
//! with a single isotropic bandwidth `h`.

mod fft;
mod reflect;

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use thiserror::Error;

use crate::grid::GridError;
use crate::{seed, Density};

pub use fft::{fft_kde_grid, FftOptions};
pub use reflect::{reflect_samples, AxisBounds, ReflectedKde};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DensityError {
    #[error("sample matrix contains a non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("bandwidth must be positive and finite, got {0}")]
    NonPositiveBandwidth(f64),
    #[error("no samples")]
    NoSamples,
    #[error("dimension mismatch: model has {expected} dimension(s), query has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no candidate bandwidths")]
    EmptyCandidates,
    #[error("{folds}-fold cross-validation needs at least {folds} samples, got {samples}")]
    TooFewSamples { folds: usize, samples: usize },
    #[error("cross-validation needs at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("grid spacing {spacing} on axis {axis} exceeds the bandwidth {bandwidth}")]
    GridTooCoarse {
        axis: usize,
        spacing: f64,
        bandwidth: f64,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Log-density floor used by cross-validation so empty neighborhoods score
/// `ln(1e-300)` instead of negative infinity.
pub const CV_DENSITY_FLOOR: f64 = 1e-300;

// exp(-x) underflows to zero for x beyond this.
const EXP_UNDERFLOW: f64 = 745.2;

/// A fitted Gaussian KDE. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeModel {
    samples: Array2<f64>,
    bandwidth: f64,
}

impl KdeModel {
    pub fn samples(&self) -> ArrayView2<'_, f64> {
        self.samples.view()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn n(&self) -> usize {
        self.samples.nrows()
    }

    fn norm(&self) -> f64 {
        let d = self.samples.ncols() as i32;
        1.0 / (self.n() as f64 * self.bandwidth.powi(d) * (2.0 * PI).powf(d as f64 / 2.0))
    }

    fn eval_one(&self, x: &[f64], norm: f64) -> f64 {
        let inv = 1.0 / (2.0 * self.bandwidth * self.bandwidth);
        let mut sum = 0.0;
        for row in self.samples.rows() {
            let mut r2 = 0.0;
            for (a, b) in x.iter().zip(row.iter()) {
                let t = a - b;
                r2 += t * t;
            }
            let arg = r2 * inv;
            if arg < EXP_UNDERFLOW {
                sum += (-arg).exp();
            }
        }
        sum * norm
    }

    /// Evaluates the density at every row of `points`.
    pub fn evaluate(&self, points: ArrayView2<'_, f64>) -> Result<Vec<f64>, DensityError> {
        kde_evaluate(self, points)
    }
}

impl Density for KdeModel {
    fn dim(&self) -> usize {
        self.samples.ncols()
    }

    fn density(&self, x: &[f64]) -> f64 {
        self.eval_one(x, self.norm())
    }

    fn density_batch(&self, points: ArrayView2<'_, f64>) -> Vec<f64> {
        kde_evaluate(self, points).unwrap_or_else(|_| vec![f64::NAN; points.nrows()])
    }
}

fn check_finite(samples: ArrayView2<'_, f64>) -> Result<(), DensityError> {
    for ((row, col), v) in samples.indexed_iter() {
        if !v.is_finite() {
            return Err(DensityError::NonFinite { row, col });
        }
    }
    Ok(())
}

/// Stores `samples` and bandwidth `h`.
pub fn kde_fit(samples: ArrayView2<'_, f64>, h: f64) -> Result<KdeModel, DensityError> {
    if samples.nrows() == 0 {
        return Err(DensityError::NoSamples);
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(DensityError::NonPositiveBandwidth(h));
    }
    check_finite(samples)?;
    Ok(KdeModel {
        samples: samples.to_owned(),
        bandwidth: h,
    })
}

pub fn kde_evaluate(m: &KdeModel, points: ArrayView2<'_, f64>) -> Result<Vec<f64>, DensityError> {
    if points.ncols() != m.samples.ncols() {
        return Err(DensityError::DimensionMismatch {
            expected: m.samples.ncols(),
            found: points.ncols(),
        });
    }
    let norm = m.norm();
    let rows: Vec<Vec<f64>> = points.rows().into_iter().map(|r| r.to_vec()).collect();
    Ok(rows.par_iter().map(|x| m.eval_one(x, norm)).collect())
}

/// Rule-of-thumb bandwidth `sigma * (4 / ((d + 2) n))^(1 / (d + 4))` using
/// the mean per-axis standard deviation.
pub fn silverman_bandwidth(samples: ArrayView2<'_, f64>) -> f64 {
    let n = samples.nrows() as f64;
    let d = samples.ncols() as f64;
    let sigma = samples
        .columns()
        .into_iter()
        .map(|c| c.std(1.0))
        .sum::<f64>()
        / d;
    sigma * (4.0 / ((d + 2.0) * n)).powf(1.0 / (d + 4.0))
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| match i {
            0 => lo,
            i if i + 1 == count => hi,
            i => (a + (b - a) * i as f64 / (count - 1) as f64).exp(),
        })
        .collect()
}

/// Default candidate grid: 30 log-spaced bandwidths spanning a factor of 40
/// around the rule-of-thumb value (from 1/20 to 2 times it).
pub fn default_candidates(samples: ArrayView2<'_, f64>) -> Vec<f64> {
    let base = silverman_bandwidth(samples);
    let base = if base > 0.0 && base.is_finite() {
        base
    } else {
        1e-3
    };
    log_spaced(base / 20.0, base * 2.0, 30)
}

/// Picks the candidate with the highest mean held-out log-likelihood over
/// `folds` folds. Fold membership is a seeded shuffle dealt round-robin.
/// Ties go to the smaller bandwidth.
pub fn cv_bandwidth(
    samples: ArrayView2<'_, f64>,
    candidates: &[f64],
    folds: usize,
    seed: u64,
) -> Result<f64, DensityError> {
    if candidates.is_empty() {
        return Err(DensityError::EmptyCandidates);
    }
    if let Some(&bad) = candidates.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
        return Err(DensityError::NonPositiveBandwidth(bad));
    }
    if folds < 2 {
        return Err(DensityError::TooFewFolds(folds));
    }
    let n = samples.nrows();
    if n < folds {
        return Err(DensityError::TooFewSamples { folds, samples: n });
    }
    check_finite(samples)?;
    if candidates.len() == 1 {
        return Ok(candidates[0]);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    let mut fold_of = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }

    let d = samples.ncols() as i32;
    let mut scores = vec![0.0; candidates.len()];
    for fold in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
        let train_x = samples.select(Axis(0), &train);
        // Per test point, squared distances to the training set are shared
        // across all candidates.
        let per_point: Vec<Vec<f64>> = test
            .par_iter()
            .map(|&t| {
                let x = samples.row(t);
                let r2: Vec<f64> = train_x
                    .rows()
                    .into_iter()
                    .map(|row| {
                        row.iter()
                            .zip(x.iter())
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum()
                    })
                    .collect();
                candidates
                    .iter()
                    .map(|&h| {
                        let inv = 1.0 / (2.0 * h * h);
                        let s: f64 = r2
                            .iter()
                            .map(|&r| {
                                if r * inv < EXP_UNDERFLOW {
                                    (-r * inv).exp()
                                } else {
                                    0.0
                                }
                            })
                            .sum();
                        let norm = 1.0
                            / (train.len() as f64 * h.powi(d) * (2.0 * PI).powf(d as f64 / 2.0));
                        (s * norm).max(CV_DENSITY_FLOOR).ln()
                    })
                    .collect()
            })
            .collect();
        for (c, score) in scores.iter_mut().enumerate() {
            let mean = per_point.iter().map(|v| v[c]).sum::<f64>() / test.len() as f64;
            *score += mean / folds as f64;
        }
    }

    let mut best = 0;
    for c in 1..candidates.len() {
        let better = scores[c] > scores[best]
            || (scores[c] == scores[best] && candidates[c] < candidates[best]);
        if better {
            best = c;
        }
    }
    Ok(candidates[best])
}

/// Cross-validated bandwidth on at most `cap` samples. Larger sets are
/// subsampled (seeded), the default candidate grid is built on the subset,
/// and the winner is rescaled by `(cap / n)^(1 / (d + 4))` to account for
/// the full sample size.
pub fn select_bandwidth(
    samples: ArrayView2<'_, f64>,
    folds: usize,
    seed: u64,
    cap: usize,
) -> Result<f64, DensityError> {
    let n = samples.nrows();
    if n == 0 {
        return Err(DensityError::NoSamples);
    }
    if n <= cap.max(folds) {
        return cv_bandwidth(samples, &default_candidates(samples), folds, seed);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed::derive(seed, 1)));
    order.truncate(cap.max(folds));
    order.sort_unstable();
    let sub = samples.select(Axis(0), &order);
    let h = cv_bandwidth(sub.view(), &default_candidates(sub.view()), folds, seed)?;
    let d = samples.ncols() as f64;
    Ok(h * (order.len() as f64 / n as f64).powf(1.0 / (d + 4.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn single_sample_peak_1d() {
        let m = kde_fit(array![[0.0]].view(), 1.0).unwrap();
        let v = m.evaluate(array![[0.0]].view()).unwrap()[0];
        assert!((v - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
        assert!((v - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn single_sample_peak_2d() {
        let m = kde_fit(array![[0.3, -1.2]].view(), 1.0).unwrap();
        let v = m.evaluate(array![[0.3, -1.2]].view()).unwrap()[0];
        assert!((v - 1.0 / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn symmetric_pair() {
        let a = 0.7;
        let pair = kde_fit(array![[-a], [a]].view(), 0.4).unwrap();
        let single = kde_fit(array![[a]].view(), 0.4).unwrap();
        let p = pair.evaluate(array![[0.0]].view()).unwrap()[0];
        let s = single.evaluate(array![[0.0]].view()).unwrap()[0];
        assert!((p - s).abs() < 1e-15);
    }

    #[test]
    fn far_query_underflows_to_non_negative() {
        let m = kde_fit(array![[0.0, 0.0]].view(), 0.1).unwrap();
        let v = m.evaluate(array![[100.0, 100.0]].view()).unwrap()[0];
        assert!((0.0..1e-300).contains(&v));
    }

    #[test]
    fn fit_errors() {
        assert_eq!(
            kde_fit(array![[0.0]].view(), 0.0),
            Err(DensityError::NonPositiveBandwidth(0.0))
        );
        assert_eq!(
            kde_fit(array![[0.0], [f64::NAN]].view(), 1.0),
            Err(DensityError::NonFinite { row: 1, col: 0 })
        );
        assert_eq!(
            kde_fit(Array2::<f64>::zeros((0, 2)).view(), 1.0),
            Err(DensityError::NoSamples)
        );
        let m = kde_fit(array![[0.0]].view(), 1.0).unwrap();
        assert!(matches!(
            m.evaluate(array![[0.0, 1.0]].view()),
            Err(DensityError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn integrates_to_one_on_generous_grid() {
        let mut rng = seed::rng(3);
        let n = 200;
        let data: Vec<f64> = (0..2 * n)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let samples = Array2::from_shape_vec((n, 2), data).unwrap();
        let h = 0.3;
        let m = kde_fit(samples.view(), h).unwrap();
        let (lo, hi) = (-4.0 - 6.0 * h, 4.0 + 6.0 * h);
        let cells = 160;
        let w = (hi - lo) / cells as f64;
        let mut pts = Vec::new();
        for i in 0..cells {
            for j in 0..cells {
                pts.push(lo + (i as f64 + 0.5) * w);
                pts.push(lo + (j as f64 + 0.5) * w);
            }
        }
        let pts = Array2::from_shape_vec((cells * cells, 2), pts).unwrap();
        let vals = m.evaluate(pts.view()).unwrap();
        assert!(vals.iter().all(|v| *v > 0.0));
        let total: f64 = vals.iter().sum::<f64>() * w * w;
        assert!((total - 1.0).abs() < 0.01, "{total}");
    }

    #[test]
    fn cv_singleton_and_errors() {
        let s = array![[0.0], [1.0], [2.0]];
        assert_eq!(cv_bandwidth(s.view(), &[0.4], 2, 0).unwrap(), 0.4);
        assert_eq!(
            cv_bandwidth(s.view(), &[], 2, 0),
            Err(DensityError::EmptyCandidates)
        );
        assert_eq!(
            cv_bandwidth(s.view(), &[0.1, 0.2], 5, 0),
            Err(DensityError::TooFewSamples {
                folds: 5,
                samples: 3
            })
        );
    }

    #[test]
    fn cv_duplicates_pick_smallest() {
        let s = Array2::from_elem((20, 1), 1.5);
        let c = log_spaced(0.01, 1.0, 10);
        assert_eq!(cv_bandwidth(s.view(), &c, 5, 1).unwrap(), 0.01);
    }

    #[test]
    fn cv_is_deterministic() {
        let mut rng = seed::rng(11);
        let data: Vec<f64> = (0..300).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = Array2::from_shape_vec((300, 1), data).unwrap();
        let c = log_spaced(0.01, 1.0, 30);
        assert_eq!(
            cv_bandwidth(s.view(), &c, 5, 9).unwrap(),
            cv_bandwidth(s.view(), &c, 5, 9).unwrap()
        );
    }

    #[test]
    fn log_spacing() {
        let v = log_spaced(0.01, 1.0, 3);
        assert!((v[1] - 0.1).abs() < 1e-15);
        assert_eq!(v.len(), 3);
    }
}
