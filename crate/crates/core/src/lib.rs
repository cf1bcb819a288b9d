//! Symbolic density estimation.
//!
//! Recovers closed-form probability density expressions from raw samples.
//! The pipeline optionally decomposes the problem (DBSCAN clustering for
//! additive mixtures, PC skeleton learning for multiplicative
//! factorizations), fits a Gaussian KDE surrogate, estimates the support,
//! and runs multi-population genetic-programming symbolic regression
//! against the surrogate labels. The [`validate`] module scores the
//! resulting pareto front.
//!
//! Modules:
//! - [`expr`]: expression trees, parsing, printing, evaluation.
//! - [`density`]: KDE, cross-validated bandwidth, FFT grid KDE, reflection.
//! - [`decompose`]: DBSCAN, partial correlation, PC skeleton, recombination.
//! - [`support`]: level sets, convex hulls, shrinking, support grids.
//! - [`sr`]: loss functions, genetic operators, pareto front, evolution.
//! - [`validate`]: quadrature, probability mass checks, log-likelihood.
//! - [`datagen`]: ground-truth densities and samplers.
//! - [`samples`]: sample matrices and their CSV form.

pub mod datagen;
pub mod decompose;
pub mod density;
pub mod expr;
pub mod grid;
pub mod samples;
pub mod seed;
pub mod sr;
pub mod support;
pub mod validate;

use ndarray::ArrayView2;

pub use expr::Expression;
pub use grid::GridSpec;

/// Anything that can be evaluated as a (possibly unnormalized) density.
pub trait Density: Sync {
    fn dim(&self) -> usize;

    fn density(&self, x: &[f64]) -> f64;

    /// Evaluates every row of `points`.
    fn density_batch(&self, points: ArrayView2<'_, f64>) -> Vec<f64> {
        points
            .rows()
            .into_iter()
            .map(|row| match row.as_slice() {
                Some(s) => self.density(s),
                None => self.density(&row.to_vec()),
            })
            .collect()
    }
}

impl Density for Expression {
    fn dim(&self) -> usize {
        self.var_count()
    }

    fn density(&self, x: &[f64]) -> f64 {
        self.evaluate(x).unwrap_or(f64::NAN)
    }

    fn density_batch(&self, points: ArrayView2<'_, f64>) -> Vec<f64> {
        self.evaluate_batch(points)
            .unwrap_or_else(|_| vec![f64::NAN; points.nrows()])
    }
}

impl<D: Density + ?Sized> Density for &D {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn density(&self, x: &[f64]) -> f64 {
        (**self).density(x)
    }

    fn density_batch(&self, points: ArrayView2<'_, f64>) -> Vec<f64> {
        (**self).density_batch(points)
    }
}

impl<D: Density + ?Sized> Density for Box<D> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn density(&self, x: &[f64]) -> f64 {
        (**self).density(x)
    }

    fn density_batch(&self, points: ArrayView2<'_, f64>) -> Vec<f64> {
        (**self).density_batch(points)
    }
}

/// Adapts a closure to [`Density`].
pub struct FnDensity<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnDensity<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnDensity { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Density for FnDensity<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn density(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}
