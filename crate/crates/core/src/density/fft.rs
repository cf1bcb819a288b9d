//! Grid KDE via linear binning and FFT convolution.
//!
//! Samples are linearly binned onto an internal grid that refines the
//! output grid by an integer factor per axis, then convolved with a
//! sampled Gaussian one axis at a time (the kernel is separable). Each
//! 1-D convolution is a zero-padded FFT product. The internal grid is
//! decimated back to the output nodes after each axis.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::ArrayView2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::DensityError;
use crate::grid::{Axis, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FftOptions {
    /// Target ratio of bandwidth to internal bin spacing.
    pub bins_per_bandwidth: f64,
    /// Kernel truncation radius in bandwidths.
    pub kernel_radius: f64,
    /// Upper bound on internal grid cells; refinement is reduced to fit.
    pub max_internal_cells: usize,
}

impl Default for FftOptions {
    fn default() -> Self {
        FftOptions {
            bins_per_bandwidth: 10.0,
            kernel_radius: 8.0,
            max_internal_cells: 1 << 23,
        }
    }
}

/// Densities at every node of `grid` (flat, row-major).
///
/// Fails with [`DensityError::GridTooCoarse`] when any axis spacing exceeds
/// `h`. Samples farther than `4h` outside the grid are tolerated but logged,
/// since their mass is partly lost.
pub fn fft_kde_grid(
    samples: ArrayView2<'_, f64>,
    grid: &GridSpec,
    h: f64,
    options: FftOptions,
) -> Result<Vec<f64>, DensityError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(DensityError::NonPositiveBandwidth(h));
    }
    if samples.nrows() == 0 {
        return Err(DensityError::NoSamples);
    }
    let d = grid.dim();
    if samples.ncols() != d {
        return Err(DensityError::DimensionMismatch {
            expected: d,
            found: samples.ncols(),
        });
    }
    for (axis, a) in grid.axes().iter().enumerate() {
        if a.spacing() > h {
            return Err(DensityError::GridTooCoarse {
                axis,
                spacing: a.spacing(),
                bandwidth: h,
            });
        }
    }
    warn_if_uncovered(samples, grid, h);

    let refine = refinement(grid, h, &options);
    let fine_axes: Vec<Axis> = grid
        .axes()
        .iter()
        .zip(&refine)
        .map(|(a, &r)| Axis {
            min: a.min,
            max: a.max,
            count: (a.count - 1) * r + 1,
        })
        .collect();
    let fine = GridSpec::new(fine_axes)?;

    let mut shape = fine.shape();
    let mut values = linear_bin(samples, &fine);

    for axis in 0..d {
        let spacing = fine.axes()[axis].spacing();
        let kernel = sampled_gaussian(h, spacing, options.kernel_radius);
        values = convolve_axis(&values, &shape, axis, &kernel, refine[axis]);
        shape[axis] = grid.axes()[axis].count;
    }

    let n = samples.nrows() as f64;
    for v in values.iter_mut() {
        *v = (*v / n).max(0.0);
    }
    Ok(values)
}

fn refinement(grid: &GridSpec, h: f64, options: &FftOptions) -> Vec<usize> {
    let target = h / options.bins_per_bandwidth;
    let mut refine: Vec<usize> = grid
        .axes()
        .iter()
        .map(|a| (a.spacing() / target).ceil().max(1.0) as usize)
        .collect();
    let cells = |r: &[usize]| -> f64 {
        grid.axes()
            .iter()
            .zip(r)
            .map(|(a, &k)| ((a.count - 1) * k + 1) as f64)
            .product()
    };
    let mut capped = false;
    while cells(&refine) > options.max_internal_cells as f64 && refine.iter().any(|&r| r > 1) {
        let widest = (0..refine.len()).max_by_key(|&i| refine[i]).unwrap_or(0);
        refine[widest] -= 1;
        capped = true;
    }
    if capped {
        log::warn!("fft kde: refinement reduced to {refine:?} to respect max_internal_cells");
    }
    refine
}

fn warn_if_uncovered(samples: ArrayView2<'_, f64>, grid: &GridSpec, h: f64) {
    for (j, a) in grid.axes().iter().enumerate() {
        let col = samples.column(j);
        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if lo - 4.0 * h < a.min || hi + 4.0 * h > a.max {
            log::warn!(
                "fft kde: axis {j} grid [{}, {}] does not cover samples [{lo}, {hi}] plus 4h padding",
                a.min,
                a.max
            );
        }
    }
}

/// Distributes each sample over its 2^d surrounding nodes with multilinear
/// weights. Samples outside the grid are dropped.
fn linear_bin(samples: ArrayView2<'_, f64>, grid: &GridSpec) -> Vec<f64> {
    let d = grid.dim();
    let axes = grid.axes();
    let mut out = vec![0.0; grid.len()];
    let mut base = vec![0usize; d];
    let mut frac = vec![0.0; d];
    'samples: for row in samples.rows() {
        for j in 0..d {
            let a = &axes[j];
            let t = (row[j] - a.min) / a.spacing();
            if !(t >= 0.0 && t <= (a.count - 1) as f64) {
                continue 'samples;
            }
            let k = (t.floor() as usize).min(a.count - 2);
            base[j] = k;
            frac[j] = t - k as f64;
        }
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0;
            for j in 0..d {
                let up = (corner >> j) & 1 == 1;
                w *= if up { frac[j] } else { 1.0 - frac[j] };
                flat = flat * axes[j].count + base[j] + usize::from(up);
            }
            out[flat] += w;
        }
    }
    out
}

/// Normalized 1-D Gaussian sampled at integer multiples of `spacing`,
/// offsets `0..=radius`.
fn sampled_gaussian(h: f64, spacing: f64, radius: f64) -> Vec<f64> {
    let half = (radius * h / spacing).ceil() as usize;
    let norm = 1.0 / ((2.0 * PI).sqrt() * h);
    (0..=half)
        .map(|k| {
            let x = k as f64 * spacing;
            norm * (-(x * x) / (2.0 * h * h)).exp()
        })
        .collect()
}

struct LineConvolver {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    kernel_hat: Vec<Complex64>,
    buffer: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl LineConvolver {
    fn new(line_len: usize, kernel: &[f64]) -> Self {
        let half = kernel.len() - 1;
        // Zero padding keeps the circular product equal to the linear one on
        // the first `line_len` outputs.
        let len = (line_len + half + 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let mut kernel_hat = vec![Complex64::new(0.0, 0.0); len];
        kernel_hat[0] = Complex64::new(kernel[0], 0.0);
        for (k, &v) in kernel.iter().enumerate().skip(1) {
            kernel_hat[k] = Complex64::new(v, 0.0);
            kernel_hat[len - k] = Complex64::new(v, 0.0);
        }
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        let mut scratch = vec![Complex64::new(0.0, 0.0); scratch_len];
        forward.process_with_scratch(&mut kernel_hat, &mut scratch);
        LineConvolver {
            len,
            forward,
            inverse,
            kernel_hat,
            buffer: vec![Complex64::new(0.0, 0.0); len],
            scratch,
        }
    }

    fn convolve(&mut self, line: &[f64], out: &mut Vec<f64>, step: usize) {
        for (slot, &v) in self.buffer.iter_mut().zip(line) {
            *slot = Complex64::new(v, 0.0);
        }
        for slot in self.buffer[line.len()..].iter_mut() {
            *slot = Complex64::new(0.0, 0.0);
        }
        self.forward
            .process_with_scratch(&mut self.buffer, &mut self.scratch);
        for (b, k) in self.buffer.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.inverse
            .process_with_scratch(&mut self.buffer, &mut self.scratch);
        let scale = 1.0 / self.len as f64;
        out.clear();
        out.extend(
            (0..line.len())
                .step_by(step)
                .map(|i| self.buffer[i].re * scale),
        );
    }
}

/// Convolves every line along `axis` and keeps every `step`-th output.
fn convolve_axis(
    values: &[f64],
    shape: &[usize],
    axis: usize,
    kernel: &[f64],
    step: usize,
) -> Vec<f64> {
    let len = shape[axis];
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let out_len = (len - 1) / step + 1;
    let mut result = vec![0.0; outer * out_len * inner];
    let mut conv = LineConvolver::new(len, kernel);
    let mut line = vec![0.0; len];
    let mut out = Vec::with_capacity(out_len);
    for o in 0..outer {
        for i in 0..inner {
            for (k, slot) in line.iter_mut().enumerate() {
                *slot = values[(o * len + k) * inner + i];
            }
            conv.convolve(&line, &mut out, step);
            for (k, v) in out.iter().enumerate() {
                result[(o * out_len + k) * inner + i] = *v;
            }
        }
    }
    result
}
