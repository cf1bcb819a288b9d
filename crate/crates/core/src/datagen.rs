//! Ground-truth densities and samplers.
//!
//! Every builtin dataset exposes its exact density (normalized over
//! [`Dataset::domain`]) and a seeded sampler. Samplers draw from a single
//! ChaCha stream per call, so output depends only on `(n, seed)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{BoxRegion, GridSpec};
use crate::samples::SampleSet;
use crate::{seed, Density};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatagenError {
    #[error("covariance is not symmetric positive definite")]
    NonPdCovariance,
    #[error("weights must be non-negative and sum to 1, got {0:?}")]
    InvalidWeights(Vec<f64>),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("sample count must be at least 1")]
    EmptyRequest,
    #[error("denominator {0:e} is too close to zero")]
    PoleHit(f64),
    #[error("envelope {envelope} is below the density value {seen} found on the check grid")]
    EnvelopeTooSmall { envelope: f64, seen: f64 },
    #[error("rejection sampler accepted only {accepted} of {attempts} proposals")]
    RejectionStalled { accepted: usize, attempts: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),
}

/// Parameters of a Gaussian mixture sharing one covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub means: Vec<Vec<f64>>,
    pub cov: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl GaussianSpec {
    /// Two modes at (-4, 4) and (4, -4), unit variances, correlation 0.8.
    pub fn two_modes() -> Self {
        GaussianSpec {
            means: vec![vec![-4.0, 4.0], vec![4.0, -4.0]],
            cov: vec![vec![1.0, 0.8], vec![0.8, 1.0]],
            weights: vec![0.5, 0.5],
        }
    }

    /// Single component with the given mean and the shared covariance.
    pub fn single(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> Self {
        GaussianSpec {
            means: vec![mean],
            cov,
            weights: vec![1.0],
        }
    }

    pub fn dim(&self) -> usize {
        self.cov.len()
    }
}

/// A validated mixture with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    spec: GaussianSpec,
    chol: DMatrix<f64>,
    log_norm: f64,
}

impl GaussianMixture {
    pub fn new(spec: GaussianSpec) -> Result<Self, DatagenError> {
        let d = spec.dim();
        if d == 0 || spec.cov.iter().any(|r| r.len() != d) {
            return Err(DatagenError::NonPdCovariance);
        }
        for m in &spec.means {
            if m.len() != d {
                return Err(DatagenError::DimensionMismatch {
                    expected: d,
                    found: m.len(),
                });
            }
        }
        let total: f64 = spec.weights.iter().sum();
        if spec.weights.len() != spec.means.len()
            || spec.weights.iter().any(|w| !(*w >= 0.0))
            || (total - 1.0).abs() > 1e-9
        {
            return Err(DatagenError::InvalidWeights(spec.weights.clone()));
        }
        let cov = DMatrix::from_fn(d, d, |i, j| spec.cov[i][j]);
        if (0..d).any(|i| (0..i).any(|j| (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12)) {
            return Err(DatagenError::NonPdCovariance);
        }
        let chol = cov.cholesky().ok_or(DatagenError::NonPdCovariance)?.l();
        let log_det: f64 = (0..d).map(|i| 2.0 * chol[(i, i)].ln()).sum();
        let log_norm = -0.5 * (d as f64 * (2.0 * PI).ln() + log_det);
        Ok(GaussianMixture {
            spec,
            chol,
            log_norm,
        })
    }

    pub fn spec(&self) -> &GaussianSpec {
        &self.spec
    }

    /// Draws `n` points: a component by weight, then `mu + L z`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleSet, DatagenError> {
        if n == 0 {
            return Err(DatagenError::EmptyRequest);
        }
        let d = self.spec.dim();
        let mut rng = seed::rng(seed);
        let mut out = Array2::zeros((n, d));
        let mut z = vec![0.0; d];
        for mut row in out.rows_mut() {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut k = self.spec.weights.len() - 1;
            for (i, w) in self.spec.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    k = i;
                    break;
                }
            }
            for slot in z.iter_mut() {
                *slot = rng.sample(StandardNormal);
            }
            for i in 0..d {
                let lz: f64 = (0..=i).map(|j| self.chol[(i, j)] * z[j]).sum();
                row[i] = self.spec.means[k][i] + lz;
            }
        }
        Ok(SampleSet::new(out))
    }
}

impl Density for GaussianMixture {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn density(&self, x: &[f64]) -> f64 {
        let d = self.spec.dim();
        if x.len() != d {
            return f64::NAN;
        }
        self.spec
            .means
            .iter()
            .zip(&self.spec.weights)
            .map(|(mu, w)| {
                let diff = DVector::from_iterator(d, x.iter().zip(mu).map(|(a, b)| a - b));
                let y = self
                    .chol
                    .solve_lower_triangular(&diff)
                    .expect("Cholesky factor has a positive diagonal");
                w * (self.log_norm - 0.5 * y.norm_squared()).exp()
            })
            .sum()
    }
}

pub fn gaussian_mixture_density(spec: &GaussianSpec, x: &[f64]) -> Result<f64, DatagenError> {
    let m = GaussianMixture::new(spec.clone())?;
    if x.len() != m.dim() {
        return Err(DatagenError::DimensionMismatch {
            expected: m.dim(),
            found: x.len(),
        });
    }
    Ok(m.density(x))
}

pub fn sample_gaussian_mixture(
    spec: &GaussianSpec,
    n: usize,
    seed: u64,
) -> Result<SampleSet, DatagenError> {
    GaussianMixture::new(spec.clone())?.sample(n, seed)
}

/// Product of two 2-D Gaussians: `N(x1, x2 | mu1, S) * N(x3, x4 | mu2, S)`.
#[derive(Debug, Clone)]
pub struct Gaussian4d {
    blocks: [GaussianMixture; 2],
}

impl Gaussian4d {
    pub fn new() -> Self {
        let base = GaussianSpec::two_modes();
        let block = |k: usize| {
            GaussianMixture::new(GaussianSpec::single(
                base.means[k].clone(),
                base.cov.clone(),
            ))
            .expect("fixed parameters are valid")
        };
        Gaussian4d {
            blocks: [block(0), block(1)],
        }
    }

    /// The two 2-D factors, for `(x1, x2)` and `(x3, x4)`.
    pub fn blocks(&self) -> &[GaussianMixture; 2] {
        &self.blocks
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleSet, DatagenError> {
        if n == 0 {
            return Err(DatagenError::EmptyRequest);
        }
        let a = self.blocks[0].sample(n, seed::derive(seed, 0))?;
        let b = self.blocks[1].sample(n, seed::derive(seed, 1))?;
        let data = ndarray::concatenate(ndarray::Axis(1), &[a.data.view(), b.data.view()])
            .expect("equal row counts");
        Ok(SampleSet::new(data))
    }
}

impl Default for Gaussian4d {
    fn default() -> Self {
        Self::new()
    }
}

impl Density for Gaussian4d {
    fn dim(&self) -> usize {
        4
    }

    fn density(&self, x: &[f64]) -> f64 {
        if x.len() != 4 {
            return f64::NAN;
        }
        self.blocks[0].density(&x[..2]) * self.blocks[1].density(&x[2..])
    }
}

pub fn gaussian4d_density(x: &[f64]) -> f64 {
    Gaussian4d::new().density(x)
}

pub fn sample_gaussian4d(n: usize, seed: u64) -> Result<SampleSet, DatagenError> {
    Gaussian4d::new().sample(n, seed)
}

pub const RASTRIGIN_NORM: f64 = 586.67;

/// Biased Rastrigin density on `[-2, 2]^2`, zero outside.
#[derive(Debug, Clone, Copy, Default)]
pub struct Rastrigin;

impl Rastrigin {
    pub fn domain() -> BoxRegion {
        BoxRegion::new(vec![-2.0, -2.0], vec![2.0, 2.0])
    }
}

impl Density for Rastrigin {
    fn dim(&self) -> usize {
        2
    }

    fn density(&self, x: &[f64]) -> f64 {
        rastrigin_density(x)
    }
}

pub fn rastrigin_density(x: &[f64]) -> f64 {
    if x.len() != 2 || x.iter().any(|v| !(-2.0..=2.0).contains(v)) {
        return 0.0;
    }
    let body: f64 = x
        .iter()
        .map(|v| 10.0 * v * v - 5.0 * (3.0 * PI * v - 6.1).cos())
        .sum();
    (10.0 + body) / RASTRIGIN_NORM
}

/// Particle masses in GeV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuonMasses {
    pub m_mu: f64,
    pub m_e: f64,
    pub m_w: f64,
}

impl Default for MuonMasses {
    fn default() -> Self {
        MuonMasses {
            m_mu: 78.0,
            m_e: 70.0,
            m_w: 80.4,
        }
    }
}

/// Unnormalized decay ratio in the invariant masses squared.
pub fn muon_decay_density(
    m13sq: f64,
    m23sq: f64,
    masses: &MuonMasses,
) -> Result<f64, DatagenError> {
    let mu2 = masses.m_mu * masses.m_mu;
    let e2 = masses.m_e * masses.m_e;
    let w2 = masses.m_w * masses.m_w;
    let denom = m13sq + m23sq - e2 - mu2 + w2;
    if denom.abs() < 1e-9 {
        return Err(DatagenError::PoleHit(denom));
    }
    Ok((m23sq - mu2) * (m23sq - e2) / (denom * denom))
}

/// Decay density in min-max scaled coordinates on the unit square.
///
/// The physical box is `m13^2 in [0, (m_mu - m_e)^2]` and
/// `m23^2 in [m_e^2, m_mu^2]`. The ratio is non-positive there (its
/// numerator changes sign only at the box edges), so the density is its
/// negation, normalized numerically over the unit square.
#[derive(Debug, Clone)]
pub struct MuonDecay {
    masses: MuonMasses,
    physical: BoxRegion,
    norm: f64,
}

impl MuonDecay {
    pub fn new(masses: MuonMasses) -> Result<Self, DatagenError> {
        if !(masses.m_mu > 0.0 && masses.m_e > 0.0 && masses.m_w > 0.0) {
            return Err(DatagenError::InvalidParameter(
                "masses must be positive".into(),
            ));
        }
        if masses.m_mu <= masses.m_e {
            return Err(DatagenError::InvalidParameter(
                "m_mu must exceed m_e".into(),
            ));
        }
        let gap = masses.m_mu - masses.m_e;
        let physical = BoxRegion::new(
            vec![0.0, masses.m_e * masses.m_e],
            vec![gap * gap, masses.m_mu * masses.m_mu],
        );
        let mut out = MuonDecay {
            masses,
            physical,
            norm: 1.0,
        };
        let res = 512;
        let unit = BoxRegion::new(vec![0.0, 0.0], vec![1.0, 1.0]);
        let centers = unit.cell_centers(&[res, res]);
        let mut total = 0.0;
        for row in centers.rows() {
            total += out.unnormalized(row[0], row[1])?;
        }
        out.norm = total * unit.cell_volume(&[res, res]);
        Ok(out)
    }

    pub fn masses(&self) -> &MuonMasses {
        &self.masses
    }

    /// Physical `(m13^2, m23^2)` box mapped onto the unit square.
    pub fn physical_box(&self) -> &BoxRegion {
        &self.physical
    }

    pub fn to_physical(&self, u: &[f64]) -> [f64; 2] {
        let p = &self.physical;
        [
            p.lo[0] + u[0] * (p.hi[0] - p.lo[0]),
            p.lo[1] + u[1] * (p.hi[1] - p.lo[1]),
        ]
    }

    fn unnormalized(&self, u1: f64, u2: f64) -> Result<f64, DatagenError> {
        let [a, b] = self.to_physical(&[u1, u2]);
        Ok(-muon_decay_density(a, b, &self.masses)?)
    }

    pub fn normalizer(&self) -> f64 {
        self.norm
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleSet, DatagenError> {
        let unit = BoxRegion::new(vec![0.0, 0.0], vec![1.0, 1.0]);
        let envelope = 1.1 * grid_max(self, &unit)?;
        Ok(rejection_sample(self, &unit, n, seed, envelope)?.samples)
    }
}

impl Density for MuonDecay {
    fn dim(&self) -> usize {
        2
    }

    fn density(&self, x: &[f64]) -> f64 {
        if x.len() != 2 || x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return 0.0;
        }
        self.unnormalized(x[0], x[1]).unwrap_or(f64::NAN) / self.norm
    }
}

/// Truncated power law times truncated exponential on the unit square:
/// `f(x) = A (x1 + offset)^(-exponent) * B exp(-rate x2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeavyTailed {
    pub offset: f64,
    pub exponent: f64,
    pub rate: f64,
}

impl Default for HeavyTailed {
    fn default() -> Self {
        HeavyTailed {
            offset: 0.1,
            exponent: 2.0,
            rate: 3.0,
        }
    }
}

impl HeavyTailed {
    pub fn validate(&self) -> Result<(), DatagenError> {
        if !(self.offset > 0.0 && self.exponent > 0.0 && self.rate > 0.0) {
            return Err(DatagenError::InvalidParameter(
                "offset, exponent and rate must be positive".into(),
            ));
        }
        Ok(())
    }

    /// `G(x) = integral of (t + c)^(-a)` from 0 to x.
    fn power_cdf_raw(&self, x: f64) -> f64 {
        let (c, a) = (self.offset, self.exponent);
        if (a - 1.0).abs() < 1e-12 {
            ((x + c) / c).ln()
        } else {
            (c.powf(1.0 - a) - (x + c).powf(1.0 - a)) / (a - 1.0)
        }
    }

    fn power_inverse(&self, g: f64) -> f64 {
        let (c, a) = (self.offset, self.exponent);
        if (a - 1.0).abs() < 1e-12 {
            c * g.exp() - c
        } else {
            (c.powf(1.0 - a) - (a - 1.0) * g).powf(1.0 / (1.0 - a)) - c
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleSet, DatagenError> {
        self.validate()?;
        if n == 0 {
            return Err(DatagenError::EmptyRequest);
        }
        let mut rng = seed::rng(seed);
        let total = self.power_cdf_raw(1.0);
        let tail = 1.0 - (-self.rate).exp();
        let mut out = Array2::zeros((n, 2));
        for mut row in out.rows_mut() {
            let u1: f64 = rng.random();
            let u2: f64 = rng.random();
            row[0] = self.power_inverse(u1 * total).clamp(0.0, 1.0);
            row[1] = (-(1.0 - u2 * tail).ln() / self.rate).clamp(0.0, 1.0);
        }
        Ok(SampleSet::new(out))
    }
}

impl Density for HeavyTailed {
    fn dim(&self) -> usize {
        2
    }

    fn density(&self, x: &[f64]) -> f64 {
        if x.len() != 2 || x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return 0.0;
        }
        let p = (x[0] + self.offset).powf(-self.exponent) / self.power_cdf_raw(1.0);
        let e = self.rate * (-self.rate * x[1]).exp() / (1.0 - (-self.rate).exp());
        p * e
    }
}

/// Result of [`rejection_sample`].
#[derive(Debug, Clone)]
pub struct RejectionOutput {
    pub samples: SampleSet,
    pub acceptance_rate: f64,
}

fn check_grid(region: &BoxRegion) -> GridSpec {
    let d = region.dim().max(1);
    let count = ((1usize << 18) as f64)
        .powf(1.0 / d as f64)
        .floor()
        .max(2.0) as usize;
    GridSpec::uniform(&region.lo, &region.hi, count).expect("non-degenerate box")
}

/// Largest density on the envelope check grid of `region`.
pub fn grid_max<D: Density + ?Sized>(density: &D, region: &BoxRegion) -> Result<f64, DatagenError> {
    let values = density.density_batch(check_grid(region).nodes().view());
    let mut best = 0.0f64;
    for v in values {
        if !v.is_finite() {
            return Err(DatagenError::InvalidParameter(format!(
                "density is not finite on the check grid ({v})"
            )));
        }
        best = best.max(v);
    }
    Ok(best)
}

/// Accept/reject with uniform proposals on `region` under the constant
/// envelope `envelope`.
pub fn rejection_sample<D: Density + ?Sized>(
    density: &D,
    region: &BoxRegion,
    n: usize,
    seed: u64,
    envelope: f64,
) -> Result<RejectionOutput, DatagenError> {
    if n == 0 {
        return Err(DatagenError::EmptyRequest);
    }
    if density.dim() != region.dim() {
        return Err(DatagenError::DimensionMismatch {
            expected: region.dim(),
            found: density.dim(),
        });
    }
    let seen = grid_max(density, region)?;
    if !(envelope >= seen) {
        return Err(DatagenError::EnvelopeTooSmall { envelope, seen });
    }
    let d = region.dim();
    let mut rng = seed::rng(seed);
    let mut out = Array2::zeros((n, d));
    let mut x = vec![0.0; d];
    let mut accepted = 0;
    let mut attempts = 0;
    let limit = n.saturating_mul(10_000).max(1_000_000);
    while accepted < n {
        if attempts >= limit {
            return Err(DatagenError::RejectionStalled { accepted, attempts });
        }
        attempts += 1;
        for (j, slot) in x.iter_mut().enumerate() {
            let u: f64 = rng.random();
            *slot = region.lo[j] + u * (region.hi[j] - region.lo[j]);
        }
        let u: f64 = rng.random();
        if u * envelope < density.density(&x) {
            for (j, v) in x.iter().enumerate() {
                out[[accepted, j]] = *v;
            }
            accepted += 1;
        }
    }
    Ok(RejectionOutput {
        samples: SampleSet::new(out),
        acceptance_rate: accepted as f64 / attempts as f64,
    })
}

/// Builtin datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dataset {
    GaussianMixture,
    Gaussian4d,
    Rastrigin,
    MuonDecay,
    HeavyTailed,
}

impl Dataset {
    pub const ALL: [Dataset; 5] = [
        Dataset::GaussianMixture,
        Dataset::Gaussian4d,
        Dataset::Rastrigin,
        Dataset::MuonDecay,
        Dataset::HeavyTailed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Dataset::GaussianMixture => "gaussian_mixture",
            Dataset::Gaussian4d => "gaussian4d",
            Dataset::Rastrigin => "rastrigin",
            Dataset::MuonDecay => "muon_decay",
            Dataset::HeavyTailed => "heavy_tailed",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, DatagenError> {
        Dataset::ALL
            .into_iter()
            .find(|d| d.name() == name)
            .ok_or_else(|| DatagenError::UnknownDataset(name.to_string()))
    }

    pub fn dim(self) -> usize {
        match self {
            Dataset::Gaussian4d => 4,
            _ => 2,
        }
    }

    /// Box on which the truth integrates to one (up to Gaussian tails).
    pub fn domain(self) -> BoxRegion {
        match self {
            Dataset::GaussianMixture => BoxRegion::new(vec![-10.0; 2], vec![10.0; 2]),
            Dataset::Gaussian4d => BoxRegion::new(vec![-10.0; 4], vec![10.0; 4]),
            Dataset::Rastrigin => Rastrigin::domain(),
            Dataset::MuonDecay | Dataset::HeavyTailed => BoxRegion::new(vec![0.0; 2], vec![1.0; 2]),
        }
    }

    pub fn truth(self) -> Box<dyn Density + Send> {
        match self {
            Dataset::GaussianMixture => {
                Box::new(GaussianMixture::new(GaussianSpec::two_modes()).expect("valid parameters"))
            }
            Dataset::Gaussian4d => Box::new(Gaussian4d::new()),
            Dataset::Rastrigin => Box::new(Rastrigin),
            Dataset::MuonDecay => {
                Box::new(MuonDecay::new(MuonMasses::default()).expect("valid masses"))
            }
            Dataset::HeavyTailed => Box::new(HeavyTailed::default()),
        }
    }

    pub fn sample(self, n: usize, seed: u64) -> Result<SampleSet, DatagenError> {
        match self {
            Dataset::GaussianMixture => {
                sample_gaussian_mixture(&GaussianSpec::two_modes(), n, seed)
            }
            Dataset::Gaussian4d => sample_gaussian4d(n, seed),
            Dataset::Rastrigin => {
                let region = Rastrigin::domain();
                let envelope = 1.05 * grid_max(&Rastrigin, &region)?;
                Ok(rejection_sample(&Rastrigin, &region, n, seed, envelope)?.samples)
            }
            Dataset::MuonDecay => MuonDecay::new(MuonMasses::default())?.sample(n, seed),
            Dataset::HeavyTailed => HeavyTailed::default().sample(n, seed),
        }
    }
}
