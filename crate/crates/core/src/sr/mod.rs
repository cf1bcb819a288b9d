//! Genetic-programming symbolic regression against density labels.
//!
//! Candidates are scored by a weighted sum of grid MSE, sample negative
//! log-likelihood and a penalty on negative predictions. Several
//! populations evolve independently between migrations; a global pareto
//! front keeps the best full-data loss per complexity.

mod evolve;
mod ops;
mod optimize;
mod pareto;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::OperatorSet;
use crate::support::{grid_in_support, SupportError, SupportRegion};
use crate::{Density, Expression};

pub use evolve::{effective_parsimony, evolve, evolve_from, warm_start};
pub use ops::{crossover, mutate, Mutation};
pub use pareto::{pareto_update, FrontEntry, ParetoFront};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SrError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Support(#[from] SupportError),
    #[error("training set: {0}")]
    InvalidTrainingSet(String),
}

/// Weights of the three loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub mse: f64,
    pub nll: f64,
    pub np: f64,
}

impl LossWeights {
    pub const MSE: LossWeights = LossWeights {
        mse: 1.0,
        nll: 0.0,
        np: 0.0,
    };

    pub fn uses_samples(&self) -> bool {
        self.nll > 0.0 || self.np > 0.0
    }
}

/// The four loss configurations compared in the ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossRegime {
    Mse,
    MseNllNp,
    MseNp,
    NllNp,
}

impl LossRegime {
    pub const ALL: [LossRegime; 4] = [
        LossRegime::Mse,
        LossRegime::MseNllNp,
        LossRegime::MseNp,
        LossRegime::NllNp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossRegime::Mse => "mse",
            LossRegime::MseNllNp => "mse_nll_np",
            LossRegime::MseNp => "mse_np",
            LossRegime::NllNp => "nll_np",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        LossRegime::ALL.into_iter().find(|r| r.name() == name)
    }

    /// Default weights. The combined regime divides the MSE term by the
    /// label variance so that both terms start on a comparable scale.
    pub fn weights(self, labels: &[f64]) -> LossWeights {
        match self {
            LossRegime::Mse => LossWeights::MSE,
            LossRegime::MseNllNp => {
                let var = variance(labels);
                LossWeights {
                    mse: if var > 0.0 { 1.0 / var } else { 1.0 },
                    nll: 1.0,
                    np: 1.0,
                }
            }
            LossRegime::MseNp => LossWeights {
                mse: 1.0,
                nll: 0.0,
                np: 1.0,
            },
            LossRegime::NllNp => LossWeights {
                mse: 0.0,
                nll: 1.0,
                np: 1.0,
            },
        }
    }
}

fn variance(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Search settings. Defaults follow the reference hyperparameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrConfig {
    #[serde(with = "operator_set_serde")]
    pub operators: OperatorSet,
    pub maxsize: usize,
    pub niterations: usize,
    pub ncycles_per_iteration: usize,
    pub populations: usize,
    pub population_size: usize,
    pub parsimony: f64,
    pub adaptive_parsimony_scaling: f64,
    pub batch_size: usize,
    pub loss_weights: LossWeights,
    pub clip_threshold: f64,
    pub seed: u64,
    pub tournament_size: usize,
    pub crossover_probability: f64,
    /// Largest tree drawn for initial populations.
    pub init_maxsize: usize,
    /// Chance that a member's constants are refined at the end of an
    /// iteration.
    pub optimize_probability: f64,
    /// Loss evaluations allowed per constant refinement.
    pub optimizer_evaluations: usize,
}

impl Default for SrConfig {
    fn default() -> Self {
        SrConfig {
            operators: OperatorSet::standard(),
            maxsize: 50,
            niterations: 8000,
            ncycles_per_iteration: 380,
            populations: 15,
            population_size: 30,
            parsimony: 0.001,
            adaptive_parsimony_scaling: 1040.0,
            batch_size: 128,
            loss_weights: LossWeights::MSE,
            clip_threshold: 1e-12,
            seed: 0,
            tournament_size: 8,
            crossover_probability: 0.1,
            init_maxsize: 10,
            optimize_probability: 0.14,
            optimizer_evaluations: 60,
        }
    }
}

impl SrConfig {
    pub fn validate(&self) -> Result<(), SrError> {
        let counts = [
            ("maxsize", self.maxsize),
            ("niterations", self.niterations),
            ("ncycles_per_iteration", self.ncycles_per_iteration),
            ("populations", self.populations),
            ("population_size", self.population_size),
            ("batch_size", self.batch_size),
            ("tournament_size", self.tournament_size),
            ("init_maxsize", self.init_maxsize),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(SrError::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        if !(self.parsimony >= 0.0) || !(self.adaptive_parsimony_scaling >= 0.0) {
            return Err(SrError::InvalidConfig(
                "parsimony and its scaling must be non-negative".into(),
            ));
        }
        let w = self.loss_weights;
        if !(w.mse >= 0.0 && w.nll >= 0.0 && w.np >= 0.0) || !(w.mse + w.nll > 0.0) {
            return Err(SrError::InvalidConfig(format!(
                "loss weights {w:?} need non-negative entries and a positive MSE or NLL weight"
            )));
        }
        if !(self.clip_threshold > 0.0) {
            return Err(SrError::InvalidConfig(
                "clip_threshold must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.crossover_probability) {
            return Err(SrError::InvalidConfig(
                "crossover_probability must lie in [0, 1]".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.optimize_probability) {
            return Err(SrError::InvalidConfig(
                "optimize_probability must lie in [0, 1]".into(),
            ));
        }
        if self.operators.binary.is_empty() && self.operators.unary.is_empty() {
            return Err(SrError::InvalidConfig("operator set is empty".into()));
        }
        Ok(())
    }
}

mod operator_set_serde {
    use super::OperatorSet;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ops: &OperatorSet, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&ops.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<OperatorSet, D::Error> {
        let text = String::deserialize(d)?;
        OperatorSet::parse_list(&text).map_err(serde::de::Error::custom)
    }
}

/// Labeled grid points inside a support plus the raw samples.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub grid_points: Array2<f64>,
    pub labels: Vec<f64>,
    pub raw_samples: Array2<f64>,
    pub support: Option<SupportRegion>,
    grid_columns: Vec<Vec<f64>>,
    sample_columns: Vec<Vec<f64>>,
}

fn columns(m: ArrayView2<'_, f64>) -> Vec<Vec<f64>> {
    m.columns().into_iter().map(|c| c.to_vec()).collect()
}

impl TrainingSet {
    pub fn new(
        grid_points: Array2<f64>,
        labels: Vec<f64>,
        raw_samples: Array2<f64>,
        support: Option<SupportRegion>,
    ) -> Result<Self, SrError> {
        if grid_points.nrows() != labels.len() {
            return Err(SrError::InvalidTrainingSet(format!(
                "{} points but {} labels",
                grid_points.nrows(),
                labels.len()
            )));
        }
        if grid_points.nrows() == 0 {
            return Err(SrError::InvalidTrainingSet("no grid points".into()));
        }
        if raw_samples.nrows() > 0 && raw_samples.ncols() != grid_points.ncols() {
            return Err(SrError::InvalidTrainingSet(
                "samples and grid points differ in dimension".into(),
            ));
        }
        if labels.iter().any(|l| !l.is_finite()) {
            return Err(SrError::InvalidTrainingSet("non-finite label".into()));
        }
        Ok(TrainingSet {
            grid_columns: columns(grid_points.view()),
            sample_columns: columns(raw_samples.view()),
            grid_points,
            labels,
            raw_samples,
            support,
        })
    }

    pub fn dim(&self) -> usize {
        self.grid_points.ncols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_count(&self) -> usize {
        self.raw_samples.nrows()
    }
}

/// Labels the support's training grid with `model`.
pub fn build_training_set<D: Density + ?Sized>(
    model: &D,
    support: &SupportRegion,
    resolution: &[usize],
    raw_samples: Array2<f64>,
) -> Result<TrainingSet, SrError> {
    let points = grid_in_support(support, resolution)?;
    let labels = model.density_batch(points.view());
    TrainingSet::new(points, labels, raw_samples, Some(support.clone()))
}

/// Indices into the grid and the sample set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Batch {
    pub grid: Vec<usize>,
    pub samples: Vec<usize>,
}

fn gather(cols: &[Vec<f64>], idx: &[usize]) -> Vec<Vec<f64>> {
    cols.iter()
        .map(|c| idx.iter().map(|&i| c[i]).collect())
        .collect()
}

fn eval_all(e: &Expression, cols: &[Vec<f64>], len: usize) -> Vec<f64> {
    if cols.is_empty() {
        // Zero-dimensional data cannot happen for valid training sets; a
        // constant tree still needs one value per point.
        return vec![e.evaluate(&[]).unwrap_or(f64::NAN); len];
    }
    e.evaluate_columns(cols)
        .unwrap_or_else(|_| vec![f64::NAN; len])
}

fn combine(
    grid_pred: &[f64],
    labels: &[f64],
    sample_pred: &[f64],
    w: &LossWeights,
    clip: f64,
) -> f64 {
    if grid_pred.iter().chain(sample_pred).any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let mut total = 0.0;
    if w.mse > 0.0 && !grid_pred.is_empty() {
        let mse = grid_pred
            .iter()
            .zip(labels)
            .map(|(p, y)| (p - y) * (p - y))
            .sum::<f64>()
            / grid_pred.len() as f64;
        total += w.mse * mse;
    }
    if w.nll > 0.0 && !sample_pred.is_empty() {
        let nll =
            sample_pred.iter().map(|p| -p.max(clip).ln()).sum::<f64>() / sample_pred.len() as f64;
        total += w.nll * nll;
    }
    if w.np > 0.0 {
        let count = grid_pred.len() + sample_pred.len();
        if count > 0 {
            let np = grid_pred
                .iter()
                .chain(sample_pred)
                .map(|p| if *p < 0.0 { p * p } else { 0.0 })
                .sum::<f64>()
                / count as f64;
            total += w.np * np;
        }
    }
    if total.is_finite() {
        total
    } else {
        f64::INFINITY
    }
}

/// Loss on a batch of grid points and samples.
pub fn loss(e: &Expression, t: &TrainingSet, c: &SrConfig, batch: &Batch) -> f64 {
    let w = &c.loss_weights;
    let labels: Vec<f64> = batch.grid.iter().map(|&i| t.labels[i]).collect();
    let grid_pred = eval_all(e, &gather(&t.grid_columns, &batch.grid), batch.grid.len());
    let sample_pred = if w.uses_samples() && !batch.samples.is_empty() {
        eval_all(
            e,
            &gather(&t.sample_columns, &batch.samples),
            batch.samples.len(),
        )
    } else {
        Vec::new()
    };
    combine(&grid_pred, &labels, &sample_pred, w, c.clip_threshold)
}

/// Loss on every grid point and every sample.
pub fn full_loss(e: &Expression, t: &TrainingSet, c: &SrConfig) -> f64 {
    let w = &c.loss_weights;
    let grid_pred = eval_all(e, &t.grid_columns, t.len());
    let sample_pred = if w.uses_samples() && t.sample_count() > 0 {
        eval_all(e, &t.sample_columns, t.sample_count())
    } else {
        Vec::new()
    };
    combine(&grid_pred, &t.labels, &sample_pred, w, c.clip_threshold)
}
