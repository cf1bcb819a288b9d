//! The pipeline stages and their in-memory results.
//!
//! Stages run on a [`Problem`] (all samples plus a seeded train/holdout
//! split). Without decomposition there is a single part named `all`.
//! Clustering splits the training rows into parts `cluster1..`, structure
//! learning splits the variables into parts `block1..`. Every part goes
//! through density estimation, support estimation, symbolic regression and
//! front scoring on its own; the whole problem is always fitted as well so
//! that combined models can be compared against the full-data surrogate.

use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use symden::datagen::Dataset;
use symden::decompose::{
    dbscan, pc_skeleton, recombine_additive, recombine_multiplicative, ClusterLabels,
    DependencyGraph,
};
use symden::density::{
    fft_kde_grid, kde_fit, select_bandwidth, AxisBounds, FftOptions, KdeModel, ReflectedKde,
};
use symden::expr::{BinaryOp, Node};
use symden::grid::{Axis as GridAxis, BoxRegion};
use symden::samples::{default_names, SampleSet};
use symden::sr::{
    build_training_set, evolve, evolve_from, full_loss, warm_start, FrontEntry, ParetoFront,
    TrainingSet,
};
use symden::support::{convex_hull, default_tau, level_set_support, shrink_region, SupportRegion};
use symden::validate::{
    local_mass_report, mean_log_likelihood, normalize_expression, residual_grid, MassReport,
};
use symden::{seed, Density, Expression, GridSpec};

use crate::config::{Bandwidth, Input, PipelineConfig, SrStageConfig, SupportMethod};
use crate::error::{AtStage, StageError};

/// Seed streams derived from the configured seed.
pub mod streams {
    pub const SPLIT: u64 = 1;
    /// Bandwidth selection of part `p` uses `CV + p`.
    pub const CV: u64 = 200;
    /// Symbolic regression of part `p` uses `SR + p`.
    pub const SR: u64 = 100;
}

/// Per-dimension defaults for `auto` sizes, indexed by `d - 1`.
const DENSITY_GRID: [usize; 4] = [512, 128, 40, 20];
const SR_RESOLUTION: [usize; 4] = [200, 50, 16, 12];
const VALIDATION_RESOLUTION: [usize; 4] = [4096, 200, 40, 20];
const RESIDUAL_GRID: [usize; 4] = [1024, 128, 32, 16];

pub fn auto_size(value: Option<usize>, table: [usize; 4], d: usize) -> usize {
    value.unwrap_or(table[d.clamp(1, 4) - 1])
}

/// All samples with a train/holdout split.
#[derive(Debug, Clone)]
pub struct Problem {
    pub samples: SampleSet,
    pub holdout: Vec<bool>,
    pub truth: Option<Dataset>,
}

impl Problem {
    pub fn dim(&self) -> usize {
        self.samples.dim()
    }

    pub fn names(&self) -> &[String] {
        &self.samples.names
    }

    fn rows(&self, holdout: bool) -> Vec<usize> {
        (0..self.samples.len())
            .filter(|&i| self.holdout[i] == holdout)
            .collect()
    }

    pub fn train_rows(&self) -> Vec<usize> {
        self.rows(false)
    }

    pub fn holdout_rows(&self) -> Vec<usize> {
        self.rows(true)
    }

    pub fn train(&self) -> Array2<f64> {
        self.samples.data.select(Axis(0), &self.train_rows())
    }

    pub fn holdout_samples(&self) -> Array2<f64> {
        self.samples.data.select(Axis(0), &self.holdout_rows())
    }
}

/// Marks `round(fraction * n)` rows as held out, chosen by a seeded shuffle.
pub fn split_mask(n: usize, fraction: f64, seed_value: u64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed_value));
    let k = ((fraction * n as f64).round() as usize).min(n.saturating_sub(1));
    let mut mask = vec![false; n];
    for &i in &order[..k] {
        mask[i] = true;
    }
    mask
}

/// Reads or generates the samples named by the configuration.
pub fn load_problem(c: &PipelineConfig) -> Result<Problem, StageError> {
    let (samples, truth) = match &c.input {
        Input::Builtin(ds) => (ds.sample(c.n, c.seed).at_stage("input")?, Some(*ds)),
        Input::Csv(path) => (read_samples(path)?, None),
    };
    let d = samples.dim();
    if d == 0 || d > 4 {
        return Err(StageError::data(
            "input",
            format!("need 1 to 4 columns, found {d}"),
        ));
    }
    if samples.len() < 10 {
        return Err(StageError::data(
            "input",
            format!("need at least 10 samples, found {}", samples.len()),
        ));
    }
    if c.density.bounds.as_ref().is_some_and(|b| b.len() != d) {
        return Err(StageError::config(
            "input",
            format!("density.bounds needs {d} entries"),
        ));
    }
    if c.validation.regions.iter().any(|(_, r)| r.dim() != d) {
        return Err(StageError::config(
            "input",
            format!("validation regions need {d} ranges"),
        ));
    }
    if c.support.method == SupportMethod::Hull && d != 2 {
        return Err(StageError::config(
            "input",
            "support.method = hull needs 2-D data",
        ));
    }
    let holdout = split_mask(
        samples.len(),
        c.holdout,
        seed::derive(c.seed, streams::SPLIT),
    );
    Ok(Problem {
        samples,
        holdout,
        truth,
    })
}

pub fn read_samples(path: &Path) -> Result<SampleSet, StageError> {
    let file = std::fs::File::open(path)
        .map_err(|e| StageError::data("input", format!("cannot open {}: {e}", path.display())))?;
    SampleSet::read_csv(std::io::BufReader::new(file))
        .map_err(|e| StageError::data("input", format!("{}: {e}", path.display())))
}

/// The KDE surrogate, plain or boundary-corrected.
#[derive(Debug, Clone)]
pub enum Surrogate {
    Plain(KdeModel),
    Reflected(ReflectedKde),
}

impl Density for Surrogate {
    fn dim(&self) -> usize {
        match self {
            Surrogate::Plain(m) => m.dim(),
            Surrogate::Reflected(m) => m.dim(),
        }
    }

    fn density(&self, x: &[f64]) -> f64 {
        match self {
            Surrogate::Plain(m) => m.density(x),
            Surrogate::Reflected(m) => m.density(x),
        }
    }

    fn density_batch(&self, points: ArrayView2<'_, f64>) -> Vec<f64> {
        match self {
            Surrogate::Plain(m) => m.density_batch(points),
            Surrogate::Reflected(m) => m.density_batch(points),
        }
    }
}

pub fn surrogate(
    train: ArrayView2<'_, f64>,
    h: f64,
    bounds: Option<&[AxisBounds]>,
) -> Result<Surrogate, StageError> {
    Ok(match bounds {
        Some(b) if b.iter().any(|a| a.lo.is_some() || a.hi.is_some()) => {
            Surrogate::Reflected(ReflectedKde::fit(train, b, h).at_stage("density")?)
        }
        _ => Surrogate::Plain(kde_fit(train, h).at_stage("density")?),
    })
}

/// Bandwidth and surrogate values on a regular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityFit {
    pub bandwidth: f64,
    pub grid: GridSpec,
    pub bounds: Option<Vec<AxisBounds>>,
    #[serde(skip)]
    pub values: Vec<f64>,
}

/// Chooses the bandwidth and evaluates the surrogate on a grid covering
/// the samples plus four bandwidths, clipped to known bounds.
pub fn fit_density(
    train: ArrayView2<'_, f64>,
    c: &PipelineConfig,
    bounds: Option<&[AxisBounds]>,
    part: u64,
) -> Result<(DensityFit, Surrogate), StageError> {
    let d = train.ncols();
    let h = match c.density.bandwidth {
        Bandwidth::Fixed(h) => h,
        Bandwidth::Cv => select_bandwidth(
            train,
            c.density.folds,
            seed::derive(c.seed, streams::CV + part),
            c.density.cv_cap,
        )
        .at_stage("density")?,
    };
    let count = auto_size(c.density.grid, DENSITY_GRID, d);
    let mut axes = Vec::with_capacity(d);
    for (k, col) in train.columns().into_iter().enumerate() {
        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min) - 4.0 * h;
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 4.0 * h;
        let b = bounds.map(|b| b[k]).unwrap_or(AxisBounds::FREE);
        axes.push(GridAxis {
            min: b.lo.map_or(lo, |v| v.max(lo)),
            max: b.hi.map_or(hi, |v| v.min(hi)),
            count,
        });
    }
    let grid = GridSpec::new(axes).at_stage("density")?;
    let model = surrogate(train, h, bounds)?;
    let fine_enough = grid.axes().iter().all(|a| a.spacing() <= h);
    let values = match &model {
        Surrogate::Plain(_) if fine_enough => {
            fft_kde_grid(train, &grid, h, FftOptions::default()).at_stage("density")?
        }
        m => m.density_batch(grid.nodes().view()),
    };
    log::info!("density: bandwidth {h:.6}, grid {count}^{d}");
    Ok((
        DensityFit {
            bandwidth: h,
            grid,
            bounds: bounds.map(<[AxisBounds]>::to_vec),
            values,
        },
        model,
    ))
}

pub fn find_support(
    fit: &DensityFit,
    train: ArrayView2<'_, f64>,
    c: &PipelineConfig,
) -> Result<SupportRegion, StageError> {
    let region = match c.support.method {
        SupportMethod::LevelSet => {
            let tau = c.support.tau.unwrap_or_else(|| default_tau(&fit.values));
            level_set_support(&fit.grid, &fit.values, tau).at_stage("support")?
        }
        SupportMethod::Hull => convex_hull(train).at_stage("support")?,
        SupportMethod::Full => SupportRegion::full(fit.grid.clone()),
    };
    shrink_region(&region, c.support.shrink).at_stage("support")
}

pub fn training_set(
    model: &Surrogate,
    support: &SupportRegion,
    train: ArrayView2<'_, f64>,
    c: &PipelineConfig,
) -> Result<TrainingSet, StageError> {
    let d = train.ncols();
    let res = vec![auto_size(c.sr.resolution, SR_RESOLUTION, d); d];
    build_training_set(model, support, &res, train.to_owned()).at_stage("training")
}

/// Runs the search, seeded from `warm` when given. With centring on, the
/// search runs on coordinates shifted by the sample mean and the front is
/// translated back, simplified and rescored on `t`.
pub fn run_sr(
    t: &TrainingSet,
    stage: &SrStageConfig,
    seed_value: u64,
    warm: Option<&[FrontEntry]>,
) -> Result<ParetoFront, StageError> {
    let mut c = stage.engine.clone();
    c.seed = seed_value;
    c.loss_weights = stage.loss.weights(&t.labels);
    let search = |t: &TrainingSet, warm: Option<Vec<FrontEntry>>| match warm {
        Some(entries) if !entries.is_empty() => {
            let seeds = ParetoFront::from_entries(entries);
            evolve_from(t, &c, warm_start(&seeds, &c, t.dim()))
        }
        _ => evolve(t, &c),
    };
    if !stage.center {
        return search(t, warm.map(<[FrontEntry]>::to_vec)).at_stage("sr");
    }
    let m = center_of(t);
    let back: Vec<f64> = m.iter().map(|v| -v).collect();
    let shift = ndarray::Array1::from(m.clone());
    let centred = TrainingSet::new(
        &t.grid_points - &shift,
        t.labels.clone(),
        &t.raw_samples - &shift,
        None,
    )
    .at_stage("sr")?;
    let warm = warm.map(|w| {
        w.iter()
            .map(|e| FrontEntry {
                expression: translate(&e.expression, &back),
                ..e.clone()
            })
            .collect()
    });
    let front = search(&centred, warm).at_stage("sr")?;
    Ok(ParetoFront::from_entries(front.entries().into_iter().map(
        |e| {
            let expression = translate(&e.expression, &m).simplify();
            FrontEntry {
                complexity: expression.complexity(),
                loss: full_loss(&expression, t, &c),
                expression,
            }
        },
    )))
}

/// Mean of the raw samples, or the label-weighted mean of the grid when
/// there are none.
fn center_of(t: &TrainingSet) -> Vec<f64> {
    if t.sample_count() > 0 {
        return t
            .raw_samples
            .mean_axis(Axis(0))
            .expect("non-empty")
            .to_vec();
    }
    let total: f64 = t.labels.iter().sum();
    if !(total > 0.0) {
        return vec![0.0; t.dim()];
    }
    (0..t.dim())
        .map(|k| {
            t.grid_points
                .column(k)
                .iter()
                .zip(&t.labels)
                .map(|(x, w)| x * w)
                .sum::<f64>()
                / total
        })
        .collect()
}

/// Replaces every variable `x_k` by `x_k - shift_k`.
pub fn translate(e: &Expression, shift: &[f64]) -> Expression {
    fn go(n: &Node, shift: &[f64]) -> Node {
        match n {
            Node::Const(_) => n.clone(),
            Node::Var(k) => match shift[*k] {
                s if s == 0.0 => n.clone(),
                s if s < 0.0 => Node::binary(BinaryOp::Add, n.clone(), Node::constant(-s)),
                s => Node::binary(BinaryOp::Sub, n.clone(), Node::constant(s)),
            },
            Node::Unary(op, a) => Node::unary(*op, go(a, shift)),
            Node::Binary(op, a, b) => Node::binary(*op, go(a, shift), go(b, shift)),
        }
    }
    Expression::new(go(e.root(), shift), e.var_count()).expect("same variables")
}

/// A front entry with its holdout diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredEntry {
    pub complexity: usize,
    pub loss: f64,
    pub expression: Expression,
    /// Some holdout sample gets a negative prediction.
    pub negative: bool,
    /// Mean holdout log-likelihood after normalizing over the support;
    /// `None` when the expression has no positive volume there.
    pub mean_log_likelihood: Option<f64>,
    pub clipped: usize,
}

pub fn score_entry(
    complexity: usize,
    loss: f64,
    expression: Expression,
    holdout: ArrayView2<'_, f64>,
    support: &SupportRegion,
    c: &PipelineConfig,
) -> ScoredEntry {
    let d = expression.var_count();
    let preds = expression.density_batch(holdout);
    let negative = preds.iter().any(|v| *v < 0.0);
    let res = vec![auto_size(c.validation.resolution, VALIDATION_RESOLUTION, d); d];
    let (mean, clipped) = if holdout.nrows() == 0 {
        (None, 0)
    } else {
        match normalize_expression(expression.clone(), support, &res) {
            Ok(norm) => match mean_log_likelihood(&norm, holdout, c.validation.clip) {
                Ok(ll) => (Some(ll.mean), ll.clipped),
                Err(_) => (None, 0),
            },
            Err(_) => (None, 0),
        }
    };
    ScoredEntry {
        complexity,
        loss,
        expression,
        negative,
        mean_log_likelihood: mean,
        clipped,
    }
}

pub fn score_front(
    front: &ParetoFront,
    holdout: ArrayView2<'_, f64>,
    support: &SupportRegion,
    c: &PipelineConfig,
) -> Vec<ScoredEntry> {
    front
        .entries()
        .into_iter()
        .map(|e| score_entry(e.complexity, e.loss, e.expression, holdout, support, c))
        .collect()
}

/// How the problem was split.
#[derive(Debug, Clone, PartialEq)]
pub enum Decomposition {
    None,
    /// Cluster labels of the training rows and of the holdout rows.
    Clusters {
        train: ClusterLabels,
        holdout: Vec<Option<usize>>,
    },
    Blocks(DependencyGraph),
}

/// One independently modelled piece of the problem.
#[derive(Debug, Clone)]
pub struct Part {
    pub name: String,
    /// Variables of the whole problem this part models, 0-based.
    pub variables: Vec<usize>,
    /// Mixture weight (clusters) or 1.
    pub weight: f64,
    pub fit: DensityFit,
    pub support: SupportRegion,
    pub train_count: usize,
    pub holdout_count: usize,
    pub entries: Vec<ScoredEntry>,
}

impl Part {
    /// The lowest-loss entry.
    pub fn best(&self) -> Option<&ScoredEntry> {
        self.entries.last()
    }
}

/// A density that vanishes outside a support region.
#[derive(Debug, Clone)]
pub struct Supported<D> {
    pub inner: D,
    pub support: SupportRegion,
}

impl<D: Density> Density for Supported<D> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn density(&self, x: &[f64]) -> f64 {
        if self.support.contains(x) {
            self.inner.density(x)
        } else {
            0.0
        }
    }
}

/// Everything fitted on the undecomposed problem.
#[derive(Debug, Clone)]
pub struct WholeFit {
    pub fit: DensityFit,
    pub surrogate: Surrogate,
    pub support: SupportRegion,
    pub training: TrainingSet,
}

pub fn fit_whole(problem: &Problem, c: &PipelineConfig) -> Result<WholeFit, StageError> {
    let train = problem.train();
    let (fit, surrogate) = fit_density(train.view(), c, c.density.bounds.as_deref(), 0)?;
    let support = find_support(&fit, train.view(), c)?;
    let training = training_set(&surrogate, &support, train.view(), c)?;
    Ok(WholeFit {
        fit,
        surrogate,
        support,
        training,
    })
}

/// Warm-start entries for a part, read from an earlier `pareto.json`.
pub fn warm_entries(
    c: &PipelineConfig,
    part: &str,
    var_count: usize,
) -> Result<Option<Vec<FrontEntry>>, StageError> {
    let Some(path) = &c.sr.warm_start else {
        return Ok(None);
    };
    let doc: crate::artifacts::ParetoDoc = crate::io::read_json(path, "sr")?;
    let Some(p) = doc.parts.iter().find(|p| p.name == part) else {
        return Ok(None);
    };
    let mut out = Vec::new();
    for e in &p.entries {
        let expression = Expression::parse(&e.expression, var_count)
            .map_err(|err| StageError::data("sr", format!("{}: {err}", path.display())))?;
        out.push(FrontEntry {
            complexity: expression.complexity(),
            loss: e.loss,
            expression,
        });
    }
    Ok(Some(out))
}

fn model_part(
    name: String,
    variables: Vec<usize>,
    weight: f64,
    train: Array2<f64>,
    holdout: Array2<f64>,
    index: u64,
    c: &PipelineConfig,
) -> Result<Part, StageError> {
    let bounds: Option<Vec<AxisBounds>> = c
        .density
        .bounds
        .as_ref()
        .map(|b| variables.iter().map(|&v| b[v]).collect());
    let (fit, model) = fit_density(train.view(), c, bounds.as_deref(), index)?;
    let support = find_support(&fit, train.view(), c)?;
    let t = training_set(&model, &support, train.view(), c)?;
    let warm = warm_entries(c, &name, variables.len())?;
    log::info!(
        "{name}: {} training points, {} samples",
        t.len(),
        train.nrows()
    );
    let front = run_sr(
        &t,
        &c.sr,
        seed::derive(c.seed, streams::SR + index),
        warm.as_deref(),
    )?;
    let entries = score_front(&front, holdout.view(), &support, c);
    Ok(Part {
        name,
        variables,
        weight,
        fit,
        support,
        train_count: train.nrows(),
        holdout_count: holdout.nrows(),
        entries,
    })
}

/// Single part from an already fitted whole problem.
pub fn model_whole(
    problem: &Problem,
    whole: &WholeFit,
    c: &PipelineConfig,
) -> Result<Part, StageError> {
    let warm = warm_entries(c, "all", problem.dim())?;
    let front = run_sr(
        &whole.training,
        &c.sr,
        seed::derive(c.seed, streams::SR),
        warm.as_deref(),
    )?;
    let holdout = problem.holdout_samples();
    Ok(Part {
        name: "all".into(),
        variables: (0..problem.dim()).collect(),
        weight: 1.0,
        fit: whole.fit.clone(),
        support: whole.support.clone(),
        train_count: whole.training.sample_count(),
        holdout_count: holdout.nrows(),
        entries: score_front(&front, holdout.view(), &whole.support, c),
    })
}

/// Cluster of the nearest training sample, if that sample is within `eps`.
fn assign_clusters(
    train: ArrayView2<'_, f64>,
    labels: &ClusterLabels,
    points: ArrayView2<'_, f64>,
    eps: f64,
) -> Vec<Option<usize>> {
    points
        .rows()
        .into_iter()
        .map(|p| {
            let mut best = (f64::INFINITY, None);
            for (row, label) in train.rows().into_iter().zip(&labels.labels) {
                let r2: f64 = row
                    .iter()
                    .zip(p.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if r2 < best.0 {
                    best = (r2, *label);
                }
            }
            if best.0 <= eps * eps {
                best.1
            } else {
                None
            }
        })
        .collect()
}

pub fn decompose(problem: &Problem, c: &PipelineConfig) -> Result<Decomposition, StageError> {
    let train = problem.train();
    if c.clustering.enabled {
        let labels =
            dbscan(train.view(), c.clustering.eps, c.clustering.min_pts).at_stage("clustering")?;
        if labels.k == 0 {
            return Err(StageError::numerical(
                "clustering",
                "DBSCAN found no clusters",
            ));
        }
        log::info!(
            "clustering: {} clusters, {} noise points",
            labels.k,
            labels.noise_count()
        );
        let holdout = assign_clusters(
            train.view(),
            &labels,
            problem.holdout_samples().view(),
            c.clustering.eps,
        );
        Ok(Decomposition::Clusters {
            train: labels,
            holdout,
        })
    } else if c.structure.enabled {
        let graph = pc_skeleton(train.view(), c.structure.alpha, c.structure.max_cond)
            .at_stage("structure")?;
        log::info!("structure: components {:?}", graph.components);
        Ok(Decomposition::Blocks(graph))
    } else {
        Ok(Decomposition::None)
    }
}

/// Models every part of a decomposed problem.
pub fn model_parts(
    problem: &Problem,
    decomposition: &Decomposition,
    c: &PipelineConfig,
) -> Result<Vec<Part>, StageError> {
    let train = problem.train();
    let holdout = problem.holdout_samples();
    match decomposition {
        Decomposition::None => Ok(Vec::new()),
        Decomposition::Clusters {
            train: labels,
            holdout: held,
        } => {
            let clustered = labels.labels.iter().filter(|l| l.is_some()).count();
            (0..labels.k)
                .map(|k| {
                    let rows = labels.members(k);
                    let held_rows: Vec<usize> =
                        (0..held.len()).filter(|&i| held[i] == Some(k)).collect();
                    model_part(
                        format!("cluster{}", k + 1),
                        (0..problem.dim()).collect(),
                        rows.len() as f64 / clustered as f64,
                        train.select(Axis(0), &rows),
                        holdout.select(Axis(0), &held_rows),
                        k as u64,
                        c,
                    )
                })
                .collect()
        }
        Decomposition::Blocks(graph) => graph
            .components
            .iter()
            .enumerate()
            .map(|(k, block)| {
                model_part(
                    format!("block{}", k + 1),
                    block.clone(),
                    1.0,
                    train.select(Axis(1), block),
                    holdout.select(Axis(1), block),
                    k as u64,
                    c,
                )
            })
            .collect(),
    }
}

/// The recombined model of a decomposed problem: its expression and the
/// support-masked density used for validation.
pub fn combine(
    parts: &[Part],
    decomposition: &Decomposition,
    d: usize,
) -> Result<(Expression, Box<dyn Density + Send>), StageError> {
    let best = |p: &Part| -> Result<Expression, StageError> {
        p.best().map(|e| e.expression.clone()).ok_or_else(|| {
            StageError::numerical("combine", format!("{} has an empty front", p.name))
        })
    };
    match decomposition {
        Decomposition::Clusters { .. } => {
            let total: f64 = parts.iter().map(|p| p.weight).sum();
            let mut exprs = Vec::new();
            let mut masked = Vec::new();
            for p in parts {
                let e = best(p)?;
                let w = p.weight / total;
                exprs.push((w, e.clone()));
                masked.push((
                    w,
                    Supported {
                        inner: e,
                        support: p.support.clone(),
                    },
                ));
            }
            let expr = recombine_additive(exprs).at_stage("combine")?.expression();
            let model = recombine_additive(masked).at_stage("combine")?;
            Ok((expr, Box::new(model)))
        }
        Decomposition::Blocks(_) => {
            let mut exprs = Vec::new();
            let mut masked = Vec::new();
            for p in parts {
                let e = best(p)?;
                exprs.push((p.variables.clone(), e.clone()));
                masked.push((
                    p.variables.clone(),
                    Supported {
                        inner: e,
                        support: p.support.clone(),
                    },
                ));
            }
            let expr = recombine_multiplicative(exprs, d)
                .at_stage("combine")?
                .expression();
            let model = recombine_multiplicative(masked, d).at_stage("combine")?;
            Ok((expr, Box::new(model)))
        }
        Decomposition::None => Err(StageError::numerical("combine", "nothing to combine")),
    }
}

/// Validation outputs for the final model.
#[derive(Debug, Clone, Serialize)]
pub struct Validation {
    #[serde(skip)]
    pub grid: GridSpec,
    #[serde(skip)]
    pub prediction: Vec<f64>,
    #[serde(skip)]
    pub reference: Vec<f64>,
    /// `truth` for builtin data, `kde` otherwise.
    pub reference_name: String,
    pub max_abs_residual: f64,
    pub max_prediction: f64,
    /// Mean squared difference to the reference on the residual grid.
    pub mse: f64,
    /// The same for the full-data KDE, when the reference is the truth.
    pub kde_mse: Option<f64>,
    #[serde(skip)]
    pub mass: Option<MassReport>,
}

/// Compares `model` with the truth (or the surrogate) on a grid spanning
/// the density grid, and integrates the configured regions.
pub fn validate_model(
    problem: &Problem,
    density_grid: &GridSpec,
    kde: &Surrogate,
    model: &dyn Density,
    c: &PipelineConfig,
) -> Result<Validation, StageError> {
    let d = problem.dim();
    let count = auto_size(c.validation.grid, RESIDUAL_GRID, d);
    let axes = density_grid
        .axes()
        .iter()
        .map(|a| GridAxis { count, ..*a })
        .collect();
    let grid = GridSpec::new(axes).at_stage("validate")?;
    let truth = problem.truth.map(|ds| ds.truth());
    let (reference_name, reference): (&str, &dyn Density) = match &truth {
        Some(t) => ("truth", t.as_ref()),
        None => ("kde", kde),
    };
    let r = residual_grid(model, reference, &grid);
    let reference_values = reference.density_batch(grid.nodes().view());
    let mse = mean_square(&r.residual);
    let kde_mse = truth.as_ref().map(|t| {
        let k = residual_grid(kde, t.as_ref(), &grid);
        mean_square(&k.residual)
    });
    let mass = if c.validation.regions.is_empty() {
        None
    } else {
        let res = vec![auto_size(c.validation.resolution, VALIDATION_RESOLUTION, d); d];
        let mut models: Vec<(&str, &dyn Density)> = vec![("KDE", kde), ("SR", model)];
        if let Some(t) = &truth {
            models.push(("Truth", t.as_ref()));
        }
        Some(
            local_mass_report(problem.samples.view(), &models, &c.validation.regions, &res)
                .at_stage("validate")?,
        )
    };
    Ok(Validation {
        grid,
        prediction: r.prediction,
        reference: reference_values,
        reference_name: reference_name.into(),
        max_abs_residual: r.max_abs,
        max_prediction: r.max_pred,
        mse,
        kde_mse,
        mass,
    })
}

fn mean_square(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>() / v.len().max(1) as f64
}

/// Result of a monolithic run.
pub struct RunResult {
    pub problem: Problem,
    pub whole: WholeFit,
    pub decomposition: Decomposition,
    pub parts: Vec<Part>,
    /// Recombined model of a decomposed run.
    pub combined: Option<ScoredEntry>,
    /// The expression validated as the final model.
    pub final_expression: Expression,
    pub validation: Validation,
}

/// The final model of an undecomposed run: the lowest-loss entry, zero
/// outside the support.
pub fn single_part_model(part: &Part) -> Result<(Expression, Supported<Expression>), StageError> {
    let best = part
        .best()
        .ok_or_else(|| StageError::numerical("sr", "the pareto front is empty"))?;
    Ok((
        best.expression.clone(),
        Supported {
            inner: best.expression.clone(),
            support: part.support.clone(),
        },
    ))
}

/// Scores a recombined expression against the whole problem.
pub fn score_combined(
    expr: &Expression,
    problem: &Problem,
    whole: &WholeFit,
    c: &PipelineConfig,
) -> ScoredEntry {
    let mut engine = c.sr.engine.clone();
    engine.loss_weights = c.sr.loss.weights(&whole.training.labels);
    let loss = full_loss(expr, &whole.training, &engine);
    score_entry(
        expr.complexity(),
        loss,
        expr.clone(),
        problem.holdout_samples().view(),
        &whole.support,
        c,
    )
}

pub fn run_pipeline(c: &PipelineConfig) -> Result<RunResult, StageError> {
    let problem = load_problem(c)?;
    let whole = fit_whole(&problem, c)?;
    let decomposition = decompose(&problem, c)?;
    let single = match &decomposition {
        Decomposition::None => true,
        Decomposition::Blocks(g) => g.components.len() == 1,
        Decomposition::Clusters { train, .. } => train.k == 1 && train.noise_count() == 0,
    };
    let (parts, combined, final_expression, validation) = if single {
        let part = model_whole(&problem, &whole, c)?;
        let (expr, model) = single_part_model(&part)?;
        let validation = validate_model(&problem, &whole.fit.grid, &whole.surrogate, &model, c)?;
        (vec![part], None, expr, validation)
    } else {
        let parts = model_parts(&problem, &decomposition, c)?;
        let (expr, model) = combine(&parts, &decomposition, problem.dim())?;
        let validation = validate_model(
            &problem,
            &whole.fit.grid,
            &whole.surrogate,
            model.as_ref(),
            c,
        )?;
        let scored = score_combined(&expr, &problem, &whole, c);
        (parts, Some(scored), expr, validation)
    };
    Ok(RunResult {
        problem,
        whole,
        decomposition,
        parts,
        combined,
        final_expression,
        validation,
    })
}

/// Variable names of a part.
pub fn part_names(names: &[String], variables: &[usize]) -> Vec<String> {
    if variables.len() == names.len() {
        names.to_vec()
    } else {
        default_names(variables.len())
    }
}

/// Box around the whole density grid.
pub fn grid_box(grid: &GridSpec) -> BoxRegion {
    BoxRegion::new(
        grid.axes().iter().map(|a| a.min).collect(),
        grid.axes().iter().map(|a| a.max).collect(),
    )
}
