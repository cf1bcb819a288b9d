//! Subcommands. Each reads its inputs from and writes its outputs to one
//! output directory, and records itself in the run manifest.

use std::path::{Path, PathBuf};

use ndarray::s;

use symden::datagen::Dataset;
use symden::sr::TrainingSet;
use symden::Expression;

use crate::artifacts::*;
use crate::config::PipelineConfig;
use crate::error::{AtStage, StageError};
use crate::io::{read_json, read_matrix, write_json, write_text};
use crate::pipeline::{
    self, find_support, fit_density, load_problem, run_pipeline, run_sr, score_front, streams,
    surrogate, validate_model, warm_entries, Decomposition, DensityFit, Problem, Supported,
};
use crate::report;

/// Sampling from a builtin dataset.
pub fn gen_data(dataset: &str, n: usize, seed: u64, out: &Path) -> Result<(), StageError> {
    let ds = Dataset::from_name(dataset).at_stage("gen-data")?;
    let samples = ds.sample(n, seed).at_stage("gen-data")?;
    let mut text = Vec::new();
    samples.write_csv(&mut text).at_stage("gen-data")?;
    write_text(out, &String::from_utf8_lossy(&text), "gen-data")
}

fn dir_of(c: &PipelineConfig) -> &Path {
    &c.output_dir
}

fn all_ones(problem: &Problem) -> Vec<usize> {
    vec![1; problem.samples.len()]
}

/// Reads `density.json` and the values of `density_grid.csv`.
fn read_density(path: &Path, grid_path: &Path) -> Result<DensityFit, StageError> {
    let mut fit: DensityFit = read_json(path, "density")?;
    let (_, table) = read_matrix(grid_path, "density")?;
    if table.nrows() != fit.grid.len() || table.ncols() != fit.grid.dim() + 1 {
        return Err(StageError::data(
            "density",
            format!("{} does not match {}", grid_path.display(), path.display()),
        ));
    }
    fit.values = table.column(fit.grid.dim()).to_vec();
    Ok(fit)
}

pub fn fit_density_stage(c: &PipelineConfig, threads: usize) -> Result<(), StageError> {
    let problem = load_problem(c)?;
    let train = problem.train();
    let (fit, _) = fit_density(train.view(), c, c.density.bounds.as_deref(), 0)?;
    let dir = dir_of(c);
    write_json(&dir.join(DENSITY), &fit, "density")?;
    write_text(
        &dir.join(DENSITY_GRID),
        &density_grid_csv(&fit, problem.names()),
        "density",
    )?;
    write_text(
        &dir.join(LABELS),
        &labels_csv(&problem, &all_ones(&problem)),
        "density",
    )?;
    record_stage(
        dir,
        StageRecord::new("fit-density", c, threads, &[DENSITY, DENSITY_GRID, LABELS]),
    )
}

pub fn find_support_stage(
    c: &PipelineConfig,
    density: Option<&Path>,
    threads: usize,
) -> Result<(), StageError> {
    let dir = dir_of(c);
    let problem = load_problem(c)?;
    let train = problem.train();
    let json = density
        .map(Path::to_path_buf)
        .unwrap_or_else(|| dir.join(DENSITY));
    let fit = read_density(&json, &json.with_file_name(DENSITY_GRID))?;
    let model = surrogate(train.view(), fit.bandwidth, fit.bounds.as_deref())?;
    let support = find_support(&fit, train.view(), c)?;
    let t = pipeline::training_set(&model, &support, train.view(), c)?;
    write_json(
        &dir.join(SUPPORT),
        &SupportDoc {
            parts: vec![SupportPart {
                name: "all".into(),
                region: support,
            }],
        },
        "support",
    )?;
    write_text(
        &dir.join(TRAINING),
        &training_csv(&t.grid_points, &t.labels, problem.names()),
        "support",
    )?;
    write_text(
        &dir.join(COMPONENTS),
        &components_text(problem.dim())?,
        "support",
    )?;
    record_stage(
        dir,
        StageRecord::new("find-support", c, threads, &[SUPPORT, TRAINING, COMPONENTS]),
    )
}

fn components_text(d: usize) -> Result<String, StageError> {
    let mut text = serde_json::to_string_pretty(&ComponentsDoc::none(d)).at_stage("support")?;
    text.push('\n');
    Ok(text)
}

fn read_support(dir: &Path, name: &str) -> Result<symden::support::SupportRegion, StageError> {
    let path = dir.join(SUPPORT);
    let doc: SupportDoc = read_json(&path, "support")?;
    doc.part(name).cloned().ok_or_else(|| {
        StageError::data(
            "support",
            format!("{} has no part `{name}`", path.display()),
        )
    })
}

pub fn run_sr_stage(
    c: &PipelineConfig,
    labels: Option<&Path>,
    threads: usize,
) -> Result<(), StageError> {
    let dir = dir_of(c);
    let problem = load_problem(c)?;
    let d = problem.dim();
    let path = labels
        .map(Path::to_path_buf)
        .unwrap_or_else(|| dir.join(TRAINING));
    let (_, table) = read_matrix(&path, "sr")?;
    if table.ncols() != d + 1 {
        return Err(StageError::data(
            "sr",
            format!(
                "{}: expected {} columns, found {}",
                path.display(),
                d + 1,
                table.ncols()
            ),
        ));
    }
    let points = table.slice(s![.., ..d]).to_owned();
    let values = table.column(d).to_vec();
    let support = read_support(dir, "all")?;
    let t =
        TrainingSet::new(points, values, problem.train(), Some(support.clone())).at_stage("sr")?;
    let warm = warm_entries(c, "all", d)?;
    let front = run_sr(
        &t,
        &c.sr,
        symden::seed::derive(c.seed, streams::SR),
        warm.as_deref(),
    )?;
    let holdout = problem.holdout_samples();
    let entries = score_front(&front, holdout.view(), &support, c);
    let doc = ParetoDoc {
        parts: vec![PartDoc {
            name: "all".into(),
            variables: (1..=d).collect(),
            weight: 1.0,
            train_samples: t.sample_count(),
            holdout_samples: holdout.nrows(),
            entries: entries.iter().map(EntryDoc::from).collect(),
        }],
        combined: None,
    };
    write_json(&dir.join(PARETO_JSON), &doc, "sr")?;
    write_text(&dir.join(PARETO_CSV), &doc.to_csv(), "sr")?;
    record_stage(
        dir,
        StageRecord::new("run-sr", c, threads, &[PARETO_JSON, PARETO_CSV]),
    )
}

/// The final model recorded in a pareto document: the combined model if
/// present, else the best entry of part `all`.
fn final_expression(doc: &ParetoDoc, d: usize) -> Result<Expression, StageError> {
    let entry = match &doc.combined {
        Some(e) => Some(e),
        None => doc
            .parts
            .iter()
            .find(|p| p.name == "all")
            .and_then(|p| p.entries.last()),
    };
    let entry =
        entry.ok_or_else(|| StageError::data("validate", "pareto.json has no final model"))?;
    Expression::parse(&entry.expression, d).at_stage("validate")
}

pub fn validate_stage(c: &PipelineConfig, threads: usize) -> Result<(), StageError> {
    let dir = dir_of(c);
    let problem = load_problem(c)?;
    let d = problem.dim();
    let doc: ParetoDoc = read_json(&dir.join(PARETO_JSON), "validate")?;
    let expr = final_expression(&doc, d)?;
    let support = read_support(dir, "all")?;
    let fit = read_density(&dir.join(DENSITY), &dir.join(DENSITY_GRID))?;
    let kde = surrogate(problem.train().view(), fit.bandwidth, fit.bounds.as_deref())?;
    let model = Supported {
        inner: expr.clone(),
        support,
    };
    let v = validate_model(&problem, &fit.grid, &kde, &model, c)?;
    let summary = SummaryDoc {
        final_expression: expr.to_string(),
        final_complexity: expr.complexity(),
        reference: v.reference_name.clone(),
        mse: v.mse,
        kde_mse: v.kde_mse,
        max_abs_residual: v.max_abs_residual,
        max_prediction: v.max_prediction,
        parts: Vec::new(),
        combined: doc.combined.clone(),
        mass: v.mass.clone(),
    };
    let artifacts = write_validation(dir, &problem, &v, &summary)?;
    record_stage(dir, StageRecord::new("validate", c, threads, &artifacts))
}

fn write_validation(
    dir: &Path,
    problem: &Problem,
    v: &pipeline::Validation,
    summary: &SummaryDoc,
) -> Result<Vec<&'static str>, StageError> {
    write_text(
        &dir.join(RESIDUAL_GRID),
        &residual_csv(v, problem.names()),
        "validate",
    )?;
    write_json(&dir.join(SUMMARY), summary, "validate")?;
    let mut artifacts = vec![RESIDUAL_GRID, SUMMARY];
    if let Some(mass) = &v.mass {
        write_text(&dir.join(MASS_REPORT), &mass.to_csv(), "validate")?;
        artifacts.push(MASS_REPORT);
    }
    Ok(artifacts)
}

/// The whole pipeline in one process.
pub fn run_stage(c: &PipelineConfig, threads: usize) -> Result<pipeline::RunResult, StageError> {
    let r = run_pipeline(c)?;
    let dir = dir_of(c);
    let problem = &r.problem;
    let names = problem.names();

    let (clusters, components) = match &r.decomposition {
        Decomposition::Clusters { train, holdout } => {
            let mut labels = vec![0; problem.samples.len()];
            for (row, l) in problem.train_rows().into_iter().zip(&train.labels) {
                labels[row] = l.map_or(0, |k| k + 1);
            }
            for (row, l) in problem.holdout_rows().into_iter().zip(holdout) {
                labels[row] = l.map_or(0, |k| k + 1);
            }
            (
                labels,
                ComponentsDoc::clusters(problem.dim(), train.k, train.noise_count()),
            )
        }
        Decomposition::Blocks(g) => (all_ones(problem), ComponentsDoc::structure(g)),
        Decomposition::None => (all_ones(problem), ComponentsDoc::none(problem.dim())),
    };
    write_text(&dir.join(LABELS), &labels_csv(problem, &clusters), "run")?;
    write_json(&dir.join(COMPONENTS), &components, "run")?;
    write_json(&dir.join(DENSITY), &r.whole.fit, "run")?;
    write_text(
        &dir.join(DENSITY_GRID),
        &density_grid_csv(&r.whole.fit, names),
        "run",
    )?;
    let whole_support = SupportPart {
        name: "all".into(),
        region: r.whole.support.clone(),
    };
    let mut supports = vec![whole_support];
    for p in r.parts.iter().filter(|p| p.name != "all") {
        supports.push(SupportPart {
            name: p.name.clone(),
            region: p.support.clone(),
        });
    }
    write_json(&dir.join(SUPPORT), &SupportDoc { parts: supports }, "run")?;
    write_text(
        &dir.join(TRAINING),
        &training_csv(
            &r.whole.training.grid_points,
            &r.whole.training.labels,
            names,
        ),
        "run",
    )?;
    let doc = ParetoDoc::new(&r.parts, r.combined.as_ref());
    write_json(&dir.join(PARETO_JSON), &doc, "run")?;
    write_text(&dir.join(PARETO_CSV), &doc.to_csv(), "run")?;
    let summary = SummaryDoc {
        final_expression: r.final_expression.to_string(),
        final_complexity: r.final_expression.complexity(),
        reference: r.validation.reference_name.clone(),
        mse: r.validation.mse,
        kde_mse: r.validation.kde_mse,
        max_abs_residual: r.validation.max_abs_residual,
        max_prediction: r.validation.max_prediction,
        parts: r.parts.iter().map(PartSummary::from).collect(),
        combined: doc.combined.clone(),
        mass: r.validation.mass.clone(),
    };
    let mut artifacts = vec![
        LABELS,
        COMPONENTS,
        DENSITY,
        DENSITY_GRID,
        SUPPORT,
        TRAINING,
        PARETO_JSON,
        PARETO_CSV,
    ];
    artifacts.extend(write_validation(dir, problem, &r.validation, &summary)?);
    record_stage(dir, StageRecord::new("run", c, threads, &artifacts))?;
    Ok(r)
}

pub fn report_stage(inputs: &[PathBuf], out: &Path) -> Result<(), StageError> {
    let runs = inputs
        .iter()
        .map(|dir| report::load_run(dir))
        .collect::<Result<Vec<_>, _>>()?;
    write_text(
        &out.join(report::REPORT),
        &report::table_csv(&runs),
        "report",
    )?;
    write_text(
        &out.join(report::REPORT_SUMMARY),
        &report::summary_csv(&runs),
        "report",
    )
}
