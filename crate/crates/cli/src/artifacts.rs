//! On-disk formats of the pipeline outputs.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use symden::decompose::DependencyGraph;
use symden::expr::format_constant;
use symden::support::SupportRegion;
use symden::validate::MassReport;

use crate::config::PipelineConfig;
use crate::error::StageError;
use crate::io::{header, read_json, table_csv, write_json, write_text};
use crate::pipeline::{DensityFit, Part, Problem, ScoredEntry, Validation};

pub const LABELS: &str = "labels.csv";
pub const COMPONENTS: &str = "components.json";
pub const DENSITY: &str = "density.json";
pub const DENSITY_GRID: &str = "density_grid.csv";
pub const SUPPORT: &str = "support.json";
pub const TRAINING: &str = "training.csv";
pub const PARETO_JSON: &str = "pareto.json";
pub const PARETO_CSV: &str = "pareto.csv";
pub const RESIDUAL_GRID: &str = "residual_grid.csv";
pub const MASS_REPORT: &str = "mass_report.csv";
pub const SUMMARY: &str = "summary.json";
pub const MANIFEST: &str = "run_manifest.json";
pub const ERROR: &str = "error.json";

/// Version of the artifact layout.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryDoc {
    pub complexity: usize,
    /// Non-finite losses are stored as `null` and read back as infinite.
    #[serde(with = "loss_value")]
    pub loss: f64,
    pub expression: String,
    pub negative: bool,
    pub mean_log_likelihood: Option<f64>,
    pub clipped: usize,
}

impl From<&ScoredEntry> for EntryDoc {
    fn from(e: &ScoredEntry) -> Self {
        EntryDoc {
            complexity: e.complexity,
            loss: e.loss,
            expression: e.expression.to_string(),
            negative: e.negative,
            mean_log_likelihood: e.mean_log_likelihood,
            clipped: e.clipped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartDoc {
    pub name: String,
    /// 1-based variable indices.
    pub variables: Vec<usize>,
    pub weight: f64,
    pub train_samples: usize,
    pub holdout_samples: usize,
    pub entries: Vec<EntryDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoDoc {
    pub parts: Vec<PartDoc>,
    /// Recombined model of a decomposed run.
    pub combined: Option<EntryDoc>,
}

impl ParetoDoc {
    pub fn new(parts: &[Part], combined: Option<&ScoredEntry>) -> Self {
        ParetoDoc {
            parts: parts
                .iter()
                .map(|p| PartDoc {
                    name: p.name.clone(),
                    variables: one_based(&p.variables),
                    weight: p.weight,
                    train_samples: p.train_count,
                    holdout_samples: p.holdout_count,
                    entries: p.entries.iter().map(EntryDoc::from).collect(),
                })
                .collect(),
            combined: combined.map(EntryDoc::from),
        }
    }

    /// One row per entry; the combined model is part `combined`.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("part,complexity,loss,expression,negative,mean_log_likelihood,clipped\n");
        let rows = self
            .parts
            .iter()
            .flat_map(|p| p.entries.iter().map(move |e| (p.name.as_str(), e)))
            .chain(self.combined.iter().map(|e| ("combined", e)));
        for (part, e) in rows {
            out.push_str(&format!(
                "{part},{},{},{},{},{},{}\n",
                e.complexity,
                format_constant(e.loss),
                quote(&e.expression),
                e.negative,
                e.mean_log_likelihood
                    .map(format_constant)
                    .unwrap_or_default(),
                e.clipped
            ));
        }
        out
    }
}

mod loss_value {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// CSV field quoting.
pub fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn one_based(v: &[usize]) -> Vec<usize> {
    v.iter().map(|k| k + 1).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentsDoc {
    /// `none`, `clustering` or `structure`.
    pub method: String,
    /// Variable partition, 1-based.
    pub components: Vec<Vec<usize>>,
    /// Skeleton edges of structure learning, 1-based.
    pub edges: Vec<[usize; 2]>,
    pub clusters: Option<usize>,
    pub noise: Option<usize>,
}

impl ComponentsDoc {
    pub fn none(d: usize) -> Self {
        ComponentsDoc {
            method: "none".into(),
            components: vec![(1..=d).collect()],
            edges: Vec::new(),
            clusters: None,
            noise: None,
        }
    }

    pub fn structure(g: &DependencyGraph) -> Self {
        ComponentsDoc {
            method: "structure".into(),
            components: g.components.iter().map(|c| one_based(c)).collect(),
            edges: g.edges.iter().map(|&(i, j)| [i + 1, j + 1]).collect(),
            clusters: None,
            noise: None,
        }
    }

    pub fn clusters(d: usize, k: usize, noise: usize) -> Self {
        ComponentsDoc {
            method: "clustering".into(),
            clusters: Some(k),
            noise: Some(noise),
            ..Self::none(d)
        }
    }
}

/// `row,split,cluster` for every sample; clusters are 1-based, 0 is noise.
pub fn labels_csv(problem: &Problem, clusters: &[usize]) -> String {
    let mut out = String::from("row,split,cluster\n");
    for (i, c) in clusters.iter().enumerate() {
        let split = if problem.holdout[i] {
            "holdout"
        } else {
            "train"
        };
        out.push_str(&format!("{},{split},{c}\n", i + 1));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportPart {
    pub name: String,
    pub region: SupportRegion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportDoc {
    pub parts: Vec<SupportPart>,
}

impl SupportDoc {
    pub fn part(&self, name: &str) -> Option<&SupportRegion> {
        self.parts
            .iter()
            .find(|p| p.name == name)
            .map(|p| &p.region)
    }
}

pub fn density_grid_csv(fit: &DensityFit, names: &[String]) -> String {
    table_csv(
        &header(names, &["density"]),
        fit.grid.nodes().view(),
        &[&fit.values],
    )
}

pub fn training_csv(points: &Array2<f64>, labels: &[f64], names: &[String]) -> String {
    table_csv(&header(names, &["label"]), points.view(), &[labels])
}

pub fn residual_csv(v: &Validation, names: &[String]) -> String {
    let residual: Vec<f64> = v
        .prediction
        .iter()
        .zip(&v.reference)
        .map(|(p, r)| p - r)
        .collect();
    table_csv(
        &header(names, &["prediction", "reference", "residual"]),
        v.grid.nodes().view(),
        &[&v.prediction, &v.reference, &residual],
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartSummary {
    pub name: String,
    pub variables: Vec<usize>,
    pub weight: f64,
    pub bandwidth: f64,
    pub support_size: usize,
    pub best: Option<EntryDoc>,
}

impl From<&Part> for PartSummary {
    fn from(p: &Part) -> Self {
        PartSummary {
            name: p.name.clone(),
            variables: one_based(&p.variables),
            weight: p.weight,
            bandwidth: p.fit.bandwidth,
            support_size: p.support.size(),
            best: p.best().map(EntryDoc::from),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDoc {
    pub final_expression: String,
    pub final_complexity: usize,
    /// `truth` or `kde`.
    pub reference: String,
    pub mse: f64,
    pub kde_mse: Option<f64>,
    pub max_abs_residual: f64,
    pub max_prediction: f64,
    pub parts: Vec<PartSummary>,
    pub combined: Option<EntryDoc>,
    pub mass: Option<MassReport>,
}

/// One command's contribution to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    pub config: BTreeMap<String, String>,
    pub artifacts: Vec<String>,
}

impl StageRecord {
    pub fn new(command: &str, c: &PipelineConfig, threads: usize, artifacts: &[&str]) -> Self {
        StageRecord {
            command: command.into(),
            seed: c.seed,
            threads,
            config: c.to_pairs().into_iter().collect(),
            artifacts: artifacts.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub symden_version: String,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    /// Artifact name to the record that produced it.
    pub fn producer(&self, artifact: &str) -> Option<&StageRecord> {
        self.stages
            .iter()
            .rev()
            .find(|s| s.artifacts.iter().any(|a| a == artifact))
    }
}

/// Adds `record` to the manifest in `dir`, replacing any earlier record of
/// the same command.
pub fn record_stage(dir: &Path, record: StageRecord) -> Result<(), StageError> {
    let path = dir.join(MANIFEST);
    let mut manifest = if path.exists() {
        read_json::<Manifest>(&path, "manifest")?
    } else {
        Manifest {
            format_version: FORMAT_VERSION,
            symden_version: env!("CARGO_PKG_VERSION").into(),
            stages: Vec::new(),
        }
    };
    manifest.stages.retain(|s| s.command != record.command);
    manifest.stages.push(record);
    write_json(&path, &manifest, "manifest")
}

pub fn write_error(dir: &Path, e: &StageError) {
    let _ = write_text(&dir.join(ERROR), &format!("{}\n", e.to_json()), "error");
}
