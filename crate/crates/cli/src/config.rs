//! Flat `key = value` pipeline configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored.
//! Keys are dotted (`density.bandwidth`, `sr.niterations`). Unknown or
//! repeated keys are rejected. See [`PipelineConfig::to_pairs`] for the
//! full key list with resolved values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use symden::datagen::Dataset;
use symden::density::AxisBounds;
use symden::expr::{format_constant, OperatorSet};
use symden::grid::BoxRegion;
use symden::sr::{LossRegime, SrConfig};

use crate::error::StageError;

/// Where samples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Builtin(Dataset),
    Csv(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Cv,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportMethod {
    LevelSet,
    Hull,
    Full,
}

impl SupportMethod {
    fn name(self) -> &'static str {
        match self {
            SupportMethod::LevelSet => "levelset",
            SupportMethod::Hull => "hull",
            SupportMethod::Full => "full",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringConfig {
    pub enabled: bool,
    pub eps: f64,
    pub min_pts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureConfig {
    pub enabled: bool,
    pub alpha: f64,
    /// Largest conditioning set; `None` means `d - 2`.
    pub max_cond: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityConfig {
    pub bandwidth: Bandwidth,
    pub folds: usize,
    /// Cross-validation runs on at most this many samples.
    pub cv_cap: usize,
    /// Nodes per axis of the density grid; `None` picks by dimension.
    pub grid: Option<usize>,
    /// Known bounds for the reflection correction, one per variable.
    pub bounds: Option<Vec<AxisBounds>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportConfig {
    pub method: SupportMethod,
    /// Level-set threshold; `None` means `1e-3` times the grid maximum.
    pub tau: Option<f64>,
    pub shrink: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrStageConfig {
    pub engine: SrConfig,
    pub loss: LossRegime,
    /// Training cells per axis; `None` picks by dimension.
    pub resolution: Option<usize>,
    /// A previous `pareto.json` whose fronts seed the populations.
    pub warm_start: Option<PathBuf>,
    /// Search in coordinates centred on the sample mean.
    pub center: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationConfig {
    pub regions: Vec<(String, BoxRegion)>,
    /// Cells per axis for integrals; `None` picks by dimension.
    pub resolution: Option<usize>,
    /// Nodes per axis of the residual grid; `None` picks by dimension.
    pub grid: Option<usize>,
    pub clip: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub input: Input,
    /// Sample count drawn from a builtin dataset.
    pub n: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Fraction of samples held out for likelihood and sign checks.
    pub holdout: f64,
    pub clustering: ClusteringConfig,
    pub structure: StructureConfig,
    pub density: DensityConfig,
    pub support: SupportConfig,
    pub sr: SrStageConfig,
    pub validation: ValidationConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: Input::Builtin(Dataset::GaussianMixture),
            n: 10_000,
            seed: 0,
            output_dir: PathBuf::from("out"),
            holdout: 0.2,
            clustering: ClusteringConfig {
                enabled: false,
                eps: 5.0,
                min_pts: 10,
            },
            structure: StructureConfig {
                enabled: false,
                alpha: 0.05,
                max_cond: None,
            },
            density: DensityConfig {
                bandwidth: Bandwidth::Cv,
                folds: 5,
                cv_cap: 3000,
                grid: None,
                bounds: None,
            },
            support: SupportConfig {
                method: SupportMethod::LevelSet,
                tau: None,
                shrink: 1.0,
            },
            sr: SrStageConfig {
                engine: SrConfig::default(),
                loss: LossRegime::Mse,
                resolution: None,
                warm_start: None,
                center: true,
            },
            validation: ValidationConfig {
                regions: Vec::new(),
                resolution: None,
                grid: None,
                clip: 1e-12,
            },
        }
    }
}

/// Raw `key = value` lines with their line numbers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: Vec<(String, String, usize)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, StageError> {
        let mut raw = RawConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = match line.find('#') {
                Some(p) => &line[..p],
                None => line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(config_err(format!(
                    "line {}: expected `key = value`",
                    i + 1
                )));
            };
            raw.set(key.trim(), value.trim(), i + 1)?;
        }
        Ok(raw)
    }

    pub fn from_file(path: &Path) -> Result<Self, StageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<(), StageError> {
        if key.is_empty() {
            return Err(config_err(format!("line {line}: empty key")));
        }
        if self.entries.iter().any(|(k, _, _)| k == key) {
            return Err(config_err(format!("line {line}: `{key}` is set twice")));
        }
        self.entries
            .push((key.to_string(), value.to_string(), line));
        Ok(())
    }

    /// Applies a `key=value` override, replacing any earlier value.
    pub fn set_override(&mut self, assignment: &str) -> Result<(), StageError> {
        let Some((key, value)) = assignment.split_once('=') else {
            return Err(config_err(format!(
                "override `{assignment}` is not `key=value`"
            )));
        };
        let key = key.trim();
        self.entries.retain(|(k, _, _)| k != key);
        self.set(key, value.trim(), 0)
    }
}

fn config_err(message: String) -> StageError {
    StageError::config("config", message)
}

struct Reader {
    values: BTreeMap<String, (String, usize)>,
    order: Vec<String>,
}

impl Reader {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.values.remove(key)
    }

    fn parse<T: std::str::FromStr>(
        &mut self,
        key: &str,
        what: &str,
    ) -> Result<Option<T>, StageError> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| config_err(format!("{}`{key}` must be {what}, got `{v}`", at(line)))),
        }
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64, StageError> {
        Ok(self.parse::<f64>(key, "a number")?.unwrap_or(default))
    }

    fn usize(&mut self, key: &str, default: usize) -> Result<usize, StageError> {
        Ok(self
            .parse::<usize>(key, "a non-negative integer")?
            .unwrap_or(default))
    }

    fn bool(&mut self, key: &str, default: bool) -> Result<bool, StageError> {
        Ok(self.parse::<bool>(key, "true or false")?.unwrap_or(default))
    }

    /// A count that may be `auto`.
    fn auto_usize(&mut self, key: &str) -> Result<Option<usize>, StageError> {
        match self.take(key) {
            None => Ok(None),
            Some((v, _)) if v == "auto" => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|_| {
                config_err(format!(
                    "{}`{key}` must be `auto` or an integer, got `{v}`",
                    at(line)
                ))
            }),
        }
    }
}

fn at(line: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!("line {line}: ")
    }
}

/// Parses `lo:hi` pairs separated by commas; either end of a pair may be
/// empty for an open side.
fn parse_bounds(text: &str) -> Option<Vec<AxisBounds>> {
    text.split(',')
        .map(|pair| {
            let (lo, hi) = pair.split_once(':')?;
            let side = |s: &str| -> Option<Option<f64>> {
                let s = s.trim();
                if s.is_empty() {
                    Some(None)
                } else {
                    s.parse().ok().map(Some)
                }
            };
            Some(AxisBounds {
                lo: side(lo)?,
                hi: side(hi)?,
            })
        })
        .collect()
}

fn parse_box(text: &str) -> Option<BoxRegion> {
    let bounds = parse_bounds(text)?;
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for b in bounds {
        let (a, z) = (b.lo?, b.hi?);
        if !(a < z) {
            return None;
        }
        lo.push(a);
        hi.push(z);
    }
    Some(BoxRegion::new(lo, hi))
}

fn format_bounds(bounds: &[AxisBounds]) -> String {
    let side = |v: Option<f64>| v.map(format_constant).unwrap_or_default();
    bounds
        .iter()
        .map(|b| format!("{}:{}", side(b.lo), side(b.hi)))
        .collect::<Vec<_>>()
        .join(",")
}

fn format_box(b: &BoxRegion) -> String {
    b.lo.iter()
        .zip(&b.hi)
        .map(|(l, h)| format!("{}:{}", format_constant(*l), format_constant(*h)))
        .collect::<Vec<_>>()
        .join(",")
}

fn auto(v: Option<usize>) -> String {
    v.map_or("auto".into(), |v| v.to_string())
}

impl PipelineConfig {
    pub fn from_raw(raw: RawConfig) -> Result<Self, StageError> {
        let mut r = Reader {
            order: raw.entries.iter().map(|(k, _, _)| k.clone()).collect(),
            values: raw
                .entries
                .into_iter()
                .map(|(k, v, line)| (k, (v, line)))
                .collect(),
        };
        let d = PipelineConfig::default();
        let mut c = d.clone();

        if let Some((v, _)) = r.take("input") {
            c.input = match Dataset::from_name(&v) {
                Ok(ds) => Input::Builtin(ds),
                Err(_) => Input::Csv(PathBuf::from(v)),
            };
        }
        c.n = r.usize("n", d.n)?;
        c.seed = r
            .parse::<u64>("seed", "a non-negative integer")?
            .unwrap_or(d.seed);
        if let Some((v, _)) = r.take("output_dir") {
            c.output_dir = PathBuf::from(v);
        }
        c.holdout = r.f64("holdout", d.holdout)?;

        c.clustering.enabled = r.bool("clustering.enabled", false)?;
        c.clustering.eps = r.f64("clustering.eps", d.clustering.eps)?;
        c.clustering.min_pts = r.usize("clustering.min_pts", d.clustering.min_pts)?;

        c.structure.enabled = r.bool("structure.enabled", false)?;
        c.structure.alpha = r.f64("structure.alpha", d.structure.alpha)?;
        c.structure.max_cond = r.auto_usize("structure.max_cond")?;

        if let Some((v, line)) = r.take("density.bandwidth") {
            c.density.bandwidth = if v == "cv" {
                Bandwidth::Cv
            } else {
                Bandwidth::Fixed(v.parse().map_err(|_| {
                    config_err(format!(
                        "{}`density.bandwidth` must be `cv` or a number",
                        at(line)
                    ))
                })?)
            };
        }
        c.density.folds = r.usize("density.folds", d.density.folds)?;
        c.density.cv_cap = r.usize("density.cv_cap", d.density.cv_cap)?;
        c.density.grid = r.auto_usize("density.grid")?;
        if let Some((v, line)) = r.take("density.bounds") {
            if v != "none" {
                c.density.bounds = Some(parse_bounds(&v).ok_or_else(|| {
                    config_err(format!(
                        "{}`density.bounds` must look like `0:1,0:`",
                        at(line)
                    ))
                })?);
            }
        }

        if let Some((v, line)) = r.take("support.method") {
            c.support.method = match v.as_str() {
                "levelset" => SupportMethod::LevelSet,
                "hull" => SupportMethod::Hull,
                "full" => SupportMethod::Full,
                _ => {
                    return Err(config_err(format!(
                        "{}`support.method` must be levelset, hull or full",
                        at(line)
                    )))
                }
            };
        }
        if let Some((v, line)) = r.take("support.tau") {
            if v != "auto" {
                c.support.tau = Some(v.parse().map_err(|_| {
                    config_err(format!(
                        "{}`support.tau` must be `auto` or a number",
                        at(line)
                    ))
                })?);
            }
        }
        c.support.shrink = r.f64("support.shrink", d.support.shrink)?;

        let e = &mut c.sr.engine;
        if let Some((v, line)) = r.take("sr.operators") {
            e.operators = OperatorSet::parse_list(&v)
                .map_err(|m| config_err(format!("{}`sr.operators`: {m}", at(line))))?;
        }
        e.maxsize = r.usize("sr.maxsize", e.maxsize)?;
        e.niterations = r.usize("sr.niterations", e.niterations)?;
        e.ncycles_per_iteration = r.usize("sr.ncycles", e.ncycles_per_iteration)?;
        e.populations = r.usize("sr.populations", e.populations)?;
        e.population_size = r.usize("sr.population_size", e.population_size)?;
        e.parsimony = r.f64("sr.parsimony", e.parsimony)?;
        e.adaptive_parsimony_scaling = r.f64(
            "sr.adaptive_parsimony_scaling",
            e.adaptive_parsimony_scaling,
        )?;
        e.batch_size = r.usize("sr.batch_size", e.batch_size)?;
        e.clip_threshold = r.f64("sr.clip", e.clip_threshold)?;
        e.tournament_size = r.usize("sr.tournament_size", e.tournament_size)?;
        e.crossover_probability = r.f64("sr.crossover_probability", e.crossover_probability)?;
        e.init_maxsize = r.usize("sr.init_maxsize", e.init_maxsize)?;
        e.optimize_probability = r.f64("sr.optimize_probability", e.optimize_probability)?;
        e.optimizer_evaluations = r.usize("sr.optimizer_evaluations", e.optimizer_evaluations)?;
        e.seed = c.seed;
        if let Some((v, line)) = r.take("sr.loss") {
            c.sr.loss = LossRegime::from_name(&v).ok_or_else(|| {
                config_err(format!(
                    "{}`sr.loss` must be one of mse, mse_nll_np, mse_np, nll_np",
                    at(line)
                ))
            })?;
        }
        c.sr.resolution = r.auto_usize("sr.resolution")?;
        c.sr.center = r.bool("sr.center", d.sr.center)?;
        if let Some((v, _)) = r.take("sr.warm_start") {
            if v != "none" {
                c.sr.warm_start = Some(PathBuf::from(v));
            }
        }

        c.validation.resolution = r.auto_usize("validation.resolution")?;
        c.validation.grid = r.auto_usize("validation.grid")?;
        c.validation.clip = r.f64("validation.clip", d.validation.clip)?;
        let region_keys: Vec<String> = r
            .order
            .iter()
            .filter(|k| k.starts_with("validation.region."))
            .cloned()
            .collect();
        for key in region_keys {
            let (v, line) = r.take(&key).expect("key listed in order");
            let name = key["validation.region.".len()..].to_string();
            let b = parse_box(&v).ok_or_else(|| {
                config_err(format!(
                    "{}`{key}` must look like `lo:hi,lo:hi` with lo < hi",
                    at(line)
                ))
            })?;
            c.validation.regions.push((name, b));
        }

        if let Some((key, (_, line))) = r.values.iter().next() {
            return Err(config_err(format!("{}unknown key `{key}`", at(*line))));
        }
        c.check()?;
        Ok(c)
    }

    pub fn parse(text: &str) -> Result<Self, StageError> {
        Self::from_raw(RawConfig::parse(text)?)
    }

    /// The builtin dataset, if the input is one.
    pub fn builtin(&self) -> Option<Dataset> {
        match &self.input {
            Input::Builtin(ds) => Some(*ds),
            Input::Csv(_) => None,
        }
    }

    fn check(&self) -> Result<(), StageError> {
        let fail = |m: &str| Err(config_err(m.to_string()));
        if !(0.0..1.0).contains(&self.holdout) {
            return fail("holdout must lie in [0, 1)");
        }
        if self.n == 0 {
            return fail("n must be positive");
        }
        if self.clustering.enabled && self.structure.enabled {
            return fail("clustering and structure learning cannot both be enabled");
        }
        if !(self.clustering.eps > 0.0) || self.clustering.min_pts == 0 {
            return fail("clustering.eps must be positive and clustering.min_pts at least 1");
        }
        if !(self.structure.alpha > 0.0 && self.structure.alpha < 1.0) {
            return fail("structure.alpha must lie in (0, 1)");
        }
        if let Bandwidth::Fixed(h) = self.density.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return fail("density.bandwidth must be positive");
            }
        }
        if self.density.folds < 2 || self.density.cv_cap < self.density.folds {
            return fail("density.folds must be at least 2 and no larger than density.cv_cap");
        }
        if self.density.grid.is_some_and(|g| g < 2)
            || self.sr.resolution.is_some_and(|g| g < 2)
            || self.validation.resolution.is_some_and(|g| g < 2)
            || self.validation.grid.is_some_and(|g| g < 2)
        {
            return fail("grid sizes and resolutions must be at least 2");
        }
        if !(self.support.shrink > 0.0 && self.support.shrink <= 1.0) {
            return fail("support.shrink must lie in (0, 1]");
        }
        if self.support.tau.is_some_and(|t| !(t >= 0.0)) {
            return fail("support.tau must be non-negative");
        }
        if !(self.validation.clip > 0.0) {
            return fail("validation.clip must be positive");
        }
        if let Some(ds) = self.builtin() {
            if self.support.method == SupportMethod::Hull && ds.dim() != 2 {
                return fail("support.method = hull needs 2-D data");
            }
            if let Some(b) = &self.density.bounds {
                if b.len() != ds.dim() {
                    return fail("density.bounds needs one entry per variable");
                }
            }
            if self
                .validation
                .regions
                .iter()
                .any(|(_, r)| r.dim() != ds.dim())
            {
                return fail("validation regions need one range per variable");
            }
        }
        self.sr
            .engine
            .validate()
            .map_err(|e| config_err(e.to_string()))
    }

    /// Every key with its resolved value, in a fixed order. Parsing these
    /// pairs back yields the same configuration.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let e = &self.sr.engine;
        let num = |v: f64| format_constant(v);
        let fixed: Vec<(&str, String)> = vec![
            (
                "input",
                match &self.input {
                    Input::Builtin(ds) => ds.name().to_string(),
                    Input::Csv(p) => p.display().to_string(),
                },
            ),
            ("n", self.n.to_string()),
            ("seed", self.seed.to_string()),
            ("output_dir", self.output_dir.display().to_string()),
            ("holdout", num(self.holdout)),
            ("clustering.enabled", self.clustering.enabled.to_string()),
            ("clustering.eps", num(self.clustering.eps)),
            ("clustering.min_pts", self.clustering.min_pts.to_string()),
            ("structure.enabled", self.structure.enabled.to_string()),
            ("structure.alpha", num(self.structure.alpha)),
            ("structure.max_cond", auto(self.structure.max_cond)),
            (
                "density.bandwidth",
                match self.density.bandwidth {
                    Bandwidth::Cv => "cv".into(),
                    Bandwidth::Fixed(h) => num(h),
                },
            ),
            ("density.folds", self.density.folds.to_string()),
            ("density.cv_cap", self.density.cv_cap.to_string()),
            ("density.grid", auto(self.density.grid)),
            (
                "density.bounds",
                self.density
                    .bounds
                    .as_deref()
                    .map_or("none".into(), format_bounds),
            ),
            ("support.method", self.support.method.name().into()),
            ("support.tau", self.support.tau.map_or("auto".into(), num)),
            ("support.shrink", num(self.support.shrink)),
            ("sr.operators", e.operators.to_string()),
            ("sr.maxsize", e.maxsize.to_string()),
            ("sr.niterations", e.niterations.to_string()),
            ("sr.ncycles", e.ncycles_per_iteration.to_string()),
            ("sr.populations", e.populations.to_string()),
            ("sr.population_size", e.population_size.to_string()),
            ("sr.parsimony", num(e.parsimony)),
            (
                "sr.adaptive_parsimony_scaling",
                num(e.adaptive_parsimony_scaling),
            ),
            ("sr.batch_size", e.batch_size.to_string()),
            ("sr.clip", num(e.clip_threshold)),
            ("sr.tournament_size", e.tournament_size.to_string()),
            ("sr.crossover_probability", num(e.crossover_probability)),
            ("sr.init_maxsize", e.init_maxsize.to_string()),
            ("sr.optimize_probability", num(e.optimize_probability)),
            (
                "sr.optimizer_evaluations",
                e.optimizer_evaluations.to_string(),
            ),
            ("sr.loss", self.sr.loss.name().into()),
            ("sr.resolution", auto(self.sr.resolution)),
            ("sr.center", self.sr.center.to_string()),
            (
                "sr.warm_start",
                self.sr
                    .warm_start
                    .as_ref()
                    .map_or("none".into(), |p| p.display().to_string()),
            ),
            ("validation.resolution", auto(self.validation.resolution)),
            ("validation.grid", auto(self.validation.grid)),
            ("validation.clip", num(self.validation.clip)),
        ];
        let regions = self
            .validation
            .regions
            .iter()
            .map(|(name, b)| (format!("validation.region.{name}"), format_box(b)));
        fixed
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .chain(regions)
            .collect()
    }

    /// The configuration as config-file text.
    pub fn to_text(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_comments_and_regions() {
        let text = "\
# demo
input = rastrigin   # builtin
n = 500
density.bandwidth = 0.2
density.bounds = -2:2, -2:2
support.method = full
sr.operators = +,-,*,/,cos,pow2
sr.niterations = 3
sr.loss = mse_np
validation.region.A = -1:0, -1:0
validation.region.B = 0:1, 0:1
";
        let c = PipelineConfig::parse(text).unwrap();
        assert_eq!(c.input, Input::Builtin(Dataset::Rastrigin));
        assert_eq!(c.n, 500);
        assert_eq!(c.density.bandwidth, Bandwidth::Fixed(0.2));
        assert_eq!(
            c.density.bounds.as_ref().unwrap()[1],
            AxisBounds::both(-2.0, 2.0)
        );
        assert_eq!(c.support.method, SupportMethod::Full);
        assert_eq!(c.sr.engine.niterations, 3);
        assert_eq!(c.sr.loss, LossRegime::MseNp);
        let names: Vec<&str> = c.validation.regions.iter().map(|r| r.0.as_str()).collect();
        assert_eq!(names, ["A", "B"]);
    }

    #[test]
    fn round_trips_through_text() {
        let mut c = PipelineConfig::default();
        c.density.bounds = Some(vec![AxisBounds::lower(0.0), AxisBounds::both(0.0, 1.0)]);
        c.validation
            .regions
            .push(("A".into(), BoxRegion::new(vec![0.1, 0.2], vec![0.3, 0.4])));
        c.support.tau = Some(1e-4);
        let back = PipelineConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_bad_input() {
        let err = |t: &str| PipelineConfig::parse(t).unwrap_err().to_string();
        assert!(err("n = 3\nn = 4").contains("line 2"));
        assert!(err("bogus = 1").contains("unknown key `bogus`"));
        assert!(err("sr.maxsize = many").contains("sr.maxsize"));
        assert!(err("no equals sign").contains("line 1"));
        assert!(err("clustering.enabled = true\nstructure.enabled = true").contains("both"));
        assert!(err("input = gaussian4d\nsupport.method = hull").contains("2-D"));
    }

    #[test]
    fn overrides_replace_values() {
        let mut raw = RawConfig::parse("seed = 1").unwrap();
        raw.set_override("seed=9").unwrap();
        raw.set_override("sr.niterations = 2").unwrap();
        let c = PipelineConfig::from_raw(raw).unwrap();
        assert_eq!(
            (c.seed, c.sr.engine.seed, c.sr.engine.niterations),
            (9, 9, 2)
        );
    }
}
