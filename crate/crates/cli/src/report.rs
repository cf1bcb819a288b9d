//! Merges the fronts of several runs into one table, labelled by the loss
//! regime each run used.

use std::path::Path;

use symden::expr::format_constant;

use crate::artifacts::{quote, EntryDoc, Manifest, ParetoDoc, MANIFEST, PARETO_JSON};
use crate::error::StageError;
use crate::io::read_json;

pub const REPORT: &str = "report.csv";
pub const REPORT_SUMMARY: &str = "report_summary.csv";

/// The front of one run directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFront {
    /// Loss regime from the manifest, else the directory name.
    pub regime: String,
    pub entries: Vec<(String, EntryDoc)>,
}

pub fn load_run(dir: &Path) -> Result<RunFront, StageError> {
    let doc: ParetoDoc = read_json(&dir.join(PARETO_JSON), "report")?;
    let manifest_path = dir.join(MANIFEST);
    let regime = if manifest_path.exists() {
        let m: Manifest = read_json(&manifest_path, "report")?;
        m.producer(PARETO_JSON)
            .and_then(|r| r.config.get("sr.loss").cloned())
    } else {
        None
    };
    let regime = regime.unwrap_or_else(|| {
        dir.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let mut entries: Vec<(String, EntryDoc)> = doc
        .parts
        .into_iter()
        .flat_map(|p| {
            let name = p.name;
            p.entries.into_iter().map(move |e| (name.clone(), e))
        })
        .collect();
    entries.extend(doc.combined.map(|e| ("combined".to_string(), e)));
    Ok(RunFront { regime, entries })
}

fn optional(v: Option<f64>) -> String {
    v.map(format_constant).unwrap_or_default()
}

/// `regime,part,complexity,mean_log_likelihood,negative,loss,expression`.
pub fn table_csv(runs: &[RunFront]) -> String {
    let mut out =
        String::from("regime,part,complexity,mean_log_likelihood,negative,loss,expression\n");
    for run in runs {
        for (part, e) in &run.entries {
            out.push_str(&format!(
                "{},{part},{},{},{},{},{}\n",
                run.regime,
                e.complexity,
                optional(e.mean_log_likelihood),
                e.negative,
                format_constant(e.loss),
                quote(&e.expression)
            ));
        }
    }
    out
}

/// Best mean log-likelihood of each run and its count of expressions with
/// negative predictions.
pub fn best_log_likelihood(run: &RunFront) -> Option<(f64, usize)> {
    run.entries
        .iter()
        .filter_map(|(_, e)| e.mean_log_likelihood.map(|ll| (ll, e.complexity)))
        .filter(|(ll, _)| ll.is_finite())
        .fold(None, |best: Option<(f64, usize)>, x| match best {
            Some(b) if b.0 >= x.0 => Some(b),
            _ => Some(x),
        })
}

pub fn summary_csv(runs: &[RunFront]) -> String {
    let mut out =
        String::from("regime,entries,best_mean_log_likelihood,best_complexity,negative_count\n");
    for run in runs {
        let best = best_log_likelihood(run);
        let negative = run.entries.iter().filter(|(_, e)| e.negative).count();
        out.push_str(&format!(
            "{},{},{},{},{negative}\n",
            run.regime,
            run.entries.len(),
            optional(best.map(|b| b.0)),
            best.map(|b| b.1.to_string()).unwrap_or_default(),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(c: usize, ll: Option<f64>, negative: bool) -> (String, EntryDoc) {
        (
            "all".into(),
            EntryDoc {
                complexity: c,
                loss: 1.0 / c as f64,
                expression: "x1".into(),
                negative,
                mean_log_likelihood: ll,
                clipped: 0,
            },
        )
    }

    #[test]
    fn summary_picks_the_best_likelihood() {
        let run = RunFront {
            regime: "mse".into(),
            entries: vec![
                entry(1, Some(-2.0), true),
                entry(3, Some(-1.0), false),
                entry(5, None, true),
            ],
        };
        assert_eq!(best_log_likelihood(&run), Some((-1.0, 3)));
        let text = summary_csv(&[run]);
        assert_eq!(text.lines().nth(1), Some("mse,3,-1,3,2"));
    }
}
