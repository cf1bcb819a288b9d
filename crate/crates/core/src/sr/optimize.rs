use argmin::core::{CostFunction, Error, Executor, State};
use argmin::solver::neldermead::NelderMead;

use super::{loss, Batch, SrConfig, TrainingSet};
use crate::Expression;

struct ConstantCost<'a> {
    expr: &'a Expression,
    t: &'a TrainingSet,
    c: &'a SrConfig,
    batch: &'a Batch,
}

impl CostFunction for ConstantCost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> Result<f64, Error> {
        let l = loss(&self.expr.with_constants(p), self.t, self.c, self.batch);
        Ok(if l.is_finite() { l } else { f64::INFINITY })
    }
}

/// Nelder-Mead refinement of the constants of `e` on `batch`, within
/// `c.optimizer_evaluations` iterations. Returns `None` for expressions
/// without constants or when no improvement was found.
pub(crate) fn optimize_constants(
    e: &Expression,
    t: &TrainingSet,
    c: &SrConfig,
    batch: &Batch,
) -> Option<Expression> {
    let x0 = e.constants();
    if x0.is_empty() || c.optimizer_evaluations == 0 {
        return None;
    }
    let cost = ConstantCost {
        expr: e,
        t,
        c,
        batch,
    };
    let start = cost.cost(&x0).ok()?;
    let mut simplex = vec![x0.clone()];
    for i in 0..x0.len() {
        let mut v = x0.clone();
        v[i] = if v[i] == 0.0 { 0.1 } else { v[i] * 1.5 };
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex).with_sd_tolerance(1e-12).ok()?;
    let result = Executor::new(cost, solver)
        .configure(|s| s.max_iters(c.optimizer_evaluations as u64))
        .run()
        .ok()?;
    let state = result.state();
    let best = state.get_best_param()?;
    (state.get_best_cost() < start && best.iter().all(|v| v.is_finite()))
        .then(|| e.with_constants(best))
}
