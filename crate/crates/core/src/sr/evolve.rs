//! Multi-population steady-state evolution.
//!
//! Each iteration runs `ncycles_per_iteration` cycles in every population:
//! tournament selection, mutation or crossover, simplification, scoring on
//! a fresh random batch, and replacement of the oldest member. At the end
//! of an iteration a random subset of members gets its constants refined
//! by Nelder-Mead on a batch, every member is rescored on the full data, the members
//! and the best child seen at each complexity are offered to the global
//! front (populations in index order), and the best member of each
//! population replaces the worst of the next one.
//!
//! Every population draws from its own generator seeded by
//! `(seed, iteration, population)`, so results do not depend on the number
//! of worker threads.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rayon::prelude::*;

use super::ops::{crossover, mutate};
use super::optimize::optimize_constants;
use super::{full_loss, loss, Batch, ParetoFront, SrConfig, SrError, TrainingSet};
use crate::expr::random_expression;
use crate::{seed, Expression};

/// Per-complexity penalty `parsimony * (1 + scaling * freq(k))`, where
/// `freq(k)` is the fraction of `histogram` at complexity `k`. The result
/// has the same length as `histogram`.
pub fn effective_parsimony(histogram: &[usize], c: &SrConfig) -> Vec<f64> {
    let total: usize = histogram.iter().sum();
    histogram
        .iter()
        .map(|&count| {
            let freq = if total > 0 {
                count as f64 / total as f64
            } else {
                0.0
            };
            c.parsimony * (1.0 + c.adaptive_parsimony_scaling * freq)
        })
        .collect()
}

/// Initial populations: the front's entries by ascending complexity (at
/// most `population_size` of them), then random trees to fill.
pub fn warm_start(front: &ParetoFront, c: &SrConfig, var_count: usize) -> Vec<Vec<Expression>> {
    let seeds: Vec<Expression> = front
        .entries()
        .into_iter()
        .filter(|e| e.expression.var_count() == var_count)
        .take(c.population_size)
        .map(|e| e.expression)
        .collect();
    (0..c.populations)
        .map(|p| {
            let mut rng = seed::child_rng(seed::derive(c.seed, 0), p as u64);
            let mut pop = seeds.clone();
            while pop.len() < c.population_size {
                let init = c.init_maxsize.min(c.maxsize);
                pop.push(random_expression(var_count, init, &c.operators, &mut rng).simplify());
            }
            pop
        })
        .collect()
}

#[derive(Debug, Clone)]
struct Member {
    expr: Expression,
    complexity: usize,
    loss: f64,
    fitness: f64,
    birth: u64,
}

struct Scorer<'a> {
    t: &'a TrainingSet,
    c: &'a SrConfig,
    baseline: f64,
    log_scale: bool,
}

impl Scorer<'_> {
    /// Loss on a log scale relative to the baseline when the loss cannot be
    /// negative, and the raw loss otherwise.
    fn scaled(&self, loss: f64) -> f64 {
        if self.log_scale {
            (loss / self.baseline).max(1e-30).ln()
        } else {
            loss
        }
    }

    fn fitness(&self, loss: f64, complexity: usize, penalties: &[f64]) -> f64 {
        let p = penalties
            .get(complexity)
            .copied()
            .unwrap_or(self.c.parsimony);
        self.scaled(loss) + p * complexity as f64
    }

    fn batch<R: Rng>(&self, rng: &mut R) -> Batch {
        let m = self.t.len();
        let size = self.c.batch_size;
        let grid = if m <= size {
            (0..m).collect()
        } else {
            (0..size).map(|_| rng.random_range(0..m)).collect()
        };
        let n = self.t.sample_count();
        let samples = if !self.c.loss_weights.uses_samples() || n == 0 {
            Vec::new()
        } else if n <= size {
            (0..n).collect()
        } else {
            (0..size).map(|_| rng.random_range(0..n)).collect()
        };
        Batch { grid, samples }
    }
}

struct Population {
    members: Vec<Member>,
    cache: HashMap<Expression, f64>,
    clock: u64,
    /// Best child per complexity during the current iteration, by batch loss.
    hall: BTreeMap<usize, (f64, Expression)>,
}

const CACHE_LIMIT: usize = 50_000;

impl Population {
    fn new(init: Vec<Expression>, s: &Scorer<'_>) -> Self {
        let mut pop = Population {
            members: Vec::with_capacity(init.len()),
            cache: HashMap::new(),
            clock: 0,
            hall: BTreeMap::new(),
        };
        for expr in init {
            let loss = pop.full(&expr, s);
            pop.members.push(Member {
                complexity: expr.complexity(),
                expr,
                loss,
                fitness: f64::INFINITY,
                birth: pop.clock,
            });
            pop.clock += 1;
        }
        pop.refresh_fitness(s);
        pop
    }

    fn full(&mut self, e: &Expression, s: &Scorer<'_>) -> f64 {
        if let Some(v) = self.cache.get(e) {
            return *v;
        }
        if self.cache.len() >= CACHE_LIMIT {
            self.cache.clear();
        }
        let v = full_loss(e, s.t, s.c);
        self.cache.insert(e.clone(), v);
        v
    }

    fn histogram(&self, maxsize: usize) -> Vec<usize> {
        let mut h = vec![0; maxsize + 1];
        for m in &self.members {
            h[m.complexity.min(maxsize)] += 1;
        }
        h
    }

    fn refresh_fitness(&mut self, s: &Scorer<'_>) {
        let penalties = effective_parsimony(&self.histogram(s.c.maxsize), s.c);
        for m in self.members.iter_mut() {
            m.fitness = s.fitness(m.loss, m.complexity, &penalties);
        }
    }

    fn tournament<R: Rng>(&self, size: usize, rng: &mut R) -> usize {
        let mut best = rng.random_range(0..self.members.len());
        for _ in 1..size {
            let k = rng.random_range(0..self.members.len());
            if self.members[k].fitness < self.members[best].fitness {
                best = k;
            }
        }
        best
    }

    fn oldest(&self) -> usize {
        (0..self.members.len())
            .min_by_key(|&i| self.members[i].birth)
            .expect("population is not empty")
    }

    fn best(&self) -> usize {
        (0..self.members.len())
            .min_by(|&a, &b| self.members[a].fitness.total_cmp(&self.members[b].fitness))
            .expect("population is not empty")
    }

    fn worst(&self) -> usize {
        (0..self.members.len())
            .max_by(|&a, &b| self.members[a].fitness.total_cmp(&self.members[b].fitness))
            .expect("population is not empty")
    }

    fn run_iteration<R: Rng>(&mut self, s: &Scorer<'_>, rng: &mut R) {
        let c = s.c;
        self.hall.clear();
        let penalties = effective_parsimony(&self.histogram(c.maxsize), c);
        for _ in 0..c.ncycles_per_iteration {
            let children = if self.members.len() >= 2 && rng.random_bool(c.crossover_probability) {
                let a = self.tournament(c.tournament_size, rng);
                let b = self.tournament(c.tournament_size, rng);
                let (x, y) =
                    crossover(&self.members[a].expr, &self.members[b].expr, c.maxsize, rng);
                vec![x, y]
            } else {
                let a = self.tournament(c.tournament_size, rng);
                vec![mutate(&self.members[a].expr, c, rng)]
            };
            for child in children {
                let child = child.simplify();
                let batch = s.batch(rng);
                let l = loss(&child, s.t, c, &batch);
                if !l.is_finite() {
                    continue;
                }
                let complexity = child.complexity();
                let fitness = s.fitness(l, complexity, &penalties);
                match self.hall.get(&complexity) {
                    Some((best, _)) if *best <= l => {}
                    _ => {
                        self.hall.insert(complexity, (l, child.clone()));
                    }
                }
                let slot = self.oldest();
                self.members[slot] = Member {
                    expr: child,
                    complexity,
                    loss: l,
                    fitness,
                    birth: self.clock,
                };
                self.clock += 1;
            }
        }
        // Rescore on the full data so that selection and migration use the
        // same numbers as the front.
        for i in 0..self.members.len() {
            let e = self.members[i].expr.clone();
            self.members[i].loss = self.full(&e, s);
            if rng.random_bool(c.optimize_probability) {
                let batch = s.batch(rng);
                if let Some(better) = optimize_constants(&e, s.t, c, &batch) {
                    let l = self.full(&better, s);
                    if l < self.members[i].loss {
                        self.members[i].expr = better;
                        self.members[i].loss = l;
                    }
                }
            }
        }
        self.refresh_fitness(s);
    }

    /// Members and hall entries with their full-data losses.
    fn candidates(&mut self, s: &Scorer<'_>) -> Vec<(usize, f64, Expression)> {
        let mut out: Vec<(usize, f64, Expression)> = self
            .members
            .iter()
            .map(|m| (m.complexity, m.loss, m.expr.clone()))
            .collect();
        let hall = std::mem::take(&mut self.hall);
        for (k, (_, e)) in hall {
            let l = self.full(&e, s);
            out.push((k, l, e));
        }
        out
    }
}

/// Runs the search from random initial populations.
pub fn evolve(t: &TrainingSet, c: &SrConfig) -> Result<ParetoFront, SrError> {
    evolve_from(t, c, warm_start(&ParetoFront::new(), c, t.dim()))
}

/// Runs the search from the given initial populations (see
/// [`warm_start`]). Every initial member is offered to the front first.
pub fn evolve_from(
    t: &TrainingSet,
    c: &SrConfig,
    init: Vec<Vec<Expression>>,
) -> Result<ParetoFront, SrError> {
    c.validate()?;
    if init.len() != c.populations || init.iter().any(|p| p.is_empty()) {
        return Err(SrError::InvalidConfig(format!(
            "expected {} non-empty initial populations, got {}",
            c.populations,
            init.len()
        )));
    }
    if init.iter().flatten().any(|e| e.var_count() != t.dim()) {
        return Err(SrError::InvalidConfig(
            "initial expressions do not match the data dimension".into(),
        ));
    }
    let mean = t.labels.iter().sum::<f64>() / t.len() as f64;
    let baseline = full_loss(&Expression::constant(mean, t.dim()), t, c);
    let log_scale = c.loss_weights.nll == 0.0;
    let scorer = Scorer {
        t,
        c,
        baseline: if baseline > 0.0 && baseline.is_finite() {
            baseline
        } else {
            1.0
        },
        log_scale,
    };

    let mut pops: Vec<Population> = init
        .into_par_iter()
        .map(|members| Population::new(members, &scorer))
        .collect();
    let mut front = ParetoFront::new();
    for pop in &pops {
        for m in &pop.members {
            front.insert(m.complexity, m.loss, m.expr.clone());
        }
    }

    let report_every = (c.niterations / 10).max(1);
    for iter in 0..c.niterations {
        let iter_seed = seed::derive(c.seed, iter as u64 + 1);
        let candidates: Vec<Vec<(usize, f64, Expression)>> = pops
            .par_iter_mut()
            .enumerate()
            .map(|(p, pop)| {
                let mut rng = seed::child_rng(iter_seed, p as u64);
                pop.run_iteration(&scorer, &mut rng);
                pop.candidates(&scorer)
            })
            .collect();
        for list in candidates {
            for (k, l, e) in list {
                front.insert(k, l, e);
            }
        }
        migrate(&mut pops);
        if (iter + 1) % report_every == 0 {
            if let Some(best) = front.best() {
                log::info!(
                    "sr iteration {}/{}: front size {}, best loss {:e} at complexity {}",
                    iter + 1,
                    c.niterations,
                    front.len(),
                    best.loss,
                    best.complexity
                );
            }
        }
    }
    Ok(front)
}

/// Ring migration: a copy of the best member of population `p` replaces
/// the worst member of population `p + 1`.
fn migrate(pops: &mut [Population]) {
    if pops.len() < 2 {
        return;
    }
    let bests: Vec<Member> = pops.iter().map(|p| p.members[p.best()].clone()).collect();
    let n = pops.len();
    for (p, best) in bests.into_iter().enumerate() {
        let target = &mut pops[(p + 1) % n];
        let slot = target.worst();
        target.members[slot] = Member {
            birth: target.clock,
            ..best
        };
        target.clock += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::OperatorSet;
    use crate::sr::LossWeights;
    use ndarray::Array2;

    fn linear_set() -> TrainingSet {
        let pts = Array2::from_shape_fn((41, 1), |(i, _)| i as f64 * 0.05);
        let labels = pts.column(0).iter().map(|x| x + 1.0).collect();
        TrainingSet::new(pts, labels, Array2::zeros((0, 1)), None).unwrap()
    }

    fn small_config() -> SrConfig {
        SrConfig {
            operators: OperatorSet::parse_list("+").unwrap(),
            niterations: 50,
            ncycles_per_iteration: 100,
            populations: 4,
            population_size: 20,
            maxsize: 15,
            seed: 7,
            ..SrConfig::default()
        }
    }

    #[test]
    fn parsimony_formula() {
        let c = SrConfig::default();
        let p = effective_parsimony(&[0, 10, 0], &c);
        assert_eq!(p[0], c.parsimony);
        assert!((p[1] - c.parsimony * (1.0 + c.adaptive_parsimony_scaling)).abs() < 1e-15);
        let zero = SrConfig {
            parsimony: 0.0,
            ..SrConfig::default()
        };
        assert!(effective_parsimony(&[3, 4], &zero)
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn warm_start_fill_rules() {
        let c = SrConfig {
            populations: 2,
            population_size: 3,
            ..SrConfig::default()
        };
        let empty = warm_start(&ParetoFront::new(), &c, 2);
        assert_eq!(empty.len(), 2);
        assert!(empty.iter().all(|p| p.len() == 3));
        let mut front = ParetoFront::new();
        for (k, text) in [
            (1, "x1"),
            (3, "x1 + x2"),
            (5, "x1 * x2 + 1"),
            (7, "x1 * x2 + x1 * 2"),
        ] {
            front.insert(k, 10.0 - k as f64, Expression::parse(text, 2).unwrap());
        }
        let pops = warm_start(&front, &c, 2);
        let want: Vec<Expression> = front
            .entries()
            .into_iter()
            .take(3)
            .map(|e| e.expression)
            .collect();
        assert_eq!(pops[0], want);
        assert_eq!(pops[1], want);
    }

    #[test]
    fn recovers_linear_target() {
        let t = linear_set();
        let front = evolve(&t, &small_config()).unwrap();
        let best = front.best().unwrap();
        assert!(best.loss < 1e-6, "{} {}", best.expression, best.loss);
    }

    #[test]
    fn front_invariants_and_determinism() {
        let t = linear_set();
        let c = SrConfig {
            niterations: 10,
            ..small_config()
        };
        let a = evolve(&t, &c).unwrap();
        let b = evolve(&t, &c).unwrap();
        assert_eq!(a, b);
        let entries = a.entries();
        for w in entries.windows(2) {
            assert!(w[0].complexity < w[1].complexity);
            assert!(w[0].loss > w[1].loss);
        }
        for e in &entries {
            assert_eq!(full_loss(&e.expression, &t, &c), e.loss);
        }
    }

    #[test]
    fn refinement_never_worsens() {
        let t = linear_set();
        let c = SrConfig {
            niterations: 5,
            operators: OperatorSet::standard(),
            loss_weights: LossWeights::MSE,
            ..small_config()
        };
        let first = evolve(&t, &c).unwrap();
        let again = evolve_from(&t, &c, warm_start(&first, &c, 1)).unwrap();
        assert!(again.best().unwrap().loss <= first.best().unwrap().loss);
    }
}
