use std::collections::BTreeMap;

use crate::Expression;

/// One front member.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontEntry {
    pub complexity: usize,
    pub loss: f64,
    pub expression: Expression,
}

/// Non-dominated `(complexity, loss)` pairs. Losses strictly decrease as
/// complexity increases.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParetoFront {
    entries: BTreeMap<usize, (f64, Expression)>,
}

impl ParetoFront {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries by ascending complexity.
    pub fn entries(&self) -> Vec<FrontEntry> {
        self.entries
            .iter()
            .map(|(&complexity, (loss, e))| FrontEntry {
                complexity,
                loss: *loss,
                expression: e.clone(),
            })
            .collect()
    }

    pub fn get(&self, complexity: usize) -> Option<(f64, &Expression)> {
        self.entries.get(&complexity).map(|(l, e)| (*l, e))
    }

    /// The lowest-loss entry (always the most complex one).
    pub fn best(&self) -> Option<FrontEntry> {
        self.entries
            .iter()
            .next_back()
            .map(|(&complexity, (loss, e))| FrontEntry {
                complexity,
                loss: *loss,
                expression: e.clone(),
            })
    }

    /// Inserts the candidate unless an entry with no greater complexity and
    /// no greater loss exists; then drops entries it dominates. Returns
    /// whether the candidate was inserted.
    pub fn insert(&mut self, complexity: usize, loss: f64, expression: Expression) -> bool {
        if !loss.is_finite() {
            return false;
        }
        let dominated = self
            .entries
            .range(..=complexity)
            .any(|(_, (l, _))| *l <= loss);
        if dominated {
            return false;
        }
        let stale: Vec<usize> = self
            .entries
            .range(complexity..)
            .filter(|(_, (l, _))| *l >= loss)
            .map(|(&k, _)| k)
            .collect();
        for k in stale {
            self.entries.remove(&k);
        }
        self.entries.insert(complexity, (loss, expression));
        true
    }

    pub fn from_entries(entries: impl IntoIterator<Item = FrontEntry>) -> Self {
        let mut front = ParetoFront::new();
        for e in entries {
            front.insert(e.complexity, e.loss, e.expression);
        }
        front
    }
}

/// Functional form of [`ParetoFront::insert`].
pub fn pareto_update(mut front: ParetoFront, candidate: (usize, f64, Expression)) -> ParetoFront {
    front.insert(candidate.0, candidate.1, candidate.2);
    front
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(text: &str) -> Expression {
        Expression::parse(text, 2).unwrap()
    }

    #[test]
    fn insertion_rules() {
        let f = pareto_update(ParetoFront::new(), (3, 1.0, e("x1 + x2")));
        assert_eq!(f.len(), 1);
        let f = pareto_update(f, (5, 2.0, e("x1 * x2 + 1")));
        assert_eq!(f.len(), 1);
        let f = pareto_update(f, (3, 0.5, e("x1 - x2")));
        assert_eq!(f.get(3).unwrap().1, &e("x1 - x2"));
        let f = pareto_update(f, (1, 0.7, e("x1")));
        let f = pareto_update(f, (7, 0.1, e("x1 * x2 * 2")));
        assert_eq!(f.len(), 3);
        // A simpler, better candidate evicts everything it dominates.
        let f = pareto_update(f, (2, 0.4, e("square(x1)")));
        let ks: Vec<usize> = f.entries().iter().map(|x| x.complexity).collect();
        assert_eq!(ks, vec![1, 2, 7]);
        assert_eq!(f.best().unwrap().complexity, 7);
    }

    #[test]
    fn ties_keep_the_incumbent() {
        let f = pareto_update(ParetoFront::new(), (3, 1.0, e("x1 + x2")));
        let f = pareto_update(f, (3, 1.0, e("x2 + x1")));
        assert_eq!(f.get(3).unwrap().1, &e("x1 + x2"));
        let f = pareto_update(f, (3, f64::NAN, e("x1")));
        assert_eq!(f.len(), 1);
    }
}
