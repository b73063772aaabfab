//! Exhaustive receding-horizon search.
//!
//! All `6^H` sequences are scored. Shared prefixes are predicted once by a
//! depth-first walk in lexicographic order; every leaf accumulates its
//! discounted cost with the same operations, in the same order, as
//! [`rollout`], so the two paths agree bit for bit.

use grain_core::terrain::Action;

use crate::rollout::{accumulate, advance, rollout, Advanced, PlanContext, SceneNode};
use crate::PlanError;

/// Number of sequences at `horizon`.
pub fn sequence_count(horizon: usize) -> usize {
    6usize.pow(horizon as u32)
}

/// The `index`-th sequence in lexicographic action order.
pub fn sequence_at(index: usize, horizon: usize) -> Vec<Action> {
    let mut out = vec![Action::ALL[0]; horizon];
    let mut rest = index;
    for slot in out.iter_mut().rev() {
        *slot = Action::ALL[rest % 6];
        rest /= 6;
    }
    out
}

/// Argmin over a lexicographically ordered cost table; the earliest of tied
/// minima wins and NaN never does. `None` if no entry is finite.
pub fn argmin(costs: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &c) in costs.iter().enumerate() {
        if !c.is_finite() {
            continue;
        }
        if best.is_none_or(|(_, b)| c < b) {
            best = Some((i, c));
        }
    }
    best.map(|b| b.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub best_action: Action,
    pub best_sequence: Vec<Action>,
    pub best_cost: f64,
    /// Discounted cost of every sequence, indexed as by [`sequence_at`].
    pub costs: Vec<f64>,
    /// The predicted first step of the best sequence.
    pub first_step: Advanced,
    /// Branches cut short by a decoding failure.
    pub pruned: usize,
}

/// What one planning round produced.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanResult {
    Planned(Box<PlanOutcome>),
    /// Every sequence was pruned.
    NoImprovement {
        costs: Vec<f64>,
    },
}

impl PlanResult {
    pub fn costs(&self) -> &[f64] {
        match self {
            PlanResult::Planned(o) => &o.costs,
            PlanResult::NoImprovement { costs } => costs,
        }
    }

    pub fn outcome(&self) -> Option<&PlanOutcome> {
        match self {
            PlanResult::Planned(o) => Some(o),
            PlanResult::NoImprovement { .. } => None,
        }
    }
}

struct Walk<'a, 'b> {
    ctx: &'b PlanContext<'a>,
    horizon: usize,
    costs: Vec<f64>,
    first: Vec<Option<Advanced>>,
    pruned: usize,
}

impl Walk<'_, '_> {
    fn visit(&mut self, node: &SceneNode, depth: usize, prefix: usize, acc: f64) -> Result<(), PlanError> {
        for (k, &a) in Action::ALL.iter().enumerate() {
            let index = prefix * 6 + k;
            let span = sequence_count(self.horizon - depth - 1);
            match advance(self.ctx, node, a)? {
                Ok(step) => {
                    let acc = accumulate(acc, self.ctx.weights.gamma, depth, step.cost.total);
                    if depth + 1 == self.horizon {
                        self.costs[index] = acc;
                    } else {
                        self.visit(&step.node, depth + 1, index, acc)?;
                    }
                    if depth == 0 {
                        self.first[k] = Some(step);
                    }
                }
                Err(_) => {
                    self.pruned += 1;
                    let start = index * span;
                    self.costs[start..start + span].fill(f64::INFINITY);
                }
            }
        }
        Ok(())
    }
}

/// Scores every sequence from `root` and returns the best first action.
pub fn plan_step(ctx: &PlanContext, root: &SceneNode) -> Result<PlanResult, PlanError> {
    let horizon = ctx.weights.horizon;
    if horizon == 0 {
        return Err(PlanError::Config("horizon must be >= 1".into()));
    }
    let mut walk = Walk {
        ctx,
        horizon,
        costs: vec![f64::INFINITY; sequence_count(horizon)],
        first: vec![None; 6],
        pruned: 0,
    };
    walk.visit(root, 0, 0, 0.0)?;
    let Some(best) = argmin(&walk.costs) else {
        return Ok(PlanResult::NoImprovement { costs: walk.costs });
    };
    let best_sequence = sequence_at(best, horizon);
    let first_step = walk.first[best_sequence[0].index()]
        .take()
        .expect("a finite sequence has a predicted first step");
    Ok(PlanResult::Planned(Box::new(PlanOutcome {
        best_action: best_sequence[0],
        best_cost: walk.costs[best],
        best_sequence,
        costs: walk.costs,
        first_step,
        pruned: walk.pruned,
    })))
}

/// Independent reference: every sequence rolled out from scratch, one at a
/// time. Returns the cost table and its argmin.
pub fn plan_step_reference(ctx: &PlanContext, root: &SceneNode) -> Result<(Vec<f64>, Option<usize>), PlanError> {
    let horizon = ctx.weights.horizon;
    let mut costs = Vec::with_capacity(sequence_count(horizon));
    for i in 0..sequence_count(horizon) {
        costs.push(rollout(ctx, root, &sequence_at(i, horizon))?.cost);
    }
    let best = argmin(&costs);
    Ok((costs, best))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_counts_and_order() {
        assert_eq!(sequence_count(1), 6);
        assert_eq!(sequence_count(4), 1296);
        assert_eq!(sequence_at(0, 2), vec![Action::Lfe, Action::Lfe]);
        assert_eq!(sequence_at(1, 2), vec![Action::Lfe, Action::Rfe]);
        assert_eq!(sequence_at(35, 2), vec![Action::Af, Action::Af]);
        assert_eq!(sequence_at(6, 2), vec![Action::Rfe, Action::Lfe]);
    }

    #[test]
    fn ties_go_to_the_earlier_sequence() {
        assert_eq!(argmin(&[3.0, 1.0, 1.0]), Some(1));
        assert_eq!(argmin(&[f64::NAN, 2.0, f64::INFINITY]), Some(1));
        assert_eq!(argmin(&[f64::INFINITY; 3]), None);
    }
}
