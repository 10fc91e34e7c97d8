//! Goal sets, probability distributions over goals, and the divergence and
//! combination operators the shaping pipeline is built on.
//!
//! Everything here is an immutable value; all operations are pure functions,
//! so they can be used freely from concurrent executors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest probability any belief entry may carry after flooring. Clamping
/// at this value before any logarithm keeps divergences finite without
/// visibly perturbing gains.
pub const EPS_FLOOR: f64 = 1e-12;

/// Tolerance on the simplex sum constraint.
pub const SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum BeliefError {
    #[error("goal set must contain at least two goals, got {0}")]
    TooFewGoals(usize),
    #[error("duplicate goal identifier `{0}`")]
    DuplicateGoal(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("goal index {index} out of range for {goals} goals")]
    GoalIndexOutOfRange { index: usize, goals: usize },
    #[error("mismatched goal-set sizes: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("weights invalid: {0}")]
    InvalidWeights(String),
    #[error("smoothing epsilon {eps} outside (0, {max}) for {goals} goals")]
    InvalidSmoothing { eps: f64, max: f64, goals: usize },
}

/// Ordered, fixed set of goal identifiers. The ordering is global for the
/// lifetime of a run: index `i` always denotes the same goal, because belief
/// vectors are positional.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalSet {
    goals: Vec<String>,
}

impl GoalSet {
    pub fn new<S: Into<String>>(goals: Vec<S>) -> Result<Self, BeliefError> {
        let goals: Vec<String> = goals.into_iter().map(Into::into).collect();
        if goals.len() < 2 {
            return Err(BeliefError::TooFewGoals(goals.len()));
        }
        for (i, g) in goals.iter().enumerate() {
            if goals[..i].contains(g) {
                return Err(BeliefError::DuplicateGoal(g.clone()));
            }
        }
        Ok(Self { goals })
    }

    pub fn len(&self) -> usize {
        self.goals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.goals.is_empty()
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.goals.get(index).map(String::as_str)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.goals.iter().position(|g| g == label)
    }
}

/// Index of the true goal within a [`GoalSet`], standing in for the one-hot
/// distribution that places all mass on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneHotGoal {
    index: usize,
}

impl OneHotGoal {
    pub fn new(index: usize, goal_count: usize) -> Result<Self, BeliefError> {
        if index >= goal_count {
            return Err(BeliefError::GoalIndexOutOfRange {
                index,
                goals: goal_count,
            });
        }
        Ok(Self { index })
    }

    pub fn index(&self) -> usize {
        self.index
    }
}

/// Point on the probability simplex over a finite goal set.
///
/// Invariants, checked at construction: every entry is non-negative and the
/// entries sum to 1 within [`SUM_TOL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalDistribution {
    probs: Vec<f64>,
}

impl GoalDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, BeliefError> {
        if probs.len() < 2 {
            return Err(BeliefError::TooFewGoals(probs.len()));
        }
        let mut sum = 0.0;
        for &p in &probs {
            if !p.is_finite() || p < 0.0 {
                return Err(BeliefError::InvalidDistribution(format!(
                    "entry {p} is negative or non-finite"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(BeliefError::InvalidDistribution(format!(
                "entries sum to {sum}, expected 1"
            )));
        }
        Ok(Self { probs })
    }

    /// Normalizes an arbitrary non-negative vector onto the simplex.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self, BeliefError> {
        if weights.len() < 2 {
            return Err(BeliefError::TooFewGoals(weights.len()));
        }
        let mut sum = 0.0;
        for &w in &weights {
            if !w.is_finite() || w < 0.0 {
                return Err(BeliefError::InvalidDistribution(format!(
                    "weight {w} is negative or non-finite"
                )));
            }
            sum += w;
        }
        if sum <= 0.0 {
            return Err(BeliefError::InvalidDistribution(
                "weights sum to zero".into(),
            ));
        }
        Ok(Self {
            probs: weights.into_iter().map(|w| w / sum).collect(),
        })
    }

    pub fn one_hot(goal: OneHotGoal, goal_count: usize) -> Result<Self, BeliefError> {
        if goal.index() >= goal_count {
            return Err(BeliefError::GoalIndexOutOfRange {
                index: goal.index(),
                goals: goal_count,
            });
        }
        let mut probs = vec![0.0; goal_count];
        probs[goal.index()] = 1.0;
        Self::new(probs)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, index: usize) -> f64 {
        self.probs[index]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Argmax with ties broken toward the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Argmax, or `None` when the maximum is attained more than once. A tie
    /// carries no commitment, so callers measuring prediction correctness
    /// treat it as incorrect.
    pub fn argmax_strict(&self) -> Option<usize> {
        let best = self.argmax();
        let top = self.probs[best];
        if self.probs.iter().filter(|&&p| p == top).count() == 1 {
            Some(best)
        } else {
            None
        }
    }

    /// Clamps every entry to at least [`EPS_FLOOR`] and renormalizes.
    pub fn floored(&self) -> GoalDistribution {
        let mut probs: Vec<f64> = self.probs.iter().map(|&p| p.max(EPS_FLOOR)).collect();
        let sum: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= sum;
        }
        GoalDistribution { probs }
    }
}

/// Direction and smoothing used when measuring how far a belief sits from a
/// one-hot goal.
///
/// The forward form `D_KL(b || g)` with `g` one-hot diverges whenever `b`
/// puts any mass off-goal, so the default is the reverse form
/// `D_KL(g || b) = -ln b(g*)`, which stays finite and shrinks exactly when
/// the belief concentrates on the true goal. The smoothed forward form is
/// retained for sensitivity studies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DivergenceMode {
    ReverseKl,
    SmoothedForwardKl { epsilon: f64 },
}

impl Default for DivergenceMode {
    fn default() -> Self {
        DivergenceMode::ReverseKl
    }
}

/// Uniform distribution over the goal set; the belief every recognizer
/// starts an episode with.
pub fn uniform(goal_set: &GoalSet) -> Result<GoalDistribution, BeliefError> {
    uniform_over(goal_set.len())
}

/// Uniform distribution over `goal_count` goals.
pub fn uniform_over(goal_count: usize) -> Result<GoalDistribution, BeliefError> {
    if goal_count < 2 {
        return Err(BeliefError::TooFewGoals(goal_count));
    }
    GoalDistribution::new(vec![1.0 / goal_count as f64; goal_count])
}

/// Divergence between a belief and the one-hot distribution on the true
/// goal, together with whether the floor clamp fired.
pub fn divergence_to_goal_flagged(
    belief: &GoalDistribution,
    goal: OneHotGoal,
    mode: DivergenceMode,
) -> Result<(f64, bool), BeliefError> {
    let n = belief.len();
    if goal.index() >= n {
        return Err(BeliefError::GoalIndexOutOfRange {
            index: goal.index(),
            goals: n,
        });
    }
    match mode {
        DivergenceMode::ReverseKl => {
            let p = belief.prob(goal.index());
            let clamped = p < EPS_FLOOR;
            Ok(((-p.max(EPS_FLOOR).ln()).max(0.0), clamped))
        }
        DivergenceMode::SmoothedForwardKl { epsilon } => {
            let max_eps = 0.5 / n as f64;
            if !(epsilon > 0.0 && epsilon < max_eps) {
                return Err(BeliefError::InvalidSmoothing {
                    eps: epsilon,
                    max: max_eps,
                    goals: n,
                });
            }
            let on_goal = 1.0 - epsilon * (n - 1) as f64;
            let mut div = 0.0;
            for (k, &b) in belief.as_slice().iter().enumerate() {
                if b <= 0.0 {
                    continue; // lim x->0 of x ln x is 0
                }
                let target = if k == goal.index() { on_goal } else { epsilon };
                div += b * (b / target).ln();
            }
            Ok((div.max(0.0), false))
        }
    }
}

/// Divergence between a belief and the one-hot distribution on the true
/// goal. Zero exactly when the belief has converged to the goal (up to the
/// smoothing mass under the forward mode).
pub fn divergence_to_goal(
    belief: &GoalDistribution,
    goal: OneHotGoal,
    mode: DivergenceMode,
) -> Result<f64, BeliefError> {
    divergence_to_goal_flagged(belief, goal, mode).map(|(d, _)| d)
}

/// Drop in divergence to the true goal across one belief update: positive
/// exactly when the update moved the observer's belief toward the goal.
pub fn kl_gain(
    before: &GoalDistribution,
    after: &GoalDistribution,
    goal: OneHotGoal,
    mode: DivergenceMode,
) -> Result<f64, BeliefError> {
    if before.len() != after.len() {
        return Err(BeliefError::SizeMismatch {
            expected: before.len(),
            got: after.len(),
        });
    }
    let d_before = divergence_to_goal(before, goal, mode)?;
    let d_after = divergence_to_goal(after, goal, mode)?;
    Ok(d_before - d_after)
}

/// Concatenates per-agent beliefs into one flat vector, in the fixed agent
/// ordering excluding self. Part `j` occupies contiguous slice `j`.
pub fn concat_beliefs(parts: &[GoalDistribution]) -> Result<Vec<f64>, BeliefError> {
    if let Some(first) = parts.first() {
        for p in parts {
            if p.len() != first.len() {
                return Err(BeliefError::SizeMismatch {
                    expected: first.len(),
                    got: p.len(),
                });
            }
        }
    }
    let mut out = Vec::with_capacity(parts.iter().map(GoalDistribution::len).sum());
    for p in parts {
        out.extend_from_slice(p.as_slice());
    }
    Ok(out)
}

/// Weighted mean of the per-observer predictions of one agent's goal,
/// renormalized onto the simplex. With all weights equal this is the plain
/// arithmetic mean.
pub fn aggregate_self_belief(
    per_observer: &[GoalDistribution],
    weights: &[f64],
) -> Result<GoalDistribution, BeliefError> {
    if per_observer.is_empty() {
        return Err(BeliefError::InvalidWeights(
            "no observers to aggregate".into(),
        ));
    }
    if per_observer.len() != weights.len() {
        return Err(BeliefError::InvalidWeights(format!(
            "{} observers but {} weights",
            per_observer.len(),
            weights.len()
        )));
    }
    let n = per_observer[0].len();
    for p in per_observer {
        if p.len() != n {
            return Err(BeliefError::SizeMismatch {
                expected: n,
                got: p.len(),
            });
        }
    }
    let mut weight_sum = 0.0;
    for &w in weights {
        if !w.is_finite() || w < 0.0 {
            return Err(BeliefError::InvalidWeights(format!(
                "weight {w} is negative or non-finite"
            )));
        }
        weight_sum += w;
    }
    if weight_sum <= 0.0 {
        return Err(BeliefError::InvalidWeights("all weights are zero".into()));
    }
    let scale = 1.0 / per_observer.len() as f64;
    let mut acc = vec![0.0; n];
    for (p, &w) in per_observer.iter().zip(weights) {
        for (a, &b) in acc.iter_mut().zip(p.as_slice()) {
            *a += scale * w * b;
        }
    }
    GoalDistribution::from_weights(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist(probs: &[f64]) -> GoalDistribution {
        GoalDistribution::new(probs.to_vec()).unwrap()
    }

    fn goal(i: usize, n: usize) -> OneHotGoal {
        OneHotGoal::new(i, n).unwrap()
    }

    #[test]
    fn uniform_matches_definition() {
        let g4 = GoalSet::new(vec!["A", "B", "C", "D"]).unwrap();
        assert_eq!(uniform(&g4).unwrap().as_slice(), &[0.25, 0.25, 0.25, 0.25]);
        let g2 = GoalSet::new(vec!["A", "B"]).unwrap();
        assert_eq!(uniform(&g2).unwrap().as_slice(), &[0.5, 0.5]);
        let u6 = uniform_over(6).unwrap();
        assert_eq!(u6.len(), 6);
        for &p in u6.as_slice() {
            assert_eq!(p, 1.0 / 6.0);
        }
        assert!((u6.as_slice().iter().sum::<f64>() - 1.0).abs() < SUM_TOL);
    }

    #[test]
    fn uniform_rejects_small_goal_sets() {
        assert!(GoalSet::new(vec!["A"]).is_err());
        assert!(GoalSet::new(Vec::<String>::new()).is_err());
        assert!(uniform_over(1).is_err());
    }

    #[test]
    fn goal_set_rejects_duplicates() {
        assert!(GoalSet::new(vec!["A", "A"]).is_err());
    }

    #[test]
    fn reverse_kl_values() {
        let u = uniform_over(4).unwrap();
        for i in 0..4 {
            let d = divergence_to_goal(&u, goal(i, 4), DivergenceMode::ReverseKl).unwrap();
            assert!((d - 4.0f64.ln()).abs() < 1e-12, "got {d}");
        }
        let one = GoalDistribution::one_hot(goal(2, 4), 4).unwrap();
        assert_eq!(
            divergence_to_goal(&one, goal(2, 4), DivergenceMode::ReverseKl).unwrap(),
            0.0
        );
        let b = dist(&[0.5, 0.25, 0.125, 0.125]);
        let d = divergence_to_goal(&b, goal(0, 4), DivergenceMode::ReverseKl).unwrap();
        assert!((d - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn reverse_kl_clamps_zero_mass() {
        let b = dist(&[0.0, 1.0]);
        let (d, clamped) =
            divergence_to_goal_flagged(&b, goal(0, 2), DivergenceMode::ReverseKl).unwrap();
        assert!(clamped);
        assert!((d - (-EPS_FLOOR.ln())).abs() < 1e-9);
    }

    #[test]
    fn smoothed_forward_kl_is_zero_at_target() {
        let eps = 0.01;
        let mode = DivergenceMode::SmoothedForwardKl { epsilon: eps };
        let target = dist(&[1.0 - 3.0 * eps, eps, eps, eps]);
        let d = divergence_to_goal(&target, goal(0, 4), mode).unwrap();
        assert!(d.abs() < 1e-12);
        // And positive away from it.
        let u = uniform_over(4).unwrap();
        assert!(divergence_to_goal(&u, goal(0, 4), mode).unwrap() > 0.0);
    }

    #[test]
    fn smoothed_forward_kl_validates_epsilon() {
        let mode = DivergenceMode::SmoothedForwardKl { epsilon: 0.2 };
        let u = uniform_over(4).unwrap();
        // 0.2 >= 0.5/4
        assert!(divergence_to_goal(&u, goal(0, 4), mode).is_err());
    }

    #[test]
    fn kl_gain_examples() {
        let mode = DivergenceMode::ReverseKl;
        let prev = dist(&[0.25, 0.75]);
        let curr = dist(&[0.5, 0.5]);
        let g = goal(0, 2);
        let gain = kl_gain(&prev, &curr, g, mode).unwrap();
        assert!((gain - 2.0f64.ln()).abs() < 1e-12);
        assert_eq!(kl_gain(&prev, &prev, g, mode).unwrap(), 0.0);
        let back = kl_gain(&curr, &prev, g, mode).unwrap();
        assert!((back + 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn concat_beliefs_examples() {
        let a = dist(&[0.5, 0.5]);
        let b = dist(&[0.9, 0.1]);
        assert_eq!(
            concat_beliefs(&[a.clone(), b]).unwrap(),
            vec![0.5, 0.5, 0.9, 0.1]
        );
        assert_eq!(concat_beliefs(&[a.clone()]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(concat_beliefs(&[]).unwrap(), Vec::<f64>::new());
        let c = GoalDistribution::new(vec![0.5, 0.25, 0.25]).unwrap();
        assert!(concat_beliefs(&[a, c]).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let single = dist(&[0.9, 0.1]);
        let out = aggregate_self_belief(std::slice::from_ref(&single), &[2.0]).unwrap();
        for (x, y) in out.as_slice().iter().zip(single.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }

        let l = dist(&[1.0, 0.0]);
        let r = dist(&[0.0, 1.0]);
        let out = aggregate_self_belief(&[l, r], &[1.0, 1.0]).unwrap();
        assert!((out.prob(0) - 0.5).abs() < 1e-12);

        let p = dist(&[0.8, 0.2]);
        let q = dist(&[0.4, 0.6]);
        let out = aggregate_self_belief(&[p, q], &[3.0, 1.0]).unwrap();
        assert!((out.prob(0) - 0.7).abs() < 1e-12);
        assert!((out.prob(1) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn aggregate_rejects_bad_weights() {
        let p = dist(&[0.8, 0.2]);
        assert!(aggregate_self_belief(&[], &[]).is_err());
        assert!(aggregate_self_belief(std::slice::from_ref(&p), &[0.0]).is_err());
        assert!(aggregate_self_belief(std::slice::from_ref(&p), &[-1.0]).is_err());
        assert!(aggregate_self_belief(std::slice::from_ref(&p), &[1.0, 1.0]).is_err());
    }

    #[test]
    fn floored_restores_floor_and_simplex() {
        let b = dist(&[1.0, 0.0]);
        let f = b.floored();
        assert!(f.prob(1) >= EPS_FLOOR * 0.5);
        assert!((f.as_slice().iter().sum::<f64>() - 1.0).abs() < SUM_TOL);
    }

    proptest! {
        #[test]
        fn prop_kl_gain_antisymmetric(probs_a in proptest::collection::vec(1e-6f64..1.0, 4),
                                      probs_b in proptest::collection::vec(1e-6f64..1.0, 4),
                                      idx in 0usize..4) {
            let a = GoalDistribution::from_weights(probs_a).unwrap();
            let b = GoalDistribution::from_weights(probs_b).unwrap();
            let g = OneHotGoal::new(idx, 4).unwrap();
            let fwd = kl_gain(&a, &b, g, DivergenceMode::ReverseKl).unwrap();
            let bwd = kl_gain(&b, &a, g, DivergenceMode::ReverseKl).unwrap();
            prop_assert!(fwd == -bwd || (fwd + bwd).abs() < 1e-12);
        }

        #[test]
        fn prop_divergence_monotone_in_goal_mass(p1 in 0.05f64..0.95, p2 in 0.05f64..0.95) {
            let (lo, hi) = if p1 < p2 { (p1, p2) } else { (p2, p1) };
            prop_assume!(hi - lo > 1e-9);
            let mk = |p: f64| GoalDistribution::new(vec![p, 1.0 - p]).unwrap();
            let g = OneHotGoal::new(0, 2).unwrap();
            let d_lo = divergence_to_goal(&mk(lo), g, DivergenceMode::ReverseKl).unwrap();
            let d_hi = divergence_to_goal(&mk(hi), g, DivergenceMode::ReverseKl).unwrap();
            // Divergence strictly increases as the mass on the true goal falls.
            prop_assert!(d_lo > d_hi);
        }

        #[test]
        fn prop_telescoping(seqs in proptest::collection::vec(
            proptest::collection::vec(1e-6f64..1.0, 4), 2..30), idx in 0usize..4) {
            let beliefs: Vec<GoalDistribution> = seqs
                .into_iter()
                .map(|w| GoalDistribution::from_weights(w).unwrap())
                .collect();
            let g = OneHotGoal::new(idx, 4).unwrap();
            let mode = DivergenceMode::ReverseKl;
            let mut total = 0.0;
            for w in beliefs.windows(2) {
                total += kl_gain(&w[0], &w[1], g, mode).unwrap();
            }
            let expected = divergence_to_goal(&beliefs[0], g, mode).unwrap()
                - divergence_to_goal(beliefs.last().unwrap(), g, mode).unwrap();
            prop_assert!((total - expected).abs() < 1e-9);
        }

        #[test]
        fn prop_aggregate_stays_on_simplex(ws in proptest::collection::vec(0.01f64..5.0, 3),
                                           raw in proptest::collection::vec(
                                               proptest::collection::vec(1e-6f64..1.0, 4), 3)) {
            let parts: Vec<GoalDistribution> = raw
                .into_iter()
                .map(|w| GoalDistribution::from_weights(w).unwrap())
                .collect();
            let out = aggregate_self_belief(&parts, &ws).unwrap();
            prop_assert!((out.as_slice().iter().sum::<f64>() - 1.0).abs() < SUM_TOL);
            prop_assert!(out.as_slice().iter().all(|&p| p >= 0.0));
        }

        #[test]
        fn prop_equal_weights_is_plain_mean(raw in proptest::collection::vec(
            proptest::collection::vec(1e-6f64..1.0, 3), 2..5)) {
            let parts: Vec<GoalDistribution> = raw
                .into_iter()
                .map(|w| GoalDistribution::from_weights(w).unwrap())
                .collect();
            let ws = vec![1.0; parts.len()];
            let out = aggregate_self_belief(&parts, &ws).unwrap();
            let n = parts.len() as f64;
            for k in 0..3 {
                let mean: f64 = parts.iter().map(|p| p.prob(k)).sum::<f64>() / n;
                prop_assert!((out.prob(k) - mean).abs() < 1e-12);
            }
        }
    }
}
