//! Goal recognition: inferring another agent's goal from its observed
//! actions, and estimating how other agents currently predict one's own
//! goal.
//!
//! Two action-likelihood backends are provided. The empirical model learns
//! `P(action | observation, goal)` from labeled episode traces with Laplace
//! smoothing; the max-entropy model derives it from a softmax over
//! goal-conditional action values. Both are deterministic and depend only on
//! the observation/action pair, never on wall-clock time.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::belief::{
    aggregate_self_belief, uniform_over, BeliefError, GoalDistribution, EPS_FLOOR,
};

#[derive(Debug, Error)]
pub enum RecognitionError {
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error("max-entropy backend queried without goal-conditional action values")]
    MissingQSource,
    #[error("action index {action} out of range for {actions} actions")]
    ActionOutOfRange { action: usize, actions: usize },
    #[error("expected {expected} per-goal rows, got {got}")]
    QSourceShape { expected: usize, got: usize },
    #[error("no observers configured; legibility is undefined for an unobserved agent")]
    NoObservers,
    #[error("checkpoint parse error at line {line}: {msg}")]
    Checkpoint { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Counts-based model of an observed agent's policy, keyed by a discrete
/// observation code. Laplace smoothing keeps every likelihood positive, and
/// an unseen key falls back to the uniform cold-start rule.
#[derive(Debug, Clone)]
pub struct EmpiricalPolicyModel {
    counts: HashMap<(u64, usize), Vec<u32>>,
    n_goals: usize,
    n_actions: usize,
    laplace_alpha: f64,
}

impl EmpiricalPolicyModel {
    pub fn new(n_goals: usize, n_actions: usize) -> Self {
        Self::with_alpha(n_goals, n_actions, 1.0)
    }

    pub fn with_alpha(n_goals: usize, n_actions: usize, laplace_alpha: f64) -> Self {
        assert!(laplace_alpha > 0.0, "Laplace alpha must be positive");
        Self {
            counts: HashMap::new(),
            n_goals,
            n_actions,
            laplace_alpha,
        }
    }

    pub fn n_goals(&self) -> usize {
        self.n_goals
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Smoothed `P(action | key, goal)` for every goal.
    pub fn action_likelihood(&self, key: u64, action: usize) -> Result<Vec<f64>, RecognitionError> {
        if action >= self.n_actions {
            return Err(RecognitionError::ActionOutOfRange {
                action,
                actions: self.n_actions,
            });
        }
        let alpha = self.laplace_alpha;
        let denom_base = alpha * self.n_actions as f64;
        let mut out = Vec::with_capacity(self.n_goals);
        for goal in 0..self.n_goals {
            let p = match self.counts.get(&(key, goal)) {
                Some(row) => {
                    let total: u32 = row.iter().sum();
                    (row[action] as f64 + alpha) / (total as f64 + denom_base)
                }
                None => 1.0 / self.n_actions as f64,
            };
            out.push(p.max(EPS_FLOOR));
        }
        Ok(out)
    }

    /// Records one labeled observation of the modeled agent.
    pub fn record(&mut self, key: u64, goal: usize, action: usize) {
        let row = self
            .counts
            .entry((key, goal))
            .or_insert_with(|| vec![0; self.n_actions]);
        row[action] += 1;
    }

    /// End-of-episode parameter learning: every (observation, action) pair in
    /// the observed agent's trajectory is counted under the revealed goal.
    pub fn train_on_episode(&mut self, trajectory: &[(u64, usize)], true_goal: usize) {
        for &(key, action) in trajectory {
            self.record(key, true_goal, action);
        }
    }

    pub fn total_count(&self) -> u64 {
        self.counts
            .values()
            .flat_map(|row| row.iter())
            .map(|&c| c as u64)
            .sum()
    }

    /// Writes the counts as flat CSV `obs_key,goal,action,count`, sorted so
    /// output is reproducible.
    pub fn save_csv<W: Write>(&self, mut w: W) -> Result<(), RecognitionError> {
        writeln!(w, "obs_key,goal,action,count")?;
        let mut keys: Vec<&(u64, usize)> = self.counts.keys().collect();
        keys.sort();
        for &(key, goal) in keys {
            let row = &self.counts[&(key, goal)];
            for (action, &count) in row.iter().enumerate() {
                if count > 0 {
                    writeln!(w, "{key},{goal},{action},{count}")?;
                }
            }
        }
        Ok(())
    }

    pub fn load_csv<R: BufRead>(
        r: R,
        n_goals: usize,
        n_actions: usize,
        laplace_alpha: f64,
    ) -> Result<Self, RecognitionError> {
        let mut model = Self::with_alpha(n_goals, n_actions, laplace_alpha);
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if i == 0 || line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let mut field = |name: &str| {
                parts.next().ok_or(RecognitionError::Checkpoint {
                    line: i + 1,
                    msg: format!("missing field {name}"),
                })
            };
            let key: u64 = field("obs_key")?
                .parse()
                .map_err(|e| RecognitionError::Checkpoint {
                    line: i + 1,
                    msg: format!("obs_key: {e}"),
                })?;
            let goal: usize = field("goal")?
                .parse()
                .map_err(|e| RecognitionError::Checkpoint {
                    line: i + 1,
                    msg: format!("goal: {e}"),
                })?;
            let action: usize =
                field("action")?
                    .parse()
                    .map_err(|e| RecognitionError::Checkpoint {
                        line: i + 1,
                        msg: format!("action: {e}"),
                    })?;
            let count: u32 = field("count")?
                .parse()
                .map_err(|e| RecognitionError::Checkpoint {
                    line: i + 1,
                    msg: format!("count: {e}"),
                })?;
            if goal >= n_goals || action >= n_actions {
                return Err(RecognitionError::Checkpoint {
                    line: i + 1,
                    msg: format!("goal {goal} or action {action} out of range"),
                });
            }
            let row = model
                .counts
                .entry((key, goal))
                .or_insert_with(|| vec![0; n_actions]);
            row[action] += count;
        }
        Ok(model)
    }
}

/// Max-entropy action likelihood: per goal, the probability of an action is
/// a softmax over that goal's action values at the observed state.
#[derive(Debug, Clone, Copy)]
pub struct MaxEntLikelihoodModel {
    pub temperature: f64,
}

impl Default for MaxEntLikelihoodModel {
    fn default() -> Self {
        Self { temperature: 1.0 }
    }
}

impl MaxEntLikelihoodModel {
    pub fn new(temperature: f64) -> Self {
        assert!(temperature > 0.0, "softmax temperature must be positive");
        Self { temperature }
    }

    /// `P(action | goal k)` for every `k`, given the observed agent's
    /// action values under each hypothesized goal.
    pub fn action_likelihood(
        &self,
        q_per_goal: &[Vec<f64>],
        action: usize,
    ) -> Result<Vec<f64>, RecognitionError> {
        let mut out = Vec::with_capacity(q_per_goal.len());
        for q in q_per_goal {
            if action >= q.len() {
                return Err(RecognitionError::ActionOutOfRange {
                    action,
                    actions: q.len(),
                });
            }
            let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for &v in q {
                denom += ((v - max) * self.temperature).exp();
            }
            let p = ((q[action] - max) * self.temperature).exp() / denom;
            out.push(p.max(EPS_FLOOR));
        }
        Ok(out)
    }
}

/// Action-likelihood backend for a [`Recognizer`].
#[derive(Debug, Clone)]
pub enum LikelihoodBackend {
    Empirical(EmpiricalPolicyModel),
    MaxEnt(MaxEntLikelihoodModel),
}

/// Everything a backend may need about the observed agent at the moment its
/// action was chosen: the discrete observation code, and (for the
/// max-entropy backend) its action values under each candidate goal.
#[derive(Debug, Clone, Default)]
pub struct ObservationContext {
    pub key: u64,
    pub q_per_goal: Option<Vec<Vec<f64>>>,
}

impl LikelihoodBackend {
    pub fn action_likelihood(
        &self,
        ctx: &ObservationContext,
        action: usize,
    ) -> Result<Vec<f64>, RecognitionError> {
        match self {
            LikelihoodBackend::Empirical(m) => m.action_likelihood(ctx.key, action),
            LikelihoodBackend::MaxEnt(m) => {
                let q = ctx
                    .q_per_goal
                    .as_ref()
                    .ok_or(RecognitionError::MissingQSource)?;
                m.action_likelihood(q, action)
            }
        }
    }
}

/// Result of a Bayes update. When the normalizer underflows the prior is
/// returned unchanged and the update is flagged degenerate.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub dist: GoalDistribution,
    pub degenerate: bool,
}

/// Posterior over goals: `post(k) ∝ likelihood(k) · prior(k)`. Entries are
/// floored at `EPS_FLOOR` so later logarithms stay finite.
pub fn bayes_update(prior: &GoalDistribution, likelihood: &[f64]) -> Posterior {
    debug_assert_eq!(prior.len(), likelihood.len());
    let mut weights = Vec::with_capacity(prior.len());
    let mut norm = 0.0;
    for (k, &l) in likelihood.iter().enumerate() {
        let w = l * prior.prob(k);
        weights.push(w);
        norm += w;
    }
    if !(norm >= 1e-300) {
        return Posterior {
            dist: prior.clone(),
            degenerate: true,
        };
    }
    for w in &mut weights {
        *w /= norm;
    }
    let dist = GoalDistribution::from_weights(weights)
        .expect("normalized product of valid prior and positive likelihood")
        .floored();
    Posterior {
        dist,
        degenerate: false,
    }
}

/// Stateful belief tracker over one observed agent's goal. Holds a prior
/// that starts uniform each episode and is refined by Bayes updates on each
/// observed action.
#[derive(Debug, Clone)]
pub struct Recognizer {
    pub observer: usize,
    pub observed: usize,
    backend: LikelihoodBackend,
    belief: GoalDistribution,
    n_goals: usize,
}

impl Recognizer {
    pub fn new(
        observer: usize,
        observed: usize,
        n_goals: usize,
        backend: LikelihoodBackend,
    ) -> Result<Self, RecognitionError> {
        Ok(Self {
            observer,
            observed,
            backend,
            belief: uniform_over(n_goals)?,
            n_goals,
        })
    }

    pub fn belief(&self) -> &GoalDistribution {
        &self.belief
    }

    pub fn backend(&self) -> &LikelihoodBackend {
        &self.backend
    }

    pub fn backend_mut(&mut self) -> &mut LikelihoodBackend {
        &mut self.backend
    }

    /// Back to the uniform prior at episode start.
    pub fn reset(&mut self) {
        self.belief = uniform_over(self.n_goals).expect("n_goals validated at construction");
    }

    /// One recognition step: fold the likelihood of the observed action into
    /// the running belief and return the refreshed estimate.
    pub fn observe(
        &mut self,
        ctx: &ObservationContext,
        action: usize,
    ) -> Result<&GoalDistribution, RecognitionError> {
        let likelihood = self.backend.action_likelihood(ctx, action)?;
        let posterior = bayes_update(&self.belief, &likelihood);
        self.belief = posterior.dist;
        Ok(&self.belief)
    }
}

/// Estimates how other agents currently predict one agent's goal, by
/// querying the recognizers those observers actually run and aggregating
/// with per-observer weights.
#[derive(Debug, Clone)]
pub struct SelfBeliefEstimator {
    pub subject: usize,
    pub weights: Vec<f64>,
}

impl SelfBeliefEstimator {
    /// All-ones weights: every observer counts equally.
    pub fn new(subject: usize, n_observers: usize) -> Self {
        Self {
            subject,
            weights: vec![1.0; n_observers],
        }
    }

    pub fn with_weights(subject: usize, weights: Vec<f64>) -> Self {
        Self { subject, weights }
    }

    /// Aggregated prediction of this agent's goal, from the beliefs its
    /// observers currently hold. Errors when no observer models the agent.
    pub fn estimate(
        &self,
        observer_beliefs: &[&GoalDistribution],
    ) -> Result<GoalDistribution, RecognitionError> {
        if observer_beliefs.is_empty() {
            return Err(RecognitionError::NoObservers);
        }
        let owned: Vec<GoalDistribution> =
            observer_beliefs.iter().map(|b| (*b).clone()).collect();
        Ok(aggregate_self_belief(&owned, &self.weights)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::GoalDistribution;
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use proptest::prelude::*;

    fn dist(probs: &[f64]) -> GoalDistribution {
        GoalDistribution::new(probs.to_vec()).unwrap()
    }

    #[test]
    fn empirical_laplace_formula() {
        let mut m = EmpiricalPolicyModel::new(4, 5);
        for _ in 0..7 {
            m.record(42, 0, 0);
        }
        m.record(42, 0, 1);
        let lik = m.action_likelihood(42, 0).unwrap();
        assert!((lik[0] - 8.0 / 13.0).abs() < 1e-12);
        // Goals with no counts at this key fall back to uniform.
        assert!((lik[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn empirical_cold_start_is_uniform() {
        let m = EmpiricalPolicyModel::new(4, 5);
        let lik = m.action_likelihood(7, 3).unwrap();
        for &p in &lik {
            assert!((p - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn empirical_order_invariance() {
        let episodes: Vec<(Vec<(u64, usize)>, usize)> = vec![
            (vec![(1, 0), (2, 1), (3, 2)], 0),
            (vec![(1, 1), (2, 1)], 1),
            (vec![(1, 0), (9, 4)], 2),
        ];
        let mut fwd = EmpiricalPolicyModel::new(4, 5);
        for (traj, g) in &episodes {
            fwd.train_on_episode(traj, *g);
        }
        let mut rev = EmpiricalPolicyModel::new(4, 5);
        for (traj, g) in episodes.iter().rev() {
            rev.train_on_episode(traj, *g);
        }
        for key in [1u64, 2, 3, 9] {
            for a in 0..5 {
                assert_eq!(
                    fwd.action_likelihood(key, a).unwrap(),
                    rev.action_likelihood(key, a).unwrap()
                );
            }
        }
    }

    #[test]
    fn train_on_episode_counts() {
        let mut m = EmpiricalPolicyModel::new(4, 5);
        m.train_on_episode(&[], 0);
        assert_eq!(m.total_count(), 0);
        m.train_on_episode(&[(1, 0), (2, 1), (3, 2)], 1);
        assert_eq!(m.total_count(), 3);
    }

    #[test]
    fn empirical_limit_approaches_determinism() {
        let mut m = EmpiricalPolicyModel::new(2, 5);
        for _ in 0..100 {
            m.train_on_episode(&[(5, 2)], 0);
        }
        let lik = m.action_likelihood(5, 2).unwrap();
        // (100+1)/(100+5) -> 1 as counts grow.
        assert!(lik[0] > 0.96);
    }

    #[test]
    fn maxent_uniform_for_flat_q() {
        let m = MaxEntLikelihoodModel::default();
        let q = vec![vec![0.5; 5]; 4];
        let lik = m.action_likelihood(&q, 2).unwrap();
        for &p in &lik {
            assert!((p - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn maxent_rows_sum_to_one_over_actions() {
        let m = MaxEntLikelihoodModel::new(2.0);
        let q = vec![vec![1.0, -0.5, 0.25, 3.0, 0.0], vec![0.0, 0.0, 9.0, 0.0, 0.0]];
        for goal in 0..2 {
            let total: f64 = (0..5)
                .map(|a| m.action_likelihood(&q, a).unwrap()[goal])
                .sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn maxent_is_time_invariant() {
        // Likelihood depends only on the frozen q rows and the action.
        let m = MaxEntLikelihoodModel::default();
        let q = vec![vec![0.1, 0.2, 0.3, 0.4, 0.5]; 3];
        let first = m.action_likelihood(&q, 1).unwrap();
        let again = m.action_likelihood(&q, 1).unwrap();
        assert_eq!(first, again);
    }

    #[test]
    fn bayes_update_examples() {
        let u = crate::belief::uniform_over(4).unwrap();
        let post = bayes_update(&u, &[0.7, 0.1, 0.1, 0.1]);
        assert!(!post.degenerate);
        for (p, want) in post.dist.as_slice().iter().zip([0.7, 0.1, 0.1, 0.1]) {
            assert!((p - want).abs() < 1e-9);
        }

        let prior = dist(&[0.7, 0.1, 0.1, 0.1]);
        let flat = bayes_update(&prior, &[0.25; 4]);
        for (p, want) in flat.dist.as_slice().iter().zip(prior.as_slice()) {
            assert!((p - want).abs() < 1e-9);
        }

        let post2 = bayes_update(&prior, &[0.7, 0.1, 0.1, 0.1]);
        assert!((post2.dist.prob(0) - 49.0 / 52.0).abs() < 1e-9);
        assert!((post2.dist.prob(1) - 1.0 / 52.0).abs() < 1e-9);
    }

    #[test]
    fn bayes_update_degenerate_returns_prior() {
        let prior = dist(&[1.0, 0.0]).floored();
        let post = bayes_update(&prior, &[0.0, 0.0]);
        assert!(post.degenerate);
        assert_eq!(post.dist.as_slice(), prior.as_slice());
    }

    #[test]
    fn recognizer_chains_updates() {
        let m = EmpiricalPolicyModel::new(4, 5);
        let mut rec = Recognizer::new(1, 0, 4, LikelihoodBackend::Empirical(m)).unwrap();
        // No observation yet: uniform.
        assert_eq!(rec.belief().as_slice(), &[0.25; 4]);

        // Two identical informative observations compound: 0.25 -> 0.7 -> ~0.9423.
        let mut model = EmpiricalPolicyModel::new(4, 5);
        for _ in 0..100 {
            model.record(3, 0, 2);
        }
        // Calibrate other goals so the likelihood ratio is 7:1.
        let lik = model.action_likelihood(3, 2).unwrap();
        assert!(lik[0] > 0.9);
        let manual = bayes_update(&rec.belief().clone(), &[0.7, 0.1, 0.1, 0.1]);
        let manual2 = bayes_update(&manual.dist, &[0.7, 0.1, 0.1, 0.1]);
        assert!((manual2.dist.prob(0) - 49.0 / 52.0).abs() < 1e-9);

        // Uninformative observation leaves the belief unchanged.
        let before = rec.belief().clone();
        let ctx = ObservationContext {
            key: 999, // unseen key -> uniform likelihood
            q_per_goal: None,
        };
        rec.observe(&ctx, 0).unwrap();
        for (a, b) in rec.belief().as_slice().iter().zip(before.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }

        rec.reset();
        assert_eq!(rec.belief().as_slice(), &[0.25; 4]);
    }

    #[test]
    fn self_belief_estimator_examples() {
        let est = SelfBeliefEstimator::new(0, 1);
        let b = dist(&[0.9, 0.1]);
        let out = est.estimate(&[&b]).unwrap();
        for (x, y) in out.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }

        let est2 = SelfBeliefEstimator::new(0, 2);
        let l = dist(&[1.0, 0.0]);
        let r = dist(&[0.0, 1.0]);
        let out = est2.estimate(&[&l, &r]).unwrap();
        assert!((out.prob(0) - 0.5).abs() < 1e-12);

        let est3 = SelfBeliefEstimator::with_weights(0, vec![3.0, 1.0]);
        let p = dist(&[0.8, 0.2]);
        let q = dist(&[0.4, 0.6]);
        let out = est3.estimate(&[&p, &q]).unwrap();
        assert!((out.prob(0) - 0.7).abs() < 1e-12);

        let empty = SelfBeliefEstimator::new(0, 0);
        assert!(matches!(
            empty.estimate(&[]),
            Err(RecognitionError::NoObservers)
        ));
    }

    #[test]
    fn counts_csv_round_trip() {
        let mut m = EmpiricalPolicyModel::new(4, 5);
        m.train_on_episode(&[(1, 0), (2, 1), (1, 0), (77, 4)], 2);
        m.train_on_episode(&[(1, 3)], 0);
        let mut buf = Vec::new();
        m.save_csv(&mut buf).unwrap();
        let loaded = EmpiricalPolicyModel::load_csv(buf.as_slice(), 4, 5, 1.0).unwrap();
        assert_eq!(loaded.total_count(), m.total_count());
        for key in [1u64, 2, 77] {
            for a in 0..5 {
                assert_eq!(
                    loaded.action_likelihood(key, a).unwrap(),
                    m.action_likelihood(key, a).unwrap()
                );
            }
        }
    }

    /// Brute-force posterior in exact rational arithmetic, independent of the
    /// floating-point implementation path.
    fn exact_posterior(prior: &[f64], likelihood: &[f64]) -> Vec<f64> {
        let to_rat = |x: f64| BigRational::from_float(x).unwrap();
        let products: Vec<BigRational> = prior
            .iter()
            .zip(likelihood)
            .map(|(&p, &l)| to_rat(p) * to_rat(l))
            .collect();
        let norm: BigRational = products
            .iter()
            .fold(BigRational::from_integer(BigInt::from(0)), |a, b| a + b);
        products
            .into_iter()
            .map(|p| {
                let r = p / norm.clone();
                r.numer()
                    .to_string()
                    .parse::<f64>()
                    .unwrap_or(f64::INFINITY)
                    / r.denom().to_string().parse::<f64>().unwrap_or(f64::INFINITY)
            })
            .collect()
    }

    proptest! {
        #[test]
        fn prop_bayes_matches_exact_rational(raw_prior in proptest::collection::vec(1e-3f64..1.0, 2..=6),
                                             raw_lik_seed in proptest::collection::vec(1e-3f64..1.0, 6)) {
            let n = raw_prior.len();
            let prior = GoalDistribution::from_weights(raw_prior).unwrap();
            let lik: Vec<f64> = raw_lik_seed[..n].to_vec();
            let got = bayes_update(&prior, &lik);
            prop_assert!(!got.degenerate);
            let want = exact_posterior(prior.as_slice(), &lik);
            for (g, w) in got.dist.as_slice().iter().zip(want) {
                prop_assert!((g - w).abs() < 1e-9, "got {g}, want {w}");
            }
        }

        #[test]
        fn prop_likelihood_ratio_compounds(ratio in 1.5f64..6.0, k in 1usize..8) {
            // Posterior odds after k identically informative observations grow as ratio^k.
            let mut belief = crate::belief::uniform_over(2).unwrap();
            let lik = [ratio / (ratio + 1.0), 1.0 / (ratio + 1.0)];
            for _ in 0..k {
                belief = bayes_update(&belief, &lik).dist;
            }
            let odds = belief.prob(0) / belief.prob(1);
            let want = ratio.powi(k as i32);
            prop_assert!((odds / want - 1.0).abs() < 1e-6, "odds {odds} want {want}");
        }
    }
}
