//! Legibility and performance metrics computed from episode traces:
//! prediction correctness ratio (PCR), prediction time ratio (PTR), success
//! rate, and returns.

use serde::{Deserialize, Serialize};

use crate::belief::GoalDistribution;

/// Per-episode trace of everything the metrics need: the metric observer's
/// belief at every step (including the post-terminal update), per-step
/// rewards, the outcome, and the true goal.
#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    /// Belief trace `b_0 ..= b_T`, length `T + 1`.
    pub beliefs: Vec<GoalDistribution>,
    /// Joint actions per step; length `T`.
    pub actions: Vec<Vec<usize>>,
    /// Per-step, per-agent raw rewards; length `T`.
    pub rewards_raw: Vec<Vec<f64>>,
    /// Per-step, per-agent shaped rewards; length `T`.
    pub rewards_shaped: Vec<Vec<f64>>,
    pub success: bool,
    pub true_goal: usize,
    /// Episode length `T >= 1`.
    pub len: usize,
}

impl EpisodeRecord {
    pub fn return_raw(&self) -> f64 {
        self.rewards_raw.iter().flatten().sum()
    }

    pub fn return_shaped(&self) -> f64 {
        self.rewards_shaped.iter().flatten().sum()
    }
}

/// Whether the observer's argmax belief at the final step names the true
/// goal. A tied argmax carries no commitment and counts as incorrect.
pub fn prediction_correct(record: &EpisodeRecord) -> bool {
    record
        .beliefs
        .last()
        .and_then(GoalDistribution::argmax_strict)
        == Some(record.true_goal)
}

/// Fraction of records whose final prediction was correct.
pub fn pcr(window: &[EpisodeRecord]) -> f64 {
    if window.is_empty() {
        return 0.0;
    }
    window.iter().filter(|r| prediction_correct(r)).count() as f64 / window.len() as f64
}

/// Earliest step from which the argmax belief names the true goal through
/// the end of the episode, divided by the episode length. 1.0 when no such
/// step exists, so "never predicted" is the worst case and means stay
/// well-defined.
pub fn ptr(record: &EpisodeRecord) -> f64 {
    let t = record.len;
    debug_assert_eq!(record.beliefs.len(), t + 1);
    let correct_at =
        |idx: usize| record.beliefs[idx].argmax_strict() == Some(record.true_goal);
    let mut earliest = None;
    for idx in (0..=t).rev() {
        if correct_at(idx) {
            earliest = Some(idx);
        } else {
            break;
        }
    }
    match earliest {
        Some(idx) => idx as f64 / t as f64,
        None => 1.0,
    }
}

/// One CSV row of the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub episode: usize,
    pub seed: u64,
    pub beta: f64,
    pub return_raw: f64,
    pub return_shaped: f64,
    pub success: bool,
    pub ptr: f64,
    pub pred_correct: bool,
    pub steps: usize,
}

/// Trailing-window means of every metric, one output element per episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RollingMeans {
    pub return_raw: f64,
    pub return_shaped: f64,
    pub success: f64,
    pub ptr: f64,
    pub pred_correct: f64,
}

/// Rolling means over the trailing `window` episodes, emitted per episode.
pub fn aggregate(rows: &[MetricRow], window: usize) -> Vec<RollingMeans> {
    assert!(window >= 1, "window must be at least 1");
    let mut out = Vec::with_capacity(rows.len());
    let mut sums = [0.0f64; 5];
    let extract = |r: &MetricRow| {
        [
            r.return_raw,
            r.return_shaped,
            r.success as u8 as f64,
            r.ptr,
            r.pred_correct as u8 as f64,
        ]
    };
    for (i, row) in rows.iter().enumerate() {
        for (s, v) in sums.iter_mut().zip(extract(row)) {
            *s += v;
        }
        if i >= window {
            for (s, v) in sums.iter_mut().zip(extract(&rows[i - window])) {
                *s -= v;
            }
        }
        let denom = (i + 1).min(window) as f64;
        out.push(RollingMeans {
            return_raw: sums[0] / denom,
            return_shaped: sums[1] / denom,
            success: sums[2] / denom,
            ptr: sums[3] / denom,
            pred_correct: sums[4] / denom,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{uniform_over, GoalDistribution};

    fn one_hot(idx: usize, n: usize) -> GoalDistribution {
        let mut v = vec![0.0; n];
        v[idx] = 1.0;
        GoalDistribution::new(v).unwrap()
    }

    fn record_with_beliefs(beliefs: Vec<GoalDistribution>, true_goal: usize) -> EpisodeRecord {
        let len = beliefs.len() - 1;
        EpisodeRecord {
            beliefs,
            actions: vec![vec![4, 4]; len],
            rewards_raw: vec![vec![0.0, 0.0]; len],
            rewards_shaped: vec![vec![0.0, 0.0]; len],
            success: false,
            true_goal,
            len,
        }
    }

    #[test]
    fn prediction_correct_rules() {
        let correct = record_with_beliefs(vec![uniform_over(4).unwrap(), one_hot(2, 4)], 2);
        assert!(prediction_correct(&correct));

        // Uniform final belief is a tie, and a tie is not a prediction.
        let tied = record_with_beliefs(vec![uniform_over(4).unwrap(), uniform_over(4).unwrap()], 0);
        assert!(!prediction_correct(&tied));

        // Correct mid-episode but wrong at the end counts as incorrect.
        let fickle = record_with_beliefs(
            vec![uniform_over(4).unwrap(), one_hot(1, 4), one_hot(3, 4)],
            1,
        );
        assert!(!prediction_correct(&fickle));
    }

    #[test]
    fn pcr_fixture_415_of_1000() {
        let mut records = Vec::new();
        for i in 0..1000 {
            let final_belief = if i < 415 { one_hot(0, 4) } else { one_hot(1, 4) };
            records.push(record_with_beliefs(
                vec![uniform_over(4).unwrap(), final_belief],
                0,
            ));
        }
        assert_eq!(pcr(&records), 0.415);
        let all = vec![
            record_with_beliefs(vec![uniform_over(4).unwrap(), one_hot(0, 4)], 0);
            10
        ];
        assert_eq!(pcr(&all), 1.0);
        let none = vec![
            record_with_beliefs(vec![uniform_over(4).unwrap(), one_hot(1, 4)], 0);
            10
        ];
        assert_eq!(pcr(&none), 0.0);
    }

    #[test]
    fn ptr_fixture_step_15_of_50() {
        // Correct from belief index 15 through 50 -> 15/50 = 0.3 exactly.
        let mut beliefs = vec![uniform_over(4).unwrap(); 15];
        beliefs.extend(vec![one_hot(3, 4); 36]);
        assert_eq!(beliefs.len(), 51);
        let record = record_with_beliefs(beliefs, 3);
        assert_eq!(ptr(&record), 0.3);
    }

    #[test]
    fn ptr_edge_cases() {
        // Correct from step 0 (degenerate: requires a decisive prior).
        let begin = record_with_beliefs(vec![one_hot(1, 4), one_hot(1, 4)], 1);
        assert_eq!(ptr(&begin), 0.0);

        // Never correct -> 1.0; and PCR=0 forces mean PTR = 1.
        let never = record_with_beliefs(vec![uniform_over(4).unwrap(), one_hot(0, 4)], 2);
        assert_eq!(ptr(&never), 1.0);
        assert!(!prediction_correct(&never));

        // Correct mid-way but lost at the end -> not held through T -> 1.0.
        let lost = record_with_beliefs(
            vec![uniform_over(4).unwrap(), one_hot(2, 4), one_hot(0, 4)],
            2,
        );
        assert_eq!(ptr(&lost), 1.0);
    }

    #[test]
    fn ptr_within_bounds_and_tie_rule_per_step() {
        // A tie at an intermediate step breaks the held-through run.
        let seq = vec![
            uniform_over(4).unwrap(),
            one_hot(0, 4),
            uniform_over(4).unwrap(),
            one_hot(0, 4),
        ];
        let rec = record_with_beliefs(seq, 0);
        assert_eq!(ptr(&rec), 1.0); // held only from index 3 of T=3
        assert!(ptr(&rec) <= 1.0);
    }

    fn row(i: usize, v: f64) -> MetricRow {
        MetricRow {
            episode: i,
            seed: 0,
            beta: 0.0,
            return_raw: v,
            return_shaped: v,
            success: v > 0.5,
            ptr: v,
            pred_correct: v > 0.5,
            steps: 1,
        }
    }

    #[test]
    fn aggregate_constant_stream() {
        let rows: Vec<MetricRow> = (0..10).map(|i| row(i, 0.25)).collect();
        for means in aggregate(&rows, 4) {
            assert!((means.return_raw - 0.25).abs() < 1e-12);
            assert!((means.ptr - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn aggregate_window_one_is_identity() {
        let rows: Vec<MetricRow> = (0..5).map(|i| row(i, i as f64)).collect();
        let means = aggregate(&rows, 1);
        for (m, r) in means.iter().zip(&rows) {
            assert_eq!(m.return_raw, r.return_raw);
        }
    }

    #[test]
    fn aggregate_step_change_settles_after_window() {
        let window = 10;
        let mut rows: Vec<MetricRow> = (0..20).map(|i| row(i, 0.0)).collect();
        rows.extend((20..40).map(|i| row(i, 1.0)));
        let means = aggregate(&rows, window);
        assert!((means[19].return_raw - 0.0).abs() < 1e-12);
        // Exactly `window` episodes after the change the mean reaches 1.
        assert!((means[20 + window - 1].return_raw - 1.0).abs() < 1e-12);
        assert!(means[20 + window - 2].return_raw < 1.0);
    }

    #[test]
    fn pcr_composes_over_disjoint_windows() {
        let mut records = Vec::new();
        for i in 0..60 {
            let final_belief = if i % 3 == 0 { one_hot(0, 4) } else { one_hot(1, 4) };
            records.push(record_with_beliefs(
                vec![uniform_over(4).unwrap(), final_belief],
                0,
            ));
        }
        let (a, b) = records.split_at(24);
        let combined = (pcr(a) * a.len() as f64 + pcr(b) * b.len() as f64)
            / records.len() as f64;
        assert!((combined - pcr(&records)).abs() < 1e-12);
    }
}
