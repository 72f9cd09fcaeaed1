//! Executable testing policies.
//!
//! All plays share the same shape: every box is tested exactly once in index
//! order, each test returns one bit, and a single box is selected after the
//! last test. The adaptive quantile policy raises its threshold after every
//! positive test; the non-adaptive baseline fixes all thresholds upfront from
//! the gambler's backward induction.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{ContinuousDistribution, DiscreteDistribution};
use crate::{Error, Result};

/// Parameters `alpha_1 > alpha_2 > ... > alpha_k > 0` of an adaptive
/// quantile policy. After `j` positive tests the policy tests at quantile
/// `alpha_{j+1}/n`, and at quantile 0 (always negative) once all `k`
/// parameters are spent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy", into = "RawPolicy")]
pub struct QuantilePolicy {
    alphas: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawPolicy {
    alphas: Vec<f64>,
}

impl TryFrom<RawPolicy> for QuantilePolicy {
    type Error = Error;
    fn try_from(raw: RawPolicy) -> Result<Self> {
        Self::new(raw.alphas)
    }
}

impl From<QuantilePolicy> for RawPolicy {
    fn from(p: QuantilePolicy) -> Self {
        RawPolicy { alphas: p.alphas }
    }
}

impl QuantilePolicy {
    /// Requires a strictly decreasing, positive, finite parameter list.
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::BadParameter("policy needs at least one alpha".into()));
        }
        if alphas.iter().any(|a| !a.is_finite() || *a <= 0.0) {
            return Err(Error::BadParameter("alphas must be finite and > 0".into()));
        }
        if alphas.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::BadParameter(
                "alphas must be strictly decreasing".into(),
            ));
        }
        Ok(Self { alphas })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn k(&self) -> usize {
        self.alphas.len()
    }

    /// Quantile for the next test after `positives_so_far` positive tests:
    /// `alpha_{j+1}/n` while parameters remain, 0 afterwards.
    pub fn next_quantile(&self, positives_so_far: usize, n: usize) -> f64 {
        match self.alphas.get(positives_so_far) {
            Some(a) => a / n as f64,
            None => 0.0,
        }
    }
}

/// What a single test probed: an explicit threshold (continuous play, the
/// gambler baseline, the optimal DP policy) or a probability-mass parameter
/// (discrete probability testing).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Probe {
    Threshold(f64),
    Quantile(f64),
}

/// One test applied to one box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub box_index: usize,
    pub probe: Probe,
    pub positive: bool,
}

/// The per-box test log of a play; at most one record per box.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TestHistory {
    records: Vec<TestRecord>,
}

impl TestHistory {
    pub fn from_records(records: Vec<TestRecord>) -> Self {
        debug_assert!(
            {
                let mut seen = std::collections::HashSet::new();
                records.iter().all(|r| seen.insert(r.box_index))
            },
            "one test per box"
        );
        Self { records }
    }

    pub fn records(&self) -> &[TestRecord] {
        &self.records
    }

    pub fn positives_count(&self) -> usize {
        self.records.iter().filter(|r| r.positive).count()
    }
}

/// Outcome of one play: the selected box (0-based), its realized value, and
/// the test log.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayResult {
    pub chosen_index: usize,
    pub chosen_value: f64,
    pub history: TestHistory,
}

/// One probability test with mass parameter `q` on a realization `x`:
/// positive iff `x` lands in the top-`q` probability mass, randomizing on the
/// boundary atom so that the overall positive probability is exactly `q`.
pub fn probability_test<R: Rng + ?Sized>(
    dist: &DiscreteDistribution,
    q: f64,
    x: f64,
    rng: &mut R,
) -> bool {
    assert!((0.0..=1.0).contains(&q), "q must lie in [0, 1]");
    if q <= 0.0 {
        return false;
    }
    if q >= 1.0 {
        return true;
    }
    let (k, p_q) = dist
        .probability_test_boundary(q)
        .expect("q in (0,1) always has a boundary atom");
    let v_k = dist.values()[k];
    if x > v_k {
        true
    } else if x < v_k {
        false
    } else {
        rng.gen::<f64>() < p_q
    }
}

fn select(last_positive: Option<usize>) -> usize {
    // The most recent positive used the smallest quantile (highest
    // threshold); with no positives, all boxes failed the same first-level
    // test and box 0 is the canonical pick.
    last_positive.unwrap_or(0)
}

fn discrete_core<R: Rng + ?Sized>(
    policy: &QuantilePolicy,
    dist: &DiscreteDistribution,
    n: usize,
    rng: &mut R,
    mut record: impl FnMut(usize, f64, bool),
) -> (usize, f64, f64) {
    assert!(
        policy.alphas[0] < n as f64,
        "policy requires alpha_1 < n for q_1 < 1"
    );
    let mut positives = 0usize;
    let mut last_positive = None;
    let mut chosen_value_idx = 0usize;
    let mut max_idx = 0usize;
    for i in 0..n {
        let idx = dist.sample_index(rng);
        max_idx = max_idx.max(idx);
        let q = policy.next_quantile(positives, n);
        let positive = if q > 0.0 {
            let (k, p_q) = dist
                .probability_test_boundary(q)
                .expect("0 < q < 1 has a boundary atom");
            if idx > k {
                true
            } else if idx < k {
                false
            } else {
                rng.gen::<f64>() < p_q
            }
        } else {
            false
        };
        record(i, q, positive);
        if i == 0 {
            chosen_value_idx = idx;
        }
        if positive {
            positives += 1;
            last_positive = Some(i);
            chosen_value_idx = idx;
        }
    }
    let chosen = select(last_positive);
    let value = dist.values()[chosen_value_idx];
    (chosen, value, dist.values()[max_idx])
}

fn continuous_core<R: Rng + ?Sized>(
    policy: &QuantilePolicy,
    dist: &ContinuousDistribution,
    n: usize,
    rng: &mut R,
    mut record: impl FnMut(usize, f64, bool),
) -> (usize, f64, f64) {
    assert!(
        policy.alphas[0] < n as f64,
        "policy requires alpha_1 < n for q_1 < 1"
    );
    let mut positives = 0usize;
    let mut last_positive = None;
    let mut chosen_value = 0.0f64;
    let mut max_value = f64::NEG_INFINITY;
    for i in 0..n {
        let x = dist.sample(rng);
        max_value = max_value.max(x);
        let q = policy.next_quantile(positives, n);
        let (threshold, positive) = if q > 0.0 {
            let tau = dist.quantile(1.0 - q);
            (tau, x >= tau)
        } else {
            (dist.quantile(1.0), false)
        };
        record(i, threshold, positive);
        if i == 0 {
            chosen_value = x;
        }
        if positive {
            positives += 1;
            last_positive = Some(i);
            chosen_value = x;
        }
    }
    (select(last_positive), chosen_value, max_value)
}

/// Plays the adaptive quantile policy with threshold tests `Q(1 - q_j)` on a
/// continuous distribution.
///
/// Panics if `alpha_1 >= n`.
pub fn play_continuous<R: Rng + ?Sized>(
    policy: &QuantilePolicy,
    dist: &ContinuousDistribution,
    n: usize,
    rng: &mut R,
) -> PlayResult {
    let mut records = Vec::with_capacity(n);
    let (chosen_index, chosen_value, _) = continuous_core(policy, dist, n, rng, |i, tau, pos| {
        records.push(TestRecord {
            box_index: i,
            probe: Probe::Threshold(tau),
            positive: pos,
        })
    });
    PlayResult {
        chosen_index,
        chosen_value,
        history: TestHistory::from_records(records),
    }
}

/// History-free variant of [`play_continuous`] for Monte Carlo loops;
/// returns `(chosen value, realized max)`.
pub fn play_continuous_value<R: Rng + ?Sized>(
    policy: &QuantilePolicy,
    dist: &ContinuousDistribution,
    n: usize,
    rng: &mut R,
) -> (f64, f64) {
    let (_, v, mx) = continuous_core(policy, dist, n, rng, |_, _, _| {});
    (v, mx)
}

/// Plays the adaptive quantile policy with probability tests on a discrete
/// distribution; same state machine and selection rule as the continuous
/// play.
///
/// Panics if `alpha_1 >= n`.
pub fn play_discrete<R: Rng + ?Sized>(
    policy: &QuantilePolicy,
    dist: &DiscreteDistribution,
    n: usize,
    rng: &mut R,
) -> PlayResult {
    let mut records = Vec::with_capacity(n);
    let (chosen_index, chosen_value, _) = discrete_core(policy, dist, n, rng, |i, q, pos| {
        records.push(TestRecord {
            box_index: i,
            probe: Probe::Quantile(q),
            positive: pos,
        })
    });
    PlayResult {
        chosen_index,
        chosen_value,
        history: TestHistory::from_records(records),
    }
}

/// History-free variant of [`play_discrete`]; returns
/// `(chosen value, realized max)`.
pub fn play_discrete_value<R: Rng + ?Sized>(
    policy: &QuantilePolicy,
    dist: &DiscreteDistribution,
    n: usize,
    rng: &mut R,
) -> (f64, f64) {
    let (_, v, mx) = discrete_core(policy, dist, n, rng, |_, _, _| {});
    (v, mx)
}

fn gambler_backward(dist: &DiscreteDistribution, n: usize) -> (Vec<f64>, f64) {
    assert!(n >= 1);
    let mut thresholds = vec![0.0; n];
    let mut w = 0.0f64;
    for i in (0..n).rev() {
        thresholds[i] = w;
        w = dist
            .values()
            .iter()
            .zip(dist.probs())
            .map(|(&v, &p)| p * v.max(w))
            .sum();
    }
    (thresholds, w)
}

/// Backward-induction thresholds of the optimal gambler: `t_i` is the value
/// of the optimal play on boxes `i+1..n`, so `t_n = 0` and the sequence is
/// non-increasing.
pub fn gambler_thresholds(dist: &DiscreteDistribution, n: usize) -> Vec<f64> {
    gambler_backward(dist, n).0
}

/// Expected value of the optimal gambler on `n` boxes (the non-adaptive
/// testing baseline).
pub fn gambler_value(dist: &DiscreteDistribution, n: usize) -> f64 {
    gambler_backward(dist, n).1
}

/// History-free non-adaptive play for Monte Carlo loops; returns
/// `(chosen value, realized max)`.
pub fn play_nonadaptive_value<R: Rng + ?Sized>(
    thresholds: &[f64],
    dist: &DiscreteDistribution,
    n: usize,
    rng: &mut R,
) -> (f64, f64) {
    assert_eq!(thresholds.len(), n, "one threshold per box");
    let mut first_positive = None;
    let mut chosen_value = 0.0;
    let mut max_value = f64::NEG_INFINITY;
    for (i, &t) in thresholds.iter().enumerate() {
        let x = dist.sample(rng);
        max_value = max_value.max(x);
        if i == 0 {
            chosen_value = x;
        }
        if x >= t && first_positive.is_none() {
            first_positive = Some(i);
            chosen_value = x;
        }
    }
    (chosen_value, max_value)
}

/// Tests box `i` at the fixed threshold `t_i` and selects the earliest
/// positively tested box, falling back to box 0 (which failed the highest
/// threshold) when every test is negative.
pub fn play_nonadaptive<R: Rng + ?Sized>(
    thresholds: &[f64],
    dist: &DiscreteDistribution,
    n: usize,
    rng: &mut R,
) -> PlayResult {
    assert_eq!(thresholds.len(), n, "one threshold per box");
    assert!(
        thresholds.windows(2).all(|w| w[0] >= w[1]),
        "thresholds must be non-increasing"
    );
    let mut records = Vec::with_capacity(n);
    let mut first_positive = None;
    let mut chosen_value = 0.0;
    for (i, &t) in thresholds.iter().enumerate() {
        let x = dist.sample(rng);
        let positive = x >= t;
        records.push(TestRecord {
            box_index: i,
            probe: Probe::Threshold(t),
            positive,
        });
        if i == 0 {
            chosen_value = x;
        }
        if positive && first_positive.is_none() {
            first_positive = Some(i);
            chosen_value = x;
        }
    }
    PlayResult {
        chosen_index: first_positive.unwrap_or(0),
        chosen_value,
        history: TestHistory::from_records(records),
    }
}
