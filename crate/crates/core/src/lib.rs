//! Threshold testing: choose a large value out of `n` i.i.d. draws when each
//! box can only be queried with binary threshold tests ("is `X_i >= t`?") and
//! the selection happens after all tests are done.
//!
//! The crate provides
//!
//! - [`distributions`]: discrete and quantile-form continuous value
//!   distributions with CDF / conditional-expectation / expected-maximum
//!   primitives,
//! - [`policies`]: executable testing policies — the adaptive k-threshold
//!   quantile policy, probability testing for discrete supports, and the
//!   non-adaptive gambler baseline,
//! - [`analytics`]: exact finite-`n` and limit competitive-ratio curves for
//!   quantile policies, stochastic-dominance checks, and maximin parameter
//!   optimization,
//! - [`dp`]: the exact optimal testing policy for finite discrete
//!   distributions by backward induction, with brute-force and
//!   randomized-policy dominance oracles,
//! - [`multi_test`]: the budgeted multi-test algorithm that finds the maximum
//!   with probability `1 - o(1)` using `n` tests overall,
//! - [`sim`]: a deterministic, parallel Monte Carlo engine that cross-checks
//!   every analytic quantity above.
//!
//! Competitive ratios are always `E[X_sigma] / E[max X_i]` where `sigma` is
//! the box the policy picks.

pub mod analytics;
pub mod distributions;
pub mod dp;
pub mod policies;
pub mod sim;

pub use analytics::{
    algo_ccdf, check_dominance, exact_policy_value, min_ratio, optimize_alphas,
    positive_counts_exact, prob_e10, prob_e110, CurveMode, DominanceReport, OptimizeResult,
    PieceMin, PositiveCountDist, RatioCurve,
};
pub use distributions::{
    counterexample3, f_a, f_a_discrete, f_b, f_b_continuous, golden_nugget,
    golden_nugget_continuous, uniform01, ContinuousDistribution, DiscreteDistribution,
    Distribution, Side,
};
pub use dp::{
    brute_force_optimal, dominance_vs_randomized, ratio, simulate_dp_policy,
    simulate_dp_policy_value, solve, DpState, DpTable, RandomizedDominanceReport,
};
pub use multi_test::{
    binary_search_type, run_multi_test, type_of, Budget, MultiTestOutcome, TypedBox,
};
pub use policies::{
    gambler_thresholds, gambler_value, play_continuous, play_continuous_value, play_discrete,
    play_discrete_value, play_nonadaptive, play_nonadaptive_value, probability_test, PlayResult,
    Probe, QuantilePolicy, TestHistory, TestRecord,
};
pub use sim::{estimate, replicate_rng, run_replicates, summarize, Replicate, SimConfig, SimResult};

/// Errors shared across the crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A builder or constructor received an out-of-range argument.
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    /// A conditional expectation was requested on a probability-zero event.
    #[error("conditioning event has probability zero")]
    EmptyCondition,
    /// Quantile parameters coincide and a closed form divides by their gap.
    #[error("quantile parameters coincide within 1e-10")]
    DegenerateParameters,
    /// An exhaustive oracle was asked to enumerate past its size bound.
    #[error("instance too large: {0}")]
    TooLarge(String),
    /// A value lies below the initial threshold of the multi-test search.
    #[error("value below the initial multi-test threshold")]
    BelowThreshold,
}

pub type Result<T> = std::result::Result<T, Error>;
