//! Exact analysis of adaptive quantile policies.
//!
//! For a policy `alpha_1 > ... > alpha_k` the chosen box's complementary CDF
//! in quantile coordinates is a piecewise function of `alpha = n * q`:
//! conditioned on exactly `i` positive tests the selected box is the one that
//! passed the `i`-th threshold, so
//!
//! `A(alpha) = sum_i Pr[i positives] * min(1, alpha / alpha_i)`
//!
//! for `alpha <= alpha_1`, plus a fallback piece above `alpha_1`. Comparing
//! `A` against `G_m(alpha) = 1 - (1 - alpha/n)^n` pointwise (stochastic
//! dominance) yields the policy's competitive ratio as the minimum of the
//! ratio curve `c(alpha) = A(alpha) / G_m(alpha)` over `(0, n]`.
//!
//! Everything exists in two modes: exact finite `n`, and the `n -> infinity`
//! limit where `(1 - alpha/n)^n` becomes `exp(-alpha)`. Closed forms for the
//! positive-count probabilities are divided differences of that decay
//! function; an independent forward DP over boxes
//! ([`positive_counts_exact`]) cross-checks them.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::DiscreteDistribution;
use crate::policies::QuantilePolicy;
use crate::{Error, Result};

/// Below this gap, closed forms switch to confluent (derivative) limits.
const CONFLUENT_GAP: f64 = 1e-6;
/// Below this gap, parameters are rejected as degenerate.
const DEGENERATE_GAP: f64 = 1e-10;
/// Finite `n` standing in for the limit when no closed form exists (k >= 4).
const LIMIT_APPROX_N: usize = 10_000_000;
/// Grid resolution used to seed golden-section searches.
const PIECE_GRID: usize = 1000;
/// Fixed seed for the optimizer's random restarts.
const OPTIMIZER_SEED: u64 = 0x5eed_0001;

/// `(1 - a/n)^n` without cancellation for large `n`.
fn pow_one_minus(a: f64, n: f64) -> f64 {
    if a >= n {
        0.0
    } else {
        (n * (-a / n).ln_1p()).exp()
    }
}

/// The per-box survival decay the closed forms are built from.
#[derive(Clone, Copy)]
enum Decay {
    /// `g(x) = (1 - x/n)^n`
    Finite(f64),
    /// `g(x) = exp(-x)`
    Limit,
}

impl Decay {
    fn g(self, x: f64) -> f64 {
        match self {
            Decay::Finite(n) => pow_one_minus(x, n),
            Decay::Limit => (-x).exp(),
        }
    }

    fn g1(self, x: f64) -> f64 {
        match self {
            Decay::Finite(n) => -self.g(x) * n / (n - x),
            Decay::Limit => -(-x).exp(),
        }
    }

    fn g2(self, x: f64) -> f64 {
        match self {
            Decay::Finite(n) => self.g(x) * n * (n - 1.0) / ((n - x) * (n - x)),
            Decay::Limit => (-x).exp(),
        }
    }

    /// First divided difference `(g(a) - g(b)) / (a - b)`, confluent-safe.
    fn dd1(self, a: f64, b: f64) -> f64 {
        if (a - b).abs() < CONFLUENT_GAP {
            self.g1(0.5 * (a + b))
        } else {
            (self.g(a) - self.g(b)) / (a - b)
        }
    }

    /// Second divided difference over `{a, b, c}`, confluent-safe.
    fn dd2(self, a: f64, b: f64, c: f64) -> f64 {
        if (a - c).abs() < CONFLUENT_GAP {
            0.5 * self.g2((a + b + c) / 3.0)
        } else {
            (self.dd1(a, b) - self.dd1(b, c)) / (a - c)
        }
    }
}

/// Exact distribution of the number of positive tests a quantile policy sees
/// over `n` boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositiveCountDist {
    probs: Vec<f64>,
}

impl PositiveCountDist {
    /// `Pr[exactly i positive tests]` for `i = 0..=k`.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Forward DP over boxes: state is the number of positives so far, each box
/// tests positive with probability `alpha_{j+1}/n` (0 once `j = k`). This is
/// the independent oracle for the closed forms `Pr[E_10]`, `Pr[E_110]`.
pub fn positive_counts_exact(alphas: &[f64], n: usize) -> PositiveCountDist {
    validate_alphas(alphas, Some(n)).expect("valid policy parameters");
    let k = alphas.len();
    let q: Vec<f64> = alphas.iter().map(|a| a / n as f64).collect();
    let mut p = vec![0.0f64; k + 1];
    p[0] = 1.0;
    for _ in 0..n {
        for j in (0..k).rev() {
            let moved = p[j] * q[j];
            p[j + 1] += moved;
            p[j] -= moved;
        }
    }
    PositiveCountDist { probs: p }
}

/// Limit (`n -> infinity`) positive-count probabilities, closed-form for
/// `k <= 3`.
fn positive_counts_limit(alphas: &[f64]) -> Result<PositiveCountDist> {
    let k = alphas.len();
    debug_assert!(k <= 3);
    let d = Decay::Limit;
    let p0 = d.g(alphas[0]);
    let probs = match k {
        1 => vec![p0, 1.0 - p0],
        2 => {
            let p1 = -alphas[0] * d.dd1(alphas[0], alphas[1]);
            vec![p0, p1, 1.0 - p0 - p1]
        }
        3 => {
            let p1 = -alphas[0] * d.dd1(alphas[0], alphas[1]);
            let p2 = alphas[0] * alphas[1] * d.dd2(alphas[0], alphas[1], alphas[2]);
            vec![p0, p1, p2, 1.0 - p0 - p1 - p2]
        }
        _ => unreachable!(),
    };
    Ok(PositiveCountDist { probs })
}

/// `Pr[E_10]`: a positive test for the first threshold but not the second.
///
/// Closed form `alpha_1 * ((1-a2/n)^n - (1-a1/n)^n) / (a1 - a2)`, with the
/// confluent limit `n q (1-q)^{n-1}` when the parameters nearly coincide.
/// `alpha2 = 0` is allowed (the second test never passes).
pub fn prob_e10(alpha1: f64, alpha2: f64, n: usize) -> f64 {
    assert!(
        alpha2 >= 0.0 && alpha2 < alpha1 && alpha1 < n as f64,
        "need 0 <= alpha2 < alpha1 < n"
    );
    -alpha1 * Decay::Finite(n as f64).dd1(alpha1, alpha2)
}

/// `Pr[E_110]`: positive tests for the first two thresholds but not the
/// third. Errors with [`Error::DegenerateParameters`] when two parameters
/// coincide within `1e-10` (the closed form divides by their gaps).
pub fn prob_e110(alpha1: f64, alpha2: f64, alpha3: f64, n: usize) -> Result<f64> {
    assert!(
        alpha3 >= 0.0 && alpha3 < alpha2 && alpha2 < alpha1 && alpha1 < n as f64,
        "need 0 <= alpha3 < alpha2 < alpha1 < n"
    );
    if (alpha1 - alpha2) < DEGENERATE_GAP || (alpha2 - alpha3) < DEGENERATE_GAP {
        return Err(Error::DegenerateParameters);
    }
    Ok(alpha1 * alpha2 * Decay::Finite(n as f64).dd2(alpha1, alpha2, alpha3))
}

fn validate_alphas(alphas: &[f64], n: Option<usize>) -> Result<()> {
    if alphas.is_empty() {
        return Err(Error::BadParameter("need at least one alpha".into()));
    }
    if alphas.iter().any(|a| !a.is_finite() || *a <= 0.0) {
        return Err(Error::BadParameter("alphas must be finite and > 0".into()));
    }
    if alphas.windows(2).any(|w| w[0] - w[1] < DEGENERATE_GAP) {
        return Err(Error::DegenerateParameters);
    }
    if let Some(n) = n {
        if alphas[0] >= n as f64 {
            return Err(Error::BadParameter(format!(
                "alpha_1 = {} must be below n = {n}",
                alphas[0]
            )));
        }
    }
    Ok(())
}

/// Evaluation mode of a [`RatioCurve`]: exact at finite `n`, or the
/// `n -> infinity` limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveMode {
    Finite(usize),
    Limit,
}

/// Minimum of the ratio curve on one interval `I_j = [alpha_{j+1}, alpha_j]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PieceMin {
    /// Interval index `j` (k down to 0; 0 is the tail above `alpha_1`).
    pub interval: usize,
    pub c_min: f64,
    /// Location of the minimum; 0 for the `alpha -> 0` infimum of `I_k`,
    /// `n` (finite) or infinity (limit) for the `I_0` tail bound.
    pub alpha_star: f64,
}

/// The competitive-ratio curve `c(alpha) = A(alpha) / G_m(alpha)` of a
/// quantile policy, with its positive-count distribution precomputed.
#[derive(Debug, Clone)]
pub struct RatioCurve {
    alphas: Vec<f64>,
    mode: CurveMode,
    counts: PositiveCountDist,
    approximate_limit: bool,
}

impl RatioCurve {
    /// Builds the curve. Limit mode uses closed-form count probabilities for
    /// `k <= 3`; for `k >= 4` it evaluates the count DP at `n = 10^7` and
    /// flags the curve as an approximation ([`Self::is_approximate_limit`]).
    pub fn new(alphas: &[f64], mode: CurveMode) -> Result<Self> {
        match mode {
            CurveMode::Finite(n) => {
                validate_alphas(alphas, Some(n))?;
                Ok(Self {
                    alphas: alphas.to_vec(),
                    mode,
                    counts: positive_counts_exact(alphas, n),
                    approximate_limit: false,
                })
            }
            CurveMode::Limit => {
                validate_alphas(alphas, None)?;
                if alphas.len() <= 3 {
                    Ok(Self {
                        alphas: alphas.to_vec(),
                        mode,
                        counts: positive_counts_limit(alphas)?,
                        approximate_limit: false,
                    })
                } else {
                    if alphas[0] >= LIMIT_APPROX_N as f64 {
                        return Err(Error::BadParameter("alpha_1 too large".into()));
                    }
                    Ok(Self {
                        alphas: alphas.to_vec(),
                        mode,
                        counts: positive_counts_exact(alphas, LIMIT_APPROX_N),
                        approximate_limit: true,
                    })
                }
            }
        }
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn mode(&self) -> CurveMode {
        self.mode
    }

    pub fn counts(&self) -> &PositiveCountDist {
        &self.counts
    }

    /// True when the limit curve is backed by a large-`n` evaluation rather
    /// than a closed form.
    pub fn is_approximate_limit(&self) -> bool {
        self.approximate_limit
    }

    /// Upper end of the curve's domain `(0, alpha_max]`.
    pub fn alpha_max(&self) -> f64 {
        match self.mode {
            CurveMode::Finite(n) => n as f64,
            CurveMode::Limit => f64::INFINITY,
        }
    }

    /// `G_m(alpha) = Pr[max >= threshold at quantile alpha/n]`.
    pub fn gm(&self, alpha: f64) -> f64 {
        match self.mode {
            CurveMode::Finite(n) => 1.0 - pow_one_minus(alpha, n as f64),
            CurveMode::Limit => -(-alpha).exp_m1(),
        }
    }

    /// `A(alpha) = Pr[X_sigma >= threshold at quantile alpha/n]`.
    pub fn algo_ccdf(&self, alpha: f64) -> f64 {
        assert!(alpha > 0.0 && alpha <= self.alpha_max(), "alpha in (0, alpha_max]");
        let p = self.counts.probs();
        if alpha <= self.alphas[0] {
            let mut a = 0.0;
            for (i, &alpha_i) in self.alphas.iter().enumerate() {
                a += p[i + 1] * (alpha / alpha_i).min(1.0);
            }
            a
        } else {
            match self.mode {
                // the box chosen after an all-negative run is uniform on the
                // bottom 1 - alpha_1/n of mass
                CurveMode::Finite(n) => {
                    (1.0 - p[0]) + p[0] * (alpha - self.alphas[0]) / (n as f64 - self.alphas[0])
                }
                CurveMode::Limit => 1.0 - p[0],
            }
        }
    }

    /// The ratio `c(alpha) = A(alpha) / G_m(alpha)`.
    pub fn eval(&self, alpha: f64) -> f64 {
        self.algo_ccdf(alpha) / self.gm(alpha)
    }

    /// `lim_{alpha -> 0+} c(alpha)`, the infimum over the innermost interval.
    fn inner_limit(&self) -> f64 {
        let p = self.counts.probs();
        let slope: f64 = self
            .alphas
            .iter()
            .enumerate()
            .map(|(i, &a)| p[i + 1] / a)
            .sum();
        match self.mode {
            // G_m(alpha) ~ alpha * g'(0) with g'(0) = 1 in both modes
            CurveMode::Finite(_) | CurveMode::Limit => slope,
        }
    }

    /// Per-interval minima, from `I_k` down to the `I_0` tail.
    ///
    /// Interior intervals are minimized by golden-section search seeded from
    /// a 1000-point grid (tolerance `1e-8` in alpha). `I_k`'s infimum is the
    /// `alpha -> 0` limit; `I_0` reports the monotone tail bound, evaluated
    /// at `alpha = n` for finite mode and at `alpha -> infinity`
    /// (`1 - e^{-alpha_1}`) in limit mode.
    pub fn piece_minima(&self) -> Vec<PieceMin> {
        let k = self.alphas.len();
        let mut out = Vec::with_capacity(k + 1);
        out.push(PieceMin {
            interval: k,
            c_min: self.inner_limit(),
            alpha_star: 0.0,
        });
        for j in (1..k).rev() {
            let (lo, hi) = (self.alphas[j], self.alphas[j - 1]);
            let (alpha_star, c_min) = grid_golden_min(|a| self.eval(a), lo, hi);
            out.push(PieceMin {
                interval: j,
                c_min,
                alpha_star,
            });
        }
        let tail = match self.mode {
            CurveMode::Finite(n) => PieceMin {
                interval: 0,
                c_min: 1.0 - pow_one_minus(self.alphas[0], n as f64),
                alpha_star: n as f64,
            },
            CurveMode::Limit => PieceMin {
                interval: 0,
                c_min: -(-self.alphas[0]).exp_m1(),
                alpha_star: f64::INFINITY,
            },
        };
        out.push(tail);
        out
    }
}

/// `A(alpha)` at finite `n` for raw parameters (builds the count DP once per
/// call; use [`RatioCurve`] for repeated evaluation).
pub fn algo_ccdf(alphas: &[f64], n: usize, alpha: f64) -> f64 {
    RatioCurve::new(alphas, CurveMode::Finite(n))
        .expect("valid parameters")
        .algo_ccdf(alpha)
}

fn grid_golden_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let mut best = (lo, f(lo));
    for i in 1..=PIECE_GRID {
        let x = lo + (hi - lo) * i as f64 / PIECE_GRID as f64;
        let fx = f(x);
        if fx < best.1 {
            best = (x, fx);
        }
    }
    let span = (hi - lo) / PIECE_GRID as f64;
    let (mut a, mut b) = ((best.0 - span).max(lo), (best.0 + span).min(hi));
    const INVPHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = b - INVPHI * (b - a);
    let mut x2 = a + INVPHI * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > 1e-8 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INVPHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INVPHI * (b - a);
            f2 = f(x2);
        }
    }
    let mid = 0.5 * (a + b);
    let fmid = f(mid);
    if fmid < best.1 {
        (mid, fmid)
    } else {
        best
    }
}

/// Global minimum of the ratio curve: `(c_star, alpha_star)`.
pub fn min_ratio(alphas: &[f64], mode: CurveMode) -> Result<(f64, f64)> {
    let curve = RatioCurve::new(alphas, mode)?;
    let pieces = curve.piece_minima();
    let best = pieces
        .iter()
        .min_by(|a, b| a.c_min.total_cmp(&b.c_min))
        .expect("at least two pieces");
    Ok((best.c_min, best.alpha_star))
}

/// Result of the maximin parameter search.
#[derive(Debug, Clone, Serialize)]
pub struct OptimizeResult {
    pub alphas: Vec<f64>,
    pub c_star: f64,
    pub pieces: Vec<PieceMin>,
    /// True when `c_star` is a large-`n` approximation of the limit (k >= 4).
    pub approximate_limit: bool,
}

/// Maximizes the limit-mode competitive ratio over `alpha_1 > ... > alpha_k`
/// by multi-start pattern search: 24 starts drawn log-uniformly from
/// `[1e-4, 4]^k`, log-space polling over coordinate, pairwise-difference and
/// uniform directions, shrink factor 0.5, termination at step `1e-6`.
///
/// For `k >= 4` the search objective evaluates the curve at `n = 10^5` and
/// the reported optimum is re-evaluated as a limit approximation.
pub fn optimize_alphas(k: usize) -> Result<OptimizeResult> {
    if !(1..=5).contains(&k) {
        return Err(Error::BadParameter(format!("k must be in 1..=5, got {k}")));
    }
    let search_mode = if k <= 3 {
        CurveMode::Limit
    } else {
        CurveMode::Finite(100_000)
    };
    let objective = |alphas: &[f64]| -> f64 {
        if alphas[k - 1] < 1e-9 || alphas[0] > 50.0 {
            return -1.0;
        }
        if alphas.windows(2).any(|w| w[0] - w[1] < DEGENERATE_GAP * 10.0) {
            return -1.0;
        }
        match min_ratio(alphas, search_mode) {
            Ok((c, _)) => c,
            Err(_) => -1.0,
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(OPTIMIZER_SEED);
    let mut starts: Vec<Vec<f64>> = (0..24)
        .map(|_| loop {
            let mut x: Vec<f64> = (0..k)
                .map(|_| {
                    let u: f64 = rng.gen();
                    (1e-4f64.ln() + u * (4.0f64.ln() - 1e-4f64.ln())).exp()
                })
                .collect();
            x.sort_by(|a, b| b.total_cmp(a));
            if x.windows(2).all(|w| w[0] - w[1] > 1e-6) {
                break x;
            }
        })
        .collect();
    if k >= 4 {
        // warm start: the best (k-1)-parameter policy with a small extra level
        let prev = optimize_alphas(k - 1)?;
        let mut warm = prev.alphas;
        warm.push(warm[k - 2] / 100.0);
        starts.push(warm);
    }

    let dirs = poll_directions(k);
    let results: Vec<(usize, Vec<f64>, f64)> = starts
        .into_par_iter()
        .enumerate()
        .map(|(idx, start)| {
            let (x, c) = pattern_search(start, &dirs, &objective);
            (idx, x, c)
        })
        .collect();
    let (_, best_alphas, _) = results
        .into_iter()
        .max_by(|a, b| a.2.total_cmp(&b.2).then(b.0.cmp(&a.0)))
        .expect("at least one start");

    // report the optimum in limit mode (approximate for k >= 4)
    let curve = RatioCurve::new(&best_alphas, CurveMode::Limit)?;
    let pieces = curve.piece_minima();
    let c_star = pieces
        .iter()
        .map(|p| p.c_min)
        .fold(f64::INFINITY, f64::min);
    Ok(OptimizeResult {
        alphas: best_alphas,
        c_star,
        pieces,
        approximate_limit: curve.is_approximate_limit(),
    })
}

fn poll_directions(k: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for i in 0..k {
        let mut e = vec![0.0; k];
        e[i] = 1.0;
        dirs.push(e.clone());
        e[i] = -1.0;
        dirs.push(e);
    }
    for i in 0..k {
        for j in (i + 1)..k {
            let mut e = vec![0.0; k];
            e[i] = 1.0;
            e[j] = -1.0;
            dirs.push(e.clone());
            e[i] = -1.0;
            e[j] = 1.0;
            dirs.push(e);
        }
    }
    if k > 1 {
        dirs.push(vec![1.0; k]);
        dirs.push(vec![-1.0; k]);
    }
    dirs
}

fn pattern_search(
    mut x: Vec<f64>,
    dirs: &[Vec<f64>],
    objective: &dyn Fn(&[f64]) -> f64,
) -> (Vec<f64>, f64) {
    let apply = |x: &[f64], d: &[f64], step: f64| -> Vec<f64> {
        x.iter()
            .zip(d)
            .map(|(&xi, &di)| xi * (step * di).exp())
            .collect()
    };
    let mut fx = objective(&x);
    let mut step = 1.0f64;
    while step > 1e-6 {
        let mut improved = false;
        for d in dirs {
            let y = apply(&x, d, step);
            let fy = objective(&y);
            if fy > fx {
                x = y;
                fx = fy;
                improved = true;
                // ride the improving direction while it keeps paying
                loop {
                    let z = apply(&x, d, step);
                    let fz = objective(&z);
                    if fz > fx {
                        x = z;
                        fx = fz;
                    } else {
                        break;
                    }
                }
                break;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, fx)
}

/// Report of a pointwise stochastic-dominance check `A >= c * G_m`.
#[derive(Debug, Clone, Serialize)]
pub struct DominanceReport {
    pub holds: bool,
    /// First grid alpha (ascending) violating the bound, if any.
    pub first_violation: Option<f64>,
    /// Grid point with the largest violation `c * G_m - A` (or the smallest
    /// slack when the bound holds).
    pub worst_alpha: f64,
    /// `c * G_m - A` at `worst_alpha`; positive means violated.
    pub worst_margin: f64,
}

/// Verifies `A(alpha) >= c * G_m(alpha)` on a log-spaced grid over `(0, n]`
/// (the policy breakpoints are always included).
pub fn check_dominance(alphas: &[f64], n: usize, c: f64, grid_size: usize) -> DominanceReport {
    assert!(grid_size >= 100, "grid_size must be at least 100");
    let curve = RatioCurve::new(alphas, CurveMode::Finite(n)).expect("valid parameters");
    let lo: f64 = 1e-6;
    let hi = n as f64;
    let ratio = (hi / lo).ln();
    let mut grid: Vec<f64> = (0..=grid_size)
        .map(|i| (lo * (ratio * i as f64 / grid_size as f64).exp()).min(hi))
        .collect();
    grid.extend(alphas.iter().copied());
    grid.sort_by(f64::total_cmp);

    let mut first_violation = None;
    let mut worst = (grid[0], f64::NEG_INFINITY);
    for &alpha in &grid {
        let margin = c * curve.gm(alpha) - curve.algo_ccdf(alpha);
        if margin > 0.0 && first_violation.is_none() {
            first_violation = Some(alpha);
        }
        if margin > worst.1 {
            worst = (alpha, margin);
        }
    }
    DominanceReport {
        holds: first_violation.is_none(),
        first_violation,
        worst_alpha: worst.0,
        worst_margin: worst.1,
    }
}

/// Exact expected value `E[X_sigma]` of a quantile policy under
/// probability-testing semantics on a discrete distribution.
///
/// Conditioned on `j >= 1` positives the selected box is the one that passed
/// the `j`-th test, whose value is the top-`q_j` conditional mean; with no
/// positives the fallback box failed the `q_1` test. Counts come from the
/// forward DP, so the whole expression is exact up to rounding.
pub fn exact_policy_value(
    policy: &QuantilePolicy,
    dist: &DiscreteDistribution,
    n: usize,
) -> f64 {
    let alphas = policy.alphas();
    assert!(alphas[0] < n as f64, "policy requires alpha_1 < n");
    let counts = positive_counts_exact(alphas, n);
    let p = counts.probs();
    let q1 = alphas[0] / n as f64;
    let mut total = p[0] * dist.cond_exp_bottom_mass(q1);
    for (j, &alpha_j) in alphas.iter().enumerate() {
        if p[j + 1] > 0.0 {
            total += p[j + 1] * dist.cond_exp_top_mass(alpha_j / n as f64);
        }
    }
    total
}
