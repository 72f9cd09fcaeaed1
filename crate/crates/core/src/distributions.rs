//! Value distributions and the probability primitives used everywhere else:
//! complementary CDFs, conditional expectations, expected maxima of i.i.d.
//! draws, and inverse-transform sampling.
//!
//! Discrete distributions are plain (value, probability) lists; continuous
//! distributions are represented solely by their quantile function (a
//! piecewise-linear inverse CDF), so thresholds are always constructed as
//! `Q(1 - q)` without any root finding.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Width used when a point mass is widened into a continuous ramp.
const ATOM_WIDTH: f64 = 1e-9;

/// Which side of a support value to condition on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `E[X | X >= v_k]`
    Above,
    /// `E[X | X < v_k]`
    Below,
}

/// A finite discrete distribution on non-negative reals.
///
/// Invariants established at construction: values strictly increasing and
/// non-negative, probabilities positive and summing to one within `1e-12`,
/// zero-mass atoms dropped. All derived sums (prefix, suffix, partial
/// expectations) are precomputed once; the value is immutable afterwards and
/// safe to share across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDiscrete", into = "RawDiscrete")]
pub struct DiscreteDistribution {
    values: Vec<f64>,
    probs: Vec<f64>,
    /// `tail[j] = sum_{i >= j} probs[i]`, with `tail[m] = 0`.
    tail: Vec<f64>,
    /// `below[j] = sum_{i < j} probs[i]` (exclusive prefix).
    below: Vec<f64>,
    /// `tail_pv[j] = sum_{i >= j} probs[i] * values[i]`.
    tail_pv: Vec<f64>,
    /// `below_pv[j] = sum_{i < j} probs[i] * values[i]`.
    below_pv: Vec<f64>,
    mean: f64,
}

#[derive(Serialize, Deserialize)]
struct RawDiscrete {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl TryFrom<RawDiscrete> for DiscreteDistribution {
    type Error = Error;
    fn try_from(raw: RawDiscrete) -> Result<Self> {
        Self::new(raw.values, raw.probs)
    }
}

impl From<DiscreteDistribution> for RawDiscrete {
    fn from(d: DiscreteDistribution) -> Self {
        RawDiscrete {
            values: d.values,
            probs: d.probs,
        }
    }
}

impl DiscreteDistribution {
    /// Builds a distribution from parallel (value, probability) lists.
    ///
    /// Zero-probability atoms are dropped; negative probabilities, values out
    /// of order, or a total mass off one by more than `1e-12` are rejected.
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.len() != probs.len() {
            return Err(Error::BadParameter(format!(
                "{} values vs {} probabilities",
                values.len(),
                probs.len()
            )));
        }
        let mut vp: Vec<(f64, f64)> = Vec::with_capacity(values.len());
        for (&v, &p) in values.iter().zip(&probs) {
            if !v.is_finite() || !p.is_finite() {
                return Err(Error::BadParameter("non-finite entry".into()));
            }
            if v < 0.0 {
                return Err(Error::BadParameter(format!("negative value {v}")));
            }
            if p < 0.0 {
                return Err(Error::BadParameter(format!("negative probability {p}")));
            }
            if p > 0.0 {
                vp.push((v, p));
            }
        }
        if vp.is_empty() {
            return Err(Error::BadParameter("empty support".into()));
        }
        if vp.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::BadParameter(
                "values must be strictly increasing".into(),
            ));
        }
        let total: f64 = kahan_sum(vp.iter().map(|&(_, p)| p));
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::BadParameter(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        let m = vp.len();
        let (values, probs): (Vec<f64>, Vec<f64>) = vp.into_iter().unzip();
        let mut tail = vec![0.0; m + 1];
        let mut tail_pv = vec![0.0; m + 1];
        for j in (0..m).rev() {
            tail[j] = tail[j + 1] + probs[j];
            tail_pv[j] = tail_pv[j + 1] + probs[j] * values[j];
        }
        let mut below = vec![0.0; m + 1];
        let mut below_pv = vec![0.0; m + 1];
        for j in 0..m {
            below[j + 1] = below[j] + probs[j];
            below_pv[j + 1] = below_pv[j] + probs[j] * values[j];
        }
        let mean = kahan_sum(values.iter().zip(&probs).map(|(&v, &p)| v * p));
        Ok(Self {
            values,
            probs,
            tail,
            below,
            tail_pv,
            below_pv,
            mean,
        })
    }

    /// Support size `m`.
    pub fn m(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `Pr[X >= v_j]` for the 0-based support index `j` (`tail[m] = 0`).
    pub fn tail_from(&self, j: usize) -> f64 {
        self.tail[j]
    }

    /// `Pr[X < v_j]` for the 0-based support index `j`.
    pub fn mass_below(&self, j: usize) -> f64 {
        self.below[j]
    }

    /// `Pr[X >= x]`, summed directly over the atoms at or above `x`.
    pub fn ccdf(&self, x: f64) -> f64 {
        let j = self.values.partition_point(|&v| v < x);
        self.tail[j]
    }

    /// Expected maximum of `n` i.i.d. draws.
    ///
    /// Telescoping form `sum_j v_j * (F(<=v_j)^n - F(<v_j)^n)` with
    /// compensated summation.
    pub fn expected_max(&self, n: usize) -> f64 {
        assert!(n >= 1, "expected_max requires n >= 1");
        let m = self.m();
        let terms = (0..m).map(|j| {
            let le = 1.0 - self.tail[j + 1]; // F(<= v_j)
            let lt = 1.0 - self.tail[j]; // F(< v_j)
            self.values[j] * (powi_checked(le, n) - powi_checked(lt, n))
        });
        kahan_sum(terms)
    }

    /// Conditional expectation `E[X | X >= v_k]` or `E[X | X < v_k]` for a
    /// 0-based support index.
    pub fn cond_exp(&self, idx: usize, side: Side) -> Result<f64> {
        assert!(idx < self.m(), "support index out of range");
        match side {
            Side::Above => Ok(self.tail_pv[idx] / self.tail[idx]),
            Side::Below => {
                if self.below[idx] <= 0.0 {
                    Err(Error::EmptyCondition)
                } else {
                    Ok(self.below_pv[idx] / self.below[idx])
                }
            }
        }
    }

    /// Draws one value by inverse transform.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.values[self.sample_index(rng)]
    }

    /// Draws a support index by inverse transform.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        // first j with below[j + 1] > u
        let j = self.below[1..].partition_point(|&c| c <= u);
        j.min(self.m() - 1)
    }

    /// Boundary atom of a probability test with mass parameter `q`:
    /// the index `k` with `tail[k+1] < q <= tail[k]` and the conditional
    /// positive probability `p_q = (q - tail[k+1]) / p_k` on that atom.
    pub fn probability_test_boundary(&self, q: f64) -> Option<(usize, f64)> {
        if q <= 0.0 || q > 1.0 {
            return None;
        }
        let mut k = 0;
        while self.tail[k + 1] >= q {
            k += 1;
        }
        Some((k, (q - self.tail[k + 1]) / self.probs[k]))
    }

    /// `E[X | X in the top-q probability mass]` for `q` in `(0, 1]`,
    /// splitting the boundary atom exactly as a probability test does.
    pub fn cond_exp_top_mass(&self, q: f64) -> f64 {
        assert!(q > 0.0 && q <= 1.0, "top-mass conditional needs q in (0, 1]");
        let (k, _) = self
            .probability_test_boundary(q)
            .expect("q in (0, 1] has a boundary atom");
        (self.tail_pv[k + 1] + (q - self.tail[k + 1]) * self.values[k]) / q
    }

    /// `E[X | X in the bottom-(1-q) probability mass]` for `q` in `[0, 1)`,
    /// the complement of [`Self::cond_exp_top_mass`].
    pub fn cond_exp_bottom_mass(&self, q: f64) -> f64 {
        assert!(
            (0.0..1.0).contains(&q),
            "bottom-mass conditional needs q in [0, 1)"
        );
        match self.probability_test_boundary(q) {
            None => self.mean, // q = 0 conditions on everything
            Some((k, _)) => {
                (self.below_pv[k] + (self.tail[k] - q) * self.values[k]) / (1.0 - q)
            }
        }
    }
}

fn powi_checked(base: f64, n: usize) -> f64 {
    debug_assert!(n <= i32::MAX as usize);
    base.powi(n as i32)
}

/// Neumaier-compensated summation.
pub(crate) fn kahan_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in iter {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// A continuous (or continuously approximated) distribution given by its
/// quantile function `Q = F^{-1}`, stored as piecewise-linear knots
/// `(p, value)`. Repeated `p` knots encode support gaps; flat segments encode
/// atoms (only used by mixed forms such as [`f_a`]).
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousDistribution {
    knots: Vec<(f64, f64)>,
    descriptor: String,
}

impl ContinuousDistribution {
    /// Builds a quantile function from knots; requires `p` to run from 0 to 1
    /// non-decreasingly and values to be non-decreasing and non-negative.
    pub fn from_knots(knots: Vec<(f64, f64)>, descriptor: impl Into<String>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::BadParameter("need at least two knots".into()));
        }
        if knots[0].0 != 0.0 || knots[knots.len() - 1].0 != 1.0 {
            return Err(Error::BadParameter("knots must span p in [0, 1]".into()));
        }
        for w in knots.windows(2) {
            if w[0].0 > w[1].0 || w[0].1 > w[1].1 {
                return Err(Error::BadParameter("knots must be monotone".into()));
            }
        }
        if knots.iter().any(|&(p, v)| !p.is_finite() || !v.is_finite() || v < 0.0) {
            return Err(Error::BadParameter("knots must be finite and >= 0".into()));
        }
        Ok(Self {
            knots,
            descriptor: descriptor.into(),
        })
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    /// `Q(p) = F^{-1}(p)`, the left-continuous inverse CDF.
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        let i = self.knots.partition_point(|&(kp, _)| kp < p);
        if i == 0 {
            return self.knots[0].1;
        }
        let (p0, v0) = self.knots[i - 1];
        let (p1, v1) = self.knots[i];
        if p1 == p0 {
            return v1;
        }
        v0 + (v1 - v0) * ((p - p0) / (p1 - p0))
    }

    /// `Pr[X >= x] = 1 - sup{p : Q(p) < x}`, by bisection to `1e-12`.
    pub fn ccdf(&self, x: f64) -> f64 {
        if self.quantile(0.0) >= x {
            return 1.0; // sup over the empty set is 0
        }
        if self.quantile(1.0) < x {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while hi - lo > 1e-13 {
            let mid = 0.5 * (lo + hi);
            if self.quantile(mid) < x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        1.0 - lo
    }

    /// Draws `Q(U)` for `U` uniform on `[0, 1)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.gen())
    }
}

/// Either representation, for callers that are generic over the two.
#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    Discrete(DiscreteDistribution),
    Continuous(ContinuousDistribution),
}

impl Distribution {
    pub fn ccdf(&self, x: f64) -> f64 {
        match self {
            Distribution::Discrete(d) => d.ccdf(x),
            Distribution::Continuous(c) => c.ccdf(x),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Distribution::Discrete(d) => d.sample(rng),
            Distribution::Continuous(c) => c.sample(rng),
        }
    }
}

impl From<DiscreteDistribution> for Distribution {
    fn from(d: DiscreteDistribution) -> Self {
        Distribution::Discrete(d)
    }
}

impl From<ContinuousDistribution> for Distribution {
    fn from(c: ContinuousDistribution) -> Self {
        Distribution::Continuous(c)
    }
}

// ---------------------------------------------------------------------------
// Named builders
// ---------------------------------------------------------------------------

/// Value 1 with probability `alpha/n`, and 0 otherwise. The tight instance
/// for the quantile-policy analysis. Requires `0 < alpha < n`.
pub fn golden_nugget(alpha: f64, n: usize) -> Result<DiscreteDistribution> {
    if !(alpha > 0.0 && alpha < n as f64) {
        return Err(Error::BadParameter(format!(
            "golden_nugget needs 0 < alpha < n, got alpha={alpha}, n={n}"
        )));
    }
    let q = alpha / n as f64;
    DiscreteDistribution::new(vec![0.0, 1.0], vec![1.0 - q, q])
}

/// Continuous approximation of [`golden_nugget`]: both atoms widened into
/// ramps of width `1e-9`.
pub fn golden_nugget_continuous(alpha: f64, n: usize) -> Result<ContinuousDistribution> {
    if !(alpha > 0.0 && alpha < n as f64) {
        return Err(Error::BadParameter(format!(
            "golden_nugget_continuous needs 0 < alpha < n, got alpha={alpha}, n={n}"
        )));
    }
    widened_unit_atom(alpha / n as f64, format!("golden_nugget_cont(alpha={alpha}, n={n})"))
}

/// Top mass `q` near value 1, rest near 0, both atoms widened.
fn widened_unit_atom(q: f64, descriptor: String) -> Result<ContinuousDistribution> {
    ContinuousDistribution::from_knots(
        vec![
            (0.0, 0.0),
            (1.0 - q, ATOM_WIDTH),
            (1.0 - q, 1.0),
            (1.0, 1.0 + ATOM_WIDTH),
        ],
        descriptor,
    )
}

/// Values 3, 2, 1 with probability `1/n` each and 0 otherwise; the four-point
/// family on which no testing policy can stay `1 - o(1)`-competitive.
/// Requires `n >= 3` (at `n = 3` the zero atom has no mass and is dropped).
pub fn counterexample3(n: usize) -> Result<DiscreteDistribution> {
    if n < 3 {
        return Err(Error::BadParameter(format!(
            "counterexample3 needs n >= 3, got {n}"
        )));
    }
    let p = 1.0 / n as f64;
    DiscreteDistribution::new(vec![0.0, 1.0, 2.0, 3.0], vec![1.0 - 3.0 * p, p, p, p])
}

/// With probability `1/sqrt(n)` uniform on `[1-eps, 1+eps]`, else 0; in
/// quantile form (the zero atom is a flat segment). Requires `eps` in (0, 1).
pub fn f_a(n: usize, eps: f64) -> Result<ContinuousDistribution> {
    if n == 0 {
        return Err(Error::BadParameter("f_a needs n >= 1".into()));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::BadParameter(format!("f_a needs eps in (0,1), got {eps}")));
    }
    let s = 1.0 / (n as f64).sqrt();
    let descriptor = format!("f_a(n={n}, eps={eps})");
    if s >= 1.0 {
        return ContinuousDistribution::from_knots(
            vec![(0.0, 1.0 - eps), (1.0, 1.0 + eps)],
            descriptor,
        );
    }
    ContinuousDistribution::from_knots(
        vec![
            (0.0, 0.0),
            (1.0 - s, 0.0),
            (1.0 - s, 1.0 - eps),
            (1.0, 1.0 + eps),
        ],
        descriptor,
    )
}

/// Exact discrete form of [`f_a`] in the `eps -> 0` limit:
/// value 1 with probability `1/sqrt(n)`, else 0.
pub fn f_a_discrete(n: usize) -> Result<DiscreteDistribution> {
    if n == 0 {
        return Err(Error::BadParameter("f_a_discrete needs n >= 1".into()));
    }
    let s = 1.0 / (n as f64).sqrt();
    DiscreteDistribution::new(vec![0.0, 1.0], vec![1.0 - s, s])
}

/// Value 1 with probability `1/n^2`, else 0.
pub fn f_b(n: usize) -> Result<DiscreteDistribution> {
    if n == 0 {
        return Err(Error::BadParameter("f_b needs n >= 1".into()));
    }
    let q = 1.0 / (n as f64 * n as f64);
    DiscreteDistribution::new(vec![0.0, 1.0], vec![1.0 - q, q])
}

/// Continuous approximation of [`f_b`] with atoms widened to width `1e-9`.
pub fn f_b_continuous(n: usize) -> Result<ContinuousDistribution> {
    if n == 0 {
        return Err(Error::BadParameter("f_b_continuous needs n >= 1".into()));
    }
    if n == 1 {
        // all mass is the unit atom
        return ContinuousDistribution::from_knots(
            vec![(0.0, 1.0), (1.0, 1.0 + ATOM_WIDTH)],
            "f_b_cont(n=1)".to_string(),
        );
    }
    widened_unit_atom(1.0 / (n as f64 * n as f64), format!("f_b_cont(n={n})"))
}

/// The uniform distribution on `[0, 1]`: `Q(p) = p`.
pub fn uniform01() -> ContinuousDistribution {
    ContinuousDistribution::from_knots(vec![(0.0, 0.0), (1.0, 1.0)], "uniform01")
        .expect("static knots are valid")
}
