//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (visible with `cargo test --test acceptance -- --nocapture`)
//! and enforcing its runtime budget.

use std::time::{Duration, Instant};

use rand_chacha::ChaCha8Rng;

use threshold_testing::{
    binary_search_type, brute_force_optimal, check_dominance, counterexample3,
    dominance_vs_randomized, exact_policy_value, golden_nugget, min_ratio, optimize_alphas,
    play_discrete_value, positive_counts_exact, prob_e10, prob_e110, ratio, run_multi_test, solve,
    type_of, uniform01, CurveMode, QuantilePolicy, RatioCurve, Replicate, SimConfig,
};

const K2: [f64; 2] = [1.83298, 0.35932];
const K3: [f64; 3] = [2.035135, 0.5063, 0.05701];
const K4: [f64; 4] = [2.038, 0.508, 0.058, 0.0002];

struct Criterion {
    name: &'static str,
    start: Instant,
    budget: Duration,
}

impl Criterion {
    fn new(name: &'static str, budget: Duration) -> Self {
        Self {
            name,
            start: Instant::now(),
            budget,
        }
    }

    fn finish(self) {
        let elapsed = self.start.elapsed();
        let timely = elapsed <= self.budget;
        println!(
            "acceptance {}: {} in {:.2?} (budget {:.0?})",
            self.name,
            if timely { "PASS" } else { "FAIL (over budget)" },
            elapsed,
            self.budget
        );
        assert!(
            timely,
            "{} exceeded its runtime budget: {:.2?} > {:.2?}",
            self.name, elapsed, self.budget
        );
    }
}

/// Criterion 1: fixed parameter sets reproduce the advertised limit ratios,
/// each within one second.
#[test]
fn c01_parameter_table_reproduction() {
    let cases: [(&[f64], f64, f64); 4] = [
        (&[1.0], 0.63212, 1e-5),
        (&K2, 0.84005 - 1e-5, f64::INFINITY),
        (&K3, 0.86933 - 1e-5, f64::INFINITY),
        (&K4, 0.86956 - 5e-4, f64::INFINITY),
    ];
    for (alphas, want, eq_tol) in cases {
        let c = Criterion::new("1 (ratio table)", Duration::from_secs(1));
        let (c_star, _) = min_ratio(alphas, CurveMode::Limit).unwrap();
        if eq_tol.is_finite() {
            assert!(
                (c_star - want).abs() <= eq_tol,
                "k={}: {c_star} vs {want}",
                alphas.len()
            );
        } else {
            assert!(c_star >= want, "k={}: {c_star} < {want}", alphas.len());
        }
        c.finish();
    }
}

/// Criterion 2: piece-level minima of the k=2 and k=3 limit curves.
///
/// The three k=2 numbers match the pieces as follows: the closed bound of
/// the innermost piece (alpha -> 0) evaluates to 0.8400564..., the interior
/// minimum to 0.8400569... at alpha* = 0.832961..., and the tail bound
/// 1 - e^{-alpha_1} to 0.8400637... .
#[test]
fn c02_piece_level_minima() {
    let c = Criterion::new("2 (piece minima)", Duration::from_secs(5));
    let pieces = RatioCurve::new(&K2, CurveMode::Limit).unwrap().piece_minima();
    assert!((pieces[0].c_min - 0.8400564).abs() <= 1e-6, "{:?}", pieces[0]);
    assert!((pieces[1].c_min - 0.8400569).abs() <= 1e-6, "{:?}", pieces[1]);
    assert!((pieces[1].alpha_star - 0.832961).abs() <= 1e-4);
    assert!((pieces[2].c_min - 0.8400637).abs() <= 1e-6, "{:?}", pieces[2]);

    let pieces = RatioCurve::new(&K3, CurveMode::Limit).unwrap().piece_minima();
    assert!((pieces[0].c_min - 0.8693380).abs() <= 1e-5, "{:?}", pieces[0]);
    assert!((pieces[1].c_min - 0.8693454).abs() <= 1e-5, "{:?}", pieces[1]);
    assert!((pieces[1].alpha_star - 0.1162634).abs() <= 1e-4);
    assert!((pieces[2].c_min - 0.8693365).abs() <= 1e-5, "{:?}", pieces[2]);
    assert!((pieces[2].alpha_star - 1.0351330).abs() <= 1e-4);
    assert!((pieces[3].c_min - 0.8693371).abs() <= 1e-5, "{:?}", pieces[3]);
    c.finish();
}

/// Criterion 3: the maximin search recovers the k=2 and k=3 ratios from its
/// random restarts within two minutes.
#[test]
fn c03_optimizer_recovery() {
    let c = Criterion::new("3 (optimizer)", Duration::from_secs(120));
    let r2 = optimize_alphas(2).unwrap();
    assert!(r2.c_star >= 0.8400, "k=2 reached only {}", r2.c_star);
    let r3 = optimize_alphas(3).unwrap();
    assert!(r3.c_star >= 0.8690, "k=3 reached only {}", r3.c_star);
    c.finish();
}

/// Criterion 4: closed forms against the count DP over random parameters,
/// and the backward induction against brute-force tree enumeration.
#[test]
fn c04_oracle_equivalence() {
    let c = Criterion::new("4 (oracles)", Duration::from_secs(60));
    use rand::{Rng, SeedableRng};
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_817);
    let ns = [100usize, 10_000, 1_000_000];
    let mut draws = 0;
    while draws < 100 {
        let k = if rng.gen::<bool>() { 2 } else { 3 };
        let mut alphas: Vec<f64> = (0..k)
            .map(|_| {
                let u: f64 = rng.gen();
                (0.05f64.ln() + u * (4.0f64.ln() - 0.05f64.ln())).exp()
            })
            .collect();
        alphas.sort_by(|a, b| b.total_cmp(a));
        if alphas.windows(2).any(|w| w[0] - w[1] < 0.02) {
            continue;
        }
        let n = ns[rng.gen_range(0..ns.len())];
        let counts = positive_counts_exact(&alphas, n);
        let e10 = prob_e10(alphas[0], alphas[1], n);
        assert!(
            (e10 - counts.probs()[1]).abs() <= 1e-9,
            "E10 draw {draws}: {e10} vs {}",
            counts.probs()[1]
        );
        if k == 3 {
            let e110 = prob_e110(alphas[0], alphas[1], alphas[2], n).unwrap();
            assert!(
                (e110 - counts.probs()[2]).abs() <= 1e-9,
                "E110 draw {draws}: {e110} vs {}",
                counts.probs()[2]
            );
        }
        draws += 1;
    }

    let mut checked = 0;
    while checked < 50 {
        let m = rng.gen_range(1..=3usize);
        let mut values: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() * 5.0).collect();
        values.sort_by(f64::total_cmp);
        values.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        let raw: Vec<f64> = (0..values.len()).map(|_| rng.gen::<f64>() + 0.02).collect();
        let total: f64 = raw.iter().sum();
        let probs = raw.iter().map(|p| p / total).collect();
        let dist = match threshold_testing::DiscreteDistribution::new(values, probs) {
            Ok(d) => d,
            Err(_) => continue,
        };
        let n = rng.gen_range(1..=4usize);
        let (_, dp) = solve(&dist, n);
        let bf = brute_force_optimal(&dist, n).unwrap();
        assert!(
            (dp - bf).abs() <= 1e-12,
            "instance {checked}: dp {dp} vs brute force {bf}"
        );
        checked += 1;
    }
    c.finish();
}

/// Criterion 5: the impossibility family's optimal ratio at n = 1000, its
/// monotone decline, and full learnability of the three-value support.
#[test]
fn c05_impossibility_curve() {
    let c = Criterion::new("5 (impossibility curve)", Duration::from_secs(30));
    let r1000 = ratio(&counterexample3(1000).unwrap(), 1000);
    assert!((r1000 - 0.9799).abs() <= 0.001, "ratio {r1000}");
    // n = 2 uses the minimal valid family member (the zero atom has no mass
    // at n = 3 and the construction needs non-negative masses)
    let mut prev = f64::INFINITY;
    for n in 2..=200usize {
        let dist = counterexample3(n.max(3)).unwrap();
        let r = ratio(&dist, n);
        assert!(r <= prev + 1e-12, "ratio increased at n={n}");
        prev = r;
    }
    assert!((ratio(&counterexample3(3).unwrap(), 3) - 1.0).abs() <= 1e-12);
    c.finish();
}

/// Criterion 6: the optimal discrete policy dominates the finite-n bound of
/// the fixed k=3 quantile policy on every tested nugget instance.
#[test]
fn c06_discrete_competitiveness_bound() {
    let c = Criterion::new("6 (0.869 corollary)", Duration::from_secs(30));
    for n in [100usize, 1000] {
        let (k3_min, _) = min_ratio(&K3, CurveMode::Finite(n)).unwrap();
        for alpha in [0.05, 0.5, 1.0, 2.0] {
            let dist = golden_nugget(alpha, n).unwrap();
            let r = ratio(&dist, n);
            assert!(
                r >= k3_min - 1e-9,
                "n={n} alpha={alpha}: {r} < {k3_min}"
            );
        }
    }
    c.finish();
}

/// Criterion 7: a million Monte Carlo replicates agree with the exact policy
/// value within three standard errors.
#[test]
fn c07_monte_carlo_cross_check() {
    let c = Criterion::new("7 (Monte Carlo)", Duration::from_secs(120));
    let n = 1000;
    let dist = golden_nugget(0.5, n).unwrap();
    let policy = QuantilePolicy::new(K3.to_vec()).unwrap();
    let emax = dist.expected_max(n);
    let exact_ratio = exact_policy_value(&policy, &dist, n) / emax;
    let cfg = SimConfig::new(1_000_000, 0x7e57_0007);
    let sim = threshold_testing::estimate(
        |rng: &mut ChaCha8Rng| {
            let (value, max) = play_discrete_value(&policy, &dist, n, rng);
            Replicate { value, max }
        },
        Some(emax),
        &cfg,
    );
    let tol = 3.0 * sim.stderr / emax;
    assert!(
        (sim.ratio - exact_ratio).abs() <= tol,
        "simulated {} vs exact {exact_ratio} (tol {tol})",
        sim.ratio
    );
    c.finish();
}

/// Criterion 8: pointwise dominance at the advertised constants on
/// 10^4-point grids.
#[test]
fn c08_stochastic_dominance() {
    let c = Criterion::new("8 (dominance)", Duration::from_secs(30));
    let rep = check_dominance(&K2, 100_000, 0.84, 10_000);
    assert!(rep.holds, "k=2 at 0.84: {rep:?}");
    let rep = check_dominance(&K3, 100_000, 0.869, 10_000);
    assert!(rep.holds, "k=3 at 0.869: {rep:?}");
    c.finish();
}

/// Criterion 9: multi-test budget safety, search-vs-scan agreement, and the
/// success probability rising toward 1.
///
/// The n = 10^4 threshold of 0.9 was fixed from a seeded pre-run with seed
/// 1_000_000 + r per replicate (measured success rate 0.949).
#[test]
fn c09_multi_test() {
    let c = Criterion::new("9 (multi-test)", Duration::from_secs(300));
    use rand::{Rng, SeedableRng};
    let dist = uniform01();

    // budget never exceeded over 10^4 runs across sizes
    let mut runs = 0;
    let mut size_rng = ChaCha8Rng::seed_from_u64(1);
    while runs < 10_000 {
        let n = *[8usize, 16, 40, 100, 400]
            .get(size_rng.gen_range(0..5))
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(runs as u64);
        let out = run_multi_test(&dist, n, &mut rng);
        assert!(out.budget.used() <= n, "budget exceeded at run {runs}");
        runs += 1;
    }

    // binary search equals the scan oracle on 10^3 random points
    let n = 100;
    let tau0 = dist.quantile(1.0 - (n as f64).powf(-2.0 / 3.0));
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let x = tau0 + (1.0 - tau0) * rng.gen::<f64>();
        assert_eq!(
            binary_search_type(x, &dist, n).unwrap(),
            type_of(x, &dist, n).unwrap()
        );
    }

    // success probability non-decreasing in n and at least 0.9 at n = 10^4
    let reps = 1000;
    let mut success = Vec::new();
    for n in [100usize, 1000, 10_000] {
        let mut hits = 0;
        for r in 0..reps {
            let mut rng = ChaCha8Rng::seed_from_u64(1_000_000 + r);
            let out = run_multi_test(&dist, n, &mut rng);
            if out.play.chosen_value == out.realized_max {
                hits += 1;
            }
        }
        success.push(hits as f64 / reps as f64);
    }
    println!("  multi-test success rates: {success:?}");
    assert!(
        success.windows(2).all(|w| w[1] >= w[0]),
        "success not monotone: {success:?}"
    );
    assert!(success[2] >= 0.9, "success at n=10^4: {}", success[2]);
    c.finish();
}

/// Criterion 10: the optimal deterministic value dominates 100 sampled
/// randomized probability-testing policies exactly.
#[test]
fn c10_randomized_dominance() {
    let c = Criterion::new("10 (randomized dominance)", Duration::from_secs(30));
    let dist = counterexample3(4).unwrap();
    let rep = dominance_vs_randomized(&dist, 4, 100, 0xd0_0d).unwrap();
    assert!(
        rep.min_margin >= -1e-12,
        "a randomized policy beat the DP by {}",
        -rep.min_margin
    );
    assert_eq!(rep.margins.len(), 100);
    c.finish();
}
