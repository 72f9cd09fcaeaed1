//! `threshold-probe`: experiments over adaptive threshold-testing policies.
//!
//! Subcommands: `optimize` (maximin quantile parameters), `curve` (ratio
//! curves for plotting), `dp` / `dp-sweep` (optimal testing for discrete
//! distributions), `simulate` (Monte Carlo policy evaluation), `multitest`
//! (the budgeted multi-test policy). Every run echoes its resolved
//! configuration, including the seed, for reproducibility.

mod dist_arg;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use dist_arg::DistSpec;
use output::{csv, line_chart, write_output};
use threshold_testing::{
    gambler_thresholds, optimize_alphas, play_continuous_value, play_discrete_value,
    play_nonadaptive_value, replicate_rng, run_multi_test, run_replicates, simulate_dp_policy_value,
    solve, summarize, CurveMode, Distribution, DpState, QuantilePolicy, RatioCurve, Replicate,
    SimConfig,
};

const DEFAULT_SEED: u64 = 1729;
const SEED_ENV: &str = "THRESHOLD_PROBE_SEED";

#[derive(Parser)]
#[command(name = "threshold-probe", version, about)]
struct Cli {
    /// Write the primary output to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format. `curve` and `dp-sweep` default to csv, all other
    /// commands to json.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Master seed; defaults to $THRESHOLD_PROBE_SEED, then 1729.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for replicate fan-out (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Limit,
    Finite,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Policy {
    Quantile,
    Gambler,
    Dp,
}

#[derive(Subcommand)]
enum Command {
    /// Maximize the limit competitive ratio over k quantile parameters.
    Optimize {
        #[arg(long)]
        k: usize,
    },
    /// Emit the competitive-ratio curve c(alpha) of a quantile policy.
    Curve {
        /// Strictly decreasing policy parameters, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        alphas: Vec<f64>,
        #[arg(long, value_enum, default_value_t = Mode::Limit)]
        mode: Mode,
        /// Box count (required for --mode finite).
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 1000)]
        points: usize,
        /// Upper end of the alpha grid (default: max(4, 1.5 * alpha_1)).
        #[arg(long)]
        alpha_max: Option<f64>,
    },
    /// Solve the optimal testing policy for a discrete distribution.
    Dp {
        /// Distribution spec: name[:key=value,...] or @file.json.
        #[arg(long)]
        dist: String,
        #[arg(long)]
        n: usize,
        /// Include the full policy table in the output.
        #[arg(long)]
        table: bool,
    },
    /// Sweep the optimal-testing ratio over n = n-min..=n-max. A spec
    /// without an explicit n is re-instantiated at every sweep point.
    DpSweep {
        #[arg(long, default_value = "counterexample3")]
        dist: String,
        #[arg(long, default_value_t = 2)]
        n_min: usize,
        #[arg(long)]
        n_max: usize,
    },
    /// Monte Carlo estimate of a policy's expected value and ratio.
    Simulate {
        #[arg(long, value_enum, default_value_t = Policy::Quantile)]
        policy: Policy,
        /// Quantile-policy parameters (required for --policy quantile).
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
        #[arg(long)]
        dist: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        reps: usize,
        /// Also write one csv row per replicate to this file.
        #[arg(long)]
        per_replicate: Option<PathBuf>,
    },
    /// Run the budgeted multi-test policy on a continuous distribution.
    Multitest {
        #[arg(long, default_value = "uniform01")]
        dist: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        reps: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn resolve_seed(cli_seed: Option<u64>) -> u64 {
    cli_seed
        .or_else(|| std::env::var(SEED_ENV).ok()?.parse().ok())
        .unwrap_or(DEFAULT_SEED)
}

/// Emits the payload in the chosen format; JSON embeds the config, csv/svg
/// echo it on stderr so the artifact stays clean.
fn emit(
    cli_out: Option<&PathBuf>,
    format: Format,
    config: Value,
    json_payload: Value,
    csv_payload: Option<String>,
    svg_payload: Option<String>,
) -> Result<()> {
    match format {
        Format::Json => {
            let mut wrapped = json_payload;
            wrapped["config"] = config;
            write_output(cli_out.map(|p| p.as_path()), &serde_json::to_string_pretty(&wrapped)?)
        }
        Format::Csv => {
            eprintln!("config: {config}");
            let body = csv_payload.context("this command has no csv form")?;
            write_output(cli_out.map(|p| p.as_path()), &body)
        }
        Format::Svg => {
            eprintln!("config: {config}");
            let body = svg_payload.context("this command has no svg form")?;
            write_output(cli_out.map(|p| p.as_path()), &body)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let seed = resolve_seed(cli.seed);
    let workers = cli.workers;
    match &cli.command {
        Command::Optimize { k } => {
            let format = cli.format.unwrap_or(Format::Json);
            let result = optimize_alphas(*k)?;
            let config = json!({"command": "optimize", "k": k, "seed": seed, "workers": workers});
            let pieces: Vec<Value> = result
                .pieces
                .iter()
                .map(|p| {
                    let alpha_star: Value = if p.alpha_star.is_finite() {
                        json!(p.alpha_star)
                    } else {
                        json!("inf")
                    };
                    json!({"interval": p.interval, "c_min": p.c_min, "alpha_star": alpha_star})
                })
                .collect();
            emit(
                cli.out.as_ref(),
                format,
                config,
                json!({
                    "alphas": result.alphas,
                    "c_star": result.c_star,
                    "pieces": pieces,
                    "approximate_limit": result.approximate_limit,
                }),
                None,
                None,
            )
        }
        Command::Curve {
            alphas,
            mode,
            n,
            points,
            alpha_max,
        } => {
            let format = cli.format.unwrap_or(Format::Csv);
            if *points < 2 {
                bail!("--points must be at least 2");
            }
            let curve_mode = match mode {
                Mode::Limit => CurveMode::Limit,
                Mode::Finite => CurveMode::Finite(
                    n.context("--mode finite requires --n")?,
                ),
            };
            let curve = RatioCurve::new(alphas, curve_mode)?;
            let hi = alpha_max
                .unwrap_or_else(|| 4.0f64.max(1.5 * alphas[0]))
                .min(curve.alpha_max());
            let pts: Vec<(f64, f64)> = (1..=*points)
                .map(|i| {
                    let a = hi * i as f64 / *points as f64;
                    (a, curve.eval(a))
                })
                .collect();
            let config = json!({
                "command": "curve", "alphas": alphas,
                "mode": match mode { Mode::Limit => "limit", Mode::Finite => "finite" },
                "n": n, "points": points, "alpha_max": hi,
                "approximate_limit": curve.is_approximate_limit(),
                "seed": seed, "workers": workers,
            });
            let rows = pts.iter().map(|(a, c)| format!("{a},{c}"));
            emit(
                cli.out.as_ref(),
                format,
                config,
                json!({"points": pts.iter().map(|&(a, c)| json!([a, c])).collect::<Vec<_>>()}),
                Some(csv("alpha,ratio", rows)),
                Some(line_chart(&pts, "competitive ratio", "alpha", "c(alpha)")),
            )
        }
        Command::Dp { dist, n, table } => {
            let format = cli.format.unwrap_or(Format::Json);
            let spec = DistSpec::parse(dist)?;
            let d = spec.discrete(Some(*n))?;
            let (dp_table, value) = solve(&d, *n);
            let emax = d.expected_max(*n);
            let config = json!({"command": "dp", "dist": dist, "n": n, "table": table, "seed": seed, "workers": workers});
            let mut payload = json!({
                "n": n,
                "m": d.m(),
                "value": value,
                "expected_max": emax,
                "ratio": value / emax,
            });
            if *table {
                payload["policy"] = dp_table_json(&dp_table);
            }
            emit(cli.out.as_ref(), format, config, payload, None, None)
        }
        Command::DpSweep { dist, n_min, n_max } => {
            let format = cli.format.unwrap_or(Format::Csv);
            if n_min < &1 || n_min > n_max {
                bail!("need 1 <= n-min <= n-max");
            }
            let spec = DistSpec::parse(dist)?;
            let sweep: Result<Vec<(usize, f64)>> = (*n_min..=*n_max)
                .into_par_iter()
                .map(|n| {
                    let d = spec.discrete(Some(n))?;
                    Ok((n, threshold_testing::ratio(&d, n)))
                })
                .collect();
            let sweep = sweep?;
            let config = json!({
                "command": "dp-sweep", "dist": dist, "n_min": n_min, "n_max": n_max,
                "per_n_instantiation": !spec.has_explicit_n(),
                "seed": seed, "workers": workers,
            });
            let rows = sweep.iter().map(|(n, r)| format!("{n},{r}"));
            let pts: Vec<(f64, f64)> = sweep.iter().map(|&(n, r)| (n as f64, r)).collect();
            emit(
                cli.out.as_ref(),
                format,
                config,
                json!({"points": sweep.iter().map(|&(n, r)| json!([n, r])).collect::<Vec<_>>()}),
                Some(csv("n,ratio", rows)),
                Some(line_chart(&pts, "optimal testing ratio", "n", "ratio")),
            )
        }
        Command::Simulate {
            policy,
            alphas,
            dist,
            n,
            reps,
            per_replicate,
        } => {
            let format = cli.format.unwrap_or(Format::Json);
            let spec = DistSpec::parse(dist)?;
            let n = *n;
            let cfg = SimConfig::new(*reps, seed).with_workers(workers);
            type Runner = Box<dyn Fn(&mut ChaCha8Rng) -> Replicate + Sync>;
            let (policy_name, runner, exact_max): (&str, Runner, Option<f64>) = match policy {
                Policy::Quantile => {
                    let qp = QuantilePolicy::new(alphas.clone())
                        .context("--policy quantile needs valid --alphas")?;
                    if qp.alphas()[0] >= n as f64 {
                        bail!("alpha_1 must be below n");
                    }
                    match spec.instantiate(Some(n))? {
                        Distribution::Discrete(d) => {
                            let emax = d.expected_max(n);
                            (
                                "quantile",
                                Box::new(move |rng: &mut ChaCha8Rng| {
                                    let (value, max) = play_discrete_value(&qp, &d, n, rng);
                                    Replicate { value, max }
                                }),
                                Some(emax),
                            )
                        }
                        Distribution::Continuous(c) => (
                            "quantile",
                            Box::new(move |rng: &mut ChaCha8Rng| {
                                let (value, max) = play_continuous_value(&qp, &c, n, rng);
                                Replicate { value, max }
                            }),
                            None,
                        ),
                    }
                }
                Policy::Gambler => {
                    let d = spec.discrete(Some(n))?;
                    let thresholds = gambler_thresholds(&d, n);
                    let emax = d.expected_max(n);
                    (
                        "gambler",
                        Box::new(move |rng: &mut ChaCha8Rng| {
                            let (value, max) = play_nonadaptive_value(&thresholds, &d, n, rng);
                            Replicate { value, max }
                        }),
                        Some(emax),
                    )
                }
                Policy::Dp => {
                    let d = spec.discrete(Some(n))?;
                    let (table, _) = solve(&d, n);
                    let emax = d.expected_max(n);
                    (
                        "dp",
                        Box::new(move |rng: &mut ChaCha8Rng| {
                            let (value, max) = simulate_dp_policy_value(&table, &d, n, rng);
                            Replicate { value, max }
                        }),
                        Some(emax),
                    )
                }
            };
            let samples = run_replicates(|rng| runner(rng), &cfg);
            if let Some(path) = per_replicate {
                let rows = samples
                    .iter()
                    .enumerate()
                    .map(|(i, s)| format!("{i},{},{}", s.value, s.max));
                write_output(Some(path.as_path()), &csv("replicate,value,max", rows))?;
            }
            let result = summarize(&samples, exact_max);
            let config = json!({
                "command": "simulate", "policy": policy_name, "alphas": alphas,
                "dist": dist, "n": n, "reps": reps, "seed": seed, "workers": workers,
                "exact_expected_max": exact_max,
            });
            emit(
                cli.out.as_ref(),
                format,
                config,
                serde_json::to_value(result)?,
                None,
                None,
            )
        }
        Command::Multitest { dist, n, reps } => {
            let format = cli.format.unwrap_or(Format::Json);
            let spec = DistSpec::parse(dist)?;
            let c = spec.continuous(Some(*n))?;
            let n = *n;
            if n < 8 {
                bail!("multitest needs n >= 8");
            }
            if *reps == 0 {
                bail!("multitest needs reps >= 1");
            }
            let run_one = |r: usize| {
                let mut rng = replicate_rng(seed, r as u64);
                let out = run_multi_test(&c, n, &mut rng);
                (
                    out.play.chosen_value,
                    out.realized_max,
                    out.budget.used(),
                    out.play.chosen_value == out.realized_max,
                )
            };
            let outcomes: Vec<(f64, f64, usize, bool)> = if workers == 1 {
                (0..*reps).map(run_one).collect()
            } else {
                (0..*reps).into_par_iter().map(run_one).collect()
            };
            let repsf = *reps as f64;
            let mean_value: f64 = outcomes.iter().map(|o| o.0).sum::<f64>() / repsf;
            let mean_max: f64 = outcomes.iter().map(|o| o.1).sum::<f64>() / repsf;
            let mean_budget: f64 = outcomes.iter().map(|o| o.2 as f64).sum::<f64>() / repsf;
            let hits = outcomes.iter().filter(|o| o.3).count();
            let config = json!({
                "command": "multitest", "dist": dist, "n": n, "reps": reps,
                "seed": seed, "workers": workers,
            });
            emit(
                cli.out.as_ref(),
                format,
                config,
                json!({
                    "mean_value": mean_value,
                    "mean_max": mean_max,
                    "mean_ratio": mean_value / mean_max,
                    "p_max_hit": hits as f64 / repsf,
                    "mean_budget_used": mean_budget,
                    "budget_total": n,
                }),
                None,
                None,
            )
        }
    }
}

fn dp_table_json(table: &threshold_testing::DpTable) -> Value {
    let state_name = |s: DpState| match s {
        DpState::Initial => "initial".to_string(),
        DpState::Tested { test_idx, positive } => {
            format!("{}@{}", if positive { "pos" } else { "neg" }, test_idx)
        }
    };
    let states = table.states();
    let state_json: Vec<Value> = states
        .iter()
        .map(|&s| json!({"state": state_name(s), "value": table.state_value(s)}))
        .collect();
    let best: Vec<Vec<usize>> = (0..table.n())
        .map(|i| states.iter().map(|&s| table.best_test(i, s)).collect())
        .collect();
    let cont: Vec<Vec<f64>> = (0..=table.n())
        .map(|i| states.iter().map(|&s| table.cont_value(i, s)).collect())
        .collect();
    json!({"states": state_json, "best_test": best, "cont_value": cont})
}
