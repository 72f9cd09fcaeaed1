//! `--dist` argument parsing: `name[:key=value,...]` for the named builders
//! or `@file.json` for a discrete distribution in `{"values":[],"probs":[]}`
//! form.

use std::collections::BTreeMap;
use std::fs;

use anyhow::{anyhow, bail, Context, Result};
use threshold_testing::{
    counterexample3, f_a, f_a_discrete, f_b, f_b_continuous, golden_nugget,
    golden_nugget_continuous, uniform01, DiscreteDistribution, Distribution,
};

/// A parsed `--dist` specification, instantiable per box count (the sweep
/// commands substitute their own `n` when the spec leaves it out).
#[derive(Debug, Clone)]
pub struct DistSpec {
    pub name: String,
    params: BTreeMap<String, f64>,
    json: Option<DiscreteDistribution>,
}

impl DistSpec {
    pub fn parse(spec: &str) -> Result<Self> {
        if let Some(path) = spec.strip_prefix('@') {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading distribution file {path}"))?;
            let dist: DiscreteDistribution = serde_json::from_str(&text)
                .with_context(|| format!("parsing distribution file {path}"))?;
            return Ok(Self {
                name: spec.to_string(),
                params: BTreeMap::new(),
                json: Some(dist),
            });
        }
        let (name, rest) = match spec.split_once(':') {
            Some((n, r)) => (n, Some(r)),
            None => (spec, None),
        };
        let mut params = BTreeMap::new();
        if let Some(rest) = rest {
            for pair in rest.split(',') {
                let (key, value) = pair
                    .split_once('=')
                    .ok_or_else(|| anyhow!("expected key=value in --dist, got '{pair}'"))?;
                let value: f64 = value
                    .parse()
                    .with_context(|| format!("parsing --dist parameter '{pair}'"))?;
                params.insert(key.to_string(), value);
            }
        }
        Ok(Self {
            name: name.to_string(),
            params,
            json: None,
        })
    }

    fn param(&self, key: &str) -> Option<f64> {
        self.params.get(key).copied()
    }

    fn usize_param(&self, key: &str, fallback: Option<usize>) -> Result<usize> {
        match self.param(key) {
            Some(v) => {
                if v.fract() != 0.0 || v < 0.0 || v > u32::MAX as f64 {
                    bail!("--dist parameter {key}={v} is not a valid count");
                }
                Ok(v as usize)
            }
            None => fallback.ok_or_else(|| {
                anyhow!("--dist {} needs {key}=... (or a sweep-provided n)", self.name)
            }),
        }
    }

    /// Whether the spec pins its own `n` (a sweep then keeps it fixed).
    pub fn has_explicit_n(&self) -> bool {
        self.json.is_some() || self.params.contains_key("n")
    }

    /// Builds the distribution, substituting `n_hint` for a missing `n`
    /// parameter. `counterexample3` clamps to its minimal valid member
    /// (`n = 3`) below that.
    pub fn instantiate(&self, n_hint: Option<usize>) -> Result<Distribution> {
        if let Some(d) = &self.json {
            return Ok(Distribution::Discrete(d.clone()));
        }
        let dist = match self.name.as_str() {
            "uniform01" => Distribution::Continuous(uniform01()),
            "counterexample3" => {
                // sweep-provided counts clamp to the minimal valid member;
                // an explicit n=... is taken literally and validated
                let n = match self.param("n") {
                    Some(_) => self.usize_param("n", None)?,
                    None => self.usize_param("n", n_hint)?.max(3),
                };
                Distribution::Discrete(counterexample3(n)?)
            }
            "golden_nugget" => {
                let n = self.usize_param("n", n_hint)?;
                let alpha = self
                    .param("alpha")
                    .ok_or_else(|| anyhow!("golden_nugget needs alpha=..."))?;
                Distribution::Discrete(golden_nugget(alpha, n)?)
            }
            "golden_nugget_continuous" => {
                let n = self.usize_param("n", n_hint)?;
                let alpha = self
                    .param("alpha")
                    .ok_or_else(|| anyhow!("golden_nugget_continuous needs alpha=..."))?;
                Distribution::Continuous(golden_nugget_continuous(alpha, n)?)
            }
            "f_a" => {
                let n = self.usize_param("n", n_hint)?;
                let eps = self.param("eps").unwrap_or(1e-3);
                Distribution::Continuous(f_a(n, eps)?)
            }
            "f_a_discrete" => {
                let n = self.usize_param("n", n_hint)?;
                Distribution::Discrete(f_a_discrete(n)?)
            }
            "f_b" => {
                let n = self.usize_param("n", n_hint)?;
                Distribution::Discrete(f_b(n)?)
            }
            "f_b_continuous" => {
                let n = self.usize_param("n", n_hint)?;
                Distribution::Continuous(f_b_continuous(n)?)
            }
            other => bail!(
                "unknown distribution '{other}' (expected uniform01, counterexample3, \
                 golden_nugget, golden_nugget_continuous, f_a, f_a_discrete, f_b, \
                 f_b_continuous, or @file.json)"
            ),
        };
        Ok(dist)
    }

    /// Instantiates and requires a discrete distribution.
    pub fn discrete(&self, n_hint: Option<usize>) -> Result<DiscreteDistribution> {
        match self.instantiate(n_hint)? {
            Distribution::Discrete(d) => Ok(d),
            Distribution::Continuous(c) => bail!(
                "'{}' is continuous ({}), but this command needs a discrete distribution",
                self.name,
                c.descriptor()
            ),
        }
    }

    /// Instantiates and requires a continuous distribution.
    pub fn continuous(&self, n_hint: Option<usize>) -> Result<threshold_testing::ContinuousDistribution> {
        match self.instantiate(n_hint)? {
            Distribution::Continuous(c) => Ok(c),
            Distribution::Discrete(_) => bail!(
                "'{}' is discrete, but this command needs a continuous distribution",
                self.name
            ),
        }
    }
}
