use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::graph::{self, Graph};
use crate::rng::{tag, StreamKey};
use crate::stats;

use super::{estimate_triangles, exact_variance_oracle};

pub const SWEEP_CSV_HEADER: &str = "n,epsilon,family,trials,t_exact,c4,var_empirical,var_oracle,ratio,seed";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GraphFamily {
    Empty,
    Complete,
    Cycle,
    /// Centre plus `n - 1` leaves.
    Star,
    ErdosRenyi(f64),
}

impl GraphFamily {
    pub fn instantiate(&self, n: usize, key: &StreamKey) -> Result<Graph> {
        Ok(match *self {
            GraphFamily::Empty => Graph::empty(n),
            GraphFamily::Complete => graph::complete(n),
            GraphFamily::Cycle => graph::cycle(n),
            GraphFamily::Star => graph::star(n.saturating_sub(1)),
            GraphFamily::ErdosRenyi(p) => graph::erdos_renyi(n, p, key)?,
        })
    }
}

impl fmt::Display for GraphFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphFamily::Empty => f.write_str("empty"),
            GraphFamily::Complete => f.write_str("complete"),
            GraphFamily::Cycle => f.write_str("cycle"),
            GraphFamily::Star => f.write_str("star"),
            GraphFamily::ErdosRenyi(p) => write!(f, "er:{p}"),
        }
    }
}

impl FromStr for GraphFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empty" => Ok(Self::Empty),
            "complete" => Ok(Self::Complete),
            "cycle" => Ok(Self::Cycle),
            "star" => Ok(Self::Star),
            _ => {
                let p = s
                    .strip_prefix("er:")
                    .and_then(|p| p.parse::<f64>().ok())
                    .ok_or_else(|| invalid("family", format!("unknown graph family {s:?}")))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidProbability(p));
                }
                Ok(Self::ErdosRenyi(p))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub ns: Vec<usize>,
    pub epsilons: Vec<f64>,
    pub families: Vec<GraphFamily>,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub epsilon: f64,
    pub family: String,
    pub trials: usize,
    pub t_exact: u64,
    pub c4: u64,
    pub var_empirical: f64,
    pub var_oracle: f64,
    pub ratio: f64,
    pub seed: u64,
}

/// Empirical vs exact variance for every `(n, epsilon, family)` cell.
pub fn variance_sweep(cfg: &SweepConfig, key: &StreamKey) -> Result<Vec<SweepRow>> {
    if cfg.trials < 1000 {
        return Err(invalid("trials", format!("need at least 1000, got {}", cfg.trials)));
    }
    let mut rows = Vec::new();
    for &n in &cfg.ns {
        for (fi, family) in cfg.families.iter().enumerate() {
            let g = family.instantiate(n, &key.derive2(tag::GRAPH, n as u64).derive(fi as u64))?;
            let t_exact = graph::count_triangles_exact(&g);
            let c4 = graph::count_c4_exact(&g);
            for &epsilon in &cfg.epsilons {
                let var_oracle = exact_variance_oracle(&g, epsilon)?;
                let cell = key.derive2(n as u64, epsilon.to_bits()).derive(fi as u64);
                let samples = stats::run_trials(cfg.trials, &cell, |_, k| {
                    estimate_triangles(&g, epsilon, k).map(|e| e.t_hat)
                })?;
                let var_empirical = stats::sample_variance(&samples);
                rows.push(SweepRow {
                    n,
                    epsilon,
                    family: family.to_string(),
                    trials: cfg.trials,
                    t_exact,
                    c4,
                    var_empirical,
                    var_oracle,
                    ratio: var_empirical / var_oracle,
                    seed: key.seed(),
                });
            }
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.n, r.epsilon, r.family, r.trials, r.t_exact, r.c4, r.var_empirical, r.var_oracle, r.ratio, r.seed
        );
    }
    s
}
