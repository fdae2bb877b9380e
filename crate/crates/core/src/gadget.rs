//! Summation through triangle counting.
//!
//! Party `i` holds bit `x_i` and owns the V2 vertices `n + 2i` and
//! `n + 2i + 1`, joined iff `x_i = 1`. Every V1 vertex is joined to all of V2,
//! so each matching edge closes exactly `n` triangles and `T = n * sum(x)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{Graph, VertexPartition};
use crate::ledp;
use crate::rng::{tag, StreamKey};
use crate::rr::{self, rescale_atoms};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct BitVector {
    bits: Vec<bool>,
}

impl BitVector {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// Parses a string of `0`/`1` characters.
    pub fn parse(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(invalid("bits", format!("unexpected character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }

    pub fn random(n: usize, key: &StreamKey) -> Self {
        let mut rng = key.rng();
        Self::new((0..n).map(|_| rng.gen()).collect())
    }

    pub fn n(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn sum(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }
}

pub fn build_sum_gadget(x: &BitVector) -> (Graph, VertexPartition) {
    let n = x.n();
    let mut g = Graph::empty(3 * n);
    for u in 0..n {
        for v in n..3 * n {
            g.add_edge(u, v).expect("in range");
        }
    }
    for (i, &b) in x.bits().iter().enumerate() {
        if b {
            g.add_edge(n + 2 * i, n + 2 * i + 1).expect("in range");
        }
    }
    let parts = VertexPartition::contiguous(3 * n, &[n, 2 * n], &["V1", "V2"]).expect("disjoint blocks");
    (g, parts)
}

pub fn triangles_to_sum(t_hat: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(invalid("n", "must be positive"));
    }
    Ok(t_hat / n as f64)
}

/// Randomized response on each bit, rescaled and summed.
pub fn ldp_sum_baseline(x: &BitVector, epsilon: f64, key: &StreamKey) -> Result<f64> {
    let (lo, hi) = rescale_atoms(epsilon)?;
    let mut total = 0.0;
    for (i, &b) in x.bits().iter().enumerate() {
        let noisy = ledp::randomized_response(&[b], epsilon, &mut key.derive2(tag::RANDOMIZER, i as u64).rng())?;
        total += if noisy[0] { hi } else { lo };
    }
    Ok(total)
}

/// Builds the gadget, estimates its triangles with randomized response and
/// divides by `n`.
pub fn end_to_end_sum_via_triangles(x: &BitVector, epsilon: f64, key: &StreamKey) -> Result<f64> {
    let (g, _) = build_sum_gadget(x);
    let est = rr::estimate_triangles(&g, epsilon, key)?;
    triangles_to_sum(est.t_hat, x.n())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GadgetSummary {
    pub n: usize,
    pub s: u64,
    pub t: u64,
}

pub fn gadget_exact(x: &BitVector) -> Result<GadgetSummary> {
    let (g, _) = build_sum_gadget(x);
    let t = crate::graph::count_triangles_exact(&g);
    let s = x.sum();
    if t != s * x.n() as u64 {
        return Err(Error::OracleMismatch(format!("gadget has {t} triangles, expected {}", s * x.n() as u64)));
    }
    Ok(GadgetSummary { n: x.n(), s, t })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub ns: Vec<usize>,
    pub epsilon: f64,
    pub trials: usize,
    /// Trials of the triangle route; 0 skips it.
    #[serde(default)]
    pub triangle_trials: usize,
    /// Largest `n` run through the triangle route.
    #[serde(default = "ScalingConfig::default_triangle_max_n")]
    pub triangle_max_n: usize,
}

impl ScalingConfig {
    fn default_triangle_max_n() -> usize {
        32
    }
}

pub const SCALING_CSV_HEADER: &str =
    "n,epsilon,trials,mean_abs_error_baseline,mean_abs_error_via_triangles,fitted_exponent";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub epsilon: f64,
    pub trials: usize,
    pub mean_abs_error_baseline: f64,
    pub mean_abs_error_via_triangles: Option<f64>,
    pub fitted_exponent: f64,
}

/// Mean absolute error of both summation routes per `n`, with the log-log
/// slope of the baseline error against `n`.
pub fn sum_scaling(cfg: &ScalingConfig, key: &StreamKey) -> Result<Vec<ScalingRow>> {
    if cfg.ns.len() < 2 || cfg.ns.contains(&0) {
        return Err(invalid("ns", "at least two positive sizes required"));
    }
    if cfg.trials == 0 {
        return Err(invalid("trials", "must be positive"));
    }
    rescale_atoms(cfg.epsilon)?;
    let mut base = Vec::with_capacity(cfg.ns.len());
    let mut via = Vec::with_capacity(cfg.ns.len());
    for &n in &cfg.ns {
        let x = BitVector::random(n, &key.derive2(tag::DATASET, n as u64));
        let s = x.sum() as f64;
        let errs = stats::run_trials(cfg.trials, &key.derive2(tag::TRIAL, n as u64), |_, k| {
            Ok((ldp_sum_baseline(&x, cfg.epsilon, k)? - s).abs())
        })?;
        base.push(stats::mean(&errs));
        via.push(if cfg.triangle_trials > 0 && n <= cfg.triangle_max_n {
            let errs = stats::run_trials(cfg.triangle_trials, &key.derive2(tag::GRAPH, n as u64), |_, k| {
                Ok((end_to_end_sum_via_triangles(&x, cfg.epsilon, k)? - s).abs())
            })?;
            Some(stats::mean(&errs))
        } else {
            None
        });
    }
    let xs: Vec<f64> = cfg.ns.iter().map(|&n| n as f64).collect();
    let slope = stats::log_log_slope(&xs, &base);
    Ok(cfg
        .ns
        .iter()
        .zip(base.into_iter().zip(via))
        .map(|(&n, (b, v))| ScalingRow {
            n,
            epsilon: cfg.epsilon,
            trials: cfg.trials,
            mean_abs_error_baseline: b,
            mean_abs_error_via_triangles: v,
            fitted_exponent: slope,
        })
        .collect())
}

pub fn scaling_csv(rows: &[ScalingRow]) -> String {
    let mut out = String::from(SCALING_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let via = r.mean_abs_error_via_triangles.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.n, r.epsilon, r.trials, r.mean_abs_error_baseline, via, r.fitted_exponent
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::count_triangles_exact;

    #[test]
    fn gadget_examples() {
        let t = |s: &str| count_triangles_exact(&build_sum_gadget(&BitVector::parse(s).unwrap()).0);
        assert_eq!(t("0000"), 0);
        assert_eq!(t("101"), 6);
        assert_eq!(t("1111"), 16);
        assert_eq!(gadget_exact(&BitVector::parse("101").unwrap()).unwrap(), GadgetSummary { n: 3, s: 2, t: 6 });
        assert!(BitVector::parse("10a").is_err());
    }

    #[test]
    fn gadget_partition() {
        let (g, p) = build_sum_gadget(&BitVector::parse("10").unwrap());
        assert_eq!(g.n(), 6);
        assert_eq!(p.part("V1"), Some(&[0, 1][..]));
        assert_eq!(p.part("V2"), Some(&[2, 3, 4, 5][..]));
        assert!(g.has_edge(2, 3));
        assert!(!g.has_edge(4, 5));
    }

    #[test]
    fn triangles_to_sum_divides() {
        assert_eq!(triangles_to_sum(6.0, 3).unwrap(), 2.0);
        assert_eq!(triangles_to_sum(0.0, 7).unwrap(), 0.0);
        assert!(triangles_to_sum(1.0, 0).is_err());
    }

    #[test]
    fn baseline_rejects_bad_epsilon() {
        let x = BitVector::parse("11").unwrap();
        assert!(ldp_sum_baseline(&x, 0.0, &StreamKey::new(1)).is_err());
        assert!(end_to_end_sum_via_triangles(&x, -1.0, &StreamKey::new(1)).is_err());
    }

    #[test]
    fn near_noiseless_triangle_route() {
        let x = BitVector::new(vec![false; 5]);
        for t in 0..50 {
            let v = end_to_end_sum_via_triangles(&x, 20.0, &StreamKey::new(t)).unwrap();
            assert!(v.abs() < 0.01);
        }
    }

    #[test]
    fn scaling_rows_and_csv() {
        let cfg = ScalingConfig {
            ns: vec![8, 32],
            epsilon: 1.0,
            trials: 200,
            triangle_trials: 5,
            triangle_max_n: 8,
        };
        let rows = sum_scaling(&cfg, &StreamKey::new(2)).unwrap();
        assert!(rows[0].mean_abs_error_via_triangles.is_some());
        assert!(rows[1].mean_abs_error_via_triangles.is_none());
        let csv = scaling_csv(&rows);
        assert!(csv.starts_with(SCALING_CSV_HEADER));
        assert!(csv.lines().nth(2).unwrap().contains(",,"));
    }
}
