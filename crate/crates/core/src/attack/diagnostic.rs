//! End-to-end attack runs and the privacy-distance diagnostic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::ledp::{ExactTriangleCounter, IdentityFamily, Postprocessor, PrivacyTotal, RandomizerFamily};
use crate::rng::{tag, StreamKey};
use crate::rr::{RandomizedResponseFamily, RescaledTriangleSum};
use crate::stats;

use super::{
    attacker_reconstruct, default_query_count, graybox_answer_outer, graybox_prepare, outer_product_answer,
    sample_queries, validate_gamma, AttackReport, BitDataset, OuterProductQuery, SearchStrategy,
};

/// How the answers fed to the attacker are produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mechanism {
    /// Randomized response plus rescaled triangle sum, through the gray box.
    RandomizedResponse { epsilon: f64 },
    /// Verbatim release plus exact counting, through the gray box.
    Identity,
    /// `A^T X B` computed directly.
    Oracle,
}

impl Mechanism {
    pub fn name(&self) -> &'static str {
        match self {
            Self::RandomizedResponse { .. } => "rr",
            Self::Identity => "identity",
            Self::Oracle => "oracle",
        }
    }

    pub fn parse(name: &str, epsilon: Option<f64>) -> Result<Self> {
        match name {
            "rr" => {
                let epsilon = epsilon.ok_or_else(|| invalid("epsilon", "required for the rr mechanism"))?;
                RandomizedResponseFamily::new(epsilon)?;
                Ok(Self::RandomizedResponse { epsilon })
            }
            "identity" => Ok(Self::Identity),
            "oracle" => Ok(Self::Oracle),
            other => Err(invalid("mechanism", format!("unknown mechanism {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnswerSet {
    pub answers: Vec<f64>,
    /// Largest per-bit charge over the secret-touching invocations.
    pub charge: PrivacyTotal,
    pub secret_invocations: usize,
}

fn answer_with(
    x: &BitDataset,
    queries: &[OuterProductQuery],
    family: &dyn RandomizerFamily,
    post: &dyn Postprocessor,
    key: &StreamKey,
) -> Result<AnswerSet> {
    let state = graybox_prepare(x, family, &key.derive(tag::GRAYBOX_R0))?;
    let answers = queries
        .par_iter()
        .enumerate()
        .map(|(l, q)| graybox_answer_outer(&state, q, family, post, &key.derive2(tag::QUERIES, l as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(AnswerSet {
        answers,
        charge: state.charge(),
        secret_invocations: state.transcript().invocation_count(),
    })
}

pub fn answer_queries(
    x: &BitDataset,
    queries: &[OuterProductQuery],
    mechanism: Mechanism,
    key: &StreamKey,
) -> Result<AnswerSet> {
    match mechanism {
        Mechanism::RandomizedResponse { epsilon } => {
            let family = RandomizedResponseFamily::new(epsilon)?;
            let post = RescaledTriangleSum::new(epsilon)?;
            answer_with(x, queries, &family, &post, key)
        }
        Mechanism::Identity => answer_with(x, queries, &IdentityFamily::default(), &ExactTriangleCounter, key),
        Mechanism::Oracle => Ok(AnswerSet {
            answers: queries
                .iter()
                .map(|q| outer_product_answer(x, q).map(|v| v as f64))
                .collect::<Result<_>>()?,
            charge: PrivacyTotal {
                epsilon: f64::INFINITY,
                delta: 0.0,
            },
            secret_invocations: 0,
        }),
    }
}

/// `e^-eps (1/2 - delta) N`: expected Hamming distance any reconstruction must
/// incur against an `(eps, delta)` mechanism on `N` uniform bits.
pub fn hamming_lower_bound(epsilon: f64, delta: f64, bits: usize) -> f64 {
    (-epsilon).exp() * (0.5 - delta) * bits as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub n: usize,
    #[serde(default = "AttackConfig::default_gamma")]
    pub gamma: f64,
    /// Defaults to `ceil(128 n^2 / gamma^2)`.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "AttackConfig::default_mechanism")]
    pub mechanism: String,
    /// Hill-climbing restarts; ignored for exhaustive search.
    #[serde(default)]
    pub budget: Option<usize>,
    #[serde(default)]
    pub exhaustive: Option<bool>,
    #[serde(default)]
    pub seed: u64,
}

impl AttackConfig {
    pub fn default_gamma() -> f64 {
        1.0 / 9.0
    }

    fn default_mechanism() -> String {
        "rr".into()
    }

    pub fn query_count(&self) -> usize {
        self.k.unwrap_or_else(|| default_query_count(self.n, self.gamma))
    }

    pub fn strategy(&self) -> SearchStrategy {
        match self.exhaustive {
            Some(true) => SearchStrategy::Exhaustive,
            Some(false) => SearchStrategy::HillClimb {
                restarts: self.budget.unwrap_or(4).max(1),
                max_steps: 4 * self.n * self.n,
            },
            None => SearchStrategy::auto(self.n, self.budget),
        }
    }

    pub fn mechanism(&self) -> Result<Mechanism> {
        Mechanism::parse(&self.mechanism, self.epsilon)
    }
}

/// Samples `X` and the queries from `key`, answers through `mechanism` and
/// decodes.
pub fn attack_once(
    n: usize,
    gamma: f64,
    k: usize,
    mechanism: Mechanism,
    search: SearchStrategy,
    key: &StreamKey,
) -> Result<(AttackReport, AnswerSet)> {
    if n == 0 {
        return Err(invalid("n", "must be positive"));
    }
    validate_gamma(gamma)?;
    let x = BitDataset::random(n, &key.derive(tag::DATASET));
    let queries = sample_queries(n, k, &key.derive(tag::QUERIES))?;
    let answers = answer_queries(&x, &queries, mechanism, &key.derive(tag::RANDOMIZER))?;
    let report = attacker_reconstruct(&answers.answers, &queries, n, gamma, search, Some(&x), &key.derive(tag::SEARCH))?;
    Ok((report, answers))
}

pub fn run_attack(cfg: &AttackConfig) -> Result<AttackReport> {
    let key = StreamKey::new(cfg.seed);
    let (mut report, _) = attack_once(cfg.n, cfg.gamma, cfg.query_count(), cfg.mechanism()?, cfg.strategy(), &key)?;
    report.seed = cfg.seed;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrivacyDistanceReport {
    pub mechanism: Mechanism,
    pub n: usize,
    pub k: usize,
    pub gamma: f64,
    pub trials: usize,
    pub seed: u64,
    /// `None` when the mechanism is not private.
    pub ledger_epsilon: Option<f64>,
    pub ledger_delta: Option<f64>,
    pub mean_hamming: f64,
    pub std_error: f64,
    pub lower_bound: Option<f64>,
    pub feasible_trials: usize,
    pub within_gamma: usize,
    pub hammings: Vec<usize>,
}

impl PrivacyDistanceReport {
    /// `mean + 3 se >= bound`; vacuous for non-private mechanisms.
    pub fn consistent_with_bound(&self) -> bool {
        self.lower_bound
            .is_none_or(|b| self.mean_hamming + 3.0 * self.std_error >= b)
    }
}

/// Mean Hamming distance of the attacker's output over `trials` uniform
/// secrets, against the lower bound implied by the ledger's charge.
pub fn privacy_distance_diagnostic(
    mechanism: Mechanism,
    n: usize,
    gamma: f64,
    k: usize,
    trials: usize,
    search: SearchStrategy,
    key: &StreamKey,
) -> Result<PrivacyDistanceReport> {
    if trials < 20 {
        return Err(invalid("trials", "at least 20 trials required"));
    }
    let mut hammings = Vec::with_capacity(trials);
    let mut feasible_trials = 0;
    let mut charge = PrivacyTotal::ZERO;
    for t in 0..trials {
        let (report, answers) = attack_once(n, gamma, k, mechanism, search, &key.derive2(tag::TRIAL, t as u64))?;
        feasible_trials += usize::from(report.feasible);
        hammings.push(report.hamming.expect("truth supplied"));
        charge = answers.charge;
    }
    let values: Vec<f64> = hammings.iter().map(|&h| h as f64).collect();
    let private = charge.is_private();
    let bound = private.then(|| hamming_lower_bound(charge.epsilon, charge.delta, n * n));
    let limit = gamma * (n * n) as f64;
    Ok(PrivacyDistanceReport {
        mechanism,
        n,
        k,
        gamma,
        trials,
        seed: key.seed(),
        ledger_epsilon: private.then_some(charge.epsilon),
        ledger_delta: private.then_some(charge.delta),
        mean_hamming: stats::mean(&values),
        std_error: stats::std_error(&values),
        lower_bound: bound,
        feasible_trials,
        within_gamma: hammings.iter().filter(|&&h| h as f64 <= limit).count(),
        hammings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_examples() {
        assert!((hamming_lower_bound(0.1, 0.0, 64) - 28.9548).abs() < 1e-3);
        assert_eq!(hamming_lower_bound(0.0, 0.5, 64), 0.0);
    }

    #[test]
    fn mechanisms_parse() {
        assert_eq!(Mechanism::parse("oracle", None).unwrap(), Mechanism::Oracle);
        assert!(Mechanism::parse("rr", None).is_err());
        assert!(Mechanism::parse("rr", Some(-1.0)).is_err());
        assert!(Mechanism::parse("laplace", None).is_err());
    }

    #[test]
    fn identity_and_oracle_answers_agree() {
        let key = StreamKey::new(4);
        let x = BitDataset::random(4, &key);
        let qs = sample_queries(4, 30, &key.derive(1)).unwrap();
        let a = answer_queries(&x, &qs, Mechanism::Identity, &key).unwrap();
        let b = answer_queries(&x, &qs, Mechanism::Oracle, &key).unwrap();
        assert_eq!(a.answers, b.answers);
        assert_eq!(a.secret_invocations, 16);
        assert!(!a.charge.is_private());
    }

    #[test]
    fn config_defaults() {
        let cfg: AttackConfig = serde_json::from_str(r#"{"n": 8}"#).unwrap();
        assert_eq!(cfg.query_count(), 663_552);
        assert!(matches!(cfg.strategy(), SearchStrategy::HillClimb { .. }));
        assert!(cfg.mechanism().is_err());
        let cfg: AttackConfig = serde_json::from_str(r#"{"n": 3, "mechanism": "oracle", "k": 500}"#).unwrap();
        assert_eq!(cfg.strategy(), SearchStrategy::Exhaustive);
        let r = run_attack(&cfg).unwrap();
        assert!(r.feasible);
        assert_eq!(r.hamming, Some(0));
    }

    #[test]
    fn diagnostic_requires_twenty_trials() {
        let r = privacy_distance_diagnostic(
            Mechanism::Oracle,
            3,
            1.0 / 9.0,
            100,
            19,
            SearchStrategy::Exhaustive,
            &StreamKey::new(1),
        );
        assert!(r.is_err());
    }
}
