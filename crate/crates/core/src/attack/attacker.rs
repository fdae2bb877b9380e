//! Decoding the secret matrix from noisy outer-product answers.
//!
//! A candidate `Y` is feasible when at most `gamma^2 k / 64` answers differ
//! from `A^T Y B` by more than `sqrt(gamma) n / 4`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{tag, StreamKey};

use super::{validate_gamma, BitDataset, OuterProductQuery};

/// Largest `n^2` searched exhaustively.
pub const EXHAUSTIVE_MAX_BITS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SearchStrategy {
    /// Every candidate in Gray-code order; first feasible one wins.
    Exhaustive,
    /// Least-squares coordinate descent followed by single-flip descent on the
    /// inaccurate-answer count, from a correlation start and then random starts.
    HillClimb { restarts: usize, max_steps: usize },
}

impl SearchStrategy {
    /// Exhaustive when it fits, otherwise hill climbing with `restarts` starts.
    pub fn auto(n: usize, restarts: Option<usize>) -> Self {
        if n * n <= EXHAUSTIVE_MAX_BITS {
            Self::Exhaustive
        } else {
            Self::HillClimb {
                restarts: restarts.unwrap_or(4).max(1),
                max_steps: 4 * n * n,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    /// An answer is inaccurate when it misses by more than this.
    pub accuracy: f64,
    /// Feasible candidates have at most this many inaccurate answers.
    pub disagreement_budget: f64,
}

impl Thresholds {
    pub fn new(n: usize, k: usize, gamma: f64) -> Result<Self> {
        validate_gamma(gamma)?;
        Ok(Self {
            accuracy: gamma.sqrt() * n as f64 / 4.0,
            disagreement_budget: gamma * gamma * k as f64 / 64.0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackReport {
    pub n: usize,
    pub k: usize,
    pub gamma: f64,
    pub seed: u64,
    pub thresholds: Thresholds,
    pub search: SearchStrategy,
    pub feasible: bool,
    pub y_star: Option<BitDataset>,
    /// Lowest-count candidate seen, reported only when nothing was feasible.
    pub fallback: Option<BitDataset>,
    /// Inaccurate answers of the returned candidate.
    pub inaccurate_count: usize,
    /// Distance from the returned candidate to the true matrix, when known.
    pub hamming: Option<usize>,
    pub candidates_examined: u64,
}

impl AttackReport {
    /// `y_star` if feasible, the fallback otherwise.
    pub fn output(&self) -> &BitDataset {
        self.y_star
            .as_ref()
            .or(self.fallback.as_ref())
            .expect("one of y_star and fallback is set")
    }
}

struct Problem<'a> {
    n: usize,
    k: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    answers: &'a [f64],
    tau: f64,
    budget: f64,
}

impl Problem<'_> {
    #[inline]
    fn coeff(&self, l: usize, bit: usize) -> f64 {
        self.a[l * self.n + bit / self.n] * self.b[l * self.n + bit % self.n]
    }

    fn predictions(&self, y: &[bool]) -> Vec<f64> {
        let n = self.n;
        (0..self.k)
            .map(|l| {
                let (al, bl) = (&self.a[l * n..(l + 1) * n], &self.b[l * n..(l + 1) * n]);
                let mut total = 0.0;
                for i in 0..n {
                    let row: f64 = (0..n).filter(|&j| y[i * n + j]).map(|j| bl[j]).sum();
                    total += al[i] * row;
                }
                total
            })
            .collect()
    }

    fn count(&self, d: &[f64]) -> usize {
        d.iter()
            .zip(self.answers)
            .filter(|(p, a)| (*p - *a).abs() > self.tau)
            .count()
    }

    fn feasible(&self, count: usize) -> bool {
        count as f64 <= self.budget
    }
}

struct Best {
    y: Vec<bool>,
    count: usize,
}

impl Best {
    fn offer(&mut self, y: &[bool], count: usize) {
        if count < self.count {
            self.count = count;
            self.y.copy_from_slice(y);
        }
    }
}

fn exhaustive(p: &Problem, best: &mut Best) -> u64 {
    let bits = p.n * p.n;
    let mut y = vec![false; bits];
    let mut d = vec![0.0; p.k];
    let c = p.count(&d);
    best.offer(&y, c);
    if p.feasible(c) {
        return 1;
    }
    for step in 1u64..1u64 << bits {
        let bit = step.trailing_zeros() as usize;
        let delta = if y[bit] { -1.0 } else { 1.0 };
        y[bit] = !y[bit];
        let mut c = 0;
        for l in 0..p.k {
            d[l] += delta * p.coeff(l, bit);
            if (d[l] - p.answers[l]).abs() > p.tau {
                c += 1;
            }
        }
        best.offer(&y, c);
        if p.feasible(c) {
            return step + 1;
        }
    }
    1u64 << bits
}

/// `Y_ij = [ (1/k) sum_l a_l A_i B_j > 1/2 ]`.
fn correlation_start(p: &Problem) -> Vec<bool> {
    let n = p.n;
    let mut g = vec![0.0; n * n];
    gradient_into(p, p.answers, &mut g);
    g.iter().map(|&v| v / p.k as f64 > 0.5).collect()
}

/// `out_ij = sum_l r_l A_li B_lj`.
fn gradient_into(p: &Problem, r: &[f64], out: &mut [f64]) {
    let n = p.n;
    out.fill(0.0);
    let mut rb = vec![0.0; n];
    for (l, &rl) in r.iter().enumerate() {
        let (al, bl) = (&p.a[l * n..(l + 1) * n], &p.b[l * n..(l + 1) * n]);
        for j in 0..n {
            rb[j] = rl * bl[j];
        }
        for i in 0..n {
            let row = &mut out[i * n..(i + 1) * n];
            let s = al[i];
            for j in 0..n {
                row[j] += s * rb[j];
            }
        }
    }
}

fn apply_flip(p: &Problem, y: &mut [bool], d: &mut [f64], bit: usize) {
    let delta = if y[bit] { -1.0 } else { 1.0 };
    y[bit] = !y[bit];
    for (l, dl) in d.iter_mut().enumerate() {
        *dl += delta * p.coeff(l, bit);
    }
}

/// Coordinate descent on `sum_l (A^T Y B - a_l)^2`. Flipping bit `ij` by
/// `delta` changes the objective by `k + 2 delta G_ij`.
fn least_squares_descent(p: &Problem, y: &mut [bool], d: &mut [f64], max_steps: usize) -> u64 {
    let mut g = vec![0.0; p.n * p.n];
    let mut r = vec![0.0; p.k];
    let mut steps = 0;
    while steps < max_steps {
        for (rl, (dl, al)) in r.iter_mut().zip(d.iter().zip(p.answers)) {
            *rl = dl - al;
        }
        gradient_into(p, &r, &mut g);
        let (bit, _) = (0..y.len())
            .map(|bit| {
                let delta = if y[bit] { -1.0 } else { 1.0 };
                (bit, p.k as f64 + 2.0 * delta * g[bit])
            })
            .fold((usize::MAX, 0.0), |acc, c| if c.1 < acc.1 { c } else { acc });
        if bit == usize::MAX {
            break;
        }
        apply_flip(p, y, d, bit);
        steps += 1;
    }
    steps as u64
}

/// First-improvement single flips on the inaccurate count.
fn count_descent(p: &Problem, y: &mut [bool], d: &mut [f64], mut count: usize, max_steps: usize) -> (usize, u64) {
    let mut examined = 0;
    let mut trial = d.to_vec();
    for _ in 0..max_steps {
        if p.feasible(count) {
            break;
        }
        let mut improved = false;
        for bit in 0..y.len() {
            let delta = if y[bit] { -1.0 } else { 1.0 };
            for (l, t) in trial.iter_mut().enumerate() {
                *t = d[l] + delta * p.coeff(l, bit);
            }
            examined += 1;
            let c = p.count(&trial);
            if c < count {
                apply_flip(p, y, d, bit);
                count = c;
                improved = true;
                break;
            }
        }
        if !improved {
            break;
        }
    }
    (count, examined)
}

fn hill_climb(p: &Problem, restarts: usize, max_steps: usize, key: &StreamKey, best: &mut Best) -> u64 {
    let bits = p.n * p.n;
    let mut examined = 0;
    for restart in 0..restarts.max(1) {
        let mut y = if restart == 0 {
            correlation_start(p)
        } else {
            let mut rng = key.derive2(tag::SEARCH, restart as u64).rng();
            (0..bits).map(|_| rng.gen()).collect()
        };
        let mut d = p.predictions(&y);
        examined += 1 + least_squares_descent(p, &mut y, &mut d, max_steps);
        let mut count = p.count(&d);
        // Single flips rarely rescue a candidate far from feasibility.
        if !p.feasible(count) && (count as f64) <= 4.0 * p.budget.max(1.0) {
            let (c, e) = count_descent(p, &mut y, &mut d, count, max_steps);
            count = c;
            examined += e;
        }
        best.offer(&y, count);
        if p.feasible(count) {
            break;
        }
    }
    examined
}

/// Searches for a feasible candidate given answers to `queries`.
///
/// `truth`, when supplied, is only used to report the Hamming distance of the
/// returned candidate.
pub fn attacker_reconstruct(
    answers: &[f64],
    queries: &[OuterProductQuery],
    n: usize,
    gamma: f64,
    search: SearchStrategy,
    truth: Option<&BitDataset>,
    key: &StreamKey,
) -> Result<AttackReport> {
    let k = queries.len();
    if k == 0 {
        return Err(invalid("queries", "at least one query required"));
    }
    if answers.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: answers.len(),
        });
    }
    if let Some(q) = queries.iter().find(|q| q.n() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: q.n(),
        });
    }
    if let Some(t) = truth {
        if t.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: t.n(),
            });
        }
    }
    if answers.iter().any(|a| !a.is_finite()) {
        return Err(invalid("answers", "must be finite"));
    }
    let thresholds = Thresholds::new(n, k, gamma)?;
    if search == SearchStrategy::Exhaustive && n * n > EXHAUSTIVE_MAX_BITS {
        return Err(Error::TooLarge {
            reason: format!("exhaustive search over 2^{} candidates", n * n),
        });
    }

    let flat = |f: fn(&OuterProductQuery) -> &[i8]| -> Vec<f64> {
        queries.iter().flat_map(|q| f(q).iter().map(|&s| f64::from(s))).collect()
    };
    let p = Problem {
        n,
        k,
        a: flat(OuterProductQuery::a),
        b: flat(OuterProductQuery::b),
        answers,
        tau: thresholds.accuracy,
        budget: thresholds.disagreement_budget,
    };
    let mut best = Best {
        y: vec![false; n * n],
        count: usize::MAX,
    };
    let examined = match search {
        SearchStrategy::Exhaustive => exhaustive(&p, &mut best),
        SearchStrategy::HillClimb { restarts, max_steps } => hill_climb(&p, restarts, max_steps, key, &mut best),
    };
    let candidate = BitDataset::new(n, best.y)?;
    let feasible = p.feasible(best.count);
    let hamming = truth.map(|t| t.hamming(&candidate)).transpose()?;
    let (y_star, fallback) = if feasible {
        (Some(candidate), None)
    } else {
        (None, Some(candidate))
    };
    Ok(AttackReport {
        n,
        k,
        gamma,
        seed: key.seed(),
        thresholds,
        search,
        feasible,
        y_star,
        fallback,
        inaccurate_count: best.count,
        hamming,
        candidates_examined: examined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{outer_product_answer, sample_queries};

    fn exact(x: &BitDataset, qs: &[OuterProductQuery]) -> Vec<f64> {
        qs.iter().map(|q| outer_product_answer(x, q).unwrap() as f64).collect()
    }

    #[test]
    fn thresholds_at_one_ninth() {
        let t = Thresholds::new(8, 663_552, 1.0 / 9.0).unwrap();
        assert!((t.accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert!((t.disagreement_budget - 128.0).abs() < 1e-9);
        assert!(Thresholds::new(8, 10, 0.0).is_err());
        assert!(Thresholds::new(8, 10, 0.6).is_err());
    }

    #[test]
    fn exhaustive_recovers_exact_answers() {
        let key = StreamKey::new(21);
        for t in 0..5 {
            let x = BitDataset::random(3, &key.derive2(tag::DATASET, t));
            let qs = sample_queries(3, 400, &key.derive2(tag::QUERIES, t)).unwrap();
            let r = attacker_reconstruct(&exact(&x, &qs), &qs, 3, 1.0 / 9.0, SearchStrategy::Exhaustive, Some(&x), &key)
                .unwrap();
            assert!(r.feasible);
            assert_eq!(r.y_star.as_ref(), Some(&x));
            assert_eq!(r.hamming, Some(0));
            assert_eq!(r.inaccurate_count, 0);
        }
    }

    #[test]
    fn hill_climb_recovers_exact_answers() {
        let key = StreamKey::new(5);
        let x = BitDataset::random(6, &key.derive(tag::DATASET));
        let qs = sample_queries(6, 3000, &key.derive(tag::QUERIES)).unwrap();
        let s = SearchStrategy::auto(6, Some(2));
        let r = attacker_reconstruct(&exact(&x, &qs), &qs, 6, 1.0 / 9.0, s, Some(&x), &key).unwrap();
        assert!(r.feasible);
        assert_eq!(r.hamming, Some(0));
    }

    #[test]
    fn least_squares_escapes_random_start() {
        let key = StreamKey::new(8);
        let x = BitDataset::random(5, &key.derive(tag::DATASET));
        let qs = sample_queries(5, 2000, &key.derive(tag::QUERIES)).unwrap();
        let answers = exact(&x, &qs);
        let p = Problem {
            n: 5,
            k: qs.len(),
            a: qs.iter().flat_map(|q| q.a().iter().map(|&s| f64::from(s))).collect(),
            b: qs.iter().flat_map(|q| q.b().iter().map(|&s| f64::from(s))).collect(),
            answers: &answers,
            tau: 0.5,
            budget: 0.0,
        };
        let mut y = vec![false; 25];
        let mut d = p.predictions(&y);
        least_squares_descent(&p, &mut y, &mut d, 100);
        assert_eq!(y, x.bits());
        assert_eq!(d, p.predictions(&y));
    }

    #[test]
    fn infeasible_reports_fallback() {
        let key = StreamKey::new(2);
        let qs = sample_queries(2, 64, &key).unwrap();
        let answers = vec![1000.0; 64];
        let r = attacker_reconstruct(&answers, &qs, 2, 0.25, SearchStrategy::Exhaustive, None, &key).unwrap();
        assert!(!r.feasible);
        assert!(r.y_star.is_none());
        assert_eq!(r.output().n(), 2);
        assert_eq!(r.inaccurate_count, 64);
        assert_eq!(r.candidates_examined, 16);
    }

    #[test]
    fn input_validation() {
        let key = StreamKey::new(2);
        let qs = sample_queries(5, 4, &key).unwrap();
        assert!(attacker_reconstruct(&[0.0; 3], &qs, 5, 0.1, SearchStrategy::auto(5, None), None, &key).is_err());
        assert!(matches!(
            attacker_reconstruct(&[0.0; 4], &qs, 5, 0.1, SearchStrategy::Exhaustive, None, &key),
            Err(Error::TooLarge { .. })
        ));
        assert!(attacker_reconstruct(&[0.0; 4], &qs, 4, 0.1, SearchStrategy::Exhaustive, None, &key).is_err());
        assert!(attacker_reconstruct(&[f64::NAN; 4], &qs, 5, 0.1, SearchStrategy::auto(5, None), None, &key).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let key = StreamKey::new(77);
        let qs = sample_queries(5, 300, &key).unwrap();
        let mut rng = key.derive(1).rng();
        let answers: Vec<f64> = (0..300).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let s = SearchStrategy::auto(5, Some(3));
        let a = attacker_reconstruct(&answers, &qs, 5, 0.25, s, None, &key).unwrap();
        let b = attacker_reconstruct(&answers, &qs, 5, 0.25, s, None, &key).unwrap();
        assert_eq!(a, b);
    }
}
