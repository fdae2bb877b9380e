//! Exact moments of the rescaled triangle estimator.
//!
//! Two independent routes: [`exact_variance_oracle`] evaluates the closed-form
//! decomposition (per-triple variances plus covariances of triples sharing an
//! edge), while [`enumerate_moments`] sums over every noisy release pattern
//! with its exact probability.

use crate::error::{Error, Result};
use crate::graph::{self, Graph};

use super::rescale_atoms;

/// Largest number of potential edges [`enumerate_moments`] accepts (2^24 patterns).
pub const ENUMERATION_MAX_PAIRS: usize = 24;

/// `Var[Y_ij] = e^eps / (e^eps - 1)^2` for a single rescaled edge.
pub fn rr_variance_factor(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    let d = epsilon.exp_m1();
    Ok((d + 1.0) / (d * d))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpectationMode {
    /// `E[T_hat] = T` by linearity; valid for any size.
    Linearity,
    /// Sum over all release patterns; needs `C(n, 2) <= 24`.
    Enumeration,
}

pub fn exact_expectation_oracle(g: &Graph, epsilon: f64, mode: ExpectationMode) -> Result<f64> {
    rescale_atoms(epsilon)?;
    match mode {
        ExpectationMode::Linearity => Ok(graph::count_triangles_exact(g) as f64),
        ExpectationMode::Enumeration => Ok(enumerate_moments(g, epsilon)?.mean),
    }
}

/// Exact `Var[T_hat]`.
pub fn exact_variance_oracle(g: &Graph, epsilon: f64) -> Result<f64> {
    let s = rr_variance_factor(epsilon)?;
    let n = g.n();
    let e = |i, j| f64::from(u8::from(g.has_edge(i, j)));

    let mut triples = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let a = e(i, j);
            for k in j + 1..n {
                let (b, c) = (e(j, k), e(i, k));
                triples += (s + a) * (s + b) * (s + c) - a * b * c;
            }
        }
    }

    // Triples {i,j,k}, {j,k,l} sharing the pair {j,k} have covariance
    // s * a_ij a_ik a_jl a_kl; both orders of each pair enter the sum.
    let mut shared = 0u64;
    for j in 0..n {
        for k in j + 1..n {
            let c = g.codegree(j, k) as u64;
            shared += c * c.saturating_sub(1) / 2;
        }
    }
    Ok(triples + 2.0 * s * shared as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnumeratedMoments {
    pub mean: f64,
    pub variance: f64,
    pub patterns: u64,
}

#[derive(Default)]
struct Neumaier {
    sum: f64,
    c: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// Mean and variance of the estimator by enumerating all `2^C(n,2)` noisy
/// release patterns.
pub fn enumerate_moments(g: &Graph, epsilon: f64) -> Result<EnumeratedMoments> {
    let n = g.n();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    if pairs.len() > ENUMERATION_MAX_PAIRS {
        return Err(Error::TooLarge {
            reason: format!(
                "{} potential edges exceeds the enumeration cap of {}",
                pairs.len(),
                ENUMERATION_MAX_PAIRS
            ),
        });
    }
    let (lo, hi) = rescale_atoms(epsilon)?;
    let keep = 1.0 - crate::ledp::flip_probability(epsilon)?;
    let flip = 1.0 - keep;

    let index = |i: usize, j: usize| pairs.iter().position(|&p| p == (i.min(j), i.max(j))).unwrap();
    let mut triples = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                triples.push((index(i, j), index(j, k), index(i, k)));
            }
        }
    }
    let truth: Vec<bool> = pairs.iter().map(|&(i, j)| g.has_edge(i, j)).collect();

    let patterns = 1u64 << pairs.len();
    let eval = |mask: u64| -> (f64, f64) {
        let mut p = 1.0;
        let mut y = [0.0f64; ENUMERATION_MAX_PAIRS];
        for (idx, &t) in truth.iter().enumerate() {
            let x = mask >> idx & 1 == 1;
            p *= if x == t { keep } else { flip };
            y[idx] = if x { hi } else { lo };
        }
        let t_hat: f64 = triples.iter().map(|&(a, b, c)| y[a] * y[b] * y[c]).sum();
        (p, t_hat)
    };

    let mut mean = Neumaier::default();
    for mask in 0..patterns {
        let (p, t) = eval(mask);
        mean.add(p * t);
    }
    let mean = mean.value();
    let mut var = Neumaier::default();
    for mask in 0..patterns {
        let (p, t) = eval(mask);
        var.add(p * (t - mean) * (t - mean));
    }
    Ok(EnumeratedMoments {
        mean,
        variance: var.value(),
        patterns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{complete, count_c4_exact, cycle};

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn k3_expectation_by_enumeration() {
        let m = enumerate_moments(&complete(3), 3f64.ln()).unwrap();
        assert_eq!(m.patterns, 8);
        assert!((m.mean - 1.0).abs() < 1e-12);
        let m = enumerate_moments(&complete(3), 2f64.ln()).unwrap();
        assert!((m.mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_triangle_has_zero_mean_and_s_cubed_variance() {
        let g = Graph::empty(3);
        let eps = 2f64.ln();
        let m = enumerate_moments(&g, eps).unwrap();
        assert!(m.mean.abs() < 1e-12);
        // s = 2 / 1^2 = 2, one triple, no shared-edge pairs
        assert!((exact_variance_oracle(&g, eps).unwrap() - 8.0).abs() < 1e-12);
        assert!((m.variance - 8.0).abs() < 1e-9);
    }

    #[test]
    fn k4_decomposition_matches_enumeration() {
        let eps = 3f64.ln();
        let g = complete(4);
        let m = enumerate_moments(&g, eps).unwrap();
        let v = exact_variance_oracle(&g, eps).unwrap();
        assert!(rel(v, m.variance) < 1e-9, "{v} vs {}", m.variance);
        assert!((m.mean - 4.0).abs() < 1e-9);
    }

    #[test]
    fn shared_term_equals_four_s_c4() {
        let eps = 1.3;
        let s = rr_variance_factor(eps).unwrap();
        let g = complete(5);
        let base: f64 = {
            let h = Graph::empty(5);
            // with no edges only the per-triple s^3 terms remain
            exact_variance_oracle(&h, eps).unwrap()
        };
        assert!((base - 10.0 * s.powi(3)).abs() < 1e-9 * base);
        let per_triple = 10.0 * ((s + 1.0).powi(3) - 1.0);
        let v = exact_variance_oracle(&g, eps).unwrap();
        let c4 = count_c4_exact(&g) as f64;
        assert!(rel(v, per_triple + 4.0 * s * c4) < 1e-12);
    }

    #[test]
    fn expectation_modes_agree() {
        let g = cycle(5);
        let a = exact_expectation_oracle(&g, 1.0, ExpectationMode::Linearity).unwrap();
        let b = exact_expectation_oracle(&g, 1.0, ExpectationMode::Enumeration).unwrap();
        assert_eq!(a, 0.0);
        assert!(b.abs() < 1e-9);
        assert_eq!(exact_expectation_oracle(&complete(4), 0.3, ExpectationMode::Linearity).unwrap(), 4.0);
    }

    #[test]
    fn enumeration_cap_enforced() {
        assert!(matches!(enumerate_moments(&complete(8), 1.0), Err(Error::TooLarge { .. })));
        assert!(exact_expectation_oracle(&complete(8), 1.0, ExpectationMode::Enumeration).is_err());
    }

    #[test]
    fn variance_decreases_in_epsilon() {
        let g = complete(6);
        let mut prev = f64::INFINITY;
        for eps in [0.25, 0.5, 1.0, 2.0, 4.0] {
            let v = exact_variance_oracle(&g, eps).unwrap();
            assert!(v >= 0.0 && v < prev);
            prev = v;
        }
    }
}
