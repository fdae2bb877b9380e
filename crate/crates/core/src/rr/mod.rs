//! Triangle counting via randomized response.
//!
//! Vertex `i` releases its bits for `j > i` through randomized response; the
//! curator rescales every noisy bit to `Y_ij = ((e^eps + 1) x - 1) / (e^eps - 1)`
//! (so `E[Y_ij]` is the true edge indicator) and returns the sum of
//! `Y_ij * Y_jk * Y_ik` over all triples.

mod oracle;
mod sweep;

pub use oracle::{
    enumerate_moments, exact_expectation_oracle, exact_variance_oracle, rr_variance_factor,
    EnumeratedMoments, ExpectationMode, ENUMERATION_MAX_PAIRS,
};
pub use sweep::{sweep_csv, variance_sweep, GraphFamily, SweepConfig, SweepRow, SWEEP_CSV_HEADER};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{self, Graph};
use crate::ledp::{
    self, InputView, Payload, Postprocessor, PrivacyParams, RandomizerFamily, RandomizerOutput, Transcript,
};
use crate::rng::StreamKey;

/// Smallest epsilon the estimator accepts; below it the rescaled atoms exceed
/// 10^6 and cancellation swamps the estimate.
pub const MIN_EPSILON: f64 = 1e-6;

fn expm1_checked(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    let d = epsilon.exp_m1();
    if d < 1e-300 {
        return Err(Error::EpsilonTooSmall(epsilon, 1e-300));
    }
    Ok(d)
}

/// `((e^eps + 1) x - 1) / (e^eps - 1)`.
pub fn rescale(x: bool, epsilon: f64) -> Result<f64> {
    let d = expm1_checked(epsilon)?;
    Ok(if x { (d + 1.0) / d } else { -1.0 / d })
}

/// The two values a rescaled edge can take: `(-1/(e^eps-1), e^eps/(e^eps-1))`.
pub fn rescale_atoms(epsilon: f64) -> Result<(f64, f64)> {
    Ok((rescale(false, epsilon)?, rescale(true, epsilon)?))
}

/// Randomized response on each vertex's upper-triangle row.
#[derive(Debug, Clone, Copy)]
pub struct RandomizedResponseFamily {
    params: PrivacyParams,
    view: InputView,
}

impl RandomizedResponseFamily {
    pub fn new(epsilon: f64) -> Result<Self> {
        Ok(Self {
            params: PrivacyParams::pure(epsilon)?,
            view: InputView::UpperTriangle,
        })
    }

    /// Variant that randomizes full rows; each edge is then released twice.
    pub fn full_rows(epsilon: f64) -> Result<Self> {
        Ok(Self {
            view: InputView::FullRow,
            ..Self::new(epsilon)?
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.params.epsilon
    }
}

impl RandomizerFamily for RandomizedResponseFamily {
    fn id(&self) -> &'static str {
        "randomized-response"
    }

    fn view(&self) -> InputView {
        self.view
    }

    fn params(&self) -> PrivacyParams {
        self.params
    }

    fn randomize(&self, _vertex: usize, input: &[bool], key: &StreamKey) -> Result<Payload> {
        let bits = ledp::randomized_response(input, self.params.epsilon, &mut key.rng())?;
        Ok(Payload::Bits(bits))
    }
}

/// Rescale-and-multiply postprocessing over upper-triangle releases.
#[derive(Debug, Clone, Copy)]
pub struct RescaledTriangleSum {
    low: f64,
    high: f64,
}

impl RescaledTriangleSum {
    pub fn new(epsilon: f64) -> Result<Self> {
        let (low, high) = rescale_atoms(epsilon)?;
        Ok(Self { low, high })
    }

    /// Dense symmetric matrix of rescaled values; the diagonal is unused.
    pub fn rescaled_matrix(&self, n: usize, outputs: &[&RandomizerOutput]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; n * n];
        for out in outputs {
            if out.view != InputView::UpperTriangle {
                return Err(Error::Postprocessor(format!(
                    "vertex {} released a {:?} view; upper triangle required",
                    out.vertex, out.view
                )));
            }
            let bits = out
                .payload
                .bits()
                .ok_or_else(|| Error::Postprocessor("expected bit payload".into()))?;
            let i = out.vertex;
            if i >= n || bits.len() != n - i - 1 {
                return Err(Error::DimensionMismatch {
                    expected: n.saturating_sub(i + 1),
                    actual: bits.len(),
                });
            }
            for (off, &b) in bits.iter().enumerate() {
                let j = i + 1 + off;
                let v = if b { self.high } else { self.low };
                y[i * n + j] = v;
                y[j * n + i] = v;
            }
        }
        Ok(y)
    }
}

impl RescaledTriangleSum {
    /// The triple sum expanded in `y = low + c e` with `c = high - low` and
    /// `e` the released indicator: every triple contributes
    /// `low^3 + low^2 c (e1 + e2 + e3) + low c^2 (e1 e2 + e1 e3 + e2 e3) + c^3 e1 e2 e3`,
    /// and the four sums are `C(n,3)`, `|E| (n - 2)`, wedges and triangles.
    fn estimate_from_counts(&self, n: usize, released: &Graph) -> f64 {
        if n < 3 {
            return 0.0;
        }
        let (lo, c) = (self.low, self.high - self.low);
        let nf = n as f64;
        let triples = nf * (nf - 1.0) * (nf - 2.0) / 6.0;
        let edges = released.edge_count() as f64 * (nf - 2.0);
        let wedges = graph::count_wedges(released) as f64;
        let triangles = graph::count_triangles_exact(released) as f64;
        lo * lo * lo * triples + lo * lo * c * edges + lo * c * c * wedges + c * c * c * triangles
    }
}

/// Sum over `i < j < k` of `y_ij * y_jk * y_ik` for a dense symmetric matrix.
/// Reference form of the estimator; the postprocessor uses released-graph counts.
pub fn triple_product_sum(n: usize, y: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..n {
        let ri = &y[i * n..(i + 1) * n];
        for j in i + 1..n {
            let rj = &y[j * n..(j + 1) * n];
            let inner: f64 = ri[j + 1..].iter().zip(&rj[j + 1..]).map(|(a, b)| a * b).sum();
            total += ri[j] * inner;
        }
    }
    total
}

impl Postprocessor for RescaledTriangleSum {
    fn postprocess(&self, n: usize, outputs: &[&RandomizerOutput], _key: &StreamKey) -> Result<f64> {
        if outputs.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: outputs.len(),
            });
        }
        if let Some(out) = outputs.iter().find(|o| o.view != InputView::UpperTriangle) {
            return Err(Error::Postprocessor(format!(
                "vertex {} released a {:?} view; upper triangle required",
                out.vertex, out.view
            )));
        }
        let released = ledp::released_graph(n, outputs)?;
        Ok(self.estimate_from_counts(n, &released))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TriangleEstimate {
    pub t_hat: f64,
    pub epsilon: f64,
    pub n: usize,
    pub seed: u64,
    pub exact_t: Option<u64>,
}

pub fn estimate_triangles_with_transcript(
    g: &Graph,
    epsilon: f64,
    key: &StreamKey,
) -> Result<(TriangleEstimate, Transcript)> {
    if epsilon.is_finite() && epsilon > 0.0 && epsilon < MIN_EPSILON {
        return Err(Error::EpsilonTooSmall(epsilon, MIN_EPSILON));
    }
    let family = RandomizedResponseFamily::new(epsilon)?;
    let post = RescaledTriangleSum::new(epsilon)?;
    let (t_hat, transcript) = ledp::run_noninteractive(g, &family, &post, key)?;
    let est = TriangleEstimate {
        t_hat,
        epsilon,
        n: g.n(),
        seed: key.seed(),
        exact_t: Some(graph::count_triangles_exact(g)),
    };
    Ok((est, transcript))
}

pub fn estimate_triangles(g: &Graph, epsilon: f64, key: &StreamKey) -> Result<TriangleEstimate> {
    estimate_triangles_with_transcript(g, epsilon, key).map(|(e, _)| e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{complete, Graph};
    use crate::rng::tag;

    #[test]
    fn rescale_examples() {
        assert!((rescale(true, 3f64.ln()).unwrap() - 1.5).abs() < 1e-12);
        assert!((rescale(false, 3f64.ln()).unwrap() + 0.5).abs() < 1e-12);
        assert!((rescale(true, 2f64.ln()).unwrap() - 2.0).abs() < 1e-12);
        assert!(rescale(true, 0.0).is_err());
        assert!(rescale(true, -0.5).is_err());
        assert!(matches!(rescale(true, 1e-310), Err(Error::EpsilonTooSmall(..))));
    }

    #[test]
    fn two_vertices_give_zero() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let est = estimate_triangles(&g, 1.0, &StreamKey::new(1)).unwrap();
        assert_eq!(est.t_hat, 0.0);
    }

    #[test]
    fn tiny_epsilon_rejected() {
        assert!(matches!(
            estimate_triangles(&complete(4), 1e-7, &StreamKey::new(1)),
            Err(Error::EpsilonTooSmall(..))
        ));
        assert!(estimate_triangles(&complete(4), 0.0, &StreamKey::new(1)).is_err());
    }

    #[test]
    fn estimate_is_deterministic_and_single_round() {
        let g = complete(6);
        let key = StreamKey::new(11).derive(tag::TRIAL);
        let (a, ta) = estimate_triangles_with_transcript(&g, 1.0, &key).unwrap();
        let (b, _) = estimate_triangles_with_transcript(&g, 1.0, &key).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta.round_count(), 1);
        assert_eq!(ta.ledger().global().epsilon, 1.0);
        assert_eq!(a.exact_t, Some(20));
    }

    #[test]
    fn every_rescaled_value_is_an_atom() {
        let eps = 0.8;
        let (lo, hi) = rescale_atoms(eps).unwrap();
        let g = complete(7);
        let (_, t) = estimate_triangles_with_transcript(&g, eps, &StreamKey::new(4)).unwrap();
        let outs: Vec<_> = t.rounds()[0].entries().iter().collect();
        let y = RescaledTriangleSum::new(eps).unwrap().rescaled_matrix(7, &outs).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                if i != j {
                    let v = y[i * 7 + j];
                    assert!(v == lo || v == hi);
                }
            }
        }
    }

    #[test]
    fn triple_sum_matches_triangle_count_on_indicator_matrix() {
        let g = complete(6);
        let n = 6;
        let y: Vec<f64> = (0..n * n)
            .map(|idx| f64::from(u8::from(g.has_edge(idx / n, idx % n))))
            .collect();
        assert_eq!(triple_product_sum(n, &y), 20.0);
    }

    #[test]
    fn count_expansion_matches_dense_sum() {
        for (seed, eps) in [(1u64, 0.05), (2, 0.7), (3, 2.5)] {
            let g = crate::graph::erdos_renyi(13, 0.4, &StreamKey::new(seed)).unwrap();
            let (est, t) = estimate_triangles_with_transcript(&g, eps, &StreamKey::new(seed)).unwrap();
            let outs: Vec<_> = t.rounds()[0].entries().iter().collect();
            let y = RescaledTriangleSum::new(eps).unwrap().rescaled_matrix(13, &outs).unwrap();
            let dense = triple_product_sum(13, &y);
            assert!((est.t_hat - dense).abs() <= 1e-9 * dense.abs().max(1.0), "{} vs {dense}", est.t_hat);
        }
    }

    #[test]
    fn postprocessor_rejects_full_rows() {
        let fam = RandomizedResponseFamily::full_rows(1.0).unwrap();
        let post = RescaledTriangleSum::new(1.0).unwrap();
        assert!(ledp::run_noninteractive(&complete(4), &fam, &post, &StreamKey::new(1)).is_err());
    }
}
