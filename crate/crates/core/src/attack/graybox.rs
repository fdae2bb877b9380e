//! Answering many submatrix queries from two randomizer calls per U-vertex.
//!
//! Each U-vertex is randomized once on its secret row (`r0`) and once on its
//! secret row with every W-edge present (`r1`). A query `(q1, q2)` selects,
//! per U-vertex, `r1` if the vertex is in the query and `r0` otherwise; the W
//! vertices hold no secret bits, so their randomizers are rerun freshly for
//! every query. Running the postprocessor on these outputs has the same
//! distribution as running the whole protocol on the query graph.

use crate::error::{Error, Result};
use crate::ledp::{Postprocessor, PrivacyTotal, RandomizerFamily, RandomizerOutput, Transcript};
use crate::rng::{tag, StreamKey};

use super::{build_secret_graph, split_outer_product, BitDataset, OuterProductQuery, SubmatrixQuery};

/// Stored U-vertex outputs. Round 0 holds `r0`, round 1 holds `r1`.
#[derive(Debug, Clone)]
pub struct GrayBoxState {
    n: usize,
    family: &'static str,
    transcript: Transcript,
}

impl GrayBoxState {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn family(&self) -> &'static str {
        self.family
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    /// Per-bit privacy charge of the stored invocations, maximized over bits.
    pub fn charge(&self) -> PrivacyTotal {
        self.transcript.ledger().global()
    }

    fn stored(&self, selected: bool, vertex: usize) -> &RandomizerOutput {
        self.transcript
            .output(usize::from(selected), vertex)
            .expect("every U-vertex is stored in both rounds")
    }
}

pub fn graybox_prepare(x: &BitDataset, family: &dyn RandomizerFamily, key: &StreamKey) -> Result<GrayBoxState> {
    let n = x.n();
    let (g, _) = build_secret_graph(x);
    let mut transcript = Transcript::new(3 * n);
    for (round, label) in [tag::GRAYBOX_R0, tag::GRAYBOX_R1].into_iter().enumerate() {
        transcript.begin_round();
        for u in 0..2 * n {
            let mut row = g.row(u);
            if round == 1 {
                row[2 * n..].fill(true);
            }
            transcript.record(family.invoke(u, &row, &key.derive2(label, u as u64))?);
        }
    }
    Ok(GrayBoxState {
        n,
        family: family.id(),
        transcript,
    })
}

fn check_family(state: &GrayBoxState, family: &dyn RandomizerFamily) -> Result<()> {
    if family.id() != state.family {
        return Err(Error::InvalidParameter {
            name: "family",
            reason: format!("state prepared with {}, answered with {}", state.family, family.id()),
        });
    }
    Ok(())
}

/// Estimate of `q1^T X q2`: the postprocessed triangle estimate divided by `n`.
pub fn graybox_answer_submatrix(
    state: &GrayBoxState,
    q: &SubmatrixQuery,
    family: &dyn RandomizerFamily,
    post: &dyn Postprocessor,
    key: &StreamKey,
) -> Result<f64> {
    check_family(state, family)?;
    let n = state.n;
    if q.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: q.n(),
        });
    }
    let total = 3 * n;
    let mut fresh = Vec::with_capacity(n);
    let mut row = vec![false; total];
    row[..n].copy_from_slice(q.q1());
    row[n..2 * n].copy_from_slice(q.q2());
    for w in 2 * n..total {
        fresh.push(family.invoke(w, &row, &key.derive2(tag::GRAYBOX_W, w as u64))?);
    }
    let mut outputs: Vec<&RandomizerOutput> = Vec::with_capacity(total);
    outputs.extend((0..n).map(|i| state.stored(q.q1()[i], i)));
    outputs.extend((0..n).map(|j| state.stored(q.q2()[j], n + j)));
    outputs.extend(fresh.iter());
    let t = post.postprocess(total, &outputs, &key.derive(tag::POSTPROCESS))?;
    Ok(t / n as f64)
}

/// Estimate of `A^T X B` via the three-way split.
pub fn graybox_answer_outer(
    state: &GrayBoxState,
    q: &OuterProductQuery,
    family: &dyn RandomizerFamily,
    post: &dyn Postprocessor,
    key: &StreamKey,
) -> Result<f64> {
    let split = split_outer_product(q);
    let mut answers = [0.0; 3];
    for (idx, part) in split.parts.iter().enumerate() {
        answers[idx] = graybox_answer_submatrix(state, part, family, post, &key.derive2(tag::SUBQUERY, idx as u64))?;
    }
    Ok(split.combine(answers))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{outer_product_answer, sample_queries, submatrix_answer};
    use crate::ledp::{ExactTriangleCounter, IdentityFamily};
    use crate::rr::{RandomizedResponseFamily, RescaledTriangleSum};

    #[test]
    fn identity_graybox_is_exact() {
        let x = BitDataset::random(5, &StreamKey::new(3));
        let fam = IdentityFamily::default();
        let state = graybox_prepare(&x, &fam, &StreamKey::new(4)).unwrap();
        let key = StreamKey::new(9);
        for (idx, q) in sample_queries(5, 40, &key).unwrap().iter().enumerate() {
            let k = key.derive(idx as u64);
            let a = graybox_answer_outer(&state, q, &fam, &ExactTriangleCounter, &k).unwrap();
            assert_eq!(a, outer_product_answer(&x, q).unwrap() as f64);
            let sub = &split_outer_product(q).parts[0];
            let s = graybox_answer_submatrix(&state, sub, &fam, &ExactTriangleCounter, &k).unwrap();
            assert_eq!(s, submatrix_answer(&x, sub).unwrap() as f64);
        }
    }

    #[test]
    fn two_invocations_per_u_vertex() {
        let n = 4;
        let x = BitDataset::random(n, &StreamKey::new(1));
        let fam = RandomizedResponseFamily::new(1.0).unwrap();
        let post = RescaledTriangleSum::new(1.0).unwrap();
        let state = graybox_prepare(&x, &fam, &StreamKey::new(2)).unwrap();
        let key = StreamKey::new(3);
        for (idx, q) in sample_queries(n, 25, &key).unwrap().iter().enumerate() {
            graybox_answer_outer(&state, q, &fam, &post, &key.derive(idx as u64)).unwrap();
        }
        assert_eq!(state.transcript().round_count(), 2);
        assert_eq!(state.transcript().invocation_count(), 4 * n);
        let charge = state.charge();
        assert!((charge.epsilon - 2.0).abs() < 1e-12);
        assert_eq!(charge.delta, 0.0);
    }

    #[test]
    fn family_mismatch_rejected() {
        let x = BitDataset::zeros(2);
        let state = graybox_prepare(&x, &IdentityFamily::default(), &StreamKey::new(1)).unwrap();
        let fam = RandomizedResponseFamily::new(1.0).unwrap();
        let post = RescaledTriangleSum::new(1.0).unwrap();
        let q = SubmatrixQuery::all_ones(2);
        assert!(graybox_answer_submatrix(&state, &q, &fam, &post, &StreamKey::new(1)).is_err());
        let q3 = SubmatrixQuery::all_ones(3);
        let id = IdentityFamily::default();
        assert!(graybox_answer_submatrix(&state, &q3, &id, &ExactTriangleCounter, &StreamKey::new(1)).is_err());
    }
}
