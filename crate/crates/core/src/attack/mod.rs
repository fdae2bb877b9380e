//! Reconstruction attack through a noninteractive triangle counter.
//!
//! A secret `n x n` bit matrix `X` is embedded as the bipartite subgraph
//! between `U1 = [0, n)` and `U2 = [n, 2n)` of a graph on `3n` vertices. A
//! submatrix query `(q1, q2)` connects the selected U-vertices to every vertex
//! of `W = [2n, 3n)`, which makes the triangle count exactly `n * q1^T X q2`.
//! Outer-product (sign-vector) queries reduce to three submatrix queries. The
//! gray box ([`graybox`]) answers arbitrarily many such queries from only two
//! randomizer invocations per U-vertex, and the attacker ([`attacker`])
//! decodes `X` from the answers.

pub mod attacker;
pub mod diagnostic;
pub mod graybox;

pub use attacker::{attacker_reconstruct, AttackReport, SearchStrategy, Thresholds};
pub use diagnostic::{
    answer_queries, hamming_lower_bound, privacy_distance_diagnostic, run_attack, AnswerSet, AttackConfig,
    Mechanism, PrivacyDistanceReport,
};
pub use graybox::{graybox_answer_outer, graybox_answer_submatrix, graybox_prepare, GrayBoxState};

use rand::Rng;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::anticoncentration::DiffMatrix;
use crate::error::{invalid, Error, Result};
use crate::graph::{Graph, VertexPartition};
use crate::rng::StreamKey;

/// Secret `n x n` bit matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitDataset {
    n: usize,
    bits: Vec<bool>,
}

impl BitDataset {
    pub fn new(n: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                actual: bits.len(),
            });
        }
        Ok(Self { n, bits })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            bits: vec![false; n * n],
        }
    }

    pub fn from_rows(rows: &[&[u8]]) -> Result<Self> {
        let n = rows.len();
        let mut bits = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: r.len(),
                });
            }
            bits.extend(r.iter().map(|&b| b != 0));
        }
        Ok(Self { n, bits })
    }

    /// Uniform over `{0,1}^{n x n}`.
    pub fn random(n: usize, key: &StreamKey) -> Self {
        let mut rng = key.rng();
        Self {
            n,
            bits: (0..n * n).map(|_| rng.gen()).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.bits[i * self.n + j] = v;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn hamming(&self, other: &Self) -> Result<usize> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: other.n,
            });
        }
        Ok(self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count())
    }

    /// `self - other`, entrywise in `{-1, 0, 1}`.
    pub fn difference(&self, other: &Self) -> Result<DiffMatrix> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: other.n,
            });
        }
        let entries = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(&a, &b)| i8::from(a) - i8::from(b))
            .collect();
        DiffMatrix::new(self.n, entries)
    }

    fn row_strings(&self) -> Vec<String> {
        self.bits
            .chunks(self.n.max(1))
            .map(|r| r.iter().map(|&b| if b { '1' } else { '0' }).collect())
            .collect()
    }
}

impl Serialize for BitDataset {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("BitDataset", 2)?;
        st.serialize_field("n", &self.n)?;
        st.serialize_field("rows", &self.row_strings())?;
        st.end()
    }
}

/// Sign vectors `(A, B)`; the answer is `A^T X B`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct OuterProductQuery {
    a: Vec<i8>,
    b: Vec<i8>,
}

impl OuterProductQuery {
    pub fn new(a: Vec<i8>, b: Vec<i8>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                actual: b.len(),
            });
        }
        if a.iter().chain(&b).any(|&v| v != 1 && v != -1) {
            return Err(invalid("query", "outer-product entries must be +1 or -1"));
        }
        Ok(Self { a, b })
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self) -> &[i8] {
        &self.a
    }

    pub fn b(&self) -> &[i8] {
        &self.b
    }
}

/// Bit vectors `(q1, q2)`; the answer is `q1^T X q2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct SubmatrixQuery {
    q1: Vec<bool>,
    q2: Vec<bool>,
}

impl SubmatrixQuery {
    pub fn new(q1: Vec<bool>, q2: Vec<bool>) -> Result<Self> {
        if q1.len() != q2.len() {
            return Err(Error::DimensionMismatch {
                expected: q1.len(),
                actual: q2.len(),
            });
        }
        Ok(Self { q1, q2 })
    }

    pub fn all_ones(n: usize) -> Self {
        Self {
            q1: vec![true; n],
            q2: vec![true; n],
        }
    }

    pub fn n(&self) -> usize {
        self.q1.len()
    }

    pub fn q1(&self) -> &[bool] {
        &self.q1
    }

    pub fn q2(&self) -> &[bool] {
        &self.q2
    }
}

fn check_dim(x: &BitDataset, n: usize) -> Result<()> {
    if x.n() != n {
        Err(Error::DimensionMismatch {
            expected: x.n(),
            actual: n,
        })
    } else {
        Ok(())
    }
}

pub fn outer_product_answer(x: &BitDataset, q: &OuterProductQuery) -> Result<i64> {
    check_dim(x, q.n())?;
    let n = x.n();
    let mut total = 0i64;
    for i in 0..n {
        let row: i64 = (0..n)
            .filter(|&j| x.get(i, j))
            .map(|j| i64::from(q.b[j]))
            .sum();
        total += i64::from(q.a[i]) * row;
    }
    Ok(total)
}

pub fn submatrix_answer(x: &BitDataset, q: &SubmatrixQuery) -> Result<i64> {
    check_dim(x, q.n())?;
    let n = x.n();
    let mut total = 0i64;
    for i in (0..n).filter(|&i| q.q1[i]) {
        total += (0..n).filter(|&j| q.q2[j] && x.get(i, j)).count() as i64;
    }
    Ok(total)
}

/// The three submatrix queries `(A', B')`, `(A'', B'')`, `(1, 1)` simulating an
/// outer-product query, with `A' = (A + 1)/2` and `A'' = (1 - A)/2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitQuery {
    pub parts: [SubmatrixQuery; 3],
}

impl SplitQuery {
    /// `A^T X B = 2 (a1 + a2) - a3`.
    pub fn combine(&self, answers: [f64; 3]) -> f64 {
        2.0 * (answers[0] + answers[1]) - answers[2]
    }

    pub fn combine_exact(&self, answers: [i64; 3]) -> i64 {
        2 * (answers[0] + answers[1]) - answers[2]
    }
}

pub fn split_outer_product(q: &OuterProductQuery) -> SplitQuery {
    let pos = |v: &[i8]| v.iter().map(|&s| s == 1).collect::<Vec<_>>();
    let neg = |v: &[i8]| v.iter().map(|&s| s == -1).collect::<Vec<_>>();
    SplitQuery {
        parts: [
            SubmatrixQuery {
                q1: pos(&q.a),
                q2: pos(&q.b),
            },
            SubmatrixQuery {
                q1: neg(&q.a),
                q2: neg(&q.b),
            },
            SubmatrixQuery::all_ones(q.n()),
        ],
    }
}

/// Bipartite secret subgraph on `3n` vertices: `u1_i ~ u2_j` iff `X_ij = 1`,
/// `W` isolated.
pub fn build_secret_graph(x: &BitDataset) -> (Graph, VertexPartition) {
    let n = x.n();
    let mut g = Graph::empty(3 * n);
    for i in 0..n {
        for j in 0..n {
            if x.get(i, j) {
                g.add_edge(i, n + j).expect("in range");
            }
        }
    }
    let parts = VertexPartition::contiguous(3 * n, &[n, n, n], &["U1", "U2", "W"]).expect("disjoint blocks");
    (g, parts)
}

/// Secret subgraph plus edges from every selected U-vertex to all of `W`.
pub fn build_query_graph(x: &BitDataset, q: &SubmatrixQuery) -> Result<Graph> {
    check_dim(x, q.n())?;
    let n = x.n();
    let (mut g, _) = build_secret_graph(x);
    for (offset, sel) in [(0, &q.q1), (n, &q.q2)] {
        for i in (0..n).filter(|&i| sel[i]) {
            for w in 2 * n..3 * n {
                g.add_edge(offset + i, w)?;
            }
        }
    }
    Ok(g)
}

/// `ceil(128 n^2 / gamma^2)`, robust to `gamma` not being exactly representable.
pub fn default_query_count(n: usize, gamma: f64) -> usize {
    let v = 128.0 * (n * n) as f64 / (gamma * gamma);
    let r = v.round();
    if (v - r).abs() <= 1e-9 * v {
        r as usize
    } else {
        v.ceil() as usize
    }
}

pub fn sample_queries(n: usize, k: usize, key: &StreamKey) -> Result<Vec<OuterProductQuery>> {
    if k == 0 {
        return Err(invalid("k", "at least one query required"));
    }
    let mut rng = key.rng();
    let mut sign = move || if rng.gen::<bool>() { 1i8 } else { -1 };
    Ok((0..k)
        .map(|_| {
            let a = (0..n).map(|_| sign()).collect();
            let b = (0..n).map(|_| sign()).collect();
            OuterProductQuery { a, b }
        })
        .collect())
}

/// `A^T M B` for a difference matrix.
pub fn outer_product_on_diff(m: &DiffMatrix, q: &OuterProductQuery) -> Result<i64> {
    if m.n() != q.n() {
        return Err(Error::DimensionMismatch {
            expected: m.n(),
            actual: q.n(),
        });
    }
    Ok(m.bilinear(&q.a, &q.b))
}

pub(crate) fn validate_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 0.5 || gamma == 0.5 {
        Ok(())
    } else {
        Err(invalid("gamma", format!("must lie in (0, 1/2], got {gamma}")))
    }
}

/// Whether the query set catches a dataset at difference `m`: more than
/// `gamma^2 k / 32` queries have `|Q . M| > sqrt(gamma) n / 2`.
///
/// `gamma` is accepted on `(0, 1]` here so the bound can also be probed
/// outside the attack's range.
pub fn catches(queries: &[OuterProductQuery], m: &DiffMatrix, gamma: f64) -> Result<bool> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(invalid("gamma", format!("must lie in (0, 1], got {gamma}")));
    }
    let n = m.n() as f64;
    let threshold = gamma.sqrt() * n / 2.0;
    let mut exceed = 0usize;
    for q in queries {
        if (outer_product_on_diff(m, q)?.abs() as f64) > threshold {
            exceed += 1;
        }
    }
    Ok(exceed as f64 > gamma * gamma * queries.len() as f64 / 32.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::count_triangles_exact;

    fn q(a: &[i8], b: &[i8]) -> OuterProductQuery {
        OuterProductQuery::new(a.to_vec(), b.to_vec()).unwrap()
    }

    fn sq(a: &[u8], b: &[u8]) -> SubmatrixQuery {
        SubmatrixQuery::new(a.iter().map(|&v| v == 1).collect(), b.iter().map(|&v| v == 1).collect()).unwrap()
    }

    #[test]
    fn outer_product_examples() {
        let id = BitDataset::from_rows(&[&[1, 0], &[0, 1]]).unwrap();
        assert_eq!(outer_product_answer(&id, &q(&[1, 1], &[1, 1])).unwrap(), 2);
        assert_eq!(outer_product_answer(&BitDataset::zeros(2), &q(&[1, -1], &[-1, 1])).unwrap(), 0);
        let x = BitDataset::from_rows(&[&[1, 1], &[0, 1]]).unwrap();
        assert_eq!(outer_product_answer(&x, &q(&[1, -1], &[1, 1])).unwrap(), 1);
        assert!(outer_product_answer(&x, &q(&[1, 1, 1], &[1, 1, 1])).is_err());
    }

    #[test]
    fn submatrix_examples() {
        let x = BitDataset::from_rows(&[&[1, 0], &[1, 1]]).unwrap();
        assert_eq!(submatrix_answer(&x, &sq(&[1, 1], &[1, 1])).unwrap(), 3);
        assert_eq!(submatrix_answer(&x, &sq(&[0, 0], &[1, 1])).unwrap(), 0);
        assert_eq!(submatrix_answer(&x, &sq(&[1, 1], &[1, 0])).unwrap(), 2);
    }

    #[test]
    fn query_validation() {
        assert!(OuterProductQuery::new(vec![1, 0], vec![1, 1]).is_err());
        assert!(OuterProductQuery::new(vec![1], vec![1, 1]).is_err());
        assert!(SubmatrixQuery::new(vec![true], vec![]).is_err());
        assert!(BitDataset::new(2, vec![true; 3]).is_err());
    }

    #[test]
    fn split_sign_cases() {
        let x = BitDataset::from_rows(&[&[1, 1, 0], &[0, 1, 0], &[1, 0, 1]]).unwrap();
        let pop = x.popcount() as i64;
        for (a, b, expected) in [
            ([1i8, 1, 1], [1i8, 1, 1], pop),
            ([-1, -1, -1], [1, 1, 1], -pop),
        ] {
            let query = q(&a, &b);
            let split = split_outer_product(&query);
            let parts = split.parts.clone().map(|p| submatrix_answer(&x, &p).unwrap());
            assert_eq!(split.combine_exact(parts), expected);
            assert_eq!(outer_product_answer(&x, &query).unwrap(), expected);
        }
    }

    #[test]
    fn secret_graph_layout() {
        let id = BitDataset::from_rows(&[&[1, 0], &[0, 1]]).unwrap();
        let (g, parts) = build_secret_graph(&id);
        assert_eq!(g.edges(), vec![(0, 2), (1, 3)]);
        assert_eq!(parts.part("W"), Some(&[4, 5][..]));
        let (g, _) = build_secret_graph(&BitDataset::zeros(3));
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn query_graph_examples() {
        let ones = BitDataset::from_rows(&[&[1, 1], &[1, 1]]).unwrap();
        let g = build_query_graph(&ones, &sq(&[1, 1], &[1, 1])).unwrap();
        assert_eq!(count_triangles_exact(&g), 8);
        let g = build_query_graph(&ones, &sq(&[0, 0], &[1, 1])).unwrap();
        assert_eq!(count_triangles_exact(&g), 0);
    }

    #[test]
    fn default_k_is_exact_for_one_ninth() {
        assert_eq!(default_query_count(8, 1.0 / 9.0), 663_552);
        assert_eq!(default_query_count(3, 1.0 / 9.0), 93_312);
        assert_eq!(default_query_count(2, 1.0), 512);
    }

    #[test]
    fn sampled_queries_are_deterministic() {
        let k = StreamKey::new(5);
        assert_eq!(sample_queries(4, 10, &k).unwrap(), sample_queries(4, 10, &k).unwrap());
        assert!(sample_queries(4, 0, &k).is_err());
    }

    #[test]
    fn catch_examples() {
        let zero = DiffMatrix::new(2, vec![0; 4]).unwrap();
        let all: Vec<OuterProductQuery> = [[1i8, 1], [1, -1], [-1, 1], [-1, -1]]
            .iter()
            .flat_map(|a| {
                [[1i8, 1], [1, -1], [-1, 1], [-1, -1]]
                    .iter()
                    .map(move |b| q(a, b))
            })
            .collect();
        assert!(!catches(&all, &zero, 1.0).unwrap());
        let ones = DiffMatrix::new(2, vec![1; 4]).unwrap();
        // |A^T M B| = |sum A||sum B| is 4 for 4 of the 16 sign pairs
        assert!(catches(&all, &ones, 1.0).unwrap());
    }
}
