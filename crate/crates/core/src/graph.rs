//! Undirected simple graphs with packed adjacency rows, exact subgraph counts
//! and seeded generators.
//!
//! Vertices are `0..n`. The text format is line 1 = `n`, then one `i j` edge
//! per line with `0 <= i < j < n`, LF-terminated.

use std::fmt::Write as _;

use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::rng::StreamKey;

const WORD: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Graph {
    n: usize,
    words: usize,
    rows: Vec<u64>,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        let words = n.div_ceil(WORD).max(1);
        Self {
            n,
            words,
            rows: vec![0; n * words],
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::empty(n);
        for &(i, j) in edges {
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn check(&self, v: usize) -> Result<()> {
        if v >= self.n {
            Err(Error::VertexOutOfRange {
                vertex: v,
                n: self.n,
            })
        } else {
            Ok(())
        }
    }

    /// Inserts `{i, j}`. Self-loops are rejected; re-inserting is a no-op.
    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<()> {
        self.check(i)?;
        self.check(j)?;
        if i == j {
            return Err(invalid("edge", format!("self-loop at vertex {i}")));
        }
        self.set(i, j, true);
        self.set(j, i, true);
        Ok(())
    }

    /// Inserts `{i, j}` for `i != j`, both already known to be in range.
    pub(crate) fn insert_unchecked(&mut self, i: usize, j: usize) {
        debug_assert!(i < self.n && j < self.n && i != j);
        self.set(i, j, true);
        self.set(j, i, true);
    }

    pub fn remove_edge(&mut self, i: usize, j: usize) -> Result<()> {
        self.check(i)?;
        self.check(j)?;
        self.set(i, j, false);
        self.set(j, i, false);
        Ok(())
    }

    fn set(&mut self, i: usize, j: usize, on: bool) {
        let w = &mut self.rows[i * self.words + j / WORD];
        let mask = 1u64 << (j % WORD);
        if on {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && self.rows[i * self.words + j / WORD] >> (j % WORD) & 1 == 1
    }

    #[inline]
    pub fn row_words(&self, i: usize) -> &[u64] {
        &self.rows[i * self.words..(i + 1) * self.words]
    }

    /// Full adjacency vector of vertex `i`.
    pub fn row(&self, i: usize) -> Vec<bool> {
        (0..self.n).map(|j| self.has_edge(i, j)).collect()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row_words(i).iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn edge_count(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).sum::<usize>() / 2
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.has_edge(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.has_edge(i, j)).collect()
    }

    /// Number of common neighbours of `i` and `j`.
    pub fn codegree(&self, i: usize, j: usize) -> usize {
        self.row_words(i)
            .iter()
            .zip(self.row_words(j))
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    /// Symmetric adjacency with an empty diagonal.
    pub fn is_valid(&self) -> bool {
        (0..self.n).all(|i| {
            !self.has_edge(i, i) && (0..self.n).all(|j| self.has_edge(i, j) == self.has_edge(j, i))
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.split('\n').enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::GraphFormat {
            line: 1,
            reason: "missing vertex count".into(),
        })?;
        let n: usize = header.parse().map_err(|_| Error::GraphFormat {
            line: 1,
            reason: format!("expected vertex count, found {header:?}"),
        })?;
        let mut g = Self::empty(n);
        let body: Vec<(usize, &str)> = lines.collect();
        let last = body.len();
        for (idx, (lineno, line)) in body.into_iter().enumerate() {
            let line_no = lineno + 1;
            if line.is_empty() && idx + 1 == last {
                break;
            }
            let bad = |reason: String| Error::GraphFormat {
                line: line_no,
                reason,
            };
            let mut parts = line.split(' ');
            let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(bad(format!("expected `i j`, found {line:?}")));
            };
            let i: usize = a.parse().map_err(|_| bad(format!("bad vertex {a:?}")))?;
            let j: usize = b.parse().map_err(|_| bad(format!("bad vertex {b:?}")))?;
            if i >= j || j >= n {
                return Err(bad(format!("pair ({i}, {j}) violates 0 <= i < j < {n}")));
            }
            if g.has_edge(i, j) {
                return Err(bad(format!("duplicate edge ({i}, {j})")));
            }
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{}\n", self.n);
        for (i, j) in self.edges() {
            let _ = writeln!(s, "{i} {j}");
        }
        s
    }
}

/// Disjoint labelled vertex sets inside a graph on `n` vertices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VertexPartition {
    parts: Vec<Vec<usize>>,
    labels: Vec<String>,
}

impl VertexPartition {
    pub fn new(n: usize, parts: Vec<Vec<usize>>, labels: Vec<String>) -> Result<Self> {
        if parts.len() != labels.len() {
            return Err(invalid("labels", "one label per part required"));
        }
        let mut seen = vec![false; n];
        for part in &parts {
            for &v in part {
                if v >= n {
                    return Err(Error::VertexOutOfRange { vertex: v, n });
                }
                if seen[v] {
                    return Err(invalid("parts", format!("vertex {v} appears twice")));
                }
                seen[v] = true;
            }
        }
        Ok(Self { parts, labels })
    }

    /// Consecutive blocks `[0, s0), [s0, s0 + s1), ...`.
    pub fn contiguous(n: usize, sizes: &[usize], labels: &[&str]) -> Result<Self> {
        let mut start = 0;
        let mut parts = Vec::with_capacity(sizes.len());
        for &s in sizes {
            parts.push((start..start + s).collect());
            start += s;
        }
        Self::new(n, parts, labels.iter().map(|l| l.to_string()).collect())
    }

    pub fn part(&self, label: &str) -> Option<&[usize]> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.parts[i].as_slice())
    }

    pub fn parts(&self) -> &[Vec<usize>] {
        &self.parts
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Index of the part containing `v`.
    pub fn part_of(&self, v: usize) -> Option<usize> {
        self.parts.iter().position(|p| p.contains(&v))
    }
}

/// Bits strictly above position `b` of a word.
#[inline]
fn above(b: usize) -> u64 {
    if b + 1 >= WORD {
        0
    } else {
        !0u64 << (b + 1)
    }
}

/// Number of triangles.
pub fn count_triangles_exact(g: &Graph) -> u64 {
    let n = g.n();
    let mut total = 0u64;
    if g.words == 1 {
        for (i, &ri) in g.rows.iter().enumerate() {
            let mut nbrs = ri & above(i);
            while nbrs != 0 {
                let j = nbrs.trailing_zeros() as usize;
                nbrs &= nbrs - 1;
                total += u64::from((ri & g.rows[j] & above(j)).count_ones());
            }
        }
        return total;
    }
    for i in 0..n {
        let ri = g.row_words(i);
        let wi = i / WORD;
        for w in wi..ri.len() {
            let mut nbrs = if w == wi { ri[w] & above(i % WORD) } else { ri[w] };
            while nbrs != 0 {
                let j = w * WORD + nbrs.trailing_zeros() as usize;
                nbrs &= nbrs - 1;
                // common neighbours k > j
                let rj = g.row_words(j);
                let wj = j / WORD;
                total += u64::from((ri[wj] & rj[wj] & above(j % WORD)).count_ones());
                for (a, b) in ri[wj + 1..].iter().zip(&rj[wj + 1..]) {
                    total += u64::from((a & b).count_ones());
                }
            }
        }
    }
    total
}

/// Number of paths on three vertices: `sum_v C(deg v, 2)`.
pub fn count_wedges(g: &Graph) -> u64 {
    (0..g.n())
        .map(|v| {
            let d = g.degree(v) as u64;
            d * d.saturating_sub(1) / 2
        })
        .sum()
}

/// Number of distinct 4-cycles, each counted once.
pub fn count_c4_exact(g: &Graph) -> u64 {
    let n = g.n();
    let e = |a, b| g.has_edge(a, b);
    let mut total = 0u64;
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                for d in c + 1..n {
                    // the three ways of arranging four vertices on a cycle
                    total += u64::from(e(a, b) && e(b, c) && e(c, d) && e(d, a));
                    total += u64::from(e(a, b) && e(b, d) && e(d, c) && e(c, a));
                    total += u64::from(e(a, c) && e(c, b) && e(b, d) && e(d, a));
                }
            }
        }
    }
    total
}

pub fn erdos_renyi(n: usize, p: f64, key: &StreamKey) -> Result<Graph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidProbability(p));
    }
    let mut rng = key.rng();
    let mut g = Graph::empty(n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                g.add_edge(i, j)?;
            }
        }
    }
    Ok(g)
}

pub fn complete(n: usize) -> Graph {
    let mut g = Graph::empty(n);
    for i in 0..n {
        for j in i + 1..n {
            g.set(i, j, true);
            g.set(j, i, true);
        }
    }
    g
}

pub fn cycle(n: usize) -> Graph {
    let mut g = Graph::empty(n);
    if n >= 3 {
        for i in 0..n {
            let j = (i + 1) % n;
            g.set(i, j, true);
            g.set(j, i, true);
        }
    }
    g
}

pub fn path(n: usize) -> Graph {
    let mut g = Graph::empty(n);
    for i in 1..n {
        g.set(i - 1, i, true);
        g.set(i, i - 1, true);
    }
    g
}

/// Star with centre 0 and `leaves` leaves.
pub fn star(leaves: usize) -> Graph {
    let mut g = Graph::empty(leaves + 1);
    for v in 1..=leaves {
        g.set(0, v, true);
        g.set(v, 0, true);
    }
    g
}

/// `K_{a,b}` with sides `[0, a)` and `[a, a + b)`.
pub fn complete_bipartite(a: usize, b: usize) -> Graph {
    let mut g = Graph::empty(a + b);
    for i in 0..a {
        for j in a..a + b {
            g.set(i, j, true);
            g.set(j, i, true);
        }
    }
    g
}
