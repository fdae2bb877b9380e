//! Anti-concentration of `U = A^T M B` for uniform sign vectors `A`, `B` and
//! a difference matrix `M` over `{-1, 0, 1}`.
//!
//! Exact results enumerate all `4^n` sign pairs in integer arithmetic; larger
//! `n` falls back to Monte Carlo with a standard error.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::rng::{tag, StreamKey};

/// Largest side length enumerated exactly (`4^7 = 16384` sign pairs).
pub const EXHAUSTIVE_MAX_N: usize = 7;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DiffMatrix {
    n: usize,
    entries: Vec<i8>,
    m: usize,
}

impl DiffMatrix {
    pub fn new(n: usize, entries: Vec<i8>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                actual: entries.len(),
            });
        }
        if entries.iter().any(|&e| !(-1..=1).contains(&e)) {
            return Err(invalid("entries", "must lie in {-1, 0, 1}"));
        }
        let m = entries.iter().filter(|&&e| e != 0).count();
        Ok(Self { n, entries, m })
    }

    /// Exactly `support` nonzero entries at uniform positions with uniform signs.
    pub fn random_with_support(n: usize, support: usize, key: &StreamKey) -> Result<Self> {
        if support > n * n {
            return Err(invalid("support", format!("{support} exceeds {} entries", n * n)));
        }
        let mut rng = key.rng();
        let mut entries = vec![0i8; n * n];
        for pos in index::sample(&mut rng, n * n, support) {
            entries[pos] = if rng.gen() { 1 } else { -1 };
        }
        Self::new(n, entries)
    }

    /// Support drawn uniformly from `[ceil(gamma n^2), n^2]`.
    pub fn random_dense(n: usize, gamma: f64, key: &StreamKey) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(invalid("gamma", format!("must lie in (0, 1], got {gamma}")));
        }
        let lo = min_support(n, gamma);
        let support = key.derive(0).rng().gen_range(lo..=n * n);
        Self::random_with_support(n, support, &key.derive(1))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of nonzero entries.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn entries(&self) -> &[i8] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> i8 {
        self.entries[i * self.n + j]
    }

    /// `a^T M b`.
    pub fn bilinear(&self, a: &[i8], b: &[i8]) -> i64 {
        let n = self.n;
        let mut total = 0i64;
        for (i, &ai) in a.iter().enumerate().take(n) {
            let row = &self.entries[i * n..(i + 1) * n];
            let mb: i64 = row.iter().zip(b).map(|(&m, &bj)| i64::from(m * bj)).sum();
            total += i64::from(ai) * mb;
        }
        total
    }
}

/// Smallest integer support `m` with `m >= gamma n^2`.
pub fn min_support(n: usize, gamma: f64) -> usize {
    let v = gamma * (n * n) as f64;
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r as usize
    } else {
        v.ceil() as usize
    }
}

fn check_cap(n: usize) -> Result<()> {
    if n > EXHAUSTIVE_MAX_N {
        return Err(Error::TooLarge {
            reason: format!("n = {n} exceeds the enumeration cap of {EXHAUSTIVE_MAX_N}"),
        });
    }
    Ok(())
}

fn signs(mask: u64, n: usize) -> Vec<i8> {
    (0..n).map(|i| if mask >> i & 1 == 1 { -1 } else { 1 }).collect()
}

/// Calls `f(U)` for every sign pair.
fn for_each_u(m: &DiffMatrix, mut f: impl FnMut(i64)) {
    let n = m.n;
    let columns: Vec<Vec<i64>> = (0..1u64 << n)
        .map(|mask| {
            let b = signs(mask, n);
            (0..n)
                .map(|i| (0..n).map(|j| i64::from(m.get(i, j) * b[j])).sum())
                .collect()
        })
        .collect();
    for amask in 0..1u64 << n {
        let a = signs(amask, n);
        for mb in &columns {
            f(a.iter().zip(mb).map(|(&ai, &v)| i64::from(ai) * v).sum());
        }
    }
}

/// Exact power sums of `U` over all `4^n` sign pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ExactMoments {
    pub pairs: u64,
    pub sum1: i64,
    pub sum2: i64,
    pub sum4: i64,
}

impl ExactMoments {
    pub fn mean(&self) -> f64 {
        self.sum1 as f64 / self.pairs as f64
    }

    pub fn second(&self) -> f64 {
        self.sum2 as f64 / self.pairs as f64
    }

    pub fn fourth(&self) -> f64 {
        self.sum4 as f64 / self.pairs as f64
    }

    /// `E[U^2] == m`, compared as `sum2 == m 4^n`.
    pub fn second_equals(&self, m: usize) -> bool {
        self.sum2 == m as i64 * self.pairs as i64
    }

    /// `E[U^4] <= 9 n^4`, compared as `sum4 <= 9 n^4 4^n`.
    pub fn fourth_within(&self, n: usize) -> bool {
        self.sum4 <= 9 * (n as i64).pow(4) * self.pairs as i64
    }
}

pub fn moments_exhaustive(m: &DiffMatrix) -> Result<ExactMoments> {
    check_cap(m.n)?;
    let (mut s1, mut s2, mut s4) = (0i64, 0i64, 0i64);
    for_each_u(m, |u| {
        let u2 = u * u;
        s1 += u;
        s2 += u2;
        s4 += u2 * u2;
    });
    Ok(ExactMoments {
        pairs: 1u64 << (2 * m.n),
        sum1: s1,
        sum2: s2,
        sum4: s4,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExactTail {
    pub count: u64,
    pub total: u64,
    pub probability: f64,
}

/// Exact `Pr[|U| > threshold]`.
pub fn tail_probability_exhaustive(m: &DiffMatrix, threshold: f64) -> Result<ExactTail> {
    check_cap(m.n)?;
    let mut count = 0u64;
    for_each_u(m, |u| count += u64::from(u.abs() as f64 > threshold));
    let total = 1u64 << (2 * m.n);
    Ok(ExactTail {
        count,
        total,
        probability: count as f64 / total as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaCheck {
    pub m: usize,
    pub count: u64,
    pub total: u64,
    pub holds: bool,
}

/// `Pr[|U| > sqrt(m)/2] >= gamma^2 / 16` for `gamma = num/den`, decided in
/// integers: the event is `4 U^2 > m` and the bound `16 den^2 count >= num^2 total`.
pub fn lemma_check(m: &DiffMatrix, gamma_num: u64, gamma_den: u64) -> Result<LemmaCheck> {
    check_cap(m.n)?;
    if gamma_num == 0 || gamma_den == 0 || gamma_num > gamma_den {
        return Err(invalid("gamma", "must be a fraction in (0, 1]"));
    }
    let mm = m.m as i64;
    let mut count = 0u64;
    for_each_u(m, |u| count += u64::from(4 * u * u > mm));
    let total = 1u64 << (2 * m.n);
    let holds = 16 * u128::from(gamma_den).pow(2) * u128::from(count) >= u128::from(gamma_num).pow(2) * u128::from(total);
    Ok(LemmaCheck {
        m: m.m,
        count,
        total,
        holds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McTail {
    pub probability: f64,
    pub std_error: f64,
    pub samples: usize,
    /// Sample fourth moment of `U`.
    pub fourth: f64,
}

const MC_BLOCK: usize = 4096;

pub fn tail_probability_mc(m: &DiffMatrix, threshold: f64, samples: usize, key: &StreamKey) -> Result<McTail> {
    if samples < 1000 {
        return Err(invalid("samples", "at least 1000 samples required"));
    }
    let n = m.n;
    let blocks = samples.div_ceil(MC_BLOCK);
    let (hits, fourth) = (0..blocks)
        .into_par_iter()
        .map(|blk| {
            let mut rng = key.derive2(tag::MONTE_CARLO, blk as u64).rng();
            let len = MC_BLOCK.min(samples - blk * MC_BLOCK);
            let (mut hits, mut fourth) = (0u64, 0i128);
            let (mut a, mut b) = (vec![0i8; n], vec![0i8; n]);
            for _ in 0..len {
                a.iter_mut().chain(b.iter_mut()).for_each(|s| *s = if rng.gen() { 1 } else { -1 });
                let u = m.bilinear(&a, &b);
                hits += u64::from(u.abs() as f64 > threshold);
                fourth += i128::from(u).pow(4);
            }
            (hits, fourth)
        })
        .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
    let p = hits as f64 / samples as f64;
    Ok(McTail {
        probability: p,
        std_error: (p * (1.0 - p) / samples as f64).sqrt(),
        samples,
        fourth: fourth as f64 / samples as f64,
    })
}

/// `(1 - theta)^2 ez^2 / ez2`.
pub fn paley_zygmund_bound(theta: f64, ez: f64, ez2: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(invalid("theta", "must lie in [0, 1]"));
    }
    if !(ez2 > 0.0) {
        return Err(invalid("ez2", "must be positive"));
    }
    if !(ez >= 0.0) {
        return Err(invalid("ez", "must be non-negative"));
    }
    if ez * ez > ez2 * (1.0 + 1e-12) {
        return Err(invalid("ez", "E[Z]^2 exceeds E[Z^2]"));
    }
    Ok((1.0 - theta).powi(2) * ez * ez / ez2)
}

/// `exp(-delta^2 mu / 2)`.
pub fn chernoff_tail_bound(mu: f64, delta: f64) -> Result<f64> {
    if !(mu > 0.0) || !(delta > 0.0) {
        return Err(invalid("chernoff", "mu and delta must be positive"));
    }
    Ok((-delta * delta * mu / 2.0).exp())
}

/// Sum over all sign pairs of `Z_p Z_q` for every pair of distinct positions
/// `p != q`, where `Z_ij = A_i B_j`. Returns the largest absolute sum.
pub fn max_pairwise_correlation(n: usize) -> Result<i64> {
    check_cap(n)?;
    let cells = n * n;
    let mut sums = vec![0i64; cells * cells];
    for amask in 0..1u64 << n {
        let a = signs(amask, n);
        for bmask in 0..1u64 << n {
            let b = signs(bmask, n);
            let z: Vec<i64> = (0..cells).map(|c| i64::from(a[c / n] * b[c % n])).collect();
            for p in 0..cells {
                for q in p + 1..cells {
                    sums[p * cells + q] += z[p] * z[q];
                }
            }
        }
    }
    Ok(sums.iter().map(|s| s.abs()).max().unwrap_or(0))
}

pub const REPORT_CSV_HEADER: &str = "n,m,gamma,threshold,tail_exact_or_mc,lemma_bound,fourth_moment,fourth_bound";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub n: usize,
    pub m: usize,
    pub gamma: f64,
    pub threshold: f64,
    pub tail: f64,
    /// Zero for exact rows.
    pub tail_std_error: f64,
    pub exact: bool,
    pub lemma_bound: f64,
    pub fourth_moment: f64,
    pub fourth_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ReportConfig {
    pub ns: Vec<usize>,
    pub gammas: Vec<f64>,
    pub instances: usize,
    pub mc_samples: usize,
}

/// One row per random `M` with `m >= gamma n^2`: exact for `n <= 7`,
/// Monte Carlo otherwise.
pub fn anticoncentration_report(cfg: &ReportConfig, key: &StreamKey) -> Result<Vec<ReportRow>> {
    if cfg.ns.contains(&0) {
        return Err(invalid("ns", "side lengths must be positive"));
    }
    let mut rows = Vec::new();
    for &n in &cfg.ns {
        for (gi, &gamma) in cfg.gammas.iter().enumerate() {
            for inst in 0..cfg.instances {
                let k = key.derive2(n as u64, gi as u64).derive(inst as u64);
                let mat = DiffMatrix::random_dense(n, gamma, &k)?;
                let threshold = (mat.m() as f64).sqrt() / 2.0;
                let (tail, se, exact, fourth) = if n <= EXHAUSTIVE_MAX_N {
                    let t = tail_probability_exhaustive(&mat, threshold)?;
                    (t.probability, 0.0, true, moments_exhaustive(&mat)?.fourth())
                } else {
                    let t = tail_probability_mc(&mat, threshold, cfg.mc_samples, &k.derive(tag::MONTE_CARLO))?;
                    (t.probability, t.std_error, false, t.fourth)
                };
                rows.push(ReportRow {
                    n,
                    m: mat.m(),
                    gamma,
                    threshold,
                    tail,
                    tail_std_error: se,
                    exact,
                    lemma_bound: gamma * gamma / 16.0,
                    fourth_moment: fourth,
                    fourth_bound: 9.0 * (n as f64).powi(4),
                });
            }
        }
    }
    Ok(rows)
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.n, r.m, r.gamma, r.threshold, r.tail, r.lemma_bound, r.fourth_moment, r.fourth_bound
        ));
    }
    out
}
