//! Local-model execution substrate.
//!
//! A noninteractive protocol is one [`RandomizerFamily`] (a local randomizer
//! per vertex) plus a [`Postprocessor`] that only sees the released payloads.
//! Every invocation is recorded in a [`Transcript`], whose [`Ledger`] charges
//! each potential edge with the privacy parameters of every invocation that
//! read it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, Graph};
use crate::rng::{tag, StreamKey};

/// `(epsilon, delta)` of a single randomizer invocation.
///
/// `epsilon` is positive; `f64::INFINITY` marks a non-private randomizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidEpsilon(epsilon));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::InvalidDelta(delta));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn pure(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 0.0)
    }

    /// Charge of a randomizer that releases its input verbatim.
    pub fn non_private() -> Self {
        Self {
            epsilon: f64::INFINITY,
            delta: 0.0,
        }
    }

    pub fn is_private(&self) -> bool {
        self.epsilon.is_finite()
    }
}

/// An accumulated charge. Unlike [`PrivacyParams`] it may be zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PrivacyTotal {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyTotal {
    pub const ZERO: Self = Self {
        epsilon: 0.0,
        delta: 0.0,
    };

    #[must_use]
    pub fn compose(self, other: impl Into<PrivacyTotal>) -> Self {
        let o = other.into();
        Self {
            epsilon: self.epsilon + o.epsilon,
            delta: self.delta + o.delta,
        }
    }

    pub fn is_private(&self) -> bool {
        self.epsilon.is_finite()
    }
}

impl From<PrivacyParams> for PrivacyTotal {
    fn from(p: PrivacyParams) -> Self {
        Self {
            epsilon: p.epsilon,
            delta: p.delta,
        }
    }
}

/// Basic composition: `k` invocations charged `(e_i, d_i)` cost `(sum e_i, sum d_i)`.
pub fn compose_ledger(charges: &[PrivacyParams]) -> PrivacyTotal {
    charges
        .iter()
        .fold(PrivacyTotal::ZERO, |acc, &c| acc.compose(c))
}

/// Probability that randomized response flips a bit: `1 / (e^eps + 1)`.
pub fn flip_probability(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    Ok(1.0 / (epsilon.exp() + 1.0))
}

/// Keeps each bit with probability `e^eps / (e^eps + 1)`, flips it otherwise.
pub fn randomized_response<R: Rng + ?Sized>(
    bits: &[bool],
    epsilon: f64,
    rng: &mut R,
) -> Result<Vec<bool>> {
    let q = flip_probability(epsilon)?;
    Ok(bits.iter().map(|&b| b ^ rng.gen_bool(q)).collect())
}

/// Which part of its adjacency vector a vertex hands to its randomizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputView {
    /// All `n` bits of the row.
    FullRow,
    /// Only bits `j > vertex`, so each potential edge is read once per round.
    UpperTriangle,
}

impl InputView {
    /// Column range of row `vertex` covered by this view.
    pub fn columns(self, vertex: usize, n: usize) -> std::ops::Range<usize> {
        match self {
            InputView::FullRow => 0..n,
            InputView::UpperTriangle => (vertex + 1).min(n)..n,
        }
    }

    pub fn select(self, vertex: usize, row: &[bool]) -> &[bool] {
        &row[self.columns(vertex, row.len())]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Bits(Vec<bool>),
    Bytes(Vec<u8>),
}

impl Payload {
    pub fn bits(&self) -> Option<&[bool]> {
        match self {
            Payload::Bits(b) => Some(b),
            Payload::Bytes(_) => None,
        }
    }

    /// Bits packed MSB-first, zero padded to a whole byte.
    pub fn to_hex(&self) -> String {
        let bytes: Vec<u8> = match self {
            Payload::Bits(bits) => bits
                .chunks(8)
                .map(|c| {
                    c.iter()
                        .enumerate()
                        .fold(0u8, |acc, (i, &b)| acc | (u8::from(b) << (7 - i)))
                })
                .collect(),
            Payload::Bytes(b) => b.clone(),
        };
        bytes.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomizerOutput {
    pub vertex: usize,
    pub randomizer: &'static str,
    pub view: InputView,
    pub params: PrivacyParams,
    pub payload: Payload,
}

/// One local randomizer per vertex, all of the same kind.
pub trait RandomizerFamily: Sync {
    fn id(&self) -> &'static str;

    fn view(&self) -> InputView;

    /// Charge of one invocation.
    fn params(&self) -> PrivacyParams;

    /// Randomize the already-sliced `input` of `vertex`.
    fn randomize(&self, vertex: usize, input: &[bool], key: &StreamKey) -> Result<Payload>;

    /// Slices `row` by [`Self::view`], randomizes it and wraps the result.
    fn invoke(&self, vertex: usize, row: &[bool], key: &StreamKey) -> Result<RandomizerOutput> {
        let view = self.view();
        let payload = self.randomize(vertex, view.select(vertex, row), key)?;
        Ok(RandomizerOutput {
            vertex,
            randomizer: self.id(),
            view,
            params: self.params(),
            payload,
        })
    }
}

/// Turns one released payload per vertex into an answer.
pub trait Postprocessor: Sync {
    fn postprocess(&self, n: usize, outputs: &[&RandomizerOutput], key: &StreamKey) -> Result<f64>;
}

/// Releases its input unchanged. Not private.
#[derive(Debug, Clone, Copy)]
pub struct IdentityFamily {
    pub view: InputView,
}

impl Default for IdentityFamily {
    fn default() -> Self {
        Self {
            view: InputView::UpperTriangle,
        }
    }
}

impl RandomizerFamily for IdentityFamily {
    fn id(&self) -> &'static str {
        "identity"
    }

    fn view(&self) -> InputView {
        self.view
    }

    fn params(&self) -> PrivacyParams {
        PrivacyParams::non_private()
    }

    fn randomize(&self, _vertex: usize, input: &[bool], _key: &StreamKey) -> Result<Payload> {
        Ok(Payload::Bits(input.to_vec()))
    }
}

/// Rebuilds the graph whose edges are the released 1-bits.
pub fn released_graph(n: usize, outputs: &[&RandomizerOutput]) -> Result<Graph> {
    let mut g = Graph::empty(n);
    for out in outputs {
        let bits = out.payload.bits().ok_or_else(|| {
            Error::Postprocessor(format!("vertex {} released bytes, expected bits", out.vertex))
        })?;
        if out.vertex >= n {
            return Err(Error::VertexOutOfRange { vertex: out.vertex, n });
        }
        let cols = out.view.columns(out.vertex, n);
        if bits.len() != cols.len() {
            return Err(Error::DimensionMismatch {
                expected: cols.len(),
                actual: bits.len(),
            });
        }
        for (j, &b) in cols.zip(bits) {
            if b && j != out.vertex {
                g.insert_unchecked(out.vertex, j);
            }
        }
    }
    Ok(g)
}

/// Counts triangles of the released graph exactly. Zero error when paired with
/// [`IdentityFamily`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactTriangleCounter;

impl Postprocessor for ExactTriangleCounter {
    fn postprocess(&self, n: usize, outputs: &[&RandomizerOutput], _key: &StreamKey) -> Result<f64> {
        let g = released_graph(n, outputs)?;
        Ok(graph::count_triangles_exact(&g) as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Round {
    entries: Vec<RandomizerOutput>,
}

impl Round {
    pub fn entries(&self) -> &[RandomizerOutput] {
        &self.entries
    }
}

/// Per-edge and global privacy totals of a transcript.
#[derive(Debug, Clone, PartialEq)]
pub struct Ledger {
    n: usize,
    per_bit: Vec<PrivacyTotal>,
    global: PrivacyTotal,
}

impl Ledger {
    fn pair_index(n: usize, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * n - i * (i + 1) / 2 + (j - i - 1)
    }

    /// Total charged to the potential edge `{i, j}`.
    pub fn bit(&self, i: usize, j: usize) -> PrivacyTotal {
        self.per_bit[Self::pair_index(self.n, i, j)]
    }

    /// Edge-level guarantee of the whole transcript: the worst per-bit total.
    pub fn global(&self) -> PrivacyTotal {
        self.global
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TranscriptRecord {
    pub round: usize,
    pub vertex: usize,
    pub randomizer: String,
    pub epsilon: f64,
    pub delta: f64,
    pub payload_hex: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct LedgerSummary {
    pub epsilon_total: f64,
    pub delta_total: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TranscriptDump {
    pub entries: Vec<TranscriptRecord>,
    pub ledger: LedgerSummary,
}

/// Ordered record of randomizer invocations over a graph on `n` vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    n: usize,
    rounds: Vec<Round>,
}

impl Transcript {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            rounds: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn begin_round(&mut self) -> usize {
        self.rounds.push(Round::default());
        self.rounds.len() - 1
    }

    /// Appends to the current round, keeping entries sorted by vertex.
    pub fn record(&mut self, output: RandomizerOutput) {
        if self.rounds.is_empty() {
            self.begin_round();
        }
        let entries = &mut self.rounds.last_mut().expect("round exists").entries;
        let at = entries.partition_point(|e| e.vertex <= output.vertex);
        entries.insert(at, output);
    }

    pub fn rounds(&self) -> &[Round] {
        &self.rounds
    }

    pub fn round_count(&self) -> usize {
        self.rounds.len()
    }

    pub fn invocation_count(&self) -> usize {
        self.rounds.iter().map(|r| r.entries.len()).sum()
    }

    /// Output of `vertex` in `round`, if it was invoked there.
    pub fn output(&self, round: usize, vertex: usize) -> Option<&RandomizerOutput> {
        let entries = &self.rounds.get(round)?.entries;
        let at = entries.partition_point(|e| e.vertex < vertex);
        entries.get(at).filter(|e| e.vertex == vertex)
    }

    pub fn ledger(&self) -> Ledger {
        let n = self.n;
        let mut per_bit = vec![PrivacyTotal::ZERO; n * n.saturating_sub(1) / 2];
        for e in self.rounds.iter().flat_map(|r| &r.entries) {
            for j in e.view.columns(e.vertex, n) {
                if j != e.vertex {
                    let idx = Ledger::pair_index(n, e.vertex, j);
                    per_bit[idx] = per_bit[idx].compose(e.params);
                }
            }
        }
        let global = per_bit.iter().fold(PrivacyTotal::ZERO, |acc, b| PrivacyTotal {
            epsilon: acc.epsilon.max(b.epsilon),
            delta: acc.delta.max(b.delta),
        });
        Ledger { n, per_bit, global }
    }

    pub fn dump(&self) -> TranscriptDump {
        let entries = self
            .rounds
            .iter()
            .enumerate()
            .flat_map(|(round, r)| {
                r.entries.iter().map(move |e| TranscriptRecord {
                    round,
                    vertex: e.vertex,
                    randomizer: e.randomizer.to_string(),
                    epsilon: e.params.epsilon,
                    delta: e.params.delta,
                    payload_hex: e.payload.to_hex(),
                })
            })
            .collect();
        let g = self.ledger().global();
        TranscriptDump {
            entries,
            ledger: LedgerSummary {
                epsilon_total: g.epsilon,
                delta_total: g.delta,
            },
        }
    }
}

/// A failed run together with the transcript recorded up to the failure.
#[derive(Debug, Clone)]
pub struct RunFailure {
    pub error: Error,
    pub transcript: Transcript,
}

impl From<RunFailure> for Error {
    fn from(f: RunFailure) -> Self {
        f.error
    }
}

/// Runs one round: every vertex's randomizer once on its adjacency row, then
/// the postprocessor on the released outputs.
pub fn run_noninteractive(
    g: &Graph,
    family: &dyn RandomizerFamily,
    post: &dyn Postprocessor,
    key: &StreamKey,
) -> std::result::Result<(f64, Transcript), RunFailure> {
    let n = g.n();
    let mut transcript = Transcript::new(n);
    transcript.begin_round();
    for v in 0..n {
        let row = g.row(v);
        match family.invoke(v, &row, &key.derive2(tag::RANDOMIZER, v as u64)) {
            Ok(out) => transcript.record(out),
            Err(error) => return Err(RunFailure { error, transcript }),
        }
    }
    let outputs: Vec<&RandomizerOutput> = transcript.rounds[0].entries.iter().collect();
    match post.postprocess(n, &outputs, &key.derive(tag::POSTPROCESS)) {
        Ok(result) => Ok((result, transcript)),
        Err(error) => Err(RunFailure { error, transcript }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::complete;

    struct CountReleased;
    impl Postprocessor for CountReleased {
        fn postprocess(&self, _n: usize, outputs: &[&RandomizerOutput], _k: &StreamKey) -> Result<f64> {
            Ok(outputs
                .iter()
                .map(|o| o.payload.bits().map_or(0, <[bool]>::len))
                .sum::<usize>() as f64)
        }
    }

    struct FailsOn(usize);
    impl RandomizerFamily for FailsOn {
        fn id(&self) -> &'static str {
            "fails"
        }
        fn view(&self) -> InputView {
            InputView::FullRow
        }
        fn params(&self) -> PrivacyParams {
            PrivacyParams::pure(1.0).unwrap()
        }
        fn randomize(&self, vertex: usize, input: &[bool], _k: &StreamKey) -> Result<Payload> {
            if vertex == self.0 {
                Err(Error::Randomizer {
                    id: "fails".into(),
                    vertex,
                    reason: "boom".into(),
                })
            } else {
                Ok(Payload::Bits(input.to_vec()))
            }
        }
    }

    #[test]
    fn flip_probability_examples() {
        assert!((flip_probability(3f64.ln()).unwrap() - 0.25).abs() < 1e-15);
        assert!((flip_probability(9f64.ln()).unwrap() - 0.1).abs() < 1e-15);
        assert!((flip_probability(1e-6).unwrap() - 0.5).abs() < 1e-6);
        assert!(flip_probability(0.0).is_err());
        assert!(flip_probability(-1.0).is_err());
    }

    #[test]
    fn randomized_response_edges() {
        let mut rng = StreamKey::new(3).rng();
        assert!(randomized_response(&[], 1.0, &mut rng).unwrap().is_empty());
        assert!(randomized_response(&[true], 0.0, &mut rng).is_err());
        let bits = vec![true; 100];
        let a = randomized_response(&bits, 1.0, &mut StreamKey::new(5).rng()).unwrap();
        let b = randomized_response(&bits, 1.0, &mut StreamKey::new(5).rng()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
    }

    #[test]
    fn compose_examples() {
        let p = PrivacyParams::new(0.5, 0.01).unwrap();
        let t = compose_ledger(&[p, p]);
        assert_eq!(t, PrivacyTotal { epsilon: 1.0, delta: 0.02 });
        assert_eq!(compose_ledger(&[]), PrivacyTotal::ZERO);
        let t = compose_ledger(&[
            PrivacyParams::pure(0.1).unwrap(),
            PrivacyParams::pure(0.2).unwrap(),
            PrivacyParams::pure(0.3).unwrap(),
        ]);
        assert!((t.epsilon - 0.6).abs() < 1e-12 && t.delta == 0.0);
    }

    #[test]
    fn params_validation() {
        assert!(PrivacyParams::new(0.0, 0.0).is_err());
        assert!(PrivacyParams::new(1.0, 1.0).is_err());
        assert!(PrivacyParams::new(1.0, -0.1).is_err());
        assert!(!PrivacyParams::non_private().is_private());
    }

    #[test]
    fn upper_triangle_k3_releases_three_bits_in_one_round() {
        let fam = IdentityFamily::default();
        let (bits, t) = run_noninteractive(&complete(3), &fam, &CountReleased, &StreamKey::new(1)).unwrap();
        assert_eq!(bits, 3.0);
        assert_eq!(t.round_count(), 1);
        let full = IdentityFamily { view: InputView::FullRow };
        let (bits, _) = run_noninteractive(&complete(3), &full, &CountReleased, &StreamKey::new(1)).unwrap();
        assert_eq!(bits, 9.0);
    }

    #[test]
    fn identity_plus_exact_counter_is_exact() {
        let g = complete(5);
        let (t, _) =
            run_noninteractive(&g, &IdentityFamily::default(), &ExactTriangleCounter, &StreamKey::new(1)).unwrap();
        assert_eq!(t, 10.0);
    }

    #[test]
    fn failure_keeps_prefix() {
        let err = run_noninteractive(&complete(4), &FailsOn(2), &CountReleased, &StreamKey::new(1)).unwrap_err();
        assert_eq!(err.transcript.invocation_count(), 2);
        assert!(matches!(err.error, Error::Randomizer { vertex: 2, .. }));
    }

    #[test]
    fn ledger_charges_each_bit_once_in_upper_mode() {
        struct Pure;
        impl RandomizerFamily for Pure {
            fn id(&self) -> &'static str {
                "pure"
            }
            fn view(&self) -> InputView {
                InputView::UpperTriangle
            }
            fn params(&self) -> PrivacyParams {
                PrivacyParams::pure(0.7).unwrap()
            }
            fn randomize(&self, _v: usize, input: &[bool], _k: &StreamKey) -> Result<Payload> {
                Ok(Payload::Bits(input.to_vec()))
            }
        }
        let (_, t) = run_noninteractive(&complete(5), &Pure, &CountReleased, &StreamKey::new(2)).unwrap();
        let ledger = t.ledger();
        assert_eq!(ledger.global(), PrivacyTotal { epsilon: 0.7, delta: 0.0 });
        assert_eq!(ledger.bit(3, 1).epsilon, 0.7);
    }

    #[test]
    fn payload_hex_is_msb_first() {
        let p = Payload::Bits(vec![true, false, false, false, false, false, false, true, true]);
        assert_eq!(p.to_hex(), "8180");
    }

    #[test]
    fn dump_has_one_record_per_invocation() {
        let (_, t) =
            run_noninteractive(&complete(4), &IdentityFamily::default(), &CountReleased, &StreamKey::new(1)).unwrap();
        let dump = t.dump();
        assert_eq!(dump.entries.len(), 4);
        let json = serde_json::to_value(&dump).unwrap();
        assert_eq!(json["entries"][0]["payload_hex"], "e0");
        assert!(json["ledger"]["epsilon_total"].is_null());
    }
}
