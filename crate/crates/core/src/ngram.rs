//! Directed n-gram (Markov chain) password model.
//!
//! Serves two roles: the `MM_n` baselines, and an exact oracle for local
//! conditionals, partition functions and guess numbers on keyspaces small
//! enough to enumerate.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Alphabet, LeakCorpus};
use crate::estimator::{CharDistribution, Estimator};
use crate::error::{Error, Result};
use crate::numerics::PROB_FLOOR;

/// Default enumeration cap for [`enumerate_keyspace`].
pub const DEFAULT_KEYSPACE_CAP: u64 = 1_000_000;

/// Hard stop for end-symbol sampling.
const MAX_SAMPLED_LEN: usize = 64;

/// How string length enters the joint probability.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    /// Joint is conditioned on the exact length; rows cover content symbols.
    FixedLength,
    /// Rows carry an extra end-of-string outcome whose probability is
    /// included after the last symbol.
    EndSymbol,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NgramModel {
    order: usize,
    alphabet: Alphabet,
    smoothing: f64,
    termination: Termination,
    rows: HashMap<u64, Vec<f64>>,
    default_row: Vec<f64>,
    length_distribution: BTreeMap<usize, f64>,
}

/// Joint log-probability plus the number of factors that hit the clamp floor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointLogProb {
    pub value: f64,
    pub clamped: usize,
}

impl NgramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn termination(&self) -> Termination {
        self.termination
    }

    pub fn length_distribution(&self) -> &BTreeMap<usize, f64> {
        &self.length_distribution
    }

    fn start(&self) -> usize {
        self.alphabet.content_len()
    }

    fn outcomes(&self) -> usize {
        match self.termination {
            Termination::FixedLength => self.alphabet.content_len(),
            Termination::EndSymbol => self.alphabet.content_len() + 1,
        }
    }

    /// Index of the end-of-string outcome in each row.
    pub fn end_outcome(&self) -> Option<usize> {
        (self.termination == Termination::EndSymbol).then(|| self.alphabet.content_len())
    }

    fn key(&self, context: impl Iterator<Item = usize>) -> u64 {
        let base = self.alphabet.content_len() as u64 + 1;
        context.fold(0u64, |k, s| k * base + s as u64)
    }

    /// Context key for predicting position `i` of `x` (start-padded).
    fn context_key(&self, x: &[usize], i: usize) -> u64 {
        let width = self.order - 1;
        let start = self.start();
        self.key((0..width).map(|j| {
            let back = width - j;
            if i >= back {
                x[i - back]
            } else {
                start
            }
        }))
    }

    fn row(&self, key: u64) -> &[f64] {
        self.rows.get(&key).map_or(&self.default_row, Vec::as_slice)
    }

    /// `P(outcome | context)`, where `context` lists the previous `n-1`
    /// symbols oldest first and `None` stands for start padding.
    pub fn conditional(&self, context: &[Option<usize>], outcome: usize) -> f64 {
        let start = self.start();
        let key = self.key(context.iter().map(|c| c.unwrap_or(start)));
        self.row(key)[outcome]
    }

    /// Builds a model from explicit rows; unspecified contexts get a uniform row.
    pub fn from_rows(
        alphabet: Alphabet,
        order: usize,
        termination: Termination,
        rows: &[(Vec<Option<usize>>, Vec<f64>)],
    ) -> Result<Self> {
        if order < 2 {
            return Err(Error::invalid(format!("n-gram order must be at least 2, got {order}")));
        }
        let mut model = Self {
            order,
            smoothing: 0.0,
            termination,
            rows: HashMap::new(),
            default_row: Vec::new(),
            length_distribution: BTreeMap::new(),
            alphabet,
        };
        let outcomes = model.outcomes();
        model.default_row = vec![1.0 / outcomes as f64; outcomes];
        for (ctx, row) in rows {
            if ctx.len() != order - 1 || row.len() != outcomes {
                return Err(Error::shape(
                    "ngram row",
                    format!("context {:?} / row of {} for order {order}, {outcomes} outcomes", ctx, row.len()),
                ));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-9 || row.iter().any(|p| *p < 0.0) {
                return Err(Error::invalid(format!("row for {:?} is not a distribution", ctx)));
            }
            let start = model.start();
            let key = model.key(ctx.iter().map(|c| c.unwrap_or(start)));
            model.rows.insert(key, row.clone());
        }
        Ok(model)
    }

    /// Replaces the length distribution used by fixed-length sampling.
    pub fn with_length_distribution(mut self, lengths: BTreeMap<usize, f64>) -> Result<Self> {
        let total: f64 = lengths.values().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("length distribution has no mass"));
        }
        self.length_distribution = lengths.into_iter().map(|(l, p)| (l, p / total)).collect();
        Ok(self)
    }

    pub fn joint_logprob_checked(&self, x: &[usize]) -> JointLogProb {
        let mut value = 0.0;
        let mut clamped = 0;
        let mut add = |p: f64| {
            if p < PROB_FLOOR {
                clamped += 1;
                value += PROB_FLOOR.ln();
            } else {
                value += p.ln();
            }
        };
        for i in 0..x.len() {
            add(self.row(self.context_key(x, i))[x[i]]);
        }
        if let Some(end) = self.end_outcome() {
            add(self.row(self.context_key(x, x.len()))[end]);
        }
        JointLogProb { value, clamped }
    }

    /// Sum of log conditionals along the chain (plus the end factor when
    /// terminated by an end symbol).
    pub fn joint_logprob(&self, x: &[usize]) -> f64 {
        self.joint_logprob_checked(x).value
    }

    /// `Q(x_i = s | x_{-i}) ∝ P(x with s at i)`, by brute-force enumeration
    /// over the alphabet at each position.
    pub fn exact_local_conditionals(&self, x: &[usize]) -> Vec<CharDistribution> {
        let mut scratch = x.to_vec();
        (0..x.len())
            .map(|i| {
                let logw: Vec<f64> = (0..self.alphabet.content_len())
                    .map(|s| {
                        scratch[i] = s;
                        self.joint_logprob(&scratch)
                    })
                    .collect();
                scratch[i] = x[i];
                CharDistribution::from_log_weights(&logw).expect("finite log-weights under the clamp floor")
            })
            .collect()
    }

    fn draw(row: &[f64], rng: &mut impl Rng) -> usize {
        let total: f64 = row.iter().sum();
        let u: f64 = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        for (i, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // Rounding left a sliver of mass: fall back to the last positive entry.
        row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
    }

    /// Ancestral sample of exactly `len` symbols.
    pub fn sample_with_len(&self, len: usize, rng: &mut impl Rng) -> Vec<usize> {
        let content = self.alphabet.content_len();
        let mut x = Vec::with_capacity(len);
        for i in 0..len {
            let row = self.row(self.context_key(&x, i));
            // Conditioned on continuing: drop the end outcome if present.
            x.push(Self::draw(&row[..content], &mut *rng));
        }
        x
    }

    /// Log density of `x` under [`sample_with_len`](Self::sample_with_len):
    /// the chain with every row renormalized over content symbols.
    pub fn sample_with_len_logprob(&self, x: &[usize]) -> f64 {
        let content = self.alphabet.content_len();
        (0..x.len())
            .map(|i| {
                let row = &self.row(self.context_key(x, i))[..content];
                (row[x[i]] / row.iter().sum::<f64>()).ln()
            })
            .sum()
    }

    /// Ancestral sample: fixed-length models draw the length from the
    /// training length distribution; end-symbol models run until the end
    /// outcome fires.
    pub fn sample(&self, rng: &mut impl Rng) -> Vec<usize> {
        match self.termination {
            Termination::FixedLength => {
                let len = if self.length_distribution.is_empty() {
                    1
                } else {
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    let mut pick = *self.length_distribution.keys().next_back().unwrap();
                    for (&l, &p) in &self.length_distribution {
                        acc += p;
                        if u < acc {
                            pick = l;
                            break;
                        }
                    }
                    pick
                };
                let mut x = Vec::with_capacity(len);
                for i in 0..len {
                    x.push(Self::draw(self.row(self.context_key(&x, i)), &mut *rng));
                }
                x
            }
            Termination::EndSymbol => {
                let end = self.alphabet.content_len();
                let mut x = Vec::new();
                while x.len() < MAX_SAMPLED_LEN {
                    let s = Self::draw(self.row(self.context_key(&x, x.len())), &mut *rng);
                    if s == end {
                        break;
                    }
                    x.push(s);
                }
                x
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Layout: `u32` LE header length, JSON header, then one row per listed
    /// context followed by the default row, as LE `f32`.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut keys: Vec<u64> = self.rows.keys().copied().collect();
        keys.sort_unstable();
        let header = NgramHeader {
            order: self.order,
            alphabet: self.alphabet.clone(),
            smoothing: self.smoothing,
            termination: self.termination,
            outcomes: self.outcomes(),
            contexts: keys.clone(),
            length_distribution: self.length_distribution.iter().map(|(&l, &p)| (l, p)).collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(4 + json.len() + 4 * (keys.len() + 1) * header.outcomes);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for row in keys.iter().map(|k| &self.rows[k]).chain(std::iter::once(&self.default_row)) {
            for &p in row {
                out.extend_from_slice(&(p as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Inverse of [`NgramModel::to_bytes`]; rows are renormalized in `f64`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (len_bytes, rest) = bytes
            .split_first_chunk::<4>()
            .ok_or_else(|| Error::Format("truncated n-gram header".into()))?;
        let hlen = u32::from_le_bytes(*len_bytes) as usize;
        if rest.len() < hlen {
            return Err(Error::Format("truncated n-gram header".into()));
        }
        let header: NgramHeader = serde_json::from_slice(&rest[..hlen])?;
        let table = &rest[hlen..];
        let n_rows = header.contexts.len() + 1;
        if table.len() != n_rows * header.outcomes * 4 {
            return Err(Error::Format(format!(
                "expected {} table bytes, found {}",
                n_rows * header.outcomes * 4,
                table.len()
            )));
        }
        let mut rows_iter = table.chunks_exact(header.outcomes * 4).map(|chunk| {
            let row: Vec<f64> = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                .collect();
            let total: f64 = row.iter().sum();
            row.into_iter().map(|p| p / total).collect::<Vec<f64>>()
        });
        let mut rows = HashMap::with_capacity(header.contexts.len());
        for &key in &header.contexts {
            rows.insert(key, rows_iter.next().unwrap());
        }
        let default_row = rows_iter.next().unwrap();
        let model = Self {
            order: header.order,
            alphabet: header.alphabet,
            smoothing: header.smoothing,
            termination: header.termination,
            rows,
            default_row,
            length_distribution: header.length_distribution.into_iter().collect(),
        };
        if model.outcomes() != header.outcomes {
            return Err(Error::Format("outcome count does not match termination mode".into()));
        }
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct NgramHeader {
    order: usize,
    alphabet: Alphabet,
    smoothing: f64,
    termination: Termination,
    outcomes: usize,
    contexts: Vec<u64>,
    length_distribution: Vec<(usize, f64)>,
}

/// Frequency-weighted counts with add-`k` smoothing and start padding.
/// Passwords containing symbols outside `alphabet` are skipped.
pub fn fit_ngram(
    train: &LeakCorpus,
    alphabet: &Alphabet,
    order: usize,
    smoothing: f64,
    termination: Termination,
) -> Result<NgramModel> {
    if order < 2 {
        return Err(Error::invalid(format!("n-gram order must be at least 2, got {order}")));
    }
    if !(smoothing >= 0.0 && smoothing.is_finite()) {
        return Err(Error::invalid(format!("smoothing must be non-negative, got {smoothing}")));
    }
    let mut model = NgramModel::from_rows(alphabet.clone(), order, termination, &[])?;
    model.smoothing = smoothing;
    let outcomes = model.outcomes();
    let mut counts: HashMap<u64, Vec<f64>> = HashMap::new();
    let mut lengths: BTreeMap<usize, f64> = BTreeMap::new();
    let mut used = 0usize;
    for (pw, c) in train.iter() {
        let Ok(x) = alphabet.indices(pw) else { continue };
        if x.is_empty() {
            continue;
        }
        used += 1;
        let c = c as f64;
        *lengths.entry(x.len()).or_default() += c;
        for i in 0..x.len() {
            counts.entry(model.context_key(&x, i)).or_insert_with(|| vec![0.0; outcomes])[x[i]] += c;
        }
        if let Some(end) = model.end_outcome() {
            counts.entry(model.context_key(&x, x.len())).or_insert_with(|| vec![0.0; outcomes])[end] += c;
        }
    }
    if used == 0 {
        return Err(Error::Corpus("no trainable passwords for the n-gram model".into()));
    }
    model.rows = counts
        .into_iter()
        .map(|(k, row)| {
            let total: f64 = row.iter().sum::<f64>() + smoothing * outcomes as f64;
            (k, row.into_iter().map(|v| (v + smoothing) / total).collect())
        })
        .collect();
    model.with_length_distribution(lengths)
}

impl Estimator for NgramModel {
    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn max_len(&self) -> Option<usize> {
        None
    }

    fn name(&self) -> String {
        format!("ngram-{}", self.order)
    }

    fn local_conditionals(&self, password: &[usize]) -> Result<Vec<CharDistribution>> {
        if password.is_empty() {
            return Err(Error::Length {
                len: 0,
                min: 1,
                max: usize::MAX,
            });
        }
        Ok(self.exact_local_conditionals(password))
    }
}

/// Number of strings of length `len` over `symbols` symbols, if ≤ `cap`.
pub fn keyspace_size(symbols: usize, len: usize, cap: u64) -> Result<u64> {
    let size = (symbols as f64).powi(len as i32);
    let exact = (symbols as u64).checked_pow(len as u32);
    match exact {
        Some(n) if n <= cap => Ok(n),
        _ => Err(Error::KeyspaceCap { size, cap }),
    }
}

/// All `symbols^len` index strings in lexicographic order.
pub fn enumerate_keyspace(symbols: usize, len: usize, cap: u64) -> Result<KeyspaceIter> {
    let total = keyspace_size(symbols, len, cap)?;
    Ok(KeyspaceIter {
        symbols,
        current: vec![0; len],
        remaining: total,
    })
}

pub struct KeyspaceIter {
    symbols: usize,
    current: Vec<usize>,
    remaining: u64,
}

impl Iterator for KeyspaceIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let out = self.current.clone();
        for slot in self.current.iter_mut().rev() {
            *slot += 1;
            if *slot < self.symbols {
                break;
            }
            *slot = 0;
        }
        Some(out)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining as usize, Some(self.remaining as usize))
    }
}

/// The two-symbol bigram used throughout the documentation and tests:
/// `P(a|start)=0.75`, `P(a|a)=0.9`, `P(a|b)=0.5`, fixed length.
pub fn reference_bigram() -> NgramModel {
    let alphabet = Alphabet::new(vec!['a', 'b']).unwrap();
    NgramModel::from_rows(
        alphabet,
        2,
        Termination::FixedLength,
        &[
            (vec![None], vec![0.75, 0.25]),
            (vec![Some(0)], vec![0.9, 0.1]),
            (vec![Some(1)], vec![0.5, 0.5]),
        ],
    )
    .unwrap()
    .with_length_distribution(BTreeMap::from([(2, 1.0)]))
    .unwrap()
}

/// A random fixed-length bigram over `symbols` symbols with rows drawn as
/// softmax of Gaussian logits with standard deviation `spread`.
pub fn random_bigram(symbols: usize, len: usize, spread: f64, rng: &mut impl Rng) -> NgramModel {
    use rand_distr::{Distribution, Normal};
    let normal = Normal::new(0.0, spread).unwrap();
    let chars: Vec<char> = (0..symbols).map(|i| char::from(b'a' + i as u8)).collect();
    let alphabet = Alphabet::new(chars).unwrap();
    let row = |rng: &mut _| {
        let logits: Vec<f64> = (0..symbols).map(|_| normal.sample(rng)).collect();
        CharDistribution::from_log_weights(&logits).unwrap().probs().to_vec()
    };
    let mut rows = vec![(vec![None], row(rng))];
    for s in 0..symbols {
        rows.push((vec![Some(s)], row(rng)));
    }
    NgramModel::from_rows(alphabet, 2, Termination::FixedLength, &rows)
        .unwrap()
        .with_length_distribution(BTreeMap::from([(len, 1.0)]))
        .unwrap()
}
