use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::alphabet::Alphabet;
use crate::error::{Error, Result};

/// Unique passwords with observation counts, kept sorted by password.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LeakCorpus {
    entries: Vec<(String, u64)>,
    total: u64,
}

impl LeakCorpus {
    /// Aggregates `(password, count)` pairs; duplicates are summed and zero
    /// counts dropped.
    pub fn from_counts<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        let mut map: BTreeMap<String, u64> = BTreeMap::new();
        for (pw, count) in pairs {
            if count > 0 {
                *map.entry(pw.into()).or_default() += count;
            }
        }
        let total = map.values().sum();
        Self {
            entries: map.into_iter().collect(),
            total,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of observations (sum of counts).
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> + '_ {
        self.entries.iter().map(|(p, c)| (p.as_str(), *c))
    }

    pub fn passwords(&self) -> impl Iterator<Item = &str> + '_ {
        self.entries.iter().map(|(p, _)| p.as_str())
    }

    pub fn count(&self, password: &str) -> Option<u64> {
        self.entries
            .binary_search_by(|(p, _)| p.as_str().cmp(password))
            .ok()
            .map(|i| self.entries[i].1)
    }

    pub fn filter(&self, mut keep: impl FnMut(&str, u64) -> bool) -> Self {
        let entries: Vec<_> = self.entries.iter().filter(|(p, c)| keep(p, *c)).cloned().collect();
        let total = entries.iter().map(|(_, c)| c).sum();
        Self { entries, total }
    }

    /// Keeps only passwords fully inside `alphabet`; returns the number dropped.
    pub fn retain_alphabet(&self, alphabet: &Alphabet) -> (Self, usize) {
        let kept = self.filter(|p, _| p.chars().all(|c| alphabet.contains(c)));
        let dropped = self.len() - kept.len();
        (kept, dropped)
    }

    /// Entries sorted by descending count, ties by password.
    pub fn by_frequency(&self) -> Vec<(&str, u64)> {
        let mut v: Vec<_> = self.iter().collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorpusFormat {
    /// One observation per line.
    PlainLines,
    /// `<count> <password>` per line.
    CountPrefixed,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub invalid_utf8: usize,
    pub malformed: usize,
}

/// Reads a leak file. Line terminators (`\n`, optionally preceded by `\r`)
/// are stripped; everything else on the line is the password.
pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<(LeakCorpus, LoadStats)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&bytes, format)
}

pub fn parse_corpus(bytes: &[u8], format: CorpusFormat) -> Result<(LeakCorpus, LoadStats)> {
    let mut stats = LoadStats::default();
    let mut pairs = Vec::new();
    for raw in bytes.split(|&b| b == b'\n') {
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        if raw.is_empty() {
            continue;
        }
        let Ok(line) = std::str::from_utf8(raw) else {
            stats.invalid_utf8 += 1;
            continue;
        };
        match format {
            CorpusFormat::PlainLines => pairs.push((line.to_owned(), 1)),
            CorpusFormat::CountPrefixed => {
                let trimmed = line.trim_start();
                let parsed = trimmed
                    .split_once(' ')
                    .and_then(|(count, pw)| Some((count.parse::<u64>().ok()?, pw)))
                    .filter(|(_, pw)| !pw.is_empty());
                match parsed {
                    Some((count, pw)) => pairs.push((pw.to_owned(), count)),
                    None => stats.malformed += 1,
                }
            }
        }
    }
    let corpus = LeakCorpus::from_counts(pairs);
    if corpus.is_empty() {
        return Err(Error::Corpus("no usable lines".into()));
    }
    Ok((corpus, stats))
}

/// Writes a corpus in count-prefixed format, most frequent first.
pub fn write_count_prefixed(corpus: &LeakCorpus) -> String {
    let mut out = String::new();
    for (pw, c) in corpus.by_frequency() {
        out.push_str(&c.to_string());
        out.push(' ');
        out.push_str(pw);
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub min_len: usize,
    pub max_len: usize,
    pub min_freq: u64,
    /// Fraction of unique passwords assigned to the train side.
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            min_len: 5,
            max_len: 16,
            min_freq: 1,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

/// Applies length and frequency filters, then splits unique passwords into
/// disjoint train/test corpora with a seeded shuffle.
pub fn clean_and_split(corpus: &LeakCorpus, cfg: &SplitConfig) -> Result<(LeakCorpus, LeakCorpus)> {
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction must lie in (0, 1), got {}",
            cfg.train_fraction
        )));
    }
    let filtered = corpus.filter(|p, c| {
        let n = p.chars().count();
        n >= cfg.min_len && n <= cfg.max_len && c >= cfg.min_freq
    });
    if filtered.is_empty() {
        return Err(Error::Corpus("filters removed every password".into()));
    }
    let mut order: Vec<usize> = (0..filtered.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let n_train = ((filtered.len() as f64) * cfg.train_fraction).round() as usize;
    let mut is_train = vec![false; filtered.len()];
    for &i in &order[..n_train.min(filtered.len())] {
        is_train[i] = true;
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for ((pw, c), t) in filtered.entries.into_iter().zip(is_train) {
        if t {
            train.push((pw, c));
        } else {
            test.push((pw, c));
        }
    }
    Ok((LeakCorpus::from_counts(train), LeakCorpus::from_counts(test)))
}

/// Alphabet of every symbol observed in `corpus`, sorted by code point.
pub fn build_alphabet(corpus: &LeakCorpus) -> Result<Alphabet> {
    if corpus.is_empty() {
        return Err(Error::Corpus("cannot build an alphabet from an empty corpus".into()));
    }
    let mut chars: Vec<char> = corpus.passwords().flat_map(str::chars).collect();
    chars.sort_unstable();
    chars.dedup();
    Alphabet::new(chars)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TopSymbols {
    pub symbols: Vec<char>,
    /// Set when fewer than the requested number of distinct symbols exist.
    pub truncated: bool,
}

/// The `k` most frequent symbols weighted by observation count; ties are
/// broken by ascending code point.
pub fn top_symbols(corpus: &LeakCorpus, k: usize) -> TopSymbols {
    let mut counts: BTreeMap<char, u64> = BTreeMap::new();
    for (pw, c) in corpus.iter() {
        for ch in pw.chars() {
            *counts.entry(ch).or_default() += c;
        }
    }
    let mut ranked: Vec<(char, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let truncated = k > ranked.len();
    ranked.truncate(k);
    TopSymbols {
        symbols: ranked.into_iter().map(|(c, _)| c).collect(),
        truncated,
    }
}
