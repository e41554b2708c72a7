//! The interpretable meter: pseudolikelihood score, per-character feedback,
//! secure-substitution suggestions and strength-increasing perturbations.
//!
//! Everything here is backend-agnostic and consumes an [`Estimator`].

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::estimator::{CharDistribution, Estimator};
use crate::error::{Error, Result};
use crate::numerics::PROB_FLOOR;

/// Highest feedback bucket (green / secure).
pub const MAX_BUCKET: u8 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrengthReport {
    pub password: String,
    /// `Q(x_i)` for the symbol actually present at each position.
    pub q: Vec<f64>,
    /// Full conditional at each position over the estimator's content symbols.
    pub conditionals: Vec<CharDistribution>,
    /// `S(x) = Σ ln Q(x_i)`, the log of the unnormalized score `P̃(x)`.
    pub log_score: f64,
    pub buckets: Vec<u8>,
    pub log10_guess_number: Option<f64>,
}

impl StrengthReport {
    /// `P̃(x) = Π Q(x_i)`.
    pub fn pseudo_likelihood(&self) -> f64 {
        self.log_score.exp()
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }
}

/// `clamp(floor(-log10 q), 0, 4)`: 0 is insecure (red), 4 secure (green).
pub fn bucket(q: f64) -> u8 {
    let level = -q.max(PROB_FLOOR).log10();
    // Guard against 10^-k landing a hair under the integer boundary.
    let level = (level + 1e-9).floor();
    level.clamp(0.0, MAX_BUCKET as f64) as u8
}

pub fn feedback_buckets(report: &StrengthReport) -> Vec<u8> {
    report.q.iter().map(|&q| bucket(q)).collect()
}

fn build_report(password: &str, idx: &[usize], conditionals: Vec<CharDistribution>) -> StrengthReport {
    let q: Vec<f64> = idx.iter().zip(&conditionals).map(|(&s, row)| row.prob(s)).collect();
    let log_score = q.iter().map(|&v| v.max(PROB_FLOOR).ln()).sum();
    let buckets = q.iter().map(|&v| bucket(v)).collect();
    StrengthReport {
        password: password.to_owned(),
        q,
        conditionals,
        log_score,
        buckets,
        log10_guess_number: None,
    }
}

pub fn score<E: Estimator + ?Sized>(estimator: &E, password: &str) -> Result<StrengthReport> {
    let idx = estimator.indices(password)?;
    let conditionals = estimator.local_conditionals(&idx)?;
    Ok(build_report(password, &idx, conditionals))
}

/// Scores many passwords in one estimator batch; per-password errors (for
/// example out-of-alphabet characters) are returned in place.
pub fn score_batch<E: Estimator + ?Sized, S: AsRef<str>>(estimator: &E, passwords: &[S]) -> Vec<Result<StrengthReport>> {
    let encoded: Vec<Result<Vec<usize>>> = passwords.iter().map(|p| estimator.indices(p.as_ref())).collect();
    let valid: Vec<Vec<usize>> = encoded.iter().filter_map(|r| r.as_ref().ok().cloned()).collect();
    let mut rows = match estimator.batch_local_conditionals(&valid) {
        Ok(rows) => rows.into_iter(),
        Err(e) => {
            let msg = e.to_string();
            return passwords
                .iter()
                .map(|_| Err(Error::invalid(format!("batch scoring failed: {msg}"))))
                .collect();
        }
    };
    passwords
        .iter()
        .zip(encoded)
        .map(|(p, idx)| {
            let idx = idx?;
            Ok(build_report(p.as_ref(), &idx, rows.next().expect("one row set per valid password")))
        })
        .collect()
}

/// `S(x)` for index sequences, batched.
pub fn log_scores<E: Estimator + ?Sized>(estimator: &E, passwords: &[Vec<usize>]) -> Result<Vec<f64>> {
    let rows = estimator.batch_local_conditionals(passwords)?;
    Ok(passwords
        .iter()
        .zip(rows)
        .map(|(x, rows)| x.iter().zip(&rows).map(|(&s, r)| r.prob(s).max(PROB_FLOOR).ln()).sum())
        .collect())
}

/// Symbols at one position ordered by descending `Q`, ties by code point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolRanking {
    pub order: Vec<(char, f64)>,
    /// 0-based rank of the symbol currently at the position.
    pub current_rank: usize,
}

fn order_desc(a: &(char, f64), b: &(char, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

pub fn rank_alphabet<E: Estimator + ?Sized>(estimator: &E, password: &str, position: usize) -> Result<SymbolRanking> {
    let report = score(estimator, password)?;
    rank_position(estimator, &report, position)
}

/// [`rank_alphabet`] over an existing report.
pub fn rank_position<E: Estimator + ?Sized>(
    estimator: &E,
    report: &StrengthReport,
    position: usize,
) -> Result<SymbolRanking> {
    let row = report.conditionals.get(position).ok_or_else(|| position_error(position, report.len()))?;
    let alphabet = estimator.alphabet();
    let current = report.password.chars().nth(position).expect("position within password");
    let mut order: Vec<(char, f64)> = alphabet.symbols().iter().copied().zip(row.probs().iter().copied()).collect();
    order.sort_by(order_desc);
    let current_rank = order.iter().position(|(c, _)| *c == current).expect("current symbol in alphabet");
    Ok(SymbolRanking { order, current_rank })
}

fn position_error(position: usize, len: usize) -> Error {
    Error::invalid(format!("position {position} outside password of length {len}"))
}

fn pool_indices<E: Estimator + ?Sized>(estimator: &E, pool: &[char]) -> Result<Vec<usize>> {
    if pool.is_empty() {
        return Err(Error::invalid("substitution pool is empty"));
    }
    let mut idx: Vec<usize> = pool
        .iter()
        .enumerate()
        .map(|(position, &ch)| estimator.alphabet().index_of(ch).ok_or(Error::OutOfAlphabet { ch, position }))
        .collect::<Result<_>>()?;
    idx.sort_unstable();
    idx.dedup();
    Ok(idx)
}

/// Pool symbols `s` with `Q(x_i = s) < Q(x_i)`, in code-point order.
pub fn secure_substitutes_for<E: Estimator + ?Sized>(
    estimator: &E,
    report: &StrengthReport,
    position: usize,
    pool: &[char],
) -> Result<Vec<char>> {
    let row = report.conditionals.get(position).ok_or_else(|| position_error(position, report.len()))?;
    let current = report.q[position];
    let alphabet = estimator.alphabet();
    let mut out: Vec<char> = pool_indices(estimator, pool)?
        .into_iter()
        .filter(|&s| row.prob(s) < current)
        .map(|s| alphabet.symbol(s).unwrap())
        .collect();
    out.sort_unstable();
    Ok(out)
}

pub fn secure_substitutes<E: Estimator + ?Sized>(
    estimator: &E,
    password: &str,
    position: usize,
    pool: &[char],
) -> Result<Vec<char>> {
    secure_substitutes_for(estimator, &score(estimator, password)?, position, pool)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suggestion {
    pub symbols: Vec<char>,
    /// No pool symbol lowers `Q` at this position.
    pub already_minimal: bool,
}

/// Up to `k` secure substitutes sampled uniformly without replacement.
pub fn suggest_for<E: Estimator + ?Sized>(
    estimator: &E,
    report: &StrengthReport,
    position: usize,
    pool: &[char],
    k: usize,
    rng: &mut impl Rng,
) -> Result<Suggestion> {
    let set = secure_substitutes_for(estimator, report, position, pool)?;
    if set.is_empty() {
        return Ok(Suggestion {
            symbols: Vec::new(),
            already_minimal: true,
        });
    }
    Ok(Suggestion {
        symbols: set.choose_multiple(rng, k).copied().collect(),
        already_minimal: false,
    })
}

pub fn suggest<E: Estimator + ?Sized>(
    estimator: &E,
    password: &str,
    position: usize,
    pool: &[char],
    k: usize,
    rng: &mut impl Rng,
) -> Result<Suggestion> {
    suggest_for(estimator, &score(estimator, password)?, position, pool, k, rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationMode {
    /// Random positions, random pool symbols.
    Baseline,
    /// Most predictable position, random pool symbol.
    SemiMeter,
    /// Most predictable position, least likely pool symbol.
    FullyMeter,
}

impl PerturbationMode {
    pub const ALL: [PerturbationMode; 3] = [Self::Baseline, Self::SemiMeter, Self::FullyMeter];

    pub fn label(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::SemiMeter => "semi-meter",
            Self::FullyMeter => "fully-meter",
        }
    }
}

impl std::str::FromStr for PerturbationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Self::Baseline),
            "semi" | "semi-meter" => Ok(Self::SemiMeter),
            "fully" | "fully-meter" => Ok(Self::FullyMeter),
            other => Err(Error::invalid(format!("unknown perturbation mode {other:?}"))),
        }
    }
}

/// One substitution performed by [`perturb`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Substitution {
    pub position: usize,
    pub from: char,
    pub to: char,
    /// `Q(from)` and `Q(to)` under the conditionals computed before the swap.
    pub q_from: f64,
    pub q_to: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub original: String,
    pub perturbed: String,
    pub substitutions: Vec<Substitution>,
}

pub fn perturb<E: Estimator + ?Sized>(
    estimator: &E,
    password: &str,
    n: usize,
    mode: PerturbationMode,
    pool: &[char],
    rng: &mut impl Rng,
) -> Result<Perturbation> {
    Ok(perturb_batch(estimator, &[password], n, mode, pool, rng)?.pop().unwrap())
}

/// Index of the largest `q` among `allowed` positions (ties: lowest index).
fn argmax_position(q: &[f64], allowed: impl Iterator<Item = usize>) -> Option<usize> {
    allowed.fold(None, |best: Option<usize>, i| match best {
        Some(b) if q[b] >= q[i] => Some(b),
        _ => Some(i),
    })
}

/// Least likely pool symbol other than `current` (ties: lowest code point).
fn argmin_symbol(row: &CharDistribution, pool: &[usize], current: usize) -> Option<usize> {
    pool.iter()
        .copied()
        .filter(|&s| s != current)
        .min_by(|&a, &b| row.prob(a).total_cmp(&row.prob(b)).then(a.cmp(&b)))
}

/// Perturbs every password with `n` substitutions at distinct positions.
///
/// Rounds run in lockstep across the batch so meter-guided modes need only one
/// estimator call per round; conditionals are recomputed on the intermediate
/// strings each round. The replacement symbol always differs from the
/// original. Fully-Meter only picks positions where some pool symbol has
/// `Q ≤ Q(x_i)` while such positions remain.
pub fn perturb_batch<E: Estimator + ?Sized, S: AsRef<str>>(
    estimator: &E,
    passwords: &[S],
    n: usize,
    mode: PerturbationMode,
    pool: &[char],
    rng: &mut impl Rng,
) -> Result<Vec<Perturbation>> {
    let pool = pool_indices(estimator, pool)?;
    let alphabet = estimator.alphabet();
    let mut current: Vec<Vec<usize>> = passwords
        .iter()
        .map(|p| estimator.indices(p.as_ref()))
        .collect::<Result<_>>()?;
    for x in &current {
        if n > x.len() {
            return Err(Error::invalid(format!(
                "cannot substitute {n} positions in a password of length {}",
                x.len()
            )));
        }
    }
    let mut touched: Vec<Vec<bool>> = current.iter().map(|x| vec![false; x.len()]).collect();
    let mut subs: Vec<Vec<Substitution>> = vec![Vec::new(); current.len()];

    if mode == PerturbationMode::Baseline {
        for (k, x) in current.iter_mut().enumerate() {
            let positions = rand::seq::index::sample(rng, x.len(), n).into_vec();
            for pos in positions {
                let choices: Vec<usize> = pool.iter().copied().filter(|&s| s != x[pos]).collect();
                let &to = choices
                    .choose(rng)
                    .ok_or_else(|| Error::invalid("pool has no symbol different from the original"))?;
                subs[k].push(Substitution {
                    position: pos,
                    from: alphabet.symbol(x[pos]).unwrap(),
                    to: alphabet.symbol(to).unwrap(),
                    q_from: f64::NAN,
                    q_to: f64::NAN,
                });
                x[pos] = to;
            }
        }
    } else {
        for _ in 0..n {
            let rows = estimator.batch_local_conditionals(&current)?;
            for (k, (x, rows)) in current.iter_mut().zip(rows).enumerate() {
                let q: Vec<f64> = x.iter().zip(&rows).map(|(&s, r)| r.prob(s)).collect();
                let free = || (0..x.len()).filter(|&i| !touched[k][i]);
                let pos = if mode == PerturbationMode::FullyMeter {
                    let improvable = free().filter(|&i| {
                        argmin_symbol(&rows[i], &pool, x[i]).is_some_and(|s| rows[i].prob(s) <= q[i])
                    });
                    argmax_position(&q, improvable).or_else(|| argmax_position(&q, free()))
                } else {
                    argmax_position(&q, free())
                }
                .expect("n <= len leaves a free position");
                let to = match mode {
                    PerturbationMode::FullyMeter => argmin_symbol(&rows[pos], &pool, x[pos]),
                    _ => {
                        let choices: Vec<usize> = pool.iter().copied().filter(|&s| s != x[pos]).collect();
                        choices.choose(rng).copied()
                    }
                }
                .ok_or_else(|| Error::invalid("pool has no symbol different from the original"))?;
                subs[k].push(Substitution {
                    position: pos,
                    from: alphabet.symbol(x[pos]).unwrap(),
                    to: alphabet.symbol(to).unwrap(),
                    q_from: q[pos],
                    q_to: rows[pos].prob(to),
                });
                touched[k][pos] = true;
                x[pos] = to;
            }
        }
    }

    Ok(passwords
        .iter()
        .zip(current)
        .zip(subs)
        .map(|((p, x), substitutions)| Perturbation {
            original: p.as_ref().to_owned(),
            perturbed: alphabet.string_from(&x),
            substitutions,
        })
        .collect())
}
