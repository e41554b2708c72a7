//! JSON wire types shared by `ippsm score --json` and `POST /score`.

use ippsm_core::meter::{score, suggest_for};
use ippsm_core::{Estimator, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Bumped whenever a field is added, removed or changes meaning.
pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_K: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacterFeedback {
    pub position: usize,
    pub character: char,
    /// `Q(x_i | x_{-i})` of the character actually typed.
    pub q: f64,
    /// 0 (red, insecure) to 4 (green, secure).
    pub bucket: u8,
    /// Up to `k` symbols that would lower `q` at this position.
    pub substitutes: Vec<char>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub schema_version: u32,
    pub password: String,
    pub model: String,
    /// `Σ ln Q(x_i)`.
    pub log_score: f64,
    pub log10_guess_number: Option<f64>,
    pub characters: Vec<CharacterFeedback>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub password: String,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Error body for rejected requests and per-line CLI failures.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub password: Option<String>,
    pub error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub character: Option<char>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
}

impl ErrorBody {
    pub fn from_core(password: Option<&str>, err: &ippsm_core::Error) -> Self {
        let mut body = Self {
            password: password.map(str::to_owned),
            error: err.to_string(),
            ..Self::default()
        };
        match *err {
            ippsm_core::Error::OutOfAlphabet { ch, position } => {
                body.character = Some(ch);
                body.position = Some(position);
            }
            ippsm_core::Error::Length { max, .. } if max != usize::MAX => body.limit = Some(max),
            _ => {}
        }
        body
    }
}

/// Scores `password` and attaches `k` seeded suggestions per position drawn
/// from `pool`.
pub fn build_response<E: Estimator + ?Sized>(
    estimator: &E,
    password: &str,
    k: usize,
    pool: &[char],
    rng: &mut impl Rng,
) -> Result<ScoreResponse> {
    let report = score(estimator, password)?;
    let characters = password
        .chars()
        .enumerate()
        .map(|(i, character)| {
            Ok(CharacterFeedback {
                position: i,
                character,
                q: report.q[i],
                bucket: report.buckets[i],
                substitutes: suggest_for(estimator, &report, i, pool, k, rng)?.symbols,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ScoreResponse {
        schema_version: SCHEMA_VERSION,
        password: password.to_owned(),
        model: estimator.name(),
        log_score: report.log_score,
        log10_guess_number: report.log10_guess_number,
        characters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ippsm_core::ngram::reference_bigram;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reference_response() {
        let m = reference_bigram();
        let r = build_response(&m, "bb", 3, &['a', 'b'], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(r.characters.len(), 2);
        assert_eq!(r.characters[0].substitutes, vec!['a']);
        assert!((r.log_score - 0.3125f64.ln()).abs() < 1e-12);
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["characters"][0]["character"], "b");
    }

    #[test]
    fn alphabet_errors_carry_position() {
        let err = ippsm_core::Error::OutOfAlphabet { ch: 'z', position: 3 };
        let body = ErrorBody::from_core(Some("abcz"), &err);
        assert_eq!((body.character, body.position), (Some('z'), Some(3)));
    }
}
