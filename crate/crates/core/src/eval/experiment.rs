//! Strength-increase experiment: perturb a weak set with each strategy and
//! measure how far the passwords move in an attacker's guessing order.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::guess::GuessNumberResult;
use crate::error::{Error, Result};
use crate::estimator::Estimator;
use crate::meter::{perturb_batch, PerturbationMode};

/// Average guess-number increment and the fraction of passwords guessed
/// before but not after, from paired results (unguessed already at the cap).
pub fn agi_pnp(before: &[GuessNumberResult], after: &[GuessNumberResult]) -> Result<(f64, f64)> {
    if before.len() != after.len() {
        return Err(Error::shape("agi_pnp", format!("{} before vs {} after", before.len(), after.len())));
    }
    if before.is_empty() {
        return Err(Error::invalid("empty password set"));
    }
    let n = before.len() as f64;
    let agi = before.iter().zip(after).map(|(b, a)| a.guess_number - b.guess_number).sum::<f64>() / n;
    let lost = before.iter().zip(after).filter(|(b, a)| !b.unguessed && a.unguessed).count();
    Ok((agi, lost as f64 / n))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub modes: Vec<PerturbationMode>,
    pub n_values: Vec<usize>,
    pub pool: Vec<char>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub mode: PerturbationMode,
    pub n: usize,
    pub agi: f64,
    pub pnp: f64,
    /// `AGI(mode) / AGI(baseline)` at the same `n`; absent when the baseline
    /// was not run or its AGI is not positive.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ExperimentRow>,
    pub seed: u64,
    pub weak_set_size: usize,
    pub meter: String,
    pub config: ExperimentConfig,
}

impl ExperimentReport {
    pub fn row(&self, mode: PerturbationMode, n: usize) -> Option<&ExperimentRow> {
        self.rows.iter().find(|r| r.mode == mode && r.n == n)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("mode,n,agi,pnp,ratio,seed\n");
        for r in &self.rows {
            let ratio = r.ratio.map(|v| format!("{v}")).unwrap_or_default();
            out.push_str(&format!("{},{},{},{},{},{}\n", r.mode.label(), r.n, r.agi, r.pnp, ratio, self.seed));
        }
        out
    }
}

impl fmt::Display for ExperimentReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} weak passwords, meter {}, seed {}",
            self.weak_set_size, self.meter, self.seed
        )?;
        writeln!(f, "{:<12} {:>3} {:>14} {:>8} {:>8}", "mode", "n", "AGI", "PNP", "ratio")?;
        for r in &self.rows {
            let ratio = r.ratio.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
            writeln!(
                f,
                "{:<12} {:>3} {:>14.1} {:>7.2}% {:>8}",
                r.mode.label(),
                r.n,
                r.agi,
                100.0 * r.pnp,
                ratio
            )?;
        }
        Ok(())
    }
}

/// Runs every `(mode, n)` cell on the weak set.
///
/// `guess` maps passwords to guess numbers under the attacker being
/// measured. Each cell draws from its own RNG stream derived from the seed,
/// so cells are reproducible independently of which others run.
pub fn run_perturbation_experiment<E, G>(
    meter: &E,
    weak: &[String],
    config: &ExperimentConfig,
    mut guess: G,
) -> Result<ExperimentReport>
where
    E: Estimator + ?Sized,
    G: FnMut(&[String]) -> Result<Vec<GuessNumberResult>>,
{
    if weak.is_empty() {
        return Err(Error::invalid("weak password set is empty"));
    }
    let before = guess(weak)?;
    let mut rows = Vec::new();
    for &n in &config.n_values {
        for &mode in &config.modes {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(stream_id(mode, n));
            let perturbed: Vec<String> = perturb_batch(meter, weak, n, mode, &config.pool, &mut rng)?
                .into_iter()
                .map(|p| p.perturbed)
                .collect();
            let after = guess(&perturbed)?;
            let (agi, pnp) = agi_pnp(&before, &after)?;
            rows.push(ExperimentRow {
                mode,
                n,
                agi,
                pnp,
                ratio: None,
            });
        }
    }
    let baseline: Vec<(usize, f64)> = rows
        .iter()
        .filter(|r| r.mode == PerturbationMode::Baseline)
        .map(|r| (r.n, r.agi))
        .collect();
    for r in &mut rows {
        r.ratio = baseline
            .iter()
            .find(|(n, agi)| *n == r.n && *agi > 0.0)
            .map(|(_, agi)| r.agi / agi);
    }
    Ok(ExperimentReport {
        rows,
        seed: config.seed,
        weak_set_size: weak.len(),
        meter: meter.name(),
        config: config.clone(),
    })
}

fn stream_id(mode: PerturbationMode, n: usize) -> u64 {
    let m = PerturbationMode::ALL.iter().position(|&x| x == mode).unwrap() as u64;
    (n as u64) << 2 | m
}
