use std::fs::{self, File};
use std::io::{self, BufRead, BufWriter, IsTerminal, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use ippsm_core::corpus::{
    build_alphabet, clean_and_split, load_corpus, synthetic::desk_corpus, top_symbols, write_count_prefixed, Alphabet,
    CorpusFormat, LeakCorpus, SplitConfig,
};
use ippsm_core::estimator::UnigramEstimator;
use ippsm_core::eval::{
    ground_truth_ranks, meter_ranks, rank_weights, ranks_from_scores, run_perturbation_experiment, weighted_spearman,
    as_f64, AttackConfig, ExperimentConfig, NgramAttack,
};
use ippsm_core::meter::{perturb, rank_position, score, suggest_for, PerturbationMode};
use ippsm_core::neural::{load_model, save_model, train_with, ModelConfig, NeuralModel, TrainConfig};
use ippsm_core::Estimator;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::exit::{Failure, ALPHABET, CONFIG};
use crate::render::render_tty;
use crate::response::{build_response, ErrorBody};
use crate::{
    AlphabetChoice, Cli, Command, EvaluateArgs, GenCorpusArgs, InputFormat, ModeChoice, PerturbArgs, ScoreArgs,
    ServeArgs, SuggestArgs, TrainArgs,
};

/// Runs one subcommand and returns the process exit code.
pub fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Score(a) => score_cmd(a),
        Command::Suggest(a) => suggest_cmd(a),
        Command::Perturb(a) => perturb_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Serve(a) => serve(a),
        Command::GenCorpus(a) => gen_corpus(a),
    }
}

pub fn load_leak(path: &Path, format: InputFormat) -> Result<LeakCorpus> {
    let read = |f| load_corpus(path, f).with_context(|| format!("loading corpus {}", path.display()));
    let corpus = match format {
        InputFormat::Plain => read(CorpusFormat::PlainLines)?.0,
        InputFormat::Counts => read(CorpusFormat::CountPrefixed)?.0,
        InputFormat::Auto => match read(CorpusFormat::CountPrefixed) {
            Ok((c, stats)) if stats.malformed == 0 => c,
            _ => read(CorpusFormat::PlainLines)?.0,
        },
    };
    Ok(corpus)
}

fn open_model(path: &Path) -> Result<NeuralModel> {
    load_model(path).with_context(|| format!("loading model {}", path.display()))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Writes one record to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit_stdout(text: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn parse_pool(pool: &str) -> Result<Vec<char>> {
    let chars: Vec<char> = pool.chars().collect();
    if chars.is_empty() {
        return Err(Failure::new(CONFIG, "substitution pool is empty").into());
    }
    Ok(chars)
}

/// Keeps passwords the estimator can encode.
fn encodable(corpus: &LeakCorpus, estimator: &dyn Estimator) -> (LeakCorpus, usize) {
    let (kept, dropped) = corpus.retain_alphabet(estimator.alphabet());
    let max = estimator.max_len().unwrap_or(usize::MAX);
    let fitting = kept.filter(|p, _| p.chars().count() <= max);
    let dropped = dropped + kept.len() - fitting.len();
    (fitting, dropped)
}

fn train(a: TrainArgs) -> Result<u8> {
    let corpus = load_leak(&a.corpus, a.input.format)?;
    let split = SplitConfig {
        min_len: a.min_len,
        max_len: a.max_len,
        min_freq: 1,
        train_fraction: a.train_fraction,
        seed: a.split_seed,
    };
    let (train_set, test_set) = clean_and_split(&corpus, &split)?;
    let alphabet = match a.alphabet {
        AlphabetChoice::Observed => build_alphabet(&train_set)?,
        AlphabetChoice::Printable => Alphabet::printable_ascii(),
    };
    let (train_set, dropped) = train_set.retain_alphabet(&alphabet);
    let model_config = ModelConfig::preset(a.preset, a.max_len, alphabet.cardinality());
    let mut config = TrainConfig::for_preset(a.preset);
    config.seed = a.seed;
    config.steps_per_epoch = a.steps_per_epoch;
    if let Some(v) = a.epochs {
        config.epochs = v;
    }
    if let Some(v) = a.learning_rate {
        config.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = a.alpha {
        config.alpha = v;
    }
    if let Some(v) = a.label_smoothing {
        config.label_smoothing = v;
    }

    let log_path = a.log.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".log.jsonl");
        p.into()
    });
    let mut log = BufWriter::new(File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?);
    let mut log_error = None;
    let (model, _) = train_with(&train_set, &alphabet, model_config, &config, |stats| {
        eprintln!(
            "epoch {:>3}  loss {:.4}  reconstruction {:.4}  mmd {:.5}",
            stats.epoch, stats.loss, stats.reconstruction, stats.mmd
        );
        if let Err(e) = serde_json::to_writer(&mut log, stats).map_err(io::Error::from).and_then(|_| writeln!(log)) {
            log_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_error {
        return Err(e).context("writing the loss log");
    }
    log.flush()?;
    save_model(&model, &a.out).with_context(|| format!("saving model {}", a.out.display()))?;
    let bytes = fs::read(&a.out)?;
    if let Some(p) = &a.train_out {
        write_file(p, write_count_prefixed(&train_set).as_bytes())?;
    }
    if let Some(p) = &a.test_out {
        write_file(p, write_count_prefixed(&test_set).as_bytes())?;
    }
    let summary = json!({
        "model": a.out,
        "sha256": hex::encode(Sha256::digest(&bytes)),
        "name": model.name(),
        "preset": model.config().preset,
        "final_loss": model.provenance().final_loss,
        "epochs": config.epochs,
        "train_passwords": train_set.len(),
        "test_passwords": test_set.len(),
        "dropped_out_of_alphabet": dropped,
        "alphabet_size": alphabet.content_len(),
        "log": log_path,
    });
    emit_stdout(&serde_json::to_string_pretty(&summary)?)?;
    Ok(0)
}

fn score_cmd(a: ScoreArgs) -> Result<u8> {
    let model = open_model(&a.model.model)?;
    let pool = model.alphabet().symbols().to_vec();
    let tty = a.tty || (!a.json && io::stdout().is_terminal());
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let emit = |line: usize, password: &str, out: &mut dyn Write| -> Result<bool> {
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed.wrapping_add(line as u64));
        match build_response(&model, password, a.k, &pool, &mut rng) {
            Ok(resp) if tty => write!(out, "{}", render_tty(&resp))?,
            Ok(resp) => writeln!(out, "{}", serde_json::to_string(&resp)?)?,
            Err(e @ (ippsm_core::Error::OutOfAlphabet { .. } | ippsm_core::Error::Length { .. })) => {
                let body = ErrorBody::from_core(Some(password), &e);
                if tty {
                    writeln!(out, "{password:?}: {}", body.error)?;
                } else {
                    writeln!(out, "{}", serde_json::to_string(&body)?)?;
                }
                return Ok(false);
            }
            Err(e) => return Err(e.into()),
        }
        Ok(true)
    };
    match &a.password {
        Some(p) => Ok(if emit(0, p, &mut out)? { 0 } else { ALPHABET }),
        None => {
            for (i, line) in io::stdin().lock().lines().enumerate() {
                let line = line.context("reading stdin")?;
                if let Err(e) = emit(i, line.strip_suffix('\r').unwrap_or(&line), &mut out) {
                    match e.downcast_ref::<io::Error>() {
                        Some(io) if io.kind() == io::ErrorKind::BrokenPipe => break,
                        _ => return Err(e),
                    }
                }
            }
            Ok(0)
        }
    }
}

fn suggest_cmd(a: SuggestArgs) -> Result<u8> {
    let model = open_model(&a.model.model)?;
    let pool = match &a.pool {
        Some(p) => parse_pool(p)?,
        None => model.alphabet().symbols().to_vec(),
    };
    let report = match score(&model, &a.password) {
        Ok(r) => r,
        Err(e @ ippsm_core::Error::OutOfAlphabet { .. }) => {
            emit_stdout(&serde_json::to_string(&ErrorBody::from_core(Some(&a.password), &e))?)?;
            return Ok(ALPHABET);
        }
        Err(e) => return Err(e.into()),
    };
    let ranking = rank_position(&model, &report, a.position)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let suggestion = suggest_for(&model, &report, a.position, &pool, a.k, &mut rng)?;
    let out = json!({
        "password": a.password,
        "position": a.position,
        "q": report.q[a.position],
        "current_rank": ranking.current_rank,
        "ranking": ranking
            .order
            .iter()
            .map(|(c, q)| json!({ "character": c, "q": q }))
            .collect::<Vec<_>>(),
        "suggestions": suggestion.symbols,
        "already_minimal": suggestion.already_minimal,
    });
    emit_stdout(&serde_json::to_string_pretty(&out)?)?;
    Ok(0)
}

fn modes(choice: ModeChoice) -> Vec<PerturbationMode> {
    match choice {
        ModeChoice::All => PerturbationMode::ALL.to_vec(),
        ModeChoice::Baseline => vec![PerturbationMode::Baseline],
        ModeChoice::Semi => vec![PerturbationMode::SemiMeter],
        ModeChoice::Fully => vec![PerturbationMode::FullyMeter],
    }
}

fn perturb_cmd(a: PerturbArgs) -> Result<u8> {
    let model = open_model(&a.model.model)?;
    if let Some(password) = &a.password {
        let [mode] = modes(a.mode)[..] else {
            return Err(Failure::new(CONFIG, "choose one --mode to perturb a single password").into());
        };
        let [n] = a.n[..] else {
            return Err(Failure::new(CONFIG, "choose one --n to perturb a single password").into());
        };
        let pool = match &a.pool {
            Some(p) => parse_pool(p)?,
            None => model.alphabet().symbols().to_vec(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        let out = perturb(&model, password, n, mode, &pool, &mut rng)?;
        emit_stdout(&serde_json::to_string_pretty(&out)?)?;
        return Ok(0);
    }

    let (Some(train_path), Some(test_path)) = (&a.train, &a.test) else {
        return Err(Failure::new(CONFIG, "the experiment needs --train and --test (or --password)").into());
    };
    let (train_set, _) = encodable(&load_leak(train_path, a.input.format)?, &model);
    let (test_set, dropped) = encodable(&load_leak(test_path, a.input.format)?, &model);
    if test_set.is_empty() || train_set.is_empty() {
        bail!(ippsm_core::Error::Corpus("no encodable passwords in the train or test leak".into()));
    }
    let pool = match &a.pool {
        Some(p) => parse_pool(p)?,
        None => top_symbols(&train_set, 25).symbols,
    };
    let attack = NgramAttack::fit(
        &train_set,
        model.alphabet(),
        &AttackConfig {
            order: a.attacker_order,
            samples: a.samples,
            cap: a.cap,
            seed: a.seed,
            ..AttackConfig::default()
        },
    )?;
    let candidates: Vec<String> = test_set.passwords().map(str::to_owned).collect();
    let weak = attack.weakest(&candidates, a.weak)?;
    let config = ExperimentConfig {
        modes: modes(a.mode),
        n_values: a.n.clone(),
        pool,
        seed: a.seed,
    };
    let report = run_perturbation_experiment(&model, &weak, &config, |p| attack.guess(p))?;
    eprintln!("{dropped} test passwords skipped (not encodable by the model)");
    eprint!("{report}");
    match &a.out {
        Some(p) => write_file(p, report.to_csv().as_bytes())?,
        None => emit_stdout(report.to_csv().trim_end())?,
    }
    Ok(0)
}

fn evaluate(a: EvaluateArgs) -> Result<u8> {
    let model = open_model(&a.model.model)?;
    let (test_set, dropped) = encodable(&load_leak(&a.test, a.input.format)?, &model);
    let ranked = ground_truth_ranks(&test_set)?;
    let meter = meter_ranks(&model, &ranked.passwords)?;
    let explain = "ranks are constant; weighted Spearman is undefined";
    let ws = if a.self_ranks {
        let w = rank_weights(&meter);
        weighted_spearman(&as_f64(&meter), &as_f64(&meter), &w).context(explain)?
    } else {
        ranked.weighted_spearman(&meter).context(explain)?
    };
    let mut out = json!({
        "ws": ws,
        "passwords": ranked.len(),
        "dropped": dropped,
        "model": model.name(),
    });
    if let Some(path) = &a.baselines {
        let train_set = load_leak(path, a.input.format)?;
        let unigram = UnigramEstimator::fit(&train_set, model.alphabet().clone(), 1.0)?;
        let ws_unigram = ranked.weighted_spearman(&meter_ranks(&unigram, &ranked.passwords)?).context(explain)?;
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        let random: Vec<f64> = ranked.passwords.iter().map(|_| rng.gen()).collect();
        let ws_random = ranked.weighted_spearman(&ranks_from_scores(&random)).context(explain)?;
        out["baselines"] = json!({ "unigram": ws_unigram, "random": ws_random });
    }
    emit_stdout(&serde_json::to_string_pretty(&out)?)?;
    Ok(0)
}

fn serve(a: ServeArgs) -> Result<u8> {
    let model: Arc<dyn Estimator> = Arc::new(open_model(&a.model.model)?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(crate::server::serve(model, a.addr))?;
    Ok(0)
}

fn gen_corpus(a: GenCorpusArgs) -> Result<u8> {
    let corpus = desk_corpus(a.observations, a.seed);
    write_file(&a.out, write_count_prefixed(&corpus).as_bytes())?;
    eprintln!("{} unique passwords, {} observations", corpus.len(), corpus.total());
    Ok(0)
}
