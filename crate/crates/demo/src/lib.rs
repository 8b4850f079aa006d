//! WebAssembly bindings for the static page in `www/`. Every export returns
//! a JSON string; failures come back as `{"error": "..."}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use dyntask::activation::{new_bank, vector_indices, ActivationStrategy};
use dyntask::codec::{build_vocab, encode_reference, parse_hypothesis, TaskSet, TokenKind, NUM_AUX_TASKS};
use dyntask::data::{generate_utterance, utterance_rng, GenConfig, Lexicon};
use dyntask::lattice::{bruteforce_loss, count_paths, forward, LogProbGrid, BRUTEFORCE_PATH_CAP};

fn respond<T: Serialize>(r: Result<T, String>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(e) => error_json(&e),
    }
}

fn error_json(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

#[derive(Serialize)]
struct Token {
    text: String,
    /// `word`, or the task that owns the token.
    kind: String,
}

#[derive(Serialize)]
struct Encoded {
    words: Vec<String>,
    tokens: Vec<Token>,
    speaker_changes: Vec<usize>,
    endpoints: Vec<usize>,
    entities: Vec<(String, String)>,
    lang: Option<String>,
    malformed: usize,
}

fn encode_inner(seed: u64, task_bits: u32) -> Result<Encoded, String> {
    let tasks = TaskSet::from_bits(task_bits | 1).map_err(|e| e.to_string())?;
    let cfg = GenConfig::default();
    let lex = Lexicon::generate(&cfg).map_err(|e| e.to_string())?;
    let vocab = build_vocab(&lex.codec_config(&cfg)).map_err(|e| e.to_string())?;
    let mut rng = utterance_rng(cfg.seed, seed);
    let (utt, _) = generate_utterance(&cfg, &lex, format!("demo-{seed}"), &mut rng, false);
    let ids = encode_reference(&utt, tasks, &vocab).map_err(|e| e.to_string())?;
    let tokens = ids
        .iter()
        .map(|&id| Token {
            text: vocab.token(id).unwrap_or("?").to_string(),
            kind: match vocab.kind(id) {
                Some(TokenKind::Task(t)) => t.name().to_string(),
                _ => "word".into(),
            },
        })
        .collect();
    let parsed = parse_hypothesis(&ids, &vocab);
    Ok(Encoded {
        entities: parsed.span_surfaces(),
        words: parsed.words,
        tokens,
        speaker_changes: parsed.scd_gaps,
        endpoints: parsed.ep_gaps,
        lang: parsed.lang,
        malformed: parsed.malformed,
    })
}

/// Generate utterance `seed` of the default corpus and encode it with the
/// auxiliary tasks in `task_bits` (bit 1 scd, 2 ep, 3 ner, 4 lid).
#[wasm_bindgen]
pub fn encode_utterance(seed: u32, task_bits: u32) -> String {
    respond(encode_inner(seed as u64, task_bits))
}

#[derive(Serialize)]
struct Activation {
    strategy: String,
    /// All bank vectors, one row each.
    bank: Vec<Vec<f64>>,
    /// Rows summed for the requested task set.
    used: Vec<usize>,
    vector: Vec<f64>,
}

fn activation_inner(strategy: &str, task_bits: u32, dim: usize, seed: u64) -> Result<Activation, String> {
    let strategy: ActivationStrategy = strategy.parse().map_err(|e: dyntask::Error| e.to_string())?;
    let tasks = TaskSet::from_bits(task_bits | 1).map_err(|e| e.to_string())?;
    let bank = new_bank(strategy, NUM_AUX_TASKS, dim, seed).map_err(|e| e.to_string())?;
    let used = vector_indices(strategy, tasks, NUM_AUX_TASKS).map_err(|e| e.to_string())?;
    let vector = bank.activation_vector(tasks).map_err(|e| e.to_string())?;
    Ok(Activation {
        strategy: strategy.to_string(),
        bank: bank.vectors,
        used,
        vector,
    })
}

/// Bank of freshly initialized task vectors and the composed vector for
/// `task_bits`.
#[wasm_bindgen]
pub fn activation(strategy: &str, task_bits: u32, dim: u32, seed: u32) -> String {
    respond(activation_inner(strategy, task_bits, dim as usize, seed as u64))
}

#[derive(Serialize)]
struct Lattice {
    frames: usize,
    labels: usize,
    /// `alpha[t][u]` in log space.
    alpha: Vec<Vec<f64>>,
    loss: f64,
    bruteforce: Option<f64>,
    paths: String,
}

fn lattice_inner(frames: usize, labels: usize, width: usize, seed: u64) -> Result<Lattice, String> {
    if frames == 0 || width < 2 {
        return Err("need at least one frame and two symbols".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blank = (width - 1) as u32;
    let target: Vec<u32> = (0..labels).map(|_| rng.random_range(0..blank)).collect();
    let mut data = Vec::with_capacity(frames * (labels + 1) * width);
    for _ in 0..frames * (labels + 1) {
        let logits: Vec<f64> = (0..width).map(|_| rng.random_range(-2.0..2.0)).collect();
        let z = dyntask::tensor::log_sum_exp(&logits);
        data.extend(logits.iter().map(|x| x - z));
    }
    let grid = LogProbGrid::new(frames, labels, width, &data).map_err(|e| e.to_string())?;
    let (alpha, ll) = forward(&grid, &target, blank).map_err(|e| e.to_string())?;
    let paths = count_paths(frames, labels);
    let bruteforce = if paths <= BRUTEFORCE_PATH_CAP {
        Some(bruteforce_loss(&grid, &target, blank).map_err(|e| e.to_string())?)
    } else {
        None
    };
    Ok(Lattice {
        frames,
        labels,
        alpha: (0..alpha.rows).map(|t| alpha.row(t).to_vec()).collect(),
        loss: -ll,
        bruteforce,
        paths: paths.to_string(),
    })
}

/// Random `frames x (labels + 1)` lattice over `width` symbols: forward
/// variables, loss and, when small enough, the enumerated loss.
#[wasm_bindgen]
pub fn lattice(frames: u32, labels: u32, width: u32, seed: u32) -> String {
    respond(lattice_inner(frames as usize, labels as usize, width as usize, seed as u64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inactive_tasks_leave_no_tokens() {
        let all = encode_inner(3, 0b11110).unwrap();
        let asr = encode_inner(3, 0).unwrap();
        assert_eq!(all.words, asr.words);
        assert!(asr.tokens.iter().all(|t| t.kind == "word"));
        assert!(all.lang.is_some() && all.malformed == 0);
    }

    #[test]
    fn activation_rows() {
        let a = activation_inner("per_combination", 0b110, 4, 1).unwrap();
        assert_eq!((a.bank.len(), a.used.len()), (16, 1));
        let s = activation_inner("per_task_sum", 0b110, 4, 1).unwrap();
        assert_eq!((s.bank.len(), s.used.clone()), (5, vec![0, 1, 2]));
        assert!(activation_inner("nope", 0, 4, 1).is_err());
    }

    #[test]
    fn lattice_matches_enumeration() {
        let l = lattice_inner(4, 3, 5, 9).unwrap();
        assert!((l.loss - l.bruteforce.unwrap()).abs() < 1e-9);
        assert_eq!(l.alpha.len(), 4);
        assert!(lattice(0, 1, 3, 1).contains("error"));
    }
}
