//! Training loop: Adam with linear warmup and inverse-sqrt decay, mixed
//! full/partial batches, per-epoch dev evaluation and best-epoch
//! selection.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{build_vocab, AnnotatedUtterance, TaskSet, TokenVocab, NUM_AUX_TASKS};
use crate::data::{make_batch, Batch, CombinationPolicy, Corpus, Split};
use crate::error::{Error, Result};
use crate::experiment::{decode_all, DecodeOptions};
use crate::metrics::evaluate;
use crate::model::{Dropout, ModelConfig, TransducerModel};
use crate::tape::{Grads, ParamStore};
use crate::tensor::Mat;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    pub seed: u64,
    pub policy: CombinationPolicy,
    /// Train on the partially annotated split as well.
    pub use_partial: bool,
    /// Fraction of the partial split mixed into each epoch.
    pub partial_ratio: f64,
    /// Evaluate on dev every this many epochs (the last epoch always is).
    pub eval_every: usize,
    /// Cap on dev utterances used for model selection; 0 means all.
    pub dev_limit: usize,
    pub max_symbols_per_frame: usize,
    pub dropout: Dropout,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 8,
            lr: 3e-3,
            warmup_steps: 200,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
            grad_clip: 5.0,
            seed: 0,
            policy: CombinationPolicy::UniformRandomSubset,
            use_partial: true,
            partial_ratio: 1.0,
            eval_every: 1,
            dev_limit: 0,
            max_symbols_per_frame: crate::model::DEFAULT_MAX_SYMBOLS_PER_FRAME,
            dropout: Dropout::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::Config("epochs, batch size and eval cadence must be at least 1".into()));
        }
        if !(self.lr > 0.0) || !(0.0..=1.0).contains(&self.partial_ratio) {
            return Err(Error::Config("lr must be positive and partial ratio in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::Config("invalid Adam hyperparameters".into()));
        }
        let d = self.dropout;
        if !(0.0..1.0).contains(&d.encoder) || !(0.0..1.0).contains(&d.prediction) {
            return Err(Error::Config("dropout rates must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Learning rate at optimizer step `step` (1-based).
    pub fn lr_at(&self, step: usize) -> f64 {
        let s = step.max(1) as f64;
        let w = self.warmup_steps.max(1) as f64;
        self.lr * (s / w).min((w / s).sqrt())
    }
}

pub struct Adam {
    m: Vec<Mat>,
    v: Vec<Mat>,
    step: usize,
}

impl Adam {
    pub fn new(params: &ParamStore) -> Self {
        let z = params.zeros_like().0;
        Adam {
            m: z.clone(),
            v: z,
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Grads, cfg: &TrainConfig) {
        self.step += 1;
        let lr = cfg.lr_at(self.step);
        let c1 = 1.0 - cfg.beta1.powi(self.step as i32);
        let c2 = 1.0 - cfg.beta2.powi(self.step as i32);
        for (i, id) in params.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let g = &grads.0[i].data;
            let (m, v) = (&mut self.m[i].data, &mut self.v[i].data);
            for (j, p) in params.get_mut(id).data.iter_mut().enumerate() {
                m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
                v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
                *p -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + cfg.eps);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_wer: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: TrainConfig,
    pub corpus_hash: String,
    pub revision: String,
    pub num_parameters: usize,
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_dev_wer: f64,
}

pub fn revision() -> String {
    match option_env!("DYNTASK_REVISION") {
        Some(r) => format!("dyntask {} ({r})", env!("CARGO_PKG_VERSION")),
        None => format!("dyntask {}", env!("CARGO_PKG_VERSION")),
    }
}

/// Epoch with the lowest dev WER; ties go to the earliest.
pub fn best_epoch(epochs: &[EpochLog]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for e in epochs {
        if let Some(w) = e.dev_wer {
            if best.is_none_or(|(_, b)| w < b) {
                best = Some((e.epoch, w));
            }
        }
    }
    best
}

pub struct TrainOutcome {
    /// Parameters of the best epoch, rounded to single precision.
    pub model: TransducerModel,
    pub manifest: RunManifest,
}

/// Mean loss and mean gradients of a batch, items reduced in order.
/// `seeds` drive per-item dropout masks.
pub fn batch_loss_and_grads(model: &TransducerModel, batch: &Batch, dropout: Dropout, seeds: &[u64]) -> Result<(f64, Grads)> {
    let item = |i: usize| -> Result<(f64, Grads)> {
        let it = &batch.items[i];
        let seed = seeds.get(i).copied().unwrap_or(0);
        model.training_loss_and_grads(&batch.frames_of(i), &it.target, it.tasks, dropout, seed)
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<Result<(f64, Grads)>> = {
        use rayon::prelude::*;
        (0..batch.len()).into_par_iter().map(item).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Result<(f64, Grads)>> = (0..batch.len()).map(item).collect();

    let mut total = 0.0;
    let mut grads = model.params().zeros_like();
    for (i, p) in parts.into_iter().enumerate() {
        let (l, g) = p?;
        if !l.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite loss {l} on utterance {}",
                batch.items[i].id
            )));
        }
        total += l;
        grads.add_assign(&g);
    }
    let n = batch.len().max(1) as f64;
    grads.scale(1.0 / n);
    Ok((total / n, grads))
}

/// Training utterances for `cfg`: the full split plus, optionally, the
/// partial one.
pub fn training_pool<'c>(corpus: &'c Corpus, cfg: &TrainConfig) -> (Vec<&'c AnnotatedUtterance>, Vec<&'c AnnotatedUtterance>) {
    let full = corpus.split_vec(Split::TrainFull);
    let partial = if cfg.use_partial {
        corpus.split_vec(Split::TrainPartial)
    } else {
        Vec::new()
    };
    (full, partial)
}

/// Model configuration with corpus-dependent sizes filled in.
pub fn resolve_model_config(cfg: &TrainConfig, corpus: &Corpus, vocab: &TokenVocab) -> Result<ModelConfig> {
    let dim = corpus
        .entries
        .first()
        .map(|e| e.utt.frames.dim)
        .ok_or_else(|| Error::Config("corpus is empty".into()))?;
    Ok(ModelConfig {
        input_dim: dim,
        vocab_size: vocab.num_symbols(),
        num_aux: NUM_AUX_TASKS,
        seed: cfg.seed,
        ..cfg.model.clone()
    })
}

pub fn dev_wer(model: &TransducerModel, dev: &[&AnnotatedUtterance], vocab: &TokenVocab, cap: usize) -> Result<f64> {
    let tasks = TaskSet::all(NUM_AUX_TASKS);
    let opts = DecodeOptions {
        tasks,
        beam: 1,
        max_symbols_per_frame: cap,
    };
    let hyps = decode_all(model, dev, &opts)?;
    Ok(evaluate(dev, &hyps, tasks, vocab)?.macro_wer())
}

pub fn train(corpus: &Corpus, corpus_hash: &str, cfg: &TrainConfig, on_epoch: &mut dyn FnMut(&EpochLog)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let vocab = build_vocab(&corpus.codec)?;
    let mut model = TransducerModel::new(resolve_model_config(cfg, corpus, &vocab)?)?;
    let (full, partial) = training_pool(corpus, cfg);
    if full.is_empty() && partial.is_empty() {
        return Err(Error::Config("no training utterances".into()));
    }
    let mut dev = corpus.split_vec(Split::Dev);
    if cfg.dev_limit > 0 {
        dev.truncate(cfg.dev_limit);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0x7472_6169_6e);
    let mut adam = Adam::new(model.params());
    let mut epochs = Vec::new();
    let mut best: Option<(f64, ParamStore)> = None;

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let mut pool = full.clone();
        let mut partial_order = partial.clone();
        partial_order.shuffle(&mut rng);
        let take = (partial.len() as f64 * cfg.partial_ratio).round() as usize;
        pool.extend(partial_order.into_iter().take(take));
        pool.shuffle(&mut rng);

        let idx: Vec<usize> = (0..pool.len()).collect();
        let (mut sum, mut count) = (0.0, 0usize);
        for chunk in idx.chunks(cfg.batch_size) {
            let batch = make_batch(&pool, chunk, cfg.policy, &mut rng, &vocab)?;
            let seeds: Vec<u64> = (0..batch.len()).map(|_| rng.random()).collect();
            let (loss, mut grads) = batch_loss_and_grads(&model, &batch, cfg.dropout, &seeds)?;
            if !grads.all_finite() {
                return Err(Error::Numerical(format!("non-finite gradient in epoch {epoch}")));
            }
            if cfg.grad_clip > 0.0 {
                let norm = grads.norm();
                if norm > cfg.grad_clip {
                    grads.scale(cfg.grad_clip / norm);
                }
            }
            adam.step(model.params_mut(), &grads, cfg);
            sum += loss * batch.len() as f64;
            count += batch.len();
        }
        model.params_mut().round_to_f32();
        if !model.params().all_finite() {
            return Err(Error::Numerical(format!("non-finite parameters after epoch {epoch}")));
        }

        let evaluate_now = !dev.is_empty() && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs);
        let dev_wer = if evaluate_now {
            Some(dev_wer(&model, &dev, &vocab, cfg.max_symbols_per_frame)?)
        } else {
            None
        };
        if let Some(w) = dev_wer {
            if best.as_ref().is_none_or(|(b, _)| w < *b) {
                best = Some((w, model.params().clone()));
            }
        }
        let log = EpochLog {
            epoch,
            train_loss: sum / count.max(1) as f64,
            dev_wer,
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: loss {:.4} dev wer {} ({:.1}s)",
            log.train_loss,
            dev_wer.map_or("--".into(), |w| format!("{w:.4}")),
            log.seconds
        );
        on_epoch(&log);
        epochs.push(log);
    }

    let (best_epoch, best_dev_wer) = best_epoch(&epochs).unwrap_or((epochs.len(), f64::NAN));
    if let Some((_, params)) = best {
        *model.params_mut() = params;
    }
    let manifest = RunManifest {
        config: TrainConfig {
            model: model.config().clone(),
            ..cfg.clone()
        },
        corpus_hash: corpus_hash.to_string(),
        revision: revision(),
        num_parameters: model.params().num_scalars(),
        epochs,
        best_epoch,
        best_dev_wer,
    };
    Ok(TrainOutcome { model, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_corpus, GenConfig};

    #[test]
    fn schedule_warms_up_then_decays() {
        let cfg = TrainConfig {
            lr: 1.0,
            warmup_steps: 100,
            ..TrainConfig::default()
        };
        assert!((cfg.lr_at(1) - 0.01).abs() < 1e-12);
        assert!((cfg.lr_at(100) - 1.0).abs() < 1e-12);
        assert!((cfg.lr_at(400) - 0.5).abs() < 1e-12);
        assert!(cfg.lr_at(50) < cfg.lr_at(100) && cfg.lr_at(200) < cfg.lr_at(100));
    }

    #[test]
    fn best_epoch_prefers_earliest_tie() {
        let log = |epoch, w| EpochLog {
            epoch,
            train_loss: 1.0,
            dev_wer: w,
            seconds: 0.0,
        };
        let logs = [log(1, Some(0.5)), log(2, Some(0.3)), log(3, None), log(4, Some(0.3))];
        assert_eq!(best_epoch(&logs), Some((2, 0.3)));
        assert_eq!(best_epoch(&[log(1, None)]), None);
    }

    #[test]
    fn padding_does_not_change_loss() {
        let corpus = gen_corpus(&GenConfig {
            train_size: 6,
            dev_size: 0,
            test_size: 0,
            ..GenConfig::default()
        })
        .unwrap();
        let vocab = build_vocab(&corpus.codec).unwrap();
        let cfg = TrainConfig {
            model: ModelConfig {
                dim: 8,
                pred_hidden: 8,
                joint_dim: 8,
                context_layers: 1,
                ..ModelConfig::default()
            },
            ..TrainConfig::default()
        };
        let model = TransducerModel::new(resolve_model_config(&cfg, &corpus, &vocab).unwrap()).unwrap();
        let utts: Vec<&AnnotatedUtterance> = corpus.entries.iter().map(|e| &e.utt).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = make_batch(&utts, &[0, 1, 2, 3], CombinationPolicy::UniformRandomSubset, &mut rng, &vocab).unwrap();
        let (mean, _) = batch_loss_and_grads(&model, &batch, Dropout::default(), &[]).unwrap();
        let mut individual = 0.0;
        for (i, it) in batch.items.iter().enumerate() {
            let frames = model.frames_to_mat(&utts[i].frames).unwrap();
            individual += model.loss(&frames, &it.target, it.tasks).unwrap();
        }
        assert!((mean * 4.0 - individual).abs() < 1e-6);
    }
}
