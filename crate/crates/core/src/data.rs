//! Synthetic multi-speaker, multilingual corpora with controllable task
//! structure, mixed-annotation splits, task-combination sampling and
//! batching.
//!
//! Every word frame is `mean(word) + offset(speaker) + offset(language) +
//! noise`. Each turn opens and closes with a few voice frames holding only
//! the speaker and language offsets; the utterance ends with noise-only
//! silence frames. Means
//! and offsets are drawn once per seed; each utterance then draws from its
//! own RNG stream so generation order does not matter.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::codec::{
    encode_reference, AnnotatedUtterance, CodecConfig, EntitySpan, Frames, TaskId, TaskSet, TokenVocab,
    NUM_AUX_TASKS,
};
use crate::error::{Error, Result};
use crate::tensor::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    TrainFull,
    TrainPartial,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::TrainFull, Split::TrainPartial, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::TrainFull => "train-full",
            Split::TrainPartial => "train-partial",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Split> {
        Split::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Unknown(format!("split `{s}`")))
    }
}

/// Inclusive integer range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Range {
    pub min: usize,
    pub max: usize,
}

impl Range {
    pub const fn new(min: usize, max: usize) -> Self {
        Range { min, max }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        rng.random_range(self.min..=self.max)
    }

    fn check(&self, name: &str) -> Result<()> {
        if self.min == 0 || self.min > self.max {
            return Err(Error::Config(format!(
                "{name} range must satisfy 1 <= min <= max (got {}..={})",
                self.min, self.max
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub seed: u64,
    pub languages: Vec<String>,
    /// Ordinary words per language.
    pub lexicon_size: usize,
    pub entity_types: Vec<String>,
    /// Entity words per type and language.
    pub entity_words: usize,
    /// Entity phrases (1-2 entity words) per type and language.
    pub entity_phrases: usize,
    /// Probability that a turn contains an entity phrase.
    pub entity_prob: f64,
    /// Size of the global speaker pool.
    pub speaker_pool: usize,
    pub speakers_per_conversation: Range,
    pub turns_per_utterance: Range,
    pub words_per_turn: Range,
    pub frames_per_word: Range,
    /// Frames opening and closing every turn that carry only the speaker
    /// and language offsets (breath or lead-in without word content).
    pub voice_frames: usize,
    /// Noise-only silence frames closing the utterance.
    pub pause_frames: usize,
    pub input_dim: usize,
    /// Standard deviation of the per-frame Gaussian noise.
    pub noise: f64,
    /// Norm of speaker and language offsets relative to the mean word norm.
    pub offset_ratio: f64,
    /// Total training utterances; `partial_fraction` of them form the
    /// partially annotated split.
    pub train_size: usize,
    pub partial_fraction: f64,
    pub dev_size: usize,
    pub test_size: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 1,
            languages: vec!["en".into(), "de".into()],
            lexicon_size: 50,
            entity_types: vec!["PER".into(), "LOC".into()],
            entity_words: 4,
            entity_phrases: 4,
            entity_prob: 0.3,
            speaker_pool: 6,
            speakers_per_conversation: Range::new(1, 3),
            turns_per_utterance: Range::new(1, 4),
            words_per_turn: Range::new(2, 6),
            frames_per_word: Range::new(2, 4),
            voice_frames: 2,
            pause_frames: 2,
            input_dim: 16,
            noise: 0.1,
            offset_ratio: 0.5,
            train_size: 800,
            partial_fraction: 0.5,
            dev_size: 100,
            test_size: 100,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.languages.is_empty() {
            return fail("at least one language is required".into());
        }
        if self.lexicon_size == 0 || self.input_dim == 0 || self.speaker_pool == 0 {
            return fail("lexicon size, input dim and speaker pool must be at least 1".into());
        }
        if !self.entity_types.is_empty() && (self.entity_words == 0 || self.entity_phrases == 0) {
            return fail("entity inventories must be non-empty".into());
        }
        if !(self.noise >= 0.0) || !(self.offset_ratio >= 0.0) {
            return fail("noise and offset ratio must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.partial_fraction) || !(0.0..=1.0).contains(&self.entity_prob) {
            return fail("fractions and probabilities must lie in [0, 1]".into());
        }
        self.speakers_per_conversation.check("speakers per conversation")?;
        self.turns_per_utterance.check("turns per utterance")?;
        self.words_per_turn.check("words per turn")?;
        self.frames_per_word.check("frames per word")?;
        if self.speakers_per_conversation.max > self.speaker_pool {
            return fail("speakers per conversation exceed the speaker pool".into());
        }
        Ok(())
    }

    pub fn partial_size(&self) -> usize {
        (self.train_size as f64 * self.partial_fraction).round() as usize
    }

    pub fn split_sizes(&self) -> [(Split, usize); 4] {
        let partial = self.partial_size();
        [
            (Split::TrainFull, self.train_size - partial),
            (Split::TrainPartial, partial),
            (Split::Dev, self.dev_size),
            (Split::Test, self.test_size),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusEntry {
    pub split: Split,
    pub utt: AnnotatedUtterance,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub codec: CodecConfig,
    pub entries: Vec<CorpusEntry>,
}

impl Corpus {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &AnnotatedUtterance> {
        self.entries
            .iter()
            .filter(move |e| e.split == split)
            .map(|e| &e.utt)
    }

    pub fn split_vec(&self, split: Split) -> Vec<&AnnotatedUtterance> {
        self.split(split).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Everything drawn once per seed.
#[derive(Clone, Debug)]
pub struct Lexicon {
    pub words: Vec<Vec<String>>,
    /// `entities[lang][type]` is a list of phrases.
    pub entities: Vec<Vec<Vec<Vec<String>>>>,
    pub word_means: std::collections::HashMap<String, Vec<f64>>,
    pub speaker_offsets: Vec<Vec<f64>>,
    pub language_offsets: Vec<Vec<f64>>,
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

fn make_word(rng: &mut impl Rng, capital: bool) -> String {
    let syllables = rng.random_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push(*CONSONANTS.choose(rng).expect("non-empty") as char);
        w.push(*VOWELS.choose(rng).expect("non-empty") as char);
    }
    if capital {
        w[..1].make_ascii_uppercase();
    }
    w
}

fn random_direction(rng: &mut impl Rng, dim: usize, norm: f64) -> Vec<f64> {
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    let v: Vec<f64> = (0..dim).map(|_| n.sample(rng)).collect();
    let len = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| x * norm / len).collect()
}

impl Lexicon {
    pub fn generate(cfg: &GenConfig) -> Result<Lexicon> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut used = BTreeSet::new();
        let mut fresh = |rng: &mut ChaCha8Rng, capital: bool| loop {
            let w = make_word(rng, capital);
            if used.insert(w.clone()) {
                return w;
            }
        };
        let mut words = Vec::new();
        let mut entities = Vec::new();
        for _ in &cfg.languages {
            words.push((0..cfg.lexicon_size).map(|_| fresh(&mut rng, false)).collect::<Vec<_>>());
            let mut per_type = Vec::new();
            for _ in &cfg.entity_types {
                let pool: Vec<String> = (0..cfg.entity_words).map(|_| fresh(&mut rng, true)).collect();
                let phrases = (0..cfg.entity_phrases)
                    .map(|_| {
                        let len = rng.random_range(1..=2.min(pool.len()));
                        pool.choose_multiple(&mut rng, len).cloned().collect()
                    })
                    .collect();
                per_type.push(phrases);
            }
            entities.push(per_type);
        }

        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut word_means = std::collections::HashMap::new();
        let mut all: Vec<&String> = used.iter().collect();
        all.sort();
        for w in all {
            let m: Vec<f64> = (0..cfg.input_dim).map(|_| normal.sample(&mut rng)).collect();
            word_means.insert(w.clone(), m);
        }
        let offset_norm = cfg.offset_ratio * (cfg.input_dim as f64).sqrt();
        let speaker_offsets = (0..cfg.speaker_pool)
            .map(|_| random_direction(&mut rng, cfg.input_dim, offset_norm))
            .collect();
        let language_offsets = cfg
            .languages
            .iter()
            .map(|_| random_direction(&mut rng, cfg.input_dim, offset_norm))
            .collect();
        Ok(Lexicon {
            words,
            entities,
            word_means,
            speaker_offsets,
            language_offsets,
        })
    }

    pub fn codec_config(&self, cfg: &GenConfig) -> CodecConfig {
        let lexicons = cfg
            .languages
            .iter()
            .enumerate()
            .map(|(li, lang)| {
                let mut ws = self.words[li].clone();
                for per_type in &self.entities[li] {
                    for phrase in per_type {
                        ws.extend(phrase.iter().cloned());
                    }
                }
                ws.sort();
                ws.dedup();
                (lang.clone(), ws)
            })
            .collect();
        CodecConfig {
            languages: cfg.languages.clone(),
            entity_types: cfg.entity_types.clone(),
            lexicons,
        }
    }
}

pub fn utterance_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index + 1);
    rng
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum FrameSource {
    Word(String),
    Voice,
    Pause,
}

/// What produced a frame and who was speaking.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameOrigin {
    pub source: FrameSource,
    pub speaker: usize,
    pub lang: usize,
}

/// Generate one utterance together with the origin of every frame.
pub fn generate_utterance(
    cfg: &GenConfig,
    lex: &Lexicon,
    id: String,
    rng: &mut ChaCha8Rng,
    partial: bool,
) -> (AnnotatedUtterance, Vec<FrameOrigin>) {
    let lang = rng.random_range(0..cfg.languages.len());
    let n_speakers = cfg.speakers_per_conversation.sample(rng);
    let speakers: Vec<usize> = rand::seq::index::sample(rng, cfg.speaker_pool, n_speakers).into_vec();
    let turns = cfg.turns_per_utterance.sample(rng);
    let noise = Normal::new(0.0, cfg.noise.max(0.0)).expect("valid noise");

    let mut words: Vec<String> = Vec::new();
    let mut scd = Vec::new();
    let mut ep = Vec::new();
    let mut spans = Vec::new();
    let mut frames: Vec<f32> = Vec::new();
    let mut origins = Vec::new();
    let mut speaker = *speakers.choose(rng).expect("non-empty");

    for turn in 0..turns {
        if turn > 0 {
            let next = *speakers.choose(rng).expect("non-empty");
            if next != speaker {
                scd.push(words.len());
            }
            speaker = next;
        }
        let mut turn_words: Vec<String> = (0..cfg.words_per_turn.sample(rng))
            .map(|_| lex.words[lang].choose(rng).expect("non-empty").clone())
            .collect();
        let mut span = None;
        if !cfg.entity_types.is_empty() && rng.random_bool(cfg.entity_prob) {
            let ty = rng.random_range(0..cfg.entity_types.len());
            let phrase = lex.entities[lang][ty].choose(rng).expect("non-empty").clone();
            let at = rng.random_range(0..=turn_words.len());
            let start = words.len() + at;
            span = Some(EntitySpan {
                label: cfg.entity_types[ty].clone(),
                start,
                end: start + phrase.len(),
            });
            turn_words.splice(at..at, phrase);
        }
        let voice = |frames: &mut Vec<f32>, origins: &mut Vec<FrameOrigin>, rng: &mut ChaCha8Rng| {
            for _ in 0..cfg.voice_frames {
                for j in 0..cfg.input_dim {
                    let x = lex.speaker_offsets[speaker][j] + lex.language_offsets[lang][j] + noise.sample(rng);
                    frames.push(x as f32);
                }
                origins.push(FrameOrigin {
                    source: FrameSource::Voice,
                    speaker,
                    lang,
                });
            }
        };
        voice(&mut frames, &mut origins, rng);
        for w in &turn_words {
            let mean = &lex.word_means[w];
            for _ in 0..cfg.frames_per_word.sample(rng) {
                for j in 0..cfg.input_dim {
                    let x = mean[j]
                        + lex.speaker_offsets[speaker][j]
                        + lex.language_offsets[lang][j]
                        + noise.sample(rng);
                    frames.push(x as f32);
                }
                origins.push(FrameOrigin {
                    source: FrameSource::Word(w.clone()),
                    speaker,
                    lang,
                });
            }
        }
        voice(&mut frames, &mut origins, rng);
        let trailing = if turn + 1 == turns { cfg.pause_frames } else { 0 };
        for _ in 0..trailing {
            frames.extend((0..cfg.input_dim).map(|_| noise.sample(rng) as f32));
            origins.push(FrameOrigin {
                source: FrameSource::Pause,
                speaker,
                lang,
            });
        }
        words.extend(turn_words);
        spans.extend(span);
        ep.push(words.len());
    }

    let frames = Frames::new(origins.len(), cfg.input_dim, frames).expect("consistent frame buffer");
    let lang = Some(cfg.languages[lang].clone());
    let utt = if partial {
        AnnotatedUtterance {
            id,
            frames,
            words,
            lang,
            scd_gaps: None,
            ep_gaps: None,
            spans: None,
            available: TaskSet::from_tasks([TaskId::Lid]),
        }
    } else {
        AnnotatedUtterance {
            id,
            frames,
            words,
            lang,
            scd_gaps: Some(scd),
            ep_gaps: Some(ep),
            spans: Some(spans),
            available: TaskSet::all(NUM_AUX_TASKS),
        }
    };
    (utt, origins)
}

/// Generate the four splits deterministically from `cfg.seed`.
pub fn gen_corpus(cfg: &GenConfig) -> Result<Corpus> {
    let lex = Lexicon::generate(cfg)?;
    let codec = lex.codec_config(cfg);
    let mut jobs = Vec::new();
    let mut index = 0u64;
    for (split, n) in cfg.split_sizes() {
        for i in 0..n {
            jobs.push((split, format!("{}-{:05}", split.name(), i), index));
            index += 1;
        }
    }
    let build = |(split, id, index): &(Split, String, u64)| CorpusEntry {
        split: *split,
        utt: generate_utterance(
            cfg,
            &lex,
            id.clone(),
            &mut utterance_rng(cfg.seed, *index),
            *split == Split::TrainPartial,
        )
        .0,
    };
    #[cfg(feature = "parallel")]
    let entries = {
        use rayon::prelude::*;
        jobs.par_iter().map(build).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let entries = jobs.iter().map(build).collect();
    Ok(Corpus { codec, entries })
}

/// How the active task set of a training utterance is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombinationPolicy {
    /// Activate exactly the annotated tasks.
    FromAvailableLabels,
    /// Uniform over all subsets of the annotated auxiliary tasks.
    UniformRandomSubset,
}

pub fn select_task_combination(available: TaskSet, policy: CombinationPolicy, rng: &mut impl Rng) -> TaskSet {
    match policy {
        CombinationPolicy::FromAvailableLabels => available,
        CombinationPolicy::UniformRandomSubset => {
            let aux: Vec<usize> = available.indices().filter(|&i| i > 0).collect();
            let pick: u32 = rng.random_range(0..1u32 << aux.len());
            let bits = aux
                .iter()
                .enumerate()
                .filter(|(j, _)| pick & (1 << j) != 0)
                .fold(1u32, |acc, (_, &i)| acc | (1 << i));
            TaskSet::from_bits(bits).expect("primary bit set")
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchItem {
    pub id: String,
    pub length: usize,
    pub target: Vec<u32>,
    pub tasks: TaskSet,
}

/// Padded frames plus per-item targets; items may activate different task
/// sets.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub items: Vec<BatchItem>,
    pub max_len: usize,
    pub dim: usize,
    /// `items.len() x max_len x dim`, zero padded.
    pub frames: Vec<f32>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Unpadded frames of item `i` in double precision.
    pub fn frames_of(&self, i: usize) -> Mat {
        let start = i * self.max_len * self.dim;
        let n = self.items[i].length * self.dim;
        Mat::from_vec(
            self.items[i].length,
            self.dim,
            self.frames[start..start + n].iter().map(|&x| x as f64).collect(),
        )
    }
}

pub fn make_batch(
    utterances: &[&AnnotatedUtterance],
    indices: &[usize],
    policy: CombinationPolicy,
    rng: &mut impl Rng,
    vocab: &TokenVocab,
) -> Result<Batch> {
    let mut items = Vec::with_capacity(indices.len());
    let max_len = indices.iter().map(|&i| utterances[i].frames.rows).max().unwrap_or(0);
    let dim = indices.first().map(|&i| utterances[i].frames.dim).unwrap_or(0);
    let mut frames = vec![0f32; indices.len() * max_len * dim];
    for (slot, &i) in indices.iter().enumerate() {
        let utt = utterances
            .get(i)
            .ok_or_else(|| Error::Config(format!("batch index {i} out of range")))?;
        if utt.frames.dim != dim {
            return Err(Error::Shape("utterances disagree on frame dimension".into()));
        }
        let tasks = select_task_combination(utt.available, policy, rng);
        let target = encode_reference(utt, tasks, vocab)?;
        let start = slot * max_len * dim;
        frames[start..start + utt.frames.data.len()].copy_from_slice(&utt.frames.data);
        items.push(BatchItem {
            id: utt.id.clone(),
            length: utt.frames.rows,
            target,
            tasks,
        });
    }
    Ok(Batch {
        items,
        max_len,
        dim,
        frames,
    })
}

/// Deterministic shuffled order of `n` items for one epoch.
pub fn epoch_order(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::build_vocab;

    fn small() -> GenConfig {
        GenConfig {
            train_size: 20,
            dev_size: 4,
            test_size: 4,
            ..GenConfig::default()
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = gen_corpus(&small()).unwrap();
        let b = gen_corpus(&small()).unwrap();
        assert_eq!(a, b);
        let c = gen_corpus(&GenConfig { seed: 2, ..small() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn split_sizes_and_availability() {
        let cfg = GenConfig {
            train_size: 200,
            partial_fraction: 0.5,
            dev_size: 0,
            test_size: 0,
            ..GenConfig::default()
        };
        let corpus = gen_corpus(&cfg).unwrap();
        let partial = corpus.split_vec(Split::TrainPartial);
        assert_eq!(partial.len(), 100);
        assert!(partial.iter().all(|u| u.available == TaskSet::from_tasks([TaskId::Lid])));
        assert!(corpus
            .split(Split::TrainFull)
            .all(|u| u.available == TaskSet::all(NUM_AUX_TASKS)));
        for e in &corpus.entries {
            e.utt.validate().unwrap();
        }
    }

    fn sampled(cfg: &GenConfig, n: u64) -> (Lexicon, Vec<(AnnotatedUtterance, Vec<FrameOrigin>)>) {
        let lex = Lexicon::generate(cfg).unwrap();
        let utts = (0..n)
            .map(|i| generate_utterance(cfg, &lex, format!("u{i}"), &mut utterance_rng(cfg.seed, i), false))
            .collect();
        (lex, utts)
    }

    #[test]
    fn zero_noise_gives_identical_frames_per_source() {
        let cfg = GenConfig { noise: 0.0, ..small() };
        let (_, utts) = sampled(&cfg, 30);
        let mut seen: std::collections::HashMap<(FrameSource, usize, usize), Vec<f32>> = Default::default();
        let mut repeats = 0;
        for (utt, origins) in &utts {
            assert_eq!(origins.len(), utt.frames.rows);
            for (r, o) in origins.iter().enumerate() {
                let key = match o.source {
                    FrameSource::Pause => (FrameSource::Pause, 0, 0),
                    ref s => (s.clone(), o.speaker, o.lang),
                };
                let row = utt.frames.row(r).to_vec();
                if o.source == FrameSource::Pause {
                    assert!(row.iter().all(|&x| x == 0.0));
                }

                if let Some(prev) = seen.insert(key, row.clone()) {
                    assert_eq!(prev, row);
                    repeats += 1;
                }
            }
        }
        assert!(repeats > 100);
    }

    #[test]
    fn nearest_mean_classifies_words() {
        let cfg = GenConfig { noise: 0.1, ..small() };
        let (lex, utts) = sampled(&cfg, 40);
        let (mut correct, mut total) = (0usize, 0usize);
        for (utt, origins) in &utts {
            for (r, o) in origins.iter().enumerate() {
                let FrameSource::Word(word) = &o.source else { continue };
                let x = utt.frames.row(r);
                let dist = |w: &String| -> f64 {
                    let m = &lex.word_means[w];
                    (0..cfg.input_dim)
                        .map(|j| {
                            let mu = m[j] + lex.speaker_offsets[o.speaker][j] + lex.language_offsets[o.lang][j];
                            (x[j] as f64 - mu).powi(2)
                        })
                        .sum()
                };
                let best = lex
                    .word_means
                    .keys()
                    .min_by(|a, b| dist(a).partial_cmp(&dist(b)).unwrap())
                    .unwrap();
                correct += (best == word) as usize;
                total += 1;
            }
        }
        let acc = correct as f64 / total as f64;
        assert!(acc > 0.95, "accuracy {acc}");
    }

    #[test]
    fn turn_structure_is_consistent() {
        let (_, utts) = sampled(&small(), 30);
        for (utt, origins) in &utts {
            let ep = utt.ep_gaps.as_ref().unwrap();
            assert_eq!(*ep.last().unwrap(), utt.words.len());
            let pauses = origins.iter().filter(|o| !matches!(o.source, FrameSource::Word(_))).count();
            assert_eq!(pauses, ep.len() * 2 * small().voice_frames + small().pause_frames);
            for s in utt.scd_gaps.as_ref().unwrap() {
                assert!(ep.contains(s));
            }
            for sp in utt.spans.as_ref().unwrap() {
                assert!(utt.words[sp.start..sp.end].iter().all(|w| w.starts_with(|c: char| c.is_uppercase())));
            }
        }
    }

    #[test]
    fn uniform_subset_policy_respects_availability() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lid_only = TaskSet::from_tasks([TaskId::Lid]);
        for _ in 0..100 {
            let s = select_task_combination(lid_only, CombinationPolicy::UniformRandomSubset, &mut rng);
            assert!(s.is_subset_of(lid_only));
            assert!(s.contains(TaskId::Asr));
        }
        assert_eq!(
            select_task_combination(lid_only, CombinationPolicy::FromAvailableLabels, &mut rng),
            lid_only
        );
        let asr = TaskSet::primary_only();
        assert_eq!(
            select_task_combination(asr, CombinationPolicy::UniformRandomSubset, &mut rng),
            asr
        );
    }

    #[test]
    fn batches_mix_task_sets() {
        let corpus = gen_corpus(&small()).unwrap();
        let vocab = build_vocab(&corpus.codec).unwrap();
        let full = corpus.split_vec(Split::TrainFull)[0];
        let partial = corpus.split_vec(Split::TrainPartial)[0];
        let utts = vec![full, partial];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = make_batch(&utts, &[0, 1], CombinationPolicy::FromAvailableLabels, &mut rng, &vocab).unwrap();
        assert_eq!(batch.len(), 2);
        assert_ne!(batch.items[0].tasks, batch.items[1].tasks);
        for (i, utt) in utts.iter().enumerate() {
            assert_eq!(batch.frames_of(i).rows, utt.frames.rows);
            assert_eq!(batch.items[i].target, encode_reference(utt, batch.items[i].tasks, &vocab).unwrap());
        }
        let single = make_batch(&utts, &[1], CombinationPolicy::FromAvailableLabels, &mut rng, &vocab).unwrap();
        assert_eq!(single.len(), 1);
    }
}
