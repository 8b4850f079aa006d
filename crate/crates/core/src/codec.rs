//! Multitask token vocabulary and the conversion between structured
//! annotations and task-token-interspersed token sequences.
//!
//! Token shapes:
//!
//! * `<lid:LANG>` is prepended to the sequence.
//! * `<scd>` sits in the gap between the last word of one speaker and the
//!   first word of the next.
//! * `<ep>` marks end-of-turn gaps, including the final gap.
//! * Entities are wrapped as `<ne:TYPE> w1 .. wn </ne>`.
//!
//! Within a single gap the order is `</ne>`, `<scd>`, `<ep>`, `<ne:TYPE>`,
//! which keeps every entity tag well nested.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A recognisable task. `Asr` is the primary task, the rest are auxiliary
/// and appear in this declaration order in [`TaskSet`] bitmasks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskId {
    Asr,
    Scd,
    Endpoint,
    Ner,
    Lid,
}

/// Number of auxiliary tasks in the default task inventory.
pub const NUM_AUX_TASKS: usize = 4;

impl TaskId {
    pub const ALL: [TaskId; 5] = [
        TaskId::Asr,
        TaskId::Scd,
        TaskId::Endpoint,
        TaskId::Ner,
        TaskId::Lid,
    ];
    pub const AUXILIARY: [TaskId; 4] = [TaskId::Scd, TaskId::Endpoint, TaskId::Ner, TaskId::Lid];

    /// Bit position inside a [`TaskSet`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<TaskId> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskId::Asr => "asr",
            TaskId::Scd => "scd",
            TaskId::Endpoint => "ep",
            TaskId::Ner => "ner",
            TaskId::Lid => "lid",
        }
    }

    pub fn from_name(name: &str) -> Result<TaskId> {
        match name.trim().to_ascii_lowercase().as_str() {
            "asr" => Ok(TaskId::Asr),
            "scd" => Ok(TaskId::Scd),
            "ep" | "endpoint" => Ok(TaskId::Endpoint),
            "ner" => Ok(TaskId::Ner),
            "lid" => Ok(TaskId::Lid),
            other => Err(Error::Unknown(format!("task `{other}`"))),
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Set of active tasks. Bit 0 is the primary task and is always set; bits
/// `1..=K` are auxiliary tasks. The representation supports any `K < 32`
/// although the codec itself only knows the four tasks of [`TaskId`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TaskSet(u32);

impl TaskSet {
    pub const MAX_AUX: usize = 31;

    pub fn primary_only() -> Self {
        TaskSet(1)
    }

    /// Primary task plus all `k` auxiliary tasks.
    pub fn all(k: usize) -> Self {
        assert!(k <= Self::MAX_AUX);
        TaskSet(((1u64 << (k + 1)) - 1) as u32)
    }

    pub fn from_bits(bits: u32) -> Result<Self> {
        if bits & 1 == 0 {
            return Err(Error::TaskSet(format!(
                "bitmask {bits:#b} does not contain the primary task"
            )));
        }
        Ok(TaskSet(bits))
    }

    pub fn from_tasks<I: IntoIterator<Item = TaskId>>(tasks: I) -> Self {
        tasks
            .into_iter()
            .fold(TaskSet::primary_only(), |set, t| set.with(t))
    }

    /// Inverse of [`TaskSet::combination_index`].
    pub fn from_combination_index(index: usize, k: usize) -> Result<Self> {
        if k > Self::MAX_AUX || (index >> k) != 0 {
            return Err(Error::TaskSet(format!(
                "combination index {index} out of range for K={k}"
            )));
        }
        Ok(TaskSet(((index as u32) << 1) | 1))
    }

    /// Parse a comma separated list such as `asr,scd,ner`. The primary task
    /// is implied.
    pub fn parse_list(list: &str) -> Result<Self> {
        let mut set = TaskSet::primary_only();
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            set = set.with(TaskId::from_name(name)?);
        }
        Ok(set)
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn contains(self, task: TaskId) -> bool {
        self.contains_index(task.index())
    }

    pub fn contains_index(self, index: usize) -> bool {
        index < 32 && self.0 & (1 << index) != 0
    }

    pub fn with(self, task: TaskId) -> Self {
        TaskSet(self.0 | (1 << task.index()))
    }

    pub fn without(self, task: TaskId) -> Self {
        if task == TaskId::Asr {
            return self;
        }
        TaskSet(self.0 & !(1 << task.index()))
    }

    pub fn intersect(self, other: TaskSet) -> Self {
        TaskSet(self.0 & other.0)
    }

    pub fn is_subset_of(self, other: TaskSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// Index of the auxiliary subset in `[0, 2^k)`: bit `i-1` of the result
    /// is auxiliary task `i`.
    pub fn combination_index(self, k: usize) -> Result<usize> {
        if k > Self::MAX_AUX {
            return Err(Error::TaskSet(format!("K={k} too large")));
        }
        let aux = self.0 >> 1;
        if (aux as u64) >> k != 0 {
            return Err(Error::TaskSet(format!(
                "task set {self} references a task beyond K={k}"
            )));
        }
        Ok(aux as usize)
    }

    /// Indices (bit positions) of every member, primary first.
    pub fn indices(self) -> impl Iterator<Item = usize> {
        (0..32).filter(move |&i| self.contains_index(i))
    }

    pub fn tasks(self) -> impl Iterator<Item = TaskId> {
        self.indices().filter_map(TaskId::from_index)
    }

    pub fn aux_count(self) -> usize {
        (self.0 >> 1).count_ones() as usize
    }

    /// All `2^k` task sets over `k` auxiliary tasks, ordered by
    /// combination index.
    pub fn enumerate(k: usize) -> Vec<TaskSet> {
        (0..1usize << k)
            .map(|i| TaskSet(((i as u32) << 1) | 1))
            .collect()
    }
}

impl Default for TaskSet {
    fn default() -> Self {
        TaskSet::primary_only()
    }
}

impl fmt::Display for TaskSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for i in self.indices() {
            if !first {
                f.write_str("+")?;
            }
            first = false;
            match TaskId::from_index(i) {
                Some(t) => f.write_str(t.name())?,
                None => write!(f, "aux{i}")?,
            }
        }
        Ok(())
    }
}

impl fmt::Debug for TaskSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TaskSet({self})")
    }
}

impl Serialize for TaskSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let names: Vec<String> = self
            .indices()
            .map(|i| match TaskId::from_index(i) {
                Some(t) => t.name().to_string(),
                None => format!("aux{i}"),
            })
            .collect();
        names.serialize(s)
    }
}

impl<'de> Deserialize<'de> for TaskSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let names = Vec::<String>::deserialize(d)?;
        let mut set = TaskSet::primary_only();
        for n in names {
            set = set.with(TaskId::from_name(&n).map_err(serde::de::Error::custom)?);
        }
        Ok(set)
    }
}

/// Classification of a token id.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenKind {
    Word,
    Blank,
    Task(TaskId),
}

/// Inputs to [`build_vocab`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    pub languages: Vec<String>,
    pub entity_types: Vec<String>,
    /// Lexicon per language; every language must have one.
    pub lexicons: BTreeMap<String, Vec<String>>,
}

/// Token inventory. Ids are contiguous from zero: words (sorted surface
/// forms), then `<scd>`, `<ep>`, one `<ne:TYPE>` per sorted entity type,
/// `</ne>`, one `<lid:LANG>` per sorted language, and finally the blank.
#[derive(Clone, Debug)]
pub struct TokenVocab {
    config: CodecConfig,
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    num_words: usize,
    entity_types: Vec<String>,
    languages: Vec<String>,
    scd: u32,
    ep: u32,
    ne_open_base: u32,
    ne_close: u32,
    lid_base: u32,
    blank: u32,
}

pub const SCD_TOKEN: &str = "<scd>";
pub const EP_TOKEN: &str = "<ep>";
pub const NE_CLOSE_TOKEN: &str = "</ne>";
pub const BLANK_TOKEN: &str = "<blank>";

fn check_symbol(kind: &str, s: &str) -> Result<()> {
    if s.is_empty() || s.starts_with('<') || s.chars().any(|c| c.is_whitespace() || c == ':') {
        return Err(Error::Config(format!("invalid {kind} `{s}`")));
    }
    Ok(())
}

pub fn build_vocab(config: &CodecConfig) -> Result<TokenVocab> {
    if config.languages.is_empty() {
        return Err(Error::Config("at least one language is required".into()));
    }
    let languages: BTreeSet<&String> = config.languages.iter().collect();
    if languages.len() != config.languages.len() {
        return Err(Error::Config("duplicate language".into()));
    }
    let entity_types: BTreeSet<&String> = config.entity_types.iter().collect();
    if entity_types.len() != config.entity_types.len() {
        return Err(Error::Config("duplicate entity type".into()));
    }
    let mut words = BTreeSet::new();
    for lang in &languages {
        check_symbol("language", lang)?;
        let lexicon = config
            .lexicons
            .get(*lang)
            .ok_or_else(|| Error::Config(format!("no lexicon for language `{lang}`")))?;
        if lexicon.is_empty() {
            return Err(Error::Config(format!("empty lexicon for language `{lang}`")));
        }
        for w in lexicon {
            check_symbol("word", w)?;
            words.insert(w.clone());
        }
    }
    for t in &entity_types {
        check_symbol("entity type", t)?;
    }

    let mut tokens: Vec<String> = words.into_iter().collect();
    let num_words = tokens.len();
    let scd = tokens.len() as u32;
    tokens.push(SCD_TOKEN.into());
    let ep = tokens.len() as u32;
    tokens.push(EP_TOKEN.into());
    let ne_open_base = tokens.len() as u32;
    tokens.extend(entity_types.iter().map(|t| format!("<ne:{t}>")));
    let ne_close = tokens.len() as u32;
    tokens.push(NE_CLOSE_TOKEN.into());
    let lid_base = tokens.len() as u32;
    tokens.extend(languages.iter().map(|l| format!("<lid:{l}>")));
    let blank = tokens.len() as u32;
    tokens.push(BLANK_TOKEN.into());

    let index = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i as u32))
        .collect();
    Ok(TokenVocab {
        config: config.clone(),
        tokens,
        index,
        num_words,
        entity_types: entity_types.into_iter().cloned().collect(),
        languages: languages.into_iter().cloned().collect(),
        scd,
        ep,
        ne_open_base,
        ne_close,
        lid_base,
        blank,
    })
}

impl TokenVocab {
    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    /// Total number of ids including the blank.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Number of emittable (non-blank) symbols.
    pub fn num_symbols(&self) -> usize {
        self.tokens.len() - 1
    }

    pub fn num_words(&self) -> usize {
        self.num_words
    }

    pub fn blank(&self) -> u32 {
        self.blank
    }

    pub fn scd(&self) -> u32 {
        self.scd
    }

    pub fn ep(&self) -> u32 {
        self.ep
    }

    pub fn ne_close(&self) -> u32 {
        self.ne_close
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn entity_types(&self) -> &[String] {
        &self.entity_types
    }

    pub fn ne_open(&self, entity_type: &str) -> Option<u32> {
        self.entity_types
            .iter()
            .position(|t| t == entity_type)
            .map(|i| self.ne_open_base + i as u32)
    }

    pub fn lid(&self, language: &str) -> Option<u32> {
        self.languages
            .iter()
            .position(|l| l == language)
            .map(|i| self.lid_base + i as u32)
    }

    pub fn word_id(&self, word: &str) -> Option<u32> {
        self.index
            .get(word)
            .copied()
            .filter(|&id| (id as usize) < self.num_words)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn kind(&self, id: u32) -> Option<TokenKind> {
        let i = id as usize;
        if i < self.num_words {
            Some(TokenKind::Word)
        } else if id == self.scd {
            Some(TokenKind::Task(TaskId::Scd))
        } else if id == self.ep {
            Some(TokenKind::Task(TaskId::Endpoint))
        } else if id >= self.ne_open_base && id <= self.ne_close {
            Some(TokenKind::Task(TaskId::Ner))
        } else if id >= self.lid_base && id < self.blank {
            Some(TokenKind::Task(TaskId::Lid))
        } else if id == self.blank {
            Some(TokenKind::Blank)
        } else {
            None
        }
    }

    /// Task a token belongs to, if it is a task token.
    pub fn task_of(&self, id: u32) -> Option<TaskId> {
        match self.kind(id) {
            Some(TokenKind::Task(t)) => Some(t),
            _ => None,
        }
    }

    pub fn is_word(&self, id: u32) -> bool {
        (id as usize) < self.num_words
    }

    /// Every token id belonging to `task`.
    pub fn task_tokens(&self, task: TaskId) -> Vec<u32> {
        (0..self.blank).filter(|&id| self.task_of(id) == Some(task)).collect()
    }

    pub fn render(&self, ids: &[u32]) -> String {
        ids.iter()
            .map(|&id| self.token(id).unwrap_or("<unk>"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Parse a whitespace separated token string produced by [`Self::render`].
    pub fn parse_line(&self, line: &str) -> Result<Vec<u32>> {
        line.split_whitespace()
            .map(|t| {
                self.id(t)
                    .ok_or_else(|| Error::Unknown(format!("token `{t}`")))
            })
            .collect()
    }
}

/// Feature frames of one utterance, row-major `rows x dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frames {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl Frames {
    pub fn new(rows: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(Error::Shape(format!(
                "frames buffer of {} values is not {rows}x{dim}",
                data.len()
            )));
        }
        Ok(Frames { rows, dim, data })
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    #[serde(rename = "type")]
    pub label: String,
    /// First word of the span.
    pub start: usize,
    /// One past the last word.
    pub end: usize,
}

/// One utterance with optional per-task annotations. A field is present
/// exactly when its task is in `available`.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedUtterance {
    pub id: String,
    pub frames: Frames,
    pub words: Vec<String>,
    pub lang: Option<String>,
    pub scd_gaps: Option<Vec<usize>>,
    pub ep_gaps: Option<Vec<usize>>,
    pub spans: Option<Vec<EntitySpan>>,
    pub available: TaskSet,
}

fn check_gaps(name: &str, gaps: &[usize], words: usize) -> Result<()> {
    if gaps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!("{name} gaps must be strictly increasing")));
    }
    if gaps.iter().any(|&g| g > words) {
        return Err(Error::Config(format!("{name} gap beyond word count {words}")));
    }
    Ok(())
}

impl AnnotatedUtterance {
    /// Check the presence and bounds invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.words.len();
        let presence = [
            (TaskId::Lid, self.lang.is_some()),
            (TaskId::Scd, self.scd_gaps.is_some()),
            (TaskId::Endpoint, self.ep_gaps.is_some()),
            (TaskId::Ner, self.spans.is_some()),
        ];
        for (task, present) in presence {
            if present != self.available.contains(task) {
                return Err(Error::Config(format!(
                    "utterance {}: {task} annotation presence disagrees with available={}",
                    self.id, self.available
                )));
            }
        }
        if let Some(g) = &self.scd_gaps {
            check_gaps("scd", g, n)?;
        }
        if let Some(g) = &self.ep_gaps {
            check_gaps("ep", g, n)?;
        }
        if let Some(spans) = &self.spans {
            let mut prev_end = 0;
            for s in spans {
                if s.start >= s.end || s.end > n || s.start < prev_end {
                    return Err(Error::Config(format!(
                        "utterance {}: entity spans must be non-empty, ordered, non-overlapping and in bounds",
                        self.id
                    )));
                }
                prev_end = s.end;
            }
        }
        Ok(())
    }
}

/// Structures recovered from a token sequence.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TaskPredictions {
    pub words: Vec<String>,
    pub lang: Option<String>,
    pub scd_gaps: Vec<usize>,
    pub ep_gaps: Vec<usize>,
    pub spans: Vec<EntitySpan>,
    pub malformed: usize,
}

impl TaskPredictions {
    /// What a perfect parse of `encode_reference(utt, active)` yields.
    pub fn expected(utt: &AnnotatedUtterance, active: TaskSet) -> Self {
        let pick = |t: TaskId, v: &Option<Vec<usize>>| {
            if active.contains(t) {
                v.clone().unwrap_or_default()
            } else {
                Vec::new()
            }
        };
        TaskPredictions {
            words: utt.words.clone(),
            lang: if active.contains(TaskId::Lid) { utt.lang.clone() } else { None },
            scd_gaps: pick(TaskId::Scd, &utt.scd_gaps),
            ep_gaps: pick(TaskId::Endpoint, &utt.ep_gaps),
            spans: if active.contains(TaskId::Ner) {
                utt.spans.clone().unwrap_or_default()
            } else {
                Vec::new()
            },
            malformed: 0,
        }
    }

    /// Spans as `(type, surface words joined by a space)`.
    pub fn span_surfaces(&self) -> Vec<(String, String)> {
        span_surfaces(&self.words, &self.spans)
    }
}

pub fn span_surfaces(words: &[String], spans: &[EntitySpan]) -> Vec<(String, String)> {
    spans
        .iter()
        .filter(|s| s.start < s.end && s.end <= words.len())
        .map(|s| (s.label.clone(), words[s.start..s.end].join(" ")))
        .collect()
}

/// Build the target token sequence of `utt` with the tasks in `active`.
pub fn encode_reference(
    utt: &AnnotatedUtterance,
    active: TaskSet,
    vocab: &TokenVocab,
) -> Result<Vec<u32>> {
    if !active.is_subset_of(utt.available) {
        return Err(Error::UnavailableTasks {
            requested: active.to_string(),
            available: utt.available.to_string(),
        });
    }
    let n = utt.words.len();
    let mut out = Vec::with_capacity(n + 8);

    if active.contains(TaskId::Lid) {
        let lang = utt.lang.as_deref().unwrap_or_default();
        out.push(
            vocab
                .lid(lang)
                .ok_or_else(|| Error::Unknown(format!("language `{lang}`")))?,
        );
    }

    let gap_flags = |task: TaskId, gaps: &Option<Vec<usize>>| -> Vec<bool> {
        let mut flags = vec![false; n + 1];
        if active.contains(task) {
            for &g in gaps.iter().flatten() {
                if g <= n {
                    flags[g] = true;
                }
            }
        }
        flags
    };
    let scd = gap_flags(TaskId::Scd, &utt.scd_gaps);
    let ep = gap_flags(TaskId::Endpoint, &utt.ep_gaps);

    let mut opens: Vec<Option<u32>> = vec![None; n + 1];
    let mut closes = vec![false; n + 1];
    if active.contains(TaskId::Ner) {
        for s in utt.spans.iter().flatten() {
            let tag = vocab
                .ne_open(&s.label)
                .ok_or_else(|| Error::Unknown(format!("entity type `{}`", s.label)))?;
            opens[s.start] = Some(tag);
            closes[s.end] = true;
        }
    }

    for gap in 0..=n {
        if closes[gap] {
            out.push(vocab.ne_close());
        }
        if scd[gap] {
            out.push(vocab.scd());
        }
        if ep[gap] {
            out.push(vocab.ep());
        }
        if let Some(tag) = opens[gap] {
            out.push(tag);
        }
        if gap < n {
            let w = &utt.words[gap];
            out.push(
                vocab
                    .word_id(w)
                    .ok_or_else(|| Error::Unknown(format!("word `{w}`")))?,
            );
        }
    }
    Ok(out)
}

/// Recover words and task structures from arbitrary decoder output. Never
/// fails; anything that does not fit the grammar is counted in
/// `malformed`.
pub fn parse_hypothesis(tokens: &[u32], vocab: &TokenVocab) -> TaskPredictions {
    let mut p = TaskPredictions::default();
    let mut open: Option<(String, usize)> = None;
    for &id in tokens {
        let gap = p.words.len();
        match vocab.kind(id) {
            Some(TokenKind::Word) => p.words.push(vocab.tokens[id as usize].clone()),
            Some(TokenKind::Task(TaskId::Scd)) => p.scd_gaps.push(gap),
            Some(TokenKind::Task(TaskId::Endpoint)) => p.ep_gaps.push(gap),
            Some(TokenKind::Task(TaskId::Lid)) => {
                if p.lang.is_none() {
                    let idx = (id - vocab.lid_base) as usize;
                    p.lang = Some(vocab.languages[idx].clone());
                } else {
                    p.malformed += 1;
                }
            }
            Some(TokenKind::Task(TaskId::Ner)) if id == vocab.ne_close => match open.take() {
                Some((label, start)) if start < gap => p.spans.push(EntitySpan {
                    label,
                    start,
                    end: gap,
                }),
                _ => p.malformed += 1,
            },
            Some(TokenKind::Task(TaskId::Ner)) => {
                if open.is_some() {
                    p.malformed += 1;
                }
                let label = vocab.entity_types[(id - vocab.ne_open_base) as usize].clone();
                open = Some((label, gap));
            }
            Some(TokenKind::Task(TaskId::Asr)) | Some(TokenKind::Blank) | None => {
                p.malformed += 1
            }
        }
    }
    if open.is_some() {
        p.malformed += 1;
    }
    p
}

/// Drop every non-word token, keeping order.
pub fn strip_task_tokens(tokens: &[u32], vocab: &TokenVocab) -> Vec<u32> {
    tokens.iter().copied().filter(|&id| vocab.is_word(id)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(langs: &[(&str, &[&str])], types: &[&str]) -> CodecConfig {
        CodecConfig {
            languages: langs.iter().map(|(l, _)| l.to_string()).collect(),
            entity_types: types.iter().map(|t| t.to_string()).collect(),
            lexicons: langs
                .iter()
                .map(|(l, ws)| (l.to_string(), ws.iter().map(|w| w.to_string()).collect()))
                .collect(),
        }
    }

    fn utt(words: &[&str]) -> AnnotatedUtterance {
        AnnotatedUtterance {
            id: "u".into(),
            frames: Frames::new(0, 1, vec![]).unwrap(),
            words: words.iter().map(|w| w.to_string()).collect(),
            lang: None,
            scd_gaps: None,
            ep_gaps: None,
            spans: None,
            available: TaskSet::primary_only(),
        }
    }

    #[test]
    fn vocab_size_single_language() {
        let v = build_vocab(&cfg(&[("en", &["a", "b"])], &["PER"])).unwrap();
        assert_eq!(v.len(), 8);
        assert_eq!(v.blank(), 7);
        assert_eq!(v.token(v.blank()), Some(BLANK_TOKEN));
        assert_eq!(v.tokens()[..2], ["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn vocab_errors() {
        assert!(build_vocab(&cfg(&[], &[])).is_err());
        assert!(build_vocab(&cfg(&[("en", &["a"])], &["PER", "PER"])).is_err());
        assert!(build_vocab(&cfg(&[("en", &[])], &[])).is_err());
        assert!(build_vocab(&cfg(&[("en", &["<x>"])], &[])).is_err());
    }

    #[test]
    fn shared_word_appears_once() {
        let v = build_vocab(&cfg(&[("en", &["ok", "yes"]), ("fr", &["ok", "oui"])], &[])).unwrap();
        assert_eq!(v.num_words(), 3);
        assert_eq!(v.tokens().iter().filter(|t| *t == "ok").count(), 1);
    }

    #[test]
    fn partition_is_total() {
        let v = build_vocab(&cfg(&[("en", &["a", "b"]), ("de", &["c"])], &["PER", "LOC"])).unwrap();
        for id in 0..v.len() as u32 {
            assert!(v.kind(id).is_some(), "id {id} unclassified");
        }
        assert_eq!(v.kind(v.len() as u32), None);
        assert_eq!(v.task_tokens(TaskId::Ner).len(), 3);
        assert_eq!(v.task_tokens(TaskId::Lid).len(), 2);
    }

    #[test]
    fn encode_identity_and_lid() {
        let v = build_vocab(&cfg(&[("en", &["hello", "world", "hi", "there"])], &[])).unwrap();
        let u = utt(&["hello", "world"]);
        let ids = encode_reference(&u, TaskSet::primary_only(), &v).unwrap();
        assert_eq!(v.render(&ids), "hello world");

        let mut u = utt(&["hi", "there"]);
        u.lang = Some("en".into());
        u.available = TaskSet::from_tasks([TaskId::Lid]);
        let ids = encode_reference(&u, u.available, &v).unwrap();
        assert_eq!(v.render(&ids), "<lid:en> hi there");
    }

    #[test]
    fn encode_all_tasks_ordering() {
        let v = build_vocab(&cfg(&[("L", &["a", "b"])], &["PER"])).unwrap();
        let mut u = utt(&["a", "b"]);
        u.lang = Some("L".into());
        u.scd_gaps = Some(vec![1]);
        u.ep_gaps = Some(vec![2]);
        u.spans = Some(vec![EntitySpan { label: "PER".into(), start: 0, end: 1 }]);
        u.available = TaskSet::all(NUM_AUX_TASKS);
        u.validate().unwrap();
        let ids = encode_reference(&u, u.available, &v).unwrap();
        assert_eq!(v.render(&ids), "<lid:L> <ne:PER> a </ne> <scd> b <ep>");
        let back = parse_hypothesis(&ids, &v);
        assert_eq!(back, TaskPredictions::expected(&u, u.available));
    }

    #[test]
    fn encode_rejects_unavailable() {
        let v = build_vocab(&cfg(&[("en", &["a"])], &[])).unwrap();
        let u = utt(&["a"]);
        let err = encode_reference(&u, TaskSet::from_tasks([TaskId::Scd]), &v);
        assert!(matches!(err, Err(Error::UnavailableTasks { .. })));
    }

    #[test]
    fn parse_handles_garbage() {
        let v = build_vocab(&cfg(&[("en", &["a", "hi", "there"])], &["PER"])).unwrap();
        let lid = v.lid("en").unwrap();
        let p = parse_hypothesis(&[lid, v.word_id("hi").unwrap(), v.word_id("there").unwrap()], &v);
        assert_eq!(p.lang.as_deref(), Some("en"));
        assert_eq!(p.words, vec!["hi", "there"]);

        let open = v.ne_open("PER").unwrap();
        let p = parse_hypothesis(&[open, v.word_id("a").unwrap()], &v);
        assert_eq!(p.words, vec!["a"]);
        assert!(p.spans.is_empty());
        assert_eq!(p.malformed, 1);

        let p = parse_hypothesis(&[v.ne_close(), open, v.ne_close(), v.blank(), 999], &v);
        assert_eq!(p.malformed, 4);
        assert!(p.spans.is_empty());
    }

    #[test]
    fn strip_keeps_words() {
        let v = build_vocab(&cfg(&[("en", &["a", "b"])], &[])).unwrap();
        let a = v.word_id("a").unwrap();
        let b = v.word_id("b").unwrap();
        let seq = [v.lid("en").unwrap(), a, v.scd(), b, v.ep()];
        assert_eq!(strip_task_tokens(&seq, &v), vec![a, b]);
        assert!(strip_task_tokens(&[], &v).is_empty());
    }

    #[test]
    fn taskset_encoding() {
        let s = TaskSet::from_tasks([TaskId::Scd]);
        assert_eq!(s.combination_index(4).unwrap(), 1);
        let s = TaskSet::from_tasks([TaskId::Scd, TaskId::Ner]);
        assert_eq!(s.combination_index(4).unwrap(), 5);
        assert_eq!(TaskSet::all(4).combination_index(4).unwrap(), 15);
        assert_eq!(TaskSet::primary_only().combination_index(0).unwrap(), 0);
        assert!(TaskSet::all(4).combination_index(3).is_err());
        assert!(TaskSet::from_bits(2).is_err());
        assert_eq!(TaskSet::parse_list("asr,scd,ep").unwrap().to_string(), "asr+scd+ep");
        assert!(TaskSet::parse_list("asr,pos").is_err());
        for (i, s) in TaskSet::enumerate(4).into_iter().enumerate() {
            assert_eq!(s.combination_index(4).unwrap(), i);
            assert_eq!(TaskSet::from_combination_index(i, 4).unwrap(), s);
        }
    }

    #[test]
    fn validate_catches_bad_annotations() {
        let mut u = utt(&["a", "b"]);
        u.available = TaskSet::from_tasks([TaskId::Ner]);
        assert!(u.validate().is_err());
        u.spans = Some(vec![
            EntitySpan { label: "X".into(), start: 0, end: 2 },
            EntitySpan { label: "X".into(), start: 1, end: 2 },
        ]);
        assert!(u.validate().is_err());
        u.spans = Some(vec![EntitySpan { label: "X".into(), start: 0, end: 2 }]);
        u.validate().unwrap();
    }
}
