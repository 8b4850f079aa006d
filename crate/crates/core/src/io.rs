//! On-disk corpus, hypothesis and metrics files.
//!
//! A corpus directory holds:
//!
//! * `corpus.jsonl`: one JSON object per utterance with fields `id`,
//!   `split`, `frames_ref`, `words`, optional `lang`, `scd_gaps`,
//!   `ep_gaps`, `spans` (`{"type", "start", "end"}`) and `available` (task
//!   names). `frames_ref` is either `{"file", "offset", "rows", "dim"}`
//!   pointing into the frames sidecar (byte offset) or `{"inline": [[..]]}`.
//! * `frames.bin`: little-endian `f32`, row-major, utterances back to back.
//! * `frames.idx`: `id<TAB>byte offset<TAB>rows<TAB>dim` per utterance.
//! * `manifest.json`: codec configuration, optional generator config,
//!   per-split counts and the content hash.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::{AnnotatedUtterance, CodecConfig, EntitySpan, Frames, TaskSet, TokenVocab};
use crate::data::{Corpus, CorpusEntry, GenConfig, Split};
use crate::error::{Error, Result};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const FRAMES_FILE: &str = "frames.bin";
pub const FRAMES_INDEX: &str = "frames.idx";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FramesRef {
    File {
        file: String,
        offset: u64,
        rows: usize,
        dim: usize,
    },
    Inline {
        inline: Vec<Vec<f32>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub split: Split,
    pub frames_ref: FramesRef,
    pub words: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scd_gaps: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ep_gaps: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spans: Option<Vec<EntitySpan>>,
    pub available: TaskSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub codec: CodecConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GenConfig>,
    pub counts: BTreeMap<String, usize>,
    pub hash: String,
}

struct Serialized {
    jsonl: Vec<u8>,
    frames: Vec<u8>,
    index: String,
}

fn serialize(corpus: &Corpus) -> Result<Serialized> {
    let mut jsonl = Vec::new();
    let mut frames = Vec::new();
    let mut index = String::new();
    for CorpusEntry { split, utt } in &corpus.entries {
        let offset = frames.len() as u64;
        for x in &utt.frames.data {
            frames.extend_from_slice(&x.to_le_bytes());
        }
        index.push_str(&format!("{}\t{}\t{}\t{}\n", utt.id, offset, utt.frames.rows, utt.frames.dim));
        let rec = CorpusRecord {
            id: utt.id.clone(),
            split: *split,
            frames_ref: FramesRef::File {
                file: FRAMES_FILE.into(),
                offset,
                rows: utt.frames.rows,
                dim: utt.frames.dim,
            },
            words: utt.words.clone(),
            lang: utt.lang.clone(),
            scd_gaps: utt.scd_gaps.clone(),
            ep_gaps: utt.ep_gaps.clone(),
            spans: utt.spans.clone(),
            available: utt.available,
        };
        serde_json::to_writer(&mut jsonl, &rec)?;
        jsonl.push(b'\n');
    }
    Ok(Serialized { jsonl, frames, index })
}

fn hash_of(s: &Serialized, codec: &CodecConfig) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(codec)?);
    h.update(&s.jsonl);
    h.update(&s.frames);
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Content hash over codec, records and frames.
pub fn corpus_hash(corpus: &Corpus) -> Result<String> {
    hash_of(&serialize(corpus)?, &corpus.codec)
}

pub fn write_corpus(dir: &Path, corpus: &Corpus, generator: Option<&GenConfig>) -> Result<CorpusManifest> {
    fs::create_dir_all(dir)?;
    let s = serialize(corpus)?;
    let mut counts = BTreeMap::new();
    for split in Split::ALL {
        counts.insert(split.name().to_string(), corpus.split(split).count());
    }
    let manifest = CorpusManifest {
        codec: corpus.codec.clone(),
        generator: generator.cloned(),
        counts,
        hash: hash_of(&s, &corpus.codec)?,
    };
    fs::write(dir.join(CORPUS_FILE), &s.jsonl)?;
    fs::write(dir.join(FRAMES_FILE), &s.frames)?;
    fs::write(dir.join(FRAMES_INDEX), s.index)?;
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

fn read_frames(dir: &Path, r: &FramesRef, cache: &mut BTreeMap<String, Vec<u8>>, id: &str) -> Result<Frames> {
    match r {
        FramesRef::Inline { inline } => {
            let dim = inline.first().map_or(0, Vec::len);
            if inline.iter().any(|row| row.len() != dim) {
                return Err(Error::format(dir.join(CORPUS_FILE), format!("{id}: ragged inline frames")));
            }
            Frames::new(inline.len(), dim, inline.concat())
        }
        FramesRef::File { file, offset, rows, dim } => {
            if !cache.contains_key(file) {
                cache.insert(file.clone(), fs::read(dir.join(file))?);
            }
            let bytes = &cache[file];
            let start = *offset as usize;
            let end = start + rows * dim * 4;
            if end > bytes.len() || start % 4 != 0 {
                return Err(Error::format(dir.join(file), format!("{id}: frame range out of bounds")));
            }
            let data = bytes[start..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            Frames::new(*rows, *dim, data)
        }
    }
}

pub fn read_manifest(dir: &Path) -> Result<CorpusManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::format(&path, e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
}

pub fn read_corpus(dir: &Path) -> Result<(Corpus, CorpusManifest)> {
    let manifest = read_manifest(dir)?;
    let path = dir.join(CORPUS_FILE);
    let file = fs::File::open(&path).map_err(|e| Error::format(&path, e.to_string()))?;
    let mut cache = BTreeMap::new();
    let mut entries = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord =
            serde_json::from_str(&line).map_err(|e| Error::format(&path, format!("line {}: {e}", n + 1)))?;
        let frames = read_frames(dir, &rec.frames_ref, &mut cache, &rec.id)?;
        let utt = AnnotatedUtterance {
            id: rec.id,
            frames,
            words: rec.words,
            lang: rec.lang,
            scd_gaps: rec.scd_gaps,
            ep_gaps: rec.ep_gaps,
            spans: rec.spans,
            available: rec.available,
        };
        utt.validate()
            .map_err(|e| Error::format(&path, format!("line {}: {e}", n + 1)))?;
        entries.push(CorpusEntry { split: rec.split, utt });
    }
    Ok((
        Corpus {
            codec: manifest.codec.clone(),
            entries,
        },
        manifest,
    ))
}

/// One line per utterance: `id<TAB>space-joined token strings`.
pub fn write_hypotheses(path: &Path, ids: &[&str], hyps: &[Vec<u32>], vocab: &TokenVocab) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for (id, h) in ids.iter().zip(hyps) {
        writeln!(out, "{id}\t{}", vocab.render(h))?;
    }
    out.flush()?;
    Ok(())
}

pub fn parse_hypotheses(text: &str, vocab: &TokenVocab) -> Result<Vec<(String, Vec<u32>)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            let (id, toks) = l.split_once('\t').unwrap_or((l, ""));
            let ids = vocab
                .parse_line(toks)
                .map_err(|e| Error::Config(format!("hypothesis line {}: {e}", n + 1)))?;
            Ok((id.trim().to_string(), ids))
        })
        .collect()
}

pub fn read_hypotheses(path: &Path, vocab: &TokenVocab) -> Result<Vec<(String, Vec<u32>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::format(path, e.to_string()))?;
    let hyps = parse_hypotheses(&text, vocab)?;
    if hyps.is_empty() {
        return Err(Error::format(path, "no hypotheses"));
    }
    Ok(hyps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::build_vocab;
    use crate::data::gen_corpus;

    fn small() -> GenConfig {
        GenConfig {
            train_size: 10,
            dev_size: 3,
            test_size: 3,
            ..GenConfig::default()
        }
    }

    #[test]
    fn corpus_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = gen_corpus(&small()).unwrap();
        let m = write_corpus(dir.path(), &corpus, Some(&small())).unwrap();
        let (back, m2) = read_corpus(dir.path()).unwrap();
        assert_eq!(back, corpus);
        assert_eq!(m, m2);
        assert_eq!(corpus_hash(&back).unwrap(), m.hash);
        assert_eq!(m.counts["train-partial"], 5);
        let idx = fs::read_to_string(dir.path().join(FRAMES_INDEX)).unwrap();
        assert_eq!(idx.lines().count(), corpus.len());
    }

    #[test]
    fn same_seed_same_hash() {
        let a = corpus_hash(&gen_corpus(&small()).unwrap()).unwrap();
        let b = corpus_hash(&gen_corpus(&small()).unwrap()).unwrap();
        let c = corpus_hash(&gen_corpus(&GenConfig { seed: 9, ..small() }).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn inline_frames_and_absent_fields() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = gen_corpus(&small()).unwrap();
        write_corpus(dir.path(), &corpus, None).unwrap();
        let line = r#"{"id":"x","split":"test","frames_ref":{"inline":[[1.0,2.0],[3.0,4.0]]},"words":["a"],"available":["asr"]}"#;
        fs::write(dir.path().join(CORPUS_FILE), format!("{line}\n")).unwrap();
        let (back, _) = read_corpus(dir.path()).unwrap();
        let u = &back.entries[0].utt;
        assert_eq!((u.frames.rows, u.frames.dim), (2, 2));
        assert_eq!(u.lang, None);
        assert_eq!(u.available, TaskSet::primary_only());

        let bad = r#"{"id":"x","split":"test","frames_ref":{"inline":[[1.0]]},"words":["a"],"lang":"en","available":["asr"]}"#;
        fs::write(dir.path().join(CORPUS_FILE), format!("{bad}\n")).unwrap();
        assert!(read_corpus(dir.path()).is_err());
    }

    #[test]
    fn hypothesis_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = gen_corpus(&small()).unwrap();
        let vocab = build_vocab(&corpus.codec).unwrap();
        let hyps = vec![vec![vocab.scd(), 0, 1], vec![]];
        let path = dir.path().join("h.txt");
        write_hypotheses(&path, &["a", "b"], &hyps, &vocab).unwrap();
        let back = read_hypotheses(&path, &vocab).unwrap();
        assert_eq!(back, vec![("a".to_string(), hyps[0].clone()), ("b".to_string(), vec![])]);
        fs::write(&path, "").unwrap();
        assert!(read_hypotheses(&path, &vocab).is_err());
    }
}
