//! Decoding whole splits and the strategy/position/task-subset ablation.

use serde::{Deserialize, Serialize};

use crate::activation::{ActivationPosition, ActivationStrategy};
use crate::codec::{build_vocab, AnnotatedUtterance, TaskSet, TokenVocab};
use crate::data::{Corpus, Split};
use crate::error::Result;
use crate::metrics::{evaluate, MetricReport};
use crate::model::{beam_decode, greedy_decode, TransducerModel};
use crate::train::{train, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeOptions {
    pub tasks: TaskSet,
    /// 1 selects greedy decoding.
    pub beam: usize,
    pub max_symbols_per_frame: usize,
}

pub fn decode_one(model: &TransducerModel, utt: &AnnotatedUtterance, opts: &DecodeOptions) -> Result<Vec<u32>> {
    let frames = model.frames_to_mat(&utt.frames)?;
    let h = model.encode(&frames, opts.tasks)?;
    if opts.beam <= 1 {
        return Ok(greedy_decode(model, &h, opts.max_symbols_per_frame).tokens);
    }
    let hyps = beam_decode(model, &h, opts.beam, opts.max_symbols_per_frame)?;
    Ok(hyps.into_iter().next().map(|h| h.tokens).unwrap_or_default())
}

/// Decode every utterance; results are in input order.
pub fn decode_all(model: &TransducerModel, utts: &[&AnnotatedUtterance], opts: &DecodeOptions) -> Result<Vec<Vec<u32>>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        utts.par_iter().map(|u| decode_one(model, u, opts)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        utts.iter().map(|u| decode_one(model, u, opts)).collect()
    }
}

/// Evaluate `model` on `utts` once per auxiliary subset, in combination
/// index order.
pub fn evaluate_subsets(
    model: &TransducerModel,
    utts: &[&AnnotatedUtterance],
    vocab: &TokenVocab,
    beam: usize,
    max_symbols_per_frame: usize,
) -> Result<Vec<MetricReport>> {
    TaskSet::enumerate(model.config().num_aux)
        .into_iter()
        .map(|tasks| {
            let opts = DecodeOptions {
                tasks,
                beam,
                max_symbols_per_frame,
            };
            evaluate(utts, &decode_all(model, utts, &opts)?, tasks, vocab)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub strategies: Vec<ActivationStrategy>,
    pub positions: Vec<ActivationPosition>,
    pub beam: usize,
    pub train: TrainConfig,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            strategies: ActivationStrategy::ALL.to_vec(),
            positions: ActivationPosition::ALL.to_vec(),
            beam: 4,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridRow {
    pub strategy: ActivationStrategy,
    pub position: ActivationPosition,
    pub best_dev_wer: f64,
    pub report: MetricReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubsetRow {
    pub strategy: ActivationStrategy,
    pub position: ActivationPosition,
    pub report: MetricReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationResult {
    pub grid: Vec<GridRow>,
    pub subsets: Vec<SubsetRow>,
}

/// Human-readable list of the runs an ablation would perform.
pub fn plan(cfg: &AblationConfig) -> Vec<String> {
    let mut out = Vec::new();
    for &s in &cfg.strategies {
        for &p in &cfg.positions {
            out.push(format!(
                "train {s} @ {p}: {} epochs, evaluate test with all tasks",
                cfg.train.epochs
            ));
        }
    }
    for &s in &cfg.strategies {
        out.push(format!(
            "decode test with all {} task subsets using the best {s} position",
            1usize << crate::codec::NUM_AUX_TASKS
        ));
    }
    out
}

/// Train every strategy/position pair, then sweep all task subsets for the
/// position with the lowest dev WER of each strategy.
pub fn run_ablation(
    corpus: &Corpus,
    corpus_hash: &str,
    cfg: &AblationConfig,
    on_run: &mut dyn FnMut(&str),
) -> Result<AblationResult> {
    let vocab = build_vocab(&corpus.codec)?;
    let test = corpus.split_vec(Split::Test);
    let all = TaskSet::all(crate::codec::NUM_AUX_TASKS);
    let mut grid = Vec::new();
    let mut models = Vec::new();
    for &strategy in &cfg.strategies {
        for &position in &cfg.positions {
            on_run(&format!("training {strategy} @ {position}"));
            let mut train_cfg = cfg.train.clone();
            train_cfg.model.strategy = strategy;
            train_cfg.model.position = position;
            let out = train(corpus, corpus_hash, &train_cfg, &mut |_| {})?;
            let opts = DecodeOptions {
                tasks: all,
                beam: cfg.beam,
                max_symbols_per_frame: train_cfg.max_symbols_per_frame,
            };
            let report = evaluate(&test, &decode_all(&out.model, &test, &opts)?, all, &vocab)?;
            grid.push(GridRow {
                strategy,
                position,
                best_dev_wer: out.manifest.best_dev_wer,
                report,
            });
            models.push(out.model);
        }
    }
    let mut subsets = Vec::new();
    for &strategy in &cfg.strategies {
        let best = grid
            .iter()
            .enumerate()
            .filter(|(_, r)| r.strategy == strategy)
            .min_by(|a, b| a.1.best_dev_wer.total_cmp(&b.1.best_dev_wer))
            .map(|(i, _)| i);
        let Some(i) = best else { continue };
        on_run(&format!("task subsets for {strategy} @ {}", grid[i].position));
        for report in evaluate_subsets(&models[i], &test, &vocab, cfg.beam, cfg.train.max_symbols_per_frame)? {
            subsets.push(SubsetRow {
                strategy,
                position: grid[i].position,
                report,
            });
        }
    }
    Ok(AblationResult { grid, subsets })
}

fn kv_get<'a>(kv: &'a [(String, String)], key: &str) -> &'a str {
    kv.iter().find(|(k, _)| k == key).map_or("--", |(_, v)| v.as_str())
}

fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<String>| -> String {
        let mut s = String::new();
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                s.push_str(" | ");
            }
            s.push_str(&format!("{c:<w$}", w = width[i]));
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header.iter().map(|s| s.to_string()).collect());
    out.push_str(&line(width.iter().map(|w| "-".repeat(*w)).collect()));
    for r in rows {
        out.push_str(&line(r.clone()));
    }
    out
}

const METRIC_COLUMNS: [(&str, &str); 5] = [
    ("WER", "wer"),
    ("SCD F1", "scd_f1"),
    ("EP F1", "ep_f1"),
    ("NER F1", "ner_f1"),
    ("LID Acc", "lid_acc"),
];

/// Strategy x position table from flat metric maps.
pub fn grid_table(rows: &[(String, String, Vec<(String, String)>)]) -> String {
    let mut header = vec!["Strategy", "Position"];
    header.extend(METRIC_COLUMNS.iter().map(|c| c.0));
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(s, p, kv)| {
            let mut r = vec![s.clone(), p.clone()];
            r.extend(METRIC_COLUMNS.iter().map(|c| kv_get(kv, c.1).to_string()));
            r
        })
        .collect();
    render_table(&header, &body)
}

/// Task-subset table grouped by the number of active auxiliary tasks,
/// with the inactive-task-token column.
pub fn subset_table(rows: &[(String, Vec<(String, String)>)]) -> String {
    let mut header = vec!["Active tasks"];
    header.extend(METRIC_COLUMNS.iter().map(|c| c.0));
    header.push("ITT");
    let mut sorted: Vec<&(String, Vec<(String, String)>)> = rows.iter().collect();
    sorted.sort_by_key(|(tasks, _)| tasks.matches('+').count());
    let mut body = Vec::new();
    let mut group = usize::MAX;
    for (tasks, kv) in sorted {
        let n = tasks.matches('+').count();
        if n != group && group != usize::MAX {
            body.push(vec![String::new(); header.len()]);
        }
        group = n;
        let mut r = vec![tasks.clone()];
        r.extend(METRIC_COLUMNS.iter().map(|c| kv_get(kv, c.1).to_string()));
        r.push(kv_get(kv, "itt").to_string());
        body.push(r);
    }
    render_table(&header, &body)
}

impl AblationResult {
    pub fn grid_table(&self) -> String {
        let rows: Vec<_> = self
            .grid
            .iter()
            .map(|r| (r.strategy.to_string(), r.position.to_string(), r.report.to_kv()))
            .collect();
        grid_table(&rows)
    }

    pub fn subset_tables(&self) -> String {
        let mut out = String::new();
        let mut strategies: Vec<ActivationStrategy> = Vec::new();
        for r in &self.subsets {
            if !strategies.contains(&r.strategy) {
                strategies.push(r.strategy);
            }
        }
        for s in strategies {
            let rows: Vec<_> = self.subsets.iter().filter(|r| r.strategy == s).collect();
            out.push_str(&format!("{s} @ {}\n", rows[0].position));
            let kv: Vec<_> = rows.iter().map(|r| (r.report.tasks.to_string(), r.report.to_kv())).collect();
            out.push_str(&subset_table(&kv));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_covers_grid_and_sweeps() {
        let p = plan(&AblationConfig::default());
        assert_eq!(p.len(), 6 + 2);
        assert!(p[0].contains("per_combination @ after_feature_encoder"));
    }

    #[test]
    fn subset_table_groups_by_size() {
        let kv = |wer: &str, scd: &str| vec![("wer".to_string(), wer.to_string()), ("scd_f1".to_string(), scd.to_string())];
        let rows = vec![
            ("asr+scd".to_string(), kv("0.1", "0.5")),
            ("asr".to_string(), kv("0.2", "--")),
            ("asr+ep".to_string(), kv("0.3", "--")),
        ];
        let t = subset_table(&rows);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[2].starts_with("asr "));
        assert!(lines[3].trim_matches(|c| c == ' ' || c == '|').is_empty());
        assert!(lines[4].starts_with("asr+scd"));
        assert!(t.contains("--"));
    }
}
