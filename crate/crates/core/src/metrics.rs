//! Word error rate, alignment-based task-token F1, exact-match entity F1,
//! language accuracy and inactive-task-token counts.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::codec::{
    encode_reference, parse_hypothesis, span_surfaces, AnnotatedUtterance, TaskId, TaskSet, TokenVocab,
};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EditOp {
    Match,
    Sub,
    Del,
    Ins,
}

/// One step of an alignment with the positions it consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AlignStep {
    pub op: EditOp,
    pub ref_pos: Option<usize>,
    pub hyp_pos: Option<usize>,
}

fn edit_table<T: PartialEq>(r: &[T], h: &[T]) -> Vec<Vec<usize>> {
    let mut d = vec![vec![0usize; h.len() + 1]; r.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=h.len() {
        d[0][j] = j;
    }
    for i in 1..=r.len() {
        for j in 1..=h.len() {
            let diag = d[i - 1][j - 1] + usize::from(r[i - 1] != h[j - 1]);
            d[i][j] = diag.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d
}

/// Minimal unit-cost alignment. Ties in the backtrace prefer match, then
/// substitution, deletion and insertion.
pub fn align_tokens<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Vec<AlignStep> {
    let d = edit_table(reference, hypothesis);
    let (mut i, mut j) = (reference.len(), hypothesis.len());
    let mut steps = Vec::with_capacity(i.max(j));
    while i > 0 || j > 0 {
        let here = d[i][j];
        let step = if i > 0 && j > 0 && reference[i - 1] == hypothesis[j - 1] && d[i - 1][j - 1] == here {
            EditOp::Match
        } else if i > 0 && j > 0 && d[i - 1][j - 1] + 1 == here {
            EditOp::Sub
        } else if i > 0 && d[i - 1][j] + 1 == here {
            EditOp::Del
        } else {
            EditOp::Ins
        };
        let (rp, hp) = match step {
            EditOp::Match | EditOp::Sub => {
                i -= 1;
                j -= 1;
                (Some(i), Some(j))
            }
            EditOp::Del => {
                i -= 1;
                (Some(i), None)
            }
            EditOp::Ins => {
                j -= 1;
                (None, Some(j))
            }
        };
        steps.push(AlignStep {
            op: step,
            ref_pos: rp,
            hyp_pos: hp,
        });
    }
    steps.reverse();
    steps
}

/// Edit counts of a word alignment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EditCounts {
    pub sub: usize,
    pub ins: usize,
    pub del: usize,
    pub ref_len: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.sub + self.ins + self.del
    }

    /// `+inf` when the reference is empty but the hypothesis is not.
    pub fn rate(&self) -> f64 {
        match (self.errors(), self.ref_len) {
            (0, _) => 0.0,
            (_, 0) => f64::INFINITY,
            (e, n) => e as f64 / n as f64,
        }
    }

    pub fn add(&mut self, other: &EditCounts) {
        self.sub += other.sub;
        self.ins += other.ins;
        self.del += other.del;
        self.ref_len += other.ref_len;
    }
}

pub fn edit_counts<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditCounts {
    let mut c = EditCounts {
        ref_len: reference.len(),
        ..Default::default()
    };
    for s in align_tokens(reference, hypothesis) {
        match s.op {
            EditOp::Match => {}
            EditOp::Sub => c.sub += 1,
            EditOp::Ins => c.ins += 1,
            EditOp::Del => c.del += 1,
        }
    }
    c
}

/// `(wer, S, I, D)`.
pub fn wer<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> (f64, usize, usize, usize) {
    let c = edit_counts(reference, hypothesis);
    (c.rate(), c.sub, c.ins, c.del)
}

/// Precision/recall/F1 from raw counts so corpus totals can be pooled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PrfCounts {
    pub tp: usize,
    pub hyp: usize,
    pub reference: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrfCounts {
    pub fn add(&mut self, o: &PrfCounts) {
        self.tp += o.tp;
        self.hyp += o.hyp;
        self.reference += o.reference;
    }

    pub fn prf(&self) -> Prf {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(self.tp, self.hyp);
        let recall = ratio(self.tp, self.reference);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf { precision, recall, f1 }
    }
}

pub fn token_f1_counts(reference: &[u32], hypothesis: &[u32], task_tokens: &[u32]) -> PrfCounts {
    let is_task = |t: &u32| task_tokens.contains(t);
    let tp = align_tokens(reference, hypothesis)
        .iter()
        .filter(|s| s.op == EditOp::Match && is_task(&reference[s.ref_pos.expect("match consumes ref")]))
        .count();
    PrfCounts {
        tp,
        hyp: hypothesis.iter().filter(|t| is_task(t)).count(),
        reference: reference.iter().filter(|t| is_task(t)).count(),
    }
}

/// Task-token F1 over the alignment of the full token sequences.
pub fn token_f1(reference: &[u32], hypothesis: &[u32], task_tokens: &[u32]) -> Prf {
    token_f1_counts(reference, hypothesis, task_tokens).prf()
}

/// Spans are `(type, surface)`; each reference span matches at most one
/// hypothesis span.
pub fn ner_f1_counts(reference: &[(String, String)], hypothesis: &[(String, String)]) -> PrfCounts {
    let mut pool: HashMap<&(String, String), usize> = HashMap::new();
    for s in reference {
        *pool.entry(s).or_default() += 1;
    }
    let mut tp = 0;
    for s in hypothesis {
        if let Some(n) = pool.get_mut(s) {
            if *n > 0 {
                *n -= 1;
                tp += 1;
            }
        }
    }
    PrfCounts {
        tp,
        hyp: hypothesis.len(),
        reference: reference.len(),
    }
}

pub fn ner_f1(reference: &[(String, String)], hypothesis: &[(String, String)]) -> Prf {
    ner_f1_counts(reference, hypothesis).prf()
}

/// Fraction of utterances whose first predicted language is correct; a
/// missing prediction counts as wrong.
pub fn lid_accuracy(reference: &[Option<String>], hypothesis: &[Option<String>]) -> f64 {
    if reference.is_empty() {
        return 0.0;
    }
    let correct = reference
        .iter()
        .zip(hypothesis)
        .filter(|(r, h)| r.is_some() && r == h)
        .count();
    correct as f64 / reference.len() as f64
}

/// Task tokens in `hypotheses` that belong to tasks outside `active`.
pub fn itt_count(hypotheses: &[Vec<u32>], active: TaskSet, vocab: &TokenVocab) -> usize {
    hypotheses
        .iter()
        .flatten()
        .filter(|&&t| vocab.task_of(t).is_some_and(|task| !active.contains(task)))
        .count()
}

/// Auxiliary task tokens per hypothesis token, for emission-rate
/// comparisons between activations.
pub fn aux_token_rate(hypotheses: &[Vec<u32>], vocab: &TokenVocab) -> f64 {
    let total: usize = hypotheses.iter().map(Vec::len).sum();
    let aux = hypotheses
        .iter()
        .flatten()
        .filter(|&&t| vocab.task_of(t).is_some_and(|task| task != TaskId::Asr))
        .count();
    if total == 0 {
        0.0
    } else {
        aux as f64 / total as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub tasks: TaskSet,
    pub utterances: usize,
    pub wer: EditCounts,
    pub wer_by_lang: BTreeMap<String, EditCounts>,
    pub scd: Option<PrfCounts>,
    pub ep: Option<PrfCounts>,
    pub ner: Option<PrfCounts>,
    pub lid: Option<f64>,
    pub itt: usize,
    pub aux_rate: f64,
    pub malformed: usize,
}

impl MetricReport {
    /// Unweighted mean of per-language WER.
    pub fn macro_wer(&self) -> f64 {
        if self.wer_by_lang.is_empty() {
            return self.wer.rate();
        }
        self.wer_by_lang.values().map(EditCounts::rate).sum::<f64>() / self.wer_by_lang.len() as f64
    }

    /// Stable flat key/value view; tasks that are not active report `--`.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let dash = || "--".to_string();
        let f = |x: f64| format!("{x:.4}");
        let mut kv = vec![
            ("tasks".to_string(), self.tasks.to_string()),
            ("utterances".into(), self.utterances.to_string()),
            ("wer".into(), f(self.wer.rate())),
            ("wer_sub".into(), self.wer.sub.to_string()),
            ("wer_ins".into(), self.wer.ins.to_string()),
            ("wer_del".into(), self.wer.del.to_string()),
            ("wer_ref_words".into(), self.wer.ref_len.to_string()),
            ("wer_macro".into(), f(self.macro_wer())),
        ];
        for (lang, c) in &self.wer_by_lang {
            kv.push((format!("wer_{lang}"), f(c.rate())));
        }
        for (name, counts) in [("scd", self.scd), ("ep", self.ep), ("ner", self.ner)] {
            let prf = counts.map(|c| c.prf());
            kv.push((format!("{name}_p"), prf.map_or_else(dash, |p| f(p.precision))));
            kv.push((format!("{name}_r"), prf.map_or_else(dash, |p| f(p.recall))));
            kv.push((format!("{name}_f1"), prf.map_or_else(dash, |p| f(p.f1))));
        }
        kv.push(("lid_acc".into(), self.lid.map_or_else(dash, f)));
        let all_active = self.tasks == TaskSet::all(crate::codec::NUM_AUX_TASKS);
        kv.push((
            "itt".into(),
            if all_active { dash() } else { self.itt.to_string() },
        ));
        kv.push(("aux_rate".into(), f(self.aux_rate)));
        kv.push(("malformed".into(), self.malformed.to_string()));
        kv
    }

    pub fn to_metrics_file(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.to_kv() {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn to_text(&self) -> String {
        let kv = self.to_kv();
        let width = kv.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut s = String::new();
        for (k, v) in kv {
            let _ = writeln!(s, "{k:<width$}  {v}");
        }
        s
    }
}

/// Parse a metrics file back into ordered key/value pairs.
pub fn parse_metrics_file(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Config(format!("malformed metrics line `{l}`")))
        })
        .collect()
}

/// Score decoded token sequences against their utterances with `active`
/// tasks. A task metric is computed only when the task is active; each
/// utterance contributes only the annotations it has.
pub fn evaluate(
    utterances: &[&AnnotatedUtterance],
    hypotheses: &[Vec<u32>],
    active: TaskSet,
    vocab: &TokenVocab,
) -> Result<MetricReport> {
    if utterances.len() != hypotheses.len() {
        return Err(Error::Config(format!(
            "{} utterances but {} hypotheses",
            utterances.len(),
            hypotheses.len()
        )));
    }
    let mut report = MetricReport {
        tasks: active,
        utterances: utterances.len(),
        wer: EditCounts::default(),
        wer_by_lang: BTreeMap::new(),
        scd: active.contains(TaskId::Scd).then(PrfCounts::default),
        ep: active.contains(TaskId::Endpoint).then(PrfCounts::default),
        ner: active.contains(TaskId::Ner).then(PrfCounts::default),
        lid: None,
        itt: itt_count(hypotheses, active, vocab),
        aux_rate: aux_token_rate(hypotheses, vocab),
        malformed: 0,
    };
    let scd_tokens = [vocab.scd()];
    let ep_tokens = [vocab.ep()];
    let (mut lid_ref, mut lid_hyp) = (Vec::new(), Vec::new());
    for (utt, hyp) in utterances.iter().zip(hypotheses) {
        let parsed = parse_hypothesis(hyp, vocab);
        report.malformed += parsed.malformed;
        let c = edit_counts(&utt.words, &parsed.words);
        report.wer.add(&c);
        report
            .wer_by_lang
            .entry(utt.lang.clone().unwrap_or_else(|| "?".into()))
            .or_default()
            .add(&c);

        let scored = active.intersect(utt.available);
        let reference = encode_reference(utt, scored, vocab)?;
        if let Some(acc) = report.scd.as_mut().filter(|_| scored.contains(TaskId::Scd)) {
            acc.add(&token_f1_counts(&reference, hyp, &scd_tokens));
        }
        if let Some(acc) = report.ep.as_mut().filter(|_| scored.contains(TaskId::Endpoint)) {
            acc.add(&token_f1_counts(&reference, hyp, &ep_tokens));
        }
        if let Some(acc) = report.ner.as_mut().filter(|_| scored.contains(TaskId::Ner)) {
            let spans = utt.spans.as_deref().unwrap_or_default();
            acc.add(&ner_f1_counts(&span_surfaces(&utt.words, spans), &parsed.span_surfaces()));
        }
        if scored.contains(TaskId::Lid) {
            lid_ref.push(utt.lang.clone());
            lid_hyp.push(parsed.lang.clone());
        }
    }
    if active.contains(TaskId::Lid) {
        report.lid = Some(lid_accuracy(&lid_ref, &lid_hyp));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: &str) -> Vec<&str> {
        x.split_whitespace().collect()
    }

    fn span(t: &str, w: &str) -> (String, String) {
        (t.to_string(), w.to_string())
    }

    #[test]
    fn wer_examples() {
        assert_eq!(wer(&s("a b c"), &s("a b c")), (0.0, 0, 0, 0));
        let (w, sub, ins, del) = wer(&s("a b c"), &s("a x c d"));
        assert_eq!((sub, ins, del), (1, 1, 0));
        assert_eq!(w, 2.0 / 3.0);
        assert_eq!(wer(&s("a"), &s("")), (1.0, 0, 0, 1));
        assert_eq!(wer::<&str>(&[], &[]).0, 0.0);
        assert!(wer(&s(""), &s("a")).0.is_infinite());
    }

    #[test]
    fn alignment_prefers_match() {
        let steps = align_tokens(&s("a b c"), &s("a b c"));
        assert!(steps.iter().all(|x| x.op == EditOp::Match));
        let steps = align_tokens(&s("a b"), &s("a x b"));
        let ops: Vec<EditOp> = steps.iter().map(|x| x.op).collect();
        assert_eq!(ops, vec![EditOp::Match, EditOp::Ins, EditOp::Match]);
    }

    #[test]
    fn scd_fixture() {
        // ref: a <scd> b c <scd> d e   hyp: a <scd> b c d e <scd>
        let (scd, a, b, c, d, e) = (9u32, 1, 2, 3, 4, 5);
        let r = [a, scd, b, c, scd, d, e];
        let h = [a, scd, b, c, d, e, scd];
        let p = token_f1(&r, &h, &[scd]);
        assert_eq!((p.precision, p.recall, p.f1), (0.5, 0.5, 0.5));
        assert_eq!(token_f1(&r, &r, &[scd]).f1, 1.0);
        assert_eq!(token_f1(&r, &[a, b, c, d, e], &[scd]).f1, 0.0);
    }

    #[test]
    fn ner_fixtures() {
        let r = [span("PER", "john smith")];
        assert_eq!(ner_f1(&r, &r).f1, 1.0);
        assert_eq!(ner_f1(&r, &[span("PER", "john")]).f1, 0.0);
        let r = [span("PER", "a"), span("LOC", "b")];
        let h = [span("PER", "a"), span("PER", "b")];
        let c = ner_f1_counts(&r, &h);
        assert_eq!(c.tp, 1);
        let p = c.prf();
        assert_eq!((p.precision, p.recall), (0.5, 0.5));
        // Duplicates match at most once.
        let c = ner_f1_counts(&[span("PER", "a")], &[span("PER", "a"), span("PER", "a")]);
        assert_eq!((c.tp, c.hyp), (1, 2));
    }

    #[test]
    fn lid_examples() {
        let en = Some("en".to_string());
        let de = Some("de".to_string());
        assert_eq!(lid_accuracy(&[en.clone(), de.clone()], &[en.clone(), de.clone()]), 1.0);
        assert_eq!(lid_accuracy(&[en.clone()], &[None]), 0.0);
        let refs = vec![en.clone(); 10];
        let hyps: Vec<_> = (0..10).map(|i| if i % 2 == 0 { en.clone() } else { de.clone() }).collect();
        assert_eq!(lid_accuracy(&refs, &hyps), 0.5);
    }

    #[test]
    fn metrics_file_round_trip() {
        let report = MetricReport {
            tasks: TaskSet::from_tasks([TaskId::Scd]),
            utterances: 2,
            wer: EditCounts {
                sub: 1,
                ins: 0,
                del: 0,
                ref_len: 4,
            },
            wer_by_lang: BTreeMap::new(),
            scd: Some(PrfCounts {
                tp: 1,
                hyp: 2,
                reference: 2,
            }),
            ep: None,
            ner: None,
            lid: None,
            itt: 0,
            aux_rate: 0.1,
            malformed: 0,
        };
        let text = report.to_metrics_file();
        let kv = parse_metrics_file(&text).unwrap();
        assert_eq!(kv, report.to_kv());
        let get = |k: &str| kv.iter().find(|(a, _)| a == k).unwrap().1.clone();
        assert_eq!(get("wer"), "0.2500");
        assert_eq!(get("scd_f1"), "0.5000");
        assert_eq!(get("ep_f1"), "--");
        assert_eq!(get("lid_acc"), "--");
        assert_eq!(get("itt"), "0");
    }
}
