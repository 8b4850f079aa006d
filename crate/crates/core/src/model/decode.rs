use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::tensor::{log_add_exp, Mat};

use super::TransducerModel;

/// Per-frame emission cap used when none is given.
pub const DEFAULT_MAX_SYMBOLS_PER_FRAME: usize = 8;

/// A decoded label sequence (no blanks) and its log-probability.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<u32>,
    pub score: f64,
}

struct PredOutput {
    state: Vec<f64>,
    proj: Vec<f64>,
}

impl TransducerModel {
    fn pred_output(&self, state: Vec<f64>) -> PredOutput {
        let proj = self.project_prediction(&state);
        PredOutput { state, proj }
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Per frame, emit the most likely label until the blank wins or
/// `max_symbols_per_frame` labels were emitted on that frame. The score
/// is the log-probability of the chosen alignment.
pub fn greedy_decode(model: &TransducerModel, h: &Mat, max_symbols_per_frame: usize) -> Hypothesis {
    let blank = model.blank() as usize;
    let enc = model.project_encoder(h);
    let mut pred = model.pred_output(model.pred_start());
    let mut tokens = Vec::new();
    let mut score = 0.0;
    for t in 0..h.rows {
        let mut emitted = 0;
        loop {
            let lp = model.joint_log_probs(enc.row(t), &pred.proj);
            let k = argmax(&lp);
            if k == blank || emitted == max_symbols_per_frame {
                score += lp[blank];
                break;
            }
            score += lp[k];
            tokens.push(k as u32);
            pred = model.pred_output(model.pred_step(&pred.state, k as u32));
            emitted += 1;
        }
    }
    Hypothesis { tokens, score }
}

struct BeamHyp {
    tokens: Vec<u32>,
    score: f64,
    pred: std::rc::Rc<PredOutput>,
}

enum Pooled {
    Finished(usize),
    Extend { parent: usize, label: u32, score: f64 },
}

fn by_score_desc(a: f64, b: f64) -> Ordering {
    b.partial_cmp(&a).unwrap_or(Ordering::Equal)
}

/// Frame-synchronous transducer beam search. Within a frame, blank
/// terminated hypotheses and label extensions compete in one pool from
/// which the best `beam_size` survive; hypotheses reaching the same label
/// sequence are merged by summing their probabilities. The greedy
/// hypothesis always competes for the final list, so the best score is
/// never below greedy. Returns at most `beam_size` hypotheses sorted by
/// descending score.
pub fn beam_decode(
    model: &TransducerModel,
    h: &Mat,
    beam_size: usize,
    max_symbols_per_frame: usize,
) -> Result<Vec<Hypothesis>> {
    if beam_size == 0 {
        return Err(Error::Config("beam size must be at least 1".into()));
    }
    let blank = model.blank() as usize;
    let enc = model.project_encoder(h);
    let mut beam = vec![BeamHyp {
        tokens: Vec::new(),
        score: 0.0,
        pred: std::rc::Rc::new(model.pred_output(model.pred_start())),
    }];

    for t in 0..h.rows {
        let mut finished: Vec<BeamHyp> = Vec::new();
        let mut active = std::mem::take(&mut beam);
        let mut step = 0;
        while !active.is_empty() {
            let mut pool: Vec<(f64, Pooled)> = Vec::new();
            for (pi, hyp) in active.iter().enumerate() {
                let lp = model.joint_log_probs(enc.row(t), &hyp.pred.proj);
                let done = hyp.score + lp[blank];
                match finished.iter_mut().find(|f| f.tokens == hyp.tokens) {
                    Some(f) => f.score = log_add_exp(f.score, done),
                    None => finished.push(BeamHyp {
                        tokens: hyp.tokens.clone(),
                        score: done,
                        pred: hyp.pred.clone(),
                    }),
                }
                if step < max_symbols_per_frame {
                    let mut labels: Vec<usize> = (0..blank).collect();
                    labels.sort_by(|&a, &b| by_score_desc(lp[a], lp[b]).then(a.cmp(&b)));
                    for &k in labels.iter().take(beam_size) {
                        pool.push((
                            hyp.score + lp[k],
                            Pooled::Extend {
                                parent: pi,
                                label: k as u32,
                                score: hyp.score + lp[k],
                            },
                        ));
                    }
                }
            }
            pool.extend(finished.iter().enumerate().map(|(i, f)| (f.score, Pooled::Finished(i))));
            // Stable sort: on exact ties label extensions precede finished
            // hypotheses, matching the greedy argmax tie-break.
            pool.sort_by(|a, b| by_score_desc(a.0, b.0));
            pool.truncate(beam_size);

            let mut keep_finished = Vec::new();
            let mut next_active = Vec::new();
            for (_, entry) in pool {
                match entry {
                    Pooled::Finished(i) => keep_finished.push(i),
                    Pooled::Extend { parent, label, score } => {
                        let p = &active[parent];
                        let mut tokens = p.tokens.clone();
                        tokens.push(label);
                        let pred = model.pred_output(model.pred_step(&p.pred.state, label));
                        next_active.push(BeamHyp {
                            tokens,
                            score,
                            pred: std::rc::Rc::new(pred),
                        });
                    }
                }
            }
            keep_finished.sort_unstable();
            let mut slots: Vec<Option<BeamHyp>> = finished.into_iter().map(Some).collect();
            finished = keep_finished
                .into_iter()
                .filter_map(|i| slots[i].take())
                .collect();
            active = next_active;
            step += 1;
        }
        finished.sort_by(|a, b| by_score_desc(a.score, b.score));
        finished.truncate(beam_size);
        beam = finished;
    }

    let mut out: Vec<Hypothesis> = beam
        .into_iter()
        .map(|b| Hypothesis {
            tokens: b.tokens,
            score: b.score,
        })
        .collect();
    // Pruning can drop the greedy path; keep it as a candidate.
    let greedy = greedy_decode(model, h, max_symbols_per_frame);
    match out.iter_mut().find(|b| b.tokens == greedy.tokens) {
        Some(b) => b.score = b.score.max(greedy.score),
        None => out.push(greedy),
    }
    out.sort_by(|a, b| by_score_desc(a.score, b.score));
    out.truncate(beam_size);
    Ok(out)
}
