//! Toy transducer: strided convolutional feature encoder, recurrent context
//! encoder, recurrent prediction network and an additive joint network,
//! with task vectors injected after the feature encoder, after the full
//! encoder, or both.

mod decode;
mod gradcheck;

pub use decode::{beam_decode, greedy_decode, Hypothesis, DEFAULT_MAX_SYMBOLS_PER_FRAME};
pub use gradcheck::{grad_check, relative_error, GradCheckEntry, GradCheckReport};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::activation::{
    compose_on_tape, new_bank, ActivationBank, ActivationPosition, ActivationStrategy, InjectionPoint,
};
use crate::codec::{Frames, TaskSet};
use crate::error::{Error, Result};
use crate::lattice::{self, LogProbGrid};
use crate::tape::{log_softmax_rows, Grads, ParamId, ParamStore, Tape, Var};
use crate::tensor::{matmul_t, Mat};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Input feature dimension.
    pub input_dim: usize,
    /// Acoustic embedding dimension.
    pub dim: usize,
    pub feature_layers: Vec<ConvSpec>,
    pub context_layers: usize,
    pub pred_hidden: usize,
    pub joint_dim: usize,
    /// Number of emittable symbols; the blank gets id `vocab_size`.
    pub vocab_size: usize,
    pub strategy: ActivationStrategy,
    pub position: ActivationPosition,
    pub num_aux: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_dim: 16,
            dim: 32,
            feature_layers: vec![ConvSpec { kernel: 3, stride: 2 }, ConvSpec { kernel: 3, stride: 1 }],
            context_layers: 2,
            pred_hidden: 32,
            joint_dim: 32,
            vocab_size: 120,
            strategy: ActivationStrategy::PerCombination,
            position: ActivationPosition::AfterFeatureEncoder,
            num_aux: crate::codec::NUM_AUX_TASKS,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Total time downsampling of the feature encoder.
    pub fn downsampling(&self) -> usize {
        self.feature_layers.iter().map(|l| l.stride).product()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.input_dim == 0 || self.dim == 0 || self.pred_hidden == 0 || self.joint_dim == 0 {
            return bad("model dimensions must be at least 1");
        }
        if self.vocab_size == 0 {
            return bad("vocabulary must hold at least one symbol");
        }
        if self.feature_layers.is_empty() {
            return bad("feature encoder needs at least one layer");
        }
        if self.feature_layers.iter().any(|l| l.kernel == 0 || l.stride == 0) {
            return bad("convolution kernel and stride must be at least 1");
        }
        Ok(())
    }

    pub fn blank(&self) -> u32 {
        self.vocab_size as u32
    }
}

#[derive(Clone, Debug)]
struct ConvLayer {
    w: ParamId,
    b: ParamId,
    spec: ConvSpec,
}

#[derive(Clone, Debug)]
struct GruLayer {
    w_ih: ParamId,
    w_hh: ParamId,
    b_ih: ParamId,
    b_hh: ParamId,
    hidden: usize,
}

#[derive(Clone, Debug)]
struct BankLayout {
    point: InjectionPoint,
    vectors: Vec<ParamId>,
}

#[derive(Clone, Debug)]
struct JointLayer {
    enc: ParamId,
    pred: ParamId,
    bias: ParamId,
    out: ParamId,
    out_bias: ParamId,
}

#[derive(Clone, Debug)]
pub struct TransducerModel {
    config: ModelConfig,
    params: ParamStore,
    conv: Vec<ConvLayer>,
    context: Vec<GruLayer>,
    banks: Vec<BankLayout>,
    embed: ParamId,
    pred: GruLayer,
    joint: JointLayer,
}

fn normal_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize, sd: f64) -> Mat {
    let n = Normal::new(0.0, sd).expect("valid sd");
    Mat::from_fn(rows, cols, |_, _| n.sample(rng))
}

fn uniform_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
}

fn add_gru(store: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, input: usize, hidden: usize) -> GruLayer {
    let bound = 1.0 / (hidden as f64).sqrt();
    GruLayer {
        w_ih: store.add(format!("{prefix}.w_ih"), uniform_mat(rng, 3 * hidden, input, bound)),
        w_hh: store.add(format!("{prefix}.w_hh"), uniform_mat(rng, 3 * hidden, hidden, bound)),
        b_ih: store.add(format!("{prefix}.b_ih"), Mat::zeros(1, 3 * hidden)),
        b_hh: store.add(format!("{prefix}.b_hh"), Mat::zeros(1, 3 * hidden)),
        hidden,
    }
}

/// Bank tensor name as stored in checkpoints.
pub fn bank_param_name(point: InjectionPoint, strategy: ActivationStrategy, index: usize) -> String {
    format!("act.{}.{}.{}", point.name(), strategy.name(), index)
}

impl TransducerModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();

        let mut conv = Vec::new();
        let mut in_dim = config.input_dim;
        for (i, spec) in config.feature_layers.iter().enumerate() {
            let fan_in = spec.kernel * in_dim;
            let w = params.add(
                format!("fe.conv{i}.weight"),
                normal_mat(&mut rng, config.dim, fan_in, 1.0 / (fan_in as f64).sqrt()),
            );
            let b = params.add(format!("fe.conv{i}.bias"), Mat::zeros(1, config.dim));
            conv.push(ConvLayer { w, b, spec: *spec });
            in_dim = config.dim;
        }

        let mut banks = Vec::new();
        let mut add_bank = |params: &mut ParamStore, point: InjectionPoint| -> Result<()> {
            let bank_seed = config.seed.wrapping_mul(31).wrapping_add(1 + point as u64);
            let bank = new_bank(config.strategy, config.num_aux, config.dim, bank_seed)?;
            let vectors = bank
                .vectors
                .into_iter()
                .enumerate()
                .map(|(i, v)| params.add(bank_param_name(point, config.strategy, i), Mat::row_vector(v)))
                .collect();
            banks.push(BankLayout { point, vectors });
            Ok(())
        };
        let points = config.position.points();
        if points.contains(&InjectionPoint::Feature) {
            add_bank(&mut params, InjectionPoint::Feature)?;
        }

        let context = (0..config.context_layers)
            .map(|i| add_gru(&mut params, &mut rng, &format!("ce.gru{i}"), config.dim, config.dim))
            .collect();

        if points.contains(&InjectionPoint::Encoder) {
            add_bank(&mut params, InjectionPoint::Encoder)?;
        }

        let embed = params.add(
            "pred.embed",
            normal_mat(&mut rng, config.vocab_size + 1, config.pred_hidden, 0.5),
        );
        let pred = add_gru(&mut params, &mut rng, "pred.gru", config.pred_hidden, config.pred_hidden);

        let joint = JointLayer {
            enc: params.add(
                "joint.enc.weight",
                normal_mat(&mut rng, config.joint_dim, config.dim, 1.0 / (config.dim as f64).sqrt()),
            ),
            pred: params.add(
                "joint.pred.weight",
                normal_mat(&mut rng, config.joint_dim, config.pred_hidden, 1.0 / (config.pred_hidden as f64).sqrt()),
            ),
            bias: params.add("joint.bias", Mat::zeros(1, config.joint_dim)),
            out: params.add(
                "joint.out.weight",
                normal_mat(&mut rng, config.vocab_size + 1, config.joint_dim, 1.0 / (config.joint_dim as f64).sqrt()),
            ),
            out_bias: params.add("joint.out.bias", Mat::zeros(1, config.vocab_size + 1)),
        };

        Ok(TransducerModel {
            config,
            params,
            conv,
            context,
            banks,
            embed,
            pred,
            joint,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn blank(&self) -> u32 {
        self.config.blank()
    }

    /// Snapshot of the bank at one injection point.
    pub fn bank(&self, point: InjectionPoint) -> Option<ActivationBank> {
        let layout = self.banks.iter().find(|b| b.point == point)?;
        Some(ActivationBank {
            strategy: self.config.strategy,
            num_aux: self.config.num_aux,
            dim: self.config.dim,
            seed: self.config.seed,
            vectors: layout
                .vectors
                .iter()
                .map(|&id| self.params.get(id).data.clone())
                .collect(),
        })
    }

    /// Parameter ids of the bank vectors at `point`, in bank order.
    pub fn bank_param_ids(&self, point: InjectionPoint) -> Vec<ParamId> {
        self.banks
            .iter()
            .find(|b| b.point == point)
            .map(|b| b.vectors.clone())
            .unwrap_or_default()
    }

    /// Set every task vector to zero.
    pub fn zero_banks(&mut self) {
        for layout in &self.banks {
            for &id in &layout.vectors {
                self.params.get_mut(id).data.fill(0.0);
            }
        }
    }

    fn activate(&self, tape: &mut Tape, x: Var, point: InjectionPoint, tasks: TaskSet) -> Result<Var> {
        let Some(layout) = self.banks.iter().find(|b| b.point == point) else {
            return Ok(x);
        };
        let vars: Vec<Var> = layout.vectors.iter().map(|&id| tape.param(id)).collect();
        let v = compose_on_tape(tape, self.config.strategy, self.config.num_aux, &vars, tasks)?;
        tape.add_row(x, v)
    }

    pub fn frames_to_mat(&self, frames: &Frames) -> Result<Mat> {
        if frames.dim != self.config.input_dim {
            return Err(Error::Shape(format!(
                "frames have dim {}, model expects {}",
                frames.dim, self.config.input_dim
            )));
        }
        Ok(Mat::from_vec(
            frames.rows,
            frames.dim,
            frames.data.iter().map(|&x| x as f64).collect(),
        ))
    }

    /// Strided convolution stack: `T_in x d_in -> ceil(T_in / s) x d`.
    pub fn feature_encode_on_tape(&self, tape: &mut Tape, frames: Var) -> Result<Var> {
        let rows = tape.value(frames).rows;
        if rows == 0 {
            return Err(Error::Shape("cannot encode zero frames".into()));
        }
        let mut x = frames;
        for layer in &self.conv {
            let u = tape.unfold(x, layer.spec.kernel, layer.spec.stride);
            let (w, b) = (tape.param(layer.w), tape.param(layer.b));
            let y = tape.linear(u, w, Some(b));
            x = tape.tanh(y);
        }
        Ok(x)
    }

    /// Residual recurrent stack; shape preserving.
    pub fn context_encode_on_tape(&self, tape: &mut Tape, x: Var) -> Var {
        let mut h = x;
        for layer in &self.context {
            let out = gru_sequence(tape, layer, h, None);
            h = tape.add(h, out);
        }
        h
    }

    /// Frames to task-conditioned encoder output `H`.
    pub fn encode_on_tape(&self, tape: &mut Tape, frames: &Mat, tasks: TaskSet) -> Result<Var> {
        let x = tape.constant(frames.clone());
        let x = self.feature_encode_on_tape(tape, x)?;
        let x = self.activate(tape, x, InjectionPoint::Feature, tasks)?;
        let h = self.context_encode_on_tape(tape, x);
        self.activate(tape, h, InjectionPoint::Encoder, tasks)
    }

    pub fn feature_encode(&self, frames: &Mat) -> Result<Mat> {
        let mut tape = Tape::new(&self.params);
        let x = tape.constant(frames.clone());
        let y = self.feature_encode_on_tape(&mut tape, x)?;
        Ok(tape.value(y).clone())
    }

    pub fn context_encode(&self, x: &Mat) -> Result<Mat> {
        if x.cols != self.config.dim {
            return Err(Error::Shape(format!("context encoder expects dim {}", self.config.dim)));
        }
        let mut tape = Tape::new(&self.params);
        let v = tape.constant(x.clone());
        let y = self.context_encode_on_tape(&mut tape, v);
        Ok(tape.value(y).clone())
    }

    pub fn encode(&self, frames: &Mat, tasks: TaskSet) -> Result<Mat> {
        let mut tape = Tape::new(&self.params);
        let h = self.encode_on_tape(&mut tape, frames, tasks)?;
        Ok(tape.value(h).clone())
    }

    fn check_prefix(&self, prefix: &[u32]) -> Result<()> {
        if let Some(&bad) = prefix.iter().find(|&&y| y >= self.blank()) {
            return Err(Error::Shape(format!(
                "label {bad} is the blank or outside the vocabulary"
            )));
        }
        Ok(())
    }

    /// Prediction network over `[start] + prefix`: `(U + 1) x pred_hidden`.
    pub fn predict_on_tape(&self, tape: &mut Tape, prefix: &[u32]) -> Result<Var> {
        self.check_prefix(prefix)?;
        let mut ids = Vec::with_capacity(prefix.len() + 1);
        ids.push(self.blank());
        ids.extend_from_slice(prefix);
        let table = tape.param(self.embed);
        let e = tape.gather_rows(table, &ids);
        Ok(gru_sequence(tape, &self.pred, e, None))
    }

    pub fn predict(&self, prefix: &[u32]) -> Result<Mat> {
        let mut tape = Tape::new(&self.params);
        let g = self.predict_on_tape(&mut tape, prefix)?;
        Ok(tape.value(g).clone())
    }

    /// Log-probabilities for every lattice node, rows ordered `t * (U+1) + u`.
    pub fn joint_on_tape(&self, tape: &mut Tape, h: Var, g: Var) -> Var {
        let we = tape.param(self.joint.enc);
        let a = tape.linear(h, we, None);
        let (wp, bp) = (tape.param(self.joint.pred), tape.param(self.joint.bias));
        let b = tape.linear(g, wp, Some(bp));
        let z = tape.pair_add(a, b);
        let z = tape.tanh(z);
        let (wo, bo) = (tape.param(self.joint.out), tape.param(self.joint.out_bias));
        let logits = tape.linear(z, wo, Some(bo));
        tape.log_softmax(logits)
    }

    /// Joint pre-activation `W_h h + W_g g + b`.
    pub fn joint_preactivation(&self, h: &[f64], g: &[f64]) -> Vec<f64> {
        let a = self.project_encoder(&Mat::row_vector(h.to_vec()));
        let b = self.project_prediction(g);
        a.data.iter().zip(&b).map(|(x, y)| x + y).collect()
    }

    /// Logits over `V + 1` symbols for one encoder frame and one prediction
    /// state; the blank is the last entry.
    pub fn joint(&self, h: &[f64], g: &[f64]) -> Vec<f64> {
        let pre = self.joint_preactivation(h, g);
        self.joint_output(&pre)
    }

    pub(crate) fn project_encoder(&self, h: &Mat) -> Mat {
        matmul_t(h, self.params.get(self.joint.enc))
    }

    pub(crate) fn project_prediction(&self, g: &[f64]) -> Vec<f64> {
        let m = matmul_t(&Mat::row_vector(g.to_vec()), self.params.get(self.joint.pred));
        m.data
            .iter()
            .zip(&self.params.get(self.joint.bias).data)
            .map(|(x, b)| x + b)
            .collect()
    }

    pub(crate) fn joint_output(&self, pre: &[f64]) -> Vec<f64> {
        let z = Mat::row_vector(pre.iter().map(|x| x.tanh()).collect());
        let mut logits = matmul_t(&z, self.params.get(self.joint.out));
        for (o, b) in logits.data.iter_mut().zip(&self.params.get(self.joint.out_bias).data) {
            *o += b;
        }
        logits.data
    }

    pub(crate) fn joint_log_probs(&self, enc_proj: &[f64], pred_proj: &[f64]) -> Vec<f64> {
        let pre: Vec<f64> = enc_proj.iter().zip(pred_proj).map(|(a, b)| a + b).collect();
        let logits = self.joint_output(&pre);
        log_softmax_rows(&Mat::row_vector(logits)).data
    }

    /// Start state of the prediction network and its output.
    pub(crate) fn pred_start(&self) -> Vec<f64> {
        self.pred_step(&vec![0.0; self.config.pred_hidden], self.blank())
    }

    /// Advance the prediction network by one label.
    pub(crate) fn pred_step(&self, state: &[f64], label: u32) -> Vec<f64> {
        let mut tape = Tape::new(&self.params);
        let table = tape.param(self.embed);
        let x = tape.gather_rows(table, &[label]);
        let h0 = tape.constant(Mat::row_vector(state.to_vec()));
        let out = gru_sequence(&mut tape, &self.pred, x, Some(h0));
        tape.value(out).data.clone()
    }

    /// Training loss with inverted dropout on the encoder output and on the
    /// prediction network output; masks come from `seed`.
    pub fn training_loss_and_grads(
        &self,
        frames: &Mat,
        target: &[u32],
        tasks: TaskSet,
        dropout: Dropout,
        seed: u64,
    ) -> Result<(f64, Grads)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::new(&self.params);
        let h = self.encode_on_tape(&mut tape, frames, tasks)?;
        let h = apply_dropout(&mut tape, h, dropout.encoder, &mut rng);
        let g = self.predict_on_tape(&mut tape, target)?;
        let g = apply_dropout(&mut tape, g, dropout.prediction, &mut rng);
        let t = tape.value(h).rows;
        let lp = self.joint_on_tape(&mut tape, h, g);
        let l = tape.transducer_loss(lp, t, target, self.blank())?;
        Ok((tape.scalar(l), tape.backward(l)))
    }

    /// Full-lattice transducer loss on the tape.
    pub fn loss_on_tape(&self, tape: &mut Tape, frames: &Mat, target: &[u32], tasks: TaskSet) -> Result<Var> {
        let h = self.encode_on_tape(tape, frames, tasks)?;
        self.rnnt_loss_on_tape(tape, h, target)
    }

    pub fn rnnt_loss_on_tape(&self, tape: &mut Tape, h: Var, target: &[u32]) -> Result<Var> {
        let frames = tape.value(h).rows;
        let g = self.predict_on_tape(tape, target)?;
        let lp = self.joint_on_tape(tape, h, g);
        tape.transducer_loss(lp, frames, target, self.blank())
    }

    /// Loss of one utterance.
    pub fn loss(&self, frames: &Mat, target: &[u32], tasks: TaskSet) -> Result<f64> {
        let mut tape = Tape::new(&self.params);
        let l = self.loss_on_tape(&mut tape, frames, target, tasks)?;
        Ok(tape.scalar(l))
    }

    pub fn loss_and_grads(&self, frames: &Mat, target: &[u32], tasks: TaskSet) -> Result<(f64, Grads)> {
        let mut tape = Tape::new(&self.params);
        let l = self.loss_on_tape(&mut tape, frames, target, tasks)?;
        Ok((tape.scalar(l), tape.backward(l)))
    }

    /// Joint log-probability grid for encoder output `h` and `target`,
    /// shaped `(T * (U + 1)) x (V + 1)`.
    pub fn log_prob_grid(&self, h: &Mat, target: &[u32]) -> Result<Mat> {
        if h.rows == 0 {
            return Err(Error::Shape("encoder output has no frames".into()));
        }
        let mut tape = Tape::new(&self.params);
        let hv = tape.constant(h.clone());
        let g = self.predict_on_tape(&mut tape, target)?;
        let lp = self.joint_on_tape(&mut tape, hv, g);
        Ok(tape.value(lp).clone())
    }

    /// Transducer loss given encoder output `H` (dynamic programming).
    pub fn rnnt_loss(&self, h: &Mat, target: &[u32]) -> Result<f64> {
        let mut tape = Tape::new(&self.params);
        let hv = tape.constant(h.clone());
        let l = self.rnnt_loss_on_tape(&mut tape, hv, target)?;
        Ok(tape.scalar(l))
    }

    /// Transducer loss by enumerating every alignment.
    pub fn rnnt_loss_bruteforce(&self, h: &Mat, target: &[u32]) -> Result<f64> {
        let grid = self.log_prob_grid(h, target)?;
        let view = LogProbGrid::new(h.rows, target.len(), grid.cols, &grid.data)?;
        lattice::bruteforce_loss(&view, target, self.blank())
    }
}

/// Dropout rates used during training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Dropout {
    pub encoder: f64,
    pub prediction: f64,
}

fn apply_dropout(tape: &mut Tape, x: Var, p: f64, rng: &mut ChaCha8Rng) -> Var {
    if p <= 0.0 {
        return x;
    }
    let keep = 1.0 / (1.0 - p);
    let (rows, cols) = (tape.value(x).rows, tape.value(x).cols);
    let mask = Mat::from_fn(rows, cols, |_, _| if rng.random::<f64>() < p { 0.0 } else { keep });
    let m = tape.constant(mask);
    tape.mul(x, m)
}

/// Run a GRU layer over the rows of `x`, returning the stacked hidden
/// states. Gates follow the usual reset/update/candidate layout.
fn gru_sequence(tape: &mut Tape, layer: &GruLayer, x: Var, h0: Option<Var>) -> Var {
    let n = layer.hidden;
    let (w_ih, b_ih) = (tape.param(layer.w_ih), tape.param(layer.b_ih));
    let (w_hh, b_hh) = (tape.param(layer.w_hh), tape.param(layer.b_hh));
    let gi_all = tape.linear(x, w_ih, Some(b_ih));
    let steps = tape.value(x).rows;
    let mut h = match h0 {
        Some(h) => h,
        None => tape.constant(Mat::zeros(1, n)),
    };
    let mut outs = Vec::with_capacity(steps);
    for t in 0..steps {
        let gi = tape.slice_rows(gi_all, t, 1);
        let gh = tape.linear(h, w_hh, Some(b_hh));
        let (ir, hr) = (tape.slice_cols(gi, 0, n), tape.slice_cols(gh, 0, n));
        let r = tape.add(ir, hr);
        let r = tape.sigmoid(r);
        let (iz, hz) = (tape.slice_cols(gi, n, n), tape.slice_cols(gh, n, n));
        let z = tape.add(iz, hz);
        let z = tape.sigmoid(z);
        let (inn, hn) = (tape.slice_cols(gi, 2 * n, n), tape.slice_cols(gh, 2 * n, n));
        let rh = tape.mul(r, hn);
        let cand = tape.add(inn, rh);
        let cand = tape.tanh(cand);
        let diff = tape.sub(h, cand);
        let zd = tape.mul(z, diff);
        h = tape.add(cand, zd);
        outs.push(h);
    }
    tape.stack_rows(outs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(strategy: ActivationStrategy, position: ActivationPosition) -> TransducerModel {
        TransducerModel::new(ModelConfig {
            input_dim: 3,
            dim: 4,
            feature_layers: vec![ConvSpec { kernel: 3, stride: 2 }],
            context_layers: 1,
            pred_hidden: 3,
            joint_dim: 4,
            vocab_size: 4,
            strategy,
            position,
            num_aux: 2,
            seed: 3,
        })
        .unwrap()
    }

    fn frames(rows: usize, cols: usize) -> Mat {
        Mat::from_fn(rows, cols, |r, c| ((r * 7 + c * 3) % 5) as f64 * 0.3 - 0.6)
    }

    #[test]
    fn feature_encoder_downsamples_with_ceiling() {
        let m = TransducerModel::new(ModelConfig::default()).unwrap();
        assert_eq!(m.config().downsampling(), 2);
        let two = tiny(ActivationStrategy::PerTaskSum, ActivationPosition::Both);
        assert_eq!(two.feature_encode(&frames(8, 3)).unwrap().rows, 4);
        assert_eq!(two.feature_encode(&frames(7, 3)).unwrap().rows, 4);
        assert!(two.feature_encode(&Mat::zeros(0, 3)).is_err());
        let z = two.feature_encode(&Mat::zeros(5, 3)).unwrap();
        assert!(z.is_finite());
    }

    #[test]
    fn context_and_prediction_shapes() {
        let m = tiny(ActivationStrategy::PerCombination, ActivationPosition::AfterFullEncoder);
        let x = frames(5, 4);
        let h = m.context_encode(&x).unwrap();
        assert_eq!(h.shape(), x.shape());
        assert!(h.is_finite());
        assert_eq!(m.predict(&[]).unwrap().rows, 1);
        let g = m.predict(&[0, 2, 1]).unwrap();
        assert_eq!(g.shape(), (4, 3));
        assert_eq!(g, m.predict(&[0, 2, 1]).unwrap());
        assert!(m.predict(&[4]).is_err());
    }

    #[test]
    fn joint_normalises_and_is_additive() {
        let m = tiny(ActivationStrategy::PerCombination, ActivationPosition::AfterFeatureEncoder);
        let h = [0.1, -0.2, 0.3, 0.05];
        let g = [0.4, 0.0, -0.1];
        let logits = m.joint(&h, &g);
        assert_eq!(logits.len(), 5);
        let lp = log_softmax_rows(&Mat::row_vector(logits));
        let total: f64 = lp.data.iter().map(|x| x.exp()).sum();
        assert!((total - 1.0).abs() < 1e-9);

        let bias = m.params().get(m.joint.bias).data.clone();
        let pre = m.joint_preactivation(&h, &g);
        let h2: Vec<f64> = h.iter().map(|x| 2.0 * x).collect();
        let g2: Vec<f64> = g.iter().map(|x| 2.0 * x).collect();
        let pre2 = m.joint_preactivation(&h2, &g2);
        for j in 0..pre.len() {
            assert!(((pre2[j] - bias[j]) - 2.0 * (pre[j] - bias[j])).abs() < 1e-12);
        }
    }

    #[test]
    fn incremental_paths_match_tape_paths() {
        let m = tiny(ActivationStrategy::PerTaskSum, ActivationPosition::Both);
        let prefix = [1u32, 3, 0];
        let g = m.predict(&prefix).unwrap();
        let mut state = m.pred_start();
        assert_eq!(state, g.row(0));
        for (u, &y) in prefix.iter().enumerate() {
            state = m.pred_step(&state, y);
            for (a, b) in state.iter().zip(g.row(u + 1)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let h = m.encode(&frames(6, 3), TaskSet::all(2)).unwrap();
        let grid = m.log_prob_grid(&h, &prefix).unwrap();
        let enc = m.project_encoder(&h);
        for t in 0..h.rows {
            for u in 0..=prefix.len() {
                let lp = m.joint_log_probs(enc.row(t), &m.project_prediction(g.row(u)));
                for (a, b) in lp.iter().zip(grid.row(t * (prefix.len() + 1) + u)) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn parameter_enumeration_is_deterministic_and_named() {
        let a = tiny(ActivationStrategy::PerCombination, ActivationPosition::Both);
        let b = tiny(ActivationStrategy::PerCombination, ActivationPosition::Both);
        let names: Vec<&str> = a.params().iter().map(|(n, _)| n).collect();
        assert_eq!(names, b.params().iter().map(|(n, _)| n).collect::<Vec<_>>());
        assert!(names.contains(&"act.feature.per_combination.3"));
        assert!(names.contains(&"act.encoder.per_combination.0"));
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn zeroed_banks_make_task_sets_indistinguishable() {
        for position in ActivationPosition::ALL {
            let mut m = tiny(ActivationStrategy::PerTaskSum, position);
            let f = frames(6, 3);
            let a = m.encode(&f, TaskSet::primary_only()).unwrap();
            let b = m.encode(&f, TaskSet::all(2)).unwrap();
            assert_ne!(a, b, "{position}");
            m.zero_banks();
            let a = m.encode(&f, TaskSet::primary_only()).unwrap();
            let b = m.encode(&f, TaskSet::all(2)).unwrap();
            assert_eq!(a, b, "{position}");
        }
    }

    #[test]
    fn loss_is_nonnegative_and_matches_bruteforce() {
        let m = tiny(ActivationStrategy::PerCombination, ActivationPosition::AfterFeatureEncoder);
        let h = m.encode(&frames(6, 3), TaskSet::primary_only()).unwrap();
        for target in [vec![], vec![2], vec![0, 3, 1]] {
            let dp = m.rnnt_loss(&h, &target).unwrap();
            let brute = m.rnnt_loss_bruteforce(&h, &target).unwrap();
            assert!(dp >= 0.0);
            assert!((dp - brute).abs() < 1e-9, "{dp} vs {brute}");
        }
        assert!(m.rnnt_loss(&h, &[4]).is_err());
    }
}
