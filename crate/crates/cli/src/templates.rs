//! Documented configuration templates printed by `default-config`. Each
//! template parses to the built-in defaults (checked in tests).

pub const GEN: &str = r#"# Synthetic corpus generator.

# Master seed. Utterance i draws from its own stream derived from (seed, i).
seed = 1
# Language codes. Each language gets a disjoint lexicon and an acoustic offset.
languages = ["en", "de"]
# Plain words per language.
lexicon_size = 50
# Entity types; tagged in the output as <ne:TYPE> ... </ne>.
entity_types = ["PER", "LOC"]
# Capitalized words per language reserved for entity phrases.
entity_words = 4
# Phrases per (language, entity type).
entity_phrases = 4
# Probability that a turn contains an entity phrase.
entity_prob = 0.3
# Distinct speakers; each has a fixed acoustic offset.
speaker_pool = 6
# Inclusive ranges.
speakers_per_conversation = { min = 1, max = 3 }
turns_per_utterance = { min = 1, max = 4 }
words_per_turn = { min = 2, max = 6 }
frames_per_word = { min = 2, max = 4 }
# Speaker-only frames at the start and end of each turn.
voice_frames = 2
# Silence frames after the last turn.
pause_frames = 2
# Frame dimension.
input_dim = 16
# Standard deviation of the per-frame Gaussian noise.
noise = 0.1
# Norm of speaker and language offsets relative to sqrt(input_dim).
offset_ratio = 0.5
# Training utterances; partial_fraction of them carry only ASR and LID labels.
train_size = 800
partial_fraction = 0.5
dev_size = 100
test_size = 100
"#;

const TRAIN_BODY: &str = r#"# Passes over the training pool.
epochs = 30
batch_size = 8
# Peak learning rate, reached after warmup_steps optimizer steps and
# decayed as 1/sqrt(step) afterwards.
lr = 0.003
warmup_steps = 200
# Adam.
beta1 = 0.9
beta2 = 0.98
eps = 1e-9
# Global gradient norm clip; 0 disables.
grad_clip = 5.0
seed = 0
# How each utterance's active tasks are chosen:
#   "uniform_random_subset"  uniform over subsets of its available tasks
#   "from_available_labels"  exactly its available tasks
policy = "uniform_random_subset"
# Include the ASR+LID-only split.
use_partial = true
# Fraction of partial utterances mixed into each epoch.
partial_ratio = 1.0
# Dev WER every N epochs (always after the last one).
eval_every = 1
# Cap on dev utterances used for model selection; 0 uses all.
dev_limit = 0
# Per-frame emission cap of the decoders.
max_symbols_per_frame = 8

[dropout]
# Inverted dropout on the encoder output and the prediction network output.
encoder = 0.0
prediction = 0.0

[model]
# Acoustic embedding size.
dim = 32
# Strided 1-D convolutions of the feature encoder; total downsampling is the
# product of strides.
feature_layers = [{ kernel = 3, stride = 2 }, { kernel = 3, stride = 1 }]
# Residual recurrent layers of the context encoder.
context_layers = 2
pred_hidden = 32
joint_dim = 32
# "per_combination" (2^K vectors) or "per_task_sum" (K+1 vectors).
strategy = "per_combination"
# "after_feature_encoder", "after_full_encoder" or "both".
position = "after_feature_encoder"
# input_dim, vocab_size and num_aux are taken from the corpus; the model
# seed follows the top-level seed.
"#;

pub fn train() -> String {
    format!("# Trainer and model.\n\n{TRAIN_BODY}")
}

pub fn ablate() -> String {
    let mut nested = String::new();
    for line in TRAIN_BODY.lines() {
        match line {
            "[dropout]" => nested.push_str("[train.dropout]"),
            "[model]" => nested.push_str("[train.model]"),
            l => nested.push_str(l),
        }
        nested.push('\n');
    }
    format!(
        r#"# Strategy x position ablation followed by the task-subset sweep.

strategies = ["per_combination", "per_task_sum"]
positions = ["after_feature_encoder", "after_full_encoder", "both"]
# Beam width for test decoding; 1 is greedy.
beam = 4

[train]
{nested}"#
    )
}
