//! `dyntask`: corpus generation, training, decoding, evaluation and
//! ablations for the multitask transducer.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error, 3 numerical
//! failure. Relative `--out` paths are resolved against `$DYNTASK_OUT`
//! when it is set.

mod templates;

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use dyntask::activation::{ActivationPosition, ActivationStrategy};
use dyntask::checkpoint;
use dyntask::codec::{build_vocab, AnnotatedUtterance, TaskSet, NUM_AUX_TASKS};
use dyntask::data::{gen_corpus, GenConfig, Split};
use dyntask::experiment::{self, decode_all, AblationConfig, DecodeOptions};
use dyntask::io;
use dyntask::metrics::evaluate;
use dyntask::train::{train, TrainConfig};

#[derive(Parser)]
#[command(name = "dyntask", version, about = "Multitask transducer with dynamic task activation")]
struct Cli {
    /// Only print warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus.
    GenData {
        /// Generator config (TOML); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and save the best checkpoint by dev WER.
    Train {
        /// Trainer config (TOML); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        strategy: Option<ActivationStrategy>,
        #[arg(long)]
        position: Option<ActivationPosition>,
        /// Train on the fully labeled split only.
        #[arg(long)]
        no_partial: bool,
    },
    /// Decode a corpus split into a hypothesis file.
    Decode {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
        /// Comma separated active tasks (asr is implied) or `all`.
        #[arg(long, default_value = "all", value_parser = parse_tasks)]
        tasks: TaskSet,
        /// Beam width; 1 decodes greedily.
        #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
        beam: u64,
        #[arg(long, default_value_t = dyntask::model::DEFAULT_MAX_SYMBOLS_PER_FRAME)]
        max_symbols_per_frame: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a hypothesis file against a corpus split.
    Eval {
        #[arg(long)]
        hyps: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
        #[arg(long, default_value = "all", value_parser = parse_tasks)]
        tasks: TaskSet,
        /// Metrics file (`key=value` lines).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Strategy x position grid, then all task subsets for the best
    /// position of each strategy.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, required_unless_present = "dry_run")]
        corpus: Option<PathBuf>,
        #[arg(long, required_unless_present = "dry_run")]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        /// List the planned runs and exit.
        #[arg(long)]
        dry_run: bool,
    },
    /// Print a documented config template.
    DefaultConfig {
        #[arg(value_enum)]
        kind: ConfigKind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ConfigKind {
    Gen,
    Train,
    Ablate,
}

fn parse_split(s: &str) -> Result<Split, String> {
    Split::parse(s).map_err(|e| e.to_string())
}

fn parse_tasks(s: &str) -> Result<TaskSet, String> {
    if s == "all" {
        return Ok(TaskSet::all(NUM_AUX_TASKS));
    }
    TaskSet::parse_list(s).map_err(|e| e.to_string())
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl fmt::Display) -> Self {
        Failure { code: 1, message: message.to_string() }
    }
}

impl From<dyntask::Error> for Failure {
    fn from(e: dyntask::Error) -> Self {
        let code = match e {
            dyntask::Error::Numerical(_) => 3,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: 2, message: e.to_string() }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure { code: 2, message: e.to_string() }
    }
}

type Outcome = Result<(), Failure>;

fn out_path(p: &Path) -> PathBuf {
    match std::env::var_os("DYNTASK_OUT") {
        Some(root) if p.is_relative() => Path::new(&root).join(p),
        _ => p.to_path_buf(),
    }
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Failure> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Outcome {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

fn gen_data(config: Option<&Path>, out: &Path) -> Outcome {
    let cfg: GenConfig = load_config(config)?;
    let corpus = gen_corpus(&cfg)?;
    let out = out_path(out);
    let manifest = io::write_corpus(&out, &corpus, Some(&cfg))?;
    log::info!("wrote {} utterances to {}", corpus.len(), out.display());
    println!("{}", manifest.hash);
    Ok(())
}

struct TrainArgs {
    epochs: Option<usize>,
    seed: Option<u64>,
    strategy: Option<ActivationStrategy>,
    position: Option<ActivationPosition>,
    no_partial: bool,
}

fn run_train(config: Option<&Path>, corpus_dir: &Path, out: &Path, args: TrainArgs) -> Outcome {
    let mut cfg: TrainConfig = load_config(config)?;
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(s) = args.strategy {
        cfg.model.strategy = s;
    }
    if let Some(p) = args.position {
        cfg.model.position = p;
    }
    if args.no_partial {
        cfg.use_partial = false;
    }
    cfg.validate().map_err(Failure::usage)?;
    let (corpus, manifest) = io::read_corpus(corpus_dir)?;
    let outcome = train(&corpus, &manifest.hash, &cfg, &mut |_| {})?;
    let out = out_path(out);
    fs::create_dir_all(&out)?;
    checkpoint::save(&out.join("model.ckpt"), &outcome.model, &corpus.codec)?;
    write_file(&out.join("run.json"), &serde_json::to_string_pretty(&outcome.manifest)?)?;
    log::info!(
        "best epoch {} (dev WER {:.4}); checkpoint in {}",
        outcome.manifest.best_epoch,
        outcome.manifest.best_dev_wer,
        out.display()
    );
    Ok(())
}

fn split_or_fail<'a>(corpus: &'a dyntask::data::Corpus, split: Split) -> Result<Vec<&'a AnnotatedUtterance>, Failure> {
    let utts = corpus.split_vec(split);
    if utts.is_empty() {
        return Err(Failure::usage(format!("split {} is empty", split.name())));
    }
    Ok(utts)
}

fn decode(
    ckpt: &Path,
    corpus_dir: &Path,
    split: Split,
    tasks: TaskSet,
    opts: (usize, usize),
    out: &Path,
) -> Outcome {
    let (model, manifest) = checkpoint::load(ckpt)?;
    if tasks.combination_index(model.config().num_aux).is_err() {
        return Err(Failure::usage(format!("tasks {tasks} are unknown to the checkpoint")));
    }
    let (corpus, _) = io::read_corpus(corpus_dir)?;
    if corpus.codec != manifest.codec {
        return Err(Failure::usage("corpus vocabulary differs from the checkpoint's"));
    }
    let vocab = build_vocab(&manifest.codec)?;
    let utts = split_or_fail(&corpus, split)?;
    let opts = DecodeOptions {
        tasks,
        beam: opts.0,
        max_symbols_per_frame: opts.1,
    };
    let hyps = decode_all(&model, &utts, &opts)?;
    let ids: Vec<&str> = utts.iter().map(|u| u.id.as_str()).collect();
    let out = out_path(out);
    io::write_hypotheses(&out, &ids, &hyps, &vocab)?;
    log::info!("decoded {} utterances with tasks {tasks} into {}", hyps.len(), out.display());
    Ok(())
}

fn eval(hyps: &Path, corpus_dir: &Path, split: Split, tasks: TaskSet, out: Option<&Path>) -> Outcome {
    let (corpus, _) = io::read_corpus(corpus_dir)?;
    let vocab = build_vocab(&corpus.codec)?;
    let lines = io::read_hypotheses(hyps, &vocab)?;
    let utts = split_or_fail(&corpus, split)?;
    let mut by_id: HashMap<String, Vec<u32>> = lines.into_iter().collect();
    let mut ordered = Vec::with_capacity(utts.len());
    for u in &utts {
        let h = by_id
            .remove(&u.id)
            .ok_or_else(|| Failure { code: 2, message: format!("no hypothesis for utterance {}", u.id) })?;
        ordered.push(h);
    }
    if let Some(extra) = by_id.keys().next() {
        return Err(Failure { code: 2, message: format!("hypothesis {extra} is not in split {}", split.name()) });
    }
    let report = evaluate(&utts, &ordered, tasks, &vocab)?;
    print!("{}", report.to_text());
    if let Some(out) = out {
        write_file(&out_path(out), &report.to_metrics_file())?;
    }
    Ok(())
}

fn ablate(config: Option<&Path>, corpus_dir: Option<&Path>, out: Option<&Path>, epochs: Option<usize>, dry_run: bool) -> Outcome {
    let mut cfg: AblationConfig = load_config(config)?;
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    cfg.train.validate().map_err(Failure::usage)?;
    if cfg.beam == 0 {
        return Err(Failure::usage("beam must be at least 1"));
    }
    if dry_run {
        for line in experiment::plan(&cfg) {
            println!("{line}");
        }
        return Ok(());
    }
    let (Some(corpus_dir), Some(out)) = (corpus_dir, out) else {
        return Err(Failure::usage("--corpus and --out are required"));
    };
    let (corpus, manifest) = io::read_corpus(corpus_dir)?;
    let result = experiment::run_ablation(&corpus, &manifest.hash, &cfg, &mut |msg| log::info!("{msg}"))?;
    let out = out_path(out);
    for row in &result.grid {
        let name = format!("grid/{}_{}.metrics", row.strategy, row.position);
        write_file(&out.join(name), &row.report.to_metrics_file())?;
    }
    for row in &result.subsets {
        let name = format!("subsets/{}/{}.metrics", row.strategy, row.report.tasks);
        write_file(&out.join(name), &row.report.to_metrics_file())?;
    }
    let grid = result.grid_table();
    let subsets = result.subset_tables();
    write_file(&out.join("grid.txt"), &grid)?;
    write_file(&out.join("subsets.txt"), &subsets)?;
    println!("{grid}\n{subsets}");
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::GenData { config, out } => gen_data(config.as_deref(), &out),
        Command::Train {
            config,
            corpus,
            out,
            epochs,
            seed,
            strategy,
            position,
            no_partial,
        } => run_train(
            config.as_deref(),
            &corpus,
            &out,
            TrainArgs {
                epochs,
                seed,
                strategy,
                position,
                no_partial,
            },
        ),
        Command::Decode {
            checkpoint,
            corpus,
            split,
            tasks,
            beam,
            max_symbols_per_frame,
            out,
        } => decode(&checkpoint, &corpus, split, tasks, (beam as usize, max_symbols_per_frame), &out),
        Command::Eval {
            hyps,
            corpus,
            split,
            tasks,
            out,
        } => eval(&hyps, &corpus, split, tasks, out.as_deref()),
        Command::Ablate {
            config,
            corpus,
            out,
            epochs,
            dry_run,
        } => ablate(config.as_deref(), corpus.as_deref(), out.as_deref(), epochs, dry_run),
        Command::DefaultConfig { kind } => {
            match kind {
                ConfigKind::Gen => print!("{}", templates::GEN),
                ConfigKind::Train => print!("{}", templates::train()),
                ConfigKind::Ablate => print!("{}", templates::ablate()),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
