//! `arbor` — a dependency-parsing workbench for free-word-order corpora.
//!
//! One binary, eight subcommands: synthesize or transform corpora, train a
//! parser in any of the four loss/augmentation regimes, parse and evaluate,
//! and test robustness and statistical significance.
//!
//! Exit codes: 0 success, 1 usage error (bad flags or settings), 2 data
//! error (unreadable or invalid files).

mod config;
mod io;

use std::path::{Path, PathBuf};
use std::time::Instant;

use arbor_core::augment::{build_augmented_corpus, permute_treebank, AugmentConfig};
use arbor_core::decode::Decoder;
use arbor_core::eval::{paired_t_test, parse_treebank, robustness_report, score, TTestNote};
use arbor_core::model::ModelConfig;
use arbor_core::synth::{generate_corpus, split_corpus, GrammarSpec};
use arbor_core::train::{
    fit, render_log, render_summary, Augmentation, LossMode, NegativeMode, TrainConfig, TrainError,
};
use clap::{Parser, Subcommand};
use config::ConfigFile;

#[derive(Debug)]
pub enum CliError {
    /// Wrong invocation: unknown values, inconsistent settings. Exit 1.
    Usage(String),
    /// Unreadable or invalid input data. Exit 2.
    Data(String),
}

#[derive(Parser)]
#[command(
    name = "arbor",
    version,
    about = "Dependency parsing with word-order-robust contrastive training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replace every sentence with a random dependency-preserving permutation.
    Permute {
        /// Input treebank (CoNLL-U).
        #[arg(long = "in")]
        input: PathBuf,
        /// Output treebank (CoNLL-U).
        #[arg(long)]
        out: PathBuf,
        /// Seed for the permutation draw.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Append rotated copies of every sentence (rotation data augmentation).
    Augment {
        /// Input treebank (CoNLL-U).
        #[arg(long = "in")]
        input: PathBuf,
        /// Output treebank: originals followed by their rotated copies.
        #[arg(long)]
        out: PathBuf,
        /// Rotated copies per sentence.
        #[arg(long, default_value_t = 1)]
        copies: usize,
        /// Seed for the rotation draws.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a synthetic case-marked corpus and write train/dev/test splits.
    Synth {
        /// Optional key=value settings file (grammar sizes, split sizes, seed).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for train.conllu, dev.conllu, and test.conllu.
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
    },
    /// Train a parser and save the best-dev-LAS checkpoint.
    Train {
        /// Training treebank (CoNLL-U).
        #[arg(long)]
        train: PathBuf,
        /// Development treebank for checkpoint selection.
        #[arg(long)]
        dev: PathBuf,
        /// Optional key=value settings file; explicit flags win.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Objective: parsing cross-entropy alone or with the contrastive term.
        #[arg(long, value_parser = ["ce", "ce+cssl"])]
        loss: Option<String>,
        /// Corpus augmentation applied before training.
        #[arg(long, value_parser = ["none", "rotation"])]
        augment: Option<String>,
        /// Contrastive temperature.
        #[arg(long)]
        tau: Option<f64>,
        /// Weight of the contrastive term.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long = "batch-size")]
        batch_size: Option<usize>,
        /// Learning rate for SGD with momentum.
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Where contrastive negatives come from.
        #[arg(long, value_parser = ["in-batch", "sampled"])]
        negatives: Option<String>,
        /// Disable sinusoidal position encodings (order-agnostic encoder).
        #[arg(long = "no-position-encoding")]
        no_position_encoding: bool,
        /// Checkpoint output path.
        #[arg(long = "model-out")]
        model_out: Option<PathBuf>,
    },
    /// Parse a treebank with a trained model (MST decoding).
    Parse {
        /// Trained model checkpoint.
        #[arg(long)]
        model: PathBuf,
        /// Input treebank; existing heads and labels are ignored.
        #[arg(long = "in")]
        input: PathBuf,
        /// Output treebank with predicted heads and labels.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a prediction against gold (UAS/LAS).
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Exclude PUNCT tokens from the score.
        #[arg(long = "ignore-punct")]
        ignore_punct: bool,
    },
    /// Compare accuracy on original vs randomly permuted copies of a treebank.
    Robustness {
        /// Trained model checkpoint.
        #[arg(long)]
        model: PathBuf,
        /// Gold treebank to permute and re-parse.
        #[arg(long)]
        gold: PathBuf,
        /// Number of permutation rounds.
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Seed for the permutation draws.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Paired t-test on per-sentence LAS between two predictions.
    Significance {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long = "pred-a")]
        pred_a: PathBuf,
        #[arg(long = "pred-b")]
        pred_b: PathBuf,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            if matches!(
                err.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
            ) {
                print!("{err}");
                std::process::exit(0);
            }
            eprint!("{err}");
            std::process::exit(1);
        }
    };
    if let Err(err) = run(cli.command) {
        let (code, message) = match err {
            CliError::Usage(m) => (1, m),
            CliError::Data(m) => (2, m),
        };
        eprintln!("error: {message}");
        std::process::exit(code);
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Permute { input, out, seed } => cmd_permute(&input, &out, seed),
        Command::Augment {
            input,
            out,
            copies,
            seed,
        } => cmd_augment(&input, &out, copies, seed),
        Command::Synth { config, out_dir } => cmd_synth(config.as_deref(), &out_dir),
        Command::Train {
            train,
            dev,
            config,
            loss,
            augment,
            tau,
            lambda,
            batch_size,
            lr,
            epochs,
            seed,
            negatives,
            no_position_encoding,
            model_out,
        } => cmd_train(TrainArgs {
            train,
            dev,
            config,
            loss,
            augment,
            tau,
            lambda,
            batch_size,
            lr,
            epochs,
            seed,
            negatives,
            no_position_encoding,
            model_out,
        }),
        Command::Parse { model, input, out } => cmd_parse(&model, &input, &out),
        Command::Eval {
            gold,
            pred,
            ignore_punct,
        } => cmd_eval(&gold, &pred, ignore_punct),
        Command::Robustness {
            model,
            gold,
            k,
            seed,
        } => cmd_robustness(&model, &gold, k, seed),
        Command::Significance {
            gold,
            pred_a,
            pred_b,
        } => cmd_significance(&gold, &pred_a, &pred_b),
    }
}

fn cmd_permute(input: &Path, out: &Path, seed: u64) -> Result<(), CliError> {
    let tb = io::read_tree_treebank(input)?;
    let (permuted, _maps) =
        permute_treebank(&tb, seed).map_err(|e| CliError::Data(e.to_string()))?;
    io::write_treebank(out, &permuted)?;
    eprintln!("permuted {} sentences -> {}", permuted.len(), out.display());
    Ok(())
}

fn cmd_augment(input: &Path, out: &Path, copies: usize, seed: u64) -> Result<(), CliError> {
    let tb = io::read_tree_treebank(input)?;
    let cfg = AugmentConfig {
        copies_per_sentence: copies,
        seed,
        ..AugmentConfig::default()
    };
    let outcome = build_augmented_corpus(&tb, &cfg).map_err(|e| CliError::Usage(e.to_string()))?;
    for skipped in &outcome.skipped {
        eprintln!("{}: skipped: {skipped:?}", input.display());
    }
    io::write_treebank(out, &outcome.treebank)?;
    eprintln!(
        "augmented {} -> {} sentences -> {}",
        tb.len(),
        outcome.treebank.len(),
        out.display()
    );
    Ok(())
}

fn cmd_synth(config_path: Option<&Path>, out_dir: &Path) -> Result<(), CliError> {
    let cfg = match config_path {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::empty(),
    };
    let defaults = GrammarSpec::default();
    let grammar = GrammarSpec {
        nouns: cfg.resolve(None, "nouns", defaults.nouns)?,
        verbs: cfg.resolve(None, "verbs", defaults.verbs)?,
        adjectives: cfg.resolve(None, "adjectives", defaults.adjectives)?,
        min_len: cfg.resolve(None, "min-len", defaults.min_len)?,
        max_len: cfg.resolve(None, "max-len", defaults.max_len)?,
        seed: cfg.resolve(None, "seed", defaults.seed)?,
        ..defaults
    };
    let n_train: usize = cfg.resolve(None, "train-sentences", 500)?;
    let n_dev: usize = cfg.resolve(None, "dev-sentences", 100)?;
    let n_test: usize = cfg.resolve(None, "test-sentences", 200)?;
    cfg.finish()?;

    let total = n_train + n_dev + n_test;
    if n_train == 0 || n_dev == 0 || n_test == 0 {
        return Err(CliError::Usage(
            "train-sentences, dev-sentences, and test-sentences must all be positive".to_string(),
        ));
    }
    let corpus = generate_corpus(&grammar, total).map_err(|e| CliError::Usage(e.to_string()))?;
    let ratios = (
        n_train as f64 / total as f64,
        n_dev as f64 / total as f64,
        n_test as f64 / total as f64,
    );
    let (train_tb, dev_tb, test_tb) =
        split_corpus(&corpus, ratios, grammar.seed).map_err(|e| CliError::Usage(e.to_string()))?;

    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out_dir.display())))?;
    io::write_treebank(&out_dir.join("train.conllu"), &train_tb)?;
    io::write_treebank(&out_dir.join("dev.conllu"), &dev_tb)?;
    io::write_treebank(&out_dir.join("test.conllu"), &test_tb)?;
    eprintln!(
        "wrote {}/{}/{} sentences to {}",
        train_tb.len(),
        dev_tb.len(),
        test_tb.len(),
        out_dir.display()
    );
    Ok(())
}

struct TrainArgs {
    train: PathBuf,
    dev: PathBuf,
    config: Option<PathBuf>,
    loss: Option<String>,
    augment: Option<String>,
    tau: Option<f64>,
    lambda: Option<f64>,
    batch_size: Option<usize>,
    lr: Option<f64>,
    epochs: Option<usize>,
    seed: Option<u64>,
    negatives: Option<String>,
    no_position_encoding: bool,
    model_out: Option<PathBuf>,
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let cfg = match args.config.as_deref() {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::empty(),
    };
    let defaults = TrainConfig::default();
    let model_defaults = ModelConfig::default();

    let loss_mode = match cfg.resolve(args.loss, "loss", "ce".to_string())?.as_str() {
        "ce" => LossMode::Ce,
        "ce+cssl" => LossMode::CeCssl,
        other => {
            return Err(CliError::Usage(format!(
                "loss must be `ce` or `ce+cssl`, got `{other}`"
            )))
        }
    };
    let augmentation = match cfg
        .resolve(args.augment, "augment", "none".to_string())?
        .as_str()
    {
        "none" => Augmentation::None,
        "rotation" => Augmentation::Rotation,
        other => {
            return Err(CliError::Usage(format!(
                "augment must be `none` or `rotation`, got `{other}`"
            )))
        }
    };
    let negatives = match cfg
        .resolve(args.negatives, "negatives", "in-batch".to_string())?
        .as_str()
    {
        "in-batch" => NegativeMode::InBatch,
        "sampled" => NegativeMode::Sampled,
        other => {
            return Err(CliError::Usage(format!(
                "negatives must be `in-batch` or `sampled`, got `{other}`"
            )))
        }
    };

    let train_cfg = TrainConfig {
        batch_size: cfg.resolve(args.batch_size, "batch-size", defaults.batch_size)?,
        learning_rate: cfg.resolve(args.lr, "lr", defaults.learning_rate)?,
        epochs: cfg.resolve(args.epochs, "epochs", defaults.epochs)?,
        seed: cfg.resolve(args.seed, "seed", defaults.seed)?,
        loss_mode,
        augmentation,
        tau: cfg.resolve(args.tau, "tau", defaults.tau)?,
        lambda: cfg.resolve(args.lambda, "lambda", defaults.lambda)?,
        negatives,
        no_position_encoding: cfg
            .resolve_switch(args.no_position_encoding, "no-position-encoding")?,
        model: ModelConfig {
            dim: cfg.resolve(None, "dim", model_defaults.dim)?,
            proj_dim: cfg.resolve(None, "proj-dim", model_defaults.proj_dim)?,
            layers: cfg.resolve(None, "layers", model_defaults.layers)?,
            heads: cfg.resolve(None, "heads", model_defaults.heads)?,
            max_len: cfg.resolve(None, "max-len", model_defaults.max_len)?,
            ..model_defaults
        },
        ..defaults
    };
    let model_out = match args.model_out {
        Some(p) => p,
        None => PathBuf::from(cfg.resolve(None, "model-out", "model.bin".to_string())?),
    };
    cfg.finish()?;

    // Settings problems are usage errors before any work starts.
    train_cfg
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;

    let train_tb = io::read_tree_treebank(&args.train)?;
    let dev_tb = io::read_tree_treebank(&args.dev)?;

    let started = Instant::now();
    let mut outcome = fit(&train_tb, &dev_tb, &train_cfg).map_err(|e| match e {
        TrainError::Loss(_)
        | TrainError::Augment(_)
        | TrainError::Model(_)
        | TrainError::Eval(_) => CliError::Data(e.to_string()),
        other => CliError::Usage(other.to_string()),
    })?;
    outcome.report.wall_seconds = Some(started.elapsed().as_secs_f64());

    io::write_model_bytes(&model_out, &outcome.best_checkpoint)?;
    eprint!("{}", render_log(&outcome.report));
    eprintln!("checkpoint -> {}", model_out.display());
    print!("{}", render_summary(&outcome.report));
    Ok(())
}

fn cmd_parse(model: &Path, input: &Path, out: &Path) -> Result<(), CliError> {
    let model = io::read_model(model)?;
    let tb = io::read_treebank(input)?;
    let parsed =
        parse_treebank(&model, &tb, Decoder::Mst).map_err(|e| CliError::Data(e.to_string()))?;
    io::write_treebank(out, &parsed)?;
    eprintln!("parsed {} sentences -> {}", parsed.len(), out.display());
    Ok(())
}

fn cmd_eval(gold: &Path, pred: &Path, ignore_punct: bool) -> Result<(), CliError> {
    let gold_tb = io::read_tree_treebank(gold)?;
    let pred_tb = io::read_tree_treebank(pred)?;
    let result =
        score(&gold_tb, &pred_tb, ignore_punct).map_err(|e| CliError::Data(e.to_string()))?;
    println!("UAS={:.2} LAS={:.2}", result.uas, result.las);
    Ok(())
}

fn cmd_robustness(model: &Path, gold: &Path, k: usize, seed: u64) -> Result<(), CliError> {
    let model = io::read_model(model)?;
    let gold_tb = io::read_tree_treebank(gold)?;
    let report = robustness_report(&model, &gold_tb, k, seed, Decoder::Mst, false)
        .map_err(|e| CliError::Data(e.to_string()))?;
    println!("rounds={}", report.rounds);
    println!("original_uas={:.2}", report.original.uas);
    println!("original_las={:.2}", report.original.las);
    if let (Some(permuted), Some(du), Some(dl)) =
        (&report.permuted, report.delta_uas, report.delta_las)
    {
        println!("permuted_uas={:.2}", permuted.uas);
        println!("permuted_las={:.2}", permuted.las);
        println!("delta_uas={du:.2}");
        println!("delta_las={dl:.2}");
    }
    Ok(())
}

fn cmd_significance(gold: &Path, pred_a: &Path, pred_b: &Path) -> Result<(), CliError> {
    let gold_tb = io::read_tree_treebank(gold)?;
    let a_tb = io::read_tree_treebank(pred_a)?;
    let b_tb = io::read_tree_treebank(pred_b)?;
    let a = score(&gold_tb, &a_tb, false).map_err(|e| CliError::Data(e.to_string()))?;
    let b = score(&gold_tb, &b_tb, false).map_err(|e| CliError::Data(e.to_string()))?;
    let test = paired_t_test(&a.per_sentence_las, &b.per_sentence_las)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    println!("n={}", test.n);
    println!("mean_las_a={:.4}", mean(&a.per_sentence_las));
    println!("mean_las_b={:.4}", mean(&b.per_sentence_las));
    println!("t={:.6}", test.t);
    println!("p={:.6e}", test.p);
    let note = match test.note {
        TTestNote::Regular => "regular",
        TTestNote::AllDifferencesZero => "degenerate: all per-sentence differences are zero",
        TTestNote::ZeroVarianceNonzeroMean => {
            "degenerate: constant nonzero difference (zero variance)"
        }
    };
    println!("note={note}");
    Ok(())
}
