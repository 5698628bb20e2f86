//! Command-line surface: train, tag, and eval subcommands.
//!
//! Reports (epoch tables, tagged output, score tables) go to standard
//! output; progress and diagnostics go to standard error. Usage errors
//! exit 2 (via the argument parser), runtime failures exit 1.

use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nertag_core::corpus::{normalize_chars, IobTag, Vocab};
use nertag_core::embeddings::TokenInput;
use nertag_core::eval;
use nertag_core::training::{train, Model, ModelConfig, Variant};

use crate::checkpoint;
use crate::io;

/// Bi-LSTM named-entity tagger for Indonesian text, with softmax or
/// linear-chain CRF output layers and optional POS-tag embeddings.
#[derive(Debug, Parser)]
#[command(name = "nertag", version)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a tagger on an annotated corpus and write a checkpoint.
    Train(TrainArgs),
    /// Tag sentences (surface + POS columns) with a trained checkpoint.
    Tag(TagArgs),
    /// Score a predictions file against gold annotations.
    Eval(EvalArgs),
}

/// The four architectures: output layer (softmax or CRF) crossed with
/// whether POS-tag embeddings join the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Crf,
    CrfPos,
    Softmax,
    SoftmaxPos,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Variant {
        match v {
            VariantArg::Crf => Variant::Crf,
            VariantArg::CrfPos => Variant::CrfPos,
            VariantArg::Softmax => Variant::Softmax,
            VariantArg::SoftmaxPos => Variant::SoftmaxPos,
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Architecture to train.
    #[arg(long, value_enum)]
    variant: VariantArg,
    /// Training corpus (token TAB pos TAB ne, blank line between
    /// sentences).
    #[arg(long)]
    train: PathBuf,
    /// Held-out corpus scored each epoch; the checkpoint keeps the
    /// best-scoring epoch's parameters.
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Corpus scored once with the final model, after training.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Pretrained word vectors, word2vec text format.
    #[arg(long)]
    emb: PathBuf,
    /// Where to write the trained checkpoint.
    #[arg(long)]
    out: PathBuf,
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// SGD learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Global gradient-norm clip threshold.
    #[arg(long)]
    clip: Option<f64>,
    /// Seed for initialization, shuffling, and dropout.
    #[arg(long)]
    seed: Option<u64>,
    /// Input-layer dropout probability.
    #[arg(long)]
    dropout: Option<f64>,
    /// Constrain CRF decoding to IOB-legal transitions.
    #[arg(long)]
    decode_mask: bool,
    /// Update pretrained word vectors during training instead of keeping
    /// them frozen.
    #[arg(long)]
    finetune_emb: bool,
    /// Print the fully resolved configuration before training.
    #[arg(long)]
    dump_config: bool,
}

#[derive(Debug, Args)]
struct TagArgs {
    /// Trained checkpoint.
    #[arg(long)]
    model: PathBuf,
    /// Sentences to tag: surface TAB pos lines (a third column is
    /// ignored), blank line between sentences.
    #[arg(long)]
    input: PathBuf,
    /// Output file; standard output when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Gold corpus (strictly validated).
    #[arg(long)]
    gold: PathBuf,
    /// Predictions file (IOB violations tolerated).
    #[arg(long)]
    pred: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Tag(args) => cmd_tag(args),
        Command::Eval(args) => cmd_eval(args),
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let train_sents = io::read_corpus(&args.train)?;
    let dev_sents = args.dev.as_deref().map(io::read_corpus).transpose()?;
    let test_sents = args.test.as_deref().map(io::read_corpus).transpose()?;
    let pretrained = io::read_vectors(&args.emb)?;

    let pretrained_words: BTreeSet<String> = pretrained.words().map(String::from).collect();
    let vocab = Vocab::build(&train_sents, &pretrained_words);

    let mut config = ModelConfig::for_variant(args.variant.into());
    config.dims.word_dim = pretrained.dim();
    if let Some(e) = args.epochs {
        config.epochs = e;
    }
    if let Some(lr) = args.lr {
        config.learning_rate = lr;
    }
    if let Some(c) = args.clip {
        config.clip_norm = c;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(d) = args.dropout {
        config.input_dropout = d;
    }
    config.decode_mask = args.decode_mask;
    config.finetune_word_emb = args.finetune_emb;

    if args.dump_config {
        print_config(&config);
    }

    eprintln!(
        "training {} on {} sentences ({} held out), vocabulary {}, {} pretrained vectors",
        config.variant(),
        train_sents.len(),
        dev_sents.as_ref().map_or(0, Vec::len),
        vocab.word_count(),
        pretrained.len(),
    );

    let outcome = train(&train_sents, dev_sents.as_deref(), &vocab, &pretrained, &config)?;

    println!("epoch\tmean_loss\ttrain_acc\tdev_f1");
    for (i, stats) in outcome.history.iter().enumerate() {
        let dev = stats.dev_f1.map_or_else(|| "-".to_string(), |f| format!("{f:.4}"));
        println!("{}\t{:.6}\t{:.4}\t{}", i + 1, stats.mean_loss, stats.train_accuracy, dev);
    }

    checkpoint::save(&args.out, &outcome.model, &vocab)?;
    eprintln!("checkpoint written to {}", args.out.display());

    if let Some(test) = test_sents {
        let report = score_corpus(&outcome.model, &vocab, &test)?;
        print!("{}", eval::report_tsv(&report));
    }
    Ok(())
}

fn score_corpus(
    model: &Model,
    vocab: &Vocab,
    sents: &[nertag_core::corpus::Sentence],
) -> Result<eval::ScoreReport> {
    let gold: Vec<Vec<IobTag>> = sents.iter().map(|s| s.ne_tags()).collect();
    let pred: Vec<Vec<IobTag>> = sents.iter().map(|s| model.predict(vocab, s)).collect();
    eval::score(&gold, &pred).context("scoring")
}

fn print_config(c: &ModelConfig) {
    println!("variant\t{}", c.variant());
    println!("word_dim\t{}", c.dims.word_dim);
    println!("char_dim\t{}", c.dims.char_dim);
    println!("c2w_hidden\t{}", c.dims.c2w_hidden);
    println!("pos_dim\t{}", c.dims.pos_dim);
    println!("lstm_hidden\t{}", c.dims.lstm_hidden);
    println!("fc_hidden\t{}", c.dims.fc_hidden);
    println!("num_tags\t{}", c.dims.num_tags);
    println!("seed\t{}", c.seed);
    println!("learning_rate\t{}", c.learning_rate);
    println!("clip_norm\t{}", c.clip_norm);
    println!("epochs\t{}", c.epochs);
    println!("input_dropout\t{}", c.input_dropout);
    println!("finetune_word_emb\t{}", c.finetune_word_emb);
    println!("decode_mask\t{}", c.decode_mask);
}

fn cmd_tag(args: TagArgs) -> Result<()> {
    let (model, vocab) = checkpoint::load(&args.model)?;
    let sentences = io::read_tag_input(&args.input)?;

    let mut all_tags = Vec::with_capacity(sentences.len());
    for sent in &sentences {
        let inputs: Vec<TokenInput> = sent
            .iter()
            .map(|(surface, pos)| TokenInput {
                word: vocab.word_index(surface),
                chars: normalize_chars(surface),
                pos: pos.index(),
            })
            .collect();
        let tags: Vec<IobTag> = model
            .predict_tokens(&inputs)
            .into_iter()
            .map(|k| IobTag::from_index(k).expect("checkpoint uses the standard tag set"))
            .collect();
        all_tags.push(tags);
    }

    let text = io::format_tagged(&sentences, &all_tags);
    match args.output {
        Some(path) => std::fs::write(&path, text)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let gold_sents = io::read_corpus(&args.gold)?;
    let gold: Vec<Vec<IobTag>> = gold_sents.iter().map(|s| s.ne_tags()).collect();
    let pred = io::read_predictions(&args.pred)?;
    let report = eval::score(&gold, &pred).context("aligning gold with predictions")?;
    print!("{}", eval::report_tsv(&report));
    Ok(())
}
