//! Argument parsing and dispatch.
//!
//! Option precedence is CLI flag > `--config` file > built-in default, with
//! `CROSSGEN_SEED` as a final fallback for the seed. Every command writes a
//! `config.txt` snapshot of its fully resolved settings beside its outputs;
//! when `--out` is omitted, outputs go to a fresh `runs/<stage>-<unix
//! seconds>-s<seed>` directory so sweep runs never overwrite each other.

use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};

use crossgen::aipx::read_pairset;
use crossgen::checkpoint::load_checkpoint;
use crossgen::config::{
    self, load_config_file, parse_config_text, resolve, resolve_seed, seed_from_env, FileConfig,
};
use crossgen::corpus::prepare_pairs;
use crossgen::error::{Error, Result};
use crossgen::eval::{
    classify_generated, generate_test_images, generated_vs_real_grid, mask_sweep, Generator,
};
use crossgen::reproduce::{load_mnist_pair, run_reproduce, ReproduceConfig};
use crossgen::synth::synth_all;
use crossgen::train::{
    lenet_from_checkpoint, train_aivae, train_aivaegan, train_lenet5, TrainConfig, ARCH_AIVAE,
    ARCH_AIVAEGAN, ARCH_LENET5,
};
use crossgen_core::loss::GeneratorLossMode;

#[derive(Parser)]
#[command(
    name = "crossgen",
    version,
    about = "Audio-to-image pair preparation, generative training, and classifier-scored evaluation"
)]
struct Cli {
    /// `key = value` config file; explicit flags take precedence over it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the stand-in corpora (digit images plus both audio corpora).
    Synth {
        /// Root directory; receives mnist/, fsdd/, and scd/.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build aligned audio-image pair files from the source corpora.
    Prepare {
        /// Directory with the four IDX digit files.
        #[arg(long)]
        mnist: Option<PathBuf>,
        /// Spoken-digit corpus directory (flat WAV files).
        #[arg(long)]
        fsdd: Option<PathBuf>,
        /// Digit-word corpus directory (one folder per word).
        #[arg(long)]
        scd: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Restrict to one corpus: fsdd or scd.
        #[arg(long, value_name = "CORPUS")]
        only: Option<String>,
    },
    /// Train a model: aivae and aivaegan on a pair file, lenet5 on the IDX
    /// digit directory.
    Train {
        /// aivae | aivaegan | lenet5
        model: String,
        /// Pair file (.aipx), or the IDX directory for lenet5.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Reconstruction weight(s); several values run once per value.
        #[arg(long, num_args = 1.., value_name = "A")]
        alpha: Vec<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Resume from a rolling checkpoint written by an earlier run.
        #[arg(long, value_name = "CKPT")]
        resume: Option<PathBuf>,
        /// Adversarial generator term: nonsaturating | minimax.
        #[arg(long, value_name = "MODE")]
        generator_loss_mode: Option<String>,
    },
    /// Evaluate a generator checkpoint by classifying its generated images.
    Eval {
        /// Generator checkpoint (.aick).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Pair file (.aipx) providing the audio and reference labels.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Classifier checkpoint (.aick).
        #[arg(long)]
        classifier: Option<PathBuf>,
        /// Also run the 65-step latent masking sweep.
        #[arg(long)]
        mask_sweep: bool,
        /// Decode posterior means instead of reparametrized samples.
        #[arg(long)]
        use_mean: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every training and evaluation behind the published tables and
    /// write a summary with tolerance verdicts.
    Reproduce {
        /// Confirm the full pipeline: eleven training runs plus evaluations.
        #[arg(long)]
        paper_tables: bool,
        /// Directory with the prepared pair files.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Directory with the four IDX digit files.
        #[arg(long)]
        mnist: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Skip stages recorded as finished in the state file.
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', "; "));
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => load_config_file(path)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Synth { out, seed } => cmd_synth(&file, out, seed),
        Command::Prepare { mnist, fsdd, scd, out, seed, only } => {
            cmd_prepare(&file, mnist, fsdd, scd, out, seed, only)
        }
        Command::Train {
            model,
            data,
            alpha,
            epochs,
            batch_size,
            seed,
            out,
            resume,
            generator_loss_mode,
        } => cmd_train(
            &file,
            &model,
            data,
            alpha,
            epochs,
            batch_size,
            seed,
            out,
            resume,
            generator_loss_mode,
        ),
        Command::Eval { model, data, classifier, mask_sweep, use_mean, seed, out } => {
            cmd_eval(&file, model, data, classifier, mask_sweep, use_mean, seed, out)
        }
        Command::Reproduce { paper_tables, data, mnist, out, resume, seed } => {
            cmd_reproduce(&file, paper_tables, data, mnist, out, resume, seed)
        }
    }
}

fn unix_seconds() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Explicit --out (or config `out`) is used as-is; otherwise a fresh
/// timestamped run directory.
fn run_dir(cli_out: Option<PathBuf>, file: &FileConfig, stage: &str, seed: u64) -> PathBuf {
    cli_out
        .or_else(|| file.path("out"))
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("{stage}-{}-s{seed}", unix_seconds())))
}

fn required(path: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    path.ok_or_else(|| Error::invalid(format!("missing required --{flag} (or config key)")))
}

fn seed_of(cli: Option<u64>, file: &FileConfig) -> Result<u64> {
    Ok(resolve_seed(cli, file.u64("seed")?, seed_from_env()?))
}

fn cmd_synth(file: &FileConfig, out: Option<PathBuf>, seed: Option<u64>) -> Result<()> {
    let seed = seed_of(seed, file)?;
    let out = run_dir(out, file, "synth", seed);
    config::write_snapshot(
        &out,
        &[("seed", seed.to_string()), ("out", out.display().to_string())],
    )?;
    synth_all(&out, seed)?;
    println!(
        "stand-in corpora written: {0}/mnist, {0}/fsdd, {0}/scd",
        out.display()
    );
    Ok(())
}

fn cmd_prepare(
    file: &FileConfig,
    mnist: Option<PathBuf>,
    fsdd: Option<PathBuf>,
    scd: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    only: Option<String>,
) -> Result<()> {
    let seed = seed_of(seed, file)?;
    let mnist = required(mnist.or_else(|| file.path("mnist")), "mnist")?;
    let fsdd = fsdd.or_else(|| file.path("fsdd"));
    let scd = scd.or_else(|| file.path("scd"));
    let out = run_dir(out, file, "prepare", seed);

    let mut snapshot: Vec<(&str, String)> = vec![
        ("seed", seed.to_string()),
        ("mnist", mnist.display().to_string()),
        ("out", out.display().to_string()),
    ];
    if let Some(d) = &fsdd {
        snapshot.push(("fsdd", d.display().to_string()));
    }
    if let Some(d) = &scd {
        snapshot.push(("scd", d.display().to_string()));
    }
    config::write_snapshot(&out, &snapshot)?;

    let manifest = prepare_pairs(
        &mnist,
        fsdd.as_deref(),
        scd.as_deref(),
        &out,
        seed,
        only.as_deref(),
    )?;
    print!("{manifest}");
    println!("pair files written under {}", out.display());
    Ok(())
}

fn parse_loss_mode(raw: &str) -> Result<GeneratorLossMode> {
    match raw {
        "nonsaturating" => Ok(GeneratorLossMode::NonSaturating),
        "minimax" => Ok(GeneratorLossMode::Minimax),
        other => Err(Error::invalid(format!(
            "generator_loss_mode must be nonsaturating or minimax, got {other:?}"
        ))),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    file: &FileConfig,
    model: &str,
    data: Option<PathBuf>,
    alpha: Vec<f64>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    resume: Option<PathBuf>,
    generator_loss_mode: Option<String>,
) -> Result<()> {
    if ![ARCH_AIVAE, ARCH_AIVAEGAN, ARCH_LENET5].contains(&model) {
        return Err(Error::invalid(format!(
            "model must be aivae, aivaegan, or lenet5, got {model:?}"
        )));
    }
    let seed = seed_of(seed, file)?;
    let data = required(data.or_else(|| file.path("data")), "data")?;
    let alphas = if alpha.is_empty() {
        file.alphas()?.unwrap_or_else(|| vec![1.0])
    } else {
        alpha
    };
    if alphas.len() > 1 && model != ARCH_AIVAEGAN {
        return Err(Error::invalid(format!(
            "an alpha sweep only applies to aivaegan; {model} takes no alpha"
        )));
    }
    let mode_raw = generator_loss_mode
        .or_else(|| file.string("generator_loss_mode"))
        .unwrap_or_else(|| "nonsaturating".to_string());
    let defaults = TrainConfig::default();
    let base = TrainConfig {
        epochs: resolve(epochs, file.usize("epochs")?, defaults.epochs),
        batch_size: resolve(batch_size, file.usize("batch_size")?, defaults.batch_size),
        latent_dim: resolve(None, file.usize("latent_dim")?, defaults.latent_dim),
        lr_aivae: resolve(None, file.f64("lr_aivae")?, defaults.lr_aivae),
        lr_gan: resolve(None, file.f64("lr_gan")?, defaults.lr_gan),
        seed,
        dataset: data.display().to_string(),
        generator_loss_mode: parse_loss_mode(&mode_raw)?,
        ..defaults
    };

    let parent = run_dir(out, file, model, seed);
    for &a in &alphas {
        let dir = if alphas.len() > 1 {
            parent.join(format!("a{a}"))
        } else {
            parent.clone()
        };
        let cfg = TrainConfig { alpha: a, ..base.clone() };
        cfg.validate()?;
        let snapshot = cfg.snapshot_with(model);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let snap_path = dir.join("config.txt");
        std::fs::write(&snap_path, &snapshot).map_err(|e| Error::io(&snap_path, e))?;

        match model {
            ARCH_LENET5 => {
                let (mnist_train, mnist_test) = load_mnist_pair(&data)?;
                eprintln!(
                    "training lenet5 on {} images for {} epochs",
                    mnist_train.len(),
                    cfg.epochs
                );
                let (_, log) = train_lenet5(
                    &cfg,
                    &mnist_train,
                    &mnist_test,
                    &dir,
                    &snapshot,
                    resume.as_deref(),
                )?;
                let acc = log.records.last().map_or(f64::NAN, |r| r.accuracy);
                println!("lenet5 trained → {} (last test accuracy {acc:.4})", dir.display());
            }
            ARCH_AIVAE => {
                let pairs = read_pairset(&data)?;
                eprintln!(
                    "training aivae on {} pairs for {} epochs",
                    pairs.pairs.len(),
                    cfg.epochs
                );
                let (model, _) =
                    train_aivae(&cfg, &pairs, &dir, &snapshot, resume.as_deref())?;
                let gen = Generator::Vae(model);
                generated_vs_real_grid(&gen, &pairs, seed, &dir.join("generated_vs_real.png"))?;
                println!("aivae trained → {}", dir.display());
            }
            _ => {
                let pairs = read_pairset(&data)?;
                eprintln!(
                    "training aivaegan (alpha {a}) on {} pairs for {} epochs",
                    pairs.pairs.len(),
                    cfg.epochs
                );
                let (model, _) =
                    train_aivaegan(&cfg, &pairs, &dir, &snapshot, resume.as_deref())?;
                let gen = Generator::Gan(model);
                generated_vs_real_grid(&gen, &pairs, seed, &dir.join("generated_vs_real.png"))?;
                println!("aivaegan alpha={a} trained → {}", dir.display());
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    file: &FileConfig,
    model: Option<PathBuf>,
    data: Option<PathBuf>,
    classifier: Option<PathBuf>,
    mask_sweep_flag: bool,
    use_mean_flag: bool,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<()> {
    let seed = seed_of(seed, file)?;
    let model_path = required(model.or_else(|| file.path("model")), "model")?;
    let data = required(data.or_else(|| file.path("data")), "data")?;
    let classifier_path =
        required(classifier.or_else(|| file.path("classifier")), "classifier")?;
    let with_sweep = mask_sweep_flag || file.bool("mask_sweep")?.unwrap_or(false);
    let use_mean = use_mean_flag || file.bool("use_mean")?.unwrap_or(false);
    let out = run_dir(out, file, "eval", seed);

    config::write_snapshot(
        &out,
        &[
            ("seed", seed.to_string()),
            ("model", model_path.display().to_string()),
            ("classifier", classifier_path.display().to_string()),
            ("data", data.display().to_string()),
            ("mask_sweep", with_sweep.to_string()),
            ("use_mean", use_mean.to_string()),
            ("out", out.display().to_string()),
        ],
    )?;

    let ckpt = load_checkpoint(&model_path)?;
    let gen = Generator::from_checkpoint(&ckpt)?;
    let classifier = lenet_from_checkpoint(&load_checkpoint(&classifier_path)?)?;
    let pairs = read_pairset(&data)?;

    // a VAE-GAN checkpoint carries its α in the embedded snapshot
    let alpha = if gen.arch() == ARCH_AIVAEGAN {
        parse_config_text(&ckpt.config_text, &model_path)
            .ok()
            .and_then(|c| c.f64("alpha").ok().flatten())
    } else {
        None
    };

    let dataset_tag = data
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("pairs")
        .to_string();
    eprintln!("evaluating {} on {} pairs", gen.arch(), pairs.pairs.len());
    let set = generate_test_images(&gen, &pairs, seed, use_mean)?;
    let report = classify_generated(&classifier, &set, &dataset_tag, gen.arch(), alpha, seed)?;
    report.write(&out.join("eval_report.txt"))?;
    generated_vs_real_grid(&gen, &pairs, seed, &out.join("reconstruction_grid.png"))?;

    if with_sweep {
        eprintln!("running 65-step latent masking sweep");
        let sweep = mask_sweep(&gen, &pairs, &classifier, seed, use_mean, 1)?;
        sweep.write(&out.join("mask_sweep.tsv"))?;
    }

    print!("{}", report.to_text());
    println!("report written under {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_reproduce(
    file: &FileConfig,
    paper_tables: bool,
    data: Option<PathBuf>,
    mnist: Option<PathBuf>,
    out: Option<PathBuf>,
    resume: bool,
    seed: Option<u64>,
) -> Result<()> {
    if !paper_tables {
        return Err(Error::invalid(
            "pass --paper-tables to confirm the full multi-hour pipeline",
        ));
    }
    let seed = seed_of(seed, file)?;
    let data = required(data.or_else(|| file.path("data")), "data")?;
    let mnist = required(mnist.or_else(|| file.path("mnist")), "mnist")?;
    let out = run_dir(out, file, "reproduce", seed);

    config::write_snapshot(
        &out,
        &[
            ("seed", seed.to_string()),
            ("data", data.display().to_string()),
            ("mnist", mnist.display().to_string()),
            ("out", out.display().to_string()),
        ],
    )?;

    let cfg = ReproduceConfig::new(seed, data, mnist, out, resume);
    let summary = run_reproduce(&cfg)?;
    print!("{summary}");
    Ok(())
}
