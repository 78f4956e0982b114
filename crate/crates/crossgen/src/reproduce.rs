//! One-command pipeline: every training and evaluation run behind the
//! published result tables, with a summary that puts obtained numbers next
//! to the published ones and a tolerance verdict per cell.
//!
//! Eleven training stages (1 classifier, 2 VAE, 8 VAE-GAN) and their
//! evaluations run in a fixed order. After each completed stage its name is
//! appended to `reproduce_state.txt`, so `--resume` skips finished stages;
//! interrupted training stages additionally pick up from their own rolling
//! checkpoints. Adversarial point values are not reliably reproducible at
//! this scale, so the α runs are trained on a seeded subset at reduced
//! epochs — large enough for the published orderings, small enough for a
//! desk-class CPU.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crossgen_core::data::{ImageSample, PairSet};
use crossgen_core::models::Lenet5Model;

use crate::aipx::read_pairset;
use crate::checkpoint::load_checkpoint;
use crate::error::{Error, Result};
use crate::eval::{
    classify_generated, compare_error_rates, generate_test_images, generated_vs_real_grid,
    mask_sweep, seeded_subset, ErrorRateChange, EvalReport, Generator,
};
use crate::idx::load_mnist_idx;
use crate::train::{
    lenet_from_checkpoint, train_aivae, train_aivaegan, train_lenet5, TrainConfig,
};

pub const ALPHAS: [f64; 4] = [0.2, 0.5, 1.0, 2.0];
pub const LENET_EPOCHS: usize = 10;
pub const VAE_EPOCHS: usize = 30;
/// Adversarial desk scale: seeded subset of the train pairs and reduced
/// epochs, chosen so all eight runs stay tractable on one core while the
/// α-orderings still emerge.
pub const GAN_EPOCHS: usize = 8;
pub const GAN_TRAIN_SUBSET: usize = 2048;
/// Evaluation subsets for the α runs and the masking sweeps (the headline
/// VAE accuracies always use the full test sets).
pub const GAN_EVAL_SUBSET: usize = 2000;
pub const SWEEP_SUBSET: usize = 2000;
pub const SWEEP_TRIALS: usize = 1;
/// Verdict band around published cells, in accuracy points. Wide because
/// the corpora here are stand-ins; the orderings are the sharp checks.
pub const CELL_TOLERANCE: f64 = 0.08;

pub const PUBLISHED_LENET: f64 = 0.987;
pub const PUBLISHED_VAE_FSDD: f64 = 0.942;
pub const PUBLISHED_VAE_SCD: f64 = 0.866;
pub const PUBLISHED_GAN_FSDD: [f64; 4] = [0.810, 0.805, 0.930, 0.943];
pub const PUBLISHED_GAN_SCD: [f64; 4] = [0.669, 0.762, 0.817, 0.815];

#[derive(Clone, Debug)]
pub struct ReproduceConfig {
    pub seed: u64,
    /// Directory holding the prepared pair files.
    pub data: PathBuf,
    /// Directory holding the four IDX files.
    pub mnist: PathBuf,
    pub out: PathBuf,
    pub resume: bool,
    pub lenet_epochs: usize,
    pub vae_epochs: usize,
    pub gan_epochs: usize,
    pub gan_train_subset: usize,
}

impl ReproduceConfig {
    pub fn new(seed: u64, data: PathBuf, mnist: PathBuf, out: PathBuf, resume: bool) -> Self {
        ReproduceConfig {
            seed,
            data,
            mnist,
            out,
            resume,
            lenet_epochs: LENET_EPOCHS,
            vae_epochs: VAE_EPOCHS,
            gan_epochs: GAN_EPOCHS,
            gan_train_subset: GAN_TRAIN_SUBSET,
        }
    }
}

fn alpha_tag(alpha: f64) -> String {
    format!("a{alpha}")
}

fn gan_stage(dataset: &str, alpha: f64) -> String {
    format!("gan-{dataset}-{}", alpha_tag(alpha))
}

/// Fixed stage order; evaluation stages follow all training stages so a
/// crashed evaluation never forces retraining.
pub fn stage_names() -> Vec<String> {
    let mut stages = vec!["lenet5".to_string(), "aivae-fsdd".into(), "aivae-scd".into()];
    for dataset in ["fsdd", "scd"] {
        for &alpha in &ALPHAS {
            stages.push(gan_stage(dataset, alpha));
        }
    }
    for dataset in ["fsdd", "scd"] {
        stages.push(format!("eval-aivae-{dataset}"));
        for &alpha in &ALPHAS {
            stages.push(format!("eval-{}", gan_stage(dataset, alpha)));
        }
    }
    stages
}

struct StateFile {
    path: PathBuf,
    done: BTreeSet<String>,
}

impl StateFile {
    fn open(out: &Path, resume: bool) -> Result<Self> {
        let path = out.join("reproduce_state.txt");
        let done = if resume && path.exists() {
            std::fs::read_to_string(&path)
                .map_err(|e| Error::io(&path, e))?
                .lines()
                .filter_map(|l| l.strip_prefix("done "))
                .map(str::to_string)
                .collect()
        } else {
            BTreeSet::new()
        };
        Ok(StateFile { path, done })
    }

    fn is_done(&self, stage: &str) -> bool {
        self.done.contains(stage)
    }

    fn mark_done(&mut self, stage: &str) -> Result<()> {
        self.done.insert(stage.to_string());
        let mut text = String::new();
        for s in &self.done {
            text.push_str("done ");
            text.push_str(s);
            text.push('\n');
        }
        std::fs::write(&self.path, text).map_err(|e| Error::io(&self.path, e))
    }
}

fn pair_file(cfg: &ReproduceConfig, dataset: &str, split: &str) -> PathBuf {
    cfg.data.join(format!("mnist-{dataset}.{split}.aipx"))
}

/// Resume argument for a training stage: the rolling checkpoint when one
/// survives from an interrupted run.
fn maybe_resume(dir: &Path, resume: bool) -> Option<PathBuf> {
    let latest = dir.join("latest.aick");
    (resume && latest.exists()).then_some(latest)
}

struct EvalInputs<'a> {
    classifier: &'a Lenet5Model<f32>,
    seed: u64,
}

fn eval_generator_stage(
    inputs: &EvalInputs,
    run_dir: &Path,
    test: &PairSet,
    dataset_tag: &str,
    alpha: Option<f64>,
    with_sweep: bool,
) -> Result<()> {
    let ckpt = load_checkpoint(&run_dir.join("final.aick"))?;
    let gen = Generator::from_checkpoint(&ckpt)?;
    let set = generate_test_images(&gen, test, inputs.seed, false)?;
    let report = classify_generated(
        inputs.classifier,
        &set,
        dataset_tag,
        gen.arch(),
        alpha,
        inputs.seed,
    )?;
    report.write(&run_dir.join("eval_report.txt"))?;
    generated_vs_real_grid(&gen, test, inputs.seed, &run_dir.join("reconstruction_grid.png"))?;

    if with_sweep {
        let sweep_pairs = seeded_subset(test, SWEEP_SUBSET, inputs.seed, "sweep-subset");
        let sweep = mask_sweep(
            &gen,
            &sweep_pairs,
            inputs.classifier,
            inputs.seed,
            false,
            SWEEP_TRIALS,
        )?;
        sweep.write(&run_dir.join("mask_sweep.tsv"))?;
        // anchor report on the same subset so the k=0 row can be audited
        let subset_gen = generate_test_images(&gen, &sweep_pairs, inputs.seed, false)?;
        let subset_report = classify_generated(
            inputs.classifier,
            &subset_gen,
            &format!("{dataset_tag}-sweep-subset"),
            gen.arch(),
            alpha,
            inputs.seed,
        )?;
        subset_report.write(&run_dir.join("eval_report_sweep_subset.txt"))?;
    }
    Ok(())
}

fn read_report(path: &Path) -> Result<EvalReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut report = EvalReport {
        dataset: String::new(),
        model: String::new(),
        alpha: None,
        accuracy: f64::NAN,
        confusion: [[0; 10]; 10],
        n_examples: 0,
        seed: 0,
    };
    let mut confusion_row = 0usize;
    let mut in_confusion = false;
    for line in text.lines() {
        if in_confusion {
            if confusion_row < 10 {
                for (c, cell) in line.split('\t').enumerate().take(10) {
                    report.confusion[confusion_row][c] = cell
                        .trim()
                        .parse()
                        .map_err(|_| Error::parse(path, format!("bad confusion cell {cell:?}")))?;
                }
                confusion_row += 1;
            }
            continue;
        }
        let Some((key, value)) = line.split_once(':') else { continue };
        let value = value.trim();
        match key {
            "dataset" => report.dataset = value.to_string(),
            "model" => report.model = value.to_string(),
            "alpha" => report.alpha = value.parse().ok(),
            "n_examples" => {
                report.n_examples = value
                    .parse()
                    .map_err(|_| Error::parse(path, format!("bad n_examples {value:?}")))?
            }
            "seed" => {
                report.seed = value
                    .parse()
                    .map_err(|_| Error::parse(path, format!("bad seed {value:?}")))?
            }
            "accuracy" => {
                report.accuracy = value
                    .parse()
                    .map_err(|_| Error::parse(path, format!("bad accuracy {value:?}")))?
            }
            "confusion" => in_confusion = true,
            _ => {}
        }
    }
    if !report.accuracy.is_finite() || confusion_row != 10 {
        return Err(Error::parse(path, "report is missing accuracy or confusion rows"));
    }
    Ok(report)
}

fn read_sweep_tsv(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut acc = Vec::new();
    for line in text.lines().skip(1) {
        let mut cells = line.split('\t');
        let _k = cells.next();
        let a: f64 = cells
            .next()
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| Error::parse(path, format!("bad sweep row {line:?}")))?;
        acc.push(a);
    }
    if acc.len() != 65 {
        return Err(Error::parse(path, format!("sweep has {} rows, expected 65", acc.len())));
    }
    Ok(acc)
}

fn verdict(published: f64, obtained: f64) -> &'static str {
    if (published - obtained).abs() <= CELL_TOLERANCE {
        "pass"
    } else {
        "fail"
    }
}

struct SummaryData {
    lenet_acc: f64,
    vae: [EvalReport; 2],          // fsdd, scd
    gan: [[EvalReport; 4]; 2],     // [dataset][alpha]
    sweeps: [Vec<f64>; 2],         // fsdd, scd
}

fn collect_summary_inputs(cfg: &ReproduceConfig) -> Result<SummaryData> {
    let lenet_ckpt = load_checkpoint(&cfg.out.join("lenet5").join("final.aick"))?;
    let lenet_acc = lenet_ckpt.section("best")?.metric;
    let vae_fsdd = read_report(&cfg.out.join("aivae-fsdd").join("eval_report.txt"))?;
    let vae_scd = read_report(&cfg.out.join("aivae-scd").join("eval_report.txt"))?;
    let mut gan: Vec<Vec<EvalReport>> = Vec::new();
    for dataset in ["fsdd", "scd"] {
        let mut row = Vec::new();
        for &alpha in &ALPHAS {
            row.push(read_report(
                &cfg.out.join(gan_stage(dataset, alpha)).join("eval_report.txt"),
            )?);
        }
        gan.push(row);
    }
    let sweeps = [
        read_sweep_tsv(&cfg.out.join("aivae-fsdd").join("mask_sweep.tsv"))?,
        read_sweep_tsv(&cfg.out.join("aivae-scd").join("mask_sweep.tsv"))?,
    ];
    let mut gan_iter = gan.into_iter();
    let row_f: [EvalReport; 4] = gan_iter.next().unwrap().try_into().unwrap();
    let row_s: [EvalReport; 4] = gan_iter.next().unwrap().try_into().unwrap();
    Ok(SummaryData { lenet_acc, vae: [vae_fsdd, vae_scd], gan: [row_f, row_s], sweeps })
}

fn write_summary(cfg: &ReproduceConfig, data: &SummaryData) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "result summary (seed {})", cfg.seed);
    let _ = writeln!(s, "tolerance band for table cells: ±{:.1} points", CELL_TOLERANCE * 100.0);
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<34}{:>10}{:>10}{:>8}  verdict", "cell", "published", "obtained", "|diff|");
    let mut cell = |name: &str, published: f64, obtained: f64| {
        let _ = writeln!(
            s,
            "{:<34}{:>10.3}{:>10.3}{:>8.3}  {}",
            name,
            published,
            obtained,
            (published - obtained).abs(),
            verdict(published, obtained),
        );
    };
    cell("lenet5 mnist-test", PUBLISHED_LENET, data.lenet_acc);
    cell("aivae mnist-fsdd", PUBLISHED_VAE_FSDD, data.vae[0].accuracy);
    cell("aivae mnist-scd", PUBLISHED_VAE_SCD, data.vae[1].accuracy);
    for (d, dataset) in ["fsdd", "scd"].into_iter().enumerate() {
        let published = if d == 0 { PUBLISHED_GAN_FSDD } else { PUBLISHED_GAN_SCD };
        for (a, &alpha) in ALPHAS.iter().enumerate() {
            cell(
                &format!("aivaegan mnist-{dataset} alpha={alpha}"),
                published[a],
                data.gan[d][a].accuracy,
            );
        }
    }

    let _ = writeln!(s);
    let drop_f = compare_error_rates(&data.gan[0][0], &data.gan[0][3]);
    let drop_s = compare_error_rates(&data.gan[1][0], &data.gan[1][3]);
    let _ = writeln!(s, "error-rate drop α=0.2→2 mnist-fsdd: {drop_f} (published 70%)");
    let _ = writeln!(s, "error-rate drop α=0.2→2 mnist-scd:  {drop_s} (published 44%)");
    let drops_ordered = matches!(
        (drop_f, drop_s),
        (ErrorRateChange::Relative(f), ErrorRateChange::Relative(sc)) if f > sc
    );
    let _ = writeln!(
        s,
        "fsdd drop exceeds scd drop (inequality only): {}",
        if drops_ordered { "pass" } else { "fail" }
    );

    let _ = writeln!(s);
    let gap_at = |k: usize| (data.sweeps[0][k] - data.sweeps[1][k]).abs();
    let gap0 = gap_at(0);
    let gap_tail = (56..=64).map(gap_at).sum::<f64>() / 9.0;
    let _ = writeln!(s, "mask-sweep dataset gap at k=0: {gap0:.3}");
    let _ = writeln!(s, "mask-sweep dataset gap, mean over k∈[56,64]: {gap_tail:.3}");
    let _ = writeln!(
        s,
        "gap narrows at high k: {}",
        if gap_tail < gap0 { "pass" } else { "fail" }
    );

    let path = cfg.out.join("summary.txt");
    std::fs::write(&path, &s).map_err(|e| Error::io(&path, e))?;
    Ok(s)
}

/// Runs (or resumes) the whole pipeline. Returns the summary text.
pub fn run_reproduce(cfg: &ReproduceConfig) -> Result<String> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let mut state = StateFile::open(&cfg.out, cfg.resume)?;

    let (mnist_train, mnist_test) = load_mnist_pair(&cfg.mnist)?;

    // --- training stages ---
    let lenet_dir = cfg.out.join("lenet5");
    if !state.is_done("lenet5") {
        let tc = TrainConfig {
            epochs: cfg.lenet_epochs,
            seed: cfg.seed,
            dataset: cfg.mnist.display().to_string(),
            ..TrainConfig::default()
        };
        eprintln!("stage lenet5: training for {} epochs", tc.epochs);
        let snapshot = tc.snapshot_with("lenet5");
        std::fs::create_dir_all(&lenet_dir).map_err(|e| Error::io(&lenet_dir, e))?;
        std::fs::write(lenet_dir.join("config.txt"), &snapshot)
            .map_err(|e| Error::io(&lenet_dir, e))?;
        let resume = maybe_resume(&lenet_dir, cfg.resume);
        train_lenet5(&tc, &mnist_train, &mnist_test, &lenet_dir, &snapshot, resume.as_deref())?;
        state.mark_done("lenet5")?;
    }

    for dataset in ["fsdd", "scd"] {
        let stage = format!("aivae-{dataset}");
        if state.is_done(&stage) {
            continue;
        }
        let dir = cfg.out.join(&stage);
        let train_path = pair_file(cfg, dataset, "train");
        let pairs = read_pairset(&train_path)?;
        let tc = TrainConfig {
            epochs: cfg.vae_epochs,
            seed: cfg.seed,
            dataset: train_path.display().to_string(),
            ..TrainConfig::default()
        };
        eprintln!("stage {stage}: training on {} pairs for {} epochs", pairs.pairs.len(), tc.epochs);
        let snapshot = tc.snapshot_with("aivae");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        std::fs::write(dir.join("config.txt"), &snapshot).map_err(|e| Error::io(&dir, e))?;
        let resume = maybe_resume(&dir, cfg.resume);
        train_aivae(&tc, &pairs, &dir, &snapshot, resume.as_deref())?;
        state.mark_done(&stage)?;
    }

    for dataset in ["fsdd", "scd"] {
        let train_path = pair_file(cfg, dataset, "train");
        let mut full: Option<PairSet> = None;
        for &alpha in &ALPHAS {
            let stage = gan_stage(dataset, alpha);
            if state.is_done(&stage) {
                continue;
            }
            if full.is_none() {
                full = Some(read_pairset(&train_path)?);
            }
            let pairs = seeded_subset(
                full.as_ref().unwrap(),
                cfg.gan_train_subset,
                cfg.seed,
                "gan-subset",
            );
            let dir = cfg.out.join(&stage);
            let tc = TrainConfig {
                epochs: cfg.gan_epochs,
                alpha,
                seed: cfg.seed,
                dataset: train_path.display().to_string(),
                ..TrainConfig::default()
            };
            eprintln!(
                "stage {stage}: training on {} pairs for {} epochs (alpha {alpha})",
                pairs.pairs.len(),
                tc.epochs
            );
            let snapshot = tc.snapshot_with("aivaegan");
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            std::fs::write(dir.join("config.txt"), &snapshot).map_err(|e| Error::io(&dir, e))?;
            let resume = maybe_resume(&dir, cfg.resume);
            train_aivaegan(&tc, &pairs, &dir, &snapshot, resume.as_deref())?;
            state.mark_done(&stage)?;
        }
    }

    // --- evaluation stages ---
    let classifier =
        lenet_from_checkpoint(&load_checkpoint(&lenet_dir.join("final.aick"))?)?;
    let inputs = EvalInputs { classifier: &classifier, seed: cfg.seed };

    for dataset in ["fsdd", "scd"] {
        let test = read_pairset(&pair_file(cfg, dataset, "test"))?;

        let stage = format!("eval-aivae-{dataset}");
        if !state.is_done(&stage) {
            eprintln!("stage {stage}: evaluating on {} pairs (+ mask sweep)", test.pairs.len());
            eval_generator_stage(
                &inputs,
                &cfg.out.join(format!("aivae-{dataset}")),
                &test,
                &format!("mnist-{dataset}.test"),
                None,
                true,
            )?;
            state.mark_done(&stage)?;
        }

        let gan_test = seeded_subset(&test, GAN_EVAL_SUBSET, cfg.seed, "gan-eval-subset");
        for &alpha in &ALPHAS {
            let stage = format!("eval-{}", gan_stage(dataset, alpha));
            if state.is_done(&stage) {
                continue;
            }
            eprintln!("stage {stage}: evaluating on {} pairs", gan_test.pairs.len());
            eval_generator_stage(
                &inputs,
                &cfg.out.join(gan_stage(dataset, alpha)),
                &gan_test,
                &format!("mnist-{dataset}.test"),
                Some(alpha),
                false,
            )?;
            state.mark_done(&stage)?;
        }
    }

    let summary = write_summary(cfg, &collect_summary_inputs(cfg)?)?;
    Ok(summary)
}

pub fn load_mnist_pair(dir: &Path) -> Result<(Vec<ImageSample>, Vec<ImageSample>)> {
    let train = load_mnist_idx(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
    )?;
    let test = load_mnist_idx(
        &dir.join("t10k-images-idx3-ubyte"),
        &dir.join("t10k-labels-idx1-ubyte"),
    )?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_list_is_complete_and_ordered() {
        let stages = stage_names();
        assert_eq!(stages.len(), 3 + 8 + 2 + 8);
        assert_eq!(stages[0], "lenet5");
        assert!(stages.contains(&"gan-fsdd-a0.2".to_string()));
        assert!(stages.contains(&"eval-gan-scd-a2".to_string()));
        // every eval stage comes after every training stage
        let first_eval = stages.iter().position(|s| s.starts_with("eval-")).unwrap();
        assert!(stages[first_eval..].iter().all(|s| s.starts_with("eval-")));
    }

    #[test]
    fn state_file_round_trips_done_stages() {
        let dir = tempfile::tempdir().unwrap();
        let mut state = StateFile::open(dir.path(), false).unwrap();
        assert!(!state.is_done("lenet5"));
        state.mark_done("lenet5").unwrap();
        state.mark_done("aivae-fsdd").unwrap();
        let reopened = StateFile::open(dir.path(), true).unwrap();
        assert!(reopened.is_done("lenet5"));
        assert!(reopened.is_done("aivae-fsdd"));
        assert!(!reopened.is_done("aivae-scd"));
        // without --resume the slate is clean
        let fresh = StateFile::open(dir.path(), false).unwrap();
        assert!(!fresh.is_done("lenet5"));
    }

    #[test]
    fn report_files_round_trip_through_the_parser() {
        let report = EvalReport {
            dataset: "mnist-fsdd.test".into(),
            model: "aivae".into(),
            alpha: Some(0.5),
            accuracy: 0.0,
            confusion: {
                let mut c = [[0usize; 10]; 10];
                c[3][3] = 7;
                c[3][5] = 1;
                c[1][1] = 2;
                c
            },
            n_examples: 10,
            seed: 9,
        };
        let report = EvalReport { accuracy: report.accuracy_from_confusion(), ..report };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eval_report.txt");
        report.write(&path).unwrap();
        let back = read_report(&path).unwrap();
        assert_eq!(back.dataset, report.dataset);
        assert_eq!(back.alpha, Some(0.5));
        assert_eq!(back.accuracy, report.accuracy);
        assert_eq!(back.confusion, report.confusion);
        assert_eq!(back.n_examples, 10);
    }

    #[test]
    fn verdicts_respect_the_band() {
        assert_eq!(verdict(0.942, 0.90), "pass");
        assert_eq!(verdict(0.942, 0.85), "fail");
        assert_eq!(verdict(0.80, 0.88), "pass");
    }
}
