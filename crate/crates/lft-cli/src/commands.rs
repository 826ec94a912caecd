//! Argument structs and implementations for every subcommand.

use crate::cfg::{resolve_out, ConfigFile};
use crate::manifest::ManifestBuilder;
use anyhow::{bail, Context, Result};
use clap::Args;
use lft_core::data::{
    gen_corpus as core_gen_corpus, generate_logits_dataset, import_external_logits, load_corpus,
    read_dataset, save_corpus, teacher_generate_corpus, verify_dataset, write_dataset, Corpus,
    TaskKind,
};
use lft_core::eval::{compare_modes, evaluate, inspect_targets, sweep_csv, SweepGrid};
use lft_core::model::{init_model, LossMode, ModelConfig, StudentModel};
use lft_core::train::{
    train as core_train, OptimizerKind, TrainConfig, TrainData,
};
use lft_core::util::atomic_write;
use serde_json::json;
use std::path::PathBuf;

const TEACHER_DIMS: (usize, usize, usize) = (128, 5, 4); // d_model, layers, heads
const STUDENT_DIMS: (usize, usize, usize) = (64, 5, 4);
const DEFAULT_CONTEXT: usize = 16;
const DEFAULT_MAX_NEW: usize = 10;

#[derive(Args)]
pub struct CommonArgs {
    /// Flat key=value config file (flags > config > defaults)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct ModelDims {
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub n_layers: Option<usize>,
    #[arg(long)]
    pub n_heads: Option<usize>,
    #[arg(long)]
    pub context_len: Option<usize>,
}

impl ModelDims {
    fn resolve(
        &self,
        cfg: &ConfigFile,
        defaults: (usize, usize, usize),
        vocab_size: usize,
        seed: u64,
    ) -> Result<ModelConfig> {
        let mc = ModelConfig {
            vocab_size,
            context_len: cfg.resolve(self.context_len, "context-len", DEFAULT_CONTEXT)?,
            d_model: cfg.resolve(self.d_model, "d-model", defaults.0)?,
            n_layers: cfg.resolve(self.n_layers, "n-layers", defaults.1)?,
            n_heads: cfg.resolve(self.n_heads, "n-heads", defaults.2)?,
            seed,
        };
        mc.validate()?;
        Ok(mc)
    }
}

#[derive(Args)]
pub struct TrainHyper {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_parser = ["plain-descent", "adaptive-moment"])]
    pub optimizer: Option<String>,
    /// Evaluate/checkpoint every N steps (0 = only at the end)
    #[arg(long)]
    pub eval_every: Option<usize>,
}

impl TrainHyper {
    fn resolve(&self, cfg: &ConfigFile, mode: LossMode, default_epochs: usize) -> Result<TrainConfig> {
        let optimizer = cfg.resolve(
            self.optimizer.clone(),
            "optimizer",
            "adaptive-moment".to_string(),
        )?;
        Ok(TrainConfig {
            mode,
            eta: cfg.resolve(self.eta, "eta", 1e-3)?,
            optimizer: OptimizerKind::parse(&optimizer)?,
            batch_size: cfg.resolve(self.batch_size, "batch-size", 16)?,
            epochs: cfg.resolve(self.epochs, "epochs", default_epochs)?,
            data_fraction: 1.0,
            seed: cfg.resolve(self.seed, "seed", 0)?,
            eval_every: cfg.resolve(self.eval_every, "eval-every", 0)?,
            checkpoint_path: None,
        })
    }
}

fn load_corpus_dir(path: &std::path::Path) -> Result<Corpus> {
    load_corpus(path).with_context(|| format!("loading corpus from {}", path.display()))
}

fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    raw.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| anyhow::anyhow!("bad {what} entry `{s}`: {e}"))
        })
        .collect()
}

// ── gen-corpus ────────────────────────────────────────────────────────────

#[derive(Args)]
pub struct GenCorpusArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Synthetic task
    #[arg(long, value_parser = ["addition", "paraphrase"])]
    pub task: String,
    /// Number of training pairs (a quarter as many test pairs are added)
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

pub fn gen_corpus(a: GenCorpusArgs) -> Result<u8> {
    let cfg = ConfigFile::load(a.common.config.as_deref())?;
    let n = cfg.resolve(a.n, "n", 1000)?;
    let seed = cfg.resolve(a.seed, "seed", 0)?;
    let task = TaskKind::parse(&a.task)?;
    let out = resolve_out(&a.out);
    let mut manifest = ManifestBuilder::new(
        "gen-corpus",
        json!({"task": task.as_str(), "n": n, "seed": seed, "out": out}),
        seed,
    );
    let corpus = core_gen_corpus(task, n, seed)?;
    save_corpus(&corpus, &out)?;
    eprintln!(
        "gen-corpus: task={} train={} test={} vocab={} -> {}",
        task.as_str(),
        corpus.train.len(),
        corpus.test.len(),
        corpus.vocab.len(),
        out.display()
    );
    manifest.output(&out);
    manifest.write()?;
    Ok(0)
}

// ── train-teacher ─────────────────────────────────────────────────────────

#[derive(Args)]
pub struct TrainTeacherArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Corpus directory from gen-corpus
    #[arg(long)]
    pub corpus: PathBuf,
    /// Teacher checkpoint to write
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub dims: ModelDims,
    #[command(flatten)]
    pub hyper: TrainHyper,
    /// Also write the step/loss/accuracy history CSV here
    #[arg(long)]
    pub history: Option<PathBuf>,
}

pub fn train_teacher(a: TrainTeacherArgs) -> Result<u8> {
    let cfg = ConfigFile::load(a.common.config.as_deref())?;
    let corpus = load_corpus_dir(&a.corpus)?;
    let mut tc = a.hyper.resolve(&cfg, LossMode::Sft, 30)?;
    let out = resolve_out(&a.out);
    tc.checkpoint_path = Some(out.clone());
    let mc = a
        .dims
        .resolve(&cfg, TEACHER_DIMS, corpus.vocab.len(), tc.seed)?;
    let mut manifest = ManifestBuilder::new(
        "train-teacher",
        json!({
            "corpus": a.corpus, "out": out, "model": mc, "train": tc,
        }),
        tc.seed,
    );
    manifest.input(&a.corpus);
    eprintln!(
        "train-teacher: {} pairs, d_model={} layers={} (~{} params), epochs={}",
        corpus.train.len(),
        mc.d_model,
        mc.n_layers,
        lft_core::model::ParamLayout::new(&mc).total(),
        tc.epochs
    );
    let student = init_model(&mc)?;
    let eos = corpus.vocab.eos;
    let test = corpus.test.clone();
    let eval_fn = move |m: &StudentModel| {
        evaluate(m, &test, eos, DEFAULT_MAX_NEW, "teacher")
            .map(|r| r.accuracy)
            .unwrap_or(0.0)
    };
    let (teacher, history) = core_train(
        student,
        TrainData::Corpus(&corpus.train),
        &tc,
        Some(&eval_fn),
    )?;
    let report = evaluate(&teacher, &corpus.test, eos, DEFAULT_MAX_NEW, "teacher")?;
    eprintln!(
        "train-teacher: final loss {:.5}, test accuracy {:.4} ({}/{})",
        history.steps.last().map(|s| s.1).unwrap_or(f64::NAN),
        report.accuracy,
        report.n_correct,
        report.n_examples
    );
    manifest.output(&out);
    if let Some(h) = &a.history {
        let h = resolve_out(h);
        atomic_write(&h, history.to_csv().as_bytes())?;
        manifest.output(&h);
    }
    manifest.write()?;
    Ok(0)
}

// ── gen-logits ────────────────────────────────────────────────────────────

#[derive(Args)]
pub struct GenLogitsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Teacher checkpoint
    #[arg(long)]
    pub teacher: PathBuf,
    /// Corpus directory
    #[arg(long)]
    pub corpus: PathBuf,
    /// LFTD file to write
    #[arg(long)]
    pub out: PathBuf,
    /// Top-K entries to retain per position
    #[arg(long)]
    pub k: Option<usize>,
    /// Sample responses from the teacher instead of teacher-forcing the
    /// ground truth (the sequence-level variant of supervised distillation)
    #[arg(long)]
    pub sample_responses: bool,
    /// Sampling temperature for --sample-responses
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn gen_logits(a: GenLogitsArgs) -> Result<u8> {
    let cfg = ConfigFile::load(a.common.config.as_deref())?;
    let k = cfg.resolve(a.k, "k", 5)?;
    if !(1..=64).contains(&k) {
        bail!("k must be in 1..=64, got {k}");
    }
    let tau = cfg.resolve(a.tau, "tau", 1.0)?;
    let seed = cfg.resolve(a.seed, "seed", 0)?;
    let teacher = StudentModel::load(&a.teacher)
        .with_context(|| format!("loading teacher {}", a.teacher.display()))?;
    let corpus = load_corpus_dir(&a.corpus)?;
    if teacher.config().vocab_size != corpus.vocab.len() {
        bail!(
            "teacher vocab {} does not match corpus vocab {}",
            teacher.config().vocab_size,
            corpus.vocab.len()
        );
    }
    let out = resolve_out(&a.out);
    let mut manifest = ManifestBuilder::new(
        "gen-logits",
        json!({
            "teacher": a.teacher, "corpus": a.corpus, "out": out, "k": k,
            "sample_responses": a.sample_responses, "tau": tau, "seed": seed,
        }),
        seed,
    );
    manifest.input(&a.teacher).input(&a.corpus);
    let pairs = if a.sample_responses {
        let prompts: Vec<Vec<u32>> = corpus.train.iter().map(|p| p.prompt.clone()).collect();
        teacher_generate_corpus(
            &teacher,
            &prompts,
            tau,
            seed,
            teacher.config().context_len,
            corpus.vocab.eos,
        )?
    } else {
        corpus.train.clone()
    };
    let mut ds = generate_logits_dataset(&teacher, &pairs, k)?;
    if a.sample_responses {
        ds.provenance.seed = seed;
        ds.provenance.source = "native-teacher-sequences".to_string();
    }
    write_dataset(&ds, &out)?;
    eprintln!(
        "gen-logits: {} records, k={}, teacher {} -> {}",
        ds.records.len(),
        k,
        ds.provenance.teacher_id,
        out.display()
    );
    manifest.output(&out);
    manifest.write()?;
    Ok(0)
}

// ── train ─────────────────────────────────────────────────────────────────

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// LFTD dataset (required for sd/lft; usable for sft)
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Corpus directory (required for seqkd and for held-out evaluation)
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Teacher checkpoint (required for seqkd)
    #[arg(long)]
    pub teacher: Option<PathBuf>,
    #[arg(long, value_parser = ["sft", "seqkd", "sd", "lft"])]
    pub mode: String,
    /// Student checkpoint to write
    #[arg(long)]
    pub out: PathBuf,
    /// Fraction of the training data to use (seeded nested subsets)
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Sampling temperature for seqkd response generation
    #[arg(long)]
    pub tau: Option<f64>,
    #[command(flatten)]
    pub dims: ModelDims,
    #[command(flatten)]
    pub hyper: TrainHyper,
    /// Also write the step/loss/accuracy history CSV here
    #[arg(long)]
    pub history: Option<PathBuf>,
}

pub fn train(a: TrainArgs) -> Result<u8> {
    let cfg = ConfigFile::load(a.common.config.as_deref())?;
    let mode = LossMode::parse(&a.mode)?;
    let mut tc = a.hyper.resolve(&cfg, mode, 10)?;
    tc.data_fraction = cfg.resolve(a.fraction, "fraction", 1.0)?;
    let out = resolve_out(&a.out);
    tc.checkpoint_path = Some(out.clone());

    let corpus = a
        .corpus
        .as_ref()
        .map(|p| load_corpus_dir(p))
        .transpose()?;
    let dataset = a
        .data
        .as_ref()
        .map(|p| read_dataset(p).with_context(|| format!("reading dataset {}", p.display())))
        .transpose()?;

    let vocab_size = match (&dataset, &corpus) {
        (Some(ds), Some(c)) if ds.vocab_size != c.vocab.len() => {
            bail!(
                "dataset vocab {} does not match corpus vocab {}",
                ds.vocab_size,
                c.vocab.len()
            )
        }
        (Some(ds), _) => ds.vocab_size,
        (None, Some(c)) => c.vocab.len(),
        (None, None) => bail!("provide --data and/or --corpus"),
    };
    let mc = a.dims.resolve(&cfg, STUDENT_DIMS, vocab_size, tc.seed)?;
    let mut manifest = ManifestBuilder::new(
        "train",
        json!({
            "data": a.data, "corpus": a.corpus, "teacher": a.teacher,
            "mode": mode.as_str(), "out": out, "fraction": tc.data_fraction,
            "model": mc, "train": tc,
        }),
        tc.seed,
    );
    if let Some(p) = &a.data {
        manifest.input(p);
    }
    if let Some(p) = &a.corpus {
        manifest.input(p);
    }

    // SeqKD trains on teacher-sampled responses for the corpus prompts.
    let seqkd_pairs = if mode == LossMode::SeqKd {
        let teacher_path = a
            .teacher
            .as_ref()
            .ok_or_else(|| anyhow::anyhow!("--mode seqkd requires --teacher"))?;
        let corpus = corpus
            .as_ref()
            .ok_or_else(|| anyhow::anyhow!("--mode seqkd requires --corpus"))?;
        let teacher = StudentModel::load(teacher_path)?;
        manifest.input(teacher_path);
        let tau = cfg.resolve(a.tau, "tau", 1.0)?;
        let prompts: Vec<Vec<u32>> = corpus.train.iter().map(|p| p.prompt.clone()).collect();
        Some(teacher_generate_corpus(
            &teacher,
            &prompts,
            tau,
            tc.seed,
            teacher.config().context_len,
            corpus.vocab.eos,
        )?)
    } else {
        None
    };

    let data = match (&seqkd_pairs, &dataset, &corpus) {
        (Some(pairs), _, _) => TrainData::Corpus(pairs),
        (None, Some(ds), _) => TrainData::Logits(ds),
        (None, None, Some(c)) => TrainData::Corpus(&c.train),
        (None, None, None) => unreachable!(),
    };

    eprintln!(
        "train: mode={} fraction={} epochs={} (~{} params)",
        mode,
        tc.data_fraction,
        tc.epochs,
        lft_core::model::ParamLayout::new(&mc).total()
    );
    let student = init_model(&mc)?;
    let eval_closure = corpus.as_ref().map(|c| {
        let test = c.test.clone();
        let eos = c.vocab.eos;
        move |m: &StudentModel| {
            evaluate(m, &test, eos, DEFAULT_MAX_NEW, "student")
                .map(|r| r.accuracy)
                .unwrap_or(0.0)
        }
    });
    let eval_ref: Option<&(dyn Fn(&StudentModel) -> f64 + Sync)> = eval_closure
        .as_ref()
        .map(|f| f as &(dyn Fn(&StudentModel) -> f64 + Sync));
    let (trained, history) = core_train(student, data, &tc, eval_ref)?;
    if let Some(c) = &corpus {
        let report = evaluate(&trained, &c.test, c.vocab.eos, DEFAULT_MAX_NEW, "student")?;
        eprintln!(
            "train: final loss {:.5}, test accuracy {:.4} ({}/{})",
            history.steps.last().map(|s| s.1).unwrap_or(f64::NAN),
            report.accuracy,
            report.n_correct,
            report.n_examples
        );
    } else {
        eprintln!(
            "train: final loss {:.5}",
            history.steps.last().map(|s| s.1).unwrap_or(f64::NAN)
        );
    }
    manifest.output(&out);
    if let Some(h) = &a.history {
        let h = resolve_out(h);
        atomic_write(&h, history.to_csv().as_bytes())?;
        manifest.output(&h);
    }
    manifest.write()?;
    Ok(0)
}

// ── eval ──────────────────────────────────────────────────────────────────

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Model checkpoint
    #[arg(long)]
    pub model: PathBuf,
    /// Corpus directory
    #[arg(long)]
    pub corpus: PathBuf,
    /// Which split to score
    #[arg(long, default_value = "test", value_parser = ["test", "train"])]
    pub split: String,
    /// Maximum tokens to decode per prompt
    #[arg(long)]
    pub max_new: Option<usize>,
    /// Write the full JSON report here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn eval(a: EvalArgs) -> Result<u8> {
    let cfg = ConfigFile::load(a.common.config.as_deref())?;
    let max_new = cfg.resolve(a.max_new, "max-new", DEFAULT_MAX_NEW)?;
    let model = StudentModel::load(&a.model)?;
    let corpus = load_corpus_dir(&a.corpus)?;
    let set = if a.split == "train" {
        &corpus.train
    } else {
        &corpus.test
    };
    let report = evaluate(&model, set, corpus.vocab.eos, max_new, corpus.task.as_str())?;
    let overflows = report.verdicts.iter().filter(|v| v.overflow).count();
    println!(
        "accuracy: {:.4} ({}/{} correct, {} overflow) on {} {}",
        report.accuracy, report.n_correct, report.n_examples, overflows, corpus.task.as_str(), a.split
    );
    if let Some(out) = &a.out {
        let out = resolve_out(out);
        let mut manifest = ManifestBuilder::new(
            "eval",
            json!({
                "model": a.model, "corpus": a.corpus, "split": a.split,
                "max_new": max_new, "out": out,
            }),
            0,
        );
        manifest.input(&a.model).input(&a.corpus);
        atomic_write(&out, serde_json::to_string_pretty(&report)?.as_bytes())?;
        manifest.output(&out);
        manifest.write()?;
    }
    Ok(0)
}

// ── sweep ─────────────────────────────────────────────────────────────────

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// LFTD dataset to train from
    #[arg(long)]
    pub data: PathBuf,
    /// Corpus directory (test split + vocabulary)
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory for sweep.csv and per-cell histories
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated modes (sft, sd, lft)
    #[arg(long)]
    pub modes: Option<String>,
    /// Comma-separated data fractions
    #[arg(long)]
    pub fractions: Option<String>,
    /// Comma-separated seeds
    #[arg(long)]
    pub seeds: Option<String>,
    /// Worker threads for grid cells (cells stay deterministic)
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub dims: ModelDims,
    #[command(flatten)]
    pub hyper: TrainHyper,
}

pub fn sweep(a: SweepArgs) -> Result<u8> {
    let cfg = ConfigFile::load(a.common.config.as_deref())?;
    let modes_raw = cfg.resolve(a.modes.clone(), "modes", "sft,lft".to_string())?;
    let fractions_raw = cfg.resolve(a.fractions.clone(), "fractions", "0.25,0.5,1.0".to_string())?;
    let seeds_raw = cfg.resolve(a.seeds.clone(), "seeds", "1,2,3".to_string())?;
    let modes: Vec<LossMode> = parse_list::<String>(&modes_raw, "mode")?
        .iter()
        .map(|s| LossMode::parse(s))
        .collect::<lft_core::Result<_>>()?;
    if modes.contains(&LossMode::SeqKd) {
        bail!("seqkd trains on sampled sequences, not a shared dataset; sweep supports sft, sd, lft");
    }
    let fractions: Vec<f64> = parse_list(&fractions_raw, "fraction")?;
    let seeds: Vec<u64> = parse_list(&seeds_raw, "seed")?;
    let base = a.hyper.resolve(&cfg, LossMode::Sft, 10)?;
    let dataset = read_dataset(&a.data)?;
    let corpus = load_corpus_dir(&a.corpus)?;
    if dataset.vocab_size != corpus.vocab.len() {
        bail!(
            "dataset vocab {} does not match corpus vocab {}",
            dataset.vocab_size,
            corpus.vocab.len()
        );
    }
    let student_cfg = a.dims.resolve(&cfg, STUDENT_DIMS, dataset.vocab_size, 0)?;
    let out = resolve_out(&a.out);
    let mut manifest = ManifestBuilder::new(
        "sweep",
        json!({
            "data": a.data, "corpus": a.corpus, "out": out,
            "modes": modes_raw, "fractions": fractions_raw, "seeds": seeds_raw,
            "model": student_cfg, "train": base, "jobs": a.jobs,
        }),
        base.seed,
    );
    manifest.input(&a.data).input(&a.corpus);
    let grid = SweepGrid {
        modes,
        fractions,
    };
    eprintln!(
        "sweep: {} modes x {} fractions x {} seeds = {} cells",
        grid.modes.len(),
        grid.fractions.len(),
        seeds.len(),
        grid.modes.len() * grid.fractions.len() * seeds.len()
    );
    let run = || {
        compare_modes(
            &grid,
            &dataset,
            &corpus.test,
            &student_cfg,
            &base,
            &seeds,
            corpus.vocab.eos,
            DEFAULT_MAX_NEW,
        )
    };
    let result = match a.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .context("building sweep thread pool")?
            .install(run)?,
        None => run()?,
    };
    std::fs::create_dir_all(&out)?;
    atomic_write(&out.join("sweep.csv"), sweep_csv(&result).as_bytes())?;
    for (name, history) in &result.histories {
        atomic_write(
            &out.join(format!("history_{name}.csv")),
            history.to_csv().as_bytes(),
        )?;
    }
    for agg in &result.aggregates {
        eprintln!(
            "sweep: {} f={:.2} mean={:.4} stddev={:.4} failed={}",
            agg.mode, agg.fraction, agg.mean, agg.stddev, agg.failed
        );
    }
    let failed_cells = result.cells.iter().filter(|c| c.accuracy.is_none()).count();
    if failed_cells > 0 {
        eprintln!("sweep: {failed_cells} cells failed (marked in sweep.csv)");
    }
    manifest.output(&out);
    manifest.write()?;
    Ok(0)
}

// ── verify ────────────────────────────────────────────────────────────────

#[derive(Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// LFTD dataset to verify
    #[arg(long)]
    pub data: PathBuf,
}

pub fn verify(a: VerifyArgs) -> Result<u8> {
    let ds = read_dataset(&a.data)?;
    let report = verify_dataset(&ds);
    println!("records: {}", report.records);
    println!("positions: {}", report.positions);
    println!("max ratio rel err: {:.3e}", report.max_ratio_rel_err);
    println!("max sum abs err: {:.3e}", report.max_sum_abs_err);
    println!("violations: {}", report.violations.len());
    for v in report.violations.iter().take(50) {
        println!("  record {} position {}: {}", v.record, v.position, v.what);
    }
    if report.violations.len() > 50 {
        println!("  ... and {} more", report.violations.len() - 50);
    }
    Ok(if report.ok() { 0 } else { 1 })
}

// ── inspect ───────────────────────────────────────────────────────────────

#[derive(Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// LFTD dataset
    #[arg(long)]
    pub data: PathBuf,
    /// Record index
    #[arg(long)]
    pub record: usize,
    /// Vocabulary file for decoding token ids
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

pub fn inspect(a: InspectArgs) -> Result<u8> {
    let ds = read_dataset(&a.data)?;
    let vocab = match &a.vocab {
        Some(p) => {
            let v: lft_core::data::Vocabulary =
                serde_json::from_str(&std::fs::read_to_string(p)?)
                    .with_context(|| format!("parsing vocabulary {}", p.display()))?;
            Some(v)
        }
        None => None,
    };
    print!("{}", inspect_targets(&ds, a.record, vocab.as_ref())?);
    Ok(0)
}

// ── import-logits ─────────────────────────────────────────────────────────

#[derive(Args)]
pub struct ImportLogitsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Line-delimited text logits file
    #[arg(long)]
    pub input: PathBuf,
    /// LFTD file to write
    #[arg(long)]
    pub out: PathBuf,
}

pub fn import_logits(a: ImportLogitsArgs) -> Result<u8> {
    let ds = import_external_logits(&a.input)?;
    let out = resolve_out(&a.out);
    let mut manifest = ManifestBuilder::new(
        "import-logits",
        json!({"input": a.input, "out": out}),
        0,
    );
    manifest.input(&a.input);
    write_dataset(&ds, &out)?;
    eprintln!(
        "import-logits: {} records (vocab {}, k {}) -> {}",
        ds.records.len(),
        ds.vocab_size,
        ds.k,
        out.display()
    );
    manifest.output(&out);
    manifest.write()?;
    Ok(0)
}
