//! The `betree` command line.
//!
//! Exit status: 0 on success (for `train`, convergence), 2 when `train` stops at the
//! iteration cap, 64 for invalid invocations, 1 for any other failure. Invalid
//! invocations are detected before any output file is created.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use betree_core::data::{gen_half_moons, shuffle_split, Dataset};
use betree_core::soft_path::SiblingSet;
use betree_core::trainer::{
    build_full_tree, train_from, train_resume, EvalTree, IterationRecord, StopReason, TrainConfig, TrainError, TrainObserver,
};
use betree_core::transform::{init_params, Activation, AdamConfig, AdamState, MlpArchitecture, ParameterSet};
use betree_core::tree::BoundaryTree;

use crate::checkpoint::{adam_path, read_adam, read_checkpoint, write_adam, write_checkpoint};
use crate::embedding_csv::{load_embedding_csv, write_embedding_csv};
use crate::error::{IoError, Result};
use crate::idx::load_idx;
use crate::model::Model;
use crate::parallel::error_rate_threads;
use crate::snapshot::{read_tree, write_tree};
use crate::{dot, trainlog};

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_ITERATION_CAP: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

/// Learn embeddings for nearest-neighbour classification with differentiable boundary trees.
#[derive(Debug, Parser)]
#[command(name = "betree", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an embedding network and write a checkpoint and a per-iteration log.
    Train(TrainArgs),
    /// Build a tree over the training set and report test error and node count.
    Eval(EvalArgs),
    /// Render a tree as a Graphviz digraph.
    ExportDot(ExportDotArgs),
    /// Write a half-moons dataset as an embedding CSV.
    GenMoons(GenMoonsArgs),
    /// Write the embedding of every sample as CSV.
    DumpEmbeddings(DumpArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetKind {
    Halfmoons,
    Idx,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ActivationArg {
    Relu,
    Tanh,
}

impl From<ActivationArg> for Activation {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Relu => Activation::Relu,
            ActivationArg::Tanh => Activation::Tanh,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SiblingArg {
    LastDecision,
    TreeSiblings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalTreeArg {
    Iteration,
    FullTrain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Test,
}

/// Where samples come from.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long, value_enum, default_value_t = DatasetKind::Halfmoons)]
    pub dataset: DatasetKind,
    /// Half-moons training samples.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Half-moons noise standard deviation.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// Half-moons test samples (0 for none).
    #[arg(long, default_value_t = 1000)]
    pub test_n: usize,
    /// Seed for data generation, subsetting and splitting (defaults to --seed).
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub test_images: Option<PathBuf>,
    #[arg(long)]
    pub test_labels: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub test_csv: Option<PathBuf>,
    /// Keep a seeded random subset of this many samples from the training source.
    #[arg(long)]
    pub subset: Option<usize>,
    /// Fraction kept for training when no separate test files are given; the rest is the test set.
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
}

/// The embedding applied before tree operations.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, conflicts_with = "identity")]
    pub checkpoint: Option<PathBuf>,
    /// Use raw features.
    #[arg(long)]
    pub identity: bool,
    #[arg(long, value_enum, default_value_t = ActivationArg::Relu)]
    pub activation: ActivationArg,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Layer sizes, input first, e.g. 2,100,100,30,2.
    #[arg(long, required = true, value_delimiter = ',')]
    pub arch: Vec<usize>,
    #[arg(long, value_enum, default_value_t = ActivationArg::Relu)]
    pub activation: ActivationArg,
    /// Samples used to build each iteration's tree.
    #[arg(long, default_value_t = 20)]
    pub tree_samples: usize,
    /// Gradient steps per iteration, one sample each.
    #[arg(long, default_value_t = 10)]
    pub grad_steps: usize,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    /// Relative change of the iteration-mean loss below which training stops.
    #[arg(long, default_value_t = 1e-3)]
    pub threshold: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub eps: f64,
    /// Seed for weight initialisation and sample order.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub max_children: Option<usize>,
    #[arg(long, value_enum, default_value_t = SiblingArg::LastDecision)]
    pub sibling_mode: SiblingArg,
    /// Tree used for the per-iteration test error.
    #[arg(long, value_enum, default_value_t = EvalTreeArg::Iteration)]
    pub eval_tree: EvalTreeArg,
    /// Start from this checkpoint (and its Adam state, if present) instead of random weights.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, default_value = "betree.ckpt")]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "trainlog.csv")]
    pub log: PathBuf,
    /// Also write the final full-train tree here.
    #[arg(long)]
    pub tree: Option<PathBuf>,
    /// Also write the final full-train evaluation here.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Record 0 in the seconds column so logs are reproducible byte for byte.
    #[arg(long)]
    pub no_timing: bool,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub max_children: Option<usize>,
    #[arg(long, default_value = "metrics.csv")]
    pub metrics: PathBuf,
    /// Also write the tree here.
    #[arg(long)]
    pub tree: Option<PathBuf>,
    #[arg(long, default_value_t = NonZeroUsize::MIN)]
    pub eval_threads: NonZeroUsize,
}

#[derive(Debug, Clone, Args)]
pub struct ExportDotArgs {
    /// Read this tree snapshot instead of building a tree.
    #[arg(long)]
    pub tree: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub max_children: Option<usize>,
    #[arg(long, default_value = "tree.dot")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct GenMoonsArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "moons.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DumpArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Split::Train)]
    pub split: Split,
    #[arg(long, default_value = "embeddings.csv")]
    pub out: PathBuf,
}

/// Parses `std::env::args` and runs the command, returning the exit status.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_CONVERGED };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                EXIT_USAGE
            } else {
                EXIT_FAILURE
            }
        }
    }
}

pub fn run(cli: &Cli) -> Result<i32> {
    let spec = format!("{:?}", cli.command);
    match &cli.command {
        Command::Train(a) => cmd_train(a, &spec),
        Command::Eval(a) => cmd_eval(a, &spec),
        Command::ExportDot(a) => cmd_export_dot(a),
        Command::GenMoons(a) => cmd_gen_moons(a),
        Command::DumpEmbeddings(a) => cmd_dump_embeddings(a),
    }
}

fn usage(msg: impl Into<String>) -> IoError {
    IoError::Usage(msg.into())
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str, kind: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| usage(format!("--dataset {kind} requires {flag}")))
}

/// Training and (optional) test sets sharing one class count.
pub fn load_data(args: &DataArgs, seed: u64) -> Result<(Dataset, Option<Dataset>)> {
    let seed = args.data_seed.unwrap_or(seed);
    if !(args.train_fraction > 0.0 && args.train_fraction <= 1.0) {
        return Err(usage(format!("--train-fraction must be in (0, 1], got {}", args.train_fraction)));
    }
    let (train, test) = match args.dataset {
        DatasetKind::Halfmoons => {
            let train = gen_half_moons(args.n, args.noise, seed)?;
            let test = match args.test_n {
                0 => None,
                n => Some(gen_half_moons(n, args.noise, seed ^ 0x7465_7374)?),
            };
            (train, test)
        }
        DatasetKind::Idx => {
            let images = required(&args.images, "--images", "idx")?;
            let labels = required(&args.labels, "--labels", "idx")?;
            let test = match (&args.test_images, &args.test_labels) {
                (Some(i), Some(l)) => Some(load_idx(i, l)?),
                (None, None) => None,
                _ => return Err(usage("--test-images and --test-labels must be given together")),
            };
            subset_and_split(load_idx(images, labels)?, test, args, seed)?
        }
        DatasetKind::Csv => {
            let csv = required(&args.csv, "--csv", "csv")?;
            let test = args.test_csv.as_deref().map(load_embedding_csv).transpose()?;
            subset_and_split(load_embedding_csv(csv)?, test, args, seed)?
        }
    };
    let classes = train.classes().max(test.as_ref().map_or(0, Dataset::classes));
    let align = |d: Dataset| {
        let prov = d.provenance();
        Dataset::new(d.into_samples(), classes, prov)
    };
    let train = align(train)?;
    let test = test.map(align).transpose()?;
    if let Some(t) = &test {
        if !t.is_empty() && t.feature_dim() != train.feature_dim() {
            return Err(usage(format!(
                "test features have {} dimensions, training features have {}",
                t.feature_dim(),
                train.feature_dim()
            )));
        }
    }
    Ok((train, test))
}

fn subset_and_split(
    ds: Dataset,
    test: Option<Dataset>,
    args: &DataArgs,
    seed: u64,
) -> Result<(Dataset, Option<Dataset>)> {
    let ds = match args.subset {
        Some(0) => return Err(usage("--subset must be positive")),
        Some(k) if k < ds.len() => shuffle_split(&ds, seed, &[1.0])?.remove(0).head(k),
        _ => ds,
    };
    if test.is_some() || args.train_fraction >= 1.0 {
        return Ok((ds, test));
    }
    let mut parts = shuffle_split(&ds, seed.wrapping_add(1), &[args.train_fraction, 1.0 - args.train_fraction])?;
    let test = parts.pop().expect("two parts");
    let train = parts.pop().expect("two parts");
    Ok((train, Some(test)))
}

fn load_model(args: &ModelArgs) -> Result<Model> {
    match (&args.checkpoint, args.identity) {
        (Some(p), false) => Ok(Model::Mlp(read_checkpoint(p, args.activation.into())?)),
        (None, true) => Ok(Model::Identity),
        _ => Err(usage("give exactly one of --checkpoint or --identity")),
    }
}

fn check_model_input(model: &Model, data: &Dataset) -> Result<()> {
    if let Model::Mlp(p) = model {
        let d = p.architecture().input_dim();
        if !data.is_empty() && d != data.feature_dim() {
            return Err(IoError::Core(betree_core::Error::Dimension {
                operand: "checkpoint input layer",
                expected: data.feature_dim().to_string(),
                actual: d.to_string(),
            }));
        }
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| IoError::io(path, e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| IoError::io(path, e))
}

fn training_config(a: &TrainArgs) -> Result<TrainConfig> {
    let arch = MlpArchitecture::new(a.arch.clone(), a.activation.into())?;
    let mut cfg = TrainConfig::new(arch, a.tree_samples, a.grad_steps);
    cfg.max_outer_iters = a.max_iters;
    cfg.convergence_rel_threshold = a.threshold;
    cfg.adam = AdamConfig {
        lr: a.lr,
        beta1: a.beta1,
        beta2: a.beta2,
        eps: a.eps,
    };
    cfg.seed = a.seed;
    cfg.max_children = a.max_children;
    cfg.siblings = match a.sibling_mode {
        SiblingArg::LastDecision => SiblingSet::LastDecision,
        SiblingArg::TreeSiblings => SiblingSet::TreeSiblings,
    };
    cfg.eval_tree = match a.eval_tree {
        EvalTreeArg::Iteration => EvalTree::Iteration,
        EvalTreeArg::FullTrain => EvalTree::FullTrain,
    };
    cfg.validate()?;
    let adam_ok = |v: f64, lo: f64, hi: f64| v.is_finite() && v >= lo && v < hi;
    if !(adam_ok(a.lr, 0.0, f64::INFINITY) && adam_ok(a.beta1, 0.0, 1.0) && adam_ok(a.beta2, 0.0, 1.0) && a.eps > 0.0) {
        return Err(usage("Adam settings need lr >= 0, beta1 and beta2 in [0, 1), eps > 0"));
    }
    Ok(cfg)
}

/// Streams log rows to a file that is created on the first completed iteration.
struct LogObserver<'a> {
    path: &'a Path,
    header: String,
    file: Option<BufWriter<File>>,
    error: Option<IoError>,
    clock: Option<Instant>,
    quiet: bool,
}

impl TrainObserver for LogObserver<'_> {
    fn now(&mut self) -> f64 {
        self.clock.map_or(0.0, |c| c.elapsed().as_secs_f64())
    }

    fn on_iteration(&mut self, r: &IterationRecord, _params: &ParameterSet) {
        if !self.quiet {
            let test = r.test_error.map_or_else(|| "-".to_string(), |e| format!("{e:.4}"));
            eprintln!(
                "iter {:>4}  loss {:.6}  nodes {:>5}  test_error {test}  clamps {}",
                r.iter, r.mean_loss, r.nodes, r.clamps
            );
        }
        if self.error.is_some() {
            return;
        }
        let res = (|| -> std::io::Result<()> {
            if self.file.is_none() {
                let mut f = BufWriter::new(File::create(self.path)?);
                trainlog::write_header(&mut f, &self.header)?;
                self.file = Some(f);
            }
            let f = self.file.as_mut().expect("opened above");
            writeln!(f, "{}", trainlog::format_record(r))?;
            f.flush()
        })();
        if let Err(e) = res {
            self.error = Some(IoError::io(self.path, e));
        }
    }
}

fn cmd_train(a: &TrainArgs, spec: &str) -> Result<i32> {
    let cfg = training_config(a)?;
    let (train, test) = load_data(&a.data, a.seed)?;
    if train.feature_dim() != cfg.arch.input_dim() {
        return Err(usage(format!(
            "--arch starts with {} inputs but the data has {} features",
            cfg.arch.input_dim(),
            train.feature_dim()
        )));
    }
    let needed = a.tree_samples + a.grad_steps;
    if train.len() <= needed {
        return Err(usage(format!(
            "training set has {} samples; --tree-samples + --grad-steps needs more than {needed}",
            train.len()
        )));
    }
    let (params, adam) = match &a.init {
        Some(p) => {
            let params = read_checkpoint(p, cfg.arch.activation())?;
            if params.architecture().layer_sizes() != cfg.arch.layer_sizes() {
                return Err(usage(format!("--init has layers {} but --arch is {}", params.architecture(), cfg.arch)));
            }
            let ap = adam_path(p);
            let adam = if ap.exists() {
                read_adam(&ap, &cfg.arch, cfg.adam)?
            } else {
                AdamState::new(cfg.adam, &cfg.arch)
            };
            (params, Some(adam))
        }
        None => (init_params(&cfg.arch, cfg.seed), None),
    };

    let mut obs = LogObserver {
        path: &a.log,
        header: spec.to_string(),
        file: None,
        error: None,
        clock: (!a.no_timing).then(Instant::now),
        quiet: a.quiet,
    };
    let result = match adam {
        Some(state) => train_resume(params, state, &train, test.as_ref(), &cfg, &mut obs),
        None => train_from(params, &train, test.as_ref(), &cfg, &mut obs),
    };
    if let Some(e) = obs.error.take() {
        return Err(e);
    }
    if let Some(f) = obs.file.take() {
        finish(f, &a.log)?;
    }
    let outcome = match result {
        Ok(o) => o,
        Err(TrainError::Invalid(e)) => return Err(e.into()),
        Err(e @ TrainError::Diverged { .. }) => return Err(IoError::Training(Box::new(e))),
    };

    write_checkpoint(&a.checkpoint, &outcome.params)?;
    write_adam(&adam_path(&a.checkpoint), &outcome.adam, &cfg.arch)?;

    if a.tree.is_some() || a.metrics.is_some() || !a.quiet {
        let mut tree = build_full_tree(&outcome.params, &train, test.as_ref().map_or(0, Dataset::classes), cfg.max_children)?;
        tree.refresh_cache(&outcome.params);
        let evaluation = test
            .as_ref()
            .map(|t| error_rate_threads(&tree, &outcome.params, t, NonZeroUsize::MIN));
        if let Some(p) = &a.tree {
            write_tree(p, &tree)?;
        }
        if let (Some(p), Some(err)) = (&a.metrics, evaluation) {
            write_metrics(p, spec, err, tree.len())?;
        }
        if !a.quiet {
            let err = evaluation.map_or_else(|| "-".to_string(), |e| e.to_string());
            eprintln!(
                "stopped: {:?} after {} iterations; full-train tree {} nodes, test error {err}",
                outcome.stop,
                outcome.log.records.len(),
                tree.len()
            );
        }
    }
    Ok(match outcome.stop {
        StopReason::Converged => EXIT_CONVERGED,
        StopReason::MaxIterations => EXIT_ITERATION_CAP,
    })
}

fn write_metrics(path: &Path, spec: &str, test_error: f64, nodes: usize) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# {spec}")
        .and_then(|_| writeln!(w, "test_error,node_count"))
        .and_then(|_| writeln!(w, "{test_error},{nodes}"))
        .map_err(|e| IoError::io(path, e))?;
    finish(w, path)
}

fn full_tree(model: &Model, train: &Dataset, classes: usize, max_children: Option<usize>) -> Result<BoundaryTree> {
    if train.is_empty() {
        return Err(usage("the training set is empty"));
    }
    check_model_input(model, train)?;
    let mut tree = build_full_tree(model, train, classes, max_children)?;
    tree.refresh_cache(model);
    Ok(tree)
}

fn cmd_eval(a: &EvalArgs, spec: &str) -> Result<i32> {
    let model = load_model(&a.model)?;
    let (train, test) = load_data(&a.data, a.seed)?;
    let test = test.filter(|t| !t.is_empty()).ok_or_else(|| usage("eval needs a non-empty test set"))?;
    let tree = full_tree(&model, &train, test.classes(), a.max_children)?;
    let err = error_rate_threads(&tree, &model, &test, a.eval_threads);
    write_metrics(&a.metrics, spec, err, tree.len())?;
    if let Some(p) = &a.tree {
        write_tree(p, &tree)?;
    }
    println!("test_error,node_count");
    println!("{err},{}", tree.len());
    Ok(EXIT_CONVERGED)
}

fn cmd_export_dot(a: &ExportDotArgs) -> Result<i32> {
    let tree = match &a.tree {
        Some(p) => read_tree(p)?,
        None => {
            let model = load_model(&a.model)?;
            let (train, test) = load_data(&a.data, a.seed)?;
            full_tree(&model, &train, test.map_or(0, |t| t.classes()), a.max_children)?
        }
    };
    std::fs::write(&a.out, dot::to_dot(&tree)).map_err(|e| IoError::io(&a.out, e))?;
    Ok(EXIT_CONVERGED)
}

fn cmd_gen_moons(a: &GenMoonsArgs) -> Result<i32> {
    let ds = gen_half_moons(a.n, a.noise, a.seed)?;
    let mut w = create(&a.out)?;
    write_embedding_csv(&mut w, ds.samples()).map_err(|e| IoError::io(&a.out, e))?;
    finish(w, &a.out)?;
    Ok(EXIT_CONVERGED)
}

fn cmd_dump_embeddings(a: &DumpArgs) -> Result<i32> {
    let model = load_model(&a.model)?;
    let (train, test) = load_data(&a.data, a.seed)?;
    let ds = match a.split {
        Split::Train => train,
        Split::Test => test.ok_or_else(|| usage("--split test needs a test set"))?,
    };
    check_model_input(&model, &ds)?;
    let samples: Vec<_> = ds
        .samples()
        .iter()
        .map(|s| betree_core::tree::Sample::new(betree_core::tree::Embedder::embed(&model, &s.features), s.label))
        .collect();
    let mut w = create(&a.out)?;
    write_embedding_csv(&mut w, &samples).map_err(|e| IoError::io(&a.out, e))?;
    finish(w, &a.out)?;
    Ok(EXIT_CONVERGED)
}
