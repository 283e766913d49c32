//! The `rerankit` command line.
//!
//! Every subcommand writes fixed-name artifacts under `--out` plus a
//! `<command>_report.toml` holding the toolkit version, the inputs and the
//! effective configuration. Outputs depend only on inputs, config and seed.
//!
//! Exit codes: 0 success, 1 data or validation error, 2 usage error or
//! missing input.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::corpus::{self, FeatureStore, PairScore, Qrels, RankedRun, TeacherIndex};
use crate::diagnostics::{self, SeparationStats};
use crate::error::{Error, Result};
use crate::metrics::{self, AggregateScores, UnchangedStyle};
use crate::mining::{self, TrainingGroup};
use crate::objectives::ObjectiveConfig;
use crate::scorer;
use crate::synth::{self, SynthConfig};
use crate::trainer::{self, GradCheckOptions, LossSummary};
use crate::VERSION;

#[derive(Debug, Parser)]
#[command(name = "rerankit", version, about = "Learning-to-rank toolkit for two-stage retrieval")]
pub struct Cli {
    /// TOML experiment configuration; missing keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Seed for every random choice [default: 0, or `seed` from the config].
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Directory receiving all output artifacts.
    #[arg(long, global = true, default_value = "out", value_name = "DIR")]
    pub out: PathBuf,

    /// Feature dimension [default: 8].
    #[arg(long, global = true)]
    pub feature_dim: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rescore the head of a first-stage run with a trained scorer.
    Rerank(RerankArgs),
    /// Train a scorer on query groups.
    Train(TrainArgs),
    /// Build training groups from a run, qrels and teacher judgments.
    Mine(MineArgs),
    /// Select queries passing the depth, score-ratio and teacher rules.
    Filter(FilterArgs),
    /// Compute Recall@K and nDCG@K, optionally against a baseline.
    Eval(EvalArgs),
    /// Score-distribution separation and variance decomposition.
    Diagnose(DiagnoseArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Summarise a training-groups file.
    Summary(SummaryArgs),
    /// Generate a synthetic corpus with a planted relevance signal.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct RerankArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Number of head candidates to rescore; 0 leaves the run unchanged [default: 100].
    #[arg(long)]
    pub cutoff: Option<usize>,
    /// First-stage depth kept from the input run [default: 1000].
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long, default_value = "rerankit")]
    pub tag: String,
}

#[derive(Debug, Default, Args)]
pub struct ObjectiveFlags {
    /// Pairwise softmax temperature [default: 10].
    #[arg(long)]
    pub tau_pair: Option<f64>,
    /// Teacher distillation temperature [default: 1].
    #[arg(long)]
    pub tau_teacher: Option<f64>,
    /// Pointwise temperature [default: 1].
    #[arg(long)]
    pub tau_point: Option<f64>,
    /// Teacher term weight [default: 5].
    #[arg(long)]
    pub lambda_teacher: Option<f64>,
    /// Pointwise term weight [default: 0.5].
    #[arg(long)]
    pub lambda_point: Option<f64>,
    /// Disable the teacher distillation term.
    #[arg(long)]
    pub no_teacher: bool,
    /// Disable the pointwise term.
    #[arg(long)]
    pub no_point: bool,
    /// Disable the pairwise term.
    #[arg(long)]
    pub no_pair: bool,
}

impl ObjectiveFlags {
    fn apply(&self, c: &mut ObjectiveConfig) {
        set(&mut c.tau_pair, self.tau_pair);
        set(&mut c.tau_teacher, self.tau_teacher);
        set(&mut c.tau_point, self.tau_point);
        set(&mut c.lambda_teacher, self.lambda_teacher);
        set(&mut c.lambda_point, self.lambda_point);
        c.enable_teacher &= !self.no_teacher;
        c.enable_point &= !self.no_point;
        c.enable_pair &= !self.no_pair;
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub groups: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Start from this checkpoint instead of a seeded random initialisation.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[command(flatten)]
    pub objective: ObjectiveFlags,
    /// Peak learning rate [default: 1e-5].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Warmup fraction of total steps [default: 0.03].
    #[arg(long)]
    pub warmup: Option<f64>,
    /// [default: 2]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Decoupled weight decay [default: 0.01].
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Query groups per optimizer step [default: 1].
    #[arg(long)]
    pub groups_per_step: Option<usize>,
}

#[derive(Debug, Default, Args)]
pub struct MiningFlags {
    /// Trusted-negative margin threshold [default: -6].
    #[arg(long, allow_negative_numbers = true)]
    pub alpha1: Option<f64>,
    /// Suspected-positive margin threshold [default: -8].
    #[arg(long, allow_negative_numbers = true)]
    pub alpha2: Option<f64>,
    /// Negatives per group [default: 2].
    #[arg(long)]
    pub negatives: Option<usize>,
    /// Do not reserve a slot for a trusted negative.
    #[arg(long)]
    pub no_require_trusted: bool,
    /// Top-negative to positive score ratio that rejects a query [default: 2].
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Candidate depth considered [default: 1000].
    #[arg(long)]
    pub depth: Option<usize>,
}

impl MiningFlags {
    fn apply(&self, c: &mut mining::MiningConfig) {
        set(&mut c.alpha1, self.alpha1);
        set(&mut c.alpha2, self.alpha2);
        set(&mut c.negatives_per_query, self.negatives);
        set(&mut c.positive_score_ratio, self.ratio);
        set(&mut c.first_stage_depth, self.depth);
        c.require_trusted &= !self.no_require_trusted;
    }
}

#[derive(Debug, Args)]
pub struct MineArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    #[arg(long)]
    pub teacher: PathBuf,
    #[command(flatten)]
    pub mining: MiningFlags,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    #[arg(long)]
    pub teacher: PathBuf,
    #[command(flatten)]
    pub mining: MiningFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run to evaluate.
    #[arg(long, requires = "qrels")]
    pub run: Option<PathBuf>,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    /// Baseline run for delta percentages.
    #[arg(long, requires = "run")]
    pub baseline: Option<PathBuf>,
    /// Metric cutoffs, comma separated [default: 10,20,50,100].
    #[arg(long, value_delimiter = ',')]
    pub cutoffs: Option<Vec<usize>>,
    /// Precomputed aggregate rows `<name> R@k1 nDCG@k1 R@k2 ...` to compare
    /// instead of runs.
    #[arg(long, conflicts_with_all = ["run", "baseline"])]
    pub scores_table: Option<PathBuf>,
    /// Baseline row of `--scores-table` [default: first row].
    #[arg(long, requires = "scores_table")]
    pub baseline_name: Option<String>,
    /// Print N/A instead of 0.00 where method and baseline agree to 3 decimals.
    #[arg(long)]
    pub na_unchanged: bool,
    /// Binary predictions `<query> <video> <0|1>` scored against the qrels.
    #[arg(long, requires = "qrels")]
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Scores as `<query> <video> <score>` lines or a run file.
    #[arg(long)]
    pub scores: PathBuf,
    /// Qrels defining the relevant class; without it only the decomposition runs.
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    /// Earlier scores (e.g. before training) to compare separation against.
    #[arg(long, requires = "qrels")]
    pub before: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 4)]
    pub dim: usize,
    /// Random instances per ablation configuration.
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, default_value_t = 2)]
    pub min_group: usize,
    #[arg(long, default_value_t = 4)]
    pub max_group: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
    /// Scale the analytic gradient before comparing (negative control).
    #[arg(long, hide = true)]
    pub corrupt_gradient: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SummaryArgs {
    #[arg(long)]
    pub groups: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    pub queries: usize,
    #[arg(long, default_value_t = 2)]
    pub negatives: usize,
    #[arg(long, default_value_t = 0.64)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0.5)]
    pub signal: f64,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Parses `std::env::args`, runs the command and returns the exit code.
pub fn main() -> i32 {
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_missing_input() {
                2
            } else {
                1
            }
        }
    }
}

/// Loads the config file, then applies global and command flags.
fn effective_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut c = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    set(&mut c.seed, cli.seed);
    set(&mut c.feature_dim, cli.feature_dim);
    match &cli.command {
        Command::Rerank(a) => {
            set(&mut c.rerank_cutoff, a.cutoff);
            set(&mut c.rerank_depth, a.depth);
        }
        Command::Train(a) => {
            a.objective.apply(&mut c.objective);
            set(&mut c.trainer.base_lr, a.lr);
            set(&mut c.trainer.warmup_proportion, a.warmup);
            set(&mut c.trainer.epochs, a.epochs);
            set(&mut c.trainer.weight_decay, a.weight_decay);
            set(&mut c.trainer.groups_per_step, a.groups_per_step);
        }
        Command::Mine(a) => a.mining.apply(&mut c.mining),
        Command::Filter(a) => a.mining.apply(&mut c.mining),
        Command::Eval(a) => set(&mut c.metric_cutoffs, a.cutoffs.clone()),
        _ => {}
    }
    c.validate()?;
    Ok(c)
}

pub fn execute(cli: &Cli) -> Result<i32> {
    let config = effective_config(cli)?;
    let ctx = Context { out: &cli.out, config: &config };
    match &cli.command {
        Command::Rerank(a) => cmd_rerank(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Mine(a) => cmd_mine(&ctx, a),
        Command::Filter(a) => cmd_filter(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Diagnose(a) => cmd_diagnose(&ctx, a),
        Command::Gradcheck(a) => cmd_gradcheck(&ctx, a),
        Command::Summary(a) => cmd_summary(&ctx, a),
        Command::Synth(a) => cmd_synth(&ctx, a),
    }
}

struct Context<'a> {
    out: &'a Path,
    config: &'a ExperimentConfig,
}

impl Context<'_> {
    fn path(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(self.out).map_err(|e| Error::io(self.out, e))?;
        Ok(self.out.join(name))
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        let path = self.path(name)?;
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))
    }

    fn report<T: Serialize>(
        &self,
        command: &str,
        inputs: &[(&str, &Path)],
        outputs: &[&str],
        result: &T,
    ) -> Result<()> {
        let to_value = |what: &str, v: toml::Value| match v {
            toml::Value::Table(t) => Ok(t),
            other => Err(Error::Validation(format!("{what} is not a table: {other}"))),
        };
        let mut doc = toml::Table::new();
        doc.insert("tool".into(), "rerankit".into());
        doc.insert("version".into(), VERSION.into());
        doc.insert("command".into(), command.into());
        let mut ins = toml::Table::new();
        for (k, p) in inputs {
            ins.insert((*k).into(), p.display().to_string().into());
        }
        doc.insert("inputs".into(), ins.into());
        doc.insert("outputs".into(), toml::Value::Array(outputs.iter().map(|o| (*o).into()).collect()));
        let result = toml::Value::try_from(result).map_err(|e| Error::Validation(e.to_string()))?;
        doc.insert("result".into(), to_value("result", result)?.into());
        let config = toml::Value::try_from(self.config).map_err(|e| Error::Validation(e.to_string()))?;
        doc.insert("config".into(), to_value("config", config)?.into());
        let text = toml::to_string(&doc).map_err(|e| Error::Validation(e.to_string()))?;
        self.write(&format!("{command}_report.toml"), &text)
    }

    fn header_comments(&self, command: &str) -> Vec<String> {
        vec![
            format!("rerankit {VERSION} {command}"),
            "effective configuration:".to_string(),
            self.config.to_toml(),
        ]
    }
}

fn load_store(path: &Path, config: &ExperimentConfig) -> Result<FeatureStore> {
    let store = corpus::load_features(path)?;
    if store.dim() != config.feature_dim {
        return Err(Error::Config(format!(
            "{} holds {}-dimensional features but feature_dim is {}",
            path.display(),
            store.dim(),
            config.feature_dim
        )));
    }
    Ok(store)
}

fn load_qrels_logged(path: &Path) -> Result<Qrels> {
    let (qrels, warnings) = corpus::load_qrels(path)?;
    for w in &warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(qrels)
}

fn load_teacher_index(path: &Path) -> Result<TeacherIndex> {
    TeacherIndex::new(corpus::load_teacher(path)?)
}

#[derive(Serialize)]
struct RerankResult {
    queries: usize,
    entries: usize,
    cutoff: usize,
    depth: usize,
    /// Entries whose rank changed.
    moved: usize,
}

fn cmd_rerank(ctx: &Context, a: &RerankArgs) -> Result<i32> {
    let cfg = ctx.config;
    let run = corpus::load_run(&a.run)?.truncated(cfg.rerank_depth);
    let store = load_store(&a.features, cfg)?;
    let params = scorer::load_checkpoint(&a.checkpoint)?;
    if params.dim() != store.dim() {
        return Err(Error::DimensionMismatch { expected: store.dim(), found: params.dim() });
    }
    let reranked = scorer::rerank(&run, &params, &store, cfg.rerank_cutoff)?;
    let moved = run
        .iter()
        .map(|(q, list)| {
            let after = reranked.get(q).unwrap_or_default();
            list.iter().zip(after).filter(|(x, y)| x.video_id != y.video_id).count()
        })
        .sum();
    corpus::write_run(&reranked, ctx.path("reranked.run")?, &a.tag)?;
    let result = RerankResult {
        queries: reranked.num_queries(),
        entries: reranked.len(),
        cutoff: cfg.rerank_cutoff,
        depth: cfg.rerank_depth,
        moved,
    };
    ctx.report(
        "rerank",
        &[("run", &a.run), ("features", &a.features), ("checkpoint", &a.checkpoint)],
        &["reranked.run"],
        &result,
    )?;
    println!(
        "reranked {} queries ({} entries moved) -> {}",
        result.queries,
        moved,
        ctx.out.join("reranked.run").display()
    );
    Ok(0)
}

/// Loss components, listing only the enabled terms.
#[derive(Serialize)]
struct LossView {
    total: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pair: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    teacher: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    point: Option<f64>,
}

impl LossView {
    fn new(l: &LossSummary, o: &ObjectiveConfig) -> Self {
        LossView {
            total: l.total,
            pair: o.enable_pair.then_some(l.pair),
            teacher: o.enable_teacher.then_some(l.teacher),
            point: o.enable_point.then_some(l.point),
        }
    }
}

#[derive(Serialize)]
struct TrainResult {
    ablation: String,
    groups: usize,
    total_steps: usize,
    warmup_steps: usize,
    initial_loss: LossView,
    final_loss: LossView,
    epochs: Vec<LossView>,
}

fn cmd_train(ctx: &Context, a: &TrainArgs) -> Result<i32> {
    let cfg = ctx.config;
    let groups = mining::load_groups(&a.groups)?;
    let store = load_store(&a.features, cfg)?;
    let init = match &a.init {
        Some(p) => scorer::load_checkpoint(p)?,
        None => scorer::init_params(cfg.feature_dim, cfg.seed)?,
    };
    let initial = trainer::evaluate_loss(&groups, &store, &init, &cfg.objective)?;
    let (params, report) = trainer::train(&groups, &store, init, &cfg.objective, &cfg.trainer, cfg.seed)?;
    let last = trainer::evaluate_loss(&groups, &store, &params, &cfg.objective)?;

    let mut comments = ctx.header_comments("train");
    comments.insert(1, format!("ablation {}", report.ablation));
    scorer::write_checkpoint(&params, ctx.path("scorer.ckpt")?, &comments)?;
    let mut trace = String::from("step\tlr\tloss\n");
    for (i, (lr, loss)) in report.lr_trace.iter().zip(&report.loss_history).enumerate() {
        let _ = writeln!(trace, "{i}\t{lr:?}\t{loss:?}");
    }
    ctx.write("train_loss.tsv", &trace)?;

    let o = &cfg.objective;
    let result = TrainResult {
        ablation: report.ablation.clone(),
        groups: groups.len(),
        total_steps: report.total_steps,
        warmup_steps: report.warmup_steps,
        initial_loss: LossView::new(&initial, o),
        final_loss: LossView::new(&last, o),
        epochs: report.epoch_losses.iter().map(|l| LossView::new(l, o)).collect(),
    };
    let mut inputs: Vec<(&str, &Path)> = vec![("groups", &a.groups), ("features", &a.features)];
    if let Some(p) = &a.init {
        inputs.push(("init", p));
    }
    ctx.report("train", &inputs, &["scorer.ckpt", "train_loss.tsv"], &result)?;
    println!(
        "trained {} ({} steps): loss {:.6} -> {:.6}",
        result.ablation, result.total_steps, initial.total, last.total
    );
    Ok(0)
}

#[derive(Serialize)]
struct MineResult {
    queries_seen: usize,
    groups_emitted: usize,
    trusted_negatives: usize,
    suspected_positives: usize,
    hard_negatives: usize,
    positive_only_groups: Vec<String>,
    groups_without_trusted: Vec<String>,
    skipped: BTreeMap<String, String>,
}

fn cmd_mine(ctx: &Context, a: &MineArgs) -> Result<i32> {
    let run = corpus::load_run(&a.run)?;
    let qrels = load_qrels_logged(&a.qrels)?;
    let teacher = load_teacher_index(&a.teacher)?;
    let (groups, r) = mining::assemble_groups(&run, &qrels, &teacher, &ctx.config.mining, ctx.config.seed)?;
    mining::write_groups(&groups, ctx.path("groups.jsonl")?)?;
    let result = MineResult {
        queries_seen: r.queries_seen,
        groups_emitted: r.groups_emitted,
        trusted_negatives: r.trusted_negatives,
        suspected_positives: r.suspected_positives,
        hard_negatives: r.hard_negatives,
        positive_only_groups: r.positive_only_groups,
        groups_without_trusted: r.groups_without_trusted,
        skipped: r.skipped.iter().map(|(q, s)| (q.clone(), s.to_string())).collect(),
    };
    ctx.report(
        "mine",
        &[("run", &a.run), ("qrels", &a.qrels), ("teacher", &a.teacher)],
        &["groups.jsonl"],
        &result,
    )?;
    println!(
        "{} groups from {} queries (trusted {}, suspected {}, hard {})",
        result.groups_emitted,
        result.queries_seen,
        result.trusted_negatives,
        result.suspected_positives,
        result.hard_negatives
    );
    Ok(0)
}

#[derive(Serialize)]
struct FilterResult {
    kept: usize,
    rejected: usize,
    histogram: BTreeMap<String, usize>,
    rejected_queries: BTreeMap<String, String>,
    ratio_rule_disabled: Vec<String>,
}

fn cmd_filter(ctx: &Context, a: &FilterArgs) -> Result<i32> {
    let run = corpus::load_run(&a.run)?;
    let qrels = load_qrels_logged(&a.qrels)?;
    let teacher = load_teacher_index(&a.teacher)?;
    let r = mining::filter_queries(&run, &qrels, &teacher, &ctx.config.mining)?;
    let kept: String = r.kept.iter().map(|q| format!("{q}\n")).collect();
    ctx.write("kept_queries.txt", &kept)?;
    let result = FilterResult {
        kept: r.kept.len(),
        rejected: r.rejected.len(),
        histogram: r.histogram().into_iter().map(|(k, n)| (k.to_string(), n)).collect(),
        rejected_queries: r.rejected.iter().map(|(q, why)| (q.clone(), why.to_string())).collect(),
        ratio_rule_disabled: r.ratio_rule_disabled.clone(),
    };
    ctx.report(
        "filter",
        &[("run", &a.run), ("qrels", &a.qrels), ("teacher", &a.teacher)],
        &["kept_queries.txt"],
        &result,
    )?;
    let hist: Vec<String> = result.histogram.iter().map(|(k, n)| format!("{k}={n}")).collect();
    println!(
        "kept {} of {} queries; rejected: {}",
        result.kept,
        result.kept + result.rejected,
        hist.join(" ")
    );
    Ok(0)
}

#[derive(Serialize)]
struct CutoffRow {
    k: usize,
    recall: f64,
    ndcg: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    recall_delta_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ndcg_delta_pct: Option<f64>,
}

#[derive(Serialize)]
struct MethodResult {
    name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    evaluated_queries: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    excluded_queries: Option<usize>,
    cutoffs: Vec<CutoffRow>,
}

#[derive(Serialize)]
struct EvalResult {
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline: Option<String>,
    methods: Vec<MethodResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    binary: Option<metrics::BinaryMetrics>,
}

fn method_result(
    name: &str,
    scores: &AggregateScores,
    baseline: Option<&AggregateScores>,
    counts: Option<(usize, usize)>,
) -> MethodResult {
    let cutoffs = scores
        .0
        .iter()
        .map(|(&k, &(recall, ndcg))| {
            let base = baseline.and_then(|b| b.0.get(&k));
            CutoffRow {
                k,
                recall,
                ndcg,
                recall_delta_pct: base.and_then(|&(br, _)| metrics::delta_pct(br, recall)),
                ndcg_delta_pct: base.and_then(|&(_, bn)| metrics::delta_pct(bn, ndcg)),
            }
        })
        .collect();
    MethodResult {
        name: name.to_string(),
        evaluated_queries: counts.map(|c| c.0),
        excluded_queries: counts.map(|c| c.1),
        cutoffs,
    }
}

/// Reads `<name> v1 v2 ...` rows; `#` starts a comment line.
fn parse_scores_table(path: &Path, cutoffs: &[usize]) -> Result<Vec<(String, AggregateScores)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let src = path.display().to_string();
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split_whitespace();
        let name = cols.next().unwrap_or_default().to_string();
        let values: Vec<f64> = cols
            .map(|c| c.parse::<f64>().map_err(|_| Error::parse(&src, idx + 1, format!("bad value `{c}`"))))
            .collect::<Result<_>>()?;
        let scores = AggregateScores::from_row(cutoffs, &values)
            .map_err(|e| Error::parse(&src, idx + 1, e.to_string()))?;
        if rows.iter().any(|(n, _)| n == &name) {
            return Err(Error::parse(&src, idx + 1, format!("duplicate row `{name}`")));
        }
        rows.push((name, scores));
    }
    if rows.is_empty() {
        return Err(Error::Validation(format!("{src}: no rows")));
    }
    Ok(rows)
}

fn parse_predictions(path: &Path) -> Result<Vec<(String, String, u8)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let src = path.display().to_string();
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            continue;
        }
        let label = match cols.as_slice() {
            [_, _, "0"] => 0,
            [_, _, "1"] => 1,
            _ => return Err(Error::parse(&src, idx + 1, "expected `<query> <video> <0|1>`")),
        };
        out.push((cols[0].to_string(), cols[1].to_string(), label));
    }
    Ok(out)
}

fn cmd_eval(ctx: &Context, a: &EvalArgs) -> Result<i32> {
    let cutoffs = &ctx.config.metric_cutoffs;
    let style = if a.na_unchanged { UnchangedStyle::NotApplicable } else { UnchangedStyle::Zero };
    let qrels = a.qrels.as_deref().map(load_qrels_logged).transpose()?;
    let mut inputs: Vec<(&str, &Path)> = Vec::new();
    let mut outputs = Vec::new();
    let mut result = EvalResult { baseline: None, methods: Vec::new(), binary: None };
    let mut table = String::new();

    if let Some(path) = &a.scores_table {
        inputs.push(("scores_table", path));
        let rows = parse_scores_table(path, cutoffs)?;
        let base_name = a.baseline_name.clone().unwrap_or_else(|| rows[0].0.clone());
        let base = rows
            .iter()
            .find(|(n, _)| *n == base_name)
            .map(|(_, s)| s)
            .ok_or_else(|| Error::InvalidArgument(format!("no row named `{base_name}`")))?;
        let refs: Vec<(&str, &AggregateScores)> = rows.iter().map(|(n, s)| (n.as_str(), s)).collect();
        table = metrics::render_table(cutoffs, &refs, Some(base), style);
        for (name, scores) in &rows {
            let b = (*name != base_name).then_some(base);
            result.methods.push(method_result(name, scores, b, None));
        }
        result.baseline = Some(base_name);
    } else if let (Some(run_path), Some(qrels)) = (&a.run, &qrels) {
        inputs.push(("run", run_path));
        let run = corpus::load_run(run_path)?;
        let report = metrics::evaluate(&run, qrels, cutoffs)?;
        let scores = report.aggregates();
        let mut per_query = String::from("query\tmetric\tk\tvalue\n");
        for (k, m) in &report.cutoffs {
            for (name, values) in [("recall", &m.recall), ("ndcg", &m.ndcg)] {
                for (q, v) in &values.per_query {
                    let _ = writeln!(per_query, "{q}\t{name}\t{k}\t{v:?}");
                }
            }
        }
        ctx.write("eval_per_query.tsv", &per_query)?;
        outputs.push("eval_per_query.tsv");
        let counts = Some((report.query_count, report.excluded_queries));
        if let Some(base_path) = &a.baseline {
            inputs.push(("baseline", base_path));
            let base_run = corpus::load_run(base_path)?;
            let base_report = metrics::evaluate(&base_run, qrels, cutoffs)?;
            let base = base_report.aggregates();
            table =
                metrics::render_table(cutoffs, &[("baseline", &base), ("run", &scores)], Some(&base), style);
            result.methods.push(method_result(
                "baseline",
                &base,
                None,
                Some((base_report.query_count, base_report.excluded_queries)),
            ));
            result.methods.push(method_result("run", &scores, Some(&base), counts));
            result.baseline = Some("baseline".into());
        } else {
            table = metrics::render_table(cutoffs, &[("run", &scores)], None, style);
            result.methods.push(method_result("run", &scores, None, counts));
        }
        if report.excluded_queries > 0 {
            let _ =
                writeln!(table, "({} queries without relevant judgments excluded)", report.excluded_queries);
        }
    }

    if let Some(pred_path) = &a.predictions {
        inputs.push(("predictions", pred_path));
        let qrels = qrels.as_ref().expect("clap enforces --qrels");
        let m = metrics::binary_metrics(&parse_predictions(pred_path)?, qrels)?;
        let show = |x: Option<f64>| x.map_or("N/A".to_string(), |v| format!("{v:.3}"));
        let _ = writeln!(
            table,
            "binary: accuracy {} precision {} recall {}",
            show(m.accuracy),
            show(m.precision),
            show(m.recall)
        );
        result.binary = Some(m);
    }
    if table.is_empty() {
        return Err(Error::InvalidArgument(
            "nothing to evaluate: give --run and --qrels, --scores-table, or --predictions".into(),
        ));
    }
    if let Some(q) = &a.qrels {
        inputs.push(("qrels", q));
    }
    ctx.write("eval_table.txt", &table)?;
    outputs.insert(0, "eval_table.txt");
    ctx.report("eval", &inputs, &outputs, &result)?;
    print!("{table}");
    Ok(0)
}

#[derive(Serialize)]
struct DiagnoseResult {
    #[serde(skip_serializing_if = "Option::is_none")]
    separation: Option<SeparationStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    separation_before: Option<SeparationStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    decomposition: Option<diagnostics::DecompositionReport>,
}

fn separation_of(scores: &[PairScore], qrels: &Qrels) -> Result<SeparationStats> {
    let (rel, non) = diagnostics::split_by_relevance(scores, qrels);
    diagnostics::separation_stats(&rel, &non)
}

fn cmd_diagnose(ctx: &Context, a: &DiagnoseArgs) -> Result<i32> {
    let scores = corpus::load_scores(&a.scores)?;
    let mut inputs: Vec<(&str, &Path)> = vec![("scores", &a.scores)];
    let mut outputs = Vec::new();
    let mut result = DiagnoseResult { separation: None, separation_before: None, decomposition: None };
    let mut summary = Vec::new();

    if let Some(qpath) = &a.qrels {
        inputs.push(("qrels", qpath));
        let qrels = load_qrels_logged(qpath)?;
        let (rel, non) = diagnostics::split_by_relevance(&scores, &qrels);
        let sep = diagnostics::separation_stats(&rel, &non)?;
        ctx.write("ecdf_relevant.tsv", &diagnostics::ecdf(&rel)?.to_text())?;
        ctx.write("ecdf_nonrelevant.tsv", &diagnostics::ecdf(&non)?.to_text())?;
        outputs.extend(["ecdf_relevant.tsv", "ecdf_nonrelevant.tsv"]);
        summary.push(format!("auc {:.4} overlap {:.4} mean_gap {:.4}", sep.auc, sep.overlap, sep.mean_gap));
        if let Some(bpath) = &a.before {
            inputs.push(("before", bpath));
            let before = separation_of(&corpus::load_scores(bpath)?, &qrels)?;
            summary.push(format!("(before: auc {:.4} overlap {:.4})", before.auc, before.overlap));
            result.separation_before = Some(before);
        }
        result.separation = Some(sep);
    }
    if scores.len() >= 2 {
        let d = diagnostics::variance_decomposition(&scores)?;
        let show = |x: Option<f64>| x.map_or("N/A".to_string(), |v| format!("{v:.3}"));
        summary.push(format!(
            "r2 query {} video {} additive {}",
            show(d.r2_query_only),
            show(d.r2_video_only),
            show(d.r2_additive)
        ));
        result.decomposition = Some(d);
    } else if a.qrels.is_none() {
        return Err(Error::Validation(format!(
            "{}: variance decomposition needs at least 2 scored pairs",
            a.scores.display()
        )));
    }
    ctx.report("diagnose", &inputs, &outputs, &result)?;
    println!("{}", summary.join("; "));
    Ok(0)
}

#[derive(Serialize)]
struct GradcheckRow {
    ablation: String,
    max_relative_error: f64,
}

#[derive(Serialize)]
struct GradcheckResult {
    passed: bool,
    tolerance: f64,
    trials_per_ablation: usize,
    dim: usize,
    epsilon: f64,
    max_relative_error: f64,
    ablations: Vec<GradcheckRow>,
}

fn cmd_gradcheck(ctx: &Context, a: &GradcheckArgs) -> Result<i32> {
    let options = GradCheckOptions {
        dim: a.dim,
        group_size: (a.min_group, a.max_group),
        trials: a.trials as usize,
        seed: ctx.config.seed,
        epsilon: a.epsilon,
        corrupt_scale: a.corrupt_gradient.unwrap_or(1.0),
    };
    let mut rows = Vec::new();
    for objective in ctx.config.objective.ablations() {
        let r = trainer::grad_check(&options, &objective)?;
        rows.push(GradcheckRow {
            ablation: objective.ablation_label(),
            max_relative_error: r.max_relative_error,
        });
    }
    let worst = rows.iter().map(|r| r.max_relative_error).fold(0.0, f64::max);
    let passed = worst < a.tolerance;
    let result = GradcheckResult {
        passed,
        tolerance: a.tolerance,
        trials_per_ablation: options.trials,
        dim: a.dim,
        epsilon: a.epsilon,
        max_relative_error: worst,
        ablations: rows,
    };
    ctx.report("gradcheck", &[], &[], &result)?;
    println!(
        "{}: max relative error {worst:.3e} over {} instances (tolerance {:e})",
        if passed { "PASS" } else { "FAIL" },
        options.trials * result.ablations.len(),
        a.tolerance
    );
    Ok(if passed { 0 } else { 1 })
}

#[derive(Serialize)]
struct SummaryResult {
    groups: usize,
    total_records: usize,
    positive_pairs: usize,
    negative_pairs: usize,
    mean_candidates_per_query: f64,
    /// Number of groups keyed by negative count.
    negatives_histogram: BTreeMap<String, usize>,
}

fn cmd_summary(ctx: &Context, a: &SummaryArgs) -> Result<i32> {
    let groups: Vec<TrainingGroup> = mining::load_groups(&a.groups)?;
    let s = mining::dataset_summary(&groups);
    let result = SummaryResult {
        groups: s.groups,
        total_records: s.total_records,
        positive_pairs: s.positive_pairs,
        negative_pairs: s.negative_pairs,
        mean_candidates_per_query: s.mean_candidates_per_query,
        negatives_histogram: s.negatives_histogram.iter().map(|(k, n)| (k.to_string(), *n)).collect(),
    };
    ctx.report("summary", &[("groups", &a.groups)], &[], &result)?;
    println!(
        "{} groups, {} records ({} positive, {} negative), {:.2} candidates per query",
        s.groups, s.total_records, s.positive_pairs, s.negative_pairs, s.mean_candidates_per_query
    );
    Ok(0)
}

#[derive(Serialize)]
struct SynthResult {
    synth: SynthConfig,
    queries: usize,
    videos: usize,
    train_queries: usize,
    heldout_queries: usize,
}

fn cmd_synth(ctx: &Context, a: &SynthArgs) -> Result<i32> {
    let sc = SynthConfig {
        dim: ctx.config.feature_dim,
        queries: a.queries,
        negatives_per_query: a.negatives,
        train_fraction: a.train_fraction,
        signal: a.signal,
        ..SynthConfig::default()
    };
    let ds = synth::generate(&sc, ctx.config.seed)?;
    corpus::write_features(&ds.store, ctx.path("features.jsonl")?)?;
    corpus::write_qrels(&ds.qrels, ctx.path("qrels.txt")?)?;
    corpus::write_teacher(&ds.judgments, ctx.path("teacher.jsonl")?)?;
    corpus::write_run(&ds.first_stage, ctx.path("first_stage.run")?, "synth")?;
    let split = |ids: &[String]| -> RankedRun { ds.run_for(ids) };
    corpus::write_run(&split(&ds.train_queries), ctx.path("train.run")?, "synth")?;
    corpus::write_run(&split(&ds.heldout_queries), ctx.path("heldout.run")?, "synth")?;
    mining::write_groups(&ds.training_groups(&ds.train_queries)?, ctx.path("train_groups.jsonl")?)?;
    let outputs = [
        "features.jsonl",
        "qrels.txt",
        "teacher.jsonl",
        "first_stage.run",
        "train.run",
        "heldout.run",
        "train_groups.jsonl",
    ];
    let result = SynthResult {
        synth: sc,
        queries: ds.store.num_queries(),
        videos: ds.store.num_videos(),
        train_queries: ds.train_queries.len(),
        heldout_queries: ds.heldout_queries.len(),
    };
    ctx.report("synth", &[], &outputs, &result)?;
    println!(
        "{} queries ({} train, {} held out), {} videos -> {}",
        result.queries,
        result.train_queries,
        result.heldout_queries,
        result.videos,
        ctx.out.display()
    );
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn ablation_flags_map_to_objective() {
        let cli = Cli::try_parse_from([
            "rerankit",
            "train",
            "--groups",
            "g",
            "--features",
            "f",
            "--no-teacher",
            "--no-point",
        ])
        .unwrap();
        let c = effective_config(&cli).unwrap();
        assert_eq!(c.objective.ablation_label(), "P");
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "seed = 4\n[mining]\nalpha1 = -5.0\n").unwrap();
        let p = path.to_str().unwrap();
        let cli = Cli::try_parse_from([
            "rerankit",
            "--config",
            p,
            "mine",
            "--run",
            "r",
            "--qrels",
            "q",
            "--teacher",
            "t",
            "--alpha1",
            "-7",
        ])
        .unwrap();
        let c = effective_config(&cli).unwrap();
        assert_eq!((c.seed, c.mining.alpha1), (4, -7.0));
        let cli = Cli::try_parse_from(["rerankit", "--config", p, "--seed", "9", "summary", "--groups", "g"])
            .unwrap();
        assert_eq!(effective_config(&cli).unwrap().seed, 9);
    }

    #[test]
    fn zero_trials_is_usage_error() {
        let err = Cli::try_parse_from(["rerankit", "gradcheck", "--trials", "0"]).unwrap_err();
        assert!(err.use_stderr());
        assert_eq!(run_from(["rerankit", "gradcheck", "--trials", "0"]), 2);
    }
}
