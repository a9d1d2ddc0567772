//! The `bicl` experiment driver.
//!
//! Subcommands: `gen`, `annotate`, `analyze`, `simulate-entropy`, `train`,
//! `compare`. Exit codes: 0 on success, 1 on runtime failure, 2 on usage or
//! validation errors.

mod compare;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::infotheory::{entropy_ordering_simulation, ClassPrior, InfoReport};
use crate::learner::{
    train, Architecture, CpeVariant, LossKind, LossSpec, Optimizer, TrainConfig, UreCorrection,
};
use crate::metrics::DatasetReport;
use crate::numfmt::fmt_sig;
use crate::protocol::{
    annotate_rule_based, assign_candidates, kmeans, read_csv, sample_from_q, sample_seed_set,
    BlobGenerator, CandidateMode, ComplementaryDataset, CsvDataset, LabeledDataset,
};
use crate::transition::{
    estimate_from_pairs, make_biased_three_level, make_bicl_analysis, make_dense_random,
    make_sparse_from_dense, make_uniform, PairCounts, TransitionMatrix,
};

pub use compare::{run_compare, CompareRow, CompareTable};

#[derive(Debug, Parser)]
#[command(
    name = "bicl",
    version,
    about = "Complementary-label learning experiments"
)]
pub struct Cli {
    /// Base RNG seed.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Format of the document printed to standard output.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train/test Gaussian blobs.
    Gen(GenArgs),
    /// Collect complementary labels with one of the protocols.
    Annotate(AnnotateArgs),
    /// Entropy, mutual information and Fano bound of a matrix or dataset.
    Analyze(AnalyzeArgs),
    /// Sparse-vs-dense conditional entropy Monte Carlo.
    SimulateEntropy(SimulateArgs),
    /// Train a classifier from complementary labels.
    Train(TrainArgs),
    /// Grid of transition designs x losses over several seeds.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long, default_value_t = 10)]
    pub c: usize,
    #[arg(long, default_value_t = 100)]
    pub n_per_class: usize,
    #[arg(long, default_value_t = 50)]
    pub n_test_per_class: usize,
    #[arg(long, default_value_t = 8)]
    pub d: usize,
    #[arg(long, default_value_t = 1.0)]
    pub spread: f64,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProtocolMode {
    /// Per-class candidate sets (true label never offered).
    Analysis,
    /// K-means clusters with per-cluster candidate sets.
    Practical,
    /// Direct sampling from a transition matrix.
    SyntheticQ,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum QBuilder {
    Uniform,
    Biased3,
    Bicl,
    SparseFromDense,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    /// Labeled CSV to annotate.
    #[arg(long)]
    pub input: PathBuf,
    /// Class count; defaults to one more than the largest label.
    #[arg(long)]
    pub c: Option<usize>,
    #[arg(long, value_enum, default_value_t = ProtocolMode::Analysis)]
    pub mode: ProtocolMode,
    /// Candidate-set size.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Cluster count for the practical mode; defaults to C.
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    /// Annotator error rate.
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    /// Generating matrix for synthetic-q mode.
    #[arg(long, value_enum, default_value_t = QBuilder::Uniform)]
    pub q_builder: QBuilder,
    /// Generating matrix file for synthetic-q mode (overrides --q-builder).
    #[arg(long)]
    pub q_file: Option<PathBuf>,
    /// Laplace smoothing for the empirical transition in the report.
    #[arg(long, default_value_t = 0.0)]
    pub smoothing: f64,
    #[arg(long, default_value_t = 0.0)]
    pub iyx: f64,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long, conflicts_with_all = ["cl_file", "q_builder"])]
    pub q_file: Option<PathBuf>,
    #[arg(long, conflicts_with = "q_builder")]
    pub cl_file: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub q_builder: Option<QBuilder>,
    /// Class count (for --q-builder, or a check against the input).
    #[arg(long)]
    pub c: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Use a uniform prior instead of the dataset's label frequencies.
    #[arg(long)]
    pub uniform_prior: bool,
    /// Require the Fano bound (fails when C <= 2).
    #[arg(long)]
    pub fano: bool,
    /// Assumed I(Y;X) in bits for the Fano bound.
    #[arg(long, default_value_t = 0.0)]
    pub iyx: f64,
    #[arg(long, default_value_t = 0.0)]
    pub smoothing: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 10)]
    pub c: usize,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ArchChoice {
    Linear,
    Mlp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OptimizerChoice {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Args)]
pub struct TrainingArgs {
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub weight_decay: f64,
    #[arg(long, value_enum, default_value_t = OptimizerChoice::Adam)]
    pub optimizer: OptimizerChoice,
    #[arg(long, value_enum, default_value_t = ArchChoice::Mlp)]
    pub arch: ArchChoice,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
}

impl TrainingArgs {
    pub fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            weight_decay: self.weight_decay,
            optimizer: match self.optimizer {
                OptimizerChoice::Sgd => Optimizer::Sgd,
                OptimizerChoice::Adam => Optimizer::Adam,
            },
            seed,
            arch: match self.arch {
                ArchChoice::Linear => Architecture::Linear,
                ArchChoice::Mlp => Architecture::Mlp {
                    hidden: self.hidden,
                },
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Complementary CSV (or labeled CSV for --loss ce).
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub c: Option<usize>,
    /// ce | fwd | ure | cpe, or a full name such as ure-nn / cpe-t.
    #[arg(long, default_value = "fwd")]
    pub loss: String,
    /// URE correction: none | nn | ga.
    #[arg(long)]
    pub correction: Option<String>,
    /// CPE variant: i | f | t.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long, conflicts_with_all = ["q_builder", "seed_per_class"])]
    pub q_file: Option<PathBuf>,
    #[arg(long, value_enum, conflicts_with = "seed_per_class")]
    pub q_builder: Option<QBuilder>,
    /// Candidate-set size for --q-builder bicl / sparse-from-dense.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Seed for --q-builder; defaults to --seed.
    #[arg(long)]
    pub q_seed: Option<u64>,
    /// Estimate Q from this many true-labeled training samples per class.
    #[arg(long)]
    pub seed_per_class: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub smoothing: f64,
    /// With --seed-per-class: train on alpha*CE(seed set) + (1-alpha)(C-1)*FWD(rest).
    #[arg(long)]
    pub alpha: Option<f64>,
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Comma-separated designs: uniform, biased3, bicl, sparse-from-dense, file:<path>.
    #[arg(long, default_value = "uniform,biased3,bicl")]
    pub designs: String,
    /// Comma-separated losses (fwd, ure, ure-nn, ure-ga, cpe-i, cpe-f, cpe-t, ce).
    #[arg(long, default_value = "fwd")]
    pub losses: String,
    /// Number of seeds, starting at --seed.
    #[arg(long, default_value_t = 3)]
    pub seeds: usize,
    /// Design whose mean is subtracted in the delta column.
    #[arg(long, default_value = "uniform")]
    pub baseline: String,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
}

/// Parses arguments, runs, and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let ctx = Ctx {
        seed: cli.seed,
        out,
        format: cli.format,
    };
    match &cli.command {
        Command::Gen(a) => cmd_gen(&ctx, a),
        Command::Annotate(a) => cmd_annotate(&ctx, a),
        Command::Analyze(a) => cmd_analyze(&ctx, a),
        Command::SimulateEntropy(a) => cmd_simulate(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Compare(a) => cmd_compare(&ctx, a),
    }
}

pub(crate) struct Ctx {
    pub seed: u64,
    pub out: PathBuf,
    pub format: Format,
}

impl Ctx {
    fn path(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out)?;
        Ok(self.out.join(name))
    }
}

/// Independent seed for a pipeline stage.
pub(crate) fn stage_seed(seed: u64, stage: u64) -> u64 {
    seed.wrapping_add(stage.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn open_csv(path: &Path, c: Option<usize>) -> Result<CsvDataset> {
    let file = File::open(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    read_csv(BufReader::new(file), c)
}

pub(crate) fn build_q(
    builder: QBuilder,
    c: usize,
    k: usize,
    seed: u64,
) -> Result<TransitionMatrix> {
    match builder {
        QBuilder::Uniform => make_uniform(c),
        QBuilder::Biased3 => make_biased_three_level(c, seed),
        QBuilder::Bicl => make_bicl_analysis(c, k, seed),
        QBuilder::SparseFromDense => {
            make_sparse_from_dense(&make_dense_random(c, seed)?, k, stage_seed(seed, 1))
        }
    }
}

/// Train/test blobs around the same class means.
pub(crate) fn blobs(data: &DataArgs, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    if data.n_per_class == 0 || data.n_test_per_class == 0 {
        return Err(Error::invalid(
            "--n-per-class and --n-test-per-class must be >= 1",
        ));
    }
    let gen = BlobGenerator::new(data.c, data.d, data.spread, seed)?;
    Ok((
        gen.sample(data.n_per_class, 0)?,
        gen.sample(data.n_test_per_class, 1)?,
    ))
}

fn cmd_gen(ctx: &Ctx, a: &GenArgs) -> Result<()> {
    let (train, test) = blobs(&a.data, ctx.seed)?;
    let train_path = ctx.path("train.csv")?;
    let test_path = ctx.path("test.csv")?;
    train.write_csv(BufWriter::new(File::create(&train_path)?))?;
    test.write_csv(BufWriter::new(File::create(&test_path)?))?;
    println!(
        "gen: {} train rows, {} test rows, C={}, d={} -> {}",
        train.n(),
        test.n(),
        train.c(),
        train.d(),
        ctx.out.display()
    );
    Ok(())
}

fn cmd_annotate(ctx: &Ctx, a: &AnnotateArgs) -> Result<()> {
    let input = open_csv(&a.input, a.c)?;
    let ds = input.labeled().clone();
    let c = ds.c();
    let cds: ComplementaryDataset = match a.mode {
        ProtocolMode::Analysis => {
            let ca = assign_candidates(CandidateMode::PerClass, ds.labels(), c, a.k, ctx.seed)?;
            write_json(&ctx.path("candidates.json")?, &ca)?;
            annotate_rule_based(&ds, &ca, ds.labels(), a.epsilon, stage_seed(ctx.seed, 1))?
        }
        ProtocolMode::Practical => {
            let clusters = a.clusters.unwrap_or(c);
            let model = kmeans(
                ds.features(),
                ds.d(),
                clusters,
                a.max_iters,
                stage_seed(ctx.seed, 2),
            )?;
            let ca = assign_candidates(
                CandidateMode::PerCluster,
                &model.assignments,
                c,
                a.k,
                ctx.seed,
            )?;
            write_json(&ctx.path("candidates.json")?, &ca)?;
            annotate_rule_based(
                &ds,
                &ca,
                &model.assignments,
                a.epsilon,
                stage_seed(ctx.seed, 1),
            )?
        }
        ProtocolMode::SyntheticQ => {
            let q = match &a.q_file {
                Some(p) => TransitionMatrix::load(p)?,
                None => build_q(a.q_builder, c, a.k, ctx.seed)?,
            };
            if q.c() != c {
                return Err(Error::shape(format!("Q over {c} classes"), q.c()));
            }
            q.save(ctx.path("q_generating.json")?)?;
            sample_from_q(&ds, &q, stage_seed(ctx.seed, 1))?
        }
    };
    let stem = a
        .input
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("data");
    let cl_path = ctx.path(&format!("{stem}_cl.csv"))?;
    cds.write_csv(BufWriter::new(File::create(&cl_path)?))?;
    let report = DatasetReport::compute(&cds, a.smoothing, a.iyx)?;
    report.empirical_q.save(ctx.path("q_empirical.json")?)?;
    write_json(&ctx.path("report.json")?, &report)?;
    println!(
        "annotate: {} samples, noise_rate {}, h_cond_bits_uniform {} -> {}",
        cds.n(),
        fmt_sig(report.noise_rate, 6),
        fmt_sig(report.info_uniform.h_cond_bits, 6),
        cl_path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct DatasetAnalysis {
    info: InfoReport,
    dataset: DatasetReport,
}

fn print_info_csv(info: &InfoReport) {
    println!("h_cond_bits,i_yybar_bits,fano_bound,c");
    println!(
        "{},{},{},{}",
        fmt_sig(info.h_cond_bits, 12),
        fmt_sig(info.i_yybar_bits, 12),
        info.fano_bound.map(|b| fmt_sig(b, 12)).unwrap_or_default(),
        info.c
    );
}

fn cmd_analyze(ctx: &Ctx, a: &AnalyzeArgs) -> Result<()> {
    if a.fano && a.c.is_some_and(|c| c <= 2) {
        return Err(Error::DegenerateDenominator {
            c: a.c.unwrap_or(0),
        });
    }
    let check_c = |c: usize| match a.c {
        Some(expected) if expected != c => {
            Err(Error::shape(format!("C={expected}"), format!("C={c}")))
        }
        _ => Ok(()),
    };
    let require_fano = |info: &InfoReport| match (a.fano, info.fano_bound) {
        (true, None) => Err(Error::DegenerateDenominator { c: info.c }),
        _ => Ok(()),
    };

    if let Some(path) = &a.cl_file {
        let CsvDataset::Complementary(cds) = open_csv(path, a.c)? else {
            return Err(Error::Parse(format!(
                "{} has no ybar column",
                path.display()
            )));
        };
        check_c(cds.c())?;
        let dataset = DatasetReport::compute(&cds, a.smoothing, a.iyx)?;
        let info = if a.uniform_prior {
            dataset.info_uniform.clone()
        } else {
            dataset.info_empirical.clone()
        };
        require_fano(&info)?;
        let doc = DatasetAnalysis { info, dataset };
        if ctx.format == Format::Json {
            println!("{}", serde_json::to_string_pretty(&doc)?);
        } else {
            print_info_csv(&doc.info);
        }
        if ctx_has_out(ctx) {
            write_json(&ctx.path("analysis.json")?, &doc)?;
        }
        return Ok(());
    }

    let q = match (&a.q_file, a.q_builder) {
        (Some(p), _) => TransitionMatrix::load(p)?,
        (None, Some(b)) => build_q(b, a.c.unwrap_or(10), a.k, ctx.seed)?,
        (None, None) => {
            return Err(Error::invalid(
                "analyze needs one of --q-file, --cl-file or --q-builder",
            ))
        }
    };
    check_c(q.c())?;
    // A bare matrix carries no label frequencies, so the prior is uniform.
    let info = InfoReport::compute(&q, &ClassPrior::uniform(q.c()), a.iyx)?;
    require_fano(&info)?;
    if ctx.format == Format::Json {
        println!("{}", serde_json::to_string_pretty(&info)?);
    } else {
        print_info_csv(&info);
    }
    if ctx_has_out(ctx) {
        write_json(&ctx.path("analysis.json")?, &info)?;
    }
    Ok(())
}

fn ctx_has_out(ctx: &Ctx) -> bool {
    ctx.out != Path::new(".")
}

#[derive(Serialize)]
struct SimulationSummary {
    c: usize,
    k: usize,
    trials: usize,
    seed: u64,
    #[serde(serialize_with = "crate::numfmt::ser_sig12")]
    fraction: f64,
}

fn cmd_simulate(ctx: &Ctx, a: &SimulateArgs) -> Result<()> {
    let outcome = entropy_ordering_simulation(a.c, a.k, a.trials, ctx.seed)?;
    let summary = SimulationSummary {
        c: a.c,
        k: a.k,
        trials: a.trials,
        seed: ctx.seed,
        fraction: outcome.fraction(),
    };
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(
        ctx.path("entropy_pairs.csv")?,
    )?));
    w.write_record(["trial", "h_dense", "h_sparse"])?;
    for (t, e) in outcome.trials.iter().enumerate() {
        w.write_record([
            t.to_string(),
            fmt_sig(e.h_dense, 12),
            fmt_sig(e.h_sparse, 12),
        ])?;
    }
    w.flush()?;
    write_json(&ctx.path("simulation.json")?, &summary)?;
    // The fraction alone is the headline; the full summary lives in simulation.json.
    match ctx.format {
        Format::Json => println!("{:.3}", summary.fraction),
        Format::Csv => {
            println!("c,k,trials,seed,fraction");
            println!(
                "{},{},{},{},{:.3}",
                a.c, a.k, a.trials, ctx.seed, summary.fraction
            );
        }
    }
    Ok(())
}

fn parse_loss(a: &TrainArgs) -> Result<LossKind> {
    let base = a.loss.to_ascii_lowercase();
    let kind = match base.as_str() {
        "ure" => LossKind::Ure(
            match a
                .correction
                .as_deref()
                .map(str::to_ascii_lowercase)
                .as_deref()
            {
                None | Some("none") => UreCorrection::None,
                Some("nn") | Some("tnn") => UreCorrection::Nn,
                Some("ga") | Some("tga") => UreCorrection::Ga,
                Some(other) => {
                    return Err(Error::invalid(format!("unknown URE correction {other:?}")))
                }
            },
        ),
        "cpe" => LossKind::Cpe(
            match a.variant.as_deref().map(str::to_ascii_lowercase).as_deref() {
                None | Some("f") => CpeVariant::F,
                Some("i") => CpeVariant::I,
                Some("t") => CpeVariant::T,
                Some(other) => {
                    return Err(Error::invalid(format!("unknown CPE variant {other:?}")))
                }
            },
        ),
        other => LossKind::parse(other)?,
    };
    Ok(kind)
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    #[serde(flatten)]
    report: &'a crate::learner::TrainReport,
    q_source: String,
    seed: u64,
}

fn cmd_train(ctx: &Ctx, a: &TrainArgs) -> Result<()> {
    let kind = parse_loss(a)?;
    let input = open_csv(&a.train, a.c)?;
    let c = input.labeled().c();
    let test = open_csv(&a.test, Some(c))?.labeled().clone();
    let mut ds = match input {
        CsvDataset::Complementary(cds) => cds,
        CsvDataset::Labeled(ds) if kind == LossKind::Ce => {
            let cl = ds.labels().iter().map(|y| (y + 1) % c).collect();
            ComplementaryDataset::new(ds, cl)?
        }
        CsvDataset::Labeled(_) => {
            return Err(Error::invalid(format!(
                "{} has no ybar column; loss {} needs complementary labels",
                a.train.display(),
                kind.name()
            )))
        }
    };

    let mut seed_set = None;
    let (q, q_source) = if let Some(p) = &a.q_file {
        (
            Some(TransitionMatrix::load(p)?),
            format!("file:{}", p.display()),
        )
    } else if let Some(b) = a.q_builder {
        let q_seed = a.q_seed.unwrap_or(ctx.seed);
        (
            Some(build_q(b, c, a.k, q_seed)?),
            format!("builder:{b:?}:{q_seed}").to_lowercase(),
        )
    } else if let Some(m) = a.seed_per_class {
        if m == 0 {
            return Err(Error::invalid("--seed-per-class must be >= 1"));
        }
        let idx = sample_seed_set(ds.base().labels(), c, m, stage_seed(ctx.seed, 3));
        let seed_ds = ds.subset(&idx);
        let counts = PairCounts::from_pairs(c, seed_ds.base().labels(), seed_ds.cl())?;
        let q = estimate_from_pairs(&counts, a.smoothing)?;
        if a.alpha.is_some() {
            seed_set = Some(seed_ds.base().clone());
            let rest: Vec<usize> = (0..ds.n())
                .filter(|i| idx.binary_search(i).is_err())
                .collect();
            ds = ds.subset(&rest);
        }
        (Some(q), format!("seed-set:{m}-per-class"))
    } else {
        (None, "none".to_string())
    };
    if a.alpha.is_some() && seed_set.is_none() {
        return Err(Error::invalid("--alpha needs --seed-per-class"));
    }
    if let Some(q) = &q {
        q.save(ctx.path("q_used.json")?)?;
    }

    let spec = match seed_set {
        Some(seed) => LossSpec::combined(q.expect("estimated"), seed, a.alpha.expect("checked")),
        None => LossSpec::new(kind, q),
    };
    let cfg = a.training.config(ctx.seed);
    let report = train(&ds, &spec, &cfg, &test)?;

    report.write_curves_csv(BufWriter::new(File::create(ctx.path("curves.csv")?)?))?;
    let summary = TrainSummary {
        report: &report,
        q_source,
        seed: ctx.seed,
    };
    write_json(&ctx.path("train.json")?, &summary)?;
    if let Some(params) = &report.params {
        write_json(&ctx.path("params.json")?, params)?;
    }
    match ctx.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&summary)?),
        Format::Csv => {
            let mut buf = Vec::new();
            report.write_curves_csv(&mut buf)?;
            std::io::stdout().write_all(&buf)?;
        }
    }
    Ok(())
}

fn cmd_compare(ctx: &Ctx, a: &CompareArgs) -> Result<()> {
    let table = run_compare(a, ctx.seed)?;
    let mut csv_buf = Vec::new();
    table.write_csv(&mut csv_buf, 12)?;
    std::fs::write(ctx.path("compare.csv")?, &csv_buf)?;
    write_json(&ctx.path("compare.json")?, &table)?;
    match ctx.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&table)?),
        Format::Csv => {
            let mut buf = Vec::new();
            table.write_csv(&mut buf, 6)?;
            std::io::stdout().write_all(&buf)?;
        }
    }
    Ok(())
}
