use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info, warn};
use serde::Serialize;
use sspn::bench::{self, with_threads, EstimateRecord, TruthRecord};
use sspn::error::{Error, Result};
use sspn::ingest::{ingest, Database};
use sspn::model_file::{checksum, Model};
use sspn::schema::{load_join_schema, load_schema};
use sspn::synth::{self, SynthConfig};
use sspn::workload::read_records;
use sspn_core::estimator::Variant;
use sspn_core::infer::ProductMode;
use sspn_core::model::{ClusterMethod, TrainConfig};

#[derive(Parser)]
#[command(
    name = "sspn",
    version,
    about = "Join cardinality estimation with sketch-leaf sum-product networks"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network per relation and write a model file.
    Train(TrainArgs),
    /// Estimate every query of a workload (JSON lines out).
    Estimate(EstimateArgs),
    /// Compare estimates with truths.
    Evaluate(EvaluateArgs),
    /// Exact cardinalities from the raw data.
    Oracle(OracleArgs),
    /// L1 distance of approximated Count-Min sketches to exact ones.
    SketchError(SketchErrorArgs),
    /// Write a correlated synthetic dataset and workload.
    Synth(SynthArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Directory holding one CSV file per relation.
    #[arg(long)]
    data: PathBuf,
    /// Schema JSON (default: <data>/schema.json).
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Join schema JSON (default: <data>/joins.json).
    #[arg(long)]
    joins: Option<PathBuf>,
}

impl DataArgs {
    fn load(&self) -> Result<Database> {
        let start = Instant::now();
        let schema = load_schema(&self.schema.clone().unwrap_or_else(|| self.data.join("schema.json")))?;
        let joins = load_join_schema(
            &self.joins.clone().unwrap_or_else(|| self.data.join("joins.json")),
            &schema,
        )?;
        let db = ingest(&self.data, &schema, &joins)?;
        info!(
            "ingested {} relations ({} rows) in {:.3}s",
            db.tables.len(),
            db.stats.rows.iter().sum::<usize>(),
            start.elapsed().as_secs_f64()
        );
        Ok(db)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    HardEm,
    KMeans,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = "SSPN_SEED", default_value_t = 0)]
    seed: u64,
    /// Sketch width, a power of two.
    #[arg(long, default_value_t = 1 << 17)]
    width: usize,
    /// Independent estimator copies.
    #[arg(long, default_value_t = 5)]
    copies: u32,
    #[arg(long, default_value_t = 0.0)]
    rdc_threshold: f64,
    /// Minimum fraction of rows a partition needs to be clustered further.
    #[arg(long, default_value_t = 0.1)]
    cluster_fraction: f64,
    #[arg(long, value_enum, default_value_t = Method::HardEm)]
    cluster_method: Method,
    /// Largest number of distinct join-key tuples kept exactly per leaf.
    #[arg(long, default_value_t = 4096)]
    digest_limit: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    FagmsMedian,
    FagmsMax,
    Bound,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Product,
    MinProduct,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::FagmsMedian => Variant::FagmsMedian,
            VariantArg::FagmsMax => Variant::FagmsMax,
            VariantArg::Bound => Variant::Bound,
        }
    }
}

impl From<ModeArg> for ProductMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Product => ProductMode::Product,
            ModeArg::MinProduct => ProductMode::MinProduct,
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, value_enum, default_value_t = VariantArg::FagmsMedian)]
    variant: VariantArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Product)]
    mode: ModeArg,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// JSON lines from `estimate`.
    #[arg(long)]
    estimates: PathBuf,
    /// JSON lines with `id` and `truth` (oracle output or a workload file).
    #[arg(long)]
    truths: PathBuf,
    /// Print the summary as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    queries: PathBuf,
    /// Work budget per query in rows plus hash-table entries.
    #[arg(long, default_value_t = 50_000_000)]
    budget: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SketchErrorArgs {
    #[arg(long)]
    model: PathBuf,
    /// Directory with the CSV files the model was trained on.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Product)]
    mode: ModeArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    users: usize,
    #[arg(long, default_value_t = 10_000)]
    orders: usize,
    #[arg(long, default_value_t = 500)]
    products: usize,
    #[arg(long, default_value_t = 1.1)]
    zipf: f64,
    /// Number of workload queries written to <out>/queries.jsonl.
    #[arg(long, default_value_t = 200)]
    queries: usize,
    #[arg(long, env = "SSPN_SEED", default_value_t = 0)]
    seed: u64,
}

fn writer(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Error::io(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_lines<T: Serialize>(out: Option<&Path>, items: &[T]) -> Result<()> {
    let mut w = writer(out)?;
    let name = out.map_or_else(|| "<stdout>".to_string(), |p| p.display().to_string());
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        writeln!(w).map_err(|e| Error::io(&name, e))?;
    }
    w.flush().map_err(|e| Error::io(&name, e))
}

fn read_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

fn train(args: TrainArgs, threads: Option<usize>) -> Result<()> {
    let db = args.data.load()?;
    let config = TrainConfig {
        rdc_threshold: args.rdc_threshold,
        cluster_fraction: args.cluster_fraction,
        cluster_method: match args.cluster_method {
            Method::HardEm => ClusterMethod::HardEm,
            Method::KMeans => ClusterMethod::KMeans,
        },
        width: args.width,
        copies: args.copies,
        seed: args.seed,
        digest_limit: args.digest_limit,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let model = with_threads(threads, || bench::train_model(&db, &config))??;
    info!("trained all relations in {:.3}s", start.elapsed().as_secs_f64());
    let bytes = model.to_bytes()?;
    std::fs::write(&args.out, &bytes).map_err(|e| Error::io(&args.out, e))?;
    println!(
        "{} {} bytes sha256 {}",
        args.out.display(),
        bytes.len(),
        checksum(&bytes)
    );
    Ok(())
}

fn estimate(args: EstimateArgs, threads: Option<usize>) -> Result<()> {
    let model = Model::load(&args.model)?;
    let records = read_records(&args.queries)?;
    let start = Instant::now();
    let out: Vec<EstimateRecord> = with_threads(threads, || {
        bench::estimate_workload(&model, &records, args.variant.into(), args.mode.into())
    })?;
    let failed = out.iter().filter(|r| r.error.is_some()).count();
    info!(
        "estimated {} queries in {:.3}s",
        out.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        warn!("{failed} queries failed");
    }
    write_lines(args.out.as_deref(), &out)
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let estimates: Vec<EstimateRecord> = read_lines(&args.estimates)?;
    let truths: Vec<TruthRecord> = read_lines(&args.truths)?;
    let eval = bench::evaluate(&estimates, &truths)?;
    if args.json {
        println!("{}", serde_json::to_string(&eval)?);
    } else {
        print!("{}", eval.summary.table());
        println!("excluded  {}", eval.excluded);
    }
    Ok(())
}

fn oracle(args: OracleArgs, threads: Option<usize>) -> Result<()> {
    let db = args.data.load()?;
    let records = read_records(&args.queries)?;
    let start = Instant::now();
    let out = with_threads(threads, || bench::oracle_workload(&db, &records, Some(args.budget)))?;
    info!("counted {} queries in {:.3}s", out.len(), start.elapsed().as_secs_f64());
    write_lines(args.out.as_deref(), &out)
}

fn sketch_error(args: SketchErrorArgs, threads: Option<usize>) -> Result<()> {
    let model = Model::load(&args.model)?;
    let catalog = &model.catalog;
    let db = ingest(&args.data, &catalog.schema, &catalog.joins)?;
    if db.catalog.dictionaries != catalog.dictionaries {
        return Err(Error::Input("data does not match the model's dictionaries".into()));
    }
    let records = read_records(&args.queries)?;
    let out = with_threads(threads, || -> Result<_> {
        let start = Instant::now();
        let baseline = bench::train_model(&db, &bench::baseline_config(&model.config))?;
        info!("trained independence baseline in {:.3}s", start.elapsed().as_secs_f64());
        Ok(bench::sketch_error_workload(
            &model,
            &baseline,
            &db.tables,
            &records,
            args.mode.into(),
        ))
    })??;
    write_lines(args.out.as_deref(), &out)?;
    let s = bench::summarize_l1(&out);
    info!(
        "{} selections: L1 approx mean {:.2} median {:.2}, baseline mean {:.2} median {:.2}",
        s.selections, s.mean_approx, s.median_approx, s.mean_baseline, s.median_baseline
    );
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let config = SynthConfig {
        users: args.users,
        orders: args.orders,
        products: args.products,
        zipf: args.zipf,
        seed: args.seed,
        ..SynthConfig::default()
    };
    synth::generate(&config)?.write(&args.out)?;
    write_lines(
        Some(&args.out.join("queries.jsonl")),
        &synth::workload(args.queries, args.seed),
    )?;
    info!("wrote synthetic data to {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let threads = cli.threads;
    let result = match cli.command {
        Command::Train(a) => train(a, threads),
        Command::Estimate(a) => estimate(a, threads),
        Command::Evaluate(a) => evaluate(a),
        Command::Oracle(a) => oracle(a, threads),
        Command::SketchError(a) => sketch_error(a, threads),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
