use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use sparseloco::compress::{compress, CompressorConfig, QuantSpec, Selection};
use sparseloco::config::{ConfigError, RunConfig};
use sparseloco::data::{generate_synthetic, read_dataset, write_dataset};
use sparseloco::harness::{self, HarnessError};
use sparseloco::index_codec::IndexCodec;
use sparseloco::sim::{run_outer_loop, SimError};
use sparseloco::{ParamVector, Rng, SparseMessage};

const THREADS_ENV: &str = "SPARSELOCO_THREADS";

#[derive(Parser)]
#[command(name = "sparseloco", version, about = "Multi-replica training simulator and pseudo-gradient compression tools")]
#[command(after_help = "Set SPARSELOCO_THREADS to fix the worker thread count.\nExit codes: 0 ok, 1 error, 2 config error, 3 numeric failure.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration (or each arm of its sweep) and write CSV logs and summaries.
    Train {
        config: PathBuf,
        /// Output directory; defaults to `out_dir` from the config, then `.`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Leave the wall_ms column empty so logs are byte-reproducible.
        #[arg(long)]
        no_timing: bool,
    },
    /// Message sizes, sync counts and per-topology volumes for the method grid.
    CommReport {
        #[arg(long, default_value_t = harness::REFERENCE_PARAMS)]
        params: u64,
        #[arg(long, default_value_t = 4096)]
        chunk_size: usize,
        #[arg(long, default_value_t = 2445)]
        total_steps: usize,
        #[arg(long, default_value_t = 8)]
        workers: usize,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Index coding cost per transmitted value against the lower bound.
    CodecBench {
        #[arg(long, default_value_t = 4096)]
        chunk_size: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [32, 128, 256])]
        k: Vec<usize>,
        /// Random subsets pushed through both codecs per k.
        #[arg(long, default_value_t = 1000)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Run an ablation suite on the toy task and print ordering verdicts.
    Ablate {
        /// One of: randk-vs-topk, quant-bits, nesterov-ef, chunking-dct, outer-momentum, lom.
        suite: String,
        #[arg(long, value_delimiter = ',', default_values_t = [0, 1, 2])]
        seeds: Vec<u64>,
        /// Base config replacing the built-in toy task.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write `<suite>.csv` with per-seed results here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit with status 1 when a verdict fails.
        #[arg(long)]
        strict: bool,
    },
    /// Inspect or produce serialized sparse messages.
    Wire {
        #[command(subcommand)]
        command: WireCommand,
    },
    /// Write or inspect binary dataset files.
    Dataset {
        #[command(subcommand)]
        command: DatasetCommand,
    },
}

#[derive(Subcommand)]
enum WireCommand {
    /// Print the header and the first chunks of a message file.
    Dump {
        file: PathBuf,
        #[arg(long, default_value_t = 4)]
        chunks: usize,
    },
    /// Validate a message file.
    Parse { file: PathBuf },
    /// Compress a random Gaussian vector and write the message.
    Sample {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        len: usize,
        #[arg(long, default_value_t = 4096)]
        chunk_size: usize,
        #[arg(long, default_value_t = 128)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        bits: u8,
        #[arg(long, value_enum, default_value_t = CodecArg::Enumerative)]
        codec: CodecArg,
        #[arg(long)]
        dct: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Generate the training shards of a config and write them.
    Generate {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the dimensions and class histogram of a dataset file.
    Inspect { file: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum CodecArg {
    Naive,
    Enumerative,
    Dense,
}

impl From<CodecArg> for IndexCodec {
    fn from(c: CodecArg) -> Self {
        match c {
            CodecArg::Naive => IndexCodec::Naive,
            CodecArg::Enumerative => IndexCodec::Enumerative,
            CodecArg::Dense => IndexCodec::Dense,
        }
    }
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Numeric(String),
    Other(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Other(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numeric(m) | CliError::Other(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => c.into(),
            SimError::NumericFailure { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Sim(s) => s.into(),
            HarnessError::Config(c) => c.into(),
            HarnessError::UnknownSuite(..) => CliError::Config(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

fn other(e: impl std::fmt::Display) -> CliError {
    CliError::Other(e.to_string())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| other(format!("writing {}: {e}", path.display())))
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| other(format!("reading {}: {e}", path.display())))
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV}={v} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(other)
}

fn train(config: &Path, out: Option<PathBuf>, no_timing: bool) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let out = out.or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out).map_err(|e| other(format!("creating {}: {e}", out.display())))?;
    for run in cfg.expand()? {
        let log = run_outer_loop(&run)?;
        let mut csv = Vec::new();
        log.write_csv(&mut csv, !no_timing).map_err(other)?;
        write_file(&out.join(format!("{}.csv", run.name)), &csv)?;
        let summary = harness::run_summary(&run, &log)?;
        let json = serde_json::to_string_pretty(&summary).map_err(other)?;
        write_file(&out.join(format!("{}.summary.json", run.name)), format!("{json}\n").as_bytes())?;
        println!(
            "{}: {} syncs, final eval loss {:.4}, {} bytes per message",
            run.name,
            summary.syncs,
            summary.final_eval_loss.unwrap_or(f64::NAN),
            summary.message_bytes
        );
    }
    Ok(())
}

fn wire(cmd: WireCommand) -> Result<(), CliError> {
    match cmd {
        WireCommand::Dump { file, chunks } => {
            let msg = SparseMessage::parse(&read_file(&file)?).map_err(other)?;
            print!("{}", msg.describe(chunks));
        }
        WireCommand::Parse { file } => {
            let bytes = read_file(&file)?;
            let msg = SparseMessage::parse(&bytes).map_err(other)?;
            let h = &msg.header;
            println!(
                "ok: {} bytes, param_len={} chunk_size={} k={} bits={} codec={:?}",
                bytes.len(),
                h.param_len,
                h.chunk_size,
                h.k,
                h.value_bits.bits(),
                h.codec
            );
        }
        WireCommand::Sample { out, len, chunk_size, k, bits, codec, dct, seed } => {
            let codec = IndexCodec::from(codec);
            let quant = QuantSpec::new(bits).map_err(|e| CliError::Config(e.to_string()))?;
            let cfg = CompressorConfig { chunk_size, k, selection: Selection::TopK, dct, quant };
            let mut rng = Rng::new(seed, 0);
            let v = ParamVector::<f32>::new((0..len).map(|_| rng.normal() as f32).collect())
                .map_err(|e| CliError::Config(e.to_string()))?;
            let c = compress(&v, &cfg, &mut rng).map_err(|e| CliError::Config(e.to_string()))?;
            let bytes = SparseMessage::from_compressed(&c, codec).and_then(|m| m.serialize()).map_err(|e| CliError::Config(e.to_string()))?;
            write_file(&out, &bytes)?;
            println!("wrote {} bytes to {}", bytes.len(), out.display());
        }
    }
    Ok(())
}

fn dataset(cmd: DatasetCommand) -> Result<(), CliError> {
    match cmd {
        DatasetCommand::Generate { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let task = generate_synthetic(&cfg.dataset_spec()).map_err(|e| CliError::Config(e.to_string()))?;
            let mut buf = Vec::new();
            write_dataset(&task.train, &mut buf).map_err(other)?;
            write_file(&out, &buf)?;
            println!("wrote {} samples ({} bytes) to {}", task.train.data.len(), buf.len(), out.display());
        }
        DatasetCommand::Inspect { file } => {
            let ds = read_dataset(&read_file(&file)?[..]).map_err(other)?;
            println!("samples    {}", ds.data.len());
            println!("input_dim  {}", ds.data.input_dim);
            println!("n_classes  {}", ds.data.n_classes);
            println!("shards     {}", ds.num_shards);
            println!("histogram  {:?}", ds.data.class_histogram());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let stdout = &mut std::io::stdout();
    match cli.command {
        Command::Train { config, out, no_timing } => train(&config, out, no_timing)?,
        Command::CommReport { params, chunk_size, total_steps, workers, format } => {
            let rows = harness::comm_report(params, chunk_size, total_steps, workers, &harness::default_methods())?;
            let text = match format {
                Format::Text => harness::comm_report_text(&rows),
                Format::Csv => harness::comm_report_csv(&rows).map_err(other)?,
                Format::Json => serde_json::to_string_pretty(&rows).map_err(other)? + "\n",
            };
            stdout.write_all(text.as_bytes()).map_err(other)?;
        }
        Command::CodecBench { chunk_size, k, cases, seed, format } => {
            if k.iter().any(|&k| k == 0 || k > chunk_size) {
                return Err(CliError::Config(format!("every k must be in 1..={chunk_size}")));
            }
            let rows = harness::codec_bench(chunk_size, &k, cases, seed)?;
            let text = match format {
                Format::Text => harness::codec_bench_text(&rows),
                Format::Csv => {
                    let mut w = Vec::new();
                    writeln!(w, "chunk_size,k,limit,enumerative,naive,roundtrip_cases,roundtrip_ok").map_err(other)?;
                    for r in &rows {
                        writeln!(
                            w,
                            "{},{},{},{},{},{},{}",
                            r.chunk_size,
                            r.k,
                            r.limit_bits_per_value,
                            r.enumerative_bits_per_value,
                            r.naive_bits_per_value,
                            r.roundtrip_cases,
                            r.roundtrip_ok
                        )
                        .map_err(other)?;
                    }
                    String::from_utf8(w).map_err(other)?
                }
                Format::Json => serde_json::to_string_pretty(&rows).map_err(other)? + "\n",
            };
            stdout.write_all(text.as_bytes()).map_err(other)?;
            if rows.iter().any(|r| !r.roundtrip_ok) {
                return Err(other("codec round trip failed"));
            }
        }
        Command::Ablate { suite, seeds, config, out, strict } => {
            let base = match config {
                Some(p) => RunConfig::load(&p)?,
                None => harness::toy_config(),
            };
            let report = harness::run_ablation(&suite, &base, &seeds)?;
            print!("{}", report.to_text());
            if let Some(dir) = out {
                fs::create_dir_all(&dir).map_err(other)?;
                write_file(&dir.join(format!("{suite}.csv")), report.to_csv().map_err(other)?.as_bytes())?;
            }
            if strict && report.verdicts.iter().any(|v| !v.passed) {
                return Err(other("ablation verdict failed"));
            }
        }
        Command::Wire { command } => wire(command)?,
        Command::Dataset { command } => dataset(command)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
