//! `sigclr` CLI: pretraining, linear-probe evaluation, batch-size sweeps,
//! chunked-loss benchmarking, and oracle check suites.
//!
//! Exit codes: 0 success, 1 config error, 2 check failure, 3 numerical
//! divergence.

use clap::{Args, Parser, Subcommand, ValueEnum};
use sigclr::checks;
use sigclr::config::{load_config_file, DataConfig, RunConfig};
use sigclr::error::{Error, Result};
use sigclr::model::Model;
use sigclr::train;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "sigclr",
    version,
    about = "Sigmoid contrastive learning lab: pretraining, probing, chunked-loss checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Flat key = value config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Loss branch: sigclr or ntxent.
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Simulated devices for the chunked loss (sigclr only).
    #[arg(long)]
    devices: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Dataset: `synthetic` or `cifar10:PATH`.
    #[arg(long)]
    data: Option<String>,
    /// Output directory for checkpoints, metrics, and reports.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Seeded two-view self-supervised pretraining run.
    Pretrain(#[command(flatten)] RunArgs),
    /// Linear evaluation of a checkpoint on frozen encoder embeddings.
    Probe {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Pretrain + probe across batch sizes with linear lr scaling.
    Sweep {
        /// Comma-separated batch sizes; empty emits an empty table.
        #[arg(long, value_delimiter = ',')]
        batch_sizes: Vec<usize>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Chunked-loss report: wall time, peak block elements, exchanges,
    /// and deviation from the monolithic loss per device count.
    ChunkBench {
        #[arg(long, default_value_t = 32)]
        pairs: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        devices: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run an oracle suite; exits 2 if any item fails.
    Check {
        #[arg(value_enum)]
        kind: CheckKind,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CheckKind {
    Grad,
    Chunk,
    Masks,
    LossValues,
    All,
}

fn resolve_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => load_config_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(loss) = &args.loss {
        cfg.loss_kind = loss.parse()?;
    }
    if let Some(bs) = args.batch_size {
        cfg.optimizer.batch_size = bs;
    }
    if let Some(devices) = args.devices {
        cfg.devices = devices;
    }
    if let Some(epochs) = args.epochs {
        cfg.optimizer.total_epochs = epochs;
    }
    if let Some(data) = &args.data {
        cfg.data = parse_data_flag(data)?;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn parse_data_flag(value: &str) -> Result<DataConfig> {
    if value == "synthetic" {
        return Ok(DataConfig::default_synthetic());
    }
    if let Some(path) = value.strip_prefix("cifar10:") {
        return Ok(DataConfig::Cifar10 {
            dir: PathBuf::from(path),
        });
    }
    Err(Error::Config(format!(
        "--data expects `synthetic` or `cifar10:PATH`, got `{value}`"
    )))
}

fn cmd_pretrain(args: &RunArgs) -> Result<i32> {
    let cfg = resolve_config(args)?;
    let out = train::pretrain(&cfg)?;
    println!(
        "pretrain done: {} epochs, loss {} -> {}",
        cfg.epochs(),
        out.initial_loss,
        out.final_loss
    );
    println!("view stream hash: {}", out.view_stream_hash);
    println!("checkpoint: {}", out.checkpoint.display());
    println!("metrics:    {}", out.metrics_csv.display());
    println!("summary:    {}", out.summary_json.display());
    Ok(0)
}

fn cmd_probe(checkpoint: &PathBuf, args: &RunArgs) -> Result<i32> {
    let cfg = resolve_config(args)?;
    cfg.validate()?;
    let mut model = Model::init(cfg.model.spec(cfg.input_dim()), cfg.seed)?;
    let tensors = sigclr::checkpoint::load_tensors(checkpoint)?;
    model.load_named_tensors(&tensors)?;
    let result = train::run_probe(&cfg, &model)?;
    let json = result.to_json();
    println!("{json:#}");
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join("probe.json"), format!("{json:#}\n"))?;
    Ok(0)
}

fn cmd_sweep(batch_sizes: &[usize], args: &RunArgs) -> Result<i32> {
    let cfg = resolve_config(args)?;
    let rows = train::sweep(&cfg, batch_sizes)?;
    println!("batch_size,top1,final_loss,status");
    for row in &rows {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        println!(
            "{},{},{},{}",
            row.batch_size,
            fmt(row.top1),
            fmt(row.final_loss),
            row.status
        );
    }
    for line in train::REFERENCE_FOOTER {
        println!("{line}");
    }
    println!("table written to {}", cfg.out_dir.join("sweep.csv").display());
    Ok(0)
}

fn cmd_chunk_bench(pairs: usize, dim: usize, devices: &[usize], seed: u64) -> Result<i32> {
    let threads = train::thread_cap();
    let (rows, mono_elems) = checks::chunk_bench(pairs, dim, devices, seed, threads)?;
    println!("devices,wall_ms,peak_block_elems,exchange_count,max_value_dev,max_grad_dev");
    for r in &rows {
        println!(
            "{},{:.3},{},{},{:e},{:e}",
            r.devices, r.wall_ms, r.peak_block_elems, r.exchange_count, r.max_value_dev, r.max_grad_dev
        );
    }
    println!("# monolithic pairwise matrix: {mono_elems} elements (2n = {})", 2 * pairs);
    Ok(0)
}

fn cmd_check(kind: CheckKind) -> Result<i32> {
    let items = match kind {
        CheckKind::Grad => checks::check_grad(),
        CheckKind::Chunk => checks::check_chunk(),
        CheckKind::Masks => checks::check_masks(),
        CheckKind::LossValues => checks::check_loss_values(),
        CheckKind::All => checks::check_all(),
    };
    for item in &items {
        println!(
            "{} {} ({})",
            if item.passed { "PASS" } else { "FAIL" },
            item.name,
            item.detail
        );
    }
    if checks::all_passed(&items) {
        println!("all {} checks passed", items.len());
        Ok(0)
    } else {
        Ok(2)
    }
}

fn run(cli: Cli) -> Result<i32> {
    match &cli.command {
        Command::Pretrain(args) => cmd_pretrain(args),
        Command::Probe { checkpoint, run } => cmd_probe(checkpoint, run),
        Command::Sweep { batch_sizes, run } => cmd_sweep(batch_sizes, run),
        Command::ChunkBench {
            pairs,
            dim,
            devices,
            seed,
        } => cmd_chunk_bench(*pairs, *dim, devices, *seed),
        Command::Check { kind } => cmd_check(*kind),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
