//! `chunk-stats`: waiting-time samples of τ-nice versus chunked sampling.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use dfsdca::sampling::{chunked_sampling, naive_chunks_with, tau_nice, waiting_time, ChunkGuard};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{io_error, CliError, CliResult};
use crate::setup::DataArgs;
use crate::write_output;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GuardArg {
    /// Close a chunk once its nonzero total would exceed max_i nnz(A_i).
    NnzSum,
    /// Compare the chunk's coordinate count instead.
    CoordinateCount,
}

#[derive(Debug, Args)]
pub struct ChunkStatsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Units per draw: coordinates for nice sampling, chunks for chunked.
    #[arg(long)]
    pub tau: usize,
    #[arg(long, default_value_t = 10_000)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "nnz-sum")]
    pub guard: GuardArg,
    /// CSV destination (default stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Partition JSON (default: <out>.partition.json when --out is given).
    #[arg(long)]
    pub partition_out: Option<PathBuf>,
}

fn side_file(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".partition.json");
    PathBuf::from(name)
}

pub fn cmd_chunk_stats(args: &ChunkStatsArgs) -> CliResult<()> {
    if args.draws == 0 {
        return Err(CliError::Usage("--draws must be at least 1".into()));
    }
    let (data, _) = args.data.load()?;
    let guard = match args.guard {
        GuardArg::NnzSum => ChunkGuard::NnzSum,
        GuardArg::CoordinateCount => ChunkGuard::CoordinateCount,
    };
    let partition = naive_chunks_with(data.nnz(), guard)?;
    let k = partition.k();
    if args.tau == 0 {
        return Err(CliError::Usage("--tau must be at least 1".into()));
    }
    if args.tau > k {
        return Err(CliError::Data(format!(
            "tau = {} exceeds the number of chunks k = {k}",
            args.tau
        )));
    }
    let nice = tau_nice(&data, args.tau)?;
    let chunked = chunked_sampling(&partition, args.tau, &data)?;

    let mut rng_nice = ChaCha8Rng::seed_from_u64(args.seed);
    let mut rng_chunked = ChaCha8Rng::seed_from_u64(args.seed.wrapping_add(1));
    let mut sample_nice = nice.sampler();
    let mut sample_chunked = chunked.sampler();

    let mut csv = String::new();
    let _ = writeln!(csv, "# dfsdca chunk-stats");
    let _ = writeln!(csv, "# data={}", args.data.describe());
    let _ = writeln!(
        csv,
        "# n={} tau={} draws={} seed={} k={k} capacity={} max_chunk={}",
        data.n(),
        args.tau,
        args.draws,
        args.seed,
        partition.capacity,
        partition.max_size()
    );
    csv.push_str("standard,chunked\n");
    let (mut sum_nice, mut sum_chunked) = (0.0, 0.0);
    for _ in 0..args.draws {
        let a = waiting_time(sample_nice.draw(&mut rng_nice), data.nnz());
        let b = waiting_time(sample_chunked.draw(&mut rng_chunked), data.nnz());
        sum_nice += a;
        sum_chunked += b;
        let _ = writeln!(csv, "{a},{b}");
    }
    let draws = args.draws as f64;
    let _ = writeln!(csv, "# mean,{},{}", sum_nice / draws, sum_chunked / draws);
    write_output(args.out.as_deref(), &csv)?;

    let partition_path = args
        .partition_out
        .clone()
        .or_else(|| args.out.as_deref().map(side_file));
    if let Some(path) = partition_path {
        let json = serde_json::to_string_pretty(&partition)
            .map_err(|e| CliError::Failure(format!("serializing partition: {e}")))?;
        fs::write(&path, json + "\n").map_err(|e| io_error(&path, e))?;
    }
    Ok(())
}
