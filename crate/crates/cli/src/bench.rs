//! Configuration sweeps over deployed images. Each cell of the sweep
//! (image x probe count x optimization arm) becomes one report row; every
//! image also gets a host-baseline row so reports can state speedups.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use rayon::prelude::*;
use reis_core::engine::{self, SearchParams};
use reis_core::host::{recall_at_k, GroundTruth};
use reis_core::image;
use reis_core::layout::{DeployedDatabase, SsdDevice};
use reis_core::vectordb::Fp32Vector;

use crate::query::{db_mode, resolve_threshold, run_host};
use crate::report::{write_rows_csv, write_rows_json, ReportRow};
use crate::Global;

/// Results per query; recall is reported at this depth.
pub const BENCH_K: usize = 10;
/// Rerank candidates as a multiple of k.
pub const BENCH_MULTIPLIER: usize = 10;

#[derive(Debug, Clone, Copy)]
struct Arm {
    name: &'static str,
    df: bool,
    pl: bool,
    mpibc: bool,
}

const ARMS: [Arm; 4] = [
    Arm { name: "none", df: false, pl: false, mpibc: false },
    Arm { name: "df", df: true, pl: false, mpibc: false },
    Arm { name: "df+pl", df: true, pl: true, mpibc: false },
    Arm { name: "df+pl+mpibc", df: true, pl: true, mpibc: true },
];

fn parse_arm(name: &str) -> Result<Arm> {
    ARMS.iter()
        .find(|arm| arm.name == name)
        .copied()
        .ok_or_else(|| {
            let names: Vec<&str> = ARMS.iter().map(|a| a.name).collect();
            anyhow::anyhow!("unknown optimization arm {name:?}, expected one of {names:?}")
        })
}

/// Nearest-rank percentile of an ascending-sorted sample.
fn percentile_ns(sorted: &[u64], pct: f64) -> u64 {
    debug_assert!(!sorted.is_empty());
    let rank = ((pct / 100.0 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

#[derive(Args)]
pub struct BenchArgs {
    /// Deployed image directory; repeat the flag to compare drives.
    #[arg(long = "image", required = true)]
    images: Vec<PathBuf>,

    /// Query vector file (RVEC).
    #[arg(long)]
    queries: PathBuf,

    /// Exact ground-truth file (RGTK) for recall.
    #[arg(long)]
    truth: PathBuf,

    /// Comma-separated probe counts (ignored by flat databases).
    #[arg(long, value_delimiter = ',', default_value = "8")]
    nprobe: Vec<usize>,

    /// Comma-separated optimization arms: none, df, df+pl, df+pl+mpibc.
    #[arg(long, value_delimiter = ',', default_value = "df+pl+mpibc")]
    opts: Vec<String>,

    /// Distance filter threshold for df arms: a bit count or "auto".
    #[arg(long, default_value = "auto")]
    filter: String,

    /// Database id within each image.
    #[arg(long, default_value_t = 0)]
    db: u8,

    /// Base name of the CSV and JSON outputs.
    #[arg(long, default_value = "bench")]
    label: String,
}

fn sweep_cell(
    device: &SsdDevice,
    db: &DeployedDatabase,
    queries: &[Fp32Vector],
    truth: &GroundTruth,
    nprobe: usize,
    arm: Arm,
    threshold: Option<u16>,
) -> Result<ReportRow> {
    let params = SearchParams {
        k: BENCH_K,
        nprobe,
        candidate_multiplier: BENCH_MULTIPLIER,
        filter_threshold: if arm.df { threshold } else { None },
        enable_pipeline: arm.pl,
        enable_mpibc: arm.mpibc,
    };
    let mut latencies = Vec::with_capacity(queries.len());
    let mut indices = Vec::with_capacity(queries.len());
    let mut energy_nj = 0.0;
    let mut pages = 0u64;
    let mut scanned = 0u64;
    let mut transferred = 0u64;
    for query in queries {
        let output = engine::search(device, db.db_id, query, &params, None)?;
        latencies.push(output.metrics.total_ns);
        energy_nj += output.metrics.energy_nj;
        pages += output.metrics.pages_read;
        scanned += output.metrics.entries_scanned;
        transferred += output.metrics.entries_transferred;
        indices.push(output.hits.iter().map(|h| h.dataset_index).collect());
    }
    let recall = recall_at_k(truth, &indices, BENCH_K)?;
    let total_ns: u64 = latencies.iter().sum();
    latencies.sort_unstable();
    let nq = queries.len() as f64;
    Ok(ReportRow {
        preset: device.config().preset.clone(),
        mode: db_mode(db).to_string(),
        nprobe,
        threshold: if arm.df { threshold } else { None },
        df: arm.df,
        pl: arm.pl,
        mpibc: arm.mpibc,
        queries: queries.len(),
        qps: nq / (total_ns as f64 / 1e9),
        mean_us: total_ns as f64 / 1e3 / nq,
        p50_us: percentile_ns(&latencies, 50.0) as f64 / 1e3,
        p95_us: percentile_ns(&latencies, 95.0) as f64 / 1e3,
        p99_us: percentile_ns(&latencies, 99.0) as f64 / 1e3,
        energy_uj_per_query: energy_nj / 1e3 / nq,
        recall_at_10: recall,
        filtered_pct: if scanned == 0 {
            0.0
        } else {
            100.0 * (scanned - transferred) as f64 / scanned as f64
        },
        pages_read: pages,
    })
}

fn host_row(
    device: &SsdDevice,
    db: &DeployedDatabase,
    queries: &[Fp32Vector],
    truth: &GroundTruth,
) -> Result<ReportRow> {
    let (results, total_ns) = run_host(device, db, queries, BENCH_K, BENCH_MULTIPLIER)?;
    let indices: Vec<Vec<u32>> = results.into_iter().map(|r| r.indices).collect();
    let recall = recall_at_k(truth, &indices, BENCH_K)?;
    let nq = queries.len() as f64;
    // One batch cost spread uniformly, so qps and latency stay consistent.
    let per_query_us = total_ns as f64 / 1e3 / nq;
    Ok(ReportRow {
        preset: device.config().preset.clone(),
        mode: "host".to_string(),
        nprobe: 0,
        threshold: None,
        df: false,
        pl: false,
        mpibc: false,
        queries: queries.len(),
        qps: nq / (total_ns as f64 / 1e9),
        mean_us: per_query_us,
        p50_us: per_query_us,
        p95_us: per_query_us,
        p99_us: per_query_us,
        energy_uj_per_query: 0.0,
        recall_at_10: recall,
        filtered_pct: 0.0,
        pages_read: 0,
    })
}

pub fn run(global: &Global, args: &BenchArgs) -> Result<()> {
    let arms: Vec<Arm> = args.opts.iter().map(|s| parse_arm(s)).collect::<Result<_>>()?;
    if args.nprobe.is_empty() || arms.is_empty() {
        bail!("--nprobe and --opts need at least one value each");
    }
    let queries = image::load_vectors(&args.queries)?;
    if queries.is_empty() {
        bail!("{} holds no queries", args.queries.display());
    }
    let truth = GroundTruth::load(&args.truth)?;
    if truth.ids.len() != queries.len() {
        bail!("ground truth covers {} queries, query file holds {}", truth.ids.len(), queries.len());
    }

    let mut rows: Vec<ReportRow> = Vec::new();
    for image_dir in &args.images {
        let device = image::load_device(image_dir)
            .with_context(|| format!("loading image {}", image_dir.display()))?;
        let db = device.database(args.db)?;
        if queries[0].dim() != db.dim {
            bail!("query dim {} does not match database dim {}", queries[0].dim(), db.dim);
        }
        let threshold = if arms.iter().any(|arm| arm.df) {
            let resolved =
                resolve_threshold(&device, db, &queries, &args.filter, BENCH_K, BENCH_MULTIPLIER)?;
            if resolved.is_none() {
                bail!("df arms need --filter auto or a bit count");
            }
            resolved
        } else {
            None
        };

        let cells: Vec<(usize, Arm)> = args
            .nprobe
            .iter()
            .flat_map(|&nprobe| arms.iter().map(move |&arm| (nprobe, arm)))
            .collect();
        let cell_rows: Vec<ReportRow> = cells
            .par_iter()
            .map(|&(nprobe, arm)| sweep_cell(&device, db, &queries, &truth, nprobe, arm, threshold))
            .collect::<Result<_>>()?;
        rows.extend(cell_rows);
        rows.push(host_row(&device, db, &queries, &truth)?);
    }

    let out = global.out_dir()?;
    let csv_path = out.join(format!("{}.csv", args.label));
    let json_path = out.join(format!("{}.json", args.label));
    write_rows_csv(&csv_path, &rows, true)?;
    write_rows_json(&json_path, &rows)?;
    println!("{} rows over {} image(s)", rows.len(), args.images.len());
    println!("csv: {}", csv_path.display());
    println!("json: {}", json_path.display());
    Ok(())
}
