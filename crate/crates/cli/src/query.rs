//! Query execution against a deployed image: the in-storage engine, a
//! host-baseline twin that scans the same stored codes, and the drive
//! command trace.

use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use reis_core::config::{HostParams, SimConfig};
use reis_core::engine::{self, SearchMetrics, SearchParams, TraceEvent};
use reis_core::host::HostCostModel;
use reis_core::image;
use reis_core::layout::{DeployedDatabase, SsdDevice};
use reis_core::vectordb::{
    binarize, hamming_distance, int8_squared_l2, quantize_int8, BitVector, Fp32Vector, Int8Vector,
};

use crate::Global;

/// Scan throughputs assumed for the host baseline when the config leaves
/// them unset. Pinned constants instead of a micro-benchmark so repeated
/// runs produce identical reports; set them in the config to match real
/// hardware.
pub const DEFAULT_HAMMING_VECTORS_PER_US: f64 = 50.0;
pub const DEFAULT_FP32_VECTORS_PER_US: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Engine {
    /// The in-storage engine, with modeled device timing.
    Reis,
    /// A conventional load-then-scan host, on the same stored codes.
    Host,
}

/// One query's answer in report form.
#[derive(Debug, serde::Serialize)]
pub struct QueryResult {
    pub indices: Vec<u32>,
    pub binary_distances: Vec<u16>,
    pub rerank_distances: Vec<u64>,
    pub documents: Vec<String>,
}

#[derive(Debug, serde::Serialize)]
pub struct EngineReport {
    pub total_us: f64,
    pub mean_us: f64,
    pub energy_uj_per_query: f64,
    pub pages_read: u64,
    pub results: Vec<QueryResult>,
}

#[derive(Debug, serde::Serialize)]
struct SearchReport {
    image: String,
    preset: String,
    mode: &'static str,
    queries: usize,
    k: usize,
    nprobe: usize,
    candidate_multiplier: usize,
    filter_threshold: Option<u16>,
    pipeline: bool,
    mpibc: bool,
    engines: std::collections::BTreeMap<&'static str, EngineReport>,
}

pub fn db_mode(db: &DeployedDatabase) -> &'static str {
    if db.rivf.is_empty() {
        "flat"
    } else {
        "ivf"
    }
}

/// Resolves `--filter`: "off", "auto" (calibrated from the stored codes
/// against this query batch), or an explicit bit count.
pub fn resolve_threshold(
    device: &SsdDevice,
    db: &DeployedDatabase,
    queries: &[Fp32Vector],
    filter: &str,
    k: usize,
    multiplier: usize,
) -> Result<Option<u16>> {
    match filter {
        "off" => Ok(None),
        "auto" => {
            let codes: Vec<BitVector> = (0..db.n)
                .map(|slot| {
                    let bytes = db.binary_code(device.flash(), slot)?.into_owned();
                    Ok(BitVector::from_bytes(bytes)?)
                })
                .collect::<Result<_>>()?;
            let query_codes: Vec<BitVector> = queries
                .iter()
                .map(|q| Ok(binarize(q, &db.quantizer)?))
                .collect::<Result<_>>()?;
            let threshold =
                engine::calibrate_filter_threshold(&codes, &query_codes, k * multiplier, 0.01)?;
            Ok(Some(threshold))
        }
        other => {
            let threshold: u16 = other
                .parse()
                .with_context(|| format!("--filter takes a bit count, \"auto\", or \"off\", got {other:?}"))?;
            Ok(Some(threshold))
        }
    }
}

/// Runs the in-storage engine over a query batch. Returns per-query
/// results, per-query metrics, and the per-query command streams.
pub fn run_engine(
    device: &SsdDevice,
    db_id: u8,
    queries: &[Fp32Vector],
    params: &SearchParams,
    want_trace: bool,
) -> Result<(Vec<QueryResult>, Vec<SearchMetrics>, Vec<Vec<TraceEvent>>)> {
    let mut results = Vec::with_capacity(queries.len());
    let mut metrics = Vec::with_capacity(queries.len());
    let mut traces = Vec::new();
    for query in queries {
        let mut trace = Vec::new();
        let output = engine::search(
            device,
            db_id,
            query,
            params,
            want_trace.then_some(&mut trace),
        )?;
        results.push(QueryResult {
            indices: output.hits.iter().map(|h| h.dataset_index).collect(),
            binary_distances: output.hits.iter().map(|h| h.hamming_dist).collect(),
            rerank_distances: output.hits.iter().map(|h| h.int8_dist).collect(),
            documents: output
                .hits
                .iter()
                .map(|h| String::from_utf8_lossy(&h.document).into_owned())
                .collect(),
        });
        metrics.push(output.metrics);
        if want_trace {
            traces.push(trace);
        }
    }
    Ok((results, metrics, traces))
}

/// Host cost model with any unset scan throughput pinned to the documented
/// defaults, so reports are reproducible across runs.
pub fn pinned_host_model(config: &SimConfig, dim: usize) -> Result<HostCostModel> {
    let params = HostParams {
        hamming_scan_vectors_per_us: Some(
            config
                .host
                .hamming_scan_vectors_per_us
                .unwrap_or(DEFAULT_HAMMING_VECTORS_PER_US),
        ),
        fp32_scan_vectors_per_us: Some(
            config
                .host
                .fp32_scan_vectors_per_us
                .unwrap_or(DEFAULT_FP32_VECTORS_PER_US),
        ),
        ..config.host.clone()
    };
    Ok(HostCostModel::calibrate(&params, dim)?)
}

/// Bytes a host must read off the drive to answer queries itself: binary
/// codes, INT8 codes, and the documents.
pub fn host_dataset_bytes(db: &DeployedDatabase) -> u64 {
    let doc_bytes: u64 = db.doc_lens.iter().map(|&l| u64::from(l)).sum();
    db.n * (db.dim as u64 / 8 + db.dim as u64) + doc_bytes
}

/// The conventional baseline on the same stored data: load the dataset,
/// brute-force the binary scan, rerank with INT8, fetch documents. Same
/// tie rules as the in-storage engine on a flat deployment. Returns
/// per-query results and the modeled batch time.
pub fn run_host(
    device: &SsdDevice,
    db: &DeployedDatabase,
    queries: &[Fp32Vector],
    k: usize,
    multiplier: usize,
) -> Result<(Vec<QueryResult>, u64)> {
    if k == 0 || k as u64 > db.n || multiplier == 0 {
        bail!("k must be in 1..={} with a positive multiplier", db.n);
    }
    let flash = device.flash();
    let int8_of = |slot: u64| -> Result<Int8Vector> {
        let record = db.link_record(flash, slot)?;
        Ok(Int8Vector::from_code_bytes(&db.int8_code(flash, record.radr)?)?)
    };
    let mut results = Vec::with_capacity(queries.len());
    for query in queries {
        let query_bin = binarize(query, &db.quantizer)?;
        let query_int8 = quantize_int8(query, &db.quantizer)?;
        let mut coarse: Vec<(u16, u32, u64)> = (0..db.n)
            .map(|slot| {
                let code = BitVector::from_bytes(db.binary_code(flash, slot)?.into_owned())?;
                let dist = hamming_distance(&query_bin, &code)? as u16;
                Ok((dist, db.slot_to_dataset[slot as usize], slot))
            })
            .collect::<Result<_>>()?;
        engine::quickselect_smallest(&mut coarse, k * multiplier, |&(dist, index, _)| (dist, index));
        let mut ranked: Vec<(u64, u32, u16, u64)> = coarse
            .into_iter()
            .map(|(dist, index, slot)| {
                Ok((int8_squared_l2(&query_int8, &int8_of(slot)?)?, index, dist, slot))
            })
            .collect::<Result<_>>()?;
        ranked.sort_unstable_by_key(|&(int8, index, _, _)| (int8, index));
        ranked.truncate(k);
        let documents = ranked
            .iter()
            .map(|&(_, _, _, slot)| {
                let record = db.link_record(flash, slot)?;
                Ok(String::from_utf8_lossy(&db.document(flash, record.dadr)?).into_owned())
            })
            .collect::<Result<_>>()?;
        results.push(QueryResult {
            indices: ranked.iter().map(|&(_, index, _, _)| index).collect(),
            binary_distances: ranked.iter().map(|&(_, _, dist, _)| dist).collect(),
            rerank_distances: ranked.iter().map(|&(int8, _, _, _)| int8).collect(),
            documents,
        });
    }
    let model = pinned_host_model(device.config(), db.dim)?;
    let total_ns = model.loading_ns(host_dataset_bytes(db))
        + model.scan_ns(queries.len() as u64, db.n, (k * multiplier) as u64);
    Ok((results, total_ns))
}

#[derive(Args)]
pub struct SearchArgs {
    /// Deployed image directory.
    #[arg(long)]
    image: PathBuf,

    /// Query vector file (RVEC).
    #[arg(long)]
    queries: PathBuf,

    /// Database id within the image.
    #[arg(long, default_value_t = 0)]
    db: u8,

    /// Results per query.
    #[arg(long, default_value_t = 10)]
    k: usize,

    /// Clusters probed per query (ignored by flat databases).
    #[arg(long, default_value_t = 8)]
    nprobe: usize,

    /// Rerank candidates as a multiple of k.
    #[arg(long, default_value_t = 10)]
    multiplier: usize,

    /// Distance filter threshold: a bit count, "auto", or "off".
    #[arg(long, default_value = "off")]
    filter: String,

    /// Overlap plane reads with channel transfers.
    #[arg(long)]
    pipeline: bool,

    /// Broadcast the query page to all planes of a die at once.
    #[arg(long)]
    mpibc: bool,

    /// Engine to run; repeat the flag to compare both.
    #[arg(long = "engine", value_enum)]
    engines: Vec<Engine>,

    /// Write the drive command stream to this JSON-lines file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn load_image_queries(args_image: &PathBuf, args_queries: &PathBuf, db_id: u8) -> Result<(SsdDevice, Vec<Fp32Vector>)> {
    let device = image::load_device(args_image)?;
    let queries = image::load_vectors(args_queries)?;
    if queries.is_empty() {
        bail!("{} holds no queries", args_queries.display());
    }
    let db = device.database(db_id)?;
    if queries[0].dim() != db.dim {
        bail!("query dim {} does not match database dim {}", queries[0].dim(), db.dim);
    }
    Ok((device, queries))
}

fn write_trace(path: &PathBuf, traces: &[Vec<TraceEvent>]) -> Result<()> {
    let mut file = std::fs::File::create(path)
        .with_context(|| format!("creating trace file {}", path.display()))?;
    for (query, events) in traces.iter().enumerate() {
        for event in events {
            let line = serde_json::json!({
                "query": query,
                "cmd": event.cmd,
                "target": event.target,
            });
            writeln!(file, "{line}")?;
        }
    }
    Ok(())
}

pub fn search(_global: &Global, args: &SearchArgs) -> Result<()> {
    let engines = if args.engines.is_empty() { vec![Engine::Reis] } else { args.engines.clone() };
    if args.trace.is_some() && !engines.contains(&Engine::Reis) {
        bail!("--trace records drive commands; add --engine reis");
    }
    let (device, queries) = load_image_queries(&args.image, &args.queries, args.db)?;
    let db = device.database(args.db)?;
    let threshold = resolve_threshold(&device, db, &queries, &args.filter, args.k, args.multiplier)?;
    let params = SearchParams {
        k: args.k,
        nprobe: args.nprobe,
        candidate_multiplier: args.multiplier,
        filter_threshold: threshold,
        enable_pipeline: args.pipeline,
        enable_mpibc: args.mpibc,
    };

    let mut report = SearchReport {
        image: args.image.display().to_string(),
        preset: device.config().preset.clone(),
        mode: db_mode(db),
        queries: queries.len(),
        k: args.k,
        nprobe: args.nprobe,
        candidate_multiplier: args.multiplier,
        filter_threshold: threshold,
        pipeline: args.pipeline,
        mpibc: args.mpibc,
        engines: Default::default(),
    };
    for engine in &engines {
        match engine {
            Engine::Reis => {
                let (results, metrics, traces) =
                    run_engine(&device, args.db, &queries, &params, args.trace.is_some())?;
                if let Some(path) = &args.trace {
                    write_trace(path, &traces)?;
                }
                let total_ns: u64 = metrics.iter().map(|m| m.total_ns).sum();
                let energy_nj: f64 = metrics.iter().map(|m| m.energy_nj).sum();
                let pages: u64 = metrics.iter().map(|m| m.pages_read).sum();
                report.engines.insert(
                    "reis",
                    EngineReport {
                        total_us: total_ns as f64 / 1e3,
                        mean_us: total_ns as f64 / 1e3 / queries.len() as f64,
                        energy_uj_per_query: energy_nj / 1e3 / queries.len() as f64,
                        pages_read: pages,
                        results,
                    },
                );
            }
            Engine::Host => {
                let (results, total_ns) = run_host(&device, db, &queries, args.k, args.multiplier)?;
                report.engines.insert(
                    "host",
                    EngineReport {
                        total_us: total_ns as f64 / 1e3,
                        mean_us: total_ns as f64 / 1e3 / queries.len() as f64,
                        energy_uj_per_query: 0.0,
                        pages_read: 0,
                        results,
                    },
                );
            }
        }
    }
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(())
}

#[derive(Args)]
pub struct TraceArgs {
    /// Deployed image directory.
    #[arg(long)]
    image: PathBuf,

    /// Query vector file (RVEC).
    #[arg(long)]
    queries: PathBuf,

    /// Database id within the image.
    #[arg(long, default_value_t = 0)]
    db: u8,

    /// Results per query.
    #[arg(long, default_value_t = 10)]
    k: usize,

    /// Clusters probed per query (ignored by flat databases).
    #[arg(long, default_value_t = 8)]
    nprobe: usize,

    /// Rerank candidates as a multiple of k.
    #[arg(long, default_value_t = 10)]
    multiplier: usize,

    /// Distance filter threshold: a bit count, "auto", or "off".
    #[arg(long, default_value = "off")]
    filter: String,

    /// Overlap plane reads with channel transfers.
    #[arg(long)]
    pipeline: bool,

    /// Broadcast the query page to all planes of a die at once.
    #[arg(long)]
    mpibc: bool,

    /// Output file; stdout when omitted.
    #[arg(long)]
    file: Option<PathBuf>,
}

pub fn trace(_global: &Global, args: &TraceArgs) -> Result<()> {
    let (device, queries) = load_image_queries(&args.image, &args.queries, args.db)?;
    let db = device.database(args.db)?;
    let threshold = resolve_threshold(&device, db, &queries, &args.filter, args.k, args.multiplier)?;
    let params = SearchParams {
        k: args.k,
        nprobe: args.nprobe,
        candidate_multiplier: args.multiplier,
        filter_threshold: threshold,
        enable_pipeline: args.pipeline,
        enable_mpibc: args.mpibc,
    };
    let (_, _, traces) = run_engine(&device, args.db, &queries, &params, true)?;
    match &args.file {
        Some(path) => write_trace(path, &traces)?,
        None => {
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            for (query, events) in traces.iter().enumerate() {
                for event in events {
                    let line = serde_json::json!({
                        "query": query,
                        "cmd": event.cmd,
                        "target": event.target,
                    });
                    writeln!(out, "{line}")?;
                }
            }
        }
    }
    Ok(())
}
