//! Query execution inside the drive, with every phase charged against the
//! integer-nanosecond timing model.
//!
//! A search runs as: broadcast the query into every plane's compare latch,
//! scan the centroid region for the nearest clusters (skipped on flat
//! databases), scan the probed binary spans, rerank the best candidates
//! against their INT8 twins, then fetch the winning documents.
//!
//! Region scans advance one row at a time (one page per plane) through
//! three arms: compute (sense, latch XOR, per-slot fail-bit counts),
//! transfer (surviving entries over the channels into DRAM), and select
//! (the embedded cores folding new entries into a running top-m list).
//! Without pipelining the arms run back to back; with it each arm streams
//! behind the previous iteration's, and the saved time is reported as
//! overlap so stage busy times still sum to the total.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::layout::{DeployedDatabase, Region, SsdDevice, LINK_RECORD_BYTES};
use crate::ssd::{
    channel_transfer_ns, pass_fail_compare, LatchArray, SsdGeometry, Timing,
};
use crate::vectordb::{binarize, int8_squared_l2_bytes, quantize_int8, BitVector, Fp32Vector};
use crate::{Error, Result};

/// Host command opcodes of the drive's vendor interface.
pub mod opcode {
    pub const DB_DEPLOY: u8 = 0x80;
    pub const IVF_DEPLOY: u8 = 0x81;
    pub const SEARCH: u8 = 0x82;
    pub const IVF_SEARCH: u8 = 0x83;
}

/// Wire width of one centroid scan entry: distance, binary code, packed
/// centroid address, tag.
pub fn ttl_centroid_entry_bytes(dim: usize) -> usize {
    2 + dim / 8 + 5 + 1
}

/// Wire width of one embedding scan entry: distance, binary code, INT8
/// link, document link.
pub fn ttl_embedding_entry_bytes(dim: usize) -> usize {
    2 + dim / 8 + 4 + 4
}

/// Latency of broadcasting one query page to every plane. Channels run in
/// parallel; dies on a channel take turns; without multi-plane broadcast
/// the transfer repeats once per plane of each die.
pub fn input_broadcast_ns(geometry: &SsdGeometry, timing: &Timing, mpibc: bool) -> u64 {
    let per_die = channel_transfer_ns(geometry.page_size as u64, timing.channel_mbps);
    let copies = if mpibc { 1 } else { geometry.planes_per_die as u64 };
    geometry.dies_per_channel as u64 * per_die * copies
}

/// Search knobs. `filter_threshold: None` disables distance filtering, so
/// every scanned entry is transferred.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchParams {
    pub k: usize,
    pub nprobe: usize,
    /// Candidates kept for reranking, as a multiple of `k`.
    pub candidate_multiplier: usize,
    pub filter_threshold: Option<u16>,
    pub enable_pipeline: bool,
    pub enable_mpibc: bool,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            k: 10,
            nprobe: 8,
            candidate_multiplier: 10,
            filter_threshold: None,
            enable_pipeline: false,
            enable_mpibc: false,
        }
    }
}

impl SearchParams {
    pub fn no_opt(k: usize, nprobe: usize) -> Self {
        SearchParams { k, nprobe, ..SearchParams::default() }
    }

    pub fn with_filter(k: usize, nprobe: usize, threshold: u16) -> Self {
        SearchParams { filter_threshold: Some(threshold), ..SearchParams::no_opt(k, nprobe) }
    }

    pub fn full_opt(k: usize, nprobe: usize, threshold: u16) -> Self {
        SearchParams {
            enable_pipeline: true,
            enable_mpibc: true,
            ..SearchParams::with_filter(k, nprobe, threshold)
        }
    }
}

/// Per-phase busy times and traffic counts of one search. Stage times sum
/// to `total_ns` plus `pipeline_overlap_ns`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SearchMetrics {
    pub command_ns: u64,
    pub ibc_ns: u64,
    pub scan_read_ns: u64,
    pub transfer_ns: u64,
    pub select_ns: u64,
    pub rerank_ns: u64,
    pub doc_fetch_ns: u64,
    pub pipeline_overlap_ns: u64,
    pub total_ns: u64,
    pub energy_nj: f64,
    pub pages_read: u64,
    pub entries_scanned: u64,
    pub entries_transferred: u64,
    pub bytes_transferred: u64,
}

impl SearchMetrics {
    pub fn stage_sum_ns(&self) -> u64 {
        self.command_ns
            + self.ibc_ns
            + self.scan_read_ns
            + self.transfer_ns
            + self.select_ns
            + self.rerank_ns
            + self.doc_fetch_ns
    }
}

/// One drive command in issue order, for the trace stream.
#[derive(Debug, Clone, Serialize)]
pub struct TraceEvent {
    pub cmd: &'static str,
    pub target: String,
}

/// One entry surviving a region scan. For centroid scans `slot` is the
/// cluster id; for embedding scans it is the global binary slot and the
/// links come from the page's OOB table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanHit {
    pub dist: u16,
    pub slot: u64,
    pub dadr: u32,
    pub radr: u32,
}

/// One final result: the document and both distances that ranked it.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub dataset_index: u32,
    pub hamming_dist: u16,
    pub int8_dist: u64,
    pub document: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct SearchOutput {
    pub hits: Vec<SearchHit>,
    pub metrics: SearchMetrics,
}

/// Keeps the `m` smallest items by `key`, set-equal to the first `m` of a
/// full sort. Order within the kept set is unspecified.
pub fn quickselect_smallest<T, K: Ord, F: Fn(&T) -> K>(items: &mut Vec<T>, m: usize, key: F) {
    if m == 0 {
        items.clear();
    } else if m < items.len() {
        items.select_nth_unstable_by_key(m - 1, key);
        items.truncate(m);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScanKind {
    Centroid,
    Embedding,
}

/// Pages to scan, each with the inclusive global-slot ranges it covers.
type ScanPlan = BTreeMap<u64, Vec<(u64, u64)>>;

fn plan_for_spans(region: &Region, spans: &[(u64, u64)]) -> ScanPlan {
    let mut plan = ScanPlan::new();
    let spp = region.slots_per_page as u64;
    for &(first, last) in spans {
        debug_assert!(first <= last && last < region.slots);
        for page_i in first / spp..=last / spp {
            let lo = first.max(page_i * spp);
            let hi = last.min((page_i + 1) * spp - 1);
            plan.entry(region.first_page + page_i).or_default().push((lo, hi));
        }
    }
    plan
}

fn full_region_plan(region: &Region) -> ScanPlan {
    plan_for_spans(region, &[(0, region.slots - 1)])
}

struct ScanCosts {
    read_busy_ns: u64,
    transfer_busy_ns: u64,
    select_busy_ns: u64,
    total_ns: u64,
    overlap_ns: u64,
    pages_read: u64,
    entries_scanned: u64,
    entries_transferred: u64,
    bytes_transferred: u64,
    energy_nj: f64,
}

struct ScanCtx<'a> {
    geometry: &'a SsdGeometry,
    timing: &'a Timing,
    energy: &'a crate::ssd::EnergyParams,
    latches: &'a mut LatchArray,
}

/// Row-by-row region scan. Fail-bit counting happens against whatever the
/// compare latches hold, so the caller must broadcast the tiled query
/// first. The running top-m select is charged per iteration but resolved
/// once at the end, which yields the same set.
fn scan_region(
    ctx: &mut ScanCtx,
    flash: &crate::ssd::FlashStore,
    region: &Region,
    plan: &ScanPlan,
    kind: ScanKind,
    threshold: Option<u16>,
    m: usize,
    pipelined: bool,
    trace: &mut Option<&mut Vec<TraceEvent>>,
) -> Result<(Vec<ScanHit>, ScanCosts)> {
    let timing = ctx.timing;
    let entry_bytes = match kind {
        ScanKind::Centroid => ttl_centroid_entry_bytes(region.slot_bytes * 8),
        ScanKind::Embedding => ttl_embedding_entry_bytes(region.slot_bytes * 8),
    } as u64;
    let mut rows: BTreeMap<u64, Vec<(u64, &[(u64, u64)])>> = BTreeMap::new();
    for (&page, ranges) in plan {
        rows.entry(ctx.geometry.row_of_page(page)).or_default().push((page, ranges));
    }

    let mut hits = Vec::new();
    let mut costs = ScanCosts {
        read_busy_ns: 0,
        transfer_busy_ns: 0,
        select_busy_ns: 0,
        total_ns: 0,
        overlap_ns: 0,
        pages_read: 0,
        entries_scanned: 0,
        entries_transferred: 0,
        bytes_transferred: 0,
        energy_nj: 0.0,
    };
    let mut compute_done = 0u64;
    let mut transfer_done = 0u64;
    let mut select_done = 0u64;
    let mut retained = 0usize;
    let mut channel_bytes = vec![0u64; ctx.geometry.channels];

    for (_, pages) in rows {
        channel_bytes.iter_mut().for_each(|b| *b = 0);
        let mut max_plane_count_ns = 0u64;
        let mut row_new = 0usize;
        let mut row_bytes = 0u64;

        for (page, ranges) in pages {
            let plane = ctx.latches.read_page(ctx.geometry, flash, page)?;
            ctx.latches.plane_mut(plane).latch_xor();
            if let Some(sink) = trace.as_deref_mut() {
                sink.push(TraceEvent { cmd: "XOR", target: format!("ADR_P={page}") });
                sink.push(TraceEvent { cmd: "GEN_DIST", target: format!("EADR={page}.0") });
            }
            costs.pages_read += 1;
            costs.energy_nj +=
                (ctx.energy.e_read_page_uj + 2.0 * ctx.energy.e_latch_op_uj) * 1000.0;

            let mut slots_here = 0u64;
            let mut page_survivors = 0u64;
            for &(lo, hi) in ranges {
                for slot in lo..=hi {
                    let offset = region.offset_of_slot(slot);
                    let dist = ctx.latches.plane(plane).count_fail_bits(offset, region.slot_bytes);
                    slots_here += 1;
                    let survives = threshold.is_none_or(|t| pass_fail_compare(dist, t.into()));
                    if !survives {
                        continue;
                    }
                    let dist = dist as u16;
                    let (dadr, radr) = match kind {
                        ScanKind::Centroid => (0, 0),
                        ScanKind::Embedding => {
                            let off = region.slot_in_page(slot) * LINK_RECORD_BYTES;
                            let oob = &ctx.latches.plane(plane).oob[off..off + LINK_RECORD_BYTES];
                            let rec =
                                crate::layout::OobLinkRecord::unpack(oob.try_into().unwrap());
                            (rec.dadr, rec.radr)
                        }
                    };
                    hits.push(ScanHit { dist, slot, dadr, radr });
                    page_survivors += 1;
                }
            }
            costs.entries_scanned += slots_here;
            max_plane_count_ns = max_plane_count_ns.max(slots_here * timing.bit_count_ns);
            if page_survivors > 0 {
                if let Some(sink) = trace.as_deref_mut() {
                    sink.push(TraceEvent { cmd: "RD_TTL", target: format!("EADR={page}.0") });
                }
                let bytes = page_survivors * entry_bytes;
                channel_bytes[ctx.geometry.channel_of_plane(ctx.geometry.plane_of_page(page))] +=
                    bytes;
                row_bytes += bytes;
                row_new += page_survivors as usize;
            }
        }

        // Compute arm: all planes of the row sense and XOR together, then
        // count their slots; the toggle lets counting hide under the sense.
        let sense_ns = timing.read_ns(region.cell_mode) + timing.latch_xor_ns;
        let c = if timing.overlap_count_with_read {
            sense_ns.max(max_plane_count_ns)
        } else {
            sense_ns + max_plane_count_ns
        };
        // Transfer arm: channels drain their planes in parallel, then the
        // row's entries settle into DRAM.
        let dram_ns = row_bytes.div_ceil(64) * timing.dram_ns_per_64b;
        let t = channel_bytes.iter().map(|&b| channel_transfer_ns(b, timing.channel_mbps)).max()
            .unwrap_or(0)
            + dram_ns;
        // Select arm: fold the new entries into the running top-m list.
        let s = (retained + row_new) as u64 * timing.select_ns_per_entry;

        costs.read_busy_ns += c;
        costs.transfer_busy_ns += t;
        costs.select_busy_ns += s;
        costs.entries_transferred += row_new as u64;
        costs.bytes_transferred += row_bytes;
        costs.energy_nj += row_bytes as f64 * ctx.energy.e_channel_nj_per_byte
            + row_bytes.div_ceil(64) as f64 * ctx.energy.e_dram_nj_per_64b
            + s as f64 * ctx.energy.e_core_active_mw * 1e-3;
        retained = (retained + row_new).min(m);

        compute_done += c;
        transfer_done = transfer_done.max(compute_done) + t;
        select_done = select_done.max(transfer_done) + s;
    }

    let serial = costs.read_busy_ns + costs.transfer_busy_ns + costs.select_busy_ns;
    costs.total_ns = if pipelined { select_done } else { serial };
    costs.overlap_ns = serial - costs.total_ns;
    Ok((hits, costs))
}

/// Smallest filter threshold that keeps at least `target_keep_fraction` of
/// all query-to-code distances, raised so each calibration query still
/// keeps its `safety_count` nearest codes. A fraction of 1 or more returns
/// the dimensionality, which filters nothing.
pub fn calibrate_filter_threshold(
    codes: &[BitVector],
    queries: &[BitVector],
    safety_count: usize,
    target_keep_fraction: f64,
) -> Result<u16> {
    let first = codes.first().ok_or(Error::EmptyInput("codes"))?;
    let dim = first.dim();
    if queries.is_empty() {
        return Err(Error::EmptyInput("queries"));
    }
    if !target_keep_fraction.is_finite() {
        return Err(Error::InvalidParam("keep fraction must be finite".into()));
    }
    if target_keep_fraction >= 1.0 {
        return Ok(dim as u16);
    }
    let target = target_keep_fraction.max(0.0);

    let mut hist = vec![0u64; dim + 1];
    let mut safety_floor = 0u16;
    let s = safety_count.clamp(1, codes.len());
    let mut dists = vec![0u16; codes.len()];
    for q in queries {
        for (d, c) in dists.iter_mut().zip(codes) {
            *d = crate::vectordb::hamming_distance(q, c)? as u16;
        }
        for &d in &dists {
            hist[d as usize] += 1;
        }
        let (_, kth, _) = dists.select_nth_unstable(s - 1);
        safety_floor = safety_floor.max(*kth);
    }

    let total = (codes.len() * queries.len()) as u64;
    let need = (target * total as f64).ceil() as u64;
    let mut cum = 0u64;
    let mut fraction_threshold = 0u16;
    for (d, &count) in hist.iter().enumerate() {
        cum += count;
        if cum >= need {
            fraction_threshold = d as u16;
            break;
        }
    }
    Ok(fraction_threshold.max(safety_floor))
}

/// The query code replicated at every slot offset of a page, so one latch
/// XOR lines it up against each stored embedding.
fn tile_query_page(page_size: usize, code: &[u8], slots_per_page: usize) -> Vec<u8> {
    let mut page = vec![0u8; page_size];
    for s in 0..slots_per_page {
        page[s * code.len()..(s + 1) * code.len()].copy_from_slice(code);
    }
    page
}

struct PhaseCost {
    ns: u64,
    energy_nj: f64,
    pages_read: u64,
    bytes_transferred: u64,
}

/// Reads the candidates' INT8 pages (deduplicated, queued per plane),
/// moves their codes to the cores, and ranks by exact INT8 distance with
/// the document slot as tiebreak.
fn rerank(
    ctx: &mut ScanCtx,
    flash: &crate::ssd::FlashStore,
    db: &DeployedDatabase,
    candidates: &[ScanHit],
    query_code: &[u8],
    trace: &mut Option<&mut Vec<TraceEvent>>,
) -> Result<(Vec<(u64, ScanHit)>, PhaseCost)> {
    let timing = ctx.timing;
    let region = &db.int8_region;
    let mut by_page: BTreeMap<u64, Vec<ScanHit>> = BTreeMap::new();
    for &hit in candidates {
        if u64::from(hit.radr) >= region.slots {
            return Err(Error::AddressOutOfRange(hit.radr.into()));
        }
        by_page.entry(region.page_of_slot(hit.radr.into())).or_default().push(hit);
    }
    // Planes queue their reads independently, so the sense time is bounded
    // by the deepest per-plane queue; the channels then drain in parallel.
    let mut cost = PhaseCost { ns: 0, energy_nj: 0.0, pages_read: 0, bytes_transferred: 0 };
    let mut ranked = Vec::with_capacity(candidates.len());
    let mut plane_reads = vec![0u64; ctx.geometry.total_planes()];
    let mut channel_bytes = vec![0u64; ctx.geometry.channels];
    let mut total_bytes = 0u64;
    for (page, hits) in by_page {
        let plane = ctx.latches.read_page(ctx.geometry, flash, page)?;
        if let Some(sink) = trace.as_deref_mut() {
            sink.push(TraceEvent { cmd: "RD_INT8", target: format!("ADR_P={page}") });
        }
        cost.pages_read += 1;
        plane_reads[plane] += 1;
        cost.energy_nj += (ctx.energy.e_read_page_uj + ctx.energy.e_latch_op_uj) * 1000.0;
        let bytes = hits.len() as u64 * region.slot_bytes as u64;
        channel_bytes[ctx.geometry.channel_of_plane(plane)] += bytes;
        total_bytes += bytes;
        for hit in hits {
            let offset = region.offset_of_slot(hit.radr.into());
            let code = &ctx.latches.plane(plane).sl[offset..offset + region.slot_bytes];
            ranked.push((int8_squared_l2_bytes(query_code, code), hit));
        }
    }
    cost.ns += plane_reads.iter().max().copied().unwrap_or(0) * timing.read_ns(region.cell_mode)
        + channel_bytes.iter().map(|&b| channel_transfer_ns(b, timing.channel_mbps)).max()
            .unwrap_or(0)
        + total_bytes.div_ceil(64) * timing.dram_ns_per_64b;
    cost.bytes_transferred = total_bytes;
    cost.energy_nj += total_bytes as f64 * ctx.energy.e_channel_nj_per_byte
        + total_bytes.div_ceil(64) as f64 * ctx.energy.e_dram_nj_per_64b;

    // Core-side sort of the candidate list, n log n entry operations.
    let n = ranked.len() as u64;
    if n > 0 {
        let sort_ns = n * (64 - (n.max(2) - 1).leading_zeros() as u64) * timing.select_ns_per_entry;
        cost.ns += sort_ns;
        cost.energy_nj += sort_ns as f64 * ctx.energy.e_core_active_mw * 1e-3;
    }
    ranked.sort_unstable_by_key(|&(d, hit)| (d, hit.dadr));
    Ok((ranked, cost))
}

/// Reads the winning documents' pages and moves each slot container over
/// its channel. Returns chunks in the order of `hits`.
fn fetch_documents(
    ctx: &mut ScanCtx,
    flash: &crate::ssd::FlashStore,
    db: &DeployedDatabase,
    dadrs: &[u32],
    trace: &mut Option<&mut Vec<TraceEvent>>,
) -> Result<(Vec<Vec<u8>>, PhaseCost)> {
    let timing = ctx.timing;
    let region = &db.doc_region;
    let mut pages: BTreeMap<u64, u64> = BTreeMap::new();
    for &dadr in dadrs {
        let (page, ..) = db.doc_location(dadr)?;
        *pages.entry(page).or_insert(0) += 1;
    }

    // Same queueing model as the rerank reads: planes sense independently,
    // channels drain in parallel, then the slots settle into DRAM.
    let mut cost = PhaseCost { ns: 0, energy_nj: 0.0, pages_read: 0, bytes_transferred: 0 };
    let mut plane_reads = vec![0u64; ctx.geometry.total_planes()];
    let mut channel_bytes = vec![0u64; ctx.geometry.channels];
    let mut total_bytes = 0u64;
    for (&page, &slots) in &pages {
        if flash.page(page).is_none() {
            return Err(Error::UnwrittenPage(page));
        }
        if let Some(sink) = trace.as_deref_mut() {
            sink.push(TraceEvent { cmd: "RD_DOC", target: format!("ADR_P={page}") });
        }
        cost.pages_read += 1;
        let plane = ctx.geometry.plane_of_page(page);
        plane_reads[plane] += 1;
        cost.energy_nj += (ctx.energy.e_read_page_uj + ctx.energy.e_latch_op_uj) * 1000.0;
        let bytes = slots * region.slot_bytes as u64;
        channel_bytes[ctx.geometry.channel_of_plane(plane)] += bytes;
        total_bytes += bytes;
    }
    cost.ns += plane_reads.iter().max().copied().unwrap_or(0) * timing.read_ns(region.cell_mode)
        + channel_bytes.iter().map(|&b| channel_transfer_ns(b, timing.channel_mbps)).max()
            .unwrap_or(0)
        + total_bytes.div_ceil(64) * timing.dram_ns_per_64b;
    cost.bytes_transferred = total_bytes;
    cost.energy_nj += total_bytes as f64 * ctx.energy.e_channel_nj_per_byte
        + total_bytes.div_ceil(64) as f64 * ctx.energy.e_dram_nj_per_64b;

    let docs = dadrs
        .iter()
        .map(|&dadr| db.document(flash, dadr))
        .collect::<Result<Vec<_>>>()?;
    Ok((docs, cost))
}

/// Runs one query against a deployed database and returns the top-k
/// documents with the full cost breakdown.
pub fn search(
    device: &SsdDevice,
    db_id: u8,
    query: &Fp32Vector,
    params: &SearchParams,
    mut trace: Option<&mut Vec<TraceEvent>>,
) -> Result<SearchOutput> {
    let db = device.database(db_id)?;
    if params.k == 0 || params.k as u64 > db.n {
        return Err(Error::InvalidParam(format!(
            "k must be in 1..={}, got {}",
            db.n, params.k
        )));
    }
    if params.nprobe == 0 || params.candidate_multiplier == 0 {
        return Err(Error::InvalidParam("nprobe and candidate multiplier must be positive".into()));
    }
    let geometry = device.geometry();
    let timing = *device.timing();
    let energy = device.config().energy.clone();
    let query_bin = binarize(query, &db.quantizer)?;
    let query_int8 = quantize_int8(query, &db.quantizer)?;

    let mut latches = LatchArray::new(geometry);
    let tiled =
        tile_query_page(geometry.page_size, query_bin.as_bytes(), db.binary_region.slots_per_page);
    latches.broadcast_cl(&tiled);
    let mut ctx = ScanCtx { geometry, timing: &timing, energy: &energy, latches: &mut latches };

    let mut metrics = SearchMetrics {
        command_ns: timing.command_ns,
        ibc_ns: input_broadcast_ns(geometry, &timing, params.enable_mpibc),
        ..SearchMetrics::default()
    };
    let broadcast_copies = if params.enable_mpibc { 1 } else { geometry.planes_per_die as u64 };
    let broadcast_bytes = (geometry.channels * geometry.dies_per_channel) as u64
        * broadcast_copies
        * geometry.page_size as u64;
    metrics.energy_nj += broadcast_bytes as f64 * energy.e_channel_nj_per_byte
        + geometry.total_planes() as f64 * energy.e_latch_op_uj * 1000.0;
    metrics.bytes_transferred += broadcast_bytes;
    if let Some(sink) = trace.as_deref_mut() {
        sink.push(TraceEvent { cmd: "IBC", target: "Q_EMB".into() });
    }

    let absorb = |metrics: &mut SearchMetrics, costs: &ScanCosts| {
        metrics.scan_read_ns += costs.read_busy_ns;
        metrics.transfer_ns += costs.transfer_busy_ns;
        metrics.select_ns += costs.select_busy_ns;
        metrics.pipeline_overlap_ns += costs.overlap_ns;
        metrics.total_ns += costs.total_ns;
        metrics.energy_nj += costs.energy_nj;
        metrics.pages_read += costs.pages_read;
        metrics.entries_scanned += costs.entries_scanned;
        metrics.entries_transferred += costs.entries_transferred;
        metrics.bytes_transferred += costs.bytes_transferred;
    };

    // Coarse phase: pick the nearest clusters, never distance-filtered.
    let spans: Vec<(u64, u64)> = if db.rivf.is_empty() {
        vec![(0, db.n - 1)]
    } else {
        let region = db.centroid_region.as_ref().unwrap();
        debug_assert_eq!(region.slots_per_page, db.binary_region.slots_per_page);
        let nprobe = params.nprobe.min(db.rivf.len());
        let plan = full_region_plan(region);
        let (mut hits, costs) = scan_region(
            &mut ctx,
            device.flash(),
            region,
            &plan,
            ScanKind::Centroid,
            None,
            nprobe,
            params.enable_pipeline,
            &mut trace,
        )?;
        absorb(&mut metrics, &costs);
        quickselect_smallest(&mut hits, nprobe, |h| (h.dist, h.slot));
        hits.sort_unstable_by_key(|h| (h.dist, h.slot));
        let mut spans: Vec<(u64, u64)> = hits
            .iter()
            .map(|h| {
                let e = &db.rivf[h.slot as usize];
                (e.first_emb_index as u64, e.last_emb_index as u64)
            })
            .collect();
        spans.sort_unstable();
        spans
    };

    // Fine phase: scan the probed binary spans, filtered when enabled.
    let plan = plan_for_spans(&db.binary_region, &spans);
    let candidate_count = params.k.saturating_mul(params.candidate_multiplier);
    let (mut candidates, costs) = scan_region(
        &mut ctx,
        device.flash(),
        &db.binary_region,
        &plan,
        ScanKind::Embedding,
        params.filter_threshold,
        candidate_count,
        params.enable_pipeline,
        &mut trace,
    )?;
    absorb(&mut metrics, &costs);
    quickselect_smallest(&mut candidates, candidate_count, |h| (h.dist, h.slot));
    candidates.sort_unstable_by_key(|h| (h.dist, h.slot));

    // Rerank phase: exact INT8 distances decide the final order.
    let (ranked, cost) =
        rerank(&mut ctx, device.flash(), db, &candidates, query_int8.as_code_bytes(), &mut trace)?;
    metrics.rerank_ns = cost.ns;
    metrics.total_ns += cost.ns;
    metrics.energy_nj += cost.energy_nj;
    metrics.pages_read += cost.pages_read;
    metrics.bytes_transferred += cost.bytes_transferred;
    let top: Vec<(u64, ScanHit)> = ranked.into_iter().take(params.k).collect();

    // Document phase.
    let dadrs: Vec<u32> = top.iter().map(|(_, h)| h.dadr).collect();
    let (docs, cost) = fetch_documents(&mut ctx, device.flash(), db, &dadrs, &mut trace)?;
    metrics.doc_fetch_ns = cost.ns;
    metrics.total_ns += cost.ns;
    metrics.energy_nj += cost.energy_nj;
    metrics.pages_read += cost.pages_read;
    metrics.bytes_transferred += cost.bytes_transferred;

    metrics.total_ns += metrics.command_ns + metrics.ibc_ns;
    debug_assert_eq!(metrics.stage_sum_ns() - metrics.pipeline_overlap_ns, metrics.total_ns);

    let hits = top
        .into_iter()
        .zip(docs)
        .map(|((int8_dist, h), document)| SearchHit {
            dataset_index: h.dadr,
            hamming_dist: h.dist,
            int8_dist,
            document,
        })
        .collect();
    Ok(SearchOutput { hits, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimConfig;
    use crate::ivf::build_index;
    use crate::layout::DeployOptions;
    use crate::ssd::SsdGeometry;
    use crate::vectordb::train_quantizer;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn toy_config() -> SimConfig {
        let mut cfg = SimConfig::preset("reis-ssd1").unwrap();
        cfg.geometry = SsdGeometry {
            channels: 2,
            dies_per_channel: 1,
            planes_per_die: 2,
            page_size: 64,
            subpage_size: 16,
            oob_size: 128,
            pages_per_block: 64,
            blocks_per_plane: 8,
        };
        cfg
    }

    fn rand_vectors(rng: &mut impl Rng, n: usize, d: usize) -> Vec<Fp32Vector> {
        (0..n)
            .map(|_| Fp32Vector::new((0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap())
            .collect()
    }

    fn docs_for(n: usize) -> Vec<Vec<u8>> {
        (0..n).map(|i| format!("doc-{i}").into_bytes()).collect()
    }

    fn flat_device(rng: &mut impl Rng, n: usize, d: usize) -> (SsdDevice, u8, Vec<Fp32Vector>) {
        let mut dev = SsdDevice::new(toy_config()).unwrap();
        let vectors = rand_vectors(rng, n, d);
        let q = train_quantizer(&vectors).unwrap();
        let id = dev.deploy_flat(&vectors, &docs_for(n), &q, DeployOptions::default()).unwrap();
        (dev, id, vectors)
    }

    /// Brute-force reference: binary distances, top candidates, INT8
    /// rerank, identical tie rules.
    fn reference_topk(
        vectors: &[Fp32Vector],
        q: &crate::vectordb::QuantizerModel,
        query: &Fp32Vector,
        k: usize,
        mult: usize,
    ) -> Vec<(u32, u64)> {
        let qb = binarize(query, q).unwrap();
        let qi = quantize_int8(query, q).unwrap();
        let mut dists: Vec<(u16, u32)> = vectors
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let code = binarize(v, q).unwrap();
                (crate::vectordb::hamming_distance(&qb, &code).unwrap() as u16, i as u32)
            })
            .collect();
        dists.sort_unstable();
        dists.truncate(k * mult);
        let mut reranked: Vec<(u64, u32)> = dists
            .iter()
            .map(|&(_, i)| {
                let code = quantize_int8(&vectors[i as usize], q).unwrap();
                (
                    int8_squared_l2_bytes(qi.as_code_bytes(), code.as_code_bytes()),
                    i,
                )
            })
            .collect();
        reranked.sort_unstable();
        reranked.truncate(k);
        reranked.into_iter().map(|(d, i)| (i, d)).collect()
    }

    #[test]
    fn broadcast_ratio_is_exactly_the_plane_count() {
        for name in ["reis-ssd1", "reis-ssd2"] {
            let cfg = SimConfig::preset(name).unwrap();
            let timing = Timing::resolve(&cfg.timing).unwrap();
            let without = input_broadcast_ns(&cfg.geometry, &timing, false);
            let with = input_broadcast_ns(&cfg.geometry, &timing, true);
            assert_eq!(without, with * cfg.geometry.planes_per_die as u64);
        }
    }

    #[test]
    fn flat_search_matches_brute_force() {
        let mut rng = ChaCha12Rng::seed_from_u64(70);
        let (dev, id, vectors) = flat_device(&mut rng, 60, 64);
        let q = dev.database(id).unwrap().quantizer.clone();
        for _ in 0..5 {
            let query = rand_vectors(&mut rng, 1, 64).pop().unwrap();
            let out = search(&dev, id, &query, &SearchParams::no_opt(5, 1), None).unwrap();
            let want = reference_topk(&vectors, &q, &query, 5, 10);
            let got: Vec<(u32, u64)> =
                out.hits.iter().map(|h| (h.dataset_index, h.int8_dist)).collect();
            assert_eq!(got, want);
            for h in &out.hits {
                assert_eq!(h.document, format!("doc-{}", h.dataset_index).into_bytes());
            }
        }
    }

    #[test]
    fn probing_every_cluster_equals_flat_search() {
        let mut rng = ChaCha12Rng::seed_from_u64(71);
        let vectors = rand_vectors(&mut rng, 80, 64);
        let q = train_quantizer(&vectors).unwrap();
        let index = build_index(&vectors, &crate::ivf::KmeansParams::new(4, 9)).unwrap();
        let mut dev = SsdDevice::new(toy_config()).unwrap();
        let flat = dev.deploy_flat(&vectors, &docs_for(80), &q, DeployOptions::default()).unwrap();
        let ivf =
            dev.deploy_ivf(&vectors, &docs_for(80), &index, &q, DeployOptions::default()).unwrap();
        for _ in 0..5 {
            let query = rand_vectors(&mut rng, 1, 64).pop().unwrap();
            // With every cluster probed and room for every candidate, the
            // cluster layout cannot change the result set.
            let params = SearchParams { k: 4, nprobe: 4, candidate_multiplier: 20, ..Default::default() };
            let a = search(&dev, flat, &query, &params, None).unwrap();
            let b = search(&dev, ivf, &query, &params, None).unwrap();
            let key = |h: &SearchHit| (h.dataset_index, h.int8_dist, h.hamming_dist);
            assert_eq!(a.hits.iter().map(key).collect::<Vec<_>>(), b.hits.iter().map(key).collect::<Vec<_>>());
        }
    }

    #[test]
    fn fewer_probes_scan_fewer_pages() {
        let mut rng = ChaCha12Rng::seed_from_u64(72);
        let vectors = rand_vectors(&mut rng, 120, 64);
        let q = train_quantizer(&vectors).unwrap();
        let index = build_index(&vectors, &crate::ivf::KmeansParams::new(6, 9)).unwrap();
        let mut dev = SsdDevice::new(toy_config()).unwrap();
        let id =
            dev.deploy_ivf(&vectors, &docs_for(120), &index, &q, DeployOptions::default()).unwrap();
        let query = rand_vectors(&mut rng, 1, 64).pop().unwrap();
        let narrow =
            search(&dev, id, &query, &SearchParams { nprobe: 1, k: 3, ..Default::default() }, None)
                .unwrap();
        let wide =
            search(&dev, id, &query, &SearchParams { nprobe: 6, k: 3, ..Default::default() }, None)
                .unwrap();
        assert!(narrow.metrics.entries_scanned < wide.metrics.entries_scanned);
        assert!(narrow.metrics.pages_read <= wide.metrics.pages_read);
    }

    #[test]
    fn filtering_never_changes_the_results_when_calibrated() {
        let mut rng = ChaCha12Rng::seed_from_u64(73);
        let (dev, id, vectors) = flat_device(&mut rng, 100, 64);
        let q = dev.database(id).unwrap().quantizer.clone();
        let codes: Vec<BitVector> = vectors.iter().map(|v| binarize(v, &q).unwrap()).collect();
        let queries = rand_vectors(&mut rng, 8, 64);
        let query_codes: Vec<BitVector> =
            queries.iter().map(|v| binarize(v, &q).unwrap()).collect();
        let k = 3;
        let threshold =
            calibrate_filter_threshold(&codes, &query_codes, k * 10, 0.0).unwrap();
        for query in &queries {
            let plain = search(&dev, id, query, &SearchParams::no_opt(k, 1), None).unwrap();
            let filtered =
                search(&dev, id, query, &SearchParams::with_filter(k, 1, threshold), None).unwrap();
            let key = |h: &SearchHit| (h.dataset_index, h.int8_dist);
            assert_eq!(
                plain.hits.iter().map(key).collect::<Vec<_>>(),
                filtered.hits.iter().map(key).collect::<Vec<_>>()
            );
            assert!(filtered.metrics.entries_transferred <= plain.metrics.entries_transferred);
        }
    }

    #[test]
    fn each_optimization_never_slows_the_search() {
        let mut rng = ChaCha12Rng::seed_from_u64(74);
        let (dev, id, vectors) = flat_device(&mut rng, 200, 64);
        let q = dev.database(id).unwrap().quantizer.clone();
        let codes: Vec<BitVector> = vectors.iter().map(|v| binarize(v, &q).unwrap()).collect();
        let queries = rand_vectors(&mut rng, 6, 64);
        let qcodes: Vec<BitVector> = queries.iter().map(|v| binarize(v, &q).unwrap()).collect();
        let threshold = calibrate_filter_threshold(&codes, &qcodes, 30, 0.05).unwrap();
        for query in &queries {
            let k = 3;
            let base = search(&dev, id, query, &SearchParams::no_opt(k, 1), None).unwrap();
            let df =
                search(&dev, id, query, &SearchParams::with_filter(k, 1, threshold), None).unwrap();
            let df_pl = search(
                &dev,
                id,
                query,
                &SearchParams {
                    enable_pipeline: true,
                    ..SearchParams::with_filter(k, 1, threshold)
                },
                None,
            )
            .unwrap();
            let full =
                search(&dev, id, query, &SearchParams::full_opt(k, 1, threshold), None).unwrap();
            assert!(base.metrics.total_ns >= df.metrics.total_ns);
            assert!(df.metrics.total_ns >= df_pl.metrics.total_ns);
            assert!(df_pl.metrics.total_ns >= full.metrics.total_ns);
        }
    }

    #[test]
    fn stage_times_sum_to_total_plus_overlap() {
        let mut rng = ChaCha12Rng::seed_from_u64(75);
        let vectors = rand_vectors(&mut rng, 150, 64);
        let q = train_quantizer(&vectors).unwrap();
        let index = build_index(&vectors, &crate::ivf::KmeansParams::new(5, 3)).unwrap();
        let mut dev = SsdDevice::new(toy_config()).unwrap();
        let flat =
            dev.deploy_flat(&vectors, &docs_for(150), &q, DeployOptions::default()).unwrap();
        let ivf =
            dev.deploy_ivf(&vectors, &docs_for(150), &index, &q, DeployOptions::default()).unwrap();
        for id in [flat, ivf] {
            for pl in [false, true] {
                for threshold in [None, Some(20u16)] {
                    let params = SearchParams {
                        k: 4,
                        nprobe: 3,
                        filter_threshold: threshold,
                        enable_pipeline: pl,
                        ..Default::default()
                    };
                    let query = rand_vectors(&mut rng, 1, 64).pop().unwrap();
                    let m = search(&dev, id, &query, &params, None).unwrap().metrics;
                    assert_eq!(m.stage_sum_ns() - m.pipeline_overlap_ns, m.total_ns);
                    if !pl {
                        assert_eq!(m.pipeline_overlap_ns, 0);
                    }
                    assert!(m.energy_nj > 0.0);
                }
            }
        }
    }

    #[test]
    fn single_page_search_has_closed_form_latency() {
        // Geometry: 64-byte pages, 2 channels x 1 die x 2 planes, 1.2 GB/s.
        // Four 64-dim vectors: one binary page (4 slots), four INT8 pages,
        // one document page. Hand-computed, no pipelining, no broadcast
        // optimization:
        //   broadcast: 1 die * ceil'(64 B at 1200 MB/s = 53 ns) * 2 planes = 106
        //   fine scan: sense 22500 + xor 2000 + 4 counts * 100 = 24900
        //     transfer: 4 entries * 18 B = 72 B -> 60 ns, dram 2 beats -> 100
        //     select: 4 * 100 = 400
        //   rerank: one row of TLC reads 67500, 256 B split 128/128 -> 107,
        //     dram 4 beats -> 200, sort 4*2*100 = 800 -> 68607
        //   documents: TLC read 67500, 2 subpage slots * 16 B -> 27,
        //     dram 1 beat -> 50 -> 67577
        let mut rng = ChaCha12Rng::seed_from_u64(76);
        let (dev, id, _) = flat_device(&mut rng, 4, 64);
        let query = rand_vectors(&mut rng, 1, 64).pop().unwrap();
        let out = search(&dev, id, &query, &SearchParams::no_opt(2, 1), None).unwrap();
        let m = out.metrics;
        assert_eq!(m.ibc_ns, 106);
        assert_eq!(m.scan_read_ns, 24900);
        assert_eq!(m.transfer_ns, 160);
        assert_eq!(m.select_ns, 400);
        assert_eq!(m.rerank_ns, 68607);
        assert_eq!(m.doc_fetch_ns, 67577);
        assert_eq!(m.total_ns, 161750);
        assert_eq!(m.pages_read, 1 + 4 + 1);
        assert_eq!(m.entries_scanned, 4);
        assert_eq!(m.entries_transferred, 4);
    }

    #[test]
    fn counting_can_hide_under_the_sense_time() {
        let mut cfg = toy_config();
        cfg.timing.overlap_count_with_read = true;
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let mut dev = SsdDevice::new(cfg).unwrap();
        let vectors = rand_vectors(&mut rng, 4, 64);
        let q = train_quantizer(&vectors).unwrap();
        let id = dev.deploy_flat(&vectors, &docs_for(4), &q, DeployOptions::default()).unwrap();
        let query = rand_vectors(&mut rng, 1, 64).pop().unwrap();
        let out = search(&dev, id, &query, &SearchParams::no_opt(2, 1), None).unwrap();
        // 4 counts (400 ns) vanish under the 24500 ns sense+xor window.
        assert_eq!(out.metrics.scan_read_ns, 24500);
    }

    #[test]
    fn quickselect_matches_sorted_prefix() {
        let mut rng = ChaCha12Rng::seed_from_u64(78);
        for _ in 0..200 {
            let n = rng.gen_range(1..400);
            let mut items: Vec<u32> = (0..n).map(|_| rng.gen_range(0..40)).collect();
            let mut sorted = items.clone();
            sorted.sort_unstable();
            for m in [0, 1, n / 2, n, n + 5] {
                let mut got = items.clone();
                quickselect_smallest(&mut got, m, |&x| x);
                got.sort_unstable();
                assert_eq!(got, sorted[..m.min(n)]);
            }
            items.clear();
        }
    }

    #[test]
    fn calibration_keeps_the_safety_count_reachable() {
        let mut rng = ChaCha12Rng::seed_from_u64(79);
        let vectors = rand_vectors(&mut rng, 300, 64);
        let q = train_quantizer(&vectors).unwrap();
        let codes: Vec<BitVector> = vectors.iter().map(|v| binarize(v, &q).unwrap()).collect();
        let queries: Vec<BitVector> = rand_vectors(&mut rng, 10, 64)
            .iter()
            .map(|v| binarize(v, &q).unwrap())
            .collect();
        // Keeping everything is the whole dimensionality.
        assert_eq!(calibrate_filter_threshold(&codes, &queries, 5, 1.0).unwrap(), 64);
        let t = calibrate_filter_threshold(&codes, &queries, 30, 0.0).unwrap();
        for qc in &queries {
            let mut dists: Vec<u16> = codes
                .iter()
                .map(|c| crate::vectordb::hamming_distance(qc, c).unwrap() as u16)
                .collect();
            dists.sort_unstable();
            let kept = dists.iter().filter(|&&d| d <= t).count();
            assert!(kept >= 30, "only {kept} of the nearest survive");
        }
        // A pooled keep fraction can only raise the threshold.
        let t_frac = calibrate_filter_threshold(&codes, &queries, 30, 0.5).unwrap();
        assert!(t_frac >= t);
    }

    #[test]
    fn searches_are_deterministic() {
        let mut rng = ChaCha12Rng::seed_from_u64(80);
        let (dev, id, _) = flat_device(&mut rng, 90, 64);
        let query = rand_vectors(&mut rng, 1, 64).pop().unwrap();
        let params = SearchParams::no_opt(5, 1);
        let a = search(&dev, id, &query, &params, None).unwrap();
        let b = search(&dev, id, &query, &params, None).unwrap();
        assert_eq!(a.hits, b.hits);
        assert_eq!(a.metrics, b.metrics);
    }

    #[test]
    fn trace_streams_the_command_sequence() {
        let mut rng = ChaCha12Rng::seed_from_u64(81);
        let (dev, id, _) = flat_device(&mut rng, 20, 64);
        let query = rand_vectors(&mut rng, 1, 64).pop().unwrap();
        let mut events = Vec::new();
        search(&dev, id, &query, &SearchParams::no_opt(2, 1), Some(&mut events)).unwrap();
        assert_eq!(events[0].cmd, "IBC");
        assert_eq!(events[0].target, "Q_EMB");
        let count = |cmd: &str| events.iter().filter(|e| e.cmd == cmd).count();
        // 20 vectors, 8 binary slots per page: 3 binary pages scanned.
        assert_eq!(count("XOR"), 3);
        assert_eq!(count("GEN_DIST"), 3);
        assert!(count("RD_TTL") >= 1);
        assert!(count("RD_INT8") >= 1);
        assert!(count("RD_DOC") >= 1);
        let json = serde_json::to_string(&events[0]).unwrap();
        assert!(json.contains("\"cmd\":\"IBC\""));
    }

    #[test]
    fn search_rejects_bad_parameters() {
        let mut rng = ChaCha12Rng::seed_from_u64(82);
        let (dev, id, _) = flat_device(&mut rng, 10, 64);
        let query = rand_vectors(&mut rng, 1, 64).pop().unwrap();
        assert!(search(&dev, id, &query, &SearchParams::no_opt(0, 1), None).is_err());
        assert!(search(&dev, id, &query, &SearchParams::no_opt(11, 1), None).is_err());
        assert!(search(&dev, id, &query, &SearchParams::no_opt(2, 0), None).is_err());
        assert!(search(&dev, 9, &query, &SearchParams::no_opt(2, 1), None).is_err());
        let wrong_dim = rand_vectors(&mut rng, 1, 32).pop().unwrap();
        assert!(search(&dev, id, &wrong_dim, &SearchParams::no_opt(2, 1), None).is_err());
    }

    #[test]
    fn opcodes_are_stable() {
        assert_eq!(opcode::DB_DEPLOY, 0x80);
        assert_eq!(opcode::IVF_DEPLOY, 0x81);
        assert_eq!(opcode::SEARCH, 0x82);
        assert_eq!(opcode::IVF_SEARCH, 0x83);
    }
}
