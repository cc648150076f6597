//! Structural and timing model of the SSD: geometry, page store, per-plane
//! latches, and the in-plane distance kernels.
//!
//! Physical page ids are linear over the whole device and interleave planes:
//! page `p` lives on plane `p % total_planes`, row `p / total_planes`. A
//! contiguous page range therefore stripes round-robin across every plane,
//! which is exactly how regions are laid out.

use std::borrow::Cow;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::vectordb::popcount_bytes;
use crate::{Error, Result};

/// Page ids must fit the 33-bit field of a packed Mini-Page address.
pub const PAGE_ADDRESS_BITS: u32 = 33;
/// Slot offsets within a page use the low 7 bits of a packed address.
pub const SLOT_OFFSET_BITS: u32 = 7;

/// Channel, die, and plane counts plus page dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SsdGeometry {
    pub channels: usize,
    pub dies_per_channel: usize,
    pub planes_per_die: usize,
    pub page_size: usize,
    pub subpage_size: usize,
    pub oob_size: usize,
    pub pages_per_block: usize,
    pub blocks_per_plane: usize,
}

impl SsdGeometry {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.channels,
            self.dies_per_channel,
            self.planes_per_die,
            self.page_size,
            self.subpage_size,
            self.oob_size,
            self.pages_per_block,
            self.blocks_per_plane,
        ];
        if positive.iter().any(|&v| v == 0) {
            return Err(Error::InvalidParam("geometry fields must be positive".into()));
        }
        if self.page_size % self.subpage_size != 0 {
            return Err(Error::InvalidParam(format!(
                "page size {} is not a multiple of subpage size {}",
                self.page_size, self.subpage_size
            )));
        }
        if self.total_pages() >= 1 << PAGE_ADDRESS_BITS {
            return Err(Error::InvalidParam("device exceeds the 33-bit page address space".into()));
        }
        Ok(())
    }

    pub fn total_planes(&self) -> usize {
        self.channels * self.dies_per_channel * self.planes_per_die
    }

    pub fn planes_per_channel(&self) -> usize {
        self.dies_per_channel * self.planes_per_die
    }

    pub fn pages_per_plane(&self) -> u64 {
        (self.pages_per_block * self.blocks_per_plane) as u64
    }

    pub fn total_pages(&self) -> u64 {
        self.pages_per_plane() * self.total_planes() as u64
    }

    pub fn subpages_per_page(&self) -> usize {
        self.page_size / self.subpage_size
    }

    pub fn plane_of_page(&self, page: u64) -> usize {
        (page % self.total_planes() as u64) as usize
    }

    pub fn row_of_page(&self, page: u64) -> u64 {
        page / self.total_planes() as u64
    }

    pub fn channel_of_plane(&self, plane: usize) -> usize {
        plane / self.planes_per_channel()
    }
}

/// How many fixed-size records fit in one page.
pub fn embeddings_per_page(geometry: &SsdGeometry, embedding_bytes: usize) -> Result<usize> {
    if embedding_bytes == 0 || embedding_bytes > geometry.page_size {
        return Err(Error::InvalidParam(format!(
            "embedding size {embedding_bytes} outside 1..={}",
            geometry.page_size
        )));
    }
    Ok(geometry.page_size / embedding_bytes)
}

/// NAND cell mode of a region. The SLC partition holds data scanned in-plane;
/// bulkier payloads live in TLC pages with a slower sense time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellMode {
    Slc,
    Tlc,
}

/// Operation latencies. Human units in the config file; use [`Timing`] for
/// the integer-nanosecond view the event accounting runs on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingParams {
    /// SLC page sense time in microseconds.
    pub t_read_page_us: f64,
    /// TLC page sense time in microseconds.
    pub t_read_page_tlc_us: f64,
    /// One full-page latch XOR in microseconds.
    pub t_latch_xor_us: f64,
    /// Fail-bit count of one slot window in microseconds.
    pub t_bit_count_us: f64,
    /// Per-channel transfer bandwidth in GB/s (1 GB = 1e9 bytes).
    pub channel_bw_gbps: f64,
    /// DRAM access time per 64-byte beat in nanoseconds.
    pub t_dram_access_ns: f64,
    /// Embedded-core selection throughput in entries per microsecond.
    pub core_select_entries_per_us: f64,
    /// Fixed per-command overhead in microseconds (protocol cost).
    pub t_command_overhead_us: f64,
    /// Let the slot counting of one page overlap the next page sense.
    pub overlap_count_with_read: bool,
}

impl TimingParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            self.t_read_page_us,
            self.t_read_page_tlc_us,
            self.t_latch_xor_us,
            self.t_bit_count_us,
            self.t_dram_access_ns,
            self.t_command_overhead_us,
        ];
        if nonneg.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParam("timing values must be non-negative".into()));
        }
        if !(self.channel_bw_gbps > 0.0) || !(self.core_select_entries_per_us > 0.0) {
            return Err(Error::InvalidParam("bandwidth and throughput must be positive".into()));
        }
        Ok(())
    }
}

/// Integer-nanosecond timing resolved from [`TimingParams`]. All latency
/// accounting uses these values, so identical inputs give identical totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timing {
    pub read_slc_ns: u64,
    pub read_tlc_ns: u64,
    pub latch_xor_ns: u64,
    pub bit_count_ns: u64,
    pub channel_mbps: u64,
    pub dram_ns_per_64b: u64,
    pub select_ns_per_entry: u64,
    pub command_ns: u64,
    pub overlap_count_with_read: bool,
}

impl Timing {
    pub fn resolve(p: &TimingParams) -> Result<Self> {
        p.validate()?;
        let us = |v: f64| (v * 1000.0).round() as u64;
        let channel_mbps = (p.channel_bw_gbps * 1000.0).round() as u64;
        Ok(Timing {
            read_slc_ns: us(p.t_read_page_us),
            read_tlc_ns: us(p.t_read_page_tlc_us),
            latch_xor_ns: us(p.t_latch_xor_us),
            bit_count_ns: us(p.t_bit_count_us),
            channel_mbps,
            dram_ns_per_64b: p.t_dram_access_ns.round() as u64,
            select_ns_per_entry: (1000.0 / p.core_select_entries_per_us).round() as u64,
            command_ns: us(p.t_command_overhead_us),
            overlap_count_with_read: p.overlap_count_with_read,
        })
    }

    pub fn read_ns(&self, mode: CellMode) -> u64 {
        match mode {
            CellMode::Slc => self.read_slc_ns,
            CellMode::Tlc => self.read_tlc_ns,
        }
    }
}

/// Time to move `bytes` over one channel, exact rational math rounded to
/// whole nanoseconds. Bandwidth is in MB/s (1 MB = 1e6 bytes), so
/// `ns = bytes * 1000 / mbps`.
pub fn channel_transfer_ns(bytes: u64, channel_mbps: u64) -> u64 {
    debug_assert!(channel_mbps > 0);
    (bytes * 1000 + channel_mbps / 2) / channel_mbps
}

/// Per-operation energy costs. Negative values are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub e_read_page_uj: f64,
    pub e_latch_op_uj: f64,
    pub e_channel_nj_per_byte: f64,
    pub e_dram_nj_per_64b: f64,
    pub e_core_active_mw: f64,
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.e_read_page_uj,
            self.e_latch_op_uj,
            self.e_channel_nj_per_byte,
            self.e_dram_nj_per_64b,
            self.e_core_active_mw,
        ];
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParam("energy values must be non-negative".into()));
        }
        Ok(())
    }
}

/// A page-plus-slot address packed into 40 bits: 33-bit page id in the high
/// bits, 7-bit slot offset in the low bits, stored as 5 little-endian bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MiniPageAddr {
    pub page: u64,
    pub slot: u8,
}

impl MiniPageAddr {
    pub fn new(page: u64, slot: u8) -> Result<Self> {
        if page >= 1 << PAGE_ADDRESS_BITS {
            return Err(Error::AddressOutOfRange(page));
        }
        if slot >= 1 << SLOT_OFFSET_BITS {
            return Err(Error::InvalidParam(format!("slot offset {slot} needs more than 7 bits")));
        }
        Ok(MiniPageAddr { page, slot })
    }

    pub fn packed(self) -> u64 {
        self.page << SLOT_OFFSET_BITS | self.slot as u64
    }

    pub fn pack(self) -> [u8; 5] {
        self.packed().to_le_bytes()[..5].try_into().unwrap()
    }

    pub fn from_packed(packed: u64) -> Result<Self> {
        if packed >= 1 << (PAGE_ADDRESS_BITS + SLOT_OFFSET_BITS) {
            return Err(Error::AddressOutOfRange(packed));
        }
        MiniPageAddr::new(packed >> SLOT_OFFSET_BITS, (packed & 0x7F) as u8)
    }

    pub fn unpack(bytes: [u8; 5]) -> Result<Self> {
        let mut full = [0u8; 8];
        full[..5].copy_from_slice(&bytes);
        MiniPageAddr::from_packed(u64::from_le_bytes(full))
    }
}

/// Content of one written page: byte extents plus an optional out-of-band
/// area. Extents are sorted, non-overlapping, and inside the page; bytes a
/// deployment never wrote read back as zero.
#[derive(Debug, Clone, Default)]
pub struct PageImage {
    extents: Vec<(u32, Box<[u8]>)>,
    oob: Option<Box<[u8]>>,
}

impl PageImage {
    pub fn write_extent(&mut self, offset: usize, bytes: &[u8]) {
        if bytes.is_empty() {
            return;
        }
        let idx = self.extents.partition_point(|(off, _)| (*off as usize) < offset);
        debug_assert!(
            idx == 0 || {
                let (po, pb) = &self.extents[idx - 1];
                *po as usize + pb.len() <= offset
            },
            "overlapping extent write"
        );
        debug_assert!(idx == self.extents.len() || offset + bytes.len() <= self.extents[idx].0 as usize);
        self.extents.insert(idx, (offset as u32, bytes.into()));
    }

    pub fn set_oob(&mut self, bytes: &[u8]) {
        self.oob = Some(bytes.into());
    }

    pub fn oob(&self) -> Option<&[u8]> {
        self.oob.as_deref()
    }

    /// Materializes the page into `buf`, which must be page-sized.
    pub fn read_into(&self, buf: &mut [u8]) {
        buf.fill(0);
        for (off, bytes) in &self.extents {
            buf[*off as usize..*off as usize + bytes.len()].copy_from_slice(bytes);
        }
    }

    /// A window of the page without materializing it. Borrows when one
    /// extent covers the window exactly.
    pub fn slice(&self, offset: usize, len: usize) -> Cow<'_, [u8]> {
        for (off, bytes) in &self.extents {
            let off = *off as usize;
            if off <= offset && offset + len <= off + bytes.len() {
                return Cow::Borrowed(&bytes[offset - off..offset - off + len]);
            }
        }
        let mut out = vec![0u8; len];
        for (off, bytes) in &self.extents {
            let off = *off as usize;
            let lo = off.max(offset);
            let hi = (off + bytes.len()).min(offset + len);
            if lo < hi {
                out[lo - offset..hi - offset].copy_from_slice(&bytes[lo - off..hi - off]);
            }
        }
        Cow::Owned(out)
    }

    pub fn content_bytes(&self) -> usize {
        self.extents.iter().map(|(_, b)| b.len()).sum()
    }

    /// The written extents in ascending offset order.
    pub fn extents(&self) -> impl Iterator<Item = (usize, &[u8])> {
        self.extents.iter().map(|(off, b)| (*off as usize, &**b))
    }
}

/// Sparse store of written pages, keyed by physical page id.
#[derive(Debug, Default)]
pub struct FlashStore {
    pages: HashMap<u64, PageImage>,
}

impl FlashStore {
    pub fn new() -> Self {
        FlashStore::default()
    }

    pub fn write_extent(&mut self, page: u64, offset: usize, bytes: &[u8]) {
        self.pages.entry(page).or_default().write_extent(offset, bytes);
    }

    pub fn set_oob(&mut self, page: u64, bytes: &[u8]) {
        self.pages.entry(page).or_default().set_oob(bytes);
    }

    pub fn page(&self, page: u64) -> Option<&PageImage> {
        self.pages.get(&page)
    }

    pub fn written_pages(&self) -> usize {
        self.pages.len()
    }

    /// Written page ids in ascending order.
    pub fn page_ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.pages.keys().copied().collect();
        ids.sort_unstable();
        ids
    }
}

/// The three page buffers and the OOB latch of one plane.
#[derive(Debug, Clone)]
pub struct PlaneBuffer {
    pub sl: Vec<u8>,
    pub cl: Vec<u8>,
    pub dl: Vec<u8>,
    pub oob: Vec<u8>,
}

impl PlaneBuffer {
    fn new(page_size: usize, oob_size: usize) -> Self {
        PlaneBuffer {
            sl: vec![0; page_size],
            cl: vec![0; page_size],
            dl: vec![0; page_size],
            oob: vec![0; oob_size],
        }
    }

    /// DL = SL xor CL over the whole page buffer.
    pub fn latch_xor(&mut self) {
        for ((d, s), c) in self.dl.iter_mut().zip(&self.sl).zip(&self.cl) {
            *d = s ^ c;
        }
    }

    /// Population count of a byte window of DL: the fail-bit count the plane
    /// comparator sees for one slot.
    pub fn count_fail_bits(&self, offset: usize, len: usize) -> u32 {
        popcount_bytes(&self.dl[offset..offset + len])
    }
}

/// Pass/fail comparator: a value passes when it does not exceed the threshold.
pub fn pass_fail_compare(value: u32, threshold: u32) -> bool {
    value <= threshold
}

/// Per-plane latch state for one in-flight search.
#[derive(Debug)]
pub struct LatchArray {
    planes: Vec<PlaneBuffer>,
}

impl LatchArray {
    pub fn new(geometry: &SsdGeometry) -> Self {
        LatchArray {
            planes: vec![
                PlaneBuffer::new(geometry.page_size, geometry.oob_size);
                geometry.total_planes()
            ],
        }
    }

    pub fn plane(&self, idx: usize) -> &PlaneBuffer {
        &self.planes[idx]
    }

    pub fn plane_mut(&mut self, idx: usize) -> &mut PlaneBuffer {
        &mut self.planes[idx]
    }

    pub fn len(&self) -> usize {
        self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }

    /// Loads a page and its OOB area into the owning plane's SL and OOB
    /// latches. Reading an unwritten or out-of-range page is an error.
    pub fn read_page(&mut self, geometry: &SsdGeometry, flash: &FlashStore, page: u64) -> Result<usize> {
        if page >= geometry.total_pages() {
            return Err(Error::AddressOutOfRange(page));
        }
        let image = flash.page(page).ok_or(Error::UnwrittenPage(page))?;
        let plane = geometry.plane_of_page(page);
        let buf = &mut self.planes[plane];
        image.read_into(&mut buf.sl);
        buf.oob.fill(0);
        if let Some(oob) = image.oob() {
            buf.oob[..oob.len()].copy_from_slice(oob);
        }
        Ok(plane)
    }

    /// Broadcasts one query page into every plane's CL latch.
    pub fn broadcast_cl(&mut self, page_bytes: &[u8]) {
        for plane in &mut self.planes {
            plane.cl.copy_from_slice(page_bytes);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn toy_geometry() -> SsdGeometry {
        SsdGeometry {
            channels: 2,
            dies_per_channel: 1,
            planes_per_die: 2,
            page_size: 64,
            subpage_size: 16,
            oob_size: 16,
            pages_per_block: 4,
            blocks_per_plane: 2,
        }
    }

    #[test]
    fn geometry_derived_counts() {
        let g = toy_geometry();
        g.validate().unwrap();
        assert_eq!(g.total_planes(), 4);
        assert_eq!(g.pages_per_plane(), 8);
        assert_eq!(g.total_pages(), 32);
        assert_eq!(g.subpages_per_page(), 4);
        // Consecutive pages stripe across planes.
        assert_eq!(g.plane_of_page(0), 0);
        assert_eq!(g.plane_of_page(5), 1);
        assert_eq!(g.row_of_page(5), 1);
        assert_eq!(g.channel_of_plane(0), 0);
        assert_eq!(g.channel_of_plane(1), 0);
        assert_eq!(g.channel_of_plane(2), 1);
    }

    #[test]
    fn geometry_rejects_bad_shapes() {
        let mut g = toy_geometry();
        g.subpage_size = 48;
        assert!(g.validate().is_err());
        let mut g = toy_geometry();
        g.channels = 0;
        assert!(g.validate().is_err());
    }

    #[test]
    fn embeddings_per_page_examples() {
        let g = SsdGeometry { page_size: 16384, subpage_size: 4096, ..toy_geometry() };
        // 1024-dimension binary embeddings: 128 bytes each.
        assert_eq!(embeddings_per_page(&g, 128).unwrap(), 128);
        assert_eq!(embeddings_per_page(&g, 4096).unwrap(), 4);
        assert_eq!(embeddings_per_page(&g, 16384).unwrap(), 1);
        assert!(embeddings_per_page(&g, 0).is_err());
        assert!(embeddings_per_page(&g, 16385).is_err());
    }

    #[test]
    fn transfer_time_examples() {
        // 1.2 KB at 1.2 GB/s is exactly one microsecond.
        assert_eq!(channel_transfer_ns(1200, 1200), 1000);
        // A 16 KiB page at 2.0 GB/s takes 8.192 us.
        assert_eq!(channel_transfer_ns(16384, 2000), 8192);
        assert_eq!(channel_transfer_ns(0, 1200), 0);
    }

    #[test]
    fn timing_resolves_to_integer_nanoseconds() {
        let cfg = SimConfig::preset("reis-ssd1").unwrap();
        let t = Timing::resolve(&cfg.timing).unwrap();
        assert_eq!(t.read_slc_ns, 22_500);
        assert_eq!(t.latch_xor_ns, 2_000);
        assert_eq!(t.bit_count_ns, 100);
        assert_eq!(t.channel_mbps, 1200);
        assert_eq!(t.dram_ns_per_64b, 50);
        assert_eq!(t.select_ns_per_entry, 100);
        assert_eq!(t.read_ns(CellMode::Slc), 22_500);
        assert!(t.read_ns(CellMode::Tlc) > t.read_ns(CellMode::Slc));
    }

    #[test]
    fn timing_rejects_negative_values() {
        let mut p = SimConfig::preset("reis-ssd1").unwrap().timing;
        p.t_latch_xor_us = -1.0;
        assert!(Timing::resolve(&p).is_err());
        let mut p = SimConfig::preset("reis-ssd1").unwrap().timing;
        p.channel_bw_gbps = 0.0;
        assert!(Timing::resolve(&p).is_err());
    }

    #[test]
    fn mini_page_addr_packs_to_five_bytes() {
        let a = MiniPageAddr::new(1, 127).unwrap();
        let packed = a.pack();
        // (1 << 7) | 127 == 255: the low byte is fully set.
        assert_eq!(packed[0], 0xFF);
        assert_eq!(packed[1..], [0, 0, 0, 0]);
        assert_eq!(MiniPageAddr::unpack(packed).unwrap(), a);

        let top = MiniPageAddr::new((1 << PAGE_ADDRESS_BITS) - 1, 127).unwrap();
        assert_eq!(MiniPageAddr::unpack(top.pack()).unwrap(), top);
        assert!(MiniPageAddr::new(1 << PAGE_ADDRESS_BITS, 0).is_err());
        assert!(MiniPageAddr::new(0, 128).is_err());
    }

    #[test]
    fn mini_page_addr_round_trips_randomly() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        for _ in 0..10_000 {
            let a = MiniPageAddr::new(
                rng.gen_range(0..1u64 << PAGE_ADDRESS_BITS),
                rng.gen_range(0..128),
            )
            .unwrap();
            assert_eq!(MiniPageAddr::unpack(a.pack()).unwrap(), a);
        }
    }

    #[test]
    fn page_image_read_back_and_slice() {
        let mut img = PageImage::default();
        img.write_extent(8, &[1, 2, 3, 4]);
        img.write_extent(0, &[9; 4]);
        let mut buf = vec![0xFFu8; 16];
        img.read_into(&mut buf);
        assert_eq!(buf, [9, 9, 9, 9, 0, 0, 0, 0, 1, 2, 3, 4, 0, 0, 0, 0]);
        assert_eq!(&*img.slice(8, 4), &[1, 2, 3, 4]);
        assert!(matches!(img.slice(8, 4), Cow::Borrowed(_)));
        // A window spanning extents and holes is assembled with zero fill.
        assert_eq!(&*img.slice(2, 8), &[9, 9, 0, 0, 0, 0, 1, 2]);
    }

    #[test]
    fn read_page_loads_the_owning_plane() {
        let g = toy_geometry();
        let mut flash = FlashStore::new();
        flash.write_extent(5, 0, &[7; 64]);
        flash.set_oob(5, &[3; 8]);
        let mut latches = LatchArray::new(&g);
        let plane = latches.read_page(&g, &flash, 5).unwrap();
        assert_eq!(plane, 1);
        assert_eq!(latches.plane(1).sl, vec![7; 64]);
        assert_eq!(&latches.plane(1).oob[..8], &[3; 8]);
        assert_eq!(&latches.plane(1).oob[8..], &[0; 8]);
        // Unwritten and out-of-range pages fail.
        assert!(matches!(latches.read_page(&g, &flash, 6), Err(Error::UnwrittenPage(6))));
        assert!(matches!(latches.read_page(&g, &flash, 99), Err(Error::AddressOutOfRange(99))));
    }

    #[test]
    fn latch_xor_matches_byte_oracle_and_preserves_sl() {
        let g = toy_geometry();
        let mut rng = ChaCha12Rng::seed_from_u64(32);
        let mut latches = LatchArray::new(&g);
        let data: Vec<u8> = (0..64).map(|_| rng.gen()).collect();
        let query: Vec<u8> = (0..64).map(|_| rng.gen()).collect();
        let mut flash = FlashStore::new();
        flash.write_extent(0, 0, &data);
        latches.broadcast_cl(&query);
        latches.read_page(&g, &flash, 0).unwrap();
        let sl_before = latches.plane(0).sl.clone();
        latches.plane_mut(0).latch_xor();
        let p = latches.plane(0);
        for i in 0..64 {
            assert_eq!(p.dl[i], data[i] ^ query[i]);
        }
        assert_eq!(p.sl, sl_before);
        // XOR with itself clears DL; with all-ones it inverts.
        let mut latches2 = LatchArray::new(&g);
        latches2.broadcast_cl(&data);
        latches2.read_page(&g, &flash, 0).unwrap();
        latches2.plane_mut(0).latch_xor();
        assert!(latches2.plane(0).dl.iter().all(|&b| b == 0));
    }

    #[test]
    fn count_fail_bits_equals_hamming_on_slot_windows() {
        let g = toy_geometry();
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let emb = 16usize;
        let data: Vec<u8> = (0..64).map(|_| rng.gen()).collect();
        let query_slot: Vec<u8> = (0..emb).map(|_| rng.gen()).collect();
        let mut query_page = Vec::new();
        for _ in 0..4 {
            query_page.extend_from_slice(&query_slot);
        }
        let mut flash = FlashStore::new();
        flash.write_extent(0, 0, &data);
        let mut latches = LatchArray::new(&g);
        latches.broadcast_cl(&query_page);
        latches.read_page(&g, &flash, 0).unwrap();
        latches.plane_mut(0).latch_xor();
        for slot in 0..4 {
            let window = &data[slot * emb..(slot + 1) * emb];
            let expect: u32 = window
                .iter()
                .zip(&query_slot)
                .map(|(a, b)| (a ^ b).count_ones())
                .sum();
            assert_eq!(latches.plane(0).count_fail_bits(slot * emb, emb), expect);
        }
    }

    #[test]
    fn pass_fail_boundaries() {
        assert!(pass_fail_compare(10, 10));
        assert!(pass_fail_compare(0, 0));
        assert!(!pass_fail_compare(11, 10));
    }

    #[test]
    fn internal_read_bandwidth_exceeds_channel_bandwidth() {
        // The whole point of in-plane scanning: planes sense pages faster in
        // aggregate than the channels could ship them out.
        let cfg = SimConfig::preset("reis-ssd1").unwrap();
        let t = Timing::resolve(&cfg.timing).unwrap();
        let planes = cfg.geometry.total_planes() as f64;
        let internal = planes * cfg.geometry.page_size as f64 / (t.read_slc_ns as f64 * 1e-9);
        let external = cfg.geometry.channels as f64 * t.channel_mbps as f64 * 1e6;
        assert!(internal > external * 10.0, "internal {internal:.3e} external {external:.3e}");
    }
}
