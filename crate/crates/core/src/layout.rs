//! On-flash data placement: region allocation, record packing, and the two
//! deployment modes (flat and inverted-file).
//!
//! A deployed database occupies an embedding super-region made of centroid,
//! binary, and INT8 sub-regions (flat databases skip the centroid part),
//! plus a document region. Regions are striped across every plane simply by
//! being contiguous page ranges: consecutive page ids live on consecutive
//! planes. Binary and centroid pages carry per-slot link metadata in their
//! OOB area; INT8 and document pages need none.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::ivf::IvfIndex;
use crate::ssd::{
    embeddings_per_page, CellMode, FlashStore, MiniPageAddr, SsdGeometry, Timing,
};
use crate::vectordb::{binarize, quantize_int8, Fp32Vector, QuantizerModel};
use crate::{Error, Result};

/// Database directory entry: one id byte plus four packed 40-bit addresses
/// bounding the embedding super-region and the document region.
pub const RDB_ENTRY_BYTES: usize = 21;

/// Per-cluster directory entry: packed centroid address, global first/last
/// member slot, tag byte, and one reserved byte.
pub const RIVF_ENTRY_BYTES: usize = 15;

/// Per-slot OOB link record with both document and INT8 links.
pub const LINK_RECORD_BYTES: usize = 8;
/// Per-slot OOB link record carrying only the document link.
pub const LINK_RECORD_DOC_ONLY_BYTES: usize = 4;

/// Mini-Page slot offsets are 7 bits, so link tables address at most 128
/// records per page regardless of how many would physically fit.
pub const MAX_SLOTS_PER_PAGE: usize = 128;

fn put_u40(out: &mut Vec<u8>, v: u64) {
    debug_assert!(v < 1 << 40);
    out.extend_from_slice(&v.to_le_bytes()[..5]);
}

fn get_u40(bytes: &[u8]) -> u64 {
    let mut full = [0u8; 8];
    full[..5].copy_from_slice(&bytes[..5]);
    u64::from_le_bytes(full)
}

/// Directory entry locating one database on the device. The four bounds are
/// packed page-plus-slot addresses with the slot bits zero (regions are
/// page-granular).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RdbEntry {
    pub db_id: u8,
    pub emb_first: u64,
    pub emb_last: u64,
    pub doc_first: u64,
    pub doc_last: u64,
}

impl RdbEntry {
    pub fn pack(&self) -> [u8; RDB_ENTRY_BYTES] {
        debug_assert!(self.emb_first <= self.emb_last && self.doc_first <= self.doc_last);
        let mut out = Vec::with_capacity(RDB_ENTRY_BYTES);
        out.push(self.db_id);
        for v in [self.emb_first, self.emb_last, self.doc_first, self.doc_last] {
            put_u40(&mut out, v);
        }
        out.try_into().unwrap()
    }

    pub fn unpack(bytes: &[u8; RDB_ENTRY_BYTES]) -> Result<Self> {
        let e = RdbEntry {
            db_id: bytes[0],
            emb_first: get_u40(&bytes[1..]),
            emb_last: get_u40(&bytes[6..]),
            doc_first: get_u40(&bytes[11..]),
            doc_last: get_u40(&bytes[16..]),
        };
        if e.emb_first > e.emb_last || e.doc_first > e.doc_last {
            return Err(Error::format("db directory entry", "region bounds out of order"));
        }
        Ok(e)
    }
}

/// Directory entry locating one cluster: where its centroid sits and which
/// global binary slots its members occupy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RivfEntry {
    pub centroid_addr: MiniPageAddr,
    pub first_emb_index: u32,
    pub last_emb_index: u32,
    pub tag: u8,
    pub reserved: u8,
}

impl RivfEntry {
    pub fn pack(&self) -> [u8; RIVF_ENTRY_BYTES] {
        debug_assert!(self.first_emb_index <= self.last_emb_index);
        let mut out = Vec::with_capacity(RIVF_ENTRY_BYTES);
        out.extend_from_slice(&self.centroid_addr.pack());
        out.extend_from_slice(&self.first_emb_index.to_le_bytes());
        out.extend_from_slice(&self.last_emb_index.to_le_bytes());
        out.push(self.tag);
        out.push(self.reserved);
        out.try_into().unwrap()
    }

    pub fn unpack(bytes: &[u8; RIVF_ENTRY_BYTES]) -> Result<Self> {
        let e = RivfEntry {
            centroid_addr: MiniPageAddr::unpack(bytes[..5].try_into().unwrap())?,
            first_emb_index: u32::from_le_bytes(bytes[5..9].try_into().unwrap()),
            last_emb_index: u32::from_le_bytes(bytes[9..13].try_into().unwrap()),
            tag: bytes[13],
            reserved: bytes[14],
        };
        if e.first_emb_index > e.last_emb_index {
            return Err(Error::format("cluster directory entry", "member span out of order"));
        }
        Ok(e)
    }
}

/// Per-slot OOB metadata on binary embedding pages: the document slot and
/// the INT8 slot an embedding links to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OobLinkRecord {
    pub dadr: u32,
    pub radr: u32,
}

impl OobLinkRecord {
    pub fn pack(&self) -> [u8; LINK_RECORD_BYTES] {
        let mut out = [0u8; LINK_RECORD_BYTES];
        out[..4].copy_from_slice(&self.dadr.to_le_bytes());
        out[4..].copy_from_slice(&self.radr.to_le_bytes());
        out
    }

    pub fn unpack(bytes: &[u8; LINK_RECORD_BYTES]) -> Self {
        OobLinkRecord {
            dadr: u32::from_le_bytes(bytes[..4].try_into().unwrap()),
            radr: u32::from_le_bytes(bytes[4..].try_into().unwrap()),
        }
    }
}

/// Bytes of OOB area a page's link table needs. Tables without INT8 links
/// (a document-only layout) use 4-byte records: four 4 KiB embeddings per
/// page then need 16 spare bytes.
pub fn oob_link_table_bytes(slots_per_page: usize, with_radr: bool) -> usize {
    slots_per_page * if with_radr { LINK_RECORD_BYTES } else { LINK_RECORD_DOC_ONLY_BYTES }
}

/// Document placement granularity: one chunk per subpage or one per page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocGranularity {
    Subpage,
    Page,
}

/// A page-contiguous, plane-striped allocation holding fixed-size slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub first_page: u64,
    pub pages: u64,
    pub slots_per_page: usize,
    pub slot_bytes: usize,
    pub slots: u64,
    pub cell_mode: CellMode,
}

impl Region {
    pub fn last_page(&self) -> u64 {
        self.first_page + self.pages - 1
    }

    pub fn contains_page(&self, page: u64) -> bool {
        (self.first_page..=self.last_page()).contains(&page)
    }

    pub fn page_of_slot(&self, slot: u64) -> u64 {
        debug_assert!(slot < self.slots);
        self.first_page + slot / self.slots_per_page as u64
    }

    pub fn offset_of_slot(&self, slot: u64) -> usize {
        (slot % self.slots_per_page as u64) as usize * self.slot_bytes
    }

    pub fn slot_in_page(&self, slot: u64) -> usize {
        (slot % self.slots_per_page as u64) as usize
    }

    pub fn addr_of_slot(&self, slot: u64) -> Result<MiniPageAddr> {
        MiniPageAddr::new(self.page_of_slot(slot), self.slot_in_page(slot) as u8)
    }

    /// Slots that live in one page of the region: a full page's worth except
    /// possibly on the last page.
    pub fn slots_in_page(&self, page: u64) -> u64 {
        debug_assert!(self.contains_page(page));
        let start = (page - self.first_page) * self.slots_per_page as u64;
        self.slots.saturating_sub(start).min(self.slots_per_page as u64)
    }
}

/// Successor page within a region, or `None` at the end.
pub fn next_page_address(current: u64, region: &Region) -> Option<u64> {
    if current >= region.last_page() || !region.contains_page(current) {
        None
    } else {
        Some(current + 1)
    }
}

/// A database as it sits on the device: region bounds, the cluster
/// directory, and host-side metadata needed to interpret results.
#[derive(Debug, Clone)]
pub struct DeployedDatabase {
    pub db_id: u8,
    pub dim: usize,
    pub n: u64,
    pub quantizer: QuantizerModel,
    pub centroid_region: Option<Region>,
    pub binary_region: Region,
    pub int8_region: Region,
    pub doc_region: Region,
    pub rivf: Vec<RivfEntry>,
    /// Binary slot order back to dataset indices (identity for flat).
    pub slot_to_dataset: Vec<u32>,
    pub doc_lens: Vec<u32>,
    pub doc_granularity: DocGranularity,
}

impl DeployedDatabase {
    /// The directory entry for this database. The embedding super-region
    /// spans the centroid (when present), binary, and INT8 sub-regions.
    pub fn rdb_entry(&self) -> RdbEntry {
        let emb_first = self.centroid_region.map_or(self.binary_region.first_page, |r| r.first_page);
        RdbEntry {
            db_id: self.db_id,
            emb_first: MiniPageAddr::new(emb_first, 0).unwrap().packed(),
            emb_last: MiniPageAddr::new(self.int8_region.last_page(), 0).unwrap().packed(),
            doc_first: MiniPageAddr::new(self.doc_region.first_page, 0).unwrap().packed(),
            doc_last: MiniPageAddr::new(self.doc_region.last_page(), 0).unwrap().packed(),
        }
    }

    /// Bytes of flash the image occupies, counting whole pages.
    pub fn logical_bytes(&self, geometry: &SsdGeometry) -> u64 {
        let pages: u64 = self.centroid_region.map_or(0, |r| r.pages)
            + self.binary_region.pages
            + self.int8_region.pages
            + self.doc_region.pages;
        pages * geometry.page_size as u64
    }

    pub fn binary_code<'f>(&self, flash: &'f FlashStore, slot: u64) -> Result<std::borrow::Cow<'f, [u8]>> {
        if slot >= self.binary_region.slots {
            return Err(Error::AddressOutOfRange(slot));
        }
        let page = self.binary_region.page_of_slot(slot);
        let image = flash.page(page).ok_or(Error::UnwrittenPage(page))?;
        Ok(image.slice(self.binary_region.offset_of_slot(slot), self.binary_region.slot_bytes))
    }

    pub fn int8_code<'f>(&self, flash: &'f FlashStore, radr: u32) -> Result<std::borrow::Cow<'f, [u8]>> {
        if u64::from(radr) >= self.int8_region.slots {
            return Err(Error::AddressOutOfRange(radr.into()));
        }
        let page = self.int8_region.page_of_slot(radr.into());
        let image = flash.page(page).ok_or(Error::UnwrittenPage(page))?;
        Ok(image.slice(self.int8_region.offset_of_slot(radr.into()), self.int8_region.slot_bytes))
    }

    /// The OOB link record of one binary slot, read back from flash.
    pub fn link_record(&self, flash: &FlashStore, slot: u64) -> Result<OobLinkRecord> {
        if slot >= self.binary_region.slots {
            return Err(Error::AddressOutOfRange(slot));
        }
        let page = self.binary_region.page_of_slot(slot);
        let image = flash.page(page).ok_or(Error::UnwrittenPage(page))?;
        let oob = image.oob().ok_or(Error::UnwrittenPage(page))?;
        let off = self.binary_region.slot_in_page(slot) * LINK_RECORD_BYTES;
        Ok(OobLinkRecord::unpack(oob[off..off + LINK_RECORD_BYTES].try_into().unwrap()))
    }

    /// Where a document slot lives: page, byte offset, container size, and
    /// the exact chunk length.
    pub fn doc_location(&self, dadr: u32) -> Result<(u64, usize, usize, usize)> {
        if u64::from(dadr) >= self.doc_region.slots {
            return Err(Error::AddressOutOfRange(dadr.into()));
        }
        let page = self.doc_region.page_of_slot(dadr.into());
        let offset = self.doc_region.offset_of_slot(dadr.into());
        Ok((page, offset, self.doc_region.slot_bytes, self.doc_lens[dadr as usize] as usize))
    }

    /// The chunk deployed at a document slot, byte-identical to the input.
    pub fn document(&self, flash: &FlashStore, dadr: u32) -> Result<Vec<u8>> {
        let (page, offset, _, len) = self.doc_location(dadr)?;
        let image = flash.page(page).ok_or(Error::UnwrittenPage(page))?;
        Ok(image.slice(offset, len).into_owned())
    }
}

/// Deployment knobs. `doc_granularity: None` picks subpage placement when
/// every chunk fits a subpage, page placement otherwise.
#[derive(Debug, Clone, Copy, Default)]
pub struct DeployOptions {
    pub doc_granularity: Option<DocGranularity>,
}

/// The modeled drive: content store plus the databases deployed on it.
/// Regions come from a bump allocator aligned to the plane count, so every
/// region starts on plane 0 and stripes round-robin from there.
#[derive(Debug)]
pub struct SsdDevice {
    config: SimConfig,
    timing: Timing,
    flash: FlashStore,
    next_free_page: u64,
    dbs: BTreeMap<u8, DeployedDatabase>,
}

impl SsdDevice {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let timing = Timing::resolve(&config.timing)?;
        Ok(SsdDevice {
            config,
            timing,
            flash: FlashStore::new(),
            next_free_page: 0,
            dbs: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn geometry(&self) -> &SsdGeometry {
        &self.config.geometry
    }

    pub fn timing(&self) -> &Timing {
        &self.timing
    }

    pub fn flash(&self) -> &FlashStore {
        &self.flash
    }

    pub fn database(&self, db_id: u8) -> Result<&DeployedDatabase> {
        self.dbs.get(&db_id).ok_or(Error::UnknownDatabase(db_id))
    }

    pub fn databases(&self) -> impl Iterator<Item = &DeployedDatabase> {
        self.dbs.values()
    }

    fn alloc_region(&mut self, pages: u64) -> Result<u64> {
        let planes = self.geometry().total_planes() as u64;
        let first = self.next_free_page.next_multiple_of(planes);
        let total = self.geometry().total_pages();
        if pages == 0 || first + pages > total {
            return Err(Error::CapacityExceeded {
                needed: pages,
                available: total.saturating_sub(first),
            });
        }
        self.next_free_page = first + pages;
        Ok(first)
    }

    fn next_db_id(&self) -> Result<u8> {
        for id in 0..=u8::MAX {
            if !self.dbs.contains_key(&id) {
                return Ok(id);
            }
        }
        Err(Error::InvalidParam("all 256 database ids are in use".into()))
    }

    /// Deploys without a coarse index: binary codes in dataset order, INT8
    /// twins in the same order, documents one per slot, OOB links on every
    /// binary page.
    pub fn deploy_flat(
        &mut self,
        vectors: &[Fp32Vector],
        documents: &[Vec<u8>],
        quantizer: &QuantizerModel,
        opts: DeployOptions,
    ) -> Result<u8> {
        let order: Vec<u32> = (0..vectors.len() as u32).collect();
        self.deploy_ordered(vectors, documents, quantizer, opts, order, None, &[])
    }

    /// Deploys with a coarse index: centroid pages first, then binary codes
    /// grouped cluster-major so each cluster is one contiguous slot span.
    pub fn deploy_ivf(
        &mut self,
        vectors: &[Fp32Vector],
        documents: &[Vec<u8>],
        index: &IvfIndex,
        quantizer: &QuantizerModel,
        opts: DeployOptions,
    ) -> Result<u8> {
        if index.len() != vectors.len() {
            return Err(Error::InvalidParam(format!(
                "index covers {} vectors, dataset has {}",
                index.len(),
                vectors.len()
            )));
        }
        if index.dim() != quantizer.dim() {
            return Err(Error::DimensionMismatch { expected: quantizer.dim(), got: index.dim() });
        }
        let mut order = Vec::with_capacity(vectors.len());
        let mut spans = Vec::with_capacity(index.nlist());
        for c in 0..index.nlist() {
            let members = index.members(c);
            if members.is_empty() {
                return Err(Error::InvalidParam(format!("cluster {c} is empty, cannot deploy")));
            }
            let first = order.len() as u32;
            order.extend_from_slice(members);
            spans.push((first, order.len() as u32 - 1, index.tag(c)));
        }
        self.deploy_ordered(vectors, documents, quantizer, opts, order, Some(index), &spans)
    }

    #[allow(clippy::too_many_arguments)]
    fn deploy_ordered(
        &mut self,
        vectors: &[Fp32Vector],
        documents: &[Vec<u8>],
        quantizer: &QuantizerModel,
        opts: DeployOptions,
        order: Vec<u32>,
        index: Option<&IvfIndex>,
        spans: &[(u32, u32, u8)],
    ) -> Result<u8> {
        if vectors.is_empty() {
            return Err(Error::EmptyInput("vectors"));
        }
        if vectors.len() != documents.len() {
            return Err(Error::InvalidParam(format!(
                "{} vectors but {} documents",
                vectors.len(),
                documents.len()
            )));
        }
        if vectors.len() > u32::MAX as usize {
            return Err(Error::InvalidParam("dataset exceeds 32-bit slot addressing".into()));
        }
        let dim = quantizer.dim();
        for v in vectors {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: v.dim() });
            }
        }
        let geometry = self.geometry().clone();
        let n = vectors.len() as u64;
        let emb_bytes = dim / 8;
        if dim > geometry.page_size {
            return Err(Error::InvalidParam(format!(
                "INT8 vectors of {dim} bytes do not fit a {} byte page",
                geometry.page_size
            )));
        }

        // Document granularity and chunk size validation.
        let max_len = documents.iter().map(Vec::len).max().unwrap();
        let granularity = match opts.doc_granularity {
            Some(g) => g,
            None if max_len <= geometry.subpage_size => DocGranularity::Subpage,
            None => DocGranularity::Page,
        };
        let doc_slot_bytes = match granularity {
            DocGranularity::Subpage => geometry.subpage_size,
            DocGranularity::Page => geometry.page_size,
        };
        if max_len > doc_slot_bytes {
            return Err(Error::ChunkTooLarge { size: max_len, page_size: doc_slot_bytes });
        }

        // Slot shapes per sub-region.
        let bin_per_page = embeddings_per_page(&geometry, emb_bytes)?.min(MAX_SLOTS_PER_PAGE);
        let link_table = oob_link_table_bytes(bin_per_page, true);
        if link_table > geometry.oob_size {
            return Err(Error::InvalidParam(format!(
                "link table of {link_table} bytes exceeds the {} byte OOB area",
                geometry.oob_size
            )));
        }
        let int8_per_page = embeddings_per_page(&geometry, dim)?;
        let docs_per_page = match granularity {
            DocGranularity::Subpage => geometry.subpages_per_page(),
            DocGranularity::Page => 1,
        };

        let bin_pages = n.div_ceil(bin_per_page as u64);
        let int8_pages = n.div_ceil(int8_per_page as u64);
        let doc_pages = n.div_ceil(docs_per_page as u64);

        // Centroid sub-region shape (inverted-file deployments only).
        let (cent_pages, cent_per_page) = match index {
            Some(idx) => {
                let per = embeddings_per_page(&geometry, emb_bytes)?.min(MAX_SLOTS_PER_PAGE);
                if per > geometry.oob_size {
                    return Err(Error::InvalidParam(format!(
                        "tag table of {per} bytes exceeds the {} byte OOB area",
                        geometry.oob_size
                    )));
                }
                ((idx.nlist() as u64).div_ceil(per as u64), per)
            }
            None => (0, 1),
        };

        // Allocate in super-region order so the directory entry can bound
        // centroid..int8 with two addresses.
        let cent_first = if cent_pages > 0 { self.alloc_region(cent_pages)? } else { 0 };
        let bin_first = self.alloc_region(bin_pages)?;
        let int8_first = self.alloc_region(int8_pages)?;
        let doc_first = self.alloc_region(doc_pages)?;

        // Centroid pages: binary centroid codes in the data area, one tag
        // byte per slot in the OOB area.
        if let Some(idx) = index {
            let mut page_buf = Vec::with_capacity(geometry.page_size);
            let mut tag_buf = Vec::with_capacity(cent_per_page);
            for page_i in 0..cent_pages {
                page_buf.clear();
                tag_buf.clear();
                let base = page_i * cent_per_page as u64;
                let count = (idx.nlist() as u64 - base).min(cent_per_page as u64);
                for s in 0..count {
                    let c = (base + s) as usize;
                    let code = binarize(&idx.centroids()[c], quantizer)?;
                    page_buf.extend_from_slice(code.as_bytes());
                    tag_buf.push(idx.tag(c));
                }
                self.flash.write_extent(cent_first + page_i, 0, &page_buf);
                self.flash.set_oob(cent_first + page_i, &tag_buf);
            }
        }

        // Binary pages with their OOB link tables. Deployment order is the
        // permutation in `order`; each slot links back to its document (the
        // dataset index) and to its INT8 twin (the slot itself).
        {
            let mut page_buf = Vec::with_capacity(geometry.page_size);
            let mut oob_buf = Vec::with_capacity(link_table);
            for page_i in 0..bin_pages {
                page_buf.clear();
                oob_buf.clear();
                let base = page_i * bin_per_page as u64;
                let count = (n - base).min(bin_per_page as u64);
                for s in 0..count {
                    let slot = base + s;
                    let dataset = order[slot as usize];
                    let code = binarize(&vectors[dataset as usize], quantizer)?;
                    page_buf.extend_from_slice(code.as_bytes());
                    oob_buf.extend_from_slice(
                        &OobLinkRecord { dadr: dataset, radr: slot as u32 }.pack(),
                    );
                }
                self.flash.write_extent(bin_first + page_i, 0, &page_buf);
                self.flash.set_oob(bin_first + page_i, &oob_buf);
            }
        }

        // INT8 pages in the same slot order as the binary region.
        {
            let mut page_buf = Vec::with_capacity(geometry.page_size);
            for page_i in 0..int8_pages {
                page_buf.clear();
                let base = page_i * int8_per_page as u64;
                let count = (n - base).min(int8_per_page as u64);
                for s in 0..count {
                    let dataset = order[(base + s) as usize];
                    let code = quantize_int8(&vectors[dataset as usize], quantizer)?;
                    page_buf.extend_from_slice(code.as_code_bytes());
                }
                self.flash.write_extent(int8_first + page_i, 0, &page_buf);
            }
        }

        // Document slots in dataset order, exact bytes only.
        let mut doc_lens = Vec::with_capacity(documents.len());
        for (j, doc) in documents.iter().enumerate() {
            let page = doc_first + (j / docs_per_page) as u64;
            let offset = j % docs_per_page * doc_slot_bytes;
            self.flash.write_extent(page, offset, doc);
            doc_lens.push(doc.len() as u32);
        }

        // Cluster directory entries from the member spans.
        let centroid_region = index.map(|idx| Region {
            first_page: cent_first,
            pages: cent_pages,
            slots_per_page: cent_per_page,
            slot_bytes: emb_bytes,
            slots: idx.nlist() as u64,
            cell_mode: CellMode::Slc,
        });
        let mut rivf = Vec::with_capacity(spans.len());
        if let Some(region) = &centroid_region {
            for (c, &(first, last, tag)) in spans.iter().enumerate() {
                rivf.push(RivfEntry {
                    centroid_addr: region.addr_of_slot(c as u64)?,
                    first_emb_index: first,
                    last_emb_index: last,
                    tag,
                    reserved: 0,
                });
            }
        }

        let db = DeployedDatabase {
            db_id: self.next_db_id()?,
            dim,
            n,
            quantizer: quantizer.clone(),
            centroid_region,
            binary_region: Region {
                first_page: bin_first,
                pages: bin_pages,
                slots_per_page: bin_per_page,
                slot_bytes: emb_bytes,
                slots: n,
                cell_mode: CellMode::Slc,
            },
            int8_region: Region {
                first_page: int8_first,
                pages: int8_pages,
                slots_per_page: int8_per_page,
                slot_bytes: dim,
                slots: n,
                cell_mode: CellMode::Tlc,
            },
            doc_region: Region {
                first_page: doc_first,
                pages: doc_pages,
                slots_per_page: docs_per_page,
                slot_bytes: doc_slot_bytes,
                slots: n,
                cell_mode: CellMode::Tlc,
            },
            rivf,
            slot_to_dataset: order,
            doc_lens,
            doc_granularity: granularity,
        };
        let id = db.db_id;
        self.dbs.insert(id, db);
        Ok(id)
    }

    /// Restores a database from parts loaded off an image; used by the
    /// persistence layer. The caller provides the flash content separately.
    pub(crate) fn restore(&mut self, db: DeployedDatabase, next_free_page: u64) {
        self.next_free_page = self.next_free_page.max(next_free_page);
        self.dbs.insert(db.db_id, db);
    }

    pub(crate) fn flash_mut(&mut self) -> &mut FlashStore {
        &mut self.flash
    }
}
