//! Persistence: vector and document dataset files, and deployed-image
//! directories that capture a device's flash content and database
//! directory so a deployment can be reloaded byte-identically.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::layout::{DeployedDatabase, DocGranularity, Region, RivfEntry, SsdDevice, RIVF_ENTRY_BYTES};
use crate::vectordb::{Fp32Vector, QuantizerModel};
use crate::wire::{put_u32, Reader};
use crate::{Error, Result};

pub const VECTORS_MAGIC: &[u8; 4] = b"RVEC";
pub const PAGES_MAGIC: &[u8; 4] = b"RPGS";

/// Manifest file inside an image directory.
pub const MANIFEST_FILE: &str = "manifest.json";
/// Flash content file inside an image directory.
pub const PAGES_FILE: &str = "pages.bin";

/// Writes vectors as a 16-byte header (magic, u32 dimension, u64 count)
/// followed by row-major little-endian components.
pub fn save_vectors(path: &Path, vectors: &[Fp32Vector]) -> Result<()> {
    let first = vectors.first().ok_or(Error::EmptyInput("vectors"))?;
    let dim = first.dim();
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    w.write_all(VECTORS_MAGIC)?;
    w.write_all(&(dim as u32).to_le_bytes())?;
    w.write_all(&(vectors.len() as u64).to_le_bytes())?;
    for v in vectors {
        if v.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: v.dim() });
        }
        for c in v.as_slice() {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_vectors(path: &Path) -> Result<Vec<Fp32Vector>> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes, "vectors file");
    r.magic(VECTORS_MAGIC)?;
    let dim = r.u32()? as usize;
    let n = r.u64()? as usize;
    let mut vectors = Vec::with_capacity(n);
    for _ in 0..n {
        let components = (0..dim).map(|_| r.f32()).collect::<Result<Vec<f32>>>()?;
        vectors.push(Fp32Vector::new(components)?);
    }
    r.finish()?;
    Ok(vectors)
}

/// Writes chunks as repeated u32 little-endian length plus payload.
pub fn save_documents(path: &Path, documents: &[Vec<u8>]) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    for doc in documents {
        w.write_all(&(doc.len() as u32).to_le_bytes())?;
        w.write_all(doc)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_documents(path: &Path) -> Result<Vec<Vec<u8>>> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes, "documents file");
    let mut documents = Vec::new();
    while r.remaining() > 0 {
        let len = r.u32()? as usize;
        documents.push(r.take(len)?.to_vec());
    }
    Ok(documents)
}

#[derive(Debug, Serialize, Deserialize)]
struct DbManifest {
    db_id: u8,
    dim: usize,
    n: u64,
    doc_granularity: DocGranularity,
    centroid_region: Option<Region>,
    binary_region: Region,
    int8_region: Region,
    doc_region: Region,
    /// Packed directory entry, hex, for external tooling.
    rdb_entry_hex: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ImageManifest {
    format_version: u32,
    config: SimConfig,
    next_free_page: u64,
    databases: Vec<DbManifest>,
}

const FORMAT_VERSION: u32 = 1;

fn db_file(dir: &Path, db_id: u8, what: &str) -> std::path::PathBuf {
    dir.join(format!("db{db_id:03}.{what}"))
}

fn save_u32s(path: &Path, values: &[u32]) -> Result<()> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for &v in values {
        put_u32(&mut out, v);
    }
    Ok(fs::write(path, out)?)
}

fn load_u32s(path: &Path, expect: usize, what: &'static str) -> Result<Vec<u32>> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes, what);
    let values = (0..expect).map(|_| r.u32()).collect::<Result<Vec<u32>>>()?;
    r.finish()?;
    Ok(values)
}

/// Saves the device's configuration, database directory, and every written
/// page (extents and OOB areas) into a directory. Output bytes are a pure
/// function of the device state.
pub fn save_device(device: &SsdDevice, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut databases = Vec::new();
    let mut next_free_page = 0u64;
    for db in device.databases() {
        let last = db.doc_region.last_page() + 1;
        next_free_page = next_free_page.max(last);
        databases.push(DbManifest {
            db_id: db.db_id,
            dim: db.dim,
            n: db.n,
            doc_granularity: db.doc_granularity,
            centroid_region: db.centroid_region,
            binary_region: db.binary_region,
            int8_region: db.int8_region,
            doc_region: db.doc_region,
            rdb_entry_hex: hex(&db.rdb_entry().pack()),
        });
        fs::write(db_file(dir, db.db_id, "quantizer.rqnt"), db.quantizer.to_bytes())?;
        let mut rivf = Vec::with_capacity(db.rivf.len() * RIVF_ENTRY_BYTES);
        for e in &db.rivf {
            rivf.extend_from_slice(&e.pack());
        }
        fs::write(db_file(dir, db.db_id, "rivf.bin"), rivf)?;
        save_u32s(&db_file(dir, db.db_id, "slot_map.bin"), &db.slot_to_dataset)?;
        save_u32s(&db_file(dir, db.db_id, "doc_lens.bin"), &db.doc_lens)?;
    }
    let manifest = ImageManifest {
        format_version: FORMAT_VERSION,
        config: device.config().clone(),
        next_free_page,
        databases,
    };
    let manifest_json = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| Error::format("image manifest", e.to_string()))?;
    fs::write(dir.join(MANIFEST_FILE), manifest_json)?;

    let mut w = std::io::BufWriter::new(fs::File::create(dir.join(PAGES_FILE))?);
    let ids = device.flash().page_ids();
    w.write_all(PAGES_MAGIC)?;
    w.write_all(&(ids.len() as u64).to_le_bytes())?;
    for id in ids {
        let image = device.flash().page(id).expect("listed page exists");
        w.write_all(&id.to_le_bytes())?;
        let extents: Vec<(usize, &[u8])> = image.extents().collect();
        w.write_all(&(extents.len() as u32).to_le_bytes())?;
        for (offset, bytes) in extents {
            w.write_all(&(offset as u32).to_le_bytes())?;
            w.write_all(&(bytes.len() as u32).to_le_bytes())?;
            w.write_all(bytes)?;
        }
        match image.oob() {
            Some(oob) => {
                w.write_all(&(oob.len() as u32).to_le_bytes())?;
                w.write_all(oob)?;
            }
            None => w.write_all(&u32::MAX.to_le_bytes())?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Reloads a directory written by [`save_device`].
pub fn load_device(dir: &Path) -> Result<SsdDevice> {
    let manifest_bytes = fs::read(dir.join(MANIFEST_FILE))?;
    let manifest: ImageManifest = serde_json::from_slice(&manifest_bytes)
        .map_err(|e| Error::format("image manifest", e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::format("image manifest", "unsupported format version"));
    }
    let mut device = SsdDevice::new(manifest.config)?;
    let geometry = device.geometry().clone();

    let bytes = fs::read(dir.join(PAGES_FILE))?;
    let mut r = Reader::new(&bytes, "image pages");
    r.magic(PAGES_MAGIC)?;
    let count = r.u64()?;
    for _ in 0..count {
        let page = r.u64()?;
        if page >= geometry.total_pages() {
            return Err(Error::AddressOutOfRange(page));
        }
        let extent_count = r.u32()?;
        for _ in 0..extent_count {
            let offset = r.u32()? as usize;
            let len = r.u32()? as usize;
            if offset + len > geometry.page_size {
                return Err(Error::format("image pages", "extent beyond page end"));
            }
            let data = r.take(len)?;
            device.flash_mut().write_extent(page, offset, data);
        }
        let oob_len = r.u32()?;
        if oob_len != u32::MAX {
            if oob_len as usize > geometry.oob_size {
                return Err(Error::format("image pages", "OOB area beyond geometry"));
            }
            let oob = r.take(oob_len as usize)?;
            device.flash_mut().set_oob(page, oob);
        }
    }
    r.finish()?;

    for dbm in manifest.databases {
        let quantizer =
            QuantizerModel::from_bytes(&fs::read(db_file(dir, dbm.db_id, "quantizer.rqnt"))?)?;
        let rivf_bytes = fs::read(db_file(dir, dbm.db_id, "rivf.bin"))?;
        if rivf_bytes.len() % RIVF_ENTRY_BYTES != 0 {
            return Err(Error::format("cluster directory", "not a whole number of entries"));
        }
        let rivf = rivf_bytes
            .chunks_exact(RIVF_ENTRY_BYTES)
            .map(|c| RivfEntry::unpack(c.try_into().unwrap()))
            .collect::<Result<Vec<_>>>()?;
        let slot_to_dataset =
            load_u32s(&db_file(dir, dbm.db_id, "slot_map.bin"), dbm.n as usize, "slot map")?;
        let doc_lens =
            load_u32s(&db_file(dir, dbm.db_id, "doc_lens.bin"), dbm.n as usize, "chunk lengths")?;
        if quantizer.dim() != dbm.dim {
            return Err(Error::DimensionMismatch { expected: dbm.dim, got: quantizer.dim() });
        }
        let db = DeployedDatabase {
            db_id: dbm.db_id,
            dim: dbm.dim,
            n: dbm.n,
            quantizer,
            centroid_region: dbm.centroid_region,
            binary_region: dbm.binary_region,
            int8_region: dbm.int8_region,
            doc_region: dbm.doc_region,
            rivf,
            slot_to_dataset,
            doc_lens,
            doc_granularity: dbm.doc_granularity,
        };
        device.restore(db, manifest.next_free_page);
    }
    Ok(device)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
