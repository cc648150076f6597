//! Deployment: train the quantizer (and optionally the coarse index) from a
//! manifest, pack everything onto a simulated drive, and persist the device
//! image.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use reis_core::image;
use reis_core::ivf::{build_index, default_nlist, KmeansParams};
use reis_core::layout::{DeployOptions, SsdDevice};
use reis_core::vectordb::train_quantizer;
use sha2::{Digest, Sha256};

use crate::manifest::DatasetManifest;
use crate::Global;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// One region scanned in full by every query.
    Flat,
    /// Cluster directory probed per query.
    Ivf,
}

#[derive(Args)]
pub struct DeployArgs {
    /// Dataset manifest to deploy.
    #[arg(long)]
    manifest: PathBuf,

    #[arg(long, value_enum, default_value_t = Mode::Ivf)]
    mode: Mode,

    /// Cluster count for ivf mode; 0 picks a size-based default.
    #[arg(long, default_value_t = 0)]
    nlist: usize,

    /// Image directory; defaults to <out>/image.
    #[arg(long)]
    image: Option<PathBuf>,
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest over the image files, names then contents, in name order.
/// Identical deployments hash identically.
pub fn image_hash(dir: &Path) -> Result<String> {
    let mut names: Vec<String> = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    let mut hasher = Sha256::new();
    for name in &names {
        hasher.update(name.as_bytes());
        hasher.update([0u8]);
        hasher.update(fs::read(dir.join(name))?);
    }
    Ok(hex(&hasher.finalize()))
}

pub fn run(global: &Global, args: &DeployArgs) -> Result<()> {
    let manifest = DatasetManifest::load(&args.manifest)?;
    let vectors = image::load_vectors(&manifest.vectors)?;
    let documents = image::load_documents(&manifest.documents)?;
    let config = global.sim_config()?;
    let preset = config.preset.clone();

    let quantizer = train_quantizer(&vectors)?;
    let mut device = SsdDevice::new(config)?;
    let db_id = match args.mode {
        Mode::Flat => device.deploy_flat(&vectors, &documents, &quantizer, DeployOptions::default())?,
        Mode::Ivf => {
            let nlist = if args.nlist == 0 { default_nlist(vectors.len()) } else { args.nlist };
            let index = build_index(&vectors, &KmeansParams::new(nlist, global.seed))?;
            device.deploy_ivf(&vectors, &documents, &index, &quantizer, DeployOptions::default())?
        }
    };

    let dir = match &args.image {
        Some(dir) => dir.clone(),
        None => global.out_dir()?.join("image"),
    };
    image::save_device(&device, &dir)?;

    let db = device.database(db_id)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "preset: {preset}")?;
    writeln!(out, "database {db_id} directory entry: {}", hex(&db.rdb_entry().pack()))?;
    for (cluster, entry) in db.rivf.iter().enumerate() {
        writeln!(out, "cluster {cluster} entry: {}", hex(&entry.pack()))?;
    }
    writeln!(out, "image sha256: {}", image_hash(&dir)?)?;
    writeln!(out, "image: {}", dir.display())?;
    Ok(())
}
