//! Dataset manifests: a small JSON file recording what a workload is made
//! of and where its pieces live, so later commands take one path instead
//! of four.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use reis_core::host::{exact_ground_truth, GroundTruth};
use reis_core::image;
use reis_core::synth::{clustered_queries, clustered_vectors, synthetic_documents, SynthSpec};

use crate::Global;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub name: String,
    pub dim: usize,
    pub n_vectors: usize,
    pub vectors: PathBuf,
    pub documents: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queries: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).with_context(|| format!("writing manifest {}", path.display()))?;
        Ok(())
    }

    /// Loads a manifest and resolves relative file paths against the
    /// manifest's own directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        let mut manifest: DatasetManifest =
            serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
        if manifest.format_version != MANIFEST_VERSION {
            bail!(
                "manifest {} has format version {}, this build reads {}",
                path.display(),
                manifest.format_version,
                MANIFEST_VERSION
            );
        }
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        resolve(&mut manifest.vectors);
        resolve(&mut manifest.documents);
        if let Some(q) = &mut manifest.queries {
            resolve(q);
        }
        if let Some(g) = &mut manifest.ground_truth {
            resolve(g);
        }
        Ok(manifest)
    }
}

#[derive(Args)]
pub struct GenerateArgs {
    /// Base name for the generated files.
    #[arg(long, default_value = "synthetic")]
    name: String,

    /// Number of dataset vectors.
    #[arg(long)]
    n: usize,

    /// Vector dimensionality.
    #[arg(long)]
    dim: usize,

    /// Number of Gaussian blobs the vectors are drawn from.
    #[arg(long)]
    clusters: usize,

    /// Within-blob standard deviation, in thousandths.
    #[arg(long, default_value_t = 350)]
    spread: u32,

    /// Number of held-out query vectors.
    #[arg(long, default_value_t = 0)]
    queries: usize,

    /// Also write exact ground truth at this depth (requires --queries).
    #[arg(long, default_value_t = 0)]
    truth_k: usize,

    /// Shortest document, in bytes.
    #[arg(long, default_value_t = 48)]
    doc_min: usize,

    /// Longest document, in bytes.
    #[arg(long, default_value_t = 160)]
    doc_max: usize,
}

pub fn generate(global: &Global, args: &GenerateArgs) -> Result<()> {
    if args.truth_k > 0 && args.queries == 0 {
        bail!("--truth-k requires --queries");
    }
    let out = global.out_dir()?;
    let spec = SynthSpec {
        n: args.n,
        dim: args.dim,
        blobs: args.clusters,
        seed: global.seed,
        cluster_std_milli: args.spread,
    };
    let vectors = clustered_vectors(&spec)?;
    let documents = synthetic_documents(args.n, args.doc_min, args.doc_max, global.seed ^ 1)?;

    let vectors_file = format!("{}.vectors.rvec", args.name);
    let documents_file = format!("{}.documents.bin", args.name);
    image::save_vectors(&out.join(&vectors_file), &vectors)?;
    image::save_documents(&out.join(&documents_file), &documents)?;

    let mut queries_file = None;
    let mut truth_file = None;
    if args.queries > 0 {
        let queries = clustered_queries(&spec, args.queries)?;
        let file = format!("{}.queries.rvec", args.name);
        image::save_vectors(&out.join(&file), &queries)?;
        if args.truth_k > 0 {
            let truth = exact_ground_truth(&vectors, &queries, args.truth_k)?;
            let tf = format!("{}.truth.rgtk", args.name);
            truth.save(&out.join(&tf))?;
            truth_file = Some(PathBuf::from(tf));
        }
        queries_file = Some(PathBuf::from(file));
    }

    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        name: args.name.clone(),
        dim: args.dim,
        n_vectors: args.n,
        vectors: PathBuf::from(vectors_file),
        documents: PathBuf::from(documents_file),
        queries: queries_file,
        ground_truth: truth_file,
    };
    let manifest_path = out.join(format!("{}.manifest.json", args.name));
    manifest.save(&manifest_path)?;
    println!("wrote {} vectors of dim {}", args.n, args.dim);
    println!("manifest: {}", manifest_path.display());
    Ok(())
}

#[derive(Args)]
pub struct IngestArgs {
    /// Name recorded in the manifest.
    #[arg(long, default_value = "dataset")]
    name: String,

    /// Vector file (RVEC).
    #[arg(long)]
    vectors: PathBuf,

    /// Document file (RPGS).
    #[arg(long)]
    documents: PathBuf,

    /// Optional query vector file (RVEC).
    #[arg(long)]
    queries: Option<PathBuf>,

    /// Optional exact ground-truth file (RGTK).
    #[arg(long)]
    ground_truth: Option<PathBuf>,
}

/// Validates the files against each other and against the device geometry,
/// then writes a manifest pointing at them (paths made absolute, so the
/// manifest works from any directory).
pub fn ingest(global: &Global, args: &IngestArgs) -> Result<()> {
    let config = global.sim_config()?;
    let vectors = image::load_vectors(&args.vectors)?;
    if vectors.is_empty() {
        bail!("{} holds no vectors", args.vectors.display());
    }
    let dim = vectors[0].dim();
    let documents = image::load_documents(&args.documents)?;
    if documents.len() != vectors.len() {
        bail!(
            "{} documents for {} vectors; each vector needs exactly one document",
            documents.len(),
            vectors.len()
        );
    }
    for (i, doc) in documents.iter().enumerate() {
        if doc.len() > config.geometry.page_size {
            bail!(
                "document {i} is {} bytes, larger than the {}-byte page",
                doc.len(),
                config.geometry.page_size
            );
        }
    }

    let mut n_queries = 0;
    if let Some(path) = &args.queries {
        let queries = image::load_vectors(path)?;
        if queries.is_empty() {
            bail!("{} holds no queries", path.display());
        }
        if queries[0].dim() != dim {
            bail!("query dim {} does not match dataset dim {dim}", queries[0].dim());
        }
        n_queries = queries.len();
    }
    if let Some(path) = &args.ground_truth {
        if args.queries.is_none() {
            bail!("--ground-truth requires --queries");
        }
        let truth = GroundTruth::load(path)?;
        if truth.ids.len() != n_queries {
            bail!(
                "ground truth covers {} queries, query file holds {n_queries}",
                truth.ids.len()
            );
        }
        for ids in &truth.ids {
            if let Some(&bad) = ids.iter().find(|&&id| id as usize >= vectors.len()) {
                bail!("ground truth names vector {bad}, dataset holds {}", vectors.len());
            }
        }
    }

    let absolute = |p: &Path| -> Result<PathBuf> {
        fs::canonicalize(p).with_context(|| format!("resolving {}", p.display()))
    };
    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        name: args.name.clone(),
        dim,
        n_vectors: vectors.len(),
        vectors: absolute(&args.vectors)?,
        documents: absolute(&args.documents)?,
        queries: args.queries.as_deref().map(&absolute).transpose()?,
        ground_truth: args.ground_truth.as_deref().map(&absolute).transpose()?,
    };
    let manifest_path = global.out_dir()?.join(format!("{}.manifest.json", args.name));
    manifest.save(&manifest_path)?;
    println!("validated {} vectors of dim {dim}", vectors.len());
    println!("manifest: {}", manifest_path.display());
    Ok(())
}
