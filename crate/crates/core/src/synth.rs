//! Synthetic clustered workloads: Gaussian blobs for vectors and queries,
//! plus deterministic filler documents. Desk-scale stand-ins for the text
//! corpora a production deployment would embed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::vectordb::Fp32Vector;
use crate::{Error, Result};

// Distinct RNG streams derived from one user seed, so datasets and queries
// are independent draws around the same blob centers.
const POINT_STREAM: u64 = 0x706f_696e_7473;
const QUERY_STREAM: u64 = 0x7175_6572_6965;

/// Shape of a synthetic clustered dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSpec {
    pub n: usize,
    pub dim: usize,
    pub blobs: usize,
    pub seed: u64,
    /// Within-blob standard deviation, in thousandths (350 = 0.35). Kept
    /// integral so the spec stays hashable and exact in configs.
    pub cluster_std_milli: u32,
}

impl SynthSpec {
    pub fn new(n: usize, dim: usize, blobs: usize, seed: u64) -> Self {
        SynthSpec { n, dim, blobs, seed, cluster_std_milli: 350 }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.dim == 0 || self.blobs == 0 {
            return Err(Error::InvalidParam(
                "synthetic spec needs positive n, dim, and blob count".into(),
            ));
        }
        Ok(())
    }

    fn std(&self) -> f64 {
        f64::from(self.cluster_std_milli) / 1000.0
    }
}

fn blob_centers(spec: &SynthSpec) -> Vec<Vec<f64>> {
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    (0..spec.blobs)
        .map(|_| (0..spec.dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

fn draw(centers: &[Vec<f64>], std: f64, count: usize, rng: &mut ChaCha12Rng) -> Result<Vec<Fp32Vector>> {
    // Round-robin blob assignment keeps every blob populated, so a coarse
    // index trained on the draw never sees a vanishing cluster.
    (0..count)
        .map(|i| {
            let center = &centers[i % centers.len()];
            let v = center
                .iter()
                .map(|&c| (c + std * rng.sample::<f64, _>(StandardNormal)) as f32)
                .collect();
            Fp32Vector::new(v)
        })
        .collect()
}

/// Draws `spec.n` vectors around `spec.blobs` Gaussian centers.
pub fn clustered_vectors(spec: &SynthSpec) -> Result<Vec<Fp32Vector>> {
    spec.validate()?;
    let centers = blob_centers(spec);
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed ^ POINT_STREAM);
    draw(&centers, spec.std(), spec.n, &mut rng)
}

/// Draws `count` query vectors around the same centers as the dataset, from
/// an independent stream.
pub fn clustered_queries(spec: &SynthSpec, count: usize) -> Result<Vec<Fp32Vector>> {
    spec.validate()?;
    if count == 0 {
        return Err(Error::EmptyInput("queries"));
    }
    let centers = blob_centers(spec);
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed ^ QUERY_STREAM);
    draw(&centers, spec.std(), count, &mut rng)
}

/// Deterministic filler documents: an index header followed by lowercase
/// filler, with lengths drawn uniformly from `min_len..=max_len`.
pub fn synthetic_documents(n: usize, min_len: usize, max_len: usize, seed: u64) -> Result<Vec<Vec<u8>>> {
    if min_len == 0 || min_len > max_len {
        return Err(Error::InvalidParam(format!(
            "document lengths need 1 <= min <= max, got {min_len}..={max_len}"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|i| {
            let len = rng.gen_range(min_len..=max_len);
            let mut doc = format!("doc {i:08} ").into_bytes();
            doc.truncate(len);
            let phase = rng.gen_range(0..26usize);
            while doc.len() < len {
                doc.push(b'a' + ((phase + doc.len()) % 26) as u8);
            }
            doc
        })
        .collect())
}
