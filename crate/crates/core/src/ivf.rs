//! Coarse clustering for inverted-file search: seeded k-means over the FP32
//! vectors and the resulting cluster membership index.
//!
//! Training runs on the full-precision data; centroids are binarized later,
//! at deployment time, alongside the database vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::vectordb::{fp32_squared_l2_slices, Fp32Vector};
use crate::wire::{put_f32, put_u32, Reader};
use crate::{Error, Result};

/// Magic prefix of a serialized [`IvfIndex`].
pub const INDEX_MAGIC: &[u8; 4] = b"RIVF";

/// Cluster count heuristic: `round(sqrt(n))`, clamped to `[1, n]`.
pub fn default_nlist(n: usize) -> usize {
    (n as f64).sqrt().round().max(1.0) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansParams {
    pub nlist: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// Relative centroid-shift threshold that stops Lloyd's iterations.
    pub tolerance: f64,
    /// Training subsample cap per centroid; 0 trains on every vector.
    pub max_training_points_per_centroid: usize,
}

impl KmeansParams {
    pub fn new(nlist: usize, seed: u64) -> Self {
        KmeansParams {
            nlist,
            max_iters: 25,
            seed,
            tolerance: 1e-4,
            max_training_points_per_centroid: 256,
        }
    }
}

/// Coarse index: centroids plus the members of each cluster. Memberships
/// partition the dataset; members are listed in ascending dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct IvfIndex {
    dim: usize,
    centroids: Vec<Fp32Vector>,
    assignments: Vec<u32>,
    members: Vec<Vec<u32>>,
}

impl IvfIndex {
    pub fn new(centroids: Vec<Fp32Vector>, assignments: Vec<u32>) -> Result<Self> {
        if centroids.is_empty() {
            return Err(Error::EmptyInput("centroids"));
        }
        let dim = centroids[0].dim();
        for c in &centroids {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: c.dim() });
            }
        }
        let nlist = centroids.len();
        let mut members = vec![Vec::new(); nlist];
        for (i, &a) in assignments.iter().enumerate() {
            let a = a as usize;
            if a >= nlist {
                return Err(Error::InvalidParam(format!("assignment {a} out of range for nlist {nlist}")));
            }
            members[a].push(i as u32);
        }
        Ok(IvfIndex { dim, centroids, assignments, members })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nlist(&self) -> usize {
        self.centroids.len()
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn centroids(&self) -> &[Fp32Vector] {
        &self.centroids
    }

    pub fn assignments(&self) -> &[u32] {
        &self.assignments
    }

    pub fn members(&self, cluster: usize) -> &[u32] {
        &self.members[cluster]
    }

    /// Cluster tag byte: the cluster id truncated to 8 bits.
    pub fn tag(&self, cluster: usize) -> u8 {
        (cluster % 256) as u8
    }

    /// Serializes as magic, u32 dimensionality, u32 nlist, centroid block,
    /// then per cluster a u32 member count and the member ids, little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(INDEX_MAGIC);
        put_u32(&mut out, self.dim as u32);
        put_u32(&mut out, self.nlist() as u32);
        for c in &self.centroids {
            for &x in c.as_slice() {
                put_f32(&mut out, x);
            }
        }
        for m in &self.members {
            put_u32(&mut out, m.len() as u32);
            for &i in m {
                put_u32(&mut out, i);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "ivf index");
        r.magic(INDEX_MAGIC)?;
        let dim = r.u32()? as usize;
        let nlist = r.u32()? as usize;
        if dim == 0 || dim % 8 != 0 || nlist == 0 {
            return Err(Error::format("ivf index", "bad dimensionality or cluster count"));
        }
        let mut centroids = Vec::with_capacity(nlist);
        for _ in 0..nlist {
            let mut c = Vec::with_capacity(dim);
            for _ in 0..dim {
                c.push(r.f32()?);
            }
            centroids.push(Fp32Vector::new(c).map_err(|e| Error::format("ivf index", e.to_string()))?);
        }
        let mut members = Vec::with_capacity(nlist);
        let mut total = 0usize;
        for _ in 0..nlist {
            let count = r.u32()? as usize;
            let mut m = Vec::with_capacity(count);
            for _ in 0..count {
                m.push(r.u32()?);
            }
            total += count;
            members.push(m);
        }
        r.finish()?;
        let mut assignments = vec![u32::MAX; total];
        for (c, m) in members.iter().enumerate() {
            for &i in m {
                let slot = assignments
                    .get_mut(i as usize)
                    .ok_or_else(|| Error::format("ivf index", format!("member id {i} out of range")))?;
                if *slot != u32::MAX {
                    return Err(Error::format("ivf index", format!("member id {i} listed twice")));
                }
                *slot = c as u32;
            }
        }
        IvfIndex::new(centroids, assignments)
    }
}

/// Assigns each vector to its nearest centroid by squared L2; distance ties
/// go to the lower cluster id.
pub fn assign_clusters(vectors: &[Fp32Vector], centroids: &[Fp32Vector]) -> Result<Vec<u32>> {
    if centroids.is_empty() {
        return Err(Error::EmptyInput("centroids"));
    }
    let dim = centroids[0].dim();
    for v in vectors.iter().chain(centroids) {
        if v.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: v.dim() });
        }
    }
    Ok(vectors.par_iter().map(|v| nearest_centroid(v.as_slice(), centroids).0 as u32).collect())
}

fn nearest_centroid(v: &[f32], centroids: &[Fp32Vector]) -> (usize, f64) {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = fp32_squared_l2_slices(v, c.as_slice());
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    (best, best_d)
}

/// Trains `nlist` centroids with k-means++ seeding and Lloyd's iterations.
/// Deterministic for a given seed. Clusters left empty by an update step are
/// reseeded on the point farthest from its current centroid.
pub fn kmeans_train(vectors: &[Fp32Vector], params: &KmeansParams) -> Result<Vec<Fp32Vector>> {
    if vectors.is_empty() {
        return Err(Error::EmptyInput("training vectors"));
    }
    let dim = vectors[0].dim();
    for v in vectors {
        if v.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: v.dim() });
        }
    }
    if params.nlist == 0 || params.nlist > vectors.len() {
        return Err(Error::InvalidParam(format!(
            "nlist {} outside 1..={}",
            params.nlist,
            vectors.len()
        )));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(params.seed);

    // Optional subsample for training only; assignment over the full set is
    // the caller's job and uses the returned centroids.
    let cap = params.max_training_points_per_centroid;
    let sample: Vec<&Fp32Vector> = if cap > 0 && vectors.len() > cap * params.nlist {
        let mut idx = rand::seq::index::sample(&mut rng, vectors.len(), cap * params.nlist).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| &vectors[i]).collect()
    } else {
        vectors.iter().collect()
    };

    let mut centroids = seed_plus_plus(&sample, params.nlist, &mut rng);
    let mut prev_wcss = f64::INFINITY;

    for _iter in 0..params.max_iters {
        // Assignment step.
        let assignments: Vec<(usize, f64)> = sample
            .par_iter()
            .map(|v| nearest_centroid(v.as_slice(), &centroids))
            .collect();
        let wcss: f64 = assignments.iter().map(|(_, d)| d).sum();
        debug_assert!(
            wcss <= prev_wcss * (1.0 + 1e-9) + 1e-9,
            "objective rose from {prev_wcss} to {wcss}"
        );
        prev_wcss = wcss;

        // Update step: per-cluster means accumulated in f64, index order.
        let mut sums = vec![vec![0.0f64; dim]; params.nlist];
        let mut counts = vec![0usize; params.nlist];
        for (v, &(a, _)) in sample.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, &x) in sums[a].iter_mut().zip(v.as_slice()) {
                *s += x as f64;
            }
        }
        let mut shift = 0.0f64;
        let mut norm = 0.0f64;
        let mut moved: Vec<Fp32Vector> = Vec::with_capacity(params.nlist);
        for (c, (sum, &count)) in centroids.iter().zip(sums.iter().zip(&counts)) {
            if count == 0 {
                moved.push(c.clone());
                continue;
            }
            let mean: Vec<f32> = sum.iter().map(|s| (s / count as f64) as f32).collect();
            shift += fp32_squared_l2_slices(c.as_slice(), &mean);
            norm += mean.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>();
            moved.push(Fp32Vector::new(mean)?);
        }
        centroids = moved;

        // Empty-cluster repair: reseed on the point farthest from its own
        // centroid; ties break to the lowest point index.
        let mut repaired = false;
        let mut taken: Vec<usize> = Vec::new();
        for cluster in 0..params.nlist {
            if counts[cluster] > 0 {
                continue;
            }
            let mut far_idx = usize::MAX;
            let mut far_d = -1.0f64;
            for (i, &(_, d)) in assignments.iter().enumerate() {
                if d > far_d && !taken.contains(&i) {
                    far_d = d;
                    far_idx = i;
                }
            }
            if far_idx != usize::MAX {
                centroids[cluster] = sample[far_idx].clone();
                taken.push(far_idx);
                repaired = true;
            }
        }
        if repaired {
            // The reseeded centroids invalidate the running objective.
            prev_wcss = f64::INFINITY;
            continue;
        }

        let rel_shift = (shift / norm.max(f64::MIN_POSITIVE)).sqrt();
        if rel_shift <= params.tolerance {
            break;
        }
    }
    Ok(centroids)
}

/// k-means++ seeding over `sample`: first pick uniform, then proportional to
/// squared distance from the nearest chosen centroid.
fn seed_plus_plus(sample: &[&Fp32Vector], nlist: usize, rng: &mut ChaCha12Rng) -> Vec<Fp32Vector> {
    let mut centroids: Vec<Fp32Vector> = Vec::with_capacity(nlist);
    let first = rng.gen_range(0..sample.len());
    centroids.push(sample[first].clone());

    let mut dist2 = vec![0.0f64; sample.len()];
    for (d, v) in dist2.iter_mut().zip(sample) {
        *d = fp32_squared_l2_slices(v.as_slice(), centroids[0].as_slice());
    }

    while centroids.len() < nlist {
        let total: f64 = dist2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut chosen = sample.len() - 1;
            for (i, &d) in dist2.iter().enumerate() {
                if r < d {
                    chosen = i;
                    break;
                }
                r -= d;
            }
            chosen
        } else {
            // All remaining points coincide with a centroid.
            rng.gen_range(0..sample.len())
        };
        centroids.push(sample[pick].clone());
        for (d, v) in dist2.iter_mut().zip(sample) {
            let nd = fp32_squared_l2_slices(v.as_slice(), centroids.last().unwrap().as_slice());
            if nd < *d {
                *d = nd;
            }
        }
    }
    centroids
}

/// Trains centroids and assigns every vector: the full index build.
pub fn build_index(vectors: &[Fp32Vector], params: &KmeansParams) -> Result<IvfIndex> {
    let centroids = kmeans_train(vectors, params)?;
    let assignments = assign_clusters(vectors, &centroids)?;
    IvfIndex::new(centroids, assignments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn vecf(components: &[f32]) -> Fp32Vector {
        Fp32Vector::new(components.to_vec()).unwrap()
    }

    fn pad8(x: f32, y: f32) -> Fp32Vector {
        let mut v = vec![0.0f32; 8];
        v[0] = x;
        v[1] = y;
        Fp32Vector::new(v).unwrap()
    }

    fn blob(rng: &mut impl Rng, center: &[f32], spread: f32, n: usize) -> Vec<Fp32Vector> {
        (0..n)
            .map(|_| {
                Fp32Vector::new(
                    center
                        .iter()
                        .map(|&c| c + rng.gen_range(-spread..spread))
                        .collect(),
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn default_nlist_examples() {
        assert_eq!(default_nlist(1), 1);
        assert_eq!(default_nlist(2), 1);
        assert_eq!(default_nlist(3), 2);
        assert_eq!(default_nlist(10_000), 100);
        assert_eq!(default_nlist(41_500_000), 6442);
    }

    #[test]
    fn four_corner_points_become_their_own_centroids() {
        let pts = vec![pad8(0.0, 0.0), pad8(0.0, 1.0), pad8(1.0, 0.0), pad8(1.0, 1.0)];
        let centroids = kmeans_train(&pts, &KmeansParams::new(4, 7)).unwrap();
        let mut got: Vec<(u32, u32)> = centroids
            .iter()
            .map(|c| (c.as_slice()[0] as u32, c.as_slice()[1] as u32))
            .collect();
        got.sort_unstable();
        assert_eq!(got, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = vec![pad8(0.0, 0.0), pad8(2.0, 4.0), pad8(4.0, 2.0)];
        let centroids = kmeans_train(&pts, &KmeansParams::new(1, 7)).unwrap();
        assert_eq!(centroids.len(), 1);
        assert!((centroids[0].as_slice()[0] - 2.0).abs() < 1e-6);
        assert!((centroids[0].as_slice()[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn two_blobs_are_recovered() {
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let mut pts = blob(&mut rng, &[2.0; 8], 0.25, 100);
        pts.extend(blob(&mut rng, &[-2.0; 8], 0.25, 100));
        let centroids = kmeans_train(&pts, &KmeansParams::new(2, 7)).unwrap();
        let mut firsts: Vec<f32> = centroids.iter().map(|c| c.as_slice()[0]).collect();
        firsts.sort_by(f32::total_cmp);
        assert!((firsts[0] + 2.0).abs() < 0.5, "low blob at {}", firsts[0]);
        assert!((firsts[1] - 2.0).abs() < 0.5, "high blob at {}", firsts[1]);
    }

    #[test]
    fn assignment_ties_take_the_lower_id() {
        let centroids = vec![pad8(-1.0, 0.0), pad8(1.0, 0.0), pad8(-1.0, 0.0)];
        // The origin is equidistant from all three.
        let a = assign_clusters(&[pad8(0.0, 0.0)], &centroids).unwrap();
        assert_eq!(a, vec![0]);
        // A point sitting on a centroid picks it.
        let b = assign_clusters(&[pad8(1.0, 0.0)], &centroids).unwrap();
        assert_eq!(b, vec![1]);
    }

    #[test]
    fn assignment_matches_brute_force_argmin() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let pts = blob(&mut rng, &[0.0; 8], 3.0, 200);
        let centroids = blob(&mut rng, &[0.0; 8], 3.0, 7);
        let got = assign_clusters(&pts, &centroids).unwrap();
        for (v, &a) in pts.iter().zip(&got) {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (i, c) in centroids.iter().enumerate() {
                let d = crate::vectordb::fp32_squared_l2(v, c).unwrap();
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            assert_eq!(a as usize, best);
        }
    }

    #[test]
    fn build_index_partitions_the_dataset() {
        let mut rng = ChaCha12Rng::seed_from_u64(43);
        let mut pts = Vec::new();
        for c in 0..4 {
            pts.extend(blob(&mut rng, &[3.0 * c as f32; 8], 0.3, 64));
        }
        let index = build_index(&pts, &KmeansParams::new(4, 9)).unwrap();
        assert_eq!(index.len(), 256);
        assert_eq!(index.nlist(), 4);
        let mut seen = vec![false; 256];
        for c in 0..index.nlist() {
            assert!(!index.members(c).is_empty());
            assert!(index.members(c).windows(2).all(|w| w[0] < w[1]));
            for &m in index.members(c) {
                assert!(!seen[m as usize], "vector {m} in two clusters");
                seen[m as usize] = true;
                assert_eq!(index.assignments()[m as usize] as usize, c);
            }
            assert_eq!(index.tag(c), c as u8);
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(index.tag(300), 44);
    }

    #[test]
    fn duplicate_points_do_not_break_training() {
        let pts = vec![pad8(0.0, 0.0); 6]
            .into_iter()
            .chain(vec![pad8(5.0, 5.0); 2])
            .collect::<Vec<_>>();
        let index = build_index(&pts, &KmeansParams::new(3, 1)).unwrap();
        assert_eq!(index.nlist(), 3);
        let total: usize = (0..3).map(|c| index.members(c).len()).sum();
        assert_eq!(total, 8);
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let mut rng = ChaCha12Rng::seed_from_u64(44);
        let pts = blob(&mut rng, &[0.0; 16], 2.0, 300);
        let a = kmeans_train(&pts, &KmeansParams::new(5, 123)).unwrap();
        let b = kmeans_train(&pts, &KmeansParams::new(5, 123)).unwrap();
        assert_eq!(a, b);
        let idx1 = build_index(&pts, &KmeansParams::new(5, 123)).unwrap();
        let idx2 = build_index(&pts, &KmeansParams::new(5, 123)).unwrap();
        assert_eq!(idx1.to_bytes(), idx2.to_bytes());
    }

    #[test]
    fn training_subsample_still_covers_blobs() {
        let mut rng = ChaCha12Rng::seed_from_u64(45);
        let mut pts = blob(&mut rng, &[4.0; 8], 0.3, 3000);
        pts.extend(blob(&mut rng, &[-4.0; 8], 0.3, 3000));
        let mut params = KmeansParams::new(2, 5);
        params.max_training_points_per_centroid = 64;
        let centroids = kmeans_train(&pts, &params).unwrap();
        let mut firsts: Vec<f32> = centroids.iter().map(|c| c.as_slice()[0]).collect();
        firsts.sort_by(f32::total_cmp);
        assert!((firsts[0] + 4.0).abs() < 0.5);
        assert!((firsts[1] - 4.0).abs() < 0.5);
    }

    #[test]
    fn kmeans_rejects_bad_params() {
        let pts = vec![pad8(0.0, 0.0), pad8(1.0, 1.0)];
        assert!(kmeans_train(&pts, &KmeansParams::new(0, 1)).is_err());
        assert!(kmeans_train(&pts, &KmeansParams::new(3, 1)).is_err());
        assert!(kmeans_train(&[], &KmeansParams::new(1, 1)).is_err());
    }

    #[test]
    fn index_round_trips_through_bytes() {
        let mut rng = ChaCha12Rng::seed_from_u64(46);
        let pts = blob(&mut rng, &[0.0; 8], 2.0, 100);
        let index = build_index(&pts, &KmeansParams::new(6, 3)).unwrap();
        let bytes = index.to_bytes();
        assert_eq!(&bytes[..4], INDEX_MAGIC);
        let back = IvfIndex::from_bytes(&bytes).unwrap();
        assert_eq!(index, back);
    }

    #[test]
    fn index_rejects_corruption() {
        let pts = vec![pad8(0.0, 0.0), pad8(1.0, 1.0)];
        let index = build_index(&pts, &KmeansParams::new(1, 1)).unwrap();
        let mut bytes = index.to_bytes();
        bytes[1] = b'X';
        assert!(IvfIndex::from_bytes(&bytes).is_err());
        let bytes = index.to_bytes();
        assert!(IvfIndex::from_bytes(&bytes[..bytes.len() - 2]).is_err());
        // A member id listed in two clusters is rejected.
        let centroids = vec![pad8(0.0, 0.0), pad8(1.0, 1.0)];
        let good = IvfIndex::new(centroids, vec![0, 1]).unwrap();
        let mut bytes = good.to_bytes();
        let n = bytes.len();
        // Second cluster's single member id: point it at vector 0 as well.
        bytes[n - 4..].copy_from_slice(&0u32.to_le_bytes());
        assert!(IvfIndex::from_bytes(&bytes).is_err());
    }
}
