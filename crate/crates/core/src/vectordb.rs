//! Vector representations, quantizer training, and distance kernels.
//!
//! A database stores three forms of every vector: the original FP32 form,
//! a 1-bit-per-dimension binary form scanned inside the drive, and an INT8
//! form used to rerank the binary candidates. Queries are quantized with the
//! same trained thresholds as the database (we assume the encoder is shared).

use serde::{Deserialize, Serialize};

use crate::wire::{put_f32, put_u32, Reader};
use crate::{Error, Result};

/// Magic prefix of a serialized [`QuantizerModel`].
pub const QUANTIZER_MAGIC: &[u8; 4] = b"RQNT";

/// A full-precision vector. Dimensionality is positive, a multiple of 8,
/// and every component is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Fp32Vector {
    components: Vec<f32>,
}

impl Fp32Vector {
    pub fn new(components: Vec<f32>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyInput("vector components"));
        }
        if components.len() % 8 != 0 {
            return Err(Error::InvalidParam(format!(
                "dimensionality {} is not a multiple of 8",
                components.len()
            )));
        }
        if let Some(bad) = components.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "non-finite component {bad} in vector"
            )));
        }
        Ok(Fp32Vector { components })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.components
    }
}

/// A binary-quantized vector, one bit per dimension, packed little-endian:
/// dimension `d` lives in byte `d / 8`, bit `d % 8`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitVector {
    bytes: Vec<u8>,
}

impl BitVector {
    /// Wraps packed bytes; the dimensionality is `8 * bytes.len()`.
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self> {
        if bytes.is_empty() {
            return Err(Error::EmptyInput("bit vector bytes"));
        }
        Ok(BitVector { bytes })
    }

    pub fn dim(&self) -> usize {
        self.bytes.len() * 8
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn bit(&self, d: usize) -> bool {
        self.bytes[d / 8] >> (d % 8) & 1 == 1
    }
}

/// An INT8-quantized vector. `scale` is informational: distances are
/// computed on the raw codes and never rescaled.
#[derive(Debug, Clone, PartialEq)]
pub struct Int8Vector {
    components: Vec<i8>,
    scale: f32,
}

impl Int8Vector {
    pub fn new(components: Vec<i8>, scale: f32) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyInput("vector components"));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParam(format!("scale {scale} must be positive")));
        }
        Ok(Int8Vector { components, scale })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.components
    }

    pub fn scale(&self) -> f32 {
        self.scale
    }

    /// Raw codes reinterpreted as bytes, as they are laid out on flash.
    pub fn as_code_bytes(&self) -> &[u8] {
        // i8 and u8 share a layout.
        unsafe { std::slice::from_raw_parts(self.components.as_ptr().cast(), self.components.len()) }
    }

    pub fn from_code_bytes(bytes: &[u8]) -> Result<Self> {
        Int8Vector::new(bytes.iter().map(|&b| b as i8).collect(), 1.0)
    }
}

/// Per-dimension binarization thresholds and INT8 scales learned from data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerModel {
    thresholds: Vec<f32>,
    int8_scales: Vec<f32>,
}

impl QuantizerModel {
    pub fn new(thresholds: Vec<f32>, int8_scales: Vec<f32>) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::EmptyInput("quantizer thresholds"));
        }
        if thresholds.len() != int8_scales.len() {
            return Err(Error::DimensionMismatch {
                expected: thresholds.len(),
                got: int8_scales.len(),
            });
        }
        if thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParam("non-finite threshold".into()));
        }
        if int8_scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParam("scales must be positive and finite".into()));
        }
        Ok(QuantizerModel { thresholds, int8_scales })
    }

    pub fn dim(&self) -> usize {
        self.thresholds.len()
    }

    pub fn thresholds(&self) -> &[f32] {
        &self.thresholds
    }

    pub fn int8_scales(&self) -> &[f32] {
        &self.int8_scales
    }

    /// Serializes as magic, u32 dimensionality, thresholds, scales, all
    /// little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.dim());
        out.extend_from_slice(QUANTIZER_MAGIC);
        put_u32(&mut out, self.dim() as u32);
        for &t in &self.thresholds {
            put_f32(&mut out, t);
        }
        for &s in &self.int8_scales {
            put_f32(&mut out, s);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "quantizer model");
        r.magic(QUANTIZER_MAGIC)?;
        let d = r.u32()? as usize;
        let mut thresholds = Vec::with_capacity(d);
        for _ in 0..d {
            thresholds.push(r.f32()?);
        }
        let mut int8_scales = Vec::with_capacity(d);
        for _ in 0..d {
            int8_scales.push(r.f32()?);
        }
        r.finish()?;
        QuantizerModel::new(thresholds, int8_scales)
    }
}

/// Learns per-dimension mean thresholds and symmetric max-abs INT8 scales.
/// Dimensions with zero spread get a scale of 1.0.
pub fn train_quantizer(vectors: &[Fp32Vector]) -> Result<QuantizerModel> {
    let first = vectors.first().ok_or(Error::EmptyInput("training vectors"))?;
    let d = first.dim();
    for v in vectors {
        if v.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: v.dim() });
        }
    }

    let mut sums = vec![0.0f64; d];
    for v in vectors {
        for (s, &x) in sums.iter_mut().zip(v.as_slice()) {
            *s += x as f64;
        }
    }
    let n = vectors.len() as f64;
    let thresholds: Vec<f32> = sums.iter().map(|s| (s / n) as f32).collect();

    let mut int8_scales = vec![0.0f32; d];
    for v in vectors {
        for ((sc, &x), &t) in int8_scales.iter_mut().zip(v.as_slice()).zip(&thresholds) {
            *sc = sc.max((x - t).abs());
        }
    }
    for sc in &mut int8_scales {
        if *sc == 0.0 {
            *sc = 1.0;
        }
    }

    QuantizerModel::new(thresholds, int8_scales)
}

/// Binarizes against the model thresholds: bit d is 1 iff `v[d] > thresholds[d]`
/// (strictly; a component equal to its threshold maps to 0).
pub fn binarize(v: &Fp32Vector, model: &QuantizerModel) -> Result<BitVector> {
    if v.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: v.dim() });
    }
    let mut bytes = vec![0u8; v.dim() / 8];
    for (d, (&x, &t)) in v.as_slice().iter().zip(model.thresholds()).enumerate() {
        if x > t {
            bytes[d / 8] |= 1 << (d % 8);
        }
    }
    BitVector::from_bytes(bytes)
}

/// INT8-quantizes: `clamp(round(127 * (v[d] - thr[d]) / scale[d]), -127, 127)`.
pub fn quantize_int8(v: &Fp32Vector, model: &QuantizerModel) -> Result<Int8Vector> {
    if v.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: v.dim() });
    }
    let mut components = Vec::with_capacity(v.dim());
    let mut max_dev = 0.0f32;
    for ((&x, &t), &s) in v.as_slice().iter().zip(model.thresholds()).zip(model.int8_scales()) {
        let code = (127.0 * (x - t) / s).round().clamp(-127.0, 127.0);
        components.push(code as i8);
        max_dev = max_dev.max((x - t).abs());
    }
    let scale = if max_dev > 0.0 { max_dev } else { 1.0 };
    Int8Vector::new(components, scale)
}

/// Reconstructs the FP32 form a code represents: `thr[d] + code[d] * scale[d] / 127`.
pub fn dequantize_int8(v: &Int8Vector, model: &QuantizerModel) -> Result<Fp32Vector> {
    if v.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: v.dim() });
    }
    let components = v
        .as_slice()
        .iter()
        .zip(model.thresholds())
        .zip(model.int8_scales())
        .map(|((&c, &t), &s)| t + c as f32 * s / 127.0)
        .collect();
    Fp32Vector::new(components)
}

/// Number of differing bits between two packed bit strings of equal length.
pub(crate) fn hamming_bytes(a: &[u8], b: &[u8]) -> u32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0u32;
    let (ac, ar) = a.split_at(a.len() - a.len() % 8);
    let (bc, br) = b.split_at(ac.len());
    for (x, y) in ac.chunks_exact(8).zip(bc.chunks_exact(8)) {
        let xv = u64::from_le_bytes(x.try_into().unwrap());
        let yv = u64::from_le_bytes(y.try_into().unwrap());
        acc += (xv ^ yv).count_ones();
    }
    for (x, y) in ar.iter().zip(br) {
        acc += (x ^ y).count_ones();
    }
    acc
}

pub(crate) fn popcount_bytes(a: &[u8]) -> u32 {
    let mut acc = 0u32;
    let (chunks, rest) = a.split_at(a.len() - a.len() % 8);
    for c in chunks.chunks_exact(8) {
        acc += u64::from_le_bytes(c.try_into().unwrap()).count_ones();
    }
    for x in rest {
        acc += x.count_ones();
    }
    acc
}

/// Hamming distance between two bit vectors of equal dimensionality.
pub fn hamming_distance(a: &BitVector, b: &BitVector) -> Result<u32> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    Ok(hamming_bytes(a.as_bytes(), b.as_bytes()))
}

/// Squared Euclidean distance on raw INT8 codes.
pub fn int8_squared_l2(a: &Int8Vector, b: &Int8Vector) -> Result<u64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    Ok(int8_squared_l2_bytes(a.as_code_bytes(), b.as_code_bytes()))
}

pub(crate) fn int8_squared_l2_bytes(a: &[u8], b: &[u8]) -> u64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0u64;
    for (&x, &y) in a.iter().zip(b) {
        let d = (x as i8 as i32) - (y as i8 as i32);
        acc += (d * d) as u64;
    }
    acc
}

/// Squared Euclidean distance in full precision (f64 accumulation).
pub fn fp32_squared_l2(a: &Fp32Vector, b: &Fp32Vector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    Ok(fp32_squared_l2_slices(a.as_slice(), b.as_slice()))
}

pub(crate) fn fp32_squared_l2_slices(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let d = (x - y) as f64;
        acc += d * d;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn vecf(components: &[f32]) -> Fp32Vector {
        Fp32Vector::new(components.to_vec()).unwrap()
    }

    /// Independent scalar reference: per-bit loop, no byte tricks.
    fn hamming_naive(a: &BitVector, b: &BitVector) -> u32 {
        (0..a.dim()).filter(|&d| a.bit(d) != b.bit(d)).count() as u32
    }

    fn random_vector(rng: &mut impl Rng, d: usize) -> Fp32Vector {
        Fp32Vector::new((0..d).map(|_| rng.gen_range(-4.0..4.0)).collect()).unwrap()
    }

    #[test]
    fn fp32_vector_rejects_bad_shapes() {
        assert!(matches!(Fp32Vector::new(vec![]), Err(Error::EmptyInput(_))));
        assert!(Fp32Vector::new(vec![0.0; 12]).is_err());
        assert!(Fp32Vector::new(vec![f32::NAN; 8]).is_err());
        assert!(Fp32Vector::new(vec![f32::INFINITY; 8]).is_err());
        assert!(Fp32Vector::new(vec![0.0; 8]).is_ok());
    }

    #[test]
    fn train_two_point_example() {
        let m = train_quantizer(&[vecf(&[0.0; 8]), vecf(&[2.0; 8])]).unwrap();
        assert_eq!(m.thresholds(), &[1.0; 8]);
        assert_eq!(m.int8_scales(), &[1.0; 8]);
    }

    #[test]
    fn train_single_vector_uses_unit_scales() {
        let v = vecf(&[0.5, -1.0, 3.0, 0.0, 2.0, -2.0, 1.0, 4.0]);
        let m = train_quantizer(std::slice::from_ref(&v)).unwrap();
        assert_eq!(m.thresholds(), v.as_slice());
        assert_eq!(m.int8_scales(), &[1.0; 8]);
    }

    #[test]
    fn train_matches_scalar_mean_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let d = 16;
        let vectors: Vec<Fp32Vector> = (0..1000).map(|_| random_vector(&mut rng, d)).collect();
        let m = train_quantizer(&vectors).unwrap();
        for dim in 0..d {
            let mean = vectors.iter().map(|v| v.as_slice()[dim] as f64).sum::<f64>()
                / vectors.len() as f64;
            assert!((m.thresholds()[dim] as f64 - mean).abs() < 1e-5);
            // Standard normal-ish range data keeps means near the middle.
            assert!(m.thresholds()[dim].abs() < 0.3);
            let max_dev = vectors
                .iter()
                .map(|v| (v.as_slice()[dim] - m.thresholds()[dim]).abs())
                .fold(0.0f32, f32::max);
            assert_eq!(m.int8_scales()[dim], max_dev);
        }
    }

    #[test]
    fn train_rejects_mixed_dims_and_empty() {
        assert!(train_quantizer(&[]).is_err());
        let bad = [vecf(&[0.0; 8]), vecf(&[0.0; 16])];
        assert!(matches!(
            train_quantizer(&bad),
            Err(Error::DimensionMismatch { expected: 8, got: 16 })
        ));
    }

    #[test]
    fn binarize_strict_threshold() {
        let m = QuantizerModel::new(vec![0.0; 8], vec![1.0; 8]).unwrap();
        let b = binarize(&vecf(&[1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]), &m).unwrap();
        assert_eq!(b.as_bytes(), &[0b0000_0001]);
        assert!(b.bit(0));
        assert!(!b.bit(1));
        // Components equal to their threshold map to 0.
        let z = binarize(&vecf(&[0.0; 8]), &m).unwrap();
        assert_eq!(z.as_bytes(), &[0]);
    }

    #[test]
    fn binarize_matches_scalar_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let d = 64;
        let vectors: Vec<Fp32Vector> = (0..100).map(|_| random_vector(&mut rng, d)).collect();
        let m = train_quantizer(&vectors).unwrap();
        for v in &vectors {
            let b = binarize(v, &m).unwrap();
            for dim in 0..d {
                assert_eq!(b.bit(dim), v.as_slice()[dim] > m.thresholds()[dim]);
            }
        }
    }

    #[test]
    fn quantize_int8_examples() {
        let m = QuantizerModel::new(vec![1.0; 8], vec![2.0; 8]).unwrap();
        // v == threshold -> 0
        assert_eq!(quantize_int8(&vecf(&[1.0; 8]), &m).unwrap().as_slice(), &[0i8; 8]);
        // v - thr == +-scale -> +-127
        assert_eq!(quantize_int8(&vecf(&[3.0; 8]), &m).unwrap().as_slice(), &[127i8; 8]);
        assert_eq!(quantize_int8(&vecf(&[-1.0; 8]), &m).unwrap().as_slice(), &[-127i8; 8]);
        // beyond scale clamps
        assert_eq!(quantize_int8(&vecf(&[9.0; 8]), &m).unwrap().as_slice(), &[127i8; 8]);
    }

    #[test]
    fn quantize_int8_matches_scalar_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let d = 32;
        let vectors: Vec<Fp32Vector> = (0..200).map(|_| random_vector(&mut rng, d)).collect();
        let m = train_quantizer(&vectors).unwrap();
        for v in &vectors {
            let q = quantize_int8(v, &m).unwrap();
            for dim in 0..d {
                let want = (127.0 * (v.as_slice()[dim] - m.thresholds()[dim])
                    / m.int8_scales()[dim])
                    .round()
                    .clamp(-127.0, 127.0) as i8;
                assert_eq!(q.as_slice()[dim], want);
            }
        }
    }

    #[test]
    fn hamming_examples() {
        let a = BitVector::from_bytes(vec![0xAA; 128]).unwrap();
        assert_eq!(hamming_distance(&a, &a).unwrap(), 0);
        let b = BitVector::from_bytes(vec![0x55; 128]).unwrap();
        assert_eq!(hamming_distance(&a, &b).unwrap(), 1024);
        let short = BitVector::from_bytes(vec![0xAA; 4]).unwrap();
        assert!(hamming_distance(&a, &short).is_err());
    }

    #[test]
    fn hamming_matches_bit_loop() {
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        for _ in 0..1000 {
            let len = *[1usize, 3, 8, 16, 128].iter().nth(rng.gen_range(0..5)).unwrap();
            let a = BitVector::from_bytes((0..len).map(|_| rng.gen()).collect()).unwrap();
            let b = BitVector::from_bytes((0..len).map(|_| rng.gen()).collect()).unwrap();
            assert_eq!(hamming_distance(&a, &b).unwrap(), hamming_naive(&a, &b));
        }
    }

    #[test]
    fn int8_distance_examples() {
        let a = Int8Vector::new(vec![127i8; 1024], 1.0).unwrap();
        assert_eq!(int8_squared_l2(&a, &a).unwrap(), 0);
        let b = Int8Vector::new(vec![-127i8; 1024], 1.0).unwrap();
        // (254)^2 = 64516 per dimension.
        assert_eq!(int8_squared_l2(&a, &b).unwrap(), 64516 * 1024);
    }

    #[test]
    fn int8_distance_matches_widened_loop() {
        let mut rng = ChaCha12Rng::seed_from_u64(15);
        for _ in 0..100 {
            let d = 1024;
            let a: Vec<i8> = (0..d).map(|_| rng.gen_range(-127..=127)).collect();
            let b: Vec<i8> = (0..d).map(|_| rng.gen_range(-127..=127)).collect();
            let want: u64 = a
                .iter()
                .zip(&b)
                .map(|(&x, &y)| {
                    let diff = i64::from(x) - i64::from(y);
                    (diff * diff) as u64
                })
                .sum();
            let av = Int8Vector::new(a, 1.0).unwrap();
            let bv = Int8Vector::new(b, 1.0).unwrap();
            assert_eq!(int8_squared_l2(&av, &bv).unwrap(), want);
        }
    }

    #[test]
    fn fp32_distance_examples() {
        let a = vecf(&[0.0; 8]);
        assert_eq!(fp32_squared_l2(&a, &a).unwrap(), 0.0);
        let b = vecf(&[3.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(fp32_squared_l2(&a, &b).unwrap(), 25.0);
    }

    #[test]
    fn fp32_distance_matches_compensated_sum() {
        let mut rng = ChaCha12Rng::seed_from_u64(16);
        for _ in 0..50 {
            let d = 1024;
            let a = random_vector(&mut rng, d);
            let b = random_vector(&mut rng, d);
            // Kahan-compensated f64 reference.
            let (mut sum, mut c) = (0.0f64, 0.0f64);
            for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
                let term = ((x - y) as f64).powi(2) - c;
                let t = sum + term;
                c = (t - sum) - term;
                sum = t;
            }
            let got = fp32_squared_l2(&a, &b).unwrap();
            assert!((got - sum).abs() <= 1e-4 * sum.max(1.0));
        }
    }

    #[test]
    fn int8_distance_tracks_fp32_within_quantization_error() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let d = 1024;
        let vectors: Vec<Fp32Vector> = (0..500).map(|_| random_vector(&mut rng, d)).collect();
        let m = train_quantizer(&vectors).unwrap();
        let max_scale = m.int8_scales().iter().fold(0.0f32, |a, &s| a.max(s)) as f64;
        let bound = 4.0 * d as f64 * (max_scale / 127.0 * 2.0).powi(2);
        for pair in vectors.chunks_exact(2).take(100) {
            let (a, b) = (&pair[0], &pair[1]);
            let qa = dequantize_int8(&quantize_int8(a, &m).unwrap(), &m).unwrap();
            let qb = dequantize_int8(&quantize_int8(b, &m).unwrap(), &m).unwrap();
            let exact = fp32_squared_l2(a, b).unwrap();
            let approx = fp32_squared_l2(&qa, &qb).unwrap();
            assert!(
                (exact - approx).abs() <= bound,
                "error {} above bound {bound}",
                (exact - approx).abs()
            );
        }
    }

    #[test]
    fn quantizer_model_round_trips() {
        let mut rng = ChaCha12Rng::seed_from_u64(18);
        let vectors: Vec<Fp32Vector> = (0..64).map(|_| random_vector(&mut rng, 48)).collect();
        let m = train_quantizer(&vectors).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..4], QUANTIZER_MAGIC);
        assert_eq!(bytes.len(), 8 + 8 * m.dim());
        let back = QuantizerModel::from_bytes(&bytes).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn quantizer_model_rejects_corruption() {
        let m = QuantizerModel::new(vec![0.0; 8], vec![1.0; 8]).unwrap();
        let mut bytes = m.to_bytes();
        bytes[0] = b'X';
        assert!(matches!(QuantizerModel::from_bytes(&bytes), Err(Error::Format { .. })));
        let bytes = m.to_bytes();
        assert!(QuantizerModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut long = m.to_bytes();
        long.push(0);
        assert!(QuantizerModel::from_bytes(&long).is_err());
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn finite_vec(d: usize) -> impl Strategy<Value = Vec<f32>> {
        prop::collection::vec(-1000.0f32..1000.0, d)
    }

    proptest! {
        #[test]
        fn hamming_is_symmetric_and_bounded(
            a in prop::collection::vec(any::<u8>(), 16),
            b in prop::collection::vec(any::<u8>(), 16),
        ) {
            let av = BitVector::from_bytes(a).unwrap();
            let bv = BitVector::from_bytes(b).unwrap();
            let d1 = hamming_distance(&av, &bv).unwrap();
            let d2 = hamming_distance(&bv, &av).unwrap();
            prop_assert_eq!(d1, d2);
            prop_assert!(d1 <= av.dim() as u32);
            prop_assert_eq!(hamming_distance(&av, &av).unwrap(), 0);
        }

        #[test]
        fn hamming_satisfies_triangle_inequality(
            a in prop::collection::vec(any::<u8>(), 8),
            b in prop::collection::vec(any::<u8>(), 8),
            c in prop::collection::vec(any::<u8>(), 8),
        ) {
            let av = BitVector::from_bytes(a).unwrap();
            let bv = BitVector::from_bytes(b).unwrap();
            let cv = BitVector::from_bytes(c).unwrap();
            let ab = hamming_distance(&av, &bv).unwrap();
            let bc = hamming_distance(&bv, &cv).unwrap();
            let ac = hamming_distance(&av, &cv).unwrap();
            prop_assert!(ac <= ab + bc);
        }

        #[test]
        fn binarize_is_deterministic_and_self_distance_zero(xs in finite_vec(32)) {
            let v = Fp32Vector::new(xs).unwrap();
            let m = train_quantizer(std::slice::from_ref(&v)).unwrap();
            let b1 = binarize(&v, &m).unwrap();
            let b2 = binarize(&v, &m).unwrap();
            prop_assert_eq!(&b1, &b2);
            prop_assert_eq!(hamming_distance(&b1, &b2).unwrap(), 0);
        }

        #[test]
        fn quantize_int8_stays_in_code_range(xs in finite_vec(16), ts in finite_vec(16)) {
            let v = Fp32Vector::new(xs).unwrap();
            let m = QuantizerModel::new(ts, vec![5.0; 16]).unwrap();
            let q = quantize_int8(&v, &m).unwrap();
            prop_assert!(q.as_slice().iter().all(|&c| (-127..=127).contains(&c)));
        }
    }
}
