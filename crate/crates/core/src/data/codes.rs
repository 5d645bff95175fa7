use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

/// `sign` with the `sign(0) = +1` convention used throughout.
#[inline]
pub fn sign(v: f64) -> i8 {
    if v >= 0.0 {
        1
    } else {
        -1
    }
}

/// Binary codes with entries in {-1, +1}.
///
/// Stored one instance per row (`rows x bits`). [`HashCodes::bit_major`]
/// gives the `bits x rows` orientation the learning equations are written in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashCodes {
    values: Array2<i8>,
}

impl HashCodes {
    pub fn new(values: Array2<i8>) -> Result<Self> {
        if values.ncols() == 0 {
            return Err(Error::Data("hash codes need at least one bit".into()));
        }
        if let Some(bad) = values.iter().find(|&&v| v != 1 && v != -1) {
            return Err(Error::Data(format!("code entry {bad} is not -1 or +1")));
        }
        Ok(Self { values })
    }

    /// Elementwise sign of a real matrix (instance-per-row).
    pub fn from_signs(real: ArrayView2<'_, f64>) -> Self {
        Self {
            values: real.mapv(sign),
        }
    }

    pub fn random<R: Rng + ?Sized>(rows: usize, bits: usize, rng: &mut R) -> Self {
        let values = Array2::from_shape_simple_fn((rows, bits), || if rng.gen::<bool>() { 1 } else { -1 });
        Self { values }
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn bits(&self) -> usize {
        self.values.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, i8> {
        self.values.view()
    }

    pub fn bit_major(&self) -> ArrayView2<'_, i8> {
        self.values.t()
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.values.mapv(f64::from)
    }

    pub fn get(&self, row: usize, bit: usize) -> i8 {
        self.values[[row, bit]]
    }

    pub(crate) fn values_mut(&mut self) -> &mut Array2<i8> {
        &mut self.values
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            values: self.values.select(Axis(0), indices),
        }
    }

    /// Stacks two code sets with equal bit counts (`self` first).
    pub fn concat(&self, other: &HashCodes) -> Result<Self> {
        if self.bits() != other.bits() {
            return Err(Error::shape("HashCodes::concat", self.bits(), other.bits()));
        }
        let values = ndarray::concatenate(Axis(0), &[self.values.view(), other.values.view()])
            .map_err(|e| Error::Data(e.to_string()))?;
        Ok(Self { values })
    }

    pub fn pack(&self) -> PackedCodes {
        let bits = self.bits();
        let words_per_row = bits.div_ceil(64);
        let mut words = vec![0u64; words_per_row * self.rows()];
        for (r, row) in self.values.outer_iter().enumerate() {
            let dst = &mut words[r * words_per_row..(r + 1) * words_per_row];
            for (b, &v) in row.iter().enumerate() {
                if v == 1 {
                    dst[b / 64] |= 1u64 << (b % 64);
                }
            }
        }
        PackedCodes {
            bits,
            rows: self.rows(),
            words_per_row,
            words,
        }
    }

    /// FNV-1a over the row-major sign bytes; used to prove codes were not
    /// touched.
    pub fn checksum(&self) -> u64 {
        let mut hash = 0xcbf2_9ce4_8422_2325u64;
        for &v in self.values.iter() {
            hash ^= v as u8 as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        hash ^ ((self.rows() as u64) << 32 | self.bits() as u64)
    }
}

/// Bit-packed codes: `+1` is a set bit, `-1` a cleared bit. Bit `b` of a
/// code lives in word `b / 64` at position `b % 64`; padding bits are zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedCodes {
    bits: usize,
    rows: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

impl PackedCodes {
    pub fn from_words(bits: usize, rows: usize, words: Vec<u64>) -> Result<Self> {
        if bits == 0 {
            return Err(Error::Data("packed codes need at least one bit".into()));
        }
        let words_per_row = bits.div_ceil(64);
        if words.len() != words_per_row * rows {
            return Err(Error::shape("PackedCodes::from_words", words_per_row * rows, words.len()));
        }
        let tail = bits % 64;
        if tail != 0 {
            let mask = !((1u64 << tail) - 1);
            if words.chunks(words_per_row).any(|w| w[words_per_row - 1] & mask != 0) {
                return Err(Error::Data("packed codes have non-zero padding bits".into()));
            }
        }
        Ok(Self {
            bits,
            rows,
            words_per_row,
            words,
        })
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.words[i * self.words_per_row..(i + 1) * self.words_per_row]
    }

    pub fn unpack(&self) -> HashCodes {
        let mut values = Array2::from_elem((self.rows, self.bits), -1i8);
        for (r, mut row) in values.outer_iter_mut().enumerate() {
            let src = self.row(r);
            for b in 0..self.bits {
                if src[b / 64] >> (b % 64) & 1 == 1 {
                    row[b] = 1;
                }
            }
        }
        HashCodes { values }
    }

    /// Little-endian file form: `u32 rows`, `u32 bits`, then the words.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.words.len() * 8);
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.bits as u32).to_le_bytes());
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || !(bytes.len() - 8).is_multiple_of(8) {
            return Err(Error::Data(format!("packed code file has invalid length {}", bytes.len())));
        }
        let rows = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let bits = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let words = bytes[8..]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_words(bits, rows, words)
    }
}

/// Real-valued code matrices (network outputs and their surrogates),
/// one instance per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousCodes {
    values: Array2<f64>,
}

impl ContinuousCodes {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("continuous codes".into()));
        }
        Ok(Self { values })
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn bits(&self) -> usize {
        self.values.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn bit_major(&self) -> ArrayView2<'_, f64> {
        self.values.t()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.values
    }
}
