//! Goethals-Seidel arrays: four +/-1 first rows of circulant blocks.

mod matrix;
mod spectrum;
mod sums;
mod text;

pub use matrix::{build_matrix, verify_hadamard, SignMatrix};
pub use spectrum::{
    power_from_modes, score, score_from_power, stabilized_term, Score, Spectrum, Twiddles,
    ZERO_POWER,
};
pub use sums::{segment_sum_solutions, segment_sums, SegmentSums};
pub use text::{format_arrays, parse_arrays};
pub(crate) use spectrum::{dft, inverse_dft_real};

use rand::Rng;

use crate::error::{Error, Result};

/// Threshold below which a floating-point score is treated as a candidate
/// Hadamard array (exact verification decides).
pub const HADAMARD_SCORE_EPS: f64 = 1e-9;

/// Four segments of length `n' = n/4` with entries in {-1, +1}, stored
/// segment-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GsArray {
    n_prime: usize,
    data: Vec<i8>,
}

impl GsArray {
    pub fn new(segments: [Vec<i8>; 4]) -> Result<Self> {
        let n_prime = segments[0].len();
        if n_prime == 0 {
            return Err(Error::InvalidOrder(0));
        }
        let mut data = Vec::with_capacity(4 * n_prime);
        for (i, seg) in segments.iter().enumerate() {
            if seg.len() != n_prime {
                return Err(Error::SegmentLength { segment: i, len: seg.len(), expected: n_prime });
            }
            data.extend_from_slice(seg);
        }
        Self::from_flat(4 * n_prime, data)
    }

    /// Builds an array from `n` entries, segment after segment.
    pub fn from_flat(n: usize, data: Vec<i8>) -> Result<Self> {
        if n == 0 || !n.is_multiple_of(4) {
            return Err(Error::InvalidOrder(n));
        }
        let n_prime = n / 4;
        if data.len() != n {
            return Err(Error::SegmentLength { segment: data.len() / n_prime.max(1), len: data.len(), expected: n });
        }
        if let Some(pos) = data.iter().position(|&x| x != 1 && x != -1) {
            return Err(Error::InvalidEntry { row: pos / n_prime, col: pos % n_prime, value: data[pos] as i64 });
        }
        Ok(Self { n_prime, data })
    }

    pub fn ones(n: usize) -> Result<Self> {
        Self::from_flat(n, vec![1; n])
    }

    /// Uniform i.i.d. +/-1 entries.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        let data = (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        Self::from_flat(n, data)
    }

    /// Array whose bits (segment-major, `+1 <-> 1`) are the low `n` bits of
    /// `code`, least significant bit first.
    pub fn from_bits(n: usize, code: u64) -> Result<Self> {
        let data = (0..n).map(|b| if (code >> b) & 1 == 1 { 1 } else { -1 }).collect();
        Self::from_flat(n, data)
    }

    pub fn n(&self) -> usize {
        4 * self.n_prime
    }

    pub fn n_prime(&self) -> usize {
        self.n_prime
    }

    pub fn segment(&self, i: usize) -> &[i8] {
        &self.data[i * self.n_prime..(i + 1) * self.n_prime]
    }

    pub(crate) fn segment_mut(&mut self, i: usize) -> &mut [i8] {
        let np = self.n_prime;
        &mut self.data[i * np..(i + 1) * np]
    }

    pub fn segments(&self) -> impl Iterator<Item = &[i8]> {
        self.data.chunks(self.n_prime)
    }

    pub fn get(&self, i: usize, k: usize) -> i8 {
        self.data[i * self.n_prime + k]
    }

    pub fn flip(&mut self, i: usize, k: usize) {
        let idx = i * self.n_prime + k;
        self.data[idx] = -self.data[idx];
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.data
    }

    /// One byte per entry: `b'+'` or `b'-'`. Used as the dedup key and for
    /// canonical ordering.
    pub fn key(&self) -> Vec<u8> {
        self.data.iter().map(|&x| if x > 0 { b'+' } else { b'-' }).collect()
    }

    pub fn spectrum(&self) -> Spectrum {
        Spectrum::of(self)
    }

    pub fn score(&self) -> Score {
        score(&self.spectrum())
    }

    /// Exact check through the full matrix.
    pub fn is_hadamard(&self) -> bool {
        verify_hadamard(&build_matrix(self))
    }
}
