use std::cmp::Ordering;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::GsArray;
use crate::error::{Error, Result};

/// Powers at or below this are treated as exact zeros (infinite score).
pub const ZERO_POWER: f64 = 1e-12;

/// Tolerated negative rounding before a power entry counts as corrupt.
const NEGATIVE_SLACK: f64 = 1e-9;

/// Fourier modes of the four segments and the normalized per-frequency power.
///
/// `modes[i * n' + j] = sum_k a[i][k] w^(jk)` with `w = exp(2 pi i / n')`, and
/// `power[j] = (1/n) sum_i |modes[i][j]|^2`. An array is Hadamard exactly when
/// every `power[j]` equals 1.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub n_prime: usize,
    pub modes: Vec<Complex64>,
    pub power: Vec<f64>,
}

type PlanCache = OnceLock<Mutex<HashMap<usize, Arc<dyn Fft<f64>>>>>;

fn fft_for(n_prime: usize) -> Arc<dyn Fft<f64>> {
    static CACHE: PlanCache = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(n_prime)
        // rustfft's forward transform uses exp(-2 pi i jk/N); the modes here use
        // the opposite sign, so the inverse plan computes them directly.
        .or_insert_with(|| FftPlanner::new().plan_fft_inverse(n_prime))
        .clone()
}

fn inverse_fft_for(n_prime: usize) -> Arc<dyn Fft<f64>> {
    static CACHE: PlanCache = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard.entry(n_prime).or_insert_with(|| FftPlanner::new().plan_fft_forward(n_prime)).clone()
}

/// `sum_k x[k] w^(jk)` for every `j`.
pub(crate) fn dft(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_for(x.len()).process(&mut buf);
    buf
}

/// Real part of the inverse of [`dft`]: `(1/n') sum_j X[j] w^(-jk)`.
pub(crate) fn inverse_dft_real(spec: &[Complex64]) -> Vec<f64> {
    let n = spec.len();
    let mut buf = spec.to_vec();
    inverse_fft_for(n).process(&mut buf);
    buf.iter().map(|z| z.re / n as f64).collect()
}

impl Spectrum {
    pub fn of(a: &GsArray) -> Self {
        let n_prime = a.n_prime();
        let mut modes = Vec::with_capacity(4 * n_prime);
        let fft = fft_for(n_prime);
        for seg in a.segments() {
            let mut buf: Vec<Complex64> = seg.iter().map(|&x| Complex64::new(x as f64, 0.0)).collect();
            fft.process(&mut buf);
            modes.extend(buf);
        }
        let power = power_from_modes(n_prime, &modes);
        Self { n_prime, modes, power }
    }

    pub fn n(&self) -> usize {
        4 * self.n_prime
    }

    pub fn mode(&self, i: usize, j: usize) -> Complex64 {
        self.modes[i * self.n_prime + j]
    }

    pub fn segment_modes(&self, i: usize) -> &[Complex64] {
        &self.modes[i * self.n_prime..(i + 1) * self.n_prime]
    }
}

pub fn power_from_modes(n_prime: usize, modes: &[Complex64]) -> Vec<f64> {
    let inv_n = 1.0 / (4 * n_prime) as f64;
    (0..n_prime)
        .map(|j| (0..4).map(|i| modes[i * n_prime + j].norm_sqr()).sum::<f64>() * inv_n)
        .collect()
}

/// Powers of `w = exp(2 pi i / n')`, indexed by exponent mod `n'`.
#[derive(Clone, Debug)]
pub struct Twiddles {
    pub n_prime: usize,
    table: Vec<Complex64>,
}

impl Twiddles {
    pub fn new(n_prime: usize) -> Self {
        let table = (0..n_prime)
            .map(|m| Complex64::from_polar(1.0, 2.0 * PI * m as f64 / n_prime as f64))
            .collect();
        Self { n_prime, table }
    }

    /// Shared table for `n'`.
    pub fn shared(n_prime: usize) -> Arc<Twiddles> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Twiddles>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        cache.lock().unwrap().entry(n_prime).or_insert_with(|| Arc::new(Twiddles::new(n_prime))).clone()
    }

    /// `w^(j k)`.
    #[inline]
    pub fn at(&self, j: usize, k: usize) -> Complex64 {
        self.table[(j * k) % self.n_prime]
    }
}

/// Nonnegative score; zero exactly on Hadamard arrays. Infinite when some
/// frequency carries no power, and infinite scores order after all finite ones.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct Score(pub f64);

impl Score {
    pub const INFINITE: Score = Score(f64::INFINITY);

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl PartialEq for Score {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Score {}

impl PartialOrd for Score {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Score {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6e}", self.0)
    }
}

/// `f(P - 1)` with `f(u) = u - ln(1 + u)`; analytically `P - 1 - ln P`.
#[inline]
pub fn stabilized_term(p: f64) -> f64 {
    if p <= ZERO_POWER {
        return f64::INFINITY;
    }
    let u = p - 1.0;
    u - u.ln_1p()
}

pub fn score_from_power(power: &[f64]) -> Result<Score> {
    let mut total = 0.0;
    for (index, &p) in power.iter().enumerate() {
        if !(p >= -NEGATIVE_SLACK) {
            return Err(Error::Domain { index, value: p });
        }
        total += stabilized_term(p);
    }
    Ok(Score(total))
}

pub fn score(spectrum: &Spectrum) -> Score {
    // Powers come from squared norms and cannot be negative or NaN for finite
    // ±1 input.
    score_from_power(&spectrum.power).expect("spectrum of a valid array")
}
