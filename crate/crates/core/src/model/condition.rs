//! Residual-spectrum summaries for segment-by-segment generation.
//!
//! Before segment `i` the model sees eight level tokens. Each is the mean of
//! `r_j = max(0, T_j - P_j^partial)` over one frequency band, quantized on a
//! fixed grid of eight levels over `[0, 2)`. `P^partial` accumulates the
//! segments already generated, normalized like the score (`1/n`). At inference
//! `T_j = 1`; in training `T_j` is the example's own full power.

use std::ops::Range;

use crate::gs::{GsArray, Spectrum};

pub const BANDS: usize = 8;
pub const LEVELS: u32 = 8;
pub const RESIDUAL_RANGE: f64 = 2.0;

pub type Summary = [u32; BANDS];

pub fn quantize(r: f64) -> u32 {
    let level = (r / RESIDUAL_RANGE * LEVELS as f64).floor();
    level.clamp(0.0, (LEVELS - 1) as f64) as u32
}

/// Frequency indices per band; bands of short segments reuse one index.
pub fn bands(n_prime: usize) -> Vec<Range<usize>> {
    (0..BANDS)
        .map(|b| {
            let lo = b * n_prime / BANDS;
            let hi = (b + 1) * n_prime / BANDS;
            if hi > lo { lo..hi } else { lo.min(n_prime - 1)..lo.min(n_prime - 1) + 1 }
        })
        .collect()
}

pub fn summary(partial: &[f64], target: &[f64]) -> Summary {
    let mut out = [0; BANDS];
    for (slot, band) in out.iter_mut().zip(bands(partial.len())) {
        let len = band.len() as f64;
        let mean = band.map(|j| (target[j] - partial[j]).max(0.0)).sum::<f64>() / len;
        *slot = quantize(mean);
    }
    out
}

/// Summary used before the first segment at inference.
pub fn ideal_summary(n_prime: usize) -> Summary {
    summary(&vec![0.0; n_prime], &vec![1.0; n_prime])
}

/// Accumulates segment power into `partial`; `n` is the full order.
pub fn add_segment_power(partial: &mut [f64], segment: &[i8], n: usize) {
    let x: Vec<f64> = segment.iter().map(|&v| v as f64).collect();
    for (p, z) in partial.iter_mut().zip(crate::gs::dft(&x)) {
        *p += z.norm_sqr() / n as f64;
    }
}

/// The four summaries a training example is conditioned on.
pub fn training_summaries(a: &GsArray) -> [Summary; 4] {
    let np = a.n_prime();
    let target = Spectrum::of(a).power;
    let mut partial = vec![0.0; np];
    let mut out = [[0; BANDS]; 4];
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = summary(&partial, &target);
        add_segment_power(&mut partial, a.segment(i), a.n());
    }
    out
}
