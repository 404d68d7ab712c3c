//! Improvement heuristics: one-bit descent with incremental Fourier updates,
//! multi-bit combinations, segment resampling, sum-preserving moves, and
//! parallel tempering.

mod improve;
mod tempering;

pub use improve::{improve, improve_one, ImproveConfig, Improved};
pub use tempering::{metropolis_accept, swap_accept, tempering_sweep, MoveSet, TemperatureLadder};

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;

use crate::gs::{self, stabilized_term, GsArray, Score, Spectrum, Twiddles};

/// A move must lower the score by more than this to count as an improvement.
pub const IMPROVE_TOL: f64 = 1e-10;

/// Full spectral resynchronization after this many incremental updates.
const RESYNC_EVERY: usize = 256;

/// Default number of one-bit candidates combined by [`SearchState::multi_bit_step`].
pub const DEFAULT_TOP_M: usize = 8;

#[inline]
fn improves(new: Score, old: Score) -> bool {
    if !old.is_finite() {
        return new.is_finite();
    }
    new.value() < old.value() - IMPROVE_TOL
}

/// An array together with its Fourier modes, power and score, kept in sync
/// under incremental updates.
#[derive(Clone, Debug)]
pub struct SearchState {
    array: GsArray,
    modes: Vec<Complex64>,
    power: Vec<f64>,
    score: Score,
    twiddles: Arc<Twiddles>,
    updates: usize,
}

impl SearchState {
    pub fn new(array: GsArray) -> Self {
        let sp = Spectrum::of(&array);
        let score = gs::score(&sp);
        let twiddles = Twiddles::shared(array.n_prime());
        Self { array, modes: sp.modes, power: sp.power, score, twiddles, updates: 0 }
    }

    pub fn array(&self) -> &GsArray {
        &self.array
    }

    pub fn into_array(self) -> GsArray {
        self.array
    }

    pub fn score(&self) -> Score {
        self.score
    }

    pub fn n_prime(&self) -> usize {
        self.array.n_prime()
    }

    pub fn power(&self) -> &[f64] {
        &self.power
    }

    pub fn spectrum(&self) -> Spectrum {
        Spectrum { n_prime: self.n_prime(), modes: self.modes.clone(), power: self.power.clone() }
    }

    pub fn is_zero(&self) -> bool {
        self.score.value() < gs::HADAMARD_SCORE_EPS
    }

    /// Recomputes the spectrum from scratch.
    pub fn resync(&mut self) {
        let sp = Spectrum::of(&self.array);
        self.modes = sp.modes;
        self.power = sp.power;
        self.score = gs::score_from_power(&self.power).expect("valid spectrum");
        self.updates = 0;
    }

    fn inv_n(&self) -> f64 {
        1.0 / self.array.n() as f64
    }

    /// Score after flipping `a[i][k]`, via `l'[i][j] = l[i][j] - 2 a[i][k] w^(jk)`.
    /// O(n').
    pub fn flip_delta(&self, i: usize, k: usize) -> Score {
        let np = self.n_prime();
        let two_a = 2.0 * self.array.get(i, k) as f64;
        let inv_n = self.inv_n();
        let row = &self.modes[i * np..(i + 1) * np];
        let mut total = 0.0;
        for (j, (&z, &p)) in row.iter().zip(&self.power).enumerate() {
            let z_new = z - self.twiddles.at(j, k) * two_a;
            total += stabilized_term(p + (z_new.norm_sqr() - z.norm_sqr()) * inv_n);
        }
        Score(total)
    }

    /// Score after flipping every listed position (each at most once).
    pub fn flips_delta(&self, flips: &[(usize, usize)]) -> Score {
        let np = self.n_prime();
        let inv_n = self.inv_n();
        let mut segs: Vec<usize> = flips.iter().map(|f| f.0).collect();
        segs.sort_unstable();
        segs.dedup();
        let mut total = 0.0;
        for j in 0..np {
            let mut p = self.power[j];
            for &i in &segs {
                let z = self.modes[i * np + j];
                let mut z_new = z;
                for &(fi, k) in flips.iter().filter(|f| f.0 == i) {
                    z_new -= self.twiddles.at(j, k) * (2.0 * self.array.get(fi, k) as f64);
                }
                p += (z_new.norm_sqr() - z.norm_sqr()) * inv_n;
            }
            total += stabilized_term(p);
        }
        Score(total)
    }

    pub fn apply_flip(&mut self, i: usize, k: usize) {
        self.apply_flips(&[(i, k)]);
    }

    pub fn apply_flips(&mut self, flips: &[(usize, usize)]) {
        let np = self.n_prime();
        let inv_n = self.inv_n();
        for &(i, k) in flips {
            let two_a = 2.0 * self.array.get(i, k) as f64;
            for j in 0..np {
                let idx = i * np + j;
                let z = self.modes[idx];
                let z_new = z - self.twiddles.at(j, k) * two_a;
                self.power[j] += (z_new.norm_sqr() - z.norm_sqr()) * inv_n;
                self.modes[idx] = z_new;
            }
            self.array.flip(i, k);
        }
        self.updates += flips.len();
        if self.updates >= RESYNC_EVERY {
            self.resync();
        } else {
            self.score = Score(self.power.iter().map(|&p| stabilized_term(p)).sum());
        }
    }

    /// Lowest-scoring single flip, ties to the lowest `(i, k)`.
    fn best_flip(&self) -> ((usize, usize), Score) {
        let mut best = ((0, 0), Score::INFINITE);
        let mut first = true;
        for i in 0..4 {
            for k in 0..self.n_prime() {
                let s = self.flip_delta(i, k);
                if first || s < best.1 {
                    best = ((i, k), s);
                    first = false;
                }
            }
        }
        best
    }

    /// Applies the best strictly improving single flip until none is left.
    /// Returns the number of flips applied.
    pub fn one_bit_descent(&mut self) -> usize {
        let mut moves = 0;
        loop {
            let ((i, k), s) = self.best_flip();
            if !improves(s, self.score) {
                return moves;
            }
            let before = self.score;
            self.apply_flip(i, k);
            debug_assert!(self.score <= before || (self.score.value() - before.value()).abs() < 1e-9);
            moves += 1;
        }
    }

    /// Tests every `width`-subset of the `top_m` best single flips and applies
    /// the best one if it strictly improves the score.
    pub fn multi_bit_step(&mut self, width: usize, top_m: usize) -> bool {
        let np = self.n_prime();
        let mut ranked: Vec<((usize, usize), Score)> =
            (0..4).flat_map(|i| (0..np).map(move |k| (i, k))).map(|f| (f, self.flip_delta(f.0, f.1))).collect();
        ranked.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
        ranked.truncate(top_m);
        let cands: Vec<(usize, usize)> = ranked.into_iter().map(|(f, _)| f).collect();
        if width == 0 || cands.len() < width {
            return false;
        }
        let mut best: Option<(Vec<(usize, usize)>, Score)> = None;
        for subset in subsets(cands.len(), width) {
            let flips: Vec<(usize, usize)> = subset.iter().map(|&x| cands[x]).collect();
            let s = self.flips_delta(&flips);
            if best.as_ref().is_none_or(|b| s < b.1) {
                best = Some((flips, s));
            }
        }
        match best {
            Some((flips, s)) if improves(s, self.score) => {
                self.apply_flips(&flips);
                true
            }
            _ => false,
        }
    }

    /// Proposed replacement for segment `i`: the other three segments fix a
    /// target magnitude per frequency, the phase is the current one plus
    /// uniform jitter in `[-theta, theta]`, and the segment becomes the sign
    /// of the inverse transform (zero maps to +1). With `target_sum` the
    /// closest +/-1 vector with that sum is used instead.
    pub fn resample_proposal<R: Rng + ?Sized>(
        &self,
        i: usize,
        theta: f64,
        target_sum: Option<i64>,
        rng: &mut R,
    ) -> Vec<i8> {
        let np = self.n_prime();
        let n = self.array.n() as f64;
        let mut target = vec![Complex64::new(0.0, 0.0); np];
        for j in 0..=np / 2 {
            let others: f64 = (0..4).filter(|&t| t != i).map(|t| self.modes[t * np + j].norm_sqr()).sum();
            let mag = (n - others).max(0.0).sqrt();
            let current = self.modes[i * np + j];
            let real_only = j == 0 || 2 * j == np;
            let z = if real_only {
                let sign = if current.re < 0.0 { -1.0 } else { 1.0 };
                Complex64::new(sign * mag, 0.0)
            } else {
                let jitter = if theta > 0.0 { rng.random_range(-theta..=theta) } else { 0.0 };
                Complex64::from_polar(mag, current.arg() + jitter)
            };
            target[j] = z;
            if j != 0 && 2 * j != np {
                target[np - j] = z.conj();
            }
        }
        let x = gs::inverse_dft_real(&target);
        match target_sum {
            None => x.iter().map(|&v| if v < 0.0 { -1 } else { 1 }).collect(),
            Some(k) => closest_with_sum(&x, k),
        }
    }

    /// Greedy segment resampling; returns whether the proposal was accepted.
    pub fn segment_resample<R: Rng + ?Sized>(
        &mut self,
        i: usize,
        theta: f64,
        preserve_sum: bool,
        rng: &mut R,
    ) -> bool {
        let target_sum = preserve_sum.then(|| self.array.segment(i).iter().map(|&x| x as i64).sum());
        let proposal = self.resample_proposal(i, theta, target_sum, rng);
        let flips: Vec<(usize, usize)> = proposal
            .iter()
            .zip(self.array.segment(i))
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(k, _)| (i, k))
            .collect();
        if flips.is_empty() {
            return false;
        }
        // Large replacements are cheaper to rescore from scratch.
        let mut candidate = self.array.clone();
        candidate.segment_mut(i).copy_from_slice(&proposal);
        let new_state = SearchState::new(candidate);
        if improves(new_state.score, self.score) {
            *self = new_state;
            true
        } else {
            false
        }
    }

    /// Flips that swap a +1 and a -1 inside segment `i`.
    pub fn swap_flips(&self, i: usize, k1: usize, k2: usize) -> Vec<(usize, usize)> {
        if k1 == k2 || self.array.get(i, k1) == self.array.get(i, k2) {
            Vec::new()
        } else {
            vec![(i, k1), (i, k2)]
        }
    }

    /// Flips that cyclically rotate the window `start..start+len` (wrapping)
    /// of segment `i` by `by` places.
    pub fn rotation_flips(&self, i: usize, start: usize, len: usize, by: usize) -> Vec<(usize, usize)> {
        let np = self.n_prime();
        let seg = self.array.segment(i);
        let idx = |t: usize| (start + t) % np;
        (0..len)
            .filter(|&t| seg[idx((t + len - by % len) % len)] != seg[idx(t)])
            .map(|t| (i, idx(t)))
            .collect()
    }

    /// Random sum-preserving proposal: a +/- swap or a window rotation.
    pub fn propose_constrained<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<(usize, usize)> {
        let np = self.n_prime();
        if np < 2 {
            return Vec::new();
        }
        let i = rng.random_range(0..4);
        let seg = self.array.segment(i);
        if rng.random::<bool>() {
            let plus: Vec<usize> = (0..np).filter(|&k| seg[k] > 0).collect();
            let minus: Vec<usize> = (0..np).filter(|&k| seg[k] < 0).collect();
            if !plus.is_empty() && !minus.is_empty() {
                let a = plus[rng.random_range(0..plus.len())];
                let b = minus[rng.random_range(0..minus.len())];
                return self.swap_flips(i, a, b);
            }
        }
        let len = rng.random_range(2..=np);
        let start = rng.random_range(0..np);
        let by = rng.random_range(1..len);
        self.rotation_flips(i, start, len, by)
    }

    /// Best strictly improving +/- swap within a segment, repeated until none
    /// improves. The segment sums never change.
    pub fn constrained_descent(&mut self) -> usize {
        let np = self.n_prime();
        let mut moves = 0;
        loop {
            let mut best: Option<([(usize, usize); 2], Score)> = None;
            for i in 0..4 {
                let seg = self.array.segment(i);
                for k1 in 0..np {
                    for k2 in k1 + 1..np {
                        if seg[k1] == seg[k2] {
                            continue;
                        }
                        let flips = [(i, k1), (i, k2)];
                        let s = self.flips_delta(&flips);
                        if best.as_ref().is_none_or(|b| s < b.1) {
                            best = Some((flips, s));
                        }
                    }
                }
            }
            match best {
                Some((flips, s)) if improves(s, self.score) => {
                    self.apply_flips(&flips);
                    moves += 1;
                }
                _ => return moves,
            }
        }
    }
}

/// Closest +/-1 vector to `x` with entry sum `k`: the `(len + k)/2` largest
/// entries become +1, ties to lower index.
pub fn closest_with_sum(x: &[f64], k: i64) -> Vec<i8> {
    let len = x.len() as i64;
    let plus = ((len + k) / 2).clamp(0, len) as usize;
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut out = vec![-1i8; x.len()];
    for &idx in &order[..plus] {
        out[idx] = 1;
    }
    out
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut pos = k;
        while pos > 0 && cur[pos - 1] == n - k + pos - 1 {
            pos -= 1;
        }
        if pos == 0 {
            return out;
        }
        cur[pos - 1] += 1;
        for t in pos..k {
            cur[t] = cur[t - 1] + 1;
        }
    }
}

/// Segment sums of the state, used to assert conservation.
pub fn sums_of(state: &SearchState) -> [i64; 4] {
    gs::segment_sums(state.array()).0
}


#[cfg(test)]
mod tests;
