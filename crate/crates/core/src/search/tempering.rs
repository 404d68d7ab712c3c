use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SearchState;
use crate::error::{Error, Result};
use crate::gs::Score;
use crate::par::Exec;
use crate::rng;

/// Move set used by Metropolis updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MoveSet {
    /// Single-entry flips.
    SingleBit,
    /// Swaps and window rotations that keep every segment sum.
    Constrained,
}

/// Ascending temperatures with per-pair swap statistics. After every sweep the
/// log-gaps are rescaled by `exp(rate * (acceptance - midpoint))` (clamped to
/// a factor in `[1/2, 2]`) so swap acceptance drifts into `target_range`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperatureLadder {
    pub temperatures: Vec<f64>,
    pub swap_attempts: Vec<u64>,
    pub swap_accepts: Vec<u64>,
    /// Acceptance of each adjacent pair during the most recent sweep.
    pub last_acceptance: Vec<f64>,
    pub target_range: (f64, f64),
    pub rate: f64,
}

pub const DEFAULT_TARGET_RANGE: (f64, f64) = (0.2, 0.4);

impl TemperatureLadder {
    /// Geometric ladder from `t_min` to `t_max`.
    pub fn geometric(t_min: f64, t_max: f64, rungs: usize) -> Result<Self> {
        if rungs < 2 {
            return Err(Error::Config { field: "rungs", msg: format!("need at least 2 rungs, got {rungs}") });
        }
        if !(t_min > 0.0 && t_max > t_min) {
            return Err(Error::Config { field: "temperatures", msg: format!("need 0 < {t_min} < {t_max}") });
        }
        let ratio = (t_max / t_min).powf(1.0 / (rungs - 1) as f64);
        let temperatures = (0..rungs).map(|r| t_min * ratio.powi(r as i32)).collect();
        Ok(Self {
            temperatures,
            swap_attempts: vec![0; rungs - 1],
            swap_accepts: vec![0; rungs - 1],
            last_acceptance: vec![0.0; rungs - 1],
            target_range: DEFAULT_TARGET_RANGE,
            rate: 1.0,
        })
    }

    pub fn rungs(&self) -> usize {
        self.temperatures.len()
    }

    /// Rescales the gaps from the latest per-pair acceptance rates.
    pub fn autotune(&mut self, acceptance: &[f64]) {
        let mid = 0.5 * (self.target_range.0 + self.target_range.1);
        let mut log_t: Vec<f64> = self.temperatures.iter().map(|t| t.ln()).collect();
        let gaps: Vec<f64> = (0..acceptance.len())
            .map(|r| {
                let factor = (self.rate * (acceptance[r] - mid)).exp().clamp(0.5, 2.0);
                ((log_t[r + 1] - log_t[r]) * factor).max(1e-9)
            })
            .collect();
        for (r, g) in gaps.iter().enumerate() {
            log_t[r + 1] = log_t[r] + g;
        }
        self.temperatures = log_t.into_iter().map(f64::exp).collect();
    }

    fn check(&self) {
        debug_assert!(self.temperatures.windows(2).all(|w| w[0] > 0.0 && w[1] > w[0]));
    }
}

/// Metropolis rule: accept with probability `min(1, exp(-(new - old) / t))`.
pub fn metropolis_accept<R: Rng + ?Sized>(old: Score, new: Score, t: f64, rng: &mut R) -> bool {
    if new <= old {
        return true;
    }
    if !new.is_finite() {
        return false;
    }
    rng.random::<f64>() < (-(new.value() - old.value()) / t).exp()
}

/// Replica exchange between temperatures `t_a` and `t_b` holding scores `s_a`
/// and `s_b`: accept with probability `min(1, exp((1/t_a - 1/t_b)(s_a - s_b)))`.
pub fn swap_accept<R: Rng + ?Sized>(t_a: f64, t_b: f64, s_a: Score, s_b: Score, rng: &mut R) -> bool {
    if t_a == t_b || s_a == s_b {
        return true;
    }
    let x = (1.0 / t_a - 1.0 / t_b) * (s_a.value() - s_b.value());
    if x.is_nan() {
        return false;
    }
    x >= 0.0 || rng.random::<f64>() < x.exp()
}

fn metropolis_sweep<R: Rng + ?Sized>(state: &mut SearchState, t: f64, moves: MoveSet, rng: &mut R) {
    let np = state.n_prime();
    for _ in 0..4 * np {
        match moves {
            MoveSet::SingleBit => {
                let (i, k) = (rng.random_range(0..4), rng.random_range(0..np));
                let new = state.flip_delta(i, k);
                if metropolis_accept(state.score(), new, t, rng) {
                    state.apply_flip(i, k);
                }
            }
            MoveSet::Constrained => {
                let flips = state.propose_constrained(rng);
                if flips.is_empty() {
                    continue;
                }
                let new = state.flips_delta(&flips);
                if metropolis_accept(state.score(), new, t, rng) {
                    state.apply_flips(&flips);
                }
            }
        }
    }
}

/// Runs `sweeps` rounds of Metropolis updates on every replica followed by
/// adjacent-rung swap proposals and ladder autotuning. `states` holds
/// `R * B` replicas, rung `r` owning `states[r*B .. (r+1)*B]`. Returns the
/// per-pair acceptance of the final sweep.
pub fn tempering_sweep<R: Rng + ?Sized>(
    states: &mut [SearchState],
    ladder: &mut TemperatureLadder,
    sweeps: usize,
    moves: MoveSet,
    rng: &mut R,
    exec: Exec,
) -> Result<Vec<f64>> {
    let rungs = ladder.rungs();
    if rungs < 2 {
        return Err(Error::Config { field: "rungs", msg: format!("need at least 2 rungs, got {rungs}") });
    }
    if !states.len().is_multiple_of(rungs) || states.is_empty() {
        return Err(Error::Config {
            field: "replicas",
            msg: format!("{} replicas do not split evenly over {rungs} rungs", states.len()),
        });
    }
    let per_rung = states.len() / rungs;
    for _ in 0..sweeps {
        let base: u64 = rng.random();
        let temps = ladder.temperatures.clone();
        exec.for_each_mut(states, |idx, s| {
            let mut r = rng::stream(base, &[idx as u64]);
            metropolis_sweep(s, temps[idx / per_rung], moves, &mut r);
        });
        let mut acceptance = vec![0.0; rungs - 1];
        for r in 0..rungs - 1 {
            let mut accepted = 0u64;
            for b in 0..per_rung {
                let (lo, hi) = (r * per_rung + b, (r + 1) * per_rung + b);
                if swap_accept(temps[r], temps[r + 1], states[lo].score(), states[hi].score(), rng) {
                    states.swap(lo, hi);
                    accepted += 1;
                }
            }
            ladder.swap_attempts[r] += per_rung as u64;
            ladder.swap_accepts[r] += accepted;
            acceptance[r] = accepted as f64 / per_rung as f64;
        }
        ladder.autotune(&acceptance);
        ladder.check();
        ladder.last_acceptance = acceptance;
    }
    Ok(ladder.last_acceptance.clone())
}
