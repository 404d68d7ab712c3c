use rand::Rng;

use super::tempering::{tempering_sweep, MoveSet, TemperatureLadder};
use super::{SearchState, DEFAULT_TOP_M};
use crate::error::Result;
use crate::gs::{GsArray, Score};
use crate::par::Exec;
use crate::rng;

#[derive(Clone, Debug)]
pub struct ImproveConfig {
    /// Fixed segment sums: only sum-preserving moves are used.
    pub preserve_sums: bool,
    /// Tempering sweeps per call.
    pub sweeps: usize,
    pub top_m: usize,
    /// Largest multi-bit combination width tried (2 or 3).
    pub max_width: usize,
    /// Phase jitter (radians) for segment resampling.
    pub theta: f64,
    pub exec: Exec,
}

impl Default for ImproveConfig {
    fn default() -> Self {
        Self { preserve_sums: false, sweeps: 4, top_m: DEFAULT_TOP_M, max_width: 3, theta: 0.3, exec: Exec::default() }
    }
}

#[derive(Clone, Debug)]
pub struct Improved {
    pub array: GsArray,
    pub score: Score,
}

fn descend(state: &mut SearchState, cfg: &ImproveConfig) {
    if cfg.preserve_sums {
        state.constrained_descent();
    } else {
        state.one_bit_descent();
    }
}

/// Local improvement of one candidate: descent, then `num_improve` rounds of
/// multi-bit steps, segment resampling and descent. Never raises the score.
pub fn improve_one<R: Rng + ?Sized>(state: &mut SearchState, num_improve: usize, cfg: &ImproveConfig, rng: &mut R) {
    let start = state.score();
    descend(state, cfg);
    for _ in 0..num_improve {
        if state.is_zero() {
            break;
        }
        if !cfg.preserve_sums {
            for width in 2..=cfg.max_width {
                state.multi_bit_step(width, cfg.top_m);
            }
        }
        for i in 0..4 {
            state.segment_resample(i, cfg.theta, cfg.preserve_sums, rng);
        }
        descend(state, cfg);
    }
    debug_assert!(state.score() <= start || (state.score().value() - start.value()).abs() < 1e-9);
}

/// Improves a population. With `num_improve > 0` a parallel tempering pass
/// over the ladder runs first (each candidate keeps the better of its pre- and
/// post-tempering state), then every candidate gets [`improve_one`].
/// The output has the same length as the input and no score goes up.
pub fn improve<R: Rng + ?Sized>(
    population: Vec<GsArray>,
    num_improve: usize,
    cfg: &ImproveConfig,
    ladder: &mut TemperatureLadder,
    rng: &mut R,
) -> Result<Vec<Improved>> {
    let exec = cfg.exec;
    let mut states = exec.map(population, |_, a| SearchState::new(a));
    if num_improve > 0 && cfg.sweeps > 0 {
        let rungs = ladder.rungs();
        let used = states.len() / rungs * rungs;
        if used > 0 {
            let before: Vec<SearchState> = states[..used].to_vec();
            let moves = if cfg.preserve_sums { MoveSet::Constrained } else { MoveSet::SingleBit };
            tempering_sweep(&mut states[..used], ladder, cfg.sweeps, moves, rng, exec)?;
            for (slot, pre) in before.into_iter().enumerate() {
                if pre.score() < states[slot].score() {
                    states[slot] = pre;
                }
            }
        }
    }
    let base: u64 = rng.random();
    exec.for_each_mut(&mut states, |idx, s| {
        let mut r = rng::stream(base, &[idx as u64]);
        improve_one(s, num_improve, cfg, &mut r);
    });
    Ok(states
        .into_iter()
        .map(|mut s| {
            s.resync();
            Improved { score: s.score(), array: s.into_array() }
        })
        .collect())
}
