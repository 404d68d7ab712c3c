//! The rayon path and the sequential fallback must agree bit for bit.

use gsboost::enumerate::{enumerate_gs, EnumerateOptions};
use gsboost::rng::stream;
use gsboost::run::{RunConfig, RunState};
use gsboost::search::{improve, ImproveConfig, TemperatureLadder};
use gsboost::symmetry::{dedup, dedup_with_counts};
use gsboost::{Exec, GsArray};

const BOTH: [Exec; 2] = [Exec::Sequential, Exec::Parallel];

fn population(n: usize, count: usize, seed: u64) -> Vec<GsArray> {
    let mut rng = stream(seed, &[]);
    (0..count).map(|_| GsArray::random(n, &mut rng).unwrap()).collect()
}

#[test]
fn improvement_is_schedule_independent() {
    let pop = population(28, 48, 1);
    let [a, b] = BOTH.map(|exec| {
        let cfg = ImproveConfig { exec, ..Default::default() };
        let mut ladder = TemperatureLadder::geometric(0.05, 0.5, 4).unwrap();
        let out = improve(pop.clone(), 2, &cfg, &mut ladder, &mut stream(2, &[])).unwrap();
        (out.into_iter().map(|c| c.array).collect::<Vec<_>>(), ladder.temperatures)
    });
    assert_eq!(a, b);
}

#[test]
fn dedup_is_schedule_independent() {
    let mut pop = population(20, 200, 3);
    pop.extend(pop.clone());
    let [a, b] = BOTH.map(|exec| dedup_with_counts(&pop, exec));
    assert_eq!(a, b);
    assert_eq!(a.iter().map(|(_, c)| c).sum::<usize>(), 400);
    assert_eq!(dedup(&pop, Exec::Sequential), dedup(&pop, Exec::Parallel));
}

#[test]
fn enumeration_is_schedule_independent() {
    let [a, b] = BOTH.map(|exec| {
        let e = enumerate_gs(16, &EnumerateOptions { keep_arrays: true, exec, ..Default::default() }).unwrap();
        (e.count, e.arrays.unwrap())
    });
    assert_eq!(a, b);
}

#[test]
fn whole_run_is_schedule_independent() {
    let cfg = RunConfig {
        n: 20,
        sample_size: 96,
        training_size: 32,
        training_steps: 8,
        n_layer: 1,
        n_embd: 16,
        n_head: 2,
        batch_size: 8,
        generations: 2,
        seed: 4,
        wall_clock: false,
        ..Default::default()
    };
    let [a, b] = BOTH.map(|exec| {
        let mut run = RunState::new(cfg.clone(), exec).unwrap();
        while !run.is_finished() {
            run.run_generation().unwrap();
        }
        run.checkpoint_bytes().unwrap()
    });
    assert!(a == b, "checkpoints differ");
}
