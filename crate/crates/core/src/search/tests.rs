use super::*;
use crate::gs::segment_sums;
use crate::rng::stream;

fn random_state(n: usize, seed: u64) -> SearchState {
    SearchState::new(GsArray::random(n, &mut stream(seed, &[])).unwrap())
}

/// Random restarts with descent until a Hadamard array appears.
pub(crate) fn find_hadamard(n: usize, seed: u64) -> GsArray {
    let mut rng = stream(seed, &[n as u64]);
    for _ in 0..100_000 {
        let mut s = SearchState::new(GsArray::random(n, &mut rng).unwrap());
        s.one_bit_descent();
        for _ in 0..4 {
            if s.is_zero() {
                break;
            }
            s.multi_bit_step(2, DEFAULT_TOP_M);
            for i in 0..4 {
                s.segment_resample(i, 0.3, false, &mut rng);
            }
            s.one_bit_descent();
        }
        if s.is_zero() && s.array().is_hadamard() {
            return s.into_array();
        }
    }
    panic!("no Hadamard array found at n = {n}");
}

#[test]
fn flip_delta_matches_full_recompute() {
    let mut rng = stream(20, &[]);
    let mut worst: f64 = 0.0;
    for np in [1usize, 2, 3, 5, 9, 12, 35] {
        let mut s = random_state(4 * np, np as u64);
        for _ in 0..300 {
            let i = rng.random_range(0..4);
            let k = rng.random_range(0..np);
            let predicted = s.flip_delta(i, k);
            let mut a = s.array().clone();
            a.flip(i, k);
            let exact = a.score();
            if predicted.is_finite() || exact.is_finite() {
                worst = worst.max((predicted.value() - exact.value()).abs());
            }
            s.apply_flip(i, k);
        }
    }
    assert!(worst <= 1e-9, "max deviation {worst}");
}

#[test]
fn flip_is_an_involution() {
    let mut s = random_state(36, 21);
    let before = s.score();
    s.apply_flip(2, 5);
    s.apply_flip(2, 5);
    assert!((s.score().value() - before.value()).abs() < 1e-10);
}

#[test]
fn order_four_flips_keep_zero_score() {
    let s = SearchState::new(GsArray::ones(4).unwrap());
    for i in 0..4 {
        assert_eq!(s.flip_delta(i, 0).value(), 0.0);
        let mut t = s.clone();
        t.apply_flip(i, 0);
        assert_eq!(t.spectrum().mode(i, 0).re, -1.0);
        assert_eq!(t.one_bit_descent(), 0);
        assert_eq!(t.score().value(), 0.0);
    }
}

#[test]
fn descent_is_monotone_and_stops_at_local_minimum() {
    for seed in 0..20 {
        let mut s = random_state(28, seed);
        let before = s.score();
        s.one_bit_descent();
        assert!(s.score() <= before);
        for i in 0..4 {
            for k in 0..7 {
                assert!(!improves(s.flip_delta(i, k), s.score()));
            }
        }
        let exact = s.array().score();
        assert!((exact.value() - s.score().value()).abs() < 1e-9);
    }
}

#[test]
fn descent_is_deterministic() {
    let mut a = random_state(44, 3);
    let mut b = a.clone();
    a.one_bit_descent();
    b.one_bit_descent();
    assert_eq!(a.array(), b.array());
}

#[test]
fn descent_finds_order_twenty_hadamards_from_random_starts() {
    let mut rng = stream(22, &[]);
    let trials = 10_000;
    let hits = (0..trials)
        .filter(|_| {
            let mut s = SearchState::new(GsArray::random(20, &mut rng).unwrap());
            s.one_bit_descent();
            s.is_zero()
        })
        .count();
    assert!(hits > 0, "no descent reached score 0");
}

#[test]
fn hadamard_inputs_are_fixed_points() {
    let h = find_hadamard(20, 1);
    let mut s = SearchState::new(h.clone());
    assert_eq!(s.one_bit_descent(), 0);
    assert!(!s.multi_bit_step(2, DEFAULT_TOP_M));
    assert!(!s.multi_bit_step(3, DEFAULT_TOP_M));
    let mut rng = stream(23, &[]);
    for i in 0..4 {
        let proposal = s.resample_proposal(i, 0.0, None, &mut rng);
        assert_eq!(proposal, h.segment(i));
        assert!(!s.segment_resample(i, 0.0, false, &mut rng));
    }
    assert_eq!(s.array(), &h);
}

#[test]
fn multi_flip_scores_agree_with_rescoring() {
    let s = random_state(48, 24);
    for flips in [vec![(0, 1), (0, 5)], vec![(1, 2), (3, 3)], vec![(2, 0), (2, 11), (0, 7)]] {
        let mut a = s.array().clone();
        for &(i, k) in &flips {
            a.flip(i, k);
        }
        assert!((s.flips_delta(&flips).value() - a.score().value()).abs() < 1e-9);
    }
}

#[test]
fn two_flip_escapes_a_one_bit_local_minimum() {
    // At n = 12 and 16 every one-bit local minimum reached from random starts
    // is already Hadamard, so the scan runs at n = 36.
    let mut rng = stream(25, &[]);
    let mut found = false;
    for _ in 0..2000 {
        let mut s = SearchState::new(GsArray::random(36, &mut rng).unwrap());
        s.one_bit_descent();
        let before = s.score();
        let mut t = s.clone();
        if t.multi_bit_step(2, DEFAULT_TOP_M) {
            assert!(t.score() < before);
            let changed = s.array().as_slice().iter().zip(t.array().as_slice()).filter(|(a, b)| a != b).count();
            assert_eq!(changed, 2);
            found = true;
            break;
        }
    }
    assert!(found);
}

#[test]
fn resampling_is_valid_and_greedy() {
    let mut rng = stream(26, &[]);
    let mut s = random_state(60, 27);
    let mut last = s.score();
    for step in 0..200 {
        let i = step % 4;
        let proposal = s.resample_proposal(i, 0.3, None, &mut rng);
        assert_eq!(proposal.len(), 15);
        assert!(proposal.iter().all(|&x| x == 1 || x == -1));
        s.segment_resample(i, 0.3, false, &mut rng);
        assert!(s.score() <= last);
        last = s.score();
    }
}

#[test]
fn sum_preserving_resample_keeps_sums() {
    let mut rng = stream(28, &[]);
    let mut s = random_state(52, 29);
    let sums = sums_of(&s);
    for step in 0..100 {
        s.segment_resample(step % 4, 0.5, true, &mut rng);
        assert_eq!(sums_of(&s), sums);
    }
}

#[test]
fn closest_with_sum_picks_largest_entries() {
    assert_eq!(closest_with_sum(&[0.3, -2.0, 1.0, 0.0, 0.1], 1), vec![1, -1, 1, -1, 1]);
    assert_eq!(closest_with_sum(&[0.0, 0.0], 0), vec![1, -1]);
}

#[test]
fn constrained_moves_conserve_sums() {
    let mut rng = stream(30, &[]);
    let mut s = random_state(36, 31);
    let sums = sums_of(&s);
    let ssq = segment_sums(s.array()).sum_of_squares();
    for _ in 0..10_000 {
        let flips = s.propose_constrained(&mut rng);
        s.apply_flips(&flips);
        assert_eq!(sums_of(&s), sums);
        assert_eq!(segment_sums(s.array()).sum_of_squares(), ssq);
    }
    s.constrained_descent();
    assert_eq!(sums_of(&s), sums);
}

#[test]
fn equal_value_swap_is_a_no_op() {
    let s = SearchState::new(GsArray::new([vec![1, 1, -1], vec![1; 3], vec![1; 3], vec![1; 3]]).unwrap());
    assert!(s.swap_flips(0, 0, 1).is_empty());
    assert_eq!(s.swap_flips(0, 0, 2), vec![(0, 0), (0, 2)]);
    // Rotating a window of equal values changes nothing.
    assert!(s.rotation_flips(1, 0, 3, 1).is_empty());
}

#[test]
fn subsets_enumerate_binomially() {
    assert_eq!(subsets(8, 2).len(), 28);
    assert_eq!(subsets(8, 3).len(), 56);
    assert_eq!(subsets(4, 2)[0], vec![0, 1]);
    assert_eq!(subsets(4, 2)[5], vec![2, 3]);
}

