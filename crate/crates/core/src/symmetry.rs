//! The residual symmetry group `H = (D_2n' x Z2)^4 x| (S4 x Aut(Z/n'))` of
//! Goethals-Seidel arrays.
//!
//! An element relabels positions of segment `i` by `j -> e_i * u * j + s_i`
//! (mod n'), negates it when `negate[i]`, and moves it to slot `perm[i]`.
//! Here `u` is a unit of `Z/n'` shared by all segments and `e_i = -1` when
//! `reverse[i]`. Applying it is the same as applying, in order, the unit
//! relabeling, the reversals, the shifts, the negations and the permutation.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::gs::GsArray;
use crate::par::Exec;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SymmetryElement {
    pub n_prime: usize,
    pub shift: [usize; 4],
    pub reverse: [bool; 4],
    pub negate: [bool; 4],
    /// Segment `i` moves to slot `perm[i]`.
    pub perm: [usize; 4],
    pub unit: usize,
}

pub fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Units of `Z/n'`; for `n' = 1` the single residue 0.
pub fn units(n_prime: usize) -> Vec<usize> {
    if n_prime == 1 {
        return vec![0];
    }
    (1..n_prime).filter(|&u| gcd(u, n_prime) == 1).collect()
}

fn inverse_unit(u: usize, n_prime: usize) -> usize {
    if n_prime == 1 {
        return 0;
    }
    (1..n_prime).find(|&v| (u * v) % n_prime == 1).expect("unit")
}

impl SymmetryElement {
    pub fn identity(n_prime: usize) -> Self {
        Self {
            n_prime,
            shift: [0; 4],
            reverse: [false; 4],
            negate: [false; 4],
            perm: [0, 1, 2, 3],
            unit: 1 % n_prime,
        }
    }

    pub fn new(
        n_prime: usize,
        shift: [usize; 4],
        reverse: [bool; 4],
        negate: [bool; 4],
        perm: [usize; 4],
        unit: usize,
    ) -> Result<Self> {
        let unit = unit % n_prime;
        if gcd(unit, n_prime) != 1 {
            return Err(Error::NotAUnit { unit, modulus: n_prime });
        }
        let mut seen = [false; 4];
        for &p in &perm {
            if p >= 4 || seen[p] {
                return Err(Error::Config { field: "perm", msg: format!("{perm:?} is not a permutation") });
            }
            seen[p] = true;
        }
        Ok(Self { n_prime, shift: shift.map(|s| s % n_prime), reverse, negate, perm, unit })
    }

    /// Uniform over the parameter tuples. Reversal is fixed to `false` for
    /// `n' <= 2`, where it acts trivially.
    pub fn random<R: Rng + ?Sized>(n_prime: usize, rng: &mut R) -> Self {
        let us = units(n_prime);
        let unit = us[rng.random_range(0..us.len())];
        let mut perm = [0, 1, 2, 3];
        perm.shuffle(rng);
        let mut shift = [0; 4];
        let mut reverse = [false; 4];
        let mut negate = [false; 4];
        for i in 0..4 {
            shift[i] = rng.random_range(0..n_prime);
            reverse[i] = n_prime > 2 && rng.random::<bool>();
            negate[i] = rng.random::<bool>();
        }
        Self { n_prime, shift, reverse, negate, perm, unit }
    }

    /// Multiplier `e_i * u` of segment `i`.
    fn multiplier(&self, i: usize) -> usize {
        if self.reverse[i] {
            (self.n_prime - self.unit) % self.n_prime
        } else {
            self.unit
        }
    }

    pub fn apply(&self, a: &GsArray) -> GsArray {
        let np = self.n_prime;
        assert_eq!(a.n_prime(), np, "symmetry element and array sizes differ");
        let mut data = vec![0i8; 4 * np];
        for i in 0..4 {
            let c = self.multiplier(i);
            let sign = if self.negate[i] { -1 } else { 1 };
            let out = &mut data[self.perm[i] * np..(self.perm[i] + 1) * np];
            for (j, &x) in a.segment(i).iter().enumerate() {
                out[(c * j + self.shift[i]) % np] = sign * x;
            }
        }
        GsArray::from_flat(4 * np, data).expect("permuted entries stay valid")
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn compose(&self, first: &Self) -> Self {
        let np = self.n_prime;
        assert_eq!(np, first.n_prime);
        let mut out = Self::identity(np);
        out.unit = (self.unit * first.unit) % np;
        for i in 0..4 {
            let slot = first.perm[i];
            out.perm[i] = self.perm[slot];
            out.negate[i] = first.negate[i] ^ self.negate[slot];
            out.reverse[i] = first.reverse[i] ^ self.reverse[slot];
            let c2 = self.multiplier(slot);
            out.shift[i] = (c2 * first.shift[i] + self.shift[slot]) % np;
        }
        out
    }

    pub fn inverse(&self) -> Self {
        let np = self.n_prime;
        let mut out = Self::identity(np);
        out.unit = inverse_unit(self.unit, np);
        for i in 0..4 {
            let slot = self.perm[i];
            out.perm[slot] = i;
            out.negate[slot] = self.negate[i];
            out.reverse[slot] = self.reverse[i];
            // j = c^-1 (p - s_i)
            let c_inv = inverse_unit(self.multiplier(i), np);
            out.shift[slot] = (c_inv * ((np - self.shift[i]) % np)) % np;
        }
        out
    }
}

/// Lexicographic order with `+1 < -1`.
#[inline]
fn rank(x: i8) -> u8 {
    (x < 0) as u8
}

/// Start index of the lexicographically least rotation (Booth).
fn least_rotation(s: &[u8]) -> usize {
    let n = s.len();
    let mut f = vec![usize::MAX; 2 * n];
    let mut k = 0usize;
    for j in 1..2 * n {
        let sj = s[j % n];
        let mut i = f[j - k - 1];
        while i != usize::MAX && sj != s[(k + i + 1) % n] {
            if sj < s[(k + i + 1) % n] {
                k = j - i - 1;
            }
            i = f[i];
        }
        if i == usize::MAX && sj != s[(k + i.wrapping_add(1)) % n] {
            if sj < s[k % n] {
                k = j;
            }
            f[j - k] = usize::MAX;
        } else {
            f[j - k] = i.wrapping_add(1);
        }
    }
    k % n
}

fn least_rotation_of(s: &[u8]) -> Vec<u8> {
    let k = least_rotation(s);
    s[k..].iter().chain(&s[..k]).copied().collect()
}

/// Least of the `4 n'` images of one segment under rotation, reversal and
/// negation, as ranks.
pub fn canonical_segment(seg: &[i8]) -> Vec<u8> {
    let fwd: Vec<u8> = seg.iter().map(|&x| rank(x)).collect();
    let rev: Vec<u8> = fwd.iter().rev().copied().collect();
    [fwd.clone(), rev.clone(), fwd.iter().map(|&b| 1 - b).collect(), rev.iter().map(|&b| 1 - b).collect()]
        .iter()
        .map(|v| least_rotation_of(v))
        .min()
        .expect("four candidates")
}

/// Distinguished representative of the H-orbit of `a`.
pub fn canonicalize(a: &GsArray) -> GsArray {
    let np = a.n_prime();
    let mut best: Option<Vec<u8>> = None;
    let mut relabeled = vec![0i8; np];
    for u in units(np) {
        let mut segs: Vec<Vec<u8>> = (0..4)
            .map(|i| {
                for (j, &x) in a.segment(i).iter().enumerate() {
                    relabeled[(u * j) % np] = x;
                }
                canonical_segment(&relabeled)
            })
            .collect();
        segs.sort_unstable();
        let flat: Vec<u8> = segs.concat();
        if best.as_ref().is_none_or(|b| flat < *b) {
            best = Some(flat);
        }
    }
    let data = best.expect("at least one unit").into_iter().map(|b| if b == 0 { 1 } else { -1 }).collect();
    GsArray::from_flat(4 * np, data).expect("canonical form is valid")
}

/// Canonical forms of the population, one per orbit, in order of first
/// occurrence.
pub fn dedup(population: &[GsArray], exec: Exec) -> Vec<GsArray> {
    let canon = exec.map_ref(population, |_, a| canonicalize(a));
    let mut seen = HashSet::with_capacity(canon.len());
    canon.into_iter().filter(|c| seen.insert(c.as_slice().to_vec())).collect()
}

/// Canonical forms with multiplicities, in order of first occurrence.
pub fn dedup_with_counts(population: &[GsArray], exec: Exec) -> Vec<(GsArray, usize)> {
    let canon = exec.map_ref(population, |_, a| canonicalize(a));
    let mut index: std::collections::HashMap<Vec<i8>, usize> = std::collections::HashMap::with_capacity(canon.len());
    let mut out: Vec<(GsArray, usize)> = Vec::new();
    for c in canon {
        match index.get(c.as_slice()) {
            Some(&pos) => out[pos].1 += 1,
            None => {
                index.insert(c.as_slice().to_vec(), out.len());
                out.push((c, 1));
            }
        }
    }
    out
}

/// Number of distinct transformations induced by `H` that fix `a`.
///
/// Every element acts on segment `i` through an affine map `j -> c_i j + s_i`
/// where all `c_i` lie in one class `{u, -u}`; distinct parameter choices give
/// distinct transformations. The count is exact for every `n'`.
pub fn stabilizer_order(a: &GsArray) -> u64 {
    let np = a.n_prime();
    let us = units(np);
    let classes: Vec<Vec<usize>> = us
        .iter()
        .filter(|&&u| u <= (np - u) % np || np <= 2)
        .map(|&u| {
            let neg = (np - u) % np;
            if neg == u { vec![u] } else { vec![u, neg] }
        })
        .collect();

    // fixes[c][i][t]: number of (s, sign) with segment i mapped by (c, s, sign) onto segment t.
    let count_maps = |c: usize, from: &[i8], to: &[i8]| -> u64 {
        let mut total = 0;
        for s in 0..np {
            for sign in [1i8, -1] {
                if from.iter().enumerate().all(|(j, &x)| to[(c * j + s) % np] == sign * x) {
                    total += 1;
                }
            }
        }
        total
    };

    let perms = permutations4();
    let mut order = 0u64;
    for class in &classes {
        let mut table = [[0u64; 4]; 4];
        for (i, row) in table.iter_mut().enumerate() {
            for (t, cell) in row.iter_mut().enumerate() {
                *cell = class.iter().map(|&c| count_maps(c, a.segment(i), a.segment(t))).sum();
            }
        }
        for p in &perms {
            order += (0..4).map(|i| table[i][p[i]]).product::<u64>();
        }
    }
    order
}

pub fn permutations4() -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    let mut seen = [false; 4];
                    p.iter().for_each(|&x| seen[x] = true);
                    if seen.iter().all(|&s| s) {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use std::collections::HashMap;

    fn brute_least_rotation(s: &[u8]) -> Vec<u8> {
        (0..s.len()).map(|k| s[k..].iter().chain(&s[..k]).copied().collect::<Vec<u8>>()).min().unwrap()
    }

    #[test]
    fn booth_matches_brute_force() {
        let mut rng = stream(10, &[]);
        for len in 1..40 {
            for _ in 0..50 {
                let s: Vec<u8> = (0..len).map(|_| rng.random_range(0..2u8)).collect();
                assert_eq!(least_rotation_of(&s), brute_least_rotation(&s), "{s:?}");
            }
        }
    }

    #[test]
    fn identity_and_shift_convention() {
        let a = GsArray::new([vec![1, -1, -1], vec![1, 1, -1], vec![-1, 1, 1], vec![1, 1, 1]]).unwrap();
        assert_eq!(SymmetryElement::identity(3).apply(&a), a);
        let g = SymmetryElement::new(3, [1, 0, 0, 0], [false; 4], [false; 4], [0, 1, 2, 3], 1).unwrap();
        // (x0, x1, x2) -> (x2, x0, x1)
        assert_eq!(g.apply(&a).segment(0), &[-1, 1, -1]);
        assert_eq!(g.apply(&a).segment(1), a.segment(1));
    }

    #[test]
    fn rejects_non_units() {
        assert!(matches!(
            SymmetryElement::new(6, [0; 4], [false; 4], [false; 4], [0, 1, 2, 3], 3),
            Err(Error::NotAUnit { unit: 3, modulus: 6 })
        ));
        assert!(SymmetryElement::new(6, [0; 4], [false; 4], [false; 4], [0, 1, 2, 3], 5).is_ok());
    }

    #[test]
    fn group_action_composition_and_inverse() {
        let mut rng = stream(11, &[]);
        for np in [1usize, 2, 3, 4, 5, 6, 9, 35] {
            for _ in 0..200 {
                let a = GsArray::random(4 * np, &mut rng).unwrap();
                let g1 = SymmetryElement::random(np, &mut rng);
                let g2 = SymmetryElement::random(np, &mut rng);
                assert_eq!(g2.apply(&g1.apply(&a)), g2.compose(&g1).apply(&a));
                assert_eq!(g1.inverse().apply(&g1.apply(&a)), a);
                assert_eq!(g1.compose(&g1.inverse()).apply(&a), a);
            }
        }
    }

    #[test]
    fn composition_is_associative() {
        let mut rng = stream(12, &[]);
        for np in [3usize, 7, 12] {
            for _ in 0..100 {
                let [g1, g2, g3] = [0; 3].map(|_| SymmetryElement::random(np, &mut rng));
                let a = GsArray::random(4 * np, &mut rng).unwrap();
                assert_eq!(g3.compose(&g2).compose(&g1).apply(&a), g3.compose(&g2.compose(&g1)).apply(&a));
            }
        }
    }

    #[test]
    fn order_one_group_draws_are_uniform() {
        // n' = 1: only negations and permutations act, 2^4 * 24 = 384 actions.
        let mut rng = stream(13, &[]);
        let draws = 38_400;
        let mut counts: HashMap<([bool; 4], [usize; 4]), usize> = HashMap::new();
        for _ in 0..draws {
            let g = SymmetryElement::random(1, &mut rng);
            assert_eq!(g.shift, [0; 4]);
            *counts.entry((g.negate, g.perm)).or_default() += 1;
        }
        assert_eq!(counts.len(), 384);
        let mean = draws as f64 / 384.0;
        let sigma = (mean * (1.0 - 1.0 / 384.0)).sqrt();
        for &c in counts.values() {
            assert!((c as f64 - mean).abs() < 5.0 * sigma, "count {c}");
        }
    }

    #[test]
    fn unit_draws_cover_units_mod_five() {
        let mut rng = stream(14, &[]);
        let mut counts = [0usize; 5];
        for _ in 0..8000 {
            counts[SymmetryElement::random(5, &mut rng).unit] += 1;
        }
        assert_eq!(counts[0], 0);
        for &c in &counts[1..] {
            assert!((c as f64 - 2000.0).abs() < 5.0 * (2000.0f64 * 0.75).sqrt());
        }
    }

    #[test]
    fn canonical_form_of_order_four_is_all_plus() {
        for code in 0..16 {
            assert_eq!(canonicalize(&GsArray::from_bits(4, code).unwrap()), GsArray::ones(4).unwrap());
        }
    }

    #[test]
    fn canonical_form_is_orbit_invariant_and_idempotent() {
        let mut rng = stream(15, &[]);
        for np in [3usize, 5, 7, 8, 35] {
            for _ in 0..100 {
                let a = GsArray::random(4 * np, &mut rng).unwrap();
                let g = SymmetryElement::random(np, &mut rng);
                let c = canonicalize(&a);
                assert_eq!(canonicalize(&g.apply(&a)), c);
                assert_eq!(canonicalize(&c), c);
            }
        }
    }

    #[test]
    fn dedup_behaviour() {
        let all4: Vec<GsArray> = (0..16).map(|c| GsArray::from_bits(4, c).unwrap()).collect();
        assert_eq!(dedup(&all4, Exec::default()).len(), 1);

        let mut rng = stream(16, &[]);
        let a = GsArray::random(36, &mut rng).unwrap();
        let g = SymmetryElement::random(9, &mut rng);
        let pair = vec![a.clone(), g.apply(&a)];
        assert_eq!(dedup(&pair, Exec::default()), vec![canonicalize(&a)]);
        assert_eq!(dedup_with_counts(&pair, Exec::Sequential), vec![(canonicalize(&a), 2)]);

        let distinct: Vec<GsArray> = (0..20).map(|_| GsArray::random(60, &mut rng).unwrap()).collect();
        let out = dedup(&distinct, Exec::Sequential);
        assert_eq!(out.len(), 20);
        assert_eq!(out[0], canonicalize(&distinct[0]));
    }

    /// Brute-force stabilizer: enumerate every parameter tuple, keep the
    /// distinct induced (position, sign) maps that fix `a`.
    fn brute_stabilizer(a: &GsArray) -> u64 {
        let np = a.n_prime();
        let mut maps = HashSet::new();
        let shifts: Vec<[usize; 4]> = (0..np.pow(4))
            .map(|m| [m % np, (m / np) % np, (m / np / np) % np, (m / np / np / np) % np])
            .collect();
        for u in units(np) {
            for p in permutations4() {
                for bits in 0..256u32 {
                    let reverse = [0, 1, 2, 3].map(|i| bits >> i & 1 == 1);
                    let negate = [0, 1, 2, 3].map(|i| bits >> (4 + i) & 1 == 1);
                    for &shift in &shifts {
                        let g = SymmetryElement::new(np, shift, reverse, negate, p, u).unwrap();
                        if g.apply(a) == *a {
                            let mut key = Vec::new();
                            for i in 0..4 {
                                for j in 0..np {
                                    let c = g.multiplier(i);
                                    key.push((g.perm[i] * np + (c * j + g.shift[i]) % np, g.negate[i]));
                                }
                            }
                            maps.insert(key);
                        }
                    }
                }
            }
        }
        maps.len() as u64
    }

    #[test]
    fn stabilizer_examples() {
        assert_eq!(stabilizer_order(&GsArray::ones(4).unwrap()), 24);
        // Four identical palindromic segments: every permutation fixes it.
        let seg = vec![1, -1, -1, 1, 1, -1, -1];
        let a = GsArray::new([seg.clone(), seg.clone(), seg.clone(), seg]).unwrap();
        assert_eq!(stabilizer_order(&a) % 24, 0);
    }

    #[test]
    fn stabilizer_matches_brute_force_at_small_orders() {
        let mut rng = stream(17, &[]);
        for np in [1usize, 2, 3] {
            for _ in 0..6 {
                let a = GsArray::random(4 * np, &mut rng).unwrap();
                assert_eq!(stabilizer_order(&a), brute_stabilizer(&a), "{a:?}");
            }
            let ones = GsArray::ones(4 * np).unwrap();
            assert_eq!(stabilizer_order(&ones), brute_stabilizer(&ones));
        }
    }

    /// Orbit partition by union-find over all arrays, using the generators of H.
    fn brute_orbit_count(np: usize) -> usize {
        let n = 4 * np;
        let size = 1usize << n;
        let mut parent: Vec<usize> = (0..size).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut y = x;
            while p[y] != r {
                let next = p[y];
                p[y] = r;
                y = next;
            }
            r
        }
        let code_of = |a: &GsArray| -> usize {
            a.as_slice().iter().enumerate().map(|(b, &x)| ((x > 0) as usize) << b).sum()
        };
        let mut gens = Vec::new();
        for i in 0..4 {
            let mut shift = [0; 4];
            shift[i] = 1 % np;
            let mut reverse = [false; 4];
            reverse[i] = true;
            let mut negate = [false; 4];
            negate[i] = true;
            gens.push(SymmetryElement::new(np, shift, [false; 4], [false; 4], [0, 1, 2, 3], 1).unwrap());
            gens.push(SymmetryElement::new(np, [0; 4], reverse, [false; 4], [0, 1, 2, 3], 1).unwrap());
            gens.push(SymmetryElement::new(np, [0; 4], [false; 4], negate, [0, 1, 2, 3], 1).unwrap());
        }
        gens.push(SymmetryElement::new(np, [0; 4], [false; 4], [false; 4], [1, 0, 2, 3], 1).unwrap());
        gens.push(SymmetryElement::new(np, [0; 4], [false; 4], [false; 4], [1, 2, 3, 0], 1).unwrap());
        for u in units(np) {
            gens.push(SymmetryElement::new(np, [0; 4], [false; 4], [false; 4], [0, 1, 2, 3], u).unwrap());
        }
        for code in 0..size {
            let a = GsArray::from_bits(n, code as u64).unwrap();
            for g in &gens {
                let b = code_of(&g.apply(&a));
                let (ra, rb) = (find(&mut parent, code), find(&mut parent, b));
                if ra != rb {
                    parent[ra] = rb;
                }
            }
        }
        (0..size).filter(|&x| find(&mut parent, x) == x).count()
    }

    #[test]
    fn canonical_forms_count_orbits() {
        for np in [1usize, 2, 3] {
            let all: Vec<GsArray> = (0..1u64 << (4 * np)).map(|c| GsArray::from_bits(4 * np, c).unwrap()).collect();
            assert_eq!(dedup(&all, Exec::default()).len(), brute_orbit_count(np), "n' = {np}");
        }
    }
}
