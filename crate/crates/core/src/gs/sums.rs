use serde::{Deserialize, Serialize};

use super::GsArray;

/// Row sums `k_i` of the four segments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SegmentSums(pub [i64; 4]);

impl SegmentSums {
    pub fn sum_of_squares(&self) -> i64 {
        self.0.iter().map(|k| k * k).sum()
    }

    /// Absolute values in ascending order; invariant under the symmetry group.
    pub fn sorted_abs(&self) -> [u32; 4] {
        let mut v = self.0.map(|k| k.unsigned_abs() as u32);
        v.sort_unstable();
        v
    }
}

pub fn segment_sums(a: &GsArray) -> SegmentSums {
    let mut k = [0i64; 4];
    for (i, seg) in a.segments().enumerate() {
        k[i] = seg.iter().map(|&x| x as i64).sum();
    }
    SegmentSums(k)
}

/// All ascending quadruples `(|k_1|, .., |k_4|)` with `k_i = n' (mod 2)` and
/// `sum k_i^2 = n`, in lexicographic order.
pub fn segment_sum_solutions(n: usize) -> Vec<[u32; 4]> {
    if n == 0 || !n.is_multiple_of(4) {
        return Vec::new();
    }
    let parity = (n / 4) % 2;
    let n = n as u64;
    let max = (n as f64).sqrt() as u32 + 1;
    let candidates: Vec<u32> = (0..=max).filter(|&k| k as usize % 2 == parity).collect();
    let mut out = Vec::new();
    for (ia, &a) in candidates.iter().enumerate() {
        for (ib, &b) in candidates.iter().enumerate().skip(ia) {
            for (ic, &c) in candidates.iter().enumerate().skip(ib) {
                for &d in &candidates[ic..] {
                    let s = [a, b, c, d].iter().map(|&x| (x as u64) * (x as u64)).sum::<u64>();
                    if s == n {
                        out.push([a, b, c, d]);
                    }
                }
            }
        }
    }
    out
}
