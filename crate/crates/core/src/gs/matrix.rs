use super::GsArray;
use crate::error::{Error, Result};

/// Dense square matrix with entries in {-1, +1}, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignMatrix {
    n: usize,
    data: Vec<i8>,
}

impl SignMatrix {
    pub fn from_rows(rows: &[Vec<i64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::NotSquare { rows: n, bad_row: r, len: row.len() });
            }
            for (c, &v) in row.iter().enumerate() {
                if v != 1 && v != -1 {
                    return Err(Error::InvalidEntry { row: r, col: c, value: v });
                }
                data.push(v as i8);
            }
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, r: usize, c: usize) -> i8 {
        self.data[r * self.n + c]
    }

    pub fn row(&self, r: usize) -> &[i8] {
        &self.data[r * self.n..(r + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<i64>> {
        (0..self.n).map(|r| self.row(r).iter().map(|&x| x as i64).collect()).collect()
    }

    /// `M M^T` in exact integer arithmetic, row-major.
    pub fn gram(&self) -> Vec<i64> {
        let n = self.n;
        let mut g = vec![0i64; n * n];
        for r in 0..n {
            for c in r..n {
                let v = dot(self.row(r), self.row(c));
                g[r * n + c] = v;
                g[c * n + r] = v;
            }
        }
        g
    }
}

fn dot(a: &[i8], b: &[i8]) -> i64 {
    a.iter().zip(b).map(|(&x, &y)| (x as i32 * y as i32) as i64).sum()
}

#[derive(Clone, Copy)]
enum Block {
    /// Circulant `X`: `X[r][c] = x[(c - r) mod n']`.
    Circ(usize),
    /// `X F`, with `F` the anti-identity.
    RightF(usize),
    /// `F X`.
    LeftF(usize),
}

// Block layout of the GS array, segments indexed A=0, B=1, C=2, D=3.
const LAYOUT: [[(i8, Block); 4]; 4] = {
    use Block::*;
    [
        [(1, Circ(0)), (1, RightF(1)), (1, RightF(2)), (1, RightF(3))],
        [(-1, RightF(1)), (1, Circ(0)), (-1, LeftF(3)), (1, LeftF(2))],
        [(-1, RightF(2)), (1, LeftF(3)), (1, Circ(0)), (-1, LeftF(1))],
        [(-1, RightF(3)), (-1, LeftF(2)), (1, LeftF(1)), (1, Circ(0))],
    ]
};

/// Assembles the full `n x n` Goethals-Seidel matrix.
pub fn build_matrix(a: &GsArray) -> SignMatrix {
    let np = a.n_prime();
    let n = 4 * np;
    let mut data = vec![0i8; n * n];
    for (br, blocks) in LAYOUT.iter().enumerate() {
        for (bc, &(sign, block)) in blocks.iter().enumerate() {
            for r in 0..np {
                for c in 0..np {
                    let v = match block {
                        Block::Circ(s) => a.get(s, (c + np - r) % np),
                        Block::RightF(s) => a.get(s, (2 * np - 1 - c - r) % np),
                        Block::LeftF(s) => a.get(s, (c + r + 1) % np),
                    };
                    data[(br * np + r) * n + bc * np + c] = sign * v;
                }
            }
        }
    }
    SignMatrix { n, data }
}

/// `M M^T == n I` in exact integer arithmetic.
pub fn verify_hadamard(m: &SignMatrix) -> bool {
    let n = m.n;
    for r in 0..n {
        if dot(m.row(r), m.row(r)) != n as i64 {
            return false;
        }
        for c in r + 1..n {
            if dot(m.row(r), m.row(c)) != 0 {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_four_layout() {
        let a = GsArray::ones(4).unwrap();
        let m = build_matrix(&a);
        let expected = vec![vec![1, 1, 1, 1], vec![-1, 1, -1, 1], vec![-1, 1, 1, -1], vec![-1, -1, 1, 1]];
        assert_eq!(m.rows(), expected);
        assert!(verify_hadamard(&m));
    }

    #[test]
    fn right_f_reverses_columns() {
        // b = (b0, b1, b2) encoded as distinguishable signs via two arrays.
        let a = GsArray::new([vec![1, 1, 1], vec![1, -1, -1], vec![1, 1, 1], vec![1, 1, 1]]).unwrap();
        let m = build_matrix(&a);
        // First row of block BF is (b2, b1, b0).
        assert_eq!(&m.row(0)[3..6], &[-1, -1, 1]);
    }

    #[test]
    fn all_n4_arrays_are_hadamard() {
        for code in 0..16 {
            assert!(verify_hadamard(&build_matrix(&GsArray::from_bits(4, code).unwrap())));
        }
    }

    #[test]
    fn n8_example_is_hadamard() {
        let a = GsArray::new([vec![1, 1], vec![1, 1], vec![1, -1], vec![1, -1]]).unwrap();
        assert!(verify_hadamard(&build_matrix(&a)));
    }

    #[test]
    fn all_ones_is_not_hadamard() {
        let m = SignMatrix::from_rows(&vec![vec![1; 4]; 4]).unwrap();
        assert!(!verify_hadamard(&m));
    }

    #[test]
    fn rejects_bad_entries_and_shapes() {
        assert!(matches!(
            SignMatrix::from_rows(&[vec![1, 0], vec![1, 1]]),
            Err(Error::InvalidEntry { row: 0, col: 1, value: 0 })
        ));
        assert!(matches!(SignMatrix::from_rows(&[vec![1, 1], vec![1]]), Err(Error::NotSquare { .. })));
    }
}
