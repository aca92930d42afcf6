//! Pairwise (tree) summation helpers.

use num_complex::Complex64;

const LEAF: usize = 8;

/// Sums `count` vectors of length `len`, produced on demand by `fill`, with a
/// fixed binary tree over the index range. The result depends only on the
/// inputs, not on any scheduling.
pub(crate) fn pairwise_vec_sum<F>(count: usize, len: usize, fill: &F) -> Vec<Complex64>
where
    F: Fn(usize, &mut [Complex64]),
{
    fn rec<F: Fn(usize, &mut [Complex64])>(lo: usize, hi: usize, len: usize, fill: &F) -> Vec<Complex64> {
        if hi - lo <= LEAF {
            let mut acc = vec![Complex64::new(0.0, 0.0); len];
            for i in lo..hi {
                fill(i, &mut acc);
            }
            return acc;
        }
        let mid = lo + (hi - lo) / 2;
        let mut left = rec(lo, mid, len, fill);
        let right = rec(mid, hi, len, fill);
        for (a, b) in left.iter_mut().zip(&right) {
            *a += b;
        }
        left
    }
    rec(0, count, len, fill)
}

/// Pairwise sum of a slice of reals.
pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}
