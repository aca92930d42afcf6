//! Structured matrices of the compressed model.
//!
//! The least-squares system matrix `R_c = (C ⊗ C) T` and the correlated-bins
//! matrix `Ψ` are binary selection matrices whose normal matrices are diagonal.
//! The estimator therefore works on index maps ([`SystemMatrix::row_map`],
//! [`PsiMatrix::pair_counts`]); dense builders in [`dense`] exist for
//! cross-checking.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::ruler::{modular_difference_set, CosetPattern, PatternFamily};

/// Tolerance for rank and unitarity checks on structured matrices.
pub const STRUCTURE_TOL: f64 = 1e-10;

/// `[B]_{n,i} = exp(j 2π n i / N) / N`, mapping bin spectra to coset spectra.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationMatrix {
    order: usize,
    entries: Vec<Complex64>,
}

impl ModulationMatrix {
    pub fn new(order: usize) -> Self {
        let scale = 1.0 / order as f64;
        let mut entries = Vec::with_capacity(order * order);
        for n in 0..order {
            for i in 0..order {
                let phase = 2.0 * PI * ((n * i) % order) as f64 / order as f64;
                entries.push(Complex64::from_polar(scale, phase));
            }
        }
        Self { order, entries }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Entry at row `n`, column `i` (0-based).
    pub fn get(&self, n: usize, i: usize) -> Complex64 {
        self.entries[n * self.order + i]
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    /// `B x` for a length-`N` vector of bin values.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.order)
            .map(|n| (0..self.order).map(|i| self.get(n, i) * x[i]).sum())
            .collect()
    }
}

pub fn build_modulation_matrix(order: usize) -> ModulationMatrix {
    ModulationMatrix::new(order)
}

/// The `N² × N` repetition matrix `T` with `vec(R̄) = T r̄` for circulant `R̄`.
///
/// Row `q` (0-based) is the unit row `(q - ⌊q/N⌋) mod N`: vec index `q = n' N + n`
/// holds entry `(n, n')`, whose lag is `(n - n') mod N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RepetitionMatrix {
    order: usize,
}

impl RepetitionMatrix {
    pub fn new(order: usize) -> Self {
        Self { order }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Column holding the single one in row `q`.
    pub fn column_of_row(&self, q: usize) -> usize {
        let n = self.order;
        (q - q / n) % n
    }
}

/// Index form of `R_c` for one pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemMatrix {
    pattern: CosetPattern,
    row_map: Vec<usize>,
    gamma: Vec<usize>,
}

impl SystemMatrix {
    pub fn pattern(&self) -> &CosetPattern {
        &self.pattern
    }

    pub fn period(&self) -> usize {
        self.pattern.period()
    }

    /// Lag (0-based column of `R_c`) for each vec index `m' M + m` of an `M × M`
    /// covariance, i.e. `(n_m - n_m') mod N`.
    pub fn row_map(&self) -> &[usize] {
        &self.row_map
    }

    /// Diagonal of `R_cᵀ R_c`: number of ordered coset pairs realising each lag.
    pub fn gamma(&self) -> &[usize] {
        &self.gamma
    }

    pub fn is_identifiable(&self) -> bool {
        self.gamma.iter().all(|&g| g > 0)
    }

    /// Lags with `γ = 0`.
    pub fn missing_lags(&self) -> Vec<usize> {
        (0..self.gamma.len()).filter(|&k| self.gamma[k] == 0).collect()
    }

    /// Errors with the unrealised lags when `R_c` lacks full column rank.
    pub fn require_identifiable(&self) -> Result<()> {
        if self.is_identifiable() {
            Ok(())
        } else {
            Err(Error::NotIdentifiable { missing: self.missing_lags() })
        }
    }
}

pub fn build_system_matrix(pattern: &CosetPattern) -> SystemMatrix {
    let n = pattern.period();
    let marks = pattern.marks();
    let m = marks.len();
    let mut row_map = Vec::with_capacity(m * m);
    for &col in marks {
        for &row in marks {
            row_map.push((row + n - col) % n);
        }
    }
    let gamma = modular_difference_set(pattern).multiplicity().to_vec();
    SystemMatrix { pattern: pattern.clone(), row_map, gamma }
}

/// Full column rank of `R_c`, decided from the γ-diagonal.
pub fn check_identifiability(pattern: &CosetPattern) -> bool {
    build_system_matrix(pattern).is_identifiable()
}

/// Index form of `Ψ`, the stacked `C_z ⊗ C_z` for a pattern family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PsiMatrix {
    family: PatternFamily,
    pair_counts: Vec<usize>,
}

impl PsiMatrix {
    pub fn family(&self) -> &PatternFamily {
        &self.family
    }

    pub fn period(&self) -> usize {
        self.family.period()
    }

    /// Number of groups observing each ordered coset pair, indexed by the vec
    /// index `n' N + n` of entry `(n, n')`. Equals the diagonal of `ΨᵀΨ`.
    pub fn pair_counts(&self) -> &[usize] {
        &self.pair_counts
    }

    pub fn is_identifiable(&self) -> bool {
        self.pair_counts.iter().all(|&c| c > 0)
    }

    /// Unobserved unordered pairs `(f, g)`, `f <= g`.
    pub fn missing_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.period();
        let mut out = Vec::new();
        for f in 0..n {
            for g in f..n {
                if self.pair_counts[g * n + f] == 0 {
                    out.push((f, g));
                }
            }
        }
        out
    }

    pub fn require_identifiable(&self) -> Result<()> {
        if self.is_identifiable() {
            Ok(())
        } else {
            Err(Error::UncoveredPairs { missing: self.missing_pairs() })
        }
    }
}

pub fn build_psi(family: &PatternFamily) -> PsiMatrix {
    let n = family.period();
    let mut pair_counts = vec![0usize; n * n];
    for p in family.patterns() {
        for &col in p.marks() {
            for &row in p.marks() {
                pair_counts[col * n + row] += 1;
            }
        }
    }
    PsiMatrix { family: family.clone(), pair_counts }
}

/// Dense materialisations, for cross-checking the index representations.
pub mod dense {
    use nalgebra::{DMatrix, SVD};
    use num_complex::Complex64;

    use super::*;

    /// `M × N` selection matrix `C`.
    pub fn selection(pattern: &CosetPattern) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(pattern.len(), pattern.period());
        for (row, &mark) in pattern.marks().iter().enumerate() {
            c[(row, mark)] = 1.0;
        }
        c
    }

    /// `N² × N` repetition matrix `T`.
    pub fn repetition(order: usize) -> DMatrix<f64> {
        let t = RepetitionMatrix::new(order);
        let mut out = DMatrix::zeros(order * order, order);
        for q in 0..order * order {
            out[(q, t.column_of_row(q))] = 1.0;
        }
        out
    }

    pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        a.kronecker(b)
    }

    /// `R_c = (C ⊗ C) T`.
    pub fn system_matrix(pattern: &CosetPattern) -> DMatrix<f64> {
        let c = selection(pattern);
        kron(&c, &c) * repetition(pattern.period())
    }

    /// `Ψ`, stacking `C_z ⊗ C_z` over the family.
    pub fn psi(family: &PatternFamily) -> DMatrix<f64> {
        let n = family.period();
        let m = family.marks_per_pattern();
        let mut out = DMatrix::zeros(m * m * family.len(), n * n);
        for (z, p) in family.patterns().iter().enumerate() {
            let c = selection(p);
            let block = kron(&c, &c);
            out.view_mut((z * m * m, 0), (m * m, n * n)).copy_from(&block);
        }
        out
    }

    pub fn modulation(order: usize) -> DMatrix<Complex64> {
        let b = ModulationMatrix::new(order);
        DMatrix::from_fn(order, order, |r, c| b.get(r, c))
    }

    /// Numerical rank from singular values above [`STRUCTURE_TOL`].
    pub fn rank(matrix: &DMatrix<f64>) -> usize {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return 0;
        }
        let svd = SVD::new(matrix.clone(), false, false);
        svd.singular_values.iter().filter(|&&s| s > STRUCTURE_TOL).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pat(n: usize, marks: &[usize]) -> CosetPattern {
        CosetPattern::new(n, marks.to_vec()).unwrap()
    }

    #[test]
    fn modulation_small_orders() {
        let b1 = ModulationMatrix::new(1);
        assert!((b1.get(0, 0) - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        let b2 = ModulationMatrix::new(2);
        let expect = [[0.5, 0.5], [0.5, -0.5]];
        for r in 0..2 {
            for c in 0..2 {
                assert!((b2.get(r, c) - Complex64::new(expect[r][c], 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn modulation_is_scaled_unitary() {
        for n in [1, 2, 5, 18, 40] {
            let b = dense::modulation(n);
            let prod = b.clone() * b.adjoint() * Complex64::new(n as f64, 0.0);
            for r in 0..n {
                assert!((b[(0, r)] - Complex64::new(1.0 / n as f64, 0.0)).norm() < 1e-15);
                for c in 0..n {
                    let id = if r == c { 1.0 } else { 0.0 };
                    assert!((prod[(r, c)] - Complex64::new(id, 0.0)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn repetition_rows_and_column_sums() {
        for n in 1..9 {
            let t = dense::repetition(n);
            for q in 0..n * n {
                assert_eq!(t.row(q).sum(), 1.0);
            }
            for c in 0..n {
                assert_eq!(t.column(c).sum(), n as f64);
            }
        }
    }

    #[test]
    fn gamma_of_full_pattern_is_flat() {
        let s = build_system_matrix(&CosetPattern::full(7).unwrap());
        assert_eq!(s.gamma(), &[7; 7]);
    }

    #[test]
    fn gamma_of_table_ruler() {
        let s = build_system_matrix(&pat(18, &[0, 1, 4, 7, 9]));
        assert_eq!(s.gamma()[0], 5);
        assert_eq!(s.gamma()[1], 1);
        assert_eq!(s.gamma().iter().sum::<usize>(), 25);
        assert!(s.gamma().iter().all(|&g| g >= 1));
        assert!(s.is_identifiable());
    }

    #[test]
    fn identifiability_examples() {
        assert!(check_identifiability(&pat(18, &[0, 1, 4, 7, 9])));
        assert!(!check_identifiability(&pat(6, &[0, 1, 2])));
        assert!(check_identifiability(&CosetPattern::full(6).unwrap()));
        let err = build_system_matrix(&pat(6, &[0, 1, 2])).require_identifiable().unwrap_err();
        assert_eq!(err, Error::NotIdentifiable { missing: vec![3] });
    }

    #[test]
    fn gamma_equals_dense_normal_diagonal() {
        for marks in [vec![0, 1, 4, 7, 9], vec![0, 2, 3], vec![5], vec![0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17]] {
            let p = pat(18, &marks);
            let rc = dense::system_matrix(&p);
            let normal = rc.transpose() * &rc;
            let s = build_system_matrix(&p);
            for r in 0..18 {
                for c in 0..18 {
                    let want = if r == c { s.gamma()[r] as f64 } else { 0.0 };
                    assert_eq!(normal[(r, c)], want);
                }
            }
            // the one in row q of R_c sits at column row_map[q]
            for (q, &lag) in s.row_map().iter().enumerate() {
                assert_eq!(rc[(q, lag)], 1.0);
            }
        }
    }

    #[test]
    fn psi_examples() {
        let fig2 = PatternFamily::new(vec![
            pat(5, &[0, 1, 2]),
            pat(5, &[0, 3, 4]),
            pat(5, &[1, 3, 4]),
            pat(5, &[2, 3, 4]),
        ])
        .unwrap();
        let psi = build_psi(&fig2);
        assert!(psi.is_identifiable());
        assert_eq!(dense::rank(&dense::psi(&fig2)), 25);

        let single = PatternFamily::new(vec![pat(5, &[0, 1, 2])]).unwrap();
        let psi = build_psi(&single);
        assert!(!psi.is_identifiable());
        assert!(dense::rank(&dense::psi(&single)) < 25);
        assert!(matches!(psi.require_identifiable(), Err(Error::UncoveredPairs { .. })));
    }
}
