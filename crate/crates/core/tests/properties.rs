use std::f64::consts::PI;

use cosetap::analysis::{auc_mann_whitney, whitenoise_variance_closed_form, RocCurve};
use cosetap::estimator::{assemble_cap, estimate_multicluster, ls_reconstruct};
use cosetap::ruler::{is_circular_sparse_ruler, modular_difference_set, verify_pair_coverage};
use cosetap::sensing::Transforms;
use cosetap::sysmat::{build_psi, build_system_matrix, check_identifiability, dense};
use cosetap::{Complex64, CosetObservationSet, CosetPattern, CovarianceStack, PatternFamily};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn pattern_strategy(max_period: usize) -> impl Strategy<Value = CosetPattern> {
    (2..=max_period).prop_flat_map(|n| {
        proptest::collection::btree_set(0..n, 1..=n)
            .prop_map(move |s| CosetPattern::new(n, s.into_iter().collect()).unwrap())
    })
}

/// A pattern that always contains the dense run `0..=n/2`, hence identifiable.
fn identifiable_strategy(max_period: usize) -> impl Strategy<Value = CosetPattern> {
    (2..=max_period).prop_flat_map(|n| {
        proptest::collection::btree_set(0..n, 0..n).prop_map(move |mut s| {
            s.extend(0..=n / 2);
            CosetPattern::new(n, s.into_iter().collect()).unwrap()
        })
    })
}

/// Families of equal-size patterns on a small period.
fn family_strategy() -> impl Strategy<Value = PatternFamily> {
    (3usize..7).prop_flat_map(|n| (Just(n), 1..n)).prop_flat_map(|(n, size)| {
        proptest::collection::vec(proptest::sample::subsequence((0..n).collect::<Vec<_>>(), size), 1..7).prop_map(
            move |sets| PatternFamily::new(sets.into_iter().map(|m| CosetPattern::new(n, m).unwrap()).collect()).unwrap(),
        )
    })
}

fn complex_vec(len: usize) -> impl Strategy<Value = Vec<Complex64>> {
    proptest::collection::vec((-5.0..5.0f64, -5.0..5.0f64).prop_map(|(a, b)| Complex64::new(a, b)), len)
}

/// Sum of outer products of random vectors: Hermitian and positive semidefinite.
fn gram(vectors: &[Complex64], order: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); order * order];
    for v in vectors.chunks(order) {
        for c in 0..order {
            for r in 0..order {
                out[c * order + r] += v[r] * v[c].conj();
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn identifiability_criteria_agree(p in pattern_strategy(20)) {
        let by_gamma = check_identifiability(&p);
        prop_assert_eq!(by_gamma, is_circular_sparse_ruler(&p));
        prop_assert_eq!(by_gamma, dense::rank(&dense::system_matrix(&p)) == p.period());
    }

    #[test]
    fn gamma_counts_ordered_pairs(p in pattern_strategy(30)) {
        let sys = build_system_matrix(&p);
        let gamma = sys.gamma();
        let n = p.period();
        prop_assert_eq!(gamma.iter().sum::<usize>(), p.len() * p.len());
        prop_assert_eq!(gamma[0], p.len());
        for k in 1..n {
            prop_assert_eq!(gamma[k], gamma[n - k]);
        }
        prop_assert_eq!(gamma, modular_difference_set(&p).multiplicity().to_vec());
    }

    #[test]
    fn rotation_preserves_lag_multiplicities(p in pattern_strategy(24), shift in 0usize..24) {
        let q = p.rotated(shift);
        let (sp, sq) = (build_system_matrix(&p), build_system_matrix(&q));
        prop_assert_eq!(sp.gamma(), sq.gamma());
        prop_assert_eq!(is_circular_sparse_ruler(&p), is_circular_sparse_ruler(&q));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn fast_least_squares_matches_dense(
        p in identifiable_strategy(16),
        data in complex_vec(2 * 16 * 16),
    ) {
        let m = p.len();
        let n = p.period();
        let blocks = 2;
        let stack = CovarianceStack::from_matrices(m, blocks, 1, data[..m * m * blocks].to_vec()).unwrap();
        let fast = ls_reconstruct(&stack, &build_system_matrix(&p)).unwrap();
        let rc = dense::system_matrix(&p).map(|v| Complex64::new(v, 0.0));
        let normal = rc.transpose() * &rc;
        let inv = normal.try_inverse().expect("identifiable pattern has full column rank");
        for l in 0..blocks {
            let y = DVector::from_column_slice(stack.matrix(l));
            let r = &inv * rc.transpose() * y;
            for k in 0..n {
                prop_assert!((r[k] - fast.vector(l)[k]).norm() < 1e-9, "lag {k}: {} vs {}", r[k], fast.vector(l)[k]);
            }
        }
    }

    #[test]
    fn hermitian_input_gives_real_cap(p in identifiable_strategy(14), data in complex_vec(6 * 14)) {
        let m = p.len();
        let stack = CovarianceStack::from_matrices(m, 1, 6, gram(&data[..6 * m], m)).unwrap();
        let rbar = ls_reconstruct(&stack, &build_system_matrix(&p)).unwrap();
        let n = p.period();
        for k in 1..n {
            prop_assert!((rbar.vector(0)[k] - rbar.vector(0)[n - k].conj()).norm() < 1e-9);
        }
        let cap = assemble_cap(&rbar, "");
        prop_assert!(cap.imag_residue < 1e-9);
    }

    #[test]
    fn reconstruction_is_linear(
        p in identifiable_strategy(12),
        a in complex_vec(12 * 12),
        b in complex_vec(12 * 12),
        s in -3.0..3.0f64,
    ) {
        let m = p.len();
        let sys = build_system_matrix(&p);
        let (a, b) = (gram(&a[..m * m], m), gram(&b[..m * m], m));
        let mix: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x * s + y).collect();
        let cap = |d: Vec<Complex64>| {
            assemble_cap(&ls_reconstruct(&CovarianceStack::from_matrices(m, 1, 1, d).unwrap(), &sys).unwrap(), "").values
        };
        let (ca, cb, cm) = (cap(a), cap(b), cap(mix));
        for k in 0..ca.len() {
            prop_assert!((cm[k] - (s * ca[k] + cb[k])).abs() < 1e-9 * (1.0 + cm[k].abs()));
        }
    }

    #[test]
    fn coset_transform_obeys_aliasing(n in 2usize..10, l in 1usize..12, seed in complex_vec(9 * 11)) {
        let grid = n * l;
        let x: Vec<Complex64> = (0..grid).map(|t| seed[t % seed.len()] * (1.0 + t as f64 / grid as f64)).collect();
        let tr = Transforms::new(n, l);
        let spectrum: Vec<Complex64> = (0..grid)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(t, v)| v * Complex64::from_polar(1.0, -2.0 * PI * ((k * t) % grid) as f64 / grid as f64))
                    .sum()
            })
            .collect();
        for coset in 0..n {
            let ybar = tr.coset_dtft_of(&x, coset);
            for lb in 0..l {
                let expected: Complex64 = (0..n)
                    .map(|i| spectrum[lb + i * l] * Complex64::from_polar(1.0 / n as f64, 2.0 * PI * ((coset * i) % n) as f64 / n as f64))
                    .sum();
                prop_assert!((ybar[lb] - expected).norm() < 1e-9 * (1.0 + expected.norm()));
            }
        }
    }

    #[test]
    fn multicluster_average_is_mean_of_clusters(data in complex_vec(2 * 3 * 4 * 5)) {
        use cosetap::sensing::SensorObservation;
        let p = CosetPattern::new(4, vec![0, 1, 2]).unwrap();
        let blocks = 5;
        let sensors = |cluster: usize| -> Vec<SensorObservation> {
            (0..2)
                .map(|t| {
                    let off = (cluster * 2 + t) * 15;
                    SensorObservation {
                        index: t,
                        cluster,
                        group: 0,
                        coset_spectra: (0..15).map(|j| data[(off + j) % data.len()]).collect(),
                        full_spectrum: None,
                    }
                })
                .collect()
        };
        let sets: Vec<CosetObservationSet> =
            (0..2).map(|d| CosetObservationSet::new(p.clone(), blocks, sensors(d)).unwrap()).collect();
        let est = estimate_multicluster(&sets, &build_system_matrix(&p)).unwrap();
        for k in 0..est.average.values.len() {
            let mean = (est.per_cluster[0].values[k] + est.per_cluster[1].values[k]) / 2.0;
            prop_assert!((est.average.values[k] - mean).abs() < 1e-12 * (1.0 + mean.abs()));
        }
    }

    #[test]
    fn extra_cosets_never_raise_white_noise_nmse(p in identifiable_strategy(18), extra in 0usize..18) {
        let q = p.extended(&[extra % p.period()]).unwrap();
        let a = whitenoise_variance_closed_form(&p, 2.0, 10);
        let b = whitenoise_variance_closed_form(&q, 2.0, 10);
        prop_assert!(b.nmse <= a.nmse + 1e-15);
        prop_assert!((a.variance - 4.0 * a.nmse).abs() < 1e-12);
    }

    #[test]
    fn pair_cover_criteria_agree(family in family_strategy()) {
        let covered = verify_pair_coverage(&family);
        let n = family.period();
        prop_assert_eq!(covered, build_psi(&family).is_identifiable());
        prop_assert_eq!(covered, dense::rank(&dense::psi(&family)) == n * n);
    }

    #[test]
    fn roc_is_monotone_in_unit_square(
        active in proptest::collection::vec(-3.0..3.0f64, 1..40),
        quiet in proptest::collection::vec(-3.0..3.0f64, 1..40),
    ) {
        let roc = RocCurve::from_statistics(&active, &quiet);
        prop_assert!(roc.pfa.iter().chain(&roc.pd).all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(roc.pfa.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(roc.pd.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!((roc.auc - auc_mann_whitney(&active, &quiet)).abs() < 1e-12);
    }
}

#[test]
fn dense_and_structured_system_share_lag_order() {
    let p = CosetPattern::new(7, vec![0, 1, 3]).unwrap();
    let sys = build_system_matrix(&p);
    let rc: DMatrix<f64> = dense::system_matrix(&p);
    for (row, &lag) in sys.row_map().iter().enumerate() {
        for col in 0..7 {
            assert_eq!(rc[(row, col)], if col == lag { 1.0 } else { 0.0 });
        }
    }
}
