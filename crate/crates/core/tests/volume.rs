use achmetric::model::random_torsion;
use achmetric::solver::solve;
use achmetric::volume::{density, expansion, numeric_profile};
use achmetric::{Error, JFamily, PhmModel, SolverOptions};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn flat(n: usize) -> PhmModel {
    PhmModel::flat_heisenberg(n, DMatrix::identity(n, n)).unwrap()
}

fn torsion_n1(a: f64) -> PhmModel {
    PhmModel::torsion_deformed(1, DMatrix::identity(1, 1), DMatrix::from_element(1, 1, c(a, 0.0))).unwrap()
}

#[test]
fn flat_density_is_one() {
    for n in 1..=3 {
        let st = solve(&flat(n), &SolverOptions::default()).unwrap();
        let lam = density(&st).unwrap();
        for k in 0..lam.trunc() {
            let want = if k == 0 { 1.0 } else { 0.0 };
            assert!((lam.coeff_or_zero(k) - want).norm() < 1e-14);
        }
        let rep = expansion(&st).unwrap();
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        assert_eq!(rep.v[0], sign);
        assert!(rep.v[1..].iter().all(|x| x.abs() < 1e-14));
        assert_eq!(rep.l, 0.0);
        assert_eq!(rep.c.len(), n + 1);
    }
}

#[test]
fn flat_n2_coefficients() {
    let rep = expansion(&solve(&flat(2), &SolverOptions::default()).unwrap()).unwrap();
    assert_eq!(rep.v, vec![1.0, 0.0, 0.0, 0.0]);
    // ∫_{ε₀}^{ε} φ^{−4} dφ = −ε^{−3}/3 + …
    assert!((rep.c[0] + 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn density_starts_at_one_and_is_real() {
    for m in [torsion_n1(0.3), random_torsion(2, 1.0, 2).unwrap(), PhmModel::tanno_example(0.5).unwrap()] {
        let st = solve(&m, &SolverOptions::default()).unwrap();
        let lam = density(&st).unwrap();
        assert!((lam.coeff_or_zero(0) - 1.0).norm() < 1e-14);
        for k in 0..lam.trunc() {
            assert!(lam.coeff_or_zero(k).im.abs() < 1e-10);
        }
        assert!(expansion(&st).unwrap().imag_residual < 1e-10);
    }
}

#[test]
fn log_term_vanishes_for_n1() {
    for seed in 0..5 {
        let st = solve(&random_torsion(1, 0.5, seed).unwrap(), &SolverOptions::default()).unwrap();
        assert!(expansion(&st).unwrap().l.abs() < 1e-9);
    }
}

#[test]
fn log_term_invariant_under_contact_rescaling() {
    let m = random_torsion(2, 1.0, 9).unwrap();
    let l = expansion(&solve(&m, &SolverOptions::default()).unwrap()).unwrap().l;
    assert!(l.abs() > 1e-6);
    for ups in [-0.3, 0.2, 0.5] {
        let lh = expansion(&solve(&m.rescale_contact_form(ups), &SolverOptions::default()).unwrap()).unwrap().l;
        assert!((lh - l).abs() <= 1e-8 * l.abs(), "Υ={ups}: {lh} vs {l}");
    }
}

#[test]
fn log_term_ignores_frame_relabelling() {
    // exp of a skew-Hermitian block keeps J and only rotates the (1,0) frame
    let base = PhmModel::sl2_affine(2, 2.0).unwrap();
    let a = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.3), c(0.2, 0.1), c(-0.2, 0.1), c(0.0, -0.5)]);
    let fam = JFamily::Exponential { a, b: DMatrix::zeros(2, 2) };
    let l0 = expansion(&solve(&base, &SolverOptions::default()).unwrap()).unwrap().l;
    for t in [0.3, 0.7, 1.0] {
        let l = expansion(&solve(&base.deform_j(&fam, t).unwrap(), &SolverOptions::default()).unwrap()).unwrap().l;
        assert!((l - l0).abs() < 1e-12 * (1.0 + l0.abs()));
    }
}

#[test]
fn flat_profile_is_exact() {
    for n in 1..=2 {
        let st = solve(&flat(n), &SolverOptions::default()).unwrap();
        let rows = numeric_profile(&st, &[-0.05, -1e-2, -1e-3], -0.1).unwrap();
        for r in rows {
            assert!(r.relative < 1e-12, "{r:?}");
        }
    }
}

#[test]
fn profile_difference_shrinks() {
    let st = solve(&random_torsion(2, 1.0, 11).unwrap(), &SolverOptions::default()).unwrap();
    let rows = numeric_profile(&st, &[-3e-2, -1e-2, -1e-3], -0.1).unwrap();
    assert!(rows[0].difference > rows[1].difference && rows[1].difference > rows[2].difference, "{rows:?}");
    // the truncated series misses an O(ε) tail
    assert!(rows.iter().all(|r| r.difference <= 1.0 * r.eps.abs()), "{rows:?}");
}

#[test]
fn profile_window_is_enforced() {
    let st = solve(&torsion_n1(0.3), &SolverOptions::default()).unwrap();
    assert!(matches!(numeric_profile(&st, &[-0.5], -0.1), Err(Error::WindowTooLarge(_))));
    assert!(matches!(numeric_profile(&st, &[-1e-2], -0.2), Err(Error::WindowTooLarge(_))));
    assert!(matches!(numeric_profile(&st, &[0.01], -0.1), Err(Error::WindowTooLarge(_))));
    assert!(numeric_profile(&st, &[-0.1], -0.05).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn n1_log_term_vanishes(seed in 0u64..100_000, norm in 0.01f64..0.5) {
        let st = solve(&random_torsion(1, norm, seed).unwrap(), &SolverOptions::default()).unwrap();
        let rep = expansion(&st).unwrap();
        prop_assert!(rep.l.abs() <= 1e-9);
        prop_assert_eq!(rep.v[0], -1.0);
    }
}
