use achmetric::model::random_torsion;
use achmetric::solver::{probe_matrix, rescale_check, solve, BlockKind};
use achmetric::{LaurentJet, PhmModel, SolverOptions, SolverState};
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

fn max_coeff(j: &LaurentJet) -> f64 {
    (j.min_deg()..j.trunc()).map(|k| j.coeff_or_zero(k).norm()).fold(0.0, f64::max)
}

fn max_ein(st: &SolverState) -> f64 {
    st.curvature().ein_matrix().iter().flatten().map(max_coeff).fold(0.0, f64::max)
}

#[test]
fn boundary_data_already_solve_the_flat_model() {
    for n in 1..=3 {
        let m = flat(n);
        let start = SolverState::unsolved(&m, &SolverOptions::default()).unwrap();
        assert!(max_ein(&start) < 1e-12, "n={n}");
        let st = solve(&m, &SolverOptions::default()).unwrap();
        assert_eq!(st.solved_through(), n as i32 + 1);
        for rep in st.stages() {
            assert!(rep.residual_before < 1e-12 && rep.residual_after < 1e-12);
            assert_eq!(rep.iterations, 0);
        }
        assert!(st.s().max_diff(start.s()) == 0.0);
        for (a, b) in st.eta().iter().zip(start.eta()) {
            assert!(a.max_diff(b) == 0.0);
        }
    }
}

#[test]
fn solve_is_deterministic() {
    let m = random_torsion(2, 1.0, 3).unwrap();
    let a = solve(&m, &SolverOptions::default()).unwrap();
    let b = solve(&m, &SolverOptions::default()).unwrap();
    let bits = |st: &SolverState| {
        let mut out = Vec::new();
        for j in std::iter::once(st.s()).chain(st.h_tilde().iter().flatten()).chain(st.eta()) {
            for k in j.min_deg()..j.trunc() {
                let z = j.coeff_or_zero(k);
                out.push((z.re.to_bits(), z.im.to_bits()));
            }
        }
        out
    };
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn solved_data_are_real() {
    for m in [torsion_n1(0.3), random_torsion(2, 1.0, 4).unwrap(), PhmModel::tanno_example(0.8).unwrap()] {
        let n = m.n();
        let st = solve(&m, &SolverOptions::default()).unwrap();
        for k in 0..st.trunc() {
            assert!(st.s().coeff_or_zero(k).im.abs() < 1e-10);
        }
        let conj = |i: usize| if i < n { i + n } else { i - n };
        for a in 0..2 * n {
            for b in 0..2 * n {
                let x = &st.h_tilde()[a][b];
                let y = &st.h_tilde()[conj(a)][conj(b)];
                for k in 0..st.trunc() {
                    assert!((x.coeff_or_zero(k) - y.coeff_or_zero(k).conj()).norm() < 1e-10);
                }
            }
        }
        assert!(st.metric().reality_residual() < 1e-10);
        let ob = st.obstructions().unwrap();
        assert!(ob.b.im.abs() <= 1e-9 * (1.0 + ob.b.re.abs()));
    }
}

#[test]
fn stages_converge_with_healthy_pivots() {
    for m in [torsion_n1(0.4), random_torsion(2, 1.0, 5).unwrap()] {
        let st = solve(&m, &SolverOptions::default()).unwrap();
        assert_eq!(st.stages().len(), m.n() + 2);
        for rep in st.stages() {
            assert!(rep.pivot_ratio > 1e-3, "stage {}: pivot {}", rep.k, rep.pivot_ratio);
            assert!(rep.residual_after <= 1e-12 * (1.0 + rep.residual_before), "stage {}", rep.k);
        }
    }
}

// The stage matrices on the flat model, one scalar per block.
fn expected(kind: BlockKind, n: f64, k: f64) -> f64 {
    match kind {
        BlockKind::S => -2.0 * (k * k - (n + 2.0) * k - n),
        BlockKind::TraceH => 2.0 * (k * k - (2.0 * n + 1.0) * k - 2.0),
        BlockKind::TraceFreeH => 2.0 * (k * k - (n + 1.0) * k - 2.0),
        BlockKind::PureH => 2.0 * k * (k - n - 1.0),
        // column η̃_j with j = max(k − 1, 0)
        BlockKind::Eta => {
            let j = (k - 1.0).max(0.0);
            2.0 * (j - n) * (j + 2.0)
        }
    }
}

#[test]
fn flat_block_factors() {
    for n in 1..=3usize {
        let st = SolverState::unsolved(&flat(n), &SolverOptions::default()).unwrap();
        for k in 0..=8 {
            let rep = probe_matrix(&st, k).unwrap();
            let (nf, kf) = (n as f64, f64::from(k));
            for b in &rep.blocks {
                if k == 0 && b.kind != BlockKind::Eta {
                    continue;
                }
                let want = expected(b.kind, nf, kf);
                assert!((b.factor - want).norm() < 1e-9, "n={n} k={k} {:?}: {} vs {want}", b.kind, b.factor);
                assert!(b.spread < 1e-9, "n={n} k={k} {:?}: spread {}", b.kind, b.spread);
                assert_eq!(b.singular, want == 0.0, "n={n} k={k} {:?}", b.kind);
            }
            if k > 0 {
                let det = -4.0 * kf * (kf + 1.0) * (kf - nf - 2.0) * (kf - 2.0 * nf - 2.0);
                assert!((rep.s_trace_det - det).norm() < 1e-8 * (1.0 + det.abs()), "n={n} k={k}");
            }
        }
    }
}

#[test]
fn stage_matrix_does_not_depend_on_the_model() {
    let a = SolverState::unsolved(&flat(1), &SolverOptions::default()).unwrap();
    let b = solve(&torsion_n1(0.3), &SolverOptions::default()).unwrap();
    for k in 1..=4 {
        let ma = probe_matrix(&a, k).unwrap().matrix;
        let mb = probe_matrix(&b, k).unwrap().matrix;
        assert!((ma - mb).iter().map(|x| x.norm()).fold(0.0, f64::max) < 1e-8, "k={k}");
    }
}

#[test]
fn order_table_on_flat_and_n1() {
    let st = solve(&flat(2), &SolverOptions::default()).unwrap();
    let t = st.residual_orders(1e-9);
    assert!(t.passed());
    assert!(t.rows.iter().all(|r| r.order == r.window));

    for seed in 0..3 {
        let st = solve(&random_torsion(1, 0.5, seed).unwrap(), &SolverOptions::default()).unwrap();
        let t = st.residual_orders(1e-9);
        assert!(t.passed(), "{:?}", t.rows);
        assert!(!t.row("inf,A").unwrap().imposed);
    }
}

#[test]
fn non_integrable_models_keep_an_order_n_horizontal_residual() {
    for m in [random_torsion(2, 1.0, 6).unwrap(), PhmModel::tanno_example(0.8).unwrap()] {
        assert!(!m.is_integrable(1e-8));
        let st = solve(&m, &SolverOptions::default()).unwrap();
        let low = st.lower_order().unwrap();
        assert!(low.pure_h > 1e-4);
        let t = st.residual_orders(1e-9);
        assert_eq!(t.row("AB").unwrap().order, 2);
        assert!(!t.row("AB").unwrap().ok);
        // the unimposed rows still meet their orders
        for name in ["00", "inf,inf", "inf,0", "inf,A"] {
            assert!(t.row(name).unwrap().ok, "{name}");
        }
        assert!((st.stages().last().unwrap().dropped_residual - low.pure_h.max(low.eta)).abs() < 1e-12);
    }
}

#[test]
fn obstructions_vanish_on_flat_and_are_real() {
    let st = solve(&flat(3), &SolverOptions::default()).unwrap();
    let ob = st.obstructions().unwrap();
    assert!(ob.b.norm() < 1e-12 && ob.o_norm() < 1e-12);
    assert_eq!(ob.o.len(), 6);
}

#[test]
fn zero_gauge_perturbation_changes_nothing() {
    let st = solve(&torsion_n1(0.3), &SolverOptions::default()).unwrap();
    let p = st.gauge_perturb(c(0.0, 0.0), &DMatrix::zeros(2, 2), &[c(0.0, 0.0); 2]).unwrap();
    assert_eq!(p.obstructions().unwrap().max_diff(&st.obstructions().unwrap()), 0.0);
    assert!(st.gauge_perturb(c(1.0, 0.0), &DMatrix::zeros(3, 3), &[c(0.0, 0.0); 2]).is_err());
}

#[test]
fn gauge_shift_follows_the_indicial_factors() {
    // s_{n+2} enters coeff_n Ein_00 with factor 2n and η̃_{n+1} enters
    // coeff_{n+1} Ein_0A with 2(n+3), lowered by the Levi pairing
    for m in [torsion_n1(0.3), flat(2), random_torsion(2, 1.0, 7).unwrap()] {
        let n = m.n();
        let st = solve(&m, &SolverOptions::default()).unwrap();
        let base = st.obstructions().unwrap();
        let kappa = c(0.4, -0.2);
        let p = st.gauge_perturb(kappa, &DMatrix::zeros(2 * n, 2 * n), &vec![c(0.0, 0.0); 2 * n]).unwrap();
        let db = p.obstructions().unwrap().b - base.b;
        assert!((db - kappa * 2.0 * n as f64).norm() < 1e-9, "n={n}: ΔB = {db}");

        let mu: Vec<Complex64> = (0..2 * n).map(|a| c(0.1 * a as f64 + 0.2, -0.05)).collect();
        let p = st.gauge_perturb(c(0.0, 0.0), &DMatrix::zeros(2 * n, 2 * n), &mu).unwrap();
        let o = p.obstructions().unwrap().o;
        let hp = m.levi_pairing();
        for a in 0..2 * n {
            let lowered: Complex64 = (0..2 * n).map(|b| hp[(a, b)] * mu[b]).sum();
            let want = lowered * 2.0 * (n as f64 + 3.0);
            assert!((o[a] - base.o[a] - want).norm() < 1e-9, "n={n} A={a}");
        }
    }
}

#[test]
fn rescale_covariance() {
    let r = rescale_check(&torsion_n1(0.3), 0.0, &SolverOptions::default()).unwrap();
    assert_eq!(r.b_residual, 0.0);
    let r = rescale_check(&flat(2), 0.5, &SolverOptions::default()).unwrap();
    assert!(r.b.norm() < 1e-12 && r.b_hat.norm() < 1e-12);
    let r = rescale_check(&torsion_n1(0.3), 0.2, &SolverOptions::default()).unwrap();
    assert!(r.b_residual <= 1e-8 * (1.0 + r.b.norm()), "{r:?}");
    assert!(r.o_residual <= 1e-8 * (1.0 + r.b.norm()), "{r:?}");
    assert!(r.l_relative <= 1e-8);
}

#[test]
fn extend_tracefree_fixes_one_more_order() {
    let m = random_torsion(2, 1.0, 8).unwrap();
    let opts = SolverOptions { extend_tracefree: true, ..SolverOptions::default() };
    let st = solve(&m, &opts).unwrap();
    assert_eq!(st.solved_through(), 4);
    let last = st.stages().last().unwrap();
    assert_eq!(last.k, 4);
    assert!(last.residual_after <= 1e-10 * (1.0 + last.residual_before), "{last:?}");
    // a trace-free change of h̃ at order n+2 is invisible to B
    let plain = solve(&m, &SolverOptions::default()).unwrap();
    assert!((st.obstructions().unwrap().b - plain.obstructions().unwrap().b).norm() < 1e-12);
}

#[test]
fn invalid_model_is_rejected() {
    let mut file = flat(1).to_file();
    file.brackets.push(achmetric::model::BracketEntry { j: "W1".into(), k: "T".into(), l: "T".into(), re: 1.0, im: 0.0 });
    assert!(PhmModel::from_file(&file).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn n1_models_satisfy_the_order_contract(seed in 0u64..10_000, norm in 0.05f64..0.8) {
        let st = solve(&random_torsion(1, norm, seed).unwrap(), &SolverOptions::default()).unwrap();
        let t = st.residual_orders(1e-9);
        prop_assert!(t.passed());
        prop_assert!(st.metric().reality_residual() < 1e-10);
    }

    #[test]
    fn rescale_covariance_of_b(ups in -0.5f64..0.5, a in 0.05f64..0.6) {
        let r = rescale_check(&torsion_n1(a), ups, &SolverOptions::default()).unwrap();
        prop_assert!(r.b_residual <= 1e-8 * (1.0 + r.b.norm()));
        prop_assert!(r.l_relative <= 1e-8);
    }
}
