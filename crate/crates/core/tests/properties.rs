mod common;

use common::*;
use faer::Side;
use proptest::prelude::*;

use nls_dpg::assembly::Assembler;
use nls_dpg::c64;
use nls_dpg::fem::{ReferenceElement, SpaceConfig, TraceLayout};
use nls_dpg::mesh::TensorMesh;
use nls_dpg::model::{FriedrichsDecomposition, ModelParams, Regime};
use nls_dpg::study::{estimate_rate, read_rows, write_rows, ConvergenceRow};

fn regime_strategy() -> impl Strategy<Value = Regime> {
    prop_oneof![Just(Regime::Hyperbolic), Just(Regime::Elliptic)]
}

fn max_abs(m: &faer::Mat<c64>) -> f64 {
    (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)].norm())).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn gram_is_hermitian_positive_definite(
        regime in regime_strategy(),
        p in 1usize..=4,
        dp in 1usize..=3,
        t0 in 0.01f64..0.5,
        ht in 0.01f64..0.5,
        hx in 0.01f64..0.5,
    ) {
        let mesh = TensorMesh::new(vec![0.0, t0, t0 + ht], vec![0.0, hx]).unwrap();
        let cfg = SpaceConfig::new(p, dp).unwrap();
        let r = ReferenceElement::new(regime, cfg);
        let e = mesh.element(mesh.element_index(1, 0));
        let sys = Assembler::new(&r, model(regime)).element_system(&e, &[], None).unwrap();
        let g = sys.gram();
        let gh = g.adjoint().to_owned();
        prop_assert!(max_abs(&(&g - &gh)) <= 1e-13 * max_abs(&g));
        prop_assert!(g.llt(Side::Lower).is_ok());
    }

    #[test]
    fn condensed_matrix_is_positive_semidefinite(
        regime in regime_strategy(),
        p in 1usize..=3,
        ht in 0.02f64..1.0,
        hx in 0.02f64..1.0,
    ) {
        let mesh = TensorMesh::new(vec![0.0, ht], vec![0.0, hx]).unwrap();
        let cfg = SpaceConfig::with_default_enrichment(p).unwrap();
        let r = ReferenceElement::new(regime, cfg);
        let layout = TraceLayout::new(&mesh, regime, cfg);
        let sys = Assembler::new(&r, model(regime))
            .element_system(&mesh.element(0), &layout.element_dofs(&mesh, 0), None)
            .unwrap();
        let k = sys.condense(0).unwrap().k;
        let kh = k.adjoint().to_owned();
        prop_assert!(max_abs(&(&k - &kh)) <= 1e-12 * max_abs(&k));
        let ev = k.self_adjoint_eigenvalues(Side::Lower).unwrap();
        let top = ev.last().copied().unwrap();
        prop_assert!(ev[0] >= -1e-10 * top, "min {} max {}", ev[0], top);
    }

    #[test]
    fn spectral_basis_is_orthonormal_and_round_trips(
        beta0 in 1.0f64..1e7,
        beta1 in -3.0f64..3.0,
        alpha in 0.1f64..1e3,
        re in proptest::array::uniform2(-10.0f64..10.0),
        im in proptest::array::uniform2(-10.0f64..10.0),
    ) {
        let beta2 = (alpha + beta1 * beta1) / beta0;
        let params = ModelParams::derive(beta0, beta1, beta2, 1.0).unwrap();
        let d = FriedrichsDecomposition::new(&params).unwrap();
        let b = |v: [f64; 2]| [c64::from(v[0]), c64::from(v[1])];
        let scale = 1.0 + params.alpha;
        prop_assert!((d.inner(b(d.b1), b(d.b1)) - 1.0).norm() <= 1e-12 * scale);
        prop_assert!((d.inner(b(d.b2), b(d.b2)) - 1.0).norm() <= 1e-12 * scale);
        prop_assert!(d.inner(b(d.b1), b(d.b2)).norm() <= 1e-12 * scale);
        // A^τ b = λ A^ξ b.
        let (at, ax) = (params.a_tau(), params.a_xi());
        for (l, v) in [(d.lambda1, d.b1), (d.lambda2, d.b2)] {
            for row in 0..2 {
                let lhs = at[row][0] * v[0] + at[row][1] * v[1];
                let rhs = l * (ax[row][0] * v[0] + ax[row][1] * v[1]);
                prop_assert!((lhs - rhs).abs() <= 1e-12 * (lhs.abs() + rhs.abs() + 1.0) * (1.0 + l.abs()));
            }
        }
        let u = [c64::new(re[0], im[0]), c64::new(re[1], im[1])];
        let (u1, u2) = d.spectral_components(u);
        let back = d.reconstruct(u1, u2);
        let n = u[0].norm() + u[1].norm();
        prop_assert!((back[0] - u[0]).norm() + (back[1] - u[1]).norm() <= 1e-12 * n.max(1.0));
    }

    #[test]
    fn dorfler_set_is_minimal(
        etas in proptest::collection::vec(prop_oneof![Just(0.0), Just(1.0), 0.0f64..10.0], 1..=12),
        theta in 0.05f64..=1.0,
    ) {
        prop_assert!(dorfler_matches_brute_force(&etas, theta));
    }

    #[test]
    fn rate_of_exact_power_laws(k in 0.5f64..5.0, c in 1e-3f64..10.0, n0 in 1u32..5, levels in 2usize..6) {
        let s: Vec<f64> = (0..levels).map(|l| f64::from(n0) * 2f64.powi(l as i32)).collect();
        let e: Vec<f64> = s.iter().map(|x| c * x.powf(-k)).collect();
        prop_assert!((estimate_rate(&e, &s).unwrap() - k).abs() < 1e-9);
    }

    #[test]
    fn csv_rows_round_trip(rows in proptest::collection::vec(
        (1e-3f64..1e3, 1e-12f64..1.0, 1e-12f64..10.0, 1e-12f64..10.0), 0..8)
    ) {
        let rows: Vec<ConvergenceRow> = rows
            .into_iter()
            .map(|(s, e, r, x)| ConvergenceRow { sqrt_n: s, rel_l2_error: e, res: r, extslp: x })
            .collect();
        let mut buf = Vec::new();
        write_rows(&rows, &mut buf).unwrap();
        prop_assert!(buf.starts_with(b"sqrt_n,rel_L2_error,res,extslp\n"));
        prop_assert_eq!(read_rows(&buf[..]).unwrap(), rows);
    }
}

#[test]
fn noisy_cubic_rate() {
    use rand::Rng;
    let mut r = rng(42);
    let s = [4.0, 8.0, 16.0, 32.0, 64.0];
    let e: Vec<f64> = s.iter().map(|x: &f64| x.powi(-3) * (1.0 + r.random_range(-0.01..0.01))).collect();
    assert!((estimate_rate(&e, &s).unwrap() - 3.0).abs() < 0.05);
}

#[test]
fn dorfler_edge_cases() {
    assert!(dorfler_matches_brute_force(&[0.0; 5], 0.5));
    assert!(dorfler_matches_brute_force(&[2.0, 2.0, 2.0], 1.0));
    assert!(dorfler_matches_brute_force(&[3.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0], 0.7));
}
