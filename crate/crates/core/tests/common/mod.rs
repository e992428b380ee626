//! Independent oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use faer::linalg::solvers::Solve;
use faer::Mat;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use nls_dpg::adaptivity::dorfler_set;
use nls_dpg::assembly::{Assembler, ElementSystem};
use nls_dpg::c64;
use nls_dpg::fem::{Family, GaussRule, ReferenceElement, SpaceConfig, TestKind};
use nls_dpg::manufactured::{CaseData, ExactField, NormKind};
use nls_dpg::mesh::{ElementRef, TensorMesh};
use nls_dpg::model::{Model, ModelParams, Regime};
use nls_dpg::solve::{build_global, GlobalSystem, Solution, SolverOptions};

pub const I: c64 = c64::new(0.0, 1.0);

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn model(regime: Regime) -> Model {
    match regime {
        Regime::Hyperbolic => Model::new(ModelParams::default_hyperbolic()),
        Regime::Elliptic => Model::new(ModelParams::default_elliptic(1e4).unwrap()),
    }
}

pub fn poly(terms: &[((u32, u32), (f64, f64))]) -> ExactField {
    ExactField::Polynomial { terms: terms.iter().map(|&(mn, (re, im))| (mn, c64::new(re, im))).collect() }
}

/// `Q_2` fields `(u, v)`: in the trial space for every `p ≥ 2`.
pub fn q2_pair() -> (ExactField, ExactField) {
    let u = poly(&[
        ((0, 0), (1.0, 0.5)),
        ((1, 0), (0.3, 0.0)),
        ((0, 1), (0.0, -0.7)),
        ((1, 1), (0.2, 0.1)),
        ((2, 0), (0.4, 0.0)),
        ((2, 1), (0.0, -0.1)),
        ((1, 2), (-0.25, 0.0)),
        ((2, 2), (0.05, 0.05)),
    ]);
    let v = poly(&[((0, 0), (0.5, 0.0)), ((1, 0), (0.0, 1.0)), ((0, 2), (0.6, -0.2)), ((2, 1), (0.3, 0.0))]);
    (u, v)
}

/// A case whose exact fields lie in the trial space for `p ≥ 2`.
pub fn in_space_case(regime: Regime) -> CaseData {
    let (u, v) = q2_pair();
    CaseData::new(model(regime), u, Some(v)).unwrap()
}

/// A smooth case outside every trial space.
pub fn generic_case(regime: Regime) -> CaseData {
    let u = poly(&[((0, 0), (1.0, 0.0)), ((3, 1), (0.7, -0.4)), ((1, 4), (0.0, 0.9)), ((5, 0), (-0.3, 0.0))]);
    let v = poly(&[((2, 3), (0.2, 0.5)), ((0, 1), (1.0, 0.0)), ((4, 0), (0.0, -0.6))]);
    CaseData::new(model(regime), u, Some(v)).unwrap()
}

/// Largest relative defect between analytic and central-difference derivatives.
pub fn jet_fd_defect(field: &ExactField, tau: f64, xi: f64, h: f64) -> f64 {
    let j = field.jet(tau, xi);
    let (tp, tm) = (field.jet(tau + h, xi), field.jet(tau - h, xi));
    let (xp, xm) = (field.jet(tau, xi + h), field.jet(tau, xi - h));
    let d = |a: c64, b: c64| (a - b) / (2.0 * h);
    let pairs = [
        (j.d_tau, d(tp.value, tm.value)),
        (j.d_xi, d(xp.value, xm.value)),
        (j.d_tautau, d(tp.d_tau, tm.d_tau)),
        (j.d_tauxi, d(xp.d_tau, xm.d_tau)),
        (j.d_tauxi, d(tp.d_xi, tm.d_xi)),
        (j.d_xixi, d(xp.d_xi, xm.d_xi)),
    ];
    let scale = [j.value, j.d_tau, j.d_xi, j.d_tautau, j.d_tauxi, j.d_xixi]
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    pairs
        .iter()
        .map(|(a, b)| (a - b).norm() / a.norm().max(1e-6 * scale))
        .fold(0.0, f64::max)
}

/// Relative defect of the stored sources against the second-order PDE and
/// the first-order rows written out by hand.
pub fn strong_form_defect(case: &CaseData, tau: f64, xi: f64) -> f64 {
    let p = case.model.params;
    let u = case.u.jet(tau, xi);
    let s = case.sources(tau, xi);
    match case.regime() {
        Regime::Hyperbolic => {
            let v = case.v.as_ref().unwrap().jet(tau, xi);
            let z = 2.0 * p.beta0 * I;
            let row1 = [u.d_xi, -2.0 * p.beta1 * u.d_tau, -p.alpha * v.d_tau, z * u.value];
            let row2 = [p.alpha * v.d_xi, -p.alpha * u.d_tau];
            let rel = |terms: &[c64], got: c64| {
                let sum: c64 = terms.iter().sum();
                (sum - got).norm() / terms.iter().map(|t| t.norm()).sum::<f64>().max(1e-300)
            };
            rel(&row1, s[0]).max(rel(&row2, s[1]))
        }
        Regime::Elliptic => {
            // f = u_ξξ − 2β₁u_τξ + a u_ττ + 2β₀i u_ξ; g = 0.
            let terms = [u.d_xixi, -2.0 * p.beta1 * u.d_tauxi, p.a * u.d_tautau, 2.0 * p.beta0 * I * u.d_xi];
            let sum: c64 = terms.iter().sum();
            let scale = terms.iter().map(|t| t.norm()).sum::<f64>().max(1e-300);
            let g_scale = p.c * (u.d_tau.norm() + u.d_xi.norm()) * p.a + 1e-300;
            ((sum - s[2]).norm() / scale).max((s[0].norm() + s[1].norm()) / g_scale)
        }
    }
}

/// Physical value and gradient of a tensor basis function at reference `(x, y)`.
fn tensor_eval(fx: Family, dx: usize, fy: Family, dy: usize, a: usize, b: usize, x: f64, y: f64, e: &ElementRef) -> [f64; 3] {
    let (vx, gx) = fx.eval(dx, x);
    let (vy, gy) = fy.eval(dy, y);
    [vx[a] * vy[b], 2.0 / e.h_tau() * gx[a] * vy[b], 2.0 / e.h_xi() * vx[a] * gy[b]]
}

/// Integration-by-parts oracle: for test functions whose boundary terms
/// vanish, `B_ij = ∫ (Aφ_j) ψ_i` with the strong operator written out here.
/// Returns the largest defect relative to `max |B|` and the number of rows checked.
pub fn ibp_defect(regime: Regime, p: usize, e: &ElementRef) -> (f64, usize) {
    let m = model(regime);
    let cfg = SpaceConfig::with_default_enrichment(p).unwrap();
    let r = ReferenceElement::new(regime, cfg);
    let sys = Assembler::new(&r, m).element_system(e, &[], None).unwrap();
    let pr = m.params;
    let det = pr.a - pr.beta1 * pr.beta1;
    let ai = [[1.0 / det, pr.beta1 / det], [pr.beta1 / det, pr.a / det]];
    let rule = GaussRule::new(cfg.test_order() + p + 4);
    let jac = 0.25 * e.h_tau() * e.h_xi();
    let bmax = (0..sys.b.nrows())
        .flat_map(|i| (0..sys.b.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| sys.b[(i, j)].norm())
        .fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    let mut rows = 0;
    for (i, &(tc, k)) in r.test_index.iter().enumerate() {
        let comp = r.test[tc];
        let (a, b) = comp.space.modes(k);
        let (bubble, piola) = match comp.kind {
            TestKind::Scalar => (a >= 2 && b >= 2, 1.0),
            TestKind::FluxTau => (a >= 2, 2.0 / e.h_xi()),
            TestKind::FluxXi => (b >= 2, 2.0 / e.h_tau()),
        };
        if !bubble {
            continue;
        }
        rows += 1;
        for (j, &(fc, kf)) in r.trial_index.iter().enumerate() {
            let fs = r.trial[fc];
            let (fa, fb) = fs.modes(kf);
            let mut acc = c64::new(0.0, 0.0);
            for (qx, &x) in rule.points.iter().enumerate() {
                for (qy, &y) in rule.points.iter().enumerate() {
                    let w = rule.weights[qx] * rule.weights[qy] * jac;
                    let s = comp.space;
                    let psi = tensor_eval(s.x, s.x_degree, s.y, s.y_degree, a, b, x, y, e)[0] * piola;
                    let [f, ft, fx] = tensor_eval(fs.x, fs.x_degree, fs.y, fs.y_degree, fa, fb, x, y, e);
                    let af: c64 = match (regime, fc, comp.kind, tc) {
                        (Regime::Hyperbolic, 0, _, 0) => fx - 2.0 * pr.beta1 * ft + 2.0 * pr.beta0 * I * f,
                        (Regime::Hyperbolic, 0, _, _) => (-pr.alpha * ft).into(),
                        (Regime::Hyperbolic, _, _, 0) => (-pr.alpha * ft).into(),
                        (Regime::Hyperbolic, _, _, _) => (pr.alpha * fx).into(),
                        (Regime::Elliptic, 0, TestKind::Scalar, _) => 2.0 * pr.beta0 / pr.c * I * fx,
                        (Regime::Elliptic, 0, TestKind::FluxTau, _) => (-ft).into(),
                        (Regime::Elliptic, 0, TestKind::FluxXi, _) => (-fx).into(),
                        (Regime::Elliptic, 1, TestKind::Scalar, _) => ft.into(),
                        (Regime::Elliptic, _, TestKind::Scalar, _) => fx.into(),
                        (Regime::Elliptic, sc, TestKind::FluxTau, _) => (pr.c * ai[0][sc - 1] * f).into(),
                        (Regime::Elliptic, sc, TestKind::FluxXi, _) => (pr.c * ai[1][sc - 1] * f).into(),
                    };
                    acc += w * af * psi;
                }
            }
            worst = worst.max((acc - sys.b[(i, j)]).norm() / bmax);
        }
    }
    (worst, rows)
}

/// Raw element systems in the `(r, t)` trace basis, with the case load.
pub fn raw_element_systems(sys: &GlobalSystem) -> Vec<ElementSystem> {
    let asm = Assembler::new(&sys.reference, sys.case.model).with_s_graph(sys.options.s_graph);
    (0..sys.mesh.num_elements())
        .map(|e| {
            let traces = sys.layout.element_dofs(&sys.mesh, e);
            asm.element_system(&sys.mesh.element(e), &traces, Some(&sys.case)).unwrap()
        })
        .collect()
}

fn diag_scale(g: &Mat<c64>) -> Vec<f64> {
    (0..g.nrows()).map(|i| 1.0 / g[(i, i)].re.sqrt()).collect()
}

/// Solves the uncondensed saddle system `[G B; Bᴴ 0]` by dense LU and returns
/// `(fields, traces)` with constrained traces filled in.
pub fn mixed_solve(sys: &GlobalSystem) -> (Vec<c64>, Vec<c64>) {
    let elems = raw_element_systems(sys);
    let nf = sys.num_fields_per_element();
    let n_fields = sys.num_field_dofs();
    let n_unknown = n_fields + sys.free_dofs.len();
    let offsets: Vec<usize> = elems
        .iter()
        .scan(0, |acc, s| {
            let o = *acc;
            *acc += s.num_test();
            Some(o)
        })
        .collect();
    let nt: usize = elems.iter().map(|s| s.num_test()).sum();
    let n = nt + n_unknown;
    let mut m = Mat::<c64>::zeros(n, n);
    let mut rhs = Mat::<c64>::zeros(n, 1);
    for (e, s) in elems.iter().enumerate() {
        let g = s.gram();
        let d = diag_scale(&g);
        let o = offsets[e];
        let traces = sys.layout.element_dofs(&sys.mesh, e);
        for i in 0..s.num_test() {
            for k in 0..s.num_test() {
                m[(o + i, o + k)] = d[i] * g[(i, k)] * d[k];
            }
            rhs[(o + i, 0)] = d[i] * s.load[i];
            let mut put = |col: usize, v: c64| {
                m[(o + i, nt + col)] += d[i] * v;
                m[(nt + col, o + i)] += d[i] * v.conj();
            };
            for j in 0..nf {
                put(e * nf + j, s.b[(i, j)]);
            }
            for (k, t) in traces.iter().enumerate() {
                match sys.free_index[t.global] {
                    Some(f) => put(n_fields + f, s.bhat[(i, k)]),
                    None => rhs[(o + i, 0)] -= d[i] * s.bhat[(i, k)] * sys.constraints[&t.global],
                }
            }
        }
    }
    let lu = m.full_piv_lu();
    let mut x = lu.solve(&rhs);
    for _ in 0..3 {
        let r = &rhs - &m * &x;
        x += lu.solve(&r);
    }
    let fields = (0..n_fields).map(|i| x[(nt + i, 0)]).collect();
    let traces = (0..sys.num_trace_dofs())
        .map(|g| match sys.free_index[g] {
            Some(f) => x[(nt + n_fields + f, 0)],
            None => sys.constraints[&g],
        })
        .collect();
    (fields, traces)
}

pub fn rel_diff(a: &[c64], b: &[c64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den.max(1e-300)).sqrt()
}

/// Relative distance between the condensed solve and the mixed oracle.
pub fn saddle_defect(sys: &GlobalSystem, sol: &Solution) -> f64 {
    let (fields, traces) = mixed_solve(sys);
    rel_diff(&sol.fields, &fields).max(rel_diff(&sol.traces, &traces))
}

/// `Σ_K rᴴG⁻¹r` with `r = l − Bx − B̂x̂`, by dense LU on the uncondensed blocks.
pub fn energy_residual_sq(sys: &GlobalSystem, fields: &[c64], traces: &[c64]) -> Vec<f64> {
    let nf = sys.num_fields_per_element();
    raw_element_systems(sys)
        .iter()
        .enumerate()
        .map(|(e, s)| {
            let dofs = sys.layout.element_dofs(&sys.mesh, e);
            let x: Vec<c64> = fields[e * nf..(e + 1) * nf].iter().copied().chain(dofs.iter().map(|d| traces[d.global])).collect();
            let bb = s.trial_matrix();
            let g = s.gram();
            let d = diag_scale(&g);
            let nt = s.num_test();
            let r = Mat::from_fn(nt, 1, |i, _| {
                let bx: c64 = (0..x.len()).map(|j| bb[(i, j)] * x[j]).sum();
                d[i] * (s.load[i] - bx)
            });
            let gs = Mat::from_fn(nt, nt, |i, k| d[i] * g[(i, k)] * d[k]);
            let psi = gs.full_piv_lu().solve(&r);
            (0..nt).map(|i| (r[(i, 0)].conj() * psi[(i, 0)]).re).sum::<f64>()
        })
        .collect()
}

/// Brute-force check of the Dörfler set: minimal cardinality, and largest
/// bulk among sets of that cardinality.
pub fn dorfler_matches_brute_force(etas: &[f64], theta: f64) -> bool {
    let n = etas.len();
    let total: f64 = etas.iter().map(|e| e * e).sum();
    let target = theta.min(1.0).powi(2) * total;
    let got = dorfler_set(etas, theta).unwrap();
    if total == 0.0 {
        return got.is_empty();
    }
    let got_sum: f64 = got.iter().map(|&k| etas[k] * etas[k]).sum();
    if theta >= 1.0 {
        return got.len() == n;
    }
    let mut best: Option<(u32, f64)> = None;
    for mask in 0u32..(1 << n) {
        let s: f64 = (0..n).filter(|k| mask >> k & 1 == 1).map(|k| etas[k] * etas[k]).sum();
        if s >= target {
            let c = mask.count_ones();
            best = match best {
                Some((bc, bs)) if bc < c || (bc == c && bs >= s) => Some((bc, bs)),
                _ => Some((c, s)),
            };
        }
    }
    let (bc, bs) = best.expect("the full set always qualifies");
    got_sum >= target && got.len() == bc as usize && (got_sum - bs).abs() <= 1e-12 * total
}

/// Error and relative residual of an in-space case on a small non-uniform mesh.
pub fn in_space_solve(regime: Regime, p: usize) -> (f64, f64) {
    let mesh = TensorMesh::new(vec![0.0, 0.35, 1.0], vec![0.0, 0.6, 1.0]).unwrap();
    let case = in_space_case(regime);
    let sys = build_global(&mesh, &case, SpaceConfig::with_default_enrichment(p).unwrap(), SolverOptions::default()).unwrap();
    let sol = sys.solve().unwrap();
    let load_norm: f64 = raw_element_systems(&sys)
        .iter()
        .enumerate()
        .map(|(e, s)| s.whiten(e).unwrap().y.iter().map(|z| z.norm_sqr()).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    (sys.errors(&sol, NormKind::Complex).rel_l2, sol.total_residual / load_norm)
}

/// Random interior points of the unit square.
pub fn random_points(seed: u64, n: usize) -> Vec<(f64, f64)> {
    let mut r = rng(seed);
    (0..n).map(|_| (r.random_range(0.05..0.95), r.random_range(0.05..0.95))).collect()
}
