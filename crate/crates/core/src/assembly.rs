//! Element-level DPG matrices and their condensation.
//!
//! For one element, with test functions `ψ_i`, field functions `φ_j` and
//! local trace unknowns `φ̂_k`:
//!
//! ```text
//! G_ij = (A*ψ_j, A*ψ_i) + s (ψ_j, ψ_i)      B_ij = b(φ_j, ψ_i)
//! B̂_ik = b̂(φ̂_k, ψ_i)                       l_i  = l(ψ_i)
//! ```
//!
//! All forms are linear in the trial slot and antilinear in the test slot.
//! Test and field basis functions are real, so conjugation only acts on the
//! complex coefficients.

use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::{Mat, Par, Side};
use num_complex::Complex64 as c64;

use crate::error::{DpgError, Result};
use crate::fem::{Loc, PointEval, ReferenceElement, TestKind, TraceDof};
use crate::manufactured::CaseData;
use crate::mesh::{ElementRef, LocalEdge, Orientation};
use crate::model::{AdjointSign, Model, Regime};

const I: c64 = c64::new(0.0, 1.0);
const ZERO: c64 = c64::new(0.0, 0.0);

/// Uncondensed element matrices.
#[derive(Clone, Debug)]
pub struct ElementSystem {
    /// `P` with `G = PᴴP`: rows are `√w·A*ψ` and `√(w s)·ψ` at quadrature points.
    pub norm_factor: Mat<c64>,
    pub b: Mat<c64>,
    pub bhat: Mat<c64>,
    pub load: Vec<c64>,
}

/// `K = [B B̂]ᴴ G⁻¹ [B B̂]` and `f = [B B̂]ᴴ G⁻¹ l`, fields first.
#[derive(Clone, Debug)]
pub struct Condensed {
    pub k: Mat<c64>,
    pub f: Vec<c64>,
}

/// `W = L⁻¹[B B̂]` and `y = L⁻¹l` with `G = LLᴴ`; the energy residual of a
/// coefficient vector `x` is `‖y − Wx‖`.
#[derive(Clone, Debug)]
pub struct Whitened {
    pub w: Mat<c64>,
    pub y: Vec<c64>,
}

impl Whitened {
    pub fn condensed(&self) -> Condensed {
        let k = self.w.adjoint() * &self.w;
        let f = (0..self.w.ncols())
            .map(|j| (0..self.w.nrows()).map(|i| self.w[(i, j)].conj() * self.y[i]).sum())
            .collect();
        Condensed { k, f }
    }

    /// `‖y − Wx‖²`.
    pub fn residual_sq(&self, x: &[c64]) -> f64 {
        (0..self.w.nrows())
            .map(|i| {
                let wx: c64 = (0..self.w.ncols()).map(|j| self.w[(i, j)] * x[j]).sum();
                (self.y[i] - wx).norm_sqr()
            })
            .sum()
    }
}

impl ElementSystem {
    pub fn num_test(&self) -> usize {
        self.norm_factor.ncols()
    }

    /// The Gram matrix `G = PᴴP`.
    pub fn gram(&self) -> Mat<c64> {
        self.norm_factor.adjoint() * &self.norm_factor
    }

    pub fn num_fields(&self) -> usize {
        self.b.ncols()
    }

    pub fn num_traces(&self) -> usize {
        self.bhat.ncols()
    }

    /// `[B B̂]`.
    pub fn trial_matrix(&self) -> Mat<c64> {
        let (nf, nt) = (self.num_fields(), self.num_traces());
        Mat::from_fn(self.num_test(), nf + nt, |i, j| {
            if j < nf {
                self.b[(i, j)]
            } else {
                self.bhat[(i, j - nf)]
            }
        })
    }

    pub fn whiten(&self, element: usize) -> Result<Whitened> {
        let llt = self.gram().llt(Side::Lower).map_err(|_| DpgError::DegenerateGram { element })?;
        let mut w = self.trial_matrix();
        solve_lower_triangular_in_place(llt.L(), w.as_mut(), Par::Seq);
        let mut y = Mat::from_fn(self.load.len(), 1, |i, _| self.load[i]);
        solve_lower_triangular_in_place(llt.L(), y.as_mut(), Par::Seq);
        Ok(Whitened { w, y: (0..self.load.len()).map(|i| y[(i, 0)]).collect() })
    }

    /// Condensation through the Cholesky factor of `G`.
    pub fn condense(&self, element: usize) -> Result<Condensed> {
        Ok(self.whiten(element)?.condensed())
    }
}

/// Builds element systems for a fixed model and reference element.
#[derive(Clone, Debug)]
pub struct Assembler<'a> {
    pub reference: &'a ReferenceElement,
    pub model: Model,
    /// Weight of the `L²` term in the test norm.
    pub s_graph: f64,
}

/// Coefficients of one trace component on one element edge, per test component.
pub(crate) fn trace_coefficients(model: &Model, comp: usize, edge: LocalEdge) -> [c64; 3] {
    let p = &model.params;
    let s = edge.normal_sign();
    let horizontal = edge.orientation() == Orientation::Horizontal;
    match model.regime() {
        Regime::Hyperbolic => {
            let d = model.decomposition().expect("hyperbolic decomposition");
            let (l1, l2) = (d.lambda1, d.lambda2);
            let (du, dv) = match (horizontal, comp) {
                // n_ξ [(t − r) δu + (λ₂t − λ₁r) δv]
                (true, 0) => (-s, -l1 * s),
                (true, _) => (s, l2 * s),
                // −n_τ [(2β₁(t − r) + λ₂t − λ₁r) δu + α(t − r) δv]
                (false, 0) => (s * (2.0 * p.beta1 + l1), s * p.alpha),
                (false, _) => (-s * (2.0 * p.beta1 + l2), -s * p.alpha),
            };
            [du.into(), dv.into(), ZERO]
        }
        Regime::Elliptic => match (horizontal, comp) {
            // 2c⁻¹β₀i n_ξ û v − û τ·n
            (true, 0) => [2.0 * p.beta0 / p.c * s * I, ZERO, (-s).into()],
            (false, 0) => [ZERO, (-s).into(), ZERO],
            // σ̂_n v, with σ̂_n along the reference normal
            (_, _) => [s.into(), ZERO, ZERO],
        },
    }
}

impl<'a> Assembler<'a> {
    pub fn new(reference: &'a ReferenceElement, model: Model) -> Self {
        Self { reference, model, s_graph: 1.0 }
    }

    pub fn with_s_graph(mut self, s_graph: f64) -> Self {
        self.s_graph = s_graph;
        self
    }

    fn num_field_components(&self) -> usize {
        self.reference.trial.len()
    }

    /// `A*ψ` for a test function with values `pe` in component `comp`.
    pub fn adjoint_image(&self, comp: usize, pe: PointEval, sign: AdjointSign) -> [c64; 3] {
        let p = &self.model.params;
        match self.model.regime() {
            Regime::Hyperbolic => {
                let z = &self.model.zero_order;
                let (z11, z22) = match sign {
                    AdjointSign::SameSign => (z.z11, z.z22),
                    AdjointSign::ConjugateTranspose => (z.z11.conj(), z.z22.conj()),
                };
                if comp == 0 {
                    [
                        -pe.d_xi + 2.0 * p.beta1 * pe.d_tau + z11 * pe.value,
                        (p.alpha * pe.d_tau).into(),
                        ZERO,
                    ]
                } else {
                    [(p.alpha * pe.d_tau).into(), -p.alpha * pe.d_xi + z22 * pe.value, ZERO]
                }
            }
            Regime::Elliptic => {
                let ai = self.model.tensors().expect("elliptic tensors").a_inv;
                match self.reference.test[comp].kind {
                    TestKind::Scalar => [2.0 * p.beta0 / p.c * I * pe.d_xi, (-pe.d_tau).into(), (-pe.d_xi).into()],
                    TestKind::FluxTau => [
                        pe.d_tau.into(),
                        (p.c * ai[0][0] * pe.value).into(),
                        (p.c * ai[1][0] * pe.value).into(),
                    ],
                    TestKind::FluxXi => [
                        pe.d_xi.into(),
                        (p.c * ai[0][1] * pe.value).into(),
                        (p.c * ai[1][1] * pe.value).into(),
                    ],
                }
            }
        }
    }

    /// Element matrices; `case` supplies the load (zero when absent).
    pub fn element_system(
        &self,
        elem: &ElementRef,
        traces: &[TraceDof],
        case: Option<&CaseData>,
    ) -> Result<ElementSystem> {
        let r = self.reference;
        let nq = r.num_points();
        let (nt, nf, nm) = (r.num_test(), r.num_fields(), self.num_field_components());
        let (ht, hx) = (elem.h_tau(), elem.h_xi());
        let jac = 0.25 * ht * hx;
        let points: Vec<(usize, usize, f64)> = (0..nq)
            .flat_map(|qy| (0..nq).map(move |qx| (qx, qy)))
            .map(|(qx, qy)| (qx, qy, r.rule.weights[qx] * r.rule.weights[qy] * jac))
            .collect();
        let npt = points.len();
        let n_test_comp = r.test.len();

        // Rows (point, component) of the adjoint images, scaled by √w, for the
        // norm (P) and the exact adjoint (Q); L² rows are appended to P.
        let mut pmat = Mat::<c64>::zeros(npt * (nm + n_test_comp), nt);
        let mut qmat = Mat::<c64>::zeros(npt * nm, nt);
        let mut load = vec![ZERO; nt];
        let loads: Option<Vec<Vec<c64>>> = case.map(|c| {
            points
                .iter()
                .map(|&(qx, qy, _)| {
                    let (t, x) = elem.map(r.rule.points[qx], r.rule.points[qy]);
                    c.load(t, x)
                })
                .collect()
        });
        for i in 0..nt {
            let comp = r.test_index[i].0;
            for (q, &(qx, qy, w)) in points.iter().enumerate() {
                let pe = r.eval_test(i, Loc::Point(qx), Loc::Point(qy), ht, hx);
                let sw = w.sqrt();
                let norm_img = self.adjoint_image(comp, pe, self.model.adjoint_sign);
                let exact_img = self.adjoint_image(comp, pe, AdjointSign::ConjugateTranspose);
                for m in 0..nm {
                    pmat[(q * nm + m, i)] = sw * norm_img[m];
                    qmat[(q * nm + m, i)] = sw * exact_img[m];
                }
                let lrow = npt * nm + q * n_test_comp + comp;
                pmat[(lrow, i)] = (sw * self.s_graph.sqrt() * pe.value).into();
                if let Some(l) = &loads {
                    load[i] += w * l[q][comp] * pe.value;
                }
            }
        }

        let mut fmat = Mat::<c64>::zeros(npt * nm, nf);
        for j in 0..nf {
            let comp = r.trial_index[j].0;
            for (q, &(qx, qy, w)) in points.iter().enumerate() {
                fmat[(q * nm + comp, j)] = (w.sqrt() * r.eval_field(j, Loc::Point(qx), Loc::Point(qy))).into();
            }
        }
        let b = qmat.adjoint() * &fmat;

        let mut bhat = Mat::<c64>::zeros(nt, traces.len());
        for (k, dof) in traces.iter().enumerate() {
            for piece in &dof.pieces {
                let coef = trace_coefficients(&self.model, piece.component, piece.edge);
                let h = match piece.edge.orientation() {
                    Orientation::Horizontal => ht,
                    Orientation::Vertical => hx,
                };
                for q in 0..nq {
                    let w = 0.5 * h * r.rule.weights[q];
                    let tv = w * r.trace_values(piece.component, q)[piece.mode];
                    let (lx, ly) = ReferenceElement::edge_loc(piece.edge, q);
                    for i in 0..nt {
                        let c = coef[r.test_index[i].0];
                        if c != ZERO {
                            let pe = r.eval_test(i, lx, ly, ht, hx);
                            bhat[(i, k)] += c * tv * pe.value;
                        }
                    }
                }
            }
        }
        Ok(ElementSystem { norm_factor: pmat, b, bhat, load })
    }
}
