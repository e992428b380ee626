//! Global assembly, boundary conditions, the linear solve and residual recovery.
//!
//! Field unknowns are element-private, so each condensed element matrix is
//! reduced further onto its trace unknowns before global assembly:
//!
//! ```text
//! S_K = K_tt − K_tf K_ff⁻¹ K_ft,     g_K = f_t − K_tf K_ff⁻¹ f_f.
//! ```
//!
//! The global trace system `S x = g` is Hermitian positive-definite once the
//! prescribed boundary traces are lifted to the right-hand side. Fields are
//! then recovered element by element. The full reduced system (fields plus
//! free traces) can still be assembled for inspection on small meshes.

use std::collections::BTreeMap;
use std::io::Write;

use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, Mat, Side};
use num_complex::Complex64 as c64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{trace_coefficients, Assembler, Condensed, ElementSystem};
use crate::error::{DpgError, Result};
use crate::fem::basis::interpolate;
use crate::fem::{Loc, ReferenceElement, SpaceConfig, TraceDof, TraceLayout};
use crate::manufactured::{CaseData, ErrorReport, NormKind};
use crate::mesh::{BoundaryTag, LocalEdge, Orientation, TensorMesh};
use crate::model::Regime;

const ZERO: c64 = c64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    /// Sparse Cholesky, falling back to conjugate gradients on breakdown.
    #[default]
    Direct,
    /// Jacobi-preconditioned conjugate gradients.
    Iterative,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Weight of the `L²` term in the test norm.
    pub s_graph: f64,
    pub method: SolverMethod,
    pub cg_tolerance: f64,
    pub cg_max_iterations: usize,
    /// Upper bound on iterative-refinement sweeps after the first solve.
    pub refinement_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { s_graph: 1.0, method: SolverMethod::Direct, cg_tolerance: 1e-10, cg_max_iterations: 50_000, refinement_steps: 1 }
    }
}

/// Change of trace basis on hyperbolic edges without prescribed traces.
///
/// There `(r, t)` is replaced by the normal fluxes `(a, b) = C (r, t)` that
/// pair with the `u` and `v` test components separately. In the `(r, t)`
/// basis the combination pairing only with the `u` component has an energy
/// about β₀⁻² times that of the others, and the trace system loses most of
/// its digits to cancellation.
#[derive(Clone, Debug)]
pub struct FluxBasis {
    /// Per mesh edge.
    pub edges: Vec<bool>,
    modes: usize,
    /// `C` and `C⁻¹` by orientation (horizontal, vertical).
    c: [[[f64; 2]; 2]; 2],
    m: [[[f64; 2]; 2]; 2],
}

impl FluxBasis {
    fn new(mesh: &TensorMesh, layout: &TraceLayout, case: &CaseData, constraints: &BTreeMap<usize, c64>) -> Self {
        let modes = layout.num_modes(0);
        let mut c = [[[0.0; 2]; 2]; 2];
        let mut m = c;
        let edges = match layout.regime {
            Regime::Elliptic => vec![false; mesh.num_edges()],
            Regime::Hyperbolic => {
                for (o, edge) in [LocalEdge::Top, LocalEdge::Right].into_iter().enumerate() {
                    let r = trace_coefficients(&case.model, 0, edge);
                    let t = trace_coefficients(&case.model, 1, edge);
                    let cm = [[r[0].re, t[0].re], [r[1].re, t[1].re]];
                    let det = cm[0][0] * cm[1][1] - cm[0][1] * cm[1][0];
                    c[o] = cm;
                    m[o] = [[cm[1][1] / det, -cm[0][1] / det], [-cm[1][0] / det, cm[0][0] / det]];
                }
                (0..mesh.num_edges())
                    .map(|e| {
                        let first = e * 2 * modes;
                        constraints.range(first..first + 2 * modes).next().is_none()
                    })
                    .collect()
            }
        };
        Self { edges, modes, c, m }
    }

    fn orientation_index(o: Orientation) -> usize {
        match o {
            Orientation::Horizontal => 0,
            Orientation::Vertical => 1,
        }
    }

    /// Replaces the `(r, t)` columns of flagged edges by `(a, b)` columns.
    fn transform_columns(&self, traces: &[TraceDof], bhat: &mut Mat<c64>) {
        for (i, dof) in traces.iter().enumerate() {
            let piece = &dof.pieces[0];
            if piece.component != 0 || !self.edges[dof.global / (2 * self.modes)] {
                continue;
            }
            let j = traces.iter().position(|d| d.global == dof.global + self.modes).expect("paired trace");
            let m = self.m[Self::orientation_index(piece.edge.orientation())];
            for row in 0..bhat.nrows() {
                let (cr, ct) = (bhat[(row, i)], bhat[(row, j)]);
                bhat[(row, i)] = cr * m[0][0] + ct * m[1][0];
                bhat[(row, j)] = cr * m[0][1] + ct * m[1][1];
            }
        }
    }

    /// Maps trace coefficients between bases; `to_flux` selects `C`, else `C⁻¹`.
    fn convert(&self, mesh: &TensorMesh, traces: &mut [c64], to_flux: bool) {
        for (e, &flag) in self.edges.iter().enumerate() {
            if !flag {
                continue;
            }
            let o = Self::orientation_index(mesh.edge(e).orientation);
            let m = if to_flux { self.c[o] } else { self.m[o] };
            for k in 0..self.modes {
                let (ir, it) = (e * 2 * self.modes + k, e * 2 * self.modes + self.modes + k);
                let (r, t) = (traces[ir], traces[it]);
                traces[ir] = r * m[0][0] + t * m[0][1];
                traces[it] = r * m[1][0] + t * m[1][1];
            }
        }
    }
}

/// Results of one element pass.
#[derive(Clone, Debug)]
struct ElementWork {
    element: usize,
    globals: Vec<usize>,
    fields: Vec<c64>,
    eta: f64,
    grad: Vec<c64>,
    schur: Option<Mat<c64>>,
}

/// Relative size of a trace correction below which refinement stops.
const REFINEMENT_TOLERANCE: f64 = 1e-12;

/// Assembled trace system with its boundary constraints.
#[derive(Clone, Debug)]
pub struct GlobalSystem {
    pub mesh: TensorMesh,
    pub reference: ReferenceElement,
    pub layout: TraceLayout,
    pub case: CaseData,
    pub options: SolverOptions,
    /// Prescribed trace unknowns and their values.
    pub constraints: BTreeMap<usize, c64>,
    /// Trace unknowns in the solve use this basis; solutions are reported in
    /// the `(r, t)` basis.
    pub flux_basis: FluxBasis,
    /// Free index of each trace unknown (`None` when constrained).
    pub free_index: Vec<Option<usize>>,
    pub free_dofs: Vec<usize>,
    /// Hermitian trace Schur matrix on the free unknowns (both triangles stored).
    pub schur: SparseColMat<usize, c64>,
    pub rhs: Vec<c64>,
    /// Order in which element work is scheduled; contributions are always
    /// reduced in element index order.
    pub element_order: Vec<usize>,
}

/// Fields plus free traces, for inspection.
#[derive(Clone, Debug)]
pub struct ReducedSystem {
    pub matrix: SparseColMat<usize, c64>,
    pub rhs: Vec<c64>,
    pub num_fields: usize,
    pub num_free_traces: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveInfo {
    pub method: SolverMethod,
    /// Set when the direct factorization broke down and CG was used instead.
    pub fell_back: bool,
    /// CG iterations over all solves.
    pub iterations: usize,
    pub refinement_steps: usize,
    /// Reduced trace gradient at the returned solution relative to the
    /// initial one.
    pub relative_residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    /// Field coefficients, element-major with `num_fields` per element.
    pub fields: Vec<c64>,
    /// Trace coefficients by global trace index (constrained ones included).
    pub traces: Vec<c64>,
    /// Element residual indicators; empty until recovered.
    pub eta: Vec<f64>,
    pub total_residual: f64,
    pub info: SolveInfo,
}

impl Solution {
    pub fn num_dofs(&self) -> usize {
        self.fields.len() + self.traces.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionEstimate {
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl ConditionEstimate {
    pub fn ratio(&self) -> f64 {
        self.lambda_max / self.lambda_min
    }
}

/// Prescribed trace values from the case's boundary data.
///
/// Hyperbolic: `r`, `t` on ξ = 0; `r` on τ = 0; `t` on τ = T.
/// Elliptic: `û` on ξ = 0 and both τ faces; `σ̂_n` on ξ = Z.
pub fn boundary_constraints(
    mesh: &TensorMesh,
    layout: &TraceLayout,
    case: &CaseData,
) -> Result<BTreeMap<usize, c64>> {
    if case.regime() != layout.regime {
        return Err(DpgError::WrongRegime { expected: layout.regime, found: case.regime() });
    }
    let mut out = BTreeMap::new();
    for edge in mesh.edges() {
        let comps: &[usize] = match (layout.regime, edge.tag) {
            (_, BoundaryTag::Interior) => &[],
            (Regime::Hyperbolic, BoundaryTag::Bottom) => &[0, 1],
            (Regime::Hyperbolic, BoundaryTag::Left) => &[0],
            (Regime::Hyperbolic, BoundaryTag::Right) => &[1],
            (Regime::Hyperbolic, BoundaryTag::Top) => &[],
            (Regime::Elliptic, BoundaryTag::Top) => &[1],
            (Regime::Elliptic, _) => &[0],
        };
        let horizontal = edge.orientation == Orientation::Horizontal;
        for &comp in comps {
            let (family, degree) = layout.cfg.trace_family(layout.regime, comp);
            let coef = interpolate(family, degree, |s| {
                let (t, x) = edge.map(s);
                case.trace_value(comp, t, x, horizontal)
            });
            for (dof, value) in layout.edge_dofs(mesh, edge.index, comp).into_iter().zip(coef) {
                out.insert(dof, value);
            }
        }
    }
    Ok(out)
}

fn hermitian_from_triplets(n: usize, triplets: &[Triplet<usize, usize, c64>]) -> SparseColMat<usize, c64> {
    SparseColMat::try_new_from_triplets(n, n, triplets).expect("valid triplet indices")
}

fn matvec(a: &SparseColMat<usize, c64>, x: &[c64]) -> Vec<c64> {
    let a = a.as_ref();
    let (cp, ri, v) = (a.symbolic().col_ptr(), a.symbolic().row_idx(), a.val());
    let mut y = vec![ZERO; a.nrows()];
    for j in 0..a.ncols() {
        for k in cp[j]..cp[j + 1] {
            y[ri[k]] += v[k] * x[j];
        }
    }
    y
}

fn dot(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[c64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Jacobi-preconditioned conjugate gradients for a Hermitian PD matrix.
pub fn conjugate_gradient(
    a: &SparseColMat<usize, c64>,
    b: &[c64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<c64>, usize, f64)> {
    let n = b.len();
    let diag: Vec<f64> = {
        let ar = a.as_ref();
        let (cp, ri, v) = (ar.symbolic().col_ptr(), ar.symbolic().row_idx(), ar.val());
        (0..n)
            .map(|j| (cp[j]..cp[j + 1]).find(|&k| ri[k] == j).map_or(1.0, |k| v[k].re))
            .map(|d| if d > 0.0 { d } else { 1.0 })
            .collect()
    };
    let bn = norm(b);
    let mut x = vec![ZERO; n];
    if bn == 0.0 {
        return Ok((x, 0, 0.0));
    }
    let mut r = b.to_vec();
    let mut z: Vec<c64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let ap = matvec(a, &p);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = norm(&r) / bn;
        if rel <= tol {
            return Ok((x, it, rel));
        }
        z = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rel = norm(&vec_sub(b, &matvec(a, &x))) / bn;
    Err(DpgError::SolverFailure { residual: rel })
}

fn vec_sub(a: &[c64], b: &[c64]) -> Vec<c64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

impl GlobalSystem {
    pub fn regime(&self) -> Regime {
        self.layout.regime
    }

    pub fn num_fields_per_element(&self) -> usize {
        self.reference.num_fields()
    }

    pub fn num_field_dofs(&self) -> usize {
        self.mesh.num_elements() * self.num_fields_per_element()
    }

    pub fn num_trace_dofs(&self) -> usize {
        self.layout.num_dofs()
    }

    /// All unknowns, fields plus traces (constrained traces included).
    pub fn num_dofs(&self) -> usize {
        self.num_field_dofs() + self.num_trace_dofs()
    }

    pub fn assembler(&self) -> Assembler<'_> {
        Assembler::new(&self.reference, self.case.model).with_s_graph(self.options.s_graph)
    }

    pub fn element_traces(&self, element: usize) -> Vec<TraceDof> {
        self.layout.element_dofs(&self.mesh, element)
    }

    pub fn element_system(&self, element: usize) -> Result<(Vec<TraceDof>, ElementSystem)> {
        let traces = self.element_traces(element);
        let mut sys = self.assembler().element_system(&self.mesh.element(element), &traces, Some(&self.case))?;
        self.flux_basis.transform_columns(&traces, &mut sys.bhat);
        Ok((traces, sys))
    }

    /// One element pass at the given traces (solve basis, all dofs).
    ///
    /// Fields are the element least-squares minimizers for those traces, so
    /// `grad` is the reduced trace gradient `W_tᴴ(y − Wx)`; computing it from
    /// `W` rather than `K = WᴴW` keeps refinement accurate to `κ(W)` rather
    /// than `κ(W)²`.
    fn element_work(&self, element: usize, traces: &[c64], want_schur: bool) -> Result<ElementWork> {
        let (dofs, sys) = self.element_system(element)?;
        let wh = sys.whiten(element)?;
        let (nf, nt, m) = (sys.num_fields(), dofs.len(), wh.w.nrows());
        let wf = wh.w.submatrix(0, 0, m, nf);
        let wt = wh.w.submatrix(0, nf, m, nt);
        let xt = Mat::from_fn(nt, 1, |k, _| traces[dofs[k].global]);
        let y = Mat::from_fn(m, 1, |i, _| wh.y[i]);
        let r0 = &y - wt * &xt;
        let kff = wf.adjoint() * wf;
        let llt = kff.llt(Side::Lower).map_err(|_| DpgError::DegenerateGram { element })?;
        let mut xf = wf.adjoint() * &r0;
        llt.solve_in_place_with_conj(Conj::No, xf.as_mut());
        let rho = &r0 - wf * &xf;
        let eta = (0..m).map(|i| rho[(i, 0)].norm_sqr()).sum::<f64>().sqrt();
        let g = wt.adjoint() * &rho;
        let schur = want_schur.then(|| {
            let mut x = wf.adjoint() * wt;
            llt.solve_in_place_with_conj(Conj::No, x.as_mut());
            wt.adjoint() * wt - (wt.adjoint() * wf) * &x
        });
        Ok(ElementWork {
            element,
            globals: dofs.iter().map(|d| d.global).collect(),
            fields: (0..nf).map(|i| xf[(i, 0)]).collect(),
            eta,
            grad: (0..nt).map(|k| g[(k, 0)]).collect(),
            schur,
        })
    }

    /// Element work in element index order, whatever order it was computed
    /// in, so every later reduction is bitwise reproducible.
    fn pass(&self, traces: &[c64], want_schur: bool) -> Result<Vec<ElementWork>> {
        let mut work: Vec<ElementWork> =
            self.element_order.par_iter().map(|&e| self.element_work(e, traces, want_schur)).collect::<Result<_>>()?;
        work.sort_by_key(|w| w.element);
        Ok(work)
    }

    fn free_gradient(&self, work: &[ElementWork]) -> Vec<c64> {
        let mut g = vec![ZERO; self.free_dofs.len()];
        for w in work {
            for (k, &gl) in w.globals.iter().enumerate() {
                if let Some(i) = self.free_index[gl] {
                    g[i] += w.grad[k];
                }
            }
        }
        g
    }

    fn trace_value(&self, global: usize, free: &[c64]) -> c64 {
        match self.free_index[global] {
            Some(k) => free[k],
            None => self.constraints[&global],
        }
    }

    /// Trace vector in the `(r, t)` basis from free values in the solve basis.
    pub fn expand_traces(&self, free: &[c64]) -> Vec<c64> {
        let mut t = self.solve_basis_traces(free);
        self.flux_basis.convert(&self.mesh, &mut t, false);
        t
    }

    fn solve_basis_traces(&self, free: &[c64]) -> Vec<c64> {
        (0..self.num_trace_dofs()).map(|g| self.trace_value(g, free)).collect()
    }

    fn solution_from(&self, free: &[c64], work: Vec<ElementWork>, info: SolveInfo) -> Solution {
        let traces = self.expand_traces(free);
        let nf = self.num_fields_per_element();
        let mut fields = vec![ZERO; self.num_field_dofs()];
        let mut eta = vec![0.0; work.len()];
        for w in work {
            fields[w.element * nf..(w.element + 1) * nf].copy_from_slice(&w.fields);
            eta[w.element] = w.eta;
        }
        let total_residual = eta.iter().map(|e| e * e).sum::<f64>().sqrt();
        Solution { fields, traces, eta, total_residual, info }
    }

    /// Solves the trace system with iterative refinement and recovers the
    /// fields and the element residual indicators.
    pub fn solve_system(&self) -> Result<Solution> {
        let n = self.free_dofs.len();
        let mut info = SolveInfo {
            method: self.options.method,
            fell_back: false,
            iterations: 0,
            refinement_steps: 0,
            relative_residual: 0.0,
        };
        let mut free = vec![ZERO; n];
        if n == 0 {
            let work = self.pass(&self.solve_basis_traces(&free), false)?;
            return Ok(self.solution_from(&free, work, info));
        }
        let llt = match self.options.method {
            SolverMethod::Direct => self.factorize(),
            SolverMethod::Iterative => None,
        };
        info.fell_back = self.options.method == SolverMethod::Direct && llt.is_none();
        let correction = |g: &[c64], info: &mut SolveInfo| -> Result<Vec<c64>> {
            if let Some(llt) = &llt {
                let mut x = Mat::from_fn(n, 1, |i, _| g[i]);
                llt.solve_in_place_with_conj(Conj::No, x.as_mut());
                Ok((0..n).map(|i| x[(i, 0)]).collect())
            } else {
                info.method = SolverMethod::Iterative;
                let tol = self.options.cg_tolerance;
                let (x, it, _) = conjugate_gradient(&self.schur, g, tol, self.options.cg_max_iterations)?;
                info.iterations += it;
                Ok(x)
            }
        };
        let mut grad = self.rhs.clone();
        let bn = norm(&grad);
        let mut work = None;
        loop {
            let delta = correction(&grad, &mut info)?;
            if work.is_some() && norm(&delta) <= REFINEMENT_TOLERANCE * norm(&free) {
                break;
            }
            if work.is_some() {
                info.refinement_steps += 1;
            }
            free.iter_mut().zip(&delta).for_each(|(x, d)| *x += d);
            let w = self.pass(&self.solve_basis_traces(&free), false)?;
            grad = self.free_gradient(&w);
            work = Some(w);
            if info.refinement_steps >= self.options.refinement_steps {
                break;
            }
        }
        info.relative_residual = if bn > 0.0 { norm(&grad) / bn } else { 0.0 };
        if !free.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(DpgError::SolverFailure { residual: info.relative_residual });
        }
        Ok(self.solution_from(&free, work.expect("at least one pass"), info))
    }

    /// Recomputes fields and the element indicators `η_K = ‖y − Wx‖` for the
    /// traces of `sol`.
    pub fn recover_residual(&self, sol: Solution) -> Result<Solution> {
        let mut t = sol.traces.clone();
        self.flux_basis.convert(&self.mesh, &mut t, true);
        let work = self.pass(&t, false)?;
        let free: Vec<c64> = self.free_dofs.iter().map(|&g| t[g]).collect();
        Ok(self.solution_from(&free, work, sol.info))
    }

    /// Same as [`GlobalSystem::solve_system`].
    pub fn solve(&self) -> Result<Solution> {
        self.solve_system()
    }

    fn factorize(&self) -> Option<Llt<usize, c64>> {
        let sym = SymbolicLlt::try_new(self.schur.symbolic(), Side::Lower).ok()?;
        Llt::try_new_with_symbolic(sym, self.schur.as_ref(), Side::Lower).ok()
    }

    /// Fields plus free traces (in the solve basis), assembled from the
    /// condensed element blocks.
    pub fn assemble_reduced(&self) -> Result<ReducedSystem> {
        let nf = self.num_fields_per_element();
        let n_fields = self.num_field_dofs();
        let n = n_fields + self.free_dofs.len();
        let blocks: Vec<(Vec<TraceDof>, Condensed)> = (0..self.mesh.num_elements())
            .into_par_iter()
            .map(|e| {
                let (dofs, sys) = self.element_system(e)?;
                Ok((dofs, sys.condense(e)?))
            })
            .collect::<Result<_>>()?;
        let mut triplets = Vec::new();
        let mut rhs = vec![ZERO; n];
        for (e, (dofs, c)) in blocks.iter().enumerate() {
            // Reduced index, or the prescribed value of a constrained trace.
            let map: Vec<std::result::Result<usize, c64>> = (0..nf)
                .map(|i| Ok(e * nf + i))
                .chain(dofs.iter().map(|d| match self.free_index[d.global] {
                    Some(k) => Ok(n_fields + k),
                    None => Err(self.constraints[&d.global]),
                }))
                .collect();
            for (a, ra) in map.iter().enumerate() {
                let Ok(ra) = *ra else { continue };
                rhs[ra] += c.f[a];
                for (b, rb) in map.iter().enumerate() {
                    match *rb {
                        Ok(rb) => triplets.push(Triplet::new(ra, rb, c.k[(a, b)])),
                        Err(v) => rhs[ra] -= c.k[(a, b)] * v,
                    }
                }
            }
        }
        Ok(ReducedSystem {
            matrix: hermitian_from_triplets(n, &triplets),
            rhs,
            num_fields: n_fields,
            num_free_traces: self.free_dofs.len(),
        })
    }

    /// Extremal eigenvalue estimates of the trace Schur matrix from short
    /// Lanczos runs on `S` and on `S⁻¹`.
    pub fn condition_estimate(&self, steps: usize) -> Result<ConditionEstimate> {
        let n = self.free_dofs.len();
        if n == 0 {
            return Err(DpgError::InvalidInput("no free unknowns".into()));
        }
        let lambda_max = lanczos_extremes(n, steps, |x| matvec(&self.schur, x))?.1;
        let llt = self.factorize().ok_or(DpgError::SolverFailure { residual: f64::NAN })?;
        let inv_max = lanczos_extremes(n, steps, |x| {
            let mut m = Mat::from_fn(n, 1, |i, _| x[i]);
            llt.solve_in_place_with_conj(Conj::No, m.as_mut());
            (0..n).map(|i| m[(i, 0)]).collect()
        })?
        .1;
        Ok(ConditionEstimate { lambda_min: 1.0 / inv_max, lambda_max })
    }

    /// Locates the element containing `(τ, ξ)` and its reference coordinates.
    pub fn locate(&self, tau: f64, xi: f64) -> Option<(usize, f64, f64)> {
        let find = |lines: &[f64], v: f64| -> Option<usize> {
            if v < lines[0] || v > *lines.last().unwrap() {
                return None;
            }
            Some(lines.partition_point(|&l| l <= v).clamp(1, lines.len() - 1) - 1)
        };
        let i = find(self.mesh.tau_lines(), tau)?;
        let j = find(self.mesh.xi_lines(), xi)?;
        let e = self.mesh.element(self.mesh.element_index(i, j));
        Some((e.index, 2.0 * (tau - e.tau_l) / e.h_tau() - 1.0, 2.0 * (xi - e.xi_l) / e.h_xi() - 1.0))
    }

    /// Computed field values `(u, v)` or `(u, σ_τ, σ_ξ)` at a point.
    pub fn eval_fields(&self, sol: &Solution, tau: f64, xi: f64) -> Option<Vec<c64>> {
        let (e, x, y) = self.locate(tau, xi)?;
        let r = &self.reference;
        let nf = r.num_fields();
        let mut out = vec![ZERO; r.trial.len()];
        for (j, &(comp, k)) in r.trial_index.iter().enumerate() {
            let s = &r.trial[comp];
            let (a, b) = s.modes(k);
            let v = s.x.values(s.x_degree, x)[a] * s.y.values(s.y_degree, y)[b];
            out[comp] += sol.fields[e * nf + j] * v;
        }
        Some(out)
    }

    /// Relative `L²` errors against the case's exact fields.
    pub fn errors(&self, sol: &Solution, kind: NormKind) -> ErrorReport {
        let r = &self.reference;
        let nf = r.num_fields();
        let ncomp = r.trial.len();
        let nq = r.num_points();
        let (err2, exact2) = (0..self.mesh.num_elements())
            .into_par_iter()
            .map(|e| {
                let el = self.mesh.element(e);
                let jac = 0.25 * el.area();
                let mut err = vec![0.0; ncomp];
                let mut ex = vec![0.0; ncomp];
                for qy in 0..nq {
                    for qx in 0..nq {
                        let w = r.rule.weights[qx] * r.rule.weights[qy] * jac;
                        let (t, x) = el.map(r.rule.points[qx], r.rule.points[qy]);
                        let exact = self.case.exact_fields(t, x);
                        let mut h = vec![ZERO; ncomp];
                        for j in 0..nf {
                            h[r.trial_index[j].0] += sol.fields[e * nf + j] * r.eval_field(j, Loc::Point(qx), Loc::Point(qy));
                        }
                        for c in 0..ncomp {
                            err[c] += w * kind.abs2(h[c] - exact[c]);
                            ex[c] += w * kind.abs2(exact[c]);
                        }
                    }
                }
                (err, ex)
            })
            .reduce(
                || (vec![0.0; ncomp], vec![0.0; ncomp]),
                |(mut a, mut b), (c, d)| {
                    for k in 0..ncomp {
                        a[k] += c[k];
                        b[k] += d[k];
                    }
                    (a, b)
                },
            );
        ErrorReport::from_integrals(&err2, &exact2)
    }
}

/// Smallest and largest Ritz values of a Hermitian operator after `steps`
/// Lanczos iterations with full reorthogonalization.
pub fn lanczos_extremes(n: usize, steps: usize, op: impl Fn(&[c64]) -> Vec<c64>) -> Result<(f64, f64)> {
    let steps = steps.clamp(1, n);
    // Deterministic start vector.
    let mut v: Vec<c64> = (0..n).map(|i| c64::new(1.0 + ((i * 7919) % 101) as f64 / 101.0, 0.0)).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|z| *z /= nv);
    let mut basis: Vec<Vec<c64>> = vec![v];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    for k in 0..steps {
        let mut w = op(&basis[k]);
        let a = dot(&basis[k], &w).re;
        alpha.push(a);
        for _ in 0..2 {
            for q in &basis {
                let h = dot(q, &w);
                w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= h * qi);
            }
        }
        let b = norm(&w);
        if k + 1 == steps || b <= 1e-14 * a.abs().max(1e-300) {
            break;
        }
        beta.push(b);
        basis.push(w.into_iter().map(|z| z / b).collect());
    }
    let m = alpha.len();
    let t = Mat::<f64>::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i == j + 1 {
            beta[j]
        } else if j == i + 1 {
            beta[i]
        } else {
            0.0
        }
    });
    let ev = t
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| DpgError::SolverFailure { residual: f64::NAN })?;
    Ok((ev[0], ev[m - 1]))
}

/// Assembles the trace system for a case on a mesh.
pub fn build_global(mesh: &TensorMesh, case: &CaseData, cfg: SpaceConfig, options: SolverOptions) -> Result<GlobalSystem> {
    build_global_in_order(mesh, case, cfg, options, (0..mesh.num_elements()).collect())
}

/// [`build_global`] with element work scheduled in `order`, a permutation of
/// the element indices. The result does not depend on it.
pub fn build_global_in_order(
    mesh: &TensorMesh,
    case: &CaseData,
    cfg: SpaceConfig,
    options: SolverOptions,
    order: Vec<usize>,
) -> Result<GlobalSystem> {
    let mut seen = vec![false; mesh.num_elements()];
    if order.len() != seen.len() || !order.iter().all(|&e| e < seen.len() && !std::mem::replace(&mut seen[e], true)) {
        return Err(DpgError::InvalidInput("element order is not a permutation".into()));
    }
    if !(options.s_graph > 0.0) {
        return Err(DpgError::InvalidParameter("s_graph must be positive".into()));
    }
    let regime = case.regime();
    let reference = ReferenceElement::new(regime, cfg);
    let layout = TraceLayout::new(mesh, regime, cfg);
    let constraints = boundary_constraints(mesh, &layout, case)?;
    let n_trace = layout.num_dofs();
    if let Some((&bad, _)) = constraints.range(n_trace..).next() {
        return Err(DpgError::ConstraintOnMissingDof(bad));
    }
    let mut free_index = vec![None; n_trace];
    let mut free_dofs = Vec::new();
    for (g, slot) in free_index.iter_mut().enumerate() {
        if !constraints.contains_key(&g) {
            *slot = Some(free_dofs.len());
            free_dofs.push(g);
        }
    }
    let flux_basis = FluxBasis::new(mesh, &layout, case, &constraints);
    let mut sys = GlobalSystem {
        mesh: mesh.clone(),
        flux_basis,
        reference,
        layout,
        case: case.clone(),
        options,
        constraints,
        free_index,
        free_dofs,
        schur: hermitian_from_triplets(0, &[]),
        rhs: Vec::new(),
        element_order: order,
    };
    // One pass at the lifted boundary data gives both the matrix and the
    // right-hand side.
    let n = sys.free_dofs.len();
    let work = sys.pass(&sys.solve_basis_traces(&vec![ZERO; n]), true)?;
    let mut triplets = Vec::new();
    for w in &work {
        let s = w.schur.as_ref().expect("requested");
        for (a, &ga) in w.globals.iter().enumerate() {
            let Some(ra) = sys.free_index[ga] else { continue };
            for (b, &gb) in w.globals.iter().enumerate() {
                if let Some(rb) = sys.free_index[gb] {
                    triplets.push(Triplet::new(ra, rb, s[(a, b)]));
                }
            }
        }
    }
    let rhs = sys.free_gradient(&work);
    sys.schur = hermitian_from_triplets(n, &triplets);
    sys.rhs = rhs;
    Ok(sys)
}

/// Writes a sparse matrix as `row,col,re,im` lines with a header.
pub fn write_coordinate(matrix: &SparseColMat<usize, c64>, mut out: impl Write) -> Result<()> {
    let m = matrix.as_ref();
    let (cp, ri, v) = (m.symbolic().col_ptr(), m.symbolic().row_idx(), m.val());
    writeln!(out, "row,col,re,im")?;
    for j in 0..m.ncols() {
        for k in cp[j]..cp[j + 1] {
            writeln!(out, "{},{},{:e},{:e}", ri[k], j, v[k].re, v[k].im)?;
        }
    }
    Ok(())
}
