//! Global numbering of trace unknowns.
//!
//! Each edge carries two trace components, each expanded in a 1D family along
//! the edge's global parametrization:
//! - hyperbolic: `r` (component 0) and `t` (component 1), Legendre of order `p`;
//! - elliptic: `û` (component 0), continuous Lobatto of order `p + 1` with
//!   vertex unknowns shared between edges, and `σ̂_n` (component 1), Legendre
//!   of order `p`, measured along the edge's reference normal.
//!
//! Global layout: hyperbolic traces are numbered edge by edge, component-major
//! within an edge. Elliptic traces put all vertex unknowns first, then the `û`
//! bubbles edge by edge, then `σ̂_n` edge by edge.

use crate::mesh::{LocalEdge, TensorMesh};
use crate::model::Regime;

use super::spaces::SpaceConfig;

/// One edge-local mode contributing to a trace unknown.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgePiece {
    pub edge: LocalEdge,
    pub component: usize,
    pub mode: usize,
}

/// An element-local trace unknown. Vertex unknowns of `û` touch two edges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceDof {
    pub global: usize,
    pub pieces: Vec<EdgePiece>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceLayout {
    pub regime: Regime,
    pub cfg: SpaceConfig,
    n_vertices: usize,
    n_edges: usize,
}

impl TraceLayout {
    pub fn new(mesh: &TensorMesh, regime: Regime, cfg: SpaceConfig) -> Self {
        Self { regime, cfg, n_vertices: mesh.num_vertices(), n_edges: mesh.num_edges() }
    }

    pub fn num_modes(&self, comp: usize) -> usize {
        self.cfg.trace_family(self.regime, comp).1 + 1
    }

    pub fn num_dofs(&self) -> usize {
        let p = self.cfg.p;
        match self.regime {
            Regime::Hyperbolic => self.n_edges * 2 * (p + 1),
            Regime::Elliptic => self.n_vertices + self.n_edges * p + self.n_edges * (p + 1),
        }
    }

    /// Global unknowns of component `comp` on global edge `edge`, in mode order.
    pub fn edge_dofs(&self, mesh: &TensorMesh, edge: usize, comp: usize) -> Vec<usize> {
        let p = self.cfg.p;
        match (self.regime, comp) {
            (Regime::Hyperbolic, _) => {
                let base = edge * 2 * (p + 1) + comp * (p + 1);
                (base..base + p + 1).collect()
            }
            (Regime::Elliptic, 0) => {
                let [v0, v1] = mesh.edge_vertices(&mesh.edge(edge));
                let base = self.n_vertices + edge * p;
                [v0, v1].into_iter().chain(base..base + p).collect()
            }
            (Regime::Elliptic, _) => {
                let base = self.n_vertices + self.n_edges * p + edge * (p + 1);
                (base..base + p + 1).collect()
            }
        }
    }

    /// Element-local trace unknowns.
    ///
    /// Hyperbolic order: per edge (bottom, right, top, left), `r` modes then
    /// `t` modes. Elliptic order: the four `û` vertex unknowns (counter-clockwise
    /// from bottom-left), then per edge the `û` bubbles, then per edge `σ̂_n`.
    pub fn element_dofs(&self, mesh: &TensorMesh, element: usize) -> Vec<TraceDof> {
        let e = mesh.element(element);
        let edges = mesh.element_edges(&e);
        let mut out = Vec::new();
        let single = |edge: LocalEdge, component: usize, mode: usize, global: usize| TraceDof {
            global,
            pieces: vec![EdgePiece { edge, component, mode }],
        };
        match self.regime {
            Regime::Hyperbolic => {
                for (le, &g) in LocalEdge::ALL.iter().zip(&edges) {
                    for comp in 0..2 {
                        for (mode, dof) in self.edge_dofs(mesh, g, comp).into_iter().enumerate() {
                            out.push(single(*le, comp, mode, dof));
                        }
                    }
                }
            }
            Regime::Elliptic => {
                use LocalEdge::*;
                // Lobatto mode 0 sits at the edge start (lower τ or ξ), mode 1 at its end.
                let corners = [
                    (mesh.vertex_index(e.i, e.j), [(Bottom, 0), (Left, 0)]),
                    (mesh.vertex_index(e.i + 1, e.j), [(Bottom, 1), (Right, 0)]),
                    (mesh.vertex_index(e.i + 1, e.j + 1), [(Right, 1), (Top, 1)]),
                    (mesh.vertex_index(e.i, e.j + 1), [(Top, 0), (Left, 1)]),
                ];
                for (global, touching) in corners {
                    out.push(TraceDof {
                        global,
                        pieces: touching
                            .iter()
                            .map(|&(edge, mode)| EdgePiece { edge, component: 0, mode })
                            .collect(),
                    });
                }
                for (le, &g) in LocalEdge::ALL.iter().zip(&edges) {
                    for (k, dof) in self.edge_dofs(mesh, g, 0).into_iter().enumerate().skip(2) {
                        out.push(single(*le, 0, k, dof));
                    }
                }
                for (le, &g) in LocalEdge::ALL.iter().zip(&edges) {
                    for (mode, dof) in self.edge_dofs(mesh, g, 1).into_iter().enumerate() {
                        out.push(single(*le, 1, mode, dof));
                    }
                }
            }
        }
        out
    }
}
