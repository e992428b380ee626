//! Tensor-product rectangular meshes of `[0, T] × [0, Z]`.
//!
//! A mesh is the product of a sorted list of τ-lines and a sorted list of
//! ξ-lines, so it is conforming by construction. Adaptive refinement bisects
//! whole strips (all elements between two neighboring lines).
//!
//! Numbering:
//! - element `(i, j)` spans `[τ_i, τ_{i+1}] × [ξ_j, ξ_{j+1}]` and has index `j·n_τ + i`;
//! - vertex `(i, j)` has index `j·(n_τ + 1) + i`;
//! - horizontal edges (constant ξ) come first, index `j·n_τ + i` on line `j`;
//!   vertical edges (constant τ) follow, offset by the horizontal count, index
//!   `j·(n_τ + 1) + i` on line `i`.
//!
//! Every edge is parametrized by its increasing coordinate (τ for horizontal,
//! ξ for vertical); its reference normal points in `+ξ` or `+τ` respectively.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{DpgError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorMesh {
    tau_lines: Vec<f64>,
    xi_lines: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementRef {
    pub index: usize,
    pub i: usize,
    pub j: usize,
    pub tau_l: f64,
    pub tau_r: f64,
    pub xi_l: f64,
    pub xi_u: f64,
}

impl ElementRef {
    pub fn h_tau(&self) -> f64 {
        self.tau_r - self.tau_l
    }

    pub fn h_xi(&self) -> f64 {
        self.xi_u - self.xi_l
    }

    pub fn area(&self) -> f64 {
        self.h_tau() * self.h_xi()
    }

    /// Physical point of reference coordinates `(x, y) ∈ [−1, 1]²`.
    pub fn map(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.tau_l + 0.5 * (x + 1.0) * self.h_tau(),
            self.xi_l + 0.5 * (y + 1.0) * self.h_xi(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    /// Constant ξ, parametrized by τ.
    Horizontal,
    /// Constant τ, parametrized by ξ.
    Vertical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryTag {
    Interior,
    /// ξ = 0
    Bottom,
    /// ξ = Z
    Top,
    /// τ = 0
    Left,
    /// τ = T
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeRef {
    pub index: usize,
    pub orientation: Orientation,
    /// Index of the mesh line the edge lies on.
    pub line: usize,
    /// Index of the strip (interval) along that line.
    pub strip: usize,
    pub tag: BoundaryTag,
    /// Start and end of the edge along its parameter.
    pub start: f64,
    pub end: f64,
    /// The fixed coordinate (ξ for horizontal, τ for vertical edges).
    pub position: f64,
}

impl EdgeRef {
    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    /// Physical point at edge parameter `s ∈ [−1, 1]`.
    pub fn map(&self, s: f64) -> (f64, f64) {
        let t = self.start + 0.5 * (s + 1.0) * self.length();
        match self.orientation {
            Orientation::Horizontal => (t, self.position),
            Orientation::Vertical => (self.position, t),
        }
    }
}

/// Local edge slots of an element, in dof order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LocalEdge {
    Bottom = 0,
    Right = 1,
    Top = 2,
    Left = 3,
}

impl LocalEdge {
    pub const ALL: [LocalEdge; 4] = [LocalEdge::Bottom, LocalEdge::Right, LocalEdge::Top, LocalEdge::Left];

    pub fn orientation(self) -> Orientation {
        match self {
            LocalEdge::Bottom | LocalEdge::Top => Orientation::Horizontal,
            LocalEdge::Left | LocalEdge::Right => Orientation::Vertical,
        }
    }

    /// Outward normal of the element on this edge, `(n_τ, n_ξ)`.
    pub fn outward_normal(self) -> [f64; 2] {
        match self {
            LocalEdge::Bottom => [0.0, -1.0],
            LocalEdge::Right => [1.0, 0.0],
            LocalEdge::Top => [0.0, 1.0],
            LocalEdge::Left => [-1.0, 0.0],
        }
    }

    /// `+1` if the element's outward normal agrees with the edge's reference normal.
    pub fn normal_sign(self) -> f64 {
        match self {
            LocalEdge::Bottom | LocalEdge::Left => -1.0,
            LocalEdge::Top | LocalEdge::Right => 1.0,
        }
    }
}

fn validate_lines(lines: &[f64], what: &str) -> Result<()> {
    if lines.len() < 2 {
        return Err(DpgError::InvalidMesh(format!("{what} needs at least two lines")));
    }
    if lines[0] != 0.0 {
        return Err(DpgError::InvalidMesh(format!("{what} must start at 0")));
    }
    if lines.iter().any(|x| !x.is_finite()) || lines.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DpgError::InvalidMesh(format!("{what} must be finite and strictly increasing")));
    }
    Ok(())
}

fn bisect(lines: &[f64], marked: &BTreeSet<usize>) -> Vec<f64> {
    let mut out = Vec::with_capacity(lines.len() + marked.len());
    for (k, w) in lines.windows(2).enumerate() {
        out.push(w[0]);
        if marked.contains(&k) {
            out.push(0.5 * (w[0] + w[1]));
        }
    }
    out.push(*lines.last().unwrap());
    out
}

impl TensorMesh {
    pub fn new(tau_lines: Vec<f64>, xi_lines: Vec<f64>) -> Result<Self> {
        validate_lines(&tau_lines, "tau_lines")?;
        validate_lines(&xi_lines, "xi_lines")?;
        Ok(Self { tau_lines, xi_lines })
    }

    pub fn uniform(n_tau: usize, n_xi: usize, t_end: f64, z_end: f64) -> Result<Self> {
        if n_tau == 0 || n_xi == 0 {
            return Err(DpgError::InvalidMesh("strip counts must be at least 1".into()));
        }
        if !(t_end > 0.0 && z_end > 0.0) {
            return Err(DpgError::InvalidMesh("domain extents must be positive".into()));
        }
        let lines = |n: usize, len: f64| -> Vec<f64> {
            (0..=n).map(|k| if k == n { len } else { len * k as f64 / n as f64 }).collect()
        };
        Self::new(lines(n_tau, t_end), lines(n_xi, z_end))
    }

    pub fn unit_square(n: usize) -> Result<Self> {
        Self::uniform(n, n, 1.0, 1.0)
    }

    pub fn tau_lines(&self) -> &[f64] {
        &self.tau_lines
    }

    pub fn xi_lines(&self) -> &[f64] {
        &self.xi_lines
    }

    pub fn t_end(&self) -> f64 {
        *self.tau_lines.last().unwrap()
    }

    pub fn z_end(&self) -> f64 {
        *self.xi_lines.last().unwrap()
    }

    /// Number of τ-strips (elements along τ).
    pub fn n_tau(&self) -> usize {
        self.tau_lines.len() - 1
    }

    pub fn n_xi(&self) -> usize {
        self.xi_lines.len() - 1
    }

    pub fn num_elements(&self) -> usize {
        self.n_tau() * self.n_xi()
    }

    pub fn num_vertices(&self) -> usize {
        self.tau_lines.len() * self.xi_lines.len()
    }

    pub fn num_horizontal_edges(&self) -> usize {
        self.n_tau() * self.xi_lines.len()
    }

    pub fn num_edges(&self) -> usize {
        self.num_horizontal_edges() + self.tau_lines.len() * self.n_xi()
    }

    pub fn element_index(&self, i: usize, j: usize) -> usize {
        j * self.n_tau() + i
    }

    pub fn element(&self, index: usize) -> ElementRef {
        let (i, j) = (index % self.n_tau(), index / self.n_tau());
        ElementRef {
            index,
            i,
            j,
            tau_l: self.tau_lines[i],
            tau_r: self.tau_lines[i + 1],
            xi_l: self.xi_lines[j],
            xi_u: self.xi_lines[j + 1],
        }
    }

    pub fn elements(&self) -> impl ExactSizeIterator<Item = ElementRef> + '_ {
        (0..self.num_elements()).map(move |e| self.element(e))
    }

    pub fn vertex_index(&self, i: usize, j: usize) -> usize {
        j * self.tau_lines.len() + i
    }

    pub fn horizontal_edge(&self, line: usize, strip: usize) -> usize {
        line * self.n_tau() + strip
    }

    pub fn vertical_edge(&self, line: usize, strip: usize) -> usize {
        self.num_horizontal_edges() + strip * self.tau_lines.len() + line
    }

    /// Global edge indices of an element, ordered bottom, right, top, left.
    pub fn element_edges(&self, e: &ElementRef) -> [usize; 4] {
        [
            self.horizontal_edge(e.j, e.i),
            self.vertical_edge(e.i + 1, e.j),
            self.horizontal_edge(e.j + 1, e.i),
            self.vertical_edge(e.i, e.j),
        ]
    }

    pub fn edge(&self, index: usize) -> EdgeRef {
        let nh = self.num_horizontal_edges();
        if index < nh {
            let (line, strip) = (index / self.n_tau(), index % self.n_tau());
            let tag = if line == 0 {
                BoundaryTag::Bottom
            } else if line == self.n_xi() {
                BoundaryTag::Top
            } else {
                BoundaryTag::Interior
            };
            EdgeRef {
                index,
                orientation: Orientation::Horizontal,
                line,
                strip,
                tag,
                start: self.tau_lines[strip],
                end: self.tau_lines[strip + 1],
                position: self.xi_lines[line],
            }
        } else {
            let k = index - nh;
            let (strip, line) = (k / self.tau_lines.len(), k % self.tau_lines.len());
            let tag = if line == 0 {
                BoundaryTag::Left
            } else if line == self.n_tau() {
                BoundaryTag::Right
            } else {
                BoundaryTag::Interior
            };
            EdgeRef {
                index,
                orientation: Orientation::Vertical,
                line,
                strip,
                tag,
                start: self.xi_lines[strip],
                end: self.xi_lines[strip + 1],
                position: self.tau_lines[line],
            }
        }
    }

    pub fn edges(&self) -> impl ExactSizeIterator<Item = EdgeRef> + '_ {
        (0..self.num_edges()).map(move |k| self.edge(k))
    }

    /// Vertex indices at the start and end of an edge.
    pub fn edge_vertices(&self, edge: &EdgeRef) -> [usize; 2] {
        match edge.orientation {
            Orientation::Horizontal => [
                self.vertex_index(edge.strip, edge.line),
                self.vertex_index(edge.strip + 1, edge.line),
            ],
            Orientation::Vertical => [
                self.vertex_index(edge.line, edge.strip),
                self.vertex_index(edge.line, edge.strip + 1),
            ],
        }
    }

    /// Elements adjacent to an edge (below/left first).
    pub fn edge_elements(&self, edge: &EdgeRef) -> Vec<usize> {
        let mut out = Vec::with_capacity(2);
        match edge.orientation {
            Orientation::Horizontal => {
                if edge.line > 0 {
                    out.push(self.element_index(edge.strip, edge.line - 1));
                }
                if edge.line < self.n_xi() {
                    out.push(self.element_index(edge.strip, edge.line));
                }
            }
            Orientation::Vertical => {
                if edge.line > 0 {
                    out.push(self.element_index(edge.line - 1, edge.strip));
                }
                if edge.line < self.n_tau() {
                    out.push(self.element_index(edge.line, edge.strip));
                }
            }
        }
        out
    }

    /// Bisects every interval in both directions.
    pub fn refine_uniform(&self) -> Self {
        let all_tau: BTreeSet<usize> = (0..self.n_tau()).collect();
        let all_xi: BTreeSet<usize> = (0..self.n_xi()).collect();
        Self {
            tau_lines: bisect(&self.tau_lines, &all_tau),
            xi_lines: bisect(&self.xi_lines, &all_xi),
        }
    }

    /// Bisects the marked τ-strips and ξ-strips by inserting midpoint lines.
    pub fn refine_lines(&self, marked_tau: &BTreeSet<usize>, marked_xi: &BTreeSet<usize>) -> Result<Self> {
        if let Some(&k) = marked_tau.iter().find(|&&k| k >= self.n_tau()) {
            return Err(DpgError::IndexOutOfRange { what: "tau strip", index: k, len: self.n_tau() });
        }
        if let Some(&k) = marked_xi.iter().find(|&&k| k >= self.n_xi()) {
            return Err(DpgError::IndexOutOfRange { what: "xi strip", index: k, len: self.n_xi() });
        }
        Ok(Self {
            tau_lines: bisect(&self.tau_lines, marked_tau),
            xi_lines: bisect(&self.xi_lines, marked_xi),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: TensorMesh = serde_json::from_str(text)?;
        Self::new(raw.tau_lines, raw.xi_lines)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_examples() {
        let m = TensorMesh::uniform(4, 4, 1.0, 1.0).unwrap();
        assert_eq!(m.num_elements(), 16);
        assert_eq!((m.num_elements() as f64).sqrt(), 4.0);

        let m = TensorMesh::uniform(1, 1, 1.0, 1.0).unwrap();
        let e = m.element(0);
        assert_eq!((e.tau_l, e.tau_r, e.xi_l, e.xi_u), (0.0, 1.0, 0.0, 1.0));

        let m = TensorMesh::uniform(2, 3, 1.0, 2.0).unwrap();
        assert_eq!(m.tau_lines(), &[0.0, 0.5, 1.0]);
        let xi = m.xi_lines();
        assert_eq!(xi.len(), 4);
        assert!((xi[1] - 2.0 / 3.0).abs() < 1e-15 && (xi[2] - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(xi[3], 2.0);
    }

    #[test]
    fn uniform_rejects_bad_input() {
        assert!(TensorMesh::uniform(0, 2, 1.0, 1.0).is_err());
        assert!(TensorMesh::uniform(2, 2, 0.0, 1.0).is_err());
        assert!(TensorMesh::uniform(2, 2, 1.0, -1.0).is_err());
        assert!(TensorMesh::new(vec![0.0, 0.5, 0.5, 1.0], vec![0.0, 1.0]).is_err());
        assert!(TensorMesh::new(vec![0.0], vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn refine_uniform_doubles() {
        let m = TensorMesh::unit_square(4).unwrap();
        let r = m.refine_uniform();
        assert_eq!(r.num_elements(), 64);
        assert_eq!(r.t_end(), 1.0);
        assert_eq!(r.z_end(), 1.0);
        assert!(m.tau_lines().iter().all(|x| r.tau_lines().contains(x)));
    }

    #[test]
    fn refine_lines_examples() {
        let m = TensorMesh::unit_square(2).unwrap();
        let r = m.refine_lines(&[0].into(), &BTreeSet::new()).unwrap();
        assert_eq!(r.tau_lines(), &[0.0, 0.25, 0.5, 1.0]);
        assert_eq!(r.xi_lines(), m.xi_lines());
        assert_eq!(m.refine_lines(&BTreeSet::new(), &BTreeSet::new()).unwrap(), m);
        let all = m.refine_lines(&[0, 1].into(), &[0, 1].into()).unwrap();
        assert_eq!(all, m.refine_uniform());
        assert!(matches!(
            m.refine_lines(&[2].into(), &BTreeSet::new()),
            Err(DpgError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn edge_pairing() {
        let m = TensorMesh::new(vec![0.0, 0.3, 1.0, 1.2], vec![0.0, 0.5, 2.0]).unwrap();
        let mut count = vec![0usize; m.num_edges()];
        for e in m.elements() {
            for k in m.element_edges(&e) {
                count[k] += 1;
                assert!(m.edge_elements(&m.edge(k)).contains(&e.index));
            }
        }
        for edge in m.edges() {
            let expected = if edge.tag == BoundaryTag::Interior { 2 } else { 1 };
            assert_eq!(count[edge.index], expected, "{edge:?}");
            assert_eq!(m.edge_elements(&edge).len(), expected);
        }
    }

    #[test]
    fn element_edge_geometry() {
        let m = TensorMesh::uniform(3, 2, 1.5, 1.0).unwrap();
        for e in m.elements() {
            let [b, r, t, l] = m.element_edges(&e).map(|k| m.edge(k));
            assert_eq!((b.position, b.start, b.end), (e.xi_l, e.tau_l, e.tau_r));
            assert_eq!((t.position, t.start, t.end), (e.xi_u, e.tau_l, e.tau_r));
            assert_eq!((l.position, l.start, l.end), (e.tau_l, e.xi_l, e.xi_u));
            assert_eq!((r.position, r.start, r.end), (e.tau_r, e.xi_l, e.xi_u));
        }
    }

    #[test]
    fn json_round_trip() {
        let m = TensorMesh::uniform(3, 2, 1.0, 1.0).unwrap();
        let text = m.to_json().unwrap();
        assert!(text.contains("tau_lines") && text.contains("xi_lines"));
        assert_eq!(TensorMesh::from_json(&text).unwrap(), m);
        assert!(TensorMesh::from_json(r#"{"tau_lines":[0,1,0.5],"xi_lines":[0,1]}"#).is_err());
    }

    proptest! {
        #[test]
        fn refinement_nested_and_area_conserving(
            seq in proptest::collection::vec((any::<u64>(), any::<u64>(), any::<bool>()), 1..6)
        ) {
            let mut m = TensorMesh::uniform(2, 3, 1.0, 2.0).unwrap();
            for (mt, mx, uniform) in seq {
                let next = if uniform {
                    m.refine_uniform()
                } else {
                    let tau: BTreeSet<usize> = (0..m.n_tau()).filter(|k| (mt >> (k % 64)) & 1 == 1).collect();
                    let xi: BTreeSet<usize> = (0..m.n_xi()).filter(|k| (mx >> (k % 64)) & 1 == 1).collect();
                    m.refine_lines(&tau, &xi).unwrap()
                };
                prop_assert!(m.tau_lines().iter().all(|x| next.tau_lines().contains(x)));
                prop_assert!(m.xi_lines().iter().all(|x| next.xi_lines().contains(x)));
                m = next;
            }
            let area: f64 = m.elements().map(|e| e.area()).sum();
            prop_assert!((area - 2.0).abs() <= 1e-13 * 2.0);
        }
    }
}
