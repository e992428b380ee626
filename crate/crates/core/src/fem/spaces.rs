//! Element trial and test spaces on the reference square `[−1, 1]²`.
//!
//! Reference coordinate `x` maps to τ and `y` to ξ. Field variables are
//! discontinuous `Q_p` (Legendre in both directions). Test spaces use the
//! enriched order `k = p + Δp`: `Q_k` Lobatto for scalar test functions, and
//! `Q_{k+1,k} × Q_{k,k+1}` (Lobatto along the derivative direction, Legendre
//! across it) for the two components of a flux test function.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::basis::Family;
use super::quadrature::GaussRule;
use crate::error::{DpgError, Result};
use crate::model::Regime;

pub const DEFAULT_DELTA_P: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceConfig {
    /// Polynomial order of the field variables.
    pub p: usize,
    /// Test-space enrichment.
    pub delta_p: usize,
}

impl SpaceConfig {
    pub fn new(p: usize, delta_p: usize) -> Result<Self> {
        if p == 0 {
            return Err(DpgError::InvalidParameter("trial order p must be at least 1".into()));
        }
        if delta_p == 0 {
            return Err(DpgError::InvalidParameter("test enrichment must be at least 1".into()));
        }
        Ok(Self { p, delta_p })
    }

    pub fn with_default_enrichment(p: usize) -> Result<Self> {
        Self::new(p, DEFAULT_DELTA_P)
    }

    pub fn test_order(&self) -> usize {
        self.p + self.delta_p
    }

    /// Gauss points per direction for element and edge integrals.
    pub fn quad_points(&self) -> usize {
        self.p + self.delta_p + 3
    }

    /// Family and degree of trace component `comp` (0 or 1).
    pub fn trace_family(&self, regime: Regime, comp: usize) -> (Family, usize) {
        match (regime, comp) {
            (Regime::Elliptic, 0) => (Family::Lobatto, self.p + 1),
            _ => (Family::Legendre, self.p),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TensorSpace {
    pub x: Family,
    pub x_degree: usize,
    pub y: Family,
    pub y_degree: usize,
}

impl TensorSpace {
    pub fn q(family: Family, degree: usize) -> Self {
        Self { x: family, x_degree: degree, y: family, y_degree: degree }
    }

    pub fn dim(&self) -> usize {
        (self.x_degree + 1) * (self.y_degree + 1)
    }

    /// `(a, b)` mode pair of local index `k`, with `a` (the x mode) fastest.
    pub fn modes(&self, k: usize) -> (usize, usize) {
        (k % (self.x_degree + 1), k / (self.x_degree + 1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TestKind {
    Scalar,
    /// τ component of a flux test function, Piola scaled by `2/h_ξ`.
    FluxTau,
    /// ξ component of a flux test function, Piola scaled by `2/h_τ`.
    FluxXi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TestComponent {
    pub kind: TestKind,
    pub space: TensorSpace,
}

/// Trial field components: `(u, v)` or `(u, σ_τ, σ_ξ)`.
pub fn trial_field_spaces(regime: Regime, cfg: &SpaceConfig) -> Vec<TensorSpace> {
    let q = TensorSpace::q(Family::Legendre, cfg.p);
    match regime {
        Regime::Hyperbolic => vec![q; 2],
        Regime::Elliptic => vec![q; 3],
    }
}

/// Test components: `(δu, δv)` or `(v, τ_τ, τ_ξ)`.
pub fn test_components(regime: Regime, cfg: &SpaceConfig) -> Vec<TestComponent> {
    let k = cfg.test_order();
    let scalar = TestComponent { kind: TestKind::Scalar, space: TensorSpace::q(Family::Lobatto, k) };
    match regime {
        Regime::Hyperbolic => vec![scalar; 2],
        Regime::Elliptic => vec![
            scalar,
            TestComponent {
                kind: TestKind::FluxTau,
                space: TensorSpace { x: Family::Lobatto, x_degree: k + 1, y: Family::Legendre, y_degree: k },
            },
            TestComponent {
                kind: TestKind::FluxXi,
                space: TensorSpace { x: Family::Legendre, x_degree: k, y: Family::Lobatto, y_degree: k + 1 },
            },
        ],
    }
}

/// Where a 1D family is evaluated: at a quadrature point or an endpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Loc {
    Point(usize),
    Minus,
    Plus,
}

#[derive(Clone, Debug)]
struct Table1D {
    points: Vec<(Vec<f64>, Vec<f64>)>,
    minus: (Vec<f64>, Vec<f64>),
    plus: (Vec<f64>, Vec<f64>),
}

impl Table1D {
    fn new(family: Family, degree: usize, rule: &GaussRule) -> Self {
        Self {
            points: rule.points.iter().map(|&x| family.eval(degree, x)).collect(),
            minus: family.eval(degree, -1.0),
            plus: family.eval(degree, 1.0),
        }
    }

    fn at(&self, loc: Loc) -> &(Vec<f64>, Vec<f64>) {
        match loc {
            Loc::Point(q) => &self.points[q],
            Loc::Minus => &self.minus,
            Loc::Plus => &self.plus,
        }
    }
}

/// Physical value and gradient of a real basis function.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PointEval {
    pub value: f64,
    pub d_tau: f64,
    pub d_xi: f64,
}

/// Tabulated bases of one regime and order on the reference square.
#[derive(Clone, Debug)]
pub struct ReferenceElement {
    pub regime: Regime,
    pub cfg: SpaceConfig,
    pub rule: GaussRule,
    pub trial: Vec<TensorSpace>,
    pub test: Vec<TestComponent>,
    /// `(component, local index)` of each test function, components concatenated.
    pub test_index: Vec<(usize, usize)>,
    pub trial_index: Vec<(usize, usize)>,
    tables: HashMap<(Family, usize), Table1D>,
}

impl ReferenceElement {
    pub fn new(regime: Regime, cfg: SpaceConfig) -> Self {
        let rule = GaussRule::new(cfg.quad_points());
        let trial = trial_field_spaces(regime, &cfg);
        let test = test_components(regime, &cfg);
        let mut tables = HashMap::new();
        let mut add = |f: Family, d: usize| {
            tables.entry((f, d)).or_insert_with(|| Table1D::new(f, d, &rule));
        };
        for s in trial.iter().chain(test.iter().map(|c| &c.space)) {
            add(s.x, s.x_degree);
            add(s.y, s.y_degree);
        }
        for comp in 0..2 {
            let (f, d) = cfg.trace_family(regime, comp);
            add(f, d);
        }
        let flatten = |dims: Vec<usize>| -> Vec<(usize, usize)> {
            dims.iter().enumerate().flat_map(|(c, &n)| (0..n).map(move |k| (c, k))).collect()
        };
        let test_index = flatten(test.iter().map(|c| c.space.dim()).collect());
        let trial_index = flatten(trial.iter().map(|s| s.dim()).collect());
        Self { regime, cfg, rule, trial, test, test_index, trial_index, tables }
    }

    pub fn num_test(&self) -> usize {
        self.test_index.len()
    }

    pub fn num_fields(&self) -> usize {
        self.trial_index.len()
    }

    pub fn num_points(&self) -> usize {
        self.rule.len()
    }

    fn table(&self, family: Family, degree: usize) -> &Table1D {
        &self.tables[&(family, degree)]
    }

    /// Test function `i` on an element of size `h_tau × h_xi`.
    pub fn eval_test(&self, i: usize, lx: Loc, ly: Loc, h_tau: f64, h_xi: f64) -> PointEval {
        let (c, k) = self.test_index[i];
        let comp = &self.test[c];
        let (a, b) = comp.space.modes(k);
        let (xv, xd) = self.table(comp.space.x, comp.space.x_degree).at(lx);
        let (yv, yd) = self.table(comp.space.y, comp.space.y_degree).at(ly);
        let scale = match comp.kind {
            TestKind::Scalar => 1.0,
            TestKind::FluxTau => 2.0 / h_xi,
            TestKind::FluxXi => 2.0 / h_tau,
        };
        PointEval {
            value: scale * xv[a] * yv[b],
            d_tau: scale * 2.0 / h_tau * xd[a] * yv[b],
            d_xi: scale * 2.0 / h_xi * xv[a] * yd[b],
        }
    }

    /// Value of field basis function `j` at a tabulated location.
    pub fn eval_field(&self, j: usize, lx: Loc, ly: Loc) -> f64 {
        let (c, k) = self.trial_index[j];
        let s = &self.trial[c];
        let (a, b) = s.modes(k);
        self.table(s.x, s.x_degree).at(lx).0[a] * self.table(s.y, s.y_degree).at(ly).0[b]
    }

    /// Values of trace component `comp` along an edge at quadrature point `q`.
    pub fn trace_values(&self, comp: usize, q: usize) -> &[f64] {
        let (f, d) = self.cfg.trace_family(self.regime, comp);
        &self.table(f, d).at(Loc::Point(q)).0
    }

    /// Reference locations of edge quadrature point `q` on a local edge.
    pub fn edge_loc(edge: crate::mesh::LocalEdge, q: usize) -> (Loc, Loc) {
        use crate::mesh::LocalEdge::*;
        match edge {
            Bottom => (Loc::Point(q), Loc::Minus),
            Top => (Loc::Point(q), Loc::Plus),
            Left => (Loc::Minus, Loc::Point(q)),
            Right => (Loc::Plus, Loc::Point(q)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn space_dimensions() {
        let cfg = SpaceConfig::with_default_enrichment(1).unwrap();
        let h = ReferenceElement::new(Regime::Hyperbolic, cfg);
        assert_eq!(h.num_fields(), 8);
        assert_eq!(h.num_test(), 2 * 16);
        let e = ReferenceElement::new(Regime::Elliptic, cfg);
        assert_eq!(e.num_fields(), 12);
        assert_eq!(e.num_test(), 16 + 2 * 5 * 4);
        assert_eq!(cfg.quad_points(), 6);
    }

    #[test]
    fn rejects_degenerate_orders() {
        assert!(SpaceConfig::new(0, 2).is_err());
        assert!(SpaceConfig::new(2, 0).is_err());
    }

    #[test]
    fn piola_scaling_and_gradients() {
        let cfg = SpaceConfig::with_default_enrichment(1).unwrap();
        let e = ReferenceElement::new(Regime::Elliptic, cfg);
        // The first flux-τ function is (1 − x)/2 · P̂_0(y).
        let i = 16;
        assert_eq!(e.test_index[i], (1, 0));
        let p = e.eval_test(i, Loc::Minus, Loc::Minus, 0.5, 0.25);
        let p0 = (0.5f64).sqrt();
        assert_abs_diff_eq!(p.value, 8.0 * p0, epsilon = 1e-14);
        assert_abs_diff_eq!(p.d_tau, 8.0 * 4.0 * (-0.5) * p0, epsilon = 1e-13);
        assert_abs_diff_eq!(p.d_xi, 0.0, epsilon = 1e-14);
    }
}
