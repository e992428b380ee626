//! Residual-driven adaptive refinement by whole mesh strips.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{DpgError, Result};
use crate::fem::SpaceConfig;
use crate::manufactured::{CaseData, NormKind};
use crate::mesh::TensorMesh;
use crate::solve::{build_global, SolverOptions};

/// Which strip directions a marked element refines.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefinePolicy {
    /// Bisect the τ-interval of marked elements.
    #[default]
    TauOnly,
    XiOnly,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptConfig {
    pub theta: f64,
    pub max_steps: usize,
    pub dof_budget: usize,
    #[serde(default)]
    pub policy: RefinePolicy,
}

impl AdaptConfig {
    pub fn new(theta: f64, max_steps: usize, dof_budget: usize, policy: RefinePolicy) -> Result<Self> {
        let c = Self { theta, max_steps, dof_budget, policy };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(DpgError::InvalidParameter(format!("theta must lie in (0, 1], got {}", self.theta)));
        }
        if self.dof_budget == 0 {
            return Err(DpgError::InvalidParameter("dof budget must be positive".into()));
        }
        Ok(())
    }
}

/// Smallest greedy set of elements carrying a `θ²` share of `Σ η²`.
///
/// Elements are taken by descending `η`, ties by ascending index. `θ ≥ 1`
/// marks every element; all-zero indicators mark nothing.
pub fn dorfler_set(etas: &[f64], theta: f64) -> Result<Vec<usize>> {
    if let Some(bad) = etas.iter().find(|e| !(**e >= 0.0)) {
        return Err(DpgError::InvalidInput(format!("indicator {bad} is not non-negative")));
    }
    let total: f64 = etas.iter().map(|e| e * e).sum();
    if total == 0.0 {
        return Ok(Vec::new());
    }
    if theta >= 1.0 {
        return Ok((0..etas.len()).collect());
    }
    let mut order: Vec<usize> = (0..etas.len()).collect();
    order.sort_by(|&a, &b| etas[b].total_cmp(&etas[a]).then(a.cmp(&b)));
    let target = theta * theta * total;
    let mut sum = 0.0;
    let mut out = Vec::new();
    for k in order {
        out.push(k);
        sum += etas[k] * etas[k];
        if sum >= target {
            break;
        }
    }
    Ok(out)
}

/// Marked `(τ strips, ξ strips)` for the Dörfler set of `etas`.
pub fn mark(
    etas: &[f64],
    mesh: &TensorMesh,
    theta: f64,
    policy: RefinePolicy,
) -> Result<(BTreeSet<usize>, BTreeSet<usize>)> {
    if etas.len() != mesh.num_elements() {
        return Err(DpgError::InvalidInput(format!(
            "{} indicators for {} elements",
            etas.len(),
            mesh.num_elements()
        )));
    }
    let mut tau = BTreeSet::new();
    let mut xi = BTreeSet::new();
    for k in dorfler_set(etas, theta)? {
        let e = mesh.element(k);
        if policy != RefinePolicy::XiOnly {
            tau.insert(e.i);
        }
        if policy != RefinePolicy::TauOnly {
            xi.insert(e.j);
        }
    }
    Ok((tau, xi))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptStep {
    pub num_elements: usize,
    /// Fields plus all trace unknowns, prescribed ones included.
    pub dofs: usize,
    pub rel_l2_error: f64,
    pub total_residual: f64,
}

impl AdaptStep {
    pub fn sqrt_ndof(&self) -> f64 {
        (self.dofs as f64).sqrt()
    }
}

#[derive(Debug)]
pub struct AdaptOutcome {
    pub history: Vec<AdaptStep>,
    pub final_mesh: TensorMesh,
    /// Set when a solve failed; `history` holds the steps before it.
    pub failure: Option<DpgError>,
}

/// Solve, estimate, mark and refine until `max_steps` solves were done or
/// the dof budget is reached.
pub fn adapt_loop(
    case: &CaseData,
    initial: &TensorMesh,
    cfg: SpaceConfig,
    options: SolverOptions,
    config: &AdaptConfig,
    norm: NormKind,
) -> Result<AdaptOutcome> {
    config.validate()?;
    let mut mesh = initial.clone();
    let mut history = Vec::new();
    for step in 0..config.max_steps {
        let solved = build_global(&mesh, case, cfg, options).and_then(|sys| {
            let sol = sys.solve()?;
            Ok((sys, sol))
        });
        let (sys, sol) = match solved {
            Ok(v) => v,
            Err(e) if e.is_validation() => return Err(e),
            Err(e) => return Ok(AdaptOutcome { history, final_mesh: mesh, failure: Some(e) }),
        };
        history.push(AdaptStep {
            num_elements: mesh.num_elements(),
            dofs: sys.num_dofs(),
            rel_l2_error: sys.errors(&sol, norm).rel_l2,
            total_residual: sol.total_residual,
        });
        if step + 1 == config.max_steps || sys.num_dofs() >= config.dof_budget {
            break;
        }
        let (tau, xi) = mark(&sol.eta, &mesh, config.theta, config.policy)?;
        if tau.is_empty() && xi.is_empty() {
            break;
        }
        mesh = mesh.refine_lines(&tau, &xi)?;
    }
    Ok(AdaptOutcome { history, final_mesh: mesh, failure: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_one_marks_everything() {
        let mesh = TensorMesh::unit_square(3).unwrap();
        let etas = vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0];
        let (t, x) = mark(&etas, &mesh, 1.0, RefinePolicy::Both).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(x.len(), 3);
    }

    #[test]
    fn single_indicator_marks_its_strips() {
        let mesh = TensorMesh::unit_square(3).unwrap();
        let mut etas = vec![0.0; 9];
        etas[mesh.element_index(2, 1)] = 0.5;
        let (t, x) = mark(&etas, &mesh, 0.5, RefinePolicy::Both).unwrap();
        assert_eq!(t.into_iter().collect::<Vec<_>>(), vec![2]);
        assert_eq!(x.into_iter().collect::<Vec<_>>(), vec![1]);
        let (t, x) = mark(&etas, &mesh, 0.5, RefinePolicy::TauOnly).unwrap();
        assert_eq!((t.len(), x.len()), (1, 0));
    }

    #[test]
    fn zero_indicators_mark_nothing() {
        assert!(dorfler_set(&[0.0; 4], 0.5).unwrap().is_empty());
        assert!(dorfler_set(&[-1.0], 0.5).is_err());
    }

    #[test]
    fn ties_break_by_index() {
        assert_eq!(dorfler_set(&[1.0, 1.0, 1.0, 1.0], 0.5).unwrap(), vec![0]);
        assert_eq!(dorfler_set(&[1.0, 1.0, 1.0, 1.0], 0.75).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn config_validation() {
        assert!(AdaptConfig::new(0.0, 3, 10, RefinePolicy::Both).is_err());
        assert!(AdaptConfig::new(1.5, 3, 10, RefinePolicy::Both).is_err());
        assert!(AdaptConfig::new(0.5, 3, 0, RefinePolicy::Both).is_err());
        assert!(AdaptConfig::new(1.0, 3, 10, RefinePolicy::Both).is_ok());
    }
}
