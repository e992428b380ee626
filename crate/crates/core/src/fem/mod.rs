//! Polynomial bases, quadrature, element spaces and trace numbering.

pub mod basis;
pub mod dofs;
pub mod quadrature;
pub mod spaces;

pub use basis::Family;
pub use dofs::{EdgePiece, TraceDof, TraceLayout};
pub use quadrature::GaussRule;
pub use spaces::{Loc, PointEval, ReferenceElement, SpaceConfig, TestKind};
