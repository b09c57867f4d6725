//! Desk-scale models of singular Riemannian foliations on Euclidean vector bundles.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod base;
pub mod bundle;
pub mod charts;
pub mod cloud;
pub mod expr;
pub mod foliation;
pub mod groupoid;
pub mod lie;
pub mod rng;
pub mod scenario;

pub use base::{BaseKind, BasePath, BaseSpace, HomotopyKey};
pub use bundle::{ConnectionField, FrameElement, Scope};
pub use cloud::TotalPoint;
pub use foliation::{
    Budget, FiberFoliation, GroupClosureSpec, Invariant, LeafKind, LeafSample, SampleSpec, VectorField,
};
pub use groupoid::{Groupoid, PathClassArrow, PathClassGroupoid};
pub use lie::{LieSubalgebra, OrthogonalElement, SkewElement, SquareMatrix};
pub use scenario::{CheckRecord, RunReport, Scenario, ScenarioConfig, Status, Suite};
