//! Numerical laboratory for the horocycle flow on a compact quotient
//! `Γ \ SL(2,R)`: exact Lie-algebra identities, a concrete genus-2 lattice,
//! smooth test observables, sheared arcs and their shadows, and the
//! equidistribution and mixing experiments built on them.

// Negated comparisons are used to reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arcs;
pub mod dd;
pub mod error;
pub mod experiments;
pub mod lattice;
pub mod lie;
pub mod observables;
pub mod rng;
pub mod summation;

pub use arcs::{ArcSpec, Curve, CurveKind, CurveNode, ShadowFrame};
pub use dd::Precision;
pub use error::{Error, Result};
pub use experiments::{
    DecayEntry, DecayModel, DecaySeries, FitResult, MixingEntry, PushforwardResult,
    QuadratureOptions, ShadowEntry, ShearingReport,
};
pub use lattice::{
    BoundingBox, FuchsianGroupModel, GroupDefinition, HalfPlanePoint, QuotientPoint,
};
pub use lie::{AlgebraVector, GroupElement, Mat2, SpectralProfile};
pub use observables::{BumpProfile, BumpSpec, Observable, ObservableSpec};
