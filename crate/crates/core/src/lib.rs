//! Numerical toolkit for factorising commuting quantum operations.
//!
//! Given two completely positive maps that act on a shared finite-dimensional
//! system and commute in their input-output behaviour, this crate decides
//! whether the shared system splits into two tensor factors on which the maps
//! act separately, constructs the certificate (block decomposition of the
//! shared system, doubling map, marginal maps) and verifies it numerically.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`] — dense complex operators over labeled tensor-product layouts;
//! * [`cpmap`] — Kraus/Choi calculus for completely positive maps;
//! * [`entropic`] — von Neumann entropy and conditional mutual information;
//! * [`algebra`] — matrix *-algebra closure, block decomposition and the
//!   quantum Markov structure of zero-CMI states;
//! * [`factorise`] — the factorisation pipeline, its converse construction and
//!   the multi-map extension;
//! * [`tsirelson`] — commuting measurement-operator families in, isometry and
//!   local operator families out;
//! * [`prbox`] — the PR-box counterexample showing that the unitality
//!   condition cannot be dropped.

pub mod algebra;
pub mod cpmap;
pub mod entropic;
pub mod error;
pub mod factorise;
pub mod prbox;
pub mod random;
pub mod tensor;
pub mod tsirelson;

pub use error::{Error, Result};
pub use tensor::{Eigensystem, Operator, SystemLayout, C64};
pub use cpmap::{ChoiOperator, CpMap};
