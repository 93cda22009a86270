// SPDX-License-Identifier: MIT OR Apache-2.0

//! Toy two-layer transformers for knowledge-conflict studies, plus the
//! head-identification and intervention algorithms that steer them.
//!
//! The crate is organized around six pieces:
//!
//! * [`numerics`] — dense `f64` matrices, a seeded deterministic random
//!   stream, masked softmax, and a finite-difference gradient oracle.
//! * [`vocab`] — the partitioned vocabulary `S ∪ A ∪ {q} ∪ N` and seeded
//!   generation of factual-recall, induction, and knowledge-conflict
//!   sequences.
//! * [`model`] — the two-layer attention-only transformer, its closed-form
//!   solver construction, a per-head hook system, and save/load.
//! * [`training`] — the one-layer linear-attention model, exact gradient
//!   formulas, and the two-step gradient-descent reproduction.
//! * [`intervene`] — head scoring, consistency filtering, top-K selection,
//!   single-pass scaling, and dual-run intervention.
//! * [`experiments`] — seeded end-to-end experiment runners with CSV/JSON
//!   outputs.

pub mod error;
pub mod experiments;
pub mod intervene;
pub mod model;
pub mod numerics;
pub mod training;
pub mod vocab;

pub use error::{Error, Result};
pub use model::{
    build_perfect_solver, conflict_winner_closed_form, ConflictWinner, ConstructionConsts,
    EmbeddingMode, Evaluation, ForwardTrace, HeadRef, HookAction, HookKind, HookedModel,
    TwoLayerModel,
};
pub use numerics::{Matrix, RandomStream};
pub use vocab::{Sequence, SequenceKind, TokenId, VocabSpec};
