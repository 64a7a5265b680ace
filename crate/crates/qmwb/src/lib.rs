//! A finite-dimensional quantum-model workbench and QKD attack simulator.
//!
//! Models attach state vectors, unitaries, and POVMs to the commands of a
//! classical process-control computer and generate outcome probabilities for
//! every command triple. On top of that sit: envelopment of one model by
//! another (including the leakage construction that shrinks Alice's state
//! overlaps by any factor `r < 1` without touching any observable
//! probability), state discrimination, BB84/B92 protocol models with
//! eavesdropping attacks, and a deterministic trial engine with append-only
//! logs and model-fit reports.

pub mod cli;
pub mod discrimination;
pub mod engine;
pub mod envelopment;
pub mod error;
pub mod linalg;
pub mod model;
pub mod protocols;

pub use error::{QmwbError, Result};
pub use linalg::{CMatrix, CVector, Tolerances, C64};
pub use model::{Command, CommandSet, Povm, QmModel, ValidationReport, Violation};
