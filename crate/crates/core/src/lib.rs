//! Lifted exact inference for parameterised probabilistic dynamic models.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] – logvars, PRVs, parfactors, static and dynamic models and the
//!   textual model format.
//! * [`lve`] – the lifted operator kernel (multiplication, summing out, count
//!   conversion, evidence absorption, grounding fallback) and the elimination
//!   driver built on it.
//! * [`fojt`] – first-order junction trees: construction, message passing,
//!   evidence and query answering for static models.
//! * [`guard`] – detection of groundings during message passing, fusion of
//!   parclusters and expansion of inter-tree separators.
//! * [`ldjt`] – temporal structures, α messages and the filtering /
//!   prediction loop.
//! * [`oracle`] – ground variable elimination on the unrolled model, used to
//!   verify the lifted engine.
//! * [`cli`] – command implementations behind the `ldjt` binary.

pub mod cli;
pub mod error;
pub mod fojt;
pub mod guard;
pub mod ldjt;
pub mod lve;
pub mod model;
pub mod oracle;

pub use error::{InferenceError, ModelError, ParseError};
