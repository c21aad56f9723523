//! Local-first, evidence-grounded question answering over clinical note
//! excerpts.
//!
//! The four subtasks each have an engine module:
//!
//! * [`interpret`]: patient question to a short clinician-style question.
//! * [`evidence`]: score note sentences, calibrate a threshold, select evidence.
//! * [`answer`]: grounded answer of at most 75 words, split into sentences.
//! * [`align`]: link answer sentences to supporting note sentences.
//!
//! Supporting modules cover the corpus format ([`corpus`]), chat, embedding
//! and scoring backends with a disk cache ([`backends`]), synthetic training
//! cases with a quality gate ([`synthgen`]), evaluation ([`metrics`]), and
//! configured end-to-end runs ([`run`]).

pub mod align;
pub mod answer;
pub mod backends;
pub mod corpus;
pub mod error;
pub mod evidence;
pub mod exec;
pub mod extract;
pub mod fixtures;
pub mod interpret;
pub mod io;
pub mod metrics;
pub mod prompts;
pub mod run;
pub mod synthgen;
pub mod text;

pub use error::{Error, Result};
