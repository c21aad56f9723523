//! Configured runs: subtask pipelines over corpus splits, calibration,
//! synthesis, manifests, and evaluation of prediction files.
//!
//! Outputs of a run on split `S` land in `<output_dir>/S/`:
//!
//! | file | contents |
//! |---|---|
//! | `interpret.json` | `[{case_id, text}]` |
//! | `evidence.json` | `[{case_id, evidence_ids}]` |
//! | `answers.json` | `[{case_id, text, sentences}]` |
//! | `alignment.json` | `[{case_id, prediction: [{answer_id, evidence_id}]}]` |
//! | `threshold_curve.csv`, `calibration.json` | threshold sweep and choice |
//! | `synthetic.json`, `audit.jsonl` | accepted synthetic cases, rejects |
//! | `manifest-<task>.json` | [`RunManifest`] |

mod config;
mod evaluate;
mod pipeline;

pub use config::*;
pub use evaluate::{evaluate, evaluate_file, EvalOptions, SariSource};
pub use pipeline::*;
