//! Prompt templates shipped as versioned text assets, and small rendering
//! helpers shared by the subtask engines.
//!
//! Templates use two kinds of slots: `{name}` placeholders, replaced by
//! [`PromptTemplate::render`], and a trailing `<N Examples>` line, replaced
//! by [`PromptTemplate::with_examples`].

use std::path::Path;

use regex::Regex;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: String,
    pub version: u32,
    pub text: String,
}

macro_rules! asset {
    ($name:ident, $id:literal, $file:literal) => {
        pub fn $name() -> PromptTemplate {
            PromptTemplate {
                id: $id.to_string(),
                version: 1,
                text: include_str!(concat!("../assets/prompts/", $file)).to_string(),
            }
        }
    };
}

asset!(
    question_interpretation,
    "question_interpretation",
    "question_interpretation.txt"
);
asset!(
    interpret_revision,
    "interpret_revision",
    "interpret_revision.txt"
);
asset!(
    answer_generation,
    "answer_generation",
    "answer_generation.txt"
);
asset!(answer_revision, "answer_revision", "answer_revision.txt");
asset!(
    evidence_alignment,
    "evidence_alignment",
    "evidence_alignment.txt"
);
asset!(
    pairwise_alignment,
    "pairwise_alignment",
    "pairwise_alignment.txt"
);
asset!(
    alignment_reformat,
    "alignment_reformat",
    "alignment_reformat.txt"
);
asset!(synthetic_case, "synthetic_case", "synthetic_case.txt");
asset!(synthetic_repair, "synthetic_repair", "synthetic_repair.txt");

fn example_slot() -> Regex {
    Regex::new(r"<\d+ Examples?>").expect("valid regex")
}

impl PromptTemplate {
    /// Loads a user-supplied template; the id is the file stem.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(PromptTemplate {
            id: path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "custom".into()),
            version: 1,
            text,
        })
    }

    /// Replaces each `{key}` with its value. Unknown braces are left alone.
    pub fn render(&self, vars: &[(&str, &str)]) -> String {
        let mut out = self.text.clone();
        for (key, value) in vars {
            out = out.replace(&format!("{{{key}}}"), value);
        }
        out
    }

    pub fn has_example_slot(&self) -> bool {
        example_slot().is_match(&self.text)
    }

    /// Fills the `<N Examples>` slot. Templates without one get the
    /// examples appended.
    pub fn with_examples(&self, examples: &str) -> String {
        let re = example_slot();
        if re.is_match(&self.text) {
            re.replace(&self.text, regex::NoExpand(examples.trim_end()))
                .into_owned()
        } else {
            format!("{}\n\n{}", self.text.trim_end(), examples.trim_end())
        }
    }
}

/// Renders `id: text` lines, one per item.
pub fn numbered<'a>(items: impl IntoIterator<Item = (&'a str, &'a str)>) -> String {
    items
        .into_iter()
        .map(|(id, text)| format!("{id}: {}\n", text.trim()))
        .collect()
}
