//! Run configuration: a TOML file, then environment variables, then
//! command-line overrides, each layer replacing the previous one.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::evaluate::EvalOptions;
use crate::align::AlignStrategy;
use crate::answer::AnswerMode;
use crate::backends::{Decoding, OpenAiConfig, RetryPolicy};
use crate::corpus::{parse_corpus, Case, CorpusFormat};
use crate::error::{Error, Result};
use crate::evidence::{ScorerKind, DEFAULT_GRID_POINTS};
use crate::fixtures;
use crate::interpret::InterpretKind;
use crate::synthgen::SynthConfig;

pub const OUTPUT_DIR_ENV: &str = "EHRQA_OUTPUT_DIR";
pub const CACHE_DIR_ENV: &str = "EHRQA_CACHE_DIR";
pub const FANOUT_ENV: &str = "EHRQA_FANOUT";

/// Corpus locations that resolve to bundled fixtures instead of files.
pub const BUILTIN_SAMPLE: &str = "builtin:sample";
pub const BUILTIN_DEV_SHAPED: &str = "builtin:dev-shaped";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackendConfig {
    /// In-process deterministic backend. `scripted` answers the shipped
    /// prompt families; `fallback` answers everything else.
    Mock {
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default = "yes")]
        scripted: bool,
        #[serde(default)]
        fallback: Option<String>,
    },
    /// OpenAI-compatible HTTP server.
    Openai(OpenAiConfig),
    /// Cross-encoder scoring service (`POST /score`).
    ScoreService {
        base_url: String,
        #[serde(default)]
        retry: RetryPolicy,
    },
}

fn yes() -> bool {
    true
}

/// Which question text a subtask works from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionChoice {
    /// Output of the interpretation subtask for the same split.
    Interpreted,
    /// The case's own clinician question.
    #[default]
    Clinician,
    Patient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpretSettings {
    pub strategy: InterpretKind,
    pub shots: usize,
    pub backend: String,
    /// Second backend for the two-step strategy.
    pub reviser: Option<String>,
    /// Replaces the shipped few-shot template.
    pub template: Option<PathBuf>,
}

impl Default for InterpretSettings {
    fn default() -> Self {
        InterpretSettings {
            strategy: InterpretKind::FewShot,
            shots: 3,
            backend: "default".into(),
            reviser: None,
            template: None,
        }
    }
}

/// A fixed threshold, or `"calibrate"` to pick one on the development split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThresholdSetting {
    Fixed(f64),
    Mode(CalibrateMode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrateMode {
    Calibrate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvidenceSettings {
    pub scorer: ScorerKind,
    pub backend: String,
    pub threshold: ThresholdSetting,
    /// Explicit grid; when absent, `grid_points` thresholds span the pooled
    /// score range.
    pub grid: Option<Vec<f64>>,
    pub grid_points: usize,
    pub question: QuestionChoice,
}

impl Default for EvidenceSettings {
    fn default() -> Self {
        EvidenceSettings {
            scorer: ScorerKind::EmbeddingCosine,
            backend: "default".into(),
            threshold: ThresholdSetting::Mode(CalibrateMode::Calibrate),
            grid: None,
            grid_points: DEFAULT_GRID_POINTS,
            question: QuestionChoice::Clinician,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnswerSettings {
    pub mode: AnswerMode,
    pub backend: String,
    pub question: QuestionChoice,
}

impl Default for AnswerSettings {
    fn default() -> Self {
        AnswerSettings {
            mode: AnswerMode::ZeroShotFull,
            backend: "default".into(),
            question: QuestionChoice::Clinician,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerSource {
    /// `answers.json` from the answer-generation subtask.
    #[default]
    Generated,
    /// The cases' reference answers.
    Gold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignSettings {
    pub strategy: AlignStrategy,
    pub backend: String,
    pub answers: AnswerSource,
    pub question: QuestionChoice,
}

impl Default for AlignSettings {
    fn default() -> Self {
        AlignSettings {
            strategy: AlignStrategy::ListwiseOneShot,
            backend: "default".into(),
            answers: AnswerSource::Generated,
            question: QuestionChoice::Clinician,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSettings {
    pub backend: String,
    #[serde(flatten)]
    pub config: SynthConfig,
}

impl Default for SynthSettings {
    fn default() -> Self {
        SynthSettings {
            backend: "default".into(),
            config: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Split name to corpus file (or a `builtin:` fixture).
    pub splits: BTreeMap<String, String>,
    /// Labeled split used for shots, the one-shot exemplar, and calibration.
    pub dev_split: String,
    pub backends: BTreeMap<String, BackendConfig>,
    pub decoding: Decoding,
    pub interpret: InterpretSettings,
    pub evidence: EvidenceSettings,
    pub answer: AnswerSettings,
    pub align: AlignSettings,
    pub synth: SynthSettings,
    pub evaluate: EvalOptions,
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/cache`.
    pub cache_dir: Option<PathBuf>,
    pub fanout: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            splits: [("dev".to_string(), BUILTIN_SAMPLE.to_string())].into(),
            dev_split: "dev".into(),
            backends: [(
                "default".to_string(),
                BackendConfig::Mock {
                    seed: None,
                    scripted: true,
                    fallback: None,
                },
            )]
            .into(),
            decoding: Decoding::default(),
            interpret: InterpretSettings::default(),
            evidence: EvidenceSettings::default(),
            answer: AnswerSettings::default(),
            align: AlignSettings::default(),
            synth: SynthSettings::default(),
            evaluate: EvalOptions::default(),
            output_dir: PathBuf::from("runs/default"),
            cache_dir: None,
            fanout: 1,
            seed: 0,
        }
    }
}

/// Command-line overrides, applied after the file and the environment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub fanout: Option<usize>,
    pub seed: Option<u64>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file. Relative paths inside it are resolved against
    /// the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = toml::from_str::<RunConfig>(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for location in config.splits.values_mut() {
            if !location.starts_with("builtin:") {
                *location = resolve(base, Path::new(location.as_str()))
                    .display()
                    .to_string();
            }
        }
        config.output_dir = resolve(base, &config.output_dir);
        config.cache_dir = config.cache_dir.as_deref().map(|p| resolve(base, p));
        config.interpret.template = config
            .interpret
            .template
            .as_deref()
            .map(|p| resolve(base, p));
        Ok(config)
    }

    /// Applies environment then command-line overrides, then validates.
    pub fn layered(mut self, overrides: &Overrides) -> Result<Self> {
        if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
            self.output_dir = dir.into();
        }
        if let Ok(dir) = std::env::var(CACHE_DIR_ENV) {
            self.cache_dir = Some(dir.into());
        }
        if let Ok(n) = std::env::var(FANOUT_ENV) {
            self.fanout = n.parse().map_err(|_| {
                Error::Config(format!("{FANOUT_ENV}={n} is not a positive integer"))
            })?;
        }
        if let Some(dir) = &overrides.output_dir {
            self.output_dir = dir.clone();
        }
        if let Some(dir) = &overrides.cache_dir {
            self.cache_dir = Some(dir.clone());
        }
        if let Some(n) = overrides.fanout {
            self.fanout = n;
        }
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fanout == 0 {
            return Err(Error::Config("fanout must be at least 1".into()));
        }
        for (name, location) in &self.splits {
            if location.starts_with("builtin:") {
                if ![BUILTIN_SAMPLE, BUILTIN_DEV_SHAPED].contains(&location.as_str()) {
                    return Err(Error::Config(format!(
                        "split {name}: unknown fixture {location}"
                    )));
                }
            } else if !Path::new(location).is_file() {
                return Err(Error::Config(format!(
                    "split {name}: corpus file {location} does not exist"
                )));
            }
        }
        if let Some(t) = &self.interpret.template {
            if !t.is_file() {
                return Err(Error::Config(format!(
                    "interpret template {} does not exist",
                    t.display()
                )));
            }
        }
        let mut used = vec![
            ("interpret", &self.interpret.backend),
            ("evidence", &self.evidence.backend),
            ("answer", &self.answer.backend),
            ("align", &self.align.backend),
            ("synth", &self.synth.backend),
        ];
        if let Some(r) = &self.interpret.reviser {
            used.push(("interpret.reviser", r));
        }
        for (section, name) in used {
            if !self.backends.contains_key(name) {
                return Err(Error::Config(format!(
                    "[{section}] names unknown backend `{name}`"
                )));
            }
        }
        if self.interpret.strategy == InterpretKind::TwoStep && self.interpret.reviser.is_none() {
            return Err(Error::Config(
                "two-step interpretation needs `interpret.reviser`".into(),
            ));
        }
        if !matches!(self.interpret.shots, 3 | 5) {
            return Err(Error::Config(format!(
                "interpret.shots must be 3 or 5, got {}",
                self.interpret.shots
            )));
        }
        if let ThresholdSetting::Fixed(t) = self.evidence.threshold {
            if !t.is_finite() {
                return Err(Error::Config("evidence.threshold must be finite".into()));
            }
        }
        self.align.strategy.validate()?;
        self.synth.config.gate.check()?;
        Ok(())
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("cache"))
    }

    pub fn split_dir(&self, split: &str) -> PathBuf {
        self.output_dir.join(split)
    }

    pub fn load_split(&self, split: &str) -> Result<Vec<Case>> {
        let location = self
            .splits
            .get(split)
            .ok_or_else(|| Error::Config(format!("no split named `{split}` in [splits]")))?;
        load_corpus(location)
    }
}

/// Reads a corpus file or a `builtin:` fixture.
pub fn load_corpus(location: &str) -> Result<Vec<Case>> {
    match location {
        BUILTIN_SAMPLE => Ok(fixtures::sample_cases()),
        BUILTIN_DEV_SHAPED => Ok(fixtures::dev_shaped()),
        path => parse_corpus(Path::new(path), CorpusFormat::Json),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_example() {
        let text = r#"
            output_dir = "out"
            fanout = 2
            [splits]
            dev = "builtin:dev-shaped"
            [backends.default]
            kind = "mock"
            [backends.local]
            kind = "openai"
            chat_model = "qwen3:4b"
            [backends.encoder]
            kind = "score-service"
            base_url = "http://127.0.0.1:8000"
            [evidence]
            scorer = "pair-encoder"
            backend = "encoder"
            threshold = 0.35
            [align]
            strategy = { kind = "threshold", t = 0.6 }
            answers = "gold"
            [synth]
            variations_per_seed = 4
            [synth.gate]
            max_sentences = 25
        "#;
        let c = RunConfig::from_toml_str(text)
            .unwrap()
            .layered(&Overrides::default())
            .unwrap();
        assert_eq!(c.fanout, 2);
        assert_eq!(c.evidence.threshold, ThresholdSetting::Fixed(0.35));
        assert_eq!(c.align.strategy, AlignStrategy::Threshold { t: 0.6 });
        assert_eq!(c.synth.config.variations_per_seed, 4);
        assert_eq!(c.synth.config.gate.max_sentences, 25);
        assert_eq!(c.synth.config.gate.min_sentences, 10);
        assert!(
            matches!(c.backends["local"], BackendConfig::Openai(ref o) if o.chat_model.as_deref() == Some("qwen3:4b"))
        );
    }

    #[test]
    fn calibrate_keyword_and_defaults() {
        let c = RunConfig::from_toml_str("[evidence]\nthreshold = \"calibrate\"\n").unwrap();
        assert_eq!(
            c.evidence.threshold,
            ThresholdSetting::Mode(CalibrateMode::Calibrate)
        );
        assert!(RunConfig::from_toml_str("[evidence]\nthreshold = \"sometimes\"\n").is_err());
        assert!(RunConfig::from_toml_str("bogus = 1\n").is_err());
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn validation_catches_bad_references() {
        let mut c = RunConfig::default();
        c.answer.backend = "missing".into();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = RunConfig::default();
        c.splits
            .insert("test".into(), "/nonexistent/test.json".into());
        assert!(c.validate().is_err());
        let c = RunConfig::default().layered(&Overrides {
            fanout: Some(0),
            ..Default::default()
        });
        assert!(c.is_err());
    }
}
