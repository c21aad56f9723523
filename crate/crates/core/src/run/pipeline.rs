use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::{AnswerSource, BackendConfig, QuestionChoice, RunConfig, ThresholdSetting};
use crate::align::{to_submission, Aligner};
use crate::answer::{AnswerGenerator, GeneratedAnswer};
use crate::backends::{
    Backend, CacheStats, CachedBackend, DiskCache, MockBackend, OpenAiBackend, ScoreServiceBackend,
};
use crate::corpus::{serialize_corpus, AnswerSentence, Case};
use crate::error::{Error, Result};
use crate::evidence::{
    calibrate_from_scores, linear_grid, score_cases, select_evidence, EvidenceSet, LabeledScores,
    QuestionSource, Scorer, ThresholdCurve,
};
use crate::exec::map_bounded;
use crate::interpret::{InterpretKind, InterpretStrategy, Interpreter};
use crate::io::{file_digest, read_json, sha256_hex, write_atomic, write_json};
use crate::metrics::MicroScores;
use crate::prompts::{self, PromptTemplate};
use crate::synthgen::{generate_synthetic, summarize, SynthBatch, SynthSummary};

pub const INTERPRET_FILE: &str = "interpret.json";
pub const EVIDENCE_FILE: &str = "evidence.json";
pub const ANSWERS_FILE: &str = "answers.json";
pub const ALIGNMENT_FILE: &str = "alignment.json";
pub const CURVE_FILE: &str = "threshold_curve.csv";
pub const CALIBRATION_FILE: &str = "calibration.json";
pub const SYNTHETIC_FILE: &str = "synthetic.json";
pub const AUDIT_FILE: &str = "audit.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subtask {
    Interpret = 1,
    Evidence = 2,
    Answer = 3,
    Align = 4,
}

impl Subtask {
    pub const ALL: [Subtask; 4] = [
        Subtask::Interpret,
        Subtask::Evidence,
        Subtask::Answer,
        Subtask::Align,
    ];

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Subtask::Interpret),
            2 => Ok(Subtask::Evidence),
            3 => Ok(Subtask::Answer),
            4 => Ok(Subtask::Align),
            _ => Err(Error::Config(format!("subtask must be 1-4, got {n}"))),
        }
    }

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn output_file(self) -> &'static str {
        match self {
            Subtask::Interpret => INTERPRET_FILE,
            Subtask::Evidence => EVIDENCE_FILE,
            Subtask::Answer => ANSWERS_FILE,
            Subtask::Align => ALIGNMENT_FILE,
        }
    }
}

/// One line of `interpret.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub case_id: String,
    pub text: String,
}

/// One line of `answers.json`. `sentences` is optional on read; when absent
/// the text is segmented.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub case_id: String,
    #[serde(alias = "answer")]
    pub text: String,
    #[serde(default)]
    pub sentences: Vec<AnswerSentence>,
}

impl AnswerRecord {
    pub fn into_answer(self) -> GeneratedAnswer {
        if self.sentences.is_empty() {
            GeneratedAnswer::from_text(&self.case_id, &self.text)
        } else {
            let mut a = GeneratedAnswer::from_sentences(&self.case_id, self.sentences);
            a.text = self.text;
            a
        }
    }
}

impl From<&GeneratedAnswer> for AnswerRecord {
    fn from(a: &GeneratedAnswer) -> Self {
        AnswerRecord {
            case_id: a.case_id.clone(),
            text: a.text.clone(),
            sentences: a.sentences.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRef {
    pub id: String,
    pub version: u32,
    pub sha256: String,
}

impl From<&PromptTemplate> for PromptRef {
    fn from(t: &PromptTemplate) -> Self {
        PromptRef {
            id: t.id.clone(),
            version: t.version,
            sha256: sha256_hex(t.text.as_bytes()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    /// Split whose labels chose the threshold.
    pub calibrated_on: String,
    pub scorer: String,
    pub best_t: f64,
    pub best: MicroScores,
    pub baseline_f1: f64,
    pub grid_size: usize,
}

/// Record of one run, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// `subtask-1`..`subtask-4`, `calibrate` or `synth`.
    pub task: String,
    pub split: String,
    pub version: String,
    /// Effective configuration, with API keys redacted.
    pub config: Value,
    pub prompts: Vec<PromptRef>,
    pub case_timings_ms: BTreeMap<String, u64>,
    /// Backend invocations (cache misses) during this run, per operation.
    pub backend_calls: BTreeMap<String, u64>,
    pub total_backend_calls: u64,
    pub cache_hits: u64,
    pub cache_hit_ratio: f64,
    /// Output file name to SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn file_name(task: &str) -> String {
        format!("manifest-{task}.json")
    }

    /// Recomputes every output digest and compares it with the recorded one.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for (name, digest) in &self.outputs {
            let actual = file_digest(&dir.join(name))?;
            if &actual != digest {
                return Err(Error::Validation(format!(
                    "{name}: digest {actual} does not match manifest {digest}"
                )));
            }
        }
        Ok(())
    }
}

struct Recorder {
    task: String,
    split: String,
    dir: PathBuf,
    start: CacheStats,
    prompts: Vec<PromptRef>,
    timings: BTreeMap<String, u64>,
    outputs: Vec<String>,
    calibration: Option<CalibrationSummary>,
    synth: Option<SynthSummary>,
    notes: Vec<String>,
}

impl Recorder {
    fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        write_json(&self.dir.join(name), value)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.outputs.push(name.to_string());
        Ok(())
    }
}

fn elapsed_ms(start: Instant) -> u64 {
    start.elapsed().as_millis() as u64
}

fn redacted(config: &RunConfig) -> Value {
    let mut value = serde_json::to_value(config).expect("config serializes");
    if let Some(backends) = value.get_mut("backends").and_then(Value::as_object_mut) {
        for b in backends.values_mut() {
            if let Some(key) = b.get_mut("api_key").filter(|k| !k.is_null()) {
                *key = Value::String("<redacted>".into());
            }
        }
    }
    value
}

/// Cache-key identity of a configured backend: its name plus a digest of
/// the settings that change its output.
fn backend_id(name: &str, settings: &Value) -> String {
    let mut settings = settings.clone();
    if let Some(obj) = settings.as_object_mut() {
        for volatile in ["api_key", "timeout_secs", "retry"] {
            obj.remove(volatile);
        }
    }
    format!(
        "{name}-{}",
        &sha256_hex(settings.to_string().as_bytes())[..12]
    )
}

pub fn build_backend(name: &str, config: &BackendConfig) -> Result<Arc<dyn Backend>> {
    let settings = serde_json::to_value(config).expect("backend config serializes");
    Ok(match config {
        BackendConfig::Mock {
            seed,
            scripted,
            fallback,
        } => {
            let mut mock = if *scripted {
                MockBackend::scripted(backend_id(name, &settings))
            } else {
                MockBackend::new(backend_id(name, &settings))
            };
            if let Some(seed) = seed {
                mock = mock.with_seed(*seed);
            }
            if let Some(text) = fallback {
                mock = mock.with_fallback(text.clone());
            }
            Arc::new(mock)
        }
        BackendConfig::Openai(cfg) => {
            let probe = OpenAiBackend::new(name, cfg.clone())?;
            let effective = serde_json::to_value(probe.config()).expect("config serializes");
            Arc::new(OpenAiBackend::new(
                backend_id(name, &effective),
                cfg.clone(),
            )?)
        }
        BackendConfig::ScoreService { base_url, retry } => Arc::new(ScoreServiceBackend::new(
            backend_id(name, &settings),
            base_url.clone(),
            *retry,
        )?),
    })
}

/// Runs configured subtasks over named corpus splits, writing predictions
/// and a manifest per run under `<output_dir>/<split>/`. Every backend call
/// goes through one shared disk cache.
pub struct Pipeline {
    config: RunConfig,
    cache: Arc<DiskCache>,
    backends: BTreeMap<String, Arc<dyn Backend>>,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self> {
        let raw = config
            .backends
            .iter()
            .map(|(name, b)| Ok((name.clone(), build_backend(name, b)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Pipeline::with_backends(config, raw)
    }

    /// Uses the given backends instead of building them from the config.
    /// Each is still wrapped in the run's cache.
    pub fn with_backends(
        config: RunConfig,
        backends: BTreeMap<String, Arc<dyn Backend>>,
    ) -> Result<Self> {
        config.validate()?;
        let cache = Arc::new(DiskCache::open(config.cache_dir())?);
        let backends = backends
            .into_iter()
            .map(|(name, b)| {
                let cached: Arc<dyn Backend> = Arc::new(CachedBackend::new(b, cache.clone()));
                (name, cached)
            })
            .collect();
        Ok(Pipeline {
            config,
            cache,
            backends,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn cache(&self) -> &DiskCache {
        &self.cache
    }

    fn backend(&self, name: &str) -> Result<&dyn Backend> {
        self.backends
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::Config(format!("no backend named `{name}`")))
    }

    pub fn load_split(&self, split: &str) -> Result<Vec<Case>> {
        self.config.load_split(split)
    }

    fn recorder(&self, task: &str, split: &str) -> Recorder {
        Recorder {
            task: task.to_string(),
            split: split.to_string(),
            dir: self.config.split_dir(split),
            start: self.cache.stats(),
            prompts: Vec::new(),
            timings: BTreeMap::new(),
            outputs: Vec::new(),
            calibration: None,
            synth: None,
            notes: Vec::new(),
        }
    }

    fn finish(&self, rec: Recorder) -> Result<RunManifest> {
        let end = self.cache.stats();
        let mut backend_calls = BTreeMap::new();
        for (op, n) in &end.misses {
            let delta = n - rec.start.calls(op);
            if delta > 0 {
                backend_calls.insert(op.clone(), delta);
            }
        }
        let delta = CacheStats {
            hits: end.hits - rec.start.hits,
            misses: backend_calls.clone(),
        };
        let outputs = rec
            .outputs
            .iter()
            .map(|name| Ok((name.clone(), file_digest(&rec.dir.join(name))?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let manifest = RunManifest {
            task: rec.task.clone(),
            split: rec.split,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: redacted(&self.config),
            prompts: rec.prompts,
            case_timings_ms: rec.timings,
            total_backend_calls: delta.backend_calls(),
            backend_calls,
            cache_hits: delta.hits,
            cache_hit_ratio: delta.hit_ratio(),
            outputs,
            calibration: rec.calibration,
            synth: rec.synth,
            notes: rec.notes,
        };
        write_json(&rec.dir.join(RunManifest::file_name(&rec.task)), &manifest)?;
        info!(
            "{} on {}: {} backend call(s), {} cache hit(s)",
            manifest.task, manifest.split, manifest.total_backend_calls, manifest.cache_hits
        );
        Ok(manifest)
    }

    /// Reads an upstream output of `split`, or fails naming the file.
    fn upstream<T: serde::de::DeserializeOwned>(
        &self,
        split: &str,
        file: &str,
        hint: &str,
    ) -> Result<T> {
        let path = self.config.split_dir(split).join(file);
        if !path.is_file() {
            return Err(Error::Dependency {
                path,
                hint: hint.to_string(),
            });
        }
        read_json(&path)
    }

    pub fn interpreted_questions(&self, split: &str) -> Result<BTreeMap<String, String>> {
        let records: Vec<QuestionRecord> = self.upstream(
            split,
            INTERPRET_FILE,
            "run question interpretation (subtask 1) first",
        )?;
        Ok(records.into_iter().map(|r| (r.case_id, r.text)).collect())
    }

    fn question_source(&self, split: &str, choice: QuestionChoice) -> Result<QuestionSource> {
        Ok(match choice {
            QuestionChoice::Clinician => QuestionSource::Clinician,
            QuestionChoice::Patient => QuestionSource::Patient,
            QuestionChoice::Interpreted => {
                QuestionSource::Given(self.interpreted_questions(split)?)
            }
        })
    }

    /// Runs one subtask on `split` and writes its predictions and manifest.
    pub fn run_subtask(&self, subtask: Subtask, split: &str) -> Result<RunManifest> {
        let cases = self.load_split(split)?;
        let mut rec = self.recorder(&format!("subtask-{}", subtask.number()), split);
        match subtask {
            Subtask::Interpret => self.interpret(&cases, &mut rec)?,
            Subtask::Evidence => self.evidence(&cases, split, &mut rec)?,
            Subtask::Answer => self.answer(&cases, split, &mut rec)?,
            Subtask::Align => self.align(&cases, split, &mut rec)?,
        }
        self.finish(rec)
    }

    /// Subtasks 1 to 4 in order.
    pub fn run_all(&self, split: &str) -> Result<Vec<RunManifest>> {
        Subtask::ALL
            .iter()
            .map(|&s| self.run_subtask(s, split))
            .collect()
    }

    fn interpret(&self, cases: &[Case], rec: &mut Recorder) -> Result<()> {
        let settings = &self.config.interpret;
        let dev = self.load_split(&self.config.dev_split)?;
        let mut strategy = InterpretStrategy::from_dev(settings.strategy, settings.shots, &dev)?;
        if let Some(path) = &settings.template {
            strategy.template = PromptTemplate::from_file(path)?;
        }
        rec.prompts.push(PromptRef::from(&strategy.template));
        let mut interpreter = Interpreter::new(strategy, self.backend(&settings.backend)?)
            .with_decoding(self.config.decoding);
        if settings.strategy == InterpretKind::TwoStep {
            let name = settings.reviser.as_deref().unwrap_or_default();
            interpreter = interpreter.with_reviser(self.backend(name)?);
            rec.prompts
                .push(PromptRef::from(&prompts::interpret_revision()));
        }
        let results = map_bounded(cases, self.config.fanout, |case| {
            let start = Instant::now();
            let out = interpreter
                .interpret(&case.patient_question)
                .map_err(|e| e.in_case(&case.case_id));
            (out, elapsed_ms(start))
        });
        let mut records = Vec::with_capacity(cases.len());
        for (case, (out, ms)) in cases.iter().zip(results) {
            rec.timings.insert(case.case_id.clone(), ms);
            records.push(QuestionRecord {
                case_id: case.case_id.clone(),
                text: out?.text,
            });
        }
        rec.write_json(INTERPRET_FILE, &records)
    }

    fn scorer(&self) -> Result<Scorer<'_>> {
        Ok(Scorer::new(
            self.config.evidence.scorer,
            self.backend(&self.config.evidence.backend)?,
        ))
    }

    fn grid_for(&self, labeled: &[LabeledScores]) -> Result<Vec<f64>> {
        if let Some(grid) = &self.config.evidence.grid {
            return Ok(grid.clone());
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in labeled.iter().flat_map(|l| &l.scored) {
            lo = lo.min(s.score);
            hi = hi.max(s.score);
        }
        if lo > hi {
            return Err(Error::InvalidInput(
                "calibration split has no note sentences".into(),
            ));
        }
        linear_grid(lo, hi, self.config.evidence.grid_points)
    }

    /// Scores the labeled `split` and sweeps the threshold grid. Writes the
    /// curve and the chosen threshold into `rec`'s directory.
    fn calibrate_on(&self, split: &str, rec: &mut Recorder) -> Result<ThresholdCurve> {
        let cases = self.load_split(split)?;
        let questions = self.question_source(split, self.config.evidence.question)?;
        let scored = score_cases(&cases, &questions, &self.scorer()?, self.config.fanout)?;
        let labeled = cases
            .iter()
            .zip(scored)
            .map(|(c, s)| LabeledScores::from_case(c, s))
            .collect::<Result<Vec<_>>>()?;
        let curve = calibrate_from_scores(&labeled, &self.grid_for(&labeled)?)?;
        let summary = CalibrationSummary {
            calibrated_on: split.to_string(),
            scorer: self.config.evidence.scorer.as_str().to_string(),
            best_t: curve.best_t,
            best: curve.best,
            baseline_f1: curve.baseline_f1(),
            grid_size: curve.points.len(),
        };
        rec.write_bytes(CURVE_FILE, curve.to_csv().as_bytes())?;
        rec.write_json(CALIBRATION_FILE, &summary)?;
        rec.calibration = Some(summary);
        Ok(curve)
    }

    /// Calibrates the evidence threshold on the labeled `split`.
    pub fn calibrate(&self, split: &str) -> Result<RunManifest> {
        let mut rec = self.recorder("calibrate", split);
        self.calibrate_on(split, &mut rec)?;
        self.finish(rec)
    }

    fn evidence(&self, cases: &[Case], split: &str, rec: &mut Recorder) -> Result<()> {
        let t = match self.config.evidence.threshold {
            ThresholdSetting::Fixed(t) => t,
            ThresholdSetting::Mode(_) => {
                let dev = self.config.dev_split.clone();
                self.calibrate_on(&dev, rec)?.best_t
            }
        };
        let questions = self.question_source(split, self.config.evidence.question)?;
        let scorer = self.scorer()?;
        let results = map_bounded(cases, self.config.fanout, |case| {
            let start = Instant::now();
            let out = questions
                .question_for(case)
                .and_then(|q| crate::evidence::score_case(case, q, &scorer))
                .map_err(|e| e.in_case(&case.case_id));
            (out, elapsed_ms(start))
        });
        let mut sets: Vec<EvidenceSet> = Vec::with_capacity(cases.len());
        for (case, (out, ms)) in cases.iter().zip(results) {
            rec.timings.insert(case.case_id.clone(), ms);
            sets.push(select_evidence(&case.case_id, &out?, t));
        }
        rec.notes.push(format!("threshold t = {t}"));
        rec.write_json(EVIDENCE_FILE, &sets)
    }

    fn answer(&self, cases: &[Case], split: &str, rec: &mut Recorder) -> Result<()> {
        let settings = &self.config.answer;
        let questions = self.question_source(split, settings.question)?;
        let generator = AnswerGenerator::new(self.backend(&settings.backend)?, settings.mode)
            .with_decoding(self.config.decoding);
        rec.prompts
            .push(PromptRef::from(&prompts::answer_generation()));
        if settings.mode == crate::answer::AnswerMode::TwoStep {
            rec.prompts
                .push(PromptRef::from(&prompts::answer_revision()));
        }
        let results = map_bounded(cases, self.config.fanout, |case| {
            let start = Instant::now();
            let out = questions
                .question_for(case)
                .and_then(|q| generator.generate(case, q))
                .map_err(|e| e.in_case(&case.case_id));
            (out, elapsed_ms(start))
        });
        let mut records = Vec::with_capacity(cases.len());
        for (case, (out, ms)) in cases.iter().zip(results) {
            rec.timings.insert(case.case_id.clone(), ms);
            records.push(AnswerRecord::from(&out?));
        }
        rec.write_json(ANSWERS_FILE, &records)
    }

    fn answers_for(&self, cases: &[Case], split: &str) -> Result<Vec<GeneratedAnswer>> {
        match self.config.align.answers {
            AnswerSource::Gold => cases
                .iter()
                .map(|c| {
                    let sentences = c.reference_answer.clone().ok_or_else(|| {
                        Error::InvalidInput(format!(
                            "case {} has no reference answer to align",
                            c.case_id
                        ))
                    })?;
                    Ok(GeneratedAnswer::from_sentences(&c.case_id, sentences))
                })
                .collect(),
            AnswerSource::Generated => {
                let records: Vec<AnswerRecord> = self.upstream(
                    split,
                    ANSWERS_FILE,
                    "run answer generation (subtask 3) first, or set align.answers = \"gold\"",
                )?;
                let mut by_case: BTreeMap<String, GeneratedAnswer> = records
                    .into_iter()
                    .map(|r| (r.case_id.clone(), r.into_answer()))
                    .collect();
                cases
                    .iter()
                    .map(|c| {
                        by_case.remove(&c.case_id).ok_or_else(|| Error::Dependency {
                            path: self.config.split_dir(split).join(ANSWERS_FILE),
                            hint: format!("no answer for case {}", c.case_id),
                        })
                    })
                    .collect()
            }
        }
    }

    fn align(&self, cases: &[Case], split: &str, rec: &mut Recorder) -> Result<()> {
        let settings = &self.config.align;
        let answers = self.answers_for(cases, split)?;
        let questions = self.question_source(split, settings.question)?;
        let mut aligner = Aligner::new(settings.strategy, self.backend(&settings.backend)?)?
            .with_decoding(self.config.decoding)
            .with_fanout(self.config.fanout);
        use crate::align::AlignStrategy as S;
        match settings.strategy {
            S::ListwiseOneShot => {
                let dev = self.load_split(&self.config.dev_split)?;
                let exemplar = dev.first().ok_or_else(|| {
                    Error::Config(
                        "development split is empty; one-shot alignment needs an exemplar".into(),
                    )
                })?;
                aligner = aligner.with_exemplar(exemplar)?;
                rec.prompts
                    .push(PromptRef::from(&prompts::evidence_alignment()));
            }
            S::ListwiseTwoStep => {
                rec.prompts
                    .push(PromptRef::from(&prompts::evidence_alignment()));
                rec.prompts
                    .push(PromptRef::from(&prompts::alignment_reformat()));
            }
            S::PairwiseZeroShot => rec
                .prompts
                .push(PromptRef::from(&prompts::pairwise_alignment())),
            S::Threshold { .. } => {}
        }
        // pair-wise alignment already fans out over sentence pairs
        let fanout = if matches!(settings.strategy, S::PairwiseZeroShot) {
            1
        } else {
            self.config.fanout
        };
        let jobs: Vec<(&Case, &GeneratedAnswer)> = cases.iter().zip(&answers).collect();
        let results = map_bounded(&jobs, fanout, |(case, answer)| {
            let start = Instant::now();
            let out = questions
                .question_for(case)
                .and_then(|q_clin| aligner.align(case, answer, &case.patient_question, q_clin))
                .map_err(|e| e.in_case(&case.case_id));
            (out, elapsed_ms(start))
        });
        let mut maps = Vec::with_capacity(cases.len());
        for (case, (out, ms)) in cases.iter().zip(results) {
            rec.timings.insert(case.case_id.clone(), ms);
            maps.push(out?);
        }
        rec.write_json(ALIGNMENT_FILE, &to_submission(&maps))
    }

    /// Generates synthetic variations of every case in `split`, merging the
    /// accepted ones into `synthetic.json` (same ids are replaced) and
    /// logging rejects and failures to `audit.jsonl`.
    pub fn synthesize(&self, split: &str) -> Result<RunManifest> {
        let cases = self.load_split(split)?;
        let mut rec = self.recorder("synth", split);
        rec.prompts
            .push(PromptRef::from(&prompts::synthetic_case()));
        rec.prompts
            .push(PromptRef::from(&prompts::synthetic_repair()));
        let mut synth = self.config.synth.config;
        synth.seed = synth.seed.wrapping_add(self.config.seed);
        let backend = self.backend(&self.config.synth.backend)?;
        let indices: Vec<usize> = (0..cases.len()).collect();
        let results = map_bounded(&indices, self.config.fanout, |&i| {
            let start = Instant::now();
            // the following cases, wrapping around, fill extra example slots
            let extra: Vec<&Case> = (1..cases.len())
                .map(|k| &cases[(i + k) % cases.len()])
                .collect();
            let out = generate_synthetic(&cases[i], &extra, backend, &synth)
                .map_err(|e| e.in_case(&cases[i].case_id));
            (out, elapsed_ms(start))
        });
        let mut batches: Vec<SynthBatch> = Vec::with_capacity(cases.len());
        for (case, (out, ms)) in cases.iter().zip(results) {
            rec.timings.insert(case.case_id.clone(), ms);
            batches.push(out?);
        }

        let path = rec.dir.join(SYNTHETIC_FILE);
        let mut merged: Vec<Case> = if path.is_file() {
            crate::corpus::parse_corpus(&path, crate::corpus::CorpusFormat::Json)?
        } else {
            Vec::new()
        };
        for case in batches.iter().flat_map(|b| b.generated.iter().cloned()) {
            match merged.iter_mut().find(|c| c.case_id == case.case_id) {
                Some(slot) => *slot = case,
                None => merged.push(case),
            }
        }
        rec.write_bytes(SYNTHETIC_FILE, serialize_corpus(&merged).as_bytes())?;
        let mut audit = String::new();
        for record in batches.iter().flat_map(SynthBatch::audit_records) {
            audit.push_str(&serde_json::to_string(&record).expect("audit record serializes"));
            audit.push('\n');
        }
        rec.write_bytes(AUDIT_FILE, audit.as_bytes())?;
        rec.synth = Some(summarize(&batches));
        self.finish(rec)
    }
}
