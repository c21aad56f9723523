//! Canned replies for every prompt family shipped with the crate, so the
//! whole pipeline runs offline. Replies are derived from the request text
//! only, which keeps them deterministic.

use serde_json::{json, Value};

use super::overlap_ratio;
use crate::backends::ChatRequest;
use crate::extract::first_json;
use crate::interpret::DRAFT_MARKER;

/// Minimum token overlap for the scripted aligner to cite a note sentence.
const CITE_OVERLAP: f64 = 0.5;

/// Reply for a recognized prompt, `None` otherwise.
pub fn scripted_response(request: &ChatRequest) -> Option<String> {
    let all = request.full_text();
    let user = request.last_user().unwrap_or("");
    if all.contains("You revise a draft clinician question") {
        return user
            .split(DRAFT_MARKER)
            .nth(1)
            .map(|d| d.trim().to_string());
    }
    if all.contains("You rewrite long, messy questions") {
        return Some(interpret(block_after(user, "Patient question:\n")?));
    }
    if all.contains("Draft answer:\n") {
        return user
            .split("Draft answer:\n")
            .nth(1)
            .map(|d| d.trim().to_string());
    }
    if all.contains("clinical documentation assistant") {
        return Some(answer(user));
    }
    if all.contains("Reply with exactly one word: YES or NO.") {
        let a = block_after(user, "Answer sentence:\n")?;
        let n = block_after(user, "Note sentence:\n")?;
        return Some(
            if overlap_ratio(a, n) >= CITE_OVERLAP {
                "YES"
            } else {
                "NO"
            }
            .to_string(),
        );
    }
    if all.contains("Alignment to convert:") {
        return Some(reformat(user));
    }
    if all.contains("clinical evidence alignment system") && user.contains("Answer sentences:") {
        return Some(listwise(user));
    }
    if all.contains("violates the following quality rules") {
        let current = first_json(user.split("Current case:").nth(1)?)?;
        return Some(synthetic_case(&current, 0).to_string());
    }
    if all.contains("Generate a synthetic case now.") {
        let variant = request.seed.unwrap_or(0) as usize + all.len();
        return Some(synthetic_case(&Value::Null, variant).to_string());
    }
    None
}

/// Text following `marker`, up to the next blank line.
fn block_after<'a>(text: &'a str, marker: &str) -> Option<&'a str> {
    let rest = &text[text.find(marker)? + marker.len()..];
    Some(rest.split("\n\n").next().unwrap_or(rest).trim())
}

/// `id: text` lines following `marker`, up to the next blank line.
fn numbered_after(text: &str, marker: &str) -> Vec<(String, String)> {
    let Some(start) = text.find(marker) else {
        return Vec::new();
    };
    text[start + marker.len()..]
        .lines()
        .skip_while(|l| l.trim().is_empty())
        .take_while(|l| !l.trim().is_empty())
        .filter_map(|l| l.split_once(": "))
        .map(|(id, t)| (id.trim().to_string(), t.trim().to_string()))
        .collect()
}

fn interpret(q: &str) -> String {
    let swaps = [
        ("my", "the patient's"),
        ("i", "the patient"),
        ("me", "the patient"),
        ("i'm", "the patient is"),
    ];
    let sentence = q
        .split_inclusive(['.', '?', '!'])
        .find(|s| s.trim_end().ends_with('?'))
        .unwrap_or(q);
    let words: Vec<String> = sentence
        .split_whitespace()
        .map(|w| {
            let bare = w.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'');
            swaps
                .iter()
                .find(|(from, _)| bare.eq_ignore_ascii_case(from))
                .map(|(_, to)| to.to_string())
                .unwrap_or_else(|| bare.to_string())
        })
        .collect::<Vec<_>>()
        .join(" ")
        .split_whitespace()
        .take(14)
        .map(str::to_string)
        .collect();
    let mut text = words.join(" ");
    if let Some(first) = text.get(..1) {
        text = first.to_uppercase() + &text[1..];
    }
    text + "?"
}

fn answer(user: &str) -> String {
    let question = [
        block_after(user, "Patient question:\n").unwrap_or(""),
        block_after(user, "Clinician question:\n").unwrap_or(""),
    ]
    .join(" ");
    let note = numbered_after(user, "Clinical note excerpt:\n");
    let mut ranked: Vec<(usize, f64)> = note
        .iter()
        .enumerate()
        .map(|(i, (_, t))| (i, overlap_ratio(t, &question)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut picked: Vec<usize> = ranked.iter().take(3).map(|(i, _)| *i).collect();
    picked.sort_unstable();
    picked
        .iter()
        .map(|&i| note[i].1.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

fn case_id_line(user: &str) -> String {
    user.lines()
        .find_map(|l| l.strip_prefix("Case ID: "))
        .unwrap_or("")
        .trim()
        .to_string()
}

fn listwise(user: &str) -> String {
    let note = numbered_after(user, "Clinical note sentences:\n");
    let answer = numbered_after(user, "Answer sentences:\n");
    let prediction: Vec<Value> = answer
        .iter()
        .map(|(aid, a)| {
            let cited: Vec<&str> = note
                .iter()
                .filter(|(_, n)| overlap_ratio(a, n) >= CITE_OVERLAP)
                .map(|(id, _)| id.as_str())
                .collect();
            json!({"answer_id": aid, "evidence_id": cited})
        })
        .collect();
    let out = json!([{"case_id": case_id_line(user), "prediction": prediction}]);
    serde_json::to_string_pretty(&out).expect("json value")
}

fn reformat(user: &str) -> String {
    let case_id = user
        .split("\"case_id\": \"")
        .nth(1)
        .and_then(|s| s.split('"').next())
        .unwrap_or("");
    let ids = user
        .lines()
        .find_map(|l| l.strip_prefix("Answer sentence ids: "))
        .unwrap_or("");
    let prediction: Vec<Value> = ids
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|id| json!({"answer_id": id, "evidence_id": []}))
        .collect();
    json!([{"case_id": case_id, "prediction": prediction}]).to_string()
}

const TOPICS: &[(&str, &str, &str, &str)] = &[
    (
        "pneumonia",
        "intravenous antibiotics",
        "chest radiograph",
        "cough and fever",
    ),
    (
        "a kidney stone",
        "pain control and fluids",
        "abdominal CT scan",
        "flank pain",
    ),
    (
        "atrial fibrillation",
        "rate control with metoprolol",
        "electrocardiogram",
        "palpitations",
    ),
    (
        "diabetic ketoacidosis",
        "an insulin infusion",
        "serum anion gap",
        "vomiting and confusion",
    ),
    (
        "a hip fracture",
        "surgical repair",
        "pelvic radiograph",
        "a fall at home",
    ),
    (
        "cellulitis of the leg",
        "cefazolin",
        "ultrasound of the leg",
        "redness and swelling",
    ),
    (
        "a gastrointestinal bleed",
        "a blood transfusion",
        "upper endoscopy",
        "dark stools",
    ),
];

/// A case that passes the default quality gate: 15 sentences, 3 essential,
/// 2 supplementary, 10 not relevant. Questions are kept from `current` when
/// present.
fn synthetic_case(current: &Value, variant: usize) -> Value {
    let (condition, treatment, test, symptom) = TOPICS[variant % TOPICS.len()];
    let field = |k: &str, default: String| {
        current
            .get(k)
            .and_then(Value::as_str)
            .map(str::to_string)
            .unwrap_or(default)
    };
    let patient_question = field(
        "patient_question",
        format!("My father came in with {symptom}. Why did the doctors decide on {treatment}?"),
    );
    let clinician_question = field(
        "clinician_question",
        format!("Why was {treatment} started for the patient?"),
    );
    let sentences = [
        (
            format!("The patient presented with {symptom}."),
            "supplementary",
        ),
        (format!("A {test} confirmed {condition}."), "essential"),
        (
            format!("Given the diagnosis of {condition}, {treatment} was started."),
            "essential",
        ),
        (
            format!("The team chose {treatment} because symptoms were worsening."),
            "essential",
        ),
        (
            "Vital signs were otherwise stable on arrival.".to_string(),
            "not-relevant",
        ),
        (
            "He has a history of hypertension and hyperlipidemia.".to_string(),
            "not-relevant",
        ),
        (
            "Home medications included lisinopril and atorvastatin.".to_string(),
            "not-relevant",
        ),
        (
            "He lives with his wife and is independent at baseline.".to_string(),
            "not-relevant",
        ),
        (
            "Physical therapy evaluated him on hospital day two.".to_string(),
            "not-relevant",
        ),
        (
            "A social work consult was obtained for discharge planning.".to_string(),
            "not-relevant",
        ),
        (
            format!("His {symptom} improved over the next two days."),
            "supplementary",
        ),
        (
            "Electrolytes were repleted as needed.".to_string(),
            "not-relevant",
        ),
        (
            "Diet was advanced as tolerated.".to_string(),
            "not-relevant",
        ),
        (
            "He was ambulating independently before discharge.".to_string(),
            "not-relevant",
        ),
        (
            "Follow-up was arranged with his primary care physician.".to_string(),
            "not-relevant",
        ),
    ];
    json!({
        "patient_question": patient_question,
        "clinician_question": clinician_question,
        "sentences": sentences.iter().enumerate().map(|(i, (t, _))| json!({"id": (i + 1).to_string(), "text": t})).collect::<Vec<_>>(),
        "relevance_labels": sentences.iter().enumerate().map(|(i, (_, r))| json!({"sentence_id": (i + 1).to_string(), "relevance": r})).collect::<Vec<_>>(),
    })
}
