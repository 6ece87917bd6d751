//! Robustness metrics: relative performance change under corruption, the
//! language/visual error taxonomy, consistency and macro averages.

use alloc::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pid::percent_change;
use crate::prelude::*;

/// `(P_corrupted − P_clean) / P_clean`.
pub fn delta_p(p_corrupted: f64, p_clean: f64) -> Result<f64> {
    if !(p_clean > 0.0) {
        return Err(Error::Domain(format!(
            "clean performance must be positive, got {p_clean}"
        )));
    }
    Ok((p_corrupted - p_clean) / p_clean)
}

/// Unweighted mean.
pub fn macro_average(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("macro average"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Population standard deviation.
pub fn population_std(values: &[f64]) -> Result<f64> {
    let mean = macro_average(values)?;
    Ok(libm::sqrt(
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "VD")]
    VisualDependent,
    #[serde(rename = "VS")]
    VisualSupplement,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Control,
    Manipulated,
    NoImage,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Yes,
    No,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    Yes,
    No,
    Uncertain,
}

impl Prediction {
    pub fn matches(self, truth: Answer) -> bool {
        matches!(
            (self, truth),
            (Prediction::Yes, Answer::Yes) | (Prediction::No, Answer::No)
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseRecord {
    pub figure_id: String,
    pub question_id: String,
    pub category: Category,
    pub variant: Variant,
    pub ground_truth: Answer,
    pub prediction: Prediction,
}

impl ResponseRecord {
    pub fn correct(&self) -> bool {
        self.prediction.matches(self.ground_truth)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    LanguageInduced,
    VisualInduced,
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionDiagnosis {
    pub figure_id: String,
    pub question_id: String,
    pub class: ErrorClass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    #[serde(rename = "LI")]
    pub li: usize,
    #[serde(rename = "VI")]
    pub vi: usize,
    #[serde(rename = "Mixed")]
    pub mixed: usize,
    pub graded: usize,
    pub incorrect: usize,
    pub accuracy: f64,
    pub consistency: f64,
    pub errors: Vec<QuestionDiagnosis>,
}

type QuestionKey = (String, String);

fn group(log: &[ResponseRecord]) -> Result<BTreeMap<QuestionKey, (Category, BTreeMap<Variant, &ResponseRecord>)>> {
    let mut out: BTreeMap<QuestionKey, (Category, BTreeMap<Variant, &ResponseRecord>)> = BTreeMap::new();
    for r in log {
        let key = (r.figure_id.clone(), r.question_id.clone());
        let entry = out.entry(key).or_insert_with(|| (r.category, BTreeMap::new()));
        if entry.0 != r.category {
            return Err(Error::Schema(format!(
                "question {}/{} is listed under both categories",
                r.figure_id, r.question_id
            )));
        }
        if entry.1.insert(r.variant, r).is_some() {
            return Err(Error::Schema(format!(
                "duplicate {:?} response for question {}/{}",
                r.variant, r.figure_id, r.question_id
            )));
        }
    }
    Ok(out)
}

/// Assigns an error class to one question, or `None` if every response is
/// correct.
pub fn classify_question(category: Category, responses: &BTreeMap<Variant, &ResponseRecord>) -> Option<ErrorClass> {
    if responses.values().all(|r| r.correct()) {
        return None;
    }
    let control = responses.get(&Variant::Control);
    let manipulated = responses.get(&Variant::Manipulated);
    let no_image = responses.get(&Variant::NoImage);
    let wrong = |r: Option<&&ResponseRecord>| r.is_some_and(|r| !r.correct());
    let right = |r: Option<&&ResponseRecord>| r.is_some_and(|r| r.correct());
    match category {
        Category::VisualSupplement => {
            if wrong(no_image) {
                return Some(ErrorClass::LanguageInduced);
            }
            if let (Some(n), Some(m)) = (no_image, manipulated) {
                if n.correct() && !m.correct() {
                    return Some(if m.prediction == n.prediction {
                        ErrorClass::LanguageInduced
                    } else {
                        ErrorClass::VisualInduced
                    });
                }
            }
            Some(ErrorClass::Mixed)
        }
        Category::VisualDependent => {
            if wrong(control) || (right(control) && wrong(manipulated)) {
                Some(ErrorClass::VisualInduced)
            } else {
                Some(ErrorClass::Mixed)
            }
        }
    }
}

/// Grades a response log. Each question needs `no_image` and `manipulated`
/// responses (visual supplement) or `control` and `manipulated` (visual
/// dependent); other variants are used when present.
pub fn classify_errors(log: &[ResponseRecord]) -> Result<DiagnosisReport> {
    if log.is_empty() {
        return Err(Error::Schema("empty response log".into()));
    }
    let groups = group(log)?;
    let mut report = DiagnosisReport {
        li: 0,
        vi: 0,
        mixed: 0,
        graded: log.len(),
        incorrect: log.iter().filter(|r| !r.correct()).count(),
        accuracy: log.iter().filter(|r| r.correct()).count() as f64 / log.len() as f64,
        consistency: consistency(log)?,
        errors: Vec::new(),
    };
    for ((figure_id, question_id), (category, responses)) in &groups {
        let required = match category {
            Category::VisualSupplement => [Variant::NoImage, Variant::Manipulated],
            Category::VisualDependent => [Variant::Control, Variant::Manipulated],
        };
        if let Some(missing) = required.iter().find(|v| !responses.contains_key(v)) {
            return Err(Error::Schema(format!(
                "question {figure_id}/{question_id} lacks its {missing:?} response"
            )));
        }
        if let Some(class) = classify_question(*category, responses) {
            match class {
                ErrorClass::LanguageInduced => report.li += 1,
                ErrorClass::VisualInduced => report.vi += 1,
                ErrorClass::Mixed => report.mixed += 1,
            }
            report.errors.push(QuestionDiagnosis {
                figure_id: figure_id.clone(),
                question_id: question_id.clone(),
                class,
            });
        }
    }
    Ok(report)
}

/// Fraction of figures whose every response is correct.
pub fn consistency(log: &[ResponseRecord]) -> Result<f64> {
    if log.is_empty() {
        return Err(Error::Empty("response log"));
    }
    let figures: BTreeSet<&str> = log.iter().map(|r| r.figure_id.as_str()).collect();
    let failed: BTreeSet<&str> = log
        .iter()
        .filter(|r| !r.correct())
        .map(|r| r.figure_id.as_str())
        .collect();
    Ok((figures.len() - failed.len()) as f64 / figures.len() as f64)
}

/// Change from a baseline diagnosis: accuracy in absolute percentage points,
/// error counts and consistency as relative percentages (`None` when the
/// baseline is zero).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisDelta {
    pub accuracy_pp: f64,
    pub li_pct: Option<f64>,
    pub vi_pct: Option<f64>,
    pub mixed_pct: Option<f64>,
    pub consistency_pct: Option<f64>,
}

pub fn diagnosis_delta(before: &DiagnosisReport, after: &DiagnosisReport) -> DiagnosisDelta {
    DiagnosisDelta {
        accuracy_pp: 100.0 * (after.accuracy - before.accuracy),
        li_pct: percent_change(before.li as f64, after.li as f64),
        vi_pct: percent_change(before.vi as f64, after.vi as f64),
        mixed_pct: percent_change(before.mixed as f64, after.mixed as f64),
        consistency_pct: percent_change(before.consistency, after.consistency),
    }
}

/// Accuracy of one corrupted evaluation cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccuracyCell {
    pub kind: String,
    pub level: u8,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityCell {
    pub kind: String,
    pub level: u8,
    pub accuracy: f64,
    pub delta_p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityLevel {
    pub level: u8,
    pub mean_delta_p: f64,
    /// Population standard deviation across corruption kinds.
    pub std_delta_p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub p_clean: f64,
    pub cells: Vec<StabilityCell>,
    pub levels: Vec<StabilityLevel>,
}

pub fn stability_report(p_clean: f64, cells: &[AccuracyCell]) -> Result<StabilityReport> {
    let mut out = Vec::with_capacity(cells.len());
    let mut by_level: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
    for c in cells {
        let d = delta_p(c.accuracy, p_clean)?;
        by_level.entry(c.level).or_default().push(d);
        out.push(StabilityCell {
            kind: c.kind.clone(),
            level: c.level,
            accuracy: c.accuracy,
            delta_p: d,
        });
    }
    let levels = by_level
        .into_iter()
        .map(|(level, v)| {
            Ok(StabilityLevel {
                level,
                mean_delta_p: macro_average(&v)?,
                std_delta_p: population_std(&v)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(StabilityReport {
        p_clean,
        cells: out,
        levels,
    })
}
