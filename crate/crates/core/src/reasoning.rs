//! Answer generation: entity extraction, question classification, the
//! detect-and-count plan with total-importance fusion, open-ended answers
//! and cross-model comparison.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{Backend, BackendError, DetectionBackend, MultimodalBackend, TextGenBackend};
use crate::prompts;
use crate::renderer::SampledView;
use crate::selection::{detect_entity, select_views_with_entities, EntitySet, SelectedViews, ViewScoreSet};
use crate::viewgrid::ViewGrid;

/// Views sent with one multimodal request.
pub const MAX_MULTIMODAL_VIEWS: usize = 8;
/// Importance totals closer than this are treated as tied.
pub const TIE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", content = "message", rename_all = "snake_case")]
pub enum PipelineError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("answer unavailable: {0}")]
    AnswerUnavailable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuestionKind {
    Counting,
    Other,
}

/// Key noun phrases of the question; the whole question when none come back.
pub fn extract_entities(question: &str, backend: &dyn TextGenBackend) -> Result<EntitySet, BackendError> {
    let reply = backend.generate(&prompts::entity_extraction(question))?;
    let mut entities: Vec<String> = Vec::new();
    if !reply.trim().eq_ignore_ascii_case("none") {
        for part in reply.split([',', '\n']) {
            let e = part.trim().trim_start_matches(['-', '*', '•']).trim().trim_end_matches('.').trim();
            if !e.is_empty() && !entities.iter().any(|x| x == e) {
                entities.push(e.to_string());
            }
        }
    }
    if entities.is_empty() {
        entities.push(question.trim().to_string());
    }
    Ok(EntitySet::new(entities))
}

pub fn classify_question(question: &str, backend: &dyn TextGenBackend) -> Result<QuestionKind, BackendError> {
    let reply = backend.generate(&prompts::classification(question))?;
    let head = reply.trim().trim_matches(|c: char| !c.is_alphanumeric()).to_ascii_lowercase();
    Ok(if head.starts_with("counting") {
        QuestionKind::Counting
    } else if head.starts_with("other") {
        QuestionKind::Other
    } else {
        tracing::warn!(%reply, "unparseable classification reply, treating the question as Other");
        QuestionKind::Other
    })
}

pub fn count_per_view(view: &SampledView, entity: &str, backend: &dyn DetectionBackend) -> Result<usize, BackendError> {
    Ok(detect_entity(view, entity, backend)?.0.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AnswerCandidate {
    pub answer_text: String,
    pub count: usize,
    pub supporting_views: Vec<usize>,
    pub s: f64,
    pub o: f64,
    pub f: f64,
    pub d_unique: f64,
    pub d_norm: f64,
    pub total_importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FusionResult {
    pub winner: AnswerCandidate,
    /// Every candidate, by ascending count.
    pub candidates: Vec<AnswerCandidate>,
}

pub fn total_importance(s: f64, o: f64, d_norm: f64, f: f64) -> f64 {
    s + o + d_norm + (1.0 - f)
}

/// Groups `(view, count)` pairs by count, averages each group's scores and
/// picks the group with the largest total importance; ties go to the larger
/// group, then the smaller count.
pub fn fuse_counting(per_view_counts: &[(usize, usize)], scores: &ViewScoreSet) -> Option<FusionResult> {
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for &(view, count) in per_view_counts {
        groups.entry(count).or_default().push(view);
    }
    if groups.is_empty() {
        return None;
    }
    let mean = |views: &[usize], get: &dyn Fn(usize) -> f64| views.iter().map(|&v| get(v)).sum::<f64>() / views.len() as f64;
    let mut candidates: Vec<AnswerCandidate> = groups
        .into_iter()
        .map(|(count, mut views)| {
            views.sort_unstable();
            let s = mean(&views, &|v| scores.get(v).s);
            let o = mean(&views, &|v| scores.get(v).o.unwrap_or(0.0));
            let f = mean(&views, &|v| scores.get(v).f);
            let d_unique = mean(&views, &|v| scores.get(v).d_unique as f64);
            AnswerCandidate {
                answer_text: count.to_string(),
                count,
                supporting_views: views,
                s,
                o,
                f,
                d_unique,
                d_norm: 0.0,
                total_importance: 0.0,
            }
        })
        .collect();
    let d_max = candidates.iter().map(|c| c.d_unique).fold(0.0, f64::max);
    for c in &mut candidates {
        c.d_norm = if d_max > 0.0 { c.d_unique / d_max } else { 0.0 };
        c.total_importance = total_importance(c.s, c.o, c.d_norm, c.f);
    }
    let mut winner = &candidates[0];
    for c in &candidates[1..] {
        let dt = c.total_importance - winner.total_importance;
        let better = dt > TIE_EPSILON
            || (dt.abs() <= TIE_EPSILON && c.supporting_views.len() > winner.supporting_views.len());
        if better {
            winner = c;
        }
    }
    Some(FusionResult { winner: winner.clone(), candidates })
}

/// Multimodal answer over the best selected views.
pub fn answer_other(
    selected: &SelectedViews,
    views: &[SampledView],
    question: &str,
    backend: &dyn MultimodalBackend,
) -> Result<String, PipelineError> {
    assert!(!selected.views.is_empty(), "selection never returns an empty set");
    let chosen: Vec<&SampledView> =
        selected.views.iter().take(MAX_MULTIMODAL_VIEWS).map(|&i| &views[i]).collect();
    let reply = backend.generate_multimodal(&chosen, &prompts::multimodal_answer(question))?;
    let reply = reply.trim();
    if reply.is_empty() {
        return Err(PipelineError::AnswerUnavailable("the multimodal backend returned an empty reply".into()));
    }
    Ok(reply.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ComparisonSummary {
    pub similarities: String,
    pub differences: String,
    pub source_answers: Vec<String>,
}

pub fn summarize_comparison(answers: &[String], backend: &dyn TextGenBackend) -> Result<ComparisonSummary, BackendError> {
    assert!((2..=4).contains(&answers.len()), "comparison needs 2 to 4 answers");
    let reply = backend.generate(&prompts::comparison(answers))?;
    let field = |name: &str| {
        reply.lines().find_map(|l| l.trim().strip_prefix(name).map(|rest| rest.trim().to_string()))
    };
    match (field("Similarities:"), field("Differences:")) {
        (Some(similarities), Some(differences)) => {
            Ok(ComparisonSummary { similarities, differences, source_answers: answers.to_vec() })
        }
        _ => Err(BackendError::Malformed(format!("comparison reply lacks the two labelled lines: {reply:?}"))),
    }
}

/// Everything one model contributes to a table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ModelAnswer {
    pub kind: QuestionKind,
    pub answer: String,
    pub selection: SelectedViews,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counting: Option<CountingTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CountingTrace {
    pub target: String,
    pub per_view_counts: Vec<(usize, usize)>,
    pub fusion: FusionResult,
}

/// Classification, view selection and answering for one model.
pub fn answer_question(
    views: &[SampledView],
    grid: &ViewGrid,
    question: &str,
    backend: &dyn Backend,
) -> Result<ModelAnswer, PipelineError> {
    let kind = classify_question(question, backend)?;
    let entities = extract_entities(question, backend)?;
    let selection = select_views_with_entities(views, grid, entities, backend)?;
    match kind {
        QuestionKind::Counting => {
            let target = selection.entities.entities[0].clone();
            let mut per_view_counts = Vec::new();
            for &i in &selection.views {
                per_view_counts.push((i, count_per_view(&views[i], &target, backend)?));
            }
            let fusion = fuse_counting(&per_view_counts, &selection.scores).expect("selection is non-empty");
            Ok(ModelAnswer {
                kind,
                answer: fusion.winner.answer_text.clone(),
                selection,
                counting: Some(CountingTrace { target, per_view_counts, fusion }),
            })
        }
        QuestionKind::Other => {
            let answer = answer_other(&selection, views, question, backend)?;
            Ok(ModelAnswer { kind, answer, selection, counting: None })
        }
    }
}
