//! Direct answering by the language model and fallback answering.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::kb::{tokenize, KnowledgeBase};
use crate::llm::{Completion, ProviderError};
use crate::model::{link_entities, match_surfaces, predict, Featurizer, RankerParams};
use crate::query::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectAnswer {
    pub question: String,
    pub response_text: String,
    /// (entity id, matched surface) in order of first mention.
    pub extracted: Vec<(String, String)>,
}

/// A demo or stub line: `{"question": ..., "answer": ...}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
}

#[derive(Clone)]
pub enum IrProvider<'a> {
    Remote(Arc<dyn Completion + 'a>),
    /// Canned responses keyed by exact question text.
    Stub(HashMap<String, String>),
}

#[derive(Clone)]
pub struct IrConfig<'a> {
    pub demos: Vec<QaPair>,
    pub provider: IrProvider<'a>,
}

impl<'a> IrConfig<'a> {
    pub fn stub(responses: &[QaPair]) -> IrConfig<'a> {
        IrConfig {
            demos: Vec::new(),
            provider: IrProvider::Stub(responses.iter().map(|p| (p.question.clone(), p.answer.clone())).collect()),
        }
    }
}

pub fn render_ir_prompt(demos: &[QaPair], question: &str) -> String {
    let mut out = String::new();
    for d in demos {
        out.push_str(&format!("# question:{}\n# answer:{}\n\n", d.question, d.answer));
    }
    out.push_str(&format!("# question:{question}\n# answer:"));
    out
}

/// Entities whose surface names occur in `text`, deduplicated.
pub fn extract_entities(text: &str, kb: &KnowledgeBase) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    for m in match_surfaces(&tokenize(text), kb) {
        if !out.iter().any(|(e, _)| *e == m.entity) {
            out.push((m.entity, m.surface));
        }
    }
    out
}

pub fn direct_answer(question: &str, config: &IrConfig<'_>, kb: &KnowledgeBase) -> Result<DirectAnswer, ProviderError> {
    let response_text = match &config.provider {
        IrProvider::Stub(map) => map
            .get(question)
            .cloned()
            .ok_or_else(|| ProviderError::Config(format!("no stub response for {question:?}")))?,
        IrProvider::Remote(c) => c.complete(&render_ir_prompt(&config.demos, question))?,
    };
    let extracted = extract_entities(&response_text, kb);
    Ok(DirectAnswer { question: question.to_owned(), response_text, extracted })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerMode {
    Parsed,
    Fallback,
}

impl std::fmt::Display for AnswerMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AnswerMode::Parsed => "parsed",
            AnswerMode::Fallback => "fallback",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinalAnswer {
    pub answers: Vec<Value>,
    pub mode: AnswerMode,
}

/// Answers through the top-ranked program; empty when nothing can be parsed.
pub fn parsed_answer(question: &str, params: &RankerParams, featurizer: &Featurizer<'_>, cap: usize) -> FinalAnswer {
    let q = link_entities(question, featurizer.kb());
    let answers = predict(params, featurizer, &q, cap)
        .ok()
        .and_then(|r| r.into_iter().next())
        .map(|top| top.answers.values())
        .unwrap_or_default();
    FinalAnswer { answers, mode: AnswerMode::Parsed }
}

/// Parsed answers when available, otherwise every entity named in the direct response.
pub fn fallback_answer(
    question: &str,
    params: &RankerParams,
    featurizer: &Featurizer<'_>,
    cap: usize,
    config: &IrConfig<'_>,
) -> Result<FinalAnswer, ProviderError> {
    let parsed = parsed_answer(question, params, featurizer, cap);
    if !parsed.answers.is_empty() {
        return Ok(parsed);
    }
    let direct = direct_answer(question, config, featurizer.kb())?;
    Ok(FinalAnswer {
        answers: direct.extracted.into_iter().map(|(e, _)| Value::Entity(e)).collect(),
        mode: AnswerMode::Fallback,
    })
}
