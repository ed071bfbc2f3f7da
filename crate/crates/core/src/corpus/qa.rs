//! SQuAD-v2 / Quoref JSON reader.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::text::{char_slice, CharSpan};
use crate::error::{Error, Result};

/// One question over a context; `answers` is empty when unanswerable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaExample {
    pub id: String,
    pub context: String,
    pub question: String,
    pub answers: Vec<CharSpan>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SquadFile {
    #[serde(default)]
    pub version: Option<String>,
    pub data: Vec<SquadArticle>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SquadArticle {
    #[serde(default)]
    pub title: Option<String>,
    pub paragraphs: Vec<SquadParagraph>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SquadParagraph {
    pub context: String,
    pub qas: Vec<SquadQuestion>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SquadQuestion {
    pub id: String,
    pub question: String,
    #[serde(default)]
    pub answers: Vec<SquadAnswer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_impossible: Option<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SquadAnswer {
    pub text: String,
    pub answer_start: usize,
}

pub fn parse_qa(path: impl AsRef<Path>) -> Result<Vec<QaExample>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_qa_str(&text)
}

pub fn parse_qa_str(text: &str) -> Result<Vec<QaExample>> {
    let file: SquadFile = serde_json::from_str(text).map_err(|e| Error::ParseLine {
        line: e.line(),
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    for article in &file.data {
        for para in &article.paragraphs {
            for q in &para.qas {
                let mut answers = Vec::new();
                if !q.is_impossible.unwrap_or(false) {
                    for a in &q.answers {
                        let span = CharSpan::new(a.answer_start, a.answer_start + a.text.chars().count());
                        match char_slice(&para.context, span) {
                            Some(found) if found == a.text => {}
                            found => {
                                return Err(Error::ParseExample {
                                    id: q.id.clone(),
                                    message: format!(
                                        "answer {:?} at {} does not match context ({found:?})",
                                        a.text, a.answer_start
                                    ),
                                })
                            }
                        }
                        if !answers.contains(&span) {
                            answers.push(span);
                        }
                    }
                }
                out.push(QaExample {
                    id: q.id.clone(),
                    context: para.context.clone(),
                    question: q.question.clone(),
                    answers,
                });
            }
        }
    }
    Ok(out)
}

/// Serializes examples back into the SQuAD-v2 layout, one paragraph per example.
pub fn write_qa_string(examples: &[QaExample]) -> Result<String> {
    let paragraphs = examples
        .iter()
        .map(|ex| SquadParagraph {
            context: ex.context.clone(),
            qas: vec![SquadQuestion {
                id: ex.id.clone(),
                question: ex.question.clone(),
                answers: ex
                    .answers
                    .iter()
                    .map(|span| SquadAnswer {
                        text: char_slice(&ex.context, *span).unwrap_or_default().to_string(),
                        answer_start: span.start,
                    })
                    .collect(),
                is_impossible: Some(ex.answers.is_empty()),
            }],
        })
        .collect();
    let file = SquadFile {
        version: Some("v2.0".into()),
        data: vec![SquadArticle {
            title: Some("synthetic".into()),
            paragraphs,
        }],
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Serialize(e.to_string()))
}
