//! GAP pronoun-resolution TSV reader and conversion to word-level documents.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::text::{char_slice, split_sentences, tokenize_words, words_covering, CharSpan};
use crate::error::{Error, Result};
use crate::types::{Document, Span, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gender {
    Masculine,
    Feminine,
}

impl Gender {
    /// Gender of an English third-person pronoun, if it has one.
    pub fn of_pronoun(pronoun: &str) -> Option<Gender> {
        match pronoun.to_lowercase().as_str() {
            "he" | "him" | "his" | "himself" => Some(Gender::Masculine),
            "she" | "her" | "hers" | "herself" => Some(Gender::Feminine),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapCandidate {
    pub span: CharSpan,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapExample {
    pub example_id: String,
    pub text: String,
    pub pronoun: CharSpan,
    pub candidate_a: GapCandidate,
    pub candidate_b: GapCandidate,
    pub pronoun_gender: Gender,
}

pub fn parse_gap(path: impl AsRef<Path>) -> Result<Vec<GapExample>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_gap_str(&text)
}

fn parse_bool(id: &str, field: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_uppercase().as_str() {
        "TRUE" => Ok(true),
        "FALSE" => Ok(false),
        _ => Err(Error::ParseExample {
            id: id.to_string(),
            message: format!("{field}: expected TRUE/FALSE, found {value:?}"),
        }),
    }
}

fn located(id: &str, text: &str, field: &str, surface: &str, offset: &str) -> Result<CharSpan> {
    let start: usize = offset.trim().parse().map_err(|_| Error::ParseExample {
        id: id.to_string(),
        message: format!("{field}-offset {offset:?} is not an integer"),
    })?;
    let span = CharSpan::new(start, start + surface.chars().count());
    match char_slice(text, span) {
        Some(found) if found == surface => Ok(span),
        found => Err(Error::ParseExample {
            id: id.to_string(),
            message: format!("{field} {surface:?} at offset {start} does not match text ({found:?})"),
        }),
    }
}

/// Parses GAP's published layout:
/// `ID Text Pronoun Pronoun-offset A A-offset A-coref B B-offset B-coref URL`.
pub fn parse_gap_str(text: &str) -> Result<Vec<GapExample>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (idx == 0 && line.starts_with("ID\t")) {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 10 {
            return Err(Error::ParseLine {
                line: idx + 1,
                message: format!("expected at least 10 tab-separated columns, found {}", cols.len()),
            });
        }
        let id = cols[0];
        let body = cols[1];
        let pronoun = located(id, body, "Pronoun", cols[2], cols[3])?;
        let pronoun_gender = Gender::of_pronoun(cols[2]).ok_or_else(|| Error::ParseExample {
            id: id.to_string(),
            message: format!("pronoun {:?} has no grammatical gender", cols[2]),
        })?;
        let candidate_a = GapCandidate {
            span: located(id, body, "A", cols[4], cols[5])?,
            label: parse_bool(id, "A-coref", cols[6])?,
        };
        let candidate_b = GapCandidate {
            span: located(id, body, "B", cols[7], cols[8])?,
            label: parse_bool(id, "B-coref", cols[9])?,
        };
        out.push(GapExample {
            example_id: id.to_string(),
            text: body.to_string(),
            pronoun,
            candidate_a,
            candidate_b,
            pronoun_gender,
        });
    }
    Ok(out)
}

/// Writes examples in GAP's published layout, header included. The URL
/// column is left empty.
pub fn write_gap_string(examples: &[GapExample]) -> Result<String> {
    let mut out = String::from("ID\tText\tPronoun\tPronoun-offset\tA\tA-offset\tA-coref\tB\tB-offset\tB-coref\tURL\n");
    let flag = |b: bool| if b { "TRUE" } else { "FALSE" };
    for ex in examples {
        if ex.text.contains(['\t', '\n']) {
            return Err(Error::Serialize(format!(
                "{}: text contains a tab or newline",
                ex.example_id
            )));
        }
        let surface = |span: CharSpan| char_slice(&ex.text, span).unwrap_or_default().to_string();
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t\n",
            ex.example_id,
            ex.text,
            surface(ex.pronoun),
            ex.pronoun.start,
            surface(ex.candidate_a.span),
            ex.candidate_a.span.start,
            flag(ex.candidate_a.label),
            surface(ex.candidate_b.span),
            ex.candidate_b.span.start,
            flag(ex.candidate_b.label),
        ));
    }
    Ok(out)
}

/// A GAP example lifted to the word level.
#[derive(Debug, Clone)]
pub struct GapDocument {
    pub document: Document,
    pub pronoun: Span,
    pub candidate_a: Span,
    pub candidate_b: Span,
}

/// Tokenizes the text, splits sentences on terminal punctuation and maps the
/// pronoun and candidate character spans onto word spans. Gold clusters hold
/// the pronoun with every candidate labeled coreferent.
pub fn gap_to_document(ex: &GapExample) -> Result<GapDocument> {
    let words = tokenize_words(&ex.text);
    let sentences = split_sentences(&words);
    let tokens = words
        .iter()
        .zip(&sentences)
        .enumerate()
        .map(|(i, (w, s))| Token {
            text: w.text.clone(),
            word_index: i,
            sentence_index: *s,
            speaker: None,
        })
        .collect();
    let map = |span: CharSpan, what: &str| {
        words_covering(&words, span).ok_or_else(|| Error::ParseExample {
            id: ex.example_id.clone(),
            message: format!("{what} covers no word"),
        })
    };
    let pronoun = map(ex.pronoun, "pronoun")?;
    let candidate_a = map(ex.candidate_a.span, "candidate A")?;
    let candidate_b = map(ex.candidate_b.span, "candidate B")?;
    let mut cluster = vec![pronoun];
    if ex.candidate_a.label {
        cluster.push(candidate_a);
    }
    if ex.candidate_b.label && !cluster.contains(&candidate_b) {
        cluster.push(candidate_b);
    }
    cluster.sort();
    let gold_clusters = if cluster.len() > 1 { vec![cluster] } else { vec![] };
    Ok(GapDocument {
        document: Document {
            doc_key: ex.example_id.clone(),
            genre: "gap".into(),
            tokens,
            gold_clusters,
        },
        pronoun,
        candidate_a,
        candidate_b,
    })
}

/// Writes system decisions in the GAP scorer's layout (`ID A-coref B-coref`).
pub fn write_gap_predictions(rows: &[(String, bool, bool)]) -> String {
    let mut out = String::new();
    for (id, a, b) in rows {
        out.push_str(&format!(
            "{id}\t{}\t{}\n",
            if *a { "TRUE" } else { "FALSE" },
            if *b { "TRUE" } else { "FALSE" }
        ));
    }
    out
}

/// Reads system decisions written by [`write_gap_predictions`].
pub fn parse_gap_predictions(text: &str) -> Result<Vec<(String, bool, bool)>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 3 {
            return Err(Error::ParseLine {
                line: idx + 1,
                message: "expected ID, A-coref and B-coref columns".into(),
            });
        }
        out.push((
            cols[0].to_string(),
            parse_bool(cols[0], "A-coref", cols[1])?,
            parse_bool(cols[0], "B-coref", cols[2])?,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "ID\tText\tPronoun\tPronoun-offset\tA\tA-offset\tA-coref\tB\tB-offset\tB-coref\tURL\n";

    fn row(id: &str, text: &str, p: &str, a: &str, a_lab: &str, b: &str, b_lab: &str) -> String {
        let off = |s: &str| text.find(s).map(|b| text[..b].chars().count()).unwrap();
        format!(
            "{id}\t{text}\t{p}\t{}\t{a}\t{}\t{a_lab}\t{b}\t{}\t{b_lab}\turl\n",
            off(p),
            off(a),
            off(b)
        )
    }

    #[test]
    fn pronoun_offset_covers_pronoun() {
        let text = "Anna met Maria before her trip.";
        let tsv = format!("{HEADER}{}", row("t-1", text, "her", "Anna", "TRUE", "Maria", "FALSE"));
        let ex = &parse_gap_str(&tsv).unwrap()[0];
        assert_eq!(char_slice(&ex.text, ex.pronoun), Some("her"));
        assert_eq!(ex.pronoun_gender, Gender::Feminine);
        assert!(ex.candidate_a.label);
        assert!(!ex.candidate_b.label);
    }

    #[test]
    fn neither_candidate() {
        let text = "Tom and Bill saw that he left.";
        let tsv = format!("{HEADER}{}", row("t-2", text, "he", "Tom", "FALSE", "Bill", "FALSE"));
        let ex = &parse_gap_str(&tsv).unwrap()[0];
        assert!(!ex.candidate_a.label && !ex.candidate_b.label);
        let doc = gap_to_document(ex).unwrap();
        assert!(doc.document.gold_clusters.is_empty());
    }

    #[test]
    fn offset_mismatch_names_example() {
        let tsv = format!("{HEADER}x-9\tAnna sang.\ther\t0\tAnna\t0\tTRUE\tAnna\t0\tFALSE\turl\n");
        match parse_gap_str(&tsv) {
            Err(Error::ParseExample { id, .. }) => assert_eq!(id, "x-9"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gender_partition_of_fixture() {
        let rows = [
            row("g-1", "Al saw Bo and he ran.", "he", "Al", "TRUE", "Bo", "FALSE"),
            row("g-2", "Al saw Bo and him.", "him", "Al", "FALSE", "Bo", "TRUE"),
            row("g-3", "Cy saw Di and she ran.", "she", "Cy", "TRUE", "Di", "FALSE"),
            row("g-4", "Cy saw Di and her.", "her", "Cy", "FALSE", "Di", "FALSE"),
        ];
        let tsv = format!("{HEADER}{}", rows.concat());
        let exs = parse_gap_str(&tsv).unwrap();
        let m = exs.iter().filter(|e| e.pronoun_gender == Gender::Masculine).count();
        let f = exs.iter().filter(|e| e.pronoun_gender == Gender::Feminine).count();
        assert_eq!((m, f), (2, 2));
    }

    #[test]
    fn word_level_conversion() {
        let text = "Anna met Maria. Later her trip began.";
        let tsv = format!("{HEADER}{}", row("t-3", text, "her", "Anna", "TRUE", "Maria", "FALSE"));
        let ex = &parse_gap_str(&tsv).unwrap()[0];
        let doc = gap_to_document(ex).unwrap();
        assert_eq!(doc.pronoun, Span::new(5, 5));
        assert_eq!(doc.candidate_a, Span::new(0, 0));
        assert_eq!(doc.document.num_sentences(), 2);
        assert_eq!(doc.document.gold_clusters, vec![vec![Span::new(0, 0), Span::new(5, 5)]]);
    }

    #[test]
    fn prediction_rows_round_trip() {
        let rows = vec![("a".to_string(), true, false), ("b".to_string(), false, false)];
        assert_eq!(parse_gap_predictions(&write_gap_predictions(&rows)).unwrap(), rows);
    }

    #[test]
    fn examples_round_trip() {
        let rows = [
            row("r-1", "Al saw Bo and he ran.", "he", "Al", "TRUE", "Bo", "FALSE"),
            row("r-2", "Cy saw Di and her.", "her", "Cy", "FALSE", "Di", "TRUE"),
        ];
        let exs = parse_gap_str(&format!("{HEADER}{}", rows.concat())).unwrap();
        assert_eq!(parse_gap_str(&write_gap_string(&exs).unwrap()).unwrap(), exs);
    }
}
