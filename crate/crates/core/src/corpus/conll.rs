//! CoNLL-2012 `*_conll` reader and writer.
//!
//! Only the columns the coreference pipeline needs are interpreted: document
//! name and part (0, 1), word (3), speaker (9) and the coreference column
//! (last). The writer emits the fixed 12-column layout with placeholder
//! annotation columns, which the reference scorer accepts.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::types::{genre_of, Document, Span, Token};

const MIN_COLUMNS: usize = 12;
const WORD_COL: usize = 3;
const SPEAKER_COL: usize = 9;

pub fn parse_conll(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conll_str(&text)
}

struct OpenDoc {
    key: String,
    tokens: Vec<Token>,
    sentence: usize,
    sentence_has_words: bool,
    open: HashMap<u64, Vec<usize>>,
    clusters: BTreeMap<u64, Vec<Span>>,
}

impl OpenDoc {
    fn new(key: String) -> Self {
        OpenDoc {
            key,
            tokens: Vec::new(),
            sentence: 0,
            sentence_has_words: false,
            open: HashMap::new(),
            clusters: BTreeMap::new(),
        }
    }

    fn finish(self) -> Result<Document> {
        if let Some((id, _)) = self.open.iter().find(|(_, v)| !v.is_empty()) {
            return Err(Error::ParseDocument {
                doc_key: self.key,
                message: format!("unbalanced coreference parentheses for cluster {id}"),
            });
        }
        let mut owner: HashMap<Span, u64> = HashMap::new();
        let mut gold_clusters = Vec::new();
        for (id, mut spans) in self.clusters {
            spans.sort();
            spans.dedup();
            for s in &spans {
                if let Some(prev) = owner.insert(*s, id) {
                    return Err(Error::ParseDocument {
                        doc_key: self.key,
                        message: format!("span {s} belongs to clusters {prev} and {id}"),
                    });
                }
            }
            if spans.len() < 2 {
                warn!("{}: dropping singleton cluster {id}", self.key);
                continue;
            }
            gold_clusters.push(spans);
        }
        let genre = genre_of(&self.key);
        Ok(Document {
            doc_key: self.key,
            genre,
            tokens: self.tokens,
            gold_clusters,
        })
    }
}

/// Parses the header `#begin document (name); part 000` into `name_part`.
fn parse_begin(line: &str) -> Option<String> {
    let rest = line.strip_prefix("#begin document")?.trim();
    let open = rest.find('(')?;
    let close = rest.rfind(')')?;
    let name = &rest[open + 1..close];
    let tail = rest[close + 1..].trim_start_matches(';').trim();
    let part = match tail.strip_prefix("part") {
        Some(p) => p.trim().parse::<u32>().ok()?,
        None => 0,
    };
    Some(format!("{name}_{part}"))
}

fn parse_coref_cell(cell: &str, word: usize, doc: &mut OpenDoc, line_no: usize) -> Result<()> {
    if cell == "-" {
        return Ok(());
    }
    for item in cell.split('|') {
        let bad = || Error::ParseLine {
            line: line_no,
            message: format!("malformed coreference item {item:?}"),
        };
        let opens = item.starts_with('(');
        let closes = item.ends_with(')');
        let digits = item.trim_start_matches('(').trim_end_matches(')');
        let id: u64 = digits.parse().map_err(|_| bad())?;
        match (opens, closes) {
            (true, true) => doc.clusters.entry(id).or_default().push(Span::new(word, word)),
            (true, false) => doc.open.entry(id).or_default().push(word),
            (false, true) => {
                let start = doc
                    .open
                    .get_mut(&id)
                    .and_then(|v| v.pop())
                    .ok_or_else(|| Error::ParseDocument {
                        doc_key: doc.key.clone(),
                        message: format!(
                            "unbalanced coreference parentheses: cluster {id} closed at line {line_no} without opening"
                        ),
                    })?;
                doc.clusters.entry(id).or_default().push(Span::new(start, word));
            }
            (false, false) => return Err(bad()),
        }
    }
    Ok(())
}

pub fn parse_conll_str(text: &str) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut current: Option<OpenDoc> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end();
        if line.starts_with("#begin document") {
            if let Some(doc) = current.take() {
                return Err(Error::ParseDocument {
                    doc_key: doc.key,
                    message: "missing #end document".into(),
                });
            }
            let key = parse_begin(line).ok_or_else(|| Error::ParseLine {
                line: line_no,
                message: format!("malformed document header {line:?}"),
            })?;
            current = Some(OpenDoc::new(key));
            continue;
        }
        if line.starts_with("#end document") {
            let doc = current.take().ok_or_else(|| Error::ParseLine {
                line: line_no,
                message: "#end document without #begin document".into(),
            })?;
            docs.push(doc.finish()?);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let Some(doc) = current.as_mut() else {
            if line.trim().is_empty() {
                continue;
            }
            return Err(Error::ParseLine {
                line: line_no,
                message: "token line outside a document".into(),
            });
        };
        if line.trim().is_empty() {
            if doc.sentence_has_words {
                doc.sentence += 1;
                doc.sentence_has_words = false;
            }
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() < MIN_COLUMNS {
            return Err(Error::ParseLine {
                line: line_no,
                message: format!("expected at least {MIN_COLUMNS} columns, found {}", cols.len()),
            });
        }
        let word = doc.tokens.len();
        let speaker = match cols[SPEAKER_COL] {
            "-" => None,
            s => Some(s.to_string()),
        };
        doc.tokens.push(Token {
            text: cols[WORD_COL].to_string(),
            word_index: word,
            sentence_index: doc.sentence,
            speaker,
        });
        doc.sentence_has_words = true;
        parse_coref_cell(cols[cols.len() - 1], word, doc, line_no)?;
    }
    if let Some(doc) = current {
        return Err(Error::ParseDocument {
            doc_key: doc.key,
            message: "missing #end document".into(),
        });
    }
    Ok(docs)
}

/// Splits `name_part` back into the header name and numeric part.
fn split_key(doc_key: &str) -> (&str, u32) {
    if let Some((name, part)) = doc_key.rsplit_once('_') {
        if let Ok(p) = part.parse::<u32>() {
            return (name, p);
        }
    }
    (doc_key, 0)
}

/// Coreference cells for every word of `doc` under `clusters`.
fn coref_cells(doc: &Document, clusters: &[Vec<Span>]) -> Result<Vec<String>> {
    let n = doc.len();
    let mut owner: HashMap<Span, usize> = HashMap::new();
    // (cluster id, span) grouped by start and end word.
    let mut opens: Vec<Vec<(usize, Span)>> = vec![Vec::new(); n];
    let mut singles: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut closes: Vec<Vec<(usize, Span)>> = vec![Vec::new(); n];
    for (id, cluster) in clusters.iter().enumerate() {
        let mut spans = cluster.clone();
        spans.sort();
        spans.dedup();
        for (k, a) in spans.iter().enumerate() {
            if let Some(b) = spans[k + 1..]
                .iter()
                .find(|b| b.start > a.start && b.start < a.end && b.end > a.end)
            {
                log::warn!(
                    "{}: spans {a} and {b} of cluster {id} cross; bracket notation cannot keep both",
                    doc.doc_key
                );
            }
        }
        for s in spans {
            if s.start > s.end || s.end >= n {
                return Err(Error::Serialize(format!(
                    "{}: span {s} out of bounds for {n} words",
                    doc.doc_key
                )));
            }
            if let Some(prev) = owner.insert(s, id) {
                return Err(Error::Serialize(format!(
                    "{}: span {s} assigned to clusters {prev} and {id}",
                    doc.doc_key
                )));
            }
            if s.start == s.end {
                singles[s.start].push(id);
            } else {
                opens[s.start].push((id, s));
                closes[s.end].push((id, s));
            }
        }
    }
    let mut cells = Vec::with_capacity(n);
    for w in 0..n {
        let mut items: Vec<String> = Vec::new();
        // Spans ending here started earlier and spans starting here end later,
        // so closing first keeps spans that share this word apart. Among
        // themselves, outer spans open first and close last.
        opens[w].sort_by(|a, b| b.1.end.cmp(&a.1.end).then(a.0.cmp(&b.0)));
        closes[w].sort_by(|a, b| b.1.start.cmp(&a.1.start).then(a.0.cmp(&b.0)));
        items.extend(closes[w].iter().map(|(id, _)| format!("{id})")));
        items.extend(singles[w].iter().map(|id| format!("({id})")));
        items.extend(opens[w].iter().map(|(id, _)| format!("({id}")));
        cells.push(if items.is_empty() {
            "-".to_string()
        } else {
            items.join("|")
        });
    }
    Ok(cells)
}

/// Serializes documents with the given cluster structure per document.
pub fn write_conll_string(docs: &[Document], clusters: &[Vec<Vec<Span>>]) -> Result<String> {
    if docs.len() != clusters.len() {
        return Err(Error::Serialize(format!(
            "{} documents but {} cluster sets",
            docs.len(),
            clusters.len()
        )));
    }
    let mut out = String::new();
    for (doc, doc_clusters) in docs.iter().zip(clusters) {
        let cells = coref_cells(doc, doc_clusters)?;
        let (name, part) = split_key(&doc.doc_key);
        writeln!(out, "#begin document ({name}); part {part:03}").unwrap();
        let mut in_sentence = 0usize;
        for (w, tok) in doc.tokens.iter().enumerate() {
            if w > 0 && tok.sentence_index != doc.tokens[w - 1].sentence_index {
                out.push('\n');
                in_sentence = 0;
            }
            if tok.text.is_empty() || tok.text.chars().any(char::is_whitespace) {
                return Err(Error::Serialize(format!(
                    "{}: word {w} ({:?}) is empty or contains whitespace",
                    doc.doc_key, tok.text
                )));
            }
            let speaker = tok.speaker.as_deref().unwrap_or("-");
            if speaker.chars().any(char::is_whitespace) {
                return Err(Error::Serialize(format!(
                    "{}: speaker {speaker:?} contains whitespace",
                    doc.doc_key
                )));
            }
            writeln!(
                out,
                "{name}\t{part}\t{in_sentence}\t{}\t-\t-\t-\t-\t-\t{speaker}\t*\t{}",
                tok.text, cells[w]
            )
            .unwrap();
            in_sentence += 1;
        }
        if !doc.tokens.is_empty() {
            out.push('\n');
        }
        out.push_str("#end document\n");
    }
    Ok(out)
}

pub fn write_conll(docs: &[Document], clusters: &[Vec<Vec<Span>>], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = write_conll_string(docs, clusters)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
