//! Seeded generators for small corpora with unambiguous coreference.
//!
//! Narrative documents follow this grammar, one woman `F`, one man `M` and
//! one object `T` ("the book") per document:
//!
//! ```text
//! opening  := F met M near the PLACE .
//! sentence := he thanked her . | she smiled at him . | F waved at M .
//!           | her friend called him . | she laughed . | he left early .
//!           | M smiled . | the PLACE was quiet . | she gave him T .
//!           | he put T on the table . | M took it home . | F said it was ADJ .
//! ```
//!
//! Names, she/her and he/him resolve by gender; `it` and the object noun
//! phrase resolve to `T`. `it` only appears after `T` was mentioned, and no
//! entity is mentioned more than [`MAX_CLUSTER_SIZE`] times.
//!
//! Dialogue documents have `k` speakers taking turns. Each utterance is
//! `I VERB the OBJECT .` or `I VERB NAME .` where `NAME` is another
//! speaker. A speaker's `I` mentions and the mentions of their name form
//! one cluster, so resolving a name needs the speaker identity.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{CharSpan, GapCandidate, GapExample, Gender, QaExample};
use crate::types::{Document, Span};

const WOMEN: &[&str] = &[
    "Alice", "Maria", "Emma", "Sofia", "Grace", "Julia", "Nora", "Clara", "Ella", "Laura",
];
const MEN: &[&str] = &[
    "Bob", "David", "Omar", "Lucas", "Peter", "Hugo", "Ivan", "Tom", "Felix", "Max",
];
const THINGS: &[&str] = &["book", "lamp", "letter", "cake", "map", "key"];
const PLACES: &[&str] = &["park", "station", "river", "market", "school"];
const ADJS: &[&str] = &["old", "new", "red", "heavy", "small"];
const VERBS: &[&str] = &["like", "see", "know", "want", "trust"];
const SPEAKERS: &[&str] = &[
    "Anna", "Ben", "Carl", "Dora", "Eli", "Finn", "Gina", "Hana", "Igor", "Jana",
];

/// Slot a template word fills.
#[derive(Clone, Copy, PartialEq)]
enum Slot {
    Word(&'static str),
    Woman,
    Man,
    She,
    Her,
    He,
    Him,
    Thing,
    It,
    Place,
    Adj,
}

use Slot::*;

const OPENING: &[Slot] = &[Woman, Word("met"), Man, Word("near"), Word("the"), Place, Word(".")];
const TEMPLATES: &[&[Slot]] = &[
    &[He, Word("thanked"), Her, Word(".")],
    &[She, Word("smiled"), Word("at"), Him, Word(".")],
    &[Woman, Word("waved"), Word("at"), Man, Word(".")],
    &[Her, Word("friend"), Word("called"), Him, Word(".")],
    &[She, Word("laughed"), Word(".")],
    &[He, Word("left"), Word("early"), Word(".")],
    &[Man, Word("smiled"), Word(".")],
    &[Word("The"), Place, Word("was"), Word("quiet"), Word(".")],
    &[She, Word("gave"), Him, Thing, Word(".")],
    &[
        He,
        Word("put"),
        Thing,
        Word("on"),
        Word("the"),
        Word("table"),
        Word("."),
    ],
    &[Man, Word("took"), It, Word("home"), Word(".")],
    &[Woman, Word("said"), It, Word("was"), Adj, Word(".")],
];

/// Most mentions any entity gets in a narrative document.
pub const MAX_CLUSTER_SIZE: usize = 3;

fn cluster_of(slot: Slot) -> Option<usize> {
    match slot {
        Woman | She | Her => Some(0),
        Man | He | Him => Some(1),
        Thing | It => Some(2),
        _ => None,
    }
}

/// Clusters under construction: woman, man, thing.
struct Builder {
    words: Vec<Vec<String>>,
    clusters: [Vec<Span>; 3],
    len: usize,
}

impl Builder {
    fn sentence(&mut self, template: &[Slot], woman: &str, man: &str, thing: &str, rng: &mut ChaCha8Rng) {
        let mut words = Vec::new();
        for slot in template {
            let start = self.len + words.len();
            let (text, cluster): (Vec<String>, Option<usize>) = match *slot {
                Word(w) => (vec![w.into()], None),
                Woman => (vec![woman.into()], None),
                Man => (vec![man.into()], None),
                She => (vec!["she".into()], None),
                Her => (vec!["her".into()], None),
                He => (vec!["he".into()], None),
                Him => (vec!["him".into()], None),
                Thing => (vec!["the".into(), thing.into()], None),
                It => (vec!["it".into()], None),
                Place => (vec![(*PLACES.choose(rng).unwrap()).into()], None),
                Adj => (vec![(*ADJS.choose(rng).unwrap()).into()], None),
            };
            let cluster = cluster.or(cluster_of(*slot));
            if let Some(c) = cluster {
                self.clusters[c].push(Span::new(start, start + text.len() - 1));
            }
            words.extend(text);
        }
        if let Some(first) = words.first_mut() {
            let mut cs = first.chars();
            if let Some(c) = cs.next() {
                *first = c.to_uppercase().chain(cs).collect();
            }
        }
        self.len += words.len();
        self.words.push(words);
    }
}

fn finish(
    doc_key: String,
    words: Vec<Vec<String>>,
    speakers: Option<Vec<String>>,
    clusters: Vec<Vec<Span>>,
) -> Document {
    let sentences: Vec<Vec<&str>> = words.iter().map(|s| s.iter().map(String::as_str).collect()).collect();
    let speaker_refs: Option<Vec<&str>> = speakers.as_ref().map(|s| s.iter().map(String::as_str).collect());
    let mut clusters: Vec<Vec<Span>> = clusters
        .into_iter()
        .filter(|c| c.len() >= 2)
        .map(|mut c| {
            c.sort();
            c
        })
        .collect();
    clusters.sort();
    Document::from_sentences(doc_key, &sentences, speaker_refs.as_deref(), clusters)
}

/// One narrative document with `sentences` sentences (at least 2).
pub fn narrative_document(doc_key: &str, sentences: usize, rng: &mut ChaCha8Rng) -> Document {
    let woman = *WOMEN.choose(rng).unwrap();
    let man = *MEN.choose(rng).unwrap();
    let thing = *THINGS.choose(rng).unwrap();
    let mut b = Builder {
        words: Vec::new(),
        clusters: Default::default(),
        len: 0,
    };
    b.sentence(OPENING, woman, man, thing, rng);
    for k in 1..sentences.max(2) {
        let allowed: Vec<&[Slot]> = TEMPLATES
            .iter()
            .copied()
            .filter(|t| {
                let mut count = [0; 3];
                for c in t.iter().filter_map(|&s| cluster_of(s)) {
                    count[c] += 1;
                }
                let introduced = !b.clusters[2].is_empty();
                (introduced || !t.contains(&It))
                    && (k > 1 || count.iter().any(|&n| n > 0))
                    && (0..3).all(|c| b.clusters[c].len() + count[c] <= MAX_CLUSTER_SIZE)
            })
            .collect();
        let Some(template) = allowed.choose(rng) else { break };
        b.sentence(template, woman, man, thing, rng);
    }
    let [w, m, t] = b.clusters;
    finish(doc_key.to_string(), b.words, None, vec![w, m, t])
}

/// `n` narrative documents of 3 to 5 sentences keyed `synth/NNNN`.
pub fn narrative_corpus(n: usize, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let len = rng.random_range(3..=5);
            narrative_document(&format!("synth/{i:04}"), len, &mut rng)
        })
        .collect()
}

/// One dialogue among `speakers` distinct speakers with `turns` utterances.
pub fn dialogue_document(doc_key: &str, speakers: usize, turns: usize, rng: &mut ChaCha8Rng) -> Document {
    let speakers = speakers.clamp(1, SPEAKERS.len());
    let mut cast: Vec<&str> = SPEAKERS.to_vec();
    cast.shuffle(rng);
    cast.truncate(speakers);
    let mut order: Vec<usize> = (0..speakers).collect();
    while order.len() < turns {
        order.push(rng.random_range(0..speakers));
    }
    order.shuffle(rng);
    let mut clusters = vec![Vec::new(); speakers];
    let mut words = Vec::new();
    let mut who = Vec::new();
    let mut len = 0;
    for &s in &order {
        let verb = *VERBS.choose(rng).unwrap();
        clusters[s].push(Span::new(len, len));
        let mut sentence = vec!["I".to_string(), verb.to_string()];
        let others: Vec<usize> = (0..speakers).filter(|&o| o != s).collect();
        if !others.is_empty() && rng.random_bool(0.6) {
            let o = *others.choose(rng).unwrap();
            clusters[o].push(Span::new(len + 2, len + 2));
            sentence.push(cast[o].to_string());
        } else {
            sentence.push("the".into());
            sentence.push((*THINGS.choose(rng).unwrap()).into());
        }
        sentence.push(".".into());
        len += sentence.len();
        words.push(sentence);
        who.push(cast[s].to_string());
    }
    finish(doc_key.to_string(), words, Some(who), clusters)
}

/// `n` dialogues with speaker counts cycling through `1..=max_speakers` and
/// about two turns per speaker.
pub fn dialogue_corpus(n: usize, max_speakers: usize, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let k = 1 + i % max_speakers.max(1);
            let turns = 2 * k + rng.random_range(0..2);
            dialogue_document(&format!("dialogue/{i:04}"), k, turns, &mut rng)
        })
        .collect()
}

fn join(doc: &Document) -> (String, Vec<CharSpan>) {
    let mut text = String::new();
    let mut spans = Vec::new();
    for t in &doc.tokens {
        if !text.is_empty() {
            text.push(' ');
        }
        let start = text.chars().count();
        text.push_str(&t.text);
        spans.push(CharSpan::new(start, text.chars().count()));
    }
    (text, spans)
}

fn char_span(words: &[CharSpan], span: Span) -> CharSpan {
    CharSpan::new(words[span.start].start, words[span.end].end)
}

/// Extractive questions over narrative contexts: "who met NAME ?" and
/// "what did NAME take ?" style questions whose answers are every mention of
/// the asked-about entity. Every fifth question names someone absent from
/// the context and is unanswerable.
pub fn qa_corpus(n: usize, seed: u64) -> Vec<QaExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let len = rng.random_range(3..=5);
            let doc = narrative_document(&format!("qa/{i:04}"), len, &mut rng);
            let (context, words) = join(&doc);
            let woman = doc.tokens[0].text.clone();
            let man = doc.tokens[2].text.clone();
            let cluster_of = |w: usize| {
                doc.gold_clusters
                    .iter()
                    .find(|c| c.iter().any(|s| s.start == w))
                    .cloned()
            };
            let (question, answers) = if i % 5 == 4 {
                let absent = MEN.iter().find(|m| **m != man).unwrap();
                (format!("Who did {absent} meet ?"), Vec::new())
            } else if rng.random_bool(0.5) {
                let spans = cluster_of(0).unwrap_or_else(|| vec![Span::new(0, 0)]);
                (format!("Who met {man} ?"), spans)
            } else {
                let spans = cluster_of(2).unwrap_or_else(|| vec![Span::new(2, 2)]);
                (format!("Who did {woman} meet ?"), spans)
            };
            QaExample {
                id: format!("qa-{i:04}"),
                context,
                question,
                answers: answers.into_iter().map(|s| char_span(&words, s)).collect(),
            }
        })
        .collect()
}

/// Pronoun-resolution examples in the GAP layout built from narrative text:
/// the pronoun is the first she/he/her/him after the opening, candidates are
/// the two names.
pub fn gap_examples(n: usize, seed: u64) -> Vec<GapExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut i = 0;
    while out.len() < n {
        let doc = narrative_document(&format!("gap/{i:04}"), 3, &mut rng);
        i += 1;
        let Some((p, gender)) = doc
            .tokens
            .iter()
            .enumerate()
            .skip(7)
            .find_map(|(k, t)| Gender::of_pronoun(&t.text).map(|g| (k, g)))
        else {
            continue;
        };
        let (text, words) = join(&doc);
        let a_is_woman = rng.random_bool(0.5);
        let (a, b) = if a_is_woman { (0, 2) } else { (2, 0) };
        let woman_gold = gender == Gender::Feminine;
        out.push(GapExample {
            example_id: format!("synth-gap-{:04}", out.len()),
            text,
            pronoun: words[p],
            candidate_a: GapCandidate {
                span: words[a],
                label: woman_gold == a_is_woman,
            },
            candidate_b: GapCandidate {
                span: words[b],
                label: woman_gold != a_is_woman,
            },
            pronoun_gender: gender,
        });
    }
    out
}
