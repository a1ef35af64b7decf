//! Templated email-like documents with injected PII.
//!
//! Each document picks a frame, fills word slots from small synonym clusters
//! and fills each PII slot with a PII value (with probability `pii_density`)
//! or a benign filler phrase. Names, emails and phones belong to a small
//! per-seed roster of people, so the same contacts recur across documents
//! the way correspondents do in a mailbox; each document has one recipient
//! and one sender. Dates and links are drawn fresh.

use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::rng::{stream_rng, Stream};
use crate::{Error, Result};

use super::{Corpus, Document, PiiKind, PiiSpan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub n_docs: usize,
    pub pii_density: f64,
    pub seed: u64,
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_docs == 0 {
            return Err(Error::Config("corpus.n_docs must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.pii_density) {
            return Err(Error::Config(format!(
                "corpus.pii_density must be in [0, 1], got {}",
                self.pii_density
            )));
        }
        Ok(())
    }
}

/// Synonym clusters: (POS tag, members). Members of a cluster are
/// interchangeable in a frame and are embedded close together.
const CLUSTERS: &[(&str, &[&str])] = &[
    ("INTJ", &["hi", "hello", "hey"]),
    ("ADJ", &["happy", "glad", "pleased"]),
    ("ADJ", &["quick", "fast", "rapid"]),
    ("ADJ", &["important", "crucial", "vital"]),
    ("ADJ", &["new", "recent", "latest"]),
    ("ADJ", &["final", "complete", "finished"]),
    ("ADJ", &["large", "big", "huge"]),
    ("ADJ", &["small", "minor", "modest"]),
    ("ADJ", &["urgent", "pressing", "critical"]),
    ("ADJ", &["quarterly", "monthly", "weekly"]),
    ("NOUN", &["meeting", "session", "conference"]),
    ("NOUN", &["report", "summary", "memo"]),
    ("NOUN", &["contract", "agreement", "deal"]),
    ("NOUN", &["schedule", "plan", "timeline"]),
    ("NOUN", &["question", "query", "concern"]),
    ("NOUN", &["price", "cost", "rate"]),
    ("NOUN", &["team", "group", "staff"]),
    ("NOUN", &["office", "building", "site"]),
    ("NOUN", &["budget", "forecast", "estimate"]),
    ("NOUN", &["pipeline", "plant", "facility"]),
    ("NOUN", &["customer", "client", "buyer"]),
    ("NOUN", &["issue", "problem", "risk"]),
    ("NOUN", &["position", "exposure", "book"]),
    ("NOUN", &["presentation", "slides", "deck"]),
    ("VERB", &["send", "forward", "deliver"]),
    ("VERB", &["review", "check", "examine"]),
    ("VERB", &["discuss", "cover", "address"]),
    ("VERB", &["confirm", "verify", "approve"]),
    ("VERB", &["call", "phone", "ring"]),
    ("VERB", &["update", "revise", "change"]),
    ("VERB", &["finish", "close", "wrap"]),
    ("VERB", &["share", "circulate", "distribute"]),
    ("ADV", &["soon", "shortly", "promptly"]),
    ("ADV", &["today", "tonight", "now"]),
    ("ADV", &["carefully", "closely", "thoroughly"]),
    ("INTJ", &["thanks", "cheers", "regards"]),
];

const STOPWORDS: &[&str] = &[
    "a", "about", "an", "and", "any", "at", "be", "before", "by", "can", "for", "from", "i", "if",
    "in", "is", "it", "me", "my", "of", "on", "or", "our", "please", "the", "this", "to", "us",
    "we", "will", "with", "you", "your", "am", "are", "also", "let", "know",
];

const FIRST_NAMES: &[&str] = &[
    "John", "Mary", "Robert", "Linda", "James", "Susan", "Michael", "Karen", "David", "Nancy",
    "Daniel", "Laura", "Steven", "Sarah", "Kevin", "Emily", "Brian", "Anna", "Jeff", "Kim",
    "Mark", "Sally", "Greg", "Louise", "Andrew", "Tana", "Mike", "Vince", "Rick", "Sherri",
];
const LAST_NAMES: &[&str] = &[
    "Smith", "Lay", "Skilling", "Fastow", "Kitchen", "Delainey", "Shankman", "Buy", "Causey",
    "Kean", "Whalley", "Lavorato", "Haedicke", "Dorland", "Presto", "Beck", "Shively", "Tycholiz",
    "Grigsby", "Allen", "Taylor", "Jones", "Germany", "Mann", "Symes", "Watson", "Farmer", "Hyatt",
    "Nemec", "Sager",
];
const DOMAINS: &[&str] = &[
    "enron", "acme", "globex", "initech", "hooli", "vandelay", "umbrella", "stark", "wayne",
    "tyrell", "cyberdyne", "wonka",
];
const TLDS: &[&str] = &["com", "net", "org"];
const LINK_PATHS: &[&str] = &[
    "docs", "files", "deals", "news", "home", "trading", "reports", "legal", "gas", "power",
];
const MONTHS: &[&str] = &[
    "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec",
];
const PHONE_PREFIXES: &[&str] = &["555", "713", "281"];

/// Syllables for project code names; two or three per name.
const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr"];
const NUCLEI: &[&str] = &["a", "e", "i", "o", "u", "ai", "or"];

/// Document frames. `{word}` names the cluster containing `word`;
/// `{PHONE}`, `{EMAIL}`, `{NAME}`, `{DATE}`, `{LINK}` are PII slots and
/// `{TOPIC}` is a fresh project code name.
const FRAMES: &[&str] = &[
    "{hi} {NAME}, i am {happy} to {send} the {new} {report} on the {TOPIC} {contract}. \
     please {call} me at {PHONE} {soon} or write to {EMAIL}. {thanks}, {NAME}",
    "{hi} team, the {meeting} about the {price} for {TOPIC} is moved to {DATE}. \
     the {final} {schedule} is posted at {LINK}. {call} {NAME} at {PHONE} with any {question}.",
    "{hi}, can you {review} the {TOPIC} {contract} before {DATE}? it is {important} for the {team}. \
     send your {report} to {EMAIL} {today}. {thanks}, {NAME}",
    "{hi} {NAME}, we need to {discuss} the {price} of the {new} {TOPIC} {contract}. \
     my line is {PHONE} and my email is {EMAIL}. {thanks}",
    "{hi} all, the {office} {meeting} on {DATE} will {cover} the {quick} {TOPIC} {schedule}. \
     please {confirm} with {NAME} {soon}. details at {LINK}.",
    "{hi}, i will {send} the {final} {report} {soon}. the {team} wants to {examine} the {TOPIC} {price} \
     by {DATE}. reach me at {PHONE}. {thanks}, {NAME}",
    "{hi} {NAME}, the {quarterly} {budget} for {TOPIC} has a {large} {issue}. \
     we should {update} the {forecast} before {DATE}. {call} me at {PHONE}. {regards}, {NAME}",
    "{hi}, {NAME} asked me to {share} the {presentation} on the {TOPIC} {pipeline}. \
     the {customer} wants a {small} edit to the {position}. see {LINK} or mail {EMAIL}.",
    "{hi} {NAME}, our {exposure} on {TOPIC} and {TOPIC} looks {urgent}. \
     can we {finish} the {review} {today}? i am at {PHONE}. {thanks}",
    "{hi} all, {TOPIC} signed the {deal} on {DATE}. please {carefully} {check} the {agreement} \
     and {send} any {question} to {EMAIL}. {cheers}, {NAME}",
];

fn topic_name(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(2..=3);
    (0..n)
        .map(|_| {
            let onset = ONSETS.choose(rng).expect("non-empty");
            let nucleus = NUCLEI.choose(rng).expect("non-empty");
            format!("{onset}{nucleus}")
        })
        .collect()
}

fn fill_benign(kind: PiiKind) -> &'static str {
    match kind {
        PiiKind::Phone => "my desk line",
        PiiKind::Email => "the usual address",
        PiiKind::Name => "the desk",
        PiiKind::Date => "next week",
        PiiKind::Link => "the shared drive",
    }
}

fn cluster_of(word: &str) -> Option<&'static [&'static str]> {
    CLUSTERS
        .iter()
        .find(|(_, members)| members.contains(&word))
        .map(|(_, m)| *m)
}

const ROSTER_PEOPLE: usize = 12;

struct Person {
    name: String,
    email: String,
    phone: String,
}

struct Roster {
    people: Vec<Person>,
}

impl Roster {
    fn new(seed: u64) -> Self {
        let mut rng = stream_rng(seed, Stream::Corpus, &[1]);
        let pick = |xs: &[&'static str], rng: &mut ChaCha8Rng| *xs.choose(rng).expect("non-empty");
        let firsts: Vec<&str> = FIRST_NAMES.choose_multiple(&mut rng, ROSTER_PEOPLE).copied().collect();
        let lasts: Vec<&str> = LAST_NAMES.choose_multiple(&mut rng, ROSTER_PEOPLE).copied().collect();
        let people = firsts
            .iter()
            .zip(&lasts)
            .map(|(first, last)| Person {
                name: format!("{first} {last}"),
                email: format!(
                    "{}.{}@{}.{}",
                    first.to_lowercase(),
                    last.to_lowercase(),
                    pick(DOMAINS, &mut rng),
                    pick(TLDS, &mut rng)
                ),
                phone: format!("{}-{:04}", pick(PHONE_PREFIXES, &mut rng), rng.random_range(0..10_000)),
            })
            .collect();
        Self { people }
    }
}

/// The two correspondents of one document: a greeted recipient and a
/// sender who owns every other name, phone and email slot.
struct Parties<'a> {
    recipient: &'a Person,
    sender: &'a Person,
}

fn pii_value(kind: PiiKind, person: &Person, rng: &mut ChaCha8Rng) -> String {
    let pick = |xs: &[&'static str], rng: &mut ChaCha8Rng| *xs.choose(rng).expect("non-empty");
    match kind {
        PiiKind::Phone => person.phone.clone(),
        PiiKind::Email => person.email.clone(),
        PiiKind::Name => person.name.clone(),
        PiiKind::Date => format!(
            "{} {} {}",
            rng.random_range(1..=28),
            pick(MONTHS, rng),
            rng.random_range(1998..=2003)
        ),
        PiiKind::Link => format!("http://www.{}.com/{}", pick(DOMAINS, rng), pick(LINK_PATHS, rng)),
    }
}

fn slot_kind(name: &str) -> Option<PiiKind> {
    match name {
        "PHONE" => Some(PiiKind::Phone),
        "EMAIL" => Some(PiiKind::Email),
        "NAME" => Some(PiiKind::Name),
        "DATE" => Some(PiiKind::Date),
        "LINK" => Some(PiiKind::Link),
        _ => None,
    }
}

fn capitalize_sentences(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut upper_next = true;
    let mut prev = ' ';
    for ch in text.chars() {
        if ch.is_whitespace() && matches!(prev, '.' | '?' | '!') {
            upper_next = true;
        }
        if upper_next && ch.is_alphabetic() {
            out.extend(ch.to_uppercase());
            upper_next = false;
        } else {
            out.push(ch);
        }
        prev = ch;
    }
    out
}

fn render(frame: &str, density: f64, parties: &Parties<'_>, rng: &mut ChaCha8Rng) -> (String, Vec<PiiSpan>) {
    let mut text = String::new();
    let mut spans = Vec::new();
    let mut rest = frame;
    let mut greeting = false;
    while let Some(open) = rest.find('{') {
        text.push_str(&rest[..open]);
        let close = open + rest[open..].find('}').expect("frame braces balanced");
        let name = &rest[open + 1..close];
        if name == "TOPIC" {
            text.push_str(&topic_name(rng));
        } else if let Some(kind) = slot_kind(name) {
            let person = if greeting { parties.recipient } else { parties.sender };
            if rng.random_bool(density) {
                let surface = pii_value(kind, person, rng);
                text.push_str(&surface);
                spans.push(PiiSpan { kind, surface });
            } else {
                text.push_str(fill_benign(kind));
            }
        } else {
            let members = cluster_of(name).expect("frame slot names a cluster");
            text.push_str(members.choose(rng).expect("non-empty"));
        }
        greeting = name == "hi" && rest[close + 1..].starts_with(" {NAME}");
        rest = &rest[close + 1..];
    }
    text.push_str(rest);
    // No PII slot opens a sentence, so capitalization leaves surfaces intact.
    (capitalize_sentences(&text), spans)
}

/// Deterministic synthetic corpus; a pure function of `spec`.
pub fn generate_synthetic_corpus(spec: &CorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let roster = Roster::new(spec.seed);
    let mut rng = stream_rng(spec.seed, Stream::Corpus, &[]);
    let docs = (0..spec.n_docs)
        .map(|id| {
            let frame = FRAMES.choose(&mut rng).expect("non-empty");
            let pair: Vec<&Person> = roster.people.choose_multiple(&mut rng, 2).collect();
            let parties = Parties {
                recipient: pair[0],
                sender: pair[1],
            };
            let (text, pii_spans) = render(frame, spec.pii_density, &parties, &mut rng);
            Document { id, text, pii_spans }
        })
        .collect();
    Corpus::from_documents(docs)
}

/// Regexes recognising each synthetic PII format in raw document text.
pub fn pii_patterns() -> Vec<(PiiKind, Regex)> {
    let names = format!(
        r"\b(?:{})\s(?:{})\b",
        FIRST_NAMES.join("|"),
        LAST_NAMES.join("|")
    );
    let months = MONTHS.join("|");
    vec![
        (PiiKind::Phone, Regex::new(r"\b\d{3}-\d{4}\b").expect("valid")),
        (
            PiiKind::Email,
            Regex::new(r"\b[a-z]+\.[a-z]+@[a-z]+\.[a-z]+\b").expect("valid"),
        ),
        (PiiKind::Name, Regex::new(&names).expect("valid")),
        (
            PiiKind::Date,
            Regex::new(&format!(r"\b\d{{1,2}} (?:{months}) \d{{4}}\b")).expect("valid"),
        ),
        (
            PiiKind::Link,
            Regex::new(r"http://www\.[a-z]+\.com/[a-z]+").expect("valid"),
        ),
    ]
}

/// Plain-text resources for synonym perturbation over the synthetic
/// vocabulary: a word-vector table, a POS lexicon and a stoplist.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    /// `word v1 ... vd` per line, preceded by a `count dim` header.
    pub embeddings: String,
    /// `word<TAB>tag` per line.
    pub pos: String,
    /// One word per line.
    pub stoplist: String,
}

/// Cluster members are placed near a shared random centre so that
/// nearest neighbours by cosine similarity are their synonyms.
pub fn synthetic_lexicon(dim: usize, seed: u64) -> Lexicon {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = stream_rng(seed, Stream::Corpus, &[u64::MAX]);
    let mut embeddings = String::new();
    let mut pos = String::new();
    let n_words: usize = CLUSTERS.iter().map(|(_, m)| m.len()).sum();
    let _ = writeln!(embeddings, "{n_words} {dim}");
    for (tag, members) in CLUSTERS {
        let centre: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        for word in *members {
            let _ = write!(embeddings, "{word}");
            for c in &centre {
                let noise: f64 = StandardNormal.sample(&mut rng);
                let _ = write!(embeddings, " {:.6}", c + 0.15 * noise);
            }
            embeddings.push('\n');
            let _ = writeln!(pos, "{word}\t{tag}");
        }
    }
    let mut stoplist = STOPWORDS.join("\n");
    stoplist.push('\n');
    Lexicon {
        embeddings,
        pos,
        stoplist,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_density_has_no_pii() {
        let c = generate_synthetic_corpus(&CorpusSpec {
            n_docs: 1,
            pii_density: 0.0,
            seed: 7,
        })
        .unwrap();
        assert_eq!(c.len(), 1);
        assert!(c.docs()[0].pii_spans.is_empty());
        for (_, re) in pii_patterns() {
            assert!(!re.is_match(&c.docs()[0].text), "{}", c.docs()[0].text);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = CorpusSpec {
            n_docs: 100,
            pii_density: 0.5,
            seed: 7,
        };
        let a = generate_synthetic_corpus(&spec).unwrap();
        let b = generate_synthetic_corpus(&spec).unwrap();
        assert_eq!(a, b);
        let other = generate_synthetic_corpus(&CorpusSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn full_density_every_document_scans_positive() {
        let c = generate_synthetic_corpus(&CorpusSpec {
            n_docs: 100,
            pii_density: 1.0,
            seed: 3,
        })
        .unwrap();
        let patterns = pii_patterns();
        for doc in &c {
            assert!(!doc.pii_spans.is_empty());
            let found = patterns.iter().any(|(_, re)| re.is_match(&doc.text));
            assert!(found, "no PII pattern in {:?}", doc.text);
        }
    }

    #[test]
    fn spans_are_verbatim_and_match_their_pattern() {
        let c = generate_synthetic_corpus(&CorpusSpec {
            n_docs: 200,
            pii_density: 0.7,
            seed: 11,
        })
        .unwrap();
        let patterns = pii_patterns();
        for doc in &c {
            for span in &doc.pii_spans {
                assert!(doc.text.contains(&span.surface));
                let (_, re) = patterns.iter().find(|(k, _)| *k == span.kind).unwrap();
                assert!(re.is_match(&span.surface), "{:?}", span);
            }
        }
    }

    #[test]
    fn invalid_spec_is_config_error() {
        let bad = CorpusSpec {
            n_docs: 0,
            pii_density: 0.5,
            seed: 1,
        };
        assert!(matches!(generate_synthetic_corpus(&bad), Err(Error::Config(_))));
        let bad = CorpusSpec {
            n_docs: 3,
            pii_density: 1.5,
            seed: 1,
        };
        assert!(matches!(generate_synthetic_corpus(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn contacts_recur_across_documents() {
        let c = generate_synthetic_corpus(&CorpusSpec {
            n_docs: 200,
            pii_density: 1.0,
            seed: 5,
        })
        .unwrap();
        let mut names = std::collections::BTreeMap::<&str, usize>::new();
        for span in c.docs().iter().flat_map(|d| &d.pii_spans) {
            if span.kind == PiiKind::Name {
                *names.entry(span.surface.as_str()).or_default() += 1;
            }
        }
        assert!(names.len() <= ROSTER_PEOPLE);
        assert!(names.values().any(|&n| n >= 5));
    }

    #[test]
    fn lexicon_covers_cluster_words() {
        let lex = synthetic_lexicon(8, 1);
        let n: usize = CLUSTERS.iter().map(|(_, m)| m.len()).sum();
        assert_eq!(lex.embeddings.lines().count(), n + 1);
        assert_eq!(lex.pos.lines().count(), n);
        assert!(lex.stoplist.lines().any(|w| w == "the"));
    }
}
