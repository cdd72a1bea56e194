//! Loss-event ingestion and description cleaning.
//!
//! A description goes through NFC normalization, lowercase folding, removal of
//! punctuation, digits and any character outside the allowed alphabet,
//! whitespace splitting, stop-word removal and a dictionary lemma lookup.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// Maximum description length in characters.
pub const MAX_DESCRIPTION_CHARS: usize = 250;

/// Column names of the corpus CSV, in file order.
pub const CORPUS_COLUMNS: [&str; 5] = [
    "event_id",
    "date_accounting",
    "event_type",
    "gross_loss",
    "description",
];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("duplicate event_id `{id}` at row {row}")]
    DuplicateKey { id: String, row: usize },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("invalid cleaning config: {0}")]
    InvalidConfig(String),
}

/// Basel level-1 event type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventType {
    InternalFraud,
    ExternalFraud,
    EmploymentPractices,
    ClientsProducts,
    DamageToAssets,
    BusinessDisruption,
    ExecutionDelivery,
}

impl EventType {
    pub const ALL: [EventType; 7] = [
        EventType::InternalFraud,
        EventType::ExternalFraud,
        EventType::EmploymentPractices,
        EventType::ClientsProducts,
        EventType::DamageToAssets,
        EventType::BusinessDisruption,
        EventType::ExecutionDelivery,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EventType::InternalFraud => "Internal Fraud",
            EventType::ExternalFraud => "External Fraud",
            EventType::EmploymentPractices => "Employment Practices and Workplace Safety",
            EventType::ClientsProducts => "Clients, Products & Business Practices",
            EventType::DamageToAssets => "Damage to Physical Assets",
            EventType::BusinessDisruption => "Business Disruption and System Failures",
            EventType::ExecutionDelivery => "Execution, Delivery & Process Management",
        }
    }

    /// Short code `ET1`..`ET7`.
    pub fn code(self) -> &'static str {
        match self {
            EventType::InternalFraud => "ET1",
            EventType::ExternalFraud => "ET2",
            EventType::EmploymentPractices => "ET3",
            EventType::ClientsProducts => "ET4",
            EventType::DamageToAssets => "ET5",
            EventType::BusinessDisruption => "ET6",
            EventType::ExecutionDelivery => "ET7",
        }
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for EventType {
    type Err = String;

    /// Accepts the full label or the `ET1`..`ET7` code, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        EventType::ALL
            .into_iter()
            .find(|et| et.label().eq_ignore_ascii_case(s) || et.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown event type `{s}`"))
    }
}

/// One operational-risk record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossEvent {
    pub event_id: String,
    pub date_accounting: NaiveDate,
    pub event_type: EventType,
    /// Gross loss in EUR.
    pub gross_loss: f64,
    pub description: String,
}

/// Reads a corpus CSV file. See [`read_corpus`].
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<LossEvent>, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_corpus(file)
}

/// Parses loss events from CSV with the header
/// `event_id,date_accounting,event_type,gross_loss,description`.
///
/// Header names are matched case-insensitively and may appear in any order.
/// Row numbers in errors count data rows from 1.
pub fn read_corpus<R: Read>(reader: R) -> Result<Vec<LossEvent>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::Headers)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut columns = [0usize; 5];
    for (slot, name) in columns.iter_mut().zip(CORPUS_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| CorpusError::MissingColumn(name.to_string()))?;
    }

    let mut seen = HashSet::new();
    let mut events = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let field = |c: usize| record.get(columns[c]).unwrap_or("").trim();
        let row_err = |message: String| CorpusError::Row { row, message };

        let event_id = field(0).to_string();
        if event_id.is_empty() {
            return Err(row_err("empty event_id".into()));
        }
        let date_accounting = NaiveDate::parse_from_str(field(1), "%Y-%m-%d")
            .map_err(|e| row_err(format!("unparsable date_accounting `{}`: {e}", field(1))))?;
        let event_type = field(2).parse::<EventType>().map_err(row_err)?;
        let gross_loss: f64 = field(3)
            .parse()
            .map_err(|_| row_err(format!("unparsable gross_loss `{}`", field(3))))?;
        if !gross_loss.is_finite() || gross_loss < 0.0 {
            return Err(row_err(format!("gross_loss must be non-negative, got {gross_loss}")));
        }
        let description = record.get(columns[4]).unwrap_or("").to_string();
        if description.trim().is_empty() {
            return Err(row_err("empty description".into()));
        }
        if description.chars().count() > MAX_DESCRIPTION_CHARS {
            return Err(row_err(format!(
                "description longer than {MAX_DESCRIPTION_CHARS} characters"
            )));
        }
        if !seen.insert(event_id.clone()) {
            return Err(CorpusError::DuplicateKey { id: event_id, row });
        }
        events.push(LossEvent {
            event_id,
            date_accounting,
            event_type,
            gross_loss,
            description,
        });
    }
    Ok(events)
}

/// Writes events as corpus CSV (the inverse of [`read_corpus`]).
pub fn write_corpus<W: std::io::Write>(writer: W, events: &[LossEvent]) -> Result<(), CorpusError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(CORPUS_COLUMNS)?;
    for ev in events {
        wtr.write_record([
            ev.event_id.as_str(),
            &ev.date_accounting.format("%Y-%m-%d").to_string(),
            ev.event_type.code(),
            &format!("{:.2}", ev.gross_loss),
            ev.description.as_str(),
        ])?;
    }
    wtr.flush().map_err(|source| CorpusError::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}

/// Set of characters a token may contain after case folding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    ranges: Vec<(char, char)>,
}

impl Alphabet {
    pub fn new(ranges: Vec<(char, char)>) -> Self {
        Self { ranges }
    }

    /// Lowercase ASCII letters.
    pub fn ascii_lowercase() -> Self {
        Self::new(vec![('a', 'z')])
    }

    /// Digits and punctuation are never allowed, whatever the ranges say.
    pub fn contains(&self, c: char) -> bool {
        if c.is_numeric() || c.is_ascii_punctuation() || is_unicode_punctuation(c) {
            return false;
        }
        self.ranges.iter().any(|&(lo, hi)| lo <= c && c <= hi)
    }
}

impl Default for Alphabet {
    fn default() -> Self {
        Self::ascii_lowercase()
    }
}

fn is_unicode_punctuation(c: char) -> bool {
    matches!(c,
        '\u{2010}'..='\u{2027}' | '\u{2030}'..='\u{205E}' | '\u{00A1}' | '\u{00A7}' | '\u{00AB}'
        | '\u{00B6}' | '\u{00B7}' | '\u{00BB}' | '\u{00BF}' | '\u{3000}'..='\u{303F}')
}

/// Text transform applied to the raw description before cleaning
/// (language splitting, anonymization).
pub type PreCleanHook = Arc<dyn Fn(&str) -> String + Send + Sync>;

#[derive(Clone, Default)]
pub struct CleaningConfig {
    stopwords: HashSet<String>,
    lemmas: HashMap<String, String>,
    alphabet: Alphabet,
    hooks: Vec<PreCleanHook>,
}

impl fmt::Debug for CleaningConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CleaningConfig")
            .field("stopwords", &self.stopwords.len())
            .field("lemmas", &self.lemmas.len())
            .field("alphabet", &self.alphabet)
            .field("hooks", &self.hooks.len())
            .finish()
    }
}

impl CleaningConfig {
    /// Builds a config, rejecting stop-words or lemmas that could never
    /// survive cleaning (uppercase, punctuation, characters outside the alphabet).
    pub fn new(
        stopwords: impl IntoIterator<Item = String>,
        lemmas: HashMap<String, String>,
        alphabet: Alphabet,
    ) -> Result<Self, CorpusError> {
        let stopwords: HashSet<String> = stopwords.into_iter().collect();
        for w in &stopwords {
            if w.is_empty() || !w.chars().all(|c| alphabet.contains(c)) {
                return Err(CorpusError::InvalidConfig(format!(
                    "stop-word `{w}` is not a lowercase token of the alphabet"
                )));
            }
        }
        for (token, lemma) in &lemmas {
            if lemma.is_empty() || !lemma.chars().all(|c| alphabet.contains(c)) {
                return Err(CorpusError::InvalidConfig(format!(
                    "lemma `{lemma}` for `{token}` is not a lowercase token of the alphabet"
                )));
            }
        }
        Ok(Self {
            stopwords,
            lemmas,
            alphabet,
            hooks: Vec::new(),
        })
    }

    pub fn with_stopwords<S: Into<String>>(words: impl IntoIterator<Item = S>) -> Result<Self, CorpusError> {
        Self::new(words.into_iter().map(Into::into), HashMap::new(), Alphabet::default())
    }

    pub fn with_hook(mut self, hook: PreCleanHook) -> Self {
        self.hooks.push(hook);
        self
    }

    pub fn stopwords(&self) -> &HashSet<String> {
        &self.stopwords
    }

    pub fn lemmas(&self) -> &HashMap<String, String> {
        &self.lemmas
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }
}

/// Cleaned token sequence of one loss event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanDocument {
    pub event_id: String,
    pub tokens: Vec<String>,
}

pub fn clean(event: &LossEvent, cfg: &CleaningConfig) -> CleanDocument {
    CleanDocument {
        event_id: event.event_id.clone(),
        tokens: clean_text(&event.description, cfg),
    }
}

/// Token pipeline shared by [`clean`] and anything that needs to clean free text.
pub fn clean_text(text: &str, cfg: &CleaningConfig) -> Vec<String> {
    let mut text = text.to_string();
    for hook in &cfg.hooks {
        text = hook(&text);
    }
    let folded: String = text.nfc().collect::<String>().to_lowercase();
    let filtered: String = folded
        .chars()
        .map(|c| if cfg.alphabet.contains(c) { c } else { ' ' })
        .collect();
    filtered
        .split_whitespace()
        .filter(|t| !cfg.stopwords.contains(*t))
        .map(|t| cfg.lemmas.get(t).map(String::as_str).unwrap_or(t))
        // a lemma may itself be a stop-word ("is" -> "be")
        .filter(|t| !cfg.stopwords.contains(*t))
        .map(str::to_string)
        .collect()
}

/// Reads a stop-word list: one token per line; blank lines and `#` comments skipped.
pub fn read_stopwords<R: Read>(reader: R) -> Result<BTreeSet<String>, CorpusError> {
    let mut words = BTreeSet::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: "<stopwords>".into(),
            source,
        })?;
        let w = line.trim();
        if w.is_empty() || w.starts_with('#') {
            continue;
        }
        if w.chars().any(char::is_whitespace) {
            return Err(CorpusError::Format {
                line: i + 1,
                message: format!("stop-word entry `{w}` contains whitespace"),
            });
        }
        words.insert(w.to_lowercase());
    }
    Ok(words)
}

pub fn load_stopwords(path: impl AsRef<Path>) -> Result<BTreeSet<String>, CorpusError> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_stopwords(f)
}

/// Reads a `token<TAB>lemma` file.
pub fn read_lemmas<R: Read>(reader: R) -> Result<HashMap<String, String>, CorpusError> {
    let mut map = HashMap::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: "<lemmas>".into(),
            source,
        })?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(token), Some(lemma), None) if !token.trim().is_empty() && !lemma.trim().is_empty() => {
                map.insert(token.trim().to_lowercase(), lemma.trim().to_lowercase());
            }
            _ => {
                return Err(CorpusError::Format {
                    line: i + 1,
                    message: "expected `token<TAB>lemma`".into(),
                })
            }
        }
    }
    Ok(map)
}

pub fn load_lemmas(path: impl AsRef<Path>) -> Result<HashMap<String, String>, CorpusError> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_lemmas(f)
}

/// The bundled English stop-word list.
pub fn english_stopwords() -> BTreeSet<String> {
    include_str!("../data/stopwords_en.txt")
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}
