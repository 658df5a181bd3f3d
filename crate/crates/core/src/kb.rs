//! In-memory triple store with surface-name lookup.
//!
//! The store is built once from a tab-separated text file (or from an
//! iterator of triples) and is read-only afterwards. Every lookup goes
//! through one of five indexes; the triple list itself is kept sorted by
//! `(subject, predicate, object serialization)` so that all results come
//! back in a deterministic order.
//!
//! File format, one record per line, fields separated by a single TAB:
//!
//! ```text
//! # comment
//! m.04lg6	visual_art.visual_artist.art_forms	m.05qdh
//! m.04lg6	type.object.type	visual_art.visual_artist
//! m.0abc	film.film.runtime	"112"^^integer
//! @name	m.04lg6	"Leonardo da Vinci"
//! ```

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Predicate whose objects are always classes.
pub const TYPE_PREDICATE: &str = "type.object.type";

#[derive(Debug, Error)]
pub enum KbError {
    #[error("malformed line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Datatype {
    String,
    Integer,
    Double,
    Date,
    Boolean,
}

impl Datatype {
    pub fn as_str(self) -> &'static str {
        match self {
            Datatype::String => "string",
            Datatype::Integer => "integer",
            Datatype::Double => "double",
            Datatype::Date => "date",
            Datatype::Boolean => "boolean",
        }
    }

    /// Accepts the short names as well as `xsd:` and full XML Schema IRIs.
    pub fn from_suffix(suffix: &str) -> Option<Datatype> {
        let s = suffix.trim_start_matches('<').trim_end_matches('>');
        let local = s
            .rsplit_once('#')
            .map(|(_, l)| l)
            .or_else(|| s.strip_prefix("xsd:"))
            .unwrap_or(s);
        match local {
            "string" => Some(Datatype::String),
            "integer" | "int" | "long" | "short" | "nonNegativeInteger" => Some(Datatype::Integer),
            "double" | "float" | "decimal" => Some(Datatype::Double),
            "date" | "dateTime" | "gYear" | "gYearMonth" => Some(Datatype::Date),
            "boolean" => Some(Datatype::Boolean),
            _ => None,
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, Datatype::Integer | Datatype::Double)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Literal {
    pub lexical: String,
    pub datatype: Datatype,
}

impl Literal {
    /// Builds a literal, checking that the lexical form parses under its datatype.
    pub fn new(lexical: impl Into<String>, datatype: Datatype) -> Result<Literal, String> {
        let lexical = lexical.into();
        let ok = match datatype {
            Datatype::String => true,
            Datatype::Integer => lexical.parse::<i64>().is_ok(),
            Datatype::Double => lexical.parse::<f64>().map(f64::is_finite).unwrap_or(false),
            Datatype::Date => is_iso_date(&lexical),
            Datatype::Boolean => lexical == "true" || lexical == "false",
        };
        if ok {
            Ok(Literal { lexical, datatype })
        } else {
            Err(format!("`{lexical}` is not a valid {}", datatype.as_str()))
        }
    }

    pub fn string(s: impl Into<String>) -> Literal {
        Literal { lexical: s.into(), datatype: Datatype::String }
    }

    pub fn integer(n: i64) -> Literal {
        Literal { lexical: n.to_string(), datatype: Datatype::Integer }
    }

    pub fn boolean(b: bool) -> Literal {
        Literal { lexical: b.to_string(), datatype: Datatype::Boolean }
    }

    pub fn as_f64(&self) -> Option<f64> {
        if self.datatype.is_numeric() {
            self.lexical.parse().ok()
        } else {
            None
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "\"{}\"", escape_quoted(&self.lexical))?;
        if self.datatype != Datatype::String {
            write!(f, "^^{}", self.datatype.as_str())?;
        }
        Ok(())
    }
}

fn is_iso_date(s: &str) -> bool {
    let parts: Vec<&str> = s.split('-').collect();
    let digits = |p: &str, n: usize| p.len() == n && p.bytes().all(|b| b.is_ascii_digit());
    match parts.as_slice() {
        [y] => digits(y, 4),
        [y, m] => digits(y, 4) && digits(m, 2),
        [y, m, d] => digits(y, 4) && digits(m, 2) && (digits(d, 2) || d.len() > 2 && digits(&d[..2], 2) && d[2..].starts_with('T')),
        _ => false,
    }
}

pub(crate) fn escape_quoted(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub(crate) fn unescape_quoted(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            if let Some(n) = chars.next() {
                out.push(n);
            }
        } else {
            out.push(c);
        }
    }
    out
}

/// Object position of a triple.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Term {
    Entity(String),
    Class(String),
    Literal(Literal),
}

impl Term {
    pub fn entity(id: impl Into<String>) -> Term {
        Term::Entity(id.into())
    }

    pub fn class(id: impl Into<String>) -> Term {
        Term::Class(id.into())
    }

    pub fn as_entity(&self) -> Option<&str> {
        match self {
            Term::Entity(e) => Some(e),
            _ => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Entity(id) | Term::Class(id) => f.write_str(id),
            Term::Literal(l) => l.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: Term,
}

impl Triple {
    pub fn new(subject: impl Into<String>, predicate: impl Into<String>, object: Term) -> Triple {
        Triple { subject: subject.into(), predicate: predicate.into(), object }
    }

    fn sort_key(&self) -> (&str, &str, String) {
        (&self.subject, &self.predicate, self.object.to_string())
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}", self.subject, self.predicate, self.object)
    }
}

/// Lowercase, punctuation to spaces, whitespace collapsed.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if c.is_alphanumeric() {
            out.extend(c.to_lowercase());
        } else {
            out.push(' ');
        }
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn tokenize(text: &str) -> Vec<String> {
    normalize(text).split(' ').filter(|t| !t.is_empty()).map(str::to_owned).collect()
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && !id.chars().any(char::is_whitespace) && !id.starts_with('"')
}

type Postings = Vec<u32>;

#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    triples: Vec<Triple>,
    by_subject: HashMap<String, Postings>,
    by_predicate: HashMap<String, Postings>,
    by_object: HashMap<Term, Postings>,
    by_subject_predicate: HashMap<String, HashMap<String, Postings>>,
    by_predicate_object: HashMap<String, HashMap<Term, Postings>>,
    names: HashMap<String, String>,
    surface_index: HashMap<String, Vec<String>>,
    max_surface_tokens: usize,
}

impl PartialEq for KnowledgeBase {
    fn eq(&self, other: &Self) -> bool {
        self.triples == other.triples && self.names == other.names
    }
}

/// Collects triples and names, then freezes into a [`KnowledgeBase`].
#[derive(Debug, Default)]
pub struct KbBuilder {
    triples: Vec<Triple>,
    names: HashMap<String, String>,
}

impl KbBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn triple(&mut self, t: Triple) -> &mut Self {
        self.triples.push(t);
        self
    }

    /// Declares the surface name of an entity; a later declaration replaces an earlier one.
    pub fn name(&mut self, entity: impl Into<String>, surface: impl Into<String>) -> &mut Self {
        let entity = entity.into();
        let surface = surface.into();
        if let Some(prev) = self.names.insert(entity.clone(), surface.clone()) {
            tracing::debug!(%entity, %prev, %surface, "duplicate surface declaration, last wins");
        }
        self
    }

    pub fn freeze(self) -> KnowledgeBase {
        let mut triples = self.triples;
        triples.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        triples.dedup();

        let mut kb = KnowledgeBase { names: self.names, ..Default::default() };
        for (i, t) in triples.iter().enumerate() {
            let i = i as u32;
            kb.by_subject.entry(t.subject.clone()).or_default().push(i);
            kb.by_predicate.entry(t.predicate.clone()).or_default().push(i);
            kb.by_object.entry(t.object.clone()).or_default().push(i);
            kb.by_subject_predicate
                .entry(t.subject.clone())
                .or_default()
                .entry(t.predicate.clone())
                .or_default()
                .push(i);
            kb.by_predicate_object
                .entry(t.predicate.clone())
                .or_default()
                .entry(t.object.clone())
                .or_default()
                .push(i);
        }
        kb.triples = triples;

        for (entity, surface) in &kb.names {
            if kb.by_object.contains_key(&Term::Class(entity.clone())) {
                continue;
            }
            let key = normalize(surface);
            if key.is_empty() {
                continue;
            }
            kb.max_surface_tokens = kb.max_surface_tokens.max(key.split(' ').count());
            kb.surface_index.entry(key).or_default().push(entity.clone());
        }
        for ids in kb.surface_index.values_mut() {
            ids.sort();
        }
        kb
    }
}

impl KnowledgeBase {
    pub fn load(path: impl AsRef<Path>) -> Result<KnowledgeBase, KbError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| KbError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<KnowledgeBase, KbError> {
        let mut builder = KbBuilder::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let malformed = |reason: String| KbError::MalformedLine { line: line_no, reason };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(malformed(format!("expected 3 tab-separated fields, found {}", fields.len())));
            }
            if fields[0] == "@name" {
                if !valid_id(fields[1]) {
                    return Err(malformed(format!("invalid entity id `{}`", fields[1])));
                }
                let surface = parse_quoted(fields[2])
                    .filter(|(_, rest)| rest.is_empty())
                    .map(|(s, _)| s)
                    .ok_or_else(|| malformed("surface name must be a quoted string".into()))?;
                builder.name(fields[1], surface);
                continue;
            }
            let (s, p, o) = (fields[0], fields[1], fields[2]);
            if !valid_id(s) {
                return Err(malformed(format!("invalid subject `{s}`")));
            }
            if !valid_id(p) {
                return Err(malformed(format!("invalid predicate `{p}`")));
            }
            let object = if o.starts_with('"') {
                if p == TYPE_PREDICATE {
                    return Err(malformed(format!("{TYPE_PREDICATE} requires a class object")));
                }
                Term::Literal(parse_literal_field(o).map_err(malformed)?)
            } else if !valid_id(o) {
                return Err(malformed(format!("invalid object `{o}`")));
            } else if p == TYPE_PREDICATE {
                Term::Class(o.to_owned())
            } else {
                Term::Entity(o.to_owned())
            };
            builder.triple(Triple::new(s, p, object));
        }
        Ok(builder.freeze())
    }

    /// Serializes back to the text format; names are written sorted by entity id.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            out.push_str(&t.to_string());
            out.push('\n');
        }
        let mut names: Vec<_> = self.names.iter().collect();
        names.sort();
        for (e, s) in names {
            out.push_str(&format!("@name\t{e}\t\"{}\"\n", escape_quoted(s)));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    /// All stored triples matching every given slot, in canonical order.
    pub fn matching(&self, subject: Option<&str>, predicate: Option<&str>, object: Option<&Term>) -> Vec<&Triple> {
        self.postings(subject, predicate, object)
            .into_iter()
            .map(|i| &self.triples[i as usize])
            .collect()
    }

    /// Number of triples matching the pattern, without materializing them.
    pub fn count(&self, subject: Option<&str>, predicate: Option<&str>, object: Option<&Term>) -> usize {
        match (subject, predicate, object) {
            (None, None, None) => self.triples.len(),
            (Some(s), None, None) => self.by_subject.get(s).map_or(0, Vec::len),
            (None, Some(p), None) => self.by_predicate.get(p).map_or(0, Vec::len),
            (None, None, Some(o)) => self.by_object.get(o).map_or(0, Vec::len),
            (Some(s), Some(p), None) => self.sp(s, p).map_or(0, |v| v.len()),
            (None, Some(p), Some(o)) => self.po(p, o).map_or(0, |v| v.len()),
            _ => self.postings(subject, predicate, object).len(),
        }
    }

    fn sp(&self, s: &str, p: &str) -> Option<&Postings> {
        self.by_subject_predicate.get(s).and_then(|m| m.get(p))
    }

    fn po(&self, p: &str, o: &Term) -> Option<&Postings> {
        self.by_predicate_object.get(p).and_then(|m| m.get(o))
    }

    fn postings(&self, subject: Option<&str>, predicate: Option<&str>, object: Option<&Term>) -> Vec<u32> {
        let filter_object = |list: Option<&Postings>, o: &Term| -> Vec<u32> {
            list.map(|l| l.iter().copied().filter(|&i| &self.triples[i as usize].object == o).collect())
                .unwrap_or_default()
        };
        match (subject, predicate, object) {
            (None, None, None) => (0..self.triples.len() as u32).collect(),
            (Some(s), None, None) => self.by_subject.get(s).cloned().unwrap_or_default(),
            (None, Some(p), None) => self.by_predicate.get(p).cloned().unwrap_or_default(),
            (None, None, Some(o)) => self.by_object.get(o).cloned().unwrap_or_default(),
            (Some(s), Some(p), None) => self.sp(s, p).cloned().unwrap_or_default(),
            (None, Some(p), Some(o)) => self.po(p, o).cloned().unwrap_or_default(),
            (Some(s), None, Some(o)) => filter_object(self.by_subject.get(s), o),
            (Some(s), Some(p), Some(o)) => filter_object(self.sp(s, p), o),
        }
    }

    pub fn surface_name(&self, entity: &str) -> Option<&str> {
        self.names.get(entity).map(String::as_str)
    }

    /// Entities whose normalized surface name equals `normalized`.
    pub fn lookup_surface(&self, normalized: &str) -> &[String] {
        self.surface_index.get(normalized).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn max_surface_tokens(&self) -> usize {
        self.max_surface_tokens
    }

    /// Classes asserted for `entity` through the type predicate.
    pub fn classes_of(&self, entity: &str) -> Vec<&str> {
        self.sp(entity, TYPE_PREDICATE)
            .map(|l| {
                l.iter()
                    .filter_map(|&i| match &self.triples[i as usize].object {
                        Term::Class(c) => Some(c.as_str()),
                        _ => None,
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Distinct predicates in sorted order.
    pub fn predicates(&self) -> Vec<&str> {
        let mut p: Vec<&str> = self.by_predicate.keys().map(String::as_str).collect();
        p.sort_unstable();
        p
    }

    pub fn has_subject(&self, entity: &str) -> bool {
        self.by_subject.contains_key(entity)
    }
}

/// Parses a leading `"..."` token, returning the unescaped content and the remainder.
pub(crate) fn parse_quoted(s: &str) -> Option<(String, &str)> {
    let rest = s.strip_prefix('"')?;
    let mut escaped = false;
    for (i, c) in rest.char_indices() {
        match c {
            '\\' if !escaped => escaped = true,
            '"' if !escaped => return Some((unescape_quoted(&rest[..i]), &rest[i + 1..])),
            _ => escaped = false,
        }
    }
    None
}

fn parse_literal_field(field: &str) -> Result<Literal, String> {
    let (lexical, rest) = parse_quoted(field).ok_or_else(|| format!("unterminated literal `{field}`"))?;
    let datatype = if rest.is_empty() {
        Datatype::String
    } else {
        let suffix = rest.strip_prefix("^^").ok_or_else(|| format!("unexpected text after literal: `{rest}`"))?;
        Datatype::from_suffix(suffix).ok_or_else(|| format!("unknown datatype `{suffix}`"))?
    };
    Literal::new(lexical, datatype)
}
