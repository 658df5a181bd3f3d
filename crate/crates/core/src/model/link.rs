//! Surface-name entity linking.

use serde::{Deserialize, Serialize};

use crate::kb::{tokenize, KnowledgeBase};

/// A KB surface name found in text, as a token span `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub entity: String,
    pub surface: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Question {
    pub text: String,
    pub tokens: Vec<String>,
    pub linked: Vec<Mention>,
}

impl Question {
    /// Tokens not covered by any linked span.
    pub fn content_tokens(&self) -> Vec<&str> {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.linked.iter().any(|m| m.start <= *i && *i < m.end))
            .map(|(_, t)| t.as_str())
            .collect()
    }

    pub fn entity_ids(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for m in &self.linked {
            if !out.contains(&m.entity.as_str()) {
                out.push(&m.entity);
            }
        }
        out
    }
}

/// Longest-match, non-overlapping, left-to-right scan over `tokens`.
/// An ambiguous surface yields one mention per entity, all with the same span.
pub fn match_surfaces(tokens: &[String], kb: &KnowledgeBase) -> Vec<Mention> {
    let mut out = Vec::new();
    let longest = kb.max_surface_tokens();
    let mut i = 0;
    while i < tokens.len() {
        let mut hit = None;
        for n in (1..=longest.min(tokens.len() - i)).rev() {
            let surface = tokens[i..i + n].join(" ");
            let ids = kb.lookup_surface(&surface);
            if !ids.is_empty() {
                hit = Some((n, surface, ids));
                break;
            }
        }
        match hit {
            Some((n, surface, ids)) => {
                for id in ids {
                    out.push(Mention { entity: id.clone(), surface: surface.clone(), start: i, end: i + n });
                }
                i += n;
            }
            None => i += 1,
        }
    }
    out
}

pub fn link_entities(text: &str, kb: &KnowledgeBase) -> Question {
    let tokens = tokenize(text);
    let linked = match_surfaces(&tokens, kb);
    Question { text: text.to_owned(), tokens, linked }
}
