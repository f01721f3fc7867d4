//! Chat prompt templates with `{{slot}}` substitution and removable rule blocks.
//!
//! Asset format, one template per UTF-8 file:
//!
//! ```text
//! @template extraction
//! @slots document
//! ---role: system
//! instructions...
//! @rule 1 Rule 1: ...
//! ---role: user
//! {{document}}
//! ```
//!
//! `@rule <id> <text>` lines render as `<text>` and can be dropped with
//! [`render_rule_ablation`]. `{{{{` and `}}}}` render as literal `{{` and `}}`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotate::{parse_annotated, AnnotationError, ParseMode};

pub const DEFAULT_EXTRACTION_TEMPLATE: &str = include_str!("../assets/templates/extraction.txt");
pub const DEFAULT_AUGMENTATION_TEMPLATE: &str = include_str!("../assets/templates/augmentation.txt");

/// Rule ids the instruction's rule module may carry.
pub const RULE_IDS: std::ops::RangeInclusive<u8> = 1..=5;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("template line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("template references undeclared slot {0:?}")]
    UndeclaredSlot(String),
    #[error("missing slot {0:?}")]
    MissingSlot(String),
    #[error("document text is empty")]
    EmptyDocument,
    #[error("turn {0} is empty after substitution")]
    EmptyTurn(usize),
    #[error("unknown rule id {0}")]
    UnknownRuleId(u8),
    #[error("annotated document does not parse: {0}")]
    UnparsableAnnotation(#[from] AnnotationError),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }

    fn parse(s: &str) -> Option<Role> {
        match s.trim().to_ascii_lowercase().as_str() {
            "system" => Some(Role::System),
            "user" => Some(Role::User),
            "assistant" => Some(Role::Assistant),
            _ => None,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: Role,
    pub content: String,
}

impl ChatTurn {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        ChatTurn {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Rule { id: u8, text: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct TemplateTurn {
    role: Role,
    segments: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    name: String,
    slots: BTreeSet<String>,
    turns: Vec<TemplateTurn>,
}

#[derive(Debug, PartialEq, Eq)]
enum Piece<'a> {
    Literal(&'a str),
    Slot(&'a str),
}

fn is_slot_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}

fn scan(content: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut lit_start = 0usize;
    let mut pos = 0usize;
    while pos < content.len() {
        let tail = &content[pos..];
        if tail.starts_with("{{{{") || tail.starts_with("}}}}") {
            out.push(Piece::Literal(&content[lit_start..pos]));
            out.push(Piece::Literal(&tail[..2]));
            pos += 4;
            lit_start = pos;
            continue;
        }
        if let Some(inner) = tail.strip_prefix("{{") {
            if let Some(end) = inner.find("}}") {
                let name = &inner[..end];
                if !name.is_empty() && name.chars().all(is_slot_char) {
                    out.push(Piece::Literal(&content[lit_start..pos]));
                    out.push(Piece::Slot(name));
                    pos += end + 4;
                    lit_start = pos;
                    continue;
                }
            }
        }
        pos += tail.chars().next().map_or(1, char::len_utf8);
    }
    out.push(Piece::Literal(&content[lit_start..]));
    out.retain(|p| !matches!(p, Piece::Literal("")));
    out
}

impl PromptTemplate {
    pub fn parse(source: &str) -> Result<Self, PromptError> {
        let mut name: Option<String> = None;
        let mut slots: Option<BTreeSet<String>> = None;
        let mut turns: Vec<TemplateTurn> = Vec::new();
        for (i, line) in source.lines().enumerate() {
            let line_no = i + 1;
            let syntax = |reason: &str| PromptError::Syntax {
                line: line_no,
                reason: reason.to_string(),
            };
            if let Some(role) = line.strip_prefix("---role:") {
                let role = Role::parse(role).ok_or_else(|| syntax("unknown role"))?;
                turns.push(TemplateTurn {
                    role,
                    segments: Vec::new(),
                });
                continue;
            }
            if turns.is_empty() {
                if let Some(n) = line.strip_prefix("@template") {
                    name = Some(n.trim().to_string());
                } else if let Some(s) = line.strip_prefix("@slots") {
                    slots = Some(
                        s.split(|c: char| c == ',' || c.is_whitespace())
                            .filter(|x| !x.is_empty())
                            .map(str::to_string)
                            .collect(),
                    );
                } else if !line.trim().is_empty() {
                    return Err(syntax("content before the first ---role: separator"));
                }
                continue;
            }
            let turn = turns.last_mut().expect("non-empty");
            if let Some(rule) = line.strip_prefix("@rule ") {
                let (id, text) = rule.split_once(' ').unwrap_or((rule, ""));
                let id: u8 = id.trim().parse().map_err(|_| syntax("rule id must be an integer"))?;
                if !RULE_IDS.contains(&id) {
                    return Err(syntax("rule id out of range 1..=5"));
                }
                turn.segments.push(Segment::Rule {
                    id,
                    text: text.to_string(),
                });
            } else {
                turn.segments.push(Segment::Text(line.to_string()));
            }
        }
        let slots = slots.ok_or(PromptError::Syntax {
            line: 1,
            reason: "missing @slots header".into(),
        })?;
        if turns.is_empty() {
            return Err(PromptError::Syntax {
                line: 1,
                reason: "template has no turns".into(),
            });
        }
        for turn in &mut turns {
            while matches!(turn.segments.last(), Some(Segment::Text(t)) if t.trim().is_empty()) {
                turn.segments.pop();
            }
        }
        let template = PromptTemplate {
            name: name.unwrap_or_default(),
            slots,
            turns,
        };
        for slot in template.referenced_slots() {
            if !template.slots.contains(&slot) {
                return Err(PromptError::UndeclaredSlot(slot));
            }
        }
        Ok(template)
    }

    pub fn from_file(path: &Path) -> Result<Self, PromptError> {
        let source = std::fs::read_to_string(path).map_err(|e| PromptError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let mut t = PromptTemplate::parse(&source)?;
        if t.name.is_empty() {
            t.name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        Ok(t)
    }

    pub fn default_extraction() -> Self {
        PromptTemplate::parse(DEFAULT_EXTRACTION_TEMPLATE).expect("bundled extraction template parses")
    }

    pub fn default_augmentation() -> Self {
        PromptTemplate::parse(DEFAULT_AUGMENTATION_TEMPLATE).expect("bundled augmentation template parses")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn slots(&self) -> &BTreeSet<String> {
        &self.slots
    }

    pub fn declares(&self, slot: &str) -> bool {
        self.slots.contains(slot)
    }

    /// Rule ids still present, ascending.
    pub fn rule_ids(&self) -> BTreeSet<u8> {
        self.turns
            .iter()
            .flat_map(|t| t.segments.iter())
            .filter_map(|s| match s {
                Segment::Rule { id, .. } => Some(*id),
                Segment::Text(_) => None,
            })
            .collect()
    }

    fn turn_source(turn: &TemplateTurn) -> String {
        turn.segments
            .iter()
            .map(|s| match s {
                Segment::Text(t) => t.as_str(),
                Segment::Rule { text, .. } => text.as_str(),
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn referenced_slots(&self) -> BTreeSet<String> {
        self.turns
            .iter()
            .flat_map(|t| {
                let src = PromptTemplate::turn_source(t);
                scan(&src)
                    .into_iter()
                    .filter_map(|p| match p {
                        Piece::Slot(s) => Some(s.to_string()),
                        Piece::Literal(_) => None,
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    /// Substitutes `values` into every turn.
    pub fn render(&self, values: &BTreeMap<&str, &str>) -> Result<Vec<ChatTurn>, PromptError> {
        let mut out = Vec::with_capacity(self.turns.len());
        for (i, turn) in self.turns.iter().enumerate() {
            let src = PromptTemplate::turn_source(turn);
            let mut content = String::with_capacity(src.len());
            for piece in scan(&src) {
                match piece {
                    Piece::Literal(l) => content.push_str(l),
                    Piece::Slot(s) => {
                        let v = values.get(s).ok_or_else(|| PromptError::MissingSlot(s.to_string()))?;
                        content.push_str(v);
                    }
                }
            }
            if content.trim().is_empty() {
                return Err(PromptError::EmptyTurn(i));
            }
            out.push(ChatTurn {
                role: turn.role,
                content,
            });
        }
        Ok(out)
    }
}

/// Instruction turns followed by the input-text turn; the model writes the triplets.
pub fn render_extraction_instruction(
    template: &PromptTemplate,
    document_text: &str,
) -> Result<Vec<ChatTurn>, PromptError> {
    if !template.declares("document") {
        return Err(PromptError::MissingSlot("document".into()));
    }
    if document_text.trim().is_empty() {
        return Err(PromptError::EmptyDocument);
    }
    template.render(&BTreeMap::from([("document", document_text)]))
}

/// Augmentation prompt around an annotated document, which must parse leniently.
pub fn render_augmentation_prompt(
    template: &PromptTemplate,
    annotated_document: &str,
) -> Result<Vec<ChatTurn>, PromptError> {
    if !template.declares("annotated") {
        return Err(PromptError::MissingSlot("annotated".into()));
    }
    parse_annotated(annotated_document, ParseMode::Lenient)?;
    template.render(&BTreeMap::from([("annotated", annotated_document)]))
}

/// Removes the given rule blocks; absent rules are ignored, so repeated
/// application with the same set is a no-op.
pub fn render_rule_ablation(template: &PromptTemplate, drop_rules: &BTreeSet<u8>) -> Result<PromptTemplate, PromptError> {
    if let Some(bad) = drop_rules.iter().find(|id| !RULE_IDS.contains(id)) {
        return Err(PromptError::UnknownRuleId(*bad));
    }
    let mut out = template.clone();
    for turn in &mut out.turns {
        turn.segments
            .retain(|s| !matches!(s, Segment::Rule { id, .. } if drop_rules.contains(id)));
    }
    Ok(out)
}

/// Plain-text rendering of turns, in the same `---role:` layout as template assets.
pub fn transcript(turns: &[ChatTurn]) -> String {
    let mut out = String::new();
    for turn in turns {
        out.push_str("---role: ");
        out.push_str(turn.role.as_str());
        out.push('\n');
        out.push_str(&turn.content);
        out.push('\n');
    }
    out
}
