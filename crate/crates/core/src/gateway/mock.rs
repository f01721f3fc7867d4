use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, BackendKind, CallError, GenerationRequest};
use crate::prompts::ChatTurn;

/// Hex SHA-256 of the turn contents joined by U+001F.
pub fn request_digest(turns: &[ChatTurn]) -> String {
    let mut hasher = Sha256::new();
    for (i, turn) in turns.iter().enumerate() {
        if i > 0 {
            hasher.update([0x1f]);
        }
        hasher.update(turn.content.as_bytes());
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockEntry {
    pub digest: String,
    pub response: String,
}

pub fn load_mock_table(path: &Path) -> Result<HashMap<String, String>, String> {
    let file = std::fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut table = HashMap::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| format!("{}: {e}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: MockEntry =
            serde_json::from_str(&line).map_err(|e| format!("{}:{}: {e}", path.display(), i + 1))?;
        table.insert(entry.digest, entry.response);
    }
    Ok(table)
}

pub fn write_mock_table<W: Write>(mut writer: W, entries: &[MockEntry]) -> std::io::Result<()> {
    for e in entries {
        writeln!(writer, "{}", serde_json::to_string(e).map_err(std::io::Error::other)?)?;
    }
    writer.flush()
}

/// Deterministic offline backend: canned responses keyed by request digest,
/// with an optional echo of the last user turn when no entry matches.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    table: HashMap<String, String>,
    echo: bool,
}

impl MockBackend {
    pub fn new(table: HashMap<String, String>, echo: bool) -> Self {
        MockBackend { table, echo }
    }

    pub fn echo() -> Self {
        MockBackend::new(HashMap::new(), true)
    }

    pub fn insert(&mut self, turns: &[ChatTurn], response: impl Into<String>) {
        self.table.insert(request_digest(turns), response.into());
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl Backend for MockBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Mock
    }

    fn call(&self, request: &GenerationRequest) -> Result<String, CallError> {
        let digest = request_digest(&request.turns);
        if let Some(r) = self.table.get(&digest) {
            return Ok(r.clone());
        }
        if self.echo {
            return Ok(request.last_user_content().unwrap_or_default().to_string());
        }
        Err(CallError::MockMiss(digest))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompts::Role;

    fn req(turns: Vec<ChatTurn>) -> GenerationRequest {
        GenerationRequest::new(turns, "m", 0.0, 8, "t").unwrap()
    }

    #[test]
    fn echo_returns_last_user_turn() {
        let r = req(vec![ChatTurn::new(Role::System, "sys"), ChatTurn::new(Role::User, "X")]);
        assert_eq!(MockBackend::echo().call(&r).unwrap(), "X");
    }

    #[test]
    fn table_hit_is_verbatim_and_takes_priority() {
        let turns = vec![ChatTurn::new(Role::User, "doc")];
        let mut mock = MockBackend::new(HashMap::new(), true);
        mock.insert(&turns, "(happy, home, Happiness)");
        assert_eq!(mock.call(&req(turns)).unwrap(), "(happy, home, Happiness)");
    }

    #[test]
    fn miss_without_echo() {
        let mock = MockBackend::default();
        let err = mock.call(&req(vec![ChatTurn::new(Role::User, "doc")])).unwrap_err();
        assert!(matches!(err, CallError::MockMiss(d) if d.len() == 64));
    }

    #[test]
    fn digest_is_stable_and_separates_turns() {
        let a = request_digest(&[ChatTurn::new(Role::User, "abc")]);
        assert_eq!(a, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        let split1 = request_digest(&[ChatTurn::new(Role::User, "A"), ChatTurn::new(Role::User, "BC")]);
        let split2 = request_digest(&[ChatTurn::new(Role::User, "AB"), ChatTurn::new(Role::User, "C")]);
        assert_ne!(split1, split2);
    }

    #[test]
    fn table_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mock.jsonl");
        let entries = vec![MockEntry {
            digest: "d1".into(),
            response: "r1\nline2".into(),
        }];
        write_mock_table(std::fs::File::create(&path).unwrap(), &entries).unwrap();
        let table = load_mock_table(&path).unwrap();
        assert_eq!(table.get("d1").map(String::as_str), Some("r1\nline2"));
    }
}
