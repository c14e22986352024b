use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::task::Task;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const EOS: u32 = 2;
/// Id of the first task token in a target vocabulary.
pub const FIRST_TASK: u32 = 3;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const EOS_TOKEN: &str = "</s>";

/// Bidirectional token/id table. Ids 0-2 are PAD, UNK and EOS; in a target
/// vocabulary the task tokens follow in task order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            ids: HashMap::new(),
        };
        for t in [PAD_TOKEN, UNK_TOKEN, EOS_TOKEN] {
            v.add(t);
        }
        v
    }

    /// A target vocabulary with one reserved token per task.
    pub fn with_tasks(tasks: &[Task]) -> Self {
        let mut v = Self::new();
        for t in tasks {
            v.add(&t.token());
        }
        v
    }

    pub fn add(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(token.to_string());
        self.ids.insert(token.to_string(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> u32 {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().map(|t| self.id_or_unk(t.as_ref())).collect()
    }

    /// Like [`encode`](Self::encode) but rejects tokens outside the vocabulary.
    pub fn encode_closed<S: AsRef<str>>(&self, tokens: &[S], what: &'static str) -> Result<Vec<u32>> {
        tokens
            .iter()
            .map(|t| {
                self.id(t.as_ref()).ok_or_else(|| Error::UnseenToken {
                    what,
                    token: t.as_ref().to_string(),
                })
            })
            .collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or(UNK_TOKEN).to_string())
            .collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line; the line number is the id.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            ids: HashMap::new(),
        };
        for (i, line) in text.lines().enumerate() {
            if v.ids.contains_key(line) {
                return Err(Error::Checkpoint(format!(
                    "vocabulary line {}: duplicate token `{line}`",
                    i + 1
                )));
            }
            v.add(line);
        }
        let specials = [PAD_TOKEN, UNK_TOKEN, EOS_TOKEN];
        if v.tokens.len() < 3 || v.tokens[..3] != specials {
            return Err(Error::Checkpoint(
                "vocabulary must start with <pad>, <unk>, </s>".into(),
            ));
        }
        Ok(v)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}
