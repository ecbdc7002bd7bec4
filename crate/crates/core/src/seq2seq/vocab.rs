use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::ModelError;

pub const PAD: &str = "<PAD>";
pub const BOS: &str = "<BOS>";
pub const END: &str = "<END>";
pub const UNK: &str = "<UNK>";

/// Reserved tokens, in id order.
pub const RESERVED: [&str; 4] = [PAD, BOS, END, UNK];

pub const PAD_ID: usize = 0;
pub const BOS_ID: usize = 1;
pub const END_ID: usize = 2;
pub const UNK_ID: usize = 3;

/// Bijective token <-> id table. Ids 0..4 are always `<PAD>`, `<BOS>`, `<END>`, `<UNK>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Reserved tokens followed by `tokens` in first-appearance order.
    pub fn build<'a, I>(tokens: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut vocab = Self::reserved_only();
        for tok in tokens {
            vocab.insert(tok);
        }
        vocab
    }

    fn reserved_only() -> Self {
        let tokens: Vec<String> = RESERVED.iter().map(|t| t.to_string()).collect();
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, index }
    }

    /// Adds `token` if absent and returns its id.
    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or `<UNK>`.
    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id_or_unk(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or(UNK).to_string())
            .collect()
    }
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = ModelError;

    fn try_from(tokens: Vec<String>) -> Result<Self, Self::Error> {
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(ModelError::BadVocab("reserved tokens missing or out of order".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(ModelError::BadVocab(format!("duplicate token {t:?}")));
            }
        }
        Ok(Vocab { tokens, index })
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_are_fixed() {
        let v = Vocab::build(["perform", "scan", "perform"]);
        assert_eq!(v.len(), 6);
        assert_eq!(v.id(PAD), Some(PAD_ID));
        assert_eq!(v.id(BOS), Some(BOS_ID));
        assert_eq!(v.id(END), Some(END_ID));
        assert_eq!(v.id(UNK), Some(UNK_ID));
        assert_eq!(v.id("scan"), Some(5));
        assert_eq!(v.id_or_unk("missing"), UNK_ID);
    }

    #[test]
    fn rejects_duplicates_and_missing_reserved() {
        let bad: Vec<String> = vec!["a".into(), "b".into()];
        assert!(Vocab::try_from(bad).is_err());
        let mut dup: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        dup.push("x".into());
        dup.push("x".into());
        assert!(Vocab::try_from(dup).is_err());
    }
}
