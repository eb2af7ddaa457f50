use std::collections::HashMap;

use crate::error::{Error, Result};

pub const UNK: &str = "[unk]";
pub const PAD: &str = "[pad]";
pub const EOS: &str = "[eos]";

/// Bidirectional token/id map. Ids 0, 1, 2 are `[unk]`, `[pad]`, `[eos]`;
/// the remaining ids follow descending corpus frequency.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    id_of: HashMap<String, usize>,
    token_of: Vec<String>,
}

impl Vocabulary {
    pub const UNK_ID: usize = 0;
    pub const PAD_ID: usize = 1;
    pub const EOS_ID: usize = 2;

    /// Keeps the `max_vocab − 3` most frequent tokens; equal counts fall back to
    /// lexicographic order.
    pub fn from_counts(counts: &HashMap<String, usize>, max_vocab: usize) -> Result<Self> {
        if max_vocab < 3 {
            return Err(Error::Invalid(format!(
                "max_vocab must be at least 3 to hold the reserved tokens, got {max_vocab}"
            )));
        }
        let mut ranked: Vec<(&String, usize)> = counts
            .iter()
            .filter(|(t, _)| !is_reserved(t))
            .map(|(t, &c)| (t, c))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_vocab - 3);
        Self::from_tokens(ranked.into_iter().map(|(t, _)| t.clone()))
    }

    /// Builds a vocabulary from ordinary tokens, placed after the reserved ids.
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut token_of: Vec<String> = vec![UNK.into(), PAD.into(), EOS.into()];
        token_of.extend(tokens);
        let mut id_of = HashMap::with_capacity(token_of.len());
        for (id, tok) in token_of.iter().enumerate() {
            if id_of.insert(tok.clone(), id).is_some() {
                return Err(Error::Invalid(format!("duplicate vocabulary token {tok:?}")));
            }
        }
        Ok(Vocabulary { id_of, token_of })
    }

    pub fn size(&self) -> usize {
        self.token_of.len()
    }

    pub fn unk_id(&self) -> usize {
        Self::UNK_ID
    }

    pub fn pad_id(&self) -> usize {
        Self::PAD_ID
    }

    pub fn eos_id(&self) -> usize {
        Self::EOS_ID
    }

    /// Id for `token`, falling back to `[unk]`.
    pub fn id(&self, token: &str) -> usize {
        self.id_of.get(token).copied().unwrap_or(Self::UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.id_of.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.token_of.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.token_of
    }

    /// One token per line; the line number is the id.
    pub fn export(&self) -> String {
        let mut out = String::new();
        for t in &self.token_of {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn import(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.split('\n').collect();
        // a trailing LF leaves one empty element
        let lines = match lines.split_last() {
            Some((last, rest)) if last.is_empty() => rest,
            _ => &lines[..],
        };
        if lines.len() < 3 || lines[0] != UNK || lines[1] != PAD || lines[2] != EOS {
            return Err(Error::Invalid(
                "vocabulary file must start with [unk], [pad], [eos]".into(),
            ));
        }
        Self::from_tokens(lines[3..].iter().map(|s| s.to_string()))
    }
}

pub(crate) fn is_reserved(token: &str) -> bool {
    token == UNK || token == PAD || token == EOS
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_and_tokens_are_inverse() {
        let v = Vocabulary::from_tokens(["b".to_string(), "a".to_string()]).unwrap();
        for id in 0..v.size() {
            assert_eq!(v.id(v.token(id).unwrap()), id);
        }
        assert_eq!(v.id("zzz"), v.unk_id());
    }

    #[test]
    fn frequency_ties_break_lexicographically() {
        let counts: HashMap<String, usize> = [("b", 2), ("a", 2), ("c", 5)]
            .iter()
            .map(|(t, c)| (t.to_string(), *c))
            .collect();
        let v = Vocabulary::from_counts(&counts, 5).unwrap();
        assert_eq!(&v.tokens()[3..], &["c".to_string(), "a".to_string()]);
    }

    #[test]
    fn duplicate_tokens_rejected() {
        assert!(Vocabulary::from_tokens(["x".to_string(), "x".to_string()]).is_err());
        assert!(Vocabulary::from_tokens([EOS.to_string()]).is_err());
    }

    #[test]
    fn export_import_roundtrip() {
        let v = Vocabulary::from_tokens([" ".to_string(), "é".to_string()]).unwrap();
        assert_eq!(Vocabulary::import(&v.export()).unwrap(), v);
        assert!(Vocabulary::import("a\nb\nc\n").is_err());
    }
}
